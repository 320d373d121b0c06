//! Command-line front end: parse instance files, run the solvers and
//! mechanism builders, emit CSV sweeps and verification reports.
//!
//! Exit codes: 0 on success, 1 on validation failure (bad flags, unreadable
//! or invalid inputs), 2 on verification failure (a claimed bound or
//! characterization does not hold on the computed numbers).

use anyhow::{anyhow, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use parlink::analysis::{
    self, epoa, epoa_sweep, lower_bound_family, many_link_bounds, two_link_et_epoa,
    two_link_et_robustness, two_link_poa, EpoaPoint,
};
use parlink::mechanisms::{
    build_constant_with_mode, build_error_tolerant_with_mode, build_min_charge_with_mode,
    check_consistent, check_error_tolerant, Mechanism, MechanismMode,
};
use parlink::model::Instance;
use parlink::oracle::{grid_equilibrium_check, grid_opt_affine, lipschitz_bound, GridSpec};
use parlink::solvers::{flow_cost_affine, nash_flow, opt_flow, ue_flow, UeMode};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "parlink", version, about = "Parallel-link routing mechanisms")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum KindArg {
    Constant,
    Mincharge,
    Errortolerant,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    Limit,
    Epsilon,
}

#[derive(Args)]
struct MechanismSpec {
    /// Instance file (JSON: {"links":[{"a":..,"b":..},..]})
    #[arg(long)]
    instance: Option<PathBuf>,
    /// Predicted input rate
    #[arg(long)]
    r_bar: Option<f64>,
    /// Mechanism to build
    #[arg(long, value_enum)]
    mechanism: Option<KindArg>,
    /// Jump level for the constant mechanism
    #[arg(long)]
    c: Option<f64>,
    /// Error-tolerance budget
    #[arg(long)]
    eta_bar: Option<f64>,
    /// Flat jump segments (limit) or explicit small ramps (epsilon)
    #[arg(long, value_enum, default_value = "limit")]
    mode: ModeArg,
    /// Ramp height in epsilon mode
    #[arg(long, default_value_t = 1e-9)]
    epsilon: f64,
    /// Load a previously serialized mechanism instead of building one
    #[arg(long)]
    mechanism_file: Option<PathBuf>,
}

impl MechanismSpec {
    fn mode(&self) -> Result<MechanismMode> {
        match self.mode {
            ModeArg::Limit => Ok(MechanismMode::Limit),
            ModeArg::Epsilon => {
                if self.epsilon <= 0.0 {
                    return Err(anyhow!("--epsilon must be positive in epsilon mode"));
                }
                Ok(MechanismMode::Epsilon(self.epsilon))
            }
        }
    }

    fn build(&self) -> Result<Mechanism> {
        if let Some(path) = &self.mechanism_file {
            let text = read_file(path)?;
            return Mechanism::from_json(&text)
                .with_context(|| format!("{}: malformed mechanism", path.display()));
        }
        let instance = load_instance(
            self.instance.as_deref().ok_or_else(|| anyhow!("--instance is required"))?,
        )?;
        let r_bar = self.r_bar.ok_or_else(|| anyhow!("--r-bar is required"))?;
        let mode = self.mode()?;
        let mechanism = match self.mechanism.ok_or_else(|| anyhow!("--mechanism is required"))? {
            KindArg::Mincharge => build_min_charge_with_mode(&instance, r_bar, mode)?,
            KindArg::Constant => {
                let c = self.c.ok_or_else(|| anyhow!("--c is required for constant"))?;
                build_constant_with_mode(&instance, r_bar, c, mode)?
            }
            KindArg::Errortolerant => {
                let eta_bar =
                    self.eta_bar.ok_or_else(|| anyhow!("--eta-bar is required for errortolerant"))?;
                build_error_tolerant_with_mode(&instance, r_bar, eta_bar, mode)?
            }
        };
        Ok(mechanism)
    }
}

/// Inclusive rate grid `start:stop:points`.
#[derive(Clone, Copy)]
struct GridArg {
    start: f64,
    stop: f64,
    points: usize,
}

impl std::str::FromStr for GridArg {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split(':').collect();
        if parts.len() != 3 {
            return Err("expected start:stop:points".into());
        }
        let start: f64 = parts[0].parse().map_err(|e| format!("start: {e}"))?;
        let stop: f64 = parts[1].parse().map_err(|e| format!("stop: {e}"))?;
        let points: usize = parts[2].parse().map_err(|e| format!("points: {e}"))?;
        if !(start < stop) {
            return Err("grid start must be below stop".into());
        }
        if points < 2 {
            return Err("grid needs at least 2 points".into());
        }
        Ok(GridArg { start, stop, points })
    }
}

impl GridArg {
    fn rates(&self) -> Vec<f64> {
        (0..self.points)
            .map(|i| {
                self.start + (self.stop - self.start) * i as f64 / (self.points - 1) as f64
            })
            .collect()
    }
}

#[derive(Subcommand)]
enum Command {
    /// Optimal flow and cost at a rate
    Opt {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long)]
        r: f64,
    },
    /// Nash flow and cost at a rate
    Nash {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long)]
        r: f64,
    },
    /// Build a mechanism and serialize it as JSON
    Mechanism {
        #[command(flatten)]
        spec: MechanismSpec,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Engineered price of anarchy at a single rate
    Epoa {
        #[command(flatten)]
        spec: MechanismSpec,
        #[arg(long)]
        r: f64,
    },
    /// CSV sweep over a rate grid, with regime boundaries and the analytic
    /// supremum appended
    Sweep {
        #[command(flatten)]
        spec: MechanismSpec,
        #[arg(long)]
        grid: GridArg,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Sweep plus per-regime bound comparison; fails when a bound is violated
    Robustness {
        #[command(flatten)]
        spec: MechanismSpec,
        #[arg(long)]
        grid: GridArg,
        #[arg(long)]
        output: Option<PathBuf>,
        /// Slack allowed on bound comparisons
        #[arg(long, default_value_t = 1e-7)]
        bound_tol: f64,
    },
    /// Check the consistency (and error-tolerance) characterizations
    Verify {
        #[command(flatten)]
        spec: MechanismSpec,
        /// Equality tolerance for the operational cost check
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
    },
    /// Two-link family that forces any consistent mechanism toward factor 2
    Lowerbound {
        #[arg(long, default_value_t = 1e-3)]
        delta: f64,
    },
    /// Closed-form tables for the normalized two-link network
    Closedform {
        #[arg(long)]
        a: f64,
        #[arg(long)]
        b: f64,
        #[arg(long)]
        r_bar: Option<f64>,
        #[arg(long)]
        eta_bar: Option<f64>,
        #[arg(long)]
        grid: GridArg,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Brute-force cross-check of the exact solvers on a small instance
    OracleCheck {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long)]
        r: f64,
        #[arg(long, default_value_t = 1e-3)]
        step: f64,
        #[arg(long)]
        r_bar: Option<f64>,
    },
}

/// 12 significant digits, fixed scientific layout, byte-stable across runs.
fn fmt12(x: f64) -> String {
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    format!("{x:.11e}")
}

fn read_file(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

fn load_instance(path: &Path) -> Result<Instance> {
    let text = read_file(path)?;
    let instance = Instance::from_json(&text)
        .map_err(|e| anyhow!("{}: {e}", path.display()))?;
    let violations = instance.validate();
    if !violations.is_empty() {
        let mut msg = format!("{}: invalid instance", path.display());
        for v in violations {
            let _ = write!(msg, "\n  {v}");
        }
        return Err(anyhow!(msg));
    }
    Ok(instance)
}

fn emit(output: Option<&Path>, content: &str) -> Result<()> {
    match output {
        Some(path) => std::fs::write(path, content)
            .with_context(|| format!("cannot write {}", path.display())),
        None => {
            print!("{content}");
            Ok(())
        }
    }
}

fn print_flow(label: &str, instance: &Instance, flow: &parlink::model::Flow) {
    println!("{label} flow at rate {}:", fmt12(flow.rate));
    for (i, (&f, link)) in flow.per_link.iter().zip(instance.links.iter()).enumerate() {
        println!("  link {}: flow {} latency {}", i + 1, fmt12(f), fmt12(link.eval(f)));
    }
    println!("cost: {}", fmt12(flow_cost_affine(instance, flow)));
}

fn sweep_csv(mechanism: &Mechanism, points: &[EpoaPoint]) -> (String, bool) {
    let mut out = String::from("r,r_bar,eta,nash_cost,opt_cost,epoa,regime,bound,bound_satisfied\n");
    let mut all_ok = true;
    for p in points {
        let bound = analysis::point_bound(mechanism, p);
        let ok = p.epoa <= bound + 1e-7;
        all_ok &= ok;
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            fmt12(p.r),
            fmt12(p.r_bar),
            fmt12(p.eta),
            fmt12(p.nash_cost),
            fmt12(p.opt_cost),
            fmt12(p.epoa),
            p.regime,
            fmt12(bound),
            ok
        );
    }
    (out, all_ok)
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Opt { instance, r } => {
            let inst = load_instance(&instance)?;
            let (norm, _) = inst.normalize()?;
            let flow = opt_flow(&norm, r)?;
            print_flow("optimal", &norm, &flow);
        }
        Command::Nash { instance, r } => {
            let inst = load_instance(&instance)?;
            let (norm, _) = inst.normalize()?;
            let flow = nash_flow(&norm, r)?;
            print_flow("nash", &norm, &flow);
        }
        Command::Mechanism { spec, output } => {
            let mechanism = spec.build()?;
            emit(output.as_deref(), &(mechanism.to_json() + "\n"))?;
        }
        Command::Epoa { spec, r } => {
            let mechanism = spec.build()?;
            let p = epoa(&mechanism, r)?;
            println!(
                "r={} r_bar={} eta={} nash_cost={} opt_cost={} epoa={} regime={}",
                fmt12(p.r),
                fmt12(p.r_bar),
                fmt12(p.eta),
                fmt12(p.nash_cost),
                fmt12(p.opt_cost),
                fmt12(p.epoa),
                p.regime
            );
        }
        Command::Sweep { spec, grid, output } => {
            let mechanism = spec.build()?;
            let points = epoa_sweep(&mechanism, &grid.rates())?;
            let (csv, all_ok) = sweep_csv(&mechanism, &points);
            emit(output.as_deref(), &csv)?;
            if !all_ok {
                eprintln!("sweep: a regime bound is violated");
                return Ok(ExitCode::from(2));
            }
        }
        Command::Robustness { spec, grid, output, bound_tol } => {
            let mechanism = spec.build()?;
            let points = epoa_sweep(&mechanism, &grid.rates())?;
            let (csv, _) = sweep_csv(&mechanism, &points);
            if let Some(path) = output.as_deref() {
                emit(Some(path), &csv)?;
            }
            let sup = points.iter().map(|p| p.epoa).fold(f64::NEG_INFINITY, f64::max);
            let sup_point = points
                .iter()
                .max_by(|a, b| a.epoa.total_cmp(&b.epoa))
                .expect("nonempty sweep");
            println!("supremum: epoa {} at r {} ({})", fmt12(sup), fmt12(sup_point.r), sup_point.regime);

            let mut violated = false;
            for p in &points {
                let bound = analysis::point_bound(&mechanism, p);
                if p.epoa > bound + bound_tol {
                    violated = true;
                    println!(
                        "VIOLATED at r {}: epoa {} above bound {} [{}]",
                        fmt12(p.r),
                        fmt12(p.epoa),
                        fmt12(bound),
                        p.regime
                    );
                }
            }
            if mechanism.eta_bar().is_some() {
                let eta_bar = mechanism.eta_bar().unwrap();
                for eta in [0.0, 0.5 * eta_bar, eta_bar, 2.0 * eta_bar] {
                    let report = many_link_bounds(&mechanism, eta)?;
                    println!(
                        "bound[{}] eta {}: observed {} bound {} -> {}",
                        report.bound_name,
                        fmt12(eta),
                        fmt12(report.observed_value),
                        fmt12(report.bound_value),
                        if report.satisfied { "ok" } else { "VIOLATED" }
                    );
                    violated |= !report.satisfied;
                }
            }
            if violated {
                return Ok(ExitCode::from(2));
            }
            println!("all bounds hold");
        }
        Command::Verify { spec, tol } => {
            let mechanism = spec.build()?;
            let report = check_consistent(&mechanism)?;
            for check in &report.per_link {
                println!(
                    "link {}: value_preserved={} right_liminf_ok={}",
                    check.link + 1,
                    check.value_preserved,
                    check.right_liminf_ok
                );
            }
            let cost_ok = (report.equilibrium_cost - report.optimal_cost).abs()
                <= tol * report.optimal_cost.abs().max(1.0);
            println!(
                "equilibrium cost {} vs optimal {} -> {}",
                fmt12(report.equilibrium_cost),
                fmt12(report.optimal_cost),
                if cost_ok { "match" } else { "MISMATCH" }
            );
            let mut ok = report.characterization_holds && cost_ok;
            if let Some(eta_bar) = mechanism.eta_bar() {
                let et = check_error_tolerant(&mechanism, eta_bar)?;
                println!(
                    "tolerance characterization (suffix level {}): {}",
                    fmt12(et.suffix_level),
                    if et.error_tolerant { "pass" } else { "FAIL" }
                );
                ok &= et.error_tolerant;
            }
            if !ok {
                println!("verdict: FAIL");
                return Ok(ExitCode::from(2));
            }
            println!("verdict: pass");
        }
        Command::Lowerbound { delta } => {
            let (instance, r_bar, estimate) = lower_bound_family(delta)?;
            println!("instance: {}", instance.to_json());
            println!("r_bar: {}", fmt12(r_bar));
            println!("attained epoa just past the prediction: {}", fmt12(estimate));
            println!("bound approached as delta -> 0: 2");
        }
        Command::Closedform { a, b, r_bar, eta_bar, grid, output } => {
            let mut out = String::new();
            match (r_bar, eta_bar) {
                (Some(r_bar), Some(eta_bar)) => {
                    out.push_str("r,poa,et_epoa\n");
                    for r in grid.rates() {
                        let (et, _) = two_link_et_epoa(a, b, r_bar, eta_bar, r)?;
                        let _ = writeln!(
                            out,
                            "{},{},{}",
                            fmt12(r),
                            fmt12(two_link_poa(a, b, r)),
                            fmt12(et)
                        );
                    }
                    let rob = two_link_et_robustness(a, b, eta_bar)?;
                    let _ = writeln!(
                        out,
                        "# robustness max(2, 1+a): {} witness value {} at r_bar {} r {}",
                        fmt12(rob.bound),
                        fmt12(rob.witness_value),
                        fmt12(rob.witness_r_bar),
                        fmt12(rob.witness_r)
                    );
                }
                _ => {
                    out.push_str("r,poa\n");
                    for r in grid.rates() {
                        let _ = writeln!(out, "{},{}", fmt12(r), fmt12(two_link_poa(a, b, r)));
                    }
                }
            }
            emit(output.as_deref(), &out)?;
        }
        Command::OracleCheck { instance, r, step, r_bar } => {
            let inst = load_instance(&instance)?;
            let (norm, _) = inst.normalize()?;
            let grid = GridSpec { step, max_links: 3 };
            let solver_cost = flow_cost_affine(&norm, &opt_flow(&norm, r)?);
            let (_, oracle_cost) = grid_opt_affine(&norm, r, &grid)?;
            let budget = lipschitz_bound(&norm.to_piecewise(), r) * step;
            println!(
                "optimal cost: solver {} oracle {} |diff| {} budget {}",
                fmt12(solver_cost),
                fmt12(oracle_cost),
                fmt12((solver_cost - oracle_cost).abs()),
                fmt12(budget)
            );
            let mut ok = (solver_cost - oracle_cost).abs() <= budget
                && oracle_cost >= solver_cost - 1e-9;

            let latencies = match r_bar {
                Some(r_bar) => build_min_charge_with_mode(&norm, r_bar, MechanismMode::Limit)?
                    .modified,
                None => norm.to_piecewise(),
            };
            let (flow, level) = ue_flow(&latencies, r, UeMode::Limit)?;
            let eq_ok = grid_equilibrium_check(&latencies, &flow, &grid)?;
            println!(
                "equilibrium at level {}: deviation probe {}",
                fmt12(level),
                if eq_ok { "pass" } else { "FAIL" }
            );
            ok &= eq_ok;
            if !ok {
                return Ok(ExitCode::from(2));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    // worker cap for the sweep dispatch
    if let Ok(threads) = std::env::var("ROUTING_MECH_THREADS") {
        if let Ok(n) = threads.parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
        }
    }
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap's help/version pseudo-errors print and succeed
            if e.use_stderr() {
                eprint!("{e}");
                return ExitCode::from(1);
            }
            print!("{e}");
            return ExitCode::SUCCESS;
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
