//! Coordination mechanisms: per-link replacement latencies `ℓ̂_i >= ℓ_i` that
//! reshape the equilibrium while the optimum is still measured under the
//! original latencies.
//!
//! All three builders share one shape. Given a demand prediction `r̄`, take
//! the optimal flow at `r̄`, find the last used link `k`, and for every
//! earlier link raise the latency to a jump level for flow beyond its optimal
//! share, rejoining the original latency where it catches up. The level is
//! the parameter `c` (Constant), the maximum used-link latency `L`
//! (MinCharge), or the suffix Nash latency after routing a tolerance budget
//! `η̄` through links `k..m` (ErrorTolerant).

use crate::error::Error;
use crate::model::{Flow, Instance};
use crate::piecewise::{PiecewiseLatency, Segment};
use crate::solvers::{self, UeMode};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum MechanismKind {
    Constant { c: f64 },
    MinCharge,
    ErrorTolerant { eta_bar: f64 },
}

/// Whether jump segments are exactly flat (the vanishing-slope limit) or
/// carry a small positive slope that keeps the modified latencies strictly
/// increasing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum MechanismMode {
    Limit,
    Epsilon(f64),
}

impl MechanismMode {
    pub fn ue_mode(&self) -> UeMode {
        match self {
            MechanismMode::Limit => UeMode::Limit,
            MechanismMode::Epsilon(_) => UeMode::Epsilon,
        }
    }
}

/// A built mechanism: the instance, the prediction, the jump level, and the
/// resulting modified latencies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mechanism {
    pub instance: Instance,
    pub r_bar: f64,
    pub kind: MechanismKind,
    pub mode: MechanismMode,
    /// 1-based index of the last link used by the optimal flow at `r_bar`.
    pub k_bar: usize,
    /// Jump level applied to links before `k_bar`.
    pub level: f64,
    pub modified: Vec<PiecewiseLatency>,
    pub opt_at_prediction: Flow,
}

impl Mechanism {
    /// Maximum used-link latency at the predicted optimum; the smallest level
    /// any consistent mechanism of this shape may use.
    pub fn min_charge_level(&self) -> f64 {
        min_charge_level(&self.instance, &self.opt_at_prediction, self.k_bar)
    }

    /// Rate at which the equilibrium level first exceeds the jump level, i.e.
    /// where the mechanism stops shaping the equilibrium. Infinite when a
    /// constant link pins the level forever.
    pub fn plateau_exit_rate(&self) -> f64 {
        self.modified.iter().map(|l| l.inverse_sup(self.level)).sum()
    }

    pub fn eta_bar(&self) -> Option<f64> {
        match self.kind {
            MechanismKind::ErrorTolerant { eta_bar } => Some(eta_bar),
            _ => None,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("mechanism serializes")
    }

    pub fn from_json(text: &str) -> Result<Mechanism, serde_json::Error> {
        serde_json::from_str(text)
    }
}

fn min_charge_level(instance: &Instance, opt: &Flow, k_bar: usize) -> f64 {
    let level = instance.links[k_bar - 1].eval(opt.per_link[k_bar - 1]);
    debug_assert!({
        let scan = instance
            .links
            .iter()
            .zip(opt.per_link.iter())
            .filter(|(_, &f)| f > 0.0)
            .map(|(l, &f)| l.eval(f))
            .fold(f64::NEG_INFINITY, f64::max);
        (scan - level).abs() <= 1e-9 * level.abs().max(1.0)
    });
    level
}

fn assemble(
    instance: &Instance,
    r_bar: f64,
    kind: MechanismKind,
    mode: MechanismMode,
    level: f64,
) -> Result<Mechanism, Error> {
    let opt = solvers::opt_flow(instance, r_bar)?;
    let k_bar = opt.last_used_link().expect("positive prediction uses a link");

    let mut modified = Vec::with_capacity(instance.len());
    for (i, link) in instance.links.iter().enumerate() {
        if i + 1 >= k_bar {
            modified.push(PiecewiseLatency::affine(link.a, link.b));
            continue;
        }
        let share = opt.per_link[i];
        let (jump_value, rejoin_value, slope) = match mode {
            MechanismMode::Limit => (level, level, 0.0),
            MechanismMode::Epsilon(eps) => {
                let rejoin = (level + eps - link.b) / link.a;
                (level, level + eps, eps / (rejoin - share))
            }
        };
        let rejoin = (rejoin_value - link.b) / link.a;
        debug_assert!(rejoin > share, "jump level sits above the latency at the optimal share");
        modified.push(PiecewiseLatency::new(vec![
            Segment { x_start: 0.0, value_at_start: link.b, slope: link.a },
            Segment { x_start: share, value_at_start: jump_value, slope },
            Segment { x_start: rejoin, value_at_start: rejoin_value, slope: link.a },
        ])?);
    }

    Ok(Mechanism {
        instance: instance.clone(),
        r_bar,
        kind,
        mode,
        k_bar,
        level,
        modified,
        opt_at_prediction: opt,
    })
}

/// Constant mechanism with jump level `c`; requires `c` at or above the
/// maximum used-link latency at the predicted optimum.
pub fn build_constant(instance: &Instance, r_bar: f64, c: f64) -> Result<Mechanism, Error> {
    build_constant_with_mode(instance, r_bar, c, MechanismMode::Limit)
}

pub fn build_constant_with_mode(
    instance: &Instance,
    r_bar: f64,
    c: f64,
    mode: MechanismMode,
) -> Result<Mechanism, Error> {
    if r_bar <= 0.0 {
        return Err(Error::NonPositiveParameter { name: "r_bar", value: r_bar });
    }
    let opt = solvers::opt_flow(instance, r_bar)?;
    let k_bar = opt.last_used_link().expect("positive prediction uses a link");
    let floor = min_charge_level(instance, &opt, k_bar);
    if c < floor {
        return Err(Error::LevelBelowFloor { level: c, floor });
    }
    assemble(instance, r_bar, MechanismKind::Constant { c }, mode, c)
}

/// Constant mechanism without the floor check; builds intentionally broken
/// mechanisms so the characterization checkers have something to reject.
#[doc(hidden)]
pub fn build_constant_unchecked(
    instance: &Instance,
    r_bar: f64,
    c: f64,
) -> Result<Mechanism, Error> {
    if r_bar <= 0.0 {
        return Err(Error::NonPositiveParameter { name: "r_bar", value: r_bar });
    }
    assemble(instance, r_bar, MechanismKind::Constant { c }, MechanismMode::Limit, c)
}

/// Constant mechanism at the smallest consistent level: the maximum used-link
/// latency `L` of the predicted optimum.
pub fn build_min_charge(instance: &Instance, r_bar: f64) -> Result<Mechanism, Error> {
    build_min_charge_with_mode(instance, r_bar, MechanismMode::Limit)
}

pub fn build_min_charge_with_mode(
    instance: &Instance,
    r_bar: f64,
    mode: MechanismMode,
) -> Result<Mechanism, Error> {
    if r_bar <= 0.0 {
        return Err(Error::NonPositiveParameter { name: "r_bar", value: r_bar });
    }
    let opt = solvers::opt_flow(instance, r_bar)?;
    let k_bar = opt.last_used_link().expect("positive prediction uses a link");
    let level = min_charge_level(instance, &opt, k_bar);
    assemble(instance, r_bar, MechanismKind::MinCharge, mode, level)
}

/// Error-tolerant mechanism: the jump level is the common latency of the Nash
/// flow that routes `opt_share(k) + η̄` through the unmodified suffix
/// `k..m`, so demand up to `η̄` past the prediction spills into the suffix
/// without hitting a discontinuity.
pub fn build_error_tolerant(
    instance: &Instance,
    r_bar: f64,
    eta_bar: f64,
) -> Result<Mechanism, Error> {
    build_error_tolerant_with_mode(instance, r_bar, eta_bar, MechanismMode::Limit)
}

pub fn build_error_tolerant_with_mode(
    instance: &Instance,
    r_bar: f64,
    eta_bar: f64,
    mode: MechanismMode,
) -> Result<Mechanism, Error> {
    if r_bar <= 0.0 {
        return Err(Error::NonPositiveParameter { name: "r_bar", value: r_bar });
    }
    if eta_bar <= 0.0 {
        return Err(Error::NonPositiveParameter { name: "eta_bar", value: eta_bar });
    }
    let opt = solvers::opt_flow(instance, r_bar)?;
    let k_bar = opt.last_used_link().expect("positive prediction uses a link");
    let suffix = Instance::new(instance.links[k_bar - 1..].to_vec());
    let suffix_rate = opt.per_link[k_bar - 1] + eta_bar;
    let level = solvers::nash_coefficients(&suffix, suffix_rate)?.level;
    assemble(instance, r_bar, MechanismKind::ErrorTolerant { eta_bar }, mode, level)
}

/// Per-link outcome of the consistency characterization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkCheck {
    pub link: usize,
    /// `ℓ̂_i(f̄*_i) = ℓ_i(f̄*_i)` — the mechanism does not tax the optimum.
    pub value_preserved: bool,
    /// `liminf_{ε→0⁺} ℓ̂_i(f̄*_i + ε) >= L` — beyond the optimal share the
    /// latency at least reaches the maximum used-link latency.
    pub right_liminf_ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyReport {
    pub per_link: Vec<LinkCheck>,
    pub characterization_holds: bool,
    pub equilibrium_cost: f64,
    pub optimal_cost: f64,
    /// Operational confirmation: the equilibrium at the predicted rate costs
    /// exactly the optimum.
    pub cost_matches: bool,
    pub consistent: bool,
}

/// Evaluates the consistency characterization on every link used by the
/// predicted optimum, plus an operational equilibrium-cost cross-check.
pub fn check_consistent(mechanism: &Mechanism) -> Result<ConsistencyReport, Error> {
    let tol = 1e-9;
    let opt = &mechanism.opt_at_prediction;
    let level = mechanism.min_charge_level();

    let mut per_link = Vec::new();
    for (i, &share) in opt.per_link.iter().enumerate() {
        if share <= 0.0 {
            continue;
        }
        let original = mechanism.instance.links[i].eval(share);
        let modified = mechanism.modified[i].eval(share);
        let scale = original.abs().max(1.0);
        per_link.push(LinkCheck {
            link: i,
            value_preserved: (modified - original).abs() <= tol * scale,
            right_liminf_ok: mechanism.modified[i].right_limit(share)
                >= level - tol * level.abs().max(1.0),
        });
    }
    let characterization_holds =
        per_link.iter().all(|c| c.value_preserved && c.right_liminf_ok);

    let (eq_flow, _) =
        solvers::ue_flow(&mechanism.modified, mechanism.r_bar, mechanism.mode.ue_mode())?;
    let equilibrium_cost = solvers::flow_cost(&mechanism.modified, &eq_flow);
    let optimal_cost = solvers::flow_cost_affine(&mechanism.instance, opt);
    let cost_matches =
        (equilibrium_cost - optimal_cost).abs() <= tol * optimal_cost.abs().max(1.0);

    Ok(ConsistencyReport {
        per_link,
        characterization_holds,
        equilibrium_cost,
        optimal_cost,
        cost_matches,
        consistent: characterization_holds && cost_matches,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuityCheck {
    pub link: usize,
    pub lo: f64,
    pub hi: f64,
    pub continuous: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorToleranceReport {
    /// Common suffix level after routing the tolerance budget through the
    /// modified suffix latencies.
    pub suffix_level: f64,
    pub value_checks: Vec<LinkCheck>,
    pub continuity_checks: Vec<ContinuityCheck>,
    pub error_tolerant: bool,
}

/// Evaluates the error-tolerance characterization: equality at the optimal
/// shares, right-liminf at least the suffix level reached by the tolerance
/// budget, and no discontinuity inside the flow ranges swept while the error
/// stays within `eta_bar`.
pub fn check_error_tolerant(
    mechanism: &Mechanism,
    eta_bar: f64,
) -> Result<ErrorToleranceReport, Error> {
    let tol = 1e-9;
    let opt = &mechanism.opt_at_prediction;
    let k = mechanism.k_bar;

    // suffix equilibrium under the *modified* suffix latencies
    let suffix: Vec<PiecewiseLatency> = mechanism.modified[k - 1..].to_vec();
    let suffix_rate = opt.per_link[k - 1] + eta_bar;
    let (suffix_flow, suffix_fallback) =
        solvers::ue_flow(&suffix, suffix_rate, mechanism.mode.ue_mode())?;
    let mut suffix_level = suffix
        .iter()
        .zip(suffix_flow.per_link.iter())
        .filter(|(_, &f)| f > 0.0)
        .map(|(l, &f)| l.eval(f))
        .fold(f64::NEG_INFINITY, f64::max);
    if !suffix_level.is_finite() {
        suffix_level = suffix_fallback;
    }

    // equilibrium of the mechanism at the shrunk rate
    let shrunk = (mechanism.r_bar - eta_bar).max(0.0);
    let (low_flow, _) = solvers::ue_flow(&mechanism.modified, shrunk, mechanism.mode.ue_mode())?;

    let mut value_checks = Vec::new();
    for i in 0..k {
        let share = opt.per_link[i];
        let original = mechanism.instance.links[i].eval(share);
        let modified = mechanism.modified[i].eval(share);
        let scale = original.abs().max(1.0);
        let right_liminf_ok = if i + 1 < k {
            mechanism.modified[i].right_limit(share)
                >= suffix_level - tol * suffix_level.abs().max(1.0)
        } else {
            true
        };
        value_checks.push(LinkCheck {
            link: i,
            value_preserved: (modified - original).abs() <= tol * scale,
            right_liminf_ok,
        });
    }

    let mut continuity_checks = Vec::new();
    for i in 0..mechanism.instance.len() {
        let (lo, hi) = if i + 1 <= k {
            (low_flow.per_link[i], opt.per_link[i])
        } else {
            (opt.per_link[i], suffix_flow.per_link[i - (k - 1)])
        };
        if i + 1 == k {
            // link k belongs to both ranges
            let up = suffix_flow.per_link[0];
            continuity_checks.push(ContinuityCheck {
                link: i,
                lo,
                hi: up.max(hi),
                continuous: mechanism.modified[i].continuous_on(lo, hi)
                    && mechanism.modified[i].continuous_on(hi, up.max(hi)),
            });
            continue;
        }
        let continuous = lo > hi || mechanism.modified[i].continuous_on(lo, hi);
        continuity_checks.push(ContinuityCheck { link: i, lo, hi, continuous });
    }

    let error_tolerant = value_checks.iter().all(|c| c.value_preserved && c.right_liminf_ok)
        && continuity_checks.iter().all(|c| c.continuous);

    Ok(ErrorToleranceReport { suffix_level, value_checks, continuity_checks, error_tolerant })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_link() -> Instance {
        Instance::from_pairs(&[(1.0, 0.0), (1.0, 1.0)])
    }

    #[test]
    fn min_charge_on_two_links() {
        let m = build_min_charge(&two_link(), 2.0).unwrap();
        assert_eq!(m.k_bar, 2);
        assert!((m.level - 1.75).abs() < 1e-12);
        let segs = m.modified[0].segments();
        assert_eq!(segs.len(), 3);
        assert!((segs[1].x_start - 1.25).abs() < 1e-12);
        assert!((segs[1].value_at_start - 1.75).abs() < 1e-12);
        assert!((segs[2].x_start - 1.75).abs() < 1e-12);
        // last used link is untouched
        assert_eq!(m.modified[1].segments().len(), 1);
    }

    #[test]
    fn min_charge_on_lower_bound_instance() {
        let inst = Instance::from_pairs(&[(1.0, 0.0), (2.0, 1.97)]);
        let m = build_min_charge(&inst, 1.0).unwrap();
        assert!((m.opt_at_prediction.per_link[0] - 0.995).abs() < 1e-12);
        assert!((m.opt_at_prediction.per_link[1] - 0.005).abs() < 1e-12);
        assert!((m.level - 1.98).abs() < 1e-12);
    }

    #[test]
    fn min_charge_on_pigou_uses_constant_level() {
        let inst = Instance::from_pairs(&[(1.0, 0.0), (0.0, 1.0)]);
        let m = build_min_charge(&inst, 1.0).unwrap();
        assert_eq!(m.k_bar, 2);
        assert!((m.level - 1.0).abs() < 1e-12);
        let segs = m.modified[0].segments();
        assert!((segs[1].x_start - 0.5).abs() < 1e-12);
        assert!((segs[2].x_start - 1.0).abs() < 1e-12);
        assert_eq!(m.plateau_exit_rate(), f64::INFINITY);
    }

    #[test]
    fn constant_at_the_floor_matches_min_charge() {
        let inst = two_link();
        let constant = build_constant(&inst, 2.0, 1.75).unwrap();
        let min_charge = build_min_charge(&inst, 2.0).unwrap();
        assert_eq!(constant.modified, min_charge.modified);
        assert!(matches!(
            build_constant(&inst, 2.0, 1.0),
            Err(Error::LevelBelowFloor { .. })
        ));
    }

    #[test]
    fn constant_example_rejoins_where_latency_catches_up() {
        let m = build_constant(&two_link(), 2.0, 2.0).unwrap();
        let segs = m.modified[0].segments();
        assert!((segs[1].x_start - 1.25).abs() < 1e-12);
        assert!((segs[1].value_at_start - 2.0).abs() < 1e-12);
        assert!((segs[2].x_start - 2.0).abs() < 1e-12);
    }

    #[test]
    fn single_link_instance_is_never_modified() {
        let m = build_min_charge(&Instance::from_pairs(&[(2.0, 1.0)]), 3.0).unwrap();
        assert_eq!(m.k_bar, 1);
        assert_eq!(m.modified[0].segments().len(), 1);
    }

    #[test]
    fn error_tolerant_level_is_suffix_nash_latency() {
        let m = build_error_tolerant(&two_link(), 2.0, 0.5).unwrap();
        assert!((m.level - 2.25).abs() < 1e-12);
        let segs = m.modified[0].segments();
        assert!((segs[1].x_start - 1.25).abs() < 1e-12);
        assert!((segs[2].x_start - 2.25).abs() < 1e-12);
    }

    #[test]
    fn error_tolerant_suffix_spreads_only_where_it_fits() {
        let inst = Instance::from_pairs(&[(1.0, 0.0), (1.0, 1.0), (1.0, 3.0)]);
        let m = build_error_tolerant(&inst, 4.0, 4.0).unwrap();
        // suffix {3} at rate 0.5 + 4: level = 3 + 4.5
        assert_eq!(m.k_bar, 3);
        assert!((m.level - 7.5).abs() < 1e-12);
    }

    #[test]
    fn error_tolerant_approaches_min_charge_as_budget_vanishes() {
        let inst = two_link();
        let et = build_error_tolerant(&inst, 2.0, 1e-12).unwrap();
        let mc = build_min_charge(&inst, 2.0).unwrap();
        assert!((et.level - mc.level).abs() < 1e-11);
    }

    #[test]
    fn epsilon_mode_builds_strictly_increasing_ramps() {
        let m =
            build_min_charge_with_mode(&two_link(), 2.0, MechanismMode::Epsilon(1e-9)).unwrap();
        let segs = m.modified[0].segments();
        assert!(segs[1].slope > 0.0);
        assert!((segs[2].value_at_start - (1.75 + 1e-9)).abs() < 1e-15);
        assert!(m.modified[0].jumps().len() == 1);
    }

    #[test]
    fn min_charge_passes_consistency_check() {
        let report = check_consistent(&build_min_charge(&two_link(), 2.0).unwrap()).unwrap();
        assert!(report.consistent);
        assert!(report.cost_matches);
        assert!((report.equilibrium_cost - 2.875).abs() < 1e-9);
    }

    #[test]
    fn forced_low_level_fails_consistency() {
        let m = build_constant_unchecked(&two_link(), 2.0, 1.5).unwrap();
        let report = check_consistent(&m).unwrap();
        assert!(!report.consistent);
        assert!(report.per_link.iter().any(|c| !c.right_liminf_ok));
    }

    #[test]
    fn unmodified_latencies_fail_consistency_when_nash_is_not_optimal() {
        let inst = Instance::from_pairs(&[(1.0, 0.0), (0.0, 1.0)]);
        let opt = solvers::opt_flow(&inst, 1.0).unwrap();
        let identity = Mechanism {
            modified: inst.to_piecewise(),
            opt_at_prediction: opt,
            instance: inst.clone(),
            r_bar: 1.0,
            kind: MechanismKind::Constant { c: 1.0 },
            mode: MechanismMode::Limit,
            k_bar: 2,
            level: 1.0,
        };
        let report = check_consistent(&identity).unwrap();
        assert!(!report.consistent);
        assert!(!report.cost_matches);
        assert!((report.equilibrium_cost - 1.0).abs() < 1e-12);
        assert!((report.optimal_cost - 0.75).abs() < 1e-12);
    }

    #[test]
    fn error_tolerant_passes_its_own_characterization() {
        let m = build_error_tolerant(&two_link(), 2.0, 0.5).unwrap();
        let report = check_error_tolerant(&m, 0.5).unwrap();
        assert!(report.error_tolerant, "{report:?}");
        assert!((report.suffix_level - 2.25).abs() < 1e-12);
    }

    #[test]
    fn min_charge_fails_error_tolerance_for_positive_budget() {
        let m = build_min_charge(&two_link(), 2.0).unwrap();
        let report = check_error_tolerant(&m, 0.5).unwrap();
        assert!(!report.error_tolerant);
        assert!((report.suffix_level - 2.25).abs() < 1e-12);
        assert!(report.value_checks.iter().any(|c| !c.right_liminf_ok));
    }

    #[test]
    fn zero_budget_reduces_to_consistency() {
        let m = build_min_charge(&two_link(), 2.0).unwrap();
        let et = check_error_tolerant(&m, 0.0).unwrap();
        let cons = check_consistent(&m).unwrap();
        assert_eq!(et.error_tolerant, cons.consistent);
        assert!((et.suffix_level - 1.75).abs() < 1e-12);
    }

    #[test]
    fn modified_dominates_original_everywhere() {
        for mech in [
            build_min_charge(&two_link(), 2.0).unwrap(),
            build_error_tolerant(&two_link(), 2.0, 0.5).unwrap(),
            build_constant(&two_link(), 2.0, 3.0).unwrap(),
        ] {
            for (lat, link) in mech.modified.iter().zip(mech.instance.links.iter()) {
                assert!(lat.dominates_affine(link.a, link.b, 1e-12));
            }
        }
    }

    #[test]
    fn mechanism_json_round_trip() {
        let m = build_error_tolerant(&two_link(), 2.0, 0.5).unwrap();
        let text = m.to_json();
        let back = Mechanism::from_json(&text).unwrap();
        assert_eq!(m, back);
    }
}
