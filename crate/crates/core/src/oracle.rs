//! Brute-force validators for small instances: exhaustive simplex search for
//! the optimal flow and a pairwise-deviation equilibrium check. These are the
//! independent reference the exact solvers are tested against, so latency
//! values are recomputed from raw segment arithmetic here instead of calling
//! the library evaluation path.

use crate::error::Error;
use crate::model::{Flow, Instance};
use crate::par::par_map;
use crate::piecewise::PiecewiseLatency;

#[derive(Debug, Clone, Copy)]
pub struct GridSpec {
    /// Flow granularity `h`.
    pub step: f64,
    /// Largest supported number of links.
    pub max_links: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec { step: 1e-3, max_links: 3 }
    }
}

const MAX_GRID_POINTS: u128 = 100_000_000;

/// Latency at `x` recomputed by a linear scan over the raw segments, with the
/// left value at jump points.
pub fn eval_independent(latency: &PiecewiseLatency, x: f64) -> f64 {
    let segs = latency.segments();
    let mut value = segs[0].value_at_start + segs[0].slope * x;
    for i in 1..segs.len() {
        let seg = segs[i];
        if x > seg.x_start {
            value = seg.value_at_start + seg.slope * (x - seg.x_start);
        } else if x == seg.x_start {
            let prev = segs[i - 1];
            let left = prev.value_at_start + prev.slope * (x - prev.x_start);
            value = left.min(seg.value_at_start);
        }
    }
    debug_assert_eq!(value, latency.eval(x));
    value
}

/// A slope bound for the total cost along simplex moves at total rate `r`;
/// the grid optimum is within `lipschitz_bound * step` of the true optimum.
pub fn lipschitz_bound(latencies: &[PiecewiseLatency], r: f64) -> f64 {
    let per_link = latencies
        .iter()
        .map(|l| l.right_limit(r) + r * l.max_slope())
        .fold(0.0, f64::max);
    2.0 * latencies.len() as f64 * per_link
}

fn grid_count(r: f64, grid: &GridSpec) -> Result<u64, Error> {
    let n = (r / grid.step).round();
    if (n * grid.step - r).abs() > 1e-9 * r.abs().max(1.0) {
        return Err(Error::RateOffGrid { rate: r, step: grid.step });
    }
    Ok(n as u64)
}

fn total_cost(latencies: &[PiecewiseLatency], flows: &[f64]) -> f64 {
    flows
        .iter()
        .zip(latencies)
        .map(|(&f, l)| if f > 0.0 { f * eval_independent(l, f) } else { 0.0 })
        .sum()
}

/// Exhaustively minimizes the total cost over the discrete simplex
/// `{f : f_i ∈ hZ≥0, Σ f_i = r}`.
pub fn grid_opt(
    latencies: &[PiecewiseLatency],
    r: f64,
    grid: &GridSpec,
) -> Result<(Flow, f64), Error> {
    let m = latencies.len();
    if m == 0 {
        return Err(Error::EmptyInstance);
    }
    if m > grid.max_links || m > 3 {
        return Err(Error::TooManyLinks { got: m, max: grid.max_links.min(3) });
    }
    let n = grid_count(r, grid)?;
    let h = grid.step;

    let points: u128 = match m {
        1 => 1,
        2 => n as u128 + 1,
        _ => ((n as u128 + 1) * (n as u128 + 2)) / 2,
    };
    if points > MAX_GRID_POINTS {
        return Err(Error::GridTooLarge(points));
    }

    let (flows, cost) = match m {
        1 => (vec![r], total_cost(latencies, &[r])),
        2 => {
            let firsts: Vec<u64> = (0..=n).collect();
            let best = par_map(&firsts, |&i| {
                let f = [i as f64 * h, (n - i) as f64 * h];
                (total_cost(latencies, &f), i)
            })
            .into_iter()
            .min_by(|a, b| a.0.total_cmp(&b.0))
            .expect("nonempty grid");
            let f0 = best.1 as f64 * h;
            (vec![f0, (n - best.1) as f64 * h], best.0)
        }
        _ => {
            let firsts: Vec<u64> = (0..=n).collect();
            let best = par_map(&firsts, |&i| {
                let f0 = i as f64 * h;
                let mut local = (f64::INFINITY, 0u64);
                for j in 0..=(n - i) {
                    let f = [f0, j as f64 * h, (n - i - j) as f64 * h];
                    let c = total_cost(latencies, &f);
                    if c < local.0 {
                        local = (c, j);
                    }
                }
                (local.0, i, local.1)
            })
            .into_iter()
            .min_by(|a, b| a.0.total_cmp(&b.0))
            .expect("nonempty grid");
            let (cost, i, j) = best;
            (vec![i as f64 * h, j as f64 * h, (n - i - j) as f64 * h], cost)
        }
    };

    Ok((Flow::new(flows, r), cost))
}

/// Convenience wrapper over the original affine latencies.
pub fn grid_opt_affine(instance: &Instance, r: f64, grid: &GridSpec) -> Result<(Flow, f64), Error> {
    grid_opt(&instance.to_piecewise(), r, grid)
}

/// True when no commuter-sized packet of `h` flow can strictly improve its
/// latency by switching links, up to the `h * max_slope` movement tolerance.
pub fn grid_equilibrium_check(
    latencies: &[PiecewiseLatency],
    flow: &Flow,
    grid: &GridSpec,
) -> Result<bool, Error> {
    if flow.per_link.len() != latencies.len() {
        return Err(Error::DimensionMismatch { flow: flow.per_link.len(), links: latencies.len() });
    }
    let h = grid.step;
    let tol = h * latencies.iter().map(|l| l.max_slope()).fold(0.0, f64::max);
    for (i, &fi) in flow.per_link.iter().enumerate() {
        if fi < h {
            continue;
        }
        let current = eval_independent(&latencies[i], fi);
        for (j, &fj) in flow.per_link.iter().enumerate() {
            if i == j {
                continue;
            }
            if eval_independent(&latencies[j], fj + h) < current - tol {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solvers::{self, UeMode};

    fn two_link() -> Instance {
        Instance::from_pairs(&[(1.0, 0.0), (1.0, 1.0)])
    }

    #[test]
    fn grid_opt_matches_closed_form_cost() {
        let grid = GridSpec::default();
        let (_, cost) = grid_opt_affine(&two_link(), 2.0, &grid).unwrap();
        assert!((cost - 2.875).abs() < 5e-3);
        assert!(cost >= 2.875 - 1e-9);
    }

    #[test]
    fn grid_opt_single_link_routes_everything() {
        let (flow, cost) =
            grid_opt_affine(&Instance::from_pairs(&[(2.0, 1.0)]), 1.5, &GridSpec::default())
                .unwrap();
        assert_eq!(flow.per_link, vec![1.5]);
        assert!((cost - 1.5 * 4.0).abs() < 1e-12);
    }

    #[test]
    fn grid_opt_pigou() {
        let pigou = Instance::from_pairs(&[(1.0, 0.0), (0.0, 1.0)]);
        let (_, cost) = grid_opt_affine(&pigou, 1.0, &GridSpec::default()).unwrap();
        assert!((cost - 0.75).abs() < 2e-3);
        assert!(cost >= 0.75 - 1e-9);
    }

    #[test]
    fn grid_opt_guards() {
        let grid = GridSpec::default();
        assert!(matches!(
            grid_opt_affine(&Instance::from_pairs(&[(1.0, 0.0); 4]), 1.0, &grid),
            Err(Error::TooManyLinks { .. })
        ));
        assert!(matches!(
            grid_opt_affine(&two_link(), 1.0005e-1 + 1e-5, &grid),
            Err(Error::RateOffGrid { .. })
        ));
        assert!(matches!(
            grid_opt_affine(
                &Instance::from_pairs(&[(1.0, 0.0), (1.0, 1.0), (1.0, 2.0)]),
                1e5,
                &GridSpec { step: 1e-3, max_links: 3 }
            ),
            Err(Error::GridTooLarge(_))
        ));
    }

    #[test]
    fn equilibrium_check_accepts_nash_and_rejects_imbalance() {
        let inst = two_link();
        let grid = GridSpec::default();
        let lats = inst.to_piecewise();
        let nash = solvers::nash_flow(&inst, 2.0).unwrap();
        assert!(grid_equilibrium_check(&lats, &nash, &grid).unwrap());
        let lopsided = Flow::new(vec![2.0, 0.0], 2.0);
        assert!(!grid_equilibrium_check(&lats, &lopsided, &grid).unwrap());
        assert!(grid_equilibrium_check(&lats, &Flow::zero(2), &grid).unwrap());
    }

    #[test]
    fn equilibrium_check_accepts_pinned_jump_flows() {
        let m = crate::mechanisms::build_min_charge(&two_link(), 2.0).unwrap();
        let grid = GridSpec::default();
        for r in [1.0, 2.0, 2.2, 3.0] {
            let (flow, _) = solvers::ue_flow(&m.modified, r, UeMode::Limit).unwrap();
            assert!(grid_equilibrium_check(&m.modified, &flow, &grid).unwrap(), "r = {r}");
        }
    }

    #[test]
    fn independent_eval_agrees_with_library_eval() {
        let m = crate::mechanisms::build_min_charge(&two_link(), 2.0).unwrap();
        for x in [0.0, 0.7, 1.25, 1.3, 1.75, 2.5] {
            assert_eq!(eval_independent(&m.modified[0], x), m.modified[0].eval(x));
        }
    }
}
