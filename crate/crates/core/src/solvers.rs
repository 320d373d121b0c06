//! Exact flow solvers for normalized parallel-link instances: the optimal
//! flow (equal marginal costs), the Nash flow (equal latencies), the user
//! equilibrium under piecewise-affine modified latencies, costs, and the
//! closed-form optimal-cost coefficients.
//!
//! Both affine solvers sweep candidate active prefixes. With links sorted by
//! intercept, the prefix `1..k` is active at level `λ = (factor·r + Γ_k)/Λ_k`
//! (factor 2 for marginal costs, 1 for latencies) exactly when
//! `b_k <= λ <= b_{k+1}`; a constant link caps the level at its intercept and
//! absorbs the residual flow.

use crate::error::Error;
use crate::model::{Flow, Instance};
use crate::numeric::StableSum;
use crate::piecewise::PiecewiseLatency;
use serde::{Deserialize, Serialize};

/// Relative threshold under which a water-filling residual is attributed to
/// rounding of the breakpoint sums rather than to flow past a jump.
const RESIDUAL_SNAP: f64 = 1e-12;

/// Coefficients of the active prefix at some rate: the common level together
/// with the inverse-slope and intercept-ratio sums that drive the closed
/// forms. `k` is 1-based; `pair_constant` is the quadratic correction
/// `Σ_{i<h<=k} (b_h - b_i)² / (a_h a_i) / (4 Λ_k)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActiveSetCoefficients {
    pub k: usize,
    pub level: f64,
    pub inv_slope_sum: f64,
    pub intercept_ratio_sum: f64,
    pub pair_constant: f64,
}

struct WaterFill {
    flows: Vec<f64>,
    level: f64,
    k: usize,
    constant_active: bool,
}

/// Equalizes `factor·a_i·f_i + b_i` across the active prefix.
fn water_fill(instance: &Instance, rate: f64, factor: f64) -> Result<WaterFill, Error> {
    if rate < 0.0 {
        return Err(Error::NegativeRate(rate));
    }
    if instance.is_empty() {
        if rate > 0.0 {
            return Err(Error::EmptyInstance);
        }
        return Ok(WaterFill { flows: vec![], level: 0.0, k: 0, constant_active: false });
    }

    let links = &instance.links;
    let m = links.len();
    let mut inv_slope = StableSum::default();
    let mut intercept_ratio = StableSum::default();

    for i in 0..m {
        if links[i].is_constant() {
            // the constant link caps the level at its intercept and soaks up
            // whatever the increasing prefix cannot carry at that level
            let level = links[i].b;
            let mut flows = vec![0.0; m];
            let mut routed = StableSum::default();
            for (j, link) in links.iter().take(i).enumerate() {
                let f = ((level - link.b) / (factor * link.a)).max(0.0);
                flows[j] = f;
                routed.add(f);
            }
            flows[i] = (rate - routed.value()).max(0.0);
            return Ok(WaterFill { flows, level, k: i + 1, constant_active: true });
        }

        inv_slope.add(1.0 / links[i].a);
        intercept_ratio.add(links[i].b / links[i].a);
        let level = (factor * rate + intercept_ratio.value()) / inv_slope.value();
        let next_b = links.get(i + 1).map(|l| l.b).unwrap_or(f64::INFINITY);
        if level <= next_b {
            let mut flows = vec![0.0; m];
            for (j, link) in links.iter().take(i + 1).enumerate() {
                flows[j] = ((level - link.b) / (factor * link.a)).max(0.0);
            }
            return Ok(WaterFill { flows, level, k: i + 1, constant_active: false });
        }
    }
    unreachable!("sweep accepts the full prefix when no later intercept bounds the level")
}

/// Minimum-total-latency flow at `rate`: marginal costs `2 a_i f_i + b_i`
/// agree on every used link and no unused link could do better.
pub fn opt_flow(instance: &Instance, rate: f64) -> Result<Flow, Error> {
    let wf = water_fill(instance, rate, 2.0)?;
    Ok(Flow::new(wf.flows, rate))
}

/// Nash flow at `rate`: every used link has the common latency, every unused
/// link's intercept is at least that latency.
pub fn nash_flow(instance: &Instance, rate: f64) -> Result<Flow, Error> {
    let wf = water_fill(instance, rate, 1.0)?;
    Ok(Flow::new(wf.flows, rate))
}

fn coefficients(instance: &Instance, rate: f64, factor: f64) -> Result<ActiveSetCoefficients, Error> {
    let wf = water_fill(instance, rate, factor)?;
    let prefix = if wf.constant_active { wf.k - 1 } else { wf.k };
    let links = &instance.links[..prefix];
    let mut inv_slope = StableSum::default();
    let mut intercept_ratio = StableSum::default();
    for link in links {
        inv_slope.add(1.0 / link.a);
        intercept_ratio.add(link.b / link.a);
    }
    let mut pairs = StableSum::default();
    for h in 1..links.len() {
        for i in 0..h {
            let d = links[h].b - links[i].b;
            pairs.add(d * d / (links[h].a * links[i].a));
        }
    }
    let inv = inv_slope.value();
    Ok(ActiveSetCoefficients {
        k: wf.k,
        level: wf.level,
        inv_slope_sum: inv,
        intercept_ratio_sum: intercept_ratio.value(),
        pair_constant: if inv > 0.0 { pairs.value() / (4.0 * inv) } else { 0.0 },
    })
}

/// Active-prefix coefficients of the optimal flow (`level` is the common
/// marginal cost, or the constant link's intercept when that link is active).
pub fn opt_coefficients(instance: &Instance, rate: f64) -> Result<ActiveSetCoefficients, Error> {
    coefficients(instance, rate, 2.0)
}

/// Active-prefix coefficients of the Nash flow (`level` is the common latency).
pub fn nash_coefficients(instance: &Instance, rate: f64) -> Result<ActiveSetCoefficients, Error> {
    coefficients(instance, rate, 1.0)
}

/// Optimal cost from the quadratic closed form
/// `(r² + r Γ_k)/Λ_k − C_k` over the active prefix at `rate`. Fails when the
/// constant link is active, where the quadratic form does not apply.
pub fn opt_cost_closed_form(instance: &Instance, rate: f64) -> Result<f64, Error> {
    let wf = water_fill(instance, rate, 2.0)?;
    if wf.constant_active && wf.flows[wf.k - 1] > 0.0 {
        return Err(Error::ConstantLinkActive);
    }
    if rate == 0.0 {
        return Ok(0.0);
    }
    let coeff = opt_coefficients(instance, rate)?;
    Ok((rate * rate + rate * coeff.intercept_ratio_sum) / coeff.inv_slope_sum
        - coeff.pair_constant)
}

/// Total latency cost `Σ f_i · ℓ̂_i(f_i)` under the given latencies. Flow
/// strictly inside a flat segment pays the flat level; flow exactly at a jump
/// point pays the left value.
pub fn flow_cost(latencies: &[PiecewiseLatency], flow: &Flow) -> f64 {
    let mut total = StableSum::default();
    for (lat, &f) in latencies.iter().zip(flow.per_link.iter()) {
        if f > 0.0 {
            total.add(f * lat.eval(f));
        }
    }
    total.value()
}

/// Total latency cost under the original affine links.
pub fn flow_cost_affine(instance: &Instance, flow: &Flow) -> f64 {
    let mut total = StableSum::default();
    for (link, &f) in instance.links.iter().zip(flow.per_link.iter()) {
        if f > 0.0 {
            total.add(f * link.eval(f));
        }
    }
    total.value()
}

/// How flat segments are treated by the equilibrium solver. Mechanisms built
/// with an explicit ramp slope have no flat segments, so both modes run the
/// same sweep; the mode documents which construction produced the inputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum UeMode {
    /// Jump segments are exactly flat; residual flow at the common level is
    /// split across flat links in proportion to their flat lengths (a
    /// constant link absorbs everything, matching the vanishing-slope limit).
    Limit,
    /// Jump segments carry a small positive slope, so the common level is
    /// interior to a segment and no residual arises.
    Epsilon,
}

/// User equilibrium under piecewise-affine latencies: returns the flow and
/// the common level `λ*`. For every used link `i` and any link `j`,
/// `ℓ̂_i(f_i) <= liminf_{ε↓0} ℓ̂_j(f_j + ε)`.
///
/// The solver inverts each latency into `x_i(λ) = sup{x : ℓ̂_i(x) <= λ}`,
/// sweeps the finitely many candidate levels of `T(λ) = Σ x_i(λ)` exactly,
/// and solves the affine segment containing the target rate in closed form.
pub fn ue_flow(
    latencies: &[PiecewiseLatency],
    rate: f64,
    _mode: UeMode,
) -> Result<(Flow, f64), Error> {
    if rate < 0.0 {
        return Err(Error::NegativeRate(rate));
    }
    if latencies.is_empty() {
        if rate > 0.0 {
            return Err(Error::EmptyInstance);
        }
        return Ok((Flow::zero(0), 0.0));
    }
    let entry_level = latencies.iter().map(|l| l.eval(0.0)).fold(f64::INFINITY, f64::min);
    if rate == 0.0 {
        return Ok((Flow::zero(latencies.len()), entry_level));
    }

    let mut levels: Vec<f64> = latencies.iter().flat_map(|l| l.candidate_levels()).collect();
    levels.sort_by(f64::total_cmp);
    levels.dedup();

    let total_at = |level: f64| -> f64 { latencies.iter().map(|l| l.inverse_sup(level)).sum() };
    let total_before = |level: f64| -> f64 {
        latencies.iter().map(|l| l.inverse_sup_strict(level)).sum()
    };

    let j = levels.partition_point(|&c| total_at(c) < rate);
    if j == levels.len() {
        // beyond every breakpoint all links ride their unbounded tails
        let last = *levels.last().expect("nonempty");
        let reached = total_at(last);
        let slope: f64 = latencies
            .iter()
            .map(|l| {
                let s = l.segments().last().expect("nonempty").slope;
                if s > 0.0 {
                    1.0 / s
                } else {
                    0.0
                }
            })
            .sum();
        debug_assert!(slope > 0.0, "an unreachable rate implies a constant tail, caught earlier");
        let level = last + (rate - reached) / slope;
        let flows: Vec<f64> = latencies.iter().map(|l| l.inverse_sup(level)).collect();
        return Ok((Flow::new(flows, rate), level));
    }

    let cap = levels[j];
    let below_cap = total_before(cap);
    if j > 0 {
        let prev = levels[j - 1];
        let at_prev = total_at(prev);
        // T is affine and continuous on (prev, cap); interpolate exactly
        if below_cap >= rate && below_cap > at_prev {
            let level = prev + (rate - at_prev) * (cap - prev) / (below_cap - at_prev);
            if level < cap {
                let flows: Vec<f64> = latencies.iter().map(|l| l.inverse_sup(level)).collect();
                return Ok((Flow::new(flows, rate), level));
            }
        }
    }

    // the target sits in the jump of T at `cap`: pin non-flat links at their
    // inverse and spread the residual over the links flat at this level
    let base: Vec<f64> = latencies.iter().map(|l| l.inverse_sup_strict(cap)).collect();
    let tops: Vec<f64> = latencies.iter().map(|l| l.inverse_sup(cap)).collect();
    let mut residual = rate - base.iter().sum::<f64>();
    if residual < RESIDUAL_SNAP * rate.abs().max(1.0) {
        residual = 0.0;
    }
    let mut flows = base;
    if residual > 0.0 {
        if let Some(i) = (0..flows.len()).find(|&i| tops[i].is_infinite()) {
            flows[i] += residual;
        } else {
            let gaps: Vec<f64> = flows.iter().zip(&tops).map(|(b, t)| (t - b).max(0.0)).collect();
            let total_gap: f64 = gaps.iter().sum();
            if total_gap > 0.0 {
                let share = (residual / total_gap).min(1.0);
                for (f, gap) in flows.iter_mut().zip(&gaps) {
                    *f += gap * share;
                }
            }
        }
    }
    Ok((Flow::new(flows, rate), cap))
}
