//! Piecewise-affine latency functions with upward jumps and flat segments.
//!
//! A [`PiecewiseLatency`] is a nondecreasing, lower-semicontinuous function on
//! `[0, ∞)` stored as a list of breakpoints. Each breakpoint opens a segment
//! `value_at_start + slope * (x - x_start)`; the last segment is unbounded.
//! Lower semicontinuity means that at an upward jump the function value is the
//! *left* value — the segment value only applies strictly past the jump point.

use crate::error::Error;
use serde::{Deserialize, Serialize};

/// One affine segment, open-ended until the next breakpoint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub x_start: f64,
    pub value_at_start: f64,
    pub slope: f64,
}

/// Nondecreasing, lower-semicontinuous piecewise-affine latency on `[0, ∞)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PiecewiseLatency {
    breakpoints: Vec<Segment>,
}

impl PiecewiseLatency {
    /// Builds a latency from breakpoints, validating the representation.
    pub fn new(breakpoints: Vec<Segment>) -> Result<Self, Error> {
        let lat = PiecewiseLatency { breakpoints };
        lat.validate()?;
        Ok(lat)
    }

    /// Single-segment latency `a*x + b`.
    pub fn affine(a: f64, b: f64) -> Self {
        PiecewiseLatency {
            breakpoints: vec![Segment {
                x_start: 0.0,
                value_at_start: b,
                slope: a,
            }],
        }
    }

    pub fn segments(&self) -> &[Segment] {
        &self.breakpoints
    }

    fn validate(&self) -> Result<(), Error> {
        if self.breakpoints.is_empty() {
            return Err(Error::MalformedPiecewise("no segments".into()));
        }
        if self.breakpoints[0].x_start != 0.0 {
            return Err(Error::MalformedPiecewise("first segment must start at 0".into()));
        }
        for (i, seg) in self.breakpoints.iter().enumerate() {
            if !seg.x_start.is_finite() || !seg.value_at_start.is_finite() || !seg.slope.is_finite()
            {
                return Err(Error::MalformedPiecewise(format!("segment {i} not finite")));
            }
            if seg.slope < 0.0 {
                return Err(Error::MalformedPiecewise(format!("segment {i} decreasing")));
            }
            if i > 0 {
                let prev = &self.breakpoints[i - 1];
                if seg.x_start <= prev.x_start {
                    return Err(Error::MalformedPiecewise(format!(
                        "segment {i} start {} not past previous {}",
                        seg.x_start, prev.x_start
                    )));
                }
                let left = prev.value_at_start + prev.slope * (seg.x_start - prev.x_start);
                // only upward jumps keep the function nondecreasing
                if seg.value_at_start < left - 1e-9 * left.abs().max(1.0) {
                    return Err(Error::MalformedPiecewise(format!(
                        "segment {i} drops from {} to {}",
                        left, seg.value_at_start
                    )));
                }
            }
        }
        Ok(())
    }

    fn segment_index(&self, x: f64) -> usize {
        // last segment whose start is <= x; x >= 0 so index 0 always qualifies
        self.breakpoints.partition_point(|s| s.x_start <= x).saturating_sub(1)
    }

    fn segment_end(&self, idx: usize) -> f64 {
        self.breakpoints
            .get(idx + 1)
            .map(|s| s.x_start)
            .unwrap_or(f64::INFINITY)
    }

    /// Function value at `x`. At a jump point this is the left value.
    pub fn eval(&self, x: f64) -> f64 {
        let i = self.segment_index(x);
        let seg = &self.breakpoints[i];
        if x == seg.x_start && i > 0 {
            let prev = &self.breakpoints[i - 1];
            let left = prev.value_at_start + prev.slope * (x - prev.x_start);
            return left.min(seg.value_at_start);
        }
        seg.value_at_start + seg.slope * (x - seg.x_start)
    }

    /// Limit of the function from the right at `x` (`liminf` over `x + ε`).
    pub fn right_limit(&self, x: f64) -> f64 {
        let i = self.segment_index(x);
        let seg = &self.breakpoints[i];
        seg.value_at_start + seg.slope * (x - seg.x_start)
    }

    /// Largest flow whose latency does not exceed `level`:
    /// `sup { x : eval(x) <= level }`, 0 when even the entry latency is above.
    /// Returns `f64::INFINITY` when a constant tail stays at or below `level`.
    pub fn inverse_sup(&self, level: f64) -> f64 {
        for (i, seg) in self.breakpoints.iter().enumerate().rev() {
            if seg.value_at_start <= level {
                let end = self.segment_end(i);
                if seg.slope == 0.0 {
                    return end;
                }
                let x = seg.x_start + (level - seg.value_at_start) / seg.slope;
                return x.min(end);
            }
        }
        0.0
    }

    /// Left limit of [`inverse_sup`](Self::inverse_sup):
    /// `sup { x : eval(x) < level }`.
    pub fn inverse_sup_strict(&self, level: f64) -> f64 {
        for (i, seg) in self.breakpoints.iter().enumerate().rev() {
            if seg.value_at_start < level {
                let end = self.segment_end(i);
                if seg.slope == 0.0 {
                    return end;
                }
                let x = seg.x_start + (level - seg.value_at_start) / seg.slope;
                return x.min(end);
            }
        }
        0.0
    }

    /// All latency levels at which the inverse can kink or jump: segment start
    /// values plus left limits at the interior breakpoints.
    pub fn candidate_levels(&self) -> Vec<f64> {
        let mut levels = Vec::with_capacity(2 * self.breakpoints.len());
        for (i, seg) in self.breakpoints.iter().enumerate() {
            levels.push(seg.value_at_start);
            if i > 0 {
                let prev = &self.breakpoints[i - 1];
                levels.push(prev.value_at_start + prev.slope * (seg.x_start - prev.x_start));
            }
        }
        levels
    }

    /// Upward discontinuities as `(x, left value, right value)`.
    pub fn jumps(&self) -> Vec<(f64, f64, f64)> {
        let mut out = Vec::new();
        for i in 1..self.breakpoints.len() {
            let prev = &self.breakpoints[i - 1];
            let seg = &self.breakpoints[i];
            let left = prev.value_at_start + prev.slope * (seg.x_start - prev.x_start);
            if seg.value_at_start > left + 1e-12 * left.abs().max(1.0) {
                out.push((seg.x_start, left, seg.value_at_start));
            }
        }
        out
    }

    /// True when no jump lies in `[lo, hi)`; a jump exactly at `hi` does not
    /// break continuity of the restriction to `[lo, hi]` because the function
    /// takes the left value there.
    pub fn continuous_on(&self, lo: f64, hi: f64) -> bool {
        self.jumps().iter().all(|&(x, _, _)| x < lo || x >= hi)
    }

    /// Largest slope over all segments.
    pub fn max_slope(&self) -> f64 {
        self.breakpoints.iter().map(|s| s.slope).fold(0.0, f64::max)
    }

    /// Checks pointwise domination `self(x) >= other(x)` for every `x >= 0`,
    /// where `other` is affine. Both functions are affine between this
    /// function's breakpoints, so checking breakpoints, their right limits,
    /// and the tail slope suffices.
    pub fn dominates_affine(&self, a: f64, b: f64, tol: f64) -> bool {
        for (i, seg) in self.breakpoints.iter().enumerate() {
            let x = seg.x_start;
            if self.eval(x) < a * x + b - tol || self.right_limit(x) < a * x + b - tol {
                return false;
            }
            let end = self.segment_end(i);
            if end.is_finite() {
                let left = seg.value_at_start + seg.slope * (end - seg.x_start);
                if left < a * end + b - tol {
                    return false;
                }
            } else if seg.slope < a {
                // unbounded tail eventually falls behind unless it starts above forever
                let gap = seg.value_at_start - (a * seg.x_start + b);
                if gap.is_finite() && a > seg.slope {
                    return false;
                }
            }
        }
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn min_charge_link() -> PiecewiseLatency {
        // ℓ(x) = x modified to jump to 1.75 past 1.25, rejoining at 1.75
        PiecewiseLatency::new(vec![
            Segment { x_start: 0.0, value_at_start: 0.0, slope: 1.0 },
            Segment { x_start: 1.25, value_at_start: 1.75, slope: 0.0 },
            Segment { x_start: 1.75, value_at_start: 1.75, slope: 1.0 },
        ])
        .unwrap()
    }

    #[test]
    fn eval_takes_left_value_at_jump() {
        let lat = min_charge_link();
        assert_eq!(lat.eval(1.25), 1.25);
        assert_eq!(lat.right_limit(1.25), 1.75);
        assert_eq!(lat.eval(1.5), 1.75);
        assert_eq!(lat.eval(2.0), 2.0);
        assert_eq!(lat.eval(0.5), 0.5);
    }

    #[test]
    fn inverse_sup_handles_flats_and_jumps() {
        let lat = min_charge_link();
        // below the jump level the cap binds
        assert_eq!(lat.inverse_sup(1.5), 1.25);
        // at the flat level the whole interval qualifies
        assert_eq!(lat.inverse_sup(1.75), 1.75);
        assert_eq!(lat.inverse_sup_strict(1.75), 1.25);
        assert_eq!(lat.inverse_sup(2.5), 2.5);
        assert_eq!(lat.inverse_sup(-1.0), 0.0);
    }

    #[test]
    fn constant_link_has_unbounded_inverse() {
        let lat = PiecewiseLatency::affine(0.0, 1.0);
        assert_eq!(lat.inverse_sup(1.0), f64::INFINITY);
        assert_eq!(lat.inverse_sup_strict(1.0), 0.0);
        assert_eq!(lat.inverse_sup(0.5), 0.0);
    }

    #[test]
    fn jumps_and_continuity_ranges() {
        let lat = min_charge_link();
        let jumps = lat.jumps();
        assert_eq!(jumps.len(), 1);
        assert_eq!(jumps[0].0, 1.25);
        // jump at the right endpoint of the range is allowed
        assert!(lat.continuous_on(0.0, 1.25));
        assert!(!lat.continuous_on(1.25, 1.75));
        assert!(lat.continuous_on(1.75, 3.0));
    }

    #[test]
    fn rejects_decreasing_and_misordered_segments() {
        assert!(PiecewiseLatency::new(vec![Segment {
            x_start: 0.0,
            value_at_start: 1.0,
            slope: -0.5,
        }])
        .is_err());
        assert!(PiecewiseLatency::new(vec![
            Segment { x_start: 0.0, value_at_start: 1.0, slope: 1.0 },
            Segment { x_start: 1.0, value_at_start: 0.5, slope: 1.0 },
        ])
        .is_err());
        assert!(PiecewiseLatency::new(vec![
            Segment { x_start: 0.5, value_at_start: 0.0, slope: 1.0 },
        ])
        .is_err());
    }

    #[test]
    fn dominates_its_own_base() {
        let lat = min_charge_link();
        assert!(lat.dominates_affine(1.0, 0.0, 1e-12));
        assert!(!lat.dominates_affine(2.0, 0.0, 1e-12));
    }
}
