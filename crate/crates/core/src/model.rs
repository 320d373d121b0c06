//! Network model: affine links, instances, flows, and the loss-free
//! normalizations (merging equal-intercept links, dropping dominated constant
//! links, sorting by intercept, and the two-link rescaling).

use crate::error::Error;
use crate::piecewise::PiecewiseLatency;
use serde::{Deserialize, Serialize};

/// Intercepts closer than this are treated as equal and merged.
pub const INTERCEPT_MERGE_TOL: f64 = 1e-12;

/// One link's latency `a*x + b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffineLatency {
    /// Latency per unit flow, `>= 0`.
    pub a: f64,
    /// Latency at zero flow, `>= 0`.
    pub b: f64,
}

impl AffineLatency {
    pub fn new(a: f64, b: f64) -> Self {
        AffineLatency { a, b }
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.a * x + self.b
    }

    pub fn is_constant(&self) -> bool {
        self.a == 0.0
    }

    /// Parallel composition of two links with a shared intercept: the unique
    /// single link whose equilibria and optima carry the combined flow.
    fn merge(&self, other: &AffineLatency) -> AffineLatency {
        let a = if self.a == 0.0 || other.a == 0.0 {
            0.0
        } else {
            self.a * other.a / (self.a + other.a)
        };
        AffineLatency { a, b: self.b.min(other.b) }
    }
}

/// A parallel-link network, one affine latency per link.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub links: Vec<AffineLatency>,
}

/// Validation findings for an instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Violation {
    EmptyInstance,
    NegativeSlope { link: usize, a: f64 },
    NegativeIntercept { link: usize, b: f64 },
    NonFinite { link: usize },
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Violation::EmptyInstance => write!(f, "instance has no links"),
            Violation::NegativeSlope { link, a } => write!(f, "link {link}: negative slope {a}"),
            Violation::NegativeIntercept { link, b } => {
                write!(f, "link {link}: negative intercept {b}")
            }
            Violation::NonFinite { link } => write!(f, "link {link}: non-finite coefficient"),
        }
    }
}

/// How normalization rearranged the links, so flows on the normalized network
/// can be expressed on the original one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergeLog {
    /// For each output link, the original link indices folded into it.
    pub groups: Vec<Vec<usize>>,
    /// Original indices of constant links dropped because a cheaper constant
    /// link exists; they never carry flow.
    pub dropped: Vec<usize>,
    pub original_len: usize,
}

impl MergeLog {
    /// Splits a flow on the normalized links back onto the original links.
    /// Within a merged group the split equalizes latencies, which for affine
    /// links means flow inversely proportional to the slopes; a constant link
    /// in the group absorbs everything.
    pub fn unmerge(&self, instance: &Instance, flow: &Flow) -> Flow {
        let mut per_link = vec![0.0; self.original_len];
        for (group, &amount) in self.groups.iter().zip(flow.per_link.iter()) {
            if group.len() == 1 {
                per_link[group[0]] = amount;
                continue;
            }
            if let Some(&c) = group.iter().find(|&&i| instance.links[i].is_constant()) {
                per_link[c] = amount;
                continue;
            }
            let weight: f64 = group.iter().map(|&i| 1.0 / instance.links[i].a).sum();
            for &i in group {
                per_link[i] = amount * (1.0 / instance.links[i].a) / weight;
            }
        }
        Flow { per_link, rate: flow.rate }
    }
}

impl Instance {
    pub fn new(links: Vec<AffineLatency>) -> Self {
        Instance { links }
    }

    pub fn from_pairs(pairs: &[(f64, f64)]) -> Self {
        Instance { links: pairs.iter().map(|&(a, b)| AffineLatency::new(a, b)).collect() }
    }

    pub fn len(&self) -> usize {
        self.links.len()
    }

    pub fn is_empty(&self) -> bool {
        self.links.is_empty()
    }

    /// Collects every invariant breach; an empty list means the instance is valid.
    pub fn validate(&self) -> Vec<Violation> {
        let mut violations = Vec::new();
        if self.links.is_empty() {
            violations.push(Violation::EmptyInstance);
        }
        for (i, link) in self.links.iter().enumerate() {
            if !link.a.is_finite() || !link.b.is_finite() {
                violations.push(Violation::NonFinite { link: i });
                continue;
            }
            if link.a < 0.0 {
                violations.push(Violation::NegativeSlope { link: i, a: link.a });
            }
            if link.b < 0.0 {
                violations.push(Violation::NegativeIntercept { link: i, b: link.b });
            }
        }
        violations
    }

    pub fn ensure_valid(&self) -> Result<(), Error> {
        let violations = self.validate();
        if violations.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidInstance(violations))
        }
    }

    /// Whether the links are already in normalized shape: intercepts strictly
    /// increasing and at most one constant link.
    pub fn is_normalized(&self) -> bool {
        let mut constants = 0;
        for (i, link) in self.links.iter().enumerate() {
            if link.is_constant() {
                constants += 1;
            }
            if i > 0 && link.b <= self.links[i - 1].b + INTERCEPT_MERGE_TOL {
                return false;
            }
        }
        constants <= 1
    }

    /// Merges equal-intercept links, keeps only the cheapest constant link,
    /// and sorts by intercept. Equilibrium and optimal costs are preserved.
    pub fn normalize(&self) -> Result<(Instance, MergeLog), Error> {
        self.ensure_valid()?;

        let mut order: Vec<usize> = (0..self.links.len()).collect();
        order.sort_by(|&i, &j| {
            self.links[i]
                .b
                .total_cmp(&self.links[j].b)
                .then_with(|| self.links[i].a.total_cmp(&self.links[j].a))
                .then(i.cmp(&j))
        });

        // fold runs of (near-)equal intercepts into one link each
        let mut merged: Vec<(AffineLatency, Vec<usize>)> = Vec::new();
        for idx in order {
            let link = self.links[idx];
            match merged.last_mut() {
                Some((acc, group)) if (link.b - acc.b).abs() <= INTERCEPT_MERGE_TOL => {
                    *acc = acc.merge(&link);
                    group.push(idx);
                }
                _ => merged.push((link, vec![idx])),
            }
        }

        // the cheapest constant link undercuts every later constant link
        let mut links = Vec::with_capacity(merged.len());
        let mut groups = Vec::with_capacity(merged.len());
        let mut dropped = Vec::new();
        let mut constant_seen = false;
        for (link, group) in merged {
            if link.is_constant() && constant_seen {
                dropped.extend(group);
                continue;
            }
            constant_seen |= link.is_constant();
            links.push(link);
            groups.push(group);
        }

        Ok((
            Instance { links },
            MergeLog { groups, dropped, original_len: self.links.len() },
        ))
    }

    /// Rescales a two-link instance to `ℓ₁(x) = x`, `ℓ₂(x) = a x + b` with
    /// `a = a₂/a₁`, `b = (b₂-b₁)/a₁`. Optimal and Nash flow vectors are
    /// identical on both instances.
    pub fn normalize_two_link(&self) -> Result<Instance, Error> {
        if self.links.len() != 2 {
            return Err(Error::NotTwoLinks(self.links.len()));
        }
        self.ensure_valid()?;
        let mut links = self.links.clone();
        if links[0].b > links[1].b {
            links.swap(0, 1);
        }
        let (first, second) = (links[0], links[1]);
        if first.a == 0.0 {
            return Err(Error::ZeroSlopeRescale);
        }
        Ok(Instance {
            links: vec![
                AffineLatency::new(1.0, 0.0),
                AffineLatency::new(second.a / first.a, (second.b - first.b) / first.a),
            ],
        })
    }

    /// The links as degenerate piecewise latencies.
    pub fn to_piecewise(&self) -> Vec<PiecewiseLatency> {
        self.links.iter().map(|l| PiecewiseLatency::affine(l.a, l.b)).collect()
    }

    pub fn from_json(text: &str) -> Result<Instance, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("instance serializes")
    }
}

/// Per-link flow amounts with their total rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Flow {
    pub per_link: Vec<f64>,
    pub rate: f64,
}

impl Flow {
    pub fn new(per_link: Vec<f64>, rate: f64) -> Self {
        Flow { per_link, rate }
    }

    pub fn zero(links: usize) -> Self {
        Flow { per_link: vec![0.0; links], rate: 0.0 }
    }

    /// Nonnegative entries summing to the rate within `1e-9`.
    pub fn is_consistent(&self) -> bool {
        self.per_link.iter().all(|&f| f >= 0.0)
            && (self.per_link.iter().sum::<f64>() - self.rate).abs()
                <= 1e-9 * self.rate.abs().max(1.0)
    }

    /// Index (1-based) of the last link carrying positive flow.
    pub fn last_used_link(&self) -> Option<usize> {
        self.per_link.iter().rposition(|&f| f > 0.0).map(|i| i + 1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validate_flags_breaches() {
        assert!(Instance::from_pairs(&[(1.0, 0.0), (1.0, 1.0)]).validate().is_empty());
        let v = Instance::from_pairs(&[(-1.0, 0.0)]).validate();
        assert_eq!(v, vec![Violation::NegativeSlope { link: 0, a: -1.0 }]);
        assert_eq!(Instance::from_pairs(&[]).validate(), vec![Violation::EmptyInstance]);
    }

    #[test]
    fn normalize_merges_equal_intercepts() {
        let (norm, log) = Instance::from_pairs(&[(1.0, 1.0), (1.0, 1.0)]).normalize().unwrap();
        assert_eq!(norm.links, vec![AffineLatency::new(0.5, 1.0)]);
        assert_eq!(log.groups, vec![vec![0, 1]]);
        assert!(log.dropped.is_empty());
    }

    #[test]
    fn normalize_keeps_sorted_instances() {
        let inst = Instance::from_pairs(&[(1.0, 0.0), (1.0, 1.0)]);
        let (norm, _) = inst.normalize().unwrap();
        assert_eq!(norm, inst);
    }

    #[test]
    fn normalize_keeps_only_cheapest_constant() {
        let (norm, log) =
            Instance::from_pairs(&[(0.0, 2.0), (0.0, 1.0), (1.0, 0.0)]).normalize().unwrap();
        assert_eq!(norm.links, vec![AffineLatency::new(1.0, 0.0), AffineLatency::new(0.0, 1.0)]);
        assert_eq!(log.dropped, vec![0]);
        assert_eq!(log.groups, vec![vec![2], vec![1]]);
    }

    #[test]
    fn normalize_is_idempotent() {
        let inst = Instance::from_pairs(&[(2.0, 3.0), (1.0, 3.0), (0.5, 0.0), (0.0, 4.0)]);
        let (once, _) = inst.normalize().unwrap();
        let (twice, _) = once.normalize().unwrap();
        assert_eq!(once, twice);
        assert!(once.is_normalized());
    }

    #[test]
    fn two_link_rescale_examples() {
        let got = Instance::from_pairs(&[(2.0, 1.0), (4.0, 3.0)]).normalize_two_link().unwrap();
        assert_eq!(got, Instance::from_pairs(&[(1.0, 0.0), (2.0, 1.0)]));

        let identity = Instance::from_pairs(&[(1.0, 0.0), (1.0, 1.0)]);
        assert_eq!(identity.normalize_two_link().unwrap(), identity);

        let got = Instance::from_pairs(&[(1.0, 2.0), (3.0, 2.0)]).normalize_two_link().unwrap();
        assert_eq!(got, Instance::from_pairs(&[(1.0, 0.0), (3.0, 0.0)]));

        assert!(matches!(
            Instance::from_pairs(&[(0.0, 0.0), (1.0, 1.0)]).normalize_two_link(),
            Err(Error::ZeroSlopeRescale)
        ));
    }

    #[test]
    fn unmerge_splits_inverse_to_slopes() {
        let inst = Instance::from_pairs(&[(1.0, 1.0), (3.0, 1.0)]);
        let (norm, log) = inst.normalize().unwrap();
        assert_eq!(norm.links.len(), 1);
        let back = log.unmerge(&inst, &Flow::new(vec![4.0], 4.0));
        // latencies equalize: 1*f0 = 3*f1 with f0+f1 = 4
        assert!((back.per_link[0] - 3.0).abs() < 1e-12);
        assert!((back.per_link[1] - 1.0).abs() < 1e-12);
        assert!(back.is_consistent());
    }

    #[test]
    fn instance_json_round_trip() {
        let inst = Instance::from_pairs(&[(1.0, 0.0), (1.0, 1.0)]);
        let text = inst.to_json();
        assert_eq!(text, r#"{"links":[{"a":1.0,"b":0.0},{"a":1.0,"b":1.0}]}"#);
        assert_eq!(Instance::from_json(&text).unwrap(), inst);
    }
}
