//! Flows, equilibria, and prediction-augmented coordination mechanisms for
//! non-atomic congestion games on parallel-link networks with affine
//! latencies.
//!
//! The crate models a two-terminal network of `m` parallel links with
//! latencies `ℓ_i(x) = a_i x + b_i`, computes optimal and Nash (Wardrop)
//! flows exactly by prefix water-filling, and builds coordination mechanisms
//! that raise selected latencies above a demand prediction's optimal shares
//! so that accurate predictions induce the optimal flow while wildly wrong
//! ones stay within proven cost factors. Equilibria of the modified —
//! discontinuous but lower-semicontinuous — latencies are solved by an exact
//! breakpoint sweep. A brute-force oracle validates both solvers on small
//! instances.
//!
//! Everything is pure and immutable; sweeps parallelize over rates behind
//! the `parallel` feature (enabled by default).

pub mod analysis;
mod error;
pub mod mechanisms;
pub mod model;
mod numeric;
pub mod oracle;
pub mod par;
pub mod piecewise;
pub mod solvers;

pub use error::Error;
pub use mechanisms::{
    build_constant, build_error_tolerant, build_min_charge, Mechanism, MechanismKind,
    MechanismMode,
};
pub use model::{AffineLatency, Flow, Instance, MergeLog, Violation};
pub use piecewise::{PiecewiseLatency, Segment};
pub use solvers::{
    flow_cost, flow_cost_affine, nash_flow, opt_cost_closed_form, opt_flow, ue_flow, UeMode,
};
