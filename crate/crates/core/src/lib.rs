//! Desk-scale laboratory for datacenter fault localization on Clos fabrics.
//!
//! The crate simulates ECMP-routed TCP flows over a parameterized Clos
//! topology with injected per-link drop rates, then localizes the failed
//! links three ways:
//!
//! * a vote-based analysis that tallies `1/h` blame per link of each
//!   retransmitting flow and iteratively flags the most-voted links,
//! * covering-program baselines (greedy set cover plus exact binary and
//!   integer programs solved natively at desk scale),
//! * closed-form calculators for the traceroute-budget and ranking-fidelity
//!   bounds, with Monte Carlo verifiers tying them back to the simulator.
//!
//! [`experiment`] drives reproducible sweeps and emits CSV/SVG artifacts;
//! the `closlab` binary exposes it on the command line.

pub mod cover;
pub mod experiment;
pub mod plot;
pub mod routing;
pub mod scalar;
pub mod simulator;
pub mod theory;
pub mod topology;
pub mod voting;

pub use scalar::Scalar;

/// Default floating-point scalar used by the simulator and experiments.
pub type Real = f64;

/// Arbitrary-precision rational scalar for exact-arithmetic checks.
pub type Exact = num::BigRational;
