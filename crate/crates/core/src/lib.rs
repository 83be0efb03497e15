//! Testbed for oracle-complexity lower bounds in finite-sum smooth strongly
//! convex optimization: hard instances, counted second-order oracles,
//! analytic envelopes, span/progress analysis, and optimizer races.

pub mod block;
pub mod bounds;
pub mod chain;
pub mod error;
pub mod flattened;
pub mod harness;
pub mod optimizers;
pub mod oracle;
pub mod span;

pub use bounds::{
    chain_envelope, condition_number, q_factor, resisting_envelope, ProblemParams, RateConstants,
};
pub use error::{Error, Result};
pub use oracle::{CallLedger, FiniteSum, OracleResponse, StructuredHessian};
