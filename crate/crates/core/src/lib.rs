//! Inverse design through piecewise-linear neural surrogate models.
//!
//! A trained ReLU network is encoded exactly as a mixed-integer linear
//! program, so inverse queries (find the input whose prediction is closest in
//! L1 to a target) can be solved with a certificate of global optimality.
//! The crate contains everything needed end to end:
//!
//! * [`network`]: evaluation, input gradients and the network file format;
//! * [`milp`]: a generic MILP model with a simplex/branch-and-bound solver;
//! * [`bounds`]: interval and MILP-based preactivation bounds;
//! * [`encoder`]: the big-M encoding of inversion, selection, integer-design
//!   and robustness queries;
//! * [`adjoint`]: gradient-based inversion and the hybrid coordinator;
//! * [`oracle`]: brute-force references used for validation.

pub mod adjoint;
pub mod bounds;
pub mod encoder;
mod error;
pub mod milp;
pub mod network;
pub mod oracle;
pub mod problem;
pub mod synth;

pub use error::{Error, Result};
pub use network::{Activation, Layer, Matrix, Network};
