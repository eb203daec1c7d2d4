//! Quantum federated learning on an exact state-vector simulator.
//!
//! Variational classifiers (amplitude encoding, RY/RX layers, linear CNOT
//! chain) are trained on non-IID client partitions and merged on a server
//! by weighted averaging, server-side Adam, or Fisher-weighted aggregation
//! with threshold substitution.

// `!(x > 0.0)` style checks are there to reject NaN as well
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dataio;
pub mod fedcore;
pub mod oracle;
pub mod qsim;
pub mod runner;
pub mod seed;
pub mod vqc;
