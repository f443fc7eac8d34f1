//! Contractive stochastic approximation with a generalized Moreau envelope
//! as Lyapunov function: norms, the envelope, the finite-sample bound
//! calculus, tabular MDP operators, RL samplers and a Monte Carlo engine.

// `!(x > 0.0)` is used on purpose so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod envelope;
pub mod error;
pub mod harness;
pub mod mdp;
pub mod norms;
pub mod rl;
pub mod sa_engine;

pub use error::{Error, Result};
