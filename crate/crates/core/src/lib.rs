//! Credit-cognisant rewards (CCRs) for turn-based, partially observable
//! cooperative games.
//!
//! The crate bundles everything needed to compare independent learners with
//! and without credit-cognisant rewards:
//!
//! - [`env`]: the turn-based environment abstraction, perspective indexing,
//!   experience tuples and episode traces.
//! - [`hintmatch`] and [`hanabi`]: the two benchmark games.
//! - [`ccr`]: credit-cognisant reward windows and trace conversion.
//! - [`tabular`]: independent Q-learning, its n-step and CCR variants.
//! - [`nn`]: a small dense/LSTM network kernel with Adam.
//! - [`deep`]: replay memories, TD targets and the deep training loops.
//! - [`harness`]: presets, multi-run experiments, evaluation, sweeps, plots.

pub mod ccr;
pub mod deep;
pub mod env;
mod error;
pub mod hanabi;
pub mod harness;
pub mod hintmatch;
pub mod nn;
pub mod par;
pub mod tabular;

pub use error::{Error, Result};
