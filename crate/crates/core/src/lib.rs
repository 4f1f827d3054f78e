//! Decentralized two-task allocation with biased nonlinear opinion dynamics.
//!
//! The crate couples four pieces into one closed loop:
//!
//! * [`nod`]: agents form opinions under the dissensus regime of the
//!   nonlinear opinion dynamics; the sign of an opinion picks a task.
//! * [`consensus`]: Metropolis–Hastings average consensus lets every agent
//!   learn the population split and the average reward from neighbors only.
//! * [`game`] and [`adaptive`]: a 2×2 evolutionary game whose payoff vector
//!   is learned online, a replicator-driven goal split, and an adaptive
//!   scalar bias that steers the split toward the game's mixed Nash point.
//! * [`spectral`]: the linear analysis that predicts at which bias values
//!   each agent's opinion crosses zero.
//!
//! [`harness`] orchestrates the bias-staircase sweep and the repeated
//! population game and exposes the `nodalloc` command line tool.
//!
//! Batch evaluation (many graphs, many seeds) goes through [`batch`], which
//! runs on rayon when the default `parallel` feature is on and falls back
//! to plain iterators otherwise.

pub mod adaptive;
pub mod batch;
pub mod consensus;
pub mod error;
pub mod game;
pub mod graph;
pub mod harness;
pub mod nod;
pub mod pe;
pub mod spectral;

pub use error::{Error, Result};
