//! Online adaptive kernel support-vector regression for streaming
//! implied-volatility surfaces.
//!
//! The crate fits one implied-volatility surface per quote side
//! (call/put x bid/ask) from a replayed or synthetic option tick stream.
//! Each surface is an epsilon-insensitive kernel SVR trained in the primal
//! by stochastic subgradient steps. Two mechanisms keep the model small and
//! adaptive while the market moves:
//!
//! * **support-vector selection** — a sample whose kernel mapping is poorly
//!   spanned by the current support vectors (low local fitness) always
//!   enters the dictionary; a well-spanned sample that still violates the
//!   epsilon tube replaces the least-contributing support vector instead of
//!   growing the model ([`svr`], [`fvs`]);
//! * **reopening intervals** — the learning-rate clock restarts every fixed
//!   wall-clock interval so the model keeps reacting to fresh quotes, with a
//!   warm-start offset preventing coefficient wipe-out at each restart
//!   ([`ivs`]).
//!
//! Module map:
//!
//! * [`kernel`] — Gaussian/linear kernels, kernel vectors and matrices.
//! * [`mat`] — dense row-major matrix storage shared by the numeric code.
//! * [`fvs`] — the kernel matrix over current support vectors and its
//!   incrementally maintained inverse; the local-fitness statistic.
//! * [`svr`] — dictionaries, learning-rate schedules, and the online update
//!   rules (plain, budgeted, and selection-based).
//! * [`parallel`] — data-parallel batch kernels (grid inference, quadratic
//!   forms, rank-1 updates) plus a serial-vs-parallel benchmark harness.
//! * [`ivs`] — option pricing, implied-volatility inversion, the Dumas
//!   feature map, and the four-learner online loop.
//! * [`data`] — tick/curve file formats, the synthetic scenario generator,
//!   and results persistence.
//! * [`experiments`] — metrics, Welch t-tests, algorithm comparisons, and
//!   hyper-parameter sweeps; backs the `ivsvr` command-line interface.

pub mod data;
pub mod error;
pub mod experiments;
pub mod fvs;
pub mod ivs;
pub mod kernel;
pub mod mat;
pub mod parallel;
pub mod svr;

pub use error::{Error, Result};
