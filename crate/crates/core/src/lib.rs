//! Analytic and Monte Carlo engines for coded multipath fork-join queues.
//!
//! A block of `K` packets is generated every `τ` seconds, encoded into `N`
//! packets and pushed simultaneously onto `N` independent single-server
//! queues with exponential service (`D/M/(K,N)/L`). Each queue keeps at most
//! `L` packets and drops the oldest one when a new packet finds it full.
//! Delivered packets may still be erased on the channel; a block is decoded
//! as soon as any `K` of its packets are received.
//!
//! The crate computes block latency laws, decoding probability and peak age
//! of information (PAoI) laws analytically, and reproduces the same
//! quantities with a discrete-event simulator so the two can be compared.
//!
//! Module map:
//! - [`config`]: system description and validation.
//! - [`math`]: Poisson terms and subset enumeration.
//! - [`grid`]: piecewise laws and their sampled grid representation.
//! - [`path`]: single-queue analysis (Markov chain, drops, delivery laws).
//! - [`block`]: block latency, decoding probability and PAoI laws.
//! - [`window`]: exact short-horizon PAoI for small finite-buffer instances.
//! - [`sim`]: the discrete-event simulator.
//! - [`stats`]: empirical CDFs, KS distance, percentiles.
//! - [`scenario`]: declarative experiment grids and CSV export.

// `!(x > 0.0)` guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod block;
pub mod config;
pub mod error;
pub mod grid;
pub mod math;
pub mod order_stat;
pub mod path;
pub mod scenario;
pub mod sim;
pub mod stats;
pub mod window;

pub use config::{validate_config, QueueCap, SystemConfig};
pub use error::{AnalysisError, ConfigError, Error, Result};
pub use grid::{GridDistribution, GridSpec, PiecewiseLaw};
