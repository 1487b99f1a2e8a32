//! Self-regulating supply-demand simulation library.
//!
//! Models a population of agents whose aggregate electricity demand is steered
//! by a price incentive signal. The crate covers the full feedback loop:
//!
//! - [`signal`]: typed time series (incentive, baseline demand, regulated
//!   demand, provision bounds) plus the reflection/normalization algebra that
//!   turns a price signal into a demand target.
//! - [`provision`]: the two upper-bound reference signals derived from the
//!   incentive signal and the inelastic baseline.
//! - [`metrics`]: response, savings, error and diversity measures used to
//!   score a regulation run.
//! - [`plangen`]: permutation-based generation of alternative demand plans.
//! - [`engine`]: hierarchical bottom-up plan selection over a balanced k-ary
//!   agent tree.
//! - [`ingest`]: data sources, scenario shaping and disaggregation of
//!   aggregate series into per-agent baselines.
//! - [`pipeline`]: end-to-end simulation runs and experiment grids.

pub mod engine;
pub mod error;
pub mod ingest;
pub mod metrics;
pub mod pipeline;
pub mod plangen;
pub mod provision;
pub mod signal;

pub use error::{Error, Result};
