//! Conversion-oriented search-filter recommendation.
//!
//! A search filter (facet) is a binary refinement criterion a guest can apply
//! to a marketplace search. This crate models the full offline loop around
//! recommending such filters for booking conversions rather than engagement:
//!
//! - [`catalog`] / [`query`] / [`events`]: domain types and log record formats.
//! - [`synth`]: a synthetic marketplace with planted per-segment filter
//!   utilities, used as ground truth for everything downstream.
//! - [`attribution`]: retrospective booking attribution that turns raw search
//!   and booking logs into labeled training examples.
//! - [`features`]: feature schema fitting and query encoding (embedding
//!   indices, z-scored continuous features, sin/cos cyclical pairs).
//! - [`model`]: a small multi-task network (shared trunk, per-filter
//!   engagement head, conversion head) trained from scratch with manual
//!   backprop and Adam, plus finite-difference gradient verification.
//! - [`baselines`]: filter-conversion-rate statistics and the "necessity"
//!   heuristic used as comparison predictors.
//! - [`ranking`]: the serving-time score `p_engage * p_book^N` with inventory
//!   post-processing.
//! - [`eval`]: PR-AUC, predictor comparison, feature ablation and simulated
//!   A/B tests against the synthetic ground truth.

pub mod attribution;
pub mod baselines;
pub mod catalog;
pub mod error;
pub mod eval;
pub mod events;
pub mod features;
pub mod io;
pub mod model;
pub mod query;
pub mod ranking;
pub mod rng;
pub mod synth;

pub use catalog::{FilterCatalog, FilterCategory, FilterVector};
pub use error::CoreError;
pub use events::{BookingEvent, SearchEvent, TrainingExample};
pub use query::Query;
