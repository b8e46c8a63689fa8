//! Synthetic marketplace with planted per-segment filter utilities.
//!
//! The world holds the latent quantities the rest of the system tries to
//! learn: per-segment filter engagement propensities, additive booking-lift
//! per filter, base booking probabilities, listing attributes, and a
//! presentation-bias knob. Because the generative process is known exactly,
//! the booking conversion gain of any filter state is available in closed
//! form and learned models can be scored against it.

mod simulate;
mod world;

pub(crate) use simulate::sample_platform_device;
pub use simulate::{simulate_logs, SimConfig, SimLogs};
pub use world::{
    generate_world, generate_world_with, ground_truth_gain, DestinationModel, MarketplaceWorld,
    QuerySegment, SegmentBands, WorldConfig,
};
