//! Synthetic position-auction markets with ROI-constrained autobidders.
//!
//! Datasets come from [`datagen`] on top of a query hierarchy ([`hierarchy`]);
//! [`auction`] runs FPA, GSP and VCG with reserves and user costs; [`bidding`]
//! moves multipliers (uniform update, or per-partition best response);
//! [`engine`] iterates rounds and experiment grids and [`metrics`] scores them.

pub mod auction;
pub mod bidding;
pub mod datagen;
pub mod engine;
pub mod hierarchy;
pub mod metrics;
pub mod rng;
