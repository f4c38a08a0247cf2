//! Spatial estimation of mobile spectrum demand.
//!
//! The crate turns operator traffic, site locations and crowd-sourced
//! measurements into a per-cell demand indicator, builds candidate feature
//! layers on the same grid, and trains models that predict demand from those
//! features.

pub mod demand;
pub mod features;
pub mod geo;
pub mod ingest;
pub mod ml;
pub mod pipeline;
pub mod propagation;
pub mod rng;
pub mod synth;
