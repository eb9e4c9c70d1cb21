//! Grid-size tuning for spatiotemporal event prediction.
//!
//! Forecasting models predict event counts per model grid (MGrid) and those
//! counts are spread evenly over smaller homogeneous grids (HGrids) when a
//! consumer needs finer resolution. Two error sources then compete as the
//! partition gets finer:
//!
//! * the model's own error, which grows with the number of model grids
//!   (total is about `n * MAE`), and
//! * the expression error of spreading a grid's count evenly over cells
//!   whose true rates are uneven, which shrinks as grids get smaller.
//!
//! Their sum bounds the real per-cell error from above, and this crate
//! computes both sides analytically from historical data, then searches for
//! the partition count `n` minimizing the bound.
//!
//! # Quick start
//!
//! ```
//! use gridopt::{
//!     dataset::EventDataset,
//!     geometry::SpatialExtent,
//!     prediction::NoisyOraclePredictor,
//!     synth,
//!     timeslot::{DayFilter, TimeSlotSpec},
//!     tuner::{self, PredictorFactory, UpperBoundEvaluator},
//! };
//!
//! // a small synthetic city: 32x32 reference cells, uniform inside 4x4 blocks
//! let extent = SpatialExtent::new(0.0, 1.0, 0.0, 1.0).unwrap();
//! let spec = TimeSlotSpec::new(30, DayFilter::All, 30, 0).unwrap();
//! let alpha = synth::block_alpha_field(32, 4, 0.5, 4.0, 16, 7).unwrap();
//! let events = synth::events_from_alpha(&alpha, &extent, &spec, 0, 40, 7);
//! let data = EventDataset::new(events, extent, spec, 30, 16).unwrap();
//!
//! let factory = |_side: u32| -> Box<dyn gridopt::prediction::Predictor> {
//!     Box::new(NoisyOraclePredictor::new(1.0, 7))
//! };
//! let mut eval = UpperBoundEvaluator::new(&data, 32, 60, Box::new(factory));
//! let trace = tuner::ternary_search(&mut eval).unwrap();
//! assert!(trace.chosen_side >= 1 && trace.chosen_side <= 32);
//! ```
//!
//! The `examples/` directory walks through each capability: expression-error
//! engines, unevenness scans, error decomposition on held-out data, and the
//! search methods. A thin `gridopt` binary exposes the same pipeline as
//! subcommands (`ingest`, `alpha`, `dalpha`, `ee`, `eval`, `tune`, `synth`).

pub mod dataset;
pub mod error;
pub mod evaluation;
pub mod expression;
pub mod field;
pub mod geometry;
pub mod ingest;
pub mod io;
pub mod numeric;
pub mod prediction;
pub mod rng;
pub mod synth;
pub mod timeslot;
pub mod tuner;
pub mod uniformity;

pub use error::{Error, Result};
