//! Bistatic NLOS sensing with 5G NR TDD channel state information.
//!
//! The crate covers the CSI signal model, TDD symbol decimation and window
//! concatenation, periodogram estimation, CFAR detection with NLOS geometry,
//! SVD clutter removal and a synthetic scenario generator.

pub mod clutter;
pub mod detection;
pub mod error;
pub mod io;
pub mod model;
pub mod params;
pub mod periodogram;
pub mod pipeline;
pub mod scenario;
pub mod taper;
pub mod tdd;

pub use error::{Error, Result};
pub use model::{CsiFrame, Scatterer};
pub use params::{performance_bounds, PerformanceBounds, SystemParams, TddConfig, SPEED_OF_LIGHT};
pub use periodogram::Periodogram;
pub use taper::Taper;
