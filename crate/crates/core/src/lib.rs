//! Concept-bottleneck forecasting of mixed layer heat content (MLHC).
//!
//! The crate covers the whole pipeline: a gridded data model with a portable
//! binary field format ([`grid`], [`ogf`]), a synthetic reanalysis generator
//! with a known linear teacher ([`synth`]), physics-derived concept fields
//! ([`concepts`]), the conditioning chain ([`preprocess`]), a from-scratch
//! U-Net with a concept bottleneck head ([`nn`]), seed-matched ensembles
//! ([`ensemble`]), forecast verification ([`eval`]) and mechanistic
//! diagnostics ([`diagnostics`]). [`pipeline`] wires the stages together
//! behind the `mlhc-cbm` command-line tool.

pub mod error;
pub mod grid;
pub mod concepts;
pub mod config;
pub mod dataset;
pub mod ensemble;
pub mod eval;
pub mod diagnostics;
pub mod nn;
pub mod ogf;
pub mod pipeline;
pub mod preprocess;
pub mod render;
pub mod smooth;
pub mod synth;

pub use error::{Error, FormatError, Result};
pub use grid::{FieldSeries, GeoGrid, TimeAxis, YearMonth};
