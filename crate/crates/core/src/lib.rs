//! Sampling-based anchor detection for separable nonnegative matrices.
//!
//! The input lives in a [`SampledMatrix`], which answers entry queries,
//! norm lookups, and squared-norm index sampling in logarithmic time. On top
//! of it, [`fkv`] builds short descriptions of approximate singular vectors,
//! [`estimate`] provides product estimation and rejection sampling, and
//! [`fas`] combines them into the anchor search. [`baselines`] holds dense
//! reference algorithms and [`datagen`] produces instances with known anchors.

pub mod baselines;
pub mod datagen;
pub mod dense;
pub mod error;
pub mod estimate;
pub mod fas;
pub mod fkv;
pub mod io;
pub mod sample_model;

pub use dense::DenseMatrix;
pub use error::{Error, Result};
pub use fas::{fas_run, fas_run_seeded, AnchorReport, FasConfig};
pub use fkv::{fkv_sketch, fkv_sketch_left, FkvParams, SketchDescription};
pub use sample_model::{AccessCounts, SampledMatrix, SampledVector, Side};
