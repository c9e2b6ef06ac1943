//! Sample-model data structures: `O(log n)` entry updates and
//! ℓ2-proportional index sampling for vectors and matrices.

mod matrix;
mod vector;

pub use matrix::{AccessCounts, MatrixView, SampledMatrix, Side};
pub use vector::SampledVector;
