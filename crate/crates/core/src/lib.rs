//! Tangent bundle signal processing on point clouds.
//!
//! The pipeline goes from raw samples to trainable networks:
//! [`geometry`] builds the kernel graph and local tangent frames,
//! [`sheaf`] assembles the orthogonal cellular sheaf and its normalized
//! Laplacian, [`spectral`] and [`filtering`] provide the frequency domain
//! and the `exp(Δ)` shift operator, and [`neural`] holds the trainable
//! DD-TNN / recurrent layers. [`data`] and [`experiments`] drive the
//! benchmark tasks.

pub mod data;
pub mod error;
pub mod experiments;
pub mod filtering;
pub mod geometry;
pub mod linalg;
pub mod neural;
pub mod sheaf;
pub mod spectral;

pub use error::{Result, TbnnError};
pub use filtering::{ExpMethod, ShiftOperator};
pub use geometry::{PointCloud, TangentBasis, WeightedGraph};
pub use sheaf::{BundleSignal, SheafLaplacian, SheafStructure};
pub use spectral::{FrequencyResponse, SpectralDecomposition};
