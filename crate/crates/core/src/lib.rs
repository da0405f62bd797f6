//! Numerical laboratory for dyadic harmonic analysis on finite meshes.

pub mod error;
pub mod grid;
pub mod haar;
pub mod operators;
pub mod scalar;
pub mod sht;
pub mod sparse;
pub mod weights;

pub use error::{Error, Result};
pub use grid::{DyadicInterval, GridParameters};
pub use haar::{HaarSpectrum, Mesh, MeshInterval, StepFunction};
pub use scalar::Scalar;
pub use sht::{CubeSystem, QuasiMetricCloud, ShtHaarSystem};
pub use sparse::SparseFamily;
pub use weights::{CarlesonSequence, Weight};

pub type StepFunction64 = StepFunction<f64>;
pub type StepFunction32 = StepFunction<f32>;
pub type HaarSpectrum64 = HaarSpectrum<f64>;
pub type HaarSpectrum32 = HaarSpectrum<f32>;
pub type Weight64 = Weight<f64>;
pub type Weight32 = Weight<f32>;
pub type CarlesonSequence64 = CarlesonSequence<f64>;
pub type QuasiMetricCloud64 = QuasiMetricCloud<f64>;
pub type ShtHaarSystem64 = ShtHaarSystem<f64>;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
