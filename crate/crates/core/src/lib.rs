//! Class Uncertainty: an imbalance measure built from the predictive
//! uncertainty of a deep ensemble, next to the classical cardinality measure,
//! and the mitigation methods (resampling, reweighting, margins, multi-stage
//! training) that consume either measure.
//!
//! Numeric code is generic over [`Real`] (`f32` or `f64`). The aliases below
//! fix the scalar for the common case.

pub mod analysis;
pub mod datasets;
pub mod ensemble;
pub mod error;
pub mod losses;
pub mod measures;
pub mod nn;
pub mod rng;
pub mod samplers;
pub mod scalar;
pub mod trainer;

pub use error::{Error, Result};
pub use scalar::Real;

pub use analysis::{AnalysisKind, AnalysisReport, AnalysisSettings, EnsembleSettings};
pub use datasets::{Dataset, GeneratorSpec};
pub use ensemble::{EnsemblePredictions, UncertaintyReport};
pub use losses::{ClassWeights, LossSpec};
pub use measures::{ImbalanceMeasure, MeasureOrigin, Rho};
pub use nn::{Matrix, MlpModel};
pub use samplers::ClassProbs;
pub use trainer::{Mitigation, MitigationSpec, RunResult, TrainConfig};

pub type MatrixF64 = Matrix<f64>;
pub type MatrixF32 = Matrix<f32>;
pub type MlpF64 = MlpModel<f64>;
pub type MlpF32 = MlpModel<f32>;
pub type DatasetF64 = Dataset<f64>;
pub type DatasetF32 = Dataset<f32>;
pub type MeasureF64 = ImbalanceMeasure<f64>;
pub type MeasureF32 = ImbalanceMeasure<f32>;
pub type EnsembleF64 = EnsemblePredictions<f64>;
pub type EnsembleF32 = EnsemblePredictions<f32>;
pub type LossSpecF64 = LossSpec<f64>;
pub type LossSpecF32 = LossSpec<f32>;
