//! Measurement-error-corrected quasi-maximum-likelihood estimation for the
//! spatial autoregressive model `Y = ρLY + Xδ + V` on a network, where some
//! covariates are observed with additive error of known or estimated
//! covariance.
//!
//! The numeric core is generic over [`Real`] (`f32` or `f64`); the aliases at
//! the crate root fix it to `f64`.

pub mod design;
pub mod error;
pub mod estimator;
pub mod inference;
pub mod io;
pub mod linalg;
pub mod mecov;
pub mod pipeline;
pub mod report;
pub mod scalar;
pub mod simgen;
pub mod weights;

pub use design::{assemble_estimated, assemble_omega, assemble_shared, ErrorKind};
pub use error::{Result, SarError};
pub use estimator::{fit_meqmle, fit_qmle_uncorrected, FitOptions as GenericFitOptions, Method};
pub use scalar::Real;
pub use weights::{build_row_normalized, haversine_km, weights_from_coordinates, DistanceScheme};

pub type SpatialWeights = weights::SpatialWeights<f64>;
pub type ObservedDesign = design::ObservedDesign<f64>;
pub type MeasurementErrorSpec = design::MeasurementErrorSpec<f64>;
pub type SarParams = estimator::SarParams<f64>;
pub type FitOptions = estimator::FitOptions<f64>;
pub type FitResult = estimator::FitResult<f64>;
pub type SandwichCovariance = inference::SandwichCovariance<f64>;
pub type ScoreVector = inference::ScoreVector<f64>;
pub type Matrix = nalgebra::DMatrix<f64>;
pub type Vector = nalgebra::DVector<f64>;
