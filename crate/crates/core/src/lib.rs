//! Weighted estimation of a primary regression coefficient from auxiliary
//! tasks that share its covariates.
//!
//! The core types are generic over the scalar (`f32` or `f64`); the aliases
//! below fix it to `f64`, and the simulation and CLI layers use them.

pub mod cli;
pub mod data;
pub mod error;
pub mod glm;
pub mod linalg;
pub mod ols;
pub mod scalar;
pub mod select;
pub mod sim;
pub mod weights;

pub use error::{Error, Result};
pub use scalar::Real;

pub type Dataset = data::MultiTaskDataset<f64>;
pub type Coefficients = data::CoefficientMatrix<f64>;
pub type Noise = data::NoiseCovariance<f64>;
pub type Weights = data::WeightVector<f64>;
pub type OlsFit64 = ols::OlsFit<f64>;
pub type LogisticFit64 = glm::LogisticFit<f64>;
pub type Trace = select::SelectionTrace<f64>;

pub type Dataset32 = data::MultiTaskDataset<f32>;
pub type Coefficients32 = data::CoefficientMatrix<f32>;
pub type Noise32 = data::NoiseCovariance<f32>;
pub type Weights32 = data::WeightVector<f32>;
