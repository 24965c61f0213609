//! Monotone multilayer perceptrons.
//!
//! Layers with sign-constrained weights or weight-sign activation switches,
//! a structural monotonicity certificate, an exact monotone interpolator,
//! randomized verifiers and a small training/experiment harness.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the precision for everyday use.

pub mod activation;
pub mod diff;
pub mod error;
pub mod harness;
pub mod interpolator;
pub mod layer;
pub mod network;
pub mod scalar;
pub mod training;
pub mod verifier;

pub use activation::{ActivationKind, ActivationSpec, SaturationInfo};
pub use error::{Error, Result};
pub use layer::{LayerKind, LayerSpec, Reparam, Sign};
pub use network::{Architecture, Certificate, Certification, Direction, FeatureAnnotation, Parametrization};
pub use scalar::Scalar;
pub use training::{Dataset, LossKind, OptimizerKind, TrainConfig};

pub type Net = network::Network<f64>;
pub type Net32 = network::Network<f32>;
pub type Layer64 = layer::Layer<f64>;
pub type Layer32 = layer::Layer<f32>;
pub type Params = layer::LayerParams<f64>;
pub type Params32 = layer::LayerParams<f32>;
pub type Mat = diff::Matrix<f64>;
pub type Mat32 = diff::Matrix<f32>;
