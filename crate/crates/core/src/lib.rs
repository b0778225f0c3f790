//! First-passage times of a drifted Brownian motion through an exponentially
//! decaying threshold.
//!
//! The curved threshold is replaced on a high-probability window by a continuous
//! two-piece linear threshold, for which the passage-time density has a closed
//! form. The crate provides the fits, the resulting law and its moments, a
//! bridge-corrected Euler–Maruyama simulator and estimators of `(μ, σ²)`.
//!
//! Everything numeric is generic over [`Real`] (`f32` or `f64`); the aliases at
//! the crate root fix the scalar to `f64`.

pub mod error;
pub mod fpt_law;
pub mod inference;
pub mod numerics;
pub mod scalar;
pub mod simulator;
pub mod threshold_fit;
pub mod thresholds;

pub use error::{Error, Result};
pub use scalar::Real;

pub type WienerParams = thresholds::WienerParams<f64>;
pub type CurvedThreshold = thresholds::CurvedThreshold<f64>;
pub type PiecewiseLinearThreshold = thresholds::PiecewiseLinearThreshold<f64>;
pub type FitWindow = thresholds::FitWindow<f64>;
pub type WindowSpec = thresholds::WindowSpec<f64>;
pub type FitResult = threshold_fit::FitResult<f64>;
pub type FittedFamily = threshold_fit::FittedFamily<f64>;
pub type FptLaw = fpt_law::FptLaw<f64>;
pub type FptMoments = fpt_law::FptMoments<f64>;
pub type TabulatedCdf = fpt_law::TabulatedCdf<f64>;
pub type SimConfig = simulator::SimConfig<f64>;
pub type FptSample = simulator::FptSample<f64>;
pub type EmpiricalCdf = simulator::EmpiricalCdf<f64>;
pub type PhiEstimate = inference::PhiEstimate<f64>;
pub type ErrorReport = inference::ErrorReport<f64>;
pub type Tolerance = numerics::Tolerance<f64>;

pub use inference::EstimationMethod;
pub use threshold_fit::{FitMethod, Knots};
