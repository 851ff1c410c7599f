//! Bandwidth selection for local linear imputation estimators of an
//! average treatment effect.
//!
//! The effect is estimated as `τ̂ = n⁻¹ Σᵢ (β̂₁(xᵢ) − β̂₀(xᵢ))`, each curve a
//! local linear fit on its own treatment group. Bandwidths can be chosen by
//! cross-validation, by minimising oracle mean squared errors, or by
//! plug-in estimates of the MSE of the averaged curves (inverse-propensity
//! and double-smoothing variants).

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod asymptotics;
pub mod cli;
pub mod criteria;
pub mod error;
pub mod estimators;
pub mod kernel;
pub mod methods;
pub mod quadrature;
pub mod selector;
pub mod simulation;
pub mod smoother;

pub use error::{Error, Result};
pub use estimators::{imputation_tau, Dataset};
pub use kernel::Kernel;
pub use methods::{MethodRegistry, SelectionContext, SelectionMethod};
pub use smoother::{Bandwidth, BandwidthKind, GroupSample, LocalLinear};
