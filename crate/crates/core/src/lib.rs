//! Magnus-expansion propagators with exact pulse gradients.
//!
//! The numerical core is generic over the scalar type (`f64` or `f32`); the
//! aliases below fix it to `f64`, which is what the optimizer and the
//! benchmarks use.

pub mod coefficients;
pub mod controls;
pub mod error;
pub mod grape;
pub mod operators;
pub mod optimizer;
pub mod propagators;
pub mod quadrature;
pub mod scalar;
pub mod spinchain;

pub use coefficients::SchemeKind;
pub use error::{Error, Result};
pub use scalar::{Cplx, Real};

pub type Operator = operators::Operator<f64>;
pub type StateVector = operators::StateVector<f64>;
pub type EigenDecomposition = operators::EigenDecomposition<f64>;
pub type ControlAnsatz = controls::ControlAnsatz<f64>;
pub type PulseCoefficients = controls::PulseCoefficients<f64>;
pub type TimeGrid = coefficients::TimeGrid<f64>;
pub type SchemeKernels = coefficients::SchemeKernels<f64>;
pub type CoefficientTable = coefficients::CoefficientTable<f64>;
pub type ModelOperators = propagators::ModelOperators<f64>;
pub type ControlProblem = grape::ControlProblem<f64>;
pub type GradientResult = grape::GradientResult<f64>;
pub type SpinChainParams = spinchain::SpinChainParams<f64>;

/// Single-precision variants.
pub mod f32 {
    pub type Operator = crate::operators::Operator<f32>;
    pub type StateVector = crate::operators::StateVector<f32>;
    pub type ControlAnsatz = crate::controls::ControlAnsatz<f32>;
    pub type PulseCoefficients = crate::controls::PulseCoefficients<f32>;
    pub type TimeGrid = crate::coefficients::TimeGrid<f32>;
    pub type ModelOperators = crate::propagators::ModelOperators<f32>;
    pub type ControlProblem = crate::grape::ControlProblem<f32>;
}
