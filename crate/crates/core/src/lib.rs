//! Escape functions, Hamiltonian flows and weighted resolvent estimates for semiclassical
//! Schrödinger operators P = h²Δ + V on asymptotically Euclidean model problems.
//!
//! Everything numeric is generic over `f32`/`f64`; the aliases below fix `f64`.

pub mod escape;
pub mod flow;
pub mod geometry;
pub mod linalg;
pub mod quantize;
pub mod resolvent;
pub mod scalar;
pub mod smooth;

pub type Model = geometry::ModelProblem<f64>;
pub type Point = geometry::PhasePoint<f64>;
pub type Escape = escape::EscapeFunction<f64>;
pub type Tubes = escape::TubeCollection<f64>;
pub type Quantization = quantize::GridQuantization<f64>;
pub type Operator = resolvent::DiscreteOperator<f64>;
pub type Scaling = resolvent::ScalingReport<f64>;
