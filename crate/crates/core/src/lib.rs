#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod asymptotics;
pub mod coverage;
pub mod dynamics;
pub mod error;
pub mod estimator;
pub mod geometry;
pub mod real;
pub mod scenario;
pub mod subordination;

pub use error::{Error, Result};
pub use real::Real;

/// Double-precision aliases.
pub type Domain64 = geometry::Domain<f64>;
pub type Target64 = geometry::Target<f64>;
pub type StartSet64 = geometry::StartSet<f64>;
pub type Motion64 = scenario::Motion<f64>;
pub type Scenario64 = scenario::Scenario<f64>;
pub type MomentReport64 = estimator::MomentReport<f64>;

/// Single-precision aliases.
pub type Domain32 = geometry::Domain<f32>;
pub type Scenario32 = scenario::Scenario<f32>;
pub type MomentReport32 = estimator::MomentReport<f32>;
