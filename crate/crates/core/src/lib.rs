//! Planted-clique detection and recovery in random-field Curie–Weiss models.

pub mod error;
pub mod field;
pub mod harness;
pub mod landscape;
pub mod linalg;
pub mod quadrature;
pub mod real;
pub mod recovery;
pub mod sampler;
pub mod scan;
pub mod statistics;

pub use error::{Error, Result};
pub use field::{FieldDistribution, Functional, MomentSet};
pub use landscape::{Regime, RegimeInfo, VarianceReport};
pub use real::Real;
pub use recovery::{RecoveryMethod, RecoveryReport};
pub use sampler::{FieldMode, ModelSpec, SpinSample};
pub use statistics::{TestId, TestReport, TestSetting};
pub use harness::{ExperimentPlan, Procedure, SweepResult};

pub type FieldDistribution64 = FieldDistribution<f64>;
pub type FieldDistribution32 = FieldDistribution<f32>;
pub type ModelSpec64 = ModelSpec<f64>;
pub type ModelSpec32 = ModelSpec<f32>;
pub type TestSetting64 = TestSetting<f64>;
pub type TestSetting32 = TestSetting<f32>;
pub type TestReport64 = TestReport<f64>;
pub type RegimeInfo64 = RegimeInfo<f64>;
pub type ExperimentPlan64 = ExperimentPlan<f64>;
