//! Contour stochastic gradient Langevin dynamics (CSGLD) and its baselines.
//!
//! The core types are generic over the floating-point scalar; `f64` and `f32` aliases are
//! exported below. The quadrature oracle and the experiment harness work in `f64`.

// `!(a >= b)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dynamics;
pub mod error;
pub mod estimators;
pub mod harness;
pub mod oracle;
pub mod partition;
pub mod scalar;
pub mod target;
pub mod theta;

pub use dynamics::{
    csghmc_step, csgld_iterate, csgld_step, ksgld_step, sghmc_step, sgld_step, Chain, ChainState, FnSink,
    KernelConfig, KernelKind, LearningRate, NullSink, RecordSink, StepInfo, StepRecord, Thinned,
};
pub use error::{Error, Result};
pub use estimators::{plain_average, z_theta_star, CompensatedSum, WeightedAccumulator};
pub use partition::EnergyPartition;
pub use scalar::Real;
pub use target::{GaussianMixture, GradientEval, MixtureComponent, RegressionData, TargetKind, TargetSpec};
pub use theta::{StepSchedule, ThetaEstimate, POSITIVITY_FLOOR, SIMPLEX_TOLERANCE};

pub type TargetSpec64 = TargetSpec<f64>;
pub type EnergyPartition64 = EnergyPartition<f64>;
pub type ThetaEstimate64 = ThetaEstimate<f64>;
pub type StepSchedule64 = StepSchedule<f64>;
pub type KernelConfig64 = KernelConfig<f64>;
pub type ChainState64 = ChainState<f64>;

pub type TargetSpec32 = TargetSpec<f32>;
pub type EnergyPartition32 = EnergyPartition<f32>;
pub type ThetaEstimate32 = ThetaEstimate<f32>;
pub type StepSchedule32 = StepSchedule<f32>;
pub type KernelConfig32 = KernelConfig<f32>;
pub type ChainState32 = ChainState<f32>;
