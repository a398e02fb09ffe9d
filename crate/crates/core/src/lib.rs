//! Car-following on a single-lane ring road where every driver's action is
//! the outcome of a distributed model-predictive-control problem.
//!
//! Each time step, every agent searches a grid of polynomial action curves
//! for the plan maximizing its utility (Boltzmann-averaged), optionally
//! iterating best responses with its neighbors (the τ-loop). On top of the
//! closed-loop simulator sit an offline search for the density-dependent
//! ideal speed and a linear-stability analysis of the resulting traffic map.
//!
//! All numerics are generic over [`Scalar`] (`f32` or `f64`); the `*64`
//! aliases below fix the common double-precision case.

pub mod coordination;
mod error;
pub mod mechanism;
pub mod model;
pub mod optimizer;
mod scalar;
pub mod simulator;
pub mod stability;
pub mod utility;

pub use coordination::{AlgorithmSpec, FleetPolicy, Mechanism, PlanBoard, TauOutcome};
pub use error::{Error, Result};
pub use mechanism::{SweepResult, SweepSpec};
pub use model::{KinematicState, NoiseSpec, RingGeometry, VehicleParams};
pub use optimizer::{ActionCurve, DecisionState, GridSpec, HorizonPlan, SearchGrid};
pub use scalar::Scalar;
pub use stability::{FixedPoint, ModeSpectrum, PolicyJacobian, Verdict};
pub use simulator::{FleetTrajectory, InitialCondition, OrderParameters, ScenarioConfig};
pub use utility::{Objective, UtilityForm, UtilityParams};

pub type ScenarioConfig64 = ScenarioConfig<f64>;
pub type FleetPolicy64 = FleetPolicy<f64>;
pub type FleetTrajectory64 = FleetTrajectory<f64>;
pub type KinematicState64 = KinematicState<f64>;
pub type UtilityParams64 = UtilityParams<f64>;
pub type SearchGrid64 = SearchGrid<f64>;

pub type SweepSpec64 = SweepSpec<f64>;
pub type ModeSpectrum64 = ModeSpectrum<f64>;
pub type PolicyJacobian64 = PolicyJacobian<f64>;

pub type ScenarioConfig32 = ScenarioConfig<f32>;
pub type FleetPolicy32 = FleetPolicy<f32>;
