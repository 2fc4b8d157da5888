//! Multi-lane highway traffic simulator with an affordance-indicator
//! driving controller.
//!
//! The geometry, sensor, controller and dynamics code is generic over the
//! scalar type ([`Real`], `f32` or `f64`). The simulator, scenario files and
//! logs work in `f64`; the aliases below name the `f64` instantiations.

// Negated comparisons are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod controller;
pub mod dynamics;
pub mod oracle;
pub mod real;
pub mod sensors;
pub mod sim;
pub mod track;
pub mod types;

pub use real::Real;

pub type TrackSpec = track::TrackSpec<f64>;
pub type Track = track::Track<f64>;
pub type Segment = track::Segment<f64>;
pub type Pose = track::Pose<f64>;
pub type VehicleState = types::VehicleState<f64>;
pub type ControlCommand = types::ControlCommand<f64>;
pub type ControllerParams = types::ControllerParams<f64>;
pub type WorldState = types::WorldState<f64>;
pub type Indicators = sensors::Indicators<f64>;
pub type OpponentReading = sensors::OpponentReading<f64>;
pub type Perceiver = sensors::Perceiver<f64>;
pub type AgentState = controller::AgentState<f64>;
pub type ControllerState = controller::ControllerState<f64>;
pub type VehicleGeometry = dynamics::VehicleGeometry<f64>;
pub type DynamicsParams = dynamics::DynamicsParams<f64>;

pub use controller::AgentStateKind;
pub use dynamics::ContactEvent;
pub use sensors::{NoiseDistribution, NoiseModel};
pub use types::Role;
