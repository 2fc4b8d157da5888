//! Domain types shared by sensors, controller, dynamics and the simulator.
//!
//! Units are SI throughout: meters, seconds, radians, m/s.
//! Sign conventions:
//! - `lateral` (toMiddle) is positive to the left of the travel direction.
//! - `steer` is positive to the left.
//! - the Angle indicator is track tangent minus vehicle heading, i.e. `-yaw_rel`.

use thiserror::Error;

use crate::dynamics::VehicleGeometry;
use crate::real::Real;
use crate::track::Track;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Role {
    Host,
    Agent,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Host => "host",
            Role::Agent => "agent",
        }
    }
}

/// Kinematic state of one vehicle in track coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VehicleState<T> {
    /// Arc length along the centerline, wrapped on closed loops.
    pub s: T,
    /// Unwrapped centerline distance since spawn (odometer).
    pub distance: T,
    /// Signed offset from the road centerline, positive = left.
    pub lateral: T,
    /// Vehicle heading minus track tangent at `s`.
    pub yaw_rel: T,
    /// Absolute world heading; always `tangent(s) + yaw_rel`.
    pub heading: T,
    pub speed: T,
    pub driven_wheel_speed: T,
    pub wheel_avg_speed: T,
    pub damage: u64,
    pub role: Role,
}

impl<T: Real> VehicleState<T> {
    /// A vehicle aligned with the track at `(s, lateral)`, wheels rolling
    /// at `speed`.
    pub fn spawn(track: &Track<T>, role: Role, s: T, lateral: T, speed: T) -> Result<Self, crate::track::TrackError> {
        let s = track.wrap_s(s)?;
        let pose = track.pose(s)?;
        Ok(Self {
            s,
            distance: T::zero(),
            lateral,
            yaw_rel: T::zero(),
            heading: pose.heading,
            speed,
            driven_wheel_speed: speed,
            wheel_avg_speed: speed,
            damage: 0,
            role,
        })
    }
}

/// Effector outputs of one control tick.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlCommand<T> {
    /// `[-1, 1]`, fraction of steer lock, positive = left.
    pub steer: T,
    /// Throttle `[0, 1]`.
    pub accel: T,
    /// Brake `[0, 1]`.
    pub brake: T,
}

impl<T: Real> ControlCommand<T> {
    pub fn new(steer: T, accel: T, brake: T) -> Self {
        Self { steer, accel, brake }
    }

    pub fn clamped(self) -> Self {
        Self {
            steer: self.steer.clamp_to(-T::one(), T::one()),
            accel: self.accel.clamp_to(T::zero(), T::one()),
            brake: self.brake.clamp_to(T::zero(), T::one()),
        }
    }

    pub fn in_range(&self) -> bool {
        self.steer >= -T::one()
            && self.steer <= T::one()
            && self.accel >= T::zero()
            && self.accel <= T::one()
            && self.brake >= T::zero()
            && self.brake <= T::one()
    }
}

impl<T: Real> Default for ControlCommand<T> {
    fn default() -> Self {
        Self::new(T::zero(), T::zero(), T::zero())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParamError {
    #[error("{field} must be positive, got {value}")]
    NotPositive { field: &'static str, value: f64 },
    #[error("filter_mix_own + filter_mix_agent must equal 1, got {0}")]
    MixNotConvex(f64),
    #[error("offset_step must lie in (0, lane_width], got {0}")]
    OffsetStep(f64),
    #[error("{field} must be nonnegative, got {value}")]
    Negative { field: &'static str, value: f64 },
}

/// Tunables of the driving controller.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControllerParams<T> {
    pub steer_lock: T,
    pub lane_width: T,
    pub road_width: T,
    pub detect_range: T,
    pub near_threshold: T,
    pub lateral_lane_threshold: T,
    pub occupancy_gap: T,
    pub tcs_slip: T,
    pub tcs_range: T,
    pub abs_speed: T,
    pub abs_slip: T,
    pub abs_range: T,
    /// Offset change per control tick, both when steering out and when
    /// drifting back to zero.
    pub offset_step: T,
    pub filter_mix_own: T,
    pub filter_mix_agent: T,
    /// Deceleration assumed by the needed-brake-distance test.
    pub brake_decel: T,
    pub reaction_margin: T,
    pub mu: T,
    pub gravity: T,
    pub curvature_floor: T,
    /// Distance over which road curvature is estimated from the tangent.
    pub curvature_window: T,
    pub v_max_host: T,
    pub v_max_agent: T,
}

impl<T: Real> Default for ControllerParams<T> {
    fn default() -> Self {
        Self {
            steer_lock: T::lit(0.366),
            lane_width: T::lit(4.0),
            road_width: T::lit(13.0),
            detect_range: T::lit(60.0),
            near_threshold: T::lit(4.5),
            lateral_lane_threshold: T::lit(1.5),
            occupancy_gap: T::lit(10.0),
            tcs_slip: T::lit(2.0),
            tcs_range: T::lit(10.0),
            abs_speed: T::lit(3.0),
            abs_slip: T::lit(2.0),
            abs_range: T::lit(5.0),
            offset_step: T::lit(0.08),
            filter_mix_own: T::lit(0.5),
            filter_mix_agent: T::lit(0.5),
            brake_decel: T::lit(6.0),
            reaction_margin: T::lit(5.0),
            mu: T::lit(1.0),
            gravity: T::lit(9.81),
            curvature_floor: T::lit(1e-4),
            curvature_window: T::lit(10.0),
            v_max_host: T::lit(20.56),
            v_max_agent: T::lit(20.0),
        }
    }
}

impl<T: Real> ControllerParams<T> {
    pub fn v_max(&self, role: Role) -> T {
        match role {
            Role::Host => self.v_max_host,
            Role::Agent => self.v_max_agent,
        }
    }

    pub fn validate(&self) -> Result<(), ParamError> {
        let positive = [
            ("steer_lock", self.steer_lock),
            ("lane_width", self.lane_width),
            ("road_width", self.road_width),
            ("detect_range", self.detect_range),
            ("near_threshold", self.near_threshold),
            ("lateral_lane_threshold", self.lateral_lane_threshold),
            ("occupancy_gap", self.occupancy_gap),
            ("tcs_slip", self.tcs_slip),
            ("tcs_range", self.tcs_range),
            ("abs_speed", self.abs_speed),
            ("abs_slip", self.abs_slip),
            ("abs_range", self.abs_range),
            ("brake_decel", self.brake_decel),
            ("mu", self.mu),
            ("gravity", self.gravity),
            ("curvature_floor", self.curvature_floor),
            ("curvature_window", self.curvature_window),
            ("v_max_host", self.v_max_host),
            ("v_max_agent", self.v_max_agent),
        ];
        for (field, value) in positive {
            if !(value > T::zero()) || !value.is_finite() {
                return Err(ParamError::NotPositive {
                    field,
                    value: value.as_f64(),
                });
            }
        }
        for (field, value) in [
            ("reaction_margin", self.reaction_margin),
            ("filter_mix_own", self.filter_mix_own),
            ("filter_mix_agent", self.filter_mix_agent),
        ] {
            if !(value >= T::zero()) {
                return Err(ParamError::Negative {
                    field,
                    value: value.as_f64(),
                });
            }
        }
        let mix = self.filter_mix_own + self.filter_mix_agent;
        if (mix - T::one()).abs() > T::lit(1e-9).max(T::epsilon() * T::lit(8.0)) {
            return Err(ParamError::MixNotConvex(mix.as_f64()));
        }
        if !(self.offset_step > T::zero()) || self.offset_step > self.lane_width {
            return Err(ParamError::OffsetStep(self.offset_step.as_f64()));
        }
        Ok(())
    }
}

/// Full simulation truth at one tick.
#[derive(Debug, Clone)]
pub struct WorldState<T> {
    pub track: Track<T>,
    pub vehicles: Vec<VehicleState<T>>,
    pub geometry: Vec<VehicleGeometry<T>>,
    pub tick: u64,
}

impl<T: Real> WorldState<T> {
    pub fn new(track: Track<T>) -> Self {
        Self {
            track,
            vehicles: Vec::new(),
            geometry: Vec::new(),
            tick: 0,
        }
    }

    pub fn push(&mut self, state: VehicleState<T>, geometry: VehicleGeometry<T>) -> usize {
        self.vehicles.push(state);
        self.geometry.push(geometry);
        self.vehicles.len() - 1
    }

    pub fn host_id(&self) -> Option<usize> {
        self.vehicles.iter().position(|v| v.role == Role::Host)
    }
}
