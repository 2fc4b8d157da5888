//! The driving controller: agent-state classification, overtaking offset,
//! steering with the lateral-proximity filter, throttle with traction
//! control, and brake with anti-lock control.
//!
//! Every vehicle runs the same controller. Agents feed it ground-truth
//! indicators, the host feeds it perceived ones. The opponent readings and
//! the vehicle's own speeds and heading are exact in both cases.

use std::collections::VecDeque;

use crate::real::Real;
use crate::sensors::{Indicators, OpponentReading};
use crate::types::{ControlCommand, ControllerParams, VehicleState};

/// Traffic situation around a vehicle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AgentStateKind {
    /// No vehicle within detection range (state 0).
    Clear = 0,
    /// A vehicle ahead with room to overtake (state 1).
    Leader = 1,
    /// A vehicle ahead in the same lane closer than the needed braking
    /// distance (state 2).
    Blocked = 2,
    /// A vehicle alongside, within the near threshold (state 3).
    Beside = 3,
}

impl AgentStateKind {
    pub fn index(self) -> u8 {
        self as u8
    }

    /// Precedence when several readings qualify: an imminent rear-end
    /// (blocked) outranks a vehicle alongside, which outranks a leader.
    pub fn urgency(self) -> u8 {
        match self {
            Self::Clear => 0,
            Self::Leader => 1,
            Self::Beside => 2,
            Self::Blocked => 3,
        }
    }
}

/// Sides toward which a lateral move would cut in front of a vehicle
/// that then has to brake.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Flanks {
    pub left: bool,
    pub right: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgentState<T> {
    pub value: AgentStateKind,
    /// The reading that determined `value`; absent exactly for `Clear`.
    pub focus: Option<OpponentReading<T>>,
    pub flanks: Flanks,
}

impl<T> AgentState<T> {
    pub fn clear() -> Self {
        Self {
            value: AgentStateKind::Clear,
            focus: None,
            flanks: Flanks::default(),
        }
    }
}

/// Relative-speed stopping distance plus a fixed reaction margin.
pub fn needed_brake_distance<T: Real>(v_self: T, v_agent: T, params: &ControllerParams<T>) -> T {
    let closing = (v_self * v_self - v_agent * v_agent).max(T::zero());
    closing / (T::lit(2.0) * params.brake_decel) + params.reaction_margin
}

/// Classify the traffic situation from the opponent readings.
///
/// Each reading inside the detection range is classified on its own: ahead
/// beyond the near threshold is a leader (blocked when in the same lane and
/// inside the needed braking distance), within the near threshold on either
/// side is beside. The most urgent classification wins (see
/// [`AgentStateKind::urgency`]), ties go to the
/// nearest reading.
pub fn agent_state<T: Real>(
    readings: &[OpponentReading<T>],
    me: &VehicleState<T>,
    params: &ControllerParams<T>,
) -> AgentState<T> {
    let range = params.detect_range;
    let near = params.near_threshold;
    let mut best: Option<(AgentStateKind, OpponentReading<T>)> = None;
    for r in readings {
        let d = r.d_exact;
        if !(d < range && d > -range) {
            continue;
        }
        let kind = if d > near {
            if r.same_lane && needed_brake_distance(me.speed, r.speed, params) > d {
                AgentStateKind::Blocked
            } else {
                AgentStateKind::Leader
            }
        } else if d < near && d > -near {
            AgentStateKind::Beside
        } else {
            continue;
        };
        let better = match &best {
            None => true,
            Some((k, b)) => kind.urgency() > k.urgency() || (kind == *k && d.abs() < b.d_exact.abs()),
        };
        if better {
            best = Some((kind, *r));
        }
    }
    let flanks = flanks(readings, me, params);
    match best {
        Some((value, focus)) => AgentState {
            value,
            focus: Some(focus),
            flanks,
        },
        None => AgentState {
            flanks,
            ..AgentState::clear()
        },
    }
}

/// Occupied flanks: a vehicle in an adjacent lane band (lateral separation
/// between a quarter and one and a half lane widths) that is closer than
/// the braking distance of whichever of the two vehicles is behind.
pub fn flanks<T: Real>(readings: &[OpponentReading<T>], me: &VehicleState<T>, params: &ControllerParams<T>) -> Flanks {
    let lw = params.lane_width;
    let lo = lw * T::lit(0.25);
    let hi = lw * T::lit(1.5);
    let mut out = Flanks::default();
    for r in readings {
        let d = r.d_exact;
        if !(d < params.detect_range && d > -params.detect_range) {
            continue;
        }
        let needed = if d >= T::zero() {
            needed_brake_distance(me.speed, r.speed, params)
        } else {
            needed_brake_distance(r.speed, me.speed, params)
        };
        if !(needed > d.abs()) {
            continue;
        }
        let side = r.to_middle - me.lateral;
        if side > lo && side < hi {
            out.left = true;
        } else if side < -lo && side > -hi {
            out.right = true;
        }
    }
    out
}

/// Road curvature estimated from how the road tangent (Angle indicator plus
/// own heading) turns over the last `curvature_window` meters driven.
#[derive(Debug, Clone, Default)]
pub struct CurvatureEstimator<T> {
    samples: VecDeque<(T, T)>,
}

impl<T: Real> CurvatureEstimator<T> {
    pub fn update(&mut self, odometer: T, road_tangent: T, window: T) -> T {
        // keep exactly one sample at least `window` behind
        while self.samples.len() >= 2 && odometer - self.samples[1].0 >= window {
            self.samples.pop_front();
        }
        let kappa = match self.samples.front() {
            Some(&(d0, t0)) if odometer - d0 >= window => (road_tangent - t0).wrap_angle() / (odometer - d0),
            _ => T::zero(),
        };
        if self.samples.back().is_none_or(|&(d, _)| odometer > d) {
            self.samples.push_back((odometer, road_tangent));
        }
        kappa
    }
}

/// Per-vehicle mutable controller state.
#[derive(Debug, Clone)]
pub struct ControllerState<T> {
    /// Lateral target relative to the road centerline, kept within
    /// `[-lane_width, lane_width]`.
    pub offset: T,
    pub params: ControllerParams<T>,
    /// Speed cap of this vehicle.
    pub v_cap: T,
    /// When false, every tick is classified `Clear` (ablation).
    pub use_agent_state: bool,
    pub curvature: CurvatureEstimator<T>,
}

impl<T: Real> ControllerState<T> {
    pub fn new(params: ControllerParams<T>, v_cap: T) -> Self {
        Self {
            offset: T::zero(),
            params,
            v_cap,
            use_agent_state: true,
            curvature: CurvatureEstimator::default(),
        }
    }
}

fn toward_zero<T: Real>(x: T, step: T) -> T {
    if x > T::zero() {
        (x - step).max(T::zero())
    } else {
        (x + step).min(T::zero())
    }
}

/// Update and return the overtaking offset.
///
/// With a leader ahead the offset moves one `offset_step` away from the
/// leader's side; a leader in the middle band sends the vehicle left when
/// the middle lane is occupied and the left lane is open, right when only
/// the right lane is open. With nothing in range the offset drifts back to
/// zero. While blocked or with a vehicle alongside the offset is held,
/// and any move toward an occupied flank is held as well.
pub fn get_offset<T: Real>(state: &mut ControllerState<T>, agent: &AgentState<T>, d1: T, d2: T, d3: T) -> T {
    let p = &state.params;
    let step = p.offset_step;
    let gap = p.occupancy_gap;
    let thr = p.lateral_lane_threshold;
    let mut offset = state.offset;
    match (agent.value, agent.focus) {
        (AgentStateKind::Leader, Some(focus)) => {
            if focus.to_middle > thr {
                offset = offset - step;
            } else if focus.to_middle < -thr {
                offset = offset + step;
            } else if d2 < gap {
                if d1 > gap {
                    offset = offset + step;
                } else if d1 < gap && d3 > gap {
                    offset = offset - step;
                } else {
                    offset = toward_zero(offset, step);
                }
            } else {
                offset = toward_zero(offset, step);
            }
        }
        (AgentStateKind::Clear, _) | (AgentStateKind::Leader, None) => {
            offset = toward_zero(offset, step);
        }
        (AgentStateKind::Blocked, _) | (AgentStateKind::Beside, _) => {}
    }
    if (offset > state.offset && agent.flanks.left) || (offset < state.offset && agent.flanks.right) {
        offset = state.offset;
    }
    state.offset = offset.clamp_to(-p.lane_width, p.lane_width);
    state.offset
}

/// Steering before the proximity filter, not clamped.
///
/// The heading error is corrected by the lateral error to the offset
/// target, then by the lateral error again with a lane-width dead band
/// beyond which only the excess counts.
pub fn steer_unclamped<T: Real>(angle: T, to_middle: T, offset: T, params: &ControllerParams<T>) -> T {
    let lw = params.lane_width;
    let rw = params.road_width;
    let err = to_middle - offset;
    let mut a = angle - err / rw;
    if err > lw {
        a = a - (err - lw) / rw;
    } else if err < -lw {
        a = a - (err + lw) / rw;
    } else {
        a = a - err / rw;
    }
    a / params.steer_lock
}

pub fn steer<T: Real>(angle: T, to_middle: T, offset: T, params: &ControllerParams<T>) -> T {
    steer_unclamped(angle, to_middle, offset, params).clamp_to(-T::one(), T::one())
}

/// Blend the steering command toward the yaw of a vehicle alongside.
pub fn filter_steer<T: Real>(steer_in: T, agent: &AgentState<T>, self_yaw: T, params: &ControllerParams<T>) -> T {
    match (agent.value, agent.focus) {
        (AgentStateKind::Beside, Some(f)) if f.d_exact.abs() < params.near_threshold => {
            let diff_yaw = (f.yaw - self_yaw).wrap_angle();
            let psteer = diff_yaw / params.steer_lock;
            (params.filter_mix_own * steer_in + params.filter_mix_agent * psteer).clamp_to(-T::one(), T::one())
        }
        _ => steer_in,
    }
}

/// Curvature-limited speed, capped at `v_cap`.
pub fn allowed_speed<T: Real>(curvature: T, v_cap: T, params: &ControllerParams<T>) -> T {
    let k = curvature.abs().max(params.curvature_floor);
    (params.mu * params.gravity / k).sqrt().min(v_cap)
}

/// Traction control: cut throttle when the driven wheels spin faster than
/// the car moves.
pub fn tcs<T: Real>(accel: T, slip: T, params: &ControllerParams<T>) -> T {
    if slip > params.tcs_slip {
        accel - accel.min((slip - params.tcs_slip) / params.tcs_range)
    } else {
        accel
    }
}

/// Throttle command. Engine rpm is taken proportional to driven wheel
/// speed, so the rpm ratio becomes a speed ratio.
pub fn accel<T: Real>(current_speed: T, allowed: T, driven_wheel_speed: T, params: &ControllerParams<T>) -> T {
    let a = if current_speed > allowed {
        if driven_wheel_speed > T::zero() {
            (allowed / driven_wheel_speed).clamp_to(T::zero(), T::one())
        } else {
            T::one()
        }
    } else {
        T::one()
    };
    tcs(a, driven_wheel_speed - current_speed, params).clamp_to(T::zero(), T::one())
}

/// Anti-lock braking: release brake when the wheels turn slower than the
/// car moves. Inactive below `abs_speed`.
pub fn abs<T: Real>(brake: T, current_speed: T, wheel_avg_speed: T, params: &ControllerParams<T>) -> T {
    if current_speed > params.abs_speed {
        let slip = current_speed - wheel_avg_speed;
        if slip > params.abs_slip {
            return brake - brake.min((slip - params.abs_slip) / params.abs_range);
        }
    }
    brake
}

pub fn brake<T: Real>(
    current_speed: T,
    allowed: T,
    agent: &AgentState<T>,
    wheel_avg_speed: T,
    params: &ControllerParams<T>,
) -> T {
    let mut b = if current_speed > allowed {
        T::one().min(current_speed - allowed)
    } else {
        T::zero()
    };
    if agent.value == AgentStateKind::Blocked {
        b = T::one();
    }
    abs(b, current_speed, wheel_avg_speed, params).clamp_to(T::zero(), T::one())
}

/// Everything one control tick produced, for logging.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlOutput<T> {
    pub command: ControlCommand<T>,
    pub agent_state: AgentState<T>,
    pub offset: T,
    pub allowed_speed: T,
}

/// One control tick: classify, update the offset, steer, filter, then
/// throttle and brake.
pub fn control_step<T: Real>(
    indicators: &Indicators<T>,
    readings: &[OpponentReading<T>],
    me: &VehicleState<T>,
    state: &mut ControllerState<T>,
) -> ControlOutput<T> {
    let agent = if state.use_agent_state {
        agent_state(readings, me, &state.params)
    } else {
        AgentState::clear()
    };
    let offset = get_offset(state, &agent, indicators.d1, indicators.d2, indicators.d3);
    let params = state.params;

    let raw = steer(indicators.angle, indicators.to_middle, offset, &params);
    let steer_cmd = filter_steer(raw, &agent, me.heading, &params);

    let kappa = state
        .curvature
        .update(me.distance, indicators.angle + me.heading, params.curvature_window);
    let allowed = allowed_speed(kappa, state.v_cap, &params);
    let accel_cmd = accel(me.speed, allowed, me.driven_wheel_speed, &params);
    let brake_cmd = brake(me.speed, allowed, &agent, me.wheel_avg_speed, &params);

    ControlOutput {
        command: ControlCommand::new(steer_cmd, accel_cmd, brake_cmd).clamped(),
        agent_state: agent,
        offset,
        allowed_speed: allowed,
    }
}
