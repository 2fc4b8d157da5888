//! Reference transcription of the eight control procedures, one statement
//! per step in their original order, plus a randomized equivalence check
//! against the production controller.
//!
//! This module deliberately shares no code with [`crate::controller`]: plain
//! `f64`, mutable procedure-style state, no helper reuse. Interpretations of
//! the underspecified steps are the same ones the production controller
//! documents.

// the clamps are kept as the two separate tests the procedures spell out
#![allow(clippy::manual_clamp)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::controller::{self, AgentState, AgentStateKind, ControllerState};
use crate::sensors::{Indicators, OpponentReading};
use crate::types::{ControllerParams, Role, VehicleState};

/// One neighbor as the reference procedures see it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub id: usize,
    pub d_exact: f64,
    pub to_middle: f64,
    pub yaw: f64,
    pub speed: f64,
    pub same_lane: bool,
}

impl From<&OpponentReading<f64>> for Neighbor {
    fn from(r: &OpponentReading<f64>) -> Self {
        Self {
            id: r.id,
            d_exact: r.d_exact,
            to_middle: r.to_middle,
            yaw: r.yaw,
            speed: r.speed,
            same_lane: r.same_lane,
        }
    }
}

/// Precedence among simultaneously qualifying readings: 2 over 3 over 1.
fn rank(state: i32) -> i32 {
    match state {
        2 => 3,
        3 => 2,
        s => s,
    }
}

/// Mutable procedure state of the reference controller.
#[derive(Debug, Clone)]
pub struct ReferenceController {
    pub p: ControllerParams<f64>,
    pub offset: f64,
    pub agent_state: i32,
    pub agent: Option<Neighbor>,
    pub flank_left: bool,
    pub flank_right: bool,
}

impl ReferenceController {
    pub fn new(p: ControllerParams<f64>) -> Self {
        Self {
            p,
            offset: 0.0,
            agent_state: 0,
            agent: None,
            flank_left: false,
            flank_right: false,
        }
    }

    /// Agent state determination.
    pub fn agent_state_proc(&mut self, neighbors: &[Neighbor], host_speed: f64, host_to_middle: f64) -> i32 {
        self.agent_state = 0;
        self.agent = None;
        self.flank_left = false;
        self.flank_right = false;
        for n in neighbors {
            if n.d_exact < self.p.detect_range && n.d_exact > -self.p.detect_range {
                let (fast, slow, gap) = if n.d_exact >= 0.0 {
                    (host_speed, n.speed, n.d_exact)
                } else {
                    (n.speed, host_speed, -n.d_exact)
                };
                let mut closing = fast * fast - slow * slow;
                if closing < 0.0 {
                    closing = 0.0;
                }
                let needed = closing / (2.0 * self.p.brake_decel) + self.p.reaction_margin;
                if needed > gap {
                    let side = n.to_middle - host_to_middle;
                    if side > 0.25 * self.p.lane_width && side < 1.5 * self.p.lane_width {
                        self.flank_left = true;
                    } else if side < -0.25 * self.p.lane_width && side > -1.5 * self.p.lane_width {
                        self.flank_right = true;
                    }
                }
            }
        }
        for n in neighbors {
            let d_exact = n.d_exact;
            let mut state = 0;
            if d_exact < self.p.detect_range && d_exact > -self.p.detect_range {
                if d_exact > self.p.near_threshold {
                    state = 1;
                    if n.same_lane {
                        let mut closing = host_speed * host_speed - n.speed * n.speed;
                        if closing < 0.0 {
                            closing = 0.0;
                        }
                        let needed = closing / (2.0 * self.p.brake_decel) + self.p.reaction_margin;
                        if needed > d_exact {
                            state = 2;
                        }
                    }
                } else if d_exact < self.p.near_threshold && d_exact > -self.p.near_threshold {
                    state = 3;
                }
            }
            if state == 0 {
                continue;
            }
            let replace = match self.agent {
                None => true,
                Some(a) => {
                    rank(state) > rank(self.agent_state)
                        || (state == self.agent_state && d_exact.abs() < a.d_exact.abs())
                }
            };
            if replace {
                self.agent_state = state;
                self.agent = Some(*n);
            }
        }
        self.agent_state
    }

    fn offset_to_zero(&mut self) {
        if self.offset > 0.0 {
            self.offset -= self.p.offset_step;
            if self.offset < 0.0 {
                self.offset = 0.0;
            }
        } else if self.offset < 0.0 {
            self.offset += self.p.offset_step;
            if self.offset > 0.0 {
                self.offset = 0.0;
            }
        }
    }

    /// Offset for overtaking. Expects `agent_state_proc` to have run.
    pub fn get_offset(&mut self, d1: f64, d2: f64, d3: f64) -> f64 {
        let parms = self.p.offset_step;
        let before = self.offset;
        if self.agent_state == 1 {
            let agent = self.agent.expect("state 1 has a focus");
            if agent.to_middle > self.p.lateral_lane_threshold {
                self.offset -= parms;
            } else if agent.to_middle < -self.p.lateral_lane_threshold {
                self.offset += parms;
            } else if d2 < self.p.occupancy_gap {
                if d1 > self.p.occupancy_gap {
                    self.offset += parms;
                } else if d1 < self.p.occupancy_gap && d3 > self.p.occupancy_gap {
                    self.offset -= parms;
                } else {
                    self.offset_to_zero();
                }
            } else {
                self.offset_to_zero();
            }
        } else if self.agent_state == 0 {
            self.offset_to_zero();
        }
        if self.offset > before && self.flank_left {
            self.offset = before;
        }
        if self.offset < before && self.flank_right {
            self.offset = before;
        }
        if self.offset > self.p.lane_width {
            self.offset = self.p.lane_width;
        }
        if self.offset < -self.p.lane_width {
            self.offset = -self.p.lane_width;
        }
        self.offset
    }

    /// Steering. Expects `get_offset` to have run.
    pub fn steer_proc(&self, angle_in: f64, to_middle: f64) -> f64 {
        let lane_width = self.p.lane_width;
        let road_width = self.p.road_width;
        let mut angle = angle_in;
        let err = to_middle - self.offset;
        angle -= err / road_width;
        if err > lane_width {
            angle -= (err - lane_width) / road_width;
        } else if err < -lane_width {
            angle -= (err + lane_width) / road_width;
        } else {
            angle -= err / road_width;
        }
        let mut steer = angle / self.p.steer_lock;
        if steer > 1.0 {
            steer = 1.0;
        }
        if steer < -1.0 {
            steer = -1.0;
        }
        steer
    }

    /// Steering filter for a vehicle alongside.
    pub fn filters(&self, steer_in: f64, host_yaw: f64) -> f64 {
        let mut steer = steer_in;
        if self.agent_state == 3 {
            let agent = self.agent.expect("state 3 has a focus");
            if agent.d_exact.abs() < self.p.near_threshold {
                let mut diff_yaw = (agent.yaw - host_yaw) % std::f64::consts::TAU;
                if diff_yaw <= -std::f64::consts::PI {
                    diff_yaw += std::f64::consts::TAU;
                } else if diff_yaw > std::f64::consts::PI {
                    diff_yaw -= std::f64::consts::TAU;
                }
                let psteer = diff_yaw / self.p.steer_lock;
                steer = self.p.filter_mix_own * steer + self.p.filter_mix_agent * psteer;
                if steer > 1.0 {
                    steer = 1.0;
                }
                if steer < -1.0 {
                    steer = -1.0;
                }
            }
        }
        steer
    }

    pub fn allowed_speed(&self, curvature: f64, v_cap: f64) -> f64 {
        let mut k = curvature.abs();
        if k < self.p.curvature_floor {
            k = self.p.curvature_floor;
        }
        let v = (self.p.mu * self.p.gravity / k).sqrt();
        if v < v_cap {
            v
        } else {
            v_cap
        }
    }

    pub fn accel_proc(&self, current_speed: f64, allowed_speed: f64, driven_wheels_speed: f64) -> f64 {
        let mut accel;
        if current_speed > allowed_speed {
            // rpm proportional to driven wheel speed
            let allowed_rpm = allowed_speed;
            let current_rpm = driven_wheels_speed;
            if current_rpm > 0.0 {
                accel = allowed_rpm / current_rpm;
                if accel > 1.0 {
                    accel = 1.0;
                }
                if accel < 0.0 {
                    accel = 0.0;
                }
            } else {
                accel = 1.0;
            }
        } else {
            accel = 1.0;
        }
        accel = self.tcs(accel, driven_wheels_speed, current_speed);
        if accel < 0.0 {
            accel = 0.0;
        }
        if accel > 1.0 {
            accel = 1.0;
        }
        accel
    }

    pub fn tcs(&self, accel_in: f64, driven_wheels_speed: f64, current_speed: f64) -> f64 {
        let mut accel = accel_in;
        let slip = driven_wheels_speed - current_speed;
        if slip > self.p.tcs_slip {
            let cut = (slip - self.p.tcs_slip) / self.p.tcs_range;
            accel -= if accel < cut { accel } else { cut };
        }
        accel
    }

    /// Brake. Expects `agent_state_proc` to have run.
    pub fn brake_proc(&self, current_speed: f64, allowed_speed: f64, avg_4wheels_speed: f64) -> f64 {
        let mut brake;
        if current_speed > allowed_speed {
            brake = current_speed - allowed_speed;
            if brake > 1.0 {
                brake = 1.0;
            }
        } else {
            brake = 0.0;
        }
        if self.agent_state == 2 {
            brake = 1.0;
        }
        brake = self.abs(brake, current_speed, avg_4wheels_speed);
        if brake < 0.0 {
            brake = 0.0;
        }
        if brake > 1.0 {
            brake = 1.0;
        }
        brake
    }

    pub fn abs(&self, brake_in: f64, current_speed: f64, avg_4wheels_speed: f64) -> f64 {
        let mut brake = brake_in;
        if current_speed > self.p.abs_speed {
            let slip = current_speed - avg_4wheels_speed;
            if slip > self.p.abs_slip {
                let cut = (slip - self.p.abs_slip) / self.p.abs_range;
                brake -= if brake < cut { brake } else { cut };
            }
        }
        brake
    }
}

/// Worst disagreement seen for one procedure.
#[derive(Debug, Clone, PartialEq)]
pub struct AlgorithmCheck {
    pub name: &'static str,
    pub cases: usize,
    pub max_deviation: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyReport {
    pub tolerance: f64,
    pub checks: Vec<AlgorithmCheck>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.max_deviation <= self.tolerance)
    }

    pub fn failing(&self) -> Vec<&'static str> {
        self.checks
            .iter()
            .filter(|c| !(c.max_deviation <= self.tolerance))
            .map(|c| c.name)
            .collect()
    }
}

pub const VERIFY_TOLERANCE: f64 = 1e-12;

struct Gen {
    rng: ChaCha8Rng,
}

impl Gen {
    fn uni(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.rng.random::<f64>()
    }

    /// Mostly uniform, sometimes one of the interesting boundary values.
    fn pick(&mut self, lo: f64, hi: f64, specials: &[f64]) -> f64 {
        if !specials.is_empty() && self.rng.random_bool(0.15) {
            specials[self.rng.random_range(0..specials.len())]
        } else {
            self.uni(lo, hi)
        }
    }

    fn reading(&mut self, id: usize) -> OpponentReading<f64> {
        OpponentReading {
            id,
            d_exact: self.pick(-80.0, 80.0, &[4.5, -4.5, 60.0, -60.0, 0.0, 10.0]),
            lane_index: self.rng.random_range(1..=3),
            to_middle: self.pick(-6.5, 6.5, &[1.5, -1.5, 0.0, 4.0, -4.0]),
            yaw: self.uni(-3.3, 3.3),
            speed: self.uni(0.0, 25.0),
            same_lane: self.rng.random_bool(0.5),
        }
    }

    fn readings(&mut self) -> Vec<OpponentReading<f64>> {
        let n = self.rng.random_range(0..=5);
        (0..n).map(|i| self.reading(i + 1)).collect()
    }

    fn vehicle(&mut self) -> VehicleState<f64> {
        let speed = self.pick(0.0, 25.0, &[0.0, 3.0, 20.0]);
        VehicleState {
            s: 0.0,
            distance: self.uni(0.0, 1000.0),
            lateral: self.uni(-6.5, 6.5),
            yaw_rel: self.uni(-0.5, 0.5),
            heading: self.uni(-3.2, 3.2),
            speed,
            driven_wheel_speed: (speed + self.uni(-2.0, 14.0)).max(0.0),
            wheel_avg_speed: (speed - self.uni(-1.0, 6.0)).max(0.0),
            damage: 0,
            role: Role::Host,
        }
    }

    fn distance(&mut self) -> f64 {
        self.pick(0.0, 60.0, &[10.0, 60.0, 0.0])
    }
}

fn kind_code(k: AgentStateKind) -> i32 {
    k.index() as i32
}

/// Run the production controller and the reference side by side on
/// `cases` random tuples per procedure.
pub fn verify(
    cases: usize,
    seed: u64,
    production: &ControllerParams<f64>,
    reference: &ControllerParams<f64>,
) -> VerifyReport {
    let mut g = Gen {
        rng: ChaCha8Rng::seed_from_u64(seed),
    };
    let mut checks = Vec::new();
    let mut record = |name: &'static str, devs: &mut dyn FnMut() -> f64| {
        let mut worst = 0.0f64;
        for _ in 0..cases {
            let d = devs();
            if !(d <= worst) {
                worst = d;
            }
        }
        checks.push(AlgorithmCheck {
            name,
            cases,
            max_deviation: worst,
        });
    };

    record("A1 steer", &mut || {
        let angle = g.uni(-1.0, 1.0);
        let to_middle = g.pick(-9.0, 9.0, &[4.0, -4.0, 0.0]);
        let offset = g.pick(-4.0, 4.0, &[0.0, 4.0, -4.0]);
        let prod = controller::steer(angle, to_middle, offset, production);
        let mut r = ReferenceController::new(*reference);
        r.offset = offset;
        (prod - r.steer_proc(angle, to_middle)).abs()
    });

    record("A2 offset", &mut || {
        let me = g.vehicle();
        let readings = g.readings();
        let start = g.pick(-4.0, 4.0, &[0.0, 0.05, -0.05]);
        let (d1, d2, d3) = (g.distance(), g.distance(), g.distance());
        let mut cs = ControllerState::new(*production, 20.0);
        cs.offset = start;
        let st = controller::agent_state(&readings, &me, production);
        let prod = controller::get_offset(&mut cs, &st, d1, d2, d3);
        let mut r = ReferenceController::new(*reference);
        r.offset = start;
        let n: Vec<Neighbor> = readings.iter().map(Neighbor::from).collect();
        r.agent_state_proc(&n, me.speed, me.lateral);
        (prod - r.get_offset(d1, d2, d3)).abs()
    });

    record("A3 filter", &mut || {
        let me = g.vehicle();
        let mut readings = g.readings();
        if g.rng.random_bool(0.5) {
            let mut near = g.reading(9);
            near.d_exact = g.uni(-4.5, 4.5);
            readings.push(near);
        }
        let steer_in = g.uni(-1.0, 1.0);
        let st = controller::agent_state(&readings, &me, production);
        let prod = controller::filter_steer(steer_in, &st, me.heading, production);
        let mut r = ReferenceController::new(*reference);
        let n: Vec<Neighbor> = readings.iter().map(Neighbor::from).collect();
        r.agent_state_proc(&n, me.speed, me.lateral);
        (prod - r.filters(steer_in, me.heading)).abs()
    });

    record("A4 accel", &mut || {
        let me = g.vehicle();
        let kappa = g.pick(-0.1, 0.1, &[0.0, 1e-4, -1e-4]);
        let cap = g.uni(5.0, 25.0);
        let allowed = controller::allowed_speed(kappa, cap, production);
        let prod = controller::accel(me.speed, allowed, me.driven_wheel_speed, production);
        let r = ReferenceController::new(*reference);
        let r_allowed = r.allowed_speed(kappa, cap);
        let dev_speed = (allowed - r_allowed).abs();
        dev_speed.max((prod - r.accel_proc(me.speed, r_allowed, me.driven_wheel_speed)).abs())
    });

    record("A5 traction control", &mut || {
        let accel_in = g.pick(0.0, 1.0, &[0.0, 1.0]);
        let current = g.uni(0.0, 25.0);
        let driven = current + g.pick(-2.0, 15.0, &[2.0]);
        let prod = controller::tcs(accel_in, driven - current, production);
        let r = ReferenceController::new(*reference);
        (prod - r.tcs(accel_in, driven, current)).abs()
    });

    record("A6 brake", &mut || {
        let me = g.vehicle();
        let readings = g.readings();
        let allowed = g.uni(0.0, 25.0);
        let st = controller::agent_state(&readings, &me, production);
        let prod = controller::brake(me.speed, allowed, &st, me.wheel_avg_speed, production);
        let mut r = ReferenceController::new(*reference);
        let n: Vec<Neighbor> = readings.iter().map(Neighbor::from).collect();
        r.agent_state_proc(&n, me.speed, me.lateral);
        (prod - r.brake_proc(me.speed, allowed, me.wheel_avg_speed)).abs()
    });

    record("A7 anti-lock", &mut || {
        let brake_in = g.pick(0.0, 1.0, &[0.0, 1.0]);
        let current = g.pick(0.0, 25.0, &[3.0]);
        let wheels = (current - g.pick(-1.0, 8.0, &[2.0])).max(0.0);
        let prod = controller::abs(brake_in, current, wheels, production);
        let r = ReferenceController::new(*reference);
        (prod - r.abs(brake_in, current, wheels)).abs()
    });

    record("A8 agent state", &mut || {
        let me = g.vehicle();
        let readings = g.readings();
        let st: AgentState<f64> = controller::agent_state(&readings, &me, production);
        let mut r = ReferenceController::new(*reference);
        let n: Vec<Neighbor> = readings.iter().map(Neighbor::from).collect();
        let code = r.agent_state_proc(&n, me.speed, me.lateral);
        let same_focus = st.focus.map(|f| f.id) == r.agent.map(|a| a.id);
        if code == kind_code(st.value) && same_focus {
            0.0
        } else {
            1.0
        }
    });

    record("pipeline", &mut || {
        let me = g.vehicle();
        let readings = g.readings();
        let ind = Indicators {
            angle: g.uni(-0.5, 0.5),
            to_middle: g.uni(-6.5, 6.5),
            d1: g.distance(),
            d2: g.distance(),
            d3: g.distance(),
        };
        let start = g.uni(-4.0, 4.0);
        let cap = g.uni(5.0, 25.0);
        let mut cs = ControllerState::new(*production, cap);
        cs.offset = start;
        let out = controller::control_step(&ind, &readings, &me, &mut cs);

        let mut r = ReferenceController::new(*reference);
        r.offset = start;
        let n: Vec<Neighbor> = readings.iter().map(Neighbor::from).collect();
        r.agent_state_proc(&n, me.speed, me.lateral);
        r.get_offset(ind.d1, ind.d2, ind.d3);
        let steer = r.filters(r.steer_proc(ind.angle, ind.to_middle), me.heading);
        // a fresh estimator has no history yet: zero curvature
        let allowed = r.allowed_speed(0.0, cap);
        let accel = r.accel_proc(me.speed, allowed, me.driven_wheel_speed);
        let brake = r.brake_proc(me.speed, allowed, me.wheel_avg_speed);
        let c = out.command;
        (c.steer - steer)
            .abs()
            .max((c.accel - accel).abs())
            .max((c.brake - brake).abs())
    });

    VerifyReport {
        tolerance: VERIFY_TOLERANCE,
        checks,
    }
}
