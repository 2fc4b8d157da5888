//! Vehicle motion, collision detection and damage.
//!
//! Kinematic bicycle model on the track, integrated in world coordinates and
//! re-projected onto the track every step. Wheel speeds come from a
//! phenomenological slip model: hard throttle at low speed spins the driven
//! wheels, hard braking slows the wheels below the car speed. It only exists
//! to give traction and anti-lock control something to act on.

use crate::real::Real;
use crate::track::{Point2, Track};
use crate::types::{ControlCommand, VehicleState, WorldState};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VehicleGeometry<T> {
    pub length: T,
    pub width: T,
    pub wheelbase: T,
}

impl<T: Real> Default for VehicleGeometry<T> {
    fn default() -> Self {
        Self {
            length: T::lit(4.5),
            width: T::lit(2.0),
            wheelbase: T::lit(2.6),
        }
    }
}

impl<T: Real> VehicleGeometry<T> {
    pub fn is_valid(&self) -> bool {
        self.length > T::zero() && self.width > T::zero() && self.wheelbase > T::zero() && self.length > self.wheelbase
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DynamicsParams<T> {
    pub dt: T,
    pub max_engine_accel: T,
    pub max_brake_decel: T,
    /// Quadratic drag, deceleration = `drag_coeff * speed^2`.
    pub drag_coeff: T,
    /// Driven-wheel overspeed per unit throttle at standstill.
    pub wheel_slip_gain_accel: T,
    /// Wheel underspeed per unit brake.
    pub wheel_slip_gain_brake: T,
    /// Speed at which throttle-induced wheel spin vanishes.
    pub slip_ref_speed: T,
    /// Road wheel angle at full steer.
    pub steer_lock: T,
    /// A vehicle whose center is further than `road_width / 2 + off_track_margin`
    /// from the centerline is off the road.
    pub off_track_margin: T,
    pub damage_per_contact_tick: u64,
}

impl<T: Real> Default for DynamicsParams<T> {
    fn default() -> Self {
        Self {
            dt: T::lit(0.02),
            max_engine_accel: T::lit(4.0),
            max_brake_decel: T::lit(9.0),
            drag_coeff: T::lit(0.002),
            wheel_slip_gain_accel: T::lit(12.0),
            wheel_slip_gain_brake: T::lit(4.0),
            slip_ref_speed: T::lit(20.0),
            steer_lock: T::lit(0.366),
            off_track_margin: T::zero(),
            damage_per_contact_tick: 1,
        }
    }
}

impl<T: Real> DynamicsParams<T> {
    pub fn is_valid(&self) -> bool {
        let nonneg = [
            self.max_engine_accel,
            self.max_brake_decel,
            self.drag_coeff,
            self.wheel_slip_gain_accel,
            self.wheel_slip_gain_brake,
            self.off_track_margin,
        ];
        self.dt > T::zero()
            && self.slip_ref_speed > T::zero()
            && self.steer_lock > T::zero()
            && nonneg.iter().all(|g| *g >= T::zero())
    }
}

/// Advance one vehicle by one timestep.
pub fn step_vehicle<T: Real>(
    state: &VehicleState<T>,
    cmd: &ControlCommand<T>,
    geom: &VehicleGeometry<T>,
    params: &DynamicsParams<T>,
    track: &Track<T>,
) -> VehicleState<T> {
    let cmd = cmd.clamped();
    let dt = params.dt;
    let v = state.speed;

    let delta = cmd.steer * params.steer_lock;
    let yaw_rate = v * delta.tan() / geom.wheelbase;
    let heading_mid = state.heading + yaw_rate * dt * T::lit(0.5);
    let heading_new = state.heading + yaw_rate * dt;

    let (p0, _) = track
        .to_world(state.s, state.lateral)
        .expect("vehicle s is always on the track");
    let (sin, cos) = heading_mid.sin_cos();
    let p1 = Point2::new(p0.x + v * dt * cos, p0.y + v * dt * sin);
    let (s_new, lateral_new) = track.project(p1, state.s + v * dt);
    let tangent = track.pose(s_new).map(|p| p.heading).unwrap_or(state.heading);
    let yaw_rel = (heading_new - tangent).wrap_angle();

    let dv = cmd.accel * params.max_engine_accel - cmd.brake * params.max_brake_decel - params.drag_coeff * v * v;
    let speed_new = (v + dv * dt).max(T::zero());

    let low_speed = (T::one() - v / params.slip_ref_speed).max(T::zero());
    let driven = v + params.wheel_slip_gain_accel * cmd.accel * low_speed;
    let wheel_avg = (v - params.wheel_slip_gain_brake * cmd.brake).max(T::zero());

    VehicleState {
        s: s_new,
        distance: state.distance + track.signed_gap(state.s, s_new),
        lateral: lateral_new,
        yaw_rel,
        heading: tangent + yaw_rel,
        speed: speed_new,
        driven_wheel_speed: driven,
        wheel_avg_speed: wheel_avg,
        damage: state.damage,
        role: state.role,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ContactEvent {
    /// Two vehicle bodies overlap; `a < b`.
    Pair(usize, usize),
    /// A vehicle left the road surface.
    OffRoad(usize),
}

/// World-frame footprint rectangle of a vehicle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Footprint<T> {
    pub center: Point2<T>,
    pub heading: T,
    pub half_length: T,
    pub half_width: T,
}

impl<T: Real> Footprint<T> {
    pub fn of(state: &VehicleState<T>, geom: &VehicleGeometry<T>, track: &Track<T>) -> Self {
        let (center, _) = track
            .to_world(state.s, state.lateral)
            .expect("vehicle s is always on the track");
        let half = T::lit(0.5);
        Self {
            center,
            heading: state.heading,
            half_length: geom.length * half,
            half_width: geom.width * half,
        }
    }

    /// Corners in counter-clockwise order.
    pub fn corners(&self) -> [Point2<T>; 4] {
        let (s, c) = self.heading.sin_cos();
        let (l, w) = (self.half_length, self.half_width);
        [(l, w), (-l, w), (-l, -w), (l, -w)]
            .map(|(a, b)| Point2::new(self.center.x + a * c - b * s, self.center.y + a * s + b * c))
    }

    fn axes(&self) -> [Point2<T>; 2] {
        let (s, c) = self.heading.sin_cos();
        [Point2::new(c, s), Point2::new(-s, c)]
    }
}

fn project_onto<T: Real>(corners: &[Point2<T>; 4], axis: Point2<T>) -> (T, T) {
    let mut lo = T::infinity();
    let mut hi = T::neg_infinity();
    for p in corners {
        let d = p.x * axis.x + p.y * axis.y;
        lo = lo.min(d);
        hi = hi.max(d);
    }
    (lo, hi)
}

/// Separating-axis test for two oriented rectangles. Touching edges do not
/// count as overlap.
pub fn footprints_overlap<T: Real>(a: &Footprint<T>, b: &Footprint<T>) -> bool {
    let ca = a.corners();
    let cb = b.corners();
    for axis in a.axes().into_iter().chain(b.axes()) {
        let (amin, amax) = project_onto(&ca, axis);
        let (bmin, bmax) = project_onto(&cb, axis);
        if amax <= bmin || bmax <= amin {
            return false;
        }
    }
    true
}

/// Every overlapping vehicle pair and every off-road vehicle, sorted.
pub fn detect_collisions<T: Real>(world: &WorldState<T>, params: &DynamicsParams<T>) -> Vec<ContactEvent> {
    let track = &world.track;
    let edge = track.road_width() * T::lit(0.5) + params.off_track_margin;
    let prints: Vec<Footprint<T>> = world
        .vehicles
        .iter()
        .zip(&world.geometry)
        .map(|(v, g)| Footprint::of(v, g, track))
        .collect();
    let reach: Vec<T> = prints.iter().map(|p| p.half_length.hypot(p.half_width)).collect();

    let mut events = Vec::new();
    for i in 0..prints.len() {
        if world.vehicles[i].lateral.abs() > edge {
            events.push(ContactEvent::OffRoad(i));
        }
        for j in (i + 1)..prints.len() {
            // cheap along-track prefilter; lateral offsets on arcs stretch
            // distances by at most a few percent
            let gap = track.signed_gap(world.vehicles[i].s, world.vehicles[j].s).abs();
            if gap > (reach[i] + reach[j]) * T::lit(1.5) + T::one() {
                continue;
            }
            if prints[i].center.dist(prints[j].center) >= reach[i] + reach[j] {
                continue;
            }
            if footprints_overlap(&prints[i], &prints[j]) {
                events.push(ContactEvent::Pair(i, j));
            }
        }
    }
    events.sort();
    events
}

/// Add `damage_per_contact_tick` to every vehicle involved in an event.
pub fn apply_damage<T: Real>(world: &mut WorldState<T>, events: &[ContactEvent], params: &DynamicsParams<T>) {
    let rate = params.damage_per_contact_tick;
    for e in events {
        match *e {
            ContactEvent::Pair(a, b) => {
                world.vehicles[a].damage += rate;
                world.vehicles[b].damage += rate;
            }
            ContactEvent::OffRoad(i) => world.vehicles[i].damage += rate,
        }
    }
}
