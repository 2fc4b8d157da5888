//! Affordance indicators, the short-range opponent sensor, and the
//! perception noise model standing in for the image-to-indicator network.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Open01, StandardNormal};
use thiserror::Error;

use crate::real::Real;
use crate::types::WorldState;

/// Sentinel and cap for the preceding-car distances.
pub const D_CAP: f64 = 60.0;

/// The five affordance indicators consumed by one controller.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Indicators<T> {
    /// Track tangent minus vehicle heading.
    pub angle: T,
    /// Signed distance to the road centerline, positive = left.
    pub to_middle: T,
    /// Gap to the preceding vehicle in lane 1 (left), capped at 60 m.
    pub d1: T,
    pub d2: T,
    pub d3: T,
}

impl<T: Real> Indicators<T> {
    /// Indicators of a centered, aligned vehicle on an empty road.
    pub fn clear() -> Self {
        let cap = T::lit(D_CAP);
        Self {
            angle: T::zero(),
            to_middle: T::zero(),
            d1: cap,
            d2: cap,
            d3: cap,
        }
    }

    pub fn channels(&self) -> [T; 5] {
        [self.angle, self.to_middle, self.d1, self.d2, self.d3]
    }

    pub fn from_channels(c: [T; 5]) -> Self {
        Self {
            angle: c[0],
            to_middle: c[1],
            d1: c[2],
            d2: c[3],
            d3: c[4],
        }
    }

    pub fn distance(&self, lane: usize) -> T {
        match lane {
            1 => self.d1,
            2 => self.d2,
            3 => self.d3,
            _ => T::lit(D_CAP),
        }
    }
}

pub const CHANNEL_NAMES: [&str; 5] = ["angle", "to_middle", "d1", "d2", "d3"];

/// What the short-range sensor reports about one neighboring vehicle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OpponentReading<T> {
    pub id: usize,
    /// Signed along-track centerline distance, positive = ahead of the observer.
    pub d_exact: T,
    pub lane_index: usize,
    pub to_middle: T,
    /// Absolute heading.
    pub yaw: T,
    pub speed: T,
    /// The two vehicle bodies share at least one lane band.
    pub same_lane: bool,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SensorError {
    #[error("unknown vehicle id {0}")]
    UnknownVehicle(usize),
}

/// Ground-truth indicators of vehicle `id`.
///
/// `d_i` is the bumper gap (centerline gap minus half of each car length,
/// floored at zero) to the nearest vehicle ahead whose body overlaps lane
/// `i`, or 60 when there is none within 60 m of centerline distance.
pub fn ground_truth_indicators<T: Real>(world: &WorldState<T>, id: usize) -> Result<Indicators<T>, SensorError> {
    let me = world.vehicles.get(id).ok_or(SensorError::UnknownVehicle(id))?;
    let my_len = world.geometry[id].length;
    let cap = T::lit(D_CAP);
    let half = T::lit(0.5);
    let mut d = [cap; 3];
    let lanes = world.track.lane_count().min(3);
    for (j, other) in world.vehicles.iter().enumerate() {
        if j == id {
            continue;
        }
        let gap = world.track.signed_gap(me.s, other.s);
        if !(gap > T::zero()) || gap > cap {
            continue;
        }
        let geom = &world.geometry[j];
        let bumper = (gap - (my_len + geom.length) * half).max(T::zero());
        let mask = world.track.lanes_touched(other.lateral, geom.width * half);
        for (lane, slot) in d.iter_mut().enumerate().take(lanes) {
            if mask & (1 << lane) != 0 && bumper < *slot {
                *slot = bumper;
            }
        }
    }
    Ok(Indicators {
        angle: -me.yaw_rel,
        to_middle: me.lateral,
        d1: d[0],
        d2: d[1],
        d3: d[2],
    })
}

/// Every other vehicle within `range` meters of along-track distance,
/// nearest first.
pub fn opponents<T: Real>(world: &WorldState<T>, observer: usize, range: T) -> Vec<OpponentReading<T>> {
    let Some(me) = world.vehicles.get(observer) else {
        return Vec::new();
    };
    let half = T::lit(0.5);
    let my_lanes = world
        .track
        .lanes_touched(me.lateral, world.geometry[observer].width * half);
    let mut out: Vec<OpponentReading<T>> = world
        .vehicles
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != observer)
        .filter_map(|(j, v)| {
            let d = world.track.signed_gap(me.s, v.s);
            if d.abs() > range {
                return None;
            }
            let lanes = world.track.lanes_touched(v.lateral, world.geometry[j].width * half);
            Some(OpponentReading {
                id: j,
                d_exact: d,
                lane_index: world.track.lane_of(v.lateral),
                to_middle: v.lateral,
                yaw: v.heading,
                speed: v.speed,
                same_lane: lanes & my_lanes != 0,
            })
        })
        .collect();
    out.sort_by(|a, b| {
        a.d_exact
            .abs()
            .partial_cmp(&b.d_exact.abs())
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.id.cmp(&b.id))
    });
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NoiseDistribution {
    /// Scale `b = mae`; the mean absolute deviation of a Laplace law is `b`.
    #[default]
    Laplace,
    /// `sigma = mae * sqrt(pi / 2)`.
    Gaussian,
}

impl NoiseDistribution {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "laplace" => Some(Self::Laplace),
            "gaussian" => Some(Self::Gaussian),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Laplace => "laplace",
            Self::Gaussian => "gaussian",
        }
    }
}

/// Per-channel indicator error model with zero-order hold between
/// perception updates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseModel {
    pub mae_angle: f64,
    pub mae_to_middle: f64,
    pub mae_d1: f64,
    pub mae_d2: f64,
    pub mae_d3: f64,
    pub distribution: NoiseDistribution,
    /// A fresh estimate every `perception_period` physics ticks.
    pub perception_period: u32,
    pub rng_seed: u64,
}

/// Named presets: static MAEs of the three network variants on the
/// held-out track, plus the closed-loop (dynamic) MAEs of the AlexNet
/// variant. Order: angle, to_middle, d1, d2, d3.
pub const NOISE_PRESETS: [(&str, [f64; 5]); 5] = [
    ("none", [0.0, 0.0, 0.0, 0.0, 0.0]),
    ("alexnet+", [0.034, 0.539, 6.864, 7.048, 8.388]),
    ("googlenet", [0.041, 0.389, 5.190, 3.227, 5.905]),
    ("googlenet+", [0.029, 0.347, 6.055, 3.155, 5.450]),
    ("dynamic", [0.043, 0.397, 8.315, 9.233, 10.198]),
];

impl Default for NoiseModel {
    fn default() -> Self {
        Self::zero()
    }
}

impl NoiseModel {
    pub fn zero() -> Self {
        Self::from_maes([0.0; 5])
    }

    pub fn from_maes(m: [f64; 5]) -> Self {
        Self {
            mae_angle: m[0],
            mae_to_middle: m[1],
            mae_d1: m[2],
            mae_d2: m[3],
            mae_d3: m[4],
            distribution: NoiseDistribution::Laplace,
            perception_period: 2,
            rng_seed: 0,
        }
    }

    pub fn preset(name: &str) -> Option<Self> {
        NOISE_PRESETS
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, m)| Self::from_maes(*m))
    }

    pub fn maes(&self) -> [f64; 5] {
        [
            self.mae_angle,
            self.mae_to_middle,
            self.mae_d1,
            self.mae_d2,
            self.mae_d3,
        ]
    }

    pub fn set_maes(&mut self, m: [f64; 5]) {
        self.mae_angle = m[0];
        self.mae_to_middle = m[1];
        self.mae_d1 = m[2];
        self.mae_d2 = m[3];
        self.mae_d3 = m[4];
    }

    /// Same model with every MAE multiplied by `k`.
    pub fn scaled(mut self, k: f64) -> Self {
        self.set_maes(self.maes().map(|m| m * k));
        self
    }

    pub fn is_valid(&self) -> bool {
        self.perception_period >= 1 && self.maes().iter().all(|m| *m >= 0.0 && m.is_finite())
    }
}

/// Per-host perception state: RNG stream and the held estimate.
#[derive(Debug, Clone)]
pub struct Perceiver<T> {
    model: NoiseModel,
    rng: ChaCha8Rng,
    held: Option<Indicators<T>>,
    fresh: bool,
}

impl<T: Real> Perceiver<T> {
    pub fn new(model: NoiseModel) -> Self {
        Self::with_rng(model, ChaCha8Rng::seed_from_u64(model.rng_seed))
    }

    pub fn with_rng(model: NoiseModel, rng: ChaCha8Rng) -> Self {
        Self {
            model,
            rng,
            held: None,
            fresh: false,
        }
    }

    pub fn model(&self) -> &NoiseModel {
        &self.model
    }

    /// Whether the last [`perceive`](Self::perceive) call drew a fresh estimate.
    pub fn last_was_fresh(&self) -> bool {
        self.fresh
    }

    fn sample(&mut self, mae: f64) -> f64 {
        match self.model.distribution {
            NoiseDistribution::Laplace => {
                let u: f64 = self.rng.sample::<f64, _>(Open01) - 0.5;
                -mae * u.signum() * (1.0 - 2.0 * u.abs()).ln()
            }
            NoiseDistribution::Gaussian => {
                let z: f64 = self.rng.sample(StandardNormal);
                z * mae * (std::f64::consts::PI / 2.0).sqrt()
            }
        }
    }

    /// Estimated indicators at `tick`. On ticks divisible by the perception
    /// period the truth is corrupted with fresh noise; on the others the
    /// previous estimate is held unchanged.
    pub fn perceive(&mut self, truth: &Indicators<T>, tick: u64) -> Indicators<T> {
        let period = u64::from(self.model.perception_period.max(1));
        if let Some(held) = self.held {
            if !tick.is_multiple_of(period) {
                self.fresh = false;
                return held;
            }
        }
        let maes = self.model.maes();
        let mut out = truth.channels();
        for (ch, (value, mae)) in out.iter_mut().zip(maes).enumerate() {
            // always draw so the stream position is independent of the MAEs
            let e = self.sample(1.0);
            if mae > 0.0 {
                *value = *value + T::lit(e * mae);
            }
            if ch >= 2 {
                *value = value.clamp_to(T::zero(), T::lit(D_CAP));
            }
        }
        let est = Indicators::from_channels(out);
        self.held = Some(est);
        self.fresh = true;
        est
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::VehicleGeometry;
    use crate::track::{Track, TrackSpec};
    use crate::types::{Role, VehicleState};

    fn world(vs: &[(f64, f64)]) -> WorldState<f64> {
        let track = Track::new(TrackSpec::default()).unwrap();
        let mut w = WorldState::new(track.clone());
        for (i, &(s, lat)) in vs.iter().enumerate() {
            let role = if i == 0 { Role::Host } else { Role::Agent };
            let st = VehicleState::spawn(&track, role, s, lat, 15.0).unwrap();
            w.push(st, VehicleGeometry::default());
        }
        w
    }

    #[test]
    fn empty_road_identity() {
        let w = world(&[(100.0, 0.0)]);
        let ind = ground_truth_indicators(&w, 0).unwrap();
        assert_eq!(ind, Indicators::clear());
    }

    #[test]
    fn lateral_is_to_middle() {
        let w = world(&[(100.0, 1.2)]);
        let ind = ground_truth_indicators(&w, 0).unwrap();
        assert_eq!(ind.to_middle, 1.2);
        assert_eq!(ind.angle, 0.0);
    }

    #[test]
    fn preceding_car_in_left_lane() {
        // agent 30 m ahead centered in lane 1, host in lane 2
        let w = world(&[(100.0, 0.0), (130.0, 4.0)]);
        let ind = ground_truth_indicators(&w, 0).unwrap();
        assert_eq!(ind.d1, 30.0 - 4.5);
        assert_eq!(ind.d2, 60.0);
        assert_eq!(ind.d3, 60.0);
    }

    #[test]
    fn straddling_car_counts_in_both_lanes() {
        let w = world(&[(100.0, 0.0), (120.0, -2.0)]);
        let ind = ground_truth_indicators(&w, 0).unwrap();
        assert_eq!(ind.d1, 60.0);
        assert_eq!(ind.d2, 15.5);
        assert_eq!(ind.d3, 15.5);
    }

    #[test]
    fn cars_behind_are_not_preceding() {
        let w = world(&[(100.0, 0.0), (90.0, 0.0)]);
        assert_eq!(ground_truth_indicators(&w, 0).unwrap().d2, 60.0);
    }

    #[test]
    fn unknown_vehicle() {
        let w = world(&[(0.0, 0.0)]);
        assert_eq!(ground_truth_indicators(&w, 3), Err(SensorError::UnknownVehicle(3)));
    }

    #[test]
    fn opponent_range_and_order() {
        let w = world(&[(100.0, 0.0)]);
        assert!(opponents(&w, 0, 60.0).is_empty());

        let w = world(&[(100.0, 0.0), (200.0, 0.0)]);
        assert!(opponents(&w, 0, 60.0).is_empty());

        let w = world(&[(100.0, 0.0), (130.0, 4.0), (90.0, 0.0)]);
        let r = opponents(&w, 0, 60.0);
        assert_eq!(r.len(), 2);
        assert_eq!(r[0].d_exact, -10.0);
        assert!(r[0].same_lane);
        assert_eq!(r[1].d_exact, 30.0);
        assert_eq!(r[1].lane_index, 1);
        assert!(!r[1].same_lane);
    }

    #[test]
    fn opponents_wrap_around_loop() {
        let w = world(&[(3995.0, 0.0), (10.0, 0.0)]);
        let r = opponents(&w, 0, 60.0);
        assert!((r[0].d_exact - 15.0).abs() < 1e-9);
        let back = opponents(&w, 1, 60.0);
        assert!((back[0].d_exact + 15.0).abs() < 1e-9);
    }

    #[test]
    fn zero_noise_is_identity() {
        let mut p = Perceiver::<f64>::new(NoiseModel::zero());
        let truth = Indicators {
            angle: 0.01,
            to_middle: -0.7,
            d1: 12.0,
            d2: 60.0,
            d3: 0.0,
        };
        for t in 0..10 {
            assert_eq!(p.perceive(&truth, t), truth);
        }
    }

    #[test]
    fn hold_between_updates() {
        let mut model = NoiseModel::preset("googlenet+").unwrap();
        model.perception_period = 2;
        let mut p = Perceiver::<f64>::new(model);
        let truth = Indicators::clear();
        let a = p.perceive(&truth, 0);
        assert!(p.last_was_fresh());
        let moved = Indicators {
            to_middle: 1.0,
            ..truth
        };
        let b = p.perceive(&moved, 1);
        assert!(!p.last_was_fresh());
        assert_eq!(a, b);
        let c = p.perceive(&moved, 2);
        assert_ne!(b, c);
    }

    #[test]
    fn first_call_is_fresh_even_off_period() {
        let mut model = NoiseModel::preset("googlenet").unwrap();
        model.perception_period = 3;
        let mut p = Perceiver::<f64>::new(model);
        p.perceive(&Indicators::clear(), 5);
        assert!(p.last_was_fresh());
    }

    #[test]
    fn distances_stay_clamped() {
        let mut model = NoiseModel::preset("dynamic").unwrap().scaled(10.0);
        model.perception_period = 1;
        let mut p = Perceiver::<f64>::new(model);
        for t in 0..2000 {
            let est = p.perceive(&Indicators::clear(), t);
            for d in [est.d1, est.d2, est.d3] {
                assert!((0.0..=60.0).contains(&d));
            }
        }
    }

    #[test]
    fn presets_by_name() {
        let m = NoiseModel::preset("googlenet+").unwrap();
        assert_eq!(m.mae_to_middle, 0.347);
        assert_eq!(m.mae_angle, 0.029);
        assert_eq!([m.mae_d1, m.mae_d2, m.mae_d3], [6.055, 3.155, 5.450]);
        assert_eq!(m.perception_period, 2);
        assert!(NoiseModel::preset("vgg").is_none());
    }
}
