//! Scenario description, text format and validation.
//!
//! The text format is line oriented:
//!
//! ```text
//! # comment
//! [track]
//! oval = 4000 200          # length, turn radius
//! [vehicle]
//! role = host
//! s = 0
//! lane = 2
//! [vehicle]
//! role = agent
//! s = 60
//! lane = 2
//! target_speed = 10
//! [noise]
//! preset = googlenet+
//! [run]
//! laps = 1
//! seed = 7
//! ```
//!
//! See `scenarios/README.md` in the repository for the full grammar.

use std::fmt;

use crate::dynamics::{footprints_overlap, DynamicsParams, Footprint, VehicleGeometry};
use crate::sensors::{NoiseDistribution, NoiseModel};
use crate::track::{Segment, Track, TrackSpec};
use crate::types::{ControllerParams, Role, VehicleState};

/// Most agents a scenario may hold.
pub const MAX_AGENTS: usize = 20;

#[derive(Debug, Clone, PartialEq)]
pub struct VehicleSpec {
    pub role: Role,
    pub s: f64,
    /// Lane number, 1 = leftmost.
    pub lane: usize,
    /// Initial lateral position; overrides the lane center when present.
    pub lateral: Option<f64>,
    /// Cruise speed. Drawn from the scenario seed when absent (agents) or
    /// set to the host cap (host).
    pub target_speed: Option<f64>,
    /// Initial speed, defaults to the target speed.
    pub speed: Option<f64>,
    pub geometry: VehicleGeometry<f64>,
    /// Line of the `[vehicle]` header, 0 when built in code.
    pub line: usize,
}

impl VehicleSpec {
    pub fn new(role: Role, s: f64, lane: usize) -> Self {
        Self {
            role,
            s,
            lane,
            lateral: None,
            target_speed: None,
            speed: None,
            geometry: VehicleGeometry::default(),
            line: 0,
        }
    }

    pub fn with_target_speed(mut self, v: f64) -> Self {
        self.target_speed = Some(v);
        self
    }

    pub fn with_lateral(mut self, lateral: f64) -> Self {
        self.lateral = Some(lateral);
        self
    }

    pub fn with_speed(mut self, v: f64) -> Self {
        self.speed = Some(v);
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StopCondition {
    Seconds(f64),
    /// Host laps, bounded by `time_limit` seconds.
    Laps {
        laps: f64,
        time_limit: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSpec {
    pub track: TrackSpec<f64>,
    pub vehicles: Vec<VehicleSpec>,
    pub noise: NoiseModel,
    pub controller: ControllerParams<f64>,
    pub dynamics: DynamicsParams<f64>,
    pub stop: StopCondition,
    pub seed: u64,
    pub disable_agent_state: bool,
}

pub const DEFAULT_TIME_LIMIT: f64 = 900.0;

impl Default for ScenarioSpec {
    /// Default loop, no vehicles, no noise, 60 s.
    fn default() -> Self {
        Self {
            track: TrackSpec::default(),
            vehicles: Vec::new(),
            noise: NoiseModel::zero(),
            controller: ControllerParams::default(),
            dynamics: DynamicsParams::default(),
            stop: StopCondition::Seconds(60.0),
            seed: 0,
            disable_agent_state: false,
        }
    }
}

/// One problem with a scenario. `line` is 0 when no source line applies.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScenarioError {
    pub line: usize,
    pub field: String,
    pub reason: String,
}

impl ScenarioError {
    fn new(line: usize, field: impl Into<String>, reason: impl Into<String>) -> Self {
        Self {
            line,
            field: field.into(),
            reason: reason.into(),
        }
    }
}

impl fmt::Display for ScenarioError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.line > 0 {
            write!(f, "line {}: {}: {}", self.line, self.field, self.reason)
        } else {
            write!(f, "{}: {}", self.field, self.reason)
        }
    }
}

/// All problems found in a scenario.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScenarioErrors(pub Vec<ScenarioError>);

impl fmt::Display for ScenarioErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, e) in self.0.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{e}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ScenarioErrors {}

impl From<ScenarioError> for ScenarioErrors {
    fn from(e: ScenarioError) -> Self {
        Self(vec![e])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Section {
    Track,
    Vehicle,
    Noise,
    Controller,
    Dynamics,
    Run,
}

impl Section {
    fn parse(name: &str) -> Option<Self> {
        Some(match name {
            "track" => Self::Track,
            "vehicle" => Self::Vehicle,
            "noise" => Self::Noise,
            "controller" => Self::Controller,
            "dynamics" => Self::Dynamics,
            "run" => Self::Run,
            _ => return None,
        })
    }
}

fn num(v: &str) -> Result<f64, String> {
    let x: f64 = v.parse().map_err(|_| format!("'{v}' is not a number"))?;
    if x.is_finite() {
        Ok(x)
    } else {
        Err(format!("'{v}' is not finite"))
    }
}

fn count(v: &str) -> Result<usize, String> {
    v.parse().map_err(|_| format!("'{v}' is not a non-negative integer"))
}

fn boolean(v: &str) -> Result<bool, String> {
    match v {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(format!("'{v}' is not true or false")),
    }
}

fn numbers(v: &str, n: usize) -> Result<Vec<f64>, String> {
    let out = v.split_whitespace().map(num).collect::<Result<Vec<_>, _>>()?;
    if out.len() == n {
        Ok(out)
    } else {
        Err(format!("expected {n} numbers, got {}", out.len()))
    }
}

fn segment(v: &str) -> Result<Segment<f64>, String> {
    let mut it = v.split_whitespace();
    let kind = it.next().unwrap_or("");
    let rest: Vec<&str> = it.collect();
    let rest = rest.join(" ");
    match kind {
        "straight" => Ok(Segment::Straight {
            length: numbers(&rest, 1)?[0],
        }),
        "arc" => {
            let p = numbers(&rest, 2)?;
            Ok(Segment::Arc {
                radius: p[0],
                angle: p[1].to_radians(),
            })
        }
        _ => Err(format!("unknown segment kind '{kind}' (straight or arc)")),
    }
}

macro_rules! float_fields {
    ($target:expr, $key:expr, $value:expr, [$($f:ident),* $(,)?]) => {
        match $key {
            $(stringify!($f) => {
                $target.$f = num($value)?;
                return Ok(());
            })*
            _ => {}
        }
    };
}

fn set_controller(p: &mut ControllerParams<f64>, key: &str, value: &str) -> Result<(), String> {
    float_fields!(
        p,
        key,
        value,
        [
            steer_lock,
            lane_width,
            road_width,
            detect_range,
            near_threshold,
            lateral_lane_threshold,
            occupancy_gap,
            tcs_slip,
            tcs_range,
            abs_speed,
            abs_slip,
            abs_range,
            offset_step,
            filter_mix_own,
            filter_mix_agent,
            brake_decel,
            reaction_margin,
            mu,
            gravity,
            curvature_floor,
            curvature_window,
            v_max_host,
            v_max_agent,
        ]
    );
    Err(format!("unknown key '{key}'"))
}

fn set_dynamics(p: &mut DynamicsParams<f64>, key: &str, value: &str) -> Result<(), String> {
    float_fields!(
        p,
        key,
        value,
        [
            dt,
            max_engine_accel,
            max_brake_decel,
            drag_coeff,
            wheel_slip_gain_accel,
            wheel_slip_gain_brake,
            slip_ref_speed,
            steer_lock,
            off_track_margin,
        ]
    );
    match key {
        "damage_per_contact_tick" => {
            p.damage_per_contact_tick = value
                .parse()
                .map_err(|_| format!("'{value}' is not a non-negative integer"))?;
            Ok(())
        }
        _ => Err(format!("unknown key '{key}'")),
    }
}

fn set_noise(n: &mut NoiseModel, key: &str, value: &str) -> Result<(), String> {
    float_fields!(n, key, value, [mae_angle, mae_to_middle, mae_d1, mae_d2, mae_d3]);
    match key {
        "preset" => {
            let p = NoiseModel::preset(value).ok_or_else(|| format!("unknown noise preset '{value}'"))?;
            n.set_maes(p.maes());
        }
        "distribution" => {
            n.distribution = NoiseDistribution::parse(value)
                .ok_or_else(|| format!("unknown distribution '{value}' (laplace or gaussian)"))?;
        }
        "perception_period" => {
            n.perception_period = value
                .parse()
                .map_err(|_| format!("'{value}' is not a positive integer"))?;
        }
        _ => return Err(format!("unknown key '{key}'")),
    }
    Ok(())
}

fn set_track(t: &mut TrackSpec<f64>, fresh: &mut bool, key: &str, value: &str) -> Result<(), String> {
    match key {
        "segment" => {
            let seg = segment(value)?;
            if *fresh {
                t.segments.clear();
                *fresh = false;
            }
            t.segments.push(seg);
        }
        "oval" => {
            let p = numbers(value, 2)?;
            t.segments = TrackSpec::oval(p[0], p[1]).segments;
            t.closed = true;
            *fresh = false;
        }
        "straight" => {
            t.segments = vec![Segment::Straight { length: num(value)? }];
            t.closed = false;
            *fresh = false;
        }
        "closed" => t.closed = boolean(value)?,
        "lane_count" => t.lane_count = count(value)?,
        "lane_width" => t.lane_width = num(value)?,
        "road_width" => t.road_width = num(value)?,
        _ => return Err(format!("unknown key '{key}'")),
    }
    Ok(())
}

fn set_vehicle(v: &mut VehicleSpec, key: &str, value: &str) -> Result<(), String> {
    match key {
        "role" => {
            v.role = match value {
                "host" => Role::Host,
                "agent" => Role::Agent,
                _ => return Err(format!("unknown role '{value}' (host or agent)")),
            }
        }
        "s" => v.s = num(value)?,
        "lane" => v.lane = count(value)?,
        "lateral" => v.lateral = Some(num(value)?),
        "target_speed" => v.target_speed = Some(num(value)?),
        "speed" => v.speed = Some(num(value)?),
        "length" => v.geometry.length = num(value)?,
        "width" => v.geometry.width = num(value)?,
        "wheelbase" => v.geometry.wheelbase = num(value)?,
        _ => return Err(format!("unknown key '{key}'")),
    }
    Ok(())
}

impl ScenarioSpec {
    fn set_run(&mut self, key: &str, value: &str) -> Result<(), String> {
        match key {
            "duration" => self.stop = StopCondition::Seconds(num(value)?),
            "laps" => {
                let time_limit = match self.stop {
                    StopCondition::Laps { time_limit, .. } => time_limit,
                    StopCondition::Seconds(_) => DEFAULT_TIME_LIMIT,
                };
                self.stop = StopCondition::Laps {
                    laps: num(value)?,
                    time_limit,
                };
            }
            "time_limit" => {
                let limit = num(value)?;
                match &mut self.stop {
                    StopCondition::Laps { time_limit, .. } => *time_limit = limit,
                    StopCondition::Seconds(_) => return Err("time_limit needs laps to be set first".into()),
                }
            }
            "seed" => {
                self.seed = value
                    .parse()
                    .map_err(|_| format!("'{value}' is not a 64-bit unsigned integer"))?
            }
            "disable_agent_state" => self.disable_agent_state = boolean(value)?,
            _ => return Err(format!("unknown key '{key}'")),
        }
        Ok(())
    }

    /// Apply a dotted override such as `controller.offset_step=0.2`,
    /// `noise.preset=googlenet` or `vehicle.3.target_speed=12`.
    pub fn apply_override(&mut self, key: &str, value: &str) -> Result<(), ScenarioError> {
        let err = |reason: String| ScenarioError::new(0, key, reason);
        let value = value.trim();
        let (section, rest) = key.split_once('.').ok_or_else(|| err("expected section.key".into()))?;
        match section {
            "track" => {
                let mut fresh = false;
                set_track(&mut self.track, &mut fresh, rest, value).map_err(err)
            }
            "noise" => set_noise(&mut self.noise, rest, value).map_err(err),
            "controller" => set_controller(&mut self.controller, rest, value).map_err(err),
            "dynamics" => set_dynamics(&mut self.dynamics, rest, value).map_err(err),
            "run" => self.set_run(rest, value).map_err(err),
            "vehicle" => {
                let (idx, field) = rest
                    .split_once('.')
                    .ok_or_else(|| err("expected vehicle.INDEX.key".into()))?;
                let idx: usize = idx
                    .parse()
                    .map_err(|_| err(format!("'{idx}' is not a vehicle index")))?;
                let n = self.vehicles.len();
                let v = self
                    .vehicles
                    .get_mut(idx)
                    .ok_or_else(|| err(format!("no vehicle {idx} (scenario has {n})")))?;
                set_vehicle(v, field, value).map_err(err)
            }
            _ => Err(err(format!("unknown section '{section}'"))),
        }
    }

    pub fn host_index(&self) -> Option<usize> {
        self.vehicles.iter().position(|v| v.role == Role::Host)
    }

    /// Initial lateral position of vehicle `i` on `track`.
    pub fn initial_lateral(&self, i: usize, track: &Track<f64>) -> f64 {
        let v = &self.vehicles[i];
        v.lateral.unwrap_or_else(|| track.lane_center(v.lane))
    }

    /// Check every invariant; reports all problems, not just the first.
    pub fn validate(&self) -> Result<(), ScenarioErrors> {
        let mut errs = Vec::new();
        let track = match Track::new(self.track.clone()) {
            Ok(t) => Some(t),
            Err(e) => {
                errs.push(ScenarioError::new(0, "track", e.to_string()));
                None
            }
        };
        if let Err(e) = self.controller.validate() {
            errs.push(ScenarioError::new(0, "controller", e.to_string()));
        }
        if !self.dynamics.is_valid() {
            errs.push(ScenarioError::new(0, "dynamics", "parameters out of range"));
        }
        if !self.noise.is_valid() {
            errs.push(ScenarioError::new(
                0,
                "noise",
                "MAEs must be finite and non-negative, perception_period at least 1",
            ));
        }
        match self.stop {
            StopCondition::Seconds(d) if !(d > 0.0) => {
                errs.push(ScenarioError::new(0, "run.duration", "must be positive"))
            }
            StopCondition::Laps { laps, time_limit } => {
                if !(laps > 0.0) {
                    errs.push(ScenarioError::new(0, "run.laps", "must be positive"));
                }
                if !(time_limit > 0.0) {
                    errs.push(ScenarioError::new(0, "run.time_limit", "must be positive"));
                }
                if !self.track.closed {
                    errs.push(ScenarioError::new(0, "run.laps", "laps need a closed track"));
                }
            }
            _ => {}
        }

        let hosts: Vec<&VehicleSpec> = self.vehicles.iter().filter(|v| v.role == Role::Host).collect();
        match hosts.len() {
            0 => errs.push(ScenarioError::new(0, "vehicle", "no host vehicle")),
            1 => {}
            _ => {
                let lines: Vec<String> = hosts.iter().map(|h| h.line.to_string()).collect();
                errs.push(ScenarioError::new(
                    hosts[1].line,
                    "vehicle.role",
                    format!("more than one host (vehicles on lines {})", lines.join(", ")),
                ));
            }
        }
        let agents = self.vehicles.len() - hosts.len();
        if agents > MAX_AGENTS {
            errs.push(ScenarioError::new(
                0,
                "vehicle",
                format!("{agents} agents, at most {MAX_AGENTS} allowed"),
            ));
        }

        for v in &self.vehicles {
            if v.lane < 1 || v.lane > self.track.lane_count {
                errs.push(ScenarioError::new(
                    v.line,
                    "vehicle.lane",
                    format!("lane {} outside 1..={}", v.lane, self.track.lane_count),
                ));
            }
            if !v.geometry.is_valid() {
                errs.push(ScenarioError::new(v.line, "vehicle", "geometry must be positive"));
            }
            let cap = self.controller.v_max(v.role);
            for (name, speed) in [("target_speed", v.target_speed), ("speed", v.speed)] {
                if let Some(x) = speed {
                    if !(x >= 0.0 && x <= cap) {
                        errs.push(ScenarioError::new(
                            v.line,
                            format!("vehicle.{name}"),
                            format!("{x} outside [0, {cap}]"),
                        ));
                    }
                }
            }
        }

        if let Some(track) = track {
            let mut prints = Vec::new();
            for (i, v) in self.vehicles.iter().enumerate() {
                let lateral = self.initial_lateral(i, &track);
                match VehicleState::spawn(&track, v.role, v.s, lateral, 0.0) {
                    Ok(st) => prints.push(Some(Footprint::of(&st, &v.geometry, &track))),
                    Err(e) => {
                        errs.push(ScenarioError::new(v.line, "vehicle.s", e.to_string()));
                        prints.push(None);
                    }
                }
            }
            for i in 0..prints.len() {
                for j in (i + 1)..prints.len() {
                    if let (Some(a), Some(b)) = (&prints[i], &prints[j]) {
                        if footprints_overlap(a, b) {
                            errs.push(ScenarioError::new(
                                self.vehicles[j].line,
                                "vehicle",
                                format!(
                                    "spawn overlaps vehicle {i} (lines {} and {})",
                                    self.vehicles[i].line, self.vehicles[j].line
                                ),
                            ));
                        }
                    }
                }
            }
        }

        if errs.is_empty() {
            Ok(())
        } else {
            Err(ScenarioErrors(errs))
        }
    }

    /// Stand-in for the published test setup: a 3-lane 4 km loop, the host
    /// in the middle lane and 20 agents spread around the loop on
    /// alternating lanes 190 m apart, agent speeds drawn from `seed`, noise preset
    /// googlenet+, one host lap.
    pub fn table2_analog(seed: u64) -> Self {
        let mut spec = Self {
            noise: NoiseModel::preset("googlenet+").expect("known preset"),
            stop: StopCondition::Laps {
                laps: 1.0,
                time_limit: DEFAULT_TIME_LIMIT,
            },
            seed,
            ..Self::default()
        };
        spec.vehicles.push(VehicleSpec::new(Role::Host, 0.0, 2));
        let spacing = 190.0;
        for k in 1..=MAX_AGENTS {
            let lane = [1, 3, 2][k % 3];
            spec.vehicles
                .push(VehicleSpec::new(Role::Agent, spacing * k as f64, lane));
        }
        spec
    }
}

/// Parse scenario text without checking cross-field invariants.
pub fn parse_scenario(text: &str) -> Result<ScenarioSpec, ScenarioErrors> {
    let mut spec = ScenarioSpec::default();
    let mut errs = Vec::new();
    let mut section: Option<Section> = None;
    let mut fresh_track = true;

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if let Some(name) = content.strip_prefix('[') {
            let Some(name) = name.strip_suffix(']') else {
                errs.push(ScenarioError::new(line, "section", "missing ']'"));
                continue;
            };
            match Section::parse(name.trim()) {
                Some(s) => {
                    section = Some(s);
                    if s == Section::Vehicle {
                        let mut v = VehicleSpec::new(Role::Agent, 0.0, 2);
                        v.line = line;
                        spec.vehicles.push(v);
                    }
                }
                None => {
                    section = None;
                    errs.push(ScenarioError::new(line, name.trim(), "unknown section"));
                }
            }
            continue;
        }
        let Some((key, value)) = content.split_once('=') else {
            errs.push(ScenarioError::new(line, content, "expected key = value"));
            continue;
        };
        let key = key.trim();
        let value = value.trim();
        let Some(sec) = section else {
            errs.push(ScenarioError::new(line, key, "key outside a known section"));
            continue;
        };
        let result = match sec {
            Section::Track => set_track(&mut spec.track, &mut fresh_track, key, value),
            Section::Vehicle => set_vehicle(spec.vehicles.last_mut().expect("vehicle pushed"), key, value),
            Section::Noise => set_noise(&mut spec.noise, key, value),
            Section::Controller => set_controller(&mut spec.controller, key, value),
            Section::Dynamics => set_dynamics(&mut spec.dynamics, key, value),
            Section::Run => spec.set_run(key, value),
        };
        if let Err(reason) = result {
            errs.push(ScenarioError::new(line, key, reason));
        }
    }
    if errs.is_empty() {
        Ok(spec)
    } else {
        Err(ScenarioErrors(errs))
    }
}

/// Parse and validate.
pub fn load_scenario(text: &str) -> Result<ScenarioSpec, ScenarioErrors> {
    let spec = parse_scenario(text)?;
    spec.validate()?;
    Ok(spec)
}
