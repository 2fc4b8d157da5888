//! The fixed-timestep simulation loop.

use std::io::{self, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use super::output::{log_header, write_log_rows};
use super::scenario::{ScenarioErrors, ScenarioSpec, StopCondition};
use crate::controller::{control_step, AgentStateKind, ControlOutput, ControllerState};
use crate::dynamics::{apply_damage, detect_collisions, step_vehicle};
use crate::sensors::{ground_truth_indicators, opponents, Indicators, Perceiver};
use crate::track::Track;
use crate::types::{Role, VehicleState, WorldState};

/// RNG stream numbers. Every consumer gets its own ChaCha8 stream of the
/// scenario seed, so adding a consumer never shifts another one.
pub const STREAM_SPAWN: u64 = 0;
pub const STREAM_NOISE: u64 = 1;

pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid scenario:\n{0}")]
    Invalid(#[from] ScenarioErrors),
    #[error("log contains no host rows")]
    EmptyLog,
    #[error("log is malformed: {0}")]
    MalformedLog(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    /// Run per-vehicle control and stepping on the rayon pool.
    pub parallel: bool,
}

/// One host sample per tick.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HostSample {
    pub tick: u64,
    pub time: f64,
    pub s: f64,
    pub distance: f64,
    pub lateral: f64,
    pub speed: f64,
    pub agent_state: AgentStateKind,
    pub focus: Option<usize>,
    pub offset: f64,
    pub truth: Indicators<f64>,
    pub perceived: Indicators<f64>,
    /// Whether `perceived` was freshly drawn this tick.
    pub fresh: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OvertakeEvent {
    pub tick: u64,
    pub agent: usize,
    pub host_lane: usize,
    pub agent_lane: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EndReason {
    Duration,
    Laps,
    TimeLimit,
    TrackEnd,
}

impl EndReason {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Duration => "duration",
            Self::Laps => "laps",
            Self::TimeLimit => "time_limit",
            Self::TrackEnd => "track_end",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunMetrics {
    pub ticks: u64,
    pub sim_time: f64,
    pub end_reason: EndReason,
    pub host_id: usize,
    pub damage: Vec<u64>,
    pub roles: Vec<Role>,
    pub target_speeds: Vec<f64>,
    pub host_distance: f64,
    pub laps_completed: u64,
    pub overtakes: Vec<OvertakeEvent>,
    pub mean_abs_to_middle: f64,
    pub max_abs_to_middle: f64,
    /// Mean |perceived - truth| over all host ticks: angle, to_middle, d1..d3.
    pub dmae: [f64; 5],
    /// Same, over the ticks with a fresh estimate only.
    pub smae: [f64; 5],
}

impl RunMetrics {
    pub fn host_damage(&self) -> u64 {
        self.damage[self.host_id]
    }

    pub fn agent_damage(&self) -> u64 {
        self.total_damage() - self.host_damage()
    }

    pub fn total_damage(&self) -> u64 {
        self.damage.iter().sum()
    }

    pub fn overtake_count(&self) -> usize {
        self.overtakes.len()
    }
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub metrics: RunMetrics,
    pub host_trace: Vec<HostSample>,
}

/// Everything a live simulation holds between ticks.
pub struct Simulation {
    pub spec: ScenarioSpec,
    pub world: WorldState<f64>,
    pub controllers: Vec<ControllerState<f64>>,
    perceiver: Perceiver<f64>,
    host_id: usize,
    last_outputs: Vec<Option<ControlOutput<f64>>>,
    host_truth: Indicators<f64>,
    host_perceived: Indicators<f64>,
}

impl Simulation {
    pub fn new(spec: ScenarioSpec) -> Result<Self, SimError> {
        spec.validate()?;
        let track = Track::new(spec.track.clone()).expect("validated track");
        let mut spawn_rng = stream_rng(spec.seed, STREAM_SPAWN);
        let mut world = WorldState::new(track.clone());
        let mut controllers = Vec::with_capacity(spec.vehicles.len());
        for (i, v) in spec.vehicles.iter().enumerate() {
            // one draw per vehicle, used or not, keeps later draws stable
            let u: f64 = spawn_rng.random();
            let target = match (v.role, v.target_speed) {
                (_, Some(t)) => t,
                (Role::Host, None) => spec.controller.v_max_host,
                (Role::Agent, None) => (0.5 + 0.5 * u) * spec.controller.v_max_agent,
            };
            let speed = v.speed.unwrap_or(target);
            let lateral = spec.initial_lateral(i, &track);
            let state = VehicleState::spawn(&track, v.role, v.s, lateral, speed).expect("validated spawn");
            world.push(state, v.geometry);
            let mut cs = ControllerState::new(spec.controller, target);
            cs.use_agent_state = !spec.disable_agent_state;
            controllers.push(cs);
        }
        let host_id = world.host_id().expect("validated host");
        let mut noise = spec.noise;
        noise.rng_seed = spec.seed;
        let perceiver = Perceiver::with_rng(noise, stream_rng(spec.seed, STREAM_NOISE));
        let n = world.vehicles.len();
        Ok(Self {
            spec,
            world,
            controllers,
            perceiver,
            host_id,
            last_outputs: vec![None; n],
            host_truth: Indicators::clear(),
            host_perceived: Indicators::clear(),
        })
    }

    pub fn host_id(&self) -> usize {
        self.host_id
    }

    pub fn last_outputs(&self) -> &[Option<ControlOutput<f64>>] {
        &self.last_outputs
    }

    pub fn host_indicators(&self) -> (Indicators<f64>, Indicators<f64>) {
        (self.host_truth, self.host_perceived)
    }

    /// Advance one tick: sense, perceive, control, step, collide.
    pub fn step(&mut self, parallel: bool) -> bool {
        let world = &self.world;
        let host = self.host_id;
        let host_truth = ground_truth_indicators(world, host).expect("host exists");
        let host_perceived = self.perceiver.perceive(&host_truth, world.tick);
        let fresh = self.perceiver.last_was_fresh();
        let range = self.spec.controller.detect_range;
        let dyn_params = self.spec.dynamics;

        let advance = |i: usize, cs: &mut ControllerState<f64>| {
            let me = &world.vehicles[i];
            let ind = if i == host {
                host_perceived
            } else {
                ground_truth_indicators(world, i).expect("vehicle exists")
            };
            let readings = opponents(world, i, range);
            let out = control_step(&ind, &readings, me, cs);
            let next = step_vehicle(me, &out.command, &world.geometry[i], &dyn_params, &world.track);
            (next, out)
        };

        let results: Vec<(VehicleState<f64>, ControlOutput<f64>)> = if parallel {
            self.controllers
                .par_iter_mut()
                .enumerate()
                .map(|(i, cs)| advance(i, cs))
                .collect()
        } else {
            self.controllers
                .iter_mut()
                .enumerate()
                .map(|(i, cs)| advance(i, cs))
                .collect()
        };

        for (i, (next, out)) in results.into_iter().enumerate() {
            self.world.vehicles[i] = next;
            self.last_outputs[i] = Some(out);
        }
        self.world.tick += 1;
        let events = detect_collisions(&self.world, &self.spec.dynamics);
        apply_damage(&mut self.world, &events, &self.spec.dynamics);
        self.host_truth = host_truth;
        self.host_perceived = host_perceived;
        fresh
    }
}

/// Run a scenario, keeping only metrics and the host trace.
pub fn run(spec: &ScenarioSpec, opts: RunOptions) -> Result<RunResult, SimError> {
    run_inner(spec, opts, None::<&mut io::Sink>)
}

/// Run a scenario and stream the CSV trajectory log into `log`.
pub fn run_with_log<W: Write>(spec: &ScenarioSpec, opts: RunOptions, log: &mut W) -> Result<RunResult, SimError> {
    run_inner(spec, opts, Some(log))
}

fn run_inner<W: Write>(spec: &ScenarioSpec, opts: RunOptions, mut log: Option<&mut W>) -> Result<RunResult, SimError> {
    let mut sim = Simulation::new(spec.clone())?;
    let dt = spec.dynamics.dt;
    let host = sim.host_id;
    let track = sim.world.track.clone();
    let total_len = track.total_length();
    let half_road = track.road_width() / 2.0;
    let n = sim.world.vehicles.len();
    let target_speeds: Vec<f64> = sim.controllers.iter().map(|c| c.v_cap).collect();

    let (max_ticks, lap_goal) = match spec.stop {
        StopCondition::Seconds(d) => ((d / dt).round() as u64, None),
        StopCondition::Laps { laps, time_limit } => ((time_limit / dt).round() as u64, Some(laps * total_len)),
    };

    if let Some(w) = log.as_deref_mut() {
        w.write_all(log_header().as_bytes())?;
    }

    let mut trace = Vec::with_capacity(max_ticks.min(1 << 20) as usize);
    let gap_of = |w: &WorldState<f64>, j: usize| track.signed_gap(w.vehicles[host].s, w.vehicles[j].s);
    let mut prev_gap: Vec<f64> = (0..n).map(|j| gap_of(&sim.world, j)).collect();
    let mut overtakes = Vec::new();
    let mut end_reason = match spec.stop {
        StopCondition::Seconds(_) => EndReason::Duration,
        StopCondition::Laps { .. } => EndReason::TimeLimit,
    };
    let mut row_buf = String::new();

    while sim.world.tick < max_ticks {
        let fresh = sim.step(opts.parallel);
        let w = &sim.world;
        let tick = w.tick;
        let out = sim.last_outputs[host].expect("stepped");
        let hv = &w.vehicles[host];
        trace.push(HostSample {
            tick,
            time: tick as f64 * dt,
            s: hv.s,
            distance: hv.distance,
            lateral: hv.lateral,
            speed: hv.speed,
            agent_state: out.agent_state.value,
            focus: out.agent_state.focus.map(|f| f.id),
            offset: out.offset,
            truth: sim.host_truth,
            perceived: sim.host_perceived,
            fresh,
        });

        // host passes an agent: the agent's gap goes from ahead to behind
        for (j, prev) in prev_gap.iter_mut().enumerate() {
            if j == host {
                continue;
            }
            let g = gap_of(w, j);
            let local = g.abs() < 50.0 && prev.abs() < 50.0;
            let on_road = hv.lateral.abs() <= half_road && w.vehicles[j].lateral.abs() <= half_road;
            if local && on_road && *prev > 0.0 && g <= 0.0 {
                overtakes.push(OvertakeEvent {
                    tick,
                    agent: j,
                    host_lane: track.lane_of(hv.lateral),
                    agent_lane: track.lane_of(w.vehicles[j].lateral),
                });
            }
            *prev = g;
        }

        if let Some(wr) = log.as_deref_mut() {
            row_buf.clear();
            write_log_rows(&mut row_buf, &sim, dt);
            wr.write_all(row_buf.as_bytes())?;
        }

        if let Some(goal) = lap_goal {
            if sim.world.vehicles[host].distance >= goal {
                end_reason = EndReason::Laps;
                break;
            }
        }
        if !track.is_closed() && sim.world.vehicles.iter().any(|v| v.s >= total_len) {
            end_reason = EndReason::TrackEnd;
            break;
        }
    }

    let w = &sim.world;
    let hv = &w.vehicles[host];
    let ticks = w.tick;
    let (mean_abs, max_abs) = if trace.is_empty() {
        (0.0, 0.0)
    } else {
        let sum: f64 = trace.iter().map(|s| s.lateral.abs()).sum();
        let max = trace.iter().map(|s| s.lateral.abs()).fold(0.0, f64::max);
        (sum / trace.len() as f64, max)
    };
    let dmae = compute_dmae(&trace).unwrap_or([0.0; 5]);
    let fresh_only: Vec<HostSample> = trace.iter().filter(|s| s.fresh).copied().collect();
    let smae = compute_dmae(&fresh_only).unwrap_or([0.0; 5]);
    let laps_completed = if track.is_closed() {
        (hv.distance / total_len).floor().max(0.0) as u64
    } else {
        0
    };

    let metrics = RunMetrics {
        ticks,
        sim_time: ticks as f64 * dt,
        end_reason,
        host_id: host,
        damage: w.vehicles.iter().map(|v| v.damage).collect(),
        roles: w.vehicles.iter().map(|v| v.role).collect(),
        target_speeds,
        host_distance: hv.distance,
        laps_completed,
        overtakes,
        mean_abs_to_middle: mean_abs,
        max_abs_to_middle: max_abs,
        dmae,
        smae,
    };
    if let Some(wr) = log {
        wr.flush()?;
    }
    Ok(RunResult {
        metrics,
        host_trace: trace,
    })
}

/// Per-channel mean |perceived - truth| over host samples.
pub fn compute_dmae(samples: &[HostSample]) -> Result<[f64; 5], SimError> {
    if samples.is_empty() {
        return Err(SimError::EmptyLog);
    }
    let mut sum = [0.0; 5];
    for s in samples {
        let t = s.truth.channels();
        let p = s.perceived.channels();
        for k in 0..5 {
            sum[k] += (p[k] - t[k]).abs();
        }
    }
    Ok(sum.map(|x| x / samples.len() as f64))
}
