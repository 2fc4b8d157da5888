//! Scenarios, the simulation loop, trajectory logs and run metrics.

mod engine;
mod output;
mod scenario;

pub use engine::{
    compute_dmae, run, run_with_log, stream_rng, EndReason, HostSample, OvertakeEvent, RunMetrics, RunOptions,
    RunResult, SimError, Simulation, STREAM_NOISE, STREAM_SPAWN,
};
pub use output::{compute_dmae_csv, fmt_num, log_header, metrics_text};
pub use scenario::{
    load_scenario, parse_scenario, ScenarioError, ScenarioErrors, ScenarioSpec, StopCondition, VehicleSpec,
    DEFAULT_TIME_LIMIT, MAX_AGENTS,
};
