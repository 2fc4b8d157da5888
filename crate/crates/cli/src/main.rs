//! `dpdrive`: run scenarios, the ablation pair, noise sweeps, and the
//! controller/reference equivalence check.
//!
//! Exit codes: 0 success, 1 property not confirmed, 2 usage or validation
//! error.

use std::fmt::Write as _;
use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use dpdrive::oracle;
use dpdrive::sensors::CHANNEL_NAMES;
use dpdrive::sim::{self, fmt_num, RunMetrics, RunOptions, ScenarioSpec};
use dpdrive::ControllerParams;

#[derive(Parser, Debug)]
#[command(
    name = "dpdrive",
    version,
    about = "Multi-lane traffic simulator with an affordance-indicator controller"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one scenario; writes log.csv and metrics.txt.
    Run(RunArgs),
    /// Run a scenario with and without agent-state logic and compare damage.
    Ablate(ScenarioArgs),
    /// Scale every noise MAE by each multiplier and run several seeds.
    Sweep(SweepArgs),
    /// Compare the controller with the reference procedures on random inputs.
    Verify(VerifyArgs),
}

#[derive(Args, Debug)]
struct ScenarioArgs {
    #[arg(long, value_name = "PATH")]
    scenario: PathBuf,
    #[arg(long, value_name = "DIR", default_value = "out")]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Override a scenario field, e.g. controller.offset_step=0.2.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Step vehicles on the thread pool (results are identical).
    #[arg(long)]
    parallel: bool,
}

#[derive(Args, Debug)]
struct RunArgs {
    #[command(flatten)]
    common: ScenarioArgs,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[command(flatten)]
    common: ScenarioArgs,
    #[arg(long, value_delimiter = ',', required = true)]
    multipliers: Vec<f64>,
    /// Number of seeds per multiplier, counting up from the scenario seed.
    #[arg(long, default_value_t = 10)]
    seeds: u64,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    #[arg(long, default_value_t = 10_000)]
    cases: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Perturb a controller parameter on the production side only.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

/// Failure with its exit code.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Self {
            code: 2,
            message: message.into(),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Self::usage(e.to_string())
    }
}

fn split_override(s: &str) -> Result<(&str, &str), Failure> {
    s.split_once('=')
        .map(|(k, v)| (k.trim(), v.trim()))
        .ok_or_else(|| Failure::usage(format!("override '{s}' is not KEY=VALUE")))
}

fn load(args: &ScenarioArgs) -> Result<ScenarioSpec, Failure> {
    let text = fs::read_to_string(&args.scenario)
        .map_err(|e| Failure::usage(format!("cannot read scenario {}: {e}", args.scenario.display())))?;
    let mut spec =
        sim::parse_scenario(&text).map_err(|e| Failure::usage(format!("{}:\n{e}", args.scenario.display())))?;
    for o in &args.overrides {
        let (k, v) = split_override(o)?;
        spec.apply_override(k, v)
            .map_err(|e| Failure::usage(format!("--set {o}: {e}")))?;
    }
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    spec.validate()
        .map_err(|e| Failure::usage(format!("{}:\n{e}", args.scenario.display())))?;
    Ok(spec)
}

fn out_dir(dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir)
        .map_err(|e| Failure::usage(format!("cannot create output directory {}: {e}", dir.display())))
}

fn run_once(spec: &ScenarioSpec, parallel: bool) -> Result<RunMetrics, Failure> {
    sim::run(spec, RunOptions { parallel })
        .map(|r| r.metrics)
        .map_err(|e| Failure::usage(e.to_string()))
}

fn summary(m: &RunMetrics) -> String {
    format!(
        "host damage {}, agent damage {}, host distance {} m, laps {}, overtakes {}",
        m.host_damage(),
        m.agent_damage(),
        fmt_num(m.host_distance),
        m.laps_completed,
        m.overtake_count()
    )
}

fn cmd_run(args: &RunArgs) -> Result<(), Failure> {
    let a = &args.common;
    let spec = load(a)?;
    out_dir(&a.out)?;
    let log_path = a.out.join("log.csv");
    let file =
        fs::File::create(&log_path).map_err(|e| Failure::usage(format!("cannot write {}: {e}", log_path.display())))?;
    let mut w = BufWriter::new(file);
    let result = sim::run_with_log(&spec, RunOptions { parallel: a.parallel }, &mut w)
        .map_err(|e| Failure::usage(e.to_string()))?;
    let track_len = dpdrive::Track::new(spec.track.clone())
        .map(|t| t.total_length())
        .unwrap_or(0.0);
    fs::write(a.out.join("metrics.txt"), sim::metrics_text(&result.metrics, track_len))?;
    println!("{}", summary(&result.metrics));
    println!(
        "wrote {} and {}",
        log_path.display(),
        a.out.join("metrics.txt").display()
    );
    Ok(())
}

fn cmd_ablate(a: &ScenarioArgs) -> Result<(), Failure> {
    let mut full = load(a)?;
    full.disable_agent_state = false;
    let mut ablated = full.clone();
    ablated.disable_agent_state = true;
    out_dir(&a.out)?;
    let m_full = run_once(&full, a.parallel)?;
    let m_abl = run_once(&ablated, a.parallel)?;

    let mut table = String::from("vehicle_id,role,damage_full,damage_ablated\n");
    for i in 0..m_full.damage.len() {
        let _ = writeln!(
            table,
            "{i},{},{},{}",
            m_full.roles[i].as_str(),
            m_full.damage[i],
            m_abl.damage[i]
        );
    }
    let _ = writeln!(table, "total,,{},{}", m_full.total_damage(), m_abl.total_damage());
    fs::write(a.out.join("ablation.csv"), &table)?;

    println!("full controller:     {}", summary(&m_full));
    println!("agent state disabled: {}", summary(&m_abl));
    println!("total damage {} vs {}", m_full.total_damage(), m_abl.total_damage());
    if m_full.total_damage() > 0 {
        return Err(Failure {
            code: 1,
            message: "full controller took damage".into(),
        });
    }
    if m_abl.total_damage() == 0 {
        return Err(Failure {
            code: 1,
            message: "ablation not discriminative: both variants undamaged".into(),
        });
    }
    Ok(())
}

fn cmd_sweep(args: &SweepArgs) -> Result<(), Failure> {
    let a = &args.common;
    let base = load(a)?;
    if args.multipliers.iter().any(|m| !m.is_finite() || *m < 0.0) {
        return Err(Failure::usage("multipliers must be finite and non-negative"));
    }
    out_dir(&a.out)?;
    let jobs: Vec<(f64, u64)> = args
        .multipliers
        .iter()
        .flat_map(|&m| (0..args.seeds).map(move |k| (m, base.seed.wrapping_add(k))))
        .collect();
    let results: Vec<Result<RunMetrics, Failure>> = jobs
        .par_iter()
        .map(|&(mult, seed)| {
            let mut spec = base.clone();
            spec.noise = spec.noise.scaled(mult);
            spec.seed = seed;
            run_once(&spec, false)
        })
        .collect();

    let mut csv = String::from("multiplier,seed,host_damage,total_damage");
    for ch in CHANNEL_NAMES {
        let _ = write!(csv, ",dmae_{ch}");
    }
    csv.push_str(",overtakes\n");
    for (&(mult, seed), r) in jobs.iter().zip(results) {
        let m = r?;
        let _ = write!(csv, "{},{seed},{},{}", fmt_num(mult), m.host_damage(), m.total_damage());
        for x in m.dmae {
            let _ = write!(csv, ",{}", fmt_num(x));
        }
        let _ = writeln!(csv, ",{}", m.overtake_count());
    }
    fs::write(a.out.join("sweep.csv"), &csv)?;
    print!("{csv}");
    Ok(())
}

fn cmd_verify(args: &VerifyArgs) -> Result<(), Failure> {
    let reference = ControllerParams::default();
    let mut production = reference;
    if !args.overrides.is_empty() {
        let mut spec = ScenarioSpec::default();
        for o in &args.overrides {
            let (k, v) = split_override(o)?;
            if !k.starts_with("controller.") {
                return Err(Failure::usage(format!(
                    "--set {o}: verify only accepts controller.* keys"
                )));
            }
            spec.apply_override(k, v)
                .map_err(|e| Failure::usage(format!("--set {o}: {e}")))?;
        }
        production = spec.controller;
    }
    let report = oracle::verify(args.cases, args.seed, &production, &reference);
    for c in &report.checks {
        let verdict = if c.max_deviation <= report.tolerance {
            "ok  "
        } else {
            "FAIL"
        };
        println!(
            "{verdict} {:<22} cases {:>6}  max deviation {:e}",
            c.name, c.cases, c.max_deviation
        );
    }
    if report.passed() {
        println!("all procedures agree within {:e}", report.tolerance);
        Ok(())
    } else {
        Err(Failure {
            code: 1,
            message: format!("mismatch in {}", report.failing().join(", ")),
        })
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Ablate(a) => cmd_ablate(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Verify(a) => cmd_verify(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("dpdrive: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
