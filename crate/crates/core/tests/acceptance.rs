//! End-to-end acceptance gate. Prints one line per criterion and exits
//! nonzero if any fails. Tolerances are pinned below.

use std::hash::{DefaultHasher, Hasher};
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use dpdrive::controller::{abs, control_step, tcs, ControllerState};
use dpdrive::oracle::{self, VERIFY_TOLERANCE};
use dpdrive::sensors::{Indicators, OpponentReading, NOISE_PRESETS};
use dpdrive::sim::{load_scenario, run, run_with_log, HostSample, RunOptions, ScenarioSpec};
use dpdrive::{AgentStateKind, ControllerParams, NoiseModel, Perceiver, Role, VehicleState};

const SEEDS: u64 = 10;
const WALL_LIMIT: Duration = Duration::from_secs(10);
const MIN_ABLATION_HITS: usize = 9;
const CALIBRATION_SAMPLES: u64 = 100_000;
const CALIBRATION_TOLERANCE: f64 = 0.05;
const DMAE_SEEDS: u64 = 5;
const DMAE_PERIOD: u32 = 2;
/// Relative slack for channels where held and fresh errors tie exactly.
const DMAE_TIE: f64 = 1e-12;
const FUZZ_CASES: usize = 100_000;
const LANE_BAND: f64 = 0.2;
const LANE_DEADLINE: f64 = 10.0;
const LANE_SEEDS: u64 = 5;
const OVERTAKE_DEADLINE: f64 = 30.0;

struct Verdict {
    pass: bool,
    detail: String,
}

impl Verdict {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self {
            pass,
            detail: detail.into(),
        }
    }
}

fn scenario(name: &str) -> ScenarioSpec {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenarios")
        .join(name);
    let text = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    load_scenario(&text).unwrap_or_else(|e| panic!("{name}: {e}"))
}

fn zero_damage_on_the_loop() -> Verdict {
    let mut worst_wall = Duration::ZERO;
    let mut damaged = Vec::new();
    let mut incomplete = Vec::new();
    for seed in 0..SEEDS {
        let spec = ScenarioSpec::table2_analog(seed);
        let t0 = Instant::now();
        let m = run(&spec, RunOptions::default()).expect("valid scenario").metrics;
        worst_wall = worst_wall.max(t0.elapsed());
        if m.total_damage() > 0 {
            damaged.push(format!(
                "seed {seed}: host {} agents {}",
                m.host_damage(),
                m.agent_damage()
            ));
        }
        if m.laps_completed < 1 {
            incomplete.push(seed);
        }
    }
    Verdict::new(
        damaged.is_empty() && incomplete.is_empty() && worst_wall < WALL_LIMIT,
        format!(
            "{} of {SEEDS} seeds damage-free, laps incomplete {:?}, slowest run {:.2} s {}",
            SEEDS as usize - damaged.len(),
            incomplete,
            worst_wall.as_secs_f64(),
            damaged.join("; ")
        ),
    )
}

fn ablation_contrast() -> Verdict {
    let mut hits = 0;
    let mut totals = Vec::new();
    for seed in 0..SEEDS {
        let mut spec = ScenarioSpec::table2_analog(seed);
        spec.disable_agent_state = true;
        let m = run(&spec, RunOptions::default()).expect("valid scenario").metrics;
        totals.push(m.total_damage());
        if m.total_damage() > 0 {
            hits += 1;
        }
    }
    Verdict::new(
        hits >= MIN_ABLATION_HITS,
        format!("{hits} of {SEEDS} ablated runs damaged, totals {totals:?}"),
    )
}

fn noise_calibration() -> Verdict {
    // distances sit mid-range so the clamp to [0, 60] barely matters
    let truth = Indicators::from_channels([0.0, 0.0, 30.0, 30.0, 30.0]);
    let mut worst = (0.0f64, String::new());
    for name in ["alexnet+", "googlenet", "googlenet+"] {
        let mut model = NoiseModel::preset(name).expect("preset");
        model.perception_period = 1;
        model.rng_seed = 7;
        let mut p = Perceiver::new(model);
        let mut acc = [0.0; 5];
        for tick in 0..CALIBRATION_SAMPLES {
            let est = p.perceive(&truth, tick);
            for (a, (e, t)) in acc.iter_mut().zip(est.channels().into_iter().zip(truth.channels())) {
                *a += (e - t).abs();
            }
        }
        let want = NOISE_PRESETS.iter().find(|(n, _)| *n == name).unwrap().1;
        for ch in 0..5 {
            let got = acc[ch] / CALIBRATION_SAMPLES as f64;
            let rel = (got - want[ch]).abs() / want[ch];
            if rel > worst.0 {
                worst = (rel, format!("{name} channel {ch}: {got:.4} vs {}", want[ch]));
            }
        }
    }
    Verdict::new(
        worst.0 <= CALIBRATION_TOLERANCE,
        format!("worst relative error {:.4} ({})", worst.0, worst.1),
    )
}

fn dmae_at_least_smae() -> Verdict {
    let mut held = [0.0; 5];
    let mut fresh = [0.0; 5];
    let (mut n_all, mut n_fresh) = (0usize, 0usize);
    for seed in 0..DMAE_SEEDS {
        let mut spec = ScenarioSpec::table2_analog(seed);
        spec.noise.perception_period = DMAE_PERIOD;
        let trace: Vec<HostSample> = run(&spec, RunOptions::default()).expect("valid scenario").host_trace;
        for h in &trace {
            let est = h.perceived.channels();
            let truth = h.truth.channels();
            for ch in 0..5 {
                let e = (est[ch] - truth[ch]).abs();
                held[ch] += e;
                if h.fresh {
                    fresh[ch] += e;
                }
            }
            n_all += 1;
            n_fresh += usize::from(h.fresh);
        }
    }
    let dmae = held.map(|x| x / n_all as f64);
    let smae = fresh.map(|x| x / n_fresh as f64);
    let ok = (0..5).all(|ch| dmae[ch] >= smae[ch] * (1.0 - DMAE_TIE));
    let pairs: Vec<String> = (0..5).map(|ch| format!("{:.4}/{:.4}", dmae[ch], smae[ch])).collect();
    Verdict::new(
        ok,
        format!("dMAE/sMAE per channel over {DMAE_SEEDS} seeds: {}", pairs.join(" ")),
    )
}

fn oracle_equivalence() -> Verdict {
    let p = ControllerParams::default();
    let report = oracle::verify(10_000, 0, &p, &p);
    let worst = report.checks.iter().map(|c| c.max_deviation).fold(0.0, f64::max);
    let min_cases = report.checks.iter().map(|c| c.cases).min().unwrap_or(0);
    Verdict::new(
        report.passed() && min_cases >= 10_000 && VERIFY_TOLERANCE <= 1e-12,
        format!(
            "{} procedures, {min_cases} cases each, worst deviation {worst:e}",
            report.checks.len()
        ),
    )
}

/// Finite value spread over many magnitudes.
fn wild(rng: &mut ChaCha8Rng, typical: f64) -> f64 {
    if rng.random_bool(0.7) {
        rng.random_range(-typical..typical)
    } else {
        let mag = 10f64.powf(rng.random_range(-6.0..6.0));
        if rng.random_bool(0.5) {
            mag
        } else {
            -mag
        }
    }
}

fn actuator_ranges() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let p = ControllerParams::default();
    let mut bad = 0usize;
    for _ in 0..FUZZ_CASES {
        let speed = wild(&mut rng, 40.0).abs();
        let me = VehicleState {
            s: 0.0,
            distance: 0.0,
            lateral: wild(&mut rng, 8.0),
            yaw_rel: wild(&mut rng, 1.0),
            heading: wild(&mut rng, 4.0),
            speed,
            driven_wheel_speed: wild(&mut rng, 40.0).abs(),
            wheel_avg_speed: wild(&mut rng, 40.0).abs(),
            damage: 0,
            role: Role::Host,
        };
        let ind = Indicators::from_channels([
            wild(&mut rng, 1.5),
            wild(&mut rng, 8.0),
            wild(&mut rng, 60.0).abs(),
            wild(&mut rng, 60.0).abs(),
            wild(&mut rng, 60.0).abs(),
        ]);
        let n = rng.random_range(0..=4);
        let readings: Vec<OpponentReading<f64>> = (0..n)
            .map(|i| OpponentReading {
                id: i + 1,
                d_exact: wild(&mut rng, 80.0),
                lane_index: rng.random_range(1..=3),
                to_middle: wild(&mut rng, 7.0),
                yaw: wild(&mut rng, 3.2),
                speed: wild(&mut rng, 30.0).abs(),
                same_lane: rng.random_bool(0.5),
            })
            .collect();
        let mut cs = ControllerState::new(p, 20.0);
        cs.offset = rng.random_range(-4.0..=4.0);
        let c = control_step(&ind, &readings, &me, &mut cs).command;
        if !((-1.0..=1.0).contains(&c.steer) && (0.0..=1.0).contains(&c.accel) && (0.0..=1.0).contains(&c.brake)) {
            bad += 1;
        }
    }

    // sorted slip grids above the threshold
    let grid: Vec<f64> = (0..=400).map(|i| 2.0 + 0.05 * i as f64).collect();
    let levels: Vec<f64> = (0..=20).map(|i| i as f64 / 20.0).collect();
    let mut tcs_ok = true;
    let mut abs_ok = true;
    for &level in &levels {
        let t: Vec<f64> = grid.iter().map(|&s| tcs(level, s, &p)).collect();
        tcs_ok &= t.windows(2).all(|w| w[1] <= w[0]);
        for v in [3.5, 10.0, 20.0, 30.0] {
            let b: Vec<f64> = grid.iter().map(|&s| abs(level, v, v - s, &p)).collect();
            abs_ok &= b.windows(2).all(|w| w[1] <= w[0]);
        }
    }
    Verdict::new(
        bad == 0 && tcs_ok && abs_ok,
        format!("{bad} of {FUZZ_CASES} commands out of range, TCS monotone {tcs_ok}, ABS monotone {abs_ok}"),
    )
}

/// Time of the first sample inside the band, mean |lateral| from the
/// deadline on, and the worst 1 s moving average over the same span.
fn lane_keeping(trace: &[HostSample], window: usize) -> (Option<f64>, f64, f64) {
    let first = trace.iter().find(|h| h.lateral.abs() < LANE_BAND).map(|h| h.time);
    let late: Vec<f64> = trace
        .iter()
        .filter(|h| h.time >= LANE_DEADLINE)
        .map(|h| h.lateral)
        .collect();
    let mean_abs = late.iter().map(|x| x.abs()).sum::<f64>() / late.len().max(1) as f64;
    let mut worst_avg = 0.0f64;
    for (i, h) in trace.iter().enumerate() {
        if h.time < LANE_DEADLINE || i + 1 < window {
            continue;
        }
        let avg = trace[i + 1 - window..=i].iter().map(|x| x.lateral).sum::<f64>() / window as f64;
        worst_avg = worst_avg.max(avg.abs());
    }
    (first, mean_abs, worst_avg)
}

fn lane_keeping_stability() -> Verdict {
    let base = scenario("lane_recovery.scn");
    let dt = base.dynamics.dt;
    let window = (1.0 / dt).round() as usize;

    // noiseless: every sample after the deadline inside the band
    let mut clean = base.clone();
    clean.noise = NoiseModel::zero();
    let r = run(&clean, RunOptions::default()).expect("valid scenario");
    let entered = r
        .host_trace
        .iter()
        .find(|h| h.lateral.abs() < LANE_BAND)
        .map(|h| h.time);
    let late_max = r
        .host_trace
        .iter()
        .filter(|h| h.time >= LANE_DEADLINE)
        .map(|h| h.lateral.abs())
        .fold(0.0, f64::max);
    let clean_ok = entered.is_some_and(|t| t < LANE_DEADLINE) && late_max < LANE_BAND && r.metrics.total_damage() == 0;
    let mut detail = format!(
        "noiseless: inside {:.2} m at {:.2} s, max after {LANE_DEADLINE} s {:.3} m",
        LANE_BAND,
        entered.unwrap_or(f64::NAN),
        late_max
    );

    // noisy: perception jitter moves the car itself, so the band applies
    // to the steady-state mean error; the 1 s average is reported only
    let mut noisy_ok = true;
    for seed in 0..LANE_SEEDS {
        let mut spec = base.clone();
        spec.noise = NoiseModel::preset("googlenet+").expect("preset");
        spec.seed = seed;
        let r = run(&spec, RunOptions::default()).expect("valid scenario");
        let (first, mean_abs, worst_avg) = lane_keeping(&r.host_trace, window);
        let ok = first.is_some_and(|t| t < LANE_DEADLINE)
            && mean_abs < LANE_BAND
            && r.metrics.total_damage() == 0
            && r.metrics.max_abs_to_middle < 6.5;
        noisy_ok &= ok;
        detail += &format!(
            "; googlenet+ seed {seed}: first {:.2} s, mean |lateral| {:.3} m, worst 1 s mean {:.3} m",
            first.unwrap_or(f64::NAN),
            mean_abs,
            worst_avg
        );
    }
    Verdict::new(clean_ok && noisy_ok, detail)
}

fn overtake() -> Verdict {
    let r = run(&scenario("single_slow_agent.scn"), RunOptions::default()).expect("valid scenario");
    let m = &r.metrics;
    let first_state = r
        .host_trace
        .iter()
        .map(|h| h.agent_state)
        .find(|k| *k != AgentStateKind::Clear);
    let first_leader = r
        .host_trace
        .iter()
        .find(|h| h.agent_state == AgentStateKind::Leader)
        .map(|h| h.tick);
    let starts_clear = r
        .host_trace
        .first()
        .is_some_and(|h| h.agent_state == AgentStateKind::Clear);
    let lane_target = m.overtakes.first().and_then(|ev| {
        r.host_trace
            .iter()
            .take_while(|h| h.tick <= ev.tick)
            .find(|h| (h.offset.abs() - 4.0).abs() < 1e-9)
            .map(|h| h.time)
    });
    let pass = m.overtakes.first();
    let ok = starts_clear
        && first_state == Some(AgentStateKind::Leader)
        && first_leader.is_some()
        && lane_target.is_some()
        && pass.is_some_and(|ev| ev.tick as f64 * 0.02 < OVERTAKE_DEADLINE && ev.host_lane != ev.agent_lane)
        && m.total_damage() == 0;
    Verdict::new(
        ok,
        format!(
            "first state {:?} at tick {:?}, offset at lane target at {:?} s, pass {:?}, damage {}",
            first_state,
            first_leader,
            lane_target,
            pass.map(|ev| ev.tick as f64 * 0.02),
            m.total_damage()
        ),
    )
}

struct HashWriter(DefaultHasher, u64);

impl Write for HashWriter {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        self.0.write(buf);
        self.1 += buf.len() as u64;
        Ok(buf.len())
    }

    fn flush(&mut self) -> io::Result<()> {
        Ok(())
    }
}

fn log_digest(spec: &ScenarioSpec, parallel: bool) -> (u64, u64) {
    let mut w = HashWriter(DefaultHasher::new(), 0);
    run_with_log(spec, RunOptions { parallel }, &mut w).expect("valid scenario");
    (w.0.finish(), w.1)
}

fn determinism() -> Verdict {
    let mut specs: Vec<(String, ScenarioSpec)> = [
        "table2_loop.scn",
        "empty_track.scn",
        "lane_recovery.scn",
        "single_slow_agent.scn",
        "boxed_in.scn",
    ]
    .iter()
    .map(|n| (n.to_string(), scenario(n)))
    .collect();
    for seed in [1, 42] {
        specs.push((format!("table2 seed {seed}"), ScenarioSpec::table2_analog(seed)));
    }
    let mut mismatches = Vec::new();
    let mut bytes = 0;
    for (name, spec) in &specs {
        let a = log_digest(spec, false);
        let b = log_digest(spec, false);
        let c = log_digest(spec, true);
        bytes += a.1;
        if a != b || a != c {
            mismatches.push(name.clone());
        }
    }
    Verdict::new(
        mismatches.is_empty(),
        format!(
            "{} scenarios, {:.1} MB of log each way, mismatches {:?}",
            specs.len(),
            bytes as f64 / 1e6,
            mismatches
        ),
    )
}

type Criterion = (&'static str, fn() -> Verdict);

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        ("zero damage, 10 seeds", zero_damage_on_the_loop),
        ("ablation contrast", ablation_contrast),
        ("noise calibration", noise_calibration),
        ("dMAE >= sMAE", dmae_at_least_smae),
        ("oracle equivalence", oracle_equivalence),
        ("actuator ranges and slip control", actuator_ranges),
        ("lane keeping", lane_keeping_stability),
        ("overtake", overtake),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let v = check();
        println!(
            "criterion {}: {} {name}: {}",
            i + 1,
            if v.pass { "PASS" } else { "FAIL" },
            v.detail
        );
        failed += usize::from(!v.pass);
    }
    if failed == 0 {
        println!("acceptance: all {} criteria pass", criteria.len());
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {failed} of {} criteria failed", criteria.len());
        ExitCode::FAILURE
    }
}
