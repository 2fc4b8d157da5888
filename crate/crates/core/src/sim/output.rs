//! CSV trajectory log and key = value metrics.

use std::fmt::Write as _;

use super::engine::{RunMetrics, SimError, Simulation};
use crate::sensors::CHANNEL_NAMES;

/// Format with 9 significant digits, shortest form, no trailing zeros.
pub fn fmt_num(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{x:.8e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..9).contains(&exp) {
        let decimals = (8 - exp).max(0) as usize;
        trim(format!("{x:.decimals$}"))
    } else {
        format!("{}e{exp}", trim(mantissa.to_string()))
    }
}

fn trim(s: String) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

const BASE_COLUMNS: [&str; 14] = [
    "tick",
    "time",
    "vehicle_id",
    "role",
    "s",
    "lateral",
    "yaw_rel",
    "speed",
    "steer",
    "accel",
    "brake",
    "agent_state",
    "offset",
    "damage",
];

pub fn log_header() -> String {
    let mut cols: Vec<String> = BASE_COLUMNS.iter().map(|c| c.to_string()).collect();
    for ch in CHANNEL_NAMES {
        cols.push(format!("{ch}_true"));
        cols.push(format!("{ch}_est"));
    }
    let mut h = cols.join(",");
    h.push('\n');
    h
}

/// Append one row per vehicle for the tick just stepped.
pub(crate) fn write_log_rows(buf: &mut String, sim: &Simulation, dt: f64) {
    let w = &sim.world;
    let host = sim.host_id();
    let (truth, est) = sim.host_indicators();
    let time = fmt_num(w.tick as f64 * dt);
    for (i, v) in w.vehicles.iter().enumerate() {
        let out = sim.last_outputs()[i].expect("stepped");
        let c = out.command;
        let _ = write!(
            buf,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            w.tick,
            time,
            i,
            v.role.as_str(),
            fmt_num(v.s),
            fmt_num(v.lateral),
            fmt_num(v.yaw_rel),
            fmt_num(v.speed),
            fmt_num(c.steer),
            fmt_num(c.accel),
            fmt_num(c.brake),
            out.agent_state.value.index(),
            fmt_num(out.offset),
            v.damage,
        );
        if i == host {
            for (t, e) in truth.channels().iter().zip(est.channels()) {
                let _ = write!(buf, ",{},{}", fmt_num(*t), fmt_num(e));
            }
        } else {
            buf.push_str(",,,,,,,,,,");
        }
        buf.push('\n');
    }
}

/// Per-channel dMAE from a CSV trajectory log, over host rows.
pub fn compute_dmae_csv(log: &str) -> Result<[f64; 5], SimError> {
    let mut lines = log.lines();
    let header = lines.next().ok_or(SimError::EmptyLog)?;
    let cols: Vec<&str> = header.split(',').collect();
    let find = |name: &str| {
        cols.iter()
            .position(|c| *c == name)
            .ok_or_else(|| SimError::MalformedLog(format!("missing column {name}")))
    };
    let role_col = find("role")?;
    let mut pairs = Vec::new();
    for ch in CHANNEL_NAMES {
        pairs.push((find(&format!("{ch}_true"))?, find(&format!("{ch}_est"))?));
    }
    let mut sum = [0.0; 5];
    let mut rows = 0usize;
    for (k, line) in lines.enumerate() {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != cols.len() {
            return Err(SimError::MalformedLog(format!("row {} has {} fields", k + 2, f.len())));
        }
        if f[role_col] != "host" {
            continue;
        }
        for (c, &(t, e)) in pairs.iter().enumerate() {
            let parse = |s: &str| {
                s.parse::<f64>()
                    .map_err(|_| SimError::MalformedLog(format!("row {}: bad number '{s}'", k + 2)))
            };
            sum[c] += (parse(f[e])? - parse(f[t])?).abs();
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(SimError::EmptyLog);
    }
    Ok(sum.map(|x| x / rows as f64))
}

/// Flat `key = value` metrics text.
pub fn metrics_text(m: &RunMetrics, track_length: f64) -> String {
    let mut s = String::new();
    let mut kv = |k: &str, v: String| {
        let _ = writeln!(s, "{k} = {v}");
    };
    kv("ticks", m.ticks.to_string());
    kv("sim_time", fmt_num(m.sim_time));
    kv("end_reason", m.end_reason.as_str().into());
    kv("vehicles", m.damage.len().to_string());
    kv("host_id", m.host_id.to_string());
    kv("host_damage", m.host_damage().to_string());
    kv("agent_damage", m.agent_damage().to_string());
    kv("total_damage", m.total_damage().to_string());
    let km = m.host_distance / 1000.0;
    let per_km = if km > 0.0 { m.total_damage() as f64 / km } else { 0.0 };
    kv("total_damage_per_km", fmt_num(per_km));
    kv("host_distance", fmt_num(m.host_distance));
    kv("track_length", fmt_num(track_length));
    kv("laps_completed", m.laps_completed.to_string());
    kv("overtakes", m.overtake_count().to_string());
    kv("mean_abs_to_middle", fmt_num(m.mean_abs_to_middle));
    kv("max_abs_to_middle", fmt_num(m.max_abs_to_middle));
    for (k, ch) in CHANNEL_NAMES.iter().enumerate() {
        kv(&format!("dmae_{ch}"), fmt_num(m.dmae[k]));
    }
    for (k, ch) in CHANNEL_NAMES.iter().enumerate() {
        kv(&format!("smae_{ch}"), fmt_num(m.smae[k]));
    }
    for (i, d) in m.damage.iter().enumerate() {
        kv(&format!("damage_{i}"), d.to_string());
    }
    for (i, v) in m.target_speeds.iter().enumerate() {
        kv(&format!("target_speed_{i}"), fmt_num(*v));
    }
    for (k, e) in m.overtakes.iter().enumerate() {
        kv(
            &format!("overtake_{k}"),
            format!(
                "tick {} agent {} host_lane {} agent_lane {}",
                e.tick, e.agent, e.host_lane, e.agent_lane
            ),
        );
    }
    s
}
