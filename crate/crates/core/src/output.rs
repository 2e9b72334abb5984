//! Run outputs: `per_user.csv`, `summary.json`, and the optional event log
//! and forecast snapshots.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::engine::RunMetrics;
use crate::error::SimError;

pub const PER_USER_HEADER: &str =
    "user_id,total_packets,unsuccessful,ratio,cause_not_running,cause_migrating,cause_deadline";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub strategy: String,
    pub alpha: f64,
    pub d_max_ms: f64,
    pub seed: u64,
    pub mean_ratio: f64,
    pub median_ratio: f64,
    pub p95_ratio: f64,
    pub total_packets: u64,
    pub trace_hash: String,
}

/// Linear-interpolation quantile of an unsorted sample; 0 for an empty one.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}

pub fn summarize(m: &RunMetrics) -> Summary {
    let ratios = m.ratios();
    Summary {
        strategy: m.strategy.as_str().to_string(),
        alpha: m.alpha,
        d_max_ms: m.d_max_ms,
        seed: m.seed,
        mean_ratio: m.mean_ratio(),
        median_ratio: quantile(&ratios, 0.5),
        p95_ratio: quantile(&ratios, 0.95),
        total_packets: m.total_packets(),
        trace_hash: m.trace_hash.clone(),
    }
}

pub fn per_user_csv(m: &RunMetrics) -> String {
    let mut s = String::from(PER_USER_HEADER);
    s.push('\n');
    for (id, u) in m.per_user.iter().enumerate() {
        let _ = writeln!(
            s,
            "{id},{},{},{},{},{},{}",
            u.total_packets,
            u.unsuccessful,
            u.ratio(),
            u.cause_not_running,
            u.cause_migrating,
            u.cause_deadline
        );
    }
    s
}

pub fn summary_json(m: &RunMetrics) -> String {
    let mut s = serde_json::to_string_pretty(&summarize(m)).expect("summary serializes");
    s.push('\n');
    s
}

fn write(path: &Path, contents: &str) -> Result<(), SimError> {
    fs::write(path, contents).map_err(|source| SimError::Output {
        path: path.to_path_buf(),
        source,
    })
}

/// Write every output of a run into `out_dir`, creating it if needed.
pub fn emit_outputs(m: &RunMetrics, out_dir: &Path) -> Result<(), SimError> {
    fs::create_dir_all(out_dir).map_err(|source| SimError::Output {
        path: out_dir.to_path_buf(),
        source,
    })?;
    write(&out_dir.join("per_user.csv"), &per_user_csv(m))?;
    write(&out_dir.join("summary.json"), &summary_json(m))?;
    if let Some(events) = &m.events {
        let mut log = events.join("\n");
        log.push('\n');
        write(&out_dir.join("events.log"), &log)?;
    }
    for f in &m.forecasts {
        write(&out_dir.join(format!("forecast_t{:.1}.csv", f.computed_at_s)), &f.to_csv())?;
    }
    Ok(())
}
