//! CSV tables and the JSON run manifest.

use std::fs;
use std::path::Path;

use serde_json::json;

use super::run::{AggregateRow, Experiment, PepRow, PepSequenceRow, SweepResult, TrialRecord};
use crate::error::{Error, Result};
use crate::scene::Point2;

pub const SWEEP_HEADER: [&str; 8] = ["snr_db", "solver", "bf_pattern", "mdr", "far", "mse_m", "union_bound", "trials"];

pub const TRIALS_HEADER: [&str; 21] = [
    "trial",
    "snr_db",
    "solver",
    "bf_pattern",
    "num_targets",
    "mdr",
    "far",
    "mse_m",
    "union_bound",
    "missed",
    "ghost",
    "num_detected",
    "detected_indices",
    "detected_positions",
    "true_positions",
    "fading_power",
    "iterations",
    "error",
    "wall_time_s",
    "seed",
    "config_hash",
];

pub const SNR_NOTE: &str = "snr_db is the per-subcarrier transmit-power-to-noise ratio 10*log10(P_k / (N * N0)) with N0 = 1 W; \
                            with sweep.tx_power_w it is derived from the absolute powers and scene.noise_power";
pub const UNION_BOUND_NOTE: &str = "union_bound is averaged over the same per-trial target draws used for detection, \
                                    evaluated at each trial's true support (on-grid only)";
pub const TRIALS_NOTE: &str = "targets, fading and beam weights are redrawn every trial and shared across sweep points; \
                               noise is redrawn per (trial, sweep point) and shared across patterns";

/// Shortest decimal that parses back to the same f64; empty when absent.
pub fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

fn fmt_points(points: &[Point2]) -> String {
    points
        .iter()
        .map(|p| format!("{}:{}", fmt_f64(p.x), fmt_f64(p.y)))
        .collect::<Vec<_>>()
        .join(";")
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::io(path, std::io::Error::other(format!("{other:?}"))),
    }
}

pub fn write_sweep_csv(rows: &[AggregateRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    w.write_record(SWEEP_HEADER).map_err(|e| csv_error(path, e))?;
    for r in rows {
        w.write_record([
            fmt_f64(r.snr_db),
            r.solver.as_str().to_string(),
            r.bf_pattern.as_str().to_string(),
            fmt_opt(r.mdr),
            fmt_opt(r.far),
            fmt_opt(r.mse_m),
            fmt_opt(r.union_bound),
            r.trials.to_string(),
        ])
        .map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_trials_csv(records: &[TrialRecord], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    w.write_record(TRIALS_HEADER).map_err(|e| csv_error(path, e))?;
    for r in records {
        for o in &r.solvers {
            let det = o.detection.as_ref();
            w.write_record([
                r.trial.to_string(),
                fmt_f64(r.snr_db),
                o.solver.as_str().to_string(),
                r.bf_pattern.as_str().to_string(),
                r.num_targets.to_string(),
                fmt_opt(o.metrics.map(|m| m.mdr)),
                fmt_opt(o.metrics.map(|m| m.far)),
                fmt_opt(o.mse_m),
                fmt_opt(r.union_bound),
                o.metrics.map(|m| m.missed.to_string()).unwrap_or_default(),
                o.metrics.map(|m| m.ghost.to_string()).unwrap_or_default(),
                det.map(|d| d.indices.len().to_string()).unwrap_or_default(),
                det.map(|d| d.indices.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(";"))
                    .unwrap_or_default(),
                det.map(|d| fmt_points(&d.locations)).unwrap_or_default(),
                fmt_points(&r.true_positions),
                fmt_f64(r.fading_power),
                o.iterations.map(|i| i.to_string()).unwrap_or_default(),
                o.error.clone().or_else(|| r.pep_error.clone()).unwrap_or_default(),
                fmt_f64(r.wall_time_s),
                r.seed.to_string(),
                r.config_hash.clone(),
            ])
            .map_err(|e| csv_error(path, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// `git describe` of the working directory, or "unknown".
pub fn git_describe() -> String {
    std::process::Command::new("git")
        .args(["describe", "--always", "--dirty", "--tags"])
        .output()
        .ok()
        .filter(|o| o.status.success())
        .and_then(|o| String::from_utf8(o.stdout).ok())
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .unwrap_or_else(|| "unknown".into())
}

pub fn manifest(exp: &Experiment, wall_time_s: f64, command: &str) -> serde_json::Value {
    json!({
        "tool": env!("CARGO_PKG_NAME"),
        "version": env!("CARGO_PKG_VERSION"),
        "command": command,
        "seed": exp.config.seed,
        "config_hash": exp.config_hash,
        "git_describe": git_describe(),
        "wall_time_s": wall_time_s,
        "trials": exp.config.trials,
        "target_mode": exp.config.targets.mode.as_str(),
        "sweep_points": exp.points,
        "pep_order": exp.config.pep.order,
        "notes": {
            "snr": SNR_NOTE,
            "union_bound": UNION_BOUND_NOTE,
            "trials": TRIALS_NOTE,
        },
        "config": exp.config,
    })
}

pub fn write_json(value: &serde_json::Value, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("manifest always serializes");
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

pub fn write_pep_csv(rows: &[PepRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    w.write_record(["snr_db", "bf_pattern", "order", "union_bound", "num_sequences", "trials"])
        .map_err(|e| csv_error(path, e))?;
    for r in rows {
        w.write_record([
            fmt_f64(r.snr_db),
            r.bf_pattern.as_str().to_string(),
            r.order.to_string(),
            fmt_f64(r.union_bound),
            r.num_sequences.to_string(),
            r.trials.to_string(),
        ])
        .map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_pep_sequences_csv(rows: &[PepSequenceRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    w.write_record(["snr_db", "bf_pattern", "sequence_id", "order", "r", "upep", "union_bound"])
        .map_err(|e| csv_error(path, e))?;
    for r in rows {
        w.write_record([
            fmt_f64(r.snr_db),
            r.bf_pattern.as_str().to_string(),
            r.sequence_id.to_string(),
            r.order.to_string(),
            r.rank.to_string(),
            fmt_f64(r.upep),
            fmt_f64(r.union_bound),
        ])
        .map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes sweep.csv, trials.csv and meta.json into `dir`.
pub fn emit_results(exp: &Experiment, result: &SweepResult, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_sweep_csv(&result.rows, &dir.join("sweep.csv"))?;
    write_trials_csv(&result.records, &dir.join("trials.csv"))?;
    write_json(&manifest(exp, result.wall_time_s, "sweep"), &dir.join("meta.json"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shortest_round_trip() {
        for v in [0.1, 1.0 / 3.0, 1e-20, 123456.789, 0.0, -2.5e300] {
            let s = fmt_f64(v);
            assert_eq!(s.parse::<f64>().unwrap(), v);
        }
        assert_eq!(fmt_f64(0.1), "0.1");
        assert_eq!(fmt_opt(None), "");
    }

    #[test]
    fn empty_table_is_header_only() {
        let dir = std::env::temp_dir().join(format!("cfsense-out-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        let path = dir.join("sweep.csv");
        write_sweep_csv(&[], &path).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert_eq!(text, "snr_db,solver,bf_pattern,mdr,far,mse_m,union_bound,trials\n");
        fs::remove_dir_all(&dir).unwrap();
    }
}
