//! Plain-text emission of run results: a per-slot CSV trace and a flat
//! key=value summary. Both are deterministic functions of the run, so
//! repeated identical runs produce byte-identical files.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use thiserror::Error;

use eacc_core::engine::{Summary, TraceRecord};

#[derive(Debug, Error)]
pub enum EmitError {
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Writes `trace.csv` and `summary.txt` under `dir` (created if missing)
/// and returns their paths.
///
/// The trace header is
/// `slot,delivered_0..,y_0..,backlog_total,battery_0..,joules_0..`
/// with one column per device in each group; a zero-slot run emits the
/// header only.
pub fn emit_trace(
    trace: &[TraceRecord],
    summary: &Summary,
    dir: &Path,
) -> Result<(PathBuf, PathBuf), EmitError> {
    let io_err = |path: &Path| {
        let path = path.to_path_buf();
        move |source: std::io::Error| EmitError::Io { path, source }
    };
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;

    let n = summary.mean_delivered_rate.len();
    let trace_path = dir.join("trace.csv");
    let mut csv = String::new();
    csv.push_str("slot");
    for dev in 0..n {
        let _ = write!(csv, ",delivered_{dev}");
    }
    for dev in 0..n {
        let _ = write!(csv, ",y_{dev}");
    }
    csv.push_str(",backlog_total");
    for dev in 0..n {
        let _ = write!(csv, ",battery_{dev}");
    }
    for dev in 0..n {
        let _ = write!(csv, ",joules_{dev}");
    }
    csv.push('\n');
    for record in trace {
        let _ = write!(csv, "{}", record.slot);
        for v in &record.delivered {
            let _ = write!(csv, ",{v}");
        }
        for v in &record.decision.y {
            let _ = write!(csv, ",{v}");
        }
        let _ = write!(csv, ",{}", record.backlog_total);
        for v in &record.batteries {
            let _ = write!(csv, ",{v}");
        }
        for v in &record.joules {
            let _ = write!(csv, ",{v}");
        }
        csv.push('\n');
    }
    std::fs::write(&trace_path, csv).map_err(io_err(&trace_path))?;

    let summary_path = dir.join("summary.txt");
    std::fs::write(&summary_path, render_summary(summary)).map_err(io_err(&summary_path))?;
    Ok((trace_path, summary_path))
}

/// The summary as `key=value` lines in a fixed order.
pub fn render_summary(summary: &Summary) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "slots={}", summary.slots);
    for (dev, v) in summary.mean_delivered_rate.iter().enumerate() {
        let _ = writeln!(out, "mean_delivered_{dev}={v}");
    }
    for (dev, v) in summary.mean_admitted_rate.iter().enumerate() {
        let _ = writeln!(out, "mean_admitted_{dev}={v}");
    }
    let _ = writeln!(out, "sum_utility={}", summary.sum_utility);
    let _ = writeln!(out, "mean_backlog={}", summary.mean_backlog);
    for (dev, v) in summary.cumulative_joules.iter().enumerate() {
        let _ = writeln!(out, "cumulative_joules_{dev}={v}");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use eacc_core::engine::{run, ScenarioConfig};

    #[test]
    fn zero_slot_run_emits_header_only() {
        let mut config = ScenarioConfig::with_defaults(2);
        config.slots = 0;
        let (trace, summary) = run(&config).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let (trace_path, _) = emit_trace(&trace, &summary, dir.path()).unwrap();
        let text = std::fs::read_to_string(trace_path).unwrap();
        assert_eq!(
            text,
            "slot,delivered_0,delivered_1,y_0,y_1,backlog_total,battery_0,battery_1,joules_0,joules_1\n"
        );
    }

    #[test]
    fn reruns_are_byte_identical() {
        let mut config = ScenarioConfig::with_defaults(2);
        config.channel = eacc_core::channel::ChannelConfig::uniform(2, 0.7, 3.0, 0.8, 9.0);
        config.slots = 500;
        config.seed = 77;

        let dir = tempfile::tempdir().unwrap();
        let mut bytes = Vec::new();
        for sub in ["a", "b"] {
            let (trace, summary) = run(&config).unwrap();
            let (trace_path, summary_path) =
                emit_trace(&trace, &summary, &dir.path().join(sub)).unwrap();
            let mut blob = std::fs::read(trace_path).unwrap();
            blob.extend(std::fs::read(summary_path).unwrap());
            bytes.push(blob);
        }
        assert_eq!(bytes[0], bytes[1]);
    }

    #[test]
    fn trace_rows_match_records() {
        let mut config = ScenarioConfig::with_defaults(1);
        config.slots = 3;
        let (trace, summary) = run(&config).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let (trace_path, _) = emit_trace(&trace, &summary, dir.path()).unwrap();
        let text = std::fs::read_to_string(trace_path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 4);
        assert!(lines[1].starts_with("0,"));
        assert!(lines[3].starts_with("2,"));
    }
}
