use std::io::Write;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::HarnessError;

/// First line of every metrics file.
pub const METRICS_VERSION_LINE: &str = "# abworld-metrics v1";

/// One evaluation point of a training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub seed: u64,
    pub round: u64,
    pub low_level_steps: u64,
    /// Mean goal-reaching success over the evaluation episodes.
    pub mean_return: f64,
    pub ci_half_width: f64,
    /// Distinct `(identity, attribute, new attribute)` changes observed so far.
    pub unique_valid_transitions: u64,
    pub model_accuracy: f64,
    pub fit_steps: u64,
}

pub fn write_metrics_csv(out: impl Write, records: &[MetricsRecord]) -> Result<(), HarnessError> {
    let mut out = out;
    writeln!(out, "{METRICS_VERSION_LINE}")?;
    let mut writer = csv::Writer::from_writer(out);
    for r in records {
        writer.serialize(r)?;
    }
    writer.flush()?;
    Ok(())
}

pub fn read_metrics_csv(input: impl std::io::Read) -> Result<Vec<MetricsRecord>, HarnessError> {
    let mut text = String::new();
    let mut input = input;
    input.read_to_string(&mut text)?;
    let body = text
        .strip_prefix(METRICS_VERSION_LINE)
        .ok_or_else(|| HarnessError::Config("metrics file lacks the version line".into()))?;
    let mut reader = csv::Reader::from_reader(body.trim_start_matches(['\r', '\n']).as_bytes());
    reader
        .deserialize()
        .map(|r| r.map_err(HarnessError::from))
        .collect()
}

/// Wall-clock seconds per evaluation point, written beside the metrics.
pub fn write_timing_csv(
    out: impl Write,
    rows: &[(u64, u64, Duration)],
) -> Result<(), HarnessError> {
    let mut writer = csv::Writer::from_writer(out);
    writer.write_record(["seed", "round", "wall_clock_seconds"])?;
    for (seed, round, d) in rows {
        writer.write_record([
            seed.to_string(),
            round.to_string(),
            format!("{:.3}", d.as_secs_f64()),
        ])?;
    }
    writer.flush()?;
    Ok(())
}
