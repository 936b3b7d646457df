use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Serialize;

use super::RunOutput;
use crate::error::{Error, Result};
use crate::selfplay::{write_csv, EpisodeRecord, MatchResult, Phase};
use crate::stats::{mean_ci, PhaseSummary};

/// Environment variable naming the default output directory.
pub const OUTPUT_DIR_ENV: &str = "CACLAB_OUT";
pub const DEFAULT_OUTPUT_DIR: &str = "results";

pub fn default_output_dir() -> PathBuf {
    std::env::var_os(OUTPUT_DIR_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OutputFormat {
    Csv,
    Json,
}

impl FromStr for OutputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Self::Csv),
            "json" => Ok(Self::Json),
            other => Err(Error::InvalidParameter(format!("unknown format `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TraceMetric {
    Reward,
    Exploitability,
    Entropy,
    Qgap,
}

impl FromStr for TraceMetric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "reward" => Ok(Self::Reward),
            "exploitability" => Ok(Self::Exploitability),
            "entropy" => Ok(Self::Entropy),
            "qgap" | "q_gap" => Ok(Self::Qgap),
            other => Err(Error::InvalidParameter(format!(
                "unknown metric `{other}` (reward, exploitability, entropy, qgap)"
            ))),
        }
    }
}

/// One window of a trace, averaged per seed and then across seeds.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TraceRow {
    pub start: usize,
    pub end: usize,
    pub mean: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n: usize,
}

fn row(start: usize, end: usize, values: &[f64]) -> TraceRow {
    let (mean, ci_low, ci_high) = if values.len() >= 2 {
        mean_ci(values).unwrap_or((f64::NAN, f64::NAN, f64::NAN))
    } else {
        (values[0], values[0], values[0])
    };
    TraceRow {
        start,
        end,
        mean,
        ci_low,
        ci_high,
        n: values.len(),
    }
}

/// Windowed trace of `metric` for the experiment's first condition.
pub fn emit_trace(output: &RunOutput, metric: TraceMetric, window: usize) -> Result<Vec<TraceRow>> {
    let unavailable = || Error::MetricUnavailable {
        metric: format!("{metric:?}").to_lowercase(),
        agent: output.id.clone(),
    };
    let result = &output.conditions.first().ok_or_else(unavailable)?.result;
    let rows = match metric {
        TraceMetric::Exploitability => exploitability_rows(result),
        TraceMetric::Reward => windowed(result, window.max(1), |r| Some(r.reward_p0)),
        TraceMetric::Entropy => windowed(result, window.max(1), |r| r.entropy),
        TraceMetric::Qgap => windowed(result, window.max(1), |r| r.q_gap),
    };
    if rows.is_empty() {
        return Err(unavailable());
    }
    Ok(rows)
}

fn exploitability_rows(result: &MatchResult) -> Vec<TraceRow> {
    let mut by_episode: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for run in &result.runs {
        for &(episode, value) in &run.exploitability {
            by_episode.entry(episode).or_default().push(value);
        }
    }
    by_episode.into_iter().map(|(e, v)| row(e, e, &v)).collect()
}

fn windowed(result: &MatchResult, window: usize, value: impl Fn(&EpisodeRecord) -> Option<f64>) -> Vec<TraceRow> {
    let len = result.runs.iter().map(|r| r.records.len()).min().unwrap_or(0);
    (0..len)
        .step_by(window)
        .filter_map(|start| {
            let end = (start + window).min(len);
            let per_seed: Vec<f64> = result
                .runs
                .iter()
                .filter_map(|run| {
                    let xs: Vec<f64> = run.records[start..end].iter().filter_map(&value).collect();
                    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
                })
                .collect();
            (!per_seed.is_empty()).then(|| row(start, end, &per_seed))
        })
        .collect()
}

pub fn trace_csv<W: Write>(rows: &[TraceRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r).map_err(|e| Error::Io(e.to_string()))?;
    }
    w.flush().map_err(|e| Error::Io(e.to_string()))
}

#[derive(Serialize)]
struct JsonSeed<'a> {
    seed: u64,
    chance_seed: u64,
    phase_means: BTreeMap<Phase, f64>,
    episodes_to_dea: Option<usize>,
    episodes_to_recover: Option<usize>,
    records: &'a [EpisodeRecord],
}

#[derive(Serialize)]
struct JsonCondition<'a> {
    label: &'a str,
    seeds: Vec<JsonSeed<'a>>,
}

#[derive(Serialize)]
struct JsonOutput<'a> {
    id: &'a str,
    metrics: &'a BTreeMap<String, f64>,
    summaries: &'a [PhaseSummary],
    notes: &'a [String],
    conditions: Vec<JsonCondition<'a>>,
}

fn io(e: impl std::fmt::Display) -> Error {
    Error::Io(e.to_string())
}

/// Writes an experiment's results under `dir/<id>`. Files are written to a
/// sibling temporary directory first and moved into place at the end, so a
/// failed run never leaves a half-written result directory.
pub fn write_output(output: &RunOutput, dir: &Path, format: OutputFormat) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(io)?;
    let target = dir.join(&output.id);
    let staging = dir.join(format!(".{}.tmp", output.id));
    if staging.exists() {
        fs::remove_dir_all(&staging).map_err(io)?;
    }
    fs::create_dir_all(&staging).map_err(io)?;
    match format {
        OutputFormat::Csv => write_csv_files(output, &staging)?,
        OutputFormat::Json => {
            let file = fs::File::create(staging.join("results.json")).map_err(io)?;
            serde_json::to_writer_pretty(std::io::BufWriter::new(file), &json_view(output)).map_err(io)?;
        }
    }
    if target.exists() {
        fs::remove_dir_all(&target).map_err(io)?;
    }
    fs::rename(&staging, &target).map_err(io)?;
    Ok(target)
}

fn json_view(output: &RunOutput) -> JsonOutput<'_> {
    JsonOutput {
        id: &output.id,
        metrics: &output.metrics,
        summaries: &output.summaries,
        notes: &output.notes,
        conditions: output
            .conditions
            .iter()
            .map(|c| JsonCondition {
                label: &c.label,
                seeds: c
                    .result
                    .runs
                    .iter()
                    .map(|r| JsonSeed {
                        seed: r.seed.policy,
                        chance_seed: r.seed.chance,
                        phase_means: r.phase_means.clone(),
                        episodes_to_dea: r.episodes_to_dea,
                        episodes_to_recover: r.episodes_to_recover,
                        records: &r.records,
                    })
                    .collect(),
            })
            .collect(),
    }
}

fn write_csv_files(output: &RunOutput, dir: &Path) -> Result<()> {
    for c in &output.conditions {
        let file = fs::File::create(dir.join(format!("{}.csv", c.label))).map_err(io)?;
        write_csv(c.result.records(), std::io::BufWriter::new(file))?;
    }
    let file = fs::File::create(dir.join("metrics.csv")).map_err(io)?;
    let mut w = csv::Writer::from_writer(std::io::BufWriter::new(file));
    w.write_record(["metric", "value"]).map_err(io)?;
    for (k, v) in &output.metrics {
        w.write_record([k.as_str(), &v.to_string()]).map_err(io)?;
    }
    w.flush().map_err(io)?;
    let mut summary = String::new();
    if !output.summaries.is_empty() {
        summary.push_str(PhaseSummary::HEADER);
        summary.push('\n');
        for s in &output.summaries {
            summary.push_str(&format!("{s}\n"));
        }
    }
    for note in &output.notes {
        summary.push_str(&format!("note: {note}\n"));
    }
    fs::write(dir.join("summary.txt"), summary).map_err(io)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::{run, Overrides};

    fn small() -> RunOutput {
        let o = Overrides::parse(["seeds=2", "episodes=600", "window=100"]).unwrap();
        run("frozen_baseline", &o).unwrap()
    }

    #[test]
    fn csv_layout() {
        let out = small();
        let dir = std::env::temp_dir().join(format!("caclab-out-{}", std::process::id()));
        let path = write_output(&out, &dir, OutputFormat::Csv).unwrap();
        let text = fs::read_to_string(path.join("frozen.csv")).unwrap();
        assert_eq!(text.lines().next().unwrap(), "seed,episode,reward_p0,reward_p1,phase,mask_active");
        assert_eq!(text.lines().count(), 1 + 2 * 600);
        assert!(path.join("metrics.csv").exists());
        let path = write_output(&out, &dir, OutputFormat::Json).unwrap();
        let json: serde_json::Value = serde_json::from_slice(&fs::read(path.join("results.json")).unwrap()).unwrap();
        assert_eq!(json["id"], "frozen_baseline");
        assert!(!path.join("frozen.csv").exists());
        fs::remove_dir_all(dir).unwrap();
    }

    #[test]
    fn reward_trace_windows() {
        let out = small();
        let rows = emit_trace(&out, TraceMetric::Reward, 200).unwrap();
        assert_eq!(rows.len(), 3);
        assert_eq!((rows[2].start, rows[2].end, rows[2].n), (400, 600, 2));
        assert!(rows.iter().all(|r| r.ci_low <= r.mean && r.mean <= r.ci_high));
        assert!(matches!(
            emit_trace(&out, TraceMetric::Exploitability, 200),
            Err(Error::MetricUnavailable { .. })
        ));
    }

    #[test]
    fn parse_names() {
        assert_eq!("json".parse::<OutputFormat>().unwrap(), OutputFormat::Json);
        assert!("xml".parse::<OutputFormat>().is_err());
        assert_eq!("qgap".parse::<TraceMetric>().unwrap(), TraceMetric::Qgap);
    }
}
