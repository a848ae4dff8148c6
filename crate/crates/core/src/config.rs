//! Config files, run manifests, metrics files and experiment presets.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::client::Algorithm;
use crate::diagnostics;
use crate::error::{Error, Result};
use crate::ot::BarycenterTrace;
use crate::runtime::{
    DataSource, ExperimentConfig, LayerSelection, RoundReport, CHECKPOINT_FILE, CONFIG_ECHO_FILE, MANIFEST_FILE,
    METRICS_FILE, TRACE_FILE,
};

/// Version of the metrics line schema.
pub const SCHEMA_VERSION: u32 = 1;

/// Version string embedded in manifests. Builds may set
/// `FEDDUAL_BUILD_DESCRIBE` to a `git describe` result.
pub fn version_string() -> String {
    option_env!("FEDDUAL_BUILD_DESCRIBE")
        .map(str::to_owned)
        .unwrap_or_else(|| format!("v{}", env!("CARGO_PKG_VERSION")))
}

/// Parses a TOML config, rejecting unknown keys, then validates it.
pub fn parse_config_str(text: &str) -> Result<ExperimentConfig> {
    let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.message().to_owned()))?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn parse_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config_str(&text).map_err(|e| match e {
        Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
        other => other,
    })
}

/// Command-line values that replace config entries.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub algorithm: Option<Algorithm>,
    pub alpha: Option<f64>,
    pub rounds: Option<usize>,
    pub mask: Option<LayerSelection>,
    pub out: Option<PathBuf>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut ExperimentConfig) -> Result<()> {
        if let Some(s) = self.seed {
            cfg.experiment.seed = s;
            cfg.experiment.seeds = vec![s];
        }
        if let Some(a) = self.algorithm {
            cfg.experiment.algorithm = a;
        }
        if let Some(a) = self.alpha {
            cfg.data.alpha = a;
        }
        if let Some(r) = self.rounds {
            cfg.experiment.rounds = r;
        }
        if let Some(m) = &self.mask {
            cfg.aggregation.mask = m.clone();
        }
        if let Some(o) = &self.out {
            cfg.output.dir = o.clone();
        }
        cfg.validate()
    }
}

pub fn serialize_config(cfg: &ExperimentConfig) -> Result<String> {
    toml::to_string(cfg).map_err(|e| Error::Internal(format!("config serialization: {e}")))
}

/// SHA-256 over canonical JSON (sorted keys) of everything except the
/// output section.
pub fn config_hash(cfg: &ExperimentConfig) -> String {
    let mut value = serde_json::to_value(cfg).expect("config serializes");
    if let Some(map) = value.as_object_mut() {
        map.remove("output");
    }
    let canonical = serde_json::to_string(&value).expect("value serializes");
    let digest = Sha256::digest(canonical.as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_hash: String,
    pub seeds: Vec<u64>,
    pub version: String,
    pub output_dir: PathBuf,
    pub files: Vec<String>,
}

impl RunManifest {
    pub fn new(cfg: &ExperimentConfig, out: &Path) -> Self {
        Self {
            config_hash: config_hash(cfg),
            seeds: vec![cfg.experiment.seed],
            version: version_string(),
            output_dir: out.to_path_buf(),
            files: [MANIFEST_FILE, CONFIG_ECHO_FILE, METRICS_FILE, TRACE_FILE, CHECKPOINT_FILE]
                .iter()
                .map(|s| s.to_string())
                .collect(),
        }
    }
}

pub fn write_manifest(path: &Path, manifest: &RunManifest) -> Result<()> {
    let text = serde_json::to_string_pretty(manifest).expect("manifest serializes");
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

/// Terminal line of a metrics file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub schema_version: u32,
    pub config_hash: String,
    pub rounds: usize,
    pub final_accuracy: Option<f64>,
    pub best_accuracy: Option<f64>,
}

impl RunSummary {
    pub fn from_reports(reports: &[RoundReport], config_hash: &str) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            config_hash: config_hash.into(),
            rounds: reports.len(),
            final_accuracy: reports.last().map(|r| r.test_accuracy),
            best_accuracy: reports.iter().map(|r| r.test_accuracy).reduce(f64::max),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "lowercase")]
enum MetricsLine {
    Round(RoundReport),
    Summary(RunSummary),
}

/// Appends one line per round, flushing each so a crash leaves a readable
/// prefix without a summary.
pub struct MetricsWriter {
    out: BufWriter<File>,
    path: PathBuf,
    config_hash: String,
}

impl MetricsWriter {
    pub fn create(path: &Path, config_hash: &str) -> Result<Self> {
        let f = File::create(path).map_err(|e| Error::io(path, e))?;
        Ok(Self {
            out: BufWriter::new(f),
            path: path.to_path_buf(),
            config_hash: config_hash.into(),
        })
    }

    fn line(&mut self, line: &MetricsLine) -> Result<()> {
        let text = serde_json::to_string(line).expect("metrics serialize");
        writeln!(self.out, "{text}")
            .and_then(|_| self.out.flush())
            .map_err(|e| Error::io(&self.path, e))
    }

    pub fn write_round(&mut self, report: &RoundReport) -> Result<()> {
        self.line(&MetricsLine::Round(report.clone()))
    }

    pub fn finish(mut self, reports: &[RoundReport]) -> Result<()> {
        let summary = RunSummary::from_reports(reports, &self.config_hash);
        self.line(&MetricsLine::Summary(summary))
    }
}

pub fn emit_metrics(reports: &[RoundReport], path: &Path, config_hash: &str) -> Result<()> {
    let mut w = MetricsWriter::create(path, config_hash)?;
    for r in reports {
        w.write_round(r)?;
    }
    w.finish(reports)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsFile {
    pub reports: Vec<RoundReport>,
    /// `None` when the file ends before its summary line.
    pub summary: Option<RunSummary>,
}

impl MetricsFile {
    pub fn is_complete(&self) -> bool {
        self.summary.is_some()
    }
}

pub fn load_metrics(path: &Path) -> Result<MetricsFile> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reports = Vec::new();
    let mut summary = None;
    for (n, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        if summary.is_some() {
            return Err(Error::Schema(format!("{}: line {} follows the summary", path.display(), n + 1)));
        }
        let parsed: std::result::Result<MetricsLine, _> = serde_json::from_str(&line);
        match parsed {
            Ok(MetricsLine::Round(r)) => reports.push(r),
            Ok(MetricsLine::Summary(s)) => {
                if s.schema_version != SCHEMA_VERSION {
                    return Err(Error::Schema(format!(
                        "{}: schema version {} (expected {SCHEMA_VERSION})",
                        path.display(),
                        s.schema_version
                    )));
                }
                summary = Some(s);
            }
            // a torn final write is a truncation, anything earlier is corrupt
            Err(e) => {
                return Err(Error::Schema(format!("{}: line {}: {e}", path.display(), n + 1)));
            }
        }
    }
    Ok(MetricsFile { reports, summary })
}

#[derive(Serialize)]
struct TraceLine<'a> {
    round: usize,
    layer: usize,
    #[serde(flatten)]
    trace: &'a BarycenterTrace,
}

/// JSON-lines record of every barycenter computation.
pub struct TraceWriter {
    out: BufWriter<File>,
    path: PathBuf,
}

impl TraceWriter {
    pub fn create(path: &Path) -> Result<Self> {
        let f = File::create(path).map_err(|e| Error::io(path, e))?;
        Ok(Self {
            out: BufWriter::new(f),
            path: path.to_path_buf(),
        })
    }

    pub fn write(&mut self, round: usize, layer: usize, trace: &BarycenterTrace) -> Result<()> {
        let text = serde_json::to_string(&TraceLine { round, layer, trace }).expect("trace serializes");
        writeln!(self.out, "{text}")
            .and_then(|_| self.out.flush())
            .map_err(|e| Error::io(&self.path, e))
    }
}

/// Config used by the presets: the FMNIST subset with a 784-128-10 MLP,
/// ten clients at half participation for thirty rounds.
pub fn desk_config() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.experiment.num_clients = 10;
    cfg.experiment.participation = 0.5;
    cfg.experiment.rounds = 30;
    cfg.data.source = DataSource::Idx;
    cfg.data.alpha = 0.01;
    // with two dense layers, matching more than the classifier leaves no
    // averaged feature layer
    cfg.aggregation.mask = LayerSelection::Last(1);
    cfg
}

#[derive(Debug, Clone, PartialEq)]
pub struct NamedConfig {
    pub label: String,
    pub config: ExperimentConfig,
}

pub const PRESETS: [&str; 5] = [
    "ablation-modules",
    "ablation-layers",
    "heterogeneity-sweep",
    "epsilon-sweep",
    "iters-sweep",
];

pub const HETEROGENEITY_ALPHAS: [f64; 4] = [0.01, 0.1, 1.0, 100.0];
pub const EPSILON_GRID: [f64; 5] = [1e-6, 1e-5, 1e-4, 1e-3, 1e-2];
pub const ITERS_GRID: [usize; 5] = [50, 100, 150, 200, 300];

/// The configs of a named experiment bundle, labelled by variant.
pub fn preset(name: &str) -> Result<Vec<NamedConfig>> {
    let base = desk_config();
    let variant = |label: String, edit: &dyn Fn(&mut ExperimentConfig)| {
        let mut config = base.clone();
        config.experiment.name = format!("{name}/{label}");
        config.output.dir = PathBuf::from("runs").join(name).join(&label);
        edit(&mut config);
        NamedConfig { label, config }
    };
    let runs = match name {
        "ablation-modules" => vec![
            variant("adaptive-loss-only".into(), &|c| c.aggregation.mask = LayerSelection::None),
            variant("dynamic-agg-only".into(), &|c| c.client.beta_override = Some(0.0)),
            variant("both".into(), &|_| {}),
        ],
        "ablation-layers" => ["none", "0", "1", "all"]
            .iter()
            .map(|m| {
                let sel: LayerSelection = m.parse().expect("static mask");
                variant(format!("mask-{}", m), &move |c| c.aggregation.mask = sel.clone())
            })
            .collect(),
        "heterogeneity-sweep" => HETEROGENEITY_ALPHAS
            .iter()
            .map(|&a| variant(format!("alpha-{a}"), &move |c| c.data.alpha = a))
            .collect(),
        "epsilon-sweep" => EPSILON_GRID
            .iter()
            .map(|&e| variant(format!("epsilon-{e:e}"), &move |c| c.aggregation.epsilon = e))
            .collect(),
        "iters-sweep" => ITERS_GRID
            .iter()
            .map(|&n| {
                variant(format!("iters-{n}"), &move |c| {
                    c.aggregation.max_iters = n;
                    c.aggregation.epsilon = 1e-4;
                })
            })
            .collect(),
        other => {
            return Err(Error::Config(format!(
                "unknown preset {other:?}; valid presets: {}",
                PRESETS.join(", ")
            )))
        }
    };
    for r in &runs {
        r.config.validate()?;
    }
    Ok(runs)
}

/// Mean and sample standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self { mean: f64::NAN, std: f64::NAN, n };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let var = if n > 1 {
            values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64
        } else {
            0.0
        };
        Self { mean, std: var.sqrt(), n }
    }
}

/// Per-run and aggregate statistics of a seed sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub seeds: Vec<u64>,
    pub final_accuracy: Vec<f64>,
    pub rounds_to_target: Vec<Option<usize>>,
    pub accuracy: MeanStd,
}

pub fn summarize_sweep(seeds: &[u64], runs: &[Vec<RoundReport>], target: Option<f64>) -> SweepSummary {
    let final_accuracy: Vec<f64> = runs
        .iter()
        .map(|r| r.last().map_or(f64::NAN, |x| x.test_accuracy))
        .collect();
    SweepSummary {
        seeds: seeds.to_vec(),
        rounds_to_target: runs
            .iter()
            .map(|r| target.and_then(|t| diagnostics::rounds_to_target(r, t)))
            .collect(),
        accuracy: MeanStd::of(&final_accuracy),
        final_accuracy,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_from_empty_file() {
        let cfg = parse_config_str("").unwrap();
        assert_eq!(cfg.experiment.num_clients, 100);
        assert_eq!(cfg.experiment.participation, 0.1);
        assert_eq!(cfg.client.batch_size, 32);
        assert_eq!(cfg.client.local_epochs, 3);
        assert_eq!(cfg.aggregation.epsilon, 1e-5);
        assert_eq!(cfg.aggregation.max_iters, 150);
        assert_eq!(cfg.aggregation.mask, LayerSelection::Last(2));
    }

    #[test]
    fn alpha_zero_rejected() {
        let err = parse_config_str("[data]\nalpha = 0.0\n").unwrap_err().to_string();
        assert!(err.contains("alpha must be > 0"), "{err}");
    }

    #[test]
    fn unknown_key_rejected() {
        assert!(parse_config_str("[client]\nlearning_rate = 0.1\n").is_err());
        assert!(parse_config_str("[nonsense]\n").is_err());
    }

    #[test]
    fn presets_listed_on_unknown() {
        let err = preset("nope").unwrap_err().to_string();
        for p in PRESETS {
            assert!(err.contains(p));
        }
        let modules = preset("ablation-modules").unwrap();
        let labels: Vec<_> = modules.iter().map(|m| m.label.as_str()).collect();
        assert_eq!(labels, ["adaptive-loss-only", "dynamic-agg-only", "both"]);
        let alphas: Vec<f64> = preset("heterogeneity-sweep")
            .unwrap()
            .iter()
            .map(|c| c.config.data.alpha)
            .collect();
        assert_eq!(alphas, HETEROGENEITY_ALPHAS);
    }

    #[test]
    fn mean_std() {
        let m = MeanStd::of(&[1.0, 2.0, 3.0]);
        assert_eq!(m.mean, 2.0);
        assert!((m.std - 1.0).abs() < 1e-15);
    }
}
