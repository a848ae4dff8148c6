//! Round orchestration: sampling, local training, masked aggregation and
//! evaluation.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::adam::AdamConfig;
use crate::checkpoint;
use crate::client::{self, Algorithm, ClientConfig, ClientContext, LocalUpdate};
use crate::config::{self, MetricsWriter};
use crate::data::{self, ClientShard, Dataset, DirichletConfig};
use crate::diagnostics;
use crate::error::{Error, Result};
use crate::nn::{self, ModelParams, ModelSpec};
use crate::ot::{self, AggregationMask, ClientWeights, SinkhornConfig};

/// Which dense layers a mask or regularizer addresses.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LayerSelection {
    None,
    All,
    /// The final `n` dense layers.
    Last(usize),
    Explicit(Vec<usize>),
}

impl LayerSelection {
    pub fn resolve(&self, layers: usize) -> Result<Vec<usize>> {
        Ok(match self {
            LayerSelection::None => Vec::new(),
            LayerSelection::All => (0..layers).collect(),
            LayerSelection::Last(n) => (layers.saturating_sub(*n)..layers).collect(),
            LayerSelection::Explicit(ids) => {
                if let Some(bad) = ids.iter().find(|&&j| j >= layers) {
                    return Err(Error::Config(format!(
                        "mask: layer {bad} does not exist (model has {layers} dense layers)"
                    )));
                }
                let mut v = ids.clone();
                v.sort_unstable();
                v.dedup();
                v
            }
        })
    }

    pub fn to_mask(&self, layers: usize) -> Result<AggregationMask> {
        let ids = self.resolve(layers)?;
        Ok(AggregationMask::new((0..layers).map(|j| ids.contains(&j)).collect()))
    }
}

impl FromStr for LayerSelection {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim().to_ascii_lowercase();
        let err = || Error::Config(format!("mask: cannot parse {s:?} (use \"none\", \"all\", \"last N\" or \"0,2\")"));
        if t == "none" || t.is_empty() {
            return Ok(LayerSelection::None);
        }
        if t == "all" {
            return Ok(LayerSelection::All);
        }
        if let Some(rest) = t.strip_prefix("last") {
            let n: usize = rest.trim().parse().map_err(|_| err())?;
            return Ok(LayerSelection::Last(n));
        }
        t.split(',')
            .map(|p| p.trim().parse::<usize>().map_err(|_| err()))
            .collect::<Result<Vec<_>>>()
            .map(LayerSelection::Explicit)
    }
}

impl fmt::Display for LayerSelection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LayerSelection::None => f.write_str("none"),
            LayerSelection::All => f.write_str("all"),
            LayerSelection::Last(n) => write!(f, "last {n}"),
            LayerSelection::Explicit(ids) => {
                let parts: Vec<String> = ids.iter().map(|j| j.to_string()).collect();
                f.write_str(&parts.join(","))
            }
        }
    }
}

impl Serialize for LayerSelection {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for LayerSelection {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentSection {
    pub name: String,
    pub algorithm: Algorithm,
    pub num_clients: usize,
    pub participation: f64,
    pub rounds: usize,
    pub seed: u64,
    /// Seeds used by `sweep`.
    pub seeds: Vec<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target_accuracy: Option<f64>,
    pub server_lr: f64,
    /// Adds wall-clock milliseconds to each round record.
    pub record_timing: bool,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        Self {
            name: "experiment".into(),
            algorithm: Algorithm::FedDual,
            num_clients: 100,
            participation: 0.1,
            rounds: 50,
            seed: 0,
            seeds: vec![0, 1, 2],
            target_accuracy: None,
            server_lr: 1.0,
            record_timing: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataSource {
    Synthetic,
    Idx,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataSection {
    pub source: DataSource,
    pub alpha: f64,
    pub train_images: PathBuf,
    pub train_labels: PathBuf,
    pub test_images: PathBuf,
    pub test_labels: PathBuf,
    /// Keep only the first N training / test samples (0 = all).
    pub train_limit: usize,
    pub test_limit: usize,
    pub classes: usize,
    pub per_class: usize,
    pub test_per_class: usize,
    pub feature_dim: usize,
    /// Seed of the synthetic generator.
    pub synthetic_seed: u64,
}

impl Default for DataSection {
    fn default() -> Self {
        Self {
            source: DataSource::Synthetic,
            alpha: 0.01,
            train_images: PathBuf::from("data/fmnist-subset/train-images-idx3-ubyte"),
            train_labels: PathBuf::from("data/fmnist-subset/train-labels-idx1-ubyte"),
            test_images: PathBuf::from("data/fmnist-subset/t10k-images-idx3-ubyte"),
            test_labels: PathBuf::from("data/fmnist-subset/t10k-labels-idx1-ubyte"),
            train_limit: 0,
            test_limit: 0,
            classes: 10,
            per_class: 100,
            test_per_class: 20,
            feature_dim: 20,
            synthetic_seed: 7,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    /// Hidden widths between the input and the classifier.
    pub hidden: Vec<usize>,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self { hidden: vec![128] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClientSection {
    pub local_epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub prox_mu: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta_override: Option<f64>,
}

impl Default for ClientSection {
    fn default() -> Self {
        let adam = AdamConfig::default();
        Self {
            local_epochs: 3,
            batch_size: 32,
            lr: adam.lr,
            beta1: adam.beta1,
            beta2: adam.beta2,
            adam_eps: adam.eps,
            prox_mu: 0.01,
            beta_override: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AggregationSection {
    pub mask: LayerSelection,
    /// Layers entering the KL term; "dynamic" follows the mask.
    pub kl_layers: String,
    pub epsilon: f64,
    pub max_iters: usize,
    pub tol: f64,
    pub ot_reg: f64,
    pub bins: usize,
    pub sinkhorn_max_iters: usize,
    pub marginal_tol: f64,
}

impl Default for AggregationSection {
    fn default() -> Self {
        let s = SinkhornConfig::default();
        Self {
            mask: LayerSelection::Last(2),
            kl_layers: "dynamic".into(),
            epsilon: s.epsilon,
            max_iters: s.max_iters,
            tol: s.tol,
            ot_reg: s.ot_reg,
            bins: s.bins,
            sinkhorn_max_iters: s.sinkhorn_max_iters,
            marginal_tol: s.marginal_tol,
        }
    }
}

impl AggregationSection {
    pub fn sinkhorn(&self) -> SinkhornConfig {
        SinkhornConfig {
            epsilon: self.epsilon,
            max_iters: self.max_iters,
            tol: self.tol,
            ot_reg: self.ot_reg,
            bins: self.bins,
            sinkhorn_max_iters: self.sinkhorn_max_iters,
            marginal_tol: self.marginal_tol,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("runs/experiment"),
        }
    }
}

/// Complete description of one simulation.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub experiment: ExperimentSection,
    pub data: DataSection,
    pub model: ModelSection,
    pub client: ClientSection,
    pub aggregation: AggregationSection,
    pub output: OutputSection,
}

impl ExperimentConfig {
    /// Checks every constraint, naming the offending key.
    pub fn validate(&self) -> Result<()> {
        let e = &self.experiment;
        let bad = |key: &str, why: &str| Err(Error::Config(format!("{key}: {why}")));
        if e.num_clients == 0 {
            return bad("experiment.num_clients", "must be >= 1");
        }
        if !(e.participation > 0.0 && e.participation <= 1.0) {
            return bad("experiment.participation", "must be in (0, 1]");
        }
        if e.rounds == 0 {
            return bad("experiment.rounds", "must be >= 1");
        }
        if !(e.server_lr > 0.0) || !e.server_lr.is_finite() {
            return bad("experiment.server_lr", "must be > 0");
        }
        if let Some(t) = e.target_accuracy {
            if !(0.0..=1.0).contains(&t) {
                return bad("experiment.target_accuracy", "must be in [0, 1]");
            }
        }
        if !(self.data.alpha > 0.0) || !self.data.alpha.is_finite() {
            return bad("data.alpha", "alpha must be > 0");
        }
        if self.data.source == DataSource::Synthetic
            && (self.data.classes < 2 || self.data.per_class == 0 || self.data.test_per_class == 0 || self.data.feature_dim == 0)
        {
            return bad("data", "synthetic classes >= 2 and per_class, test_per_class, feature_dim must be positive");
        }
        if self.model.hidden.contains(&0) {
            return bad("model.hidden", "widths must be positive");
        }
        let c = &self.client;
        if c.local_epochs == 0 {
            return bad("client.local_epochs", "must be >= 1");
        }
        if c.batch_size == 0 {
            return bad("client.batch_size", "must be >= 1");
        }
        if !(c.lr > 0.0) {
            return bad("client.lr", "must be > 0");
        }
        if !(0.0..1.0).contains(&c.beta1) || !(0.0..1.0).contains(&c.beta2) {
            return bad("client.beta1/beta2", "must be in [0, 1)");
        }
        if !(c.adam_eps > 0.0) {
            return bad("client.adam_eps", "must be > 0");
        }
        if !(c.prox_mu >= 0.0) {
            return bad("client.prox_mu", "must be >= 0");
        }
        if let Some(b) = c.beta_override {
            if !(0.0..=1.0).contains(&b) {
                return bad("client.beta_override", "must be in [0, 1]");
            }
        }
        self.aggregation
            .sinkhorn()
            .validate()
            .map_err(|err| Error::Config(format!("aggregation.{}", err.to_string().trim_start_matches("configuration error: "))))?;
        if self.aggregation.kl_layers != "dynamic" {
            self.aggregation
                .kl_layers
                .parse::<LayerSelection>()
                .map_err(|_| Error::Config("aggregation.kl_layers: expected \"dynamic\" or a layer selection".into()))?;
        }
        let dense = self.model.hidden.len() + 1;
        if let LayerSelection::Explicit(ids) = &self.aggregation.mask {
            if ids.iter().any(|&j| j >= dense) {
                return bad("aggregation.mask", "names a layer the model does not have");
            }
        }
        Ok(())
    }

    pub fn client_config(&self) -> ClientConfig {
        let c = &self.client;
        ClientConfig {
            local_epochs: c.local_epochs,
            batch_size: c.batch_size,
            adam: AdamConfig {
                lr: c.lr,
                beta1: c.beta1,
                beta2: c.beta2,
                eps: c.adam_eps,
            },
            algorithm: self.experiment.algorithm,
            prox_mu: c.prox_mu,
            beta_override: c.beta_override,
        }
    }

    /// Number of clients sampled per round.
    pub fn sampled_per_round(&self) -> usize {
        sample_size(self.experiment.num_clients, self.experiment.participation)
    }
}

fn sample_size(k: usize, fraction: f64) -> usize {
    ((k as f64 * fraction).round() as usize).clamp(1, k.max(1))
}

/// Uniform sample without replacement of `max(1, round(k·fraction))`
/// client ids, returned sorted.
pub fn sample_clients(k: usize, fraction: f64, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let m = sample_size(k, fraction);
    let mut ids = index::sample(rng, k, m).into_vec();
    ids.sort_unstable();
    ids
}

/// Per-client RNG seed derived from `(global seed, round, client)`.
pub fn client_seed(seed: u64, round: usize, client: usize) -> u64 {
    let mut z = seed
        ^ (round as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ (client as u64).wrapping_mul(0xC2B2_AE3D_27D4_EB4F);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaStats {
    pub min: f64,
    pub mean: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerBarycenter {
    pub layer: usize,
    pub iterations: usize,
    pub fallback: bool,
}

/// One round's record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundReport {
    pub round: usize,
    pub sampled: Vec<usize>,
    pub test_accuracy: f64,
    pub test_loss: f64,
    /// Mean over sampled clients of `‖Δ_k[j]‖₂` per layer.
    pub layer_norms: Vec<f64>,
    /// Mean over sampled clients of `Σ_j ‖Δ_k[j]‖₂²`.
    pub update_sq_norm: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<BetaStats>,
    #[serde(default)]
    pub barycenter: Vec<LayerBarycenter>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_ms: Option<u64>,
}

/// Data, shards and resolved structure shared by every round.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub config: ExperimentConfig,
    pub spec: ModelSpec,
    pub train: Dataset,
    pub test: Dataset,
    pub shards: Vec<ClientShard>,
    pub mask: AggregationMask,
    pub kl_layers: Vec<usize>,
}

impl Simulation {
    /// Loads (or synthesizes) the data and partitions it.
    pub fn prepare(config: &ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let (train, test) = load_data(&config.data)?;
        Self::from_data(config, train, test)
    }

    pub fn from_data(config: &ExperimentConfig, train: Dataset, test: Dataset) -> Result<Self> {
        config.validate()?;
        let classes = train.classes.max(test.classes);
        let train = train.with_classes(classes)?;
        let test = test.with_classes(classes)?;
        if train.feature_dim() != test.feature_dim() {
            return Err(Error::Config("train and test feature widths differ".into()));
        }
        let mut widths = vec![train.feature_dim()];
        widths.extend_from_slice(&config.model.hidden);
        widths.push(classes);
        let spec = ModelSpec::mlp(&widths)?;
        let layers = spec.dense_count();
        let mask = config.aggregation.mask.to_mask(layers)?;
        let kl_layers = if config.aggregation.kl_layers == "dynamic" {
            let dynamic = mask.dynamic_layers();
            if dynamic.is_empty() {
                vec![layers - 1]
            } else {
                dynamic
            }
        } else {
            config.aggregation.kl_layers.parse::<LayerSelection>()?.resolve(layers)?
        };
        let shards = data::dirichlet_partition(
            &train,
            &DirichletConfig {
                alpha: config.data.alpha,
                num_clients: config.experiment.num_clients,
                seed: config.experiment.seed,
            },
        )?;
        Ok(Self {
            config: config.clone(),
            spec,
            train,
            test,
            shards,
            mask,
            kl_layers,
        })
    }

    pub fn initial_state(&self) -> ServerState {
        let seed = self.config.experiment.seed;
        let mut init_rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5EED_1417);
        ServerState {
            round: 0,
            global: ModelParams::init(&self.spec, &mut init_rng),
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

pub fn load_data(cfg: &DataSection) -> Result<(Dataset, Dataset)> {
    match cfg.source {
        DataSource::Synthetic => {
            let total = cfg.per_class + cfg.test_per_class;
            let all = data::synthesize_dataset(cfg.classes, total, cfg.feature_dim, cfg.synthetic_seed)?;
            // samples are interleaved by class, so a prefix split stays balanced
            let split = cfg.per_class * cfg.classes;
            let train: Vec<usize> = (0..split).collect();
            let test: Vec<usize> = (split..all.len()).collect();
            Ok((all.subset(&train)?, all.subset(&test)?))
        }
        DataSource::Idx => {
            let mut train = data::load_idx(&cfg.train_images, &cfg.train_labels)?;
            let mut test = data::load_idx(&cfg.test_images, &cfg.test_labels)?;
            if cfg.train_limit > 0 {
                train = train.head(cfg.train_limit);
            }
            if cfg.test_limit > 0 {
                test = test.head(cfg.test_limit);
            }
            Ok((train, test))
        }
    }
}

/// `θ^g`, round counter and server RNG.
#[derive(Debug, Clone)]
pub struct ServerState {
    pub round: usize,
    pub global: ModelParams,
    pub rng: ChaCha8Rng,
}

/// Everything produced by one round.
#[derive(Debug, Clone)]
pub struct RoundOutput {
    pub report: RoundReport,
    pub updates: Vec<LocalUpdate>,
    pub barycenters: Vec<(usize, ot::BarycenterTrace)>,
}

fn train_clients(sim: &Simulation, state: &ServerState, sampled: &[usize], round: usize) -> Result<Vec<LocalUpdate>> {
    let ctx = ClientContext {
        spec: &sim.spec,
        dataset: &sim.train,
        kl_layers: &sim.kl_layers,
    };
    let cfg = sim.config.client_config();
    let seed = sim.config.experiment.seed;
    let job = |&k: &usize| {
        client::local_train(&ctx, &sim.shards[k], &state.global, &cfg, client_seed(seed, round, k))
    };
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        sampled.par_iter().map(job).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        sampled.iter().map(job).collect()
    }
}

/// Advances the server by one communication round.
pub fn run_round(state: &mut ServerState, sim: &Simulation) -> Result<RoundOutput> {
    let e = &sim.config.experiment;
    let started = e.record_timing.then(Instant::now);
    let round = state.round + 1;
    let sampled = sample_clients(e.num_clients, e.participation, &mut state.rng);
    let updates = train_clients(sim, state, &sampled, round)?;

    let thetas: Vec<ModelParams> = updates.iter().map(|u| u.params.clone()).collect();
    let deltas: Vec<ModelParams> = updates.iter().map(|u| u.delta.clone()).collect();
    let (global, barycenters) = match e.algorithm {
        Algorithm::FedDual => {
            let weights = ClientWeights::uniform(thetas.len())?;
            let out = ot::aggregate_round(
                &state.global,
                &thetas,
                &deltas,
                &sim.mask,
                &weights,
                &sim.config.aggregation.sinkhorn(),
                e.server_lr,
            )?;
            (out.params, out.barycenters)
        }
        Algorithm::FedAvg | Algorithm::FedProx => (ot::fedavg(&thetas)?, Vec::new()),
    };
    if !global.is_finite() {
        return Err(Error::Training {
            client: usize::MAX,
            epoch: 0,
            message: format!("global model became non-finite in round {round}"),
        });
    }
    let (test_loss, test_accuracy) = nn::evaluate(&sim.spec, &global, &sim.test.images, &sim.test.labels)?;

    let layer_norms = diagnostics::layer_gradient_norms(&deltas)?;
    let update_sq_norm = deltas
        .iter()
        .map(|d| d.layers.iter().map(|l| l.norm().powi(2)).sum::<f64>())
        .sum::<f64>()
        / deltas.len() as f64;
    let betas: Vec<f64> = updates.iter().flat_map(|u| u.report.beta_per_epoch.iter().copied()).collect();
    let beta = (!betas.is_empty()).then(|| BetaStats {
        min: betas.iter().copied().fold(f64::INFINITY, f64::min),
        mean: betas.iter().sum::<f64>() / betas.len() as f64,
        max: betas.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    });
    let barycenter = barycenters
        .iter()
        .map(|(layer, t)| LayerBarycenter {
            layer: *layer,
            iterations: t.iterations,
            fallback: t.fallback,
        })
        .collect();
    state.global = global;
    state.round = round;
    let report = RoundReport {
        round,
        sampled,
        test_accuracy,
        test_loss,
        layer_norms,
        update_sq_norm,
        beta,
        barycenter,
        wall_ms: started.map(|t| t.elapsed().as_millis() as u64),
    };
    Ok(RoundOutput {
        report,
        updates,
        barycenters,
    })
}

/// Runs every round in memory, returning the reports and the final state.
pub fn simulate(sim: &Simulation) -> Result<(Vec<RoundReport>, ServerState)> {
    let mut state = sim.initial_state();
    let mut reports = Vec::with_capacity(sim.config.experiment.rounds);
    for _ in 0..sim.config.experiment.rounds {
        reports.push(run_round(&mut state, sim)?.report);
    }
    Ok((reports, state))
}

/// Files written by [`run_experiment`] inside the output directory.
pub const METRICS_FILE: &str = "metrics.jsonl";
pub const CHECKPOINT_FILE: &str = "checkpoint.bin";
pub const CONFIG_ECHO_FILE: &str = "config.toml";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const TRACE_FILE: &str = "barycenter_trace.jsonl";

/// Prepares the simulation, runs it and persists metrics incrementally,
/// plus the manifest, config echo, barycenter trace and final checkpoint.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<RoundReport>> {
    let sim = Simulation::prepare(cfg)?;
    run_prepared(&sim, &cfg.output.dir)
}

pub fn run_prepared(sim: &Simulation, out: &Path) -> Result<Vec<RoundReport>> {
    let cfg = &sim.config;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let hash = config::config_hash(cfg);
    config::write_manifest(&out.join(MANIFEST_FILE), &config::RunManifest::new(cfg, out))?;
    let echo = out.join(CONFIG_ECHO_FILE);
    std::fs::write(&echo, config::serialize_config(cfg)?).map_err(|e| Error::io(&echo, e))?;

    let mut metrics = MetricsWriter::create(&out.join(METRICS_FILE), &hash)?;
    let mut trace = config::TraceWriter::create(&out.join(TRACE_FILE))?;
    let mut state = sim.initial_state();
    let mut reports = Vec::with_capacity(cfg.experiment.rounds);
    for _ in 0..cfg.experiment.rounds {
        let output = run_round(&mut state, sim)?;
        for (layer, t) in &output.barycenters {
            trace.write(output.report.round, *layer, t)?;
        }
        metrics.write_round(&output.report)?;
        reports.push(output.report);
    }
    metrics.finish(&reports)?;
    checkpoint::save(&out.join(CHECKPOINT_FILE), &state.global, &hash, state.round)?;
    Ok(reports)
}
