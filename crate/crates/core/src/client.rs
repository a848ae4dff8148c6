//! Client-side local update.
//!
//! FedDUAL clients minimize `(1 − β)·CE + β·KL(p‖q)` where `p` and `q` are
//! softmax distributions over the flattened weights of the local and
//! global models, and `β = σ(A_local − A_global)`. FedAvg clients minimize
//! plain cross-entropy; FedProx adds `(μ/2)·‖θ − θ^g‖²`.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::adam::{AdamConfig, AdamState};
use crate::data::{ClientShard, Dataset};
use crate::error::{Error, Result};
use crate::nn::{self, ModelParams, ModelSpec, ParamGrads, PROB_FLOOR};

/// `θ^g − θ_k` after local training, one entry per dense layer.
pub type PseudoGradient = ModelParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    FedDual,
    FedAvg,
    FedProx,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::FedDual => "feddual",
            Algorithm::FedAvg => "fedavg",
            Algorithm::FedProx => "fedprox",
        }
    }
}

impl std::str::FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "feddual" => Ok(Algorithm::FedDual),
            "fedavg" => Ok(Algorithm::FedAvg),
            "fedprox" => Ok(Algorithm::FedProx),
            other => Err(Error::Config(format!(
                "algorithm: unknown value {other:?} (expected feddual, fedavg or fedprox)"
            ))),
        }
    }
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientConfig {
    pub local_epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub algorithm: Algorithm,
    /// Proximal coefficient, read only by FedProx.
    pub prox_mu: f64,
    /// Replaces the adaptive β with a constant (ablations, reduction tests).
    pub beta_override: Option<f64>,
}

impl Default for ClientConfig {
    fn default() -> Self {
        Self {
            local_epochs: 3,
            batch_size: 32,
            adam: AdamConfig::default(),
            algorithm: Algorithm::FedDual,
            prox_mu: 0.0,
            beta_override: None,
        }
    }
}

/// Per-client training record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalReport {
    pub client_id: usize,
    pub samples: usize,
    /// Global model's accuracy on this shard before any local step.
    pub a_global: f64,
    /// Local accuracy used to set each epoch's β.
    pub a_local_per_epoch: Vec<f64>,
    pub beta_per_epoch: Vec<f64>,
    /// Batch-averaged cross-entropy per epoch.
    pub local_loss: Vec<f64>,
    /// Batch-averaged KL (or proximal) regularizer per epoch.
    pub kl_term: Vec<f64>,
    /// Regularizer value at the very first step, where `θ_k = θ^g`.
    pub initial_kl: f64,
}

/// Softmax over the concatenated weights of `layer_ids`.
pub fn softmax_flatten(params: &ModelParams, layer_ids: &[usize]) -> Result<Vec<f64>> {
    if layer_ids.is_empty() {
        return Err(Error::Input("softmax_flatten needs at least one layer".into()));
    }
    let mut v = params.flatten_layers(layer_ids)?;
    nn::softmax_in_place(&mut v);
    Ok(v)
}

/// `Σ p_i ln(p_i / q_i)` with both sides floored at 1e-12.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::Input(format!("kl: lengths {} and {} differ", p.len(), q.len())));
    }
    let kl: f64 = p
        .iter()
        .zip(q)
        .map(|(&pi, &qi)| {
            let pi = pi.max(PROB_FLOOR);
            pi * (pi.ln() - qi.max(PROB_FLOOR).ln())
        })
        .sum();
    Ok(kl.max(0.0))
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// `σ(a_local − a_global)`.
pub fn adaptive_beta(a_local: f64, a_global: f64) -> f64 {
    sigmoid(a_local - a_global)
}

pub fn adaptive_loss(ce: f64, kl: f64, beta: f64) -> f64 {
    (1.0 - beta) * ce + beta * kl
}

/// KL between the softmax of `params[layer_ids]` and the fixed `q`, and its
/// gradient with respect to those flattened weights:
/// `∂KL/∂w_j = p_j (ln p_j − ln q_j − KL)`.
pub fn kl_to_global(params: &ModelParams, layer_ids: &[usize], q: &[f64]) -> Result<(f64, Vec<f64>)> {
    let p = softmax_flatten(params, layer_ids)?;
    let kl = kl_divergence(&p, q)?;
    let grad = p
        .iter()
        .zip(q)
        .map(|(&pi, &qi)| pi * (pi.max(PROB_FLOOR).ln() - qi.max(PROB_FLOOR).ln() - kl))
        .collect();
    Ok((kl, grad))
}

/// `(μ/2)·‖θ − θ^g‖²` and its gradient `μ·(θ − θ^g)`.
pub fn prox_term(params: &ModelParams, global: &ModelParams, mu: f64) -> Result<(f64, ParamGrads)> {
    let diff = params.sub(global)?;
    let sq: f64 = diff.values().map(|v| v * v).sum();
    Ok((0.5 * mu * sq, diff.scale(mu)))
}

/// Adds `factor * flat` into the gradients of `layer_ids`, in flatten order.
fn add_flat(grads: &mut ParamGrads, layer_ids: &[usize], flat: &[f64], factor: f64) {
    let mut offset = 0;
    for &j in layer_ids {
        let layer = &mut grads.layers[j];
        for g in layer.weights.data_mut().iter_mut().chain(layer.bias.data_mut().iter_mut()) {
            *g += factor * flat[offset];
            offset += 1;
        }
    }
}

/// Read-only inputs shared by every client in a round.
#[derive(Debug, Clone, Copy)]
pub struct ClientContext<'a> {
    pub spec: &'a ModelSpec,
    pub dataset: &'a Dataset,
    /// Layers whose weights enter the KL regularizer.
    pub kl_layers: &'a [usize],
}

/// Result of one client's local update.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalUpdate {
    pub params: ModelParams,
    pub delta: PseudoGradient,
    pub report: LocalReport,
}

/// Runs `cfg.local_epochs` of mini-batch Adam on the shard, starting from
/// `global`. The algorithm in `cfg` selects the loss.
pub fn local_train(
    ctx: &ClientContext<'_>,
    shard: &ClientShard,
    global: &ModelParams,
    cfg: &ClientConfig,
    seed: u64,
) -> Result<LocalUpdate> {
    if shard.is_empty() {
        return Err(Error::Input(format!("client {} has an empty shard", shard.client_id)));
    }
    if cfg.batch_size == 0 || cfg.local_epochs == 0 {
        return Err(Error::Config("batch_size and local_epochs must be positive".into()));
    }
    if !global.matches_spec(ctx.spec) {
        return Err(Error::Config("global parameters do not match the model spec".into()));
    }
    let client = shard.client_id;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut theta = global.clone();
    let mut adam = AdamState::new(&theta, cfg.adam);
    let adaptive = cfg.algorithm == Algorithm::FedDual;

    let (shard_images, shard_labels) = ctx.dataset.gather(&shard.indices)?;
    let a_global = if adaptive {
        nn::evaluate(ctx.spec, global, &shard_images, &shard_labels)?.1
    } else {
        0.0
    };
    let uses_kl = adaptive && cfg.beta_override != Some(0.0) && !ctx.kl_layers.is_empty();
    let q = if uses_kl {
        softmax_flatten(global, ctx.kl_layers)?
    } else {
        Vec::new()
    };

    let mut report = LocalReport {
        client_id: client,
        samples: shard.len(),
        a_global,
        a_local_per_epoch: Vec::new(),
        beta_per_epoch: Vec::new(),
        local_loss: Vec::new(),
        kl_term: Vec::new(),
        initial_kl: 0.0,
    };

    let mut a_local = a_global;
    let mut order: Vec<usize> = (0..shard.len()).collect();
    let mut first_step = true;
    for epoch in 0..cfg.local_epochs {
        let beta = if adaptive {
            cfg.beta_override.unwrap_or_else(|| adaptive_beta(a_local, a_global))
        } else {
            0.0
        };
        if adaptive {
            report.a_local_per_epoch.push(a_local);
            report.beta_per_epoch.push(beta);
        }
        order.shuffle(&mut rng);
        let mut ce_sum = 0.0;
        let mut reg_sum = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            let idx: Vec<usize> = chunk.iter().map(|&i| shard.indices[i]).collect();
            let (x, y) = ctx.dataset.gather(&idx)?;
            let (logits, cache) = nn::forward(ctx.spec, &theta, &x)?;
            let (ce, _) = nn::cross_entropy(&logits, &y)?;
            let ce_weight = if adaptive { 1.0 - beta } else { 1.0 };
            let mut grads = nn::backward(ctx.spec, &theta, &cache, &y, ce_weight)?;
            let mut reg = 0.0;
            if uses_kl && beta != 0.0 {
                let (kl, kl_grad) = kl_to_global(&theta, ctx.kl_layers, &q)?;
                add_flat(&mut grads, ctx.kl_layers, &kl_grad, beta);
                reg = kl;
            } else if cfg.algorithm == Algorithm::FedProx && cfg.prox_mu != 0.0 {
                let (value, g) = prox_term(&theta, global, cfg.prox_mu)?;
                grads = grads.add_scaled(&g, 1.0)?;
                reg = value;
            }
            let loss = if adaptive {
                adaptive_loss(ce, reg, beta)
            } else {
                ce + reg
            };
            if !loss.is_finite() || !grads.is_finite() {
                return Err(Error::Training {
                    client,
                    epoch,
                    message: format!("non-finite loss {loss}"),
                });
            }
            if first_step {
                report.initial_kl = reg;
                first_step = false;
            }
            adam.step(&mut theta, &grads)?;
            ce_sum += ce;
            reg_sum += reg;
            batches += 1;
        }
        report.local_loss.push(ce_sum / batches as f64);
        report.kl_term.push(reg_sum / batches as f64);
        if adaptive && epoch + 1 < cfg.local_epochs {
            a_local = nn::evaluate(ctx.spec, &theta, &shard_images, &shard_labels)?.1;
        }
    }
    if !theta.is_finite() {
        return Err(Error::Training {
            client,
            epoch: cfg.local_epochs - 1,
            message: "parameters became non-finite".into(),
        });
    }
    let delta = global.sub(&theta)?;
    Ok(LocalUpdate {
        params: theta,
        delta,
        report,
    })
}

/// FedProx local update: [`local_train`] with the proximal loss forced on.
pub fn fedprox_local_train(
    ctx: &ClientContext<'_>,
    shard: &ClientShard,
    global: &ModelParams,
    cfg: &ClientConfig,
    seed: u64,
) -> Result<LocalUpdate> {
    let cfg = ClientConfig {
        algorithm: Algorithm::FedProx,
        ..cfg.clone()
    };
    local_train(ctx, shard, global, &cfg, seed)
}
