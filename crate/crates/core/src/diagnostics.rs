//! Instrumentation: per-layer update norms, filter-normalized loss
//! landscapes, rounds-to-target and the convergence-rate fit.

use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::client::PseudoGradient;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::nn::{self, ModelParams, ModelSpec};
use crate::runtime::RoundReport;

/// Mean over clients of `‖Δ_k[j]‖₂`, for each layer `j`.
pub fn layer_gradient_norms(deltas: &[PseudoGradient]) -> Result<Vec<f64>> {
    let first = deltas
        .first()
        .ok_or_else(|| Error::Input("layer_gradient_norms needs at least one client".into()))?;
    if deltas.iter().any(|d| !d.congruent(first)) {
        return Err(Error::Input("pseudo-gradients have mismatched shapes".into()));
    }
    let n = deltas.len() as f64;
    Ok((0..first.layer_count())
        .map(|j| deltas.iter().map(|d| d.layers[j].norm()).sum::<f64>() / n)
        .collect())
}

/// Per-round, per-layer mean update norms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormTrace {
    pub layer_names: Vec<String>,
    pub rounds: Vec<usize>,
    pub norms: Vec<Vec<f64>>,
}

impl NormTrace {
    pub fn from_reports(reports: &[RoundReport]) -> Self {
        let layers = reports.first().map(|r| r.layer_norms.len()).unwrap_or(0);
        Self {
            layer_names: (0..layers).map(|j| format!("dense{j}")).collect(),
            rounds: reports.iter().map(|r| r.round).collect(),
            norms: reports.iter().map(|r| r.layer_norms.clone()).collect(),
        }
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("round");
        for name in &self.layer_names {
            s.push(',');
            s.push_str(name);
        }
        s.push('\n');
        for (r, row) in self.rounds.iter().zip(&self.norms) {
            let _ = write!(s, "{r}");
            for v in row {
                let _ = write!(s, ",{v}");
            }
            s.push('\n');
        }
        s
    }
}

/// Loss sampled on an `n × n` grid around a model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LandscapeGrid {
    pub n: usize,
    pub span: f64,
    /// Axis coordinates, shared by both directions.
    pub coords: Vec<f64>,
    /// Row-major: `values[a * n + b]` is the loss at `θ + coords[a]·d1 + coords[b]·d2`.
    pub values: Vec<f64>,
    pub direction_seeds: (u64, u64),
    /// Set when some cell produced a non-finite loss (stored as the sentinel).
    pub flagged: bool,
}

/// Stand-in for non-finite landscape cells.
pub const LANDSCAPE_SENTINEL: f64 = 1e6;

/// Samples used for landscape evaluation.
pub const LANDSCAPE_SUBSET: usize = 512;

impl LandscapeGrid {
    pub fn at(&self, a: usize, b: usize) -> f64 {
        self.values[a * self.n + b]
    }

    pub fn center(&self) -> f64 {
        let c = self.n / 2;
        self.at(c, c)
    }

    /// Mean loss over the grid minus the center loss; smaller is flatter.
    pub fn flatness(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64 - self.center()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("a\\b");
        for c in &self.coords {
            let _ = write!(s, ",{c}");
        }
        s.push('\n');
        for (a, ca) in self.coords.iter().enumerate() {
            let _ = write!(s, "{ca}");
            for b in 0..self.n {
                let _ = write!(s, ",{}", self.at(a, b));
            }
            s.push('\n');
        }
        s
    }
}

/// Random Gaussian direction rescaled row by row to the norms of the
/// matching weight rows. Bias directions are zero.
pub fn filter_normalized_direction(params: &ModelParams, seed: u64) -> ModelParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut dir = params.zeros_like();
    for (d, p) in dir.layers.iter_mut().zip(&params.layers) {
        let cols = p.weights.row_len();
        let rows = p.weights.rows();
        let dw = d.weights.data_mut();
        for r in 0..rows {
            let row: Vec<f64> = (0..cols).map(|_| StandardNormal.sample(&mut rng)).collect();
            let rn = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            let target = p.weights.row(r).iter().map(|v| v * v).sum::<f64>().sqrt();
            let scale = if rn > 0.0 { target / rn } else { 0.0 };
            for (c, v) in row.into_iter().enumerate() {
                dw[r * cols + c] = v * scale;
            }
        }
    }
    dir
}

fn axis(n: usize, span: f64) -> Vec<f64> {
    let m = (n - 1) as f64;
    (0..n)
        .map(|i| {
            let k = 2.0 * i as f64 - m;
            if k == 0.0 {
                0.0
            } else {
                span * k / m
            }
        })
        .collect()
}

/// Grid over explicit directions.
pub fn loss_landscape_with_directions(
    spec: &ModelSpec,
    params: &ModelParams,
    eval: &Dataset,
    n: usize,
    span: f64,
    d1: &ModelParams,
    d2: &ModelParams,
) -> Result<LandscapeGrid> {
    if n % 2 == 0 || n == 0 {
        return Err(Error::Input("landscape grid size must be odd".into()));
    }
    if !(span > 0.0) {
        return Err(Error::Input("landscape span must be > 0".into()));
    }
    if !d1.congruent(params) || !d2.congruent(params) {
        return Err(Error::Input("directions must match the parameters".into()));
    }
    let coords = axis(n, span);
    let mut values = vec![0.0; n * n];
    let mut flagged = false;
    for (a, &ca) in coords.iter().enumerate() {
        for (b, &cb) in coords.iter().enumerate() {
            let mut point = params.clone();
            for ((p, &x), &y) in point.values_mut().zip(d1.values()).zip(d2.values()) {
                *p = *p + ca * x + cb * y;
            }
            let (loss, _) = nn::evaluate(spec, &point, &eval.images, &eval.labels)?;
            values[a * n + b] = if loss.is_finite() {
                loss
            } else {
                flagged = true;
                LANDSCAPE_SENTINEL
            };
        }
    }
    Ok(LandscapeGrid {
        n,
        span,
        coords,
        values,
        direction_seeds: (0, 0),
        flagged,
    })
}

/// `n × n` loss grid over `[−span, span]²` along two filter-normalized
/// random directions, on the first [`LANDSCAPE_SUBSET`] samples of `dataset`.
pub fn loss_landscape_grid(
    spec: &ModelSpec,
    params: &ModelParams,
    dataset: &Dataset,
    n: usize,
    span: f64,
    seed: u64,
) -> Result<LandscapeGrid> {
    let seeds = (seed.wrapping_mul(2).wrapping_add(1), seed.wrapping_mul(2).wrapping_add(2));
    let d1 = filter_normalized_direction(params, seeds.0);
    let d2 = filter_normalized_direction(params, seeds.1);
    let eval = dataset.head(LANDSCAPE_SUBSET);
    let mut grid = loss_landscape_with_directions(spec, params, &eval, n, span, &d1, &d2)?;
    grid.direction_seeds = seeds;
    Ok(grid)
}

/// First round (1-based, as recorded) whose accuracy reaches `target`.
pub fn rounds_to_target(reports: &[RoundReport], target: f64) -> Option<usize> {
    reports.iter().find(|r| r.test_accuracy >= target).map(|r| r.round)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SlopeStatus {
    Ok,
    /// The running mean is constant, so the slope carries no information.
    Degenerate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub slope: f64,
    pub intercept: f64,
    /// Root-mean-square residual of the log-log fit.
    pub residual: f64,
    pub status: SlopeStatus,
}

/// Least-squares slope of `log(running mean of series)` against `log t`.
pub fn convergence_decay_check(series: &[f64]) -> Result<DecayFit> {
    if series.len() < 10 {
        return Err(Error::Input(format!(
            "convergence check needs >= 10 rounds, got {}",
            series.len()
        )));
    }
    if series.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
        return Err(Error::Input("series must be finite and nonnegative".into()));
    }
    let mut sum = 0.0;
    let mut pts = Vec::with_capacity(series.len());
    for (i, &v) in series.iter().enumerate() {
        sum += v;
        let mean = sum / (i + 1) as f64;
        if mean <= 0.0 {
            return Err(Error::Input("running mean must be positive".into()));
        }
        pts.push((((i + 1) as f64).ln(), mean.ln()));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    if syy <= 1e-24 * n {
        return Ok(DecayFit {
            slope: 0.0,
            intercept: my,
            residual: 0.0,
            status: SlopeStatus::Degenerate,
        });
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residual = (pts
        .iter()
        .map(|p| (p.1 - (intercept + slope * p.0)).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    Ok(DecayFit {
        slope,
        intercept,
        residual,
        status: SlopeStatus::Ok,
    })
}

/// [`convergence_decay_check`] over the per-round mean squared update norms.
pub fn decay_from_reports(reports: &[RoundReport]) -> Result<DecayFit> {
    let series: Vec<f64> = reports.iter().map(|r| r.update_sq_norm).collect();
    convergence_decay_check(&series)
}
