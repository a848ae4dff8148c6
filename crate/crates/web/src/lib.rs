//! wasm-bindgen entry points for the static demo page in `www/`.
//!
//! Every function returns a JSON string so the page can stay plain JS.

use feddual::client::sigmoid;
use feddual::data::{dirichlet_partition, normalized_entropy, Dataset, DirichletConfig};
use feddual::ot::{self, ClientWeights, SinkhornConfig};
use feddual::tensor::Tensor;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;
use wasm_bindgen::prelude::*;

fn to_js<T: Serialize>(value: &T) -> String {
    serde_json::to_string(value).unwrap_or_else(|e| format!("{{\"error\":\"{e}\"}}"))
}

fn err(e: impl std::fmt::Display) -> JsValue {
    JsValue::from_str(&e.to_string())
}

#[derive(Serialize)]
struct PartitionView {
    /// `histograms[k][c]`: samples of class `c` held by client `k`.
    histograms: Vec<Vec<usize>>,
    entropy: Vec<f64>,
    mean_entropy: f64,
}

pub fn partition_view(alpha: f64, clients: usize, classes: usize, per_class: usize, seed: u64) -> feddual::Result<String> {
    let n = classes * per_class;
    let labels: Vec<usize> = (0..n).map(|i| i % classes).collect();
    let ds = Dataset::new(Tensor::zeros(&[n, 1]), labels, classes)?;
    let shards = dirichlet_partition(&ds, &DirichletConfig { alpha, num_clients: clients, seed })?;
    let entropy: Vec<f64> = shards.iter().map(|s| normalized_entropy(&s.label_histogram)).collect();
    Ok(to_js(&PartitionView {
        mean_entropy: entropy.iter().sum::<f64>() / entropy.len() as f64,
        histograms: shards.into_iter().map(|s| s.label_histogram).collect(),
        entropy,
    }))
}

/// Dirichlet label partition of a balanced dataset.
#[wasm_bindgen]
pub fn partition(alpha: f64, clients: usize, classes: usize, per_class: usize, seed: u64) -> Result<String, JsValue> {
    partition_view(alpha, clients, classes, per_class, seed).map_err(err)
}

#[derive(Serialize)]
struct BarycenterView {
    bin_centers: Vec<f64>,
    /// One histogram per client, then the barycenter's.
    client_hists: Vec<Vec<f64>>,
    barycenter_hist: Vec<f64>,
    coefficients: Vec<f64>,
    distances: Vec<f64>,
    step_norms: Vec<f64>,
    fallback: bool,
    /// Exact and entropic distance between the first two clients.
    exact_w1: f64,
    sinkhorn_w1: f64,
}

/// Client `k` draws `len` values from N(k·shift, 1 + k·spread).
pub fn barycenter_view(
    clients: usize,
    len: usize,
    shift: f64,
    spread: f64,
    epsilon: f64,
    bins: usize,
    seed: u64,
) -> feddual::Result<String> {
    if clients < 2 {
        return Err(feddual::Error::Input("need at least two clients".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut vectors = Vec::with_capacity(clients);
    for k in 0..clients {
        let d = Normal::new(k as f64 * shift, 1.0 + k as f64 * spread)
            .map_err(|e| feddual::Error::Input(e.to_string()))?;
        vectors.push((0..len).map(|_| d.sample(&mut rng)).collect::<Vec<f64>>());
    }
    let cfg = SinkhornConfig {
        epsilon,
        bins,
        ..SinkhornConfig::default()
    };
    let refs: Vec<&[f64]> = vectors.iter().map(|v| v.as_slice()).collect();
    let bc = ot::barycenter(&refs, &ClientWeights::uniform(clients)?, &cfg)?;
    let range = ot::value_range(refs.iter().copied()).expect("nonempty input");
    let hist = |v: &[f64]| ot::to_distribution(v, bins, range);
    let client_hists = refs.iter().map(|v| hist(v)).collect::<feddual::Result<Vec<_>>>()?;
    let bar = hist(&bc.vector)?;
    let exact = ot::wasserstein_1d_exact(&client_hists[0], &client_hists[1])?;
    let approx = ot::sinkhorn_distance(&client_hists[0], &client_hists[1], &cfg)?;
    Ok(to_js(&BarycenterView {
        bin_centers: bar.bin_centers.clone(),
        client_hists: client_hists.into_iter().map(|h| h.hist).collect(),
        barycenter_hist: bar.hist,
        coefficients: bc.trace.coefficients,
        distances: bc.trace.distances,
        step_norms: bc.trace.step_norms,
        fallback: bc.trace.fallback,
        exact_w1: exact,
        sinkhorn_w1: approx.value,
    }))
}

/// Barycenter of synthetic client vectors, with the transport diagnostics.
#[wasm_bindgen]
pub fn barycenter(
    clients: usize,
    len: usize,
    shift: f64,
    spread: f64,
    epsilon: f64,
    bins: usize,
    seed: u64,
) -> Result<String, JsValue> {
    barycenter_view(clients, len, shift, spread, epsilon, bins, seed).map_err(err)
}

#[derive(Serialize)]
struct BetaCurve {
    gap: Vec<f64>,
    beta: Vec<f64>,
    /// Mixed loss `(1−β)·ce + β·kl` at each gap.
    loss: Vec<f64>,
}

/// Client loss weight against the local/global accuracy gap.
#[wasm_bindgen]
pub fn beta_curve(ce: f64, kl: f64, points: usize) -> String {
    let points = points.max(2);
    let gap: Vec<f64> = (0..points)
        .map(|i| -1.0 + 2.0 * i as f64 / (points - 1) as f64)
        .collect();
    let beta: Vec<f64> = gap.iter().map(|&g| sigmoid(g)).collect();
    let loss = beta.iter().map(|b| (1.0 - b) * ce + b * kl).collect();
    to_js(&BetaCurve { gap, beta, loss })
}
