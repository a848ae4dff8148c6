//! Oracles shared by the integration test targets.
#![allow(dead_code)]

use std::collections::HashSet;

use feddual::client::{kl_divergence, kl_to_global, prox_term, softmax_flatten};
use feddual::data::{dirichlet_partition, label_histogram, normalized_entropy, Dataset, DirichletConfig};
use feddual::nn::{self, ModelParams, ModelSpec};
use feddual::ot::GradDistribution;
use feddual::tensor::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const H: f64 = 1e-6;
// gradients smaller than this are compared absolutely
pub const FLOOR: f64 = 1e-5;

pub fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(FLOOR)
}

pub fn random_model(rng: &mut ChaCha8Rng) -> (ModelSpec, ModelParams) {
    let input = rng.random_range(2..6);
    let hidden = rng.random_range(2..6);
    let classes = rng.random_range(2..5);
    let spec = ModelSpec::mlp(&[input, hidden, classes]).unwrap();
    let mut params = ModelParams::init(&spec, rng);
    // nonzero biases so the gradient is not trivially structured
    for layer in &mut params.layers {
        for b in layer.bias.data_mut() {
            *b = rng.random_range(-0.5..0.5);
        }
    }
    (spec, params)
}

fn perturbed(params: &ModelParams, index: usize, delta: f64) -> ModelParams {
    let mut p = params.clone();
    *p.values_mut().nth(index).unwrap() += delta;
    p
}

pub fn central<F: Fn(&ModelParams) -> f64>(f: &F, params: &ModelParams, index: usize) -> f64 {
    (f(&perturbed(params, index, H)) - f(&perturbed(params, index, -H))) / (2.0 * H)
}

/// Worst relative error of the cross-entropy backward pass over `trials` random models.
pub fn cross_entropy_worst(trials: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..trials {
        let (spec, params) = random_model(&mut rng);
        let batch = rng.random_range(1..6);
        let x: Vec<f64> = (0..batch * spec.input_dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let x = Tensor::new(vec![batch, spec.input_dim()], x).unwrap();
        let y: Vec<usize> = (0..batch).map(|_| rng.random_range(0..spec.classes())).collect();
        let weight = rng.random_range(0.1..2.0);
        let (_, cache) = nn::forward(&spec, &params, &x).unwrap();
        let grads = nn::backward(&spec, &params, &cache, &y, weight).unwrap();
        let loss = |p: &ModelParams| {
            let (logits, _) = nn::forward(&spec, p, &x).unwrap();
            weight * nn::cross_entropy(&logits, &y).unwrap().0
        };
        for (i, &g) in grads.values().enumerate() {
            worst = worst.max(rel_err(g, central(&loss, &params, i)));
        }
    }
    worst
}

/// Same for the KL term through the softmax over flattened layers.
pub fn kl_worst(trials: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..trials {
        let (_, params) = random_model(&mut rng);
        let mut global = params.clone();
        for v in global.values_mut() {
            *v += rng.random_range(-0.5..0.5);
        }
        let ids: Vec<usize> = if rng.random_bool(0.5) { vec![1] } else { vec![0, 1] };
        let q = softmax_flatten(&global, &ids).unwrap();
        let (_, grad) = kl_to_global(&params, &ids, &q).unwrap();
        let kl = |p: &ModelParams| kl_divergence(&softmax_flatten(p, &ids).unwrap(), &q).unwrap();
        // flat index k of the selected layers maps to a position in values()
        let offsets: Vec<usize> = {
            let sizes: Vec<usize> = params.layers.iter().map(|l| l.len()).collect();
            let mut out = Vec::new();
            for &j in &ids {
                let start: usize = sizes[..j].iter().sum();
                out.extend(start..start + sizes[j]);
            }
            out
        };
        assert_eq!(offsets.len(), grad.len());
        for (k, &pos) in offsets.iter().enumerate() {
            worst = worst.max(rel_err(grad[k], central(&kl, &params, pos)));
        }
    }
    worst
}

/// Same for the proximal term.
pub fn prox_worst(trials: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..trials {
        let (_, params) = random_model(&mut rng);
        let mut global = params.clone();
        for v in global.values_mut() {
            *v += rng.random_range(-1.0..1.0);
        }
        let mu = rng.random_range(0.001..1.0);
        let (_, grads) = prox_term(&params, &global, mu).unwrap();
        let f = |p: &ModelParams| prox_term(p, &global, mu).unwrap().0;
        for (i, &g) in grads.values().enumerate() {
            worst = worst.max(rel_err(g, central(&f, &params, i)));
        }
    }
    worst
}

/// Two random histograms on a shared grid of 8 to 64 bins in [0, 1].
pub fn random_pair(rng: &mut ChaCha8Rng) -> (GradDistribution, GradDistribution) {
    let bins = rng.random_range(8..=64);
    let centers: Vec<f64> = (0..bins).map(|i| i as f64 / (bins - 1) as f64).collect();
    let mut hist = || {
        // sparse-ish histograms exercise the support restriction
        let mut h: Vec<f64> = (0..bins)
            .map(|_| if rng.random_bool(0.7) { rng.random::<f64>() } else { 0.0 })
            .collect();
        if h.iter().all(|&x| x == 0.0) {
            h[0] = 1.0;
        }
        let s: f64 = h.iter().sum();
        h.iter_mut().for_each(|x| *x /= s);
        GradDistribution {
            hist: h,
            bin_centers: centers.clone(),
            source_norm: 1.0,
        }
    };
    (hist(), hist())
}

/// Random histogram on the grid of `like`.
pub fn random_hist_like(like: &GradDistribution, rng: &mut ChaCha8Rng) -> GradDistribution {
    let mut r: Vec<f64> = (0..like.hist.len()).map(|_| rng.random::<f64>()).collect();
    let s: f64 = r.iter().sum();
    r.iter_mut().for_each(|x| *x /= s);
    GradDistribution {
        hist: r,
        bin_centers: like.bin_centers.clone(),
        source_norm: 1.0,
    }
}

/// Brute-force 1-D W1 between empirical measures: sorted quantile matching
/// on a fine mass grid, independent of the CDF-difference formula.
pub fn quantile_w1(p: &GradDistribution, q: &GradDistribution) -> f64 {
    let steps = 20_000;
    let quantile = |d: &GradDistribution, t: f64| {
        let mut acc = 0.0;
        for (h, c) in d.hist.iter().zip(&d.bin_centers) {
            acc += h;
            if acc >= t {
                return *c;
            }
        }
        *d.bin_centers.last().unwrap()
    };
    (0..steps)
        .map(|k| {
            let t = (k as f64 + 0.5) / steps as f64;
            (quantile(p, t) - quantile(q, t)).abs()
        })
        .sum::<f64>()
        / steps as f64
}

/// Disjoint, exhaustive, nonempty shards with consistent histograms.
pub fn partition_exact(ds: &Dataset, cfg: &DirichletConfig) -> Result<(), String> {
    let shards = dirichlet_partition(ds, cfg).map_err(|e| e.to_string())?;
    if shards.len() != cfg.num_clients {
        return Err(format!("{} shards for {} clients", shards.len(), cfg.num_clients));
    }
    let mut seen = HashSet::new();
    for s in &shards {
        if s.is_empty() {
            return Err(format!("client {} empty", s.client_id));
        }
        for &i in &s.indices {
            if !seen.insert(i) {
                return Err(format!("index {i} assigned twice"));
            }
        }
        if s.label_histogram != label_histogram(&s.indices, ds).map_err(|e| e.to_string())? {
            return Err(format!("client {} histogram mismatch", s.client_id));
        }
    }
    if seen.len() != ds.len() {
        return Err(format!("{} of {} samples assigned", seen.len(), ds.len()));
    }
    Ok(())
}

pub fn balanced(classes: usize, per_class: usize) -> Dataset {
    let n = classes * per_class;
    let labels: Vec<usize> = (0..n).map(|i| i % classes).collect();
    Dataset::new(Tensor::zeros(&[n, 1]), labels, classes).unwrap()
}

fn mean_entropy(alpha: f64, seed: u64) -> f64 {
    let ds = balanced(10, 100);
    let shards = dirichlet_partition(&ds, &DirichletConfig { alpha, num_clients: 10, seed }).unwrap();
    shards.iter().map(|s| normalized_entropy(&s.label_histogram)).sum::<f64>() / shards.len() as f64
}

/// Mean client label entropy (ten clients, ten balanced classes) and its
/// standard error over seeds `0..n`.
pub fn entropy_stats(alpha: f64, n: u64) -> (f64, f64) {
    let xs: Vec<f64> = (0..n).map(|s| mean_entropy(alpha, s)).collect();
    let m = xs.iter().sum::<f64>() / n as f64;
    let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1) as f64;
    (m, (var / n as f64).sqrt())
}

// one-sided 99% normal quantile
pub const Z99: f64 = 2.326;
