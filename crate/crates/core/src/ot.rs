//! Server-side aggregation: Sinkhorn–Knopp transport between value
//! histograms, the γ-weighted barycenter fixed point, FedAvg layer
//! averaging and the masked per-layer dispatch.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{DenseParams, ModelParams};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SinkhornConfig {
    /// Temperature of the scaling factor `γ = exp(−W/ε)`.
    pub epsilon: f64,
    /// Barycenter fixed-point iteration cap.
    pub max_iters: usize,
    /// Relative step size below which the barycenter iteration stops.
    pub tol: f64,
    /// Entropic regularization of the inner transport problem, relative to
    /// the largest ground cost.
    pub ot_reg: f64,
    /// Histogram bins per distribution.
    pub bins: usize,
    /// Inner Sinkhorn iteration cap.
    pub sinkhorn_max_iters: usize,
    /// Inner Sinkhorn stopping threshold on the L1 marginal violation.
    pub marginal_tol: f64,
}

impl Default for SinkhornConfig {
    fn default() -> Self {
        Self {
            epsilon: 1e-5,
            max_iters: 150,
            tol: 1e-8,
            ot_reg: 1e-3,
            bins: 64,
            sinkhorn_max_iters: 5000,
            marginal_tol: 1e-9,
        }
    }
}

impl SinkhornConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("epsilon", self.epsilon),
            ("tol", self.tol),
            ("ot_reg", self.ot_reg),
            ("marginal_tol", self.marginal_tol),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("{name} must be > 0")));
            }
        }
        if self.max_iters == 0 || self.sinkhorn_max_iters == 0 {
            return Err(Error::Config("iteration caps must be >= 1".into()));
        }
        if self.bins < 2 {
            return Err(Error::Config("bins must be >= 2".into()));
        }
        Ok(())
    }
}

/// A probability vector over shared, strictly increasing bin centers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradDistribution {
    pub hist: Vec<f64>,
    pub bin_centers: Vec<f64>,
    /// L2 norm of the vector the histogram was built from.
    pub source_norm: f64,
}

/// `[min, max]` over every value of every vector.
pub fn value_range<'a>(vectors: impl IntoIterator<Item = &'a [f64]>) -> Option<(f64, f64)> {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for v in vectors {
        for &x in v {
            lo = lo.min(x);
            hi = hi.max(x);
        }
    }
    (lo <= hi).then_some((lo, hi))
}

/// Equal-width histogram of `flat` over `range`, normalized to mass 1.
/// A degenerate range is widened to unit width around its value.
pub fn to_distribution(flat: &[f64], bins: usize, range: (f64, f64)) -> Result<GradDistribution> {
    if flat.is_empty() {
        return Err(Error::Input("cannot build a distribution from an empty vector".into()));
    }
    if bins < 2 {
        return Err(Error::Input("need at least two bins".into()));
    }
    let (mut lo, mut hi) = range;
    if !(lo.is_finite() && hi.is_finite()) || lo > hi {
        return Err(Error::Input(format!("invalid histogram range [{lo}, {hi}]")));
    }
    if hi - lo <= 0.0 {
        lo -= 0.5;
        hi += 0.5;
    }
    let width = (hi - lo) / bins as f64;
    let mut hist = vec![0.0; bins];
    for &x in flat {
        let pos = ((x - lo) / width).floor();
        let b = if pos < 0.0 { 0 } else { (pos as usize).min(bins - 1) };
        hist[b] += 1.0;
    }
    let n = flat.len() as f64;
    for h in hist.iter_mut() {
        *h /= n;
    }
    let bin_centers = (0..bins).map(|i| lo + (i as f64 + 0.5) * width).collect();
    let source_norm = flat.iter().map(|v| v * v).sum::<f64>().sqrt();
    Ok(GradDistribution {
        hist,
        bin_centers,
        source_norm,
    })
}

fn check_support(p: &GradDistribution, q: &GradDistribution) -> Result<()> {
    if p.bin_centers != q.bin_centers || p.hist.len() != p.bin_centers.len() || q.hist.len() != q.bin_centers.len() {
        return Err(Error::Input("distributions do not share bin centers".into()));
    }
    Ok(())
}

/// Closed-form 1-D Wasserstein-1: `Σ |CDF_P − CDF_Q| · Δcenter`.
pub fn wasserstein_1d_exact(p: &GradDistribution, q: &GradDistribution) -> Result<f64> {
    check_support(p, q)?;
    let mut cp = 0.0;
    let mut cq = 0.0;
    let mut total = 0.0;
    for i in 0..p.hist.len().saturating_sub(1) {
        cp += p.hist[i];
        cq += q.hist[i];
        total += (cp - cq).abs() * (p.bin_centers[i + 1] - p.bin_centers[i]);
    }
    Ok(total)
}

/// Result of one entropic transport solve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SinkhornOutcome {
    /// Transport cost `⟨π, C⟩` (debiased when returned by [`sinkhorn_distance`]).
    pub value: f64,
    pub converged: bool,
    /// Final L1 violation of the row marginal.
    pub marginal_violation: f64,
    pub iterations: usize,
}

fn rebuild_kernel(kernel: &mut [f64], cost: &[f64], f: &[f64], g: &[f64], reg: f64) {
    let nb = g.len();
    for (i, row) in kernel.chunks_exact_mut(nb).enumerate() {
        let c = &cost[i * nb..(i + 1) * nb];
        for j in 0..nb {
            row[j] = ((f[i] + g[j] - c[j]) / reg).exp();
        }
    }
}

/// Projects a near-feasible plan onto the exact marginals `a`, `b`:
/// scale rows and columns down where they exceed their targets, then add
/// the rank-one correction of the remaining deficits.
fn round_to_marginals(plan: &mut [f64], a: &[f64], b: &[f64]) {
    let nb = b.len();
    for (row, &ai) in plan.chunks_exact_mut(nb).zip(a) {
        let r: f64 = row.iter().sum();
        if r > ai {
            row.iter_mut().for_each(|x| *x *= ai / r);
        }
    }
    let mut cols = vec![0.0; nb];
    for row in plan.chunks_exact(nb) {
        cols.iter_mut().zip(row).for_each(|(c, x)| *c += x);
    }
    let col_scale: Vec<f64> = cols
        .iter()
        .zip(b)
        .map(|(&c, &bj)| if c > bj { bj / c } else { 1.0 })
        .collect();
    for row in plan.chunks_exact_mut(nb) {
        row.iter_mut().zip(&col_scale).for_each(|(x, s)| *x *= s);
    }
    let err_a: Vec<f64> = plan.chunks_exact(nb).zip(a).map(|(row, ai)| ai - row.iter().sum::<f64>()).collect();
    let mut err_b = b.to_vec();
    for row in plan.chunks_exact(nb) {
        err_b.iter_mut().zip(row).for_each(|(e, x)| *e -= x);
    }
    let total: f64 = err_a.iter().sum();
    if total > 0.0 {
        for (row, ea) in plan.chunks_exact_mut(nb).zip(&err_a) {
            row.iter_mut().zip(&err_b).for_each(|(x, eb)| *x += ea * eb / total);
        }
    }
}

fn mat_vec(kernel: &[f64], x: &[f64], out: &mut [f64]) {
    for (o, row) in out.iter_mut().zip(kernel.chunks_exact(x.len())) {
        *o = row.iter().zip(x).map(|(k, x)| k * x).sum();
    }
}

fn mat_t_vec(kernel: &[f64], x: &[f64], out: &mut [f64]) {
    out.iter_mut().for_each(|o| *o = 0.0);
    for (row, &xi) in kernel.chunks_exact(out.len()).zip(x) {
        for (o, k) in out.iter_mut().zip(row) {
            *o += k * xi;
        }
    }
}

/// Entropic transport cost between two histograms with ground cost
/// `|center_a − center_b|`, by stabilized Sinkhorn scaling with
/// regularization annealed down to `ot_reg · max cost`.
pub fn sinkhorn_cost(p: &GradDistribution, q: &GradDistribution, cfg: &SinkhornConfig) -> Result<SinkhornOutcome> {
    check_support(p, q)?;
    // the cost is symmetric, so solving in a canonical order makes an
    // unconverged result symmetric too
    let (p, q) = if p.hist.as_slice() > q.hist.as_slice() { (q, p) } else { (p, q) };
    let rows: Vec<usize> = (0..p.hist.len()).filter(|&i| p.hist[i] > 0.0).collect();
    let cols: Vec<usize> = (0..q.hist.len()).filter(|&j| q.hist[j] > 0.0).collect();
    if rows.is_empty() || cols.is_empty() {
        return Err(Error::Input("sinkhorn: empty histogram".into()));
    }
    let centers = &p.bin_centers;
    let cost: Vec<f64> = rows
        .iter()
        .flat_map(|&i| cols.iter().map(move |&j| (centers[i] - centers[j]).abs()))
        .collect();
    let max_cost = centers[centers.len() - 1] - centers[0];
    let (na, nb) = (rows.len(), cols.len());
    if na == 1 || nb == 1 || max_cost <= 0.0 {
        // the only feasible coupling is the product measure
        let value = rows
            .iter()
            .enumerate()
            .flat_map(|(ri, &i)| {
                let cost = &cost;
                cols.iter()
                    .enumerate()
                    .map(move |(ci, &j)| p.hist[i] * q.hist[j] * cost[ri * nb + ci])
            })
            .sum();
        return Ok(SinkhornOutcome {
            value,
            converged: true,
            marginal_violation: 0.0,
            iterations: 0,
        });
    }

    let target_reg = cfg.ot_reg * max_cost;
    let mut reg = max_cost.max(target_reg);
    let a: Vec<f64> = rows.iter().map(|&i| p.hist[i]).collect();
    let b: Vec<f64> = cols.iter().map(|&j| q.hist[j]).collect();
    // scaling iterations on K = exp((f ⊕ g − C)/reg), with u and v absorbed
    // into the potentials f and g whenever they leave a safe range
    let mut f = vec![0.0; na];
    let mut g = vec![0.0; nb];
    let mut kernel = vec![0.0; na * nb];
    let mut u = vec![1.0; na];
    let mut v = vec![1.0; nb];
    let mut kv = vec![0.0; na];
    let mut ku = vec![0.0; nb];
    let mut iterations = 0;
    let mut violation;
    const SAFE: f64 = 1e100;
    loop {
        let final_stage = reg <= target_reg;
        let stage_tol = if final_stage { cfg.marginal_tol } else { 1e-3 };
        rebuild_kernel(&mut kernel, &cost, &f, &g, reg);
        loop {
            mat_vec(&kernel, &v, &mut kv);
            for i in 0..na {
                u[i] = a[i] / kv[i].max(f64::MIN_POSITIVE);
            }
            mat_t_vec(&kernel, &u, &mut ku);
            for j in 0..nb {
                v[j] = b[j] / ku[j].max(f64::MIN_POSITIVE);
            }
            iterations += 1;
            // columns are exact after the v-update; measure the rows
            mat_vec(&kernel, &v, &mut kv);
            violation = (0..na).map(|i| (u[i] * kv[i] - a[i]).abs()).sum::<f64>();
            let done = violation < stage_tol || iterations >= cfg.sinkhorn_max_iters;
            let unsafe_scale = u.iter().chain(v.iter()).any(|&s| !(1.0 / SAFE..SAFE).contains(&s));
            if unsafe_scale || done {
                for i in 0..na {
                    f[i] += reg * u[i].ln();
                    u[i] = 1.0;
                }
                for j in 0..nb {
                    g[j] += reg * v[j].ln();
                    v[j] = 1.0;
                }
                if done {
                    break;
                }
                rebuild_kernel(&mut kernel, &cost, &f, &g, reg);
            }
        }
        if final_stage || iterations >= cfg.sinkhorn_max_iters {
            break;
        }
        reg = (reg * 0.5).max(target_reg);
    }
    rebuild_kernel(&mut kernel, &cost, &f, &g, reg);
    round_to_marginals(&mut kernel, &a, &b);
    let value: f64 = kernel.iter().zip(&cost).map(|(k, c)| k * c).sum();
    Ok(SinkhornOutcome {
        value,
        converged: violation < cfg.marginal_tol,
        marginal_violation: violation,
        iterations,
    })
}

/// Debiased Sinkhorn distance `W(P,Q) − ½(W(P,P) + W(Q,Q))`, clamped at 0.
pub fn sinkhorn_distance(p: &GradDistribution, q: &GradDistribution, cfg: &SinkhornConfig) -> Result<SinkhornOutcome> {
    let pp = sinkhorn_cost(p, p, cfg)?;
    let qq = sinkhorn_cost(q, q, cfg)?;
    debiased(p, q, pp, qq, cfg)
}

fn debiased(
    p: &GradDistribution,
    q: &GradDistribution,
    pp: SinkhornOutcome,
    qq: SinkhornOutcome,
    cfg: &SinkhornConfig,
) -> Result<SinkhornOutcome> {
    if p.hist == q.hist {
        return Ok(SinkhornOutcome {
            value: 0.0,
            converged: pp.converged,
            marginal_violation: pp.marginal_violation,
            iterations: pp.iterations,
        });
    }
    let pq = sinkhorn_cost(p, q, cfg)?;
    Ok(SinkhornOutcome {
        value: (pq.value - 0.5 * (pp.value + qq.value)).max(0.0),
        converged: pq.converged && pp.converged && qq.converged,
        marginal_violation: pq.marginal_violation.max(pp.marginal_violation).max(qq.marginal_violation),
        iterations: pq.iterations + pp.iterations + qq.iterations,
    })
}

/// Nonnegative client importances summing to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientWeights(Vec<f64>);

impl ClientWeights {
    pub fn uniform(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::Input("client weights need at least one client".into()));
        }
        Ok(Self(vec![1.0 / n as f64; n]))
    }

    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() || weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::Input("client weights must be nonnegative and finite".into()));
        }
        let s: f64 = weights.iter().sum();
        if (s - 1.0).abs() > 1e-12 {
            return Err(Error::Input(format!("client weights sum to {s}, expected 1")));
        }
        Ok(Self(weights))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Record of one barycenter computation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BarycenterTrace {
    pub iterations: usize,
    /// `‖p̄_new − p̄‖₂ / max(1, ‖p̄‖₂)` per iteration.
    pub step_norms: Vec<f64>,
    /// Final `λ_k γ_k / Σ λ_i γ_i`.
    pub coefficients: Vec<f64>,
    pub gammas: Vec<f64>,
    pub distances: Vec<f64>,
    /// True when every γ underflowed and the λ-weighted mean was used.
    pub fallback: bool,
    /// True when some inner transport solve hit its iteration cap.
    pub sinkhorn_capped: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Barycenter {
    pub vector: Vec<f64>,
    pub trace: BarycenterTrace,
}

fn weighted_sum(vectors: &[&[f64]], coeffs: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; vectors[0].len()];
    for (v, &c) in vectors.iter().zip(coeffs) {
        if c != 0.0 {
            for (o, &x) in out.iter_mut().zip(v.iter()) {
                *o += c * x;
            }
        }
    }
    out
}

fn l2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Fixed-point barycenter of `vectors`.
///
/// Starting from `p̄ = Σ λ_k v_k`, each iteration sets
/// `γ_k = exp(−W(hist p̄, hist v_k)/ε)` and
/// `p̄ ← Σ λ_k γ_k v_k / Σ λ_k γ_k`. Histograms share the value range of
/// the inputs, which always contains `p̄`.
pub fn barycenter(vectors: &[&[f64]], weights: &ClientWeights, cfg: &SinkhornConfig) -> Result<Barycenter> {
    cfg.validate()?;
    if vectors.is_empty() {
        return Err(Error::Input("barycenter needs at least one vector".into()));
    }
    if weights.len() != vectors.len() {
        return Err(Error::Input("one weight per vector required".into()));
    }
    let n = vectors[0].len();
    if n == 0 || vectors.iter().any(|v| v.len() != n) {
        return Err(Error::Input("barycenter inputs must be nonempty and equal length".into()));
    }
    let lambda = weights.as_slice();
    let range = value_range(vectors.iter().copied()).expect("nonempty");
    let dists = vectors
        .iter()
        .map(|v| to_distribution(v, cfg.bins, range))
        .collect::<Result<Vec<_>>>()?;
    let self_costs = dists
        .iter()
        .map(|d| sinkhorn_cost(d, d, cfg))
        .collect::<Result<Vec<_>>>()?;

    let mut bar = weighted_sum(vectors, lambda);
    let mut trace = BarycenterTrace {
        iterations: 0,
        step_norms: Vec::new(),
        coefficients: lambda.to_vec(),
        gammas: vec![1.0; vectors.len()],
        distances: vec![0.0; vectors.len()],
        fallback: false,
        sinkhorn_capped: self_costs.iter().any(|s| !s.converged),
    };
    for _ in 0..cfg.max_iters {
        trace.iterations += 1;
        let bar_dist = to_distribution(&bar, cfg.bins, range)?;
        let bar_self = sinkhorn_cost(&bar_dist, &bar_dist, cfg)?;
        let mut w = Vec::with_capacity(vectors.len());
        for (k, d) in dists.iter().enumerate() {
            let out = debiased(&bar_dist, d, bar_self, self_costs[k], cfg)?;
            trace.sinkhorn_capped |= !out.converged;
            trace.distances[k] = out.value;
            trace.gammas[k] = (-out.value / cfg.epsilon).exp();
            w.push(lambda[k] * trace.gammas[k]);
        }
        let total: f64 = w.iter().sum();
        let next = if total > 0.0 && total.is_finite() {
            trace.coefficients = w.iter().map(|x| x / total).collect();
            weighted_sum(vectors, &trace.coefficients)
        } else {
            log::warn!("barycenter: every scaling factor underflowed; using the λ-weighted mean");
            trace.fallback = true;
            trace.coefficients = lambda.to_vec();
            weighted_sum(vectors, lambda)
        };
        let diff: Vec<f64> = next.iter().zip(&bar).map(|(a, b)| a - b).collect();
        let step = l2(&diff) / l2(&bar).max(1.0);
        trace.step_norms.push(step);
        bar = next;
        if step < cfg.tol || trace.fallback {
            break;
        }
    }
    Ok(Barycenter { vector: bar, trace })
}

/// Combination `Σ c_k x_k` written as `x_0 + Σ c_k (x_k − x_0)`, which is
/// exact for one input or identical inputs.
fn anchored_combination(inputs: &[&[f64]], coeffs: &[f64]) -> Vec<f64> {
    let anchor = inputs[0];
    let mut out = vec![0.0; anchor.len()];
    for (x, &c) in inputs.iter().zip(coeffs).skip(1) {
        for ((o, &xi), &ai) in out.iter_mut().zip(x.iter()).zip(anchor) {
            *o += c * (xi - ai);
        }
    }
    out.iter().zip(anchor).map(|(o, a)| a + o).collect()
}

/// Unweighted mean of congruent layers.
pub fn fedavg_layer(layers: &[&DenseParams]) -> Result<DenseParams> {
    let first = layers
        .first()
        .ok_or_else(|| Error::Input("fedavg_layer needs at least one layer".into()))?;
    if layers
        .iter()
        .any(|l| !l.weights.same_shape(&first.weights) || !l.bias.same_shape(&first.bias))
    {
        return Err(Error::Input("fedavg_layer inputs are not congruent".into()));
    }
    let n = layers.len() as f64;
    let mean = |get: fn(&DenseParams) -> &Tensor| -> Result<Tensor> {
        let anchor = get(first).data();
        let mut acc = vec![0.0; anchor.len()];
        for l in layers.iter().skip(1) {
            for ((a, &x), &x0) in acc.iter_mut().zip(get(l).data()).zip(anchor) {
                *a += x - x0;
            }
        }
        let data = acc.iter().zip(anchor).map(|(a, x0)| x0 + a / n).collect();
        Tensor::new(get(first).shape().to_vec(), data)
    };
    Ok(DenseParams {
        weights: mean(|l| &l.weights)?,
        bias: mean(|l| &l.bias)?,
    })
}

/// Which layers are aggregated by barycenter (`true`) versus FedAvg.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AggregationMask(Vec<bool>);

impl AggregationMask {
    pub fn new(bits: Vec<bool>) -> Self {
        Self(bits)
    }

    pub fn none(layers: usize) -> Self {
        Self(vec![false; layers])
    }

    /// The final `n` layers are dynamic.
    pub fn last(n: usize, layers: usize) -> Self {
        Self((0..layers).map(|j| j + n >= layers).collect())
    }

    pub fn bits(&self) -> &[bool] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn dynamic_layers(&self) -> Vec<usize> {
        (0..self.0.len()).filter(|&j| self.0[j]).collect()
    }

    pub fn is_dynamic(&self, j: usize) -> bool {
        self.0.get(j).copied().unwrap_or(false)
    }
}

/// Aggregated global model plus the barycenter record of every dynamic layer.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregationOutcome {
    pub params: ModelParams,
    pub barycenters: Vec<(usize, BarycenterTrace)>,
}

/// Masked per-layer aggregation. FedAvg layers become the mean of the
/// client weights; dynamic layers become `θ^g − server_lr · b̄` where `b̄` is
/// the barycenter of the client pseudo-gradients.
#[allow(clippy::too_many_arguments)]
pub fn aggregate_round(
    global: &ModelParams,
    thetas: &[ModelParams],
    deltas: &[ModelParams],
    mask: &AggregationMask,
    weights: &ClientWeights,
    cfg: &SinkhornConfig,
    server_lr: f64,
) -> Result<AggregationOutcome> {
    if thetas.is_empty() || thetas.len() != deltas.len() || weights.len() != thetas.len() {
        return Err(Error::Input("aggregate_round needs one θ, Δ and λ per client".into()));
    }
    if mask.len() != global.layer_count() {
        return Err(Error::Input(format!(
            "mask covers {} layers, model has {}",
            mask.len(),
            global.layer_count()
        )));
    }
    if thetas.iter().chain(deltas).any(|m| !m.congruent(global)) {
        return Err(Error::Input("client models are not congruent with the global model".into()));
    }
    let mut layers = Vec::with_capacity(global.layer_count());
    let mut barycenters = Vec::new();
    for j in 0..global.layer_count() {
        if mask.is_dynamic(j) {
            let flat: Vec<Vec<f64>> = deltas.iter().map(|d| d.layers[j].flatten()).collect();
            let refs: Vec<&[f64]> = flat.iter().map(Vec::as_slice).collect();
            let bary = barycenter(&refs, weights, cfg)?;
            // θ^g − Σ c_k Δ_k = Σ c_k θ_k since Σ c_k = 1; the anchored form
            // keeps single-client and identical-client rounds exact.
            let client_flat: Vec<Vec<f64>> = thetas.iter().map(|t| t.layers[j].flatten()).collect();
            let crefs: Vec<&[f64]> = client_flat.iter().map(Vec::as_slice).collect();
            let combo = anchored_combination(&crefs, &bary.trace.coefficients);
            let g = global.layers[j].flatten();
            let updated: Vec<f64> = if server_lr == 1.0 {
                combo
            } else {
                g.iter().zip(&bary.vector).map(|(gi, bi)| gi - server_lr * bi).collect()
            };
            layers.push(global.layers[j].from_flat(&updated)?);
            barycenters.push((j, bary.trace));
        } else {
            let refs: Vec<&DenseParams> = thetas.iter().map(|t| &t.layers[j]).collect();
            layers.push(fedavg_layer(&refs)?);
        }
    }
    Ok(AggregationOutcome {
        params: ModelParams { layers },
        barycenters,
    })
}

/// Plain FedAvg over every layer.
pub fn fedavg(thetas: &[ModelParams]) -> Result<ModelParams> {
    let first = thetas
        .first()
        .ok_or_else(|| Error::Input("fedavg needs at least one client".into()))?;
    let layers = (0..first.layer_count())
        .map(|j| {
            let refs: Vec<&DenseParams> = thetas.iter().map(|t| &t.layers[j]).collect();
            fedavg_layer(&refs)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ModelParams { layers })
}
