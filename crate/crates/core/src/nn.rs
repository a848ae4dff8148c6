//! A small feed-forward engine: dense/relu/flatten layers, softmax
//! cross-entropy and exact reverse-mode gradients.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{axpy, dot, Tensor};

/// Floor applied to probabilities before taking logs.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Dense { in_dim: usize, out_dim: usize },
    Relu,
    Flatten,
}

/// Ordered layer list describing the network `f_θ`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    layers: Vec<LayerSpec>,
}

impl ModelSpec {
    pub fn new(layers: Vec<LayerSpec>) -> Result<Self> {
        let spec = Self { layers };
        spec.validate()?;
        Ok(spec)
    }

    /// `flatten → dense → relu → … → dense` over the given widths,
    /// e.g. `[784, 128, 10]`.
    pub fn mlp(widths: &[usize]) -> Result<Self> {
        if widths.len() < 2 {
            return Err(Error::Config("an MLP needs at least input and output widths".into()));
        }
        let mut layers = vec![LayerSpec::Flatten];
        for (i, pair) in widths.windows(2).enumerate() {
            if i > 0 {
                layers.push(LayerSpec::Relu);
            }
            layers.push(LayerSpec::Dense {
                in_dim: pair[0],
                out_dim: pair[1],
            });
        }
        Self::new(layers)
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    fn validate(&self) -> Result<()> {
        let mut width: Option<usize> = None;
        let mut saw_dense = false;
        for (i, layer) in self.layers.iter().enumerate() {
            if let LayerSpec::Dense { in_dim, out_dim } = *layer {
                if in_dim == 0 || out_dim == 0 {
                    return Err(Error::Config(format!("layer {i}: dense dims must be positive")));
                }
                if let Some(w) = width {
                    if w != in_dim {
                        return Err(Error::Config(format!(
                            "layer {i}: expects {in_dim} inputs but previous layer yields {w}"
                        )));
                    }
                }
                width = Some(out_dim);
                saw_dense = true;
            }
        }
        if !saw_dense {
            return Err(Error::Config("model has no dense layer".into()));
        }
        if !matches!(self.layers.last(), Some(LayerSpec::Dense { .. })) {
            return Err(Error::Config("last layer must be dense (the classifier)".into()));
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.dense_dims()[0].0
    }

    pub fn classes(&self) -> usize {
        self.dense_dims().last().map(|d| d.1).unwrap_or(0)
    }

    /// `(in_dim, out_dim)` of each dense layer, in order.
    pub fn dense_dims(&self) -> Vec<(usize, usize)> {
        self.layers
            .iter()
            .filter_map(|l| match *l {
                LayerSpec::Dense { in_dim, out_dim } => Some((in_dim, out_dim)),
                _ => None,
            })
            .collect()
    }

    pub fn dense_count(&self) -> usize {
        self.dense_dims().len()
    }
}

/// Weights `(out_dim × in_dim)` and bias `(out_dim)` of one dense layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseParams {
    pub weights: Tensor,
    pub bias: Tensor,
}

impl DenseParams {
    pub fn len(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Weights followed by bias, as one flat vector.
    pub fn flatten(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.len());
        v.extend_from_slice(self.weights.data());
        v.extend_from_slice(self.bias.data());
        v
    }

    pub fn from_flat(&self, flat: &[f64]) -> Result<DenseParams> {
        if flat.len() != self.len() {
            return Err(Error::Input(format!(
                "flat layer has {} values, expected {}",
                flat.len(),
                self.len()
            )));
        }
        let n = self.weights.len();
        Ok(DenseParams {
            weights: Tensor::new(self.weights.shape().to_vec(), flat[..n].to_vec())?,
            bias: Tensor::new(self.bias.shape().to_vec(), flat[n..].to_vec())?,
        })
    }

    pub fn norm(&self) -> f64 {
        (self.weights.data().iter().chain(self.bias.data()).map(|v| v * v).sum::<f64>()).sqrt()
    }
}

/// Parameters of every dense layer; index `j` is the layer id used by masks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub layers: Vec<DenseParams>,
}

/// Gradients share the parameter layout.
pub type ParamGrads = ModelParams;

impl ModelParams {
    /// He-uniform weights, zero biases.
    pub fn init<R: Rng + ?Sized>(spec: &ModelSpec, rng: &mut R) -> Self {
        let layers = spec
            .dense_dims()
            .into_iter()
            .map(|(fan_in, fan_out)| {
                let limit = (6.0 / fan_in as f64).sqrt();
                let data = (0..fan_in * fan_out)
                    .map(|_| rng.random_range(-limit..limit))
                    .collect();
                DenseParams {
                    weights: Tensor::new(vec![fan_out, fan_in], data).expect("sized"),
                    bias: Tensor::zeros(&[fan_out]),
                }
            })
            .collect();
        Self { layers }
    }

    pub fn zeros(spec: &ModelSpec) -> Self {
        Self {
            layers: spec
                .dense_dims()
                .into_iter()
                .map(|(i, o)| DenseParams {
                    weights: Tensor::zeros(&[o, i]),
                    bias: Tensor::zeros(&[o]),
                })
                .collect(),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            layers: self
                .layers
                .iter()
                .map(|l| DenseParams {
                    weights: Tensor::zeros(l.weights.shape()),
                    bias: Tensor::zeros(l.bias.shape()),
                })
                .collect(),
        }
    }

    pub fn layer_count(&self) -> usize {
        self.layers.len()
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(DenseParams::len).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.is_finite() && l.bias.is_finite())
    }

    pub fn congruent(&self, other: &ModelParams) -> bool {
        self.layers.len() == other.layers.len()
            && self.layers.iter().zip(&other.layers).all(|(a, b)| {
                a.weights.same_shape(&b.weights) && a.bias.same_shape(&b.bias)
            })
    }

    pub fn matches_spec(&self, spec: &ModelSpec) -> bool {
        let dims = spec.dense_dims();
        dims.len() == self.layers.len()
            && dims.iter().zip(&self.layers).all(|(&(i, o), l)| {
                l.weights.shape() == [o, i] && l.bias.shape() == [o]
            })
    }

    fn check_congruent(&self, other: &ModelParams) -> Result<()> {
        if self.congruent(other) {
            Ok(())
        } else {
            Err(Error::Input("parameter structures are not congruent".into()))
        }
    }

    /// Elementwise `self - other`.
    pub fn sub(&self, other: &ModelParams) -> Result<ModelParams> {
        self.check_congruent(other)?;
        self.zip_map(other, |a, b| a - b)
    }

    /// Elementwise `self + factor * other`.
    pub fn add_scaled(&self, other: &ModelParams, factor: f64) -> Result<ModelParams> {
        self.check_congruent(other)?;
        self.zip_map(other, |a, b| a + factor * b)
    }

    pub fn scale(&self, factor: f64) -> ModelParams {
        ModelParams {
            layers: self
                .layers
                .iter()
                .map(|l| DenseParams {
                    weights: l.weights.scale(factor),
                    bias: l.bias.scale(factor),
                })
                .collect(),
        }
    }

    fn zip_map(&self, other: &ModelParams, f: impl Fn(f64, f64) -> f64 + Copy) -> Result<ModelParams> {
        let layers = self
            .layers
            .iter()
            .zip(&other.layers)
            .map(|(a, b)| {
                let w = a.weights.data().iter().zip(b.weights.data()).map(|(&x, &y)| f(x, y)).collect();
                let bias = a.bias.data().iter().zip(b.bias.data()).map(|(&x, &y)| f(x, y)).collect();
                Ok(DenseParams {
                    weights: Tensor::new(a.weights.shape().to_vec(), w)?,
                    bias: Tensor::new(a.bias.shape().to_vec(), bias)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(ModelParams { layers })
    }

    /// Concatenation of the selected layers' flat vectors.
    pub fn flatten_layers(&self, layer_ids: &[usize]) -> Result<Vec<f64>> {
        let mut out = Vec::new();
        for &j in layer_ids {
            let layer = self
                .layers
                .get(j)
                .ok_or_else(|| Error::Input(format!("layer id {j} out of range")))?;
            out.extend_from_slice(layer.weights.data());
            out.extend_from_slice(layer.bias.data());
        }
        Ok(out)
    }

    /// Visits every scalar parameter mutably, layer by layer.
    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weights.data_mut().iter_mut().chain(l.bias.data_mut().iter_mut()))
    }

    pub fn values(&self) -> impl Iterator<Item = &f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.data().iter().chain(l.bias.data().iter()))
    }

    fn fingerprint(&self) -> u64 {
        // FNV-1a over the raw bits
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for v in self.values() {
            h ^= v.to_bits();
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        h
    }
}

/// Activations recorded by [`forward`] for use by [`backward`].
#[derive(Debug, Clone)]
pub struct ForwardCache {
    inputs: Vec<Tensor>,
    logits: Tensor,
    params_fingerprint: u64,
}

impl ForwardCache {
    pub fn logits(&self) -> &Tensor {
        &self.logits
    }
}

/// Runs the batch through the network. The batch's leading axis is the
/// sample axis.
pub fn forward(spec: &ModelSpec, params: &ModelParams, batch: &Tensor) -> Result<(Tensor, ForwardCache)> {
    if !params.matches_spec(spec) {
        return Err(Error::Config("parameters do not match the model spec".into()));
    }
    if batch.shape().is_empty() {
        return Err(Error::Config("batch needs a sample axis".into()));
    }
    let rows = batch.rows();
    let mut x = batch.clone();
    let mut inputs = Vec::with_capacity(spec.layers().len());
    let mut dense_idx = 0;
    for (i, layer) in spec.layers().iter().enumerate() {
        let next = match *layer {
            LayerSpec::Flatten => {
                let w = x.row_len();
                x.clone().reshape(vec![rows, w])?
            }
            LayerSpec::Relu => x.map(|v| v.max(0.0)),
            LayerSpec::Dense { in_dim, out_dim } => {
                if x.shape().len() != 2 || x.row_len() != in_dim {
                    return Err(Error::Config(format!(
                        "layer {i}: input shape {:?} does not provide {in_dim} features",
                        x.shape()
                    )));
                }
                let p = &params.layers[dense_idx];
                dense_idx += 1;
                dense_forward(&x, p, out_dim)
            }
        };
        inputs.push(x);
        x = next;
    }
    let cache = ForwardCache {
        inputs,
        logits: x.clone(),
        params_fingerprint: params.fingerprint(),
    };
    Ok((x, cache))
}

fn dense_forward(x: &Tensor, p: &DenseParams, out_dim: usize) -> Tensor {
    let rows = x.rows();
    let w = p.weights.data();
    let in_dim = x.row_len();
    let bias = p.bias.data();
    let mut out = vec![0.0; rows * out_dim];
    for b in 0..rows {
        let xb = x.row(b);
        let ob = &mut out[b * out_dim..(b + 1) * out_dim];
        for o in 0..out_dim {
            ob[o] = dot(xb, &w[o * in_dim..(o + 1) * in_dim]) + bias[o];
        }
    }
    Tensor::new(vec![rows, out_dim], out).expect("sized")
}

/// Row-wise softmax with max subtraction.
pub fn softmax_rows(logits: &Tensor) -> Tensor {
    let cols = logits.row_len();
    let mut out = logits.data().to_vec();
    for row in out.chunks_mut(cols.max(1)) {
        softmax_in_place(row);
    }
    Tensor::new(logits.shape().to_vec(), out).expect("sized")
}

pub(crate) fn softmax_in_place(row: &mut [f64]) {
    let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - m).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

/// Mean softmax cross-entropy over the batch, and the softmax probabilities.
pub fn cross_entropy(logits: &Tensor, labels: &[usize]) -> Result<(f64, Tensor)> {
    let classes = logits.row_len();
    let rows = logits.rows();
    if labels.len() != rows {
        return Err(Error::Input(format!("{} labels for {} logit rows", labels.len(), rows)));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
        return Err(Error::Input(format!("label {bad} out of range for {classes} classes")));
    }
    if rows == 0 {
        return Err(Error::Input("empty batch".into()));
    }
    let probs = softmax_rows(logits);
    let loss = labels
        .iter()
        .enumerate()
        .map(|(b, &l)| -probs.row(b)[l].max(PROB_FLOOR).ln())
        .sum::<f64>()
        / rows as f64;
    Ok((loss, probs))
}

/// Gradient of `weight * cross_entropy(logits, labels)` with respect to
/// every parameter.
pub fn backward(
    spec: &ModelSpec,
    params: &ModelParams,
    cache: &ForwardCache,
    labels: &[usize],
    weight: f64,
) -> Result<ParamGrads> {
    if cache.inputs.len() != spec.layers().len() || cache.params_fingerprint != params.fingerprint() {
        return Err(Error::Internal("stale forward cache".into()));
    }
    let rows = cache.logits.rows();
    let classes = cache.logits.row_len();
    if labels.len() != rows || labels.iter().any(|&l| l >= classes) {
        return Err(Error::Input("labels do not match the cached batch".into()));
    }
    let probs = softmax_rows(&cache.logits);
    let scale = weight / rows as f64;
    let mut delta: Vec<f64> = probs.data().to_vec();
    for (b, &l) in labels.iter().enumerate() {
        delta[b * classes + l] -= 1.0;
    }
    for v in delta.iter_mut() {
        *v *= scale;
    }
    let mut delta = Tensor::new(vec![rows, classes], delta)?;

    let mut grads = params.zeros_like();
    let first_dense = spec
        .layers()
        .iter()
        .position(|l| matches!(l, LayerSpec::Dense { .. }))
        .unwrap_or(0);
    let mut dense_idx = params.layer_count();
    for (i, layer) in spec.layers().iter().enumerate().rev() {
        let input = &cache.inputs[i];
        match *layer {
            LayerSpec::Flatten => {
                delta = delta.reshape(input.shape().to_vec())?;
            }
            LayerSpec::Relu => {
                for (d, &x) in delta.data_mut().iter_mut().zip(input.data()) {
                    if x <= 0.0 {
                        *d = 0.0;
                    }
                }
            }
            LayerSpec::Dense { in_dim, out_dim } => {
                dense_idx -= 1;
                let p = &params.layers[dense_idx];
                let g = &mut grads.layers[dense_idx];
                let dy = delta.data();
                {
                    let gw = g.weights.data_mut();
                    for b in 0..rows {
                        let xb = input.row(b);
                        for o in 0..out_dim {
                            let d = dy[b * out_dim + o];
                            if d != 0.0 {
                                axpy(d, xb, &mut gw[o * in_dim..(o + 1) * in_dim]);
                            }
                        }
                    }
                }
                {
                    let gb = g.bias.data_mut();
                    for b in 0..rows {
                        for o in 0..out_dim {
                            gb[o] += dy[b * out_dim + o];
                        }
                    }
                }
                if i > first_dense {
                    let w = p.weights.data();
                    let mut dx = vec![0.0; rows * in_dim];
                    for b in 0..rows {
                        let dxb = &mut dx[b * in_dim..(b + 1) * in_dim];
                        for o in 0..out_dim {
                            let d = dy[b * out_dim + o];
                            if d != 0.0 {
                                axpy(d, &w[o * in_dim..(o + 1) * in_dim], dxb);
                            }
                        }
                    }
                    delta = Tensor::new(vec![rows, in_dim], dx)?;
                }
            }
        }
        if i <= first_dense && matches!(layer, LayerSpec::Dense { .. }) {
            break;
        }
    }
    Ok(grads)
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

const EVAL_CHUNK: usize = 256;

/// Mean cross-entropy and argmax accuracy over a full set of samples,
/// evaluated in chunks.
pub fn evaluate(spec: &ModelSpec, params: &ModelParams, images: &Tensor, labels: &[usize]) -> Result<(f64, f64)> {
    let n = images.rows();
    if n == 0 || labels.len() != n {
        return Err(Error::Input("evaluation needs a nonempty, labelled set".into()));
    }
    let w = images.row_len();
    let mut loss_sum = 0.0;
    let mut correct = 0usize;
    let mut start = 0;
    while start < n {
        let end = (start + EVAL_CHUNK).min(n);
        let mut shape = images.shape().to_vec();
        shape[0] = end - start;
        let chunk = Tensor::new(shape, images.data()[start * w..end * w].to_vec())?;
        let (logits, _) = forward(spec, params, &chunk)?;
        let (loss, _) = cross_entropy(&logits, &labels[start..end])?;
        loss_sum += loss * (end - start) as f64;
        for b in 0..end - start {
            if argmax(logits.row(b)) == labels[start + b] {
                correct += 1;
            }
        }
        start = end;
    }
    Ok((loss_sum / n as f64, correct as f64 / n as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn identity_model() -> (ModelSpec, ModelParams) {
        let spec = ModelSpec::new(vec![LayerSpec::Dense { in_dim: 2, out_dim: 2 }]).unwrap();
        let params = ModelParams {
            layers: vec![DenseParams {
                weights: Tensor::new(vec![2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap(),
                bias: Tensor::zeros(&[2]),
            }],
        };
        (spec, params)
    }

    #[test]
    fn identity_layer_passes_input_through() {
        let (spec, params) = identity_model();
        let x = Tensor::new(vec![1, 2], vec![1.0, 0.0]).unwrap();
        let (logits, _) = forward(&spec, &params, &x).unwrap();
        assert_eq!(logits.data(), &[1.0, 0.0]);
    }

    #[test]
    fn zero_model_gives_zero_logits() {
        let spec = ModelSpec::mlp(&[5, 4, 3]).unwrap();
        let params = ModelParams::zeros(&spec);
        let x = Tensor::new(vec![2, 5], (0..10).map(|v| v as f64).collect()).unwrap();
        let (logits, _) = forward(&spec, &params, &x).unwrap();
        assert_eq!(logits.shape(), &[2, 3]);
        assert!(logits.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn forward_rejects_wrong_width() {
        let spec = ModelSpec::mlp(&[5, 3]).unwrap();
        let params = ModelParams::zeros(&spec);
        let x = Tensor::zeros(&[2, 4]);
        assert!(matches!(forward(&spec, &params, &x), Err(Error::Config(_))));
    }

    #[test]
    fn spec_rejects_incompatible_layers() {
        let bad = ModelSpec::new(vec![
            LayerSpec::Dense { in_dim: 4, out_dim: 3 },
            LayerSpec::Dense { in_dim: 2, out_dim: 2 },
        ]);
        assert!(bad.is_err());
        assert!(ModelSpec::new(vec![LayerSpec::Dense { in_dim: 4, out_dim: 3 }, LayerSpec::Relu]).is_err());
    }

    #[test]
    fn cross_entropy_examples() {
        let uniform = Tensor::zeros(&[1, 10]);
        let (loss, probs) = cross_entropy(&uniform, &[3]).unwrap();
        assert!((loss - 10f64.ln()).abs() < 1e-12);
        assert!((probs.data().iter().sum::<f64>() - 1.0).abs() < 1e-9);

        let saturated = Tensor::new(vec![1, 2], vec![30.0, -30.0]).unwrap();
        assert!(cross_entropy(&saturated, &[0]).unwrap().0 < 1e-20);

        let logits = Tensor::new(vec![1, 2], vec![1.0, 2.0]).unwrap();
        let expected = (1.0 + 1f64.exp()).ln();
        assert!((cross_entropy(&logits, &[0]).unwrap().0 - expected).abs() < 1e-12);
        assert!((expected - 1.31326).abs() < 1e-5);
    }

    #[test]
    fn cross_entropy_rejects_bad_label() {
        let logits = Tensor::zeros(&[1, 3]);
        assert!(matches!(cross_entropy(&logits, &[3]), Err(Error::Input(_))));
    }

    #[test]
    fn softmax_handles_huge_logits() {
        let logits = Tensor::new(vec![1, 3], vec![1e308, -1e308, 0.0]).unwrap();
        let p = softmax_rows(&logits);
        assert!(p.is_finite());
        assert!((p.data().iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn argmax_ties_go_low() {
        assert_eq!(argmax(&[0.0, 0.0]), 0);
        assert_eq!(argmax(&[0.0, 1.0, 1.0]), 1);
    }

    #[test]
    fn stale_cache_is_detected() {
        let spec = ModelSpec::mlp(&[3, 2]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let params = ModelParams::init(&spec, &mut rng);
        let x = Tensor::new(vec![1, 3], vec![0.1, 0.2, 0.3]).unwrap();
        let (_, cache) = forward(&spec, &params, &x).unwrap();
        let mut moved = params.clone();
        moved.layers[0].weights.data_mut()[0] += 1.0;
        assert!(matches!(backward(&spec, &moved, &cache, &[0], 1.0), Err(Error::Internal(_))));
    }

    #[test]
    fn saturated_batch_has_tiny_gradient() {
        let (spec, mut params) = identity_model();
        params.layers[0].weights = Tensor::new(vec![2, 2], vec![40.0, 0.0, 0.0, 40.0]).unwrap();
        let x = Tensor::new(vec![2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let (_, cache) = forward(&spec, &params, &x).unwrap();
        let g = backward(&spec, &params, &cache, &[0, 1], 1.0).unwrap();
        let norm: f64 = g.values().map(|v| v * v).sum::<f64>().sqrt();
        assert!(norm < 1e-6);
    }

    #[test]
    fn gradient_is_linear_in_weight() {
        let spec = ModelSpec::mlp(&[4, 5, 3]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let params = ModelParams::init(&spec, &mut rng);
        let x = Tensor::new(vec![3, 4], (0..12).map(|v| (v as f64 * 0.37).sin()).collect()).unwrap();
        let labels = [0, 2, 1];
        let (_, cache) = forward(&spec, &params, &x).unwrap();
        let g1 = backward(&spec, &params, &cache, &labels, 1.0).unwrap();
        let g2 = backward(&spec, &params, &cache, &labels, 2.0).unwrap();
        for (a, b) in g1.values().zip(g2.values()) {
            assert!((2.0 * a - b).abs() <= 1e-15 * b.abs().max(1.0));
        }
    }

    #[test]
    fn evaluate_constant_predictor_on_balanced_data() {
        let spec = ModelSpec::mlp(&[2, 10]).unwrap();
        let params = ModelParams::zeros(&spec);
        let images = Tensor::zeros(&[20, 2]);
        let labels: Vec<usize> = (0..20).map(|i| i % 10).collect();
        let (_, acc) = evaluate(&spec, &params, &images, &labels).unwrap();
        assert!((acc - 0.1).abs() < 1e-12);
    }
}
