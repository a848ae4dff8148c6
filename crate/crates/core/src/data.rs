//! Datasets, IDX loading, synthetic blobs and Dirichlet label-skew
//! partitioning.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

const IDX_IMAGES_MAGIC: u32 = 2051;
const IDX_LABELS_MAGIC: u32 = 2049;

/// A labelled classification set. `images` is `N × features` in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub images: Tensor,
    pub labels: Vec<usize>,
    pub classes: usize,
}

impl Dataset {
    pub fn new(images: Tensor, labels: Vec<usize>, classes: usize) -> Result<Self> {
        if images.shape().len() != 2 {
            return Err(Error::Input("dataset images must be N × features".into()));
        }
        if images.rows() != labels.len() {
            return Err(Error::Input(format!(
                "{} images but {} labels",
                images.rows(),
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
            return Err(Error::Input(format!("label {bad} >= class count {classes}")));
        }
        Ok(Self { images, labels, classes })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    /// Widens the class count, e.g. when a split lacks the top label.
    pub fn with_classes(mut self, classes: usize) -> Result<Self> {
        if self.labels.iter().any(|&l| l >= classes) {
            return Err(Error::Input(format!("dataset has labels >= {classes}")));
        }
        self.classes = classes;
        Ok(self)
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.images.row_len()
    }

    /// Copies the rows at `indices` into a batch tensor plus labels.
    pub fn gather(&self, indices: &[usize]) -> Result<(Tensor, Vec<usize>)> {
        let w = self.feature_dim();
        let mut data = Vec::with_capacity(indices.len() * w);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            if i >= self.len() {
                return Err(Error::Internal(format!("sample index {i} out of range")));
            }
            data.extend_from_slice(self.images.row(i));
            labels.push(self.labels[i]);
        }
        Ok((Tensor::new(vec![indices.len(), w], data)?, labels))
    }

    pub fn subset(&self, indices: &[usize]) -> Result<Dataset> {
        let (images, labels) = self.gather(indices)?;
        Dataset::new(images, labels, self.classes)
    }

    /// The first `n` samples (or all of them).
    pub fn head(&self, n: usize) -> Dataset {
        let idx: Vec<usize> = (0..n.min(self.len())).collect();
        self.subset(&idx).expect("indices in range")
    }
}

fn read_u32(bytes: &[u8], offset: usize, path: &Path) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::Format {
            path: path.to_path_buf(),
            offset: offset as u64,
            message: "file ends inside the header".into(),
        })
}

/// Parses an IDX image file (magic 2051), returning `(count, features, pixels)`.
pub fn parse_idx_images(bytes: &[u8], path: &Path) -> Result<(usize, usize, Vec<f64>)> {
    let magic = read_u32(bytes, 0, path)?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(Error::Format {
            path: path.to_path_buf(),
            offset: 0,
            message: format!("expected image magic {IDX_IMAGES_MAGIC}, found {magic}"),
        });
    }
    let n = read_u32(bytes, 4, path)? as usize;
    let rows = read_u32(bytes, 8, path)? as usize;
    let cols = read_u32(bytes, 12, path)? as usize;
    let features = rows * cols;
    let body = &bytes[16..];
    let needed = n * features;
    if body.len() < needed {
        return Err(Error::Format {
            path: path.to_path_buf(),
            offset: (16 + body.len()) as u64,
            message: format!("truncated: header declares {needed} pixel bytes, found {}", body.len()),
        });
    }
    let pixels = body[..needed].iter().map(|&b| b as f64 / 255.0).collect();
    Ok((n, features, pixels))
}

/// Parses an IDX label file (magic 2049).
pub fn parse_idx_labels(bytes: &[u8], path: &Path) -> Result<Vec<usize>> {
    let magic = read_u32(bytes, 0, path)?;
    if magic != IDX_LABELS_MAGIC {
        return Err(Error::Format {
            path: path.to_path_buf(),
            offset: 0,
            message: format!("expected label magic {IDX_LABELS_MAGIC}, found {magic}"),
        });
    }
    let n = read_u32(bytes, 4, path)? as usize;
    let body = &bytes[8..];
    if body.len() < n {
        return Err(Error::Format {
            path: path.to_path_buf(),
            offset: (8 + body.len()) as u64,
            message: format!("truncated: header declares {n} labels, found {}", body.len()),
        });
    }
    Ok(body[..n].iter().map(|&b| b as usize).collect())
}

/// Loads a big-endian IDX image/label pair. Pixel bytes are scaled by 1/255.
pub fn load_idx(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<Dataset> {
    let ip = images_path.as_ref();
    let lp = labels_path.as_ref();
    let ibytes = std::fs::read(ip).map_err(|e| Error::io(ip, e))?;
    let lbytes = std::fs::read(lp).map_err(|e| Error::io(lp, e))?;
    let (n, features, pixels) = parse_idx_images(&ibytes, ip)?;
    let labels = parse_idx_labels(&lbytes, lp)?;
    if labels.len() != n {
        return Err(Error::Format {
            path: lp.to_path_buf(),
            offset: 4,
            message: format!("{} labels for {} images in {}", labels.len(), n, ip.display()),
        });
    }
    let classes = labels.iter().max().map(|m| m + 1).unwrap_or(1);
    Dataset::new(Tensor::new(vec![n, features], pixels)?, labels, classes)
}

/// Gaussian blobs, one mean per class, separated by 6σ, min-max scaled
/// into `[0, 1]`. Samples are interleaved by class.
pub fn synthesize_dataset(classes: usize, per_class: usize, feature_dim: usize, seed: u64) -> Result<Dataset> {
    if classes == 0 || per_class == 0 || feature_dim == 0 {
        return Err(Error::Input("synthetic dataset sizes must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let means = class_means(classes, feature_dim, &mut rng);
    let n = classes * per_class;
    let mut raw = Vec::with_capacity(n * feature_dim);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..per_class {
        for (c, mean) in means.iter().enumerate() {
            for &m in mean {
                let z: f64 = StandardNormal.sample(&mut rng);
                raw.push(m + z);
            }
            labels.push(c);
        }
    }
    let lo = raw.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = (hi - lo).max(f64::MIN_POSITIVE);
    let images = raw.into_iter().map(|v| (v - lo) / span).collect();
    Dataset::new(Tensor::new(vec![n, feature_dim], images)?, labels, classes)
}

/// Class means at pairwise distance ≥ 6 (in units of the noise σ).
fn class_means(classes: usize, dim: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    const SEPARATION: f64 = 6.0;
    if classes <= dim {
        // scaled one-hot corners: pairwise distance exactly SEPARATION
        let r = SEPARATION / std::f64::consts::SQRT_2;
        return (0..classes)
            .map(|c| (0..dim).map(|d| if d == c { r } else { 0.0 }).collect())
            .collect();
    }
    // rejection-sample random points until every pair is far enough apart
    let mut radius = SEPARATION * (classes as f64).sqrt();
    loop {
        let mut means: Vec<Vec<f64>> = Vec::new();
        for _ in 0..1000 {
            let cand: Vec<f64> = (0..dim).map(|_| rng.random_range(-radius..radius)).collect();
            let ok = means.iter().all(|m| {
                m.iter().zip(&cand).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt() >= SEPARATION
            });
            if ok {
                means.push(cand);
                if means.len() == classes {
                    return means;
                }
            }
        }
        radius *= 1.5;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DirichletConfig {
    pub alpha: f64,
    pub num_clients: usize,
    pub seed: u64,
}

/// One client's fixed slice of the training set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientShard {
    pub client_id: usize,
    pub indices: Vec<usize>,
    pub label_histogram: Vec<usize>,
}

impl ClientShard {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// Per-class label counts of a shard.
pub fn label_histogram(indices: &[usize], dataset: &Dataset) -> Result<Vec<usize>> {
    let mut hist = vec![0usize; dataset.classes];
    for &i in indices {
        let label = dataset
            .labels
            .get(i)
            .ok_or_else(|| Error::Internal(format!("shard index {i} out of range")))?;
        hist[*label] += 1;
    }
    Ok(hist)
}

/// Draws `Dirichlet(alpha · 1_k)` through log-space gamma variates, which
/// stays well defined for tiny `alpha` where plain gamma draws underflow.
pub fn sample_dirichlet<R: Rng + ?Sized>(alpha: f64, k: usize, rng: &mut R) -> Vec<f64> {
    // Gamma(a) = Gamma(a + 1) · U^(1/a)
    let gamma = Gamma::new(alpha + 1.0, 1.0).expect("alpha > 0");
    let logs: Vec<f64> = (0..k)
        .map(|_| {
            let g: f64 = gamma.sample(rng);
            let u: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
            g.ln() + u.ln() / alpha
        })
        .collect();
    let m = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = logs.iter().map(|l| (l - m).exp()).collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|v| v / s).collect()
}

/// Splits each class's samples across clients in Dirichlet proportions.
///
/// Rounding leftovers go to the clients with the largest fractional
/// shares. A client left with no samples then takes one from the largest
/// shard.
pub fn dirichlet_partition(dataset: &Dataset, config: &DirichletConfig) -> Result<Vec<ClientShard>> {
    let k = config.num_clients;
    if !(config.alpha > 0.0) || !config.alpha.is_finite() {
        return Err(Error::Input("alpha must be > 0".into()));
    }
    if k == 0 {
        return Err(Error::Input("num_clients must be >= 1".into()));
    }
    if dataset.is_empty() {
        return Err(Error::Input("cannot partition an empty dataset".into()));
    }
    if k > dataset.len() {
        return Err(Error::Input(format!(
            "{} clients exceed dataset size {}",
            k,
            dataset.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut assigned: Vec<Vec<usize>> = vec![Vec::new(); k];
    for class in 0..dataset.classes {
        let mut members: Vec<usize> = (0..dataset.len()).filter(|&i| dataset.labels[i] == class).collect();
        if members.is_empty() {
            continue;
        }
        members.shuffle(&mut rng);
        let props = sample_dirichlet(config.alpha, k, &mut rng);
        let counts = apportion(&props, members.len());
        let mut start = 0;
        for (client, &c) in counts.iter().enumerate() {
            assigned[client].extend_from_slice(&members[start..start + c]);
            start += c;
        }
    }
    repair_empty(&mut assigned);
    assigned
        .into_iter()
        .enumerate()
        .map(|(client_id, indices)| {
            let label_histogram = label_histogram(&indices, dataset)?;
            Ok(ClientShard {
                client_id,
                indices,
                label_histogram,
            })
        })
        .collect()
}

/// Largest-remainder apportionment of `total` items by `props`.
fn apportion(props: &[f64], total: usize) -> Vec<usize> {
    let exact: Vec<f64> = props.iter().map(|p| p * total as f64).collect();
    let mut counts: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..props.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = exact[a] - exact[a].floor();
        let fb = exact[b] - exact[b].floor();
        fb.partial_cmp(&fa).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b))
    });
    for &i in order.iter().take(total.saturating_sub(assigned)) {
        counts[i] += 1;
    }
    counts
}

fn repair_empty(assigned: &mut [Vec<usize>]) {
    while let Some(empty) = assigned.iter().position(|s| s.is_empty()) {
        let largest = (0..assigned.len())
            .max_by(|&a, &b| assigned[a].len().cmp(&assigned[b].len()).then(b.cmp(&a)))
            .expect("nonempty");
        let moved = assigned[largest].pop().expect("largest shard has samples");
        assigned[empty].push(moved);
    }
}

/// Label entropy of a histogram divided by `ln(classes)`.
pub fn normalized_entropy(hist: &[usize]) -> f64 {
    let total: usize = hist.iter().sum();
    if total == 0 || hist.len() < 2 {
        return 0.0;
    }
    let h: f64 = hist
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / total as f64;
            -p * p.ln()
        })
        .sum();
    h / (hist.len() as f64).ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn idx_images(n: u32, rows: u32, cols: u32, pixels: &[u8]) -> Vec<u8> {
        let mut b = Vec::new();
        for v in [2051u32, n, rows, cols] {
            b.extend_from_slice(&v.to_be_bytes());
        }
        b.extend_from_slice(pixels);
        b
    }

    fn idx_labels(n: u32, labels: &[u8]) -> Vec<u8> {
        let mut b = Vec::new();
        b.extend_from_slice(&2049u32.to_be_bytes());
        b.extend_from_slice(&n.to_be_bytes());
        b.extend_from_slice(labels);
        b
    }

    #[test]
    fn parses_valid_idx() {
        let p = Path::new("mem");
        let (n, f, px) = parse_idx_images(&idx_images(2, 1, 2, &[0, 255, 51, 0]), p).unwrap();
        assert_eq!((n, f), (2, 2));
        assert_eq!(px[1], 1.0);
        assert!((px[2] - 0.2).abs() < 1e-15);
        assert_eq!(parse_idx_labels(&idx_labels(2, &[3, 1]), p).unwrap(), vec![3, 1]);
    }

    #[test]
    fn swapped_magic_is_rejected() {
        let p = Path::new("mem");
        let err = parse_idx_labels(&idx_images(1, 1, 1, &[0]), p).unwrap_err();
        assert!(matches!(err, Error::Format { offset: 0, .. }));
        assert!(parse_idx_images(&idx_labels(1, &[0]), p).is_err());
    }

    #[test]
    fn truncated_labels_report_offset() {
        let p = Path::new("mem");
        let err = parse_idx_labels(&idx_labels(10, &[0; 9]), p).unwrap_err();
        match err {
            Error::Format { offset, .. } => assert_eq!(offset, 17),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn load_idx_checks_count_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let ip = dir.path().join("img");
        let lp = dir.path().join("lbl");
        std::fs::write(&ip, idx_images(2, 1, 1, &[0, 255])).unwrap();
        std::fs::write(&lp, idx_labels(3, &[0, 1, 2])).unwrap();
        assert!(matches!(load_idx(&ip, &lp), Err(Error::Format { .. })));
        std::fs::write(&lp, idx_labels(2, &[0, 1])).unwrap();
        let ds = load_idx(&ip, &lp).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.images.data(), &[0.0, 1.0]);
    }

    #[test]
    fn synthetic_is_deterministic() {
        let a = synthesize_dataset(2, 50, 4, 7).unwrap();
        let b = synthesize_dataset(2, 50, 4, 7).unwrap();
        assert_eq!(a, b);
        assert_eq!(synthesize_dataset(3, 1, 2, 0).unwrap().len(), 3);
        assert!(a.images.data().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn single_client_gets_everything() {
        let ds = synthesize_dataset(4, 10, 3, 1).unwrap();
        let shards = dirichlet_partition(&ds, &DirichletConfig { alpha: 0.5, num_clients: 1, seed: 3 }).unwrap();
        let mut idx = shards[0].indices.clone();
        idx.sort();
        assert_eq!(idx, (0..40).collect::<Vec<_>>());
    }

    #[test]
    fn too_many_clients_rejected() {
        let ds = synthesize_dataset(2, 2, 2, 1).unwrap();
        let cfg = DirichletConfig { alpha: 1.0, num_clients: 5, seed: 0 };
        assert!(dirichlet_partition(&ds, &cfg).is_err());
    }

    #[test]
    fn histogram_cases() {
        let ds = synthesize_dataset(3, 4, 2, 1).unwrap();
        assert_eq!(label_histogram(&[], &ds).unwrap(), vec![0, 0, 0]);
        let all: Vec<usize> = (0..ds.len()).collect();
        assert_eq!(label_histogram(&all, &ds).unwrap(), vec![4, 4, 4]);
        let zeros: Vec<usize> = all.iter().copied().filter(|&i| ds.labels[i] == 0).collect();
        assert_eq!(label_histogram(&zeros, &ds).unwrap(), vec![4, 0, 0]);
        assert!(matches!(label_histogram(&[99], &ds), Err(Error::Internal(_))));
    }

    #[test]
    fn dirichlet_draws_are_simplex_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for alpha in [0.001, 0.01, 1.0, 100.0] {
            let p = sample_dirichlet(alpha, 10, &mut rng);
            assert!(p.iter().all(|v| *v >= 0.0 && v.is_finite()));
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn apportion_is_exact() {
        assert_eq!(apportion(&[0.5, 0.25, 0.25], 7).iter().sum::<usize>(), 7);
        assert_eq!(apportion(&[1.0, 0.0], 3), vec![3, 0]);
    }
}
