//! Dataset loading, synthesis and Dirichlet partition statistics.

mod common;

use std::path::Path;

use common::{balanced, entropy_stats, Z99};
use feddual::data::{
    dirichlet_partition, label_histogram, load_idx, normalized_entropy, parse_idx_images, parse_idx_labels,
    synthesize_dataset, Dataset, DirichletConfig,
};
use feddual::tensor::Tensor;
use feddual::Error;
use proptest::prelude::*;

fn labelled(labels: Vec<usize>, classes: usize) -> Dataset {
    let n = labels.len();
    Dataset::new(Tensor::zeros(&[n, 1]), labels, classes).unwrap()
}

fn check_exact(ds: &Dataset, cfg: &DirichletConfig) {
    common::partition_exact(ds, cfg).unwrap();
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn partition_is_exact(
        log_alpha in -3.0f64..3.0,
        k in 1usize..40,
        seed in any::<u64>(),
        labels in prop::collection::vec(0usize..8, 40..400),
    ) {
        let ds = labelled(labels, 8);
        let cfg = DirichletConfig { alpha: 10f64.powf(log_alpha), num_clients: k, seed };
        check_exact(&ds, &cfg);
    }
}

#[test]
fn partition_is_seeded() {
    let ds = balanced(10, 30);
    let cfg = DirichletConfig { alpha: 0.3, num_clients: 7, seed: 5 };
    assert_eq!(dirichlet_partition(&ds, &cfg).unwrap(), dirichlet_partition(&ds, &cfg).unwrap());
    let other = DirichletConfig { seed: 6, ..cfg };
    assert_ne!(dirichlet_partition(&ds, &cfg).unwrap(), dirichlet_partition(&ds, &other).unwrap());
}

#[test]
fn single_client_gets_everything() {
    let ds = balanced(4, 25);
    for alpha in [0.01, 1.0, 100.0] {
        let shards = dirichlet_partition(&ds, &DirichletConfig { alpha, num_clients: 1, seed: 3 }).unwrap();
        let mut idx = shards[0].indices.clone();
        idx.sort_unstable();
        assert_eq!(idx, (0..100).collect::<Vec<_>>());
    }
}

#[test]
fn partition_rejects_bad_configs() {
    let ds = balanced(2, 3);
    assert!(dirichlet_partition(&ds, &DirichletConfig { alpha: 1.0, num_clients: 7, seed: 0 }).is_err());
    assert!(dirichlet_partition(&ds, &DirichletConfig { alpha: 0.0, num_clients: 2, seed: 0 }).is_err());
}

#[test]
fn severe_skew_has_low_entropy() {
    let (m, se) = entropy_stats(0.01, 200);
    assert!(m + Z99 * se < 0.35, "mean {m} se {se}");
}

#[test]
fn mild_skew_has_high_entropy() {
    let (m, se) = entropy_stats(100.0, 200);
    assert!(m - Z99 * se > 0.9, "mean {m} se {se}");
}

#[test]
fn entropy_grows_with_alpha() {
    let means: Vec<f64> = [0.01, 0.1, 1.0, 100.0].iter().map(|&a| entropy_stats(a, 100).0).collect();
    assert!(means.windows(2).all(|w| w[0] <= w[1]), "{means:?}");
}

#[test]
fn histogram_examples() {
    let ds = balanced(3, 4);
    assert_eq!(label_histogram(&[], &ds).unwrap(), vec![0, 0, 0]);
    let all: Vec<usize> = (0..12).collect();
    assert_eq!(label_histogram(&all, &ds).unwrap(), vec![4, 4, 4]);
    assert_eq!(label_histogram(&[0, 3, 6], &ds).unwrap(), vec![3, 0, 0]);
    assert!(matches!(label_histogram(&[12], &ds), Err(Error::Internal(_))));
    assert_eq!(normalized_entropy(&[5, 0, 0]), 0.0);
    assert!((normalized_entropy(&[2, 2, 2]) - 1.0).abs() < 1e-12);
}

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
    for v in [2049u32, n] {
        b.extend_from_slice(&v.to_be_bytes());
    }
    b.extend_from_slice(labels);
    b
}

#[test]
fn idx_parsing() {
    let p = Path::new("mem");
    let (n, f, px) = parse_idx_images(&idx_images(2, 1, 2, &[0, 255, 51, 102]), p).unwrap();
    assert_eq!((n, f), (2, 2));
    assert_eq!(px, vec![0.0, 1.0, 0.2, 0.4]);
    assert_eq!(parse_idx_labels(&idx_labels(3, &[1, 0, 9]), p).unwrap(), vec![1, 0, 9]);
    // label magic in an image file
    assert!(parse_idx_images(&idx_labels(1, &[0]), p).is_err());
    match parse_idx_labels(&idx_labels(10, &[0; 9]), p) {
        Err(Error::Format { offset, .. }) => assert_eq!(offset, 17),
        other => panic!("expected truncation, got {other:?}"),
    }
    assert!(parse_idx_images(&idx_images(2, 2, 2, &[0; 7]), p).is_err());
}

#[test]
fn idx_files_roundtrip_and_count_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    let img = dir.path().join("img");
    let lbl = dir.path().join("lbl");
    std::fs::write(&img, idx_images(3, 2, 2, &[255; 12])).unwrap();
    std::fs::write(&lbl, idx_labels(3, &[0, 2, 1])).unwrap();
    let ds = load_idx(&img, &lbl).unwrap();
    assert_eq!(ds.len(), 3);
    assert_eq!(ds.classes, 3);
    assert!(ds.images.data().iter().all(|&v| v == 1.0));
    std::fs::write(&lbl, idx_labels(2, &[0, 2])).unwrap();
    assert!(matches!(load_idx(&img, &lbl), Err(Error::Format { .. })));
}

#[test]
fn bundled_subset_parses() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/fmnist-subset");
    let train = load_idx(root.join("train-images-idx3-ubyte"), root.join("train-labels-idx1-ubyte")).unwrap();
    let test = load_idx(root.join("t10k-images-idx3-ubyte"), root.join("t10k-labels-idx1-ubyte")).unwrap();
    assert_eq!((train.len(), train.feature_dim(), train.classes), (8000, 784, 10));
    assert_eq!(test.len(), 2000);
    let hist = label_histogram(&(0..test.len()).collect::<Vec<_>>(), &test).unwrap();
    assert!(hist.iter().all(|&c| c == 200));
}

#[test]
fn synthetic_examples() {
    let a = synthesize_dataset(2, 50, 4, 7).unwrap();
    assert_eq!(a, synthesize_dataset(2, 50, 4, 7).unwrap());
    assert_eq!(synthesize_dataset(5, 1, 3, 1).unwrap().len(), 5);
    assert!(a.images.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
}

/// Multinomial logistic regression trained by full-batch gradient descent,
/// written out here independently of the library's network code.
fn probe_accuracy(ds: &Dataset) -> f64 {
    let (n, d, c) = (ds.len(), ds.feature_dim(), ds.classes);
    let x = ds.images.data();
    let mut w = vec![0.0; c * (d + 1)];
    let logits = |w: &[f64], i: usize| -> Vec<f64> {
        (0..c)
            .map(|k| {
                let row = &w[k * (d + 1)..(k + 1) * (d + 1)];
                row[d] + (0..d).map(|f| row[f] * x[i * d + f]).sum::<f64>()
            })
            .collect()
    };
    for _ in 0..300 {
        let mut grad = vec![0.0; w.len()];
        for i in 0..n {
            let z = logits(&w, i);
            let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
            let s: f64 = e.iter().sum();
            for k in 0..c {
                let g = e[k] / s - if ds.labels[i] == k { 1.0 } else { 0.0 };
                for f in 0..d {
                    grad[k * (d + 1) + f] += g * x[i * d + f];
                }
                grad[k * (d + 1) + d] += g;
            }
        }
        for (wi, gi) in w.iter_mut().zip(&grad) {
            *wi -= 2.0 * gi / n as f64;
        }
    }
    let correct = (0..n)
        .filter(|&i| {
            let z = logits(&w, i);
            let best = (0..c).fold(0, |b, k| if z[k] > z[b] { k } else { b });
            best == ds.labels[i]
        })
        .count();
    correct as f64 / n as f64
}

#[test]
fn synthetic_blobs_are_linearly_separable() {
    for (classes, dim) in [(2, 4), (10, 20), (6, 3)] {
        let ds = synthesize_dataset(classes, 60, dim, 7).unwrap();
        let acc = probe_accuracy(&ds);
        assert!(acc >= 0.95, "{classes} classes in {dim} dims: {acc}");
    }
}
