//! Synthetic datasets for tests, demos and timing.

use std::fmt::Write as _;
use std::path::Path;

use asss_core::dataio::Dataset;
use asss_core::{fmt_f64, seed, Result};
use ndarray::Array2;
use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, Normal};

/// Two classes, each a mixture of `components_per_class` isotropic unit
/// Gaussians in `dim` dimensions with centres drawn uniformly from
/// `[-spread, spread]^dim`. Classes alternate across rows.
pub fn gaussian_mixture(
    rows: usize,
    dim: usize,
    components_per_class: usize,
    spread: f64,
    seed_value: u64,
) -> Result<Dataset> {
    let mut rng = seed::rng(seed_value);
    let centres: Vec<Vec<Vec<f64>>> = (0..2)
        .map(|_| {
            (0..components_per_class.max(1))
                .map(|_| {
                    (0..dim)
                        .map(|_| rng.random_range(-spread..=spread))
                        .collect()
                })
                .collect()
        })
        .collect();
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut x = Array2::zeros((rows, dim));
    let mut labels = Vec::with_capacity(rows);
    for i in 0..rows {
        let class = i % 2;
        let c = &centres[class][rng.random_range(0..centres[class].len())];
        for j in 0..dim {
            x[[i, j]] = c[j] + normal.sample(&mut rng);
        }
        labels.push(class);
    }
    Dataset::new(
        x,
        labels,
        vec!["0".into(), "1".into()],
        (0..dim).map(|j| format!("x{j}")).collect(),
        "gaussian-mixture",
    )
}

/// Flips exactly `round(rate·n)` uniformly chosen labels to a different class.
/// Returns the noisy labels and the flipped mask.
pub fn flip_labels(
    labels: &[usize],
    class_count: usize,
    rate: f64,
    seed_value: u64,
) -> (Vec<usize>, Vec<bool>) {
    let mut rng = seed::rng(seed_value);
    let n = labels.len();
    let count = ((rate * n as f64).round() as usize).min(n);
    let mut noisy = labels.to_vec();
    let mut flipped = vec![false; n];
    if class_count < 2 {
        return (noisy, flipped);
    }
    for i in index::sample(&mut rng, n, count) {
        let shift = rng.random_range(1..class_count);
        noisy[i] = (labels[i] + shift) % class_count;
        flipped[i] = true;
    }
    (noisy, flipped)
}

/// Class sizes of a 58000-row, 7-class table with a dominant class and two
/// very rare ones.
pub const SHUTTLE_LIKE_COUNTS: [usize; 7] = [45_586, 50, 171, 8_903, 3_267, 10, 13];

/// A 9-feature, 7-class table with the row count and class imbalance above,
/// built from per-class Gaussian blobs on an integer grid (so many rows repeat).
pub fn shuttle_like(seed_value: u64) -> Result<Dataset> {
    let mut rng = seed::rng(seed_value);
    let dim = 9;
    let n: usize = SHUTTLE_LIKE_COUNTS.iter().sum();
    let mut x = Array2::zeros((n, dim));
    let mut labels = Vec::with_capacity(n);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut row = 0;
    for (class, &count) in SHUTTLE_LIKE_COUNTS.iter().enumerate() {
        let centre: Vec<f64> = (0..dim).map(|_| rng.random_range(-60.0..60.0)).collect();
        let scale: Vec<f64> = (0..dim).map(|_| rng.random_range(2.0..12.0)).collect();
        for _ in 0..count {
            for j in 0..dim {
                x[[row, j]] = (centre[j] + scale[j] * normal.sample(&mut rng)).round();
            }
            labels.push(class);
            row += 1;
        }
    }
    Dataset::new(
        x,
        labels,
        (1..=7).map(|c| c.to_string()).collect(),
        (1..=dim).map(|j| format!("a{j}")).collect(),
        "shuttle-like",
    )
}

/// Writes a dataset as CSV with a trailing `class` column of class names.
pub fn write_csv(dataset: &Dataset, path: &Path) -> std::io::Result<()> {
    let mut out = String::new();
    for name in &dataset.feature_names {
        out.push_str(name);
        out.push(',');
    }
    out.push_str("class\n");
    for (row, &y) in dataset.features.rows().into_iter().zip(&dataset.labels) {
        for v in row {
            out.push_str(&fmt_f64(*v));
            out.push(',');
        }
        let _ = writeln!(out, "{}", dataset.class_names[y]);
    }
    std::fs::write(path, out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mixture_shape_and_balance() {
        let ds = gaussian_mixture(101, 3, 2, 3.0, 1).unwrap();
        assert_eq!(ds.features.dim(), (101, 3));
        assert_eq!(ds.class_counts(), vec![51, 50]);
        assert_eq!(ds, gaussian_mixture(101, 3, 2, 3.0, 1).unwrap());
    }

    #[test]
    fn flips_exact_count() {
        let labels: Vec<usize> = (0..200).map(|i| i % 3).collect();
        let (noisy, mask) = flip_labels(&labels, 3, 0.15, 4);
        assert_eq!(mask.iter().filter(|&&m| m).count(), 30);
        for i in 0..200 {
            assert_eq!(noisy[i] != labels[i], mask[i]);
        }
    }

    #[test]
    fn shuttle_like_counts() {
        let ds = shuttle_like(0).unwrap();
        assert_eq!(ds.len(), 58_000);
        assert_eq!(ds.class_counts(), SHUTTLE_LIKE_COUNTS.to_vec());
    }
}
