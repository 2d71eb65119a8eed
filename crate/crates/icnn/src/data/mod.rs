//! Dataset ingestion (ARFF multi-label, PGM/CSV image pairs), synthetic
//! generators, splits, and evaluation metrics.

mod arff;
mod image;

pub use arff::{arff_parse, write_arff, MultiLabelDataset};
pub use image::{
    decode_pgm, encode_pgm, load_image_pairs, parse_image_csv, ImagePairDataset,
};

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("malformed image: {0}")]
    Image(String),
}

/// Dense supervised pairs: one example per row, targets inside the unit box.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub x: Array2<f64>,
    pub y: Array2<f64>,
}

impl Dataset {
    pub fn new(x: Array2<f64>, y: Array2<f64>) -> Result<Dataset, DataError> {
        if x.nrows() != y.nrows() {
            return Err(DataError::Shape(format!(
                "{} feature rows vs {} target rows",
                x.nrows(),
                y.nrows()
            )));
        }
        Ok(Dataset { x, y })
    }

    pub fn len(&self) -> usize {
        self.x.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn x_row(&self, i: usize) -> Array1<f64> {
        self.x.row(i).to_owned()
    }

    pub fn y_row(&self, i: usize) -> Array1<f64> {
        self.y.row(i).to_owned()
    }

    fn select(&self, idx: &[usize]) -> Dataset {
        let xs = Array2::from_shape_fn((idx.len(), self.x.ncols()), |(r, c)| {
            self.x[(idx[r], c)]
        });
        let ys = Array2::from_shape_fn((idx.len(), self.y.ncols()), |(r, c)| {
            self.y[(idx[r], c)]
        });
        Dataset { x: xs, y: ys }
    }
}

/// Seeded shuffle-then-partition split; `fraction` is the share of the
/// first returned part. Errors if either side would be empty.
pub fn split(data: &Dataset, fraction: f64, seed: u64) -> Result<(Dataset, Dataset), DataError> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(DataError::InvalidArgument(format!(
            "split fraction must be in (0,1), got {fraction}"
        )));
    }
    let n = data.len();
    let head = (n as f64 * fraction).round() as usize;
    if head == 0 || head == n {
        return Err(DataError::InvalidArgument(format!(
            "split of {n} rows at fraction {fraction} leaves an empty side"
        )));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    idx.shuffle(&mut rng);
    Ok((data.select(&idx[..head]), data.select(&idx[head..])))
}

/// Thresholds predicted scores into binary decisions (`>= tau` maps to 1);
/// `tau` is clamped into [0,1].
pub fn threshold(scores: &Array2<f64>, tau: f64) -> Array2<f64> {
    let tau = tau.clamp(0.0, 1.0);
    scores.mapv(|v| if v >= tau { 1.0 } else { 0.0 })
}

/// Unweighted mean over labels of per-label F1 = 2TP/(2TP+FP+FN), with
/// F1 = 0 when the denominator is 0.
pub fn macro_f1(pred: &Array2<f64>, truth: &Array2<f64>) -> Result<f64, DataError> {
    if pred.dim() != truth.dim() {
        return Err(DataError::Shape(format!(
            "pred {:?} vs truth {:?}",
            pred.dim(),
            truth.dim()
        )));
    }
    let labels = pred.ncols();
    if labels == 0 {
        return Err(DataError::Shape("no label columns".into()));
    }
    let mut total = 0.0;
    for l in 0..labels {
        let (mut tp, mut fp, mut fneg) = (0u64, 0u64, 0u64);
        for r in 0..pred.nrows() {
            let p = pred[(r, l)] != 0.0;
            let t = truth[(r, l)] != 0.0;
            match (p, t) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fneg += 1,
                (false, false) => {}
            }
        }
        let denom = 2 * tp + fp + fneg;
        if denom > 0 {
            total += 2.0 * tp as f64 / denom as f64;
        }
    }
    Ok(total / labels as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Synth2dKind {
    Circles,
    Xor,
}

/// Two-dimensional binary classification toys: concentric circles with
/// Gaussian jitter, or quadrant-parity labels.
pub fn synth_2d(kind: Synth2dKind, n: usize, seed: u64) -> Result<Dataset, DataError> {
    if n == 0 {
        return Err(DataError::InvalidArgument("need n >= 1 samples".into()));
    }
    synth_2d_noisy(kind, n, seed, 0.05)
}

pub fn synth_2d_noisy(
    kind: Synth2dKind,
    n: usize,
    seed: u64,
    noise: f64,
) -> Result<Dataset, DataError> {
    if n == 0 {
        return Err(DataError::InvalidArgument("need n >= 1 samples".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = Array2::zeros((n, 2));
    let mut y = Array2::zeros((n, 1));
    for i in 0..n {
        match kind {
            Synth2dKind::Circles => {
                let label = i % 2;
                let radius = if label == 0 { 1.0 } else { 0.5 };
                let angle = rng.gen::<f64>() * std::f64::consts::TAU;
                x[(i, 0)] = radius * angle.cos() + noise * gaussian(&mut rng);
                x[(i, 1)] = radius * angle.sin() + noise * gaussian(&mut rng);
                y[(i, 0)] = label as f64;
            }
            Synth2dKind::Xor => {
                let a = rng.gen::<f64>() * 2.0 - 1.0;
                let b = rng.gen::<f64>() * 2.0 - 1.0;
                x[(i, 0)] = a;
                x[(i, 1)] = b;
                y[(i, 0)] = if a * b > 0.0 { 1.0 } else { 0.0 };
            }
        }
    }
    Dataset::new(x, y)
}

/// Box-Muller standard normal draw.
pub(crate) fn gaussian<R: Rng>(rng: &mut R) -> f64 {
    let u1: f64 = rng.gen::<f64>().max(f64::MIN_POSITIVE);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Separable multi-label toy: Bernoulli(0.5) binary features and labels from
/// random linear score functions thresholded at their sample median, so each
/// label is roughly balanced and exactly linearly separable.
pub fn synth_multilabel(
    n: usize,
    features: usize,
    labels: usize,
    seed: u64,
) -> Result<MultiLabelDataset, DataError> {
    if n == 0 || features == 0 || labels == 0 {
        return Err(DataError::InvalidArgument(
            "need n, features, labels >= 1".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = Array2::from_shape_fn((n, features), |_| if rng.gen::<bool>() { 1.0 } else { 0.0 });
    let mut y = Array2::zeros((n, labels));
    for l in 0..labels {
        let w = Array1::from_shape_fn(features, |_| gaussian(&mut rng));
        let scores: Vec<f64> = (0..n).map(|i| x.row(i).dot(&w)).collect();
        let mut sorted = scores.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite scores"));
        let median = sorted[n / 2];
        for i in 0..n {
            if scores[i] > median {
                y[(i, l)] = 1.0;
            }
        }
    }
    let feature_names = (0..features).map(|i| format!("f{i}")).collect();
    let label_names = (0..labels).map(|i| format!("l{i}")).collect();
    Ok(MultiLabelDataset {
        x,
        y,
        feature_names,
        label_names,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::arr2;

    #[test]
    fn macro_f1_perfect_prediction() {
        let t = arr2(&[[1.0, 0.0], [0.0, 1.0]]);
        assert_eq!(macro_f1(&t, &t).unwrap(), 1.0);
    }

    #[test]
    fn macro_f1_hand_case() {
        let truth = arr2(&[[1.0, 1.0], [0.0, 1.0]]);
        let pred = arr2(&[[1.0, 0.0], [1.0, 1.0]]);
        let f1 = macro_f1(&pred, &truth).unwrap();
        assert!((f1 - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn macro_f1_degenerate_is_zero() {
        let z = Array2::zeros((3, 2));
        assert_eq!(macro_f1(&z, &z).unwrap(), 0.0);
    }

    #[test]
    fn macro_f1_rejects_shape_mismatch() {
        let a = Array2::zeros((2, 2));
        let b = Array2::zeros((2, 3));
        assert!(macro_f1(&a, &b).is_err());
    }

    #[test]
    fn macro_f1_invariant_under_joint_label_permutation() {
        let truth = arr2(&[[1.0, 0.0, 1.0], [0.0, 1.0, 1.0], [1.0, 1.0, 0.0]]);
        let pred = arr2(&[[1.0, 1.0, 0.0], [0.0, 1.0, 1.0], [0.0, 1.0, 0.0]]);
        let base = macro_f1(&pred, &truth).unwrap();
        let perm = [2usize, 0, 1];
        let permute = |m: &Array2<f64>| {
            Array2::from_shape_fn(m.dim(), |(r, c)| m[(r, perm[c])])
        };
        let shuffled = macro_f1(&permute(&pred), &permute(&truth)).unwrap();
        assert!((base - shuffled).abs() < 1e-15);
    }

    #[test]
    fn threshold_hand_cases() {
        let half = Array2::from_elem((2, 2), 0.5);
        assert_eq!(threshold(&half, 0.5), Array2::from_elem((2, 2), 1.0));
        // tau above 1 clamps back to 1, so exact ones still pass.
        let ones = Array2::from_elem((1, 2), 1.0);
        assert_eq!(threshold(&ones, 1.5), Array2::from_elem((1, 2), 1.0));
        let mixed = arr2(&[[0.2, 0.7], [0.5, 0.49]]);
        assert_eq!(threshold(&mixed, 0.5), arr2(&[[0.0, 1.0], [1.0, 0.0]]));
    }

    #[test]
    fn split_partitions_and_reproduces() {
        let x = Array2::from_shape_fn((10, 2), |(r, c)| (r * 2 + c) as f64);
        let y = Array2::from_shape_fn((10, 1), |(r, _)| r as f64 / 10.0);
        let data = Dataset::new(x, y).unwrap();
        let (a, b) = split(&data, 0.5, 7).unwrap();
        assert_eq!(a.len(), 5);
        assert_eq!(b.len(), 5);
        let (a2, b2) = split(&data, 0.5, 7).unwrap();
        assert_eq!(a, a2);
        assert_eq!(b, b2);
        // union is the original multiset of rows
        let mut rows: Vec<Vec<u64>> = Vec::new();
        for d in [&a, &b] {
            for i in 0..d.len() {
                rows.push(d.x_row(i).iter().map(|v| v.to_bits()).collect());
            }
        }
        rows.sort();
        let mut orig: Vec<Vec<u64>> = (0..10)
            .map(|i| data.x_row(i).iter().map(|v| v.to_bits()).collect())
            .collect();
        orig.sort();
        assert_eq!(rows, orig);
    }

    #[test]
    fn split_rejects_degenerate() {
        let data = Dataset::new(Array2::zeros((2, 1)), Array2::zeros((2, 1))).unwrap();
        assert!(split(&data, 0.01, 1).is_err());
        assert!(split(&data, 1.0, 1).is_err());
    }

    #[test]
    fn synth_2d_rejects_zero_and_reproduces() {
        assert!(synth_2d(Synth2dKind::Xor, 0, 1).is_err());
        let a = synth_2d(Synth2dKind::Circles, 50, 3).unwrap();
        let b = synth_2d(Synth2dKind::Circles, 50, 3).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn noiseless_circles_are_radially_separable() {
        let d = synth_2d_noisy(Synth2dKind::Circles, 200, 9, 0.0).unwrap();
        for i in 0..d.len() {
            let r = (d.x[(i, 0)].powi(2) + d.x[(i, 1)].powi(2)).sqrt();
            let label = d.y[(i, 0)];
            assert_eq!(label == 1.0, r < 0.75, "radius {r} label {label}");
        }
    }

    #[test]
    fn synth_multilabel_is_binary_and_seeded() {
        let a = synth_multilabel(40, 7, 3, 5).unwrap();
        let b = synth_multilabel(40, 7, 3, 5).unwrap();
        assert_eq!(a.x, b.x);
        assert_eq!(a.y, b.y);
        assert!(a.x.iter().all(|&v| v == 0.0 || v == 1.0));
        assert!(a.y.iter().all(|&v| v == 0.0 || v == 1.0));
    }
}
