use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autodiff::{adam_step, AdamConfig, AdamState};
use crate::error::{LohaError, Result};
use crate::matrix::Matrix;

/// Disjoint train / validation / test node indices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// `repeats` random 60/20/20 splits of `0..n` drawn from one seeded stream.
pub fn make_splits(n: usize, seed: u64, repeats: usize) -> Result<Vec<Split>> {
    if n < 5 {
        return Err(LohaError::Precondition(format!(
            "splitting needs at least 5 nodes, got {n}"
        )));
    }
    let n_train = n * 6 / 10;
    let n_val = n * 2 / 10;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..repeats)
        .map(|_| {
            let mut perm: Vec<usize> = (0..n).collect();
            perm.shuffle(&mut rng);
            Split {
                train: perm[..n_train].to_vec(),
                val: perm[n_train..n_train + n_val].to_vec(),
                test: perm[n_train + n_val..].to_vec(),
            }
        })
        .collect())
}

/// Softmax-regression probe settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeConfig {
    pub epochs: usize,
    pub lr: f64,
    pub weight_decay: f64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig {
            epochs: 300,
            lr: 0.01,
            weight_decay: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    /// Test accuracy per split, in percent.
    pub accuracies: Vec<f64>,
    pub mean: f64,
    /// Population standard deviation over splits.
    pub std: f64,
}

impl ProbeReport {
    pub fn from_accuracies(accuracies: Vec<f64>) -> Self {
        let n = accuracies.len().max(1) as f64;
        let mean = accuracies.iter().sum::<f64>() / n;
        let var = accuracies.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n;
        ProbeReport {
            accuracies,
            mean,
            std: var.sqrt(),
        }
    }
}

/// Columns standardized with train-split statistics; constant columns are
/// only centered.
fn standardize(z: &Matrix, train: &[usize]) -> Matrix {
    let (n, d) = z.shape();
    let m = train.len() as f64;
    let mut out = z.clone();
    for c in 0..d {
        let mean = train.iter().map(|&i| z[(i, c)]).sum::<f64>() / m;
        let var = train.iter().map(|&i| (z[(i, c)] - mean).powi(2)).sum::<f64>() / m;
        let sd = if var.sqrt() > 1e-12 { var.sqrt() } else { 1.0 };
        for r in 0..n {
            out[(r, c)] = (z[(r, c)] - mean) / sd;
        }
    }
    out
}

fn logits(x: &Matrix, w: &Matrix, b: &Matrix) -> Matrix {
    let mut out = x.matmul(w).expect("probe shapes agree");
    for r in 0..out.rows() {
        for (o, &bv) in out.row_mut(r).iter_mut().zip(b.row(0)) {
            *o += bv;
        }
    }
    out
}

fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

fn accuracy(scores: &Matrix, labels: &[usize]) -> f64 {
    let hits = labels
        .iter()
        .enumerate()
        .filter(|&(r, &y)| argmax(scores.row(r)) == y)
        .count();
    100.0 * hits as f64 / labels.len().max(1) as f64
}

fn probe_one(z: &Matrix, labels: &[usize], classes: usize, split: &Split, cfg: &ProbeConfig) -> Result<f64> {
    let first = labels[split.train[0]];
    if split.train.iter().all(|&i| labels[i] == first) {
        return Err(LohaError::Precondition(
            "train split contains a single class; the probe is undefined".into(),
        ));
    }
    let zs = standardize(z, &split.train);
    let x_train = zs.select_rows(&split.train);
    let x_val = zs.select_rows(&split.val);
    let x_test = zs.select_rows(&split.test);
    let y_train: Vec<usize> = split.train.iter().map(|&i| labels[i]).collect();
    let y_val: Vec<usize> = split.val.iter().map(|&i| labels[i]).collect();
    let y_test: Vec<usize> = split.test.iter().map(|&i| labels[i]).collect();
    let x_train_t = x_train.transpose();

    let d = z.cols();
    let mut params = vec![Matrix::zeros(d, classes), Matrix::zeros(1, classes)];
    let hyper = AdamConfig {
        lr: cfg.lr,
        weight_decay: cfg.weight_decay,
        ..AdamConfig::default()
    };
    let mut state = AdamState::new(&params, hyper);
    let m = y_train.len() as f64;

    let mut best_val = f64::NEG_INFINITY;
    let mut best_test = 0.0;
    for _ in 0..=cfg.epochs {
        let val_acc = accuracy(&logits(&x_val, &params[0], &params[1]), &y_val);
        if val_acc > best_val {
            best_val = val_acc;
            best_test = accuracy(&logits(&x_test, &params[0], &params[1]), &y_test);
        }
        // softmax cross-entropy gradient (P − Y) / m
        let mut p = logits(&x_train, &params[0], &params[1]);
        for (r, &y) in y_train.iter().enumerate() {
            let row = p.row_mut(r);
            let mx = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut s = 0.0;
            for v in row.iter_mut() {
                *v = (*v - mx).exp();
                s += *v;
            }
            for v in row.iter_mut() {
                *v /= s * m;
            }
            row[y] -= 1.0 / m;
        }
        let gw = x_train_t.matmul(&p)?;
        let gb = Matrix::from_fn(1, classes, |_, c| (0..p.rows()).map(|r| p[(r, c)]).sum());
        adam_step(&mut params, &[gw, gb], &mut state)?;
    }
    Ok(best_test)
}

/// Trains a softmax-regression probe on frozen embeddings for each split
/// and reports test accuracy at the best-validation epoch.
pub fn linear_probe(z: &Matrix, labels: &[usize], splits: &[Split], cfg: &ProbeConfig) -> Result<ProbeReport> {
    if labels.len() != z.rows() {
        return Err(LohaError::Input(format!(
            "{} labels for {} embedding rows",
            labels.len(),
            z.rows()
        )));
    }
    if splits.is_empty() {
        return Err(LohaError::Usage("linear_probe needs at least one split".into()));
    }
    if !z.is_finite() {
        return Err(LohaError::numeric("linear_probe", "embeddings contain non-finite values"));
    }
    let classes = labels.iter().max().map_or(0, |m| m + 1);
    let accs = splits
        .par_iter()
        .map(|s| probe_one(z, labels, classes, s, cfg))
        .collect::<Result<Vec<_>>>()?;
    Ok(ProbeReport::from_accuracies(accs))
}
