use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::Graph;
use crate::error::{LohaError, Result};
use crate::matrix::Matrix;

/// Parameters of a balanced stochastic block model with class-mean features.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SbmSpec {
    pub nodes: usize,
    pub classes: usize,
    pub p_in: f64,
    pub p_out: f64,
    pub feature_noise: f64,
    pub seed: u64,
}

/// Samples a graph whose homophily is dialed by `p_in` vs `p_out`.
///
/// Node `i` belongs to class `i / (n / c)`. Features are the one-hot class
/// indicator plus isotropic Gaussian noise of scale `feature_noise`.
pub fn generate_sbm(spec: &SbmSpec) -> Result<Graph> {
    let SbmSpec {
        nodes: n,
        classes: c,
        p_in,
        p_out,
        feature_noise,
        seed,
    } = *spec;
    for (name, p) in [("p_in", p_in), ("p_out", p_out)] {
        if !(0.0..=1.0).contains(&p) {
            return Err(LohaError::param(name, format!("must lie in [0, 1], got {p}")));
        }
    }
    if c == 0 || n == 0 || n % c != 0 {
        return Err(LohaError::param(
            "classes",
            format!("class count {c} must divide node count {n}"),
        ));
    }
    if !(feature_noise >= 0.0) || !feature_noise.is_finite() {
        return Err(LohaError::param("feature_noise", "must be finite and >= 0"));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let block = n / c;
    let labels: Vec<usize> = (0..n).map(|i| i / block).collect();

    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let p = if labels[i] == labels[j] { p_in } else { p_out };
            if rng.random::<f64>() < p {
                edges.push((i, j));
            }
        }
    }
    let features = Matrix::from_fn(n, c, |r, k| {
        let mean = if labels[r] == k { 1.0 } else { 0.0 };
        let z: f64 = rng.sample(StandardNormal);
        mean + feature_noise * z
    });
    Graph::from_edges(&edges, features, Some(labels)).map(|(g, _)| g)
}
