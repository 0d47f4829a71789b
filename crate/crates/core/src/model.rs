//! Two-view encoder and the separation / reunion losses.

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::error::{LohaError, Result};
use crate::graph::{Graph, SparseOperator};
use crate::matrix::Matrix;
use crate::signals::{composite_from_basis, trend_difference, Composition, TrendVariant};
use crate::spectral::{
    band_init, build_gamma, build_gamma_band, chebyshev_basis_values, BandMode, FilterMode,
    FilterParams, FilterVars, Orientation, SpectralFilter, View,
};

/// Which γ parameterization the two views use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterKind {
    /// Sliding cosine low-pass and high-pass views.
    #[default]
    Sliding,
    /// Band-stop view in place of low-pass, band-pass in place of high-pass.
    Band,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub order: usize,
    pub hidden: usize,
    /// Hidden ReLU layers in the shared perceptron.
    pub mlp_layers: usize,
    pub orientation: Orientation,
    pub filter_kind: FilterKind,
    pub trend_variant: TrendVariant,
    /// Learn δ; when false δ stays at 0.
    pub sliding: bool,
    /// Learn α, β; when false both stay at 0.5.
    pub learn_combination: bool,
    /// Cut gradients from the composite feature into the filter parameters.
    pub stop_composite_grad: bool,
    pub lambda_max: f64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            order: 10,
            hidden: 512,
            mlp_layers: 1,
            orientation: Orientation::Corrected,
            filter_kind: FilterKind::Sliding,
            trend_variant: TrendVariant::Full,
            sliding: true,
            learn_combination: true,
            stop_composite_grad: false,
            lambda_max: 2.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum FilterSlots {
    Sliding { beta_a: usize, beta_b: usize, delta: usize },
    Band(usize),
}

/// Encoder parameters: two filters, a shared perceptron, the view
/// combination weights and (for squeezed trends) a projection.
#[derive(Debug, Clone)]
pub struct Encoder {
    pub config: EncoderConfig,
    params: Vec<Matrix>,
    names: Vec<String>,
    learnable: Vec<bool>,
    low: FilterSlots,
    high: FilterSlots,
    mlp: Vec<(usize, usize)>,
    alpha: usize,
    beta: usize,
    projection: Option<(usize, usize)>,
}

fn glorot(rng: &mut impl Rng, fan_in: usize, fan_out: usize) -> Matrix {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    Matrix::from_fn(fan_in, fan_out, |_, _| rng.random_range(-limit..limit))
}

impl Encoder {
    /// Fresh encoder for `in_dim` input features and a trend field of
    /// `trend_dim` columns.
    pub fn new(
        config: EncoderConfig,
        in_dim: usize,
        trend_dim: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if config.order == 0 {
            return Err(LohaError::param("K", "polynomial order must be >= 1"));
        }
        if config.hidden == 0 {
            return Err(LohaError::param("hidden", "must be >= 1"));
        }
        let mut enc = Encoder {
            config,
            params: Vec::new(),
            names: Vec::new(),
            learnable: Vec::new(),
            low: FilterSlots::Band(0),
            high: FilterSlots::Band(0),
            mlp: Vec::new(),
            alpha: 0,
            beta: 0,
            projection: None,
        };
        let order = enc.config.order;
        for view in [View::Low, View::High] {
            let tag = match view {
                View::Low => "low",
                View::High => "high",
            };
            let slots = match enc.config.filter_kind {
                FilterKind::Sliding => {
                    let p = FilterParams::init(view);
                    let sliding = enc.config.sliding;
                    FilterSlots::Sliding {
                        beta_a: enc.push(format!("{tag}.beta_a"), Matrix::scalar(p.beta_a), true),
                        beta_b: enc.push(format!("{tag}.beta_b"), Matrix::scalar(p.beta_b), true),
                        delta: enc.push(format!("{tag}.delta"), Matrix::scalar(p.delta), sliding),
                    }
                }
                FilterKind::Band => {
                    let mode = match view {
                        View::Low => BandMode::BandStop,
                        View::High => BandMode::BandPass,
                    };
                    FilterSlots::Band(enc.push(format!("{tag}.band"), band_init(mode, order)?, true))
                }
            };
            match view {
                View::Low => enc.low = slots,
                View::High => enc.high = slots,
            }
        }
        let hidden = enc.config.hidden;
        let mut width = in_dim;
        for layer in 0..=enc.config.mlp_layers {
            let w = enc.push(format!("mlp.{layer}.weight"), glorot(rng, width, hidden), true);
            let b = enc.push(format!("mlp.{layer}.bias"), Matrix::zeros(1, hidden), true);
            enc.mlp.push((w, b));
            width = hidden;
        }
        let learn = enc.config.learn_combination;
        enc.alpha = enc.push("alpha".into(), Matrix::scalar(0.5), learn);
        enc.beta = enc.push("beta".into(), Matrix::scalar(0.5), learn);
        if enc.config.trend_variant != TrendVariant::Full {
            let w = enc.push("projection.weight".into(), glorot(rng, trend_dim, hidden), true);
            let b = enc.push("projection.bias".into(), Matrix::zeros(1, hidden), true);
            enc.projection = Some((w, b));
        }
        Ok(enc)
    }

    fn push(&mut self, name: String, value: Matrix, learnable: bool) -> usize {
        self.params.push(value);
        self.names.push(name);
        self.learnable.push(learnable);
        self.params.len() - 1
    }

    pub fn params(&self) -> &[Matrix] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Matrix] {
        &mut self.params
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn is_learnable(&self, idx: usize) -> bool {
        self.learnable[idx]
    }

    pub fn param_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Records every parameter on `tape`; frozen ones become constants.
    pub fn bind(&self, tape: &mut Tape) -> Vec<Var> {
        self.params
            .iter()
            .zip(&self.learnable)
            .map(|(p, &l)| tape.leaf(p.clone(), l))
            .collect()
    }

    fn filter(&self, tape: &mut Tape, vars: &[Var], view: View) -> Result<SpectralFilter> {
        let slots = match view {
            View::Low => self.low,
            View::High => self.high,
        };
        match slots {
            FilterSlots::Sliding { beta_a, beta_b, delta } => {
                let fv = FilterVars {
                    beta_a: vars[beta_a],
                    beta_b: vars[beta_b],
                    delta: vars[delta],
                };
                let gamma = build_gamma(tape, &fv, view, self.config.orientation, self.config.order)?;
                let mode = match view {
                    View::Low => FilterMode::Low,
                    View::High => FilterMode::High,
                };
                SpectralFilter::from_gamma(tape, gamma, mode)
            }
            FilterSlots::Band(idx) => {
                let (band, mode) = match view {
                    View::Low => (BandMode::BandStop, FilterMode::BandStop),
                    View::High => (BandMode::BandPass, FilterMode::BandPass),
                };
                let gamma = build_gamma_band(tape, vars[idx], band)?;
                SpectralFilter::from_gamma(tape, gamma, mode)
            }
        }
    }

    /// Shared perceptron: ReLU between layers, none on the output.
    pub fn mlp(&self, tape: &mut Tape, vars: &[Var], x: Var) -> Result<Var> {
        let mut h = x;
        for (layer, &(w, b)) in self.mlp.iter().enumerate() {
            let lin = tape.matmul(h, vars[w])?;
            h = tape.add_row(lin, vars[b])?;
            if layer + 1 < self.mlp.len() {
                h = tape.relu(h)?;
            }
        }
        Ok(h)
    }

    /// Forward pass over precomputed graph inputs.
    pub fn forward(&self, tape: &mut Tape, vars: &[Var], inputs: &EncoderInputs) -> Result<Forward> {
        if inputs.basis_x.len() != self.config.order + 1 {
            return Err(LohaError::Usage(format!(
                "inputs built for order {}, encoder has order {}",
                inputs.basis_x.len() - 1,
                self.config.order
            )));
        }
        let low = self.filter(tape, vars, View::Low)?;
        let high = self.filter(tape, vars, View::High)?;

        let basis: Vec<Var> = inputs.basis_x.iter().map(|m| tape.constant(m.clone())).collect();
        let h_low = tape.weighted_sum(&basis, low.w)?;
        let h_high = tape.weighted_sum(&basis, high.w)?;
        let z_low = self.mlp(tape, vars, h_low)?;
        let z_high = self.mlp(tape, vars, h_high)?;
        let a = tape.mul_scalar(z_low, vars[self.alpha])?;
        let b = tape.mul_scalar(z_high, vars[self.beta])?;
        let z_full = tape.add(a, b)?;

        Ok(Forward {
            z_low,
            z_high,
            z_full,
            low,
            high,
        })
    }

    /// Composite feature projected to the embedding width: through the
    /// shared perceptron for the full trend, through the projection for
    /// squeezed trends.
    pub fn composite(
        &self,
        tape: &mut Tape,
        vars: &[Var],
        inputs: &EncoderInputs,
        fwd: &Forward,
    ) -> Result<Var> {
        let basis: Vec<Var> = inputs.basis_delta.iter().map(|m| tape.constant(m.clone())).collect();
        let (low, high) = if self.config.stop_composite_grad {
            let mut l = fwd.low;
            let mut h = fwd.high;
            l.w = tape.detach(l.w)?;
            h.w = tape.detach(h.w)?;
            (l, h)
        } else {
            (fwd.low, fwd.high)
        };
        let c = composite_from_basis(tape, &basis, &low, &high, Composition::Subtract)?;
        match self.projection {
            None => self.mlp(tape, vars, c),
            Some((w, b)) => {
                let lin = tape.matmul(c, vars[w])?;
                tape.add_row(lin, vars[b])
            }
        }
    }

    /// Current γ and Chebyshev coefficients of both views.
    pub fn snapshot(&self) -> Result<FilterSnapshot> {
        let mut tape = Tape::new();
        let vars = self.bind(&mut tape);
        let low = self.filter(&mut tape, &vars, View::Low)?;
        let high = self.filter(&mut tape, &vars, View::High)?;
        let col = |t: &Tape, v: Var| t.value(v).as_slice().to_vec();
        let scalars = |slots: FilterSlots| match slots {
            FilterSlots::Sliding { beta_a, beta_b, delta } => Some(FilterParams {
                beta_a: self.params[beta_a].item(),
                beta_b: self.params[beta_b].item(),
                delta: self.params[delta].item(),
            }),
            FilterSlots::Band(_) => None,
        };
        Ok(FilterSnapshot {
            order: self.config.order,
            lambda_max: self.config.lambda_max,
            orientation: self.config.orientation,
            filter_kind: self.config.filter_kind,
            low_gamma: col(&tape, low.gamma),
            high_gamma: col(&tape, high.gamma),
            low_w: col(&tape, low.w),
            high_w: col(&tape, high.w),
            low_params: scalars(self.low),
            high_params: scalars(self.high),
            alpha: self.params[self.alpha].item(),
            beta: self.params[self.beta].item(),
        })
    }
}

/// Graph-dependent constants shared by every epoch: the propagation
/// operator and the Chebyshev terms of the features and of the trend field.
#[derive(Debug, Clone)]
pub struct EncoderInputs {
    pub op: Arc<SparseOperator>,
    pub basis_x: Vec<Matrix>,
    pub basis_delta: Vec<Matrix>,
    pub trend_dim: usize,
}

impl EncoderInputs {
    pub fn new(g: &Graph, config: &EncoderConfig) -> Result<Self> {
        let op = Arc::new(g.propagation_operator(config.lambda_max)?);
        let x = g.features();
        let basis_x = chebyshev_basis_values(&op, x, config.order)?;
        let delta = trend_difference(g, x, config.trend_variant)?;
        let basis_delta = chebyshev_basis_values(&op, &delta, config.order)?;
        Ok(EncoderInputs {
            op,
            basis_x,
            basis_delta,
            trend_dim: delta.cols(),
        })
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Forward {
    pub z_low: Var,
    pub z_high: Var,
    pub z_full: Var,
    pub low: SpectralFilter,
    pub high: SpectralFilter,
}

/// Learned filter state, for plotting and reporting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterSnapshot {
    pub order: usize,
    pub lambda_max: f64,
    pub orientation: Orientation,
    pub filter_kind: FilterKind,
    pub low_gamma: Vec<f64>,
    pub high_gamma: Vec<f64>,
    pub low_w: Vec<f64>,
    pub high_w: Vec<f64>,
    pub low_params: Option<FilterParams>,
    pub high_params: Option<FilterParams>,
    pub alpha: f64,
    pub beta: f64,
}

/// `exp(cos(a, b) / τ)`; zero-norm vectors have similarity 0.
pub fn pair_score(a: &[f64], b: &[f64], tau: f64) -> Result<f64> {
    if !(tau > 0.0) {
        return Err(LohaError::param("tau", format!("temperature must be > 0, got {tau}")));
    }
    if a.len() != b.len() {
        return Err(LohaError::Shape {
            op: "pair_score",
            lhs: (1, a.len()),
            rhs: (1, b.len()),
        });
    }
    let na = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nb = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    let eps = crate::autodiff::NORM_EPS;
    let sim = if na < eps || nb < eps {
        0.0
    } else {
        a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / (na * nb)
    };
    Ok((sim / tau).exp())
}

/// Switches for the separation loss denominator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeparationTerms {
    /// Include `s(z_i^l, z_i^h)`, the cross-view negative.
    pub cross_view: bool,
    /// Include the positive pair in its own denominator (standard InfoNCE).
    pub positive: bool,
}

impl Default for SeparationTerms {
    fn default() -> Self {
        SeparationTerms {
            cross_view: true,
            positive: false,
        }
    }
}

fn check_pair(tape: &Tape, a: Var, b: Var, op: &'static str) -> Result<()> {
    let (x, y) = (tape.value(a), tape.value(b));
    if x.shape() != y.shape() {
        return Err(LohaError::Shape {
            op,
            lhs: x.shape(),
            rhs: y.shape(),
        });
    }
    if x.rows() < 2 {
        return Err(LohaError::Precondition(format!(
            "{op} needs at least 2 nodes for a negative set"
        )));
    }
    Ok(())
}

/// `(log numerator, Σ_{p≠i} scores)` for cosine scores between the rows
/// of two normalized matrices.
fn infonce_parts(tape: &mut Tape, anchor: Var, other: Var, tau: f64) -> Result<(Var, Var, Var)> {
    let other_t = tape.transpose(other)?;
    let sims = tape.matmul(anchor, other_t)?;
    let scaled = tape.scale(sims, 1.0 / tau)?;
    let scores = tape.exp(scaled)?;
    let positive = tape.diag(scores)?;
    let all = tape.row_sum(scores)?;
    let negatives = tape.sub(all, positive)?;
    let same = tape.mul(anchor, other)?;
    let dot = tape.row_sum(same)?;
    let log_num = tape.scale(dot, 1.0 / tau)?;
    Ok((log_num, negatives, positive))
}

/// Views-separation losses `(ℒ_l, ℒ_h)`.
pub fn loss_separation(
    tape: &mut Tape,
    z_full: Var,
    z_low: Var,
    z_high: Var,
    tau: f64,
    terms: SeparationTerms,
) -> Result<(Var, Var)> {
    if !(tau > 0.0) {
        return Err(LohaError::param("tau", format!("temperature must be > 0, got {tau}")));
    }
    check_pair(tape, z_full, z_low, "loss_separation")?;
    check_pair(tape, z_full, z_high, "loss_separation")?;
    let nf = tape.l2_row_normalize(z_full)?;
    let nl = tape.l2_row_normalize(z_low)?;
    let nh = tape.l2_row_normalize(z_high)?;

    let cross = if terms.cross_view {
        let lh = tape.mul(nl, nh)?;
        let dot = tape.row_sum(lh)?;
        let scaled = tape.scale(dot, 1.0 / tau)?;
        Some(tape.exp(scaled)?)
    } else {
        None
    };

    let side = |tape: &mut Tape, view: Var| -> Result<Var> {
        let (log_num, negatives, positive) = infonce_parts(tape, nf, view, tau)?;
        let mut denom = negatives;
        if let Some(c) = cross {
            denom = tape.add(denom, c)?;
        }
        if terms.positive {
            denom = tape.add(denom, positive)?;
        }
        let log_denom = tape.log(denom)?;
        let per_node = tape.sub(log_denom, log_num)?;
        tape.mean(per_node)
    };
    let l_low = side(tape, nl)?;
    let l_high = side(tape, nh)?;
    Ok((l_low, l_high))
}

/// Views-reunion loss `ℒ_sf` between full embeddings and projected
/// composite features.
pub fn loss_reunion(tape: &mut Tape, z_full: Var, composite: Var, tau: f64) -> Result<Var> {
    if !(tau > 0.0) {
        return Err(LohaError::param("tau", format!("temperature must be > 0, got {tau}")));
    }
    check_pair(tape, z_full, composite, "loss_reunion")?;
    let nf = tape.l2_row_normalize(z_full)?;
    let nc = tape.l2_row_normalize(composite)?;
    let (log_num, negatives, _) = infonce_parts(tape, nf, nc, tau)?;
    let log_denom = tape.log(negatives)?;
    let per_node = tape.sub(log_denom, log_num)?;
    tape.mean(per_node)
}

/// The three loss terms and their weighted total.
#[derive(Debug, Clone, Copy)]
pub struct LossTerms {
    pub l_low: Var,
    pub l_high: Var,
    pub l_sf: Option<Var>,
    pub total: Var,
    pub tau: f64,
    pub mu: f64,
}

/// `ℒ_l + ℒ_h + μ ℒ_sf` (the reunion term is omitted when absent).
pub fn total_loss(
    tape: &mut Tape,
    l_low: Var,
    l_high: Var,
    l_sf: Option<Var>,
    tau: f64,
    mu: f64,
) -> Result<LossTerms> {
    let mut total = tape.add(l_low, l_high)?;
    if let Some(sf) = l_sf {
        let weighted = tape.scale(sf, mu)?;
        total = tape.add(total, weighted)?;
    }
    Ok(LossTerms {
        l_low,
        l_high,
        l_sf,
        total,
        tau,
        mu,
    })
}
