//! Interpolation-value parameterizations: sliding cosine low/high filters
//! and the cumulative band-stop/band-pass demo filters.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::chebyshev::interp_weights;
use crate::autodiff::{Tape, Var};
use crate::error::{LohaError, Result};
use crate::matrix::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum View {
    Low,
    High,
}

/// Which form of the sliding cosine formula to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    /// Low view `σ(a) + ½σ(b)(1 + cos θ_j)`, high view
    /// `σ(a) − ½σ(b)(1 + cos θ_j)`, with `θ_j = (½tanh δ + j)π / K`.
    /// At the default initialization the low view decreases 2 → 0 and the
    /// high view increases 0 → 2 along the frequency axis.
    #[default]
    Corrected,
    /// Phase-shifted, opposite-sign form: low `σ(a) − ½σ(b)(1 + cos(1 + θ_j))`,
    /// high `σ(a) + ½σ(b)(1 + cos(1 + θ_j))`.
    Shifted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BandMode {
    BandStop,
    BandPass,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterMode {
    Low,
    High,
    BandStop,
    BandPass,
    Fixed,
}

/// Learnable scalars of one sliding cosine filter. `σ` is ReLU.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterParams {
    pub beta_a: f64,
    pub beta_b: f64,
    pub delta: f64,
}

impl FilterParams {
    /// `β_a` = 0 (low) or 2 (high), `β_b` = 2, `δ` = 0.
    pub fn init(view: View) -> Self {
        FilterParams {
            beta_a: match view {
                View::Low => 0.0,
                View::High => 2.0,
            },
            beta_b: 2.0,
            delta: 0.0,
        }
    }
}

/// [`FilterParams`] recorded on a tape.
#[derive(Debug, Clone, Copy)]
pub struct FilterVars {
    pub beta_a: Var,
    pub beta_b: Var,
    pub delta: Var,
}

impl FilterVars {
    /// Records `p` on the tape; `delta` is a constant when `slide` is false.
    pub fn record(tape: &mut Tape, p: &FilterParams, slide: bool) -> Self {
        FilterVars {
            beta_a: tape.param(Matrix::scalar(p.beta_a)),
            beta_b: tape.param(Matrix::scalar(p.beta_b)),
            delta: tape.leaf(Matrix::scalar(p.delta), slide),
        }
    }
}

/// Effective interpolation positions `½tanh(δ) + j`, `j = 0..=K`.
/// Adjacent positions stay exactly one apart, so they never reorder.
pub fn sliding_positions(delta: f64, order: usize) -> Vec<f64> {
    let offset = 0.5 * delta.tanh();
    (0..=order).map(|j| offset + j as f64).collect()
}

/// Sliding cosine interpolation values γ ((K+1)×1) for one view.
pub fn build_gamma(
    tape: &mut Tape,
    vars: &FilterVars,
    view: View,
    orientation: Orientation,
    order: usize,
) -> Result<Var> {
    if order == 0 {
        return Err(LohaError::param("K", "polynomial order must be >= 1"));
    }
    let k = order as f64;
    let phase = match orientation {
        Orientation::Corrected => 0.0,
        Orientation::Shifted => 1.0,
    };
    let ones = tape.constant(Matrix::filled(order + 1, 1, 1.0));
    let base = tape.constant(Matrix::from_fn(order + 1, 1, |j, _| phase + j as f64 * PI / k));

    // θ_j = phase + (½tanh δ + j)π/K
    let t = tape.tanh(vars.delta)?;
    let shift = tape.scale(t, 0.5 * PI / k)?;
    let shift_col = tape.mul_scalar(ones, shift)?;
    let theta = tape.add(base, shift_col)?;
    let cos = tape.cos(theta)?;
    let bump = tape.add_const(cos, 1.0)?;

    let a = tape.relu(vars.beta_a)?;
    let b = tape.relu(vars.beta_b)?;
    let half_b = tape.scale(b, 0.5)?;
    let wave = tape.mul_scalar(bump, half_b)?;
    let level = tape.mul_scalar(ones, a)?;

    let subtract = match (orientation, view) {
        (Orientation::Corrected, View::Low) => false,
        (Orientation::Corrected, View::High) => true,
        (Orientation::Shifted, View::Low) => true,
        (Orientation::Shifted, View::High) => false,
    };
    if subtract {
        tape.sub(level, wave)
    } else {
        tape.add(level, wave)
    }
}

/// Plain-number γ for a parameter set.
pub fn gamma_values(
    p: &FilterParams,
    view: View,
    orientation: Orientation,
    order: usize,
) -> Result<Vec<f64>> {
    let mut tape = Tape::new();
    let vars = FilterVars::record(&mut tape, p, true);
    let g = build_gamma(&mut tape, &vars, view, orientation, order)?;
    Ok(tape.value(g).as_slice().to_vec())
}

/// Linear map from trainable band parameters `r` to γ = M r.
///
/// Band-stop: `γ_0 = r_0`, `γ_i = r_0 − Σ_{j=1..i} r_j` up to the middle
/// index, mirrored `γ_i = γ_{K−i}` beyond it. Band-pass uses cumulative sums
/// `γ_i = Σ_{j=0..i} r_j` with the same mirror.
fn band_matrix(mode: BandMode, order: usize) -> Matrix {
    let half = order / 2;
    let sign = match mode {
        BandMode::BandStop => -1.0,
        BandMode::BandPass => 1.0,
    };
    Matrix::from_fn(order + 1, order + 1, |i, j| {
        let src = if i <= half { i } else { order - i };
        if j == 0 {
            1.0
        } else if j <= src {
            sign
        } else {
            0.0
        }
    })
}

/// Initial band parameters: increments `2/K`, `r_0` = 2 (stop) or 0 (pass).
pub fn band_init(mode: BandMode, order: usize) -> Result<Matrix> {
    if order < 2 {
        return Err(LohaError::param("K", "band filters need order >= 2"));
    }
    let step = 2.0 / order as f64;
    let first = match mode {
        BandMode::BandStop => 2.0,
        BandMode::BandPass => 0.0,
    };
    Ok(Matrix::from_fn(order + 1, 1, |j, _| if j == 0 { first } else { step }))
}

/// Band-stop / band-pass γ from trainable parameters `r` ((K+1)×1).
pub fn build_gamma_band(tape: &mut Tape, params: Var, mode: BandMode) -> Result<Var> {
    let (rows, cols) = tape.value(params).shape();
    if cols != 1 || rows < 3 {
        return Err(LohaError::param("K", "band filters need order >= 2"));
    }
    let m = tape.constant(band_matrix(mode, rows - 1));
    tape.matmul(m, params)
}

/// Interpolation values and their Chebyshev coefficients, on one tape.
#[derive(Debug, Clone, Copy)]
pub struct SpectralFilter {
    pub order: usize,
    pub gamma: Var,
    pub w: Var,
    pub mode: FilterMode,
}

impl SpectralFilter {
    pub fn from_gamma(tape: &mut Tape, gamma: Var, mode: FilterMode) -> Result<Self> {
        let w = interp_weights(tape, gamma)?;
        Ok(SpectralFilter {
            order: tape.value(gamma).rows() - 1,
            gamma,
            w,
            mode,
        })
    }

    /// Non-learnable filter from fixed γ.
    pub fn fixed(tape: &mut Tape, gamma: &[f64]) -> Result<Self> {
        let g = tape.constant(Matrix::column(gamma));
        SpectralFilter::from_gamma(tape, g, FilterMode::Fixed)
    }
}
