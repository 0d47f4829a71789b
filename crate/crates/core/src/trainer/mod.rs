//! Label-blind pretraining, linear probing and the concentration check.

mod probe;
mod theorem;

pub use probe::{linear_probe, make_splits, ProbeConfig, ProbeReport, Split};
pub use theorem::{
    check_concentration, composite_row, ring_lattice, tail_bound, TailRow, TheoremConfig, TheoremReport,
};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{adam_step, AdamConfig, AdamState, Tape};
use crate::error::{LohaError, Result};
use crate::graph::Graph;
use crate::matrix::Matrix;
use crate::model::{
    loss_reunion, loss_separation, total_loss, Encoder, EncoderConfig, EncoderInputs, FilterKind,
    FilterSnapshot, SeparationTerms,
};
use crate::signals::TrendVariant;
use crate::spectral::Orientation;

/// Components removed from the full model.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Ablations {
    /// Freeze δ at 0.
    pub no_sliding: bool,
    /// Drop the reunion term (μ = 0).
    pub no_reunion: bool,
    /// Drop the cross-view negative from the separation denominators.
    pub no_contrast: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(rename = "K")]
    pub order: usize,
    pub hidden: usize,
    pub mlp_layers: usize,
    pub tau: f64,
    pub mu: f64,
    pub lr: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    /// Epochs without a new best training loss before stopping.
    pub patience: usize,
    pub seed: u64,
    pub trend_variant: TrendVariant,
    pub orientation: Orientation,
    pub filter_kind: FilterKind,
    pub ablations: Ablations,
    pub lambda_max: f64,
    /// Count the positive pair in its own separation denominator.
    pub positive_in_denominator: bool,
    pub stop_composite_grad: bool,
    pub learn_combination: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            order: 10,
            hidden: 512,
            mlp_layers: 1,
            tau: 0.5,
            mu: 1.0,
            lr: 1e-3,
            weight_decay: 0.0,
            epochs: 500,
            patience: 50,
            seed: 0,
            trend_variant: TrendVariant::Full,
            orientation: Orientation::Corrected,
            filter_kind: FilterKind::Sliding,
            ablations: Ablations::default(),
            lambda_max: 2.0,
            positive_in_denominator: false,
            stop_composite_grad: false,
            learn_combination: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("tau", self.tau),
            ("lr", self.lr),
            ("lambda_max", self.lambda_max),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(LohaError::param(name, format!("must be positive, got {v}")));
            }
        }
        for (name, v) in [("mu", self.mu), ("weight_decay", self.weight_decay)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(LohaError::param(name, format!("must be non-negative, got {v}")));
            }
        }
        if self.order == 0 {
            return Err(LohaError::param("K", "polynomial order must be >= 1"));
        }
        if self.hidden == 0 {
            return Err(LohaError::param("hidden", "must be >= 1"));
        }
        if self.patience == 0 {
            return Err(LohaError::param("patience", "must be >= 1"));
        }
        Ok(())
    }

    pub fn encoder_config(&self) -> EncoderConfig {
        EncoderConfig {
            order: self.order,
            hidden: self.hidden,
            mlp_layers: self.mlp_layers,
            orientation: self.orientation,
            filter_kind: self.filter_kind,
            trend_variant: self.trend_variant,
            sliding: !self.ablations.no_sliding,
            learn_combination: self.learn_combination,
            stop_composite_grad: self.stop_composite_grad,
            lambda_max: self.lambda_max,
        }
    }

    /// Reunion weight after ablations.
    pub fn effective_mu(&self) -> f64 {
        if self.ablations.no_reunion {
            0.0
        } else {
            self.mu
        }
    }

    pub fn separation_terms(&self) -> SeparationTerms {
        SeparationTerms {
            cross_view: !self.ablations.no_contrast,
            positive: self.positive_in_denominator,
        }
    }
}

/// Loss terms recorded before the update of one epoch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    pub total: f64,
    pub low: f64,
    pub high: f64,
    pub reunion: f64,
}

#[derive(Debug, Clone)]
pub struct PretrainOutput {
    /// Full-view embeddings from the best-loss parameters.
    pub embeddings: Matrix,
    pub encoder: Encoder,
    pub snapshot: FilterSnapshot,
    pub history: Vec<EpochLoss>,
    pub best_epoch: Option<usize>,
}

struct Step {
    loss: EpochLoss,
    grads: Vec<Matrix>,
}

fn step(
    encoder: &Encoder,
    inputs: &EncoderInputs,
    cfg: &TrainConfig,
    epoch: usize,
    want_grads: bool,
) -> Result<Step> {
    let mut tape = Tape::new();
    let vars = encoder.bind(&mut tape);
    let fwd = encoder.forward(&mut tape, &vars, inputs)?;
    let (l_low, l_high) = loss_separation(
        &mut tape,
        fwd.z_full,
        fwd.z_low,
        fwd.z_high,
        cfg.tau,
        cfg.separation_terms(),
    )?;
    let mu = cfg.effective_mu();
    let l_sf = if mu > 0.0 {
        let c = encoder.composite(&mut tape, &vars, inputs, &fwd)?;
        Some(loss_reunion(&mut tape, fwd.z_full, c, cfg.tau)?)
    } else {
        None
    };
    let terms = total_loss(&mut tape, l_low, l_high, l_sf, cfg.tau, mu)?;
    let loss = EpochLoss {
        epoch,
        total: tape.value(terms.total).item(),
        low: tape.value(l_low).item(),
        high: tape.value(l_high).item(),
        reunion: l_sf.map_or(0.0, |v| tape.value(v).item()),
    };
    let grads = if want_grads {
        let g = tape.backward(terms.total)?;
        vars.iter().map(|&v| g.get(v)).collect()
    } else {
        Vec::new()
    };
    Ok(Step { loss, grads })
}

/// Full-view embeddings of `encoder` on prepared inputs.
pub fn embed(encoder: &Encoder, inputs: &EncoderInputs) -> Result<Matrix> {
    let mut tape = Tape::new();
    let vars = encoder.bind(&mut tape);
    let fwd = encoder.forward(&mut tape, &vars, inputs)?;
    Ok(tape.value(fwd.z_full).clone())
}

fn at_epoch(epoch: usize, err: LohaError) -> LohaError {
    match err {
        LohaError::Numeric { op, detail } => LohaError::Numeric {
            op,
            detail: format!("epoch {epoch}: {detail}"),
        },
        other => other,
    }
}

/// Self-supervised training of the two-view encoder on the whole graph.
///
/// Labels are never read. Each epoch records the loss at the current
/// parameters and then takes one Adam step; the returned encoder holds the
/// parameters with the lowest recorded total loss.
pub fn pretrain(g: &Graph, cfg: &TrainConfig) -> Result<PretrainOutput> {
    cfg.validate()?;
    let enc_cfg = cfg.encoder_config();
    let inputs = EncoderInputs::new(g, &enc_cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut encoder = Encoder::new(enc_cfg, g.features().cols(), inputs.trend_dim, &mut rng)?;

    let learnable: Vec<usize> = (0..encoder.params().len())
        .filter(|&i| encoder.is_learnable(i))
        .collect();
    let hyper = AdamConfig {
        lr: cfg.lr,
        weight_decay: cfg.weight_decay,
        ..AdamConfig::default()
    };
    let mut active: Vec<Matrix> = learnable.iter().map(|&i| encoder.params()[i].clone()).collect();
    let mut state = AdamState::new(&active, hyper);

    let mut history = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, usize, Vec<Matrix>)> = None;
    for epoch in 0..cfg.epochs {
        let s = step(&encoder, &inputs, cfg, epoch, true).map_err(|e| at_epoch(epoch, e))?;
        history.push(s.loss);
        let improved = best.as_ref().map_or(true, |(b, _, _)| s.loss.total < *b);
        if improved {
            best = Some((s.loss.total, epoch, encoder.params().to_vec()));
        } else if let Some((_, b, _)) = &best {
            if epoch - b >= cfg.patience {
                log::debug!("early stop at epoch {epoch}, best epoch {b}");
                break;
            }
        }
        let grads: Vec<Matrix> = learnable.iter().map(|&i| s.grads[i].clone()).collect();
        adam_step(&mut active, &grads, &mut state).map_err(|e| at_epoch(epoch, e))?;
        if let Some(bad) = active.iter().position(|p| !p.is_finite()) {
            return Err(LohaError::numeric(
                "pretrain",
                format!(
                    "epoch {epoch}: parameter {} became non-finite",
                    encoder.names()[learnable[bad]]
                ),
            ));
        }
        for (slot, &i) in learnable.iter().enumerate() {
            encoder.params_mut()[i].clone_from(&active[slot]);
        }
    }

    let best_epoch = best.as_ref().map(|(_, e, _)| *e);
    if let Some((_, _, params)) = best {
        encoder.params_mut().clone_from_slice(&params);
    }
    let embeddings = embed(&encoder, &inputs)?;
    let snapshot = encoder.snapshot()?;
    Ok(PretrainOutput {
        embeddings,
        encoder,
        snapshot,
        history,
        best_epoch,
    })
}

/// Loss of the untrained encoder, without gradients.
pub fn initial_loss(g: &Graph, cfg: &TrainConfig) -> Result<EpochLoss> {
    cfg.validate()?;
    let enc_cfg = cfg.encoder_config();
    let inputs = EncoderInputs::new(g, &enc_cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let encoder = Encoder::new(enc_cfg, g.features().cols(), inputs.trend_dim, &mut rng)?;
    Ok(step(&encoder, &inputs, cfg, 0, false)?.loss)
}
