//! Multi-seed runs, ablation tables, band-filter comparisons and sweeps.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{LohaError, Result};
use crate::graph::Graph;
use crate::model::FilterKind;
use crate::signals::TrendVariant;
use crate::trainer::{linear_probe, pretrain, ProbeConfig, ProbeReport, Split, TrainConfig};

/// Model variants compared in ablation studies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Full,
    NoSliding,
    NoReunion,
    NoContrast,
    Var1,
    Var3,
}

impl Variant {
    pub const ALL: [Variant; 6] = [
        Variant::Full,
        Variant::NoSliding,
        Variant::NoReunion,
        Variant::NoContrast,
        Variant::Var1,
        Variant::Var3,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::NoSliding => "no_sliding",
            Variant::NoReunion => "no_reunion",
            Variant::NoContrast => "no_contrast",
            Variant::Var1 => "var1",
            Variant::Var3 => "var3",
        }
    }

    /// `base` with this variant's component removed or replaced.
    pub fn apply(self, base: &TrainConfig) -> TrainConfig {
        let mut cfg = base.clone();
        match self {
            Variant::Full => {}
            Variant::NoSliding => cfg.ablations.no_sliding = true,
            Variant::NoReunion => cfg.ablations.no_reunion = true,
            Variant::NoContrast => cfg.ablations.no_contrast = true,
            Variant::Var1 => cfg.trend_variant = TrendVariant::Var1,
            Variant::Var3 => cfg.trend_variant = TrendVariant::Var3,
        }
        cfg
    }

    /// Name of the variant a config already encodes, if it matches one.
    pub fn of(cfg: &TrainConfig) -> Option<Variant> {
        let a = cfg.ablations;
        match (a.no_sliding, a.no_reunion, a.no_contrast, cfg.trend_variant) {
            (false, false, false, TrendVariant::Full) => Some(Variant::Full),
            (true, false, false, TrendVariant::Full) => Some(Variant::NoSliding),
            (false, true, false, TrendVariant::Full) => Some(Variant::NoReunion),
            (false, false, true, TrendVariant::Full) => Some(Variant::NoContrast),
            (false, false, false, TrendVariant::Var1) => Some(Variant::Var1),
            (false, false, false, TrendVariant::Var3) => Some(Variant::Var3),
            _ => None,
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = LohaError;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| {
                let names: Vec<_> = Variant::ALL.iter().map(|v| v.name()).collect();
                LohaError::Input(format!("unknown variant {s:?}; expected one of {}", names.join(", ")))
            })
    }
}

/// One line of the metrics output; every command emits this schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub dataset: String,
    pub variant: String,
    pub seed: u64,
    pub accuracy_mean: f64,
    pub accuracy_std: f64,
    pub runtime_s: f64,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub probe: ProbeReport,
    pub runtime_s: f64,
    pub output: crate::trainer::PretrainOutput,
}

/// Pretrains with `cfg` and probes the embeddings on `splits`.
pub fn run(g: &Graph, cfg: &TrainConfig, splits: &[Split], probe: &ProbeConfig) -> Result<RunResult> {
    let labels = g
        .labels()
        .ok_or_else(|| LohaError::Precondition("probing needs node labels".into()))?;
    let start = Instant::now();
    let output = pretrain(g, cfg)?;
    let report = linear_probe(&output.embeddings, labels, splits, probe)?;
    Ok(RunResult {
        probe: report,
        runtime_s: start.elapsed().as_secs_f64(),
        output,
    })
}

/// Probe accuracy of the raw node features.
pub fn raw_feature_baseline(g: &Graph, splits: &[Split], probe: &ProbeConfig) -> Result<ProbeReport> {
    let labels = g
        .labels()
        .ok_or_else(|| LohaError::Precondition("probing needs node labels".into()))?;
    linear_probe(g.features(), labels, splits, probe)
}

/// Mean accuracy of each variant across datasets, normalized by the full
/// model's accuracy on the same dataset.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationTable {
    pub datasets: Vec<String>,
    pub variants: Vec<Variant>,
    /// `accuracy[v][d]` in percent.
    pub accuracy: Vec<Vec<f64>>,
}

impl AblationTable {
    pub fn ratios(&self) -> Result<Vec<Vec<f64>>> {
        let full = self
            .variants
            .iter()
            .position(|v| *v == Variant::Full)
            .ok_or_else(|| LohaError::Precondition("ablation table has no full row".into()))?;
        self.accuracy
            .iter()
            .map(|row| {
                row.iter()
                    .zip(&self.accuracy[full])
                    .map(|(a, f)| {
                        if *f == 0.0 {
                            Err(LohaError::numeric("ablation_table", "full model accuracy is 0"))
                        } else {
                            Ok(a / f)
                        }
                    })
                    .collect()
            })
            .collect()
    }

    /// CSV with one row per variant and one ratio column per dataset.
    pub fn to_csv(&self) -> Result<String> {
        let ratios = self.ratios()?;
        let mut out = String::from("variant");
        for d in &self.datasets {
            out.push(',');
            out.push_str(d);
        }
        out.push('\n');
        for (v, row) in self.variants.iter().zip(ratios) {
            out.push_str(v.name());
            for r in row {
                out.push_str(&format!(",{r:.6}"));
            }
            out.push('\n');
        }
        Ok(out)
    }
}

/// Low/high versus band-stop/band-pass accuracies per dataset.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BandComparison {
    pub datasets: Vec<String>,
    pub low_high: Vec<f64>,
    pub band: Vec<f64>,
}

impl BandComparison {
    pub const COLUMNS: [&'static str; 2] = ["Low/High", "Band-Pass/Stop"];

    pub fn to_csv(&self) -> String {
        let mut out = format!("dataset,{},{},abs_diff\n", Self::COLUMNS[0], Self::COLUMNS[1]);
        for ((d, a), b) in self.datasets.iter().zip(&self.low_high).zip(&self.band) {
            out.push_str(&format!("{d},{a:.4},{b:.4},{:.4}\n", (a - b).abs()));
        }
        out
    }
}

/// `base` with band-stop / band-pass views in place of the sliding ones.
pub fn band_config(base: &TrainConfig) -> TrainConfig {
    TrainConfig {
        filter_kind: FilterKind::Band,
        ..base.clone()
    }
}

/// The twelve configurations tried per dataset: K ∈ {5, 10}, τ ∈ {0.3, 0.7},
/// and three (μ, lr) pairs.
pub fn sweep_grid(base: &TrainConfig) -> Vec<TrainConfig> {
    let mut out = Vec::with_capacity(12);
    for order in [5, 10] {
        for tau in [0.3, 0.7] {
            for (mu, lr) in [(1.0, 1e-3), (0.5, 5e-3), (2.0, 1e-3)] {
                out.push(TrainConfig {
                    order,
                    tau,
                    mu,
                    lr,
                    ..base.clone()
                });
            }
        }
    }
    out
}

/// Outcome of one sweep: every configuration's validation and test accuracy
/// and the index selected by validation accuracy.
#[derive(Debug, Clone, Serialize)]
pub struct SweepResult {
    pub configs: Vec<TrainConfig>,
    pub val_accuracy: Vec<f64>,
    pub test_accuracy: Vec<f64>,
    pub test_std: Vec<f64>,
    pub selected: usize,
}

/// Runs every grid configuration and selects by mean validation accuracy.
pub fn sweep(
    g: &Graph,
    grid: &[TrainConfig],
    splits: &[Split],
    probe: &ProbeConfig,
) -> Result<SweepResult> {
    if grid.is_empty() {
        return Err(LohaError::Usage("empty sweep grid".into()));
    }
    let labels = g
        .labels()
        .ok_or_else(|| LohaError::Precondition("probing needs node labels".into()))?;
    let mut val_accuracy = Vec::new();
    let mut test_accuracy = Vec::new();
    let mut test_std = Vec::new();
    for cfg in grid {
        let out = pretrain(g, cfg)?;
        // validation accuracy: probe with the validation set as the test set
        let val_splits: Vec<Split> = splits
            .iter()
            .map(|s| Split {
                train: s.train.clone(),
                val: s.val.clone(),
                test: s.val.clone(),
            })
            .collect();
        let val = linear_probe(&out.embeddings, labels, &val_splits, probe)?;
        let test = linear_probe(&out.embeddings, labels, splits, probe)?;
        log::info!(
            "sweep K={} tau={} mu={} lr={}: val {:.2} test {:.2}",
            cfg.order,
            cfg.tau,
            cfg.mu,
            cfg.lr,
            val.mean,
            test.mean
        );
        val_accuracy.push(val.mean);
        test_accuracy.push(test.mean);
        test_std.push(test.std);
    }
    let mut selected = 0;
    for (i, v) in val_accuracy.iter().enumerate() {
        if *v > val_accuracy[selected] {
            selected = i;
        }
    }
    Ok(SweepResult {
        configs: grid.to_vec(),
        val_accuracy,
        test_accuracy,
        test_std,
        selected,
    })
}
