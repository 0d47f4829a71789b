//! Experiment configuration files.
//!
//! TOML with one table per concern. Unknown keys are rejected everywhere.
//!
//! ```toml
//! [[sbm]]                # or one or more [[dataset]] tables, not both
//! name = "sbm-h0.1"
//! nodes = 400
//! classes = 2
//! p_in = 0.005
//! p_out = 0.045
//! feature_noise = 2.0
//! seed = 0
//!
//! [train]                # any training field; omitted ones keep defaults
//! K = 10
//! hidden = 64
//! ablations = { no_reunion = true }
//!
//! [probe]
//! epochs = 300
//!
//! [runs]
//! seeds = 10             # training seeds (and SBM draws) per dataset
//! splits = 10
//! split_seed = 0
//!
//! [output]
//! dir = "out"
//! table_format = "csv"   # or "markdown"
//! ```

use std::path::{Path, PathBuf};

use loha::graph::{generate_sbm, load_geom_gcn, load_graph, SbmSpec};
use loha::trainer::{ProbeConfig, TheoremConfig, TrainConfig};
use loha::Graph;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: Vec<DatasetConfig>,
    pub sbm: Vec<SbmConfig>,
    pub train: TrainConfig,
    pub probe: ProbeConfig,
    pub runs: RunsConfig,
    pub output: OutputConfig,
    pub theorem: TheoremSection,
}

/// A graph on disk: either a Geom-GCN directory or three plain files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub name: String,
    pub dir: Option<PathBuf>,
    pub edges: Option<PathBuf>,
    pub features: Option<PathBuf>,
    pub labels: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SbmConfig {
    pub name: Option<String>,
    pub nodes: usize,
    pub classes: usize,
    pub p_in: f64,
    pub p_out: f64,
    #[serde(default)]
    pub feature_noise: f64,
    #[serde(default)]
    pub seed: u64,
}

impl SbmConfig {
    pub fn spec(&self, seed_offset: u64) -> SbmSpec {
        SbmSpec {
            nodes: self.nodes,
            classes: self.classes,
            p_in: self.p_in,
            p_out: self.p_out,
            feature_noise: self.feature_noise,
            seed: self.seed.wrapping_add(seed_offset),
        }
    }

    pub fn label(&self) -> String {
        self.name
            .clone()
            .unwrap_or_else(|| format!("sbm-pin{}-pout{}", self.p_in, self.p_out))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunsConfig {
    pub seeds: u64,
    pub splits: usize,
    pub split_seed: u64,
}

impl Default for RunsConfig {
    fn default() -> Self {
        RunsConfig {
            seeds: 1,
            splits: 10,
            split_seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TableFormat {
    #[default]
    Csv,
    Markdown,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: Option<PathBuf>,
    pub table_format: TableFormat,
}

/// Monte Carlo settings and the test graph: a ring lattice of `nodes`
/// nodes joined to `reach` neighbors on each side.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TheoremSection {
    pub nodes: usize,
    pub reach: usize,
    #[serde(rename = "K")]
    pub order: usize,
    pub feature_dim: usize,
    pub bound: f64,
    pub samples: usize,
    pub node: usize,
    pub t_grid: Vec<f64>,
    pub seed: u64,
    pub lambda_max: f64,
}

impl Default for TheoremSection {
    fn default() -> Self {
        let c = TheoremConfig::default();
        TheoremSection {
            nodes: 32,
            reach: 4,
            order: 10,
            feature_dim: c.feature_dim,
            bound: c.bound,
            samples: c.samples,
            node: c.node,
            t_grid: c.t_grid,
            seed: c.seed,
            lambda_max: c.lambda_max,
        }
    }
}

impl TheoremSection {
    pub fn check(&self) -> TheoremConfig {
        TheoremConfig {
            feature_dim: self.feature_dim,
            bound: self.bound,
            samples: self.samples,
            node: self.node,
            t_grid: self.t_grid.clone(),
            seed: self.seed,
            lambda_max: self.lambda_max,
        }
    }
}

/// One graph to run on, with a name for reports.
pub struct NamedGraph {
    pub name: String,
    pub graph: Graph,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text, path)
    }

    pub fn parse(text: &str, origin: &Path) -> Result<Self, CliError> {
        let mut cfg: ExperimentConfig = toml::from_str(text)
            .map_err(|e| CliError::Config(format!("{}: {e}", origin.display())))?;
        let base = origin.parent().unwrap_or(Path::new("."));
        for d in &mut cfg.dataset {
            for p in [&mut d.dir, &mut d.edges, &mut d.features, &mut d.labels].into_iter().flatten() {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        }
        if let Some(dir) = &mut cfg.output.dir {
            if dir.is_relative() {
                *dir = base.join(&*dir);
            }
        }
        Ok(cfg)
    }

    /// Checks the data-source invariant and the training parameters.
    pub fn validate_data(&self) -> Result<(), CliError> {
        match (self.dataset.is_empty(), self.sbm.is_empty()) {
            (true, true) => Err(CliError::Config(
                "no data source: add [[dataset]] or [[sbm]] tables".into(),
            )),
            (false, false) => Err(CliError::Config(
                "both [[dataset]] and [[sbm]] given; use exactly one kind".into(),
            )),
            _ => Ok(()),
        }?;
        for d in &self.dataset {
            let files = d.edges.is_some() || d.features.is_some();
            if d.dir.is_some() == files {
                return Err(CliError::Config(format!(
                    "dataset {:?}: give either `dir` or `edges` + `features`",
                    d.name
                )));
            }
            if files && (d.edges.is_none() || d.features.is_none()) {
                return Err(CliError::Config(format!(
                    "dataset {:?}: `edges` and `features` must both be set",
                    d.name
                )));
            }
        }
        if self.runs.seeds == 0 {
            return Err(CliError::Config("runs.seeds must be >= 1".into()));
        }
        if self.runs.splits == 0 {
            return Err(CliError::Config("runs.splits must be >= 1".into()));
        }
        self.train.validate().map_err(|e| CliError::Config(format!("[train] {e}")))
    }

    /// Data source names, in config order.
    pub fn dataset_names(&self) -> Vec<String> {
        if self.sbm.is_empty() {
            self.dataset.iter().map(|d| d.name.clone()).collect()
        } else {
            self.sbm.iter().map(SbmConfig::label).collect()
        }
    }

    /// Graphs for seed index `s`; SBM graphs are redrawn per seed, files are
    /// loaded as is.
    pub fn graphs(&self, s: u64) -> Result<Vec<NamedGraph>, CliError> {
        if !self.sbm.is_empty() {
            return self
                .sbm
                .iter()
                .map(|c| {
                    Ok(NamedGraph {
                        name: c.label(),
                        graph: generate_sbm(&c.spec(s)).map_err(|e| CliError::Config(format!("[[sbm]] {e}")))?,
                    })
                })
                .collect();
        }
        self.dataset
            .iter()
            .map(|d| {
                let (graph, stats) = match &d.dir {
                    Some(dir) => load_geom_gcn(dir),
                    None => load_graph(
                        d.edges.as_deref().expect("validated"),
                        d.features.as_deref().expect("validated"),
                        d.labels.as_deref(),
                    ),
                }
                .map_err(CliError::from)?;
                if stats.self_loops + stats.duplicates > 0 {
                    log::info!(
                        "{}: dropped {} self-loops and {} duplicate edges",
                        d.name,
                        stats.self_loops,
                        stats.duplicates
                    );
                }
                Ok(NamedGraph {
                    name: d.name.clone(),
                    graph,
                })
            })
            .collect()
    }
}
