use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use loha::experiment::{band_config, run, AblationTable, BandComparison, MetricsRecord, Variant};
use loha::graph::{generate_sbm, write_graph, SbmSpec};
use loha::model::FilterSnapshot;
use loha::signals::Composition;
use loha::spectral::{gamma_values, interp_weights_values, FilterParams, View};
use loha::trainer::{check_concentration, make_splits, ring_lattice, TheoremReport, TrainConfig};
use serde::Serialize;

use crate::config::{ExperimentConfig, NamedGraph, TableFormat};
use crate::error::CliError;
use crate::output::{csv_to_markdown, ensure_dir, write_atomic, write_csv, write_filter_plot, write_json};

/// Timestamped lines collected during a command and written to `run.log`.
/// Kept apart from the result files so those stay reproducible.
pub struct RunLog {
    lines: Vec<String>,
    start: Instant,
}

impl RunLog {
    pub fn new(command: &str) -> Self {
        let mut log = RunLog {
            lines: Vec::new(),
            start: Instant::now(),
        };
        log.push(format!("start {command}"));
        log
    }

    pub fn push(&mut self, msg: String) {
        let now = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0.0, |d| d.as_secs_f64());
        log::info!("{msg}");
        self.lines.push(format!("{now:.3} {msg}"));
    }

    pub fn finish(mut self, dir: &Path) -> Result<(), CliError> {
        let elapsed = self.start.elapsed().as_secs_f64();
        self.push(format!("done in {elapsed:.3}s"));
        let mut text = self.lines.join("\n");
        text.push('\n');
        write_atomic(&dir.join("run.log"), text.as_bytes())
    }
}

/// Settings shared by the experiment commands.
pub struct Common {
    pub config: ExperimentConfig,
    pub out: PathBuf,
}

impl Common {
    pub fn load(config: &Path, out: Option<PathBuf>, seed: Option<u64>) -> Result<Self, CliError> {
        let mut cfg = ExperimentConfig::load(config)?;
        if let Some(s) = seed {
            cfg.train.seed = s;
        }
        let out = out
            .or_else(|| cfg.output.dir.clone())
            .unwrap_or_else(|| PathBuf::from("out"));
        Ok(Common { config: cfg, out })
    }

    fn prepare(&self) -> Result<(), CliError> {
        self.config.validate_data()?;
        ensure_dir(&self.out)
    }

    fn write_table(&self, stem: &str, csv_text: &str) -> Result<(), CliError> {
        write_atomic(&self.out.join(format!("{stem}.csv")), csv_text.as_bytes())?;
        if self.config.output.table_format == TableFormat::Markdown {
            let md = csv_to_markdown(csv_text)?;
            write_atomic(&self.out.join(format!("{stem}.md")), md.as_bytes())?;
        }
        Ok(())
    }

    /// Trains `cfg` once per seed on every graph and returns the mean test
    /// accuracy per dataset.
    fn mean_accuracy(&self, cfg: &TrainConfig, log: &mut RunLog, what: &str) -> Result<Vec<f64>, CliError> {
        let names = self.config.dataset_names();
        let mut sums = vec![0.0; names.len()];
        for s in 0..self.config.runs.seeds {
            for (d, ng) in self.config.graphs(s)?.into_iter().enumerate() {
                let r = self.run_one(&ng, cfg, s)?;
                log.push(format!(
                    "{what} {} seed {}: {:.2} ± {:.2} in {:.3}s",
                    ng.name,
                    cfg.seed + s,
                    r.probe.mean,
                    r.probe.std,
                    r.runtime_s
                ));
                sums[d] += r.probe.mean;
            }
        }
        let k = self.config.runs.seeds as f64;
        Ok(sums.into_iter().map(|x| x / k).collect())
    }

    fn run_one(&self, ng: &NamedGraph, cfg: &TrainConfig, s: u64) -> Result<loha::experiment::RunResult, CliError> {
        let splits = make_splits(ng.graph.num_nodes(), self.config.runs.split_seed, self.config.runs.splits)?;
        let cfg = TrainConfig {
            seed: cfg.seed + s,
            ..cfg.clone()
        };
        run(&ng.graph, &cfg, &splits, &self.config.probe).map_err(|e| with_context(e, &ng.name))
    }
}

fn with_context(e: loha::LohaError, dataset: &str) -> CliError {
    match CliError::from(e) {
        CliError::Config(m) => CliError::Config(format!("{dataset}: {m}")),
        CliError::Numeric(m) => CliError::Numeric(format!("{dataset}: {m}")),
        CliError::Io(m) => CliError::Io(format!("{dataset}: {m}")),
        CliError::CheckFailed(m) => CliError::CheckFailed(format!("{dataset}: {m}")),
    }
}

fn file_tag(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '.' { c } else { '_' })
        .collect()
}

/// A metrics record without its wall-clock runtime, which goes to `run.log`
/// so that reruns produce identical files.
#[derive(Serialize)]
struct MetricsRow {
    dataset: String,
    variant: String,
    seed: u64,
    accuracy_mean: f64,
    accuracy_std: f64,
}

impl From<&MetricsRecord> for MetricsRow {
    fn from(r: &MetricsRecord) -> Self {
        MetricsRow {
            dataset: r.dataset.clone(),
            variant: r.variant.clone(),
            seed: r.seed,
            accuracy_mean: r.accuracy_mean,
            accuracy_std: r.accuracy_std,
        }
    }
}

#[derive(Serialize)]
struct LossRow {
    epoch: usize,
    total: f64,
    low: f64,
    high: f64,
    reunion: f64,
}

pub fn train(common: &Common, variant: Option<Variant>) -> Result<(), CliError> {
    common.prepare()?;
    let mut log = RunLog::new("train");
    let cfg = match variant {
        Some(v) => v.apply(&common.config.train),
        None => common.config.train.clone(),
    };
    let variant_name = Variant::of(&cfg).map_or("custom", Variant::name);
    let mut records = Vec::new();
    for s in 0..common.config.runs.seeds {
        for ng in common.config.graphs(s)? {
            let r = common.run_one(&ng, &cfg, s)?;
            let seed = cfg.seed + s;
            let tag = format!("{}_seed{seed}", file_tag(&ng.name));
            log.push(format!(
                "{} seed {seed}: {:.2} ± {:.2} in {:.3}s, best epoch {:?}",
                ng.name, r.probe.mean, r.probe.std, r.runtime_s, r.output.best_epoch
            ));
            println!("{}\t{variant_name}\tseed {seed}\t{:.2} ± {:.2}", ng.name, r.probe.mean, r.probe.std);
            let losses: Vec<LossRow> = r
                .output
                .history
                .iter()
                .map(|h| LossRow {
                    epoch: h.epoch,
                    total: h.total,
                    low: h.low,
                    high: h.high,
                    reunion: h.reunion,
                })
                .collect();
            write_csv(&common.out.join(format!("loss_{tag}.csv")), &losses)?;
            write_json(&common.out.join(format!("snapshot_{tag}.json")), &r.output.snapshot)?;
            write_filter_plot(&common.out, &format!("filters_{tag}"), &r.output.snapshot)?;
            records.push(MetricsRecord {
                dataset: ng.name.clone(),
                variant: variant_name.to_string(),
                seed,
                accuracy_mean: r.probe.mean,
                accuracy_std: r.probe.std,
                runtime_s: r.runtime_s,
            });
        }
    }
    let rows: Vec<MetricsRow> = records.iter().map(MetricsRow::from).collect();
    write_json(&common.out.join("metrics.json"), &rows)?;
    log.finish(&common.out)
}

pub fn ablate(common: &Common) -> Result<(), CliError> {
    common.prepare()?;
    let mut log = RunLog::new("ablate");
    let mut accuracy = Vec::new();
    for v in Variant::ALL {
        accuracy.push(common.mean_accuracy(&v.apply(&common.config.train), &mut log, v.name())?);
    }
    let table = AblationTable {
        datasets: common.config.dataset_names(),
        variants: Variant::ALL.to_vec(),
        accuracy,
    };
    let text = table.to_csv()?;
    print!("{text}");
    common.write_table("ablation", &text)?;
    write_json(&common.out.join("ablation.json"), &table)?;
    log.finish(&common.out)
}

pub fn demo_band(common: &Common) -> Result<(), CliError> {
    common.prepare()?;
    let mut log = RunLog::new("demo-band");
    let base = Variant::Full.apply(&common.config.train);
    let low_high = common.mean_accuracy(&base, &mut log, "low/high")?;
    let band = common.mean_accuracy(&band_config(&base), &mut log, "band")?;
    let cmp = BandComparison {
        datasets: common.config.dataset_names(),
        low_high,
        band,
    };
    let text = cmp.to_csv();
    print!("{text}");
    common.write_table("band", &text)?;
    log.finish(&common.out)
}

#[derive(Serialize)]
struct TheoremCsvRow<'a> {
    composition: &'a str,
    t: f64,
    tail: f64,
    bound: f64,
    passes: bool,
}

/// Filter coefficients to test: a trained snapshot, or the initial sliding
/// filters of order `order`.
fn theorem_weights(snapshot: Option<&Path>, order: usize) -> Result<(Vec<f64>, Vec<f64>), CliError> {
    if let Some(p) = snapshot {
        let s = read_snapshot(p)?;
        return Ok((s.low_w, s.high_w));
    }
    let w = |view| -> Result<Vec<f64>, CliError> {
        let gamma = gamma_values(&FilterParams::init(view), view, Default::default(), order)?;
        Ok(interp_weights_values(&gamma)?)
    };
    Ok((w(View::Low)?, w(View::High)?))
}

pub fn check_theorem(config: Option<&Path>, out: Option<PathBuf>, snapshot: Option<&Path>, seed: Option<u64>) -> Result<(), CliError> {
    let cfg = match config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    let out = out
        .or_else(|| cfg.output.dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    let mut section = cfg.theorem.clone();
    if let Some(s) = seed {
        section.seed = s;
    }
    let g = ring_lattice(section.nodes, section.reach)?;
    let (w_low, w_high) = theorem_weights(snapshot, section.order)?;
    let check = section.check();
    ensure_dir(&out)?;
    let mut log = RunLog::new("check-theorem");
    let mut reports: Vec<TheoremReport> = Vec::new();
    for comp in [Composition::Subtract, Composition::Add] {
        let r = check_concentration(&g, &w_low, &w_high, comp, &check)?;
        log.push(format!(
            "{}: degree {}, max response {:.6}, {} of {} grid points within bound",
            r.composition,
            r.degree,
            r.max_response,
            r.rows.iter().filter(|x| x.passes).count(),
            r.rows.len()
        ));
        reports.push(r);
    }
    let rows: Vec<TheoremCsvRow> = reports
        .iter()
        .flat_map(|r| {
            r.rows.iter().map(move |x| TheoremCsvRow {
                composition: &r.composition,
                t: x.t,
                tail: x.tail,
                bound: x.bound,
                passes: x.passes,
            })
        })
        .collect();
    write_csv(&out.join("theorem.csv"), &rows)?;
    write_json(&out.join("theorem.json"), &reports)?;
    for r in &reports {
        println!("{}\t{}", r.composition, if r.all_pass { "pass" } else { "FAIL" });
    }
    log.finish(&out)?;
    let failing: Vec<String> = reports
        .iter()
        .flat_map(|r| r.rows.iter().filter(|x| !x.passes).map(move |x| format!("{} t={}", r.composition, x.t)))
        .collect();
    if failing.is_empty() {
        Ok(())
    } else {
        Err(CliError::CheckFailed(format!("empirical tail above bound at {}", failing.join(", "))))
    }
}

fn read_snapshot(path: &Path) -> Result<FilterSnapshot, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let s: FilterSnapshot =
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    if s.low_w.is_empty() || s.low_w.len() != s.high_w.len() {
        return Err(CliError::Config(format!(
            "{}: snapshot needs equal-length, non-empty low_w and high_w",
            path.display()
        )));
    }
    if !(s.lambda_max > 0.0 && s.lambda_max.is_finite()) {
        return Err(CliError::Config(format!("{}: lambda_max must be positive", path.display())));
    }
    Ok(s)
}

pub fn plot_filters(snapshot: &Path, out: &Path) -> Result<(), CliError> {
    let s = read_snapshot(snapshot)?;
    ensure_dir(out)?;
    write_filter_plot(out, "filters", &s)?;
    println!("{}", out.join("filters.svg").display());
    Ok(())
}

pub fn sbm_gen(spec: &SbmSpec, out: &Path) -> Result<(), CliError> {
    let g = generate_sbm(spec)?;
    ensure_dir(out)?;
    let h = g.edge_homophily()?;
    let names = ["edges.txt", "features.csv", "labels.txt"];
    // write to temporaries first so a failure leaves no partial dataset
    let staging = tempfile::tempdir_in(out).map_err(|e| CliError::Io(format!("{}: {e}", out.display())))?;
    let p: Vec<PathBuf> = names.iter().map(|n| staging.path().join(n)).collect();
    write_graph(&g, &p[0], &p[1], Some(&p[2]))?;
    for (src, n) in p.iter().zip(names) {
        let dst = out.join(n);
        std::fs::rename(src, &dst).map_err(|e| CliError::Io(format!("{}: {e}", dst.display())))?;
    }
    println!("{} nodes, {} edges, edge homophily {h:.4}", g.num_nodes(), g.num_edges());
    Ok(())
}
