use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use loha::trainer::tail_bound;
use serde_json::Value;

fn loha(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_loha"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn ok(o: Output) -> Output {
    assert_eq!(code(&o), 0, "stderr: {}", String::from_utf8_lossy(&o.stderr));
    o
}

const SMALL: &str = r#"
[[sbm]]
name = "tiny"
nodes = 40
classes = 2
p_in = 0.05
p_out = 0.2
feature_noise = 1.0
seed = 3

[train]
K = 3
hidden = 8
epochs = 4
patience = 10

[probe]
epochs = 30

[runs]
seeds = 1
splits = 2
"#;

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let p = dir.join("exp.toml");
    fs::write(&p, text).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn metrics(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn csv_rows(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(str::to_string).collect();
    let rows = r
        .records()
        .map(|x| x.unwrap().iter().map(str::to_string).collect())
        .collect();
    (header, rows)
}

#[test]
fn train_same_seed_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    ok(loha(&["train", "--config", s(&cfg), "--seed", "7", "--out", s(&a)]));
    ok(loha(&["train", "--config", s(&cfg), "--seed", "7", "--out", s(&b)]));
    let ma = metrics(&a.join("metrics.json"));
    assert_eq!(ma[0]["seed"], 7);
    assert_eq!(ma[0]["variant"], "full");
    for f in [
        "metrics.json",
        "loss_tiny_seed7.csv",
        "snapshot_tiny_seed7.json",
        "filters_tiny_seed7.csv",
        "filters_tiny_seed7.svg",
    ] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    assert!(a.join("run.log").exists());
}

#[test]
fn train_records_variant() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = dir.path().join("o");
    ok(loha(&["train", "--config", s(&cfg), "--variant", "no_reunion", "--out", s(&out)]));
    let m = metrics(&out.join("metrics.json"));
    assert_eq!(m[0]["variant"], "no_reunion");
    let (header, rows) = csv_rows(&out.join("loss_tiny_seed0.csv"));
    assert_eq!(header, ["epoch", "total", "low", "high", "reunion"]);
    assert!(!rows.is_empty());
    assert!(rows.iter().all(|r| r[4].parse::<f64>().unwrap().is_finite()));
}

#[test]
fn ablation_table_has_six_rows() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &format!("{SMALL}\n[output]\ntable_format = \"markdown\"\n"));
    let out = dir.path().join("o");
    ok(loha(&["ablate", "--config", s(&cfg), "--out", s(&out)]));
    let (header, rows) = csv_rows(&out.join("ablation.csv"));
    assert_eq!(header, ["variant", "tiny"]);
    let names: Vec<&str> = rows.iter().map(|r| r[0].as_str()).collect();
    assert_eq!(names, ["full", "no_sliding", "no_reunion", "no_contrast", "var1", "var3"]);
    assert_eq!(rows[0][1].parse::<f64>().unwrap(), 1.0);
    assert!(rows.iter().all(|r| r[1].parse::<f64>().unwrap() > 0.0));
    assert!(out.join("ablation.md").exists());
}

#[test]
fn band_demo_columns() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = dir.path().join("o");
    ok(loha(&["demo-band", "--config", s(&cfg), "--out", s(&out)]));
    let (header, rows) = csv_rows(&out.join("band.csv"));
    assert_eq!(header, ["dataset", "Low/High", "Band-Pass/Stop", "abs_diff"]);
    assert_eq!(rows.len(), 1);
    let a: f64 = rows[0][1].parse().unwrap();
    let b: f64 = rows[0][2].parse().unwrap();
    let d: f64 = rows[0][3].parse().unwrap();
    assert!((d - (a - b).abs()).abs() < 2e-4);
}

#[test]
fn check_theorem_writes_bounds() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "[theorem]\nnodes = 16\nreach = 2\nK = 4\nsamples = 10000\nt_grid = [0.5, 1.0, 2.0, 4.0]\n",
    );
    let out = dir.path().join("o");
    let o = loha(&["check-theorem", "--config", s(&cfg), "--out", s(&out)]);
    let reports: Value = serde_json::from_str(&fs::read_to_string(out.join("theorem.json")).unwrap()).unwrap();
    let reports = reports.as_array().unwrap();
    let comps: Vec<&str> = reports.iter().map(|r| r["composition"].as_str().unwrap()).collect();
    assert_eq!(comps.len(), 2);
    let mut all_pass = true;
    for r in reports {
        let degree = r["degree"].as_u64().unwrap() as usize;
        assert_eq!(degree, 4);
        let lam = r["max_response"].as_f64().unwrap();
        for row in r["rows"].as_array().unwrap() {
            let t = row["t"].as_f64().unwrap();
            let expect = tail_bound(4, 1.0, degree, lam, t);
            let got = row["bound"].as_f64().unwrap();
            assert!((got - expect).abs() <= 1e-12 * expect.max(1.0), "{got} vs {expect}");
            assert_eq!(row["passes"].as_bool().unwrap(), row["tail"].as_f64().unwrap() <= got);
            all_pass &= row["passes"].as_bool().unwrap();
        }
    }
    assert_eq!(code(&o), if all_pass { 0 } else { 1 });
    let (_, rows) = csv_rows(&out.join("theorem.csv"));
    assert_eq!(rows.len(), 8);
}

#[test]
fn check_theorem_rejects_bad_bound() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[theorem]\nbound = 0.0\n");
    let o = loha(&["check-theorem", "--config", s(&cfg), "--out", s(&dir.path().join("o"))]);
    assert_eq!(code(&o), 2);
}

#[test]
fn plot_filters_from_snapshot() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = dir.path().join("o");
    ok(loha(&["train", "--config", s(&cfg), "--out", s(&out)]));
    let plot = dir.path().join("plot");
    ok(loha(&["plot-filters", s(&out.join("snapshot_tiny_seed0.json")), "--out", s(&plot)]));
    let (header, rows) = csv_rows(&plot.join("filters.csv"));
    assert_eq!(header, ["lambda", "low", "high"]);
    assert_eq!(rows.len(), 101);
    assert_eq!(rows[0][0].parse::<f64>().unwrap(), 0.0);
    assert_eq!(rows[100][0].parse::<f64>().unwrap(), 2.0);
    let svg = fs::read_to_string(plot.join("filters.svg")).unwrap();
    let doc = roxmltree::Document::parse(&svg).unwrap();
    assert_eq!(doc.root_element().tag_name().name(), "svg");
    let paths = doc.descendants().filter(|n| n.has_tag_name("path")).count();
    assert_eq!(paths, 2);
}

#[test]
fn plot_filters_missing_snapshot() {
    let dir = tempfile::tempdir().unwrap();
    let o = loha(&["plot-filters", s(&dir.path().join("nope.json")), "--out", s(dir.path())]);
    assert_eq!(code(&o), 2);
}

#[test]
fn malformed_config_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    for text in [
        "[train]\nK = \"ten\"\n",
        "[train]\nepoch = 3\n",
        "[runs]\nseeds = 1\n",
        "[[sbm]]\nnodes = 40\nclasses = 2\np_in = 0.1\np_out = 0.1\n[train]\ntau = -1.0\n",
    ] {
        let cfg = write_config(dir.path(), text);
        let o = loha(&["train", "--config", s(&cfg), "--out", s(&dir.path().join("o"))]);
        assert_eq!(code(&o), 2, "{text}: {}", String::from_utf8_lossy(&o.stderr));
        assert!(!String::from_utf8_lossy(&o.stderr).is_empty());
    }
    let o = loha(&["train", "--config", s(&dir.path().join("missing.toml"))]);
    assert_eq!(code(&o), 4);
}

#[test]
fn sbm_gen_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("g");
    ok(loha(&[
        "sbm-gen", "--nodes", "30", "--p-in", "0.3", "--p-out", "0.05", "--seed", "2", "--out", s(&out),
    ]));
    let cfg = write_config(
        dir.path(),
        &format!(
            "[[dataset]]\nname = \"g\"\nedges = \"{}\"\nfeatures = \"{}\"\nlabels = \"{}\"\n[train]\nK = 2\nhidden = 4\nepochs = 2\n[probe]\nepochs = 5\n[runs]\nsplits = 1\n",
            s(&out.join("edges.txt")),
            s(&out.join("features.csv")),
            s(&out.join("labels.txt"))
        ),
    );
    ok(loha(&["train", "--config", s(&cfg), "--out", s(&dir.path().join("o"))]));
}
