use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use cfx_core::data::{serialize_dataset, DatasetFormat};
use cfx_core::synthetic::PlantedPattern;
use serde_json::Value;
use tempfile::TempDir;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn cfx(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cfx"))
        .args(args)
        .env_remove("CFX_SEED")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Planted-bump train and test files plus a trained 1-NN model.
struct Toy {
    dir: TempDir,
}

impl Toy {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let pattern = PlantedPattern {
            instances: 40,
            length: 40,
            start: 20,
            width: 6,
            ..PlantedPattern::default()
        };
        for (name, seed) in [("train.tsv", 0), ("test.tsv", 1)] {
            let data = PlantedPattern { seed, ..pattern.clone() }.generate().unwrap();
            std::fs::write(dir.path().join(name), serialize_dataset(&data, DatasetFormat::UcrTsv).unwrap()).unwrap();
        }
        let toy = Toy { dir };
        let out = cfx(&[
            "train", "--data", p(&toy.path("train.tsv")), "--format", "ucr_tsv", "--model", "knn", "--out",
            p(&toy.path("knn.model")),
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        toy
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn generate(&self, method: &str, index: &str, target: &str, out: &str, extra: &[&str]) -> Output {
        let (model, data, out) = (self.path("knn.model"), self.path("test.tsv"), self.path(out));
        let mut args = vec![
            "generate", "--model", p(&model), "--data", p(&data), "--index", index, "--target", target, "--method",
            method, "--out", p(&out),
        ];
        args.extend_from_slice(extra);
        cfx(&args)
    }

    fn record(&self, name: &str) -> Value {
        serde_json::from_str(&std::fs::read_to_string(self.path(name)).unwrap()).unwrap()
    }
}

#[test]
fn knn_memorizes_the_two_line_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let out = cfx(&[
        "train", "--data", p(&fixture("two_line.tsv")), "--format", "ucr_tsv", "--model", "knn", "--out",
        p(&dir.path().join("m")),
    ]);
    assert!(out.status.success());
    assert_eq!(stdout(&out).lines().last(), Some("accuracy=1"));
}

#[test]
fn bad_flags_exit_2() {
    let fx = fixture("two_line.tsv");
    let out = cfx(&["train", "--data", p(&fx), "--format", "csv", "--model", "knn", "--out", "/tmp/x"]);
    assert_eq!(out.status.code(), Some(2));
    let out = cfx(&["train", "--data", "/no/such/file.tsv", "--format", "ucr_tsv", "--model", "knn", "--out", "/tmp/x"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!out.stderr.is_empty());
}

#[test]
fn mlp_training_is_seed_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("run.cfg");
    std::fs::write(&config, "[classifier]\nkind = mlp\nhidden = 8\nepochs = 20\n").unwrap();
    let fx = fixture("two_line.tsv");
    let train = |out: &str, seed: &str| {
        let out = dir.path().join(out);
        let o = cfx(&[
            "train", "--data", p(&fx), "--format", "ucr_tsv", "--model", "mlp", "--config", p(&config), "--seed", seed,
            "--out", p(&out),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        std::fs::read(out).unwrap()
    };
    assert_eq!(train("a", "5"), train("b", "5"));
    assert_ne!(train("a", "5"), train("c", "6"));

    // CFX_SEED stands in for a missing --seed.
    let env_out = dir.path().join("d");
    let o = Command::new(env!("CARGO_BIN_EXE_cfx"))
        .args(["train", "--data", p(&fx), "--format", "ucr_tsv", "--model", "mlp", "--config", p(&config)])
        .args(["--out", p(&env_out)])
        .env("CFX_SEED", "5")
        .output()
        .unwrap();
    assert!(o.status.success());
    assert_eq!(std::fs::read(env_out).unwrap(), train("a", "5"));
}

#[test]
fn native_guide_record_on_planted_toy() {
    let toy = Toy::new();
    let out = toy.generate("native_guide", "3", "auto", "ng.json", &["--svg", p(&toy.path("ng.svg"))]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let r = toy.record("ng.json");
    assert_eq!(r["valid"], Value::Bool(true));
    assert_eq!(r["generator"], "native_guide");
    assert_eq!(r["segments"].as_array().unwrap().len(), 1);
    assert_eq!(r["metrics"]["segment_count"], 1);
    for key in ["original", "counterfactual", "target", "achieved", "seed", "metrics"] {
        assert!(r.get(key).is_some(), "{key}");
    }

    let svg = std::fs::read_to_string(toy.path("ng.svg")).unwrap();
    let doc = roxmltree::Document::parse(&svg).unwrap();
    let polylines: Vec<_> = doc.descendants().filter(|n| n.has_tag_name("polyline")).collect();
    assert_eq!(polylines.len(), 2);
    for line in polylines {
        assert_eq!(line.attribute("points").unwrap().split(' ').count(), 40);
    }
    assert_eq!(doc.descendants().filter(|n| n.has_tag_name("rect")).count(), 1);

    // `plot` reproduces the overlay from the record alone.
    let replot = toy.path("replot.svg");
    assert!(cfx(&["plot", "--record", p(&toy.path("ng.json")), "--out", p(&replot)]).status.success());
    assert_eq!(std::fs::read_to_string(replot).unwrap(), svg);
}

#[test]
fn generate_edge_cases() {
    let toy = Toy::new();
    // Target equal to the current class: nothing changes.
    let first = toy.generate("wachter", "0", "auto", "probe.json", &[]);
    assert_eq!(first.status.code(), Some(2), "knn has no gradients");
    let out = toy.generate("native_guide", "0", "auto", "probe.json", &[]);
    assert!(out.status.success());
    let current = toy.record("probe.json")["predicted"].as_u64().unwrap().to_string();
    assert!(toy.generate("comte", "0", &current, "same.json", &[]).status.success());
    let r = toy.record("same.json");
    assert_eq!(r["metrics"]["l2"], 0.0);
    assert_eq!(r["valid"], Value::Bool(true));

    assert_eq!(toy.generate("native_guide", "4000", "auto", "x.json", &[]).status.code(), Some(2));
    assert_eq!(toy.generate("native_guide", "0", "no_such_class", "x.json", &[]).status.code(), Some(2));
    let unknown = toy.generate("magic", "0", "auto", "x.json", &[]);
    assert_eq!(unknown.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&unknown.stderr).contains("native_guide"));
}

#[test]
fn generation_is_deterministic_under_seed() {
    let toy = Toy::new();
    let strip = |mut v: Value| {
        v["metrics"]["generation_time_ms"] = Value::Null;
        v
    };
    for name in ["a.json", "b.json"] {
        assert!(toy.generate("evo", "2", "auto", name, &["--seed", "11"]).status.success());
    }
    assert_eq!(strip(toy.record("a.json")), strip(toy.record("b.json")));
}

fn benchmark_config(toy: &Toy, generators: &[&str]) -> PathBuf {
    let mut text = String::from(
        "[dataset]\nname = planted\ntrain = train.tsv\ntest = test.tsv\n\n[classifier]\nkind = knn\n\n\
         [evaluation]\ninstances = 2\nseed = 4\n",
    );
    for g in generators {
        text.push_str(&format!("\n[generator.{g}]\n"));
    }
    let path = toy.path("bench.cfg");
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn benchmark_writes_reports_and_table() {
    let toy = Toy::new();
    let config = benchmark_config(&toy, &["native_guide", "comte"]);
    let run = |out: &str, jobs: &str| {
        let o = cfx(&["benchmark", "--config", p(&config), "--out", p(&toy.path(out)), "--jobs", jobs]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        o
    };
    let o = run("r1", "1");
    let table = stdout(&o);
    assert_eq!(table.lines().count(), 1 + 2, "{table}");
    let report: Value = serde_json::from_str(&std::fs::read_to_string(toy.path("r1/report.json")).unwrap()).unwrap();
    assert_eq!(report["rows"].as_array().unwrap().len(), 4);
    let csv = std::fs::read_to_string(toy.path("r1/report.csv")).unwrap();
    assert_eq!(csv.lines().count(), 5);

    run("r2", "2");
    let strip = |dir: &str| {
        let mut v: Value = serde_json::from_str(&std::fs::read_to_string(toy.path(dir).join("report.json")).unwrap()).unwrap();
        v["metadata"]["started_unix_ms"] = Value::Null;
        v["metadata"]["total_time_ms"] = Value::Null;
        for row in v["rows"].as_array_mut().unwrap() {
            row["metrics"]["generation_time_ms"] = Value::Null;
        }
        v["aggregates"] = Value::Null;
        v
    };
    assert_eq!(strip("r1"), strip("r2"));
}

#[test]
fn benchmark_config_errors_exit_2() {
    let toy = Toy::new();
    let bad = toy.path("bad.cfg");
    std::fs::write(&bad, "[classifier]\nkind = knn\nspeed = 3\n").unwrap();
    let o = cfx(&["benchmark", "--config", p(&bad), "--out", p(&toy.path("o"))]);
    assert_eq!(o.status.code(), Some(2));
    std::fs::write(&bad, "[dataset]\ntrain = missing.tsv\n[generator.evo]\n").unwrap();
    let o = cfx(&["benchmark", "--config", p(&bad), "--out", p(&toy.path("o"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("missing.tsv"));
}

#[test]
fn methods_listing() {
    let all = stdout(&cfx(&["methods"]));
    assert_eq!(all.lines().count(), 1 + 26);
    let evo = cfx(&["methods", "--category", "evolutionary", "--json"]);
    let entries: Value = serde_json::from_slice(&evo.stdout).unwrap();
    let names: Vec<&str> = entries.as_array().unwrap().iter().map(|e| e["name"].as_str().unwrap()).collect();
    assert_eq!(names, ["MOC", "TSEvo", "Sub-SpaCE", "Multi-SpaCE"]);
    assert_eq!(cfx(&["methods", "--category", "astrology"]).status.code(), Some(2));
}

#[test]
fn benchmark_aligns_test_labels_with_training_classes() {
    let dir = tempfile::tempdir().unwrap();
    let lines: Vec<String> = std::fs::read_to_string(fixture("two_line.tsv")).unwrap().lines().map(String::from).collect();
    std::fs::write(dir.path().join("train.tsv"), lines.join("\n")).unwrap();
    // Reversed, so first-appearance label order differs from training.
    std::fs::write(dir.path().join("test.tsv"), format!("{}\n{}\n", lines[1], lines[0])).unwrap();
    let config = dir.path().join("run.cfg");
    std::fs::write(
        &config,
        "[dataset]\ntrain = train.tsv\ntest = test.tsv\nnormalize = true\n[classifier]\nkind = knn\n\
         [evaluation]\ninstances = 2\n[generator.native_guide]\n",
    )
    .unwrap();
    let out = dir.path().join("out");
    let o = cfx(&["benchmark", "--config", p(&config), "--out", p(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report: Value = serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    for row in report["rows"].as_array().unwrap() {
        assert_eq!(row["true_label"], row["predicted"], "{row}");
    }
    assert_eq!(report["metadata"]["normalized"]["train"], Value::Bool(true));
}
