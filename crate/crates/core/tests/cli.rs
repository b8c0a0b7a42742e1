//! End-to-end runs of every subcommand through `cli::run`.

use std::path::Path;

use relmoss::cli::run;

fn write(path: &Path, text: &str) -> String {
    std::fs::write(path, text).unwrap();
    path.to_str().unwrap().to_string()
}

fn csv_rows(path: &Path) -> Vec<String> {
    std::fs::read_to_string(path).unwrap().lines().map(str::to_string).collect()
}

#[test]
fn generated_database_through_every_subcommand() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();

    let gen = write(&d.join("gen.json"), r#"{"out_dir": "db", "synth": {"num_users": 300, "num_items": 50, "seed": 2}}"#);
    assert_eq!(run(["relmoss", "synth-data", &gen]), 0);
    assert!(d.join("db/manifest.json").is_file() && d.join("db/labels.csv").is_file());

    let manifest = d.join("db/manifest.json");
    let ingest_out = d.join("ingest");
    assert_eq!(
        run(["relmoss", "ingest", manifest.to_str().unwrap(), "--out-dir", ingest_out.to_str().unwrap(), "--dump-graph"]),
        0
    );
    assert!(ingest_out.join("ingest.json").is_file());
    assert!(!std::fs::read_to_string(ingest_out.join("graph.jsonl")).unwrap().is_empty());

    let cfg = write(
        &d.join("run.json"),
        r#"{
            "out_dir": "out",
            "data": {"manifest": "db/manifest.json", "labels": "db/labels.csv", "target_table": "users"},
            "train": {"epochs": 2, "d": 8, "batch_size": 64, "seed": 1},
            "collapse": {"random_fixtures": 10},
            "consistency": {"per_anchor": 2}
        }"#,
    );
    assert_eq!(run(["relmoss", "train", &cfg, "--dump-gates", "--dump-synth"]), 0);
    let out = d.join("out");
    for f in ["model.json", "history.json", "metrics_test.json", "metrics.csv", "gates.csv", "synth.csv", "run.json"] {
        assert!(out.join(f).is_file(), "{f} missing");
    }

    let ckpt = out.join("model.json");
    assert_eq!(run(["relmoss", "eval", &cfg, ckpt.to_str().unwrap(), "--split", "val"]), 0);
    let preds = csv_rows(&out.join("eval/predictions.csv"));
    assert!(preds.len() > 1);

    assert_eq!(run(["relmoss", "diagnose", "collapse", &cfg]), 0);
    let summary = std::fs::read_to_string(out.join("collapse/summary.json")).unwrap();
    assert!(summary.contains("\"star_pass\": true") && summary.contains("\"bound_pass\": true"), "{summary}");

    assert_eq!(run(["relmoss", "diagnose", "consistency", &cfg, ckpt.to_str().unwrap()]), 0);
    assert!(out.join("consistency/summary.json").is_file());

    assert_eq!(run(["relmoss", "ablate", &cfg]), 0);
    let rows = csv_rows(&out.join("ablation.csv"));
    assert_eq!(rows[0], "variant,b_acc,g_mean");
    let variants: Vec<&str> = rows[1..].iter().map(|r| r.split(',').next().unwrap()).collect();
    assert_eq!(variants.len(), 4);
    assert!(variants.contains(&"full") && variants.contains(&"disable_gate"));
}

#[test]
fn exit_codes_separate_config_and_runtime_errors() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(run(["relmoss", "train"]), 1);
    let missing = d.join("nope.json");
    assert_eq!(run(["relmoss", "train", missing.to_str().unwrap()]), 1);
    let both = write(&d.join("both.json"), r#"{"synth": {}, "data": {"manifest": "m", "labels": "l", "target_table": "t"}}"#);
    assert_eq!(run(["relmoss", "train", &both]), 1);
    let typo = write(&d.join("typo.json"), r#"{"synth": {}, "train": {"epoch": 3}}"#);
    assert_eq!(run(["relmoss", "train", &typo]), 1);

    let ok = write(&d.join("ok.json"), r#"{"out_dir": "o", "synth": {"num_users": 100, "seed": 1}}"#);
    let ckpt = d.join("absent.json");
    assert_eq!(run(["relmoss", "eval", &ok, ckpt.to_str().unwrap()]), 2);
    let record = std::fs::read_to_string(d.join("o/eval/run.json")).unwrap();
    assert!(record.contains("runtime_error"), "{record}");
}
