use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use fewshot::formats::write_requirements_jsonl;
use fewshot_core::synthetic::synthetic_corpus;

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("data")
        .join(name)
}

fn fewshot(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fewshot"))
        .args(args)
        .output()
        .unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

/// A small corpus and a config over it, both in `dir`.
fn setup(dir: &Path) -> PathBuf {
    let corpus = synthetic_corpus([12, 12, 12], 3);
    write_requirements_jsonl(
        fs::File::create(dir.join("small.jsonl")).unwrap(),
        corpus.requirements(),
    )
    .unwrap();
    let config = serde_json::json!({
        "dataset_path": "small.jsonl",
        "patterns_path": data("patterns.json"),
        "thesaurus_path": data("thesaurus.json"),
        "strategies": ["linear", "s2s_gen"],
        "shot_counts": [3, 6],
        "rng_seeds": [1],
        "augmentation": {"variants_per_sample": 3, "replace_fraction": 0.3, "max_attempts_factor": 20, "rng_seed": 0},
        "reference": {"feature_bits": 10, "dim": 8, "hidden": 8, "init_scale": 0.5, "adamw_lr_scale": 100.0, "adafactor_lr_scale": 5.0},
        "output_dir": "runs/out"
    });
    let path = dir.join("config.json");
    fs::write(&path, serde_json::to_string_pretty(&config).unwrap()).unwrap();
    path
}

#[test]
fn run_then_report() {
    let dir = tempfile::tempdir().unwrap();
    let config = setup(dir.path());
    let config = config.to_str().unwrap();

    let out = fewshot(&["prepare", "--config", config]);
    assert_eq!(code(&out), 0, "{out:?}");
    assert!(
        stdout(&out).contains("k=6 seed=1: train 18 test 18"),
        "{}",
        stdout(&out)
    );

    let out = fewshot(&["run", "--config", config, "--jobs", "1"]);
    assert_eq!(code(&out), 0, "{out:?}");
    assert!(stdout(&out).contains("| linear |"));
    let run_dir = dir.path().join("runs/out");
    assert!(run_dir.join("manifest.json").is_file());
    assert_eq!(fs::read_dir(run_dir.join("cells")).unwrap().count(), 4);

    let report = fewshot(&["report", "--out", run_dir.to_str().unwrap()]);
    assert_eq!(code(&report), 0, "{report:?}");
    assert_eq!(
        stdout(&report),
        fs::read_to_string(run_dir.join("table.md")).unwrap()
    );
    let csv = fewshot(&["report", "--out", run_dir.to_str().unwrap(), "--csv"]);
    assert!(stdout(&csv).starts_with("strategy,shots,seeds,"));

    // Overrides narrow the matrix and redirect the output.
    let other = dir.path().join("narrow");
    let out = fewshot(&[
        "run",
        "--config",
        config,
        "--strategy",
        "s2s_gen",
        "--k",
        "3",
        "--seed",
        "5",
        "--out",
        other.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{out:?}");
    let cells: Vec<_> = fs::read_dir(other.join("cells"))
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    assert_eq!(cells, ["s2s_gen-k3-s5"]);
}

#[test]
fn train_evaluate_and_augment() {
    let dir = tempfile::tempdir().unwrap();
    let config = setup(dir.path());
    let config = config.to_str().unwrap();
    let cell = dir.path().join("cell");
    let cell_str = cell.to_str().unwrap();
    let common = [
        "--config",
        config,
        "--strategy",
        "linear",
        "--k",
        "3",
        "--seed",
        "2",
        "--out",
        cell_str,
    ];

    let out = fewshot(&[&["train"], &common[..]].concat());
    assert_eq!(code(&out), 0, "{out:?}");
    for file in ["model.bin", "loss.csv", "split.json"] {
        assert!(cell.join(file).is_file(), "{file}");
    }
    let loss = fs::read_to_string(cell.join("loss.csv")).unwrap();
    assert!(loss.starts_with("step,epoch,lr,loss\n"));

    let out = fewshot(&[&["evaluate"], &common[..]].concat());
    assert_eq!(code(&out), 0, "{out:?}");
    assert!(stdout(&out).contains("accuracy"));
    assert_eq!(fs::read_to_string(cell.join("loss.csv")).unwrap(), loss);
    assert_eq!(
        fs::read_to_string(cell.join("predictions.jsonl"))
            .unwrap()
            .lines()
            .count(),
        36 - 9
    );

    let aug = dir.path().join("aug");
    let out = fewshot(&[
        "augment",
        "--config",
        config,
        "--k",
        "3",
        "--seed",
        "2",
        "--out",
        aug.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{out:?}");
    let report = fs::read_to_string(aug.join("augmentation_report.jsonl")).unwrap();
    assert_eq!(report.lines().count(), 9);
    for line in report.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert_eq!(
            v["produced"].as_u64().unwrap() + v["shortfall"].as_u64().unwrap(),
            3
        );
    }
}

#[test]
fn invalid_inputs_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let config = setup(dir.path());

    let typo = dir.path().join("typo.json");
    fs::write(
        &typo,
        r#"{"dataset_path": "small.jsonl", "patterns_path": "p.json", "shots": [1]}"#,
    )
    .unwrap();
    let out = fewshot(&["run", "--config", typo.to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("shots"));

    let missing = fewshot(&[
        "prepare",
        "--config",
        dir.path().join("nope.json").to_str().unwrap(),
    ]);
    assert_eq!(code(&missing), 2);

    // More shots than the smallest class holds.
    let out = fewshot(&["run", "--config", config.to_str().unwrap(), "--k", "13"]);
    assert_eq!(code(&out), 2, "{out:?}");

    let out = fewshot(&[
        "run",
        "--config",
        config.to_str().unwrap(),
        "--strategy",
        "bert",
    ]);
    assert_eq!(code(&out), 2);
}
