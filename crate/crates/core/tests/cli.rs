use std::path::{Path, PathBuf};

use clap::Parser;
use mfnoise::cli::{run, Cli, Report};
use mfnoise::model::ModelSpec;

fn recipe(dir: &Path) -> PathBuf {
    let model = ModelSpec::excitatory_inhibitory(1.0, 1.2, 0.0, -3.0);
    let recipe = serde_json::json!({
        "name": "small",
        "model": model,
        "sim": {
            "n_total": 200, "dt": 0.01, "t_end": 2.0, "n_realizations": 3, "seed": 4,
            "record_mode": "population_stats", "record_every": 10
        },
        "init": {"mean": [0.5, 0.2], "variance": [0.1, 0.1]},
        "spectrum": {"values": [1.2], "transient": 0.5},
        "validate": {"alpha": 0.05}
    });
    let path = dir.join("recipe.json");
    std::fs::write(&path, recipe.to_string()).unwrap();
    path
}

fn invoke(args: &[&str]) -> mfnoise::Result<Report> {
    let cli = Cli::try_parse_from(std::iter::once("mfnoise").chain(args.iter().copied())).expect("arguments");
    run(&cli)
}

fn body(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap().lines().filter(|l| !l.starts_with('#')).collect::<Vec<_>>().join("\n")
}

#[test]
fn network_runs_are_reproducible_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let config = recipe(dir.path());
    let config = config.to_str().unwrap();
    let outs: Vec<PathBuf> = ["a", "b"].iter().map(|n| dir.path().join(n)).collect();
    for (out, threads) in outs.iter().zip(["1", "3"]) {
        let report =
            invoke(&["simulate-net", "--config", config, "--out", out.to_str().unwrap(), "--threads", threads])
                .unwrap();
        assert!(report.failures.is_empty(), "{:?}", report.failures);
    }
    for file in ["stats.csv", "moments.csv"] {
        assert_eq!(body(&outs[0].join(file)), body(&outs[1].join(file)), "{file}");
    }
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(outs[0].join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 4);
    assert_eq!(manifest["command"], "simulate-net");
}

#[test]
fn flags_override_the_recipe() {
    let dir = tempfile::tempdir().unwrap();
    let config = recipe(dir.path());
    let out = dir.path().join("o");
    let args = ["simulate-net", "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()];
    let report = invoke(&[&args[..], &["--seed", "9", "--n", "50", "--t", "0.5"]].concat()).unwrap();
    assert!(report.failures.is_empty());
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 9);
    assert_eq!(manifest["recipe"]["sim"]["n_total"], 50);
    assert_eq!(manifest["recipe"]["sim"]["t_end"], 0.5);
}

#[test]
fn invalid_inputs_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let config = recipe(dir.path());
    let config = config.to_str().unwrap();
    let out = dir.path().join("o");
    let out = out.to_str().unwrap();
    assert!(invoke(&["simulate-net", "--config", config, "--out", out, "--n", "0"]).is_err());
    assert!(invoke(&["simulate-net", "--config", config, "--out", out, "--dt=-0.1"]).is_err());
    assert!(invoke(&["spectrum", "--config", config, "--out", out, "--override", "spectrum.values=[]"]).is_err());
    assert!(invoke(&["sweep", "--config", "/nonexistent/recipe.json", "--out", out]).is_err());
    assert!(invoke(&["simulate-mf", "--config", config, "--out", out, "--override", "lambda=-1"]).is_err());
}

#[test]
fn mean_field_and_validation_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let config = recipe(dir.path());
    let config = config.to_str().unwrap();
    let out = dir.path().join("mf");
    invoke(&["simulate-mf", "--config", config, "--out", out.to_str().unwrap()]).unwrap();
    let text = body(&out.join("moments.csv"));
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("t,population,mu,v"));
    assert!(lines.count() > 10);

    // Three realizations are too few for the tests; each analysis reports its failure.
    let out = dir.path().join("few");
    let report = invoke(&["validate", "--config", config, "--out", out.to_str().unwrap()]).unwrap();
    assert_eq!(report.failures.len(), 5);
    assert!(out.join("manifest.json").exists());

    let out = dir.path().join("val");
    let args = ["validate", "--config", config, "--out", out.to_str().unwrap(), "--override", "sim.n_realizations=40"];
    let report = invoke(&args).unwrap();
    assert!(report.failures.is_empty(), "{:?}", report.failures);
    let doc: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("validate.json")).unwrap()).unwrap();
    assert_eq!(doc["gaussianity"].as_array().unwrap().len(), 2);
    assert_eq!(doc["independence"].as_array().unwrap().len(), 3);
}
