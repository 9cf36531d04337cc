use std::path::Path;
use std::process::{Command, Output};

use awsde::{run_experiment, Experiment, ExperimentConfig, Manifest, ModelChoice, MANIFEST_SCHEMA};
use serde_json::Value;

fn awsde(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_awsde")).args(args).output().expect("binary runs")
}

fn stdout_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&out.stdout)))
}

fn small(experiment: Experiment, out: &Path) -> ExperimentConfig {
    let mut c = ExperimentConfig::new(experiment);
    c.out = out.to_path_buf();
    c.steps = Some(64);
    c.paths = Some(64);
    c
}

#[test]
fn manifest_matches_schema() {
    let schema: Value = serde_json::from_str(MANIFEST_SCHEMA).unwrap();
    let validator = jsonschema::validator_for(&schema).unwrap();
    for experiment in [Experiment::FigDisc, Experiment::Counterexamples, Experiment::TransformDump] {
        let dir = tempfile::tempdir().unwrap();
        run_experiment(&small(experiment, dir.path())).unwrap();
        let manifest: Value =
            serde_json::from_slice(&std::fs::read(dir.path().join("manifest.json")).unwrap()).unwrap();
        let errors: Vec<String> = validator.iter_errors(&manifest).map(|e| e.to_string()).collect();
        assert!(errors.is_empty(), "{experiment}: {errors:?}");
        assert_eq!(manifest["experiment"], experiment.as_str());
    }
}

#[test]
fn reruns_are_byte_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for dir in [&a, &b] {
        let out = awsde(&[
            "run",
            "fig_disc",
            "--steps",
            "64",
            "--paths",
            "100",
            "--seed",
            "9",
            "--out",
            dir.path().to_str().unwrap(),
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
    }
    for f in ["aw_estimates.csv", "report.json"] {
        assert_eq!(std::fs::read(a.path().join(f)).unwrap(), std::fs::read(b.path().join(f)).unwrap(), "{f}");
    }
}

#[test]
fn estimate_csv_layout() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = run_experiment(&small(Experiment::FigDisc, dir.path())).unwrap();
    let text = std::fs::read_to_string(dir.path().join("aw_estimates.csv")).unwrap();
    assert!(!text.contains('\r'));
    assert!(text.ends_with('\n'));
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "k_or_delta,estimate,stderr,paths,h,seed");
    assert_eq!(lines.len(), 12);
    let first: Vec<&str> = lines[1].split(',').collect();
    assert_eq!((first[0], first[1]), ("0", "0"));
    assert_eq!(manifest.artifacts[0].file, "aw_estimates.csv");
    assert_eq!(manifest.artifacts[0].rows, 11);
}

#[test]
fn unknown_scheme_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = awsde(&["run", "fig_disc", "--scheme", "rk4", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err = stdout_json(&out);
    assert_eq!(err["error"]["kind"], "usage");
    assert!(err["error"]["message"].as_str().unwrap().contains("rk4"));
}

#[test]
fn guard_violation_reports_step_size() {
    let dir = tempfile::tempdir().unwrap();
    let out = awsde(&["run", "rates", "--model", "sign_drift", "--paths", "4", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let err = stdout_json(&out);
    assert_eq!(err["error"]["kind"], "step_size");
    assert!(!err["error"]["causes"].as_array().unwrap().is_empty());
}

#[test]
fn fixed_model_experiments_reject_a_model() {
    let out = awsde(&["run", "fig_cir", "--model", "cubic"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stdout_json(&out)["error"]["kind"], "usage");
}

#[test]
fn bad_arguments_and_help() {
    let out = awsde(&["run", "no_such_experiment"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stdout_json(&out)["error"]["kind"], "usage");
    assert!(awsde(&["--help"]).status.success());
    let out = awsde(&["run", "fig_disc", "--paths", "0"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn config_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = small(Experiment::TransformDump, &dir.path().join("out"));
    config.model = Some(ModelChoice::Full { name: "sign_drift".into(), params: [("x0".to_string(), 0.5)].into() });
    config.seed = 3;
    let path = dir.path().join("config.json");
    std::fs::write(&path, serde_json::to_string(&config).unwrap()).unwrap();
    let out = awsde(&["run", "--config", path.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
    let manifest: Manifest = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(manifest.config, config);
    let on_disk: Manifest =
        serde_json::from_slice(&std::fs::read(dir.path().join("out/manifest.json")).unwrap()).unwrap();
    assert_eq!(on_disk, manifest);

    // Flags override the file.
    let out = awsde(&["run", "--config", path.to_str().unwrap(), "--seed", "4"]);
    let manifest: Manifest = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(manifest.config.seed, 4);

    std::fs::write(&path, r#"{"experiment": "fig_disc", "colour": "blue"}"#).unwrap();
    let out = awsde(&["run", "--config", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stdout_json(&out)["error"]["kind"], "config");
}

#[test]
fn optional_dumps() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = small(Experiment::Counterexamples, dir.path());
    config.dump_transform = true;
    config.dump_paths = Some(3);
    // The default path model is sign_drift, whose transformed scheme needs h < 1/480.
    config.steps = Some(1024);
    let manifest = run_experiment(&config).unwrap();
    let files: Vec<&str> = manifest.artifacts.iter().map(|a| a.file.as_str()).collect();
    assert_eq!(files, ["transform.csv", "paths.csv", "report.json"]);
    let paths = std::fs::read_to_string(dir.path().join("paths.csv")).unwrap();
    assert_eq!(paths.lines().next(), Some("path_index,k,t,value"));
    assert_eq!(paths.lines().count(), 1 + 3 * 1025);
    let transform = std::fs::read_to_string(dir.path().join("transform.csv")).unwrap();
    assert_eq!(transform.lines().next(), Some("x,g,g_prime,g_second,g_inverse"));

    config.steps = Some(64);
    let err = run_experiment(&config).unwrap_err();
    assert_eq!(err.kind(), "step_size");
}

#[test]
fn counterexample_report_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = run_experiment(&small(Experiment::Counterexamples, dir.path())).unwrap();
    let r = &manifest.report;
    assert_eq!(r["kr_suboptimal"]["kr_cost_exact"], "3");
    assert_eq!(r["kr_suboptimal"]["alt_cost_exact"], "2");
    assert!(r["martingale_perturbation"].as_array().unwrap().iter().all(|v| v["matches"] == true));
    assert!(r["snell"].as_array().unwrap().iter().all(|v| v["matches"] == true));
    assert_eq!(r["holder_diffusion_witness"]["outcome"]["outcome"], "found");
}

#[test]
fn stopping_sweep_has_no_violations() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = run_experiment(&small(Experiment::Stopping, dir.path())).unwrap();
    assert_eq!(manifest.report["violations"], 0);
    assert_eq!(manifest.artifacts[0].rows, 100);
}
