use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_miglmm"))
}

fn asset(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join(rel)
}

fn run(args: &[&str]) -> Output {
    bin().arg("--quiet").args(args).output().unwrap()
}

fn fit_into(out: &Path, seed: &str) -> Output {
    let model = asset("configs/rats.toml");
    let data = asset("data/rats.csv");
    run(&[
        "fit", "--model", model.to_str().unwrap(), "--data", data.to_str().unwrap(),
        "--steps", "3000", "--burn-in", "500", "--thin", "5", "--chains", "2",
        "--seed", seed, "--out", out.to_str().unwrap(),
    ])
}

#[test]
fn fits_are_reproducible_byte_for_byte() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b, c) = (tmp.path().join("a"), tmp.path().join("b"), tmp.path().join("c"));
    assert_eq!(fit_into(&a, "3").status.code(), Some(0));
    assert_eq!(fit_into(&b, "3").status.code(), Some(0));
    assert_eq!(fit_into(&c, "4").status.code(), Some(0));
    for file in ["draws-chain1.csv", "draws-chain2.csv"] {
        assert_eq!(fs::read(a.join(file)).unwrap(), fs::read(b.join(file)).unwrap());
    }
    assert_ne!(fs::read(a.join("draws-chain1.csv")).unwrap(), fs::read(c.join("draws-chain1.csv")).unwrap());
    let manifest: serde_json::Value = serde_json::from_slice(&fs::read(a.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seeds"], serde_json::json!([3, 4]));
    assert_eq!(
        manifest["data_sha256"],
        "5904fae1941eae0a053c24aa4d2a424fef72c39c6070412748225c14d80bd91a"
    );
    let diagnostics: serde_json::Value = serde_json::from_slice(&fs::read(a.join("diagnostics.json")).unwrap()).unwrap();
    assert!(diagnostics[1]["iact"]["beta1"].as_f64().unwrap() >= 1.0);
    // an existing run is never overwritten
    assert_eq!(fit_into(&a, "3").status.code(), Some(2));
}

#[test]
fn exit_codes_follow_the_error_kind() {
    let tmp = tempfile::tempdir().unwrap();
    let model = asset("configs/rats.toml");
    let bad = tmp.path().join("bad.csv");
    fs::write(&bad, "litter,trt,m,y\n1,1,10,3\n2,1,5,7\n").unwrap();
    let out = run(&["fit", "--model", model.to_str().unwrap(), "--data", bad.to_str().unwrap(), "--out", tmp.path().join("x").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("row 3"));
    let out = run(&["fit", "--model", "missing.toml", "--data", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(run(&["fit", "--steps"]).status.code(), Some(2));
    assert_eq!(run(&["adjust", "--link", "sqrt", "--kappa", "1", "--tau2", "4"]).status.code(), Some(4));
    assert_eq!(run(&["adjust", "--link", "reciprocal", "--kappa", "1", "--tau2", "1"]).status.code(), Some(2));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

#[test]
fn adjust_prints_adjustment_and_residual() {
    let out = run(&["adjust", "--link", "logit", "--kappa", "50", "--tau2", "1"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let row: Vec<f64> = text.lines().nth(1).unwrap().split(',').map(|v| v.parse().unwrap()).collect();
    assert!((row[2] - 0.5).abs() <= 1e-3);
    assert!(row[3].abs() <= 1e-8);
    let out = run(&["adjust", "--link", "probit", "--kappa-grid", "-1:1:0.5", "--sigma", "1", "--sigma", "1"]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().count(), 6);
    let last: Vec<f64> = text.lines().last().unwrap().split(',').map(|v| v.parse().unwrap()).collect();
    assert_eq!(last[1], 2.0);
    assert!((last[2] - (3f64.sqrt() - 1.0)).abs() < 1e-14);
}

#[test]
fn bench_summaries_and_bayes_factors_write_plot_data() {
    let tmp = tempfile::tempdir().unwrap();
    let csv = tmp.path().join("bench.csv");
    let out = run(&["integrate-bench", "--sigma-grid", "1", "--points", "200", "--methods", "hybrid,ms,gold", "--out", csv.to_str().unwrap()]);
    assert!(out.status.success());
    let text = fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().count(), 13);
    assert!(tmp.path().join("bench.csv.manifest.json").exists());

    let run_dir = tmp.path().join("fit");
    assert!(fit_into(&run_dir, "8").status.success());
    let draws = run_dir.join("draws-chain1.csv");
    let out_dir = tmp.path().join("post");
    for _ in 0..2 {
        let out = run(&["summarize", "--draws", draws.to_str().unwrap(), "--thresholds", "0,1", "--out", out_dir.to_str().unwrap()]);
        assert!(out.status.success());
    }
    let summary = fs::read_to_string(out_dir.join("summary-001/summary.csv")).unwrap();
    assert!(summary.starts_with("parameter,mean,sd,tail_above_0,tail_above_1"));
    assert!(out_dir.join("summary-002/density-sigma2.csv").exists());

    let model = asset("configs/rats.toml");
    let out = run(&["bf", "--draws", draws.to_str().unwrap(), "--param", "beta1", "--model", model.to_str().unwrap(), "--out", out_dir.to_str().unwrap()]);
    assert!(out.status.success());
    let bf = fs::read_to_string(out_dir.join("bf-001/bf.csv")).unwrap();
    let value: f64 = bf.lines().nth(1).unwrap().split(',').nth(1).unwrap().parse().unwrap();
    assert!(value > 0.0 && value.is_finite());
    let out = run(&["bf", "--draws", draws.to_str().unwrap(), "--param", "nope", "--prior-mean", "0", "--prior-var", "1"]);
    assert_eq!(out.status.code(), Some(2));
}
