use std::fs;
use std::process::Command;

use fpt_experiments::cli::run;

fn call(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("fpt").chain(args.iter().copied());
    let code = run(argv, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

const MODEL: [&str; 10] = ["--mu", "1", "--sigma2", "0.2", "--b0", "1", "--eps", "1", "--lambda", "1"];

fn with(extra: &[&'static str]) -> Vec<&'static str> {
    let mut v = extra.to_vec();
    v.extend_from_slice(&MODEL);
    v
}

#[test]
fn fit_prints_threshold_json() {
    let (code, out, _) = call(&with(&["fit", "--method", "below"]));
    assert_eq!(code, 0);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    for key in ["alpha1", "beta1", "beta2", "t1", "alpha2", "tau0", "tau_star", "objective"] {
        assert!(v[key].is_f64(), "{key}");
    }
    assert_eq!(v["method"], "below");
    let a2 = v["alpha1"].as_f64().unwrap() + v["beta1"].as_f64().unwrap() * v["t1"].as_f64().unwrap();
    assert!((a2 - v["alpha2"].as_f64().unwrap()).abs() < 1e-12);
}

#[test]
fn moments_of_constant_threshold() {
    let args = ["moments", "--mu", "1", "--sigma2", "0.2", "--b0", "1", "--eps", "0", "--lambda", "1"];
    let (code, out, _) = call(&args);
    assert_eq!(code, 0);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert!((v["mean"].as_f64().unwrap() - 1.0).abs() < 1e-8);
    assert!((v["variance"].as_f64().unwrap() - 0.2).abs() < 1e-8);
    assert!((v["total_mass"].as_f64().unwrap() - 1.0).abs() < 1e-8);
}

#[test]
fn density_table() {
    let (code, out, _) = call(&with(&["density", "--t-min", "0", "--t-max", "4", "--t-steps", "8"]));
    assert_eq!(code, 0);
    let lines: Vec<_> = out.lines().collect();
    assert_eq!(lines[0], "t,pdf,cdf");
    assert_eq!(lines.len(), 10);
    assert_eq!(lines[1], "0,0,0");
    let last: Vec<f64> = lines[9].split(',').map(|x| x.parse().unwrap()).collect();
    assert!(last[2] > 0.99 && last[2] <= 1.0);
}

#[test]
fn simulate_then_estimate() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("sample.csv");
    let p = path.to_str().unwrap();
    let mut args = with(&["simulate", "--n", "300", "--seed", "5"]);
    args.extend_from_slice(&["--out", p]);
    let (code, _, err) = call(&args);
    assert_eq!(code, 0, "{err}");
    let text = fs::read_to_string(&path).unwrap();
    assert!(text.starts_with("stream_index,fpt\n0,"));
    assert_eq!(text.lines().count(), 301);

    for method in ["mle", "me", "me-eps"] {
        let args = [
            "estimate", "--input", p, "--method", method, "--b0", "1", "--eps", "1", "--lambda", "1", "--truth-mu", "1",
            "--truth-sigma2", "0.2",
        ];
        let (code, out, err) = call(&args);
        assert_eq!(code, 0, "{method}: {err}");
        let v: serde_json::Value = serde_json::from_str(&out).unwrap();
        assert_eq!(v["method"], method.replace('-', "_"));
        assert!((v["mu_hat"].as_f64().unwrap() - 1.0).abs() < 0.3, "{out}");
        assert!(v["r_mse_mu"].as_f64().unwrap() >= 0.0);
        assert!(v["converged"].is_boolean());
    }
}

#[test]
fn exit_codes() {
    assert_eq!(call(&["fit", "--mu", "1"]).0, 2);
    assert_eq!(call(&["nonsense"]).0, 2);
    assert_eq!(call(&with(&["fit", "--method", "diagonal"])).0, 2);
    let bad = ["moments", "--mu", "1", "--sigma2", "-0.2", "--b0", "1", "--eps", "1", "--lambda", "1"];
    assert_eq!(call(&bad).0, 2);

    let dir = tempfile::tempdir().unwrap();
    let one = dir.path().join("one.csv");
    fs::write(&one, "stream_index,fpt\n0,1.2\n").unwrap();
    let args = ["estimate", "--input", one.to_str().unwrap(), "--method", "me", "--b0", "1", "--eps", "1", "--lambda", "1"];
    let (code, _, err) = call(&args);
    assert_eq!(code, 3, "{err}");
    let missing = dir.path().join("missing.csv");
    let args = ["estimate", "--input", missing.to_str().unwrap(), "--method", "me", "--b0", "1", "--eps", "1", "--lambda", "1"];
    assert_eq!(call(&args).0, 2);
}

#[test]
fn experiment_writes_csvs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.toml");
    fs::write(
        &cfg,
        "[model]\nsigma2 = [0.2]\n[threshold]\neps = [0.1]\nlambda = [1.0]\n[sim]\nn_paths = 500\nrepetitions = 2\nsample_size = 30\n",
    )
    .unwrap();
    let out = dir.path().join("out");
    let (code, summary, err) = call(&["experiment", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code, 0, "{err}");
    assert_eq!(summary.lines().count(), 3);
    assert!(summary.contains("0/1 cells failed"));
    for name in ["statistics.csv", "riae.csv", "estimation.csv"] {
        let text = fs::read_to_string(out.join(name)).unwrap();
        assert!(text.lines().count() >= 2, "{name}");
    }
}

#[test]
fn binary_reports_exit_status() {
    let status = Command::new(env!("CARGO_BIN_EXE_fpt")).arg("fit").output().unwrap().status;
    assert_eq!(status.code(), Some(2));
    let ok = Command::new(env!("CARGO_BIN_EXE_fpt")).args(with(&["fit"])).output().unwrap();
    assert_eq!(ok.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&ok.stdout).contains("\"tau_star\""));
}
