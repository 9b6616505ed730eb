use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mcre"))
}

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(name)
}

fn run(args: &[&str]) -> (i32, String) {
    let out = bin().args(args).output().expect("spawn mcre");
    (out.status.code().unwrap_or(-1), String::from_utf8_lossy(&out.stderr).into_owned())
}

fn manifest(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

/// Parse a CSV written by the CLI: skips the hash line, returns header and rows.
fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("# config_hash: "));
    let header = lines.next().unwrap().split(',').map(String::from).collect();
    let rows = lines.map(|l| l.split(',').map(String::from).collect()).collect();
    (header, rows)
}

fn column(path: &Path, name: &str) -> Vec<f64> {
    let (h, rows) = read_csv(path);
    let i = h.iter().position(|c| c == name).unwrap();
    rows.iter().map(|r| r[i].parse().unwrap()).collect()
}

fn assert_manifest_complete(dir: &Path) {
    let m = manifest(dir);
    let listed: BTreeSet<String> = m["files"]
        .as_array()
        .unwrap()
        .iter()
        .map(|f| f["name"].as_str().unwrap().to_string())
        .collect();
    let present: BTreeSet<String> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n != "manifest.json")
        .collect();
    assert_eq!(listed, present);
    let hash = m["config_hash"].as_str().unwrap();
    for f in &present {
        let text = fs::read_to_string(dir.join(f)).unwrap();
        if f.ends_with(".csv") {
            assert_eq!(text.lines().next().unwrap(), format!("# config_hash: {hash}"));
            let rows = m["files"].as_array().unwrap().iter().find(|e| e["name"] == f.as_str()).unwrap()["rows"]
                .as_u64()
                .unwrap();
            assert_eq!(rows as usize, text.lines().count() - 2, "{f}");
        }
    }
}

#[test]
fn finite_oracle_couple_matches_exact_curve() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("couple");
    let (code, err) = run(&["couple", "--config", config("couple_finite.ini").to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code, 0, "{err}");
    for f in ["b_curve.csv", "exact_b.csv", "manifest.json"] {
        assert!(out.join(f).exists(), "{f} missing");
    }
    assert_manifest_complete(&out);
    let est = column(&out.join("b_curve.csv"), "estimate");
    let se = column(&out.join("b_curve.csv"), "stderr");
    let exact = column(&out.join("exact_b.csv"), "estimate");
    assert_eq!(est.len(), 21);
    for n in 0..est.len() {
        let tol = 3.0 * se[n].max(1e-4) + 1e-12;
        assert!((est[n] - exact[n]).abs() <= tol, "n={n}: {} vs {}", est[n], exact[n]);
    }
}

#[test]
fn sgld_lambda_star_is_recorded_exactly() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("sgld");
    let (code, err) = run(&[
        "sgld",
        "--config",
        config("sgld_logistic.ini").to_str().unwrap(),
        "--c",
        "2",
        "--lambda-star",
        "--reps",
        "200",
        "--horizon",
        "300",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, 0, "{err}");
    let m = manifest(&out);
    assert_eq!(m["summary"]["lambda_exact"], "1/36");
    assert_eq!(m["summary"]["gamma_star_exact"], "11/12");
    assert!((m["summary"]["lambda"].as_f64().unwrap() - 1.0 / 36.0).abs() < 1e-15);
    assert_manifest_complete(&out);
}

#[test]
fn sgld_env_flag_swaps_the_stream() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("sgld");
    let (code, err) = run(&[
        "sgld",
        "--c",
        "3",
        "--lambda",
        "0.01",
        "--beta",
        "0.001",
        "--dim",
        "1",
        "--env",
        config("stream_iid.ini").to_str().unwrap(),
        "--reps",
        "50",
        "--horizon",
        "200",
        "--set",
        "sgld.n_grid=0..5",
        "--set",
        "rates.c_grid=",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, 0, "{err}");
    let m = manifest(&out);
    assert_eq!(m["summary"]["lambda"].as_f64().unwrap(), 0.01);
    assert!(m["summary"].get("lambda_exact").is_none());
    assert!(!out.join("lambda_star.csv").exists());
}

#[test]
fn empty_grid_is_a_validation_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config("couple_finite.ini");
    let (code, err) = run(&["couple", "--config", cfg.to_str().unwrap(), "--set", "couple.n_grid=", "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(code, 3, "{err}");
    assert!(err.contains("n_grid"));
    let (code, _) = run(&["mixing-bounds", "--set", "bounds.n_grid=", "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(code, 3);
}

#[test]
fn exit_codes_for_parse_and_validation_failures() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = tmp.path().join("bad.ini");
    fs::write(&bad, "[env\nkind = iid\n").unwrap();
    let out = tmp.path().join("o");
    assert_eq!(run(&["couple", "--config", bad.to_str().unwrap(), "--out", out.to_str().unwrap()]).0, 2);
    assert_eq!(run(&["no-such-command"]).0, 2);
    let (code, err) = run(&["couple", "--set", "kernel.kind=spline", "--out", out.to_str().unwrap()]);
    assert_eq!(code, 3);
    assert!(err.contains("kernel.kind"));
    // a config written for one experiment cannot drive another
    let cfg = config("couple_finite.ini");
    assert_eq!(run(&["oracle", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]).0, 3);
}

#[test]
fn runtime_failures_exit_4() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("o");
    // explosive AR(1): the path overflows to infinity
    let (code, err) = run(&[
        "simulate",
        "--set",
        "kernel.kind=ar1",
        "--set",
        "kernel.a=1e200",
        "--set",
        "env.kind=iid-gaussian",
        "--horizon",
        "10",
        "--set",
        "run.x0=1e200",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, 4, "{err}");
}

fn csv_bodies(dir: &Path) -> Vec<(String, String)> {
    let mut v: Vec<(String, String)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "csv"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read_to_string(&p).unwrap()))
        .collect();
    v.sort();
    v
}

#[test]
fn csv_bodies_are_identical_across_thread_counts() {
    let tmp = tempfile::tempdir().unwrap();
    let cases: [(&[&str], &str); 4] = [
        (&["couple"], "couple_finite.ini"),
        (&["simulate"], "simulate_finite.ini"),
        (&["certify"], "certify_ar1.ini"),
        (&["econ", "nw"], "econ_nw.ini"),
    ];
    for (sub, cfg) in cases {
        let mut bodies = Vec::new();
        for threads in ["1", "4", "4"] {
            let out = tmp.path().join(format!("{cfg}-{threads}-{}", bodies.len()));
            let mut args: Vec<&str> = sub.to_vec();
            let cfg_path = config(cfg);
            let c = cfg_path.to_str().unwrap().to_string();
            let o = out.to_str().unwrap().to_string();
            args.extend(["--config", &c, "--threads", threads, "--reps", "300", "--out", &o]);
            let (code, err) = run(&args);
            assert_eq!(code, 0, "{cfg}: {err}");
            bodies.push(csv_bodies(&out));
        }
        assert!(!bodies[0].is_empty());
        assert_eq!(bodies[0], bodies[1], "{cfg}: 1 vs 4 threads");
        assert_eq!(bodies[1], bodies[2], "{cfg}: rerun");
    }
}

#[test]
fn rate_figures_peak_at_two() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("rates");
    let cfg = config("mixing_bounds.ini");
    let (code, err) = run(&["mixing-bounds", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code, 0, "{err}");
    let c = column(&out.join("lambda_star.csv"), "c");
    let l = column(&out.join("lambda_star.csv"), "lambda_star");
    let i = (0..l.len()).max_by(|a, b| l[*a].total_cmp(&l[*b])).unwrap();
    assert!((c[i] - 2.0).abs() <= 0.01 + 1e-9, "argmax at c = {}", c[i]);
    let bound = column(&out.join("main_bound.csv"), "value");
    assert!(bound.windows(2).all(|w| w[1] <= w[0] + 1e-15));
    assert!(out.join("alpha_y.csv").exists());
    assert_manifest_complete(&out);

    let out2 = tmp.path().join("far");
    let (code, _) = run(&["mixing-bounds", "--set", "rates.c_grid=100", "--out", out2.to_str().unwrap()]);
    assert_eq!(code, 0);
    let g = column(&out2.join("gamma_star.csv"), "gamma_star");
    assert!((g[0] - 2.0 / 3.0).abs() < 0.01);
}

#[test]
fn empty_rate_input_emits_nothing() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = mcre_cli::config::Config::default();
    let mut out = mcre_cli::output::Output::new(tmp.path(), cfg.hash(), "rates").unwrap();
    mcre_cli::commands::emit_rate_figures(&mut out, &[]).unwrap();
    assert_eq!(fs::read_dir(tmp.path()).unwrap().count(), 0);
    out.finish().unwrap();
    let m = manifest(tmp.path());
    assert!(m["files"].as_array().unwrap().is_empty());
}

#[test]
fn econ_and_oracle_subcommands_emit_their_tables() {
    let tmp = tempfile::tempdir().unwrap();
    let cases: [(&[&str], &str, &[&str], &[&str]); 5] = [
        (&["econ", "simulate"], "econ_tar.ini", &["path.csv"], &[]),
        (&["econ", "mle"], "econ_mle.ini", &["mle_fit.csv", "mle.json"], &["--set", "mle.n=2000"]),
        (&["oracle"], "oracle_finite.ini", &["marginals.csv", "tv.csv", "exact_b.csv", "transfer.csv"], &[]),
        (&["certify"], "certify_varx.ini", &["drift_check.csv", "dl.csv", "moment.csv"], &["--reps", "200"]),
        (&["simulate"], "simulate_finite.ini", &["trajectory.csv", "marginals.csv"], &[]),
    ];
    for (sub, cfg, files, extra) in cases {
        let out = tmp.path().join(cfg);
        let c = config(cfg).to_str().unwrap().to_string();
        let o = out.to_str().unwrap().to_string();
        let mut args: Vec<&str> = sub.to_vec();
        args.extend(["--config", &c, "--out", &o]);
        args.extend(extra);
        let (code, err) = run(&args);
        assert_eq!(code, 0, "{cfg}: {err}");
        for f in files {
            assert!(out.join(f).exists(), "{cfg}: {f}");
        }
        assert_manifest_complete(&out);
    }
    let m = manifest(&tmp.path().join("oracle_finite.ini"));
    assert_eq!(m["summary"]["transfer_dominates"], true);
}

#[test]
fn clt_rejects_too_few_replications() {
    let tmp = tempfile::tempdir().unwrap();
    let c = config("econ_clt.ini");
    let (code, err) = run(&["econ", "clt", "--config", c.to_str().unwrap(), "--reps", "10", "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(code, 3, "{err}");
}
