use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tensorse::feeder::StateTensorMeta;
use tensorse::sampling::{parse_scheme, Scheme};

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs")
}

fn tensorse(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tensorse")).args(args).current_dir(dir).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    std::fs::write(dir.join(name), text).unwrap();
    name.to_owned()
}

/// Slab 32×6 on the default feeder: certified and quick to fit.
const QUICK_SLAB: &str = "seed = 1000\nruns = 2\nrank = 11\nout = \"out\"\n\
    [scheme]\nkind = \"slab\"\nphases = 32\ntimes = 6\n\
    [fit]\nrestarts = 1\nrel_tol = 1e-5\nmax_sweeps = 3000\nridge = 1e-12\n";

#[test]
fn usage_and_config_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(code(&tensorse(d, &[])), 1);
    assert_eq!(code(&tensorse(d, &["frobnicate"])), 1);
    assert_eq!(code(&tensorse(d, &["--help"])), 0);
    assert_eq!(code(&tensorse(d, &["--version"])), 0);
    assert_eq!(code(&tensorse(d, &["simulate"])), 1, "missing --config");
    let bad = write(d, "bad.toml", &format!("{QUICK_SLAB}surprise = true\n"));
    let o = tensorse(d, &["--config", &bad, "simulate"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("surprise"), "{}", stderr(&o));
}

#[test]
fn check_certifies_minimal_slab_and_names_the_violated_term() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let ok = configs().join("slab.toml");
    let o = tensorse(d, &["--config", ok.to_str().unwrap(), "--out", "ok", "check"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let cert = std::fs::read_to_string(d.join("ok/certification.txt")).unwrap();
    assert!(cert.contains("satisfied=true"));

    let bad = configs().join("slab_uncertified.toml");
    let o = tensorse(d, &["--config", bad.to_str().unwrap(), "--out", "bad", "check"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("c1.log2_Ih+log2_J"), "{}", stderr(&o));
}

#[test]
fn disjoint_fiber_patterns_fail_condition_4() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let rows1: Vec<String> = (1..=60).map(|i| i.to_string()).collect();
    let rows2: Vec<String> = (61..=118).map(|i| i.to_string()).collect();
    write(
        d,
        "disjoint.txt",
        &format!("scheme fiber\ndims 118 5 72\nrows1 {}\ncols1 1 2 3\nrows2 {}\ncols2 4 5\n", rows1.join(" "), rows2.join(" ")),
    );
    let cfg = write(d, "f.toml", "seed = 1\nrank = 8\n[scheme]\nkind = \"fiber\"\nfile = \"disjoint.txt\"\n");
    let o = tensorse(d, &["--config", &cfg, "check"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("c4.overlap"), "{}", stderr(&o));
}

#[test]
fn simulate_is_byte_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = configs().join("slab.toml");
    for out in ["a", "b"] {
        assert_eq!(code(&tensorse(d, &["--config", cfg.to_str().unwrap(), "--out", out, "simulate"])), 0);
    }
    for f in ["tensor.txt", "meta.json", "states.csv", "feeder.txt"] {
        let (a, b) = (std::fs::read(d.join("a").join(f)).unwrap(), std::fs::read(d.join("b").join(f)).unwrap());
        assert!(!a.is_empty());
        assert_eq!(a, b, "{f}");
    }
}

#[test]
fn nonconsecutive_day_has_72_steps_20_minutes_apart() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = configs().join("nonconsecutive.toml");
    assert_eq!(code(&tensorse(d, &["--config", cfg.to_str().unwrap(), "--out", "nc", "simulate"])), 0);
    let meta = StateTensorMeta::from_json(&std::fs::read_to_string(d.join("nc/meta.json")).unwrap()).unwrap();
    assert_eq!(meta.timestamps.len(), 72);
    assert_eq!(meta.spacing_minutes, 20);
    assert!(meta.timestamps.windows(2).all(|w| w[1] - w[0] == 20));
}

#[test]
fn invalid_feeder_file_reports_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write(d, "feeder.txt", "feeder broken\nbase_kva 1000\nbus source abc\nbus n1 abc\nline source n1 0.3\n");
    let cfg = write(d, "c.toml", "seed = 1\nrank = 2\n[feeder]\nfile = \"feeder.txt\"\n");
    let o = tensorse(d, &["--config", &cfg, "simulate"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("line 5"), "{}", stderr(&o));
}

#[test]
fn sample_writes_a_parseable_scheme_with_slack_phases() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = write(d, "c.toml", QUICK_SLAB);
    assert_eq!(code(&tensorse(d, &["--config", &cfg, "sample", "--run", "1"])), 0);
    let scheme = parse_scheme(std::fs::read(d.join("out/scheme.txt")).unwrap().as_slice()).unwrap();
    let Scheme::Slab(s) = scheme else { panic!("slab expected") };
    assert_eq!(s.num_horizontal(), 32);
    assert_eq!(s.num_frontal(), 6);
    assert!([0, 1, 2].iter().all(|i| s.horizontal().contains(i)));
    assert!(d.join("out/mask.txt").exists());
}

#[test]
fn run_refuses_uncertified_schemes_without_override() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = write(d, "c.toml", &QUICK_SLAB.replace("phases = 32", "phases = 8").replace("runs = 2", "runs = 1"));
    let o = tensorse(d, &["--config", &cfg, "run"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("--override-identifiability"));
    let o = tensorse(d, &["--config", &cfg, "--override-identifiability", "run"]);
    assert_ne!(code(&o), 2, "{}", stderr(&o));
    let cert = std::fs::read_to_string(d.join("out/certification.txt")).unwrap();
    assert!(cert.contains("satisfied=false"));
}

#[test]
fn run_outputs_are_byte_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = write(d, "c.toml", QUICK_SLAB);
    for out in ["a", "b"] {
        let o = tensorse(d, &["--config", &cfg, "--out", out, "run"]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    }
    for f in ["runs.csv", "summary.txt", "curve.csv", "certification.txt"] {
        let a = std::fs::read(d.join("a").join(f)).unwrap();
        assert_eq!(a, std::fs::read(d.join("b").join(f)).unwrap(), "{f}");
    }
    let runs = std::fs::read_to_string(d.join("a/runs.csv")).unwrap();
    assert_eq!(runs.lines().count(), 3);
    assert!(runs.lines().nth(1).unwrap().starts_with("slab-32x6,0,1000,"));
    let curve = std::fs::read_to_string(d.join("a/curve.csv")).unwrap();
    assert_eq!(curve.lines().count(), 5, "header plus one row per metric");

    let o = tensorse(d, &["--config", &cfg, "--seed", "7", "--out", "c", "run"]);
    assert_eq!(code(&o), 0);
    assert_ne!(std::fs::read(d.join("c/runs.csv")).unwrap(), std::fs::read(d.join("a/runs.csv")).unwrap());
}

#[test]
fn fit_then_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = write(d, "c.toml", QUICK_SLAB);
    let o = tensorse(d, &["--config", &cfg, "fit", "--run", "1"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(std::fs::read_to_string(d.join("out/run.txt")).unwrap().starts_with("run=1\nseed=1001\n"));
    let o = tensorse(d, &["--config", &cfg, "evaluate"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let metrics = std::fs::read_to_string(d.join("out/metrics.txt")).unwrap();
    let mape: f64 = metrics.lines().find_map(|l| l.strip_prefix("mape_vmag=")).unwrap().parse().unwrap();
    assert!(mape.is_finite() && mape >= 0.0);
}

#[test]
fn evaluate_without_fit_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = write(d, "c.toml", QUICK_SLAB);
    assert_eq!(code(&tensorse(d, &["--config", &cfg, "evaluate"])), 1);
}

#[test]
fn rank_sweep_curve_is_non_increasing() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = write(d, "c.toml", "seed = 3\nrank = 2\n[feeder]\nbuiltin = \"tiny\"\n[fit]\nrestarts = 2\n");
    let o = tensorse(d, &["--config", &cfg, "sweep-rank", "--k-max", "4"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let csv = std::fs::read_to_string(d.join("out/rank_sweep.csv")).unwrap();
    let errs: Vec<f64> = csv.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert_eq!(errs.len(), 4);
    assert!(errs.windows(2).all(|w| w[1] <= w[0] + 1e-10), "{errs:?}");
}
