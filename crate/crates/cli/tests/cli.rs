use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const SMALL: &[&str] = &[
    "--set",
    "basis.n_max=20",
    "--set",
    "basis.eigen.fft_len=131072",
    "--set",
    "statistics.n_events=400",
];

fn gqs(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gqs"))
        .current_dir(dir)
        .env("RUST_LOG", "warn")
        .args(args)
        .output()
        .expect("binary runs")
}

fn small(dir: &Path, args: &[&str]) -> Output {
    let mut all: Vec<&str> = SMALL.to_vec();
    all.extend_from_slice(args);
    gqs(dir, &all)
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn zeros_lists_airy_zeros() {
    let dir = tempfile::tempdir().unwrap();
    let o = gqs(dir.path(), &["zeros", "--count", "2"]);
    assert!(o.status.success());
    let out = stdout(&o);
    assert!(out.starts_with("n,lambda_n\n1,2.33810741"), "{out}");
    assert_eq!(out.lines().count(), 3);
}

#[test]
fn usage_and_config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let o = gqs(dir.path(), &["--config", "missing.toml", "density"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).contains("missing.toml"));

    let o = gqs(dir.path(), &["--set", "packet.width=-1", "sample"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("packet.width"), "{}", stderr(&o));

    fs::write(dir.path().join("bad.toml"), "[geometry]\nmirror_lenght = 0.05\n").unwrap();
    let o = gqs(dir.path(), &["--config", "bad.toml", "sample"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("mirror_lenght"), "{}", stderr(&o));

    let o = gqs(dir.path(), &["no-such-command"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn selftest_passes() {
    let dir = tempfile::tempdir().unwrap();
    let o = gqs(dir.path(), &["selftest"]);
    assert!(o.status.success(), "{}{}", stdout(&o), stderr(&o));
    assert!(!stdout(&o).contains("FAIL"));
}

#[test]
fn sample_then_estimate_from_csv() {
    let dir = tempfile::tempdir().unwrap();
    let o = small(dir.path(), &["--out", "run", "sample"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let events = dir.path().join("run/events.csv");
    assert!(fs::read_to_string(&events).unwrap().starts_with("X_m,T_s\n"));

    // outputs are not overwritten silently
    let o = small(dir.path(), &["--out", "run", "sample"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("--force"));
    let o = small(dir.path(), &["--out", "run", "--force", "sample"]);
    assert!(o.status.success());

    let o = small(dir.path(), &["--out", "est", "estimate", "--events", "run/events.csv"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report = json(&dir.path().join("est/estimate.json"));
    let sample_meta = json(&dir.path().join("run/events.json"));
    assert_eq!(report["meta"]["schema"], "gqs.estimate/1");
    assert_eq!(report["meta"]["config_hash"], sample_meta["meta"]["config_hash"]);
    let g_hat = report["report"]["g_hat"].as_f64().unwrap();
    let sigma = report["report"]["sigma_hat"].as_f64().unwrap();
    assert!((g_hat - 9.81).abs() < 5.0 * sigma, "{g_hat} ± {sigma}");
    assert_eq!(report["report"]["n_events"], 400);

    fs::write(dir.path().join("bad.csv"), "X_m,T_s\n0.2,0.3\n0.01,0.3\n").unwrap();
    let o = small(dir.path(), &["--out", "bad", "estimate", "--events", "bad.csv"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("line 3"), "{}", stderr(&o));
}

#[test]
fn identical_config_and_seed_give_identical_outputs() {
    let dir = tempfile::tempdir().unwrap();
    for out in ["a", "b"] {
        let o = small(dir.path(), &["--out", out, "--seed", "99", "sample", "--n", "200"]);
        assert!(o.status.success());
    }
    let a = fs::read(dir.path().join("a/events.csv")).unwrap();
    let b = fs::read(dir.path().join("b/events.csv")).unwrap();
    assert_eq!(a, b);
    let o = small(dir.path(), &["--out", "c", "--seed", "100", "sample", "--n", "200"]);
    assert!(o.status.success());
    assert_ne!(a, fs::read(dir.path().join("c/events.csv")).unwrap());
}

#[test]
fn density_writes_grids_and_metadata() {
    let dir = tempfile::tempdir().unwrap();
    let o = small(
        dir.path(),
        &[
            "--set",
            "packet.kick_velocity=0.8",
            "--set",
            "grids.x_points=40",
            "--set",
            "grids.t_points=80",
            "--out",
            "fig",
            "density",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let d = dir.path().join("fig");
    let bin = fs::read(d.join("detection.bin")).unwrap();
    assert_eq!(&bin[..8], b"GQSGRID1");
    assert_eq!(bin.len(), 8 + 4 + 16 + 32 + 8 * 40 * 80);
    let csv = fs::read_to_string(d.join("detection.csv")).unwrap();
    assert!(csv.starts_with("X_m,T_s,density\n"));
    assert_eq!(csv.lines().count(), 1 + 40 * 80);
    assert!(fs::read_to_string(d.join("momentum.csv")).unwrap().starts_with("t_s,p_z,density\n"));
    let meta = json(&d.join("density.json"));
    assert_eq!(meta["meta"]["schema"], "gqs.density/1");
    let spread = meta["momentum_norm_spread"].as_f64().unwrap();
    assert!(spread < 1e-2, "{spread}");
}

#[test]
fn ensemble_resumes_from_partial_progress() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["--set", "statistics.ensemble_size=6", "--set", "fisher.samples=20"];
    let run = |out: &str| {
        let mut a: Vec<&str> = args.to_vec();
        a.extend_from_slice(&["--out", out, "ensemble"]);
        small(dir.path(), &a)
    };
    let o = run("full");
    assert!(o.status.success(), "{}", stderr(&o));
    let full = json(&dir.path().join("full/ensemble.json"));
    assert!(!dir.path().join("full/ensemble.progress.jsonl").exists());
    assert!(stdout(&o).contains("Σ_g/g"));
    let hist = fs::read_to_string(dir.path().join("full/histogram.csv")).unwrap();
    assert!(hist.starts_with("lower,upper,count\n"));
    let counted: usize = hist.lines().skip(1).map(|l| l.rsplit(',').next().unwrap().parse::<usize>().unwrap()).sum();
    assert_eq!(counted, 6 - full["result"]["failures"].as_u64().unwrap() as usize);

    // an interrupted run: key file plus three finished draws and a torn line
    let part = dir.path().join("part");
    fs::create_dir_all(&part).unwrap();
    fs::copy(dir.path().join("full/config.toml"), part.join("config.toml")).unwrap();
    let key = serde_json::json!({
        "config_hash": full["meta"]["config_hash"],
        "mode": "quantum",
        "n_events": 400,
        "draws": 6,
        "seed": full["meta"]["seed"],
    });
    fs::write(part.join("ensemble.progress.json"), key.to_string()).unwrap();
    let mut lines: String = full["result"]["outcomes"].as_array().unwrap()[..3]
        .iter()
        .map(|o| format!("{o}\n"))
        .collect();
    lines.push_str("{\"index\":3,");
    fs::write(part.join("ensemble.progress.jsonl"), lines).unwrap();

    let o = run("part");
    assert!(o.status.success(), "{}", stderr(&o));
    let resumed = json(&part.join("ensemble.json"));
    assert_eq!(resumed["result"], full["result"]);
}

#[test]
fn compare_prints_the_ratio() {
    let dir = tempfile::tempdir().unwrap();
    let o = small(
        dir.path(),
        &["--set", "statistics.ensemble_size=8", "--out", "cmp", "compare"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("classical / quantum Σ_g ratio"));
    let c = json(&dir.path().join("cmp/compare.json"));
    assert!(c["improvement"].as_f64().unwrap() > 10.0);
    assert_eq!(c["rows"].as_array().unwrap().len(), 2);
}
