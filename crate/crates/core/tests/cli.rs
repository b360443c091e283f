use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn gpseg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gpseg"))
        .args(args)
        .output()
        .unwrap()
}

fn with_config(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p.display().to_string()
}

fn data_lines(text: &str) -> Vec<&str> {
    text.lines().filter(|l| !l.starts_with('#')).collect()
}

#[test]
fn relax_two_bump_has_monotone_energy() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = with_config(
        dir.path(),
        "r.cfg",
        "n = 127\nbeta = 10\ninitial = two-bump\n",
    );
    let out = dir.path().join("out");
    let o = gpseg(&[
        "relax",
        "--config",
        &cfg,
        "--out",
        out.to_str().unwrap(),
        "--quiet",
    ]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let trace = fs::read_to_string(out.join("relax_trace.csv")).unwrap();
    let lines = data_lines(&trace);
    assert_eq!(
        lines[0],
        "step,time,dt,energy,residual,lambda,mu,mass_drift,min_value"
    );
    let energy: Vec<f64> = lines[1..]
        .iter()
        .map(|l| l.split(',').nth(3).unwrap().parse().unwrap())
        .collect();
    assert!(energy.len() > 2);
    assert!(energy.windows(2).all(|w| w[1] <= w[0] + 1e-12));
}

#[test]
fn malformed_key_exits_with_config_code() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = with_config(dir.path(), "bad.cfg", "n = 63\nbeta_typo = 3\n");
    let o = gpseg(&[
        "relax",
        "--config",
        &cfg,
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert_eq!(err.lines().count(), 1);
    assert!(err.starts_with("error kind=config code=2"));
    assert!(err.contains("beta_typo"));
}

#[test]
fn numerical_failure_exits_with_code_one() {
    let dir = tempfile::tempdir().unwrap();
    // k = 20 needs more nodes than a 63-point grid offers.
    let cfg = with_config(dir.path(), "k.cfg", "n = 63\nk = 20\n");
    let o = gpseg(&[
        "minimax",
        "--config",
        &cfg,
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error kind=construction"));
}

#[test]
fn relax_restart_from_snapshot_is_immediate() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("first");
    let cfg = with_config(dir.path(), "a.cfg", "n = 127\nbeta = 10\n");
    assert!(
        gpseg(&["relax", "--config", &cfg, "--out", out.to_str().unwrap()])
            .status
            .success()
    );
    let body = format!(
        "n = 127\nbeta = 10\ninitial = snapshot\nsnapshot = {}\nsnapshot_v = {}\n",
        out.join("relax_u.snap").display(),
        out.join("relax_v.snap").display()
    );
    let cfg2 = with_config(dir.path(), "b.cfg", &body);
    let out2 = dir.path().join("second");
    assert!(
        gpseg(&["relax", "--config", &cfg2, "--out", out2.to_str().unwrap()])
            .status
            .success()
    );
    let trace = fs::read_to_string(out2.join("relax_trace.csv")).unwrap();
    assert!(data_lines(&trace).len() - 2 <= 2);
}

#[test]
fn sweep_writes_one_row_per_coupling_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        let o = gpseg(&[
            "sweep",
            "--out",
            out.to_str().unwrap(),
            "--seed",
            "3",
            "--quiet",
        ]);
        assert_eq!(
            o.status.code(),
            Some(0),
            "{}",
            String::from_utf8_lossy(&o.stderr)
        );
    }
    let csv = fs::read_to_string(a.join("sweep.csv")).unwrap();
    let rows = data_lines(&csv);
    assert_eq!(
        rows[0],
        "beta,level,segregation,lambda,mu,dist_to_limit,limit_residual,sup_u,sup_v,def_gap"
    );
    assert_eq!(rows.len(), 1 + 5 + 1);
    assert!(rows.last().unwrap().starts_with("inf,"));
    for f in ["sweep.csv", "sweep.json", "sweep_beta_100_u.snap"] {
        assert_eq!(
            fs::read(a.join(f)).unwrap(),
            fs::read(b.join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn minimax_k2_history_is_non_increasing() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = with_config(
        dir.path(),
        "m.cfg",
        "k = 2\nbeta = 100\nm = 16\nemit_plots = true\n",
    );
    let o = gpseg(&[
        "minimax",
        "--config",
        &cfg,
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let j: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("minimax.json")).unwrap())
            .unwrap();
    let h: Vec<f64> = j["estimate"]["history"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_f64().unwrap())
        .collect();
    assert!(h.windows(2).all(|w| w[1] <= w[0]));
    assert!(dir.path().join("minimax_family.json").exists());
}

#[test]
fn check_passes_and_every_file_carries_the_hash() {
    let dir = tempfile::tempdir().unwrap();
    let o = gpseg(&["check", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stdout)
    );
    let table = String::from_utf8_lossy(&o.stdout);
    assert!(!table.contains("FAIL"));
    let cfg = with_config(dir.path(), "all.cfg", "n = 63\nemit_plots = true\n");
    for cmd in ["relax", "minimax", "sweep"] {
        assert!(gpseg(&[
            cmd,
            "--config",
            &cfg,
            "--out",
            dir.path().to_str().unwrap(),
            "--quiet"
        ])
        .status
        .success());
    }
    for entry in fs::read_dir(dir.path()).unwrap() {
        let p = entry.unwrap().path();
        if p.extension().is_some_and(|e| e == "cfg") {
            continue;
        }
        let text = fs::read_to_string(&p).unwrap();
        assert!(text.contains("config_hash"), "{}", p.display());
    }
}
