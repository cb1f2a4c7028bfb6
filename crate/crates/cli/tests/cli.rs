use std::path::PathBuf;
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_collision-index"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("ci-cli-{}-{name}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

#[test]
fn alpha_two_is_a_config_error() {
    let out = run(&["bs", "-s", "system.masses=1,1,1", "-s", "system.alpha=2"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("system.alpha") && err.contains("(0,2)"), "{err}");
}

#[test]
fn missing_files_are_config_errors() {
    let out = run(&["index", "-s", "system.masses=1,1,1", "-s", "trajectory.kind=ingest", "-s", "trajectory.path=/nonexistent.csv"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn homothetic_equilateral_index_is_zero_and_stable() {
    let out = run(&["index", "-s", "system.masses=1,1,1"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v = json(&out);
    let idx = &v["indices"];
    for key in ["iota_spec", "iota_geo", "sf_sigma", "sigma_path_maslov"] {
        assert_eq!(idx[key]["value"], 0, "{key}");
        assert_eq!(idx[key]["stable"], true, "{key}");
    }
    assert_eq!(idx["all_agree"], true);
    assert_eq!(v["limit"]["hyperbolic"], true);
}

#[test]
fn reports_are_byte_stable() {
    let args = ["index", "-s", "system.masses=1,1,1", "-s", "trajectory.kind=synthetic", "-s", "trajectory.eps=0.05"];
    let a = run(&args);
    let b = run(&args);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    let v = json(&a);
    let codes: Vec<&str> = v["warnings"]
        .as_array()
        .unwrap()
        .iter()
        .map(|w| w["code"].as_str().unwrap())
        .collect();
    assert!(codes.contains(&"W_SYNTHETIC"));
}

#[test]
fn bs_failure_exits_with_growth_report() {
    let out = run(&["index", "-s", "system.masses=1,1,1", "-s", "cc.guess=collinear"]);
    assert_eq!(out.status.code(), Some(3));
    let v = json(&out);
    let growth: Vec<u64> = v["growth"]
        .as_array()
        .unwrap()
        .iter()
        .map(|p| p[1].as_u64().unwrap())
        .collect();
    assert!(growth.windows(2).all(|w| w[1] > w[0]), "{growth:?}");
    assert!(v["warnings"].as_array().unwrap().iter().any(|w| w["code"] == "W_BS_FAILS"));
}

#[test]
fn scan_brackets_the_collinear_threshold() {
    let out = run(&[
        "scan", "-s", "system.masses=1,1,1", "-s", "cc.guess=collinear", "-s", "scan.parameter=mass.2",
        "-s", "scan.from=13", "-s", "scan.to=15", "-s", "scan.steps=10",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("parameter,bs_margin,hyperbolic,iota_spec,iota_geo"));
    let rows: Vec<Vec<String>> = lines.map(|l| l.split(',').map(String::from).collect()).collect();
    assert_eq!(rows.len(), 11);
    let mut flips = 0;
    for w in rows.windows(2) {
        let (a, b): (f64, f64) = (w[0][1].parse().unwrap(), w[1][1].parse().unwrap());
        if (a < 0.0) != (b < 0.0) {
            flips += 1;
            assert_ne!(w[0][2], w[1][2], "hyperbolicity flips with the margin");
        }
    }
    assert_eq!(flips, 1);
    for r in &rows {
        if r[2] == "true" {
            assert_eq!(r[3], r[4]);
        } else {
            assert!(r[3].is_empty());
        }
    }
}

#[test]
fn config_file_with_overrides_and_trajectory_round_trip() {
    let dir = scratch("roundtrip");
    let cfg = dir.join("run.conf");
    let traj = dir.join("traj.csv");
    std::fs::write(
        &cfg,
        format!(
            "# equilateral, perturbed\nsystem.masses = 1, 1, 1\nsystem.alpha = 1\ntrajectory.kind = synthetic\ntrajectory.eps = 0.1\noutputs.report = {}\n",
            traj.display()
        ),
    )
    .unwrap();
    let out = run(&["trajectory", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(traj.is_file());
    let chart = traj.with_extension("chart.json");
    assert!(chart.is_file());

    let direct = run(&["index", "--config", cfg.to_str().unwrap(), "-s", &format!("outputs.report={}", dir.join("a.json").display())]);
    assert_eq!(direct.status.code(), Some(0));
    let ingested = run(&[
        "index", "--config", cfg.to_str().unwrap(),
        "-s", "trajectory.kind=ingest",
        "-s", &format!("trajectory.path={}", traj.display()),
        "-s", &format!("trajectory.chart={}", chart.display()),
        "-s", &format!("outputs.report={}", dir.join("b.json").display()),
        "-s", &format!("outputs.plot_dir={}", dir.join("plots").display()),
    ]);
    assert_eq!(ingested.status.code(), Some(0), "{}", String::from_utf8_lossy(&ingested.stderr));
    let a: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.join("a.json")).unwrap()).unwrap();
    let b: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.join("b.json")).unwrap()).unwrap();
    assert_eq!(a["indices"], b["indices"]);
    for f in ["trajectory.csv", "coefficients.csv", "crossings.csv"] {
        assert!(dir.join("plots").join(f).is_file(), "{f}");
    }
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn cc_and_limit_verbs() {
    let out = run(&["cc", "-s", "system.masses=1,1,1"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert!((v["u_value"].as_f64().unwrap() - 3.0).abs() < 1e-10);
    assert_eq!(v["positions"].as_array().unwrap().len(), 3);

    let out = run(&["limit", "-s", "system.masses=1,1,1", "-s", "mode=collision"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert_eq!(v["limit_bnd"], true);
    let p0: Vec<f64> = v["spectra"]["p0"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect();
    assert!((p0[3] - 16.0).abs() < 1e-10);

    let out = run(&["limit", "-s", "system.masses=1,1,1", "-s", "cc.guess=collinear"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn verify_reports_the_chain() {
    let out = run(&["verify", "-s", "system.masses=1,2,3", "-s", "trajectory.kind=synthetic", "-s", "trajectory.eps=0.2"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v = json(&out);
    assert_eq!(v["theorem"]["all_agree"], true);
    assert_eq!(v["theorem"]["iota_spec"], v["theorem"]["iota_geo"]);
}
