use std::path::Path;
use std::process::{Command, Output};

use posebench_core::report::{load_report, FlagKind};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_posebench"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn stdout_lines(o: &Output) -> Vec<String> {
    String::from_utf8_lossy(&o.stdout)
        .lines()
        .map(String::from)
        .collect()
}

fn simulate(dir: &Path, scenario: &str, seed: &str) {
    let o = run(&[
        "simulate",
        "--scenario",
        scenario,
        "--seed",
        seed,
        "--out-dir",
        p(dir),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn zero_fault_session_scores_zero_and_passes_gate() {
    let tmp = tempfile::tempdir().unwrap();
    let (sim, out) = (tmp.path().join("sim"), tmp.path().join("out"));
    simulate(&sim, "zero-fault", "3");
    let o = run(&[
        "evaluate",
        "--manifest",
        p(&sim.join("session.json")),
        "--out-dir",
        p(&out),
        "--gate",
    ]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let printed = stdout_lines(&o);
    for name in ["report.json", "static.csv", "dynamic.csv", "system.csv"] {
        let path = out.join(name);
        assert!(path.is_file());
        assert!(printed.contains(&path.display().to_string()), "{printed:?}");
    }
    let report = load_report(out.join("report.json")).unwrap();
    let d = report.trials[0].dynamic_result.as_ref().unwrap();
    assert!(d.stats.rms.d3 < 1e-6 && d.stats.max.d3 < 1e-6);
    assert!(report.flags.is_empty());
    let csv = std::fs::read_to_string(out.join("dynamic.csv")).unwrap();
    assert!(csv
        .lines()
        .nth(1)
        .unwrap()
        .starts_with("zero-fault,line,F2,10,0.000,0.000"));
}

#[test]
fn confident_wrong_fails_gate_with_flag() {
    let tmp = tempfile::tempdir().unwrap();
    let (sim, out) = (tmp.path().join("sim"), tmp.path().join("out"));
    simulate(&sim, "SP05-S3", "11");
    let manifest = sim.join("session.json");
    let o = run(&[
        "evaluate",
        "--manifest",
        p(&manifest),
        "--out-dir",
        p(&out),
        "--gate",
    ]);
    assert_eq!(o.status.code(), Some(1));
    let report = load_report(out.join("report.json")).unwrap();
    assert!(report.has_flag("SP05-S3-25", FlagKind::SystematicFailure));
    let csv = std::fs::read_to_string(out.join("static.csv")).unwrap();
    assert!(csv.lines().nth(1).unwrap().contains('*'), "{csv}");

    // Without --gate the same evaluation succeeds.
    let o = run(&["evaluate", "--manifest", p(&manifest), "--out-dir", p(&out)]);
    assert_eq!(o.status.code(), Some(0));
}

#[test]
fn simulate_is_byte_identical_per_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b, c) = (
        tmp.path().join("a"),
        tmp.path().join("b"),
        tmp.path().join("c"),
    );
    simulate(&a, "T10", "7");
    simulate(&b, "T10", "7");
    simulate(&c, "T10", "8");
    let read = |d: &Path| std::fs::read(d.join("T10.tracker.csv")).unwrap();
    assert_eq!(read(&a), read(&b));
    assert_ne!(read(&a), read(&c));
    assert_eq!(
        std::fs::read(a.join("session.json")).unwrap(),
        std::fs::read(b.join("session.json")).unwrap()
    );
}

#[test]
fn input_errors_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run(&[
        "evaluate",
        "--manifest",
        p(&tmp.path().join("missing.json")),
        "--out-dir",
        p(tmp.path()),
    ]);
    assert_eq!(o.status.code(), Some(2));
    let o = run(&[
        "simulate",
        "--scenario",
        "no-such-preset",
        "--out-dir",
        p(tmp.path()),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("T10"));
    let o = run(&["evaluate"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn corrupt_log_is_an_input_error() {
    let tmp = tempfile::tempdir().unwrap();
    let sim = tmp.path().join("sim");
    simulate(&sim, "T10", "1");
    std::fs::write(sim.join("T10.tracker.csv"), "t_ns,x_mm\n1,2\n").unwrap();
    let o = run(&[
        "evaluate",
        "--manifest",
        p(&sim.join("session.json")),
        "--out-dir",
        p(&tmp.path().join("out")),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("missing required column"));
}

#[test]
fn config_file_overrides_thresholds() {
    let tmp = tempfile::tempdir().unwrap();
    let (sim, out) = (tmp.path().join("sim"), tmp.path().join("out"));
    simulate(&sim, "SP02-F2-50", "2");
    let cfg = tmp.path().join("eval.json");
    std::fs::write(&cfg, r#"{"requirement": {"pos_limit": 0.01}}"#).unwrap();
    let o = run(&[
        "evaluate",
        "--manifest",
        p(&sim.join("session.json")),
        "--config",
        p(&cfg),
        "--out-dir",
        p(&out),
        "--gate",
    ]);
    assert_eq!(o.status.code(), Some(1));

    // Re-gating the saved report with the default limits passes.
    let again = tmp.path().join("again");
    let o = run(&[
        "report",
        "--input",
        p(&out.join("report.json")),
        "--config",
        p(&tmp.path().join("default.json")),
        "--out-dir",
        p(&again),
    ]);
    assert_eq!(
        o.status.code(),
        Some(2),
        "missing config file is an input error"
    );
    std::fs::write(tmp.path().join("default.json"), "{}").unwrap();
    let o = run(&[
        "report",
        "--input",
        p(&out.join("report.json")),
        "--config",
        p(&tmp.path().join("default.json")),
        "--out-dir",
        p(&again),
        "--format",
        "csv",
        "--gate",
    ]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    assert!(again.join("static.csv").is_file());
    assert!(!again.join("report.json").exists());
}

#[test]
fn simulate_accepts_a_fault_file() {
    let tmp = tempfile::tempdir().unwrap();
    let faults = tmp.path().join("faults.json");
    std::fs::write(
        &faults,
        r#"{"rng_seed": 5, "tracker_rate": 10, "bias": [2, 0, 0]}"#,
    )
    .unwrap();
    let sim = tmp.path().join("sim");
    let o = run(&[
        "simulate",
        "--scenario",
        "zero-fault",
        "--config",
        p(&faults),
        "--out-dir",
        p(&sim),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let out = tmp.path().join("out");
    let o = run(&[
        "evaluate",
        "--manifest",
        p(&sim.join("session.json")),
        "--out-dir",
        p(&out),
    ]);
    assert!(o.status.success());
    let report = load_report(out.join("report.json")).unwrap();
    let d = report.trials[0].dynamic_result.as_ref().unwrap();
    assert!((d.bias[0] - 2.0).abs() < 1e-6, "{:?}", d.bias);

    std::fs::write(&faults, r#"{"tracker_rate": 10}"#).unwrap();
    let o = run(&[
        "simulate",
        "--scenario",
        "zero-fault",
        "--config",
        p(&faults),
        "--out-dir",
        p(&sim),
    ]);
    assert_eq!(o.status.code(), Some(2), "seed is mandatory");
}

#[test]
fn gen_ref_writes_log_and_descriptor() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run(&[
        "gen-ref",
        "--protocol",
        "DT02",
        "--speed",
        "10",
        "--rate",
        "10",
        "--out-dir",
        p(tmp.path()),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let log = std::fs::read_to_string(tmp.path().join("DT02.csv")).unwrap();
    assert!(log.starts_with("t_ns,x_mm,y_mm,z_mm,qw,qx,qy,qz,valid"));
    let desc: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(tmp.path().join("DT02.json")).unwrap())
            .unwrap();
    assert_eq!(desc["protocol_id"], "DT02");
    assert_eq!(desc["dims"]["radius"], 200.0);
    let arc = desc["arc_length_mm"].as_f64().unwrap();
    // A 1 mm chord polyline of a radius-200 circle is a hair shorter than 2πR.
    assert!((arc - 400.0 * std::f64::consts::PI).abs() < 0.01, "{arc}");
    // One sample per mm/s-second over the whole loop, plus the start.
    assert_eq!(
        log.lines().count() - 1,
        desc["samples"].as_u64().unwrap() as usize
    );

    let o = run(&[
        "gen-ref",
        "--protocol",
        "ISO-CUBE",
        "--out-dir",
        p(tmp.path()),
    ]);
    assert!(o.status.success());
    let cube = std::fs::read_to_string(tmp.path().join("ISO-CUBE.csv")).unwrap();
    assert_eq!(cube.lines().count(), 6);

    let o = run(&["gen-ref", "--protocol", "SP01", "--out-dir", p(tmp.path())]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn list_names_presets_and_bundles() {
    let o = run(&["simulate", "--list"]);
    assert!(o.status.success());
    let lines = stdout_lines(&o);
    for name in ["T10", "SP02-F2-50", "SP05-S3", "raster-avg", "spikes"] {
        assert!(lines.iter().any(|l| l == name), "{name}");
    }
    assert!(lines.iter().any(|l| l.starts_with("bundle-32")));
}
