//! Simulator-labelled checks of the full pipeline.

use posebench_core::evaluate::{evaluate_scenario, evaluate_session};
use posebench_core::manifest::{parse_manifest, EvalConfig};
use posebench_core::report::FlagKind;
use posebench_core::simulator::{preset, resolve_scenarios, scenario_names, write_session};

fn cfg() -> EvalConfig {
    EvalConfig::default()
}

#[test]
fn detector_precision_and_recall_are_one() {
    let statics: Vec<String> = scenario_names()
        .into_iter()
        .filter(|n| n.starts_with("SP") && n.matches('-').count() == 2)
        .collect();
    assert_eq!(statics.len(), 48);
    let (mut tp, mut fp, mut fneg) = (0, 0, 0);
    for name in &statics {
        for seed in 0..3 {
            let s = preset(name).unwrap().with_seed(seed);
            let label = s.faults.confident_wrong.is_some();
            let o = evaluate_scenario(&s, &cfg()).unwrap();
            let flagged = o
                .flags
                .iter()
                .any(|f| f.kind == FlagKind::SystematicFailure);
            match (label, flagged) {
                (true, true) => tp += 1,
                (false, true) => fp += 1,
                (true, false) => fneg += 1,
                _ => {}
            }
        }
    }
    assert_eq!(tp, 4 * 3);
    assert_eq!((fp, fneg), (0, 0));
}

#[test]
fn calibration_offset_shows_in_holdout_residual() {
    let s = preset("calibration").unwrap().with_seed(4);
    let delta = s.faults.calibration_offset;
    let norm = delta.iter().map(|v| v * v).sum::<f64>().sqrt();
    let o = evaluate_scenario(&s, &cfg()).unwrap();
    let reg = o.report.registration.unwrap();
    assert!(reg.rms < 1e-9, "fit pairs carry no offset");
    let holdout = reg.holdout_rms.unwrap();
    assert!((holdout / norm - 1.0).abs() < 0.1, "{holdout} vs {norm}");
    assert!(o
        .flags
        .iter()
        .any(|f| f.kind == FlagKind::RegistrationResidual));
}

#[test]
fn slow_drift_recovered_over_seed_ensemble() {
    let seeds = 50;
    let mean = (0..seeds)
        .map(|seed| {
            let s = preset("drift-0.0023").unwrap().with_seed(seed);
            let o = evaluate_scenario(&s, &cfg()).unwrap();
            o.report.dynamic_result.unwrap().drift_3d.unwrap()
        })
        .sum::<f64>()
        / seeds as f64;
    assert!((mean / 0.0023 - 1.0).abs() < 0.1, "{mean}");
}

#[test]
fn detected_gaps_match_injected_dropouts() {
    let s = preset("RT03-10").unwrap().with_seed(6);
    let period = 1.0 / s.faults.tracker_rate;
    let o = evaluate_scenario(&s, &cfg()).unwrap();
    let gaps = o.report.system.unwrap().gaps;
    assert_eq!(gaps.len(), s.faults.dropouts.len());
    for (g, d) in gaps.iter().zip(&s.faults.dropouts) {
        let start = g.0.as_secs_f64();
        let end = g.1.as_secs_f64();
        assert!(
            (start - d.start_s).abs() <= period,
            "{start} vs {}",
            d.start_s
        );
        assert!((end - d.end_s).abs() <= period, "{end} vs {}", d.end_s);
    }
}

#[test]
fn drift_unavailable_under_energy_saving() {
    let o = evaluate_scenario(&preset("ST01").unwrap(), &cfg()).unwrap();
    let sys = o.report.system.unwrap();
    assert!(sys.drift.is_none());
    assert!(sys.drift_unavailable.unwrap().contains("required"));
}

#[test]
fn written_session_evaluates_like_in_memory() {
    let tmp = tempfile::tempdir().unwrap();
    let scenarios = resolve_scenarios("T10").unwrap();
    let paths = write_session(tmp.path(), "t10", &scenarios, 9).unwrap();
    let session = parse_manifest(&paths[0]).unwrap();
    let report = evaluate_session(&session, &cfg()).unwrap();
    report.validate().unwrap();
    let d = report.trials[0].dynamic_result.as_ref().unwrap();
    // Logs are written with 6 decimals; the statistics survive that.
    let t = &session.trials[0];
    let seed = t.labels.as_ref().unwrap().seed;
    let direct = evaluate_scenario(&scenarios[0].clone().with_seed(seed), &cfg()).unwrap();
    let dd = direct.report.dynamic_result.unwrap();
    assert!((d.stats.sigma.d3 - dd.stats.sigma.d3).abs() < 1e-4);
    assert!((d.stats.rms.d3 - dd.stats.rms.d3).abs() < 1e-4);
}

#[test]
fn bundle_report_orders_trials_as_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let scenarios = resolve_scenarios("bundle-32").unwrap();
    let paths = write_session(tmp.path(), "bundle-32", &scenarios, 1).unwrap();
    let session = parse_manifest(&paths[0]).unwrap();
    let a = evaluate_session(&session, &cfg()).unwrap();
    let b = evaluate_session(&session, &cfg()).unwrap();
    assert_eq!(a, b);
    let ids: Vec<&str> = a.trials.iter().map(|t| t.trial_id.as_str()).collect();
    let expected: Vec<&str> = scenarios
        .iter()
        .map(|s| s.template.trial_id.as_str())
        .collect();
    assert_eq!(ids, expected);
    assert!(!a.gate_passed());
    for t in &a.trials {
        if let Some(d) = &t.dynamic_result {
            assert!(d.stats.sigma.d3 <= d.stats.rms.d3 + 1e-12, "{}", t.trial_id);
            assert!(d.stats.max.d3 >= d.stats.rms.d3, "{}", t.trial_id);
        }
    }
}
