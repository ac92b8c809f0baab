mod common;

use common::{dubins, truth, truth_handle};
use reachcert::rollout::default_dt;
use reachcert::validate::{
    containment_check, estimate_violation_rate, min_l_histogram, volume_fractions, RecoveredSet,
};
use reachcert::verify::scenario_verify;
use reachcert::{Mode, Perturbation, ValueFunctionHandle, VerifyConfig};

#[test]
fn ground_truth_certificate_validates() {
    let sys = dubins(Mode::Avoid);
    let vf = truth_handle(Mode::Avoid);
    let mut cfg = VerifyConfig::new(0.05, 1e-3, 100);
    cfg.dt = Some(0.005);
    let r = scenario_verify(&vf, &sys, &cfg).unwrap();
    let set = RecoveredSet::from_result(&r);
    let est = estimate_violation_rate(&vf, &sys, &set, 5000, 200, default_dt(&sys), 1000).unwrap();
    assert!(est.violation_rate.unwrap() <= 0.05);
    let vol = volume_fractions(&vf, &sys, &set, 20_000, 200).unwrap();
    assert!(vol.percent_reduction <= 0.05, "{vol:?}");
    if r.delta_hat >= 0.0 {
        assert_eq!(vol.nesting_violations, 0);
    }
    let c = containment_check(&vf, &set, &truth(Mode::Avoid), &sys, 20_000, 200).unwrap();
    assert_eq!(c.violations_outside_band, 0, "{c:?}");
    assert!(c.violations as f64 <= 0.005 * c.truth_violating as f64);
}

#[test]
fn minus_infinity_level_with_exact_truth() {
    let sys = dubins(Mode::Avoid);
    let vf = truth_handle(Mode::Avoid);
    let zero = RecoveredSet::level(Mode::Avoid, 0.0);
    let c = containment_check(&vf, &zero, &truth(Mode::Avoid), &sys, 20_000, 3).unwrap();
    assert_eq!(c.violations, 0);
    let everything = RecoveredSet::level(Mode::Avoid, f64::NEG_INFINITY);
    let c = containment_check(&vf, &everything, &truth(Mode::Avoid), &sys, 20_000, 3).unwrap();
    assert_eq!(c.violations, c.truth_violating);
}

#[test]
fn optimistic_levels_are_caught_by_validation() {
    let sys = dubins(Mode::Avoid);
    let vf = ValueFunctionHandle::perturb(truth_handle(Mode::Avoid), Perturbation::UniformBias { bias: -0.2 }).unwrap();
    // the biased function's level −0.3 is the true level −0.1, which admits unsafe states
    let naive = RecoveredSet::level(Mode::Avoid, -0.3);
    let est = estimate_violation_rate(&vf, &sys, &naive, 5000, 1, default_dt(&sys), 1000).unwrap();
    assert!(est.exceeds(0.01, 4.0), "{est:?}");
    let hist = min_l_histogram(&est.costs, &[-1.0, 0.0, 3.0]).unwrap();
    assert_eq!(hist.counts[0] + hist.underflow, est.violation_count);
}

#[test]
fn empty_certificate_is_flagged() {
    let sys = dubins(Mode::Avoid);
    let vf = truth_handle(Mode::Avoid);
    let est = estimate_violation_rate(&vf, &sys, &RecoveredSet::level(Mode::Avoid, f64::INFINITY), 100, 1, 0.01, 10)
        .unwrap();
    assert!(est.empty_recovered_set);
    assert!(est.violation_rate.is_none());
}
