mod common;

use common::oracle::DubinsOracle;
use common::{dubins, truth, truth_handle};
use reachcert::rollout::{batch_cost, cost_from, default_dt, rollout_cost, simulate};
use reachcert::sampling::uniform_states;
use reachcert::valuefn::dubins_default_bump;
use reachcert::{CounterRng, Mode, Perturbation, ValueFunctionHandle};

#[test]
fn ground_truth_policy_turns_away_from_the_obstacle() {
    let sys = dubins(Mode::Avoid);
    let vf = truth_handle(Mode::Avoid);
    let x0 = [0.9, 0.0, std::f64::consts::PI];
    assert!(DubinsOracle::default().avoid_value(x0) > 0.0);
    let traj = simulate(&sys, &vf, &x0, 0.0, default_dt(&sys)).unwrap();
    let c = rollout_cost(&traj, Mode::Avoid);
    assert!(c.j > 0.0 && c.safe, "{c:?}");
    assert!(traj.controls.iter().any(|u| u[0] != 0.0));
}

#[test]
fn cost_never_exceeds_the_true_value() {
    let sys = dubins(Mode::Avoid);
    let gt = truth(Mode::Avoid);
    let base = truth_handle(Mode::Avoid);
    let handles = [
        base.clone(),
        ValueFunctionHandle::perturb(base.clone(), Perturbation::UniformBias { bias: -0.2 }).unwrap(),
        ValueFunctionHandle::perturb(base, dubins_default_bump()).unwrap(),
    ];
    let states = uniform_states(&sys, &CounterRng::new(31), 10_000);
    for vf in &handles {
        let costs = batch_cost(&sys, vf, &states, default_dt(&sys)).unwrap();
        for (x, c) in states.iter().zip(&costs) {
            let v = gt.value(x, 0.0).unwrap();
            assert!(c.j <= v + 0.05, "{x:?}: J {} > V {v}", c.j);
        }
    }
}

#[test]
fn ground_truth_policy_is_consistent_with_its_value() {
    let sys = dubins(Mode::Avoid);
    let vf = truth_handle(Mode::Avoid);
    let states = uniform_states(&sys, &CounterRng::new(2), 1000);
    let costs = batch_cost(&sys, &vf, &states, default_dt(&sys)).unwrap();
    let bad = states
        .iter()
        .zip(&costs)
        .filter(|(x, c)| vf.value(x, 0.0) > 0.0 && c.j <= 0.0)
        .count();
    assert!(bad < 10, "{bad}");
}

#[test]
fn halving_the_step_barely_moves_the_cost() {
    let sys = dubins(Mode::Avoid);
    let vf = truth_handle(Mode::Avoid);
    let states = uniform_states(&sys, &CounterRng::new(8), 1000);
    let dt = default_dt(&sys);
    let coarse = batch_cost(&sys, &vf, &states, dt).unwrap();
    let fine = batch_cost(&sys, &vf, &states, dt / 2.0).unwrap();
    let moved: Vec<f64> = coarse.iter().zip(&fine).map(|(a, b)| (a.j - b.j).abs()).collect();
    let worst = moved.iter().cloned().fold(0.0, f64::max);
    assert!(worst < 0.01, "max |ΔJ| = {worst}");
}

#[test]
fn batch_results_do_not_depend_on_worker_count() {
    let sys = dubins(Mode::Avoid);
    let vf = truth_handle(Mode::Avoid);
    let states = uniform_states(&sys, &CounterRng::new(4), 300);
    let run = |n| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .unwrap()
            .install(|| batch_cost(&sys, &vf, &states, 0.005).unwrap())
    };
    let a = run(1);
    let b = run(4);
    assert_eq!(a, b);
    for (x, c) in states.iter().zip(&a).take(20) {
        assert_eq!(cost_from(&sys, &vf, x, 0.005).unwrap(), *c);
    }
}

#[test]
fn rocket_and_multivehicle_rollouts_stay_finite() {
    use reachcert::valuefn::analytic_by_name;
    use reachcert::SystemModel;
    for sys in [
        SystemModel::rocket6d(250.0, 9.81).unwrap(),
        SystemModel::multivehicle9d(0.6, -1.1, 1.1, 0.25).unwrap(),
    ] {
        let name = if sys.state_dim() == 6 { "ballistic_landing" } else { "straight_line_separation" };
        let vf = analytic_by_name(name, &sys).unwrap();
        let states = uniform_states(&sys, &CounterRng::new(1), 200);
        let costs = batch_cost(&sys, &vf, &states, default_dt(&sys)).unwrap();
        assert!(costs.iter().all(|c| c.j.is_finite() && !c.nonfinite));
    }
}
