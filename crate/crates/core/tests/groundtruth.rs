mod common;

use common::oracle::DubinsOracle;
use common::{dubins, solve_dubins};
use reachcert::groundtruth::{read_grid_file, solve_hjb_vi, write_grid_file, write_slice_csv, Grid};
use reachcert::sampling::uniform_states;
use reachcert::{CounterRng, Mode, SystemModel};

#[test]
fn zero_dynamics_keep_the_target_function() {
    for dim in 1..=3 {
        let sys = SystemModel::stationary(dim, 0.4).unwrap();
        let grid = Grid::for_system(&sys, &vec![9; dim]).unwrap();
        let gvf = solve_hjb_vi(&sys, &grid, 0.1).unwrap();
        let mut x = vec![0.0; dim];
        for k in 0..grid.node_count() {
            grid.node(k, &mut x);
            assert_eq!(gvf.slice(0)[k], sys.target_value(&x));
        }
    }
}

#[test]
fn coarse_solution_brackets_and_matches_the_oracle() {
    let gvf = solve_dubins(Mode::Avoid, 31);
    let sys = dubins(Mode::Avoid);
    let oracle = DubinsOracle::default();
    let states = uniform_states(&sys, &CounterRng::new(17), 400);
    let mut agree = 0;
    for x in &states {
        let v = gvf.value(x, 0.0).unwrap();
        let l = sys.target_value(x);
        // V lies between the straight-at-the-obstacle bound and l, up to the
        // interpolation error of the convex l between nodes
        assert!(v <= l + gvf.grid().spacing(0), "{x:?}: {v} vs {l}");
        assert!(v >= l - 0.6 - 0.05, "{x:?}: {v} vs {l}");
        let o = oracle.avoid_value([x[0], x[1], x[2]]);
        if (o > 0.0) == (v > 0.0) || gvf.within_cell_of_zero_level(x, 0.0).unwrap() {
            agree += 1;
        }
    }
    assert!(agree >= 390, "{agree}/400");
}

#[test]
fn far_from_obstacle_value_is_bounded_by_the_straight_run() {
    let gvf = solve_dubins(Mode::Avoid, 31);
    // heading straight at the obstacle from (1, 0): l − vT is the worst case
    // and turning away does strictly better
    let x = [1.0, 0.0, std::f64::consts::PI];
    let v = gvf.value(&x, 0.0).unwrap();
    let oracle = DubinsOracle::default().avoid_value(x);
    assert!(v >= 0.75 - 0.6 - 0.02);
    assert!(v <= 0.75);
    assert!((v - oracle).abs() < 0.1, "{v} vs oracle {oracle}");
}

#[test]
fn reach_solution_contains_target_and_matches_oracle_sign() {
    let gvf = solve_dubins(Mode::Reach, 31);
    let sys = dubins(Mode::Reach);
    let oracle = DubinsOracle::default();
    assert!(gvf.value(&[0.0, 0.0, 0.0], 0.0).unwrap() <= -0.25 + 1e-9);
    // pointing at the target from 0.6 away: reachable
    assert!(gvf.value(&[-0.6, 0.0, 0.0], 0.0).unwrap() < 0.0);
    assert!(oracle.reach_value([-0.6, 0.0, 0.0]) < 0.0);
    // pointing away from the target from the corner: unreachable
    assert!(gvf.value(&[0.95, 0.95, 0.8], 0.0).unwrap() > 0.0);
    let states = uniform_states(&sys, &CounterRng::new(5), 300);
    let agree = states
        .iter()
        .filter(|x| {
            let v = gvf.value(x, 0.0).unwrap();
            (oracle.reach_value([x[0], x[1], x[2]]) <= 0.0) == (v <= 0.0)
                || gvf.within_cell_of_zero_level(x, 0.0).unwrap()
        })
        .count();
    assert!(agree >= 290, "{agree}/300");
}

#[test]
fn files_and_slices() {
    let gvf = solve_dubins(Mode::Avoid, 21);
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("v.grid");
    write_grid_file(&gvf, &p).unwrap();
    let back = read_grid_file(&p).unwrap();
    assert_eq!(back, gvf);
    let again = solve_dubins(Mode::Avoid, 21);
    let q = dir.path().join("w.grid");
    write_grid_file(&again, &q).unwrap();
    assert_eq!(std::fs::read(&p).unwrap(), std::fs::read(&q).unwrap());
    let csv = dir.path().join("s.csv");
    write_slice_csv(&gvf, 0.0, (0, 1), &[0.0, 0.0, 0.0], &csv).unwrap();
    assert_eq!(std::fs::read_to_string(&csv).unwrap().lines().count(), 1 + 21 * 21);
}

#[test]
fn high_dimensional_systems_are_refused() {
    let sys = SystemModel::multivehicle9d(0.6, -1.1, 1.1, 0.25).unwrap();
    let grid = Grid::new(vec![-1.0; 4], vec![1.0; 4], vec![3; 4], vec![false; 4]).unwrap();
    assert!(matches!(solve_hjb_vi(&sys, &grid, 0.01), Err(reachcert::Error::Dimension(9))));
}
