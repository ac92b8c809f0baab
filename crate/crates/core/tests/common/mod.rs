//! Shared fixtures and independent oracles for the integration tests.
#![allow(dead_code)]

pub mod oracle;

use std::sync::{Arc, OnceLock};

use reachcert::groundtruth::{solve_hjb_vi, Grid};
use reachcert::{GridValueFunction, Mode, SystemModel, ValueFunctionHandle};

pub const V: f64 = 0.6;
pub const U_MAX: f64 = 1.1;
pub const RADIUS: f64 = 0.25;

pub fn dubins(mode: Mode) -> SystemModel {
    SystemModel::dubins3d(V, -U_MAX, U_MAX, RADIUS).unwrap().with_mode(mode)
}

/// Dubins ground truth on an `n³` grid at half the CFL step.
pub fn solve_dubins(mode: Mode, n: usize) -> GridValueFunction {
    let sys = dubins(mode);
    let grid = Grid::for_system(&sys, &[n, n, n]).unwrap();
    let dt = 0.5 * grid.cfl_limit(&sys.dissipation());
    solve_hjb_vi(&sys, &grid, dt).unwrap()
}

/// 61³ avoid and reach solutions, computed once per test binary.
pub fn truth(mode: Mode) -> Arc<GridValueFunction> {
    static AVOID: OnceLock<Arc<GridValueFunction>> = OnceLock::new();
    static REACH: OnceLock<Arc<GridValueFunction>> = OnceLock::new();
    let cell = match mode {
        Mode::Avoid => &AVOID,
        Mode::Reach => &REACH,
    };
    cell.get_or_init(|| Arc::new(solve_dubins(mode, 61))).clone()
}

pub fn truth_handle(mode: Mode) -> ValueFunctionHandle {
    ValueFunctionHandle::grid(truth(mode), &dubins(mode)).unwrap()
}
