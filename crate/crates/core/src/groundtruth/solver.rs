use rayon::prelude::*;

use super::{Grid, GridValueFunction, MAX_GRID_DIM};
use crate::dynamics::SystemModel;
use crate::error::{Error, Result};

/// Controls for [`solve_hjb_vi_with`].
#[derive(Clone, Debug)]
pub struct SolverOptions {
    /// Requested time step; the solver uses `T / ceil(T / dt)`.
    pub dt: f64,
    /// Approximate number of stored time slices (including `t = 0` and `T`).
    pub slices: usize,
    /// Cap on stored plus working `f64` values.
    pub max_values: usize,
}

impl SolverOptions {
    pub fn new(dt: f64) -> Self {
        Self {
            dt,
            slices: 11,
            max_values: 1 << 26,
        }
    }
}

/// [`solve_hjb_vi_with`] using default slice count and memory cap.
pub fn solve_hjb_vi(system: &SystemModel, grid: &Grid, dt: f64) -> Result<GridValueFunction> {
    solve_hjb_vi_with(system, grid, &SolverOptions::new(dt))
}

/// Backward Lax–Friedrichs integration of the HJB variational inequality
/// from `t = T` to `t = 0`.
pub fn solve_hjb_vi_with(system: &SystemModel, grid: &Grid, opts: &SolverOptions) -> Result<GridValueFunction> {
    let dim = system.state_dim();
    if dim > MAX_GRID_DIM {
        return Err(Error::Dimension(dim));
    }
    if grid.dim() != dim {
        return Err(Error::InvalidParameter(format!(
            "grid has {} dimensions, system has {dim}",
            grid.dim()
        )));
    }
    if system.control_dim() > 8 {
        return Err(Error::InvalidParameter("grid solver supports at most 8 controls".into()));
    }
    if !(opts.dt.is_finite() && opts.dt > 0.0) {
        return Err(Error::InvalidParameter(format!("time step must be positive, got {}", opts.dt)));
    }
    let alpha = system.dissipation();
    let limit = grid.cfl_limit(&alpha);
    if opts.dt > limit {
        return Err(Error::Cfl { dt: opts.dt, limit });
    }

    let horizon = system.horizon();
    let steps = ((horizon / opts.dt) - 1e-9).ceil().max(1.0) as usize;
    let dt = horizon / steps as f64;
    let every = steps.div_ceil(opts.slices.max(2) - 1).max(1);
    let stored = steps / every + 1 + usize::from(!steps.is_multiple_of(every));

    let nodes = grid.node_count();
    let requested = nodes.saturating_mul(stored + 2);
    if requested > opts.max_values {
        return Err(Error::GridTooLarge {
            requested,
            cap: opts.max_values,
        });
    }

    let target: Vec<f64> = (0..nodes)
        .into_par_iter()
        .map(|i| {
            let mut x = [0.0; MAX_GRID_DIM];
            grid.node(i, &mut x[..dim]);
            system.target_value(&x[..dim])
        })
        .collect();

    let mut current = target.clone();
    let mut next = vec![0.0; nodes];
    // slices collected from t = T backward
    let mut slices: Vec<(f64, Vec<f64>)> = vec![(horizon, current.clone())];

    let h: Vec<f64> = (0..dim).map(|d| grid.spacing(d)).collect();
    for step in 1..=steps {
        next.par_iter_mut().enumerate().for_each(|(i, out)| {
            let mut idx = [0usize; MAX_GRID_DIM];
            let mut x = [0.0; MAX_GRID_DIM];
            let mut p = [0.0; MAX_GRID_DIM];
            let mut scratch = [0.0; MAX_GRID_DIM];
            let mut coefs = [0.0; 8];
            grid.unravel(i, &mut idx[..dim]);
            let mut diss = 0.0;
            for d in 0..dim {
                x[d] = grid.coord(d, idx[d]);
                let s = grid.stride(d);
                let n = grid.counts()[d];
                let v = current[i];
                let (minus, plus) = if grid.is_periodic(d) {
                    let lo = i - idx[d] * s + ((idx[d] + n - 1) % n) * s;
                    let hi = i - idx[d] * s + ((idx[d] + 1) % n) * s;
                    ((v - current[lo]) / h[d], (current[hi] - v) / h[d])
                } else if idx[d] == 0 {
                    let q = (current[i + s] - v) / h[d];
                    (q, q)
                } else if idx[d] == n - 1 {
                    let q = (v - current[i - s]) / h[d];
                    (q, q)
                } else {
                    ((v - current[i - s]) / h[d], (current[i + s] - v) / h[d])
                };
                p[d] = 0.5 * (minus + plus);
                diss += alpha[d] * 0.5 * (plus - minus);
            }
            let ham = system.hamiltonian(
                &x[..dim],
                &p[..dim],
                &mut scratch[..dim],
                &mut coefs[..system.control_dim()],
            );
            *out = (current[i] + dt * (ham + diss)).min(target[i]);
        });
        std::mem::swap(&mut current, &mut next);
        if step % every == 0 || step == steps {
            let t = if step == steps {
                0.0
            } else {
                horizon - step as f64 * dt
            };
            slices.push((t, current.clone()));
        }
    }

    slices.reverse();
    let times = slices.iter().map(|(t, _)| *t).collect();
    let mut values = Vec::with_capacity(slices.len() * nodes);
    for (_, s) in slices {
        values.extend_from_slice(&s);
    }
    log::debug!("solved {} on {nodes} nodes with {steps} steps of {dt}", system.name());
    GridValueFunction::from_parts(grid.clone(), system.mode(), times, values, true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::Mode;
    use std::f64::consts::PI;

    #[test]
    fn zero_dynamics_keeps_target() {
        let sys = SystemModel::stationary(3, 0.5).unwrap();
        let grid = Grid::for_system(&sys, &[9, 9, 9]).unwrap();
        let gvf = solve_hjb_vi(&sys, &grid, 0.1).unwrap();
        let mut x = [0.0; 3];
        for i in 0..grid.node_count() {
            grid.node(i, &mut x);
            assert_eq!(gvf.slice(0)[i], sys.target_value(&x));
        }
    }

    #[test]
    fn cfl_and_dimension_errors() {
        let sys = SystemModel::dubins3d(0.6, -1.1, 1.1, 0.25).unwrap();
        let grid = Grid::for_system(&sys, &[21, 21, 21]).unwrap();
        let limit = grid.cfl_limit(&sys.dissipation());
        assert!(matches!(solve_hjb_vi(&sys, &grid, 2.0 * limit), Err(Error::Cfl { .. })));
        let big = SystemModel::rocket6d(250.0, 9.81).unwrap();
        let g6 = Grid::for_system(&big, &[3; 6]).unwrap();
        assert!(matches!(solve_hjb_vi(&big, &g6, 1e-3), Err(Error::Dimension(6))));
        let mut opts = SolverOptions::new(0.9 * limit);
        opts.max_values = 1000;
        assert!(matches!(solve_hjb_vi_with(&sys, &grid, &opts), Err(Error::GridTooLarge { .. })));
    }

    #[test]
    fn dubins_coarse_solution_properties() {
        let sys = SystemModel::dubins3d(0.6, -1.1, 1.1, 0.25).unwrap();
        let grid = Grid::for_system(&sys, &[31, 31, 31]).unwrap();
        let dt = 0.9 * grid.cfl_limit(&sys.dissipation());
        for mode in [Mode::Avoid, Mode::Reach] {
            let sys = sys.clone().with_mode(mode);
            let gvf = solve_hjb_vi(&sys, &grid, dt).unwrap();
            assert_eq!(gvf.times()[0], 0.0);
            assert_eq!(*gvf.times().last().unwrap(), 1.0);
            assert!(gvf.times().len() >= 3 && gvf.times().len() <= 12);
            let last = gvf.slice(gvf.times().len() - 1);
            let mut x = [0.0; 3];
            for k in 0..gvf.times().len() {
                for i in 0..grid.node_count() {
                    grid.node(i, &mut x);
                    let l = sys.target_value(&x);
                    assert!(gvf.slice(k)[i] <= l + 1e-9);
                    if k + 1 == gvf.times().len() {
                        assert_eq!(last[i], l);
                    }
                }
            }
            // the target disk stays inside the zero sublevel set at t = 0
            for th in [-PI, -1.0, 0.5, 2.0] {
                assert!(gvf.value(&[0.1, -0.05, th], 0.0).unwrap() <= 0.0);
            }
        }
    }
}
