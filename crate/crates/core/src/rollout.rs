//! Closed-loop simulation under the induced policy and the trajectory cost
//! `J(x, t) = min_τ l(ξ(τ))`.
//!
//! Integration is fixed-step RK4 with the control held constant over each
//! step (recomputed from the policy at the step start). The minimum is taken
//! over the step-end samples, including the initial state. Non-periodic
//! coordinates that leave the state box are clamped and the trajectory is
//! flagged; it is not treated as unsafe.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{Mode, SystemKind, SystemModel};
use crate::error::{Error, Result};
use crate::valuefn::{induced_policy, ValueFunctionHandle};

/// Default step: `0.0025·T` for the Dubins family, `0.01·T` for the rocket.
pub fn default_dt(system: &SystemModel) -> f64 {
    match system.kind() {
        SystemKind::Rocket6d { .. } => 0.01 * system.horizon(),
        _ => 0.0025 * system.horizon(),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub controls: Vec<Vec<f64>>,
    pub l_values: Vec<f64>,
    /// Some coordinate left the state box and was clamped.
    pub clamped: bool,
    /// Integration produced a non-finite state and stopped early.
    pub nonfinite: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RolloutCost {
    /// Minimum of `l` over the stored samples; `−∞` (avoid) or `+∞` (reach)
    /// when the integration diverged.
    pub j: f64,
    pub argmin_time: f64,
    pub safe: bool,
    pub clamped: bool,
    pub nonfinite: bool,
}

fn check_inputs(system: &SystemModel, x0: &[f64], t0: f64, dt: f64) -> Result<()> {
    if x0.len() != system.state_dim() {
        return Err(Error::InvalidParameter(format!(
            "initial state has {} coordinates, expected {}",
            x0.len(),
            system.state_dim()
        )));
    }
    if !system.in_box(x0) {
        return Err(Error::InvalidParameter(format!("initial state {x0:?} lies outside the state box")));
    }
    if !(t0 >= 0.0 && t0 < system.horizon()) {
        return Err(Error::InvalidParameter(format!(
            "start time {t0} must lie in [0, {})",
            system.horizon()
        )));
    }
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::InvalidParameter(format!("time step must be positive, got {dt}")));
    }
    Ok(())
}

/// Shared integrator. `record` receives `(t, x, u_applied_from_t, l)`.
fn integrate(
    system: &SystemModel,
    vf: &ValueFunctionHandle,
    x0: &[f64],
    t0: f64,
    dt: f64,
    mut record: impl FnMut(f64, &[f64], Option<&[f64]>, f64),
) -> RolloutCost {
    let n = system.state_dim();
    let m = system.control_dim();
    let span = system.horizon() - t0;
    let steps = (span / dt - 1e-9).ceil().max(1.0) as usize;
    let h = span / steps as f64;

    let mut x = x0.to_vec();
    system.wrap(&mut x);
    let mut u = vec![0.0; m];
    let (mut k1, mut k2, mut k3, mut k4) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let mut tmp = vec![0.0; n];

    let mut l = system.target_value(&x);
    let mut best = (l, t0);
    let mut clamped = false;
    let mut nonfinite = false;

    for i in 0..steps {
        let t = t0 + i as f64 * h;
        induced_policy(vf, system, &x, t, &mut u);
        record(t, &x, Some(&u), l);

        system.flow(&x, &u, &mut k1);
        for d in 0..n {
            tmp[d] = x[d] + 0.5 * h * k1[d];
        }
        system.flow(&tmp, &u, &mut k2);
        for d in 0..n {
            tmp[d] = x[d] + 0.5 * h * k2[d];
        }
        system.flow(&tmp, &u, &mut k3);
        for d in 0..n {
            tmp[d] = x[d] + h * k3[d];
        }
        system.flow(&tmp, &u, &mut k4);
        for d in 0..n {
            x[d] += h / 6.0 * (k1[d] + 2.0 * k2[d] + 2.0 * k3[d] + k4[d]);
        }
        if x.iter().any(|v| !v.is_finite()) {
            log::warn!("non-finite state after step {i} from {x0:?}; trajectory aborted");
            nonfinite = true;
            break;
        }
        system.wrap(&mut x);
        clamped |= system.clamp(&mut x);

        l = system.target_value(&x);
        let t_next = if i + 1 == steps {
            system.horizon()
        } else {
            t0 + (i + 1) as f64 * h
        };
        if l < best.0 {
            best = (l, t_next);
        }
        if i + 1 == steps {
            record(t_next, &x, None, l);
        }
    }

    let mode = system.mode();
    let j = if nonfinite {
        match mode {
            Mode::Avoid => f64::NEG_INFINITY,
            Mode::Reach => f64::INFINITY,
        }
    } else {
        best.0
    };
    RolloutCost {
        j,
        argmin_time: best.1,
        safe: !nonfinite && mode.is_safe_cost(j),
        clamped,
        nonfinite,
    }
}

/// Simulates the closed loop from `(x0, t0)` to the horizon, keeping every sample.
pub fn simulate(system: &SystemModel, vf: &ValueFunctionHandle, x0: &[f64], t0: f64, dt: f64) -> Result<Trajectory> {
    check_inputs(system, x0, t0, dt)?;
    let mut traj = Trajectory {
        times: Vec::new(),
        states: Vec::new(),
        controls: Vec::new(),
        l_values: Vec::new(),
        clamped: false,
        nonfinite: false,
    };
    let cost = integrate(system, vf, x0, t0, dt, |t, x, u, l| {
        traj.times.push(t);
        traj.states.push(x.to_vec());
        traj.l_values.push(l);
        if let Some(u) = u {
            traj.controls.push(u.to_vec());
        }
    });
    // an aborted run records its controls but not a final state
    if traj.controls.len() == traj.states.len() {
        traj.controls.pop();
    }
    traj.clamped = cost.clamped;
    traj.nonfinite = cost.nonfinite;
    Ok(traj)
}

/// Cost of a recorded trajectory.
pub fn rollout_cost(traj: &Trajectory, mode: Mode) -> RolloutCost {
    assert!(!traj.l_values.is_empty(), "rollout_cost needs a non-empty trajectory");
    let (mut j, mut at) = (traj.l_values[0], traj.times[0]);
    for (&l, &t) in traj.l_values.iter().zip(&traj.times).skip(1) {
        if l < j {
            j = l;
            at = t;
        }
    }
    if traj.nonfinite {
        j = match mode {
            Mode::Avoid => f64::NEG_INFINITY,
            Mode::Reach => f64::INFINITY,
        };
    }
    RolloutCost {
        j,
        argmin_time: at,
        safe: !traj.nonfinite && mode.is_safe_cost(j),
        clamped: traj.clamped,
        nonfinite: traj.nonfinite,
    }
}

/// `J(x0, 0)` without storing the trajectory. Bit-identical to
/// `rollout_cost(&simulate(..))`.
pub fn cost_from(system: &SystemModel, vf: &ValueFunctionHandle, x0: &[f64], dt: f64) -> Result<RolloutCost> {
    check_inputs(system, x0, 0.0, dt)?;
    Ok(integrate(system, vf, x0, 0.0, dt, |_, _, _, _| {}))
}

/// Costs for many initial states at `t = 0`, in input order.
pub fn batch_cost(system: &SystemModel, vf: &ValueFunctionHandle, states: &[Vec<f64>], dt: f64) -> Result<Vec<RolloutCost>> {
    states
        .par_iter()
        .map(|x| cost_from(system, vf, x, dt))
        .collect()
}

/// Writes `time, x0.., u0.., l` rows. The final row has empty control cells.
pub fn write_trajectory_csv(traj: &Trajectory, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    let n = traj.states.first().map_or(0, Vec::len);
    let m = traj.controls.first().map_or(0, Vec::len);
    let mut header = vec!["time".to_string()];
    header.extend((0..n).map(|d| format!("x{d}")));
    header.extend((0..m).map(|d| format!("u{d}")));
    header.push("l".into());
    out.push_str(&header.join(","));
    out.push('\n');
    for (k, (t, x)) in traj.times.iter().zip(&traj.states).enumerate() {
        let mut row = vec![t.to_string()];
        row.extend(x.iter().map(f64::to_string));
        match traj.controls.get(k) {
            Some(u) => row.extend(u.iter().map(f64::to_string)),
            None => row.extend(std::iter::repeat_n(String::new(), m)),
        }
        row.push(traj.l_values[k].to_string());
        out.push_str(&row.join(","));
        out.push('\n');
    }
    std::fs::File::create(path)
        .and_then(|mut f| f.write_all(out.as_bytes()))
        .map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::valuefn::{analytic_by_name, ValueFunctionHandle};
    use std::f64::consts::PI;

    fn dubins() -> SystemModel {
        SystemModel::dubins3d(0.6, -1.1, 1.1, 0.25).unwrap()
    }

    fn target(sys: &SystemModel) -> ValueFunctionHandle {
        analytic_by_name("target", sys).unwrap()
    }

    #[test]
    fn stationary_trajectory_is_constant() {
        let sys = SystemModel::stationary(2, 0.3).unwrap();
        let vf = target(&sys);
        let x0 = [0.5, -0.2];
        let traj = simulate(&sys, &vf, &x0, 0.0, 0.1).unwrap();
        assert!(traj.states.iter().all(|s| s == &x0.to_vec()));
        let c = rollout_cost(&traj, sys.mode());
        assert_eq!(c.j, sys.target_value(&x0));
        assert_eq!(traj.times.len(), 11);
        assert_eq!(traj.controls.len(), 10);
        assert_eq!(*traj.times.last().unwrap(), 1.0);
    }

    #[test]
    fn starting_inside_obstacle_is_unsafe() {
        let sys = dubins();
        let vf = target(&sys);
        let c = cost_from(&sys, &vf, &[0.1, 0.0, 1.0], default_dt(&sys)).unwrap();
        assert!(c.j < 0.0 && !c.safe);
    }

    #[test]
    fn cost_examples() {
        let traj = Trajectory {
            times: vec![0.0, 0.5, 1.0],
            states: vec![vec![0.0]; 3],
            controls: vec![vec![0.0]; 2],
            l_values: vec![0.5, 0.2, 0.4],
            clamped: false,
            nonfinite: false,
        };
        let c = rollout_cost(&traj, Mode::Avoid);
        assert_eq!((c.j, c.argmin_time, c.safe), (0.2, 0.5, true));
        let t2 = Trajectory {
            l_values: vec![0.1, -0.0001],
            times: vec![0.0, 1.0],
            states: vec![vec![0.0]; 2],
            controls: vec![vec![0.0]],
            ..traj.clone()
        };
        assert!(!rollout_cost(&t2, Mode::Avoid).safe);
        assert!(!rollout_cost(&traj, Mode::Reach).safe);
        assert!(rollout_cost(&t2, Mode::Reach).safe);
    }

    #[test]
    fn simulate_and_cost_from_agree_bitwise() {
        let sys = dubins();
        let vf = target(&sys);
        let x0 = [0.7, -0.4, 2.0];
        let dt = default_dt(&sys);
        let a = rollout_cost(&simulate(&sys, &vf, &x0, 0.0, dt).unwrap(), sys.mode());
        let b = cost_from(&sys, &vf, &x0, dt).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn trajectory_invariants_and_wrap() {
        let sys = dubins();
        let vf = target(&sys);
        let traj = simulate(&sys, &vf, &[0.9, 0.9, 3.0], 0.3, 0.03).unwrap();
        assert_eq!(traj.times[0], 0.3);
        assert!((traj.times.last().unwrap() - 1.0).abs() < 0.015);
        assert_eq!(traj.states.len(), traj.times.len());
        assert_eq!(traj.controls.len(), traj.times.len() - 1);
        assert!(traj.states.iter().all(|s| s[2] >= -PI && s[2] < PI));
        assert!(traj.states.iter().all(|s| sys.in_box(s)));
    }

    #[test]
    fn bad_inputs_rejected() {
        let sys = dubins();
        let vf = target(&sys);
        assert!(simulate(&sys, &vf, &[2.0, 0.0, 0.0], 0.0, 0.01).is_err());
        assert!(simulate(&sys, &vf, &[0.0, 0.0, 0.0], 1.0, 0.01).is_err());
        assert!(simulate(&sys, &vf, &[0.0, 0.0, 0.0], 0.0, 0.0).is_err());
    }

    #[test]
    fn batch_is_ordered_and_deterministic() {
        let sys = dubins();
        let vf = target(&sys);
        assert!(batch_cost(&sys, &vf, &[], 0.01).unwrap().is_empty());
        let x = vec![0.6, 0.1, -2.0];
        let costs = batch_cost(&sys, &vf, &vec![x.clone(); 5], 0.01).unwrap();
        assert!(costs.windows(2).all(|w| w[0] == w[1]));
        let mixed = vec![vec![0.0, 0.0, 0.0], x.clone()];
        let c = batch_cost(&sys, &vf, &mixed, 0.01).unwrap();
        assert!(c[0].j < 0.0 && c[0].j == -0.25);
    }

    #[test]
    fn trajectory_csv_export() {
        let sys = dubins();
        let vf = target(&sys);
        let traj = simulate(&sys, &vf, &[0.5, 0.5, 0.0], 0.0, 0.25).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.csv");
        write_trajectory_csv(&traj, &p).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert_eq!(text.lines().next().unwrap(), "time,x0,x1,x2,u0,l");
        assert_eq!(text.lines().count(), 1 + traj.times.len());
    }
}
