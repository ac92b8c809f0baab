//! Closed-form candidate value functions for the benchmark systems.

use std::fmt::Debug;
use std::sync::Arc;

use super::ValueFunctionHandle;
use crate::dynamics::{SystemKind, SystemModel, TargetFunction};
use crate::error::{Error, Result};

/// A value function given by a formula.
pub trait AnalyticValue: Send + Sync + Debug {
    fn name(&self) -> &str;

    fn state_dim(&self) -> usize;

    fn value(&self, x: &[f64], t: f64) -> f64;

    /// Writes the spatial gradient and returns `true`, or returns `false` to
    /// request finite differences.
    fn gradient(&self, _x: &[f64], _t: f64, _out: &mut [f64]) -> bool {
        false
    }
}

/// `Ṽ(x, t) = l(x)`: the value function of a system that cannot move.
#[derive(Debug)]
pub struct TargetOnly {
    target: TargetFunction,
    dim: usize,
}

impl TargetOnly {
    pub fn new(system: &SystemModel) -> Self {
        Self {
            target: system.target().clone(),
            dim: system.state_dim(),
        }
    }
}

impl AnalyticValue for TargetOnly {
    fn name(&self) -> &str {
        "target"
    }

    fn state_dim(&self) -> usize {
        self.dim
    }

    fn value(&self, x: &[f64], _t: f64) -> f64 {
        self.target.value(x)
    }

    fn gradient(&self, x: &[f64], _t: f64, out: &mut [f64]) -> bool {
        self.target.gradient(x, out);
        true
    }
}

/// Multivehicle candidate: closest approach of every vehicle pair when all
/// vehicles hold their heading for the remaining horizon, minus the
/// collision radius.
#[derive(Debug, Clone)]
pub struct StraightLineSeparation {
    speed: f64,
    radius: f64,
    horizon: f64,
}

impl StraightLineSeparation {
    pub fn new(system: &SystemModel) -> Result<Self> {
        match *system.kind() {
            SystemKind::Multivehicle9d { v, radius, .. } => Ok(Self {
                speed: v,
                radius,
                horizon: system.horizon(),
            }),
            _ => Err(Error::InvalidParameter(format!(
                "straight-line separation needs multivehicle9d, got {}",
                system.name()
            ))),
        }
    }

    /// Closest approach of pair `(i, j)`: distance, minimizing time, and the
    /// unit separation vector at that time.
    fn pair(&self, x: &[f64], i: usize, j: usize, span: f64) -> (f64, f64, [f64; 2]) {
        let (si, ci) = x[3 * i + 2].sin_cos();
        let (sj, cj) = x[3 * j + 2].sin_cos();
        let r = [x[3 * i] - x[3 * j], x[3 * i + 1] - x[3 * j + 1]];
        let w = [self.speed * (ci - cj), self.speed * (si - sj)];
        let ww = w[0] * w[0] + w[1] * w[1];
        let s = if ww < 1e-15 {
            0.0
        } else {
            (-(r[0] * w[0] + r[1] * w[1]) / ww).clamp(0.0, span)
        };
        let sep = [r[0] + w[0] * s, r[1] + w[1] * s];
        let d = sep[0].hypot(sep[1]);
        let n = if d > 0.0 { [sep[0] / d, sep[1] / d] } else { [0.0, 0.0] };
        (d, s, n)
    }

    fn closest(&self, x: &[f64], t: f64) -> (f64, usize, usize, f64, [f64; 2]) {
        let span = (self.horizon - t).max(0.0);
        let mut best = (f64::INFINITY, 0, 0, 0.0, [0.0; 2]);
        for i in 0..3 {
            for j in (i + 1)..3 {
                let (d, s, n) = self.pair(x, i, j, span);
                if d < best.0 {
                    best = (d, i, j, s, n);
                }
            }
        }
        best
    }
}

impl AnalyticValue for StraightLineSeparation {
    fn name(&self) -> &str {
        "straight_line_separation"
    }

    fn state_dim(&self) -> usize {
        9
    }

    fn value(&self, x: &[f64], t: f64) -> f64 {
        self.closest(x, t).0 - self.radius
    }

    fn gradient(&self, x: &[f64], t: f64, out: &mut [f64]) -> bool {
        out.iter_mut().for_each(|g| *g = 0.0);
        let (_, i, j, s, n) = self.closest(x, t);
        // envelope argument: the minimizing time is held fixed
        out[3 * i] = n[0];
        out[3 * i + 1] = n[1];
        out[3 * j] = -n[0];
        out[3 * j + 1] = -n[1];
        let (si, ci) = x[3 * i + 2].sin_cos();
        let (sj, cj) = x[3 * j + 2].sin_cos();
        out[3 * i + 2] = s * self.speed * (-si * n[0] + ci * n[1]);
        out[3 * j + 2] = -s * self.speed * (-sj * n[0] + cj * n[1]);
        true
    }
}

/// Rocket candidate: trajectory minimum of `l` along the unpowered ballistic
/// arc, evaluated at `samples + 1` evenly spaced times of the remaining horizon.
#[derive(Debug, Clone)]
pub struct BallisticLanding {
    gravity: f64,
    horizon: f64,
    samples: usize,
    target: TargetFunction,
}

impl BallisticLanding {
    pub fn new(system: &SystemModel) -> Result<Self> {
        match *system.kind() {
            SystemKind::Rocket6d { g, .. } => Ok(Self {
                gravity: g,
                horizon: system.horizon(),
                samples: 30,
                target: system.target().clone(),
            }),
            _ => Err(Error::InvalidParameter(format!(
                "ballistic landing needs rocket6d, got {}",
                system.name()
            ))),
        }
    }

    fn arc(&self, x: &[f64], s: f64) -> [f64; 2] {
        [x[0] + x[3] * s, x[1] + x[4] * s - 0.5 * self.gravity * s * s]
    }

    fn minimum(&self, x: &[f64], t: f64) -> (f64, f64) {
        let span = (self.horizon - t).max(0.0);
        let mut best = (f64::INFINITY, 0.0);
        for k in 0..=self.samples {
            let s = span * k as f64 / self.samples as f64;
            let p = self.arc(x, s);
            let l = self.target.value(&p);
            if l < best.0 {
                best = (l, s);
            }
        }
        best
    }
}

impl AnalyticValue for BallisticLanding {
    fn name(&self) -> &str {
        "ballistic_landing"
    }

    fn state_dim(&self) -> usize {
        6
    }

    fn value(&self, x: &[f64], t: f64) -> f64 {
        self.minimum(x, t).0
    }

    fn gradient(&self, x: &[f64], t: f64, out: &mut [f64]) -> bool {
        out.iter_mut().for_each(|g| *g = 0.0);
        let (_, s) = self.minimum(x, t);
        let p = self.arc(x, s);
        let mut gp = [0.0; 2];
        self.target.gradient(&p, &mut gp);
        out[0] = gp[0];
        out[1] = gp[1];
        out[3] = gp[0] * s;
        out[4] = gp[1] * s;
        true
    }
}

/// Resolves a built-in analytic candidate by name for `system`.
///
/// Known names: `target`, `straight_line_separation` (multivehicle9d),
/// `ballistic_landing` (rocket6d).
pub fn analytic_by_name(name: &str, system: &SystemModel) -> Result<ValueFunctionHandle> {
    let f: Arc<dyn AnalyticValue> = match name {
        "target" => Arc::new(TargetOnly::new(system)),
        "straight_line_separation" => Arc::new(StraightLineSeparation::new(system)?),
        "ballistic_landing" => Arc::new(BallisticLanding::new(system)?),
        other => {
            return Err(Error::Config(format!("unknown analytic value function '{other}'")));
        }
    };
    ValueFunctionHandle::analytic(f, system)
}
