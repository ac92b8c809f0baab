//! Benchmark dynamical systems, their control boxes and target functions.
//!
//! Every built-in system is control affine, `f(x, u) = drift(x) + G(x) u`, which
//! lets the Hamiltonian be optimized in closed form one control at a time.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Whether the target set is to be avoided or reached.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Avoid,
    Reach,
}

impl Mode {
    /// Trajectory outcome predicate on the cost `J` (minimum of `l` along the path).
    #[inline]
    pub fn is_safe_cost(self, cost: f64) -> bool {
        match self {
            Mode::Avoid => cost > 0.0,
            Mode::Reach => cost <= 0.0,
        }
    }
}

/// Parameters of a built-in system.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum SystemKind {
    /// Single Dubins car avoiding (or reaching) a disk at the origin.
    Dubins3d {
        v: f64,
        u_min: f64,
        u_max: f64,
        radius: f64,
    },
    /// Three Dubins cars that must keep pairwise separation.
    Multivehicle9d {
        v: f64,
        u_min: f64,
        u_max: f64,
        radius: f64,
    },
    /// Planar rocket with two thrust inputs landing in a zone around the origin.
    Rocket6d { tau_bound: f64, g: f64 },
    /// `f ≡ 0`; target is a ball around the origin. Used for solver sanity checks.
    Stationary { dim: usize, radius: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum TargetKind {
    /// `sqrt(x0² + x1²) − r`
    Disk { radius: f64 },
    /// Minimum pairwise planar distance between vehicles, minus `r`.
    PairwiseSeparation { radius: f64, vehicles: usize },
    /// `max(|px| − half_width, py − ceiling)`
    LandingZone { half_width: f64, ceiling: f64 },
    /// `‖x‖ − r`
    Ball { radius: f64 },
}

/// Signed function whose sub-zero level set is the target set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TargetFunction {
    kind: TargetKind,
    description: String,
}

impl TargetFunction {
    #[inline]
    pub fn value(&self, x: &[f64]) -> f64 {
        match self.kind {
            TargetKind::Disk { radius } => x[0].hypot(x[1]) - radius,
            TargetKind::PairwiseSeparation { radius, vehicles } => {
                let mut best = f64::INFINITY;
                for i in 0..vehicles {
                    for j in (i + 1)..vehicles {
                        let d = (x[3 * i] - x[3 * j]).hypot(x[3 * i + 1] - x[3 * j + 1]);
                        best = best.min(d);
                    }
                }
                best - radius
            }
            TargetKind::LandingZone {
                half_width,
                ceiling,
            } => (x[0].abs() - half_width).max(x[1] - ceiling),
            TargetKind::Ball { radius } => x.iter().map(|v| v * v).sum::<f64>().sqrt() - radius,
        }
    }

    /// Analytic spatial gradient of `l` where it is differentiable.
    pub fn gradient(&self, x: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|g| *g = 0.0);
        match self.kind {
            TargetKind::Disk { .. } => {
                let r = x[0].hypot(x[1]);
                if r > 0.0 {
                    out[0] = x[0] / r;
                    out[1] = x[1] / r;
                }
            }
            TargetKind::PairwiseSeparation { vehicles, .. } => {
                let mut best = (f64::INFINITY, 0, 0);
                for i in 0..vehicles {
                    for j in (i + 1)..vehicles {
                        let d = (x[3 * i] - x[3 * j]).hypot(x[3 * i + 1] - x[3 * j + 1]);
                        if d < best.0 {
                            best = (d, i, j);
                        }
                    }
                }
                let (d, i, j) = best;
                if d > 0.0 {
                    let gx = (x[3 * i] - x[3 * j]) / d;
                    let gy = (x[3 * i + 1] - x[3 * j + 1]) / d;
                    out[3 * i] = gx;
                    out[3 * i + 1] = gy;
                    out[3 * j] = -gx;
                    out[3 * j + 1] = -gy;
                }
            }
            TargetKind::LandingZone {
                half_width,
                ceiling,
            } => {
                if x[0].abs() - half_width >= x[1] - ceiling {
                    out[0] = x[0].signum();
                } else {
                    out[1] = 1.0;
                }
            }
            TargetKind::Ball { .. } => {
                let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
                if r > 0.0 {
                    out.iter_mut().zip(x).for_each(|(g, v)| *g = v / r);
                }
            }
        }
    }

    /// Direct geometric membership test, independent of [`TargetFunction::value`].
    pub fn contains(&self, x: &[f64]) -> bool {
        match self.kind {
            TargetKind::Disk { radius } => x[0] * x[0] + x[1] * x[1] <= radius * radius,
            TargetKind::PairwiseSeparation { radius, vehicles } => (0..vehicles).any(|i| {
                ((i + 1)..vehicles).any(|j| {
                    let dx = x[3 * i] - x[3 * j];
                    let dy = x[3 * i + 1] - x[3 * j + 1];
                    dx * dx + dy * dy <= radius * radius
                })
            }),
            TargetKind::LandingZone {
                half_width,
                ceiling,
            } => x[0].abs() <= half_width && x[1] <= ceiling,
            TargetKind::Ball { radius } => x.iter().map(|v| v * v).sum::<f64>() <= radius * radius,
        }
    }

    pub fn description(&self) -> &str {
        &self.description
    }
}

/// A dynamical system together with its verification domain and horizon.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SystemModel {
    kind: SystemKind,
    mode: Mode,
    horizon: f64,
    state_lower: Vec<f64>,
    state_upper: Vec<f64>,
    control_lower: Vec<f64>,
    control_upper: Vec<f64>,
    periodic: Vec<bool>,
    target: TargetFunction,
}

fn require(cond: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::InvalidParameter(msg()))
    }
}

fn check_dubins_params(v: f64, u_min: f64, u_max: f64, radius: f64) -> Result<()> {
    require(v.is_finite() && v > 0.0, || format!("speed must be positive, got {v}"))?;
    require(radius.is_finite() && radius > 0.0, || {
        format!("radius must be positive, got {radius}")
    })?;
    require(u_min.is_finite() && u_max.is_finite() && u_min < u_max, || {
        format!("need u_min < u_max, got [{u_min}, {u_max}]")
    })
}

impl SystemModel {
    /// Dubins car avoiding a disk of radius `radius` at the origin.
    pub fn dubins3d(v: f64, u_min: f64, u_max: f64, radius: f64) -> Result<Self> {
        check_dubins_params(v, u_min, u_max, radius)?;
        Ok(Self {
            kind: SystemKind::Dubins3d {
                v,
                u_min,
                u_max,
                radius,
            },
            mode: Mode::Avoid,
            horizon: 1.0,
            state_lower: vec![-1.0, -1.0, -PI],
            state_upper: vec![1.0, 1.0, PI],
            control_lower: vec![u_min],
            control_upper: vec![u_max],
            periodic: vec![false, false, true],
            target: TargetFunction {
                kind: TargetKind::Disk { radius },
                description: format!("distance to origin minus {radius}"),
            },
        })
    }

    /// Three Dubins cars; state is `(px, py, θ)` per vehicle, concatenated.
    pub fn multivehicle9d(v: f64, u_min: f64, u_max: f64, radius: f64) -> Result<Self> {
        check_dubins_params(v, u_min, u_max, radius)?;
        let per = |a: f64, b: f64| [a, a, b];
        Ok(Self {
            kind: SystemKind::Multivehicle9d {
                v,
                u_min,
                u_max,
                radius,
            },
            mode: Mode::Avoid,
            horizon: 1.0,
            state_lower: per(-1.0, -PI).repeat(3),
            state_upper: per(1.0, PI).repeat(3),
            control_lower: vec![u_min; 3],
            control_upper: vec![u_max; 3],
            periodic: [false, false, true].repeat(3),
            target: TargetFunction {
                kind: TargetKind::PairwiseSeparation {
                    radius,
                    vehicles: 3,
                },
                description: format!("minimum pairwise vehicle distance minus {radius}"),
            },
        })
    }

    /// Rocket landing; state `(px, py, θ, vx, vy, ω)`, thrusts `τ1, τ2 ∈ [−b, b]`.
    pub fn rocket6d(tau_bound: f64, g: f64) -> Result<Self> {
        require(tau_bound.is_finite() && tau_bound > 0.0, || {
            format!("thrust bound must be positive, got {tau_bound}")
        })?;
        require(g.is_finite(), || format!("gravity must be finite, got {g}"))?;
        Ok(Self {
            kind: SystemKind::Rocket6d { tau_bound, g },
            mode: Mode::Reach,
            horizon: 0.3,
            state_lower: vec![-150.0, 10.0, -PI, -200.0, -200.0, -10.0],
            state_upper: vec![150.0, 150.0, PI, 200.0, 200.0, 10.0],
            control_lower: vec![-tau_bound; 2],
            control_upper: vec![tau_bound; 2],
            periodic: vec![false, false, true, false, false, false],
            target: TargetFunction {
                kind: TargetKind::LandingZone {
                    half_width: 20.0,
                    ceiling: 20.0,
                },
                description: "max(|px| - 20, py - 20)".to_string(),
            },
        })
    }

    /// Zero dynamics in `dim` dimensions over `[-1, 1]^dim`, target ball of `radius`.
    pub fn stationary(dim: usize, radius: f64) -> Result<Self> {
        require(dim >= 1, || "dimension must be at least 1".to_string())?;
        require(radius.is_finite() && radius > 0.0, || {
            format!("radius must be positive, got {radius}")
        })?;
        Ok(Self {
            kind: SystemKind::Stationary { dim, radius },
            mode: Mode::Avoid,
            horizon: 1.0,
            state_lower: vec![-1.0; dim],
            state_upper: vec![1.0; dim],
            control_lower: vec![-1.0],
            control_upper: vec![1.0],
            periodic: vec![false; dim],
            target: TargetFunction {
                kind: TargetKind::Ball { radius },
                description: format!("norm minus {radius}"),
            },
        })
    }

    /// Builds the system described by `kind` with its default box, mode and horizon.
    pub fn from_kind(kind: &SystemKind) -> Result<Self> {
        match *kind {
            SystemKind::Dubins3d {
                v,
                u_min,
                u_max,
                radius,
            } => Self::dubins3d(v, u_min, u_max, radius),
            SystemKind::Multivehicle9d {
                v,
                u_min,
                u_max,
                radius,
            } => Self::multivehicle9d(v, u_min, u_max, radius),
            SystemKind::Rocket6d { tau_bound, g } => Self::rocket6d(tau_bound, g),
            SystemKind::Stationary { dim, radius } => Self::stationary(dim, radius),
        }
    }

    pub fn with_mode(mut self, mode: Mode) -> Self {
        self.mode = mode;
        self
    }

    pub fn with_horizon(mut self, horizon: f64) -> Result<Self> {
        require(horizon.is_finite() && horizon > 0.0, || {
            format!("horizon must be positive, got {horizon}")
        })?;
        self.horizon = horizon;
        Ok(self)
    }

    pub fn with_state_box(mut self, lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        require(
            lower.len() == self.state_dim() && upper.len() == self.state_dim(),
            || format!("state box must have {} entries", self.state_dim()),
        )?;
        require(
            lower
                .iter()
                .zip(&upper)
                .all(|(l, u)| l.is_finite() && u.is_finite() && l < u),
            || "state box needs lower < upper componentwise".to_string(),
        )?;
        self.state_lower = lower;
        self.state_upper = upper;
        Ok(self)
    }

    pub fn kind(&self) -> &SystemKind {
        &self.kind
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            SystemKind::Dubins3d { .. } => "dubins3d",
            SystemKind::Multivehicle9d { .. } => "multivehicle9d",
            SystemKind::Rocket6d { .. } => "rocket6d",
            SystemKind::Stationary { .. } => "stationary",
        }
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn state_dim(&self) -> usize {
        self.state_lower.len()
    }

    pub fn control_dim(&self) -> usize {
        self.control_lower.len()
    }

    pub fn state_lower(&self) -> &[f64] {
        &self.state_lower
    }

    pub fn state_upper(&self) -> &[f64] {
        &self.state_upper
    }

    pub fn control_lower(&self) -> &[f64] {
        &self.control_lower
    }

    pub fn control_upper(&self) -> &[f64] {
        &self.control_upper
    }

    pub fn is_periodic(&self, dim: usize) -> bool {
        self.periodic[dim]
    }

    pub fn periodic_dims(&self) -> Vec<usize> {
        (0..self.state_dim()).filter(|&d| self.periodic[d]).collect()
    }

    pub fn target(&self) -> &TargetFunction {
        &self.target
    }

    #[inline]
    pub fn target_value(&self, x: &[f64]) -> f64 {
        self.target.value(x)
    }

    /// All built-in systems are control affine. The policy layer falls back to
    /// a control-grid search for systems that are not.
    pub fn is_control_affine(&self) -> bool {
        true
    }

    /// `f(x, u)` written into `dx`.
    pub fn flow(&self, x: &[f64], u: &[f64], dx: &mut [f64]) {
        match self.kind {
            SystemKind::Dubins3d { v, .. } => {
                let (s, c) = x[2].sin_cos();
                dx[0] = v * c;
                dx[1] = v * s;
                dx[2] = u[0];
            }
            SystemKind::Multivehicle9d { v, .. } => {
                for i in 0..3 {
                    let (s, c) = x[3 * i + 2].sin_cos();
                    dx[3 * i] = v * c;
                    dx[3 * i + 1] = v * s;
                    dx[3 * i + 2] = u[i];
                }
            }
            SystemKind::Rocket6d { g, .. } => {
                let (s, c) = x[2].sin_cos();
                dx[0] = x[3];
                dx[1] = x[4];
                dx[2] = x[5];
                dx[3] = u[0] * c - u[1] * s;
                dx[4] = u[0] * s + u[1] * c - g;
                dx[5] = 0.3 * u[0];
            }
            SystemKind::Stationary { .. } => dx.iter_mut().for_each(|d| *d = 0.0),
        }
    }

    /// Uncontrolled part of the flow.
    pub fn drift(&self, x: &[f64], dx: &mut [f64]) {
        match self.kind {
            SystemKind::Dubins3d { v, .. } => {
                let (s, c) = x[2].sin_cos();
                dx[0] = v * c;
                dx[1] = v * s;
                dx[2] = 0.0;
            }
            SystemKind::Multivehicle9d { v, .. } => {
                for i in 0..3 {
                    let (s, c) = x[3 * i + 2].sin_cos();
                    dx[3 * i] = v * c;
                    dx[3 * i + 1] = v * s;
                    dx[3 * i + 2] = 0.0;
                }
            }
            SystemKind::Rocket6d { g, .. } => {
                dx[0] = x[3];
                dx[1] = x[4];
                dx[2] = x[5];
                dx[3] = 0.0;
                dx[4] = -g;
                dx[5] = 0.0;
            }
            SystemKind::Stationary { .. } => dx.iter_mut().for_each(|d| *d = 0.0),
        }
    }

    /// `⟨p, G_j(x)⟩` for every control column `j`: the coefficient of `u_j` in the
    /// Hamiltonian `⟨p, f(x, u)⟩`.
    pub fn control_coefficients(&self, x: &[f64], p: &[f64], out: &mut [f64]) {
        match self.kind {
            SystemKind::Dubins3d { .. } => out[0] = p[2],
            SystemKind::Multivehicle9d { .. } => {
                for i in 0..3 {
                    out[i] = p[3 * i + 2];
                }
            }
            SystemKind::Rocket6d { .. } => {
                let (s, c) = x[2].sin_cos();
                out[0] = p[3] * c + p[4] * s + 0.3 * p[5];
                out[1] = -p[3] * s + p[4] * c;
            }
            SystemKind::Stationary { .. } => out.iter_mut().for_each(|o| *o = 0.0),
        }
    }

    /// Bang-bang optimizer of `⟨p, f(x, u)⟩`: maximizes for avoid, minimizes for
    /// reach. A zero coefficient selects the lower bound.
    pub fn optimal_control(&self, x: &[f64], p: &[f64], u: &mut [f64]) {
        self.control_coefficients(x, p, u);
        for j in 0..u.len() {
            let coef = u[j];
            let upper = match self.mode {
                Mode::Avoid => coef > 0.0,
                Mode::Reach => coef < 0.0,
            };
            u[j] = if upper {
                self.control_upper[j]
            } else {
                self.control_lower[j]
            };
        }
    }

    /// Optimized Hamiltonian `max_u ⟨p, f⟩` (avoid) or `min_u ⟨p, f⟩` (reach).
    pub fn hamiltonian(&self, x: &[f64], p: &[f64], scratch: &mut [f64], coefs: &mut [f64]) -> f64 {
        self.drift(x, scratch);
        let mut h: f64 = scratch.iter().zip(p).map(|(a, b)| a * b).sum();
        self.control_coefficients(x, p, coefs);
        for (j, &c) in coefs.iter().enumerate() {
            let (lo, hi) = (c * self.control_lower[j], c * self.control_upper[j]);
            h += match self.mode {
                Mode::Avoid => lo.max(hi),
                Mode::Reach => lo.min(hi),
            };
        }
        h
    }

    /// Upper bound on `|f_d(x, u)|` over the state and control boxes, per dimension.
    /// These are the Lax–Friedrichs dissipation coefficients.
    pub fn dissipation(&self) -> Vec<f64> {
        match self.kind {
            SystemKind::Dubins3d { v, u_min, u_max, .. } => {
                vec![v, v, u_min.abs().max(u_max.abs())]
            }
            SystemKind::Multivehicle9d { v, u_min, u_max, .. } => {
                [v, v, u_min.abs().max(u_max.abs())].repeat(3)
            }
            SystemKind::Rocket6d { tau_bound, g } => {
                let amax = |d: usize| self.state_lower[d].abs().max(self.state_upper[d].abs());
                let thrust = tau_bound * std::f64::consts::SQRT_2;
                vec![amax(3), amax(4), amax(5), thrust, thrust + g.abs(), 0.3 * tau_bound]
            }
            SystemKind::Stationary { dim, .. } => vec![0.0; dim],
        }
    }

    /// Wraps periodic coordinates into `[lower, upper)`.
    #[inline]
    pub fn wrap(&self, x: &mut [f64]) {
        for (d, xi) in x.iter_mut().enumerate() {
            if self.periodic[d] {
                *xi = wrap_into(*xi, self.state_lower[d], self.state_upper[d]);
            }
        }
    }

    /// Clamps non-periodic coordinates into the box; returns whether anything moved.
    pub fn clamp(&self, x: &mut [f64]) -> bool {
        let mut moved = false;
        for (d, xi) in x.iter_mut().enumerate() {
            if !self.periodic[d] {
                let c = xi.clamp(self.state_lower[d], self.state_upper[d]);
                if c != *xi {
                    moved = true;
                    *xi = c;
                }
            }
        }
        moved
    }

    /// Box membership of the non-periodic coordinates.
    pub fn in_box(&self, x: &[f64]) -> bool {
        x.iter().enumerate().all(|(d, &v)| {
            self.periodic[d] || (v >= self.state_lower[d] && v <= self.state_upper[d])
        })
    }

    /// Box volume (product of widths).
    pub fn box_volume(&self) -> f64 {
        self.state_lower
            .iter()
            .zip(&self.state_upper)
            .map(|(l, u)| u - l)
            .product()
    }
}

/// Maps `v` into `[lower, upper)` modulo the interval width.
#[inline]
pub fn wrap_into(v: f64, lower: f64, upper: f64) -> f64 {
    let width = upper - lower;
    let w = lower + (v - lower).rem_euclid(width);
    // rem_euclid can round up to exactly `width`
    if w >= upper {
        lower
    } else {
        w
    }
}
