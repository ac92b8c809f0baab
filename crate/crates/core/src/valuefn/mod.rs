//! Candidate value functions `Ṽ(x, t)` and the safety policy they induce.

mod analytic;
mod siren;

pub use analytic::{analytic_by_name, AnalyticValue, BallisticLanding, StraightLineSeparation, TargetOnly};
pub use siren::{load_network, save_network, SirenLayer, SirenNetwork, DEFAULT_W0};

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::dynamics::{wrap_into, Mode, SystemModel};
use crate::error::{Error, Result};
use crate::groundtruth::GridValueFunction;

/// Relative finite-difference step, scaled by each dimension's box width.
pub const FD_RELATIVE_STEP: f64 = 1e-4;

/// Where a handle's values come from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    GridSolved,
    LoadedNetwork,
    Analytic(String),
    Perturbed {
        base: Box<Provenance>,
        description: String,
    },
}

/// Modification applied on top of a base value function.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Perturbation {
    /// `Ṽ + c` everywhere.
    UniformBias { bias: f64 },
    /// `Ṽ + a (1 − r²/ρ²)²` for `r < ρ`, with `r` the distance to `center`
    /// (periodic coordinates measured the short way round). Time independent.
    LocalizedBump {
        center: Vec<f64>,
        radius: f64,
        amplitude: f64,
    },
}

impl Perturbation {
    fn describe(&self) -> String {
        match self {
            Perturbation::UniformBias { bias } => format!("uniform bias {bias:+}"),
            Perturbation::LocalizedBump {
                center,
                radius,
                amplitude,
            } => format!("bump of {amplitude:+} radius {radius} at {center:?}"),
        }
    }
}

/// Box and periodicity of the state space a handle is evaluated on.
#[derive(Clone, Debug, PartialEq)]
struct Domain {
    lower: Vec<f64>,
    upper: Vec<f64>,
    periodic: Vec<bool>,
}

impl Domain {
    fn of(system: &SystemModel) -> Self {
        Self {
            lower: system.state_lower().to_vec(),
            upper: system.state_upper().to_vec(),
            periodic: (0..system.state_dim()).map(|d| system.is_periodic(d)).collect(),
        }
    }

    fn dim(&self) -> usize {
        self.lower.len()
    }

    /// Shortest signed difference `a − b` per coordinate.
    fn delta(&self, d: usize, a: f64, b: f64) -> f64 {
        let diff = a - b;
        if self.periodic[d] {
            let half = 0.5 * (self.upper[d] - self.lower[d]);
            wrap_into(diff, -half, half)
        } else {
            diff
        }
    }
}

#[derive(Clone)]
enum Source {
    Grid(Arc<GridValueFunction>),
    Network(Arc<SirenNetwork>),
    Analytic(Arc<dyn AnalyticValue>),
    Perturbed {
        base: Box<ValueFunctionHandle>,
        kind: Perturbation,
    },
}

/// Uniform, immutable, thread-safe view of a candidate value function.
#[derive(Clone)]
pub struct ValueFunctionHandle {
    source: Source,
    domain: Domain,
}

impl fmt::Debug for ValueFunctionHandle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ValueFunctionHandle")
            .field("provenance", &self.provenance())
            .field("dim", &self.domain.dim())
            .finish()
    }
}

fn check_dim(got: usize, system: &SystemModel) -> Result<()> {
    if got != system.state_dim() {
        return Err(Error::InvalidParameter(format!(
            "value function has {got} state inputs, {} has {}",
            system.name(),
            system.state_dim()
        )));
    }
    Ok(())
}

impl ValueFunctionHandle {
    pub fn grid(gvf: Arc<GridValueFunction>, system: &SystemModel) -> Result<Self> {
        check_dim(gvf.grid().dim(), system)?;
        Ok(Self {
            source: Source::Grid(gvf),
            domain: Domain::of(system),
        })
    }

    pub fn network(net: Arc<SirenNetwork>, system: &SystemModel) -> Result<Self> {
        check_dim(net.state_dim(), system)?;
        Ok(Self {
            source: Source::Network(net),
            domain: Domain::of(system),
        })
    }

    pub fn analytic(f: Arc<dyn AnalyticValue>, system: &SystemModel) -> Result<Self> {
        check_dim(f.state_dim(), system)?;
        Ok(Self {
            source: Source::Analytic(f),
            domain: Domain::of(system),
        })
    }

    /// Wraps `base` with a perturbation. Parameters must be finite.
    pub fn perturb(base: ValueFunctionHandle, kind: Perturbation) -> Result<Self> {
        match &kind {
            Perturbation::UniformBias { bias } => {
                if !bias.is_finite() {
                    return Err(Error::InvalidParameter(format!("bias must be finite, got {bias}")));
                }
            }
            Perturbation::LocalizedBump {
                center,
                radius,
                amplitude,
            } => {
                if center.len() != base.domain.dim() || center.iter().any(|c| !c.is_finite()) {
                    return Err(Error::InvalidParameter(
                        "bump center must be a finite state of matching dimension".into(),
                    ));
                }
                if !(radius.is_finite() && *radius > 0.0) || !amplitude.is_finite() {
                    return Err(Error::InvalidParameter(
                        "bump radius must be positive and amplitude finite".into(),
                    ));
                }
            }
        }
        let domain = base.domain.clone();
        Ok(Self {
            source: Source::Perturbed {
                base: Box::new(base),
                kind,
            },
            domain,
        })
    }

    pub fn provenance(&self) -> Provenance {
        match &self.source {
            Source::Grid(_) => Provenance::GridSolved,
            Source::Network(_) => Provenance::LoadedNetwork,
            Source::Analytic(f) => Provenance::Analytic(f.name().to_string()),
            Source::Perturbed { base, kind } => Provenance::Perturbed {
                base: Box::new(base.provenance()),
                description: kind.describe(),
            },
        }
    }

    pub fn state_dim(&self) -> usize {
        self.domain.dim()
    }

    /// The grid solution behind a `GridSolved` handle.
    pub fn as_grid(&self) -> Option<&Arc<GridValueFunction>> {
        match &self.source {
            Source::Grid(g) => Some(g),
            _ => None,
        }
    }

    fn clamp_to_grid(&self, gvf: &GridValueFunction, x: &[f64], t: f64) -> ([f64; 4], f64) {
        let grid = gvf.grid();
        let mut y = [0.0; 4];
        for d in 0..grid.dim() {
            y[d] = if grid.is_periodic(d) {
                x[d]
            } else {
                x[d].clamp(grid.lower()[d], grid.upper()[d])
            };
        }
        let times = gvf.times();
        (y, t.clamp(times[0], *times.last().unwrap()))
    }

    /// `Ṽ(x, t)`. Grid handles clamp non-periodic coordinates and time into
    /// the grid's domain.
    pub fn value(&self, x: &[f64], t: f64) -> f64 {
        match &self.source {
            Source::Grid(g) => {
                let (y, t) = self.clamp_to_grid(g, x, t);
                g.value(&y[..x.len()], t).expect("clamped query lies in the grid")
            }
            Source::Network(n) => n.value(x, t),
            Source::Analytic(f) => f.value(x, t),
            Source::Perturbed { base, kind } => base.value(x, t) + self.perturbation_value(kind, x),
        }
    }

    fn perturbation_value(&self, kind: &Perturbation, x: &[f64]) -> f64 {
        match kind {
            Perturbation::UniformBias { bias } => *bias,
            Perturbation::LocalizedBump {
                center,
                radius,
                amplitude,
            } => {
                let r2: f64 = (0..x.len())
                    .map(|d| self.domain.delta(d, x[d], center[d]).powi(2))
                    .sum();
                let q = 1.0 - r2 / (radius * radius);
                if q > 0.0 {
                    amplitude * q * q
                } else {
                    0.0
                }
            }
        }
    }

    /// Spatial gradient `∇Ṽ(x, t)`: analytic where the source provides it,
    /// central finite differences otherwise.
    pub fn gradient(&self, x: &[f64], t: f64, out: &mut [f64]) {
        match &self.source {
            Source::Grid(g) => {
                let (y, t) = self.clamp_to_grid(g, x, t);
                g.gradient(&y[..x.len()], t, out)
                    .expect("clamped query lies in the grid");
            }
            Source::Network(n) => n.gradient(x, t, out),
            Source::Analytic(f) => {
                if !f.gradient(x, t, out) {
                    self.fd_gradient(x, t, out);
                }
            }
            Source::Perturbed { base, kind } => {
                base.gradient(x, t, out);
                if let Perturbation::LocalizedBump {
                    center,
                    radius,
                    amplitude,
                } = kind
                {
                    let rho2 = radius * radius;
                    let mut r2 = 0.0;
                    for d in 0..x.len() {
                        r2 += self.domain.delta(d, x[d], center[d]).powi(2);
                    }
                    let q = 1.0 - r2 / rho2;
                    if q > 0.0 {
                        for d in 0..x.len() {
                            out[d] += -4.0 * amplitude * q * self.domain.delta(d, x[d], center[d]) / rho2;
                        }
                    }
                }
            }
        }
    }

    /// Central finite-difference gradient with per-dimension step
    /// `FD_RELATIVE_STEP × box width`.
    pub fn fd_gradient(&self, x: &[f64], t: f64, out: &mut [f64]) {
        let mut y = x.to_vec();
        for d in 0..x.len() {
            let h = FD_RELATIVE_STEP * (self.domain.upper[d] - self.domain.lower[d]);
            y[d] = x[d] + h;
            let up = self.value(&y, t);
            y[d] = x[d] - h;
            let down = self.value(&y, t);
            y[d] = x[d];
            out[d] = (up - down) / (2.0 * h);
        }
    }
}

/// Control `π̃(x, t)` induced by `vf`: bang-bang optimizer of `⟨∇Ṽ, f(x, u)⟩`
/// (maximized for avoid, minimized for reach, ties to the lower bound).
/// Systems that are not control affine fall back to [`policy_by_search`].
pub fn induced_policy(vf: &ValueFunctionHandle, system: &SystemModel, x: &[f64], t: f64, u: &mut [f64]) {
    if system.is_control_affine() {
        let mut grad = vec![0.0; x.len()];
        vf.gradient(x, t, &mut grad);
        system.optimal_control(x, &grad, u);
    } else {
        policy_by_search(vf, system, x, t, 11, u);
    }
}

/// Exhaustive search over a control grid with `points` values per control
/// dimension. The first best point in lexicographic order wins.
pub fn policy_by_search(
    vf: &ValueFunctionHandle,
    system: &SystemModel,
    x: &[f64],
    t: f64,
    points: usize,
    u: &mut [f64],
) {
    let points = points.max(2);
    let m = system.control_dim();
    let mut grad = vec![0.0; x.len()];
    vf.gradient(x, t, &mut grad);
    let mut cand = vec![0.0; m];
    let mut f = vec![0.0; x.len()];
    let mut best = f64::NAN;
    let total = points.pow(m as u32);
    for k in 0..total {
        let mut rem = k;
        for j in (0..m).rev() {
            let i = rem % points;
            rem /= points;
            let (lo, hi) = (system.control_lower()[j], system.control_upper()[j]);
            cand[j] = lo + (hi - lo) * i as f64 / (points - 1) as f64;
        }
        system.flow(x, &cand, &mut f);
        let score: f64 = f.iter().zip(&grad).map(|(a, b)| a * b).sum();
        let better = best.is_nan()
            || match system.mode() {
                Mode::Avoid => score > best,
                Mode::Reach => score < best,
            };
        if better {
            best = score;
            u.copy_from_slice(&cand);
        }
    }
}

/// Default bump used by examples: centred on the heading-toward-obstacle
/// region of the Dubins benchmark.
pub fn dubins_default_bump() -> Perturbation {
    Perturbation::LocalizedBump {
        center: vec![-0.45, 0.0, 0.0],
        radius: 0.35,
        amplitude: 0.5,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::CounterRng;

    fn dubins() -> SystemModel {
        SystemModel::dubins3d(0.6, -1.1, 1.1, 0.25).unwrap()
    }

    fn target_handle(sys: &SystemModel) -> ValueFunctionHandle {
        ValueFunctionHandle::analytic(Arc::new(TargetOnly::new(sys)), sys).unwrap()
    }

    #[derive(Debug)]
    struct HeadingWave;
    impl AnalyticValue for HeadingWave {
        fn name(&self) -> &str {
            "heading-wave"
        }
        fn state_dim(&self) -> usize {
            3
        }
        fn value(&self, x: &[f64], t: f64) -> f64 {
            x[0] * x[2].sin() + 0.3 * x[1] * x[1] - 0.2 * t + (x[2] + 0.3).cos()
        }
        fn gradient(&self, x: &[f64], _t: f64, out: &mut [f64]) -> bool {
            out[0] = x[2].sin();
            out[1] = 0.6 * x[1];
            out[2] = x[0] * x[2].cos() - (x[2] + 0.3).sin();
            true
        }
    }

    #[test]
    fn bias_zero_is_identity_and_bias_shifts() {
        let sys = dubins();
        let base = target_handle(&sys);
        let same = ValueFunctionHandle::perturb(base.clone(), Perturbation::UniformBias { bias: 0.0 }).unwrap();
        let up = ValueFunctionHandle::perturb(base.clone(), Perturbation::UniformBias { bias: 0.1 }).unwrap();
        for x in [[0.3, 0.2, 1.0], [-0.9, 0.1, -3.0]] {
            assert_eq!(same.value(&x, 0.0), base.value(&x, 0.0));
            assert!((up.value(&x, 0.0) - base.value(&x, 0.0) - 0.1).abs() < 1e-15);
        }
        assert!(matches!(up.provenance(), Provenance::Perturbed { .. }));
    }

    #[test]
    fn bump_outside_box_changes_nothing_inside() {
        let sys = dubins();
        let base = target_handle(&sys);
        let bump = ValueFunctionHandle::perturb(
            base.clone(),
            Perturbation::LocalizedBump {
                center: vec![5.0, 5.0, 0.0],
                radius: 1.0,
                amplitude: 3.0,
            },
        )
        .unwrap();
        let rng = CounterRng::new(1);
        let mut x = [0.0; 3];
        for k in 0..1000 {
            rng.draw(k).point_in_box(sys.state_lower(), sys.state_upper(), &mut x);
            assert_eq!(bump.value(&x, 0.0), base.value(&x, 0.0));
        }
    }

    #[test]
    fn invalid_perturbations_rejected() {
        let sys = dubins();
        let base = target_handle(&sys);
        assert!(ValueFunctionHandle::perturb(base.clone(), Perturbation::UniformBias { bias: f64::NAN }).is_err());
        assert!(ValueFunctionHandle::perturb(
            base.clone(),
            Perturbation::LocalizedBump {
                center: vec![0.0; 2],
                radius: 1.0,
                amplitude: 1.0
            }
        )
        .is_err());
        assert!(ValueFunctionHandle::perturb(
            base,
            Perturbation::LocalizedBump {
                center: vec![0.0; 3],
                radius: 0.0,
                amplitude: 1.0
            }
        )
        .is_err());
    }

    #[test]
    fn analytic_gradients_match_finite_differences() {
        let sys = dubins();
        let wave = ValueFunctionHandle::analytic(Arc::new(HeadingWave), &sys).unwrap();
        let bumped = ValueFunctionHandle::perturb(
            wave.clone(),
            Perturbation::LocalizedBump {
                center: vec![0.1, -0.2, 3.0],
                radius: 0.8,
                amplitude: 0.7,
            },
        )
        .unwrap();
        let rng = CounterRng::new(5);
        let (mut a, mut b) = ([0.0; 3], [0.0; 3]);
        let mut x = [0.0; 3];
        for handle in [&wave, &bumped] {
            for k in 0..1000 {
                let mut d = rng.draw(k);
                d.point_in_box(sys.state_lower(), sys.state_upper(), &mut x);
                let t = d.next_f64();
                handle.gradient(&x, t, &mut a);
                handle.fd_gradient(&x, t, &mut b);
                let scale = a.iter().map(|v| v.abs()).fold(1.0, f64::max);
                for i in 0..3 {
                    assert!((a[i] - b[i]).abs() <= 1e-4 * scale, "{a:?} vs {b:?}");
                }
            }
        }
    }

    #[test]
    fn policy_rules() {
        let sys = dubins();
        let wave = ValueFunctionHandle::analytic(Arc::new(HeadingWave), &sys).unwrap();
        let mut u = [0.0];
        let x = [0.5, 0.0, 0.0];
        let mut g = [0.0; 3];
        wave.gradient(&x, 0.0, &mut g);
        induced_policy(&wave, &sys, &x, 0.0, &mut u);
        assert_eq!(u[0], if g[2] > 0.0 { 1.1 } else { -1.1 });

        // zero gradient ties to the lower bound
        let flat = ValueFunctionHandle::analytic(Arc::new(TargetOnly::new(&SystemModel::stationary(3, 0.2).unwrap())), &SystemModel::stationary(3, 0.2).unwrap()).unwrap();
        let stat = SystemModel::stationary(3, 0.2).unwrap();
        induced_policy(&flat, &stat, &[0.1, 0.1, 0.1], 0.0, &mut u);
        assert_eq!(u[0], -1.0);
    }

    #[test]
    fn policy_is_optimal_and_bias_invariant() {
        let sys = dubins();
        let wave = ValueFunctionHandle::analytic(Arc::new(HeadingWave), &sys).unwrap();
        let biased = ValueFunctionHandle::perturb(wave.clone(), Perturbation::UniformBias { bias: -0.7 }).unwrap();
        let rng = CounterRng::new(8);
        for mode in [Mode::Avoid, Mode::Reach] {
            let sys = sys.clone().with_mode(mode);
            let mut x = [0.0; 3];
            let (mut u, mut ub) = ([0.0], [0.0]);
            let (mut g, mut f) = ([0.0; 3], [0.0; 3]);
            for k in 0..1000 {
                let mut d = rng.draw(k);
                d.point_in_box(sys.state_lower(), sys.state_upper(), &mut x);
                let t = d.next_f64();
                induced_policy(&wave, &sys, &x, t, &mut u);
                induced_policy(&biased, &sys, &x, t, &mut ub);
                assert_eq!(u, ub);
                wave.gradient(&x, t, &mut g);
                sys.flow(&x, &u, &mut f);
                let best: f64 = f.iter().zip(&g).map(|(a, b)| a * b).sum();
                for _ in 0..100 {
                    let v = [d.uniform(-1.1, 1.1)];
                    sys.flow(&x, &v, &mut f);
                    let s: f64 = f.iter().zip(&g).map(|(a, b)| a * b).sum();
                    match mode {
                        Mode::Avoid => assert!(best >= s - 1e-9),
                        Mode::Reach => assert!(best <= s + 1e-9),
                    }
                }
            }
        }
    }

    #[test]
    fn rocket_reach_policy_matches_search() {
        let sys = SystemModel::rocket6d(250.0, 9.81).unwrap();
        let h = ValueFunctionHandle::analytic(Arc::new(BallisticLanding::new(&sys).unwrap()), &sys).unwrap();
        let rng = CounterRng::new(21);
        let mut x = [0.0; 6];
        let (mut u, mut us) = ([0.0; 2], [0.0; 2]);
        let mut g = [0.0; 6];
        let mut coef = [0.0; 2];
        let mut checked = 0;
        for k in 0..500 {
            rng.draw(k).point_in_box(sys.state_lower(), sys.state_upper(), &mut x);
            h.gradient(&x, 0.0, &mut g);
            sys.control_coefficients(&x, &g, &mut coef);
            if coef.iter().any(|c| c.abs() < 1e-9) {
                continue;
            }
            induced_policy(&h, &sys, &x, 0.0, &mut u);
            policy_by_search(&h, &sys, &x, 0.0, 11, &mut us);
            assert_eq!(u, us);
            if coef[0] > 0.0 {
                assert_eq!(u[0], -250.0);
            }
            checked += 1;
        }
        assert!(checked > 100);
    }
}
