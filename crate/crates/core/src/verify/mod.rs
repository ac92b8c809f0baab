//! Scenario-optimization verification of a candidate value function.
//!
//! Starting from the trivial level `δ₀` (`−∞` for avoid, `+∞` for reach),
//! each iteration draws `N` fresh i.i.d. states uniformly from the current
//! candidate set `{Ṽ(x,0) > δᵢ}` (`<` for reach), rolls them out under the
//! induced policy, and moves `δ` to the most extreme violating value. The
//! loop stops at the first violation-free batch, which does not move `δ`.
//! With `N ≥ (2/ε)(ln(1/β) + 1)` the recovered set `{Ṽ(x,0) > δ̂}` then
//! contains violating states with probability at most `ε`, at confidence
//! `1 − β`. Runs that hit the iteration cap carry no guarantee.

mod binned;
mod predictor;
pub mod report;

pub use binned::{binned_verify, BinResult, BinnedResult};
pub use predictor::{CostPredictor, DEFAULT_NEIGHBOURS};

use serde::{Deserialize, Serialize};

use crate::dynamics::{Mode, SystemModel};
use crate::error::{Error, Result};
use crate::rng::CounterRng;
use crate::rollout::{batch_cost, default_dt};
use crate::sampling::{rejection_sample, Accepted, DEFAULT_MAX_REJECTION_FACTOR};
use crate::valuefn::ValueFunctionHandle;

/// Maximum number of violating samples kept in a result.
pub const VIOLATION_LOG_CAP: usize = 64;

/// Smallest integer `N ≥ (2/ε)(ln(1/β) + 1)`.
pub fn required_samples(epsilon: f64, beta: f64) -> Result<usize> {
    for (name, v) in [("epsilon", epsilon), ("beta", beta)] {
        if !(v > 0.0 && v < 1.0) {
            return Err(Error::Domain(format!("{name} must lie in (0, 1), got {v}")));
        }
    }
    let n = (2.0 / epsilon) * ((1.0 / beta).ln() + 1.0);
    if n > u32::MAX as f64 {
        return Err(Error::Domain(format!("sample bound {n:.3e} is too large")));
    }
    Ok(n.ceil() as usize)
}

fn default_max_iterations() -> usize {
    20
}

fn default_rejection() -> u64 {
    DEFAULT_MAX_REJECTION_FACTOR
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifyConfig {
    pub epsilon: f64,
    pub beta: f64,
    /// Samples per iteration; derived from `(epsilon, beta)` when absent.
    #[serde(default)]
    pub samples: Option<usize>,
    #[serde(default = "default_max_iterations")]
    pub max_iterations: usize,
    #[serde(default)]
    pub seed: u64,
    /// Rollout step; the system default when absent.
    #[serde(default)]
    pub dt: Option<f64>,
    #[serde(default = "default_rejection")]
    pub max_rejection_factor: u64,
}

impl VerifyConfig {
    pub fn new(epsilon: f64, beta: f64, seed: u64) -> Self {
        Self {
            epsilon,
            beta,
            samples: None,
            max_iterations: default_max_iterations(),
            seed,
            dt: None,
            max_rejection_factor: DEFAULT_MAX_REJECTION_FACTOR,
        }
    }

    pub fn validate(&self) -> Result<()> {
        required_samples(self.epsilon, self.beta)?;
        if self.max_iterations == 0 {
            return Err(Error::InvalidParameter("max_iterations must be at least 1".into()));
        }
        if self.samples == Some(0) {
            return Err(Error::InvalidParameter("samples must be at least 1".into()));
        }
        if let Some(dt) = self.dt {
            if !(dt.is_finite() && dt > 0.0) {
                return Err(Error::InvalidParameter(format!("dt must be positive, got {dt}")));
            }
        }
        if self.max_rejection_factor == 0 {
            return Err(Error::InvalidParameter("max_rejection_factor must be at least 1".into()));
        }
        Ok(())
    }

    /// `N` used per iteration.
    pub fn sample_count(&self) -> Result<usize> {
        let bound = required_samples(self.epsilon, self.beta)?;
        Ok(match self.samples {
            Some(n) => {
                if n < bound {
                    log::warn!("{n} samples per iteration is below the bound {bound}; no guarantee holds");
                }
                n
            }
            None => bound,
        })
    }

    pub fn rollout_dt(&self, system: &SystemModel) -> f64 {
        self.dt.unwrap_or_else(|| default_dt(system))
    }
}

/// A logged counterexample.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ViolatingSample {
    pub iteration: usize,
    pub state: Vec<f64>,
    pub value: f64,
    #[serde(with = "report::ext_f64")]
    pub cost: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifyResult {
    pub mode: Mode,
    #[serde(with = "report::ext_f64")]
    pub delta_hat: f64,
    /// `δ₀, δ₁, …`; the last entry equals `delta_hat`.
    #[serde(with = "report::ext_f64_vec")]
    pub iteration_deltas: Vec<f64>,
    /// The last batch contained no violation.
    pub converged: bool,
    /// Sampling the candidate set was exhausted; the certificate is empty.
    pub degenerate: bool,
    pub iterations: usize,
    pub samples_per_iteration: usize,
    pub required_samples: usize,
    pub total_rollouts: u64,
    pub total_proposals: u64,
    pub violating_samples_logged: Vec<ViolatingSample>,
    pub seed: u64,
    pub epsilon: f64,
    pub beta: f64,
}

impl VerifyResult {
    /// Whether the probabilistic guarantee applies.
    pub fn certified(&self) -> bool {
        self.converged
    }

    pub fn recovered_member(&self, vf: &ValueFunctionHandle, x: &[f64]) -> bool {
        recovered_member(vf, self.delta_hat, x, self.mode)
    }
}

/// Membership in the recovered set: `Ṽ(x,0) > δ̂` for avoid, `Ṽ(x,0) < δ̂` for reach.
pub fn recovered_member(vf: &ValueFunctionHandle, delta_hat: f64, x: &[f64], mode: Mode) -> bool {
    beyond_level(vf.value(x, 0.0), delta_hat, mode)
}

#[inline]
pub(crate) fn beyond_level(value: f64, delta: f64, mode: Mode) -> bool {
    match mode {
        Mode::Avoid => value > delta,
        Mode::Reach => value < delta,
    }
}

/// The trivial starting level of the algorithm.
pub fn initial_delta(mode: Mode) -> f64 {
    match mode {
        Mode::Avoid => f64::NEG_INFINITY,
        Mode::Reach => f64::INFINITY,
    }
}

/// Level used for an empty certificate.
pub fn empty_delta(mode: Mode) -> f64 {
    -initial_delta(mode)
}

/// Exact level for a finite set: the most extreme `Ṽ` among states whose
/// rollout violates the objective (`−∞` / `+∞` when none does).
pub fn exact_delta(values: &[f64], costs: &[f64], mode: Mode) -> f64 {
    let mut delta = initial_delta(mode);
    for (&v, &j) in values.iter().zip(costs) {
        if !mode.is_safe_cost(j) {
            delta = match mode {
                Mode::Avoid => delta.max(v),
                Mode::Reach => delta.min(v),
            };
        }
    }
    delta
}

/// Draws `count` states uniformly from `{x ∈ X : Ṽ(x,0) > delta}` (`<` for
/// reach), returning them with their values.
pub fn sample_super_level(
    vf: &ValueFunctionHandle,
    system: &SystemModel,
    delta: f64,
    count: usize,
    rng: &CounterRng,
    max_rejection_factor: u64,
) -> Result<Accepted<f64>> {
    let mode = system.mode();
    rejection_sample(system, rng, count, max_rejection_factor, |x| {
        let v = vf.value(x, 0.0);
        beyond_level(v, delta, mode).then_some(v)
    })
}

/// Runs the verification loop over the whole state box.
pub fn scenario_verify(vf: &ValueFunctionHandle, system: &SystemModel, config: &VerifyConfig) -> Result<VerifyResult> {
    verify_region(vf, system, config, 0, &|_| true)
}

/// The verification loop restricted to `region`, using random substream `tag`.
pub(crate) fn verify_region(
    vf: &ValueFunctionHandle,
    system: &SystemModel,
    config: &VerifyConfig,
    tag: u64,
    region: &(dyn Fn(&[f64]) -> bool + Sync),
) -> Result<VerifyResult> {
    config.validate()?;
    let mode = system.mode();
    let n = config.sample_count()?;
    let dt = config.rollout_dt(system);
    let stream = CounterRng::new(config.seed).substream(tag);

    let mut delta = initial_delta(mode);
    let mut result = VerifyResult {
        mode,
        delta_hat: delta,
        iteration_deltas: vec![delta],
        converged: false,
        degenerate: false,
        iterations: 0,
        samples_per_iteration: n,
        required_samples: required_samples(config.epsilon, config.beta)?,
        total_rollouts: 0,
        total_proposals: 0,
        violating_samples_logged: Vec::new(),
        seed: config.seed,
        epsilon: config.epsilon,
        beta: config.beta,
    };

    for i in 0..config.max_iterations {
        result.iterations = i + 1;
        let rng = stream.substream(i as u64);
        let level = delta;
        // the level test is cheap; the region test may query a predictor
        let drawn = rejection_sample(system, &rng, n, config.max_rejection_factor, |x| {
            let v = vf.value(x, 0.0);
            (beyond_level(v, level, mode) && region(x)).then_some(v)
        });
        let drawn = match drawn {
            Ok(d) => d,
            Err(Error::SamplingExhausted { proposals, accepted, .. }) => {
                log::warn!(
                    "candidate set beyond level {level} exhausted after {proposals} proposals ({accepted} accepted); certificate is empty"
                );
                result.total_proposals += proposals;
                result.degenerate = true;
                result.converged = true;
                result.delta_hat = empty_delta(mode);
                result.iteration_deltas.push(result.delta_hat);
                return Ok(result);
            }
            Err(e) => return Err(e),
        };
        result.total_proposals += drawn.proposals;
        let costs = batch_cost(system, vf, &drawn.states, dt)?;
        result.total_rollouts += costs.len() as u64;

        let mut worst: Option<f64> = None;
        for (k, c) in costs.iter().enumerate() {
            if mode.is_safe_cost(c.j) {
                continue;
            }
            let v = drawn.tags[k];
            worst = Some(match (worst, mode) {
                (None, _) => v,
                (Some(w), Mode::Avoid) => w.max(v),
                (Some(w), Mode::Reach) => w.min(v),
            });
            if result.violating_samples_logged.len() < VIOLATION_LOG_CAP {
                result.violating_samples_logged.push(ViolatingSample {
                    iteration: i,
                    state: drawn.states[k].clone(),
                    value: v,
                    cost: c.j,
                });
            }
        }
        match worst {
            Some(w) => {
                log::info!("iteration {i}: violations found, delta {delta} -> {w}");
                delta = w;
                result.iteration_deltas.push(delta);
            }
            None => {
                log::info!("iteration {i}: no violation among {n} samples");
                result.converged = true;
                break;
            }
        }
    }
    result.delta_hat = delta;
    if !result.converged {
        log::warn!("no violation-free batch within {} iterations", config.max_iterations);
    }
    Ok(result)
}
