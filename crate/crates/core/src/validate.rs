//! Statistical validation of certificates: violation rates on the recovered
//! set, Monte-Carlo volumes, containment against a ground-truth grid, cost
//! histograms and slice exports.
//!
//! Every estimate draws from its own substream of the validation seed, which
//! should differ from the certification seed.

use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{Mode, SystemModel};
use crate::error::{Error, Result};
use crate::groundtruth::GridValueFunction;
use crate::rng::CounterRng;
use crate::rollout::batch_cost;
use crate::sampling::{rejection_sample, uniform_states};
use crate::valuefn::ValueFunctionHandle;
use crate::verify::report::{ext_f64, ext_f64_vec, Certificate, Outcome};
use crate::verify::{beyond_level, empty_delta, BinnedResult, CostPredictor, VerifyResult};

const RATE_TAG: u64 = 1;
const VOLUME_TAG: u64 = 2;
const CONTAINMENT_TAG: u64 = 3;
const TRAINED_TAG: u64 = 4;

/// The set a certificate vouches for.
#[derive(Clone, Debug)]
pub enum RecoveredSet {
    /// `{Ṽ(x,0) > δ̂}` (avoid) or `{Ṽ(x,0) < δ̂}` (reach).
    Level { mode: Mode, delta_hat: f64 },
    /// Per-region levels selected by the predictor.
    Binned {
        mode: Mode,
        result: BinnedResult,
        predictor: Arc<CostPredictor>,
    },
}

impl RecoveredSet {
    pub fn level(mode: Mode, delta_hat: f64) -> Self {
        Self::Level { mode, delta_hat }
    }

    pub fn from_result(result: &VerifyResult) -> Self {
        Self::level(result.mode, result.delta_hat)
    }

    /// Recovered set described by a certificate; binned certificates need
    /// the predictor they were partitioned with.
    pub fn from_certificate(cert: &Certificate, predictor: Option<Arc<CostPredictor>>) -> Result<Self> {
        match &cert.outcome {
            Outcome::Uniform { result } => Ok(Self::from_result(result)),
            Outcome::Binned { result, .. } => {
                let predictor = predictor
                    .ok_or_else(|| Error::Config("binned certificate needs its predictor".into()))?;
                Ok(Self::Binned {
                    mode: cert.mode,
                    result: result.clone(),
                    predictor,
                })
            }
        }
    }

    pub fn mode(&self) -> Mode {
        match self {
            Self::Level { mode, .. } | Self::Binned { mode, .. } => *mode,
        }
    }

    /// Level applying at `x`.
    pub fn level_at(&self, x: &[f64]) -> f64 {
        match self {
            Self::Level { delta_hat, .. } => *delta_hat,
            Self::Binned { result, predictor, .. } => {
                result.bins[result.bin_of(predictor.predict(x))].result.delta_hat
            }
        }
    }

    pub fn contains_value(&self, x: &[f64], value: f64) -> bool {
        beyond_level(value, self.level_at(x), self.mode())
    }

    pub fn contains(&self, vf: &ValueFunctionHandle, x: &[f64]) -> bool {
        self.contains_value(x, vf.value(x, 0.0))
    }

    /// Known to be empty without sampling.
    pub fn is_trivially_empty(&self) -> bool {
        let sentinel = empty_delta(self.mode());
        match self {
            Self::Level { delta_hat, .. } => *delta_hat == sentinel,
            Self::Binned { result, .. } => result.bins.iter().all(|b| b.result.delta_hat == sentinel),
        }
    }
}

/// Standard error of a binomial proportion.
pub fn binomial_std_error(p: f64, n: usize) -> f64 {
    if n == 0 {
        return f64::NAN;
    }
    (p * (1.0 - p) / n as f64).sqrt()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ViolationEstimate {
    pub samples_drawn: usize,
    pub violation_count: usize,
    /// `None` when the recovered set is empty.
    pub violation_rate: Option<f64>,
    pub std_error: Option<f64>,
    pub empty_recovered_set: bool,
    pub proposals: u64,
    pub clamped_trajectories: usize,
    pub nonfinite_trajectories: usize,
    /// Per-sample rollout costs, in sample order.
    #[serde(skip)]
    pub costs: Vec<f64>,
}

impl ViolationEstimate {
    /// `rate − z·σ > ε`: the sample is inconsistent with the guarantee.
    pub fn exceeds(&self, epsilon: f64, z: f64) -> bool {
        match (self.violation_rate, self.std_error) {
            (Some(r), Some(s)) => r - z * s > epsilon,
            _ => false,
        }
    }
}

/// Rolls out `n_samples` uniform draws from the recovered set and counts
/// violations of the objective.
pub fn estimate_violation_rate(
    vf: &ValueFunctionHandle,
    system: &SystemModel,
    set: &RecoveredSet,
    n_samples: usize,
    seed: u64,
    dt: f64,
    max_rejection_factor: u64,
) -> Result<ViolationEstimate> {
    let empty = ViolationEstimate {
        samples_drawn: 0,
        violation_count: 0,
        violation_rate: None,
        std_error: None,
        empty_recovered_set: true,
        proposals: 0,
        clamped_trajectories: 0,
        nonfinite_trajectories: 0,
        costs: Vec::new(),
    };
    if set.is_trivially_empty() {
        log::warn!("recovered set is empty; violation rate undefined");
        return Ok(empty);
    }
    let rng = CounterRng::new(seed).substream(RATE_TAG);
    let drawn = match rejection_sample(system, &rng, n_samples, max_rejection_factor, |x| {
        set.contains(vf, x).then_some(())
    }) {
        Ok(d) => d,
        Err(Error::SamplingExhausted { proposals, .. }) => {
            log::warn!("recovered set too small to sample; violation rate undefined");
            return Ok(ViolationEstimate { proposals, ..empty });
        }
        Err(e) => return Err(e),
    };
    let costs = batch_cost(system, vf, &drawn.states, dt)?;
    let mode = system.mode();
    let violation_count = costs.iter().filter(|c| !mode.is_safe_cost(c.j)).count();
    let rate = violation_count as f64 / n_samples.max(1) as f64;
    Ok(ViolationEstimate {
        samples_drawn: n_samples,
        violation_count,
        violation_rate: Some(rate),
        std_error: Some(binomial_std_error(rate, n_samples)),
        empty_recovered_set: false,
        proposals: drawn.proposals,
        clamped_trajectories: costs.iter().filter(|c| c.clamped).count(),
        nonfinite_trajectories: costs.iter().filter(|c| c.nonfinite).count(),
        costs: costs.iter().map(|c| c.j).collect(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VolumeFractions {
    pub samples: usize,
    /// Fraction of the box with `Ṽ > 0` (avoid) or `Ṽ < 0` (reach).
    pub trained: f64,
    pub trained_std_error: f64,
    pub recovered: f64,
    pub recovered_std_error: f64,
    /// `1 − recovered/trained`; 0 and flagged when the trained set is empty.
    pub percent_reduction: f64,
    pub trained_empty: bool,
    /// Samples in the recovered set but outside the trained set, counted only
    /// where the applicable level is at least as strict as 0.
    pub nesting_violations: usize,
}

pub fn volume_fractions(
    vf: &ValueFunctionHandle,
    system: &SystemModel,
    set: &RecoveredSet,
    n_samples: usize,
    seed: u64,
) -> Result<VolumeFractions> {
    if n_samples == 0 {
        return Err(Error::InvalidParameter("volume estimate needs at least one sample".into()));
    }
    let mode = system.mode();
    let rng = CounterRng::new(seed).substream(VOLUME_TAG);
    let flags: Vec<(bool, bool, bool)> = uniform_states(system, &rng, n_samples)
        .par_iter()
        .map(|x| {
            let v = vf.value(x, 0.0);
            let level = set.level_at(x);
            let trained = beyond_level(v, 0.0, mode);
            let recovered = beyond_level(v, level, mode);
            let stricter = match mode {
                Mode::Avoid => level >= 0.0,
                Mode::Reach => level <= 0.0,
            };
            (trained, recovered, stricter && recovered && !trained)
        })
        .collect();
    let count = |f: fn(&(bool, bool, bool)) -> bool| flags.iter().filter(|t| f(t)).count();
    let trained = count(|t| t.0) as f64 / n_samples as f64;
    let recovered = count(|t| t.1) as f64 / n_samples as f64;
    let nesting_violations = count(|t| t.2);
    let trained_empty = trained == 0.0;
    if trained_empty {
        log::warn!("trained set has no sampled volume; percent reduction reported as 0");
    }
    Ok(VolumeFractions {
        samples: n_samples,
        trained,
        trained_std_error: binomial_std_error(trained, n_samples),
        recovered,
        recovered_std_error: binomial_std_error(recovered, n_samples),
        percent_reduction: if trained_empty { 0.0 } else { 1.0 - recovered / trained },
        trained_empty,
        nesting_violations,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContainmentReport {
    pub samples: usize,
    /// Samples the truth places outside the certified property: unsafe for
    /// avoid (`V ≤ 0`), unreachable for reach (`V > 0`).
    pub truth_violating: usize,
    pub recovered_members: usize,
    /// Truth-violating samples that the certificate nonetheless admits.
    pub violations: usize,
    /// Violations within one grid cell of the truth's zero level.
    pub violations_in_band: usize,
    pub violations_outside_band: usize,
    /// `violations / truth_violating`.
    pub rate_among_truth_violating: Option<f64>,
    /// `violations / recovered_members`.
    pub rate_among_recovered: Option<f64>,
}

/// Compares the recovered set with a ground-truth grid on uniform samples.
pub fn containment_check(
    vf: &ValueFunctionHandle,
    set: &RecoveredSet,
    truth: &GridValueFunction,
    system: &SystemModel,
    n_samples: usize,
    seed: u64,
) -> Result<ContainmentReport> {
    let mode = system.mode();
    let rng = CounterRng::new(seed).substream(CONTAINMENT_TAG);
    let rows: Vec<Result<(bool, bool, bool)>> = uniform_states(system, &rng, n_samples)
        .par_iter()
        .map(|x| {
            let v_true = truth.value(x, 0.0)?;
            let bad = match mode {
                Mode::Avoid => v_true <= 0.0,
                Mode::Reach => v_true > 0.0,
            };
            let member = set.contains(vf, x);
            let band = if bad && member {
                truth.within_cell_of_zero_level(x, 0.0)?
            } else {
                false
            };
            Ok((bad, member, band))
        })
        .collect();
    let mut r = ContainmentReport {
        samples: n_samples,
        truth_violating: 0,
        recovered_members: 0,
        violations: 0,
        violations_in_band: 0,
        violations_outside_band: 0,
        rate_among_truth_violating: None,
        rate_among_recovered: None,
    };
    for row in rows {
        let (bad, member, band) = row?;
        r.truth_violating += usize::from(bad);
        r.recovered_members += usize::from(member);
        if bad && member {
            r.violations += 1;
            if band {
                r.violations_in_band += 1;
            } else {
                r.violations_outside_band += 1;
            }
        }
    }
    let ratio = |a: usize, b: usize| (b > 0).then(|| a as f64 / b as f64);
    r.rate_among_truth_violating = ratio(r.violations, r.truth_violating);
    r.rate_among_recovered = ratio(r.violations, r.recovered_members);
    Ok(r)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    /// Ascending edges; bin `i` is `[edges[i], edges[i+1])`.
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
    pub underflow: usize,
    pub overflow: usize,
    /// Costs `≤ 0`, counted directly (for the multivehicle system, a
    /// separation at or below the collision radius).
    pub nonpositive: usize,
    pub total: usize,
}

/// Bins trajectory costs. Non-finite costs land in under/overflow.
pub fn min_l_histogram(costs: &[f64], edges: &[f64]) -> Result<Histogram> {
    if edges.len() < 2 || edges.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::InvalidParameter("histogram edges must be ≥ 2 strictly ascending values".into()));
    }
    let mut h = Histogram {
        edges: edges.to_vec(),
        counts: vec![0; edges.len() - 1],
        underflow: 0,
        overflow: 0,
        nonpositive: 0,
        total: costs.len(),
    };
    for &j in costs {
        if j <= 0.0 {
            h.nonpositive += 1;
        }
        if j.is_nan() || j >= edges[edges.len() - 1] {
            h.overflow += 1;
        } else if j < edges[0] {
            h.underflow += 1;
        } else {
            h.counts[edges.partition_point(|&e| e <= j) - 1] += 1;
        }
    }
    Ok(h)
}

/// `bins` equal-width edges covering the finite costs and 0.
pub fn default_edges(costs: &[f64], bins: usize) -> Vec<f64> {
    let finite = costs.iter().copied().filter(|c| c.is_finite());
    let (mut lo, mut hi) = finite.fold((0.0f64, 0.0f64), |(a, b), c| (a.min(c), b.max(c)));
    if hi <= lo {
        hi = lo + 1.0;
    }
    // widen slightly so the maximum falls inside the last bin
    let pad = 1e-9 * (hi - lo).max(1.0);
    lo -= pad;
    hi += pad;
    (0..=bins).map(|i| lo + (hi - lo) * i as f64 / bins as f64).collect()
}

/// Writes `lower,upper,<name>…` rows for histograms sharing the same edges.
pub fn write_histogram_csv(columns: &[(&str, &Histogram)], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let Some((_, first)) = columns.first() else {
        return Err(Error::InvalidParameter("no histograms to write".into()));
    };
    if columns.iter().any(|(_, h)| h.edges != first.edges) {
        return Err(Error::InvalidParameter("histograms must share their edges".into()));
    }
    let mut out = String::from("lower,upper");
    for (name, _) in columns {
        write!(out, ",{name}").unwrap();
    }
    out.push('\n');
    for i in 0..first.counts.len() {
        write!(out, "{},{}", first.edges[i], first.edges[i + 1]).unwrap();
        for (_, h) in columns {
            write!(out, ",{}", h.counts[i]).unwrap();
        }
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Planar slice of the state box for CSV export.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SliceSpec {
    pub dims: (usize, usize),
    /// Full state; the two sliced coordinates are overwritten.
    pub fixed: Vec<f64>,
    pub resolution: usize,
}

/// Writes `x{a},x{b},value,recovered,truth_value,truth_member` on a regular
/// grid of the slice. `truth_member` mirrors `recovered`: truly safe for
/// avoid, inside the true reach set for reach. Truth columns are empty
/// without a ground truth.
pub fn write_slice_csv(
    vf: &ValueFunctionHandle,
    set: &RecoveredSet,
    truth: Option<&GridValueFunction>,
    system: &SystemModel,
    slice: &SliceSpec,
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    let (a, b) = slice.dims;
    let n = system.state_dim();
    if a >= n || b >= n || a == b || slice.fixed.len() != n || slice.resolution < 2 {
        return Err(Error::InvalidParameter(format!("bad slice specification {slice:?}")));
    }
    let axis = |d: usize, i: usize| {
        let (lo, hi) = (system.state_lower()[d], system.state_upper()[d]);
        let steps = if system.is_periodic(d) {
            slice.resolution
        } else {
            slice.resolution - 1
        };
        lo + (hi - lo) * i as f64 / steps as f64
    };
    let mut x = slice.fixed.clone();
    system.wrap(&mut x);
    let mut out = format!("x{a},x{b},value,recovered,truth_value,truth_member\n");
    for i in 0..slice.resolution {
        for j in 0..slice.resolution {
            x[a] = axis(a, i);
            x[b] = axis(b, j);
            let v = vf.value(&x, 0.0);
            write!(out, "{},{},{},{}", x[a], x[b], v, u8::from(set.contains_value(&x, v))).unwrap();
            match truth {
                Some(g) => {
                    let vt = g.value(&x, 0.0)?;
                    let member = match system.mode() {
                        Mode::Avoid => vt > 0.0,
                        Mode::Reach => vt <= 0.0,
                    };
                    writeln!(out, ",{vt},{}", u8::from(member)).unwrap();
                }
                None => out.push_str(",,\n"),
            }
        }
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Everything `reachcert validate` reports.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub config_hash: String,
    pub certificate_hash: String,
    pub certification_seed: u64,
    pub validation_seed: u64,
    pub mode: Mode,
    pub epsilon: f64,
    #[serde(with = "ext_f64_vec")]
    pub delta_hat: Vec<f64>,
    pub violation: ViolationEstimate,
    /// Rate exceeds `ε` by more than four standard errors.
    pub failed: bool,
    pub volumes: VolumeFractions,
    pub containment: Option<ContainmentReport>,
    pub histogram_recovered: Option<Histogram>,
    pub histogram_trained: Option<Histogram>,
    #[serde(with = "ext_f64")]
    pub histogram_nonpositive_fraction: f64,
}

/// Costs of `n` uniform samples from the trained set, for comparison
/// histograms.
pub fn trained_set_costs(
    vf: &ValueFunctionHandle,
    system: &SystemModel,
    n: usize,
    seed: u64,
    dt: f64,
    max_rejection_factor: u64,
) -> Result<Vec<f64>> {
    let mode = system.mode();
    let rng = CounterRng::new(seed).substream(TRAINED_TAG);
    match rejection_sample(system, &rng, n, max_rejection_factor, |x| {
        beyond_level(vf.value(x, 0.0), 0.0, mode).then_some(())
    }) {
        Ok(d) => Ok(batch_cost(system, vf, &d.states, dt)?.iter().map(|c| c.j).collect()),
        Err(Error::SamplingExhausted { .. }) => Ok(Vec::new()),
        Err(e) => Err(e),
    }
}
