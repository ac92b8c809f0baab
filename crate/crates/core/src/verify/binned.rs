//! Binned verification: the state box is split into regions by quantiles of a
//! cost predictor and each region is verified as its own domain. The
//! predictor only shapes the partition; each region's certificate stands on
//! its own samples.

use serde::{Deserialize, Serialize};

use super::{report, verify_region, CostPredictor, VerifyConfig, VerifyResult};
use crate::dynamics::SystemModel;
use crate::error::{Error, Result};
use crate::rng::CounterRng;
use crate::sampling::uniform_states;
use crate::valuefn::ValueFunctionHandle;

/// Calibration draws used to place the quantile edges.
pub const CALIBRATION_SAMPLES: usize = 4096;
const CALIBRATION_TAG: u64 = 0xCA11_B000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinResult {
    pub index: usize,
    /// Region is `lower ≤ prediction < upper`.
    #[serde(with = "report::ext_f64")]
    pub lower: f64,
    #[serde(with = "report::ext_f64")]
    pub upper: f64,
    pub result: VerifyResult,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinnedResult {
    /// Interior edges, strictly increasing; `edges.len() + 1` regions.
    pub edges: Vec<f64>,
    pub bins: Vec<BinResult>,
}

impl BinnedResult {
    /// Region containing a predictor output.
    pub fn bin_of(&self, prediction: f64) -> usize {
        bin_index(&self.edges, prediction)
    }

    pub fn recovered_member(&self, vf: &ValueFunctionHandle, predictor: &CostPredictor, x: &[f64]) -> bool {
        let b = &self.bins[self.bin_of(predictor.predict(x))];
        b.result.recovered_member(vf, x)
    }

    /// All regions reached a violation-free batch.
    pub fn converged(&self) -> bool {
        self.bins.iter().all(|b| b.result.converged)
    }
}

fn bin_index(edges: &[f64], p: f64) -> usize {
    edges.partition_point(|&e| e <= p)
}

/// Quantile edges of `predictions` for `bins` regions, duplicates removed.
pub fn quantile_edges(predictions: &mut [f64], bins: usize) -> Vec<f64> {
    predictions.sort_by(f64::total_cmp);
    let n = predictions.len();
    let mut edges: Vec<f64> = Vec::new();
    if n == 0 {
        return edges;
    }
    for b in 1..bins {
        let e = predictions[(b * n / bins).min(n - 1)];
        // an edge equal to the smallest prediction would leave an empty region
        if e > predictions[0] && edges.last().map_or(true, |&last| e > last) {
            edges.push(e);
        }
    }
    edges
}

/// Verifies each predictor-quantile region separately. Region `b` draws from
/// random substream `b`, so a single region reproduces [`super::scenario_verify`].
pub fn binned_verify(
    vf: &ValueFunctionHandle,
    system: &SystemModel,
    predictor: &CostPredictor,
    bins: usize,
    config: &VerifyConfig,
) -> Result<BinnedResult> {
    if bins == 0 {
        return Err(Error::InvalidParameter("bins must be at least 1".into()));
    }
    config.validate()?;
    let rng = CounterRng::new(config.seed).substream(CALIBRATION_TAG);
    let mut preds: Vec<f64> = uniform_states(system, &rng, CALIBRATION_SAMPLES)
        .iter()
        .map(|x| predictor.predict(x))
        .collect();
    let edges = quantile_edges(&mut preds, bins);
    if edges.len() + 1 < bins {
        log::info!("{} of {bins} quantile bins are distinct", edges.len() + 1);
    }

    let mut out = Vec::with_capacity(edges.len() + 1);
    for b in 0..=edges.len() {
        let lower = if b == 0 { f64::NEG_INFINITY } else { edges[b - 1] };
        let upper = edges.get(b).copied().unwrap_or(f64::INFINITY);
        let region = |x: &[f64]| {
            if edges.is_empty() {
                return true;
            }
            bin_index(&edges, predictor.predict(x)) == b
        };
        let result = verify_region(vf, system, config, b as u64, &region)?;
        if result.degenerate {
            log::warn!("bin {b}: recovered subset is empty");
        }
        out.push(BinResult {
            index: b,
            lower,
            upper,
            result,
        });
    }
    Ok(BinnedResult { edges, bins: out })
}
