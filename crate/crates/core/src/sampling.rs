//! Rejection sampling over the state box.
//!
//! Proposal `i` is a pure function of `(rng, i)` and the first `count`
//! accepted proposals in index order are returned, so the output does not
//! depend on how proposals are batched or how many workers evaluate them.

use rayon::prelude::*;

use crate::dynamics::SystemModel;
use crate::error::{Error, Result};
use crate::rng::CounterRng;

pub const DEFAULT_MAX_REJECTION_FACTOR: u64 = 10_000;

const MIN_BATCH: u64 = 4096;
const MAX_BATCH: u64 = 1 << 22;

/// Accepted states with whatever the predicate attached to them.
#[derive(Clone, Debug, PartialEq)]
pub struct Accepted<T> {
    pub states: Vec<Vec<f64>>,
    pub tags: Vec<T>,
    /// Proposals consumed, up to and including the last accepted one.
    pub proposals: u64,
}

/// The `index`-th uniform proposal of `rng` over the state box.
pub fn proposal(system: &SystemModel, rng: &CounterRng, index: u64) -> Vec<f64> {
    let mut x = vec![0.0; system.state_dim()];
    rng.draw(index)
        .point_in_box(system.state_lower(), system.state_upper(), &mut x);
    x
}

/// Draws uniform proposals until `count` of them are accepted by `accept`.
///
/// Fails with [`Error::SamplingExhausted`] once `count × max_rejection_factor`
/// proposals have been spent.
pub fn rejection_sample<T, F>(
    system: &SystemModel,
    rng: &CounterRng,
    count: usize,
    max_rejection_factor: u64,
    accept: F,
) -> Result<Accepted<T>>
where
    T: Send,
    F: Fn(&[f64]) -> Option<T> + Sync,
{
    if max_rejection_factor == 0 {
        return Err(Error::InvalidParameter("max_rejection_factor must be at least 1".into()));
    }
    let budget = (count as u64).saturating_mul(max_rejection_factor);
    let mut out = Accepted {
        states: Vec::with_capacity(count),
        tags: Vec::with_capacity(count),
        proposals: 0,
    };
    if count == 0 {
        return Ok(out);
    }
    let mut next = 0u64;
    while next < budget {
        let need = (count - out.states.len()) as u64;
        // size the batch from the acceptance rate seen so far
        let guess = if out.states.is_empty() {
            need.saturating_mul(if next == 0 { 1 } else { 8 })
        } else {
            need.saturating_mul(next) / out.states.len() as u64 * 5 / 4
        };
        let batch = guess.clamp(MIN_BATCH, MAX_BATCH).min(budget - next);
        let hits: Vec<Option<(Vec<f64>, T)>> = (next..next + batch)
            .into_par_iter()
            .map(|i| {
                let x = proposal(system, rng, i);
                accept(&x).map(|tag| (x, tag))
            })
            .collect();
        for (offset, hit) in hits.into_iter().enumerate() {
            if let Some((x, tag)) = hit {
                out.states.push(x);
                out.tags.push(tag);
                if out.states.len() == count {
                    out.proposals = next + offset as u64 + 1;
                    return Ok(out);
                }
            }
        }
        next += batch;
    }
    Err(Error::SamplingExhausted {
        proposals: next,
        accepted: out.states.len(),
        requested: count,
    })
}

/// `count` plain uniform samples over the state box.
pub fn uniform_states(system: &SystemModel, rng: &CounterRng, count: usize) -> Vec<Vec<f64>> {
    (0..count as u64)
        .into_par_iter()
        .map(|i| proposal(system, rng, i))
        .collect()
}
