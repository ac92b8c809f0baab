//! Probabilistic safety certificates for approximate reachability value functions.
//!
//! Given a candidate value function `Ṽ(x, t)` for a reach or avoid problem, the
//! crate estimates the uniform level correction `δ̂` by scenario sampling, so that
//! the corrected level set `{x : Ṽ(x, 0) > δ̂}` (avoid) or `{x : Ṽ(x, 0) < δ̂}`
//! (reach) is safe under the induced policy with user-chosen violation and
//! confidence parameters.
//!
//! Module map:
//!
//! - [`dynamics`]: benchmark systems, control boxes and target functions.
//! - [`groundtruth`]: Lax–Friedrichs level-set solver for the HJB variational inequality.
//! - [`valuefn`]: value-function handles (grid, sinusoidal network, analytic, perturbed)
//!   and the policy they induce.
//! - [`rollout`]: closed-loop RK4 simulation and the trajectory-minimum cost.
//! - [`verify`]: the scenario verification loop, sample bound and binned refinement.
//! - [`validate`]: holdout violation rates, volumes, containment and histograms.
//! - [`cli`]: the `reachcert` command-line pipeline.

pub mod cli;
pub mod config;
pub mod dynamics;
pub mod error;
pub mod groundtruth;
pub mod rng;
pub mod rollout;
pub mod sampling;
pub mod validate;
pub mod valuefn;
pub mod verify;

pub use dynamics::{Mode, SystemKind, SystemModel, TargetFunction};
pub use error::{Error, Result};
pub use groundtruth::{Grid, GridValueFunction};
pub use rng::CounterRng;
pub use rollout::{RolloutCost, Trajectory};
pub use valuefn::{Perturbation, Provenance, SirenNetwork, ValueFunctionHandle};
pub use verify::{VerifyConfig, VerifyResult};
