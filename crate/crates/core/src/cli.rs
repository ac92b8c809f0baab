//! `reachcert` command line: `groundtruth`, `verify` and `validate`.
//!
//! Exit codes: 0 success, 1 internal or I/O failure, 2 configuration error,
//! 3 verification did not converge, 4 validation failed.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::dynamics::SystemKind;
use crate::error::{Error, Result};
use crate::groundtruth::{read_grid_file, solve_hjb_vi_with, write_grid_file, Grid, SolverOptions};
use crate::validate::{
    containment_check, default_edges, estimate_violation_rate, min_l_histogram, trained_set_costs, volume_fractions,
    write_histogram_csv, write_slice_csv, RecoveredSet, SliceSpec, ValidationReport,
};
use crate::verify::report::{Certificate, Outcome, CERTIFICATE_SCHEMA_VERSION};
use crate::verify::{binned_verify, scenario_verify, CostPredictor, DEFAULT_NEIGHBOURS};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INTERNAL: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NONCONVERGED: i32 = 3;
pub const EXIT_VALIDATION: i32 = 4;

/// Margin, in standard errors, before a measured rate counts as exceeding ε.
pub const VALIDATION_SIGMAS: f64 = 4.0;

#[derive(Debug, Parser)]
#[command(name = "reachcert", version, about = "Probabilistic safety certificates for reachability value functions")]
pub struct Cli {
    /// Worker threads (defaults to available parallelism).
    #[arg(long, global = true)]
    pub workers: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    #[arg(long)]
    pub config: PathBuf,
    /// Replaces the seed of the block this command uses.
    #[arg(long)]
    pub seed_override: Option<u64>,
    /// Output directory (overrides `output_dir`).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve the grid value function for a low-dimensional system.
    Groundtruth(Common),
    /// Certify the configured value function.
    Verify {
        #[command(flatten)]
        common: Common,
        /// Exit 0 even if no violation-free batch was reached.
        #[arg(long)]
        allow_nonconverged: bool,
    },
    /// Check a certificate by independent sampling.
    Validate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        certificate: PathBuf,
    },
}

/// Parses `args` (including the program name), runs, and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    execute(&cli)
}

pub fn execute(cli: &Cli) -> i32 {
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.workers {
        pool = pool.num_threads(n);
    }
    let pool = match pool.build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start worker pool: {e}");
            return EXIT_INTERNAL;
        }
    };
    match pool.install(|| dispatch(&cli.command)) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code_for(&e)
        }
    }
}

fn exit_code_for(e: &Error) -> i32 {
    match e {
        Error::Io { .. } | Error::SamplingExhausted { .. } | Error::OutOfDomain { .. } => EXIT_INTERNAL,
        _ => EXIT_CONFIG,
    }
}

fn dispatch(cmd: &Command) -> Result<i32> {
    match cmd {
        Command::Groundtruth(c) => cmd_groundtruth(c),
        Command::Verify {
            common,
            allow_nonconverged,
        } => cmd_verify(common, *allow_nonconverged),
        Command::Validate { common, certificate } => cmd_validate(common, certificate),
    }
}

fn load(common: &Common) -> Result<(RunConfig, PathBuf)> {
    let cfg = RunConfig::load(&common.config)?;
    let out = common.out.clone().unwrap_or_else(|| cfg.output_dir());
    std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    Ok((cfg, out))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(bytes)))
}

fn fmt_vec(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x}")).collect();
    format!("[{}]", parts.join(", "))
}

pub fn cmd_groundtruth(common: &Common) -> Result<i32> {
    let (cfg, out) = load(common)?;
    let system = cfg.system()?;
    let gt = cfg
        .groundtruth
        .as_ref()
        .ok_or_else(|| Error::Config("config has no groundtruth block".into()))?;
    let grid = Grid::for_system(&system, &gt.counts)?;
    let limit = grid.cfl_limit(&system.dissipation());
    let dt = gt.dt.unwrap_or(0.5 * limit);
    let mut opts = SolverOptions::new(dt);
    opts.slices = gt.slices;

    let started = Instant::now();
    let gvf = solve_hjb_vi_with(&system, &grid, &opts)?;
    let elapsed = started.elapsed();

    let path = out.join(&gt.output);
    write_grid_file(&gvf, &path)?;
    let steps = (system.horizon() / dt - 1e-9).ceil().max(1.0);
    let mut summary = String::new();
    writeln!(summary, "system: {} ({:?})", system.name(), system.mode()).unwrap();
    writeln!(summary, "config_hash: {}", cfg.hash()).unwrap();
    writeln!(summary, "grid_counts: {:?}", grid.counts()).unwrap();
    writeln!(summary, "grid_lower: {}", fmt_vec(grid.lower())).unwrap();
    writeln!(summary, "grid_upper: {}", fmt_vec(grid.upper())).unwrap();
    writeln!(summary, "periodic_dims: {:?}", system.periodic_dims()).unwrap();
    writeln!(summary, "horizon: {}", system.horizon()).unwrap();
    writeln!(summary, "dt: {}", system.horizon() / steps).unwrap();
    writeln!(summary, "steps: {steps}").unwrap();
    writeln!(summary, "cfl_limit: {limit}").unwrap();
    writeln!(summary, "stored_slices: {}", gvf.times().len()).unwrap();
    writeln!(summary, "nodes: {}", grid.node_count()).unwrap();
    writeln!(summary, "output: {}", gt.output.display()).unwrap();
    writeln!(summary, "output_sha256: {}", sha256_file(&path)?).unwrap();
    write_text(&out.join("groundtruth_summary.txt"), &summary)?;

    print!("{summary}");
    println!("runtime_seconds: {:.3}", elapsed.as_secs_f64());
    Ok(EXIT_OK)
}

pub fn cmd_verify(common: &Common, allow_nonconverged: bool) -> Result<i32> {
    let (mut cfg, out) = load(common)?;
    if let Some(seed) = common.seed_override {
        if let Some(v) = cfg.verify.as_mut() {
            v.config.seed = seed;
        }
    }
    let system = cfg.system()?;
    let vf = cfg.value_function(&system)?;
    let block = cfg.verify_block()?.clone();
    let vcfg = &block.config;

    let started = Instant::now();
    let outcome = if block.bins > 1 {
        let predictor = match &block.predictor_file {
            Some(p) => CostPredictor::load_csv(&system, cfg.existing(p, "predictor")?, DEFAULT_NEIGHBOURS)?,
            None => CostPredictor::train(&system, &vf, block.predictor_samples, vcfg.seed, vcfg.rollout_dt(&system))?,
        };
        let predictor_file = "predictor.csv".to_string();
        predictor.save_csv(out.join(&predictor_file))?;
        let result = binned_verify(&vf, &system, &predictor, block.bins, vcfg)?;
        Outcome::Binned { result, predictor_file }
    } else {
        Outcome::Uniform {
            result: scenario_verify(&vf, &system, vcfg)?,
        }
    };
    let elapsed = started.elapsed();

    let cert = Certificate {
        schema_version: CERTIFICATE_SCHEMA_VERSION,
        config_hash: cfg.hash(),
        system: system.name().to_string(),
        mode: system.mode(),
        value_function: format!("{:?}", vf.provenance()),
        verify: vcfg.clone(),
        outcome,
    };
    let path = out.join("certificate.json");
    cert.write(&path)?;

    println!("certificate: {}", path.display());
    println!("samples_per_iteration: {}", vcfg.sample_count()?);
    match &cert.outcome {
        Outcome::Uniform { result } => {
            println!("delta_hat: {}", result.delta_hat);
            println!("iterations: {}", result.iterations);
            println!("converged: {}", result.converged);
            if result.degenerate {
                println!("recovered set: empty");
            }
        }
        Outcome::Binned { result, .. } => {
            for b in &result.bins {
                println!(
                    "bin {}: delta_hat {} iterations {} converged {}",
                    b.index, b.result.delta_hat, b.result.iterations, b.result.converged
                );
            }
        }
    }
    println!("runtime_seconds: {:.3}", elapsed.as_secs_f64());

    if !cert.converged() {
        eprintln!("warning: verification did not converge; no guarantee holds");
        if !allow_nonconverged {
            return Ok(EXIT_NONCONVERGED);
        }
    }
    Ok(EXIT_OK)
}

/// Heading slices at −π/2, 0 and π through the (px, py) plane.
fn default_slices(cfg: &RunConfig) -> Vec<SliceSpec> {
    match cfg.system.kind {
        SystemKind::Dubins3d { .. } => [-std::f64::consts::FRAC_PI_2, 0.0, std::f64::consts::PI]
            .iter()
            .map(|&th| SliceSpec {
                dims: (0, 1),
                fixed: vec![0.0, 0.0, th],
                resolution: 101,
            })
            .collect(),
        _ => Vec::new(),
    }
}

pub fn cmd_validate(common: &Common, certificate: &Path) -> Result<i32> {
    let (mut cfg, out) = load(common)?;
    let mut vblock = cfg.validate.clone().unwrap_or_default();
    if let Some(seed) = common.seed_override {
        vblock.seed = seed;
        cfg.validate = Some(vblock.clone());
    }
    let system = cfg.system()?;
    let vf = cfg.value_function(&system)?;
    let cert = Certificate::read(certificate)?;
    if cert.config_hash != cfg.hash() {
        log::warn!("certificate was produced from a different config ({})", cert.config_hash);
    }
    if cert.mode != system.mode() {
        return Err(Error::Config(format!(
            "certificate mode {:?} does not match system mode {:?}",
            cert.mode,
            system.mode()
        )));
    }
    if !cert.converged() {
        eprintln!("warning: certificate did not converge; it carries no guarantee");
    }
    let predictor = match &cert.outcome {
        Outcome::Binned { predictor_file, .. } => {
            let base = certificate.parent().unwrap_or(Path::new("."));
            Some(Arc::new(CostPredictor::load_csv(&system, base.join(predictor_file), DEFAULT_NEIGHBOURS)?))
        }
        Outcome::Uniform { .. } => None,
    };
    let set = RecoveredSet::from_certificate(&cert, predictor)?;
    let deltas: Vec<f64> = match &cert.outcome {
        Outcome::Uniform { result } => vec![result.delta_hat],
        Outcome::Binned { result, .. } => result.bins.iter().map(|b| b.result.delta_hat).collect(),
    };
    let dt = cert.verify.rollout_dt(&system);
    let rejection = cert.verify.max_rejection_factor;
    let volume_samples = vblock.volume_samples.unwrap_or(vblock.samples);
    let started = Instant::now();

    let violation = estimate_violation_rate(&vf, &system, &set, vblock.samples, vblock.seed, dt, rejection)?;
    let volumes = volume_fractions(&vf, &system, &set, volume_samples, vblock.seed)?;
    let truth = match &vblock.truth {
        Some(p) => Some(read_grid_file(cfg.existing(p, "truth")?)?),
        None => None,
    };
    let containment = match &truth {
        Some(g) => Some(containment_check(&vf, &set, g, &system, volume_samples, vblock.seed)?),
        None => None,
    };

    let trained_costs = trained_set_costs(&vf, &system, vblock.trained_histogram_samples, vblock.seed, dt, rejection)?;
    let edges = match &vblock.histogram_edges {
        Some(e) => e.clone(),
        None => {
            let all: Vec<f64> = violation.costs.iter().chain(&trained_costs).copied().collect();
            default_edges(&all, vblock.histogram_bins.max(1))
        }
    };
    let hist_recovered = min_l_histogram(&violation.costs, &edges)?;
    let hist_trained = min_l_histogram(&trained_costs, &edges)?;
    write_histogram_csv(
        &[("recovered", &hist_recovered), ("trained", &hist_trained)],
        out.join("histogram.csv"),
    )?;

    let slices = vblock.slices.clone().unwrap_or_else(|| default_slices(&cfg));
    for (k, s) in slices.iter().enumerate() {
        write_slice_csv(&vf, &set, truth.as_ref(), &system, s, out.join(format!("slice_{k}.csv")))?;
    }

    let failed = violation.exceeds(cert.verify.epsilon, VALIDATION_SIGMAS);
    let nonpositive_fraction = if hist_recovered.total > 0 {
        hist_recovered.nonpositive as f64 / hist_recovered.total as f64
    } else {
        f64::NAN
    };
    let report = ValidationReport {
        config_hash: cfg.hash(),
        certificate_hash: sha256_file(certificate)?,
        certification_seed: cert.verify.seed,
        validation_seed: vblock.seed,
        mode: system.mode(),
        epsilon: cert.verify.epsilon,
        delta_hat: deltas,
        violation,
        failed,
        volumes,
        containment,
        histogram_recovered: Some(hist_recovered),
        histogram_trained: Some(hist_trained),
        histogram_nonpositive_fraction: nonpositive_fraction,
    };
    if report.certification_seed == report.validation_seed {
        log::warn!("validation seed equals the certification seed");
    }
    let mut json = serde_json::to_string_pretty(&report)?;
    json.push('\n');
    write_text(&out.join("validation.json"), &json)?;

    let v = &report.violation;
    if v.empty_recovered_set {
        eprintln!("warning: recovered set is empty; nothing to validate");
    }
    match v.violation_rate {
        Some(r) => println!(
            "violation_rate: {r} ({} of {}, std error {})",
            v.violation_count,
            v.samples_drawn,
            v.std_error.unwrap_or(0.0)
        ),
        None => println!("violation_rate: undefined"),
    }
    println!(
        "volume: trained {} recovered {} reduction {}",
        report.volumes.trained, report.volumes.recovered, report.volumes.percent_reduction
    );
    if let Some(c) = &report.containment {
        println!(
            "containment: {} violations ({} outside the grid band) among {} truth-violating samples",
            c.violations, c.violations_outside_band, c.truth_violating
        );
    }
    println!("runtime_seconds: {:.3}", started.elapsed().as_secs_f64());
    if failed {
        eprintln!(
            "error: violation rate exceeds epsilon = {} by more than {VALIDATION_SIGMAS} standard errors",
            report.epsilon
        );
        return Ok(EXIT_VALIDATION);
    }
    Ok(EXIT_OK)
}
