//! Seeded simulation of policies and experiment execution.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::{AlgorithmSpec, ExperimentConfig};
use super::trace::{Checkpoint, RegretTrace};
use crate::environment::Instance;
use crate::error::{invalid, Error, Result};
use crate::estimator::{quad_form, BetaSpec};
use crate::policy::Policy;
use crate::rng::{mix_seed, RngStream, StreamPurpose};

/// Runtime switches that are not part of the config.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RunOptions {
    /// Worker threads; `None` uses all cores.
    pub threads: Option<usize>,
    /// Per-round invariant checking.
    pub assert_invariants: bool,
}

/// Seed that identifies repetition `rep` of an experiment.
pub fn run_seed(base_seed: u64, rep: u64) -> u64 {
    mix_seed(base_seed, rep)
}

/// Whether `|theta_hat - theta*|_V^2 <= beta_{s, s^2}` for the policy's
/// current estimator.
fn concentration_holds(policy: &dyn Policy, instance: &Instance) -> Result<bool> {
    let est = policy.estimator();
    let s = est.step() as f64;
    let beta = est.beta(&BetaSpec::Logdet, s * s, 1.0, None)?;
    let err = est.theta_hat() - instance.theta_star();
    Ok(quad_form(est.precision(), &err) <= beta)
}

/// Plays `horizon` rounds. Rewards come from `noise`, the policy's own
/// randomness from `policy_rng`; regret is measured with the true gaps.
#[allow(clippy::too_many_arguments)]
pub fn simulate(
    policy: &mut dyn Policy,
    instance: &Instance,
    horizon: u64,
    checkpoints: &[u64],
    seed: u64,
    noise: &mut RngStream,
    policy_rng: &mut RngStream,
    audit: bool,
) -> Result<RegretTrace> {
    let gaps = instance.gap_profile().gaps;
    let mut trace = RegretTrace {
        algo: policy.label().to_string(),
        instance: instance.label().to_string(),
        seed,
        checkpoints: Vec::with_capacity(checkpoints.len()),
    };
    let mut next = checkpoints.iter().peekable();
    let mut regret = 0.0;
    let mut gamma = 0.0;
    let mut exploit_rounds = 0u64;
    let mut concentrated = true;
    for t in 1..=horizon {
        let decision = policy.select(instance.actions(), policy_rng)?;
        if audit {
            policy.audit(instance)?;
        }
        let reward = instance.sample_reward(decision.arm, noise)?;
        policy.observe(instance.actions(), decision.arm, reward)?;
        regret += gaps[decision.arm];
        if decision.exploit {
            exploit_rounds += 1;
        } else {
            gamma += decision.info_gain;
        }
        concentrated = concentrated && concentration_holds(policy, instance)?;
        if next.peek() == Some(&&t) {
            next.next();
            trace.checkpoints.push(Checkpoint {
                t,
                cum_regret: regret,
                gamma,
                s_t: policy.estimator().step() - 1,
                exploit_rounds,
                concentration_ok: concentrated,
            });
        }
    }
    Ok(trace)
}

/// Result of one (algorithm, repetition) unit.
#[derive(Debug)]
pub struct RunOutcome {
    pub algo: String,
    pub instance: String,
    pub rep: u64,
    pub seed: u64,
    pub trace: Result<RegretTrace>,
}

/// Runs one repetition of one algorithm.
pub fn run_unit(
    config: &ExperimentConfig,
    spec: &AlgorithmSpec,
    rep: u64,
    assert_invariants: bool,
) -> RunOutcome {
    let seed = run_seed(config.base_seed, rep);
    let mut label = String::new();
    let trace = (|| {
        let instance = config.instance.build(config.base_seed, rep)?;
        label = instance.label().to_string();
        let mut policy = spec.build(&instance, assert_invariants)?;
        let mut noise = RngStream::for_run(seed, 0, StreamPurpose::Noise);
        let mut prng = RngStream::for_run(seed, 0, StreamPurpose::Policy);
        simulate(
            policy.as_mut(),
            &instance,
            config.horizon,
            &config.checkpoints.grid(config.horizon),
            seed,
            &mut noise,
            &mut prng,
            assert_invariants,
        )
    })();
    RunOutcome {
        algo: spec.label(),
        instance: label,
        rep,
        seed,
        trace,
    }
}

fn pool(threads: Option<usize>) -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        if n == 0 {
            return invalid("thread count must be >= 1");
        }
        builder = builder.num_threads(n);
    }
    builder
        .build()
        .map_err(|e| Error::InvalidArgument(format!("cannot build thread pool: {e}")))
}

/// Runs every (algorithm, repetition) unit in memory, in a fixed order.
pub fn execute(config: &ExperimentConfig, opts: RunOptions) -> Result<Vec<RunOutcome>> {
    config.validate()?;
    let units: Vec<(usize, u64)> = (0..config.algorithms.len())
        .flat_map(|a| (0..config.repetitions).map(move |r| (a, r)))
        .collect();
    let pool = pool(opts.threads)?;
    Ok(pool.install(|| {
        units
            .par_iter()
            .map(|&(a, rep)| run_unit(config, &config.algorithms[a], rep, opts.assert_invariants))
            .collect()
    }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRun {
    pub algo: String,
    pub instance: String,
    pub rep: u64,
    pub seed: u64,
    pub file: Option<String>,
    pub status: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub crate_version: String,
    pub config_sha256: String,
    pub runs: Vec<ManifestRun>,
}

pub const MANIFEST_FILE: &str = "manifest.json";

pub fn config_digest(config: &ExperimentConfig) -> Result<String> {
    let digest = Sha256::digest(config.to_json()?.as_bytes());
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

/// Replaces characters that are unsafe in file names.
pub(crate) fn file_stem(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() || "-_.".contains(c) { c } else { '_' })
        .collect()
}

pub fn trace_file_name(algo: &str, instance: &str, rep: u64) -> String {
    format!("{}__{}__rep{rep:04}.csv", file_stem(algo), file_stem(instance))
}

/// Summary of a finished experiment.
#[derive(Debug)]
pub struct ExperimentResult {
    pub output_dir: PathBuf,
    pub manifest: Manifest,
    pub traces: Vec<RegretTrace>,
}

impl ExperimentResult {
    pub fn failures(&self) -> usize {
        self.manifest.runs.iter().filter(|r| r.status != "ok").count()
    }
}

/// Runs the experiment and writes one CSV per run plus the manifest.
pub fn run_experiment(config: &ExperimentConfig, opts: RunOptions) -> Result<ExperimentResult> {
    let dir = &config.output_dir;
    fs::create_dir_all(dir)?;
    let outcomes = execute(config, opts)?;
    let mut runs = Vec::with_capacity(outcomes.len());
    let mut traces = Vec::new();
    for o in outcomes {
        match o.trace {
            Ok(trace) => {
                let name = trace_file_name(&o.algo, &trace.instance, o.rep);
                trace.write_csv(fs::File::create(dir.join(&name))?)?;
                runs.push(ManifestRun {
                    algo: o.algo,
                    instance: trace.instance.clone(),
                    rep: o.rep,
                    seed: o.seed,
                    file: Some(name),
                    status: "ok".into(),
                    error: None,
                });
                traces.push(trace);
            }
            Err(e) => runs.push(ManifestRun {
                algo: o.algo,
                instance: o.instance,
                rep: o.rep,
                seed: o.seed,
                file: None,
                status: "failed".into(),
                error: Some(e.to_string()),
            }),
        }
    }
    let manifest = Manifest {
        crate_version: env!("CARGO_PKG_VERSION").to_string(),
        config_sha256: config_digest(config)?,
        runs,
    };
    write_manifest(dir, &manifest)?;
    Ok(ExperimentResult {
        output_dir: dir.clone(),
        manifest,
        traces,
    })
}

fn write_manifest(dir: &Path, manifest: &Manifest) -> Result<()> {
    let mut text = serde_json::to_string_pretty(manifest)?;
    text.push('\n');
    fs::write(dir.join(MANIFEST_FILE), text)?;
    Ok(())
}
