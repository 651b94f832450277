//! Experiment configuration (JSON).

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::baselines::{BayesIds, LinUcb, Thompson, DEFAULT_MC_SAMPLES};
use crate::environment::{make_eoo_instance, make_random_instance, Instance, InstanceFile};
use crate::error::{invalid, Result};
use crate::estimator::BetaSpec;
use crate::ids::{EtaSpec, GainKind, IdsAlgoState, IdsConfig, InfoGainVariant};
use crate::policy::Policy;
use crate::rng::{RngStream, StreamPurpose};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum InstanceSpec {
    /// Fresh unit-sphere instance per repetition. `seed` defaults to the
    /// experiment's base seed.
    Random {
        d: usize,
        k: usize,
        noise_std: f64,
        #[serde(default)]
        seed: Option<u64>,
    },
    Eoo { epsilon: f64, noise_std: f64 },
    File { path: PathBuf },
}

impl InstanceSpec {
    /// Instance used by repetition `rep`.
    pub fn build(&self, base_seed: u64, rep: u64) -> Result<Instance> {
        match self {
            InstanceSpec::Random { d, k, noise_std, seed } => {
                let mut rng = RngStream::for_run(seed.unwrap_or(base_seed), rep, StreamPurpose::Instance);
                Ok(make_random_instance(*d, *k, *noise_std, &mut rng)?
                    .with_label(format!("random-d{d}-k{k}")))
            }
            InstanceSpec::Eoo { epsilon, noise_std } => make_eoo_instance(*epsilon, *noise_std),
            InstanceSpec::File { path } => {
                let text = std::fs::read_to_string(path)?;
                let repr: InstanceFile = serde_json::from_str(&text)?;
                Instance::from_file_repr(&repr)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlgorithmKind {
    Ids,
    Linucb,
    Thompson,
    BayesIds,
}

fn default_true() -> bool {
    true
}

fn default_mc() -> usize {
    DEFAULT_MC_SAMPLES
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgorithmSpec {
    pub kind: AlgorithmKind,
    #[serde(default)]
    pub variant: GainKind,
    #[serde(default)]
    pub beta: BetaSpec,
    #[serde(default)]
    pub eta: EtaSpec,
    #[serde(default = "default_true")]
    pub fast_pairing: bool,
    #[serde(default)]
    pub thresholded_gaps: bool,
    #[serde(default = "default_mc")]
    pub mc_samples: usize,
    #[serde(default)]
    pub label: Option<String>,
}

impl AlgorithmSpec {
    pub fn new(kind: AlgorithmKind) -> Self {
        Self {
            kind,
            variant: GainKind::default(),
            beta: BetaSpec::default(),
            eta: EtaSpec::default(),
            fast_pairing: true,
            thresholded_gaps: false,
            mc_samples: DEFAULT_MC_SAMPLES,
            label: None,
        }
    }

    pub fn ids(variant: GainKind) -> Self {
        Self {
            variant,
            ..Self::new(AlgorithmKind::Ids)
        }
    }

    pub fn label(&self) -> String {
        if let Some(label) = &self.label {
            return label.clone();
        }
        match self.kind {
            AlgorithmKind::Ids => format!("IDS-{}", self.variant.tag()),
            AlgorithmKind::Linucb => "LinUCB".into(),
            AlgorithmKind::Thompson => "TS".into(),
            AlgorithmKind::BayesIds => "BayesIDS".into(),
        }
    }

    pub fn ids_config(&self, check_invariants: bool) -> IdsConfig {
        IdsConfig {
            variant: InfoGainVariant {
                kind: self.variant,
                learning_rate: self.eta,
            },
            beta: self.beta,
            fast_pairing: self.fast_pairing,
            thresholded_gaps: self.thresholded_gaps,
            check_invariants,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.beta.validate()?;
        self.ids_config(false).validate()?;
        if self.kind == AlgorithmKind::BayesIds && self.mc_samples < crate::baselines::bayes_ids::MIN_MC_SAMPLES {
            return invalid(format!("mc_samples must be at least 100, got {}", self.mc_samples));
        }
        if self.label.as_deref().is_some_and(|l| l.is_empty() || l.contains([',', '/', '\n', '"'])) {
            return invalid("labels must be nonempty and free of ',', '/', quotes and newlines");
        }
        Ok(())
    }

    pub fn build(&self, instance: &Instance, check_invariants: bool) -> Result<Box<dyn Policy>> {
        let d = instance.dim();
        let sigma = instance.noise_std();
        let label = self.label();
        Ok(match self.kind {
            AlgorithmKind::Ids => Box::new(
                IdsAlgoState::new(d, sigma, self.ids_config(check_invariants))?.with_label(label),
            ),
            AlgorithmKind::Linucb => Box::new(LinUcb::new(d, sigma, self.beta)?.with_label(label)),
            AlgorithmKind::Thompson => Box::new(Thompson::new(d, sigma)?.with_label(label)),
            AlgorithmKind::BayesIds => Box::new(
                BayesIds::new(d, sigma, self.mc_samples, self.fast_pairing)?.with_label(label),
            ),
        })
    }
}

/// Checkpoints at `2^(j / per_octave)` rounded, plus the horizon.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointSpec {
    #[serde(default = "one")]
    pub per_octave: u32,
}

fn one() -> u32 {
    1
}

impl Default for CheckpointSpec {
    fn default() -> Self {
        Self { per_octave: 1 }
    }
}

impl CheckpointSpec {
    pub fn grid(&self, horizon: u64) -> Vec<u64> {
        let per = self.per_octave.max(1) as f64;
        let mut out = Vec::new();
        let mut j = 0u32;
        loop {
            let t = 2f64.powf(j as f64 / per).round() as u64;
            if t >= horizon {
                break;
            }
            if out.last() != Some(&t) {
                out.push(t);
            }
            j += 1;
        }
        out.push(horizon);
        out
    }
}

fn default_output() -> PathBuf {
    PathBuf::from("results")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub instance: InstanceSpec,
    pub algorithms: Vec<AlgorithmSpec>,
    pub horizon: u64,
    pub repetitions: u64,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default)]
    pub checkpoints: CheckpointSpec,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
}

impl ExperimentConfig {
    /// Reads a config file; relative paths inside it resolve against the
    /// file's directory.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg: ExperimentConfig = serde_json::from_str(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        if let InstanceSpec::File { path: p } = &mut cfg.instance {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        if cfg.output_dir.is_relative() {
            cfg.output_dir = base.join(&cfg.output_dir);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return invalid("horizon must be >= 1");
        }
        if self.repetitions == 0 {
            return invalid("repetitions must be >= 1");
        }
        if self.algorithms.is_empty() {
            return invalid("at least one algorithm is required");
        }
        let mut seen = HashSet::new();
        for a in &self.algorithms {
            a.validate()?;
            if !seen.insert(a.label()) {
                return invalid(format!("duplicate algorithm label {}", a.label()));
            }
        }
        match &self.instance {
            InstanceSpec::Random { d, k, .. } if *d == 0 || *k < 2 => {
                invalid("random instances need d >= 1 and k >= 2")
            }
            _ => Ok(()),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }
}
