//! The IDS round driver with local and global time.

use serde::{Deserialize, Serialize};

use super::alternatives::{alternative_cell, alternative_halfspace, gap_estimates, Alternative};
use super::distribution::{ids_distribution, support_excess, SamplingDistribution};
use super::weights::{info_gain, learning_rate, q_weights, InfoGainInputs, InfoGainVariant};
use crate::environment::{ActionSet, Instance};
use crate::error::{Error, Result};
use crate::estimator::{quad_form, simplified_rate, BetaSpec, EstimatorState};
use crate::policy::{whitening_scale, Decision, Policy};
use crate::rng::RngStream;

/// Tunable parts of the algorithm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct IdsConfig {
    #[serde(default)]
    pub variant: InfoGainVariant,
    #[serde(default)]
    pub beta: BetaSpec,
    /// Only search pairs that contain the empirical leader.
    #[serde(default = "default_true")]
    pub fast_pairing: bool,
    /// Replace the estimation gap by `max(delta_s, 1/sqrt(s))`.
    #[serde(default)]
    pub thresholded_gaps: bool,
    /// Check the deterministic per-round inequalities and fail on violation.
    #[serde(default)]
    pub check_invariants: bool,
}

fn default_true() -> bool {
    true
}

impl IdsConfig {
    pub fn new(variant: InfoGainVariant) -> Self {
        Self {
            variant,
            beta: BetaSpec::Logdet,
            fast_pairing: true,
            thresholded_gaps: false,
            check_invariants: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.variant.validate()?;
        self.beta.validate()
    }
}

/// Everything computed in one round.
#[derive(Debug, Clone, PartialEq)]
pub struct IdsRound {
    /// Local time the round was computed at.
    pub s: u64,
    /// Global time of the most recent exploitation check.
    pub t: u64,
    pub hat_x: usize,
    pub ucb_x: usize,
    pub beta_gap: f64,
    pub beta_exploit: f64,
    pub delta_s: f64,
    pub gaps: Vec<f64>,
    /// One entry per action; `None` for the leader.
    pub alternatives: Vec<Option<Alternative>>,
    pub m_s: f64,
    pub eta_s: f64,
    /// Over all actions, zero on the leader.
    pub q: Vec<f64>,
    pub info: Vec<f64>,
    pub mu: SamplingDistribution,
    pub psi: f64,
    pub exploit: bool,
}

/// `m_s >= beta_exploit / 2`.
pub fn exploit_check(m_s: f64, beta_exploit: f64) -> bool {
    m_s >= 0.5 * beta_exploit
}

/// Confidence coefficient for the gap estimates at local time `s`.
pub fn gap_beta(est: &EstimatorState, spec: &BetaSpec, s: u64) -> Result<f64> {
    match *spec {
        BetaSpec::Simplified => Ok(simplified_rate(s, est.dim())),
        _ => {
            let s = s as f64;
            est.beta(spec, s * s, 1.0, None)
        }
    }
}

/// Confidence coefficient of the exploitation test at global time `t`.
pub fn exploit_beta(est: &EstimatorState, spec: &BetaSpec, t: u64) -> Result<f64> {
    match *spec {
        BetaSpec::Simplified => Ok(simplified_rate(t, est.dim())),
        _ => {
            let tf = t as f64;
            est.beta(spec, (tf * tf.ln()).max(std::f64::consts::E), 1.0, None)
        }
    }
}

/// Computes the exploration quantities of one round. The exploitation
/// fields are filled for global time `t`.
pub fn compute_round(
    est: &EstimatorState,
    actions: &ActionSet,
    config: &IdsConfig,
    t: u64,
) -> Result<IdsRound> {
    let k = actions.len();
    let s = est.step();
    let beta_gap = gap_beta(est, &config.beta, s)?;
    let mut ge = gap_estimates(est, actions, beta_gap);
    if config.thresholded_gaps {
        let floor = 1.0 / (s as f64).sqrt();
        if ge.delta_s < floor {
            let lift = floor - ge.delta_s;
            ge.gaps.iter_mut().for_each(|g| *g += lift);
            ge.delta_s = ge.gaps[ge.hat_x];
        }
    }
    let hat_x = ge.hat_x;

    let mut alternatives = Vec::with_capacity(k);
    for z in 0..k {
        alternatives.push(if z == hat_x {
            None
        } else if config.variant.kind.uses_cells() {
            Some(alternative_cell(est, actions, z)?)
        } else {
            Some(alternative_halfspace(est, actions, hat_x, z)?)
        });
    }
    let dists: Vec<f64> = alternatives
        .iter()
        .flatten()
        .map(|a| a.half_sq_dist)
        .collect();
    let m_s = dists.iter().copied().fold(f64::INFINITY, f64::min);
    let eta_s = learning_rate(m_s, k, &config.variant, beta_gap);
    let q_alt = q_weights(&dists, eta_s)?;
    let mut q = vec![0.0; k];
    let mut it = q_alt.into_iter();
    for (z, slot) in q.iter_mut().enumerate() {
        if z != hat_x {
            *slot = it.next().unwrap_or(0.0);
        }
    }

    let inv_norms: Vec<f64> = actions.iter().map(|x| est.inv_norm(x)).collect();
    let info = info_gain(&InfoGainInputs {
        actions,
        theta_hat: est.theta_hat(),
        inv_norms: &inv_norms,
        alternatives: &alternatives,
        q: &q,
        beta_gap,
        ucb_x: ge.ucb_x,
        kind: config.variant.kind,
    });
    let (mu, psi) = ids_distribution(&ge.gaps, &info, hat_x, config.fast_pairing)?;
    let beta_exploit = exploit_beta(est, &config.beta, t)?;

    let round = IdsRound {
        s,
        t,
        hat_x,
        ucb_x: ge.ucb_x,
        beta_gap,
        beta_exploit,
        delta_s: ge.delta_s,
        gaps: ge.gaps,
        alternatives,
        m_s,
        eta_s,
        q,
        info,
        mu,
        psi,
        exploit: exploit_check(m_s, beta_exploit),
    };
    if config.check_invariants {
        check_round(&round, est, actions, config, &inv_norms)?;
    }
    Ok(round)
}

fn ensure(cond: bool, what: impl FnOnce() -> String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::InvariantViolation(what()))
    }
}

/// Deterministic inequalities every exploration round satisfies.
pub fn check_round(
    round: &IdsRound,
    est: &EstimatorState,
    actions: &ActionSet,
    config: &IdsConfig,
    inv_norms: &[f64],
) -> Result<()> {
    let k = actions.len();
    let theta = est.theta_hat();
    let s = round.s;
    let hat = actions.get(round.hat_x);
    let root = round.beta_gap.max(0.0).sqrt();

    let scale = 1.0 + round.gaps.iter().fold(0.0_f64, |m, g| m.max(g.abs()));
    for x in 0..k {
        let identity = (hat - actions.get(x)).dot(theta) + round.delta_s;
        ensure((round.gaps[x] - identity).abs() <= 1e-12 * scale, || {
            format!("s={s}: gap identity off at action {x}: {} vs {identity}", round.gaps[x])
        })?;
        ensure(round.gaps[x] >= root * inv_norms[x] - 1e-12 * scale, || {
            format!("s={s}: gap of action {x} below its confidence width")
        })?;
    }

    let qsum: f64 = round.q.iter().sum();
    ensure((qsum - 1.0).abs() <= 1e-12 && round.q[round.hat_x] == 0.0, || {
        format!("s={s}: q-weights sum to {qsum}, leader weight {}", round.q[round.hat_x])
    })?;
    let msum: f64 = round.mu.support().iter().map(|(_, p)| p).sum();
    ensure(
        round.mu.support().len() <= 2
            && (msum - 1.0).abs() <= 1e-12
            && round.mu.support().iter().all(|(a, p)| *a < k && *p >= 0.0),
        || format!("s={s}: sampling distribution invalid: {:?}", round.mu),
    )?;

    let mix: f64 = round
        .alternatives
        .iter()
        .zip(&round.q)
        .filter_map(|(a, q)| a.as_ref().map(|a| q * a.half_sq_dist))
        .sum();
    let slack = 1e-9 * (1.0 + round.m_s.abs());
    ensure(
        round.m_s <= mix + slack && mix <= round.m_s + (k as f64).ln() / round.eta_s + slack,
        || format!("s={s}: soft-min sandwich fails: m={} mix={mix} eta={}", round.m_s, round.eta_s),
    )?;

    if !config.variant.kind.uses_cells() && !config.thresholded_gaps {
        let u = round.ucb_x;
        if round.info[u] > 0.0 {
            let ucb_ratio = round.gaps[u] * round.gaps[u] / round.info[u];
            ensure(
                round.psi <= ucb_ratio * (1.0 + 1e-9) + 1e-12 && ucb_ratio <= 2.0 + 1e-9,
                || format!("s={s}: ratio bound fails: psi={} ucb ratio={ucb_ratio}", round.psi),
            )?;
        }
    }

    if round.delta_s > 0.0 {
        let gap_mu = round.mu.expect(&round.gaps);
        ensure(gap_mu <= 2.0 * round.delta_s * (1.0 + 1e-12) + 1e-9, || {
            format!("s={s}: not almost greedy: gap(mu)={gap_mu} delta={}", round.delta_s)
        })?;
    }

    if !config.variant.kind.uses_cells() {
        for (z, alt) in round.alternatives.iter().enumerate() {
            if let Some(alt) = alt.as_ref().filter(|a| a.half_sq_dist > 0.0) {
                let diff = hat - actions.get(z);
                let dot = alt.nu.dot(&diff);
                let tol = 1e-9 * (1.0 + alt.nu.norm() * diff.norm());
                ensure(dot.abs() <= tol, || {
                    format!("s={s}: alternative {z} off its boundary by {dot}")
                })?;
            }
        }
    }

    if !config.fast_pairing {
        let excess = support_excess(&round.gaps, &round.info, &round.mu, round.psi);
        ensure(excess <= 1e-6 * scale, || {
            format!("s={s}: support point is not a minimizer (excess {excess})")
        })?;
    }
    Ok(())
}

/// Gap domination against the true parameter. `None` when the confidence
/// event fails this round, otherwise whether `Delta(x) <= 2 gap_hat(x)` holds.
pub fn gap_domination(round: &IdsRound, est: &EstimatorState, instance: &Instance) -> Option<bool> {
    let err = est.theta_hat() - instance.theta_star();
    if quad_form(est.precision(), &err) > round.beta_gap {
        return None;
    }
    let truth = instance.gap_profile();
    Some(
        truth
            .gaps
            .iter()
            .zip(&round.gaps)
            .all(|(d, g)| *d <= 2.0 * g + 1e-12 * (1.0 + d.abs())),
    )
}

/// Frequentist IDS with the explore/exploit split.
#[derive(Debug, Clone)]
pub struct IdsAlgoState {
    estimator: EstimatorState,
    global_t: u64,
    config: IdsConfig,
    last_round: Option<IdsRound>,
    label: String,
}

impl IdsAlgoState {
    pub fn new(dim: usize, noise_std: f64, config: IdsConfig) -> Result<Self> {
        let est = EstimatorState::with_noise_scale(dim, whitening_scale(noise_std))?;
        Self::from_estimator(est, config)
    }

    /// Starts from an existing estimator at global time `est.step()`.
    pub fn from_estimator(estimator: EstimatorState, config: IdsConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            global_t: estimator.step(),
            estimator,
            label: format!("IDS-{}", config.variant.kind.tag()),
            config,
            last_round: None,
        })
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn config(&self) -> &IdsConfig {
        &self.config
    }

    /// Local time `s`.
    pub fn local_s(&self) -> u64 {
        self.estimator.step()
    }

    /// Global time `t` of the next round.
    pub fn global_t(&self) -> u64 {
        self.global_t
    }

    pub fn last_round(&self) -> Option<&IdsRound> {
        self.last_round.as_ref()
    }

    /// Current round, recomputed only when the estimator moved.
    pub fn round(&mut self, actions: &ActionSet) -> Result<&IdsRound> {
        let s = self.estimator.step();
        let t = self.global_t;
        let stale = self.last_round.as_ref().map_or(true, |r| r.s != s);
        if stale {
            self.last_round = Some(compute_round(&self.estimator, actions, &self.config, t)?);
        } else if let Some(r) = self.last_round.as_mut() {
            if r.t != t {
                r.t = t;
                r.beta_exploit = exploit_beta(&self.estimator, &self.config.beta, t)?;
                r.exploit = exploit_check(r.m_s, r.beta_exploit);
            }
        }
        Ok(self.last_round.as_ref().expect("round computed above"))
    }
}

impl Policy for IdsAlgoState {
    fn label(&self) -> &str {
        &self.label
    }

    fn select(&mut self, actions: &ActionSet, rng: &mut RngStream) -> Result<Decision> {
        let round = self.round(actions)?;
        let (arm, exploit) = if round.exploit {
            (round.hat_x, true)
        } else {
            (round.mu.sample(rng), false)
        };
        Ok(Decision {
            arm,
            exploit,
            info_gain: if exploit { 0.0 } else { round.info[arm] },
            confidence_beta: Some(round.beta_gap),
        })
    }

    fn observe(&mut self, actions: &ActionSet, arm: usize, reward: f64) -> Result<()> {
        let exploit = self.round(actions)?.exploit;
        self.global_t += 1;
        if !exploit {
            self.estimator.update(actions.get(arm), reward)?;
        }
        Ok(())
    }

    fn estimator(&self) -> &EstimatorState {
        &self.estimator
    }

    fn audit(&self, instance: &Instance) -> Result<()> {
        let Some(round) = self.last_round.as_ref().filter(|r| r.s == self.estimator.step()) else {
            return Ok(());
        };
        if round.exploit || gap_domination(round, &self.estimator, instance) != Some(false) {
            return Ok(());
        }
        Err(Error::InvariantViolation(format!(
            "s={}: true gaps exceed twice the estimates under concentration",
            round.s
        )))
    }
}

/// Plays one round against `instance`, drawing both the action and the
/// reward from `rng`.
pub fn ids_step(
    state: &mut IdsAlgoState,
    instance: &Instance,
    rng: &mut RngStream,
) -> Result<(usize, IdsRound)> {
    let decision = state.select(instance.actions(), rng)?;
    let round = state.last_round.clone().expect("select computes a round");
    let reward = instance.sample_reward(decision.arm, rng)?;
    state.observe(instance.actions(), decision.arm, reward)?;
    Ok((decision.arm, round))
}
