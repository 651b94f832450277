//! Soft-min mixing weights, learning rate and information gains.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::alternatives::{alignment, Alternative};
use crate::environment::ActionSet;
use crate::error::{invalid, Result};

/// Which information gain the algorithm uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum GainKind {
    /// Halfspace alternatives, optimism bonus on every action.
    #[serde(rename = "H")]
    Halfspace,
    /// Halfspace alternatives, optimism bonus on the UCB action only.
    #[serde(rename = "H_UCB")]
    #[default]
    HalfspaceUcb,
    /// Cell alternatives, optimism bonus on every action.
    #[serde(rename = "C")]
    Cell,
    /// Cell alternatives, optimism bonus on the UCB action only.
    #[serde(rename = "C_UCB")]
    CellUcb,
}

impl GainKind {
    pub fn uses_cells(self) -> bool {
        matches!(self, GainKind::Cell | GainKind::CellUcb)
    }

    pub fn ucb_only_bonus(self) -> bool {
        matches!(self, GainKind::HalfspaceUcb | GainKind::CellUcb)
    }

    pub fn tag(self) -> &'static str {
        match self {
            GainKind::Halfspace => "H",
            GainKind::HalfspaceUcb => "H_UCB",
            GainKind::Cell => "C",
            GainKind::CellUcb => "C_UCB",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum EtaSpec {
    /// `1 / sqrt(beta_{s, s^2})`
    #[default]
    Auto,
    Fixed { value: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct InfoGainVariant {
    pub kind: GainKind,
    #[serde(default)]
    pub learning_rate: EtaSpec,
}

impl InfoGainVariant {
    pub fn new(kind: GainKind) -> Self {
        Self {
            kind,
            learning_rate: EtaSpec::Auto,
        }
    }

    pub fn with_fixed_eta(kind: GainKind, eta: f64) -> Self {
        Self {
            kind,
            learning_rate: EtaSpec::Fixed { value: eta },
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.learning_rate {
            EtaSpec::Fixed { value } if !(value > 0.0 && value.is_finite()) => {
                invalid(format!("fixed learning rate must be positive, got {value}"))
            }
            _ => Ok(()),
        }
    }
}

/// `q(z) ∝ exp(-eta * half_sq_dist(z))`, normalized.
pub fn q_weights(half_sq_dists: &[f64], eta: f64) -> Result<Vec<f64>> {
    if half_sq_dists.is_empty() {
        return invalid("q-weights need at least one alternative");
    }
    if !(eta > 0.0) {
        return invalid(format!("learning rate must be positive, got {eta}"));
    }
    let min = half_sq_dists.iter().copied().fold(f64::INFINITY, f64::min);
    let mut w: Vec<f64> = half_sq_dists
        .iter()
        .map(|h| (-eta * (h - min)).exp())
        .collect();
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= total);
    Ok(w)
}

const ETA_MIN: f64 = 1e-6;
const ETA_MAX: f64 = 1e6;

/// Learning rate of the soft-min weights. `m_s` and `k` are accepted for
/// schedules that depend on them; the auto rule only uses `beta_ref`.
pub fn learning_rate(_m_s: f64, _k: usize, variant: &InfoGainVariant, beta_ref: f64) -> f64 {
    let eta = match variant.learning_rate {
        EtaSpec::Auto => 1.0 / beta_ref.sqrt(),
        EtaSpec::Fixed { value } => value,
    };
    eta.clamp(ETA_MIN, ETA_MAX)
}

/// Inputs to [`info_gain`] that describe one exploration step.
pub struct InfoGainInputs<'a> {
    pub actions: &'a ActionSet,
    pub theta_hat: &'a DVector<f64>,
    /// `|x|_{V^-1}` for every action.
    pub inv_norms: &'a [f64],
    /// Alternative for every action except the leader (`None` there).
    pub alternatives: &'a [Option<Alternative>],
    /// Mixing weights over all actions, zero on the leader.
    pub q: &'a [f64],
    pub beta_gap: f64,
    pub ucb_x: usize,
    pub kind: GainKind,
}

/// `I(x) = 1/2 sum_z q(z) (|<nu(z) - theta, x>| + bonus(x))^2`.
pub fn info_gain(inp: &InfoGainInputs<'_>) -> Vec<f64> {
    let root = inp.beta_gap.max(0.0).sqrt();
    (0..inp.actions.len())
        .map(|x| {
            let bonus = if !inp.kind.ucb_only_bonus() || x == inp.ucb_x {
                root * inp.inv_norms[x]
            } else {
                0.0
            };
            let action = inp.actions.get(x);
            let sum: f64 = inp
                .alternatives
                .iter()
                .zip(inp.q)
                .filter_map(|(alt, &q)| alt.as_ref().map(|a| (a, q)))
                .filter(|(_, q)| *q > 0.0)
                .map(|(alt, q)| {
                    let term = alignment(alt, inp.theta_hat, action).abs() + bonus;
                    q * term * term
                })
                .sum();
            0.5 * sum
        })
        .collect()
}
