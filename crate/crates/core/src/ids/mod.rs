//! Frequentist information-directed sampling.

pub mod algo;
pub mod alternatives;
pub mod distribution;
pub mod weights;

pub use algo::{
    check_round, compute_round, exploit_beta, exploit_check, gap_beta, gap_domination, ids_step,
    IdsAlgoState, IdsConfig, IdsRound,
};
pub use alternatives::{
    alternative_cell, alternative_halfspace, best_empirical_action, gap_estimates, ucb_action,
    Alternative, GapEstimates,
};
pub use distribution::{ids_distribution, support_excess, two_action_tradeoff, SamplingDistribution};
pub use weights::{info_gain, learning_rate, q_weights, EtaSpec, GainKind, InfoGainInputs, InfoGainVariant};
