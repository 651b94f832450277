//! Information-ratio minimization over distributions with at most two atoms.

use crate::error::{invalid, Error, Result};
use crate::rng::RngStream;

/// A sampling distribution over action indices with one or two atoms.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplingDistribution {
    support: Vec<(usize, f64)>,
}

impl SamplingDistribution {
    pub fn point(arm: usize) -> Self {
        Self {
            support: vec![(arm, 1.0)],
        }
    }

    /// `(1 - p) * first + p * second`; zero-probability atoms are dropped.
    pub fn two_point(first: usize, second: usize, p: f64) -> Self {
        let p = p.clamp(0.0, 1.0);
        if first == second || p == 0.0 {
            return Self::point(first);
        }
        if p == 1.0 {
            return Self::point(second);
        }
        Self {
            support: vec![(first, 1.0 - p), (second, p)],
        }
    }

    pub fn support(&self) -> &[(usize, f64)] {
        &self.support
    }

    pub fn prob(&self, arm: usize) -> f64 {
        self.support
            .iter()
            .filter(|(a, _)| *a == arm)
            .map(|(_, p)| p)
            .sum()
    }

    /// `sum_x mu(x) values[x]`.
    pub fn expect(&self, values: &[f64]) -> f64 {
        self.support.iter().map(|(a, p)| p * values[*a]).sum()
    }

    pub fn sample(&self, rng: &mut RngStream) -> usize {
        match self.support.as_slice() {
            [(a, _)] => *a,
            [(a, pa), (b, _)] => {
                if rng.uniform() < *pa {
                    *a
                } else {
                    *b
                }
            }
            _ => unreachable!("distribution has one or two atoms"),
        }
    }
}

/// Ratio `((1-p) d1 + p d2)^2 / ((1-p) i1 + p i2)`, infinite on zero information.
pub fn pair_ratio(d1: f64, d2: f64, i1: f64, i2: f64, p: f64) -> f64 {
    let gap = (1.0 - p) * d1 + p * d2;
    let info = (1.0 - p) * i1 + p * i2;
    if info > 0.0 {
        gap * gap / info
    } else if gap == 0.0 {
        0.0
    } else {
        f64::INFINITY
    }
}

/// Optimal probability on the second action of a pair with `0 < d1 <= d2`.
///
/// Returns `(p, ratio(p))`.
pub fn two_action_tradeoff(d1: f64, d2: f64, i1: f64, i2: f64) -> Result<(f64, f64)> {
    if !(d1 > 0.0) {
        return invalid(format!("first gap must be positive, got {d1}"));
    }
    if d2 < d1 {
        return invalid(format!("gaps must be ordered, got {d1} > {d2}"));
    }
    if i1 < 0.0 || i2 < 0.0 {
        return invalid("information gains must be nonnegative");
    }
    let p = if i1 >= i2 {
        0.0
    } else {
        let first = if d2 > d1 { d1 / (d2 - d1) } else { f64::INFINITY };
        let second = 2.0 * i1 / (i2 - i1);
        let raw = first - second;
        if raw.is_nan() {
            1.0
        } else {
            raw.clamp(0.0, 1.0)
        }
    };
    Ok((p, pair_ratio(d1, d2, i1, i2, p)))
}

/// The information-ratio minimizing distribution and its ratio.
///
/// With `fast_pairing` only pairs `(hat_x, z)` are searched; otherwise all
/// unordered pairs. Zero-gap actions short-circuit to a point mass.
pub fn ids_distribution(
    gaps: &[f64],
    info: &[f64],
    hat_x: usize,
    fast_pairing: bool,
) -> Result<(SamplingDistribution, f64)> {
    let k = gaps.len();
    if k == 0 || info.len() != k || hat_x >= k {
        return invalid("gaps and information must be nonempty and aligned");
    }
    if gaps.iter().any(|g| !(g.is_finite() && *g >= 0.0)) {
        return invalid("gap estimates must be finite and nonnegative");
    }
    if info.iter().any(|i| !(i.is_finite() && *i >= 0.0)) {
        return invalid("information gains must be finite and nonnegative");
    }
    if info.iter().all(|&i| i == 0.0) {
        return Err(Error::DegenerateInformation);
    }
    if let Some(zero) = gaps.iter().position(|&g| g == 0.0) {
        return Ok((SamplingDistribution::point(zero), 0.0));
    }
    if k == 1 {
        return Ok((SamplingDistribution::point(0), gaps[0] * gaps[0] / info[0]));
    }

    let mut best: Option<(f64, SamplingDistribution)> = None;
    let mut consider = |a: usize, b: usize| -> Result<()> {
        let (lo, hi) = if gaps[b] < gaps[a] { (b, a) } else { (a, b) };
        let (p, psi) = two_action_tradeoff(gaps[lo], gaps[hi], info[lo], info[hi])?;
        if psi.is_finite() && best.as_ref().map_or(true, |(v, _)| psi < *v) {
            best = Some((psi, SamplingDistribution::two_point(lo, hi, p)));
        }
        Ok(())
    };
    if fast_pairing {
        for z in 0..k {
            if z != hat_x {
                consider(hat_x, z)?;
            }
        }
    } else {
        for a in 0..k {
            for b in (a + 1)..k {
                consider(a, b)?;
            }
        }
    }
    best.map(|(psi, mu)| (mu, psi))
        .ok_or(Error::DegenerateInformation)
}

/// Largest excess of `g(x) = gap(x) - psi / (2 gap(mu)) * info(x)` over its
/// minimum, taken across the support of `mu`. Zero for an exact minimizer.
pub fn support_excess(gaps: &[f64], info: &[f64], mu: &SamplingDistribution, psi: f64) -> f64 {
    let gap_mu = mu.expect(gaps);
    if gap_mu <= 0.0 {
        return 0.0;
    }
    let slope = psi / (2.0 * gap_mu);
    let g: Vec<f64> = gaps.iter().zip(info).map(|(d, i)| d - slope * i).collect();
    let min = g.iter().copied().fold(f64::INFINITY, f64::min);
    mu.support()
        .iter()
        .map(|(a, _)| g[*a] - min)
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid_min(d1: f64, d2: f64, i1: f64, i2: f64) -> f64 {
        let n = 100_000;
        (0..=n)
            .map(|j| j as f64 / n as f64)
            .min_by(|a, b| {
                pair_ratio(d1, d2, i1, i2, *a)
                    .partial_cmp(&pair_ratio(d1, d2, i1, i2, *b))
                    .unwrap()
            })
            .unwrap()
    }

    #[test]
    fn less_information_on_second_action() {
        assert_eq!(two_action_tradeoff(1.0, 2.0, 0.5, 0.5).unwrap().0, 0.0);
        assert_eq!(two_action_tradeoff(1.0, 2.0, 0.7, 0.1).unwrap().0, 0.0);
    }

    #[test]
    fn tradeoff_examples_match_grid() {
        let (p, _) = two_action_tradeoff(1.0, 2.0, 0.0, 1.0).unwrap();
        assert_eq!(p, 1.0);
        assert_eq!(grid_min(1.0, 2.0, 0.0, 1.0), 1.0);
        let (p, _) = two_action_tradeoff(1.0, 3.0, 0.1, 0.5).unwrap();
        assert_eq!(p, 0.0);
        assert_eq!(grid_min(1.0, 3.0, 0.1, 0.5), 0.0);
        let (p, _) = two_action_tradeoff(0.2, 1.0, 0.01, 0.9).unwrap();
        assert!((p - grid_min(0.2, 1.0, 0.01, 0.9)).abs() < 2e-5);
    }

    #[test]
    fn tradeoff_equal_gaps_moves_to_informative() {
        let (p, psi) = two_action_tradeoff(1.0, 1.0, 0.1, 0.3).unwrap();
        assert_eq!(p, 1.0);
        assert!((psi - 1.0 / 0.3).abs() < 1e-12);
    }

    #[test]
    fn tradeoff_errors() {
        assert!(two_action_tradeoff(0.0, 1.0, 0.0, 1.0).is_err());
        assert!(two_action_tradeoff(2.0, 1.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn single_informative_action() {
        let gaps = [0.5, 0.5, 0.5];
        let info = [0.0, 0.0, 2.0];
        let (mu, psi) = ids_distribution(&gaps, &info, 0, false).unwrap();
        assert_eq!(mu.prob(2), 1.0);
        assert!((psi - 0.125).abs() < 1e-12);
    }

    #[test]
    fn no_worse_than_any_singleton() {
        let gaps = [0.1, 0.4, 1.0, 0.25];
        let info = [0.001, 0.3, 2.0, 0.0];
        for fast in [true, false] {
            let (mu, psi) = ids_distribution(&gaps, &info, 0, fast).unwrap();
            for x in 0..4 {
                if info[x] > 0.0 {
                    assert!(psi <= gaps[x] * gaps[x] / info[x] + 1e-15);
                }
            }
            let total: f64 = mu.support().iter().map(|(_, p)| p).sum();
            assert!((total - 1.0).abs() < 1e-15 && mu.support().len() <= 2);
        }
    }

    #[test]
    fn degenerate_information() {
        assert!(matches!(
            ids_distribution(&[0.1, 0.2], &[0.0, 0.0], 0, true),
            Err(Error::DegenerateInformation)
        ));
    }

    #[test]
    fn zero_gap_is_point_mass() {
        let (mu, psi) = ids_distribution(&[0.0, 0.2], &[0.0, 1.0], 0, true).unwrap();
        assert_eq!(mu, SamplingDistribution::point(0));
        assert_eq!(psi, 0.0);
    }

    #[test]
    fn exact_solution_satisfies_support_condition() {
        let gaps = [0.05, 0.3, 1.0, 0.6];
        let info = [0.0, 0.02, 0.9, 0.1];
        let (mu, psi) = ids_distribution(&gaps, &info, 0, false).unwrap();
        assert!(support_excess(&gaps, &info, &mu, psi) < 1e-9);
    }

    #[test]
    fn sampling_follows_probabilities() {
        let mu = SamplingDistribution::two_point(0, 3, 0.25);
        let mut rng = RngStream::new(2, 2);
        let n = 40_000;
        let hits = (0..n).filter(|_| mu.sample(&mut rng) == 3).count();
        assert!((hits as f64 / n as f64 - 0.25).abs() < 0.01);
    }
}
