//! Thompson-sampling choice probabilities.
//!
//! With independent draws `θ_k ~ Normal(m_k, v_k)`, the probability that
//! action `i` has the largest draw is an orthant probability of the
//! differences `θ_i − θ_k`. Conditioning on `θ_i = t` makes the remaining
//! events independent, so
//!
//! ```text
//! P(i wins) = ∫ N(t; m_i, v_i) · Π_{k≠i} Φ((t − m_k) / √v_k) dt
//! ```
//!
//! which is evaluated here by adaptive Gauss–Kronrod quadrature on the
//! standardized variable `u = (t − m_i) / √v_i ∈ [−8, 8]`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::normal;
use crate::quadrature::integrate_pieces;

/// Default absolute accuracy of the quadrature evaluator.
pub const DEFAULT_TOL: f64 = 1e-10;

/// Half-width of the standardized integration window. The truncated mass
/// is `2·(1 − Φ(8)) ≈ 1.2e-15`.
const WINDOW: f64 = 8.0;

/// One player's Gaussian posterior over its actions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeliefVector {
    means: Vec<f64>,
    variances: Vec<f64>,
}

impl BeliefVector {
    pub fn new(means: Vec<f64>, variances: Vec<f64>) -> Result<Self> {
        if means.len() != variances.len() {
            return Err(Error::InvalidBelief(format!(
                "{} means but {} variances",
                means.len(),
                variances.len()
            )));
        }
        if means.len() < 2 {
            return Err(Error::InvalidBelief("need at least two actions".into()));
        }
        if means.iter().any(|m| !m.is_finite()) {
            return Err(Error::InvalidBelief("non-finite mean".into()));
        }
        if let Some(v) = variances.iter().find(|v| !(**v > 0.0 && **v <= 1.0)) {
            return Err(Error::InvalidBelief(format!("variance {v} outside (0, 1]")));
        }
        Ok(Self { means, variances })
    }

    pub fn means(&self) -> &[f64] {
        &self.means
    }

    pub fn variances(&self) -> &[f64] {
        &self.variances
    }

    pub fn len(&self) -> usize {
        self.means.len()
    }

    pub fn is_empty(&self) -> bool {
        self.means.is_empty()
    }

    fn check_index(&self, i: usize) -> Result<()> {
        if i >= self.len() {
            return Err(Error::IndexOutOfRange { index: i, len: self.len() });
        }
        Ok(())
    }
}

/// Probability of each action being selected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChoiceDistribution {
    pub probs: Vec<f64>,
}

impl ChoiceDistribution {
    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (k, &p) in self.probs.iter().enumerate() {
            if p > self.probs[best] {
                best = k;
            }
        }
        best
    }
}

fn check_tol(tol: f64) -> Result<()> {
    if !(tol > 0.0 && tol <= 1e-3) {
        return Err(Error::InvalidArgument(format!("tolerance {tol} outside (0, 1e-3]")));
    }
    Ok(())
}

/// `P(θ_k < t)`; a zero variance gives a step (ties resolved by `tie_wins`).
#[inline]
fn below(t: f64, mean: f64, sd: f64, tie_wins: bool) -> f64 {
    if sd > 0.0 {
        normal::cdf((t - mean) / sd)
    } else if t > mean || (t == mean && tie_wins) {
        1.0
    } else {
        0.0
    }
}

/// Probability that action `i` wins. Zero variances are allowed: a point-mass
/// belief contributes a step factor and equal point masses resolve toward the
/// lower index.
pub(crate) fn win_probability(means: &[f64], variances: &[f64], i: usize, tol: f64) -> f64 {
    let k_all = means.len();
    let sd: Vec<f64> = variances.iter().map(|v| v.sqrt()).collect();
    if k_all == 2 && variances[0] + variances[1] > 0.0 {
        let other = 1 - i;
        let z = (means[i] - means[other]) / (variances[i] + variances[other]).sqrt();
        return normal::cdf(z);
    }
    if sd[i] == 0.0 {
        return (0..k_all)
            .filter(|&k| k != i)
            .map(|k| below(means[i], means[k], sd[k], i < k))
            .product();
    }
    let (mi, si) = (means[i], sd[i]);
    let integrand = |u: f64| {
        let t = mi + si * u;
        let mut acc = normal::pdf(u);
        for k in 0..k_all {
            if k != i {
                acc *= below(t, means[k], sd[k], false);
                if acc == 0.0 {
                    break;
                }
            }
        }
        acc
    };
    let breaks = sorted_breaks((0..k_all).filter(|&k| k != i).map(|k| (means[k] - mi) / si));
    integrate_pieces(integrand, -WINDOW, WINDOW, &breaks, tol).clamp(0.0, 1.0)
}

fn sorted_breaks(points: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut b: Vec<f64> = points.filter(|u| u.is_finite() && u.abs() < WINDOW).collect();
    b.sort_by(f64::total_cmp);
    b.dedup();
    b
}

/// Exact selection probabilities by one-dimensional quadrature.
pub fn choice_probabilities_exact(belief: &BeliefVector, tol: f64) -> Result<ChoiceDistribution> {
    check_tol(tol)?;
    Ok(ChoiceDistribution { probs: probabilities_unchecked(&belief.means, &belief.variances, tol) })
}

/// Same as the exact evaluator but accepting zero variances.
pub(crate) fn probabilities_unchecked(means: &[f64], variances: &[f64], tol: f64) -> Vec<f64> {
    (0..means.len()).map(|i| win_probability(means, variances, i, tol)).collect()
}

/// Product-of-marginals lower bound on the selection probability of action `i`.
pub fn slepian_lower_bound(belief: &BeliefVector, i: usize) -> Result<f64> {
    belief.check_index(i)?;
    let (m, v) = (&belief.means, &belief.variances);
    Ok((0..belief.len())
        .filter(|&k| k != i)
        .map(|k| normal::cdf((m[i] - m[k]) / (v[i] + v[k]).sqrt()))
        .product())
}

/// Monte-Carlo estimate of the selection probabilities with per-entry
/// binomial standard errors. Deterministic in `(seed, samples)`.
pub fn choice_probabilities_mc(
    belief: &BeliefVector,
    samples: u64,
    seed: u64,
) -> Result<(ChoiceDistribution, Vec<f64>)> {
    if samples == 0 {
        return Err(Error::InvalidArgument("need at least one sample".into()));
    }
    let k_all = belief.len();
    let sd: Vec<f64> = belief.variances.iter().map(|v| v.sqrt()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut counts = vec![0u64; k_all];
    for _ in 0..samples {
        let mut best = 0;
        let mut best_draw = f64::NEG_INFINITY;
        for k in 0..k_all {
            let z: f64 = StandardNormal.sample(&mut rng);
            let draw = belief.means[k] + sd[k] * z;
            if draw > best_draw {
                best_draw = draw;
                best = k;
            }
        }
        counts[best] += 1;
    }
    let n = samples as f64;
    let probs: Vec<f64> = counts.iter().map(|&c| c as f64 / n).collect();
    let se = probs.iter().map(|p| (p * (1.0 - p) / n).sqrt()).collect();
    Ok((ChoiceDistribution { probs }, se))
}

/// Partial derivatives of one selection probability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChoiceGradient {
    pub d_means: Vec<f64>,
    pub d_variances: Vec<f64>,
}

/// `E[h(T)]` for `T ~ Normal(mean, var)`, with `breaks` given in `t` units.
fn gaussian_expectation<F: Fn(f64) -> f64>(mean: f64, var: f64, breaks: &[f64], h: F) -> f64 {
    let sd = var.sqrt();
    let cuts = sorted_breaks(breaks.iter().map(|t| (t - mean) / sd));
    integrate_pieces(|u| normal::pdf(u) * h(mean + sd * u), -WINDOW, WINDOW, &cuts, 1e-13)
}

/// Gradient of the selection probability of action `i` with respect to all
/// posterior means and variances.
///
/// Each term factors into the density of `θ_i − θ_k` at zero, `φ(c_k)/s_k`,
/// times a conditional expectation over `θ_i` given `θ_i = θ_k`, which is
/// Gaussian with mean `(m_i v_k + m_k v_i)/(v_i + v_k)` and variance
/// `v_i v_k/(v_i + v_k)`:
///
/// * `∂/∂m_k = −φ(c_k)/s_k · P_k` and `∂/∂m_i = Σ_k φ(c_k)/s_k · P_k`, where
///   `P_k` is the conditional probability that every other action loses;
/// * `∂/∂v_k` adds to the `c_k` chain-rule term a covariance term that
///   accounts for the correlation between the remaining comparisons;
/// * `∂/∂v_i = Σ_k ∂/∂v_k` plus pairwise terms for `K > 2`.
///
/// Near-equal means with tiny variances make these values explode; callers
/// should keep beliefs separated.
pub fn choice_gradients(belief: &BeliefVector, i: usize) -> Result<ChoiceGradient> {
    belief.check_index(i)?;
    let (m, v) = (&belief.means, &belief.variances);
    let k_all = belief.len();
    let sd: Vec<f64> = v.iter().map(|x| x.sqrt()).collect();
    let others = |skip: &[usize]| -> Vec<usize> { (0..k_all).filter(|k| !skip.contains(k)).collect() };
    let survive = |t: f64, set: &[usize]| -> f64 { set.iter().map(|&l| normal::cdf((t - m[l]) / sd[l])).product() };

    let mut d_means = vec![0.0; k_all];
    let mut d_variances = vec![0.0; k_all];
    let mut pair_total = 0.0;

    for k in (0..k_all).filter(|&k| k != i) {
        let s2 = v[i] + v[k];
        let s = s2.sqrt();
        let c = (m[i] - m[k]) / s;
        let dens = normal::pdf(c) / s;
        let rest = others(&[i, k]);

        let (p_cond, cov_term) = if rest.is_empty() {
            (1.0, 0.0)
        } else {
            let cm = (m[i] * v[k] + m[k] * v[i]) / s2;
            let cv = v[i] * v[k] / s2;
            let breaks: Vec<f64> = rest.iter().map(|&l| m[l]).collect();
            let p = gaussian_expectation(cm, cv, &breaks, |t| survive(t, &rest));
            let cov = gaussian_expectation(cm, cv, &breaks, |t| (t - cm) * survive(t, &rest));
            for &l in rest.iter().filter(|&&l| l > k) {
                let rest_l: Vec<usize> = rest.iter().copied().filter(|&r| r != l).collect();
                let q = gaussian_expectation(cm, cv, &breaks, |t| {
                    normal::density(t, m[l], v[l]) * survive(t, &rest_l)
                });
                pair_total += dens * q;
            }
            (p, cov)
        };

        d_means[k] = -dens * p_cond;
        d_means[i] += dens * p_cond;
        d_variances[k] = dens * ((m[k] - m[i]) / (2.0 * s2) * p_cond - cov_term / (2.0 * v[k]));
    }
    d_variances[i] = (0..k_all).filter(|&k| k != i).map(|k| d_variances[k]).sum::<f64>() + pair_total;

    Ok(ChoiceGradient { d_means, d_variances })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn belief(m: &[f64], v: &[f64]) -> BeliefVector {
        BeliefVector::new(m.to_vec(), v.to_vec()).unwrap()
    }

    #[test]
    fn symmetric_two_actions() {
        let d = choice_probabilities_exact(&belief(&[0.0, 0.0], &[1.0, 1.0]), DEFAULT_TOL).unwrap();
        assert_eq!(d.probs, vec![0.5, 0.5]);
    }

    #[test]
    fn two_action_closed_form() {
        let d = choice_probabilities_exact(&belief(&[1.0, 0.0], &[0.5, 0.5]), DEFAULT_TOL).unwrap();
        assert!((d.probs[0] - 0.841_344_746_068_542_9).abs() < 1e-14);
        assert!((d.probs[1] - 0.158_655_253_931_457_05).abs() < 1e-14);
    }

    #[test]
    fn symmetric_three_actions() {
        let b = belief(&[0.0, 0.0, 0.0], &[1.0, 1.0, 1.0]);
        let d = choice_probabilities_exact(&b, DEFAULT_TOL).unwrap();
        for p in &d.probs {
            assert!((p - 1.0 / 3.0).abs() < 1e-10);
        }
        let bound = slepian_lower_bound(&b, 0).unwrap();
        assert!((bound - 0.25).abs() < 1e-15);
        assert!(bound <= d.probs[0]);
    }

    #[test]
    fn quadrature_matches_closed_form_when_forced() {
        // K = 2 through the integral path.
        let p = {
            let integrand = |u: f64| normal::pdf(u) * normal::cdf((0.3 + 0.2 * u - 0.1) / 0.5);
            integrate_pieces(integrand, -WINDOW, WINDOW, &[], 1e-12)
        };
        let closed = normal::cdf(0.2 / (0.04f64 + 0.25).sqrt());
        assert!((p - closed).abs() < 1e-12);
    }

    #[test]
    fn slepian_two_actions_is_exact() {
        let b = belief(&[0.4, -0.2], &[0.3, 0.7]);
        let d = choice_probabilities_exact(&b, DEFAULT_TOL).unwrap();
        assert!((slepian_lower_bound(&b, 0).unwrap() - d.probs[0]).abs() < 1e-15);
        assert!((slepian_lower_bound(&belief(&[10.0, 0.0], &[0.01, 0.01]), 0).unwrap() - 1.0).abs() < 1e-9);
        assert!(slepian_lower_bound(&b, 2).is_err());
    }

    #[test]
    fn zero_variance_rules() {
        // all point masses: argmax, ties to the lower index
        assert_eq!(probabilities_unchecked(&[0.2, 0.1], &[0.0, 0.0], DEFAULT_TOL), vec![1.0, 0.0]);
        assert_eq!(
            probabilities_unchecked(&[0.1, 0.3, 0.3], &[0.0, 0.0, 0.0], DEFAULT_TOL),
            vec![0.0, 1.0, 0.0]
        );
        // mixed: point mass at 0 against Normal(0, 1) and Normal(1, 1)
        let p = probabilities_unchecked(&[0.0, 0.0, 1.0], &[0.0, 1.0, 1.0], 1e-12);
        assert!((p[0] - 0.5 * normal::cdf(-1.0)).abs() < 1e-12);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(BeliefVector::new(vec![0.0], vec![1.0]).is_err());
        assert!(BeliefVector::new(vec![0.0, 1.0], vec![1.0, 0.0]).is_err());
        assert!(BeliefVector::new(vec![0.0, 1.0], vec![1.0, 1.5]).is_err());
        let b = belief(&[0.0, 1.0], &[1.0, 1.0]);
        assert!(choice_probabilities_exact(&b, 0.0).is_err());
        assert!(choice_probabilities_exact(&b, 1e-2).is_err());
        assert!(choice_probabilities_mc(&b, 0, 1).is_err());
    }

    #[test]
    fn mc_is_deterministic_and_concentrated() {
        let b = belief(&[0.0, 0.0], &[1.0, 1.0]);
        let (d1, se1) = choice_probabilities_mc(&b, 1_000_000, 7).unwrap();
        let (d2, se2) = choice_probabilities_mc(&b, 1_000_000, 7).unwrap();
        assert_eq!(d1, d2);
        assert_eq!(se1, se2);
        assert!(d1.probs.iter().all(|p| (p - 0.5).abs() < 0.002));
    }

    #[test]
    fn two_action_gradient() {
        let g = choice_gradients(&belief(&[1.0, 0.0], &[0.5, 0.5]), 0).unwrap();
        assert!((g.d_means[0] - 0.241_970_724_519_143_37).abs() < 1e-15);
        assert!((g.d_means[1] + 0.241_970_724_519_143_37).abs() < 1e-15);
        // d/dv of Φ((m1 - m2)/√(v1 + v2)) = −φ(c)·c/(2(v1 + v2))
        let expect = -0.241_970_724_519_143_37 * 1.0 / 2.0;
        assert!((g.d_variances[0] - expect).abs() < 1e-15);
        assert!((g.d_variances[1] - expect).abs() < 1e-15);
    }

    #[test]
    fn gradient_means_sum_to_zero() {
        let b = belief(&[0.3, -0.4, 0.9, 0.1], &[0.2, 0.5, 0.05, 0.8]);
        for i in 0..4 {
            let g = choice_gradients(&b, i).unwrap();
            let others: f64 = (0..4).filter(|&k| k != i).map(|k| g.d_means[k]).sum();
            assert!((g.d_means[i] + others).abs() < 1e-12);
        }
    }
}
