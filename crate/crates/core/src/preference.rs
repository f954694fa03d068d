//! Subjective human costs and choice probabilities under uncertain
//! preference parameters.
//!
//! A human perceives risk through a Prelec weighting with curvature `gamma`
//! and distance through a power law with exponent `alpha`, and picks the
//! option of lowest subjective cost. With `(alpha, gamma)` uniform over a
//! box, the probability of each option is the share of the box where it wins.
//! Both the shares and the box-averaged cost are computed by the midpoint
//! rule on a regular grid.

use serde::{Deserialize, Serialize};

/// Default grid resolution per parameter axis.
pub const DEFAULT_GRID_N: usize = 400;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PreferenceParams {
    pub alpha: f64,
    pub gamma: f64,
}

impl PreferenceParams {
    pub fn new(alpha: f64, gamma: f64) -> Self {
        assert!(alpha > 0.0 && gamma > 0.0, "preference exponents must be positive");
        Self { alpha, gamma }
    }

    /// Objective perception: no distortion of risk or distance.
    pub fn objective() -> Self {
        Self::new(1.0, 1.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamBox {
    pub alpha_lo: f64,
    pub alpha_hi: f64,
    pub gamma_lo: f64,
    pub gamma_hi: f64,
}

impl Default for ParamBox {
    /// The population range used throughout: alpha in (0.55, 0.95),
    /// gamma in (0.5, 1.1).
    fn default() -> Self {
        Self {
            alpha_lo: 0.55,
            alpha_hi: 0.95,
            gamma_lo: 0.5,
            gamma_hi: 1.1,
        }
    }
}

impl ParamBox {
    pub fn new(alpha_lo: f64, alpha_hi: f64, gamma_lo: f64, gamma_hi: f64) -> Option<Self> {
        let ok = 0.0 < alpha_lo && alpha_lo < alpha_hi && 0.0 < gamma_lo && gamma_lo < gamma_hi;
        ok.then_some(Self {
            alpha_lo,
            alpha_hi,
            gamma_lo,
            gamma_hi,
        })
    }

    /// Box `center ± half_width` per axis.
    pub fn around(alpha: f64, alpha_half: f64, gamma: f64, gamma_half: f64) -> Option<Self> {
        Self::new(alpha - alpha_half, alpha + alpha_half, gamma - gamma_half, gamma + gamma_half)
    }

    pub fn area(&self) -> f64 {
        (self.alpha_hi - self.alpha_lo) * (self.gamma_hi - self.gamma_lo)
    }

    /// Cell midpoints along each axis for an `n` x `n` grid.
    pub fn midpoints(&self, n: usize) -> (Vec<f64>, Vec<f64>) {
        let mids = |lo: f64, hi: f64| {
            let h = (hi - lo) / n as f64;
            (0..n).map(|i| lo + (i as f64 + 0.5) * h).collect::<Vec<_>>()
        };
        (mids(self.alpha_lo, self.alpha_hi), mids(self.gamma_lo, self.gamma_hi))
    }

    /// Maps unit-square coordinates onto the box.
    pub fn at(&self, u: f64, v: f64) -> PreferenceParams {
        PreferenceParams {
            alpha: self.alpha_lo + u * (self.alpha_hi - self.alpha_lo),
            gamma: self.gamma_lo + v * (self.gamma_hi - self.gamma_lo),
        }
    }
}

/// Prelec probability weighting, continuously extended to 0 and 1.
pub fn perceived_risk(risk: f64, gamma: f64) -> f64 {
    if risk <= 0.0 {
        0.0
    } else if risk >= 1.0 {
        1.0
    } else {
        (-(-risk.ln()).powf(gamma)).exp()
    }
}

pub fn perceived_distance(distance: f64, alpha: f64) -> f64 {
    distance.powf(alpha)
}

pub fn subjective_cost(distance: f64, risk: f64, params: PreferenceParams, risk_weight: f64) -> f64 {
    perceived_distance(distance, params.alpha) + risk_weight * perceived_risk(risk, params.gamma)
}

/// Index of the lowest cost; ties go to the lowest index.
pub fn preferred_option(costs: &[f64]) -> usize {
    assert!(!costs.is_empty(), "no options to choose from");
    let mut best = 0;
    for (i, &c) in costs.iter().enumerate().skip(1) {
        if c < costs[best] {
            best = i;
        }
    }
    best
}

/// Option probabilities, indexed like the options they were computed from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
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

    pub fn most_likely(&self) -> usize {
        let neg: Vec<f64> = self.probs.iter().map(|p| -p).collect();
        preferred_option(&neg)
    }

    /// Half the L1 distance; defined only for equal lengths.
    pub fn total_variation(&self, other: &ChoiceDistribution) -> Option<f64> {
        (self.len() == other.len()).then(|| {
            0.5 * self
                .probs
                .iter()
                .zip(&other.probs)
                .map(|(a, b)| (a - b).abs())
                .sum::<f64>()
        })
    }
}

/// Share of the parameter box won by each `(distance, risk)` option.
///
/// Cell counts are integers, so the result sums to one up to the final
/// division.
pub fn choice_distribution(
    options: &[(f64, f64)],
    param_box: &ParamBox,
    risk_weight: f64,
    grid_n: usize,
) -> ChoiceDistribution {
    assert!(grid_n >= 2, "grid needs at least 2 cells per axis");
    assert!(!options.is_empty(), "no options");
    let m = options.len();
    let (alphas, gammas) = param_box.midpoints(grid_n);
    // Subjective cost separates into a distance term in alpha and a risk
    // term in gamma; tabulate both once.
    let dist_terms: Vec<f64> = alphas
        .iter()
        .flat_map(|&a| options.iter().map(move |&(d, _)| perceived_distance(d, a)))
        .collect();
    let risk_terms: Vec<f64> = gammas
        .iter()
        .flat_map(|&g| options.iter().map(move |&(_, s)| risk_weight * perceived_risk(s, g)))
        .collect();

    let mut counts = vec![0u64; m];
    for ia in 0..grid_n {
        let dt = &dist_terms[ia * m..(ia + 1) * m];
        for ig in 0..grid_n {
            let rt = &risk_terms[ig * m..(ig + 1) * m];
            let mut best = 0;
            let mut best_cost = dt[0] + rt[0];
            for o in 1..m {
                let c = dt[o] + rt[o];
                if c < best_cost {
                    best = o;
                    best_cost = c;
                }
            }
            counts[best] += 1;
        }
    }
    let total = (grid_n * grid_n) as f64;
    ChoiceDistribution {
        probs: counts.iter().map(|&c| c as f64 / total).collect(),
    }
}

/// Box average of the subjective cost by the midpoint rule.
pub fn mean_subjective_cost(
    distance: f64,
    risk: f64,
    param_box: &ParamBox,
    risk_weight: f64,
    grid_n: usize,
) -> f64 {
    assert!(grid_n >= 2, "grid needs at least 2 cells per axis");
    let (alphas, gammas) = param_box.midpoints(grid_n);
    let n = grid_n as f64;
    let dist_mean = alphas.iter().map(|&a| perceived_distance(distance, a)).sum::<f64>() / n;
    let risk_mean = gammas.iter().map(|&g| perceived_risk(risk, g)).sum::<f64>() / n;
    dist_mean + risk_weight * risk_mean
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn perceived_risk_examples() {
        assert_relative_eq!(perceived_risk(0.3, 1.0), 0.3, epsilon = 1e-15);
        assert_eq!(perceived_risk(0.0, 0.7), 0.0);
        assert_eq!(perceived_risk(1.0, 0.7), 1.0);
        // exp(-sqrt(ln 100)), evaluated independently with mpmath at 50 digits.
        assert_relative_eq!(perceived_risk(0.01, 0.5), 0.116_955_000_849_457_83, epsilon = 1e-12);
    }

    #[test]
    fn weighting_crosses_identity_at_inverse_e() {
        let s_star = (-1.0_f64).exp();
        assert_relative_eq!(perceived_risk(s_star, 0.5), s_star, epsilon = 1e-15);
        assert!(perceived_risk(0.01, 0.5) > 0.01);
        assert!(perceived_risk(0.9, 0.5) < 0.9);
    }

    #[test]
    fn perceived_distance_examples() {
        assert_relative_eq!(perceived_distance(100.0, 0.5), 10.0);
        assert_eq!(perceived_distance(7.3, 1.0), 7.3);
        assert_eq!(perceived_distance(1.0, 0.61), 1.0);
    }

    #[test]
    fn subjective_cost_examples() {
        let p = PreferenceParams::new(0.5, 0.5);
        assert_relative_eq!(subjective_cost(100.0, 0.0, p, 10.0), 10.0);
        assert_relative_eq!(subjective_cost(100.0, 0.01, p, 10.0), 11.169_550_008_494_578, epsilon = 1e-11);
        let obj = PreferenceParams::objective();
        assert_relative_eq!(
            subjective_cost(12.5, 0.44, obj, 10.0),
            crate::geometry::objective_cost(12.5, 0.44, 10.0),
            epsilon = 1e-12
        );
    }

    #[test]
    fn preferred_option_breaks_ties_low() {
        assert_eq!(preferred_option(&[3.0, 5.0]), 0);
        assert_eq!(preferred_option(&[4.0, 4.0]), 0);
        assert_eq!(preferred_option(&[4.0, 2.0, 2.0]), 1);
    }

    #[test]
    fn choice_distribution_trivial_cases() {
        let one = choice_distribution(&[(10.0, 0.3)], &ParamBox::default(), 10.0, 20);
        assert_eq!(one.probs, vec![1.0]);
        let twins = choice_distribution(&[(10.0, 0.3), (10.0, 0.3)], &ParamBox::default(), 10.0, 20);
        assert_eq!(twins.probs, vec![1.0, 0.0]);
    }

    #[test]
    fn mean_cost_degenerate_cases() {
        assert_relative_eq!(mean_subjective_cost(1.0, 0.0, &ParamBox::default(), 10.0, 50), 1.0);
        let tiny = ParamBox::new(0.7, 0.7 + 1e-9, 0.8, 0.8 + 1e-9).unwrap();
        let exact = subjective_cost(30.0, 0.4, PreferenceParams::new(0.7, 0.8), 10.0);
        assert!((mean_subjective_cost(30.0, 0.4, &tiny, 10.0, 10) - exact).abs() < 1e-6);
    }

    #[test]
    fn param_box_rejects_inverted_bounds() {
        assert!(ParamBox::new(0.9, 0.5, 0.5, 1.1).is_none());
        assert!(ParamBox::new(0.0, 0.5, 0.5, 1.1).is_none());
        assert!(ParamBox::around(0.65, 0.1, 0.6, 0.1).is_some());
    }
}
