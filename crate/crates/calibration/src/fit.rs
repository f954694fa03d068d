//! Risk-weight fit: the grid value whose model shares sit closest, in summed
//! absolute percentage points, to the mean human shares.

use cotransport::preference::{choice_distribution, ParamBox};
use serde::Serialize;

/// One environment's options and mean human percentages, in the same order.
#[derive(Clone, Debug)]
pub struct FitTarget {
    pub pairs: Vec<(f64, f64)>,
    pub human: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RiskWeightFit {
    pub c_r: f64,
    pub deviation: f64,
    /// `[c_r, deviation]` for every grid value.
    pub curve: Vec<[f64; 2]>,
}

/// 0, 0.5, ..., 30.
pub fn default_grid() -> Vec<f64> {
    (0..=60).map(|i| f64::from(i) * 0.5).collect()
}

pub fn deviation(targets: &[FitTarget], c_r: f64, param_box: &ParamBox, grid_n: usize) -> f64 {
    targets
        .iter()
        .map(|t| {
            let model = choice_distribution(&t.pairs, param_box, c_r, grid_n);
            model.probs.iter().zip(&t.human).map(|(m, h)| (100.0 * m - h).abs()).sum::<f64>()
        })
        .sum()
}

/// Ties resolve to the smallest grid value. `None` without targets or grid.
pub fn fit_risk_weight(targets: &[FitTarget], grid: &[f64], param_box: &ParamBox, grid_n: usize) -> Option<RiskWeightFit> {
    if targets.is_empty() || grid.is_empty() {
        return None;
    }
    let curve: Vec<[f64; 2]> = grid.iter().map(|&c| [c, deviation(targets, c, param_box, grid_n)]).collect();
    let best = curve.iter().fold(curve[0], |b, p| if p[1] < b[1] { *p } else { b });
    Some(RiskWeightFit {
        c_r: best[0],
        deviation: best[1],
        curve,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_spans_zero_to_thirty() {
        let g = default_grid();
        assert_eq!((g.len(), g[0], g[60]), (61, 0.0, 30.0));
    }

    #[test]
    fn recovers_the_generating_weight() {
        // Two options whose ranking flips as the risk weight grows.
        let pairs = vec![(10.0, 0.4), (14.0, 0.05)];
        let b = ParamBox::default();
        let truth = choice_distribution(&pairs, &b, 12.0, 120);
        let targets = [FitTarget {
            pairs,
            human: truth.probs.iter().map(|p| 100.0 * p).collect(),
        }];
        let fit = fit_risk_weight(&targets, &default_grid(), &b, 120).unwrap();
        assert_eq!(fit.c_r, 12.0);
        assert!(fit.deviation < 1e-9);
    }
}
