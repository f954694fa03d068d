use cotransport::builtin::environment;
use cotransport::geometry::{enumerate_options, PathOption};
use cotransport::preference::{
    choice_distribution, mean_subjective_cost, perceived_risk, preferred_option, subjective_cost, ParamBox,
    PreferenceParams,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const C_R: f64 = 10.0;

fn env4_options() -> (Vec<PathOption>, Vec<String>) {
    let env = environment("env4").unwrap();
    let options = enumerate_options(&env, &env.start);
    let labels = options.iter().map(|o| env.label_for(&o.openings).unwrap().to_string()).collect();
    (options, labels)
}

fn pairs(options: &[PathOption]) -> Vec<(f64, f64)> {
    options.iter().map(|o| (o.distance, o.risk)).collect()
}

/// Fraction of uniform box samples won by each option.
fn monte_carlo_shares(options: &[(f64, f64)], b: &ParamBox, samples: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut wins = vec![0usize; options.len()];
    for _ in 0..samples {
        let a = rng.gen_range(b.alpha_lo..b.alpha_hi);
        let g = rng.gen_range(b.gamma_lo..b.gamma_hi);
        let costs: Vec<f64> = options
            .iter()
            .map(|&(d, s)| d.powf(a) + C_R * (-(-s.ln()).powf(g)).exp())
            .collect();
        let best = (0..costs.len()).fold(0, |best, i| if costs[i] < costs[best] { i } else { best });
        wins[best] += 1;
    }
    wins.iter().map(|&w| w as f64 / samples as f64).collect()
}

#[test]
fn env4_distribution_matches_monte_carlo_and_reported_ranking() {
    let (options, labels) = env4_options();
    let p = pairs(&options);
    let grid = choice_distribution(&p, &ParamBox::default(), C_R, 400);
    let mc = monte_carlo_shares(&p, &ParamBox::default(), 1_000_000, 7);
    for (i, (g, m)) in grid.probs.iter().zip(&mc).enumerate() {
        assert!((g - m).abs() < 0.01, "{}: grid {g} vs monte carlo {m}", labels[i]);
    }
    // Reported model shares for options 1..4: 3.6, 18.3, 46.3, 31.8 %.
    let reported: [(&str, f64); 4] = [("option 1", 0.036), ("option 2", 0.183), ("option 3", 0.463), ("option 4", 0.318)];
    let share = |name: &str| grid.probs[labels.iter().position(|l| l == name).unwrap()];
    let mut by_model: Vec<_> = reported.iter().map(|(n, _)| (share(n), *n)).collect();
    let mut by_paper: Vec<_> = reported.iter().map(|(n, v)| (*v, *n)).collect();
    by_model.sort_by(|a, b| b.0.total_cmp(&a.0));
    by_paper.sort_by(|a, b| b.0.total_cmp(&a.0));
    let order = |v: &[(f64, &str)]| v.iter().map(|x| x.1.to_string()).collect::<Vec<_>>();
    assert_eq!(order(&by_model), order(&by_paper));
    for (name, v) in reported {
        // Curated geometry approximates the unpublished layout.
        assert!((share(name) - v).abs() < 0.10, "{name}: {} vs {v}", share(name));
    }
}

#[test]
fn env4_typical_human_prefers_option_3() {
    let (options, labels) = env4_options();
    let params = PreferenceParams::new(0.75, 0.8);
    let costs: Vec<f64> = options.iter().map(|o| subjective_cost(o.distance, o.risk, params, C_R)).collect();
    assert_eq!(labels[preferred_option(&costs)], "option 3");
}

#[test]
fn mean_subjective_cost_matches_monte_carlo() {
    let b = ParamBox::default();
    let grid = mean_subjective_cost(100.0, 0.3, &b, C_R, 400);
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let n = 1_000_000;
    let mut sum = 0.0;
    for _ in 0..n {
        let a = rng.gen_range(b.alpha_lo..b.alpha_hi);
        let g = rng.gen_range(b.gamma_lo..b.gamma_hi);
        sum += 100f64.powf(a) + C_R * (-(-0.3f64.ln()).powf(g)).exp();
    }
    let mc = sum / n as f64;
    assert!((grid - mc).abs() < 1e-3 * mc.max(1.0) + 5e-3, "grid {grid} vs monte carlo {mc}");
}

#[test]
fn collapsed_box_reduces_to_point_cost() {
    let b = ParamBox::new(0.7, 0.7 + 1e-9, 0.9, 0.9 + 1e-9).unwrap();
    let point = subjective_cost(42.0, 0.2, PreferenceParams::new(0.7, 0.9), C_R);
    assert!((mean_subjective_cost(42.0, 0.2, &b, C_R, 50) - point).abs() < 1e-6);
}

#[test]
fn unit_gamma_is_identity() {
    for i in 1..10 {
        let s = i as f64 / 10.0;
        let w = perceived_risk(s, 1.0);
        assert!((w - s).abs() <= 2.0 * f64::EPSILON * s, "{w} vs {s}");
    }
}

fn option_set() -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((1.0..40.0f64, 0.0..0.9f64), 1..6)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn shares_sum_to_one_and_follow_relabeling(options in option_set(), shift in 0usize..6) {
        let dist = choice_distribution(&options, &ParamBox::default(), C_R, 40);
        prop_assert!((dist.probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(dist.probs.iter().all(|p| (0.0..=1.0).contains(p)));
        // Rotating the list rotates the shares, up to grid ties resolved by position.
        let k = shift % options.len();
        let mut rotated = options.clone();
        rotated.rotate_left(k);
        let moved = choice_distribution(&rotated, &ParamBox::default(), C_R, 40);
        let distinct = options.iter().enumerate().all(|(i, a)| options[i + 1..].iter().all(|b| a != b));
        if distinct {
            for i in 0..options.len() {
                let j = (i + options.len() - k) % options.len();
                prop_assert!((dist.probs[i] - moved.probs[j]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn grid_refinement_is_stable(options in option_set()) {
        let n = 60;
        let coarse = choice_distribution(&options, &ParamBox::default(), C_R, n);
        let fine = choice_distribution(&options, &ParamBox::default(), C_R, 2 * n);
        for (c, f) in coarse.probs.iter().zip(&fine.probs) {
            prop_assert!((c - f).abs() < 2.0 / n as f64, "{c} vs {f}");
        }
    }

    #[test]
    fn scaling_distances_keeps_the_riskless_preference(options in option_set(), lambda in 0.1..10.0f64, a in 0.55..0.95f64, g in 0.5..1.1f64) {
        let params = PreferenceParams::new(a, g);
        let cost = |opts: &[(f64, f64)]| opts.iter().map(|&(d, s)| subjective_cost(d, s, params, 0.0)).collect::<Vec<_>>();
        let scaled: Vec<_> = options.iter().map(|&(d, s)| (lambda * d, s)).collect();
        let distances: Vec<f64> = options.iter().map(|o| o.0).collect();
        let unique = distances.iter().enumerate().all(|(i, a)| distances[i + 1..].iter().all(|b| (a - b).abs() > 1e-9));
        prop_assume!(unique);
        prop_assert_eq!(preferred_option(&cost(&options)), preferred_option(&cost(&scaled)));
    }

    #[test]
    fn mean_cost_grows_with_distance_and_risk(d in 0.0..50.0f64, dd in 0.0..10.0f64, s in 0.0..1.0f64, ds in 0.0..1.0f64) {
        let b = ParamBox::default();
        let base = mean_subjective_cost(d, s, &b, C_R, 30);
        prop_assert!(mean_subjective_cost(d + dd, s, &b, C_R, 30) >= base - 1e-12);
        prop_assert!(mean_subjective_cost(d, (s + ds).min(1.0), &b, C_R, 30) >= base - 1e-12);
    }

    #[test]
    fn prelec_weighting_sides_of_inverse_e(g in 0.05..0.999f64, s in 0.001..0.999f64) {
        let star = (-1.0f64).exp();
        prop_assume!((s - star).abs() > 1e-6);
        let w = perceived_risk(s, g);
        if s < star {
            prop_assert!(w > s);
        } else {
            prop_assert!(w < s);
        }
    }
}
