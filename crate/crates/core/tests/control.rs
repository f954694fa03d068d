use std::f64::consts::FRAC_PI_2;

use cotransport::control::kinematics::{
    configuration_jacobian, input_selection, numerical_rank, wrap_angle, JointAxis, ARM_JOINTS,
};
use cotransport::control::pose::tracking_cost;
use cotransport::control::{
    forward_kinematics, generate_candidates, input_matrix, mpc_objective, optimize_pose, solve_mpc, EndEffectorState,
    JointConfig, LinkTable, MpcSetup, WeightedReference, INPUT_DIM, STATE_DIM,
};
use nalgebra::{DMatrix, DVector, SVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Mat4 = [[f64; 4]; 4];

fn mul(a: &Mat4, b: &Mat4) -> Mat4 {
    let mut c = [[0.0; 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            c[i][j] = (0..4).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    c
}

fn translation(t: [f64; 3]) -> Mat4 {
    [[1.0, 0.0, 0.0, t[0]], [0.0, 1.0, 0.0, t[1]], [0.0, 0.0, 1.0, t[2]], [0.0, 0.0, 0.0, 1.0]]
}

fn rotation(axis: JointAxis, a: f64) -> Mat4 {
    let (s, c) = a.sin_cos();
    match axis {
        JointAxis::X => [[1.0, 0.0, 0.0, 0.0], [0.0, c, -s, 0.0], [0.0, s, c, 0.0], [0.0, 0.0, 0.0, 1.0]],
        JointAxis::Y => [[c, 0.0, s, 0.0], [0.0, 1.0, 0.0, 0.0], [-s, 0.0, c, 0.0], [0.0, 0.0, 0.0, 1.0]],
        JointAxis::Z => [[c, -s, 0.0, 0.0], [s, c, 0.0, 0.0], [0.0, 0.0, 1.0, 0.0], [0.0, 0.0, 0.0, 1.0]],
    }
}

/// Brute-force chain of homogeneous transforms, read out as `Rz·Ry·Rx` angles.
fn chain_oracle(link: &LinkTable, q: &JointConfig) -> [f64; 6] {
    let mut t = mul(&translation([q.0[0], q.0[1], 0.0]), &rotation(JointAxis::Z, q.0[2]));
    t = mul(&t, &translation(link.mount));
    for (i, j) in link.joints.iter().enumerate() {
        t = mul(&t, &translation(j.origin));
        t = mul(&t, &rotation(j.axis, q.0[3 + i]));
    }
    t = mul(&t, &translation(link.tool));
    let yaw = t[1][0].atan2(t[0][0]);
    let pitch = (-t[2][0]).clamp(-1.0, 1.0).asin();
    let roll = t[2][1].atan2(t[2][2]);
    [t[0][3], t[1][3], t[2][3], roll, pitch, yaw]
}

fn random_config(link: &LinkTable, rng: &mut impl Rng) -> JointConfig {
    let arm: [f64; ARM_JOINTS] = std::array::from_fn(|i| {
        let j = &link.joints[i];
        rng.gen_range(j.lower..j.upper)
    });
    JointConfig::new([rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0), rng.gen_range(-3.1..3.1)], arm)
}

fn state_diff(a: &EndEffectorState, b: &EndEffectorState) -> SVector<f64, STATE_DIM> {
    a.error_from(b)
}

#[test]
fn forward_kinematics_matches_transform_chain() {
    let link = LinkTable::default();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..200 {
        let q = random_config(&link, &mut rng);
        let x = forward_kinematics(&link, &q);
        let o = chain_oracle(&link, &q);
        if o[4].cos().abs() < 1e-3 {
            continue;
        }
        for k in 0..3 {
            assert!((x.0[k] - o[k]).abs() < 1e-12, "position {k}: {} vs {}", x.0[k], o[k]);
        }
        for k in 3..6 {
            assert!(wrap_angle(x.0[k] - o[k]).abs() < 1e-9, "angle {k}: {} vs {}", x.0[k], o[k]);
        }
    }
}

#[test]
fn rotating_base_heading_rotates_tool_about_base() {
    let link = LinkTable::default();
    let arm = [0.3, -0.2, 0.5, 1.1, -0.4, 0.7, 0.2];
    let base = [1.5, -0.5];
    let q0 = JointConfig::new([base[0], base[1], 0.2], arm);
    let q1 = JointConfig::new([base[0], base[1], 0.2 + FRAC_PI_2], arm);
    let x0 = chain_oracle(&link, &q0);
    let x1 = forward_kinematics(&link, &q1);
    let (dx, dy) = (x0[0] - base[0], x0[1] - base[1]);
    assert!((x1.0[0] - (base[0] - dy)).abs() < 1e-12);
    assert!((x1.0[1] - (base[1] + dx)).abs() < 1e-12);
    assert!((x1.0[2] - x0[2]).abs() < 1e-12);
    assert!(wrap_angle(x1.0[5] - x0[5] - FRAC_PI_2).abs() < 1e-9);
}

#[test]
fn input_matrix_matches_central_differences() {
    let link = LinkTable::default();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let eps = 1e-6;
    let dt = 0.1;
    let mut checked = 0;
    while checked < 100 {
        let q = random_config(&link, &mut rng);
        // Euler rates are undefined at gimbal lock.
        if forward_kinematics(&link, &q).0[4].cos().abs() < 0.05 {
            continue;
        }
        let b = input_matrix(&link, &q, dt);
        let sel = input_selection(&link, &q);
        for c in 0..INPUT_DIM {
            let dir = sel.column(c) * dt;
            let plus = JointConfig(q.0 + dir * eps);
            let minus = JointConfig(q.0 - dir * eps);
            let fd = state_diff(&forward_kinematics(&link, &plus), &forward_kinematics(&link, &minus)) / (2.0 * eps);
            let err = (b.column(c) - fd).amax();
            assert!(err < 1e-5, "column {c} off by {err} at {:?}", q.0);
        }
        checked += 1;
    }
}

#[test]
fn stretched_arm_loses_rank() {
    let link = LinkTable::default();
    let arm_block = |q: &JointConfig| configuration_jacobian(&link, q).fixed_columns::<ARM_JOINTS>(3).into_owned();
    let stretched = arm_block(&JointConfig::zeros());
    let bent = arm_block(&JointConfig::new([0.0; 3], [0.3, -0.5, 0.4, 1.0, -0.3, 0.8, 0.1]));
    assert!(numerical_rank(&stretched, 1e-9) < 6);
    assert_eq!(numerical_rank(&bent, 1e-9), 6);
}

/// Objective-only conjugate gradient: central-difference gradients and a
/// three-point parabolic line search, both exact on quadratics.
fn black_box_minimize(f: impl Fn(&DVector<f64>) -> f64, n: usize) -> f64 {
    let h = 1e-4;
    let grad = |x: &DVector<f64>| {
        DVector::from_fn(n, |i, _| {
            let mut p = x.clone();
            let mut m = x.clone();
            p[i] += h;
            m[i] -= h;
            (f(&p) - f(&m)) / (2.0 * h)
        })
    };
    let mut x = DVector::zeros(n);
    let mut g = grad(&x);
    let mut d = -&g;
    for _ in 0..3 * n {
        if g.norm() < 1e-12 {
            break;
        }
        let scale = 1.0 / d.norm();
        let (f0, f1, f2) = (f(&x), f(&(&x + &d * scale)), f(&(&x - &d * scale)));
        let curvature = f1 + f2 - 2.0 * f0;
        if curvature <= 0.0 {
            break;
        }
        let step = scale * (f2 - f1) / (2.0 * curvature);
        x += &d * step;
        let g_new = grad(&x);
        let beta = (g_new.dot(&(&g_new - &g)) / g.dot(&g)).max(0.0);
        d = -&g_new + d * beta;
        g = g_new;
    }
    f(&x)
}

fn random_instance(rng: &mut impl Rng, h: usize) -> (DVector<f64>, DMatrix<f64>, Vec<DVector<f64>>, MpcSetup) {
    let x0 = DVector::from_fn(STATE_DIM, |_, _| rng.gen_range(-1.0..1.0));
    let b = DMatrix::from_fn(STATE_DIM, INPUT_DIM, |_, _| rng.gen_range(-0.1..0.1));
    let nominal = (0..h).map(|_| DVector::from_fn(STATE_DIM, |_, _| rng.gen_range(-1.0..1.0))).collect();
    let setup = MpcSetup::diagonal(h, STATE_DIM, INPUT_DIM, rng.gen_range(1.0..100.0), rng.gen_range(0.5..2.0)).unwrap();
    (x0, b, nominal, setup)
}

fn split(u: &DVector<f64>, h: usize) -> Vec<DVector<f64>> {
    (0..h).map(|t| u.rows(t * INPUT_DIM, INPUT_DIM).into_owned()).collect()
}

#[test]
fn mpc_matches_black_box_minimizer() {
    let mut rng = ChaCha8Rng::seed_from_u64(29);
    for trial in 0..50 {
        let h = 1 + trial % 4;
        let (x0, b, nominal, setup) = random_instance(&mut rng, h);
        let sol = solve_mpc(&x0, &b, &nominal, &setup).unwrap();
        let f = |u: &DVector<f64>| mpc_objective(&x0, &b, &nominal, &setup, &split(u, h)).unwrap();
        let oracle = black_box_minimize(f, h * INPUT_DIM);
        assert!(
            (sol.cost - oracle).abs() < 1e-6 * oracle.max(1.0),
            "trial {trial}: solver {} oracle {oracle}",
            sol.cost
        );
        for _ in 0..1000 {
            let u = DVector::from_fn(h * INPUT_DIM, |_, _| rng.gen_range(-5.0..5.0));
            assert!(sol.cost <= f(&u) + 1e-9);
        }
    }
}

fn arm_pose() -> JointConfig {
    JointConfig::new([0.4, -0.2, 0.3], [0.2, -0.4, 0.3, 0.9, -0.2, -0.5, 0.1])
}

fn reference_from(x: &EndEffectorState, dir: [f64; 3], yaw_rate: f64, h: usize) -> Vec<EndEffectorState> {
    (1..=h)
        .map(|t| {
            let t = t as f64;
            EndEffectorState::new(
                [x.0[0] + dir[0] * t, x.0[1] + dir[1] * t, x.0[2] + dir[2] * t],
                [x.0[3], x.0[4], x.0[5] + yaw_rate * t],
            )
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn mpc_optimum_survives_small_perturbations(seed in any::<u64>(), h in 1usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (x0, b, nominal, setup) = random_instance(&mut rng, h);
        let sol = solve_mpc(&x0, &b, &nominal, &setup).unwrap();
        let base = mpc_objective(&x0, &b, &nominal, &setup, &sol.inputs).unwrap();
        prop_assert!((base - sol.cost).abs() <= 1e-9 * base.max(1.0));
        for _ in 0..20 {
            let d = DVector::from_fn(h * INPUT_DIM, |_, _| rng.gen_range(-1.0..1.0));
            let d = d.normalize() * 1e-3;
            let stacked = DVector::from_iterator(h * INPUT_DIM, sol.inputs.iter().flat_map(|u| u.iter().copied()));
            let probe = mpc_objective(&x0, &b, &nominal, &setup, &split(&(stacked + d), h)).unwrap();
            prop_assert!(probe >= base - 1e-9 * base.max(1.0));
        }
    }

    #[test]
    fn tracking_cost_is_translation_invariant(dx in -20.0..20.0f64, dy in -20.0..20.0f64, seed in any::<u64>()) {
        let link = LinkTable::default();
        let setup = MpcSetup::diagonal(8, STATE_DIM, INPUT_DIM, 1000.0, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let q = random_config(&link, &mut rng);
        let x = forward_kinematics(&link, &q);
        let nominal = reference_from(&x, [0.05, 0.01, 0.0], 0.02, 8);
        let (g, _) = tracking_cost(&link, &q, &nominal, &setup, 0.1).unwrap();
        let mut moved = q;
        moved.0[0] += dx;
        moved.0[1] += dy;
        let shifted: Vec<_> = nominal
            .iter()
            .map(|s| {
                let mut s = *s;
                s.0[0] += dx;
                s.0[1] += dy;
                s
            })
            .collect();
        let (g2, _) = tracking_cost(&link, &moved, &shifted, &setup, 0.1).unwrap();
        prop_assert!((g - g2).abs() <= 1e-7 * g.max(1.0), "{g} vs {g2}");
    }

    #[test]
    fn pose_objective_never_exceeds_current_pose(seed in any::<u64>(), p in 0.0..1.0f64, kappa in 0.0..5.0f64) {
        let link = LinkTable::default();
        let setup = MpcSetup::diagonal(8, STATE_DIM, INPUT_DIM, 1000.0, 1.0).unwrap();
        let q_c = arm_pose();
        let x = forward_kinematics(&link, &q_c);
        let references = vec![
            WeightedReference { probability: p, nominal: reference_from(&x, [0.05, 0.0, 0.0], 0.0, 8) },
            WeightedReference { probability: 1.0 - p, nominal: reference_from(&x, [0.0, 0.05, 0.0], 0.1, 8) },
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let candidates = generate_candidates(&link, &q_c, 15, 0.3, &mut rng);
        let choice = optimize_pose(&link, &q_c, &candidates, &references, &setup, kappa, 0.1).unwrap();
        let at_current = optimize_pose(&link, &q_c, &[q_c], &references, &setup, kappa, 0.1).unwrap();
        prop_assert!(choice.objective <= at_current.objective);
    }
}

#[test]
fn concentrated_distribution_reduces_to_single_option() {
    let link = LinkTable::default();
    let setup = MpcSetup::diagonal(8, STATE_DIM, INPUT_DIM, 1000.0, 1.0).unwrap();
    let q_c = arm_pose();
    let x = forward_kinematics(&link, &q_c);
    let a = reference_from(&x, [0.05, 0.0, 0.0], 0.0, 8);
    let b = reference_from(&x, [0.0, 0.05, 0.0], 0.15, 8);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let candidates = generate_candidates(&link, &q_c, 15, 0.3, &mut rng);
    let kappa = 1.0;
    let mixed = optimize_pose(
        &link,
        &q_c,
        &candidates,
        &[
            WeightedReference { probability: 0.0, nominal: a },
            WeightedReference { probability: 1.0, nominal: b.clone() },
        ],
        &setup,
        kappa,
        0.1,
    )
    .unwrap();
    // Independent argmin of G_b + κ‖Δq‖² over the same candidates.
    let (best, best_cost) = candidates
        .iter()
        .enumerate()
        .map(|(i, q)| (i, tracking_cost(&link, q, &b, &setup, 0.1).unwrap().0 + kappa * q.distance_squared(&q_c)))
        .fold((0, f64::INFINITY), |acc, c| if c.1 < acc.1 { c } else { acc });
    assert_eq!(mixed.index, best);
    assert!((mixed.objective - best_cost).abs() < 1e-9 * best_cost.max(1.0));
}
