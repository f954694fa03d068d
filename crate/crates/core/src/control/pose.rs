//! Probability-weighted pose optimization and closed-loop tracking.
//!
//! Before tracking, the robot may re-pose its arm: among random candidates
//! around the current configuration it picks the one minimizing
//! `Σ_o P_o·G_o(q) + κ‖q − q_c‖²`, where `G_o` is the optimal MPC cost of
//! tracking option `o` from `q`.

use nalgebra::{DMatrix, DVector, SVector};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::kinematics::{
    configuration_jacobian, forward_kinematics, input_matrix, wrap_angle, EndEffectorState, JointConfig, LinkTable, ARM_JOINTS, INPUT_DIM,
    STATE_DIM,
};
use super::mpc::{solve_mpc, MpcSetup};
use crate::coordination::{ControlHooks, Mode, StepContext};
use crate::error::ControlError;
use crate::geometry::{nominal_trajectory, option_distance, PathOption, Point};
use crate::preference::ChoiceDistribution;

/// `q_c` followed by `n - 1` perturbations of at least two arm joints each,
/// clipped to the joint limits.
pub fn generate_candidates(link: &LinkTable, q_c: &JointConfig, n: usize, delta: f64, rng: &mut impl Rng) -> Vec<JointConfig> {
    let mut out = Vec::with_capacity(n.max(1));
    out.push(*q_c);
    for _ in 1..n {
        let k = rng.gen_range(2..=ARM_JOINTS);
        let mut q = *q_c;
        for j in sample(rng, ARM_JOINTS, k) {
            q.0[3 + j] += rng.gen_range(-delta..=delta);
        }
        link.clamp_arm(&mut q);
        out.push(q);
    }
    out
}

/// Moves `q` back onto the configurations whose end-effector sits at
/// `grasp`, by minimum-norm Newton corrections over the full configuration.
/// The arm stays within limits; a candidate that cannot be brought back
/// within `1e-6` is returned as `None`.
pub fn hold_grasp(link: &LinkTable, q: &JointConfig, grasp: &EndEffectorState) -> Option<JointConfig> {
    let mut q = *q;
    for _ in 0..20 {
        let e = grasp.error_from(&forward_kinematics(link, &q));
        if e.norm() < 1e-6 {
            return Some(q);
        }
        let j = configuration_jacobian(link, &q);
        let step = j.svd(true, true).solve(&e, 1e-9).ok()?;
        q.0 += step;
        q.0[2] = wrap_angle(q.0[2]);
        link.clamp_arm(&mut q);
    }
    let e = grasp.error_from(&forward_kinematics(link, &q));
    (e.norm() < 1e-6).then_some(q)
}

/// One option as the pose optimizer sees it.
#[derive(Clone, Debug)]
pub struct WeightedReference {
    pub probability: f64,
    /// Reference for `x(1) … x(H)`.
    pub nominal: Vec<EndEffectorState>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PoseChoice {
    pub index: usize,
    pub q: JointConfig,
    pub objective: f64,
}

/// Shifts reference angles by multiples of 2π to lie within π of `x0`.
pub fn unwrap_near(x0: &EndEffectorState, nominal: &[EndEffectorState]) -> Vec<DVector<f64>> {
    nominal
        .iter()
        .map(|s| {
            let mut v = DVector::from_column_slice(s.0.as_slice());
            for i in 3..STATE_DIM {
                v[i] = x0.0[i] + wrap_angle(s.0[i] - x0.0[i]);
            }
            v
        })
        .collect()
}

/// Optimal tracking cost and first input from configuration `q`.
pub fn tracking_cost(
    link: &LinkTable,
    q: &JointConfig,
    nominal: &[EndEffectorState],
    setup: &MpcSetup,
    dt: f64,
) -> Result<(f64, SVector<f64, INPUT_DIM>), ControlError> {
    let x0 = forward_kinematics(link, q);
    let b = input_matrix(link, q, dt);
    let b = DMatrix::from_column_slice(STATE_DIM, INPUT_DIM, b.as_slice());
    let reference = unwrap_near(&x0, nominal);
    let x0v = DVector::from_column_slice(x0.0.as_slice());
    let sol = solve_mpc(&x0v, &b, &reference, setup)?;
    Ok((sol.cost, SVector::from_column_slice(sol.first_input().as_slice())))
}

/// Candidate minimizing `Σ P_o·G_o + κ‖q − q_c‖²`; ties go to the candidate
/// closest to `q_c`, then to the lowest index.
pub fn optimize_pose(
    link: &LinkTable,
    q_c: &JointConfig,
    candidates: &[JointConfig],
    references: &[WeightedReference],
    setup: &MpcSetup,
    kappa: f64,
    dt: f64,
) -> Result<PoseChoice, ControlError> {
    if candidates.is_empty() {
        return Err(ControlError::DimensionMismatch("no pose candidates".into()));
    }
    let mut best: Option<(PoseChoice, f64)> = None;
    for (index, q) in candidates.iter().enumerate() {
        let shift = q.distance_squared(q_c);
        let mut objective = kappa * shift;
        for r in references.iter().filter(|r| r.probability > 0.0) {
            objective += r.probability * tracking_cost(link, q, &r.nominal, setup, dt)?.0;
        }
        let better = match &best {
            None => true,
            Some((b, b_shift)) => objective < b.objective || (objective == b.objective && shift < *b_shift),
        };
        if better {
            best = Some((PoseChoice { index, q: *q, objective }, shift));
        }
    }
    Ok(best.expect("at least one candidate").0)
}

/// Realized cost of a closed-loop run.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrueCost {
    pub tracking: f64,
    pub input: f64,
    pub pose_change: f64,
}

impl TrueCost {
    pub fn total(&self) -> f64 {
        self.tracking + self.input + self.pose_change
    }

    /// Adds one control period: `‖x − s‖²_Q + ‖u‖²_R`, angles wrapped.
    pub fn add_step(&mut self, x: &EndEffectorState, s: &EndEffectorState, u: &SVector<f64, INPUT_DIM>, setup: &MpcSetup) {
        let e = x.error_from(s);
        let e = DVector::from_column_slice(e.as_slice());
        let u = DVector::from_column_slice(u.as_slice());
        self.tracking += e.dot(&(&setup.q * &e));
        self.input += u.dot(&(&setup.r * &u));
    }

    pub fn add_pose_change(&mut self, from: &JointConfig, to: &JointConfig, kappa: f64) {
        self.pose_change += kappa * to.distance_squared(from);
    }
}

/// What the MPC tracks while the human leads.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrackerReference {
    /// The human's path as it unfolds, sensed through the carried object.
    Observed,
    /// The most likely option, re-anchored at the human's last observed
    /// position; the true cost still uses the human's actual path.
    MostLikely,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrackerConfig {
    pub horizon: usize,
    pub dt: f64,
    pub q_scale: f64,
    pub r_scale: f64,
    pub kappa: f64,
    pub candidates: usize,
    /// Half-width of the uniform joint perturbation, rad.
    pub delta: f64,
    /// Control periods per coordination step.
    pub substeps: usize,
    /// Re-optimize when the choice distribution moved this far in total variation.
    pub reoptimize_tv: f64,
    pub pose_optimization: bool,
    /// Project candidates back onto the current end-effector pose before
    /// scoring them: a carried object pins the grasp.
    pub hold_grasp: bool,
    pub reference: TrackerReference,
    /// Arm configuration at the start of a run.
    pub initial_arm: [f64; ARM_JOINTS],
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            horizon: 8,
            dt: 0.1,
            q_scale: 1000.0,
            r_scale: 1.0,
            kappa: 1.0,
            candidates: 15,
            delta: 0.3,
            substeps: 5,
            reoptimize_tv: 0.05,
            pose_optimization: true,
            hold_grasp: true,
            reference: TrackerReference::Observed,
            initial_arm: [0.0, -0.4, 0.0, 0.9, 0.0, -0.5, 0.0],
        }
    }
}

/// Lifts planar samples to end-effector states at a fixed height, level,
/// facing along the path.
pub fn lift_trajectory(points: &[Point], height: f64) -> Vec<EndEffectorState> {
    let mut yaw = 0.0;
    let mut headings = Vec::with_capacity(points.len());
    for i in 0..points.len() {
        let next = points[i + 1..].iter().find(|p| (**p - points[i]).norm() > 1e-9);
        if let Some(n) = next {
            let d = n - points[i];
            yaw = d.y.atan2(d.x);
        } else if i == 0 {
            yaw = 0.0;
        }
        headings.push(yaw);
    }
    points
        .iter()
        .zip(headings)
        .map(|(p, yaw)| EndEffectorState::new([p.x, p.y, height], [0.0, 0.0, yaw]))
        .collect()
}

fn window(lifted: &[EndEffectorState], start: usize, horizon: usize) -> Vec<EndEffectorState> {
    let last = lifted.len() - 1;
    (0..horizon).map(|k| lifted[(start + k).min(last)]).collect()
}

/// Closed-loop MPC tracker driven by the coordination loop.
#[derive(Clone)]
pub struct PoseTracker {
    pub link: LinkTable,
    pub config: TrackerConfig,
    pub setup: MpcSetup,
    /// Spacing of control samples along the path.
    pub spacing: f64,
    pub q: JointConfig,
    pub cost: TrueCost,
    pub pose_changes: usize,
    pub failure: Option<ControlError>,
    height: f64,
    started: bool,
    last_probs: Option<ChoiceDistribution>,
    rng: ChaCha8Rng,
}

impl PoseTracker {
    pub fn new(link: LinkTable, config: TrackerConfig, step_length: f64, seed: u64) -> Result<Self, ControlError> {
        let setup = MpcSetup::diagonal(config.horizon, STATE_DIM, INPUT_DIM, config.q_scale, config.r_scale)?;
        if config.substeps == 0 {
            return Err(ControlError::DimensionMismatch("substeps must be at least 1".into()));
        }
        let q = JointConfig::new([0.0; 3], config.initial_arm);
        let height = forward_kinematics(&link, &q).0[2];
        Ok(Self {
            spacing: step_length / config.substeps as f64,
            link,
            setup,
            q,
            cost: TrueCost::default(),
            pose_changes: 0,
            failure: None,
            height,
            started: false,
            last_probs: None,
            rng: ChaCha8Rng::seed_from_u64(seed),
            config,
        })
    }

    /// Places the base so the tool sits on the first reference sample.
    fn place_base(&mut self, reference: &EndEffectorState) {
        let arm: [f64; ARM_JOINTS] = std::array::from_fn(|i| self.q.0[3 + i]);
        let yaw = reference.0[5];
        let probe = forward_kinematics(&self.link, &JointConfig::new([0.0, 0.0, yaw], arm));
        self.q = JointConfig::new(
            [reference.0[0] - probe.0[0], reference.0[1] - probe.0[1], yaw],
            arm,
        );
    }

    fn needs_pose_update(&self, probs: &ChoiceDistribution) -> bool {
        match &self.last_probs {
            None => true,
            Some(last) => last
                .total_variation(probs)
                .map_or(true, |tv| tv > self.config.reoptimize_tv),
        }
    }

    fn update_pose(&mut self, from: &Point, options: &[PathOption], probs: &ChoiceDistribution) -> Result<(), ControlError> {
        let references: Vec<WeightedReference> = options
            .iter()
            .zip(&probs.probs)
            .map(|(o, &p)| {
                let lifted = lift_trajectory(&nominal_trajectory(from, o, self.spacing), self.height);
                WeightedReference {
                    probability: p,
                    nominal: window(&lifted, 1, self.config.horizon),
                }
            })
            .collect();
        let mut candidates = generate_candidates(&self.link, &self.q, self.config.candidates, self.config.delta, &mut self.rng);
        if self.config.hold_grasp {
            let grasp = forward_kinematics(&self.link, &self.q);
            let q_c = self.q;
            candidates = std::iter::once(q_c)
                .chain(candidates.iter().skip(1).filter_map(|q| hold_grasp(&self.link, q, &grasp)))
                .collect();
        }
        let choice = optimize_pose(
            &self.link,
            &self.q,
            &candidates,
            &references,
            &self.setup,
            self.config.kappa,
            self.config.dt,
        )?;
        if choice.index != 0 {
            self.cost.add_pose_change(&self.q, &choice.q, self.config.kappa);
            self.pose_changes += 1;
            self.q = choice.q;
        }
        self.last_probs = Some(probs.clone());
        Ok(())
    }

    fn track(&mut self, ctx: &StepContext<'_>) -> Result<(), ControlError> {
        let option = &ctx.options[ctx.chosen];
        let actual = nominal_trajectory(&ctx.from, option, self.spacing);
        let lifted = lift_trajectory(&actual, self.height);
        let believed = match (ctx.mode, self.config.reference) {
            (Mode::HumanLeading, TrackerReference::MostLikely) => Some(&ctx.options[ctx.probs.most_likely()]),
            _ => None,
        };
        if !self.started {
            let first = match believed {
                Some(b) => lift_trajectory(&nominal_trajectory(&ctx.from, b, self.spacing), self.height)[0],
                None => lifted[0],
            };
            self.place_base(&first);
            self.started = true;
        }
        if self.config.pose_optimization && self.needs_pose_update(ctx.probs) {
            self.update_pose(&ctx.from, ctx.options, ctx.probs)?;
        }
        // The team walks one step length along the option, or to its end.
        let step_length = self.spacing * self.config.substeps as f64;
        let along = option_distance(&ctx.from, option).min(step_length);
        let n = ((along / self.spacing) - 1e-9).ceil().max(0.0) as usize;
        for i in 1..=n.min(lifted.len() - 1) {
            let nominal = match believed {
                Some(b) => {
                    let predicted = lift_trajectory(&nominal_trajectory(&actual[i - 1], b, self.spacing), self.height);
                    window(&predicted, 1, self.config.horizon)
                }
                None => window(&lifted, i, self.config.horizon),
            };
            let (_, u) = tracking_cost(&self.link, &self.q, &nominal, &self.setup, self.config.dt)?;
            // Unconstrained tracking: limits apply only to pose candidates.
            self.q = self.q.integrate(&self.link, &u, self.config.dt);
            let x = forward_kinematics(&self.link, &self.q);
            self.cost.add_step(&x, &lifted[i], &u, &self.setup);
        }
        Ok(())
    }
}

impl ControlHooks for PoseTracker {
    fn after_step(&mut self, ctx: &StepContext<'_>) {
        if self.failure.is_some() {
            return;
        }
        if let Err(e) = self.track(ctx) {
            self.failure = Some(e);
        }
    }
}
