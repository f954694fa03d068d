//! Discomfort, stubbornness and the robot-leading / human-leading mode
//! transition, plus a step-wise simulation of the co-transporting team.
//!
//! While the robot leads, discomfort accumulates the probability mass of
//! options whose next waypoint differs from where the team is heading.
//! Stubbornness grows exponentially in discomfort; once it exceeds one the
//! robot hands the lead to the human for the rest of the task.

use serde::{Deserialize, Serialize};

use crate::error::CalibrationError;
use crate::geometry::{
    enumerate_options_from, objective_cost, point_at_arc_length, Environment, OpeningId, PathOption,
    Point, Progress, DEFAULT_RISK_WEIGHT,
};
use crate::preference::{
    choice_distribution, mean_subjective_cost, preferred_option, ChoiceDistribution, ParamBox,
    PreferenceParams, DEFAULT_GRID_N,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    RobotLeading,
    HumanLeading,
}

/// Where the team is currently heading.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MoveTarget {
    Opening(OpeningId),
    Target,
}

impl MoveTarget {
    pub fn of(option: &PathOption) -> Self {
        match option.next_opening() {
            Some(id) => MoveTarget::Opening(id.clone()),
            None => MoveTarget::Target,
        }
    }
}

/// 0 for options whose next waypoint is `target`, 1 otherwise.
pub fn alignment_coefficients(target: &MoveTarget, options: &[PathOption]) -> Vec<u8> {
    options
        .iter()
        .map(|o| u8::from(&MoveTarget::of(o) != target))
        .collect()
}

pub fn update_discomfort(discomfort: f64, omegas: &[u8], probs: &ChoiceDistribution) -> f64 {
    assert_eq!(omegas.len(), probs.len(), "coefficients and probabilities differ in length");
    discomfort
        + omegas
            .iter()
            .zip(&probs.probs)
            .map(|(&w, &p)| f64::from(w) * p)
            .sum::<f64>()
}

pub fn stubbornness(phi0: f64, discomfort: f64, eta: f64) -> f64 {
    phi0 * (discomfort / eta).exp()
}

/// Robot leads while stubbornness is at most one.
pub fn coordination_mode(phi: f64) -> Mode {
    if phi <= 1.0 {
        Mode::RobotLeading
    } else {
        Mode::HumanLeading
    }
}

/// Option minimizing the stubbornness-weighted blend of objective and
/// box-averaged subjective costs. Ties go to the lowest index.
pub fn team_option(phi: f64, objective: &[f64], mean_subjective: &[f64]) -> usize {
    assert_eq!(objective.len(), mean_subjective.len(), "cost vectors differ in length");
    let blended: Vec<f64> = objective
        .iter()
        .zip(mean_subjective)
        .map(|(j, js)| (1.0 - phi) * j + phi * js)
        .collect();
    preferred_option(&blended)
}

/// Sensitivity that makes stubbornness reach exactly one at the given
/// discomfort.
pub fn eta_from_switch(discomfort_at_switch: f64, phi0: f64) -> Result<f64, CalibrationError> {
    if !(phi0 > 0.0 && phi0 < 1.0) {
        return Err(CalibrationError::UndefinedEta(phi0));
    }
    if !(discomfort_at_switch > 0.0) {
        return Err(CalibrationError::ImmediateSwitch);
    }
    Ok(discomfort_at_switch / (1.0 / phi0).ln())
}

/// A simulated participant whose preference parameters may change at
/// scheduled steps.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulatedHuman {
    /// `(from_step, params)`, strictly increasing, first entry at step 0.
    pub schedule: Vec<(usize, PreferenceParams)>,
    /// Range the parameters were drawn from.
    pub sub_box: Option<ParamBox>,
}

impl SimulatedHuman {
    pub fn fixed(params: PreferenceParams) -> Self {
        Self {
            schedule: vec![(0, params)],
            sub_box: None,
        }
    }

    pub fn with_schedule(schedule: Vec<(usize, PreferenceParams)>, sub_box: Option<ParamBox>) -> Option<Self> {
        let valid = !schedule.is_empty()
            && schedule[0].0 == 0
            && schedule.len() <= 3
            && schedule.windows(2).all(|w| w[0].0 < w[1].0);
        valid.then_some(Self { schedule, sub_box })
    }

    pub fn params_at(&self, step: usize) -> PreferenceParams {
        self.schedule
            .iter()
            .rev()
            .find(|(from, _)| *from <= step)
            .map(|(_, p)| *p)
            .expect("schedule starts at step 0")
    }
}

/// The option the human prefers at `step` among `(distance, risk)` pairs.
pub fn simulate_human_choice(
    human: &SimulatedHuman,
    step: usize,
    options: &[(f64, f64)],
    risk_weight: f64,
) -> usize {
    let params = human.params_at(step);
    let costs: Vec<f64> = options
        .iter()
        .map(|&(d, s)| crate::preference::subjective_cost(d, s, params, risk_weight))
        .collect();
    preferred_option(&costs)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoordinationConfig {
    pub phi0: f64,
    pub eta: f64,
    pub risk_weight: f64,
    pub param_box: ParamBox,
    pub grid_n: usize,
    pub step_length: f64,
    pub max_steps: usize,
    /// When false the robot follows the human from the first step.
    pub model_enabled: bool,
}

impl Default for CoordinationConfig {
    fn default() -> Self {
        Self {
            phi0: 0.5,
            eta: 10.5,
            risk_weight: DEFAULT_RISK_WEIGHT,
            param_box: ParamBox::default(),
            grid_n: DEFAULT_GRID_N,
            step_length: 0.25,
            max_steps: 2_000,
            model_enabled: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoordinationState {
    pub step: usize,
    pub position: Point,
    pub discomfort: f64,
    pub phi0: f64,
    pub eta: f64,
    pub mode: Mode,
    /// Remaining opening sequence of the option being executed.
    pub team_route: Option<Vec<OpeningId>>,
    pub progress: Progress,
    pub accumulated_cost: f64,
    pub switch_step: Option<usize>,
    pub finished: bool,
}

impl CoordinationState {
    pub fn new(env: &Environment, cfg: &CoordinationConfig) -> Self {
        Self {
            step: 0,
            position: env.start,
            discomfort: 0.0,
            phi0: cfg.phi0,
            eta: cfg.eta,
            mode: if cfg.model_enabled {
                coordination_mode(cfg.phi0)
            } else {
                Mode::HumanLeading
            },
            team_route: None,
            progress: Progress::default(),
            accumulated_cost: 0.0,
            switch_step: None,
            finished: false,
        }
    }

    pub fn phi(&self) -> f64 {
        stubbornness(self.phi0, self.discomfort, self.eta)
    }
}

/// One executed step, as written to run records.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub k: usize,
    pub position: [f64; 2],
    pub g: f64,
    pub phi: f64,
    pub mode: Mode,
    pub team_option: Vec<OpeningId>,
    pub options: Vec<Vec<OpeningId>>,
    pub probs: Vec<f64>,
    pub objective_cost: f64,
    pub move_to: [f64; 2],
}

/// What the control layer sees of each step.
pub struct StepContext<'a> {
    pub step: usize,
    pub mode: Mode,
    pub from: Point,
    pub to: Point,
    pub options: &'a [PathOption],
    pub probs: &'a ChoiceDistribution,
    pub chosen: usize,
}

/// Observer invoked after every executed step.
pub trait ControlHooks {
    fn after_step(&mut self, _ctx: &StepContext<'_>) {}
}

/// Hooks that do nothing.
pub struct NoControl;

impl ControlHooks for NoControl {}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum SimulationFailure {
    NoFeasibleOption { step: usize },
    StepLimit { steps: usize },
}

impl std::fmt::Display for SimulationFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::NoFeasibleOption { step } => write!(f, "no feasible option at step {step}"),
            Self::StepLimit { steps } => write!(f, "target not reached within {steps} steps"),
        }
    }
}

/// Per-option quantities evaluated at the team's current position.
pub struct OptionEvaluation {
    pub options: Vec<PathOption>,
    pub probs: ChoiceDistribution,
    pub objective: Vec<f64>,
    pub mean_subjective: Vec<f64>,
}

impl OptionEvaluation {
    pub fn pairs(&self) -> Vec<(f64, f64)> {
        self.options.iter().map(|o| (o.distance, o.risk)).collect()
    }
}

pub fn evaluate_options(options: Vec<PathOption>, cfg: &CoordinationConfig) -> OptionEvaluation {
    let pairs: Vec<(f64, f64)> = options.iter().map(|o| (o.distance, o.risk)).collect();
    let probs = choice_distribution(&pairs, &cfg.param_box, cfg.risk_weight, cfg.grid_n);
    let objective = pairs
        .iter()
        .map(|&(d, s)| objective_cost(d, s, cfg.risk_weight))
        .collect();
    let mean_subjective = pairs
        .iter()
        .map(|&(d, s)| mean_subjective_cost(d, s, &cfg.param_box, cfg.risk_weight, cfg.grid_n))
        .collect();
    OptionEvaluation {
        options,
        probs,
        objective,
        mean_subjective,
    }
}

/// Advances the team by one step.
///
/// Returns `Ok(None)` once the target has been reached.
pub fn step_simulation(
    state: &mut CoordinationState,
    env: &Environment,
    human: &SimulatedHuman,
    cfg: &CoordinationConfig,
    hooks: &mut dyn ControlHooks,
) -> Result<Option<StepRecord>, SimulationFailure> {
    if state.finished {
        return Ok(None);
    }
    let options = enumerate_options_from(env, &state.position, &state.progress);
    if options.is_empty() {
        return Err(SimulationFailure::NoFeasibleOption { step: state.step });
    }
    let eval = evaluate_options(options, cfg);
    let phi = state.phi();

    if state.mode == Mode::RobotLeading && coordination_mode(phi) == Mode::HumanLeading {
        state.mode = Mode::HumanLeading;
        state.switch_step = Some(state.step);
    }
    let chosen = match state.mode {
        Mode::RobotLeading => team_option(phi, &eval.objective, &eval.mean_subjective),
        Mode::HumanLeading => simulate_human_choice(human, state.step, &eval.pairs(), cfg.risk_weight),
    };
    let option = &eval.options[chosen];

    let omegas = alignment_coefficients(&MoveTarget::of(option), &eval.options);
    let g_next = update_discomfort(state.discomfort, &omegas, &eval.probs);

    let from = state.position;
    let to = walk(env, state, option, cfg.step_length);

    let record = StepRecord {
        k: state.step,
        position: [from.x, from.y],
        g: state.discomfort,
        phi,
        mode: state.mode,
        team_option: option.openings.clone(),
        options: eval.options.iter().map(|o| o.openings.clone()).collect(),
        probs: eval.probs.probs.clone(),
        objective_cost: eval.objective[chosen],
        move_to: [to.x, to.y],
    };

    hooks.after_step(&StepContext {
        step: state.step,
        mode: state.mode,
        from,
        to,
        options: &eval.options,
        probs: &eval.probs,
        chosen,
    });

    state.accumulated_cost += eval.objective[chosen];
    state.discomfort = g_next;
    state.team_route = Some(option.openings.clone());
    state.step += 1;
    if (to - env.target).norm() <= 1e-9 {
        state.finished = true;
    }
    Ok(Some(record))
}

/// Moves along `option` by `step_length`, snapping to the target when it is
/// within reach, and updates which openings have been crossed or passed.
fn walk(env: &Environment, state: &mut CoordinationState, option: &PathOption, step_length: f64) -> Point {
    let mut pts = Vec::with_capacity(option.waypoints.len() + 1);
    pts.push(state.position);
    pts.extend_from_slice(&option.waypoints);

    let remaining: f64 = pts.windows(2).map(|w| (w[1] - w[0]).norm()).sum();
    let travel = if remaining <= step_length { remaining } else { step_length };
    let to = point_at_arc_length(&pts, travel);

    // Opening centers reached during this move.
    let first_center = usize::from(option.first_crossed);
    let mut walked = 0.0;
    for (i, w) in pts.windows(2).enumerate() {
        walked += (w[1] - w[0]).norm();
        if walked > travel + 1e-12 {
            break;
        }
        let opening_idx = i + first_center;
        if opening_idx < option.openings.len() {
            let id = &option.openings[opening_idx];
            let opening = env.opening(id).expect("option opening exists");
            let next = pts.get(i + 2).copied().unwrap_or(env.target);
            let exit = opening.axial_offset(&next).signum();
            if let Some((prev, _)) = state.progress.crossing.take() {
                state.progress.passed.push(prev);
            }
            state.progress.crossing = Some((id.clone(), exit));
        }
    }
    if let Some((id, exit)) = state.progress.crossing.clone() {
        let opening = env.opening(&id).expect("crossing opening exists");
        if opening.axial_offset(&to) * exit > env.robot_width {
            state.progress.passed.push(id);
            state.progress.crossing = None;
        }
    }
    state.position = to;
    to
}

/// A frame of a replayed route: where the team stands and the discomfort
/// accumulated before the step taken from there.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplayFrame {
    pub position: [f64; 2],
    pub g: f64,
}

/// Walks a fixed opening sequence from the start, accumulating discomfort as
/// a robot leading along that route would. The last frame is the target.
pub fn replay_route(
    env: &Environment,
    route: &[OpeningId],
    cfg: &CoordinationConfig,
) -> Result<Vec<ReplayFrame>, SimulationFailure> {
    let mut state = CoordinationState::new(env, cfg);
    let mut frames = Vec::new();
    while !state.finished {
        if state.step >= cfg.max_steps {
            return Err(SimulationFailure::StepLimit { steps: cfg.max_steps });
        }
        frames.push(ReplayFrame {
            position: [state.position.x, state.position.y],
            g: state.discomfort,
        });
        let remaining: Vec<OpeningId> = route
            .iter()
            .filter(|id| !state.progress.passed.contains(id))
            .cloned()
            .collect();
        let options = enumerate_options_from(env, &state.position, &state.progress);
        let Some(option) = options.iter().find(|o| o.openings == remaining) else {
            return Err(SimulationFailure::NoFeasibleOption { step: state.step });
        };
        let pairs: Vec<(f64, f64)> = options.iter().map(|o| (o.distance, o.risk)).collect();
        let probs = choice_distribution(&pairs, &cfg.param_box, cfg.risk_weight, cfg.grid_n);
        let omegas = alignment_coefficients(&MoveTarget::of(option), &options);
        state.discomfort = update_discomfort(state.discomfort, &omegas, &probs);
        let to = walk(env, &mut state, option, cfg.step_length);
        state.step += 1;
        state.finished = (to - env.target).norm() <= 1e-9;
    }
    frames.push(ReplayFrame {
        position: [state.position.x, state.position.y],
        g: state.discomfort,
    });
    Ok(frames)
}

/// Outcome of a full simulated task.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub steps: Vec<StepRecord>,
    pub accumulated_cost: f64,
    pub switch_step: Option<usize>,
    pub failure: Option<SimulationFailure>,
}

impl RunRecord {
    pub fn succeeded(&self) -> bool {
        self.failure.is_none()
    }
}

pub fn simulate_run(
    env: &Environment,
    human: &SimulatedHuman,
    cfg: &CoordinationConfig,
    hooks: &mut dyn ControlHooks,
) -> RunRecord {
    let mut state = CoordinationState::new(env, cfg);
    let mut steps = Vec::new();
    let mut failure = None;
    loop {
        if state.step >= cfg.max_steps {
            failure = Some(SimulationFailure::StepLimit { steps: cfg.max_steps });
            break;
        }
        match step_simulation(&mut state, env, human, cfg, hooks) {
            Ok(Some(rec)) => steps.push(rec),
            Ok(None) => break,
            Err(f) => {
                failure = Some(f);
                break;
            }
        }
    }
    RunRecord {
        steps,
        accumulated_cost: state.accumulated_cost,
        switch_step: state.switch_step,
        failure,
    }
}

/// Longest stretch of robot-led steps whose selections repeat with some
/// period of two or more while taking at least two distinct values.
pub fn longest_selection_cycle(selections: &[Vec<OpeningId>]) -> usize {
    let n = selections.len();
    let mut best = 0;
    for p in 2..=n / 2 {
        let mut run = 0;
        for k in p..n {
            if selections[k] == selections[k - p] {
                run += 1;
                let start = k + 1 - (run + p).min(k + 1);
                let window = &selections[start..=k];
                if window.iter().any(|s| s != &window[0]) {
                    best = best.max(run + p);
                }
            } else {
                run = 0;
            }
        }
    }
    best
}
