//! The three batch studies.
//!
//! Every trial draws from its own ChaCha stream, keyed by (seed, cell,
//! trial), so results do not depend on execution order or thread count.
//! Trials run on the rayon pool and are aggregated in trial order.

use std::fs;
use std::path::{Path, PathBuf};

use cotransport::control::{LinkTable, PoseTracker, TrackerConfig, TrueCost};
use cotransport::coordination::{
    simulate_run, ControlHooks, CoordinationConfig, NoControl, RunRecord, SimulatedHuman, StepContext,
};
use cotransport::geometry::{enumerate_options, Environment, OpeningId};
use cotransport::preference::{choice_distribution, ParamBox, PreferenceParams};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::spec::{ExperimentSpec, Params, SpecError, Study};
use crate::table::ResultTable;

/// Independent stream for one trial of one cell.
pub fn trial_rng(seed: u64, cell: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((cell << 32) | trial);
    rng
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrialFailure {
    pub cell: Vec<String>,
    pub trial: usize,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StudyOutcome {
    pub study: Study,
    pub table: ResultTable,
    /// Failed trials, excluded from the table.
    pub failures: Vec<TrialFailure>,
}

#[derive(Debug, thiserror::Error)]
pub enum StudyError {
    #[error(transparent)]
    Spec(#[from] SpecError),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Where per-trial records go; `None` keeps them in memory only.
#[derive(Clone, Debug, Default)]
pub struct RecordSink {
    root: Option<PathBuf>,
}

impl RecordSink {
    pub fn none() -> Self {
        Self { root: None }
    }

    pub fn under(dir: impl Into<PathBuf>) -> Self {
        Self { root: Some(dir.into()) }
    }

    fn write(&self, parts: &[&str], file: &str, value: &impl Serialize) -> Result<(), StudyError> {
        let Some(root) = &self.root else { return Ok(()) };
        let dir = parts.iter().fold(root.clone(), |p, s| p.join(slug(s)));
        let io = |path: &Path| {
            let path = path.to_path_buf();
            move |source| StudyError::Io { path, source }
        };
        fs::create_dir_all(&dir).map_err(io(&dir))?;
        let path = dir.join(file);
        let text = serde_json::to_string_pretty(value).expect("records serialize");
        fs::write(&path, text).map_err(io(&path))
    }
}

/// File-system-safe form of a cell label.
fn slug(label: &str) -> String {
    let s: String = label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '.' || c == '-' { c } else { '_' })
        .collect();
    s.trim_matches('_').to_string()
}

fn option_label(env: &Environment, openings: &[OpeningId]) -> String {
    env.label_for(openings).map(String::from).unwrap_or_else(|| {
        let ids: Vec<&str> = openings.iter().map(OpeningId::as_str).collect();
        format!("via {}", ids.join("-"))
    })
}

pub fn run_study(spec: &ExperimentSpec, records: &RecordSink) -> Result<StudyOutcome, StudyError> {
    let params = spec.validate()?;
    let envs = spec.environments()?;
    let records = match &records.root {
        Some(r) => RecordSink::under(r.join(spec.study.name())),
        None => RecordSink::none(),
    };
    match spec.study {
        Study::Distribution => run_distribution(&envs, &params, &records),
        Study::Coordination => run_coordination(&envs, &params, spec.trials, spec.seed, &records),
        Study::Pose => run_pose(&envs, &params, spec.trials, spec.seed, &records),
    }
}

#[derive(Serialize)]
struct DistributionRecord<'a> {
    env: &'a str,
    options: Vec<OptionShare>,
}

#[derive(Serialize)]
struct OptionShare {
    label: String,
    openings: Vec<OpeningId>,
    distance: f64,
    risk: f64,
    percent: f64,
}

/// Model choice percentages per option at each environment's start.
pub fn run_distribution(envs: &[Environment], params: &Params, records: &RecordSink) -> Result<StudyOutcome, StudyError> {
    let cfg = &params.coordination;
    let mut table = ResultTable::new(&["env", "option"]);
    for env in envs {
        let options = enumerate_options(env, &env.start);
        let pairs: Vec<(f64, f64)> = options.iter().map(|o| (o.distance, o.risk)).collect();
        let dist = choice_distribution(&pairs, &cfg.param_box, cfg.risk_weight, cfg.grid_n);
        let mut shares: Vec<OptionShare> = options
            .iter()
            .zip(&dist.probs)
            .map(|(o, p)| OptionShare {
                label: option_label(env, &o.openings),
                openings: o.openings.clone(),
                distance: o.distance,
                risk: o.risk,
                percent: 100.0 * p,
            })
            .collect();
        shares.sort_by(|a, b| a.label.cmp(&b.label));
        for s in &shares {
            table.push(vec![env.name.clone(), s.label.clone()], &[s.percent]);
        }
        records.write(&[], &format!("{}.json", slug(&env.name)), &DistributionRecord { env: &env.name, options: shares })?;
    }
    Ok(StudyOutcome {
        study: Study::Distribution,
        table,
        failures: Vec::new(),
    })
}

pub fn sample_params(b: &ParamBox, rng: &mut impl Rng) -> PreferenceParams {
    PreferenceParams::new(rng.gen_range(b.alpha_lo..b.alpha_hi), rng.gen_range(b.gamma_lo..b.gamma_hi))
}

pub const WITHOUT_MODEL: &str = "without model";

pub fn eta_arm(eta: f64) -> String {
    format!("eta={eta}")
}

#[derive(Serialize)]
struct CoordinationRecord<'a> {
    env: &'a str,
    arm: &'a str,
    trial: usize,
    human: PreferenceParams,
    run: &'a RunRecord,
}

/// Accumulated objective cost per environment and arm. The sampled humans
/// are shared by all arms of an environment; the model-off baseline is run
/// once per environment.
pub fn run_coordination(
    envs: &[Environment],
    params: &Params,
    trials: usize,
    seed: u64,
    records: &RecordSink,
) -> Result<StudyOutcome, StudyError> {
    let mut arms: Vec<(String, CoordinationConfig)> = params
        .etas
        .iter()
        .map(|&eta| (eta_arm(eta), CoordinationConfig { eta, model_enabled: true, ..params.coordination.clone() }))
        .collect();
    arms.push((WITHOUT_MODEL.to_string(), CoordinationConfig { model_enabled: false, ..params.coordination.clone() }));

    let mut table = ResultTable::new(&["env", "arm"]);
    let mut failures = Vec::new();
    for (cell, env) in envs.iter().enumerate() {
        let humans: Vec<PreferenceParams> = (0..trials)
            .map(|t| sample_params(&params.coordination.param_box, &mut trial_rng(seed, cell as u64, t as u64)))
            .collect();
        for (arm, cfg) in &arms {
            let runs: Vec<RunRecord> = humans
                .par_iter()
                .map(|h| simulate_run(env, &SimulatedHuman::fixed(*h), cfg, &mut NoControl))
                .collect();
            let labels = vec![env.name.clone(), arm.clone()];
            let mut costs = Vec::with_capacity(trials);
            for (trial, (run, human)) in runs.iter().zip(&humans).enumerate() {
                let record = CoordinationRecord { env: &env.name, arm, trial, human: *human, run };
                records.write(&[&env.name, arm], &format!("trial-{trial:04}.json"), &record)?;
                match &run.failure {
                    None => costs.push(run.accumulated_cost),
                    Some(f) => failures.push(TrialFailure { cell: labels.clone(), trial, reason: f.to_string() }),
                }
            }
            table.push(labels, &costs);
        }
    }
    Ok(StudyOutcome {
        study: Study::Coordination,
        table,
        failures,
    })
}

/// Human sub-ranges of the pose study: (alpha, ±, gamma, ±).
pub const POSE_SUB_RANGES: [(f64, f64, f64, f64); 4] = [
    (0.65, 0.1, 0.6, 0.1),
    (0.75, 0.2, 0.7, 0.2),
    (0.8, 0.15, 0.85, 0.15),
    (0.85, 0.1, 0.95, 0.15),
];

pub fn sub_range_label(r: &(f64, f64, f64, f64)) -> String {
    format!("({}+-{}, {}+-{})", r.0, r.1, r.2, r.3)
}

pub const WITH_PO: &str = "with PO";
pub const WITHOUT_PO: &str = "without PO";

/// Steps the team is expected to need: choice-weighted option length over
/// the step length.
pub fn expected_steps(env: &Environment, cfg: &CoordinationConfig) -> f64 {
    let options = enumerate_options(env, &env.start);
    let pairs: Vec<(f64, f64)> = options.iter().map(|o| (o.distance, o.risk)).collect();
    let dist = choice_distribution(&pairs, &cfg.param_box, cfg.risk_weight, cfg.grid_n);
    let mean: f64 = pairs.iter().zip(&dist.probs).map(|((d, _), p)| d * p).sum();
    mean / cfg.step_length
}

/// A human from `sub_box` who redraws their parameters once or twice,
/// uniformly within the middle 80% of `duration` steps.
pub fn sample_pose_human(sub_box: &ParamBox, duration: f64, rng: &mut impl Rng) -> SimulatedHuman {
    let first = sample_params(sub_box, rng);
    let changes = rng.gen_range(1..=2);
    let lo = (0.1 * duration).ceil().max(1.0) as usize;
    let hi = ((0.9 * duration).floor() as usize).max(lo);
    let mut at: Vec<usize> = (0..changes).map(|_| rng.gen_range(lo..=hi)).collect();
    at.sort_unstable();
    at.dedup();
    let schedule = std::iter::once((0, first))
        .chain(at.into_iter().map(|k| (k, sample_params(sub_box, rng))))
        .collect();
    SimulatedHuman::with_schedule(schedule, Some(*sub_box)).expect("schedule is increasing from step 0")
}

/// Feeds one coordination run to both trackers and keeps their running
/// costs after every step.
struct Tee {
    with: PoseTracker,
    without: PoseTracker,
    trace_with: Vec<f64>,
    trace_without: Vec<f64>,
}

impl ControlHooks for Tee {
    fn after_step(&mut self, ctx: &StepContext<'_>) {
        self.with.after_step(ctx);
        self.without.after_step(ctx);
        self.trace_with.push(self.with.cost.total());
        self.trace_without.push(self.without.cost.total());
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ArmResult {
    pub cost: TrueCost,
    pub total: f64,
    /// Running true cost after each coordination step.
    pub trace: Vec<f64>,
    pub pose_changes: usize,
    pub failure: Option<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct PoseTrial {
    pub trial: usize,
    pub human: SimulatedHuman,
    pub tracker_seed: u64,
    pub run: RunRecord,
    pub with_po: ArmResult,
    pub without_po: ArmResult,
}

impl PoseTrial {
    pub fn failure(&self) -> Option<String> {
        self.run
            .failure
            .as_ref()
            .map(|f| f.to_string())
            .or_else(|| self.with_po.failure.clone().map(|e| format!("with PO: {e}")))
            .or_else(|| self.without_po.failure.clone().map(|e| format!("without PO: {e}")))
    }
}

fn arm(tracker: PoseTracker, trace: Vec<f64>) -> ArmResult {
    ArmResult {
        total: tracker.cost.total(),
        cost: tracker.cost,
        trace,
        pose_changes: tracker.pose_changes,
        failure: tracker.failure.map(|e| e.to_string()),
    }
}

/// One human-leading run tracked with and without pose optimization.
pub fn pose_trial(env: &Environment, params: &Params, sub_box: &ParamBox, duration: f64, trial: usize, rng: &mut ChaCha8Rng) -> PoseTrial {
    let human = sample_pose_human(sub_box, duration, rng);
    let tracker_seed = rng.next_u64();
    let cfg = CoordinationConfig { model_enabled: false, ..params.coordination.clone() };
    let tracker = |pose_optimization| {
        let config = TrackerConfig { pose_optimization, ..params.tracker.clone() };
        PoseTracker::new(LinkTable::default(), config, cfg.step_length, tracker_seed).expect("validated tracker settings")
    };
    let mut tee = Tee {
        with: tracker(true),
        without: tracker(false),
        trace_with: Vec::new(),
        trace_without: Vec::new(),
    };
    let run = simulate_run(env, &human, &cfg, &mut tee);
    PoseTrial {
        trial,
        human,
        tracker_seed,
        run,
        with_po: arm(tee.with, tee.trace_with),
        without_po: arm(tee.without, tee.trace_without),
    }
}

/// True control cost per (environment, human sub-range) with and without
/// pose optimization, both arms sharing each trial's human trajectory.
pub fn run_pose(envs: &[Environment], params: &Params, trials: usize, seed: u64, records: &RecordSink) -> Result<StudyOutcome, StudyError> {
    let mut table = ResultTable::new(&["env", "humans", "arm"]);
    let mut failures = Vec::new();
    for (e, env) in envs.iter().enumerate() {
        let duration = expected_steps(env, &params.coordination);
        for (r, range) in POSE_SUB_RANGES.iter().enumerate() {
            let sub_box = ParamBox::around(range.0, range.1, range.2, range.3).expect("sub-ranges are non-empty");
            let cell = (e * POSE_SUB_RANGES.len() + r) as u64;
            let results: Vec<PoseTrial> = (0..trials)
                .into_par_iter()
                .map(|t| pose_trial(env, params, &sub_box, duration, t, &mut trial_rng(seed, cell, t as u64)))
                .collect();
            let humans = sub_range_label(range);
            let (mut with, mut without) = (Vec::new(), Vec::new());
            for t in &results {
                records.write(&[&env.name, &humans], &format!("trial-{:04}.json", t.trial), t)?;
                match t.failure() {
                    None => {
                        with.push(t.with_po.total);
                        without.push(t.without_po.total);
                    }
                    Some(reason) => failures.push(TrialFailure {
                        cell: vec![env.name.clone(), humans.clone()],
                        trial: t.trial,
                        reason,
                    }),
                }
            }
            table.push(vec![env.name.clone(), humans.clone(), WITH_PO.into()], &with);
            table.push(vec![env.name.clone(), humans, WITHOUT_PO.into()], &without);
        }
    }
    Ok(StudyOutcome {
        study: Study::Pose,
        table,
        failures,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trial_streams_are_independent_of_order() {
        let a: Vec<u64> = (0..5).map(|t| trial_rng(7, 2, t).next_u64()).collect();
        let b: Vec<u64> = (0..5).rev().map(|t| trial_rng(7, 2, t).next_u64()).collect();
        assert_eq!(a, b.into_iter().rev().collect::<Vec<_>>());
        assert_ne!(trial_rng(7, 2, 0).next_u64(), trial_rng(7, 3, 0).next_u64());
        assert_ne!(trial_rng(7, 2, 0).next_u64(), trial_rng(8, 2, 0).next_u64());
    }

    #[test]
    fn pose_humans_change_in_the_middle_of_the_task() {
        let b = ParamBox::around(0.75, 0.2, 0.7, 0.2).unwrap();
        for t in 0..200 {
            let h = sample_pose_human(&b, 100.0, &mut trial_rng(1, 0, t));
            assert!((2..=3).contains(&h.schedule.len()));
            for (k, p) in &h.schedule[1..] {
                assert!((10..=90).contains(k));
                assert!(p.alpha >= b.alpha_lo && p.alpha < b.alpha_hi && p.gamma >= b.gamma_lo && p.gamma < b.gamma_hi);
            }
        }
    }

    #[test]
    fn slugs_are_path_safe() {
        assert_eq!(slug("(0.65+-0.1, 0.6+-0.1)"), "0.65_-0.1__0.6_-0.1");
        assert_eq!(slug("eta=10.5"), "eta_10.5");
    }
}
