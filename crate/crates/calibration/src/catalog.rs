//! Environments as the service presents them: options in label order and
//! per-option playback frames, computed once and cached.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use cotransport::coordination::{replay_route, CoordinationConfig, ReplayFrame};
use cotransport::geometry::{enumerate_options, Environment, OpeningId, PathOption};
use cotransport::preference::{choice_distribution, ChoiceDistribution};
use serde::Serialize;

pub struct CatalogEntry {
    pub id: String,
    pub env: Environment,
    /// Options from the start, sorted by label number.
    pub options: Vec<PathOption>,
    /// Label number of each entry in `options`.
    pub numbers: Vec<u32>,
    model: OnceLock<ChoiceDistribution>,
    replays: Mutex<HashMap<u32, Arc<Vec<ReplayFrame>>>>,
}

/// "option 3" -> 3.
fn label_number(label: &str) -> Option<u32> {
    label.rsplit(' ').next()?.parse().ok()
}

impl CatalogEntry {
    pub fn new(env: Environment) -> Self {
        let options = enumerate_options(&env, &env.start);
        let mut numbered: Vec<(u32, PathOption)> = options
            .into_iter()
            .enumerate()
            .map(|(i, o)| {
                let n = env.label_for(&o.openings).and_then(label_number).unwrap_or(i as u32 + 1);
                (n, o)
            })
            .collect();
        numbered.sort_by_key(|(n, _)| *n);
        let (numbers, options) = numbered.into_iter().unzip();
        Self {
            id: env.name.clone(),
            env,
            options,
            numbers,
            model: OnceLock::new(),
            replays: Mutex::new(HashMap::new()),
        }
    }

    pub fn option_index(&self, number: u32) -> Option<usize> {
        self.numbers.iter().position(|&n| n == number)
    }

    pub fn pairs(&self) -> Vec<(f64, f64)> {
        self.options.iter().map(|o| (o.distance, o.risk)).collect()
    }

    /// Model shares at the start, in label order.
    pub fn model(&self, cfg: &CoordinationConfig) -> &ChoiceDistribution {
        self.model
            .get_or_init(|| choice_distribution(&self.pairs(), &cfg.param_box, cfg.risk_weight, cfg.grid_n))
    }

    /// Frames of a robot-led run along option `number`; `None` if unknown
    /// or the route cannot be followed.
    pub fn replay(&self, number: u32, cfg: &CoordinationConfig) -> Option<Arc<Vec<ReplayFrame>>> {
        if let Some(r) = self.replays.lock().expect("replay cache").get(&number) {
            return Some(r.clone());
        }
        let option = &self.options[self.option_index(number)?];
        let frames = Arc::new(replay_route(&self.env, &option.openings, cfg).ok()?);
        self.replays.lock().expect("replay cache").insert(number, frames.clone());
        Some(frames)
    }

    pub fn summary(&self) -> EnvironmentSummary {
        let xy = |p: &cotransport::geometry::Point| [p.x, p.y];
        EnvironmentSummary {
            id: self.id.clone(),
            robot_width: self.env.robot_width,
            obstacles: self
                .env
                .obstacles
                .iter()
                .map(|p| p.vertices.iter().map(xy).collect())
                .collect(),
            openings: self
                .env
                .openings
                .iter()
                .map(|o| OpeningSummary {
                    id: o.id.clone(),
                    center: xy(&o.center),
                    width: o.width,
                    axis: [o.axis.x, o.axis.y],
                })
                .collect(),
            start: xy(&self.env.start),
            target: xy(&self.env.target),
            options: self
                .options
                .iter()
                .zip(&self.numbers)
                .map(|(o, &n)| OptionSummary {
                    id: n,
                    label: format!("option {n}"),
                    openings: o.openings.clone(),
                })
                .collect(),
        }
    }
}

/// Scene geometry without option trajectories.
#[derive(Clone, Debug, Serialize)]
pub struct EnvironmentSummary {
    pub id: String,
    pub robot_width: f64,
    pub obstacles: Vec<Vec<[f64; 2]>>,
    pub openings: Vec<OpeningSummary>,
    pub start: [f64; 2],
    pub target: [f64; 2],
    pub options: Vec<OptionSummary>,
}

#[derive(Clone, Debug, Serialize)]
pub struct OpeningSummary {
    pub id: OpeningId,
    pub center: [f64; 2],
    pub width: f64,
    pub axis: [f64; 2],
}

#[derive(Clone, Debug, Serialize)]
pub struct OptionSummary {
    pub id: u32,
    pub label: String,
    pub openings: Vec<OpeningId>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn label_numbers() {
        assert_eq!(label_number("option 3"), Some(3));
        assert_eq!(label_number("left"), None);
    }

    #[test]
    fn options_follow_label_order() {
        let entry = CatalogEntry::new(cotransport::builtin::environment("env4").unwrap());
        assert_eq!(entry.numbers, [1, 2, 3, 4]);
        assert_eq!(entry.options[2].openings, [OpeningId::new("xi2")]);
    }
}
