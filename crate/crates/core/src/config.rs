//! TOML loaders for environments and the robot link table.
//!
//! Environment files look like:
//!
//! ```toml
//! name = "env4"
//! robot_width = 0.5
//! start = [0.0, 0.0]
//! target = [0.0, 16.0]
//!
//! [[obstacles]]
//! vertices = [[-10.0, 7.9], [-6.6, 7.9], [-6.6, 8.1], [-10.0, 8.1]]
//!
//! [[openings]]
//! id = "xi1"
//! center = [-6.0, 8.0]
//! width = 1.2
//! axis = [0.0, 1.0]
//!
//! [[labels]]
//! name = "option 4"
//! openings = ["xi1"]
//! ```

use std::path::Path;

use nalgebra::Vector2;
use serde::Deserialize;
use toml::Spanned;

use crate::error::{ConfigError, GeometryError};
use crate::geometry::{Environment, Opening, OpeningId, OptionLabel, Point, Polygon};

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEnvironment {
    name: String,
    robot_width: Spanned<f64>,
    start: Spanned<[f64; 2]>,
    target: Spanned<[f64; 2]>,
    #[serde(default)]
    obstacles: Vec<Spanned<RawObstacle>>,
    #[serde(default)]
    openings: Vec<Spanned<RawOpening>>,
    #[serde(default)]
    labels: Vec<Spanned<RawLabel>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawObstacle {
    vertices: Vec<[f64; 2]>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOpening {
    id: String,
    center: [f64; 2],
    width: f64,
    axis: [f64; 2],
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLabel {
    name: String,
    openings: Vec<String>,
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].bytes().filter(|&b| b == b'\n').count() + 1
}

fn pt(v: [f64; 2]) -> Point {
    Point::new(v[0], v[1])
}

pub fn load_environment(path: impl AsRef<Path>) -> Result<Environment, ConfigError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError::new(path, None, format!("cannot read: {e}")))?;
    parse_environment(&text, path)
}

/// Parses and validates an environment. Openings not wider than the robot
/// are dropped and listed in `excluded_openings`.
pub fn parse_environment(text: &str, path: impl AsRef<Path>) -> Result<Environment, ConfigError> {
    let path = path.as_ref();
    let err = |span: std::ops::Range<usize>, msg: String| {
        ConfigError::new(path, Some(line_of(text, span.start)), msg)
    };
    let raw: RawEnvironment = toml::from_str(text).map_err(|e| {
        let line = e.span().map(|s| line_of(text, s.start));
        ConfigError::new(path, line, e.message().to_string())
    })?;

    let robot_width = *raw.robot_width.get_ref();
    if !(robot_width > 0.0) {
        return Err(err(raw.robot_width.span(), "robot_width must be positive".into()));
    }

    let mut obstacles = Vec::with_capacity(raw.obstacles.len());
    for o in &raw.obstacles {
        let poly = Polygon::new(o.get_ref().vertices.iter().copied().map(pt).collect())
            .map_err(|e| err(o.span(), e.to_string()))?;
        obstacles.push(poly);
    }

    let mut openings: Vec<Opening> = Vec::new();
    let mut excluded = Vec::new();
    for o in &raw.openings {
        let r = o.get_ref();
        let id = OpeningId::new(r.id.clone());
        if openings.iter().any(|x| x.id == id) || excluded.contains(&id) {
            return Err(err(o.span(), format!("duplicate opening id {id}")));
        }
        if !(r.width > 0.0) {
            return Err(err(o.span(), format!("opening {id}: width must be positive")));
        }
        let axis = Vector2::new(r.axis[0], r.axis[1]);
        if (axis.norm() - 1.0).abs() > 1e-9 {
            return Err(err(o.span(), format!("opening {id}: axis must have unit norm")));
        }
        if r.width <= robot_width {
            excluded.push(id);
            continue;
        }
        openings.push(Opening {
            id,
            center: pt(r.center),
            width: r.width,
            axis,
        });
    }

    let mut labels = Vec::with_capacity(raw.labels.len());
    for l in &raw.labels {
        let r = l.get_ref();
        let seq: Vec<OpeningId> = r.openings.iter().map(|s| OpeningId::new(s.clone())).collect();
        if let Some(unknown) = seq.iter().find(|id| !openings.iter().any(|o| &o.id == *id)) {
            return Err(err(l.span(), format!("label {}: unknown opening {unknown}", r.name)));
        }
        labels.push(OptionLabel {
            name: r.name.clone(),
            openings: seq,
        });
    }

    let env = Environment {
        name: raw.name,
        obstacles,
        openings,
        start: pt(*raw.start.get_ref()),
        target: pt(*raw.target.get_ref()),
        robot_width,
        labels,
        excluded_openings: excluded,
    };
    env.validate().map_err(|e| {
        let span = match &e {
            GeometryError::InvalidEnvironment(m) if m.starts_with("start") => raw.start.span(),
            GeometryError::InvalidEnvironment(m) if m.starts_with("target") => raw.target.span(),
            _ => 0..0,
        };
        err(span, e.to_string())
    })?;
    Ok(env)
}
