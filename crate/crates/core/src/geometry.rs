//! Transport environments, path options through openings, and objective costs.
//!
//! An environment is a set of convex obstacles with named openings between
//! them. A path option is a loop-free sequence of openings that the team
//! traverses on straight segments (opening center to opening center) before
//! heading to the target.

use std::collections::BTreeSet;
use std::fmt;

use nalgebra::{Point2, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::GeometryError;

pub type Point = Point2<f64>;

/// Openings wider than this multiple of the robot width carry no risk.
pub const RISK_FREE_WIDTH_FACTOR: f64 = 5.0;
/// Polyline sampling interval for traversability checks, in meters.
pub const TRAVERSABILITY_SAMPLE: f64 = 0.05;
/// Calibrated risk weight of the objective cost.
pub const DEFAULT_RISK_WEIGHT: f64 = 10.0;

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct OpeningId(pub String);

impl OpeningId {
    pub fn new(id: impl Into<String>) -> Self {
        Self(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for OpeningId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Convex polygon, vertices in either winding order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Polygon {
    pub vertices: Vec<Point>,
}

impl Polygon {
    pub fn new(vertices: Vec<Point>) -> Result<Self, GeometryError> {
        if vertices.len() < 3 {
            return Err(GeometryError::InvalidEnvironment(format!(
                "polygon needs at least 3 vertices, got {}",
                vertices.len()
            )));
        }
        let poly = Self { vertices };
        if !poly.is_convex() {
            return Err(GeometryError::InvalidEnvironment(
                "obstacle polygon is not convex".into(),
            ));
        }
        Ok(poly)
    }

    /// Axis-aligned rectangle from two opposite corners.
    pub fn rectangle(min: Point, max: Point) -> Self {
        Self {
            vertices: vec![
                min,
                Point::new(max.x, min.y),
                max,
                Point::new(min.x, max.y),
            ],
        }
    }

    fn edges(&self) -> impl Iterator<Item = (Point, Point)> + '_ {
        let n = self.vertices.len();
        (0..n).map(move |i| (self.vertices[i], self.vertices[(i + 1) % n]))
    }

    fn is_convex(&self) -> bool {
        let mut sign = 0.0_f64;
        let n = self.vertices.len();
        for i in 0..n {
            let a = self.vertices[i];
            let b = self.vertices[(i + 1) % n];
            let c = self.vertices[(i + 2) % n];
            let cross = (b - a).perp(&(c - b));
            if cross.abs() < 1e-12 {
                continue;
            }
            if sign == 0.0 {
                sign = cross.signum();
            } else if cross.signum() != sign {
                return false;
            }
        }
        sign != 0.0
    }

    /// Strict interior test.
    pub fn contains(&self, p: &Point) -> bool {
        let mut sign = 0.0_f64;
        for (a, b) in self.edges() {
            let cross = (b - a).perp(&(p - a));
            if cross.abs() < 1e-12 {
                return false;
            }
            if sign == 0.0 {
                sign = cross.signum();
            } else if cross.signum() != sign {
                return false;
            }
        }
        true
    }

    pub fn boundary_distance(&self, p: &Point) -> f64 {
        self.edges()
            .map(|(a, b)| point_segment_distance(p, &a, &b))
            .fold(f64::INFINITY, f64::min)
    }
}

fn point_segment_distance(p: &Point, a: &Point, b: &Point) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_squared();
    if len2 == 0.0 {
        return (p - a).norm();
    }
    let t = ((p - a).dot(&ab) / len2).clamp(0.0, 1.0);
    (p - (a + ab * t)).norm()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Opening {
    pub id: OpeningId,
    pub center: Point,
    pub width: f64,
    /// Unit passage direction; the opening line is perpendicular to it.
    pub axis: Vector2<f64>,
}

impl Opening {
    /// Signed offset of `p` from the opening line, along the axis.
    pub fn axial_offset(&self, p: &Point) -> f64 {
        (p - self.center).dot(&self.axis)
    }

    pub fn lateral_offset(&self, p: &Point) -> f64 {
        (p - self.center).perp(&self.axis).abs()
    }

    /// True while `p` sits in the passage itself: within `depth` of the
    /// opening line and between its jambs.
    /// Whether the open segment `a`-`b` passes through the opening's span,
    /// the cross-segment of length `width` through the center.
    pub fn span_crossed_by(&self, a: &Point, b: &Point) -> bool {
        let half = Vector2::new(-self.axis.y, self.axis.x) * (self.width / 2.0);
        let (p, q) = (self.center - half, self.center + half);
        let cross = |o: &Point, u: &Point, v: &Point| (u - o).perp(&(v - o));
        let d1 = cross(a, b, &p);
        let d2 = cross(a, b, &q);
        let d3 = cross(&p, &q, a);
        let d4 = cross(&p, &q, b);
        d1 * d2 < 0.0 && d3 * d4 < 0.0
    }

    pub fn contains_in_band(&self, p: &Point, depth: f64) -> bool {
        self.axial_offset(p).abs() <= depth && self.lateral_offset(p) <= self.width / 2.0
    }
}

/// Display name attached to an opening sequence taken from the start.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptionLabel {
    pub name: String,
    pub openings: Vec<OpeningId>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    pub name: String,
    pub obstacles: Vec<Polygon>,
    pub openings: Vec<Opening>,
    pub start: Point,
    pub target: Point,
    pub robot_width: f64,
    #[serde(default)]
    pub labels: Vec<OptionLabel>,
    /// Openings dropped at load time because they are not wider than the robot.
    #[serde(default)]
    pub excluded_openings: Vec<OpeningId>,
}

impl Environment {
    /// Checks the invariants every environment must satisfy.
    pub fn validate(&self) -> Result<(), GeometryError> {
        let invalid = |m: String| Err(GeometryError::InvalidEnvironment(m));
        if !(self.robot_width > 0.0) {
            return invalid(format!("robot width must be positive, got {}", self.robot_width));
        }
        let mut ids = BTreeSet::new();
        for o in &self.openings {
            if !ids.insert(&o.id) {
                return invalid(format!("duplicate opening id {}", o.id));
            }
            if o.width <= self.robot_width {
                return Err(GeometryError::ImpassableOpening {
                    robot_width: self.robot_width,
                    width: o.width,
                });
            }
            if (o.axis.norm() - 1.0).abs() > 1e-9 {
                return invalid(format!("axis of opening {} is not a unit vector", o.id));
            }
        }
        for (name, p) in [("start", &self.start), ("target", &self.target)] {
            if self.obstacles.iter().any(|poly| poly.contains(p)) {
                return invalid(format!("{name} lies inside an obstacle"));
            }
        }
        Ok(())
    }

    pub fn opening(&self, id: &OpeningId) -> Option<&Opening> {
        self.openings.iter().find(|o| &o.id == id)
    }

    fn opening_index(&self, id: &OpeningId) -> Option<usize> {
        self.openings.iter().position(|o| &o.id == id)
    }

    /// Label of the option that takes `openings` from the start, if curated.
    pub fn label_for(&self, openings: &[OpeningId]) -> Option<&str> {
        self.labels
            .iter()
            .find(|l| l.openings == openings)
            .map(|l| l.name.as_str())
    }

    pub fn is_free(&self, p: &Point) -> bool {
        !self.obstacles.iter().any(|poly| poly.contains(p))
    }

    fn clearance(&self, p: &Point) -> f64 {
        if !self.is_free(p) {
            return 0.0;
        }
        self.obstacles
            .iter()
            .map(|poly| poly.boundary_distance(p))
            .fold(f64::INFINITY, f64::min)
    }

    /// Samples the segment every [`TRAVERSABILITY_SAMPLE`] meters and requires
    /// half a robot width of clearance from every obstacle at each sample.
    pub fn segment_traversable(&self, a: &Point, b: &Point) -> bool {
        let len = (b - a).norm();
        let n = (len / TRAVERSABILITY_SAMPLE).ceil().max(1.0) as usize;
        let need = self.robot_width / 2.0;
        (0..=n).all(|i| {
            let p = a + (b - a) * (i as f64 / n as f64);
            self.clearance(&p) >= need
        })
    }

    pub fn opening_risk(&self, opening: &Opening) -> f64 {
        opening_risk(self.robot_width, opening.width).unwrap_or(1.0)
    }
}

/// Collision risk of passing an opening of width `width` with a robot of
/// width `robot_width`.
pub fn opening_risk(robot_width: f64, width: f64) -> Result<f64, GeometryError> {
    if !(width > robot_width) || !(robot_width > 0.0) {
        return Err(GeometryError::ImpassableOpening { robot_width, width });
    }
    if width > RISK_FREE_WIDTH_FACTOR * robot_width {
        Ok(0.0)
    } else {
        Ok(robot_width / width)
    }
}

/// Stacked risk of passing several openings in sequence.
pub fn option_risk(opening_risks: &[f64]) -> f64 {
    1.0 - opening_risks.iter().map(|s| 1.0 - s).product::<f64>()
}

pub fn objective_cost(distance: f64, risk: f64, risk_weight: f64) -> f64 {
    distance + risk_weight * risk
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathOption {
    /// Index in the lexicographic enumeration from the current position.
    pub id: usize,
    pub openings: Vec<OpeningId>,
    /// Opening centers in order, then the target.
    pub waypoints: Vec<Point>,
    pub distance: f64,
    pub risk: f64,
    /// The team already crossed the center of the first opening, so the
    /// waypoints start after it. Its risk still counts until it is passed.
    #[serde(default)]
    pub first_crossed: bool,
}

impl PathOption {
    /// The next opening, or `None` when only the target remains.
    pub fn next_opening(&self) -> Option<&OpeningId> {
        self.openings.first()
    }

    pub fn objective_cost(&self, risk_weight: f64) -> f64 {
        objective_cost(self.distance, self.risk, risk_weight)
    }
}

fn polyline_length(points: &[Point]) -> f64 {
    points.windows(2).map(|w| (w[1] - w[0]).norm()).sum()
}

/// Length of the polyline from `position` through the option's waypoints.
pub fn option_distance(position: &Point, option: &PathOption) -> f64 {
    let mut pts = Vec::with_capacity(option.waypoints.len() + 1);
    pts.push(*position);
    pts.extend_from_slice(&option.waypoints);
    polyline_length(&pts)
}

/// Equally spaced samples along the option polyline, starting at `position`
/// and ending exactly at the target. The final gap may be shorter.
pub fn nominal_trajectory(position: &Point, option: &PathOption, step_length: f64) -> Vec<Point> {
    assert!(step_length > 0.0, "step length must be positive");
    let mut pts = Vec::with_capacity(option.waypoints.len() + 1);
    pts.push(*position);
    pts.extend_from_slice(&option.waypoints);
    let total = polyline_length(&pts);
    let mut out = vec![*position];
    let n = (total / step_length).floor() as usize;
    for i in 1..=n {
        let s = i as f64 * step_length;
        if total - s > 1e-9 {
            out.push(point_at_arc_length(&pts, s));
        }
    }
    let last = *pts.last().expect("polyline has at least one point");
    if (out.last().expect("non-empty") - last).norm() > 0.0 {
        out.push(last);
    }
    out
}

/// Point at arc length `s` along a polyline, clamped to its end.
pub fn point_at_arc_length(points: &[Point], s: f64) -> Point {
    let mut remaining = s.max(0.0);
    for w in points.windows(2) {
        let seg = (w[1] - w[0]).norm();
        if remaining <= seg {
            if seg == 0.0 {
                return w[1];
            }
            return w[0] + (w[1] - w[0]) * (remaining / seg);
        }
        remaining -= seg;
    }
    *points.last().expect("non-empty polyline")
}

/// Openings the team is done with, and the one it is currently inside.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Progress {
    /// Passed openings: crossed and left behind by more than a robot width.
    pub passed: Vec<OpeningId>,
    /// Opening whose center was crossed, with the sign of the exit side
    /// along its axis.
    pub crossing: Option<(OpeningId, f64)>,
}

/// Every loop-free opening sequence from `position` to the target.
pub fn enumerate_options(env: &Environment, position: &Point) -> Vec<PathOption> {
    enumerate_options_from(env, position, &Progress::default())
}

/// As [`enumerate_options`], skipping openings the team has already passed.
pub fn enumerate_options_excluding(
    env: &Environment,
    position: &Point,
    passed: &[OpeningId],
) -> Vec<PathOption> {
    let progress = Progress {
        passed: passed.to_vec(),
        crossing: None,
    };
    enumerate_options_from(env, position, &progress)
}

/// Enumerates options given the team's progress.
///
/// Each traversed opening must separate the point before it from the point
/// after it. An opening the team stands in must come first: if its center was
/// already crossed the option continues on the exit side, otherwise it may be
/// left to either side.
pub fn enumerate_options_from(env: &Environment, position: &Point, progress: &Progress) -> Vec<PathOption> {
    let usable: Vec<bool> = env
        .openings
        .iter()
        .map(|o| !progress.passed.contains(&o.id))
        .collect();
    let crossing = progress
        .crossing
        .as_ref()
        .and_then(|(id, exit)| env.opening_index(id).map(|i| (i, *exit)));
    let in_band = env
        .openings
        .iter()
        .enumerate()
        .find(|(i, o)| usable[*i] && o.contains_in_band(position, env.robot_width))
        .map(|(i, _)| i);

    let mut search = Search {
        env,
        position: *position,
        usable,
        found: Vec::new(),
        path: Vec::new(),
    };
    match (crossing, in_band) {
        (Some((first, exit)), _) => search.visit(first, Entry::Crossed(exit)),
        (None, Some(first)) => {
            if search.leg_clear(position, &env.openings[first].center, &[first]) {
                search.visit(first, Entry::InBand);
            }
        }
        (None, None) => {
            if search.leg_clear(position, &env.target, &[]) {
                search.found.push(Vec::new());
            }
            for j in 0..env.openings.len() {
                if search.usable[j] && search.leg_clear(position, &env.openings[j].center, &[j]) {
                    search.visit(j, Entry::Approach);
                }
            }
        }
    }

    let mut sequences: Vec<Vec<OpeningId>> = search
        .found
        .into_iter()
        .map(|seq| seq.into_iter().map(|i| env.openings[i].id.clone()).collect())
        .collect();
    sequences.sort();
    sequences.dedup();

    let first_crossed = crossing.is_some();
    sequences
        .into_iter()
        .enumerate()
        .map(|(id, openings)| build_option(env, position, id, openings, first_crossed))
        .collect()
}

fn build_option(
    env: &Environment,
    position: &Point,
    id: usize,
    openings: Vec<OpeningId>,
    first_crossed: bool,
) -> PathOption {
    let mut waypoints = Vec::with_capacity(openings.len() + 1);
    let mut risks = Vec::with_capacity(openings.len());
    for (i, oid) in openings.iter().enumerate() {
        let o = env.opening(oid).expect("enumerated opening exists");
        if !(first_crossed && i == 0) {
            waypoints.push(o.center);
        }
        risks.push(env.opening_risk(o));
    }
    waypoints.push(env.target);
    let mut option = PathOption {
        id,
        openings,
        waypoints,
        distance: 0.0,
        risk: option_risk(&risks),
        first_crossed,
    };
    option.distance = option_distance(position, &option);
    option
}

#[derive(Clone, Copy)]
enum Entry {
    /// Reached from a point on one side of the opening.
    Approach,
    /// The team stands in the opening without having crossed its center.
    InBand,
    /// The team crossed the center; the sign gives the exit side.
    Crossed(f64),
}

struct Search<'a> {
    env: &'a Environment,
    position: Point,
    usable: Vec<bool>,
    found: Vec<Vec<usize>>,
    path: Vec<usize>,
}

impl Search<'_> {
    /// Traversable, and through no opening other than `ends`.
    fn leg_clear(&self, a: &Point, b: &Point, ends: &[usize]) -> bool {
        self.env.segment_traversable(a, b)
            && self
                .env
                .openings
                .iter()
                .enumerate()
                .all(|(k, o)| ends.contains(&k) || !o.span_crossed_by(a, b))
    }

    fn visit(&mut self, idx: usize, entry: Entry) {
        let env = self.env;
        let opening = &env.openings[idx];
        let before = match self.path.last() {
            Some(&prev) => env.openings[prev].center,
            None => self.position,
        };
        // Leaving a crossed opening starts from the team's position.
        let from = match entry {
            Entry::Crossed(_) => self.position,
            _ => opening.center,
        };
        let side_before = opening.axial_offset(&before);
        let crosses = |after: &Point| {
            let side_after = opening.axial_offset(after);
            match entry {
                Entry::Approach => side_before * side_after < 0.0,
                Entry::InBand => side_after != 0.0,
                Entry::Crossed(exit) => side_after * exit > 0.0,
            }
        };

        self.path.push(idx);
        self.usable[idx] = false;

        if crosses(&env.target) && self.leg_clear(&from, &env.target, &[idx]) {
            self.found.push(self.path.clone());
        }
        for j in 0..env.openings.len() {
            if self.usable[j]
                && crosses(&env.openings[j].center)
                && self.leg_clear(&from, &env.openings[j].center, &[idx, j])
            {
                self.visit(j, Entry::Approach);
            }
        }

        self.usable[idx] = true;
        self.path.pop();
    }
}

impl Environment {
    /// Opening ids in declaration order.
    pub fn opening_ids(&self) -> Vec<OpeningId> {
        self.openings.iter().map(|o| o.id.clone()).collect()
    }

    /// Index lookup that also accepts excluded ids.
    pub fn knows_opening(&self, id: &OpeningId) -> bool {
        self.opening_index(id).is_some() || self.excluded_openings.contains(id)
    }
}
