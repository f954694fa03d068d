//! Reference mobile-manipulator kinematics: a differential-drive base
//! carrying a 7-joint serial arm.
//!
//! `q = [x, y, heading, θ1..θ7]`. Inputs are `u = [v_left, v_right, θ̇1..θ̇7]`
//! with wheel rim speeds in m/s and joint rates in rad/s. The end-effector
//! state is `[x, y, z, roll, pitch, yaw]` with `R = Rz(yaw)·Ry(pitch)·Rx(roll)`.

use std::f64::consts::PI;
use std::path::Path;

use nalgebra::{Matrix3, Rotation3, SMatrix, SVector, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::ConfigError;

pub const ARM_JOINTS: usize = 7;
pub const CONFIG_DIM: usize = 10;
pub const INPUT_DIM: usize = 9;
pub const STATE_DIM: usize = 6;

pub type InputMatrix = SMatrix<f64, STATE_DIM, INPUT_DIM>;

/// Wraps an angle into (-π, π].
pub fn wrap_angle(a: f64) -> f64 {
    let mut w = a.rem_euclid(2.0 * PI);
    if w > PI {
        w -= 2.0 * PI;
    }
    w
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JointAxis {
    X,
    Y,
    Z,
}

impl JointAxis {
    fn unit(self) -> Vector3<f64> {
        match self {
            JointAxis::X => Vector3::x(),
            JointAxis::Y => Vector3::y(),
            JointAxis::Z => Vector3::z(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JointSpec {
    pub name: String,
    /// Translation from the previous frame to this joint, in that frame.
    pub origin: [f64; 3],
    pub axis: JointAxis,
    pub lower: f64,
    pub upper: f64,
}

/// Link table of the reference chain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinkTable {
    /// Arm mount in the base frame.
    pub mount: [f64; 3],
    pub joints: Vec<JointSpec>,
    /// Tool point in the last joint frame.
    pub tool: [f64; 3],
    /// Half the distance between the wheels.
    pub half_track: f64,
}

impl Default for LinkTable {
    fn default() -> Self {
        toml::from_str(crate::builtin::ROBOT_TOML).expect("built-in link table parses")
    }
}

impl LinkTable {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::new(path, None, format!("cannot read: {e}")))?;
        Self::parse(&text, path)
    }

    pub fn parse(text: &str, path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let table: LinkTable = toml::from_str(text).map_err(|e| {
            let line = e
                .span()
                .map(|s| text[..s.start].bytes().filter(|&b| b == b'\n').count() + 1);
            ConfigError::new(path, line, e.message().to_string())
        })?;
        if table.joints.len() != ARM_JOINTS {
            return Err(ConfigError::new(
                path,
                None,
                format!("expected {ARM_JOINTS} arm joints, found {}", table.joints.len()),
            ));
        }
        if let Some(j) = table.joints.iter().find(|j| !(j.lower < j.upper)) {
            return Err(ConfigError::new(path, None, format!("joint {}: empty limit range", j.name)));
        }
        if !(table.half_track > 0.0) {
            return Err(ConfigError::new(path, None, "half_track must be positive"));
        }
        Ok(table)
    }

    pub fn clamp_arm(&self, q: &mut JointConfig) {
        for (i, j) in self.joints.iter().enumerate() {
            q.0[3 + i] = q.0[3 + i].clamp(j.lower, j.upper);
        }
    }

    pub fn within_limits(&self, q: &JointConfig) -> bool {
        self.joints
            .iter()
            .enumerate()
            .all(|(i, j)| (j.lower..=j.upper).contains(&q.0[3 + i]))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct JointConfig(pub SVector<f64, CONFIG_DIM>);

impl JointConfig {
    pub fn new(base: [f64; 3], arm: [f64; ARM_JOINTS]) -> Self {
        let mut q = SVector::<f64, CONFIG_DIM>::zeros();
        q[0] = base[0];
        q[1] = base[1];
        q[2] = wrap_angle(base[2]);
        for (i, a) in arm.iter().enumerate() {
            q[3 + i] = *a;
        }
        Self(q)
    }

    pub fn zeros() -> Self {
        Self(SVector::zeros())
    }

    pub fn heading(&self) -> f64 {
        self.0[2]
    }

    /// Integrates one sampling period of `u` with the unicycle base model.
    pub fn integrate(&self, link: &LinkTable, u: &SVector<f64, INPUT_DIM>, dt: f64) -> Self {
        let qdot = configuration_rates(link, self, u);
        let mut next = self.0 + qdot * dt;
        next[2] = wrap_angle(next[2]);
        Self(next)
    }

    pub fn distance_squared(&self, other: &JointConfig) -> f64 {
        let mut d = self.0 - other.0;
        d[2] = wrap_angle(d[2]);
        d.norm_squared()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EndEffectorState(pub SVector<f64, STATE_DIM>);

impl EndEffectorState {
    pub fn new(position: [f64; 3], rpy: [f64; 3]) -> Self {
        Self(SVector::from([
            position[0],
            position[1],
            position[2],
            wrap_angle(rpy[0]),
            wrap_angle(rpy[1]),
            wrap_angle(rpy[2]),
        ]))
    }

    pub fn position(&self) -> Vector3<f64> {
        Vector3::new(self.0[0], self.0[1], self.0[2])
    }

    /// `self - other` with orientation differences wrapped.
    pub fn error_from(&self, other: &EndEffectorState) -> SVector<f64, STATE_DIM> {
        let mut e = self.0 - other.0;
        for i in 3..6 {
            e[i] = wrap_angle(e[i]);
        }
        e
    }
}

/// `q̇ = S(q)·u`: unicycle base plus direct joint rates.
pub fn input_selection(link: &LinkTable, q: &JointConfig) -> SMatrix<f64, CONFIG_DIM, INPUT_DIM> {
    let (s, c) = q.heading().sin_cos();
    let mut sel = SMatrix::<f64, CONFIG_DIM, INPUT_DIM>::zeros();
    sel[(0, 0)] = 0.5 * c;
    sel[(0, 1)] = 0.5 * c;
    sel[(1, 0)] = 0.5 * s;
    sel[(1, 1)] = 0.5 * s;
    sel[(2, 0)] = -0.5 / link.half_track;
    sel[(2, 1)] = 0.5 / link.half_track;
    for i in 0..ARM_JOINTS {
        sel[(3 + i, 2 + i)] = 1.0;
    }
    sel
}

pub fn configuration_rates(link: &LinkTable, q: &JointConfig, u: &SVector<f64, INPUT_DIM>) -> SVector<f64, CONFIG_DIM> {
    input_selection(link, q) * u
}

struct ChainFrames {
    /// World position and axis of each arm joint.
    joints: Vec<(Vector3<f64>, Vector3<f64>)>,
    base_origin: Vector3<f64>,
    tool: Vector3<f64>,
    rotation: Rotation3<f64>,
}

fn chain_frames(link: &LinkTable, q: &JointConfig) -> ChainFrames {
    let base_rot = Rotation3::from_axis_angle(&Vector3::z_axis(), q.heading());
    let base_origin = Vector3::new(q.0[0], q.0[1], 0.0);
    let mut pos = base_origin + base_rot * Vector3::from(link.mount);
    let mut rot = base_rot;
    let mut joints = Vec::with_capacity(ARM_JOINTS);
    for (i, j) in link.joints.iter().enumerate() {
        pos += rot * Vector3::from(j.origin);
        let axis = j.axis.unit();
        let world_axis = rot * axis;
        joints.push((pos, world_axis));
        rot *= Rotation3::from_axis_angle(&nalgebra::Unit::new_unchecked(axis), q.0[3 + i]);
    }
    let tool = pos + rot * Vector3::from(link.tool);
    ChainFrames {
        joints,
        base_origin,
        tool,
        rotation: rot,
    }
}

pub fn forward_kinematics(link: &LinkTable, q: &JointConfig) -> EndEffectorState {
    let frames = chain_frames(link, q);
    let (roll, pitch, yaw) = frames.rotation.euler_angles();
    EndEffectorState::new([frames.tool.x, frames.tool.y, frames.tool.z], [roll, pitch, yaw])
}

/// Maps angular velocity to roll/pitch/yaw rates at the given orientation.
fn euler_rate_map(roll_pitch_yaw: (f64, f64, f64)) -> Matrix3<f64> {
    let (_, pitch, yaw) = roll_pitch_yaw;
    let (sp, cp) = pitch.sin_cos();
    let (sy, cy) = yaw.sin_cos();
    // ω = E · [roll rate, pitch rate, yaw rate]
    let e = Matrix3::new(cy * cp, -sy, 0.0, sy * cp, cy, 0.0, -sp, 0.0, 1.0);
    e.try_inverse().unwrap_or_else(|| e.pseudo_inverse(1e-12).expect("svd converges"))
}

/// Jacobian of the end-effector state with respect to `q`.
pub fn configuration_jacobian(link: &LinkTable, q: &JointConfig) -> SMatrix<f64, STATE_DIM, CONFIG_DIM> {
    let frames = chain_frames(link, q);
    let rates = euler_rate_map(frames.rotation.euler_angles());
    let mut jac = SMatrix::<f64, STATE_DIM, CONFIG_DIM>::zeros();
    jac[(0, 0)] = 1.0;
    jac[(1, 1)] = 1.0;

    let z = Vector3::z();
    let lin = z.cross(&(frames.tool - frames.base_origin));
    let ang = rates * z;
    for r in 0..3 {
        jac[(r, 2)] = lin[r];
        jac[(3 + r, 2)] = ang[r];
    }
    for (i, (p, axis)) in frames.joints.iter().enumerate() {
        let lin = axis.cross(&(frames.tool - p));
        let ang = rates * axis;
        for r in 0..3 {
            jac[(r, 3 + i)] = lin[r];
            jac[(3 + r, 3 + i)] = ang[r];
        }
    }
    jac
}

/// Linearized input matrix: `x(t+1) ≈ x(t) + B(q)·u(t)`.
pub fn input_matrix(link: &LinkTable, q: &JointConfig, dt: f64) -> InputMatrix {
    configuration_jacobian(link, q) * input_selection(link, q) * dt
}

/// Numerical rank of a matrix by singular values relative to the largest.
pub fn numerical_rank<const R: usize, const C: usize>(m: &SMatrix<f64, R, C>, rel_tol: f64) -> usize
where
    nalgebra::Const<R>: nalgebra::DimMin<nalgebra::Const<C>>,
{
    let dm = nalgebra::DMatrix::from_iterator(R, C, m.iter().copied());
    let sv = dm.singular_values();
    let max = sv.max();
    if max == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > rel_tol * max).count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn home_pose_matches_link_table() {
        let link = LinkTable::default();
        let home = forward_kinematics(&link, &JointConfig::zeros());
        let reach: f64 = link.mount[0] + link.joints.iter().map(|j| j.origin[0]).sum::<f64>() + link.tool[0];
        let height: f64 = link.mount[2] + link.joints.iter().map(|j| j.origin[2]).sum::<f64>() + link.tool[2];
        assert_relative_eq!(home.0[0], reach, epsilon = 1e-12);
        assert_relative_eq!(home.0[1], 0.0, epsilon = 1e-12);
        assert_relative_eq!(home.0[2], height, epsilon = 1e-12);
        for i in 3..6 {
            assert_relative_eq!(home.0[i], 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn base_translation_moves_tool_rigidly() {
        let link = LinkTable::default();
        let arm = [0.3, -0.4, 0.2, 1.1, -0.3, 0.5, 0.1];
        let a = forward_kinematics(&link, &JointConfig::new([0.0, 0.0, 0.4], arm));
        let b = forward_kinematics(&link, &JointConfig::new([1.0, 0.0, 0.4], arm));
        let d = b.error_from(&a);
        assert_relative_eq!(d[0], 1.0, epsilon = 1e-12);
        for i in 1..6 {
            assert_relative_eq!(d[i], 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn wheels_cannot_move_sideways() {
        let link = LinkTable::default();
        let q = JointConfig::new([0.0, 0.0, 0.7], [0.1, -0.5, 0.0, 1.2, 0.0, -0.7, 0.0]);
        let sel = input_selection(&link, &q);
        let lateral = nalgebra::Vector2::new(-q.heading().sin(), q.heading().cos());
        for w in 0..2 {
            let v = nalgebra::Vector2::new(sel[(0, w)], sel[(1, w)]);
            assert_relative_eq!(v.dot(&lateral), 0.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn stretched_arm_loses_rank() {
        let link = LinkTable::default();
        let straight = input_matrix(&link, &JointConfig::zeros(), 0.1);
        let arm_block: SMatrix<f64, 6, 7> = straight.fixed_view::<6, 7>(0, 2).into_owned();
        assert!(numerical_rank(&arm_block, 1e-9) < 6);
        let bent = input_matrix(&link, &JointConfig::new([0.0; 3], [0.2, -0.4, 0.3, 0.9, -0.2, -0.5, 0.1]), 0.1);
        let arm_block: SMatrix<f64, 6, 7> = bent.fixed_view::<6, 7>(0, 2).into_owned();
        assert_eq!(numerical_rank(&arm_block, 1e-9), 6);
    }

    #[test]
    fn wrap_angle_range() {
        assert_relative_eq!(wrap_angle(3.0 * PI), PI, epsilon = 1e-12);
        assert_relative_eq!(wrap_angle(-PI), PI, epsilon = 1e-12);
        assert_relative_eq!(wrap_angle(0.5), 0.5);
    }
}
