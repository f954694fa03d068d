//! Whole-body tracking of the human's path by a mobile manipulator.

pub mod kinematics;
pub mod mpc;
pub mod pose;

pub use kinematics::{
    forward_kinematics, input_matrix, EndEffectorState, JointConfig, LinkTable, CONFIG_DIM, INPUT_DIM, STATE_DIM,
};
pub use mpc::{mpc_objective, solve_mpc, MpcSetup, MpcSolution};
pub use pose::{
    generate_candidates, hold_grasp, lift_trajectory, optimize_pose, PoseChoice, PoseTracker, TrackerConfig, TrackerReference,
    TrueCost, WeightedReference,
};
