//! Configurations compiled into the library: the four curated environments
//! and the reference robot.
//!
//! The environments are approximations tuned so the choice model ranks their
//! options like the reported study; they are not measured layouts.

use crate::config::parse_environment;
use crate::geometry::Environment;

pub const ENV1_TOML: &str = include_str!("../../../configs/envs/env1.toml");
pub const ENV2_TOML: &str = include_str!("../../../configs/envs/env2.toml");
pub const ENV3_TOML: &str = include_str!("../../../configs/envs/env3.toml");
pub const ENV4_TOML: &str = include_str!("../../../configs/envs/env4.toml");

/// Link table of the reference mobile manipulator.
pub const ROBOT_TOML: &str = include_str!("../../../configs/robot.toml");

pub const ENVIRONMENT_NAMES: [&str; 4] = ["env1", "env2", "env3", "env4"];

pub fn environment_source(name: &str) -> Option<&'static str> {
    match name {
        "env1" => Some(ENV1_TOML),
        "env2" => Some(ENV2_TOML),
        "env3" => Some(ENV3_TOML),
        "env4" => Some(ENV4_TOML),
        _ => None,
    }
}

/// Parses a built-in environment by name (`env1` … `env4`).
pub fn environment(name: &str) -> Option<Environment> {
    let text = environment_source(name)?;
    Some(parse_environment(text, format!("<builtin>/{name}.toml")).expect("built-in environment is valid"))
}

pub fn all_environments() -> Vec<Environment> {
    ENVIRONMENT_NAMES.iter().map(|n| environment(n).expect("known name")).collect()
}
