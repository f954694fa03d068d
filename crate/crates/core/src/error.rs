use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("opening of width {width} m is impassable for robot width {robot_width} m")]
    ImpassableOpening { robot_width: f64, width: f64 },
    #[error("invalid environment: {0}")]
    InvalidEnvironment(String),
}

/// A configuration problem, located by file and 1-based line when known.
#[derive(Debug, Error, Clone, PartialEq)]
#[error("{}:{}: {message}", path.display(), line.map(|l| l.to_string()).unwrap_or_else(|| "?".into()))]
pub struct ConfigError {
    pub path: PathBuf,
    pub line: Option<usize>,
    pub message: String,
}

impl ConfigError {
    pub fn new(path: impl Into<PathBuf>, line: Option<usize>, message: impl Into<String>) -> Self {
        Self {
            path: path.into(),
            line,
            message: message.into(),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ControlError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("weight matrix {name} is not {requirement}")]
    InvalidWeight {
        name: &'static str,
        requirement: &'static str,
    },
    #[error("horizon must be at least 1")]
    EmptyHorizon,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CalibrationError {
    #[error("initial stubbornness {0} leaves eta undefined (must lie in (0, 1))")]
    UndefinedEta(f64),
    #[error("switch at zero accumulated discomfort: immediate switch")]
    ImmediateSwitch,
}
