//! The JSON result document.

use framescale::{IterationRecord, ScalingResult, Status};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DocStatus {
    Scaled,
    Infeasible,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Problem {
    Frame,
    Matrix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub problem: Problem,
    pub eps: f64,
    pub max_iters: Option<usize>,
    pub regularize: bool,
}

/// `z` is set for scaled frames, `y` for scaled matrices and `certificate`
/// (0-based column indices) for infeasible instances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultDocument {
    pub status: DocStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub certificate: Option<Vec<usize>>,
    pub iterations: usize,
    pub final_error_sq: f64,
    pub trace: Vec<IterationRecord>,
    pub config: ConfigEcho,
    pub version: String,
}

impl ResultDocument {
    pub fn from_result(result: &ScalingResult, config: ConfigEcho) -> Self {
        let scaling = result.scaling().map(|s| s.as_slice().to_vec());
        let (z, y) = match config.problem {
            Problem::Frame => (scaling, None),
            Problem::Matrix => (None, scaling),
        };
        Self {
            status: match result.status() {
                Status::Scaled => DocStatus::Scaled,
                Status::Infeasible => DocStatus::Infeasible,
            },
            z,
            y,
            certificate: result.certificate().map(<[usize]>::to_vec),
            iterations: result.iterations,
            final_error_sq: result.final_error_sq,
            trace: result.trace.clone(),
            config,
            version: env!("CARGO_PKG_VERSION").to_string(),
        }
    }

    pub fn scaling(&self) -> Option<&[f64]> {
        self.z.as_deref().or(self.y.as_deref())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("document fields are serializable") + "\n"
    }
}
