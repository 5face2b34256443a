//! Solution file schema (`format_version` 1).

use std::collections::BTreeMap;

use reluinv::milp::SolveStatus;
use serde::{Deserialize, Serialize};

pub const SOLUTION_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    pub format_version: u32,
    pub status: String,
    /// Objective reported by the solver.
    pub objective: Option<f64>,
    /// Objective recomputed by running the decoded designs forward.
    pub resimulated_objective: Option<f64>,
    pub relaxed_bound: Option<f64>,
    pub gap: Option<f64>,
    pub nodes_explored: u64,
    pub census: CensusSummary,
    pub designs: Vec<Design>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub selected: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rounding: Option<Rounding>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub robustness: Option<Robustness>,
    pub manifest: Manifest,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CensusSummary {
    pub stably_active: usize,
    pub stably_inactive: usize,
    pub unstable: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Design {
    pub target: Vec<f64>,
    /// Design in solver units.
    pub x0: Vec<f64>,
    /// Design in display units (`scale × x0`).
    pub display: Vec<f64>,
    /// Re-simulated network output.
    pub output: Vec<f64>,
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rounding {
    pub continuous_objective: Option<f64>,
    pub rounded_designs: Vec<Vec<f64>>,
    pub rounded_objective: Option<f64>,
    pub integer_objective: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Robustness {
    pub candidate: Vec<f64>,
    pub epsilon: f64,
    /// L1 deviation of the candidate itself.
    pub nominal_deviation: f64,
    /// Certified maximum over the box (when the status is optimal).
    pub worst_case_deviation: Option<f64>,
    /// The maximizing design minus the candidate.
    pub witness_perturbation: Option<Vec<f64>>,
}

/// Everything needed to reproduce the run. Only `timing` depends on the
/// machine.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub tool_version: String,
    /// SHA-256 of each input file.
    pub inputs: BTreeMap<String, String>,
    pub config: serde_json::Value,
    pub seed: u64,
    pub timing: Timing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub wall_time_s: f64,
    pub bounds_time_s: f64,
    pub solve_time_s: f64,
    pub first_incumbent_time_s: Option<f64>,
}

pub fn status_name(status: SolveStatus) -> &'static str {
    match status {
        SolveStatus::Optimal => "optimal",
        SolveStatus::Feasible => "feasible",
        SolveStatus::Infeasible => "infeasible",
        SolveStatus::TimeLimit => "time_limit",
        SolveStatus::Unbounded => "unbounded",
    }
}

/// Finite values only; JSON has no infinities.
pub fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

impl Solution {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("solution serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> anyhow::Result<Self> {
        let s: Solution = serde_json::from_str(text)?;
        anyhow::ensure!(
            s.format_version == SOLUTION_FORMAT_VERSION,
            "unsupported solution format version {}",
            s.format_version
        );
        Ok(s)
    }
}
