//! Inverse-design queries and their JSON file format.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::milp::Sense;
use crate::network::Network;

pub const PROBLEM_FORMAT_VERSION: u32 = 1;

/// `Σ_i coeffs[i] · x0_i (sense) rhs`, over the design inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinearConstraint {
    pub coeffs: Vec<f64>,
    pub sense: Sense,
    pub rhs: f64,
}

impl LinearConstraint {
    pub fn violation(&self, x0: &[f64]) -> f64 {
        let a: f64 = self.coeffs.iter().zip(x0).map(|(c, x)| c * x).sum();
        match self.sense {
            Sense::Le => (a - self.rhs).max(0.0),
            Sense::Ge => (self.rhs - a).max(0.0),
            Sense::Eq => (a - self.rhs).abs(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobustnessSpec {
    pub candidate: Vec<f64>,
    pub epsilon: f64,
}

/// Everything a query needs besides the network itself.
#[derive(Debug, Clone, PartialEq)]
pub struct InverseProblem {
    pub targets: Vec<Vec<f64>>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub integer: Vec<bool>,
    pub selection_budget: Option<usize>,
    pub robustness: Option<RobustnessSpec>,
    pub extra_constraints: Vec<LinearConstraint>,
    /// Display scale per input: user units = scale × solver units.
    pub scale: Option<Vec<f64>>,
}

/// Constraints on the design inputs alone.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignConstraints {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub integer: Vec<bool>,
    pub extra: Vec<LinearConstraint>,
}

impl DesignConstraints {
    pub fn boxed(lower: Vec<f64>, upper: Vec<f64>) -> Self {
        let integer = vec![false; lower.len()];
        Self {
            lower,
            upper,
            integer,
            extra: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn validate(&self) -> Result<()> {
        check_dim("design upper bounds", self.lower.len(), self.upper.len())?;
        check_dim("integer flags", self.lower.len(), self.integer.len())?;
        for (i, (lo, hi)) in self.lower.iter().zip(&self.upper).enumerate() {
            if !(lo.is_finite() && hi.is_finite()) {
                return Err(Error::InvalidProblem(format!("design bounds of input {i} are not finite")));
            }
            if lo > hi {
                return Err(Error::InvalidProblem(format!("design box is empty at input {i} ({lo} > {hi})")));
            }
        }
        for (k, c) in self.extra.iter().enumerate() {
            check_dim(format!("extra constraint {k}"), self.lower.len(), c.coeffs.len())?;
            if !c.rhs.is_finite() || c.coeffs.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidProblem(format!("extra constraint {k} is not finite")));
            }
        }
        Ok(())
    }

    /// Componentwise intersection with the `epsilon`-hypercube around `center`.
    pub fn around(&self, center: &[f64], epsilon: f64) -> Result<Self> {
        check_dim("robustness candidate", self.dim(), center.len())?;
        if !(epsilon >= 0.0) || !epsilon.is_finite() {
            return Err(Error::InvalidProblem(format!("epsilon must be a finite nonnegative number, got {epsilon}")));
        }
        let mut out = self.clone();
        for i in 0..self.dim() {
            out.lower[i] = self.lower[i].max(center[i] - epsilon);
            out.upper[i] = self.upper[i].min(center[i] + epsilon);
            if out.lower[i] > out.upper[i] {
                return Err(Error::InvalidProblem(format!(
                    "epsilon box around the candidate does not meet the design box at input {i}"
                )));
            }
        }
        Ok(out)
    }

    pub fn contains(&self, x0: &[f64], tol: f64) -> bool {
        x0.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(x, (lo, hi))| *x >= lo - tol && *x <= hi + tol)
            && self.extra.iter().all(|c| c.violation(x0) <= tol)
    }
}

impl InverseProblem {
    /// Continuous single-target problem over a box.
    pub fn boxed(target: Vec<f64>, lower: Vec<f64>, upper: Vec<f64>) -> Self {
        let m = lower.len();
        Self {
            targets: vec![target],
            lower,
            upper,
            integer: vec![false; m],
            selection_budget: None,
            robustness: None,
            extra_constraints: Vec::new(),
            scale: None,
        }
    }

    pub fn design(&self) -> DesignConstraints {
        DesignConstraints {
            lower: self.lower.clone(),
            upper: self.upper.clone(),
            integer: self.integer.clone(),
            extra: self.extra_constraints.clone(),
        }
    }

    pub fn has_integers(&self) -> bool {
        self.integer.iter().any(|b| *b)
    }

    pub fn validate(&self, net: &Network) -> Result<()> {
        let m = net.input_dim();
        check_dim("design lower bounds", m, self.lower.len())?;
        self.design().validate()?;
        if self.targets.is_empty() {
            return Err(Error::InvalidProblem("at least one target is required".into()));
        }
        for (i, t) in self.targets.iter().enumerate() {
            check_dim(format!("target {i}"), net.output_dim(), t.len())?;
            if t.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidProblem(format!("target {i} is not finite")));
            }
        }
        if let Some(d) = self.selection_budget {
            if d < 1 || d > m {
                return Err(Error::InvalidProblem(format!("selection budget {d} must lie in 1..={m}")));
            }
            if self.lower.iter().any(|v| *v < 0.0) || self.upper.iter().any(|v| *v > 1.0) {
                return Err(Error::InvalidProblem(
                    "selection requires inputs normalized to [0, 1]".into(),
                ));
            }
        }
        if let Some(r) = &self.robustness {
            if self.selection_budget.is_some() {
                return Err(Error::InvalidProblem("robustness and selection cannot be combined".into()));
            }
            check_dim("robustness candidate", m, r.candidate.len())?;
            if !(r.epsilon >= 0.0) || !r.epsilon.is_finite() {
                return Err(Error::InvalidProblem(format!("epsilon must be nonnegative, got {}", r.epsilon)));
            }
        }
        if let Some(scale) = &self.scale {
            check_dim("scale", m, scale.len())?;
            if scale.iter().any(|s| !s.is_finite() || *s == 0.0) {
                return Err(Error::InvalidProblem("scale factors must be finite and nonzero".into()));
            }
        }
        Ok(())
    }

    /// Solver units to display units.
    pub fn to_display(&self, x0: &[f64]) -> Vec<f64> {
        match &self.scale {
            Some(s) => x0.iter().zip(s).map(|(x, s)| x * s).collect(),
            None => x0.to_vec(),
        }
    }

    pub fn to_json(&self) -> String {
        let file = ProblemFile {
            format_version: PROBLEM_FORMAT_VERSION,
            targets: self.targets.clone(),
            lower: self.lower.clone(),
            upper: self.upper.clone(),
            integer: self.has_integers().then(|| self.integer.clone()),
            selection_budget: self.selection_budget,
            robustness: self.robustness.clone(),
            extra_constraints: (!self.extra_constraints.is_empty()).then(|| self.extra_constraints.clone()),
            scale: self.scale.clone(),
        };
        serde_json::to_string_pretty(&file).expect("problem serializes")
    }

    /// Parses a problem file. Dimension checks against a network happen in
    /// [`InverseProblem::validate`].
    pub fn from_json(text: &str) -> Result<Self> {
        let file: ProblemFile = serde_json::from_str(text).map_err(|e| Error::Parse {
            location: format!("line {}, column {}", e.line(), e.column()),
            message: e.to_string(),
        })?;
        if file.format_version != PROBLEM_FORMAT_VERSION {
            return Err(Error::Parse {
                location: "format_version".into(),
                message: format!("unsupported format version {}", file.format_version),
            });
        }
        let m = file.lower.len();
        let integer = file.integer.unwrap_or_else(|| vec![false; m]);
        Ok(Self {
            targets: file.targets,
            lower: file.lower,
            upper: file.upper,
            integer,
            selection_budget: file.selection_budget,
            robustness: file.robustness,
            extra_constraints: file.extra_constraints.unwrap_or_default(),
            scale: file.scale,
        })
    }
}

pub fn load_problem(path: impl AsRef<Path>) -> Result<InverseProblem> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    InverseProblem::from_json(&text).map_err(|e| match e {
        Error::Parse { location, message } => Error::Parse {
            location: format!("{}: {location}", path.display()),
            message,
        },
        other => other,
    })
}

pub fn save_problem(problem: &InverseProblem, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, problem.to_json())?;
    Ok(())
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProblemFile {
    format_version: u32,
    targets: Vec<Vec<f64>>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    integer: Option<Vec<bool>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    selection_budget: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    robustness: Option<RobustnessSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    extra_constraints: Option<Vec<LinearConstraint>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    scale: Option<Vec<f64>>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::random_network;

    #[test]
    fn parses_full_file() {
        let text = r#"{
            "format_version": 1,
            "targets": [[0.5], [0.25]],
            "lower": [0, 0, 0],
            "upper": [7, 7, 7],
            "integer": [true, true, false],
            "extra_constraints": [{"coeffs": [1, 1, 1], "sense": "=", "rhs": 4}],
            "scale": [10, 10, 1]
        }"#;
        let p = InverseProblem::from_json(text).unwrap();
        assert_eq!(p.targets.len(), 2);
        assert_eq!(p.extra_constraints[0].sense, Sense::Eq);
        assert_eq!(p.to_display(&[1.0, 2.0, 3.0]), vec![10.0, 20.0, 3.0]);
        let net = random_network(3, &[2], 1, 0);
        p.validate(&net).unwrap();
        let back = InverseProblem::from_json(&p.to_json()).unwrap();
        assert_eq!(back, p);
    }

    #[test]
    fn rejects_inconsistent_problems() {
        let net = random_network(2, &[2], 1, 0);
        let mut p = InverseProblem::boxed(vec![0.0], vec![0.0, 0.0], vec![1.0, 1.0]);
        p.validate(&net).unwrap();

        let mut bad = p.clone();
        bad.lower[1] = 2.0;
        assert!(bad.validate(&net).unwrap_err().to_string().contains("empty"));

        let mut bad = p.clone();
        bad.targets.clear();
        assert!(bad.validate(&net).is_err());

        let mut bad = p.clone();
        bad.selection_budget = Some(3);
        assert!(bad.validate(&net).is_err());

        let mut bad = p.clone();
        bad.upper[0] = 2.0;
        bad.selection_budget = Some(1);
        assert!(bad.validate(&net).is_err());

        p.selection_budget = Some(1);
        p.robustness = Some(RobustnessSpec {
            candidate: vec![0.5, 0.5],
            epsilon: 0.1,
        });
        assert!(p.validate(&net).unwrap_err().to_string().contains("cannot be combined"));
    }

    #[test]
    fn epsilon_box_intersection() {
        let d = DesignConstraints::boxed(vec![0.0, 0.0], vec![1.0, 1.0]);
        let e = d.around(&[0.95, 0.5], 0.1).unwrap();
        assert_eq!(e.upper[0], 1.0);
        assert!((e.lower[0] - 0.85).abs() < 1e-15);
        assert!(d.around(&[3.0, 0.5], 0.1).is_err());
        assert!(d.around(&[0.5, 0.5], -1.0).is_err());
    }
}
