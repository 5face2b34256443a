//! Generic mixed-integer linear programs and a reference solver.
//!
//! LP relaxations are solved with a dense bounded-variable simplex
//! ([`solve_lp`]); integrality is enforced by best-bound branch-and-bound
//! ([`solve_milp`]). A running solve accepts externally produced incumbents
//! through an [`IncumbentPool`].

mod bnb;
mod lp;
pub mod lp_format;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use bnb::{solve_milp, solve_milp_with_pool, GapEvent, IncumbentPool, Injection, Rejection, Source};
pub use lp::{solve_lp, LpSolution, LpStatus};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct VarId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VarKind {
    Continuous,
    Binary,
    Integer,
}

impl VarKind {
    pub fn is_integral(self) -> bool {
        !matches!(self, VarKind::Continuous)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Variable {
    pub name: String,
    pub kind: VarKind,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sense {
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = "=")]
    Eq,
    #[serde(rename = ">=")]
    Ge,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub coeffs: Vec<(VarId, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

impl Constraint {
    pub fn activity(&self, x: &[f64]) -> f64 {
        self.coeffs.iter().map(|(v, c)| c * x[v.0]).sum()
    }

    /// Amount by which `x` violates this row (0 when satisfied).
    pub fn violation(&self, x: &[f64]) -> f64 {
        let a = self.activity(x);
        match self.sense {
            Sense::Le => (a - self.rhs).max(0.0),
            Sense::Ge => (self.rhs - a).max(0.0),
            Sense::Eq => (a - self.rhs).abs(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ObjSense {
    Minimize,
    Maximize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Objective {
    pub coeffs: Vec<(VarId, f64)>,
    pub sense: ObjSense,
    pub offset: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MilpModel {
    vars: Vec<Variable>,
    constraints: Vec<Constraint>,
    objective: Objective,
}

impl Default for MilpModel {
    fn default() -> Self {
        Self::new()
    }
}

/// Largest violations of a point, split by kind.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Violation {
    pub constraint: f64,
    pub bound: f64,
    pub integrality: f64,
}

impl Violation {
    pub fn within(&self, lp_tol: f64, int_tol: f64) -> bool {
        self.constraint <= lp_tol && self.bound <= lp_tol && self.integrality <= int_tol
    }
}

impl MilpModel {
    pub fn new() -> Self {
        Self {
            vars: Vec::new(),
            constraints: Vec::new(),
            objective: Objective {
                coeffs: Vec::new(),
                sense: ObjSense::Minimize,
                offset: 0.0,
            },
        }
    }

    pub fn add_var(&mut self, name: impl Into<String>, kind: VarKind, lower: f64, upper: f64) -> VarId {
        let (lower, upper) = match kind {
            VarKind::Binary => (lower.max(0.0), upper.min(1.0)),
            _ => (lower, upper),
        };
        self.vars.push(Variable {
            name: name.into(),
            kind,
            lower,
            upper,
        });
        VarId(self.vars.len() - 1)
    }

    /// Adds `Σ coeffs · x  (sense)  rhs`. Repeated variables are merged and
    /// zero coefficients dropped.
    pub fn add_constraint(&mut self, coeffs: impl IntoIterator<Item = (VarId, f64)>, sense: Sense, rhs: f64) -> usize {
        self.constraints.push(Constraint {
            coeffs: merge_terms(coeffs),
            sense,
            rhs,
        });
        self.constraints.len() - 1
    }

    pub fn set_objective(&mut self, coeffs: impl IntoIterator<Item = (VarId, f64)>, sense: ObjSense, offset: f64) {
        self.objective = Objective {
            coeffs: merge_terms(coeffs),
            sense,
            offset,
        };
    }

    pub fn vars(&self) -> &[Variable] {
        &self.vars
    }

    pub fn var(&self, id: VarId) -> &Variable {
        &self.vars[id.0]
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    pub fn objective(&self) -> &Objective {
        &self.objective
    }

    pub fn num_vars(&self) -> usize {
        self.vars.len()
    }

    pub fn num_integer_vars(&self) -> usize {
        self.vars.iter().filter(|v| v.kind.is_integral()).count()
    }

    pub fn set_var_bounds(&mut self, id: VarId, lower: f64, upper: f64) {
        let v = &mut self.vars[id.0];
        v.lower = lower;
        v.upper = upper;
    }

    pub fn set_var_kind(&mut self, id: VarId, kind: VarKind) {
        self.vars[id.0].kind = kind;
    }

    /// Checks the structural invariants: finite coefficients, valid indices,
    /// consistent bounds, binaries in `[0, 1]`, integers bounded.
    pub fn validate(&self) -> Result<()> {
        for (i, v) in self.vars.iter().enumerate() {
            if v.lower.is_nan() || v.upper.is_nan() || v.lower == f64::INFINITY || v.upper == f64::NEG_INFINITY {
                return Err(Error::InvalidModel(format!("variable {} ({i}) has invalid bounds", v.name)));
            }
            match v.kind {
                VarKind::Binary if v.lower < 0.0 || v.upper > 1.0 => {
                    return Err(Error::InvalidModel(format!("binary {} has bounds outside [0, 1]", v.name)));
                }
                VarKind::Integer if !(v.lower.is_finite() && v.upper.is_finite()) => {
                    return Err(Error::InvalidModel(format!("integer variable {} must have finite bounds", v.name)));
                }
                _ => {}
            }
        }
        let n = self.vars.len();
        let check_terms = |what: &str, terms: &[(VarId, f64)]| -> Result<()> {
            for (v, c) in terms {
                if v.0 >= n {
                    return Err(Error::InvalidModel(format!("{what} references unknown variable {}", v.0)));
                }
                if !c.is_finite() {
                    return Err(Error::InvalidModel(format!("{what} has a non-finite coefficient")));
                }
            }
            Ok(())
        };
        for (i, c) in self.constraints.iter().enumerate() {
            check_terms(&format!("constraint {i}"), &c.coeffs)?;
            if !c.rhs.is_finite() {
                return Err(Error::InvalidModel(format!("constraint {i} has a non-finite right-hand side")));
            }
        }
        check_terms("objective", &self.objective.coeffs)?;
        if !self.objective.offset.is_finite() {
            return Err(Error::InvalidModel("objective offset is not finite".into()));
        }
        Ok(())
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.offset + self.objective.coeffs.iter().map(|(v, c)| c * x[v.0]).sum::<f64>()
    }

    pub fn violation(&self, x: &[f64]) -> Violation {
        let mut out = Violation::default();
        for c in &self.constraints {
            out.constraint = out.constraint.max(c.violation(x));
        }
        for (v, &value) in self.vars.iter().zip(x) {
            let b = (v.lower - value).max(value - v.upper).max(0.0);
            out.bound = out.bound.max(b);
            if v.kind.is_integral() {
                out.integrality = out.integrality.max((value - value.round()).abs());
            }
        }
        out
    }

    /// Copy with every integrality requirement dropped.
    pub fn relaxed(&self) -> MilpModel {
        let mut m = self.clone();
        for v in &mut m.vars {
            v.kind = VarKind::Continuous;
        }
        m
    }
}

fn merge_terms(coeffs: impl IntoIterator<Item = (VarId, f64)>) -> Vec<(VarId, f64)> {
    let mut terms: Vec<(VarId, f64)> = coeffs.into_iter().collect();
    terms.sort_by_key(|t| t.0);
    let mut out: Vec<(VarId, f64)> = Vec::with_capacity(terms.len());
    for (v, c) in terms {
        match out.last_mut() {
            Some(last) if last.0 == v => last.1 += c,
            _ => out.push((v, c)),
        }
    }
    out.retain(|t| t.1 != 0.0);
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolveStatus {
    Optimal,
    Feasible,
    Infeasible,
    TimeLimit,
    Unbounded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub status: SolveStatus,
    pub incumbent: Option<Vec<f64>>,
    /// Objective of the incumbent, in the model's own sense. `NaN` when absent.
    pub incumbent_obj: f64,
    /// Proven bound on the optimum: a lower bound when minimizing, an upper
    /// bound when maximizing.
    pub relaxed_bound: f64,
    pub gap: f64,
    pub nodes_explored: u64,
    pub wall_time: f64,
    /// Seconds until the first incumbent, whichever side supplied it.
    pub first_incumbent_time: Option<f64>,
}

impl SolveReport {
    pub fn has_incumbent(&self) -> bool {
        self.incumbent.is_some()
    }
}

/// `|incumbent − bound| / max(1e-10, |incumbent|)`; infinite without an incumbent
/// or with an infinite bound. Differences up to [`ABS_GAP_FLOOR`] count as
/// closed, so an optimum of zero reported as 1e-17 still certifies.
pub fn relative_gap(incumbent_obj: f64, bound: f64) -> f64 {
    if !incumbent_obj.is_finite() || !bound.is_finite() {
        return f64::INFINITY;
    }
    let diff = (incumbent_obj - bound).abs();
    if diff <= ABS_GAP_FLOOR {
        return 0.0;
    }
    diff / incumbent_obj.abs().max(1e-10)
}

pub const ABS_GAP_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NodeSelection {
    BestBound,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BranchRule {
    MostFractional,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BnbConfig {
    /// Wall-clock budget in seconds.
    pub time_limit: f64,
    pub gap_tol: f64,
    pub integrality_tol: f64,
    pub lp_tol: f64,
    pub seed: u64,
    pub node_selection: NodeSelection,
    pub branch_rule: BranchRule,
    pub node_limit: Option<u64>,
}

impl Default for BnbConfig {
    fn default() -> Self {
        Self {
            time_limit: 150.0,
            gap_tol: 1e-6,
            integrality_tol: 1e-6,
            lp_tol: 1e-7,
            seed: 0,
            node_selection: NodeSelection::BestBound,
            branch_rule: BranchRule::MostFractional,
            node_limit: None,
        }
    }
}

impl BnbConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("time_limit", self.time_limit),
            ("gap_tol", self.gap_tol),
            ("integrality_tol", self.integrality_tol),
            ("lp_tol", self.lp_tol),
        ];
        for (name, v) in positive {
            if !(v > 0.0) {
                return Err(Error::InvalidModel(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }

    pub fn with_time_limit(mut self, seconds: f64) -> Self {
        self.time_limit = seconds;
        self
    }

    pub fn with_gap_tol(mut self, gap_tol: f64) -> Self {
        self.gap_tol = gap_tol;
        self
    }
}
