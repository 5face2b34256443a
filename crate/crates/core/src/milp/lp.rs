//! Dense bounded-variable revised simplex.
//!
//! Every row `i` of the model becomes `Σ_j a_ij x_j − r_i = 0`, where the row
//! variable `r_i` carries the row's sense as bounds. The slack basis
//! (`B = −I`) is therefore always available as a starting point. The basis
//! inverse is kept explicitly as a dense `m × m` matrix, updated in product
//! form and rebuilt by Gauss-Jordan elimination at regular intervals.
//!
//! Two drivers share this state:
//! * a composite primal simplex that minimizes the sum of infeasibilities
//!   until the basis is primal feasible and then the true objective;
//! * a dual simplex used after branching, when the parent's optimal basis is
//!   still dual feasible but violates the tightened bounds.

use std::sync::Arc;

use crate::error::{Error, Result};

use super::{MilpModel, ObjSense, Sense, VarId};

const FEAS_TOL: f64 = 1e-9;
const DUAL_TOL: f64 = 1e-9;
const PIVOT_TOL: f64 = 1e-9;
const REFACTOR_EVERY: usize = 64;
const DEGENERATE_LIMIT: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub status: LpStatus,
    /// Values of the model's variables; empty unless `Optimal`.
    pub x: Vec<f64>,
    /// Objective in the model's sense, including the constant offset.
    pub obj: f64,
}

/// Solves the LP relaxation of `model`, with `extra_bounds` intersected into
/// the variable bounds.
pub fn solve_lp(model: &MilpModel, extra_bounds: &[(VarId, f64, f64)]) -> Result<LpSolution> {
    model.validate()?;
    let form = StandardForm::new(model);
    let (mut lower, mut upper) = form.bounds(model);
    for &(v, lo, hi) in extra_bounds {
        if v.0 >= model.num_vars() {
            return Err(Error::InvalidModel(format!("extra bound on unknown variable {}", v.0)));
        }
        lower[v.0] = lower[v.0].max(lo);
        upper[v.0] = upper[v.0].min(hi);
    }
    let out = form.solve(&lower, &upper, None)?;
    Ok(form.to_solution(&out))
}

/// Model in the row-variable form above, minimization sense.
#[derive(Debug)]
pub(crate) struct StandardForm {
    pub n: usize,
    pub m: usize,
    cols: Vec<Vec<(usize, f64)>>,
    cost: Vec<f64>,
    row_lower: Vec<f64>,
    row_upper: Vec<f64>,
    /// +1 for minimization, −1 for maximization.
    pub sign: f64,
    pub offset: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Status {
    Basic,
    Lower,
    Upper,
    Free,
}

/// Basis snapshot that lets a child node start from its parent's optimum.
#[derive(Debug, Clone)]
pub(crate) struct WarmStart {
    basis: Vec<usize>,
    status: Vec<Status>,
    binv: Option<Arc<Vec<f64>>>,
}

impl WarmStart {
    pub fn drop_inverse(&mut self) {
        self.binv = None;
    }

    pub fn inverse_bytes(&self) -> usize {
        self.binv.as_ref().map_or(0, |b| b.len() * 8)
    }
}

#[derive(Debug)]
pub(crate) struct LpOutcome {
    pub status: LpStatus,
    /// Structural values (length `n`) when optimal.
    pub x: Vec<f64>,
    /// Minimization-sense objective without offset.
    pub obj: f64,
    pub warm: Option<WarmStart>,
}

impl StandardForm {
    pub fn new(model: &MilpModel) -> Self {
        let n = model.num_vars();
        let m = model.constraints().len();
        let mut cols = vec![Vec::new(); n];
        let mut row_lower = Vec::with_capacity(m);
        let mut row_upper = Vec::with_capacity(m);
        for (i, c) in model.constraints().iter().enumerate() {
            for &(v, a) in &c.coeffs {
                cols[v.0].push((i, a));
            }
            let (lo, hi) = match c.sense {
                Sense::Le => (f64::NEG_INFINITY, c.rhs),
                Sense::Ge => (c.rhs, f64::INFINITY),
                Sense::Eq => (c.rhs, c.rhs),
            };
            row_lower.push(lo);
            row_upper.push(hi);
        }
        let sign = match model.objective().sense {
            ObjSense::Minimize => 1.0,
            ObjSense::Maximize => -1.0,
        };
        let mut cost = vec![0.0; n];
        for &(v, c) in &model.objective().coeffs {
            cost[v.0] += sign * c;
        }
        Self {
            n,
            m,
            cols,
            cost,
            row_lower,
            row_upper,
            sign,
            offset: model.objective().offset,
        }
    }

    /// Structural bounds taken from the model.
    pub fn bounds(&self, model: &MilpModel) -> (Vec<f64>, Vec<f64>) {
        model.vars().iter().map(|v| (v.lower, v.upper)).unzip()
    }

    /// Converts a minimization-sense objective (without offset) into the
    /// model's sense.
    pub fn model_objective(&self, internal: f64) -> f64 {
        self.sign * internal + self.offset
    }

    pub fn to_solution(&self, out: &LpOutcome) -> LpSolution {
        match out.status {
            LpStatus::Optimal => LpSolution {
                status: LpStatus::Optimal,
                x: out.x.clone(),
                obj: self.model_objective(out.obj),
            },
            status => LpSolution {
                status,
                x: Vec::new(),
                obj: match status {
                    LpStatus::Unbounded => self.sign * f64::NEG_INFINITY,
                    _ => f64::NAN,
                },
            },
        }
    }

    /// Solves with the given structural bounds, optionally from a warm start.
    pub fn solve(&self, lower: &[f64], upper: &[f64], warm: Option<&WarmStart>) -> Result<LpOutcome> {
        if lower.iter().zip(upper).any(|(l, u)| l > u) {
            return Ok(LpOutcome {
                status: LpStatus::Infeasible,
                x: Vec::new(),
                obj: f64::NAN,
                warm: None,
            });
        }
        let mut simplex = Simplex::new(self, lower, upper);
        if let Some(w) = warm {
            if simplex.load_warm(w).is_ok() {
                if let Some(out) = simplex.run_dual()? {
                    return Ok(out);
                }
            } else {
                simplex = Simplex::new(self, lower, upper);
            }
        }
        simplex.run_primal()
    }
}

struct Simplex<'a> {
    form: &'a StandardForm,
    m: usize,
    lo: Vec<f64>,
    hi: Vec<f64>,
    x: Vec<f64>,
    status: Vec<Status>,
    basis: Vec<usize>,
    binv: Vec<f64>,
    since_refactor: usize,
    iterations: usize,
    max_iterations: usize,
}

impl<'a> Simplex<'a> {
    fn new(form: &'a StandardForm, lower: &[f64], upper: &[f64]) -> Self {
        let (n, m) = (form.n, form.m);
        let mut lo = lower.to_vec();
        let mut hi = upper.to_vec();
        lo.extend_from_slice(&form.row_lower);
        hi.extend_from_slice(&form.row_upper);
        let mut status = Vec::with_capacity(n + m);
        let mut x = vec![0.0; n + m];
        for j in 0..n {
            let s = nonbasic_status(lo[j], hi[j], Status::Lower);
            x[j] = nonbasic_value(s, lo[j], hi[j]);
            status.push(s);
        }
        status.extend(std::iter::repeat(Status::Basic).take(m));
        let mut binv = vec![0.0; m * m];
        for i in 0..m {
            binv[i * m + i] = -1.0;
        }
        let mut s = Self {
            form,
            m,
            lo,
            hi,
            x,
            status,
            basis: (n..n + m).collect(),
            binv,
            since_refactor: 0,
            iterations: 0,
            max_iterations: 50 * (n + m) + 10_000,
        };
        s.recompute_basic();
        s
    }

    fn load_warm(&mut self, w: &WarmStart) -> Result<()> {
        let total = self.form.n + self.m;
        if w.basis.len() != self.m || w.status.len() != total {
            return Err(Error::Internal("warm start shape mismatch".into()));
        }
        self.basis.clone_from(&w.basis);
        for j in 0..total {
            let s = match w.status[j] {
                Status::Basic => Status::Basic,
                prev => nonbasic_status(self.lo[j], self.hi[j], prev),
            };
            self.status[j] = s;
            if s != Status::Basic {
                self.x[j] = nonbasic_value(s, self.lo[j], self.hi[j]);
            }
        }
        match &w.binv {
            Some(b) if b.len() == self.m * self.m => self.binv.copy_from_slice(b),
            _ => self.refactor()?,
        }
        self.recompute_basic();
        Ok(())
    }

    fn column(&self, j: usize) -> ColumnIter<'_> {
        if j < self.form.n {
            ColumnIter::Structural(self.form.cols[j].iter())
        } else {
            ColumnIter::Row(Some(j - self.form.n))
        }
    }

    /// `B⁻¹ a_j`.
    fn ftran(&self, j: usize) -> Vec<f64> {
        let m = self.m;
        let mut alpha = vec![0.0; m];
        for (i, a) in self.column(j) {
            for (r, out) in alpha.iter_mut().enumerate() {
                *out += self.binv[r * m + i] * a;
            }
        }
        alpha
    }

    /// `(e_rᵀ B⁻¹) a_j`.
    fn row_dot(&self, r: usize, j: usize) -> f64 {
        let row = &self.binv[r * self.m..(r + 1) * self.m];
        self.column(j).map(|(i, a)| row[i] * a).sum()
    }

    fn cost(&self, j: usize) -> f64 {
        if j < self.form.n {
            self.form.cost[j]
        } else {
            0.0
        }
    }

    /// Duals `y = c_Bᵀ B⁻¹` for arbitrary basic costs.
    fn duals(&self, basic_cost: &[f64]) -> Vec<f64> {
        let m = self.m;
        let mut y = vec![0.0; m];
        for (r, &c) in basic_cost.iter().enumerate() {
            if c == 0.0 {
                continue;
            }
            let row = &self.binv[r * m..(r + 1) * m];
            for (yk, b) in y.iter_mut().zip(row) {
                *yk += c * b;
            }
        }
        y
    }

    fn reduced_cost(&self, j: usize, cost_j: f64, y: &[f64]) -> f64 {
        cost_j - self.column(j).map(|(i, a)| y[i] * a).sum::<f64>()
    }

    fn recompute_basic(&mut self) {
        let m = self.m;
        let mut v = vec![0.0; m];
        for (j, s) in self.status.iter().enumerate() {
            if *s == Status::Basic || self.x[j] == 0.0 {
                continue;
            }
            let xj = self.x[j];
            for (i, a) in self.column(j) {
                v[i] += a * xj;
            }
        }
        for r in 0..m {
            let row = &self.binv[r * m..(r + 1) * m];
            let val: f64 = row.iter().zip(&v).map(|(b, vi)| b * vi).sum();
            self.x[self.basis[r]] = -val;
        }
    }

    /// Rebuilds `B⁻¹` from the basis by Gauss-Jordan elimination. Columns
    /// that turn out dependent are swapped for row variables.
    fn refactor(&mut self) -> Result<()> {
        let m = self.m;
        self.since_refactor = 0;
        if m == 0 {
            return Ok(());
        }
        // Left block holds the transformed basis, right block the transform.
        let mut left = vec![0.0f64; m * m];
        let mut right = vec![0.0f64; m * m];
        for (p, &j) in self.basis.iter().enumerate() {
            for (i, a) in self.column(j) {
                left[i * m + p] = a;
            }
        }
        for i in 0..m {
            right[i * m + i] = 1.0;
        }
        let n = self.form.n;
        for p in 0..m {
            let mut best = p;
            let mut best_abs = 0.0;
            for r in p..m {
                let v = left[r * m + p].abs();
                if v > best_abs {
                    best_abs = v;
                    best = r;
                }
            }
            if best_abs < 1e-11 {
                // Replace the dependent column with the row variable whose
                // transformed unit column has the largest entry below row p.
                let mut pick = None;
                let mut pick_abs = 0.0;
                for i in 0..m {
                    if self.status[n + i] == Status::Basic {
                        continue;
                    }
                    for r in p..m {
                        let v = right[r * m + i].abs();
                        if v > pick_abs {
                            pick_abs = v;
                            pick = Some((i, r));
                        }
                    }
                }
                let Some((i, r)) = pick else {
                    return Err(Error::Numerical("singular basis could not be repaired".into()));
                };
                let old = self.basis[p];
                let s = nonbasic_status(self.lo[old], self.hi[old], Status::Lower);
                self.status[old] = s;
                self.x[old] = nonbasic_value(s, self.lo[old], self.hi[old]);
                self.basis[p] = n + i;
                self.status[n + i] = Status::Basic;
                for row in 0..m {
                    left[row * m + p] = -right[row * m + i];
                }
                best = r;
            }
            if best != p {
                for c in 0..m {
                    left.swap(p * m + c, best * m + c);
                    right.swap(p * m + c, best * m + c);
                }
            }
            let piv = left[p * m + p];
            for c in 0..m {
                left[p * m + c] /= piv;
                right[p * m + c] /= piv;
            }
            for r in 0..m {
                if r == p {
                    continue;
                }
                let f = left[r * m + p];
                if f == 0.0 {
                    continue;
                }
                for c in 0..m {
                    left[r * m + c] -= f * left[p * m + c];
                    right[r * m + c] -= f * right[p * m + c];
                }
            }
        }
        self.binv = right;
        Ok(())
    }

    fn pivot(&mut self, r: usize, alpha: &[f64]) {
        let m = self.m;
        let piv = alpha[r];
        let (before, rest) = self.binv.split_at_mut(r * m);
        let (prow, after) = rest.split_at_mut(m);
        for v in prow.iter_mut() {
            *v /= piv;
        }
        for (i, row) in before.chunks_exact_mut(m).chain(after.chunks_exact_mut(m)).enumerate() {
            let i = if i < r { i } else { i + 1 };
            let f = alpha[i];
            if f == 0.0 {
                continue;
            }
            for (v, p) in row.iter_mut().zip(prow.iter()) {
                *v -= f * p;
            }
        }
        self.since_refactor += 1;
    }

    fn infeasibility(&self, j: usize) -> f64 {
        let v = self.x[j];
        if v < self.lo[j] - FEAS_TOL {
            self.lo[j] - v
        } else if v > self.hi[j] + FEAS_TOL {
            v - self.hi[j]
        } else {
            0.0
        }
    }

    fn maybe_refactor(&mut self) -> Result<()> {
        if self.since_refactor >= REFACTOR_EVERY {
            self.refactor()?;
            self.recompute_basic();
        }
        Ok(())
    }

    fn tick(&mut self) -> Result<()> {
        self.iterations += 1;
        if self.iterations > self.max_iterations {
            return Err(Error::Numerical(format!(
                "simplex exceeded {} iterations",
                self.max_iterations
            )));
        }
        Ok(())
    }

    fn outcome(&self, status: LpStatus) -> LpOutcome {
        let n = self.form.n;
        let (x, obj) = if status == LpStatus::Optimal {
            let x: Vec<f64> = self.x[..n].to_vec();
            let obj = x.iter().enumerate().map(|(j, v)| self.form.cost[j] * v).sum();
            (x, obj)
        } else {
            (Vec::new(), f64::NAN)
        };
        let warm = (status == LpStatus::Optimal).then(|| WarmStart {
            basis: self.basis.clone(),
            status: self.status.clone(),
            binv: Some(Arc::new(self.binv.clone())),
        });
        LpOutcome {
            status,
            x,
            obj,
            warm,
        }
    }

    fn run_primal(&mut self) -> Result<LpOutcome> {
        let mut degenerate = 0usize;
        loop {
            self.tick()?;
            self.maybe_refactor()?;
            let basic_cost: Vec<f64> = self
                .basis
                .iter()
                .map(|&j| {
                    let v = self.x[j];
                    if v < self.lo[j] - FEAS_TOL {
                        -1.0
                    } else if v > self.hi[j] + FEAS_TOL {
                        1.0
                    } else {
                        0.0
                    }
                })
                .collect();
            let phase_one = basic_cost.iter().any(|c| *c != 0.0);
            let basic_cost = if phase_one {
                basic_cost
            } else {
                self.basis.iter().map(|&j| self.cost(j)).collect()
            };
            let y = self.duals(&basic_cost);
            let bland = degenerate > DEGENERATE_LIMIT;

            let mut entering: Option<(usize, f64, f64)> = None;
            for j in 0..self.status.len() {
                let s = self.status[j];
                if s == Status::Basic || self.lo[j] == self.hi[j] {
                    continue;
                }
                let cj = if phase_one { 0.0 } else { self.cost(j) };
                let d = self.reduced_cost(j, cj, &y);
                let dir = match s {
                    Status::Lower if d < -DUAL_TOL => 1.0,
                    Status::Upper if d > DUAL_TOL => -1.0,
                    Status::Free if d.abs() > DUAL_TOL => -d.signum(),
                    _ => continue,
                };
                if bland {
                    entering = Some((j, dir, d));
                    break;
                }
                if entering.map_or(true, |(_, _, best)| d.abs() > best.abs()) {
                    entering = Some((j, dir, d));
                }
            }

            let Some((q, dir, _)) = entering else {
                if self.since_refactor > 0 {
                    self.refactor()?;
                    self.recompute_basic();
                    continue;
                }
                return Ok(self.outcome(if phase_one { LpStatus::Infeasible } else { LpStatus::Optimal }));
            };

            let alpha = self.ftran(q);
            let flip = self.hi[q] - self.lo[q];
            let step = self.primal_ratio(&alpha, dir, bland);
            match step {
                None if flip.is_finite() => {
                    self.bound_flip(q, dir, flip, &alpha);
                    degenerate = 0;
                }
                None => {
                    if phase_one {
                        return Err(Error::Numerical("phase-one ray without a blocking variable".into()));
                    }
                    return Ok(self.outcome(LpStatus::Unbounded));
                }
                Some((_, theta, _)) if flip.is_finite() && flip <= theta => {
                    self.bound_flip(q, dir, flip, &alpha);
                    degenerate = 0;
                }
                Some((r, theta, leave_at_upper)) => {
                    if theta <= 1e-12 {
                        degenerate += 1;
                    } else {
                        degenerate = 0;
                    }
                    self.apply_pivot(q, dir * theta, r, leave_at_upper, &alpha);
                }
            }
        }
    }

    fn bound_flip(&mut self, q: usize, dir: f64, flip: f64, alpha: &[f64]) {
        let delta = dir * flip;
        for (r, a) in alpha.iter().enumerate() {
            self.x[self.basis[r]] -= a * delta;
        }
        if dir > 0.0 {
            self.status[q] = Status::Upper;
            self.x[q] = self.hi[q];
        } else {
            self.status[q] = Status::Lower;
            self.x[q] = self.lo[q];
        }
    }

    fn apply_pivot(&mut self, q: usize, delta: f64, r: usize, leave_at_upper: bool, alpha: &[f64]) {
        for (i, a) in alpha.iter().enumerate() {
            self.x[self.basis[i]] -= a * delta;
        }
        self.x[q] += delta;
        let leaving = self.basis[r];
        if leave_at_upper {
            self.status[leaving] = Status::Upper;
            self.x[leaving] = self.hi[leaving];
        } else {
            self.status[leaving] = Status::Lower;
            self.x[leaving] = self.lo[leaving];
        }
        self.basis[r] = q;
        self.status[q] = Status::Basic;
        self.pivot(r, alpha);
    }

    /// Harris two-pass ratio test (plain minimum ratio with index tie-break in
    /// Bland mode). Returns `(row, step, leaves_at_upper)`.
    fn primal_ratio(&self, alpha: &[f64], dir: f64, bland: bool) -> Option<(usize, f64, bool)> {
        let mut candidates: Vec<(usize, f64, f64, bool)> = Vec::new();
        for (r, &a) in alpha.iter().enumerate() {
            let rate = -a * dir;
            if rate.abs() < PIVOT_TOL {
                continue;
            }
            let j = self.basis[r];
            let (v, lo, hi) = (self.x[j], self.lo[j], self.hi[j]);
            let (dist, upper) = if rate < 0.0 {
                if v > hi + FEAS_TOL {
                    (v - hi, true)
                } else if lo.is_finite() && v >= lo - FEAS_TOL {
                    (v - lo, false)
                } else {
                    continue;
                }
            } else if v < lo - FEAS_TOL {
                (lo - v, false)
            } else if hi.is_finite() && v <= hi + FEAS_TOL {
                (hi - v, true)
            } else {
                continue;
            };
            candidates.push((r, dist.max(0.0) / rate.abs(), rate.abs(), upper));
        }
        if candidates.is_empty() {
            return None;
        }
        if bland {
            let min = candidates.iter().map(|c| c.1).fold(f64::INFINITY, f64::min);
            return candidates
                .iter()
                .filter(|c| c.1 <= min + 1e-12)
                .min_by_key(|c| self.basis[c.0])
                .map(|c| (c.0, c.1, c.3));
        }
        let relaxed = candidates
            .iter()
            .map(|c| c.1 + FEAS_TOL / c.2)
            .fold(f64::INFINITY, f64::min);
        candidates
            .iter()
            .filter(|c| c.1 <= relaxed)
            .max_by(|a, b| a.2.total_cmp(&b.2).then(b.0.cmp(&a.0)))
            .map(|c| (c.0, c.1, c.3))
    }

    /// Dual simplex from a dual-feasible basis. `Ok(None)` means the basis
    /// was not dual feasible or the method stalled; the caller then falls
    /// back to the primal driver from the current state.
    fn run_dual(&mut self) -> Result<Option<LpOutcome>> {
        let n_total = self.status.len();
        let budget = 20 * self.m + 500;
        let mut steps = 0usize;
        let mut verified = false;
        loop {
            steps += 1;
            if steps > budget {
                return Ok(None);
            }
            self.tick()?;
            self.maybe_refactor()?;
            let basic_cost: Vec<f64> = self.basis.iter().map(|&j| self.cost(j)).collect();
            let y = self.duals(&basic_cost);
            let mut d = vec![0.0; n_total];
            for j in 0..n_total {
                let s = self.status[j];
                if s == Status::Basic || self.lo[j] == self.hi[j] {
                    continue;
                }
                let dj = self.reduced_cost(j, self.cost(j), &y);
                let infeasible = match s {
                    Status::Lower => dj < -1e3 * DUAL_TOL,
                    Status::Upper => dj > 1e3 * DUAL_TOL,
                    Status::Free => dj.abs() > 1e3 * DUAL_TOL,
                    Status::Basic => false,
                };
                if infeasible {
                    return Ok(None);
                }
                d[j] = dj;
            }

            let mut leave: Option<(usize, f64)> = None;
            for r in 0..self.m {
                let inf = self.infeasibility(self.basis[r]);
                if inf > 0.0 && leave.map_or(true, |(_, best)| inf > best) {
                    leave = Some((r, inf));
                }
            }
            let Some((r, _)) = leave else {
                if !verified {
                    verified = true;
                    self.refactor()?;
                    self.recompute_basic();
                    continue;
                }
                return Ok(Some(self.outcome(LpStatus::Optimal)));
            };
            verified = false;
            let jr = self.basis[r];
            let below = self.x[jr] < self.lo[jr];
            let target = if below { self.lo[jr] } else { self.hi[jr] };

            let mut candidates: Vec<(usize, f64, f64)> = Vec::new();
            for j in 0..n_total {
                let s = self.status[j];
                if s == Status::Basic || self.lo[j] == self.hi[j] {
                    continue;
                }
                let a = self.row_dot(r, j);
                if a.abs() < PIVOT_TOL {
                    continue;
                }
                let eligible = match (s, below) {
                    (Status::Lower, true) => a < 0.0,
                    (Status::Upper, true) => a > 0.0,
                    (Status::Lower, false) => a > 0.0,
                    (Status::Upper, false) => a < 0.0,
                    (Status::Free, _) => true,
                    (Status::Basic, _) => false,
                };
                if eligible {
                    candidates.push((j, d[j].abs() / a.abs(), a));
                }
            }
            if candidates.is_empty() {
                // Dual ray: confirm on a fresh factorization before trusting it.
                if self.since_refactor > 0 {
                    self.refactor()?;
                    self.recompute_basic();
                    continue;
                }
                return Ok(Some(self.outcome(LpStatus::Infeasible)));
            }
            let relaxed = candidates
                .iter()
                .map(|c| c.1 + DUAL_TOL / c.2.abs())
                .fold(f64::INFINITY, f64::min);
            let &(q, _, a_rq) = candidates
                .iter()
                .filter(|c| c.1 <= relaxed)
                .max_by(|a, b| a.2.abs().total_cmp(&b.2.abs()).then(b.0.cmp(&a.0)))
                .expect("nonempty");

            let alpha = self.ftran(q);
            if (alpha[r] - a_rq).abs() > 1e-7 * (1.0 + a_rq.abs()) {
                if self.since_refactor == 0 {
                    return Ok(None);
                }
                self.refactor()?;
                self.recompute_basic();
                continue;
            }
            let delta = (self.x[jr] - target) / alpha[r];
            self.apply_pivot(q, delta, r, !below, &alpha);
        }
    }
}

fn nonbasic_status(lo: f64, hi: f64, preferred: Status) -> Status {
    match preferred {
        Status::Upper if hi.is_finite() => Status::Upper,
        _ if lo.is_finite() => Status::Lower,
        _ if hi.is_finite() => Status::Upper,
        _ => Status::Free,
    }
}

fn nonbasic_value(s: Status, lo: f64, hi: f64) -> f64 {
    match s {
        Status::Lower => lo,
        Status::Upper => hi,
        _ => 0.0,
    }
}

enum ColumnIter<'a> {
    Structural(std::slice::Iter<'a, (usize, f64)>),
    Row(Option<usize>),
}

impl Iterator for ColumnIter<'_> {
    type Item = (usize, f64);

    fn next(&mut self) -> Option<(usize, f64)> {
        match self {
            ColumnIter::Structural(it) => it.next().copied(),
            ColumnIter::Row(r) => r.take().map(|i| (i, -1.0)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::milp::{MilpModel, Sense, VarKind};
    use rand::Rng;

    const INF: f64 = f64::INFINITY;

    #[test]
    fn one_variable_lp() {
        let mut m = MilpModel::new();
        let x = m.add_var("x", VarKind::Continuous, -INF, INF);
        m.add_constraint([(x, 1.0)], Sense::Ge, 3.0);
        m.add_constraint([(x, 1.0)], Sense::Le, 5.0);
        m.set_objective([(x, 1.0)], ObjSense::Minimize, 0.0);
        let s = solve_lp(&m, &[]).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.obj - 3.0).abs() < 1e-9);
        assert!((s.x[0] - 3.0).abs() < 1e-9);
    }

    #[test]
    fn unit_simplex_max() {
        let mut m = MilpModel::new();
        let x = m.add_var("x", VarKind::Continuous, 0.0, INF);
        let y = m.add_var("y", VarKind::Continuous, 0.0, INF);
        m.add_constraint([(x, 1.0), (y, 1.0)], Sense::Le, 1.0);
        m.set_objective([(x, 1.0), (y, 1.0)], ObjSense::Maximize, 0.0);
        let s = solve_lp(&m, &[]).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.obj - 1.0).abs() < 1e-9);
    }

    #[test]
    fn detects_infeasible_and_unbounded() {
        let mut m = MilpModel::new();
        let x = m.add_var("x", VarKind::Continuous, 0.0, 1.0);
        m.add_constraint([(x, 1.0)], Sense::Ge, 2.0);
        assert_eq!(solve_lp(&m, &[]).unwrap().status, LpStatus::Infeasible);

        let mut m = MilpModel::new();
        let x = m.add_var("x", VarKind::Continuous, 0.0, INF);
        let y = m.add_var("y", VarKind::Continuous, -INF, INF);
        m.add_constraint([(x, 1.0), (y, -1.0)], Sense::Le, 1.0);
        m.set_objective([(x, 1.0)], ObjSense::Maximize, 0.0);
        assert_eq!(solve_lp(&m, &[]).unwrap().status, LpStatus::Unbounded);
    }

    #[test]
    fn extra_bounds_are_intersected() {
        let mut m = MilpModel::new();
        let x = m.add_var("x", VarKind::Continuous, 0.0, 10.0);
        m.set_objective([(x, 1.0)], ObjSense::Maximize, 1.0);
        let s = solve_lp(&m, &[(x, 2.0, 4.0)]).unwrap();
        assert!((s.obj - 5.0).abs() < 1e-12);
        let s = solve_lp(&m, &[(x, 5.0, 4.0)]).unwrap();
        assert_eq!(s.status, LpStatus::Infeasible);
    }

    #[test]
    fn no_constraints() {
        let mut m = MilpModel::new();
        let x = m.add_var("x", VarKind::Continuous, -2.0, 3.0);
        let y = m.add_var("y", VarKind::Continuous, -INF, 1.0);
        m.set_objective([(x, 1.0), (y, -2.0)], ObjSense::Minimize, 0.0);
        let s = solve_lp(&m, &[]).unwrap();
        assert!((s.obj - (-4.0)).abs() < 1e-12);
    }

    #[test]
    fn equality_and_free_variables() {
        // min |a| + |b|  with a + 2 b = 4 via free a, b and epigraph vars.
        let mut m = MilpModel::new();
        let a = m.add_var("a", VarKind::Continuous, -INF, INF);
        let b = m.add_var("b", VarKind::Continuous, -INF, INF);
        let sa = m.add_var("sa", VarKind::Continuous, -INF, INF);
        let sb = m.add_var("sb", VarKind::Continuous, -INF, INF);
        m.add_constraint([(a, 1.0), (b, 2.0)], Sense::Eq, 4.0);
        m.add_constraint([(sa, 1.0), (a, -1.0)], Sense::Ge, 0.0);
        m.add_constraint([(sa, 1.0), (a, 1.0)], Sense::Ge, 0.0);
        m.add_constraint([(sb, 1.0), (b, -1.0)], Sense::Ge, 0.0);
        m.add_constraint([(sb, 1.0), (b, 1.0)], Sense::Ge, 0.0);
        m.set_objective([(sa, 1.0), (sb, 1.0)], ObjSense::Minimize, 0.0);
        let s = solve_lp(&m, &[]).unwrap();
        assert!((s.obj - 2.0).abs() < 1e-9, "{}", s.obj);
    }

    /// Enumerates every vertex of `{x : A x ≤ b, 0 ≤ x ≤ u}` by choosing `n`
    /// tight constraints and solving the square system by Gaussian
    /// elimination.
    fn vertex_oracle(a: &[Vec<f64>], b: &[f64], upper: f64, c: &[f64]) -> Option<f64> {
        let n = c.len();
        let mut rows: Vec<(Vec<f64>, f64)> = a.iter().cloned().zip(b.iter().copied()).collect();
        for j in 0..n {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            rows.push((e.clone(), upper));
            rows.push((e.iter().map(|v| -v).collect(), 0.0));
        }
        let total = rows.len();
        let mut best: Option<f64> = None;
        let mut idx: Vec<usize> = (0..n).collect();
        loop {
            let mut mat: Vec<Vec<f64>> = idx.iter().map(|&i| {
                let mut r = rows[i].0.clone();
                r.push(rows[i].1);
                r
            }).collect();
            if let Some(x) = gauss(&mut mat, n) {
                let feasible = rows.iter().all(|(r, rhs)| {
                    r.iter().zip(&x).map(|(p, q)| p * q).sum::<f64>() <= rhs + 1e-9
                });
                if feasible {
                    let v: f64 = c.iter().zip(&x).map(|(p, q)| p * q).sum();
                    best = Some(best.map_or(v, |bv: f64| bv.min(v)));
                }
            }
            // next combination
            let mut k = n;
            loop {
                if k == 0 {
                    return best;
                }
                k -= 1;
                if idx[k] < total - n + k {
                    idx[k] += 1;
                    for t in k + 1..n {
                        idx[t] = idx[t - 1] + 1;
                    }
                    break;
                }
            }
        }
    }

    fn gauss(mat: &mut [Vec<f64>], n: usize) -> Option<Vec<f64>> {
        for p in 0..n {
            let (best, val) = (p..n)
                .map(|r| (r, mat[r][p].abs()))
                .max_by(|a, b| a.1.total_cmp(&b.1))?;
            if val < 1e-10 {
                return None;
            }
            mat.swap(p, best);
            for r in 0..n {
                if r != p {
                    let f = mat[r][p] / mat[p][p];
                    for c in p..=n {
                        mat[r][c] -= f * mat[p][c];
                    }
                }
            }
        }
        Some((0..n).map(|i| mat[i][n] / mat[i][i]).collect())
    }

    #[test]
    fn random_lps_match_vertex_enumeration() {
        let mut rng = crate::synth::rng(42);
        let mut checked = 0;
        while checked < 10 {
            let a: Vec<Vec<f64>> = (0..8)
                .map(|_| (0..5).map(|_| rng.gen_range(-1.0..1.0)).collect())
                .collect();
            let b: Vec<f64> = (0..8).map(|_| rng.gen_range(0.0..2.0)).collect();
            let c: Vec<f64> = (0..5).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let mut m = MilpModel::new();
            let vars: Vec<_> = (0..5).map(|j| m.add_var(format!("x{j}"), VarKind::Continuous, 0.0, 3.0)).collect();
            for (row, rhs) in a.iter().zip(&b) {
                m.add_constraint(vars.iter().copied().zip(row.iter().copied()), Sense::Le, *rhs);
            }
            m.set_objective(vars.iter().copied().zip(c.iter().copied()), ObjSense::Minimize, 0.0);
            let Some(want) = vertex_oracle(&a, &b, 3.0, &c) else { continue };
            let got = solve_lp(&m, &[]).unwrap();
            assert_eq!(got.status, LpStatus::Optimal);
            assert!((got.obj - want).abs() < 1e-7, "{} vs {}", got.obj, want);
            assert!(m.violation(&got.x).within(1e-7, 1.0));
            checked += 1;
        }
    }

    #[test]
    fn warm_start_after_bound_change_matches_cold() {
        let mut rng = crate::synth::rng(9);
        for _ in 0..20 {
            let mut m = MilpModel::new();
            let vars: Vec<_> = (0..6).map(|j| m.add_var(format!("x{j}"), VarKind::Continuous, 0.0, 1.0)).collect();
            for _ in 0..5 {
                let row: Vec<_> = vars.iter().map(|&v| (v, rng.gen_range(-1.0..1.0))).collect();
                m.add_constraint(row, Sense::Le, rng.gen_range(0.0..1.0));
            }
            m.set_objective(vars.iter().map(|&v| (v, rng.gen_range(-1.0..1.0))), ObjSense::Minimize, 0.0);
            let form = StandardForm::new(&m);
            let (lo, hi) = form.bounds(&m);
            let root = form.solve(&lo, &hi, None).unwrap();
            assert_eq!(root.status, LpStatus::Optimal);
            let mut hi2 = hi.clone();
            let k = rng.gen_range(0..6);
            hi2[k] = root.x[k] * 0.5;
            let warm = form.solve(&lo, &hi2, root.warm.as_ref()).unwrap();
            let cold = form.solve(&lo, &hi2, None).unwrap();
            assert_eq!(warm.status, cold.status);
            if warm.status == LpStatus::Optimal {
                assert!((warm.obj - cold.obj).abs() < 1e-8);
            }
            // Also without the cached inverse, forcing a refactorization.
            let mut no_inv = root.warm.clone().unwrap();
            no_inv.drop_inverse();
            let again = form.solve(&lo, &hi2, Some(&no_inv)).unwrap();
            assert_eq!(again.status, cold.status);
            if again.status == LpStatus::Optimal {
                assert!((again.obj - cold.obj).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn degenerate_lp_terminates() {
        // Many redundant constraints through the optimal vertex.
        let mut m = MilpModel::new();
        let x = m.add_var("x", VarKind::Continuous, 0.0, INF);
        let y = m.add_var("y", VarKind::Continuous, 0.0, INF);
        for k in 1..30 {
            let t = k as f64 / 30.0;
            m.add_constraint([(x, t), (y, 1.0 - t)], Sense::Le, 0.0);
        }
        m.add_constraint([(x, 1.0), (y, 1.0)], Sense::Le, 1.0);
        m.set_objective([(x, 1.0), (y, 1.0)], ObjSense::Maximize, 0.0);
        let s = solve_lp(&m, &[]).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert!(s.obj.abs() < 1e-9);
    }
}
