//! Best-bound branch-and-bound over the integer variables of a [`MilpModel`].

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::sync::atomic::{AtomicBool, Ordering as AtomicOrdering};
use std::sync::Mutex;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

use super::lp::{LpStatus, StandardForm, WarmStart};
use super::{relative_gap, BnbConfig, MilpModel, SolveReport, SolveStatus, VarKind, Violation};

/// Open-node memory we are willing to spend on cached basis inverses.
const INVERSE_CACHE_BYTES: usize = 256 << 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Source {
    Milp,
    Adjoint,
    Hint,
}

impl Source {
    pub fn as_str(self) -> &'static str {
        match self {
            Source::Milp => "milp",
            Source::Adjoint => "adjoint",
            Source::Hint => "hint",
        }
    }
}

/// One change of incumbent or bound, in the model's objective sense.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapEvent {
    pub time: f64,
    pub incumbent: f64,
    pub relaxed_bound: f64,
    pub gap: f64,
    pub source: Source,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Rejection {
    /// The candidate breaks a constraint, a bound or integrality.
    Infeasible { violation: Violation },
    /// Feasible, but not better than the current incumbent.
    NonImproving { objective: f64, incumbent: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub enum Injection {
    Accepted { objective: f64, gap: f64 },
    Rejected(Rejection),
}

impl Injection {
    pub fn accepted(&self) -> bool {
        matches!(self, Injection::Accepted { .. })
    }
}

#[derive(Debug)]
struct PoolState {
    incumbent: Option<Vec<f64>>,
    /// Minimization-sense values.
    inc_min: f64,
    bound_min: f64,
    first_incumbent: Option<f64>,
    trace: Vec<GapEvent>,
}

/// Incumbent store shared between a running branch-and-bound and any other
/// worker that produces feasible points.
///
/// All methods take `&self`; the pool can be shared by reference across
/// scoped threads.
#[derive(Debug)]
pub struct IncumbentPool {
    model: MilpModel,
    sign: f64,
    lp_tol: f64,
    int_tol: f64,
    start: Instant,
    stop: AtomicBool,
    state: Mutex<PoolState>,
}

impl IncumbentPool {
    pub fn new(model: &MilpModel, config: &BnbConfig) -> Self {
        let sign = match model.objective().sense {
            super::ObjSense::Minimize => 1.0,
            super::ObjSense::Maximize => -1.0,
        };
        Self {
            model: model.clone(),
            sign,
            lp_tol: config.lp_tol,
            int_tol: config.integrality_tol,
            start: Instant::now(),
            stop: AtomicBool::new(false),
            state: Mutex::new(PoolState {
                incumbent: None,
                inc_min: f64::INFINITY,
                bound_min: f64::NEG_INFINITY,
                first_incumbent: None,
                trace: Vec::new(),
            }),
        }
    }

    pub fn elapsed(&self) -> f64 {
        self.start.elapsed().as_secs_f64()
    }

    /// Offers an externally computed point, e.g. from gradient descent.
    pub fn inject(&self, candidate: &[f64]) -> Result<Injection> {
        self.inject_from(candidate, Source::Adjoint)
    }

    pub fn inject_from(&self, candidate: &[f64], source: Source) -> Result<Injection> {
        check_dim("injected incumbent", self.model.num_vars(), candidate.len())?;
        let violation = self.model.violation(candidate);
        if !violation.within(self.lp_tol, self.int_tol) {
            return Ok(Injection::Rejected(Rejection::Infeasible { violation }));
        }
        Ok(self.offer(candidate, source))
    }

    fn offer(&self, x: &[f64], source: Source) -> Injection {
        let objective = self.model.objective_value(x);
        let value = self.sign * objective;
        let mut st = self.state.lock().expect("pool lock");
        if st.incumbent.is_some() && value >= st.inc_min - 1e-12 * (1.0 + st.inc_min.abs()) {
            return Injection::Rejected(Rejection::NonImproving {
                objective,
                incumbent: self.sign * st.inc_min,
            });
        }
        st.incumbent = Some(x.to_vec());
        st.inc_min = value;
        if st.bound_min > value {
            st.bound_min = value;
        }
        let t = self.elapsed();
        st.first_incumbent.get_or_insert(t);
        let gap = self.push_event(&mut st, t, source);
        Injection::Accepted { objective, gap }
    }

    fn push_event(&self, st: &mut PoolState, time: f64, source: Source) -> f64 {
        let incumbent = self.sign * st.inc_min;
        let relaxed_bound = self.sign * st.bound_min;
        let gap = relative_gap(incumbent, relaxed_bound);
        st.trace.push(GapEvent {
            time,
            incumbent: if st.incumbent.is_some() { incumbent } else { f64::NAN },
            relaxed_bound,
            gap,
            source,
        });
        gap
    }

    /// Raises the proven bound (minimization sense internally).
    fn raise_bound(&self, bound_min: f64) {
        let mut st = self.state.lock().expect("pool lock");
        let capped = bound_min.min(st.inc_min);
        if capped > st.bound_min + 1e-12 * (1.0 + capped.abs()) || st.bound_min == f64::NEG_INFINITY && capped > st.bound_min {
            st.bound_min = capped;
            let t = self.elapsed();
            self.push_event(&mut st, t, Source::Milp);
        }
    }

    fn incumbent_min(&self) -> f64 {
        self.state.lock().expect("pool lock").inc_min
    }

    fn bound_min(&self) -> f64 {
        self.state.lock().expect("pool lock").bound_min
    }

    /// Best point and its objective.
    pub fn best(&self) -> Option<(Vec<f64>, f64)> {
        let st = self.state.lock().expect("pool lock");
        st.incumbent.clone().map(|x| (x, self.sign * st.inc_min))
    }

    pub fn gap(&self) -> f64 {
        let st = self.state.lock().expect("pool lock");
        if st.incumbent.is_none() {
            return f64::INFINITY;
        }
        relative_gap(self.sign * st.inc_min, self.sign * st.bound_min)
    }

    pub fn relaxed_bound(&self) -> f64 {
        self.sign * self.bound_min()
    }

    pub fn first_incumbent_time(&self) -> Option<f64> {
        self.state.lock().expect("pool lock").first_incumbent
    }

    pub fn trace(&self) -> Vec<GapEvent> {
        self.state.lock().expect("pool lock").trace.clone()
    }

    /// Asks a running solve to return at its next node.
    pub fn request_stop(&self) {
        self.stop.store(true, AtomicOrdering::Relaxed);
    }

    fn stop_requested(&self) -> bool {
        self.stop.load(AtomicOrdering::Relaxed)
    }
}

struct Node {
    /// Minimization-sense lower bound inherited from the parent's LP.
    bound: f64,
    depth: usize,
    seq: u64,
    changes: Vec<(usize, f64, f64)>,
    warm: Option<WarmStart>,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Node {}

impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Node {
    // BinaryHeap is a max-heap: the "greatest" node is the one with the
    // smallest bound, then the deepest, then the oldest.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .bound
            .total_cmp(&self.bound)
            .then(self.depth.cmp(&other.depth))
            .then(other.seq.cmp(&self.seq))
    }
}

/// Solves `model` to within `config.gap_tol`, optionally seeded with a
/// feasible point.
pub fn solve_milp(model: &MilpModel, config: &BnbConfig, incumbent_hint: Option<&[f64]>) -> Result<SolveReport> {
    let pool = IncumbentPool::new(model, config);
    solve_milp_with_pool(model, config, incumbent_hint, &pool)
}

/// Like [`solve_milp`], reading and publishing incumbents through `pool`, so
/// that another thread may inject candidates while the search runs.
pub fn solve_milp_with_pool(
    model: &MilpModel,
    config: &BnbConfig,
    incumbent_hint: Option<&[f64]>,
    pool: &IncumbentPool,
) -> Result<SolveReport> {
    model.validate()?;
    config.validate()?;
    let start = Instant::now();
    if let Some(hint) = incumbent_hint {
        match pool.inject_from(hint, Source::Hint)? {
            Injection::Rejected(Rejection::Infeasible { violation }) => {
                return Err(Error::BadHint(format!(
                    "constraint violation {:.3e}, bound violation {:.3e}, integrality violation {:.3e}",
                    violation.constraint, violation.bound, violation.integrality
                )));
            }
            _ => {}
        }
    }

    let form = StandardForm::new(model);
    let (mut root_lo, mut root_hi) = form.bounds(model);
    let integer: Vec<usize> = model
        .vars()
        .iter()
        .enumerate()
        .filter(|(_, v)| v.kind.is_integral())
        .map(|(j, _)| j)
        .collect();
    for &j in &integer {
        root_lo[j] = (root_lo[j] - config.integrality_tol).ceil();
        root_hi[j] = (root_hi[j] + config.integrality_tol).floor();
    }

    let mut search = Search {
        model,
        form: &form,
        config,
        pool,
        start,
        root_lo,
        root_hi,
        integer,
        nodes: 0,
        seq: 0,
        pruned_floor: f64::INFINITY,
    };
    search.run()
}

struct Search<'a> {
    model: &'a MilpModel,
    form: &'a StandardForm,
    config: &'a BnbConfig,
    pool: &'a IncumbentPool,
    start: Instant,
    root_lo: Vec<f64>,
    root_hi: Vec<f64>,
    integer: Vec<usize>,
    nodes: u64,
    seq: u64,
    pruned_floor: f64,
}

enum Stop {
    Exhausted,
    GapClosed,
    TimeLimit,
    Interrupted,
}

impl Search<'_> {
    fn prune_tol(&self, inc: f64) -> f64 {
        self.config.gap_tol * inc.abs().max(1e-10)
    }

    fn run(&mut self) -> Result<SolveReport> {
        let mut heap = BinaryHeap::new();
        let root = Node {
            bound: f64::NEG_INFINITY,
            depth: 0,
            seq: 0,
            changes: Vec::new(),
            warm: None,
        };
        match self.process(root, &mut heap, true)? {
            Some(LpStatus::Infeasible) => return Ok(self.report(SolveStatus::Infeasible)),
            Some(LpStatus::Unbounded) => return Ok(self.report(SolveStatus::Unbounded)),
            _ => {}
        }

        let stop = loop {
            if self.pool.stop_requested() {
                break Stop::Interrupted;
            }
            if self.start.elapsed().as_secs_f64() >= self.config.time_limit {
                break Stop::TimeLimit;
            }
            if self.config.node_limit.is_some_and(|limit| self.nodes >= limit) {
                break Stop::Interrupted;
            }
            let inc = self.pool.incumbent_min();
            let Some(node) = heap.pop() else {
                self.pool.raise_bound(self.pruned_floor.min(inc));
                break Stop::Exhausted;
            };
            self.pool.raise_bound(node.bound.min(self.pruned_floor).min(inc));
            if self.pool.best().is_some() && self.pool.gap() <= self.config.gap_tol {
                heap.push(node);
                break Stop::GapClosed;
            }
            if node.bound >= inc - self.prune_tol(inc) {
                self.pruned_floor = self.pruned_floor.min(node.bound);
                continue;
            }
            self.process(node, &mut heap, false)?;
        };

        if matches!(stop, Stop::TimeLimit | Stop::Interrupted) {
            let open = heap.peek().map_or(f64::INFINITY, |n| n.bound);
            self.pool
                .raise_bound(open.min(self.pruned_floor).min(self.pool.incumbent_min()));
        }
        let has_inc = self.pool.best().is_some();
        let status = match stop {
            Stop::Exhausted if has_inc => SolveStatus::Optimal,
            Stop::Exhausted => SolveStatus::Infeasible,
            Stop::GapClosed => SolveStatus::Optimal,
            _ if has_inc && self.pool.gap() <= self.config.gap_tol => SolveStatus::Optimal,
            Stop::TimeLimit => SolveStatus::TimeLimit,
            Stop::Interrupted if has_inc => SolveStatus::Feasible,
            Stop::Interrupted => SolveStatus::TimeLimit,
        };
        Ok(self.report(status))
    }

    /// Solves one node's LP and either prunes, records an incumbent or
    /// branches. Returns the LP status for the root.
    fn process(&mut self, node: Node, heap: &mut BinaryHeap<Node>, is_root: bool) -> Result<Option<LpStatus>> {
        let mut lo = self.root_lo.clone();
        let mut hi = self.root_hi.clone();
        for &(j, l, h) in &node.changes {
            lo[j] = l;
            hi[j] = h;
        }
        self.nodes += 1;
        let out = match self.form.solve(&lo, &hi, node.warm.as_ref()) {
            Ok(out) => out,
            Err(_) if node.warm.is_some() => self.form.solve(&lo, &hi, None)?,
            Err(e) => return Err(e),
        };
        match out.status {
            LpStatus::Optimal => {}
            status if is_root => return Ok(Some(status)),
            LpStatus::Infeasible => return Ok(None),
            LpStatus::Unbounded => {
                return Err(Error::Numerical("unbounded LP below a bounded root".into()));
            }
        }
        // The pool works in minimization sense with the offset included.
        let lp_bound = (out.obj + self.form.sign * self.form.offset).max(node.bound);
        if is_root {
            self.pool.raise_bound(lp_bound.min(self.pool.incumbent_min()));
        }
        let inc = self.pool.incumbent_min();
        if lp_bound >= inc - self.prune_tol(inc) {
            self.pruned_floor = self.pruned_floor.min(lp_bound);
            return Ok(Some(LpStatus::Optimal));
        }

        let tol = self.config.integrality_tol;
        let mut branch: Option<(usize, f64)> = None;
        for &j in &self.integer {
            let v = out.x[j];
            let frac = (v - v.floor()).min(v.ceil() - v);
            if frac > tol && branch.map_or(true, |(_, best)| frac > best) {
                branch = Some((j, frac));
            }
        }

        let Some((j, _)) = branch else {
            let _ = self.pool.inject_from(&out.x, Source::Milp)?;
            return Ok(Some(LpStatus::Optimal));
        };

        let v = out.x[j];
        let mut warm = out.warm;
        if let Some(w) = warm.as_mut() {
            if (heap.len() + 2) * w.inverse_bytes() / 2 > INVERSE_CACHE_BYTES {
                w.drop_inverse();
            }
        }
        let (down_hi, up_lo) = match self.model.vars()[j].kind {
            VarKind::Binary | VarKind::Integer => (v.floor(), v.ceil()),
            VarKind::Continuous => unreachable!("only integer variables branch"),
        };
        for (l, h) in [(lo[j], down_hi), (up_lo, hi[j])] {
            if l > h {
                continue;
            }
            self.seq += 1;
            let mut changes = node.changes.clone();
            changes.push((j, l, h));
            heap.push(Node {
                bound: lp_bound,
                depth: node.depth + 1,
                seq: self.seq,
                changes,
                warm: warm.clone(),
            });
        }
        Ok(Some(LpStatus::Optimal))
    }

    fn report(&self, status: SolveStatus) -> SolveReport {
        let best = self.pool.best();
        let (incumbent, incumbent_obj) = match best {
            Some((x, obj)) => (Some(x), obj),
            None => (None, f64::NAN),
        };
        let relaxed_bound = match status {
            SolveStatus::Infeasible => f64::NAN,
            _ => self.pool.relaxed_bound(),
        };
        SolveReport {
            status,
            gap: if incumbent.is_some() {
                relative_gap(incumbent_obj, relaxed_bound)
            } else {
                f64::INFINITY
            },
            incumbent,
            incumbent_obj,
            relaxed_bound,
            nodes_explored: self.nodes,
            wall_time: self.start.elapsed().as_secs_f64(),
            first_incumbent_time: self.pool.first_incumbent_time(),
        }
    }
}
