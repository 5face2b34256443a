//! Brute-force references for validating the MILP pipeline.
//!
//! Nothing here uses big-M constraints or branch-and-bound. Each activation
//! pattern of the unstable ReLUs makes the network affine in its input, so
//! the inverse problem restricted to that pattern is a small LP.

use crate::bounds::{interval_bounds, Stability};
use crate::error::{check_dim, Error, Result};
use crate::milp::{solve_lp, LpStatus, MilpModel, ObjSense, Sense, VarId, VarKind};
use crate::network::{Activation, Network};
use crate::problem::{DesignConstraints, InverseProblem};
use crate::synth::{rng, uniform_vec};

pub const MAX_UNSTABLE: usize = 16;
pub const MAX_SUBSETS: u64 = 10_000;
pub const MAX_VERTEX_DIM: usize = 12;

#[derive(Debug, Clone, PartialEq)]
pub struct PatternOptimum {
    /// Sum over targets of the best L1 distance.
    pub objective: f64,
    /// One optimal design per target.
    pub designs: Vec<Vec<f64>>,
    pub unstable: usize,
    pub feasible_patterns: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionOptimum {
    /// Inputs allowed to be nonzero, ascending.
    pub subset: Vec<usize>,
    pub objective: f64,
    pub designs: Vec<Vec<f64>>,
}

/// `coeffs · x0 + constant`.
#[derive(Debug, Clone)]
struct Affine {
    coeffs: Vec<f64>,
    constant: f64,
}

/// Global optimum of the continuous inverse problem by pattern enumeration.
/// Selection budgets are ignored; see [`enumerate_selection`].
pub fn enumerate_patterns(net: &Network, problem: &InverseProblem) -> Result<PatternOptimum> {
    enumerate_over(net, problem, &problem.lower, &problem.upper)
}

fn enumerate_over(net: &Network, problem: &InverseProblem, lower: &[f64], upper: &[f64]) -> Result<PatternOptimum> {
    check_dim("design lower bounds", net.input_dim(), lower.len())?;
    check_dim("design upper bounds", net.input_dim(), upper.len())?;
    if problem.has_integers() {
        return Err(Error::InvalidProblem("pattern enumeration handles continuous designs only".into()));
    }
    if problem.targets.is_empty() {
        return Err(Error::InvalidProblem("at least one target is required".into()));
    }
    let table = interval_bounds(net, lower, upper)?;
    let hidden = net.depth() - 1;
    let unstable: Vec<(usize, usize)> = (0..hidden)
        .flat_map(|l| (0..net.layers()[l].output_dim()).map(move |k| (l, k)))
        .filter(|&(l, k)| table.node(l, k).stability == Stability::Unstable)
        .collect();
    if unstable.len() > MAX_UNSTABLE {
        return Err(Error::Limit(format!(
            "{} unstable ReLUs exceed the enumeration limit of {MAX_UNSTABLE}",
            unstable.len()
        )));
    }

    let mut objective = 0.0;
    let mut designs = Vec::with_capacity(problem.targets.len());
    let mut feasible_patterns = 0;
    for target in &problem.targets {
        check_dim("target", net.output_dim(), target.len())?;
        let mut best: Option<(f64, Vec<f64>)> = None;
        for mask in 0u64..1 << unstable.len() {
            let active = |l: usize, k: usize| match table.node(l, k).stability {
                Stability::StablyActive => true,
                Stability::StablyInactive => false,
                Stability::Unstable => {
                    let i = unstable.iter().position(|&p| p == (l, k)).expect("listed");
                    mask >> i & 1 == 1
                }
            };
            if let Some((obj, x0)) = pattern_lp(net, problem, lower, upper, target, &active)? {
                feasible_patterns += 1;
                if best.as_ref().map_or(true, |(b, _)| obj < *b) {
                    best = Some((obj, x0));
                }
            }
        }
        let (obj, x0) = best.ok_or_else(|| Error::InvalidProblem("no activation pattern is feasible".into()))?;
        objective += obj;
        designs.push(x0);
    }
    Ok(PatternOptimum {
        objective,
        designs,
        unstable: unstable.len(),
        feasible_patterns,
    })
}

/// Minimum L1 distance restricted to one activation pattern, or `None` if no
/// design in the region produces that pattern.
fn pattern_lp(
    net: &Network,
    problem: &InverseProblem,
    lower: &[f64],
    upper: &[f64],
    target: &[f64],
    active: &dyn Fn(usize, usize) -> bool,
) -> Result<Option<(f64, Vec<f64>)>> {
    let m = net.input_dim();
    let mut lp = MilpModel::new();
    let x0: Vec<VarId> = (0..m)
        .map(|i| lp.add_var(format!("x{i}"), VarKind::Continuous, lower[i], upper[i]))
        .collect();
    for c in &problem.extra_constraints {
        lp.add_constraint(x0.iter().copied().zip(c.coeffs.iter().copied()), c.sense, c.rhs);
    }
    let terms = |a: &Affine| -> Vec<(VarId, f64)> { x0.iter().copied().zip(a.coeffs.iter().copied()).collect() };

    let mut post: Vec<Affine> = (0..m)
        .map(|i| {
            let mut coeffs = vec![0.0; m];
            coeffs[i] = 1.0;
            Affine { coeffs, constant: 0.0 }
        })
        .collect();
    for (l, layer) in net.layers().iter().enumerate() {
        let mut next = Vec::with_capacity(layer.output_dim());
        for k in 0..layer.output_dim() {
            let mut pre = Affine {
                coeffs: vec![0.0; m],
                constant: layer.bias()[k],
            };
            for (w, p) in layer.weights().row(k).iter().zip(&post) {
                for (c, pc) in pre.coeffs.iter_mut().zip(&p.coeffs) {
                    *c += w * pc;
                }
                pre.constant += w * p.constant;
            }
            match layer.activation() {
                Activation::Linear => next.push(pre),
                Activation::Relu if active(l, k) => {
                    lp.add_constraint(terms(&pre), Sense::Ge, -pre.constant);
                    next.push(pre);
                }
                Activation::Relu => {
                    lp.add_constraint(terms(&pre), Sense::Le, -pre.constant);
                    next.push(Affine {
                        coeffs: vec![0.0; m],
                        constant: 0.0,
                    });
                }
            }
        }
        post = next;
    }
    let mut objective = Vec::new();
    for (y, &t) in post.iter().zip(target) {
        let s = lp.add_var("s", VarKind::Continuous, 0.0, f64::INFINITY);
        let mut ge = terms(y);
        ge.iter_mut().for_each(|(_, c)| *c = -*c);
        ge.push((s, 1.0));
        lp.add_constraint(ge, Sense::Ge, y.constant - t);
        let mut le = terms(y);
        le.push((s, 1.0));
        lp.add_constraint(le, Sense::Ge, t - y.constant);
        objective.push((s, 1.0));
    }
    lp.set_objective(objective, ObjSense::Minimize, 0.0);
    let sol = solve_lp(&lp, &[])?;
    Ok(match sol.status {
        LpStatus::Optimal => Some((sol.obj, x0.iter().map(|v| sol.x[v.0]).collect())),
        LpStatus::Infeasible => None,
        LpStatus::Unbounded => return Err(Error::Internal("pattern LP is unbounded".into())),
    })
}

/// Best design when at most `budget` inputs may be nonzero, shared across
/// targets, by enumerating every support of size `budget`.
pub fn enumerate_selection(net: &Network, problem: &InverseProblem, budget: usize) -> Result<SelectionOptimum> {
    let k0 = net.input_dim();
    check_dim("design lower bounds", k0, problem.lower.len())?;
    if budget < 1 || budget > k0 {
        return Err(Error::InvalidProblem(format!("selection budget {budget} must lie in 1..={k0}")));
    }
    let count = binomial(k0 as u64, budget as u64);
    if count > MAX_SUBSETS {
        return Err(Error::Limit(format!("{count} subsets exceed the enumeration limit of {MAX_SUBSETS}")));
    }
    let mut best: Option<SelectionOptimum> = None;
    for subset in subsets(k0, budget) {
        if (0..k0).any(|i| !subset.contains(&i) && problem.lower[i] > 0.0) {
            continue;
        }
        let upper: Vec<f64> = (0..k0)
            .map(|i| if subset.contains(&i) { problem.upper[i] } else { 0.0 })
            .collect();
        let r = match enumerate_over(net, problem, &problem.lower, &upper) {
            Ok(r) => r,
            Err(Error::InvalidProblem(_)) => continue,
            Err(e) => return Err(e),
        };
        if best.as_ref().map_or(true, |b| r.objective < b.objective) {
            best = Some(SelectionOptimum {
                subset,
                objective: r.objective,
                designs: r.designs,
            });
        }
    }
    best.ok_or_else(|| Error::InvalidProblem("no support is feasible".into()))
}

fn binomial(n: u64, k: u64) -> u64 {
    (0..k).fold(1u64, |acc, i| acc.saturating_mul(n - i) / (i + 1))
}

/// Size-`k` subsets of `0..n` in lexicographic order.
fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn go(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            go(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    go(0, n, k, &mut Vec::new(), &mut out);
    out
}

/// Largest sampled L1 deviation from `target` over the `epsilon`-box around
/// `candidate`: `n_samples` uniform points plus every vertex when the input
/// dimension is at most [`MAX_VERTEX_DIM`].
pub fn sample_robustness(
    net: &Network,
    candidate: &[f64],
    epsilon: f64,
    target: &[f64],
    n_samples: usize,
    seed: u64,
) -> Result<f64> {
    let unbounded = DesignConstraints::boxed(vec![f64::NEG_INFINITY; candidate.len()], vec![f64::INFINITY; candidate.len()]);
    sample_robustness_within(net, &unbounded.around(candidate, epsilon)?, target, n_samples, seed)
}

/// As [`sample_robustness`] over an explicit region; points violating the
/// region's linear constraints are skipped.
pub fn sample_robustness_within(
    net: &Network,
    region: &DesignConstraints,
    target: &[f64],
    n_samples: usize,
    seed: u64,
) -> Result<f64> {
    check_dim("robustness region", net.input_dim(), region.dim())?;
    let keep = |x: &[f64]| region.extra.iter().all(|c| c.violation(x) <= 1e-9);
    let mut best = f64::NEG_INFINITY;
    let mut r = rng(seed);
    for _ in 0..n_samples {
        let x = uniform_vec(&mut r, &region.lower, &region.upper);
        if keep(&x) {
            best = best.max(net.l1_loss(&x, target)?);
        }
    }
    let m = region.dim();
    if m <= MAX_VERTEX_DIM {
        for mask in 0u32..1 << m {
            let x: Vec<f64> = (0..m)
                .map(|i| if mask >> i & 1 == 1 { region.upper[i] } else { region.lower[i] })
                .collect();
            if keep(&x) {
                best = best.max(net.l1_loss(&x, target)?);
            }
        }
    }
    let center: Vec<f64> = region.lower.iter().zip(&region.upper).map(|(a, b)| 0.5 * (a + b)).collect();
    if keep(&center) {
        best = best.max(net.l1_loss(&center, target)?);
    }
    Ok(best)
}
