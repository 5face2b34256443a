//! Big-M MILP encodings of inverse queries.
//!
//! For an unstable ReLU with preactivation `a = w·x + b` and bounds `l < 0 < u`
//! the output `x` and indicator `z` satisfy
//!
//! ```text
//! x ≤ a − l(1 − z),   x ≥ a,   x ≤ u z,   x ≥ 0,   z ∈ {0, 1}
//! ```
//!
//! which forces `x = max(0, a)`. Stably active nodes become `x = a` and stably
//! inactive nodes are removed, so their outgoing weights contribute nothing.

use crate::bounds::{BoundsTable, Stability};
use crate::error::{check_dim, Error, Result};
use crate::milp::{MilpModel, ObjSense, Sense, VarId, VarKind};
use crate::network::{Layer, Network};
use crate::problem::{DesignConstraints, InverseProblem, LinearConstraint};

/// Encoding of one hidden node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeVar {
    Inactive,
    Active { x: VarId },
    Unstable { x: VarId, z: VarId },
}

impl NodeVar {
    pub(crate) fn slot(&self) -> Slot {
        match *self {
            NodeVar::Inactive => Slot::Zero,
            NodeVar::Active { x } | NodeVar::Unstable { x, .. } => Slot::Var(x),
        }
    }
}

/// A layer input: either a model variable or a node known to be zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Slot {
    Zero,
    Var(VarId),
}

/// How the absolute residual of one output is tied to the output variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Residual {
    /// `s ≥ ±(y − t)`, valid when `s` is minimized.
    Epigraph,
    /// `s = y − t`: the output never falls below the target.
    Above,
    /// `s = t − y`: the output never exceeds the target.
    Below,
    /// `d = 1` selects `s = y − t`, `d = 0` selects `s = t − y`.
    Disjunctive { d: VarId },
}

/// Variables of one replicated network.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkCopy {
    pub target: Vec<f64>,
    pub inputs: Vec<VarId>,
    pub hidden: Vec<Vec<NodeVar>>,
    pub outputs: Vec<VarId>,
    pub residuals: Vec<VarId>,
    pub residual_kind: Vec<Residual>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QueryKind {
    Inverse,
    Robustness,
}

#[derive(Debug, Clone)]
pub struct EncodedProblem {
    pub model: MilpModel,
    pub kind: QueryKind,
    pub copies: Vec<NetworkCopy>,
    /// Selection indicators `q`, shared by every copy.
    pub selection: Vec<VarId>,
}

/// Adds design input variables with box, integrality and extra constraints.
pub(crate) fn add_design_inputs(model: &mut MilpModel, design: &DesignConstraints, prefix: &str) -> Vec<VarId> {
    let inputs: Vec<VarId> = (0..design.dim())
        .map(|i| {
            let kind = if design.integer[i] { VarKind::Integer } else { VarKind::Continuous };
            model.add_var(format!("{prefix}[{i}]"), kind, design.lower[i], design.upper[i])
        })
        .collect();
    add_extra_constraints(model, &inputs, &design.extra);
    inputs
}

fn add_extra_constraints(model: &mut MilpModel, inputs: &[VarId], extra: &[LinearConstraint]) {
    for c in extra {
        let terms = inputs.iter().zip(&c.coeffs).filter(|(_, &a)| a != 0.0).map(|(&v, &a)| (v, a));
        model.add_constraint(terms, c.sense, c.rhs);
    }
}

/// Terms and constant of node `k`'s preactivation given the layer inputs.
pub(crate) fn affine_terms(layer: &Layer, k: usize, prev: &[Slot]) -> (Vec<(VarId, f64)>, f64) {
    let terms = layer
        .weights()
        .row(k)
        .iter()
        .zip(prev)
        .filter_map(|(&w, s)| match s {
            Slot::Var(v) if w != 0.0 => Some((*v, w)),
            _ => None,
        })
        .collect();
    (terms, layer.bias()[k])
}

/// Encodes hidden layers `0..upto` on top of `inputs`.
pub(crate) fn encode_hidden(
    model: &mut MilpModel,
    net: &Network,
    bounds: &BoundsTable,
    inputs: &[VarId],
    upto: usize,
    tag: &str,
) -> Result<Vec<Vec<NodeVar>>> {
    let mut prev: Vec<Slot> = inputs.iter().map(|&v| Slot::Var(v)).collect();
    let mut hidden = Vec::with_capacity(upto);
    for (l, layer) in net.layers()[..upto].iter().enumerate() {
        let row = bounds
            .layers()
            .get(l)
            .filter(|r| r.len() == layer.output_dim())
            .ok_or_else(|| Error::InvalidBounds(format!("bounds missing for layer {l}")))?;
        let mut nodes = Vec::with_capacity(layer.output_dim());
        for (k, b) in row.iter().enumerate() {
            if !(b.lower <= b.upper) {
                return Err(Error::InvalidBounds(format!("node ({l}, {k}) has lower above upper")));
            }
            let (terms, bias) = affine_terms(layer, k, &prev);
            let node = match Stability::classify(b.lower, b.upper) {
                Stability::StablyInactive => NodeVar::Inactive,
                Stability::StablyActive => {
                    let x = model.add_var(format!("x{tag}[{}][{k}]", l + 1), VarKind::Continuous, f64::NEG_INFINITY, f64::INFINITY);
                    model.add_constraint(with_lead(x, &terms), Sense::Eq, bias);
                    NodeVar::Active { x }
                }
                Stability::Unstable => {
                    let (lo, up) = (b.lower, b.upper);
                    let x = model.add_var(format!("x{tag}[{}][{k}]", l + 1), VarKind::Continuous, 0.0, up);
                    let z = model.add_var(format!("z{tag}[{}][{k}]", l + 1), VarKind::Binary, 0.0, 1.0);
                    // x − a − l z ≤ −l
                    let mut c = with_lead(x, &terms);
                    c.push((z, -lo));
                    model.add_constraint(c, Sense::Le, bias - lo);
                    model.add_constraint(with_lead(x, &terms), Sense::Ge, bias);
                    model.add_constraint([(x, 1.0), (z, -up)], Sense::Le, 0.0);
                    NodeVar::Unstable { x, z }
                }
            };
            nodes.push(node);
        }
        prev = nodes.iter().map(NodeVar::slot).collect();
        hidden.push(nodes);
    }
    Ok(hidden)
}

/// `x − Σ w v`, the left side of `x − a (sense) b`.
fn with_lead(x: VarId, terms: &[(VarId, f64)]) -> Vec<(VarId, f64)> {
    let mut c = Vec::with_capacity(terms.len() + 1);
    c.push((x, 1.0));
    c.extend(terms.iter().map(|&(v, w)| (v, -w)));
    c
}

/// Hidden layers and free output variables for one copy.
fn encode_copy(
    model: &mut MilpModel,
    net: &Network,
    bounds: &BoundsTable,
    inputs: Vec<VarId>,
    target: &[f64],
    tag: &str,
) -> Result<(NetworkCopy, Vec<Slot>)> {
    let last = net.depth() - 1;
    let hidden = encode_hidden(model, net, bounds, &inputs, last, tag)?;
    let prev: Vec<Slot> = match hidden.last() {
        Some(h) => h.iter().map(NodeVar::slot).collect(),
        None => inputs.iter().map(|&v| Slot::Var(v)).collect(),
    };
    let out_layer = &net.layers()[last];
    let mut outputs = Vec::with_capacity(out_layer.output_dim());
    for j in 0..out_layer.output_dim() {
        let y = model.add_var(format!("y{tag}[{j}]"), VarKind::Continuous, f64::NEG_INFINITY, f64::INFINITY);
        let (terms, bias) = affine_terms(out_layer, j, &prev);
        model.add_constraint(with_lead(y, &terms), Sense::Eq, bias);
        outputs.push(y);
    }
    let copy = NetworkCopy {
        target: target.to_vec(),
        inputs,
        hidden,
        outputs,
        residuals: Vec::new(),
        residual_kind: Vec::new(),
    };
    Ok((copy, prev))
}

fn check_inputs(net: &Network, bounds: &BoundsTable, design: &DesignConstraints, targets: &[Vec<f64>]) -> Result<()> {
    check_dim("design constraints", net.input_dim(), design.dim())?;
    design.validate()?;
    bounds.check_for(net)?;
    if targets.is_empty() {
        return Err(Error::InvalidProblem("at least one target is required".into()));
    }
    for (i, t) in targets.iter().enumerate() {
        check_dim(format!("target {i}"), net.output_dim(), t.len())?;
    }
    Ok(())
}

/// Minimum-L1 inversion over the design box, one network copy per target.
///
/// Integer flags and extra constraints of `problem` are not applied here; see
/// [`encode_integer_design`] and [`encode_problem`].
pub fn encode_inverse(net: &Network, bounds: &BoundsTable, problem: &InverseProblem) -> Result<EncodedProblem> {
    if problem.robustness.is_some() {
        return Err(Error::InvalidProblem("robustness queries use encode_robustness".into()));
    }
    let design = DesignConstraints::boxed(problem.lower.clone(), problem.upper.clone());
    check_inputs(net, bounds, &design, &problem.targets)?;
    let mut model = MilpModel::new();
    let multi = problem.targets.len() > 1;
    let mut copies = Vec::with_capacity(problem.targets.len());
    let mut objective = Vec::new();
    for (c, target) in problem.targets.iter().enumerate() {
        let tag = if multi { format!("@{c}") } else { String::new() };
        let inputs = add_design_inputs(&mut model, &design, &format!("x0{tag}"));
        let (mut copy, _) = encode_copy(&mut model, net, bounds, inputs, target, &tag)?;
        for (j, (&y, &t)) in copy.outputs.iter().zip(target).enumerate() {
            let s = model.add_var(format!("s{tag}[{j}]"), VarKind::Continuous, 0.0, f64::INFINITY);
            model.add_constraint([(s, 1.0), (y, -1.0)], Sense::Ge, -t);
            model.add_constraint([(s, 1.0), (y, 1.0)], Sense::Ge, t);
            copy.residuals.push(s);
            copy.residual_kind.push(Residual::Epigraph);
            objective.push((s, 1.0));
        }
        copies.push(copy);
    }
    model.set_objective(objective, ObjSense::Minimize, 0.0);
    Ok(EncodedProblem {
        model,
        kind: QueryKind::Inverse,
        copies,
        selection: Vec::new(),
    })
}

/// At most `budget` of the inputs may be nonzero, in every copy at once.
pub fn add_selection(mut encoded: EncodedProblem, budget: usize) -> Result<EncodedProblem> {
    let k0 = encoded.copies.first().map_or(0, |c| c.inputs.len());
    if budget < 1 || budget > k0 {
        return Err(Error::InvalidProblem(format!("selection budget {budget} must lie in 1..={k0}")));
    }
    if !encoded.selection.is_empty() {
        return Err(Error::InvalidProblem("selection already encoded".into()));
    }
    for copy in &encoded.copies {
        for &x in &copy.inputs {
            let v = encoded.model.var(x);
            if v.lower < 0.0 || v.upper > 1.0 {
                return Err(Error::InvalidProblem("selection requires inputs normalized to [0, 1]".into()));
            }
        }
    }
    let m = &mut encoded.model;
    let q: Vec<VarId> = (0..k0).map(|i| m.add_var(format!("q[{i}]"), VarKind::Binary, 0.0, 1.0)).collect();
    m.add_constraint(q.iter().map(|&v| (v, 1.0)), Sense::Le, budget as f64);
    for copy in &encoded.copies {
        for (&x, &qi) in copy.inputs.iter().zip(&q) {
            m.add_constraint([(x, 1.0), (qi, -1.0)], Sense::Le, 0.0);
        }
    }
    encoded.selection = q;
    Ok(encoded)
}

/// Makes flagged inputs general integers and appends linear design
/// constraints, in every copy.
pub fn encode_integer_design(
    mut encoded: EncodedProblem,
    integer: &[bool],
    extra: &[LinearConstraint],
) -> Result<EncodedProblem> {
    for copy in &encoded.copies {
        check_dim("integer flags", copy.inputs.len(), integer.len())?;
        for (k, c) in extra.iter().enumerate() {
            check_dim(format!("extra constraint {k}"), copy.inputs.len(), c.coeffs.len())?;
        }
    }
    for copy in &encoded.copies {
        for (i, (&x, &flag)) in copy.inputs.iter().zip(integer).enumerate() {
            if !flag {
                continue;
            }
            let v = encoded.model.var(x);
            if !(v.lower.is_finite() && v.upper.is_finite()) {
                return Err(Error::InvalidProblem(format!("integer input {i} is unbounded")));
            }
            encoded.model.set_var_kind(x, VarKind::Integer);
        }
        add_extra_constraints(&mut encoded.model, &copy.inputs, extra);
    }
    Ok(encoded)
}

/// Maximum L1 deviation from `target` over the `epsilon`-box around
/// `candidate`, intersected with the design region. `bounds` must be valid
/// over that region, output layer included.
pub fn encode_robustness(
    net: &Network,
    bounds: &BoundsTable,
    candidate: &[f64],
    epsilon: f64,
    target: &[f64],
    design: &DesignConstraints,
) -> Result<EncodedProblem> {
    let region = design.around(candidate, epsilon)?;
    check_inputs(net, bounds, &region, &[target.to_vec()])?;
    let mut model = MilpModel::new();
    let inputs = add_design_inputs(&mut model, &region, "x0");
    let (mut copy, _) = encode_copy(&mut model, net, bounds, inputs, target, "")?;
    let mut objective = Vec::new();
    let mut offset = 0.0;
    for (j, (&y, &t)) in copy.outputs.clone().iter().zip(target).enumerate() {
        let ob = bounds.output_bounds()[j];
        let kind = if ob.lower >= t {
            Residual::Above
        } else if ob.upper <= t {
            Residual::Below
        } else {
            let d = model.add_var(format!("d[{j}]"), VarKind::Binary, 0.0, 1.0);
            Residual::Disjunctive { d }
        };
        match kind {
            // No residual variable is needed when the sign is fixed.
            Residual::Above => {
                objective.push((y, 1.0));
                offset -= t;
                copy.residuals.push(y);
            }
            Residual::Below => {
                objective.push((y, -1.0));
                offset += t;
                copy.residuals.push(y);
            }
            Residual::Disjunctive { d } => {
                let s = model.add_var(format!("s[{j}]"), VarKind::Continuous, 0.0, f64::INFINITY);
                let m_below = (2.0 * (t - ob.lower)).max(0.0);
                let m_above = (2.0 * (ob.upper - t)).max(0.0);
                model.add_constraint([(s, 1.0), (y, -1.0)], Sense::Ge, -t);
                model.add_constraint([(s, 1.0), (y, 1.0)], Sense::Ge, t);
                // d = 1: s ≤ y − t; d = 0: s ≤ t − y.
                model.add_constraint([(s, 1.0), (y, -1.0), (d, m_below)], Sense::Le, m_below - t);
                model.add_constraint([(s, 1.0), (y, 1.0), (d, -m_above)], Sense::Le, t);
                objective.push((s, 1.0));
                copy.residuals.push(s);
            }
            Residual::Epigraph => unreachable!(),
        }
        copy.residual_kind.push(kind);
    }
    model.set_objective(objective, ObjSense::Maximize, offset);
    Ok(EncodedProblem {
        model,
        kind: QueryKind::Robustness,
        copies: vec![copy],
        selection: Vec::new(),
    })
}

/// Encodes any supported query. Robustness uses the first target.
pub fn encode_problem(net: &Network, bounds: &BoundsTable, problem: &InverseProblem) -> Result<EncodedProblem> {
    problem.validate(net)?;
    if let Some(r) = &problem.robustness {
        if problem.targets.len() != 1 {
            return Err(Error::InvalidProblem("robustness takes exactly one target".into()));
        }
        return encode_robustness(net, bounds, &r.candidate, r.epsilon, &problem.targets[0], &problem.design());
    }
    let mut enc = encode_inverse(net, bounds, problem)?;
    if let Some(d) = problem.selection_budget {
        enc = add_selection(enc, d)?;
    }
    if problem.has_integers() || !problem.extra_constraints.is_empty() {
        enc = encode_integer_design(enc, &problem.integer, &problem.extra_constraints)?;
    }
    Ok(enc)
}

impl EncodedProblem {
    /// Design inputs of each copy.
    pub fn decode_inputs(&self, x: &[f64]) -> Vec<Vec<f64>> {
        self.copies.iter().map(|c| c.inputs.iter().map(|v| x[v.0]).collect()).collect()
    }

    /// Full assignment induced by one design per copy: every node takes its
    /// forward-pass value and every indicator the matching branch. Selection
    /// indicators are set for inputs that are nonzero in any copy.
    pub fn assignment_from_inputs(&self, net: &Network, designs: &[Vec<f64>]) -> Result<Vec<f64>> {
        check_dim("designs", self.copies.len(), designs.len())?;
        let mut x = vec![0.0; self.model.num_vars()];
        for (copy, x0) in self.copies.iter().zip(designs) {
            let (pre, post) = net.trace(x0)?;
            for (&v, &val) in copy.inputs.iter().zip(x0) {
                x[v.0] = val;
            }
            for (l, nodes) in copy.hidden.iter().enumerate() {
                for (k, node) in nodes.iter().enumerate() {
                    match *node {
                        NodeVar::Inactive => {}
                        NodeVar::Active { x: v } => x[v.0] = pre[l][k],
                        NodeVar::Unstable { x: v, z } => {
                            x[v.0] = post[l][k];
                            x[z.0] = if pre[l][k] > 0.0 { 1.0 } else { 0.0 };
                        }
                    }
                }
            }
            let y = &post[post.len() - 1];
            for (j, (&v, &t)) in copy.outputs.iter().zip(&copy.target).enumerate() {
                x[v.0] = y[j];
                let s = copy.residuals[j];
                match copy.residual_kind[j] {
                    Residual::Epigraph => x[s.0] = (y[j] - t).abs(),
                    Residual::Above | Residual::Below => {}
                    Residual::Disjunctive { d } => {
                        x[s.0] = (y[j] - t).abs();
                        x[d.0] = if y[j] >= t { 1.0 } else { 0.0 };
                    }
                }
            }
        }
        for (i, &q) in self.selection.iter().enumerate() {
            if designs.iter().any(|d| d[i] != 0.0) {
                x[q.0] = 1.0;
            }
        }
        Ok(x)
    }

    /// Largest deviation between the assignment's node values and a forward
    /// pass of its decoded inputs.
    pub fn soundness_error(&self, net: &Network, x: &[f64]) -> Result<f64> {
        let mut worst: f64 = 0.0;
        for (copy, x0) in self.copies.iter().zip(self.decode_inputs(x)) {
            let (_, post) = net.trace(&x0)?;
            for (l, nodes) in copy.hidden.iter().enumerate() {
                for (k, node) in nodes.iter().enumerate() {
                    let val = match *node {
                        NodeVar::Inactive => 0.0,
                        NodeVar::Active { x: v } | NodeVar::Unstable { x: v, .. } => x[v.0],
                    };
                    worst = worst.max((val - post[l][k]).abs());
                }
            }
            for (j, &v) in copy.outputs.iter().enumerate() {
                worst = worst.max((x[v.0] - post[post.len() - 1][j]).abs());
            }
        }
        Ok(worst)
    }

    /// Every model variable with its role, for auditing the encoding.
    pub fn var_roles(&self) -> Vec<(VarId, String)> {
        let mut out = Vec::new();
        for (c, copy) in self.copies.iter().enumerate() {
            out.extend(copy.inputs.iter().enumerate().map(|(i, &v)| (v, format!("input {c}/{i}"))));
            for (l, nodes) in copy.hidden.iter().enumerate() {
                for (k, node) in nodes.iter().enumerate() {
                    match *node {
                        NodeVar::Inactive => {}
                        NodeVar::Active { x } => out.push((x, format!("node {c}/{l}/{k}"))),
                        NodeVar::Unstable { x, z } => {
                            out.push((x, format!("node {c}/{l}/{k}")));
                            out.push((z, format!("indicator {c}/{l}/{k}")));
                        }
                    }
                }
            }
            out.extend(copy.outputs.iter().enumerate().map(|(j, &v)| (v, format!("output {c}/{j}"))));
            for (j, (&s, kind)) in copy.residuals.iter().zip(&copy.residual_kind).enumerate() {
                match kind {
                    Residual::Epigraph => out.push((s, format!("residual {c}/{j}"))),
                    Residual::Above | Residual::Below => {}
                    Residual::Disjunctive { d } => {
                        out.push((s, format!("residual {c}/{j}")));
                        out.push((*d, format!("sign {c}/{j}")));
                    }
                }
            }
        }
        out.extend(self.selection.iter().enumerate().map(|(i, &q)| (q, format!("selection {i}"))));
        out
    }
}
