//! Preactivation bounds for every node of a network over a design region.
//!
//! Bounds start from interval arithmetic and may then be tightened layer by
//! layer: each node's preactivation is minimized and maximized, under a time
//! budget, subject to the exact MILP encoding of all earlier layers and the
//! design constraints. A subproblem that runs out of time contributes its
//! relaxed (proven) bound, never its best feasible value, so the bounds stay
//! sound.

use std::fs;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::encoder::{add_design_inputs, encode_hidden, NodeVar, Slot};
use crate::error::{check_dim, Error, Result};
use crate::milp::{solve_milp, BnbConfig, MilpModel, ObjSense, SolveStatus};
use crate::network::{Activation, Network};
use crate::problem::DesignConstraints;

pub const BOUNDS_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Stability {
    StablyActive,
    StablyInactive,
    Unstable,
}

impl Stability {
    /// A bound of exactly zero counts as stable.
    pub fn classify(lower: f64, upper: f64) -> Self {
        if lower >= 0.0 {
            Stability::StablyActive
        } else if upper <= 0.0 {
            Stability::StablyInactive
        } else {
            Stability::Unstable
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Provenance {
    Interval,
    MilpExact,
    MilpRelaxed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NodeBounds {
    pub lower: f64,
    pub upper: f64,
    pub stability: Stability,
    pub provenance: Provenance,
    /// Seconds spent on this node's subproblems.
    pub time: f64,
}

impl NodeBounds {
    fn interval(lower: f64, upper: f64) -> Self {
        Self {
            lower,
            upper,
            stability: Stability::classify(lower, upper),
            provenance: Provenance::Interval,
            time: 0.0,
        }
    }
}

/// Stability counts over the hidden layers.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Census {
    pub stably_active: usize,
    pub stably_inactive: usize,
    pub unstable: usize,
}

/// Preactivation bounds for every layer, including the output layer.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundsTable {
    layers: Vec<Vec<NodeBounds>>,
}

impl BoundsTable {
    pub fn from_layers(layers: Vec<Vec<NodeBounds>>) -> Result<Self> {
        for (l, layer) in layers.iter().enumerate() {
            for (k, b) in layer.iter().enumerate() {
                if b.lower.is_nan() || b.upper.is_nan() || b.lower > b.upper {
                    return Err(Error::InvalidBounds(format!(
                        "node ({l}, {k}) has lower {} above upper {}",
                        b.lower, b.upper
                    )));
                }
            }
        }
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[Vec<NodeBounds>] {
        &self.layers
    }

    pub fn node(&self, layer: usize, k: usize) -> &NodeBounds {
        &self.layers[layer][k]
    }

    /// Checks shape and ordering against `net`.
    pub fn check_for(&self, net: &Network) -> Result<()> {
        if self.layers.len() != net.depth() {
            return Err(Error::InvalidBounds(format!(
                "bounds cover {} layers, network has {}",
                self.layers.len(),
                net.depth()
            )));
        }
        for (l, (layer, nl)) in self.layers.iter().zip(net.layers()).enumerate() {
            if layer.len() != nl.output_dim() {
                return Err(Error::InvalidBounds(format!(
                    "bounds missing for layer {l}: {} of {} nodes",
                    layer.len(),
                    nl.output_dim()
                )));
            }
            for (k, b) in layer.iter().enumerate() {
                if !(b.lower <= b.upper) {
                    return Err(Error::InvalidBounds(format!("node ({l}, {k}) has lower above upper")));
                }
            }
        }
        Ok(())
    }

    pub fn census(&self) -> Census {
        let mut c = Census::default();
        let hidden = self.layers.len().saturating_sub(1);
        for b in self.layers[..hidden].iter().flatten() {
            match b.stability {
                Stability::StablyActive => c.stably_active += 1,
                Stability::StablyInactive => c.stably_inactive += 1,
                Stability::Unstable => c.unstable += 1,
            }
        }
        c
    }

    pub fn output_bounds(&self) -> &[NodeBounds] {
        &self.layers[self.layers.len() - 1]
    }

    pub fn save(&self, path: impl AsRef<Path>, key: &str) -> Result<()> {
        let mut nodes = Vec::new();
        for (l, layer) in self.layers.iter().enumerate() {
            for (k, b) in layer.iter().enumerate() {
                nodes.push(CacheNode {
                    layer: l,
                    index: k,
                    lower: b.lower,
                    upper: b.upper,
                    stability: b.stability,
                    provenance: b.provenance,
                    time: b.time,
                });
            }
        }
        let file = CacheFile {
            format_version: BOUNDS_FORMAT_VERSION,
            key: key.to_string(),
            widths: self.layers.iter().map(Vec::len).collect(),
            nodes,
        };
        fs::write(path, serde_json::to_string_pretty(&file).expect("bounds serialize"))?;
        Ok(())
    }

    /// Loads a cache file, returning the table and the key it was stored under.
    pub fn load(path: impl AsRef<Path>) -> Result<(Self, String)> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)?;
        let file: CacheFile = serde_json::from_str(&text).map_err(|e| Error::Parse {
            location: format!("{}: line {}, column {}", path.display(), e.line(), e.column()),
            message: e.to_string(),
        })?;
        if file.format_version != BOUNDS_FORMAT_VERSION {
            return Err(Error::Parse {
                location: format!("{}: format_version", path.display()),
                message: format!("unsupported format version {}", file.format_version),
            });
        }
        let mut layers: Vec<Vec<Option<NodeBounds>>> = file.widths.iter().map(|w| vec![None; *w]).collect();
        for n in file.nodes {
            let slot = layers
                .get_mut(n.layer)
                .and_then(|l| l.get_mut(n.index))
                .ok_or_else(|| Error::Parse {
                    location: format!("{}: node ({}, {})", path.display(), n.layer, n.index),
                    message: "node outside the declared widths".into(),
                })?;
            *slot = Some(NodeBounds {
                lower: n.lower,
                upper: n.upper,
                stability: Stability::classify(n.lower, n.upper),
                provenance: n.provenance,
                time: n.time,
            });
        }
        let mut out = Vec::with_capacity(layers.len());
        for (l, layer) in layers.into_iter().enumerate() {
            let mut row = Vec::with_capacity(layer.len());
            for (k, b) in layer.into_iter().enumerate() {
                row.push(b.ok_or_else(|| Error::InvalidBounds(format!("bounds missing for node ({l}, {k})")))?);
            }
            out.push(row);
        }
        Ok((Self::from_layers(out)?, file.key))
    }
}

/// Digest of the network and design region, used to key bound caches.
pub fn cache_key(net: &Network, design: &DesignConstraints) -> String {
    let mut hasher = Sha256::new();
    hasher.update(net.digest().as_bytes());
    let mut put = |v: f64| hasher.update(v.to_bits().to_le_bytes());
    for (&lo, &hi) in design.lower.iter().zip(&design.upper) {
        put(lo);
        put(hi);
    }
    for c in &design.extra {
        for &v in &c.coeffs {
            put(v);
        }
        put(c.rhs);
        put(c.sense as u8 as f64);
    }
    for &b in &design.integer {
        put(b as u8 as f64);
    }
    hex::encode(hasher.finalize())
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CacheFile {
    format_version: u32,
    key: String,
    widths: Vec<usize>,
    nodes: Vec<CacheNode>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CacheNode {
    layer: usize,
    index: usize,
    lower: f64,
    upper: f64,
    stability: Stability,
    provenance: Provenance,
    time: f64,
}

/// Interval propagation through the network over a box.
pub fn interval_bounds(net: &Network, lower: &[f64], upper: &[f64]) -> Result<BoundsTable> {
    check_dim("design lower bounds", net.input_dim(), lower.len())?;
    check_dim("design upper bounds", net.input_dim(), upper.len())?;
    if lower.iter().chain(upper).any(|v| !v.is_finite()) {
        return Err(Error::InvalidProblem("interval bounds need a finite box".into()));
    }
    if lower.iter().zip(upper).any(|(l, u)| l > u) {
        return Err(Error::InvalidProblem("design box is empty".into()));
    }
    let mut layers = Vec::with_capacity(net.depth());
    let mut lo = lower.to_vec();
    let mut hi = upper.to_vec();
    for layer in net.layers() {
        let (pre_lo, pre_hi) = affine_interval(layer, &lo, &hi);
        layers.push(pre_lo.iter().zip(&pre_hi).map(|(&l, &u)| NodeBounds::interval(l, u)).collect());
        (lo, hi) = post_activation(layer.activation(), &pre_lo, &pre_hi);
    }
    BoundsTable::from_layers(layers)
}

fn affine_interval(layer: &crate::network::Layer, lo: &[f64], hi: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let w = layer.weights();
    let mut out_lo = Vec::with_capacity(w.rows());
    let mut out_hi = Vec::with_capacity(w.rows());
    for k in 0..w.rows() {
        let (mut a, mut b) = (layer.bias()[k], layer.bias()[k]);
        for (j, &wkj) in w.row(k).iter().enumerate() {
            if wkj >= 0.0 {
                a += wkj * lo[j];
                b += wkj * hi[j];
            } else {
                a += wkj * hi[j];
                b += wkj * lo[j];
            }
        }
        out_lo.push(a);
        out_hi.push(b);
    }
    (out_lo, out_hi)
}

fn post_activation(act: Activation, lo: &[f64], hi: &[f64]) -> (Vec<f64>, Vec<f64>) {
    match act {
        Activation::Relu => (
            lo.iter().map(|v| v.max(0.0)).collect(),
            hi.iter().map(|v| v.max(0.0)).collect(),
        ),
        Activation::Linear => (lo.to_vec(), hi.to_vec()),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TightenConfig {
    /// Wall-clock budget per node subproblem (each of min and max), seconds.
    pub t_max: f64,
    /// Worker threads for the independent subproblems of one layer.
    pub jobs: usize,
    /// Also tighten the output layer (needed for robustness big-Ms).
    pub include_output: bool,
    pub bnb: BnbConfig,
}

impl Default for TightenConfig {
    fn default() -> Self {
        Self {
            t_max: 150.0,
            jobs: 1,
            include_output: false,
            bnb: BnbConfig::default(),
        }
    }
}

/// Layer-by-layer MILP tightening of interval bounds over the design region.
pub fn tighten_bounds(net: &Network, design: &DesignConstraints, config: &TightenConfig) -> Result<BoundsTable> {
    check_dim("design constraints", net.input_dim(), design.dim())?;
    design.validate()?;
    if !(config.t_max > 0.0) {
        return Err(Error::InvalidProblem("t_max must be positive".into()));
    }
    let initial = interval_bounds(net, &design.lower, &design.upper)?;
    let mut layers: Vec<Vec<NodeBounds>> = initial.layers.clone();
    let pure_box = design.extra.is_empty() && !design.integer.iter().any(|b| *b);
    let last = net.depth() - 1;

    for l in 0..net.depth() {
        if l == last && !config.include_output {
            break;
        }
        // An affine image of a box is bounded exactly by interval arithmetic.
        if l == 0 && pure_box {
            continue;
        }
        let table = BoundsTable::from_layers(layers.clone())?;
        let mut base = MilpModel::new();
        let inputs = add_design_inputs(&mut base, design, "x0");
        let hidden = encode_hidden(&mut base, net, &table, &inputs, l, "")?;
        let prev: Vec<Slot> = match hidden.last() {
            None => inputs.iter().map(|&v| Slot::Var(v)).collect(),
            Some(h) => h.iter().map(NodeVar::slot).collect(),
        };

        let layer = &net.layers()[l];
        let todo: Vec<usize> = (0..layer.output_dim())
            .filter(|&k| l == last || layers[l][k].stability == Stability::Unstable)
            .collect();
        let results = run_parallel(&todo, config.jobs, |k| {
            let (terms, constant) = crate::encoder::affine_terms(layer, k, &prev);
            tighten_node(&base, &terms, constant, config)
        })?;
        for (k, r) in todo.iter().zip(results) {
            let old = layers[l][*k];
            let mut lower = r.lower.max(old.lower);
            let mut upper = r.upper.min(old.upper);
            // Degenerate regions can cross by rounding noise; keep both ends.
            if lower > upper && lower - upper <= 1e-7 * (1.0 + upper.abs()) {
                std::mem::swap(&mut lower, &mut upper);
            }
            if lower > upper {
                return Err(Error::Internal(format!(
                    "tightening produced an empty interval at node ({l}, {k})",
                )));
            }
            layers[l][*k] = NodeBounds {
                lower,
                upper,
                stability: Stability::classify(lower, upper),
                provenance: if r.exact { Provenance::MilpExact } else { Provenance::MilpRelaxed },
                time: r.time,
            };
        }
        // Re-propagate intervals from the committed layer.
        let (mut lo, mut hi) = post_activation(
            layer.activation(),
            &layers[l].iter().map(|b| b.lower).collect::<Vec<_>>(),
            &layers[l].iter().map(|b| b.upper).collect::<Vec<_>>(),
        );
        for ll in l + 1..net.depth() {
            let nl = &net.layers()[ll];
            let (pl, ph) = affine_interval(nl, &lo, &hi);
            for k in 0..nl.output_dim() {
                let b = &mut layers[ll][k];
                b.lower = b.lower.max(pl[k]);
                b.upper = b.upper.min(ph[k]);
                b.stability = Stability::classify(b.lower, b.upper);
            }
            let cur_lo: Vec<f64> = layers[ll].iter().map(|b| b.lower).collect();
            let cur_hi: Vec<f64> = layers[ll].iter().map(|b| b.upper).collect();
            (lo, hi) = post_activation(nl.activation(), &cur_lo, &cur_hi);
        }
    }
    BoundsTable::from_layers(layers)
}

/// Bounds valid over the `epsilon`-hypercube around `candidate`, intersected
/// with the design region.
pub fn bounds_for_robustness(
    net: &Network,
    candidate: &[f64],
    epsilon: f64,
    design: &DesignConstraints,
    config: &TightenConfig,
) -> Result<BoundsTable> {
    let region = design.around(candidate, epsilon)?;
    let mut config = config.clone();
    config.include_output = true;
    tighten_bounds(net, &region, &config)
}

struct NodeResult {
    lower: f64,
    upper: f64,
    exact: bool,
    time: f64,
}

fn tighten_node(base: &MilpModel, terms: &[(crate::milp::VarId, f64)], constant: f64, config: &TightenConfig) -> Result<NodeResult> {
    let start = Instant::now();
    let bnb = config.bnb.clone().with_time_limit(config.t_max);
    let mut exact = true;
    let mut solve = |sense: ObjSense| -> Result<f64> {
        let mut model = base.clone();
        model.set_objective(terms.iter().copied(), sense, constant);
        let report = solve_milp(&model, &bnb, None)?;
        match report.status {
            SolveStatus::Optimal => {}
            SolveStatus::TimeLimit | SolveStatus::Feasible => exact = false,
            SolveStatus::Infeasible => {
                return Err(Error::EmptyRegion("no design satisfies the constraints".into()));
            }
            SolveStatus::Unbounded => {
                return Err(Error::Internal("bound subproblem is unbounded".into()));
            }
        }
        // The relaxed bound, not the incumbent: it stays valid on early exit.
        let bound = report.relaxed_bound;
        Ok(if bound.is_finite() {
            bound
        } else {
            match sense {
                ObjSense::Minimize => f64::NEG_INFINITY,
                ObjSense::Maximize => f64::INFINITY,
            }
        })
    };
    let lower = solve(ObjSense::Minimize)?;
    let upper = solve(ObjSense::Maximize)?;
    Ok(NodeResult {
        lower,
        upper,
        exact,
        time: start.elapsed().as_secs_f64(),
    })
}

/// Minimum and maximum preactivation of node `k` in `layer` over the design
/// region, encoding the earlier layers with `table`. The flag is false when
/// either solve stopped early, in which case the ends are relaxed bounds.
pub fn node_range(
    net: &Network,
    design: &DesignConstraints,
    table: &BoundsTable,
    layer: usize,
    k: usize,
    bnb: &BnbConfig,
) -> Result<(f64, f64, bool)> {
    table.check_for(net)?;
    check_dim("design constraints", net.input_dim(), design.dim())?;
    if layer >= net.depth() || k >= net.layers()[layer].output_dim() {
        return Err(Error::InvalidBounds(format!("no node ({layer}, {k})")));
    }
    let mut base = MilpModel::new();
    let inputs = add_design_inputs(&mut base, design, "x0");
    let hidden = encode_hidden(&mut base, net, table, &inputs, layer, "")?;
    let prev: Vec<Slot> = match hidden.last() {
        None => inputs.iter().map(|&v| Slot::Var(v)).collect(),
        Some(h) => h.iter().map(NodeVar::slot).collect(),
    };
    let (terms, constant) = crate::encoder::affine_terms(&net.layers()[layer], k, &prev);
    let config = TightenConfig {
        t_max: bnb.time_limit,
        bnb: bnb.clone(),
        ..TightenConfig::default()
    };
    let r = tighten_node(&base, &terms, constant, &config)?;
    Ok((r.lower, r.upper, r.exact))
}

/// Runs `task` over `items` on up to `jobs` scoped threads, preserving order.
fn run_parallel<T: Send>(items: &[usize], jobs: usize, task: impl Fn(usize) -> Result<T> + Sync) -> Result<Vec<T>> {
    let jobs = jobs.max(1).min(items.len().max(1));
    if jobs == 1 {
        return items.iter().map(|&k| task(k)).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<Result<T>>>> = Mutex::new((0..items.len()).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..jobs {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= items.len() {
                    break;
                }
                let r = task(items[i]);
                slots.lock().expect("slot lock")[i] = Some(r);
            });
        }
    });
    slots
        .into_inner()
        .expect("slot lock")
        .into_iter()
        .map(|r| r.expect("every item processed"))
        .collect()
}
