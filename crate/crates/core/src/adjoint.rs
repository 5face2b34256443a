//! Gradient-based inversion and the hybrid solver that pairs it with
//! branch-and-bound.
//!
//! The adjoint method runs Adam on `‖F(x0) − t‖₁` from several starting
//! points, with a quadratic penalty for leaving the design box and a final
//! projection back onto it. It finds good designs quickly but certifies
//! nothing; in the hybrid it feeds incumbents to the MILP, whose relaxed
//! bound supplies the certificate.

use std::fmt::Write as _;
use std::sync::atomic::{AtomicBool, Ordering};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::bounds::BoundsTable;
use crate::encoder::encode_problem;
use crate::error::{check_dim, Error, Result};
use crate::milp::{solve_milp_with_pool, BnbConfig, GapEvent, IncumbentPool, Source, SolveReport};
use crate::network::Network;
use crate::problem::InverseProblem;
use crate::synth::{rng, uniform_vec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdjointConfig {
    pub restarts: usize,
    pub max_iters: usize,
    pub patience: usize,
    /// A step counts as an improvement when it lowers the best objective by
    /// at least this much.
    pub improvement_tol: f64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_epsilon: f64,
    pub boundary_penalty_weight: f64,
    /// On a plateau of `patience` iterations the learning rate is multiplied
    /// by `plateau_decay`, at most `plateau_decays` times; the next plateau
    /// ends the run. Zero decays stops at the first plateau.
    pub plateau_decays: usize,
    pub plateau_decay: f64,
    pub seed: u64,
    /// Starting points tried before random ones; they count as restarts.
    pub initial_points: Vec<Vec<f64>>,
}

impl Default for AdjointConfig {
    fn default() -> Self {
        Self {
            restarts: 16,
            max_iters: 2000,
            patience: 10,
            improvement_tol: 1e-6,
            learning_rate: 1e-2,
            beta1: 0.9,
            beta2: 0.999,
            adam_epsilon: 1e-8,
            boundary_penalty_weight: 10.0,
            plateau_decays: 2,
            plateau_decay: 0.1,
            seed: 0,
            initial_points: Vec::new(),
        }
    }
}

impl AdjointConfig {
    pub fn validate(&self) -> Result<()> {
        if self.restarts < 1 || self.max_iters < 1 || self.patience < 1 {
            return Err(Error::InvalidProblem("restarts, max_iters and patience must be at least 1".into()));
        }
        let positive = [self.learning_rate, self.adam_epsilon];
        if positive.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(Error::InvalidProblem("learning rate and Adam epsilon must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::InvalidProblem("Adam betas must lie in [0, 1)".into()));
        }
        if !(self.plateau_decay > 0.0 && self.plateau_decay <= 1.0) {
            return Err(Error::InvalidProblem("plateau decay must lie in (0, 1]".into()));
        }
        if !(self.improvement_tol >= 0.0) || !(self.boundary_penalty_weight >= 0.0) {
            return Err(Error::InvalidProblem("tolerances and penalty weight must be nonnegative".into()));
        }
        Ok(())
    }
}

/// Outcome of one restart across all targets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RestartRecord {
    pub restart: usize,
    pub iterations: usize,
    /// Objective of this restart's own designs.
    pub objective: f64,
    /// Best objective over restarts so far.
    pub best: f64,
    pub time: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdjointResult {
    /// Best design per target, inside the design box.
    pub designs: Vec<Vec<f64>>,
    pub objective: f64,
    pub trace: Vec<RestartRecord>,
}

fn check_supported(net: &Network, problem: &InverseProblem) -> Result<()> {
    problem.validate(net)?;
    if problem.selection_budget.is_some() || problem.has_integers() {
        return Err(Error::InvalidProblem(
            "the adjoint method handles continuous box-constrained inversion only".into(),
        ));
    }
    if problem.robustness.is_some() {
        return Err(Error::InvalidProblem("the adjoint method does not solve robustness queries".into()));
    }
    if !problem.extra_constraints.is_empty() {
        return Err(Error::InvalidProblem(
            "the adjoint method cannot guarantee extra linear constraints".into(),
        ));
    }
    Ok(())
}

/// Multi-start Adam inversion. Each target is inverted independently.
pub fn adjoint_invert(net: &Network, problem: &InverseProblem, config: &AdjointConfig) -> Result<AdjointResult> {
    adjoint_invert_with(net, problem, config, |_, _| true)
}

/// As [`adjoint_invert`], calling `on_restart(best_designs, record)` after
/// each restart; returning `false` stops early.
pub fn adjoint_invert_with(
    net: &Network,
    problem: &InverseProblem,
    config: &AdjointConfig,
    mut on_restart: impl FnMut(&[Vec<f64>], &RestartRecord) -> bool,
) -> Result<AdjointResult> {
    check_supported(net, problem)?;
    config.validate()?;
    for (i, p) in config.initial_points.iter().enumerate() {
        check_dim(format!("initial point {i}"), net.input_dim(), p.len())?;
    }
    let start = Instant::now();
    let mut r = rng(config.seed);
    let n_targets = problem.targets.len();
    let mut best: Vec<Option<(f64, Vec<f64>)>> = vec![None; n_targets];
    let mut trace = Vec::new();
    for restart in 0..config.restarts {
        let mut iterations = 0;
        let mut objective = 0.0;
        for (c, target) in problem.targets.iter().enumerate() {
            let x_init = match config.initial_points.get(restart) {
                Some(p) => p.clone(),
                None => uniform_vec(&mut r, &problem.lower, &problem.upper),
            };
            let (x, obj, iters) = descend(net, problem, target, x_init, config)?;
            iterations += iters;
            objective += obj;
            if best[c].as_ref().map_or(true, |(b, _)| obj < *b) {
                best[c] = Some((obj, x));
            }
        }
        let designs: Vec<Vec<f64>> = best.iter().map(|b| b.as_ref().expect("set").1.clone()).collect();
        let record = RestartRecord {
            restart,
            iterations,
            objective,
            best: best.iter().map(|b| b.as_ref().expect("set").0).sum(),
            time: start.elapsed().as_secs_f64(),
        };
        let go_on = on_restart(&designs, &record);
        trace.push(record);
        if !go_on {
            break;
        }
    }
    let objective = best.iter().map(|b| b.as_ref().expect("set").0).sum();
    Ok(AdjointResult {
        designs: best.into_iter().map(|b| b.expect("set").1).collect(),
        objective,
        trace,
    })
}

/// One Adam run. Returns the best projected iterate, its loss and the
/// number of iterations taken.
fn descend(
    net: &Network,
    problem: &InverseProblem,
    target: &[f64],
    mut x: Vec<f64>,
    config: &AdjointConfig,
) -> Result<(Vec<f64>, f64, usize)> {
    let (lo, hi) = (&problem.lower, &problem.upper);
    let project = |x: &[f64]| -> Vec<f64> { x.iter().zip(lo.iter().zip(hi)).map(|(v, (a, b))| v.clamp(*a, *b)).collect() };
    let mut best_x = project(&x);
    let mut best = net.l1_loss(&best_x, target)?;
    let m = x.len();
    let (mut mom, mut vel) = (vec![0.0; m], vec![0.0; m]);
    let mut stale = 0;
    let mut iters = 0;
    let mut lr = config.learning_rate;
    let mut decays = 0;
    for it in 1..=config.max_iters {
        iters = it;
        let mut g = net.gradient(&x, target)?;
        for i in 0..m {
            let out = if x[i] > hi[i] {
                x[i] - hi[i]
            } else if x[i] < lo[i] {
                x[i] - lo[i]
            } else {
                0.0
            };
            g[i] += 2.0 * config.boundary_penalty_weight * out;
        }
        let b1t = 1.0 - config.beta1.powi(it as i32);
        let b2t = 1.0 - config.beta2.powi(it as i32);
        for i in 0..m {
            mom[i] = config.beta1 * mom[i] + (1.0 - config.beta1) * g[i];
            vel[i] = config.beta2 * vel[i] + (1.0 - config.beta2) * g[i] * g[i];
            x[i] -= lr * (mom[i] / b1t) / ((vel[i] / b2t).sqrt() + config.adam_epsilon);
        }
        let px = project(&x);
        let loss = net.l1_loss(&px, target)?;
        if loss < best - config.improvement_tol {
            stale = 0;
        } else {
            stale += 1;
        }
        if loss < best {
            best = loss;
            best_x = px;
        }
        if stale >= config.patience {
            if decays == config.plateau_decays {
                break;
            }
            decays += 1;
            lr *= config.plateau_decay;
            stale = 0;
        }
    }
    Ok((best_x, best, iters))
}

/// Time-stamped incumbent and bound history of a solve.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GapTrace {
    pub events: Vec<GapEvent>,
}

impl GapTrace {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("time_s,incumbent,relaxed_bound,gap,source\n");
        for e in &self.events {
            let _ = writeln!(
                out,
                "{:.6},{},{},{},{}",
                e.time,
                csv_num(e.incumbent),
                csv_num(e.relaxed_bound),
                csv_num(e.gap),
                e.source.as_str()
            );
        }
        out
    }

    /// First time the gap fell to `gap` or below.
    pub fn time_to_gap(&self, gap: f64) -> Option<f64> {
        self.events.iter().find(|e| e.gap <= gap).map(|e| e.time)
    }
}

fn csv_num(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else if v == f64::INFINITY {
        "inf".into()
    } else if v == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        format!("{v:?}")
    }
}

#[derive(Debug, Clone)]
pub struct HybridOutcome {
    pub report: SolveReport,
    pub trace: GapTrace,
    /// The variable layout the report's incumbent refers to.
    pub encoded: crate::encoder::EncodedProblem,
    pub adjoint: Vec<RestartRecord>,
    /// Injections accepted by the pool.
    pub injected: usize,
}

/// Runs branch-and-bound and the adjoint method concurrently. Every adjoint
/// restart's best designs are completed to a full MILP assignment and
/// offered to the shared incumbent pool.
pub fn hybrid_solve(
    net: &Network,
    bounds: &BoundsTable,
    problem: &InverseProblem,
    adjoint: &AdjointConfig,
    bnb: &BnbConfig,
) -> Result<HybridOutcome> {
    check_supported(net, problem)?;
    adjoint.validate()?;
    bnb.validate()?;
    let encoded = encode_problem(net, bounds, problem)?;
    let pool = IncumbentPool::new(&encoded.model, bnb);
    let milp_done = AtomicBool::new(false);
    let mut injected = 0;

    let (report, records) = std::thread::scope(|s| -> Result<(SolveReport, Vec<RestartRecord>)> {
        let milp = s.spawn(|| {
            let r = solve_milp_with_pool(&encoded.model, bnb, None, &pool);
            milp_done.store(true, Ordering::Release);
            r
        });
        let adj = adjoint_invert_with(net, problem, adjoint, |designs, _| {
            if milp_done.load(Ordering::Acquire) {
                return false;
            }
            if let Ok(x) = encoded.assignment_from_inputs(net, designs) {
                if let Ok(inj) = pool.inject_from(&x, Source::Adjoint) {
                    injected += inj.accepted() as usize;
                }
            }
            !milp_done.load(Ordering::Acquire) && pool.elapsed() < bnb.time_limit
        });
        let report = milp.join().map_err(|_| Error::Internal("branch-and-bound worker panicked".into()))??;
        Ok((report, adj?.trace))
    })?;

    Ok(HybridOutcome {
        report,
        trace: GapTrace { events: pool.trace() },
        encoded,
        adjoint: records,
        injected,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bounds::{tighten_bounds, TightenConfig};
    use crate::milp::{solve_milp, SolveStatus};
    use crate::network::{Activation, Layer, Matrix};
    use crate::synth::{random_network, reachable_target};

    fn net_of(layers: Vec<(Vec<Vec<f64>>, Vec<f64>, Activation)>) -> Network {
        Network::new(
            layers
                .into_iter()
                .map(|(w, b, a)| Layer::new(Matrix::from_rows(&w).unwrap(), b, a).unwrap())
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn linear_scalar_converges() {
        let net = net_of(vec![(vec![vec![2.0]], vec![0.0], Activation::Linear)]);
        let p = InverseProblem::boxed(vec![1.0], vec![0.0], vec![1.0]);
        let r = adjoint_invert(&net, &p, &AdjointConfig::default()).unwrap();
        assert!((r.designs[0][0] - 0.5).abs() < 1e-3, "{:?}", r.designs);
        assert!(r.objective < 2e-3);
    }

    #[test]
    fn symmetric_optima() {
        // |x| has optima at ±0.5 for t = 0.5.
        let net = net_of(vec![
            (vec![vec![1.0], vec![-1.0]], vec![0.0, 0.0], Activation::Relu),
            (vec![vec![1.0, 1.0]], vec![0.0], Activation::Linear),
        ]);
        let p = InverseProblem::boxed(vec![0.5], vec![-1.0], vec![1.0]);
        let r = adjoint_invert(&net, &p, &AdjointConfig::default()).unwrap();
        assert!((r.designs[0][0].abs() - 0.5).abs() < 1e-4, "{:?}", r.designs);
        assert!(r.objective < 1e-4);
    }

    #[test]
    fn output_stays_in_box_and_is_reproducible() {
        let net = random_network(4, &[10, 10], 2, 7);
        let p = InverseProblem::boxed(vec![3.0, -3.0], vec![-0.5; 4], vec![0.25; 4]);
        let cfg = AdjointConfig {
            restarts: 4,
            seed: 11,
            ..AdjointConfig::default()
        };
        let a = adjoint_invert(&net, &p, &cfg).unwrap();
        let b = adjoint_invert(&net, &p, &cfg).unwrap();
        assert_eq!(a.designs, b.designs);
        for (x, (lo, hi)) in a.designs[0].iter().zip(p.lower.iter().zip(&p.upper)) {
            assert!(x >= lo && x <= hi);
        }
        assert!((net.l1_loss(&a.designs[0], &p.targets[0]).unwrap() - a.objective).abs() < 1e-12);
        assert_eq!(a.trace.len(), 4);
        assert!(a.trace.windows(2).all(|w| w[1].best <= w[0].best));
    }

    #[test]
    fn initial_points_are_used_first() {
        let net = net_of(vec![(vec![vec![1.0]], vec![0.0], Activation::Linear)]);
        let p = InverseProblem::boxed(vec![0.3], vec![0.0], vec![1.0]);
        let cfg = AdjointConfig {
            restarts: 1,
            max_iters: 1,
            initial_points: vec![vec![0.3]],
            ..AdjointConfig::default()
        };
        let r = adjoint_invert(&net, &p, &cfg).unwrap();
        assert_eq!(r.objective, 0.0);
        let bad = AdjointConfig {
            initial_points: vec![vec![0.3, 0.1]],
            ..cfg
        };
        assert!(adjoint_invert(&net, &p, &bad).is_err());
    }

    #[test]
    fn unsupported_problems() {
        let net = random_network(2, &[3], 1, 0);
        let mut p = InverseProblem::boxed(vec![0.0], vec![0.0; 2], vec![1.0; 2]);
        p.selection_budget = Some(1);
        assert!(adjoint_invert(&net, &p, &AdjointConfig::default()).is_err());
        p.selection_budget = None;
        p.integer = vec![true, false];
        assert!(adjoint_invert(&net, &p, &AdjointConfig::default()).is_err());
        let bad = AdjointConfig {
            patience: 0,
            ..AdjointConfig::default()
        };
        p.integer = vec![false, false];
        assert!(adjoint_invert(&net, &p, &bad).is_err());
    }

    #[test]
    fn hybrid_certifies_the_milp_optimum() {
        for seed in 0..3 {
            let net = random_network(3, &[8, 8], 2, seed);
            let (lo, hi) = (vec![-1.0; 3], vec![1.0; 3]);
            let t = reachable_target(&net, &lo, &hi, seed + 1);
            let p = InverseProblem::boxed(t.iter().map(|v| v + 0.05).collect(), lo, hi);
            let bounds = tighten_bounds(&net, &p.design(), &TightenConfig::default()).unwrap();
            let bnb = BnbConfig::default().with_gap_tol(1e-9);
            let enc = encode_problem(&net, &bounds, &p).unwrap();
            let alone = solve_milp(&enc.model, &bnb, None).unwrap();
            let cfg = AdjointConfig {
                restarts: 4,
                ..AdjointConfig::default()
            };
            let adj = adjoint_invert(&net, &p, &cfg).unwrap();
            let h = hybrid_solve(&net, &bounds, &p, &cfg, &bnb).unwrap();
            assert_eq!(h.report.status, SolveStatus::Optimal);
            assert!((h.report.incumbent_obj - alone.incumbent_obj).abs() < 1e-6);
            assert!(h.report.incumbent_obj <= adj.objective + 1e-9);
            let x = h.report.incumbent.as_ref().unwrap();
            assert!(h.encoded.soundness_error(&net, x).unwrap() < 1e-6);
            let gaps: Vec<f64> = h.trace.events.iter().map(|e| e.gap).collect();
            assert!(gaps.windows(2).all(|w| w[1] <= w[0] + 1e-12), "{gaps:?}");
        }
    }

    #[test]
    fn csv_format() {
        let trace = GapTrace {
            events: vec![
                GapEvent {
                    time: 0.0,
                    incumbent: f64::NAN,
                    relaxed_bound: 0.25,
                    gap: f64::INFINITY,
                    source: Source::Milp,
                },
                GapEvent {
                    time: 0.5,
                    incumbent: 0.5,
                    relaxed_bound: 0.25,
                    gap: 0.5,
                    source: Source::Adjoint,
                },
            ],
        };
        assert_eq!(
            trace.to_csv(),
            "time_s,incumbent,relaxed_bound,gap,source\n0.000000,,0.25,inf,milp\n0.500000,0.5,0.25,0.5,adjoint\n"
        );
        assert_eq!(trace.time_to_gap(0.5), Some(0.5));
        assert_eq!(trace.time_to_gap(0.1), None);
    }
}
