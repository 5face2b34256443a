use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::time::Instant;

use anyhow::{bail, Context};
use reluinv::adjoint::{hybrid_solve, AdjointConfig};
use reluinv::bounds::{bounds_for_robustness, cache_key, interval_bounds, tighten_bounds, BoundsTable, Census, TightenConfig};
use reluinv::encoder::{encode_problem, EncodedProblem};
use reluinv::milp::lp_format::write_lp;
use reluinv::milp::{solve_milp, BnbConfig, MilpModel, ObjSense, Sense, SolveReport, SolveStatus, VarKind};
use reluinv::network::load_network;
use reluinv::problem::{load_problem, DesignConstraints, InverseProblem, RobustnessSpec};
use reluinv::synth::{random_network, reachable_target};
use reluinv::Network;
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::args::*;
use crate::config::Defaults;
use crate::solution::*;

/// What a command prints and the process exit code.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub code: i32,
    pub stdout: String,
}

pub const EXIT_OK: i32 = 0;
pub const EXIT_TIME_LIMIT: i32 = 2;
pub const EXIT_INFEASIBLE: i32 = 3;
pub const EXIT_INPUT: i32 = 4;

const SUPPORT_TOL: f64 = 1e-6;

fn file_digest(path: &Path) -> anyhow::Result<String> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn write_or_print(path: Option<&Path>, text: &str) -> anyhow::Result<String> {
    match path {
        Some(p) => {
            fs::write(p, text).with_context(|| format!("writing {}", p.display()))?;
            Ok(String::new())
        }
        None => Ok(text.to_string()),
    }
}

pub fn forward(args: &ForwardArgs) -> anyhow::Result<Outcome> {
    let net = load_network(&args.network)?;
    let y = net.output(&args.input)?;
    Ok(Outcome {
        code: EXIT_OK,
        stdout: format!("{}\n", serde_json::to_string(&y)?),
    })
}

fn tighten_config(b: &BoundArgs, d: &Defaults, seed: u64, include_output: bool) -> TightenConfig {
    TightenConfig {
        t_max: b.t_max.unwrap_or(d.t_max),
        jobs: b.jobs.unwrap_or(d.jobs),
        include_output,
        bnb: BnbConfig {
            seed,
            ..BnbConfig::default()
        },
    }
}

/// The input region the bounds must cover.
fn bounds_region(problem: &InverseProblem) -> anyhow::Result<DesignConstraints> {
    let design = problem.design();
    Ok(match &problem.robustness {
        Some(r) => design.around(&r.candidate, r.epsilon)?,
        None => design,
    })
}

fn compute_bounds(
    net: &Network,
    problem: &InverseProblem,
    b: &BoundArgs,
    d: &Defaults,
    seed: u64,
    cache: Option<&Path>,
) -> anyhow::Result<BoundsTable> {
    let region = bounds_region(problem)?;
    let key = cache_key(net, &region);
    if let Some(path) = cache.filter(|p| p.exists()) {
        let (table, stored) = BoundsTable::load(path)?;
        if stored == key && table.check_for(net).is_ok() {
            return Ok(table);
        }
        eprintln!("bounds cache {} does not match this network and region; recomputing", path.display());
    }
    let robust = problem.robustness.is_some();
    let table = if b.no_tighten {
        interval_bounds(net, &region.lower, &region.upper)?
    } else if let Some(r) = &problem.robustness {
        bounds_for_robustness(net, &r.candidate, r.epsilon, &problem.design(), &tighten_config(b, d, seed, true))?
    } else {
        tighten_bounds(net, &region, &tighten_config(b, d, seed, robust))?
    };
    if let Some(path) = cache {
        table.save(path, &key)?;
    }
    Ok(table)
}

fn census_summary(c: Census) -> CensusSummary {
    CensusSummary {
        stably_active: c.stably_active,
        stably_inactive: c.stably_inactive,
        unstable: c.unstable,
    }
}

pub fn bounds(args: &BoundsArgs, d: &Defaults) -> anyhow::Result<Outcome> {
    let net = load_network(&args.network)?;
    let problem = load_problem(&args.problem)?;
    problem.validate(&net)?;
    let start = Instant::now();
    let table = compute_bounds(&net, &problem, &args.bound, d, d.seed, None)?;
    let elapsed = start.elapsed().as_secs_f64();
    if let Some(out) = &args.out {
        table.save(out, &cache_key(&net, &bounds_region(&problem)?))?;
    }
    let c = table.census();
    let report = json!({
        "stably_active": c.stably_active,
        "stably_inactive": c.stably_inactive,
        "unstable": c.unstable,
        "time_s": elapsed,
    });
    Ok(Outcome {
        code: EXIT_OK,
        stdout: format!("{}\n", serde_json::to_string_pretty(&report)?),
    })
}

/// Settings shared by every solving command, after defaults are applied.
struct Resolved {
    bnb: BnbConfig,
    seed: u64,
}

fn resolve(args: &SolveArgs, d: &Defaults) -> anyhow::Result<Resolved> {
    let seed = args.seed.unwrap_or(d.seed);
    let bnb = BnbConfig {
        time_limit: args.time_limit.unwrap_or(d.time_limit),
        gap_tol: args.gap_tol.unwrap_or(d.gap_tol),
        seed,
        ..BnbConfig::default()
    };
    bnb.validate()?;
    Ok(Resolved { bnb, seed })
}

fn empty_region(e: &anyhow::Error) -> bool {
    matches!(e.downcast_ref::<reluinv::Error>(), Some(reluinv::Error::EmptyRegion(_)))
}

fn box_is_empty(p: &InverseProblem) -> bool {
    p.lower.iter().zip(&p.upper).any(|(lo, hi)| lo > hi)
}

fn exit_code(report: &SolveReport) -> i32 {
    match report.status {
        SolveStatus::Optimal | SolveStatus::Feasible => EXIT_OK,
        SolveStatus::TimeLimit => EXIT_TIME_LIMIT,
        SolveStatus::Infeasible => EXIT_INFEASIBLE,
        SolveStatus::Unbounded => 1,
    }
}

fn designs_of(net: &Network, problem: &InverseProblem, targets: &[Vec<f64>], x0s: &[Vec<f64>]) -> anyhow::Result<Vec<Design>> {
    x0s.iter()
        .zip(targets)
        .map(|(x0, t)| {
            let output = net.output(x0)?;
            Ok(Design {
                target: t.clone(),
                x0: x0.clone(),
                display: problem.to_display(x0),
                loss: reluinv::network::l1_distance(&output, t),
                output,
            })
        })
        .collect()
}

struct Run<'a> {
    command: &'a str,
    args: &'a SolveArgs,
    extra_inputs: Vec<(&'a str, &'a Path)>,
    config: serde_json::Value,
    seed: u64,
    start: Instant,
    bounds_time: f64,
    solve_time: f64,
}

impl Run<'_> {
    fn manifest(&self, first_incumbent: Option<f64>) -> anyhow::Result<Manifest> {
        let mut inputs = BTreeMap::new();
        inputs.insert("network".to_string(), file_digest(&self.args.network)?);
        inputs.insert("problem".to_string(), file_digest(&self.args.problem)?);
        for (name, path) in &self.extra_inputs {
            inputs.insert(name.to_string(), file_digest(path)?);
        }
        Ok(Manifest {
            command: self.command.to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            inputs,
            config: self.config.clone(),
            seed: self.seed,
            timing: Timing {
                wall_time_s: self.start.elapsed().as_secs_f64(),
                bounds_time_s: self.bounds_time,
                solve_time_s: self.solve_time,
                first_incumbent_time_s: first_incumbent,
            },
        })
    }

    fn infeasible(&self) -> anyhow::Result<Outcome> {
        let solution = Solution {
            format_version: SOLUTION_FORMAT_VERSION,
            status: status_name(SolveStatus::Infeasible).into(),
            objective: None,
            resimulated_objective: None,
            relaxed_bound: None,
            gap: None,
            nodes_explored: 0,
            census: CensusSummary {
                stably_active: 0,
                stably_inactive: 0,
                unstable: 0,
            },
            designs: Vec::new(),
            selected: None,
            rounding: None,
            robustness: None,
            manifest: self.manifest(None)?,
        };
        self.finish(solution, EXIT_INFEASIBLE)
    }

    fn finish(&self, solution: Solution, code: i32) -> anyhow::Result<Outcome> {
        let text = solution.to_json();
        let mut stdout = write_or_print(self.args.out.as_deref(), &text)?;
        if self.args.out.is_some() {
            stdout = summary_line(&solution);
        }
        Ok(Outcome { code, stdout })
    }
}

fn summary_line(s: &Solution) -> String {
    let show = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.9}"));
    format!(
        "status {} objective {} bound {} gap {}\n",
        s.status,
        show(s.objective),
        show(s.relaxed_bound),
        show(s.gap)
    )
}

fn build_solution(
    run: &Run,
    net: &Network,
    problem: &InverseProblem,
    table: &BoundsTable,
    enc: &EncodedProblem,
    report: &SolveReport,
) -> anyhow::Result<Solution> {
    let has = report.incumbent.is_some();
    let (designs, selected) = match &report.incumbent {
        Some(x) => {
            let x0s = enc.decode_inputs(x);
            let targets: Vec<Vec<f64>> = enc.copies.iter().map(|c| c.target.clone()).collect();
            let selected = (!enc.selection.is_empty()).then(|| {
                (0..net.input_dim())
                    .filter(|&i| x0s.iter().any(|x0| x0[i].abs() > SUPPORT_TOL))
                    .collect()
            });
            (designs_of(net, problem, &targets, &x0s)?, selected)
        }
        None => (Vec::new(), None),
    };
    let resim = has.then(|| designs.iter().map(|d| d.loss).sum());
    Ok(Solution {
        format_version: SOLUTION_FORMAT_VERSION,
        status: status_name(report.status).into(),
        objective: has.then_some(report.incumbent_obj),
        resimulated_objective: resim,
        relaxed_bound: finite(report.relaxed_bound),
        gap: finite(report.gap),
        nodes_explored: report.nodes_explored,
        census: census_summary(table.census()),
        designs,
        selected,
        rounding: None,
        robustness: None,
        manifest: run.manifest(report.first_incumbent_time)?,
    })
}

fn encode_and_dump(net: &Network, table: &BoundsTable, problem: &InverseProblem, args: &SolveArgs) -> anyhow::Result<EncodedProblem> {
    let enc = encode_problem(net, table, problem)?;
    if let Some(path) = &args.lp_dump {
        fs::write(path, write_lp(&enc.model)).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(enc)
}

fn base_config(args: &SolveArgs, r: &Resolved, d: &Defaults) -> serde_json::Value {
    json!({
        "time_limit": r.bnb.time_limit,
        "gap_tol": r.bnb.gap_tol,
        "integrality_tol": r.bnb.integrality_tol,
        "lp_tol": r.bnb.lp_tol,
        "t_max": args.bound.t_max.unwrap_or(d.t_max),
        "jobs": args.bound.jobs.unwrap_or(d.jobs),
        "tighten": !args.bound.no_tighten,
    })
}

pub fn invert(args: &InvertArgs, d: &Defaults) -> anyhow::Result<Outcome> {
    let s = &args.solve;
    let r = resolve(s, d)?;
    let net = load_network(&s.network)?;
    let mut problem = load_problem(&s.problem)?;
    if problem.robustness.is_some() {
        bail!("the problem file describes a robustness query; use `robust`");
    }
    if args.integer {
        problem.integer = vec![true; problem.lower.len()];
    }
    let mut config = base_config(s, &r, d);
    config["integer"] = json!(problem.integer.clone());
    config["round_compare"] = json!(args.round_compare);
    let mut run = Run {
        command: "invert",
        args: s,
        extra_inputs: Vec::new(),
        config,
        seed: r.seed,
        start: Instant::now(),
        bounds_time: 0.0,
        solve_time: 0.0,
    };
    if box_is_empty(&problem) {
        return run.infeasible();
    }
    problem.validate(&net)?;
    let (mut solution, code) = match solve_inverse(&mut run, &net, &problem, &r, d) {
        Err(e) if empty_region(&e) => return run.infeasible(),
        other => other?,
    };
    if args.round_compare {
        solution.rounding = Some(round_compare(&net, &problem, &r, d, s, solution.objective)?);
        solution.manifest = run.manifest(solution.manifest.timing.first_incumbent_time_s)?;
    }
    run.finish(solution, code)
}

fn solve_inverse(run: &mut Run, net: &Network, problem: &InverseProblem, r: &Resolved, d: &Defaults) -> anyhow::Result<(Solution, i32)> {
    let t = Instant::now();
    let table = compute_bounds(net, problem, &run.args.bound, d, r.seed, run.args.bounds.as_deref())?;
    run.bounds_time = t.elapsed().as_secs_f64();
    let enc = encode_and_dump(net, &table, problem, run.args)?;
    let report = solve_milp(&enc.model, &r.bnb, None)?;
    run.solve_time = report.wall_time;
    let solution = build_solution(run, net, problem, &table, &enc, &report)?;
    Ok((solution, exit_code(&report)))
}

/// Solves the continuous relaxation of an integer problem and rounds it to
/// the nearest feasible integer design.
fn round_compare(
    net: &Network,
    problem: &InverseProblem,
    r: &Resolved,
    d: &Defaults,
    args: &SolveArgs,
    integer_objective: Option<f64>,
) -> anyhow::Result<Rounding> {
    if !problem.has_integers() {
        bail!("--round-compare needs integer design inputs (use --integer or integer flags)");
    }
    let mut cont = problem.clone();
    cont.integer = vec![false; cont.lower.len()];
    let table = compute_bounds(net, &cont, &args.bound, d, r.seed, None)?;
    let enc = encode_problem(net, &table, &cont)?;
    let report = solve_milp(&enc.model, &r.bnb, None)?;
    let Some(x) = &report.incumbent else {
        return Ok(Rounding {
            continuous_objective: None,
            rounded_designs: Vec::new(),
            rounded_objective: None,
            integer_objective,
        });
    };
    let mut rounded = Vec::new();
    let mut total = Some(0.0);
    for (x0, target) in enc.decode_inputs(x).iter().zip(&problem.targets) {
        match nearest_feasible_integer(problem, x0, r)? {
            Some(p) => {
                total = total.map(|t| t + net.l1_loss(&p, target).unwrap_or(f64::NAN));
                rounded.push(p);
            }
            None => total = None,
        }
    }
    Ok(Rounding {
        continuous_objective: Some(report.incumbent_obj),
        rounded_designs: rounded,
        rounded_objective: total,
        integer_objective,
    })
}

/// The integer design closest in L1 to `x0` that satisfies the box and the
/// linear design constraints. Without linear constraints this is plain
/// coordinate rounding.
fn nearest_feasible_integer(problem: &InverseProblem, x0: &[f64], r: &Resolved) -> anyhow::Result<Option<Vec<f64>>> {
    if problem.extra_constraints.is_empty() {
        return Ok(Some(
            x0.iter()
                .enumerate()
                .map(|(i, &v)| {
                    if problem.integer[i] {
                        v.round().clamp(problem.lower[i].ceil(), problem.upper[i].floor())
                    } else {
                        v
                    }
                })
                .collect(),
        ));
    }
    let mut m = MilpModel::new();
    let mut objective = Vec::new();
    let vars: Vec<_> = (0..x0.len())
        .map(|i| {
            let kind = if problem.integer[i] { VarKind::Integer } else { VarKind::Continuous };
            let v = m.add_var(format!("r{i}"), kind, problem.lower[i], problem.upper[i]);
            let dev = m.add_var(format!("dev{i}"), VarKind::Continuous, 0.0, f64::INFINITY);
            m.add_constraint([(dev, 1.0), (v, -1.0)], Sense::Ge, -x0[i]);
            m.add_constraint([(dev, 1.0), (v, 1.0)], Sense::Ge, x0[i]);
            objective.push((dev, 1.0));
            v
        })
        .collect();
    for c in &problem.extra_constraints {
        m.add_constraint(vars.iter().copied().zip(c.coeffs.iter().copied()), c.sense, c.rhs);
    }
    m.set_objective(objective, ObjSense::Minimize, 0.0);
    let rep = solve_milp(&m, &r.bnb, None)?;
    Ok(rep.incumbent.map(|x| vars.iter().map(|v| x[v.0]).collect()))
}

pub fn select(args: &SelectArgs, d: &Defaults) -> anyhow::Result<Outcome> {
    let s = &args.solve;
    let r = resolve(s, d)?;
    let net = load_network(&s.network)?;
    let mut problem = load_problem(&s.problem)?;
    if let Some(b) = args.budget {
        problem.selection_budget = Some(b);
    }
    let Some(budget) = problem.selection_budget else {
        bail!("no selection budget: set selection_budget in the problem file or pass --budget");
    };
    let mut config = base_config(s, &r, d);
    config["selection_budget"] = json!(budget);
    let mut run = Run {
        command: "select",
        args: s,
        extra_inputs: Vec::new(),
        config,
        seed: r.seed,
        start: Instant::now(),
        bounds_time: 0.0,
        solve_time: 0.0,
    };
    if box_is_empty(&problem) {
        return run.infeasible();
    }
    problem.validate(&net)?;
    let (solution, code) = match solve_inverse(&mut run, &net, &problem, &r, d) {
        Err(e) if empty_region(&e) => return run.infeasible(),
        other => other?,
    };
    run.finish(solution, code)
}

pub fn robust(args: &RobustArgs, d: &Defaults) -> anyhow::Result<Outcome> {
    let s = &args.solve;
    let r = resolve(s, d)?;
    let net = load_network(&s.network)?;
    let mut problem = load_problem(&s.problem)?;
    let candidate = match &args.candidate {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let sol = Solution::from_json(&text).with_context(|| format!("parsing {}", path.display()))?;
            match sol.designs.first() {
                Some(d) => d.x0.clone(),
                None => bail!("candidate file {} holds no design", path.display()),
            }
        }
        None => match &problem.robustness {
            Some(r) => r.candidate.clone(),
            None => bail!("no candidate: pass --candidate or set robustness.candidate in the problem file"),
        },
    };
    let epsilon = args
        .epsilon
        .or(problem.robustness.as_ref().map(|r| r.epsilon))
        .unwrap_or(d.epsilon);
    problem.robustness = Some(RobustnessSpec {
        candidate: candidate.clone(),
        epsilon,
    });
    problem.selection_budget = None;
    problem.targets.truncate(1);
    let mut config = base_config(s, &r, d);
    config["epsilon"] = json!(epsilon);
    let mut run = Run {
        command: "robust",
        args: s,
        extra_inputs: args.candidate.as_deref().map(|p| ("candidate", p)).into_iter().collect(),
        config,
        seed: r.seed,
        start: Instant::now(),
        bounds_time: 0.0,
        solve_time: 0.0,
    };
    if box_is_empty(&problem) {
        return run.infeasible();
    }
    problem.validate(&net)?;
    let (mut solution, code) = match solve_inverse(&mut run, &net, &problem, &r, d) {
        Err(e) if empty_region(&e) => return run.infeasible(),
        other => other?,
    };
    let target = &problem.targets[0];
    let witness = solution
        .designs
        .first()
        .map(|w| w.x0.iter().zip(&candidate).map(|(a, b)| a - b).collect());
    solution.robustness = Some(Robustness {
        nominal_deviation: net.l1_loss(&candidate, target)?,
        worst_case_deviation: (solution.status == "optimal").then(|| solution.objective).flatten(),
        witness_perturbation: witness,
        candidate,
        epsilon,
    });
    run.finish(solution, code)
}

pub fn hybrid(args: &HybridArgs, d: &Defaults) -> anyhow::Result<Outcome> {
    let s = &args.solve;
    let r = resolve(s, d)?;
    let net = load_network(&s.network)?;
    let problem = load_problem(&s.problem)?;
    let adjoint = AdjointConfig {
        restarts: args.restarts.unwrap_or(d.restarts),
        max_iters: args.max_iters.unwrap_or(AdjointConfig::default().max_iters),
        patience: args.patience.unwrap_or(AdjointConfig::default().patience),
        learning_rate: args.learning_rate.unwrap_or(AdjointConfig::default().learning_rate),
        seed: r.seed,
        ..AdjointConfig::default()
    };
    adjoint.validate()?;
    let mut config = base_config(s, &r, d);
    config["adjoint"] = serde_json::to_value(&adjoint)?;
    let mut run = Run {
        command: "hybrid",
        args: s,
        extra_inputs: Vec::new(),
        config,
        seed: r.seed,
        start: Instant::now(),
        bounds_time: 0.0,
        solve_time: 0.0,
    };
    if box_is_empty(&problem) {
        return run.infeasible();
    }
    problem.validate(&net)?;
    let t = Instant::now();
    let table = match compute_bounds(&net, &problem, &s.bound, d, r.seed, s.bounds.as_deref()) {
        Err(e) if empty_region(&e) => return run.infeasible(),
        other => other?,
    };
    run.bounds_time = t.elapsed().as_secs_f64();
    let out = hybrid_solve(&net, &table, &problem, &adjoint, &r.bnb)?;
    run.solve_time = out.report.wall_time;
    if let Some(path) = &s.lp_dump {
        fs::write(path, write_lp(&out.encoded.model)).with_context(|| format!("writing {}", path.display()))?;
    }
    if let Some(path) = &args.trace {
        fs::write(path, out.trace.to_csv()).with_context(|| format!("writing {}", path.display()))?;
    }
    let solution = build_solution(&run, &net, &problem, &table, &out.encoded, &out.report)?;
    run.finish(solution, exit_code(&out.report))
}

/// One row of the scalability sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub sweep: &'static str,
    pub depth: usize,
    pub width: usize,
    pub mean_time: f64,
    pub gap: f64,
}

pub fn bench_rows(args: &BenchArgs, d: &Defaults) -> anyhow::Result<Vec<BenchRow>> {
    let seed = args.seed.unwrap_or(d.seed);
    let bnb = BnbConfig {
        time_limit: args.time_limit.unwrap_or(d.time_limit),
        gap_tol: d.gap_tol,
        seed,
        ..BnbConfig::default()
    };
    anyhow::ensure!(args.instances >= 1, "--instances must be at least 1");
    let mut sizes: Vec<(&'static str, Vec<usize>)> = args.depths.iter().map(|&l| ("depth", vec![args.depth_width; l])).collect();
    sizes.extend(args.widths.iter().map(|&w| ("width", vec![w])));
    let (lo, hi) = (vec![-1.0; args.inputs], vec![1.0; args.inputs]);
    let mut rows = Vec::new();
    for (sweep, hidden) in sizes {
        let mut total = 0.0;
        let mut worst_gap: f64 = 0.0;
        for i in 0..args.instances {
            let s = seed.wrapping_mul(1000).wrapping_add(i as u64);
            let net = random_network(args.inputs, &hidden, args.outputs, s);
            let target: Vec<f64> = reachable_target(&net, &lo, &hi, s + 1).iter().map(|v| v + 0.1).collect();
            let problem = InverseProblem::boxed(target, lo.clone(), hi.clone());
            let start = Instant::now();
            let table = compute_bounds(&net, &problem, &args.bound, d, s, None)?;
            let enc = encode_problem(&net, &table, &problem)?;
            let report = solve_milp(&enc.model, &bnb, None)?;
            total += start.elapsed().as_secs_f64();
            worst_gap = worst_gap.max(report.gap);
        }
        rows.push(BenchRow {
            sweep,
            depth: hidden.len(),
            width: hidden[0],
            mean_time: total / args.instances as f64,
            gap: worst_gap,
        });
    }
    Ok(rows)
}

pub fn bench_csv(rows: &[BenchRow]) -> String {
    let mut out = String::from("sweep,depth,width,mean_time,gap\n");
    for r in rows {
        let gap = if r.gap.is_finite() { format!("{:?}", r.gap) } else { "inf".into() };
        out.push_str(&format!("{},{},{},{:.6},{}\n", r.sweep, r.depth, r.width, r.mean_time, gap));
    }
    out
}

pub fn bench(args: &BenchArgs, d: &Defaults) -> anyhow::Result<Outcome> {
    let rows = bench_rows(args, d)?;
    Ok(Outcome {
        code: EXIT_OK,
        stdout: write_or_print(args.out.as_deref(), &bench_csv(&rows))?,
    })
}
