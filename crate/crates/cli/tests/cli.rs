use std::path::{Path, PathBuf};
use std::process::Command;

use reluinv::milp::Sense;
use reluinv::network::{save_network, Activation, Layer, Matrix, Network};
use reluinv::oracle::{enumerate_patterns, enumerate_selection};
use reluinv::problem::{save_problem, InverseProblem, LinearConstraint, RobustnessSpec};
use reluinv::synth::random_network;
use reluinv_cli::solution::Solution;
use tempfile::TempDir;

fn net_of(layers: Vec<(Vec<Vec<f64>>, Vec<f64>, Activation)>) -> Network {
    Network::new(
        layers
            .into_iter()
            .map(|(w, b, a)| Layer::new(Matrix::from_rows(&w).unwrap(), b, a).unwrap())
            .collect(),
    )
    .unwrap()
}

struct Run {
    code: i32,
    stdout: String,
    stderr: String,
}

fn reluinv(args: &[&str]) -> Run {
    reluinv_env(args, None)
}

fn reluinv_env(args: &[&str], config: Option<&Path>) -> Run {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_reluinv"));
    cmd.args(args).env_remove("RELUINV_CONFIG");
    if let Some(c) = config {
        cmd.env("RELUINV_CONFIG", c);
    }
    let out = cmd.output().unwrap();
    Run {
        code: out.status.code().unwrap(),
        stdout: String::from_utf8(out.stdout).unwrap(),
        stderr: String::from_utf8(out.stderr).unwrap(),
    }
}

struct Files {
    dir: TempDir,
}

impl Files {
    fn new() -> Self {
        Self { dir: tempfile::tempdir().unwrap() }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn net(&self, name: &str, net: &Network) -> String {
        let p = self.path(name);
        save_network(net, &p).unwrap();
        p.to_string_lossy().into_owned()
    }

    fn problem(&self, name: &str, p: &InverseProblem) -> String {
        let path = self.path(name);
        save_problem(p, &path).unwrap();
        path.to_string_lossy().into_owned()
    }

    fn s(&self, name: &str) -> String {
        self.path(name).to_string_lossy().into_owned()
    }

    fn solution(&self, name: &str) -> Solution {
        Solution::from_json(&std::fs::read_to_string(self.path(name)).unwrap()).unwrap()
    }
}

fn without_timing(text: &str) -> String {
    let mut v: serde_json::Value = serde_json::from_str(text).unwrap();
    v["manifest"].as_object_mut().unwrap().remove("timing");
    serde_json::to_string_pretty(&v).unwrap()
}

#[test]
fn forward_examples() {
    let f = Files::new();
    let id = f.net("id.json", &net_of(vec![(vec![vec![1.0]], vec![0.0], Activation::Linear)]));
    let r = reluinv(&["forward", "--network", &id, "--input", "0.5"]);
    assert_eq!((r.code, r.stdout.trim()), (0, "[0.5]"));

    let clamp = f.net(
        "clamp.json",
        &net_of(vec![
            (vec![vec![-1.0]], vec![0.0], Activation::Relu),
            (vec![vec![1.0]], vec![0.0], Activation::Linear),
        ]),
    );
    let r = reluinv(&["forward", "--network", &clamp, "--input", "0.5"]);
    assert_eq!(r.stdout.trim(), "[0.0]");

    let net = random_network(2, &[3], 2, 42);
    let seeded = f.net("seeded.json", &net);
    let r = reluinv(&["forward", "--network", &seeded, "--input", "0.3,0.7"]);
    let got: Vec<f64> = serde_json::from_str(&r.stdout).unwrap();
    assert_eq!(got, net.output(&[0.3, 0.7]).unwrap());

    let r = reluinv(&["forward", "--network", &seeded, "--input", "0.3"]);
    assert_eq!(r.code, 4);
    assert!(r.stderr.contains("dimension"), "{}", r.stderr);
    let r = reluinv(&["forward", "--network", &f.s("missing.json"), "--input", "0.3"]);
    assert_eq!(r.code, 4);
    let r = reluinv(&["forward"]);
    assert_eq!(r.code, 4);
}

#[test]
fn bounds_census() {
    let f = Files::new();
    // Units relu(x), relu(-x), relu(x + 2), relu(x - 2) over [-1, 1].
    let net = net_of(vec![
        (vec![vec![1.0], vec![-1.0], vec![1.0], vec![1.0]], vec![0.0, 0.0, 2.0, -2.0], Activation::Relu),
        (vec![vec![1.0, 1.0, 1.0, 1.0]], vec![0.0], Activation::Linear),
    ]);
    let n = f.net("n.json", &net);
    let p = f.problem("p.json", &InverseProblem::boxed(vec![0.0], vec![-1.0], vec![1.0]));
    let out = f.s("b.json");
    let r = reluinv(&["bounds", "--network", &n, "--problem", &p, "--out", &out]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let census: serde_json::Value = serde_json::from_str(&r.stdout).unwrap();
    assert_eq!(census["unstable"], 2);
    assert_eq!(census["stably_active"], 1);
    assert_eq!(census["stably_inactive"], 1);
    assert!(Path::new(&out).exists());

    let big = random_network(3, &[10, 10], 1, 5);
    let n = f.net("big.json", &big);
    let mut prob = InverseProblem::boxed(vec![0.0], vec![-1.0; 3], vec![1.0; 3]);
    let full = f.problem("full.json", &prob);
    prob.robustness = Some(RobustnessSpec {
        candidate: vec![0.1, 0.2, -0.3],
        epsilon: 0.01,
    });
    let local = f.problem("local.json", &prob);
    let count = |p: &str| -> u64 {
        let r = reluinv(&["bounds", "--network", &n, "--problem", p, "--t-max", "5"]);
        assert_eq!(r.code, 0, "{}", r.stderr);
        serde_json::from_str::<serde_json::Value>(&r.stdout).unwrap()["unstable"].as_u64().unwrap()
    };
    assert!(count(&local) < count(&full));
}

#[test]
fn invert_matches_oracle_and_is_deterministic() {
    let f = Files::new();
    let net = net_of(vec![
        (vec![vec![1.0, -1.0], vec![0.5, 1.0]], vec![0.1, -0.2], Activation::Relu),
        (vec![vec![1.0, -2.0]], vec![0.3], Activation::Linear),
    ]);
    let problem = InverseProblem::boxed(vec![-0.9], vec![-1.0; 2], vec![1.0; 2]);
    let n = f.net("n.json", &net);
    let p = f.problem("p.json", &problem);
    let cache = f.s("cache.json");
    let lp = f.s("model.lp");
    let mut texts = Vec::new();
    for i in 0..2 {
        let out = f.s(&format!("sol{i}.json"));
        let r = reluinv(&[
            "invert", "--network", &n, "--problem", &p, "--gap-tol", "1e-9", "--bounds", &cache, "--lp-dump", &lp, "--out", &out,
        ]);
        assert_eq!(r.code, 0, "{}", r.stderr);
        assert!(r.stdout.starts_with("status optimal"));
        texts.push(std::fs::read_to_string(&out).unwrap());
    }
    assert_eq!(without_timing(&texts[0]), without_timing(&texts[1]));
    let s = f.solution("sol0.json");
    let oracle = enumerate_patterns(&net, &problem).unwrap();
    assert!((s.objective.unwrap() - oracle.objective).abs() < 1e-6);
    assert!((s.resimulated_objective.unwrap() - s.objective.unwrap()).abs() < 1e-6);
    assert!(s.gap.unwrap() <= 1e-9);
    assert_eq!(s.manifest.inputs.len(), 2);
    assert!(std::fs::read_to_string(&lp).unwrap().starts_with("Minimize"));
}

#[test]
fn invert_empty_box_is_infeasible() {
    let f = Files::new();
    let n = f.net("n.json", &random_network(2, &[3], 1, 0));
    let mut problem = InverseProblem::boxed(vec![0.0], vec![0.0; 2], vec![1.0; 2]);
    problem.lower[1] = 2.0;
    let p = f.problem("p.json", &problem);
    let r = reluinv(&["invert", "--network", &n, "--problem", &p]);
    assert_eq!(r.code, 3);
    let s = Solution::from_json(&r.stdout).unwrap();
    assert_eq!(s.status, "infeasible");

    // Linear constraints that no design satisfies.
    let mut problem = InverseProblem::boxed(vec![0.0], vec![0.0; 2], vec![1.0; 2]);
    problem.extra_constraints = vec![LinearConstraint {
        coeffs: vec![1.0, 1.0],
        sense: Sense::Ge,
        rhs: 3.0,
    }];
    let p = f.problem("p2.json", &problem);
    let r = reluinv(&["invert", "--network", &n, "--problem", &p]);
    assert_eq!(r.code, 3, "{}", r.stderr);
}

#[test]
fn round_compare_prefers_integer_optimum() {
    let f = Files::new();
    // A narrow peak of height 1 at 1.45 plus a ramp that reaches 0.45 at 3.
    let net = net_of(vec![
        (vec![vec![1.0]; 4], vec![-1.35, -1.45, -1.55, -2.0], Activation::Relu),
        (vec![vec![10.0, -20.0, 10.0, 0.45]], vec![0.0], Activation::Linear),
    ]);
    let n = f.net("n.json", &net);
    let p = f.problem("p.json", &InverseProblem::boxed(vec![1.0], vec![0.0], vec![3.0]));
    let out = f.s("sol.json");
    let r = reluinv(&["invert", "--network", &n, "--problem", &p, "--integer", "--round-compare", "--out", &out]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let s = f.solution("sol.json");
    let rounding = s.rounding.unwrap();
    assert!(rounding.continuous_objective.unwrap().abs() < 1e-9);
    assert_eq!(rounding.rounded_designs, vec![vec![1.0]]);
    assert!((rounding.rounded_objective.unwrap() - 1.0).abs() < 1e-9);
    assert!((rounding.integer_objective.unwrap() - 0.55).abs() < 1e-9);
    assert_eq!(s.designs[0].x0, vec![3.0]);
}

#[test]
fn round_compare_respects_linear_constraints() {
    let f = Files::new();
    let net = random_network(3, &[6], 1, 12);
    let mut problem = InverseProblem::boxed(vec![0.3], vec![0.0; 3], vec![4.0; 3]);
    problem.integer = vec![true; 3];
    problem.extra_constraints = vec![LinearConstraint {
        coeffs: vec![1.0; 3],
        sense: Sense::Eq,
        rhs: 4.0,
    }];
    let n = f.net("n.json", &net);
    let p = f.problem("p.json", &problem);
    let out = f.s("sol.json");
    let r = reluinv(&["invert", "--network", &n, "--problem", &p, "--round-compare", "--out", &out]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let rounding = f.solution("sol.json").rounding.unwrap();
    let x = &rounding.rounded_designs[0];
    assert_eq!(x.iter().sum::<f64>(), 4.0);
    assert!(x.iter().all(|v| v.fract() == 0.0));
    assert!(rounding.integer_objective.unwrap() <= rounding.rounded_objective.unwrap() + 1e-9);
}

#[test]
fn select_matches_enumeration() {
    let f = Files::new();
    let net = random_network(4, &[6], 1, 17);
    let mut problem = InverseProblem::boxed(vec![0.35], vec![0.0; 4], vec![1.0; 4]);
    problem.targets.push(vec![-0.1]);
    let n = f.net("n.json", &net);
    let p = f.problem("p.json", &problem);
    let mut prev = f64::INFINITY;
    for d in 1..=2 {
        let out = f.s(&format!("sel{d}.json"));
        let r = reluinv(&["select", "--network", &n, "--problem", &p, "--budget", &d.to_string(), "--gap-tol", "1e-9", "--out", &out]);
        assert_eq!(r.code, 0, "{}", r.stderr);
        let s = f.solution(&format!("sel{d}.json"));
        let oracle = enumerate_selection(&net, &problem, d).unwrap();
        assert!((s.objective.unwrap() - oracle.objective).abs() < 1e-6);
        let selected = s.selected.unwrap();
        assert!(selected.len() <= d);
        assert!(s.objective.unwrap() <= prev + 1e-9);
        prev = s.objective.unwrap();
    }
    let p = f.problem("none.json", &InverseProblem::boxed(vec![0.0], vec![0.0; 4], vec![1.0; 4]));
    assert_eq!(reluinv(&["select", "--network", &n, "--problem", &p]).code, 4);
}

#[test]
fn robust_linear_law_and_candidate_files() {
    let f = Files::new();
    let w = vec![0.7, -1.3, 0.4];
    let net = net_of(vec![(vec![w.clone()], vec![0.1], Activation::Linear)]);
    let n = f.net("n.json", &net);
    let mut problem = InverseProblem::boxed(vec![0.05], vec![-2.0; 3], vec![2.0; 3]);
    let x = vec![0.2, -0.1, 0.3];
    problem.robustness = Some(RobustnessSpec {
        candidate: x.clone(),
        epsilon: 0.25,
    });
    let p = f.problem("p.json", &problem);
    let r = reluinv(&["robust", "--network", &n, "--problem", &p]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let s = Solution::from_json(&r.stdout).unwrap();
    let rb = s.robustness.unwrap();
    let nominal = net.l1_loss(&x, &[0.05]).unwrap();
    let analytic = nominal + 0.25 * w.iter().map(|v| v.abs()).sum::<f64>();
    assert!((rb.worst_case_deviation.unwrap() - analytic).abs() < 1e-6);
    assert!(rb.witness_perturbation.unwrap().iter().all(|d| (d.abs() - 0.25).abs() < 1e-9));

    let r = reluinv(&["robust", "--network", &n, "--problem", &p, "--epsilon", "0"]);
    let s = Solution::from_json(&r.stdout).unwrap();
    assert!((s.objective.unwrap() - nominal).abs() < 1e-9);

    // Candidate taken from a solution file, default epsilon.
    let plain = f.problem("plain.json", &InverseProblem::boxed(vec![0.05], vec![-2.0; 3], vec![2.0; 3]));
    let sol = f.s("inv.json");
    assert_eq!(reluinv(&["invert", "--network", &n, "--problem", &plain, "--out", &sol]).code, 0);
    let r = reluinv(&["robust", "--network", &n, "--problem", &plain, "--candidate", &sol]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let s = Solution::from_json(&r.stdout).unwrap();
    let rb = s.robustness.unwrap();
    assert_eq!(rb.epsilon, 1e-3);
    assert!((rb.worst_case_deviation.unwrap() - (rb.nominal_deviation + 1e-3 * 2.4)).abs() < 1e-6);
    assert!(s.manifest.inputs.contains_key("candidate"));
}

#[test]
fn hybrid_writes_trace() {
    let f = Files::new();
    let net = random_network(3, &[8, 8], 2, 3);
    let n = f.net("n.json", &net);
    let p = f.problem("p.json", &InverseProblem::boxed(vec![0.4, -0.3], vec![-1.0; 3], vec![1.0; 3]));
    let trace = f.s("trace.csv");
    let out = f.s("h.json");
    let r = reluinv(&["hybrid", "--network", &n, "--problem", &p, "--restarts", "4", "--trace", &trace, "--out", &out, "--gap-tol", "1e-9"]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let csv = std::fs::read_to_string(&trace).unwrap();
    assert!(csv.starts_with("time_s,incumbent,relaxed_bound,gap,source\n"));
    assert!(csv.lines().count() > 1);
    let h = f.solution("h.json");
    let inv = f.s("i.json");
    assert_eq!(reluinv(&["invert", "--network", &n, "--problem", &p, "--out", &inv, "--gap-tol", "1e-9"]).code, 0);
    let i = f.solution("i.json");
    assert!((h.objective.unwrap() - i.objective.unwrap()).abs() < 1e-6);
}

#[test]
fn bench_csv_columns() {
    let f = Files::new();
    let out = f.s("bench.csv");
    let r = reluinv(&["bench", "--depths", "1,2", "--depth-width", "4", "--widths", "4,6", "--instances", "1", "--out", &out]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let csv = std::fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "sweep,depth,width,mean_time,gap");
    assert_eq!(lines.len(), 5);
    assert!(lines[1].starts_with("depth,1,4,"));
    assert!(lines[4].starts_with("width,1,6,"));
}

#[test]
fn config_file_supplies_defaults() {
    let f = Files::new();
    let n = f.net("n.json", &random_network(2, &[3], 1, 0));
    let p = f.problem("p.json", &InverseProblem::boxed(vec![0.2], vec![0.0; 2], vec![1.0; 2]));
    let cfg = f.path("cfg.toml");
    std::fs::write(&cfg, "time_limit = 7.5\nt_max = 3\n").unwrap();
    let r = reluinv_env(&["invert", "--network", &n, "--problem", &p], Some(&cfg));
    assert_eq!(r.code, 0, "{}", r.stderr);
    let s = Solution::from_json(&r.stdout).unwrap();
    assert_eq!(s.manifest.config["time_limit"], 7.5);
    assert_eq!(s.manifest.config["t_max"], 3.0);
    let r = reluinv_env(&["invert", "--network", &n, "--problem", &p, "--time-limit", "9"], Some(&cfg));
    assert_eq!(Solution::from_json(&r.stdout).unwrap().manifest.config["time_limit"], 9.0);

    std::fs::write(&cfg, "tmax = 3\n").unwrap();
    assert_eq!(reluinv_env(&["invert", "--network", &n, "--problem", &p], Some(&cfg)).code, 4);
}
