//! Exit criteria for the solver, the recovery loop and the CLI. Runs without
//! the libtest harness so every PASS/FAIL line reaches the output; a panic
//! inside a criterion counts as FAIL. Exits nonzero if any criterion fails.

mod common;

use std::time::{Duration, Instant};

use cmdp_irl::cli::{run, Mode, RunConfig};
use cmdp_irl::demo::trajectory_features;
use cmdp_irl::experiment::{run_seeds, summarize, ExperimentConfig};
use cmdp_irl::gridworld::simplex_normalized;
use cmdp_irl::oracle::{
    boltzmann_probs, enumerate_trajectories, exact_pfe, log_partition_gradient_fd, policy_probs,
    tiny_dense_model, tiny_three_state_model,
};
use cmdp_irl::{
    build_gridworld, empirical_feature_expectation, generate_dataset, kl_project_simplex,
    kl_project_simplex_halfspace, policy_feature_expectation, solve_cmdp, state_visitation,
    CmdpModel, Dataset, FeatureKind, GridworldParams, Policy, SolveStatus, WeightPair,
};
use common::{halfspace_grid3, kl, simplex_grid3, sup_dist, value_iteration};

fn report(
    id: &str,
    name: &str,
    ok: bool,
    elapsed: Duration,
    limit: Duration,
    detail: &str,
) -> bool {
    let in_time = elapsed <= limit;
    let pass = ok && in_time;
    println!(
        "{} {id} {name}: {detail} [{:.2} s, limit {} s{}]",
        if pass { "PASS" } else { "FAIL" },
        elapsed.as_secs_f64(),
        limit.as_secs(),
        if in_time { "" } else { ", over time" }
    );
    pass
}

/// Mean and standard error of per-trajectory discounted feature sums.
fn mean_and_se(data: &Dataset, model: &CmdpModel, kind: FeatureKind) -> (Vec<f64>, Vec<f64>) {
    let n = data.len() as f64;
    let d = model.feature_dim(kind);
    let (mut sum, mut sq) = (vec![0.0; d], vec![0.0; d]);
    for traj in &data.trajectories {
        for (i, f) in trajectory_features(traj, model, kind)
            .into_iter()
            .enumerate()
        {
            sum[i] += f;
            sq[i] += f * f;
        }
    }
    let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
    let se = sq
        .iter()
        .zip(&mean)
        .map(|(q, m)| ((q / n - m * m) * n / (n - 1.0)).max(0.0).sqrt() / n.sqrt())
        .collect();
    (mean, se)
}

/// Largest |a - b| / se over coordinates.
fn worst_z(a: &[f64], b: &[f64], se: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .zip(se)
        .map(|((x, y), s)| (x - y).abs() / s.max(1e-300))
        .fold(0.0, f64::max)
}

fn ac1_log_partition_gradient_identity() -> bool {
    let start = Instant::now();
    let m = tiny_dense_model();
    let ens = enumerate_trajectories(&m, 3).unwrap();
    let mut worst = 0.0f64;
    for (w, lambda) in [
        (WeightPair::new(vec![0.7], vec![0.4, 0.6]), 0.8),
        (WeightPair::new(vec![1.0], vec![0.9, 0.1]), 2.5),
        (WeightPair::new(vec![0.2], vec![0.5, 0.5]), 0.0),
    ] {
        let p = boltzmann_probs(&ens, &m, &w, lambda).unwrap();
        let e_r = exact_pfe(&ens, &p, &m, FeatureKind::Reward).unwrap();
        let e_c = exact_pfe(&ens, &p, &m, FeatureKind::Constraint).unwrap();
        let fd_r =
            log_partition_gradient_fd(&ens, &m, &w, lambda, FeatureKind::Reward, 1e-5).unwrap();
        let fd_c =
            log_partition_gradient_fd(&ens, &m, &w, lambda, FeatureKind::Constraint, 1e-5).unwrap();
        let target_c: Vec<f64> = e_c.iter().map(|v| -lambda * v).collect();
        worst = worst
            .max(sup_dist(&fd_r, &e_r))
            .max(sup_dist(&fd_c, &target_c));
    }
    let ok = worst <= 1e-5;
    let pass = report(
        "AC1",
        "d log Z / dw = (E[phi_r], -lambda E[phi_c])",
        ok,
        start.elapsed(),
        Duration::from_secs(1),
        &format!(
            "{} trajectories, worst coordinate error {worst:.2e} (tol 1e-5)",
            ens.len()
        ),
    );
    pass
}

fn ac2_visitation_matches_enumeration_and_rollouts() -> bool {
    let start = Instant::now();
    let m = tiny_three_state_model();
    let pi = Policy::new(vec![vec![0.25, 0.75], vec![0.6, 0.4], vec![1.0, 0.0]]).unwrap();
    let ens = enumerate_trajectories(&m, 4).unwrap();
    let probs = policy_probs(&ens, &pi);
    let table = state_visitation(&m, &pi, 4).unwrap();
    let mut exact_err = 0.0f64;
    for kind in [FeatureKind::Reward, FeatureKind::Constraint] {
        let exact = exact_pfe(&ens, &probs, &m, kind).unwrap();
        let svf = policy_feature_expectation(&table, &m, kind).unwrap();
        exact_err = exact_err.max(sup_dist(&exact, &svf));
    }

    let (grid, _) = build_gridworld(&GridworldParams::default()).unwrap();
    let rows = (0..25)
        .map(|s| match s % 3 {
            0 => vec![0.1, 0.4, 0.1, 0.4],
            1 => vec![0.25; 4],
            _ => vec![0.05, 0.45, 0.05, 0.45],
        })
        .collect();
    let pi = Policy::new(rows).unwrap();
    let data = generate_dataset(&grid, &pi, 50, 200_000, 20_240_601).unwrap();
    let table = state_visitation(&grid, &pi, 50).unwrap();
    let mut z = 0.0f64;
    for kind in [FeatureKind::Reward, FeatureKind::Constraint] {
        let (mc, se) = mean_and_se(&data, &grid, kind);
        let svf = policy_feature_expectation(&table, &grid, kind).unwrap();
        z = z.max(worst_z(&mc, &svf, &se));
    }
    let ok = exact_err <= 1e-9 && z <= 3.0;
    let pass = report(
        "AC2",
        "visitation feature expectations",
        ok,
        start.elapsed(),
        Duration::from_secs(30),
        &format!(
            "3-state T=4 enumeration error {exact_err:.2e} (tol 1e-9); 5x5 T=50 vs 200k rollouts worst |z| {z:.2} (tol 3)"
        ),
    );
    pass
}

/// Iterative evaluation, independent of the library's linear solve.
fn evaluate(m: &CmdpModel, pi: &Policy, payoff: &[f64]) -> f64 {
    let ns = m.n_states();
    let mut v = vec![0.0; ns];
    for _ in 0..2000 {
        v = (0..ns)
            .map(|s| {
                payoff[s]
                    + m.gamma()
                        * (0..m.n_actions())
                            .map(|a| {
                                pi.prob(s, a)
                                    * m.transition_row(s, a)
                                        .iter()
                                        .zip(&v)
                                        .map(|(p, x)| p * x)
                                        .sum::<f64>()
                            })
                            .sum::<f64>()
            })
            .collect();
    }
    m.p0().iter().zip(&v).map(|(p, x)| p * x).sum()
}

fn ac3_forward_solver_contract() -> bool {
    let start = Instant::now();

    // (i) zero cost on the gridworld
    let (grid, raw) = build_gridworld(&GridworldParams::default()).unwrap();
    let truth = simplex_normalized(&raw);
    let w = WeightPair::new(truth.w_r.clone(), vec![0.0; 4]);
    let sol = solve_cmdp(&grid, &w).unwrap();
    let r = grid.state_payoff(&w.w_r, FeatureKind::Reward).unwrap();
    let (vi_actions, _) = value_iteration(&grid, &r);
    let same_actions = sol.policy.argmax_actions() == vi_actions;
    let part_i = same_actions && sol.lambda == 0.0;

    // (ii) 2-state binding CMDP against policy/mixture enumeration
    let m = CmdpModel::new(
        vec![
            vec![vec![0.9, 0.1], vec![0.2, 0.8]],
            vec![vec![0.7, 0.3], vec![0.1, 0.9]],
        ],
        vec![1.0, 0.0],
        0.9,
        vec![vec![0.0], vec![1.0]],
        vec![vec![0.05], vec![0.3]],
    )
    .unwrap();
    let w = WeightPair::new(vec![1.0], vec![1.0]);
    let r = m.state_payoff(&w.w_r, FeatureKind::Reward).unwrap();
    let c = m.state_payoff(&w.w_c, FeatureKind::Constraint).unwrap();
    let points: Vec<(f64, f64)> = common::deterministic_policies(2, 2)
        .iter()
        .map(|p| (evaluate(&m, p, &r), evaluate(&m, p, &c)))
        .collect();
    let mut best = f64::NEG_INFINITY;
    for &(ri, ci) in &points {
        for &(rj, cj) in &points {
            for k in 0..=10_000 {
                let t = k as f64 * 1e-4;
                let (rv, cv) = (t * ri + (1.0 - t) * rj, t * ci + (1.0 - t) * cj);
                if cv <= 1.0 {
                    best = best.max(rv);
                }
            }
        }
    }
    let sol = solve_cmdp(&m, &w).unwrap();
    let slack = sol.lambda * (sol.cost_value - 1.0);
    let part_ii = sol.status == SolveStatus::Optimal
        && sol.lambda > 0.0
        && (sol.reward_value - best).abs() <= 1e-4
        && sol.cost_value <= 1.0 + 1e-6
        && slack.abs() <= 1e-6;

    let pass = report(
        "AC3",
        "forward solver contract",
        part_i && part_ii,
        start.elapsed(),
        Duration::from_secs(5),
        &format!(
            "zero cost: argmax matches value iteration {same_actions}, lambda {}; binding 2-state: reward {:.6} vs oracle {best:.6}, cost {:.8}, lambda {:.4}, lambda*(cost-1) {slack:.1e}",
            if part_i { 0.0 } else { f64::NAN },
            sol.reward_value,
            sol.cost_value,
            sol.lambda
        ),
    );
    pass
}

fn ac4_kl_projections() -> bool {
    let start = Instant::now();
    let mut worst = 0.0f64;
    for w in [
        [0.2, 1.5, 0.7],
        [3.0, 0.1, 0.4],
        [0.05, 0.05, 2.0],
        [1.0, 1.0, 1.0],
    ] {
        let p = kl_project_simplex(&w).unwrap();
        let best = simplex_grid3(1e-3)
            .min_by(|a, b| kl(a, &w).total_cmp(&kl(b, &w)))
            .unwrap();
        worst = worst.max(p.iter().zip(&best).map(|(x, y)| (x - y).abs()).sum());
    }
    let mut worst_h = 0.0f64;
    for (w, f) in [
        ([0.2, 0.5, 0.3], [2.0, 0.4, 1.5]),
        ([0.6, 0.3, 0.1], [1.8, 0.9, 0.2]),
        ([1.0, 1.0, 1.0], [3.0, 0.5, 0.5]),
        ([0.1, 0.1, 0.8], [0.3, 0.6, 1.4]),
    ] {
        let h = kl_project_simplex_halfspace(&w, &f).unwrap();
        let best = halfspace_grid3(&f, 1e-3)
            .min_by(|a, b| kl(a, &w).total_cmp(&kl(b, &w)))
            .unwrap();
        worst_h = worst_h.max(
            h.weights
                .iter()
                .zip(&best)
                .map(|(x, y)| (x - y).abs())
                .sum(),
        );
    }
    let mut idempotent = true;
    let mut mu_zero = true;
    for w in [[0.3, 0.3, 0.4], [0.9, 0.05, 0.05], [0.2, 1.7, 0.1]] {
        let p = kl_project_simplex(&w).unwrap();
        idempotent &= kl_project_simplex(&p).unwrap() == p;
        // feasible after normalization: every f . p <= 1
        let f = [0.5, 1.0, 0.9];
        if p.iter().zip(&f).map(|(a, b)| a * b).sum::<f64>() <= 1.0 {
            mu_zero &= kl_project_simplex_halfspace(&w, &f).unwrap().mu == 0.0;
        }
    }
    let ok = worst <= 2e-3 && worst_h <= 2e-3 && idempotent && mu_zero;
    let pass = report(
        "AC4",
        "KL projections",
        ok,
        start.elapsed(),
        Duration::from_secs(5),
        &format!(
            "simplex vs grid {worst:.1e}, half-space vs grid {worst_h:.1e} (tol 2e-3, 1-norm); idempotent {idempotent}; mu = 0 when feasible {mu_zero}"
        ),
    );
    pass
}

fn e2e_line(cfg: &ExperimentConfig) -> (bool, String, Duration) {
    let start = Instant::now();
    let outcomes = run_seeds(10, 0, cfg).unwrap();
    let s = summarize(&outcomes);
    let ok = s.mean_agreement >= 0.9
        && s.full_agreement_seeds >= 8
        && s.peak_within_one_seeds >= 8
        && s.reward_trend_seeds >= 8;
    let detail = format!(
        "gamma {}: mean agreement {:.1}% (>= 90%), full agreement {}/10 (>= 8), constraint peak within 1 cell {}/10 (>= 8), reward trend {}/10 (>= 8), infeasible ground truths {}/10",
        cfg.gamma,
        100.0 * s.mean_agreement,
        s.full_agreement_seeds,
        s.peak_within_one_seeds,
        s.reward_trend_seeds,
        s.infeasible_truth_seeds
    );
    (ok, detail, start.elapsed())
}

fn ac5_end_to_end_gridworld_recovery() -> bool {
    let mut cfg = ExperimentConfig::default();
    cfg.irl.max_iters = 3000;
    assert_eq!(
        (cfg.gamma, cfg.slip, cfg.samples, cfg.horizon),
        (0.99, 0.3, 100, 200)
    );
    let (ok, detail, elapsed) = e2e_line(&cfg);
    let pass = report(
        "AC5",
        "end-to-end gridworld recovery",
        ok,
        elapsed,
        Duration::from_secs(600),
        &detail,
    );

    // companion at a discount where the ground truth is feasible; reported, not gating
    let companion = ExperimentConfig { gamma: 0.95, ..cfg };
    let (ok95, detail95, elapsed95) = e2e_line(&companion);
    println!(
        "INFO AC5 companion ({}): {detail95} [{:.2} s]",
        if ok95 { "would pass" } else { "would fail" },
        elapsed95.as_secs_f64()
    );
    pass
}

fn ac6_e2e_is_deterministic() -> bool {
    let start = Instant::now();
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    let mut outputs = Vec::new();
    for dir in &dirs {
        let cfg = RunConfig {
            mode: Some(Mode::E2e),
            gamma: 0.95,
            out: dir.path().to_path_buf(),
            ..RunConfig::default()
        };
        run(&cfg).unwrap();
        outputs.push(std::fs::read(dir.path().join("e2e_result.json")).unwrap());
    }
    let ok = outputs[0] == outputs[1] && !outputs[0].is_empty();
    let pass = report(
        "AC6",
        "e2e determinism",
        ok,
        start.elapsed(),
        Duration::from_secs(600),
        &format!(
            "two 10-seed runs, result JSON {} bytes, identical {ok}",
            outputs[0].len()
        ),
    );
    pass
}

fn ac7_empirical_matches_policy_feature_expectation() -> bool {
    let start = Instant::now();
    let params = GridworldParams {
        gamma: 0.95,
        ..GridworldParams::default()
    };
    let (grid, raw) = build_gridworld(&params).unwrap();
    let expert = solve_cmdp(&grid, &simplex_normalized(&raw)).unwrap();
    let data = generate_dataset(&grid, &expert.policy, 200, 50_000, 7).unwrap();
    let table = state_visitation(&grid, &expert.policy, 200).unwrap();
    let mut z = 0.0f64;
    let mut gap = 0.0f64;
    for kind in [FeatureKind::Reward, FeatureKind::Constraint] {
        let efe = empirical_feature_expectation(&data, &grid, kind).unwrap();
        let (mean, se) = mean_and_se(&data, &grid, kind);
        assert!(sup_dist(&efe, &mean) < 1e-12);
        let pfe = policy_feature_expectation(&table, &grid, kind).unwrap();
        z = z.max(worst_z(&efe, &pfe, &se));
        gap = gap.max(sup_dist(&efe, &pfe));
    }
    let pass = report(
        "AC7",
        "empirical vs policy feature expectation",
        z <= 3.0,
        start.elapsed(),
        Duration::from_secs(60),
        &format!("50k demonstrations, sup gap {gap:.2e}, worst |z| {z:.2} (tol 3)"),
    );
    pass
}

type Criterion = (&'static str, fn() -> bool);

fn main() {
    let criteria: [Criterion; 7] = [
        ("AC1", ac1_log_partition_gradient_identity),
        ("AC2", ac2_visitation_matches_enumeration_and_rollouts),
        ("AC3", ac3_forward_solver_contract),
        ("AC4", ac4_kl_projections),
        ("AC5", ac5_end_to_end_gridworld_recovery),
        ("AC6", ac6_e2e_is_deterministic),
        ("AC7", ac7_empirical_matches_policy_feature_expectation),
    ];
    let failed: Vec<&str> = criteria
        .iter()
        .filter(|(id, f)| {
            let ok = std::panic::catch_unwind(f).unwrap_or_else(|_| {
                println!("FAIL {id} panicked");
                false
            });
            !ok
        })
        .map(|(id, _)| *id)
        .collect();
    println!(
        "acceptance: {} passed, {} failed{}",
        criteria.len() - failed.len(),
        failed.len(),
        if failed.is_empty() {
            String::new()
        } else {
            format!(" ({})", failed.join(", "))
        }
    );
    if !failed.is_empty() {
        std::process::exit(1);
    }
}
