//! Forward CMDP solver.
//!
//! The constrained problem is solved through its Lagrangian dual: for a
//! multiplier `lambda >= 0` the unconstrained MDP with payoff `r - lambda c`
//! is solved by policy iteration, and `lambda` is located by bisection on the
//! achieved cost. When the optimum sits on a breakpoint, the two deterministic
//! policies on either side are mixed in occupancy space so that the budget is
//! met with equality.

use log::debug;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::model::{dot, CmdpModel, FeatureKind, Policy, WeightPair, BUDGET};

/// Upper bound on the searched multiplier.
pub const LAMBDA_CAP: f64 = 1e6;
/// Bisection stops once the multiplier bracket is this narrow.
pub const LAMBDA_TOL: f64 = 1e-9;

const TIE_TOL: f64 = 1e-12;
/// Costs this far above the budget still count as within it (rounding).
const FEAS_TOL: f64 = 1e-9;

fn within_budget(cost: f64) -> bool {
    cost <= BUDGET + FEAS_TOL
}
const MAX_POLICY_ITERS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolveStatus {
    Optimal,
    Infeasible,
}

/// Result of [`solve_cmdp`].
///
/// For an infeasible problem `policy` is the cost-minimizing policy,
/// `cost_value` is the minimal achievable cost and `lambda` is [`LAMBDA_CAP`].
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardSolution {
    pub policy: Policy,
    pub lambda: f64,
    pub reward_value: f64,
    pub cost_value: f64,
    pub status: SolveStatus,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ForwardSolutionJson {
    pub policy: Vec<Vec<f64>>,
    pub lambda: f64,
    pub reward_value: f64,
    pub cost_value: f64,
    pub status: SolveStatus,
}

impl ForwardSolution {
    pub fn to_json(&self) -> ForwardSolutionJson {
        ForwardSolutionJson {
            policy: self.policy.rows(),
            lambda: self.lambda,
            reward_value: self.reward_value,
            cost_value: self.cost_value,
            status: self.status,
        }
    }
}

/// Optimal deterministic policy and its value for the discounted MDP with a
/// per-state payoff. Ties in the greedy step go to the lowest action index.
pub fn solve_unconstrained(model: &CmdpModel, payoff: &[f64]) -> Result<(Policy, Vec<f64>)> {
    let (actions, value) = policy_iteration(model, payoff, None)?;
    Ok((Policy::deterministic(&actions, model.n_actions()), value))
}

/// Policy iteration with exact evaluation, optionally warm-started.
fn policy_iteration(
    model: &CmdpModel,
    payoff: &[f64],
    warm: Option<&[usize]>,
) -> Result<(Vec<usize>, Vec<f64>)> {
    let (ns, na) = (model.n_states(), model.n_actions());
    let mut actions = warm.map_or_else(|| vec![0; ns], <[usize]>::to_vec);
    let mut q = vec![0.0; na];
    let mut value = Vec::new();
    for _ in 0..MAX_POLICY_ITERS {
        value = model.policy_value(&Policy::deterministic(&actions, na), payoff)?;
        let mut changed = false;
        for s in 0..ns {
            q_values(model, payoff, &value, s, &mut q);
            let best = greedy(&q);
            // only switch on a strict improvement so the iteration cannot cycle
            if q[best] > q[actions[s]] + tie_eps(q[best]) {
                actions[s] = best;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    // canonical tie-breaking on the converged value
    let mut canonical = actions.clone();
    for (s, a) in canonical.iter_mut().enumerate() {
        q_values(model, payoff, &value, s, &mut q);
        *a = greedy(&q);
    }
    if canonical != actions {
        value = model.policy_value(&Policy::deterministic(&canonical, na), payoff)?;
    }
    Ok((canonical, value))
}

#[inline]
fn tie_eps(v: f64) -> f64 {
    TIE_TOL * (1.0 + v.abs())
}

#[inline]
fn q_values(model: &CmdpModel, payoff: &[f64], value: &[f64], s: usize, q: &mut [f64]) {
    let gamma = model.gamma();
    for (a, qa) in q.iter_mut().enumerate() {
        *qa = payoff[s] + gamma * dot(model.transition_row(s, a), value);
    }
}

/// Lowest index whose value is within tolerance of the maximum.
fn greedy(q: &[f64]) -> usize {
    let max = q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let eps = tie_eps(max);
    q.iter().position(|&v| v >= max - eps).unwrap_or(0)
}

/// Largest Bellman optimality residual `max_s |max_a Q(s,a) - V(s)|`.
pub fn bellman_residual(model: &CmdpModel, payoff: &[f64], value: &[f64]) -> f64 {
    let mut q = vec![0.0; model.n_actions()];
    (0..model.n_states())
        .map(|s| {
            q_values(model, payoff, value, s, &mut q);
            let best = q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            (best - value[s]).abs()
        })
        .fold(0.0, f64::max)
}

struct Inner {
    actions: Vec<usize>,
    reward: f64,
    cost: f64,
}

struct LagrangianSolver<'a> {
    model: &'a CmdpModel,
    r: Vec<f64>,
    c: Vec<f64>,
    warm: Option<Vec<usize>>,
}

impl LagrangianSolver<'_> {
    fn at(&mut self, lambda: f64) -> Result<Inner> {
        let payoff: Vec<f64> = self
            .r
            .iter()
            .zip(&self.c)
            .map(|(r, c)| r - lambda * c)
            .collect();
        let (actions, _) = policy_iteration(self.model, &payoff, self.warm.as_deref())?;
        self.warm = Some(actions.clone());
        self.evaluate(actions)
    }

    fn evaluate(&self, actions: Vec<usize>) -> Result<Inner> {
        let pi = Policy::deterministic(&actions, self.model.n_actions());
        let (reward, cost) = objective_pair(self.model, &pi, &self.r, &self.c)?;
        Ok(Inner {
            actions,
            reward,
            cost,
        })
    }
}

fn objective_pair(model: &CmdpModel, pi: &Policy, r: &[f64], c: &[f64]) -> Result<(f64, f64)> {
    let rho = model.state_occupancy(pi)?;
    Ok((dot(&rho, r), dot(&rho, c)))
}

/// Maximizes expected discounted reward subject to expected discounted cost
/// at most one.
pub fn solve_cmdp(model: &CmdpModel, weights: &WeightPair) -> Result<ForwardSolution> {
    weights.check_dims(model)?;
    let r = model.state_payoff(&weights.w_r, FeatureKind::Reward)?;
    let c = model.state_payoff(&weights.w_c, FeatureKind::Constraint)?;
    let na = model.n_actions();
    let mut solver = LagrangianSolver {
        model,
        r,
        c,
        warm: None,
    };

    let free = solver.at(0.0)?;
    if within_budget(free.cost) {
        return Ok(ForwardSolution {
            policy: Policy::deterministic(&free.actions, na),
            lambda: 0.0,
            reward_value: free.reward,
            cost_value: free.cost,
            status: SolveStatus::Optimal,
        });
    }

    let neg_c: Vec<f64> = solver.c.iter().map(|c| -c).collect();
    let (min_actions, _) = policy_iteration(model, &neg_c, None)?;
    let min_cost = solver.evaluate(min_actions)?;
    if !within_budget(min_cost.cost) {
        debug!("cmdp infeasible: minimal cost {}", min_cost.cost);
        return Ok(ForwardSolution {
            policy: Policy::deterministic(&min_cost.actions, na),
            lambda: LAMBDA_CAP,
            reward_value: min_cost.reward,
            cost_value: min_cost.cost,
            status: SolveStatus::Infeasible,
        });
    }

    // bracket: cost(lo) > budget >= cost(hi)
    let r_sup = solver.r.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let gap = BUDGET - min_cost.cost;
    let mut hi = if gap > 0.0 && r_sup > 0.0 {
        (r_sup / ((1.0 - model.gamma()) * gap)).min(LAMBDA_CAP)
    } else {
        1.0
    };
    let mut lo = 0.0;
    let mut lo_sol = free;
    let mut hi_sol = loop {
        let sol = solver.at(hi)?;
        if within_budget(sol.cost) {
            break sol;
        }
        lo = hi;
        lo_sol = sol;
        if hi >= LAMBDA_CAP {
            // the greedy policy at the cap still overshoots; fall back to the
            // cost-minimizing policy, which meets the budget
            break solver.evaluate(min_cost.actions.clone())?;
        }
        hi = (hi * 2.0).min(LAMBDA_CAP);
    };
    while hi - lo > LAMBDA_TOL {
        let mid = 0.5 * (lo + hi);
        let sol = solver.at(mid)?;
        if !within_budget(sol.cost) {
            lo = mid;
            lo_sol = sol;
        } else {
            hi = mid;
            hi_sol = sol;
        }
    }
    let lambda = hi;

    let policy = if lo_sol.cost - hi_sol.cost <= 0.0 || hi_sol.cost >= BUDGET {
        Policy::deterministic(&hi_sol.actions, na)
    } else {
        let theta = (BUDGET - hi_sol.cost) / (lo_sol.cost - hi_sol.cost);
        mix_occupancy(
            model,
            &Policy::deterministic(&lo_sol.actions, na),
            &Policy::deterministic(&hi_sol.actions, na),
            theta,
        )?
    };
    let (reward_value, cost_value) = objective_pair(model, &policy, &solver.r, &solver.c)?;
    debug!("cmdp solved: lambda={lambda:.6e} reward={reward_value:.6} cost={cost_value:.9}");
    Ok(ForwardSolution {
        policy,
        lambda,
        reward_value,
        cost_value,
        status: SolveStatus::Optimal,
    })
}

/// Stationary policy whose discounted state-action occupancy equals
/// `theta * occ(a) + (1 - theta) * occ(b)`. States unreached by both fall back to `b`.
pub fn mix_occupancy(model: &CmdpModel, a: &Policy, b: &Policy, theta: f64) -> Result<Policy> {
    let rho_a = model.state_occupancy(a)?;
    let rho_b = model.state_occupancy(b)?;
    let (ns, na) = (model.n_states(), model.n_actions());
    let mut probs = vec![0.0; ns * na];
    for s in 0..ns {
        let wa = theta * rho_a[s];
        let wb = (1.0 - theta) * rho_b[s];
        let z = wa + wb;
        let row = &mut probs[s * na..(s + 1) * na];
        if z > 0.0 {
            for (k, p) in row.iter_mut().enumerate() {
                *p = (wa * a.prob(s, k) + wb * b.prob(s, k)) / z;
            }
        } else {
            row.copy_from_slice(b.row(s));
        }
    }
    Ok(Policy::from_flat_unchecked(ns, na, probs))
}
