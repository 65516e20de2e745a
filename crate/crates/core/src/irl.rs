//! Reward and constraint recovery by maximum-entropy feature matching.
//!
//! Each outer iteration solves the forward CMDP for the current weights,
//! computes policy feature expectations through the visitation recursion,
//! takes an exponentiated-gradient step on both weight vectors and projects
//! them back (in KL divergence) onto the probability simplex; the constraint
//! weights are additionally projected onto the half-space `w . pfe_c <= 1`.

use std::fmt::Write as _;

use log::{debug, info, warn};
use serde::{Deserialize, Serialize};

use crate::demo::{empirical_feature_expectation, Dataset};
use crate::error::{Error, Result};
use crate::forward::{solve_cmdp, SolveStatus};
use crate::model::{dot, CmdpModel, FeatureKind, Policy, WeightPair, BUDGET};
use crate::visitation::{policy_feature_expectation, state_visitation};

/// Exponent clamp in [`egd_step`].
pub const EXPONENT_CLAMP: f64 = 50.0;
/// Entries below this are raised to it after each projection.
pub const ENTRY_FLOOR: f64 = 1e-12;

const MU_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IrlConfig {
    pub learning_rate: f64,
    pub max_iters: usize,
    pub tol: f64,
    pub horizon: usize,
    pub seed: u64,
    /// Lower bound applied to the solver multiplier in the constraint
    /// gradient; `None` uses the multiplier as returned.
    pub lambda_floor: Option<f64>,
}

impl IrlConfig {
    pub fn new(horizon: usize) -> Self {
        Self {
            learning_rate: 0.1,
            max_iters: 500,
            tol: 1e-4,
            horizon,
            seed: 0,
            lambda_floor: Some(1e-3),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(Error::InvalidArgument(
                "learning_rate must be positive".into(),
            ));
        }
        if !(self.tol > 0.0) {
            return Err(Error::InvalidArgument("tol must be positive".into()));
        }
        if self.horizon == 0 {
            return Err(Error::InvalidArgument("horizon must be at least 1".into()));
        }
        if let Some(f) = self.lambda_floor {
            if !(f >= 0.0) {
                return Err(Error::InvalidArgument(
                    "lambda_floor must be nonnegative".into(),
                ));
            }
        }
        Ok(())
    }
}

/// One row of the convergence history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iter: usize,
    pub lambda: f64,
    pub cost_value: f64,
    pub efe_gap_r: f64,
    pub efe_gap_c: f64,
    pub dw_r: f64,
    pub dw_c: f64,
    /// `efe_gap_r + lambda * efe_gap_c`
    pub objective: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IrlResult {
    pub weights: WeightPair,
    pub policy: Policy,
    pub lambda: f64,
    pub cost_value: f64,
    pub history: Vec<IterationRecord>,
    pub converged: bool,
    pub iterations: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IrlResultJson {
    pub w_r: Vec<f64>,
    pub w_c: Vec<f64>,
    pub lambda: f64,
    pub policy: Vec<Vec<f64>>,
    pub history: Vec<IterationRecord>,
    pub converged: bool,
}

impl IrlResult {
    pub fn to_json(&self) -> IrlResultJson {
        IrlResultJson {
            w_r: self.weights.w_r.clone(),
            w_c: self.weights.w_c.clone(),
            lambda: self.lambda,
            policy: self.policy.rows(),
            history: self.history.clone(),
            converged: self.converged,
        }
    }

    /// Tab-separated log, one line per iteration.
    pub fn convergence_log(&self) -> String {
        let mut out = String::from("iter\tlambda\tcost_value\tefe_gap_r\tefe_gap_c\tdw_r\tdw_c\n");
        for h in &self.history {
            let _ = writeln!(
                out,
                "{}\t{:.12e}\t{:.12e}\t{:.12e}\t{:.12e}\t{:.12e}\t{:.12e}",
                h.iter, h.lambda, h.cost_value, h.efe_gap_r, h.efe_gap_c, h.dw_r, h.dw_c
            );
        }
        out
    }
}

/// Gradients of the negative log-likelihood:
/// `g_r = pfe_r - efe_r`, `g_c = lambda (efe_c - pfe_c)`.
pub fn gradients(
    efe_r: &[f64],
    pfe_r: &[f64],
    efe_c: &[f64],
    pfe_c: &[f64],
    lambda: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if efe_r.len() != pfe_r.len() {
        return Err(Error::dim(
            "reward feature expectations",
            efe_r.len(),
            pfe_r.len(),
        ));
    }
    if efe_c.len() != pfe_c.len() {
        return Err(Error::dim(
            "constraint feature expectations",
            efe_c.len(),
            pfe_c.len(),
        ));
    }
    if !(lambda >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "lambda must be nonnegative, got {lambda}"
        )));
    }
    let g_r = efe_r.iter().zip(pfe_r).map(|(e, p)| p - e).collect();
    let g_c = efe_c
        .iter()
        .zip(pfe_c)
        .map(|(e, p)| lambda * (e - p))
        .collect();
    Ok((g_r, g_c))
}

/// Multiplicative update `w_i exp(-kappa g_i)` with the exponent clamped to
/// `[-EXPONENT_CLAMP, EXPONENT_CLAMP]`.
pub fn egd_step(w: &[f64], g: &[f64], kappa: f64) -> Vec<f64> {
    w.iter()
        .zip(g)
        .map(|(&wi, &gi)| {
            let e = -kappa * gi;
            let clamped = e.clamp(-EXPONENT_CLAMP, EXPONENT_CLAMP);
            if clamped != e {
                debug!("egd exponent {e:.3e} clamped");
            }
            wi * clamped.exp()
        })
        .collect()
}

/// KL projection onto the probability simplex, i.e. `w / |w|_1`.
pub fn kl_project_simplex(w: &[f64]) -> Result<Vec<f64>> {
    if let Some(i) = w.iter().position(|&v| !(v >= 0.0) || !v.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "projection input must be finite and nonnegative (entry {i} = {})",
            w[i]
        )));
    }
    let total: f64 = w.iter().sum();
    if total <= 0.0 {
        return Err(Error::InvalidArgument(
            "cannot project the zero vector".into(),
        ));
    }
    Ok(w.iter().map(|v| v / total).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct HalfspaceProjection {
    pub weights: Vec<f64>,
    /// Multiplier of the half-space constraint; zero when inactive.
    pub mu: f64,
}

/// KL projection onto `{v in simplex : v . f <= 1}`.
///
/// The minimizer is the tilted distribution `v_i ∝ w_i exp(-mu f_i)`; `mu` is
/// found by bisection on the decreasing map `mu -> v(mu) . f`.
pub fn kl_project_simplex_halfspace(w: &[f64], f: &[f64]) -> Result<HalfspaceProjection> {
    if w.len() != f.len() {
        return Err(Error::dim("half-space projection", w.len(), f.len()));
    }
    if let Some(i) = f.iter().position(|&v| !(v >= 0.0) || !v.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "constraint expectation entry {i} = {} must be finite and nonnegative",
            f[i]
        )));
    }
    let base = kl_project_simplex(w)?;
    if dot(&base, f) <= BUDGET {
        return Ok(HalfspaceProjection {
            weights: base,
            mu: 0.0,
        });
    }
    // only the support of w can carry mass
    let f_min = base
        .iter()
        .zip(f)
        .filter(|(b, _)| **b > 0.0)
        .map(|(_, &fi)| fi)
        .fold(f64::INFINITY, f64::min);
    if f_min > BUDGET {
        return Err(Error::ProjectionInfeasible {
            min_expectation: f_min,
        });
    }
    let tilt = |mu: f64| -> Vec<f64> {
        let raw: Vec<f64> = base
            .iter()
            .zip(f)
            .map(|(&b, &fi)| b * (-mu * (fi - f_min)).exp())
            .collect();
        let z: f64 = raw.iter().sum();
        raw.into_iter().map(|v| v / z).collect()
    };
    let limit = || -> Vec<f64> {
        let raw: Vec<f64> = base
            .iter()
            .zip(f)
            .map(|(&b, &fi)| if fi == f_min { b } else { 0.0 })
            .collect();
        let z: f64 = raw.iter().sum();
        raw.into_iter().map(|v| v / z).collect()
    };

    let mut lo = 0.0;
    let mut hi = 1.0;
    loop {
        if dot(&tilt(hi), f) <= BUDGET {
            break;
        }
        lo = hi;
        hi *= 2.0;
        if hi > 1e300 {
            // only reachable when min f equals the budget exactly
            return Ok(HalfspaceProjection {
                weights: limit(),
                mu: f64::INFINITY,
            });
        }
    }
    while hi - lo > MU_TOL * hi.max(1.0) {
        let mid = 0.5 * (lo + hi);
        if dot(&tilt(mid), f) > BUDGET {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(HalfspaceProjection {
        weights: tilt(hi),
        mu: hi,
    })
}

/// Lifts entries below [`ENTRY_FLOOR`] to the floor, then renormalizes.
pub fn floor_entries(w: &mut [f64]) {
    if w.iter().any(|&v| v < ENTRY_FLOOR) {
        w.iter_mut().for_each(|v| *v = v.max(ENTRY_FLOOR));
        let z: f64 = w.iter().sum();
        w.iter_mut().for_each(|v| *v /= z);
    }
}

fn l1_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

/// `r(s) = w_r . phi_r(s)` and `c(s) = w_c . phi_c(s)`.
pub fn recover_functions(weights: &WeightPair, model: &CmdpModel) -> Result<(Vec<f64>, Vec<f64>)> {
    Ok((
        model.state_payoff(&weights.w_r, FeatureKind::Reward)?,
        model.state_payoff(&weights.w_c, FeatureKind::Constraint)?,
    ))
}

/// Runs the alternating recovery loop from uniform initial weights.
pub fn run_irl(model: &CmdpModel, data: &Dataset, config: &IrlConfig) -> Result<IrlResult> {
    config.validate()?;
    model.validate()?;
    if data.horizon != config.horizon {
        return Err(Error::HorizonMismatch {
            dataset: data.horizon,
            config: config.horizon,
        });
    }
    let efe_r = empirical_feature_expectation(data, model, FeatureKind::Reward)?;
    let efe_c = empirical_feature_expectation(data, model, FeatureKind::Constraint)?;
    let mut weights = WeightPair::uniform(
        model.feature_dim(FeatureKind::Reward),
        model.feature_dim(FeatureKind::Constraint),
    );
    let mut history = Vec::new();
    let mut converged = false;

    for iter in 0..config.max_iters {
        let fwd = solve_cmdp(model, &weights)?;
        if fwd.status == SolveStatus::Infeasible {
            return Err(Error::Infeasible {
                iteration: iter,
                min_cost: fwd.cost_value,
            });
        }
        let lambda = match config.lambda_floor {
            Some(floor) if fwd.lambda < floor => {
                debug!(
                    "iter {iter}: lambda {:.3e} raised to floor {floor:.1e}",
                    fwd.lambda
                );
                floor
            }
            _ => fwd.lambda,
        };
        let table = state_visitation(model, &fwd.policy, config.horizon)?;
        let pfe_r = policy_feature_expectation(&table, model, FeatureKind::Reward)?;
        let pfe_c = policy_feature_expectation(&table, model, FeatureKind::Constraint)?;
        let (g_r, g_c) = gradients(&efe_r, &pfe_r, &efe_c, &pfe_c, lambda)?;

        let mut w_r = kl_project_simplex(&egd_step(&weights.w_r, &g_r, config.learning_rate))?;
        let stepped_c = egd_step(&weights.w_c, &g_c, config.learning_rate);
        let mut w_c = match kl_project_simplex_halfspace(&stepped_c, &pfe_c) {
            Ok(p) => p.weights,
            Err(Error::ProjectionInfeasible { min_expectation }) => {
                warn!(
                    "iter {iter}: budget projection infeasible (min expectation {min_expectation:.4}); normalizing only"
                );
                kl_project_simplex(&stepped_c)?
            }
            Err(e) => return Err(e),
        };
        floor_entries(&mut w_r);
        floor_entries(&mut w_c);

        let record = IterationRecord {
            iter,
            lambda: fwd.lambda,
            cost_value: fwd.cost_value,
            efe_gap_r: l1_dist(&efe_r, &pfe_r),
            efe_gap_c: l1_dist(&efe_c, &pfe_c),
            dw_r: l1_dist(&w_r, &weights.w_r),
            dw_c: l1_dist(&w_c, &weights.w_c),
            objective: l1_dist(&efe_r, &pfe_r) + lambda * l1_dist(&efe_c, &pfe_c),
        };
        debug!(
            "iter {iter}: lambda={:.4e} cost={:.6} gap_r={:.4e} gap_c={:.4e} dw={:.3e}/{:.3e}",
            record.lambda,
            record.cost_value,
            record.efe_gap_r,
            record.efe_gap_c,
            record.dw_r,
            record.dw_c
        );
        let moved = record.dw_r.max(record.dw_c);
        history.push(record);
        weights = WeightPair::new(w_r, w_c);
        if moved < config.tol {
            converged = true;
            break;
        }
    }

    let fwd = solve_cmdp(model, &weights)?;
    if fwd.status == SolveStatus::Infeasible {
        return Err(Error::Infeasible {
            iteration: history.len(),
            min_cost: fwd.cost_value,
        });
    }
    info!(
        "irl finished after {} iterations (converged: {converged}), lambda={:.4e}",
        history.len(),
        fwd.lambda
    );
    Ok(IrlResult {
        weights,
        policy: fwd.policy,
        lambda: fwd.lambda,
        cost_value: fwd.cost_value,
        iterations: history.len(),
        history,
        converged,
    })
}
