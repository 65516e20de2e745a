//! Brute-force checks of the maximum-entropy trajectory model on instances
//! small enough to enumerate every trajectory.
//!
//! Nothing here is used by the recovery loop; it exists to validate the
//! gradient structure the loop relies on (the derivative of `log Z` is the
//! Boltzmann expectation of the features).

use nalgebra::{DMatrix, DVector};

use crate::demo::{trajectory_features, Trajectory};
use crate::error::{Error, Result};
use crate::model::{dot, CmdpModel, FeatureKind, Policy, WeightPair};
use crate::visitation::{policy_feature_expectation, state_visitation};

/// Default refusal threshold for enumeration.
pub const ENUMERATION_CAP: usize = 2_000_000;
/// Largest ensemble accepted by [`maxent_primal_check`].
pub const PRIMAL_SEARCH_MAX_TRAJECTORIES: usize = 3;

/// Every trajectory of a fixed horizon with nonzero dynamics probability.
#[derive(Debug, Clone)]
pub struct TrajectoryEnsemble {
    pub trajectories: Vec<Trajectory>,
    /// `log p0(s_1) + sum_t log p(s_{t+1} | s_t, a_t)`; policy-free.
    pub dyn_logprob: Vec<f64>,
    pub horizon: usize,
}

impl TrajectoryEnsemble {
    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }
}

/// How trajectory potentials are formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BoltzmannVariant {
    /// `exp(w_r . phi_r(tau) - lambda w_c . phi_c(tau))` over dynamically possible paths.
    #[default]
    PotentialOnly,
    /// The same potential multiplied by the path's dynamics probability.
    DynamicsWeighted,
}

pub fn enumerate_trajectories(model: &CmdpModel, horizon: usize) -> Result<TrajectoryEnsemble> {
    enumerate_trajectories_capped(model, horizon, ENUMERATION_CAP)
}

pub fn enumerate_trajectories_capped(
    model: &CmdpModel,
    horizon: usize,
    cap: usize,
) -> Result<TrajectoryEnsemble> {
    if horizon == 0 {
        return Err(Error::InvalidArgument("horizon must be at least 1".into()));
    }
    let bound = ((model.n_states() * model.n_actions()) as f64).powi(horizon as i32);
    if bound > cap as f64 {
        return Err(Error::EnumerationCap { count: bound, cap });
    }
    let mut ensemble = TrajectoryEnsemble {
        trajectories: Vec::new(),
        dyn_logprob: Vec::new(),
        horizon,
    };
    let mut path = Vec::with_capacity(horizon);
    for (s, &p) in model.p0().iter().enumerate() {
        if p > 0.0 {
            extend(model, horizon, s, p.ln(), &mut path, &mut ensemble);
        }
    }
    Ok(ensemble)
}

fn extend(
    model: &CmdpModel,
    horizon: usize,
    s: usize,
    logp: f64,
    path: &mut Vec<(usize, usize)>,
    out: &mut TrajectoryEnsemble,
) {
    for a in 0..model.n_actions() {
        path.push((s, a));
        if path.len() == horizon {
            out.trajectories.push(Trajectory {
                steps: path.clone(),
            });
            out.dyn_logprob.push(logp);
        } else {
            for (next, &p) in model.transition_row(s, a).iter().enumerate() {
                if p > 0.0 {
                    extend(model, horizon, next, logp + p.ln(), path, out);
                }
            }
        }
        path.pop();
    }
}

fn potentials(
    ensemble: &TrajectoryEnsemble,
    model: &CmdpModel,
    weights: &WeightPair,
    lambda: f64,
    variant: BoltzmannVariant,
) -> Result<Vec<f64>> {
    weights.check_dims(model)?;
    Ok(ensemble
        .trajectories
        .iter()
        .zip(&ensemble.dyn_logprob)
        .map(|(traj, &logp)| {
            let fr = trajectory_features(traj, model, FeatureKind::Reward);
            let fc = trajectory_features(traj, model, FeatureKind::Constraint);
            let base = dot(&weights.w_r, &fr) - lambda * dot(&weights.w_c, &fc);
            match variant {
                BoltzmannVariant::PotentialOnly => base,
                BoltzmannVariant::DynamicsWeighted => base + logp,
            }
        })
        .collect())
}

fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// `log sum_tau exp(w_r . phi_r(tau) - lambda w_c . phi_c(tau))`.
pub fn log_partition(
    ensemble: &TrajectoryEnsemble,
    model: &CmdpModel,
    weights: &WeightPair,
    lambda: f64,
) -> Result<f64> {
    log_partition_with(
        ensemble,
        model,
        weights,
        lambda,
        BoltzmannVariant::PotentialOnly,
    )
}

pub fn log_partition_with(
    ensemble: &TrajectoryEnsemble,
    model: &CmdpModel,
    weights: &WeightPair,
    lambda: f64,
    variant: BoltzmannVariant,
) -> Result<f64> {
    Ok(log_sum_exp(&potentials(
        ensemble, model, weights, lambda, variant,
    )?))
}

/// Boltzmann distribution over the ensemble.
pub fn boltzmann_probs(
    ensemble: &TrajectoryEnsemble,
    model: &CmdpModel,
    weights: &WeightPair,
    lambda: f64,
) -> Result<Vec<f64>> {
    boltzmann_probs_with(
        ensemble,
        model,
        weights,
        lambda,
        BoltzmannVariant::PotentialOnly,
    )
}

pub fn boltzmann_probs_with(
    ensemble: &TrajectoryEnsemble,
    model: &CmdpModel,
    weights: &WeightPair,
    lambda: f64,
    variant: BoltzmannVariant,
) -> Result<Vec<f64>> {
    let pot = potentials(ensemble, model, weights, lambda, variant)?;
    Ok(softmax(&pot))
}

fn softmax(pot: &[f64]) -> Vec<f64> {
    let lz = log_sum_exp(pot);
    pot.iter().map(|p| (p - lz).exp()).collect()
}

/// Trajectory probabilities induced by running `policy` through the dynamics.
pub fn policy_probs(ensemble: &TrajectoryEnsemble, policy: &Policy) -> Vec<f64> {
    ensemble
        .trajectories
        .iter()
        .zip(&ensemble.dyn_logprob)
        .map(|(traj, &logp)| {
            traj.steps
                .iter()
                .fold(logp.exp(), |acc, &(s, a)| acc * policy.prob(s, a))
        })
        .collect()
}

/// `sum_tau p(tau) phi_x(tau)`.
pub fn exact_pfe(
    ensemble: &TrajectoryEnsemble,
    probs: &[f64],
    model: &CmdpModel,
    kind: FeatureKind,
) -> Result<Vec<f64>> {
    if probs.len() != ensemble.len() {
        return Err(Error::dim(
            "exact_pfe probabilities",
            ensemble.len(),
            probs.len(),
        ));
    }
    let mut out = vec![0.0; model.feature_dim(kind)];
    for (traj, &p) in ensemble.trajectories.iter().zip(probs) {
        if p == 0.0 {
            continue;
        }
        for (o, f) in out.iter_mut().zip(trajectory_features(traj, model, kind)) {
            *o += p * f;
        }
    }
    Ok(out)
}

/// Central finite-difference gradient of `log Z` with respect to one weight vector.
pub fn log_partition_gradient_fd(
    ensemble: &TrajectoryEnsemble,
    model: &CmdpModel,
    weights: &WeightPair,
    lambda: f64,
    kind: FeatureKind,
    step: f64,
) -> Result<Vec<f64>> {
    let dim = model.feature_dim(kind);
    (0..dim)
        .map(|i| {
            let mut plus = weights.clone();
            let mut minus = weights.clone();
            let (p, m) = match kind {
                FeatureKind::Reward => (&mut plus.w_r, &mut minus.w_r),
                FeatureKind::Constraint => (&mut plus.w_c, &mut minus.w_c),
            };
            p[i] += step;
            m[i] -= step;
            let lp = log_partition(ensemble, model, &plus, lambda)?;
            let lm = log_partition(ensemble, model, &minus, lambda)?;
            Ok((lp - lm) / (2.0 * step))
        })
        .collect()
}

/// Shannon entropy in nats.
pub fn entropy(p: &[f64]) -> f64 {
    -p.iter()
        .filter(|&&v| v > 0.0)
        .map(|&v| v * v.ln())
        .sum::<f64>()
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrimalReport {
    pub boltzmann_entropy: f64,
    /// Largest entropy among feasible distributions found by the search.
    pub best_feasible_entropy: f64,
    /// `boltzmann_entropy - best_feasible_entropy`; nonnegative when the
    /// Boltzmann distribution is the entropy maximizer.
    pub entropy_gap: f64,
    /// Sup-norm distance between the Boltzmann moments and the targets.
    pub moment_residual: f64,
    pub feasible_points: usize,
}

impl PrimalReport {
    pub fn passed(&self, tol: f64) -> bool {
        self.moment_residual <= 1e-6 && self.entropy_gap >= -tol
    }
}

/// Searches the moment-matching distributions over a small ensemble on a
/// simplex grid (each grid point is projected onto the moment constraints)
/// and compares their entropy with the Boltzmann distribution's.
pub fn maxent_primal_check(
    ensemble: &TrajectoryEnsemble,
    model: &CmdpModel,
    efe_r: &[f64],
    efe_c: &[f64],
    weights: &WeightPair,
    lambda: f64,
    grid_step: f64,
) -> Result<PrimalReport> {
    let n = ensemble.len();
    if n == 0 || n > PRIMAL_SEARCH_MAX_TRAJECTORIES {
        return Err(Error::EnumerationCap {
            count: n as f64,
            cap: PRIMAL_SEARCH_MAX_TRAJECTORIES,
        });
    }
    let p_star = boltzmann_probs(ensemble, model, weights, lambda)?;
    let moments = |q: &[f64]| -> Result<Vec<f64>> {
        let mut m = exact_pfe(ensemble, q, model, FeatureKind::Reward)?;
        m.extend(exact_pfe(ensemble, q, model, FeatureKind::Constraint)?);
        Ok(m)
    };
    let target: Vec<f64> = efe_r.iter().chain(efe_c).copied().collect();
    let moment_residual = moments(&p_star)?
        .iter()
        .zip(&target)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);

    // constraint rows: one per feature coordinate plus normalization
    let feats: Vec<Vec<f64>> = ensemble
        .trajectories
        .iter()
        .map(|t| {
            let mut f = trajectory_features(t, model, FeatureKind::Reward);
            f.extend(trajectory_features(t, model, FeatureKind::Constraint));
            f
        })
        .collect();
    let k = target.len() + 1;
    let c = DMatrix::from_fn(k, n, |i, j| if i + 1 == k { 1.0 } else { feats[j][i] });
    let mut rhs = target.clone();
    rhs.push(1.0);
    let rhs = DVector::from_vec(rhs);
    let cct_pinv = (&c * c.transpose())
        .pseudo_inverse(1e-12)
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;

    let ticks = (1.0 / grid_step).round() as usize;
    let mut best = f64::NEG_INFINITY;
    let mut feasible = 0;
    let mut visit = |q: DVector<f64>| {
        let q = &q - c.transpose() * (&cct_pinv * (&c * &q - &rhs));
        if q.iter().all(|&v| v >= -1e-12) && (&c * &q - &rhs).amax() <= 1e-6 {
            let clipped: Vec<f64> = q.iter().map(|v| v.max(0.0)).collect();
            feasible += 1;
            best = best.max(entropy(&clipped));
        }
    };
    match n {
        1 => visit(DVector::from_element(1, 1.0)),
        2 => {
            for i in 0..=ticks {
                let a = i as f64 / ticks as f64;
                visit(DVector::from_vec(vec![a, 1.0 - a]));
            }
        }
        _ => {
            for i in 0..=ticks {
                for j in 0..=ticks - i {
                    let a = i as f64 / ticks as f64;
                    let b = j as f64 / ticks as f64;
                    visit(DVector::from_vec(vec![a, b, (1.0 - a - b).max(0.0)]));
                }
            }
        }
    }
    let h_star = entropy(&p_star);
    Ok(PrimalReport {
        boltzmann_entropy: h_star,
        best_feasible_entropy: best,
        entropy_gap: h_star - best,
        moment_residual,
        feasible_points: feasible,
    })
}

/// One line of the oracle suite.
#[derive(Debug, Clone, serde::Serialize)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, passed: bool, detail: String) -> CheckResult {
    CheckResult {
        name,
        passed,
        detail,
    }
}

/// Two states, two actions, every transition positive.
pub fn tiny_dense_model() -> CmdpModel {
    CmdpModel::new(
        vec![
            vec![vec![0.7, 0.3], vec![0.2, 0.8]],
            vec![vec![0.4, 0.6], vec![0.9, 0.1]],
        ],
        vec![0.6, 0.4],
        0.9,
        vec![vec![0.3], vec![1.0]],
        vec![vec![0.5, 0.1], vec![0.2, 0.9]],
    )
    .expect("valid built-in model")
}

/// Three states, two actions, sparse dynamics.
pub fn tiny_three_state_model() -> CmdpModel {
    CmdpModel::new(
        vec![
            vec![vec![0.5, 0.5, 0.0], vec![0.0, 0.3, 0.7]],
            vec![vec![0.0, 0.2, 0.8], vec![1.0, 0.0, 0.0]],
            vec![vec![0.1, 0.0, 0.9], vec![0.0, 0.6, 0.4]],
        ],
        vec![0.5, 0.25, 0.25],
        0.8,
        vec![vec![0.0, 1.0], vec![0.5, 0.2], vec![1.0, 0.0]],
        vec![vec![0.3], vec![0.0], vec![1.2]],
    )
    .expect("valid built-in model")
}

/// Three trajectories of length one (one per start state); the constant
/// constraint feature leaves a one-dimensional set of moment matches.
pub fn tiny_bandit_model() -> CmdpModel {
    CmdpModel::new(
        vec![
            vec![vec![1.0, 0.0, 0.0]],
            vec![vec![0.0, 1.0, 0.0]],
            vec![vec![0.0, 0.0, 1.0]],
        ],
        vec![0.2, 0.3, 0.5],
        0.9,
        vec![vec![0.0], vec![0.5], vec![1.0]],
        vec![vec![0.5], vec![0.5], vec![0.5]],
    )
    .expect("valid built-in model")
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Runs every oracle property on the built-in instances.
pub fn run_oracle_suite() -> Result<Vec<CheckResult>> {
    let mut out = Vec::new();

    let dense = tiny_dense_model();
    let ens2 = enumerate_trajectories(&dense, 2)?;
    out.push(check(
        "enumeration count (2x2, T=2)",
        ens2.len() == 16,
        format!("{} trajectories", ens2.len()),
    ));

    let zero = WeightPair::new(vec![0.0], vec![0.0, 0.0]);
    let lz = log_partition(&ens2, &dense, &zero, 1.0)?;
    out.push(check(
        "log Z with zero weights = log #trajectories",
        (lz - (ens2.len() as f64).ln()).abs() < 1e-12,
        format!("{lz:.15}"),
    ));

    let ens3 = enumerate_trajectories(&dense, 3)?;
    let w = WeightPair::new(vec![0.7], vec![0.4, 0.6]);
    let lambda = 0.8;
    let p = boltzmann_probs(&ens3, &dense, &w, lambda)?;
    let sum: f64 = p.iter().sum();
    out.push(check(
        "Boltzmann probabilities sum to one",
        (sum - 1.0).abs() < 1e-12,
        format!("sum = {sum:.15}"),
    ));

    let e_r = exact_pfe(&ens3, &p, &dense, FeatureKind::Reward)?;
    let fd_r = log_partition_gradient_fd(&ens3, &dense, &w, lambda, FeatureKind::Reward, 1e-6)?;
    let err_r = max_abs_diff(&e_r, &fd_r);
    out.push(check(
        "d log Z / d w_r = E[phi_r]",
        err_r <= 1e-5,
        format!("max error {err_r:.2e}"),
    ));

    let e_c = exact_pfe(&ens3, &p, &dense, FeatureKind::Constraint)?;
    let fd_c = log_partition_gradient_fd(&ens3, &dense, &w, lambda, FeatureKind::Constraint, 1e-6)?;
    let expect_c: Vec<f64> = e_c.iter().map(|v| -lambda * v).collect();
    let err_c = max_abs_diff(&expect_c, &fd_c);
    out.push(check(
        "d log Z / d w_c = -lambda E[phi_c]",
        err_c <= 1e-5,
        format!("max error {err_c:.2e}"),
    ));

    let pot = potentials(&ens3, &dense, &w, lambda, BoltzmannVariant::PotentialOnly)?;
    let shifted: Vec<f64> = pot.iter().map(|v| v + 3.7).collect();
    let shift_err = max_abs_diff(&softmax(&pot), &softmax(&shifted));
    out.push(check(
        "Boltzmann invariant to potential shift",
        shift_err < 1e-14,
        format!("max error {shift_err:.2e}"),
    ));

    let three = tiny_three_state_model();
    let ens = enumerate_trajectories(&three, 4)?;
    let pi = Policy::new(vec![vec![0.3, 0.7], vec![0.5, 0.5], vec![0.9, 0.1]])?;
    let probs = policy_probs(&ens, &pi);
    let table = state_visitation(&three, &pi, 4)?;
    let mut worst: f64 = 0.0;
    for kind in [FeatureKind::Reward, FeatureKind::Constraint] {
        let exact = exact_pfe(&ens, &probs, &three, kind)?;
        let svf = policy_feature_expectation(&table, &three, kind)?;
        worst = worst.max(max_abs_diff(&exact, &svf));
    }
    out.push(check(
        "visitation PFE = enumeration PFE (3 states, T=4)",
        worst <= 1e-9,
        format!("max error {worst:.2e}"),
    ));

    let bandit = tiny_bandit_model();
    let ensb = enumerate_trajectories(&bandit, 1)?;
    let wb = WeightPair::new(vec![1.3], vec![1.0]);
    let pb = boltzmann_probs(&ensb, &bandit, &wb, 0.5)?;
    let efe_r = exact_pfe(&ensb, &pb, &bandit, FeatureKind::Reward)?;
    let efe_c = exact_pfe(&ensb, &pb, &bandit, FeatureKind::Constraint)?;
    let report = maxent_primal_check(&ensb, &bandit, &efe_r, &efe_c, &wb, 0.5, 1e-3)?;
    out.push(check(
        "Boltzmann maximizes entropy among moment matches",
        report.passed(1e-9),
        format!(
            "gap {:.3e} over {} feasible points",
            report.entropy_gap, report.feasible_points
        ),
    ));

    Ok(out)
}
