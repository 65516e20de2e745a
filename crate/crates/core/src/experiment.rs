//! End-to-end gridworld recovery experiment: sample an instance, solve it,
//! generate demonstrations, recover the weights and score the recovery.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::demo::generate_dataset;
use crate::error::{Error, Result};
use crate::forward::{solve_cmdp, SolveStatus};
use crate::gridworld::{
    build_gridworld, grid_size, render_grids, sample_experiment, simplex_normalized,
    GridworldParams, SlipMode,
};
use crate::irl::{recover_functions, run_irl, IrlConfig, IrlResultJson};
use crate::model::{CmdpModel, WeightPair};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub gamma: f64,
    pub slip: f64,
    pub slip_mode: SlipMode,
    pub horizon: usize,
    pub samples: usize,
    pub irl: IrlConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let horizon = 200;
        Self {
            gamma: 0.99,
            slip: 0.3,
            slip_mode: SlipMode::AllDirections,
            horizon,
            samples: 100,
            irl: IrlConfig::new(horizon),
        }
    }
}

impl ExperimentConfig {
    /// Gridworld parameters for one seed with this configuration's overrides.
    pub fn params_for(&self, seed: u64) -> GridworldParams {
        GridworldParams {
            gamma: self.gamma,
            slip: self.slip,
            slip_mode: self.slip_mode,
            horizon: self.horizon,
            ..sample_experiment(seed)
        }
    }
}

/// Seed for the demonstration dataset of experiment `seed`.
pub fn dataset_seed(seed: u64) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ 0xD1B5_4A32_D192_ED03
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeedStatus {
    Recovered,
    /// The ground-truth CMDP has no policy within budget.
    TruthInfeasible,
    /// The recovery loop met an infeasible intermediate CMDP.
    RecoveryInfeasible,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SeedOutcome {
    pub seed: u64,
    pub status: SeedStatus,
    pub params: GridworldParams,
    pub truth_raw: WeightPair,
    pub truth_normalized: WeightPair,
    pub true_lambda: f64,
    pub true_cost_value: f64,
    pub true_actions: Vec<usize>,
    pub recovered: Option<IrlResultJson>,
    pub recovered_actions: Option<Vec<usize>>,
    /// Fraction of states whose argmax action matches the true policy.
    pub policy_agreement: f64,
    pub true_peak: (usize, usize),
    pub recovered_peak: Option<(usize, usize)>,
    /// Chebyshev distance between the true and recovered constraint peaks.
    pub peak_distance: Option<usize>,
    pub reward_trend_ok: bool,
    pub detail: String,
}

/// Cell `(x, y)` holding the largest value; ties go to the lowest index.
pub fn argmax_cell(values: &[f64], size: usize) -> (usize, usize) {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    (best % size, best / size)
}

pub fn chebyshev(a: (usize, usize), b: (usize, usize)) -> usize {
    a.0.abs_diff(b.0).max(a.1.abs_diff(b.1))
}

/// Mean left-to-right and top-to-bottom differences are both nonnegative.
pub fn reward_trend_ok(reward: &[f64], size: usize) -> bool {
    let (mut dx, mut dy) = (0.0, 0.0);
    for y in 0..size {
        for x in 0..size {
            let s = y * size + x;
            if x + 1 < size {
                dx += reward[s + 1] - reward[s];
            }
            if y + 1 < size {
                dy += reward[s + size] - reward[s];
            }
        }
    }
    dx >= 0.0 && dy >= 0.0
}

fn agreement(a: &[usize], b: &[usize]) -> f64 {
    a.iter().zip(b).filter(|(x, y)| x == y).count() as f64 / a.len() as f64
}

/// Runs the full pipeline for one seed.
pub fn run_seed(seed: u64, config: &ExperimentConfig) -> Result<SeedOutcome> {
    let params = config.params_for(seed);
    let (model, truth_raw) = build_gridworld(&params)?;
    let truth = simplex_normalized(&truth_raw);
    let size = grid_size(&model)?;
    let (_, true_c) = recover_functions(&truth, &model)?;
    let true_peak = argmax_cell(&true_c, size);
    let expert = solve_cmdp(&model, &truth)?;
    let mut outcome = SeedOutcome {
        seed,
        status: SeedStatus::TruthInfeasible,
        params,
        truth_raw,
        truth_normalized: truth.clone(),
        true_lambda: expert.lambda,
        true_cost_value: expert.cost_value,
        true_actions: expert.policy.argmax_actions(),
        recovered: None,
        recovered_actions: None,
        policy_agreement: 0.0,
        true_peak,
        recovered_peak: None,
        peak_distance: None,
        reward_trend_ok: false,
        detail: String::new(),
    };
    if expert.status == SolveStatus::Infeasible {
        outcome.detail = format!(
            "ground-truth CMDP infeasible: minimal cost {:.4} exceeds budget",
            expert.cost_value
        );
        return Ok(outcome);
    }

    let data = generate_dataset(
        &model,
        &expert.policy,
        config.horizon,
        config.samples,
        dataset_seed(seed),
    )?;
    let mut irl_config = config.irl.clone();
    irl_config.horizon = config.horizon;
    irl_config.seed = seed;
    let result = match run_irl(&model, &data, &irl_config) {
        Ok(r) => r,
        Err(Error::Infeasible {
            iteration,
            min_cost,
        }) => {
            outcome.status = SeedStatus::RecoveryInfeasible;
            outcome.detail = format!(
                "recovery hit an infeasible CMDP at iteration {iteration} (min cost {min_cost:.4})"
            );
            return Ok(outcome);
        }
        Err(e) => return Err(e),
    };
    let (rec_r, rec_c) = recover_functions(&result.weights, &model)?;
    let recovered_actions = result.policy.argmax_actions();
    let recovered_peak = argmax_cell(&rec_c, size);
    outcome.status = SeedStatus::Recovered;
    outcome.policy_agreement = agreement(&outcome.true_actions, &recovered_actions);
    outcome.recovered_peak = Some(recovered_peak);
    outcome.peak_distance = Some(chebyshev(true_peak, recovered_peak));
    outcome.reward_trend_ok = reward_trend_ok(&rec_r, size);
    outcome.detail = format!(
        "true:\n{}\nrecovered:\n{}",
        render_grids(&model, &truth, &expert.policy)?,
        render_grids(&model, &result.weights, &result.policy)?
    );
    outcome.recovered_actions = Some(recovered_actions);
    outcome.recovered = Some(result.to_json());
    Ok(outcome)
}

/// Runs seeds `0..n` in parallel; the output is ordered by seed.
pub fn run_seeds(n: u64, first: u64, config: &ExperimentConfig) -> Result<Vec<SeedOutcome>> {
    (first..first + n)
        .into_par_iter()
        .map(|seed| run_seed(seed, config))
        .collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Summary {
    pub seeds: usize,
    pub mean_agreement: f64,
    pub full_agreement_seeds: usize,
    pub peak_within_one_seeds: usize,
    pub reward_trend_seeds: usize,
    pub infeasible_truth_seeds: usize,
}

pub fn summarize(outcomes: &[SeedOutcome]) -> Summary {
    let n = outcomes.len();
    Summary {
        seeds: n,
        mean_agreement: outcomes.iter().map(|o| o.policy_agreement).sum::<f64>() / n.max(1) as f64,
        full_agreement_seeds: outcomes
            .iter()
            .filter(|o| o.policy_agreement == 1.0)
            .count(),
        peak_within_one_seeds: outcomes
            .iter()
            .filter(|o| o.peak_distance.is_some_and(|d| d <= 1))
            .count(),
        reward_trend_seeds: outcomes.iter().filter(|o| o.reward_trend_ok).count(),
        infeasible_truth_seeds: outcomes
            .iter()
            .filter(|o| o.status == SeedStatus::TruthInfeasible)
            .count(),
    }
}

/// Plain-text table, one row per seed.
pub fn summary_table(outcomes: &[SeedOutcome]) -> String {
    let mut out = String::from(
        "seed\tstatus\tagreement_pct\tpeak_distance\ttrue_lambda\trecovered_lambda\titerations\n",
    );
    for o in outcomes {
        let status = match o.status {
            SeedStatus::Recovered => "recovered",
            SeedStatus::TruthInfeasible => "truth_infeasible",
            SeedStatus::RecoveryInfeasible => "recovery_infeasible",
        };
        let (lam, iters) = o
            .recovered
            .as_ref()
            .map_or(("-".to_string(), "-".to_string()), |r| {
                (format!("{:.6e}", r.lambda), r.history.len().to_string())
            });
        out.push_str(&format!(
            "{}\t{}\t{:.1}\t{}\t{:.6e}\t{}\t{}\n",
            o.seed,
            status,
            100.0 * o.policy_agreement,
            o.peak_distance.map_or("-".into(), |d| d.to_string()),
            o.true_lambda,
            lam,
            iters
        ));
    }
    out
}

/// Fraction of `n` sampled instances whose ground-truth CMDP is feasible.
pub fn feasible_fraction(n: u64, config: &ExperimentConfig) -> Result<f64> {
    let feasible = (0..n)
        .into_par_iter()
        .map(|seed| -> Result<bool> {
            let (model, raw): (CmdpModel, WeightPair) = build_gridworld(&config.params_for(seed))?;
            Ok(solve_cmdp(&model, &simplex_normalized(&raw))?.status == SolveStatus::Optimal)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(feasible.iter().filter(|&&f| f).count() as f64 / n as f64)
}
