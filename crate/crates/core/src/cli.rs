//! Run configuration and mode dispatch for the command-line tool.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::demo::{generate_dataset, Dataset};
use crate::error::{Error, Result};
use crate::experiment::{run_seeds, summarize, summary_table, ExperimentConfig, SeedStatus};
use crate::forward::{solve_cmdp, SolveStatus};
use crate::gridworld::{
    build_gridworld, grid_csvs, render_grids, sample_experiment, simplex_normalized,
    GridworldParams, SlipMode,
};
use crate::irl::{run_irl, IrlConfig};
use crate::model::{CmdpModel, ModelJson, Policy, WeightPair};
use crate::oracle::run_oracle_suite;
use crate::visitation::state_visitation;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Forward,
    Demo,
    Irl,
    E2e,
    OracleCheck,
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "forward" => Ok(Mode::Forward),
            "demo" => Ok(Mode::Demo),
            "irl" => Ok(Mode::Irl),
            "e2e" => Ok(Mode::E2e),
            "oracle-check" => Ok(Mode::OracleCheck),
            _ => Err(Error::InvalidArgument(format!("unknown mode '{s}'"))),
        }
    }
}

/// Everything a run depends on. Loaded from JSON, then overridden by flags.
///
/// The model comes from `model` (a model JSON file) when set, otherwise from
/// `gridworld`, otherwise from the gridworld instance sampled from `seed`.
/// `gamma`, `slip_mode` and `horizon` override the gridworld parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub mode: Option<Mode>,
    pub seed: u64,
    pub seeds: u64,
    /// Destination only; left out of embedded configs so artifacts do not
    /// depend on where they were written.
    #[serde(skip_serializing)]
    pub out: PathBuf,
    pub model: Option<PathBuf>,
    pub weights: Option<PathBuf>,
    pub gridworld: Option<GridworldParams>,
    pub dataset: Option<PathBuf>,
    pub horizon: usize,
    pub samples: usize,
    pub gamma: f64,
    pub slip_mode: SlipMode,
    pub kappa: f64,
    pub tol: f64,
    pub max_iters: usize,
    pub lambda_floor: Option<f64>,
    pub csv: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        let irl = IrlConfig::new(200);
        Self {
            mode: None,
            seed: 0,
            seeds: 10,
            out: PathBuf::from("out"),
            model: None,
            weights: None,
            gridworld: None,
            dataset: None,
            horizon: 200,
            samples: 100,
            gamma: 0.99,
            slip_mode: SlipMode::AllDirections,
            kappa: irl.learning_rate,
            tol: irl.tol,
            max_iters: irl.max_iters,
            lambda_floor: irl.lambda_floor,
            csv: false,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }

    pub fn irl_config(&self) -> IrlConfig {
        IrlConfig {
            learning_rate: self.kappa,
            max_iters: self.max_iters,
            tol: self.tol,
            horizon: self.horizon,
            seed: self.seed,
            lambda_floor: self.lambda_floor,
        }
    }

    pub fn experiment_config(&self) -> ExperimentConfig {
        ExperimentConfig {
            gamma: self.gamma,
            slip_mode: self.slip_mode,
            horizon: self.horizon,
            samples: self.samples,
            irl: self.irl_config(),
            ..ExperimentConfig::default()
        }
    }

    pub fn validate(&self) -> Result<Mode> {
        let mode = self
            .mode
            .ok_or_else(|| Error::InvalidArgument("no mode given".into()))?;
        self.irl_config().validate()?;
        if self.samples == 0 {
            return Err(Error::InvalidArgument("samples must be positive".into()));
        }
        match mode {
            Mode::Irl if self.dataset.is_none() => Err(Error::InvalidArgument(
                "irl mode needs a dataset path".into(),
            )),
            Mode::Forward if self.model.is_some() && self.weights.is_none() => {
                Err(Error::InvalidArgument(
                    "forward mode with a model file needs a weights file".into(),
                ))
            }
            Mode::E2e if self.seeds == 0 => {
                Err(Error::InvalidArgument("e2e needs at least one seed".into()))
            }
            _ => Ok(mode),
        }
    }

    fn gridworld_params(&self) -> GridworldParams {
        GridworldParams {
            gamma: self.gamma,
            slip_mode: self.slip_mode,
            horizon: self.horizon,
            ..self
                .gridworld
                .clone()
                .unwrap_or_else(|| sample_experiment(self.seed))
        }
    }
}

/// Process exit code for an error: 2 for infeasibility, 3 for I/O, 1 otherwise.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Infeasible { .. } => 2,
        Error::Io(_) => 3,
        _ => 1,
    }
}

/// How a successful run ended; `Infeasible` still wrote its artifacts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunStatus {
    Ok,
    Infeasible,
    ChecksFailed,
}

impl RunStatus {
    pub fn exit_code(self) -> i32 {
        match self {
            RunStatus::Ok => 0,
            RunStatus::Infeasible => 2,
            RunStatus::ChecksFailed => 1,
        }
    }
}

struct Problem {
    model: CmdpModel,
    weights: WeightPair,
    gridworld: Option<GridworldParams>,
}

fn load_problem(cfg: &RunConfig) -> Result<Problem> {
    if let Some(path) = &cfg.model {
        let raw: ModelJson = serde_json::from_str(&fs::read_to_string(path)?)?;
        let model = CmdpModel::try_from(raw)?;
        let weights = match &cfg.weights {
            Some(w) => serde_json::from_str(&fs::read_to_string(w)?)?,
            None => WeightPair::uniform(
                model.feature_dim(crate::FeatureKind::Reward),
                model.feature_dim(crate::FeatureKind::Constraint),
            ),
        };
        return Ok(Problem {
            model,
            weights,
            gridworld: None,
        });
    }
    let params = cfg.gridworld_params();
    let (model, raw) = build_gridworld(&params)?;
    let weights = match &cfg.weights {
        Some(w) => serde_json::from_str(&fs::read_to_string(w)?)?,
        None => simplex_normalized(&raw),
    };
    Ok(Problem {
        model,
        weights,
        gridworld: Some(params),
    })
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<()> {
    fs::write(dir.join(name), contents)?;
    Ok(())
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write(dir, name, &text)
}

fn config_comment(cfg: &RunConfig) -> Result<String> {
    Ok(format!("## config: {}\n", serde_json::to_string(cfg)?))
}

fn write_grids(
    dir: &Path,
    prefix: &str,
    cfg: &RunConfig,
    model: &CmdpModel,
    weights: &WeightPair,
    policy: &Policy,
) -> Result<()> {
    let mut text = config_comment(cfg)?;
    text.push_str(&render_grids(model, weights, policy)?);
    write(dir, &format!("{prefix}grids.txt"), &text)?;
    if cfg.csv {
        let header = config_comment(cfg)?;
        let [r, c, p] = grid_csvs(model, weights, policy)?;
        write(dir, &format!("{prefix}reward.csv"), &(header.clone() + &r))?;
        write(
            dir,
            &format!("{prefix}constraint.csv"),
            &(header.clone() + &c),
        )?;
        write(dir, &format!("{prefix}policy.csv"), &(header + &p))?;
    }
    Ok(())
}

fn write_visitation(dir: &Path, cfg: &RunConfig, model: &CmdpModel, policy: &Policy) -> Result<()> {
    if cfg.csv {
        let table = state_visitation(model, policy, cfg.horizon)?;
        write(
            dir,
            "visitation.csv",
            &(config_comment(cfg)? + &table.to_csv()),
        )?;
    }
    Ok(())
}

fn write_metadata(dir: &Path, mode: Mode) -> Result<()> {
    let secs = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map_or(0, |d| d.as_secs());
    write_json(
        dir,
        "metadata.json",
        &json!({
            "mode": mode,
            "version": env!("CARGO_PKG_VERSION"),
            "unix_time": secs,
        }),
    )
}

/// Executes one run, writing artifacts under `cfg.out`. The returned text is
/// a short report for the terminal.
pub fn run(cfg: &RunConfig) -> Result<(RunStatus, String)> {
    let mode = cfg.validate()?;
    let dir = cfg.out.as_path();
    fs::create_dir_all(dir)?;
    let result = match mode {
        Mode::Forward => run_forward(cfg, dir),
        Mode::Demo => run_demo(cfg, dir),
        Mode::Irl => run_irl_mode(cfg, dir),
        Mode::E2e => run_e2e(cfg, dir),
        Mode::OracleCheck => run_oracle(cfg, dir),
    }?;
    write_metadata(dir, mode)?;
    Ok(result)
}

fn run_forward(cfg: &RunConfig, dir: &Path) -> Result<(RunStatus, String)> {
    let p = load_problem(cfg)?;
    let sol = solve_cmdp(&p.model, &p.weights)?;
    write_json(
        dir,
        "forward.json",
        &json!({ "config": cfg, "gridworld": p.gridworld, "weights": p.weights, "solution": sol.to_json() }),
    )?;
    if p.gridworld.is_some() {
        write_grids(dir, "", cfg, &p.model, &p.weights, &sol.policy)?;
    }
    write_visitation(dir, cfg, &p.model, &sol.policy)?;
    let report = format!(
        "status {:?}, lambda {:.6e}, reward value {:.6}, cost value {:.6}\n",
        sol.status, sol.lambda, sol.reward_value, sol.cost_value
    );
    let status = match sol.status {
        SolveStatus::Optimal => RunStatus::Ok,
        SolveStatus::Infeasible => RunStatus::Infeasible,
    };
    Ok((status, report))
}

fn run_demo(cfg: &RunConfig, dir: &Path) -> Result<(RunStatus, String)> {
    let p = load_problem(cfg)?;
    let sol = solve_cmdp(&p.model, &p.weights)?;
    if sol.status == SolveStatus::Infeasible {
        return Err(Error::Infeasible {
            iteration: 0,
            min_cost: sol.cost_value,
        });
    }
    let data = generate_dataset(&p.model, &sol.policy, cfg.horizon, cfg.samples, cfg.seed)?;
    let path = cfg
        .dataset
        .clone()
        .unwrap_or_else(|| dir.join("dataset.txt"));
    let mut text = config_comment(cfg)?;
    text.push_str(&data.to_text());
    fs::write(&path, text)?;
    Ok((
        RunStatus::Ok,
        format!(
            "{} trajectories of length {} -> {}\n",
            data.len(),
            data.horizon,
            path.display()
        ),
    ))
}

fn run_irl_mode(cfg: &RunConfig, dir: &Path) -> Result<(RunStatus, String)> {
    let p = load_problem(cfg)?;
    let data = Dataset::load(cfg.dataset.as_deref().expect("validated"))?;
    let result = run_irl(&p.model, &data, &cfg.irl_config())?;
    write_json(
        dir,
        "irl_result.json",
        &json!({ "config": cfg, "gridworld": p.gridworld, "result": result.to_json() }),
    )?;
    let mut log = config_comment(cfg)?;
    log.push_str(&result.convergence_log());
    write(dir, "convergence.tsv", &log)?;
    if p.gridworld.is_some() {
        write_grids(dir, "", cfg, &p.model, &result.weights, &result.policy)?;
    }
    write_visitation(dir, cfg, &p.model, &result.policy)?;
    Ok((
        RunStatus::Ok,
        format!(
            "{} after {} iterations, lambda {:.6e}\nw_r = {:?}\nw_c = {:?}\n",
            if result.converged {
                "converged"
            } else {
                "stopped"
            },
            result.iterations,
            result.lambda,
            result.weights.w_r,
            result.weights.w_c
        ),
    ))
}

fn run_e2e(cfg: &RunConfig, dir: &Path) -> Result<(RunStatus, String)> {
    let outcomes = run_seeds(cfg.seeds, cfg.seed, &cfg.experiment_config())?;
    let summary = summarize(&outcomes);
    write_json(
        dir,
        "e2e_result.json",
        &json!({ "config": cfg, "summary": summary, "seeds": outcomes }),
    )?;
    let table = summary_table(&outcomes);
    let mut text = config_comment(cfg)?;
    text.push_str(&table);
    write(dir, "summary.tsv", &text)?;
    let mut grids = config_comment(cfg)?;
    for o in &outcomes {
        let _ = writeln!(
            grids,
            "=== seed {} ({:?}) ===\n{}",
            o.seed, o.status, o.detail
        );
    }
    write(dir, "grids.txt", &grids)?;
    if cfg.csv {
        for o in &outcomes {
            let (model, _) = build_gridworld(&o.params)?;
            let na = model.n_actions();
            let truth = Policy::deterministic(&o.true_actions, na);
            write_grids(
                dir,
                &format!("seed{}_true_", o.seed),
                cfg,
                &model,
                &o.truth_normalized,
                &truth,
            )?;
            if let (Some(rec), Some(actions)) = (&o.recovered, &o.recovered_actions) {
                let weights = WeightPair::new(rec.w_r.clone(), rec.w_c.clone());
                let policy = Policy::deterministic(actions, na);
                write_grids(
                    dir,
                    &format!("seed{}_recovered_", o.seed),
                    cfg,
                    &model,
                    &weights,
                    &policy,
                )?;
            }
        }
    }
    let mut report = table;
    let _ = writeln!(
        report,
        "mean agreement {:.1}%, full agreement {}/{}, peak within 1 {}/{}, reward trend {}/{}",
        100.0 * summary.mean_agreement,
        summary.full_agreement_seeds,
        summary.seeds,
        summary.peak_within_one_seeds,
        summary.seeds,
        summary.reward_trend_seeds,
        summary.seeds
    );
    let infeasible = outcomes.iter().any(|o| o.status != SeedStatus::Recovered);
    Ok((
        if infeasible {
            RunStatus::Infeasible
        } else {
            RunStatus::Ok
        },
        report,
    ))
}

fn run_oracle(cfg: &RunConfig, dir: &Path) -> Result<(RunStatus, String)> {
    let checks = run_oracle_suite()?;
    let mut table = String::new();
    for c in &checks {
        let _ = writeln!(
            table,
            "{:<4} {:<40} {}",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.detail
        );
    }
    write_json(
        dir,
        "oracle_check.json",
        &json!({ "config": cfg, "checks": checks }),
    )?;
    let status = if checks.iter().all(|c| c.passed) {
        RunStatus::Ok
    } else {
        RunStatus::ChecksFailed
    };
    Ok((status, table))
}
