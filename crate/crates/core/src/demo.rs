//! Demonstration datasets and empirical feature expectations.
//!
//! Trajectory `i` of a dataset with seed `k` is drawn from its own ChaCha8
//! stream (`seed = k`, `stream = i`), so datasets are reproducible and the
//! trajectories can be sampled in any order or in parallel.

use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{CmdpModel, FeatureKind, Policy};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trajectory {
    pub steps: Vec<(usize, usize)>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn states(&self) -> impl Iterator<Item = usize> + '_ {
        self.steps.iter().map(|&(s, _)| s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    pub trajectories: Vec<Trajectory>,
    pub horizon: usize,
    pub seed: u64,
}

impl Dataset {
    pub fn new(trajectories: Vec<Trajectory>, horizon: usize, seed: u64) -> Result<Self> {
        let d = Self {
            trajectories,
            horizon,
            seed,
        };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        if self.trajectories.is_empty() {
            return Err(Error::InvalidArgument("dataset is empty".into()));
        }
        if self.horizon == 0 {
            return Err(Error::InvalidArgument("horizon must be at least 1".into()));
        }
        if let Some(i) = self
            .trajectories
            .iter()
            .position(|t| t.len() != self.horizon)
        {
            return Err(Error::InvalidArgument(format!(
                "trajectory {i} has length {} (horizon {})",
                self.trajectories[i].len(),
                self.horizon
            )));
        }
        Ok(())
    }

    /// Checks that every index is in range for `model`.
    pub fn check_model(&self, model: &CmdpModel) -> Result<()> {
        for (i, traj) in self.trajectories.iter().enumerate() {
            if let Some(&(s, a)) = traj
                .steps
                .iter()
                .find(|&&(s, a)| s >= model.n_states() || a >= model.n_actions())
            {
                return Err(Error::InvalidArgument(format!(
                    "trajectory {i} contains out-of-range step ({s},{a})"
                )));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    /// Text form: `#horizon=T seed=K` then one `s,a;s,a;...` line per trajectory.
    pub fn to_text(&self) -> String {
        let mut out = format!("#horizon={} seed={}\n", self.horizon, self.seed);
        for traj in &self.trajectories {
            for (t, (s, a)) in traj.steps.iter().enumerate() {
                if t > 0 {
                    out.push(';');
                }
                let _ = write!(out, "{s},{a}");
            }
            out.push('\n');
        }
        out
    }

    /// Parses either the text form or a JSON array of `[s, a]` arrays. Lines
    /// starting with `##` are comments.
    pub fn parse(text: &str) -> Result<Self> {
        if text.trim_start().starts_with('[') {
            let raw: Vec<Vec<[usize; 2]>> = serde_json::from_str(text)?;
            let horizon = raw.first().map_or(0, Vec::len);
            let trajectories = raw
                .into_iter()
                .map(|t| Trajectory {
                    steps: t.into_iter().map(|[s, a]| (s, a)).collect(),
                })
                .collect();
            return Self::new(trajectories, horizon, 0);
        }
        let mut horizon = None;
        let mut seed = 0;
        let mut trajectories = Vec::new();
        for (idx, line) in text.lines().enumerate() {
            let lineno = idx + 1;
            let line = line.trim();
            if line.is_empty() || line.starts_with("##") {
                continue;
            }
            if let Some(header) = line.strip_prefix('#') {
                for field in header.split_whitespace() {
                    let (key, value) =
                        field.split_once('=').ok_or_else(|| Error::DatasetParse {
                            line: lineno,
                            msg: format!("malformed header field '{field}'"),
                        })?;
                    let parse_err = |_| Error::DatasetParse {
                        line: lineno,
                        msg: format!("bad value for {key}: '{value}'"),
                    };
                    match key {
                        "horizon" => horizon = Some(value.parse().map_err(parse_err)?),
                        "seed" => seed = value.parse().map_err(parse_err)?,
                        _ => {}
                    }
                }
                continue;
            }
            let steps = line
                .split(';')
                .map(|pair| {
                    let (s, a) = pair.split_once(',').ok_or_else(|| Error::DatasetParse {
                        line: lineno,
                        msg: format!("expected 's,a', found '{pair}'"),
                    })?;
                    let num = |v: &str| {
                        v.trim().parse::<usize>().map_err(|_| Error::DatasetParse {
                            line: lineno,
                            msg: format!("not an index: '{v}'"),
                        })
                    };
                    Ok((num(s)?, num(a)?))
                })
                .collect::<Result<Vec<_>>>()?;
            trajectories.push(Trajectory { steps });
        }
        let horizon = horizon
            .or_else(|| trajectories.first().map(Trajectory::len))
            .unwrap_or(0);
        Self::new(trajectories, horizon, seed)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }
}

/// Inverse-CDF draw from a probability vector given `u` in `[0, 1)`.
fn categorical(probs: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            acc += p;
            last = i;
            if u < acc {
                return i;
            }
        }
    }
    // rounding left u above the accumulated mass
    last
}

/// Rolls out `horizon` steps: `s_1 ~ p0`, `a_t ~ pi(.|s_t)`, `s_{t+1} ~ p(.|s_t, a_t)`.
pub fn sample_trajectory<R: Rng + ?Sized>(
    model: &CmdpModel,
    policy: &Policy,
    horizon: usize,
    rng: &mut R,
) -> Trajectory {
    let mut steps = Vec::with_capacity(horizon);
    let mut s = categorical(model.p0(), rng.random());
    for _ in 0..horizon {
        let a = categorical(policy.row(s), rng.random());
        steps.push((s, a));
        s = categorical(model.transition_row(s, a), rng.random());
    }
    Trajectory { steps }
}

/// RNG for trajectory `index` of a dataset seeded with `seed`.
pub fn trajectory_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Samples `count` trajectories of length `horizon` under `policy`.
pub fn generate_dataset(
    model: &CmdpModel,
    policy: &Policy,
    horizon: usize,
    count: usize,
    seed: u64,
) -> Result<Dataset> {
    model.check_policy(policy)?;
    policy.validate()?;
    if count == 0 {
        return Err(Error::InvalidArgument(
            "dataset size must be positive".into(),
        ));
    }
    if horizon == 0 {
        return Err(Error::InvalidArgument("horizon must be at least 1".into()));
    }
    let trajectories = (0..count)
        .into_par_iter()
        .map(|i| sample_trajectory(model, policy, horizon, &mut trajectory_rng(seed, i as u64)))
        .collect();
    Dataset::new(trajectories, horizon, seed)
}

/// `sum_t gamma^{t-1} phi_x(s_t)`.
pub fn trajectory_features(traj: &Trajectory, model: &CmdpModel, kind: FeatureKind) -> Vec<f64> {
    let map = model.features(kind);
    let mut out = vec![0.0; map.dim()];
    let mut disc = 1.0;
    for s in traj.states() {
        for (o, f) in out.iter_mut().zip(map.row(s)) {
            *o += disc * f;
        }
        disc *= model.gamma();
    }
    out
}

/// Dataset mean of [`trajectory_features`].
pub fn empirical_feature_expectation(
    data: &Dataset,
    model: &CmdpModel,
    kind: FeatureKind,
) -> Result<Vec<f64>> {
    data.validate()?;
    data.check_model(model)?;
    let mut out = vec![0.0; model.feature_dim(kind)];
    for traj in &data.trajectories {
        for (o, f) in out.iter_mut().zip(trajectory_features(traj, model, kind)) {
            *o += f;
        }
    }
    let m = data.len() as f64;
    out.iter_mut().for_each(|o| *o /= m);
    Ok(out)
}
