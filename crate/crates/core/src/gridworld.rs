//! Slippery gridworld with hill-shaped constraint features.
//!
//! Cells are indexed row-major: state `y * size + x`, where `x` grows to the
//! right and `y` grows downward. The agent starts in the top-left cell.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::irl::recover_functions;
use crate::model::{CmdpModel, FeatureMap, Policy, WeightPair};

/// Action order: up, down, left, right.
pub const ACTIONS: [(i64, i64); 4] = [(0, -1), (0, 1), (-1, 0), (1, 0)];
pub const ARROWS: [char; 4] = ['↑', '↓', '←', '→'];

const REWARD_SCALE: f64 = 2.5e-3;
const CONSTRAINT_SCALE: f64 = 0.1;

/// How the slip probability is spread over directions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SlipMode {
    /// Uniform over all four moves; the intended one gets `1 - slip + slip/4`.
    #[default]
    AllDirections,
    /// Uniform over the three unintended moves.
    OtherDirections,
}

impl std::str::FromStr for SlipMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "all" | "all_directions" => Ok(SlipMode::AllDirections),
            "other" | "other_directions" => Ok(SlipMode::OtherDirections),
            _ => Err(Error::InvalidArgument(format!("unknown slip mode '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridworldParams {
    pub size: usize,
    pub slip: f64,
    pub slip_mode: SlipMode,
    pub c1: f64,
    pub c2: f64,
    pub h1: u32,
    pub h2: u32,
    pub q: f64,
    pub a: f64,
    pub b: f64,
    pub gamma: f64,
    pub horizon: usize,
}

impl Default for GridworldParams {
    fn default() -> Self {
        Self {
            size: 5,
            slip: 0.3,
            slip_mode: SlipMode::AllDirections,
            c1: 0.5,
            c2: 0.5,
            h1: 2,
            h2: 2,
            q: 0.5,
            a: 0.5,
            b: 0.5,
            gamma: 0.99,
            horizon: 200,
        }
    }
}

impl GridworldParams {
    pub fn validate(&self) -> Result<()> {
        let unit = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::InvalidArgument(format!(
                    "{name} = {v} must lie in [0, 1]"
                )))
            }
        };
        if self.size < 2 {
            return Err(Error::InvalidArgument(
                "grid size must be at least 2".into(),
            ));
        }
        unit("slip", self.slip)?;
        unit("c1", self.c1)?;
        unit("c2", self.c2)?;
        unit("q", self.q)?;
        unit("a", self.a)?;
        unit("b", self.b)?;
        for (name, h) in [("h1", self.h1), ("h2", self.h2)] {
            if !(1..=3).contains(&h) {
                return Err(Error::InvalidArgument(format!(
                    "{name} = {h} must lie in 1..=3"
                )));
            }
        }
        if self.horizon == 0 {
            return Err(Error::InvalidArgument("horizon must be at least 1".into()));
        }
        Ok(())
    }

    /// Raw ground truth: `w_r = (q, 1-q)`, `w_c = (a, 1-a, b, 1-b)`.
    pub fn ground_truth(&self) -> WeightPair {
        WeightPair::new(
            vec![self.q, 1.0 - self.q],
            vec![self.a, 1.0 - self.a, self.b, 1.0 - self.b],
        )
    }
}

/// Rescales each weight vector to unit 1-norm. For the gridworld ground
/// truth this halves `w_c` and leaves `w_r` unchanged.
pub fn simplex_normalized(w: &WeightPair) -> WeightPair {
    let norm = |v: &[f64]| {
        let z: f64 = v.iter().map(|x| x.abs()).sum();
        v.iter().map(|x| x / z).collect::<Vec<_>>()
    };
    WeightPair::new(norm(&w.w_r), norm(&w.w_c))
}

/// Draws a random experiment: hill slopes, hill location and ground-truth seeds.
pub fn sample_experiment(seed: u64) -> GridworldParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c1 = rng.random::<f64>();
    let c2 = rng.random::<f64>();
    let h1 = rng.random_range(1..=3);
    let h2 = rng.random_range(1..=3);
    let q = rng.random::<f64>();
    let a = rng.random::<f64>();
    let b = rng.random::<f64>();
    GridworldParams {
        c1,
        c2,
        h1,
        h2,
        q,
        a,
        b,
        ..GridworldParams::default()
    }
}

fn step(size: usize, x: usize, y: usize, dir: usize) -> usize {
    let (dx, dy) = ACTIONS[dir];
    let nx = x as i64 + dx;
    let ny = y as i64 + dy;
    let n = size as i64;
    if (0..n).contains(&nx) && (0..n).contains(&ny) {
        ny as usize * size + nx as usize
    } else {
        y * size + x
    }
}

/// Builds the gridworld CMDP and its raw ground-truth weights.
pub fn build_gridworld(params: &GridworldParams) -> Result<(CmdpModel, WeightPair)> {
    params.validate()?;
    let n = params.size;
    let ns = n * n;
    let na = ACTIONS.len();
    let mut transition = vec![0.0; ns * na * ns];
    for y in 0..n {
        for x in 0..n {
            let s = y * n + x;
            for a in 0..na {
                let row = &mut transition[(s * na + a) * ns..(s * na + a + 1) * ns];
                row[step(n, x, y, a)] += 1.0 - params.slip;
                match params.slip_mode {
                    SlipMode::AllDirections => {
                        for d in 0..na {
                            row[step(n, x, y, d)] += params.slip / na as f64;
                        }
                    }
                    SlipMode::OtherDirections => {
                        for d in (0..na).filter(|&d| d != a) {
                            row[step(n, x, y, d)] += params.slip / (na - 1) as f64;
                        }
                    }
                }
            }
        }
    }
    let mut p0 = vec![0.0; ns];
    p0[0] = 1.0;

    let edge = (n - 1) as f64;
    let mut phi_r = Vec::with_capacity(ns);
    let mut phi_c = Vec::with_capacity(ns);
    for y in 0..n {
        for x in 0..n {
            let (xf, yf) = (x as f64, y as f64);
            phi_r.push(vec![REWARD_SCALE * xf, REWARD_SCALE * yf]);
            phi_c.push(vec![
                CONSTRAINT_SCALE * (-params.c1 * (params.h1 as f64 - xf)).exp(),
                CONSTRAINT_SCALE * (-params.c2 * (params.h2 as f64 - yf)).exp(),
                CONSTRAINT_SCALE * (edge - xf).abs().min(xf),
                CONSTRAINT_SCALE * (edge - yf).abs().min(yf),
            ]);
        }
    }
    let model = CmdpModel::from_flat(
        ns,
        na,
        transition,
        p0,
        params.gamma,
        FeatureMap::from_rows(&phi_r)?,
        FeatureMap::from_rows(&phi_c)?,
    )?;
    Ok((model, params.ground_truth()))
}

/// Side length of a square 4-action model.
pub fn grid_size(model: &CmdpModel) -> Result<usize> {
    let ns = model.n_states();
    let n = (ns as f64).sqrt().round() as usize;
    if n * n != ns || model.n_actions() != ACTIONS.len() {
        return Err(Error::InvalidArgument(format!(
            "model with {ns} states and {} actions is not a square gridworld",
            model.n_actions()
        )));
    }
    Ok(n)
}

/// Per-cell reward, per-cell cost and argmax-action arrows as aligned text grids.
pub fn render_grids(model: &CmdpModel, weights: &WeightPair, policy: &Policy) -> Result<String> {
    let n = grid_size(model)?;
    model.check_policy(policy)?;
    let (r, c) = recover_functions(weights, model)?;
    let actions = policy.argmax_actions();
    let mut out = String::new();
    for (title, values) in [("reward", &r), ("constraint", &c)] {
        let _ = writeln!(out, "{title}:");
        for y in 0..n {
            let cells: Vec<String> = (0..n)
                .map(|x| format!("{:>8.4}", values[y * n + x]))
                .collect();
            let _ = writeln!(out, "{}", cells.join(" "));
        }
        out.push('\n');
    }
    let _ = writeln!(out, "policy:");
    for y in 0..n {
        let cells: Vec<String> = (0..n)
            .map(|x| ARROWS[actions[y * n + x]].to_string())
            .collect();
        let _ = writeln!(out, "{}", cells.join(" "));
    }
    Ok(out)
}

/// `(reward.csv, constraint.csv, policy.csv)` contents, one grid row per line.
pub fn grid_csvs(model: &CmdpModel, weights: &WeightPair, policy: &Policy) -> Result<[String; 3]> {
    let n = grid_size(model)?;
    model.check_policy(policy)?;
    let (r, c) = recover_functions(weights, model)?;
    let actions = policy.argmax_actions();
    let table = |cell: &dyn Fn(usize) -> String| {
        let mut out = String::new();
        for y in 0..n {
            let row: Vec<String> = (0..n).map(|x| cell(y * n + x)).collect();
            let _ = writeln!(out, "{}", row.join(","));
        }
        out
    };
    Ok([
        table(&|s| format!("{:.17e}", r[s])),
        table(&|s| format!("{:.17e}", c[s])),
        table(&|s| actions[s].to_string()),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::FeatureKind;

    #[test]
    fn reward_features_at_corners() {
        let (m, _) = build_gridworld(&GridworldParams::default()).unwrap();
        let phi = m.features(FeatureKind::Reward);
        assert_eq!(phi.row(0), &[0.0, 0.0]);
        assert!((phi.row(24)[0] - 0.01).abs() < 1e-15 && (phi.row(24)[1] - 0.01).abs() < 1e-15);
        let r = m.state_payoff(&[1.0, 0.0], FeatureKind::Reward).unwrap();
        assert!((r[4] - 0.01).abs() < 1e-15);
    }

    #[test]
    fn edge_distance_feature() {
        let (m, _) = build_gridworld(&GridworldParams::default()).unwrap();
        let phi = m.features(FeatureKind::Constraint);
        assert_eq!(phi.row(0)[2], 0.0);
        assert_eq!(phi.row(4)[2], 0.0);
        assert!((phi.row(2)[2] - 0.2).abs() < 1e-15);
    }

    #[test]
    fn interior_right_slip_row() {
        let (m, _) = build_gridworld(&GridworldParams::default()).unwrap();
        let s = 2 * 5 + 2;
        let row = m.transition_row(s, 3);
        assert!((row[s + 1] - 0.775).abs() < 1e-15);
        for other in [s - 1, s - 5, s + 5] {
            assert!((row[other] - 0.075).abs() < 1e-15);
        }
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn other_direction_slip_row() {
        let params = GridworldParams {
            slip_mode: SlipMode::OtherDirections,
            ..GridworldParams::default()
        };
        let (m, _) = build_gridworld(&params).unwrap();
        let s = 12;
        let row = m.transition_row(s, 3);
        assert!((row[13] - 0.7).abs() < 1e-15);
        assert!((row[11] - 0.1).abs() < 1e-15);
    }

    #[test]
    fn sampler_is_deterministic_and_in_range() {
        assert_eq!(sample_experiment(42), sample_experiment(42));
        for seed in 0..200 {
            assert!(sample_experiment(seed).validate().is_ok());
        }
    }

    #[test]
    fn truth_normalization_halves_constraint_weights() {
        let p = sample_experiment(3);
        let n = simplex_normalized(&p.ground_truth());
        assert!((n.w_c.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert!((n.w_c[0] - p.a / 2.0).abs() < 1e-15);
        assert_eq!(n.w_r, p.ground_truth().w_r);
    }

    #[test]
    fn uniform_policy_renders_up_arrows() {
        let (m, _) = build_gridworld(&GridworldParams::default()).unwrap();
        let text = render_grids(&m, &WeightPair::uniform(2, 4), &Policy::uniform(25, 4)).unwrap();
        let policy_part = text.split("policy:\n").nth(1).unwrap();
        assert_eq!(policy_part.matches('↑').count(), 25);
    }

    #[test]
    fn non_grid_model_rejected() {
        let m = CmdpModel::new(
            vec![vec![vec![1.0, 0.0]], vec![vec![0.0, 1.0]]],
            vec![1.0, 0.0],
            0.5,
            vec![vec![1.0], vec![0.0]],
            vec![vec![0.0], vec![1.0]],
        )
        .unwrap();
        assert!(render_grids(
            &m,
            &WeightPair::new(vec![1.0], vec![1.0]),
            &Policy::uniform(2, 1)
        )
        .is_err());
    }
}
