#![allow(dead_code)]

use cmdp_irl::{CmdpModel, Policy};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random dense model; every transition row and `p0` strictly positive.
pub fn random_model(
    seed: u64,
    ns: usize,
    na: usize,
    dr: usize,
    dc: usize,
    gamma: f64,
) -> CmdpModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dist = |n: usize, rng: &mut ChaCha8Rng| {
        let v: Vec<f64> = (0..n).map(|_| rng.random::<f64>() + 0.05).collect();
        let z: f64 = v.iter().sum();
        v.into_iter().map(|x| x / z).collect::<Vec<f64>>()
    };
    let transition = (0..ns)
        .map(|_| (0..na).map(|_| dist(ns, &mut rng)).collect())
        .collect();
    let p0 = dist(ns, &mut rng);
    let phi_r = (0..ns)
        .map(|_| (0..dr).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    let phi_c = (0..ns)
        .map(|_| (0..dc).map(|_| rng.random::<f64>()).collect())
        .collect();
    CmdpModel::new(transition, p0, gamma, phi_r, phi_c).unwrap()
}

/// Plain value iteration to a 1e-13 sup-norm change; returns greedy actions
/// (lowest index among ties within `1e-9`) and values.
pub fn value_iteration(model: &CmdpModel, payoff: &[f64]) -> (Vec<usize>, Vec<f64>) {
    let (ns, na, g) = (model.n_states(), model.n_actions(), model.gamma());
    let q = |v: &[f64], s: usize, a: usize| {
        payoff[s]
            + g * model
                .transition_row(s, a)
                .iter()
                .zip(v)
                .map(|(p, x)| p * x)
                .sum::<f64>()
    };
    let mut v = vec![0.0; ns];
    loop {
        let next: Vec<f64> = (0..ns)
            .map(|s| {
                (0..na)
                    .map(|a| q(&v, s, a))
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .collect();
        let delta = next
            .iter()
            .zip(&v)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        v = next;
        if delta < 1e-13 {
            break;
        }
    }
    let actions = (0..ns)
        .map(|s| {
            let best = (0..na)
                .map(|a| q(&v, s, a))
                .fold(f64::NEG_INFINITY, f64::max);
            (0..na).find(|&a| q(&v, s, a) >= best - 1e-9).unwrap()
        })
        .collect();
    (actions, v)
}

/// All `na^ns` deterministic policies.
pub fn deterministic_policies(ns: usize, na: usize) -> Vec<Policy> {
    let total = na.pow(ns as u32);
    (0..total)
        .map(|mut code| {
            let actions: Vec<usize> = (0..ns)
                .map(|_| {
                    let a = code % na;
                    code /= na;
                    a
                })
                .collect();
            Policy::deterministic(&actions, na)
        })
        .collect()
}

pub fn objective(model: &CmdpModel, policy: &Policy, payoff: &[f64]) -> f64 {
    let v = model.policy_value(policy, payoff).unwrap();
    model.p0().iter().zip(&v).map(|(p, x)| p * x).sum()
}

/// Best reward over randomized policies with cost at most 1. The attainable
/// (reward, cost) set is the convex hull of the deterministic policies'
/// points, so the optimum lies on a segment between two of them.
pub fn brute_force_cmdp(model: &CmdpModel, r: &[f64], c: &[f64]) -> Option<f64> {
    let points: Vec<(f64, f64)> = deterministic_policies(model.n_states(), model.n_actions())
        .iter()
        .map(|p| (objective(model, p, r), objective(model, p, c)))
        .collect();
    let mut best: Option<f64> = None;
    let mut offer = |v: f64| best = Some(best.map_or(v, |b: f64| b.max(v)));
    for &(ri, ci) in &points {
        if ci <= 1.0 {
            offer(ri);
        }
        for &(rj, cj) in &points {
            if ci > 1.0 && cj < 1.0 {
                let theta = (1.0 - cj) / (ci - cj);
                offer(theta * ri + (1.0 - theta) * rj);
            }
        }
    }
    best
}

pub fn sup_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

pub fn kl(v: &[f64], w: &[f64]) -> f64 {
    v.iter()
        .zip(w)
        .filter(|(x, _)| **x > 0.0)
        .map(|(x, y)| x * (x / y).ln())
        .sum()
}

/// Same model with every constraint feature multiplied by `k`.
pub fn scale_constraint(m: &CmdpModel, k: f64) -> CmdpModel {
    let (ns, na) = (m.n_states(), m.n_actions());
    let transition = (0..ns)
        .map(|s| (0..na).map(|a| m.transition_row(s, a).to_vec()).collect())
        .collect();
    let phi_c = m
        .features(cmdp_irl::FeatureKind::Constraint)
        .rows()
        .into_iter()
        .map(|row| row.into_iter().map(|v| v * k).collect())
        .collect();
    let phi_r = m.features(cmdp_irl::FeatureKind::Reward).rows();
    CmdpModel::new(transition, m.p0().to_vec(), m.gamma(), phi_r, phi_c).unwrap()
}

/// Grid over the 3-simplex with spacing `step`.
pub fn simplex_grid3(step: f64) -> impl Iterator<Item = [f64; 3]> {
    let n = (1.0 / step).round() as usize;
    (0..=n).flat_map(move |i| {
        (0..=n - i).map(move |j| {
            let (a, b) = (i as f64 * step, j as f64 * step);
            [a, b, (1.0 - a - b).max(0.0)]
        })
    })
}

/// Points of `{v in simplex : v . f <= 1}`: the feasible part of the
/// simplex grid plus the boundary `v . f = 1` sampled at spacing `step` in
/// the first coordinate (the grid alone resolves an oblique boundary poorly).
pub fn halfspace_grid3(f: &[f64; 3], step: f64) -> impl Iterator<Item = [f64; 3]> + '_ {
    let feasible = move |v: &[f64; 3]| v[0] * f[0] + v[1] * f[1] + v[2] * f[2] <= 1.0 + 1e-12;
    let n = (1.0 / step).round() as usize;
    // v1 (f1 - f2) = 1 - f2 - v0 (f0 - f2)
    let boundary = (0..=n).filter_map(move |i| {
        let v0 = i as f64 * step;
        let denom = f[1] - f[2];
        if denom.abs() < 1e-15 {
            return None;
        }
        let v1 = (1.0 - f[2] - v0 * (f[0] - f[2])) / denom;
        let v2 = 1.0 - v0 - v1;
        (v1 >= 0.0 && v2 >= 0.0).then_some([v0, v1, v2])
    });
    simplex_grid3(step).filter(feasible).chain(boundary)
}
