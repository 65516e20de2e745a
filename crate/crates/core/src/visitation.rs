//! Discounted state-visitation frequencies and policy feature expectations.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::model::{CmdpModel, FeatureKind, Policy};

/// `d[t][s]` for `t = 0..horizon` (time index shifted by one), where
/// `d[0] = p0` and each subsequent row carries the factor `gamma^t`.
#[derive(Debug, Clone, PartialEq)]
pub struct VisitationTable {
    horizon: usize,
    n_states: usize,
    d: Vec<f64>,
}

impl VisitationTable {
    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.d[t * self.n_states..(t + 1) * self.n_states]
    }

    /// `sum_t d_t(s)`: the truncated discounted occupancy.
    pub fn occupancy(&self) -> Vec<f64> {
        let mut acc = vec![0.0; self.n_states];
        for t in 0..self.horizon {
            for (a, v) in acc.iter_mut().zip(self.row(t)) {
                *a += v;
            }
        }
        acc
    }

    /// `T` rows by `n_states` columns, no header.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for t in 0..self.horizon {
            let row = self.row(t);
            for (s, v) in row.iter().enumerate() {
                if s > 0 {
                    out.push(',');
                }
                let _ = write!(out, "{v:.17e}");
            }
            out.push('\n');
        }
        out
    }
}

/// Runs `d_1 = p0`, `d_{t+1}(s') = sum_{s,a} gamma d_t(s) pi(a|s) p(s'|s,a)`.
pub fn state_visitation(
    model: &CmdpModel,
    policy: &Policy,
    horizon: usize,
) -> Result<VisitationTable> {
    model.check_policy(policy)?;
    if horizon == 0 {
        return Err(Error::InvalidArgument("horizon must be at least 1".into()));
    }
    let ns = model.n_states();
    let gamma = model.gamma();
    let kernel = model.policy_kernel(policy);
    let mut d = vec![0.0; horizon * ns];
    d[..ns].copy_from_slice(model.p0());
    for t in 1..horizon {
        let (prev, next) = d.split_at_mut(t * ns);
        let prev = &prev[(t - 1) * ns..];
        let next = &mut next[..ns];
        for (s, &mass) in prev.iter().enumerate() {
            if mass == 0.0 {
                continue;
            }
            let scaled = gamma * mass;
            for (n, &k) in next.iter_mut().zip(&kernel[s * ns..(s + 1) * ns]) {
                *n += scaled * k;
            }
        }
    }
    Ok(VisitationTable {
        horizon,
        n_states: ns,
        d,
    })
}

/// `sum_t sum_s d_t(s) phi_x(s)`.
pub fn policy_feature_expectation(
    table: &VisitationTable,
    model: &CmdpModel,
    kind: FeatureKind,
) -> Result<Vec<f64>> {
    if table.n_states != model.n_states() {
        return Err(Error::dim(
            "visitation table states",
            model.n_states(),
            table.n_states,
        ));
    }
    let map = model.features(kind);
    let mut out = vec![0.0; map.dim()];
    for (s, rho) in table.occupancy().iter().enumerate() {
        for (o, f) in out.iter_mut().zip(map.row(s)) {
            *o += rho * f;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn absorbing() -> CmdpModel {
        CmdpModel::new(
            vec![vec![vec![1.0, 0.0]], vec![vec![0.0, 1.0]]],
            vec![1.0, 0.0],
            0.8,
            vec![vec![2.0], vec![5.0]],
            vec![vec![1.0], vec![1.0]],
        )
        .unwrap()
    }

    #[test]
    fn first_row_is_p0_and_mass_decays() {
        let m = absorbing();
        let table = state_visitation(&m, &Policy::uniform(2, 1), 6).unwrap();
        assert_eq!(table.row(0), m.p0());
        for t in 0..6 {
            assert!((table.row(t)[0] - 0.8f64.powi(t as i32)).abs() < 1e-15);
        }
    }

    #[test]
    fn constant_feature_gives_geometric_sum() {
        let m = absorbing();
        let t = 7;
        let table = state_visitation(&m, &Policy::uniform(2, 1), t).unwrap();
        let pfe = policy_feature_expectation(&table, &m, FeatureKind::Constraint).unwrap();
        let expect = (1.0 - 0.8f64.powi(t as i32)) / 0.2;
        assert!((pfe[0] - expect).abs() < 1e-12);
        let pfe_r = policy_feature_expectation(&table, &m, FeatureKind::Reward).unwrap();
        assert!((pfe_r[0] - 2.0 * expect).abs() < 1e-12);
    }

    #[test]
    fn zero_horizon_rejected() {
        let m = absorbing();
        assert!(state_visitation(&m, &Policy::uniform(2, 1), 0).is_err());
    }

    #[test]
    fn csv_has_one_line_per_step() {
        let m = absorbing();
        let table = state_visitation(&m, &Policy::uniform(2, 1), 3).unwrap();
        let csv = table.to_csv();
        assert_eq!(csv.lines().count(), 3);
        assert_eq!(csv.lines().next().unwrap().split(',').count(), 2);
    }
}
