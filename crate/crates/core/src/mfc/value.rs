//! Value estimation by policy search and the experiments built on it.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::coeffs::CoefficientSet;
use super::policy::Policy;
use super::sim::{coupled_run, initial_states, particle_rewards, particle_rewards_from, run_segment, SimParams};
use crate::measures::{mean_and_stderr, EmpiricalMeasure, Estimate};
use crate::transport::w2_exact;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicySearch {
    pub value: Estimate,
    pub best: usize,
    pub values: Vec<Estimate>,
}

fn best_of(values: &[Estimate]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if v.value > values[best].value {
            best = i;
        }
    }
    best
}

/// Maximum of the simulated rewards over `policies`, all driven by the same
/// random streams. A lower estimate of the value up to Monte Carlo error.
pub fn value_policy_search(
    coeffs: &CoefficientSet,
    t: f64,
    mu0: &EmpiricalMeasure,
    policies: &[Policy],
    params: &SimParams,
) -> Result<PolicySearch> {
    if policies.is_empty() {
        return Err(Error::EmptyInput);
    }
    let values: Vec<Estimate> = policies
        .par_iter()
        .map(|p| Ok(mean_and_stderr(&particle_rewards(coeffs, p, t, mu0, params)?)))
        .collect::<Result<_>>()?;
    let best = best_of(&values);
    Ok(PolicySearch { value: values[best], best, values })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpsGapRow {
    pub eps: f64,
    pub value: Estimate,
    /// `|v̂_ε - v̂_0|`.
    pub gap: f64,
    /// Root mean square of the pathwise sup gap to the `ε = 0` ensemble.
    pub path_gap: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpsGapTable {
    pub rows: Vec<EpsGapRow>,
    /// Smallest `C` with `gap <= C ε` on every row.
    pub gap_constant: f64,
    /// Least squares slope of `gap` against `ε` through the origin.
    pub slope: f64,
    /// Smallest `c` with `path_gap <= c ε` on every row.
    pub path_constant: f64,
    /// `2 K (T - t + 1) c`: the value gap envelope implied by the
    /// pathwise estimate.
    pub envelope: f64,
    /// Whether every gap lies below `envelope · ε`.
    pub within_envelope: bool,
}

impl EpsGapTable {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("eps,value,stderr,gap,path_gap\n");
        for r in &self.rows {
            s += &format!("{},{},{},{},{}\n", r.eps, r.value.value, r.value.stderr, r.gap, r.path_gap);
        }
        s
    }
}

/// Common-random-number estimates of `v̂_ε` along `eps_list` (which must
/// contain 0), with the gaps to `v̂_0`.
pub fn eps_gap_experiment(
    coeffs: &CoefficientSet,
    t: f64,
    mu0: &EmpiricalMeasure,
    eps_list: &[f64],
    policies: &[Policy],
    params: &SimParams,
) -> Result<EpsGapTable> {
    if !eps_list.contains(&0.0) {
        return Err(Error::InvalidParameter("eps list must contain 0".into()));
    }
    if policies.is_empty() {
        return Err(Error::EmptyInput);
    }
    let zero = value_policy_search(coeffs, t, mu0, policies, &SimParams { eps: 0.0, ..*params })?;
    let mut rows = Vec::new();
    for &eps in eps_list {
        let search = value_policy_search(coeffs, t, mu0, policies, &SimParams { eps, ..*params })?;
        let path_gap = if eps == 0.0 {
            0.0
        } else {
            coupled_run(coeffs, &policies[zero.best], t, mu0, &SimParams { eps, ..*params })?.sup_gap_rms
        };
        rows.push(EpsGapRow { eps, value: search.value, gap: (search.value.value - zero.value.value).abs(), path_gap });
    }
    let positive: Vec<&EpsGapRow> = rows.iter().filter(|r| r.eps > 0.0).collect();
    let gap_constant = positive.iter().map(|r| r.gap / r.eps).fold(0.0, f64::max);
    let path_constant = positive.iter().map(|r| r.path_gap / r.eps).fold(0.0, f64::max);
    let sxx: f64 = positive.iter().map(|r| r.eps * r.eps).sum();
    let sxy: f64 = positive.iter().map(|r| r.eps * r.gap).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let envelope = 2.0 * coeffs.k * (coeffs.horizon - t + 1.0) * path_constant;
    let within_envelope = rows.iter().all(|r| r.gap <= envelope * r.eps);
    Ok(EpsGapTable { rows, gap_constant, slope, path_constant, envelope, within_envelope })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DppReport {
    pub one_stage: Estimate,
    pub two_stage: Estimate,
    /// `two_stage - one_stage`.
    pub difference: f64,
    /// Three combined standard errors.
    pub tolerance: f64,
    /// Equality within tolerance for a single control, otherwise
    /// `one_stage <= two_stage + tolerance`.
    pub holds: bool,
}

/// Compares `v̂(t, μ0)` with `max_π [running reward on [t, s] + v̂(s, μ̂_s^π)]`.
/// The second stage restarts every particle from its own position with
/// fresh noise.
pub fn dpp_check(
    coeffs: &CoefficientSet,
    t: f64,
    s: f64,
    mu0: &EmpiricalMeasure,
    policies: &[Policy],
    params: &SimParams,
) -> Result<DppReport> {
    if !(t <= s && s <= coeffs.horizon) {
        return Err(Error::InvalidHorizon { start: t, end: s });
    }
    let one = value_policy_search(coeffs, t, mu0, policies, params)?;
    let span = coeffs.horizon - t;
    let steps1 = if span > 0.0 { ((params.steps as f64) * (s - t) / span).round() as usize } else { 0 };
    let steps2 = params.steps.saturating_sub(steps1).max(1);
    let stage2_seed = params.seed ^ 0x9e37_79b9_7f4a_7c15;
    let candidates: Vec<Estimate> = policies
        .par_iter()
        .map(|p| {
            let init = initial_states(mu0, params.particles);
            let seg = run_segment(coeffs, p, t, s, init, &SimParams { steps: steps1.max(1), ..*params })?;
            let cont = SimParams { steps: steps2, seed: stage2_seed, ..*params };
            let mut best: Option<Vec<f64>> = None;
            for q in policies {
                let tot = particle_rewards_from(coeffs, q, s, seg.states.clone(), &cont)?;
                let mean = tot.iter().sum::<f64>();
                if best.as_ref().is_none_or(|b| mean > b.iter().sum::<f64>()) {
                    best = Some(tot);
                }
            }
            let totals: Vec<f64> = best.expect("non-empty").iter().zip(&seg.running).map(|(a, b)| a + b).collect();
            Ok(mean_and_stderr(&totals))
        })
        .collect::<Result<_>>()?;
    let two = candidates[best_of(&candidates)];
    let difference = two.value - one.value.value;
    let tolerance = 3.0 * (two.stderr.powi(2) + one.value.stderr.powi(2)).sqrt();
    let holds = if coeffs.controls.len() == 1 { difference.abs() <= tolerance } else { -difference <= tolerance };
    Ok(DppReport { one_stage: one.value, two_stage: two, difference, tolerance, holds })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LipschitzReport {
    pub ratios: Vec<f64>,
    pub max_ratio: f64,
    pub bound: Option<f64>,
    /// Indices of pairs whose ratio exceeds `bound`.
    pub violations: Vec<usize>,
}

/// Ratios `|v̂(t, μ) - v̂(t, μ')| / W_2(μ, μ')` with common random numbers.
pub fn lipschitz_check(
    coeffs: &CoefficientSet,
    t: f64,
    pairs: &[(EmpiricalMeasure, EmpiricalMeasure)],
    policies: &[Policy],
    params: &SimParams,
    bound: Option<f64>,
) -> Result<LipschitzReport> {
    if pairs.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut ratios = Vec::with_capacity(pairs.len());
    for (i, (mu, nu)) in pairs.iter().enumerate() {
        let w = w2_exact(mu, nu)?.0;
        if w == 0.0 {
            return Err(Error::DegeneratePair { index: i });
        }
        let a = value_policy_search(coeffs, t, mu, policies, params)?.value.value;
        let b = value_policy_search(coeffs, t, nu, policies, params)?.value.value;
        ratios.push((a - b).abs() / w);
    }
    let max_ratio = ratios.iter().cloned().fold(0.0, f64::max);
    let violations = match bound {
        Some(l) => ratios.iter().enumerate().filter(|(_, &r)| r > l).map(|(i, _)| i).collect(),
        None => Vec::new(),
    };
    Ok(LipschitzReport { ratios, max_ratio, bound, violations })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mfc::coeffs::registry;
    use crate::mfc::policy::constant_policies;
    use std::collections::BTreeMap;

    #[test]
    fn heat_cos_value_matches_heat_kernel() {
        let c = registry("heat-cos", &BTreeMap::new()).unwrap();
        let r = value_policy_search(&c, 0.0, &EmpiricalMeasure::dirac(&[0.0]), &[Policy::Constant(0)], &SimParams::new(20_000, 50, 0.0, 11))
            .unwrap();
        assert!((r.value.value - (-0.5f64).exp()).abs() < 0.02, "{:?}", r.value);
    }

    #[test]
    fn bangbang_prefers_positive_drift() {
        let c = registry("bangbang", &BTreeMap::new()).unwrap();
        let r = value_policy_search(&c, 0.0, &EmpiricalMeasure::dirac(&[0.0]), &constant_policies(2), &SimParams::new(2000, 20, 0.0, 5))
            .unwrap();
        assert_eq!(c.controls[r.best], vec![1.0]);
    }

    #[test]
    fn dpp_at_initial_time_is_identity_within_noise() {
        let c = registry("heat-cos", &BTreeMap::new()).unwrap();
        let mu = EmpiricalMeasure::from_points(&[vec![0.3], vec![-1.0]], None).unwrap();
        let r = dpp_check(&c, 0.0, 0.0, &mu, &[Policy::Constant(0)], &SimParams::new(4000, 20, 0.0, 2)).unwrap();
        assert!(r.holds, "{r:?}");
    }

    #[test]
    fn degenerate_pair_is_rejected() {
        let c = registry("heat-cos", &BTreeMap::new()).unwrap();
        let mu = EmpiricalMeasure::dirac(&[0.0]);
        let r = lipschitz_check(&c, 0.0, &[(mu.clone(), mu)], &[Policy::Constant(0)], &SimParams::new(10, 2, 0.0, 0), None);
        assert!(matches!(r, Err(Error::DegeneratePair { index: 0 })));
    }

    #[test]
    fn eps_gap_requires_zero() {
        let c = registry("heat-cos", &BTreeMap::new()).unwrap();
        let mu = EmpiricalMeasure::dirac(&[0.0]);
        assert!(eps_gap_experiment(&c, 0.0, &mu, &[0.1], &[Policy::Constant(0)], &SimParams::new(10, 2, 0.0, 0)).is_err());
    }
}
