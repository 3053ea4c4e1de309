//! Convergence of the lifted `n`-player values towards the mean-field value.

use serde::{Deserialize, Serialize};

use super::lift::lift;
use super::solver::{solve_hjb, GridParams, GRID_DIMENSION_CAP};
use crate::measures::{EmpiricalMeasure, Estimate};
use crate::mfc::{constant_policies, mollify, value_policy_search, CoefficientSet, MollifyConfig, SimParams};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChaosParams {
    /// Grid settings; `points_per_n[k]` overrides the node count for the
    /// `k`-th entry of the `n` list.
    pub grid: GridParams,
    pub points_per_n: Vec<usize>,
    pub mollify: MollifyConfig,
    /// Particle simulation giving the mean-field reference.
    pub reference: SimParams,
    /// Declared tolerance between the finest entry and the reference.
    pub tolerance: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChaosEntry {
    pub n: usize,
    pub m: usize,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChaosTable {
    pub entries: Vec<ChaosEntry>,
    pub reference: Estimate,
    /// For each `n`, the gaps `|v_{n,m_{k+1}} - v_{n,m_k}|` along the `m` list.
    pub m_gaps: Vec<(usize, Vec<f64>)>,
    /// `|v_{n_max, m_max} - reference|`.
    pub final_gap: f64,
    /// Whether every `n` has strictly decreasing successive `m` gaps.
    pub m_gaps_decrease: bool,
    pub within_tolerance: bool,
}

impl ChaosTable {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("n,m,value\n");
        for e in &self.entries {
            s += &format!("{},{},{}\n", e.n, e.m, e.value);
        }
        s
    }
}

/// Solves the mollified `n`-player problem for every `(n, m)`, lifts the
/// result at `(t, μ)` and compares with a large particle simulation.
pub fn chaos_experiment(
    coeffs: &CoefficientSet,
    t: f64,
    mu: &EmpiricalMeasure,
    eps: f64,
    ns: &[usize],
    ms: &[usize],
    params: &ChaosParams,
) -> Result<ChaosTable> {
    if ns.is_empty() || ms.is_empty() {
        return Err(Error::EmptyInput);
    }
    if let Some(&n) = ns.iter().find(|&&n| n * coeffs.d > GRID_DIMENSION_CAP) {
        return Err(Error::DimensionCap { found: n * coeffs.d, cap: GRID_DIMENSION_CAP });
    }
    let mut entries = Vec::new();
    let mut m_gaps: Vec<(usize, Vec<f64>)> = Vec::new();
    for (k, &n) in ns.iter().enumerate() {
        let grid = GridParams { points: params.points_per_n.get(k).copied().unwrap_or(params.grid.points), ..params.grid.clone() };
        let mut values = Vec::new();
        for &m in ms {
            let mo = mollify(coeffs, n, m, params.mollify)?;
            let vg = solve_hjb(&mo, eps, &grid)?;
            let value = lift(&vg, t, mu)?.value;
            values.push(value);
            entries.push(ChaosEntry { n, m, value });
        }
        m_gaps.push((n, values.windows(2).map(|w| (w[1] - w[0]).abs()).collect()));
    }
    let reference =
        value_policy_search(coeffs, t, mu, &constant_policies(coeffs.controls.len()), &SimParams { eps, ..params.reference })?.value;
    let last = entries.last().expect("non-empty table").value;
    let final_gap = (last - reference.value).abs();
    let m_gaps_decrease = m_gaps.iter().all(|(_, g)| g.windows(2).all(|w| w[1] < w[0]));
    Ok(ChaosTable { entries, reference, m_gaps, final_gap, m_gaps_decrease, within_tolerance: final_gap <= params.tolerance })
}
