//! Empirical audit of the gauge-type axioms on pairs of points.

use serde::{Deserialize, Serialize};

use super::{eta_eps, rho2, rho2_unsmoothed_sum, GaugePoint, GaugeSpec};
use crate::transport::w2_exact;
use crate::{Error, Result};

/// Settings of the audit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AxiomConfig {
    pub eps_grid: Vec<f64>,
    /// Size of the joint time/space shift used for the continuity check.
    pub continuity_step: f64,
    /// Largest admissible change of the gauge under that shift.
    pub continuity_tol: f64,
}

impl Default for AxiomConfig {
    fn default() -> Self {
        Self { eps_grid: vec![0.5, 0.1], continuity_step: 1e-9, continuity_tol: 1e-6 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AxiomWitness {
    pub axiom: char,
    pub pair: usize,
    pub eps: Option<f64>,
    pub detail: String,
}

/// Per-ε counts for the separation axiom.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeparationCount {
    pub eps: f64,
    pub eta: f64,
    /// Pairs whose truncated gauge is at most `η_ε`.
    pub series_checked: usize,
    /// Pairs whose truncated gauge plus tail is at most `η_ε`.
    pub metric_checked: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AxiomReport {
    pub pairs: usize,
    pub separation: Vec<SeparationCount>,
    pub violations: Vec<AxiomWitness>,
}

fn shifted(p: &GaugePoint, step: f64) -> GaugePoint {
    let v = vec![step; p.mu.dim()];
    GaugePoint::new(p.t + step, p.mu.translate(&v))
}

/// Checks, for every pair:
/// (a) the gauge vanishes on the diagonal and is non-negative;
/// (b) a tiny joint shift of the second point changes it by at most the
///     configured tolerance;
/// (c) for each ε, a truncated gauge below `η_ε` forces the truncated
///     unsmoothed sum below `ε^2/2`, and a gauge plus tail below `η_ε` forces
///     `|t - s| + W_2^(ρ)(μ, ν) <= ε`, using `W_2(μ, ν)` as an upper estimate
///     of the smoothed distance.
pub fn audit_gauge_axioms(spec: &GaugeSpec, pairs: &[(GaugePoint, GaugePoint)], cfg: &AxiomConfig) -> Result<AxiomReport> {
    if pairs.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut violations = Vec::new();
    let mut separation: Vec<SeparationCount> = cfg
        .eps_grid
        .iter()
        .map(|&eps| SeparationCount { eps, eta: eta_eps(eps, spec.c_d), series_checked: 0, metric_checked: 0 })
        .collect();
    for (i, (p, q)) in pairs.iter().enumerate() {
        let pq = rho2(p, q, spec)?;
        let pp = rho2(p, p, spec)?.value;
        let qq = rho2(q, q, spec)?.value;
        if pp != 0.0 || qq != 0.0 || pq.value < 0.0 {
            violations.push(AxiomWitness {
                axiom: 'a',
                pair: i,
                eps: None,
                detail: format!("rho(p,p)={pp:e}, rho(q,q)={qq:e}, rho(p,q)={:e}", pq.value),
            });
        }
        let moved = rho2(p, &shifted(q, cfg.continuity_step), spec)?.value;
        if (moved - pq.value).abs() > cfg.continuity_tol {
            violations.push(AxiomWitness {
                axiom: 'b',
                pair: i,
                eps: None,
                detail: format!("shift changed gauge from {:e} to {moved:e}", pq.value),
            });
        }
        let needs_series = separation.iter().any(|s| pq.value <= s.eta);
        let series = if needs_series { Some(rho2_unsmoothed_sum(p, q, spec)?) } else { None };
        let needs_metric = separation.iter().any(|s| pq.value + pq.tail <= s.eta);
        let w2 = if needs_metric { Some(w2_exact(&p.mu, &q.mu)?.0) } else { None };
        for s in separation.iter_mut() {
            if pq.value <= s.eta {
                s.series_checked += 1;
                let d2 = series.expect("computed above");
                if d2 > s.eps * s.eps / 2.0 {
                    violations.push(AxiomWitness {
                        axiom: 'c',
                        pair: i,
                        eps: Some(s.eps),
                        detail: format!("gauge {:e} <= eta {:e} but series {d2:e} > eps^2/2", pq.value, s.eta),
                    });
                }
            }
            if pq.value + pq.tail <= s.eta {
                s.metric_checked += 1;
                let dist = (p.t - q.t).abs() + w2.expect("computed above");
                if dist > s.eps {
                    violations.push(AxiomWitness {
                        axiom: 'c',
                        pair: i,
                        eps: Some(s.eps),
                        detail: format!("gauge {:e} + tail {:e} <= eta but distance {dist:e} > eps", pq.value, pq.tail),
                    });
                }
            }
        }
    }
    Ok(AxiomReport { pairs: pairs.len(), separation, violations })
}

/// [`audit_gauge_axioms`], failing on the first recorded violation.
pub fn check_gauge_axioms(spec: &GaugeSpec, pairs: &[(GaugePoint, GaugePoint)], cfg: &AxiomConfig) -> Result<AxiomReport> {
    let report = audit_gauge_axioms(spec, pairs, cfg)?;
    if let Some(w) = report.violations.first() {
        return Err(Error::AxiomViolation { axiom: w.axiom, witness: format!("pair {}: {}", w.pair, w.detail) });
    }
    Ok(report)
}
