//! Smooth gauge-type function on `[0, T] x P_2(R^d)` built from the
//! multiscale dyadic sum of Gaussian-smoothed measures, together with its
//! time and measure derivatives.

pub mod axioms;
pub mod bp;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dyadic::{
    axis_derivative_tables, check_cell_budget, default_n_max, hole_radius, level_differences, level_edges,
    truncation_tail, weighted_cell_sum, DyadicCell, SignedAtoms,
};
use crate::measures::{norm_sq, EmpiricalMeasure, HalfOpenBox};
use crate::numerics::{gaussian_abs_moment, normal_interval, normal_pdf, z_pdf};
use crate::{Error, Result};

/// Parameters of the gauge function.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaugeSpec {
    pub bandwidth: f64,
    pub c_d: f64,
    pub n_max: u32,
    pub l_max: u32,
    pub horizon: f64,
}

impl GaugeSpec {
    /// Default truncation for measures supported in the ball of `radius`.
    pub fn for_radius(bandwidth: f64, c_d: f64, radius: f64, horizon: f64) -> Self {
        Self { bandwidth, c_d, n_max: default_n_max(radius), l_max: 10, horizon }
    }

    pub fn validate(&self, d: usize) -> Result<()> {
        if !(self.bandwidth > 0.0 && self.c_d > 0.0 && self.horizon > 0.0) {
            return Err(Error::InvalidParameter("bandwidth, c_d and horizon must be positive".into()));
        }
        check_cell_budget(d, self.n_max, self.l_max)
    }
}

/// A time and a measure.
#[derive(Clone, Debug, PartialEq)]
pub struct GaugePoint {
    pub t: f64,
    pub mu: EmpiricalMeasure,
}

impl GaugePoint {
    pub fn new(t: f64, mu: EmpiricalMeasure) -> Self {
        Self { t, mu }
    }
}

/// Truncated gauge value and a bound on the omitted part of the series.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rho2 {
    pub value: f64,
    pub tail: f64,
}

/// Smoothing offset `δ_{n,l} = 2^{-(4n + 2dl)}`.
pub fn delta_nl(n: u32, l: u32, d: usize) -> f64 {
    2f64.powi(-((4 * n) as i32 + (2 * d as u32 * l) as i32))
}

/// `sqrt(Δ^2 + δ^2) - δ` without cancellation.
pub fn smooth_abs(delta: f64, offset: f64) -> f64 {
    let s = (delta * delta + offset * offset).sqrt();
    if s + offset == 0.0 {
        0.0
    } else {
        delta * delta / (s + offset)
    }
}

/// Derivative of [`smooth_abs`] in `Δ`.
pub fn smooth_abs_slope(delta: f64, offset: f64) -> f64 {
    let s = (delta * delta + offset * offset).sqrt();
    if s == 0.0 {
        0.0
    } else {
        delta / s
    }
}

fn box_probability(x: &[f64], b: &HalfOpenBox, rho: f64) -> f64 {
    x.iter()
        .zip(b.lower.iter().zip(&b.upper))
        .map(|(x, (l, u))| normal_interval((l - x) / rho, (u - x) / rho))
        .product()
}

fn box_axis_terms(x: &[f64], b: &HalfOpenBox, rho: f64) -> Vec<(f64, f64, f64)> {
    x.iter()
        .zip(b.lower.iter().zip(&b.upper))
        .map(|(x, (l, u))| {
            let (za, zb) = ((l - x) / rho, (u - x) / rho);
            let p = normal_interval(za, zb);
            let d1 = (normal_pdf(za) - normal_pdf(zb)) / rho;
            let d2 = (z_pdf(za) - z_pdf(zb)) / (rho * rho);
            (p, d1, d2)
        })
        .collect()
}

fn box_grad(x: &[f64], b: &HalfOpenBox, rho: f64) -> Vec<f64> {
    let t = box_axis_terms(x, b, rho);
    (0..x.len())
        .map(|j| t.iter().enumerate().map(|(k, &(p, d1, _))| if k == j { d1 } else { p }).product())
        .collect()
}

fn box_hess(x: &[f64], b: &HalfOpenBox, rho: f64) -> Vec<Vec<f64>> {
    let t = box_axis_terms(x, b, rho);
    let d = x.len();
    (0..d)
        .map(|i| {
            (0..d)
                .map(|j| {
                    t.iter()
                        .enumerate()
                        .map(|(k, &(p, d1, d2))| match (k == i, k == j) {
                            (true, true) => d2,
                            (true, false) | (false, true) => d1,
                            _ => p,
                        })
                        .product()
                })
                .collect()
        })
        .collect()
}

/// `φ(x) = ∫_cell ζ_ρ(z - x) dz`, the probability that `x + ρZ` lies in the
/// realized cell.
pub fn phi_cell(x: &[f64], cell: &DyadicCell, rho: f64) -> f64 {
    let outer = box_probability(x, &cell.outer, rho);
    let hole = cell.hole.as_ref().map_or(0.0, |h| box_probability(x, h, rho));
    outer - hole
}

/// Gradient of [`phi_cell`] in `x`.
pub fn grad_phi_cell(x: &[f64], cell: &DyadicCell, rho: f64) -> Vec<f64> {
    let mut g = box_grad(x, &cell.outer, rho);
    if let Some(h) = &cell.hole {
        for (gi, hi) in g.iter_mut().zip(box_grad(x, h, rho)) {
            *gi -= hi;
        }
    }
    g
}

/// Hessian of [`phi_cell`] in `x`.
pub fn hess_phi_cell(x: &[f64], cell: &DyadicCell, rho: f64) -> Vec<Vec<f64>> {
    let mut h = box_hess(x, &cell.outer, rho);
    if let Some(hole) = &cell.hole {
        for (row, hrow) in h.iter_mut().zip(box_hess(x, hole, rho)) {
            for (a, b) in row.iter_mut().zip(hrow) {
                *a -= b;
            }
        }
    }
    h
}

fn check_points(p: &GaugePoint, q: &GaugePoint) -> Result<()> {
    if p.mu.dim() != q.mu.dim() {
        return Err(Error::DimensionMismatch { expected: p.mu.dim(), found: q.mu.dim() });
    }
    Ok(())
}

/// Truncated `ρ_{2,ρ}((t, μ), (s, ν))` and a bound on its tail.
pub fn rho2(p: &GaugePoint, q: &GaugePoint, spec: &GaugeSpec) -> Result<Rho2> {
    check_points(p, q)?;
    let d = p.mu.dim();
    spec.validate(d)?;
    let (sm, sn) = (p.mu.smoothed(spec.bandwidth)?, q.mu.smoothed(spec.bandwidth)?);
    let atoms = SignedAtoms::difference(&sm, &sn)?;
    let series = weighted_cell_sum(&atoms, spec.n_max, spec.l_max, |n, l, delta| smooth_abs(delta, delta_nl(n, l, d)));
    let dt = p.t - q.t;
    Ok(Rho2 {
        value: dt * dt + spec.c_d * series,
        tail: spec.c_d * truncation_tail(&sm, &sn, spec.n_max, spec.l_max),
    })
}

/// Truncated `|t - s|^2 + c_d Σ ... |Δ_B|` for the smoothed measures: the
/// unsmoothed counterpart of [`rho2`].
pub fn rho2_unsmoothed_sum(p: &GaugePoint, q: &GaugePoint, spec: &GaugeSpec) -> Result<f64> {
    check_points(p, q)?;
    spec.validate(p.mu.dim())?;
    let (sm, sn) = (p.mu.smoothed(spec.bandwidth)?, q.mu.smoothed(spec.bandwidth)?);
    let atoms = SignedAtoms::difference(&sm, &sn)?;
    let series = weighted_cell_sum(&atoms, spec.n_max, spec.l_max, |_, _, delta| delta.abs());
    Ok((p.t - q.t).powi(2) + spec.c_d * series)
}

/// `∂_t ρ = 2 (t - s)`.
pub fn dt_rho2(p: &GaugePoint, q: &GaugePoint) -> f64 {
    2.0 * (p.t - q.t)
}

/// Measure derivative and its spatial Jacobian at one point.
#[derive(Clone, Debug, PartialEq)]
pub struct MeasureDerivative {
    pub grad: Vec<f64>,
    pub hess: Vec<Vec<f64>>,
}

impl MeasureDerivative {
    pub fn zero(d: usize) -> Self {
        Self { grad: vec![0.0; d], hess: vec![vec![0.0; d]; d] }
    }

    fn add(&mut self, other: &MeasureDerivative) {
        for (a, b) in self.grad.iter_mut().zip(&other.grad) {
            *a += b;
        }
        for (ra, rb) in self.hess.iter_mut().zip(&other.hess) {
            for (a, b) in ra.iter_mut().zip(rb) {
                *a += b;
            }
        }
    }

    pub fn scale(&mut self, c: f64) {
        self.grad.iter_mut().for_each(|g| *g *= c);
        self.hess.iter_mut().flatten().for_each(|h| *h *= c);
    }

    pub fn grad_norm(&self) -> f64 {
        norm_sq(&self.grad).sqrt()
    }

    /// Frobenius norm of the Jacobian.
    pub fn hess_norm(&self) -> f64 {
        self.hess.iter().flatten().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn trace_with(&self, a: &[Vec<f64>]) -> f64 {
        let mut s = 0.0;
        for (i, row) in a.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                s += v * self.hess[j][i];
            }
        }
        s
    }
}

/// `∂_μ ρ((t, μ), (s, ν))(x)` and `∂_x ∂_μ ρ(...)(x)` for every `x` in
/// `points`, derivatives taken in the first argument.
pub fn measure_derivatives(p: &GaugePoint, q: &GaugePoint, spec: &GaugeSpec, points: &[Vec<f64>]) -> Result<Vec<MeasureDerivative>> {
    check_points(p, q)?;
    let d = p.mu.dim();
    spec.validate(d)?;
    if let Some(x) = points.iter().find(|x| x.len() != d) {
        return Err(Error::DimensionMismatch { expected: d, found: x.len() });
    }
    let (sm, sn) = (p.mu.smoothed(spec.bandwidth)?, q.mu.smoothed(spec.bandwidth)?);
    let atoms = SignedAtoms::difference(&sm, &sn)?;
    let pairs: Vec<(u32, u32)> = (0..=spec.n_max).flat_map(|n| (0..=spec.l_max).map(move |l| (n, l))).collect();
    let rho = spec.bandwidth;
    let partials: Vec<Vec<MeasureDerivative>> = pairs
        .par_iter()
        .map(|&(n, l)| {
            let weight = spec.c_d * 4f64.powi(n as i32) * 4f64.powi(-(l as i32));
            let offset = delta_nl(n, l, d);
            let mut cells: Vec<(Vec<usize>, f64)> = Vec::new();
            level_differences(&atoms, n, l, |k, delta| {
                let c = weight * smooth_abs_slope(delta, offset);
                if c != 0.0 {
                    cells.push((k.to_vec(), c));
                }
            });
            let edges = level_edges(n, l);
            let hole = hole_radius(n);
            points
                .iter()
                .map(|x| {
                    let tables: Vec<[Vec<f64>; 6]> =
                        x.iter().map(|&xj| axis_derivative_tables(xj, rho, &edges, hole)).collect();
                    accumulate_cells(&cells, &tables, d)
                })
                .collect()
        })
        .collect();
    let mut out = vec![MeasureDerivative::zero(d); points.len()];
    for part in partials {
        for (o, p) in out.iter_mut().zip(part) {
            o.add(&p);
        }
    }
    Ok(out)
}

fn accumulate_cells(cells: &[(Vec<usize>, f64)], tables: &[[Vec<f64>; 6]], d: usize) -> MeasureDerivative {
    let mut acc = MeasureDerivative::zero(d);
    if d == 1 {
        let t = &tables[0];
        let (mut g, mut h) = (0.0, 0.0);
        for (k, c) in cells {
            let k = k[0];
            g += c * (t[1][k] - t[4][k]);
            h += c * (t[2][k] - t[5][k]);
        }
        acc.grad[0] = g;
        acc.hess[0][0] = h;
        return acc;
    }
    // Index layout inside each table: 0 value, 1 first, 2 second derivative
    // for the whole interval; 3, 4, 5 the same for the part in the hole.
    for (k, c) in cells {
        for base in [0usize, 3] {
            let sign = if base == 0 { 1.0 } else { -1.0 };
            let v: Vec<f64> = (0..d).map(|a| tables[a][base][k[a]]).collect();
            let d1: Vec<f64> = (0..d).map(|a| tables[a][base + 1][k[a]]).collect();
            let d2: Vec<f64> = (0..d).map(|a| tables[a][base + 2][k[a]]).collect();
            for i in 0..d {
                let mut gi = d1[i];
                for a in 0..d {
                    if a != i {
                        gi *= v[a];
                    }
                }
                acc.grad[i] += sign * c * gi;
                for j in 0..d {
                    let mut hij = if i == j { d2[i] } else { d1[i] * d1[j] };
                    for a in 0..d {
                        if a != i && a != j {
                            hij *= v[a];
                        }
                    }
                    acc.hess[i][j] += sign * c * hij;
                }
            }
        }
    }
    acc
}

/// `∂_μ ρ(...)(x)`.
pub fn dmu_rho2(p: &GaugePoint, q: &GaugePoint, spec: &GaugeSpec, x: &[f64]) -> Result<Vec<f64>> {
    Ok(measure_derivatives(p, q, spec, &[x.to_vec()])?.remove(0).grad)
}

/// `∂_x ∂_μ ρ(...)(x)`.
pub fn dxdmu_rho2(p: &GaugePoint, q: &GaugePoint, spec: &GaugeSpec, x: &[f64]) -> Result<Vec<Vec<f64>>> {
    Ok(measure_derivatives(p, q, spec, &[x.to_vec()])?.remove(0).hess)
}

/// Threshold `η_ε = (sqrt(8 c_d + ε^2/2) - sqrt(8 c_d))^2`.
pub fn eta_eps(eps: f64, c_d: f64) -> f64 {
    let a = (8.0 * c_d).sqrt();
    let b = (8.0 * c_d + eps * eps / 2.0).sqrt();
    // b - a rewritten to avoid cancellation for small ε.
    let diff = (eps * eps / 2.0) / (a + b);
    diff * diff
}

/// Shape functions of the derivative bounds at `x`: the first-order shape
/// `ρ^{-2}(E|Y|^3 + |x|^2 E|Y|)` and the second-order shape
/// `E[|Y|^2 (√d ρ^{-2} + |Y|^2 ρ^{-4})] + |x|^2 E[√d ρ^{-2} + |Y|^2 ρ^{-4}]`,
/// with `Y ~ N(0, ρ^2 I_d)`.
pub fn derivative_shapes(d: usize, rho: f64, x: &[f64]) -> (f64, f64) {
    let m = |k: f64| gaussian_abs_moment(d, k, rho);
    let x2 = norm_sq(x);
    let sd = (d as f64).sqrt();
    let first = (m(3.0) + x2 * m(1.0)) / (rho * rho);
    let second = sd * m(2.0) / rho.powi(2) + m(4.0) / rho.powi(4) + x2 * (sd / rho.powi(2) + m(2.0) / rho.powi(4));
    (first, second)
}

/// Fitted constants of the derivative bounds: the largest observed ratios of
/// `|∂_μ ρ(x)|` and `|∂_x ∂_μ ρ(x)|` to their shape functions, times a safety
/// factor of 2.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DerivativeCalibration {
    pub first: f64,
    pub second: f64,
    pub max_first_ratio: f64,
    pub max_second_ratio: f64,
    pub probes: usize,
}

impl DerivativeCalibration {
    /// Whether the measure derivative at `x` lies within both fitted bounds.
    pub fn admits(&self, rho: f64, x: &[f64], md: &MeasureDerivative) -> bool {
        let (a, b) = derivative_shapes(x.len(), rho, x);
        md.grad_norm() <= self.first * a && md.hess_norm() <= self.second * b
    }
}

/// Fits the derivative-bound constants over a corpus of gauge pairs and
/// evaluation points.
pub fn calibrate_derivative_constant(
    spec: &GaugeSpec,
    pairs: &[(GaugePoint, GaugePoint)],
    points: &[Vec<f64>],
) -> Result<DerivativeCalibration> {
    let ratios: Result<Vec<(f64, f64)>> = pairs
        .par_iter()
        .map(|(p, q)| {
            let md = measure_derivatives(p, q, spec, points)?;
            Ok(md.iter().zip(points).fold((0.0f64, 0.0f64), |(a, b), (m, x)| {
                let (s1, s2) = derivative_shapes(x.len(), spec.bandwidth, x);
                (a.max(m.grad_norm() / s1), b.max(m.hess_norm() / s2))
            }))
        })
        .collect();
    let (r1, r2) = ratios?.into_iter().fold((0.0f64, 0.0f64), |(a, b), (x, y)| (a.max(x), b.max(y)));
    Ok(DerivativeCalibration {
        first: 2.0 * r1,
        second: 2.0 * r2,
        max_first_ratio: r1,
        max_second_ratio: r2,
        probes: pairs.len() * points.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dyadic::enumerate_cells;

    fn m(pts: &[f64]) -> EmpiricalMeasure {
        EmpiricalMeasure::from_points(&pts.iter().map(|&p| vec![p]).collect::<Vec<_>>(), None).unwrap()
    }

    #[test]
    fn phi_cells_sum_to_box_probability() {
        let cells = enumerate_cells(0, 3, 1);
        let s: f64 = cells.iter().map(|c| phi_cell(&[0.0], c, 1.0)).sum();
        assert!((s - normal_interval(-1.0, 1.0)).abs() < 1e-14);
    }

    #[test]
    fn cell_derivatives_match_finite_differences() {
        let h = 1e-5;
        for d in 1..=2 {
            for cell in enumerate_cells(1, 1, d) {
                let x: Vec<f64> = (0..d).map(|k| 0.3 - 0.5 * k as f64).collect();
                let g = grad_phi_cell(&x, &cell, 0.7);
                let hs = hess_phi_cell(&x, &cell, 0.7);
                for j in 0..d {
                    let mut xp = x.clone();
                    let mut xm = x.clone();
                    xp[j] += h;
                    xm[j] -= h;
                    let fd = (phi_cell(&xp, &cell, 0.7) - phi_cell(&xm, &cell, 0.7)) / (2.0 * h);
                    assert!((fd - g[j]).abs() < 1e-8);
                    let gp = grad_phi_cell(&xp, &cell, 0.7);
                    let gm = grad_phi_cell(&xm, &cell, 0.7);
                    for i in 0..d {
                        assert!(((gp[i] - gm[i]) / (2.0 * h) - hs[i][j]).abs() < 1e-7);
                    }
                }
            }
        }
    }

    #[test]
    fn small_cell_hessian_is_negative_at_center() {
        let cell = &enumerate_cells(0, 4, 1)[8];
        let c = 0.5 * (cell.outer.lower[0] + cell.outer.upper[0]);
        assert!(hess_phi_cell(&[c], cell, 0.5)[0][0] < 0.0);
    }

    #[test]
    fn gauge_vanishes_on_diagonal() {
        let spec = GaugeSpec { bandwidth: 1.0, c_d: 1.0, n_max: 3, l_max: 6, horizon: 1.0 };
        let p = GaugePoint::new(0.3, m(&[0.1, -0.4]));
        assert_eq!(rho2(&p, &p, &spec).unwrap().value, 0.0);
        let q = GaugePoint::new(0.5, m(&[0.1, -0.4]));
        assert!((rho2(&p, &q, &spec).unwrap().value - 0.04).abs() < 1e-15);
        assert_eq!(dt_rho2(&p, &q), -0.4);
    }

    #[test]
    fn eta_reference_value() {
        let e = eta_eps(0.1, 1.0);
        let direct = ((8.0f64 + 0.005).sqrt() - 8.0f64.sqrt()).powi(2);
        assert!((e - direct).abs() < 1e-18);
        assert!((e - 7.8e-7).abs() < 1e-8);
    }

    #[test]
    fn derivative_vanishes_at_anchor() {
        let spec = GaugeSpec { bandwidth: 1.0, c_d: 1.0, n_max: 3, l_max: 5, horizon: 1.0 };
        let p = GaugePoint::new(0.0, m(&[0.2, 0.9]));
        let g = dmu_rho2(&p, &p, &spec, &[0.4]).unwrap();
        assert_eq!(g, vec![0.0]);
    }
}
