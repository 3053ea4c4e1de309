//! Lifting grid values to functions of measures, their L-derivatives,
//! derivative bounds and residuals of the Master Bellman equation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::grid::ValueGrid;
use crate::gauge::MeasureDerivative;
use crate::measures::{mean_and_stderr, EmpiricalMeasure};
use crate::mfc::{CandidateFunction, CoefficientSet, LawView};
use crate::{Error, Result};

/// Largest number of index tuples summed exactly.
pub const EXACT_TUPLE_LIMIT: usize = 1_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Lift {
    pub value: f64,
    /// Zero when the tensor sum is exact.
    pub stderr: f64,
    pub exact: bool,
}

fn check_support(vg: &ValueGrid, mu: &EmpiricalMeasure) -> Result<()> {
    if mu.dim() != vg.header.d {
        return Err(Error::DimensionMismatch { expected: vg.header.d, found: mu.dim() });
    }
    if let Some((x, _)) = mu.atoms().find(|(x, _)| !vg.contains(x)) {
        return Err(Error::SupportOutsideGrid { radius: x.iter().fold(0.0f64, |a, v| a.max(v.abs())) });
    }
    Ok(())
}

/// Index tuple number `flat` in base `atoms`, `len` digits.
fn tuple(mut flat: usize, atoms: usize, len: usize) -> Vec<usize> {
    (0..len)
        .map(|_| {
            let k = flat % atoms;
            flat /= atoms;
            k
        })
        .collect()
}

fn stacked(mu: &EmpiricalMeasure, idx: &[usize]) -> (Vec<f64>, f64) {
    let mut x = Vec::with_capacity(idx.len() * mu.dim());
    let mut w = 1.0;
    for &j in idx {
        x.extend_from_slice(mu.point(j));
        w *= mu.weight(j);
    }
    (x, w)
}

/// `v(t, μ) = ∫ v̄(t, x_1, ..., x_n) μ(dx_1) ... μ(dx_n)`, summed exactly
/// when there are at most [`EXACT_TUPLE_LIMIT`] index tuples.
pub fn lift(vg: &ValueGrid, t: f64, mu: &EmpiricalMeasure) -> Result<Lift> {
    lift_with(vg, t, mu, EXACT_TUPLE_LIMIT, 200_000, 0)
}

/// [`lift`] with an explicit exact-sum limit and Monte Carlo budget.
pub fn lift_with(vg: &ValueGrid, t: f64, mu: &EmpiricalMeasure, limit: usize, samples: usize, seed: u64) -> Result<Lift> {
    check_support(vg, mu)?;
    let n = vg.header.n;
    let atoms = mu.len();
    let total = atoms.checked_pow(n as u32).unwrap_or(usize::MAX);
    if total <= limit {
        let value = (0..total)
            .into_par_iter()
            .map(|flat| {
                let (x, w) = stacked(mu, &tuple(flat, atoms, n));
                w * vg.value_at(t, &x)
            })
            .collect::<Vec<_>>()
            .iter()
            .sum();
        return Ok(Lift { value, stderr: 0.0, exact: true });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cum = mu.cumulative_weights();
    let draws: Vec<Vec<usize>> =
        (0..samples).map(|_| (0..n).map(|_| mu.atom_for_uniform(&cum, rng.random::<f64>())).collect()).collect();
    let vals: Vec<f64> = draws.par_iter().map(|idx| vg.value_at(t, &stacked(mu, idx).0)).collect();
    let e = mean_and_stderr(&vals);
    Ok(Lift { value: e.value, stderr: e.stderr, exact: false })
}

/// L-derivatives of the lifted grid value at a fixed `(t, μ)`.
#[derive(Clone, Debug)]
pub struct LDerivativeField<'a> {
    pub grid: &'a ValueGrid,
    pub t: f64,
    pub mu: EmpiricalMeasure,
}

impl LDerivativeField<'_> {
    /// `∂_μ v(t, μ)(x)` and `∂_x ∂_μ v(t, μ)(x)`: the sum over slots `i` of
    /// the `i`-th block of the gradient and Hessian of `v̄`, integrated
    /// against `μ` in the other slots.
    pub fn at(&self, x: &[f64]) -> Result<MeasureDerivative> {
        let d = self.grid.header.d;
        let n = self.grid.header.n;
        if x.len() != d {
            return Err(Error::DimensionMismatch { expected: d, found: x.len() });
        }
        if !self.grid.contains(x) {
            return Err(Error::SupportOutsideGrid { radius: x.iter().fold(0.0f64, |a, v| a.max(v.abs())) });
        }
        let atoms = self.mu.len();
        let others = atoms.pow((n - 1) as u32);
        let mut out = MeasureDerivative::zero(d);
        for flat in 0..others {
            let idx = tuple(flat, atoms, n - 1);
            let w: f64 = idx.iter().map(|&j| self.mu.weight(j)).product();
            for i in 0..n {
                let mut z = Vec::with_capacity(n * d);
                let mut it = idx.iter();
                for slot in 0..n {
                    if slot == i {
                        z.extend_from_slice(x);
                    } else {
                        z.extend_from_slice(self.mu.point(*it.next().expect("n - 1 indices")));
                    }
                }
                let p = self.grid.interpolate(self.t, &z);
                for a in 0..d {
                    out.grad[a] += w * p.grad[i * d + a];
                    for b in 0..d {
                        out.hess[a][b] += w * p.hess[i * d + a][i * d + b];
                    }
                }
            }
        }
        Ok(out)
    }

    pub fn dmu(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.at(x)?.grad)
    }

    pub fn dxdmu(&self, x: &[f64]) -> Result<Vec<Vec<f64>>> {
        Ok(self.at(x)?.hess)
    }
}

pub fn l_derivatives<'a>(vg: &'a ValueGrid, t: f64, mu: &EmpiricalMeasure) -> Result<LDerivativeField<'a>> {
    check_support(vg, mu)?;
    Ok(LDerivativeField { grid: vg, t, mu: mu.clone() })
}

/// The lifted grid value as a function of `(t, μ)`.
#[derive(Clone, Debug)]
pub struct LiftedValue<'a> {
    pub grid: &'a ValueGrid,
}

impl CandidateFunction for LiftedValue<'_> {
    fn dim(&self) -> usize {
        self.grid.header.d
    }

    fn value(&self, t: f64, mu: &EmpiricalMeasure) -> Result<f64> {
        Ok(lift(self.grid, t, mu)?.value)
    }

    fn dt(&self, t: f64, mu: &EmpiricalMeasure) -> Result<f64> {
        check_support(self.grid, mu)?;
        let n = self.grid.header.n;
        let atoms = mu.len();
        let mut s = 0.0;
        for flat in 0..atoms.pow(n as u32) {
            let (x, w) = stacked(mu, &tuple(flat, atoms, n));
            s += w * self.grid.time_derivative(t, &x);
        }
        Ok(s)
    }

    fn measure_derivatives(&self, t: f64, mu: &EmpiricalMeasure, points: &[Vec<f64>]) -> Result<Vec<MeasureDerivative>> {
        let field = l_derivatives(self.grid, t, mu)?;
        points.iter().map(|x| field.at(x)).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DerivativeBounds {
    pub n: usize,
    pub eps: f64,
    /// `n max |∂_{x_i} v̄|` over interior nodes of the region of interest.
    pub c_k: f64,
    /// Smallest and largest second partial derivative.
    pub second_min: f64,
    pub second_max: f64,
}

/// Grid extremes of the first and second derivatives of `v̄` by central
/// differences, over nodes inside the region of interest on every stored
/// slice.
pub fn derivative_bounds_check(vg: &ValueGrid) -> DerivativeBounds {
    let dims = vg.dims();
    let (n, d) = (vg.header.n, vg.header.d);
    let p = vg.header.points;
    let h = vg.spacing();
    let mut strides = vec![1usize; dims];
    for a in 1..dims {
        strides[a] = strides[a - 1] * p;
    }
    let support = vg.header.support;
    let interior: Vec<usize> = (0..vg.nodes_per_slice())
        .filter(|&node| {
            let idx = vg.node_index(node);
            idx.iter().all(|&k| k >= 1 && k + 1 < p && vg.coordinate(k).abs() <= support + 1e-12)
        })
        .collect();
    let mut first = 0.0f64;
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for k in 0..vg.header.times.len() {
        let v = vg.slice(k);
        for &node in &interior {
            for i in 0..n {
                let mut g2 = 0.0;
                for c in 0..d {
                    let a = i * d + c;
                    let g = (v[node + strides[a]] - v[node - strides[a]]) / (2.0 * h);
                    g2 += g * g;
                }
                first = first.max(g2.sqrt());
            }
            for a in 0..dims {
                for b in 0..dims {
                    let val = if a == b {
                        (v[node + strides[a]] - 2.0 * v[node] + v[node - strides[a]]) / (h * h)
                    } else {
                        (v[node + strides[a] + strides[b]] - v[node + strides[a] - strides[b]] - v[node - strides[a] + strides[b]]
                            + v[node - strides[a] - strides[b]])
                            / (4.0 * h * h)
                    };
                    lo = lo.min(val);
                    hi = hi.max(val);
                }
            }
        }
    }
    DerivativeBounds { n, eps: vg.header.eps, c_k: n as f64 * first, second_min: lo, second_max: hi }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MasterResidual {
    /// `|∂_t u + Σ_x μ(x) sup_a {f + ⟨b, ∂_μ u(x)⟩ + ½ tr[(σσ^T + ε^2) ∂_x ∂_μ u(x)]}|`.
    pub residual: f64,
    /// `|u(T, μ) - ∫ g dμ|`.
    pub terminal_gap: f64,
}

/// Residual of the Master Bellman equation for a candidate at `(t, μ)`,
/// with the supremum over the finite control set taken exactly. Setting
/// `eps > 0` adds the extra diffusion of the regularised problem.
pub fn master_residual(u: &dyn CandidateFunction, coeffs: &CoefficientSet, t: f64, mu: &EmpiricalMeasure, eps: f64) -> Result<MasterResidual> {
    if !(t < coeffs.horizon) {
        return Err(Error::InvalidHorizon { start: t, end: coeffs.horizon });
    }
    if mu.dim() != coeffs.d {
        return Err(Error::DimensionMismatch { expected: coeffs.d, found: mu.dim() });
    }
    let law = LawView::from_measure(mu);
    let points = mu.points();
    let ders = u.measure_derivatives(t, mu, &points)?;
    let mut total = u.dt(t, mu)?;
    for ((x, w), der) in mu.atoms().zip(&ders) {
        let mut best = f64::NEG_INFINITY;
        for a in &coeffs.controls {
            let b = coeffs.drift(t, x, &law, a);
            let am = coeffs.diffusion_matrix(t, x, a, eps);
            let d = coeffs.d;
            let tr: f64 = (0..d).flat_map(|i| (0..d).map(move |j| (i, j))).map(|(i, j)| am[i * d + j] * der.hess[j][i]).sum();
            let val = (coeffs.f)(t, x, &law, a) + b.iter().zip(&der.grad).map(|(p, q)| p * q).sum::<f64>() + 0.5 * tr;
            best = best.max(val);
        }
        total += w * best;
    }
    let g: f64 = mu.atoms().map(|(x, w)| w * (coeffs.g)(x, &law)).sum();
    let terminal_gap = (u.value(coeffs.horizon, mu)? - g).abs();
    Ok(MasterResidual { residual: total.abs(), terminal_gap })
}
