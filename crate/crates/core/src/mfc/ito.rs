//! Functions of measures with their derivatives, and a particle check of the
//! chain rule along an Itô process with constant coefficients.

use std::sync::Arc;

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::sim::{initial_states, particle_rngs, time_grid};
use crate::gauge::{dt_rho2, measure_derivatives, rho2, GaugePoint, GaugeSpec, MeasureDerivative};
use crate::measures::{norm_sq, EmpiricalMeasure};
use crate::{Error, Result};

/// `u(t, μ)` together with `∂_t u`, `∂_μ u(t, μ)(x)` and `∂_x ∂_μ u(t, μ)(x)`.
pub trait CandidateFunction: Sync {
    fn dim(&self) -> usize;
    fn value(&self, t: f64, mu: &EmpiricalMeasure) -> Result<f64>;
    fn dt(&self, t: f64, mu: &EmpiricalMeasure) -> Result<f64>;
    /// Both measure derivatives at every point of `points`.
    fn measure_derivatives(&self, t: f64, mu: &EmpiricalMeasure, points: &[Vec<f64>]) -> Result<Vec<MeasureDerivative>>;

    /// Largest `|∂_μ u(x)| / (1 + |x|^2)` and `|∂_x ∂_μ u(x)| / (1 + |x|^2)`
    /// over the probes.
    fn growth_constants(&self, t: f64, mu: &EmpiricalMeasure, probes: &[Vec<f64>]) -> Result<(f64, f64)> {
        let ders = self.measure_derivatives(t, mu, probes)?;
        let mut c = (0.0f64, 0.0f64);
        for (x, der) in probes.iter().zip(&ders) {
            let w = 1.0 + norm_sq(x);
            c.0 = c.0.max(der.grad_norm() / w);
            c.1 = c.1.max(der.hess_norm() / w);
        }
        Ok(c)
    }
}

type ValueFn = Arc<dyn Fn(f64, &EmpiricalMeasure) -> f64 + Send + Sync>;
type GradFn = Arc<dyn Fn(f64, &EmpiricalMeasure, &[f64]) -> Vec<f64> + Send + Sync>;
type HessFn = Arc<dyn Fn(f64, &EmpiricalMeasure, &[f64]) -> Vec<Vec<f64>> + Send + Sync>;

/// Candidate given by four caller-supplied evaluators.
#[derive(Clone)]
pub struct FnCandidate {
    pub dim: usize,
    pub u: ValueFn,
    pub dt_u: ValueFn,
    pub dmu_u: GradFn,
    pub dxdmu_u: HessFn,
}

impl CandidateFunction for FnCandidate {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, t: f64, mu: &EmpiricalMeasure) -> Result<f64> {
        Ok((self.u)(t, mu))
    }

    fn dt(&self, t: f64, mu: &EmpiricalMeasure) -> Result<f64> {
        Ok((self.dt_u)(t, mu))
    }

    fn measure_derivatives(&self, t: f64, mu: &EmpiricalMeasure, points: &[Vec<f64>]) -> Result<Vec<MeasureDerivative>> {
        Ok(points
            .iter()
            .map(|x| MeasureDerivative { grad: (self.dmu_u)(t, mu, x), hess: (self.dxdmu_u)(t, mu, x) })
            .collect())
    }
}

/// `u(t, μ) = ∫ x_k dμ`.
pub fn mean_candidate(dim: usize, k: usize) -> FnCandidate {
    FnCandidate {
        dim,
        u: Arc::new(move |_, mu| mu.mean()[k]),
        dt_u: Arc::new(|_, _| 0.0),
        dmu_u: Arc::new(move |_, _, _| (0..dim).map(|j| if j == k { 1.0 } else { 0.0 }).collect()),
        dxdmu_u: Arc::new(move |_, _, _| vec![vec![0.0; dim]; dim]),
    }
}

/// `u(t, μ) = ∫ |x|^2 dμ`.
pub fn second_moment_candidate(dim: usize) -> FnCandidate {
    FnCandidate {
        dim,
        u: Arc::new(|_, mu| mu.atoms().map(|(x, w)| w * norm_sq(x)).sum()),
        dt_u: Arc::new(|_, _| 0.0),
        dmu_u: Arc::new(|_, _, x| x.iter().map(|v| 2.0 * v).collect()),
        dxdmu_u: Arc::new(move |_, _, _| (0..dim).map(|i| (0..dim).map(|j| if i == j { 2.0 } else { 0.0 }).collect()).collect()),
    }
}

/// `u(t, μ) = e^{-(T - t)/2} ∫ cos(x_1) dμ`, the value of the heat problem
/// with cosine terminal reward.
pub fn heat_cos_candidate(horizon: f64) -> FnCandidate {
    let decay = move |t: f64| (-(horizon - t) / 2.0).exp();
    FnCandidate {
        dim: 1,
        u: Arc::new(move |t, mu| decay(t) * mu.atoms().map(|(x, w)| w * x[0].cos()).sum::<f64>()),
        dt_u: Arc::new(move |t, mu| 0.5 * decay(t) * mu.atoms().map(|(x, w)| w * x[0].cos()).sum::<f64>()),
        dmu_u: Arc::new(move |t, _, x| vec![-decay(t) * x[0].sin()]),
        dxdmu_u: Arc::new(move |t, _, x| vec![vec![-decay(t) * x[0].cos()]]),
    }
}

/// The gauge `ρ((t, μ), anchor)` as a function of its first argument.
#[derive(Clone, Debug)]
pub struct GaugeCandidate {
    pub anchor: GaugePoint,
    pub spec: GaugeSpec,
}

impl CandidateFunction for GaugeCandidate {
    fn dim(&self) -> usize {
        self.anchor.mu.dim()
    }

    fn value(&self, t: f64, mu: &EmpiricalMeasure) -> Result<f64> {
        Ok(rho2(&GaugePoint::new(t, mu.clone()), &self.anchor, &self.spec)?.value)
    }

    fn dt(&self, t: f64, mu: &EmpiricalMeasure) -> Result<f64> {
        Ok(dt_rho2(&GaugePoint::new(t, mu.clone()), &self.anchor))
    }

    fn measure_derivatives(&self, t: f64, mu: &EmpiricalMeasure, points: &[Vec<f64>]) -> Result<Vec<MeasureDerivative>> {
        measure_derivatives(&GaugePoint::new(t, mu.clone()), &self.anchor, &self.spec, points)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ItoReport {
    /// `u(s, μ̂_s) - u(t, μ0)`.
    pub increment: f64,
    /// Left-endpoint quadrature of the drift of `u` along the particles.
    pub integral: f64,
    pub residual: f64,
}

/// Simulates `dX = β dr + ϑ dB` from `μ0` with `particles` particles and
/// compares the increment of `u` along the empirical flow with
/// `∫ [∂_t u + E⟨β, ∂_μ u(X)⟩ + ½ E tr(ϑϑ^T ∂_x ∂_μ u(X))] dr`.
#[allow(clippy::too_many_arguments)]
pub fn ito_check(
    u: &dyn CandidateFunction,
    beta: &[f64],
    theta: &[Vec<f64>],
    t: f64,
    s: f64,
    mu0: &EmpiricalMeasure,
    particles: usize,
    steps: usize,
    seed: u64,
) -> Result<ItoReport> {
    let d = u.dim();
    if mu0.dim() != d {
        return Err(Error::DimensionMismatch { expected: d, found: mu0.dim() });
    }
    if beta.len() != d || theta.len() != d {
        return Err(Error::DimensionMismatch { expected: d, found: beta.len().min(theta.len()) });
    }
    let m = theta[0].len();
    if m == 0 || theta.iter().any(|r| r.len() != m) {
        return Err(Error::InvalidParameter("theta must be a non-empty d x m matrix".into()));
    }
    if !(s > t) {
        return Err(Error::InvalidHorizon { start: t, end: s });
    }
    if particles == 0 || steps == 0 {
        return Err(Error::InvalidParameter("particles and steps must be positive".into()));
    }
    let a: Vec<Vec<f64>> = (0..d).map(|i| (0..d).map(|j| (0..m).map(|k| theta[i][k] * theta[j][k]).sum()).collect()).collect();
    let times = time_grid(t, s, steps);
    let mut states = initial_states(mu0, particles);
    let mut rngs = particle_rngs(seed, particles);
    let measure = |states: &[f64]| EmpiricalMeasure::from_flat(d, states.to_vec(), None);
    let start = u.value(t, &measure(&states)?)?;
    let mut integral = 0.0;
    for k in 0..steps {
        let (tk, dt) = (times[k], times[k + 1] - times[k]);
        let mu = measure(&states)?;
        let points: Vec<Vec<f64>> = states.chunks(d).map(|c| c.to_vec()).collect();
        let ders = u.measure_derivatives(tk, &mu, &points)?;
        let mut drift = u.dt(tk, &mu)?;
        let w = 1.0 / particles as f64;
        for der in &ders {
            let first: f64 = der.grad.iter().zip(beta).map(|(g, b)| g * b).sum();
            drift += w * (first + 0.5 * der.trace_with(&a));
        }
        integral += drift * dt;
        let sq = dt.sqrt();
        states.par_chunks_mut(d).zip(rngs.par_iter_mut()).for_each(|(x, rng)| {
            let db: Vec<f64> = (0..m)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(rng);
                    z * sq
                })
                .collect();
            for j in 0..d {
                x[j] += beta[j] * dt + (0..m).map(|l| theta[j][l] * db[l]).sum::<f64>();
            }
        });
    }
    let end = u.value(s, &measure(&states)?)?;
    let increment = end - start;
    Ok(ItoReport { increment, integral, residual: (increment - integral).abs() })
}
