//! Euler-Maruyama simulation of the interacting particle system and Monte
//! Carlo rewards.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::coeffs::{CoefficientSet, LawView};
use super::policy::Policy;
use crate::measures::{mean_and_stderr, EmpiricalMeasure, Estimate};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimParams {
    pub particles: usize,
    pub steps: usize,
    /// Intensity of the extra independent `d`-dimensional noise.
    pub eps: f64,
    pub seed: u64,
}

impl SimParams {
    pub fn new(particles: usize, steps: usize, eps: f64, seed: u64) -> Self {
        Self { particles, steps, eps, seed }
    }

    pub fn validate(&self) -> Result<()> {
        if self.particles == 0 || self.steps == 0 {
            return Err(Error::InvalidParameter("particles and steps must be positive".into()));
        }
        if !(self.eps >= 0.0) {
            return Err(Error::InvalidParameter(format!("eps {} must be non-negative", self.eps)));
        }
        Ok(())
    }
}

/// Simulated ensemble on a time grid.
#[derive(Clone, Debug, PartialEq)]
pub struct EnsemblePath {
    pub times: Vec<f64>,
    pub dim: usize,
    pub particles: usize,
    /// `(times.len()) x particles x dim`, row-major.
    pub states: Vec<f64>,
    /// Control index used by each particle on each step, `steps x particles`.
    pub controls: Vec<u32>,
    pub eps: f64,
    pub seed: u64,
}

impl EnsemblePath {
    pub fn steps(&self) -> usize {
        self.times.len() - 1
    }

    pub fn slice(&self, k: usize) -> &[f64] {
        let w = self.particles * self.dim;
        &self.states[k * w..(k + 1) * w]
    }

    pub fn state(&self, k: usize, i: usize) -> &[f64] {
        let s = self.slice(k);
        &s[i * self.dim..(i + 1) * self.dim]
    }

    pub fn law(&self, k: usize) -> LawView<'_> {
        LawView::new(self.dim, self.slice(k), None)
    }

    /// Empirical measure of the ensemble at grid index `k`.
    pub fn measure(&self, k: usize) -> EmpiricalMeasure {
        EmpiricalMeasure::from_flat(self.dim, self.slice(k).to_vec(), None).expect("ensemble is non-empty")
    }

    /// Per-coordinate sample variance of the ensemble at grid index `k`.
    pub fn variance(&self, k: usize) -> Vec<f64> {
        let law = self.law(k);
        let mean = law.mean().to_vec();
        let n = self.particles as f64;
        (0..self.dim)
            .map(|j| (0..self.particles).map(|i| (self.state(k, i)[j] - mean[j]).powi(2)).sum::<f64>() / n)
            .collect()
    }
}

/// Systematic sampling: particle `k` sits on the atom selected by the
/// quantile level `(k + 1/2) / n`.
pub fn initial_states(mu0: &EmpiricalMeasure, particles: usize) -> Vec<f64> {
    let cum = mu0.cumulative_weights();
    let mut out = Vec::with_capacity(particles * mu0.dim());
    for k in 0..particles {
        let u = (k as f64 + 0.5) / particles as f64;
        out.extend_from_slice(mu0.point(mu0.atom_for_uniform(&cum, u)));
    }
    out
}

/// One independent random stream per particle.
pub(crate) fn particle_rngs(seed: u64, particles: usize) -> Vec<ChaCha8Rng> {
    (0..particles as u64)
        .map(|i| {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            r.set_stream(i);
            r
        })
        .collect()
}

pub(crate) fn time_grid(t: f64, end: f64, steps: usize) -> Vec<f64> {
    (0..=steps).map(|k| if k == steps { end } else { t + (end - t) * k as f64 / steps as f64 }).collect()
}

fn check_horizon(coeffs: &CoefficientSet, t: f64, end: f64) -> Result<()> {
    if !(t >= 0.0 && t <= end && end <= coeffs.horizon) {
        return Err(Error::InvalidHorizon { start: t, end });
    }
    Ok(())
}

/// Particle system advanced in lock-step.
pub(crate) struct Ensemble<'c> {
    coeffs: &'c CoefficientSet,
    pub states: Vec<f64>,
    rngs: Vec<ChaCha8Rng>,
    prev: Vec<f64>,
}

impl<'c> Ensemble<'c> {
    pub fn new(coeffs: &'c CoefficientSet, states: Vec<f64>, seed: u64) -> Self {
        let n = states.len() / coeffs.d;
        Self { coeffs, prev: states.clone(), states, rngs: particle_rngs(seed, n) }
    }

    /// Advances by `dt` from time `t`, adding `f dt` to `running` and
    /// recording the control indices. Every particle always consumes `m`
    /// then `d` normal draws so that streams stay aligned across `eps`.
    pub fn step(&mut self, policy: &Policy, t: f64, dt: f64, eps: f64, controls: &mut [u32], running: &mut [f64]) {
        let c = self.coeffs;
        let (d, m) = (c.d, c.m);
        self.prev.copy_from_slice(&self.states);
        let law = LawView::new(d, &self.prev, None);
        let prev = &self.prev;
        let sq = dt.sqrt();
        self.states
            .par_chunks_mut(d)
            .zip(self.rngs.par_iter_mut())
            .zip(controls.par_iter_mut())
            .zip(running.par_iter_mut())
            .enumerate()
            .for_each_init(
                || (vec![0.0; d], vec![0.0; d * m], vec![0.0; m]),
                |(b, s, db), (i, (((x, rng), ctl), run))| {
                    let x0 = &prev[i * d..(i + 1) * d];
                    let ai = policy.action(t, x0, law.mean());
                    *ctl = ai as u32;
                    let a = &c.controls[ai];
                    *run += (c.f)(t, x0, &law, a) * dt;
                    (c.b)(t, x0, &law, a, b);
                    (c.sigma)(t, x0, a, s);
                    for v in db.iter_mut() {
                        let z: f64 = StandardNormal.sample(rng);
                        *v = z * sq;
                    }
                    for j in 0..d {
                        let z: f64 = StandardNormal.sample(rng);
                        let diff: f64 = (0..m).map(|k| s[j * m + k] * db[k]).sum();
                        x[j] = x0[j] + b[j] * dt + diff + eps * sq * z;
                    }
                },
            );
    }

    pub fn is_finite(&self) -> bool {
        self.states.iter().all(|v| v.is_finite())
    }

    /// Adds `g(X_i, μ̂)` to `totals`.
    pub fn add_terminal(&self, totals: &mut [f64]) {
        let d = self.coeffs.d;
        let law = LawView::new(d, &self.states, None);
        let g = &self.coeffs.g;
        totals
            .par_iter_mut()
            .enumerate()
            .for_each(|(i, v)| *v += g(&self.states[i * d..(i + 1) * d], &law));
    }
}

/// Simulates the ensemble from `(t, μ0)` up to the horizon, storing the
/// full path.
pub fn simulate(coeffs: &CoefficientSet, policy: &Policy, t: f64, mu0: &EmpiricalMeasure, params: &SimParams) -> Result<EnsemblePath> {
    simulate_until(coeffs, policy, t, coeffs.horizon, mu0, params)
}

/// Like [`simulate`] but stopping at `end`.
pub fn simulate_until(
    coeffs: &CoefficientSet,
    policy: &Policy,
    t: f64,
    end: f64,
    mu0: &EmpiricalMeasure,
    params: &SimParams,
) -> Result<EnsemblePath> {
    prepare(coeffs, policy, t, end, mu0, params)?;
    let n = params.particles;
    let times = time_grid(t, end, params.steps);
    let mut ens = Ensemble::new(coeffs, initial_states(mu0, n), params.seed);
    let mut states = Vec::with_capacity((params.steps + 1) * n * coeffs.d);
    states.extend_from_slice(&ens.states);
    let mut controls = vec![0u32; params.steps * n];
    let mut running = vec![0.0; n];
    for k in 0..params.steps {
        ens.step(policy, times[k], times[k + 1] - times[k], params.eps, &mut controls[k * n..(k + 1) * n], &mut running);
        if !ens.is_finite() {
            return Err(Error::NonFiniteState { step: k + 1 });
        }
        states.extend_from_slice(&ens.states);
    }
    Ok(EnsemblePath { times, dim: coeffs.d, particles: n, states, controls, eps: params.eps, seed: params.seed })
}

fn prepare(coeffs: &CoefficientSet, policy: &Policy, t: f64, end: f64, mu0: &EmpiricalMeasure, params: &SimParams) -> Result<()> {
    coeffs.validate()?;
    params.validate()?;
    policy.validate(coeffs.controls.len())?;
    check_horizon(coeffs, t, end)?;
    if mu0.dim() != coeffs.d {
        return Err(Error::DimensionMismatch { expected: coeffs.d, found: mu0.dim() });
    }
    Ok(())
}

/// Monte Carlo reward of a stored path: left-endpoint rule for the running
/// reward plus the terminal reward at the last grid time, averaged over
/// particles.
pub fn reward(coeffs: &CoefficientSet, path: &EnsemblePath) -> Estimate {
    let n = path.particles;
    let mut totals = vec![0.0; n];
    for k in 0..path.steps() {
        let dt = path.times[k + 1] - path.times[k];
        let law = path.law(k);
        for (i, tot) in totals.iter_mut().enumerate() {
            let a = &coeffs.controls[path.controls[k * n + i] as usize];
            *tot += (coeffs.f)(path.times[k], path.state(k, i), &law, a) * dt;
        }
    }
    let last = path.steps();
    let law = path.law(last);
    for (i, tot) in totals.iter_mut().enumerate() {
        *tot += (coeffs.g)(path.state(last, i), &law);
    }
    mean_and_stderr(&totals)
}

/// Outcome of a simulation that keeps only per-particle quantities.
#[derive(Clone, Debug, PartialEq)]
pub struct Segment {
    /// Accumulated running reward of each particle.
    pub running: Vec<f64>,
    /// Final states, flat.
    pub states: Vec<f64>,
}

/// Simulates from `init` (flat states) on `[t, end]` without storing the path.
pub fn run_segment(
    coeffs: &CoefficientSet,
    policy: &Policy,
    t: f64,
    end: f64,
    init: Vec<f64>,
    params: &SimParams,
) -> Result<Segment> {
    let n = init.len() / coeffs.d;
    let times = time_grid(t, end, params.steps);
    let mut ens = Ensemble::new(coeffs, init, params.seed);
    let mut controls = vec![0u32; n];
    let mut running = vec![0.0; n];
    if end > t {
        for k in 0..params.steps {
            ens.step(policy, times[k], times[k + 1] - times[k], params.eps, &mut controls, &mut running);
            if !ens.is_finite() {
                return Err(Error::NonFiniteState { step: k + 1 });
            }
        }
    }
    Ok(Segment { running, states: ens.states })
}

/// Per-particle total rewards (running plus terminal) from `(t, μ0)`.
pub fn particle_rewards(coeffs: &CoefficientSet, policy: &Policy, t: f64, mu0: &EmpiricalMeasure, params: &SimParams) -> Result<Vec<f64>> {
    prepare(coeffs, policy, t, coeffs.horizon, mu0, params)?;
    particle_rewards_from(coeffs, policy, t, initial_states(mu0, params.particles), params)
}

pub(crate) fn particle_rewards_from(coeffs: &CoefficientSet, policy: &Policy, t: f64, init: Vec<f64>, params: &SimParams) -> Result<Vec<f64>> {
    let seg = run_segment(coeffs, policy, t, coeffs.horizon, init, params)?;
    let ens = Ensemble::new(coeffs, seg.states, params.seed);
    let mut totals = seg.running;
    ens.add_terminal(&mut totals);
    Ok(totals)
}

/// Streaming version of `reward(simulate(...))`.
pub fn estimate_reward(coeffs: &CoefficientSet, policy: &Policy, t: f64, mu0: &EmpiricalMeasure, params: &SimParams) -> Result<Estimate> {
    Ok(mean_and_stderr(&particle_rewards(coeffs, policy, t, mu0, params)?))
}

/// Rewards of an `eps`-ensemble and a noiseless-extra ensemble driven by the
/// same Brownian increments, with the pathwise gap between them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoupledRun {
    pub reward_eps: Estimate,
    pub reward_zero: Estimate,
    /// `sqrt(mean_i sup_k |X^ε_i(t_k) - X^0_i(t_k)|^2)`.
    pub sup_gap_rms: f64,
    /// `max_i sup_k |X^ε_i(t_k) - X^0_i(t_k)|`.
    pub sup_gap_max: f64,
}

pub fn coupled_run(coeffs: &CoefficientSet, policy: &Policy, t: f64, mu0: &EmpiricalMeasure, params: &SimParams) -> Result<CoupledRun> {
    prepare(coeffs, policy, t, coeffs.horizon, mu0, params)?;
    let n = params.particles;
    let d = coeffs.d;
    let times = time_grid(t, coeffs.horizon, params.steps);
    let init = initial_states(mu0, n);
    let mut a = Ensemble::new(coeffs, init.clone(), params.seed);
    let mut b = Ensemble::new(coeffs, init, params.seed);
    let (mut ca, mut cb) = (vec![0u32; n], vec![0u32; n]);
    let (mut ra, mut rb) = (vec![0.0; n], vec![0.0; n]);
    let mut sup = vec![0.0f64; n];
    for k in 0..params.steps {
        let dt = times[k + 1] - times[k];
        a.step(policy, times[k], dt, params.eps, &mut ca, &mut ra);
        b.step(policy, times[k], dt, 0.0, &mut cb, &mut rb);
        if !a.is_finite() || !b.is_finite() {
            return Err(Error::NonFiniteState { step: k + 1 });
        }
        for (i, s) in sup.iter_mut().enumerate() {
            let g: f64 = (0..d).map(|j| (a.states[i * d + j] - b.states[i * d + j]).powi(2)).sum();
            *s = s.max(g.sqrt());
        }
    }
    a.add_terminal(&mut ra);
    b.add_terminal(&mut rb);
    Ok(CoupledRun {
        reward_eps: mean_and_stderr(&ra),
        reward_zero: mean_and_stderr(&rb),
        sup_gap_rms: (sup.iter().map(|s| s * s).sum::<f64>() / n as f64).sqrt(),
        sup_gap_max: sup.iter().cloned().fold(0.0, f64::max),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mfc::coeffs::registry;
    use std::collections::BTreeMap;
    use std::sync::Arc;

    fn frozen() -> CoefficientSet {
        let mut c = registry("heat-cos", &BTreeMap::new()).unwrap();
        c.sigma = Arc::new(|_, _, _, out| out[0] = 0.0);
        c
    }

    #[test]
    fn frozen_dynamics_keep_paths_constant() {
        let c = frozen();
        let mu = EmpiricalMeasure::from_points(&[vec![-1.0], vec![2.0]], None).unwrap();
        let p = simulate(&c, &Policy::Constant(0), 0.0, &mu, &SimParams::new(10, 5, 0.0, 1)).unwrap();
        for k in 0..=5 {
            assert_eq!(p.slice(k), p.slice(0));
        }
    }

    #[test]
    fn brownian_variance() {
        let c = registry("heat-cos", &BTreeMap::new()).unwrap();
        let p = simulate(&c, &Policy::Constant(0), 0.0, &EmpiricalMeasure::dirac(&[0.0]), &SimParams::new(10_000, 50, 0.0, 7)).unwrap();
        let v = p.variance(50)[0];
        assert!((0.9..=1.1).contains(&v), "{v}");
    }

    #[test]
    fn deterministic_given_seed() {
        let c = registry("tanh-interact", &BTreeMap::new()).unwrap();
        let mu = EmpiricalMeasure::from_points(&[vec![-0.5], vec![0.5]], None).unwrap();
        let prm = SimParams::new(100, 20, 0.1, 3);
        let a = simulate(&c, &Policy::Constant(0), 0.0, &mu, &prm).unwrap();
        let b = simulate(&c, &Policy::Constant(0), 0.0, &mu, &prm).unwrap();
        assert_eq!(a, b);
        assert_eq!(reward(&c, &a), estimate_reward(&c, &Policy::Constant(0), 0.0, &mu, &prm).unwrap());
    }

    #[test]
    fn rejects_start_after_horizon() {
        let c = registry("heat-cos", &BTreeMap::new()).unwrap();
        let r = simulate(&c, &Policy::Constant(0), 2.0, &EmpiricalMeasure::dirac(&[0.0]), &SimParams::new(1, 1, 0.0, 0));
        assert!(matches!(r, Err(Error::InvalidHorizon { .. })));
    }

    #[test]
    fn constant_terminal_and_unit_running_reward() {
        let mut c = frozen();
        c.g = Arc::new(|_, _| 0.7);
        let mu = EmpiricalMeasure::dirac(&[0.0]);
        let est = estimate_reward(&c, &Policy::Constant(0), 0.0, &mu, &SimParams::new(3, 4, 0.0, 0)).unwrap();
        assert!((est.value - 0.7).abs() < 1e-15);
        c.g = Arc::new(|_, _| 0.0);
        c.f = Arc::new(|_, _, _, _| 1.0);
        let steps = 10;
        let est = estimate_reward(&c, &Policy::Constant(0), 0.5, &mu, &SimParams::new(3, steps, 0.0, 0)).unwrap();
        assert!((est.value - 0.5).abs() <= 0.5 / steps as f64);
    }

    #[test]
    fn non_finite_state_is_reported() {
        let mut c = frozen();
        c.b = Arc::new(|_, _, _, _, out| out[0] = f64::INFINITY);
        let r = simulate(&c, &Policy::Constant(0), 0.0, &EmpiricalMeasure::dirac(&[0.0]), &SimParams::new(2, 3, 0.0, 0));
        assert!(matches!(r, Err(Error::NonFiniteState { step: 1 })));
    }
}
