//! Coefficient sets of the controlled McKean-Vlasov dynamics and the
//! built-in registry.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::measures::{norm, EmpiricalMeasure};
use crate::transport::w2_exact;
use crate::{Error, Result};

/// Read-only view of a finitely supported law passed to the coefficients.
#[derive(Clone, Debug)]
pub struct LawView<'a> {
    dim: usize,
    points: &'a [f64],
    weights: Option<&'a [f64]>,
    mean: Vec<f64>,
}

impl<'a> LawView<'a> {
    /// `points` is flat with `dim` coordinates per atom; `None` weights
    /// means uniform weights.
    pub fn new(dim: usize, points: &'a [f64], weights: Option<&'a [f64]>) -> Self {
        let count = points.len() / dim.max(1);
        let mut mean = vec![0.0; dim];
        for k in 0..count {
            let w = weights.map_or(1.0 / count as f64, |w| w[k]);
            for (j, m) in mean.iter_mut().enumerate() {
                *m += w * points[k * dim + j];
            }
        }
        Self { dim, points, weights, mean }
    }

    pub fn from_measure(mu: &'a EmpiricalMeasure) -> Self {
        Self::new(mu.dim(), mu.flat_points(), Some(mu.weights()))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.points.len() / self.dim.max(1)
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, k: usize) -> &[f64] {
        &self.points[k * self.dim..(k + 1) * self.dim]
    }

    pub fn weight(&self, k: usize) -> f64 {
        self.weights.map_or(1.0 / self.len() as f64, |w| w[k])
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }
}

/// `b(t, x, μ, a, out)` writing a `d`-vector.
pub type DriftFn = Arc<dyn Fn(f64, &[f64], &LawView, &[f64], &mut [f64]) + Send + Sync>;
/// `σ(t, x, a, out)` writing a row-major `d x m` matrix.
pub type DiffusionFn = Arc<dyn Fn(f64, &[f64], &[f64], &mut [f64]) + Send + Sync>;
/// `f(t, x, μ, a)`.
pub type RunningFn = Arc<dyn Fn(f64, &[f64], &LawView, &[f64]) -> f64 + Send + Sync>;
/// `g(x, μ)`.
pub type TerminalFn = Arc<dyn Fn(&[f64], &LawView) -> f64 + Send + Sync>;

/// Data of a mean-field control problem on `[0, horizon]`.
#[derive(Clone)]
pub struct CoefficientSet {
    pub name: String,
    pub d: usize,
    pub m: usize,
    pub b: DriftFn,
    pub sigma: DiffusionFn,
    pub f: RunningFn,
    pub g: TerminalFn,
    /// Common bound and Lipschitz constant.
    pub k: f64,
    /// Hölder exponent in time.
    pub beta: f64,
    /// Finite control set; each control is a point of a Euclidean space.
    pub controls: Vec<Vec<f64>>,
    pub horizon: f64,
    /// Set when none of `b`, `σ`, `f` depends on time.
    pub time_homogeneous: bool,
}

impl fmt::Debug for CoefficientSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CoefficientSet")
            .field("name", &self.name)
            .field("d", &self.d)
            .field("m", &self.m)
            .field("k", &self.k)
            .field("beta", &self.beta)
            .field("controls", &self.controls)
            .field("horizon", &self.horizon)
            .finish()
    }
}

impl CoefficientSet {
    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.m == 0 {
            return Err(Error::InvalidParameter("dimensions must be positive".into()));
        }
        if self.controls.is_empty() {
            return Err(Error::InvalidParameter("control set is empty".into()));
        }
        if !(self.horizon > 0.0) {
            return Err(Error::InvalidParameter(format!("horizon {} must be positive", self.horizon)));
        }
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            return Err(Error::InvalidParameter(format!("beta {} outside (0, 1]", self.beta)));
        }
        Ok(())
    }

    pub fn drift(&self, t: f64, x: &[f64], law: &LawView, a: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.d];
        (self.b)(t, x, law, a, &mut out);
        out
    }

    pub fn diffusion(&self, t: f64, x: &[f64], a: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.d * self.m];
        (self.sigma)(t, x, a, &mut out);
        out
    }

    /// `σσ^T + ε^2 I` as a row-major `d x d` matrix.
    pub fn diffusion_matrix(&self, t: f64, x: &[f64], a: &[f64], eps: f64) -> Vec<f64> {
        let s = self.diffusion(t, x, a);
        let (d, m) = (self.d, self.m);
        let mut out = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..d {
                out[i * d + j] = (0..m).map(|k| s[i * m + k] * s[j * m + k]).sum();
            }
            out[i * d + i] += eps * eps;
        }
        out
    }

    /// Spot-checks boundedness and the Lipschitz conditions on random probes.
    pub fn check_assumptions(&self, probes: usize, seed: u64) -> Result<AssumptionReport> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = self.d;
        let random_law = |rng: &mut ChaCha8Rng| {
            let pts: Vec<Vec<f64>> = (0..3).map(|_| (0..d).map(|_| rng.random_range(-3.0..3.0)).collect()).collect();
            EmpiricalMeasure::from_points(&pts, None)
        };
        let mut max_bound = 0.0f64;
        let mut max_ratio = 0.0f64;
        for _ in 0..probes {
            let t = rng.random_range(0.0..=self.horizon);
            let a = &self.controls[rng.random_range(0..self.controls.len())];
            let x: Vec<f64> = (0..d).map(|_| rng.random_range(-4.0..4.0)).collect();
            let y: Vec<f64> = x.iter().map(|v| v + rng.random_range(-0.5..0.5)).collect();
            let mu = random_law(&mut rng)?;
            let nu = random_law(&mut rng)?;
            let (lm, ln) = (LawView::from_measure(&mu), LawView::from_measure(&nu));
            let bx = self.drift(t, &x, &lm, a);
            let sx = self.diffusion(t, &x, a);
            let fx = (self.f)(t, &x, &lm, a);
            let gx = (self.g)(&x, &lm);
            max_bound = max_bound.max(norm(&bx) + norm(&sx)).max(fx.abs() + gx.abs());
            let by = self.drift(t, &y, &ln, a);
            let sy = self.diffusion(t, &y, a);
            let fy = (self.f)(t, &y, &ln, a);
            let gy = (self.g)(&y, &ln);
            let dist = norm(&x.iter().zip(&y).map(|(p, q)| p - q).collect::<Vec<_>>()) + w2_exact(&mu, &nu)?.0;
            if dist > 0.0 {
                let db = norm(&bx.iter().zip(&by).map(|(p, q)| p - q).collect::<Vec<_>>());
                let ds = norm(&sx.iter().zip(&sy).map(|(p, q)| p - q).collect::<Vec<_>>());
                let dfg = (fx - fy).abs() + (gx - gy).abs();
                max_ratio = max_ratio.max((db + ds) / dist).max(dfg / dist);
            }
        }
        let tol = 1e-9;
        Ok(AssumptionReport {
            probes,
            max_bound,
            max_lipschitz_ratio: max_ratio,
            k: self.k,
            holds: max_bound <= self.k * (1.0 + tol) && max_ratio <= self.k * (1.0 + tol),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AssumptionReport {
    pub probes: usize,
    pub max_bound: f64,
    pub max_lipschitz_ratio: f64,
    pub k: f64,
    pub holds: bool,
}

/// Names accepted by [`registry`].
pub const REGISTRY_KEYS: [&str; 3] = ["heat-cos", "tanh-interact", "bangbang"];

fn param(overrides: &BTreeMap<String, f64>, key: &str, default: f64) -> f64 {
    overrides.get(key).copied().unwrap_or(default)
}

fn check_keys(overrides: &BTreeMap<String, f64>, allowed: &[&str]) -> Result<()> {
    match overrides.keys().find(|k| !allowed.contains(&k.as_str())) {
        Some(k) => Err(Error::InvalidParameter(format!("unknown coefficient parameter `{k}`"))),
        None => Ok(()),
    }
}

/// Built-in one-dimensional coefficient sets.
///
/// * `heat-cos`: `b = 0`, `σ = 1`, `f = 0`, `g = cos x`, one control.
/// * `tanh-interact`: `b = s tanh(mean(μ) - x)` with strength `s = 0.5`,
///   `σ = 1`, `f = 0`, `g = cos x`, one control.
/// * `bangbang`: `b = a` with `a ∈ {-1, 1}`, `σ = 0.2`, `f = 0`, `g = tanh x`.
///
/// Every set accepts `horizon`; `tanh-interact` also takes `strength`,
/// `bangbang` takes `sigma`.
pub fn registry(key: &str, overrides: &BTreeMap<String, f64>) -> Result<CoefficientSet> {
    let horizon = param(overrides, "horizon", 1.0);
    let zero_f: RunningFn = Arc::new(|_, _, _, _| 0.0);
    let set = match key {
        "heat-cos" => {
            check_keys(overrides, &["horizon"])?;
            CoefficientSet {
                name: key.into(),
                d: 1,
                m: 1,
                b: Arc::new(|_, _, _, _, out| out[0] = 0.0),
                sigma: Arc::new(|_, _, _, out| out[0] = 1.0),
                f: zero_f,
                g: Arc::new(|x, _| x[0].cos()),
                k: 1.0,
                beta: 1.0,
                controls: vec![vec![0.0]],
                horizon,
                time_homogeneous: true,
            }
        }
        "tanh-interact" => {
            check_keys(overrides, &["horizon", "strength"])?;
            let s = param(overrides, "strength", 0.5);
            CoefficientSet {
                name: key.into(),
                d: 1,
                m: 1,
                b: Arc::new(move |_, x, law, _, out| out[0] = s * (law.mean()[0] - x[0]).tanh()),
                sigma: Arc::new(|_, _, _, out| out[0] = 1.0),
                f: zero_f,
                g: Arc::new(|x, _| x[0].cos()),
                k: (s.abs() + 1.0).max(1.0),
                beta: 1.0,
                controls: vec![vec![0.0]],
                horizon,
                time_homogeneous: true,
            }
        }
        "bangbang" => {
            check_keys(overrides, &["horizon", "sigma"])?;
            let sig = param(overrides, "sigma", 0.2);
            CoefficientSet {
                name: key.into(),
                d: 1,
                m: 1,
                b: Arc::new(|_, _, _, a, out| out[0] = a[0].clamp(-1.0, 1.0)),
                sigma: Arc::new(move |_, _, _, out| out[0] = sig),
                f: zero_f,
                g: Arc::new(|x, _| x[0].tanh()),
                k: 1.0 + sig.abs(),
                beta: 1.0,
                controls: vec![vec![-1.0], vec![1.0]],
                horizon,
                time_homogeneous: true,
            }
        }
        other => return Err(Error::InvalidParameter(format!("unknown coefficient set `{other}`"))),
    };
    set.validate()?;
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn registry_sets_satisfy_assumptions() {
        for key in REGISTRY_KEYS {
            let c = registry(key, &BTreeMap::new()).unwrap();
            let r = c.check_assumptions(500, 3).unwrap();
            assert!(r.holds, "{key}: {r:?}");
        }
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(registry("nope", &BTreeMap::new()).is_err());
        let mut o = BTreeMap::new();
        o.insert("strength".to_string(), 1.0);
        assert!(registry("heat-cos", &o).is_err());
    }

    #[test]
    fn law_view_mean() {
        let pts = [1.0, 2.0, 3.0, 4.0];
        let v = LawView::new(2, &pts, None);
        assert_eq!(v.mean(), &[2.0, 3.0]);
        assert_eq!(v.len(), 2);
    }
}
