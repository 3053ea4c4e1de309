//! Smooth `n`-player approximations of the coefficients by convolution with
//! compactly supported bumps at scale `1/m`.

use serde::{Deserialize, Serialize};

use super::coeffs::{CoefficientSet, LawView};
use crate::numerics::{bump, gauss_legendre};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MollifyConfig {
    /// Gauss-Legendre nodes per axis.
    pub nodes: usize,
    /// Largest admissible `n d + 1`.
    pub dim_cap: usize,
}

impl Default for MollifyConfig {
    fn default() -> Self {
        Self { nodes: 8, dim_cap: 4 }
    }
}

/// Mollified coefficients `b^i_{n,m}`, `f^i_{n,m}`, `g^i_{n,m}`.
///
/// The space mollifier is `Φ(y) ∝ exp(-1/(1-|y|^2))` on the unit ball of
/// `R^d`, the time mollifier is the same bump on `[-1, 1]`; both are
/// normalised by the quadrature used to integrate against them, so every
/// mollified value is a convex combination of coefficient values.
#[derive(Clone, Debug)]
pub struct Mollified {
    pub coeffs: CoefficientSet,
    pub n: usize,
    pub m: usize,
    pub config: MollifyConfig,
    /// Joint space nodes: offsets `y` (flat, `n d` entries) and weights.
    space: Vec<(Vec<f64>, f64)>,
    /// Time nodes `s` (already scaled by `1/m`) and weights.
    time: Vec<(f64, f64)>,
}

fn block_rule(d: usize, nodes: &[f64], weights: &[f64]) -> Vec<(Vec<f64>, f64)> {
    let q = nodes.len();
    let mut out = Vec::new();
    for flat in 0..q.pow(d as u32) {
        let mut idx = flat;
        let mut u = Vec::with_capacity(d);
        let mut w = 1.0;
        for _ in 0..d {
            let k = idx % q;
            idx /= q;
            u.push(nodes[k]);
            w *= weights[k];
        }
        let r = u.iter().map(|v| v * v).sum::<f64>().sqrt();
        let phi = bump(r);
        if phi > 0.0 {
            out.push((u, w * phi));
        }
    }
    let total: f64 = out.iter().map(|(_, w)| w).sum();
    out.iter_mut().for_each(|(_, w)| *w /= total);
    out
}

pub fn mollify(coeffs: &CoefficientSet, n: usize, m: usize, config: MollifyConfig) -> Result<Mollified> {
    coeffs.validate()?;
    if n == 0 || m == 0 {
        return Err(Error::InvalidParameter("n and m must be positive".into()));
    }
    if config.nodes == 0 {
        return Err(Error::InvalidParameter("quadrature needs at least one node".into()));
    }
    let dims = n * coeffs.d + 1;
    if dims > config.dim_cap {
        return Err(Error::QuadratureBudgetExceeded { dims, cap: config.dim_cap });
    }
    let (nodes, weights) = gauss_legendre(config.nodes);
    let scale = 1.0 / m as f64;
    let block = block_rule(coeffs.d, &nodes, &weights);
    let mut space: Vec<(Vec<f64>, f64)> = vec![(Vec::new(), 1.0)];
    for _ in 0..n {
        let mut next = Vec::with_capacity(space.len() * block.len());
        for (y, w) in &space {
            for (u, wu) in &block {
                let mut z = y.clone();
                z.extend(u.iter().map(|v| v * scale));
                next.push((z, w * wu));
            }
        }
        space = next;
    }
    let time = block_rule(1, &nodes, &weights).into_iter().map(|(u, w)| (u[0] * scale, w)).collect();
    Ok(Mollified { coeffs: coeffs.clone(), n, m, config, space, time })
}

impl Mollified {
    fn check(&self, i: usize, xbar: &[f64]) {
        assert!(i < self.n, "player index {i} out of range");
        assert_eq!(xbar.len(), self.n * self.coeffs.d, "state has wrong length");
    }

    /// Time argument `T ∧ (t - s)^+`.
    fn shifted_time(&self, t: f64, s: f64) -> f64 {
        (t - s).max(0.0).min(self.coeffs.horizon)
    }

    fn times(&self, t: f64) -> Vec<(f64, f64)> {
        if self.coeffs.time_homogeneous {
            vec![(t, 1.0)]
        } else {
            self.time.iter().map(|&(s, w)| (self.shifted_time(t, s), w)).collect()
        }
    }

    /// Integrates `h(time, i, z, law)` over the mollifiers for every player,
    /// with `z = x̄ - y` the shifted state.
    fn integrate(&self, t: f64, xbar: &[f64], width: usize, mut h: impl FnMut(f64, usize, &[f64], &LawView, &mut [f64])) -> Vec<f64> {
        let d = self.coeffs.d;
        let mut out = vec![0.0; self.n * width];
        let mut z = vec![0.0; xbar.len()];
        let mut buf = vec![0.0; width];
        for (s, ws) in self.times(t) {
            for (y, wy) in &self.space {
                for (k, zk) in z.iter_mut().enumerate() {
                    *zk = xbar[k] - y[k];
                }
                let law = LawView::new(d, &z, None);
                for i in 0..self.n {
                    h(s, i, &z[i * d..(i + 1) * d], &law, &mut buf);
                    for (o, v) in out[i * width..(i + 1) * width].iter_mut().zip(&buf) {
                        *o += ws * wy * v;
                    }
                }
            }
        }
        out
    }

    /// `b^i_{n,m}(t, x̄, a)` for all players at once, flat `n d`.
    pub fn b_all(&self, t: f64, xbar: &[f64], a: &[f64]) -> Vec<f64> {
        self.check(0, xbar);
        let c = &self.coeffs;
        self.integrate(t, xbar, c.d, |s, _, x, law, out| (c.b)(s, x, law, a, out))
    }

    /// `f^i_{n,m}(t, x̄, a)` for all players.
    pub fn f_all(&self, t: f64, xbar: &[f64], a: &[f64]) -> Vec<f64> {
        self.check(0, xbar);
        let c = &self.coeffs;
        self.integrate(t, xbar, 1, |s, _, x, law, out| out[0] = (c.f)(s, x, law, a))
    }

    /// `g^i_{n,m}(x̄)` for all players.
    pub fn g_all(&self, xbar: &[f64]) -> Vec<f64> {
        self.check(0, xbar);
        let c = &self.coeffs;
        let d = c.d;
        let mut out = vec![0.0; self.n];
        let mut z = vec![0.0; xbar.len()];
        for (y, wy) in &self.space {
            for (k, zk) in z.iter_mut().enumerate() {
                *zk = xbar[k] - y[k];
            }
            let law = LawView::new(d, &z, None);
            for (i, o) in out.iter_mut().enumerate() {
                *o += wy * (c.g)(&z[i * d..(i + 1) * d], &law);
            }
        }
        out
    }

    pub fn b(&self, i: usize, t: f64, xbar: &[f64], a: &[f64]) -> Vec<f64> {
        self.check(i, xbar);
        let d = self.coeffs.d;
        self.b_all(t, xbar, a)[i * d..(i + 1) * d].to_vec()
    }

    pub fn f(&self, i: usize, t: f64, xbar: &[f64], a: &[f64]) -> f64 {
        self.check(i, xbar);
        self.f_all(t, xbar, a)[i]
    }

    pub fn g(&self, i: usize, xbar: &[f64]) -> f64 {
        self.check(i, xbar);
        self.g_all(xbar)[i]
    }

    /// `(1/n) Σ_i g^i_{n,m}(x̄)`.
    pub fn terminal(&self, xbar: &[f64]) -> f64 {
        self.g_all(xbar).iter().sum::<f64>() / self.n as f64
    }

    /// Unmollified `g(x_i, (1/n) Σ_j δ_{x_j})`.
    pub fn g_plain(&self, i: usize, xbar: &[f64]) -> f64 {
        self.check(i, xbar);
        let d = self.coeffs.d;
        (self.coeffs.g)(&xbar[i * d..(i + 1) * d], &LawView::new(d, xbar, None))
    }

    /// Unmollified `b(t, x_i, (1/n) Σ_j δ_{x_j}, a)`.
    pub fn b_plain(&self, i: usize, t: f64, xbar: &[f64], a: &[f64]) -> Vec<f64> {
        self.check(i, xbar);
        let d = self.coeffs.d;
        self.coeffs.drift(t, &xbar[i * d..(i + 1) * d], &LawView::new(d, xbar, None), a)
    }

    /// `K ∫ (|y_i| + (1/n) Σ_j |y_j|) Π_j Φ_m(y_j) dy` by the same quadrature.
    pub fn space_error_bound(&self, i: usize) -> f64 {
        let d = self.coeffs.d;
        let norm = |y: &[f64]| y.iter().map(|v| v * v).sum::<f64>().sqrt();
        let s: f64 = self
            .space
            .iter()
            .map(|(y, w)| {
                let own = norm(&y[i * d..(i + 1) * d]);
                let avg = (0..self.n).map(|j| norm(&y[j * d..(j + 1) * d])).sum::<f64>() / self.n as f64;
                w * (own + avg)
            })
            .sum();
        self.coeffs.k * s
    }

    /// `K ∫ |t - T ∧ (t - s)^+|^β ζ_m(s) ds`; zero for time-homogeneous sets.
    pub fn time_error_bound(&self, t: f64) -> f64 {
        if self.coeffs.time_homogeneous {
            return 0.0;
        }
        let s: f64 = self.time.iter().map(|&(s, w)| w * (t - self.shifted_time(t, s)).abs().powf(self.coeffs.beta)).sum();
        self.coeffs.k * s
    }

    /// `K (|x_i - z_i| + (1/n) Σ_j |x_j - z_j|)`.
    pub fn lipschitz_bound(&self, i: usize, xbar: &[f64], zbar: &[f64]) -> f64 {
        let d = self.coeffs.d;
        let dist = |j: usize| (0..d).map(|k| (xbar[j * d + k] - zbar[j * d + k]).powi(2)).sum::<f64>().sqrt();
        self.coeffs.k * (dist(i) + (0..self.n).map(dist).sum::<f64>() / self.n as f64)
    }

    pub fn quadrature_size(&self) -> usize {
        self.space.len() * if self.coeffs.time_homogeneous { 1 } else { self.time.len() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mfc::coeffs::registry;
    use std::collections::BTreeMap;
    use std::sync::Arc;

    #[test]
    fn constants_are_preserved() {
        let mut c = registry("heat-cos", &BTreeMap::new()).unwrap();
        c.b = Arc::new(|_, _, _, _, out| out[0] = 0.25);
        c.time_homogeneous = false;
        let mo = mollify(&c, 2, 3, MollifyConfig::default()).unwrap();
        let b = mo.b(1, 0.5, &[0.3, -1.0], &[0.0]);
        assert!((b[0] - 0.25).abs() < 1e-14);
    }

    #[test]
    fn dimension_cap() {
        let c = registry("heat-cos", &BTreeMap::new()).unwrap();
        assert!(matches!(mollify(&c, 4, 2, MollifyConfig::default()), Err(Error::QuadratureBudgetExceeded { dims: 5, cap: 4 })));
    }

    #[test]
    fn error_bound_halves_with_m() {
        let c = registry("tanh-interact", &BTreeMap::new()).unwrap();
        let a = mollify(&c, 2, 4, MollifyConfig::default()).unwrap().space_error_bound(0);
        let b = mollify(&c, 2, 8, MollifyConfig::default()).unwrap().space_error_bound(0);
        assert!((a / b - 2.0).abs() < 1e-12);
    }

    #[test]
    fn mollified_cos_is_damped_cos() {
        let c = registry("heat-cos", &BTreeMap::new()).unwrap();
        let mo = mollify(&c, 1, 4, MollifyConfig::default()).unwrap();
        let r0 = mo.g(0, &[0.0]);
        for x in [0.5, 1.0, 2.0] {
            assert!((mo.g(0, &[x]) - r0 * f64::cos(x)).abs() < 1e-14);
        }
        assert!(r0 < 1.0 && r0 > 0.99);
    }
}
