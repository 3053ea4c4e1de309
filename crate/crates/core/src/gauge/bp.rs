//! Borwein-Preiss smooth variational principle on a finite candidate set,
//! with the gauge at bandwidth `1/δ` as the perturbation kernel.

use serde::{Deserialize, Serialize};

use super::{dt_rho2, measure_derivatives, rho2, GaugePoint, GaugeSpec, MeasureDerivative};
use crate::{Error, Result};

/// Finite set of distinct points on which `G` is known.
#[derive(Clone, Debug, PartialEq)]
pub struct CandidateSet {
    pub points: Vec<GaugePoint>,
}

impl CandidateSet {
    pub fn new(points: Vec<GaugePoint>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyInput);
        }
        let d = points[0].mu.dim();
        if let Some(p) = points.iter().find(|p| p.mu.dim() != d) {
            return Err(Error::DimensionMismatch { expected: d, found: p.mu.dim() });
        }
        Ok(Self { points })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// `φ_δ = Σ_k w_k ρ_{2,1/δ}(·, p_k)` with anchors given as candidate indices.
#[derive(Clone, Debug, PartialEq)]
pub struct Perturbation {
    pub anchors: Vec<(usize, f64)>,
    pub spec: GaugeSpec,
}

impl Perturbation {
    pub fn value(&self, cands: &CandidateSet, x: &GaugePoint) -> Result<f64> {
        let mut s = 0.0;
        for &(k, w) in &self.anchors {
            s += w * rho2(x, &cands.points[k], &self.spec)?.value;
        }
        Ok(s)
    }

    pub fn dt(&self, cands: &CandidateSet, x: &GaugePoint) -> f64 {
        self.anchors.iter().map(|&(k, w)| w * dt_rho2(x, &cands.points[k])).sum()
    }

    /// Measure derivatives of the perturbation at each of `points`.
    pub fn measure_derivatives(&self, cands: &CandidateSet, x: &GaugePoint, points: &[Vec<f64>]) -> Result<Vec<MeasureDerivative>> {
        let d = x.mu.dim();
        let mut out = vec![MeasureDerivative::zero(d); points.len()];
        for &(k, w) in &self.anchors {
            let part = measure_derivatives(x, &cands.points[k], &self.spec, points)?;
            for (o, mut p) in out.iter_mut().zip(part) {
                p.scale(w);
                for (a, b) in o.grad.iter_mut().zip(&p.grad) {
                    *a += b;
                }
                for (ra, rb) in o.hess.iter_mut().zip(&p.hess) {
                    for (a, b) in ra.iter_mut().zip(rb) {
                        *a += b;
                    }
                }
            }
        }
        Ok(out)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BpResult {
    pub tilde: usize,
    /// Iterates `p_0, ..., p_K` with `p_K` the maximiser.
    pub sequence: Vec<usize>,
    pub perturbation: Perturbation,
}

/// Outcome of the exhaustive check of items (i) to (iii).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BpVerification {
    pub item_i: bool,
    pub item_ii: bool,
    pub item_iii: bool,
}

impl BpVerification {
    pub fn all(&self) -> bool {
        self.item_i && self.item_ii && self.item_iii
    }
}

struct GaugeCache<'a> {
    cands: &'a CandidateSet,
    spec: GaugeSpec,
    table: Vec<Option<f64>>,
}

impl<'a> GaugeCache<'a> {
    fn new(cands: &'a CandidateSet, spec: GaugeSpec) -> Self {
        let n = cands.len();
        Self { cands, spec, table: vec![None; n * n] }
    }

    fn get(&mut self, i: usize, j: usize) -> Result<f64> {
        let n = self.cands.len();
        if let Some(v) = self.table[i * n + j] {
            return Ok(v);
        }
        let v = rho2(&self.cands.points[i], &self.cands.points[j], &self.spec)?.value;
        self.table[i * n + j] = Some(v);
        Ok(v)
    }
}

fn bp_spec(base: &GaugeSpec, delta: f64) -> Result<GaugeSpec> {
    if !(delta > 0.0) {
        return Err(Error::InvalidParameter(format!("delta {delta} must be positive")));
    }
    Ok(GaugeSpec { bandwidth: 1.0 / delta, ..*base })
}

/// Runs the iteration `p_{k+1} = argmax_x G(x) - δ^2 Σ_{j<=k} 2^{-j} ρ(x, p_j)`
/// from `p_0 = start` until the maximiser repeats. Ties keep the current
/// iterate when it is among the maximisers and otherwise go to the lowest
/// index. The returned perturbation gives weight `2^{-k}` to `p_k` for
/// `k < K` and the remaining mass `2^{1-K}` to the final point.
pub fn borwein_preiss(cands: &CandidateSet, g: &[f64], lambda: f64, delta: f64, start: usize, base: &GaugeSpec) -> Result<BpResult> {
    let n = cands.len();
    if g.len() != n {
        return Err(Error::DimensionMismatch { expected: n, found: g.len() });
    }
    if start >= n {
        return Err(Error::InvalidParameter(format!("start index {start} out of range")));
    }
    if !(lambda > 0.0) {
        return Err(Error::InvalidParameter(format!("lambda {lambda} must be positive")));
    }
    let sup = g.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if sup - lambda > g[start] {
        return Err(Error::PreconditionViolated(format!("sup G - lambda = {} exceeds G(start) = {}", sup - lambda, g[start])));
    }
    let spec = bp_spec(base, delta)?;
    let mut cache = GaugeCache::new(cands, spec);
    let d2 = delta * delta;
    let mut sequence = vec![start];
    let mut penalty = vec![0.0; n];
    let cap = 10 * n;
    for k in 0..cap {
        let current = sequence[k];
        let wk = 2f64.powi(-(k as i32));
        for (x, pen) in penalty.iter_mut().enumerate() {
            *pen += d2 * wk * cache.get(x, current)?;
        }
        let f: Vec<f64> = (0..n).map(|x| g[x] - penalty[x]).collect();
        let best = f.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let next = if f[current] >= best { current } else { (0..n).find(|&x| f[x] >= best).expect("maximum exists") };
        if next == current {
            let kk = sequence.len() - 1;
            let mut anchors: Vec<(usize, f64)> = sequence[..kk].iter().enumerate().map(|(j, &p)| (p, 2f64.powi(-(j as i32)))).collect();
            anchors.push((current, 2f64.powi(1 - kk as i32)));
            return Ok(BpResult { tilde: current, sequence, perturbation: Perturbation { anchors, spec } });
        }
        sequence.push(next);
    }
    Err(Error::NonConvergence { iterations: cap })
}

/// Exhaustively checks, over the candidate set:
/// (i) `ρ(p̃, p_k) <= λ / (2^k δ^2)` for every iterate;
/// (ii) `G(p_0) <= G(p̃) - δ^2 φ_δ(p̃)`;
/// (iii) `G(x) - δ^2 φ_δ(x) < G(p̃) - δ^2 φ_δ(p̃)` for every other candidate.
pub fn verify_borwein_preiss(cands: &CandidateSet, g: &[f64], lambda: f64, delta: f64, result: &BpResult) -> Result<BpVerification> {
    let mut cache = GaugeCache::new(cands, result.perturbation.spec);
    let d2 = delta * delta;
    let tilde = result.tilde;
    let mut item_i = true;
    for (k, &p) in result.sequence.iter().enumerate() {
        if cache.get(tilde, p)? > lambda / (2f64.powi(k as i32) * d2) {
            item_i = false;
        }
    }
    let mut phi = Vec::with_capacity(cands.len());
    for x in 0..cands.len() {
        let mut s = 0.0;
        for &(k, w) in &result.perturbation.anchors {
            s += w * cache.get(x, k)?;
        }
        phi.push(s);
    }
    let top = g[tilde] - d2 * phi[tilde];
    let item_ii = g[result.sequence[0]] <= top;
    let item_iii = (0..cands.len())
        .filter(|&x| x != tilde && cands.points[x] != cands.points[tilde])
        .all(|x| g[x] - d2 * phi[x] < top);
    Ok(BpVerification { item_i, item_ii, item_iii })
}
