//! Multiscale dyadic comparison of measures.
//!
//! Space is split into annuli `B_0 = (-1, 1]^d` and
//! `B_n = (-2^n, 2^n]^d \ (-2^{n-1}, 2^{n-1}]^d`; level `l` cuts the scaled
//! cube `(-2^n, 2^n]^d` into `2^{dl}` congruent half-open cubes. The weighted
//! sum of cell-mass differences over all annuli and levels controls `W_2^2`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::measures::{mean_and_stderr, norm_sq, EmpiricalMeasure, HalfOpenBox, Measure};
use crate::numerics::{normal_cdf, normal_pdf, normal_sf};
use crate::transport::w2_exact;
use crate::{Error, Result};

/// Largest number of cells a single traversal may visit.
pub const MAX_CELLS: u128 = 1 << 34;

/// One cell of the annulus/level decomposition. The realized set is
/// `outer \ hole`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DyadicCell {
    pub annulus: u32,
    pub level: u32,
    pub index: Vec<usize>,
    pub outer: HalfOpenBox,
    pub hole: Option<HalfOpenBox>,
}

impl DyadicCell {
    pub fn contains(&self, x: &[f64]) -> bool {
        self.outer.contains(x) && !self.hole.as_ref().is_some_and(|h| h.contains(x))
    }

    /// Disjoint boxes whose union is the realized cell (at most `2d`).
    pub fn pieces(&self) -> Vec<HalfOpenBox> {
        let Some(hole) = &self.hole else {
            return vec![self.outer.clone()];
        };
        let d = self.outer.dim();
        let mut out = Vec::new();
        let mut core = self.outer.clone();
        for k in 0..d {
            if core.lower[k] < hole.lower[k] {
                let mut b = core.clone();
                b.upper[k] = hole.lower[k];
                out.push(b);
            }
            if hole.upper[k] < core.upper[k] {
                let mut b = core.clone();
                b.lower[k] = hole.upper[k];
                out.push(b);
            }
            core.lower[k] = hole.lower[k];
            core.upper[k] = hole.upper[k];
        }
        out
    }

    /// Mass of the realized cell.
    pub fn mass<M: Measure + ?Sized>(&self, m: &M) -> f64 {
        self.pieces().iter().map(|b| m.cell_mass(b)).sum()
    }
}

/// Edges of level `l` in annulus `n` along one axis.
pub fn level_edges(n: u32, l: u32) -> Vec<f64> {
    let scale = 2f64.powi(n as i32);
    let step = 2f64.powi(1 - l as i32);
    (0..=(1usize << l)).map(|k| scale * (-1.0 + k as f64 * step)).collect()
}

/// Half-width of the hole of annulus `n`, `None` for `n = 0`.
pub fn hole_radius(n: u32) -> Option<f64> {
    (n > 0).then(|| 2f64.powi(n as i32 - 1))
}

/// Cells of annulus `n`, level `l` in dimension `d`, skipping those lying
/// entirely inside the hole.
pub fn enumerate_cells(n: u32, l: u32, d: usize) -> Vec<DyadicCell> {
    let edges = level_edges(n, l);
    let per_axis = edges.len() - 1;
    let h = hole_radius(n);
    let inner = h.map(|h| HalfOpenBox::centered(d, h));
    let total = per_axis.pow(d as u32);
    let mut cells = Vec::new();
    let mut index = vec![0usize; d];
    for lin in 0..total {
        let mut r = lin;
        for k in index.iter_mut() {
            *k = r % per_axis;
            r /= per_axis;
        }
        let outer = HalfOpenBox {
            lower: index.iter().map(|&k| edges[k]).collect(),
            upper: index.iter().map(|&k| edges[k + 1]).collect(),
        };
        let hole = inner.as_ref().map(|b| outer.intersect(b)).filter(|b| !b.is_empty());
        if hole.as_ref().is_some_and(|hb| *hb == outer) {
            continue;
        }
        cells.push(DyadicCell { annulus: n, level: l, index: index.clone(), outer, hole });
    }
    cells
}

/// Truncation and scale constant of the multiscale sum.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DyadicSpec {
    pub c_d: f64,
    pub n_max: u32,
    pub l_max: u32,
}

impl DyadicSpec {
    /// `N_max = max(3, ceil(log2(1 + R)) + 2)` and `L_max = 10`.
    pub fn for_radius(c_d: f64, radius: f64) -> Self {
        Self { c_d, n_max: default_n_max(radius), l_max: 10 }
    }
}

pub fn default_n_max(radius: f64) -> u32 {
    let r = (1.0 + radius.max(0.0)).log2().ceil() as u32 + 2;
    r.max(3)
}

/// Truncated multiscale sum together with a bound on what was left out.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub partial_sum: f64,
    pub tail_bound: f64,
    pub c_d: f64,
    pub n_max: u32,
    pub l_max: u32,
}

impl BoundReport {
    pub fn total(&self) -> f64 {
        self.partial_sum + self.tail_bound
    }
}

#[derive(Clone, Copy)]
struct Eval {
    z: f64,
    f: f64,
    s: f64,
}

fn eval_edge(e: f64, x: f64, r: Option<f64>) -> Eval {
    match r {
        None => {
            if x <= e {
                Eval { z: 1.0, f: 1.0, s: 0.0 }
            } else {
                Eval { z: -1.0, f: 0.0, s: 1.0 }
            }
        }
        Some(r) => {
            let z = (e - x) / r;
            Eval { z, f: normal_cdf(z), s: normal_sf(z) }
        }
    }
}

fn interval_mass(a: Eval, b: Eval) -> f64 {
    let m = if a.z >= 0.0 {
        a.s - b.s
    } else if b.z <= 0.0 {
        b.f - a.f
    } else {
        1.0 - a.f - b.s
    };
    m.max(0.0)
}

/// Per-axis interval masses of one atom at one annulus and level: the whole
/// interval and its part inside the hole.
pub(crate) fn axis_tables(x: f64, r: Option<f64>, edges: &[f64], hole: Option<f64>, outer: &mut [f64], clipped: &mut [f64]) {
    let evals: Vec<Eval> = edges.iter().map(|&e| eval_edge(e, x, r)).collect();
    for k in 0..outer.len() {
        outer[k] = interval_mass(evals[k], evals[k + 1]);
    }
    match hole {
        None => clipped.iter_mut().for_each(|c| *c = 0.0),
        Some(h) => {
            let lo_h = eval_edge(-h, x, r);
            let hi_h = eval_edge(h, x, r);
            for k in 0..clipped.len() {
                let (a, b) = (edges[k], edges[k + 1]);
                let lo = a.max(-h);
                let hi = b.min(h);
                clipped[k] = if hi <= lo {
                    0.0
                } else {
                    let ea = if a >= -h { evals[k] } else { lo_h };
                    let eb = if b <= h { evals[k + 1] } else { hi_h };
                    interval_mass(ea, eb)
                };
            }
        }
    }
}

/// Atoms with signed weights and a common bandwidth.
pub(crate) struct SignedAtoms<'a> {
    pub dim: usize,
    pub parts: Vec<(&'a EmpiricalMeasure, f64, Option<f64>)>,
}

impl<'a> SignedAtoms<'a> {
    pub fn difference<M: Measure + ?Sized, N: Measure + ?Sized>(mu: &'a M, nu: &'a N) -> Result<Self> {
        if mu.dim() != nu.dim() {
            return Err(Error::DimensionMismatch { expected: mu.dim(), found: nu.dim() });
        }
        Ok(Self { dim: mu.dim(), parts: vec![(mu.atoms(), 1.0, mu.bandwidth()), (nu.atoms(), -1.0, nu.bandwidth())] })
    }

    fn count(&self) -> usize {
        self.parts.iter().map(|p| p.0.len()).sum()
    }
}

/// Calls `visit(index, delta)` for every cell of annulus `n`, level `l` whose
/// signed mass `delta` may be non-zero. `index` is the per-axis cell index.
pub(crate) fn level_differences(atoms: &SignedAtoms, n: u32, l: u32, mut visit: impl FnMut(&[usize], f64)) {
    let d = atoms.dim;
    let edges = level_edges(n, l);
    let hole = hole_radius(n);
    let per_axis = edges.len() - 1;
    if d == 1 {
        let mut delta = vec![0.0; per_axis];
        let mut part = vec![0.0; per_axis];
        let mut o = vec![0.0; per_axis];
        let mut c = vec![0.0; per_axis];
        // Each measure is summed on its own so that equal measures cancel
        // exactly.
        for &(m, sign, r) in &atoms.parts {
            part.iter_mut().for_each(|p| *p = 0.0);
            for (x, w) in m.atoms() {
                axis_tables(x[0], r, &edges, hole, &mut o, &mut c);
                for k in 0..per_axis {
                    part[k] += w * (o[k] - c[k]);
                }
            }
            for k in 0..per_axis {
                delta[k] += sign * part[k];
            }
        }
        for (k, &dk) in delta.iter().enumerate() {
            if dk != 0.0 {
                visit(&[k], dk);
            }
        }
        return;
    }
    let count = atoms.count();
    // tables[atom][axis] = (outer, clipped)
    let mut weights = Vec::with_capacity(count);
    let mut signs = Vec::with_capacity(count);
    let mut tables: Vec<Vec<(Vec<f64>, Vec<f64>)>> = Vec::with_capacity(count);
    for &(m, sign, r) in &atoms.parts {
        for (x, w) in m.atoms() {
            weights.push(w);
            signs.push(sign);
            tables.push(
                x.iter()
                    .map(|&xj| {
                        let mut o = vec![0.0; per_axis];
                        let mut c = vec![0.0; per_axis];
                        axis_tables(xj, r, &edges, hole, &mut o, &mut c);
                        (o, c)
                    })
                    .collect(),
            );
        }
    }
    let mut index = vec![0usize; d];
    let mut po = vec![vec![0.0; count]; d + 1];
    let mut pc = vec![vec![0.0; count]; d + 1];
    po[0].iter_mut().zip(&weights).for_each(|(p, w)| *p = *w);
    pc[0].iter_mut().zip(&weights).for_each(|(p, w)| *p = *w);
    recurse(0, d, per_axis, &tables, &signs, &mut po, &mut pc, &mut index, &mut visit);
}

#[allow(clippy::too_many_arguments)]
fn recurse(
    axis: usize,
    d: usize,
    per_axis: usize,
    tables: &[Vec<(Vec<f64>, Vec<f64>)>],
    signs: &[f64],
    po: &mut [Vec<f64>],
    pc: &mut [Vec<f64>],
    index: &mut [usize],
    visit: &mut impl FnMut(&[usize], f64),
) {
    for k in 0..per_axis {
        index[axis] = k;
        let mut any = false;
        for a in 0..tables.len() {
            let o = po[axis][a] * tables[a][axis].0[k];
            let c = pc[axis][a] * tables[a][axis].1[k];
            po[axis + 1][a] = o;
            pc[axis + 1][a] = c;
            any |= o != 0.0 || c != 0.0;
        }
        if !any {
            continue;
        }
        if axis + 1 == d {
            let (mut plus, mut minus) = (0.0, 0.0);
            for a in 0..signs.len() {
                let v = po[d][a] - pc[d][a];
                if signs[a] > 0.0 {
                    plus += v;
                } else {
                    minus += v;
                }
            }
            let delta = plus - minus;
            if delta != 0.0 {
                visit(index, delta);
            }
        } else {
            recurse(axis + 1, d, per_axis, tables, signs, po, pc, index, visit);
        }
    }
}

pub(crate) fn check_cell_budget(d: usize, n_max: u32, l_max: u32) -> Result<()> {
    let per_band: u128 = (0..=l_max).map(|l| 1u128 << (d as u128 * l as u128).min(120)).sum();
    let total = per_band * (n_max as u128 + 1);
    if total > MAX_CELLS {
        return Err(Error::TooManyCells(total));
    }
    Ok(())
}

/// `Σ_{n<=N} 2^{2n} Σ_{l<=L} 2^{-2l} Σ_B g(Δ_B)` over all cells, in parallel
/// over annulus/level pairs.
pub(crate) fn weighted_cell_sum(atoms: &SignedAtoms, n_max: u32, l_max: u32, g: impl Fn(u32, u32, f64) -> f64 + Sync) -> f64 {
    let pairs: Vec<(u32, u32)> = (0..=n_max).flat_map(|n| (0..=l_max).map(move |l| (n, l))).collect();
    let parts: Vec<f64> = pairs
        .par_iter()
        .map(|&(n, l)| {
            let mut s = 0.0;
            level_differences(atoms, n, l, |_, delta| s += g(n, l, delta));
            4f64.powi(n as i32) * 4f64.powi(-(l as i32)) * s
        })
        .collect();
    parts.iter().sum()
}

/// Mass of annulus `n`.
pub fn annulus_mass<M: Measure + ?Sized>(m: &M, n: u32) -> f64 {
    let d = m.dim();
    let outer = m.cell_mass(&HalfOpenBox::centered(d, 2f64.powi(n as i32)));
    match hole_radius(n) {
        None => outer,
        Some(h) => (outer - m.cell_mass(&HalfOpenBox::centered(d, h))).max(0.0),
    }
}

/// Bound on the part of the weighted sum (with unit constant) beyond
/// `n_max` and `l_max`, valid for any per-cell term not exceeding `|Δ_B|`.
pub fn truncation_tail<M: Measure + ?Sized, N: Measure + ?Sized>(mu: &M, nu: &N, n_max: u32, l_max: u32) -> f64 {
    let d = mu.dim();
    let outside = HalfOpenBox::centered(d, 2f64.powi(n_max as i32));
    // On B_n with n >= 1 some coordinate exceeds 2^{n-1}, so 2^{2n} < 4|x|^2,
    // and Σ_l 2^{-2l} = 4/3.
    let far = (4.0 / 3.0) * 4.0 * (mu.second_moment_outside(&outside) + nu.second_moment_outside(&outside));
    let level_tail = 4f64.powi(-(l_max as i32)) / 3.0;
    let near: f64 = (0..=n_max)
        .map(|n| 4f64.powi(n as i32) * level_tail * (annulus_mass(mu, n) + annulus_mass(nu, n)))
        .sum();
    far + near
}

/// Truncated multiscale sum of `|μ(B) - ν(B)|` and a bound on its tail.
pub fn multiscale_bound<M: Measure + ?Sized, N: Measure + ?Sized>(mu: &M, nu: &N, spec: &DyadicSpec) -> Result<BoundReport> {
    let atoms = SignedAtoms::difference(mu, nu)?;
    check_cell_budget(mu.dim(), spec.n_max, spec.l_max)?;
    let raw = weighted_cell_sum(&atoms, spec.n_max, spec.l_max, |_, _, delta| delta.abs());
    let tail = truncation_tail(mu, nu, spec.n_max, spec.l_max);
    Ok(BoundReport { partial_sum: spec.c_d * raw, tail_bound: spec.c_d * tail, c_d: spec.c_d, n_max: spec.n_max, l_max: spec.l_max })
}

/// One row of an empirical convergence table.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateRow {
    pub n: usize,
    pub mean: f64,
    pub stderr: f64,
}

/// Mean `W_2(μ_n, μ)` over replicates for each sample size, plus the fitted
/// log-log slope.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateTable {
    pub rows: Vec<RateRow>,
    pub slope: f64,
}

impl RateTable {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("n,mean,stderr\n");
        for r in &self.rows {
            s.push_str(&format!("{},{:.15e},{:.15e}\n", r.n, r.mean, r.stderr));
        }
        s
    }
}

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

/// Fixed discretization of a measure used as the target in rate tables:
/// the measure itself when atomic, midpoint quantiles in one dimension, and
/// a seeded sample otherwise.
pub fn reference_discretization<M: Measure + ?Sized>(m: &M, size: usize, seed: u64) -> Result<EmpiricalMeasure> {
    let Some(r) = m.bandwidth() else {
        return Ok(m.atoms().clone());
    };
    let base = m.atoms();
    if m.dim() == 1 {
        let lo = base.flat_points().iter().cloned().fold(f64::INFINITY, f64::min) - 40.0 * r;
        let hi = base.flat_points().iter().cloned().fold(f64::NEG_INFINITY, f64::max) + 40.0 * r;
        let cdf = |y: f64| -> f64 { base.atoms().map(|(x, w)| w * normal_cdf((y - x[0]) / r)).sum() };
        let pts: Vec<Vec<f64>> = (0..size)
            .map(|k| {
                let p = (k as f64 + 0.5) / size as f64;
                let (mut a, mut b) = (lo, hi);
                for _ in 0..200 {
                    let mid = 0.5 * (a + b);
                    if cdf(mid) < p {
                        a = mid;
                    } else {
                        b = mid;
                    }
                    if b - a < 1e-14 * (1.0 + mid.abs()) {
                        break;
                    }
                }
                vec![0.5 * (a + b)]
            })
            .collect();
        return EmpiricalMeasure::from_points(&pts, None);
    }
    let s = base.smoothed(r)?;
    EmpiricalMeasure::from_points(&s.sample(size, seed), None)
}

/// Empirical convergence of `W_2(μ_n, μ)` for i.i.d. samples `μ_n`.
pub fn empirical_rate<M: Measure + ?Sized>(
    mu: &M,
    sizes: &[usize],
    reps: usize,
    seed: u64,
    reference_size: usize,
) -> Result<RateTable> {
    if sizes.is_empty() || reps == 0 {
        return Err(Error::EmptyInput);
    }
    let reference = reference_discretization(mu, reference_size, seed ^ 0x9e37_79b9)?;
    let smooth = mu.bandwidth().map(|r| mu.atoms().smoothed(r)).transpose()?;
    let mut rows = Vec::new();
    for (si, &n) in sizes.iter().enumerate() {
        let values: Result<Vec<f64>> = (0..reps)
            .into_par_iter()
            .map(|r| {
                let s = seed.wrapping_add(1 + (si * reps + r) as u64 * 7919);
                let draws = match &smooth {
                    Some(sm) => sm.sample(n, s),
                    None => mu.atoms().sample(n, s),
                };
                let emp = EmpiricalMeasure::from_points(&draws, None)?;
                Ok(w2_exact(&emp, &reference)?.0)
            })
            .collect();
        let e = mean_and_stderr(&values?);
        rows.push(RateRow { n, mean: e.value, stderr: e.stderr });
    }
    let slope = loglog_slope(
        &rows.iter().map(|r| r.n as f64).collect::<Vec<_>>(),
        &rows.iter().map(|r| r.mean).collect::<Vec<_>>(),
    );
    Ok(RateTable { rows, slope })
}

/// Random pair of atomic measures with 1 to 6 atoms each, radii between
/// 0.05 and 4, random weights.
pub fn random_pair(rng: &mut impl Rng, d: usize) -> (EmpiricalMeasure, EmpiricalMeasure) {
    let scales = [0.05, 0.3, 1.0, 2.5, 4.0];
    let one = |rng: &mut dyn rand::RngCore| {
        let k = rng.random_range(1..=6usize);
        let scale = scales[rng.random_range(0..scales.len())];
        let center: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0) * scale).collect();
        let pts: Vec<Vec<f64>> = (0..k)
            .map(|_| center.iter().map(|c| c + scale * rng.random_range(-1.0..1.0)).collect())
            .collect();
        let w: Vec<f64> = (0..k).map(|_| rng.random_range(0.1..1.0)).collect();
        EmpiricalMeasure::from_points(&pts, Some(&w)).expect("valid random measure")
    };
    (one(rng), one(rng))
}

/// Result of fitting the scale constant on a random corpus.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub d: usize,
    pub c_d: f64,
    pub max_ratio: f64,
    pub instances: usize,
    pub seed: u64,
}

/// Largest ratio `W_2^2 / S` over a corpus of random pairs, where `S` is the
/// truncated multiscale sum with unit constant, times a safety factor of 2.
pub fn calibrate_cd(d: usize, instances: usize, seed: u64) -> Result<Calibration> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pairs: Vec<_> = (0..instances).map(|_| random_pair(&mut rng, d)).collect();
    let ratios: Result<Vec<f64>> = pairs
        .par_iter()
        .map(|(mu, nu)| {
            let (w, _) = w2_exact(mu, nu)?;
            let spec = DyadicSpec::for_radius(1.0, mu.support_sup_radius().max(nu.support_sup_radius()));
            let s = multiscale_bound(mu, nu, &spec)?.partial_sum;
            Ok(if s > 0.0 { w * w / s } else { 0.0 })
        })
        .collect();
    let max_ratio = ratios?.into_iter().fold(0.0, f64::max);
    Ok(Calibration { d, c_d: 2.0 * max_ratio, max_ratio, instances, seed })
}

/// Second moment of an atomic measure, used by dominance checks.
pub fn second_moment(m: &EmpiricalMeasure) -> f64 {
    m.atoms().map(|(x, w)| w * norm_sq(x)).sum()
}

/// Density-weighted derivative tables of a point along one axis:
/// interval probability, first and second derivatives in the point.
pub(crate) fn axis_derivative_tables(
    x: f64,
    r: f64,
    edges: &[f64],
    hole: Option<f64>,
) -> [Vec<f64>; 6] {
    let per = edges.len() - 1;
    let mut o = vec![0.0; per];
    let mut c = vec![0.0; per];
    axis_tables(x, Some(r), edges, hole, &mut o, &mut c);
    let z: Vec<f64> = edges.iter().map(|e| (e - x) / r).collect();
    let pdf: Vec<f64> = z.iter().map(|&z| normal_pdf(z)).collect();
    let mut od = vec![0.0; per];
    let mut oh = vec![0.0; per];
    let mut cd = vec![0.0; per];
    let mut ch = vec![0.0; per];
    let deriv = |za: f64, pa: f64, zb: f64, pb: f64| ((pa - pb) / r, (za * pa - zb * pb) / (r * r));
    for k in 0..per {
        let (d1, d2) = deriv(z[k], pdf[k], z[k + 1], pdf[k + 1]);
        od[k] = d1;
        oh[k] = d2;
        if let Some(h) = hole {
            let lo = edges[k].max(-h);
            let hi = edges[k + 1].min(h);
            if hi > lo {
                let (za, zb) = ((lo - x) / r, (hi - x) / r);
                let (d1, d2) = deriv(za, normal_pdf(za), zb, normal_pdf(zb));
                cd[k] = d1;
                ch[k] = d2;
            }
        }
    }
    [o, od, oh, c, cd, ch]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn atoms(pts: &[f64]) -> EmpiricalMeasure {
        EmpiricalMeasure::from_points(&pts.iter().map(|&p| vec![p]).collect::<Vec<_>>(), None).unwrap()
    }

    #[test]
    fn cell_counts() {
        let c = enumerate_cells(0, 0, 1);
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].outer, HalfOpenBox::centered(1, 1.0));
        let c = enumerate_cells(0, 1, 1);
        assert_eq!(c.len(), 2);
        assert!(c.iter().all(|c| c.outer.volume() == 1.0));
        let c = enumerate_cells(0, 2, 1);
        assert_eq!(c.len(), 4);
        assert!(c.iter().all(|c| c.outer.volume() == 0.5));
        assert_eq!(enumerate_cells(0, 3, 2).len(), 64);
    }

    #[test]
    fn annulus_cells_partition_annulus() {
        for d in 1..=3 {
            for (n, l) in [(1, 0), (1, 1), (2, 2), (3, 1)] {
                let cells = enumerate_cells(n, l, d);
                let vol: f64 = cells.iter().map(|c| c.pieces().iter().map(|b| b.volume()).sum::<f64>()).sum();
                let side = 2f64.powi(n as i32 + 1);
                let inner = 2f64.powi(n as i32);
                assert!((vol - (side.powi(d as i32) - inner.powi(d as i32))).abs() < 1e-9);
                for c in &cells {
                    assert!(c.pieces().len() <= 2 * d);
                }
            }
        }
    }

    #[test]
    fn pieces_agree_with_membership() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let cells = enumerate_cells(2, 1, 2);
        for _ in 0..2000 {
            let x = [rng.random_range(-4.5..4.5), rng.random_range(-4.5..4.5)];
            for c in &cells {
                let in_pieces = c.pieces().iter().filter(|b| b.contains(&x)).count();
                assert!(in_pieces <= 1);
                assert_eq!(in_pieces == 1, c.contains(&x));
            }
        }
    }

    #[test]
    fn identical_measures_give_zero() {
        let m = atoms(&[0.1, -0.7, 2.3]);
        let spec = DyadicSpec { c_d: 1.0, n_max: 4, l_max: 6 };
        assert_eq!(multiscale_bound(&m, &m, &spec).unwrap().partial_sum, 0.0);
        let s = m.smoothed(0.5).unwrap();
        assert_eq!(multiscale_bound(&s, &s, &spec).unwrap().partial_sum, 0.0);
    }

    #[test]
    fn dominates_distance_for_far_diracs() {
        let spec = DyadicSpec { c_d: 1.0, n_max: 8, l_max: 12 };
        let r = multiscale_bound(&atoms(&[0.0]), &atoms(&[3.0]), &spec).unwrap();
        assert!(r.total() >= 9.0);
    }

    #[test]
    fn tail_shrinks_with_resolution() {
        let mu = atoms(&[0.0, 0.5]).smoothed(0.3).unwrap();
        let nu = atoms(&[0.2]).smoothed(0.3).unwrap();
        let coarse = truncation_tail(&mu, &nu, 2, 4);
        let fine = truncation_tail(&mu, &nu, 5, 10);
        assert!(fine < coarse && fine < 1e-5);
    }

    #[test]
    fn rate_table_decreases() {
        let mu = atoms(&[0.0]).smoothed(1.0).unwrap();
        let t = empirical_rate(&mu, &[16, 64, 256], 16, 3, 2048).unwrap();
        assert!(t.rows[0].mean > t.rows[2].mean);
        assert!(t.slope < -0.3 && t.slope > -0.8);
    }

    #[test]
    fn default_truncation() {
        assert_eq!(default_n_max(0.0), 3);
        assert_eq!(default_n_max(7.0), 5);
        assert_eq!(DyadicSpec::for_radius(1.0, 1.0).l_max, 10);
    }
}
