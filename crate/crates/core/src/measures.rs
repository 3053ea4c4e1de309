//! Finitely supported probability measures on `R^d` and their Gaussian
//! smoothings.

use std::io::Read;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::numerics::{normal_interval, normal_partial_moments};
use crate::{Error, Result};

/// Half-open box `(lower, upper]` in `R^d`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HalfOpenBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl HalfOpenBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::DimensionMismatch { expected: lower.len(), found: upper.len() });
        }
        Ok(Self { lower, upper })
    }

    /// The cube `(-r, r]^d`.
    pub fn centered(d: usize, r: f64) -> Self {
        Self { lower: vec![-r; d], upper: vec![r; d] }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lower.iter().zip(&self.upper).any(|(l, u)| u <= l)
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter().zip(self.lower.iter().zip(&self.upper)).all(|(x, (l, u))| l < x && x <= u)
    }

    pub fn intersect(&self, other: &HalfOpenBox) -> HalfOpenBox {
        HalfOpenBox {
            lower: self.lower.iter().zip(&other.lower).map(|(a, b)| a.max(*b)).collect(),
            upper: self.upper.iter().zip(&other.upper).map(|(a, b)| a.min(*b)).collect(),
        }
    }

    pub fn volume(&self) -> f64 {
        self.lower.iter().zip(&self.upper).map(|(l, u)| (u - l).max(0.0)).product()
    }
}

/// A probability measure with finitely many weighted atoms.
#[derive(Clone, Debug, PartialEq)]
pub struct EmpiricalMeasure {
    dim: usize,
    points: Vec<f64>,
    weights: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct MeasureFile {
    d: usize,
    points: Vec<Vec<f64>>,
    #[serde(default)]
    weights: Option<Vec<f64>>,
}

impl EmpiricalMeasure {
    /// Builds a measure from atoms and optional weights; weights are
    /// normalised to sum to one, uniform when absent.
    pub fn from_points(points: &[Vec<f64>], weights: Option<&[f64]>) -> Result<Self> {
        let first = points.first().ok_or(Error::EmptyInput)?;
        let dim = first.len();
        if dim == 0 {
            return Err(Error::EmptyInput);
        }
        let mut flat = Vec::with_capacity(points.len() * dim);
        for p in points {
            if p.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, found: p.len() });
            }
            if p.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidParameter("non-finite coordinate".into()));
            }
            flat.extend_from_slice(p);
        }
        Self::from_flat(dim, flat, weights.map(|w| w.to_vec()))
    }

    /// Builds a measure from row-major coordinates.
    pub fn from_flat(dim: usize, points: Vec<f64>, weights: Option<Vec<f64>>) -> Result<Self> {
        if dim == 0 || points.is_empty() {
            return Err(Error::EmptyInput);
        }
        if points.len() % dim != 0 {
            return Err(Error::DimensionMismatch { expected: dim, found: points.len() % dim });
        }
        let n = points.len() / dim;
        let weights = match weights {
            None => vec![1.0 / n as f64; n],
            Some(w) => {
                if w.len() != n {
                    return Err(Error::DimensionMismatch { expected: n, found: w.len() });
                }
                for (index, &weight) in w.iter().enumerate() {
                    if weight < 0.0 || !weight.is_finite() {
                        return Err(Error::NegativeWeight { index, weight });
                    }
                }
                let total: f64 = w.iter().sum();
                if total <= 0.0 {
                    return Err(Error::InvalidParameter("weights sum to zero".into()));
                }
                w.into_iter().map(|v| v / total).collect()
            }
        };
        Ok(Self { dim, points, weights })
    }

    pub fn dirac(x: &[f64]) -> Self {
        Self { dim: x.len(), points: x.to_vec(), weights: vec![1.0] }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn weight(&self, i: usize) -> f64 {
        self.weights[i]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Row-major atom coordinates.
    pub fn flat_points(&self) -> &[f64] {
        &self.points
    }

    pub fn atoms(&self) -> impl Iterator<Item = (&[f64], f64)> + '_ {
        self.points.chunks_exact(self.dim).zip(self.weights.iter().copied())
    }

    pub fn points(&self) -> Vec<Vec<f64>> {
        self.points.chunks_exact(self.dim).map(|c| c.to_vec()).collect()
    }

    pub fn has_uniform_weights(&self) -> bool {
        let w0 = self.weights[0];
        self.weights.iter().all(|&w| (w - w0).abs() <= 1e-15 * w0.max(1e-300))
    }

    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim];
        for (x, w) in self.atoms() {
            for (mk, xk) in m.iter_mut().zip(x) {
                *mk += w * xk;
            }
        }
        m
    }

    /// `∫ |x|^q dμ` for `q >= 1`.
    pub fn moment(&self, q: f64) -> Result<f64> {
        if q.is_nan() || q < 1.0 {
            return Err(Error::InvalidOrder(q));
        }
        Ok(self.atoms().map(|(x, w)| w * norm(x).powf(q)).sum())
    }

    /// Largest Euclidean norm of an atom.
    pub fn support_radius(&self) -> f64 {
        self.points.chunks_exact(self.dim).map(norm).fold(0.0, f64::max)
    }

    /// Largest absolute coordinate of an atom.
    pub fn support_sup_radius(&self) -> f64 {
        self.points.iter().fold(0.0_f64, |a, v| a.max(v.abs()))
    }

    /// Moves every atom with `|x| > k` to the origin.
    pub fn truncate(&self, k: f64) -> Self {
        let mut out = self.clone();
        for x in out.points.chunks_exact_mut(self.dim) {
            if norm(x) > k {
                x.iter_mut().for_each(|v| *v = 0.0);
            }
        }
        out
    }

    pub fn translate(&self, v: &[f64]) -> Self {
        let mut out = self.clone();
        for x in out.points.chunks_exact_mut(self.dim) {
            for (xk, vk) in x.iter_mut().zip(v) {
                *xk += vk;
            }
        }
        out
    }

    /// Mass of a half-open box.
    pub fn cell_mass(&self, b: &HalfOpenBox) -> f64 {
        self.atoms().filter(|(x, _)| b.contains(x)).map(|(_, w)| w).sum()
    }

    /// Index of the atom selected by a uniform draw `u` in `[0, 1)`.
    pub fn atom_for_uniform(&self, cumulative: &[f64], u: f64) -> usize {
        let target = u * cumulative[cumulative.len() - 1];
        cumulative.partition_point(|&c| c <= target).min(self.len() - 1)
    }

    pub fn cumulative_weights(&self) -> Vec<f64> {
        let mut acc = 0.0;
        self.weights
            .iter()
            .map(|w| {
                acc += w;
                acc
            })
            .collect()
    }

    /// I.i.d. draws, reproducible from `seed`.
    pub fn sample(&self, count: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cum = self.cumulative_weights();
        (0..count)
            .map(|_| self.point(self.atom_for_uniform(&cum, rng.random::<f64>())).to_vec())
            .collect()
    }

    pub fn smoothed(&self, bandwidth: f64) -> Result<SmoothedMeasure> {
        SmoothedMeasure::new(self.clone(), bandwidth)
    }

    pub fn to_json(&self) -> Result<String> {
        let file = MeasureFile { d: self.dim, points: self.points(), weights: Some(self.weights.clone()) };
        Ok(serde_json::to_string(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: MeasureFile = serde_json::from_str(text)?;
        let m = Self::from_points(&file.points, file.weights.as_deref())?;
        if m.dim != file.d {
            return Err(Error::DimensionMismatch { expected: file.d, found: m.dim });
        }
        Ok(m)
    }

    /// Reads CSV rows of `d` coordinates, optionally followed by a weight
    /// column. A non-numeric first row is treated as a header.
    pub fn from_csv_reader<R: Read>(reader: R, d: usize) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_reader(reader);
        let mut points = Vec::new();
        let mut weights = Vec::new();
        let mut weighted = None;
        for (row, record) in rdr.records().enumerate() {
            let record = record?;
            let values: std::result::Result<Vec<f64>, _> = record.iter().map(str::parse::<f64>).collect();
            let values = match values {
                Ok(v) => v,
                Err(_) if row == 0 => continue,
                Err(e) => return Err(Error::Parse(format!("row {row}: {e}"))),
            };
            let has_weight = match values.len() {
                n if n == d => false,
                n if n == d + 1 => true,
                n => return Err(Error::DimensionMismatch { expected: d, found: n }),
            };
            if *weighted.get_or_insert(has_weight) != has_weight {
                return Err(Error::Parse(format!("row {row}: inconsistent weight column")));
            }
            points.push(values[..d].to_vec());
            if has_weight {
                weights.push(values[d]);
            }
        }
        let w = if weighted == Some(true) { Some(weights.as_slice()) } else { None };
        Self::from_points(&points, w)
    }

    /// Loads a measure from a `.json` or `.csv` file; CSV needs `d`.
    pub fn load(path: &Path, d: Option<usize>) -> Result<Self> {
        let is_csv = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"));
        if is_csv {
            let d = d.ok_or_else(|| Error::InvalidParameter("CSV measures need a dimension".into()))?;
            Self::from_csv_reader(std::fs::File::open(path)?, d)
        } else {
            Self::from_json(&std::fs::read_to_string(path)?)
        }
    }
}

/// Convolution of an empirical measure with `N(0, bandwidth^2 I_d)`.
#[derive(Clone, Debug, PartialEq)]
pub struct SmoothedMeasure {
    base: EmpiricalMeasure,
    bandwidth: f64,
}

/// A Monte Carlo or exact estimate with its standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
}

impl SmoothedMeasure {
    pub fn new(base: EmpiricalMeasure, bandwidth: f64) -> Result<Self> {
        if !(bandwidth > 0.0 && bandwidth.is_finite()) {
            return Err(Error::InvalidParameter(format!("bandwidth {bandwidth} must be positive")));
        }
        Ok(Self { base, bandwidth })
    }

    pub fn base(&self) -> &EmpiricalMeasure {
        &self.base
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn dim(&self) -> usize {
        self.base.dim
    }

    /// `∫ |x|^q`; exact for `q = 2`, Monte Carlo with 200000 draws otherwise.
    pub fn moment(&self, q: f64) -> Result<Estimate> {
        self.moment_with(q, 200_000, 0x5eed)
    }

    pub fn moment_with(&self, q: f64, samples: usize, seed: u64) -> Result<Estimate> {
        if q.is_nan() || q < 1.0 {
            return Err(Error::InvalidOrder(q));
        }
        if q == 2.0 {
            let base = self.base.moment(2.0)?;
            let value = base + self.dim() as f64 * self.bandwidth * self.bandwidth;
            return Ok(Estimate { value, stderr: 0.0 });
        }
        let draws: Vec<f64> = self.sample(samples.max(2), seed).iter().map(|x| norm(x).powf(q)).collect();
        Ok(mean_and_stderr(&draws))
    }

    /// Mass of a half-open box under the mixture of Gaussians.
    pub fn cell_mass(&self, b: &HalfOpenBox) -> f64 {
        let r = self.bandwidth;
        self.base
            .atoms()
            .map(|(x, w)| {
                w * x
                    .iter()
                    .zip(b.lower.iter().zip(&b.upper))
                    .map(|(x, (l, u))| normal_interval((l - x) / r, (u - x) / r))
                    .product::<f64>()
            })
            .sum()
    }

    /// `∫_{R^d \ b} |x|^2`, computed from partial Gaussian moments.
    pub fn second_moment_outside(&self, b: &HalfOpenBox) -> f64 {
        let total = self.moment(2.0).map(|e| e.value).unwrap_or(0.0);
        let r = self.bandwidth;
        let inside: f64 = self
            .base
            .atoms()
            .map(|(x, w)| {
                let parts: Vec<(f64, f64)> = x
                    .iter()
                    .zip(b.lower.iter().zip(&b.upper))
                    .map(|(x, (l, u))| {
                        let (p, m1, m2) = normal_partial_moments((l - x) / r, (u - x) / r);
                        (p, x * x * p + 2.0 * x * r * m1 + r * r * m2)
                    })
                    .collect();
                let mut s = 0.0;
                for j in 0..parts.len() {
                    let mut term = parts[j].1;
                    for (k, part) in parts.iter().enumerate() {
                        if k != j {
                            term *= part.0;
                        }
                    }
                    s += term;
                }
                w * s
            })
            .sum();
        (total - inside).max(0.0)
    }

    /// I.i.d. draws from the smoothed measure.
    pub fn sample(&self, count: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cum = self.base.cumulative_weights();
        (0..count)
            .map(|_| {
                let i = self.base.atom_for_uniform(&cum, rng.random::<f64>());
                self.base
                    .point(i)
                    .iter()
                    .map(|x| x + self.bandwidth * rng.sample::<f64, _>(StandardNormal))
                    .collect()
            })
            .collect()
    }
}

/// Common interface for atomic and smoothed measures.
pub trait Measure: Sync {
    fn atoms(&self) -> &EmpiricalMeasure;
    /// Gaussian bandwidth, `None` for atomic measures.
    fn bandwidth(&self) -> Option<f64>;

    fn dim(&self) -> usize {
        self.atoms().dim()
    }

    fn cell_mass(&self, b: &HalfOpenBox) -> f64;

    /// `∫_{R^d \ b} |x|^2`.
    fn second_moment_outside(&self, b: &HalfOpenBox) -> f64;
}

impl Measure for EmpiricalMeasure {
    fn atoms(&self) -> &EmpiricalMeasure {
        self
    }
    fn bandwidth(&self) -> Option<f64> {
        None
    }
    fn cell_mass(&self, b: &HalfOpenBox) -> f64 {
        EmpiricalMeasure::cell_mass(self, b)
    }
    fn second_moment_outside(&self, b: &HalfOpenBox) -> f64 {
        self.atoms().filter(|(x, _)| !b.contains(x)).map(|(x, w)| w * norm_sq(x)).sum()
    }
}

impl Measure for SmoothedMeasure {
    fn atoms(&self) -> &EmpiricalMeasure {
        &self.base
    }
    fn bandwidth(&self) -> Option<f64> {
        Some(self.bandwidth)
    }
    fn cell_mass(&self, b: &HalfOpenBox) -> f64 {
        SmoothedMeasure::cell_mass(self, b)
    }
    fn second_moment_outside(&self, b: &HalfOpenBox) -> f64 {
        SmoothedMeasure::second_moment_outside(self, b)
    }
}

pub fn norm(x: &[f64]) -> f64 {
    norm_sq(x).sqrt()
}

pub fn norm_sq(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

pub fn dist_sq(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// Sample mean and standard error of the mean.
pub fn mean_and_stderr(values: &[f64]) -> Estimate {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return Estimate { value: mean, stderr: 0.0 };
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Estimate { value: mean, stderr: (var / n).sqrt() }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(EmpiricalMeasure::from_points(&[], None), Err(Error::EmptyInput)));
        let pts = vec![vec![0.0], vec![1.0]];
        assert!(matches!(
            EmpiricalMeasure::from_points(&pts, Some(&[0.5, -0.1])),
            Err(Error::NegativeWeight { index: 1, .. })
        ));
        let ragged = vec![vec![0.0], vec![1.0, 2.0]];
        assert!(matches!(EmpiricalMeasure::from_points(&ragged, None), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn weights_are_normalised() {
        let m = EmpiricalMeasure::from_points(&[vec![0.0], vec![1.0]], Some(&[1.0, 3.0])).unwrap();
        assert_eq!(m.weights(), &[0.25, 0.75]);
    }

    #[test]
    fn moments() {
        let m = EmpiricalMeasure::from_points(&[vec![3.0, 4.0]], None).unwrap();
        assert_eq!(m.moment(2.0).unwrap(), 25.0);
        assert!(matches!(m.moment(0.5), Err(Error::InvalidOrder(_))));
        let s = m.smoothed(0.5).unwrap();
        assert!((s.moment(2.0).unwrap().value - 25.5).abs() < 1e-12);
        let m3 = s.moment_with(1.0, 100_000, 3).unwrap();
        assert!((m3.value - 5.0).abs() < 5.0 * m3.stderr + 0.05);
    }

    #[test]
    fn truncation_moves_far_atoms_to_origin() {
        let m = EmpiricalMeasure::from_points(&[vec![0.5], vec![5.0]], None).unwrap();
        let t = m.truncate(1.0);
        assert_eq!(t.points(), vec![vec![0.5], vec![0.0]]);
        assert!(t.moment(2.0).unwrap() <= m.moment(2.0).unwrap());
    }

    #[test]
    fn smoothed_cell_mass_of_dirac() {
        let s = EmpiricalMeasure::dirac(&[0.0]).smoothed(1.0).unwrap();
        let m = s.cell_mass(&HalfOpenBox::new(vec![0.0], vec![1.0]).unwrap());
        assert!((m - 0.341_345).abs() < 1e-6);
    }

    #[test]
    fn atomic_cell_mass_is_half_open() {
        let m = EmpiricalMeasure::from_points(&[vec![0.0], vec![1.0]], None).unwrap();
        let b = HalfOpenBox::new(vec![0.0], vec![1.0]).unwrap();
        assert_eq!(m.cell_mass(&b), 0.5);
    }

    #[test]
    fn second_moment_outside_matches_direct() {
        let s = EmpiricalMeasure::from_points(&[vec![0.3, -0.2], vec![1.5, 0.7]], None).unwrap().smoothed(0.6).unwrap();
        let b = HalfOpenBox::centered(2, 1.0);
        let whole = HalfOpenBox::centered(2, 1e3);
        assert!(s.second_moment_outside(&whole).abs() < 1e-9);
        let draws = s.sample(400_000, 11);
        let mc: f64 = draws.iter().filter(|x| !b.contains(x)).map(|x| norm_sq(x)).sum::<f64>() / draws.len() as f64;
        assert!((s.second_moment_outside(&b) - mc).abs() < 0.02);
    }

    #[test]
    fn json_and_csv_round_trip() {
        let m = EmpiricalMeasure::from_points(&[vec![0.0, 1.0], vec![2.0, 3.0]], Some(&[0.2, 0.8])).unwrap();
        let back = EmpiricalMeasure::from_json(&m.to_json().unwrap()).unwrap();
        assert_eq!(back, m);
        let csv = "x,y,w\n0,1,0.2\n2,3,0.8\n";
        let c = EmpiricalMeasure::from_csv_reader(csv.as_bytes(), 2).unwrap();
        assert_eq!(c, m);
        let plain = EmpiricalMeasure::from_csv_reader("0,1\n2,3\n".as_bytes(), 2).unwrap();
        assert_eq!(plain.weights(), &[0.5, 0.5]);
    }

    #[test]
    fn sampling_is_seeded() {
        let m = EmpiricalMeasure::from_points(&[vec![0.0], vec![1.0], vec![2.0]], None).unwrap();
        assert_eq!(m.sample(50, 7), m.sample(50, 7));
        let s = m.smoothed(0.1).unwrap();
        assert_eq!(s.sample(20, 9), s.sample(20, 9));
    }
}
