//! Quadratic Wasserstein distance: exact solvers for finitely supported
//! measures and a sampled estimator for Gaussian-smoothed measures.

pub mod assignment;
pub mod flow;

use std::cmp::Ordering;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::measures::{dist_sq, mean_and_stderr, EmpiricalMeasure, Estimate};
use crate::{Error, Result};

/// Integer resolution used for general weights.
pub const WEIGHT_SCALE: f64 = 1e12;

/// Largest support handled by [`brute_force_w2`].
pub const BRUTE_FORCE_LIMIT: usize = 8;

/// Sparse transport plan between atoms of two measures.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CouplingPlan {
    /// `(index in μ, index in ν, mass)`.
    pub entries: Vec<(usize, usize, f64)>,
}

impl CouplingPlan {
    pub fn cost(&self, mu: &EmpiricalMeasure, nu: &EmpiricalMeasure) -> f64 {
        self.entries.iter().map(|&(i, j, m)| m * dist_sq(mu.point(i), nu.point(j))).sum()
    }

    /// Row and column sums.
    pub fn marginals(&self, n: usize, m: usize) -> (Vec<f64>, Vec<f64>) {
        let mut a = vec![0.0; n];
        let mut b = vec![0.0; m];
        for &(i, j, w) in &self.entries {
            a[i] += w;
            b[j] += w;
        }
        (a, b)
    }

    /// `Σ π_ij |x_i - y_j|`, the first-moment cost of the plan.
    pub fn mean_displacement(&self, mu: &EmpiricalMeasure, nu: &EmpiricalMeasure) -> f64 {
        self.entries.iter().map(|&(i, j, m)| m * dist_sq(mu.point(i), nu.point(j)).sqrt()).sum()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("source,target,mass\n");
        for &(i, j, m) in &self.entries {
            s.push_str(&format!("{i},{j},{m:.17e}\n"));
        }
        s
    }
}

fn check_dims(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure) -> Result<()> {
    if mu.dim() != nu.dim() {
        return Err(Error::DimensionMismatch { expected: mu.dim(), found: nu.dim() });
    }
    Ok(())
}

/// Exact `W_2(μ, ν)` and an optimal plan.
///
/// One dimension uses the monotone (quantile) coupling. Otherwise uniform
/// measures of equal size go through the Hungarian algorithm and everything
/// else through an integer min-cost flow on weights scaled by
/// [`WEIGHT_SCALE`].
pub fn w2_exact(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure) -> Result<(f64, CouplingPlan)> {
    check_dims(mu, nu)?;
    // Solve in a canonical argument order so that the result is exactly
    // symmetric.
    let plan = if canonical_cmp(nu, mu).is_lt() {
        let p = solve_plan(nu, mu);
        CouplingPlan { entries: p.entries.into_iter().map(|(i, j, w)| (j, i, w)).collect() }
    } else {
        solve_plan(mu, nu)
    };
    Ok((plan.cost(mu, nu).max(0.0).sqrt(), plan))
}

fn canonical_cmp(a: &EmpiricalMeasure, b: &EmpiricalMeasure) -> Ordering {
    let lex = |x: &[f64], y: &[f64]| {
        x.iter().zip(y).map(|(p, q)| p.total_cmp(q)).find(|o| o.is_ne()).unwrap_or(Ordering::Equal)
    };
    a.len()
        .cmp(&b.len())
        .then_with(|| lex(a.flat_points(), b.flat_points()))
        .then_with(|| lex(a.weights(), b.weights()))
}

fn solve_plan(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure) -> CouplingPlan {
    if mu.dim() == 1 {
        quantile_plan(mu, nu)
    } else if mu.len() == nu.len() && mu.has_uniform_weights() && nu.has_uniform_weights() {
        assignment_plan(mu, nu)
    } else {
        flow_plan(mu, nu)
    }
}

fn quantile_plan(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure) -> CouplingPlan {
    let order = |m: &EmpiricalMeasure| {
        let mut idx: Vec<usize> = (0..m.len()).collect();
        idx.sort_by(|&a, &b| m.point(a)[0].total_cmp(&m.point(b)[0]));
        idx
    };
    let (ia, ib) = (order(mu), order(nu));
    let mut entries = Vec::with_capacity(mu.len() + nu.len());
    let (mut p, mut q) = (0, 0);
    let mut ra = mu.weight(ia[0]);
    let mut rb = nu.weight(ib[0]);
    loop {
        let m = ra.min(rb);
        if m > 0.0 {
            entries.push((ia[p], ib[q], m));
        }
        ra -= m;
        rb -= m;
        let last_a = p + 1 == ia.len();
        let last_b = q + 1 == ib.len();
        if last_a && last_b {
            break;
        }
        // Advance whichever side is exhausted; rounding leftovers go to the
        // side that still has atoms.
        if (ra <= rb && !last_a) || last_b {
            p += 1;
            ra += mu.weight(ia[p]);
        } else {
            q += 1;
            rb += nu.weight(ib[q]);
        }
    }
    CouplingPlan { entries }
}

fn cost_matrix(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure) -> Vec<f64> {
    let mut c = Vec::with_capacity(mu.len() * nu.len());
    for i in 0..mu.len() {
        for j in 0..nu.len() {
            c.push(dist_sq(mu.point(i), nu.point(j)));
        }
    }
    c
}

fn assignment_plan(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure) -> CouplingPlan {
    let n = mu.len();
    let assign = assignment::hungarian(n, &cost_matrix(mu, nu));
    let w = 1.0 / n as f64;
    CouplingPlan { entries: assign.into_iter().enumerate().map(|(i, j)| (i, j, w)).collect() }
}

fn scaled(weights: &[f64]) -> Vec<i64> {
    weights.iter().map(|w| (w * WEIGHT_SCALE).round() as i64).collect()
}

fn flow_plan(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure) -> CouplingPlan {
    let mut a = scaled(mu.weights());
    let mut b = scaled(nu.weights());
    // Rounding may leave the totals a few units apart; absorb the gap in the
    // largest entry of the lighter side.
    let (sa, sb): (i64, i64) = (a.iter().sum(), b.iter().sum());
    let fix = |v: &mut Vec<i64>, by: i64| {
        let k = (0..v.len()).max_by_key(|&k| v[k]).unwrap();
        v[k] += by;
    };
    if sa < sb {
        fix(&mut a, sb - sa);
    } else if sb < sa {
        fix(&mut b, sa - sb);
    }
    let total = a.iter().sum::<i64>() as f64;
    let sol = flow::transport(&a, &b, &cost_matrix(mu, nu));
    CouplingPlan { entries: sol.flows.into_iter().map(|(i, j, f)| (i, j, f as f64 / total)).collect() }
}

/// Exhaustive search over permutations for uniform measures of equal size.
pub fn brute_force_w2(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure) -> Result<f64> {
    check_dims(mu, nu)?;
    let n = mu.len();
    if n != nu.len() {
        return Err(Error::UnequalSupportSizes { left: n, right: nu.len() });
    }
    if n > BRUTE_FORCE_LIMIT {
        return Err(Error::TooLarge { limit: BRUTE_FORCE_LIMIT, found: n });
    }
    if !mu.has_uniform_weights() || !nu.has_uniform_weights() {
        return Err(Error::InvalidParameter("brute force needs uniform weights".into()));
    }
    let c = cost_matrix(mu, nu);
    let mut perm: Vec<usize> = (0..n).collect();
    let eval = |p: &[usize]| p.iter().enumerate().map(|(i, &j)| c[i * n + j]).sum::<f64>();
    let mut best = eval(&perm);
    // Heap's algorithm.
    let mut counter = vec![0usize; n];
    let mut i = 1;
    while i < n {
        if counter[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(counter[i], i);
            }
            best = best.min(eval(&perm));
            counter[i] += 1;
            i = 1;
        } else {
            counter[i] = 0;
            i += 1;
        }
    }
    Ok((best / n as f64).sqrt())
}

/// Sampling budget for [`w2_smoothed`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplingBudget {
    pub samples: usize,
    pub reps: usize,
}

impl Default for SamplingBudget {
    fn default() -> Self {
        Self { samples: 512, reps: 32 }
    }
}

/// Exact `W_2` between two uniform clouds of equal size.
pub fn w2_uniform_clouds(x: &[Vec<f64>], y: &[Vec<f64>]) -> f64 {
    let n = x.len();
    if x[0].len() == 1 {
        let mut a: Vec<f64> = x.iter().map(|p| p[0]).collect();
        let mut b: Vec<f64> = y.iter().map(|p| p[0]).collect();
        a.sort_by(f64::total_cmp);
        b.sort_by(f64::total_cmp);
        return (a.iter().zip(&b).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / n as f64).sqrt();
    }
    let mut c = Vec::with_capacity(n * n);
    for p in x {
        for q in y {
            c.push(dist_sq(p, q));
        }
    }
    let assign = assignment::hungarian(n, &c);
    (assign.iter().enumerate().map(|(i, &j)| c[i * n + j]).sum::<f64>() / n as f64).sqrt()
}

/// Sampled estimate of `W_2(μ * N_ρ, ν * N_ρ)`.
///
/// Each replicate draws the same uniforms (atom selection) and the same
/// Gaussian noise for both measures, then solves the empirical problem
/// exactly. Returns the replicate mean and its standard error.
pub fn w2_smoothed(
    mu: &EmpiricalMeasure,
    nu: &EmpiricalMeasure,
    rho: f64,
    budget: SamplingBudget,
    seed: u64,
) -> Result<Estimate> {
    check_dims(mu, nu)?;
    if !(rho > 0.0) {
        return Err(Error::InvalidParameter(format!("bandwidth {rho} must be positive")));
    }
    if budget.samples == 0 || budget.reps == 0 {
        return Err(Error::InvalidParameter("empty sampling budget".into()));
    }
    let d = mu.dim();
    let (cm, cn) = (mu.cumulative_weights(), nu.cumulative_weights());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = Vec::with_capacity(budget.reps);
    for _ in 0..budget.reps {
        let mut x = Vec::with_capacity(budget.samples);
        let mut y = Vec::with_capacity(budget.samples);
        for _ in 0..budget.samples {
            let u: f64 = rng.random();
            let z: Vec<f64> = (0..d).map(|_| rho * rng.sample::<f64, _>(StandardNormal)).collect();
            let (a, b) = (mu.point(mu.atom_for_uniform(&cm, u)), nu.point(nu.atom_for_uniform(&cn, u)));
            x.push(a.iter().zip(&z).map(|(a, z)| a + z).collect());
            y.push(b.iter().zip(&z).map(|(b, z)| b + z).collect());
        }
        values.push(w2_uniform_clouds(&x, &y));
    }
    Ok(mean_and_stderr(&values))
}

/// Upper bound on the unsmoothed distance from a smoothed one:
/// `W_2 <= W_2^(ρ) + 2ρ sqrt(d + 2)`.
pub fn debias_smoothed(value: f64, rho: f64, d: usize) -> f64 {
    value + 2.0 * rho * ((d + 2) as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(points: &[&[f64]], w: Option<&[f64]>) -> EmpiricalMeasure {
        EmpiricalMeasure::from_points(&points.iter().map(|p| p.to_vec()).collect::<Vec<_>>(), w).unwrap()
    }

    #[test]
    fn dirac_pair() {
        let (w, plan) = w2_exact(&m(&[&[0.0]], None), &m(&[&[1.0]], None)).unwrap();
        assert_eq!(w, 1.0);
        assert_eq!(plan.entries, vec![(0, 0, 1.0)]);
    }

    #[test]
    fn two_point_one_dimensional() {
        let mu = m(&[&[0.0], &[1.0]], None);
        let nu = m(&[&[0.0], &[2.0]], None);
        let (w, _) = w2_exact(&mu, &nu).unwrap();
        assert!((w - 0.5f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn flow_matches_split_atom_brute_force() {
        // Weights in sixths: splitting atoms into copies gives a uniform
        // problem the brute force can solve.
        let mu = m(&[&[0.0, 0.0], &[1.0, 0.5], &[-0.5, 2.0]], Some(&[2.0, 1.0, 3.0]));
        let nu = m(&[&[0.3, 0.1], &[2.0, 2.0]], Some(&[4.0, 2.0]));
        let (w, plan) = w2_exact(&mu, &nu).unwrap();
        let split = |pts: &[&[f64]], counts: &[usize]| {
            let mut out = Vec::new();
            for (p, &c) in pts.iter().zip(counts) {
                for _ in 0..c {
                    out.push(p.to_vec());
                }
            }
            EmpiricalMeasure::from_points(&out, None).unwrap()
        };
        let mu6 = split(&[&[0.0, 0.0], &[1.0, 0.5], &[-0.5, 2.0]], &[2, 1, 3]);
        let nu6 = split(&[&[0.3, 0.1], &[2.0, 2.0]], &[4, 2]);
        let bf = brute_force_w2(&mu6, &nu6).unwrap();
        assert!((w - bf).abs() < 1e-9);
        let (a, b) = plan.marginals(3, 2);
        for (x, y) in a.iter().zip(mu.weights()) {
            assert!((x - y).abs() < 1e-11);
        }
        for (x, y) in b.iter().zip(nu.weights()) {
            assert!((x - y).abs() < 1e-11);
        }
    }

    #[test]
    fn brute_force_errors() {
        let a = m(&[&[0.0], &[1.0]], None);
        let b = m(&[&[0.0]], None);
        assert!(matches!(brute_force_w2(&a, &b), Err(Error::UnequalSupportSizes { .. })));
        let big: Vec<Vec<f64>> = (0..9).map(|i| vec![i as f64]).collect();
        let big = EmpiricalMeasure::from_points(&big, None).unwrap();
        assert!(matches!(brute_force_w2(&big, &big), Err(Error::TooLarge { .. })));
    }

    #[test]
    fn smoothed_estimator_examples() {
        let d0 = m(&[&[0.0]], None);
        let d1 = m(&[&[1.0]], None);
        let same = w2_smoothed(&d0, &d0, 1.0, SamplingBudget::default(), 1).unwrap();
        assert_eq!(same.value, 0.0);
        let shift = w2_smoothed(&d0, &d1, 1.0, SamplingBudget::default(), 1).unwrap();
        assert!(shift.value <= 1.0 + 1e-12 && shift.value > 0.99);
        assert_eq!(debias_smoothed(0.0, 1.0, 2), 4.0);
    }

    #[test]
    fn dimension_mismatch() {
        let a = m(&[&[0.0]], None);
        let b = m(&[&[0.0, 1.0]], None);
        assert!(matches!(w2_exact(&a, &b), Err(Error::DimensionMismatch { .. })));
    }
}
