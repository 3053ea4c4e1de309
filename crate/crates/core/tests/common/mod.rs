#![allow(dead_code)]

use bellman_core::measures::EmpiricalMeasure;
use bellman_core::numerics::normal_cdf;
use rand::Rng;

/// Mass of the box `(lo, hi]` under an atomic measure, or under its Gaussian
/// smoothing when `rho` is given.
pub fn box_mass(mu: &EmpiricalMeasure, lo: &[f64], hi: &[f64], rho: Option<f64>) -> f64 {
    let mut total = 0.0;
    for (x, w) in mu.atoms() {
        let mut p = 1.0;
        for k in 0..x.len() {
            p *= match rho {
                None => ((lo[k] < x[k] && x[k] <= hi[k]) as u8) as f64,
                Some(r) => (normal_cdf((hi[k] - x[k]) / r) - normal_cdf((lo[k] - x[k]) / r)).max(0.0),
            };
        }
        total += w * p;
    }
    total
}

/// Signed mass differences of every cell `Q ∩ B_n`, for each annulus `n`,
/// level `l` and cube `Q` of side `2^{n+1-l}` tiling `(-2^n, 2^n]^d`.
pub fn cell_differences(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure, n_max: u32, l_max: u32, rho: Option<f64>) -> Vec<(u32, u32, f64)> {
    let d = mu.dim();
    let mut out = Vec::new();
    for n in 0..=n_max {
        let r = 2f64.powi(n as i32);
        for l in 0..=l_max {
            let side = 2.0 * r / 2f64.powi(l as i32);
            let per = 1usize << l;
            for lin in 0..per.pow(d as u32) {
                let mut lo = vec![0.0; d];
                let mut hi = vec![0.0; d];
                let mut rest = lin;
                for k in 0..d {
                    let j = rest % per;
                    rest /= per;
                    lo[k] = -r + j as f64 * side;
                    hi[k] = lo[k] + side;
                }
                let mut m = box_mass(mu, &lo, &hi, rho) - box_mass(nu, &lo, &hi, rho);
                if n > 0 {
                    let h = r / 2.0;
                    let ilo: Vec<f64> = lo.iter().map(|v| v.max(-h)).collect();
                    let ihi: Vec<f64> = hi.iter().map(|v| v.min(h)).collect();
                    if ilo.iter().zip(&ihi).all(|(a, b)| a < b) {
                        m -= box_mass(mu, &ilo, &ihi, rho) - box_mass(nu, &ilo, &ihi, rho);
                    }
                }
                out.push((n, l, m));
            }
        }
    }
    out
}

/// Direct triple sum `c Σ_n 4^n Σ_l 4^{-l} Σ_B |μ(B) - ν(B)|`.
pub fn naive_multiscale_sum(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure, c: f64, n_max: u32, l_max: u32, rho: Option<f64>) -> f64 {
    c * cell_differences(mu, nu, n_max, l_max, rho)
        .into_iter()
        .map(|(n, l, m)| 4f64.powi(n as i32) * 4f64.powi(-(l as i32)) * m.abs())
        .sum::<f64>()
}

/// Direct evaluation of the gauge series with offsets `2^{-(4n + 2dl)}`.
pub fn naive_gauge(t: f64, s: f64, mu: &EmpiricalMeasure, nu: &EmpiricalMeasure, c: f64, n_max: u32, l_max: u32, rho: f64) -> f64 {
    let d = mu.dim() as i32;
    let series: f64 = cell_differences(mu, nu, n_max, l_max, Some(rho))
        .into_iter()
        .map(|(n, l, m)| {
            let delta = 2f64.powi(-(4 * n as i32 + 2 * d * l as i32));
            4f64.powi(n as i32) * 4f64.powi(-(l as i32)) * ((m * m + delta * delta).sqrt() - delta)
        })
        .sum();
    (t - s).powi(2) + c * series
}

pub fn uniform_measure(rng: &mut impl Rng, d: usize, atoms: usize, scale: f64) -> EmpiricalMeasure {
    let pts: Vec<Vec<f64>> = (0..atoms).map(|_| (0..d).map(|_| rng.random_range(-scale..scale)).collect()).collect();
    EmpiricalMeasure::from_points(&pts, None).unwrap()
}

pub fn weighted_measure(rng: &mut impl Rng, d: usize, atoms: usize, scale: f64) -> EmpiricalMeasure {
    let pts: Vec<Vec<f64>> = (0..atoms).map(|_| (0..d).map(|_| rng.random_range(-scale..scale)).collect()).collect();
    let w: Vec<f64> = (0..atoms).map(|_| rng.random_range(0.1..1.0)).collect();
    EmpiricalMeasure::from_points(&pts, Some(&w)).unwrap()
}
