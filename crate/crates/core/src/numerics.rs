//! Special functions and quadrature rules shared by the other modules.

use std::f64::consts::{PI, SQRT_2};

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Standard normal density.
pub fn normal_pdf(z: f64) -> f64 {
    if z.is_infinite() {
        return 0.0;
    }
    INV_SQRT_2PI * (-0.5 * z * z).exp()
}

/// Standard normal distribution function.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / SQRT_2)
}

/// Standard normal survival function `1 - cdf(z)`, accurate in the upper tail.
pub fn normal_sf(z: f64) -> f64 {
    0.5 * libm::erfc(z / SQRT_2)
}

/// `P(lo < Z <= hi)` for a standard normal `Z`, computed from whichever tail
/// avoids cancellation.
pub fn normal_interval(lo: f64, hi: f64) -> f64 {
    if hi <= lo {
        return 0.0;
    }
    if lo >= 0.0 {
        normal_sf(lo) - normal_sf(hi)
    } else if hi <= 0.0 {
        normal_cdf(hi) - normal_cdf(lo)
    } else {
        1.0 - normal_cdf(lo) - normal_sf(hi)
    }
}

/// `z * pdf(z)`, zero at infinity.
pub fn z_pdf(z: f64) -> f64 {
    if z.is_infinite() {
        0.0
    } else {
        z * normal_pdf(z)
    }
}

/// Partial moments `(P, E[Z 1], E[Z^2 1])` of a standard normal on `(lo, hi]`.
pub fn normal_partial_moments(lo: f64, hi: f64) -> (f64, f64, f64) {
    if hi <= lo {
        return (0.0, 0.0, 0.0);
    }
    let p = normal_interval(lo, hi);
    let m1 = normal_pdf(lo) - normal_pdf(hi);
    let m2 = p + z_pdf(lo) - z_pdf(hi);
    (p, m1, m2)
}

/// Inverse of the standard normal distribution function, by bisection refined
/// with Newton steps.
pub fn normal_quantile(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    let (mut lo, mut hi) = (-40.0_f64, 40.0_f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if normal_cdf(mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-15 * (1.0 + mid.abs()) {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// `E|Y|^k` for `Y ~ N(0, rho^2 I_d)`.
pub fn gaussian_abs_moment(d: usize, k: f64, rho: f64) -> f64 {
    let d = d as f64;
    rho.powf(k) * 2f64.powf(k / 2.0) * (libm::lgamma((d + k) / 2.0) - libm::lgamma(d / 2.0)).exp()
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, x);
            dp = d;
            let step = p / d;
            x -= step;
            if step.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let n = n as f64;
    (p1, n * (x * p1 - p0) / (x * x - 1.0))
}

/// Smooth compactly supported bump `exp(-1/(1-x^2))` on `(-1, 1)`.
pub fn bump(x: f64) -> f64 {
    if x.abs() >= 1.0 {
        0.0
    } else {
        (-1.0 / (1.0 - x * x)).exp()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cdf_reference_values() {
        assert!((normal_cdf(0.0) - 0.5).abs() < 1e-16);
        assert!((normal_cdf(1.0) - 0.841_344_746_068_542_9).abs() < 1e-15);
        assert!((normal_interval(0.0, 1.0) - 0.341_344_746_068_542_9).abs() < 1e-15);
        let tail = normal_sf(8.0);
        assert!((tail / 6.220_960_574_271_785e-16 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn interval_far_tail_is_relatively_accurate() {
        let p = normal_interval(8.0, 9.0);
        let expected = 6.220_960_574_271_785e-16 - 1.128_588_405_953_034_5e-19;
        assert!((p / expected - 1.0).abs() < 1e-12);
    }

    #[test]
    fn quantile_inverts_cdf() {
        for &p in &[1e-10, 0.01, 0.3, 0.5, 0.9, 0.999_999] {
            assert!((normal_cdf(normal_quantile(p)) - p).abs() < 1e-14 * p.max(1e-3) / 1e-3);
        }
    }

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre(8);
        for deg in 0..16 {
            let q: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(deg)).sum();
            let exact = if deg % 2 == 1 { 0.0 } else { 2.0 / (deg as f64 + 1.0) };
            assert!((q - exact).abs() < 1e-14, "degree {deg}");
        }
    }

    #[test]
    fn gaussian_moments() {
        assert!((gaussian_abs_moment(1, 2.0, 1.5) - 2.25).abs() < 1e-13);
        assert!((gaussian_abs_moment(3, 2.0, 1.0) - 3.0).abs() < 1e-13);
        assert!((gaussian_abs_moment(1, 1.0, 1.0) - (2.0 / PI).sqrt()).abs() < 1e-14);
    }

    #[test]
    fn partial_moments_full_line() {
        let (p, m1, m2) = normal_partial_moments(f64::NEG_INFINITY, f64::INFINITY);
        assert!((p - 1.0).abs() < 1e-15 && m1.abs() < 1e-15 && (m2 - 1.0).abs() < 1e-15);
    }
}
