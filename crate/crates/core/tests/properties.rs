mod common;

use bellman_core::dyadic::{annulus_mass, enumerate_cells, multiscale_bound, DyadicSpec};
use bellman_core::measures::{EmpiricalMeasure, HalfOpenBox, Measure};
use bellman_core::transport::{brute_force_w2, w2_exact};
use common::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn exact_distance_matches_brute_force(seed in 0u64..100_000, d in 1usize..=3) {
        let mut r = rng(seed);
        let k = r.random_range(1..=6);
        let (mu, nu) = (uniform_measure(&mut r, d, k, 2.0), uniform_measure(&mut r, d, k, 2.0));
        let exact = w2_exact(&mu, &nu).unwrap().0;
        let brute = brute_force_w2(&mu, &nu).unwrap();
        prop_assert!((exact - brute).abs() < 1e-9, "{} vs {}", exact, brute);
    }

    #[test]
    fn metric_axioms(seed in 0u64..100_000, d in 1usize..=3) {
        let mut r = rng(seed);
        let m: Vec<EmpiricalMeasure> = (0..3).map(|_| weighted_measure(&mut r, d, 4, 2.0)).collect();
        let w = |i: usize, j: usize| w2_exact(&m[i], &m[j]).unwrap().0;
        prop_assert_eq!(w(0, 1), w(1, 0));
        prop_assert!(w(0, 2) <= w(0, 1) + w(1, 2) + 1e-9);
        prop_assert!(w(0, 0).abs() < 1e-9);
    }

    #[test]
    fn explicit_couplings_never_beat_the_optimum(seed in 0u64..100_000, d in 1usize..=3) {
        let mut r = rng(seed);
        let (mu, nu) = (uniform_measure(&mut r, d, 5, 2.0), uniform_measure(&mut r, d, 5, 2.0));
        let shift: Vec<usize> = (0..5).map(|k| (k + seed as usize) % 5).collect();
        let cost: f64 = (0..5)
            .map(|i| mu.point(i).iter().zip(nu.point(shift[i])).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / 5.0)
            .sum();
        prop_assert!(w2_exact(&mu, &nu).unwrap().0.powi(2) <= cost + 1e-12);
    }

    #[test]
    fn translation_is_optimal_for_shifts(seed in 0u64..100_000, d in 1usize..=3) {
        let mut r = rng(seed);
        let mu = weighted_measure(&mut r, d, 6, 2.0);
        let v: Vec<f64> = (0..d).map(|_| r.random_range(-1.5..1.5)).collect();
        let len = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        prop_assert!((w2_exact(&mu, &mu.translate(&v)).unwrap().0 - len).abs() < 1e-9);
    }

    #[test]
    fn smoothed_moment_and_truncation(seed in 0u64..100_000, d in 1usize..=3, rho in 0.01f64..2.0, k in 0.1f64..3.0) {
        let mut r = rng(seed);
        let mu = weighted_measure(&mut r, d, 5, 3.0);
        let m2 = mu.moment(2.0).unwrap();
        let sm = mu.smoothed(rho).unwrap().moment(2.0).unwrap();
        prop_assert_eq!(sm.stderr, 0.0);
        prop_assert!((sm.value - (m2 + d as f64 * rho * rho)).abs() <= 1e-12 * (1.0 + sm.value));
        prop_assert!(mu.truncate(k).moment(2.0).unwrap() <= m2);
    }

    #[test]
    fn cell_mass_is_additive_and_total(seed in 0u64..100_000, d in 1usize..=2, rho in 0.05f64..0.5) {
        let mut r = rng(seed);
        let mu = weighted_measure(&mut r, d, 3, 1.0);
        let sm = mu.smoothed(rho).unwrap();
        let cut = r.random_range(-1.0..1.0);
        let whole = HalfOpenBox::centered(d, 1.0 + 8.0 * rho + 1.0);
        let mut left = whole.clone();
        left.upper[0] = cut;
        let mut right = whole.clone();
        right.lower[0] = cut;
        prop_assert!((sm.cell_mass(&left) + sm.cell_mass(&right) - sm.cell_mass(&whole)).abs() < 1e-14);
        prop_assert!((sm.cell_mass(&whole) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn sampling_is_reproducible(seed in 0u64..100_000, count in 1usize..50) {
        let mu = weighted_measure(&mut rng(seed), 2, 3, 1.0);
        prop_assert_eq!(mu.sample(count, seed), mu.sample(count, seed));
        let sm = mu.smoothed(0.3).unwrap();
        prop_assert_eq!(sm.sample(count, seed), sm.sample(count, seed));
    }

    #[test]
    fn cells_partition_each_annulus(seed in 0u64..100_000, d in 1usize..=2, n in 0u32..4, l in 0u32..4) {
        let mu = weighted_measure(&mut rng(seed), d, 6, 10.0);
        let sm = mu.smoothed(0.7).unwrap();
        for m in [&mu as &dyn Measure, &sm as &dyn Measure] {
            let s: f64 = enumerate_cells(n, l, d).iter().map(|c| c.mass(m)).sum();
            prop_assert!((s - annulus_mass(m, n)).abs() < 1e-10);
        }
    }

    #[test]
    fn partial_sum_is_monotone_in_truncation(seed in 0u64..100_000, d in 1usize..=2) {
        let mut r = rng(seed);
        let (mu, nu) = (weighted_measure(&mut r, d, 3, 6.0), weighted_measure(&mut r, d, 3, 6.0));
        let s = |n, l| multiscale_bound(&mu, &nu, &DyadicSpec { c_d: 1.0, n_max: n, l_max: l }).unwrap().partial_sum;
        prop_assert!(s(2, 3) <= s(3, 3) + 1e-12);
        prop_assert!(s(3, 3) <= s(3, 4) + 1e-12);
    }

    #[test]
    fn unit_cube_measures_use_only_first_band(seed in 0u64..100_000, d in 1usize..=2) {
        let mut r = rng(seed);
        let (mu, nu) = (weighted_measure(&mut r, d, 3, 0.99), weighted_measure(&mut r, d, 3, 0.99));
        let a = multiscale_bound(&mu, &nu, &DyadicSpec { c_d: 1.0, n_max: 0, l_max: 4 }).unwrap().partial_sum;
        let b = multiscale_bound(&mu, &nu, &DyadicSpec { c_d: 1.0, n_max: 4, l_max: 4 }).unwrap().partial_sum;
        prop_assert!((a - b).abs() < 1e-14);
    }
}
