mod common;

use bellman_core::dyadic::{multiscale_bound, DyadicSpec};
use bellman_core::measures::EmpiricalMeasure;
use common::*;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn atomic_sum_matches_direct_summation() {
    let mu = EmpiricalMeasure::from_points(&[vec![0.3, -0.2], vec![1.7, 0.1], vec![-2.5, 3.2]], None).unwrap();
    let nu = EmpiricalMeasure::from_points(&[vec![0.2, 0.4], vec![-1.1, -0.9]], Some(&[0.3, 0.7])).unwrap();
    let spec = DyadicSpec { c_d: 1.3, n_max: 3, l_max: 3 };
    let fast = multiscale_bound(&mu, &nu, &spec).unwrap().partial_sum;
    let naive = naive_multiscale_sum(&mu, &nu, 1.3, 3, 3, None);
    assert!((fast - naive).abs() < 1e-12 * naive.max(1.0));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn smoothed_sum_matches_direct_summation(seed in 0u64..10_000, d in 1usize..=2, rho in 0.05f64..1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (mu, nu) = (weighted_measure(&mut rng, d, 3, 3.0), weighted_measure(&mut rng, d, 4, 3.0));
        let spec = DyadicSpec { c_d: 1.0, n_max: 3, l_max: 4 };
        let fast = multiscale_bound(&mu.smoothed(rho).unwrap(), &nu.smoothed(rho).unwrap(), &spec).unwrap().partial_sum;
        let naive = naive_multiscale_sum(&mu, &nu, 1.0, 3, 4, Some(rho));
        prop_assert!((fast - naive).abs() < 1e-9);
    }

    #[test]
    fn sum_is_symmetric_and_vanishes_on_diagonal(seed in 0u64..10_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (mu, nu) = (weighted_measure(&mut rng, 2, 3, 3.0), weighted_measure(&mut rng, 2, 2, 3.0));
        let spec = DyadicSpec { c_d: 1.0, n_max: 3, l_max: 3 };
        let a = multiscale_bound(&mu, &nu, &spec).unwrap();
        let b = multiscale_bound(&nu, &mu, &spec).unwrap();
        prop_assert!((a.partial_sum - b.partial_sum).abs() < 1e-12);
        prop_assert_eq!(multiscale_bound(&mu, &mu, &spec).unwrap().partial_sum, 0.0);
    }
}
