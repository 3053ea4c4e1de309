use std::collections::BTreeMap;

use bellman_core::measures::EmpiricalMeasure;
use bellman_core::mfc::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn coeffs(key: &str) -> CoefficientSet {
    registry(key, &BTreeMap::new()).unwrap()
}

fn line(pts: &[f64]) -> EmpiricalMeasure {
    EmpiricalMeasure::from_points(&pts.iter().map(|&p| vec![p]).collect::<Vec<_>>(), None).unwrap()
}

#[test]
fn heat_value_at_origin() {
    let c = coeffs("heat-cos");
    let v = value_policy_search(&c, 0.0, &line(&[0.0]), &constant_policies(1), &SimParams::new(100_000, 200, 0.0, 1)).unwrap();
    assert_eq!(v.values.len(), 1);
    assert!((v.value.value - (-0.5f64).exp()).abs() < 0.01);
}

#[test]
fn positive_drift_wins_for_increasing_terminal_reward() {
    let c = coeffs("bangbang");
    let v = value_policy_search(&c, 0.0, &line(&[-0.3, 0.2]), &constant_policies(2), &SimParams::new(2000, 50, 0.0, 3)).unwrap();
    assert_eq!(c.controls[v.best], vec![1.0]);
}

#[test]
fn enlarging_policy_family_never_lowers_value() {
    let c = coeffs("bangbang");
    let mu = line(&[0.1, -0.4]);
    let p = SimParams::new(2000, 40, 0.1, 4);
    let small = value_policy_search(&c, 0.0, &mu, &constant_policies(2)[..1], &p).unwrap();
    let mut family = constant_policies(2);
    family.extend(threshold_policies(0, 1, &[-0.5, 0.0, 0.5], (-2.0, 2.0), 8).unwrap());
    let big = value_policy_search(&c, 0.0, &mu, &family, &p).unwrap();
    assert!(big.value.value >= small.value.value - 3.0 * small.value.stderr);
}

#[test]
fn eps_gaps_track_closed_form_and_stay_linear() {
    let c = coeffs("heat-cos");
    let tab = eps_gap_experiment(&c, 0.0, &line(&[0.0]), &[0.0, 0.1, 0.2, 0.4], &constant_policies(1), &SimParams::new(20_000, 100, 0.0, 5)).unwrap();
    assert_eq!(tab.rows[0].gap, 0.0);
    for r in &tab.rows[1..] {
        let exact = (-0.5f64).exp() - (-(1.0 + r.eps * r.eps) / 2.0).exp();
        assert!((r.gap - exact).abs() < 0.01, "{} {}", r.gap, exact);
    }
    assert!(tab.rows.windows(2).all(|w| w[1].gap >= w[0].gap));
    assert!(tab.within_envelope);
}

#[test]
fn dpp_on_heat_instance_matches_closed_form() {
    let c = coeffs("heat-cos");
    let mu = line(&[0.3, -0.8]);
    let r = dpp_check(&c, 0.0, 0.5, &mu, &constant_policies(1), &SimParams::new(20_000, 100, 0.0, 6)).unwrap();
    let exact = (-0.5f64).exp() * (0.5 * (0.3f64.cos() + 0.8f64.cos()));
    assert!(r.holds, "{r:?}");
    assert!((r.one_stage.value - exact).abs() < 0.01 && (r.two_stage.value - exact).abs() < 0.01);
}

#[test]
fn dpp_with_equal_times_is_identity() {
    let c = coeffs("tanh-interact");
    let r = dpp_check(&c, 0.2, 0.2, &line(&[0.5]), &constant_policies(1), &SimParams::new(4000, 40, 0.1, 7)).unwrap();
    assert!(r.holds, "{r:?}");
}

#[test]
fn translation_pairs_respect_unit_lipschitz_bound() {
    let c = coeffs("heat-cos");
    let mu = line(&[-0.4, 0.1, 0.9]);
    let pairs: Vec<_> = [0.2, 0.5, -0.7].iter().map(|&v| (mu.clone(), mu.translate(&[v]))).collect();
    let r = lipschitz_check(&c, 0.0, &pairs, &constant_policies(1), &SimParams::new(5000, 50, 0.0, 8), Some(1.0)).unwrap();
    assert!(r.violations.is_empty(), "{r:?}");
    assert!(matches!(
        lipschitz_check(&c, 0.0, &[(mu.clone(), mu)], &constant_policies(1), &SimParams::new(10, 5, 0.0, 8), None),
        Err(bellman_core::Error::DegeneratePair { index: 0 })
    ));
}

#[test]
fn pathwise_coupling_gap_is_linear_in_eps() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut worst: f64 = 0.0;
    let mut runs = Vec::new();
    for inst in 0..10 {
        let key = ["heat-cos", "tanh-interact", "bangbang"][inst % 3];
        let mu = line(&[rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]);
        for eps in [0.05, 0.1, 0.2] {
            let c = coeffs(key);
            let pol = constant_policies(c.controls.len()).remove(0);
            let r = coupled_run(&c, &pol, 0.0, &mu, &SimParams::new(500, 50, eps, inst as u64)).unwrap();
            worst = worst.max(r.sup_gap_max / eps);
            runs.push((eps, r.sup_gap_max));
        }
    }
    // Additive noise of size ε with Lipschitz drift: the gap is ε times a
    // path functional independent of ε on these instances.
    assert!(worst.is_finite());
    assert!(runs.iter().all(|(eps, g)| *g <= worst * eps + 1e-12));
}

#[test]
fn mollified_terminal_reward_obeys_error_and_lipschitz_estimates() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for key in ["heat-cos", "tanh-interact", "bangbang"] {
        let c = coeffs(key);
        for n in 1..=3 {
            let mo = mollify(&c, n, 4, MollifyConfig::default()).unwrap();
            for _ in 0..5 {
                let x: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
                let z: Vec<f64> = x.iter().map(|v| v + rng.random_range(-0.5..0.5)).collect();
                for i in 0..n {
                    assert!((mo.g(i, &x) - mo.g_plain(i, &x)).abs() <= mo.space_error_bound(i) + 1e-12);
                    assert!((mo.g(i, &x) - mo.g(i, &z)).abs() <= mo.lipschitz_bound(i, &x, &z) + 1e-12);
                }
            }
        }
    }
}

#[test]
fn ito_second_moment_grows_with_time() {
    let u = bellman_core::mfc::ito::second_moment_candidate(1);
    let r = ito_check(&u, &[0.0], &[vec![1.0]], 0.0, 0.5, &line(&[0.0, 1.0]), 10_000, 400, 14).unwrap();
    assert!(r.residual < 2e-2, "{r:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn simulation_is_deterministic_and_reward_relabeling_invariant(seed in 0u64..1000, a in -1.0f64..1.0, b in -1.0f64..1.0) {
        let c = coeffs("tanh-interact");
        let pol = constant_policies(1).remove(0);
        let p = SimParams::new(64, 20, 0.1, seed);
        let x = simulate(&c, &pol, 0.0, &line(&[a, b]), &p).unwrap();
        prop_assert_eq!(&x, &simulate(&c, &pol, 0.0, &line(&[a, b]), &p).unwrap());
        let mut y = x.clone();
        let (n, d) = (y.particles, y.dim);
        for k in 0..y.times.len() {
            let row = &mut y.states[k * n * d..(k + 1) * n * d];
            row.reverse();
        }
        for k in 0..y.steps() {
            y.controls[k * n..(k + 1) * n].reverse();
        }
        let (r1, r2) = (reward(&c, &x), reward(&c, &y));
        prop_assert!((r1.value - r2.value).abs() < 1e-12);
    }

    #[test]
    fn mollifying_constants_is_exact(v in -1.0f64..1.0, n in 1usize..=3, m in 1usize..8) {
        let mut c = coeffs("heat-cos");
        c.g = std::sync::Arc::new(move |_, _| v);
        let mo = mollify(&c, n, m, MollifyConfig::default()).unwrap();
        let x: Vec<f64> = (0..n).map(|k| k as f64 - 0.3).collect();
        prop_assert!((mo.g(0, &x) - v).abs() < 1e-14);
    }
}
