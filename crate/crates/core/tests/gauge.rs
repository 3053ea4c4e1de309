mod common;

use bellman_core::dyadic::{enumerate_cells, multiscale_bound, DyadicSpec};
use bellman_core::gauge::axioms::{audit_gauge_axioms, check_gauge_axioms, AxiomConfig};
use bellman_core::gauge::bp::{borwein_preiss, verify_borwein_preiss, CandidateSet};
use bellman_core::gauge::*;
use bellman_core::measures::EmpiricalMeasure;
use bellman_core::numerics::normal_cdf;
use bellman_core::Error;
use common::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn line(pts: &[f64]) -> EmpiricalMeasure {
    EmpiricalMeasure::from_points(&pts.iter().map(|&p| vec![p]).collect::<Vec<_>>(), None).unwrap()
}

fn small_spec() -> GaugeSpec {
    GaugeSpec { bandwidth: 1.0, c_d: 1.0, n_max: 3, l_max: 5, horizon: 1.0 }
}

#[test]
fn phi_cell_far_point_and_symmetric_cell() {
    let unit = &enumerate_cells(0, 0, 1)[0];
    assert!(phi_cell(&[50.0 * 0.1], unit, 0.1) < 1e-10);
    let v = phi_cell(&[0.0], unit, 0.6);
    assert!((v - (normal_cdf(1.0 / 0.6) - normal_cdf(-1.0 / 0.6))).abs() < 1e-15);
    assert_eq!(grad_phi_cell(&[0.0], unit, 0.6), vec![0.0]);
}

#[test]
fn huge_cell_hessian_trace_vanishes() {
    let big = &enumerate_cells(7, 0, 2)[0];
    let h = hess_phi_cell(&[0.0, 0.0], big, 0.5);
    assert!((h[0][0] + h[1][1]).abs() < 1e-12);
}

#[test]
fn time_term_only_for_equal_measures() {
    let mu = line(&[0.3, -1.2]);
    let r = rho2(&GaugePoint::new(1.0, mu.clone()), &GaugePoint::new(0.0, mu), &small_spec()).unwrap();
    assert_eq!(r.value, 1.0);
}

#[test]
fn gauge_matches_direct_summation() {
    let spec = GaugeSpec { bandwidth: 1.0, c_d: 1.0, n_max: 6, l_max: 10, horizon: 1.0 };
    let (p, q) = (GaugePoint::new(0.0, line(&[0.0])), GaugePoint::new(0.0, line(&[0.5])));
    let fast = rho2(&p, &q, &spec).unwrap().value;
    let naive = naive_gauge(0.0, 0.0, &p.mu, &q.mu, 1.0, 6, 10, 1.0);
    assert!((fast - naive).abs() < 1e-9, "{fast} vs {naive}");
}

#[test]
fn gauge_matches_direct_summation_in_two_dimensions() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let spec = GaugeSpec { bandwidth: 0.7, c_d: 1.3, n_max: 3, l_max: 4, horizon: 1.0 };
    for _ in 0..5 {
        let (mu, nu) = (weighted_measure(&mut rng, 2, 3, 2.0), weighted_measure(&mut rng, 2, 2, 2.0));
        let (t, s) = (rng.random_range(0.0..1.0), rng.random_range(0.0..1.0));
        let fast = rho2(&GaugePoint::new(t, mu.clone()), &GaugePoint::new(s, nu.clone()), &spec).unwrap().value;
        let naive = naive_gauge(t, s, &mu, &nu, 1.3, 3, 4, 0.7);
        assert!((fast - naive).abs() < 1e-9);
    }
}

#[test]
fn time_derivative_examples() {
    let mu = line(&[0.0]);
    let (p, q) = (GaugePoint::new(0.75, mu.clone()), GaugePoint::new(0.25, mu.clone()));
    assert_eq!(dt_rho2(&p, &q), 1.0);
    assert_eq!(dt_rho2(&p, &p), 0.0);
}

#[test]
fn measure_derivative_matches_lifted_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let spec = GaugeSpec { bandwidth: 0.8, c_d: 1.0, n_max: 3, l_max: 6, horizon: 1.0 };
    for d in 1..=2 {
        for _ in 0..4 {
            let mu = weighted_measure(&mut rng, d, 3, 1.5);
            let q = GaugePoint::new(0.2, weighted_measure(&mut rng, d, 2, 1.5));
            let atom = rng.random_range(0..mu.len());
            let dir = rng.random_range(0..d);
            let h = 1e-4;
            let bumped = |s: f64| {
                let mut pts = mu.points();
                pts[atom][dir] += s;
                let m = EmpiricalMeasure::from_points(&pts, Some(mu.weights())).unwrap();
                rho2(&GaugePoint::new(0.5, m), &q, &spec).unwrap().value
            };
            let fd = (bumped(h) - bumped(-h)) / (2.0 * h);
            let p = GaugePoint::new(0.5, mu.clone());
            let x = mu.point(atom).to_vec();
            let g = dmu_rho2(&p, &q, &spec, &x).unwrap();
            let an = mu.weight(atom) * g[dir];
            assert!((fd - an).abs() <= 1e-5 * an.abs().max(1e-3), "{fd} vs {an}");

            let gd = |s: f64| {
                let mut y = x.clone();
                y[dir] += s;
                dmu_rho2(&p, &q, &spec, &y).unwrap()
            };
            let hs = dxdmu_rho2(&p, &q, &spec, &x).unwrap();
            let (gp, gm) = (gd(h), gd(-h));
            for i in 0..d {
                let fd2 = (gp[i] - gm[i]) / (2.0 * h);
                assert!((fd2 - hs[i][dir]).abs() <= 1e-5 * hs[i][dir].abs().max(1e-3));
            }
        }
    }
}

#[test]
fn derivative_is_zero_for_equal_measures() {
    let mu = line(&[0.4, -0.9, 1.3]);
    let (p, q) = (GaugePoint::new(0.1, mu.clone()), GaugePoint::new(0.7, mu));
    assert_eq!(dmu_rho2(&p, &q, &small_spec(), &[0.2]).unwrap(), vec![0.0]);
    assert_eq!(dxdmu_rho2(&p, &q, &small_spec(), &[0.2]).unwrap(), vec![vec![0.0]]);
}

#[test]
fn calibrated_derivative_bounds_hold_out_of_sample() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let spec = GaugeSpec { bandwidth: 1.0, c_d: 1.0, n_max: 3, l_max: 5, horizon: 1.0 };
    let mut corpus = || -> Vec<(GaugePoint, GaugePoint)> {
        (0..10)
            .map(|_| {
                (
                    GaugePoint::new(0.0, weighted_measure(&mut rng, 1, 3, 2.0)),
                    GaugePoint::new(0.0, weighted_measure(&mut rng, 1, 3, 2.0)),
                )
            })
            .collect()
    };
    let (fit, held) = (corpus(), corpus());
    let xs: Vec<Vec<f64>> = (0..9).map(|k| vec![-4.0 + k as f64]).collect();
    let cal = calibrate_derivative_constant(&spec, &fit, &xs).unwrap();
    assert!(cal.first.is_finite() && cal.first > 0.0 && cal.second > 0.0);
    for (p, q) in &held {
        let md = measure_derivatives(p, q, &spec, &xs).unwrap();
        for (x, m) in xs.iter().zip(&md) {
            assert!(cal.admits(1.0, x, m));
        }
    }
}

#[test]
fn eta_threshold_value() {
    assert!((eta_eps(0.1, 1.0) - 7.8e-7).abs() < 1e-8);
}

#[test]
fn axioms_hold_on_diagonal_pairs() {
    let p = GaugePoint::new(0.4, line(&[0.1, 0.5]));
    let report = check_gauge_axioms(&small_spec(), &[(p.clone(), p)], &AxiomConfig::default()).unwrap();
    assert!(report.violations.is_empty());
}

#[test]
fn large_gauge_with_small_distance_is_not_a_violation() {
    let (p, q) = (GaugePoint::new(0.0, line(&[0.0])), GaugePoint::new(0.0, line(&[0.05])));
    let spec = small_spec();
    let r = rho2(&p, &q, &spec).unwrap().value;
    assert!(r > eta_eps(0.1, spec.c_d));
    let report = audit_gauge_axioms(&spec, &[(p, q)], &AxiomConfig::default()).unwrap();
    assert!(report.violations.is_empty());
}

#[test]
fn empty_pair_list_is_rejected() {
    assert!(audit_gauge_axioms(&small_spec(), &[], &AxiomConfig::default()).is_err());
}

fn random_candidates(rng: &mut ChaCha8Rng, count: usize) -> CandidateSet {
    CandidateSet::new(
        (0..count)
            .map(|_| GaugePoint::new(rng.random_range(0.0..1.0), uniform_measure(rng, 1, 2, 1.0)))
            .collect(),
    )
    .unwrap()
}

fn bp_spec() -> GaugeSpec {
    GaugeSpec { bandwidth: 1.0, c_d: 1.0, n_max: 3, l_max: 4, horizon: 1.0 }
}

#[test]
fn strict_maximum_as_start_is_returned_at_once() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let cands = random_candidates(&mut rng, 6);
    let g = vec![0.0, 0.1, 1.0, 0.3, 0.2, 0.0];
    let res = borwein_preiss(&cands, &g, 1e-9, 0.5, 2, &bp_spec()).unwrap();
    assert_eq!(res.tilde, 2);
    assert_eq!(res.perturbation.anchors.len(), 1);
    assert!(verify_borwein_preiss(&cands, &g, 1e-9, 0.5, &res).unwrap().all());
}

#[test]
fn constant_objective_stays_at_start() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let cands = random_candidates(&mut rng, 5);
    let g = vec![0.7; 5];
    let res = borwein_preiss(&cands, &g, 0.1, 0.5, 3, &bp_spec()).unwrap();
    assert_eq!(res.tilde, 3);
    assert_eq!(res.perturbation.value(&cands, &cands.points[3]).unwrap(), 0.0);
    assert!(verify_borwein_preiss(&cands, &g, 0.1, 0.5, &res).unwrap().all());
}

#[test]
fn start_outside_lambda_optimality_is_rejected() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let cands = random_candidates(&mut rng, 3);
    let r = borwein_preiss(&cands, &[0.0, 1.0, 0.5], 0.1, 0.5, 0, &bp_spec());
    assert!(matches!(r, Err(Error::PreconditionViolated(_))));
}

/// Exhaustive check of the three conclusions written directly from the gauge.
fn check_items(cands: &CandidateSet, g: &[f64], lambda: f64, delta: f64, tilde: usize, seq: &[usize], anchors: &[(usize, f64)]) -> bool {
    let spec = GaugeSpec { bandwidth: 1.0 / delta, ..bp_spec() };
    let r = |a: usize, b: usize| rho2(&cands.points[a], &cands.points[b], &spec).unwrap().value;
    let phi = |x: usize| anchors.iter().map(|&(k, w)| w * r(x, k)).sum::<f64>();
    let d2 = delta * delta;
    let top = g[tilde] - d2 * phi(tilde);
    let i = seq.iter().enumerate().all(|(k, &p)| r(tilde, p) <= lambda / (2f64.powi(k as i32) * d2));
    let ii = g[seq[0]] <= top;
    let iii = (0..cands.len()).filter(|&x| x != tilde).all(|x| g[x] - d2 * phi(x) < top);
    i && ii && iii
}

#[test]
fn random_lipschitz_objectives_satisfy_all_items() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..5 {
        let cands = random_candidates(&mut rng, 20);
        let g: Vec<f64> = cands.points.iter().map(|p| (p.t - 0.5).abs().neg_add(1.0) + 0.3 * p.mu.mean()[0].sin()).collect();
        let sup = g.iter().cloned().fold(f64::MIN, f64::max);
        let start = (0..20).find(|&k| g[k] >= sup - 0.1).unwrap();
        let res = borwein_preiss(&cands, &g, 0.1, 0.5, start, &bp_spec()).unwrap();
        assert!(verify_borwein_preiss(&cands, &g, 0.1, 0.5, &res).unwrap().all());
        assert!(check_items(&cands, &g, 0.1, 0.5, res.tilde, &res.sequence, &res.perturbation.anchors));
        let w: f64 = res.perturbation.anchors.iter().map(|a| a.1).sum();
        assert!((w - 2.0).abs() < 1e-12 || res.perturbation.anchors.len() == 1);
        let dt = res.perturbation.dt(&cands, &cands.points[res.tilde]);
        assert!(dt.abs() <= 4.0 * bp_spec().horizon);
    }
}

trait NegAdd {
    fn neg_add(self, c: f64) -> f64;
}

impl NegAdd for f64 {
    fn neg_add(self, c: f64) -> f64 {
        c - self
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn gauge_is_symmetric_and_dominated(seed in 0u64..10_000, d in 1usize..=2) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let spec = GaugeSpec { bandwidth: 0.5, c_d: 1.0, n_max: 3, l_max: 4, horizon: 1.0 };
        let p = GaugePoint::new(rng.random_range(0.0..1.0), weighted_measure(&mut rng, d, 3, 2.0));
        let q = GaugePoint::new(rng.random_range(0.0..1.0), weighted_measure(&mut rng, d, 2, 2.0));
        let (a, b) = (rho2(&p, &q, &spec).unwrap().value, rho2(&q, &p, &spec).unwrap().value);
        prop_assert!((a - b).abs() <= 1e-13 * a.max(1.0));
        let sum = multiscale_bound(
            &p.mu.smoothed(0.5).unwrap(),
            &q.mu.smoothed(0.5).unwrap(),
            &DyadicSpec { c_d: 1.0, n_max: 3, l_max: 4 },
        ).unwrap().partial_sum;
        prop_assert!(a - (p.t - q.t).powi(2) <= sum + 1e-12);
        prop_assert!(a >= 0.0);
    }

    #[test]
    fn time_derivative_is_bounded_by_twice_horizon(t in 0.0f64..1.0, s in 0.0f64..1.0) {
        let mu = line(&[0.0]);
        prop_assert!(dt_rho2(&GaugePoint::new(t, mu.clone()), &GaugePoint::new(s, mu)).abs() <= 2.0);
    }
}
