mod common;

use classcount::affinity::affinity;
use classcount::classical::{chao1, pseudo_mle, theta_cb, theta_cl, theta_dr, PmfSummary};
use classcount::hankel::{ladder, quadrature_representation, theta_k, MomentSource, MomentVector};
use classcount::ingest::{from_raw_counts, s_moment};
use classcount::mixing::undetected_odds;
use classcount::montecarlo::{replicate_rng, sample_truncated};
use classcount::npmle::{fit_npmle, NpmleConfig};
use classcount::pathology::{contaminate, hellinger, total_variation};
use classcount::{FrequencyData, MixingDistribution};
use proptest::prelude::*;

/// 1 to 4 atoms in [0.3, 6] at least 30% apart, with weights bounded away from 0.
fn mixture() -> impl Strategy<Value = MixingDistribution> {
    prop::collection::vec((0.3f64..6.0, 0.1f64..1.0), 1..=4)
        .prop_filter("atoms too close", |v| {
            let mut a: Vec<f64> = v.iter().map(|p| p.0).collect();
            a.sort_by(f64::total_cmp);
            a.windows(2).all(|w| w[1] > 1.3 * w[0])
        })
        .prop_map(|v| {
            let (atoms, weights): (Vec<f64>, Vec<f64>) = v.into_iter().unzip();
            MixingDistribution::new(atoms, weights).unwrap().normalized()
        })
}

fn rel(a: f64, b: f64) -> f64 {
    ((a - b) / b).abs()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn raw_counts_round_trip(values in prop::collection::vec(1u64..40, 1..200)) {
        let d = from_raw_counts(&values).unwrap();
        let mut sorted = values.clone();
        sorted.sort_unstable();
        prop_assert_eq!(d.expand(), sorted);
        let total: f64 = d.pmf_entries().map(|(_, p)| p).sum();
        prop_assert!((total - 1.0).abs() <= 1e-12);
        let s1 = s_moment(d.pmf_entries(), 1);
        prop_assert!(rel(s1, d.s() as f64 / d.n() as f64) <= 1e-12);
    }

    #[test]
    fn theta_k_is_scale_invariant(q in mixture(), r in prop::sample::select(vec![0.05_f64, 0.5, 3.0, 40.0])) {
        let m = MomentVector::from_mixture(&q, 8).unwrap();
        let scaled: Vec<f64> = m.values().iter().enumerate().map(|(i, v)| v * r.powi(i as i32 + 1)).collect();
        let ms = MomentVector::new(scaled, MomentSource::Model).unwrap();
        for k in 1..=q.support_size() {
            let (a, b) = (theta_k(&m, k).unwrap(), theta_k(&ms, k).unwrap());
            prop_assert!(rel(b, a) <= 1e-10, "k = {} r = {}: {} vs {}", k, r, a, b);
        }
    }

    #[test]
    fn exact_moments_are_fisher_consistent(q in mixture()) {
        let j = q.support_size();
        let m = MomentVector::from_mixture(&q, 2 * j).unwrap();
        let theta = q.odds();
        prop_assert!(rel(theta_k(&m, j).unwrap(), theta) <= 1e-8);
        for k in 1..j {
            prop_assert!(theta_k(&m, k).unwrap() < theta);
        }
    }

    #[test]
    fn quadrature_matches_moments(q in mixture()) {
        let j = q.support_size();
        let m = MomentVector::from_mixture(&q, 2 * j).unwrap();
        for k in 1..=j {
            let t = theta_k(&m, k).unwrap();
            let rep = quadrature_representation(&m, k, t).unwrap();
            prop_assert!((rep.phi.mass() - t).abs() <= 1e-10 * t.max(1.0));
            for x in 1..2 * k {
                let mx: f64 = rep.phi.iter().map(|(a, w)| w * a.powi(x as i32)).sum();
                prop_assert!(rel(mx, m.get(x)) <= 1e-8, "k = {} x = {}", k, x);
            }
            if k == j {
                prop_assert!((rep.mass() - 1.0).abs() <= 1e-8);
            }
        }
    }

    #[test]
    fn simulated_ladders_increase(q in mixture(), seed in any::<u64>()) {
        let d = sample_truncated(&q, 3000, &mut replicate_rng(seed, 0)).unwrap();
        let lad = ladder(&d, 8).unwrap();
        prop_assert!(lad.theta.windows(2).all(|w| w[1] > w[0]));
        prop_assert!(lad.recurrence_error() <= 1e-8);
        if d.count(2) > 0 {
            let t1 = theta_k(&MomentVector::from_data(&d, 2).unwrap(), 1).unwrap();
            prop_assert_eq!(chao1(&d).unwrap(), pseudo_mle(d.n(), t1).unwrap());
        }
    }

    #[test]
    fn single_atom_functionals_agree(lambda in 0.05f64..8.0) {
        let q = MixingDistribution::point(lambda).unwrap();
        let p = PmfSummary::from_mixture(&q);
        let theta = undetected_odds(lambda);
        let t1 = theta_k(&MomentVector::from_mixture(&q, 2).unwrap(), 1).unwrap();
        for v in [theta_dr(p).unwrap(), theta_cl(p).unwrap(), theta_cb(p).unwrap(), t1] {
            prop_assert!(rel(v, theta) <= 1e-10, "{} vs {}", v, theta);
        }
    }

    #[test]
    fn pseudo_mle_is_monotone(n in 1u64..100_000, a in 0.0f64..50.0, b in 0.0f64..50.0) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(pseudo_mle(n, lo).unwrap() <= pseudo_mle(n, hi).unwrap());
    }

    #[test]
    fn kappa_round_trip(q in mixture()) {
        let back = q.kappa().kappa_inverse();
        for ((a, w), (b, v)) in q.iter().zip(back.iter()) {
            prop_assert!((a - b).abs() <= 1e-12 * a && (w - v).abs() <= 1e-12);
        }
    }

    #[test]
    fn contamination_identities(q in mixture(), pi in 0.0f64..1.0, eta in 0.01f64..10.0) {
        let qs = contaminate(&q, pi, eta).unwrap();
        let want = (1.0 - pi) * q.odds() + pi * undetected_odds(eta);
        prop_assert!(rel(qs.odds(), want) <= 1e-12);
        let tau = total_variation(&qs, &q, None);
        let h = hellinger(&qs, &q, None);
        prop_assert!(tau.upper <= 2.0 * pi + 2e-10);
        prop_assert!(h.lower * h.lower <= tau.upper + 1e-12);
        prop_assert!(tau.lower <= 2.0 * h.upper + 1e-12);
    }
}

#[test]
fn affinity_grid_is_bounded_and_monotone() {
    for c in [1u64, 2, 5, 17, 64, 300, 2000] {
        let values: Vec<f64> = (0..=100).map(|i| affinity(c, i as f64 / 100.0).unwrap()).collect();
        assert!(values.iter().all(|a| (0.0..=1.0).contains(a)), "c = {c}");
        for (i, w) in values.windows(2).enumerate() {
            assert!(w[1] <= w[0] + 1e-9, "c = {c}, rho = {}", (i + 1) as f64 / 100.0);
        }
    }
}

fn npmle_cases() -> Vec<FrequencyData> {
    let mut out = vec![common::cholera(), common::est()];
    let q = MixingDistribution::new(vec![0.6, 2.5, 7.0], vec![0.5, 0.3, 0.2]).unwrap();
    for seed in 0..4 {
        out.push(sample_truncated(&q, 2000, &mut replicate_rng(seed, 1)).unwrap());
    }
    out
}

#[test]
fn npmle_likelihood_never_decreases() {
    for d in npmle_cases() {
        let fit = fit_npmle(&d, &NpmleConfig::default()).unwrap();
        assert!(fit.converged);
        for w in fit.history.windows(2) {
            assert!(w[1] >= w[0] - 1e-9 * w[0].abs(), "{:?}", fit.history);
        }
        assert!(fit.max_gradient <= 1e-6);
    }
}

#[test]
fn npmle_odds_equal_top_rung() {
    for d in npmle_cases() {
        let q = fit_npmle(&d, &NpmleConfig::default()).unwrap().mixing;
        let chi = q.support_size();
        let m = MomentVector::from_mixture(&q, 2 * chi).unwrap();
        let top = theta_k(&m, chi).unwrap();
        assert!(rel(top, q.odds()) <= 1e-6, "{} atoms: {top} vs {}", chi, q.odds());
    }
}
