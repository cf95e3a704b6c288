mod common;

use classcount::envelope::{kolmogorov_distance, lower_confidence_limit, lower_limit_with_epsilon, EnvelopeConfig};
use classcount::hankel::{delta_se, theta_k, MomentVector};
use classcount::montecarlo::{
    bootstrap_quantiles, replicate_rng, resample_empirical, sample_population, sample_truncated, BootstrapConfig,
    Estimator, ResampleTarget,
};
use classcount::npmle::{fit_npmle, NpmleConfig};
use classcount::{MixingDistribution, PopulationModel};
use statrs::distribution::{ChiSquared, ContinuousCDF};

#[test]
fn truncated_sampler_fits_its_pmf() {
    for (atoms, weights) in [(vec![0.3], vec![1.0]), (vec![0.5, 2.0, 6.0], vec![0.5, 0.3, 0.2])] {
        let q = MixingDistribution::new(atoms, weights).unwrap();
        let n = 100_000u64;
        let d = sample_truncated(&q, n, &mut replicate_rng(11, 0)).unwrap();
        // pool the upper tail so every cell expects at least 5
        let mut cells = Vec::new();
        let mut x = 1;
        while n as f64 * (1.0 - q.cdf_values(x).last().unwrap()) >= 5.0 {
            cells.push((d.count(x) as f64, n as f64 * q.pmf(x)));
            x += 1;
        }
        let seen_tail: u64 = d.counts().range(x..).map(|(_, c)| c).sum();
        cells.push((seen_tail as f64, n as f64 * (1.0 - q.cdf_values(x - 1).last().unwrap())));
        let stat: f64 = cells.iter().map(|(o, e)| (o - e).powi(2) / e).sum();
        let crit = ChiSquared::new((cells.len() - 1) as f64).unwrap().inverse_cdf(0.99);
        assert!(stat < crit, "chi2 = {stat} >= {crit} on {} cells", cells.len());
    }
}

#[test]
fn population_sampler_misses_the_right_share() {
    let q = MixingDistribution::new(vec![0.5, 2.0], vec![0.5, 0.5]).unwrap();
    let model = PopulationModel::new(50_000, q).unwrap();
    let s = sample_population(&model, &mut replicate_rng(5, 0)).unwrap();
    let p0 = 1.0 - model.detection_probability();
    let sd = (50_000.0 * p0 * (1.0 - p0)).sqrt();
    assert!((s.undetected as f64 - 50_000.0 * p0).abs() < 4.0 * sd);
    assert_eq!(s.undetected + s.data.n(), 50_000);
}

#[test]
fn delta_and_bootstrap_se_match_their_oracles() {
    let d = common::cholera();
    let se = delta_se(&d, 1).unwrap();
    // θ̂_1 = f_1² / (2 f_2) has gradient (2, -2) at the cholera pmf
    let (f1, f2): (f64, f64) = (32.0 / 55.0, 16.0 / 55.0);
    let oracle = ((4.0 * f1 + 4.0 * f2 - (2.0 * f1 - 2.0 * f2).powi(2)) / 55.0).sqrt();
    assert!((se - oracle).abs() <= 1e-12, "{se} vs {oracle}");
    let reps = 4000;
    let values: Vec<f64> = (0..reps)
        .filter_map(|b| {
            let r = resample_empirical(&d, &mut replicate_rng(99, b)).unwrap();
            theta_k(&MomentVector::from_data(&r, 2).ok()?, 1).ok()
        })
        .collect();
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let boot = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (values.len() - 1) as f64).sqrt();
    // independent multinomial simulation at B = 40000 gives 0.2885
    assert!((boot - 0.2885).abs() <= 0.02, "bootstrap {boot}");
}

#[test]
fn bootstrap_is_thread_count_independent() {
    let q = fit_npmle(&common::est(), &NpmleConfig::default()).unwrap().mixing;
    let est = Estimator::table_set(3);
    for target in [ResampleTarget::Empirical, ResampleTarget::Refit(NpmleConfig::default())] {
        let cfg = BootstrapConfig {
            replicates: 24,
            keep_values: true,
            target,
            ..Default::default()
        };
        let run = |threads| {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
            pool.install(|| bootstrap_quantiles(&q, 1825, &est, &cfg).unwrap())
        };
        assert_eq!(run(1), run(3));
    }
}

#[test]
fn envelope_limit_sits_below_the_first_rung() {
    for d in [common::cholera(), common::est()] {
        let limit = lower_confidence_limit(&d, 0.05, &EnvelopeConfig::default()).unwrap();
        let t1 = theta_k(&MomentVector::from_data(&d, 2).unwrap(), 1).unwrap();
        assert!(limit.theta_lower().unwrap() <= t1);
    }
}

#[test]
fn envelope_keeps_a_feasible_truth_below_its_odds() {
    let cfg = EnvelopeConfig {
        ks_reps: 10_000,
        ..Default::default()
    };
    for seed in 0..5 {
        let q0 = MixingDistribution::new(vec![0.7, 3.0], vec![0.6, 0.4]).unwrap();
        let d = sample_truncated(&q0, 500, &mut replicate_rng(seed, 0)).unwrap();
        // snap the truth onto the LP grid so its weights are a feasible point
        let grid = cfg.grid(d.x_max()).unwrap();
        let snap = |a: f64| {
            *grid
                .iter()
                .min_by(|x, y| (*x - a).abs().total_cmp(&(*y - a).abs()))
                .unwrap()
        };
        let q = MixingDistribution::new(vec![snap(0.7), snap(3.0)], vec![0.6, 0.4]).unwrap();
        let eps = kolmogorov_distance(&q.cdf_values(d.x_max()), &d.cdf_values()).unwrap() + 1e-9;
        let limit = lower_limit_with_epsilon(&d, 0.05, eps, &cfg).unwrap();
        let t = limit.theta_lower().expect("truth is feasible");
        assert!(t <= q.odds() + 1e-9, "seed {seed}: {t} > {}", q.odds());
    }
}
