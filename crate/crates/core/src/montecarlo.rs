//! Simulation from `(c, P)` or `Q`, model-based bootstrap and coverage runs.
//!
//! Every replicate draws from its own ChaCha8 stream, keyed by the run seed
//! and the replicate index, and results are gathered in index order. Output
//! is therefore identical for any thread count.

use std::collections::{BTreeMap, HashMap};
use std::sync::Mutex;

use rand::distr::weighted::WeightedIndex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::Serialize;

use crate::classical::{theta_cb, theta_cl, theta_dr, PmfSummary};
use crate::envelope::{kolmogorov_quantile, lower_limit_with_epsilon, EnvelopeConfig};
use crate::error::{Error, Result};
use crate::hankel::{theta_k, MomentVector};
use crate::ingest::FrequencyData;
use crate::mixing::{MixingDistribution, PopulationModel};
use crate::npmle::{fit_npmle, NpmleConfig};

pub const DEFAULT_SEED: u64 = 20_070_301;
pub const RNG_ALGORITHM: &str = "ChaCha8Rng (rand_chacha 0.9), seed_from_u64(seed) with stream = replicate index";

/// The generator for replicate `index` of a run seeded with `seed`.
pub fn replicate_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Type-7 (linear interpolation) quantile of sorted values.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of an empty sample");
    let h = (sorted.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    match sorted.get(lo + 1) {
        Some(&next) => sorted[lo] + (h - lo as f64) * (next - sorted[lo]),
        None => sorted[lo],
    }
}

fn atom_sampler(q: &MixingDistribution) -> Result<WeightedIndex<f64>> {
    WeightedIndex::new(q.weights()).map_err(|e| Error::InvalidArgument(format!("bad mixing weights: {e}")))
}

fn poisson(lambda: f64) -> Result<Poisson<f64>> {
    Poisson::new(lambda).map_err(|e| Error::InvalidArgument(format!("Poisson({lambda}): {e}")))
}

fn tally(values: impl IntoIterator<Item = u64>) -> Result<FrequencyData> {
    let mut counts: BTreeMap<u64, u64> = BTreeMap::new();
    for v in values {
        *counts.entry(v).or_default() += 1;
    }
    FrequencyData::from_pairs(counts)
}

/// A simulated population sample with its hidden remainder.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PopulationSample {
    pub data: FrequencyData,
    /// `n_0 = c − n`, the classes that went undetected.
    pub undetected: u64,
}

/// Draws `λ_i ~ P` and `Y_i ~ Poisson(λ_i)` for each of the `c` classes and
/// keeps the nonzero counts. Returns [`Error::Empty`] if nothing is seen.
pub fn sample_population<R: Rng>(model: &PopulationModel, rng: &mut R) -> Result<PopulationSample> {
    let pick = atom_sampler(&model.rates)?;
    let laws = model
        .rates
        .atoms()
        .iter()
        .map(|&a| poisson(a))
        .collect::<Result<Vec<_>>>()?;
    let mut seen = Vec::new();
    for _ in 0..model.classes {
        let y = laws[pick.sample(rng)].sample(rng) as u64;
        if y > 0 {
            seen.push(y);
        }
    }
    let n = seen.len() as u64;
    let data = tally(seen)?;
    Ok(PopulationSample {
        data,
        undetected: model.classes - n,
    })
}

/// A zero-truncated Poisson(λ) draw: inverse cdf for small `λ`, rejection
/// of zeros otherwise.
fn truncated_draw<R: Rng>(lambda: f64, law: &Poisson<f64>, rng: &mut R) -> u64 {
    if lambda < 1.0 {
        let u: f64 = rng.random();
        let mut p = lambda / lambda.exp_m1();
        let mut cum = p;
        let mut x = 1;
        while u > cum && p > 0.0 {
            x += 1;
            p *= lambda / x as f64;
            cum += p;
        }
        x
    } else {
        loop {
            let y = law.sample(rng) as u64;
            if y > 0 {
                return y;
            }
        }
    }
}

/// `n` independent draws from `f_Q`.
pub fn sample_truncated<R: Rng>(q: &MixingDistribution, n: u64, rng: &mut R) -> Result<FrequencyData> {
    if n == 0 {
        return Err(Error::InvalidArgument("sample size must be positive".into()));
    }
    let pick = atom_sampler(q)?;
    let laws = q.atoms().iter().map(|&a| poisson(a)).collect::<Result<Vec<_>>>()?;
    let draws: Vec<u64> = (0..n)
        .map(|_| {
            let j = pick.sample(rng);
            truncated_draw(q.atoms()[j], &laws[j], rng)
        })
        .collect();
    tally(draws)
}

/// Multinomial resample of size `n` from the empirical pmf of `d`.
pub fn resample_empirical<R: Rng>(d: &FrequencyData, rng: &mut R) -> Result<FrequencyData> {
    let xs: Vec<u64> = d.counts().keys().copied().collect();
    let pick = WeightedIndex::new(d.counts().values().map(|&c| c as f64))
        .map_err(|e| Error::InvalidArgument(format!("bad counts: {e}")))?;
    tally((0..d.n()).map(|_| xs[pick.sample(rng)]))
}

/// The estimators the bootstrap can recompute.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Estimator {
    Dr,
    Cl,
    Cb,
    /// `θ_k`, 1-based.
    Theta(usize),
}

impl Estimator {
    pub fn name(&self) -> String {
        match self {
            Estimator::Dr => "theta_dr".into(),
            Estimator::Cl => "theta_cl".into(),
            Estimator::Cb => "theta_cb".into(),
            Estimator::Theta(k) => format!("theta_{k}"),
        }
    }

    /// The reporting set: the three closed forms and `θ_1..θ_kmax`.
    pub fn table_set(k_max: usize) -> Vec<Estimator> {
        let mut v = vec![Estimator::Dr, Estimator::Cl, Estimator::Cb];
        v.extend((1..=k_max).map(Estimator::Theta));
        v
    }

    /// Value on empirical data; `None` if undefined.
    pub fn evaluate(&self, d: &FrequencyData) -> Option<f64> {
        match self {
            Estimator::Theta(k) => theta_k(&MomentVector::from_data(d, 2 * k).ok()?, *k).ok(),
            closed => closed.closed_form(PmfSummary::from_data(d)),
        }
    }

    /// Value at the model pmf `f_Q`.
    pub fn evaluate_model(&self, q: &MixingDistribution) -> Option<f64> {
        match self {
            Estimator::Theta(k) => theta_k(&MomentVector::from_mixture(q, 2 * k).ok()?, *k).ok(),
            closed => closed.closed_form(PmfSummary::from_mixture(q)),
        }
    }

    fn closed_form(&self, p: PmfSummary) -> Option<f64> {
        match self {
            Estimator::Dr => theta_dr(p).ok(),
            Estimator::Cl => theta_cl(p).ok(),
            Estimator::Cb => theta_cb(p).ok(),
            Estimator::Theta(_) => unreachable!(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BootstrapConfig {
    pub replicates: usize,
    /// Lower quantile level, e.g. 0.05.
    pub alpha_q: f64,
    pub seed: u64,
    /// Redraw `n` through a simulated population of `floor(n (1 + θ(Q̂)))`
    /// classes instead of holding it fixed.
    pub unconditional: bool,
    /// Keep every replicate value in the summary.
    pub keep_values: bool,
    pub target: ResampleTarget,
}

/// What each estimator is evaluated on for a resample.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum ResampleTarget {
    /// `f_{Q̂*}` for the NPMLE `Q̂*` refit to the resample.
    Refit(NpmleConfig),
    /// The resample's own empirical frequencies.
    Empirical,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self {
            replicates: 400,
            alpha_q: 0.05,
            seed: DEFAULT_SEED,
            unconditional: false,
            keep_values: false,
            target: ResampleTarget::Refit(NpmleConfig::default()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimatorSummary {
    pub name: String,
    /// The estimator at `f_Q̂`.
    pub point: Option<f64>,
    /// Lower `alpha_q` quantile over the defined replicates.
    pub quantile: Option<f64>,
    pub missing: usize,
    /// More than half of the replicates were undefined.
    pub flagged: bool,
    /// Replicate values in replicate order; `None` marks undefined ones.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<Option<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResampleSummary {
    pub replicates: usize,
    pub seed: u64,
    pub resample_size: u64,
    pub alpha_q: f64,
    pub unconditional: bool,
    pub estimators: Vec<EstimatorSummary>,
}

impl ResampleSummary {
    pub fn get(&self, name: &str) -> Option<&EstimatorSummary> {
        self.estimators.iter().find(|e| e.name == name)
    }
}

/// Model-based bootstrap from `Q̂` with resamples of size `n`.
pub fn bootstrap_quantiles(
    q_hat: &MixingDistribution,
    n: u64,
    estimators: &[Estimator],
    config: &BootstrapConfig,
) -> Result<ResampleSummary> {
    if config.replicates == 0 {
        return Err(Error::InvalidArgument("need at least one replicate".into()));
    }
    if !(config.alpha_q > 0.0 && config.alpha_q < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "alpha_q = {} is not in (0, 1)",
            config.alpha_q
        )));
    }
    let q_hat = q_hat.normalized();
    let population = if config.unconditional {
        let c = (n as f64 * (1.0 + q_hat.odds())).floor() as u64;
        Some(PopulationModel::new(c, q_hat.kappa_inverse())?)
    } else {
        None
    };
    let rows: Vec<Vec<Option<f64>>> = (0..config.replicates)
        .into_par_iter()
        .map(|b| {
            let mut rng = replicate_rng(config.seed, b as u64);
            let data = match &population {
                Some(model) => sample_population(model, &mut rng).map(|s| s.data),
                None => sample_truncated(&q_hat, n, &mut rng),
            };
            match (data, &config.target) {
                (Ok(d), ResampleTarget::Empirical) => estimators.iter().map(|e| e.evaluate(&d)).collect(),
                (Ok(d), ResampleTarget::Refit(npmle)) => match fit_npmle(&d, npmle) {
                    Ok(fit) => estimators.iter().map(|e| e.evaluate_model(&fit.mixing)).collect(),
                    Err(_) => vec![None; estimators.len()],
                },
                (Err(_), _) => vec![None; estimators.len()],
            }
        })
        .collect();

    let summaries = estimators
        .iter()
        .enumerate()
        .map(|(i, e)| {
            let column: Vec<Option<f64>> = rows.iter().map(|r| r[i]).collect();
            let mut defined: Vec<f64> = column.iter().flatten().copied().collect();
            defined.sort_by(f64::total_cmp);
            let missing = column.len() - defined.len();
            EstimatorSummary {
                name: e.name(),
                point: e.evaluate_model(&q_hat),
                quantile: (!defined.is_empty()).then(|| quantile(&defined, config.alpha_q)),
                missing,
                flagged: 2 * missing > column.len(),
                values: config.keep_values.then_some(column),
            }
        })
        .collect();
    Ok(ResampleSummary {
        replicates: config.replicates,
        seed: config.seed,
        resample_size: n,
        alpha_q: config.alpha_q,
        unconditional: config.unconditional,
        estimators: summaries,
    })
}

/// Wilson score interval for a binomial proportion.
pub fn wilson_interval(successes: usize, trials: usize, z: f64) -> (f64, f64) {
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let centre = (p + z2 / (2.0 * n)) / (1.0 + z2 / n);
    let half = z / (1.0 + z2 / n) * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

/// Where the synthetic data come from.
#[derive(Debug, Clone, PartialEq)]
pub enum Truth {
    /// `n` draws from `f_Q`; the target is `θ(f_Q)`.
    Truncated { q: MixingDistribution, n: u64 },
    /// A full population; the target is `c`.
    Population(PopulationModel),
}

#[derive(Debug, Clone, PartialEq)]
pub enum CoverageMethod {
    /// The envelope lower limit; covers when it is at most the truth.
    Envelope { alpha: f64, config: EnvelopeConfig },
    /// An estimate used as an upper limit; covers when it is at least the
    /// truth. Undefined estimates count as an infinite limit.
    NaiveUpper(Estimator),
    /// The observed `n` as a lower limit for `c`.
    ObservedCount,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Coverage {
    pub runs: usize,
    pub covered: usize,
    /// Runs lost to an all-zero population sample.
    pub empty: usize,
    pub rate: f64,
    pub wilson_95: (f64, f64),
}

const Z_95: f64 = 1.959_963_984_540_054;

/// Fraction of `runs` synthetic datasets on which `method` covers the truth.
pub fn coverage_experiment(truth: &Truth, method: &CoverageMethod, runs: usize, seed: u64) -> Result<Coverage> {
    if runs < 100 {
        return Err(Error::InvalidArgument(format!("need at least 100 runs, got {runs}")));
    }
    if matches!(
        (truth, method),
        (Truth::Truncated { .. }, CoverageMethod::ObservedCount)
    ) {
        return Err(Error::InvalidArgument(
            "observed-count coverage needs a population truth".into(),
        ));
    }
    let eps_cache: Mutex<HashMap<u64, f64>> = Mutex::new(HashMap::new());
    let epsilon = |n: u64, alpha: f64, cfg: &EnvelopeConfig| -> Result<f64> {
        if let Some(&e) = eps_cache.lock().unwrap().get(&n) {
            return Ok(e);
        }
        let e = kolmogorov_quantile(n, alpha, cfg.ks_reps, cfg.seed)?;
        eps_cache.lock().unwrap().insert(n, e);
        Ok(e)
    };

    let outcomes: Vec<Option<bool>> = (0..runs)
        .into_par_iter()
        .map(|run| -> Result<Option<bool>> {
            let mut rng = replicate_rng(seed, run as u64);
            let (data, theta, classes) = match truth {
                Truth::Truncated { q, n } => (sample_truncated(q, *n, &mut rng)?, q.normalized().odds(), None),
                Truth::Population(model) => match sample_population(model, &mut rng) {
                    Ok(s) => (s.data, model.odds(), Some(model.classes)),
                    Err(Error::Empty) => return Ok(None),
                    Err(e) => return Err(e),
                },
            };
            let covered = match method {
                CoverageMethod::Envelope { alpha, config } => {
                    let eps = epsilon(data.n(), *alpha, config)?;
                    let limit = lower_limit_with_epsilon(&data, *alpha, eps, config)?;
                    match classes {
                        None => limit.theta_lower().is_none_or(|t| t <= theta),
                        Some(c) => limit.class_lower_limit.is_none_or(|l| l <= c),
                    }
                }
                CoverageMethod::NaiveUpper(e) => e.evaluate(&data).is_none_or(|t| t >= theta),
                CoverageMethod::ObservedCount => data.n() <= classes.unwrap_or(0),
            };
            Ok(Some(covered))
        })
        .collect::<Result<_>>()?;

    let empty = outcomes.iter().filter(|o| o.is_none()).count();
    let scored = runs - empty;
    let covered = outcomes.iter().filter(|o| **o == Some(true)).count();
    if scored == 0 {
        return Err(Error::Empty);
    }
    Ok(Coverage {
        runs: scored,
        covered,
        empty,
        rate: covered as f64 / scored as f64,
        wilson_95: wilson_interval(covered, scored, Z_95),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mixing::truncated_poisson_pmf;

    #[test]
    fn type7_quantile() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile(&v, 0.0), 1.0);
        assert_eq!(quantile(&v, 1.0), 4.0);
        assert!((quantile(&v, 0.5) - 2.5).abs() < 1e-15);
        assert_eq!(quantile(&[7.0], 0.05), 7.0);
    }

    #[test]
    fn population_detection_rate() {
        let model = PopulationModel::new(100_000, MixingDistribution::point(1.0).unwrap()).unwrap();
        let s = sample_population(&model, &mut replicate_rng(1, 0)).unwrap();
        let rate = s.data.n() as f64 / 1e5;
        assert!((rate - (1.0 - (-1.0f64).exp())).abs() < 0.005);
        assert_eq!(s.data.n() + s.undetected, 100_000);

        let model = PopulationModel::new(100, MixingDistribution::point(10.0).unwrap()).unwrap();
        let s = sample_population(&model, &mut replicate_rng(1, 0)).unwrap();
        assert_eq!(s.data.n(), 100);
    }

    #[test]
    fn sampling_is_seeded() {
        let q = MixingDistribution::new(vec![0.3, 2.0], vec![0.5, 0.5]).unwrap();
        let a = sample_truncated(&q, 500, &mut replicate_rng(9, 4)).unwrap();
        let b = sample_truncated(&q, 500, &mut replicate_rng(9, 4)).unwrap();
        assert_eq!(a, b);
        assert_eq!(sample_truncated(&q, 1, &mut replicate_rng(9, 4)).unwrap().distinct(), 1);
    }

    #[test]
    fn truncated_mean() {
        let q = MixingDistribution::point(5.0).unwrap();
        let d = sample_truncated(&q, 10_000, &mut replicate_rng(2, 0)).unwrap();
        let mean = d.s() as f64 / d.n() as f64;
        let m = 5.0 / (1.0 - (-5.0f64).exp());
        let var = m * (1.0 + 5.0 - m);
        assert!((mean - m).abs() < 3.0 * (var / 1e4).sqrt());
    }

    #[test]
    fn small_rate_inverse_cdf_matches_pmf() {
        let q = MixingDistribution::point(0.2).unwrap();
        let d = sample_truncated(&q, 100_000, &mut replicate_rng(5, 0)).unwrap();
        let p1 = truncated_poisson_pmf(0.2, 1);
        let se = (p1 * (1.0 - p1) / 1e5).sqrt();
        assert!((d.pmf(1) - p1).abs() < 4.0 * se);
    }

    #[test]
    fn bootstrap_single_replicate() {
        let q = MixingDistribution::point(1.0).unwrap();
        let cfg = BootstrapConfig {
            replicates: 1,
            keep_values: true,
            ..Default::default()
        };
        let s = bootstrap_quantiles(&q, 50, &[Estimator::Dr], &cfg).unwrap();
        let e = &s.estimators[0];
        assert_eq!(e.quantile, e.values.as_ref().unwrap()[0]);
        assert!((e.point.unwrap() - 1.0 / 1f64.exp_m1()).abs() < 1e-9);
    }

    #[test]
    fn bootstrap_flags_mostly_undefined() {
        // with λ tiny, nearly every class is seen once and θ_1 is undefined
        let q = MixingDistribution::point(1e-4).unwrap();
        let cfg = BootstrapConfig {
            replicates: 20,
            target: ResampleTarget::Empirical,
            ..Default::default()
        };
        let s = bootstrap_quantiles(&q, 10, &[Estimator::Theta(1)], &cfg).unwrap();
        assert!(s.estimators[0].flagged);
    }

    #[test]
    fn wilson_bounds() {
        let (lo, hi) = wilson_interval(95, 100, Z_95);
        assert!(lo < 0.95 && hi > 0.95 && lo > 0.88 && hi < 0.99);
        assert_eq!(wilson_interval(100, 100, Z_95).1, 1.0);
    }

    #[test]
    fn observed_count_always_covers() {
        let model = PopulationModel::new(200, MixingDistribution::point(0.5).unwrap()).unwrap();
        let cov = coverage_experiment(&Truth::Population(model), &CoverageMethod::ObservedCount, 100, 1).unwrap();
        assert_eq!(cov.rate, 1.0);
        let q = MixingDistribution::point(0.5).unwrap();
        let t = Truth::Truncated { q, n: 10 };
        assert!(coverage_experiment(&t, &CoverageMethod::ObservedCount, 100, 1).is_err());
        assert!(coverage_experiment(&t, &CoverageMethod::NaiveUpper(Estimator::Dr), 99, 1).is_err());
    }
}
