//! One-sided lower confidence limit for `θ` from a Kolmogorov band.
//!
//! The ε-lower envelope is the smallest odds `θ(f_Q)` over all mixtures
//! whose cdf stays within `ε` of the empirical cdf. Restricting `Q` to a
//! fixed grid of atoms turns it into a linear program in the weights.
//! With `ε` set to the `1 − α` quantile of the Kolmogorov statistic the
//! optimum is a lower limit with coverage at least `1 − α`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::ingest::FrequencyData;
use crate::mixing::{truncated_poisson_pmf, undetected_odds, MixingDistribution};
use crate::montecarlo::{quantile, DEFAULT_SEED};
use crate::simplex::{LinearProgram, LpOutcome, Relation};

pub const DEFAULT_KS_REPS: usize = 100_000;
const KS_CHUNK: usize = 1_000;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnvelopeConfig {
    pub grid_size: usize,
    pub grid_min: f64,
    /// `None` means `x_max + 10 √x_max`.
    pub grid_max: Option<f64>,
    pub ks_reps: usize,
    pub seed: u64,
}

impl Default for EnvelopeConfig {
    fn default() -> Self {
        Self {
            grid_size: 400,
            grid_min: 1e-4,
            grid_max: None,
            ks_reps: DEFAULT_KS_REPS,
            seed: DEFAULT_SEED,
        }
    }
}

impl EnvelopeConfig {
    /// Log-spaced atoms for data with largest frequency `x_max`.
    pub fn grid(&self, x_max: u64) -> Result<Vec<f64>> {
        let hi = self
            .grid_max
            .unwrap_or_else(|| x_max as f64 + 10.0 * (x_max as f64).sqrt());
        if !(self.grid_min > 0.0 && hi > self.grid_min && self.grid_size >= 2) {
            return Err(Error::InvalidArgument(format!(
                "grid needs 0 < min < max and at least 2 atoms (got [{}, {hi}] with {})",
                self.grid_min, self.grid_size
            )));
        }
        let (a, b) = (self.grid_min.ln(), hi.ln());
        let last = (self.grid_size - 1) as f64;
        Ok((0..self.grid_size)
            .map(|i| (a + (b - a) * i as f64 / last).exp())
            .collect())
    }
}

/// `sup_x |F(x) − G(x)|` over a common integer domain `x = 1..=len`.
pub fn kolmogorov_distance(f: &[f64], g: &[f64]) -> Result<f64> {
    if f.len() != g.len() {
        return Err(Error::InvalidArgument(format!(
            "cdfs are on different domains ({} vs {} points)",
            f.len(),
            g.len()
        )));
    }
    Ok(f.iter().zip(g).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
}

/// Monte Carlo `1 − α` quantile of `D_n = sup_t |U_n(t) − t|`, where `U_n`
/// is the empirical cdf of `n` uniforms. Deterministic given `seed` and
/// independent of the thread count.
pub fn kolmogorov_quantile(n: u64, alpha: f64, reps: usize, seed: u64) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidArgument("n must be positive".into()));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidArgument(format!("alpha = {alpha} is not in (0, 1)")));
    }
    if reps < 10_000 {
        return Err(Error::InvalidArgument(format!(
            "need at least 10000 replicates, got {reps}"
        )));
    }
    let chunks = reps.div_ceil(KS_CHUNK);
    let mut stats: Vec<f64> = (0..chunks)
        .into_par_iter()
        .flat_map_iter(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(c as u64);
            let size = KS_CHUNK.min(reps - c * KS_CHUNK);
            let mut spacings = vec![0.0; n as usize + 1];
            (0..size)
                .map(move |_| ks_statistic(&mut rng, &mut spacings))
                .collect::<Vec<_>>()
        })
        .collect();
    stats.sort_by(f64::total_cmp);
    Ok(quantile(&stats, 1.0 - alpha))
}

/// One draw of `D_n`, with the order statistics built from exponential
/// spacings.
fn ks_statistic(rng: &mut ChaCha8Rng, spacings: &mut [f64]) -> f64 {
    let mut total = 0.0;
    for s in spacings.iter_mut() {
        let e: f64 = Exp1.sample(rng);
        total += e;
        *s = total;
    }
    let n = (spacings.len() - 1) as f64;
    let mut d: f64 = 0.0;
    for (i, &cum) in spacings[..spacings.len() - 1].iter().enumerate() {
        let u = cum / total;
        d = d.max((i + 1) as f64 / n - u).max(u - i as f64 / n);
    }
    d
}

/// The grid-restricted envelope LP.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnvelopeProblem {
    pub grid: Vec<f64>,
    pub epsilon: f64,
    /// `F̂_n(x)` for `x = 1..=x_max`.
    pub target_cdf: Vec<f64>,
    /// `w_j = 1 / (e^{ξ_j} − 1)`.
    pub objective: Vec<f64>,
    /// `F_{ξ_j}(x)`, indexed `[x - 1][j]`.
    atom_cdfs: Vec<Vec<f64>>,
}

impl EnvelopeProblem {
    /// Two band rows per `x` plus the simplex row.
    pub fn constraint_count(&self) -> usize {
        2 * self.target_cdf.len() + 1
    }

    fn to_lp(&self) -> LinearProgram {
        let mut lp = LinearProgram::new(self.objective.clone());
        for (row, &target) in self.atom_cdfs.iter().zip(&self.target_cdf) {
            lp.add(row.clone(), Relation::Le, target + self.epsilon);
            lp.add(row.clone(), Relation::Ge, target - self.epsilon);
        }
        lp.add(vec![1.0; self.grid.len()], Relation::Eq, 1.0);
        lp
    }
}

pub fn build_lp(d: &FrequencyData, epsilon: f64, grid: &[f64]) -> Result<EnvelopeProblem> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::InvalidArgument(format!("epsilon = {epsilon} must be positive")));
    }
    if grid.is_empty() || grid[0] <= 0.0 || grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument(
            "grid must be positive and strictly increasing".into(),
        ));
    }
    let x_max = d.x_max();
    let mut atom_cdfs = vec![vec![0.0; grid.len()]; x_max as usize];
    for (j, &xi) in grid.iter().enumerate() {
        let mut acc = 0.0;
        for x in 1..=x_max {
            acc += truncated_poisson_pmf(xi, x);
            atom_cdfs[x as usize - 1][j] = acc;
        }
    }
    Ok(EnvelopeProblem {
        grid: grid.to_vec(),
        epsilon,
        target_cdf: d.cdf_values(),
        objective: grid.iter().map(|&xi| undetected_odds(xi)).collect(),
        atom_cdfs,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum EnvelopeStatus {
    Feasible,
    Infeasible,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum BandSide {
    Upper,
    Lower,
}

/// A band constraint that holds with equality at the optimum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ActiveConstraint {
    pub x: u64,
    pub side: BandSide,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnvelopeSolution {
    pub status: EnvelopeStatus,
    /// `θ(F̂_n; ε)`; `None` when infeasible.
    pub theta_lower: Option<f64>,
    /// Optimal weights on the grid (empty when infeasible).
    pub weights: Vec<f64>,
    pub active_constraints: Vec<ActiveConstraint>,
    /// Largest `|F_Q(x) − F̂_n(x)|` at the optimum.
    pub max_band_distance: Option<f64>,
    #[serde(skip)]
    grid: Vec<f64>,
}

impl EnvelopeSolution {
    /// The optimal `Q` with grid atoms of zero weight dropped.
    pub fn mixing(&self) -> Option<MixingDistribution> {
        if self.status != EnvelopeStatus::Feasible {
            return None;
        }
        MixingDistribution::new(self.grid.clone(), self.weights.clone()).ok()
    }
}

pub fn solve_lp(p: &EnvelopeProblem) -> EnvelopeSolution {
    let infeasible = EnvelopeSolution {
        status: EnvelopeStatus::Infeasible,
        theta_lower: None,
        weights: Vec::new(),
        active_constraints: Vec::new(),
        max_band_distance: None,
        grid: p.grid.clone(),
    };
    let LpOutcome::Optimal { x, objective } = p.to_lp().minimize() else {
        return infeasible;
    };
    let total: f64 = x.iter().sum();
    let weights: Vec<f64> = x.iter().map(|w| w / total).collect();
    let mut active = Vec::new();
    let mut max_dist: f64 = 0.0;
    for (i, (row, &target)) in p.atom_cdfs.iter().zip(&p.target_cdf).enumerate() {
        let fq: f64 = row.iter().zip(&weights).map(|(a, b)| a * b).sum();
        let gap = fq - target;
        max_dist = max_dist.max(gap.abs());
        let x = i as u64 + 1;
        if (gap - p.epsilon).abs() <= 1e-9 {
            active.push(ActiveConstraint {
                x,
                side: BandSide::Upper,
            });
        }
        if (gap + p.epsilon).abs() <= 1e-9 {
            active.push(ActiveConstraint {
                x,
                side: BandSide::Lower,
            });
        }
    }
    EnvelopeSolution {
        status: EnvelopeStatus::Feasible,
        theta_lower: Some(objective.max(0.0)),
        weights,
        active_constraints: active,
        max_band_distance: Some(max_dist),
        grid: p.grid.clone(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnvelopeLimit {
    pub alpha: f64,
    pub epsilon: f64,
    pub solution: EnvelopeSolution,
    /// `floor(n (1 + θ_L))`, the matching lower limit for `c`.
    pub class_lower_limit: Option<u64>,
}

impl EnvelopeLimit {
    pub fn theta_lower(&self) -> Option<f64> {
        self.solution.theta_lower
    }
}

/// Lower limit for `θ` with `ε` from [`kolmogorov_quantile`].
pub fn lower_confidence_limit(d: &FrequencyData, alpha: f64, config: &EnvelopeConfig) -> Result<EnvelopeLimit> {
    let epsilon = kolmogorov_quantile(d.n(), alpha, config.ks_reps, config.seed)?;
    lower_limit_with_epsilon(d, alpha, epsilon, config)
}

/// As [`lower_confidence_limit`] with a precomputed `ε`.
pub fn lower_limit_with_epsilon(
    d: &FrequencyData,
    alpha: f64,
    epsilon: f64,
    config: &EnvelopeConfig,
) -> Result<EnvelopeLimit> {
    let grid = config.grid(d.x_max())?;
    let problem = build_lp(d, epsilon, &grid)?;
    let solution = solve_lp(&problem);
    let class_lower_limit = solution.theta_lower.map(|t| (d.n() as f64 * (1.0 + t)).floor() as u64);
    Ok(EnvelopeLimit {
        alpha,
        epsilon,
        solution,
        class_lower_limit,
    })
}
