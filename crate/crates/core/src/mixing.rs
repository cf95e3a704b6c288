//! Zero-truncated Poisson mixtures and their mixing distributions.

use serde::Serialize;
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

/// Weights below this are dropped when a distribution is built.
pub const WEIGHT_FLOOR: f64 = 1e-12;

/// `ln(e^λ - 1)` without overflow for large `λ` or cancellation near 0.
pub fn ln_expm1(lambda: f64) -> f64 {
    if lambda > 30.0 {
        lambda + (-(-lambda).exp()).ln_1p()
    } else {
        lambda.exp_m1().ln()
    }
}

pub fn ln_factorial(x: u64) -> f64 {
    if x < 2 {
        0.0
    } else if x <= 20 {
        ((2..=x).product::<u64>() as f64).ln()
    } else {
        ln_gamma(x as f64 + 1.0)
    }
}

/// `f_λ(x) = λ^x / (x! (e^λ - 1))`, evaluated in log space.
pub fn truncated_poisson_pmf(lambda: f64, x: u64) -> f64 {
    debug_assert!(lambda > 0.0 && x >= 1);
    (x as f64 * lambda.ln() - ln_factorial(x) - ln_expm1(lambda)).exp()
}

/// `1 / (e^λ - 1)`, the odds that a Poisson(λ) class goes undetected.
pub fn undetected_odds(lambda: f64) -> f64 {
    1.0 / lambda.exp_m1()
}

/// Chernoff-type bound on `Pr(X > t)` for zero-truncated Poisson(λ).
pub fn truncated_tail_bound(lambda: f64, t: u64) -> f64 {
    let m = (t + 1) as f64;
    if m <= lambda {
        return 1.0;
    }
    // Pr(Y >= m) <= e^{-λ} (eλ/m)^m for the untruncated Y
    let ln_bound = -lambda + m * (1.0 + lambda.ln() - m.ln());
    (ln_bound - (-(-lambda).exp_m1()).ln()).exp().min(1.0)
}

/// Finite discrete measure `Σ π_j δ(ξ_j)` on `(0, ∞)`.
///
/// Atoms are kept strictly increasing; coincident atoms are merged and
/// weights below [`WEIGHT_FLOOR`] are pruned. The total mass is 1 for a
/// mixing distribution but may differ for quadrature-derived measures.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MixingDistribution {
    atoms: Vec<f64>,
    weights: Vec<f64>,
}

impl MixingDistribution {
    pub fn new(atoms: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        Self::with_merge_tolerance(atoms, weights, 0.0)
    }

    /// Like [`new`](Self::new) but also merges atoms within relative
    /// distance `rel_tol`, placing the merged atom at the weighted mean.
    pub fn with_merge_tolerance(atoms: Vec<f64>, weights: Vec<f64>, rel_tol: f64) -> Result<Self> {
        if atoms.len() != weights.len() {
            return Err(Error::InvalidArgument(format!(
                "{} atoms but {} weights",
                atoms.len(),
                weights.len()
            )));
        }
        if let Some(a) = atoms.iter().find(|a| !(a.is_finite() && **a > 0.0)) {
            return Err(Error::InvalidArgument(format!("atom {a} is not in (0, inf)")));
        }
        if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w >= 0.0)) {
            return Err(Error::InvalidArgument(format!("weight {w} is negative or not finite")));
        }
        let mut pairs: Vec<(f64, f64)> = atoms.into_iter().zip(weights).collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut merged: Vec<(f64, f64)> = Vec::with_capacity(pairs.len());
        for (a, w) in pairs {
            match merged.last_mut() {
                Some((pa, pw)) if (a - *pa) <= rel_tol * a || a == *pa => {
                    let total = *pw + w;
                    if total > 0.0 {
                        *pa = (*pa * *pw + a * w) / total;
                    }
                    *pw = total;
                }
                _ => merged.push((a, w)),
            }
        }
        merged.retain(|&(_, w)| w >= WEIGHT_FLOOR);
        if merged.is_empty() {
            return Err(Error::InvalidArgument("mixing distribution has no mass".into()));
        }
        let (atoms, weights) = merged.into_iter().unzip();
        Ok(Self { atoms, weights })
    }

    /// Point mass `δ(λ)`.
    pub fn point(lambda: f64) -> Result<Self> {
        Self::new(vec![lambda], vec![1.0])
    }

    pub fn atoms(&self) -> &[f64] {
        &self.atoms
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Number of support points, `χ(Q)`.
    pub fn support_size(&self) -> usize {
        self.atoms.len()
    }

    pub fn normalized(&self) -> Self {
        let m = self.mass();
        Self {
            atoms: self.atoms.clone(),
            weights: self.weights.iter().map(|w| w / m).collect(),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.atoms.iter().copied().zip(self.weights.iter().copied())
    }

    /// `f_Q(x) = Σ π_j f_{ξ_j}(x)`.
    pub fn pmf(&self, x: u64) -> f64 {
        self.iter().map(|(a, w)| w * truncated_poisson_pmf(a, x)).sum()
    }

    /// `F_Q(x)` at `x = 1..=x_max`.
    pub fn cdf_values(&self, x_max: u64) -> Vec<f64> {
        let mut acc = 0.0;
        (1..=x_max)
            .map(|x| {
                acc += self.pmf(x);
                acc
            })
            .collect()
    }

    /// `θ(f_Q) = Σ π_j / (e^{ξ_j} - 1)`.
    pub fn odds(&self) -> f64 {
        self.iter().map(|(a, w)| w * undetected_odds(a)).sum()
    }

    /// Moments `μ(x) = x! f_Q(x) = Σ π_j ξ_j^x / (e^{ξ_j} - 1)` for `x = 1..=len`.
    pub fn model_moments(&self, len: usize) -> Vec<f64> {
        (1..=len as u64)
            .map(|x| {
                self.iter()
                    .map(|(a, w)| w * (x as f64 * a.ln() - ln_expm1(a)).exp())
                    .sum()
            })
            .collect()
    }

    /// Upper bound on `Pr(X > t)` under `f_Q`.
    pub fn tail_bound(&self, t: u64) -> f64 {
        let m = self.mass();
        self.iter()
            .map(|(a, w)| w / m * truncated_tail_bound(a, t))
            .sum::<f64>()
            .min(1.0)
    }

    /// `Q = κ(P)`: reweights by the detection probability `1 - e^{-λ}`.
    pub fn kappa(&self) -> Self {
        self.reweighted(|a| -(-a).exp_m1())
    }

    /// `P = κ⁻¹(Q)`: reweights by `1 / (1 - e^{-λ})`.
    pub fn kappa_inverse(&self) -> Self {
        self.reweighted(|a| 1.0 / -(-a).exp_m1())
    }

    /// Detection probability `1 - g_P(0)` when `self` is a population `P`.
    pub fn detection_probability(&self) -> f64 {
        self.iter().map(|(a, w)| w * -(-a).exp_m1()).sum::<f64>() / self.mass()
    }

    fn reweighted(&self, factor: impl Fn(f64) -> f64) -> Self {
        let raw: Vec<f64> = self.iter().map(|(a, w)| w * factor(a)).collect();
        let total: f64 = raw.iter().sum();
        Self {
            atoms: self.atoms.clone(),
            weights: raw.into_iter().map(|w| w / total).collect(),
        }
    }
}

/// A population of `c` classes whose Poisson rates follow `P`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PopulationModel {
    pub classes: u64,
    pub rates: MixingDistribution,
}

impl PopulationModel {
    pub fn new(classes: u64, rates: MixingDistribution) -> Result<Self> {
        if classes == 0 {
            return Err(Error::InvalidArgument("population needs c >= 1".into()));
        }
        Ok(Self {
            classes,
            rates: rates.normalized(),
        })
    }

    /// `ϱ = 1 - g_P(0)`.
    pub fn detection_probability(&self) -> f64 {
        self.rates.detection_probability()
    }

    /// `θ = g_P(0) / (1 - g_P(0))`, equal to the odds of `κ(P)`.
    pub fn odds(&self) -> f64 {
        let rho = self.detection_probability();
        (1.0 - rho) / rho
    }

    /// Conditional mixing distribution `Q = κ(P)` of detected classes.
    pub fn detected_mixing(&self) -> MixingDistribution {
        self.rates.kappa()
    }
}
