//! Testing affinity between Binomial(c, ϱ) and Poisson(cϱ).
//!
//! `A(c, ϱ) − α` lower-bounds the probability that any level-`α` upper
//! confidence limit for `c` is infinite when the detection probability is
//! `ϱ`. The affinity is flat in `c` for fixed `ϱ`, so large populations do
//! not rescue the upper limit.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::mixing::ln_factorial;

/// Largest `c` accepted by the direct sum.
pub const MAX_CLASSES: u64 = 1_000_000;

fn check(c: u64, rho: f64) -> Result<()> {
    if c == 0 || c > MAX_CLASSES {
        return Err(Error::InvalidArgument(format!("c = {c} must be in 1..={MAX_CLASSES}")));
    }
    if !(0.0..=1.0).contains(&rho) {
        return Err(Error::InvalidArgument(format!("rho = {rho} is not a probability")));
    }
    Ok(())
}

/// `A(c, ϱ) = Σ_{x=0}^{c} min{Binomial(c, ϱ)(x), Poisson(cϱ)(x)}`.
pub fn affinity(c: u64, rho: f64) -> Result<f64> {
    check(c, rho)?;
    if rho == 0.0 {
        return Ok(1.0);
    }
    let lambda = c as f64 * rho;
    let ln_lambda = lambda.ln();
    let ln_fc = ln_factorial(c);
    let ln_poisson = |x: u64| x as f64 * ln_lambda - lambda - ln_factorial(x);
    if rho == 1.0 {
        // the binomial is a point mass at c
        return Ok(ln_poisson(c).exp().min(1.0));
    }
    let (ln_p, ln_q) = (rho.ln(), (-rho).ln_1p());
    let total: f64 = (0..=c)
        .map(|x| {
            let ln_binom = ln_fc - ln_factorial(x) - ln_factorial(c - x) + x as f64 * ln_p + (c - x) as f64 * ln_q;
            ln_binom.min(ln_poisson(x)).exp()
        })
        .sum();
    Ok(total.clamp(0.0, 1.0))
}

/// `1 − ϱ / (2 √(1 − ϱ))`, a lower bound on `A(c, ϱ)` for every `c`.
pub fn affinity_floor(rho: f64) -> Result<f64> {
    if rho == 1.0 {
        return Err(Error::Undefined("affinity floor is unbounded at rho = 1".into()));
    }
    if !(0.0..1.0).contains(&rho) {
        return Err(Error::InvalidArgument(format!("rho = {rho} is not in [0, 1)")));
    }
    Ok(1.0 - rho / (2.0 * (1.0 - rho).sqrt()))
}

/// `A(c, ϱ) − α`; negative values mean the bound says nothing.
pub fn infinite_ucl_probability_bound(c: u64, rho: f64, alpha: f64) -> Result<f64> {
    Ok(affinity(c, rho)? - alpha)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AffinityResult {
    pub c: u64,
    pub rho: f64,
    pub affinity: f64,
    /// `None` at `ϱ = 1`.
    pub floor_bound: Option<f64>,
    pub infinite_ucl_lower_bound: f64,
}

impl AffinityResult {
    pub fn evaluate(c: u64, rho: f64, alpha: f64) -> Result<Self> {
        let a = affinity(c, rho)?;
        Ok(Self {
            c,
            rho,
            affinity: a,
            floor_bound: affinity_floor(rho).ok(),
            infinite_ucl_lower_bound: a - alpha,
        })
    }
}
