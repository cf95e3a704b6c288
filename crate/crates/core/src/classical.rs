//! Closed-form coverage-type functionals and the pseudo-MLE for `c`.
//!
//! Each functional is a plug-in approximation to the odds `θ` built from
//! `f(1)`, `s_1 = Σ x f(x)` and `s_2 = Σ x² f(x)`. All three equal `θ`
//! exactly when the mixing distribution is a single point mass.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::ingest::{s_moment, FrequencyData};
use crate::mixing::MixingDistribution;

/// The pmf summaries the functionals need.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PmfSummary {
    pub f1: f64,
    pub s1: f64,
    pub s2: f64,
}

impl PmfSummary {
    pub fn from_data(d: &FrequencyData) -> Self {
        Self {
            f1: d.pmf(1),
            s1: s_moment(d.pmf_entries(), 1),
            s2: s_moment(d.pmf_entries(), 2),
        }
    }

    /// Summaries of `f_Q`, summed until the certified tail is below `1e-15`.
    pub fn from_mixture(q: &MixingDistribution) -> Self {
        let mut t = 1;
        while q.tail_bound(t) * ((t + 1) as f64).powi(2) > 1e-15 && t < 100_000 {
            t += 1;
        }
        let entries: Vec<(u64, f64)> = (1..=t).map(|x| (x, q.pmf(x))).collect();
        Self {
            f1: q.pmf(1),
            s1: s_moment(entries.iter().copied(), 1),
            s2: s_moment(entries.iter().copied(), 2),
        }
    }
}

/// `θ_DR = 1 / (1 - f(1)/s_1) - 1`.
pub fn theta_dr(p: PmfSummary) -> Result<f64> {
    if !(p.s1 > p.f1) {
        return Err(Error::Undefined("theta_DR needs s1 > f(1)".into()));
    }
    Ok(1.0 / (1.0 - p.f1 / p.s1) - 1.0)
}

/// `θ_CL = [f(1)(s_2 - s_1) + s_1 (1 - f(1))(s_1 - f(1))] / (s_1 - f(1))² - 1`.
pub fn theta_cl(p: PmfSummary) -> Result<f64> {
    let gap = p.s1 - p.f1;
    if gap == 0.0 {
        return Err(Error::Undefined("theta_CL needs s1 != f(1)".into()));
    }
    Ok((p.f1 * (p.s2 - p.s1) + p.s1 * (1.0 - p.f1) * gap) / (gap * gap) - 1.0)
}

/// `θ_CB = (1 - f(1)) / (1 - f(1) s_2 / s_1²) - 1`; may be negative.
pub fn theta_cb(p: PmfSummary) -> Result<f64> {
    let denom = 1.0 - p.f1 * p.s2 / (p.s1 * p.s1);
    if denom == 0.0 || !denom.is_finite() {
        return Err(Error::Undefined("theta_CB needs f(1) s2 != s1^2".into()));
    }
    Ok((1.0 - p.f1) / denom - 1.0)
}

/// Integer part of `n (1 + θ)`.
pub fn pseudo_mle(n: u64, theta: f64) -> Result<u64> {
    if !(theta.is_finite() && theta >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "theta = {theta} must be finite and >= 0"
        )));
    }
    Ok((n as f64 * (1.0 + theta)).floor() as u64)
}

/// Chao's `n + n_1² / (2 n_2)`, floored.
pub fn chao1(d: &FrequencyData) -> Result<u64> {
    let n2 = d.count(2);
    if n2 == 0 {
        return Err(Error::Undefined("chao1 needs n2 > 0".into()));
    }
    let n1 = d.count(1) as f64;
    Ok((d.n() as f64 + n1 * n1 / (2.0 * n2 as f64)).floor() as u64)
}

/// All closed-form estimates plus the ladder, with pseudo-MLEs for `c`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimateSet {
    pub theta_dr: Option<f64>,
    pub theta_cl: Option<f64>,
    pub theta_cb: Option<f64>,
    pub theta_ladder: Vec<f64>,
    /// Estimator name -> `floor(n (1 + θ))`, only for `θ >= 0`.
    pub c_hats: BTreeMap<String, u64>,
}

impl EstimateSet {
    pub fn new(n: u64, summary: PmfSummary, theta_ladder: Vec<f64>) -> Self {
        let theta_dr = theta_dr(summary).ok();
        let theta_cl = theta_cl(summary).ok();
        let theta_cb = theta_cb(summary).ok();
        let mut c_hats = BTreeMap::new();
        let named = [("theta_dr", theta_dr), ("theta_cl", theta_cl), ("theta_cb", theta_cb)];
        for (name, value) in named {
            if let Some(c) = value.and_then(|t| pseudo_mle(n, t).ok()) {
                c_hats.insert(name.to_string(), c);
            }
        }
        for (i, &t) in theta_ladder.iter().enumerate() {
            if let Ok(c) = pseudo_mle(n, t) {
                c_hats.insert(format!("theta_{}", i + 1), c);
            }
        }
        Self {
            theta_dr,
            theta_cl,
            theta_cb,
            theta_ladder,
            c_hats,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::parse_frequencies;
    use std::f64::consts::LN_2;

    #[test]
    fn cholera_functionals() {
        let d = parse_frequencies("1 32\n2 16\n3 6\n4 1").unwrap();
        let p = PmfSummary::from_data(&d);
        assert!((theta_dr(p).unwrap() - 0.593).abs() < 5e-4);
        assert!((theta_cl(p).unwrap() - 0.544).abs() < 5e-4);
        assert!((theta_cb(p).unwrap() - 0.484).abs() < 5e-4);
        assert_eq!(chao1(&d).unwrap(), 87);
    }

    #[test]
    fn point_mass_is_fisher_consistent() {
        let q = MixingDistribution::point(LN_2).unwrap();
        let p = PmfSummary::from_mixture(&q);
        for v in [theta_dr(p), theta_cl(p), theta_cb(p)] {
            assert!((v.unwrap() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn pseudo_mle_examples() {
        assert_eq!(pseudo_mle(55, 0.6085).unwrap(), 88);
        assert_eq!(pseudo_mle(1825, 3.051).unwrap(), 7393);
        assert_eq!(pseudo_mle(10, 0.0).unwrap(), 10);
        assert!(pseudo_mle(10, -0.1).is_err());
        assert!(pseudo_mle(10, f64::NAN).is_err());
    }

    #[test]
    fn chao1_edge_cases() {
        let d = parse_frequencies("2 4\n3 1").unwrap();
        assert_eq!(chao1(&d).unwrap(), 5);
        let d = parse_frequencies("1 4\n3 1").unwrap();
        assert!(matches!(chao1(&d), Err(Error::Undefined(_))));
    }

    #[test]
    fn undefined_functionals() {
        // every class seen once: s1 = f(1) = 1
        let p = PmfSummary {
            f1: 1.0,
            s1: 1.0,
            s2: 1.0,
        };
        assert!(theta_dr(p).is_err());
        assert!(theta_cl(p).is_err());
        assert!(theta_cb(p).is_err());
    }

    #[test]
    fn estimate_set_skips_negative() {
        let p = PmfSummary {
            f1: 0.5,
            s1: 2.0,
            s2: 20.0,
        };
        let set = EstimateSet::new(10, p, vec![0.5]);
        assert!(set.theta_cb.unwrap() < 0.0);
        assert!(!set.c_hats.contains_key("theta_cb"));
        assert_eq!(set.c_hats["theta_1"], 15);
    }
}
