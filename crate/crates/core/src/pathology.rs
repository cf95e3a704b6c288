//! The contamination family `Q_s = (1 − π) Q + π δ(η)` and distances
//! between zero-truncated Poisson mixtures.
//!
//! With `π = s` and `η = s²` the contaminated pmf converges to `f_Q` in
//! total variation while `θ(f_{Q_s})` diverges like `1/s`, so `θ` is not
//! continuous in either distance.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::mixing::{undetected_odds, MixingDistribution};

/// Both tails beyond the truncation point are certified below this.
pub const TAIL_TOLERANCE: f64 = 1e-10;
const MAX_TRUNCATION: u64 = 1_000_000;

/// `(1 − π) Q + π δ(η)`.
pub fn contaminate(q: &MixingDistribution, pi: f64, eta: f64) -> Result<MixingDistribution> {
    if !(0.0..=1.0).contains(&pi) {
        return Err(Error::InvalidArgument(format!("pi = {pi} is not a probability")));
    }
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(Error::InvalidArgument(format!("eta = {eta} must be positive")));
    }
    let q = q.normalized();
    let mut atoms = q.atoms().to_vec();
    let mut weights: Vec<f64> = q.weights().iter().map(|w| w * (1.0 - pi)).collect();
    atoms.push(eta);
    weights.push(pi);
    MixingDistribution::new(atoms, weights)
}

/// A distance known to lie in `[lower, upper]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DistanceInterval {
    pub lower: f64,
    pub upper: f64,
    pub truncation: u64,
}

/// Smallest `T` at which both certified tails fall below [`TAIL_TOLERANCE`].
pub fn auto_truncation(f: &MixingDistribution, g: &MixingDistribution) -> u64 {
    let mut t = 1;
    while (f.tail_bound(t) >= TAIL_TOLERANCE || g.tail_bound(t) >= TAIL_TOLERANCE) && t < MAX_TRUNCATION {
        t = if t < 64 { t + 1 } else { t + t / 8 };
    }
    t
}

fn summed(
    f: &MixingDistribution,
    g: &MixingDistribution,
    truncation: Option<u64>,
    term: impl Fn(f64, f64) -> f64,
) -> (f64, f64, u64) {
    let t = truncation.unwrap_or_else(|| auto_truncation(f, g));
    let (fm, gm) = (f.normalized(), g.normalized());
    let body: f64 = (1..=t).map(|x| term(fm.pmf(x), gm.pmf(x))).sum();
    (body, fm.tail_bound(t) + gm.tail_bound(t), t)
}

/// `τ(f, g) = Σ |f(x) − g(x)|`; the tail beyond `T` adds at most the two
/// tail masses.
pub fn total_variation(f: &MixingDistribution, g: &MixingDistribution, truncation: Option<u64>) -> DistanceInterval {
    let (body, tail, truncation) = summed(f, g, truncation, |a, b| (a - b).abs());
    DistanceInterval {
        lower: body,
        upper: (body + tail).min(2.0),
        truncation,
    }
}

/// `h(f, g) = (Σ (√f(x) − √g(x))²)^{1/2}`.
pub fn hellinger(f: &MixingDistribution, g: &MixingDistribution, truncation: Option<u64>) -> DistanceInterval {
    let (body, tail, truncation) = summed(f, g, truncation, |a, b| (a.sqrt() - b.sqrt()).powi(2));
    DistanceInterval {
        lower: body.sqrt(),
        upper: (body + tail).min(2.0).sqrt(),
        truncation,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRow {
    pub s: f64,
    pub pi_s: f64,
    pub eta_s: f64,
    pub theta_mixed: f64,
    /// `(1 − π) θ(f_Q) + π / (e^η − 1)`.
    pub theta_closed_form: f64,
    /// `2 π(s)`.
    pub tv_bound: f64,
    pub tv_exact: DistanceInterval,
    pub hellinger: DistanceInterval,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContaminationTrace {
    pub base_odds: f64,
    pub rows: Vec<TraceRow>,
}

/// Rows for `Q_s` with `π = s`, `η = s²` at each `s`.
pub fn blowup_trace(q: &MixingDistribution, s_values: &[f64]) -> Result<ContaminationTrace> {
    let base = q.normalized();
    let base_odds = base.odds();
    let rows = s_values
        .iter()
        .map(|&s| {
            if !(s > 0.0 && s < 1.0) {
                return Err(Error::InvalidArgument(format!("s = {s} is not in (0, 1)")));
            }
            let (pi, eta) = (s, s * s);
            let qs = contaminate(&base, pi, eta)?;
            Ok(TraceRow {
                s,
                pi_s: pi,
                eta_s: eta,
                theta_mixed: qs.odds(),
                theta_closed_form: (1.0 - pi) * base_odds + pi * undetected_odds(eta),
                tv_bound: 2.0 * pi,
                tv_exact: total_variation(&qs, &base, None),
                hellinger: hellinger(&qs, &base, None),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ContaminationTrace { base_odds, rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::LN_2;

    #[test]
    fn contamination_edges() {
        let q = MixingDistribution::point(LN_2).unwrap();
        assert_eq!(contaminate(&q, 0.0, 3.0).unwrap(), q);
        assert_eq!(
            contaminate(&q, 1.0, 3.0).unwrap(),
            MixingDistribution::point(3.0).unwrap()
        );
        let mixed = contaminate(&q, 0.5, 1.5f64.ln()).unwrap();
        assert!((mixed.odds() - 1.5).abs() < 1e-12);
        let merged = contaminate(&q, 0.25, LN_2).unwrap();
        assert_eq!(merged.support_size(), 1);
        assert!(contaminate(&q, 1.1, 1.0).is_err());
        assert!(contaminate(&q, 0.1, 0.0).is_err());
    }

    #[test]
    fn distances_between_points() {
        let a = MixingDistribution::point(1.0).unwrap();
        let b = MixingDistribution::point(2.0).unwrap();
        let tv = total_variation(&a, &b, None);
        assert!(tv.upper - tv.lower <= 2.0 * TAIL_TOLERANCE);
        assert!((tv.lower - 0.537883).abs() < 1e-6, "{tv:?}");
        let h = hellinger(&a, &b, None);
        assert!(h.lower >= tv.upper / 2.0 && h.upper <= tv.lower.sqrt());

        let same = total_variation(&a, &a, None);
        assert_eq!(same.lower, 0.0);
        assert_eq!(hellinger(&a, &a, None).lower, 0.0);
    }

    #[test]
    fn trace_blows_up() {
        let q = MixingDistribution::point(LN_2).unwrap();
        let s = [1e-1, 1e-2, 1e-3, 1e-4];
        let trace = blowup_trace(&q, &s).unwrap();
        assert!((trace.rows[0].theta_mixed - 10.850083).abs() < 1e-5);
        for w in trace.rows.windows(2) {
            assert!(w[1].theta_mixed > w[0].theta_mixed);
        }
        for r in &trace.rows {
            assert!(((r.theta_mixed - r.theta_closed_form) / r.theta_closed_form).abs() < 1e-12);
            assert!(r.tv_exact.lower <= r.tv_bound + 1e-12);
        }
        assert!(blowup_trace(&q, &[1.0]).is_err());
    }
}
