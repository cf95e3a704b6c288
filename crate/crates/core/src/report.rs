//! End-to-end analysis of one dataset, with a row block per fitted distribution.

use std::fmt::Write as _;

use serde::Serialize;

use crate::classical::{EstimateSet, PmfSummary};
use crate::envelope::{lower_confidence_limit, EnvelopeConfig, EnvelopeLimit, EnvelopeStatus};
use crate::error::Result;
use crate::hankel::{ladder, ladder_from_moments, HankelLadder, MomentVector, DEFAULT_K_CAP};
use crate::ingest::FrequencyData;
use crate::montecarlo::{bootstrap_quantiles, BootstrapConfig, Estimator, ResampleSummary, RNG_ALGORITHM};
use crate::npmle::{fit_npmle, NpmleConfig, NpmleFit};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnalysisConfig {
    pub k_max: usize,
    pub alpha: f64,
    pub npmle: NpmleConfig,
    pub envelope: EnvelopeConfig,
    /// `None` skips the bootstrap.
    pub bootstrap: Option<BootstrapConfig>,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            k_max: DEFAULT_K_CAP,
            alpha: 0.05,
            npmle: NpmleConfig::default(),
            envelope: EnvelopeConfig::default(),
            bootstrap: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DataSummary {
    pub n: u64,
    pub s: u64,
    pub x_max: u64,
    pub counts: Vec<(u64, u64)>,
}

/// The NPMLE and every functional evaluated at `f_Q̂`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NpmleSection {
    pub fit: NpmleFit,
    pub support_size: usize,
    /// `θ(f_Q̂)`.
    pub odds: f64,
    pub ladder: HankelLadder,
    pub estimates: EstimateSet,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnalysisReport {
    pub version: String,
    pub rng: String,
    pub config: AnalysisConfig,
    pub data: DataSummary,
    pub estimates: EstimateSet,
    pub ladder: HankelLadder,
    pub npmle: Option<NpmleSection>,
    pub envelope: Option<EnvelopeLimit>,
    pub bootstrap: Option<ResampleSummary>,
    /// Problems that degrade the report; empty on a clean run.
    pub diagnostics: Vec<String>,
}

pub fn analyze(d: &FrequencyData, config: &AnalysisConfig) -> Result<AnalysisReport> {
    let mut diagnostics = Vec::new();
    let lad = ladder(d, config.k_max)?;
    let estimates = EstimateSet::new(d.n(), PmfSummary::from_data(d), lad.theta.clone());

    let npmle = match fit_npmle(d, &config.npmle) {
        Ok(fit) => {
            if !fit.converged {
                diagnostics.push(format!(
                    "npmle stopped after {} iterations with sup D / n = {:.3e}",
                    fit.iterations, fit.max_gradient
                ));
            }
            let q = &fit.mixing;
            let model_ladder = ladder_from_moments(&MomentVector::from_mixture(q, 2 * config.k_max)?, config.k_max);
            let estimates = EstimateSet::new(d.n(), PmfSummary::from_mixture(q), model_ladder.theta.clone());
            Some(NpmleSection {
                support_size: q.support_size(),
                odds: q.odds(),
                ladder: model_ladder,
                estimates,
                fit,
            })
        }
        Err(e) => {
            diagnostics.push(format!("npmle failed: {e}"));
            None
        }
    };

    let envelope = match lower_confidence_limit(d, config.alpha, &config.envelope) {
        Ok(limit) => {
            if limit.solution.status == EnvelopeStatus::Infeasible {
                diagnostics.push("envelope LP infeasible on this grid".into());
            }
            Some(limit)
        }
        Err(e) => {
            diagnostics.push(format!("envelope failed: {e}"));
            None
        }
    };

    let bootstrap = match (&config.bootstrap, &npmle) {
        (Some(cfg), Some(section)) => {
            let estimators = Estimator::table_set(lad.len());
            match bootstrap_quantiles(&section.fit.mixing, d.n(), &estimators, cfg) {
                Ok(summary) => {
                    for e in summary.estimators.iter().filter(|e| e.flagged) {
                        diagnostics.push(format!(
                            "{} undefined in {} of {} replicates",
                            e.name, e.missing, summary.replicates
                        ));
                    }
                    Some(summary)
                }
                Err(e) => {
                    diagnostics.push(format!("bootstrap failed: {e}"));
                    None
                }
            }
        }
        (Some(_), None) => {
            diagnostics.push("bootstrap skipped: no NPMLE".into());
            None
        }
        _ => None,
    };

    Ok(AnalysisReport {
        version: env!("CARGO_PKG_VERSION").into(),
        rng: RNG_ALGORITHM.into(),
        config: config.clone(),
        data: DataSummary {
            n: d.n(),
            s: d.s(),
            x_max: d.x_max(),
            counts: d.counts().iter().map(|(&x, &c)| (x, c)).collect(),
        },
        estimates,
        ladder: lad,
        npmle,
        envelope,
        bootstrap,
        diagnostics,
    })
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |x| format!("{x:.3}"))
}

impl AnalysisReport {
    pub fn is_degraded(&self) -> bool {
        !self.diagnostics.is_empty()
    }

    /// Aligned text table at 3 decimals, one column per estimator.
    pub fn table(&self) -> String {
        let k = self.ladder.len().max(self.npmle.as_ref().map_or(0, |s| s.ladder.len()));
        let estimators = Estimator::table_set(k);
        let mut header = vec![String::new()];
        header.extend(estimators.iter().map(Estimator::name));

        let row_from = |label: &str, set: &EstimateSet| -> Vec<String> {
            let mut row = vec![label.to_string()];
            for e in &estimators {
                row.push(cell(match e {
                    Estimator::Dr => set.theta_dr,
                    Estimator::Cl => set.theta_cl,
                    Estimator::Cb => set.theta_cb,
                    Estimator::Theta(j) => set.theta_ladder.get(j - 1).copied(),
                }));
            }
            row
        };
        let mut rows = vec![header, row_from("f_n", &self.estimates)];
        if let Some(s) = &self.npmle {
            rows.push(row_from("f_Q", &s.estimates));
        }
        if let Some(b) = &self.bootstrap {
            let mut row = vec![format!("{:.0}% quantile", b.alpha_q * 100.0)];
            for e in &estimators {
                row.push(cell(b.get(&e.name()).and_then(|s| s.quantile)));
            }
            rows.push(row);
        }

        let widths: Vec<usize> = (0..rows[0].len())
            .map(|j| rows.iter().map(|r| r[j].chars().count()).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        for r in &rows {
            for (j, v) in r.iter().enumerate() {
                if j == 0 {
                    let _ = write!(out, "{v:<w$}", w = widths[0]);
                } else {
                    let _ = write!(out, "  {v:>w$}", w = widths[j]);
                }
            }
            out.push('\n');
        }

        let _ = writeln!(
            out,
            "\nn = {}, S = {}, x_max = {}, chi_hat = {}",
            self.data.n, self.data.s, self.data.x_max, self.ladder.chi_hat
        );
        if let Some(s) = &self.npmle {
            let _ = writeln!(
                out,
                "NPMLE: {} atom(s), theta(f_Q) = {:.3}, sup D / n = {:.1e}{}",
                s.support_size,
                s.odds,
                s.fit.max_gradient,
                if s.fit.converged { "" } else { " (not converged)" }
            );
            for (name, c) in s
                .estimates
                .c_hats
                .iter()
                .filter(|(k, _)| k.starts_with("theta_") && !k.ends_with(char::is_alphabetic))
            {
                let _ = writeln!(out, "  pseudo-MLE from {name}(f_Q): c = {c}");
            }
        }
        if let Some(e) = &self.envelope {
            match e.solution.theta_lower {
                Some(t) => {
                    let _ = writeln!(
                        out,
                        "Envelope ({:.0}%): theta >= {:.3} with eps = {:.3}; c >= {}",
                        (1.0 - e.alpha) * 100.0,
                        t,
                        e.epsilon,
                        e.class_lower_limit.unwrap_or(self.data.n)
                    );
                }
                None => {
                    let _ = writeln!(out, "Envelope: infeasible at eps = {:.3}", e.epsilon);
                }
            }
        }
        for d in &self.diagnostics {
            let _ = writeln!(out, "warning: {d}");
        }
        out
    }
}
