//! Hankel moment matrices and the lower-bound ladder `θ_k = a_k' Γ_k⁻¹ a_k`.
//!
//! The moments `μ(x) = x! f(x)` are those of the measure
//! `dΦ(λ) = (e^λ - 1)⁻¹ dQ(λ)`, whose unknown zeroth moment is the odds
//! `θ`. With `Γ_k = (μ(i+j))_{i,j=1..k}` and `a_k = (μ(1), …, μ(k))`, each
//! `θ_k` is the smallest zeroth moment compatible with a positive definite
//! `H_k`, so `θ_1 < θ_2 < … <= θ`. Consecutive rungs satisfy
//!
//! ```text
//! θ_{k+1} - θ_k = |H̄_k|² / (|Γ_k| |Γ_{k+1}|),   H̄_k = (μ(i+j+1))_{i,j=0..k}
//! ```
//!
//! Raw empirical moments span many orders of magnitude, so all matrix work
//! happens on `μ(x) / r^x` with `r = max(1, μ(2)/μ(1))`. Every `θ_k` is
//! invariant under that rescaling; determinants are reported on the
//! rescaled moments.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::ingest::{factorial, FrequencyData};
use crate::linalg::{determinant, tridiagonal_eigen, Ldl, Matrix};
use crate::mixing::MixingDistribution;

pub const DEFAULT_K_CAP: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MomentSource {
    Empirical,
    Model,
}

/// Moments `μ(1), …, μ(L)`; `μ(0) = θ` is never stored.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentVector {
    mu: Vec<f64>,
    source: MomentSource,
}

impl MomentVector {
    pub fn new(mu: Vec<f64>, source: MomentSource) -> Result<Self> {
        if mu.is_empty() {
            return Err(Error::InvalidArgument("moment vector is empty".into()));
        }
        if let Some(v) = mu.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::InvalidArgument(format!("moment {v} is negative or not finite")));
        }
        Ok(Self { mu, source })
    }

    /// Empirical moments `μ̂(x) = x! n_x / n` for `x = 1..=len`.
    pub fn from_data(d: &FrequencyData, len: usize) -> Result<Self> {
        let mu = (1..=len as u64).map(|x| d.moment(x)).collect::<Result<_>>()?;
        Self::new(mu, MomentSource::Empirical)
    }

    /// Moments from pmf values `f(1), …, f(L)`.
    pub fn from_pmf_values(f: &[f64]) -> Result<Self> {
        let mu = f
            .iter()
            .enumerate()
            .map(|(i, p)| Ok(factorial(i as u64 + 1)? * p))
            .collect::<Result<_>>()?;
        Self::new(mu, MomentSource::Empirical)
    }

    /// Exact moments of `f_Q` for a mixing distribution `Q`.
    pub fn from_mixture(q: &MixingDistribution, len: usize) -> Result<Self> {
        Self::new(q.model_moments(len), MomentSource::Model)
    }

    pub fn len(&self) -> usize {
        self.mu.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mu.is_empty()
    }

    /// `μ(x)` for `x >= 1`.
    pub fn get(&self, x: usize) -> f64 {
        self.mu[x - 1]
    }

    pub fn values(&self) -> &[f64] {
        &self.mu
    }

    pub fn source(&self) -> MomentSource {
        self.source
    }

    /// Largest `k` with `2k <= len`.
    pub fn max_order(&self) -> usize {
        self.mu.len() / 2
    }

    /// Preconditioning scale `r = max(1, μ(2)/μ(1))`.
    pub fn scale(&self) -> f64 {
        match (self.mu.first(), self.mu.get(1)) {
            (Some(&m1), Some(&m2)) if m1 > 0.0 && m2 / m1 > 1.0 => m2 / m1,
            _ => 1.0,
        }
    }

    fn rescaled(&self, r: f64) -> Scaled {
        let mut s = Vec::with_capacity(self.mu.len() + 1);
        s.push(f64::NAN);
        let mut pow = 1.0;
        for &m in &self.mu {
            pow *= r;
            s.push(m / pow);
        }
        Scaled { s, r }
    }

    fn preconditioned(&self) -> Scaled {
        self.rescaled(self.scale())
    }
}

/// Moments divided by `r^x`, indexed from 1 (`s[0]` unused).
struct Scaled {
    s: Vec<f64>,
    r: f64,
}

impl Scaled {
    fn gamma(&self, k: usize) -> Matrix {
        (1..=k).map(|i| (1..=k).map(|j| self.s[i + j]).collect()).collect()
    }

    fn head(&self, k: usize) -> Vec<f64> {
        self.s[1..=k].to_vec()
    }

    fn hbar(&self, k: usize) -> Matrix {
        (0..=k).map(|i| (0..=k).map(|j| self.s[i + j + 1]).collect()).collect()
    }

    fn h(&self, theta: f64, k: usize) -> Matrix {
        (0..=k)
            .map(|i| {
                (0..=k)
                    .map(|j| if i + j == 0 { theta } else { self.s[i + j] })
                    .collect()
            })
            .collect()
    }

    /// Factorization of `Γ_kmax` whose order is `χ̂` capped at `kmax`.
    fn gamma_ldl(&self, kmax: usize) -> Ldl {
        Ldl::new(&self.gamma(kmax))
    }

    fn theta_with(&self, ldl: &Ldl, k: usize) -> f64 {
        let a = self.head(k);
        let g = ldl.solve_leading(&a);
        a.iter().zip(&g).map(|(x, y)| x * y).sum()
    }
}

fn check_order(m: &MomentVector, k: usize) -> Result<()> {
    if k == 0 || 2 * k > m.len() {
        return Err(Error::InvalidArgument(format!(
            "order k = {k} needs moments up to {} but only {} are available",
            2 * k,
            m.len()
        )));
    }
    Ok(())
}

/// `θ_k = a_k' Γ_k⁻¹ a_k`.
pub fn theta_k(m: &MomentVector, k: usize) -> Result<f64> {
    check_order(m, k)?;
    let sc = m.preconditioned();
    let ldl = sc.gamma_ldl(k);
    if ldl.order() < k {
        return Err(Error::LadderEnds {
            requested: k,
            largest_valid: ldl.order(),
        });
    }
    Ok(sc.theta_with(&ldl, k))
}

/// `θ_k` evaluated with an explicit scale `r` instead of the default one.
pub fn theta_k_with_scale(m: &MomentVector, k: usize, r: f64) -> Result<f64> {
    check_order(m, k)?;
    let sc = m.rescaled(r);
    let ldl = sc.gamma_ldl(k);
    if ldl.order() < k {
        return Err(Error::LadderEnds {
            requested: k,
            largest_valid: ldl.order(),
        });
    }
    Ok(sc.theta_with(&ldl, k))
}

/// `χ̂ = max{k <= k_cap : Γ_1, …, Γ_k positive definite}`, 0 if `Γ_1` fails.
pub fn chi_hat(m: &MomentVector, k_cap: usize) -> usize {
    let kmax = k_cap.min(m.max_order());
    if kmax == 0 {
        return 0;
    }
    m.preconditioned().gamma_ldl(kmax).order()
}

/// `|Γ_k|` on the preconditioned scale, or `None` beyond the moments.
pub fn gamma_det(m: &MomentVector, k: usize) -> Option<f64> {
    (k >= 1 && 2 * k <= m.len()).then(|| determinant(&m.preconditioned().gamma(k)))
}

/// `|H̄_k|` with `H̄_k = (μ(i+j+1))_{i,j=0..k}`, preconditioned.
pub fn hbar_det(m: &MomentVector, k: usize) -> Option<f64> {
    (2 * k + 1 <= m.len()).then(|| determinant(&m.preconditioned().hbar(k)))
}

/// `|H_k|` with `H_k = (μ(i+j))_{i,j=0..k}` and `μ(0) = theta`, preconditioned.
pub fn h_det(m: &MomentVector, theta: f64, k: usize) -> Option<f64> {
    (2 * k <= m.len()).then(|| determinant(&m.preconditioned().h(theta, k)))
}

/// The ladder `θ̂_1 < … < θ̂_m`, `m = min(χ̂, k_cap)`, with its determinants.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HankelLadder {
    /// `θ_1, …, θ_m` from the quadratic form directly.
    pub theta: Vec<f64>,
    /// The same rungs accumulated through the determinant recurrence.
    pub theta_recurrence: Vec<f64>,
    /// `|Γ_1|, …, |Γ_m|` on the preconditioned scale.
    pub gamma_dets: Vec<f64>,
    /// `|H̄_1|, …, |H̄_{m-1}|` on the preconditioned scale.
    pub hbar_dets: Vec<f64>,
    pub chi_hat: usize,
    pub k_cap: usize,
    pub scale: f64,
}

impl HankelLadder {
    /// Largest relative gap between the direct and recurrence rungs.
    pub fn recurrence_error(&self) -> f64 {
        self.theta
            .iter()
            .zip(&self.theta_recurrence)
            .map(|(a, b)| ((a - b) / a).abs())
            .fold(0.0, f64::max)
    }

    pub fn len(&self) -> usize {
        self.theta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta.is_empty()
    }

    /// `θ_k`, 1-based.
    pub fn get(&self, k: usize) -> Option<f64> {
        k.checked_sub(1).and_then(|i| self.theta.get(i).copied())
    }
}

/// Ladder from empirical moments of `d`, using `μ̂(1..=2 k_cap)`.
pub fn ladder(d: &FrequencyData, k_cap: usize) -> Result<HankelLadder> {
    let m = MomentVector::from_data(d, 2 * k_cap.max(1))?;
    Ok(ladder_from_moments(&m, k_cap))
}

/// Ladder from any moment vector; truncates at `χ̂` instead of failing.
pub fn ladder_from_moments(m: &MomentVector, k_cap: usize) -> HankelLadder {
    let kmax = k_cap.min(m.max_order());
    let sc = m.preconditioned();
    let mut out = HankelLadder {
        theta: Vec::new(),
        theta_recurrence: Vec::new(),
        gamma_dets: Vec::new(),
        hbar_dets: Vec::new(),
        chi_hat: 0,
        k_cap,
        scale: sc.r,
    };
    if kmax == 0 {
        return out;
    }
    let ldl = sc.gamma_ldl(kmax);
    let chi = ldl.order();
    out.chi_hat = chi;

    let mut prev_det = 1.0;
    for k in 1..=chi {
        let theta = sc.theta_with(&ldl, k);
        let det = ldl.leading_det(k);
        // |H̄_{k-1}|; H̄_0 = (μ(1))
        let hbar = determinant(&sc.hbar(k - 1));
        let stepped = out.theta_recurrence.last().copied().unwrap_or(0.0) + hbar * hbar / (prev_det * det);
        if k >= 2 {
            out.hbar_dets.push(hbar);
        }
        out.theta.push(theta);
        out.theta_recurrence.push(stepped);
        out.gamma_dets.push(det);
        prev_det = det;
    }
    out
}

/// `k`-atom measure reproducing `θ_k` and `μ(1..=2k-1)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuadratureRepresentation {
    /// Nodes `ξ_j` and `Φ_k`-weights `w_j` (mass `θ_k`).
    pub phi: MixingDistribution,
    /// `Q_k = (e^λ - 1) dΦ_k`, left unnormalized.
    pub mixing: MixingDistribution,
}

impl QuadratureRepresentation {
    /// Total mass `Z` of `Q_k`; equals 1 for exact model moments.
    pub fn mass(&self) -> f64 {
        self.mixing.mass()
    }
}

/// Gauss quadrature for the moment sequence `(θ_k, μ(1), …, μ(2k-1))`.
///
/// Builds the Jacobi matrix from a partial Cholesky factor of the Hankel
/// matrix `(μ(i+j))_{i,j=0..k}` (rows `0..k` only, since `|H_k| = 0` at
/// `μ(0) = θ_k`) and reads nodes and weights off its eigen-decomposition.
pub fn quadrature_representation(m: &MomentVector, k: usize, theta_k: f64) -> Result<QuadratureRepresentation> {
    if k == 0 || 2 * k > m.len() + 1 {
        return Err(Error::InvalidArgument(format!(
            "quadrature of order {k} needs moments up to {}",
            (2 * k).saturating_sub(1)
        )));
    }
    let sc = m.preconditioned();
    let moment = |i: usize| if i == 0 { theta_k } else { sc.s[i] };

    // upper factor R with H = RᵀR, rows 0..k, columns 0..=k
    let mut r = vec![vec![0.0; k + 1]; k];
    for i in 0..k {
        let d = moment(2 * i) - (0..i).map(|p| r[p][i] * r[p][i]).sum::<f64>();
        if !(d > 0.0) || !d.is_finite() {
            return Err(Error::Quadrature(format!(
                "Hankel matrix of order {} is not positive definite",
                i + 1
            )));
        }
        r[i][i] = d.sqrt();
        for j in i + 1..=k {
            let s: f64 = (0..i).map(|p| r[p][i] * r[p][j]).sum();
            r[i][j] = (moment(i + j) - s) / r[i][i];
        }
    }
    let diag: Vec<f64> = (0..k)
        .map(|j| {
            let here = r[j][j + 1] / r[j][j];
            let before = if j == 0 { 0.0 } else { r[j - 1][j] / r[j - 1][j - 1] };
            here - before
        })
        .collect();
    let off: Vec<f64> = (0..k.saturating_sub(1)).map(|j| r[j + 1][j + 1] / r[j][j]).collect();
    let pairs = tridiagonal_eigen(&diag, &off)
        .ok_or_else(|| Error::Quadrature("Jacobi eigenvalue iteration did not converge".into()))?;

    let mut nodes = Vec::with_capacity(k);
    let mut phi_weights = Vec::with_capacity(k);
    for (node, z) in pairs {
        if !(node > 0.0) {
            return Err(Error::Quadrature(format!("node {} lies outside (0, inf)", node * sc.r)));
        }
        nodes.push(node * sc.r);
        phi_weights.push(theta_k * z * z);
    }
    let q_weights: Vec<f64> = nodes.iter().zip(&phi_weights).map(|(a, w)| w * a.exp_m1()).collect();
    Ok(QuadratureRepresentation {
        phi: MixingDistribution::new(nodes.clone(), phi_weights)?,
        mixing: MixingDistribution::new(nodes, q_weights)?,
    })
}

/// Gradient of `θ_k` with respect to `f(1), …, f(2k)`.
pub fn theta_k_gradient(m: &MomentVector, k: usize) -> Result<Vec<f64>> {
    check_order(m, k)?;
    let sc = m.preconditioned();
    let ldl = sc.gamma_ldl(k);
    if ldl.order() < k {
        return Err(Error::LadderEnds {
            requested: k,
            largest_valid: ldl.order(),
        });
    }
    let g = ldl.solve_leading(&sc.head(k));
    // ∂θ/∂s(x) = 2 g_x [x <= k] - Σ_{i+j=x} g_i g_j
    let mut grad_s = vec![0.0; 2 * k + 1];
    for i in 1..=k {
        grad_s[i] += 2.0 * g[i - 1];
        for j in 1..=k {
            grad_s[i + j] -= g[i - 1] * g[j - 1];
        }
    }
    (1..=2 * k)
        .map(|x| Ok(grad_s[x] * factorial(x as u64)? / sc.r.powi(x as i32)))
        .collect()
}

/// Delta-method standard error of `θ̂_k` under multinomial sampling of `n`
/// classes from the empirical pmf.
pub fn delta_se(d: &FrequencyData, k: usize) -> Result<f64> {
    let m = MomentVector::from_data(d, 2 * k)?;
    let grad = theta_k_gradient(&m, k)?;
    let f: Vec<f64> = (1..=2 * k as u64).map(|x| d.pmf(x)).collect();
    let mean: f64 = grad.iter().zip(&f).map(|(g, p)| g * p).sum();
    let second: f64 = grad.iter().zip(&f).map(|(g, p)| g * g * p).sum();
    Ok(((second - mean * mean).max(0.0) / d.n() as f64).sqrt())
}
