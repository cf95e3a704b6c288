//! Nonparametric maximum likelihood for the mixing distribution `Q`.
//!
//! The conditional likelihood `Σ_x n_x ln f_Q(x)` is concave in `Q` and is
//! maximized by a discrete measure with few atoms. Optimality is certified
//! by the directional derivative
//!
//! ```text
//! D(λ; Q) = Σ_x n_x f_λ(x) / f_Q(x) - n,
//! ```
//!
//! which is `<= 0` everywhere exactly at the maximizer and `= 0` on its
//! support. The fit alternates three moves until `sup_λ D <= tol · n`:
//! insert every positive local maximum of `D` as a zero-weight atom,
//! update weights on the active set with a constrained Newton step
//! (a nonnegative least-squares fit of the quadratic model, followed by a
//! backtracking line search), and polish each atom location along the
//! likelihood. No move ever decreases the likelihood.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::ingest::FrequencyData;
use crate::linalg::least_squares;
use crate::linalg::{nnls, Matrix};
use crate::mixing::{ln_expm1, ln_factorial, truncated_poisson_pmf, MixingDistribution, WEIGHT_FLOOR};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NpmleConfig {
    /// Number of log-spaced starting atoms.
    pub initial_atoms: usize,
    pub grid_min: f64,
    /// Upper end of the starting grid and gradient scan; `None` means
    /// `x_max + 10 √x_max`.
    pub grid_max: Option<f64>,
    /// Log-spaced points in the gradient scan.
    pub scan_points: usize,
    /// Stop once `sup D <= tol · n`.
    pub tol: f64,
    pub max_iter: usize,
    /// Atoms within this relative distance are merged.
    pub merge_tol: f64,
}

impl Default for NpmleConfig {
    fn default() -> Self {
        Self {
            initial_atoms: 50,
            grid_min: 1e-3,
            grid_max: None,
            scan_points: 1000,
            tol: 1e-6,
            max_iter: 500,
            merge_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NpmleFit {
    pub mixing: MixingDistribution,
    pub log_likelihood: f64,
    /// `sup_λ D(λ; Q̂)` over the final scan, in units of the total count.
    pub max_gradient: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Log-likelihood after every outer iteration.
    pub history: Vec<f64>,
}

/// `Σ_x n_x ln f_Q(x)`.
pub fn log_likelihood(q: &MixingDistribution, d: &FrequencyData) -> f64 {
    d.counts().iter().map(|(&x, &nx)| nx as f64 * q.pmf(x).ln()).sum()
}

/// `D(λ; Q) = Σ_x n_x f_λ(x) / f_Q(x) - n`.
pub fn gradient_fn(lambda: f64, q: &MixingDistribution, d: &FrequencyData) -> f64 {
    let s: f64 = d
        .counts()
        .iter()
        .map(|(&x, &nx)| nx as f64 * truncated_poisson_pmf(lambda, x) / q.pmf(x))
        .sum();
    s - d.n() as f64
}

pub fn fit_npmle(d: &FrequencyData, config: &NpmleConfig) -> Result<NpmleFit> {
    let xs: Vec<u64> = d.counts().keys().copied().collect();
    let counts: Vec<f64> = d.counts().values().map(|&c| c as f64).collect();
    fit_npmle_weighted(&xs, &counts, config)
}

/// NPMLE for real-valued counts `counts[i]` at frequencies `xs[i]`.
pub fn fit_npmle_weighted(xs: &[u64], counts: &[f64], config: &NpmleConfig) -> Result<NpmleFit> {
    if xs.is_empty() || xs.len() != counts.len() {
        return Err(Error::InvalidArgument("need matching, nonempty xs and counts".into()));
    }
    if xs.contains(&0) || counts.iter().any(|c| !(*c >= 0.0)) {
        return Err(Error::InvalidArgument(
            "frequencies must be >= 1 and counts >= 0".into(),
        ));
    }
    let x_max = *xs.iter().max().unwrap() as f64;
    let hi = config.grid_max.unwrap_or(x_max + 10.0 * x_max.sqrt());
    let lo = config.grid_min;
    if !(lo > 0.0 && hi > lo) {
        return Err(Error::InvalidArgument(format!("bad NPMLE grid [{lo}, {hi}]")));
    }
    let scan = log_space(lo.min(1e-4), hi, config.scan_points.max(2));
    let problem = Problem::new(xs, counts, scan[0]);
    if !(problem.total > 0.0) {
        return Err(Error::Empty);
    }

    let mut support = Support {
        atoms: log_space(lo, hi, config.initial_atoms.max(1)),
        weights: vec![1.0 / config.initial_atoms.max(1) as f64; config.initial_atoms.max(1)],
    };
    let mut ll = problem.log_likelihood(&support);
    let mut history = Vec::new();
    let mut converged = false;
    let mut max_gradient = f64::INFINITY;
    let mut iterations = 0;

    while iterations < config.max_iter {
        let fq = problem.mixture(&support);
        let grads: Vec<f64> = scan.iter().map(|&l| problem.gradient(l, &fq)).collect();
        max_gradient = problem.max_gradient(&support, &scan);
        if max_gradient <= config.tol {
            converged = true;
            break;
        }
        iterations += 1;

        for j in local_maxima(&grads) {
            let a = scan[j.saturating_sub(1)];
            let b = scan[(j + 1).min(scan.len() - 1)];
            let peak = golden_max(|l| problem.gradient(l, &fq), a, b, 1e-10);
            support.insert(peak);
        }

        ll = problem.newton_weights(&mut support, ll);
        support.prune();
        problem.polish_atoms(&mut support, ll);
        support.merge(config.merge_tol);
        problem.newton_polish(&mut support, 50);
        support.normalize();
        ll = problem.log_likelihood(&support);
        history.push(ll);
    }

    if converged {
        support = problem.consolidate(support, &scan, config.tol);
        ll = problem.log_likelihood(&support);
        max_gradient = problem.max_gradient(&support, &scan);
    }

    let mixing =
        MixingDistribution::with_merge_tolerance(support.atoms, support.weights, config.merge_tol)?.normalized();
    Ok(NpmleFit {
        log_likelihood: ll,
        mixing,
        max_gradient,
        iterations,
        converged,
        history,
    })
}

#[derive(Clone)]
struct Support {
    atoms: Vec<f64>,
    weights: Vec<f64>,
}

impl Support {
    fn insert(&mut self, atom: f64) {
        let pos = self.atoms.partition_point(|&a| a < atom);
        if self.atoms.get(pos) == Some(&atom) {
            return;
        }
        self.atoms.insert(pos, atom);
        self.weights.insert(pos, 0.0);
    }

    fn prune(&mut self) {
        let keep: Vec<bool> = self.weights.iter().map(|&w| w >= WEIGHT_FLOOR).collect();
        let mut i = 0;
        self.atoms.retain(|_| {
            i += 1;
            keep[i - 1]
        });
        self.weights.retain(|&w| w >= WEIGHT_FLOOR);
        let total: f64 = self.weights.iter().sum();
        self.weights.iter_mut().for_each(|w| *w /= total);
    }

    fn normalize(&mut self) {
        let total: f64 = self.weights.iter().sum();
        self.weights.iter_mut().for_each(|w| *w /= total);
    }

    fn merge(&mut self, rel_tol: f64) {
        let mut atoms: Vec<f64> = Vec::with_capacity(self.atoms.len());
        let mut weights: Vec<f64> = Vec::with_capacity(self.atoms.len());
        for (&a, &w) in self.atoms.iter().zip(&self.weights) {
            match (atoms.last_mut(), weights.last_mut()) {
                (Some(pa), Some(pw)) if a - *pa <= rel_tol * a => {
                    *pa = (*pa * *pw + a * w) / (*pw + w);
                    *pw += w;
                }
                _ => {
                    atoms.push(a);
                    weights.push(w);
                }
            }
        }
        self.atoms = atoms;
        self.weights = weights;
    }
}

struct Problem<'a> {
    xs: &'a [u64],
    counts: &'a [f64],
    total: f64,
    ln_fact: Vec<f64>,
    /// Smallest admissible atom; `f_λ` tends to a point mass at 1 as `λ → 0`.
    floor: f64,
}

impl<'a> Problem<'a> {
    fn new(xs: &'a [u64], counts: &'a [f64], floor: f64) -> Self {
        let ln_fact = xs.iter().map(|&x| ln_factorial(x)).collect();
        Self {
            xs,
            counts,
            total: counts.iter().sum(),
            ln_fact,
            floor,
        }
    }

    /// `f_λ(x)` at every observed `x`.
    fn column(&self, lambda: f64) -> Vec<f64> {
        let (ln_l, ln_e) = (lambda.ln(), ln_expm1(lambda));
        self.xs
            .iter()
            .zip(&self.ln_fact)
            .map(|(&x, lf)| (x as f64 * ln_l - lf - ln_e).exp())
            .collect()
    }

    fn mixture(&self, s: &Support) -> Vec<f64> {
        let mut f = vec![0.0; self.xs.len()];
        for (&a, &w) in s.atoms.iter().zip(&s.weights) {
            if w > 0.0 {
                for (fi, p) in f.iter_mut().zip(self.column(a)) {
                    *fi += w * p;
                }
            }
        }
        f
    }

    fn ll_of(&self, fq: &[f64]) -> f64 {
        self.counts
            .iter()
            .zip(fq)
            .filter(|(c, _)| **c > 0.0)
            .map(|(c, f)| c * f.ln())
            .sum()
    }

    fn log_likelihood(&self, s: &Support) -> f64 {
        self.ll_of(&self.mixture(s))
    }

    fn gradient(&self, lambda: f64, fq: &[f64]) -> f64 {
        self.column(lambda)
            .iter()
            .zip(self.counts)
            .zip(fq)
            .map(|((p, c), f)| c * p / f)
            .sum::<f64>()
            - self.total
    }

    /// `sup D / total` over the scan grid and the current atoms.
    fn max_gradient(&self, s: &Support, scan: &[f64]) -> f64 {
        let fq = self.mixture(s);
        scan.iter()
            .chain(&s.atoms)
            .map(|&l| self.gradient(l, &fq))
            .fold(f64::MIN, f64::max)
            / self.total
    }

    /// Merges adjacent atoms while the merged fit, re-optimized on its
    /// smaller support, still meets the optimality certificate.
    fn consolidate(&self, mut s: Support, scan: &[f64], tol: f64) -> Support {
        'outer: while s.atoms.len() > 1 {
            let mut pairs: Vec<usize> = (0..s.atoms.len() - 1).collect();
            pairs.sort_by(|&i, &j| {
                let gap = |k: usize| s.atoms[k + 1] / s.atoms[k];
                gap(i).total_cmp(&gap(j))
            });
            for i in pairs {
                let mut trial = s.clone();
                let (a, b) = (trial.atoms[i], trial.atoms[i + 1]);
                let (wa, wb) = (trial.weights[i], trial.weights[i + 1]);
                trial.atoms[i] = (a * wa + b * wb) / (wa + wb);
                trial.weights[i] = wa + wb;
                trial.atoms.remove(i + 1);
                trial.weights.remove(i + 1);
                let mut ll = self.log_likelihood(&trial);
                for _ in 0..5 {
                    self.newton_weights(&mut trial, ll);
                    trial.prune();
                    self.newton_polish(&mut trial, 50);
                    trial.normalize();
                    ll = self.log_likelihood(&trial);
                    if self.max_gradient(&trial, scan) <= tol {
                        s = trial;
                        continue 'outer;
                    }
                }
            }
            break;
        }
        s
    }

    /// One constrained Newton step on the weights with Armijo backtracking.
    fn newton_weights(&self, s: &mut Support, ll: f64) -> f64 {
        let fq = self.mixture(s);
        let cols: Vec<Vec<f64>> = s.atoms.iter().map(|&a| self.column(a)).collect();
        let j = cols.len();
        let penalty = 10.0 * self.total.sqrt();
        let mut a: Matrix = Vec::with_capacity(self.xs.len() + 1);
        let mut b = Vec::with_capacity(self.xs.len() + 1);
        for (i, (&c, &f)) in self.counts.iter().zip(&fq).enumerate() {
            let root = c.sqrt();
            a.push(cols.iter().map(|col| root * col[i] / f).collect());
            b.push(2.0 * root);
        }
        a.push(vec![penalty; j]);
        b.push(penalty);
        let mut target = nnls(&a, &b);
        let total: f64 = target.iter().sum();
        if !(total > 0.0) {
            return ll;
        }
        target.iter_mut().for_each(|w| *w /= total);

        let dir: Vec<f64> = target.iter().zip(&s.weights).map(|(t, w)| t - w).collect();
        let slope: f64 = (0..self.xs.len())
            .map(|i| {
                let change: f64 = cols.iter().zip(&dir).map(|(col, d)| col[i] * d).sum();
                self.counts[i] * change / fq[i]
            })
            .sum();
        let mut step = 1.0;
        while step > 1e-12 {
            let trial: Vec<f64> = s
                .weights
                .iter()
                .zip(&dir)
                .map(|(w, d)| (w + step * d).max(0.0))
                .collect();
            let f_trial: Vec<f64> = (0..self.xs.len())
                .map(|i| cols.iter().zip(&trial).map(|(col, w)| col[i] * w).sum())
                .collect();
            let ll_trial = self.ll_of(&f_trial);
            if ll_trial >= ll + 0.3 * step * slope.max(0.0) && ll_trial >= ll {
                s.weights = trial;
                return ll_trial;
            }
            step *= 0.5;
        }
        ll
    }

    /// `G(w, ξ) = Σ c_x ln f(x) − total · Σ w`; its maximizer over `w >= 0`
    /// has `Σ w = 1`, so the weights need no explicit constraint.
    fn lagrangian(&self, s: &Support) -> f64 {
        self.log_likelihood(s) - self.total * s.weights.iter().sum::<f64>()
    }

    /// Damped Newton ascent on all weights and atoms jointly.
    fn newton_polish(&self, s: &mut Support, steps: usize) {
        let m = s.atoms.len();
        let nx = self.xs.len();
        let mut damping = 1e-8;
        let mut value = self.lagrangian(s);
        for _ in 0..steps {
            let fq = self.mixture(s);
            // p, p' and p'' at each (atom, x)
            let mut p = vec![vec![0.0; nx]; m];
            let mut dp = vec![vec![0.0; nx]; m];
            let mut ddp = vec![vec![0.0; nx]; m];
            for j in 0..m {
                let xi = s.atoms[j];
                let tail = -(-xi).exp_m1();
                let curv = (-xi).exp() / (tail * tail);
                p[j] = self.column(xi);
                for i in 0..nx {
                    let x = self.xs[i] as f64;
                    let a = x / xi - 1.0 / tail;
                    dp[j][i] = p[j][i] * a;
                    ddp[j][i] = p[j][i] * (a * a - x / (xi * xi) + curv);
                }
            }
            let dim = 2 * m;
            let mut g = vec![0.0; dim];
            let mut h = vec![vec![0.0; dim]; dim];
            for i in 0..nx {
                let (c, f) = (self.counts[i], fq[i]);
                if c == 0.0 {
                    continue;
                }
                // derivative of f with respect to each parameter
                let df: Vec<f64> = (0..m)
                    .map(|j| p[j][i])
                    .chain((0..m).map(|j| s.weights[j] * dp[j][i]))
                    .collect();
                for a in 0..dim {
                    g[a] += c * df[a] / f;
                    for b in 0..dim {
                        h[a][b] -= c * df[a] * df[b] / (f * f);
                    }
                }
                for j in 0..m {
                    h[j][m + j] += c * dp[j][i] / f;
                    h[m + j][j] += c * dp[j][i] / f;
                    h[m + j][m + j] += c * s.weights[j] * ddp[j][i] / f;
                }
            }
            for gj in g.iter_mut().take(m) {
                *gj -= self.total;
            }
            for j in 0..m {
                if s.atoms[j] <= self.floor && g[m + j] <= 0.0 {
                    for a in 0..dim {
                        h[a][m + j] = 0.0;
                        h[m + j][a] = 0.0;
                    }
                    h[m + j][m + j] = -1.0;
                    g[m + j] = 0.0;
                }
            }
            let scale = g.iter().map(|v| v.abs()).fold(0.0, f64::max);
            if scale <= 1e-12 * self.total {
                return;
            }
            let mut improved = false;
            while damping < 1e8 {
                let mut reg = h.clone();
                for (a, row) in reg.iter_mut().enumerate() {
                    row[a] -= damping * (1.0 + h[a][a].abs());
                }
                let rhs: Vec<f64> = g.iter().map(|v| -v).collect();
                let step = least_squares(&reg, &rhs);
                let mut trial = s.clone();
                let mut ok = true;
                for j in 0..m {
                    trial.weights[j] += step[j];
                    trial.atoms[j] = (trial.atoms[j] + step[m + j]).max(self.floor);
                    ok &= trial.weights[j] > 0.0 && trial.atoms[j].is_finite();
                }
                ok &= trial.atoms.windows(2).all(|w| w[1] > w[0]);
                if ok {
                    let v = self.lagrangian(&trial);
                    if v >= value {
                        *s = trial;
                        value = v;
                        damping = (damping * 0.1).max(1e-12);
                        improved = true;
                        break;
                    }
                }
                damping *= 10.0;
            }
            if !improved {
                return;
            }
        }
    }

    /// Coordinate ascent on each atom location, bracketed by its neighbors.
    fn polish_atoms(&self, s: &mut Support, mut ll: f64) -> f64 {
        for j in 0..s.atoms.len() {
            let here = s.atoms[j];
            let lo = if j == 0 {
                (here * 0.5).max(self.floor)
            } else {
                0.5 * (s.atoms[j - 1] + here)
            };
            let hi = if j + 1 == s.atoms.len() {
                here * 1.5
            } else {
                0.5 * (here + s.atoms[j + 1])
            };
            let objective = |l: f64| {
                let mut trial = Support {
                    atoms: s.atoms.clone(),
                    weights: s.weights.clone(),
                };
                trial.atoms[j] = l;
                self.log_likelihood(&trial)
            };
            let best = golden_max(objective, lo, hi, 1e-12);
            let value = objective(best);
            if value > ll {
                s.atoms[j] = best;
                ll = value;
            }
        }
        ll
    }
}

fn log_space(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

fn local_maxima(values: &[f64]) -> Vec<usize> {
    let n = values.len();
    (0..n)
        .filter(|&j| {
            values[j] > 0.0 && (j == 0 || values[j] >= values[j - 1]) && (j + 1 == n || values[j] > values[j + 1])
        })
        .collect()
}

/// Golden-section search for a maximum of a unimodal `f` on `[a, b]`.
pub(crate) fn golden_max(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, rel_tol: f64) -> f64 {
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - ratio * (b - a);
    let mut d = a + ratio * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a).abs() > rel_tol * (a.abs() + b.abs()) {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - ratio * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + ratio * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}
