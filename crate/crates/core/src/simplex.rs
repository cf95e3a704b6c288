//! Dense two-phase simplex with Bland's rule.
//!
//! Solves `min cᵀx` subject to `x >= 0` and rows `aᵢᵀx {<=, >=, =} bᵢ`.
//! Bland's rule makes every run deterministic and rules out cycling on
//! degenerate vertices.

use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Relation {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub coeffs: Vec<f64>,
    pub relation: Relation,
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub constraints: Vec<Constraint>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome {
    Optimal { x: Vec<f64>, objective: f64 },
    Infeasible,
    Unbounded,
    IterationLimit,
}

const PIVOT_TOL: f64 = 1e-11;
const COST_TOL: f64 = 1e-11;
const MAX_PIVOTS: usize = 200_000;

impl LinearProgram {
    pub fn new(objective: Vec<f64>) -> Self {
        Self {
            objective,
            constraints: Vec::new(),
        }
    }

    pub fn add(&mut self, coeffs: Vec<f64>, relation: Relation, rhs: f64) {
        debug_assert_eq!(coeffs.len(), self.objective.len());
        self.constraints.push(Constraint { coeffs, relation, rhs });
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn minimize(&self) -> LpOutcome {
        Tableau::build(self).solve(&self.objective)
    }
}

struct Tableau {
    rows: Vec<Vec<f64>>,
    basis: Vec<usize>,
    /// reduced costs; the last entry holds minus the objective value
    cost: Vec<f64>,
    n_vars: usize,
    first_artificial: usize,
    width: usize,
}

impl Tableau {
    fn build(lp: &LinearProgram) -> Self {
        let n = lp.num_vars();
        let m = lp.constraints.len();
        // normalize to b >= 0
        let normalized: Vec<(Vec<f64>, Relation, f64)> = lp
            .constraints
            .iter()
            .map(|c| {
                if c.rhs < 0.0 {
                    let flipped = match c.relation {
                        Relation::Le => Relation::Ge,
                        Relation::Ge => Relation::Le,
                        Relation::Eq => Relation::Eq,
                    };
                    (c.coeffs.iter().map(|v| -v).collect(), flipped, -c.rhs)
                } else {
                    (c.coeffs.clone(), c.relation, c.rhs)
                }
            })
            .collect();
        let n_slack = normalized.iter().filter(|c| c.1 != Relation::Eq).count();
        let n_art = normalized.iter().filter(|c| c.1 != Relation::Le).count();
        let first_artificial = n + n_slack;
        let width = first_artificial + n_art;

        let mut rows = vec![vec![0.0; width + 1]; m];
        let mut basis = vec![0; m];
        let (mut slack, mut art) = (n, first_artificial);
        for (i, (coeffs, rel, rhs)) in normalized.into_iter().enumerate() {
            rows[i][..n].copy_from_slice(&coeffs);
            rows[i][width] = rhs;
            match rel {
                Relation::Le => {
                    rows[i][slack] = 1.0;
                    basis[i] = slack;
                    slack += 1;
                }
                Relation::Ge => {
                    rows[i][slack] = -1.0;
                    slack += 1;
                    rows[i][art] = 1.0;
                    basis[i] = art;
                    art += 1;
                }
                Relation::Eq => {
                    rows[i][art] = 1.0;
                    basis[i] = art;
                    art += 1;
                }
            }
        }
        Self {
            rows,
            basis,
            cost: vec![0.0; width + 1],
            n_vars: n,
            first_artificial,
            width,
        }
    }

    fn price(&mut self, c: &[f64]) {
        let w = self.width;
        self.cost = c.to_vec();
        self.cost.resize(w + 1, 0.0);
        for (i, &b) in self.basis.iter().enumerate() {
            let cb = c.get(b).copied().unwrap_or(0.0);
            if cb != 0.0 {
                for j in 0..=w {
                    self.cost[j] -= cb * self.rows[i][j];
                }
            }
        }
    }

    fn pivot(&mut self, r: usize, col: usize) {
        let w = self.width;
        let p = self.rows[r][col];
        for v in self.rows[r].iter_mut() {
            *v /= p;
        }
        let prow = self.rows[r].clone();
        for (i, row) in self.rows.iter_mut().enumerate() {
            if i != r && row[col] != 0.0 {
                let f = row[col];
                for j in 0..=w {
                    row[j] -= f * prow[j];
                }
                row[col] = 0.0;
            }
        }
        let f = self.cost[col];
        if f != 0.0 {
            for j in 0..=w {
                self.cost[j] -= f * prow[j];
            }
            self.cost[col] = 0.0;
        }
        self.basis[r] = col;
    }

    /// Runs Bland-rule pivots over columns `< limit`. Returns `Some(false)`
    /// when unbounded, `None` when the pivot budget is exhausted.
    fn iterate(&mut self, limit: usize) -> Option<bool> {
        let w = self.width;
        for _ in 0..MAX_PIVOTS {
            let Some(col) = (0..limit).find(|&j| self.cost[j] < -COST_TOL) else {
                return Some(true);
            };
            let mut best: Option<(usize, f64)> = None;
            for (i, row) in self.rows.iter().enumerate() {
                if row[col] > PIVOT_TOL {
                    let ratio = row[w] / row[col];
                    best = match best {
                        None => Some((i, ratio)),
                        Some((bi, br)) => {
                            let tie = (ratio - br).abs() <= 1e-12 * br.abs().max(1.0);
                            if ratio < br && !tie || tie && self.basis[i] < self.basis[bi] {
                                Some((i, ratio))
                            } else {
                                Some((bi, br))
                            }
                        }
                    };
                }
            }
            match best {
                Some((r, _)) => self.pivot(r, col),
                None => return Some(false),
            }
        }
        None
    }

    fn solve(mut self, objective: &[f64]) -> LpOutcome {
        let w = self.width;
        if self.first_artificial < w {
            let phase1: Vec<f64> = (0..w)
                .map(|j| if j >= self.first_artificial { 1.0 } else { 0.0 })
                .collect();
            self.price(&phase1);
            match self.iterate(w) {
                None => return LpOutcome::IterationLimit,
                Some(_) => {}
            }
            let scale = self.rows.iter().map(|r| r[w].abs()).fold(1.0, f64::max);
            if -self.cost[w] > 1e-9 * scale {
                return LpOutcome::Infeasible;
            }
            self.drive_out_artificials();
        }
        self.price(objective);
        match self.iterate(self.first_artificial) {
            None => LpOutcome::IterationLimit,
            Some(false) => LpOutcome::Unbounded,
            Some(true) => {
                let mut x = vec![0.0; self.n_vars];
                for (i, &b) in self.basis.iter().enumerate() {
                    if b < self.n_vars {
                        x[b] = self.rows[i][w].max(0.0);
                    }
                }
                let value = objective.iter().zip(&x).map(|(c, v)| c * v).sum();
                LpOutcome::Optimal { x, objective: value }
            }
        }
    }

    fn drive_out_artificials(&mut self) {
        let mut i = 0;
        while i < self.rows.len() {
            if self.basis[i] >= self.first_artificial {
                let col = (0..self.first_artificial).find(|&j| self.rows[i][j].abs() > 1e-9);
                match col {
                    Some(j) => self.pivot(i, j),
                    None => {
                        // redundant row
                        self.rows.remove(i);
                        self.basis.remove(i);
                        continue;
                    }
                }
            }
            i += 1;
        }
    }
}
