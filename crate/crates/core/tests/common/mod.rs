#![allow(dead_code)]

use classcount::ingest::parse_frequencies;
use classcount::simplex::{LinearProgram, Relation};
use classcount::FrequencyData;
use rand::Rng;

pub fn cholera() -> FrequencyData {
    parse_frequencies(include_str!("../../../../data/cholera.freq")).unwrap()
}

pub fn est() -> FrequencyData {
    parse_frequencies(include_str!("../../../../data/est.freq")).unwrap()
}

/// Root of `λ / (1 − e^{−λ}) = target` by bisection.
pub fn truncated_mean_root(target: f64) -> f64 {
    let (mut lo, mut hi) = (1e-12_f64, 100.0_f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid / (1.0 - (-mid).exp()) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Gaussian elimination with partial pivoting; `None` if singular.
fn solve_square(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-10 {
            return None;
        }
        a.swap(piv, col);
        b.swap(piv, col);
        for i in col + 1..n {
            let f = a[i][col] / a[col][col];
            for j in col..n {
                a[i][j] -= f * a[col][j];
            }
            b[i] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|j| a[i][j] * x[j]).sum();
        x[i] = (b[i] - s) / a[i][i];
    }
    Some(x)
}

fn combinations(n: usize, k: usize, start: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
    if cur.len() == k {
        out.push(cur.clone());
        return;
    }
    for i in start..n {
        cur.push(i);
        combinations(n, k, i + 1, cur, out);
        cur.pop();
    }
}

/// Minimum of a bounded LP by enumerating every vertex: each choice of
/// `n` tight hyperplanes among the constraints and `x_j = 0`, with
/// equality rows always tight.
pub fn vertex_enumeration(lp: &LinearProgram) -> Option<f64> {
    let n = lp.num_vars();
    let mut planes: Vec<(Vec<f64>, f64)> = Vec::new();
    let mut fixed: Vec<(Vec<f64>, f64)> = Vec::new();
    for c in &lp.constraints {
        match c.relation {
            Relation::Eq => fixed.push((c.coeffs.clone(), c.rhs)),
            _ => planes.push((c.coeffs.clone(), c.rhs)),
        }
    }
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        planes.push((e, 0.0));
    }
    let free = n.checked_sub(fixed.len())?;
    let mut subsets = Vec::new();
    combinations(planes.len(), free, 0, &mut Vec::new(), &mut subsets);
    let feasible = |x: &[f64]| {
        x.iter().all(|&v| v >= -1e-9)
            && lp.constraints.iter().all(|c| {
                let lhs: f64 = c.coeffs.iter().zip(x).map(|(a, b)| a * b).sum();
                let tol = 1e-9 * (1.0 + c.rhs.abs());
                match c.relation {
                    Relation::Le => lhs <= c.rhs + tol,
                    Relation::Ge => lhs >= c.rhs - tol,
                    Relation::Eq => (lhs - c.rhs).abs() <= tol,
                }
            })
    };
    let mut best: Option<f64> = None;
    for s in subsets {
        let mut a: Vec<Vec<f64>> = fixed.iter().map(|p| p.0.clone()).collect();
        let mut b: Vec<f64> = fixed.iter().map(|p| p.1).collect();
        for &i in &s {
            a.push(planes[i].0.clone());
            b.push(planes[i].1);
        }
        if let Some(x) = solve_square(a, b) {
            if feasible(&x) {
                let v: f64 = lp.objective.iter().zip(&x).map(|(c, v)| c * v).sum();
                best = Some(best.map_or(v, |b: f64| b.min(v)));
            }
        }
    }
    best
}

/// A random feasible, bounded LP with `vars <= 8` and `rows <= 6`
/// (one of which is a bounding `Σ x <= U` row).
pub fn random_lp<R: Rng>(rng: &mut R, vars: usize, rows: usize) -> LinearProgram {
    let x0: Vec<f64> = (0..vars).map(|_| rng.random_range(0.0..2.0)).collect();
    let mut lp = LinearProgram::new((0..vars).map(|_| rng.random_range(-3.0..3.0)).collect());
    let total: f64 = x0.iter().sum();
    lp.add(vec![1.0; vars], Relation::Le, total + rng.random_range(0.5..3.0));
    let mut equalities = 0;
    for r in 1..rows {
        let a: Vec<f64> = (0..vars).map(|_| rng.random_range(-2.0..2.0)).collect();
        let ax: f64 = a.iter().zip(&x0).map(|(p, q)| p * q).sum();
        let slack = rng.random_range(0.0..1.0);
        match (r + rng.random_range(0..3usize)) % 3 {
            0 => lp.add(a, Relation::Le, ax + slack),
            1 => lp.add(a, Relation::Ge, ax - slack),
            _ if equalities + 1 < vars => {
                equalities += 1;
                lp.add(a, Relation::Eq, ax)
            }
            _ => lp.add(a, Relation::Le, ax + slack),
        }
    }
    lp
}
