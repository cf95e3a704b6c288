//! Small dense linear algebra for matrices of order ≲ 60.
//!
//! Matrices are row-major `Vec<Vec<f64>>`. Nothing here is tuned for size;
//! the Hankel work stays at order ≤ 9 and the NPMLE weight step at a few
//! dozen columns.

pub type Matrix = Vec<Vec<f64>>;

/// Relative floor on LDLᵀ pivots below which a leading block is declared
/// not positive definite.
pub const PIVOT_FLOOR: f64 = 1e-10;

/// Unpivoted `A = L D Lᵀ` of a symmetric matrix, stopped at the first pivot
/// that fails the floor. `order` is the size of the largest leading block
/// that is positive definite.
#[derive(Debug, Clone)]
pub struct Ldl {
    lower: Matrix,
    pivots: Vec<f64>,
    order: usize,
}

impl Ldl {
    pub fn new(a: &Matrix) -> Self {
        let n = a.len();
        let scale = (0..n).map(|i| a[i][i].abs()).fold(0.0, f64::max);
        let floor = PIVOT_FLOOR * scale;
        let mut lower = vec![vec![0.0; n]; n];
        let mut pivots = Vec::with_capacity(n);
        for j in 0..n {
            let d = a[j][j] - (0..j).map(|p| lower[j][p] * lower[j][p] * pivots[p]).sum::<f64>();
            if !(d > floor) {
                break;
            }
            lower[j][j] = 1.0;
            for i in j + 1..n {
                let s: f64 = (0..j).map(|p| lower[i][p] * lower[j][p] * pivots[p]).sum();
                lower[i][j] = (a[i][j] - s) / d;
            }
            pivots.push(d);
        }
        let order = pivots.len();
        Self { lower, pivots, order }
    }

    /// Largest `k` such that the leading `k × k` block is positive definite.
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn is_positive_definite(&self) -> bool {
        self.order == self.lower.len()
    }

    pub fn pivots(&self) -> &[f64] {
        &self.pivots
    }

    /// Determinant of the leading `k × k` block, `k <= order`.
    pub fn leading_det(&self, k: usize) -> f64 {
        self.pivots[..k].iter().product()
    }

    /// Solves `A_k x = b` with the leading `k × k` block, `k = b.len() <= order`.
    pub fn solve_leading(&self, b: &[f64]) -> Vec<f64> {
        let k = b.len();
        assert!(k <= self.order, "block of order {k} is not factorized");
        let mut y = b.to_vec();
        for i in 0..k {
            for p in 0..i {
                y[i] -= self.lower[i][p] * y[p];
            }
        }
        for i in 0..k {
            y[i] /= self.pivots[i];
        }
        for i in (0..k).rev() {
            for p in i + 1..k {
                y[i] -= self.lower[p][i] * y[p];
            }
        }
        y
    }
}

/// Determinant by LU with partial pivoting.
pub fn determinant(a: &Matrix) -> f64 {
    let n = a.len();
    let mut m = a.clone();
    let mut det = 1.0;
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))
            .unwrap();
        if m[piv][col] == 0.0 {
            return 0.0;
        }
        if piv != col {
            m.swap(piv, col);
            det = -det;
        }
        det *= m[col][col];
        for i in col + 1..n {
            let f = m[i][col] / m[col][col];
            for j in col..n {
                m[i][j] -= f * m[col][j];
            }
        }
    }
    det
}

/// Least-squares solution of `min ||A x - b||` by Householder QR.
/// `A` is `m × n` with `m >= n` and full column rank.
pub fn least_squares(a: &Matrix, b: &[f64]) -> Vec<f64> {
    let m = a.len();
    let n = a.first().map_or(0, Vec::len);
    let mut r = a.clone();
    let mut y = b.to_vec();
    for k in 0..n.min(m) {
        let norm = (k..m).map(|i| r[i][k] * r[i][k]).sum::<f64>().sqrt();
        if norm == 0.0 {
            continue;
        }
        let alpha = if r[k][k] > 0.0 { -norm } else { norm };
        let mut v: Vec<f64> = (k..m).map(|i| r[i][k]).collect();
        v[0] -= alpha;
        let vnorm2: f64 = v.iter().map(|x| x * x).sum();
        if vnorm2 == 0.0 {
            continue;
        }
        for j in k..n {
            let dot: f64 = (k..m).map(|i| v[i - k] * r[i][j]).sum();
            let f = 2.0 * dot / vnorm2;
            for i in k..m {
                r[i][j] -= f * v[i - k];
            }
        }
        let dot: f64 = (k..m).map(|i| v[i - k] * y[i]).sum();
        let f = 2.0 * dot / vnorm2;
        for i in k..m {
            y[i] -= f * v[i - k];
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|j| r[i][j] * x[j]).sum();
        x[i] = if r[i][i] != 0.0 { (y[i] - s) / r[i][i] } else { 0.0 };
    }
    x
}

/// Nonnegative least squares `min ||A x - b||, x >= 0` (Lawson–Hanson).
pub fn nnls(a: &Matrix, b: &[f64]) -> Vec<f64> {
    let m = a.len();
    let n = a.first().map_or(0, Vec::len);
    let mut x = vec![0.0; n];
    let mut passive = vec![false; n];
    let tol = 1e-12;
    let max_outer = 3 * n + 10;

    let residual_grad = |x: &[f64]| -> Vec<f64> {
        let r: Vec<f64> = (0..m)
            .map(|i| b[i] - (0..n).map(|j| a[i][j] * x[j]).sum::<f64>())
            .collect();
        (0..n).map(|j| (0..m).map(|i| a[i][j] * r[i]).sum()).collect()
    };
    let solve_passive = |passive: &[bool]| -> Vec<f64> {
        let cols: Vec<usize> = (0..n).filter(|&j| passive[j]).collect();
        let sub: Matrix = a.iter().map(|row| cols.iter().map(|&j| row[j]).collect()).collect();
        let zs = least_squares(&sub, b);
        let mut z = vec![0.0; n];
        for (c, &j) in cols.iter().enumerate() {
            z[j] = zs[c];
        }
        z
    };

    for _ in 0..max_outer {
        let w = residual_grad(&x);
        let Some(t) = (0..n)
            .filter(|&j| !passive[j] && w[j] > tol)
            .max_by(|&i, &j| w[i].total_cmp(&w[j]))
        else {
            break;
        };
        passive[t] = true;
        loop {
            let z = solve_passive(&passive);
            if (0..n).filter(|&j| passive[j]).all(|j| z[j] > 0.0) {
                x = z;
                break;
            }
            let mut alpha = f64::INFINITY;
            for j in (0..n).filter(|&j| passive[j] && z[j] <= 0.0) {
                alpha = alpha.min(x[j] / (x[j] - z[j]));
            }
            for j in 0..n {
                x[j] += alpha * (z[j] - x[j]);
                if passive[j] && x[j] <= tol {
                    passive[j] = false;
                    x[j] = 0.0;
                }
            }
            if !passive.iter().any(|&p| p) {
                break;
            }
        }
    }
    x
}

/// Eigen-decomposition of a symmetric tridiagonal matrix by implicit QL.
///
/// `diag` has length `n`, `off` length `n - 1` (`off[i]` couples `i, i+1`).
/// Returns eigenvalues in ascending order with the first component of each
/// normalized eigenvector, or `None` if QL fails to converge.
pub fn tridiagonal_eigen(diag: &[f64], off: &[f64]) -> Option<Vec<(f64, f64)>> {
    let n = diag.len();
    let mut d = diag.to_vec();
    let mut e = off.to_vec();
    e.push(0.0);
    // only the first row of the eigenvector matrix is needed
    let mut z: Vec<f64> = (0..n).map(|i| if i == 0 { 1.0 } else { 0.0 }).collect();

    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > 60 {
                return None;
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let (mut s, mut c, mut p) = (1.0, 1.0, 0.0);
            let mut i = m;
            let mut underflow = false;
            while i > l {
                i -= 1;
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    underflow = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                let zf = z[i + 1];
                z[i + 1] = s * z[i] + c * zf;
                z[i] = c * z[i] - s * zf;
            }
            if underflow {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    let mut pairs: Vec<(f64, f64)> = d.into_iter().zip(z).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    Some(pairs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ldl_solves_and_detects_indefinite() {
        let a = vec![vec![4.0, 2.0, 0.6], vec![2.0, 5.0, 1.0], vec![0.6, 1.0, 3.0]];
        let f = Ldl::new(&a);
        assert!(f.is_positive_definite());
        assert!((f.leading_det(3) - determinant(&a)).abs() < 1e-12);
        let x = f.solve_leading(&[1.0, 2.0, 3.0]);
        for i in 0..3 {
            let r: f64 = (0..3).map(|j| a[i][j] * x[j]).sum();
            assert!((r - [1.0, 2.0, 3.0][i]).abs() < 1e-12);
        }
        let b = vec![vec![1.0, 2.0], vec![2.0, 1.0]];
        assert_eq!(Ldl::new(&b).order(), 1);
    }

    #[test]
    fn determinant_with_swaps() {
        let a = vec![vec![0.0, 1.0], vec![1.0, 0.0]];
        assert_eq!(determinant(&a), -1.0);
        let a = vec![vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0], vec![7.0, 8.0, 10.0]];
        assert!((determinant(&a) + 3.0).abs() < 1e-12);
    }

    #[test]
    fn nnls_small() {
        // unconstrained optimum has a negative coordinate
        let a = vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]];
        let x = nnls(&a, &[2.0, -1.0, 1.0]);
        assert!(x[1].abs() < 1e-12);
        assert!((x[0] - 1.5).abs() < 1e-12);
        let x = nnls(&a, &[1.0, 2.0, 3.0]);
        assert!((x[0] - 1.0).abs() < 1e-12 && (x[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn tridiagonal_matches_known_spectrum() {
        // second-difference matrix: eigenvalues 2 - 2cos(kπ/(n+1))
        let n = 6;
        let pairs = tridiagonal_eigen(&vec![2.0; n], &vec![-1.0; n - 1]).unwrap();
        for (k, (val, _)) in pairs.iter().enumerate() {
            let expect = 2.0 - 2.0 * ((k + 1) as f64 * std::f64::consts::PI / (n + 1) as f64).cos();
            assert!((val - expect).abs() < 1e-12);
        }
        let total: f64 = pairs.iter().map(|(_, z)| z * z).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }
}
