//! Dense LU factorization with partial pivoting and small matrix helpers.
//!
//! Every determinant, linear solve and pairing decomposition in the crate
//! goes through [`Lu`]. Storage is `nalgebra::DMatrix`.

use nalgebra::DMatrix;

pub type Matrix = DMatrix<f64>;

/// `P·A = L·U` with `L` unit lower triangular. `perm[i]` is the row of `A`
/// that ends up in row `i` of `L·U`.
#[derive(Debug, Clone)]
pub struct Lu {
    lu: Matrix,
    perm: Vec<usize>,
    parity: f64,
    singular: bool,
}

impl Lu {
    /// Factor with partial (row) pivoting. Never fails; exact zero pivots
    /// mark the factorization singular.
    pub fn new(a: &Matrix) -> Self {
        Self::factor(a, |lu, k| {
            let mut best = k;
            let mut best_abs = lu[(k, k)].abs();
            for r in k + 1..lu.nrows() {
                let v = lu[(r, k)].abs();
                if v > best_abs {
                    best = r;
                    best_abs = v;
                }
            }
            best
        })
    }

    /// Factor with rows taken in the given order (no pivot search), i.e.
    /// `A[perm[i], :] = (L·U)[i, :]`.
    pub fn with_row_order(a: &Matrix, perm: &[usize]) -> Option<Self> {
        let n = a.nrows();
        if perm.len() != n || !is_permutation(perm) {
            return None;
        }
        let permuted = Matrix::from_fn(n, n, |i, j| a[(perm[i], j)]);
        let mut lu = Self::factor(&permuted, |_, k| k);
        lu.parity = permutation_parity(perm);
        lu.perm = perm.to_vec();
        Some(lu)
    }

    fn factor(a: &Matrix, mut pick: impl FnMut(&Matrix, usize) -> usize) -> Self {
        assert_eq!(a.nrows(), a.ncols(), "LU requires a square matrix");
        let n = a.nrows();
        let mut lu = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut parity = 1.0;
        let mut singular = false;
        for k in 0..n {
            let p = pick(&lu, k);
            if p != k {
                lu.swap_rows(p, k);
                perm.swap(p, k);
                parity = -parity;
            }
            let pivot = lu[(k, k)];
            if pivot == 0.0 {
                singular = true;
                continue;
            }
            for r in k + 1..n {
                let factor = lu[(r, k)] / pivot;
                lu[(r, k)] = factor;
                if factor != 0.0 {
                    for c in k + 1..n {
                        lu[(r, c)] -= factor * lu[(k, c)];
                    }
                }
            }
        }
        Lu {
            lu,
            perm,
            parity,
            singular,
        }
    }

    pub fn dim(&self) -> usize {
        self.lu.nrows()
    }

    pub fn is_singular(&self) -> bool {
        self.singular
    }

    pub fn permutation(&self) -> &[usize] {
        &self.perm
    }

    pub fn det(&self) -> f64 {
        if self.singular {
            return 0.0;
        }
        self.lu.diagonal().iter().product::<f64>() * self.parity
    }

    /// Unit lower triangular factor.
    pub fn l(&self) -> Matrix {
        let n = self.dim();
        Matrix::from_fn(n, n, |i, j| match i.cmp(&j) {
            std::cmp::Ordering::Greater => self.lu[(i, j)],
            std::cmp::Ordering::Equal => 1.0,
            std::cmp::Ordering::Less => 0.0,
        })
    }

    pub fn u(&self) -> Matrix {
        let n = self.dim();
        Matrix::from_fn(n, n, |i, j| if i <= j { self.lu[(i, j)] } else { 0.0 })
    }

    /// Solves `A·X = B`.
    pub fn solve(&self, b: &Matrix) -> Option<Matrix> {
        if self.singular || b.nrows() != self.dim() {
            return None;
        }
        let n = self.dim();
        let mut x = Matrix::from_fn(n, b.ncols(), |i, j| b[(self.perm[i], j)]);
        for c in 0..x.ncols() {
            for i in 0..n {
                let mut s = x[(i, c)];
                for k in 0..i {
                    s -= self.lu[(i, k)] * x[(k, c)];
                }
                x[(i, c)] = s;
            }
            for i in (0..n).rev() {
                let mut s = x[(i, c)];
                for k in i + 1..n {
                    s -= self.lu[(i, k)] * x[(k, c)];
                }
                x[(i, c)] = s / self.lu[(i, i)];
            }
        }
        Some(x)
    }

    /// Solves `Aᵀ·X = B`.
    pub fn solve_transpose(&self, b: &Matrix) -> Option<Matrix> {
        if self.singular || b.nrows() != self.dim() {
            return None;
        }
        let n = self.dim();
        let mut y = b.clone();
        for c in 0..y.ncols() {
            // Uᵀ z = b
            for i in 0..n {
                let mut s = y[(i, c)];
                for k in 0..i {
                    s -= self.lu[(k, i)] * y[(k, c)];
                }
                y[(i, c)] = s / self.lu[(i, i)];
            }
            // Lᵀ v = z
            for i in (0..n).rev() {
                let mut s = y[(i, c)];
                for k in i + 1..n {
                    s -= self.lu[(k, i)] * y[(k, c)];
                }
                y[(i, c)] = s;
            }
        }
        let mut x = Matrix::zeros(n, b.ncols());
        for i in 0..n {
            x.set_row(self.perm[i], &y.row(i));
        }
        Some(x)
    }

    /// 2-norm condition number estimate from power iteration on `AᵀA` and
    /// on its inverse. Returns infinity for singular factorizations.
    pub fn condition_estimate(&self, a: &Matrix) -> f64 {
        if self.singular {
            return f64::INFINITY;
        }
        let n = self.dim();
        if n == 0 {
            return 1.0;
        }
        let start = Matrix::from_fn(n, 1, |i, _| 1.0 + i as f64 / (n as f64 + 1.0));
        let big = power_iterate(start.clone(), |v| a.transpose() * (a * v));
        let small_inv = power_iterate(start, |v| {
            // (AᵀA)^{-1} v = A^{-1} A^{-T} v
            let t = self.solve_transpose(v).expect("nonsingular");
            self.solve(&t).expect("nonsingular")
        });
        let cond = (big * small_inv).sqrt();
        if cond.is_finite() {
            cond
        } else {
            f64::INFINITY
        }
    }
}

fn power_iterate(mut v: Matrix, apply: impl Fn(&Matrix) -> Matrix) -> f64 {
    let mut lambda = 0.0;
    for _ in 0..200 {
        let norm = v.norm();
        if norm == 0.0 || !norm.is_finite() {
            return lambda;
        }
        v /= norm;
        let next = apply(&v);
        let estimate = v.dot(&next);
        let converged = (estimate - lambda).abs() <= 1e-10 * estimate.abs();
        lambda = estimate;
        v = next;
        if converged {
            break;
        }
    }
    lambda
}

fn is_permutation(perm: &[usize]) -> bool {
    let mut seen = vec![false; perm.len()];
    perm.iter().all(|&p| p < seen.len() && !std::mem::replace(&mut seen[p], true))
}

fn permutation_parity(perm: &[usize]) -> f64 {
    let mut visited = vec![false; perm.len()];
    let mut parity = 1.0;
    for start in 0..perm.len() {
        let mut len = 0;
        let mut i = start;
        while !visited[i] {
            visited[i] = true;
            i = perm[i];
            len += 1;
        }
        if len > 0 && len % 2 == 0 {
            parity = -parity;
        }
    }
    parity
}

pub fn det(a: &Matrix) -> f64 {
    Lu::new(a).det()
}

/// Largest absolute entry.
pub fn max_abs(a: &Matrix) -> f64 {
    a.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}

/// `a · diag(d)`
pub fn scale_cols(a: &Matrix, d: &[f64]) -> Matrix {
    assert_eq!(a.ncols(), d.len());
    let mut out = a.clone();
    for (j, &s) in d.iter().enumerate() {
        out.column_mut(j).scale_mut(s);
    }
    out
}

/// `diag(d) · a`
pub fn scale_rows(a: &Matrix, d: &[f64]) -> Matrix {
    assert_eq!(a.nrows(), d.len());
    let mut out = a.clone();
    for (i, &s) in d.iter().enumerate() {
        out.row_mut(i).scale_mut(s);
    }
    out
}

/// Determinant of the submatrix picked out by `rows` × `cols`.
pub fn minor_det(a: &Matrix, rows: &[usize], cols: &[usize]) -> f64 {
    debug_assert_eq!(rows.len(), cols.len());
    match rows.len() {
        0 => 1.0,
        1 => a[(rows[0], cols[0])],
        2 => {
            a[(rows[0], cols[0])] * a[(rows[1], cols[1])]
                - a[(rows[0], cols[1])] * a[(rows[1], cols[0])]
        }
        k => det(&Matrix::from_fn(k, k, |i, j| a[(rows[i], cols[j])])),
    }
}
