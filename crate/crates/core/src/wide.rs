//! Double-double dense matrices. The pairing, the dual bases, the kernels
//! and the resolvent solve are carried in this precision: their rounding
//! errors are amplified by the condition of the pairing and of `1 - Ǩ^w`,
//! and results are only rounded to `f64` at the public boundary.

use std::ops::{Index, IndexMut};

use twofloat::TwoFloat;

use crate::linalg::Matrix;

pub(crate) type Dd = TwoFloat;

pub(crate) const ZERO: Dd = TwoFloat::from_f64(0.0);
pub(crate) const ONE: Dd = TwoFloat::from_f64(1.0);

pub(crate) fn to_f64(x: Dd) -> f64 {
    x.hi() + x.lo()
}

/// Quotient by long division with two correction steps. The library's own
/// `Dd / Dd` forms its residual without a fused multiply-add and drops the
/// low word on exact-looking reciprocals such as `1/3`.
pub(crate) fn div(a: Dd, b: Dd) -> Dd {
    let q1 = a.hi() / b.hi();
    let r = a - b * q1;
    let q2 = r.hi() / b.hi();
    let r = r - b * q2;
    let q3 = r.hi() / b.hi();
    Dd::new_add(q1, q2) + q3
}

/// One Newton step from the `f64` root.
pub(crate) fn sqrt(a: Dd) -> Dd {
    let s = a.hi().sqrt();
    if s == 0.0 {
        return ZERO;
    }
    let r = a - Dd::new_mul(s, s);
    Dd::new_add(s, r.hi() / (2.0 * s))
}

/// Row-major double-double matrix.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct DdMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Dd>,
}

impl Index<(usize, usize)> for DdMatrix {
    type Output = Dd;

    fn index(&self, (r, c): (usize, usize)) -> &Dd {
        &self.data[r * self.cols + c]
    }
}

impl IndexMut<(usize, usize)> for DdMatrix {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut Dd {
        &mut self.data[r * self.cols + c]
    }
}

impl DdMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        DdMatrix {
            rows,
            cols,
            data: vec![ZERO; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = ONE;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Dd) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        DdMatrix { rows, cols, data }
    }

    pub fn from_f64(a: &Matrix) -> Self {
        Self::from_fn(a.nrows(), a.ncols(), |r, c| Dd::from(a[(r, c)]))
    }

    pub fn to_f64(&self) -> Matrix {
        Matrix::from_fn(self.rows, self.cols, |r, c| to_f64(self[(r, c)]))
    }

    pub fn nrows(&self) -> usize {
        self.rows
    }

    pub fn ncols(&self) -> usize {
        self.cols
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |r, c| self[(c, r)])
    }

    pub fn mul(&self, other: &DdMatrix) -> Self {
        assert_eq!(self.cols, other.rows, "inner dimensions differ");
        let mut out = Self::zeros(self.rows, other.cols);
        for r in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(r, k)];
                if a == ZERO {
                    continue;
                }
                for c in 0..other.cols {
                    out[(r, c)] += a * other[(k, c)];
                }
            }
        }
        out
    }

    /// `A · Bᵀ`
    pub fn mul_transpose(&self, other: &DdMatrix) -> Self {
        assert_eq!(self.cols, other.cols, "inner dimensions differ");
        Self::from_fn(self.rows, other.rows, |r, c| {
            (0..self.cols).fold(ZERO, |acc, k| acc + self[(r, k)] * other[(c, k)])
        })
    }

    /// `A · diag(d)`
    pub fn scale_cols(&self, d: &[Dd]) -> Self {
        Self::from_fn(self.rows, self.cols, |r, c| self[(r, c)] * d[c])
    }

    /// `diag(d) · A`
    pub fn scale_rows(&self, d: &[Dd]) -> Self {
        Self::from_fn(self.rows, self.cols, |r, c| d[r] * self[(r, c)])
    }

    pub fn sub(&self, other: &DdMatrix) -> Self {
        Self::from_fn(self.rows, self.cols, |r, c| self[(r, c)] - other[(r, c)])
    }

    pub fn select_rows(&self, rows: &[usize]) -> Self {
        Self::from_fn(rows.len(), self.cols, |r, c| self[(rows[r], c)])
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|x| to_f64(*x).abs()).fold(0.0, f64::max)
    }

    /// `L X = B` for lower-triangular `L` (only the lower triangle is read).
    pub fn solve_lower(&self, b: &DdMatrix) -> Option<DdMatrix> {
        let n = self.rows;
        let mut x = b.clone();
        for c in 0..b.cols {
            for i in 0..n {
                let mut s = x[(i, c)];
                for k in 0..i {
                    s -= self[(i, k)] * x[(k, c)];
                }
                let d = self[(i, i)];
                if d == ZERO {
                    return None;
                }
                x[(i, c)] = div(s, d);
            }
        }
        Some(x)
    }

    /// `U X = B` for upper-triangular `U`.
    pub fn solve_upper(&self, b: &DdMatrix) -> Option<DdMatrix> {
        let n = self.rows;
        let mut x = b.clone();
        for c in 0..b.cols {
            for i in (0..n).rev() {
                let mut s = x[(i, c)];
                for k in i + 1..n {
                    s -= self[(i, k)] * x[(k, c)];
                }
                let d = self[(i, i)];
                if d == ZERO {
                    return None;
                }
                x[(i, c)] = div(s, d);
            }
        }
        Some(x)
    }
}

/// LU factorization with `A[perm[i], :] = (L·U)[i, :]`, unit `L`.
#[derive(Debug, Clone)]
pub(crate) struct DdLu {
    lu: DdMatrix,
    perm: Vec<usize>,
    parity: f64,
    singular: bool,
}

impl DdLu {
    /// Partial pivoting on the leading component.
    pub fn new(a: &DdMatrix) -> Self {
        Self::factor(a, None).expect("partial pivoting always yields a factorization")
    }

    /// Prescribed row order; `None` if `perm` is not a permutation.
    pub fn with_row_order(a: &DdMatrix, perm: &[usize]) -> Option<Self> {
        let n = a.nrows();
        let mut seen = vec![false; n];
        if perm.len() != n || perm.iter().any(|&p| p >= n || std::mem::replace(&mut seen[p], true)) {
            return None;
        }
        Self::factor(a, Some(perm))
    }

    fn factor(a: &DdMatrix, order: Option<&[usize]>) -> Option<Self> {
        let n = a.nrows();
        assert_eq!(n, a.ncols(), "LU needs a square matrix");
        let mut perm: Vec<usize> = (0..n).collect();
        let mut lu = a.clone();
        let mut parity = 1.0;
        if let Some(order) = order {
            lu = a.select_rows(order);
            perm = order.to_vec();
            parity = permutation_parity(order);
        }
        let mut singular = false;
        for k in 0..n {
            if order.is_none() {
                let p = (k + 1..n).fold(k, |best, i| {
                    if lu[(i, k)].hi().abs() > lu[(best, k)].hi().abs() {
                        i
                    } else {
                        best
                    }
                });
                if p != k {
                    for c in 0..n {
                        let t = lu[(k, c)];
                        lu[(k, c)] = lu[(p, c)];
                        lu[(p, c)] = t;
                    }
                    perm.swap(k, p);
                    parity = -parity;
                }
            }
            let pivot = lu[(k, k)];
            if pivot == ZERO {
                singular = true;
                continue;
            }
            for i in k + 1..n {
                let factor = div(lu[(i, k)], pivot);
                lu[(i, k)] = factor;
                if factor == ZERO {
                    continue;
                }
                for c in k + 1..n {
                    let v = lu[(k, c)];
                    lu[(i, c)] -= factor * v;
                }
            }
        }
        Some(DdLu {
            lu,
            perm,
            parity,
            singular,
        })
    }

    pub fn is_singular(&self) -> bool {
        self.singular
    }

    pub fn permutation(&self) -> &[usize] {
        &self.perm
    }

    pub fn det(&self) -> Dd {
        let n = self.lu.nrows();
        (0..n).fold(Dd::from(self.parity), |acc, i| acc * self.lu[(i, i)])
    }

    pub fn l(&self) -> DdMatrix {
        let n = self.lu.nrows();
        DdMatrix::from_fn(n, n, |r, c| match r.cmp(&c) {
            std::cmp::Ordering::Greater => self.lu[(r, c)],
            std::cmp::Ordering::Equal => ONE,
            std::cmp::Ordering::Less => ZERO,
        })
    }

    pub fn u(&self) -> DdMatrix {
        let n = self.lu.nrows();
        DdMatrix::from_fn(n, n, |r, c| if r <= c { self.lu[(r, c)] } else { ZERO })
    }

    /// `A X = B`
    pub fn solve(&self, b: &DdMatrix) -> Option<DdMatrix> {
        if self.singular {
            return None;
        }
        let pb = b.select_rows(&self.perm);
        let y = self.l().solve_lower(&pb)?;
        self.u().solve_upper(&y)
    }
}

fn permutation_parity(perm: &[usize]) -> f64 {
    let mut seen = vec![false; perm.len()];
    let mut parity = 1.0;
    for start in 0..perm.len() {
        if seen[start] {
            continue;
        }
        let mut len = 0;
        let mut i = start;
        while !seen[i] {
            seen[i] = true;
            i = perm[i];
            len += 1;
        }
        if len % 2 == 0 {
            parity = -parity;
        }
    }
    parity
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_product() {
        let a = Matrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, -1.0, 0.5, 4.0]);
        let b = Matrix::from_row_slice(3, 2, &[1.0, 0.0, 2.0, 1.0, -1.0, 3.0]);
        let wide = DdMatrix::from_f64(&a);
        assert_eq!(wide.to_f64(), a);
        assert_eq!(wide.mul(&DdMatrix::from_f64(&b)).to_f64(), &a * &b);
        assert_eq!(wide.mul_transpose(&DdMatrix::from_f64(&b.transpose())).to_f64(), &a * &b);
    }

    #[test]
    fn lu_solves_and_determinant() {
        let a = Matrix::from_row_slice(3, 3, &[2.0, 1.0, 1.0, 4.0, -6.0, 0.0, -2.0, 7.0, 2.0]);
        let lu = DdLu::new(&DdMatrix::from_f64(&a));
        assert_eq!(to_f64(lu.det()), -16.0);
        let x = lu.solve(&DdMatrix::identity(3)).unwrap().to_f64();
        let residual = &a * x - Matrix::identity(3, 3);
        assert!(residual.amax() < 1e-15);
        let reordered = DdLu::with_row_order(&DdMatrix::from_f64(&a), &[2, 0, 1]).unwrap();
        assert_eq!(to_f64(reordered.det()), -16.0);
        assert!(DdLu::with_row_order(&DdMatrix::from_f64(&a), &[0, 0, 1]).is_none());
    }

    #[test]
    fn resolves_cancellation_beyond_double() {
        // 1 + 1e-20 survives in double-double
        let a = DdMatrix::from_fn(1, 2, |_, c| if c == 0 { ONE } else { Dd::from(1e-20) });
        let ones = DdMatrix::from_fn(2, 1, |_, _| ONE);
        let s = a.mul(&ones)[(0, 0)] - ONE;
        assert_eq!(to_f64(s), 1e-20);
    }

    #[test]
    fn division_and_root_keep_the_low_word() {
        let third = div(ONE, Dd::from(3.0));
        assert!(to_f64(third * 3.0 - ONE).abs() < 1e-31);
        let q = div(Dd::new_add(1.0, 1e-20), Dd::new_add(3.0, 1e-19));
        let back = q * Dd::new_add(3.0, 1e-19) - Dd::new_add(1.0, 1e-20);
        assert!(to_f64(back).abs() < 1e-31);
        let r = sqrt(Dd::from(2.0));
        assert!(to_f64(r * r - Dd::from(2.0)).abs() < 1e-31);
    }

    #[test]
    fn singular_is_flagged() {
        let a = DdMatrix::from_f64(&Matrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]));
        let lu = DdLu::new(&a);
        assert!(lu.is_singular());
        assert!(lu.solve(&DdMatrix::identity(2)).is_none());
    }
}
