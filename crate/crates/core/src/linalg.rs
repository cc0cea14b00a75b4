//! Small dense matrices for the per-step and per-factor linear algebra, and a
//! band solver for the shooting systems.

use std::ops::{Index, IndexMut};

use crate::scalar::Real;

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Real> Mat<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    /// Builds a matrix from its columns.
    pub fn from_columns(rows: usize, columns: &[Vec<T>]) -> Self {
        let mut m = Self::zeros(rows, columns.len());
        for (j, c) in columns.iter().enumerate() {
            assert_eq!(c.len(), rows, "column length");
            for (i, &x) in c.iter().enumerate() {
                m[(i, j)] = x;
            }
        }
        m
    }

    pub fn from_row_slice(rows: usize, cols: usize, data: &[T]) -> Self {
        assert_eq!(data.len(), rows * cols, "data length");
        Self {
            rows,
            cols,
            data: data.to_vec(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn mul_vec(&self, v: &[T]) -> Vec<T> {
        assert_eq!(v.len(), self.cols, "vector length");
        (0..self.rows)
            .map(|i| {
                self.data[i * self.cols..(i + 1) * self.cols]
                    .iter()
                    .zip(v)
                    .map(|(&a, &b)| a * b)
                    .sum()
            })
            .collect()
    }

    /// `self^T v`.
    pub fn tr_mul_vec(&self, v: &[T]) -> Vec<T> {
        assert_eq!(v.len(), self.rows, "vector length");
        let mut out = vec![T::zero(); self.cols];
        for i in 0..self.rows {
            for j in 0..self.cols {
                out[j] = out[j] + self[(i, j)] * v[i];
            }
        }
        out
    }

    pub fn mul(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.rows, "inner dimension");
        let mut c = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == T::zero() {
                    continue;
                }
                for j in 0..other.cols {
                    c[(i, j)] = c[(i, j)] + a * other[(k, j)];
                }
            }
        }
        c
    }

    pub fn scale(&self, s: T) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| x * s).collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols), "shape");
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| a + b).collect(),
        }
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, &x| m.max(x.abs()))
    }

    /// Solves `self x = b` by Gaussian elimination with partial pivoting.
    /// `None` when a pivot vanishes.
    pub fn solve(&self, b: &[T]) -> Option<Vec<T>> {
        assert_eq!(self.rows, self.cols, "square system");
        assert_eq!(b.len(), self.rows, "right-hand side length");
        let n = self.rows;
        let mut a = self.data.clone();
        let mut x = b.to_vec();
        let scale = self.max_abs().max(T::min_positive_value());
        for col in 0..n {
            let mut p = col;
            for r in col + 1..n {
                if a[r * n + col].abs() > a[p * n + col].abs() {
                    p = r;
                }
            }
            if a[p * n + col].abs() <= scale * T::epsilon() * T::count(n) {
                return None;
            }
            if p != col {
                for j in 0..n {
                    a.swap(p * n + j, col * n + j);
                }
                x.swap(p, col);
            }
            let piv = a[col * n + col];
            for r in col + 1..n {
                let f = a[r * n + col] / piv;
                if f == T::zero() {
                    continue;
                }
                for j in col..n {
                    a[r * n + j] = a[r * n + j] - f * a[col * n + j];
                }
                x[r] = x[r] - f * x[col];
            }
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for j in i + 1..n {
                s = s - a[i * n + j] * x[j];
            }
            x[i] = s / a[i * n + i];
        }
        Some(x)
    }
}

impl<T> Index<(usize, usize)> for Mat<T> {
    type Output = T;
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.cols + j]
    }
}

impl<T> IndexMut<(usize, usize)> for Mat<T> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.cols + j]
    }
}

/// Square band matrix with `kl` sub- and `ku` super-diagonals, stored with
/// room for the fill produced by partial pivoting.
#[derive(Debug, Clone, PartialEq)]
pub struct BandMatrix<T> {
    n: usize,
    kl: usize,
    ku: usize,
    // row i holds columns i - kl ..= i + kl + ku
    width: usize,
    data: Vec<T>,
}

impl<T: Real> BandMatrix<T> {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        let width = 2 * kl + ku + 1;
        Self {
            n,
            kl,
            ku,
            width,
            data: vec![T::zero(); n * width],
        }
    }

    /// Sums duplicate `(row, col, value)` entries; the bandwidths are taken
    /// from the entries themselves.
    pub fn from_triplets(n: usize, entries: &[(usize, usize, T)]) -> Self {
        let mut kl = 0;
        let mut ku = 0;
        for &(i, j, _) in entries {
            assert!(i < n && j < n, "entry ({i}, {j}) outside {n} x {n}");
            kl = kl.max(i.saturating_sub(j));
            ku = ku.max(j.saturating_sub(i));
        }
        let mut m = Self::zeros(n, kl, ku);
        for &(i, j, v) in entries {
            m.add(i, j, v);
        }
        m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn bandwidths(&self) -> (usize, usize) {
        (self.kl, self.ku)
    }

    fn slot(&self, i: usize, j: usize) -> usize {
        debug_assert!(
            j + self.kl >= i && j <= i + self.kl + self.ku,
            "({i}, {j}) outside the band"
        );
        i * self.width + (j + self.kl - i)
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        if j + self.kl < i || j > i + self.ku {
            return T::zero();
        }
        self.data[self.slot(i, j)]
    }

    pub fn add(&mut self, i: usize, j: usize, v: T) {
        assert!(j + self.kl >= i && j <= i + self.ku, "({i}, {j}) outside the band");
        let s = self.slot(i, j);
        self.data[s] = self.data[s] + v;
    }

    pub fn mul_vec(&self, x: &[T]) -> Vec<T> {
        (0..self.n)
            .map(|i| {
                let lo = i.saturating_sub(self.kl);
                let hi = (i + self.ku + 1).min(self.n);
                (lo..hi).map(|j| self.get(i, j) * x[j]).sum()
            })
            .collect()
    }

    /// Solves `self x = b` by banded Gaussian elimination with partial
    /// pivoting. `None` when a pivot falls below `pivot_tol` times the largest
    /// entry.
    pub fn solve(&self, b: &[T], pivot_tol: T) -> Option<Vec<T>> {
        assert_eq!(b.len(), self.n, "right-hand side length");
        let (n, kl, ku) = (self.n, self.kl, self.ku);
        let mut a = self.clone();
        let mut x = b.to_vec();
        let scale = self.data.iter().fold(T::zero(), |m, &v| m.max(v.abs()));
        if scale == T::zero() {
            return None;
        }
        let floor = scale * pivot_tol;
        for p in 0..n {
            let last = (p + kl).min(n - 1);
            let mut piv = p;
            for r in p + 1..=last {
                if a.data[a.slot(r, p)].abs() > a.data[a.slot(piv, p)].abs() {
                    piv = r;
                }
            }
            if a.data[a.slot(piv, p)].abs() <= floor {
                return None;
            }
            let right = (p + kl + ku).min(n - 1);
            if piv != p {
                for j in p..=right {
                    let (s1, s2) = (a.slot(p, j), a.slot(piv, j));
                    a.data.swap(s1, s2);
                }
                x.swap(p, piv);
            }
            let d = a.data[a.slot(p, p)];
            for r in p + 1..=last {
                let f = a.data[a.slot(r, p)] / d;
                if f == T::zero() {
                    continue;
                }
                for j in p + 1..=right {
                    let v = a.data[a.slot(p, j)];
                    let s = a.slot(r, j);
                    a.data[s] = a.data[s] - f * v;
                }
                x[r] = x[r] - f * x[p];
            }
        }
        for i in (0..n).rev() {
            let right = (i + kl + ku).min(n - 1);
            let mut s = x[i];
            for j in i + 1..=right {
                s = s - a.data[a.slot(i, j)] * x[j];
            }
            x[i] = s / a.data[a.slot(i, i)];
        }
        Some(x)
    }
}

/// Regularized normal equations `(J^T J + mu I) x = -J^T r` for a sparse `J`
/// given by triplets. The result is banded when `J` is.
pub fn normal_equations<T: Real>(
    rows: usize,
    cols: usize,
    entries: &[(usize, usize, T)],
    r: &[T],
    mu: T,
) -> (BandMatrix<T>, Vec<T>) {
    let mut by_row: Vec<Vec<(usize, T)>> = vec![Vec::new(); rows];
    for &(i, j, v) in entries {
        by_row[i].push((j, v));
    }
    let mut trip = Vec::new();
    let mut rhs = vec![T::zero(); cols];
    for (i, row) in by_row.iter().enumerate() {
        for &(j, v) in row {
            rhs[j] = rhs[j] - v * r[i];
            for &(l, w) in row {
                trip.push((j, l, v * w));
            }
        }
    }
    for j in 0..cols {
        trip.push((j, j, mu));
    }
    (BandMatrix::from_triplets(cols, &trip), rhs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solve_recovers_known_solution() {
        let a = Mat::from_row_slice(3, 3, &[0.0, 2.0, 1.0, 1.0, -1.0, 0.5, 4.0, 0.0, -2.0]);
        let x = [1.0_f64, -2.0, 0.25];
        let b = a.mul_vec(&x);
        let got = a.solve(&b).unwrap();
        for i in 0..3 {
            assert!((got[i] - x[i]).abs() < 1e-14);
        }
    }

    #[test]
    fn singular_matrix_is_reported() {
        let a = Mat::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        assert!(a.solve(&[1.0, 1.0]).is_none());
    }

    #[test]
    fn transpose_product_matches_explicit_transpose() {
        let a = Mat::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(a.tr_mul_vec(&[1.0, -1.0]), a.transpose().mul_vec(&[1.0, -1.0]));
        assert_eq!(a.mul(&Mat::identity(3)), a);
    }

    #[test]
    fn band_solve_matches_dense() {
        // tridiagonal with a zero diagonal entry forces pivoting
        let n = 7;
        let mut trip = Vec::new();
        for i in 0..n {
            let d = if i == 2 { 0.0 } else { 4.0 + i as f64 };
            trip.push((i, i, d));
            if i + 1 < n {
                trip.push((i, i + 1, 1.0 + 0.1 * i as f64));
                trip.push((i + 1, i, -2.0));
            }
        }
        let band = BandMatrix::from_triplets(n, &trip);
        assert_eq!(band.bandwidths(), (1, 1));
        let mut dense = Mat::zeros(n, n);
        for &(i, j, v) in &trip {
            dense[(i, j)] += v;
        }
        let b: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let x1 = band.solve(&b, 1e-14).unwrap();
        let x2 = dense.solve(&b).unwrap();
        for (a, c) in x1.iter().zip(&x2) {
            assert!((a - c).abs() < 1e-13);
        }
        let back = band.mul_vec(&x1);
        for (a, c) in back.iter().zip(&b) {
            assert!((a - c).abs() < 1e-13);
        }
    }

    #[test]
    fn singular_band_is_reported() {
        let band = BandMatrix::from_triplets(2, &[(0, 0, 1.0), (0, 1, 1.0), (1, 0, 1.0), (1, 1, 1.0)]);
        assert!(band.solve(&[1.0, 2.0], 1e-14).is_none());
    }

    #[test]
    fn normal_equations_give_least_squares() {
        // overdetermined: x = 1, x = 3 -> x = 2
        let (m, rhs) = normal_equations(2, 1, &[(0, 0, 1.0f64), (1, 0, 1.0)], &[-1.0, -3.0], 0.0);
        let x = m.solve(&rhs, 1e-14).unwrap();
        assert!((x[0] - 2.0).abs() < 1e-14);
    }
}
