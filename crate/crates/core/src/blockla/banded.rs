use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Square banded matrix with `kl` sub-diagonals and `ku` super-diagonals,
/// stored row by row.
#[derive(Clone, Debug, PartialEq)]
pub struct Banded {
    n: usize,
    kl: usize,
    ku: usize,
    data: Vec<f64>,
}

impl Banded {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        Self { n, kl, ku, data: vec![0.0; n * (kl + ku + 1)] }
    }

    pub fn from_diagonal(d: &DVector<f64>) -> Self {
        let mut b = Self::zeros(d.len(), 0, 0);
        b.data.copy_from_slice(d.as_slice());
        b
    }

    /// Tridiagonal matrix from sub, main and super diagonals.
    pub fn tridiagonal(lower: &[f64], diag: &[f64], upper: &[f64]) -> Self {
        let n = diag.len();
        assert!(lower.len() + 1 == n.max(1) && upper.len() + 1 == n.max(1));
        let mut b = Self::zeros(n, 1, 1);
        for i in 0..n {
            b.set(i, i, diag[i]);
            if i + 1 < n {
                b.set(i + 1, i, lower[i]);
                b.set(i, i + 1, upper[i]);
            }
        }
        b
    }

    /// Keeps entries of `m` inside the band and drops the rest.
    pub fn from_dense(m: &DMatrix<f64>, kl: usize, ku: usize) -> Self {
        assert!(m.is_square());
        let mut b = Self::zeros(m.nrows(), kl, ku);
        for i in 0..b.n {
            for j in b.row_range(i) {
                b.set(i, j, m[(i, j)]);
            }
        }
        b
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn kl(&self) -> usize {
        self.kl
    }

    pub fn ku(&self) -> usize {
        self.ku
    }

    fn width(&self) -> usize {
        self.kl + self.ku + 1
    }

    pub fn in_band(&self, i: usize, j: usize) -> bool {
        j + self.kl >= i && j <= i + self.ku
    }

    pub fn row_range(&self, i: usize) -> std::ops::Range<usize> {
        i.saturating_sub(self.kl)..(i + self.ku + 1).min(self.n)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if self.in_band(i, j) {
            self.data[i * self.width() + j + self.kl - i]
        } else {
            0.0
        }
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        assert!(self.in_band(i, j), "({i},{j}) outside band");
        let w = self.width();
        self.data[i * w + j + self.kl - i] = v;
    }

    pub fn add_to(&mut self, i: usize, j: usize, v: f64) {
        let w = self.width();
        assert!(self.in_band(i, j), "({i},{j}) outside band");
        self.data[i * w + j + self.kl - i] += v;
    }

    pub fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.n);
        for i in 0..self.n {
            let mut s = 0.0;
            for j in self.row_range(i) {
                s += self.get(i, j) * v[j];
            }
            out[i] = s;
        }
        out
    }

    pub fn apply_transpose(&self, v: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.n);
        for i in 0..self.n {
            let vi = v[i];
            for j in self.row_range(i) {
                out[j] += self.get(i, j) * vi;
            }
        }
        out
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.n, self.ku, self.kl);
        for i in 0..self.n {
            for j in self.row_range(i) {
                t.set(j, i, self.get(i, j));
            }
        }
        t
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            for j in self.row_range(i) {
                m[(i, j)] = self.get(i, j);
            }
        }
        m
    }

    /// Copy with a wider band.
    pub fn widened(&self, kl: usize, ku: usize) -> Self {
        let mut b = Self::zeros(self.n, kl.max(self.kl), ku.max(self.ku));
        for i in 0..self.n {
            for j in self.row_range(i) {
                b.set(i, j, self.get(i, j));
            }
        }
        b
    }

    /// `a * self + b * other`
    pub fn lincomb(a: f64, p: &Self, b: f64, q: &Self) -> Self {
        assert_eq!(p.n, q.n);
        let mut out = Self::zeros(p.n, p.kl.max(q.kl), p.ku.max(q.ku));
        for i in 0..p.n {
            for j in p.row_range(i) {
                out.add_to(i, j, a * p.get(i, j));
            }
            for j in q.row_range(i) {
                out.add_to(i, j, b * q.get(i, j));
            }
        }
        out
    }

    pub fn scale_rows(&self, d: &DVector<f64>) -> Self {
        let mut out = self.clone();
        for i in 0..self.n {
            for j in self.row_range(i) {
                out.set(i, j, d[i] * self.get(i, j));
            }
        }
        out
    }

    pub fn scale_cols(&self, d: &DVector<f64>) -> Self {
        let mut out = self.clone();
        for i in 0..self.n {
            for j in self.row_range(i) {
                out.set(i, j, self.get(i, j) * d[j]);
            }
        }
        out
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.n, other.n);
        let mut out = Self::zeros(self.n, self.kl + other.kl, self.ku + other.ku);
        for i in 0..self.n {
            for k in self.row_range(i) {
                let a = self.get(i, k);
                if a == 0.0 {
                    continue;
                }
                for j in other.row_range(k) {
                    out.add_to(i, j, a * other.get(k, j));
                }
            }
        }
        out
    }
}

/// LU factorization of a banded matrix with partial pivoting.
///
/// Row `i` of the factor stores columns `i - kl ..= i + ku + kl`; the extra
/// `kl` super-diagonals hold fill-in created by row interchanges.
#[derive(Clone, Debug)]
pub struct BandedLu {
    n: usize,
    kl: usize,
    ku: usize,
    lu: Vec<f64>,
    pivots: Vec<usize>,
}

impl BandedLu {
    pub fn factor(a: &Banded) -> Result<Self> {
        let n = a.n;
        let kl = a.kl;
        let ku = a.ku;
        let w = 2 * kl + ku + 1;
        let mut lu = vec![0.0; n * w];
        let idx = |i: usize, j: usize| i * w + j + kl - i;
        for i in 0..n {
            for j in a.row_range(i) {
                lu[idx(i, j)] = a.get(i, j);
            }
        }
        let mut pivots = vec![0; n];
        for k in 0..n {
            let last = (k + kl).min(n - 1);
            let mut p = k;
            let mut best = lu[idx(k, k)].abs();
            for r in k + 1..=last {
                let v = lu[idx(r, k)].abs();
                if v > best {
                    best = v;
                    p = r;
                }
            }
            if best == 0.0 || !best.is_finite() {
                return Err(Error::Singular { pivot: k });
            }
            pivots[k] = p;
            let jmax = (k + kl + ku).min(n - 1);
            if p != k {
                for j in k..=jmax {
                    lu.swap(idx(k, j), idx(p, j));
                }
            }
            let piv = lu[idx(k, k)];
            for r in k + 1..=last {
                let l = lu[idx(r, k)] / piv;
                lu[idx(r, k)] = l;
                if l != 0.0 {
                    for j in k + 1..=jmax {
                        lu[idx(r, j)] -= l * lu[idx(k, j)];
                    }
                }
            }
        }
        Ok(Self { n, kl, ku, lu, pivots })
    }

    fn at(&self, i: usize, j: usize) -> f64 {
        let w = 2 * self.kl + self.ku + 1;
        self.lu[i * w + j + self.kl - i]
    }

    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        let n = self.n;
        let mut x = b.clone();
        for k in 0..n {
            x.swap_rows(k, self.pivots[k]);
            let xk = x[k];
            for r in k + 1..=(k + self.kl).min(n.saturating_sub(1)) {
                x[r] -= self.at(r, k) * xk;
            }
        }
        let reach = self.kl + self.ku;
        for i in (0..n).rev() {
            let mut s = x[i];
            for j in i + 1..=(i + reach).min(n - 1) {
                s -= self.at(i, j) * x[j];
            }
            x[i] = s / self.at(i, i);
        }
        x
    }

    pub fn solve_transpose(&self, b: &DVector<f64>) -> DVector<f64> {
        let n = self.n;
        let reach = self.kl + self.ku;
        let mut x = b.clone();
        for i in 0..n {
            let mut s = x[i];
            for j in i.saturating_sub(reach)..i {
                s -= self.at(j, i) * x[j];
            }
            x[i] = s / self.at(i, i);
        }
        for k in (0..n).rev() {
            let mut s = x[k];
            for r in k + 1..=(k + self.kl).min(n.saturating_sub(1)) {
                s -= self.at(r, k) * x[r];
            }
            x[k] = s;
            x.swap_rows(k, self.pivots[k]);
        }
        x
    }
}
