//! Small dense complex matrices with inline storage.
//!
//! Every group and algebra element in this crate is at most 5×5, so matrices
//! live on the stack and are `Copy`. Real groups (SO(n)) simply carry zero
//! imaginary parts. Heavier factorizations (Schur, symmetric eigen, SVD) go
//! through `nalgebra` via [`Mat::to_nalgebra`].

use std::fmt;
use std::ops::{Add, AddAssign, Index, IndexMut, Mul, Neg, Sub};

use nalgebra::DMatrix;
use num_complex::Complex64;

/// Largest supported matrix dimension.
pub const MAX_DIM: usize = 5;

pub type C64 = Complex64;

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);

#[derive(Clone, Copy, PartialEq)]
pub struct Mat {
    n: usize,
    a: [[C64; MAX_DIM]; MAX_DIM],
}

impl Mat {
    pub fn zeros(n: usize) -> Self {
        assert!(
            (1..=MAX_DIM).contains(&n),
            "matrix dimension {n} out of range"
        );
        Self {
            n,
            a: [[ZERO; MAX_DIM]; MAX_DIM],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.a[i][i] = ONE;
        }
        m
    }

    /// `E_ij` with a one in row `i`, column `j` (zero based).
    pub fn unit(n: usize, i: usize, j: usize) -> Self {
        let mut m = Self::zeros(n);
        m.a[i][j] = ONE;
        m
    }

    pub fn from_real_rows(rows: &[&[f64]]) -> Self {
        let n = rows.len();
        let mut m = Self::zeros(n);
        for (i, r) in rows.iter().enumerate() {
            assert_eq!(r.len(), n, "matrix must be square");
            for (j, &v) in r.iter().enumerate() {
                m.a[i][j] = C64::new(v, 0.0);
            }
        }
        m
    }

    pub fn from_rows(rows: &[&[C64]]) -> Self {
        let n = rows.len();
        let mut m = Self::zeros(n);
        for (i, r) in rows.iter().enumerate() {
            assert_eq!(r.len(), n, "matrix must be square");
            m.a[i][..n].copy_from_slice(r);
        }
        m
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            for j in 0..n {
                m.a[i][j] = f(i, j);
            }
        }
        m
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.n
    }

    /// Conjugate transpose.
    pub fn adjoint(&self) -> Self {
        let mut m = Self::zeros(self.n);
        for i in 0..self.n {
            for j in 0..self.n {
                m.a[i][j] = self.a[j][i].conj();
            }
        }
        m
    }

    pub fn transpose(&self) -> Self {
        let mut m = Self::zeros(self.n);
        for i in 0..self.n {
            for j in 0..self.n {
                m.a[i][j] = self.a[j][i];
            }
        }
        m
    }

    pub fn trace(&self) -> C64 {
        (0..self.n).map(|i| self.a[i][i]).sum()
    }

    #[inline]
    pub fn scale(&self, s: f64) -> Self {
        let mut m = *self;
        for i in 0..self.n {
            for j in 0..self.n {
                m.a[i][j] *= s;
            }
        }
        m
    }

    pub fn scale_c(&self, s: C64) -> Self {
        let mut m = *self;
        for i in 0..self.n {
            for j in 0..self.n {
                m.a[i][j] *= s;
            }
        }
        m
    }

    /// `self += s * other`.
    #[inline]
    pub fn axpy(&mut self, s: f64, other: &Mat) {
        debug_assert_eq!(self.n, other.n);
        for i in 0..self.n {
            for j in 0..self.n {
                self.a[i][j] += other.a[i][j] * s;
            }
        }
    }

    /// Re tr(self† other), the real Frobenius inner product.
    #[inline]
    pub fn re_inner(&self, other: &Mat) -> f64 {
        debug_assert_eq!(self.n, other.n);
        let mut s = 0.0;
        for i in 0..self.n {
            for j in 0..self.n {
                let x = self.a[i][j];
                let y = other.a[i][j];
                s += x.re * y.re + x.im * y.im;
            }
        }
        s
    }

    /// Re tr(self · other) without forming the product.
    #[inline]
    pub fn re_trace_product(&self, other: &Mat) -> f64 {
        debug_assert_eq!(self.n, other.n);
        let mut s = 0.0;
        for i in 0..self.n {
            for k in 0..self.n {
                let x = self.a[i][k];
                let y = other.a[k][i];
                s += x.re * y.re - x.im * y.im;
            }
        }
        s
    }

    pub fn frobenius(&self) -> f64 {
        self.re_inner(self).sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        let mut m: f64 = 0.0;
        for i in 0..self.n {
            for j in 0..self.n {
                m = m.max(self.a[i][j].norm());
            }
        }
        m
    }

    /// Induced 1-norm (max column sum).
    pub fn norm1(&self) -> f64 {
        (0..self.n)
            .map(|j| (0..self.n).map(|i| self.a[i][j].norm()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn is_real(&self, tol: f64) -> bool {
        (0..self.n).all(|i| (0..self.n).all(|j| self.a[i][j].im.abs() <= tol))
    }

    /// Drop imaginary parts.
    pub fn real_part(&self) -> Self {
        let mut m = *self;
        for i in 0..self.n {
            for j in 0..self.n {
                m.a[i][j].im = 0.0;
            }
        }
        m
    }

    /// Commutator `self·other − other·self`.
    pub fn commutator(&self, other: &Mat) -> Self {
        *self * *other - *other * *self
    }

    /// Determinant by Gaussian elimination with partial pivoting.
    pub fn det(&self) -> C64 {
        let n = self.n;
        let mut a = self.a;
        let mut det = ONE;
        for k in 0..n {
            let p = (k..n)
                .max_by(|&x, &y| a[x][k].norm().total_cmp(&a[y][k].norm()))
                .unwrap();
            if a[p][k].norm() == 0.0 {
                return ZERO;
            }
            if p != k {
                a.swap(p, k);
                det = -det;
            }
            det *= a[k][k];
            for i in (k + 1)..n {
                let f = a[i][k] / a[k][k];
                for j in k..n {
                    let t = a[k][j];
                    a[i][j] -= f * t;
                }
            }
        }
        det
    }

    /// Solves `self · X = rhs`. Returns `None` for a numerically singular system.
    pub fn solve(&self, rhs: &Mat) -> Option<Mat> {
        let n = self.n;
        let mut a = self.a;
        let mut b = rhs.a;
        for k in 0..n {
            let p = (k..n)
                .max_by(|&x, &y| a[x][k].norm().total_cmp(&a[y][k].norm()))
                .unwrap();
            if a[p][k].norm() < 1e-300 {
                return None;
            }
            a.swap(p, k);
            b.swap(p, k);
            for i in (k + 1)..n {
                let f = a[i][k] / a[k][k];
                if f == ZERO {
                    continue;
                }
                for j in k..n {
                    let t = a[k][j];
                    a[i][j] -= f * t;
                }
                for j in 0..n {
                    let t = b[k][j];
                    b[i][j] -= f * t;
                }
            }
        }
        let mut x = Mat::zeros(n);
        for col in 0..n {
            for i in (0..n).rev() {
                let mut s = b[i][col];
                for j in (i + 1)..n {
                    s -= a[i][j] * x.a[j][col];
                }
                x.a[i][col] = s / a[i][i];
            }
        }
        Some(x)
    }

    /// Leading `k×k` block.
    pub fn leading_block(&self, k: usize) -> Mat {
        let mut m = Mat::zeros(k);
        for i in 0..k {
            m.a[i][..k].copy_from_slice(&self.a[i][..k]);
        }
        m
    }

    /// Embeds `self` as the leading block of an `n×n` identity.
    pub fn embed_in_identity(&self, n: usize) -> Mat {
        let mut m = Mat::identity(n);
        for i in 0..self.n {
            m.a[i][..self.n].copy_from_slice(&self.a[i][..self.n]);
        }
        m
    }

    /// Embeds `self` as the leading block of an `n×n` zero matrix.
    pub fn embed_in_zeros(&self, n: usize) -> Mat {
        let mut m = Mat::zeros(n);
        for i in 0..self.n {
            m.a[i][..self.n].copy_from_slice(&self.a[i][..self.n]);
        }
        m
    }

    /// Smallest `k` such that all nonzero entries lie in the leading `k×k` block.
    pub fn support_size(&self) -> usize {
        for k in (1..=self.n).rev() {
            let i = k - 1;
            let nonzero = (0..self.n).any(|j| self.a[i][j] != ZERO || self.a[j][i] != ZERO);
            if nonzero {
                return k;
            }
        }
        0
    }

    /// Row-major entries.
    pub fn entries(&self) -> impl Iterator<Item = C64> + '_ {
        (0..self.n).flat_map(move |i| (0..self.n).map(move |j| self.a[i][j]))
    }

    pub fn to_nalgebra(&self) -> DMatrix<C64> {
        DMatrix::from_fn(self.n, self.n, |i, j| self.a[i][j])
    }

    pub fn from_nalgebra(m: &DMatrix<C64>) -> Self {
        assert_eq!(m.nrows(), m.ncols());
        Self::from_fn(m.nrows(), |i, j| m[(i, j)])
    }
}

impl Index<(usize, usize)> for Mat {
    type Output = C64;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        debug_assert!(i < self.n && j < self.n);
        &self.a[i][j]
    }
}

impl IndexMut<(usize, usize)> for Mat {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        debug_assert!(i < self.n && j < self.n);
        &mut self.a[i][j]
    }
}

impl Mul for Mat {
    type Output = Mat;
    #[inline]
    fn mul(self, rhs: Mat) -> Mat {
        debug_assert_eq!(self.n, rhs.n);
        let n = self.n;
        let mut out = Mat::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let x = self.a[i][k];
                if x == ZERO {
                    continue;
                }
                for j in 0..n {
                    out.a[i][j] += x * rhs.a[k][j];
                }
            }
        }
        out
    }
}

impl Add for Mat {
    type Output = Mat;
    #[inline]
    fn add(mut self, rhs: Mat) -> Mat {
        self += rhs;
        self
    }
}

impl AddAssign for Mat {
    #[inline]
    fn add_assign(&mut self, rhs: Mat) {
        debug_assert_eq!(self.n, rhs.n);
        for i in 0..self.n {
            for j in 0..self.n {
                self.a[i][j] += rhs.a[i][j];
            }
        }
    }
}

impl Sub for Mat {
    type Output = Mat;
    #[inline]
    fn sub(mut self, rhs: Mat) -> Mat {
        debug_assert_eq!(self.n, rhs.n);
        for i in 0..self.n {
            for j in 0..self.n {
                self.a[i][j] -= rhs.a[i][j];
            }
        }
        self
    }
}

impl Neg for Mat {
    type Output = Mat;
    fn neg(self) -> Mat {
        self.scale(-1.0)
    }
}

impl fmt::Debug for Mat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Mat{}x{} [", self.n, self.n)?;
        for i in 0..self.n {
            write!(f, "  ")?;
            for j in 0..self.n {
                let z = self.a[i][j];
                write!(f, "{:+.6}{:+.6}i ", z.re, z.im)?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solve_recovers_known_solution() {
        let a = Mat::from_real_rows(&[&[4.0, 1.0, 0.0], &[1.0, 3.0, 1.0], &[0.0, 1.0, 2.0]]);
        let x = Mat::from_real_rows(&[&[1.0, 0.0, 2.0], &[0.0, -1.0, 1.0], &[3.0, 1.0, 0.0]]);
        let b = a * x;
        let got = a.solve(&b).unwrap();
        assert!((got - x).max_abs() < 1e-13);
    }

    #[test]
    fn det_of_permutation_and_triangular() {
        let p = Mat::from_real_rows(&[&[0.0, 1.0], &[1.0, 0.0]]);
        assert!((p.det() + ONE).norm() < 1e-15);
        let t = Mat::from_real_rows(&[&[2.0, 5.0, 1.0], &[0.0, 3.0, 7.0], &[0.0, 0.0, 0.5]]);
        assert!((t.det() - C64::new(3.0, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn support_size_detects_leading_block() {
        let mut m = Mat::zeros(4);
        m[(0, 2)] = ONE;
        m[(2, 0)] = -ONE;
        assert_eq!(m.support_size(), 3);
        assert_eq!(Mat::zeros(4).support_size(), 0);
    }

    #[test]
    fn trace_product_matches_explicit_product() {
        let a = Mat::from_fn(3, |i, j| C64::new(i as f64 + 0.5, j as f64 - 1.0));
        let b = Mat::from_fn(3, |i, j| C64::new((i * j) as f64, 1.0 + i as f64));
        let direct = (a * b).trace().re;
        assert!((a.re_trace_product(&b) - direct).abs() < 1e-12);
    }
}
