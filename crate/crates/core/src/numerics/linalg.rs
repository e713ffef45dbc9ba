//! Dense row-major matrices, symmetric positive-definite solves and the
//! Sherman–Morrison rank-one downdate.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{max_of, Scalar};

/// Relative pivot floor for the symmetric factorization.
pub const PIVOT_FLOOR: f64 = 1e-12;
/// Absolute symmetry tolerance accepted by the SPD routines.
pub const SYMMETRY_TOL: f64 = 1e-10;
/// `|1 - u'A^-1 u|` at or below this value is treated as a singular downdate.
pub const DOWNDATE_FLOOR: f64 = 1e-10;

/// Dense matrix stored row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Matrix<T> {
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
            m.data[i * n + i] = T::one();
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::LengthMismatch {
                expected: rows * cols,
                actual: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from equally long rows.
    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(Error::LengthMismatch {
                    expected: cols,
                    actual: r.len(),
                });
            }
            data.extend(r.iter().cloned());
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> &T {
        &self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: T) {
        self.data[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.set(j, i, self.get(i, j).clone());
            }
        }
        t
    }

    pub fn mul_vec(&self, x: &[T]) -> Result<Vec<T>> {
        if x.len() != self.cols {
            return Err(Error::DimensionMismatch {
                expected: self.cols,
                actual: x.len(),
            });
        }
        Ok((0..self.rows).map(|i| dot(self.row(i), x)).collect())
    }

    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.cols != other.rows {
            return Err(Error::DimensionMismatch {
                expected: self.cols,
                actual: other.rows,
            });
        }
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k).clone();
                if a.is_zero() {
                    continue;
                }
                for j in 0..other.cols {
                    let v = out.get(i, j).clone() + a.clone() * other.get(k, j).clone();
                    out.set(i, j, v);
                }
            }
        }
        Ok(out)
    }

    /// `XᵀX` for this matrix `X`.
    pub fn gram(&self) -> Self {
        let n = self.cols;
        let mut g = Self::zeros(n, n);
        for r in 0..self.rows {
            let row = self.row(r);
            for i in 0..n {
                if row[i].is_zero() {
                    continue;
                }
                for j in i..n {
                    let v = g.get(i, j).clone() + row[i].clone() * row[j].clone();
                    g.set(i, j, v);
                }
            }
        }
        for i in 0..n {
            for j in 0..i {
                let v = g.get(j, i).clone();
                g.set(i, j, v);
            }
        }
        g
    }

    /// `A - uuᵀ`.
    pub fn minus_outer(&self, u: &[T]) -> Result<Self> {
        self.check_square_dim(u.len())?;
        let mut out = self.clone();
        for i in 0..self.rows {
            for j in 0..self.cols {
                let v = out.get(i, j).clone() - u[i].clone() * u[j].clone();
                out.set(i, j, v);
            }
        }
        Ok(out)
    }

    /// Adds `c` to every diagonal entry.
    pub fn add_diagonal(&mut self, c: T) {
        for i in 0..self.rows.min(self.cols) {
            let v = self.get(i, i).clone() + c.clone();
            self.set(i, i, v);
        }
    }

    /// Largest absolute entry-wise difference.
    pub fn max_abs_diff(&self, other: &Self) -> T {
        assert_eq!(
            (self.rows, self.cols),
            (other.rows, other.cols),
            "shape mismatch"
        );
        self.data
            .iter()
            .zip(&other.data)
            .fold(T::zero(), |m, (a, b)| {
                max_of(m, (a.clone() - b.clone()).abs())
            })
    }

    /// `‖A - I‖∞` entry-wise.
    pub fn identity_residual(&self) -> T {
        self.max_abs_diff(&Self::identity(self.rows))
    }

    fn check_square_dim(&self, n: usize) -> Result<()> {
        if !self.is_square() {
            return Err(Error::DimensionMismatch {
                expected: self.rows,
                actual: self.cols,
            });
        }
        if n != self.rows {
            return Err(Error::DimensionMismatch {
                expected: self.rows,
                actual: n,
            });
        }
        Ok(())
    }

    fn check_symmetric(&self) -> Result<()> {
        let tol = T::lit(SYMMETRY_TOL);
        for i in 0..self.rows {
            for j in 0..i {
                if (self.get(i, j).clone() - self.get(j, i).clone()).abs() > tol {
                    return Err(Error::NotSymmetric { i, j });
                }
            }
        }
        Ok(())
    }
}

pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter()
        .zip(b)
        .fold(T::zero(), |acc, (x, y)| acc + x.clone() * y.clone())
}

/// Square-root-free Cholesky factorization `A = L D Lᵀ` of an SPD matrix.
///
/// Working without square roots keeps the factorization exact over rational
/// scalars; for floating point it is numerically equivalent to `L L ᵀ`.
#[derive(Clone, Debug)]
pub struct Ldl<T> {
    n: usize,
    /// Strictly lower triangle of the unit lower factor, row-major `n × n`.
    lower: Vec<T>,
    diag: Vec<T>,
}

impl<T: Scalar> Ldl<T> {
    pub fn factor(a: &Matrix<T>) -> Result<Self> {
        a.check_square_dim(a.rows())?;
        a.check_symmetric()?;
        let n = a.rows();
        let max_diag = (0..n).fold(T::zero(), |m, i| max_of(m, a.get(i, i).clone()));
        let floor = T::lit(PIVOT_FLOOR) * max_diag;
        let mut lower = vec![T::zero(); n * n];
        let mut diag: Vec<T> = Vec::with_capacity(n);
        for j in 0..n {
            let mut d = a.get(j, j).clone();
            for k in 0..j {
                let l = lower[j * n + k].clone();
                d = d - l.clone() * l * diag[k].clone();
            }
            if d <= floor {
                return Err(Error::NotPositiveDefinite {
                    index: j,
                    pivot: d.to_f64_lossy(),
                });
            }
            for i in (j + 1)..n {
                let mut s = a.get(i, j).clone();
                for k in 0..j {
                    s = s - lower[i * n + k].clone() * lower[j * n + k].clone() * diag[k].clone();
                }
                lower[i * n + j] = s / d.clone();
            }
            diag.push(d);
        }
        Ok(Self { n, lower, diag })
    }

    pub fn solve(&self, b: &[T]) -> Result<Vec<T>> {
        let n = self.n;
        if b.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                actual: b.len(),
            });
        }
        let mut z = b.to_vec();
        for i in 0..n {
            let mut s = z[i].clone();
            for k in 0..i {
                s = s - self.lower[i * n + k].clone() * z[k].clone();
            }
            z[i] = s;
        }
        for i in 0..n {
            z[i] = z[i].clone() / self.diag[i].clone();
        }
        for i in (0..n).rev() {
            let mut s = z[i].clone();
            for k in (i + 1)..n {
                s = s - self.lower[k * n + i].clone() * z[k].clone();
            }
            z[i] = s;
        }
        Ok(z)
    }

    pub fn dim(&self) -> usize {
        self.n
    }
}

/// Solves `A x = b` for symmetric positive-definite `A`.
pub fn solve_spd<T: Scalar>(a: &Matrix<T>, b: &[T]) -> Result<Vec<T>> {
    if b.len() != a.rows() {
        return Err(Error::DimensionMismatch {
            expected: a.rows(),
            actual: b.len(),
        });
    }
    Ldl::factor(a)?.solve(b)
}

/// Inverse of a symmetric positive-definite matrix, symmetrized.
pub fn invert_spd<T: Scalar>(a: &Matrix<T>) -> Result<Matrix<T>> {
    let ldl = Ldl::factor(a)?;
    let n = ldl.dim();
    let mut inv = Matrix::zeros(n, n);
    let mut e = vec![T::zero(); n];
    for j in 0..n {
        e[j] = T::one();
        let col = ldl.solve(&e)?;
        e[j] = T::zero();
        for (i, v) in col.into_iter().enumerate() {
            inv.set(i, j, v);
        }
    }
    let half = T::one() / (T::one() + T::one());
    for i in 0..n {
        for j in 0..i {
            let avg = (inv.get(i, j).clone() + inv.get(j, i).clone()) * half.clone();
            inv.set(i, j, avg.clone());
            inv.set(j, i, avg);
        }
    }
    Ok(inv)
}

/// Given `A⁻¹` (symmetric), returns `(A - uuᵀ)⁻¹` in `O(n²)`:
/// `A⁻¹ + (A⁻¹u)(A⁻¹u)ᵀ / (1 - uᵀA⁻¹u)`.
pub fn sherman_morrison_downdate<T: Scalar>(a_inv: &Matrix<T>, u: &[T]) -> Result<Matrix<T>> {
    a_inv.check_square_dim(u.len())?;
    let w = a_inv.mul_vec(u)?;
    let denom = T::one() - dot(u, &w);
    if denom.abs() <= T::lit(DOWNDATE_FLOOR) {
        return Err(Error::SingularDowndate {
            denominator: denom.to_f64_lossy(),
        });
    }
    let n = u.len();
    let mut out = a_inv.clone();
    for i in 0..n {
        if w[i].is_zero() {
            continue;
        }
        let wi = w[i].clone() / denom.clone();
        for j in 0..n {
            let v = out.get(i, j).clone() + wi.clone() * w[j].clone();
            out.set(i, j, v);
        }
    }
    Ok(out)
}

/// Work units billed for `madds` multiply-adds on a model with `params`
/// parameters: `⌈flops / (2·params)⌉` with `flops = 2·madds`, so one unit is
/// about one example gradient.
pub fn work_units(madds: u64, params: usize) -> u64 {
    madds.div_ceil((params as u64).max(1))
}
