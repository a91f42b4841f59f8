//! Small dense linear algebra: symmetric matrices, cyclic Jacobi
//! eigendecomposition, sandwich products and spectral norms.
//!
//! Everything here is generic over [`Real`] and sized for d up to a few
//! hundred. Storage is row-major and square.

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Relative asymmetry accepted by [`SymMatrix::from_row_major`] before the
/// input is rejected.
pub const SYMMETRY_TOLERANCE: f64 = 1e-9;

const MAX_JACOBI_SWEEPS: usize = 100;

pub fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

pub fn norm<T: Real>(a: &[T]) -> T {
    dot(a, a).sqrt()
}

/// `y += alpha * x`
pub fn axpy<T: Real>(alpha: T, x: &[T], y: &mut [T]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn sub<T: Real>(a: &[T], b: &[T]) -> Vec<T> {
    a.iter().zip(b).map(|(&x, &y)| x - y).collect()
}

pub fn all_finite<T: Real>(a: &[T]) -> bool {
    a.iter().all(|x| x.is_finite())
}

/// Dense square matrix, row-major. Used for orthonormal bases and other
/// non-symmetric intermediates.
#[derive(Debug, Clone, PartialEq)]
pub struct SquareMatrix<T = f64> {
    dim: usize,
    data: Vec<T>,
}

impl<T: Real> SquareMatrix<T> {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            data: vec![T::zero(); dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m.data[i * dim + i] = T::one();
        }
        m
    }

    pub fn from_row_major(dim: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != dim * dim {
            return Err(Error::DimensionMismatch {
                context: "SquareMatrix::from_row_major",
                expected: dim * dim,
                got: data.len(),
            });
        }
        Ok(Self { dim, data })
    }

    pub fn from_fn(dim: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(dim * dim);
        for i in 0..dim {
            for j in 0..dim {
                data.push(f(i, j));
            }
        }
        Self { dim, data }
    }

    /// Matrix whose k-th column is `columns[k]`.
    pub fn from_columns(columns: &[Vec<T>]) -> Result<Self> {
        let dim = columns.len();
        for c in columns {
            if c.len() != dim {
                return Err(Error::DimensionMismatch {
                    context: "SquareMatrix::from_columns",
                    expected: dim,
                    got: c.len(),
                });
            }
        }
        Ok(Self::from_fn(dim, |i, j| columns[j][i]))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.dim + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, value: T) {
        self.data[i * self.dim + j] = value;
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn column(&self, j: usize) -> Vec<T> {
        (0..self.dim).map(|i| self.get(i, j)).collect()
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.dim, |i, j| self.get(j, i))
    }

    pub fn matmul(&self, other: &Self) -> Result<Self> {
        check_dim("SquareMatrix::matmul", self.dim, other.dim)?;
        let d = self.dim;
        let mut out = Self::zeros(d);
        for i in 0..d {
            for k in 0..d {
                let a = self.get(i, k);
                if a == T::zero() {
                    continue;
                }
                for j in 0..d {
                    out.data[i * d + j] += a * other.get(k, j);
                }
            }
        }
        Ok(out)
    }

    pub fn mul_vec(&self, x: &[T]) -> Vec<T> {
        (0..self.dim)
            .map(|i| dot(&self.data[i * self.dim..(i + 1) * self.dim], x))
            .collect()
    }

    /// Largest absolute entry of `UᵀU - I`.
    pub fn orthonormality_defect(&self) -> T {
        let d = self.dim;
        let mut worst = T::zero();
        for a in 0..d {
            for b in 0..d {
                let mut s = T::zero();
                for i in 0..d {
                    s += self.get(i, a) * self.get(i, b);
                }
                let target = if a == b { T::one() } else { T::zero() };
                worst = worst.max((s - target).abs());
            }
        }
        worst
    }

    /// `(M + Mᵀ)/2`.
    pub fn symmetric_part(&self) -> SymMatrix<T> {
        let half = T::lit(0.5);
        let d = self.dim;
        let mut data = vec![T::zero(); d * d];
        for i in 0..d {
            for j in i..d {
                let v = if i == j {
                    self.get(i, i)
                } else {
                    half * (self.get(i, j) + self.get(j, i))
                };
                data[i * d + j] = v;
                data[j * d + i] = v;
            }
        }
        SymMatrix { dim: d, data }
    }
}

/// Symmetric matrix with exactly symmetric full storage.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix<T = f64> {
    dim: usize,
    data: Vec<T>,
}

impl<T: Real> SymMatrix<T> {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            data: vec![T::zero(); dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self::from_diag(&vec![T::one(); dim])
    }

    pub fn from_diag(diag: &[T]) -> Self {
        let dim = diag.len();
        let mut m = Self::zeros(dim);
        for (i, &v) in diag.iter().enumerate() {
            m.data[i * dim + i] = v;
        }
        m
    }

    /// Builds from a full row-major square, symmetrizing via `(M + Mᵀ)/2`.
    ///
    /// Asymmetry larger than [`SYMMETRY_TOLERANCE`] relative to the largest
    /// entry is rejected, as are non-finite entries.
    pub fn from_row_major(dim: usize, data: Vec<T>) -> Result<Self> {
        let square = SquareMatrix::from_row_major(dim, data)?;
        Self::from_square(&square)
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let dim = rows.len();
        let mut data = Vec::with_capacity(dim * dim);
        for r in rows {
            if r.len() != dim {
                return Err(Error::DimensionMismatch {
                    context: "SymMatrix::from_rows",
                    expected: dim,
                    got: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Self::from_row_major(dim, data)
    }

    pub fn from_square(m: &SquareMatrix<T>) -> Result<Self> {
        if !all_finite(m.as_slice()) {
            return Err(Error::NonFinite("SymMatrix input"));
        }
        let d = m.dim();
        let scale = m
            .as_slice()
            .iter()
            .fold(T::zero(), |acc, x| acc.max(x.abs()));
        let mut asym = T::zero();
        for i in 0..d {
            for j in (i + 1)..d {
                asym = asym.max((m.get(i, j) - m.get(j, i)).abs());
            }
        }
        let rel = if scale > T::zero() {
            (asym / scale).to_f64().unwrap_or(f64::INFINITY)
        } else {
            0.0
        };
        if rel > SYMMETRY_TOLERANCE {
            return Err(Error::NotSymmetric {
                asymmetry: rel,
                tolerance: SYMMETRY_TOLERANCE,
            });
        }
        Ok(m.symmetric_part())
    }

    /// Builds from a generator evaluated on the upper triangle only.
    pub fn from_upper_fn(dim: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            for j in i..dim {
                let v = f(i, j);
                m.data[i * dim + j] = v;
                m.data[j * dim + i] = v;
            }
        }
        m
    }

    /// `x xᵀ`
    pub fn outer(x: &[T]) -> Self {
        Self::from_upper_fn(x.len(), |i, j| x[i] * x[j])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.dim + j]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn diag(&self) -> Vec<T> {
        (0..self.dim).map(|i| self.get(i, i)).collect()
    }

    pub fn trace(&self) -> T {
        (0..self.dim).map(|i| self.get(i, i)).sum()
    }

    pub fn to_square(&self) -> SquareMatrix<T> {
        SquareMatrix {
            dim: self.dim,
            data: self.data.clone(),
        }
    }

    pub fn scale(&self, c: T) -> Self {
        Self {
            dim: self.dim,
            data: self.data.iter().map(|&x| x * c).collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        check_dim("SymMatrix::add", self.dim, other.dim)?;
        Ok(Self {
            dim: self.dim,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| a + b)
                .collect(),
        })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        check_dim("SymMatrix::sub", self.dim, other.dim)?;
        Ok(Self {
            dim: self.dim,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| a - b)
                .collect(),
        })
    }

    /// Adds `v` to entry `(i, j)` and its mirror (once on the diagonal).
    pub fn add_to_entry(&mut self, i: usize, j: usize, v: T) {
        let d = self.dim;
        self.data[i * d + j] += v;
        if i != j {
            self.data[j * d + i] += v;
        }
    }

    /// `self += alpha * other`
    pub fn add_scaled(&mut self, alpha: T, other: &Self) {
        debug_assert_eq!(self.dim, other.dim);
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += alpha * b;
        }
    }

    /// `self += alpha * x xᵀ`
    pub fn rank1_update(&mut self, alpha: T, x: &[T]) {
        debug_assert_eq!(x.len(), self.dim);
        let d = self.dim;
        for i in 0..d {
            let ai = alpha * x[i];
            for j in i..d {
                let v = ai * x[j];
                self.data[i * d + j] += v;
                if i != j {
                    self.data[j * d + i] += v;
                }
            }
        }
    }

    pub fn mul_vec(&self, x: &[T]) -> Vec<T> {
        (0..self.dim)
            .map(|i| dot(&self.data[i * self.dim..(i + 1) * self.dim], x))
            .collect()
    }

    /// `wᵀ M w`
    pub fn quad_form(&self, w: &[T]) -> T {
        dot(w, &self.mul_vec(w))
    }

    pub fn frobenius_norm(&self) -> T {
        self.data.iter().map(|&x| x * x).sum::<T>().sqrt()
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |acc, x| acc.max(x.abs()))
    }

    pub fn max_abs_diff(&self, other: &Self) -> T {
        self.data
            .iter()
            .zip(&other.data)
            .fold(T::zero(), |acc, (&a, &b)| acc.max((a - b).abs()))
    }

    pub fn is_finite(&self) -> bool {
        all_finite(&self.data)
    }

    /// `P M Pᵀ` for a permutation `perm` (row i of the result is row
    /// `perm[i]` of `self`).
    pub fn permute(&self, perm: &[usize]) -> Self {
        Self::from_upper_fn(self.dim, |i, j| self.get(perm[i], perm[j]))
    }

    /// `U M Uᵀ` for a square `U`; exact symmetry enforced.
    pub fn congruence(&self, u: &SquareMatrix<T>) -> Result<Self> {
        check_dim("SymMatrix::congruence", self.dim, u.dim())?;
        let um = u.matmul(&self.to_square())?;
        Ok(um.matmul(&u.transpose())?.symmetric_part())
    }

    pub fn cast<U: Real>(&self) -> SymMatrix<U> {
        SymMatrix {
            dim: self.dim,
            data: self
                .data
                .iter()
                .map(|x| U::from_f64(x.to_f64().unwrap_or(f64::NAN)).unwrap_or_else(U::nan))
                .collect(),
        }
    }
}

/// `U diag(λ) Uᵀ` with eigenvalues sorted in descending order and the k-th
/// eigenvector stored as column k of `eigenvectors`.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenDecomposition<T = f64> {
    pub eigenvalues: Vec<T>,
    pub eigenvectors: SquareMatrix<T>,
}

impl<T: Real> EigenDecomposition<T> {
    /// `U f(Λ) Uᵀ`
    pub fn map_eigenvalues(&self, f: impl Fn(T) -> T) -> SymMatrix<T> {
        let d = self.eigenvalues.len();
        let mapped: Vec<T> = self.eigenvalues.iter().map(|&l| f(l)).collect();
        let u = &self.eigenvectors;
        SymMatrix::from_upper_fn(d, |i, j| {
            (0..d).fold(T::zero(), |acc, k| acc + u.get(i, k) * mapped[k] * u.get(j, k))
        })
    }

    pub fn reconstruct(&self) -> SymMatrix<T> {
        self.map_eigenvalues(|l| l)
    }

    pub fn min_eigenvalue(&self) -> T {
        *self.eigenvalues.last().expect("non-empty decomposition")
    }

    pub fn max_eigenvalue(&self) -> T {
        self.eigenvalues[0]
    }
}

/// Cyclic Jacobi eigendecomposition of a symmetric matrix.
///
/// Sweeps until the off-diagonal Frobenius mass drops below
/// `max(1e-12, 10·eps)·‖M‖_F`.
pub fn sym_eigen<T: Real>(m: &SymMatrix<T>) -> Result<EigenDecomposition<T>> {
    if !m.is_finite() {
        return Err(Error::NonFinite("sym_eigen input"));
    }
    let d = m.dim();
    let mut a = m.to_square();
    let mut v = SquareMatrix::<T>::identity(d);
    let scale = m.frobenius_norm();
    let tol = T::lit(1e-12).max(T::epsilon() * T::lit(10.0)) * scale;

    let off_diagonal = |a: &SquareMatrix<T>| -> T {
        let mut s = T::zero();
        for i in 0..d {
            for j in (i + 1)..d {
                let x = a.get(i, j);
                s += x * x;
            }
        }
        (s + s).sqrt()
    };

    let mut sweeps = 0;
    loop {
        let off = off_diagonal(&a);
        if off <= tol || scale == T::zero() {
            break;
        }
        if sweeps == MAX_JACOBI_SWEEPS {
            return Err(Error::EigenNonConvergence {
                dim: d,
                sweeps,
                off_diagonal: off.to_f64().unwrap_or(f64::NAN),
            });
        }
        sweeps += 1;
        for p in 0..d {
            for q in (p + 1)..d {
                let apq = a.get(p, q);
                if apq == T::zero() {
                    continue;
                }
                let app = a.get(p, p);
                let aqq = a.get(q, q);
                let theta = (aqq - app) / (apq + apq);
                let t = {
                    let t = T::one() / (theta.abs() + (theta * theta + T::one()).sqrt());
                    if theta < T::zero() {
                        -t
                    } else {
                        t
                    }
                };
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;
                for k in 0..d {
                    let akp = a.get(k, p);
                    let akq = a.get(k, q);
                    a.set(k, p, c * akp - s * akq);
                    a.set(k, q, s * akp + c * akq);
                }
                for k in 0..d {
                    let apk = a.get(p, k);
                    let aqk = a.get(q, k);
                    a.set(p, k, c * apk - s * aqk);
                    a.set(q, k, s * apk + c * aqk);
                }
                a.set(p, q, T::zero());
                a.set(q, p, T::zero());
                for k in 0..d {
                    let vkp = v.get(k, p);
                    let vkq = v.get(k, q);
                    v.set(k, p, c * vkp - s * vkq);
                    v.set(k, q, s * vkp + c * vkq);
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&i, &j| {
        a.get(j, j)
            .partial_cmp(&a.get(i, i))
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let eigenvalues = order.iter().map(|&k| a.get(k, k)).collect();
    let eigenvectors = SquareMatrix::from_fn(d, |i, j| v.get(i, order[j]));
    Ok(EigenDecomposition {
        eigenvalues,
        eigenvectors,
    })
}

/// `A B A`, symmetrized as `(R + Rᵀ)/2`.
pub fn sandwich<T: Real>(a: &SymMatrix<T>, b: &SymMatrix<T>) -> Result<SymMatrix<T>> {
    check_dim("sandwich", a.dim(), b.dim())?;
    let a_sq = a.to_square();
    let r = a_sq.matmul(&b.to_square())?.matmul(&a_sq)?;
    Ok(r.symmetric_part())
}

/// Largest absolute eigenvalue.
pub fn spectral_norm<T: Real>(m: &SymMatrix<T>) -> Result<T> {
    if m.dim() == 0 {
        return Ok(T::zero());
    }
    let eig = sym_eigen(m)?;
    Ok(eig.max_eigenvalue().abs().max(eig.min_eigenvalue().abs()))
}

/// Inverse of a symmetric positive-definite matrix through its
/// eigendecomposition.
pub fn spd_inverse<T: Real>(m: &SymMatrix<T>) -> Result<SymMatrix<T>> {
    let eig = sym_eigen(m)?;
    let min = eig.min_eigenvalue();
    if min <= T::zero() {
        return Err(Error::NotPositiveDefinite {
            min_eigenvalue: min.to_f64().unwrap_or(f64::NAN),
        });
    }
    Ok(eig.map_eigenvalues(|l| T::one() / l))
}

/// Lower-triangular Cholesky factor `L` with `M = L Lᵀ`.
#[derive(Debug, Clone)]
pub struct Cholesky<T = f64> {
    lower: SquareMatrix<T>,
}

impl<T: Real> Cholesky<T> {
    pub fn new(m: &SymMatrix<T>) -> Result<Self> {
        let d = m.dim();
        let mut l = SquareMatrix::zeros(d);
        for j in 0..d {
            let mut diag = m.get(j, j);
            for k in 0..j {
                diag -= l.get(j, k) * l.get(j, k);
            }
            if diag <= T::zero() {
                return Err(Error::NotPositiveDefinite {
                    min_eigenvalue: diag.to_f64().unwrap_or(f64::NAN),
                });
            }
            let ljj = diag.sqrt();
            l.set(j, j, ljj);
            for i in (j + 1)..d {
                let mut s = m.get(i, j);
                for k in 0..j {
                    s -= l.get(i, k) * l.get(j, k);
                }
                l.set(i, j, s / ljj);
            }
        }
        Ok(Self { lower: l })
    }

    pub fn lower(&self) -> &SquareMatrix<T> {
        &self.lower
    }

    /// `L z`, exploiting the triangular structure.
    pub fn apply(&self, z: &[T]) -> Vec<T> {
        let d = self.lower.dim();
        (0..d)
            .map(|i| {
                let row = &self.lower.as_slice()[i * d..i * d + i + 1];
                dot(row, &z[..=i])
            })
            .collect()
    }
}

/// Orthonormalizes the columns of `m` by modified Gram–Schmidt (the Q of a
/// thin QR factorization, with the sign convention `R_kk > 0`).
pub fn orthonormalize_columns<T: Real>(m: &SquareMatrix<T>) -> Result<SquareMatrix<T>> {
    let d = m.dim();
    let mut cols: Vec<Vec<T>> = (0..d).map(|j| m.column(j)).collect();
    for j in 0..d {
        for k in 0..j {
            let (done, rest) = cols.split_at_mut(j);
            let r = dot(&done[k], &rest[0]);
            axpy(-r, &done[k], &mut rest[0]);
        }
        let nrm = norm(&cols[j]);
        if nrm <= T::epsilon() {
            return Err(Error::InvalidParameter(
                "columns are linearly dependent".into(),
            ));
        }
        for x in cols[j].iter_mut() {
            *x /= nrm;
        }
    }
    SquareMatrix::from_columns(&cols)
}

fn check_dim(context: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch {
            context,
            expected,
            got,
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sym(rows: &[&[f64]]) -> SymMatrix {
        SymMatrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    fn check_decomposition(m: &SymMatrix, eig: &EigenDecomposition) {
        assert!(eig.eigenvectors.orthonormality_defect() < 1e-10);
        let err = eig.reconstruct().sub(m).unwrap().frobenius_norm();
        assert!(err <= 1e-8 * m.frobenius_norm().max(1e-300), "err {err}");
        for w in eig.eigenvalues.windows(2) {
            assert!(w[0] >= w[1]);
        }
    }

    #[test]
    fn identity_eigenvalues() {
        let m = SymMatrix::<f64>::identity(3);
        let eig = sym_eigen(&m).unwrap();
        assert_eq!(eig.eigenvalues, vec![1.0, 1.0, 1.0]);
        check_decomposition(&m, &eig);
    }

    #[test]
    fn diagonal_is_already_solved() {
        let m = SymMatrix::<f64>::from_diag(&[2.0, -1.0]);
        let eig = sym_eigen(&m).unwrap();
        assert_eq!(eig.eigenvalues, vec![2.0, -1.0]);
        assert_eq!(eig.eigenvectors.get(0, 0).abs(), 1.0);
        assert_eq!(eig.eigenvectors.get(1, 1).abs(), 1.0);
    }

    #[test]
    fn two_by_two_hand_solution() {
        let m = sym(&[&[2.0, 1.0], &[1.0, 2.0]]);
        let eig = sym_eigen(&m).unwrap();
        assert!((eig.eigenvalues[0] - 3.0).abs() < 1e-14);
        assert!((eig.eigenvalues[1] - 1.0).abs() < 1e-14);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let u0 = eig.eigenvectors.column(0);
        let u1 = eig.eigenvectors.column(1);
        assert!((u0[0].abs() - s).abs() < 1e-12 && (u0[0] - u0[1]).abs() < 1e-12);
        assert!((u1[0].abs() - s).abs() < 1e-12 && (u1[0] + u1[1]).abs() < 1e-12);
        check_decomposition(&m, &eig);
    }

    #[test]
    fn sandwich_examples() {
        let s = sym(&[&[3.0, 0.5], &[0.5, 1.0]]);
        assert_eq!(sandwich(&SymMatrix::identity(2), &s).unwrap(), s);
        let a = SymMatrix::from_diag(&[2.0, 2.0]);
        assert_eq!(
            sandwich(&a, &SymMatrix::identity(2)).unwrap(),
            SymMatrix::from_diag(&[4.0, 4.0])
        );
        let a = sym(&[&[2.0, 1.0], &[1.0, 2.0]]);
        assert_eq!(
            sandwich(&a, &SymMatrix::identity(2)).unwrap(),
            sym(&[&[5.0, 4.0], &[4.0, 5.0]])
        );
        assert!(matches!(
            sandwich(&a, &SymMatrix::identity(3)),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn spectral_norm_examples() {
        assert_eq!(spectral_norm(&SymMatrix::from_diag(&[1.0, -3.0])).unwrap(), 3.0);
        assert_eq!(spectral_norm(&SymMatrix::<f64>::identity(7)).unwrap(), 1.0);
        let m = sym(&[&[2.0, 1.0], &[1.0, 2.0]]);
        assert!((spectral_norm(&m).unwrap() - 3.0).abs() < 1e-14);
    }

    #[test]
    fn constructor_rejects_asymmetry() {
        let err = SymMatrix::from_row_major(2, vec![1.0, 0.5, 0.4, 1.0]).unwrap_err();
        assert!(matches!(err, Error::NotSymmetric { .. }));
        // rounding-level asymmetry is absorbed
        let m = SymMatrix::from_row_major(2, vec![1.0, 0.5, 0.5 + 1e-14, 1.0]).unwrap();
        assert_eq!(m.get(0, 1), m.get(1, 0));
        assert!(SymMatrix::from_row_major(1, vec![f64::NAN]).is_err());
    }

    #[test]
    fn works_in_single_precision() {
        let m = SymMatrix::<f32>::from_rows(&[vec![2.0, 1.0], vec![1.0, 2.0]]).unwrap();
        let eig = sym_eigen(&m).unwrap();
        assert!((eig.eigenvalues[0] - 3.0).abs() < 1e-5);
        assert!((eig.eigenvalues[1] - 1.0).abs() < 1e-5);
        assert!(eig.eigenvectors.orthonormality_defect() < 1e-5);
    }

    #[test]
    fn cholesky_and_inverse() {
        let m = sym(&[&[4.0, 2.0, 0.4], &[2.0, 3.0, 0.5], &[0.4, 0.5, 1.0]]);
        let ch = Cholesky::new(&m).unwrap();
        let l = ch.lower();
        let llt = l.matmul(&l.transpose()).unwrap().symmetric_part();
        assert!(llt.max_abs_diff(&m) < 1e-14);
        let inv = spd_inverse(&m).unwrap();
        let prod = inv.to_square().matmul(&m.to_square()).unwrap();
        assert!(prod.symmetric_part().max_abs_diff(&SymMatrix::identity(3)) < 1e-12);
        assert!(Cholesky::new(&SymMatrix::from_diag(&[1.0, -1.0])).is_err());
        assert!(spd_inverse(&SymMatrix::from_diag(&[1.0, 0.0])).is_err());
    }

    #[test]
    fn gram_schmidt_gives_orthonormal_columns() {
        let m = SquareMatrix::from_row_major(3, vec![1.0, 2.0, 0.0, 0.5, 1.0, 3.0, 1.0, 0.0, 1.0])
            .unwrap();
        let q = orthonormalize_columns(&m).unwrap();
        assert!(q.orthonormality_defect() < 1e-14);
    }

    fn random_sym(d: usize, entries: &[f64]) -> SymMatrix {
        let mut k = 0;
        SymMatrix::from_upper_fn(d, |_, _| {
            k += 1;
            entries[(k - 1) % entries.len()]
        })
    }

    proptest! {
        #[test]
        fn reconstruction_holds(d in 1usize..=20, entries in prop::collection::vec(-10.0f64..10.0, 1..=210)) {
            let m = random_sym(d, &entries);
            let eig = sym_eigen(&m).unwrap();
            check_decomposition(&m, &eig);
        }

        #[test]
        fn eigenvalues_permutation_invariant(d in 2usize..=8, entries in prop::collection::vec(-5.0f64..5.0, 36), seed in 0u64..1000) {
            let m = random_sym(d, &entries);
            let mut perm: Vec<usize> = (0..d).collect();
            // deterministic shuffle from the seed
            let mut s = seed;
            for i in (1..d).rev() {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                perm.swap(i, (s >> 33) as usize % (i + 1));
            }
            let a = sym_eigen(&m).unwrap().eigenvalues;
            let b = sym_eigen(&m.permute(&perm)).unwrap().eigenvalues;
            let scale = m.frobenius_norm().max(1.0);
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() <= 1e-10 * scale);
            }
        }

        #[test]
        fn spectral_norm_is_absolutely_homogeneous(d in 1usize..=8, entries in prop::collection::vec(-5.0f64..5.0, 36), c in -4.0f64..4.0) {
            let m = random_sym(d, &entries);
            let lhs = spectral_norm(&m.scale(c)).unwrap();
            let rhs = c.abs() * spectral_norm(&m).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + rhs));
        }
    }
}
