//! Dense complex Hermitian operators.

use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::{ComplexField, DMatrix};
use num_complex::Complex;
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::scalar::{c, cr, Real};

/// A complex `d x d` Hermitian matrix.
///
/// Construction through [`HermitianOp::new`] checks Hermiticity entrywise and
/// then stores the exact Hermitian part, so downstream code can rely on
/// `entries[i][j] == conj(entries[j][i])` bit for bit.
#[derive(Clone, Debug, PartialEq)]
pub struct HermitianOp<T: Real> {
    mat: DMatrix<Complex<T>>,
}

impl<T: Real> HermitianOp<T> {
    pub fn new(mat: DMatrix<Complex<T>>) -> Result<Self> {
        if mat.nrows() != mat.ncols() || mat.nrows() == 0 {
            return Err(Error::invalid(format!(
                "operator must be square and nonempty, got {}x{}",
                mat.nrows(),
                mat.ncols()
            )));
        }
        let tol = T::hermitian_tol();
        let d = mat.nrows();
        for i in 0..d {
            for j in i..d {
                let diff = mat[(i, j)] - mat[(j, i)].conj();
                if diff.modulus() > tol {
                    return Err(Error::invalid(format!(
                        "operator is not Hermitian at ({i}, {j})"
                    )));
                }
            }
        }
        Ok(Self::hermitian_part(mat))
    }

    /// `(M + M^dagger) / 2`, without any check beyond squareness.
    pub fn hermitian_part(mat: DMatrix<Complex<T>>) -> Self {
        assert_eq!(mat.nrows(), mat.ncols(), "square matrix expected");
        let half = cr(T::lit(0.5));
        let adj = mat.adjoint();
        Self { mat: (mat + adj) * half }
    }

    pub fn zeros(d: usize) -> Self {
        Self { mat: DMatrix::zeros(d, d) }
    }

    pub fn identity(d: usize) -> Self {
        Self { mat: DMatrix::identity(d, d) }
    }

    pub fn from_real_diagonal(diag: &[T]) -> Self {
        let d = diag.len();
        Self {
            mat: DMatrix::from_fn(d, d, |i, j| if i == j { cr(diag[i]) } else { cr(T::zero()) }),
        }
    }

    /// Rank-one projector `|v><v|` (not normalized).
    pub fn outer(v: &[Complex<T>]) -> Self {
        let d = v.len();
        Self { mat: DMatrix::from_fn(d, d, |i, j| v[i] * v[j].conj()) }
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<Complex<T>> {
        &self.mat
    }

    pub fn into_matrix(self) -> DMatrix<Complex<T>> {
        self.mat
    }

    pub fn entry(&self, i: usize, j: usize) -> Complex<T> {
        self.mat[(i, j)]
    }

    pub fn trace(&self) -> T {
        (0..self.dim()).fold(T::zero(), |acc, i| acc + self.mat[(i, i)].re)
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> Vec<T> {
        let mut ev: Vec<T> = self.mat.clone().symmetric_eigenvalues().iter().copied().collect();
        ev.sort_by(|a, b| a.partial_cmp(b).expect("finite eigenvalues"));
        ev
    }

    pub fn min_eigenvalue(&self) -> T {
        self.eigenvalues()[0]
    }

    /// Largest absolute eigenvalue.
    pub fn operator_norm(&self) -> T {
        let ev = self.eigenvalues();
        let lo = ev[0].abs();
        let hi = ev[ev.len() - 1].abs();
        if lo > hi {
            lo
        } else {
            hi
        }
    }

    pub fn is_psd(&self, tol: T) -> bool {
        self.min_eigenvalue() >= -tol
    }

    /// Transpose in the computational basis (equal to the entrywise conjugate).
    pub fn transpose(&self) -> Self {
        Self { mat: self.mat.transpose() }
    }

    pub fn scale(&self, s: T) -> Self {
        Self { mat: &self.mat * cr(s) }
    }

    pub fn kron(&self, other: &Self) -> Self {
        Self { mat: self.mat.kronecker(&other.mat) }
    }

    /// `Re Tr[self * other]`, real for Hermitian arguments.
    pub fn inner(&self, other: &Self) -> T {
        let d = self.dim();
        let mut acc = T::zero();
        for i in 0..d {
            for j in 0..d {
                acc += (self.mat[(i, j)] * other.mat[(j, i)]).re;
            }
        }
        acc
    }

    pub fn max_abs_entry_diff(&self, other: &Self) -> T {
        self.mat
            .iter()
            .zip(other.mat.iter())
            .fold(T::zero(), |m, (a, b)| {
                let n = (*a - *b).modulus();
                if n > m {
                    n
                } else {
                    m
                }
            })
    }

    pub fn cast<U: Real>(&self) -> HermitianOp<U> {
        HermitianOp {
            mat: self.mat.map(|z| c(U::lit(z.re.as_f64()), U::lit(z.im.as_f64()))),
        }
    }
}

impl<T: Real> Add for HermitianOp<T> {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        Self { mat: self.mat + rhs.mat }
    }
}

impl<T: Real> Add for &HermitianOp<T> {
    type Output = HermitianOp<T>;
    fn add(self, rhs: Self) -> HermitianOp<T> {
        HermitianOp { mat: &self.mat + &rhs.mat }
    }
}

impl<T: Real> Sub for HermitianOp<T> {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        Self { mat: self.mat - rhs.mat }
    }
}

impl<T: Real> Sub for &HermitianOp<T> {
    type Output = HermitianOp<T>;
    fn sub(self, rhs: Self) -> HermitianOp<T> {
        HermitianOp { mat: &self.mat - &rhs.mat }
    }
}

impl<T: Real> Neg for HermitianOp<T> {
    type Output = Self;
    fn neg(self) -> Self {
        Self { mat: -self.mat }
    }
}

impl<T: Real> Mul<T> for HermitianOp<T> {
    type Output = Self;
    fn mul(self, s: T) -> Self {
        Self { mat: self.mat * cr(s) }
    }
}

impl<T: Real> Mul<T> for &HermitianOp<T> {
    type Output = HermitianOp<T>;
    fn mul(self, s: T) -> HermitianOp<T> {
        self.scale(s)
    }
}

/// Sum of operators of a common dimension `d`.
pub fn sum<'a, T: Real>(d: usize, ops: impl IntoIterator<Item = &'a HermitianOp<T>>) -> HermitianOp<T> {
    ops.into_iter().fold(HermitianOp::zeros(d), |acc, op| acc + op.clone())
}

pub fn pauli_x<T: Real>() -> HermitianOp<T> {
    let (o, z) = (T::one(), T::zero());
    HermitianOp { mat: DMatrix::from_row_slice(2, 2, &[cr(z), cr(o), cr(o), cr(z)]) }
}

pub fn pauli_y<T: Real>() -> HermitianOp<T> {
    let (o, z) = (T::one(), T::zero());
    HermitianOp { mat: DMatrix::from_row_slice(2, 2, &[cr(z), c(z, -o), c(z, o), cr(z)]) }
}

pub fn pauli_z<T: Real>() -> HermitianOp<T> {
    HermitianOp::from_real_diagonal(&[T::one(), -T::one()])
}

// Row-major nested arrays of [re, im] pairs.
impl<T: Real + Serialize> Serialize for HermitianOp<T> {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let d = self.dim();
        let rows: Vec<Vec<[T; 2]>> = (0..d)
            .map(|i| (0..d).map(|j| [self.mat[(i, j)].re, self.mat[(i, j)].im]).collect())
            .collect();
        rows.serialize(serializer)
    }
}

impl<'de, T: Real + Deserialize<'de>> Deserialize<'de> for HermitianOp<T> {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let rows: Vec<Vec<[T; 2]>> = Vec::deserialize(deserializer)?;
        let d = rows.len();
        if rows.iter().any(|r| r.len() != d) {
            return Err(D::Error::custom("operator rows must form a square matrix"));
        }
        let mat = DMatrix::from_fn(d, d, |i, j| c(rows[i][j][0], rows[i][j][1]));
        HermitianOp::new(mat).map_err(D::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_hermitian() {
        let m = DMatrix::from_row_slice(2, 2, &[cr(1.0), cr(2.0), cr(0.0), cr(1.0)]);
        assert!(HermitianOp::<f64>::new(m).is_err());
        let m = DMatrix::from_row_slice(1, 2, &[cr(1.0), cr(2.0)]);
        assert!(HermitianOp::<f64>::new(m).is_err());
    }

    #[test]
    fn pauli_spectra_and_norms() {
        for p in [pauli_x::<f64>(), pauli_y(), pauli_z()] {
            let ev = p.eigenvalues();
            assert!((ev[0] + 1.0).abs() < 1e-12 && (ev[1] - 1.0).abs() < 1e-12);
            assert!((p.operator_norm() - 1.0).abs() < 1e-12);
            assert!(p.trace().abs() < 1e-15);
        }
        assert!((pauli_x::<f64>().inner(&pauli_x()) - 2.0).abs() < 1e-15);
        assert!(pauli_x::<f64>().inner(&pauli_y()).abs() < 1e-15);
    }

    #[test]
    fn transpose_flips_sigma_y() {
        let y = pauli_y::<f64>();
        assert_eq!(y.transpose(), -y);
        assert_eq!(pauli_z::<f64>().transpose(), pauli_z());
    }

    #[test]
    fn json_is_row_major_re_im_pairs() {
        let y = pauli_y::<f64>();
        let s = serde_json::to_string(&y).unwrap();
        assert_eq!(s, "[[[0.0,0.0],[0.0,-1.0]],[[0.0,1.0],[0.0,0.0]]]");
        let back: HermitianOp<f64> = serde_json::from_str(&s).unwrap();
        assert_eq!(back, y);
        assert!(serde_json::from_str::<HermitianOp<f64>>("[[[0,0],[1,0]],[[0,0],[0,0]]]").is_err());
    }

    #[test]
    fn works_in_single_precision() {
        let z = pauli_z::<f32>();
        assert!((z.operator_norm() - 1.0).abs() < 1e-6);
        let back: HermitianOp<f64> = z.cast();
        assert_eq!(back, pauli_z::<f64>());
    }
}
