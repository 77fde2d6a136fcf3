//! Dense complex operators on small Hilbert spaces.
//!
//! Everything that touches a matrix lives here: Hamiltonian construction
//! helpers, Hermitian eigendecomposition, the unitary exponential
//! `exp(-i Omega)` and its exact directional (Frechet) derivative.
//!
//! Exponentials are always taken through the eigendecomposition of a
//! Hermitian generator, so one factorization serves both the propagator and
//! its derivative kernel.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex;

use crate::error::{Error, Result};
use crate::scalar::{modulus, real, times_neg_i, Cplx, Real};

/// Square complex matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Operator<T: Real> {
    m: DMatrix<Cplx<T>>,
}

impl<T: Real> Operator<T> {
    pub fn new(m: DMatrix<Cplx<T>>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::DimensionMismatch {
                expected: m.nrows(),
                found: m.ncols(),
            });
        }
        if m.nrows() == 0 {
            return Err(Error::InvalidParameter("operator dimension must be positive".into()));
        }
        Ok(Self { m })
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            m: DMatrix::zeros(dim, dim),
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            m: DMatrix::identity(dim, dim),
        }
    }

    pub fn from_real_diagonal(diag: &[T]) -> Self {
        let v = DVector::from_iterator(diag.len(), diag.iter().map(|&x| real(x)));
        Self {
            m: DMatrix::from_diagonal(&v),
        }
    }

    /// Row-major construction.
    pub fn from_rows(dim: usize, entries: &[Cplx<T>]) -> Result<Self> {
        if entries.len() != dim * dim {
            return Err(Error::DimensionMismatch {
                expected: dim * dim,
                found: entries.len(),
            });
        }
        Self::new(DMatrix::from_row_slice(dim, dim, entries))
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    #[inline]
    pub fn matrix(&self) -> &DMatrix<Cplx<T>> {
        &self.m
    }

    pub fn into_matrix(self) -> DMatrix<Cplx<T>> {
        self.m
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> Cplx<T> {
        self.m[(row, col)]
    }

    pub fn adjoint(&self) -> Self {
        Self { m: self.m.adjoint() }
    }

    pub fn scale(&self, s: Cplx<T>) -> Self {
        Self { m: &self.m * s }
    }

    pub fn scale_real(&self, s: T) -> Self {
        Self {
            m: self.m.map(|z| z * s),
        }
    }

    /// `-i * self`
    pub fn times_neg_i(&self) -> Self {
        Self {
            m: self.m.map(times_neg_i),
        }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        check_dims(self, other)?;
        Ok(Self { m: &self.m + &other.m })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        check_dims(self, other)?;
        Ok(Self { m: &self.m - &other.m })
    }

    pub fn mul(&self, other: &Self) -> Result<Self> {
        check_dims(self, other)?;
        Ok(Self { m: &self.m * &other.m })
    }

    /// `self += s * other`, in place.
    pub fn axpy(&mut self, s: Cplx<T>, other: &Self) {
        debug_assert_eq!(self.dim(), other.dim());
        for (a, b) in self.m.iter_mut().zip(other.m.iter()) {
            *a += *b * s;
        }
    }

    /// `self += s * other` with a real coefficient, in place.
    pub fn axpy_real(&mut self, s: T, other: &Self) {
        debug_assert_eq!(self.dim(), other.dim());
        for (a, b) in self.m.iter_mut().zip(other.m.iter()) {
            a.re += b.re * s;
            a.im += b.im * s;
        }
    }

    pub fn apply(&self, psi: &StateVector<T>) -> Result<StateVector<T>> {
        if psi.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: psi.dim(),
            });
        }
        Ok(StateVector {
            v: &self.m * &psi.v,
        })
    }

    /// Largest entry modulus.
    pub fn max_abs(&self) -> T {
        self.m.iter().fold(T::zero(), |acc, z| acc.max(modulus(*z)))
    }

    /// `max |A - A^dagger|`
    pub fn hermiticity_defect(&self) -> T {
        let n = self.dim();
        let mut worst = T::zero();
        for i in 0..n {
            for j in i..n {
                let d = modulus(self.m[(i, j)] - self.m[(j, i)].conj());
                worst = worst.max(d);
            }
        }
        worst
    }

    pub fn is_hermitian(&self) -> bool {
        let scale = self.max_abs();
        self.hermiticity_defect() <= T::structure_tol() * scale
    }

    /// `max |U^dagger U - I|`
    pub fn unitarity_defect(&self) -> T {
        let prod = self.m.adjoint() * &self.m;
        let n = self.dim();
        let mut worst = T::zero();
        for i in 0..n {
            for j in 0..n {
                let target = if i == j { T::one() } else { T::zero() };
                worst = worst.max(modulus(prod[(i, j)] - real(target)));
            }
        }
        worst
    }

    /// Frobenius inner product `sum_ij conj(self_ij) other_ij`.
    pub fn frobenius_dot(&self, other: &Self) -> Cplx<T> {
        self.m
            .iter()
            .zip(other.m.iter())
            .fold(Complex::new(T::zero(), T::zero()), |acc, (a, b)| acc + a.conj() * b)
    }
}

fn check_dims<T: Real>(a: &Operator<T>, b: &Operator<T>) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            found: b.dim(),
        });
    }
    Ok(())
}

/// Pure state `|psi>`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector<T: Real> {
    v: DVector<Cplx<T>>,
}

impl<T: Real> StateVector<T> {
    pub fn new(v: DVector<Cplx<T>>) -> Result<Self> {
        if v.is_empty() {
            return Err(Error::InvalidParameter("state dimension must be positive".into()));
        }
        Ok(Self { v })
    }

    pub fn from_amplitudes(amps: &[Cplx<T>]) -> Result<Self> {
        Self::new(DVector::from_column_slice(amps))
    }

    /// Computational basis state `|index>`.
    pub fn basis(dim: usize, index: usize) -> Result<Self> {
        if index >= dim {
            return Err(Error::IndexOutOfRange {
                what: "basis state",
                index,
                len: dim,
            });
        }
        let mut v = DVector::zeros(dim);
        v[index] = real(T::one());
        Ok(Self { v })
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.v.len()
    }

    #[inline]
    pub fn amplitudes(&self) -> &DVector<Cplx<T>> {
        &self.v
    }

    pub fn norm(&self) -> T {
        self.v.norm()
    }

    /// `<self|other>`
    pub fn inner(&self, other: &Self) -> Cplx<T> {
        self.v.dotc(&other.v)
    }

    pub fn scale(&self, s: Cplx<T>) -> Self {
        Self { v: &self.v * s }
    }

    /// Euclidean distance `|self - other|_2`.
    pub fn distance(&self, other: &Self) -> T {
        (&self.v - &other.v).norm()
    }
}

/// `A = V diag(lambda) V^dagger` for a Hermitian `A`.
#[derive(Debug, Clone)]
pub struct EigenDecomposition<T: Real> {
    eigenvalues: Vec<T>,
    eigenvectors: DMatrix<Cplx<T>>,
}

impl<T: Real> EigenDecomposition<T> {
    /// Ascending.
    pub fn eigenvalues(&self) -> &[T] {
        &self.eigenvalues
    }

    pub fn eigenvectors(&self) -> &DMatrix<Cplx<T>> {
        &self.eigenvectors
    }

    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn reconstruct(&self) -> Operator<T> {
        let v = &self.eigenvectors;
        let mut scaled = v.clone();
        for (mut col, &l) in scaled.column_iter_mut().zip(&self.eigenvalues) {
            col *= real(l);
        }
        Operator {
            m: scaled * v.adjoint(),
        }
    }

    /// Phases `exp(-i lambda_a)`.
    pub fn phases(&self) -> Vec<Cplx<T>> {
        self.eigenvalues
            .iter()
            .map(|&l| Complex::new(l.cos(), -l.sin()))
            .collect()
    }

    /// `exp(-i A)` as a dense matrix.
    pub fn exp_neg_i(&self) -> Operator<T> {
        let v = &self.eigenvectors;
        let mut scaled = v.clone();
        for (mut col, p) in scaled.column_iter_mut().zip(self.phases()) {
            col *= p;
        }
        Operator {
            m: scaled * v.adjoint(),
        }
    }

    /// `exp(-i A) psi` (or `exp(+i A) psi` when `adjoint`), without forming the matrix.
    pub fn apply_exp(&self, psi: &StateVector<T>, adjoint: bool) -> StateVector<T> {
        let v = &self.eigenvectors;
        let mut coeffs = v.ad_mul(&psi.v);
        for (c, &l) in coeffs.iter_mut().zip(&self.eigenvalues) {
            let s = if adjoint { l.sin() } else { -l.sin() };
            *c *= Complex::new(l.cos(), s);
        }
        StateVector { v: v * coeffs }
    }

    /// Divided-difference kernel of `X -> exp(-i X)` in this eigenbasis.
    ///
    /// `Gamma_ab = (e^{-i l_a} - e^{-i l_b}) / (l_a - l_b)`, written as
    /// `-i e^{-i m} sinc(d/2)` with `m` the mean and `d` the gap so that it stays
    /// accurate for nearly degenerate pairs. Gaps below `1e-12 max|l|` take the
    /// diagonal limit `-i e^{-i l_a}`.
    pub fn frechet_kernel(&self) -> DMatrix<Cplx<T>> {
        let n = self.dim();
        let lmax = self
            .eigenvalues
            .iter()
            .fold(T::zero(), |acc, l| acc.max(l.abs()));
        let degenerate = T::lit(1e-12) * lmax;
        let half = T::lit(0.5);
        DMatrix::from_fn(n, n, |a, b| {
            let la = self.eigenvalues[a];
            let lb = self.eigenvalues[b];
            let gap = la - lb;
            let mean = (la + lb) * half;
            let sinc = if gap.abs() <= degenerate {
                T::one()
            } else {
                let x = gap * half;
                x.sin() / x
            };
            times_neg_i(Complex::new(mean.cos(), -mean.sin())) * sinc
        })
    }
}

/// `[a, b] = ab - ba`
pub fn commutator<T: Real>(a: &Operator<T>, b: &Operator<T>) -> Result<Operator<T>> {
    check_dims(a, b)?;
    Ok(Operator {
        m: &a.m * &b.m - &b.m * &a.m,
    })
}

/// Eigendecomposition of a Hermitian operator, eigenvalues ascending.
pub fn hermitian_eig<T: Real>(a: &Operator<T>) -> Result<EigenDecomposition<T>> {
    let scale = a.max_abs();
    let defect = a.hermiticity_defect();
    if defect > T::structure_tol() * scale {
        return Err(Error::NotHermitian {
            deviation: defect.as_f64(),
        });
    }
    let n = a.dim();
    let half = T::lit(0.5);
    let sym = DMatrix::from_fn(n, n, |i, j| (a.m[(i, j)] + a.m[(j, i)].conj()) * half);
    let eig = SymmetricEigen::try_new(sym, T::default_epsilon(), 0).ok_or(Error::EigenFailure)?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        eig.eigenvalues[i]
            .partial_cmp(&eig.eigenvalues[j])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let eigenvalues = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let eigenvectors = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    Ok(EigenDecomposition {
        eigenvalues,
        eigenvectors,
    })
}

/// `exp(-i omega)` for Hermitian `omega`.
pub fn expm_unitary<T: Real>(omega: &Operator<T>) -> Result<Operator<T>> {
    Ok(hermitian_eig(omega)?.exp_neg_i())
}

/// Exact derivative `d/ds exp(-i (Omega + s A)) |_{s=0}` given the
/// decomposition of `Omega`.
pub fn expm_directional_derivative<T: Real>(
    decomp: &EigenDecomposition<T>,
    direction: &Operator<T>,
) -> Result<Operator<T>> {
    if direction.dim() != decomp.dim() {
        return Err(Error::DimensionMismatch {
            expected: decomp.dim(),
            found: direction.dim(),
        });
    }
    let v = &decomp.eigenvectors;
    let rotated = v.ad_mul(&direction.m) * v;
    let kernel = decomp.frechet_kernel();
    let inner = rotated.component_mul(&kernel);
    Ok(Operator {
        m: v * inner * v.adjoint(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
}

/// Single-site Pauli operator embedded in an `n_spins` chain.
///
/// Site 0 is the leftmost tensor factor (most significant bit of the basis
/// index); `|0>` is the `+1` eigenstate of `sigma_z`.
pub fn pauli_chain_operator<T: Real>(n_spins: usize, axis: Axis, site: usize) -> Result<Operator<T>> {
    if n_spins == 0 || n_spins > 16 {
        return Err(Error::InvalidParameter(format!(
            "n_spins must be in 1..=16, got {n_spins}"
        )));
    }
    if site >= n_spins {
        return Err(Error::IndexOutOfRange {
            what: "site",
            index: site,
            len: n_spins,
        });
    }
    let dim = 1usize << n_spins;
    let mask = 1usize << (n_spins - 1 - site);
    let one = T::one();
    let zero = T::zero();
    let mut m = DMatrix::zeros(dim, dim);
    for col in 0..dim {
        let up = col & mask == 0;
        match axis {
            Axis::Z => m[(col, col)] = real(if up { one } else { -one }),
            Axis::X => m[(col ^ mask, col)] = real(one),
            // sigma_y |0> = i|1>, sigma_y |1> = -i|0>
            Axis::Y => {
                m[(col ^ mask, col)] = Complex::new(zero, if up { one } else { -one });
            }
        }
    }
    Ok(Operator { m })
}
