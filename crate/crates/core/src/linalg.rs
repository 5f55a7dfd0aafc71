//! Dense complex matrix helpers shared by the spin, mode and control solvers.
//!
//! Tensor convention: spin 1 is the leftmost Kronecker factor, and basis
//! index bit `L - i` (counting from the most significant bit) carries spin `i`.
//! A set bit means spin down (σᶻ = −1).

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{FreezeError, Result};

pub type CMat = DMatrix<Complex64>;
pub type CVec = DVector<Complex64>;

pub const ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub const ONE: Complex64 = Complex64::new(1.0, 0.0);
pub const I: Complex64 = Complex64::new(0.0, 1.0);

#[inline]
pub fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

pub fn pauli_x() -> CMat {
    CMat::from_row_slice(2, 2, &[ZERO, ONE, ONE, ZERO])
}

pub fn pauli_y() -> CMat {
    CMat::from_row_slice(2, 2, &[ZERO, -I, I, ZERO])
}

pub fn pauli_z() -> CMat {
    CMat::from_row_slice(2, 2, &[ONE, ZERO, ZERO, -ONE])
}

pub fn identity(dim: usize) -> CMat {
    CMat::identity(dim, dim)
}

/// `op` acting on `site` (0-based) of an `n`-spin register.
pub fn site_operator(op: &CMat, site: usize, n: usize) -> CMat {
    assert!(site < n, "site {site} out of range for {n} spins");
    let mut out = CMat::from_element(1, 1, ONE);
    for s in 0..n {
        out = if s == site {
            out.kronecker(op)
        } else {
            out.kronecker(&identity(2))
        };
    }
    out
}

/// Sum of `op` over every site.
pub fn collective(op: &CMat, n: usize) -> CMat {
    let dim = 1 << n;
    (0..n).fold(CMat::zeros(dim, dim), |acc, s| {
        acc + site_operator(op, s, n)
    })
}

/// Eigendecomposition of a Hermitian matrix `H = V diag(λ) V†`.
#[derive(Debug, Clone)]
pub struct HermitianEigen {
    pub values: DVector<f64>,
    pub vectors: CMat,
}

impl HermitianEigen {
    pub fn new(h: &CMat) -> Result<Self> {
        if h.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(FreezeError::Eigen("matrix has non-finite entries".into()));
        }
        let eig = h
            .clone()
            .try_symmetric_eigen(f64::EPSILON, 10_000)
            .ok_or_else(|| FreezeError::Eigen("QR iteration did not converge".into()))?;
        Ok(Self {
            values: eig.eigenvalues,
            vectors: eig.eigenvectors,
        })
    }

    /// `exp(−i·dt·H)`.
    pub fn propagator(&self, dt: f64) -> CMat {
        let mut scaled = self.vectors.clone();
        for (j, &l) in self.values.iter().enumerate() {
            let p = Complex64::from_polar(1.0, -l * dt);
            for z in scaled.column_mut(j).iter_mut() {
                *z *= p;
            }
        }
        scaled * self.vectors.adjoint()
    }

    /// Divided differences `Γ_mk` of `λ ↦ exp(−i·dt·λ)` over the spectrum.
    ///
    /// The directional derivative of `exp(−i·dt·H)` along `X` is
    /// `V ((V† X V) ∘ Γ) V†`. Written as
    /// `Γ_mk = −i·dt·exp(−i·dt·(λ_m + λ_k)/2)·sinc(dt·(λ_m − λ_k)/2)`
    /// so (near-)degenerate pairs need no special casing.
    pub fn exp_divided_differences(&self, dt: f64) -> CMat {
        let n = self.values.len();
        CMat::from_fn(n, n, |m, k| {
            let (a, b) = (self.values[m], self.values[k]);
            let x = 0.5 * dt * (a - b);
            let sinc = if x.abs() < 1e-4 {
                1.0 - x * x / 6.0
            } else {
                x.sin() / x
            };
            -I * dt * Complex64::from_polar(sinc, -0.5 * dt * (a + b))
        })
    }
}

/// `exp(−i·dt·H)` for Hermitian `H`.
pub fn expm_hermitian(h: &CMat, dt: f64) -> Result<CMat> {
    Ok(HermitianEigen::new(h)?.propagator(dt))
}

pub fn max_abs(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// `‖H − H†‖_max`.
pub fn hermiticity_error(h: &CMat) -> f64 {
    max_abs(&(h - h.adjoint()))
}

/// `‖U†U − 𝕀‖_max`.
pub fn unitarity_error(u: &CMat) -> f64 {
    let n = u.nrows();
    max_abs(&(u.adjoint() * u - identity(n)))
}

pub fn commutator(a: &CMat, b: &CMat) -> CMat {
    a * b - b * a
}

pub fn trace(m: &CMat) -> Complex64 {
    m.diagonal().iter().sum()
}

/// `Tr(A·B)` without forming the product.
pub fn trace_product(a: &CMat, b: &CMat) -> Complex64 {
    let n = a.nrows();
    let mut acc = ZERO;
    for i in 0..n {
        for k in 0..n {
            acc += a[(i, k)] * b[(k, i)];
        }
    }
    acc
}
