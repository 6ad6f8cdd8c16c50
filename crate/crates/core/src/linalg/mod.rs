//! Dense symmetric and block-tridiagonal linear algebra.
//!
//! Everything here works with precision (inverse covariance) matrices. The
//! Gaussian samplers draw from `N(Q⁻¹m, Q⁻¹)` given the canonical pair `(m, Q)`.

mod block;
mod mccausland;
mod rue;

pub use block::{h_inverse_stack, BlockTridiagonalPrecision, HOperator};
pub use mccausland::{mccausland_forward, sample_mccausland, solve_mccausland, ForwardPass};
pub use rue::{sample_rue, solve_rue, BandCholesky};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Relative tolerance used by [`SymMatrix::new`] when checking symmetry.
const SYMMETRY_TOL: f64 = 1e-9;

/// Dense symmetric matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    inner: DMatrix<f64>,
}

impl SymMatrix {
    /// Wraps a square matrix, rejecting it if it is not symmetric to a
    /// relative tolerance of `1e-9`. The stored matrix is exactly symmetrized.
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::DimensionMismatch(format!(
                "symmetric matrix must be square, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        let scale = m.amax().max(1.0);
        let n = m.nrows();
        for j in 0..n {
            for i in (j + 1)..n {
                if (m[(i, j)] - m[(j, i)]).abs() > SYMMETRY_TOL * scale {
                    return Err(Error::DimensionMismatch(format!(
                        "matrix is not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        Ok(Self::symmetrized(m))
    }

    /// Averages `m` with its transpose. Use when `m` is symmetric up to rounding.
    pub fn symmetrized(m: DMatrix<f64>) -> Self {
        let inner = (&m + m.transpose()) * 0.5;
        Self { inner }
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            inner: DMatrix::identity(dim, dim),
        }
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        Self {
            inner: DMatrix::from_diagonal(&DVector::from_column_slice(diag)),
        }
    }

    pub fn scaled_identity(dim: usize, scale: f64) -> Self {
        Self {
            inner: DMatrix::identity(dim, dim) * scale,
        }
    }

    pub fn dim(&self) -> usize {
        self.inner.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.inner
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.inner
    }

    /// Largest diagonal entry.
    pub fn max_diagonal(&self) -> f64 {
        self.inner.diagonal().max()
    }
}

/// Options for [`cholesky_with`].
#[derive(Debug, Clone, Copy)]
pub struct CholeskyOptions {
    /// A pivot at or below `pivot_rel_tol * max(diag(A))` is rejected.
    pub pivot_rel_tol: f64,
    /// When set, `jitter * I` is added before factoring.
    pub jitter: Option<f64>,
}

impl Default for CholeskyOptions {
    fn default() -> Self {
        Self {
            pivot_rel_tol: 1e-12,
            jitter: None,
        }
    }
}

/// Lower-triangular Cholesky factor `L` with `A = L Lᵀ`.
#[derive(Debug, Clone)]
pub struct CholeskyFactor {
    l: DMatrix<f64>,
}

pub fn cholesky(a: &SymMatrix) -> Result<CholeskyFactor> {
    cholesky_with(a, CholeskyOptions::default())
}

pub fn cholesky_with(a: &SymMatrix, opts: CholeskyOptions) -> Result<CholeskyFactor> {
    let n = a.dim();
    let mut l = a.as_matrix().clone();
    if let Some(eps) = opts.jitter {
        for i in 0..n {
            l[(i, i)] += eps;
        }
    }
    let max_diag = (0..n).map(|i| l[(i, i)]).fold(f64::NEG_INFINITY, f64::max);
    let tol = opts.pivot_rel_tol * max_diag.max(0.0);
    let data = l.as_mut_slice();
    // left-looking by columns; only the lower triangle of `a` is read
    for j in 0..n {
        let (done, rest) = data.split_at_mut(j * n);
        let col = &mut rest[..n];
        for k in 0..j {
            let ck = &done[k * n..(k + 1) * n];
            let ljk = ck[j];
            for (c, v) in col[j..].iter_mut().zip(&ck[j..]) {
                *c -= ljk * v;
            }
        }
        let d = col[j];
        if !(d > tol) || max_diag <= 0.0 {
            return Err(Error::NotPositiveDefinite { pivot: j, value: d });
        }
        let d = d.sqrt();
        col[j] = d;
        for c in &mut col[j + 1..] {
            *c /= d;
        }
        for c in &mut col[..j] {
            *c = 0.0;
        }
    }
    Ok(CholeskyFactor { l })
}

impl CholeskyFactor {
    pub fn l(&self) -> &DMatrix<f64> {
        &self.l
    }

    pub fn dim(&self) -> usize {
        self.l.nrows()
    }

    /// Reconstructs `L Lᵀ`.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        &self.l * self.l.transpose()
    }

    /// Solves `L x = b` in place.
    pub fn solve_lower_mut(&self, b: &mut [f64]) {
        let n = self.dim();
        let l = self.l.as_slice();
        // column sweep: every inner loop reads one contiguous column of L
        for k in 0..n {
            let col = &l[k * n..(k + 1) * n];
            let v = b[k] / col[k];
            b[k] = v;
            for (bi, lik) in b[k + 1..n].iter_mut().zip(&col[k + 1..]) {
                *bi -= lik * v;
            }
        }
    }

    /// Solves `Lᵀ x = b` in place.
    pub fn solve_upper_mut(&self, b: &mut [f64]) {
        let n = self.dim();
        let l = self.l.as_slice();
        for i in (0..n).rev() {
            let col = &l[i * n..(i + 1) * n];
            let dot: f64 = col[i + 1..].iter().zip(&b[i + 1..n]).map(|(a, x)| a * x).sum();
            b[i] = (b[i] - dot) / col[i];
        }
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        let mut x = b.clone();
        self.solve_lower_mut(x.as_mut_slice());
        self.solve_upper_mut(x.as_mut_slice());
        x
    }

    /// Solves `A X = B` column by column.
    pub fn solve_matrix(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        let mut x = b.clone();
        for mut col in x.column_iter_mut() {
            let s = col.as_mut_slice();
            self.solve_lower_mut(s);
            self.solve_upper_mut(s);
        }
        x
    }

    /// Computes `L⁻¹ B`.
    pub fn solve_lower_matrix(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        let mut x = b.clone();
        for mut col in x.column_iter_mut() {
            self.solve_lower_mut(col.as_mut_slice());
        }
        x
    }

    pub fn inverse(&self) -> DMatrix<f64> {
        let mut inv = self.solve_matrix(&DMatrix::identity(self.dim(), self.dim()));
        // exact symmetry keeps downstream block assembly symmetric
        let t = inv.transpose();
        inv += t;
        inv *= 0.5;
        inv
    }

    /// `log det A`.
    pub fn log_det(&self) -> f64 {
        2.0 * self.l.diagonal().iter().map(|d| d.ln()).sum::<f64>()
    }

    /// `vᵀ A⁻¹ v`.
    pub fn inv_quad(&self, v: &[f64]) -> f64 {
        let mut w = v.to_vec();
        self.solve_lower_mut(&mut w);
        w.iter().map(|x| x * x).sum()
    }

    /// Returns `Lᵀ⁻¹ z`: a draw from `N(0, A⁻¹)` when `z` is standard normal.
    pub fn precision_noise(&self, z: &mut [f64]) {
        self.solve_upper_mut(z);
    }

    /// Returns `L z`: a draw from `N(0, A)` when `z` is standard normal.
    pub fn covariance_noise(&self, z: &[f64]) -> DVector<f64> {
        &self.l * DVector::from_column_slice(z)
    }
}

/// Fills a vector with independent standard normal draws.
pub fn standard_normal_vec<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Vec<f64> {
    (0..dim).map(|_| rng.sample(StandardNormal)).collect()
}

/// Draws from `N(Q⁻¹m, Q⁻¹)` by dense Cholesky of `Q`.
pub fn sample_mvn_from_precision_dense<R: Rng + ?Sized>(
    m: &DVector<f64>,
    q: &SymMatrix,
    rng: &mut R,
) -> Result<DVector<f64>> {
    if m.len() != q.dim() {
        return Err(Error::DimensionMismatch(format!(
            "mean vector has length {} but precision is {}x{}",
            m.len(),
            q.dim(),
            q.dim()
        )));
    }
    let chol = cholesky(q)?;
    Ok(sample_with_factor(&chol, m, rng))
}

/// Draws from `N(A⁻¹m, A⁻¹)` given a factor of the precision `A`.
pub fn sample_with_factor<R: Rng + ?Sized>(
    chol: &CholeskyFactor,
    m: &DVector<f64>,
    rng: &mut R,
) -> DVector<f64> {
    let mut mean = m.clone();
    chol.solve_lower_mut(mean.as_mut_slice());
    let mut z = standard_normal_vec(chol.dim(), rng);
    for (zi, wi) in z.iter_mut().zip(mean.iter()) {
        *zi += wi;
    }
    chol.solve_upper_mut(&mut z);
    DVector::from_vec(z)
}

/// Log-density of `N(mean, cov)` evaluated through a factor of `cov`.
pub fn mvn_log_density_cov(x: &[f64], mean: &[f64], cov_chol: &CholeskyFactor) -> f64 {
    let d = x.len();
    let diff: Vec<f64> = x.iter().zip(mean).map(|(a, b)| a - b).collect();
    -0.5 * (d as f64 * (2.0 * std::f64::consts::PI).ln()
        + cov_chol.log_det()
        + cov_chol.inv_quad(&diff))
}
