//! Band Cholesky sampling for block-tridiagonal precisions.
//!
//! The stacked `MT`-dimensional precision has lower bandwidth `2M - 1`. The
//! factor is stored by rows: row `i` keeps columns `i - p ..= i`.

use nalgebra::DVector;
use rand::Rng;

use super::{standard_normal_vec, BlockTridiagonalPrecision};
use crate::error::{Error, Result};

const PIVOT_REL_TOL: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct BandCholesky {
    n: usize,
    bandwidth: usize,
    data: Vec<f64>,
}

impl BandCholesky {
    pub fn factor(q: &BlockTridiagonalPrecision) -> Result<Self> {
        let m = q.block_dim();
        let n = q.dim();
        let p = if q.num_blocks() > 1 { 2 * m - 1 } else { m - 1 };
        let width = p + 1;
        let mut data = vec![0.0; n * width];
        let idx = |i: usize, j: usize| i * width + (j + p - i);
        for i in 0..n {
            for j in i.saturating_sub(p)..=i {
                data[idx(i, j)] = q.get(i, j);
            }
        }
        let max_diag = (0..n).map(|i| data[idx(i, i)]).fold(f64::NEG_INFINITY, f64::max);
        let tol = PIVOT_REL_TOL * max_diag.max(0.0);
        for i in 0..n {
            let lo_i = i.saturating_sub(p);
            for j in lo_i..=i {
                let lo = lo_i.max(j.saturating_sub(p));
                let mut s = data[idx(i, j)];
                for k in lo..j {
                    s -= data[idx(i, k)] * data[idx(j, k)];
                }
                if i == j {
                    if !(s > tol) || max_diag <= 0.0 {
                        return Err(Error::NotPositiveDefinite { pivot: i, value: s });
                    }
                    data[idx(i, i)] = s.sqrt();
                } else {
                    data[idx(i, j)] = s / data[idx(j, j)];
                }
            }
        }
        Ok(Self {
            n,
            bandwidth: p,
            data,
        })
    }

    #[inline]
    fn at(&self, i: usize, j: usize) -> f64 {
        self.data[i * (self.bandwidth + 1) + (j + self.bandwidth - i)]
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.bandwidth
    }

    /// Solves `L x = b` in place.
    pub fn solve_lower_mut(&self, b: &mut [f64]) {
        for i in 0..self.n {
            let mut s = b[i];
            for k in i.saturating_sub(self.bandwidth)..i {
                s -= self.at(i, k) * b[k];
            }
            b[i] = s / self.at(i, i);
        }
    }

    /// Solves `Lᵀ x = b` in place.
    pub fn solve_upper_mut(&self, b: &mut [f64]) {
        for i in (0..self.n).rev() {
            let mut s = b[i];
            let hi = (i + self.bandwidth + 1).min(self.n);
            for k in (i + 1)..hi {
                s -= self.at(k, i) * b[k];
            }
            b[i] = s / self.at(i, i);
        }
    }

    pub fn solve(&self, m: &[f64]) -> Vec<f64> {
        let mut x = m.to_vec();
        self.solve_lower_mut(&mut x);
        self.solve_upper_mut(&mut x);
        x
    }

    /// `μ + L⁻ᵀ z` with `μ = Q⁻¹ m`.
    pub fn sample<R: Rng + ?Sized>(&self, m: &[f64], rng: &mut R) -> Vec<f64> {
        let mut w = m.to_vec();
        self.solve_lower_mut(&mut w);
        let mut z = standard_normal_vec(self.n, rng);
        for (zi, wi) in z.iter_mut().zip(&w) {
            *zi += wi;
        }
        self.solve_upper_mut(&mut z);
        z
    }
}

fn check_len(m: &[f64], q: &BlockTridiagonalPrecision) -> Result<()> {
    if m.len() != q.dim() {
        return Err(Error::DimensionMismatch(format!(
            "stacked vector has length {} but precision has dimension {}",
            m.len(),
            q.dim()
        )));
    }
    Ok(())
}

/// Exact draw from `N(Q⁻¹m, Q⁻¹)` through a band Cholesky factor of `Q`.
pub fn sample_rue<R: Rng + ?Sized>(
    m: &DVector<f64>,
    q: &BlockTridiagonalPrecision,
    rng: &mut R,
) -> Result<DVector<f64>> {
    check_len(m.as_slice(), q)?;
    let chol = BandCholesky::factor(q)?;
    Ok(DVector::from_vec(chol.sample(m.as_slice(), rng)))
}

/// `Q⁻¹ m` by the same factorization, with the noise term suppressed.
pub fn solve_rue(m: &DVector<f64>, q: &BlockTridiagonalPrecision) -> Result<DVector<f64>> {
    check_len(m.as_slice(), q)?;
    let chol = BandCholesky::factor(q)?;
    Ok(DVector::from_vec(chol.solve(m.as_slice())))
}
