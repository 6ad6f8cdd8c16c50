//! Two-pass block sampler for block-tridiagonal precisions.
//!
//! Forward pass: `Σ₁⁻¹ = Q₁₁`, `Σ_t⁻¹ = Q_tt − Q_{t−1,t}ᵀ Σ_{t−1} Q_{t−1,t}`,
//! `μ₁ = Σ₁ m₁`, `μ_t = Σ_t (m_t − Q_{t−1,t}ᵀ μ_{t−1})`.
//! Backward pass: `x_T ~ N(μ_T, Σ_T)`, then
//! `x_t ~ N(μ_t − Σ_t Q_{t,t+1} x_{t+1}, Σ_t)`.
//!
//! Each `Σ_t` is held as the Cholesky factor of `Σ_t⁻¹`; only triangular
//! solves are performed.

use nalgebra::DVector;
use rand::Rng;

use super::{cholesky, standard_normal_vec, BlockTridiagonalPrecision, CholeskyFactor, SymMatrix};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct ForwardPass {
    /// Factor of `Σ_t⁻¹` for each block.
    pub factors: Vec<CholeskyFactor>,
    /// Forward means `μ_t`.
    pub means: Vec<DVector<f64>>,
}

pub fn mccausland_forward(
    m_blocks: &[DVector<f64>],
    q: &BlockTridiagonalPrecision,
) -> Result<ForwardPass> {
    let t_len = q.num_blocks();
    let dim = q.block_dim();
    if m_blocks.len() != t_len || m_blocks.iter().any(|b| b.len() != dim) {
        return Err(Error::DimensionMismatch(format!(
            "expected {t_len} blocks of length {dim} for the linear term"
        )));
    }
    let mut factors: Vec<CholeskyFactor> = Vec::with_capacity(t_len);
    let mut means: Vec<DVector<f64>> = Vec::with_capacity(t_len);
    for t in 0..t_len {
        let (prec, rhs) = if t == 0 {
            (q.diag(0).clone(), m_blocks[0].clone())
        } else {
            let prev = &factors[t - 1];
            let off = q.offdiag(t - 1);
            // W = L⁻¹ Q_{t−1,t}, so Q_{t−1,t}ᵀ Σ_{t−1} Q_{t−1,t} = WᵀW
            let w = prev.solve_lower_matrix(off);
            let prec = q.diag(t) - w.tr_mul(&w);
            let rhs = &m_blocks[t] - off.tr_mul(&means[t - 1]);
            (prec, rhs)
        };
        let factor = cholesky(&SymMatrix::symmetrized(prec)).map_err(|e| match e {
            Error::NotPositiveDefinite { pivot, value } => Error::NotPositiveDefinite {
                pivot: t * dim + pivot,
                value,
            },
            other => other,
        })?;
        means.push(factor.solve(&rhs));
        factors.push(factor);
    }
    Ok(ForwardPass { factors, means })
}

impl ForwardPass {
    /// Backward pass only; the forward pass is reusable across draws with the same `m` and `Q`.
    pub fn sample<R: Rng + ?Sized>(&self, q: &BlockTridiagonalPrecision, rng: &mut R) -> Vec<DVector<f64>> {
        backward(self, q, Some(rng))
    }
}

fn backward<R: Rng + ?Sized>(
    fwd: &ForwardPass,
    q: &BlockTridiagonalPrecision,
    mut rng: Option<&mut R>,
) -> Vec<DVector<f64>> {
    let t_len = q.num_blocks();
    let dim = q.block_dim();
    let mut out: Vec<DVector<f64>> = vec![DVector::zeros(dim); t_len];
    for t in (0..t_len).rev() {
        let factor = &fwd.factors[t];
        let mut mean = fwd.means[t].clone();
        if t + 1 < t_len {
            let shift: DVector<f64> = q.offdiag(t) * &out[t + 1];
            mean -= factor.solve(&shift);
        }
        if let Some(r) = rng.as_deref_mut() {
            let mut z = standard_normal_vec(dim, r);
            factor.precision_noise(&mut z);
            mean += DVector::from_vec(z);
        }
        out[t] = mean;
    }
    out
}

/// Exact draw from `N(Q⁻¹m, Q⁻¹)`, returned as `T` blocks.
pub fn sample_mccausland<R: Rng + ?Sized>(
    m_blocks: &[DVector<f64>],
    q: &BlockTridiagonalPrecision,
    rng: &mut R,
) -> Result<Vec<DVector<f64>>> {
    let fwd = mccausland_forward(m_blocks, q)?;
    Ok(backward(&fwd, q, Some(rng)))
}

/// `Q⁻¹ m` by the same recursions with the noise suppressed.
pub fn solve_mccausland(
    m_blocks: &[DVector<f64>],
    q: &BlockTridiagonalPrecision,
) -> Result<Vec<DVector<f64>>> {
    let fwd = mccausland_forward(m_blocks, q)?;
    Ok(backward::<rand_chacha::ChaCha8Rng>(&fwd, q, None))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn stack(blocks: &[DVector<f64>]) -> DVector<f64> {
        DVector::from_iterator(
            blocks.iter().map(|b| b.len()).sum(),
            blocks.iter().flat_map(|b| b.iter().copied()),
        )
    }

    fn split(x: &DVector<f64>, dim: usize) -> Vec<DVector<f64>> {
        x.as_slice()
            .chunks(dim)
            .map(DVector::from_column_slice)
            .collect()
    }

    fn toy(t_len: usize) -> BlockTridiagonalPrecision {
        let c_inv = DMatrix::from_row_slice(2, 2, &[1.5, -0.4, -0.4, 1.2]);
        let mut q = BlockTridiagonalPrecision::random_walk(t_len, &c_inv, 0.8);
        for t in 0..t_len {
            *q.diag_mut(t) += DMatrix::from_diagonal_element(2, 2, 0.3 + t as f64 * 0.1);
        }
        q
    }

    #[test]
    fn solve_matches_dense() {
        let q = toy(4);
        let m = DVector::from_vec(vec![1.0, -1.0, 0.5, 2.0, 0.0, 0.3, -0.7, 1.1]);
        let dense = q.densify().try_inverse().unwrap() * &m;
        let blocks = solve_mccausland(&split(&m, 2), &q).unwrap();
        assert!((stack(&blocks) - dense).amax() < 1e-10);
    }

    #[test]
    fn last_forward_mean_is_last_block_of_solution() {
        let q = toy(3);
        let m = DVector::from_vec(vec![0.2, 1.0, -0.5, 0.0, 2.0, 1.0]);
        let dense = q.densify().try_inverse().unwrap() * &m;
        let fwd = mccausland_forward(&split(&m, 2), &q).unwrap();
        let last = &fwd.means[2];
        assert!((last[0] - dense[4]).abs() < 1e-10);
        assert!((last[1] - dense[5]).abs() < 1e-10);
    }

    #[test]
    fn single_block_is_dense_draw() {
        let q = BlockTridiagonalPrecision::new(
            vec![DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0])],
            vec![],
        )
        .unwrap();
        let m = vec![DVector::from_vec(vec![1.0, 1.0])];
        let a = sample_mccausland(&m, &q, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        let dense = super::super::sample_mvn_from_precision_dense(
            &m[0],
            &SymMatrix::new(q.diag(0).clone()).unwrap(),
            &mut ChaCha8Rng::seed_from_u64(4),
        )
        .unwrap();
        // same factor, same noise: identical draws
        assert!((&a[0] - dense).amax() < 1e-12);
    }

    #[test]
    fn non_pd_block_reports_global_pivot() {
        let i = DMatrix::identity(2, 2);
        let q = BlockTridiagonalPrecision::new(
            vec![i.clone(), i.clone()],
            vec![DMatrix::identity(2, 2) * 1.5],
        )
        .unwrap();
        let m = vec![DVector::zeros(2), DVector::zeros(2)];
        match solve_mccausland(&m, &q) {
            Err(Error::NotPositiveDefinite { pivot, .. }) => assert!(pivot >= 2),
            other => panic!("unexpected {other:?}"),
        }
    }
}
