use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Symmetric `MT x MT` matrix stored as `T` diagonal blocks and `T-1`
/// super-diagonal blocks `(t, t+1)`. The dense form is never built except
/// through [`BlockTridiagonalPrecision::densify`].
#[derive(Debug, Clone, PartialEq)]
pub struct BlockTridiagonalPrecision {
    block_dim: usize,
    diag: Vec<DMatrix<f64>>,
    offdiag: Vec<DMatrix<f64>>,
}

impl BlockTridiagonalPrecision {
    pub fn new(diag: Vec<DMatrix<f64>>, offdiag: Vec<DMatrix<f64>>) -> Result<Self> {
        let t = diag.len();
        if t == 0 {
            return Err(Error::DimensionMismatch("need at least one diagonal block".into()));
        }
        if offdiag.len() + 1 != t {
            return Err(Error::DimensionMismatch(format!(
                "{} diagonal blocks require {} off-diagonal blocks, got {}",
                t,
                t - 1,
                offdiag.len()
            )));
        }
        let m = diag[0].nrows();
        for b in diag.iter().chain(offdiag.iter()) {
            if b.nrows() != m || b.ncols() != m {
                return Err(Error::DimensionMismatch(format!(
                    "all blocks must be {m}x{m}, found {}x{}",
                    b.nrows(),
                    b.ncols()
                )));
            }
        }
        Ok(Self {
            block_dim: m,
            diag,
            offdiag,
        })
    }

    /// `τ (HᵀH ⊗ C⁻¹)`, the random-walk prior precision with a pinned start.
    pub fn random_walk(periods: usize, c_inv: &DMatrix<f64>, tau: f64) -> Self {
        let diag = (0..periods)
            .map(|t| {
                let w = if t + 1 < periods { 2.0 } else { 1.0 };
                c_inv * (w * tau)
            })
            .collect();
        let offdiag = (1..periods).map(|_| c_inv * (-tau)).collect();
        Self {
            block_dim: c_inv.nrows(),
            diag,
            offdiag,
        }
    }

    pub fn block_dim(&self) -> usize {
        self.block_dim
    }

    pub fn num_blocks(&self) -> usize {
        self.diag.len()
    }

    pub fn dim(&self) -> usize {
        self.block_dim * self.diag.len()
    }

    pub fn diag(&self, t: usize) -> &DMatrix<f64> {
        &self.diag[t]
    }

    pub fn diag_mut(&mut self, t: usize) -> &mut DMatrix<f64> {
        &mut self.diag[t]
    }

    /// Block `(t, t+1)`.
    pub fn offdiag(&self, t: usize) -> &DMatrix<f64> {
        &self.offdiag[t]
    }

    /// Entry `(row, col)` of the implied dense matrix.
    pub fn get(&self, row: usize, col: usize) -> f64 {
        let m = self.block_dim;
        let (br, bc) = (row / m, col / m);
        let (ir, ic) = (row % m, col % m);
        if br == bc {
            self.diag[br][(ir, ic)]
        } else if bc == br + 1 {
            self.offdiag[br][(ir, ic)]
        } else if br == bc + 1 {
            self.offdiag[bc][(ic, ir)]
        } else {
            0.0
        }
    }

    pub fn densify(&self) -> DMatrix<f64> {
        let n = self.dim();
        DMatrix::from_fn(n, n, |i, j| self.get(i, j))
    }

    /// `Q x` for a stacked vector.
    pub fn mul_vec(&self, x: &DVector<f64>) -> DVector<f64> {
        let m = self.block_dim;
        let t_len = self.num_blocks();
        let mut out = DVector::zeros(self.dim());
        for t in 0..t_len {
            let xt = x.rows(t * m, m);
            let mut acc = &self.diag[t] * xt;
            if t + 1 < t_len {
                acc += &self.offdiag[t] * x.rows((t + 1) * m, m);
            }
            if t > 0 {
                acc += self.offdiag[t - 1].tr_mul(&x.rows((t - 1) * m, m));
            }
            out.rows_mut(t * m, m).copy_from(&acc);
        }
        out
    }
}

/// First-difference operator on `T` stacked blocks: ones on the diagonal,
/// minus ones on the sub-diagonal.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HOperator {
    pub periods: usize,
}

impl HOperator {
    pub fn new(periods: usize) -> Self {
        Self { periods }
    }

    /// Dense `T x T` matrix, for tests and small oracles.
    pub fn matrix(&self) -> DMatrix<f64> {
        let t = self.periods;
        DMatrix::from_fn(t, t, |i, j| {
            if i == j {
                1.0
            } else if i == j + 1 {
                -1.0
            } else {
                0.0
            }
        })
    }

    /// `HᵀH`: tridiagonal with diagonal `(2, …, 2, 1)` and off-diagonals `-1`.
    pub fn gram(&self) -> DMatrix<f64> {
        let t = self.periods;
        DMatrix::from_fn(t, t, |i, j| {
            if i == j {
                if i + 1 < t {
                    2.0
                } else {
                    1.0
                }
            } else if i.abs_diff(j) == 1 {
                -1.0
            } else {
                0.0
            }
        })
    }

    /// Applies `H ⊗ I_M` to a stacked vector of `T` blocks of length `block_dim`.
    pub fn apply(&self, x: &[f64], block_dim: usize) -> Vec<f64> {
        assert_eq!(x.len(), self.periods * block_dim);
        let mut out = x.to_vec();
        for t in (1..self.periods).rev() {
            for j in 0..block_dim {
                out[t * block_dim + j] -= x[(t - 1) * block_dim + j];
            }
        }
        out
    }

    /// Applies `H⁻¹ ⊗ I_M` (a running sum over blocks).
    pub fn apply_inverse(&self, x: &[f64], block_dim: usize) -> Vec<f64> {
        assert_eq!(x.len(), self.periods * block_dim);
        let mut out = x.to_vec();
        for t in 1..self.periods {
            for j in 0..block_dim {
                out[t * block_dim + j] += out[(t - 1) * block_dim + j];
            }
        }
        out
    }
}

/// `T` vertically stacked copies of `v0`, i.e. `H⁻¹ (v0, 0, …, 0)`.
pub fn h_inverse_stack(v0: &[f64], periods: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(v0.len() * periods);
    for _ in 0..periods {
        out.extend_from_slice(v0);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stack_examples() {
        assert_eq!(h_inverse_stack(&[1.0, 2.0], 3), vec![1.0, 2.0, 1.0, 2.0, 1.0, 2.0]);
        assert_eq!(h_inverse_stack(&[4.0, 5.0], 1), vec![4.0, 5.0]);
    }

    #[test]
    fn stack_is_inverse_of_leading_block() {
        let v0 = [0.5, -1.5, 3.0];
        let h = HOperator::new(4);
        let diffed = h.apply(&h_inverse_stack(&v0, 4), 3);
        assert_eq!(&diffed[..3], &v0);
        assert!(diffed[3..].iter().all(|&x| x == 0.0));
        let back = h.apply_inverse(&diffed, 3);
        assert_eq!(back, h_inverse_stack(&v0, 4));
    }

    #[test]
    fn h_gram_matches_dense_product() {
        for t in 1..6 {
            let h = HOperator::new(t);
            let hm = h.matrix();
            assert_eq!(hm.transpose() * &hm, h.gram());
        }
    }

    #[test]
    fn mul_vec_matches_dense() {
        let c = DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 1.0]);
        let q = BlockTridiagonalPrecision::random_walk(3, &c, 1.7);
        let x = DVector::from_vec(vec![1.0, -2.0, 0.5, 0.25, 3.0, -1.0]);
        let dense = q.densify() * &x;
        assert!((q.mul_vec(&x) - dense).amax() < 1e-14);
    }

    #[test]
    fn random_walk_precision_is_kronecker() {
        let c_inv = DMatrix::from_row_slice(2, 2, &[2.0, -0.5, -0.5, 1.5]);
        let tau = 0.7;
        let q = BlockTridiagonalPrecision::random_walk(4, &c_inv, tau);
        let kron = HOperator::new(4).gram().kronecker(&c_inv) * tau;
        assert!((q.densify() - kron).amax() < 1e-15);
    }

    #[test]
    fn rejects_inconsistent_blocks() {
        let a = DMatrix::identity(2, 2);
        assert!(BlockTridiagonalPrecision::new(vec![a.clone(), a.clone()], vec![]).is_err());
        assert!(BlockTridiagonalPrecision::new(vec![], vec![]).is_err());
        let b = DMatrix::identity(3, 3);
        assert!(BlockTridiagonalPrecision::new(vec![a.clone(), b], vec![a]).is_err());
    }
}
