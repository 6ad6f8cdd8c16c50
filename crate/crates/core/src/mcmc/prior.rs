//! Log-densities of the knot-level random walk.

use nalgebra::{DMatrix, DVector};

use super::LatentField;
use crate::error::Result;
use crate::linalg::{cholesky, mvn_log_density_cov, CholeskyFactor, HOperator, SymMatrix};
use crate::spatial::GppProjector;

const LN_2PI: f64 = 1.8378770664093453;

/// `ū_0ᵀC̄⁻¹ū_0 + Σ_t (ū_t − ū_{t−1})ᵀ C̄⁻¹ (ū_t − ū_{t−1})`.
pub fn random_walk_quadratic_form(field: &LatentField, chol: &CholeskyFactor) -> f64 {
    let mut total = chol.inv_quad(field.origin.as_slice());
    let mut prev = &field.origin;
    for b in &field.blocks {
        let d = b - prev;
        total += chol.inv_quad(d.as_slice());
        prev = b;
    }
    total
}

/// `tr(UᵀC̄⁻¹U HᵀH)` with columns `U_t = ū_t − ū_0`. Equals the stacked increment form.
pub fn random_walk_trace_form(field: &LatentField, c_inv: &DMatrix<f64>) -> f64 {
    let t_len = field.blocks.len();
    if t_len == 0 {
        return 0.0;
    }
    let u = DMatrix::from_columns(&field.blocks.iter().map(|b| b - &field.origin).collect::<Vec<_>>());
    let inner = u.transpose() * c_inv * &u;
    (inner * HOperator::new(t_len).gram()).trace()
}

/// `log N(ū_0; 0, τ⁻¹C̄) + log N(ū; 1 ⊗ ū_0, τ⁻¹ C̄_H)` with all constants.
pub fn field_prior_log_density(field: &LatentField, proj: &GppProjector) -> f64 {
    let m = field.num_knots() as f64;
    let t1 = (field.num_periods() + 1) as f64;
    let chol = proj.knot_cholesky();
    -0.5 * t1 * (m * LN_2PI + chol.log_det() - m * field.tau.ln())
        - 0.5 * field.tau * random_walk_quadratic_form(field, chol)
}

/// Joint `log N(ū; 1 ⊗ ū_0, τ⁻¹ (HᵀH)⁻¹ ⊗ C̄)` through a dense factor of the stacked covariance.
pub fn random_walk_log_density_joint(field: &LatentField, c: &SymMatrix) -> Result<f64> {
    let t_len = field.num_periods();
    let h = HOperator::new(t_len).matrix();
    let h_inv = h.try_inverse().expect("unit lower-triangular");
    let cov = (&h_inv * h_inv.transpose()).kronecker(c.as_matrix()) / field.tau;
    let chol = cholesky(&SymMatrix::symmetrized(cov))?;
    let x: Vec<f64> = field.blocks.iter().flat_map(|b| b.iter().copied()).collect();
    let mean: Vec<f64> = (0..t_len).flat_map(|_| field.origin.iter().copied()).collect();
    Ok(mvn_log_density_cov(&x, &mean, &chol))
}

/// `Σ_t log N(ū_t; ū_{t−1}, τ⁻¹C̄)`.
pub fn random_walk_log_density_sequential(field: &LatentField, c: &SymMatrix) -> Result<f64> {
    let chol = cholesky(&SymMatrix::symmetrized(c.as_matrix() / field.tau))?;
    let mut prev: &DVector<f64> = &field.origin;
    let mut total = 0.0;
    for b in &field.blocks {
        total += mvn_log_density_cov(b.as_slice(), prev.as_slice(), &chol);
        prev = b;
    }
    Ok(total)
}
