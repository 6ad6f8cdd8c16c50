//! Full conditionals and single-block updates.
//!
//! Every Pólya-Gamma-augmented Gaussian conditional has the form
//! `log p(f | −) = Σ_i h_i f_i − ½ Σ_i w_i f_i² + log prior(f) + const`
//! where `f_i` is the block's contribution to the observation's logit.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use super::predictors::{design_times, log_binomial_pmf, log_softmax3, logits, softplus};
use super::prior::{field_prior_log_density, random_walk_trace_form};
use super::{
    ChainState, GammaPrior, LatentField, PanelDataset, PhiProposal, Priors, Projectors,
    SamplerConfig, Smoother, XiPhiTarget,
};
use crate::error::{Error, Result};
use crate::linalg::{
    cholesky, mccausland_forward, sample_mccausland, sample_rue, sample_with_factor,
    solve_mccausland, solve_rue, standard_normal_vec, BlockTridiagonalPrecision, SymMatrix,
};
use crate::randomkit::{draw_categorical, draw_gamma, draw_open_unit, draw_pg_with, PgOne};
use crate::spatial::{GppProjector, SiteSet};

/// `N(Q⁻¹m, Q⁻¹)` held as precision and linear term.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianConditional {
    pub precision: SymMatrix,
    pub linear: DVector<f64>,
}

impl GaussianConditional {
    pub fn mean(&self) -> Result<DVector<f64>> {
        Ok(cholesky(&self.precision)?.solve(&self.linear))
    }

    /// `mᵀx − ½ xᵀQx`, the log-density up to a constant.
    pub fn log_kernel(&self, x: &DVector<f64>) -> f64 {
        self.linear.dot(x) - 0.5 * (self.precision.as_matrix() * x).dot(x)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<DVector<f64>> {
        Ok(sample_with_factor(&cholesky(&self.precision)?, &self.linear, rng))
    }
}

/// Block-tridiagonal Gaussian over a whole knot field.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldConditional {
    pub precision: BlockTridiagonalPrecision,
    pub linear: Vec<DVector<f64>>,
}

impl FieldConditional {
    pub fn sample<R: Rng + ?Sized>(&self, smoother: Smoother, rng: &mut R) -> Result<Vec<DVector<f64>>> {
        match smoother {
            Smoother::McCausland => sample_mccausland(&self.linear, &self.precision, rng),
            Smoother::Rue => {
                let x = sample_rue(&self.stacked_linear(), &self.precision, rng)?;
                Ok(self.split(&x))
            }
        }
    }

    pub fn mean(&self, smoother: Smoother) -> Result<Vec<DVector<f64>>> {
        match smoother {
            Smoother::McCausland => solve_mccausland(&self.linear, &self.precision),
            Smoother::Rue => Ok(self.split(&solve_rue(&self.stacked_linear(), &self.precision)?)),
        }
    }

    pub fn log_kernel(&self, blocks: &[DVector<f64>]) -> f64 {
        let x = DVector::from_iterator(
            self.precision.dim(),
            blocks.iter().flat_map(|b| b.iter().copied()),
        );
        self.stacked_linear().dot(&x) - 0.5 * self.precision.mul_vec(&x).dot(&x)
    }

    /// Validates positive definiteness without drawing.
    pub fn check(&self) -> Result<()> {
        mccausland_forward(&self.linear, &self.precision).map(|_| ())
    }

    fn stacked_linear(&self) -> DVector<f64> {
        DVector::from_iterator(
            self.precision.dim(),
            self.linear.iter().flat_map(|b| b.iter().copied()),
        )
    }

    fn split(&self, x: &DVector<f64>) -> Vec<DVector<f64>> {
        x.as_slice()
            .chunks(self.precision.block_dim())
            .map(DVector::from_column_slice)
            .collect()
    }
}

/// `Q = Q₀ + Σ w xxᵀ`, `m = Q₀μ₀ + Σ h x`.
fn regression_conditional(
    x: &DMatrix<f64>,
    w: &[f64],
    h: &[f64],
    prior_mean: &DVector<f64>,
    prior_prec: &SymMatrix,
) -> GaussianConditional {
    let q = x.ncols();
    let mut prec = prior_prec.as_matrix().clone();
    let mut lin = prior_prec.as_matrix() * prior_mean;
    for i in 0..x.nrows() {
        if w[i] == 0.0 && h[i] == 0.0 {
            continue;
        }
        for a in 0..q {
            let xa = x[(i, a)];
            lin[a] += h[i] * xa;
            for b in 0..q {
                prec[(a, b)] += w[i] * xa * x[(i, b)];
            }
        }
    }
    GaussianConditional {
        precision: SymMatrix::symmetrized(prec),
        linear: lin,
    }
}

/// Conditional of a knot field given per-observation weights and linear terms.
pub fn field_conditional(
    field: &LatentField,
    proj: &GppProjector,
    data: &PanelDataset,
    w: &[f64],
    h: &[f64],
) -> FieldConditional {
    let m = field.num_knots();
    let c_inv = proj.knot_precision();
    let mut precision = BlockTridiagonalPrecision::random_walk(field.num_periods(), c_inv, field.tau);
    let mut linear = Vec::with_capacity(field.num_periods());
    for t in 0..field.num_periods() {
        let rows = data.period_range(t);
        let d = proj.projection(t);
        let (wt, ht) = (&w[rows.clone()], &h[rows]);
        let nt = d.nrows();
        let cols = d.as_slice();
        let block = precision.diag_mut(t);
        let mut wcol = vec![0.0; nt];
        for j in 0..m {
            let dj = &cols[j * nt..(j + 1) * nt];
            for ((o, a), b) in wcol.iter_mut().zip(dj).zip(wt) {
                *o = a * b;
            }
            for l in j..m {
                let v: f64 = cols[l * nt..(l + 1) * nt].iter().zip(&wcol).map(|(a, b)| a * b).sum();
                block[(j, l)] += v;
                if l != j {
                    block[(l, j)] += v;
                }
            }
        }
        linear.push(DVector::from_fn(m, |j, _| cols[j * nt..(j + 1) * nt].iter().zip(ht).map(|(a, b)| a * b).sum()));
    }
    // prior mean 1 ⊗ ū_0 only reaches the first block through τ HᵀH ⊗ C̄⁻¹
    linear[0] += c_inv * &field.origin * field.tau;
    FieldConditional { precision, linear }
}

fn binomial_kappa(data: &PanelDataset, cfg: &SamplerConfig) -> Vec<f64> {
    data.successes()
        .iter()
        .zip(data.trials())
        .map(|(&y, &n)| cfg.kappa_scale * (y as f64 - 0.5 * n as f64))
        .collect()
}

/// Binomial-part weights: `ω` on rows in class 2, zero elsewhere.
fn binomial_weights(state: &ChainState) -> Vec<f64> {
    state
        .omega
        .iter()
        .zip(&state.r)
        .map(|(&w, &r)| if r == 2 { w } else { 0.0 })
        .collect()
}

/// Step 2(b) conditional: `B = B₀ + X*ᵀΩ*X*`, `b = B₀b₀ + X*ᵀ(κ* − Ω*u*)`.
pub fn beta_conditional(
    state: &ChainState,
    data: &PanelDataset,
    proj: &Projectors,
    priors: &Priors,
    cfg: &SamplerConfig,
) -> GaussianConditional {
    let w = binomial_weights(state);
    let u = state.u.site_values(data, &proj.u);
    let kappa = binomial_kappa(data, cfg);
    let h: Vec<f64> = (0..data.len())
        .map(|i| if state.r[i] == 2 { kappa[i] - w[i] * u[i] } else { 0.0 })
        .collect();
    regression_conditional(data.design(), &w, &h, &priors.beta_mean, &priors.beta_precision)
}

pub fn sample_beta<R: Rng + ?Sized>(
    state: &mut ChainState,
    data: &PanelDataset,
    proj: &Projectors,
    priors: &Priors,
    cfg: &SamplerConfig,
    rng: &mut R,
) -> Result<()> {
    state.beta = beta_conditional(state, data, proj, priors, cfg).sample(rng)?;
    Ok(())
}

/// Step 2(c) conditional over `ū_1 … ū_T`.
pub fn u_conditional(
    state: &ChainState,
    data: &PanelDataset,
    proj: &Projectors,
    cfg: &SamplerConfig,
) -> FieldConditional {
    let w = binomial_weights(state);
    let xb = design_times(data, &state.beta);
    let kappa = binomial_kappa(data, cfg);
    let h: Vec<f64> = (0..data.len())
        .map(|i| if state.r[i] == 2 { kappa[i] - w[i] * xb[i] } else { 0.0 })
        .collect();
    field_conditional(&state.u, &proj.u, data, &w, &h)
}

pub fn sample_u_field<R: Rng + ?Sized>(
    state: &mut ChainState,
    data: &PanelDataset,
    proj: &Projectors,
    cfg: &SamplerConfig,
    rng: &mut R,
) -> Result<()> {
    state.u.blocks = u_conditional(state, data, proj, cfg).sample(cfg.smoother, rng)?;
    Ok(())
}

/// `ū_0 ~ N(ū_1 / 2, (2τ)⁻¹ C̄)`.
fn sample_origin<R: Rng + ?Sized>(field: &mut LatentField, proj: &GppProjector, rng: &mut R) {
    let m = field.num_knots();
    let z = standard_normal_vec(m, rng);
    let noise = proj.knot_cholesky().covariance_noise(&z);
    field.origin = &field.blocks[0] * 0.5 + noise / (2.0 * field.tau).sqrt();
}

pub fn sample_u0<R: Rng + ?Sized>(state: &mut ChainState, proj: &Projectors, rng: &mut R) {
    sample_origin(&mut state.u, &proj.u, rng);
}

pub fn sample_xi0<R: Rng + ?Sized>(state: &mut ChainState, proj: &Projectors, k: usize, rng: &mut R) {
    sample_origin(&mut state.xi[k], &proj.xi[k], rng);
}

/// Shape and rate of the conjugate gamma conditional for a field precision.
pub fn tau_conditional(field: &LatentField, proj: &GppProjector, prior: GammaPrior) -> GammaPrior {
    let m = field.num_knots() as f64;
    let t = field.num_periods() as f64;
    let c_inv = proj.knot_precision();
    let origin_quad = (c_inv * &field.origin).dot(&field.origin);
    GammaPrior {
        shape: prior.shape + m * (t + 1.0) / 2.0,
        rate: prior.rate + 0.5 * (origin_quad + random_walk_trace_form(field, c_inv)),
    }
}

pub fn sample_tau_u<R: Rng + ?Sized>(
    state: &mut ChainState,
    proj: &Projectors,
    priors: &Priors,
    rng: &mut R,
) -> Result<()> {
    let g = tau_conditional(&state.u, &proj.u, priors.tau_u);
    state.u.tau = draw_gamma(g.shape, g.rate, rng)?;
    Ok(())
}

pub fn sample_tau_xi<R: Rng + ?Sized>(
    state: &mut ChainState,
    proj: &Projectors,
    priors: &Priors,
    k: usize,
    rng: &mut R,
) -> Result<()> {
    let g = tau_conditional(&state.xi[k], &proj.xi[k], priors.tau_xi[k]);
    state.xi[k].tau = draw_gamma(g.shape, g.rate, rng)?;
    Ok(())
}

/// Step 1: class indicators from the boundary-restricted posterior probabilities.
pub fn sample_indicators<R: Rng + ?Sized>(
    state: &mut ChainState,
    data: &PanelDataset,
    proj: &Projectors,
    rng: &mut R,
) -> Result<()> {
    let l = logits(state, data, proj);
    let (y, n) = (data.successes(), data.trials());
    for i in 0..data.len() {
        if y[i] != 0 && y[i] != n[i] {
            state.r[i] = 2;
            continue;
        }
        let lp = log_softmax3(l.psi[0][i], l.psi[1][i]);
        let logw = [
            if y[i] == 0 { lp[0] } else { f64::NEG_INFINITY },
            if y[i] == n[i] { lp[1] } else { f64::NEG_INFINITY },
            lp[2] + log_binomial_pmf(y[i], n[i], l.eta[i]),
        ];
        let mx = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let probs = logw.map(|v| (v - mx).exp());
        state.r[i] = draw_categorical(&probs, rng)? as u8;
    }
    Ok(())
}

/// Step 2(a): `ω ~ PG(n, η)`.
pub fn sample_pg_binomial<R: Rng + ?Sized>(
    state: &mut ChainState,
    data: &PanelDataset,
    proj: &Projectors,
    cfg: &SamplerConfig,
    rng: &mut R,
) -> Result<()> {
    let eta: Vec<f64> = design_times(data, &state.beta)
        .into_iter()
        .zip(state.u.site_values(data, &proj.u))
        .map(|(a, b)| a + b)
        .collect();
    let pg = cfg.pg_config();
    for i in 0..data.len() {
        if cfg.skip_inactive_pg && state.r[i] != 2 {
            continue;
        }
        state.omega[i] = draw_pg_with(data.trials()[i], eta[i], &pg, rng)?;
    }
    Ok(())
}

/// `Ψ_k = log(1 + e^{ψ_other})` and `ψ_k − Ψ_k` per observation.
fn multinomial_offsets(psi: &[Vec<f64>; 2], k: usize) -> (Vec<f64>, Vec<f64>) {
    let other = &psi[1 - k];
    let big: Vec<f64> = other.iter().map(|&v| softplus(v)).collect();
    let arg = psi[k].iter().zip(&big).map(|(a, b)| a - b).collect();
    (big, arg)
}

/// Step 3(a): `ω_k ~ PG(1, ψ_k − Ψ_k)`.
pub fn sample_pg_multinomial<R: Rng + ?Sized>(
    state: &mut ChainState,
    data: &PanelDataset,
    proj: &Projectors,
    k: usize,
    rng: &mut R,
) -> Result<()> {
    let l = logits(state, data, proj);
    let (_, arg) = multinomial_offsets(&l.psi, k);
    for (w, c) in state.omega_k[k].iter_mut().zip(arg) {
        if !c.is_finite() {
            return Err(Error::InvalidShape(format!("PG tilt must be finite, got {c}")));
        }
        *w = PgOne::new(c).draw(rng);
    }
    Ok(())
}

fn class_kappa(state: &ChainState, k: usize) -> Vec<f64> {
    state
        .r
        .iter()
        .map(|&r| if r as usize == k { 0.5 } else { -0.5 })
        .collect()
}

/// Step 3(b): `G = G₀ + XᵀΩ_kX`, `g = G₀g₀ + Xᵀ{κ_k + Ω_k(Ψ_k − ξ_k)}`.
pub fn gamma_conditional(
    state: &ChainState,
    data: &PanelDataset,
    proj: &Projectors,
    priors: &Priors,
    k: usize,
) -> GaussianConditional {
    let l = logits(state, data, proj);
    let (big, _) = multinomial_offsets(&l.psi, k);
    let xi = state.xi[k].site_values(data, &proj.xi[k]);
    let kappa = class_kappa(state, k);
    let w = &state.omega_k[k];
    let h: Vec<f64> = (0..data.len()).map(|i| kappa[i] + w[i] * (big[i] - xi[i])).collect();
    regression_conditional(data.design(), w, &h, &priors.gamma_mean[k], &priors.gamma_precision[k])
}

pub fn sample_gamma_k<R: Rng + ?Sized>(
    state: &mut ChainState,
    data: &PanelDataset,
    proj: &Projectors,
    priors: &Priors,
    k: usize,
    rng: &mut R,
) -> Result<()> {
    state.gamma[k] = gamma_conditional(state, data, proj, priors, k).sample(rng)?;
    Ok(())
}

/// Step 3(c) conditional over `ξ̄_k1 … ξ̄_kT`.
pub fn xi_conditional(
    state: &ChainState,
    data: &PanelDataset,
    proj: &Projectors,
    k: usize,
) -> FieldConditional {
    let l = logits(state, data, proj);
    let (big, _) = multinomial_offsets(&l.psi, k);
    let xg = design_times(data, &state.gamma[k]);
    let kappa = class_kappa(state, k);
    let w = &state.omega_k[k];
    let h: Vec<f64> = (0..data.len()).map(|i| kappa[i] + w[i] * (big[i] - xg[i])).collect();
    field_conditional(&state.xi[k], &proj.xi[k], data, w, &h)
}

pub fn sample_xi_field<R: Rng + ?Sized>(
    state: &mut ChainState,
    data: &PanelDataset,
    proj: &Projectors,
    k: usize,
    smoother: Smoother,
    rng: &mut R,
) -> Result<()> {
    state.xi[k].blocks = xi_conditional(state, data, proj, k).sample(smoother, rng)?;
    Ok(())
}

/// Random-walk proposal for a range parameter on `(lo, hi)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhiStep {
    pub step: f64,
    pub proposal: PhiProposal,
    pub lo: f64,
    pub hi: f64,
}

impl PhiStep {
    pub fn new(priors: &Priors, step: f64, proposal: PhiProposal) -> Self {
        Self {
            step,
            proposal,
            lo: priors.phi_lo,
            hi: priors.phi_hi,
        }
    }

    /// Candidate and log Jacobian ratio, or `None` when it falls outside the support.
    pub fn propose<R: Rng + ?Sized>(&self, phi: f64, rng: &mut R) -> Option<(f64, f64)> {
        let width = self.hi - self.lo;
        let z = crate::randomkit::draw_normal(rng);
        match self.proposal {
            PhiProposal::Logit => {
                let v = (phi - self.lo) / width;
                let theta = (v / (1.0 - v)).ln() + self.step * z;
                let v_new = super::logistic(theta);
                let phi_new = self.lo + width * v_new;
                if !(phi_new > self.lo && phi_new < self.hi) {
                    return None;
                }
                let log_jac = (v_new * (1.0 - v_new)).ln() - (v * (1.0 - v)).ln();
                Some((phi_new, log_jac))
            }
            PhiProposal::Raw => {
                let phi_new = phi + self.step * width * z;
                (phi_new > self.lo && phi_new < self.hi).then_some((phi_new, 0.0))
            }
        }
    }
}

/// Log target for `φ_u` at the range of `cand`: class-2 binomial likelihood plus the field prior.
pub fn phi_log_target_u(state: &ChainState, data: &PanelDataset, cand: &GppProjector) -> f64 {
    let xb = design_times(data, &state.beta);
    let u = state.u.site_values(data, cand);
    let (y, n) = (data.successes(), data.trials());
    let loglik: f64 = (0..data.len())
        .filter(|&i| state.r[i] == 2)
        .map(|i| log_binomial_pmf(y[i], n[i], xb[i] + u[i]))
        .sum();
    loglik + field_prior_log_density(&state.u, cand)
}

/// Log target for `φ_ξk` at the range of `cand`.
pub fn phi_log_target_xi(
    state: &ChainState,
    data: &PanelDataset,
    proj: &Projectors,
    k: usize,
    cand: &GppProjector,
    target: XiPhiTarget,
) -> f64 {
    let psi_k: Vec<f64> = design_times(data, &state.gamma[k])
        .into_iter()
        .zip(state.xi[k].site_values(data, cand))
        .map(|(a, b)| a + b)
        .collect();
    let o = 1 - k;
    let psi_o: Vec<f64> = design_times(data, &state.gamma[o])
        .into_iter()
        .zip(state.xi[o].site_values(data, &proj.xi[o]))
        .map(|(a, b)| a + b)
        .collect();
    let loglik: f64 = (0..data.len())
        .filter_map(|i| {
            let r = state.r[i] as usize;
            if target == XiPhiTarget::ClassOnly && r != k {
                return None;
            }
            let lp = if k == 0 {
                log_softmax3(psi_k[i], psi_o[i])
            } else {
                log_softmax3(psi_o[i], psi_k[i])
            };
            Some(lp[r])
        })
        .sum();
    loglik + field_prior_log_density(&state.xi[k], cand)
}

/// One Metropolis–Hastings step for a range; returns whether it was accepted.
fn mh_range<R: Rng + ?Sized>(
    phi: f64,
    current: &GppProjector,
    sites: &[SiteSet],
    step: &PhiStep,
    target: impl Fn(&GppProjector) -> f64,
    rng: &mut R,
) -> Result<Option<GppProjector>> {
    let Some((phi_new, log_jac)) = step.propose(phi, rng) else {
        return Ok(None);
    };
    let cand = match current.rebuild(sites, phi_new) {
        Ok(c) => c,
        Err(Error::NotPositiveDefinite { .. }) => return Ok(None),
        Err(e) => return Err(e),
    };
    let log_ratio = target(&cand) - target(current) + log_jac;
    if log_ratio >= 0.0 || draw_open_unit(rng).ln() < log_ratio {
        Ok(Some(cand))
    } else {
        Ok(None)
    }
}

/// Step 2(f). On acceptance the `u` projector is rebuilt at the new range.
pub fn sample_phi_u<R: Rng + ?Sized>(
    state: &mut ChainState,
    data: &PanelDataset,
    proj: &mut Projectors,
    step: &PhiStep,
    rng: &mut R,
) -> Result<bool> {
    let accepted = mh_range(
        state.u.phi,
        &proj.u,
        data.sites_by_period(),
        step,
        |c| phi_log_target_u(state, data, c),
        rng,
    )?;
    Ok(match accepted {
        Some(p) => {
            state.u.phi = p.phi();
            proj.u = p;
            true
        }
        None => false,
    })
}

/// Step 3(f) for process `k`.
pub fn sample_phi_xi<R: Rng + ?Sized>(
    state: &mut ChainState,
    data: &PanelDataset,
    proj: &mut Projectors,
    k: usize,
    step: &PhiStep,
    target: XiPhiTarget,
    rng: &mut R,
) -> Result<bool> {
    let accepted = mh_range(
        state.xi[k].phi,
        &proj.xi[k],
        data.sites_by_period(),
        step,
        |c| phi_log_target_xi(state, data, proj, k, c, target),
        rng,
    )?;
    Ok(match accepted {
        Some(p) => {
            state.xi[k].phi = p.phi();
            proj.xi[k] = p;
            true
        }
        None => false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::cholesky;
    use crate::mcmc::predictors::logistic;
    use crate::mcmc::testutil::toy_dataset;
    use crate::mcmc::{initial_state, Observation};
    use crate::randomkit::{draw_normal, pg_mean, RngStream};
    use crate::spatial::KnotSet;

    use crate::mcmc::oracle::{constant_spread, OracleFixture as Fixture};

    fn fixture(periods: usize, per: usize, m: usize, seed: u64) -> Fixture {
        Fixture::new(periods, per, m, seed)
    }

    fn brute_beta(f: &Fixture, beta: &DVector<f64>) -> f64 {
        f.brute_beta(beta)
    }

    fn brute_gamma(f: &Fixture, k: usize, gamma: &DVector<f64>) -> f64 {
        f.brute_gamma(k, gamma)
    }

    fn brute_field(f: &Fixture, which: Option<usize>, blocks: &[DVector<f64>]) -> f64 {
        f.brute_field(which, blocks)
    }

    fn assert_constant_difference(diffs: &[f64]) {
        assert!(constant_spread(diffs) < 1e-8, "{diffs:?}");
    }

    #[test]
    fn beta_conditional_matches_brute_force() {
        let f = fixture(3, 4, 2, 11);
        let cond = beta_conditional(&f.state, &f.data, &f.proj, &f.priors, &f.cfg);
        let mut rng = RngStream::new(0, 0);
        let diffs: Vec<f64> = (0..20)
            .map(|_| {
                let b = DVector::from_fn(2, |_, _| 3.0 * draw_normal(&mut rng));
                cond.log_kernel(&b) - brute_beta(&f, &b)
            })
            .collect();
        assert_constant_difference(&diffs);
    }

    #[test]
    fn gamma_conditionals_match_brute_force() {
        let f = fixture(2, 5, 2, 12);
        for k in 0..2 {
            let cond = gamma_conditional(&f.state, &f.data, &f.proj, &f.priors, k);
            let mut rng = RngStream::new(1, k as u64);
            let diffs: Vec<f64> = (0..20)
                .map(|_| {
                    let g = DVector::from_fn(2, |_, _| 2.0 * draw_normal(&mut rng));
                    cond.log_kernel(&g) - brute_gamma(&f, k, &g)
                })
                .collect();
            assert_constant_difference(&diffs);
        }
    }

    #[test]
    fn field_conditionals_match_brute_force() {
        let f = fixture(3, 4, 2, 13);
        for which in [None, Some(0), Some(1)] {
            let cond = match which {
                None => u_conditional(&f.state, &f.data, &f.proj, &f.cfg),
                Some(k) => xi_conditional(&f.state, &f.data, &f.proj, k),
            };
            let mut rng = RngStream::new(2, 0);
            let diffs: Vec<f64> = (0..20)
                .map(|_| {
                    let blocks: Vec<DVector<f64>> =
                        (0..3).map(|_| DVector::from_fn(2, |_, _| draw_normal(&mut rng))).collect();
                    cond.log_kernel(&blocks) - brute_field(&f, which, &blocks)
                })
                .collect();
            assert_constant_difference(&diffs);
        }
    }

    #[test]
    fn tau_conditional_shape_and_rate() {
        let f = fixture(10, 3, 2, 14);
        let g = tau_conditional(&f.state.u, &f.proj.u, GammaPrior { shape: 2.0, rate: 1.0 });
        assert_eq!(g.shape, 13.0);
        let chol = f.proj.u.knot_cholesky();
        let stacked = super::super::prior::random_walk_quadratic_form(&f.state.u, chol);
        assert!((g.rate - 1.0 - 0.5 * stacked).abs() < 1e-8);
        let zero = LatentField::zeros(10, 2, 1.0, 0.5);
        assert_eq!(tau_conditional(&zero, &f.proj.u, GammaPrior { shape: 2.0, rate: 1.5 }).rate, 1.5);
        let three = LatentField::zeros(4, 3, 1.0, 0.5);
        let knots = KnotSet::new(vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]).unwrap();
        let p = GppProjector::build(&vec![SiteSet::default(); 4], &knots, 0.5).unwrap();
        assert_eq!(tau_conditional(&three, &p, GammaPrior { shape: 1.0, rate: 1.0 }).shape, 8.5);
    }

    /// One period, M = 1, single observation: the tiniest system with a dense oracle.
    fn single_obs(y: u32, n: u32, periods: usize) -> (PanelDataset, Projectors, ChainState, Priors) {
        let obs = Observation {
            period: 0,
            site: 0,
            location: [0.3, 0.1],
            covariates: vec![1.0],
            trials: n,
            successes: y,
        };
        let data = PanelDataset::new(periods, vec![obs]).unwrap();
        let mut priors = Priors::default_for(&data);
        priors.phi_lo = 0.1;
        priors.phi_hi = 2.0;
        let knots = KnotSet::new(vec![[0.0, 0.0]]).unwrap();
        let mut rng = RngStream::new(0, 0);
        let state = initial_state(&data, &priors, 1, &mut rng);
        let proj = Projectors::build(&data, &knots, &state).unwrap();
        (data, proj, state, priors)
    }

    #[test]
    fn beta_examples() {
        let (data, proj, mut state, mut priors) = single_obs(3, 4, 1);
        priors.beta_precision = SymMatrix::scaled_identity(1, 1e-6);
        priors.beta_mean = DVector::zeros(1);
        state.omega = vec![2.0];
        state.r = vec![2];
        let cond = beta_conditional(&state, &data, &proj, &priors, &SamplerConfig::default());
        // κ = 1, ω = 2: mean 0.5, variance 0.5
        assert!((cond.mean().unwrap()[0] - 0.5).abs() < 1e-6);
        assert!((cond.precision.as_matrix()[(0, 0)] - 2.0).abs() < 1e-5);
        // no class-2 rows: the prior
        state.r = vec![1];
        let cond = beta_conditional(&state, &data.with_successes(vec![4]).unwrap(), &proj, &priors, &SamplerConfig::default());
        assert_eq!(cond.precision.as_matrix()[(0, 0)], 1e-6);
        assert_eq!(cond.linear[0], 0.0);
    }

    #[test]
    fn gamma_example() {
        let (data, proj, mut state, mut priors) = single_obs(3, 4, 1);
        priors.gamma_precision[0] = SymMatrix::scaled_identity(1, 1e-9);
        state.r = vec![0];
        state.omega_k[0] = vec![1.0];
        // ψ_1 = −∞ makes Ψ_0 = 0
        state.gamma[1] = DVector::from_element(1, -800.0);
        let cond = gamma_conditional(&state, &data, &proj, &priors, 0);
        assert!((cond.mean().unwrap()[0] - 0.5).abs() < 1e-6);
        assert!((cond.precision.as_matrix()[(0, 0)] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn indicator_examples() {
        let (data, proj, mut state, _) = single_obs(3, 10, 1);
        let mut rng = RngStream::new(3, 0);
        for _ in 0..100 {
            sample_indicators(&mut state, &data, &proj, &mut rng).unwrap();
            assert_eq!(state.r, vec![2]);
        }
        // y = 0, e^{ψ_0} = 1, π = 0.5: P(r = 0) = 1 / (1 + 0.5^10)
        let zero = data.with_successes(vec![0]).unwrap();
        let n = 200_000;
        let mut hits = 0;
        for _ in 0..n {
            sample_indicators(&mut state, &zero, &proj, &mut rng).unwrap();
            hits += (state.r[0] == 0) as usize;
        }
        let want = 1.0 / (1.0 + 0.5f64.powi(10));
        let se = (want * (1.0 - want) / n as f64).sqrt();
        assert!((hits as f64 / n as f64 - want).abs() < 5.0 * se);
        // y = n, e^{ψ_1} = 2, π → 1: P(r = 1) → 2/3
        let full = data.with_successes(vec![10]).unwrap();
        state.gamma[1] = DVector::from_element(1, 2f64.ln());
        state.gamma[0] = DVector::from_element(1, -800.0);
        state.beta = DVector::from_element(1, 40.0);
        let mut hits = 0;
        for _ in 0..n {
            sample_indicators(&mut state, &full, &proj, &mut rng).unwrap();
            assert_ne!(state.r[0], 0);
            hits += (state.r[0] == 1) as usize;
        }
        assert!((hits as f64 / n as f64 - 2.0 / 3.0).abs() < 0.005);
    }

    #[test]
    fn pg_step_examples() {
        let (data, proj, mut state, _) = single_obs(30, 60, 1);
        let cfg = SamplerConfig::default();
        state.beta = DVector::from_element(1, 1.0);
        let mut rng = RngStream::new(4, 0);
        let n = 20_000;
        let mean = (0..n)
            .map(|_| {
                sample_pg_binomial(&mut state, &data, &proj, &cfg, &mut rng).unwrap();
                state.omega[0]
            })
            .sum::<f64>()
            / n as f64;
        assert!((mean - 30.0 * 0.5f64.tanh()).abs() < 0.1, "{mean}");
        let mut a = state.clone();
        let mut b = state.clone();
        sample_pg_binomial(&mut a, &data, &proj, &cfg, &mut RngStream::new(9, 9)).unwrap();
        sample_pg_binomial(&mut b, &data, &proj, &cfg, &mut RngStream::new(9, 9)).unwrap();
        assert_eq!(a.omega, b.omega);
    }

    #[test]
    fn multinomial_pg_argument() {
        let psi = [vec![1.0, 0.0], vec![0.0, 0.0]];
        let (big, arg) = multinomial_offsets(&psi, 0);
        assert!((big[0] - 2f64.ln()).abs() < 1e-15);
        assert!((arg[0] - (1.0 - 2f64.ln())).abs() < 1e-15);
        let (_, arg) = multinomial_offsets(&[vec![1.0], vec![-800.0]], 0);
        assert!((pg_mean(1.0, arg[0]) - pg_mean(1.0, 1.0)).abs() < 1e-15);
    }

    #[test]
    fn origin_moments() {
        let (_, proj, mut state, _) = single_obs(0, 1, 1);
        state.u.tau = 2.0;
        state.u.blocks[0] = DVector::from_element(1, 2.0);
        let mut rng = RngStream::new(5, 0);
        let n = 100_000;
        let draws: Vec<f64> = (0..n)
            .map(|_| {
                sample_u0(&mut state, &proj, &mut rng);
                state.u.origin[0]
            })
            .collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / n as f64;
        assert!((mean - 1.0).abs() < 4.0 * (0.25 / n as f64).sqrt());
        assert!((var - 0.25).abs() < 0.01);
    }

    #[test]
    fn field_without_data_is_prior_walk() {
        let (data, proj, mut state, _) = single_obs(1, 2, 3);
        state.r = vec![0];
        state.u.origin = DVector::from_element(1, 1.5);
        let cond = u_conditional(&state, &data.with_successes(vec![0]).unwrap(), &proj, &SamplerConfig::default());
        for smoother in [Smoother::McCausland, Smoother::Rue] {
            let mean = cond.mean(smoother).unwrap();
            for b in mean {
                assert!((b[0] - 1.5).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn field_mean_matches_dense_oracle() {
        let (data, proj, mut state, _) = single_obs(1, 3, 2);
        state.omega = vec![0.7];
        state.u.tau = 1.3;
        state.u.origin = DVector::from_element(1, 0.4);
        let cfg = SamplerConfig::default();
        let cond = u_conditional(&state, &data, &proj, &cfg);
        let dense = cond.precision.densify();
        let m = DVector::from_vec(cond.linear.iter().map(|b| b[0]).collect());
        let want = dense.clone().try_inverse().unwrap() * m;
        for smoother in [Smoother::McCausland, Smoother::Rue] {
            let got = cond.mean(smoother).unwrap();
            assert!((got[0][0] - want[0]).abs() < 1e-8);
            assert!((got[1][0] - want[1]).abs() < 1e-8);
        }
        // hand-assembled: D = e^{-|s|/φ}
        let d = proj.u.projection(0)[(0, 0)];
        let c_inv = proj.u.knot_precision()[(0, 0)];
        assert!((dense[(0, 0)] - (2.0 * 1.3 * c_inv + 0.7 * d * d)).abs() < 1e-12);
        assert!((dense[(1, 1)] - 1.3 * c_inv).abs() < 1e-12);
        assert!((dense[(0, 1)] + 1.3 * c_inv).abs() < 1e-12);
        let kappa = 1.0 - 1.5;
        assert!((cond.linear[0][0] - (1.3 * c_inv * 0.4 + d * kappa)).abs() < 1e-12);
        assert!(cholesky(&SymMatrix::new(dense).unwrap()).is_ok());
    }

    #[test]
    fn phi_proposals() {
        let priors = Priors {
            phi_lo: 0.1,
            phi_hi: 1.0,
            ..Priors::default_for(&toy_dataset(1, 2, 2, 0))
        };
        let mut rng = RngStream::new(6, 0);
        let frozen = PhiStep::new(&priors, 0.0, PhiProposal::Logit);
        let (p, j) = frozen.propose(0.4, &mut rng).unwrap();
        assert!((p - 0.4).abs() < 1e-12 && j.abs() < 1e-12);
        let raw = PhiStep::new(&priors, 100.0, PhiProposal::Raw);
        let outside = (0..200).filter(|_| raw.propose(0.5, &mut rng).is_none()).count();
        assert!(outside > 150);
        let wide = PhiStep::new(&priors, 5.0, PhiProposal::Logit);
        for _ in 0..200 {
            if let Some((p, _)) = wide.propose(0.5, &mut rng) {
                assert!(p > 0.1 && p < 1.0);
            }
        }
    }

    #[test]
    fn zero_step_phi_is_always_accepted() {
        let mut f = fixture(2, 4, 2, 15);
        let step = PhiStep::new(&f.priors, 0.0, PhiProposal::Logit);
        let mut rng = RngStream::new(7, 0);
        for _ in 0..20 {
            assert!(sample_phi_u(&mut f.state, &f.data, &mut f.proj, &step, &mut rng).unwrap());
            for k in 0..2 {
                assert!(sample_phi_xi(&mut f.state, &f.data, &mut f.proj, k, &step, XiPhiTarget::Categorical, &mut rng)
                    .unwrap());
            }
        }
    }

    #[test]
    fn phi_acceptance_rate_is_moderate() {
        let (data, mut proj, mut state, priors) = single_obs(3, 8, 2);
        state.u.blocks = vec![DVector::from_element(1, 0.3), DVector::from_element(1, -0.2)];
        let step = PhiStep::new(&priors, 0.3, PhiProposal::Logit);
        let mut rng = RngStream::new(8, 0);
        let n = 5000;
        let acc = (0..n)
            .filter(|_| sample_phi_u(&mut state, &data, &mut proj, &step, &mut rng).unwrap())
            .count() as f64
            / n as f64;
        assert!((0.1..=0.99).contains(&acc), "{acc}");
        assert!((proj.u.phi() - state.u.phi).abs() == 0.0);
    }

    #[test]
    fn class_only_target_ignores_other_classes() {
        let f = fixture(2, 4, 2, 16);
        let proj = &f.proj.xi[0];
        let mut state = f.state.clone();
        let a = phi_log_target_xi(&state, &f.data, &f.proj, 0, proj, XiPhiTarget::ClassOnly);
        for r in state.r.iter_mut() {
            if *r != 0 {
                *r = 2;
            }
        }
        let b = phi_log_target_xi(&state, &f.data, &f.proj, 0, proj, XiPhiTarget::ClassOnly);
        assert_eq!(a, b);
        let full = phi_log_target_xi(&state, &f.data, &f.proj, 0, proj, XiPhiTarget::Categorical);
        assert!(full < b);
        let _ = logistic(0.0);
    }
}
