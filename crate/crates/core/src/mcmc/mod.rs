//! Boundary-inflated binomial model with dynamic predictive-process random
//! effects, fitted by a Pólya-Gamma Metropolis-within-Gibbs sampler.

mod chain;
mod geweke;
mod io;
pub mod oracle;
mod predictors;
mod prior;
mod steps;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::SymMatrix;
use crate::randomkit::PgConfig;
use crate::spatial::{GppProjector, KnotSet, Point, SiteSet};

pub use chain::{
    gibbs_sweep, initial_state, run_chain, run_chain_with_knots, ChainRuntime, ComponentDraws,
    ParamLabel, PosteriorDraws,
};
pub use geweke::{geweke_check, GewekeConfig, GewekeEntry, GewekeReport};
pub use io::{fmt_f64, read_draws_binary, write_draws_binary, write_draws_long_csv, BinaryDraws, DRAWS_MAGIC, DRAWS_VERSION};
pub use predictors::{
    linear_predictors, log_binomial_pmf, log_softmax3, logistic, mixture_cdf, softplus,
    LinearPredictor,
};
pub use prior::{
    field_prior_log_density, random_walk_log_density_joint, random_walk_log_density_sequential,
    random_walk_quadratic_form, random_walk_trace_form,
};
pub use steps::{
    beta_conditional, field_conditional, gamma_conditional, phi_log_target_u,
    phi_log_target_xi, sample_beta, sample_gamma_k, sample_indicators, sample_phi_u,
    sample_phi_xi, sample_pg_binomial, sample_pg_multinomial, sample_tau_u, sample_tau_xi,
    sample_u0, sample_u_field, sample_xi0, sample_xi_field, tau_conditional, u_conditional,
    xi_conditional, FieldConditional, GaussianConditional, PhiStep,
};

/// One binomial count at a site and period.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    /// Zero-based period.
    pub period: usize,
    pub site: usize,
    pub location: Point,
    pub covariates: Vec<f64>,
    pub trials: u32,
    pub successes: u32,
}

/// Observations grouped by period, stored flat in period order.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelDataset {
    q: usize,
    offsets: Vec<usize>,
    sites: Vec<SiteSet>,
    site_ids: Vec<usize>,
    x: DMatrix<f64>,
    n: Vec<u32>,
    y: Vec<u32>,
}

impl PanelDataset {
    /// Observations may arrive in any order; within a period the input order is kept.
    pub fn new(periods: usize, observations: Vec<Observation>) -> Result<Self> {
        if periods == 0 {
            return Err(Error::DimensionMismatch("at least one period is required".into()));
        }
        let q = observations.first().map_or(0, |o| o.covariates.len());
        let mut by_period: Vec<Vec<Observation>> = vec![Vec::new(); periods];
        for o in observations {
            if o.period >= periods {
                return Err(Error::DimensionMismatch(format!(
                    "observation in period {} but only {periods} periods",
                    o.period
                )));
            }
            if o.covariates.len() != q {
                return Err(Error::DimensionMismatch(format!(
                    "covariate length {} differs from {q}",
                    o.covariates.len()
                )));
            }
            if o.trials == 0 || o.successes > o.trials {
                return Err(Error::DimensionMismatch(format!(
                    "invalid count {}/{} at period {} site {}",
                    o.successes, o.trials, o.period, o.site
                )));
            }
            if o.covariates.iter().chain(o.location.iter()).any(|v| !v.is_finite()) {
                return Err(Error::DimensionMismatch("non-finite covariate or location".into()));
            }
            by_period[o.period].push(o);
        }
        let total: usize = by_period.iter().map(Vec::len).sum();
        let mut offsets = vec![0];
        let mut sites = Vec::with_capacity(periods);
        let mut site_ids = Vec::with_capacity(total);
        let mut x = DMatrix::zeros(total, q);
        let mut n = Vec::with_capacity(total);
        let mut y = Vec::with_capacity(total);
        let mut row = 0;
        for obs in by_period {
            let mut coords = Vec::with_capacity(obs.len());
            for o in obs {
                coords.push(o.location);
                site_ids.push(o.site);
                for (j, v) in o.covariates.iter().enumerate() {
                    x[(row, j)] = *v;
                }
                n.push(o.trials);
                y.push(o.successes);
                row += 1;
            }
            sites.push(SiteSet::new(coords)?);
            offsets.push(row);
        }
        Ok(Self {
            q,
            offsets,
            sites,
            site_ids,
            x,
            n,
            y,
        })
    }

    /// Same layout with a new success vector.
    pub fn with_successes(&self, y: Vec<u32>) -> Result<Self> {
        if y.len() != self.y.len() {
            return Err(Error::DimensionMismatch(format!(
                "expected {} counts, got {}",
                self.y.len(),
                y.len()
            )));
        }
        if let Some(i) = (0..y.len()).find(|&i| y[i] > self.n[i]) {
            return Err(Error::DimensionMismatch(format!("count {} exceeds trials {}", y[i], self.n[i])));
        }
        Ok(Self { y, ..self.clone() })
    }

    pub fn num_periods(&self) -> usize {
        self.sites.len()
    }

    pub fn num_covariates(&self) -> usize {
        self.q
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    /// Rows of period `t` in the flat layout.
    pub fn period_range(&self, t: usize) -> std::ops::Range<usize> {
        self.offsets[t]..self.offsets[t + 1]
    }

    pub fn period_of(&self, row: usize) -> usize {
        self.offsets.partition_point(|&o| o <= row) - 1
    }

    pub fn sites_by_period(&self) -> &[SiteSet] {
        &self.sites
    }

    pub fn location(&self, row: usize) -> Point {
        let t = self.period_of(row);
        self.sites[t].coords[row - self.offsets[t]]
    }

    pub fn site_id(&self, row: usize) -> usize {
        self.site_ids[row]
    }

    /// Every sampled location over all periods, duplicates kept.
    pub fn pooled_sites(&self) -> SiteSet {
        SiteSet {
            coords: self.sites.iter().flat_map(|s| s.coords.iter().copied()).collect(),
        }
    }

    pub fn design(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn trials(&self) -> &[u32] {
        &self.n
    }

    pub fn successes(&self) -> &[u32] {
        &self.y
    }

    pub fn observation(&self, row: usize) -> Observation {
        Observation {
            period: self.period_of(row),
            site: self.site_ids[row],
            location: self.location(row),
            covariates: self.x.row(row).iter().copied().collect(),
            trials: self.n[row],
            successes: self.y[row],
        }
    }
}

/// Gamma prior in shape/rate form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaPrior {
    pub shape: f64,
    pub rate: f64,
}

impl Default for GammaPrior {
    fn default() -> Self {
        Self { shape: 1.0, rate: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Priors {
    pub beta_mean: DVector<f64>,
    pub beta_precision: SymMatrix,
    pub gamma_mean: [DVector<f64>; 2],
    pub gamma_precision: [SymMatrix; 2],
    pub tau_u: GammaPrior,
    pub tau_xi: [GammaPrior; 2],
    pub phi_lo: f64,
    pub phi_hi: f64,
}

impl Priors {
    /// Weakly informative defaults scaled to the spatial extent of `data`.
    pub fn default_for(data: &PanelDataset) -> Self {
        let q = data.num_covariates();
        let mut extent = data.pooled_sites().max_pairwise_distance();
        if !(extent > 0.0) {
            extent = 1.0;
        }
        let zero = DVector::zeros(q);
        let prec = SymMatrix::scaled_identity(q, 0.01);
        Self {
            beta_mean: zero.clone(),
            beta_precision: prec.clone(),
            gamma_mean: [zero.clone(), zero],
            gamma_precision: [prec.clone(), prec],
            tau_u: GammaPrior::default(),
            tau_xi: [GammaPrior::default(); 2],
            phi_lo: 0.05 * extent,
            phi_hi: 2.0 * extent,
        }
    }

    pub fn validate(&self, q: usize) -> Result<()> {
        let dims_ok = self.beta_mean.len() == q
            && self.beta_precision.dim() == q
            && self.gamma_mean.iter().all(|g| g.len() == q)
            && self.gamma_precision.iter().all(|g| g.dim() == q);
        if !dims_ok {
            return Err(Error::Config(format!("prior dimensions must match {q} covariates")));
        }
        for g in [self.tau_u, self.tau_xi[0], self.tau_xi[1]] {
            if !(g.shape > 0.0 && g.rate > 0.0 && g.shape.is_finite() && g.rate.is_finite()) {
                return Err(Error::Config(format!("gamma prior ({}, {}) must be positive", g.shape, g.rate)));
            }
        }
        if !(self.phi_lo > 0.0 && self.phi_lo < self.phi_hi && self.phi_hi.is_finite()) {
            return Err(Error::Config(format!(
                "range bounds ({}, {}) must satisfy 0 < lo < hi",
                self.phi_lo, self.phi_hi
            )));
        }
        for p in std::iter::once(&self.beta_precision).chain(self.gamma_precision.iter()) {
            crate::linalg::cholesky(p)
                .map_err(|_| Error::Config("prior precision must be positive definite".into()))?;
        }
        Ok(())
    }

    pub fn phi_midpoint(&self) -> f64 {
        0.5 * (self.phi_lo + self.phi_hi)
    }
}

/// Knot-level random walk with its origin, precision and range.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentField {
    /// `ū_1 … ū_T`.
    pub blocks: Vec<DVector<f64>>,
    /// `ū_0`.
    pub origin: DVector<f64>,
    pub tau: f64,
    pub phi: f64,
}

impl LatentField {
    pub fn zeros(periods: usize, knots: usize, tau: f64, phi: f64) -> Self {
        Self {
            blocks: vec![DVector::zeros(knots); periods],
            origin: DVector::zeros(knots),
            tau,
            phi,
        }
    }

    pub fn num_periods(&self) -> usize {
        self.blocks.len()
    }

    pub fn num_knots(&self) -> usize {
        self.origin.len()
    }

    /// Per-observation values `D̄_t ū_t` in the flat layout.
    pub fn site_values(&self, data: &PanelDataset, proj: &GppProjector) -> Vec<f64> {
        let mut out = Vec::with_capacity(data.len());
        for t in 0..data.num_periods() {
            out.extend(proj.project(t, &self.blocks[t]).iter());
        }
        out
    }
}

/// Full sampler state.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainState {
    pub beta: DVector<f64>,
    pub gamma: [DVector<f64>; 2],
    pub u: LatentField,
    pub xi: [LatentField; 2],
    /// Mixture class: 0 structural zero, 1 structural `n`, 2 binomial.
    pub r: Vec<u8>,
    pub omega: Vec<f64>,
    pub omega_k: [Vec<f64>; 2],
}

impl ChainState {
    pub fn check_invariants(&self, data: &PanelDataset, priors: &Priors) -> Result<()> {
        let y = data.successes();
        let n = data.trials();
        for (i, &r) in self.r.iter().enumerate() {
            let ok = match r {
                0 => y[i] == 0,
                1 => y[i] == n[i],
                2 => true,
                _ => false,
            };
            if !ok {
                return Err(Error::DimensionMismatch(format!("class {r} infeasible for {}/{}", y[i], n[i])));
            }
        }
        let omegas = self.omega.iter().chain(self.omega_k[0].iter()).chain(self.omega_k[1].iter());
        if omegas.into_iter().any(|w| !(*w > 0.0)) {
            return Err(Error::DimensionMismatch("non-positive PG latent".into()));
        }
        for f in std::iter::once(&self.u).chain(self.xi.iter()) {
            if !(f.tau > 0.0) || !(f.phi > priors.phi_lo && f.phi < priors.phi_hi) {
                return Err(Error::DimensionMismatch(format!("tau {} or phi {} out of range", f.tau, f.phi)));
            }
        }
        Ok(())
    }
}

/// Projectors for the three latent processes, kept in step with the state's ranges.
#[derive(Debug, Clone)]
pub struct Projectors {
    pub u: GppProjector,
    pub xi: [GppProjector; 2],
}

impl Projectors {
    pub fn build(data: &PanelDataset, knots: &KnotSet, state: &ChainState) -> Result<Self> {
        let sites = data.sites_by_period();
        Ok(Self {
            u: GppProjector::build(sites, knots, state.u.phi)?,
            xi: [
                GppProjector::build(sites, knots, state.xi[0].phi)?,
                GppProjector::build(sites, knots, state.xi[1].phi)?,
            ],
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    /// Boundary-inflated binomial.
    #[default]
    Bib,
    /// Plain binomial: no inflation classes.
    Bn,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Smoother {
    #[default]
    McCausland,
    Rue,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum PhiProposal {
    /// Gaussian walk on the logit of the rescaled range.
    #[default]
    Logit,
    /// Gaussian walk on the range itself; out-of-bounds proposals are rejected.
    Raw,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum XiPhiTarget {
    /// Probability of the sampled class for every observation.
    #[default]
    Categorical,
    /// Only observations in class `k` contribute `p_k`.
    ClassOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplerConfig {
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub model: ModelKind,
    pub smoother: Smoother,
    pub num_knots: usize,
    pub seed: u64,
    /// Mixed into every stream id so independent chains never share draws.
    pub stream: u64,
    pub phi_step: f64,
    pub phi_adapt: bool,
    pub phi_proposal: PhiProposal,
    pub xi_phi_target: XiPhiTarget,
    /// Skip step-2 PG draws for rows outside the binomial class.
    pub skip_inactive_pg: bool,
    pub pg_exact_cutoff: u32,
    pub pg_gaussian_above_cutoff: bool,
    /// Keep per-observation draws of `π`, `p_0`, `p_1` besides the CDF.
    pub store_components: bool,
    pub kmeans_restarts: usize,
    pub kmeans_max_iterations: usize,
    #[doc(hidden)]
    #[serde(skip)]
    pub kappa_scale: f64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            iterations: 3000,
            burn_in: 1000,
            thin: 1,
            model: ModelKind::Bib,
            smoother: Smoother::McCausland,
            num_knots: 25,
            seed: 1,
            stream: 0,
            phi_step: 0.3,
            phi_adapt: false,
            phi_proposal: PhiProposal::Logit,
            xi_phi_target: XiPhiTarget::Categorical,
            skip_inactive_pg: false,
            pg_exact_cutoff: 200,
            pg_gaussian_above_cutoff: false,
            store_components: true,
            kmeans_restarts: 50,
            kmeans_max_iterations: 300,
            kappa_scale: 1.0,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 || self.burn_in >= self.iterations {
            return Err(Error::Config(format!(
                "need iterations ({}) > burn_in ({})",
                self.iterations, self.burn_in
            )));
        }
        if self.thin == 0 {
            return Err(Error::Config("thin must be at least 1".into()));
        }
        if self.num_knots == 0 {
            return Err(Error::Config("at least one knot is required".into()));
        }
        if !(self.phi_step >= 0.0 && self.phi_step.is_finite()) {
            return Err(Error::Config(format!("phi_step {} must be finite and >= 0", self.phi_step)));
        }
        if self.kmeans_restarts == 0 || self.kmeans_max_iterations == 0 {
            return Err(Error::Config("k-means restarts and iterations must be positive".into()));
        }
        Ok(())
    }

    pub fn retained_draws(&self) -> usize {
        (self.iterations - self.burn_in) / self.thin
    }

    pub fn pg_config(&self) -> PgConfig {
        PgConfig {
            exact_cutoff: self.pg_exact_cutoff,
            gaussian_above_cutoff: self.pg_gaussian_above_cutoff,
        }
    }

    pub fn kmeans_options(&self) -> crate::spatial::KMeansOptions {
        crate::spatial::KMeansOptions {
            restarts: self.kmeans_restarts,
            max_iterations: self.kmeans_max_iterations,
        }
    }
}


#[cfg(test)]
mod tests {
    use super::*;

    fn obs(period: usize, y: u32, n: u32) -> Observation {
        Observation {
            period,
            site: 0,
            location: [period as f64, y as f64],
            covariates: vec![1.0, y as f64],
            trials: n,
            successes: y,
        }
    }

    #[test]
    fn dataset_groups_by_period() {
        let d = PanelDataset::new(3, vec![obs(2, 1, 2), obs(0, 0, 3), obs(2, 2, 2)]).unwrap();
        assert_eq!(d.len(), 3);
        assert_eq!(d.period_range(0), 0..1);
        assert_eq!(d.period_range(1), 1..1);
        assert_eq!(d.period_range(2), 1..3);
        assert_eq!(d.period_of(0), 0);
        assert_eq!(d.period_of(2), 2);
        assert_eq!(d.successes(), &[0, 1, 2]);
        assert_eq!(d.observation(2), obs(2, 2, 2));
        assert_eq!(d.pooled_sites().len(), 3);
    }

    #[test]
    fn dataset_rejects_bad_rows() {
        assert!(PanelDataset::new(1, vec![obs(0, 3, 2)]).is_err());
        assert!(PanelDataset::new(1, vec![obs(0, 0, 0)]).is_err());
        assert!(PanelDataset::new(1, vec![obs(1, 0, 1)]).is_err());
        let mut bad = obs(0, 0, 1);
        bad.covariates.push(2.0);
        assert!(PanelDataset::new(1, vec![obs(0, 0, 1), bad]).is_err());
        let d = PanelDataset::new(1, vec![obs(0, 0, 1)]).unwrap();
        assert!(d.with_successes(vec![2]).is_err());
        assert_eq!(d.with_successes(vec![1]).unwrap().successes(), &[1]);
    }

    #[test]
    fn default_priors_scale_with_extent() {
        let d = PanelDataset::new(1, vec![obs(0, 0, 1), obs(0, 3, 4)]).unwrap();
        let p = Priors::default_for(&d);
        assert!((p.phi_lo - 0.15).abs() < 1e-12);
        assert!((p.phi_hi - 6.0).abs() < 1e-12);
        assert!(p.validate(2).is_ok());
        assert!(p.validate(3).is_err());
        let mut bad = p.clone();
        bad.phi_lo = bad.phi_hi;
        assert!(bad.validate(2).is_err());
    }

    #[test]
    fn config_bookkeeping() {
        let cfg = SamplerConfig {
            iterations: 1000,
            burn_in: 500,
            ..Default::default()
        };
        assert_eq!(cfg.retained_draws(), 500);
        assert!(SamplerConfig { burn_in: 1000, iterations: 1000, ..Default::default() }.validate().is_err());
        assert!(SamplerConfig { thin: 0, ..Default::default() }.validate().is_err());
    }
}
