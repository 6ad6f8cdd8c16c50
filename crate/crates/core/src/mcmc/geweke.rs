//! Joint-distribution check: marginal-conditional forward simulation against
//! a successive-conditional chain that alternates a sweep with a fresh draw
//! of the data given the parameters.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::Serialize;

use super::chain::{gibbs_sweep, ChainRuntime};
use super::predictors::{log_softmax3, logistic, logits};
use super::steps::GaussianConditional;
use super::{
    ChainState, GammaPrior, LatentField, ModelKind, Observation, PanelDataset, Priors, Projectors,
    SamplerConfig,
};
use crate::error::Result;
use crate::linalg::{standard_normal_vec, SymMatrix};
use crate::randomkit::{draw_binomial, draw_categorical, draw_gamma, draw_normal, RngStream};
use crate::spatial::{select_knots, GppProjector, KnotSet};

#[derive(Debug, Clone, Serialize)]
pub struct GewekeConfig {
    pub cycles: usize,
    pub periods: usize,
    pub sites_per_period: usize,
    pub knots: usize,
    pub max_trials: u32,
    pub seed: u64,
    /// Batches for the autocorrelation-robust standard error of the chain means.
    pub batches: usize,
    /// Multiplies the binomial `κ` inside the sampler; anything but 1 is a broken sampler.
    pub kappa_scale: f64,
}

impl Default for GewekeConfig {
    fn default() -> Self {
        Self {
            cycles: 10_000,
            periods: 3,
            sites_per_period: 4,
            knots: 2,
            max_trials: 5,
            seed: 2024,
            batches: 50,
            kappa_scale: 1.0,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct GewekeEntry {
    pub name: String,
    pub forward_mean: f64,
    pub chain_mean: f64,
    pub z: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GewekeReport {
    pub entries: Vec<GewekeEntry>,
}

impl GewekeReport {
    pub fn max_abs_z(&self) -> f64 {
        self.entries.iter().map(|e| e.z.abs()).fold(0.0, f64::max)
    }
}

fn design(cfg: &GewekeConfig, rng: &mut RngStream) -> PanelDataset {
    let mut obs = Vec::new();
    for t in 0..cfg.periods {
        for i in 0..cfg.sites_per_period {
            let n = rng.random_range(1..=cfg.max_trials);
            obs.push(Observation {
                period: t,
                site: i,
                location: [rng.random(), rng.random()],
                covariates: vec![1.0, draw_normal(rng)],
                trials: n,
                successes: 0,
            });
        }
    }
    PanelDataset::new(cfg.periods, obs).expect("valid synthetic design")
}

fn geweke_priors(data: &PanelDataset) -> Priors {
    let tight = GammaPrior { shape: 3.0, rate: 2.0 };
    Priors {
        beta_mean: DVector::zeros(2),
        beta_precision: SymMatrix::identity(2),
        gamma_mean: [DVector::from_vec(vec![-1.0, 0.0]), DVector::from_vec(vec![-1.0, 0.0])],
        gamma_precision: [SymMatrix::identity(2), SymMatrix::identity(2)],
        tau_u: tight,
        tau_xi: [tight; 2],
        ..Priors::default_for(data)
    }
}

fn draw_prior_field(
    data: &PanelDataset,
    knots: &KnotSet,
    priors: &Priors,
    prior: GammaPrior,
    rng: &mut RngStream,
) -> Result<(LatentField, GppProjector)> {
    let tau = draw_gamma(prior.shape, prior.rate, rng)?;
    let phi = priors.phi_lo + (priors.phi_hi - priors.phi_lo) * rng.random::<f64>();
    let proj = GppProjector::build(data.sites_by_period(), knots, phi)?;
    let m = knots.len();
    let scale = tau.sqrt().recip();
    let step = |rng: &mut RngStream| proj.knot_cholesky().covariance_noise(&standard_normal_vec(m, rng)) * scale;
    let origin = step(rng);
    let mut blocks = Vec::with_capacity(data.num_periods());
    let mut prev = origin.clone();
    for _ in 0..data.num_periods() {
        prev = &prev + step(rng);
        blocks.push(prev.clone());
    }
    Ok((LatentField { blocks, origin, tau, phi }, proj))
}

fn draw_prior_gaussian(mean: &DVector<f64>, prec: &SymMatrix, rng: &mut RngStream) -> Result<DVector<f64>> {
    GaussianConditional {
        precision: prec.clone(),
        linear: prec.as_matrix() * mean,
    }
    .sample(rng)
}

fn draw_prior(
    data: &PanelDataset,
    knots: &KnotSet,
    priors: &Priors,
    rng: &mut RngStream,
) -> Result<(ChainState, Projectors)> {
    let beta = draw_prior_gaussian(&priors.beta_mean, &priors.beta_precision, rng)?;
    let g0 = draw_prior_gaussian(&priors.gamma_mean[0], &priors.gamma_precision[0], rng)?;
    let g1 = draw_prior_gaussian(&priors.gamma_mean[1], &priors.gamma_precision[1], rng)?;
    let (u, pu) = draw_prior_field(data, knots, priors, priors.tau_u, rng)?;
    let (x0, p0) = draw_prior_field(data, knots, priors, priors.tau_xi[0], rng)?;
    let (x1, p1) = draw_prior_field(data, knots, priors, priors.tau_xi[1], rng)?;
    let n = data.len();
    let state = ChainState {
        beta,
        gamma: [g0, g1],
        u,
        xi: [x0, x1],
        r: vec![2; n],
        omega: vec![1.0; n],
        omega_k: [vec![0.25; n], vec![0.25; n]],
    };
    Ok((state, Projectors { u: pu, xi: [p0, p1] }))
}

/// Draws `(r, y)` given the parameters; returns the dataset carrying the new `y`.
fn draw_data(
    state: &mut ChainState,
    data: &PanelDataset,
    proj: &Projectors,
    rng: &mut RngStream,
) -> Result<PanelDataset> {
    let l = logits(state, data, proj);
    let mut y = Vec::with_capacity(data.len());
    for i in 0..data.len() {
        let lp = log_softmax3(l.psi[0][i], l.psi[1][i]);
        let r = draw_categorical(&lp.map(f64::exp), rng)?;
        let n = data.trials()[i];
        state.r[i] = r as u8;
        y.push(match r {
            0 => 0,
            1 => n,
            _ => draw_binomial(n, logistic(l.eta[i]), rng),
        });
    }
    data.with_successes(y)
}

fn statistics(s: &ChainState) -> Vec<f64> {
    let mut v: Vec<f64> = s.beta.iter().copied().collect();
    v.extend(s.beta.iter().map(|b| b * b));
    v.extend(s.gamma[0].iter());
    v.extend(s.gamma[1].iter());
    v.extend([s.u.tau, s.xi[0].tau, s.xi[1].tau, s.u.phi, s.xi[0].phi, s.xi[1].phi]);
    v
}

const NAMES: [&str; 14] = [
    "beta[0]", "beta[1]", "beta[0]^2", "beta[1]^2", "gamma0[0]", "gamma0[1]", "gamma1[0]",
    "gamma1[1]", "tau_u", "tau_xi0", "tau_xi1", "phi_u", "phi_xi0", "phi_xi1",
];

fn batch_means_se(x: &[f64], batches: usize) -> f64 {
    let size = x.len() / batches;
    let means: Vec<f64> = x.chunks_exact(size).map(|c| c.iter().sum::<f64>() / size as f64).collect();
    let b = means.len() as f64;
    let grand = means.iter().sum::<f64>() / b;
    let var = means.iter().map(|m| (m - grand).powi(2)).sum::<f64>() / (b - 1.0);
    (var / b).sqrt()
}

pub fn geweke_check(cfg: &GewekeConfig) -> Result<GewekeReport> {
    let mut rng = RngStream::derived(cfg.seed, &[0x6765_7765]);
    let mut data = design(cfg, &mut rng);
    let priors = geweke_priors(&data);
    let knots = select_knots(&data.pooled_sites(), cfg.knots, &mut rng)?;
    let sampler = SamplerConfig {
        iterations: cfg.cycles + 1,
        burn_in: 0,
        model: ModelKind::Bib,
        num_knots: cfg.knots,
        kappa_scale: cfg.kappa_scale,
        ..SamplerConfig::default()
    };

    let mut fwd_rng = RngStream::derived(cfg.seed, &[1]);
    let mut forward: Vec<Vec<f64>> = Vec::with_capacity(cfg.cycles);
    for _ in 0..cfg.cycles {
        let (s, _) = draw_prior(&data, &knots, &priors, &mut fwd_rng)?;
        forward.push(statistics(&s));
    }

    let mut sc_rng = RngStream::derived(cfg.seed, &[2]);
    let (mut state, proj) = draw_prior(&data, &knots, &priors, &mut sc_rng)?;
    data = draw_data(&mut state, &data, &proj, &mut sc_rng)?;
    let mut rt = ChainRuntime::new(&data, &knots, &state, &sampler)?;
    let mut chain: Vec<Vec<f64>> = Vec::with_capacity(cfg.cycles);
    for _ in 0..cfg.cycles {
        gibbs_sweep(&mut state, &data, &priors, &mut rt, &sampler, &mut sc_rng)?;
        data = draw_data(&mut state, &data, &rt.projectors, &mut sc_rng)?;
        chain.push(statistics(&state));
    }

    let f = DMatrix::from_fn(cfg.cycles, NAMES.len(), |i, j| forward[i][j]);
    let g = DMatrix::from_fn(cfg.cycles, NAMES.len(), |i, j| chain[i][j]);
    let n = cfg.cycles as f64;
    let entries = NAMES
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let fc: Vec<f64> = f.column(j).iter().copied().collect();
            let gc: Vec<f64> = g.column(j).iter().copied().collect();
            let fm = fc.iter().sum::<f64>() / n;
            let gm = gc.iter().sum::<f64>() / n;
            let fvar = fc.iter().map(|v| (v - fm).powi(2)).sum::<f64>() / (n - 1.0);
            let se = (fvar / n + batch_means_se(&gc, cfg.batches).powi(2)).sqrt();
            GewekeEntry {
                name: (*name).to_string(),
                forward_mean: fm,
                chain_mean: gm,
                z: (fm - gm) / se,
            }
        })
        .collect();
    Ok(GewekeReport { entries })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn short_run_is_reproducible() {
        let cfg = GewekeConfig {
            cycles: 200,
            batches: 10,
            ..Default::default()
        };
        let a = geweke_check(&cfg).unwrap();
        let b = geweke_check(&cfg).unwrap();
        assert_eq!(a.entries.len(), NAMES.len());
        for (x, y) in a.entries.iter().zip(&b.entries) {
            assert_eq!(x.z, y.z);
        }
    }

    #[test]
    fn batch_means_of_constant_blocks() {
        let x: Vec<f64> = (0..100).map(|i| (i / 10) as f64).collect();
        let se = batch_means_se(&x, 10);
        let want = (((0..10).map(|m| (m as f64 - 4.5).powi(2)).sum::<f64>() / 9.0) / 10.0).sqrt();
        assert!((se - want).abs() < 1e-12);
    }
}
