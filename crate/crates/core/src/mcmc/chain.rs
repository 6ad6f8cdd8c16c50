use nalgebra::DVector;
use rand::Rng;
use serde::Serialize;

use super::predictors::{logits, mixture_cdf, LinearPredictor};
use super::steps::{
    sample_beta, sample_gamma_k, sample_indicators, sample_pg_binomial, sample_pg_multinomial,
    sample_phi_u, sample_phi_xi, sample_tau_u, sample_tau_xi, sample_u0, sample_u_field,
    sample_xi0, sample_xi_field, PhiStep,
};
use super::{
    ChainState, LatentField, ModelKind, PanelDataset, Priors, Projectors, SamplerConfig,
};
use crate::error::Result;
use crate::randomkit::{pg_mean, RngStream};
use crate::spatial::{select_knots_with, KnotSet};

const KNOT_STREAM: u64 = 0x6b6e_6f74;
const CHAIN_STREAM: u64 = 0x6368_6169;
const TARGET_ACCEPTANCE: f64 = 0.44;

/// Neutral starting point: zero effects, unit precisions, mid-range ranges.
pub fn initial_state<R: Rng + ?Sized>(
    data: &PanelDataset,
    priors: &Priors,
    num_knots: usize,
    rng: &mut R,
) -> ChainState {
    initial_state_for(data, priors, num_knots, ModelKind::Bib, rng)
}

fn initial_state_for<R: Rng + ?Sized>(
    data: &PanelDataset,
    priors: &Priors,
    num_knots: usize,
    model: ModelKind,
    rng: &mut R,
) -> ChainState {
    let q = data.num_covariates();
    let t = data.num_periods();
    let phi = priors.phi_midpoint();
    let field = LatentField::zeros(t, num_knots, 1.0, phi);
    let r = data
        .successes()
        .iter()
        .zip(data.trials())
        .map(|(&y, &n)| {
            if model == ModelKind::Bn {
                return 2;
            }
            let boundary = if y == 0 {
                0
            } else if y == n {
                1
            } else {
                return 2;
            };
            if rng.random::<bool>() {
                boundary
            } else {
                2
            }
        })
        .collect();
    ChainState {
        beta: DVector::zeros(q),
        gamma: [DVector::zeros(q), DVector::zeros(q)],
        u: field.clone(),
        xi: [field.clone(), field],
        r,
        omega: data.trials().iter().map(|&n| pg_mean(n as f64, 0.0)).collect(),
        omega_k: [vec![0.25; data.len()], vec![0.25; data.len()]],
    }
}

/// Mutable sampler machinery that travels with a state: projectors and range tuning.
#[derive(Debug, Clone)]
pub struct ChainRuntime {
    pub projectors: Projectors,
    /// Log proposal scale for `φ_u`, `φ_ξ0`, `φ_ξ1`.
    pub log_steps: [f64; 3],
    pub proposed: [usize; 3],
    pub accepted: [usize; 3],
    pub iteration: usize,
}

impl ChainRuntime {
    pub fn new(data: &PanelDataset, knots: &KnotSet, state: &ChainState, cfg: &SamplerConfig) -> Result<Self> {
        Ok(Self {
            projectors: Projectors::build(data, knots, state)?,
            log_steps: [cfg.phi_step.ln(); 3],
            proposed: [0; 3],
            accepted: [0; 3],
            iteration: 0,
        })
    }

    pub fn acceptance_rates(&self) -> [f64; 3] {
        [0, 1, 2].map(|j| {
            if self.proposed[j] == 0 {
                0.0
            } else {
                self.accepted[j] as f64 / self.proposed[j] as f64
            }
        })
    }

    fn record(&mut self, j: usize, accepted: bool, adapt: bool) {
        self.proposed[j] += 1;
        self.accepted[j] += accepted as usize;
        if adapt {
            let gain = (self.iteration as f64 + 1.0).powf(-0.6);
            self.log_steps[j] += gain * (accepted as u8 as f64 - TARGET_ACCEPTANCE);
        }
    }

    fn reset_counts(&mut self) {
        self.proposed = [0; 3];
        self.accepted = [0; 3];
    }
}

/// One full sweep: indicators, the binomial block, then both inflation blocks.
pub fn gibbs_sweep<R: Rng + ?Sized>(
    state: &mut ChainState,
    data: &PanelDataset,
    priors: &Priors,
    rt: &mut ChainRuntime,
    cfg: &SamplerConfig,
    rng: &mut R,
) -> Result<()> {
    let bib = cfg.model == ModelKind::Bib;
    let adapt = cfg.phi_adapt && rt.iteration < cfg.burn_in;
    let step = |ls: f64| PhiStep::new(priors, ls.exp(), cfg.phi_proposal);
    if bib {
        sample_indicators(state, data, &rt.projectors, rng)?;
    }
    sample_pg_binomial(state, data, &rt.projectors, cfg, rng)?;
    sample_beta(state, data, &rt.projectors, priors, cfg, rng)?;
    sample_u_field(state, data, &rt.projectors, cfg, rng)?;
    sample_u0(state, &rt.projectors, rng);
    sample_tau_u(state, &rt.projectors, priors, rng)?;
    let acc = sample_phi_u(state, data, &mut rt.projectors, &step(rt.log_steps[0]), rng)?;
    rt.record(0, acc, adapt);
    if bib {
        for k in 0..2 {
            sample_pg_multinomial(state, data, &rt.projectors, k, rng)?;
            sample_gamma_k(state, data, &rt.projectors, priors, k, rng)?;
            sample_xi_field(state, data, &rt.projectors, k, cfg.smoother, rng)?;
            sample_xi0(state, &rt.projectors, k, rng);
            sample_tau_xi(state, &rt.projectors, priors, k, rng)?;
            let s = step(rt.log_steps[k + 1]);
            let acc = sample_phi_xi(state, data, &mut rt.projectors, k, &s, cfg.xi_phi_target, rng)?;
            rt.record(k + 1, acc, adapt);
        }
    }
    rt.iteration += 1;
    debug_assert!(state.check_invariants(data, priors).is_ok());
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ParamLabel {
    pub name: String,
    pub index: usize,
}

impl std::fmt::Display for ParamLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}[{}]", self.name, self.index)
    }
}

/// Per-observation draws of the mixture components, `draws x N` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ComponentDraws {
    pub pi: Vec<f64>,
    pub p0: Vec<f64>,
    pub p1: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct PosteriorDraws {
    pub model: ModelKind,
    /// One-based sweep index of each retained draw.
    pub iterations: Vec<usize>,
    pub labels: Vec<ParamLabel>,
    params: Vec<f64>,
    num_obs: usize,
    cdf: Vec<f64>,
    pub components: Option<ComponentDraws>,
    /// Post-burn-in acceptance rates for `φ_u`, `φ_ξ0`, `φ_ξ1`.
    pub acceptance: [f64; 3],
    pub knots: KnotSet,
}

impl PosteriorDraws {
    pub fn num_draws(&self) -> usize {
        self.iterations.len()
    }

    pub fn num_obs(&self) -> usize {
        self.num_obs
    }

    pub fn param_row(&self, draw: usize) -> &[f64] {
        let p = self.labels.len();
        &self.params[draw * p..(draw + 1) * p]
    }

    pub fn param_column(&self, col: usize) -> Vec<f64> {
        (0..self.num_draws()).map(|d| self.param_row(d)[col]).collect()
    }

    pub fn param_index(&self, name: &str, index: usize) -> Option<usize> {
        self.labels.iter().position(|l| l.name == name && l.index == index)
    }

    /// Mixture CDF values of every observation at one retained draw.
    pub fn cdf_row(&self, draw: usize) -> &[f64] {
        &self.cdf[draw * self.num_obs..(draw + 1) * self.num_obs]
    }

    pub fn cdf_for_obs(&self, obs: usize) -> Vec<f64> {
        (0..self.num_draws()).map(|d| self.cdf[d * self.num_obs + obs]).collect()
    }

    pub fn posterior_mean(&self, col: usize) -> f64 {
        self.param_column(col).iter().sum::<f64>() / self.num_draws() as f64
    }
}

fn param_labels(q: usize, model: ModelKind) -> Vec<ParamLabel> {
    let l = |name: &str, index| ParamLabel {
        name: name.into(),
        index,
    };
    let mut out: Vec<ParamLabel> = (0..q).map(|j| l("beta", j)).collect();
    if model == ModelKind::Bib {
        out.extend((0..q).map(|j| l("gamma0", j)));
        out.extend((0..q).map(|j| l("gamma1", j)));
    }
    out.push(l("tau_u", 0));
    out.push(l("phi_u", 0));
    if model == ModelKind::Bib {
        out.extend(["tau_xi0", "phi_xi0", "tau_xi1", "phi_xi1"].map(|n| l(n, 0)));
    }
    out
}

fn param_values(state: &ChainState, model: ModelKind, out: &mut Vec<f64>) {
    out.extend(state.beta.iter());
    if model == ModelKind::Bib {
        out.extend(state.gamma[0].iter());
        out.extend(state.gamma[1].iter());
    }
    out.extend([state.u.tau, state.u.phi]);
    if model == ModelKind::Bib {
        out.extend([state.xi[0].tau, state.xi[0].phi, state.xi[1].tau, state.xi[1].phi]);
    }
}

/// Selects knots from the pooled sites, then runs the chain.
pub fn run_chain(data: &PanelDataset, priors: &Priors, cfg: &SamplerConfig) -> Result<PosteriorDraws> {
    cfg.validate()?;
    let mut rng = RngStream::derived(cfg.seed, &[cfg.stream, KNOT_STREAM]);
    let knots = select_knots_with(&data.pooled_sites(), cfg.num_knots, cfg.kmeans_options(), &mut rng)?;
    run_chain_with_knots(data, priors, cfg, &knots)
}

pub fn run_chain_with_knots(
    data: &PanelDataset,
    priors: &Priors,
    cfg: &SamplerConfig,
    knots: &KnotSet,
) -> Result<PosteriorDraws> {
    cfg.validate()?;
    priors.validate(data.num_covariates())?;
    let mut rng = RngStream::derived(cfg.seed, &[cfg.stream, CHAIN_STREAM]);
    let mut state = initial_state_for(data, priors, knots.len(), cfg.model, &mut rng);
    let mut rt = ChainRuntime::new(data, knots, &state, cfg)?;
    let model = cfg.model;
    let labels = param_labels(data.num_covariates(), model);
    let kept = cfg.retained_draws();
    let n = data.len();
    let mut params = Vec::with_capacity(kept * labels.len());
    let mut cdf = Vec::with_capacity(kept * n);
    let mut comps = cfg.store_components.then(|| ComponentDraws {
        pi: Vec::with_capacity(kept * n),
        p0: Vec::with_capacity(kept * n),
        p1: Vec::with_capacity(kept * n),
    });
    let mut iterations = Vec::with_capacity(kept);
    for it in 0..cfg.iterations {
        if it == cfg.burn_in {
            rt.reset_counts();
        }
        gibbs_sweep(&mut state, data, priors, &mut rt, cfg, &mut rng).map_err(|e| e.at_iteration(it + 1))?;
        if it < cfg.burn_in || !(it + 1 - cfg.burn_in).is_multiple_of(cfg.thin) || iterations.len() == kept {
            continue;
        }
        iterations.push(it + 1);
        param_values(&state, model, &mut params);
        let l = logits(&state, data, &rt.projectors);
        for i in 0..n {
            let (psi0, psi1) = match model {
                ModelKind::Bib => (l.psi[0][i], l.psi[1][i]),
                ModelKind::Bn => (f64::NEG_INFINITY, f64::NEG_INFINITY),
            };
            cdf.push(mixture_cdf(l.eta[i], psi0, psi1));
            if let Some(c) = comps.as_mut() {
                let lp = LinearPredictor::from_logits(l.eta[i], psi0, psi1);
                c.pi.push(lp.pi);
                c.p0.push(lp.p0);
                c.p1.push(lp.p1);
            }
        }
    }
    Ok(PosteriorDraws {
        model,
        iterations,
        labels,
        params,
        num_obs: n,
        cdf,
        components: comps,
        acceptance: rt.acceptance_rates(),
        knots: knots.clone(),
    })
}
