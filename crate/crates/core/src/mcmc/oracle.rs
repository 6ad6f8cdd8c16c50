//! Brute-force reference densities for the Gibbs conditionals.
//!
//! Each oracle evaluates prior × augmented likelihood directly from the
//! model definition, without the precision/linear-term bookkeeping used by
//! the sampler. Agreement "up to a constant" means the difference between
//! the sampler's log-kernel and the oracle is the same at every point.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::Serialize;

use super::prior::{random_walk_log_density_joint, random_walk_log_density_sequential, random_walk_quadratic_form, random_walk_trace_form};
use super::steps::{beta_conditional, gamma_conditional, tau_conditional, u_conditional, xi_conditional};
use super::{initial_state, ChainState, GammaPrior, LatentField, Observation, PanelDataset, Priors, Projectors, SamplerConfig};
use crate::linalg::{HOperator, SymMatrix};
use crate::randomkit::{draw_binomial, draw_normal, RngStream};
use crate::spatial::{knot_covariance, select_knots, KnotSet};

/// Small random panel with intercept + one covariate and a mix of boundary counts.
pub fn toy_dataset(periods: usize, per_period: usize, max_n: u32, seed: u64) -> PanelDataset {
    let mut rng = RngStream::new(seed, 99);
    let mut obs = Vec::new();
    for t in 0..periods {
        for i in 0..per_period {
            let n = rng.random_range(1..=max_n);
            let p: f64 = rng.random();
            let y = match rng.random_range(0..4) {
                0 => 0,
                1 => n,
                _ => draw_binomial(n, p, &mut rng),
            };
            obs.push(Observation {
                period: t,
                site: i,
                location: [rng.random(), rng.random()],
                covariates: vec![1.0, 0.5 * draw_normal(&mut rng)],
                trials: n,
                successes: y,
            });
        }
    }
    PanelDataset::new(periods, obs).expect("valid toy design")
}

/// A random state on a small instance, with nonzero fields and latents.
#[derive(Debug, Clone)]
pub struct OracleFixture {
    pub data: PanelDataset,
    pub priors: Priors,
    pub state: ChainState,
    pub proj: Projectors,
    pub cfg: SamplerConfig,
}

impl OracleFixture {
    pub fn new(periods: usize, per: usize, m: usize, seed: u64) -> Self {
        let data = toy_dataset(periods, per, 6, seed);
        let mut priors = Priors::default_for(&data);
        priors.beta_mean = DVector::from_vec(vec![0.3, -0.2]);
        priors.beta_precision = SymMatrix::new(DMatrix::from_row_slice(2, 2, &[1.5, 0.2, 0.2, 0.8])).expect("symmetric");
        let mut rng = RngStream::new(seed, 1);
        let knots = select_knots(&data.pooled_sites(), m, &mut rng).expect("enough sites");
        let cfg = SamplerConfig::default();
        let mut state = initial_state(&data, &priors, m, &mut rng);
        let mut v = |len: usize| DVector::from_fn(len, |_, _| draw_normal(&mut rng));
        state.beta = v(2);
        state.gamma = [v(2), v(2)];
        for f in std::iter::once(&mut state.u).chain(state.xi.iter_mut()) {
            f.origin = v(m);
            f.blocks = (0..periods).map(|_| v(m)).collect();
            f.tau = 1.7;
        }
        let mut rng = RngStream::new(seed, 2);
        state.omega = state.omega.iter().map(|_| 0.1 + rng.random::<f64>()).collect();
        for k in 0..2 {
            state.omega_k[k] = state.omega_k[k].iter().map(|_| 0.1 + rng.random::<f64>()).collect();
        }
        let proj = Projectors::build(&data, &knots, &state).expect("distinct knots");
        Self {
            data,
            priors,
            state,
            proj,
            cfg,
        }
    }

    /// Prior × augmented likelihood for β.
    pub fn brute_beta(&self, beta: &DVector<f64>) -> f64 {
        let d = beta - &self.priors.beta_mean;
        let mut lp = -0.5 * (self.priors.beta_precision.as_matrix() * &d).dot(&d);
        let u = self.state.u.site_values(&self.data, &self.proj.u);
        for i in 0..self.data.len() {
            if self.state.r[i] != 2 {
                continue;
            }
            let eta = (self.data.design().row(i) * beta)[0] + u[i];
            let kappa = self.data.successes()[i] as f64 - self.data.trials()[i] as f64 / 2.0;
            lp += kappa * eta - 0.5 * self.state.omega[i] * eta * eta;
        }
        lp
    }

    fn multinomial_term(&self, k: usize, i: usize, psi: f64) -> f64 {
        let o = 1 - k;
        let xo = self.state.xi[o].site_values(&self.data, &self.proj.xi[o]);
        let psi_o = (self.data.design().row(i) * &self.state.gamma[o])[0] + xo[i];
        let arg = psi - (1.0 + psi_o.exp()).ln();
        let kappa = if self.state.r[i] as usize == k { 0.5 } else { -0.5 };
        kappa * arg - 0.5 * self.state.omega_k[k][i] * arg * arg
    }

    /// Prior × augmented likelihood for `γ_k`.
    pub fn brute_gamma(&self, k: usize, gamma: &DVector<f64>) -> f64 {
        let d = gamma - &self.priors.gamma_mean[k];
        let mut lp = -0.5 * (self.priors.gamma_precision[k].as_matrix() * &d).dot(&d);
        let xi = self.state.xi[k].site_values(&self.data, &self.proj.xi[k]);
        for i in 0..self.data.len() {
            let psi = (self.data.design().row(i) * gamma)[0] + xi[i];
            lp += self.multinomial_term(k, i, psi);
        }
        lp
    }

    /// Dense random-walk prior plus augmented likelihood for `ū` (`None`) or `ξ̄_k`.
    pub fn brute_field(&self, which: Option<usize>, blocks: &[DVector<f64>]) -> f64 {
        let (field, proj) = match which {
            None => (&self.state.u, &self.proj.u),
            Some(k) => (&self.state.xi[k], &self.proj.xi[k]),
        };
        let t_len = blocks.len();
        let prior_prec = HOperator::new(t_len).gram().kronecker(proj.knot_precision()) * field.tau;
        let x = DVector::from_iterator(prior_prec.nrows(), blocks.iter().flat_map(|b| b.iter().copied()));
        let mean = DVector::from_iterator(prior_prec.nrows(), (0..t_len).flat_map(|_| field.origin.iter().copied()));
        let d = &x - &mean;
        let mut lp = -0.5 * (&prior_prec * &d).dot(&d);
        let trial = LatentField {
            blocks: blocks.to_vec(),
            ..field.clone()
        };
        let vals = trial.site_values(&self.data, proj);
        for i in 0..self.data.len() {
            let xrow = self.data.design().row(i);
            match which {
                None => {
                    if self.state.r[i] != 2 {
                        continue;
                    }
                    let eta = (xrow * &self.state.beta)[0] + vals[i];
                    let kappa = self.data.successes()[i] as f64 - self.data.trials()[i] as f64 / 2.0;
                    lp += kappa * eta - 0.5 * self.state.omega[i] * eta * eta;
                }
                Some(k) => {
                    let psi = (xrow * &self.state.gamma[k])[0] + vals[i];
                    lp += self.multinomial_term(k, i, psi);
                }
            }
        }
        lp
    }
}

/// Largest deviation of `diffs` from its first entry, relative to `max(|first|, 1)`.
pub fn constant_spread(diffs: &[f64]) -> f64 {
    let first = diffs[0];
    diffs.iter().map(|d| (d - first).abs()).fold(0.0, f64::max) / first.abs().max(1.0)
}

#[derive(Debug, Clone, Serialize)]
pub struct OracleCheck {
    pub name: String,
    /// Worst discrepancy, already scaled as the tolerance expects.
    pub deviation: f64,
    pub tolerance: f64,
}

impl OracleCheck {
    pub fn passed(&self) -> bool {
        self.deviation <= self.tolerance
    }
}

const KERNEL_TOL: f64 = 1e-8;

/// Gaussian conditionals against the brute-force densities at `points` random points each.
pub fn gaussian_conditional_checks(points: usize, seed: u64) -> Vec<OracleCheck> {
    let mut out = Vec::new();
    let f = OracleFixture::new(3, 4, 2, seed);
    let beta = beta_conditional(&f.state, &f.data, &f.proj, &f.priors, &f.cfg);
    let mut rng = RngStream::new(seed, 10);
    let diffs: Vec<f64> = (0..points)
        .map(|_| {
            let b = DVector::from_fn(2, |_, _| 3.0 * draw_normal(&mut rng));
            beta.log_kernel(&b) - f.brute_beta(&b)
        })
        .collect();
    out.push(OracleCheck {
        name: "beta".into(),
        deviation: constant_spread(&diffs),
        tolerance: KERNEL_TOL,
    });
    for k in 0..2 {
        let cond = gamma_conditional(&f.state, &f.data, &f.proj, &f.priors, k);
        let diffs: Vec<f64> = (0..points)
            .map(|_| {
                let g = DVector::from_fn(2, |_, _| 2.0 * draw_normal(&mut rng));
                cond.log_kernel(&g) - f.brute_gamma(k, &g)
            })
            .collect();
        out.push(OracleCheck {
            name: format!("gamma{k}"),
            deviation: constant_spread(&diffs),
            tolerance: KERNEL_TOL,
        });
    }
    for which in [None, Some(0), Some(1)] {
        let cond = match which {
            None => u_conditional(&f.state, &f.data, &f.proj, &f.cfg),
            Some(k) => xi_conditional(&f.state, &f.data, &f.proj, k),
        };
        let diffs: Vec<f64> = (0..points)
            .map(|_| {
                let blocks: Vec<DVector<f64>> = (0..3).map(|_| DVector::from_fn(2, |_, _| draw_normal(&mut rng))).collect();
                cond.log_kernel(&blocks) - f.brute_field(which, &blocks)
            })
            .collect();
        out.push(OracleCheck {
            name: match which {
                None => "u_field".into(),
                Some(k) => format!("xi{k}_field"),
            },
            deviation: constant_spread(&diffs),
            tolerance: KERNEL_TOL,
        });
    }
    out
}

fn random_field(rng: &mut RngStream, t: usize, m: usize) -> LatentField {
    let mut v = || DVector::from_fn(m, |_, _| draw_normal(&mut *rng));
    LatentField {
        origin: v(),
        blocks: (0..t).map(|_| v()).collect(),
        tau: 0.5 + rng.random::<f64>(),
        phi: 0.4,
    }
}

/// Gamma shape `a₀ + M(T+1)/2` exactly, and the rate through the trace-form identity.
pub fn tau_update_checks(states: usize, seed: u64) -> Vec<OracleCheck> {
    let mut rng = RngStream::new(seed, 20);
    let prior = GammaPrior { shape: 2.0, rate: 1.3 };
    let mut shape_dev: f64 = 0.0;
    let mut rate_dev: f64 = 0.0;
    for s in 0..states {
        let f = OracleFixture::new(2 + s % 4, 4, 2 + s % 2, seed.wrapping_add(s as u64));
        let mut field = random_field(&mut rng, f.state.u.num_periods(), f.state.u.num_knots());
        field.phi = f.state.u.phi;
        let g = tau_conditional(&field, &f.proj.u, prior);
        let m = field.num_knots() as f64;
        let t = field.num_periods() as f64;
        shape_dev = shape_dev.max((g.shape - (prior.shape + m * (t + 1.0) / 2.0)).abs());
        let chol = f.proj.u.knot_cholesky();
        let trace = random_walk_trace_form(&field, f.proj.u.knot_precision());
        let want = prior.rate + 0.5 * (chol.inv_quad(field.origin.as_slice()) + trace);
        rate_dev = rate_dev.max((g.rate - want).abs() / want.max(1.0));
        let stacked = random_walk_quadratic_form(&field, chol);
        rate_dev = rate_dev.max((g.rate - prior.rate - 0.5 * stacked).abs() / want.max(1.0));
    }
    vec![
        OracleCheck {
            name: "tau_shape".into(),
            deviation: shape_dev,
            tolerance: 0.0,
        },
        OracleCheck {
            name: "tau_rate_trace_form".into(),
            deviation: rate_dev,
            tolerance: KERNEL_TOL,
        },
    ]
}

/// Dense joint random-walk density against the product of sequential conditionals.
pub fn joint_sequential_check(states: usize, seed: u64) -> OracleCheck {
    let mut rng = RngStream::new(seed, 30);
    let mut dev: f64 = 0.0;
    for s in 0..states {
        let m = 1 + s % 4;
        let t = 1 + (s / 4) % 6;
        let pts: Vec<[f64; 2]> = (0..m).map(|_| [rng.random(), rng.random()]).collect();
        let knots = KnotSet::new(pts).expect("distinct random knots");
        let phi = 0.2 + rng.random::<f64>();
        let c = knot_covariance(&knots, phi).expect("valid range");
        let f = random_field(&mut rng, t, m);
        let a = random_walk_log_density_joint(&f, &c).expect("positive definite");
        let b = random_walk_log_density_sequential(&f, &c).expect("positive definite");
        dev = dev.max((a - b).abs());
    }
    OracleCheck {
        name: "joint_vs_sequential".into(),
        deviation: dev,
        tolerance: KERNEL_TOL,
    }
}
