use super::{ChainState, PanelDataset, Projectors};
use crate::error::{Error, Result};

/// `log(1 + eˣ)` without overflow.
#[inline]
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

#[inline]
pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Log class probabilities `(log p_0, log p_1, log p_2)` for logits `(ψ_0, ψ_1, 0)`.
#[inline]
pub fn log_softmax3(psi0: f64, psi1: f64) -> [f64; 3] {
    let m = psi0.max(psi1).max(0.0);
    let lse = m + ((psi0 - m).exp() + (psi1 - m).exp() + (-m).exp()).ln();
    [psi0 - lse, psi1 - lse, -lse]
}

/// `log Bin(y; n, logistic(η))`.
pub fn log_binomial_pmf(y: u32, n: u32, eta: f64) -> f64 {
    let (y, n) = (y as f64, n as f64);
    let lchoose = libm::lgamma(n + 1.0) - libm::lgamma(y + 1.0) - libm::lgamma(n - y + 1.0);
    // log π = −softplus(−η), log(1 − π) = −softplus(η)
    lchoose - y * softplus(-eta) - (n - y) * softplus(eta)
}

/// `p_1 + p_2 π`, the mixture probability of a response at or below the threshold.
#[inline]
pub fn mixture_cdf(eta: f64, psi0: f64, psi1: f64) -> f64 {
    let lp = log_softmax3(psi0, psi1);
    lp[1].exp() + lp[2].exp() * logistic(eta)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearPredictor {
    pub eta: f64,
    pub pi: f64,
    pub psi0: f64,
    pub psi1: f64,
    pub p0: f64,
    pub p1: f64,
}

impl LinearPredictor {
    pub fn from_logits(eta: f64, psi0: f64, psi1: f64) -> Self {
        let lp = log_softmax3(psi0, psi1);
        Self {
            eta,
            pi: logistic(eta),
            psi0,
            psi1,
            p0: lp[0].exp(),
            p1: lp[1].exp(),
        }
    }
}

/// `x β` over all rows.
pub(crate) fn design_times(data: &PanelDataset, coef: &nalgebra::DVector<f64>) -> Vec<f64> {
    (data.design() * coef).as_slice().to_vec()
}

pub(crate) struct Logits {
    pub eta: Vec<f64>,
    pub psi: [Vec<f64>; 2],
}

pub(crate) fn logits(state: &ChainState, data: &PanelDataset, proj: &Projectors) -> Logits {
    let add = |a: Vec<f64>, b: Vec<f64>| a.into_iter().zip(b).map(|(x, y)| x + y).collect::<Vec<_>>();
    Logits {
        eta: add(design_times(data, &state.beta), state.u.site_values(data, &proj.u)),
        psi: [0, 1].map(|k| {
            add(
                design_times(data, &state.gamma[k]),
                state.xi[k].site_values(data, &proj.xi[k]),
            )
        }),
    }
}

/// Per-observation `(η, π, ψ_0, ψ_1, p_0, p_1)` at the current state.
pub fn linear_predictors(
    state: &ChainState,
    data: &PanelDataset,
    proj: &Projectors,
) -> Result<Vec<LinearPredictor>> {
    let q = data.num_covariates();
    let m = proj.u.num_knots();
    let t_len = data.num_periods();
    let ok = state.beta.len() == q
        && state.gamma.iter().all(|g| g.len() == q)
        && std::iter::once(&state.u)
            .chain(state.xi.iter())
            .all(|f| f.num_periods() == t_len && f.blocks.iter().all(|b| b.len() == m))
        && proj.u.num_periods() == t_len;
    if !ok {
        return Err(Error::DimensionMismatch("state does not match dataset dimensions".into()));
    }
    let l = logits(state, data, proj);
    Ok((0..data.len())
        .map(|i| LinearPredictor::from_logits(l.eta[i], l.psi[0][i], l.psi[1][i]))
        .collect())
}
