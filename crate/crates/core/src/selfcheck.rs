//! Built-in validation suites run by `rstdr check`.
//!
//! Every suite is seeded; a report depends only on `(suite, seed)`.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{cholesky, mccausland_forward, solve_mccausland, solve_rue, BandCholesky, BlockTridiagonalPrecision, SymMatrix};
use crate::mcmc::oracle::{gaussian_conditional_checks, joint_sequential_check, tau_update_checks, OracleCheck};
use crate::mcmc::{geweke_check, GewekeConfig};
use crate::randomkit::{draw_normal, draw_pg, pg_mean, pg_variance, RngStream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    Pg,
    Linalg,
    Conjugacy,
    Geweke,
}

impl Suite {
    pub const ALL: [Suite; 4] = [Suite::Pg, Suite::Linalg, Suite::Conjugacy, Suite::Geweke];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Pg => "pg",
            Suite::Linalg => "linalg",
            Suite::Conjugacy => "conjugacy",
            Suite::Geweke => "geweke",
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Suite::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown suite '{s}' (expected pg, linalg, conjugacy or geweke)")))
    }
}

/// One numeric comparison: pass iff `value <= tolerance`.
#[derive(Debug, Clone, Serialize)]
pub struct CheckLine {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl CheckLine {
    fn new(name: impl Into<String>, value: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            value,
            tolerance,
            passed: value <= tolerance,
        }
    }
}

impl From<OracleCheck> for CheckLine {
    fn from(c: OracleCheck) -> Self {
        CheckLine::new(c.name, c.deviation, c.tolerance)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SuiteReport {
    pub suite: Suite,
    pub seed: u64,
    pub checks: Vec<CheckLine>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &CheckLine> {
        self.checks.iter().filter(|c| !c.passed)
    }

    /// Summary line followed by failing checks only.
    pub fn render(&self) -> String {
        let worst = self
            .checks
            .iter()
            .map(|c| if c.tolerance > 0.0 { c.value / c.tolerance } else { c.value })
            .fold(0.0, f64::max);
        let mut s = format!(
            "{:<10} {}  checks={} failed={} worst_ratio={:.3}\n",
            self.suite.name(),
            if self.passed() { "PASS" } else { "FAIL" },
            self.checks.len(),
            self.failures().count(),
            worst
        );
        for c in self.failures() {
            s.push_str(&format!("    {}: {:.6e} > {:.6e}\n", c.name, c.value, c.tolerance));
        }
        s
    }
}

pub const PG_B: [u32; 4] = [1, 3, 10, 50];
pub const PG_C: [f64; 5] = [0.0, 0.5, 1.0, 2.0, 5.0];

#[derive(Debug, Clone)]
pub struct CheckConfig {
    pub seed: u64,
    pub pg_draws: usize,
    pub pg_z: f64,
    pub linalg_systems: usize,
    pub linalg_max_dim: usize,
    pub linalg_draws: usize,
    pub linalg_mean_tol: f64,
    pub linalg_cov_tol: f64,
    pub oracle_points: usize,
    pub joint_states: usize,
    pub geweke: GewekeConfig,
    pub geweke_z: f64,
}

impl Default for CheckConfig {
    fn default() -> Self {
        Self {
            seed: 20_240_611,
            pg_draws: 100_000,
            pg_z: 5.0,
            linalg_systems: 50,
            linalg_max_dim: 8,
            linalg_draws: 100_000,
            linalg_mean_tol: 1e-8,
            linalg_cov_tol: 2e-2,
            oracle_points: 20,
            joint_states: 50,
            geweke: GewekeConfig::default(),
            geweke_z: 4.0,
        }
    }
}

pub fn run_suite(suite: Suite, cfg: &CheckConfig) -> Result<SuiteReport> {
    let checks = match suite {
        Suite::Pg => pg_suite(cfg)?,
        Suite::Linalg => linalg_suite(cfg)?,
        Suite::Conjugacy => conjugacy_suite(cfg),
        Suite::Geweke => geweke_suite(cfg)?,
    };
    Ok(SuiteReport {
        suite,
        seed: cfg.seed,
        checks,
    })
}

/// Sample mean and variance compared with the closed form in standard errors.
/// The variance SE uses the empirical fourth central moment.
pub fn pg_suite(cfg: &CheckConfig) -> Result<Vec<CheckLine>> {
    let cells: Vec<(usize, u32, f64)> = PG_B
        .iter()
        .flat_map(|&b| PG_C.iter().map(move |&c| (b, c)))
        .enumerate()
        .map(|(i, (b, c))| (i, b, c))
        .collect();
    let per_cell: Vec<Result<[CheckLine; 2]>> = cells
        .par_iter()
        .map(|&(i, b, c)| {
            let mut rng = RngStream::derived(cfg.seed, &[0x7067, i as u64]);
            let xs = (0..cfg.pg_draws).map(|_| draw_pg(b, c, &mut rng)).collect::<Result<Vec<f64>>>()?;
            let n = xs.len() as f64;
            let mean = xs.iter().sum::<f64>() / n;
            let m2 = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
            let m4 = xs.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / n;
            let var = m2 * n / (n - 1.0);
            let mu = pg_mean(b as f64, c);
            let sigma2 = pg_variance(b as f64, c);
            let z_mean = (mean - mu).abs() / (sigma2 / n).sqrt();
            let z_var = (var - sigma2).abs() / ((m4 - m2 * m2).max(f64::MIN_POSITIVE) / n).sqrt();
            Ok([
                CheckLine::new(format!("mean_z(b={b},c={c})"), z_mean, cfg.pg_z),
                CheckLine::new(format!("var_z(b={b},c={c})"), z_var, cfg.pg_z),
            ])
        })
        .collect();
    let mut out = Vec::new();
    for cell in per_cell {
        out.extend(cell?);
    }
    Ok(out)
}

/// SPD block-tridiagonal `Q = L Lᵀ` from a random block lower-bidiagonal `L`.
pub fn random_block_system<R: Rng + ?Sized>(m: usize, t: usize, rng: &mut R) -> (BlockTridiagonalPrecision, DVector<f64>) {
    let n = m * t;
    let mut l = DMatrix::zeros(n, n);
    for i in 0..n {
        let block = i / m;
        let lo = block.saturating_sub(1) * m;
        for j in lo..i {
            l[(i, j)] = 0.5 * draw_normal(rng);
        }
        l[(i, i)] = 1.5 + rng.random::<f64>();
    }
    let q = &l * l.transpose();
    let diag = (0..t).map(|b| q.view((b * m, b * m), (m, m)).into_owned()).collect();
    let off = (1..t).map(|b| q.view(((b - 1) * m, b * m), (m, m)).into_owned()).collect();
    let lin = DVector::from_fn(n, |_, _| draw_normal(rng));
    (BlockTridiagonalPrecision::new(diag, off).expect("consistent blocks"), lin)
}

fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn empirical_covariance(draws: &[Vec<f64>]) -> DMatrix<f64> {
    let n = draws[0].len();
    let k = draws.len() as f64;
    let mut mean = vec![0.0; n];
    for d in draws {
        for (m, x) in mean.iter_mut().zip(d) {
            *m += x / k;
        }
    }
    let mut cov = DMatrix::zeros(n, n);
    for d in draws {
        for i in 0..n {
            let di = d[i] - mean[i];
            for j in 0..=i {
                cov[(i, j)] += di * (d[j] - mean[j]);
            }
        }
    }
    for i in 0..n {
        for j in 0..=i {
            cov[(i, j)] /= k - 1.0;
            cov[(j, i)] = cov[(i, j)];
        }
    }
    cov
}

/// Both block samplers against a dense factorization.
pub fn linalg_suite(cfg: &CheckConfig) -> Result<Vec<CheckLine>> {
    let shapes: Vec<(usize, usize)> = (1..=cfg.linalg_max_dim)
        .flat_map(|m| (1..=cfg.linalg_max_dim / m).map(move |t| (m, t)))
        .collect();
    let per_system: Vec<Result<[CheckLine; 4]>> = (0..cfg.linalg_systems)
        .into_par_iter()
        .map(|s| {
            let mut rng = RngStream::derived(cfg.seed, &[0x6c61, s as u64]);
            let (m, t) = shapes[s % shapes.len()];
            let (q, lin) = random_block_system(m, t, &mut rng);
            let dense = SymMatrix::symmetrized(q.densify());
            let chol = cholesky(&dense)?;
            let want_mean = chol.solve(&lin);
            let want_cov = chol.inverse();
            let lin_blocks: Vec<DVector<f64>> = (0..t).map(|b| lin.rows(b * m, m).into_owned()).collect();

            let rue_mean = solve_rue(&lin, &q)?;
            let mc_mean = DVector::from_iterator(m * t, solve_mccausland(&lin_blocks, &q)?.into_iter().flat_map(|b| b.data.as_vec().clone()));
            let rel = want_mean.amax().max(1.0);
            let rue_dev = (&rue_mean - &want_mean).amax() / rel;
            let mc_dev = (&mc_mean - &want_mean).amax() / rel;

            let band = BandCholesky::factor(&q)?;
            let rue_draws: Vec<Vec<f64>> = (0..cfg.linalg_draws).map(|_| band.sample(lin.as_slice(), &mut rng)).collect();
            let fwd = mccausland_forward(&lin_blocks, &q)?;
            let mc_draws: Vec<Vec<f64>> = (0..cfg.linalg_draws)
                .map(|_| fwd.sample(&q, &mut rng).into_iter().flat_map(|b| b.data.as_vec().clone()).collect())
                .collect();
            let tag = format!("system{s}(M={m},T={t})");
            Ok([
                CheckLine::new(format!("{tag}.rue_mean"), rue_dev, cfg.linalg_mean_tol),
                CheckLine::new(format!("{tag}.mccausland_mean"), mc_dev, cfg.linalg_mean_tol),
                CheckLine::new(format!("{tag}.rue_cov"), max_abs_diff(&empirical_covariance(&rue_draws), &want_cov), cfg.linalg_cov_tol),
                CheckLine::new(
                    format!("{tag}.mccausland_cov"),
                    max_abs_diff(&empirical_covariance(&mc_draws), &want_cov),
                    cfg.linalg_cov_tol,
                ),
            ])
        })
        .collect();
    let mut out = Vec::new();
    for s in per_system {
        out.extend(s?);
    }
    Ok(out)
}

pub fn conjugacy_suite(cfg: &CheckConfig) -> Vec<CheckLine> {
    let mut out: Vec<CheckLine> = gaussian_conditional_checks(cfg.oracle_points, cfg.seed).into_iter().map(Into::into).collect();
    out.extend(tau_update_checks(cfg.oracle_points, cfg.seed).into_iter().map(CheckLine::from));
    out.push(joint_sequential_check(cfg.joint_states, cfg.seed).into());
    out
}

pub fn geweke_suite(cfg: &CheckConfig) -> Result<Vec<CheckLine>> {
    let gcfg = GewekeConfig {
        seed: cfg.seed,
        ..cfg.geweke.clone()
    };
    let report = geweke_check(&gcfg)?;
    Ok(report
        .entries
        .into_iter()
        .map(|e| CheckLine::new(format!("z({})", e.name), e.z.abs(), cfg.geweke_z))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> CheckConfig {
        CheckConfig {
            pg_draws: 20_000,
            linalg_systems: 12,
            linalg_draws: 20_000,
            // covariance noise at 2·10⁴ draws is about √5 times that at 10⁵
            linalg_cov_tol: 5e-2,
            ..CheckConfig::default()
        }
    }

    #[test]
    fn suite_names_round_trip() {
        for s in Suite::ALL {
            assert_eq!(s.name().parse::<Suite>().unwrap(), s);
        }
        assert!(matches!("bogus".parse::<Suite>(), Err(Error::Config(_))));
    }

    #[test]
    fn random_systems_are_block_tridiagonal_spd() {
        let mut rng = RngStream::new(1, 1);
        for (m, t) in [(1, 8), (2, 4), (4, 2), (8, 1), (3, 2)] {
            let (q, lin) = random_block_system(m, t, &mut rng);
            assert_eq!(q.dim(), m * t);
            assert_eq!(lin.len(), m * t);
            let d = q.densify();
            for i in 0..m * t {
                for j in 0..m * t {
                    if (i / m).abs_diff(j / m) > 1 {
                        assert_eq!(d[(i, j)], 0.0);
                    }
                }
            }
            assert!(cholesky(&SymMatrix::symmetrized(d)).is_ok());
        }
    }

    #[test]
    fn small_pg_suite_passes() {
        let r = run_suite(Suite::Pg, &small()).unwrap();
        assert_eq!(r.checks.len(), 40);
        assert!(r.passed(), "{}", r.render());
    }

    #[test]
    fn small_linalg_suite_passes_and_is_seeded() {
        let cfg = small();
        let a = run_suite(Suite::Linalg, &cfg).unwrap();
        assert!(a.passed(), "{}", a.render());
        let b = run_suite(Suite::Linalg, &cfg).unwrap();
        let va: Vec<f64> = a.checks.iter().map(|c| c.value).collect();
        let vb: Vec<f64> = b.checks.iter().map(|c| c.value).collect();
        assert_eq!(va, vb);
    }

    #[test]
    fn conjugacy_suite_passes() {
        let r = run_suite(Suite::Conjugacy, &CheckConfig::default()).unwrap();
        assert!(r.passed(), "{}", r.render());
        assert!(r.checks.len() >= 9);
    }

    #[test]
    fn render_lists_only_failures() {
        let r = SuiteReport {
            suite: Suite::Pg,
            seed: 0,
            checks: vec![CheckLine::new("ok", 1.0, 2.0), CheckLine::new("bad", 3.0, 2.0)],
        };
        let s = r.render();
        assert!(s.starts_with("pg         FAIL"));
        assert!(s.contains("bad"));
        assert!(!s.contains("ok:"));
    }
}
