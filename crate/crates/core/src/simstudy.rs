//! Simulation study: lognormal/uniform mixture generator, exact truth
//! surface, MSE/coverage metrics and the replication driver.

use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distreg::{bin_counts, fit_rstdr, quantile_type7, DistributionSurface, FitOptions, MicroSample, ThresholdGrid};
use crate::error::{Error, Result};
use crate::mcmc::{fmt_f64, log_softmax3, ModelKind, Priors, SamplerConfig};
use crate::randomkit::{derive_stream_id, draw_normal, RngStream};

const DATA_STREAM: u64 = 0x6461_7461;
const FIT_STREAM: u64 = 0x6669_7473;

/// Whether the mixture component is drawn once per site-period or per response.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MixingLevel {
    /// All `n_it` responses of a site-period share one component, so the
    /// uniform components produce structural all-0 / all-n counts.
    #[default]
    PerSite,
    /// Each response picks its own component; counts are then plain binomial.
    PerResponse,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioSpec {
    pub scenario: u8,
    pub periods: usize,
    pub sites_per_period: usize,
    /// `n_it = floor(U(trials_lo, trials_hi))`.
    pub trials_lo: f64,
    pub trials_hi: f64,
    pub thresholds: Vec<f64>,
    /// Width of the upper uniform component above the last threshold.
    pub tail_width: f64,
    pub mixing: MixingLevel,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        Self {
            scenario: 1,
            periods: 10,
            sites_per_period: 50,
            trials_lo: 50.0,
            trials_hi: 100.0,
            thresholds: vec![1.0, 2.0, 4.0, 6.0, 8.0, 10.0, 14.0],
            tail_width: 1.0,
            mixing: MixingLevel::PerSite,
        }
    }
}

impl ScenarioSpec {
    pub fn scenario(id: u8) -> Self {
        Self {
            scenario: id,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !matches!(self.scenario, 1 | 2) {
            return Err(Error::Config(format!("scenario must be 1 or 2, got {}", self.scenario)));
        }
        if self.periods == 0 || self.sites_per_period == 0 {
            return Err(Error::Config("periods and sites_per_period must be positive".into()));
        }
        if !(self.trials_lo >= 1.0 && self.trials_lo < self.trials_hi && self.trials_hi < u32::MAX as f64) {
            return Err(Error::Config(format!(
                "trial range ({}, {}) must satisfy 1 <= lo < hi",
                self.trials_lo, self.trials_hi
            )));
        }
        if !(self.tail_width > 0.0 && self.tail_width.is_finite()) {
            return Err(Error::Config(format!("tail_width {} must be positive", self.tail_width)));
        }
        let g = self.grid()?;
        if g.values()[0] <= 0.0 {
            return Err(Error::Config("thresholds must be positive for the lognormal component".into()));
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<ThresholdGrid> {
        ThresholdGrid::new(self.thresholds.clone())
    }
}

pub fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z * FRAC_1_SQRT_2)
}

/// `(ζ0, ζ1, ζ2)` at `s`. `indicator_weight` scales the Scenario 2 step terms.
pub(crate) fn spatial_effects(scenario: u8, s: [f64; 2], indicator_weight: f64) -> [f64; 3] {
    let bump = (-2.0 * s[0] * s[0] - 2.0 * s[1] * s[1]).exp();
    let z0 = s[0].sin();
    let z1 = s[0].cos();
    if scenario == 1 {
        return [z0, z1, bump + s[0] + s[1]];
    }
    let north = if s[1] > 0.0 { 1.0 } else { 0.0 };
    let diag = if s[0] + s[1] > 0.0 { 1.0 } else { 0.0 };
    [
        z0 - indicator_weight * 0.5 * north,
        z1 - indicator_weight * 0.5 * north,
        bump + indicator_weight * (2.0 * diag - 1.0),
    ]
}

/// Time effects at one-based period `t` of `periods`.
pub(crate) fn time_effects(t: usize, periods: usize) -> [f64; 3] {
    let a = PI * t as f64 / 2.0;
    [0.5 * a.sin(), -0.5 * a.cos(), 1.5 * t as f64 / periods as f64]
}

/// Mixture parameters at one site-period.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SiteParams {
    /// Weight of the upper uniform (all responses above the grid).
    pub lambda0: f64,
    /// Weight of the lower uniform (all responses below the first threshold).
    pub lambda1: f64,
    pub mu: f64,
    pub sigma: f64,
}

impl SiteParams {
    pub fn new(scenario: u8, s: [f64; 2], x: f64, t: usize, periods: usize) -> Self {
        Self::with_indicator_weight(scenario, s, x, t, periods, 1.0)
    }

    pub(crate) fn with_indicator_weight(scenario: u8, s: [f64; 2], x: f64, t: usize, periods: usize, w: f64) -> Self {
        let z = spatial_effects(scenario, s, w);
        let iota = time_effects(t, periods);
        let nu0 = -1.0 + 0.5 * x + z[0] + iota[0];
        let nu1 = -1.5 - x + z[1] + iota[1];
        let lp = log_softmax3(nu0, nu1);
        Self {
            lambda0: lp[0].exp(),
            lambda1: lp[1].exp(),
            mu: 1.0 + x + z[2] + iota[2],
            sigma: (-1.5 + 0.2 * x + 0.5 * z[2] + 0.5 * iota[2]).exp(),
        }
    }

    pub fn lognormal_weight(&self) -> f64 {
        (1.0 - self.lambda0 - self.lambda1).max(0.0)
    }

    /// Exact mixture CDF at `a`, for `a` between the two uniform supports.
    pub fn cdf(&self, a: f64) -> f64 {
        let ln = normal_cdf((a.ln() - self.mu) / self.sigma);
        (self.lambda1 + self.lognormal_weight() * ln).clamp(0.0, 1.0)
    }
}

fn draw_component<R: Rng + ?Sized>(p: &SiteParams, rng: &mut R) -> usize {
    let u: f64 = rng.random();
    if u < p.lambda0 {
        0
    } else if u < p.lambda0 + p.lambda1 {
        1
    } else {
        2
    }
}

fn draw_from_component<R: Rng + ?Sized>(c: usize, p: &SiteParams, lo_edge: f64, hi_edge: f64, width: f64, rng: &mut R) -> f64 {
    match c {
        0 => hi_edge + width * (1.0 - rng.random::<f64>()),
        1 => lo_edge * (1.0 - rng.random::<f64>()),
        _ => (p.mu + p.sigma * draw_normal(rng)).exp(),
    }
}

/// `n` latent responses at one site-period.
pub fn draw_site_responses<R: Rng + ?Sized>(
    p: &SiteParams,
    n: usize,
    spec: &ScenarioSpec,
    rng: &mut R,
) -> Vec<f64> {
    let lo_edge = spec.thresholds[0];
    let hi_edge = *spec.thresholds.last().expect("non-empty grid");
    match spec.mixing {
        MixingLevel::PerSite => {
            let c = draw_component(p, rng);
            (0..n).map(|_| draw_from_component(c, p, lo_edge, hi_edge, spec.tail_width, rng)).collect()
        }
        MixingLevel::PerResponse => (0..n)
            .map(|_| {
                let c = draw_component(p, rng);
                draw_from_component(c, p, lo_edge, hi_edge, spec.tail_width, rng)
            })
            .collect(),
    }
}

/// True `F(a_k)` per row, row-major `[row][k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TruthSurface {
    pub thresholds: Vec<f64>,
    pub values: Vec<f64>,
}

impl TruthSurface {
    pub fn from_params(params: &[SiteParams], thresholds: &[f64]) -> Self {
        let values = params.iter().flat_map(|p| thresholds.iter().map(|&a| p.cdf(a))).collect();
        Self {
            thresholds: thresholds.to_vec(),
            values,
        }
    }

    pub fn num_rows(&self) -> usize {
        self.values.len() / self.thresholds.len()
    }

    pub fn at(&self, row: usize, k: usize) -> f64 {
        self.values[row * self.thresholds.len() + k]
    }

    pub fn for_threshold(&self, k: usize) -> Vec<f64> {
        (0..self.num_rows()).map(|i| self.at(i, k)).collect()
    }
}

/// One simulated dataset; rows are in period order and align with the binned datasets.
#[derive(Debug, Clone)]
pub struct Replication {
    pub samples: Vec<MicroSample>,
    pub x: Vec<f64>,
    pub params: Vec<SiteParams>,
    pub truth: TruthSurface,
}

pub fn generate_replication<R: Rng + ?Sized>(spec: &ScenarioSpec, rng: &mut R) -> Result<Replication> {
    spec.validate()?;
    let rows = spec.periods * spec.sites_per_period;
    let mut samples = Vec::with_capacity(rows);
    let mut xs = Vec::with_capacity(rows);
    let mut params = Vec::with_capacity(rows);
    for t in 0..spec.periods {
        for i in 0..spec.sites_per_period {
            let s = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
            let x = 0.5 * draw_normal(rng);
            let n = rng.random_range(spec.trials_lo..spec.trials_hi).floor() as usize;
            let p = SiteParams::new(spec.scenario, s, x, t + 1, spec.periods);
            let responses = draw_site_responses(&p, n, spec, rng);
            samples.push(MicroSample {
                period: t,
                site: i,
                location: s,
                covariates: vec![1.0, x],
                responses,
            });
            xs.push(x);
            params.push(p);
        }
    }
    let truth = TruthSurface::from_params(&params, &spec.thresholds);
    Ok(Replication {
        samples,
        x: xs,
        params,
        truth,
    })
}

fn check_len(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::DimensionMismatch(format!("{a} estimates for {b} truth values")));
    }
    if a == 0 {
        return Err(Error::DimensionMismatch("no values to compare".into()));
    }
    Ok(())
}

/// Mean squared error over rows.
pub fn compute_mse(estimate: &[f64], truth: &[f64]) -> Result<f64> {
    check_len(estimate.len(), truth.len())?;
    Ok(estimate.iter().zip(truth).map(|(e, t)| (e - t).powi(2)).sum::<f64>() / truth.len() as f64)
}

pub fn surface_mse(surface: &DistributionSurface, truth: &TruthSurface, k: usize) -> Result<f64> {
    check_len(surface.num_rows(), truth.num_rows())?;
    compute_mse(&surface.means_for_threshold(k), &truth.for_threshold(k))
}

/// Additive interval tally; merging tallies is exact so CP/AL do not depend on grouping.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CoverageTally {
    pub covered: u64,
    pub total: u64,
    pub length_sum: f64,
}

impl CoverageTally {
    pub fn from_intervals(intervals: &[(f64, f64)], truth: &[f64]) -> Result<Self> {
        check_len(intervals.len(), truth.len())?;
        let mut t = Self::default();
        for (&(lo, hi), &f) in intervals.iter().zip(truth) {
            t.total += 1;
            t.covered += u64::from(lo <= f && f <= hi);
            t.length_sum += hi - lo;
        }
        Ok(t)
    }

    pub fn merge(self, other: Self) -> Self {
        Self {
            covered: self.covered + other.covered,
            total: self.total + other.total,
            length_sum: self.length_sum + other.length_sum,
        }
    }

    pub fn cp_percent(&self) -> f64 {
        100.0 * self.covered as f64 / self.total as f64
    }

    pub fn average_length(&self) -> f64 {
        self.length_sum / self.total as f64
    }
}

/// `(CP %, AL)` at threshold `k` pooled over replications.
pub fn compute_cp_al(surfaces: &[DistributionSurface], truths: &[TruthSurface], k: usize) -> Result<(f64, f64)> {
    check_len(surfaces.len(), truths.len())?;
    let mut tally = CoverageTally::default();
    for (s, t) in surfaces.iter().zip(truths) {
        check_len(s.num_rows(), t.num_rows())?;
        tally = tally.merge(CoverageTally::from_intervals(&s.intervals_for_threshold(k), &t.for_threshold(k))?);
    }
    Ok((tally.cp_percent(), tally.average_length()))
}

fn model_name(m: ModelKind) -> &'static str {
    match m {
        ModelKind::Bib => "BIB",
        ModelKind::Bn => "BN",
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudyConfig {
    pub spec: ScenarioSpec,
    pub methods: Vec<ModelKind>,
    pub replications: usize,
    pub seed: u64,
    /// Worker threads; `None` uses the ambient rayon pool.
    pub jobs: Option<usize>,
    /// Chain settings shared by all fits; `seed` and `stream` are overridden per replication.
    pub sampler: SamplerConfig,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            spec: ScenarioSpec::default(),
            methods: vec![ModelKind::Bib, ModelKind::Bn],
            replications: 20,
            seed: 1,
            jobs: None,
            sampler: SamplerConfig {
                store_components: false,
                ..SamplerConfig::default()
            },
        }
    }
}

/// Metrics of one method on one replication, per threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationResult {
    pub replication: usize,
    pub method: ModelKind,
    pub mse: Vec<f64>,
    pub coverage: Vec<CoverageTally>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsRow {
    pub method: ModelKind,
    pub threshold: f64,
    pub mse_mean: f64,
    pub mse_lo: f64,
    pub mse_hi: f64,
    pub cp_percent: f64,
    pub al: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudyFailure {
    pub replication: usize,
    pub method: ModelKind,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyResult {
    pub metrics: Vec<MetricsRow>,
    pub raw: Vec<ReplicationResult>,
    pub failures: Vec<StudyFailure>,
}

impl StudyResult {
    pub fn row(&self, method: ModelKind, k: usize) -> Option<&MetricsRow> {
        self.metrics.iter().filter(|r| r.method == method).nth(k)
    }
}

/// Data stream of replication `r`; the same across methods so they see identical data.
pub fn replication_rng(seed: u64, r: usize) -> RngStream {
    RngStream::derived(seed, &[DATA_STREAM, r as u64])
}

fn evaluate(rep: usize, method: ModelKind, surface: &DistributionSurface, truth: &TruthSurface) -> Result<ReplicationResult> {
    let kk = truth.thresholds.len();
    let mut mse = Vec::with_capacity(kk);
    let mut coverage = Vec::with_capacity(kk);
    for k in 0..kk {
        mse.push(surface_mse(surface, truth, k)?);
        coverage.push(CoverageTally::from_intervals(&surface.intervals_for_threshold(k), &truth.for_threshold(k))?);
    }
    Ok(ReplicationResult {
        replication: rep,
        method,
        mse,
        coverage,
    })
}

/// Fits every method to one replication.
pub fn run_replication(cfg: &StudyConfig, rep: usize) -> Vec<Result<ReplicationResult>> {
    let data = generate_replication(&cfg.spec, &mut replication_rng(cfg.seed, rep)).and_then(|d| {
        let grid = cfg.spec.grid()?;
        let binned = bin_counts(&d.samples, &grid)?;
        Ok((d, grid, binned))
    });
    let (d, grid, binned) = match data {
        Ok(v) => v,
        Err(e) => {
            let msg = e.to_string();
            return cfg.methods.iter().map(|_| Err(Error::Config(msg.clone()))).collect();
        }
    };
    let priors = Priors::default_for(&binned[0]);
    cfg.methods
        .iter()
        .map(|&method| {
            let sampler = SamplerConfig {
                model: method,
                seed: cfg.seed,
                stream: derive_stream_id(&[FIT_STREAM, rep as u64]),
                ..cfg.sampler.clone()
            };
            let surface = fit_rstdr(&binned, &grid, &priors, &sampler, &FitOptions { keep_draws: false, jobs: Some(1) })?;
            evaluate(rep, method, &surface, &d.truth)
        })
        .collect()
}

fn summarize(cfg: &StudyConfig, raw: &[ReplicationResult]) -> Vec<MetricsRow> {
    let mut rows = Vec::new();
    for &method in &cfg.methods {
        let mine: Vec<&ReplicationResult> = raw.iter().filter(|r| r.method == method).collect();
        if mine.is_empty() {
            continue;
        }
        for (k, &a) in cfg.spec.thresholds.iter().enumerate() {
            let mut mses: Vec<f64> = mine.iter().map(|r| r.mse[k]).collect();
            let mean = mses.iter().sum::<f64>() / mses.len() as f64;
            mses.sort_by(f64::total_cmp);
            let tally = mine.iter().fold(CoverageTally::default(), |acc, r| acc.merge(r.coverage[k]));
            rows.push(MetricsRow {
                method,
                threshold: a,
                mse_mean: mean,
                mse_lo: quantile_type7(&mses, 0.025),
                mse_hi: quantile_type7(&mses, 0.975),
                cp_percent: tally.cp_percent(),
                al: tally.average_length(),
            });
        }
    }
    rows
}

pub fn run_study(cfg: &StudyConfig) -> Result<StudyResult> {
    if cfg.replications == 0 {
        return Err(Error::Config("at least one replication is required".into()));
    }
    if cfg.methods.is_empty() {
        return Err(Error::Config("at least one method is required".into()));
    }
    cfg.spec.validate()?;
    cfg.sampler.validate()?;
    let work = || -> Vec<Vec<Result<ReplicationResult>>> {
        (0..cfg.replications).into_par_iter().map(|r| run_replication(cfg, r)).collect()
    };
    let per_rep = match cfg.jobs {
        Some(j) => rayon::ThreadPoolBuilder::new()
            .num_threads(j)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?
            .install(work),
        None => work(),
    };
    Ok(collect_study(cfg, per_rep))
}

/// Joins per-replication outcomes (indexed by replication, then method) into
/// the metric table; failed fits are logged and excluded.
pub fn collect_study(cfg: &StudyConfig, per_rep: Vec<Vec<Result<ReplicationResult>>>) -> StudyResult {
    let mut raw = Vec::new();
    let mut failures = Vec::new();
    for (rep, results) in per_rep.into_iter().enumerate() {
        for (res, &method) in results.into_iter().zip(&cfg.methods) {
            match res {
                Ok(r) => raw.push(r),
                Err(e) => {
                    log::warn!("replication {rep} {} failed: {e}", model_name(method));
                    failures.push(StudyFailure {
                        replication: rep,
                        method,
                        message: e.to_string(),
                    });
                }
            }
        }
    }
    if !failures.is_empty() {
        log::warn!("{} of {} fits failed and were excluded", failures.len(), cfg.replications * cfg.methods.len());
    }
    StudyResult {
        metrics: summarize(cfg, &raw),
        raw,
        failures,
    }
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

pub fn write_mse_csv<W: Write>(res: &StudyResult, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["method", "threshold", "mean", "lo", "hi"])?;
    for r in &res.metrics {
        w.write_record([model_name(r.method).to_string(), fmt_f64(r.threshold), fmt_f64(r.mse_mean), fmt_f64(r.mse_lo), fmt_f64(r.mse_hi)])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_coverage_csv<W: Write>(res: &StudyResult, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["method", "threshold", "cp_percent", "al"])?;
    for r in &res.metrics {
        w.write_record([model_name(r.method).to_string(), fmt_f64(r.threshold), fmt_f64(r.cp_percent), fmt_f64(r.al)])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_raw_csv<W: Write>(res: &StudyResult, thresholds: &[f64], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["replication", "method", "threshold", "mse", "covered", "total", "length_sum"])?;
    let mut raw: Vec<&ReplicationResult> = res.raw.iter().collect();
    raw.sort_by_key(|r| (r.replication, r.method != ModelKind::Bib));
    for r in raw {
        for (k, a) in thresholds.iter().enumerate() {
            let c = r.coverage[k];
            w.write_record([
                (r.replication + 1).to_string(),
                model_name(r.method).to_string(),
                fmt_f64(*a),
                fmt_f64(r.mse[k]),
                c.covered.to_string(),
                c.total.to_string(),
                fmt_f64(c.length_sum),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct StudyMeta<'a> {
    software_version: &'a str,
    seed: u64,
    replications: usize,
    spec: &'a ScenarioSpec,
    methods: Vec<&'static str>,
    sampler: &'a SamplerConfig,
    trials_rule: &'static str,
    fitted_covariates: &'static str,
    failures: &'a [StudyFailure],
    #[serde(flatten)]
    extra: serde_json::Value,
}

/// Writes the metric CSVs and the JSON manifest into `dir`.
pub fn write_study_outputs(dir: &Path, cfg: &StudyConfig, res: &StudyResult, extra: serde_json::Value) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    write_mse_csv(res, create(dir, "mse_by_threshold.csv")?)?;
    write_coverage_csv(res, create(dir, "coverage.csv")?)?;
    write_raw_csv(res, &cfg.spec.thresholds, create(dir, "replication_raw.csv")?)?;
    let meta = StudyMeta {
        software_version: env!("CARGO_PKG_VERSION"),
        seed: cfg.seed,
        replications: cfg.replications,
        spec: &cfg.spec,
        methods: cfg.methods.iter().map(|&m| model_name(m)).collect(),
        sampler: &cfg.sampler,
        trials_rule: "floor of continuous uniform draw",
        fitted_covariates: "intercept + x",
        failures: &res.failures,
        extra,
    };
    let mut f = create(dir, "study_meta.json")?;
    serde_json::to_writer_pretty(&mut f, &meta).map_err(|e| Error::Io(e.into()))?;
    f.flush()?;
    Ok(())
}

/// `t, site, s1, s2, x, z_star`, one line per latent response.
pub fn write_micro_csv<W: Write>(rep: &Replication, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "site", "s1", "s2", "x", "z_star"])?;
    for (s, x) in rep.samples.iter().zip(&rep.x) {
        let head = [(s.period + 1).to_string(), s.site.to_string(), fmt_f64(s.location[0]), fmt_f64(s.location[1]), fmt_f64(*x)];
        for z in &s.responses {
            w.write_record(head.iter().cloned().chain(std::iter::once(fmt_f64(*z))))?;
        }
    }
    w.flush()?;
    Ok(())
}

/// `t, site, s1, s2, x, threshold, f_true, lambda0, lambda1, mu, sigma`.
pub fn write_truth_csv<W: Write>(rep: &Replication, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "site", "s1", "s2", "x", "threshold", "f_true", "lambda0", "lambda1", "mu", "sigma"])?;
    for (i, ((s, x), p)) in rep.samples.iter().zip(&rep.x).zip(&rep.params).enumerate() {
        for (k, a) in rep.truth.thresholds.iter().enumerate() {
            w.write_record([
                (s.period + 1).to_string(),
                s.site.to_string(),
                fmt_f64(s.location[0]),
                fmt_f64(s.location[1]),
                fmt_f64(*x),
                fmt_f64(*a),
                fmt_f64(rep.truth.at(i, k)),
                fmt_f64(p.lambda0),
                fmt_f64(p.lambda1),
                fmt_f64(p.mu),
                fmt_f64(p.sigma),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
