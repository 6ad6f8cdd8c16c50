//! Command-line front end: `simulate`, `bin`, `fit`, `summarize`,
//! `evaluate`, `replicate` and `check`.
//!
//! Settings resolve as flag > TOML config > default. The output directory
//! additionally falls back to `RSTDR_OUT_DIR` before the default. Every
//! command writes a `manifest.json` with the resolved config; wall-clock
//! fields live only there, so data files are reproducible byte for byte.

use std::collections::HashMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::distreg::{assemble_surface, bin_counts, fit_thresholds, monotone_rearrange, quantile_type7, threshold_counts, MicroSample, ThresholdGrid};
use crate::error::{Error, Result};
use crate::mcmc::{fmt_f64, read_draws_binary, write_draws_binary, GammaPrior, ModelKind, Observation, PanelDataset, Priors, SamplerConfig, Smoother};
use crate::selfcheck::{run_suite, CheckConfig, Suite, SuiteReport};
use crate::simstudy::{generate_replication, replication_rng, run_study, write_micro_csv, write_study_outputs, write_truth_csv, CoverageTally, ScenarioSpec, StudyConfig};

pub const VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), " (build ", env!("RSTDR_BUILD_HASH"), ")");
pub const OUT_DIR_ENV: &str = "RSTDR_OUT_DIR";
pub const DEFAULT_OUT_DIR: &str = "rstdr-out";

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_CHECK: i32 = 4;

/// 3 for failures of the numerics, 2 for bad configs, schemas and I/O.
pub fn exit_code(e: &Error) -> i32 {
    match e.root() {
        Error::NotPositiveDefinite { .. } | Error::InvalidShape(_) | Error::InvalidSimplex(_) | Error::InvalidRange(_) => EXIT_NUMERICAL,
        _ => EXIT_CONFIG,
    }
}

// ------------------------------------------------------------------ config

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StudySettings {
    pub replications: usize,
    pub methods: Vec<ModelKind>,
}

impl Default for StudySettings {
    fn default() -> Self {
        Self {
            replications: 20,
            methods: vec![ModelKind::Bib, ModelKind::Bn],
        }
    }
}

/// Optional prior overrides; anything unset keeps the data-scaled default.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PriorSettings {
    pub beta_mean: Option<Vec<f64>>,
    /// Scalar multiple of the identity.
    pub beta_precision: Option<f64>,
    pub gamma_mean: Option<Vec<f64>>,
    pub gamma_precision: Option<f64>,
    pub tau_u: Option<GammaPrior>,
    pub tau_xi: Option<GammaPrior>,
    pub phi_lo: Option<f64>,
    pub phi_hi: Option<f64>,
}

impl PriorSettings {
    pub fn resolve(&self, data: &PanelDataset) -> Result<Priors> {
        let mut p = Priors::default_for(data);
        let q = data.num_covariates();
        let vec_of = |v: &Vec<f64>, what: &str| -> Result<nalgebra::DVector<f64>> {
            if v.len() != q {
                return Err(Error::Config(format!("priors.{what} has {} entries, expected {q}", v.len())));
            }
            Ok(nalgebra::DVector::from_vec(v.clone()))
        };
        let prec_of = |s: f64, what: &str| -> Result<crate::linalg::SymMatrix> {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::Config(format!("priors.{what} must be positive, got {s}")));
            }
            Ok(crate::linalg::SymMatrix::scaled_identity(q, s))
        };
        if let Some(v) = &self.beta_mean {
            p.beta_mean = vec_of(v, "beta_mean")?;
        }
        if let Some(s) = self.beta_precision {
            p.beta_precision = prec_of(s, "beta_precision")?;
        }
        if let Some(v) = &self.gamma_mean {
            let g = vec_of(v, "gamma_mean")?;
            p.gamma_mean = [g.clone(), g];
        }
        if let Some(s) = self.gamma_precision {
            let g = prec_of(s, "gamma_precision")?;
            p.gamma_precision = [g.clone(), g];
        }
        if let Some(g) = self.tau_u {
            p.tau_u = g;
        }
        if let Some(g) = self.tau_xi {
            p.tau_xi = [g, g];
        }
        if let Some(v) = self.phi_lo {
            p.phi_lo = v;
        }
        if let Some(v) = self.phi_hi {
            p.phi_hi = v;
        }
        p.validate(q)?;
        Ok(p)
    }
}

/// Contents of the `--config` TOML file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub out_dir: Option<PathBuf>,
    pub jobs: Option<usize>,
    /// Grid for `bin` and `fit`; `scenario.thresholds` when unset.
    pub thresholds: Option<Vec<f64>>,
    pub scenario: ScenarioSpec,
    pub sampler: SamplerConfig,
    pub priors: PriorSettings,
    pub study: StudySettings,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn grid(&self) -> Result<ThresholdGrid> {
        ThresholdGrid::new(self.thresholds.clone().unwrap_or_else(|| self.scenario.thresholds.clone()))
    }

    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        self.sampler.validate()?;
        self.grid()?;
        if self.jobs == Some(0) {
            return Err(Error::Config("jobs must be at least 1".into()));
        }
        if self.study.replications == 0 {
            return Err(Error::Config("study.replications must be at least 1".into()));
        }
        if self.study.methods.is_empty() {
            return Err(Error::Config("study.methods must not be empty".into()));
        }
        Ok(())
    }
}

// ------------------------------------------------------------------ arguments

#[derive(Debug, Parser)]
#[command(name = "rstdr", version = VERSION, about = "Spatio-temporal distribution regression with boundary-inflated binomial models")]
pub struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory (overrides the config and RSTDR_OUT_DIR).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Master seed (overrides sampler.seed).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for thresholds and replications.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelArg {
    Bib,
    Bn,
}

impl From<ModelArg> for ModelKind {
    fn from(m: ModelArg) -> Self {
        match m {
            ModelArg::Bib => ModelKind::Bib,
            ModelArg::Bn => ModelKind::Bn,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SmootherArg {
    Mccausland,
    Rue,
}

#[derive(Debug, Args)]
pub struct ChainArgs {
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub burn_in: Option<usize>,
    /// Number of knots M.
    #[arg(long)]
    pub knots: Option<usize>,
    #[arg(long, value_enum)]
    pub smoother: Option<SmootherArg>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate one simulated dataset: micro.csv and truth.csv.
    Simulate {
        #[arg(long)]
        scenario: Option<u8>,
        /// One-based replication index; selects the data stream.
        #[arg(long, default_value_t = 1)]
        replication: usize,
    },
    /// Count responses at or below each threshold: binned.csv.
    Bin {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_delimiter = ',')]
        thresholds: Option<Vec<f64>>,
    },
    /// Fit every threshold: `draws_k<k>.bin`, `surface.csv`, `knots.csv`.
    Fit {
        /// micro.csv (binned internally) or binned.csv.
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_delimiter = ',')]
        thresholds: Option<Vec<f64>>,
        #[arg(long, value_enum)]
        model: Option<ModelArg>,
        #[command(flatten)]
        chain: ChainArgs,
        /// Sort each row's CDF draws across thresholds before summarizing.
        #[arg(long)]
        rearrange: bool,
    },
    /// Posterior summaries of the parameters in a fit directory.
    Summarize {
        #[arg(long)]
        input: PathBuf,
    },
    /// MSE, coverage and interval length of a surface against a truth file.
    Evaluate {
        #[arg(long)]
        surface: PathBuf,
        #[arg(long)]
        truth: PathBuf,
    },
    /// Replicated simulation study.
    Replicate {
        #[arg(long)]
        scenario: Option<u8>,
        #[arg(long)]
        replications: Option<usize>,
        #[arg(long, value_enum, value_delimiter = ',')]
        methods: Option<Vec<ModelArg>>,
        #[command(flatten)]
        chain: ChainArgs,
    },
    /// Built-in validation suites; exit code 4 if any check fails.
    Check {
        #[arg(long = "suite", value_parser = parse_suite)]
        suites: Vec<Suite>,
    },
}

fn parse_suite(s: &str) -> std::result::Result<Suite, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

impl ChainArgs {
    fn apply(&self, s: &mut SamplerConfig) {
        if let Some(v) = self.iterations {
            s.iterations = v;
        }
        if let Some(v) = self.burn_in {
            s.burn_in = v;
        }
        if let Some(v) = self.knots {
            s.num_knots = v;
        }
        if let Some(v) = self.smoother {
            s.smoother = match v {
                SmootherArg::Mccausland => Smoother::McCausland,
                SmootherArg::Rue => Smoother::Rue,
            };
        }
    }
}

/// Applies flag overrides; returns the config and the output directory.
pub fn resolve(cli: &Cli) -> Result<(RunConfig, Option<PathBuf>)> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.sampler.seed = s;
    }
    if let Some(j) = cli.jobs {
        cfg.jobs = Some(j);
    }
    match &cli.command {
        Command::Simulate { scenario, .. } => {
            if let Some(s) = scenario {
                cfg.scenario.scenario = *s;
            }
        }
        Command::Bin { thresholds, .. } => {
            if thresholds.is_some() {
                cfg.thresholds = thresholds.clone();
            }
        }
        Command::Fit {
            thresholds, model, chain, ..
        } => {
            if thresholds.is_some() {
                cfg.thresholds = thresholds.clone();
            }
            if let Some(m) = model {
                cfg.sampler.model = (*m).into();
            }
            chain.apply(&mut cfg.sampler);
        }
        Command::Replicate {
            scenario,
            replications,
            methods,
            chain,
        } => {
            if let Some(s) = scenario {
                cfg.scenario.scenario = *s;
            }
            if let Some(r) = replications {
                cfg.study.replications = *r;
            }
            if let Some(m) = methods {
                cfg.study.methods = m.iter().map(|&x| x.into()).collect();
            }
            chain.apply(&mut cfg.sampler);
        }
        Command::Summarize { .. } | Command::Evaluate { .. } | Command::Check { .. } => {}
    }
    let out = cli
        .out
        .clone()
        .or_else(|| cfg.out_dir.clone())
        .or_else(|| std::env::var_os(OUT_DIR_ENV).filter(|v| !v.is_empty()).map(PathBuf::from));
    cfg.out_dir = out.clone();
    cfg.validate()?;
    Ok((cfg, out))
}

// ------------------------------------------------------------------ CSV input

/// Column lookup by header name.
struct Table {
    path: PathBuf,
    headers: Vec<String>,
    index: HashMap<String, usize>,
    rows: Vec<csv::StringRecord>,
}

impl Table {
    fn read(path: &Path) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(|e| Error::Schema(format!("{}: {e}", path.display())))?;
        let headers: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
        let index = headers.iter().enumerate().map(|(i, h)| (h.clone(), i)).collect();
        let rows = r
            .records()
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::Schema(format!("{}: {e}", path.display())))?;
        Ok(Self {
            path: path.to_path_buf(),
            headers,
            index,
            rows,
        })
    }

    fn has(&self, name: &str) -> bool {
        self.index.contains_key(name)
    }

    fn col(&self, name: &str) -> Result<usize> {
        self.index
            .get(name)
            .copied()
            .ok_or_else(|| Error::Schema(format!("{}: missing column '{name}'", self.path.display())))
    }

    fn parse<T: std::str::FromStr>(&self, row: usize, col: usize) -> Result<T> {
        let raw = &self.rows[row][col];
        raw.parse().map_err(|_| {
            Error::Schema(format!(
                "{}: data row {}: column '{}' has unparseable value '{raw}'",
                self.path.display(),
                row + 1,
                self.headers[col]
            ))
        })
    }

    fn period(&self, row: usize, col: usize) -> Result<usize> {
        let t: usize = self.parse(row, col)?;
        if t == 0 {
            return Err(Error::Schema(format!("{}: data row {}: periods are one-based", self.path.display(), row + 1)));
        }
        Ok(t - 1)
    }
}

/// Groups `t, site, s1, s2, x, z_star` rows by `(t, site)`, in order of first appearance.
pub fn read_micro_csv(path: &Path) -> Result<Vec<MicroSample>> {
    let t = Table::read(path)?;
    let [ct, cs, c1, c2, cx, cz] = ["t", "site", "s1", "s2", "x", "z_star"].map(|c| t.col(c));
    let (ct, cs, c1, c2, cx, cz) = (ct?, cs?, c1?, c2?, cx?, cz?);
    let mut samples: Vec<MicroSample> = Vec::new();
    let mut slot: HashMap<(usize, usize), usize> = HashMap::new();
    for r in 0..t.rows.len() {
        let key = (t.period(r, ct)?, t.parse::<usize>(r, cs)?);
        let loc = [t.parse::<f64>(r, c1)?, t.parse::<f64>(r, c2)?];
        let x: f64 = t.parse(r, cx)?;
        let z: f64 = t.parse(r, cz)?;
        let i = *slot.entry(key).or_insert_with(|| {
            samples.push(MicroSample {
                period: key.0,
                site: key.1,
                location: loc,
                covariates: vec![1.0, x],
                responses: Vec::new(),
            });
            samples.len() - 1
        });
        let s = &mut samples[i];
        if s.location != loc || s.covariates[1] != x {
            return Err(Error::Schema(format!(
                "{}: data row {}: site {} in period {} changes location or x",
                path.display(),
                r + 1,
                key.1,
                key.0 + 1
            )));
        }
        s.responses.push(z);
    }
    if samples.is_empty() {
        return Err(Error::Schema(format!("{}: no data rows", path.display())));
    }
    Ok(samples)
}

/// `t, site, s1, s2, x, n, y_1..y_K` into one dataset per threshold.
pub fn read_binned_csv(path: &Path, k_expected: usize) -> Result<Vec<PanelDataset>> {
    let t = Table::read(path)?;
    let [ct, cs, c1, c2, cx, cn] = ["t", "site", "s1", "s2", "x", "n"].map(|c| t.col(c));
    let (ct, cs, c1, c2, cx, cn) = (ct?, cs?, c1?, c2?, cx?, cn?);
    let k_found = (1..).take_while(|k| t.has(&format!("y_{k}"))).count();
    if k_found != k_expected {
        return Err(Error::Schema(format!(
            "{}: found count columns y_1..y_{k_found} but the threshold grid has {k_expected} values",
            path.display()
        )));
    }
    let cy: Vec<usize> = (1..=k_found).map(|k| t.col(&format!("y_{k}"))).collect::<Result<_>>()?;
    if t.rows.is_empty() {
        return Err(Error::Schema(format!("{}: no data rows", path.display())));
    }
    let mut per_k: Vec<Vec<Observation>> = vec![Vec::with_capacity(t.rows.len()); k_found];
    let mut periods = 0;
    for r in 0..t.rows.len() {
        let period = t.period(r, ct)?;
        periods = periods.max(period + 1);
        let site = t.parse::<usize>(r, cs)?;
        let location = [t.parse::<f64>(r, c1)?, t.parse::<f64>(r, c2)?];
        let x: f64 = t.parse(r, cx)?;
        let trials: u32 = t.parse(r, cn)?;
        for (k, &c) in cy.iter().enumerate() {
            let successes: u32 = t.parse(r, c)?;
            if successes > trials {
                return Err(Error::Schema(format!(
                    "{}: data row {}: y_{} = {successes} exceeds n = {trials}",
                    path.display(),
                    r + 1,
                    k + 1
                )));
            }
            per_k[k].push(Observation {
                period,
                site,
                location,
                covariates: vec![1.0, x],
                trials,
                successes,
            });
        }
    }
    per_k.into_iter().map(|obs| PanelDataset::new(periods, obs)).collect()
}

// ------------------------------------------------------------------ output

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

fn unix_now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0)
}

struct Run {
    command: &'static str,
    out: PathBuf,
    cfg: RunConfig,
    started: f64,
    clock: Instant,
}

impl Run {
    fn start(command: &'static str, cfg: RunConfig, out: Option<PathBuf>) -> Result<Self> {
        let out = out.unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR));
        fs::create_dir_all(&out)?;
        Ok(Self {
            command,
            out,
            cfg,
            started: unix_now(),
            clock: Instant::now(),
        })
    }

    fn finish(&self, outputs: &[&str], extra: serde_json::Value) -> Result<()> {
        let manifest = json!({
            "command": self.command,
            "software_version": env!("CARGO_PKG_VERSION"),
            "build_hash": crate::BUILD_HASH,
            "argv": std::env::args().collect::<Vec<_>>(),
            "config": self.cfg,
            "outputs": outputs,
            "details": extra,
            "started_unix": self.started,
            "finished_unix": unix_now(),
            "runtime_seconds": self.clock.elapsed().as_secs_f64(),
        });
        let mut f = create(&self.out, "manifest.json")?;
        serde_json::to_writer_pretty(&mut f, &manifest).map_err(|e| Error::Io(e.into()))?;
        f.write_all(b"\n")?;
        f.flush()?;
        Ok(())
    }
}

// ------------------------------------------------------------------ commands

fn cmd_simulate(cfg: RunConfig, out: Option<PathBuf>, replication: usize) -> Result<()> {
    if replication == 0 {
        return Err(Error::Config("replication index is one-based".into()));
    }
    let run = Run::start("simulate", cfg, out)?;
    let rep = generate_replication(&run.cfg.scenario, &mut replication_rng(run.cfg.sampler.seed, replication - 1))?;
    write_micro_csv(&rep, create(&run.out, "micro.csv")?)?;
    write_truth_csv(&rep, create(&run.out, "truth.csv")?)?;
    run.finish(
        &["micro.csv", "truth.csv"],
        json!({ "replication": replication, "site_periods": rep.samples.len(), "trials_rule": "floor of continuous uniform draw" }),
    )
}

fn write_binned_csv<W: Write>(samples: &[MicroSample], grid: &ThresholdGrid, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = ["t", "site", "s1", "s2", "x", "n"].map(String::from).to_vec();
    header.extend((1..=grid.len()).map(|k| format!("y_{k}")));
    w.write_record(&header)?;
    for s in samples {
        let mut rec = vec![
            (s.period + 1).to_string(),
            s.site.to_string(),
            fmt_f64(s.location[0]),
            fmt_f64(s.location[1]),
            fmt_f64(s.covariates[1]),
            s.responses.len().to_string(),
        ];
        rec.extend(threshold_counts(&s.responses, grid).iter().map(u32::to_string));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

fn cmd_bin(cfg: RunConfig, out: Option<PathBuf>, input: &Path) -> Result<()> {
    let samples = read_micro_csv(input)?;
    let grid = cfg.grid()?;
    bin_counts(&samples, &grid)?;
    let run = Run::start("bin", cfg, out)?;
    write_binned_csv(&samples, &grid, create(&run.out, "binned.csv")?)?;
    run.finish(&["binned.csv"], json!({ "input": input, "thresholds": grid.values(), "site_periods": samples.len() }))
}

fn is_micro(path: &Path) -> Result<bool> {
    let mut r = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Schema(format!("{}: {e}", path.display())))?;
    Ok(r.headers()?.iter().any(|h| h == "z_star"))
}

fn cmd_fit(cfg: RunConfig, out: Option<PathBuf>, input: &Path, rearrange: bool) -> Result<()> {
    let grid = cfg.grid()?;
    let datasets = if is_micro(input)? {
        bin_counts(&read_micro_csv(input)?, &grid)?
    } else {
        read_binned_csv(input, grid.len())?
    };
    let priors = cfg.priors.resolve(&datasets[0])?;
    let run = Run::start("fit", cfg, out)?;
    let fits = fit_thresholds(&datasets, &priors, &run.cfg.sampler, run.cfg.jobs)?;
    let mut outputs = Vec::new();
    for (k, f) in fits.fits.iter().enumerate() {
        let name = format!("draws_k{}.bin", k + 1);
        let mut w = create(&run.out, &name)?;
        write_draws_binary(f, &mut w)?;
        w.flush()?;
        outputs.push(name);
    }
    let mut surface = assemble_surface(&datasets[0], &grid, &fits.fits, rearrange);
    if rearrange {
        surface = monotone_rearrange(&surface);
        surface.draws = None;
    }
    surface.write_csv(create(&run.out, "surface.csv")?)?;
    let mut kw = csv::Writer::from_writer(create(&run.out, "knots.csv")?);
    kw.write_record(["knot", "s1", "s2"])?;
    for (j, p) in fits.knots.points().iter().enumerate() {
        kw.write_record([(j + 1).to_string(), fmt_f64(p[0]), fmt_f64(p[1])])?;
    }
    kw.flush()?;
    outputs.extend(["surface.csv".to_string(), "knots.csv".to_string()]);
    let acceptance: Vec<[f64; 3]> = fits.fits.iter().map(|f| f.acceptance).collect();
    let refs: Vec<&str> = outputs.iter().map(String::as_str).collect();
    run.finish(
        &refs,
        json!({
            "input": input,
            "thresholds": grid.values(),
            "observations": datasets[0].len(),
            "rearranged": rearrange,
            "phi_acceptance_u_xi0_xi1": acceptance,
            "priors": {
                "beta_mean": priors.beta_mean.as_slice(),
                "phi_lo": priors.phi_lo,
                "phi_hi": priors.phi_hi,
                "tau_u": priors.tau_u,
                "tau_xi": priors.tau_xi,
            },
        }),
    )
}

fn draws_files(dir: &Path) -> Result<Vec<(usize, PathBuf)>> {
    let mut files: Vec<(usize, PathBuf)> = fs::read_dir(dir)
        .map_err(|e| Error::Config(format!("cannot read fit directory {}: {e}", dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter_map(|p| {
            let name = p.file_name()?.to_str()?;
            let k = name.strip_prefix("draws_k")?.strip_suffix(".bin")?.parse().ok()?;
            Some((k, p))
        })
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::Config(format!("no draws_k<k>.bin files in {}", dir.display())));
    }
    Ok(files)
}

fn cmd_summarize(cfg: RunConfig, out: Option<PathBuf>, input: &Path) -> Result<()> {
    let files = draws_files(input)?;
    let run = Run::start("summarize", cfg, out)?;
    let mut w = csv::Writer::from_writer(create(&run.out, "parameter_summary.csv")?);
    w.write_record(["k", "parameter", "draws", "mean", "sd", "lo95", "hi95"])?;
    for (k, path) in &files {
        let d = read_draws_binary(std::io::BufReader::new(File::open(path)?))?;
        for (label, col) in d.labels.iter().zip(&d.columns) {
            if label.starts_with("F[") || col.is_empty() {
                continue;
            }
            let n = col.len() as f64;
            let mean = col.iter().sum::<f64>() / n;
            let sd = if col.len() > 1 {
                (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
            } else {
                0.0
            };
            let mut s = col.clone();
            s.sort_by(f64::total_cmp);
            w.write_record([
                k.to_string(),
                label.clone(),
                col.len().to_string(),
                fmt_f64(mean),
                fmt_f64(sd),
                fmt_f64(quantile_type7(&s, 0.025)),
                fmt_f64(quantile_type7(&s, 0.975)),
            ])?;
        }
    }
    w.flush()?;
    run.finish(&["parameter_summary.csv"], json!({ "input": input, "thresholds_found": files.len() }))
}

fn threshold_key(a: f64) -> u64 {
    a.to_bits()
}

fn cmd_evaluate(cfg: RunConfig, out: Option<PathBuf>, surface: &Path, truth: &Path) -> Result<()> {
    let tt = Table::read(truth)?;
    let [ct, cs, ca, cf] = ["t", "site", "threshold", "f_true"].map(|c| tt.col(c));
    let (ct, cs, ca, cf) = (ct?, cs?, ca?, cf?);
    let mut truth_at: HashMap<(usize, usize, u64), f64> = HashMap::new();
    for r in 0..tt.rows.len() {
        let key = (tt.period(r, ct)?, tt.parse(r, cs)?, threshold_key(tt.parse(r, ca)?));
        truth_at.insert(key, tt.parse(r, cf)?);
    }
    let st = Table::read(surface)?;
    let [sp, ss, sa, sm, sl, sh] = ["period", "site", "threshold", "mean", "lo95", "hi95"].map(|c| st.col(c));
    let (sp, ss, sa, sm, sl, sh) = (sp?, ss?, sa?, sm?, sl?, sh?);
    // per threshold, in order of first appearance: (value, sq err sum, tally)
    let mut acc: Vec<(f64, f64, CoverageTally)> = Vec::new();
    let mut slot: HashMap<u64, usize> = HashMap::new();
    for r in 0..st.rows.len() {
        let a: f64 = st.parse(r, sa)?;
        let key = (st.period(r, sp)?, st.parse(r, ss)?, threshold_key(a));
        let f = *truth_at.get(&key).ok_or_else(|| {
            Error::Schema(format!(
                "{}: data row {}: no truth value for period {}, site {}, threshold {a}",
                surface.display(),
                r + 1,
                key.0 + 1,
                key.1
            ))
        })?;
        let (m, lo, hi): (f64, f64, f64) = (st.parse(r, sm)?, st.parse(r, sl)?, st.parse(r, sh)?);
        let i = *slot.entry(threshold_key(a)).or_insert_with(|| {
            acc.push((a, 0.0, CoverageTally::default()));
            acc.len() - 1
        });
        acc[i].1 += (m - f).powi(2);
        acc[i].2 = acc[i].2.merge(CoverageTally::from_intervals(&[(lo, hi)], &[f])?);
    }
    if acc.is_empty() {
        return Err(Error::Schema(format!("{}: no data rows", surface.display())));
    }
    acc.sort_by(|x, y| x.0.total_cmp(&y.0));
    let run = Run::start("evaluate", cfg, out)?;
    let mut w = csv::Writer::from_writer(create(&run.out, "evaluation.csv")?);
    w.write_record(["threshold", "rows", "mse", "cp_percent", "al"])?;
    for (a, sq, t) in &acc {
        w.write_record([fmt_f64(*a), t.total.to_string(), fmt_f64(sq / t.total as f64), fmt_f64(t.cp_percent()), fmt_f64(t.average_length())])?;
    }
    w.flush()?;
    run.finish(&["evaluation.csv"], json!({ "surface": surface, "truth": truth }))
}

fn cmd_replicate(cfg: RunConfig, out: Option<PathBuf>) -> Result<()> {
    let run = Run::start("replicate", cfg, out)?;
    let study = StudyConfig {
        spec: run.cfg.scenario.clone(),
        methods: run.cfg.study.methods.clone(),
        replications: run.cfg.study.replications,
        seed: run.cfg.sampler.seed,
        jobs: run.cfg.jobs,
        sampler: SamplerConfig {
            store_components: false,
            ..run.cfg.sampler.clone()
        },
    };
    let res = run_study(&study)?;
    write_study_outputs(&run.out, &study, &res, json!({}))?;
    for f in &res.failures {
        eprintln!("warning: replication {} ({:?}) failed: {}", f.replication + 1, f.method, f.message);
    }
    run.finish(
        &["mse_by_threshold.csv", "coverage.csv", "replication_raw.csv", "study_meta.json"],
        json!({ "failed_fits": res.failures.len() }),
    )
}

fn cmd_check(cli: &Cli, suites: &[Suite], out: Option<PathBuf>, cfg: RunConfig) -> Result<i32> {
    let mut check = CheckConfig::default();
    if let Some(s) = cli.seed {
        check.seed = s;
    }
    let chosen: Vec<Suite> = if suites.is_empty() { Suite::ALL.to_vec() } else { suites.to_vec() };
    let mut reports: Vec<SuiteReport> = Vec::new();
    for s in chosen {
        let t = Instant::now();
        let r = run_suite(s, &check)?;
        print!("{}", r.render());
        eprintln!("  {} finished in {:.1}s", s, t.elapsed().as_secs_f64());
        reports.push(r);
    }
    let passed = reports.iter().all(SuiteReport::passed);
    if out.is_some() {
        let run = Run::start("check", cfg, out)?;
        let mut f = create(&run.out, "check_report.json")?;
        serde_json::to_writer_pretty(&mut f, &reports).map_err(|e| Error::Io(e.into()))?;
        f.flush()?;
        run.finish(&["check_report.json"], json!({ "passed": passed }))?;
    }
    println!("{}", if passed { "all suites passed" } else { "check FAILED" });
    Ok(if passed { EXIT_OK } else { EXIT_CHECK })
}

fn dispatch(cli: &Cli) -> Result<i32> {
    let (cfg, out) = resolve(cli)?;
    match &cli.command {
        Command::Simulate { replication, .. } => cmd_simulate(cfg, out, *replication)?,
        Command::Bin { input, .. } => cmd_bin(cfg, out, input)?,
        Command::Fit { input, rearrange, .. } => cmd_fit(cfg, out, input, *rearrange)?,
        Command::Summarize { input } => cmd_summarize(cfg, out, input)?,
        Command::Evaluate { surface, truth } => cmd_evaluate(cfg, out, surface, truth)?,
        Command::Replicate { .. } => cmd_replicate(cfg, out)?,
        Command::Check { suites } => return cmd_check(cli, suites, out, cfg),
    }
    Ok(EXIT_OK)
}

/// Parses `args` (program name first) and runs; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match dispatch(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
