//! C ABI for the sampler.
//!
//! Every function returns an [`RstdrStatus`]; on failure the message is
//! available from [`rstdr_last_error_message`] on the same thread. Handles
//! are opaque and must be released with their `_free` function. No
//! function unwinds across the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use rstdr::distreg::summarize_draws;
use rstdr::mcmc::{run_chain, ModelKind, Observation, PanelDataset, PosteriorDraws, Priors, SamplerConfig};
use rstdr::randomkit::{draw_pg, pg_mean, pg_variance, RngStream};
use rstdr::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RstdrStatus {
    Ok = 0,
    NullPointer = 1,
    Config = 2,
    Numerical = 3,
    Schema = 4,
    Io = 5,
    Dimension = 6,
    OutOfRange = 7,
    Panic = 8,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RstdrModel {
    Bib = 0,
    Bn = 1,
}

/// Seeded random stream.
pub struct RstdrRng {
    inner: RngStream,
}

/// Panel of binomial counts with covariates `(1, x)`.
pub struct RstdrDataset {
    inner: PanelDataset,
}

/// Posterior draws of one chain.
pub struct RstdrFit {
    inner: PosteriorDraws,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let c = CString::new(msg.into().replace('\0', " ")).expect("interior NULs removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> RstdrStatus {
    match e.root() {
        Error::NotPositiveDefinite { .. } | Error::InvalidShape(_) | Error::InvalidSimplex(_) | Error::InvalidRange(_) => RstdrStatus::Numerical,
        Error::Schema(_) | Error::Csv(_) => RstdrStatus::Schema,
        Error::Io(_) => RstdrStatus::Io,
        Error::DimensionMismatch(_) => RstdrStatus::Dimension,
        _ => RstdrStatus::Config,
    }
}

/// Runs `f`, converting errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), (RstdrStatus, String)>) -> RstdrStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => RstdrStatus::Ok,
        Ok(Err((s, m))) => {
            set_error(m);
            s
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("internal panic: {msg}"));
            RstdrStatus::Panic
        }
    }
}

fn lib_err(e: Error) -> (RstdrStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (RstdrStatus, String) {
    (RstdrStatus::NullPointer, format!("{what} is NULL"))
}

/// `&[T]` from a C array; `len == 0` accepts NULL.
unsafe fn slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], (RstdrStatus, String)> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

static VERSION: &CStr = match CStr::from_bytes_with_nul(concat!(env!("CARGO_PKG_VERSION"), "\0").as_bytes()) {
    Ok(s) => s,
    Err(_) => panic!("version has no interior NUL"),
};

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn rstdr_version() -> *const c_char {
    VERSION.as_ptr()
}

/// Message of the last failed call on this thread, or NULL. Valid until the next call.
#[no_mangle]
pub extern "C" fn rstdr_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn rstdr_rng_new(seed: u64, stream: u64, out: *mut *mut RstdrRng) -> RstdrStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = Box::into_raw(Box::new(RstdrRng {
            inner: RngStream::new(seed, stream),
        }));
        Ok(())
    })
}

/// # Safety
/// `rng` must come from [`rstdr_rng_new`] and not be used afterwards. NULL is ignored.
#[no_mangle]
pub unsafe extern "C" fn rstdr_rng_free(rng: *mut RstdrRng) {
    if !rng.is_null() {
        drop(Box::from_raw(rng));
    }
}

/// One `PG(b, c)` draw.
///
/// # Safety
/// `rng` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn rstdr_pg_draw(rng: *mut RstdrRng, b: u32, c: f64, out: *mut f64) -> RstdrStatus {
    guard(|| {
        let rng = rng.as_mut().ok_or_else(|| null("rng"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = draw_pg(b, c, &mut rng.inner).map_err(lib_err)?;
        Ok(())
    })
}

/// Closed-form mean and variance of `PG(b, c)`; either output may be NULL.
///
/// # Safety
/// Non-NULL outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn rstdr_pg_moments(b: f64, c: f64, mean: *mut f64, variance: *mut f64) -> RstdrStatus {
    guard(|| {
        if !(b > 0.0 && b.is_finite() && c.is_finite()) {
            return Err((RstdrStatus::OutOfRange, format!("need b > 0 and finite c, got b = {b}, c = {c}")));
        }
        if !mean.is_null() {
            *mean = pg_mean(b, c);
        }
        if !variance.is_null() {
            *variance = pg_variance(b, c);
        }
        Ok(())
    })
}

/// Builds a dataset from parallel arrays of length `n`; `period` is zero-based.
///
/// # Safety
/// Each array must hold `n` readable elements; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rstdr_dataset_new(
    n: usize,
    periods: usize,
    period: *const usize,
    site: *const usize,
    s1: *const f64,
    s2: *const f64,
    x: *const f64,
    trials: *const u32,
    successes: *const u32,
    out: *mut *mut RstdrDataset,
) -> RstdrStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let period = slice(period, n, "period")?;
        let site = slice(site, n, "site")?;
        let s1 = slice(s1, n, "s1")?;
        let s2 = slice(s2, n, "s2")?;
        let x = slice(x, n, "x")?;
        let trials = slice(trials, n, "trials")?;
        let successes = slice(successes, n, "successes")?;
        let obs = (0..n)
            .map(|i| Observation {
                period: period[i],
                site: site[i],
                location: [s1[i], s2[i]],
                covariates: vec![1.0, x[i]],
                trials: trials[i],
                successes: successes[i],
            })
            .collect();
        let inner = PanelDataset::new(periods, obs).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(RstdrDataset { inner }));
        Ok(())
    })
}

/// # Safety
/// `data` must come from [`rstdr_dataset_new`] and not be used afterwards. NULL is ignored.
#[no_mangle]
pub unsafe extern "C" fn rstdr_dataset_free(data: *mut RstdrDataset) {
    if !data.is_null() {
        drop(Box::from_raw(data));
    }
}

/// Runs one chain with default priors. `sampler_toml` may be NULL for the
/// default sampler settings; otherwise it is a TOML table of sampler keys
/// (`iterations`, `burn_in`, `num_knots`, `seed`, ...). `model` overrides
/// any `model` key.
///
/// # Safety
/// `data` must be live, `sampler_toml` NULL or NUL-terminated, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn rstdr_fit(data: *const RstdrDataset, sampler_toml: *const c_char, model: RstdrModel, out: *mut *mut RstdrFit) -> RstdrStatus {
    guard(|| {
        let data = data.as_ref().ok_or_else(|| null("data"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let mut cfg: SamplerConfig = if sampler_toml.is_null() {
            SamplerConfig::default()
        } else {
            let text = CStr::from_ptr(sampler_toml)
                .to_str()
                .map_err(|e| (RstdrStatus::Config, format!("sampler config is not UTF-8: {e}")))?;
            toml::from_str(text).map_err(|e| (RstdrStatus::Config, format!("sampler config: {e}")))?
        };
        cfg.model = match model {
            RstdrModel::Bib => ModelKind::Bib,
            RstdrModel::Bn => ModelKind::Bn,
        };
        let priors = Priors::default_for(&data.inner);
        let inner = run_chain(&data.inner, &priors, &cfg).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(RstdrFit { inner }));
        Ok(())
    })
}

/// # Safety
/// `fit` must come from [`rstdr_fit`] and not be used afterwards. NULL is ignored.
#[no_mangle]
pub unsafe extern "C" fn rstdr_fit_free(fit: *mut RstdrFit) {
    if !fit.is_null() {
        drop(Box::from_raw(fit));
    }
}

/// Retained draws and observations of a fit.
///
/// # Safety
/// `fit` must be live; non-NULL outputs writable.
#[no_mangle]
pub unsafe extern "C" fn rstdr_fit_dims(fit: *const RstdrFit, draws: *mut usize, observations: *mut usize) -> RstdrStatus {
    guard(|| {
        let fit = fit.as_ref().ok_or_else(|| null("fit"))?;
        if !draws.is_null() {
            *draws = fit.inner.num_draws();
        }
        if !observations.is_null() {
            *observations = fit.inner.num_obs();
        }
        Ok(())
    })
}

/// Posterior mean and equal-tailed 95% band of the CDF value of observation `obs`.
///
/// # Safety
/// `fit` must be live; the three outputs writable.
#[no_mangle]
pub unsafe extern "C" fn rstdr_fit_cdf_summary(fit: *const RstdrFit, obs: usize, mean: *mut f64, lo95: *mut f64, hi95: *mut f64) -> RstdrStatus {
    guard(|| {
        let fit = fit.as_ref().ok_or_else(|| null("fit"))?;
        if mean.is_null() || lo95.is_null() || hi95.is_null() {
            return Err(null("output"));
        }
        if obs >= fit.inner.num_obs() {
            return Err((RstdrStatus::OutOfRange, format!("observation {obs} out of range (have {})", fit.inner.num_obs())));
        }
        let (m, l, h) = summarize_draws(&fit.inner.cdf_for_obs(obs));
        *mean = m;
        *lo95 = l;
        *hi95 = h;
        Ok(())
    })
}

/// Copies every CDF draw of observation `obs` into `buf` (capacity `len`).
///
/// # Safety
/// `fit` must be live; `buf` must hold `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn rstdr_fit_cdf_draws(fit: *const RstdrFit, obs: usize, buf: *mut f64, len: usize) -> RstdrStatus {
    guard(|| {
        let fit = fit.as_ref().ok_or_else(|| null("fit"))?;
        if obs >= fit.inner.num_obs() {
            return Err((RstdrStatus::OutOfRange, format!("observation {obs} out of range (have {})", fit.inner.num_obs())));
        }
        let d = fit.inner.num_draws();
        if len < d {
            return Err((RstdrStatus::OutOfRange, format!("buffer holds {len} values, need {d}")));
        }
        if buf.is_null() {
            return Err(null("buf"));
        }
        std::slice::from_raw_parts_mut(buf, d).copy_from_slice(&fit.inner.cdf_for_obs(obs));
        Ok(())
    })
}
