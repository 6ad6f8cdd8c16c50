use std::ffi::{CStr, CString};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use rstdr::distreg::summarize_draws;
use rstdr::mcmc::{run_chain, ModelKind, Observation, PanelDataset, Priors, SamplerConfig};
use rstdr::randomkit::{draw_pg, RngStream};
use rstdr_ffi::*;

struct Arrays {
    period: Vec<usize>,
    site: Vec<usize>,
    s1: Vec<f64>,
    s2: Vec<f64>,
    x: Vec<f64>,
    n: Vec<u32>,
    y: Vec<u32>,
}

fn arrays() -> Arrays {
    let mut a = Arrays { period: vec![], site: vec![], s1: vec![], s2: vec![], x: vec![], n: vec![], y: vec![] };
    for t in 0..2 {
        for i in 0..6 {
            a.period.push(t);
            a.site.push(i);
            a.s1.push((i as f64 * 0.37 + t as f64 * 0.11) % 1.0);
            a.s2.push((i as f64 * 0.61 + 0.2) % 1.0);
            a.x.push(i as f64 / 6.0 - 0.5);
            a.n.push(5 + i as u32);
            a.y.push(((i + t) % 5) as u32);
        }
    }
    a
}

fn dataset(a: &Arrays) -> *mut RstdrDataset {
    let mut out = ptr::null_mut();
    let s = unsafe {
        rstdr_dataset_new(a.n.len(), 2, a.period.as_ptr(), a.site.as_ptr(), a.s1.as_ptr(), a.s2.as_ptr(), a.x.as_ptr(), a.n.as_ptr(), a.y.as_ptr(), &mut out)
    };
    assert_eq!(s, RstdrStatus::Ok);
    out
}

fn last_error() -> String {
    let p = rstdr_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

const SAMPLER: &str = "iterations = 40\nburn_in = 10\nnum_knots = 3\nseed = 11\n";

#[test]
fn version_matches_crate() {
    let v = unsafe { CStr::from_ptr(rstdr_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn pg_draws_match_library_stream() {
    let mut rng = ptr::null_mut();
    assert_eq!(unsafe { rstdr_rng_new(5, 3, &mut rng) }, RstdrStatus::Ok);
    let mut reference = RngStream::new(5, 3);
    for c in [0.0, 0.7, 3.5] {
        let mut v = f64::NAN;
        assert_eq!(unsafe { rstdr_pg_draw(rng, 2, c, &mut v) }, RstdrStatus::Ok);
        assert_eq!(v, draw_pg(2, c, &mut reference).unwrap());
    }
    unsafe { rstdr_rng_free(rng) };

    let (mut m, mut var) = (0.0, 0.0);
    assert_eq!(unsafe { rstdr_pg_moments(1.0, 0.0, &mut m, &mut var) }, RstdrStatus::Ok);
    assert!((m - 0.25).abs() < 1e-15 && (var - 1.0 / 24.0).abs() < 1e-15);
    assert_eq!(unsafe { rstdr_pg_moments(0.0, 1.0, &mut m, ptr::null_mut()) }, RstdrStatus::OutOfRange);
    assert!(last_error().contains("b > 0"));
}

#[test]
fn null_handles_are_reported() {
    let mut v = 0.0;
    assert_eq!(unsafe { rstdr_pg_draw(ptr::null_mut(), 1, 0.0, &mut v) }, RstdrStatus::NullPointer);
    assert!(last_error().contains("rng"));
    assert_eq!(unsafe { rstdr_rng_new(1, 1, ptr::null_mut()) }, RstdrStatus::NullPointer);
    let mut fit = ptr::null_mut();
    assert_eq!(unsafe { rstdr_fit(ptr::null(), ptr::null(), RstdrModel::Bib, &mut fit) }, RstdrStatus::NullPointer);
    assert!(fit.is_null());
    unsafe {
        rstdr_rng_free(ptr::null_mut());
        rstdr_dataset_free(ptr::null_mut());
        rstdr_fit_free(ptr::null_mut());
    }
    // a successful call clears the message
    assert_eq!(unsafe { rstdr_pg_moments(1.0, 0.0, &mut v, ptr::null_mut()) }, RstdrStatus::Ok);
    assert!(rstdr_last_error_message().is_null());
}

#[test]
fn invalid_counts_are_rejected() {
    let mut a = arrays();
    a.y[3] = a.n[3] + 1;
    let mut out = ptr::null_mut();
    let s = unsafe {
        rstdr_dataset_new(a.n.len(), 2, a.period.as_ptr(), a.site.as_ptr(), a.s1.as_ptr(), a.s2.as_ptr(), a.x.as_ptr(), a.n.as_ptr(), a.y.as_ptr(), &mut out)
    };
    assert_eq!(s, RstdrStatus::Dimension);
    assert!(out.is_null());
    assert!(last_error().contains("invalid count"));
    let s = unsafe { rstdr_dataset_new(3, 1, ptr::null(), ptr::null(), ptr::null(), ptr::null(), ptr::null(), ptr::null(), ptr::null(), &mut out) };
    assert_eq!(s, RstdrStatus::NullPointer);
}

#[test]
fn bad_sampler_config_is_a_config_error() {
    let a = arrays();
    let data = dataset(&a);
    let toml = CString::new("iterations = \"many\"").unwrap();
    let mut fit = ptr::null_mut();
    assert_eq!(unsafe { rstdr_fit(data, toml.as_ptr(), RstdrModel::Bib, &mut fit) }, RstdrStatus::Config);
    assert!(last_error().contains("sampler config"));
    unsafe { rstdr_dataset_free(data) };
}

#[test]
fn fit_matches_library_chain() {
    let a = arrays();
    let data = dataset(&a);
    let toml = CString::new(SAMPLER).unwrap();
    for (model, kind) in [(RstdrModel::Bib, ModelKind::Bib), (RstdrModel::Bn, ModelKind::Bn)] {
        let mut fit = ptr::null_mut();
        assert_eq!(unsafe { rstdr_fit(data, toml.as_ptr(), model, &mut fit) }, RstdrStatus::Ok, "{}", last_error());

        let obs: Vec<Observation> = (0..a.n.len())
            .map(|i| Observation {
                period: a.period[i],
                site: a.site[i],
                location: [a.s1[i], a.s2[i]],
                covariates: vec![1.0, a.x[i]],
                trials: a.n[i],
                successes: a.y[i],
            })
            .collect();
        let reference_data = PanelDataset::new(2, obs).unwrap();
        let mut cfg: SamplerConfig = toml::from_str(SAMPLER).unwrap();
        cfg.model = kind;
        let reference = run_chain(&reference_data, &Priors::default_for(&reference_data), &cfg).unwrap();

        let (mut d, mut n) = (0, 0);
        assert_eq!(unsafe { rstdr_fit_dims(fit, &mut d, &mut n) }, RstdrStatus::Ok);
        assert_eq!((d, n), (30, 12));
        let mut buf = vec![0.0; d];
        for i in 0..n {
            assert_eq!(unsafe { rstdr_fit_cdf_draws(fit, i, buf.as_mut_ptr(), d) }, RstdrStatus::Ok);
            assert_eq!(buf, reference.cdf_for_obs(i));
            let (mut m, mut lo, mut hi) = (0.0, 0.0, 0.0);
            assert_eq!(unsafe { rstdr_fit_cdf_summary(fit, i, &mut m, &mut lo, &mut hi) }, RstdrStatus::Ok);
            assert_eq!((m, lo, hi), summarize_draws(&buf));
            assert!(lo <= m && m <= hi);
        }
        assert_eq!(unsafe { rstdr_fit_cdf_draws(fit, 0, buf.as_mut_ptr(), d - 1) }, RstdrStatus::OutOfRange);
        let (mut m, mut lo, mut hi) = (0.0, 0.0, 0.0);
        assert_eq!(unsafe { rstdr_fit_cdf_summary(fit, n, &mut m, &mut lo, &mut hi) }, RstdrStatus::OutOfRange);
        unsafe { rstdr_fit_free(fit) };
    }
    unsafe { rstdr_dataset_free(data) };
}

const C_PROGRAM: &str = r#"
#include <stdio.h>
#include "rstdr.h"

int main(void) {
    size_t period[4] = {0, 0, 1, 1}, site[4] = {0, 1, 0, 1};
    double s1[4] = {0.1, 0.8, 0.2, 0.7}, s2[4] = {0.3, 0.6, 0.9, 0.1}, x[4] = {-0.5, 0.5, 0.0, 0.2};
    uint32_t n[4] = {6, 8, 5, 9}, y[4] = {2, 7, 0, 4};
    RstdrDataset *data = NULL;
    RstdrFit *fit = NULL;
    RstdrRng *rng = NULL;
    double v, m, lo, hi;
    size_t draws, obs;
    if (rstdr_rng_new(1, 2, &rng) != RSTDR_STATUS_OK) return 1;
    if (rstdr_pg_draw(rng, 1, 0.5, &v) != RSTDR_STATUS_OK || !(v > 0)) return 2;
    rstdr_rng_free(rng);
    if (rstdr_dataset_new(4, 2, period, site, s1, s2, x, n, y, &data) != RSTDR_STATUS_OK) return 3;
    if (rstdr_fit(data, "iterations = 20\nburn_in = 5\nnum_knots = 2\n", RSTDR_MODEL_BIB, &fit) != RSTDR_STATUS_OK) {
        fprintf(stderr, "%s\n", rstdr_last_error_message());
        return 4;
    }
    if (rstdr_fit_dims(fit, &draws, &obs) != RSTDR_STATUS_OK || draws != 15 || obs != 4) return 5;
    if (rstdr_fit_cdf_summary(fit, 9, &m, &lo, &hi) != RSTDR_STATUS_OUT_OF_RANGE) return 6;
    if (rstdr_last_error_message() == NULL) return 7;
    if (rstdr_fit_cdf_summary(fit, 1, &m, &lo, &hi) != RSTDR_STATUS_OK || !(lo <= m && m <= hi)) return 8;
    printf("%s %.6f\n", rstdr_version(), m);
    rstdr_fit_free(fit);
    rstdr_dataset_free(data);
    return 0;
}
"#;

#[test]
fn c_program_links_against_header_and_library() {
    let compiler = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    if Command::new(&compiler).arg("--version").output().is_err() {
        eprintln!("no C compiler available; skipping");
        return;
    }
    // test binaries live in <profile>/deps
    let profile_dir: PathBuf = std::env::current_exe().unwrap().parent().unwrap().parent().unwrap().to_path_buf();
    let lib = profile_dir.join("librstdr_ffi.so");
    assert!(lib.exists(), "shared library not built at {}", lib.display());
    let include = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("include");
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("smoke.c");
    let exe = dir.path().join("smoke");
    std::fs::write(&src, C_PROGRAM).unwrap();
    let status = Command::new(&compiler)
        .args(["-std=c99", "-Wall", "-Werror"])
        .arg("-I")
        .arg(&include)
        .arg(&src)
        .arg(&lib)
        .arg(format!("-Wl,-rpath,{}", profile_dir.display()))
        .arg("-o")
        .arg(&exe)
        .status()
        .unwrap();
    assert!(status.success());
    let out = Command::new(&exe).output().unwrap();
    assert!(out.status.success(), "exit {:?}: {}", out.status.code(), String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).starts_with(env!("CARGO_PKG_VERSION")));
}
