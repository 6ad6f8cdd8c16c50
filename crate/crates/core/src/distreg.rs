//! Distribution regression over a threshold grid: bin latent responses into
//! one count per threshold, fit each threshold independently, and assemble
//! the CDF surface with equal-tailed credible bands.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::mcmc::{fmt_f64, run_chain_with_knots, ModelKind, Observation, PanelDataset, PosteriorDraws, Priors, SamplerConfig};
use crate::randomkit::{derive_stream_id, RngStream};
use crate::spatial::{select_knots_with, KnotSet, Point};

const THRESHOLD_STREAM: u64 = 0x7468_7265;
const SHARED_KNOT_STREAM: u64 = 0x736b_6e74;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThresholdGrid {
    thresholds: Vec<f64>,
}

impl ThresholdGrid {
    pub fn new(thresholds: Vec<f64>) -> Result<Self> {
        if thresholds.is_empty() {
            return Err(Error::Config("threshold grid must not be empty".into()));
        }
        if thresholds.iter().any(|a| !a.is_finite()) {
            return Err(Error::Config("thresholds must be finite".into()));
        }
        if thresholds.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config(format!("thresholds {thresholds:?} must be strictly increasing")));
        }
        Ok(Self { thresholds })
    }

    pub fn values(&self) -> &[f64] {
        &self.thresholds
    }

    pub fn len(&self) -> usize {
        self.thresholds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.thresholds.is_empty()
    }
}

/// Micro-level responses observed at one site and period.
#[derive(Debug, Clone, PartialEq)]
pub struct MicroSample {
    pub period: usize,
    pub site: usize,
    pub location: Point,
    pub covariates: Vec<f64>,
    pub responses: Vec<f64>,
}

/// `#{j : z_j <= a_k}` for every threshold; `responses` need not be sorted.
pub fn threshold_counts(responses: &[f64], grid: &ThresholdGrid) -> Vec<u32> {
    grid.values()
        .iter()
        .map(|&a| responses.iter().filter(|&&z| z <= a).count() as u32)
        .collect()
}

/// One dataset per threshold, all sharing layout and trial counts.
pub fn bin_counts(samples: &[MicroSample], grid: &ThresholdGrid) -> Result<Vec<PanelDataset>> {
    if let Some(s) = samples.iter().find(|s| s.responses.is_empty()) {
        return Err(Error::DimensionMismatch(format!(
            "site {} in period {} has no responses",
            s.site, s.period
        )));
    }
    if samples.iter().any(|s| s.responses.iter().any(|z| !z.is_finite())) {
        return Err(Error::DimensionMismatch("responses must be finite".into()));
    }
    let periods = samples.iter().map(|s| s.period + 1).max().unwrap_or(0);
    let counts: Vec<Vec<u32>> = samples.iter().map(|s| threshold_counts(&s.responses, grid)).collect();
    (0..grid.len())
        .map(|k| {
            let obs = samples
                .iter()
                .zip(&counts)
                .map(|(s, c)| Observation {
                    period: s.period,
                    site: s.site,
                    location: s.location,
                    covariates: s.covariates.clone(),
                    trials: s.responses.len() as u32,
                    successes: c[k],
                })
                .collect();
            PanelDataset::new(periods, obs)
        })
        .collect()
}

/// Per-row identity of a surface, in dataset row order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SurfaceRow {
    pub period: usize,
    pub site: usize,
    pub location: Point,
}

/// Posterior summaries of `F(a_k)` for every row and threshold, row-major `[row][k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DistributionSurface {
    pub model: ModelKind,
    pub thresholds: Vec<f64>,
    pub rows: Vec<SurfaceRow>,
    pub mean: Vec<f64>,
    pub lo95: Vec<f64>,
    pub hi95: Vec<f64>,
    /// Posterior means of the structural-zero and structural-n weights (BIB only).
    pub p0_mean: Option<Vec<f64>>,
    pub p1_mean: Option<Vec<f64>>,
    /// CDF draws per threshold, `draws[k][d * rows + i]`.
    pub draws: Option<Vec<Vec<f64>>>,
}

impl DistributionSurface {
    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn num_thresholds(&self) -> usize {
        self.thresholds.len()
    }

    fn at(&self, row: usize, k: usize) -> usize {
        row * self.thresholds.len() + k
    }

    pub fn mean_at(&self, row: usize, k: usize) -> f64 {
        self.mean[self.at(row, k)]
    }

    pub fn interval_at(&self, row: usize, k: usize) -> (f64, f64) {
        let j = self.at(row, k);
        (self.lo95[j], self.hi95[j])
    }

    /// Means at threshold `k` across rows.
    pub fn means_for_threshold(&self, k: usize) -> Vec<f64> {
        (0..self.num_rows()).map(|i| self.mean_at(i, k)).collect()
    }

    /// `(lo, hi)` at threshold `k` across rows.
    pub fn intervals_for_threshold(&self, k: usize) -> Vec<(f64, f64)> {
        (0..self.num_rows()).map(|i| self.interval_at(i, k)).collect()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["period", "site", "s1", "s2", "threshold", "mean", "lo95", "hi95"];
        let comps = self.p0_mean.as_ref().zip(self.p1_mean.as_ref());
        if comps.is_some() {
            header.extend(["p0_mean", "p1_mean"]);
        }
        w.write_record(&header)?;
        for (i, row) in self.rows.iter().enumerate() {
            for (k, a) in self.thresholds.iter().enumerate() {
                let j = self.at(i, k);
                let mut rec = vec![
                    (row.period + 1).to_string(),
                    row.site.to_string(),
                    fmt_f64(row.location[0]),
                    fmt_f64(row.location[1]),
                    fmt_f64(*a),
                    fmt_f64(self.mean[j]),
                    fmt_f64(self.lo95[j]),
                    fmt_f64(self.hi95[j]),
                ];
                if let Some((p0, p1)) = comps {
                    rec.push(fmt_f64(p0[j]));
                    rec.push(fmt_f64(p1[j]));
                }
                w.write_record(&rec)?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Sample quantile with linear interpolation between order statistics
/// (`h = (n-1)p`), on data already sorted ascending.
pub fn quantile_type7(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty() && (0.0..=1.0).contains(&p));
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Mean and equal-tailed 95% band of one draw vector.
pub fn summarize_draws(draws: &[f64]) -> (f64, f64, f64) {
    let mean = draws.iter().sum::<f64>() / draws.len() as f64;
    let mut s = draws.to_vec();
    s.sort_by(f64::total_cmp);
    let lo = quantile_type7(&s, 0.025);
    let hi = quantile_type7(&s, 0.975);
    // A mean outside its own band needs >2.5% of the mass in one far tail
    // (or summation ulps on flat draws); the surface keeps lo <= mean <= hi.
    (mean.clamp(lo, hi), lo, hi)
}

#[derive(Debug, Clone, Default)]
pub struct FitOptions {
    /// Keep every CDF draw on the surface (needed for rearrangement).
    pub keep_draws: bool,
    /// Worker threads; `None` uses the ambient rayon pool.
    pub jobs: Option<usize>,
}

/// Knots from the pooled sites; shared by every threshold because the layouts agree.
pub fn shared_knots(data: &PanelDataset, cfg: &SamplerConfig) -> Result<KnotSet> {
    let mut rng = RngStream::derived(cfg.seed, &[cfg.stream, SHARED_KNOT_STREAM]);
    select_knots_with(&data.pooled_sites(), cfg.num_knots, cfg.kmeans_options(), &mut rng)
}

/// Stream id of threshold `k`; depends only on `(stream, k)`.
pub fn threshold_stream(stream: u64, k: usize) -> u64 {
    derive_stream_id(&[stream, THRESHOLD_STREAM, k as u64])
}

fn check_layouts(datasets: &[PanelDataset]) -> Result<()> {
    let first = datasets
        .first()
        .ok_or_else(|| Error::Config("at least one threshold dataset is required".into()))?;
    for (k, d) in datasets.iter().enumerate().skip(1) {
        let same = d.num_periods() == first.num_periods()
            && d.len() == first.len()
            && d.trials() == first.trials()
            && d.design() == first.design()
            && d.sites_by_period() == first.sites_by_period();
        if !same {
            return Err(Error::DimensionMismatch("threshold datasets differ in layout".into()).at_threshold(k));
        }
    }
    Ok(())
}

/// Posterior draws of every threshold and the knots they share.
#[derive(Debug, Clone)]
pub struct ThresholdFits {
    pub knots: KnotSet,
    pub fits: Vec<PosteriorDraws>,
}

/// Independent chains, one per dataset, on shared knots.
pub fn fit_thresholds(
    datasets: &[PanelDataset],
    priors: &Priors,
    cfg: &SamplerConfig,
    jobs: Option<usize>,
) -> Result<ThresholdFits> {
    check_layouts(datasets)?;
    cfg.validate()?;
    let knots = shared_knots(&datasets[0], cfg)?;
    let fit_one = |k: usize| -> Result<PosteriorDraws> {
        let c = SamplerConfig {
            stream: threshold_stream(cfg.stream, k),
            ..cfg.clone()
        };
        run_chain_with_knots(&datasets[k], priors, &c, &knots).map_err(|e| e.at_threshold(k))
    };
    let fits: Vec<Result<PosteriorDraws>> = match jobs {
        Some(1) => (0..datasets.len()).map(fit_one).collect(),
        Some(j) => rayon::ThreadPoolBuilder::new()
            .num_threads(j)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?
            .install(|| (0..datasets.len()).into_par_iter().map(fit_one).collect()),
        None => (0..datasets.len()).into_par_iter().map(fit_one).collect(),
    };
    Ok(ThresholdFits {
        knots,
        fits: fits.into_iter().collect::<Result<Vec<_>>>()?,
    })
}

/// Independent fits per threshold, joined into one surface.
pub fn fit_rstdr(
    datasets: &[PanelDataset],
    thresholds: &ThresholdGrid,
    priors: &Priors,
    cfg: &SamplerConfig,
    opts: &FitOptions,
) -> Result<DistributionSurface> {
    if datasets.len() != thresholds.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} datasets for {} thresholds",
            datasets.len(),
            thresholds.len()
        )));
    }
    let fits = fit_thresholds(datasets, priors, cfg, opts.jobs)?;
    Ok(assemble_surface(&datasets[0], thresholds, &fits.fits, opts.keep_draws))
}

/// Joins per-threshold posterior draws into one surface.
pub fn assemble_surface(
    data: &PanelDataset,
    thresholds: &ThresholdGrid,
    fits: &[PosteriorDraws],
    keep_draws: bool,
) -> DistributionSurface {
    let n = data.len();
    let kk = thresholds.len();
    let model = fits[0].model;
    let mut mean = vec![0.0; n * kk];
    let mut lo = vec![0.0; n * kk];
    let mut hi = vec![0.0; n * kk];
    let has_comps = model == ModelKind::Bib && fits.iter().all(|f| f.components.is_some());
    let mut p0 = has_comps.then(|| vec![0.0; n * kk]);
    let mut p1 = has_comps.then(|| vec![0.0; n * kk]);
    for (k, f) in fits.iter().enumerate() {
        let d = f.num_draws() as f64;
        for i in 0..n {
            let (m, l, h) = summarize_draws(&f.cdf_for_obs(i));
            let j = i * kk + k;
            mean[j] = m;
            lo[j] = l;
            hi[j] = h;
            if let (Some(p0), Some(p1), Some(c)) = (p0.as_mut(), p1.as_mut(), f.components.as_ref()) {
                p0[j] = (0..f.num_draws()).map(|s| c.p0[s * n + i]).sum::<f64>() / d;
                p1[j] = (0..f.num_draws()).map(|s| c.p1[s * n + i]).sum::<f64>() / d;
            }
        }
    }
    let rows = (0..n)
        .map(|i| SurfaceRow {
            period: data.period_of(i),
            site: data.site_id(i),
            location: data.location(i),
        })
        .collect();
    DistributionSurface {
        model,
        thresholds: thresholds.values().to_vec(),
        rows,
        mean,
        lo95: lo,
        hi95: hi,
        p0_mean: p0,
        p1_mean: p1,
        draws: keep_draws.then(|| fits.iter().map(|f| (0..f.num_draws()).flat_map(|s| f.cdf_row(s).to_vec()).collect()).collect()),
    }
}

/// Sorts each row's means across thresholds. With draws present, every
/// draw is sorted per row and the bands are recomputed from the sorted draws.
pub fn monotone_rearrange(surface: &DistributionSurface) -> DistributionSurface {
    let mut out = surface.clone();
    let n = surface.num_rows();
    let kk = surface.num_thresholds();
    for i in 0..n {
        let row = i * kk..(i + 1) * kk;
        out.mean[row.clone()].sort_by(f64::total_cmp);
        if surface.draws.is_none() {
            out.lo95[row.clone()].sort_by(f64::total_cmp);
            out.hi95[row].sort_by(f64::total_cmp);
        }
    }
    if let Some(draws) = surface.draws.as_ref() {
        let nd = draws[0].len() / n;
        let mut sorted = draws.clone();
        let mut buf = vec![0.0; kk];
        for d in 0..nd {
            for i in 0..n {
                for k in 0..kk {
                    buf[k] = draws[k][d * n + i];
                }
                buf.sort_by(f64::total_cmp);
                for k in 0..kk {
                    sorted[k][d * n + i] = buf[k];
                }
            }
        }
        for i in 0..n {
            for k in 0..kk {
                let v: Vec<f64> = (0..nd).map(|d| sorted[k][d * n + i]).collect();
                let (_, l, h) = summarize_draws(&v);
                out.lo95[i * kk + k] = l;
                out.hi95[i * kk + k] = h;
            }
            // Bands of sorted draws are monotone; keep the sorted means inside them.
            for k in 0..kk {
                let j = i * kk + k;
                out.mean[j] = out.mean[j].clamp(out.lo95[j], out.hi95[j]);
            }
        }
        out.draws = Some(sorted);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn default_grid() -> ThresholdGrid {
        ThresholdGrid::new(vec![1.0, 2.0, 4.0, 6.0, 8.0, 10.0, 14.0]).unwrap()
    }

    fn sample(period: usize, site: usize, responses: Vec<f64>) -> MicroSample {
        MicroSample {
            period,
            site,
            location: [site as f64 * 0.1, period as f64 * 0.07 + 0.01 * site as f64],
            covariates: vec![1.0, site as f64 * 0.2 - 0.5],
            responses,
        }
    }

    #[test]
    fn grid_validation() {
        assert!(ThresholdGrid::new(vec![]).is_err());
        assert!(ThresholdGrid::new(vec![1.0, 1.0]).is_err());
        assert!(ThresholdGrid::new(vec![2.0, 1.0]).is_err());
        assert!(ThresholdGrid::new(vec![1.0, f64::INFINITY]).is_err());
        assert_eq!(ThresholdGrid::new(vec![0.5]).unwrap().len(), 1);
    }

    #[test]
    fn counting_examples() {
        let g = default_grid();
        assert_eq!(threshold_counts(&[0.5, 3.0, 20.0], &g), vec![1, 1, 2, 2, 2, 2, 2]);
        assert_eq!(threshold_counts(&[15.0, 100.0], &g), vec![0; 7]);
        assert_eq!(threshold_counts(&[0.1, 1.0, 0.9], &g), vec![3; 7]);
    }

    #[test]
    fn bin_counts_layout() {
        let samples = vec![
            sample(1, 0, vec![0.5, 3.0, 20.0]),
            sample(0, 0, vec![5.0]),
            sample(0, 1, vec![1.5, 9.0]),
            sample(1, 1, vec![0.2]),
        ];
        let ds = bin_counts(&samples, &default_grid()).unwrap();
        assert_eq!(ds.len(), 7);
        assert_eq!(ds[0].num_periods(), 2);
        assert_eq!(ds[0].trials(), &[1, 2, 3, 1]);
        assert_eq!(ds[2].successes(), &[0, 1, 2, 1]);
        assert!(bin_counts(&[sample(0, 0, vec![])], &default_grid()).is_err());
        assert!(bin_counts(&[sample(0, 0, vec![f64::NAN])], &default_grid()).is_err());
    }

    proptest! {
        #[test]
        fn binned_counts_monotone_and_bounded(
            responses in prop::collection::vec(prop::collection::vec(0.0f64..20.0, 1..30), 1..6)
        ) {
            let samples: Vec<MicroSample> =
                responses.into_iter().enumerate().map(|(i, r)| sample(0, i, r)).collect();
            let ds = bin_counts(&samples, &default_grid()).unwrap();
            for i in 0..samples.len() {
                for k in 0..ds.len() {
                    prop_assert_eq!(ds[k].trials()[i] as usize, samples[i].responses.len());
                    prop_assert!(ds[k].successes()[i] <= ds[k].trials()[i]);
                    if k > 0 {
                        prop_assert!(ds[k].successes()[i] >= ds[k - 1].successes()[i]);
                    }
                }
            }
        }

        #[test]
        fn type7_quantile_is_bracketed(mut v in prop::collection::vec(-5.0f64..5.0, 1..50), p in 0.0f64..1.0) {
            v.sort_by(f64::total_cmp);
            let q = quantile_type7(&v, p);
            prop_assert!(q >= v[0] && q <= v[v.len() - 1]);
        }
    }

    #[test]
    fn type7_matches_reference_values() {
        let v = [1.0, 2.0, 3.0, 4.0, 10.0];
        assert_eq!(quantile_type7(&v, 0.0), 1.0);
        assert_eq!(quantile_type7(&v, 1.0), 10.0);
        assert_eq!(quantile_type7(&v, 0.5), 3.0);
        // h = 4 * 0.9 = 3.6 -> 4 + 0.6 * 6
        assert!((quantile_type7(&v, 0.9) - 7.6).abs() < 1e-12);
        let (m, lo, hi) = summarize_draws(&[0.3; 10]);
        assert_eq!((m, lo, hi), (0.3, 0.3, 0.3));
    }

    fn toy_surface(means: Vec<f64>, kk: usize) -> DistributionSurface {
        let n = means.len() / kk;
        DistributionSurface {
            model: ModelKind::Bib,
            thresholds: (1..=kk).map(|k| k as f64).collect(),
            rows: (0..n)
                .map(|i| SurfaceRow {
                    period: 0,
                    site: i,
                    location: [0.0, 0.0],
                })
                .collect(),
            lo95: means.iter().map(|m| m - 0.1).collect(),
            hi95: means.iter().map(|m| m + 0.1).collect(),
            mean: means,
            p0_mean: None,
            p1_mean: None,
            draws: None,
        }
    }

    #[test]
    fn rearrangement_examples() {
        let s = toy_surface(vec![0.3, 0.2, 0.5], 3);
        let r = monotone_rearrange(&s);
        assert_eq!(r.mean, vec![0.2, 0.3, 0.5]);
        let mono = toy_surface(vec![0.1, 0.2, 0.7, 0.0, 0.5, 0.5], 3);
        assert_eq!(monotone_rearrange(&mono), mono);
    }

    #[test]
    fn rearrangement_sorts_draws() {
        let mut s = toy_surface(vec![0.6, 0.4], 2);
        // Two draws, one row: threshold 0 draws (0.7, 0.5), threshold 1 draws (0.3, 0.5).
        s.draws = Some(vec![vec![0.7, 0.5], vec![0.3, 0.5]]);
        let r = monotone_rearrange(&s);
        assert_eq!(r.draws.as_ref().unwrap(), &vec![vec![0.3, 0.5], vec![0.7, 0.5]]);
        assert_eq!(r.mean, vec![0.4, 0.6]);
        assert!(r.lo95[0] <= r.mean[0] && r.mean[0] <= r.hi95[0]);
    }

    proptest! {
        #[test]
        fn rearranged_rows_are_sorted_permutations(means in prop::collection::vec(0.0f64..1.0, 1..8).prop_flat_map(|m| {
            let kk = m.len();
            (prop::collection::vec(0.0f64..1.0, kk * 3), Just(kk))
        })) {
            let (vals, kk) = means;
            let s = toy_surface(vals.clone(), kk);
            let r = monotone_rearrange(&s);
            for i in 0..3 {
                let mut orig = vals[i * kk..(i + 1) * kk].to_vec();
                orig.sort_by(f64::total_cmp);
                prop_assert_eq!(&r.mean[i * kk..(i + 1) * kk], &orig[..]);
            }
        }
    }

    #[test]
    fn threshold_streams_are_distinct_and_stable() {
        let ids: Vec<u64> = (0..7).map(|k| threshold_stream(3, k)).collect();
        let mut u = ids.clone();
        u.sort();
        u.dedup();
        assert_eq!(u.len(), 7);
        assert_eq!(threshold_stream(3, 0), ids[0]);
        assert_ne!(threshold_stream(4, 0), ids[0]);
    }

    fn tiny_samples(seed: u64) -> Vec<MicroSample> {
        use rand::Rng;
        let mut rng = RngStream::new(seed, 5);
        let mut out = Vec::new();
        for t in 0..3 {
            for i in 0..8 {
                let n = rng.random_range(5..15);
                out.push(MicroSample {
                    period: t,
                    site: i,
                    location: [rng.random(), rng.random()],
                    covariates: vec![1.0, rng.random::<f64>() - 0.5],
                    responses: (0..n).map(|_| rng.random::<f64>() * 6.0).collect(),
                });
            }
        }
        out
    }

    fn quick_cfg() -> SamplerConfig {
        SamplerConfig {
            iterations: 120,
            burn_in: 40,
            num_knots: 4,
            kmeans_restarts: 3,
            seed: 11,
            ..SamplerConfig::default()
        }
    }

    #[test]
    fn single_threshold_fit_is_unaffected_by_others() {
        let samples = tiny_samples(1);
        let ds = bin_counts(&samples, &ThresholdGrid::new(vec![1.0, 2.0, 4.0]).unwrap()).unwrap();
        let priors = Priors::default_for(&ds[0]);
        let cfg = quick_cfg();
        let opts = FitOptions { jobs: Some(1), ..Default::default() };
        let three = fit_rstdr(&ds, &ThresholdGrid::new(vec![1.0, 2.0, 4.0]).unwrap(), &priors, &cfg, &opts).unwrap();
        let one = fit_rstdr(&ds[..1], &ThresholdGrid::new(vec![1.0]).unwrap(), &priors, &cfg, &opts).unwrap();
        assert_eq!(one.means_for_threshold(0), three.means_for_threshold(0));
        assert_eq!(one.intervals_for_threshold(0), three.intervals_for_threshold(0));
        for j in 0..three.mean.len() {
            assert!((0.0..=1.0).contains(&three.lo95[j]));
            assert!(three.lo95[j] <= three.mean[j] && three.mean[j] <= three.hi95[j]);
            assert!(three.hi95[j] <= 1.0);
        }
        assert!(three.p0_mean.is_some());
    }

    #[test]
    fn parallel_fit_matches_serial() {
        let samples = tiny_samples(2);
        let g = ThresholdGrid::new(vec![1.0, 3.0]).unwrap();
        let ds = bin_counts(&samples, &g).unwrap();
        let priors = Priors::default_for(&ds[0]);
        let a = fit_rstdr(&ds, &g, &priors, &quick_cfg(), &FitOptions { jobs: Some(1), ..Default::default() }).unwrap();
        let b = fit_rstdr(&ds, &g, &priors, &quick_cfg(), &FitOptions { jobs: Some(2), ..Default::default() }).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn all_zero_threshold_runs() {
        let samples: Vec<MicroSample> = tiny_samples(3)
            .into_iter()
            .map(|mut s| {
                s.responses.iter_mut().for_each(|z| *z += 100.0);
                s
            })
            .collect();
        let g = ThresholdGrid::new(vec![1.0]).unwrap();
        let ds = bin_counts(&samples, &g).unwrap();
        assert!(ds[0].successes().iter().all(|&y| y == 0));
        let priors = Priors::default_for(&ds[0]);
        let s = fit_rstdr(&ds, &g, &priors, &quick_cfg(), &FitOptions::default()).unwrap();
        let avg = s.mean.iter().sum::<f64>() / s.mean.len() as f64;
        assert!(avg < 0.1, "mean F {avg}");
        assert!(s.lo95.iter().all(|&l| l < 0.05));
    }

    #[test]
    fn layout_mismatch_names_threshold() {
        let a = bin_counts(&tiny_samples(1), &ThresholdGrid::new(vec![1.0]).unwrap()).unwrap();
        let b = bin_counts(&tiny_samples(2), &ThresholdGrid::new(vec![1.0]).unwrap()).unwrap();
        let g = ThresholdGrid::new(vec![1.0, 2.0]).unwrap();
        let err = fit_rstdr(&[a[0].clone(), b[0].clone()], &g, &Priors::default_for(&a[0]), &quick_cfg(), &FitOptions::default())
            .unwrap_err();
        assert!(matches!(err, Error::AtThreshold { index: 1, .. }));
    }

    #[test]
    fn surface_csv_schema() {
        let samples = tiny_samples(4);
        let g = ThresholdGrid::new(vec![2.0]).unwrap();
        let ds = bin_counts(&samples, &g).unwrap();
        let priors = Priors::default_for(&ds[0]);
        let bib = fit_rstdr(&ds, &g, &priors, &quick_cfg(), &FitOptions::default()).unwrap();
        let bn_cfg = SamplerConfig { model: ModelKind::Bn, ..quick_cfg() };
        let bn = fit_rstdr(&ds, &g, &priors, &bn_cfg, &FitOptions::default()).unwrap();
        let mut a = Vec::new();
        bib.write_csv(&mut a).unwrap();
        let mut b = Vec::new();
        bn.write_csv(&mut b).unwrap();
        let a = String::from_utf8(a).unwrap();
        let b = String::from_utf8(b).unwrap();
        assert!(a.starts_with("period,site,s1,s2,threshold,mean,lo95,hi95,p0_mean,p1_mean\n"));
        assert!(b.starts_with("period,site,s1,s2,threshold,mean,lo95,hi95\n"));
        assert_eq!(a.lines().count(), 1 + samples.len());
    }
}
