//! Exponential correlation kernel, k-means knot selection and the Gaussian
//! predictive process projection `D̄_t = c̄_t(φ)ᵀ C̄(φ)⁻¹`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{cholesky, CholeskyFactor, SymMatrix};

pub type Point = [f64; 2];

#[inline]
pub fn distance(a: &Point, b: &Point) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// `exp(-d / φ)`.
pub fn exp_correlation(d: f64, phi: f64) -> Result<f64> {
    if !(phi > 0.0 && phi.is_finite()) {
        return Err(Error::InvalidRange(phi));
    }
    Ok((-d / phi).exp())
}

/// Isotropic correlation function of distance.
pub trait CorrelationKernel {
    fn correlation(&self, d: f64) -> f64;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExponentialKernel {
    phi: f64,
}

impl ExponentialKernel {
    pub fn new(phi: f64) -> Result<Self> {
        exp_correlation(0.0, phi)?;
        Ok(Self { phi })
    }

    pub fn phi(&self) -> f64 {
        self.phi
    }
}

impl CorrelationKernel for ExponentialKernel {
    #[inline]
    fn correlation(&self, d: f64) -> f64 {
        (-d / self.phi).exp()
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SiteSet {
    pub coords: Vec<Point>,
}

impl SiteSet {
    pub fn new(coords: Vec<Point>) -> Result<Self> {
        if coords.iter().flatten().any(|c| !c.is_finite()) {
            return Err(Error::DimensionMismatch("site coordinates must be finite".into()));
        }
        Ok(Self { coords })
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    /// Distinct locations in first-seen order.
    pub fn distinct(&self) -> Vec<Point> {
        let mut sorted: Vec<(usize, Point)> = self.coords.iter().copied().enumerate().collect();
        sorted.sort_by(|a, b| {
            a.1[0]
                .total_cmp(&b.1[0])
                .then(a.1[1].total_cmp(&b.1[1]))
                .then(a.0.cmp(&b.0))
        });
        sorted.dedup_by(|a, b| a.1 == b.1);
        sorted.sort_by_key(|p| p.0);
        sorted.into_iter().map(|p| p.1).collect()
    }

    pub fn max_pairwise_distance(&self) -> f64 {
        let pts = self.distinct();
        let mut best = 0.0f64;
        for i in 0..pts.len() {
            for j in (i + 1)..pts.len() {
                best = best.max(distance(&pts[i], &pts[j]));
            }
        }
        best
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KnotSet {
    knots: Vec<Point>,
}

impl KnotSet {
    pub fn new(knots: Vec<Point>) -> Result<Self> {
        if knots.is_empty() {
            return Err(Error::DimensionMismatch("at least one knot is required".into()));
        }
        for i in 0..knots.len() {
            for j in (i + 1)..knots.len() {
                if knots[i] == knots[j] {
                    return Err(Error::NotPositiveDefinite { pivot: j, value: 0.0 });
                }
            }
        }
        Ok(Self { knots })
    }

    pub fn len(&self) -> usize {
        self.knots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.knots.is_empty()
    }

    pub fn points(&self) -> &[Point] {
        &self.knots
    }
}

/// `C̄(φ)`: knot-to-knot correlations.
pub fn knot_covariance(knots: &KnotSet, phi: f64) -> Result<SymMatrix> {
    let kernel = ExponentialKernel::new(phi)?;
    let pts = knots.points();
    let m = pts.len();
    let c = DMatrix::from_fn(m, m, |i, j| {
        if i == j {
            1.0
        } else {
            kernel.correlation(distance(&pts[i], &pts[j]))
        }
    });
    Ok(SymMatrix::symmetrized(c))
}

/// Tuning for [`select_knots_with`].
#[derive(Debug, Clone, Copy)]
pub struct KMeansOptions {
    pub restarts: usize,
    pub max_iterations: usize,
}

impl Default for KMeansOptions {
    fn default() -> Self {
        Self {
            restarts: 50,
            max_iterations: 300,
        }
    }
}

#[derive(Debug, Clone)]
pub struct KMeansResult {
    pub centroids: Vec<Point>,
    pub assignment: Vec<usize>,
    pub wcss: f64,
    /// WCSS after each Lloyd iteration of the winning restart.
    pub wcss_trace: Vec<f64>,
}

/// Within-cluster sum of squares of `points` against their nearest centroid.
pub fn wcss(points: &[Point], centroids: &[Point]) -> f64 {
    points
        .iter()
        .map(|p| {
            centroids
                .iter()
                .map(|c| (p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2))
                .fold(f64::INFINITY, f64::min)
        })
        .sum()
}

fn nearest(p: &Point, centroids: &[Point]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (k, c) in centroids.iter().enumerate() {
        let d = (p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2);
        if d < best.1 {
            best = (k, d);
        }
    }
    best
}

fn kmeans_plus_plus<R: Rng + ?Sized>(points: &[Point], k: usize, rng: &mut R) -> Vec<Point> {
    let mut centroids = Vec::with_capacity(k);
    centroids.push(points[rng.random_range(0..points.len())]);
    let mut d2: Vec<f64> = points.iter().map(|p| nearest(p, &centroids).1).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let idx = if total > 0.0 {
            let u = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut chosen = points.len() - 1;
            for (i, d) in d2.iter().enumerate() {
                acc += d;
                if u < acc && *d > 0.0 {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            rng.random_range(0..points.len())
        };
        let c = points[idx];
        centroids.push(c);
        for (p, d) in points.iter().zip(d2.iter_mut()) {
            *d = d.min((p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2));
        }
    }
    centroids
}

fn lloyd(points: &[Point], mut centroids: Vec<Point>, max_iter: usize) -> KMeansResult {
    let k = centroids.len();
    let mut assignment: Vec<usize> = points.iter().map(|p| nearest(p, &centroids).0).collect();
    let mut trace = Vec::new();
    for _ in 0..max_iter {
        let mut sums = vec![[0.0f64; 2]; k];
        let mut counts = vec![0usize; k];
        for (p, &a) in points.iter().zip(&assignment) {
            sums[a][0] += p[0];
            sums[a][1] += p[1];
            counts[a] += 1;
        }
        for j in 0..k {
            if counts[j] > 0 {
                centroids[j] = [sums[j][0] / counts[j] as f64, sums[j][1] / counts[j] as f64];
            }
        }
        let next: Vec<usize> = points.iter().map(|p| nearest(p, &centroids).0).collect();
        trace.push(wcss(points, &centroids));
        if next == assignment {
            break;
        }
        assignment = next;
    }
    KMeansResult {
        wcss: wcss(points, &centroids),
        centroids,
        assignment,
        wcss_trace: trace,
    }
}

/// k-means over the pooled sites; returns the best of several restarts.
pub fn kmeans<R: Rng + ?Sized>(
    sites: &SiteSet,
    k: usize,
    opts: KMeansOptions,
    rng: &mut R,
) -> Result<KMeansResult> {
    let distinct = sites.distinct();
    if k == 0 || k > distinct.len() {
        return Err(Error::TooManyKnots {
            requested: k,
            distinct: distinct.len(),
        });
    }
    let points = &sites.coords;
    let mut best: Option<KMeansResult> = None;
    for _ in 0..opts.restarts.max(1) {
        let init = kmeans_plus_plus(points, k, rng);
        let res = lloyd(points, init, opts.max_iterations);
        if best.as_ref().is_none_or(|b| res.wcss < b.wcss) {
            best = Some(res);
        }
    }
    Ok(best.expect("at least one restart"))
}

/// Knots as k-means centroids of all sampled sites.
pub fn select_knots<R: Rng + ?Sized>(all_sites: &SiteSet, m: usize, rng: &mut R) -> Result<KnotSet> {
    select_knots_with(all_sites, m, KMeansOptions::default(), rng)
}

pub fn select_knots_with<R: Rng + ?Sized>(
    all_sites: &SiteSet,
    m: usize,
    opts: KMeansOptions,
    rng: &mut R,
) -> Result<KnotSet> {
    let res = kmeans(all_sites, m, opts, rng)?;
    let mut centroids = res.centroids;
    // empty clusters can leave coincident centroids; nudge them apart onto unused sites
    let distinct = all_sites.distinct();
    for j in 0..centroids.len() {
        if centroids[..j].contains(&centroids[j]) {
            if let Some(p) = distinct.iter().find(|p| !centroids.contains(p)) {
                centroids[j] = *p;
            }
        }
    }
    KnotSet::new(centroids)
}

/// Per-period projection matrices for one latent process at a fixed range.
#[derive(Debug, Clone)]
pub struct GppProjector {
    phi: f64,
    knots: KnotSet,
    knot_cov: SymMatrix,
    knot_chol: CholeskyFactor,
    knot_prec: DMatrix<f64>,
    projections: Vec<DMatrix<f64>>,
}

impl GppProjector {
    pub fn build(sites_by_period: &[SiteSet], knots: &KnotSet, phi: f64) -> Result<Self> {
        let kernel = ExponentialKernel::new(phi)?;
        let knot_cov = knot_covariance(knots, phi)?;
        let knot_chol = cholesky(&knot_cov)?;
        let knot_prec = knot_chol.inverse();
        let pts = knots.points();
        let projections = sites_by_period
            .iter()
            .map(|sites| {
                let cross = DMatrix::from_fn(pts.len(), sites.len(), |m, i| {
                    kernel.correlation(distance(&pts[m], &sites.coords[i]))
                });
                // D̄ᵀ = C̄⁻¹ c̄
                knot_chol.solve_matrix(&cross).transpose()
            })
            .collect();
        Ok(Self {
            phi,
            knots: knots.clone(),
            knot_cov,
            knot_chol,
            knot_prec,
            projections,
        })
    }

    /// Same sites and knots, new range.
    pub fn rebuild(&self, sites_by_period: &[SiteSet], phi: f64) -> Result<Self> {
        Self::build(sites_by_period, &self.knots, phi)
    }

    pub fn phi(&self) -> f64 {
        self.phi
    }

    pub fn knots(&self) -> &KnotSet {
        &self.knots
    }

    pub fn num_knots(&self) -> usize {
        self.knots.len()
    }

    pub fn num_periods(&self) -> usize {
        self.projections.len()
    }

    /// `C̄(φ)`.
    pub fn knot_covariance(&self) -> &SymMatrix {
        &self.knot_cov
    }

    pub fn knot_cholesky(&self) -> &CholeskyFactor {
        &self.knot_chol
    }

    /// `C̄(φ)⁻¹`.
    pub fn knot_precision(&self) -> &DMatrix<f64> {
        &self.knot_prec
    }

    /// `D̄_t` (`N_t x M`).
    pub fn projection(&self, t: usize) -> &DMatrix<f64> {
        &self.projections[t]
    }

    /// `D̄_t ū_t`.
    pub fn project(&self, t: usize, knot_values: &DVector<f64>) -> DVector<f64> {
        &self.projections[t] * knot_values
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::randomkit::RngStream;

    #[test]
    fn correlation_examples() {
        assert_eq!(exp_correlation(0.0, 0.5).unwrap(), 1.0);
        assert!((exp_correlation(0.7, 0.7).unwrap() - (-1f64).exp()).abs() < 1e-15);
        assert!((exp_correlation(2.0, 0.5).unwrap() - 0.018_315_638_888_734_18).abs() < 1e-15);
        assert!(matches!(exp_correlation(1.0, 0.0), Err(Error::InvalidRange(_))));
        assert!(matches!(exp_correlation(1.0, -2.0), Err(Error::InvalidRange(_))));
    }

    #[test]
    fn knot_covariance_examples() {
        let one = KnotSet::new(vec![[0.3, 0.2]]).unwrap();
        assert_eq!(knot_covariance(&one, 1.0).unwrap().as_matrix()[(0, 0)], 1.0);
        let two = KnotSet::new(vec![[0.0, 0.0], [0.0, 0.4]]).unwrap();
        let c = knot_covariance(&two, 0.4).unwrap();
        let e1 = (-1f64).exp();
        assert!((c.as_matrix()[(0, 1)] - e1).abs() < 1e-15);
        assert!((c.as_matrix()[(1, 0)] - e1).abs() < 1e-15);
    }

    #[test]
    fn knot_covariance_inverse_on_random_knots() {
        let mut rng = RngStream::new(3, 0);
        let knots: Vec<Point> = (0..5).map(|_| [rng.random::<f64>(), rng.random::<f64>()]).collect();
        let c = knot_covariance(&KnotSet::new(knots).unwrap(), 0.3).unwrap();
        let chol = cholesky(&c).unwrap();
        let prod = chol.inverse() * c.as_matrix();
        assert!((prod - DMatrix::identity(5, 5)).amax() < 1e-8);
    }

    #[test]
    fn duplicate_knots_rejected() {
        assert!(matches!(
            KnotSet::new(vec![[0.0, 0.0], [0.0, 0.0]]),
            Err(Error::NotPositiveDefinite { .. })
        ));
    }

    #[test]
    fn kmeans_all_distinct_sites_become_knots() {
        let sites = SiteSet::new(vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 0.0]]).unwrap();
        let mut rng = RngStream::new(1, 0);
        let knots = select_knots(&sites, 3, &mut rng).unwrap();
        let mut got: Vec<Point> = knots.points().to_vec();
        got.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(got, vec![[0.0, 0.0], [0.0, 1.0], [1.0, 0.0]]);
        assert!(matches!(
            select_knots(&sites, 4, &mut rng),
            Err(Error::TooManyKnots { requested: 4, distinct: 3 })
        ));
    }

    #[test]
    fn kmeans_single_cluster_is_centroid() {
        let sites = SiteSet::new(vec![[0.0, 0.0], [2.0, 0.0], [0.0, 2.0], [2.0, 2.0]]).unwrap();
        let knots = select_knots(&sites, 1, &mut RngStream::new(2, 0)).unwrap();
        assert_eq!(knots.points(), &[[1.0, 1.0]]);
    }

    #[test]
    fn kmeans_trace_is_non_increasing() {
        let mut rng = RngStream::new(5, 0);
        let pts: Vec<Point> = (0..200).map(|_| [rng.random::<f64>(), rng.random::<f64>()]).collect();
        let sites = SiteSet::new(pts).unwrap();
        let res = kmeans(&sites, 25, KMeansOptions::default(), &mut rng).unwrap();
        for w in res.wcss_trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-12);
        }
    }

    #[test]
    fn kmeans_beats_random_subset() {
        let mut rng = RngStream::new(6, 0);
        let pts: Vec<Point> = (0..200).map(|_| [rng.random::<f64>(), rng.random::<f64>()]).collect();
        let sites = SiteSet::new(pts.clone()).unwrap();
        let knots = select_knots(&sites, 25, &mut rng).unwrap();
        let ours = wcss(&pts, knots.points());
        for _ in 0..20 {
            let mut idx: Vec<usize> = (0..200).collect();
            for i in 0..25 {
                let j = rng.random_range(i..200);
                idx.swap(i, j);
            }
            let subset: Vec<Point> = idx[..25].iter().map(|&i| pts[i]).collect();
            assert!(ours <= wcss(&pts, &subset));
        }
    }

    #[test]
    fn kmeans_is_seed_deterministic() {
        let mut rng = RngStream::new(7, 0);
        let pts: Vec<Point> = (0..60).map(|_| [rng.random::<f64>(), rng.random::<f64>()]).collect();
        let sites = SiteSet::new(pts).unwrap();
        let a = select_knots(&sites, 6, &mut RngStream::new(1, 1)).unwrap();
        let b = select_knots(&sites, 6, &mut RngStream::new(1, 1)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn projector_interpolates_at_knots() {
        let knots = KnotSet::new(vec![[0.0, 0.0], [1.0, 0.0], [0.5, 1.0]]).unwrap();
        let sites = vec![SiteSet::new(knots.points().to_vec()).unwrap()];
        let p = GppProjector::build(&sites, &knots, 0.4).unwrap();
        assert!((p.projection(0) - DMatrix::identity(3, 3)).amax() < 1e-8);
    }

    #[test]
    fn single_knot_projection_is_correlation() {
        let knots = KnotSet::new(vec![[0.0, 0.0]]).unwrap();
        let sites = vec![SiteSet::new(vec![[0.3, 0.4], [1.0, 0.0]]).unwrap()];
        let p = GppProjector::build(&sites, &knots, 0.5).unwrap();
        assert!((p.projection(0)[(0, 0)] - (-1.0f64).exp()).abs() < 1e-15);
        assert!((p.projection(0)[(1, 0)] - (-2.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn projection_times_covariance_is_cross_correlation() {
        let mut rng = RngStream::new(8, 0);
        let knots: Vec<Point> = (0..6).map(|_| [rng.random::<f64>(), rng.random::<f64>()]).collect();
        let knots = KnotSet::new(knots).unwrap();
        let sites: Vec<SiteSet> = (0..3)
            .map(|_| SiteSet::new((0..7).map(|_| [rng.random::<f64>(), rng.random::<f64>()]).collect()).unwrap())
            .collect();
        let phi = 0.35;
        let p = GppProjector::build(&sites, &knots, phi).unwrap();
        for (t, s) in sites.iter().enumerate() {
            let dc = p.projection(t) * p.knot_covariance().as_matrix();
            for i in 0..s.len() {
                for m in 0..knots.len() {
                    let want = exp_correlation(distance(&s.coords[i], &knots.points()[m]), phi).unwrap();
                    assert!((dc[(i, m)] - want).abs() < 1e-8);
                }
            }
        }
    }

    #[test]
    fn rebuild_is_bit_stable_and_phi_sensitive() {
        let knots = KnotSet::new(vec![[0.0, 0.0], [1.0, 0.3], [0.2, 0.9]]).unwrap();
        let sites = vec![SiteSet::new(vec![[0.5, 0.5], [0.1, 0.2], [1.0, 0.3]]).unwrap()];
        let a = GppProjector::build(&sites, &knots, 0.6).unwrap();
        let b = a.rebuild(&sites, 0.6).unwrap();
        assert_eq!(a.projection(0), b.projection(0));
        let c = a.rebuild(&sites, 0.9).unwrap();
        for i in 0..2 {
            assert_ne!(a.projection(0).row(i), c.projection(0).row(i));
        }
        // the site on a knot stays a unit vector
        assert!((c.projection(0)[(2, 1)] - 1.0).abs() < 1e-8);
    }

    #[test]
    fn projected_field_has_smaller_prior_variance() {
        // three knots, five sites; u_i = d_iᵀ ū with ū ~ N(0, C̄)
        let knots = KnotSet::new(vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]).unwrap();
        let sites = vec![SiteSet::new(vec![[0.5, 0.5], [0.2, 0.1], [0.9, 0.9], [2.0, 2.0], [0.0, 1.0]]).unwrap()];
        let p = GppProjector::build(&sites, &knots, 0.7).unwrap();
        let mut rng = RngStream::new(10, 0);
        let n = 50_000;
        let mut sq = vec![0.0; 5];
        for _ in 0..n {
            let z = crate::linalg::standard_normal_vec(3, &mut rng);
            let ubar = p.knot_cholesky().covariance_noise(&z);
            let u = p.project(0, &ubar);
            for i in 0..5 {
                sq[i] += u[i] * u[i];
            }
        }
        for v in sq {
            assert!(v / n as f64 <= 1.0 + 0.03);
        }
    }
}
