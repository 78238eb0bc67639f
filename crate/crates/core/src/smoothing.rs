//! Kernel smoothing on a manifold.
//!
//! Weights are `K(d_g(t, t_i)/h) / θ_t(t_i)`, normalized to sum to one. The
//! single-query functions here are the reference path; [`PairGeometry`] caches
//! distances and densities between two point sets so that many bandwidths can be
//! evaluated without recomputing the geometry.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{ManifoldPoint, ManifoldSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kernel {
    /// `(15/16)(1 − u²)²` on `[0, 1)`.
    #[default]
    Quadratic,
}

impl Kernel {
    /// Evaluates the kernel at a nonnegative scaled distance.
    ///
    /// Panics on a negative argument.
    pub fn eval(self, u: f64) -> f64 {
        assert!(u >= 0.0, "kernel argument must be nonnegative, got {u}");
        match self {
            Kernel::Quadratic => {
                if u < 1.0 {
                    let s = 1.0 - u * u;
                    15.0 / 16.0 * s * s
                } else {
                    0.0
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmootherConfig {
    manifold: ManifoldSpec,
    kernel: Kernel,
    bandwidth: f64,
}

impl SmootherConfig {
    /// Requires `0 < h < inj(M)`.
    pub fn new(manifold: ManifoldSpec, kernel: Kernel, bandwidth: f64) -> Result<Self> {
        check_bandwidth(&manifold, bandwidth)?;
        Ok(Self {
            manifold,
            kernel,
            bandwidth,
        })
    }

    pub fn quadratic(manifold: ManifoldSpec, bandwidth: f64) -> Result<Self> {
        Self::new(manifold, Kernel::Quadratic, bandwidth)
    }

    pub fn manifold(&self) -> &ManifoldSpec {
        &self.manifold
    }

    pub fn kernel(&self) -> Kernel {
        self.kernel
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn with_bandwidth(&self, bandwidth: f64) -> Result<Self> {
        Self::new(self.manifold, self.kernel, bandwidth)
    }

    /// Unnormalized weight for a pair at geodesic distance `rho`.
    fn weight_at(&self, rho: f64) -> Result<f64> {
        pair_weight(&self.manifold, self.kernel, self.bandwidth, rho)
    }
}

pub(crate) fn check_bandwidth(manifold: &ManifoldSpec, h: f64) -> Result<()> {
    let limit = manifold.injectivity_radius();
    if !(h > 0.0 && h < limit) {
        return Err(Error::InvalidBandwidth { h, limit });
    }
    Ok(())
}

// The kernel factor is evaluated first so the density is never touched outside
// the kernel support (the sphere's density vanishes at the antipode).
fn pair_weight(manifold: &ManifoldSpec, kernel: Kernel, h: f64, rho: f64) -> Result<f64> {
    let k = kernel.eval(rho / h);
    if k == 0.0 {
        return Ok(0.0);
    }
    Ok(k / manifold.density_at_distance(rho)?)
}

fn check_sample(
    cfg: &SmootherConfig,
    query: &ManifoldPoint,
    sample: &[ManifoldPoint],
) -> Result<()> {
    cfg.manifold.check_point(query)?;
    sample.iter().try_for_each(|p| cfg.manifold.check_point(p))
}

/// Unnormalized weights `θ_query(t_i)^{-1} K(d_g(query, t_i)/h)`.
pub fn raw_weights(
    cfg: &SmootherConfig,
    query: &ManifoldPoint,
    sample: &[ManifoldPoint],
) -> Result<Vec<f64>> {
    check_sample(cfg, query, sample)?;
    sample
        .iter()
        .map(|t| cfg.weight_at(cfg.manifold.distance_unchecked(query, t)))
        .collect()
}

/// Weights normalized to sum to one.
pub fn normalized_weights(
    cfg: &SmootherConfig,
    query: &ManifoldPoint,
    sample: &[ManifoldPoint],
) -> Result<Vec<f64>> {
    let mut w = raw_weights(cfg, query, sample)?;
    let total: f64 = w.iter().sum();
    if total <= 0.0 {
        return Err(Error::EmptyNeighborhood {
            query: query.clone(),
        });
    }
    w.iter_mut().for_each(|v| *v /= total);
    Ok(w)
}

/// Kernel regression estimate `Σ w_i y_i` at `query`.
pub fn nw_regress(
    cfg: &SmootherConfig,
    query: &ManifoldPoint,
    sample: &[ManifoldPoint],
    responses: &[f64],
) -> Result<f64> {
    if responses.len() != sample.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} responses for {} sample points",
            responses.len(),
            sample.len()
        )));
    }
    let w = normalized_weights(cfg, query, sample)?;
    Ok(w.iter().zip(responses).map(|(w, y)| w * y).sum())
}

/// Density estimate `(n h^d)^{-1} Σ θ_query(t_k)^{-1} K(d_g(query, t_k)/h)`.
///
/// Keeps the one-dimensional normalizing constant of the kernel, so on d ≥ 2 this
/// is proportional to, not equal to, a unit-mass density.
pub fn density_estimate(
    cfg: &SmootherConfig,
    query: &ManifoldPoint,
    sample: &[ManifoldPoint],
) -> Result<f64> {
    if sample.is_empty() {
        return Err(Error::InvalidDataset("empty sample".into()));
    }
    let a = raw_weights(cfg, query, sample)?;
    let d = cfg.manifold.intrinsic_dim() as i32;
    let n = sample.len() as f64;
    Ok(a.iter().sum::<f64>() / (n * cfg.bandwidth.powi(d)))
}

/// Regression at `t_i` using every observation except the `i`-th.
pub fn loo_regress(
    cfg: &SmootherConfig,
    i: usize,
    sample: &[ManifoldPoint],
    responses: &[f64],
) -> Result<f64> {
    if sample.len() < 2 {
        return Err(Error::InvalidDataset(
            "leave-one-out needs at least two observations".into(),
        ));
    }
    if i >= sample.len() || responses.len() != sample.len() {
        return Err(Error::DimensionMismatch(format!(
            "index {i} with {} points and {} responses",
            sample.len(),
            responses.len()
        )));
    }
    let query = &sample[i];
    check_sample(cfg, query, sample)?;
    let mut num = 0.0;
    let mut den = 0.0;
    for (k, (t, y)) in sample.iter().zip(responses).enumerate() {
        if k == i {
            continue;
        }
        let a = cfg.weight_at(cfg.manifold.distance_unchecked(query, t))?;
        num += a * y;
        den += a;
    }
    if den <= 0.0 {
        return Err(Error::EmptyNeighborhood {
            query: query.clone(),
        });
    }
    Ok(num / den)
}

/// Cached geodesic distances between a set of query points and a sample.
///
/// Stored row-major: row `i` is query `i`, column `j` is sample point `j`.
#[derive(Debug, Clone)]
pub struct PairGeometry {
    manifold: ManifoldSpec,
    rows: usize,
    cols: usize,
    dist: Vec<f64>,
    symmetric: bool,
}

impl PairGeometry {
    pub fn new(
        manifold: ManifoldSpec,
        queries: &[ManifoldPoint],
        sample: &[ManifoldPoint],
    ) -> Result<Self> {
        queries
            .iter()
            .chain(sample)
            .try_for_each(|p| manifold.check_point(p))?;
        let mut dist = Vec::with_capacity(queries.len() * sample.len());
        for q in queries {
            dist.extend(sample.iter().map(|t| manifold.distance_unchecked(q, t)));
        }
        Ok(Self {
            manifold,
            rows: queries.len(),
            cols: sample.len(),
            dist,
            symmetric: false,
        })
    }

    /// Distances of a sample to itself.
    pub fn within(manifold: ManifoldSpec, sample: &[ManifoldPoint]) -> Result<Self> {
        sample.iter().try_for_each(|p| manifold.check_point(p))?;
        let n = sample.len();
        let mut dist = vec![0.0; n * n];
        for i in 0..n {
            for j in (i + 1)..n {
                let d = manifold.distance_unchecked(&sample[i], &sample[j]);
                dist[i * n + j] = d;
                dist[j * n + i] = d;
            }
        }
        Ok(Self {
            manifold,
            rows: n,
            cols: n,
            dist,
            symmetric: true,
        })
    }

    pub fn manifold(&self) -> &ManifoldSpec {
        &self.manifold
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn distance(&self, i: usize, j: usize) -> f64 {
        self.dist[i * self.cols + j]
    }

    /// Off-diagonal distances, for building data-driven bandwidth grids.
    pub fn pairwise_distances(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for i in 0..self.rows {
            for j in 0..self.cols {
                if !self.symmetric || j > i {
                    out.push(self.distance(i, j));
                }
            }
        }
        out
    }

    /// Row-normalized smoother matrix for bandwidth `h`.
    ///
    /// With `leave_one_out` the diagonal is excluded (only for [`PairGeometry::within`]).
    /// A row with no positive weight fails with [`Error::FitUndefined`] naming the row.
    pub fn smoother_matrix(
        &self,
        kernel: Kernel,
        h: f64,
        leave_one_out: bool,
    ) -> Result<DMatrix<f64>> {
        check_bandwidth(&self.manifold, h)?;
        if leave_one_out && !self.symmetric {
            return Err(Error::DimensionMismatch(
                "leave-one-out smoothing needs a sample-to-itself geometry".into(),
            ));
        }
        let mut w = DMatrix::<f64>::zeros(self.rows, self.cols);
        for i in 0..self.rows {
            let mut total = 0.0;
            for j in 0..self.cols {
                if leave_one_out && i == j {
                    continue;
                }
                let a = pair_weight(&self.manifold, kernel, h, self.distance(i, j))?;
                w[(i, j)] = a;
                total += a;
            }
            if total <= 0.0 {
                return Err(Error::FitUndefined { index: i });
            }
            for j in 0..self.cols {
                w[(i, j)] /= total;
            }
        }
        Ok(w)
    }
}

/// Applies a smoother matrix to a response vector.
pub fn smooth_vector(weights: &DMatrix<f64>, v: &DVector<f64>) -> DVector<f64> {
    weights * v
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::{PI, TAU};

    fn line(xs: &[f64]) -> Vec<ManifoldPoint> {
        xs.iter()
            .map(|&x| ManifoldPoint::Euclidean(vec![x]))
            .collect()
    }

    fn r1(h: f64) -> SmootherConfig {
        SmootherConfig::quadratic(ManifoldSpec::euclidean(1).unwrap(), h).unwrap()
    }

    // Textbook Nadaraya–Watson and KDE on the real line.
    fn epan2(u: f64) -> f64 {
        if u.abs() < 1.0 {
            0.9375 * (1.0 - u * u) * (1.0 - u * u)
        } else {
            0.0
        }
    }

    fn classical_nw(x0: f64, xs: &[f64], ys: &[f64], h: f64) -> f64 {
        let num: f64 = xs
            .iter()
            .zip(ys)
            .map(|(x, y)| epan2((x0 - x) / h) * y)
            .sum();
        let den: f64 = xs.iter().map(|x| epan2((x0 - x) / h)).sum();
        num / den
    }

    fn classical_kde(x0: f64, xs: &[f64], h: f64) -> f64 {
        xs.iter().map(|x| epan2((x0 - x) / h)).sum::<f64>() / (xs.len() as f64 * h)
    }

    #[test]
    fn kernel_values() {
        let k = Kernel::Quadratic;
        assert_eq!(k.eval(0.0), 0.9375);
        assert_eq!(k.eval(1.0), 0.0);
        assert_eq!(k.eval(0.5), 0.52734375);
        assert_eq!(k.eval(7.0), 0.0);
    }

    #[test]
    #[should_panic(expected = "nonnegative")]
    fn kernel_rejects_negative() {
        Kernel::Quadratic.eval(-0.1);
    }

    #[test]
    fn bandwidth_must_be_below_injectivity_radius() {
        assert!(SmootherConfig::quadratic(ManifoldSpec::Sphere2, PI).is_err());
        assert!(SmootherConfig::quadratic(ManifoldSpec::Sphere2, 0.0).is_err());
        assert!(SmootherConfig::quadratic(ManifoldSpec::Sphere2, 3.0).is_ok());
        assert!(SmootherConfig::quadratic(ManifoldSpec::euclidean(2).unwrap(), 1e6).is_ok());
        assert!(SmootherConfig::quadratic(ManifoldSpec::euclidean(2).unwrap(), f64::NAN).is_err());
    }

    #[test]
    fn raw_weight_examples() {
        let cfg = r1(1.0);
        let s = line(&[0.0, 0.5, 1.0, 3.0]);
        let a = raw_weights(&cfg, &s[0], &s).unwrap();
        assert_eq!(a, vec![0.9375, 0.52734375, 0.0, 0.0]);
    }

    #[test]
    fn antipodal_pairs_get_zero_weight() {
        let cfg = SmootherConfig::quadratic(ManifoldSpec::Sphere2, 1.0).unwrap();
        let n = ManifoldPoint::Sphere([0.0, 0.0, 1.0]);
        let s = vec![ManifoldPoint::Sphere([0.0, 0.0, -1.0]), n.clone()];
        assert_eq!(raw_weights(&cfg, &n, &s).unwrap(), vec![0.0, 0.9375]);
    }

    #[test]
    fn normalized_weight_examples() {
        let cfg = r1(1.0);
        let w = normalized_weights(&cfg, &line(&[0.0])[0], &line(&[0.3])).unwrap();
        assert_eq!(w, vec![1.0]);

        // four points equidistant from the origin
        let cfg = SmootherConfig::quadratic(ManifoldSpec::euclidean(2).unwrap(), 1.0).unwrap();
        let q = ManifoldPoint::Euclidean(vec![0.0, 0.0]);
        let s: Vec<_> = [(0.5, 0.0), (0.0, 0.5), (-0.5, 0.0), (0.0, -0.5)]
            .iter()
            .map(|&(x, y)| ManifoldPoint::Euclidean(vec![x, y]))
            .collect();
        for w in normalized_weights(&cfg, &q, &s).unwrap() {
            assert!((w - 0.25).abs() < 1e-15);
        }

        // distances 0.25 and 0.5: K(0.25) = (15/16)(15/16)², K(0.5) = (15/16)(3/4)²
        let cfg = r1(1.0);
        let w = normalized_weights(&cfg, &line(&[0.0])[0], &line(&[0.25, -0.5])).unwrap();
        let (k1, k2) = (0.9375 * 0.87890625, 0.52734375);
        assert!((w[0] - k1 / (k1 + k2)).abs() < 1e-15);
        assert!((w[1] - k2 / (k1 + k2)).abs() < 1e-15);
    }

    #[test]
    fn empty_neighborhood_reports_query() {
        let cfg = r1(0.1);
        let q = line(&[5.0]).remove(0);
        match normalized_weights(&cfg, &q, &line(&[0.0, 1.0])) {
            Err(Error::EmptyNeighborhood { query }) => assert_eq!(query, q),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn regression_examples() {
        let cfg = r1(2.0);
        let s = line(&[0.0, 0.4, 1.1, 1.5]);
        let q = line(&[0.7]).remove(0);
        assert!((nw_regress(&cfg, &q, &s, &[3.5; 4]).unwrap() - 3.5).abs() < 1e-14);
        assert_eq!(nw_regress(&cfg, &q, &s[..1], &[-2.0]).unwrap(), -2.0);
        assert!(nw_regress(&cfg, &q, &s, &[1.0]).is_err());
    }

    #[test]
    fn density_examples() {
        let cfg = r1(0.1);
        assert_eq!(
            density_estimate(&cfg, &line(&[5.0])[0], &line(&[0.0])).unwrap(),
            0.0
        );
        let cfg = SmootherConfig::quadratic(ManifoldSpec::Sphere2, 0.5).unwrap();
        let p = ManifoldPoint::Sphere([0.0, 1.0, 0.0]);
        let f = density_estimate(&cfg, &p, std::slice::from_ref(&p)).unwrap();
        assert!((f - 0.9375 / 0.25).abs() < 1e-15);
    }

    #[test]
    fn loo_examples() {
        let cfg = r1(1.0);
        let s = line(&[0.0, 0.5]);
        assert_eq!(loo_regress(&cfg, 0, &s, &[1.0, 7.0]).unwrap(), 7.0);
        assert_eq!(loo_regress(&cfg, 1, &s, &[1.0, 7.0]).unwrap(), 1.0);
        let s = line(&[0.0, 0.2, 0.3, 0.9]);
        assert!((loo_regress(&cfg, 2, &s, &[4.0; 4]).unwrap() - 4.0).abs() < 1e-15);
        assert!(loo_regress(&cfg, 0, &s[..1], &[1.0]).is_err());
        // isolated point
        let s = line(&[0.0, 0.2, 5.0]);
        assert!(matches!(
            loo_regress(&cfg, 2, &s, &[1.0, 2.0, 3.0]),
            Err(Error::EmptyNeighborhood { .. })
        ));
    }

    #[test]
    fn loo_matches_physical_deletion() {
        let cfg = SmootherConfig::quadratic(ManifoldSpec::Sphere2, 1.2).unwrap();
        let pts: Vec<_> = (0..12)
            .map(|k| {
                let a = k as f64 * 0.37;
                let z = (k as f64 * 0.11).sin() * 0.6;
                let r = (1.0 - z * z).sqrt();
                ManifoldSpec::Sphere2
                    .validate_point(&[r * a.cos(), r * a.sin(), z])
                    .unwrap()
            })
            .collect();
        let ys: Vec<f64> = (0..12).map(|k| (k as f64).cos()).collect();
        for i in 0..pts.len() {
            let mut sub_t = pts.clone();
            let mut sub_y = ys.clone();
            sub_t.remove(i);
            sub_y.remove(i);
            let brute = nw_regress(&cfg, &pts[i], &sub_t, &sub_y).unwrap();
            assert!((loo_regress(&cfg, i, &pts, &ys).unwrap() - brute).abs() < 1e-14);
        }
    }

    #[test]
    fn euclidean_line_matches_textbook_estimators() {
        let xs = [0.05, 0.31, 0.42, 0.77, 0.93, 1.2, 1.35];
        let ys = [1.0, -0.4, 2.2, 0.3, 0.8, -1.1, 0.5];
        let s = line(&xs);
        for h in [0.3, 0.5, 1.7] {
            let cfg = r1(h);
            for x0 in [0.0, 0.4, 0.8, 1.3] {
                let q = ManifoldPoint::Euclidean(vec![x0]);
                let nw = nw_regress(&cfg, &q, &s, &ys).unwrap();
                assert!((nw - classical_nw(x0, &xs, &ys, h)).abs() < 1e-12);
                let f = density_estimate(&cfg, &q, &s).unwrap();
                assert!((f - classical_kde(x0, &xs, h)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn smoother_matrix_agrees_with_single_query_path() {
        let m = ManifoldSpec::cylinder(-2.0, 2.0).unwrap();
        let pts: Vec<_> = (0..15)
            .map(|k| {
                m.validate_point(&[k as f64 * 0.9, ((k * 7) % 13) as f64 / 4.0 - 1.5])
                    .unwrap()
            })
            .collect();
        let ys: Vec<f64> = (0..15).map(|k| (k as f64 * 0.3).sin()).collect();
        let geom = PairGeometry::within(m, &pts).unwrap();
        let h = 2.5;
        let cfg = SmootherConfig::quadratic(m, h).unwrap();
        let full = geom.smoother_matrix(Kernel::Quadratic, h, false).unwrap();
        let loo = geom.smoother_matrix(Kernel::Quadratic, h, true).unwrap();
        let yv = DVector::from_vec(ys.clone());
        let sf = smooth_vector(&full, &yv);
        let sl = smooth_vector(&loo, &yv);
        for i in 0..pts.len() {
            assert!((sf[i] - nw_regress(&cfg, &pts[i], &pts, &ys).unwrap()).abs() < 1e-14);
            assert!((sl[i] - loo_regress(&cfg, i, &pts, &ys).unwrap()).abs() < 1e-14);
        }
    }

    #[test]
    fn smoother_matrix_flags_empty_row() {
        let m = ManifoldSpec::euclidean(1).unwrap();
        let pts = line(&[0.0, 0.1, 3.0]);
        let geom = PairGeometry::within(m, &pts).unwrap();
        assert!(geom.smoother_matrix(Kernel::Quadratic, 0.5, false).is_ok());
        assert_eq!(
            geom.smoother_matrix(Kernel::Quadratic, 0.5, true)
                .unwrap_err(),
            Error::FitUndefined { index: 2 }
        );
    }

    fn sphere_cloud() -> impl Strategy<Value = Vec<ManifoldPoint>> {
        prop::collection::vec((-1.0f64..1.0, 0.0f64..TAU), 1..30).prop_map(|v| {
            v.into_iter()
                .map(|(z, phi)| {
                    let r = (1.0 - z * z).sqrt();
                    ManifoldSpec::Sphere2
                        .validate_point(&[r * phi.cos(), r * phi.sin(), z])
                        .unwrap()
                })
                .collect()
        })
    }

    proptest! {
        #[test]
        fn weights_form_a_convex_combination(
            pts in sphere_cloud(),
            h in 0.2f64..3.1,
            ys in prop::collection::vec(-10.0f64..10.0, 30),
            scale in 0.1f64..50.0,
        ) {
            let cfg = SmootherConfig::quadratic(ManifoldSpec::Sphere2, h).unwrap();
            let q = &pts[0];
            let w = normalized_weights(&cfg, q, &pts).unwrap();
            prop_assert!(w.iter().all(|&v| v >= 0.0));
            prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);

            let ys = &ys[..pts.len()];
            let r = nw_regress(&cfg, q, &pts, ys).unwrap();
            let inside: Vec<f64> = w.iter().zip(ys).filter(|(w, _)| **w > 0.0).map(|(_, y)| *y).collect();
            let lo = inside.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = inside.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(r >= lo - 1e-12 && r <= hi + 1e-12);

            let scaled: Vec<f64> = ys.iter().map(|y| y * scale).collect();
            let rs = nw_regress(&cfg, q, &pts, &scaled).unwrap();
            prop_assert!((rs - scale * r).abs() < 1e-9 * (1.0 + rs.abs()));
        }
    }
}
