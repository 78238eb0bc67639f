//! Bandwidth selection: leave-one-out cross-validation, split-sample validation
//! and the prediction error of a fully nonparametric competitor.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{ManifoldPoint, ManifoldSpec};
use crate::linalg::least_squares;
use crate::plm::Dataset;
use crate::smoothing::{check_bandwidth, Kernel, PairGeometry, SmootherConfig};

/// Strictly increasing admissible bandwidths.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BandwidthGrid {
    values: Vec<f64>,
}

impl BandwidthGrid {
    pub fn new(values: Vec<f64>, manifold: &ManifoldSpec) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidGrid("empty grid".into()));
        }
        for &h in &values {
            check_bandwidth(manifold, h).map_err(|_| {
                Error::InvalidGrid(format!("bandwidth {h} not admissible on {manifold}"))
            })?;
        }
        if values.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidGrid(
                "values must be strictly increasing".into(),
            ));
        }
        Ok(Self { values })
    }

    /// `count` equally spaced values from `lo` to `hi` inclusive.
    pub fn linspace(lo: f64, hi: f64, count: usize, manifold: &ManifoldSpec) -> Result<Self> {
        Self::new(linspace_values(lo, hi, count)?, manifold)
    }

    /// `count` log-spaced values from `lo` to `hi` inclusive.
    pub fn logspace(lo: f64, hi: f64, count: usize, manifold: &ManifoldSpec) -> Result<Self> {
        Self::new(logspace_values(lo, hi, count)?, manifold)
    }

    /// Keeps only the admissible values (those below the injectivity radius).
    pub fn clipped(values: Vec<f64>, manifold: &ManifoldSpec) -> Result<Self> {
        let kept: Vec<f64> = values
            .into_iter()
            .filter(|&h| check_bandwidth(manifold, h).is_ok())
            .collect();
        if kept.is_empty() {
            return Err(Error::InvalidGrid(format!(
                "no grid value is admissible on {manifold}"
            )));
        }
        Self::new(kept, manifold)
    }

    /// Log-spaced from the 5th percentile of pairwise distances up to
    /// `0.9·inj(M)` (or the largest pairwise distance on unbounded manifolds).
    pub fn from_data(data: &Dataset, count: usize) -> Result<Self> {
        let geom = PairGeometry::within(*data.manifold(), data.t())?;
        Self::from_geometry(&geom, count)
    }

    pub fn from_geometry(geom: &PairGeometry, count: usize) -> Result<Self> {
        let mut d: Vec<f64> = geom
            .pairwise_distances()
            .into_iter()
            .filter(|v| *v > 0.0)
            .collect();
        if d.is_empty() {
            return Err(Error::InvalidGrid("all points coincide".into()));
        }
        d.sort_by(f64::total_cmp);
        let lo = d[((d.len() - 1) as f64 * 0.05).round() as usize];
        let inj = geom.manifold().injectivity_radius();
        let hi = if inj.is_finite() {
            0.9 * inj
        } else {
            d[d.len() - 1]
        };
        if lo >= hi {
            return Self::new(vec![hi], geom.manifold());
        }
        Self::logspace(lo, hi, count, geom.manifold())
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

pub fn linspace_values(lo: f64, hi: f64, count: usize) -> Result<Vec<f64>> {
    spaced(lo, hi, count, |v| v, |v| v)
}

pub fn logspace_values(lo: f64, hi: f64, count: usize) -> Result<Vec<f64>> {
    if !(lo > 0.0) {
        return Err(Error::InvalidGrid("log-spaced grid needs lo > 0".into()));
    }
    spaced(lo, hi, count, f64::ln, f64::exp)
}

fn spaced(
    lo: f64,
    hi: f64,
    count: usize,
    fwd: impl Fn(f64) -> f64,
    back: impl Fn(f64) -> f64,
) -> Result<Vec<f64>> {
    if count == 0 || !(lo.is_finite() && hi.is_finite()) {
        return Err(Error::InvalidGrid(format!("bad grid {lo}:{hi}:{count}")));
    }
    if count == 1 {
        return Ok(vec![lo]);
    }
    let (a, b) = (fwd(lo), fwd(hi));
    Ok((0..count)
        .map(|i| {
            if i == count - 1 {
                hi
            } else if i == 0 {
                lo
            } else {
                back(a + (b - a) * i as f64 / (count - 1) as f64)
            }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BandwidthScore {
    pub h: f64,
    /// `None` when the bandwidth is infeasible for this data.
    pub score: Option<f64>,
}

impl BandwidthScore {
    pub fn feasible(&self) -> bool {
        self.score.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelectionResult {
    pub best_h: f64,
    pub best_score: f64,
    pub scores: Vec<BandwidthScore>,
}

fn empty_row_to_query(err: Error, points: &[ManifoldPoint]) -> Error {
    match err {
        Error::FitUndefined { index } => Error::EmptyNeighborhood {
            query: points[index].clone(),
        },
        e => e,
    }
}

/// Residual sum of squares after regressing `y − W y'` on `X − W X'`.
fn centered_rss(
    weights: &DMatrix<f64>,
    y_eval: &DVector<f64>,
    x_eval: &DMatrix<f64>,
    y_fit: &DVector<f64>,
    x_fit: &DMatrix<f64>,
) -> Result<f64> {
    let y_tilde = y_eval - weights * y_fit;
    let x_tilde = x_eval - weights * x_fit;
    Ok(least_squares(&x_tilde, &y_tilde)?.rss())
}

pub fn cv_score_with_geometry(
    data: &Dataset,
    geom: &PairGeometry,
    kernel: Kernel,
    h: f64,
) -> Result<f64> {
    if data.n() < 3 {
        return Err(Error::InvalidDataset("cross-validation needs n ≥ 3".into()));
    }
    let w = geom
        .smoother_matrix(kernel, h, true)
        .map_err(|e| empty_row_to_query(e, data.t()))?;
    centered_rss(&w, data.y(), data.x(), data.y(), data.x())
}

/// `CV(h)`: leave-one-out smooths, one global β̃, minimized residual sum of squares.
///
/// Infeasible bandwidths surface as errors for which
/// [`Error::is_infeasible_bandwidth`] is true.
pub fn cv_score(data: &Dataset, cfg: &SmootherConfig) -> Result<f64> {
    if cfg.manifold() != data.manifold() {
        return Err(Error::DimensionMismatch(
            "smoother and data manifolds differ".into(),
        ));
    }
    let geom = PairGeometry::within(*data.manifold(), data.t())?;
    cv_score_with_geometry(data, &geom, cfg.kernel(), cfg.bandwidth())
}

fn select_by(
    grid: &BandwidthGrid,
    score: impl Fn(f64) -> Result<f64> + Sync,
) -> Result<SelectionResult> {
    let results: Vec<Result<Option<f64>>> = grid
        .values()
        .par_iter()
        .map(|&h| match score(h) {
            Ok(s) => Ok(Some(s)),
            Err(e) if e.is_infeasible_bandwidth() => Ok(None),
            Err(e) => Err(e),
        })
        .collect();
    let mut scores = Vec::with_capacity(grid.len());
    for (&h, r) in grid.values().iter().zip(results) {
        scores.push(BandwidthScore { h, score: r? });
    }
    let mut best: Option<(f64, f64)> = None;
    for s in &scores {
        if let Some(v) = s.score {
            // strict comparison keeps the smaller h on ties
            if best.is_none_or(|(_, b)| v < b) {
                best = Some((s.h, v));
            }
        }
    }
    let (best_h, best_score) = best.ok_or(Error::NoFeasibleBandwidth {
        candidates: grid.len(),
    })?;
    Ok(SelectionResult {
        best_h,
        best_score,
        scores,
    })
}

pub fn select_cv_with_geometry(
    data: &Dataset,
    geom: &PairGeometry,
    kernel: Kernel,
    grid: &BandwidthGrid,
) -> Result<SelectionResult> {
    select_by(grid, |h| cv_score_with_geometry(data, geom, kernel, h))
}

/// Minimizes `CV(h)` over the grid; infeasible candidates are flagged and skipped.
pub fn select_cv(data: &Dataset, kernel: Kernel, grid: &BandwidthGrid) -> Result<SelectionResult> {
    let geom = PairGeometry::within(*data.manifold(), data.t())?;
    select_cv_with_geometry(data, &geom, kernel, grid)
}

fn sv_with_geometry(
    train: &Dataset,
    validate: &Dataset,
    geom: &PairGeometry,
    kernel: Kernel,
    h: f64,
) -> Result<f64> {
    let w = geom
        .smoother_matrix(kernel, h, false)
        .map_err(|e| empty_row_to_query(e, validate.t()))?;
    centered_rss(&w, validate.y(), validate.x(), train.y(), train.x())
}

fn check_split(train: &Dataset, validate: &Dataset) -> Result<()> {
    if train.manifold() != validate.manifold() {
        return Err(Error::DimensionMismatch(
            "training and validation sets live on different manifolds".into(),
        ));
    }
    if train.p() != validate.p() {
        return Err(Error::DimensionMismatch(format!(
            "training set has p = {}, validation set p = {}",
            train.p(),
            validate.p()
        )));
    }
    Ok(())
}

/// `SV(h)`: smooths from `train` evaluated at the `validate` points.
pub fn sv_score(train: &Dataset, validate: &Dataset, cfg: &SmootherConfig) -> Result<f64> {
    check_split(train, validate)?;
    if cfg.manifold() != train.manifold() {
        return Err(Error::DimensionMismatch(
            "smoother and data manifolds differ".into(),
        ));
    }
    let geom = PairGeometry::new(*train.manifold(), validate.t(), train.t())?;
    sv_with_geometry(train, validate, &geom, cfg.kernel(), cfg.bandwidth())
}

pub fn select_sv(
    train: &Dataset,
    validate: &Dataset,
    kernel: Kernel,
    grid: &BandwidthGrid,
) -> Result<SelectionResult> {
    check_split(train, validate)?;
    let geom = PairGeometry::new(*train.manifold(), validate.t(), train.t())?;
    select_by(grid, |h| {
        sv_with_geometry(train, validate, &geom, kernel, h)
    })
}

/// Splits rows alternately: 1st, 3rd, 5th, … rows train, 2nd, 4th, … validate.
pub fn split_alternate(data: &Dataset) -> Result<(Dataset, Dataset)> {
    if data.n() < 2 {
        return Err(Error::InvalidDataset(
            "split needs at least two rows".into(),
        ));
    }
    let train: Vec<usize> = (0..data.n()).step_by(2).collect();
    let validate: Vec<usize> = (1..data.n()).step_by(2).collect();
    Ok((data.subset(&train)?, data.subset(&validate)?))
}

/// Euclidean predictors and responses for the fully nonparametric competitor.
#[derive(Debug, Clone, Copy)]
pub struct EuclideanSample<'a> {
    pub responses: &'a [f64],
    pub predictors: &'a [Vec<f64>],
}

impl EuclideanSample<'_> {
    fn points(&self, dim: usize) -> Result<Vec<ManifoldPoint>> {
        if self.responses.len() != self.predictors.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} responses for {} predictor rows",
                self.responses.len(),
                self.predictors.len()
            )));
        }
        if self.predictors.iter().any(|r| r.len() != dim) {
            return Err(Error::DimensionMismatch("ragged predictor rows".into()));
        }
        Ok(self
            .predictors
            .iter()
            .map(|r| ManifoldPoint::Euclidean(r.clone()))
            .collect())
    }
}

/// `EP(h)`: squared error of a kernel regression of y on Euclidean predictors,
/// trained on `train` and scored on `validate`.
pub fn prediction_error_ep(
    train: EuclideanSample<'_>,
    validate: EuclideanSample<'_>,
    kernel: Kernel,
    h: f64,
) -> Result<f64> {
    let geom = ep_geometry(train, validate)?;
    ep_with_geometry(train, validate, &geom, kernel, h)
}

fn ep_geometry(train: EuclideanSample<'_>, validate: EuclideanSample<'_>) -> Result<PairGeometry> {
    let dim = train
        .predictors
        .first()
        .map(Vec::len)
        .ok_or_else(|| Error::InvalidDataset("empty training sample".into()))?;
    let manifold = ManifoldSpec::euclidean(dim)?;
    let tr = train.points(dim)?;
    let va = validate.points(dim)?;
    PairGeometry::new(manifold, &va, &tr)
}

fn ep_with_geometry(
    train: EuclideanSample<'_>,
    validate: EuclideanSample<'_>,
    geom: &PairGeometry,
    kernel: Kernel,
    h: f64,
) -> Result<f64> {
    let w = geom
        .smoother_matrix(kernel, h, false)
        .map_err(|e| match e {
            Error::FitUndefined { index } => Error::EmptyNeighborhood {
                query: ManifoldPoint::Euclidean(validate.predictors[index].clone()),
            },
            e => e,
        })?;
    let fitted = w * DVector::from_column_slice(train.responses);
    Ok(fitted
        .iter()
        .zip(validate.responses)
        .map(|(f, y)| (y - f) * (y - f))
        .sum())
}

/// `EP(h)` at every grid value; infeasible values are `None`.
pub fn ep_curve(
    train: EuclideanSample<'_>,
    validate: EuclideanSample<'_>,
    kernel: Kernel,
    grid: &[f64],
) -> Result<Vec<BandwidthScore>> {
    let geom = ep_geometry(train, validate)?;
    grid.par_iter()
        .map(
            |&h| match ep_with_geometry(train, validate, &geom, kernel, h) {
                Ok(s) => Ok(BandwidthScore { h, score: Some(s) }),
                Err(e) if e.is_infeasible_bandwidth() => Ok(BandwidthScore { h, score: None }),
                Err(e) => Err(e),
            },
        )
        .collect()
}
