//! Partially linear model `y = xᵀβ + g(t) + ε` with `t` on a manifold.
//!
//! The response and every linear covariate are smoothed on `t`; β̂ is the least
//! squares fit of the smoothed-out response residuals on the smoothed-out
//! covariate residuals, and `ĝ(t) = φ̂₀(t) − φ̂(t)ᵀβ̂`.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};
use crate::geometry::{ManifoldPoint, ManifoldSpec};
use crate::linalg::{self, least_squares};
use crate::smoothing::{normalized_weights, Kernel, PairGeometry, SmootherConfig};

/// Responses `y`, linear covariates `X` (n × p) and manifold covariates `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    manifold: ManifoldSpec,
    y: DVector<f64>,
    x: DMatrix<f64>,
    t: Vec<ManifoldPoint>,
}

impl Dataset {
    /// Checks lengths, finiteness and that each point lies on `manifold`.
    ///
    /// The size requirement `n ≥ p + 2` is enforced when fitting, so that small
    /// validation subsets can still be represented.
    pub fn new(
        manifold: ManifoldSpec,
        y: DVector<f64>,
        x: DMatrix<f64>,
        t: Vec<ManifoldPoint>,
    ) -> Result<Self> {
        let n = y.len();
        if n == 0 {
            return Err(Error::InvalidDataset("no observations".into()));
        }
        if x.nrows() != n || t.len() != n {
            return Err(Error::InvalidDataset(format!(
                "inconsistent lengths: y has {n}, X has {} rows, t has {}",
                x.nrows(),
                t.len()
            )));
        }
        if x.ncols() == 0 {
            return Err(Error::InvalidDataset(
                "at least one linear covariate is required".into(),
            ));
        }
        if let Some(i) = y.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidDataset(format!(
                "non-finite response at row {i}"
            )));
        }
        if let Some(i) = (0..n).find(|&i| x.row(i).iter().any(|v| !v.is_finite())) {
            return Err(Error::InvalidDataset(format!(
                "non-finite covariate at row {i}"
            )));
        }
        for (i, p) in t.iter().enumerate() {
            manifold
                .check_point(p)
                .map_err(|e| Error::InvalidDataset(format!("row {i}: {e}")))?;
        }
        Ok(Self { manifold, y, x, t })
    }

    pub fn from_rows(
        manifold: ManifoldSpec,
        y: Vec<f64>,
        x_rows: &[Vec<f64>],
        t: Vec<ManifoldPoint>,
    ) -> Result<Self> {
        let p = x_rows.first().map_or(0, Vec::len);
        if x_rows.iter().any(|r| r.len() != p) {
            return Err(Error::InvalidDataset("ragged covariate rows".into()));
        }
        let flat: Vec<f64> = x_rows.iter().flatten().copied().collect();
        let x = DMatrix::from_row_slice(x_rows.len(), p, &flat);
        Self::new(manifold, DVector::from_vec(y), x, t)
    }

    pub fn manifold(&self) -> &ManifoldSpec {
        &self.manifold
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn t(&self) -> &[ManifoldPoint] {
        &self.t
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    /// Rows at the given indices, in that order.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        if let Some(&i) = indices.iter().find(|&&i| i >= self.n()) {
            return Err(Error::DimensionMismatch(format!("row {i} out of range")));
        }
        let y = DVector::from_iterator(indices.len(), indices.iter().map(|&i| self.y[i]));
        let x = self.x.select_rows(indices);
        let t = indices.iter().map(|&i| self.t[i].clone()).collect();
        Self::new(self.manifold, y, x, t)
    }

    pub(crate) fn check_fit_size(&self) -> Result<()> {
        if self.n() < self.p() + 2 {
            return Err(Error::InvalidDataset(format!(
                "need n ≥ p + 2, got n = {} and p = {}",
                self.n(),
                self.p()
            )));
        }
        Ok(())
    }

    fn check_config(&self, cfg: &SmootherConfig) -> Result<()> {
        if cfg.manifold() != &self.manifold {
            return Err(Error::DimensionMismatch(format!(
                "smoother is on {}, data on {}",
                cfg.manifold(),
                self.manifold
            )));
        }
        Ok(())
    }
}

/// Smoothed response and covariates evaluated at the sample points.
#[derive(Debug, Clone)]
pub struct Centering {
    pub phi0: DVector<f64>,
    pub phi: DMatrix<f64>,
}

impl Centering {
    pub(crate) fn from_weights(weights: &DMatrix<f64>, y: &DVector<f64>, x: &DMatrix<f64>) -> Self {
        Self {
            phi0: weights * y,
            phi: weights * x,
        }
    }
}

/// Full-sample smooths `φ̂₀(t_i)` and `φ̂_j(t_i)`.
pub fn center_covariates(data: &Dataset, cfg: &SmootherConfig) -> Result<Centering> {
    data.check_config(cfg)?;
    let geom = PairGeometry::within(data.manifold, &data.t)?;
    let w = geom.smoother_matrix(cfg.kernel(), cfg.bandwidth(), false)?;
    Ok(Centering::from_weights(&w, &data.y, &data.x))
}

#[derive(Debug, Clone)]
pub struct PlmFit {
    pub beta_hat: DVector<f64>,
    pub bandwidth: f64,
    pub kernel: Kernel,
    /// Residual variance with denominator `n − p`.
    pub sigma2_eps_hat: f64,
    /// `n^{-1} x̃ᵀx̃`.
    pub sigma_hat: DMatrix<f64>,
    pub phi0_at_sample: DVector<f64>,
    pub phi_at_sample: DMatrix<f64>,
    pub residuals: DVector<f64>,
    pub n: usize,
}

impl PlmFit {
    /// `ĝ(t_i) = φ̂₀(t_i) − φ̂(t_i)ᵀβ̂` at each sample point.
    pub fn g_at_sample(&self) -> DVector<f64> {
        &self.phi0_at_sample - &self.phi_at_sample * &self.beta_hat
    }

    /// Plug-in asymptotic covariance `σ̂²_ε Σ̂^{-1} / n`.
    pub fn covariance(&self) -> Result<DMatrix<f64>> {
        let inv = invert_covariance(&self.sigma_hat)?;
        Ok(inv * (self.sigma2_eps_hat / self.n as f64))
    }

    pub fn standard_errors(&self) -> Result<DVector<f64>> {
        Ok(self.covariance()?.diagonal().map(f64::sqrt))
    }
}

fn invert_covariance(sigma: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    linalg::check_full_rank(sigma).map_err(|_| Error::SingularCovariance)?;
    sigma.clone().try_inverse().ok_or(Error::SingularCovariance)
}

/// Least-squares step given smoothed values at the sample points.
pub(crate) fn fit_from_centering(
    data: &Dataset,
    centering: Centering,
    kernel: Kernel,
    bandwidth: f64,
) -> Result<PlmFit> {
    data.check_fit_size()?;
    let y_tilde = &data.y - &centering.phi0;
    let x_tilde = &data.x - &centering.phi;
    let ls = least_squares(&x_tilde, &y_tilde)?;
    let n = data.n();
    let p = data.p();
    let sigma2_eps_hat = ls.rss() / (n - p) as f64;
    let mut sigma_hat = x_tilde.transpose() * &x_tilde / n as f64;
    // symmetrize away rounding
    sigma_hat = (&sigma_hat + sigma_hat.transpose()) * 0.5;
    Ok(PlmFit {
        beta_hat: ls.coef,
        bandwidth,
        kernel,
        sigma2_eps_hat,
        sigma_hat,
        phi0_at_sample: centering.phi0,
        phi_at_sample: centering.phi,
        residuals: ls.residuals,
        n,
    })
}

/// Fits with a precomputed sample-to-sample geometry.
pub fn fit_with_geometry(
    data: &Dataset,
    geom: &PairGeometry,
    kernel: Kernel,
    bandwidth: f64,
) -> Result<PlmFit> {
    if geom.rows() != data.n() || geom.cols() != data.n() || geom.manifold() != data.manifold() {
        return Err(Error::DimensionMismatch(
            "geometry was not built from this dataset".into(),
        ));
    }
    let w = geom.smoother_matrix(kernel, bandwidth, false)?;
    fit_from_centering(
        data,
        Centering::from_weights(&w, &data.y, &data.x),
        kernel,
        bandwidth,
    )
}

pub fn fit_beta(data: &Dataset, cfg: &SmootherConfig) -> Result<PlmFit> {
    data.check_fit_size()?;
    let centering = center_covariates(data, cfg)?;
    fit_from_centering(data, centering, cfg.kernel(), cfg.bandwidth())
}

/// `ĝ(query) = φ̂₀(query) − φ̂(query)ᵀβ̂`, smoothing the fitted sample.
pub fn estimate_g(
    fit: &PlmFit,
    data: &Dataset,
    cfg: &SmootherConfig,
    query: &ManifoldPoint,
) -> Result<f64> {
    data.check_config(cfg)?;
    if fit.bandwidth != cfg.bandwidth() || fit.kernel != cfg.kernel() || fit.n != data.n() {
        return Err(Error::DimensionMismatch(
            "smoother configuration differs from the one used for the fit".into(),
        ));
    }
    let w = DVector::from_vec(normalized_weights(cfg, query, &data.t)?);
    let phi0 = w.dot(&data.y);
    let phi = data.x.transpose() * &w;
    Ok(phi0 - phi.dot(&fit.beta_hat))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WaldTest {
    pub statistic: f64,
    pub dof: usize,
    /// Upper tail probability under the χ² reference.
    pub p_value: f64,
}

/// Wald statistic `n (β̂ − β₀)ᵀ Σ̂ (β̂ − β₀) / σ̂²_ε` for `H₀: β = β₀`.
pub fn wald_test(fit: &PlmFit, beta0: &DVector<f64>, n: usize) -> Result<WaldTest> {
    let p = fit.beta_hat.len();
    if beta0.len() != p {
        return Err(Error::DimensionMismatch(format!(
            "β₀ has {} entries, model has {p}",
            beta0.len()
        )));
    }
    linalg::check_full_rank(&fit.sigma_hat).map_err(|_| Error::SingularCovariance)?;
    let diff = &fit.beta_hat - beta0;
    let quad = diff.dot(&(&fit.sigma_hat * &diff));
    let statistic = if quad == 0.0 {
        0.0
    } else {
        n as f64 * quad / fit.sigma2_eps_hat
    };
    let chi2 = ChiSquared::new(p as f64).expect("positive degrees of freedom");
    let p_value = if statistic.is_finite() {
        1.0 - chi2.cdf(statistic)
    } else {
        0.0
    };
    Ok(WaldTest {
        statistic,
        dof: p,
        p_value,
    })
}
