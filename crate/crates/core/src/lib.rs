//! Partially linear regression `y = xᵀβ + g(t) + ε` where the nonparametric
//! covariate `t` lives on a Riemannian manifold (Euclidean space, the sphere S²
//! or a flat cylinder).
//!
//! The estimator smooths the response and the linear covariates on `t` with a
//! geodesic kernel corrected by the manifold's volume density, regresses the
//! residuals to get β̂, and recovers ĝ by plug-in. Bandwidths are chosen by
//! leave-one-out or split-sample cross-validation.
//!
//! ```
//! use manifold_plm::{fit_beta, simulation, SmootherConfig};
//!
//! let design = simulation::SimDesign::standard(simulation::DesignKind::Sphere, 200, 1)?;
//! let sim = simulation::generate(&design, &mut simulation::replication_rng(1, 0))?;
//! let cfg = SmootherConfig::quadratic(*sim.data.manifold(), 0.5)?;
//! let fit = fit_beta(&sim.data, &cfg)?;
//! assert!((fit.beta_hat[0] - 5.0).abs() < 0.5);
//! # Ok::<(), manifold_plm::Error>(())
//! ```

// Negated comparisons in this crate are deliberate: they reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bandwidth;
pub mod error;
pub mod geometry;
pub mod io;
pub mod linalg;
pub mod plm;
pub mod simulation;
pub mod smoothing;

pub use bandwidth::{
    cv_score, prediction_error_ep, select_cv, select_sv, sv_score, BandwidthGrid, SelectionResult,
};
pub use error::{Error, Result};
pub use geometry::{ManifoldPoint, ManifoldSpec};
pub use plm::{center_covariates, estimate_g, fit_beta, wald_test, Dataset, PlmFit, WaldTest};
pub use simulation::{monte_carlo, McSummary, SimDesign};
pub use smoothing::{
    density_estimate, loo_regress, normalized_weights, nw_regress, raw_weights, Kernel,
    PairGeometry, SmootherConfig,
};
