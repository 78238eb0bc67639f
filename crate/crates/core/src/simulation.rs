//! Simulation designs on the sphere and the cylinder and the Monte Carlo loop
//! that summarizes the estimator over independent replications.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::bandwidth::{select_cv_with_geometry, BandwidthGrid};
use crate::error::{Error, Result};
use crate::geometry::{normalize_angle, ManifoldPoint, ManifoldSpec};
use crate::plm::{fit_with_geometry, wald_test, Dataset};
use crate::smoothing::{Kernel, PairGeometry};

/// Below this concentration the von Mises law is sampled as uniform.
const UNIFORM_KAPPA: f64 = 1e-8;

/// One draw from the von Mises distribution `vM(mu, kappa)`, in `[0, 2π)`.
///
/// Best–Fisher wrapped-Cauchy rejection sampler.
pub fn sample_von_mises<R: Rng + ?Sized>(mu: f64, kappa: f64, rng: &mut R) -> f64 {
    assert!(
        kappa >= 0.0,
        "concentration must be nonnegative, got {kappa}"
    );
    if kappa < UNIFORM_KAPPA {
        return normalize_angle(2.0 * PI * rng.random::<f64>());
    }
    let tau = 1.0 + (1.0 + 4.0 * kappa * kappa).sqrt();
    let rho = (tau - (2.0 * tau).sqrt()) / (2.0 * kappa);
    let r = (1.0 + rho * rho) / (2.0 * rho);
    let f = loop {
        let u1: f64 = rng.random();
        let u2: f64 = rng.random();
        let z = (PI * u1).cos();
        let f = (1.0 + r * z) / (r + z);
        let c = kappa * (r - f);
        if c * (2.0 - c) - u2 > 0.0 || (c / u2).ln() + 1.0 - c >= 0.0 {
            break f;
        }
    };
    let u3: f64 = rng.random();
    let angle = f.clamp(-1.0, 1.0).acos();
    normalize_angle(if u3 < 0.5 { mu - angle } else { mu + angle })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DesignKind {
    /// `y = βx + exp{−(t₁ + 2t₂ + t₃)²} + ε`, `x = t₁ + t₂ + t₃ + η` on S².
    Sphere,
    /// `y = βx + s² + sin θ + ε`, `x = exp(θ) + η` on the cylinder of height (−2, 2).
    Cylinder,
}

impl std::str::FromStr for DesignKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sphere" => Ok(DesignKind::Sphere),
            "cylinder" => Ok(DesignKind::Cylinder),
            _ => Err(Error::InvalidDesign(format!("unknown design '{s}'"))),
        }
    }
}

impl DesignKind {
    pub fn name(self) -> &'static str {
        match self {
            DesignKind::Sphere => "sphere",
            DesignKind::Cylinder => "cylinder",
        }
    }

    pub fn manifold(self) -> ManifoldSpec {
        match self {
            DesignKind::Sphere => ManifoldSpec::Sphere2,
            DesignKind::Cylinder => ManifoldSpec::Cylinder {
                height_min: -2.0,
                height_max: 2.0,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimDesign {
    pub kind: DesignKind,
    pub n: usize,
    pub beta_true: f64,
    pub noise_sd: f64,
    pub seed: u64,
}

impl SimDesign {
    pub fn new(
        kind: DesignKind,
        n: usize,
        beta_true: f64,
        noise_sd: f64,
        seed: u64,
    ) -> Result<Self> {
        if n < 10 {
            return Err(Error::InvalidDesign(format!(
                "n must be at least 10, got {n}"
            )));
        }
        if !(noise_sd > 0.0 && noise_sd.is_finite()) {
            return Err(Error::InvalidDesign(format!(
                "noise_sd must be positive, got {noise_sd}"
            )));
        }
        if !beta_true.is_finite() {
            return Err(Error::InvalidDesign("beta_true must be finite".into()));
        }
        Ok(Self {
            kind,
            n,
            beta_true,
            noise_sd,
            seed,
        })
    }

    /// β = 5, unit noise.
    pub fn standard(kind: DesignKind, n: usize, seed: u64) -> Result<Self> {
        Self::new(kind, n, 5.0, 1.0, seed)
    }
}

/// A generated sample together with the true `g(t_i)`.
#[derive(Debug, Clone)]
pub struct SimulatedData {
    pub data: Dataset,
    pub g_true: Vec<f64>,
}

struct Draw {
    point: ManifoldPoint,
    mean_x: f64,
    g: f64,
}

fn assemble<R: Rng + ?Sized>(
    design: &SimDesign,
    rng: &mut R,
    mut draw_t: impl FnMut(&mut R) -> Draw,
) -> Result<SimulatedData> {
    let noise =
        Normal::new(0.0, design.noise_sd).map_err(|e| Error::InvalidDesign(e.to_string()))?;
    let n = design.n;
    let mut y = Vec::with_capacity(n);
    let mut x = Vec::with_capacity(n);
    let mut t = Vec::with_capacity(n);
    let mut g_true = Vec::with_capacity(n);
    for _ in 0..n {
        let d = draw_t(rng);
        let eps = noise.sample(rng);
        let eta = noise.sample(rng);
        let xi = d.mean_x + eta;
        y.push(design.beta_true * xi + d.g + eps);
        x.push(xi);
        t.push(d.point);
        g_true.push(d.g);
    }
    let data = Dataset::new(
        design.kind.manifold(),
        DVector::from_vec(y),
        DMatrix::from_vec(n, 1, x),
        t,
    )?;
    Ok(SimulatedData { data, g_true })
}

/// θ ~ vM(0, 3), γ ~ vM(π, 5), `t = (cos θ cos γ, sin θ cos γ, sin γ)`.
pub fn gen_sphere_dataset<R: Rng + ?Sized>(
    design: &SimDesign,
    rng: &mut R,
) -> Result<SimulatedData> {
    if design.kind != DesignKind::Sphere {
        return Err(Error::InvalidDesign("expected the sphere design".into()));
    }
    assemble(design, rng, |rng| {
        let theta = sample_von_mises(0.0, 3.0, rng);
        let gamma = sample_von_mises(PI, 5.0, rng);
        let u = [
            theta.cos() * gamma.cos(),
            theta.sin() * gamma.cos(),
            gamma.sin(),
        ];
        let lin = u[0] + 2.0 * u[1] + u[2];
        Draw {
            point: ManifoldPoint::Sphere(u),
            mean_x: u[0] + u[1] + u[2],
            g: (-lin * lin).exp(),
        }
    })
}

/// θ ~ vM(π, 3) on `[0, 2π)`, s ~ U(−2, 2), `t = (θ, s)`.
pub fn gen_cylinder_dataset<R: Rng + ?Sized>(
    design: &SimDesign,
    rng: &mut R,
) -> Result<SimulatedData> {
    if design.kind != DesignKind::Cylinder {
        return Err(Error::InvalidDesign("expected the cylinder design".into()));
    }
    assemble(design, rng, |rng| {
        let theta = sample_von_mises(PI, 3.0, rng);
        let s = rng.random_range(-2.0..2.0);
        Draw {
            point: ManifoldPoint::Cylinder {
                angle: theta,
                height: s,
            },
            mean_x: theta.exp(),
            g: s * s + theta.sin(),
        }
    })
}

pub fn generate<R: Rng + ?Sized>(design: &SimDesign, rng: &mut R) -> Result<SimulatedData> {
    match design.kind {
        DesignKind::Sphere => gen_sphere_dataset(design, rng),
        DesignKind::Cylinder => gen_cylinder_dataset(design, rng),
    }
}

/// Independent stream for replication `r`, identical however replications are scheduled.
pub fn replication_rng(seed: u64, r: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(r as u64);
    rng
}

/// Result of one successful replication (single linear covariate designs).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Replication {
    pub index: usize,
    pub bandwidth: f64,
    pub beta_hat: f64,
    pub std_error: f64,
    /// Wald statistic against the true β.
    pub wald: f64,
    /// `n^{-1} Σ (ĝ(t_i) − g(t_i))²`.
    pub mse_g: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McSummary {
    pub design: DesignKind,
    pub n: usize,
    pub beta_true: f64,
    /// Successful replications entering the aggregates.
    pub reps: usize,
    pub failed: usize,
    pub mean_beta: f64,
    /// Sample standard deviation (denominator `reps − 1`).
    pub sd_beta: f64,
    /// `mean((β̂ − β)²)`.
    pub mse_beta: f64,
    pub mean_mse_g: f64,
    pub mean_bandwidth: f64,
    /// Fraction of replications whose Wald statistic is below the χ² 95% quantile.
    pub wald_coverage_95: f64,
}

pub const TABLE_HEADER: &str = "design,n,reps,mean_beta,sd_beta,mse_beta,mean_mse_g";

impl McSummary {
    pub fn from_replications(
        design: &SimDesign,
        reps: &[Replication],
        failed: usize,
    ) -> Result<Self> {
        if reps.len() < 2 {
            return Err(Error::InvalidDesign(
                "need at least two successful replications".into(),
            ));
        }
        let m = reps.len() as f64;
        let mean_beta = reps.iter().map(|r| r.beta_hat).sum::<f64>() / m;
        let var = reps
            .iter()
            .map(|r| (r.beta_hat - mean_beta).powi(2))
            .sum::<f64>()
            / (m - 1.0);
        let mse_beta = reps
            .iter()
            .map(|r| (r.beta_hat - design.beta_true).powi(2))
            .sum::<f64>()
            / m;
        let cutoff = ChiSquared::new(1.0).expect("dof 1").inverse_cdf(0.95);
        Ok(Self {
            design: design.kind,
            n: design.n,
            beta_true: design.beta_true,
            reps: reps.len(),
            failed,
            mean_beta,
            sd_beta: var.sqrt(),
            mse_beta,
            mean_mse_g: reps.iter().map(|r| r.mse_g).sum::<f64>() / m,
            mean_bandwidth: reps.iter().map(|r| r.bandwidth).sum::<f64>() / m,
            wald_coverage_95: reps.iter().filter(|r| r.wald <= cutoff).count() as f64 / m,
        })
    }

    /// One row in the [`TABLE_HEADER`] layout.
    pub fn table_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.design.name(),
            self.n,
            self.reps,
            self.mean_beta,
            self.sd_beta,
            self.mse_beta,
            self.mean_mse_g
        )
    }
}

#[derive(Debug, Clone)]
pub struct McRun {
    pub replications: Vec<Replication>,
    /// Indices of replications with no feasible bandwidth.
    pub failed: Vec<usize>,
    pub summary: McSummary,
}

/// Generates, selects h by cross-validation, fits and scores replication `r`.
///
/// `Ok(None)` when no bandwidth in the grid is feasible for this sample.
pub fn run_replication(
    design: &SimDesign,
    grid: &BandwidthGrid,
    r: usize,
) -> Result<Option<Replication>> {
    let mut rng = replication_rng(design.seed, r);
    let sim = generate(design, &mut rng)?;
    let data = &sim.data;
    let geom = PairGeometry::within(*data.manifold(), data.t())?;
    let selection = match select_cv_with_geometry(data, &geom, Kernel::Quadratic, grid) {
        Ok(s) => s,
        Err(Error::NoFeasibleBandwidth { .. }) => return Ok(None),
        Err(e) => return Err(e),
    };
    let fit = match fit_with_geometry(data, &geom, Kernel::Quadratic, selection.best_h) {
        Ok(f) => f,
        Err(e) if e.is_infeasible_bandwidth() => return Ok(None),
        Err(e) => return Err(e),
    };
    let g_hat = fit.g_at_sample();
    let mse_g = g_hat
        .iter()
        .zip(&sim.g_true)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / data.n() as f64;
    let wald = wald_test(&fit, &DVector::from_element(1, design.beta_true), data.n())?;
    Ok(Some(Replication {
        index: r,
        bandwidth: selection.best_h,
        beta_hat: fit.beta_hat[0],
        std_error: fit.standard_errors()?[0],
        wald: wald.statistic,
        mse_g,
    }))
}

/// Runs `reps` replications; fails if more than 5% have no feasible bandwidth.
pub fn monte_carlo_run(design: &SimDesign, reps: usize, grid: &BandwidthGrid) -> Result<McRun> {
    if reps < 2 {
        return Err(Error::InvalidDesign(format!(
            "reps must be at least 2, got {reps}"
        )));
    }
    if grid
        .values()
        .iter()
        .any(|&h| h >= design.kind.manifold().injectivity_radius())
    {
        return Err(Error::InvalidGrid(
            "grid exceeds the injectivity radius".into(),
        ));
    }
    let outcomes: Vec<Result<Option<Replication>>> = (0..reps)
        .into_par_iter()
        .map(|r| run_replication(design, grid, r))
        .collect();
    let mut replications = Vec::with_capacity(reps);
    let mut failed = Vec::new();
    for (r, outcome) in outcomes.into_iter().enumerate() {
        match outcome? {
            Some(rep) => replications.push(rep),
            None => failed.push(r),
        }
    }
    if failed.len() as f64 > 0.05 * reps as f64 {
        return Err(Error::UnstableDesign {
            failed: failed.len(),
            reps,
        });
    }
    let summary = McSummary::from_replications(design, &replications, failed.len())?;
    Ok(McRun {
        replications,
        failed,
        summary,
    })
}

pub fn monte_carlo(design: &SimDesign, reps: usize, grid: &BandwidthGrid) -> Result<McSummary> {
    Ok(monte_carlo_run(design, reps, grid)?.summary)
}

/// Default cross-validation grid for a design: 30 log-spaced values from 0.05 to 0.9π.
pub fn default_grid(kind: DesignKind) -> BandwidthGrid {
    BandwidthGrid::logspace(0.05, 0.9 * PI, 30, &kind.manifold())
        .expect("static grid is admissible")
}
