//! Geometry of the supported covariate manifolds.
//!
//! Three spaces are handled: flat Euclidean space ℝᵈ, the unit sphere S² embedded
//! in ℝ³, and the flat cylinder S¹ × [a, b] of unit radius. Each provides the
//! geodesic distance, the volume density function in normal coordinates and the
//! injectivity radius that bounds admissible kernel bandwidths.

use std::f64::consts::{PI, TAU};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Points on the sphere must have unit norm to this tolerance.
pub const SPHERE_NORM_TOL: f64 = 1e-9;
/// Raw sphere coordinates within this tolerance of unit norm are renormalized.
pub const SPHERE_RENORMALIZE_TOL: f64 = 1e-6;
/// Sphere pairs this close to antipodal have no defined volume density.
pub const ANTIPODAL_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ManifoldSpec {
    Euclidean { dim: usize },
    Sphere2,
    Cylinder { height_min: f64, height_max: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ManifoldPoint {
    Euclidean(Vec<f64>),
    /// Unit vector in ℝ³.
    Sphere([f64; 3]),
    /// Angle in `[0, 2π)` and height.
    Cylinder {
        angle: f64,
        height: f64,
    },
}

impl ManifoldPoint {
    /// The raw encoding accepted by [`ManifoldSpec::validate_point`].
    pub fn coords(&self) -> Vec<f64> {
        match self {
            ManifoldPoint::Euclidean(v) => v.clone(),
            ManifoldPoint::Sphere(u) => u.to_vec(),
            ManifoldPoint::Cylinder { angle, height } => vec![*angle, *height],
        }
    }
}

/// Wraps an angle into `[0, 2π)`.
pub fn normalize_angle(theta: f64) -> f64 {
    let r = theta.rem_euclid(TAU);
    // rem_euclid can round up to exactly TAU for tiny negative inputs
    if r >= TAU {
        0.0
    } else {
        r
    }
}

/// Shortest angular separation on the unit circle, in `[0, π]`.
pub fn angular_separation(a: f64, b: f64) -> f64 {
    let d = (a - b).abs().rem_euclid(TAU);
    d.min(TAU - d)
}

impl ManifoldSpec {
    pub fn euclidean(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidManifold(
                "euclidean dimension must be positive".into(),
            ));
        }
        Ok(ManifoldSpec::Euclidean { dim })
    }

    pub fn cylinder(height_min: f64, height_max: f64) -> Result<Self> {
        if !(height_min.is_finite() && height_max.is_finite() && height_min < height_max) {
            return Err(Error::InvalidManifold(format!(
                "cylinder requires finite height_min < height_max, got [{height_min}, {height_max}]"
            )));
        }
        Ok(ManifoldSpec::Cylinder {
            height_min,
            height_max,
        })
    }

    pub fn intrinsic_dim(&self) -> usize {
        match self {
            ManifoldSpec::Euclidean { dim } => *dim,
            ManifoldSpec::Sphere2 | ManifoldSpec::Cylinder { .. } => 2,
        }
    }

    /// Number of raw coordinates in the ingestion encoding.
    pub fn coord_len(&self) -> usize {
        match self {
            ManifoldSpec::Euclidean { dim } => *dim,
            ManifoldSpec::Sphere2 => 3,
            ManifoldSpec::Cylinder { .. } => 2,
        }
    }

    pub fn injectivity_radius(&self) -> f64 {
        match self {
            ManifoldSpec::Euclidean { .. } => f64::INFINITY,
            ManifoldSpec::Sphere2 | ManifoldSpec::Cylinder { .. } => PI,
        }
    }

    /// Builds a point from raw coordinates, normalizing where the encoding allows it.
    pub fn validate_point(&self, raw: &[f64]) -> Result<ManifoldPoint> {
        if raw.len() != self.coord_len() {
            return Err(Error::InvalidPoint(format!(
                "expected {} coordinates for {self}, got {}",
                self.coord_len(),
                raw.len()
            )));
        }
        if raw.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidPoint(format!(
                "non-finite coordinate in {raw:?}"
            )));
        }
        match *self {
            ManifoldSpec::Euclidean { .. } => Ok(ManifoldPoint::Euclidean(raw.to_vec())),
            ManifoldSpec::Sphere2 => {
                let norm = (raw[0] * raw[0] + raw[1] * raw[1] + raw[2] * raw[2]).sqrt();
                if (norm - 1.0).abs() > SPHERE_RENORMALIZE_TOL {
                    return Err(Error::InvalidPoint(format!(
                        "sphere point {raw:?} has norm {norm}, not 1"
                    )));
                }
                Ok(ManifoldPoint::Sphere([
                    raw[0] / norm,
                    raw[1] / norm,
                    raw[2] / norm,
                ]))
            }
            ManifoldSpec::Cylinder {
                height_min,
                height_max,
            } => {
                let height = raw[1];
                if height < height_min || height > height_max {
                    return Err(Error::InvalidPoint(format!(
                        "cylinder height {height} outside [{height_min}, {height_max}]"
                    )));
                }
                Ok(ManifoldPoint::Cylinder {
                    angle: normalize_angle(raw[0]),
                    height,
                })
            }
        }
    }

    /// Checks that an already-built point belongs to this manifold.
    pub fn check_point(&self, p: &ManifoldPoint) -> Result<()> {
        match (self, p) {
            (ManifoldSpec::Euclidean { dim }, ManifoldPoint::Euclidean(v)) => {
                if v.len() != *dim {
                    return Err(Error::InvalidPoint(format!(
                        "point has {} coordinates, manifold dimension is {dim}",
                        v.len()
                    )));
                }
                if v.iter().any(|c| !c.is_finite()) {
                    return Err(Error::InvalidPoint("non-finite coordinate".into()));
                }
                Ok(())
            }
            (ManifoldSpec::Sphere2, ManifoldPoint::Sphere(u)) => {
                let norm = (u[0] * u[0] + u[1] * u[1] + u[2] * u[2]).sqrt();
                if !norm.is_finite() || (norm - 1.0).abs() > SPHERE_NORM_TOL {
                    return Err(Error::InvalidPoint(format!(
                        "sphere point {u:?} has norm {norm}"
                    )));
                }
                Ok(())
            }
            (
                ManifoldSpec::Cylinder {
                    height_min,
                    height_max,
                },
                ManifoldPoint::Cylinder { angle, height },
            ) => {
                if !(0.0..TAU).contains(angle) {
                    return Err(Error::InvalidPoint(format!(
                        "cylinder angle {angle} not in [0, 2π)"
                    )));
                }
                if !(*height >= *height_min && *height <= *height_max) {
                    return Err(Error::InvalidPoint(format!(
                        "cylinder height {height} outside [{height_min}, {height_max}]"
                    )));
                }
                Ok(())
            }
            _ => Err(Error::InvalidPoint(format!(
                "point {p:?} does not belong to {self}"
            ))),
        }
    }

    /// Geodesic distance between two valid points.
    pub fn distance(&self, a: &ManifoldPoint, b: &ManifoldPoint) -> Result<f64> {
        self.check_point(a)?;
        self.check_point(b)?;
        Ok(self.distance_unchecked(a, b))
    }

    /// Geodesic distance without validating the points. Mismatched point kinds yield NaN.
    pub(crate) fn distance_unchecked(&self, a: &ManifoldPoint, b: &ManifoldPoint) -> f64 {
        match (a, b) {
            (ManifoldPoint::Euclidean(u), ManifoldPoint::Euclidean(v)) => u
                .iter()
                .zip(v)
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt(),
            (ManifoldPoint::Sphere(u), ManifoldPoint::Sphere(v)) => {
                if u == v {
                    return 0.0;
                }
                let dot = u[0] * v[0] + u[1] * v[1] + u[2] * v[2];
                dot.clamp(-1.0, 1.0).acos()
            }
            (
                ManifoldPoint::Cylinder {
                    angle: ta,
                    height: sa,
                },
                ManifoldPoint::Cylinder {
                    angle: tb,
                    height: sb,
                },
            ) => angular_separation(*ta, *tb).hypot(sa - sb),
            _ => f64::NAN,
        }
    }

    /// Volume density `θ_base(target)` as a function of geodesic distance.
    pub fn density_at_distance(&self, rho: f64) -> Result<f64> {
        match self {
            ManifoldSpec::Euclidean { .. } | ManifoldSpec::Cylinder { .. } => Ok(1.0),
            ManifoldSpec::Sphere2 => {
                if rho >= PI - ANTIPODAL_TOL {
                    Err(Error::OutsideInjectivityDomain { distance: rho })
                } else if rho == 0.0 {
                    Ok(1.0)
                } else {
                    Ok(rho.sin() / rho)
                }
            }
        }
    }

    pub fn volume_density(&self, base: &ManifoldPoint, target: &ManifoldPoint) -> Result<f64> {
        let rho = self.distance(base, target)?;
        self.density_at_distance(rho)
    }
}

impl fmt::Display for ManifoldSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ManifoldSpec::Euclidean { dim } => write!(f, "euclidean:{dim}"),
            ManifoldSpec::Sphere2 => write!(f, "sphere"),
            ManifoldSpec::Cylinder {
                height_min,
                height_max,
            } => write!(f, "cylinder:{height_min}:{height_max}"),
        }
    }
}

/// Parses `euclidean:D`, `sphere` or `cylinder:MIN:MAX`.
impl FromStr for ManifoldSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.trim().split(':').collect();
        let bad = || Error::InvalidManifold(format!("cannot parse manifold '{s}'"));
        match parts.as_slice() {
            ["sphere"] => Ok(ManifoldSpec::Sphere2),
            ["euclidean", d] => ManifoldSpec::euclidean(d.parse().map_err(|_| bad())?),
            ["cylinder", lo, hi] => ManifoldSpec::cylinder(
                lo.parse().map_err(|_| bad())?,
                hi.parse().map_err(|_| bad())?,
            ),
            _ => Err(bad()),
        }
    }
}
