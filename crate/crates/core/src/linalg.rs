use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative singular-value cutoff below which a design counts as rank deficient.
pub const RANK_TOL: f64 = 1e-10;

/// Ratio of smallest to largest singular value (0 for an all-zero matrix).
pub fn condition_ratio(a: &DMatrix<f64>) -> f64 {
    let sv = a.clone().svd(false, false).singular_values;
    let max = sv.max();
    let min = sv.min();
    if max > 0.0 && max.is_finite() {
        min / max
    } else {
        0.0
    }
}

pub fn check_full_rank(a: &DMatrix<f64>) -> Result<()> {
    if a.nrows() < a.ncols() {
        return Err(Error::CollinearDesign { ratio: 0.0 });
    }
    let ratio = condition_ratio(a);
    if !(ratio > RANK_TOL) {
        return Err(Error::CollinearDesign { ratio });
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct LeastSquares {
    pub coef: DVector<f64>,
    pub residuals: DVector<f64>,
}

impl LeastSquares {
    pub fn rss(&self) -> f64 {
        self.residuals.norm_squared()
    }
}

/// Solves `min ‖a·β − b‖²` through a Householder QR factorization.
pub fn least_squares(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<LeastSquares> {
    if a.nrows() != b.len() {
        return Err(Error::DimensionMismatch(format!(
            "design has {} rows, response has {}",
            a.nrows(),
            b.len()
        )));
    }
    check_full_rank(a)?;
    let p = a.ncols();
    let qr = a.clone().qr();
    let q = qr.q();
    let r = qr.r();
    let qtb = q.transpose() * b;
    let coef = r
        .rows(0, p)
        .into_owned()
        .solve_upper_triangular(&qtb.rows(0, p).into_owned())
        .ok_or(Error::CollinearDesign { ratio: 0.0 })?;
    let residuals = b - a * &coef;
    Ok(LeastSquares { coef, residuals })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_column_closed_form() {
        let a = DMatrix::from_column_slice(5, 1, &[0.3, -1.2, 2.0, 0.7, -0.1]);
        let b = DVector::from_vec(vec![1.0, 0.5, -2.0, 3.0, 0.2]);
        let ls = least_squares(&a, &b).unwrap();
        let expect = a.column(0).dot(&b) / a.column(0).norm_squared();
        assert!((ls.coef[0] - expect).abs() < 1e-14);
        // residuals orthogonal to the column space
        assert!(a.column(0).dot(&ls.residuals).abs() < 1e-13);
    }

    #[test]
    fn agrees_with_normal_equations() {
        let a = DMatrix::from_row_slice(
            6,
            3,
            &[
                1.0, 0.2, -0.5, 0.3, 1.1, 0.4, -0.7, 0.0, 1.3, 0.9, -0.4, 0.2, 0.1, 0.6, -1.0,
                -0.2, 0.8, 0.5,
            ],
        );
        let b = DVector::from_vec(vec![0.4, -1.0, 2.2, 0.3, 0.9, -0.6]);
        let ls = least_squares(&a, &b).unwrap();
        let ata = a.transpose() * &a;
        let direct = ata.try_inverse().unwrap() * a.transpose() * &b;
        assert!((ls.coef - direct).amax() < 1e-12);
    }

    #[test]
    fn single_row_is_saturated() {
        let a = DMatrix::from_element(1, 1, 2.0);
        let b = DVector::from_element(1, 3.0);
        let ls = least_squares(&a, &b).unwrap();
        assert_eq!(ls.coef[0], 1.5);
        assert_eq!(ls.rss(), 0.0);
    }

    #[test]
    fn rank_deficiency_detected() {
        let a = DMatrix::from_row_slice(4, 2, &[1.0, 2.0, 2.0, 4.0, -1.0, -2.0, 0.5, 1.0]);
        let b = DVector::from_vec(vec![1.0, 2.0, 3.0, 4.0]);
        assert!(matches!(
            least_squares(&a, &b),
            Err(Error::CollinearDesign { .. })
        ));
        assert!(least_squares(&DMatrix::zeros(3, 1), &DVector::zeros(3)).is_err());
    }
}
