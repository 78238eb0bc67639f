//! CSV ingestion and emission.
//!
//! Data files carry a header row followed by one observation per record:
//! `y, x_1, …, x_p, t_1, …, t_k` where `t` is the raw point encoding of the
//! manifold (k = d for ℝᵈ, 3 embedded coordinates for the sphere, angle in
//! radians then height for the cylinder).

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::geometry::{ManifoldPoint, ManifoldSpec};
use crate::plm::Dataset;

fn csv_err(record: usize, message: impl Into<String>) -> Error {
    Error::Csv {
        record,
        message: message.into(),
    }
}

/// Numeric records from a headed CSV; `record` numbers start at 1 after the header.
fn read_numeric<R: Read>(reader: R) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| csv_err(0, e.to_string()))?
        .iter()
        .map(str::to_owned)
        .collect();
    if header.is_empty() || header.iter().all(String::is_empty) {
        return Err(csv_err(0, "missing header row"));
    }
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let record = i + 1;
        let rec = rec.map_err(|e| csv_err(record, e.to_string()))?;
        if rec.len() != header.len() {
            return Err(csv_err(
                record,
                format!("expected {} columns, found {}", header.len(), rec.len()),
            ));
        }
        let row = rec
            .iter()
            .enumerate()
            .map(|(c, cell)| {
                cell.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| {
                        csv_err(
                            record,
                            format!("column '{}': '{cell}' is not a finite number", header[c]),
                        )
                    })
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok((header, rows))
}

fn points_from(manifold: &ManifoldSpec, record: usize, raw: &[f64]) -> Result<ManifoldPoint> {
    manifold
        .validate_point(raw)
        .map_err(|e| csv_err(record, e.to_string()))
}

/// Reads a dataset. `p` is inferred from the column count when `None`.
pub fn read_dataset<R: Read>(
    reader: R,
    manifold: &ManifoldSpec,
    p: Option<usize>,
) -> Result<Dataset> {
    let (header, rows) = read_numeric(reader)?;
    let k = manifold.coord_len();
    let ncols = header.len();
    let inferred = ncols
        .checked_sub(1 + k)
        .filter(|&p| p >= 1)
        .ok_or_else(|| {
            csv_err(
                0,
                format!("{ncols} columns cannot hold y, at least one x and {k} coordinates"),
            )
        })?;
    let p = match p {
        Some(p) if p != inferred => {
            return Err(csv_err(
                0,
                format!(
                    "expected {} columns for p = {p}, header has {ncols}",
                    1 + p + k
                ),
            ))
        }
        _ => inferred,
    };
    if rows.is_empty() {
        return Err(csv_err(0, "no data records"));
    }
    let n = rows.len();
    let mut y = Vec::with_capacity(n);
    let mut x = Vec::with_capacity(n * p);
    let mut t = Vec::with_capacity(n);
    for (i, row) in rows.iter().enumerate() {
        y.push(row[0]);
        x.extend_from_slice(&row[1..=p]);
        t.push(points_from(manifold, i + 1, &row[1 + p..])?);
    }
    Dataset::new(
        *manifold,
        DVector::from_vec(y),
        DMatrix::from_row_slice(n, p, &x),
        t,
    )
}

pub fn read_dataset_file(
    path: &Path,
    manifold: &ManifoldSpec,
    p: Option<usize>,
) -> Result<Dataset> {
    let f = std::fs::File::open(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    read_dataset(f, manifold, p)
}

/// Reads manifold points only (one per record).
pub fn read_points<R: Read>(reader: R, manifold: &ManifoldSpec) -> Result<Vec<ManifoldPoint>> {
    let (header, rows) = read_numeric(reader)?;
    if header.len() != manifold.coord_len() {
        return Err(csv_err(
            0,
            format!(
                "expected {} coordinate columns, found {}",
                manifold.coord_len(),
                header.len()
            ),
        ));
    }
    rows.iter()
        .enumerate()
        .map(|(i, r)| points_from(manifold, i + 1, r))
        .collect()
}

/// Reads covariate rows `x_1, …, x_p, t_1, …, t_k` for prediction.
pub fn read_covariates<R: Read>(
    reader: R,
    manifold: &ManifoldSpec,
    p: usize,
) -> Result<(Vec<Vec<f64>>, Vec<ManifoldPoint>)> {
    let (header, rows) = read_numeric(reader)?;
    let k = manifold.coord_len();
    if header.len() != p + k {
        return Err(csv_err(
            0,
            format!(
                "expected {} columns (p = {p}, {k} coordinates), found {}",
                p + k,
                header.len()
            ),
        ));
    }
    let mut xs = Vec::with_capacity(rows.len());
    let mut ts = Vec::with_capacity(rows.len());
    for (i, r) in rows.iter().enumerate() {
        xs.push(r[..p].to_vec());
        ts.push(points_from(manifold, i + 1, &r[p..])?);
    }
    Ok((xs, ts))
}

pub fn coord_headers(manifold: &ManifoldSpec) -> Vec<String> {
    (1..=manifold.coord_len())
        .map(|i| format!("t{i}"))
        .collect()
}

/// Writes a dataset in the layout accepted by [`read_dataset`].
pub fn write_dataset<W: Write>(data: &Dataset, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["y".to_owned()];
    header.extend((1..=data.p()).map(|j| format!("x{j}")));
    header.extend(coord_headers(data.manifold()));
    w.write_record(&header)
        .map_err(|e| Error::Io(e.to_string()))?;
    for i in 0..data.n() {
        let mut rec = vec![format!("{:?}", data.y()[i])];
        rec.extend(data.x().row(i).iter().map(|v| format!("{v:?}")));
        rec.extend(data.t()[i].coords().iter().map(|v| format!("{v:?}")));
        w.write_record(&rec).map_err(|e| Error::Io(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn reads_cylinder_file() {
        let src = "y,x1,x2,angle,height\n1.0,0.5,2,0.1,3.0\n2.5,1.5,-1,6.0,7.7\n-0.3,0.0,4,-1.5707963267948966,0\n";
        let m: ManifoldSpec = "cylinder:0:10".parse().unwrap();
        let d = read_dataset(src.as_bytes(), &m, None).unwrap();
        assert_eq!((d.n(), d.p()), (3, 2));
        assert_eq!(d.x()[(1, 1)], -1.0);
        match &d.t()[2] {
            ManifoldPoint::Cylinder { angle, .. } => {
                assert!((angle - 1.5 * std::f64::consts::PI).abs() < 1e-15)
            }
            p => panic!("{p:?}"),
        }
        assert!(read_dataset(src.as_bytes(), &m, Some(1)).is_err());
    }

    #[test]
    fn rejects_off_manifold_row_with_its_number() {
        let src = "y,x,t1,t2,t3\n1,1,1,0,0\n2,2,0.5,0,0\n";
        let err = read_dataset(src.as_bytes(), &ManifoldSpec::Sphere2, None).unwrap_err();
        assert!(matches!(err, Error::Csv { record: 2, .. }), "{err}");
    }

    #[test]
    fn reports_malformed_cells_and_widths() {
        let m = ManifoldSpec::euclidean(1).unwrap();
        let err = read_dataset("y,x,t\n1,2,3\n1,abc,3\n".as_bytes(), &m, None).unwrap_err();
        assert!(matches!(err, Error::Csv { record: 2, .. }));
        let err = read_dataset("y,x,t\n1,2,3\n1,2\n".as_bytes(), &m, None).unwrap_err();
        assert!(matches!(err, Error::Csv { record: 2, .. }));
        assert!(read_dataset("y,t\n1,2\n".as_bytes(), &m, None).is_err());
        assert!(read_dataset("y,x,t\n".as_bytes(), &m, None).is_err());
    }

    #[test]
    fn reads_points_and_covariates() {
        let pts = read_points("a,b,c\n0,0,1\n0,1,0\n".as_bytes(), &ManifoldSpec::Sphere2).unwrap();
        assert_eq!(pts.len(), 2);
        let m = ManifoldSpec::euclidean(2).unwrap();
        let (xs, ts) = read_covariates("x1,t1,t2\n4,0,1\n".as_bytes(), &m, 1).unwrap();
        assert_eq!(xs, vec![vec![4.0]]);
        assert_eq!(ts, vec![ManifoldPoint::Euclidean(vec![0.0, 1.0])]);
    }

    proptest! {
        #[test]
        fn write_then_read_roundtrips(
            rows in prop::collection::vec(
                (-1e3f64..1e3, -1e3f64..1e3, -1.0f64..1.0, 0.0f64..6.0),
                1..20,
            )
        ) {
            let m = ManifoldSpec::Sphere2;
            let y: Vec<f64> = rows.iter().map(|r| r.0).collect();
            let x: Vec<Vec<f64>> = rows.iter().map(|r| vec![r.1]).collect();
            let t: Vec<ManifoldPoint> = rows
                .iter()
                .map(|&(_, _, z, phi)| {
                    let s = (1.0 - z * z).sqrt();
                    m.validate_point(&[s * phi.cos(), s * phi.sin(), z]).unwrap()
                })
                .collect();
            let d = Dataset::from_rows(m, y, &x, t).unwrap();
            let mut buf = Vec::new();
            write_dataset(&d, &mut buf).unwrap();
            let back = read_dataset(buf.as_slice(), &m, Some(1)).unwrap();
            prop_assert_eq!(back.y(), d.y());
            prop_assert_eq!(back.x(), d.x());
            for (a, b) in back.t().iter().zip(d.t()) {
                for (u, v) in a.coords().iter().zip(b.coords()) {
                    prop_assert!((u - v).abs() <= 1e-15);
                }
            }
        }
    }
}
