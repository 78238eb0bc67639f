use manifold_plm::bandwidth::{prediction_error_ep, split_alternate, EuclideanSample};
use manifold_plm::io::{read_dataset, write_dataset};
use manifold_plm::simulation::{generate, replication_rng, DesignKind, SimDesign};
use manifold_plm::{
    fit_beta, select_cv, select_sv, sv_score, BandwidthGrid, Dataset, Kernel, ManifoldPoint,
    ManifoldSpec, SmootherConfig,
};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn quad(u: f64) -> f64 {
    if u < 1.0 {
        15.0 / 16.0 * (1.0 - u * u).powi(2)
    } else {
        0.0
    }
}

fn nw_line(q: &[f64], pts: &[Vec<f64>], ys: &[f64], h: f64) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for (p, y) in pts.iter().zip(ys) {
        let d = p
            .iter()
            .zip(q)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt();
        let k = quad(d / h);
        num += k * y;
        den += k;
    }
    num / den
}

fn sphere_sample(seed: u64, n: usize) -> Dataset {
    let design = SimDesign::standard(DesignKind::Sphere, n, seed).unwrap();
    generate(&design, &mut replication_rng(seed, 0))
        .unwrap()
        .data
}

#[test]
fn cross_validation_ignores_row_order() {
    let data = sphere_sample(21, 120);
    let mut order: Vec<usize> = (0..data.n()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(1));
    let shuffled = data.subset(&order).unwrap();
    let grid = BandwidthGrid::logspace(0.2, 2.5, 12, data.manifold()).unwrap();
    let a = select_cv(&data, Kernel::Quadratic, &grid).unwrap();
    let b = select_cv(&shuffled, Kernel::Quadratic, &grid).unwrap();
    assert_eq!(a.best_h, b.best_h);
    for (x, y) in a.scores.iter().zip(&b.scores) {
        match (x.score, y.score) {
            (Some(u), Some(v)) => assert!((u - v).abs() <= 1e-10 * u.abs().max(1.0)),
            (None, None) => {}
            other => panic!("feasibility differs at h = {}: {other:?}", x.h),
        }
    }
}

#[test]
fn split_sample_score_matches_line_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let m = ManifoldSpec::euclidean(1).unwrap();
    let n = 40;
    let t: Vec<f64> = (0..n)
        .map(|i| (i as f64 + rng.random::<f64>()) / n as f64)
        .collect();
    let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let y: Vec<f64> = (0..n)
        .map(|i| 2.0 * x[i] + (4.0 * t[i]).sin() + 0.1 * rng.random::<f64>())
        .collect();
    let pts = t
        .iter()
        .map(|&v| ManifoldPoint::Euclidean(vec![v]))
        .collect();
    let rows: Vec<Vec<f64>> = x.iter().map(|&v| vec![v]).collect();
    let data = Dataset::from_rows(m, y.clone(), &rows, pts).unwrap();
    let (train, validate) = split_alternate(&data).unwrap();
    let h = 0.3;

    let tr: Vec<usize> = (0..n).step_by(2).collect();
    let va: Vec<usize> = (1..n).step_by(2).collect();
    let tr_t: Vec<Vec<f64>> = tr.iter().map(|&i| vec![t[i]]).collect();
    let tr_y: Vec<f64> = tr.iter().map(|&i| y[i]).collect();
    let tr_x: Vec<f64> = tr.iter().map(|&i| x[i]).collect();
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut resid = Vec::new();
    for &i in &va {
        let yt = y[i] - nw_line(&[t[i]], &tr_t, &tr_y, h);
        let xt = x[i] - nw_line(&[t[i]], &tr_t, &tr_x, h);
        sxx += xt * xt;
        sxy += xt * yt;
        resid.push((xt, yt));
    }
    let b = sxy / sxx;
    let oracle: f64 = resid.iter().map(|(xt, yt)| (yt - b * xt).powi(2)).sum();

    let cfg = SmootherConfig::quadratic(m, h).unwrap();
    let score = sv_score(&train, &validate, &cfg).unwrap();
    assert!((score - oracle).abs() < 1e-10, "{score} vs {oracle}");

    let grid = BandwidthGrid::new(vec![0.1, 0.3, 0.6], &m).unwrap();
    let sel = select_sv(&train, &validate, Kernel::Quadratic, &grid).unwrap();
    assert_eq!(sel.scores[1].score, Some(score));
}

#[test]
fn prediction_error_matches_plane_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let pts = |rng: &mut ChaCha8Rng, k: usize| -> Vec<Vec<f64>> {
        (0..k)
            .map(|_| vec![rng.random::<f64>(), rng.random::<f64>()])
            .collect()
    };
    let tr = pts(&mut rng, 60);
    let va = pts(&mut rng, 25);
    let f = |p: &Vec<f64>| p[0] * 3.0 - p[1] * p[1];
    let tr_y: Vec<f64> = tr.iter().map(f).collect();
    let va_y: Vec<f64> = va.iter().map(|p| f(p) + 0.05).collect();
    let h = 0.45;
    let oracle: f64 = va
        .iter()
        .zip(&va_y)
        .map(|(p, y)| (y - nw_line(p, &tr, &tr_y, h)).powi(2))
        .sum();
    let ep = prediction_error_ep(
        EuclideanSample {
            responses: &tr_y,
            predictors: &tr,
        },
        EuclideanSample {
            responses: &va_y,
            predictors: &va,
        },
        Kernel::Quadratic,
        h,
    )
    .unwrap();
    assert!((ep - oracle).abs() < 1e-10, "{ep} vs {oracle}");
}

#[test]
fn csv_round_trip_preserves_the_fit() {
    for kind in [DesignKind::Sphere, DesignKind::Cylinder] {
        let design = SimDesign::standard(kind, 100, 5).unwrap();
        let data = generate(&design, &mut replication_rng(5, 1)).unwrap().data;
        let mut buf = Vec::new();
        write_dataset(&data, &mut buf).unwrap();
        let back = read_dataset(buf.as_slice(), data.manifold(), Some(1)).unwrap();
        let cfg = SmootherConfig::quadratic(*data.manifold(), 1.2).unwrap();
        let a = fit_beta(&data, &cfg).unwrap();
        let b = fit_beta(&back, &cfg).unwrap();
        assert!((a.beta_hat[0] - b.beta_hat[0]).abs() < 1e-12);
    }
}

#[test]
fn cylinder_csv_by_hand() {
    let text = "y,x1,angle,height\n1.0,0.5,0.0,-1\n2.0,1.5,3.0,0.0\n0.5,-1,6.2,1.9\n";
    let m = ManifoldSpec::cylinder(-2.0, 2.0).unwrap();
    let data = read_dataset(text.as_bytes(), &m, None).unwrap();
    assert_eq!((data.n(), data.p()), (3, 1));
    assert_eq!(data.t()[2].coords(), vec![6.2, 1.9]);
}

#[test]
fn off_sphere_row_is_named() {
    let text = "y,x1,t1,t2,t3\n1,1,0,0,1\n1,1,0.5,0,0\n";
    let e = read_dataset(text.as_bytes(), &ManifoldSpec::Sphere2, None).unwrap_err();
    assert!(e.to_string().contains("record 2"), "{e}");
}
