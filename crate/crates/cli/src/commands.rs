use std::fs::File;
use std::path::{Path, PathBuf};

use manifold_plm::bandwidth::{
    ep_curve, linspace_values, logspace_values, select_cv_with_geometry, split_alternate,
    BandwidthScore, EuclideanSample,
};
use manifold_plm::io::{coord_headers, read_covariates, read_dataset_file, read_points};
use manifold_plm::plm::fit_with_geometry;
use manifold_plm::simulation::{default_grid, monte_carlo_run, SimDesign, TABLE_HEADER};
use manifold_plm::{
    estimate_g, sv_score, wald_test, BandwidthGrid, Dataset, Kernel, ManifoldSpec, PairGeometry,
    PlmFit, SelectionResult, SmootherConfig, WaldTest,
};
use nalgebra::DVector;
use serde::Serialize;

use crate::output::{cell, write_csv, write_json, CliError, SCHEMA_VERSION};
use crate::{BandwidthArgs, CompareArgs, FitArgs, PredictArgs, SelectArgs, SimulateArgs};

const DEFAULT_GRID_SIZE: usize = 30;

/// Parses `LO:HI:COUNT` or `log:LO:HI:COUNT` into raw bandwidth values.
fn parse_grid_values(spec: &str) -> Result<Vec<f64>, CliError> {
    let bad = || CliError::Usage(format!("cannot parse grid '{spec}', expected LO:HI:COUNT"));
    let parts: Vec<&str> = spec.split(':').collect();
    let (log, nums) = match parts.as_slice() {
        ["log", rest @ ..] => (true, rest),
        rest => (false, rest),
    };
    let [lo, hi, count] = nums else {
        return Err(bad());
    };
    let lo: f64 = lo.parse().map_err(|_| bad())?;
    let hi: f64 = hi.parse().map_err(|_| bad())?;
    let count: usize = count.parse().map_err(|_| bad())?;
    Ok(if log {
        logspace_values(lo, hi, count)?
    } else {
        linspace_values(lo, hi, count)?
    })
}

fn grid_for(spec: Option<&str>, geom: &PairGeometry) -> Result<BandwidthGrid, CliError> {
    Ok(match spec {
        Some(s) => BandwidthGrid::clipped(parse_grid_values(s)?, geom.manifold())?,
        None => BandwidthGrid::from_geometry(geom, DEFAULT_GRID_SIZE)?,
    })
}

fn load(path: &Path, manifold: &ManifoldSpec, p: Option<usize>) -> Result<Dataset, CliError> {
    Ok(read_dataset_file(path, manifold, p)?)
}

fn open(path: &Path) -> Result<File, CliError> {
    File::open(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

#[derive(Debug, Serialize)]
struct BandwidthReport {
    method: &'static str,
    selected: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    scores: Option<Vec<BandwidthScore>>,
}

/// Bandwidth from `--bandwidth` or cross-validation over the grid.
fn choose_bandwidth(
    data: &Dataset,
    geom: &PairGeometry,
    bw: &BandwidthArgs,
) -> Result<BandwidthReport, CliError> {
    if let Some(h) = bw.bandwidth {
        SmootherConfig::quadratic(*data.manifold(), h)?;
        return Ok(BandwidthReport {
            method: "fixed",
            selected: h,
            scores: None,
        });
    }
    let grid = grid_for(bw.grid.as_deref(), geom)?;
    let sel = select_cv_with_geometry(data, geom, Kernel::Quadratic, &grid)?;
    Ok(BandwidthReport {
        method: "cross_validation",
        selected: sel.best_h,
        scores: Some(sel.scores),
    })
}

#[derive(Debug, Serialize)]
struct WaldReport {
    beta0: Vec<f64>,
    #[serde(flatten)]
    test: WaldTest,
}

#[derive(Debug, Serialize)]
struct FitReport {
    schema: u32,
    command: &'static str,
    manifold: String,
    n: usize,
    p: usize,
    bandwidth: BandwidthReport,
    beta_hat: Vec<f64>,
    std_errors: Vec<f64>,
    sigma2_eps_hat: f64,
    sigma_hat: Vec<Vec<f64>>,
    g_hat_mean: f64,
    g_hat_sd: f64,
    wald: Option<WaldReport>,
}

fn fit_data(data: &Dataset, bw: &BandwidthArgs) -> Result<(PlmFit, BandwidthReport), CliError> {
    let geom = PairGeometry::within(*data.manifold(), data.t())?;
    let report = choose_bandwidth(data, &geom, bw)?;
    let fit = fit_with_geometry(data, &geom, Kernel::Quadratic, report.selected)?;
    Ok((fit, report))
}

pub fn run_fit(args: &FitArgs) -> Result<(), CliError> {
    let data = load(&args.data.input, &args.data.manifold, args.data.p)?;
    let (fit, bandwidth) = fit_data(&data, &args.bw)?;
    let cfg = SmootherConfig::quadratic(*data.manifold(), fit.bandwidth)?;

    let wald = match &args.beta0 {
        Some(b0) => {
            let beta0 = DVector::from_column_slice(b0);
            Some(WaldReport {
                beta0: b0.clone(),
                test: wald_test(&fit, &beta0, data.n())?,
            })
        }
        None => None,
    };

    if let (Some(q), Some(out)) = (&args.query, &args.g_output) {
        let points = read_points(open(q)?, data.manifold())?;
        let mut header = coord_headers(data.manifold());
        header.push("g_hat".into());
        let mut rows = Vec::with_capacity(points.len());
        for pt in &points {
            let g = match estimate_g(&fit, &data, &cfg, pt) {
                Ok(v) => Some(v),
                Err(e) if e.is_infeasible_bandwidth() => None,
                Err(e) => return Err(e.into()),
            };
            let mut row: Vec<String> = pt.coords().iter().map(|v| format!("{v:?}")).collect();
            row.push(cell(g));
            rows.push(row);
        }
        write_csv(out, &header, &rows)?;
    }

    let g = fit.g_at_sample();
    let n = g.len() as f64;
    let g_mean = g.mean();
    let g_sd = (g.iter().map(|v| (v - g_mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let report = FitReport {
        schema: SCHEMA_VERSION,
        command: "fit",
        manifold: data.manifold().to_string(),
        n: data.n(),
        p: data.p(),
        bandwidth,
        beta_hat: fit.beta_hat.iter().copied().collect(),
        std_errors: fit.standard_errors()?.iter().copied().collect(),
        sigma2_eps_hat: fit.sigma2_eps_hat,
        sigma_hat: fit
            .sigma_hat
            .row_iter()
            .map(|r| r.iter().copied().collect())
            .collect(),
        g_hat_mean: g_mean,
        g_hat_sd: g_sd,
        wald,
    };
    write_json(&args.output, &report)
}

#[derive(Debug, Serialize)]
struct SelectReport {
    schema: u32,
    command: &'static str,
    manifold: String,
    n: usize,
    #[serde(flatten)]
    selection: SelectionResult,
}

pub fn run_select(args: &SelectArgs) -> Result<(), CliError> {
    let data = load(&args.data.input, &args.data.manifold, args.data.p)?;
    let geom = PairGeometry::within(*data.manifold(), data.t())?;
    let grid = grid_for(args.grid.as_deref(), &geom)?;
    let selection = select_cv_with_geometry(&data, &geom, Kernel::Quadratic, &grid)?;
    write_json(
        &args.output,
        &SelectReport {
            schema: SCHEMA_VERSION,
            command: "select",
            manifold: data.manifold().to_string(),
            n: data.n(),
            selection,
        },
    )
}

#[derive(Debug, Serialize)]
struct SimulateReport<'a> {
    schema: u32,
    command: &'static str,
    design: &'a SimDesign,
    reps_requested: usize,
    grid: &'a [f64],
    failed_replications: &'a [usize],
    summary: &'a manifold_plm::McSummary,
}

pub fn run_simulate(args: &SimulateArgs) -> Result<(), CliError> {
    if args.reps < 2 {
        return Err(CliError::Usage(format!(
            "--reps must be at least 2, got {}",
            args.reps
        )));
    }
    let design = SimDesign::new(args.design, args.n, args.beta, args.noise_sd, args.seed)?;
    let grid = match &args.grid {
        Some(s) => BandwidthGrid::clipped(parse_grid_values(s)?, &args.design.manifold())?,
        None => default_grid(args.design),
    };
    let run = monte_carlo_run(&design, args.reps, &grid)?;
    let table_path: PathBuf = args
        .table
        .clone()
        .unwrap_or_else(|| args.output.with_extension("csv"));
    let table = format!("{TABLE_HEADER}\n{}\n", run.summary.table_row());
    crate::output::write_atomic(&table_path, table.as_bytes())?;
    write_json(
        &args.output,
        &SimulateReport {
            schema: SCHEMA_VERSION,
            command: "simulate",
            design: &design,
            reps_requested: args.reps,
            grid: grid.values(),
            failed_replications: &run.failed,
            summary: &run.summary,
        },
    )
}

pub fn run_predict(args: &PredictArgs) -> Result<(), CliError> {
    let data = load(&args.data.input, &args.data.manifold, args.data.p)?;
    let (fit, _) = fit_data(&data, &args.bw)?;
    let cfg = SmootherConfig::quadratic(*data.manifold(), fit.bandwidth)?;
    let (xs, ts) = read_covariates(open(&args.query)?, data.manifold(), data.p())?;

    let mut header: Vec<String> = (1..=data.p()).map(|j| format!("x{j}")).collect();
    header.extend(coord_headers(data.manifold()));
    header.extend(["g_hat".to_owned(), "y_hat".to_owned()]);
    let mut rows = Vec::with_capacity(xs.len());
    for (x, t) in xs.iter().zip(&ts) {
        let g = match estimate_g(&fit, &data, &cfg, t) {
            Ok(v) => Some(v),
            Err(e) if e.is_infeasible_bandwidth() => None,
            Err(e) => return Err(e.into()),
        };
        let linear: f64 = x.iter().zip(fit.beta_hat.iter()).map(|(a, b)| a * b).sum();
        let mut row: Vec<String> = x.iter().map(|v| format!("{v:?}")).collect();
        row.extend(t.coords().iter().map(|v| format!("{v:?}")));
        row.push(cell(g));
        row.push(cell(g.map(|g| g + linear)));
        rows.push(row);
    }
    write_csv(&args.output, &header, &rows)
}

pub fn run_compare(args: &CompareArgs) -> Result<(), CliError> {
    let data = load(&args.data.input, &args.data.manifold, args.data.p)?;
    if data.p() < 2 {
        return Err(CliError::Usage(
            "compare needs at least two linear covariates for the nonparametric competitor".into(),
        ));
    }
    let values = parse_grid_values(&args.grid)?;
    let (train, validate) = split_alternate(&data)?;

    let sv: Vec<Option<f64>> = values
        .iter()
        .map(|&h| {
            let Ok(cfg) = SmootherConfig::quadratic(*data.manifold(), h) else {
                return Ok(None);
            };
            match sv_score(&train, &validate, &cfg) {
                Ok(s) => Ok(Some(s)),
                Err(e) if e.is_infeasible_bandwidth() => Ok(None),
                Err(e) => Err(e),
            }
        })
        .collect::<Result<_, _>>()?;

    let first_two = |d: &Dataset| -> Vec<Vec<f64>> {
        (0..d.n())
            .map(|i| vec![d.x()[(i, 0)], d.x()[(i, 1)]])
            .collect()
    };
    let (tx, vx) = (first_two(&train), first_two(&validate));
    let ep = ep_curve(
        EuclideanSample {
            responses: train.y().as_slice(),
            predictors: &tx,
        },
        EuclideanSample {
            responses: validate.y().as_slice(),
            predictors: &vx,
        },
        Kernel::Quadratic,
        &values,
    )?;

    if sv.iter().all(Option::is_none) && ep.iter().all(|s| !s.feasible()) {
        return Err(manifold_plm::Error::NoFeasibleBandwidth {
            candidates: values.len(),
        }
        .into());
    }
    for (name, empty) in [
        ("partially linear model", sv.iter().all(Option::is_none)),
        ("nonparametric model", ep.iter().all(|s| !s.feasible())),
    ] {
        if empty {
            eprintln!("warning: no feasible bandwidth for the {name}");
        }
    }
    let header = ["h".to_owned(), "sv".to_owned(), "ep".to_owned()];
    let rows: Vec<Vec<String>> = values
        .iter()
        .zip(sv.iter().zip(&ep))
        .map(|(h, (s, e))| vec![format!("{h:?}"), cell(*s), cell(e.score)])
        .collect();
    write_csv(&args.output, &header, &rows)
}
