//! Prints Monte Carlo summaries for the sphere and cylinder designs.
//!
//! cargo run --release -p manifold-plm --example simulation_table -- [reps] [n] [seed]

use manifold_plm::simulation::{default_grid, monte_carlo, DesignKind, SimDesign, TABLE_HEADER};

fn main() -> Result<(), manifold_plm::Error> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let reps = args.first().and_then(|s| s.parse().ok()).unwrap_or(200);
    let n = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(200);
    let seed = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(2024);

    println!("{TABLE_HEADER},mean_h,wald_coverage_95,failed");
    for kind in [DesignKind::Sphere, DesignKind::Cylinder] {
        let design = SimDesign::standard(kind, n, seed)?;
        let s = monte_carlo(&design, reps, &default_grid(kind))?;
        println!(
            "{},{:.4},{:.3},{}",
            s.table_row(),
            s.mean_bandwidth,
            s.wald_coverage_95,
            s.failed
        );
    }
    Ok(())
}
