//! Build the extremal tree for `N = 2^m` uniform directions and certify it.
//!
//! ```text
//! cargo run --release --example extremal_construction -- 3 512
//! ```

use std::f64::consts::FRAC_PI_2;

use sector_hilbert::construction::{build, certify, default_kernel, BuildOptions};
use sector_hilbert::grid::make_grid;
use sector_hilbert::spectral::DirectionSet;

fn main() -> sector_hilbert::Result<()> {
    let args: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let m = args.first().copied().unwrap_or(3) as u32;
    let r = args.get(1).copied().unwrap_or(512);
    let n = 1usize << m;
    let angles: Vec<f64> = (1..=n).map(|k| FRAC_PI_2 * k as f64 / (n + 1) as f64).collect();
    let dirs = DirectionSet::from_angles(&angles)?;
    let grid = make_grid(r)?;

    let state = build(&dirs, &grid, &BuildOptions::default(), &default_kernel())?;
    println!("  n  sector     p     q  radius  eps_achieved");
    for node in &state.nodes {
        println!(
            "{:>3}  {:>6}  {:>4}  {:>4}  {:>6}  {:.4}",
            node.index, node.sector, node.p, node.q, node.radius, node.eps_achieved
        );
    }

    let report = certify(&state);
    for row in &report.rows {
        if !row.pass || row.node == 0 {
            println!(
                "{:<15} node {:>2}  value {:<12.6} bound {:<12.6} {}",
                row.check,
                row.node,
                row.value,
                row.bound,
                if row.pass { "ok" } else { "FAIL" }
            );
        }
    }
    println!("sum ||f_n||^2 = {:.4}  (|Q| = {:.4})", report.c1, 4.0 * std::f64::consts::PI.powi(2));
    Ok(())
}
