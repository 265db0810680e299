//! `H_U f` and `T_U f` of an extremal function, for uniform and lacunary
//! direction sets of the same size.
//!
//! ```text
//! cargo run --release --example maximal_operators -- 3 512
//! ```

use sector_hilbert::construction::BuildOptions;
use sector_hilbert::experiment::{evaluate, extremal_function, lacunary_directions, uniform_directions, EvalOptions};
use sector_hilbert::grid::make_grid;

fn main() -> sector_hilbert::Result<()> {
    let args: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let m = args.first().copied().unwrap_or(3) as u32;
    let grid = make_grid(args.get(1).copied().unwrap_or(512))?;
    let opts = EvalOptions::default();
    for (name, dirs) in [("uniform", uniform_directions(1 << m)?), ("lacunary", lacunary_directions(1 << m)?)] {
        match extremal_function(&dirs, &grid, &BuildOptions::default()) {
            Ok((f, state)) => {
                let rec = evaluate(&f, &state, &opts)?;
                println!(
                    "{name:>8}: ratio_T {:.4}, ratio_H_2 {:.4}, dual gap {:.1e}",
                    rec.ratio_t,
                    rec.ratio_h(2.0).unwrap_or(f64::NAN),
                    rec.dual_gap
                );
            }
            Err(e) => println!("{name:>8}: {e}"),
        }
    }
    Ok(())
}
