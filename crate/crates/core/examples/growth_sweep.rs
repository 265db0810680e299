//! Sweep the depth `m` and watch `||T_U f||_1 / ||f||_2` grow.
//!
//! ```text
//! cargo run --release --example growth_sweep -- 2 6 1024
//! ```

use sector_hilbert::construction::BuildOptions;
use sector_hilbert::experiment::{growth_sweep, DirectionKind, EvalOptions, SweepConfig};

fn main() -> sector_hilbert::Result<()> {
    let args: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let cfg = SweepConfig {
        m_min: args.first().copied().unwrap_or(2) as u32,
        m_max: args.get(1).copied().unwrap_or(4) as u32,
        resolution: args.get(2).copied().unwrap_or(512),
        build: BuildOptions::default(),
        directions: DirectionKind::Uniform,
        eval: EvalOptions {
            p_list: vec![1.0, 2.0],
            level_constant: 1.0,
        },
        timing: true,
    };
    let sweep = growth_sweep(&cfg, |rec, t| {
        eprintln!("m = {}: max T_U f = {:.4}", rec.m, t.max());
    })?;
    println!("  m     N  ratio_T  ratio_H1  ratio_H2  /sqrt(ln nu)  dual_gap   wall_ms");
    for row in &sweep.rows {
        match &row.outcome {
            Ok(r) => println!(
                "{:>3} {:>5}  {:>7.4}  {:>8.4}  {:>8.4}  {:>12}  {:>8.1e}  {:>8}",
                r.m,
                r.n_dirs,
                r.ratio_t,
                r.ratio_h(1.0).unwrap_or(f64::NAN),
                r.ratio_h(2.0).unwrap_or(f64::NAN),
                r.ratio_over_sqrtlog.map_or("-".into(), |v| format!("{v:.4}")),
                r.dual_gap,
                r.wall_ms.unwrap_or(0)
            ),
            Err(e) => println!("{:>3} {:>5}  failed: {e}", row.m, row.n_dirs),
        }
    }
    if let Some(s) = sweep.slope() {
        println!("slope of ratio_T^2 against ln nu: {s:.4}");
    }
    Ok(())
}
