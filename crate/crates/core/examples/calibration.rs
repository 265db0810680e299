//! Calibrate the level-set constants `(c3, c2)` and the envelope constant `C`.
//!
//! At the calibration point, `c3 sqrt(ln nu)` is the median of `T_U f` and
//! `c2` is half the measure above it. `C` is twice the observed
//! `||H_U f||_2 / (||f||_2 ln N)`.
//!
//! ```text
//! cargo run --release --example calibration -- 4 1024
//! ```

use sector_hilbert::construction::{certify, BuildOptions};
use sector_hilbert::experiment::{evaluate_fields, extremal_function, uniform_directions};
use sector_hilbert::grid::{level_set_measure, lp_norm, make_grid};

fn main() -> sector_hilbert::Result<()> {
    let args: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let m = args.first().copied().unwrap_or(4) as u32;
    let r = args.get(1).copied().unwrap_or(1024);
    let n = 1usize << m;
    let grid = make_grid(r)?;
    let (f, state) = extremal_function(&uniform_directions(n)?, &grid, &BuildOptions::default())?;
    let ev = evaluate_fields(&f, &state)?;

    let mut t: Vec<f64> = ev.t_max.values().to_vec();
    t.sort_by(f64::total_cmp);
    let median = t[t.len() / 2];
    let log_nu = ((n - 1) as f64).ln();
    let c3 = median / log_nu.sqrt();
    let c2 = 0.5 * level_set_measure(&ev.t_max, c3 * log_nu.sqrt());
    let envelope = 2.0 * lp_norm(&ev.h_max, 2.0) / (ev.norm_l2 * (n as f64).ln());
    let report = certify(&state);

    println!("calibration point m = {m}, R = {r}");
    println!("c3 = {c3:.17e}");
    println!("c2 = {c2:.17e}");
    println!("C  = {envelope:.17e}");
    println!("c1 = {:.6}  l1 constant = {:.6}", report.c1, report.l1_constant);
    Ok(())
}
