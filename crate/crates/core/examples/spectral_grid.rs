//! Forward and inverse transforms on the periodic grid, with Parseval.
//!
//! ```text
//! cargo run --example spectral_grid -- 256
//! ```

use num_complex::Complex64;
use sector_hilbert::grid::{forward, inverse, lp_norm, make_grid, GridField, AREA};

fn main() -> sector_hilbert::Result<()> {
    let r = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(256);
    let grid = make_grid(r)?;
    // a bump plus two waves
    let f = GridField::from_fn(&grid, |x, y| {
        let bump = (-(x * x + y * y) * 4.0).exp();
        Complex64::new(bump + (3.0 * x - y).cos(), 0.5 * (5.0 * y).sin())
    });
    let s = forward(&f);
    let norm_sq = lp_norm(&f, 2.0).powi(2);
    println!("R = {r}, band |xi|, |eta| <= {}", grid.band_limit());
    println!("||f||_2^2          = {norm_sq:.15}");
    println!("|Q| sum |c|^2      = {:.15}", AREA * s.energy());
    println!("round trip error   = {:.3e}", inverse(&s).relative_l2_error(&f));
    for (xi, eta) in [(3, -1), (-3, 1), (0, 5), (0, 0)] {
        let c = s.coeff(xi, eta);
        println!("c({xi:>2}, {eta:>2}) = {:+.6} {:+.6}i", c.re, c.im);
    }
    Ok(())
}
