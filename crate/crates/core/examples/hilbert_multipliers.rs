//! Directional Hilbert transforms as multipliers, checked against the p.v.
//! quadrature on a band-limited field.
//!
//! ```text
//! cargo run --release --example hilbert_multipliers
//! ```

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sector_hilbert::cli::band_limited;
use sector_hilbert::grid::{make_grid, GridField};
use sector_hilbert::spectral::{directional_hilbert, half_plane_projection, pv_quadrature_hilbert, Direction, PvQuadrature};

fn main() -> sector_hilbert::Result<()> {
    let grid = make_grid(128)?;
    let u = Direction::new(0.3);
    println!("u = ({:.4}, {:.4})", u.vector().0, u.vector().1);

    for (p, q) in [(4, 1), (-4, 1), (1, -3), (0, 0)] {
        let e = GridField::plane_wave(&grid, p, q);
        let h = directional_hilbert(&e, u);
        // ratio at any sample is the multiplier value
        let m = h.values()[17] / e.values()[17];
        println!("H_u e^{{i({p}x + {q}y)}} = ({:+.3} {:+.3}i) e, p.u = {:+.3}", m.re, m.im, u.dot(p, q));
    }

    let f = band_limited(&grid, 16, u, &mut ChaCha8Rng::seed_from_u64(7));
    let h = directional_hilbert(&f, u);
    let oracle = pv_quadrature_hilbert(&f, u, &PvQuadrature::default())?;
    println!("multiplier vs p.v. quadrature: relative L2 gap {:.2e}", h.relative_l2_error(&oracle));

    // T = (I - i H) / 2 is the half-plane projection
    let t = half_plane_projection(&f, u);
    let from_h = &(&f - &(&h * num_complex::Complex64::i())) * num_complex::Complex64::new(0.5, 0.0);
    println!("half-plane projection vs (f - iHf)/2: {:.2e}", t.relative_l2_error(&from_h));
    Ok(())
}
