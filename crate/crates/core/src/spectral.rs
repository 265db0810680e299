//! Fourier multipliers along directions: half-plane and sector projections,
//! the directional Hilbert transform and the maximal operators `H_U`, `T_U`.
//!
//! The directional Hilbert transform is the multiplier `i sign(xi cos t + eta sin t)`
//! with `sign(0) = +1`, i.e. `H_u f = i (2 T_u f - f)` where `T_u` keeps the
//! closed half-plane `{xi cos t + eta sin t >= 0}`.

use std::f64::consts::{FRAC_PI_2, PI};
use std::ops::Deref;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{forward, inverse, GridField, RealField, SpectralField};

/// Relative tolerance deciding that an integer frequency sits on a critical
/// line. Genuine nonzero dot products on desk-scale lattices are many orders
/// of magnitude above it.
const LINE_TOL: f64 = 1e-12;

#[inline]
fn line_tol(xi: i64, eta: i64) -> f64 {
    LINE_TOL * (1.0 + xi.abs() as f64 + eta.abs() as f64)
}

/// Unit vector `u = (cos theta, sin theta)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Direction {
    theta: f64,
    u: (f64, f64),
}

impl Direction {
    pub fn new(theta: f64) -> Self {
        Direction {
            theta,
            u: (theta.cos(), theta.sin()),
        }
    }

    /// Direction of a nonzero vector; the stored unit vector is the
    /// normalized input, not a round trip through the angle.
    pub fn from_vector(x: f64, y: f64) -> Result<Self> {
        let n = x.hypot(y);
        if !(n > 0.0 && n.is_finite()) {
            return Err(Error::param("direction", "zero or non-finite vector"));
        }
        Ok(Direction {
            theta: y.atan2(x),
            u: (x / n, y / n),
        })
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn vector(&self) -> (f64, f64) {
        self.u
    }

    #[inline]
    pub fn dot(&self, xi: i64, eta: i64) -> f64 {
        xi as f64 * self.u.0 + eta as f64 * self.u.1
    }

    /// Membership in the closed half-plane `Gamma_u`.
    #[inline]
    pub fn contains(&self, xi: i64, eta: i64) -> bool {
        self.dot(xi, eta) >= -line_tol(xi, eta)
    }

    /// `true` when the frequency lies on the critical line `xi . u = 0`.
    #[inline]
    pub fn is_critical(&self, xi: i64, eta: i64) -> bool {
        self.dot(xi, eta).abs() <= line_tol(xi, eta)
    }

    /// Multiplier sign with `sign(0) = +1`.
    #[inline]
    pub fn sign(&self, xi: i64, eta: i64) -> f64 {
        if self.contains(xi, eta) {
            1.0
        } else {
            -1.0
        }
    }
}

/// Directions with strictly increasing angles in `(0, pi/2)`.
#[derive(Clone, Debug, PartialEq)]
pub struct DirectionSet {
    dirs: Vec<Direction>,
}

impl DirectionSet {
    pub fn from_angles(angles: &[f64]) -> Result<Self> {
        if angles.is_empty() {
            return Err(Error::InvalidDirections("empty direction set".into()));
        }
        for (k, &t) in angles.iter().enumerate() {
            if !(t > 0.0 && t < FRAC_PI_2) {
                return Err(Error::InvalidDirections(format!(
                    "angle #{} = {t} outside (0, pi/2)",
                    k + 1
                )));
            }
        }
        if let Some(k) = angles.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::InvalidDirections(format!(
                "angles #{} and #{} are not strictly increasing ({} >= {})",
                k + 1,
                k + 2,
                angles[k],
                angles[k + 1]
            )));
        }
        Ok(DirectionSet {
            dirs: angles.iter().map(|&t| Direction::new(t)).collect(),
        })
    }

    pub fn angles(&self) -> Vec<f64> {
        self.dirs.iter().map(Direction::theta).collect()
    }

    /// `m` with `N = 2^m`, when the set size is a power of two.
    pub fn depth(&self) -> Option<u32> {
        let n = self.dirs.len();
        n.is_power_of_two().then(|| n.trailing_zeros())
    }
}

impl Deref for DirectionSet {
    type Target = [Direction];

    fn deref(&self) -> &[Direction] {
        &self.dirs
    }
}

/// Closed frequency sector
/// `{xi >= 0, xi cos a + eta sin a >= 0, xi cos b + eta sin b <= 0}`
/// bounded by the critical lines of two directions `a < b`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Sector {
    lower: Direction,
    upper: Direction,
}

impl Sector {
    pub fn new(lower: Direction, upper: Direction) -> Result<Self> {
        if upper.theta() <= lower.theta() || upper.theta() - lower.theta() >= PI {
            return Err(Error::param(
                "sector",
                format!(
                    "bounding angles {} and {} do not span a proper sector",
                    lower.theta(),
                    upper.theta()
                ),
            ));
        }
        Ok(Sector { lower, upper })
    }

    pub fn lower(&self) -> Direction {
        self.lower
    }

    pub fn upper(&self) -> Direction {
        self.upper
    }

    /// Angular width of the sector.
    pub fn width(&self) -> f64 {
        self.upper.theta() - self.lower.theta()
    }

    /// Unit vector along the bisecting ray of the sector.
    pub fn central_ray(&self) -> (f64, f64) {
        let psi = 0.5 * (self.lower.theta() + self.upper.theta()) - FRAC_PI_2;
        (psi.cos(), psi.sin())
    }

    /// Closed membership; both boundary rays belong to the sector.
    #[inline]
    pub fn contains(&self, xi: i64, eta: i64) -> bool {
        let tol = line_tol(xi, eta);
        xi as f64 >= -tol && self.lower.dot(xi, eta) >= -tol && self.upper.dot(xi, eta) <= tol
    }

    /// Smallest of the three slack values `xi`, `xi . u_lower`, `-xi . u_upper`;
    /// positive exactly on the open sector.
    #[inline]
    pub fn slack(&self, xi: f64, eta: f64) -> f64 {
        let lo = xi * self.lower.u.0 + eta * self.lower.u.1;
        let up = xi * self.upper.u.0 + eta * self.upper.u.1;
        xi.min(lo).min(-up)
    }

    /// The three linear functionals whose positivity defines the open sector.
    pub fn functionals(&self) -> [(f64, f64); 3] {
        [
            (1.0, 0.0),
            self.lower.u,
            (-self.upper.u.0, -self.upper.u.1),
        ]
    }
}

/// Sectors `S_1, ..., S_{N-1}` between the critical lines of consecutive
/// directions. `S_k` lies in the closed half-plane of `u_l` exactly when `k >= l`.
pub fn build_sectors(dirs: &DirectionSet) -> Result<Vec<Sector>> {
    if dirs.len() < 2 {
        return Err(Error::InvalidDirections("need at least two directions".into()));
    }
    dirs.windows(2).map(|w| Sector::new(w[0], w[1])).collect()
}

pub fn hilbert_multiplier(u: Direction) -> impl Fn(i64, i64) -> Complex64 + Sync {
    move |xi, eta| Complex64::new(0.0, u.sign(xi, eta))
}

pub fn half_plane_spectrum(s: &SpectralField, u: Direction) -> SpectralField {
    s.restrict(|xi, eta| u.contains(xi, eta))
}

/// `T_{Gamma_u} f`: keep frequencies with `xi cos t + eta sin t >= 0`.
pub fn half_plane_projection(f: &GridField, u: Direction) -> GridField {
    inverse(&half_plane_spectrum(&forward(f), u))
}

/// `H_u f = i (2 T_{Gamma_u} f - f)`, applied as the multiplier
/// `i sign(xi . u)` with `sign(0) = +1`.
pub fn directional_hilbert(f: &GridField, u: Direction) -> GridField {
    inverse(&forward(f).apply(hilbert_multiplier(u)))
}

pub fn sector_projection(f: &GridField, sector: &Sector) -> GridField {
    inverse(&forward(f).restrict(|xi, eta| sector.contains(xi, eta)))
}

fn pointwise_max(mut a: Vec<f64>, b: Vec<f64>) -> Vec<f64> {
    for (x, y) in a.iter_mut().zip(b) {
        if y > *x {
            *x = y;
        }
    }
    a
}

fn sup_over_directions(
    s: &SpectralField,
    dirs: &[Direction],
    op: impl Fn(&SpectralField, Direction) -> SpectralField + Sync,
) -> RealField {
    let grid = s.grid();
    let values = dirs
        .par_iter()
        .map(|&u| inverse(&op(s, u)).modulus().into_values())
        .reduce(|| vec![0.0; grid.len()], pointwise_max);
    RealField::from_parts(grid, values)
}

/// `H_U f = sup_{u in U} |H_u f|` from a precomputed spectrum.
pub fn maximal_hilbert_spectrum(s: &SpectralField, dirs: &[Direction]) -> RealField {
    sup_over_directions(s, dirs, |s, u| s.apply(hilbert_multiplier(u)))
}

/// `T_U f = sup_{u in U} |T_{Gamma_u} f|` from a precomputed spectrum.
pub fn maximal_halfplane_spectrum(s: &SpectralField, dirs: &[Direction]) -> RealField {
    sup_over_directions(s, dirs, half_plane_spectrum)
}

pub fn maximal_hilbert(f: &GridField, dirs: &[Direction]) -> RealField {
    maximal_hilbert_spectrum(&forward(f), dirs)
}

pub fn maximal_halfplane(f: &GridField, dirs: &[Direction]) -> RealField {
    maximal_halfplane_spectrum(&forward(f), dirs)
}

/// Principal-value quadrature for the directional Hilbert transform, used as
/// an independent check on the multiplier implementation.
///
/// Evaluates `-(1/pi) p.v. int f(x - t u) / t dt` with the odd symmetrization
/// `f(x - tu) - f(x + tu)` on midpoint nodes `t_i = (i + 1/2) h`, `0 < t_i < T`.
/// The integrand is cut off by a `C^inf` taper that is 1 on `[0, T/2]` and
/// falls to 0 at `T`, which keeps the truncation error far below the `1/(sT)`
/// of a sharp cutoff. Off-grid samples come from trigonometric interpolation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PvQuadrature {
    pub truncation: f64,
    pub step: f64,
}

impl Default for PvQuadrature {
    fn default() -> Self {
        PvQuadrature {
            truncation: 64.0 * PI,
            step: 2.0 * PI / 1024.0,
        }
    }
}

fn taper(tau: f64) -> f64 {
    if tau <= 0.5 {
        return 1.0;
    }
    if tau >= 1.0 {
        return 0.0;
    }
    let z = 2.0 * tau - 1.0;
    let a = (-1.0 / z).exp();
    let b = (-1.0 / (1.0 - z)).exp();
    1.0 - a / (a + b)
}

impl PvQuadrature {
    pub fn new(truncation: f64, step: f64) -> Result<Self> {
        let q = PvQuadrature { truncation, step };
        q.nodes()?;
        Ok(q)
    }

    fn nodes(&self) -> Result<usize> {
        if !(self.truncation > 0.0 && self.truncation.is_finite()) {
            return Err(Error::param("truncation", "must be positive"));
        }
        if !(self.step > 0.0 && self.step.is_finite()) {
            return Err(Error::param("step", "must be positive"));
        }
        let n = self.truncation / self.step;
        if (n - n.round()).abs() > 1e-6 * n.max(1.0) {
            return Err(Error::param(
                "step",
                format!("step {} does not divide truncation {}", self.step, self.truncation),
            ));
        }
        Ok(n.round() as usize)
    }

    /// Quadrature weights `w(t_i) h / t_i`.
    fn weights(&self) -> Result<Vec<f64>> {
        let n = self.nodes()?;
        Ok((0..n)
            .map(|i| {
                let t = (i as f64 + 0.5) * self.step;
                taper(t / self.truncation) * self.step / t
            })
            .collect())
    }

    /// Response of the quadrature to `exp(i xi.x)` with `s = xi . u`:
    /// `(2i/pi) sum_i w_i h sin(s t_i) / t_i`, which tends to `i sign(s)`.
    fn response(weights: &[f64], step: f64, s: f64) -> Complex64 {
        let rot = Complex64::from_polar(1.0, s * step);
        let mut z = Complex64::from_polar(1.0, 0.5 * s * step);
        let mut acc = 0.0;
        for (i, &w) in weights.iter().enumerate() {
            acc += w * z.im;
            z *= rot;
            if i % 4096 == 4095 {
                z /= z.norm();
            }
        }
        Complex64::new(0.0, 2.0 * acc / PI)
    }

    pub fn multiplier(&self, s: f64) -> Result<Complex64> {
        Ok(Self::response(&self.weights()?, self.step, s))
    }
}

/// Coefficients below this fraction of the peak are treated as zero by the
/// quadrature oracle; their total contribution is at roundoff level.
const ORACLE_SKIP: f64 = 1e-14;

pub fn pv_quadrature_hilbert(f: &GridField, u: Direction, quad: &PvQuadrature) -> Result<GridField> {
    let weights = quad.weights()?;
    let s = forward(f);
    let cutoff = ORACLE_SKIP * s.max_abs();
    let out = s.apply(|xi, eta| {
        if s.coeff(xi, eta).norm() <= cutoff {
            Complex64::default()
        } else {
            PvQuadrature::response(&weights, quad.step, u.dot(xi, eta))
        }
    });
    Ok(inverse(&out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{lp_norm, Grid};
    use proptest::prelude::*;

    fn cplx(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn direction_is_unit() {
        for k in 0..50 {
            let u = Direction::new(0.37 * k as f64);
            let (a, b) = u.vector();
            assert!((a.hypot(b) - 1.0).abs() < 1e-12);
        }
        let u = Direction::from_vector(0.6, 0.8).unwrap();
        assert_eq!(u.vector(), (0.6, 0.8));
        assert!(Direction::from_vector(0.0, 0.0).is_err());
    }

    #[test]
    fn direction_set_validation() {
        assert!(DirectionSet::from_angles(&[0.1, 0.2, 0.3]).is_ok());
        assert!(DirectionSet::from_angles(&[0.2, 0.2]).is_err());
        assert!(DirectionSet::from_angles(&[0.3, 0.2]).is_err());
        assert!(DirectionSet::from_angles(&[0.0, 0.2]).is_err());
        assert!(DirectionSet::from_angles(&[0.2, FRAC_PI_2]).is_err());
        assert!(DirectionSet::from_angles(&[]).is_err());
        let u = DirectionSet::from_angles(&[0.1, 0.2, 0.3, 0.4]).unwrap();
        assert_eq!(u.depth(), Some(2));
        assert_eq!(DirectionSet::from_angles(&[0.1, 0.2, 0.3]).unwrap().depth(), None);
    }

    #[test]
    fn half_plane_of_cosine() {
        let g = Grid::new(32).unwrap();
        let f = GridField::from_fn(&g, |x, _| cplx(x.cos()));
        let t = half_plane_projection(&f, Direction::new(0.0));
        let expect = GridField::from_fn(&g, |x, _| Complex64::from_polar(0.5, x));
        assert!(t.max_abs_diff(&expect) < 1e-12);
    }

    #[test]
    fn half_plane_keeps_or_kills_single_mode() {
        let g = Grid::new(32).unwrap();
        let f = GridField::plane_wave(&g, 3, 2);
        let inside = Direction::new(0.3);
        assert!(inside.dot(3, 2) > 0.0);
        assert!(half_plane_projection(&f, inside).max_abs_diff(&f) < 1e-12);
        let outside = Direction::new(PI + 0.3);
        assert!(outside.dot(3, 2) < 0.0);
        let z = half_plane_projection(&f, outside);
        assert!(z.values().iter().all(|v| v.norm() < 1e-12));
    }

    #[test]
    fn critical_line_belongs_to_half_plane() {
        let u = Direction::from_vector(0.6, 0.8).unwrap();
        assert!(u.is_critical(4, -3));
        assert!(u.contains(4, -3));
        assert!(u.contains(-4, 3));
        assert_eq!(u.sign(4, -3), 1.0);
        let g = Grid::new(16).unwrap();
        let f = GridField::plane_wave(&g, -4, 3);
        let h = directional_hilbert(&f, u);
        assert!(h.max_abs_diff(&f.scale(Complex64::i())) < 1e-12);
    }

    #[test]
    fn hilbert_of_cos_and_sin() {
        let g = Grid::new(64).unwrap();
        let u = Direction::new(0.0);
        let c = GridField::from_fn(&g, |x, _| cplx(x.cos()));
        let s = GridField::from_fn(&g, |x, _| cplx(x.sin()));
        let neg_s = s.scale(cplx(-1.0));
        assert!(directional_hilbert(&c, u).max_abs_diff(&neg_s) < 1e-12);
        assert!(directional_hilbert(&s, u).max_abs_diff(&c) < 1e-12);
    }

    #[test]
    fn hilbert_matches_projection_identity() {
        let g = Grid::new(32).unwrap();
        let f = GridField::from_fn(&g, |x, y| Complex64::new((2.0 * x - y).sin() + 0.3, (x + 3.0 * y).cos()));
        let u = Direction::new(1.1);
        let via_projection = (&half_plane_projection(&f, u).scale(cplx(2.0)) - &f).scale(Complex64::i());
        assert!(directional_hilbert(&f, u).max_abs_diff(&via_projection) < 1e-12);
    }

    #[test]
    fn pv_oracle_on_cosine() {
        let g = Grid::new(64).unwrap();
        let f = GridField::from_fn(&g, |x, _| cplx(x.cos()));
        let expect = GridField::from_fn(&g, |x, _| cplx(-x.sin()));
        let got = pv_quadrature_hilbert(&f, Direction::new(0.0), &PvQuadrature::default()).unwrap();
        assert!(got.relative_l2_error(&expect) < 1e-3);
    }

    #[test]
    fn pv_oracle_rational_direction() {
        let g = Grid::new(32).unwrap();
        let u = Direction::from_vector(0.6, 0.8).unwrap();
        let f = GridField::plane_wave(&g, 4, 3);
        let got = pv_quadrature_hilbert(&f, u, &PvQuadrature::default()).unwrap();
        assert!(got.relative_l2_error(&f.scale(Complex64::i())) < 1e-3);
    }

    #[test]
    fn pv_oracle_of_zero_is_zero() {
        let g = Grid::new(16).unwrap();
        let z = GridField::zeros(&g);
        let got = pv_quadrature_hilbert(&z, Direction::new(0.4), &PvQuadrature::default()).unwrap();
        assert_eq!(got, z);
    }

    #[test]
    fn pv_oracle_rejects_bad_parameters() {
        assert!(PvQuadrature::new(0.0, 0.1).is_err());
        assert!(PvQuadrature::new(1.0, -0.1).is_err());
        assert!(PvQuadrature::new(1.0, 0.3).is_err());
        assert!(PvQuadrature::new(1.2, 0.3).is_ok());
    }

    #[test]
    fn sector_projection_examples() {
        let g = Grid::new(64).unwrap();
        let sector = Sector::new(Direction::new(PI / 6.0), Direction::new(PI / 3.0)).unwrap();
        // (10, -10) lies on the central ray at -45 degrees
        assert!(sector.contains(10, -10));
        assert!(!sector.contains(10, 10));
        let inside = GridField::plane_wave(&g, 10, -10);
        let outside = GridField::plane_wave(&g, 3, 5);
        assert!(sector_projection(&inside, &sector).max_abs_diff(&inside) < 1e-12);
        let z = sector_projection(&outside, &sector);
        assert!(z.values().iter().all(|v| v.norm() < 1e-12));
        let both = &inside + &outside;
        assert!(sector_projection(&both, &sector).max_abs_diff(&inside) < 1e-12);
    }

    #[test]
    fn sector_boundaries_are_closed() {
        let sector = Sector::new(Direction::from_vector(0.6, 0.8).unwrap(), Direction::new(1.2)).unwrap();
        // on the lower critical line
        assert!(sector.contains(4, -3));
        assert!(sector.slack(4.0, -3.0).abs() < 1e-12);
        assert!(Sector::new(Direction::new(0.5), Direction::new(0.4)).is_err());
    }

    #[test]
    fn sectors_from_directions() {
        let dirs = DirectionSet::from_angles(&[PI / 6.0, PI / 3.0]).unwrap();
        let s = build_sectors(&dirs).unwrap();
        assert_eq!(s.len(), 1);
        assert!((s[0].width() - PI / 6.0).abs() < 1e-15);
        assert!(build_sectors(&DirectionSet::from_angles(&[0.3]).unwrap()).is_err());
    }

    #[test]
    fn sector_nesting_in_half_planes() {
        let n = 8;
        let angles: Vec<f64> = (1..=n).map(|k| FRAC_PI_2 * k as f64 / (n + 1) as f64).collect();
        let dirs = DirectionSet::from_angles(&angles).unwrap();
        let sectors = build_sectors(&dirs).unwrap();
        for (k, s) in sectors.iter().enumerate() {
            let (cx, cy) = s.central_ray();
            for (l, u) in dirs.iter().enumerate() {
                let inside = u.dot(0, 0) + cx * u.vector().0 + cy * u.vector().1 > 0.0;
                assert_eq!(inside, k >= l, "sector {} direction {}", k + 1, l + 1);
            }
        }
        // strict interiors are disjoint on the lattice
        for p in 0..40i64 {
            for q in -40..=40i64 {
                let hits = sectors.iter().filter(|s| s.slack(p as f64, q as f64) > 0.0).count();
                assert!(hits <= 1);
            }
        }
    }

    #[test]
    fn maximal_operators_examples() {
        let g = Grid::new(32).unwrap();
        let f = GridField::from_fn(&g, |x, _| cplx(x.cos()));
        let u = [Direction::new(0.0)];
        let h = maximal_hilbert(&f, &u);
        let expect = RealField::from_fn(&g, |x, _| x.sin().abs());
        assert!(h.values().iter().zip(expect.values()).all(|(a, b)| (a - b).abs() < 1e-12));
        let z = GridField::zeros(&g);
        assert!(maximal_hilbert(&z, &u).values().iter().all(|&v| v == 0.0));
        assert!(maximal_halfplane(&z, &u).values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn maximal_dominates_each_direction() {
        let g = Grid::new(32).unwrap();
        let f = GridField::from_fn(&g, |x, y| Complex64::new((x - 2.0 * y).cos() + (3.0 * x).sin(), y.sin()));
        let dirs = DirectionSet::from_angles(&[0.2, 0.7, 1.3]).unwrap();
        let h = maximal_hilbert(&f, &dirs);
        let t = maximal_halfplane(&f, &dirs);
        for &u in dirs.iter() {
            let hu = directional_hilbert(&f, u);
            let tu = half_plane_projection(&f, u);
            for i in 0..g.len() {
                assert!(h.values()[i] >= hu.values()[i].norm() - 1e-12);
                assert!(t.values()[i] >= tu.values()[i].norm() - 1e-12);
                // |T_u f| = |H_u f / (2i) + f / 2|
                let rebuilt = hu.values()[i] / Complex64::new(0.0, 2.0) + f.values()[i] / 2.0;
                assert!((rebuilt.norm() - tu.values()[i].norm()).abs() < 1e-12);
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn plane_wave_eigenrelation(p in -15i64..16, q in -15i64..16, theta in 0.0..(2.0 * PI)) {
            let g = Grid::new(32).unwrap();
            let u = Direction::new(theta);
            let f = GridField::plane_wave(&g, p, q);
            let h = directional_hilbert(&f, u);
            let expect = f.scale(Complex64::new(0.0, u.sign(p, q)));
            prop_assert!(h.max_abs_diff(&expect) <= 1e-10);
        }

        #[test]
        fn hilbert_is_isometric_involution_off_critical_lines(seed in any::<u64>(), theta in 0.0..(2.0 * PI)) {
            let g = Grid::new(16).unwrap();
            let u = Direction::new(theta);
            let spec = SpectralField::zeros(&g).apply(|xi, eta| {
                if u.is_critical(xi, eta) { Complex64::default() } else { Complex64::new(rng_value(seed, xi, eta), 0.0) }
            });
            let f = inverse(&spec);
            let h = directional_hilbert(&f, u);
            let hh = directional_hilbert(&h, u);
            prop_assert!(hh.max_abs_diff(&f.scale(cplx(-1.0))) <= 1e-10);
            let (a, b) = (lp_norm(&h, 2.0), lp_norm(&f, 2.0));
            prop_assert!((a - b).abs() <= 1e-10 * b.max(1.0));
        }
    }

    fn rng_value(seed: u64, xi: i64, eta: i64) -> f64 {
        // cheap deterministic hash in [-1, 1)
        let mut h = seed ^ (xi as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (eta as u64).wrapping_mul(0xC2B2_AE3D_27D4_EB4F);
        h ^= h >> 33;
        h = h.wrapping_mul(0xFF51_AFD7_ED55_8CCD);
        h ^= h >> 33;
        (h >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
    }
}
