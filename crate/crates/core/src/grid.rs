//! Sampled functions on the periodic square `Q = [-pi, pi]^2`.
//!
//! A [`Grid`] of resolution `R` samples `Q` at the points
//! `(-pi + 2 pi a / R, -pi + 2 pi b / R)` for `0 <= a, b < R`. Fields are
//! stored row-major with the `x` index `a` as the slow axis.
//!
//! Fourier coefficients use integer frequencies `(xi, eta)` in
//! `[-R/2, R/2)^2` and the synthesis convention
//!
//! ```text
//! f(x, y) = sum c(xi, eta) exp(i (xi x + eta y))
//! ```
//!
//! so [`forward`] carries the `1 / R^2` normalization and
//! `||f||_2^2 = |Q| * sum |c|^2` (Parseval with Riemann-sum norms).

use std::f64::consts::PI;
use std::fmt;
use std::ops::{Add, Mul, Sub};
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

/// Area of `Q`.
pub const AREA: f64 = 4.0 * PI * PI;

/// Uniform periodic grid over `Q`. Cheap to clone; FFT plans and the table of
/// roots of unity are shared.
#[derive(Clone)]
pub struct Grid {
    resolution: usize,
    fft: Arc<dyn Fft<f64>>,
    ifft: Arc<dyn Fft<f64>>,
    roots: Arc<[Complex64]>,
}

impl fmt::Debug for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Grid")
            .field("resolution", &self.resolution)
            .finish()
    }
}

impl PartialEq for Grid {
    fn eq(&self, other: &Self) -> bool {
        self.resolution == other.resolution
    }
}

impl Eq for Grid {}

impl Grid {
    pub fn new(resolution: usize) -> Result<Self> {
        if resolution < 8 || !resolution.is_power_of_two() {
            return Err(Error::InvalidResolution(resolution));
        }
        let mut planner = FftPlanner::new();
        let fft = planner.plan_fft_forward(resolution);
        let ifft = planner.plan_fft_inverse(resolution);
        let roots = (0..resolution)
            .map(|k| Complex64::from_polar(1.0, 2.0 * PI * k as f64 / resolution as f64))
            .collect();
        Ok(Grid {
            resolution,
            fft,
            ifft,
            roots,
        })
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    /// Number of samples, `R^2`.
    pub fn len(&self) -> usize {
        self.resolution * self.resolution
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn cell_area(&self) -> f64 {
        let h = 2.0 * PI / self.resolution as f64;
        h * h
    }

    pub fn coord(&self, i: usize) -> f64 {
        -PI + 2.0 * PI * i as f64 / self.resolution as f64
    }

    pub fn point(&self, index: usize) -> (f64, f64) {
        let (a, b) = self.split(index);
        (self.coord(a), self.coord(b))
    }

    #[inline]
    pub fn split(&self, index: usize) -> (usize, usize) {
        (index / self.resolution, index % self.resolution)
    }

    /// Integer frequency of DFT bin `k`, in `[-R/2, R/2)`.
    #[inline]
    pub fn frequency(&self, k: usize) -> i64 {
        let r = self.resolution as i64;
        let k = k as i64;
        if k < r / 2 {
            k
        } else {
            k - r
        }
    }

    /// DFT bin of an integer frequency, or `None` outside `[-R/2, R/2)`.
    #[inline]
    pub fn bin(&self, freq: i64) -> Option<usize> {
        let r = self.resolution as i64;
        if freq < -r / 2 || freq >= r / 2 {
            None
        } else {
            Some(freq.rem_euclid(r) as usize)
        }
    }

    /// Largest frequency magnitude representable without aliasing ambiguity.
    pub fn band_limit(&self) -> i64 {
        self.resolution as i64 / 2 - 1
    }

    /// Residue `(p a + q b) mod R`. Up to the sign `(-1)^(p+q)`,
    /// `exp(i (p x + q y))` at sample `(a, b)` is the root of unity `root(k)`.
    #[inline]
    pub fn phase_index(&self, p: i64, q: i64, a: usize, b: usize) -> usize {
        (p * a as i64 + q * b as i64).rem_euclid(self.resolution as i64) as usize
    }

    /// `exp(2 pi i k / R)`.
    #[inline]
    pub fn root(&self, k: usize) -> Complex64 {
        self.roots[k % self.resolution]
    }

    /// `exp(i (p x + q y))` at sample `(a, b)`, with the phase reduced in
    /// integer arithmetic so large frequencies lose no accuracy.
    #[inline]
    pub fn plane_wave_at(&self, p: i64, q: i64, a: usize, b: usize) -> Complex64 {
        let z = self.roots[self.phase_index(p, q, a, b)];
        if (p + q).rem_euclid(2) == 1 {
            -z
        } else {
            z
        }
    }

    /// `cos(p x + q y)` at every sample.
    pub fn cosine(&self, p: i64, q: i64) -> RealField {
        let r = self.resolution;
        let values = (0..self.len())
            .map(|i| self.plane_wave_at(p, q, i / r, i % r).re)
            .collect();
        RealField {
            grid: self.clone(),
            values,
        }
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len != self.len() {
            return Err(Error::LengthMismatch {
                resolution: self.resolution,
                expected: self.len(),
                actual: len,
            });
        }
        Ok(())
    }

    fn check_same(&self, other: &Grid) -> Result<()> {
        if self != other {
            return Err(Error::GridMismatch {
                left: self.resolution,
                right: other.resolution,
            });
        }
        Ok(())
    }

    /// In-place unnormalized 2D DFT (`inverse` selects the `+i` kernel).
    fn fft2(&self, data: &mut [Complex64], inverse: bool) {
        let r = self.resolution;
        let plan = if inverse { &self.ifft } else { &self.fft };
        let run_rows = |buf: &mut [Complex64]| {
            buf.par_chunks_mut(r * 64.min(r)).for_each(|block| {
                let mut scratch = vec![Complex64::default(); plan.get_inplace_scratch_len()];
                for row in block.chunks_mut(r) {
                    plan.process_with_scratch(row, &mut scratch);
                }
            });
        };
        run_rows(data);
        let mut t = vec![Complex64::default(); data.len()];
        transpose(data, &mut t, r);
        run_rows(&mut t);
        transpose(&t, data, r);
    }
}

fn transpose(src: &[Complex64], dst: &mut [Complex64], r: usize) {
    const TILE: usize = 32;
    for a0 in (0..r).step_by(TILE) {
        for b0 in (0..r).step_by(TILE) {
            for a in a0..(a0 + TILE).min(r) {
                for b in b0..(b0 + TILE).min(r) {
                    dst[b * r + a] = src[a * r + b];
                }
            }
        }
    }
}

pub fn make_grid(resolution: usize) -> Result<Grid> {
    Grid::new(resolution)
}

/// Common read access for sampled fields, used by norms and level sets.
pub trait Samples {
    fn grid(&self) -> &Grid;
    fn moduli(&self) -> impl Iterator<Item = f64> + '_;
}

/// Complex samples on a [`Grid`].
#[derive(Clone, Debug, PartialEq)]
pub struct GridField {
    grid: Grid,
    values: Vec<Complex64>,
}

impl GridField {
    pub fn new(grid: &Grid, values: Vec<Complex64>) -> Result<Self> {
        grid.check_len(values.len())?;
        if let Some(i) = values.iter().position(|v| !(v.re.is_finite() && v.im.is_finite())) {
            return Err(Error::NonFinite(i));
        }
        Ok(GridField {
            grid: grid.clone(),
            values,
        })
    }

    pub fn zeros(grid: &Grid) -> Self {
        GridField {
            grid: grid.clone(),
            values: vec![Complex64::default(); grid.len()],
        }
    }

    /// Sample `f(x, y)` at every grid point.
    pub fn from_fn(grid: &Grid, f: impl Fn(f64, f64) -> Complex64) -> Self {
        let values = (0..grid.len())
            .map(|i| {
                let (x, y) = grid.point(i);
                f(x, y)
            })
            .collect();
        GridField {
            grid: grid.clone(),
            values,
        }
    }

    /// Samples of `exp(i (p x + q y))`.
    pub fn plane_wave(grid: &Grid, p: i64, q: i64) -> Self {
        let r = grid.resolution();
        let values = (0..grid.len())
            .map(|i| grid.plane_wave_at(p, q, i / r, i % r))
            .collect();
        GridField {
            grid: grid.clone(),
            values,
        }
    }

    pub(crate) fn from_parts(grid: &Grid, values: Vec<Complex64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        GridField {
            grid: grid.clone(),
            values,
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }

    pub fn map(&self, f: impl Fn(Complex64) -> Complex64) -> Self {
        GridField {
            grid: self.grid.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn scale(&self, c: Complex64) -> Self {
        self.map(|v| v * c)
    }

    pub fn re(&self) -> RealField {
        RealField {
            grid: self.grid.clone(),
            values: self.values.iter().map(|v| v.re).collect(),
        }
    }

    pub fn modulus(&self) -> RealField {
        RealField {
            grid: self.grid.clone(),
            values: self.values.iter().map(|v| v.norm()).collect(),
        }
    }

    pub fn add_assign(&mut self, other: &GridField) -> Result<()> {
        self.grid.check_same(&other.grid)?;
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += b;
        }
        Ok(())
    }

    /// `||self - other||_2 / ||other||_2`, or the absolute gap when `other` is 0.
    pub fn relative_l2_error(&self, reference: &GridField) -> f64 {
        assert_eq!(self.grid, reference.grid, "fields on different grids");
        let (num, den) = self
            .values
            .iter()
            .zip(&reference.values)
            .fold((0.0, 0.0), |(n, d), (a, b)| (n + (a - b).norm_sqr(), d + b.norm_sqr()));
        if den == 0.0 {
            num.sqrt()
        } else {
            (num / den).sqrt()
        }
    }

    pub fn max_abs_diff(&self, other: &GridField) -> f64 {
        assert_eq!(self.grid, other.grid, "fields on different grids");
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    pub fn forward(&self) -> SpectralField {
        forward(self)
    }
}

impl Samples for GridField {
    fn grid(&self) -> &Grid {
        &self.grid
    }

    fn moduli(&self) -> impl Iterator<Item = f64> + '_ {
        self.values.iter().map(|v| v.norm())
    }
}

impl Add for &GridField {
    type Output = GridField;

    fn add(self, rhs: &GridField) -> GridField {
        assert_eq!(self.grid, rhs.grid, "fields on different grids");
        GridField {
            grid: self.grid.clone(),
            values: self.values.iter().zip(&rhs.values).map(|(a, b)| a + b).collect(),
        }
    }
}

impl Sub for &GridField {
    type Output = GridField;

    fn sub(self, rhs: &GridField) -> GridField {
        assert_eq!(self.grid, rhs.grid, "fields on different grids");
        GridField {
            grid: self.grid.clone(),
            values: self.values.iter().zip(&rhs.values).map(|(a, b)| a - b).collect(),
        }
    }
}

impl Mul<Complex64> for &GridField {
    type Output = GridField;

    fn mul(self, rhs: Complex64) -> GridField {
        self.scale(rhs)
    }
}

/// Real samples on a [`Grid`].
#[derive(Clone, Debug, PartialEq)]
pub struct RealField {
    grid: Grid,
    values: Vec<f64>,
}

impl RealField {
    pub fn new(grid: &Grid, values: Vec<f64>) -> Result<Self> {
        grid.check_len(values.len())?;
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        Ok(RealField {
            grid: grid.clone(),
            values,
        })
    }

    pub fn zeros(grid: &Grid) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn constant(grid: &Grid, c: f64) -> Self {
        RealField {
            grid: grid.clone(),
            values: vec![c; grid.len()],
        }
    }

    pub fn from_fn(grid: &Grid, f: impl Fn(f64, f64) -> f64) -> Self {
        let values = (0..grid.len())
            .map(|i| {
                let (x, y) = grid.point(i);
                f(x, y)
            })
            .collect();
        RealField {
            grid: grid.clone(),
            values,
        }
    }

    pub(crate) fn from_parts(grid: &Grid, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        RealField {
            grid: grid.clone(),
            values,
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        RealField {
            grid: self.grid.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn to_complex(&self) -> GridField {
        GridField {
            grid: self.grid.clone(),
            values: self.values.iter().map(|&v| Complex64::new(v, 0.0)).collect(),
        }
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Riemann sum of the samples over `Q`.
    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.cell_area()
    }
}

impl Samples for RealField {
    fn grid(&self) -> &Grid {
        &self.grid
    }

    fn moduli(&self) -> impl Iterator<Item = f64> + '_ {
        self.values.iter().map(|v| v.abs())
    }
}

/// Boolean sample mask, the discrete stand-in for a measurable subset of `Q`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Mask {
    grid: Grid,
    bits: Vec<bool>,
}

impl Mask {
    pub fn new(grid: &Grid, bits: Vec<bool>) -> Result<Self> {
        grid.check_len(bits.len())?;
        Ok(Mask {
            grid: grid.clone(),
            bits,
        })
    }

    pub fn full(grid: &Grid) -> Self {
        Mask {
            grid: grid.clone(),
            bits: vec![true; grid.len()],
        }
    }

    pub fn from_fn(grid: &Grid, f: impl Fn(f64, f64) -> bool) -> Self {
        let bits = (0..grid.len())
            .map(|i| {
                let (x, y) = grid.point(i);
                f(x, y)
            })
            .collect();
        Mask {
            grid: grid.clone(),
            bits,
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn measure(&self) -> f64 {
        self.count() as f64 * self.grid.cell_area()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    pub fn indicator(&self) -> RealField {
        RealField {
            grid: self.grid.clone(),
            values: self.bits.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect(),
        }
    }
}

/// Fourier coefficients of a [`GridField`], stored in DFT bin order.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralField {
    grid: Grid,
    coeffs: Vec<Complex64>,
}

impl SpectralField {
    pub fn zeros(grid: &Grid) -> Self {
        SpectralField {
            grid: grid.clone(),
            coeffs: vec![Complex64::default(); grid.len()],
        }
    }

    /// Spectrum with coefficient `c(xi, eta)` at every representable frequency.
    pub fn from_fn(grid: &Grid, c: impl Fn(i64, i64) -> Complex64) -> Self {
        let mut s = Self::zeros(grid);
        for (i, v) in s.coeffs.iter_mut().enumerate() {
            let (kx, ky) = grid.split(i);
            *v = c(grid.frequency(kx), grid.frequency(ky));
        }
        s
    }

    /// Spectrum with a single nonzero coefficient.
    pub fn mode(grid: &Grid, xi: i64, eta: i64, c: Complex64) -> Result<Self> {
        let mut s = Self::zeros(grid);
        let idx = s.index(xi, eta).ok_or_else(|| {
            Error::param("frequency", format!("({xi}, {eta}) outside [-R/2, R/2)^2"))
        })?;
        s.coeffs[idx] = c;
        Ok(s)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// Raw coefficients in DFT bin order (`bin(xi) * R + bin(eta)`).
    pub fn raw(&self) -> &[Complex64] {
        &self.coeffs
    }

    fn index(&self, xi: i64, eta: i64) -> Option<usize> {
        let r = self.grid.resolution();
        Some(self.grid.bin(xi)? * r + self.grid.bin(eta)?)
    }

    /// Coefficient at `(xi, eta)`; zero outside the representable band.
    pub fn coeff(&self, xi: i64, eta: i64) -> Complex64 {
        self.index(xi, eta)
            .map(|i| self.coeffs[i])
            .unwrap_or_default()
    }

    #[inline]
    pub fn frequency_of(&self, index: usize) -> (i64, i64) {
        let (kx, ky) = self.grid.split(index);
        (self.grid.frequency(kx), self.grid.frequency(ky))
    }

    pub fn iter(&self) -> impl Iterator<Item = (i64, i64, Complex64)> + '_ {
        self.coeffs.iter().enumerate().map(|(i, &c)| {
            let (xi, eta) = self.frequency_of(i);
            (xi, eta, c)
        })
    }

    /// Multiply every coefficient by `m(xi, eta)`.
    pub fn apply(&self, m: impl Fn(i64, i64) -> Complex64 + Sync) -> Self {
        let coeffs = self
            .coeffs
            .par_iter()
            .enumerate()
            .map(|(i, &c)| {
                let (xi, eta) = self.frequency_of(i);
                c * m(xi, eta)
            })
            .collect();
        SpectralField {
            grid: self.grid.clone(),
            coeffs,
        }
    }

    /// Keep coefficients where `keep(xi, eta)` holds, zero the rest.
    pub fn restrict(&self, keep: impl Fn(i64, i64) -> bool + Sync) -> Self {
        let coeffs = self
            .coeffs
            .par_iter()
            .enumerate()
            .map(|(i, &c)| {
                let (xi, eta) = self.frequency_of(i);
                if keep(xi, eta) {
                    c
                } else {
                    Complex64::default()
                }
            })
            .collect();
        SpectralField {
            grid: self.grid.clone(),
            coeffs,
        }
    }

    /// `sum |c|^2`; equals `||f||_2^2 / |Q|` for the synthesized field.
    pub fn energy(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm_sqr()).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }

    /// Frequencies whose coefficient modulus exceeds `rel_tol * max |c|`.
    pub fn occupied(&self, rel_tol: f64) -> Vec<(i64, i64)> {
        let peak = self.max_abs();
        if peak == 0.0 {
            return Vec::new();
        }
        self.iter()
            .filter(|&(_, _, c)| c.norm() > rel_tol * peak)
            .map(|(xi, eta, _)| (xi, eta))
            .collect()
    }

    pub fn inverse(&self) -> GridField {
        inverse(self)
    }
}

#[inline]
fn checkerboard(grid: &Grid, index: usize) -> bool {
    let (a, b) = grid.split(index);
    (a + b) % 2 == 1
}

/// Fourier coefficients under the `exp(+i(xi x + eta y))` synthesis convention.
pub fn forward(f: &GridField) -> SpectralField {
    let grid = f.grid();
    let mut data = f.values().to_vec();
    grid.fft2(&mut data, false);
    let norm = 1.0 / grid.len() as f64;
    // sample origin at -pi contributes (-1)^(xi + eta)
    data.par_iter_mut().enumerate().for_each(|(i, c)| {
        let s = if checkerboard(grid, i) { -norm } else { norm };
        *c *= s;
    });
    SpectralField {
        grid: grid.clone(),
        coeffs: data,
    }
}

pub fn inverse(s: &SpectralField) -> GridField {
    let grid = s.grid();
    let mut data: Vec<Complex64> = s
        .coeffs
        .par_iter()
        .enumerate()
        .map(|(i, &c)| if checkerboard(grid, i) { -c } else { c })
        .collect();
    grid.fft2(&mut data, true);
    GridField::from_parts(grid, data)
}

/// `(sum |f|^p * cell_area)^(1/p)`.
///
/// Panics unless `p` is finite and at least 1.
pub fn lp_norm<F: Samples>(f: &F, p: f64) -> f64 {
    assert!(p.is_finite() && p >= 1.0, "lp_norm needs 1 <= p < inf, got {p}");
    let cell = f.grid().cell_area();
    let sum: f64 = if p == 1.0 {
        f.moduli().sum()
    } else if p == 2.0 {
        f.moduli().map(|v| v * v).sum()
    } else {
        f.moduli().map(|v| v.powf(p)).sum()
    };
    (sum * cell).powf(1.0 / p)
}

/// Measure of `{|f| > lambda}`: `cell_area` times the number of such samples.
pub fn level_set_measure<F: Samples>(f: &F, lambda: f64) -> f64 {
    let count = f.moduli().filter(|&v| v > lambda).count();
    count as f64 * f.grid().cell_area()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn grid(r: usize) -> Grid {
        Grid::new(r).unwrap()
    }

    fn random_field(g: &Grid, seed: u64) -> GridField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values = (0..g.len())
            .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        GridField::new(g, values).unwrap()
    }

    #[test]
    fn make_grid_examples() {
        let g = make_grid(8).unwrap();
        assert_eq!(g.len(), 64);
        assert_relative_eq!(g.cell_area(), (PI / 4.0).powi(2), epsilon = 1e-15);
        assert!(matches!(make_grid(7), Err(Error::InvalidResolution(7))));
        assert!(make_grid(4).is_err());
        assert!(make_grid(48).is_err());
        assert_eq!(make_grid(1024).unwrap().len(), 1 << 20);
    }

    #[test]
    fn sample_map() {
        let g = grid(8);
        assert_eq!(g.point(0), (-PI, -PI));
        let (x, y) = g.point(3 * 8 + 5);
        assert_relative_eq!(x, -PI + 2.0 * PI * 3.0 / 8.0);
        assert_relative_eq!(y, -PI + 2.0 * PI * 5.0 / 8.0);
    }

    #[test]
    fn frequency_bins_round_trip() {
        let g = grid(16);
        for k in 0..16 {
            assert_eq!(g.bin(g.frequency(k)), Some(k));
        }
        assert_eq!(g.frequency(8), -8);
        assert_eq!(g.bin(8), None);
        assert_eq!(g.bin(-9), None);
    }

    #[test]
    fn plane_wave_matches_direct_evaluation() {
        let g = grid(32);
        let w = GridField::plane_wave(&g, 700, -13);
        let direct = GridField::from_fn(&g, |x, y| Complex64::from_polar(1.0, 700.0 * x - 13.0 * y));
        assert!(w.max_abs_diff(&direct) < 1e-11);
    }

    #[test]
    fn constant_has_only_mean() {
        let g = grid(16);
        let s = forward(&GridField::from_fn(&g, |_, _| Complex64::new(1.0, 0.0)));
        assert_relative_eq!(s.coeff(0, 0).re, 1.0, epsilon = 1e-14);
        let rest: f64 = s.iter().filter(|&(a, b, _)| (a, b) != (0, 0)).map(|(_, _, c)| c.norm()).sum();
        assert!(rest < 1e-13);
    }

    #[test]
    fn pure_mode_lands_on_its_frequency() {
        let g = grid(32);
        let f = GridField::from_fn(&g, |x, y| Complex64::from_polar(1.0, 3.0 * x + 2.0 * y));
        let s = forward(&f);
        for (xi, eta, c) in s.iter() {
            let expect = if (xi, eta) == (3, 2) { 1.0 } else { 0.0 };
            assert!((c - expect).norm() <= 1e-10, "({xi},{eta}) -> {c}");
        }
    }

    #[test]
    fn cosine_splits_into_two_modes() {
        let g = grid(16);
        let f = GridField::from_fn(&g, |x, _| Complex64::new(2.0 * x.cos(), 0.0));
        let s = forward(&f);
        assert_relative_eq!(s.coeff(1, 0).re, 1.0, epsilon = 1e-12);
        assert_relative_eq!(s.coeff(-1, 0).re, 1.0, epsilon = 1e-12);
        assert!(s.coeff(0, 0).norm() < 1e-12);
    }

    #[test]
    fn inverse_examples() {
        let g = grid(16);
        assert_eq!(inverse(&SpectralField::zeros(&g)), GridField::zeros(&g));
        let wave = inverse(&SpectralField::mode(&g, 1, 1, Complex64::new(1.0, 0.0)).unwrap());
        let direct = GridField::from_fn(&g, |x, y| Complex64::from_polar(1.0, x + y));
        assert!(wave.max_abs_diff(&direct) < 1e-12);
        assert!(SpectralField::mode(&g, 8, 0, Complex64::new(1.0, 0.0)).is_err());
    }

    #[test]
    fn round_trip_random() {
        let g = grid(64);
        let f = random_field(&g, 7);
        assert!(inverse(&forward(&f)).relative_l2_error(&f) < 1e-12);
    }

    #[test]
    fn lp_norm_examples() {
        let g = grid(32);
        let one = RealField::constant(&g, 1.0);
        assert_relative_eq!(lp_norm(&one, 2.0), 2.0 * PI, epsilon = 1e-12);
        assert_relative_eq!(lp_norm(&one, 1.0), AREA, epsilon = 1e-12);
        let wave = GridField::plane_wave(&g, 1, 0);
        assert_relative_eq!(lp_norm(&wave, 2.0), 2.0 * PI, epsilon = 1e-12);
    }

    #[test]
    #[should_panic]
    fn lp_norm_rejects_small_p() {
        lp_norm(&RealField::zeros(&grid(8)), 0.5);
    }

    #[test]
    fn level_set_examples() {
        let g = grid(64);
        let one = RealField::constant(&g, 1.0);
        assert_relative_eq!(level_set_measure(&one, 0.5), AREA, epsilon = 1e-12);
        assert_eq!(level_set_measure(&one, 2.0), 0.0);
        // columns a < R/2 have x < 0: R/2 full columns of R cells
        let left = Mask::from_fn(&g, |x, _| x < 0.0).indicator();
        let m = level_set_measure(&left, 0.5);
        assert!((m - 2.0 * PI * PI).abs() <= g.cell_area() * 64.0);
        assert_relative_eq!(m, 2.0 * PI * PI, epsilon = 1e-12);
    }

    #[test]
    fn rejects_bad_fields() {
        let g = grid(8);
        assert!(matches!(
            GridField::new(&g, vec![Complex64::default(); 10]),
            Err(Error::LengthMismatch { .. })
        ));
        let mut v = vec![Complex64::default(); 64];
        v[3] = Complex64::new(f64::NAN, 0.0);
        assert!(matches!(GridField::new(&g, v), Err(Error::NonFinite(3))));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn parseval_and_round_trip(seed in any::<u64>(), log_r in 3u32..7) {
            let g = grid(1 << log_r);
            let f = random_field(&g, seed);
            let s = forward(&f);
            let lhs = lp_norm(&f, 2.0).powi(2);
            let rhs = AREA * s.energy();
            prop_assert!((lhs - rhs).abs() <= 1e-10 * lhs);
            prop_assert!(inverse(&s).relative_l2_error(&f) <= 1e-10);
        }

        #[test]
        fn lp_norm_is_homogeneous(seed in any::<u64>(), c in -5.0f64..5.0, p in 1.0f64..4.0) {
            let g = grid(16);
            let f = random_field(&g, seed);
            let scaled = f.scale(Complex64::new(c, 0.0));
            let lhs = lp_norm(&scaled, p);
            let rhs = c.abs() * lp_norm(&f, p);
            prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + rhs));
        }

        #[test]
        fn lp_norm_is_monotone(seed in any::<u64>(), p in 1.0f64..4.0) {
            let g = grid(16);
            let f = random_field(&g, seed);
            let shrunk = f.map(|v| v * 0.5);
            prop_assert!(lp_norm(&shrunk, p) <= lp_norm(&f, p));
        }

        #[test]
        fn level_sets_shrink(seed in any::<u64>(), a in 0.0f64..1.5, b in 0.0f64..1.5) {
            let g = grid(16);
            let f = random_field(&g, seed);
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            prop_assert!(level_set_measure(&f, hi) <= level_set_measure(&f, lo));
        }
    }
}
