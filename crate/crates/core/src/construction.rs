//! The extremal tree of band-limited bumps.
//!
//! Node `n` of a depth-`m` tree carries a set `E_n`, a smooth approximation
//! `g_n` of its indicator, and an integer frequency `v_n = (p_n, q_n)` with
//! `f_n = exp(i v_n . x) g_n / sqrt(m)` spectrally inside the sector assigned
//! to `n`. Children split the parent's set by the sign of `cos(v_parent . x)`,
//! so the truncations `Re(f_n) 1_{E_n}` form a tree-system.
//!
//! `E_n` is an intersection of sign sets of cosines, and `g_n` is the product
//! of one-dimensional smoothings of those sign sets, one per ancestor. Each
//! factor is a finite cosine series along its stripe direction, so the
//! spectrum of `g_n` is a lattice zonotope known in closed form and the
//! sector condition can be certified exactly before any field is sampled.

use std::f64::consts::FRAC_1_PI;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{forward, inverse, lp_norm, level_set_measure, Grid, GridField, Mask, RealField, AREA};
use crate::spectral::{build_sectors, DirectionSet, Sector};
use crate::tree::{
    maximal_partial_sum, sorting_permutation, verify_tree_system, Permutation, TreeIndex, TreeSystem,
};

/// Normalized cubic B-spline: the triangle convolved with itself, rescaled
/// to `[-1, 1]` with value 1 at the origin. It is the Fourier transform of a
/// multiple of `(sin(x/4) / (x/4))^4`, which is nonnegative.
pub fn profile(t: f64) -> f64 {
    let u = 2.0 * t.abs();
    if u < 1.0 {
        (4.0 - 6.0 * u * u + 3.0 * u * u * u) / 4.0
    } else if u < 2.0 {
        let v = 2.0 - u;
        v * v * v / 4.0
    } else {
        0.0
    }
}

/// Smoothing operators `Phi_l`: multiplication of the coefficient at
/// `(xi, eta)` by `phi(xi / l) phi(eta / l)`.
#[derive(Clone, Copy, Debug)]
pub struct SmoothingKernel {
    profile: fn(f64) -> f64,
}

pub fn default_kernel() -> SmoothingKernel {
    SmoothingKernel { profile }
}

impl SmoothingKernel {
    pub fn profile(&self, t: f64) -> f64 {
        (self.profile)(t)
    }

    pub fn weight(&self, l: usize, xi: i64, eta: i64) -> f64 {
        let l = l as f64;
        self.profile(xi as f64 / l) * self.profile(eta as f64 / l)
    }

    /// `Phi_l f`; the result has spectrum in `(-l, l)^2`.
    pub fn apply(&self, f: &RealField, l: usize) -> Result<RealField> {
        if l == 0 {
            return Err(Error::param("l", "scale must be positive"));
        }
        let s = forward(&f.to_complex()).apply(|xi, eta| Complex64::new(self.weight(l, xi, eta), 0.0));
        Ok(inverse(&s).re())
    }

    /// Samples of the periodized kernel of `Phi_l`, normalized so that
    /// convolution is the Riemann sum against it.
    pub fn spatial(&self, grid: &Grid, l: usize) -> RealField {
        let mut delta = vec![0.0; grid.len()];
        // the sample at the origin (a = b = R/2)
        delta[grid.len() / 2 + grid.resolution() / 2] = 1.0 / grid.cell_area();
        let d = RealField::new(grid, delta).expect("finite");
        self.apply(&d, l).expect("positive scale")
    }

    /// Coefficients `c_h` of the smoothed sign set of `s cos t > 0`,
    /// `1/2 + sum_{h odd <= H} c_h cos(h t)`, with `H` odd.
    pub fn stripe_coefficients(&self, sign: f64, harmonics: u32) -> Vec<(u32, f64)> {
        let scale = (harmonics + 2) as f64;
        (1..=harmonics)
            .step_by(2)
            .map(|h| {
                let alt = if (h / 2) % 2 == 0 { 1.0 } else { -1.0 };
                (h, self.profile(h as f64 / scale) * 2.0 * FRAC_1_PI * sign * alt / h as f64)
            })
            .collect()
    }
}

/// `g = Phi_l(1_E)` for the smallest `l` in `R/64, R/32, ..., R/2` with
/// `||g - 1_E||_2 <= eps`.
pub fn smooth_indicator(mask: &Mask, eps: f64, kernel: &SmoothingKernel) -> Result<(RealField, usize)> {
    if !(eps > 0.0) {
        return Err(Error::param("eps", "must be positive"));
    }
    if mask.is_empty() {
        return Err(Error::param("mask", "set is empty"));
    }
    let grid = mask.grid();
    let r = grid.resolution();
    let ind = mask.indicator();
    let spec = forward(&ind.to_complex());
    let mut l = (r / 64).max(1);
    let mut best = f64::INFINITY;
    loop {
        let g = inverse(&spec.apply(|xi, eta| Complex64::new(kernel.weight(l, xi, eta), 0.0))).re();
        let err = l2_distance(&g, &ind);
        if err <= eps {
            return Ok((g, l));
        }
        best = best.min(err);
        if l >= r / 2 {
            return Err(Error::SmoothingUnreachable {
                eps,
                best,
                max_scale: l,
                resolution: r,
            });
        }
        l = (2 * l).min(r / 2);
    }
}

fn l2_distance(a: &RealField, b: &RealField) -> f64 {
    let s: f64 = a.values().iter().zip(b.values()).map(|(x, y)| (x - y) * (x - y)).sum();
    (s * a.grid().cell_area()).sqrt()
}

/// Centrally symmetric lattice zonotope `sum_i [-g_i, g_i]`.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Zonotope {
    generators: Vec<(i64, i64)>,
}

impl Zonotope {
    pub fn point() -> Self {
        Zonotope::default()
    }

    /// The box `[-l, l]^2`.
    pub fn square(l: i64) -> Self {
        Zonotope {
            generators: vec![(l, 0), (0, l)],
        }
    }

    pub fn push(&mut self, g: (i64, i64)) {
        self.generators.push(g);
    }

    pub fn generators(&self) -> &[(i64, i64)] {
        &self.generators
    }

    /// `max_{z} (a z.0 + b z.1)` over the zonotope.
    pub fn extent(&self, a: f64, b: f64) -> f64 {
        self.generators.iter().map(|&(x, y)| (a * x as f64 + b * y as f64).abs()).sum()
    }

    /// Half widths along the two axes.
    pub fn half_widths(&self) -> (i64, i64) {
        self.generators
            .iter()
            .fold((0, 0), |(u, v), &(x, y)| (u + x.abs(), v + y.abs()))
    }
}

/// `int_E |cos(p x + q y)|` by grid quadrature.
pub fn cos_mass(mask: &Mask, p: i64, q: i64) -> f64 {
    let grid = mask.grid();
    let r = grid.resolution();
    // row sums in parallel, total in a fixed order so results are reproducible
    let rows: Vec<f64> = mask
        .bits()
        .par_chunks(r)
        .enumerate()
        .map(|(a, row)| {
            row.iter()
                .enumerate()
                .filter(|(_, &inside)| inside)
                .map(|(b, _)| grid.root(grid.phase_index(p, q, a, b)).re.abs())
                .sum::<f64>()
        })
        .collect();
    rows.iter().sum::<f64>() * grid.cell_area()
}

/// Lattice search for frequencies whose translate of a spectral support lies
/// strictly inside a sector and inside the alias-free band of the grid.
///
/// Candidates are tried by increasing `p^2 + q^2`, then `p`, then `q`; the
/// first one that also satisfies `int_E |cos| > |E| / 3` wins.
#[derive(Clone, Debug)]
pub struct FrequencySearch {
    margin: f64,
    band: i64,
    candidates: Vec<(i64, i64)>,
}

impl FrequencySearch {
    pub fn new(grid: &Grid, margin: f64) -> Result<Self> {
        if !(margin >= 0.0 && margin.is_finite()) {
            return Err(Error::param("margin", "must be finite and nonnegative"));
        }
        let band = grid.band_limit();
        let mut candidates: Vec<(i64, i64)> = (1..=band)
            .flat_map(|p| (-band..=band).map(move |q| (p, q)))
            .collect();
        candidates.sort_by_key(|&(p, q)| (p * p + q * q, p, q));
        Ok(FrequencySearch {
            margin,
            band,
            candidates,
        })
    }

    pub fn band(&self) -> i64 {
        self.band
    }

    /// Condition c) with margin and the band guard for `(p, q) + support`.
    pub fn fits(&self, support: &Zonotope, sector: &Sector, p: i64, q: i64) -> bool {
        let (wx, wy) = support.half_widths();
        if p.abs() + wx > self.band || q.abs() + wy > self.band {
            return false;
        }
        sector
            .functionals()
            .iter()
            .all(|&(a, b)| a * p as f64 + b * q as f64 - support.extent(a, b) > self.margin)
    }

    pub fn choose(&self, support: &Zonotope, mask: &Mask, sector: &Sector) -> Option<(i64, i64)> {
        let third = mask.measure() / 3.0;
        let fns = sector.functionals();
        let ext: Vec<f64> = fns.iter().map(|&(a, b)| support.extent(a, b)).collect();
        let (wx, wy) = support.half_widths();
        self.candidates
            .iter()
            .copied()
            .filter(|&(p, q)| p.abs() + wx <= self.band && q.abs() + wy <= self.band)
            .filter(|&(p, q)| {
                fns.iter()
                    .zip(&ext)
                    .all(|(&(a, b), e)| a * p as f64 + b * q as f64 - e > self.margin)
            })
            .find(|&(p, q)| cos_mass(mask, p, q) > third)
    }
}

/// One-shot form of [`FrequencySearch::choose`].
pub fn choose_frequency(support: &Zonotope, mask: &Mask, sector: &Sector, margin: f64) -> Result<(i64, i64)> {
    let search = FrequencySearch::new(mask.grid(), margin)?;
    search.choose(support, mask, sector).ok_or(Error::FrequencyBudget {
        node: 0,
        sector: 0,
        limit: search.band(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BuildOptions {
    /// Target for `||g_n - 1_{E_n}||_2`, in units of `sqrt|Q|`.
    pub eps: f64,
    /// Largest odd harmonic tried for each smoothed sign set.
    pub max_harmonic: u32,
    /// Strict-interior slack for condition c).
    pub margin: f64,
}

impl Default for BuildOptions {
    fn default() -> Self {
        BuildOptions {
            eps: 0.02,
            max_harmonic: 63,
            margin: 1e-9,
        }
    }
}

impl BuildOptions {
    pub fn eps_abs(&self) -> f64 {
        self.eps * AREA.sqrt()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(Error::param("eps", format!("{} is not positive", self.eps)));
        }
        if self.max_harmonic == 0 {
            return Err(Error::param("max_harmonic", "must be at least 1"));
        }
        Ok(())
    }
}

/// Smoothed sign set of `sign * cos(p x + q y) > 0` with odd harmonics up to `harmonics`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Stripe {
    pub p: i64,
    pub q: i64,
    pub sign: f64,
    pub harmonics: u32,
}

impl Stripe {
    /// Values indexed by the phase residue `(p a + q b) mod R`.
    fn table(&self, grid: &Grid, kernel: &SmoothingKernel) -> Vec<f64> {
        let r = grid.resolution();
        let flip = if (self.p + self.q).rem_euclid(2) == 1 { -1.0 } else { 1.0 };
        let coeffs = kernel.stripe_coefficients(self.sign, self.harmonics);
        (0..r)
            .map(|k| {
                0.5 + coeffs
                    .iter()
                    .map(|&(h, c)| c * flip * grid.root(h as usize * k).re)
                    .sum::<f64>()
            })
            .collect()
    }

    fn extreme(&self) -> (i64, i64) {
        let h = self.harmonics as i64;
        (h * self.p, h * self.q)
    }
}

#[derive(Clone, Debug)]
pub struct ConstructionNode {
    pub index: TreeIndex,
    /// `k` such that the node's spectrum sits in `S_k`.
    pub sector: usize,
    pub p: i64,
    pub q: i64,
    /// `max(|xi|, |eta|)` over the spectrum of `g_n`.
    pub radius: i64,
    /// `||g_n - 1_{E_n}||_2 / sqrt|Q|`.
    pub eps_achieved: f64,
    pub mask: Mask,
    pub g: RealField,
    stripes: Vec<Stripe>,
}

impl ConstructionNode {
    /// Smoothing factors of `g_n`, root first. Empty for nodes read back
    /// from a state file.
    pub fn stripes(&self) -> &[Stripe] {
        &self.stripes
    }

    /// `f_n = exp(i (p x + q y)) g_n / sqrt(m)`.
    pub fn field(&self, m: u32) -> GridField {
        let grid = self.g.grid();
        let r = grid.resolution();
        let c = 1.0 / (m as f64).sqrt();
        let values = self
            .g
            .values()
            .par_iter()
            .enumerate()
            .map(|(i, &g)| grid.plane_wave_at(self.p, self.q, i / r, i % r) * (g * c))
            .collect();
        GridField::new(grid, values).expect("finite")
    }

    /// `Re(f_n) 1_{E_n}`.
    pub fn truncated(&self, m: u32) -> RealField {
        let grid = self.g.grid();
        let r = grid.resolution();
        let c = 1.0 / (m as f64).sqrt();
        let values = self
            .g
            .values()
            .par_iter()
            .zip(self.mask.bits().par_iter())
            .enumerate()
            .map(|(i, (&g, &inside))| {
                if inside {
                    grid.plane_wave_at(self.p, self.q, i / r, i % r).re * g * c
                } else {
                    0.0
                }
            })
            .collect();
        RealField::new(grid, values).expect("finite")
    }
}

#[derive(Clone, Debug)]
pub struct ConstructionState {
    pub m: u32,
    /// Requested `eps`, in units of `sqrt|Q|`.
    pub eps: f64,
    pub grid: Grid,
    pub directions: DirectionSet,
    pub sectors: Vec<Sector>,
    pub sigma: Permutation,
    pub nodes: Vec<ConstructionNode>,
}

impl ConstructionState {
    pub fn node(&self, n: TreeIndex) -> &ConstructionNode {
        &self.nodes[n.get() - 1]
    }

    pub fn fields(&self) -> Vec<GridField> {
        self.nodes.iter().map(|n| n.field(self.m)).collect()
    }

    pub fn truncated(&self) -> Vec<RealField> {
        self.nodes.iter().map(|n| n.truncated(self.m)).collect()
    }

    /// `f = sum_n f_n`.
    pub fn extremal(&self) -> GridField {
        let mut f = GridField::zeros(&self.grid);
        for n in &self.nodes {
            f.add_assign(&n.field(self.m)).expect("same grid");
        }
        f
    }
}

fn child_mask(parent: &Mask, p: i64, q: i64, sign: f64) -> Mask {
    let grid = parent.grid();
    let r = grid.resolution();
    let bits = parent
        .bits()
        .par_iter()
        .enumerate()
        .map(|(i, &inside)| inside && sign * grid.plane_wave_at(p, q, i / r, i % r).re > 0.0)
        .collect();
    Mask::new(grid, bits).expect("same grid")
}

fn refine(parent: &RealField, table: &[f64], p: i64, q: i64) -> RealField {
    let grid = parent.grid();
    let r = grid.resolution();
    let values = parent
        .values()
        .par_iter()
        .enumerate()
        .map(|(i, &g)| g * table[grid.phase_index(p, q, i / r, i % r)])
        .collect();
    RealField::new(grid, values).expect("finite")
}

fn support_of(stripes: &[Stripe]) -> Zonotope {
    let mut z = Zonotope::point();
    for s in stripes {
        z.push(s.extreme());
    }
    z
}

/// Builds nodes `1, ..., 2^m - 1` in order, parents first. Node `n` is placed
/// in the sector `S_k` with `k = sigma^{-1}(n)`.
///
/// For each node the smoothing of the newest sign set uses the fewest odd
/// harmonics that reach `eps` while still admitting a frequency. When no
/// harmonic count reaches `eps` on this grid, the fewest harmonics that admit
/// a frequency are used and the shortfall shows in `eps_achieved`.
pub fn build(
    directions: &DirectionSet,
    grid: &Grid,
    opts: &BuildOptions,
    kernel: &SmoothingKernel,
) -> Result<ConstructionState> {
    opts.validate()?;
    let m = directions.depth().ok_or_else(|| {
        Error::InvalidDirections(format!("{} directions is not a power of two", directions.len()))
    })?;
    if m == 0 {
        return Err(Error::InvalidDirections("need at least two directions".into()));
    }
    let sectors = build_sectors(directions)?;
    let sigma = sorting_permutation(m)?;
    let search = FrequencySearch::new(grid, opts.margin)?;
    let eps_abs = opts.eps_abs();
    let mut nodes: Vec<ConstructionNode> = Vec::with_capacity(sectors.len());
    for n in 1..=sectors.len() {
        let idx = TreeIndex::new(n)?;
        let k = sigma.invert(n);
        let sector = &sectors[k - 1];
        let wrap = |e: Error| Error::Node {
            node: n,
            source: Box::new(e),
        };
        let budget = || Error::FrequencyBudget {
            node: n,
            sector: k,
            limit: search.band(),
        };
        let node = match idx.parent() {
            None => {
                let mask = Mask::full(grid);
                let (p, q) = search
                    .choose(&Zonotope::point(), &mask, sector)
                    .ok_or_else(budget)?;
                ConstructionNode {
                    index: idx,
                    sector: k,
                    p,
                    q,
                    radius: 0,
                    eps_achieved: 0.0,
                    mask,
                    g: RealField::constant(grid, 1.0),
                    stripes: Vec::new(),
                }
            }
            Some(parent) => {
                let par = &nodes[parent.get() - 1];
                let sign = idx.child_sign();
                let mask = child_mask(&par.mask, par.p, par.q, sign);
                if mask.is_empty() {
                    return Err(wrap(Error::param("mask", "empty child set")));
                }
                let ind = mask.indicator();
                let attempt = |h: u32| {
                    let stripe = Stripe {
                        p: par.p,
                        q: par.q,
                        sign,
                        harmonics: h,
                    };
                    let g = refine(&par.g, &stripe.table(grid, kernel), par.p, par.q);
                    let err = l2_distance(&g, &ind);
                    let mut stripes = par.stripes.clone();
                    stripes.push(stripe);
                    (g, err, stripes)
                };
                let odd = || (1..=opts.max_harmonic).step_by(2);
                let mut chosen = None;
                for h in odd() {
                    let (g, err, stripes) = attempt(h);
                    if err <= eps_abs {
                        let support = support_of(&stripes);
                        if let Some(v) = search.choose(&support, &mask, sector) {
                            chosen = Some((g, err, stripes, support, v));
                        }
                        break;
                    }
                }
                if chosen.is_none() {
                    for h in odd() {
                        let (g, err, stripes) = attempt(h);
                        let support = support_of(&stripes);
                        if let Some(v) = search.choose(&support, &mask, sector) {
                            chosen = Some((g, err, stripes, support, v));
                            break;
                        }
                    }
                }
                let (g, err, stripes, support, (p, q)) = chosen.ok_or_else(budget)?;
                let (wx, wy) = support.half_widths();
                ConstructionNode {
                    index: idx,
                    sector: k,
                    p,
                    q,
                    radius: wx.max(wy),
                    eps_achieved: err / AREA.sqrt(),
                    mask,
                    g,
                    stripes,
                }
            }
        };
        nodes.push(node);
    }
    Ok(ConstructionState {
        m,
        eps: opts.eps,
        grid: grid.clone(),
        directions: directions.clone(),
        sectors,
        sigma,
        nodes,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct CertifyRow {
    pub check: &'static str,
    /// 0 for checks about the whole construction; the level for level checks.
    pub node: usize,
    pub value: f64,
    pub bound: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CertifyReport {
    pub rows: Vec<CertifyRow>,
    /// `sum_n ||f_n||_2^2`.
    pub c1: f64,
    /// `int_Q sum_n |Re(f_n) 1_{E_n}| / (sqrt(m) |Q|)`.
    pub l1_constant: f64,
}

impl CertifyReport {
    pub fn pass(&self) -> bool {
        self.rows.iter().all(|r| r.pass)
    }

    pub fn failures(&self) -> impl Iterator<Item = &CertifyRow> {
        self.rows.iter().filter(|r| !r.pass)
    }

    pub fn check(&self, id: &str) -> impl Iterator<Item = &CertifyRow> + '_ {
        let id = id.to_owned();
        self.rows.iter().filter(move |r| r.check == id)
    }

    pub fn check_passes(&self, id: &str) -> bool {
        let mut any = false;
        for r in self.check(id) {
            any = true;
            if !r.pass {
                return false;
            }
        }
        any
    }
}

/// Check ids, in report order.
pub const CHECKS: &[&str] = &[
    "a_mask",
    "b_range",
    "b_eps",
    "c_sector",
    "d_cos",
    "tilde_gap",
    "level_disjoint",
    "level_cover",
    "partition",
    "sum_norm_sq",
    "leak_measure",
    "tree_system",
    "cap",
    "third_bound",
    "l1_lower",
];

/// Tolerances of the certificate.
pub const RANGE_TOL: f64 = 1e-12;
pub const COEFF_REL_TOL: f64 = 1e-12;
pub const PARTITION_MIN: f64 = 0.999;
pub const NORM_SQ_MAX: f64 = 10.0 * AREA;
pub const LEAK_MAX: f64 = 0.05 * AREA;
pub const CAP_SLACK: f64 = 1e-9;
pub const THIRD_BOUND_SLACK: f64 = 1e-9;
pub const L1_MIN: f64 = 0.1;

pub fn certify(state: &ConstructionState) -> CertifyReport {
    let m = state.m;
    let grid = &state.grid;
    let r = grid.resolution();
    let sqrt_m = (m as f64).sqrt();
    let eps_abs = state.eps * AREA.sqrt();
    let mut rows = Vec::new();
    let mut row = |check: &'static str, node: usize, value: f64, bound: f64, pass: bool| {
        rows.push(CertifyRow {
            check,
            node,
            value,
            bound,
            pass,
        })
    };

    let fields = state.fields();
    let truncated = state.truncated();
    let mut c1 = 0.0;
    let mut leak = vec![0.0; grid.len()];
    for (i, node) in state.nodes.iter().enumerate() {
        let n = i + 1;
        let expect = match node.index.parent() {
            None => Mask::full(grid),
            Some(p) => {
                let par = state.node(p);
                child_mask(&par.mask, par.p, par.q, node.index.child_sign())
            }
        };
        let mismatches = expect.bits().iter().zip(node.mask.bits()).filter(|(a, b)| a != b).count();
        row("a_mask", n, mismatches as f64, 0.0, mismatches == 0);

        let over = (-node.g.min()).max(node.g.max() - 1.0).max(0.0);
        row("b_range", n, over, RANGE_TOL, over <= RANGE_TOL);
        let err = l2_distance(&node.g, &node.mask.indicator());
        row("b_eps", n, err / AREA.sqrt(), state.eps, err <= eps_abs);

        let spec = forward(&fields[i]);
        let cutoff = COEFF_REL_TOL * spec.max_abs();
        let sector = &state.sectors[node.sector - 1];
        let outside = spec
            .iter()
            .filter(|&(xi, eta, c)| c.norm() > cutoff && !sector.contains(xi, eta))
            .count();
        row("c_sector", n, outside as f64, 0.0, outside == 0);

        let measure = node.mask.measure();
        let ratio = cos_mass(&node.mask, node.p, node.q) / measure;
        row("d_cos", n, ratio, 1.0 / 3.0, ratio > 1.0 / 3.0);

        let norm = lp_norm(&fields[i], 2.0);
        c1 += norm * norm;

        let re = fields[i].re();
        let mut gap = 0.0;
        for ((l, &a), &b) in leak.iter_mut().zip(re.values()).zip(truncated[i].values()) {
            let d = (a - b).abs();
            *l += d;
            gap += d * d;
        }
        let gap = (gap * grid.cell_area()).sqrt();
        row("tilde_gap", n, gap / AREA.sqrt(), state.eps / sqrt_m, gap <= eps_abs / sqrt_m);
    }

    let mut coverage = vec![0u32; grid.len()];
    for k in 0..m {
        let mut level = vec![0u32; grid.len()];
        for n in (1usize << k)..(1usize << (k + 1)) {
            for (c, &b) in level.iter_mut().zip(state.nodes[n - 1].mask.bits()) {
                *c += u32::from(b);
            }
        }
        let overlaps = level.iter().filter(|&&c| c > 1).count();
        let uncovered = level.iter().filter(|&&c| c == 0).count();
        // each zero line of cos(p x + q y) meets at most 2(|p| + |q|) R cells of the grid
        let allowance: i64 = if k == 0 {
            0
        } else {
            ((1usize << (k - 1))..(1usize << k))
                .map(|n| 2 * (state.nodes[n - 1].p.abs() + state.nodes[n - 1].q.abs()) * r as i64)
                .sum()
        };
        row("level_disjoint", k as usize, overlaps as f64, 0.0, overlaps == 0);
        row(
            "level_cover",
            k as usize,
            uncovered as f64,
            allowance as f64,
            uncovered as i64 <= allowance,
        );
        for (c, l) in coverage.iter_mut().zip(level) {
            *c += l;
        }
    }
    let exact = coverage.iter().filter(|&&c| c == m).count() as f64 / grid.len() as f64;
    row("partition", 0, exact, PARTITION_MIN, exact >= PARTITION_MIN);

    row("sum_norm_sq", 0, c1, NORM_SQ_MAX, c1 <= NORM_SQ_MAX);

    let leak_field = RealField::new(grid, leak).expect("finite");
    let leak_measure = level_set_measure(&leak_field, 1.0);
    row("leak_measure", 0, leak_measure, LEAK_MAX, leak_measure <= LEAK_MAX);

    let system = TreeSystem::new(m, truncated).expect("sizes match");
    let tree = verify_tree_system(&system, system.default_support_tol());
    let failing = tree.failing_nodes().len() + tree.relation_failures.len();
    row("tree_system", 0, failing as f64, 0.0, failing == 0);

    let partial = maximal_partial_sum(system.fields(), &state.sigma).expect("sizes match");
    let cap = partial.max();
    row("cap", 0, cap, sqrt_m + CAP_SLACK, cap <= sqrt_m + CAP_SLACK);

    let mut total = vec![0.0; grid.len()];
    for f in system.fields() {
        for (t, v) in total.iter_mut().zip(f.values()) {
            *t += v.abs();
        }
    }
    let deficit = total
        .iter()
        .zip(partial.values())
        .map(|(t, p)| t / 3.0 - p)
        .fold(f64::NEG_INFINITY, f64::max);
    row("third_bound", 0, deficit, THIRD_BOUND_SLACK, deficit <= THIRD_BOUND_SLACK);

    let l1 = total.iter().sum::<f64>() * grid.cell_area();
    let l1_constant = l1 / (sqrt_m * AREA);
    row("l1_lower", 0, l1_constant, L1_MIN, l1_constant >= L1_MIN);

    CertifyReport { rows, c1, l1_constant }
}

/// Rebuilds a state from its stored parts, e.g. after reading a state file.
/// Nodes are taken as given; run [`certify`] to check them.
pub fn assemble(
    directions: DirectionSet,
    grid: &Grid,
    eps: f64,
    nodes: Vec<StoredNode>,
) -> Result<ConstructionState> {
    let m = directions
        .depth()
        .filter(|&m| m >= 1)
        .ok_or_else(|| Error::InvalidDirections("direction count is not a power of two >= 2".into()))?;
    let sectors = build_sectors(&directions)?;
    let sigma = sorting_permutation(m)?;
    if nodes.len() != sectors.len() {
        return Err(Error::TreeSize {
            depth: m,
            expected: sectors.len(),
            actual: nodes.len(),
        });
    }
    let nodes = nodes
        .into_iter()
        .enumerate()
        .map(|(i, s)| {
            let index = TreeIndex::new(i + 1)?;
            Ok(ConstructionNode {
                index,
                sector: sigma.invert(i + 1),
                p: s.p,
                q: s.q,
                radius: s.radius,
                eps_achieved: s.eps_achieved,
                mask: s.mask,
                g: s.g,
                stripes: Vec::new(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ConstructionState {
        m,
        eps,
        grid: grid.clone(),
        directions,
        sectors,
        sigma,
        nodes,
    })
}

/// Node data as kept in a state file.
#[derive(Clone, Debug)]
pub struct StoredNode {
    pub p: i64,
    pub q: i64,
    pub radius: i64,
    pub eps_achieved: f64,
    pub mask: Mask,
    pub g: RealField,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::Direction;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn uniform(n: usize) -> DirectionSet {
        let a: Vec<f64> = (1..=n).map(|k| FRAC_PI_2 * k as f64 / (n + 1) as f64).collect();
        DirectionSet::from_angles(&a).unwrap()
    }

    #[test]
    fn profile_values() {
        assert_eq!(profile(0.0), 1.0);
        assert_eq!(profile(1.0), 0.0);
        assert_eq!(profile(-1.5), 0.0);
        assert_eq!(profile(0.5), 0.25);
        assert_eq!(profile(0.3), profile(-0.3));
    }

    #[test]
    fn profile_is_normalized_triangle_self_convolution() {
        // (tri * tri)(s) by the midpoint rule, normalized by its peak 2/3
        let tri = |t: f64| (1.0 - t.abs()).max(0.0);
        let conv = |s: f64| {
            let n = 200_000;
            let h = 2.0 / n as f64;
            (0..n).map(|i| -1.0 + (i as f64 + 0.5) * h).map(|t| tri(t) * tri(s - t)).sum::<f64>() * h
        };
        let peak = conv(0.0);
        assert!((peak - 2.0 / 3.0).abs() < 1e-9);
        for &t in &[0.1, 0.25, 0.5, 0.7, 0.95] {
            assert!((profile(t) - conv(2.0 * t) / peak).abs() < 1e-8, "t = {t}");
        }
    }

    #[test]
    fn spatial_kernel_is_nonnegative_with_unit_mass() {
        let g = Grid::new(64).unwrap();
        let k = default_kernel();
        for l in [2, 5, 16, 32] {
            let s = k.spatial(&g, l);
            assert!(s.min() >= -1e-12, "l = {l}: {}", s.min());
            assert!((s.integral() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn smoothing_full_square_is_constant() {
        let g = Grid::new(64).unwrap();
        let (s, l) = smooth_indicator(&Mask::full(&g), 1e-6, &default_kernel()).unwrap();
        assert_eq!(l, 1);
        assert!(s.values().iter().all(|v| (v - 1.0).abs() < 1e-14));
    }

    #[test]
    fn smoothing_half_plane() {
        let g = Grid::new(128).unwrap();
        let mask = Mask::from_fn(&g, |x, _| x < 0.0);
        let eps = 0.1 * mask.measure().sqrt();
        let (s, l) = smooth_indicator(&mask, eps, &default_kernel()).unwrap();
        assert!(l <= 64);
        assert!(l2_distance(&s, &mask.indicator()) <= eps);
        assert!(s.min() >= -1e-12 && s.max() <= 1.0 + 1e-12);
        let spec = forward(&s.to_complex());
        assert!(spec.occupied(1e-13).iter().all(|&(a, b)| a.abs() < l as i64 && b.abs() < l as i64));
    }

    #[test]
    fn smoothing_unreachable() {
        let g = Grid::new(64).unwrap();
        let mask = Mask::from_fn(&g, |x, _| x < 0.0);
        assert!(matches!(
            smooth_indicator(&mask, 1e-9, &default_kernel()),
            Err(Error::SmoothingUnreachable { .. })
        ));
    }

    #[test]
    fn stripe_table_matches_series() {
        let g = Grid::new(64).unwrap();
        let k = default_kernel();
        let s = Stripe {
            p: 3,
            q: -2,
            sign: -1.0,
            harmonics: 5,
        };
        let table = s.table(&g, &k);
        let coeffs = k.stripe_coefficients(-1.0, 5);
        for i in (0..g.len()).step_by(37) {
            let (x, y) = g.point(i);
            let t = 3.0 * x - 2.0 * y;
            let direct = 0.5 + coeffs.iter().map(|&(h, c)| c * (h as f64 * t).cos()).sum::<f64>();
            let (a, b) = g.split(i);
            assert!((table[g.phase_index(3, -2, a, b)] - direct).abs() < 1e-12);
        }
        assert!(table.iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn stripe_error_decreases_with_harmonics() {
        let g = Grid::new(256).unwrap();
        let k = default_kernel();
        let mask = child_mask(&Mask::full(&g), 2, -1, 1.0);
        let mut last = f64::INFINITY;
        for h in (1..=61).step_by(2) {
            let s = Stripe {
                p: 2,
                q: -1,
                sign: 1.0,
                harmonics: h,
            };
            let gfield = refine(&RealField::constant(&g, 1.0), &s.table(&g, &k), 2, -1);
            let err = l2_distance(&gfield, &mask.indicator());
            assert!(err < last, "h = {h}");
            last = err;
        }
    }

    #[test]
    fn zonotope_extent() {
        let mut z = Zonotope::square(3);
        assert_eq!(z.half_widths(), (3, 3));
        assert_eq!(z.extent(1.0, -1.0), 6.0);
        z.push((2, -5));
        assert_eq!(z.half_widths(), (5, 8));
        assert_eq!(z.extent(0.0, 1.0), 8.0);
    }

    #[test]
    fn frequency_for_full_square() {
        let g = Grid::new(128).unwrap();
        let sector = Sector::new(Direction::new(0.4), Direction::new(0.9)).unwrap();
        let mask = Mask::full(&g);
        let (p, q) = choose_frequency(&Zonotope::square(4), &mask, &sector, 1e-9).unwrap();
        assert!(sector.slack(p as f64, q as f64) > 0.0);
        assert!(cos_mass(&mask, p, q) > AREA / 3.0);
        // d) on the full square is 2/pi of the area
        assert!((cos_mass(&mask, p, q) / AREA - 2.0 / PI).abs() < 1e-2);
    }

    #[test]
    fn thin_sector_is_out_of_budget() {
        let g = Grid::new(256).unwrap();
        let sector = Sector::new(Direction::new(0.5), Direction::new(0.5 + 1e-6)).unwrap();
        let r = choose_frequency(&Zonotope::square(32), &Mask::full(&g), &sector, 1e-9);
        assert!(matches!(r, Err(Error::FrequencyBudget { .. })));
    }

    #[test]
    fn base_case() {
        let g = Grid::new(64).unwrap();
        let s = build(&uniform(2), &g, &BuildOptions::default(), &default_kernel()).unwrap();
        assert_eq!(s.nodes.len(), 1);
        let n = &s.nodes[0];
        assert!(n.mask.bits().iter().all(|&b| b));
        assert!(n.g.values().iter().all(|&v| v == 1.0));
        let f = n.field(1);
        assert!(f.max_abs_diff(&GridField::plane_wave(&g, n.p, n.q)) < 1e-15);
        let rep = certify(&s);
        assert!(rep.pass(), "{:?}", rep.failures().collect::<Vec<_>>());
    }

    #[test]
    fn depth_two_structure() {
        let g = Grid::new(128).unwrap();
        let s = build(&uniform(4), &g, &BuildOptions::default(), &default_kernel()).unwrap();
        assert_eq!(s.nodes.len(), 3);
        // sigma = (2, 1, 3): the root owns the middle sector
        assert_eq!(s.nodes.iter().map(|n| n.sector).collect::<Vec<_>>(), vec![2, 1, 3]);
        let rep = certify(&s);
        for id in ["a_mask", "b_range", "c_sector", "d_cos", "level_disjoint", "level_cover", "partition", "tree_system", "cap", "third_bound", "l1_lower", "sum_norm_sq"] {
            assert!(rep.check_passes(id), "{id}: {:?}", rep.check(id).collect::<Vec<_>>());
        }
        // every sample lies in exactly one child
        let total = s.nodes[1].mask.count() + s.nodes[2].mask.count();
        assert_eq!(total, g.len());
    }

    #[test]
    fn certify_flags_corruption() {
        let g = Grid::new(128).unwrap();
        let mut s = build(&uniform(4), &g, &BuildOptions::default(), &default_kernel()).unwrap();
        s.nodes[1].p += 1;
        let rep = certify(&s);
        assert!(!rep.check_passes("a_mask") || !rep.check_passes("c_sector"));
        assert!(!rep.pass());
    }

    #[test]
    fn rejects_bad_inputs() {
        let g = Grid::new(64).unwrap();
        let bad = BuildOptions {
            eps: 0.0,
            ..BuildOptions::default()
        };
        assert!(build(&uniform(2), &g, &bad, &default_kernel()).is_err());
        assert!(build(&uniform(3), &g, &BuildOptions::default(), &default_kernel()).is_err());
    }
}
