//! Growth of the maximal half-plane operator on the extremal function.
//!
//! For `N = 2^m` directions the extremal `f = sum f_n` has `T_U f` computed
//! twice, once from half-plane projections and once from sector projections,
//! since `T_{u_l} f = sum_{k >= l} T_{S_k} f` for a function with spectrum in
//! the sectors. The ratio `||T_U f||_1 / ||f||_2` is then compared against
//! `sqrt(log nu)`, `nu = N - 1`.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::construction::{build, default_kernel, BuildOptions, ConstructionState};
use crate::error::{Error, Result};
use crate::grid::{forward, inverse, level_set_measure, lp_norm, Grid, GridField, RealField};
use crate::spectral::{half_plane_spectrum, maximal_hilbert_spectrum, DirectionSet};
use crate::tree::{maximal_complex_sum, Permutation, SumOrder};

pub use crate::spectral::build_sectors;

/// Agreement required between the two routes to `T_U f`.
pub const DUAL_PATH_TOL: f64 = 1e-8;

/// Level constant `c3`: at `m = 4`, `R = 1024`, uniform directions, the
/// threshold `c3 sqrt(ln 15)` is the median of `T_U f` (examples/calibration.rs).
pub const CALIBRATED_C3: f64 = 0.485;
/// Half the measure of `{T_U f > c3 sqrt(ln nu)}` at the same run.
pub const CALIBRATED_C2: f64 = 9.87;
/// Twice `||H_U f||_2 / (||f||_2 ln N)` at the same run.
pub const CALIBRATED_ENVELOPE: f64 = 1.13;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum DirectionKind {
    /// `theta_k = (pi/2) k / (N + 1)`.
    Uniform,
    /// `theta_k = (pi/4) 2^{-(N - k)}`; successive gaps halve.
    Lacunary,
    /// Angles in radians, one per line; `#` starts a comment.
    File(PathBuf),
}

pub fn uniform_directions(n: usize) -> Result<DirectionSet> {
    let a: Vec<f64> = (1..=n).map(|k| FRAC_PI_2 * k as f64 / (n + 1) as f64).collect();
    DirectionSet::from_angles(&a)
}

pub fn lacunary_directions(n: usize) -> Result<DirectionSet> {
    let a: Vec<f64> = (1..=n).map(|k| FRAC_PI_4 * (-((n - k) as f64)).exp2()).collect();
    DirectionSet::from_angles(&a)
}

pub fn read_directions(path: &Path) -> Result<DirectionSet> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_directions(&text, path)
}

pub fn parse_directions(text: &str, path: &Path) -> Result<DirectionSet> {
    let mut angles = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let t: f64 = line.parse().map_err(|_| Error::Parse {
            path: path.to_owned(),
            line: i + 1,
            reason: format!("`{line}` is not a number"),
        })?;
        angles.push(t);
    }
    DirectionSet::from_angles(&angles)
}

/// Direction set of size `n`. File sets must have exactly `n` entries.
pub fn direction_generators(kind: &DirectionKind, n: usize) -> Result<DirectionSet> {
    let set = match kind {
        DirectionKind::Uniform => uniform_directions(n)?,
        DirectionKind::Lacunary => lacunary_directions(n)?,
        DirectionKind::File(p) => read_directions(p)?,
    };
    if set.len() != n {
        return Err(Error::InvalidDirections(format!(
            "expected {n} directions, found {}",
            set.len()
        )));
    }
    Ok(set)
}

/// Builds the tree for `directions` and returns `f = sum_n f_n` with it.
pub fn extremal_function(
    directions: &DirectionSet,
    grid: &Grid,
    opts: &BuildOptions,
) -> Result<(GridField, ConstructionState)> {
    let state = build(directions, grid, opts, &default_kernel())?;
    Ok((state.extremal(), state))
}

#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub t_max: RealField,
    pub h_max: RealField,
    pub norm_l2: f64,
    /// Relative L2 gap between the half-plane and sector routes to `T_U f`.
    pub dual_gap: f64,
    /// Max difference between `H_U f` from the multiplier and from the cached
    /// half-plane projections.
    pub hilbert_gap: f64,
}

/// `T_U f` both ways and `H_U f` both ways.
pub fn evaluate_fields(f: &GridField, state: &ConstructionState) -> Result<Evaluation> {
    let grid = f.grid();
    let spec = forward(f);
    let dirs = &state.directions;

    let (t_max, h_cached) = dirs
        .par_iter()
        .map(|&u| {
            let t = inverse(&half_plane_spectrum(&spec, u));
            let tm: Vec<f64> = t.values().iter().map(|z| z.norm()).collect();
            let hm: Vec<f64> = t
                .values()
                .iter()
                .zip(f.values())
                .map(|(&t, &f)| (Complex64::i() * (2.0 * t - f)).norm())
                .collect();
            (tm, hm)
        })
        .reduce(
            || (vec![0.0; grid.len()], vec![0.0; grid.len()]),
            |(mut a, mut b), (c, d)| {
                for (x, y) in a.iter_mut().zip(c) {
                    *x = x.max(y);
                }
                for (x, y) in b.iter_mut().zip(d) {
                    *x = x.max(y);
                }
                (a, b)
            },
        );
    let t_max = RealField::new(grid, t_max)?;
    let h_max = maximal_hilbert_spectrum(&spec, dirs);
    let hilbert_gap = h_max
        .values()
        .iter()
        .zip(&h_cached)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);

    // sector route: suffix sums of the sector pieces in their natural order
    let pieces: Vec<GridField> = state
        .sectors
        .iter()
        .map(|s| inverse(&spec.restrict(|xi, eta| s.contains(xi, eta))))
        .collect();
    let identity = Permutation::new((1..=pieces.len()).collect())?;
    let t_sectors = maximal_complex_sum(&pieces, &identity, SumOrder::Suffix)?;
    let diff: f64 = t_max
        .values()
        .iter()
        .zip(t_sectors.values())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    let base: f64 = t_max.values().iter().map(|a| a * a).sum();
    let dual_gap = if base > 0.0 { (diff / base).sqrt() } else { diff.sqrt() };

    Ok(Evaluation {
        t_max,
        h_max,
        norm_l2: lp_norm(f, 2.0),
        dual_gap,
        hilbert_gap,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct GrowthRecord {
    pub m: u32,
    pub n_dirs: usize,
    pub resolution: usize,
    pub eps: f64,
    pub ratio_t: f64,
    /// `(p, ||H_U f||_p / ||f||_2)`.
    pub ratio_h: Vec<(f64, f64)>,
    /// `ratio_t / sqrt(ln nu)`; undefined for `m = 1`.
    pub ratio_over_sqrtlog: Option<f64>,
    /// `|{T_U f > c3 sqrt(ln nu)}|`.
    pub level_measure: f64,
    pub dual_gap: f64,
    pub hilbert_gap: f64,
    pub wall_ms: Option<u64>,
}

impl GrowthRecord {
    pub fn nu(&self) -> usize {
        self.n_dirs - 1
    }

    pub fn ratio_h(&self, p: f64) -> Option<f64> {
        self.ratio_h.iter().find(|(q, _)| *q == p).map(|&(_, v)| v)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalOptions {
    pub p_list: Vec<f64>,
    /// `c3` in the level threshold `c3 sqrt(ln nu)`.
    pub level_constant: f64,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            p_list: vec![1.0, 2.0],
            level_constant: CALIBRATED_C3,
        }
    }
}

impl EvalOptions {
    fn validate(&self) -> Result<()> {
        if let Some(p) = self.p_list.iter().find(|p| !(**p >= 1.0 && p.is_finite())) {
            return Err(Error::param("p", format!("{p} is not in [1, inf)")));
        }
        if !(self.level_constant >= 0.0 && self.level_constant.is_finite()) {
            return Err(Error::param("c3", "must be finite and nonnegative"));
        }
        Ok(())
    }
}

pub fn evaluate(f: &GridField, state: &ConstructionState, opts: &EvalOptions) -> Result<GrowthRecord> {
    opts.validate()?;
    record(&evaluate_fields(f, state)?, state, opts)
}

fn record(ev: &Evaluation, state: &ConstructionState, opts: &EvalOptions) -> Result<GrowthRecord> {
    if !(ev.dual_gap <= DUAL_PATH_TOL) {
        return Err(Error::DualPathMismatch {
            gap: ev.dual_gap,
            tol: DUAL_PATH_TOL,
        });
    }
    let nu = state.sectors.len();
    let log_nu = (nu as f64).ln();
    let ratio_t = lp_norm(&ev.t_max, 1.0) / ev.norm_l2;
    let ratio_h = opts
        .p_list
        .iter()
        .map(|&p| (p, lp_norm(&ev.h_max, p) / ev.norm_l2))
        .collect();
    Ok(GrowthRecord {
        m: state.m,
        n_dirs: state.directions.len(),
        resolution: state.grid.resolution(),
        eps: state.eps,
        ratio_t,
        ratio_h,
        ratio_over_sqrtlog: (nu > 1).then(|| ratio_t / log_nu.sqrt()),
        level_measure: level_set_measure(&ev.t_max, opts.level_constant * log_nu.sqrt()),
        dual_gap: ev.dual_gap,
        hilbert_gap: ev.hilbert_gap,
        wall_ms: None,
    })
}

#[derive(Clone, Debug)]
pub struct SweepRow {
    pub m: u32,
    pub n_dirs: usize,
    pub outcome: std::result::Result<GrowthRecord, String>,
}

#[derive(Clone, Debug)]
pub struct Sweep {
    pub resolution: usize,
    pub eps: f64,
    pub rows: Vec<SweepRow>,
}

impl Sweep {
    pub fn records(&self) -> impl Iterator<Item = &GrowthRecord> {
        self.rows.iter().filter_map(|r| r.outcome.as_ref().ok())
    }

    pub fn all_ok(&self) -> bool {
        self.rows.iter().all(|r| r.outcome.is_ok())
    }

    /// Least-squares slope of `ratio_t^2` against `ln nu` over successful rows
    /// with `nu > 1`.
    pub fn slope(&self) -> Option<f64> {
        let pts: Vec<(f64, f64)> = self
            .records()
            .filter(|r| r.nu() > 1)
            .map(|r| ((r.nu() as f64).ln(), r.ratio_t * r.ratio_t))
            .collect();
        if pts.len() < 2 {
            return None;
        }
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
        (sxx > 0.0).then(|| sxy / sxx)
    }
}

#[derive(Clone, Debug)]
pub struct SweepConfig {
    pub m_min: u32,
    pub m_max: u32,
    pub resolution: usize,
    pub build: BuildOptions,
    pub directions: DirectionKind,
    pub eval: EvalOptions,
    /// Record wall-clock time per row. Off by default, since timings differ
    /// between otherwise identical runs.
    pub timing: bool,
}

/// One record per `m`; a failing `m` is recorded and the sweep moves on.
///
/// `observe` sees each successful record together with its `T_U f`, e.g. to
/// keep a heatmap of the last one.
pub fn growth_sweep(
    cfg: &SweepConfig,
    mut observe: impl FnMut(&GrowthRecord, &RealField),
) -> Result<Sweep> {
    if cfg.m_min == 0 || cfg.m_min > cfg.m_max {
        return Err(Error::param("m", format!("empty range {}..={}", cfg.m_min, cfg.m_max)));
    }
    cfg.eval.validate()?;
    let grid = Grid::new(cfg.resolution)?;
    let mut rows = Vec::new();
    for m in cfg.m_min..=cfg.m_max {
        let n = 1usize << m;
        let start = Instant::now();
        let outcome = (|| -> Result<GrowthRecord> {
            let dirs = direction_generators(&cfg.directions, n)?;
            let (f, state) = extremal_function(&dirs, &grid, &cfg.build)?;
            let ev = evaluate_fields(&f, &state)?;
            let rec = record(&ev, &state, &cfg.eval)?;
            observe(&rec, &ev.t_max);
            Ok(rec)
        })();
        let outcome = outcome
            .map(|mut r: GrowthRecord| {
                if cfg.timing {
                    r.wall_ms = Some(start.elapsed().as_millis() as u64);
                }
                r
            })
            .map_err(|e| e.to_string());
        rows.push(SweepRow { m, n_dirs: n, outcome });
    }
    Ok(Sweep {
        resolution: cfg.resolution,
        eps: cfg.build.eps,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::AREA;
    use std::f64::consts::PI;

    #[test]
    fn uniform_examples() {
        let u = uniform_directions(4).unwrap();
        for (k, t) in u.angles().iter().enumerate() {
            assert!((t - PI * (k + 1) as f64 / 10.0).abs() < 1e-15);
        }
    }

    #[test]
    fn lacunary_gaps_halve() {
        let u = lacunary_directions(8).unwrap().angles();
        assert_eq!(u[7], FRAC_PI_4);
        for w in u.windows(3) {
            let r = (w[2] - w[1]) / (w[1] - w[0]);
            assert!((r - 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn direction_files() {
        let p = Path::new("dirs.txt");
        let ok = parse_directions("# two\n0.1\n\n0.5 # mid\n", p).unwrap();
        assert_eq!(ok.angles(), vec![0.1, 0.5]);
        assert!(parse_directions("0.2\n0.2\n", p).is_err());
        let e = parse_directions("0.2\nabc\n", p).unwrap_err();
        assert!(matches!(e, Error::Parse { line: 2, .. }));
        assert!(parse_directions("0.2\n2.0\n", p).is_err());
    }

    #[test]
    fn sector_pieces_recover_nodes() {
        let g = Grid::new(128).unwrap();
        let dirs = uniform_directions(4).unwrap();
        let (f, state) = extremal_function(&dirs, &g, &BuildOptions::default()).unwrap();
        let fields = state.fields();
        let spec = forward(&f);
        for (k, s) in state.sectors.iter().enumerate() {
            let piece = inverse(&spec.restrict(|xi, eta| s.contains(xi, eta)));
            let node = state.sigma.apply(k + 1);
            assert!(piece.relative_l2_error(&fields[node - 1]) <= 1e-8);
        }
        let sum: f64 = fields.iter().map(|h| lp_norm(h, 2.0).powi(2)).sum();
        let total = lp_norm(&f, 2.0).powi(2);
        assert!((sum - total).abs() <= 1e-8 * total);
    }

    #[test]
    fn evaluation_smallest_case() {
        let g = Grid::new(64).unwrap();
        let dirs = uniform_directions(2).unwrap();
        let (f, state) = extremal_function(&dirs, &g, &BuildOptions::default()).unwrap();
        let opts = EvalOptions {
            p_list: vec![1.0, 2.0],
            level_constant: 0.5,
        };
        let rec = evaluate(&f, &state, &opts).unwrap();
        assert!(rec.dual_gap <= DUAL_PATH_TOL);
        assert!(rec.hilbert_gap <= 1e-10);
        // a single plane wave: T_U f = |f| = 1 and H_U f = 1
        assert!((rec.ratio_t - AREA.sqrt()).abs() < 1e-9);
        assert!((rec.ratio_h(2.0).unwrap() - 1.0).abs() < 1e-9);
        assert_eq!(rec.ratio_over_sqrtlog, None);
    }

    #[test]
    fn sweep_records_failures_and_continues() {
        let cfg = SweepConfig {
            m_min: 1,
            m_max: 4,
            resolution: 64,
            build: BuildOptions::default(),
            directions: DirectionKind::Uniform,
            eval: EvalOptions {
                p_list: vec![2.0],
                level_constant: 1.0,
            },
            timing: false,
        };
        let mut seen = 0;
        let sweep = growth_sweep(&cfg, |_, _| seen += 1).unwrap();
        assert_eq!(sweep.rows.len(), 4);
        assert!(sweep.rows[0].outcome.is_ok());
        // depth 4 does not fit a 64-grid
        assert!(sweep.rows[3].outcome.is_err());
        assert_eq!(seen, sweep.records().count());
        let bad = SweepConfig {
            m_min: 3,
            m_max: 2,
            ..cfg
        };
        assert!(growth_sweep(&bad, |_, _| {}).is_err());
    }
}
