//! Batch commands behind the `sector-hilbert` binary.
//!
//! Every run is fixed by a [`RunConfig`], read from a flat `key = value` file
//! and overridden by flags. Outputs are written atomically into the output
//! directory:
//!
//! * `construct`: `state.txt` and `certify.csv`
//! * `growth`: `growth.csv`, plus `growth.svg` and `heatmap.png` with `--plot`
//! * `selftest`: `selftest.csv`
//!
//! CSV files start with the line `# sector-hilbert v<version>` followed by a
//! fixed header. Floats are printed in shortest round-trip form, so identical
//! configurations give byte-identical files.
//!
//! `state.txt` layout, one item per line:
//!
//! ```text
//! # sector-hilbert v0.1.0
//! m <m>
//! resolution <R>
//! eps <eps>
//! theta <theta_1> ... <theta_N>
//! nodes <nu>
//! <n> <k> <j> <p> <q> <l> <eps_achieved>      (nu records)
//! array mask <n> <R> <R>                       (then R rows of R digits 0/1)
//! array g <n> <R> <R>                          (then R rows of R floats)
//! ```
//!
//! Arrays are row-major with the `x` index slow; floats carry 17 significant
//! digits.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::fs;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::construction::{assemble, build, certify, default_kernel, BuildOptions, CertifyReport, ConstructionState, StoredNode};
use crate::error::{Error, Result};
use crate::experiment::{
    direction_generators, evaluate_fields, growth_sweep, DirectionKind, EvalOptions, Sweep, SweepConfig,
    CALIBRATED_C3, DUAL_PATH_TOL,
};
use crate::grid::{forward, inverse, lp_norm, Grid, GridField, Mask, RealField, SpectralField, AREA};
use crate::spectral::{directional_hilbert, pv_quadrature_hilbert, Direction, DirectionSet, PvQuadrature};
use crate::tree::{
    haar_system, maximal_partial_sum, random_tree_system, sorting_permutation, split_index, verify_tree_system,
    TreeSystem,
};

pub const VERSION_LINE: &str = concat!("# sector-hilbert v", env!("CARGO_PKG_VERSION"));

/// Environment variable capping the worker threads.
pub const THREADS_VAR: &str = "SECTOR_HILBERT_THREADS";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Construct,
    Growth,
    Selftest,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Construct => "construct",
            Command::Growth => "growth",
            Command::Selftest => "selftest",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub command: Command,
    pub m: u32,
    pub m_min: u32,
    pub m_max: u32,
    pub resolution: usize,
    /// In units of `sqrt|Q|`.
    pub eps: f64,
    pub directions: DirectionKind,
    pub p_list: Vec<f64>,
    pub out: PathBuf,
    /// Seeds the synthetic data of `selftest`; the construction itself is
    /// deterministic.
    pub seed: u64,
    pub plot: bool,
    pub timing: bool,
    pub c3: f64,
    pub max_harmonic: u32,
    pub margin: f64,
    /// Random tree-systems in the selftest one-third-bound suite.
    pub cases: usize,
}

impl RunConfig {
    pub fn new(command: Command) -> Self {
        let build = BuildOptions::default();
        RunConfig {
            command,
            m: 3,
            m_min: 2,
            m_max: 6,
            resolution: 512,
            eps: build.eps,
            directions: DirectionKind::Uniform,
            p_list: vec![1.0, 2.0],
            out: PathBuf::from("."),
            seed: 0,
            plot: false,
            timing: false,
            c3: CALIBRATED_C3,
            max_harmonic: build.max_harmonic,
            margin: build.margin,
            cases: 100,
        }
    }

    pub fn build_options(&self) -> BuildOptions {
        BuildOptions {
            eps: self.eps,
            max_harmonic: self.max_harmonic,
            margin: self.margin,
        }
    }

    /// Applies `key = value` lines; `#` starts a comment.
    pub fn apply_file(&mut self, text: &str, path: &Path) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let fail = |reason: String| Error::Parse {
                path: path.to_owned(),
                line: i + 1,
                reason,
            };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| fail(format!("expected `key = value`, got `{line}`")))?;
            self.set(key.trim(), value.trim()).map_err(|e| fail(e.to_string()))?;
        }
        Ok(())
    }

    fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: std::str::FromStr>(key: &'static str, v: &str) -> Result<T> {
            v.parse().map_err(|_| Error::param(key, format!("cannot parse `{v}`")))
        }
        fn flag(key: &'static str, v: &str) -> Result<bool> {
            match v {
                "true" | "yes" | "1" | "on" => Ok(true),
                "false" | "no" | "0" | "off" => Ok(false),
                _ => Err(Error::param(key, format!("`{v}` is not a boolean"))),
            }
        }
        match key {
            "command" => {
                if value != self.command.name() {
                    return Err(Error::param(
                        "command",
                        format!("file is for `{value}`, running `{}`", self.command.name()),
                    ));
                }
            }
            "m" => self.m = num("m", value)?,
            "m_min" => self.m_min = num("m_min", value)?,
            "m_max" => self.m_max = num("m_max", value)?,
            "grid" => self.resolution = num("grid", value)?,
            "eps" => self.eps = num("eps", value)?,
            "directions" => self.directions = parse_kind(value),
            "p" => self.p_list = parse_p_list(value)?,
            "out" => self.out = PathBuf::from(value),
            "seed" => self.seed = num("seed", value)?,
            "plot" => self.plot = flag("plot", value)?,
            "timing" => self.timing = flag("timing", value)?,
            "c3" => self.c3 = num("c3", value)?,
            "max_harmonic" => self.max_harmonic = num("max_harmonic", value)?,
            "margin" => self.margin = num("margin", value)?,
            "cases" => self.cases = num("cases", value)?,
            other => return Err(Error::param("config", format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    /// Checks everything that can be checked before computing.
    pub fn validate(&self) -> Result<()> {
        Grid::new(self.resolution)?;
        let depth_ok = |m: u32| (1..=crate::tree::MAX_DEPTH).contains(&m);
        match self.command {
            Command::Construct => {
                if !depth_ok(self.m) {
                    return Err(Error::param("m", format!("{} is not in 1..={}", self.m, crate::tree::MAX_DEPTH)));
                }
            }
            Command::Growth => {
                if !depth_ok(self.m_min) || !depth_ok(self.m_max) || self.m_min > self.m_max {
                    return Err(Error::param(
                        "m",
                        format!("empty or invalid range {}..={}", self.m_min, self.m_max),
                    ));
                }
            }
            Command::Selftest => {}
        }
        self.build_options().validate()?;
        if self.p_list.is_empty() {
            return Err(Error::param("p", "list is empty"));
        }
        if let Some(p) = self.p_list.iter().find(|p| !(**p >= 1.0 && p.is_finite())) {
            return Err(Error::param("p", format!("{p} is not in [1, inf)")));
        }
        if !(self.c3 >= 0.0 && self.c3.is_finite()) {
            return Err(Error::param("c3", "must be finite and nonnegative"));
        }
        if !(self.margin >= 0.0 && self.margin.is_finite()) {
            return Err(Error::param("margin", "must be finite and nonnegative"));
        }
        if let DirectionKind::File(p) = &self.directions {
            if !p.is_file() {
                return Err(Error::param("directions", format!("{} is not a file", p.display())));
            }
        }
        Ok(())
    }
}

fn parse_kind(v: &str) -> DirectionKind {
    match v {
        "uniform" => DirectionKind::Uniform,
        "lacunary" => DirectionKind::Lacunary,
        path => DirectionKind::File(PathBuf::from(path)),
    }
}

fn parse_p_list(v: &str) -> Result<Vec<f64>> {
    v.split(',')
        .map(|s| s.trim().parse::<f64>().map_err(|_| Error::param("p", format!("cannot parse `{s}`"))))
        .collect()
}

#[derive(Debug, Parser)]
#[command(name = "sector-hilbert", version, about = "Extremal functions for maximal directional Hilbert transforms")]
pub struct Cli {
    #[command(subcommand)]
    pub command: CliCommand,
}

#[derive(Debug, Subcommand)]
pub enum CliCommand {
    /// Build and certify the extremal tree for one depth
    Construct(Flags),
    /// Sweep the depth and tabulate the growth of the maximal operators
    Growth(Flags),
    /// Run the invariant suites
    Selftest(Flags),
}

#[derive(Debug, Default, Args)]
pub struct Flags {
    /// Flat `key = value` config file; flags override it
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Tree depth, N = 2^m directions
    #[arg(long)]
    pub m: Option<u32>,
    #[arg(long = "m-min")]
    pub m_min: Option<u32>,
    #[arg(long = "m-max")]
    pub m_max: Option<u32>,
    /// Grid resolution R, a power of two
    #[arg(long)]
    pub grid: Option<usize>,
    /// Per-node smoothing tolerance, in units of sqrt|Q|
    #[arg(long)]
    pub eps: Option<f64>,
    /// `uniform`, `lacunary`, or a file of angles
    #[arg(long)]
    pub directions: Option<String>,
    /// Exponents for the H_U ratios, comma separated
    #[arg(long, value_delimiter = ',')]
    pub p: Option<Vec<f64>>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Write growth.svg and heatmap.png
    #[arg(long, overrides_with = "no_plot")]
    pub plot: bool,
    #[arg(long = "no-plot")]
    pub no_plot: bool,
    /// Fill the wall_ms column (makes growth.csv run-dependent)
    #[arg(long)]
    pub timing: bool,
    #[arg(long)]
    pub c3: Option<f64>,
    #[arg(long = "max-harmonic")]
    pub max_harmonic: Option<u32>,
    #[arg(long)]
    pub margin: Option<f64>,
    #[arg(long)]
    pub cases: Option<usize>,
}

impl Flags {
    pub fn into_config(self, command: Command) -> Result<RunConfig> {
        let mut cfg = RunConfig::new(command);
        if let Some(path) = &self.config {
            let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            cfg.apply_file(&text, path)?;
        }
        macro_rules! over {
            ($($field:ident => $target:ident),*) => {
                $(if let Some(v) = self.$field { cfg.$target = v; })*
            };
        }
        over!(m => m, m_min => m_min, m_max => m_max, grid => resolution, eps => eps, p => p_list,
              out => out, seed => seed, c3 => c3, max_harmonic => max_harmonic, margin => margin, cases => cases);
        if let Some(d) = &self.directions {
            cfg.directions = parse_kind(d);
        }
        if self.plot {
            cfg.plot = true;
        }
        if self.no_plot {
            cfg.plot = false;
        }
        if self.timing {
            cfg.timing = true;
        }
        Ok(cfg)
    }
}

/// Writes `path` through a temporary file in the same directory.
pub fn write_atomic(path: &Path, fill: impl FnOnce(&mut dyn Write) -> io::Result<()>) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    {
        let mut w = BufWriter::new(tmp.as_file());
        fill(&mut w).map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))?;
    }
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        tmp.as_file()
            .set_permissions(fs::Permissions::from_mode(0o644))
            .map_err(|e| Error::io(path, e))?;
    }
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

/// Shortest round-trip form, in exponent notation for very small or large values.
fn num(v: f64) -> String {
    if !v.is_finite() {
        String::new()
    } else if v != 0.0 && !(1e-4..1e15).contains(&v.abs()) {
        format!("{v:e}")
    } else {
        format!("{v}")
    }
}

pub fn write_state(path: &Path, state: &ConstructionState) -> Result<()> {
    let r = state.grid.resolution();
    write_atomic(path, |w| {
        writeln!(w, "{VERSION_LINE}")?;
        writeln!(w, "m {}", state.m)?;
        writeln!(w, "resolution {r}")?;
        writeln!(w, "eps {:e}", state.eps)?;
        write!(w, "theta")?;
        for t in state.directions.angles() {
            write!(w, " {t:.16e}")?;
        }
        writeln!(w)?;
        writeln!(w, "nodes {}", state.nodes.len())?;
        for n in &state.nodes {
            writeln!(
                w,
                "{} {} {} {} {} {} {:.16e}",
                n.index,
                n.index.level(),
                n.index.position(),
                n.p,
                n.q,
                n.radius,
                n.eps_achieved
            )?;
        }
        let mut line = String::with_capacity(r * 24);
        for n in &state.nodes {
            writeln!(w, "array mask {} {r} {r}", n.index)?;
            for row in n.mask.bits().chunks(r) {
                line.clear();
                line.extend(row.iter().map(|&b| if b { '1' } else { '0' }));
                writeln!(w, "{line}")?;
            }
            writeln!(w, "array g {} {r} {r}", n.index)?;
            for row in n.g.values().chunks(r) {
                line.clear();
                for (i, v) in row.iter().enumerate() {
                    if i > 0 {
                        line.push(' ');
                    }
                    let _ = write!(line, "{v:.16e}");
                }
                writeln!(w, "{line}")?;
            }
        }
        Ok(())
    })
}

struct LineReader<'a> {
    path: &'a Path,
    lines: std::iter::Enumerate<io::Lines<BufReader<fs::File>>>,
    line: usize,
}

impl LineReader<'_> {
    fn fail(&self, reason: impl Into<String>) -> Error {
        Error::Parse {
            path: self.path.to_owned(),
            line: self.line,
            reason: reason.into(),
        }
    }

    fn next(&mut self) -> Result<String> {
        match self.lines.next() {
            Some((i, Ok(l))) => {
                self.line = i + 1;
                Ok(l)
            }
            Some((_, Err(e))) => Err(Error::io(self.path, e)),
            None => Err(self.fail("unexpected end of file")),
        }
    }

    fn keyed(&mut self, key: &str) -> Result<Vec<String>> {
        let l = self.next()?;
        let mut it = l.split_whitespace();
        if it.next() != Some(key) {
            return Err(self.fail(format!("expected `{key}`")));
        }
        Ok(it.map(str::to_owned).collect())
    }

    fn parse<T: std::str::FromStr>(&self, s: &str) -> Result<T> {
        s.parse().map_err(|_| self.fail(format!("cannot parse `{s}`")))
    }
}

pub fn read_state(path: &Path) -> Result<ConstructionState> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rd = LineReader {
        path,
        lines: BufReader::new(file).lines().enumerate(),
        line: 0,
    };
    let head = rd.next()?;
    if !head.starts_with("# sector-hilbert v") {
        return Err(rd.fail("missing version line"));
    }
    let one = |rd: &mut LineReader, key: &str| -> Result<String> {
        let v = rd.keyed(key)?;
        v.into_iter().next().ok_or_else(|| rd.fail(format!("`{key}` needs a value")))
    };
    let m: u32 = {
        let s = one(&mut rd, "m")?;
        rd.parse(&s)?
    };
    let r: usize = {
        let s = one(&mut rd, "resolution")?;
        rd.parse(&s)?
    };
    let eps: f64 = {
        let s = one(&mut rd, "eps")?;
        rd.parse(&s)?
    };
    let theta = rd.keyed("theta")?;
    let theta = theta.iter().map(|s| rd.parse::<f64>(s)).collect::<Result<Vec<_>>>()?;
    let directions = DirectionSet::from_angles(&theta)?;
    if directions.depth() != Some(m) {
        return Err(rd.fail(format!("{} directions do not match m = {m}", theta.len())));
    }
    let count: usize = {
        let s = one(&mut rd, "nodes")?;
        rd.parse(&s)?
    };
    let grid = Grid::new(r)?;
    let mut records = Vec::with_capacity(count);
    for n in 1..=count {
        let l = rd.next()?;
        let f: Vec<&str> = l.split_whitespace().collect();
        if f.len() != 7 || rd.parse::<usize>(f[0])? != n {
            return Err(rd.fail(format!("expected record `n k j p q l eps_achieved` for node {n}")));
        }
        records.push((rd.parse::<i64>(f[3])?, rd.parse::<i64>(f[4])?, rd.parse::<i64>(f[5])?, rd.parse::<f64>(f[6])?));
    }
    let mut nodes = Vec::with_capacity(count);
    for (n, (p, q, radius, eps_achieved)) in records.into_iter().enumerate() {
        let header = |kind: &str| vec![kind.to_owned(), (n + 1).to_string(), r.to_string(), r.to_string()];
        if rd.keyed("array")? != header("mask") {
            return Err(rd.fail(format!("expected mask array of node {}", n + 1)));
        }
        let mut bits = Vec::with_capacity(r * r);
        for _ in 0..r {
            let l = rd.next()?;
            if l.len() != r {
                return Err(rd.fail("mask row has the wrong length"));
            }
            for c in l.bytes() {
                match c {
                    b'0' => bits.push(false),
                    b'1' => bits.push(true),
                    _ => return Err(rd.fail("mask rows hold only 0 and 1")),
                }
            }
        }
        if rd.keyed("array")? != header("g") {
            return Err(rd.fail(format!("expected g array of node {}", n + 1)));
        }
        let mut values = Vec::with_capacity(r * r);
        for _ in 0..r {
            let l = rd.next()?;
            let before = values.len();
            for s in l.split_whitespace() {
                values.push(rd.parse::<f64>(s)?);
            }
            if values.len() - before != r {
                return Err(rd.fail("g row has the wrong length"));
            }
        }
        nodes.push(StoredNode {
            p,
            q,
            radius,
            eps_achieved,
            mask: Mask::new(&grid, bits)?,
            g: RealField::new(&grid, values)?,
        });
    }
    assemble(directions, &grid, eps, nodes)
}

pub const CERTIFY_HEADER: &str = "check_id,node,value,bound,pass";

pub fn write_certify(path: &Path, report: &CertifyReport) -> Result<()> {
    write_atomic(path, |w| {
        writeln!(w, "{VERSION_LINE}")?;
        writeln!(w, "{CERTIFY_HEADER}")?;
        for r in &report.rows {
            writeln!(w, "{},{},{},{},{}", r.check, r.node, num(r.value), num(r.bound), r.pass)?;
        }
        Ok(())
    })
}

fn failing_node(e: &Error) -> usize {
    match e {
        Error::Node { node, .. } | Error::FrequencyBudget { node, .. } => *node,
        _ => 0,
    }
}

/// Returns `true` when every certificate row passes.
pub fn cmd_construct(cfg: &RunConfig) -> Result<bool> {
    cfg.validate()?;
    fs::create_dir_all(&cfg.out).map_err(|e| Error::io(&cfg.out, e))?;
    let grid = Grid::new(cfg.resolution)?;
    let dirs = direction_generators(&cfg.directions, 1 << cfg.m)?;
    let certify_path = cfg.out.join("certify.csv");
    match build(&dirs, &grid, &cfg.build_options(), &default_kernel()) {
        Ok(state) => {
            write_state(&cfg.out.join("state.txt"), &state)?;
            let report = certify(&state);
            write_certify(&certify_path, &report)?;
            for r in report.failures() {
                eprintln!("certify: {} failed at node {} ({} vs {})", r.check, r.node, r.value, r.bound);
            }
            Ok(report.pass())
        }
        Err(e) => {
            write_atomic(&certify_path, |w| {
                writeln!(w, "{VERSION_LINE}")?;
                writeln!(w, "{CERTIFY_HEADER}")?;
                writeln!(w, "build,{},,,false", failing_node(&e))
            })?;
            eprintln!("construction failed: {e}");
            Ok(false)
        }
    }
}

pub fn growth_header(p_list: &[f64]) -> String {
    let mut h = String::from("m,N,R,eps,ratio_T");
    for p in p_list {
        let _ = write!(h, ",ratio_H_{p}");
    }
    h.push_str(",ratio_over_sqrtlog,level_measure,wall_ms,status");
    h
}

pub fn write_growth(path: &Path, sweep: &Sweep, p_list: &[f64]) -> Result<()> {
    write_atomic(path, |w| {
        writeln!(w, "{VERSION_LINE}")?;
        writeln!(w, "{}", growth_header(p_list))?;
        for row in &sweep.rows {
            match &row.outcome {
                Ok(r) => {
                    write!(w, "{},{},{},{},{}", r.m, r.n_dirs, r.resolution, num(r.eps), num(r.ratio_t))?;
                    for &p in p_list {
                        write!(w, ",{}", r.ratio_h(p).map_or(String::new(), num))?;
                    }
                    writeln!(
                        w,
                        ",{},{},{},ok",
                        r.ratio_over_sqrtlog.map_or(String::new(), num),
                        num(r.level_measure),
                        r.wall_ms.map_or(String::new(), |v| v.to_string())
                    )?;
                }
                Err(_) => {
                    write!(w, "{},{},{},{},", row.m, row.n_dirs, sweep.resolution, num(sweep.eps))?;
                    for _ in p_list {
                        write!(w, ",")?;
                    }
                    writeln!(w, ",,,,failed")?;
                }
            }
        }
        if let Some(s) = sweep.slope() {
            writeln!(w, "# slope of ratio_T^2 against ln(nu): {}", num(s))?;
        }
        Ok(())
    })
}

/// Scatter of `ratio_T` against `sqrt(ln nu)` with the least-squares line.
pub fn growth_svg(sweep: &Sweep) -> String {
    let pts: Vec<(f64, f64)> = sweep
        .records()
        .filter(|r| r.nu() > 1)
        .map(|r| (((r.nu()) as f64).ln().sqrt(), r.ratio_t))
        .collect();
    let (w, h, pad) = (480.0, 320.0, 48.0);
    let xmax = pts.iter().map(|p| p.0).fold(1.0, f64::max) * 1.1;
    let ymax = pts.iter().map(|p| p.1).fold(1.0, f64::max) * 1.1;
    let sx = |x: f64| pad + x / xmax * (w - 2.0 * pad);
    let sy = |y: f64| h - pad - y / ymax * (h - 2.0 * pad);
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#);
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<path d="M{:.2} {:.2} L{:.2} {:.2} L{:.2} {:.2}" stroke="black" fill="none"/>"#,
        sx(0.0),
        sy(ymax),
        sx(0.0),
        sy(0.0),
        sx(xmax),
        sy(0.0)
    );
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" font-size="12" text-anchor="middle">sqrt(ln nu)</text>"#,
        w / 2.0,
        h - 12.0
    );
    let _ = writeln!(
        s,
        r#"<text x="14" y="{:.2}" font-size="12" text-anchor="middle" transform="rotate(-90 14 {:.2})">ratio_T</text>"#,
        h / 2.0,
        h / 2.0
    );
    if pts.len() >= 2 {
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        if sxx > 0.0 {
            let b = sxy / sxx;
            let a = my - b * mx;
            let _ = writeln!(
                s,
                r##"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="#c33"/>"##,
                sx(0.0),
                sy(a),
                sx(xmax),
                sy(a + b * xmax)
            );
        }
    }
    for (x, y) in &pts {
        let _ = writeln!(s, r##"<circle cx="{:.2}" cy="{:.2}" r="4" fill="#236"/>"##, sx(*x), sy(*y));
    }
    s.push_str("</svg>\n");
    s
}

fn colormap(t: f64) -> [u8; 3] {
    const STOPS: [[f64; 3]; 4] = [[0.07, 0.03, 0.25], [0.23, 0.32, 0.55], [0.13, 0.66, 0.52], [0.99, 0.91, 0.14]];
    let t = t.clamp(0.0, 1.0) * 3.0;
    let i = (t.floor() as usize).min(2);
    let f = t - i as f64;
    let mut c = [0u8; 3];
    for k in 0..3 {
        c[k] = ((STOPS[i][k] * (1.0 - f) + STOPS[i + 1][k] * f) * 255.0).round() as u8;
    }
    c
}

/// PNG of a nonnegative field, `x` to the right and `y` up, at most 512 pixels a side.
pub fn heatmap_png(field: &RealField) -> Result<Vec<u8>> {
    use image::ImageEncoder;
    let r = field.grid().resolution();
    let step = (r / 512).max(1);
    let side = r / step;
    let max = field.max().max(f64::MIN_POSITIVE);
    let mut raw = Vec::with_capacity(side * side * 3);
    for row in 0..side {
        let b = (side - 1 - row) * step;
        for col in 0..side {
            let a = col * step;
            raw.extend_from_slice(&colormap(field.values()[a * r + b] / max));
        }
    }
    let mut out = Vec::new();
    image::codecs::png::PngEncoder::new(&mut out)
        .write_image(&raw, side as u32, side as u32, image::ColorType::Rgb8)
        .map_err(|e| Error::Image(e.to_string()))?;
    Ok(out)
}

/// Returns `true` when every row of the sweep succeeded.
pub fn cmd_growth(cfg: &RunConfig) -> Result<bool> {
    cfg.validate()?;
    fs::create_dir_all(&cfg.out).map_err(|e| Error::io(&cfg.out, e))?;
    let sweep_cfg = SweepConfig {
        m_min: cfg.m_min,
        m_max: cfg.m_max,
        resolution: cfg.resolution,
        build: cfg.build_options(),
        directions: cfg.directions.clone(),
        eval: EvalOptions {
            p_list: cfg.p_list.clone(),
            level_constant: cfg.c3,
        },
        timing: cfg.timing,
    };
    let mut last: Option<RealField> = None;
    let sweep = growth_sweep(&sweep_cfg, |_, t| {
        if cfg.plot {
            last = Some(t.clone());
        }
    })?;
    for row in &sweep.rows {
        if let Err(e) = &row.outcome {
            eprintln!("m = {}: {e}", row.m);
        }
    }
    write_growth(&cfg.out.join("growth.csv"), &sweep, &cfg.p_list)?;
    if cfg.plot {
        let svg = growth_svg(&sweep);
        write_atomic(&cfg.out.join("growth.svg"), |w| w.write_all(svg.as_bytes()))?;
        if let Some(t) = &last {
            let png = heatmap_png(t)?;
            write_atomic(&cfg.out.join("heatmap.png"), |w| w.write_all(&png))?;
        }
    }
    Ok(sweep.all_ok())
}

/// Operators the selftest checks; swapping one in is how fault injection works.
#[derive(Clone, Copy)]
pub struct SelftestHooks {
    pub hilbert: fn(&GridField, Direction) -> GridField,
}

impl Default for SelftestHooks {
    fn default() -> Self {
        SelftestHooks {
            hilbert: directional_hilbert,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SuiteResult {
    pub suite: &'static str,
    pub cases: usize,
    pub failures: usize,
    pub max_error: f64,
}

impl SuiteResult {
    pub fn pass(&self) -> bool {
        self.failures == 0
    }
}

fn suite(name: &'static str, results: impl IntoIterator<Item = (bool, f64)>) -> SuiteResult {
    let mut s = SuiteResult {
        suite: name,
        cases: 0,
        failures: 0,
        max_error: 0.0,
    };
    for (ok, err) in results {
        s.cases += 1;
        s.failures += usize::from(!ok);
        s.max_error = s.max_error.max(err);
    }
    s
}

fn random_field(grid: &Grid, rng: &mut ChaCha8Rng) -> GridField {
    let v = (0..grid.len())
        .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
        .collect();
    GridField::new(grid, v).expect("finite")
}

/// Band-limited field with no mass near the critical line of `u`.
pub fn band_limited(grid: &Grid, band: i64, u: Direction, rng: &mut impl Rng) -> GridField {
    let side = (2 * band + 1) as usize;
    let coeffs: Vec<Complex64> = (0..side * side)
        .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
        .collect();
    let spec = SpectralField::from_fn(grid, |xi, eta| {
        if xi.abs() > band || eta.abs() > band || u.dot(xi, eta).abs() < 0.5 {
            return Complex64::default();
        }
        coeffs[(xi + band) as usize * side + (eta + band) as usize]
    });
    inverse(&spec)
}

pub fn selftest(cfg: &RunConfig, hooks: &SelftestHooks) -> Result<Vec<SuiteResult>> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let g64 = Grid::new(64)?;
    let mut out = Vec::new();

    out.push(suite(
        "parseval",
        (0..20).map(|_| {
            let f = random_field(&g64, &mut rng);
            let s = forward(&f);
            let lhs = lp_norm(&f, 2.0).powi(2);
            let rhs = AREA * s.energy();
            let e = ((lhs - rhs) / lhs).abs().max(inverse(&s).relative_l2_error(&f));
            (e <= 1e-10, e)
        }),
    ));

    out.push(suite(
        "eigenrelation",
        (0..50).map(|_| {
            let p = rng.gen_range(-31..32);
            let q = rng.gen_range(-31..32);
            let u = Direction::new(rng.gen_range(0.0..2.0 * PI));
            let f = GridField::plane_wave(&g64, p, q);
            let expect = f.scale(Complex64::new(0.0, u.sign(p, q)));
            let e = (hooks.hilbert)(&f, u).max_abs_diff(&expect);
            (e <= 1e-10, e)
        }),
    ));

    out.push(suite(
        "oracle",
        (0..2).map(|_| {
            let u = Direction::new(rng.gen_range(0.0..2.0 * PI));
            let f = band_limited(&g64, 8, u, &mut rng);
            let e = match pv_quadrature_hilbert(&f, u, &PvQuadrature::default()) {
                Ok(o) => (hooks.hilbert)(&f, u).relative_l2_error(&o),
                Err(_) => f64::INFINITY,
            };
            (e <= 1e-3, e)
        }),
    ));

    let fixtures: [(u32, &[usize]); 3] = [(1, &[1]), (2, &[2, 1, 3]), (3, &[4, 2, 5, 1, 6, 3, 7])];
    out.push(suite(
        "permutation",
        fixtures.iter().map(|&(m, want)| {
            let ok = sorting_permutation(m).map(|s| s.as_slice() == want).unwrap_or(false);
            (ok, if ok { 0.0 } else { 1.0 })
        }),
    ));

    let haar = haar_system(&g64, 3)?;
    let mut broken = haar.fields().to_vec();
    broken[4] = broken[5].clone();
    let broken = TreeSystem::new(3, broken)?;
    out.push(suite(
        "tree_verify",
        [
            verify_tree_system(&haar, 0.0).pass(),
            !verify_tree_system(&broken, 0.0).pass(),
        ]
        .map(|ok| (ok, if ok { 0.0 } else { 1.0 })),
    ));

    out.push(suite(
        "third_bound",
        (0..cfg.cases).map(|_| {
            let m = rng.gen_range(1..=6);
            let t = random_tree_system(&g64, m, 4, rng.gen()).expect("valid sizes");
            let s = sorting_permutation(m).expect("valid depth");
            let best = maximal_partial_sum(t.fields(), &s).expect("sizes match");
            let mut violations = 0usize;
            let mut worst = 0.0f64;
            for i in 0..g64.len() {
                let total: f64 = t.fields().iter().map(|f| f.values()[i].abs()).sum();
                let deficit = total - 3.0 * best.values()[i];
                if deficit > 0.0 {
                    violations += 1;
                    worst = worst.max(deficit);
                }
                let l = split_index(t.fields(), &s, i).expect("sizes match");
                let split_ok = (1..=s.len()).all(|k| {
                    let v = t.fields()[s.apply(k) - 1].values()[i];
                    if k <= l {
                        v <= 0.0
                    } else {
                        v >= 0.0
                    }
                });
                violations += usize::from(!split_ok);
            }
            (violations == 0, worst)
        }),
    ));

    let g128 = Grid::new(128)?;
    let dirs = crate::experiment::uniform_directions(4)?;
    let dual = match crate::experiment::extremal_function(&dirs, &g128, &BuildOptions::default()) {
        Ok((f, state)) => match evaluate_fields(&f, &state) {
            Ok(ev) => (ev.dual_gap <= DUAL_PATH_TOL && ev.hilbert_gap <= 1e-10, ev.dual_gap.max(ev.hilbert_gap)),
            Err(_) => (false, f64::INFINITY),
        },
        Err(_) => (false, f64::INFINITY),
    };
    out.push(suite("dual_path", [dual]));
    Ok(out)
}

pub const SELFTEST_HEADER: &str = "suite,cases,failures,max_error,pass";

/// Returns `true` when every suite passes.
pub fn cmd_selftest(cfg: &RunConfig, hooks: &SelftestHooks) -> Result<bool> {
    cfg.validate()?;
    fs::create_dir_all(&cfg.out).map_err(|e| Error::io(&cfg.out, e))?;
    let results = selftest(cfg, hooks)?;
    write_atomic(&cfg.out.join("selftest.csv"), |w| {
        writeln!(w, "{VERSION_LINE}")?;
        writeln!(w, "{SELFTEST_HEADER}")?;
        for s in &results {
            writeln!(w, "{},{},{},{},{}", s.suite, s.cases, s.failures, num(s.max_error), s.pass())?;
        }
        Ok(())
    })?;
    for s in results.iter().filter(|s| !s.pass()) {
        eprintln!("selftest: {} failed {} of {} cases", s.suite, s.failures, s.cases);
    }
    Ok(results.iter().all(SuiteResult::pass))
}

fn configure_threads() -> Result<()> {
    if let Ok(v) = std::env::var(THREADS_VAR) {
        let n: usize = v
            .trim()
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| Error::param("threads", format!("{THREADS_VAR}=`{v}` is not a positive integer")))?;
        // a pool may already exist when called twice in one process; keep it
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

fn is_usage(e: &Error) -> bool {
    matches!(
        e,
        Error::InvalidResolution(_)
            | Error::InvalidParameter { .. }
            | Error::InvalidDirections(_)
            | Error::Parse { .. }
    )
}

/// Parses arguments, runs the command, and returns the exit code:
/// 0 on success, 1 when a check or sweep row fails or a run errors,
/// 2 on usage and configuration errors.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let (command, flags) = match cli.command {
        CliCommand::Construct(f) => (Command::Construct, f),
        CliCommand::Growth(f) => (Command::Growth, f),
        CliCommand::Selftest(f) => (Command::Selftest, f),
    };
    let result = configure_threads().and_then(|_| flags.into_config(command)).and_then(|cfg| {
        cfg.validate()?;
        match command {
            Command::Construct => cmd_construct(&cfg),
            Command::Growth => cmd_growth(&cfg),
            Command::Selftest => cmd_selftest(&cfg, &SelftestHooks::default()),
        }
    });
    match result {
        Ok(true) => 0,
        Ok(false) => 1,
        Err(e) => {
            eprintln!("error: {e}");
            if is_usage(&e) {
                2
            } else {
                1
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_file_and_overrides() {
        let mut cfg = RunConfig::new(Command::Growth);
        let text = "# sweep\nm_min = 2\nm_max = 4 # inclusive\ngrid = 256\np = 1, 1.5,2\nplot = true\n";
        cfg.apply_file(text, Path::new("run.cfg")).unwrap();
        assert_eq!((cfg.m_min, cfg.m_max, cfg.resolution), (2, 4, 256));
        assert_eq!(cfg.p_list, vec![1.0, 1.5, 2.0]);
        assert!(cfg.plot);
        let e = cfg.apply_file("grid 12\n", Path::new("run.cfg")).unwrap_err();
        assert!(matches!(e, Error::Parse { line: 1, .. }));
        assert!(cfg.apply_file("colour = red\n", Path::new("run.cfg")).is_err());
        assert!(cfg.apply_file("command = construct\n", Path::new("run.cfg")).is_err());
    }

    #[test]
    fn validation() {
        let mut cfg = RunConfig::new(Command::Construct);
        assert!(cfg.validate().is_ok());
        cfg.m = 0;
        assert!(cfg.validate().is_err());
        cfg.m = 3;
        cfg.resolution = 48;
        assert!(matches!(cfg.validate(), Err(Error::InvalidResolution(48))));
        let mut g = RunConfig::new(Command::Growth);
        g.m_min = 5;
        g.m_max = 4;
        assert!(g.validate().is_err());
    }

    #[test]
    fn growth_header_lists_exponents() {
        assert_eq!(
            growth_header(&[1.0, 1.5, 2.0]),
            "m,N,R,eps,ratio_T,ratio_H_1,ratio_H_1.5,ratio_H_2,ratio_over_sqrtlog,level_measure,wall_ms,status"
        );
    }

    #[test]
    fn colormap_endpoints() {
        assert_eq!(colormap(0.0), [18, 8, 64]);
        assert_eq!(colormap(1.0), [252, 232, 36]);
        assert_eq!(colormap(2.0), colormap(1.0));
    }

    #[test]
    fn state_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let grid = Grid::new(64).unwrap();
        let dirs = crate::experiment::uniform_directions(4).unwrap();
        let state = build(&dirs, &grid, &BuildOptions::default(), &default_kernel()).unwrap();
        let path = dir.path().join("state.txt");
        write_state(&path, &state).unwrap();
        let back = read_state(&path).unwrap();
        assert_eq!(back.m, 2);
        for (a, b) in state.nodes.iter().zip(&back.nodes) {
            assert_eq!((a.p, a.q, a.radius, a.sector), (b.p, b.q, b.radius, b.sector));
            assert_eq!(a.mask, b.mask);
            assert_eq!(a.g, b.g);
            assert_eq!(a.eps_achieved, b.eps_achieved);
        }
        assert_eq!(certify(&state), certify(&back));
    }

    #[test]
    fn corrupt_state_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("state.txt");
        fs::write(&path, "# sector-hilbert v0.1.0\nm 1\nresolution 8\neps 0.02\ntheta 0.1 0.2\nnodes 1\n1 0 1 3 -4 0 0\narray mask 1 8 8\n0101\n").unwrap();
        let e = read_state(&path).unwrap_err();
        assert!(matches!(e, Error::Parse { line: 9, .. }), "{e}");
    }

    #[test]
    fn selftest_passes_and_catches_sign_flip() {
        let mut cfg = RunConfig::new(Command::Selftest);
        cfg.cases = 10;
        let ok = selftest(&cfg, &SelftestHooks::default()).unwrap();
        assert!(ok.iter().all(SuiteResult::pass), "{ok:?}");
        let oracle = ok.iter().find(|s| s.suite == "oracle").unwrap();
        assert!(oracle.max_error > 0.0 && oracle.max_error < 1e-3);
        fn flipped(f: &GridField, u: Direction) -> GridField {
            directional_hilbert(f, u).scale(Complex64::new(-1.0, 0.0))
        }
        let bad = selftest(&cfg, &SelftestHooks { hilbert: flipped }).unwrap();
        let eig = bad.iter().find(|s| s.suite == "eigenrelation").unwrap();
        assert!(!eig.pass());
    }
}
