//! Binary tree-systems.
//!
//! Nodes use the flat index `n = 2^k + j - 1` (level `k`, position `1 <= j <= 2^k`),
//! with children `2n`, `2n + 1`. A family `f_1, ..., f_{2^m - 1}` is a tree-system
//! when every `f_n` (n >= 2) is supported where `child_sign(n) * f_parent(n) > 0`.
//! Sorting the nodes by their dyadic tags gives an order in which, at every
//! point, the values are nonpositive then nonnegative; the largest partial sum
//! then dominates a third of `sum |f_n|`.

use std::cmp::Ordering;
use std::fmt;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{Grid, GridField, RealField};

/// Largest supported depth. Trees beyond this have more nodes than any grid
/// could hold fields for.
pub const MAX_DEPTH: u32 = 30;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TreeIndex(usize);

impl TreeIndex {
    pub const ROOT: TreeIndex = TreeIndex(1);

    pub fn new(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidTreeIndex);
        }
        Ok(TreeIndex(n))
    }

    pub fn from_level(k: u32, j: usize) -> Result<Self> {
        if k >= usize::BITS - 1 || j == 0 || j > 1usize << k {
            return Err(Error::param("position", format!("j = {j} is not in 1..=2^{k}")));
        }
        Ok(TreeIndex((1usize << k) + j - 1))
    }

    pub fn get(self) -> usize {
        self.0
    }

    pub fn level(self) -> u32 {
        usize::BITS - 1 - self.0.leading_zeros()
    }

    pub fn position(self) -> usize {
        self.0 - (1usize << self.level()) + 1
    }

    pub fn parent(self) -> Option<TreeIndex> {
        (self.0 >= 2).then_some(TreeIndex(self.0 / 2))
    }

    pub fn children(self) -> (TreeIndex, TreeIndex) {
        (TreeIndex(2 * self.0), TreeIndex(2 * self.0 + 1))
    }

    /// `(-1)^(j+1)`: +1 for a left child (even `n`), -1 for a right child.
    pub fn child_sign(self) -> f64 {
        if self.position() % 2 == 1 {
            1.0
        } else {
            -1.0
        }
    }

    pub fn tag(self) -> DyadicTag {
        let k = self.level();
        DyadicTag {
            num: 2 * self.position() as u64 - 1,
            log_den: k + 1,
        }
    }

    /// `true` if `self` lies in the subtree rooted at `ancestor` (inclusive).
    pub fn descends_from(self, ancestor: TreeIndex) -> bool {
        let (a, b) = (ancestor.level(), self.level());
        b >= a && self.0 >> (b - a) == ancestor.0
    }
}

impl fmt::Display for TreeIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

pub fn double_index(n: usize) -> Result<(u32, usize)> {
    let t = TreeIndex::new(n)?;
    Ok((t.level(), t.position()))
}

/// Exact dyadic rational `num / 2^log_den`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct DyadicTag {
    num: u64,
    log_den: u32,
}

impl DyadicTag {
    pub fn numerator(&self) -> u64 {
        self.num
    }

    pub fn log_denominator(&self) -> u32 {
        self.log_den
    }

    pub fn value(&self) -> f64 {
        self.num as f64 / (self.log_den as f64).exp2()
    }
}

impl Ord for DyadicTag {
    fn cmp(&self, other: &Self) -> Ordering {
        let a = (self.num as u128) << other.log_den;
        let b = (other.num as u128) << self.log_den;
        a.cmp(&b)
    }
}

impl PartialOrd for DyadicTag {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for DyadicTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.num, 1u128 << self.log_den)
    }
}

pub fn dyadic_tag(n: usize) -> Result<DyadicTag> {
    Ok(TreeIndex::new(n)?.tag())
}

pub fn tree_size(m: u32) -> usize {
    (1usize << m) - 1
}

fn check_depth(m: u32) -> Result<()> {
    if m == 0 || m > MAX_DEPTH {
        return Err(Error::param("m", format!("depth {m} outside 1..={MAX_DEPTH}")));
    }
    Ok(())
}

/// Bijection of `{1, ..., len}` with its inverse, both 1-based.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Permutation {
    map: Vec<usize>,
    inv: Vec<usize>,
}

impl Permutation {
    pub fn new(map: Vec<usize>) -> Result<Self> {
        let mut inv = vec![0; map.len()];
        for (i, &v) in map.iter().enumerate() {
            if v == 0 || v > map.len() || inv[v - 1] != 0 {
                return Err(Error::param("permutation", format!("{map:?} is not a bijection")));
            }
            inv[v - 1] = i + 1;
        }
        Ok(Permutation { map, inv })
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    /// `sigma(i)` for `1 <= i <= len`.
    pub fn apply(&self, i: usize) -> usize {
        self.map[i - 1]
    }

    /// `sigma^{-1}(n)` for `1 <= n <= len`.
    pub fn invert(&self, n: usize) -> usize {
        self.inv[n - 1]
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.map
    }

    pub fn inverse(&self) -> Permutation {
        Permutation {
            map: self.inv.clone(),
            inv: self.map.clone(),
        }
    }
}

/// The order of `1..2^m` by increasing dyadic tag.
pub fn sorting_permutation(m: u32) -> Result<Permutation> {
    check_depth(m)?;
    let mut map: Vec<usize> = (1..=tree_size(m)).collect();
    map.sort_by_key(|&n| TreeIndex(n).tag());
    Permutation::new(map)
}

#[derive(Clone, Debug)]
pub struct TreeSystem {
    m: u32,
    fields: Vec<RealField>,
}

impl TreeSystem {
    pub fn new(m: u32, fields: Vec<RealField>) -> Result<Self> {
        check_depth(m)?;
        if fields.len() != tree_size(m) {
            return Err(Error::TreeSize {
                depth: m,
                expected: tree_size(m),
                actual: fields.len(),
            });
        }
        let r = fields[0].grid().resolution();
        if let Some(f) = fields.iter().find(|f| f.grid().resolution() != r) {
            return Err(Error::GridMismatch {
                left: r,
                right: f.grid().resolution(),
            });
        }
        Ok(TreeSystem { m, fields })
    }

    pub fn depth(&self) -> u32 {
        self.m
    }

    pub fn len(&self) -> usize {
        self.fields.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fields.is_empty()
    }

    pub fn grid(&self) -> &Grid {
        self.fields[0].grid()
    }

    pub fn fields(&self) -> &[RealField] {
        &self.fields
    }

    /// `f_n` for `1 <= n <= 2^m - 1`.
    pub fn field(&self, n: TreeIndex) -> &RealField {
        &self.fields[n.get() - 1]
    }

    /// `1e-9 * max_n max |f_n|`.
    pub fn default_support_tol(&self) -> f64 {
        1e-9 * self
            .fields
            .iter()
            .flat_map(|f| f.values().iter().map(|v| v.abs()))
            .fold(0.0, f64::max)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Relation {
    /// Descendant must live where the ancestor is positive.
    Positive,
    /// Descendant must live where the ancestor is negative.
    Negative,
    /// Descendant must vanish wherever the ancestor is nonzero.
    Disjoint,
}

/// Relation required between node `i` and a strictly shallower node `a`.
pub fn relation(a: TreeIndex, i: TreeIndex) -> Relation {
    let r = i.level() - a.level();
    let j = a.position();
    let pos = i.position();
    let lo = (j << r) - (1 << r);
    let mid = (j << r) - (1 << (r - 1));
    let hi = j << r;
    if pos > lo && pos <= mid {
        Relation::Positive
    } else if pos > mid && pos <= hi {
        Relation::Negative
    } else {
        Relation::Disjoint
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NodeCheck {
    pub node: usize,
    pub support: usize,
    pub violations: usize,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RelationCheck {
    pub ancestor: usize,
    pub node: usize,
    pub relation: Relation,
    pub violations: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TreeReport {
    pub supp_tol: f64,
    /// Per-node support inclusion in the parent's sign set. A zero node passes.
    pub nodes: Vec<NodeCheck>,
    pub relations_checked: usize,
    /// Ancestor/descendant pairs that break the iterated support relations.
    pub relation_failures: Vec<RelationCheck>,
}

impl TreeReport {
    pub fn pass(&self) -> bool {
        self.nodes.iter().all(|c| c.pass) && self.relation_failures.is_empty()
    }

    pub fn failing_nodes(&self) -> Vec<usize> {
        self.nodes.iter().filter(|c| !c.pass).map(|c| c.node).collect()
    }
}

fn count_violations(child: &[f64], ancestor: &[f64], rel: Relation, tol: f64) -> usize {
    child
        .iter()
        .zip(ancestor)
        .filter(|&(&c, &a)| {
            c.abs() > tol
                && match rel {
                    Relation::Positive => a <= 0.0,
                    Relation::Negative => a >= 0.0,
                    Relation::Disjoint => a.abs() > tol,
                }
        })
        .count()
}

pub fn verify_tree_system(t: &TreeSystem, supp_tol: f64) -> TreeReport {
    assert!(supp_tol >= 0.0, "support tolerance must be nonnegative");
    let nodes = (1..=t.len())
        .into_par_iter()
        .map(|n| {
            let idx = TreeIndex(n);
            let f = t.field(idx).values();
            let support = f.iter().filter(|v| v.abs() > supp_tol).count();
            let violations = match idx.parent() {
                None => 0,
                Some(p) => {
                    let rel = if idx.child_sign() > 0.0 {
                        Relation::Positive
                    } else {
                        Relation::Negative
                    };
                    count_violations(f, t.field(p).values(), rel, supp_tol)
                }
            };
            NodeCheck {
                node: n,
                support,
                violations,
                pass: violations == 0,
            }
        })
        .collect();
    let pairs: Vec<(usize, usize)> = (1..=t.len())
        .flat_map(|a| {
            let la = TreeIndex(a).level();
            (a + 1..=t.len())
                .filter(move |&i| TreeIndex(i).level() > la)
                .map(move |i| (a, i))
        })
        .collect();
    let relation_failures = pairs
        .par_iter()
        .filter_map(|&(a, i)| {
            let rel = relation(TreeIndex(a), TreeIndex(i));
            let v = count_violations(
                t.field(TreeIndex(i)).values(),
                t.field(TreeIndex(a)).values(),
                rel,
                supp_tol,
            );
            (v > 0).then_some(RelationCheck {
                ancestor: a,
                node: i,
                relation: rel,
                violations: v,
            })
        })
        .collect();
    TreeReport {
        supp_tol,
        nodes,
        relations_checked: pairs.len(),
        relation_failures,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SumOrder {
    /// `max_l |sum_{i <= l} f_sigma(i)|`
    Prefix,
    /// `max_l |sum_{i >= l} f_sigma(i)|`
    Suffix,
}

fn order_of(sigma: &Permutation, order: SumOrder) -> Vec<usize> {
    let mut idx: Vec<usize> = sigma.as_slice().iter().map(|&n| n - 1).collect();
    if order == SumOrder::Suffix {
        idx.reverse();
    }
    idx
}

fn check_count(len: usize, sigma: &Permutation) -> Result<()> {
    if len != sigma.len() || len == 0 {
        return Err(Error::param(
            "fields",
            format!("{len} fields for a permutation of {}", sigma.len()),
        ));
    }
    Ok(())
}

const SCAN_CHUNK: usize = 4096;

fn running_max<T, F>(columns: &[&[T]], order: &[usize], norm: F) -> Vec<f64>
where
    T: Copy + Default + std::ops::AddAssign + Sync,
    F: Fn(T) -> f64 + Sync,
{
    let len = columns[0].len();
    let mut out = vec![0.0; len];
    out.par_chunks_mut(SCAN_CHUNK).enumerate().for_each(|(c, chunk)| {
        let base = c * SCAN_CHUNK;
        for (off, slot) in chunk.iter_mut().enumerate() {
            let i = base + off;
            let mut acc = T::default();
            let mut best = 0.0f64;
            for &n in order {
                acc += columns[n][i];
                best = best.max(norm(acc));
            }
            *slot = best;
        }
    });
    out
}

/// Pointwise `sup_l |sum_{i=1}^{l} f_{sigma(i)}|` over `1 <= l <= len`.
pub fn maximal_partial_sum(fields: &[RealField], sigma: &Permutation) -> Result<RealField> {
    maximal_real_sum(fields, sigma, SumOrder::Prefix)
}

pub fn maximal_real_sum(fields: &[RealField], sigma: &Permutation, order: SumOrder) -> Result<RealField> {
    check_count(fields.len(), sigma)?;
    let cols: Vec<&[f64]> = fields.iter().map(RealField::values).collect();
    Ok(RealField::from_parts(
        fields[0].grid(),
        running_max(&cols, &order_of(sigma, order), f64::abs),
    ))
}

/// Modulus version for complex fields.
pub fn maximal_complex_sum(fields: &[GridField], sigma: &Permutation, order: SumOrder) -> Result<RealField> {
    check_count(fields.len(), sigma)?;
    let cols: Vec<&[Complex64]> = fields.iter().map(GridField::values).collect();
    Ok(RealField::from_parts(
        fields[0].grid(),
        running_max(&cols, &order_of(sigma, order), |z: Complex64| z.norm()),
    ))
}

/// `l(x)`: the last position in sigma order whose value at sample `index` is
/// negative, or 0 if there is none. Values at positions `<= l` are then
/// nonpositive and values after `l` nonnegative. Counting zeros as nonpositive
/// would break the first half, since a node off the path of `x` vanishes there.
pub fn split_index(fields: &[RealField], sigma: &Permutation, index: usize) -> Result<usize> {
    check_count(fields.len(), sigma)?;
    Ok((1..=sigma.len())
        .rev()
        .find(|&i| fields[sigma.apply(i) - 1].values()[index] < 0.0)
        .unwrap_or(0))
}

/// Haar system in `x`: `f_n` is +1 on the left half and -1 on the right half
/// of the `j`-th of `2^k` equal strips.
pub fn haar_system(grid: &Grid, m: u32) -> Result<TreeSystem> {
    check_depth(m)?;
    if 1usize << m > grid.resolution() {
        return Err(Error::param("m", format!("2^{m} strips do not fit a grid of {}", grid.resolution())));
    }
    let r = grid.resolution();
    let fields = (1..=tree_size(m))
        .map(|n| {
            let idx = TreeIndex(n);
            let strips = 1usize << idx.level();
            let width = r / strips;
            let j = idx.position() - 1;
            RealField::new(
                grid,
                (0..grid.len())
                    .map(|i| {
                        let (a, _) = grid.split(i);
                        if a / width != j {
                            0.0
                        } else if a % width < width / 2 {
                            1.0
                        } else {
                            -1.0
                        }
                    })
                    .collect(),
            )
            .expect("finite values")
        })
        .collect();
    TreeSystem::new(m, fields)
}

/// Seeded piecewise-constant tree-system on square blocks of `block` samples.
///
/// Each block draws a root-to-leaf path that may stop early, and integer
/// amplitudes in `1..=4`, so all partial sums are exact in floating point.
pub fn random_tree_system(grid: &Grid, m: u32, block: usize, seed: u64) -> Result<TreeSystem> {
    check_depth(m)?;
    let r = grid.resolution();
    if block == 0 || r % block != 0 {
        return Err(Error::param("block", format!("{block} does not divide {r}")));
    }
    let per_side = r / block;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fields = vec![vec![0.0; grid.len()]; tree_size(m)];
    for ba in 0..per_side {
        for bb in 0..per_side {
            let mut node = 1usize;
            let mut values = Vec::new();
            for _ in 0..m {
                if node > 1 && rng.gen_bool(0.15) {
                    break;
                }
                let positive = rng.gen_bool(0.5);
                let amp = rng.gen_range(1..=4) as f64;
                values.push((node, if positive { amp } else { -amp }));
                node = 2 * node + usize::from(!positive);
            }
            for a in ba * block..(ba + 1) * block {
                for b in bb * block..(bb + 1) * block {
                    for &(n, v) in &values {
                        fields[n - 1][a * r + b] = v;
                    }
                }
            }
        }
    }
    let fields = fields
        .into_iter()
        .map(|v| RealField::new(grid, v))
        .collect::<Result<Vec<_>>>()?;
    TreeSystem::new(m, fields)
}
