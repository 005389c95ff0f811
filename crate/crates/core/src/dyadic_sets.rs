//! Sets of dyadic cells in dimension 1 or 2 and their combinatorics.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::measure_grid::cell_width;
use crate::numeric::{self, exact_log2};

/// A cell index; the second coordinate is 0 in dimension 1.
pub type Cell = [i64; 2];

/// Occupied cells of side `2^-level`, sorted and unique.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DyadicGridSet {
    dim: u8,
    level: u32,
    cells: Vec<Cell>,
}

impl DyadicGridSet {
    pub fn new(dim: u8, level: u32, mut cells: Vec<Cell>) -> Result<Self> {
        if dim != 1 && dim != 2 {
            return Err(invalid(format!("dimension {dim} is not 1 or 2")));
        }
        if level > 62 {
            return Err(invalid(format!("level {level} too fine")));
        }
        if dim == 1 && cells.iter().any(|c| c[1] != 0) {
            return Err(invalid("one-dimensional cells must have zero second index"));
        }
        cells.sort_unstable();
        cells.dedup();
        Ok(DyadicGridSet { dim, level, cells })
    }

    pub fn from_cells_1d(level: u32, cells: Vec<i64>) -> Result<Self> {
        Self::new(1, level, cells.into_iter().map(|k| [k, 0]).collect())
    }

    pub fn from_cells_2d(level: u32, cells: Vec<(i64, i64)>) -> Result<Self> {
        Self::new(2, level, cells.into_iter().map(|(a, b)| [a, b]).collect())
    }

    pub fn empty(dim: u8, level: u32) -> Result<Self> {
        Self::new(dim, level, Vec::new())
    }

    /// All cells of `[lo, hi)` at `level` (dimension 1).
    pub fn interval(lo: f64, hi: f64, level: u32) -> Result<Self> {
        let h = cell_width(level);
        let a = (lo / h).floor() as i64;
        let b = (hi / h).ceil() as i64;
        Self::from_cells_1d(level, (a..b).collect())
    }

    /// Cartesian product of two one-dimensional sets at a common level.
    pub fn product(a: &Self, b: &Self) -> Result<Self> {
        if a.dim != 1 || b.dim != 1 || a.level != b.level {
            return Err(invalid("product needs two 1-d sets at the same level"));
        }
        let mut cells = Vec::with_capacity(a.len() * b.len());
        for x in &a.cells {
            for y in &b.cells {
                cells.push([x[0], y[0]]);
            }
        }
        Self::new(2, a.level, cells)
    }

    pub fn dim(&self) -> u8 {
        self.dim
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn contains(&self, c: &Cell) -> bool {
        self.cells.binary_search(c).is_ok()
    }

    /// Bounding box `(lo, hi)` of the indices, inclusive.
    pub fn window(&self) -> Option<(Cell, Cell)> {
        let first = self.cells.first()?;
        let mut lo = *first;
        let mut hi = *first;
        for c in &self.cells {
            for d in 0..2 {
                lo[d] = lo[d].min(c[d]);
                hi[d] = hi[d].max(c[d]);
            }
        }
        Some((lo, hi))
    }

    /// Center of a cell in real coordinates.
    pub fn center(&self, c: &Cell) -> [f64; 2] {
        let h = cell_width(self.level);
        let y = if self.dim == 2 { (c[1] as f64 + 0.5) * h } else { 0.0 };
        [(c[0] as f64 + 0.5) * h, y]
    }

    /// Ancestors at a coarser level.
    pub fn coarsen(&self, level: u32) -> Result<Self> {
        if level > self.level {
            return Err(invalid("coarsen target is finer than the set"));
        }
        let sh = self.level - level;
        Self::new(
            self.dim,
            level,
            self.cells.iter().map(|c| parent(c, sh)).collect(),
        )
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "dim {}", self.dim);
        let _ = writeln!(s, "level {}", self.level);
        match self.window() {
            Some((lo, hi)) if self.dim == 1 => {
                let _ = writeln!(s, "window {} {}", lo[0], hi[0]);
            }
            Some((lo, hi)) => {
                let _ = writeln!(s, "window {} {} {} {}", lo[0], lo[1], hi[0], hi[1]);
            }
            None => {
                let _ = writeln!(s, "window");
            }
        }
        let _ = writeln!(s, "count {}", self.cells.len());
        for c in &self.cells {
            if self.dim == 1 {
                let _ = writeln!(s, "{}", c[0]);
            } else {
                let _ = writeln!(s, "{} {}", c[0], c[1]);
            }
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let lines: Vec<(usize, &str)> = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty())
            .collect();
        let field = |idx: usize, key: &str| -> Result<(usize, &str)> {
            let (n, l) = lines.get(idx).copied().ok_or(Error::Parse {
                line: 0,
                msg: format!("missing `{key}`"),
            })?;
            let rest = l.strip_prefix(key).ok_or(Error::Parse {
                line: n,
                msg: format!("expected `{key}`"),
            })?;
            Ok((n, rest.trim()))
        };
        let perr = |n: usize, m: &str| Error::Parse {
            line: n,
            msg: m.to_string(),
        };
        let (n, d) = field(0, "dim")?;
        let dim: u8 = d.parse().map_err(|_| perr(n, "bad dim"))?;
        let (n, l) = field(1, "level")?;
        let level: u32 = l.parse().map_err(|_| perr(n, "bad level"))?;
        field(2, "window")?;
        let (n, c) = field(3, "count")?;
        let count: usize = c.parse().map_err(|_| perr(n, "bad count"))?;
        let mut cells = Vec::with_capacity(count);
        for &(n, l) in &lines[4..] {
            let v: Vec<i64> = l
                .split_whitespace()
                .map(|t| t.parse::<i64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| perr(n, "bad index"))?;
            match (dim, v.as_slice()) {
                (1, [a]) => cells.push([*a, 0]),
                (2, [a, b]) => cells.push([*a, *b]),
                _ => return Err(perr(n, "wrong number of indices")),
            }
        }
        if cells.len() != count {
            return Err(perr(0, "count does not match the index lines"));
        }
        Self::new(dim, level, cells)
    }
}

fn parent(c: &Cell, shift: u32) -> Cell {
    let sh = shift.min(63);
    [c[0] >> sh, c[1] >> sh]
}

/// `log2(1/r)` for dyadic r, checking `2^-level <= r`.
fn scale_level(set_level: u32, r: f64) -> Result<i64> {
    let e = exact_log2(r).ok_or_else(|| invalid(format!("scale {r} is not dyadic")))?;
    let q = -(e as i64);
    if q > set_level as i64 {
        return Err(Error::BelowResolution {
            scale: r,
            grid: cell_width(set_level),
        });
    }
    Ok(q)
}

/// Number of dyadic r-cells meeting X.
pub fn covering_number(x: &DyadicGridSet, r: f64) -> Result<usize> {
    let q = scale_level(x.level, r)?;
    let sh = (x.level as i64 - q).min(63) as u32;
    let mut anc: Vec<Cell> = x.cells.iter().map(|c| parent(c, sh)).collect();
    anc.dedup();
    if x.dim == 2 {
        anc.sort_unstable();
        anc.dedup();
    }
    Ok(anc.len())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SetCheckKind {
    FrostmanType,
    KatzTao,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Witness {
    /// Center of the offending r-cell.
    pub center: [f64; 2],
    pub r: f64,
    pub count: usize,
    pub bound: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SetCheck {
    pub pass: bool,
    /// The most violated r-cell: largest count/bound ratio, ties to smaller r.
    pub witness: Option<Witness>,
    /// Largest count/bound ratio over all scales.
    pub worst_ratio: f64,
}

/// Non-concentration check over dyadic r in `[delta, 1]`, with dyadic r-cells
/// standing in for r-balls.
pub fn set_check(x: &DyadicGridSet, s: f64, k: f64, kind: SetCheckKind) -> Result<SetCheck> {
    if x.is_empty() {
        return Err(invalid("set_check needs a nonempty set"));
    }
    let m = x.level;
    let total = x.len() as f64;
    let mut worst_ratio = 0.0f64;
    let mut witness: Option<(f64, Witness)> = None;
    for q in (0..=m).rev() {
        let r = cell_width(q);
        let bound = match kind {
            SetCheckKind::FrostmanType => k * r.powf(s) * total,
            SetCheckKind::KatzTao => k * (r / cell_width(m)).powf(s),
        };
        let mut counts: BTreeMap<Cell, usize> = BTreeMap::new();
        for c in &x.cells {
            *counts.entry(parent(c, m - q)).or_insert(0) += 1;
        }
        for (cell, &count) in &counts {
            let ratio = count as f64 / bound;
            worst_ratio = worst_ratio.max(ratio);
            if count as f64 > bound * (1.0 + 1e-12) {
                let better = witness.as_ref().map_or(true, |(wr, _)| ratio > *wr);
                if better {
                    let y = if x.dim == 2 {
                        (cell[1] as f64 + 0.5) * r
                    } else {
                        0.0
                    };
                    witness = Some((
                        ratio,
                        Witness {
                            center: [(cell[0] as f64 + 0.5) * r, y],
                            r,
                            count,
                            bound,
                        },
                    ));
                }
            }
        }
    }
    Ok(SetCheck {
        pass: witness.is_none(),
        witness: witness.map(|(_, w)| w),
        worst_ratio,
    })
}

/// Frostman-type `(delta, s, K)` check.
pub fn is_delta_s_set(x: &DyadicGridSet, s: f64, k: f64) -> Result<bool> {
    Ok(set_check(x, s, k, SetCheckKind::FrostmanType)?.pass)
}

fn child_counts(cells: &[Cell], child_shift: u32, d: u32) -> BTreeMap<Cell, Vec<Cell>> {
    let mut children: Vec<Cell> = cells.iter().map(|c| parent(c, child_shift)).collect();
    children.sort_unstable();
    children.dedup();
    let mut groups: BTreeMap<Cell, Vec<Cell>> = BTreeMap::new();
    for c in children {
        groups.entry(parent(&c, d)).or_default().push(c);
    }
    groups
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Uniformized {
    #[serde(skip)]
    pub set: DyadicGridSet,
    /// Common child count per block level j = 1..m.
    pub branching: Vec<usize>,
    pub retained_fraction: f64,
    /// Guaranteed floor `(dim*D + 1)^-m` on the retained fraction.
    pub floor: f64,
    /// Exponent e with retained fraction = delta^e.
    pub epsilon_equivalent: f64,
}

/// Largest subset that is uniform along the block levels `2^{-Dj}`.
///
/// Works from the finest block upward: at each block level it picks the
/// child count R maximizing R times the number of parents with at least R
/// children, trims those parents to their first R children and drops the rest.
pub fn uniformize(x: &DyadicGridSet, d: u32, m: u32) -> Result<Uniformized> {
    if d == 0 || m == 0 {
        return Err(invalid("block size and count must be positive"));
    }
    if x.level != d * m {
        return Err(invalid(format!(
            "set level {} differs from D*m = {}",
            x.level,
            d * m
        )));
    }
    let floor = ((x.dim as f64) * d as f64 + 1.0).powi(-(m as i32));
    if x.is_empty() {
        return Ok(Uniformized {
            set: x.clone(),
            branching: Vec::new(),
            retained_fraction: 1.0,
            floor,
            epsilon_equivalent: 0.0,
        });
    }
    let mut leaves = x.cells.clone();
    let mut branching = vec![0usize; m as usize];
    for j in (1..=m).rev() {
        let child_shift = d * (m - j);
        let groups = child_counts(&leaves, child_shift, d);
        let mut counts: Vec<usize> = groups.values().map(|v| v.len()).collect();
        counts.sort_unstable();
        let mut best = (0usize, 0usize);
        let n = counts.len();
        for (i, &c) in counts.iter().enumerate() {
            // Parents with at least c children: n - i (counts sorted).
            let score = c * (n - i);
            if score > best.0 || (score == best.0 && c > best.1) {
                best = (score, c);
            }
        }
        let r = best.1;
        branching[(j - 1) as usize] = r;
        let mut keep: Vec<Cell> = Vec::new();
        for v in groups.values() {
            if v.len() >= r {
                keep.extend_from_slice(&v[..r]);
            }
        }
        keep.sort_unstable();
        leaves.retain(|c| keep.binary_search(&parent(c, child_shift)).is_ok());
    }
    let set = DyadicGridSet::new(x.dim, x.level, leaves)?;
    let frac = set.len() as f64 / x.len() as f64;
    let eps = frac.ln() / cell_width(x.level).ln();
    Ok(Uniformized {
        set,
        branching,
        retained_fraction: frac,
        floor,
        epsilon_equivalent: eps,
    })
}

/// Common child counts per block level, or the first level where parents
/// disagree.
pub fn uniformity_audit(x: &DyadicGridSet, d: u32, m: u32) -> std::result::Result<Vec<usize>, usize> {
    let mut out = Vec::with_capacity(m as usize);
    for j in 1..=m {
        let groups = child_counts(&x.cells, d * (m - j), d);
        let mut it = groups.values().map(|v| v.len());
        let first = it.next().unwrap_or(0);
        if it.any(|c| c != first) {
            return Err(j as usize);
        }
        out.push(first);
    }
    Ok(out)
}

/// Normalized log-covering profile of a uniform set at block nodes.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BranchingFunction {
    pub block: u32,
    pub blocks: u32,
    pub dim: u8,
    /// f(j/m) for j = 0..=m.
    pub values: Vec<f64>,
}

impl BranchingFunction {
    pub fn from_values(block: u32, dim: u8, values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 || values[0] != 0.0 {
            return Err(invalid("branching values must start at f(0) = 0"));
        }
        let blocks = (values.len() - 1) as u32;
        let cap = dim as f64 + 1e-12;
        for w in values.windows(2) {
            let slope = (w[1] - w[0]) * blocks as f64;
            if !(slope >= -1e-12 && slope <= cap) {
                return Err(invalid(format!("segment slope {slope} outside [0, {dim}]")));
            }
        }
        Ok(BranchingFunction {
            block,
            blocks,
            dim,
            values,
        })
    }

    pub fn eval(&self, u: f64) -> f64 {
        let m = self.blocks as f64;
        let t = (u.clamp(0.0, 1.0) * m).min(m);
        let j = (t.floor() as usize).min(self.blocks as usize - 1);
        let w = t - j as f64;
        self.values[j] * (1.0 - w) + self.values[j + 1] * w
    }

    pub fn node(&self, j: usize) -> f64 {
        j as f64 / self.blocks as f64
    }
}

pub fn branching_function(x: &DyadicGridSet, d: u32, m: u32) -> Result<BranchingFunction> {
    if x.level != d * m {
        return Err(invalid("set level differs from D*m"));
    }
    if x.is_empty() {
        return Err(invalid("branching function of the empty set"));
    }
    uniformity_audit(x, d, m).map_err(|level| Error::NotUniform { level })?;
    let denom = (d * m) as f64;
    let mut values = Vec::with_capacity(m as usize + 1);
    for j in 0..=m {
        let n = covering_number(x, cell_width(d * j))?;
        values.push((n as f64).log2() / denom);
    }
    values[0] = 0.0;
    BranchingFunction::from_values(d, x.dim, values)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Segment {
    pub a: f64,
    pub b: f64,
    pub s: f64,
}

/// Largest s with f(u) - f(a) >= s (u - a) at every node of (a, b].
fn superlinear_slope(f: &BranchingFunction, a: usize, b: usize) -> f64 {
    let m = f.blocks as f64;
    (a + 1..=b)
        .map(|u| (f.values[u] - f.values[a]) * m / (u - a) as f64)
        .fold(f64::INFINITY, f64::min)
        .max(0.0)
}

/// Partition of [0,1] into node-aligned intervals with nondecreasing
/// superlinear slopes, each at least `ceil(eps/4 * m)` blocks long, maximizing
/// the slope-weighted length. Ties prefer fewer pieces.
pub fn superlinear_decompose(f: &BranchingFunction, eps: f64) -> Result<Vec<Segment>> {
    if !(eps > 0.0) {
        return Err(invalid("epsilon must be positive"));
    }
    let m = f.blocks as usize;
    let min_len = ((eps / 4.0 * m as f64).ceil() as usize).clamp(1, m);
    let slope = |a: usize, b: usize| superlinear_slope(f, a, b);
    // best[a][b]: best value over partitions of [0, b] ending with [a, b].
    let neg = f64::NEG_INFINITY;
    let mut best = vec![vec![neg; m + 1]; m + 1];
    let mut prev = vec![vec![usize::MAX; m + 1]; m + 1];
    for b in 1..=m {
        for a in 0..b {
            if b - a < min_len {
                continue;
            }
            let s = slope(a, b);
            let val = s * (b - a) as f64 / m as f64;
            if a == 0 {
                best[a][b] = val;
                continue;
            }
            let mut top = neg;
            let mut arg = usize::MAX;
            for p in 0..a {
                if best[p][a] == neg || slope(p, a) > s + 1e-12 {
                    continue;
                }
                if best[p][a] > top + 1e-15 {
                    top = best[p][a];
                    arg = p;
                }
            }
            if arg != usize::MAX {
                best[a][b] = top + val;
                prev[a][b] = arg;
            }
        }
    }
    let mut a_best = 0;
    for a in 0..m {
        if best[a][m] > best[a_best][m] + 1e-15 {
            a_best = a;
        }
    }
    let mut segs = Vec::new();
    let (mut a, mut b) = (a_best, m);
    loop {
        segs.push(Segment {
            a: f.node(a),
            b: f.node(b),
            s: slope(a, b),
        });
        if a == 0 {
            break;
        }
        let p = prev[a][b];
        b = a;
        a = p;
    }
    segs.reverse();
    Ok(segs)
}

/// Image of cell centers under `(x1, x2) -> x1 - y x2`, binned at `out_level`.
pub fn project(x: &DyadicGridSet, y: f64, out_level: u32) -> Result<DyadicGridSet> {
    if x.dim != 2 {
        return Err(invalid("project needs a 2-d set"));
    }
    if !(y.abs() <= 4.0) {
        return Err(invalid(format!("direction {y} outside [-4, 4]")));
    }
    DyadicGridSet::from_cells_1d(out_level, projected_bins(x, y, out_level))
}

fn projected_bins(x: &DyadicGridSet, y: f64, out_level: u32) -> Vec<i64> {
    let inv = 1.0 / cell_width(out_level);
    let mut bins: Vec<i64> = x
        .cells
        .iter()
        .map(|c| {
            let p = x.center(c);
            ((p[0] - y * p[1]) * inv).floor() as i64
        })
        .collect();
    bins.sort_unstable();
    bins.dedup();
    bins
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ProjectionScan {
    pub ys: Vec<f64>,
    pub counts: Vec<usize>,
    pub min: usize,
    pub max: usize,
    pub argmax: f64,
    pub threshold: f64,
    pub fraction_meeting: f64,
    pub pass: bool,
}

impl ProjectionScan {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("y,covering\n");
        for (y, c) in self.ys.iter().zip(&self.counts) {
            let _ = writeln!(s, "{y:.17e},{c}");
        }
        s
    }
}

/// Covering numbers of `pi_y(A1 x A2)` for every y-cell center of `ys`, with
/// the verdict `max >= delta^{-s - c t}`.
pub fn projection_scan(
    a1: &DyadicGridSet,
    a2: &DyadicGridSet,
    ys: &DyadicGridSet,
    s: f64,
    t: f64,
    c: f64,
) -> Result<ProjectionScan> {
    if a1.is_empty() || a2.is_empty() || ys.is_empty() {
        return Err(invalid("projection_scan needs nonempty inputs"));
    }
    if ys.dim != 1 {
        return Err(invalid("direction set must be 1-d"));
    }
    let x = DyadicGridSet::product(a1, a2)?;
    let level = x.level;
    let dirs: Vec<f64> = ys.cells.iter().map(|c| ys.center(c)[0]).collect();
    if let Some(y) = dirs.iter().find(|y| y.abs() > 4.0) {
        return Err(invalid(format!("direction {y} outside [-4, 4]")));
    }
    let counts: Vec<usize> = dirs
        .par_iter()
        .map(|&y| projected_bins(&x, y, level).len())
        .collect();
    let threshold = cell_width(level).powf(-s - c * t);
    let (mut min, mut max, mut argmax) = (usize::MAX, 0usize, dirs[0]);
    for (&y, &n) in dirs.iter().zip(&counts) {
        min = min.min(n);
        if n > max {
            max = n;
            argmax = y;
        }
    }
    let meeting = counts.iter().filter(|&&n| n as f64 >= threshold).count();
    Ok(ProjectionScan {
        fraction_meeting: meeting as f64 / counts.len() as f64,
        pass: max as f64 >= threshold,
        ys: dirs,
        counts,
        min,
        max,
        argmax,
        threshold,
    })
}

/// Difference histogram h(d) = #{(a, b) : a - b = d}, indexed from the
/// smallest possible difference.
fn difference_histogram(a: &DyadicGridSet, b: &DyadicGridSet) -> Vec<u64> {
    let (alo, ahi) = (a.cells[0][0], a.cells[a.len() - 1][0]);
    let (blo, bhi) = (b.cells[0][0], b.cells[b.len() - 1][0]);
    let base = alo - bhi;
    let span = (ahi - blo - base + 1) as usize;
    let pairs = a.len() as u128 * b.len() as u128;
    if pairs <= 1 << 24 || span > 1 << 24 {
        let mut h = vec![0u64; span];
        for x in &a.cells {
            for y in &b.cells {
                h[(x[0] - y[0] - base) as usize] += 1;
            }
        }
        return h;
    }
    let na = (ahi - alo + 1) as usize;
    let nb = (bhi - blo + 1) as usize;
    let mut ia = vec![0.0; na];
    for c in &a.cells {
        ia[(c[0] - alo) as usize] = 1.0;
    }
    let mut ib = vec![0.0; nb];
    for c in &b.cells {
        ib[(bhi - c[0]) as usize] = 1.0;
    }
    numeric::convolve_fft(&ia, &ib)
        .into_iter()
        .map(|v| v.round().max(0.0) as u64)
        .collect()
}

/// Number of quadruples with `a1 - b1 = a2 - b2`.
pub fn additive_energy(a: &DyadicGridSet, b: &DyadicGridSet) -> Result<u128> {
    if a.dim != 1 || b.dim != 1 || a.level != b.level {
        return Err(invalid("additive_energy needs 1-d sets at a common level"));
    }
    if a.is_empty() || b.is_empty() {
        return Ok(0);
    }
    Ok(difference_histogram(a, b)
        .into_iter()
        .map(|v| v as u128 * v as u128)
        .sum())
}

/// Number of distinct differences `|A - B|` in cells.
pub fn difference_count(a: &DyadicGridSet, b: &DyadicGridSet) -> Result<usize> {
    if a.dim != 1 || b.dim != 1 || a.level != b.level {
        return Err(invalid("difference_count needs 1-d sets at a common level"));
    }
    if a.is_empty() || b.is_empty() {
        return Ok(0);
    }
    Ok(difference_histogram(a, b).into_iter().filter(|&v| v > 0).count())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cantor_2_of_4(m: u32) -> DyadicGridSet {
        // Keep quarters 0 and 2 of every block: digits in {0, 2} base 4.
        let mut cells = vec![0i64];
        for _ in 0..m / 2 {
            cells = cells
                .iter()
                .flat_map(|c| [4 * c, 4 * c + 2])
                .collect();
        }
        DyadicGridSet::from_cells_1d(m, cells).unwrap()
    }

    #[test]
    fn covering_examples() {
        let full = DyadicGridSet::interval(0.0, 1.0, 8).unwrap();
        assert_eq!(covering_number(&full, 1.0 / 16.0).unwrap(), 16);
        let single = DyadicGridSet::from_cells_1d(8, vec![77]).unwrap();
        for q in 0..=8 {
            assert_eq!(covering_number(&single, cell_width(q)).unwrap(), 1);
        }
        let c = cantor_2_of_4(12);
        assert_eq!(c.len(), 64);
        assert_eq!(covering_number(&c, 1.0 / 64.0).unwrap(), 8);
        assert!(covering_number(&c, 1.0 / 8192.0).is_err());
    }

    #[test]
    fn set_check_examples() {
        let full = DyadicGridSet::interval(0.0, 1.0, 8).unwrap();
        assert!(set_check(&full, 1.0, 4.0, SetCheckKind::FrostmanType).unwrap().pass);
        let x = DyadicGridSet::interval(0.0, 1.0 / 16.0, 8).unwrap();
        let res = set_check(&x, 0.5, 1.0, SetCheckKind::KatzTao).unwrap();
        assert!(!res.pass);
        let w = res.witness.unwrap();
        assert_eq!(w.r, 1.0 / 16.0);
        assert_eq!(w.count, 16);
    }

    #[test]
    fn uniformize_fixed_points() {
        let full = DyadicGridSet::interval(0.0, 1.0, 6).unwrap();
        let u = uniformize(&full, 2, 3).unwrap();
        assert_eq!(u.set, full);
        assert_eq!(u.branching, vec![4, 4, 4]);
        let c = cantor_2_of_4(12);
        assert_eq!(uniformize(&c, 2, 6).unwrap().set, c);
    }

    #[test]
    fn branching_examples() {
        let full = DyadicGridSet::interval(0.0, 1.0, 6).unwrap();
        let f = branching_function(&full, 2, 3).unwrap();
        for (j, v) in f.values.iter().enumerate() {
            assert!((v - j as f64 / 3.0).abs() < 1e-12);
        }
        let single = DyadicGridSet::from_cells_1d(6, vec![5]).unwrap();
        assert!(branching_function(&single, 2, 3)
            .unwrap()
            .values
            .iter()
            .all(|v| *v == 0.0));
        let c = cantor_2_of_4(12);
        let f = branching_function(&c, 2, 6).unwrap();
        for (j, v) in f.values.iter().enumerate() {
            assert!((v - j as f64 / 12.0).abs() < 1e-12);
        }
        let bad = DyadicGridSet::from_cells_1d(4, vec![0, 1, 4]).unwrap();
        assert!(matches!(
            branching_function(&bad, 2, 2),
            Err(Error::NotUniform { level: 2 })
        ));
    }

    #[test]
    fn superlinear_examples() {
        let lin = BranchingFunction::from_values(1, 1, (0..=8).map(|j| j as f64 / 8.0).collect())
            .unwrap();
        let segs = superlinear_decompose(&lin, 0.1).unwrap();
        assert_eq!(segs.len(), 1);
        assert!((segs[0].s - 1.0).abs() < 1e-12);
        let flat = BranchingFunction::from_values(1, 1, vec![0.0; 9]).unwrap();
        let segs = superlinear_decompose(&flat, 0.1).unwrap();
        assert_eq!(segs.len(), 1);
        assert_eq!(segs[0].s, 0.0);
        let two: Vec<f64> = (0..=8).map(|j| if j <= 4 { 0.0 } else { (j - 4) as f64 / 8.0 }).collect();
        let f = BranchingFunction::from_values(1, 1, two).unwrap();
        let segs = superlinear_decompose(&f, 0.1).unwrap();
        let total: f64 = segs.iter().map(|g| g.s * (g.b - g.a)).sum();
        assert!((total - 0.5).abs() < 1e-12);
        assert_eq!(segs[0].s, 0.0);
    }

    #[test]
    fn projection_examples() {
        let diag = DyadicGridSet::from_cells_2d(2, vec![(0, 0), (1, 1), (2, 2), (3, 3)]).unwrap();
        assert_eq!(project(&diag, 1.0, 2).unwrap().len(), 1);
        let a = DyadicGridSet::from_cells_1d(2, vec![0, 1, 2, 3]).unwrap();
        let aa = DyadicGridSet::product(&a, &a).unwrap();
        assert_eq!(project(&aa, 1.0, 2).unwrap().len(), 7);
        let shadow = project(&aa, 0.0, 2).unwrap();
        assert_eq!(shadow, a);
    }

    #[test]
    fn additive_energy_examples() {
        for n in [1usize, 2, 5, 17, 64] {
            let ap = DyadicGridSet::from_cells_1d(10, (0..n as i64).collect()).unwrap();
            let n = n as u128;
            assert_eq!(additive_energy(&ap, &ap).unwrap(), (2 * n * n * n + n) / 3);
        }
    }

    #[test]
    fn text_round_trip() {
        let c = cantor_2_of_4(6);
        assert_eq!(DyadicGridSet::from_text(&c.to_text()).unwrap(), c);
        let aa = DyadicGridSet::product(&c, &c).unwrap();
        assert_eq!(DyadicGridSet::from_text(&aa.to_text()).unwrap(), aa);
    }
}
