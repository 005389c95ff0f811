//! Measures on the line stored as mass vectors over dyadic cells.

use std::fmt::Write as _;

use crate::dyadic_sets::DyadicGridSet;
use crate::error::{invalid, Error, Result};
use crate::numeric::{self, exact_log2, pairwise_sum};

/// Finest supported grid level.
pub const MAX_LEVEL: u32 = 40;

/// Nonnegative masses on the cells `[(offset+i)h, (offset+i+1)h)`, `h = 2^-level`.
///
/// Values are immutable once built; every operation returns a new measure.
#[derive(Clone, Debug, PartialEq)]
pub struct GridMeasure {
    level: u32,
    offset: i64,
    masses: Vec<f64>,
    total: f64,
}

/// Cell width at a level.
pub fn cell_width(level: u32) -> f64 {
    (2f64).powi(-(level as i32))
}

fn check_level(level: u32) -> Result<()> {
    if level == 0 || level > MAX_LEVEL {
        return Err(invalid(format!("level {level} outside 1..={MAX_LEVEL}")));
    }
    Ok(())
}

impl GridMeasure {
    /// Build from explicit cell masses starting at cell index `offset`.
    pub fn from_cell_masses(level: u32, offset: i64, masses: Vec<f64>) -> Result<Self> {
        check_level(level)?;
        if let Some((i, m)) = masses
            .iter()
            .enumerate()
            .find(|(_, m)| !(m.is_finite() && **m >= 0.0))
        {
            return Err(invalid(format!("cell {i} has invalid mass {m}")));
        }
        Ok(Self::from_parts(level, offset, masses))
    }

    pub(crate) fn from_parts(level: u32, offset: i64, masses: Vec<f64>) -> Self {
        let total = pairwise_sum(&masses);
        GridMeasure {
            level,
            offset,
            masses,
            total,
        }
    }

    /// Midpoint-rule discretization of a density on the window `[lo, hi)`.
    /// The window is widened outward to grid lines; cells whose centers fall
    /// outside `[lo, hi)` get no mass.
    pub fn from_density<F: Fn(f64) -> f64>(
        density: F,
        lo: f64,
        hi: f64,
        level: u32,
        normalize: bool,
    ) -> Result<Self> {
        check_level(level)?;
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(invalid(format!("bad window [{lo}, {hi})")));
        }
        let h = cell_width(level);
        let first = (lo / h).floor() as i64;
        let last = (hi / h).ceil() as i64;
        let mut masses = Vec::with_capacity((last - first) as usize);
        for k in first..last {
            let c = (k as f64 + 0.5) * h;
            if c < lo || c >= hi {
                masses.push(0.0);
                continue;
            }
            let v = density(c);
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::NegativeDensity { x: c, value: v });
            }
            masses.push(v * h);
        }
        let m = Self::from_parts(level, first, masses);
        if normalize {
            m.normalized()
        } else {
            Ok(m)
        }
    }

    /// Uniform probability measure on `[lo, hi)`.
    pub fn uniform(lo: f64, hi: f64, level: u32) -> Result<Self> {
        Self::from_density(|_| 1.0, lo, hi, level, true)
    }

    /// Bin weighted atoms `(x, w)` into their containing half-open cells.
    pub fn from_atoms(
        atoms: &[(f64, f64)],
        lo: f64,
        hi: f64,
        level: u32,
        normalize: bool,
    ) -> Result<Self> {
        check_level(level)?;
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(invalid(format!("bad window [{lo}, {hi})")));
        }
        let h = cell_width(level);
        let first = (lo / h).floor() as i64;
        let last = (hi / h).ceil() as i64;
        let mut masses = vec![0.0; (last - first) as usize];
        for &(x, w) in atoms {
            if !(x >= lo && x < hi) {
                return Err(Error::AtomOutsideWindow { x, lo, hi });
            }
            if !(w.is_finite() && w >= 0.0) {
                return Err(invalid(format!("atom at {x} has invalid weight {w}")));
            }
            let k = (x / h).floor() as i64;
            masses[(k - first) as usize] += w;
        }
        let m = Self::from_parts(level, first, masses);
        if normalize {
            m.normalized()
        } else {
            Ok(m)
        }
    }

    /// Unit atom at `x`, stored in the cell containing it.
    pub fn point_mass(x: f64, level: u32) -> Result<Self> {
        check_level(level)?;
        if !x.is_finite() {
            return Err(invalid("point mass location must be finite"));
        }
        let k = (x / cell_width(level)).floor() as i64;
        Ok(Self::from_parts(level, k, vec![1.0]))
    }

    pub fn normalized(&self) -> Result<Self> {
        if !(self.total > 0.0) {
            return Err(invalid("cannot normalize a zero measure"));
        }
        let inv = 1.0 / self.total;
        Ok(Self::from_parts(
            self.level,
            self.offset,
            self.masses.iter().map(|m| m * inv).collect(),
        ))
    }

    /// Scale all masses by a nonnegative factor.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        if !(factor.is_finite() && factor >= 0.0) {
            return Err(invalid(format!("bad mass factor {factor}")));
        }
        Ok(Self::from_parts(
            self.level,
            self.offset,
            self.masses.iter().map(|m| m * factor).collect(),
        ))
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn cell_width(&self) -> f64 {
        cell_width(self.level)
    }

    /// Index of the first stored cell.
    pub fn offset(&self) -> i64 {
        self.offset
    }

    /// Left endpoint of the stored window.
    pub fn origin(&self) -> f64 {
        self.offset as f64 * self.cell_width()
    }

    /// Right endpoint (exclusive) of the stored window.
    pub fn window_end(&self) -> f64 {
        (self.offset + self.masses.len() as i64) as f64 * self.cell_width()
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn len(&self) -> usize {
        self.masses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masses.is_empty()
    }

    pub fn total_mass(&self) -> f64 {
        self.total
    }

    /// Center of the stored cell `i`.
    pub fn center(&self, i: usize) -> f64 {
        (self.offset as f64 + i as f64 + 0.5) * self.cell_width()
    }

    /// `(center, mass)` for every cell carrying positive mass.
    pub fn atoms(&self) -> Vec<(f64, f64)> {
        self.masses
            .iter()
            .enumerate()
            .filter(|(_, m)| **m > 0.0)
            .map(|(i, m)| (self.center(i), *m))
            .collect()
    }

    pub fn occupied_count(&self) -> usize {
        self.masses.iter().filter(|m| **m > 0.0).count()
    }

    /// Closed hull `[lo, hi]` of the occupied cells, or None for a zero measure.
    pub fn support(&self) -> Option<(f64, f64)> {
        let first = self.masses.iter().position(|m| *m > 0.0)?;
        let last = self.masses.iter().rposition(|m| *m > 0.0)?;
        let h = self.cell_width();
        Some((
            (self.offset + first as i64) as f64 * h,
            (self.offset + last as i64 + 1) as f64 * h,
        ))
    }

    /// Same measure with leading and trailing empty cells dropped.
    pub fn trimmed(&self) -> Self {
        let first = match self.masses.iter().position(|m| *m > 0.0) {
            Some(f) => f,
            None => return Self::from_parts(self.level, self.offset, Vec::new()),
        };
        let last = self.masses.iter().rposition(|m| *m > 0.0).unwrap_or(first);
        GridMeasure {
            level: self.level,
            offset: self.offset + first as i64,
            masses: self.masses[first..=last].to_vec(),
            total: self.total,
        }
    }

    /// Split every cell evenly into its children at a finer level.
    pub fn refine(&self, level: u32) -> Result<Self> {
        check_level(level)?;
        if level < self.level {
            return Err(invalid(format!(
                "cannot refine level {} down to {level}",
                self.level
            )));
        }
        if level == self.level {
            return Ok(self.clone());
        }
        let f = 1usize << (level - self.level);
        let share = 1.0 / f as f64;
        let mut masses = Vec::with_capacity(self.masses.len() * f);
        for &m in &self.masses {
            masses.extend(std::iter::repeat(m * share).take(f));
        }
        Ok(Self::from_parts(level, self.offset * f as i64, masses))
    }

    /// Mass of the stored cells intersecting `[lo, hi)` by whole-cell inclusion
    /// of the cells whose centers lie in the interval.
    pub fn mass_in(&self, lo: f64, hi: f64) -> f64 {
        self.masses
            .iter()
            .enumerate()
            .filter(|(i, _)| {
                let c = self.center(*i);
                c >= lo && c < hi
            })
            .map(|(_, m)| *m)
            .sum()
    }

    /// Cell mass at absolute index `k`, zero outside the window.
    pub fn mass_at(&self, k: i64) -> f64 {
        let i = k - self.offset;
        if i < 0 || i >= self.masses.len() as i64 {
            0.0
        } else {
            self.masses[i as usize]
        }
    }

    /// Columnar text: `level`, `origin`, `count` headers then one mass per line.
    pub fn to_text(&self) -> String {
        let mut s = String::with_capacity(24 * (self.masses.len() + 3));
        let _ = writeln!(s, "level {}", self.level);
        let _ = writeln!(s, "origin {:.16e}", self.origin());
        let _ = writeln!(s, "count {}", self.masses.len());
        for m in &self.masses {
            let _ = writeln!(s, "{m:.16e}");
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty());
        let mut header = |key: &str| -> Result<(usize, String)> {
            let (n, line) = lines.next().ok_or(Error::Parse {
                line: 0,
                msg: format!("missing `{key}` header"),
            })?;
            let rest = line
                .trim()
                .strip_prefix(key)
                .ok_or(Error::Parse {
                    line: n + 1,
                    msg: format!("expected `{key}`"),
                })?
                .trim()
                .to_string();
            Ok((n + 1, rest))
        };
        let (ln, level) = header("level")?;
        let level: u32 = level.parse().map_err(|_| Error::Parse {
            line: ln,
            msg: format!("bad level `{level}`"),
        })?;
        check_level(level)?;
        let (ln, origin) = header("origin")?;
        let origin: f64 = origin.parse().map_err(|_| Error::Parse {
            line: ln,
            msg: format!("bad origin `{origin}`"),
        })?;
        let idx = origin / cell_width(level);
        if idx.fract() != 0.0 || !idx.is_finite() {
            return Err(Error::Parse {
                line: ln,
                msg: "origin is not a multiple of the cell width".into(),
            });
        }
        let (ln, count) = header("count")?;
        let count: usize = count.parse().map_err(|_| Error::Parse {
            line: ln,
            msg: format!("bad count `{count}`"),
        })?;
        let mut masses = Vec::with_capacity(count);
        for (n, line) in lines {
            let v: f64 = line.trim().parse().map_err(|_| Error::Parse {
                line: n + 1,
                msg: format!("bad mass `{}`", line.trim()),
            })?;
            masses.push(v);
        }
        if masses.len() != count {
            return Err(Error::Parse {
                line: 0,
                msg: format!("count says {count}, found {} masses", masses.len()),
            });
        }
        Self::from_cell_masses(level, idx as i64, masses)
    }
}

/// The bump P: 1 on [-1/2, 1/2], 0 outside (-1, 1), a decreasing cubic
/// smoothstep in between. Integral 3/2.
pub fn bump(x: f64) -> f64 {
    let a = x.abs();
    if a <= 0.5 {
        1.0
    } else if a >= 1.0 {
        0.0
    } else {
        let u = 2.0 * a - 1.0;
        1.0 - u * u * (3.0 - 2.0 * u)
    }
}

/// Scaled approximate identity P_delta.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Kernel {
    scale: f64,
}

impl Kernel {
    pub fn new(scale: f64) -> Result<Self> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(invalid(format!("kernel scale {scale} must be positive")));
        }
        Ok(Kernel { scale })
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// Unnormalized profile P(x / scale).
    pub fn profile(&self, x: f64) -> f64 {
        bump(x / self.scale)
    }

    /// Continuous density P_delta(x) = P(x/delta) / (3/2 delta).
    pub fn density(&self, x: f64) -> f64 {
        self.profile(x) / (1.5 * self.scale)
    }

    /// Cell weights at offsets -L..=L (L = scale / h), summing to one.
    pub fn weights(&self, h: f64) -> Result<Vec<f64>> {
        let ratio = self.scale / h;
        if ratio < 1.0 {
            return Err(Error::BelowResolution {
                scale: self.scale,
                grid: h,
            });
        }
        if exact_log2(ratio).is_none() {
            return Err(Error::NotDyadic {
                scale: self.scale,
                grid: h,
            });
        }
        let l = ratio as i64;
        let raw: Vec<f64> = (-l..=l).map(|j| bump(j as f64 / ratio)).collect();
        let s: f64 = raw.iter().sum();
        Ok(raw.into_iter().map(|w| w / s).collect())
    }
}

/// mu * P_delta on the same grid; the window grows by delta on each side.
pub fn regularize(mu: &GridMeasure, delta: f64) -> Result<GridMeasure> {
    let h = mu.cell_width();
    let w = Kernel::new(delta)?.weights(h)?;
    let l = (w.len() / 2) as i64;
    if l == 1 {
        // At delta = h the weights are (0, 1, 0).
        return Ok(mu.clone());
    }
    let masses = numeric::convolve(mu.masses(), &w);
    Ok(GridMeasure::from_parts(mu.level, mu.offset - l, masses))
}

/// Image of mu under x -> a x + b, spreading each cell's uniform mass over
/// the target cells it overlaps at `level`.
pub fn pushforward_affine_at(mu: &GridMeasure, a: f64, b: f64, level: u32) -> Result<GridMeasure> {
    check_level(level)?;
    if a == 0.0 || !a.is_finite() || !b.is_finite() {
        return Err(invalid(format!(
            "degenerate affine map x -> {a} x + {b}; use an explicit point mass"
        )));
    }
    let h = mu.cell_width();
    let ht = cell_width(level);
    let Some((lo, hi)) = mu.support() else {
        return Ok(GridMeasure::from_parts(level, 0, Vec::new()));
    };
    let (ilo, ihi) = if a > 0.0 {
        (a * lo + b, a * hi + b)
    } else {
        (a * hi + b, a * lo + b)
    };
    let first = (ilo / ht).floor() as i64;
    let last = (ihi / ht).ceil() as i64;
    let mut out = vec![0.0; (last - first).max(1) as usize];
    for (i, &m) in mu.masses().iter().enumerate() {
        if m == 0.0 {
            continue;
        }
        let x0 = (mu.offset + i as i64) as f64 * h;
        let (y0, y1) = if a > 0.0 {
            (a * x0 + b, a * (x0 + h) + b)
        } else {
            (a * (x0 + h) + b, a * x0 + b)
        };
        let width = y1 - y0;
        let k0 = (y0 / ht).floor() as i64;
        let k1 = ((y1 / ht).ceil() as i64).max(k0 + 1);
        if k1 - k0 == 1 {
            out[(k0 - first) as usize] += m;
            continue;
        }
        for k in k0..k1 {
            let c0 = (k as f64 * ht).max(y0);
            let c1 = ((k + 1) as f64 * ht).min(y1);
            if c1 > c0 {
                out[(k - first) as usize] += m * (c1 - c0) / width;
            }
        }
    }
    Ok(GridMeasure::from_parts(level, first, out))
}

/// Affine image re-binned at the source level.
pub fn pushforward_affine(mu: &GridMeasure, a: f64, b: f64) -> Result<GridMeasure> {
    pushforward_affine_at(mu, a, b, mu.level)
}

/// Zero the mass outside `set`, renormalize, and report the retained fraction.
pub fn restrict_normalize(mu: &GridMeasure, set: &DyadicGridSet) -> Result<(GridMeasure, f64)> {
    if set.dim() != 1 {
        return Err(invalid("restriction set must be one-dimensional"));
    }
    if set.level() > mu.level {
        return Err(invalid(format!(
            "set level {} is finer than measure level {}",
            set.level(),
            mu.level
        )));
    }
    let shift = mu.level - set.level();
    let masses: Vec<f64> = mu
        .masses()
        .iter()
        .enumerate()
        .map(|(i, &m)| {
            let k = (mu.offset + i as i64) >> shift;
            if m > 0.0 && set.contains(&[k, 0]) {
                m
            } else {
                0.0
            }
        })
        .collect();
    let kept = GridMeasure::from_parts(mu.level, mu.offset, masses);
    if !(kept.total > 0.0) {
        return Err(Error::EmptyRestriction);
    }
    let fraction = kept.total / mu.total;
    Ok((kept.normalized()?, fraction))
}

/// Number of cells spanned by a ball of radius r, checking r is a dyadic
/// multiple of the cell width.
pub(crate) fn ball_cells(h: f64, r: f64) -> Result<usize> {
    if r < h {
        return Err(Error::BelowResolution { scale: r, grid: h });
    }
    if exact_log2(r / h).is_none() {
        return Err(Error::NotDyadic { scale: r, grid: h });
    }
    Ok((2.0 * r / h) as usize)
}

/// Masses of the balls `[x - r, x + r)` centered at every grid line x that
/// touches the window, in order of x.
pub(crate) fn ball_masses(mu: &GridMeasure, r: f64) -> Result<Vec<f64>> {
    let w = ball_cells(mu.cell_width(), r)?;
    let n = mu.len();
    let mut prefix = Vec::with_capacity(n + 1);
    prefix.push(0.0);
    let mut acc = 0.0;
    for m in mu.masses() {
        acc += m;
        prefix.push(acc);
    }
    let half = w / 2;
    // Ball centered at grid line j covers cells j-half .. j+half-1 (window-relative).
    let out = (0..=n + half)
        .map(|j| {
            let lo = j.saturating_sub(half).min(n);
            let hi = (j + half).min(n);
            (prefix[hi] - prefix[lo]).max(0.0)
        })
        .collect();
    Ok(out)
}

/// Largest mass of a radius-r ball centered at a grid line.
pub fn sup_ball_mass(mu: &GridMeasure, r: f64) -> Result<f64> {
    Ok(ball_masses(mu, r)?.into_iter().fold(0.0, f64::max))
}

/// L1 distance between distribution functions, i.e. the transport cost of
/// moving one measure onto the other.
pub fn cdf_distance(a: &GridMeasure, b: &GridMeasure) -> Result<f64> {
    let level = a.level.max(b.level);
    let a = a.refine(level)?;
    let b = b.refine(level)?;
    let h = cell_width(level);
    let lo = a.offset.min(b.offset);
    let hi = (a.offset + a.len() as i64).max(b.offset + b.len() as i64);
    let (mut fa, mut fb, mut acc) = (0.0, 0.0, 0.0);
    for k in lo..hi {
        fa += a.mass_at(k);
        fb += b.mass_at(k);
        acc += (fa - fb).abs() * h;
    }
    Ok(acc)
}

/// Largest cellwise mass difference after aligning grids.
pub fn max_cell_difference(a: &GridMeasure, b: &GridMeasure) -> Result<f64> {
    let level = a.level.max(b.level);
    let a = a.refine(level)?;
    let b = b.refine(level)?;
    let lo = a.offset.min(b.offset);
    let hi = (a.offset + a.len() as i64).max(b.offset + b.len() as i64);
    Ok((lo..hi)
        .map(|k| (a.mass_at(k) - b.mass_at(k)).abs())
        .fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_sixteen_cells() {
        let mu = GridMeasure::uniform(0.0, 1.0, 4).unwrap();
        assert_eq!(mu.len(), 16);
        for m in mu.masses() {
            assert!((m - 1.0 / 16.0).abs() < 1e-15);
        }
    }

    #[test]
    fn atom_goes_to_containing_cell_and_ties_right() {
        for m in [1, 5, 12] {
            let mu = GridMeasure::from_atoms(&[(1.0, 1.0)], 0.0, 2.0, m, true).unwrap();
            let t = mu.trimmed();
            assert_eq!(t.len(), 1);
            assert_eq!(t.origin(), 1.0);
            assert_eq!(t.total_mass(), 1.0);
        }
    }

    #[test]
    fn atom_outside_window_is_rejected() {
        let e = GridMeasure::from_atoms(&[(2.5, 1.0)], 0.0, 2.0, 4, false).unwrap_err();
        assert!(matches!(e, Error::AtomOutsideWindow { x, .. } if x == 2.5));
    }

    #[test]
    fn negative_density_rejected() {
        let e = GridMeasure::from_density(|x| x - 0.5, 0.0, 1.0, 4, false).unwrap_err();
        assert!(matches!(e, Error::NegativeDensity { .. }));
    }

    #[test]
    fn linear_density_matches_midpoint_oracle() {
        let mu = GridMeasure::from_density(|x| 2.0 * x, 0.0, 1.0, 10, false).unwrap();
        assert!((mu.total_mass() - 1.0).abs() < 1e-9);
        let h = 1.0 / 1024.0;
        for (i, w) in mu.masses().windows(2).enumerate() {
            assert!(w[1] > w[0]);
            let c = (i as f64 + 0.5) * h;
            assert!((w[0] - 2.0 * c * h).abs() < 1e-15);
        }
    }

    #[test]
    fn kernel_sandwich_is_cell_exact() {
        for ratio in [2.0, 4.0, 8.0, 64.0] {
            let k = Kernel::new(ratio).unwrap();
            let w = k.weights(1.0).unwrap();
            let l = (w.len() / 2) as i64;
            let top = w[l as usize];
            for (j, x) in (-l..=l).zip(&w) {
                let d = j.abs() as f64;
                if d <= ratio / 2.0 {
                    assert_eq!(*x, top);
                }
                if d >= ratio {
                    assert_eq!(*x, 0.0);
                }
            }
            assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn regularize_below_grid_rejected() {
        let mu = GridMeasure::uniform(0.0, 1.0, 6).unwrap();
        assert!(matches!(
            regularize(&mu, 1.0 / 128.0),
            Err(Error::BelowResolution { .. })
        ));
        assert!(matches!(regularize(&mu, 0.05), Err(Error::NotDyadic { .. })));
    }

    #[test]
    fn regularize_point_mass_matches_quadrature() {
        let level = 8;
        let h = cell_width(level);
        let delta = 0.25;
        let mu = GridMeasure::point_mass(0.0, level).unwrap();
        let r = regularize(&mu, delta).unwrap();
        assert!((r.total_mass() - 1.0).abs() < 1e-12);
        let k = Kernel::new(delta).unwrap();
        let c0 = mu.center(0);
        for (i, m) in r.masses().iter().enumerate() {
            let direct = k.density(r.center(i) - c0);
            assert!((m / h - direct).abs() < 1e-8);
        }
        let (lo, hi) = r.support().unwrap();
        assert!(lo >= -delta - h && hi <= delta + 2.0 * h);
    }

    #[test]
    fn regularize_uniform_keeps_interior() {
        let mu = GridMeasure::uniform(0.0, 1.0, 10).unwrap();
        let r = regularize(&mu, 0.125).unwrap();
        let h = mu.cell_width();
        for i in 0..r.len() {
            let c = r.center(i);
            if c > 0.125 && c < 0.875 {
                assert!((r.masses()[i] - h).abs() < 1e-6 * h);
            }
        }
    }

    #[test]
    fn regularize_twice_is_close_to_once() {
        let mu = GridMeasure::uniform(0.25, 0.75, 9).unwrap();
        let d = 1.0 / 32.0;
        let once = regularize(&mu, d).unwrap();
        let twice = regularize(&once, d).unwrap();
        let (a0, b0) = once.support().unwrap();
        let (a1, b1) = twice.support().unwrap();
        assert!(a0 - a1 <= 2.0 * d && b1 - b0 <= 2.0 * d);
        assert!(cdf_distance(&once, &twice).unwrap() <= 0.1);
    }

    #[test]
    fn pushforward_identity_and_doubling() {
        let mu = GridMeasure::uniform(0.0, 1.0, 6).unwrap();
        assert_eq!(pushforward_affine(&mu, 1.0, 0.0).unwrap(), mu);
        let d = pushforward_affine(&mu, 2.0, 0.0).unwrap();
        assert_eq!(d.len(), 128);
        for m in d.masses() {
            assert!((m - 1.0 / 128.0).abs() < 1e-15);
        }
        assert!(pushforward_affine(&mu, 0.0, 1.0).is_err());
    }

    #[test]
    fn pushforward_reflection_preserves_mass() {
        let mu = GridMeasure::from_density(|x| 1.0 + x, 0.0, 1.0, 7, true).unwrap();
        let r = pushforward_affine_at(&mu, -0.75, 0.3, 9).unwrap();
        assert!((r.total_mass() - 1.0).abs() < 1e-12);
        let (lo, hi) = r.support().unwrap();
        let ht = cell_width(9);
        assert!(lo >= -0.45 - ht && hi <= 0.3 + ht);
    }

    #[test]
    fn restriction_to_half() {
        let mu = GridMeasure::uniform(0.0, 1.0, 8).unwrap();
        let a = DyadicGridSet::from_cells_1d(1, vec![0]).unwrap();
        let (r, f) = restrict_normalize(&mu, &a).unwrap();
        assert!((f - 0.5).abs() < 1e-12);
        assert_eq!(r.support().unwrap(), (0.0, 0.5));
        let full = DyadicGridSet::from_cells_1d(0, vec![0]).unwrap();
        let (same, f) = restrict_normalize(&mu, &full).unwrap();
        assert!((f - 1.0).abs() < 1e-15);
        assert!(max_cell_difference(&same, &mu).unwrap() < 1e-15);
        let far = DyadicGridSet::from_cells_1d(1, vec![5]).unwrap();
        assert!(matches!(
            restrict_normalize(&mu, &far),
            Err(Error::EmptyRestriction)
        ));
    }

    #[test]
    fn ball_masses_examples() {
        let p = GridMeasure::point_mass(0.3, 8).unwrap();
        for r in [1.0 / 256.0, 1.0 / 16.0, 0.5] {
            assert_eq!(sup_ball_mass(&p, r).unwrap(), 1.0);
        }
        let u = GridMeasure::uniform(0.0, 1.0, 8).unwrap();
        assert!((sup_ball_mass(&u, 0.125).unwrap() - 0.25).abs() < 1e-12);
    }

    #[test]
    fn text_round_trip_is_bit_exact() {
        let mu = GridMeasure::from_density(|x| (3.0 * x).sin().abs() + 0.1, -0.5, 0.75, 7, true)
            .unwrap();
        let back = GridMeasure::from_text(&mu.to_text()).unwrap();
        assert_eq!(back, mu);
    }

    #[test]
    fn text_rejects_bad_count() {
        let t = "level 3\norigin 0\ncount 2\n0.5\n";
        assert!(GridMeasure::from_text(t).is_err());
    }
}
