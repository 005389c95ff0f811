//! Explicit example measures and seeded random Cantor inputs.

use num_complex::Complex64;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dyadic_sets::DyadicGridSet;
use crate::energy::{frostman_constant, FrostmanReport};
use crate::error::{invalid, Error, Result};
use crate::measure_grid::{cell_width, pushforward_affine_at, GridMeasure};
use crate::numeric::exact_log2;
use crate::spectral::{fourier_at, l2_at_scale, multi_product_fourier};

fn lattice_distance(x: f64, spacing: f64) -> f64 {
    let t = x / spacing;
    (t - t.round()).abs() * spacing
}

/// `n_k = 2^(2^k)`, k >= 1, while `1/n_k` stays above the grid width.
pub fn default_schedule(level: u32) -> Vec<u64> {
    (1..6)
        .map(|k| 1u32 << k)
        .take_while(|&e| e <= level)
        .map(|e| 1u64 << e)
        .collect()
}

/// Cells of `[0, 1)` whose centers lie within `1/n_k` of `n_k^-s Z` for every
/// k, with the uniform measure on them.
pub fn make_h_s(s: f64, schedule: &[u64], level: u32) -> Result<(DyadicGridSet, GridMeasure)> {
    if !(s > 0.0 && s <= 1.0) {
        return Err(invalid(format!("s = {s} outside (0, 1]")));
    }
    if schedule.windows(2).any(|w| w[0] >= w[1]) {
        return Err(invalid("schedule must be strictly increasing"));
    }
    let h = cell_width(level);
    if let Some(&n) = schedule.iter().find(|&&n| 1.0 / (n as f64) < h) {
        return Err(Error::BelowResolution { scale: 1.0 / n as f64, grid: h });
    }
    let count = 1i64 << level;
    let mut cells: Vec<i64> = (0..count).collect();
    for (k, &n) in schedule.iter().enumerate() {
        let nf = n as f64;
        let spacing = nf.powf(-s);
        cells.retain(|&c| lattice_distance((c as f64 + 0.5) * h, spacing) <= 1.0 / nf);
        if cells.is_empty() {
            return Err(Error::EmptyHs { k, n });
        }
    }
    let masses = {
        let mut m = vec![0.0; count as usize];
        let w = 1.0 / cells.len() as f64;
        for &c in &cells {
            m[c as usize] = w;
        }
        m
    };
    Ok((
        DyadicGridSet::from_cells_1d(level, cells)?,
        GridMeasure::from_cell_masses(level, 0, masses)?,
    ))
}

/// Largest distance from a product of cell centers of `a` and `b` to the
/// lattice `n^-s_sum Z`.
pub fn product_lattice_defect(a: &DyadicGridSet, b: &DyadicGridSet, s_sum: f64, n: u64) -> Result<f64> {
    if a.dim() != 1 || b.dim() != 1 {
        return Err(invalid("product containment needs 1-D sets"));
    }
    let spacing = (n as f64).powf(-s_sum);
    let mut worst = 0.0f64;
    for x in a.cells() {
        let cx = a.center(x)[0];
        for y in b.cells() {
            worst = worst.max(lattice_distance(cx * b.center(y)[0], spacing));
        }
    }
    Ok(worst)
}

#[derive(Clone, Debug)]
pub struct Comb {
    pub set: DyadicGridSet,
    pub measure: GridMeasure,
    /// `min cos(2 pi x / r)` over the set.
    pub min_cos: f64,
}

/// `r^-1` teeth of length `c r` centered at `r Z` in `[0, 1)`, each two cells
/// wide, with the uniform probability measure on them.
pub fn make_comb(r: f64, c: f64) -> Result<Comb> {
    let (Some(lr), Some(lc)) = (exact_log2(r), exact_log2(c)) else {
        return Err(invalid(format!("comb needs dyadic r and c, got r = {r}, c = {c}")));
    };
    if lr > -2 || lc > -1 {
        return Err(invalid(format!("need r <= 1/4 and c <= 1/2, got r = {r}, c = {c}")));
    }
    let level = (1 - lr - lc) as u32;
    let teeth = 1i64 << (-lr);
    let per = 1i64 << (level as i32 + lr);
    let mut cells = Vec::with_capacity(2 * teeth as usize);
    for k in 0..teeth {
        cells.push(k * per - 1);
        cells.push(k * per);
    }
    let h = cell_width(level);
    // cos(2 pi x / r) is smallest at the tooth ends, |x - k r| = c r / 2.
    let min_cos = cells
        .iter()
        .flat_map(|&k| [k as f64 * h, (k + 1) as f64 * h])
        .map(|x| (2.0 * std::f64::consts::PI * x / r).cos())
        .fold(f64::INFINITY, f64::min);
    if min_cos < 0.5 {
        return Err(Error::CosineFloor { min: min_cos });
    }
    let offset = -1;
    let mut masses = vec![0.0; (teeth * per) as usize + 1];
    let w = 1.0 / cells.len() as f64;
    for &k in &cells {
        masses[(k - offset) as usize] = w;
    }
    Ok(Comb {
        set: DyadicGridSet::from_cells_1d(level, cells)?,
        measure: GridMeasure::from_cell_masses(level, offset, masses)?,
        min_cos,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct L2Counterexample {
    #[serde(skip)]
    pub measure: GridMeasure,
    pub s: f64,
    pub delta: f64,
    pub tooth_scale: f64,
    pub l2_sq: f64,
    pub l2_target: f64,
    /// `|(mu x mu x mu)^(1/delta)|`, exact over atoms.
    pub triple_magnitude: f64,
    /// `|triple - e^(-2 pi i / delta) rho^(delta^-s)^3|`.
    pub phase_gap: f64,
    /// `2 pi (delta^(2-3s) + 3 delta^(1-2s))`.
    pub phase_budget: f64,
}

/// Comb with tooth scale `delta^s` squeezed into `[1, 1 + delta^(1-s)]`.
pub fn make_l2_counterexample(s: f64, delta: f64, c: f64) -> Result<L2Counterexample> {
    if !(s > 0.0 && s < 0.5) {
        return Err(invalid(format!("s = {s} outside (0, 1/2)")));
    }
    let b1 = delta.powf(2.0 - 3.0 * s);
    let b2 = delta.powf(1.0 - 2.0 * s);
    let cap = (1.0 + 1e-9) / 16.0;
    if b1 > cap || b2 > cap {
        return Err(Error::Precondition(format!(
            "phase budget too large: delta^(2-3s) = {b1}, delta^(1-2s) = {b2}"
        )));
    }
    // delta^s and delta^(1-s) must be powers of two; snap away powf rounding.
    let dyadic_power = |e: f64| -> Option<i64> {
        let ld = exact_log2(delta)? as f64 * e;
        ((ld - ld.round()).abs() < 1e-9).then(|| ld.round() as i64)
    };
    let (Some(lr), Some(la)) = (dyadic_power(s), dyadic_power(1.0 - s)) else {
        return Err(invalid(format!(
            "delta^s = {} and delta^(1-s) = {} must both be dyadic",
            delta.powf(s),
            delta.powf(1.0 - s)
        )));
    };
    let r = (lr as f64).exp2();
    let a = (la as f64).exp2();
    let comb = make_comb(r, c)?;
    let level = comb.measure.level() + (-la) as u32;
    let mu = pushforward_affine_at(&comb.measure, a, 1.0, level)?.trimmed();
    let l2_sq = l2_at_scale(&mu, delta)?.powi(2);
    let xi = 1.0 / delta;
    let atoms = mu.atoms();
    let triple: Complex64 = atoms
        .par_iter()
        .map(|&(d, q)| multi_product_fourier(&[&mu, &mu], xi * d).map(|z| z * q))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .sum();
    let rho_hat = fourier_at(&comb.measure, 1.0 / r);
    let predicted = crate::numeric::phasor(xi) * rho_hat.powi(3);
    Ok(L2Counterexample {
        measure: mu,
        s,
        delta,
        tooth_scale: r,
        l2_sq,
        l2_target: delta.powf(s - 1.0),
        triple_magnitude: triple.norm(),
        phase_gap: (triple - predicted).norm(),
        phase_budget: 2.0 * std::f64::consts::PI * (b1 + 3.0 * b2),
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct IntervalExample {
    #[serde(skip)]
    pub measure: GridMeasure,
    pub length: f64,
    /// Upper end of the support of the triple product.
    pub triple_support: f64,
    pub triple_magnitude: f64,
}

/// Uniform probability on `[0, c delta^(1-s)]`.
pub fn make_interval_example(s: f64, delta: f64, c: f64) -> Result<IntervalExample> {
    if !(s >= 0.0 && s < 2.0 / 3.0) || !(c > 0.0 && c <= 0.5) || !(delta > 0.0 && delta < 1.0) {
        return Err(invalid(format!("need s in [0, 2/3), c in (0, 1/2], got s = {s}, c = {c}")));
    }
    let len = c * delta.powf(1.0 - s);
    // At least 128 cells across the support, and no coarser than delta.
    let level = ((128.0 / len).log2().ceil() as u32).max((1.0 / delta).log2().ceil() as u32);
    let mu = GridMeasure::uniform(0.0, len, level)?.trimmed();
    let hi = mu.support().map_or(0.0, |(_, hi)| hi);
    let triple = multi_product_fourier(&[&mu, &mu, &mu], 1.0 / delta)?;
    Ok(IntervalExample {
        measure: mu,
        length: len,
        triple_support: hi.powi(3),
        triple_magnitude: triple.norm(),
    })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Keep {
    Fixed(u32),
    Schedule(Vec<u32>),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CantorSpec {
    pub block: u32,
    pub keep: Keep,
    pub depth: u32,
    pub seed: u64,
}

impl CantorSpec {
    /// Kept-children schedule whose running dimension tracks `s`.
    pub fn for_dimension(s: f64, block: u32, depth: u32, seed: u64) -> Result<Self> {
        if !(s >= 0.0 && s <= 1.0) || block == 0 || block > 16 || depth == 0 {
            return Err(invalid("need s in [0, 1], 1 <= block <= 16, depth >= 1"));
        }
        let full = 1u32 << block;
        let mut bits = 0.0;
        let mut keep = Vec::with_capacity(depth as usize);
        for j in 1..=depth {
            let target = s * (block * j) as f64 - bits;
            let k = (target.exp2().round() as u32).clamp(1, full);
            bits += (k as f64).log2();
            keep.push(k);
        }
        let spec = CantorSpec { block, keep: Keep::Schedule(keep), depth, seed };
        let err = (spec.dimension() - s).abs();
        if err > 1.0 / (block * depth) as f64 + 1e-12 {
            return Err(invalid(format!("schedule misses s = {s} by {err}")));
        }
        Ok(spec)
    }

    pub fn level(&self) -> u32 {
        self.block * self.depth
    }

    pub fn keep_at(&self, j: usize) -> u32 {
        match &self.keep {
            Keep::Fixed(k) => *k,
            Keep::Schedule(v) => v[j],
        }
    }

    pub fn dimension(&self) -> f64 {
        let bits: f64 = (0..self.depth as usize).map(|j| (self.keep_at(j) as f64).log2()).sum();
        bits / (self.block * self.depth) as f64
    }

    pub fn validate(&self) -> Result<()> {
        if self.block == 0 || self.depth == 0 || self.level() > 30 {
            return Err(invalid("need block, depth >= 1 and block * depth <= 30"));
        }
        if let Keep::Schedule(v) = &self.keep {
            if v.len() != self.depth as usize {
                return Err(invalid("keep schedule length must equal depth"));
            }
        }
        let full = 1u32 << self.block;
        for j in 0..self.depth as usize {
            let k = self.keep_at(j);
            if k == 0 || k > full {
                return Err(invalid(format!("keep = {k} outside [1, {full}]")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct RandomCantor {
    pub set: DyadicGridSet,
    pub measure: GridMeasure,
    pub s: f64,
    pub frostman: FrostmanReport,
}

/// Seeded random Cantor set: each kept block picks its children uniformly
/// without replacement; mass splits equally.
pub fn make_random_frostman(spec: &CantorSpec) -> Result<RandomCantor> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let full = 1usize << spec.block;
    let mut cells: Vec<i64> = vec![0];
    for j in 0..spec.depth as usize {
        let k = spec.keep_at(j) as usize;
        let mut next = Vec::with_capacity(cells.len() * k);
        for &p in &cells {
            let mut picks: Vec<usize> = sample(&mut rng, full, k).into_vec();
            picks.sort_unstable();
            next.extend(picks.into_iter().map(|c| (p << spec.block) + c as i64));
        }
        cells = next;
    }
    let level = spec.level();
    let mut masses = vec![0.0; 1usize << level];
    let w = 1.0 / cells.len() as f64;
    for &c in &cells {
        masses[c as usize] = w;
    }
    let measure = GridMeasure::from_cell_masses(level, 0, masses)?;
    let s = spec.dimension();
    let frostman = frostman_constant(&measure, s, (cell_width(level), 1.0))?;
    Ok(RandomCantor {
        set: DyadicGridSet::from_cells_1d(level, cells)?,
        measure,
        s,
        frostman,
    })
}
