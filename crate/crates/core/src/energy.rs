//! Riesz s-energies at scale, Frostman constants, and the passages between
//! energy bounds and non-concentrated pieces.

use std::collections::HashMap;
use std::sync::{Mutex, OnceLock};

use serde::Serialize;

use crate::dyadic_sets::{set_check, DyadicGridSet, SetCheck, SetCheckKind};
use crate::error::{invalid, Error, Result};
use crate::measure_grid::{ball_masses, cell_width, regularize, GridMeasure};
use crate::numeric::{autocorrelation, dft_real, exact_log2, pairwise_sum};

fn check_s(s: f64) -> Result<()> {
    if s > 0.0 && s < 1.0 {
        Ok(())
    } else {
        Err(invalid(format!(
            "s = {s} outside (0, 1); the kernel is not integrable on the diagonal"
        )))
    }
}

/// Same-cell Riesz integral of a uniform cell with itself, per unit mass squared.
fn diagonal_weight(h: f64, s: f64) -> f64 {
    2.0 * h.powf(-s) / ((1.0 - s) * (2.0 - s))
}

/// Energy of the piecewise-constant density carried by the cell masses.
fn cell_energy(mu: &GridMeasure, s: f64) -> f64 {
    let h = mu.cell_width();
    let a = autocorrelation(mu.masses());
    if a.is_empty() {
        return 0.0;
    }
    let mut terms = Vec::with_capacity(a.len());
    terms.push(a[0] * diagonal_weight(h, s));
    for (k, &v) in a.iter().enumerate().skip(1) {
        terms.push(2.0 * v * (k as f64 * h).powf(-s));
    }
    pairwise_sum(&terms)
}

/// `I_s(mu_delta)`.
pub fn energy_spatial(mu: &GridMeasure, s: f64, delta: f64) -> Result<f64> {
    check_s(s)?;
    Ok(cell_energy(&regularize(mu, delta)?, s))
}

/// `int_0^X |mu_delta^(xi)|^2 xi^(s-1) d xi` doubled for the negative half,
/// before calibration. Linear interpolation of `|F|^2` between FFT nodes
/// against exact moments of the weight.
fn fourier_raw(mu: &GridMeasure, s: f64, delta: f64) -> Result<f64> {
    let reg = regularize(mu, delta)?.trimmed();
    let h = reg.cell_width();
    let n = reg.len().max(1);
    let m = (8 * n).next_power_of_two();
    let spec = dft_real(reg.masses(), m);
    let dxi = 1.0 / (m as f64 * h);
    let top = ((8.0 / delta) / dxi).ceil() as usize;
    let value = |k: usize| {
        let xi = k as f64 * dxi;
        let x = std::f64::consts::PI * xi * h;
        let sinc = if k == 0 { 1.0 } else { x.sin() / x };
        spec[k % m].norm_sqr() * sinc * sinc
    };
    let mut terms = Vec::with_capacity(top);
    let mut f0 = value(0);
    for k in 0..top {
        let f1 = value(k + 1);
        let (a, b) = (k as f64 * dxi, (k + 1) as f64 * dxi);
        let m0 = (b.powf(s) - a.powf(s)) / s;
        let m1 = (b.powf(s + 1.0) - a.powf(s + 1.0)) / (s + 1.0);
        // f(x) = f0 + (f1 - f0)(x - a)/dxi.
        let slope = (f1 - f0) / dxi;
        terms.push(f0 * m0 + slope * (m1 - a * m0));
        f0 = f1;
    }
    Ok(2.0 * pairwise_sum(&terms))
}

type CalKey = (u64, u32, u64);

fn calibration_cache() -> &'static Mutex<HashMap<CalKey, f64>> {
    static CACHE: OnceLock<Mutex<HashMap<CalKey, f64>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// `c_s` making the Fourier side exact on uniform [0, 1] at this level and
/// kernel-to-cell ratio.
pub fn calibration(s: f64, level: u32, delta: f64) -> Result<f64> {
    check_s(s)?;
    let ratio = delta / cell_width(level);
    let key = (s.to_bits(), level, ratio.to_bits());
    if let Some(&c) = calibration_cache().lock().expect("cache poisoned").get(&key) {
        return Ok(c);
    }
    let u = GridMeasure::uniform(0.0, 1.0, level)?;
    let c = energy_spatial(&u, s, delta)? / fourier_raw(&u, s, delta)?;
    calibration_cache()
        .lock()
        .expect("cache poisoned")
        .insert(key, c);
    Ok(c)
}

/// `c_s int |mu_delta^(xi)|^2 |xi|^(s-1) d xi`.
pub fn energy_fourier(mu: &GridMeasure, s: f64, delta: f64) -> Result<f64> {
    let c = calibration(s, mu.level(), delta)?;
    Ok(c * fourier_raw(mu, s, delta)?)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EnergyReport {
    pub s: f64,
    pub delta: f64,
    pub spatial: f64,
    pub fourier: f64,
    pub calibration: f64,
}

pub fn energy_report(mu: &GridMeasure, s: f64, delta: f64) -> Result<EnergyReport> {
    let calibration = calibration(s, mu.level(), delta)?;
    Ok(EnergyReport {
        s,
        delta,
        spatial: energy_spatial(mu, s, delta)?,
        fourier: calibration * fourier_raw(mu, s, delta)?,
        calibration,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FrostmanReport {
    pub s: f64,
    pub r_range: (f64, f64),
    pub constant: f64,
    /// Radius attaining the constant.
    pub r_star: f64,
}

/// `max mu(B(x, r)) / r^s` over grid-line centers and dyadic r in range.
pub fn frostman_constant(mu: &GridMeasure, s: f64, r_range: (f64, f64)) -> Result<FrostmanReport> {
    let (r_min, r_max) = r_range;
    let h = mu.cell_width();
    if r_min < h {
        return Err(Error::BelowResolution { scale: r_min, grid: h });
    }
    if exact_log2(r_min).is_none() || r_max < r_min {
        return Err(invalid(format!("bad radius range [{r_min}, {r_max}]")));
    }
    let mut best = (0.0f64, r_min);
    let mut r = r_min;
    while r <= r_max {
        let sup = ball_masses(mu, r)?.into_iter().fold(0.0, f64::max);
        let c = sup / r.powf(s);
        if c > best.0 {
            best = (c, r);
        }
        r *= 2.0;
    }
    Ok(FrostmanReport {
        s,
        r_range,
        constant: best.0,
        r_star: best.1,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct ExceptionalSet {
    #[serde(skip)]
    pub set: DyadicGridSet,
    /// `mu(E)`.
    pub mass: f64,
    /// `log2(1/delta) delta^eps`.
    pub mass_bound: f64,
    pub energy: f64,
    /// Whether `I_s^delta(mu) <= delta^-eps`, under which the mass bound is guaranteed.
    pub guaranteed: bool,
}

/// Points where some ball `B(x, 2^-u)`, `u = 0..log2(1/delta)`, carries more
/// than `delta^-2eps 2^-su` of `mu_delta`. Balls are centered at cell centers;
/// their two boundary cells count half.
pub fn exceptional_set(mu: &GridMeasure, s: f64, delta: f64, eps: f64) -> Result<ExceptionalSet> {
    check_s(s)?;
    if !(eps > 0.0) {
        return Err(invalid("eps must be positive"));
    }
    let h = mu.cell_width();
    let Some(lu) = exact_log2(1.0 / delta) else {
        return Err(Error::NotDyadic { scale: delta, grid: h });
    };
    let energy = energy_spatial(mu, s, delta)?;
    let reg = regularize(mu, delta)?;
    let masses = reg.masses();
    let n = masses.len();
    let mut prefix = vec![0.0; n + 1];
    for (i, m) in masses.iter().enumerate() {
        prefix[i + 1] = prefix[i] + m;
    }
    let cell_mass = |j: i64| {
        if j < 0 || j >= n as i64 {
            0.0
        } else {
            masses[j as usize]
        }
    };
    let range = |a: i64, b: i64| {
        let a = a.clamp(0, n as i64) as usize;
        let b = b.clamp(0, n as i64) as usize;
        if b > a {
            prefix[b] - prefix[a]
        } else {
            0.0
        }
    };
    let threshold = delta.powf(-2.0 * eps);
    let mut flagged = vec![false; n];
    for u in 0..=lu.max(0) {
        let r = (-(u as f64)).exp2();
        if r < h {
            break;
        }
        let w = (r / h).round() as i64;
        let scale = r.powf(-s);
        for (i, f) in flagged.iter_mut().enumerate() {
            if *f {
                continue;
            }
            let i = i as i64;
            let mass = range(i - w + 1, i + w) + 0.5 * (cell_mass(i - w) + cell_mass(i + w));
            if mass * scale > threshold {
                *f = true;
            }
        }
    }
    let cells: Vec<i64> = flagged
        .iter()
        .enumerate()
        .filter(|(_, &f)| f)
        .map(|(i, _)| reg.offset() + i as i64)
        .collect();
    let mass = cells.iter().map(|&k| mu.mass_at(k)).sum();
    Ok(ExceptionalSet {
        set: DyadicGridSet::from_cells_1d(mu.level(), cells)?,
        mass,
        mass_bound: lu as f64 * delta.powf(eps),
        energy,
        guaranteed: energy <= delta.powf(-eps),
    })
}

/// `mu` with the cells of `set` removed (no renormalization).
pub fn remove_cells(mu: &GridMeasure, set: &DyadicGridSet) -> Result<GridMeasure> {
    if set.level() != mu.level() || set.dim() != 1 {
        return Err(invalid("removal set must be 1-D at the measure's level"));
    }
    let mut masses = mu.masses().to_vec();
    for c in set.cells() {
        let i = c[0] - mu.offset();
        if i >= 0 && (i as usize) < masses.len() {
            masses[i as usize] = 0.0;
        }
    }
    GridMeasure::from_cell_masses(mu.level(), mu.offset(), masses)
}

#[derive(Clone, Debug, Serialize)]
pub struct Extraction {
    #[serde(skip)]
    pub set: DyadicGridSet,
    /// `nu(A_1 \ E)`.
    pub retained: f64,
    /// Density class k: normalized rho-cell densities in `(2^-k-1, 2^-k]`.
    pub class: usize,
    /// Retained mass per class.
    pub histogram: Vec<f64>,
    pub energy: f64,
    pub precondition_ok: bool,
    pub check: SetCheck,
}

/// Non-concentrated piece of `nu` at scale `rho`: drop the exceptional set
/// for `eps = 2 tau`, bin rho-cells by normalized density, keep the class
/// with the most mass.
pub fn extract_nonconcentrated(nu: &GridMeasure, s: f64, rho: f64, tau: f64) -> Result<Extraction> {
    check_s(s)?;
    let Some(lq) = exact_log2(1.0 / rho) else {
        return Err(Error::NotDyadic { scale: rho, grid: nu.cell_width() });
    };
    if lq < 0 || lq as u32 > nu.level() {
        return Err(Error::BelowResolution { scale: rho, grid: nu.cell_width() });
    }
    let q = lq as u32;
    let ex = exceptional_set(nu, s, rho, 2.0 * tau)?;
    let kept = remove_cells(nu, &ex.set)?;
    let shift = nu.level() - q;
    let mut per_cell: std::collections::BTreeMap<i64, f64> = Default::default();
    for (i, &m) in kept.masses().iter().enumerate() {
        if m > 0.0 {
            *per_cell.entry((kept.offset() + i as i64) >> shift).or_insert(0.0) += m;
        }
    }
    let classes = q as usize + 1;
    let top = per_cell.values().fold(0.0f64, |a, &b| a.max(b));
    let mut histogram = vec![0.0; classes];
    let mut members: Vec<Vec<i64>> = vec![Vec::new(); classes];
    if top > 0.0 {
        for (&cell, &m) in &per_cell {
            let a = m / top;
            let k = ((-a.log2()).floor().max(0.0) as usize).min(classes - 1);
            // Guard the floor against rounding at exact powers of two.
            let k = if a > (-(k as f64)).exp2() && k > 0 { k - 1 } else { k };
            histogram[k] += m;
            members[k].push(cell);
        }
    }
    // Most mass wins; ties go to the smaller k.
    let mut best = 0;
    for k in 1..classes {
        if histogram[k] > histogram[best] {
            best = k;
        }
    }
    let needed = rho.powf(2.0 * tau);
    if histogram[best] < needed {
        return Err(Error::NoDensityLevel { needed, histogram });
    }
    let set = DyadicGridSet::from_cells_1d(q, std::mem::take(&mut members[best]))?;
    let check = set_check(&set, s, rho.powf(-6.0 * tau), SetCheckKind::FrostmanType)?;
    Ok(Extraction {
        set,
        retained: histogram[best],
        class: best,
        histogram,
        energy: ex.energy,
        precondition_ok: ex.energy < rho.powf(-2.0 * tau),
        check,
    })
}
