//! Additive, subtractive and multiplicative convolution of grid measures.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::measure_grid::{cell_width, GridMeasure};
use crate::numeric;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConvOp {
    Add,
    Sub,
    Mul,
}

/// Rows of the product loop are split into this many fixed chunks so the
/// summation order never depends on the thread count.
const MUL_CHUNKS: usize = 16;

fn common_level(mu: &GridMeasure, nu: &GridMeasure) -> Result<(GridMeasure, GridMeasure)> {
    let level = mu.level().max(nu.level());
    Ok((mu.trimmed().refine(level)?, nu.trimmed().refine(level)?))
}

/// Sums and differences of cell centers land exactly on grid lines; each
/// pair's mass is split evenly between the two cells sharing that line.
fn split_half(raw: Vec<f64>) -> Vec<f64> {
    let mut out = vec![0.0; raw.len() + 1];
    for (t, v) in raw.into_iter().enumerate() {
        let half = 0.5 * v;
        out[t] += half;
        out[t + 1] += half;
    }
    out
}

pub fn convolve(mu: &GridMeasure, nu: &GridMeasure, op: ConvOp) -> Result<GridMeasure> {
    for m in [mu, nu] {
        if !m.total_mass().is_finite() {
            return Err(invalid("convolution needs finite-mass inputs"));
        }
    }
    let (a, b) = common_level(mu, nu)?;
    let level = a.level();
    if a.is_empty() || b.is_empty() {
        return Ok(GridMeasure::from_parts(level, 0, Vec::new()));
    }
    match op {
        ConvOp::Add => {
            let raw = numeric::convolve(a.masses(), b.masses());
            Ok(GridMeasure::from_parts(
                level,
                a.offset() + b.offset(),
                split_half(raw),
            ))
        }
        ConvOp::Sub => {
            let rev: Vec<f64> = b.masses().iter().rev().copied().collect();
            let raw = numeric::convolve(a.masses(), &rev);
            Ok(GridMeasure::from_parts(
                level,
                a.offset() - b.offset() - b.len() as i64,
                split_half(raw),
            ))
        }
        ConvOp::Mul => Ok(multiply(&a, &b)),
    }
}

/// Exact double loop: mass `p_i q_j` goes to the cell containing `c_i d_j`.
fn multiply(a: &GridMeasure, b: &GridMeasure) -> GridMeasure {
    let level = a.level();
    let h = cell_width(level);
    // Centers in units of h are half-integers, so u_i * d_j is the product over h.
    let rows: Vec<(f64, f64)> = a
        .atoms()
        .into_iter()
        .map(|(c, m)| (c / h, m))
        .collect();
    let cols = b.atoms();
    let (u0, u1) = (rows[0].0, rows[rows.len() - 1].0);
    let (d0, d1) = (cols[0].0, cols[cols.len() - 1].0);
    let corners = [u0 * d0, u0 * d1, u1 * d0, u1 * d1];
    let lo = corners.iter().fold(f64::INFINITY, |m, &x| m.min(x)).floor() as i64;
    let hi = corners.iter().fold(f64::NEG_INFINITY, |m, &x| m.max(x)).floor() as i64;
    let len = (hi - lo + 1) as usize;
    let chunk = rows.len().div_ceil(MUL_CHUNKS).max(1);
    let partials: Vec<Vec<f64>> = rows
        .par_chunks(chunk)
        .map(|block| {
            let mut out = vec![0.0; len];
            for &(u, m) in block {
                for &(d, q) in &cols {
                    let k = (u * d).floor() as i64 - lo;
                    out[k as usize] += m * q;
                }
            }
            out
        })
        .collect();
    let mut out = vec![0.0; len];
    for p in partials {
        for (o, v) in out.iter_mut().zip(p) {
            *o += v;
        }
    }
    GridMeasure::from_parts(level, lo, out)
}

/// Log-domain fast path for measures supported in [1/2, 4]. Atoms are spread
/// linearly onto a log2 grid of spacing h/32, convolved additively, then
/// mapped back to linear cells.
pub fn convolve_mul_log(mu: &GridMeasure, nu: &GridMeasure) -> Result<GridMeasure> {
    let (a, b) = common_level(mu, nu)?;
    for m in [&a, &b] {
        match m.support() {
            Some((lo, hi)) if lo >= 0.5 && hi <= 4.0 => {}
            Some((lo, hi)) => {
                return Err(invalid(format!(
                    "log fast path needs support in [1/2, 4], got [{lo}, {hi}]"
                )))
            }
            None => return Err(invalid("log fast path needs nonzero measures")),
        }
    }
    let level = a.level();
    let h = cell_width(level);
    let eta = h / 32.0;
    let nodes = (3.0 / eta).ceil() as usize + 2;
    let spread = |m: &GridMeasure| {
        let mut arr = vec![0.0; nodes];
        for (c, w) in m.atoms() {
            let t = (c.log2() + 1.0) / eta;
            let k = t.floor();
            let f = t - k;
            let k = k as usize;
            arr[k] += w * (1.0 - f);
            arr[k + 1] += w * f;
        }
        arr
    };
    let conv = numeric::convolve_fft(&spread(&a), &spread(&b));
    let lo = (0.25 / h).floor() as i64;
    let hi = (16.0 / h).ceil() as i64;
    let mut out = vec![0.0; (hi - lo + 1) as usize];
    for (k, v) in conv.into_iter().enumerate() {
        if v == 0.0 {
            continue;
        }
        let x = (-2.0 + k as f64 * eta).exp2();
        let idx = ((x / h).floor() as i64).clamp(lo, hi) - lo;
        out[idx as usize] += v;
    }
    Ok(GridMeasure::from_parts(level, lo, out).trimmed())
}

/// k-fold convolution power. Additive powers use repeated doubling; the
/// other ops fold from the left.
pub fn power(mu: &GridMeasure, k: u32, op: ConvOp) -> Result<GridMeasure> {
    if k == 0 {
        return Err(invalid("power k = 0 has no grid representation"));
    }
    match op {
        ConvOp::Add => {
            let mut result: Option<GridMeasure> = None;
            let mut base = mu.clone();
            let mut e = k;
            loop {
                if e & 1 == 1 {
                    result = Some(match result {
                        None => base.clone(),
                        Some(r) => convolve(&r, &base, ConvOp::Add)?,
                    });
                }
                e >>= 1;
                if e == 0 {
                    break;
                }
                base = convolve(&base, &base, ConvOp::Add)?;
            }
            Ok(result.expect("k >= 1"))
        }
        _ => {
            let mut acc = mu.clone();
            for _ in 1..k {
                acc = convolve(&acc, mu, op)?;
            }
            Ok(acc)
        }
    }
}

/// `(mu - mu) x (nu - nu)`.
pub fn pi_measure(mu: &GridMeasure, nu: &GridMeasure) -> Result<GridMeasure> {
    let dm = convolve(mu, mu, ConvOp::Sub)?;
    let dn = convolve(nu, nu, ConvOp::Sub)?;
    convolve(&dm, &dn, ConvOp::Mul)
}

/// Largest mirror mismatch `|m(x) - m(-x)|` of a measure about 0.
pub fn symmetry_defect(mu: &GridMeasure) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..mu.len() {
        let k = mu.offset() + i as i64;
        worst = worst.max((mu.masses()[i] - mu.mass_at(-k - 1)).abs());
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure_grid::{cdf_distance, max_cell_difference};

    #[test]
    fn multiplicative_identity_and_annihilator() {
        let mu = GridMeasure::from_density(|x| 1.0 + x * x, 0.0, 1.0, 8, true).unwrap();
        let one = GridMeasure::point_mass(1.0, 8).unwrap();
        let prod = convolve(&mu, &one, ConvOp::Mul).unwrap();
        assert!(max_cell_difference(&prod, &mu).unwrap() < 1e-15);
        let zero = GridMeasure::point_mass(0.0, 8).unwrap();
        let z = convolve(&mu, &zero, ConvOp::Mul).unwrap().trimmed();
        assert_eq!(z.len(), 1);
        assert_eq!(z.origin(), 0.0);
        assert!((z.total_mass() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn triangle_from_uniform_sum() {
        let u = GridMeasure::uniform(0.0, 1.0, 10).unwrap();
        let t = convolve(&u, &u, ConvOp::Add).unwrap();
        let h = t.cell_width();
        let peak = t.masses().iter().fold(0.0f64, |m, &x| m.max(x)) / h;
        assert!((peak - 1.0).abs() < 1e-3);
        for i in 0..t.len() {
            let c = t.center(i);
            let exact = if c < 1.0 { c } else { 2.0 - c };
            assert!((t.masses()[i] / h - exact.max(0.0)).abs() < 2e-3);
        }
        assert!((t.total_mass() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn power_examples() {
        let u = GridMeasure::uniform(0.0, 1.0, 8).unwrap();
        assert_eq!(power(&u, 1, ConvOp::Add).unwrap(), u);
        assert_eq!(
            power(&u, 2, ConvOp::Add).unwrap(),
            convolve(&u, &u, ConvOp::Add).unwrap()
        );
        assert!(power(&u, 0, ConvOp::Mul).is_err());
        let level = 10;
        let two = GridMeasure::point_mass(2.0, level).unwrap();
        let eight = power(&two, 3, ConvOp::Mul).unwrap().trimmed();
        assert_eq!(eight.len(), 1);
        // Routed through products of cell centers: within a few cells of 8.
        assert!((eight.center(0) - 8.0).abs() <= 8.0 * cell_width(level));
    }

    #[test]
    fn doubling_matches_successive_sums() {
        let mu = GridMeasure::from_density(|x| 2.0 - x, 0.0, 1.0, 7, true).unwrap();
        for k in [3u32, 4, 5] {
            let fast = power(&mu, k, ConvOp::Add).unwrap();
            let mut slow = mu.clone();
            for _ in 1..k {
                slow = convolve(&slow, &mu, ConvOp::Add).unwrap();
            }
            assert!(cdf_distance(&fast, &slow).unwrap() < 1e-6);
        }
    }

    #[test]
    fn pi_of_point_masses_sits_at_origin() {
        let p = GridMeasure::point_mass(0.7, 10).unwrap();
        let pi = pi_measure(&p, &p).unwrap().trimmed();
        let h = pi.cell_width();
        let (lo, hi) = pi.support().unwrap();
        assert!(lo >= -h && hi <= h);
        assert!((pi.total_mass() - 1.0).abs() < 1e-12);
        assert!(symmetry_defect(&pi) < 1e-12);
    }

    #[test]
    fn log_path_rejects_wide_support() {
        let u = GridMeasure::uniform(0.0, 1.0, 8).unwrap();
        assert!(convolve_mul_log(&u, &u).is_err());
    }
}
