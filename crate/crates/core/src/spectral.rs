//! Fourier sampling of grid measures, L² norms at scale, decay fits.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::measure_grid::{regularize, GridMeasure};
use crate::numeric::{linear_fit, pairwise_sum, phasor};

/// Magnitudes below this are ignored by the exponent fit.
pub const MAGNITUDE_FLOOR: f64 = 1e-12;

/// Phases are recomputed from scratch this often while walking cells.
const RESYNC: usize = 32;

/// `sum_i m_i exp(-2 pi i xi c_i)` over cell centers.
pub fn fourier_at(mu: &GridMeasure, xi: f64) -> Complex64 {
    if xi == 0.0 {
        return Complex64::new(mu.total_mass(), 0.0);
    }
    let neg = xi < 0.0;
    let xi = xi.abs();
    let h = mu.cell_width();
    let step = phasor(xi * h);
    let mut acc = Complex64::new(0.0, 0.0);
    let mut p = Complex64::new(1.0, 0.0);
    // Consecutive occupied cells advance by one step; gaps and every
    // RESYNC-th step recompute the phase directly.
    let mut prev = usize::MAX;
    let mut run = 0;
    for (i, &m) in mu.masses().iter().enumerate() {
        if m == 0.0 {
            continue;
        }
        if prev != usize::MAX && i == prev + 1 && run < RESYNC {
            p *= step;
            run += 1;
        } else {
            p = phasor(xi * mu.center(i));
            run = 1;
        }
        prev = i;
        acc += p * m;
    }
    if neg {
        acc.conj()
    } else {
        acc
    }
}

/// Transform of the multiplicative convolution, `sum_j q_j mu^(xi d_j)`,
/// evaluated without building the product measure.
pub fn product_fourier(mu: &GridMeasure, nu: &GridMeasure, xi: f64) -> Complex64 {
    let mut acc = Complex64::new(0.0, 0.0);
    for (d, q) in nu.atoms() {
        acc += fourier_at(mu, xi * d) * q;
    }
    acc
}

/// Transform of `mu_1 x ... x mu_n` (multiplicative) at `xi`, exact over atoms.
pub fn multi_product_fourier(measures: &[&GridMeasure], xi: f64) -> Result<Complex64> {
    match measures {
        [] => Err(invalid("need at least one measure")),
        [mu] => Ok(fourier_at(mu, xi)),
        [rest @ .., last] => {
            let mut acc = Complex64::new(0.0, 0.0);
            for (d, q) in last.atoms() {
                acc += multi_product_fourier(rest, xi * d)? * q;
            }
            Ok(acc)
        }
    }
}

/// Density L² norm of the cell masses: `sqrt(sum h (m/h)^2)`.
pub fn l2_norm(mu: &GridMeasure) -> f64 {
    let h = mu.cell_width();
    let sq: Vec<f64> = mu.masses().iter().map(|m| m * m / h).collect();
    pairwise_sum(&sq).sqrt()
}

/// `||mu_delta||_2` for the regularization at scale `delta`.
pub fn l2_at_scale(mu: &GridMeasure, delta: f64) -> Result<f64> {
    Ok(l2_norm(&regularize(mu, delta)?))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayProfile {
    pub xi_samples: Vec<f64>,
    pub magnitudes: Vec<f64>,
    pub band: (f64, f64),
    /// Fitted exponent in `|F(xi)| ~ xi^-tau`; `+inf` when the fit failed.
    pub tau_hat: f64,
    pub fit_residual: f64,
    pub floor_hits: usize,
    /// Set when fewer than three samples cleared the floor.
    pub degenerate: bool,
}

impl DecayProfile {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("xi,magnitude\n");
        for (x, m) in self.xi_samples.iter().zip(&self.magnitudes) {
            out.push_str(&format!("{x:.12e},{m:.12e}\n"));
        }
        out
    }

    /// JSON sidecar for the CSV.
    pub fn sidecar(&self) -> serde_json::Value {
        serde_json::json!({
            "band": [self.band.0, self.band.1],
            "tau_hat": if self.tau_hat.is_finite() { serde_json::json!(self.tau_hat) } else { serde_json::json!("inf") },
            "fit_residual": self.fit_residual,
            "worst_exponent": self.worst_exponent(),
            "floor_hits": self.floor_hits,
        })
    }

    /// Worst pointwise exponent over the band, `min -ln|F| / ln xi`.
    pub fn worst_exponent(&self) -> f64 {
        worst_exponent(&self.xi_samples, &self.magnitudes)
    }
}

pub fn worst_exponent(xis: &[f64], mags: &[f64]) -> f64 {
    xis.iter()
        .zip(mags)
        .map(|(x, m)| -m.ln() / x.ln())
        .fold(f64::INFINITY, f64::min)
}

/// Log-uniform sample points across `band`.
pub fn log_samples(band: (f64, f64), n: usize) -> Vec<f64> {
    let (a, b) = band;
    if n == 1 {
        return vec![a];
    }
    let r = (b / a).ln();
    (0..n)
        .map(|i| {
            if i + 1 == n {
                b
            } else {
                a * (r * i as f64 / (n - 1) as f64).exp()
            }
        })
        .collect()
}

/// Decay profile of an arbitrary transform sampled across `band`.
pub fn decay_profile_of<F>(f: F, band: (f64, f64), n_samples: usize) -> Result<DecayProfile>
where
    F: Fn(f64) -> Complex64 + Sync,
{
    let (lo, hi) = band;
    if n_samples < 3 {
        return Err(invalid("decay profile needs at least 3 samples"));
    }
    if !(lo >= 1.0 && hi > lo && hi.is_finite()) {
        return Err(invalid(format!("band [{lo}, {hi}] must satisfy 1 <= lo < hi")));
    }
    let xis = log_samples(band, n_samples);
    let mags: Vec<f64> = xis.par_iter().map(|&x| f(x).norm()).collect();
    let (lx, ly): (Vec<f64>, Vec<f64>) = xis
        .iter()
        .zip(&mags)
        .filter(|(_, &m)| m > MAGNITUDE_FLOOR)
        .map(|(x, m)| (x.ln(), m.ln()))
        .unzip();
    let floor_hits = n_samples - lx.len();
    let (tau_hat, fit_residual, degenerate) = if lx.len() < 3 {
        (f64::INFINITY, f64::NAN, true)
    } else {
        let (_, b, rms) = linear_fit(&lx, &ly);
        (-b, rms, false)
    };
    Ok(DecayProfile {
        xi_samples: xis,
        magnitudes: mags,
        band,
        tau_hat,
        fit_residual,
        floor_hits,
        degenerate,
    })
}

pub fn decay_profile(mu: &GridMeasure, band: (f64, f64), n_samples: usize) -> Result<DecayProfile> {
    decay_profile_of(|x| fourier_at(mu, x), band, n_samples)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Lemma4Bound {
    pub a: f64,
    pub b: f64,
    pub bound: f64,
    pub actual: f64,
}

impl Lemma4Bound {
    /// actual / bound.
    pub fn ratio(&self) -> f64 {
        self.actual / self.bound
    }
}

/// `int_{|eta| <= 2/delta} |mu^(eta)|^2 d eta`, trapezoid at spacing 1/4.
pub fn band_l2(mu: &GridMeasure, delta: f64) -> f64 {
    let step = 0.25;
    let n = (2.0 / delta / step).round() as usize;
    let vals: Vec<f64> = (1..=n)
        .into_par_iter()
        .map(|k| {
            let w = if k == n { 0.5 } else { 1.0 };
            w * fourier_at(mu, k as f64 * step).norm_sqr()
        })
        .collect();
    let f0 = mu.total_mass().powi(2);
    step * (f0 + 2.0 * pairwise_sum(&vals))
}

/// `sqrt(A B / |xi|) + delta` together with the measured `|(mu x nu)^(xi)|`.
pub fn lemma4_bound(mu: &GridMeasure, nu: &GridMeasure, delta: f64, xi: f64) -> Result<Lemma4Bound> {
    if !(delta > 0.0 && xi.abs() >= 1.0 && xi.abs() <= 1.0 / delta) {
        return Err(Error::Precondition(format!(
            "need 1 <= |xi| <= 1/delta, got xi = {xi}, delta = {delta}"
        )));
    }
    let a = band_l2(mu, delta);
    let b = band_l2(nu, delta);
    Ok(Lemma4Bound {
        a,
        b,
        bound: (a * b / xi.abs()).sqrt() + delta,
        actual: product_fourier(mu, nu, xi).norm(),
    })
}

/// `(|int mu^(xi y) dnu(y)|^2, int |mu^(xi y)|^2 dnu(y)` over atoms of nu.
pub fn order_check(mu: &GridMeasure, nu: &GridMeasure, xi: f64) -> (f64, f64) {
    let mut sum = Complex64::new(0.0, 0.0);
    let mut rhs = 0.0;
    for (d, q) in nu.atoms() {
        let a = fourier_at(mu, xi * d);
        sum += a * q;
        rhs += q * a.norm_sqr();
    }
    (sum.norm_sqr(), rhs)
}
