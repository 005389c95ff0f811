use std::cell::RefCell;
use std::f64::consts::TAU;

use num_complex::Complex64;
use rustfft::FftPlanner;

/// Below this many multiply-adds the direct loop beats the transform.
const DIRECT_LIMIT: usize = 1 << 16;

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

pub(crate) fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 32 {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

/// Unit phasor e^{-2 pi i t}, reducing t mod 1 first so large arguments keep
/// their accuracy.
#[inline]
pub(crate) fn phasor(t: f64) -> Complex64 {
    let f = t - t.floor();
    let (s, c) = (TAU * f).sin_cos();
    Complex64::new(c, -s)
}

/// Linear convolution by direct summation.
pub(crate) fn convolve_direct(a: &[f64], b: &[f64]) -> Vec<f64> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, &x) in a.iter().enumerate() {
        if x == 0.0 {
            continue;
        }
        for (o, &y) in out[i..].iter_mut().zip(b) {
            *o += x * y;
        }
    }
    out
}

fn fft_in_place(buf: &mut [Complex64], inverse: bool) {
    PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        let plan = if inverse {
            p.plan_fft_inverse(buf.len())
        } else {
            p.plan_fft_forward(buf.len())
        };
        plan.process(buf);
    });
}

/// Padded transform length: next power of two at least twice the combined
/// length, so the cyclic product never wraps.
pub(crate) fn padded_len(total: usize) -> usize {
    (2 * total).next_power_of_two()
}

/// Linear convolution of nonnegative sequences through a zero-padded FFT.
/// Roundoff residue far below the largest output is flushed to zero and
/// negatives are clamped, so the result stays a valid mass vector.
pub(crate) fn convolve_fft(a: &[f64], b: &[f64]) -> Vec<f64> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let out_len = a.len() + b.len() - 1;
    let n = padded_len(a.len() + b.len());
    let mut buf: Vec<Complex64> = (0..n)
        .map(|i| {
            let re = a.get(i).copied().unwrap_or(0.0);
            let im = b.get(i).copied().unwrap_or(0.0);
            Complex64::new(re, im)
        })
        .collect();
    fft_in_place(&mut buf, false);
    // Split the packed spectrum: A_k = (Z_k + conj Z_{-k})/2, B_k = (Z_k - conj Z_{-k})/(2i).
    let mut prod = vec![Complex64::new(0.0, 0.0); n];
    for k in 0..n {
        let z = buf[k];
        let zc = buf[(n - k) % n].conj();
        let fa = (z + zc) * 0.5;
        let fb = (z - zc) * Complex64::new(0.0, -0.5);
        prod[k] = fa * fb;
    }
    fft_in_place(&mut prod, true);
    let scale = 1.0 / n as f64;
    let mut out: Vec<f64> = prod[..out_len].iter().map(|z| z.re * scale).collect();
    clean(&mut out);
    out
}

pub(crate) fn clean(out: &mut [f64]) {
    let peak = out.iter().fold(0.0f64, |m, &x| m.max(x.abs()));
    let floor = peak * 1e-14;
    for x in out.iter_mut() {
        if *x < floor {
            *x = 0.0;
        }
    }
}

pub(crate) fn convolve(a: &[f64], b: &[f64]) -> Vec<f64> {
    if a.len().min(b.len()) <= 16 || a.len().saturating_mul(b.len()) <= DIRECT_LIMIT {
        convolve_direct(a, b)
    } else {
        convolve_fft(a, b)
    }
}

/// Autocorrelation r[k] = sum_i a[i] a[i+k] for k >= 0.
pub(crate) fn autocorrelation(a: &[f64]) -> Vec<f64> {
    let n = a.len();
    if n == 0 {
        return Vec::new();
    }
    let rev: Vec<f64> = a.iter().rev().copied().collect();
    let full = convolve(a, &rev);
    full[n - 1..].to_vec()
}

/// Full DFT X_k = sum_j x_j e^{-2 pi i jk/n} of a real sequence zero-padded to n.
pub(crate) fn dft_real(x: &[f64], n: usize) -> Vec<Complex64> {
    let mut buf: Vec<Complex64> = (0..n)
        .map(|i| Complex64::new(x.get(i).copied().unwrap_or(0.0), 0.0))
        .collect();
    fft_in_place(&mut buf, false);
    buf
}

/// Least-squares line y = a + b x. Returns (a, b, rms residual).
pub(crate) fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
    }
    let b = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let a = my - b * mx;
    let rss: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| {
            let r = y - a - b * x;
            r * r
        })
        .sum();
    (a, b, (rss / n).sqrt())
}

/// log2 of a positive power of two, or None.
pub(crate) fn exact_log2(x: f64) -> Option<i32> {
    if !(x > 0.0) || !x.is_finite() {
        return None;
    }
    let e = x.log2().round() as i32;
    if (2f64).powi(e) == x {
        Some(e)
    } else {
        None
    }
}
