//! Thin wrappers over realfft used by the oracle and the grid inversion.

use num_complex::Complex64;
use realfft::RealFftPlanner;

/// Below this many multiply-adds the direct product is used.
const DIRECT_LIMIT: usize = 1 << 18;

fn direct(a: &[f64], b: &[f64], max_len: usize) -> Vec<f64> {
    let n = (a.len() + b.len() - 1).min(max_len);
    let mut out = vec![0.0; n];
    for (i, &x) in a.iter().enumerate() {
        if x == 0.0 || i >= n {
            continue;
        }
        for (j, &y) in b.iter().enumerate().take(n - i) {
            out[i + j] += x * y;
        }
    }
    out
}

/// Linear convolution of nonnegative sequences truncated to `max_len` entries.
/// Negative round-off from the FFT path is clamped to zero.
pub fn convolve_nonneg(a: &[f64], b: &[f64], max_len: usize) -> Vec<f64> {
    if a.is_empty() || b.is_empty() || max_len == 0 {
        return Vec::new();
    }
    if a.len().saturating_mul(b.len()) <= DIRECT_LIMIT {
        return direct(a, b, max_len);
    }
    let full = a.len() + b.len() - 1;
    let size = full.next_power_of_two();
    // single-gain laws are sparse; looping over their nonzeros beats the transform
    let nnz = |v: &[f64]| v.iter().filter(|&&x| x != 0.0).count();
    let (na, nb) = (nnz(a), nnz(b));
    let fft_cost = 6 * size * (size.trailing_zeros() as usize + 1);
    if na.saturating_mul(b.len()) <= fft_cost {
        return direct(a, b, max_len);
    }
    if nb.saturating_mul(a.len()) <= fft_cost {
        return direct(b, a, max_len);
    }
    let mut planner = RealFftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(size);
    let inv = planner.plan_fft_inverse(size);
    let spectrum = |v: &[f64]| {
        let mut buf = vec![0.0; size];
        buf[..v.len()].copy_from_slice(v);
        let mut sp = fwd.make_output_vec();
        fwd.process(&mut buf, &mut sp).expect("fft length");
        sp
    };
    let sa = spectrum(a);
    let mut prod = if std::ptr::eq(a, b) {
        sa.iter().map(|x| x * x).collect::<Vec<_>>()
    } else {
        let sb = spectrum(b);
        sa.iter().zip(&sb).map(|(x, y)| x * y).collect()
    };
    // the product of two real spectra has real end bins up to rounding
    let last = prod.len() - 1;
    prod[0].im = 0.0;
    prod[last].im = 0.0;
    let mut out = inv.make_output_vec();
    inv.process(&mut prod, &mut out).expect("fft length");
    let n = full.min(max_len);
    out.truncate(n);
    let s = 1.0 / size as f64;
    for v in out.iter_mut() {
        *v = (*v * s).max(0.0);
    }
    out
}

/// Re sum_{n} c[n] e^{-2 pi i n m / size} for m in 0..size; needs c.len() <= size / 2.
pub fn real_part_dft(c: &[Complex64], size: usize) -> Vec<f64> {
    assert!(size.is_power_of_two() && c.len() <= size / 2);
    let mut planner = RealFftPlanner::<f64>::new();
    let inv = planner.plan_fft_inverse(size);
    let mut sp = inv.make_input_vec();
    // the inverse transform computes X_0 + 2 Re sum_{k>=1} X_k e^{+2 pi i k m / size}
    for (n, v) in c.iter().enumerate() {
        sp[n] = if n == 0 { Complex64::new(v.re, 0.0) } else { v.conj() * 0.5 };
    }
    let mut out = inv.make_output_vec();
    inv.process(&mut sp, &mut out).expect("fft length");
    out
}
