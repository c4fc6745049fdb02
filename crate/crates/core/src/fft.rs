//! Cached FFT plans and the handful of spectral primitives every transform
//! stage is built from.
//!
//! All convolutions in the crate are periodic: a spectrum of length `n` is
//! multiplied by a frequency response and brought back to the time domain,
//! optionally keeping only every `s`-th sample. Decimation is done in the
//! frequency domain by folding the spectrum onto `n / s` bins, which gives
//! bit-for-bit the same samples as a full inverse transform followed by
//! subsampling, at a fraction of the cost.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

type PlanKey = (usize, bool);

fn plans() -> &'static Mutex<HashMap<PlanKey, Arc<dyn Fft<f64>>>> {
    static PLANS: OnceLock<Mutex<HashMap<PlanKey, Arc<dyn Fft<f64>>>>> = OnceLock::new();
    PLANS.get_or_init(|| Mutex::new(HashMap::new()))
}

fn plan(len: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    let mut map = plans().lock().expect("fft plan cache poisoned");
    map.entry((len, inverse))
        .or_insert_with(|| {
            let mut planner = FftPlanner::new();
            if inverse {
                planner.plan_fft_inverse(len)
            } else {
                planner.plan_fft_forward(len)
            }
        })
        .clone()
}

/// In-place forward DFT (unnormalized).
pub fn forward(buf: &mut [Complex64]) {
    plan(buf.len(), false).process(buf);
}

/// In-place inverse DFT, normalized by `1/n`.
pub fn inverse(buf: &mut [Complex64]) {
    let n = buf.len();
    plan(n, true).process(buf);
    let scale = 1.0 / n as f64;
    for v in buf.iter_mut() {
        *v *= scale;
    }
}

pub fn forward_real(x: &[f64]) -> Vec<Complex64> {
    let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    forward(&mut buf);
    buf
}

/// Periodic convolution of the signal with spectrum `spec` by the real
/// response `filter`, keeping every `step`-th output sample.
///
/// Returns `n / step` complex samples.
pub fn conv_decimate(spec: &[Complex64], filter: &[f64], step: usize) -> Vec<Complex64> {
    let n = spec.len();
    debug_assert_eq!(filter.len(), n);
    debug_assert!(step >= 1 && n % step == 0);
    let m = n / step;
    let mut out = vec![Complex64::new(0.0, 0.0); m];
    for (k, (s, &h)) in spec.iter().zip(filter).enumerate() {
        if h != 0.0 {
            out[k % m] += s * h;
        }
    }
    inverse(&mut out);
    if step > 1 {
        let scale = 1.0 / step as f64;
        for v in out.iter_mut() {
            *v *= scale;
        }
    }
    out
}

/// Adjoint of [`conv_decimate`]: accumulates into `acc` (a length-`n`
/// spectrum) the contribution of the output gradient `grad` (length `n / step`).
///
/// After all contributions are summed, `inverse(acc)` yields the gradient
/// with respect to the input samples (take the real part for real inputs).
pub fn conv_decimate_adjoint(grad: &[Complex64], filter: &[f64], step: usize, acc: &mut [Complex64]) {
    let n = acc.len();
    let m = grad.len();
    debug_assert_eq!(m * step, n);
    let mut g = grad.to_vec();
    forward(&mut g);
    // Upsampling by zero insertion tiles the short spectrum; the forward
    // 1/step cancels against the 1/n vs 1/m inverse normalization.
    for (k, (a, &h)) in acc.iter_mut().zip(filter).enumerate() {
        if h != 0.0 {
            *a += g[k % m] * h;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn naive_conv(x: &[f64], kernel: &[Complex64]) -> Vec<Complex64> {
        let n = x.len();
        (0..n)
            .map(|t| (0..n).map(|u| kernel[(t + n - u) % n] * x[u]).sum())
            .collect()
    }

    #[test]
    fn decimated_conv_matches_direct_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 64;
        let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let filter: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
        let mut kernel: Vec<Complex64> = filter.iter().map(|&h| Complex64::new(h, 0.0)).collect();
        inverse(&mut kernel);
        let full = naive_conv(&x, &kernel);
        let spec = forward_real(&x);
        for step in [1, 2, 8] {
            let got = conv_decimate(&spec, &filter, step);
            for (i, g) in got.iter().enumerate() {
                assert!((g - full[i * step]).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn adjoint_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 128;
        let step = 4;
        let u: Vec<Complex64> = (0..n).map(|_| Complex64::new(rng.gen(), rng.gen())).collect();
        let v: Vec<Complex64> = (0..n / step).map(|_| Complex64::new(rng.gen(), rng.gen())).collect();
        let filter: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut spec = u.clone();
        forward(&mut spec);
        let au = conv_decimate(&spec, &filter, step);
        let lhs: Complex64 = au.iter().zip(&v).map(|(a, b)| a * b.conj()).sum();
        let mut acc = vec![Complex64::new(0.0, 0.0); n];
        conv_decimate_adjoint(&v, &filter, step, &mut acc);
        inverse(&mut acc);
        let rhs: Complex64 = u.iter().zip(&acc).map(|(a, b)| a * b.conj()).sum();
        assert!((lhs - rhs).norm() <= 1e-12 * lhs.norm().max(1.0));
    }
}
