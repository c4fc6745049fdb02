//! Wavelet transform, scalogram and first-order (time-averaged) coefficients.

use ndarray::Array2;
use rayon::prelude::*;
use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fft;
use crate::filterbank::{Axis, FilterBank, FilterBankSpec};
use crate::signal::{reflect_index, Signal};

/// `x₁(t, log λ₁)` sampled on a uniform time grid.
#[derive(Clone, Debug, PartialEq)]
pub struct Scalogram {
    /// `[n_frames × n_bands]`, nonnegative.
    pub values: Array2<f64>,
    /// Seconds between frames.
    pub hop: f64,
    /// log₂ of band centers in Hz, strictly decreasing.
    pub band_log_centers: Vec<f64>,
    /// Averaging scale of the bank that produced it, in seconds.
    pub source_t: f64,
    /// Wavelets per octave of the producing bank.
    pub q: u32,
}

impl Scalogram {
    pub fn n_frames(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_bands(&self) -> usize {
        self.values.ncols()
    }
}

/// `S₁x(t, log λ₁)`: the scalogram averaged by `φ_T` and sampled every `T/2`.
#[derive(Clone, Debug, PartialEq)]
pub struct S1Coeffs {
    /// `[n_frames × n_bands]`, nonnegative.
    pub values: Array2<f64>,
    /// Seconds between frames (`T/2`).
    pub hop: f64,
    pub band_log_centers: Vec<f64>,
}

/// Reflect-pads `x` to `n` samples and returns its spectrum.
pub(crate) fn padded_spectrum(x: &[f64], n: usize) -> Vec<Complex64> {
    let len = x.len();
    let mut buf: Vec<Complex64> = (0..n).map(|p| Complex64::new(x[reflect_index(p, len, n)], 0.0)).collect();
    fft::forward(&mut buf);
    buf
}

fn check_rate(x: &Signal, bank: &FilterBank) -> Result<()> {
    x.validate()?;
    if bank.spec.axis != Axis::Time {
        return Err(Error::Config("wavelet transform needs a time-axis bank".into()));
    }
    if (bank.spec.sample_rate - x.sample_rate).abs() > 1e-9 * x.sample_rate {
        return Err(Error::Config(format!(
            "sample rate mismatch: signal {} Hz, bank {} Hz",
            x.sample_rate, bank.spec.sample_rate
        )));
    }
    if bank.spec.n_fft < x.len() {
        return Err(Error::Config(format!(
            "bank n_fft {} shorter than the signal ({} samples)",
            bank.spec.n_fft,
            x.len()
        )));
    }
    Ok(())
}

/// Complex wavelet coefficients `x ⋆ ψ_λ` at every input sample,
/// `[n_samples × n_bands]`.
///
/// The input is reflect-padded to the bank's `n_fft` and convolved
/// periodically; the response is applied as is (no conjugation), so an
/// impulse at `t₀` returns `ψ_λ(t − t₀)`.
pub fn wavelet_transform(x: &Signal, bank: &FilterBank) -> Result<Array2<Complex64>> {
    check_rate(x, bank)?;
    let spec = padded_spectrum(&x.samples, bank.spec.n_fft);
    let len = x.len();
    let columns: Vec<Vec<Complex64>> = bank
        .filters
        .par_iter()
        .map(|f| fft::conv_decimate(&spec, &f.response, 1))
        .collect();
    Ok(Array2::from_shape_fn((len, bank.len()), |(t, b)| columns[b][t]))
}

/// Samples per scalogram frame for an averaging scale of `t_samples`.
pub fn hop_samples(t_samples: usize, oversampling: u32) -> Result<usize> {
    let div = 2usize << oversampling;
    if t_samples % div != 0 || t_samples < div {
        return Err(Error::Config(format!(
            "T = {t_samples} samples is not divisible by 2·2^{oversampling}"
        )));
    }
    Ok(t_samples / div)
}

/// Modulus of the wavelet transform, sampled every `T/(2·2^oversampling)`.
pub fn scalogram(x: &Signal, bank: &FilterBank, oversampling: u32) -> Result<Scalogram> {
    check_rate(x, bank)?;
    let t_samples = (bank.spec.t * x.sample_rate).round() as usize;
    let hop = hop_samples(t_samples, oversampling)?;
    let n = bank.spec.n_fft;
    if n % hop != 0 {
        return Err(Error::Config(format!("n_fft {n} not a multiple of the hop {hop}")));
    }
    let spec = padded_spectrum(&x.samples, n);
    let frames = x.len().div_ceil(hop);
    let columns: Vec<Vec<f64>> = bank
        .filters
        .par_iter()
        .map(|f| fft::conv_decimate(&spec, &f.response, hop).iter().take(frames).map(|z| z.norm()).collect())
        .collect();
    Ok(Scalogram {
        values: Array2::from_shape_fn((frames, bank.len()), |(t, b)| columns[b][t]),
        hop: hop as f64 / x.sample_rate,
        band_log_centers: bank.filters.iter().map(|f| (f.center / (2.0 * std::f64::consts::PI)).log2()).collect(),
        source_t: bank.spec.t,
        q: bank.spec.q,
    })
}

/// Low-pass `φ_T` sampled for a sequence at `rate` frames per second and
/// transform length `n`.
pub(crate) fn averaging_filter(t: f64, rate: f64, n: usize) -> Result<Vec<f64>> {
    let spec = FilterBankSpec { sample_rate: rate, q: 1, t, n_fft: n, axis: Axis::Time };
    spec.validate()?;
    let sigma_t = t / (2.0 * std::f64::consts::LN_2.sqrt());
    Ok((0..n)
        .map(|k| {
            let w = spec.bin_frequency(k);
            (-0.5 * (w * sigma_t).powi(2)).exp()
        })
        .collect())
}

/// Averages each band of `scal` with `φ_T` and subsamples to hop `T/2`.
pub fn s1(scal: &Scalogram, bank: &FilterBank) -> Result<S1Coeffs> {
    let t = bank.spec.t;
    let ratio = (t / 2.0) / scal.hop;
    let decim = ratio.round() as usize;
    if decim == 0 || (ratio - decim as f64).abs() > 1e-9 * ratio || !decim.is_power_of_two() {
        return Err(Error::Config(format!(
            "scalogram hop {} s does not divide T/2 = {} s by a power of two",
            scal.hop,
            t / 2.0
        )));
    }
    let frames = scal.n_frames();
    let n = (2 * frames).next_power_of_two().max((t / scal.hop).ceil() as usize).next_power_of_two();
    let phi = averaging_filter(t, 1.0 / scal.hop, n)?;
    let out_frames = frames.div_ceil(decim);
    let columns: Vec<Vec<f64>> = (0..scal.n_bands())
        .into_par_iter()
        .map(|b| {
            let col: Vec<f64> = scal.values.column(b).to_vec();
            let spec = padded_spectrum(&col, n);
            fft::conv_decimate(&spec, &phi, decim).iter().take(out_frames).map(|z| z.re.max(0.0)).collect()
        })
        .collect();
    Ok(S1Coeffs {
        values: Array2::from_shape_fn((out_frames, scal.n_bands()), |(t, b)| columns[b][t]),
        hop: t / 2.0,
        band_log_centers: scal.band_log_centers.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filterbank::build_filterbank;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn bank(n_fft: usize) -> FilterBank {
        build_filterbank(&FilterBankSpec { sample_rate: 16000.0, q: 8, t: 512.0 / 16000.0, n_fft, axis: Axis::Time }).unwrap()
    }

    #[test]
    fn impulse_returns_the_wavelet() {
        let b = bank(4096);
        let mut x = vec![0.0; 4096];
        let t0 = 1000;
        x[t0] = 1.0;
        let w = wavelet_transform(&Signal::new(x, 16000.0).unwrap(), &b).unwrap();
        for (k, f) in b.filters.iter().enumerate().step_by(7) {
            let mut kernel: Vec<Complex64> = f.response.iter().map(|&v| Complex64::new(v, 0.0)).collect();
            fft::inverse(&mut kernel);
            for t in (0..4096).step_by(97) {
                let expect = kernel[(t + 4096 - t0) % 4096];
                assert!((w[[t, k]] - expect).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn tone_at_center_dominates_its_band() {
        let b = bank(8192);
        let k = 20;
        let w0 = b.filters[k].center;
        let x: Vec<f64> = (0..8192).map(|n| (w0 * n as f64 / 16000.0).cos()).collect();
        let w = wavelet_transform(&Signal::new(x, 16000.0).unwrap(), &b).unwrap();
        // Closed-form oracle: a real cosine puts half its amplitude on the
        // analytic side.
        let expect = b.filters[k].eval(w0) / 2.0;
        let mid: Vec<f64> = (3000..5000).map(|t| w[[t, k]].norm()).collect();
        for v in &mid {
            assert!((v - expect).abs() < 0.02 * expect, "{v} vs {expect}");
        }
        for j in 0..b.len() {
            if j != k {
                assert!(w[[4000, j]].norm() < w[[4000, k]].norm());
            }
        }
    }

    #[test]
    fn zero_in_zero_out_and_rate_check() {
        let b = bank(4096);
        let x = Signal::new(vec![0.0; 3000], 16000.0).unwrap();
        let w = wavelet_transform(&x, &b).unwrap();
        assert!(w.iter().all(|z| z.norm() == 0.0));
        let s = scalogram(&x, &b, 2).unwrap();
        assert!(s1(&s, &b).unwrap().values.iter().all(|&v| v == 0.0));
        let wrong = Signal::new(vec![0.0; 100], 8000.0).unwrap();
        assert!(matches!(wavelet_transform(&wrong, &b), Err(Error::Config(_))));
        let long = Signal::new(vec![0.0; 5000], 16000.0).unwrap();
        assert!(wavelet_transform(&long, &b).is_err());
    }

    #[test]
    fn homogeneity_and_shift_equivariance() {
        let b = bank(4096);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x: Vec<f64> = (0..4096).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let sig = Signal::new(x.clone(), 16000.0).unwrap();
        let base = scalogram(&sig, &b, 2).unwrap();
        let scaled = Signal::new(x.iter().map(|v| -3.0 * v).collect(), 16000.0).unwrap();
        let s2 = scalogram(&scaled, &b, 2).unwrap();
        for (a, c) in base.values.iter().zip(s2.values.iter()) {
            assert!((3.0 * a - c).abs() < 1e-9 * (1.0 + c.abs()));
        }
        // With n_fft equal to the length there is no padding, so the
        // transform is exactly circular.
        let hop = 64;
        let m = 5;
        let shifted = scalogram(&sig.rotated((m * hop) as isize), &b, 2).unwrap();
        let frames = base.n_frames();
        for t in 0..frames {
            for k in 0..b.len() {
                let a = base.values[[t, k]];
                let c = shifted.values[[(t + m) % frames, k]];
                assert!((a - c).abs() < 1e-9 * (1.0 + a));
            }
        }
    }

    #[test]
    fn s1_of_white_noise_is_flat() {
        let b = bank(32768);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 16000 * 2;
        let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let scal = scalogram(&Signal::new(x, 16000.0).unwrap(), &b, 2).unwrap();
        let s = s1(&scal, &b).unwrap();
        assert!(s.values.nrows() >= 50);
        // A band of width B Hz averaged over T seconds fluctuates like
        // 1/sqrt(B·T); only bands with B·T >= 4 are held to the bound.
        let threshold = 2.0 * PI * 8.0 / b.spec.t;
        for k in 0..b.len() {
            if b.filters[k].center < 4.0 * threshold {
                continue;
            }
            let col = s.values.column(k);
            let inner: Vec<f64> = col.iter().skip(2).take(col.len() - 4).cloned().collect();
            let mean = inner.iter().sum::<f64>() / inner.len() as f64;
            let var = inner.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / inner.len() as f64;
            assert!(var.sqrt() / mean <= 0.2, "band {k} rel std {}", var.sqrt() / mean);
        }
    }
}
