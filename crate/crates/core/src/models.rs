//! Synthetic sources with closed-form scattering predictions.
//!
//! Two families: a harmonic comb of pitch `ξ` shaped by a time-varying
//! transfer function `ĥ(t, ω)`, and a frequency-modulated harmonic
//! excitation `Σₖ cos(kθ(t))`. The predictors evaluate the asymptotic
//! first- and second-order formulas by direct summation; they only borrow
//! closed-form filter responses from the rest of the crate.

use std::f64::consts::{LN_2, PI};

use ndarray::Array2;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filterbank::FilterBank;
use crate::joint::JointWavelet;
use crate::signal::{reflect_index, Signal};

/// Frequencies up to this fraction of Nyquist are synthesized.
const NYQUIST_MARGIN: f64 = 0.98;

/// `ĥ(t, ω)`: real, non-negative, smooth in both variables.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Transfer {
    Flat,
    /// Gaussian bump of standard deviation `width_hz` whose center glides
    /// geometrically between `low_hz` and `high_hz` as
    /// `low·(high/low)^{(1 − cos(2πt/period))/2}`: up during the first half
    /// period, back down during the second.
    Formant { low_hz: f64, high_hz: f64, width_hz: f64, period: f64 },
}

impl Transfer {
    pub fn center_hz(&self, t: f64) -> Option<f64> {
        match *self {
            Transfer::Flat => None,
            Transfer::Formant { low_hz, high_hz, period, .. } => {
                let u = 0.5 * (1.0 - (2.0 * PI * t / period).cos());
                Some(low_hz * (high_hz / low_hz).powf(u))
            }
        }
    }

    /// `ĥ(t, ω)` with `ω` in rad/s.
    pub fn eval(&self, t: f64, omega: f64) -> f64 {
        match *self {
            Transfer::Flat => 1.0,
            Transfer::Formant { width_hz, .. } => {
                let c = self.center_hz(t).expect("formant has a center");
                let d = (omega.abs() / (2.0 * PI) - c) / width_hz;
                (-0.5 * d * d).exp()
            }
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            Transfer::Flat => Ok(()),
            Transfer::Formant { low_hz, high_hz, width_hz, period } => {
                if [low_hz, high_hz, width_hz, period].iter().all(|v| v.is_finite() && *v > 0.0) {
                    Ok(())
                } else {
                    Err(Error::Config("formant frequencies, width and period must be positive".into()))
                }
            }
        }
    }
}

/// Harmonic comb of pitch `xi` filtered by `transfer`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HarmonicTVFilterModel {
    /// rad/s.
    pub xi: f64,
    pub transfer: Transfer,
    /// Seconds.
    pub duration: f64,
    pub sample_rate: f64,
}

/// Phase laws with closed-form derivatives.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Phase {
    /// `θ'(t) = 2π·f0·e^{γt}`.
    Exponential { f0_hz: f64, gamma: f64 },
    /// `θ'(t) = 2π·f0·(1 + depth·sin(2π·rate·t))`.
    Vibrato { f0_hz: f64, depth: f64, rate_hz: f64 },
}

impl Phase {
    pub fn theta(&self, t: f64) -> f64 {
        match *self {
            Phase::Exponential { f0_hz, gamma } => {
                if gamma == 0.0 {
                    2.0 * PI * f0_hz * t
                } else {
                    2.0 * PI * f0_hz * (gamma * t).exp_m1() / gamma
                }
            }
            Phase::Vibrato { f0_hz, depth, rate_hz } => {
                2.0 * PI * f0_hz * (t + depth * (1.0 - (2.0 * PI * rate_hz * t).cos()) / (2.0 * PI * rate_hz))
            }
        }
    }

    /// `θ'(t)`, rad/s.
    pub fn d1(&self, t: f64) -> f64 {
        match *self {
            Phase::Exponential { f0_hz, gamma } => 2.0 * PI * f0_hz * (gamma * t).exp(),
            Phase::Vibrato { f0_hz, depth, rate_hz } => 2.0 * PI * f0_hz * (1.0 + depth * (2.0 * PI * rate_hz * t).sin()),
        }
    }

    /// `θ''(t)`, rad/s².
    pub fn d2(&self, t: f64) -> f64 {
        match *self {
            Phase::Exponential { gamma, .. } => gamma * self.d1(t),
            Phase::Vibrato { f0_hz, depth, rate_hz } => {
                let w = 2.0 * PI * rate_hz;
                2.0 * PI * f0_hz * depth * w * (w * t).cos()
            }
        }
    }

    /// `θ''/θ'`, nats/s.
    pub fn relative_rate(&self, t: f64) -> f64 {
        self.d2(t) / self.d1(t)
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            Phase::Exponential { f0_hz, gamma } => f0_hz > 0.0 && gamma.is_finite(),
            Phase::Vibrato { f0_hz, depth, rate_hz } => f0_hz > 0.0 && (0.0..1.0).contains(&depth) && rate_hz > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid phase law {self:?}")))
        }
    }
}

/// `Σₖ ĥ(t, kθ'(t))·cos(kθ(t))` for `k = 1..=n_partials`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FMModel {
    pub phase: Phase,
    pub n_partials: usize,
    pub duration: f64,
    pub sample_rate: f64,
    /// Optional spectral envelope, `Flat` for the plain FM model.
    #[serde(default = "flat")]
    pub transfer: Transfer,
}

fn flat() -> Transfer {
    Transfer::Flat
}

#[derive(Clone, Debug)]
pub struct Synthesis {
    pub signal: Signal,
    /// Partials left out because they would reach Nyquist.
    pub dropped_partials: usize,
}

fn n_samples(duration: f64, sample_rate: f64) -> Result<usize> {
    if !(duration.is_finite() && duration > 0.0 && sample_rate.is_finite() && sample_rate > 0.0) {
        return Err(Error::Config("duration and sample rate must be positive".into()));
    }
    let n = (duration * sample_rate).round() as usize;
    if n == 0 {
        return Err(Error::Config("model is shorter than one sample".into()));
    }
    Ok(n)
}

pub fn gen_tv_filtered(model: &HarmonicTVFilterModel) -> Result<Synthesis> {
    if !(model.xi.is_finite() && model.xi > 0.0) {
        return Err(Error::Config("pitch must be positive".into()));
    }
    model.transfer.validate()?;
    let n = n_samples(model.duration, model.sample_rate)?;
    let limit = NYQUIST_MARGIN * PI * model.sample_rate;
    let partials = (limit / model.xi).floor() as usize;
    let mut x = vec![0.0; n];
    for k in 1..=partials {
        let w = k as f64 * model.xi;
        for (i, v) in x.iter_mut().enumerate() {
            let t = i as f64 / model.sample_rate;
            *v += model.transfer.eval(t, w) * (w * t).cos();
        }
    }
    Ok(Synthesis { signal: Signal::new(x, model.sample_rate)?, dropped_partials: 0 })
}

pub fn gen_fm(model: &FMModel) -> Result<Synthesis> {
    model.phase.validate()?;
    model.transfer.validate()?;
    if model.n_partials == 0 {
        return Err(Error::Config("need at least one partial".into()));
    }
    let n = n_samples(model.duration, model.sample_rate)?;
    let limit = NYQUIST_MARGIN * PI * model.sample_rate;
    let times: Vec<f64> = (0..n).map(|i| i as f64 / model.sample_rate).collect();
    let peak = times.iter().map(|&t| model.phase.d1(t)).fold(0.0, f64::max);
    let mut dropped = 0;
    let mut x = vec![0.0; n];
    for k in 1..=model.n_partials {
        let kf = k as f64;
        if kf * peak >= limit {
            dropped += 1;
            continue;
        }
        for (v, &t) in x.iter_mut().zip(&times) {
            *v += model.transfer.eval(t, kf * model.phase.d1(t)) * (kf * model.phase.theta(t)).cos();
        }
    }
    if dropped > 0 {
        log::warn!("{dropped} of {} partials exceed Nyquist and were dropped", model.n_partials);
    }
    Ok(Synthesis { signal: Signal::new(x, model.sample_rate)?, dropped_partials: dropped })
}

/// Predicted first-order coefficients on a bank's grid.
#[derive(Clone, Debug)]
pub struct S1Prediction {
    /// `[frames × bands]`, frame `i` at time `i·T/2`.
    pub values: Array2<f64>,
    /// Bands where the one-partial condition holds.
    pub included: Vec<bool>,
}

/// Direct Gaussian smoothing `f ⋆ φ_T` at `t`, with `f` mirrored about both
/// ends of `[0, duration]` like a reflect-padded signal.
fn smooth_at<F: Fn(f64) -> f64>(f: &F, t: f64, sigma_t: f64, duration: f64) -> f64 {
    let reach = 4.0 * sigma_t;
    let steps = 64;
    let dt = 2.0 * reach / steps as f64;
    let mut acc = 0.0;
    let mut norm = 0.0;
    for j in 0..=steps {
        let s = -reach + j as f64 * dt;
        let w = (-0.5 * (s / sigma_t).powi(2)).exp();
        let mut u = t - s;
        if u < 0.0 {
            u = -u;
        }
        if u > duration {
            u = 2.0 * duration - u;
        }
        acc += w * f(u.clamp(0.0, duration));
        norm += w;
    }
    acc / norm
}

/// Time-domain standard deviation of the bank's low-pass.
fn lowpass_sigma_t(bank: &FilterBank) -> f64 {
    1.0 / bank.lowpass.sigma
}

fn frame_count(duration: f64, t: f64) -> usize {
    ((duration / (t / 2.0)) - 1e-9).ceil().max(1.0) as usize
}

/// `|ψ̂_λ(kξ)|·(|ĥ(·, λ)| ⋆ φ_T)` with `k` the partial closest to `λ`, for
/// bands with `λ/Q < ξ`.
pub fn predict_s1_tv(model: &HarmonicTVFilterModel, bank: &FilterBank) -> Result<S1Prediction> {
    model.transfer.validate()?;
    let t_avg = bank.spec.t;
    let q = bank.spec.q as f64;
    let frames = frame_count(model.duration, t_avg);
    let sigma_t = lowpass_sigma_t(bank);
    let bands = bank.filters.len();
    let mut included = vec![false; bands];
    let mut values = Array2::zeros((frames, bands));
    for (b, f) in bank.filters.iter().enumerate() {
        let lambda = f.center;
        let k = (lambda / model.xi).round();
        if lambda / q >= model.xi || k < 1.0 || k * model.xi >= NYQUIST_MARGIN * PI * model.sample_rate {
            continue;
        }
        included[b] = true;
        let gain = f.eval(k * model.xi).abs();
        let env = |t: f64| model.transfer.eval(t, lambda).abs();
        for i in 0..frames {
            values[[i, b]] = gain * smooth_at(&env, i as f64 * t_avg / 2.0, sigma_t, model.duration);
        }
    }
    if !included.iter().any(|&v| v) {
        log::warn!("no band satisfies the one-partial condition");
    }
    Ok(S1Prediction { values, included })
}

/// Predicted first-order coefficients and ridge slopes of an FM source.
#[derive(Clone, Debug)]
pub struct FmPrediction {
    pub s1: S1Prediction,
    /// `θ''/θ'` at each frame, nats/s; the joint ridge lies on
    /// `α/β = −θ''/θ'`.
    pub slopes: Vec<f64>,
    /// Frames where `θ''/θ'` varies by less than 25 % over one `T`.
    pub slope_valid: Vec<bool>,
}

/// `|ψ̂_λ(kθ'(·))| ⋆ φ_T` with `k` the partial closest to `λ` at each
/// instant; bands need `λ/Q < min θ'`.
pub fn predict_fm(model: &FMModel, bank: &FilterBank) -> Result<FmPrediction> {
    model.phase.validate()?;
    let t_avg = bank.spec.t;
    let q = bank.spec.q as f64;
    let frames = frame_count(model.duration, t_avg);
    let sigma_t = lowpass_sigma_t(bank);
    let grid: Vec<f64> = (0..=256).map(|i| i as f64 * model.duration / 256.0).collect();
    let min_pitch = grid.iter().map(|&t| model.phase.d1(t)).fold(f64::INFINITY, f64::min);
    let bands = bank.filters.len();
    let mut included = vec![false; bands];
    let mut values = Array2::zeros((frames, bands));
    let n = model.n_partials as f64;
    for (b, f) in bank.filters.iter().enumerate() {
        let lambda = f.center;
        if lambda / q >= min_pitch {
            continue;
        }
        included[b] = true;
        let env = |t: f64| {
            let p = model.phase.d1(t);
            let k = (lambda / p).round().clamp(1.0, n);
            if k * p >= NYQUIST_MARGIN * PI * model.sample_rate {
                return 0.0;
            }
            f.eval(k * p).abs() * model.transfer.eval(t, k * p)
        };
        for i in 0..frames {
            values[[i, b]] = smooth_at(&env, i as f64 * t_avg / 2.0, sigma_t, model.duration);
        }
    }
    let mut slopes = Vec::with_capacity(frames);
    let mut slope_valid = Vec::with_capacity(frames);
    for i in 0..frames {
        let t = (i as f64 * t_avg / 2.0).min(model.duration);
        let r = model.phase.relative_rate(t);
        let a = model.phase.relative_rate((t - t_avg / 2.0).max(0.0));
        let c = model.phase.relative_rate((t + t_avg / 2.0).min(model.duration));
        let spread = (a - c).abs();
        slopes.push(r);
        slope_valid.push(spread <= 0.25 * r.abs().max(1e-12) || spread < 1e-9);
    }
    Ok(FmPrediction { s1: S1Prediction { values, included }, slopes, slope_valid })
}

/// Sampling of a scalogram and its averaged outputs.
#[derive(Clone, Debug, PartialEq)]
pub struct JointGrid {
    /// Scalogram frame spacing, seconds.
    pub frame_hop: f64,
    /// First-order centers, rad/s, descending.
    pub band_centers: Vec<f64>,
    /// Bins per octave of the band axis.
    pub q: u32,
    /// Averaging scale, seconds.
    pub t: f64,
    /// Time-domain standard deviation of the averaging low-pass, seconds.
    pub lowpass_sigma: f64,
}

/// Predicted joint second order on the small-quefrency channels.
#[derive(Clone, Debug)]
pub struct JointPrediction {
    /// `[frames × channels·bands]` in path order (channel-major, then band);
    /// excluded channels are left at zero.
    pub values: Array2<f64>,
    /// Indices of channels with `|β| ≤ beta_small`.
    pub included: Vec<usize>,
    pub excluded: Vec<usize>,
}

/// Largest quefrency (cycles/octave) at which the envelope formula holds.
pub const BETA_SMALL: f64 = 0.5;

/// `h̃ ⋆⋆ Ψ` moduli smoothed by `φ_T`, with `h̃(t, log ω) = ω·|ĥ(t, ω)|`
/// sampled on the scalogram grid. The constant in front is left out.
pub fn predict_s2_joint_tv(model: &HarmonicTVFilterModel, wavelets: &[JointWavelet], grid: &JointGrid) -> Result<JointPrediction> {
    model.transfer.validate()?;
    let bands = grid.band_centers.len();
    let frames = (model.duration / grid.frame_hop).ceil() as usize;
    let nt = (2 * frames).next_power_of_two();
    let nb = (2 * bands).next_power_of_two();
    // Axis position p holds band bands-1-p (ascending log-frequency).
    let mut h = vec![vec![0.0; nb]; nt];
    for (i, row) in h.iter_mut().enumerate() {
        let ti = reflect_index(i, frames, nt);
        let t = ti as f64 * grid.frame_hop;
        for (p, v) in row.iter_mut().enumerate() {
            let pb = reflect_index(p, bands, nb);
            let lambda = grid.band_centers[bands - 1 - pb];
            *v = lambda * model.transfer.eval(t, lambda).abs();
        }
    }
    let frame_rate = 1.0 / grid.frame_hop;
    let decim = ((grid.t / 2.0) / grid.frame_hop).round().max(1.0) as usize;
    let n_out = frame_count(model.duration, grid.t);
    let sigma_frames = grid.lowpass_sigma * frame_rate;
    let phi: Vec<f64> = (0..nt)
        .map(|d| {
            let d = d.min(nt - d) as f64;
            (-0.5 * (d / sigma_frames).powi(2)).exp()
        })
        .collect();
    let phi_sum: f64 = phi.iter().sum();
    let mut values = Array2::zeros((n_out, wavelets.len() * bands));
    let mut included = Vec::new();
    let mut excluded = Vec::new();
    for (c, w) in wavelets.iter().enumerate() {
        if w.beta > BETA_SMALL {
            excluded.push(c);
            continue;
        }
        included.push(c);
        let scale = w.time_part.eval(w.alpha);
        let kt = kernel(nt, |k| w.time_part.eval(2.0 * PI * frame_rate * signed_bin(k, nt) / nt as f64));
        let kq = kernel(nb, |k| w.eval(w.alpha, grid.q as f64 * signed_bin(k, nb) / nb as f64) / scale);
        // Time pass, then band pass, both as direct circular sums.
        let mut y = vec![vec![Complex64::new(0.0, 0.0); nb]; nt];
        for (i, row) in y.iter_mut().enumerate() {
            for (j, hr) in h.iter().enumerate() {
                let g = kt[(i + nt - j) % nt];
                for (o, &v) in row.iter_mut().zip(hr) {
                    *o += g * v;
                }
            }
        }
        let mut env = vec![vec![0.0; bands]; nt];
        for (i, row) in y.iter().enumerate() {
            for b in 0..bands {
                let p = bands - 1 - b;
                let mut s = Complex64::new(0.0, 0.0);
                for (j, &v) in row.iter().enumerate() {
                    s += kq[(p + nb - j) % nb] * v;
                }
                env[i][b] = s.norm();
            }
        }
        for o in 0..n_out {
            let i = o * decim;
            for b in 0..bands {
                let mut s = 0.0;
                for (j, e) in env.iter().enumerate() {
                    s += phi[(i + nt - j) % nt] * e[b];
                }
                values[[o, c * bands + b]] = s / phi_sum;
            }
        }
    }
    Ok(JointPrediction { values, included, excluded })
}

fn signed_bin(k: usize, n: usize) -> f64 {
    if k <= n / 2 {
        k as f64
    } else {
        k as f64 - n as f64
    }
}

/// Inverse DFT of `resp(k)` by direct summation.
fn kernel<F: Fn(usize) -> f64>(n: usize, resp: F) -> Vec<Complex64> {
    let r: Vec<f64> = (0..n).map(resp).collect();
    (0..n)
        .map(|p| {
            let mut s = Complex64::new(0.0, 0.0);
            for (k, &v) in r.iter().enumerate() {
                if v != 0.0 {
                    s += Complex64::from_polar(v, 2.0 * PI * ((k * p) % n) as f64 / n as f64);
                }
            }
            s / n as f64
        })
        .collect()
}

/// Pearson correlation of two equally long sequences; 0 when either is
/// constant.
pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len()) as f64;
    if n < 2.0 {
        return 0.0;
    }
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        0.0
    } else {
        sab / (saa * sbb).sqrt()
    }
}

/// Relative pitch rate in octaves per second.
pub fn nats_to_octaves(rate: f64) -> f64 {
    rate / LN_2
}
