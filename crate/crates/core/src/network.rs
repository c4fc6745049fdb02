//! The scattering cascade as one differentiable network.
//!
//! The input is padded once (reflect or periodic) to `n_fft` samples; from
//! there on every stage is a periodic convolution, so each has an exact
//! adjoint. Only the outputs are cropped to the frames covering the signal.
//!
//! Layout, for averaging scale `T` (in samples) and oversampling `r = 2^os`:
//!
//! * first layer: `u₁[b] = |x ⋆ ψ_b|` at hop `T/(2r)`, periodic length `m`;
//! * `S₁[b] = u₁[b] ⋆ φ_T` decimated by `r` (hop `T/2`);
//! * time paths: `|u₁[b] ⋆ ψ_{λ₂}| ⋆ φ_T` for `λ₂ < λ₁/Q`;
//! * joint paths: `|u₁ ⋆⋆ Ψ| ⋆ φ_T`, the 2-D convolution done as a time pass
//!   with `ψ_α` then a pass along the (reflect-padded) band axis.

use ndarray::Array2;
use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft;
use crate::filterbank::{build_filterbank, build_quefrency_bank, AnalyticFilter, Axis, FilterBank, FilterBankSpec};
use crate::joint::{joint_wavelets_from_banks, JointWavelet};
use crate::scalogram::{hop_samples, padded_spectrum, S1Coeffs, Scalogram};
use crate::signal::{reflect_index, Signal};
use crate::time_scattering::{freq_scatter, PathKind, ScatteringCoeffs, ScatteringMeta, ScatteringPath, TransformKind};

type C64 = Complex64;

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Padding {
    /// Symmetric extension to at least twice the length.
    Reflect,
    /// No padding: the signal length must be a power of two and is treated
    /// as one period.
    Periodic,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScatteringConfig {
    pub q: u32,
    /// Averaging scale in samples, a power of two.
    pub t_samples: usize,
    pub oversampling: u32,
    pub k_octaves: u32,
    pub padding: Padding,
}

impl Default for ScatteringConfig {
    fn default() -> Self {
        ScatteringConfig { q: 8, t_samples: 512, oversampling: 2, k_octaves: 4, padding: Padding::Reflect }
    }
}

/// Power of two nearest (in log scale) to `t_ms` milliseconds.
pub fn t_samples_from_ms(t_ms: f64, sample_rate: f64) -> Result<usize> {
    let exact = t_ms * 1e-3 * sample_rate;
    if !(exact.is_finite() && exact >= 1.0) {
        return Err(Error::Config(format!("T = {t_ms} ms is shorter than one sample at {sample_rate} Hz")));
    }
    Ok(1usize << exact.log2().round() as u32)
}

impl ScatteringConfig {
    pub fn t_seconds(&self, sample_rate: f64) -> f64 {
        self.t_samples as f64 / sample_rate
    }

    pub fn validate(&self) -> Result<()> {
        if self.q < 1 {
            return Err(Error::Config("Q must be >= 1".into()));
        }
        if self.k_octaves < 1 {
            return Err(Error::Config("K must be >= 1 octave".into()));
        }
        if !self.t_samples.is_power_of_two() {
            return Err(Error::Config(format!("T = {} samples is not a power of two", self.t_samples)));
        }
        hop_samples(self.t_samples, self.oversampling)?;
        Ok(())
    }
}

/// Padded band-axis length for `bands` bands, after checking that `K`
/// octaves fit the axis.
pub(crate) fn check_k(bands: usize, q: u32, k: u32) -> Result<usize> {
    if (k as usize) * (q as usize) > bands {
        return Err(Error::InvalidSpec(format!(
            "K = {k} octaves exceeds the {bands}-band log-frequency axis ({:.2} octaves)",
            bands as f64 / q as f64
        )));
    }
    Ok((2 * bands).next_power_of_two())
}

/// Joint wavelets laid out for one band axis.
pub(crate) struct JointLayer {
    pub band_fft: usize,
    pub quefrency: Option<FilterBank>,
    pub wavelets: Vec<JointWavelet>,
    /// Index into the time bank of each wavelet's `ψ_α`.
    pub alpha_index: Vec<usize>,
    /// Applied quefrency response of each wavelet on `band_fft` bins.
    pub quefrency_response: Vec<Vec<f64>>,
}

impl JointLayer {
    fn assemble(time_bank: &FilterBank, wavelets: Vec<JointWavelet>, q: u32, band_fft: usize, quefrency: Option<FilterBank>) -> Self {
        let qspec = FilterBankSpec { sample_rate: q as f64, q: 1, t: 1.0, n_fft: band_fft, axis: Axis::Quefrency };
        let wavelets: Vec<JointWavelet> = wavelets
            .into_iter()
            .map(|mut w| {
                w.time_part = w.time_part.resampled(&time_bank.spec);
                w.quefrency_part = w.quefrency_part.resampled(&qspec);
                w
            })
            .collect();
        let alpha_index = wavelets
            .iter()
            .map(|w| time_bank.filters.iter().position(|f| f.center == w.alpha).expect("alpha from the time bank"))
            .collect();
        let quefrency_response = wavelets.iter().map(|w| w.quefrency_response()).collect();
        JointLayer { band_fft, quefrency, wavelets, alpha_index, quefrency_response }
    }
}

/// Everything after the first modulus: operates on `bands` envelopes of
/// periodic length `m`.
pub(crate) struct SecondLayer {
    pub m: usize,
    pub decim: usize,
    pub n_out: usize,
    pub phi: Vec<f64>,
    pub time_bank: FilterBank,
    /// First-order centers in rad/s, descending.
    pub band_centers: Vec<f64>,
    /// `(band, λ₂ index)` in output order.
    pub admissible: Vec<(usize, usize)>,
    joint: std::result::Result<JointLayer, String>,
}

pub(crate) struct LayerTape {
    v: Vec<Vec<C64>>,
    /// Joint channel outputs before the modulus, indexed `c·bands + b`.
    z: Vec<Vec<C64>>,
}

fn to_complex(x: &[f64]) -> Vec<C64> {
    x.iter().map(|&v| C64::new(v, 0.0)).collect()
}

fn spectrum(x: &[f64]) -> Vec<C64> {
    let mut v = to_complex(x);
    fft::forward(&mut v);
    v
}

/// `g·z/|z|`, with zero where `z` vanishes.
fn modulus_backward(g: &[f64], z: &[C64]) -> Vec<C64> {
    g.iter()
        .zip(z)
        .map(|(&g, &z)| {
            let a = z.norm();
            if a > 0.0 {
                z * (g / a)
            } else {
                ZERO
            }
        })
        .collect()
}

impl SecondLayer {
    /// `rate` in frames/s, `t` in seconds, `band_centers` in rad/s.
    pub fn new(rate: f64, t: f64, m: usize, decim: usize, n_out: usize, band_centers: Vec<f64>, q: u32, k: u32) -> Result<Self> {
        let time_bank = build_filterbank(&FilterBankSpec { sample_rate: rate, q: 1, t, n_fft: m, axis: Axis::Time })?;
        let bands = band_centers.len();
        let joint = check_k(bands, q, k)
            .and_then(|band_fft| {
                let quefrency = build_quefrency_bank(q, k, band_fft)?;
                let wavelets = joint_wavelets_from_banks(&time_bank, &quefrency);
                Ok(JointLayer::assemble(&time_bank, wavelets, q, band_fft, Some(quefrency)))
            })
            .map_err(|e| e.to_string());
        Ok(Self::with_joint(time_bank, m, decim, n_out, band_centers, q, joint))
    }

    /// Same layout with a caller-supplied set of joint wavelets, resampled
    /// on this layer's grids. The time bank is made of their `ψ_α`.
    pub fn from_wavelets(
        rate: f64,
        t: f64,
        m: usize,
        decim: usize,
        n_out: usize,
        band_centers: Vec<f64>,
        q: u32,
        wavelets: &[JointWavelet],
    ) -> Result<Self> {
        let spec = FilterBankSpec { sample_rate: rate, q: 1, t, n_fft: m, axis: Axis::Time };
        let mut time_bank = build_filterbank(&spec)?;
        let mut alphas: Vec<&AnalyticFilter> = Vec::new();
        for w in wavelets {
            if !alphas.iter().any(|f| f.center == w.alpha) {
                alphas.push(&w.time_part);
            }
        }
        alphas.sort_by(|a, b| b.center.total_cmp(&a.center));
        time_bank.filters = alphas.iter().map(|f| f.resampled(&spec)).collect();
        time_bank.log_centers = time_bank.filters.iter().map(|f| f.center.log2()).collect();
        let band_fft = (2 * band_centers.len()).next_power_of_two();
        let joint = JointLayer::assemble(&time_bank, wavelets.to_vec(), q, band_fft, None);
        Ok(Self::with_joint(time_bank, m, decim, n_out, band_centers, q, Ok(joint)))
    }

    fn with_joint(
        time_bank: FilterBank,
        m: usize,
        decim: usize,
        n_out: usize,
        band_centers: Vec<f64>,
        q: u32,
        joint: std::result::Result<JointLayer, String>,
    ) -> Self {
        let phi = time_bank.lowpass.response.clone();
        let mut admissible = Vec::new();
        for (b, &l1) in band_centers.iter().enumerate() {
            for (a, f) in time_bank.filters.iter().enumerate() {
                if f.center < l1 / q as f64 {
                    admissible.push((b, a));
                }
            }
        }
        SecondLayer { m, decim, n_out, phi, time_bank, band_centers, admissible, joint }
    }

    pub fn joint(&self) -> Result<&JointLayer> {
        self.joint.as_ref().map_err(|e| Error::InvalidSpec(e.clone()))
    }

    pub fn bands(&self) -> usize {
        self.band_centers.len()
    }

    fn average(&self, spec: &[C64]) -> Vec<f64> {
        fft::conv_decimate(spec, &self.phi, self.decim).iter().take(self.n_out).map(|z| z.re).collect()
    }

    fn average_adjoint_into(&self, g: &[f64], acc: &mut [C64]) {
        let mut gp = vec![ZERO; self.m / self.decim];
        for (o, &v) in gp.iter_mut().zip(g) {
            o.re = v;
        }
        fft::conv_decimate_adjoint(&gp, &self.phi, self.decim, acc);
    }

    fn average_adjoint(&self, g: &[f64]) -> Vec<f64> {
        let mut acc = vec![ZERO; self.m];
        self.average_adjoint_into(g, &mut acc);
        fft::inverse(&mut acc);
        acc.iter().map(|z| z.re).collect()
    }

    pub fn paths(&self, kind: TransformKind) -> Result<Vec<ScatteringPath>> {
        let mut paths = Vec::new();
        if matches!(kind, TransformKind::Time | TransformKind::TimeFreq) {
            for &(b, a) in &self.admissible {
                paths.push(ScatteringPath {
                    order: 2,
                    lambda1: self.band_centers[b],
                    kind: PathKind::Time { lambda2: self.time_bank.filters[a].center },
                });
            }
        }
        if kind == TransformKind::Joint {
            for w in &self.joint()?.wavelets {
                for &l1 in &self.band_centers {
                    paths.push(ScatteringPath {
                        order: 2,
                        lambda1: l1,
                        kind: PathKind::Joint { alpha: w.alpha, beta: w.beta, beta_sign: w.beta_sign },
                    });
                }
            }
        }
        Ok(paths)
    }

    /// Joint time pass then band-axis pass; returns `Z[c·bands + b]`.
    fn joint_forward(&self, jl: &JointLayer, u_hat: &[Vec<C64>]) -> Vec<Vec<C64>> {
        let bands = self.bands();
        let nb = jl.band_fft;
        let m = self.m;
        let n_ch = jl.wavelets.len();
        let mut z = vec![Vec::new(); n_ch * bands];
        let n_alpha = self.time_bank.len();
        for a in 0..n_alpha {
            let channels: Vec<usize> = (0..n_ch).filter(|&c| jl.alpha_index[c] == a).collect();
            if channels.is_empty() {
                continue;
            }
            let psi = &self.time_bank.filters[a].response;
            let y: Vec<Vec<C64>> = u_hat.par_iter().map(|s| fft::conv_decimate(s, psi, 1)).collect();
            // Per frame: pass along ascending log-frequency (band b sits at
            // position bands-1-b).
            let cols: Vec<Vec<C64>> = (0..m)
                .into_par_iter()
                .map(|t| {
                    let mut col: Vec<C64> =
                        (0..nb).map(|p| y[bands - 1 - reflect_index(p, bands, nb)][t]).collect();
                    fft::forward(&mut col);
                    let mut out = Vec::with_capacity(channels.len() * bands);
                    for &c in &channels {
                        let r = fft::conv_decimate(&col, &jl.quefrency_response[c], 1);
                        out.extend((0..bands).map(|b| r[bands - 1 - b]));
                    }
                    out
                })
                .collect();
            for (i, &c) in channels.iter().enumerate() {
                for b in 0..bands {
                    z[c * bands + b] = (0..m).map(|t| cols[t][i * bands + b]).collect();
                }
            }
        }
        z
    }

    /// Adjoint of [`Self::joint_forward`] for one `α`: band-major gradient
    /// of the time-pass outputs.
    fn joint_adjoint_alpha(&self, jl: &JointLayer, a: usize, gz: &[Vec<C64>]) -> Option<Vec<Vec<C64>>> {
        let bands = self.bands();
        let nb = jl.band_fft;
        let m = self.m;
        let channels: Vec<usize> = (0..jl.wavelets.len()).filter(|&c| jl.alpha_index[c] == a).collect();
        if channels.is_empty() {
            return None;
        }
        let cols: Vec<Vec<C64>> = (0..m)
            .into_par_iter()
            .map(|t| {
                let mut acc = vec![ZERO; nb];
                for &c in &channels {
                    let mut g = vec![ZERO; nb];
                    for b in 0..bands {
                        g[bands - 1 - b] = gz[c * bands + b][t];
                    }
                    fft::forward(&mut g);
                    for ((o, v), &h) in acc.iter_mut().zip(&g).zip(&jl.quefrency_response[c]) {
                        *o += v * h;
                    }
                }
                fft::inverse(&mut acc);
                let mut out = vec![ZERO; bands];
                for (p, v) in acc.iter().enumerate() {
                    out[bands - 1 - reflect_index(p, bands, nb)] += v;
                }
                out
            })
            .collect();
        Some((0..bands).map(|b| (0..m).map(|t| cols[t][b]).collect()).collect())
    }

    /// Averaged outputs of the envelopes `u` (`bands × m`).
    pub fn forward(&self, u: &[Vec<f64>], kind: TransformKind, keep: bool) -> Result<(Array2<f64>, Array2<f64>, Option<LayerTape>)> {
        let bands = self.bands();
        let n_out = self.n_out;
        let u_hat: Vec<Vec<C64>> = u.par_iter().map(|x| spectrum(x)).collect();
        let s1_cols: Vec<Vec<f64>> = u_hat.par_iter().map(|s| self.average(s)).collect();
        let s1 = Array2::from_shape_fn((n_out, bands), |(t, b)| s1_cols[b][t].max(0.0));
        let mut cols: Vec<Vec<f64>> = Vec::new();
        let mut v_keep = Vec::new();
        let mut z_keep = Vec::new();
        match kind {
            TransformKind::S1 | TransformKind::Freq => {}
            TransformKind::Time | TransformKind::TimeFreq => {
                let res: Vec<(Vec<f64>, Vec<C64>)> = self
                    .admissible
                    .par_iter()
                    .map(|&(b, a)| {
                        let v = fft::conv_decimate(&u_hat[b], &self.time_bank.filters[a].response, 1);
                        let w: Vec<f64> = v.iter().map(|z| z.norm()).collect();
                        (self.average(&spectrum(&w)), if keep { v } else { Vec::new() })
                    })
                    .collect();
                for (c, v) in res {
                    cols.push(c);
                    v_keep.push(v);
                }
            }
            TransformKind::Joint => {
                let jl = self.joint()?;
                let z = self.joint_forward(jl, &u_hat);
                cols = z
                    .par_iter()
                    .map(|zc| {
                        let w: Vec<f64> = zc.iter().map(|v| v.norm()).collect();
                        self.average(&spectrum(&w))
                    })
                    .collect();
                if keep {
                    z_keep = z;
                }
            }
        }
        let s2 = Array2::from_shape_fn((n_out, cols.len()), |(t, c)| cols[c][t].max(0.0));
        let tape = keep.then(|| LayerTape { v: v_keep, z: z_keep });
        Ok((s1, s2, tape))
    }

    /// Gradient with respect to the envelopes, given output gradients.
    pub fn backward(&self, tape: &LayerTape, g1: &Array2<f64>, g2: &Array2<f64>, kind: TransformKind) -> Result<Vec<Vec<f64>>> {
        let bands = self.bands();
        let m = self.m;
        let joint_grads: Vec<Option<Vec<Vec<C64>>>> = if kind == TransformKind::Joint {
            let jl = self.joint()?;
            let gz: Vec<Vec<C64>> = tape
                .z
                .par_iter()
                .enumerate()
                .map(|(c, z)| {
                    let g: Vec<f64> = g2.column(c).to_vec();
                    modulus_backward(&self.average_adjoint(&g), z)
                })
                .collect();
            (0..self.time_bank.len()).map(|a| self.joint_adjoint_alpha(jl, a, &gz)).collect()
        } else {
            Vec::new()
        };
        let time_grads: Vec<Vec<C64>> = if matches!(kind, TransformKind::Time | TransformKind::TimeFreq) {
            tape.v
                .par_iter()
                .enumerate()
                .map(|(p, v)| {
                    let g: Vec<f64> = g2.column(p).to_vec();
                    modulus_backward(&self.average_adjoint(&g), v)
                })
                .collect()
        } else {
            Vec::new()
        };
        let grads: Vec<Vec<f64>> = (0..bands)
            .into_par_iter()
            .map(|b| {
                let mut acc = vec![ZERO; m];
                let g: Vec<f64> = g1.column(b).to_vec();
                self.average_adjoint_into(&g, &mut acc);
                for (p, &(pb, a)) in self.admissible.iter().enumerate() {
                    if pb == b && !time_grads.is_empty() {
                        fft::conv_decimate_adjoint(&time_grads[p], &self.time_bank.filters[a].response, 1, &mut acc);
                    }
                }
                for (a, ga) in joint_grads.iter().enumerate() {
                    if let Some(ga) = ga {
                        fft::conv_decimate_adjoint(&ga[b], &self.time_bank.filters[a].response, 1, &mut acc);
                    }
                }
                fft::inverse(&mut acc);
                acc.iter().map(|z| z.re).collect()
            })
            .collect();
        Ok(grads)
    }
}

/// A configured cascade for signals of one length and sample rate.
pub struct ScatteringNetwork {
    pub config: ScatteringConfig,
    pub sample_rate: f64,
    pub n_samples: usize,
    pub first: FilterBank,
    /// Samples between scalogram frames.
    pub hop: usize,
    pub(crate) layer: SecondLayer,
}

struct Tape {
    z1: Vec<Vec<C64>>,
    layer: LayerTape,
}

impl ScatteringNetwork {
    pub fn new(config: ScatteringConfig, sample_rate: f64, n_samples: usize) -> Result<Self> {
        config.validate()?;
        if n_samples == 0 {
            return Err(Error::Data("signal is empty".into()));
        }
        let t = config.t_samples;
        let n_fft = match config.padding {
            Padding::Reflect => (2 * n_samples).max(t).next_power_of_two(),
            Padding::Periodic => {
                if !n_samples.is_power_of_two() || n_samples < t {
                    return Err(Error::Config(format!(
                        "periodic analysis needs a power-of-two length of at least T = {t} samples, got {n_samples}"
                    )));
                }
                n_samples
            }
        };
        let first = build_filterbank(&FilterBankSpec {
            sample_rate,
            q: config.q,
            t: t as f64 / sample_rate,
            n_fft,
            axis: Axis::Time,
        })?;
        let hop = hop_samples(t, config.oversampling)?;
        let m = n_fft / hop;
        let decim = 1usize << config.oversampling;
        let n_out = n_samples.div_ceil(t / 2);
        let layer = SecondLayer::new(
            sample_rate / hop as f64,
            t as f64 / sample_rate,
            m,
            decim,
            n_out,
            first.centers(),
            config.q,
            config.k_octaves,
        )?;
        Ok(ScatteringNetwork { config, sample_rate, n_samples, first, hop, layer })
    }

    /// log₂ of the first-order centers in Hz.
    pub fn band_log_centers(&self) -> Vec<f64> {
        self.first.filters.iter().map(|f| (f.center / (2.0 * std::f64::consts::PI)).log2()).collect()
    }

    pub fn n_fft(&self) -> usize {
        self.first.spec.n_fft
    }

    pub fn n_frames(&self) -> usize {
        self.layer.n_out
    }

    pub fn t_seconds(&self) -> f64 {
        self.config.t_seconds(self.sample_rate)
    }

    /// The second-order time bank (Q = 1) on the scalogram frame rate.
    pub fn second_bank(&self) -> &FilterBank {
        &self.layer.time_bank
    }

    pub fn quefrency_bank(&self) -> Result<&FilterBank> {
        Ok(self.layer.joint()?.quefrency.as_ref().expect("built from banks"))
    }

    pub fn joint_wavelets(&self) -> Result<&[JointWavelet]> {
        Ok(&self.layer.joint()?.wavelets)
    }

    pub fn paths(&self, kind: TransformKind) -> Result<Vec<ScatteringPath>> {
        self.layer.paths(kind)
    }

    fn check(&self, x: &Signal) -> Result<()> {
        x.validate()?;
        if x.len() != self.n_samples || (x.sample_rate - self.sample_rate).abs() > 1e-9 * self.sample_rate {
            return Err(Error::Config(format!(
                "network built for {} samples at {} Hz, got {} at {} Hz",
                self.n_samples,
                self.sample_rate,
                x.len(),
                x.sample_rate
            )));
        }
        Ok(())
    }

    fn first_layer(&self, x: &Signal) -> Vec<Vec<C64>> {
        let spec = padded_spectrum(&x.samples, self.n_fft());
        self.first.filters.par_iter().map(|f| fft::conv_decimate(&spec, &f.response, self.hop)).collect()
    }

    /// Scalogram frames covering the signal, from the same computation the
    /// cascade uses.
    pub fn scalogram(&self, x: &Signal) -> Result<Scalogram> {
        self.check(x)?;
        let z1 = self.first_layer(x);
        let frames = self.n_samples.div_ceil(self.hop);
        Ok(Scalogram {
            values: Array2::from_shape_fn((frames, z1.len()), |(t, b)| z1[b][t].norm()),
            hop: self.hop as f64 / self.sample_rate,
            band_log_centers: self.band_log_centers(),
            source_t: self.t_seconds(),
            q: self.config.q,
        })
    }

    fn run(&self, x: &Signal, kind: TransformKind, keep: bool) -> Result<(ScatteringCoeffs, Option<Tape>)> {
        self.check(x)?;
        let z1 = self.first_layer(x);
        let u1: Vec<Vec<f64>> = z1.iter().map(|z| z.iter().map(|v| v.norm()).collect()).collect();
        let (s1, mut s2, tape) = self.layer.forward(&u1, kind, keep)?;
        let mut paths = self.layer.paths(kind)?;
        let s1 = S1Coeffs { values: s1, hop: self.t_seconds() / 2.0, band_log_centers: self.band_log_centers() };
        if kind == TransformKind::TimeFreq || kind == TransformKind::Freq {
            let (f2, fp) = freq_scatter(&s1, self.config.k_octaves)?;
            s2 = if kind == TransformKind::Freq {
                paths.clear();
                f2
            } else {
                ndarray::concatenate(ndarray::Axis(1), &[s2.view(), f2.view()]).expect("equal frame counts")
            };
            paths.extend(fp);
        }
        let coeffs = ScatteringCoeffs {
            s1,
            s2,
            paths,
            meta: ScatteringMeta {
                q: self.config.q,
                t: self.t_seconds(),
                k_octaves: self.config.k_octaves,
                oversampling: self.config.oversampling,
                transform: kind,
                sample_rate: Some(self.sample_rate),
                n_samples: Some(self.n_samples),
            },
        };
        Ok((coeffs, tape.map(|layer| Tape { z1, layer })))
    }

    pub fn analyze(&self, x: &Signal, kind: TransformKind) -> Result<ScatteringCoeffs> {
        Ok(self.run(x, kind, false)?.0)
    }

    /// Coefficients of `x` together with the gradient, with respect to the
    /// samples of `x`, of `⟨g1, S₁⟩ + ⟨g2, S₂⟩`.
    pub fn vector_jacobian(&self, x: &Signal, kind: TransformKind, g1: &Array2<f64>, g2: &Array2<f64>) -> Result<(ScatteringCoeffs, Vec<f64>)> {
        self.vector_jacobian_with(x, kind, |_| Ok((g1.clone(), g2.clone())))
    }

    /// Like [`Self::vector_jacobian`], with the output gradients computed
    /// from the coefficients themselves.
    pub fn vector_jacobian_with<F>(&self, x: &Signal, kind: TransformKind, grads: F) -> Result<(ScatteringCoeffs, Vec<f64>)>
    where
        F: FnOnce(&ScatteringCoeffs) -> Result<(Array2<f64>, Array2<f64>)>,
    {
        if matches!(kind, TransformKind::Freq | TransformKind::TimeFreq) {
            return Err(Error::Config("frequency scattering is not differentiable here; use s1, time or joint".into()));
        }
        let (coeffs, tape) = self.run(x, kind, true)?;
        let tape = tape.expect("tape requested");
        let (g1, g2) = grads(&coeffs)?;
        if g1.dim() != coeffs.s1.values.dim() || g2.dim() != coeffs.s2.dim() {
            return Err(Error::Config("gradient shape does not match the coefficients".into()));
        }
        let gu = self.layer.backward(&tape.layer, &g1, &g2, kind)?;
        let n = self.n_fft();
        let m = self.layer.m;
        let g_spec: Vec<Vec<C64>> = gu
            .par_iter()
            .zip(&tape.z1)
            .map(|(g, z)| {
                let mut v = modulus_backward(g, z);
                fft::forward(&mut v);
                v
            })
            .collect();
        // Fixed band order per bin keeps the sum independent of threading.
        let mut acc = vec![ZERO; n];
        acc.par_chunks_mut(4096).enumerate().for_each(|(chunk, out)| {
            for (i, o) in out.iter_mut().enumerate() {
                let k = chunk * 4096 + i;
                let mut s = ZERO;
                for (f, g) in self.first.filters.iter().zip(&g_spec) {
                    let h = f.response[k];
                    if h != 0.0 {
                        s += g[k % m] * h;
                    }
                }
                *o = s;
            }
        });
        fft::inverse(&mut acc);
        let mut grad = vec![0.0; self.n_samples];
        for (p, v) in acc.iter().enumerate() {
            grad[reflect_index(p, self.n_samples, n)] += v.re;
        }
        Ok((coeffs, grad))
    }
}
