//! Joint time–frequency scattering with separable 2-D wavelets
//! `Ψ(t, log λ₁) = ψ_α(t)·ψ_{±β}(log λ₁)` and ridge extraction over `(α, β)`.
//!
//! Orientation convention: along ascending log-frequency a band-pass
//! quefrency filter with `beta_sign = +1` keeps positive quefrencies. A
//! ridge rising at `s` octaves per second lines up with the wavelet whose
//! signed quefrency is `β = −α/(2π s)`, so rising chirps land in
//! `beta_sign = −1` channels.

use std::f64::consts::{LN_2, PI};
use std::fmt::Write as _;

use ndarray::Array2;
use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft;
use crate::filterbank::{build_filterbank, build_quefrency_bank, AnalyticFilter, Axis, FilterBank, FilterBankSpec, FilterKind};
use crate::network::{check_k, ScatteringNetwork, SecondLayer};
use crate::scalogram::{S1Coeffs, Scalogram};
use crate::signal::reflect_index;
use crate::time_scattering::{PathKind, ScatteringCoeffs, ScatteringMeta, TransformKind};

/// One separable 2-D wavelet.
#[derive(Clone, Debug, PartialEq)]
pub struct JointWavelet {
    /// Temporal center, rad/s.
    pub alpha: f64,
    /// Quefrency magnitude, cycles/octave (0 for the low-pass channel).
    pub beta: f64,
    pub beta_sign: i8,
    pub time_part: AnalyticFilter,
    /// A band-pass quefrency wavelet, or the quefrency low-pass.
    pub quefrency_part: AnalyticFilter,
}

impl JointWavelet {
    /// Response along quefrency as applied: `ψ̂_β/√2`, its mirror image
    /// `/√2` for `beta_sign = −1`, or the low-pass unchanged.
    pub fn quefrency_response(&self) -> Vec<f64> {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        match self.beta_sign {
            0 => self.quefrency_part.response.clone(),
            1 => self.quefrency_part.response.iter().map(|v| v * s).collect(),
            _ => self.quefrency_part.mirrored_response().iter().map(|v| v * s).collect(),
        }
    }

    /// Closed-form 2-D response at `(ω, κ)` in (rad/s, cycles/octave).
    pub fn eval(&self, omega: f64, kappa: f64) -> f64 {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let q = match self.beta_sign {
            0 => self.quefrency_part.eval(kappa),
            1 => s * self.quefrency_part.eval(kappa),
            _ => s * self.quefrency_part.eval(-kappa),
        };
        self.time_part.eval(omega) * q
    }

    /// Ridge slope this wavelet is tuned to, in nats/s of `θ''/θ'`
    /// (`−(α/2π)/β` octaves per second, times ln 2). `None` for the
    /// low-pass channel.
    pub fn slope(&self) -> Option<f64> {
        slope_of(self.alpha, self.beta, self.beta_sign)
    }
}

fn slope_of(alpha: f64, beta: f64, sign: i8) -> Option<f64> {
    (sign != 0 && beta > 0.0).then(|| -(alpha / (2.0 * PI)) / (sign as f64 * beta) * LN_2)
}

/// All pairs of a time bank (Q = 1) and a quefrency bank, ordered by
/// `α` descending, then `beta_sign` (−1, 0, +1), then `|β|` descending.
pub fn joint_wavelets_from_banks(time_bank: &FilterBank, quefrency: &FilterBank) -> Vec<JointWavelet> {
    let mut out = Vec::new();
    for t in &time_bank.filters {
        let make = |q: &AnalyticFilter, sign: i8| JointWavelet {
            alpha: t.center,
            beta: if sign == 0 { 0.0 } else { q.center },
            beta_sign: sign,
            time_part: t.clone(),
            quefrency_part: q.clone(),
        };
        for q in &quefrency.filters {
            out.push(make(q, -1));
        }
        out.push(make(&quefrency.lowpass, 0));
        for q in &quefrency.filters {
            out.push(make(q, 1));
        }
    }
    out
}

/// Joint wavelets for a first-order bank with `q` bins per octave,
/// averaging scale `t` seconds, `k` octaves of quefrency, and scalogram
/// frames at `frame_rate` per second.
pub fn build_joint_wavelets(q: u32, t: f64, k: u32, frame_rate: f64) -> Result<Vec<JointWavelet>> {
    let m = ((4.0 * t * frame_rate).ceil() as usize).max(64).next_power_of_two();
    let time_bank = build_filterbank(&FilterBankSpec { sample_rate: frame_rate, q: 1, t, n_fft: m, axis: Axis::Time })?;
    let nb = (4 * k as usize * q as usize).max(64).next_power_of_two();
    let quefrency = build_quefrency_bank(q, k, nb)?;
    Ok(joint_wavelets_from_banks(&time_bank, &quefrency))
}

struct ScalogramLayout {
    layer: SecondLayer,
    /// Band-major, reflect-padded to the layer's periodic length.
    u: Vec<Vec<f64>>,
    decim: usize,
}

fn layout(scal: &Scalogram, wavelets: &[JointWavelet], t: f64) -> Result<ScalogramLayout> {
    if wavelets.is_empty() {
        return Err(Error::Config("no joint wavelets given".into()));
    }
    let alpha_max = wavelets.iter().map(|w| w.alpha).fold(0.0, f64::max);
    let needed = PI / alpha_max;
    if scal.hop > needed * (1.0 + 1e-12) {
        return Err(Error::Config(format!(
            "scalogram hop {:.6} s is too coarse for α = {:.3} rad/s; need hop <= {:.6} s",
            scal.hop, alpha_max, needed
        )));
    }
    let ratio = (t / 2.0) / scal.hop;
    let decim = ratio.round() as usize;
    if decim < 2 || (ratio - decim as f64).abs() > 1e-9 * ratio || !decim.is_power_of_two() {
        return Err(Error::Config(format!(
            "T/2 = {} s must be a power-of-two multiple (>= 2) of the hop {} s",
            t / 2.0,
            scal.hop
        )));
    }
    let frames = scal.n_frames();
    let bands = scal.n_bands();
    let m = (2 * frames).max((t / scal.hop).ceil() as usize).next_power_of_two();
    let n_out = frames.div_ceil(decim);
    let centers: Vec<f64> = scal.band_log_centers.iter().map(|l| 2.0 * PI * l.exp2()).collect();
    let layer = SecondLayer::from_wavelets(1.0 / scal.hop, t, m, decim, n_out, centers, scal.q, wavelets)?;
    let u = (0..bands).map(|b| (0..m).map(|p| scal.values[[reflect_index(p, frames, m), b]]).collect()).collect();
    Ok(ScalogramLayout { layer, u, decim })
}

fn k_of(wavelets: &[JointWavelet]) -> u32 {
    // The low-pass channel carries K as its support; recover it from σ.
    wavelets
        .iter()
        .find(|w| w.beta_sign == 0)
        .map(|w| {
            let sigma_t = 1.0 / (2.0 * PI * w.quefrency_part.sigma);
            (sigma_t * 2.0 * LN_2.sqrt()).round() as u32
        })
        .unwrap_or(0)
}

/// Joint scattering of a scalogram: `|x₁ ⋆⋆ Ψ| ⋆ φ_T` at hop `T/2` for
/// every wavelet and band, unaveraged along log-frequency.
///
/// Frames are reflect-padded in time and bands at both ends of the
/// log-frequency axis. S₁ is recomputed from the scalogram on the same grid.
pub fn joint_scatter(scal: &Scalogram, wavelets: &[JointWavelet], t: f64) -> Result<ScatteringCoeffs> {
    let k = k_of(wavelets);
    check_k(scal.n_bands(), scal.q, k)?;
    let lay = layout(scal, wavelets, t)?;
    let (s1, s2, _) = lay.layer.forward(&lay.u, TransformKind::Joint, false)?;
    let paths = lay.layer.paths(TransformKind::Joint)?;
    Ok(ScatteringCoeffs {
        s1: S1Coeffs { values: s1, hop: t / 2.0, band_log_centers: scal.band_log_centers.clone() },
        s2,
        paths,
        meta: ScatteringMeta {
            q: scal.q,
            t,
            k_octaves: k,
            oversampling: lay.decim.trailing_zeros(),
            transform: TransformKind::Joint,
            sample_rate: None,
            n_samples: None,
        },
    })
}

/// The S₂ part of [`joint_scatter`] computed by brute-force 2-D periodic
/// convolution with the outer-product kernel and direct time-domain
/// averaging. Quadratic cost; meant for verification on small inputs.
pub fn joint_scatter_direct(scal: &Scalogram, wavelets: &[JointWavelet], t: f64) -> Result<Array2<f64>> {
    let lay = layout(scal, wavelets, t)?;
    let layer = &lay.layer;
    let jl = layer.joint()?;
    let (m, nb, bands) = (layer.m, jl.band_fft, layer.bands());
    // Padded 2-D grid, ascending log-frequency along the second axis.
    let grid: Vec<f64> = (0..m * nb).map(|i| lay.u[bands - 1 - reflect_index(i % nb, bands, nb)][i / nb]).collect();
    let kernel = |resp: &[f64]| -> Vec<Complex64> {
        let mut v: Vec<Complex64> = resp.iter().map(|&r| Complex64::new(r, 0.0)).collect();
        fft::inverse(&mut v);
        v
    };
    let mut phi_k = kernel(&layer.phi);
    phi_k.truncate(m);
    let n_out = layer.n_out;
    let cols: Vec<Vec<f64>> = jl
        .wavelets
        .par_iter()
        .enumerate()
        .flat_map(|(c, _)| {
            let kt = kernel(&layer.time_bank.filters[jl.alpha_index[c]].response);
            let kq = kernel(&jl.quefrency_response[c]);
            let mut out = vec![vec![0.0; n_out]; bands];
            for (b, col) in out.iter_mut().enumerate() {
                let p = bands - 1 - b;
                let w: Vec<f64> = (0..m)
                    .map(|ti| {
                        let mut acc = Complex64::new(0.0, 0.0);
                        for t2 in 0..m {
                            let kt_v = kt[(ti + m - t2) % m];
                            for p2 in 0..nb {
                                acc += kt_v * kq[(p + nb - p2) % nb] * grid[t2 * nb + p2];
                            }
                        }
                        acc.norm()
                    })
                    .collect();
                for (o, v) in col.iter_mut().enumerate() {
                    let t0 = o * lay.decim;
                    *v = (0..m).map(|t2| phi_k[(t0 + m - t2) % m].re * w[t2]).sum::<f64>().max(0.0);
                }
            }
            out
        })
        .collect();
    Ok(Array2::from_shape_fn((n_out, cols.len()), |(t, c)| cols[c][t]))
}

/// `(E₊ − E₋)/(E₊ + E₋)` with `E±` the joint S₂ energy in `beta_sign = ±1`
/// channels; 0 when both vanish. Rising chirps score negative.
pub fn chirp_asymmetry(coeffs: &ScatteringCoeffs) -> f64 {
    let (mut plus, mut minus) = (0.0, 0.0);
    for (p, path) in coeffs.paths.iter().enumerate() {
        if let PathKind::Joint { beta_sign, .. } = path.kind {
            let e: f64 = coeffs.s2.column(p).iter().map(|v| v * v).sum();
            match beta_sign {
                1 => plus += e,
                -1 => minus += e,
                _ => {}
            }
        }
    }
    if plus + minus > 0.0 {
        (plus - minus) / (plus + minus)
    } else {
        0.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RidgeCell {
    pub alpha: f64,
    pub beta: f64,
    pub beta_sign: i8,
    pub value: f64,
    /// nats/s.
    pub slope: f64,
}

/// Strongest band-pass joint channel per (frame, band).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RidgeMap {
    pub n_frames: usize,
    /// rad/s, descending.
    pub band_centers: Vec<f64>,
    pub hop: f64,
    /// Frame-major; `None` where the band carries no modulation energy.
    pub cells: Vec<Option<RidgeCell>>,
}

/// A cell is defined when its band holds at least this fraction of the
/// frame's strongest S₁ value and its strongest band-pass coefficient is at
/// least this fraction of its S₁ value.
pub const RIDGE_FLOOR: f64 = 1e-2;

impl RidgeMap {
    pub fn cell(&self, frame: usize, band: usize) -> Option<&RidgeCell> {
        self.cells[frame * self.band_centers.len() + band].as_ref()
    }

    /// Slope of the strongest cell of each frame.
    pub fn frame_slopes(&self) -> Vec<Option<f64>> {
        let bands = self.band_centers.len();
        (0..self.n_frames)
            .map(|t| {
                self.cells[t * bands..(t + 1) * bands]
                    .iter()
                    .flatten()
                    .max_by(|a, b| a.value.total_cmp(&b.value))
                    .map(|c| c.slope)
            })
            .collect()
    }

    /// Median slope over defined cells, 0 when none is defined (no
    /// modulation anywhere).
    pub fn median_slope(&self) -> f64 {
        let mut s: Vec<f64> = self.cells.iter().flatten().map(|c| c.slope).collect();
        if s.is_empty() {
            return 0.0;
        }
        s.sort_by(|a, b| a.total_cmp(b));
        let n = s.len();
        if n % 2 == 1 {
            s[n / 2]
        } else {
            0.5 * (s[n / 2 - 1] + s[n / 2])
        }
    }

    pub fn defined_cells(&self) -> usize {
        self.cells.iter().flatten().count()
    }

    /// `frame,lambda1,alpha,beta,sign,slope`, one row per defined cell.
    pub fn to_csv(&self) -> String {
        let bands = self.band_centers.len();
        let mut s = String::from("frame,lambda1,alpha,beta,sign,slope\n");
        for (i, c) in self.cells.iter().enumerate() {
            if let Some(c) = c {
                let _ = writeln!(
                    s,
                    "{},{},{},{},{},{}",
                    i / bands,
                    self.band_centers[i % bands],
                    c.alpha,
                    c.beta,
                    c.beta_sign,
                    c.slope
                );
            }
        }
        s
    }
}

/// Argmax over band-pass joint channels for every (frame, band).
pub fn extract_ridge(coeffs: &ScatteringCoeffs) -> Result<RidgeMap> {
    extract_ridge_with_floor(coeffs, RIDGE_FLOOR)
}

pub fn extract_ridge_with_floor(coeffs: &ScatteringCoeffs, floor: f64) -> Result<RidgeMap> {
    if coeffs.meta.transform != TransformKind::Joint {
        return Err(Error::Config("ridge extraction needs joint coefficients".into()));
    }
    let centers: Vec<f64> = coeffs.s1.band_log_centers.iter().map(|l| 2.0 * PI * l.exp2()).collect();
    let bands = centers.len();
    let band_of = |l1: f64| centers.iter().position(|&c| (c - l1).abs() <= 1e-9 * c);
    let mut per_band: Vec<Vec<usize>> = vec![Vec::new(); bands];
    for (p, path) in coeffs.paths.iter().enumerate() {
        if let PathKind::Joint { beta_sign, .. } = path.kind {
            if beta_sign != 0 {
                let b = band_of(path.lambda1)
                    .ok_or_else(|| Error::Config(format!("path band {} not in S1", path.lambda1)))?;
                per_band[b].push(p);
            }
        }
    }
    if per_band.iter().all(|v| v.is_empty()) {
        return Err(Error::Config("no band-pass joint channels".into()));
    }
    let frames = coeffs.n_frames();
    let mut cells = Vec::with_capacity(frames * bands);
    for t in 0..frames {
        let frame_max = coeffs.s1.values.row(t).iter().cloned().fold(0.0, f64::max);
        for (b, chans) in per_band.iter().enumerate() {
            let s1 = coeffs.s1.values[[t, b]];
            let best = chans.iter().map(|&p| (p, coeffs.s2[[t, p]])).max_by(|a, b| a.1.total_cmp(&b.1));
            let cell = match best {
                Some((p, v)) if frame_max > 0.0 && s1 >= floor * frame_max && v > floor * s1 && v > 0.0 => {
                    match coeffs.paths[p].kind {
                        PathKind::Joint { alpha, beta, beta_sign } => Some(RidgeCell {
                            alpha,
                            beta,
                            beta_sign,
                            value: v,
                            slope: slope_of(alpha, beta, beta_sign).unwrap_or(0.0),
                        }),
                        _ => None,
                    }
                }
                _ => None,
            };
            cells.push(cell);
        }
    }
    Ok(RidgeMap { n_frames: frames, band_centers: centers, hop: coeffs.s1.hop, cells })
}

/// Minimum over the covered region and global maximum of
/// `|φ̂_T(ω)|² + ½Σ(|Ψ̂(ω,κ)|² + |Ψ̂(−ω,−κ)|²)`, the sum over every joint
/// wavelet plus the time low-pass (which is all-pass along quefrency).
///
/// The covered region is the time bank's covered band in `ω` times the
/// quefrency bank's covered band in `|κ|`.
pub fn half_plane_frame(net: &ScatteringNetwork) -> Result<(f64, f64)> {
    let time = net.second_bank();
    let quef = net.quefrency_bank()?;
    let wavelets = net.joint_wavelets()?;
    let (m, nb) = (time.spec.n_fft, quef.spec.n_fft);
    let qresp: Vec<Vec<f64>> = wavelets.iter().map(|w| w.quefrency_response()).collect();
    let (w_lo, w_hi) = time.covered_band();
    let (k_lo, k_hi) = quef.covered_band();
    let mut min = f64::INFINITY;
    let mut max: f64 = 0.0;
    for k in 0..m {
        let phi = time.lowpass.response[k];
        let omega = time.spec.bin_frequency(k);
        for j in 0..nb {
            let kappa = quef.spec.bin_frequency(j);
            let mut a = phi * phi;
            for (w, q) in wavelets.iter().zip(&qresp) {
                let t1 = w.time_part.response[k];
                let t2 = w.time_part.response[(m - k) % m];
                let q1 = q[j];
                let q2 = q[(nb - j) % nb];
                a += 0.5 * (t1 * t1 * q1 * q1 + t2 * t2 * q2 * q2);
            }
            max = max.max(a);
            if omega >= w_lo && omega <= w_hi && kappa.abs() >= k_lo && kappa.abs() <= k_hi {
                min = min.min(a);
            }
        }
    }
    if min.is_infinite() {
        return Err(Error::Config(format!(
            "covered region is empty: the time bank at {:.1} frames/s has no octave to cover; raise the oversampling",
            time.spec.sample_rate
        )));
    }
    Ok((min, max))
}

/// −3 dB widths of a joint wavelet's envelope: seconds along time and
/// octaves along log-frequency, measured on dense grids.
pub fn wavelet_support(w: &JointWavelet) -> (f64, f64) {
    fn width(f: &AnalyticFilter, unit: f64, span: f64) -> f64 {
        // Envelope of the impulse response by direct Fourier sum of the
        // closed form; the response is real so the envelope is symmetric.
        let n = 4096;
        let (lo, hi) = match f.kind {
            FilterKind::Lowpass => (-6.0 * f.sigma, 6.0 * f.sigma),
            _ => ((f.center - 6.0 * f.sigma).max(0.0), f.center + 6.0 * f.sigma),
        };
        let dw = (hi - lo) / n as f64;
        let env = |x: f64| -> f64 {
            let mut acc = Complex64::new(0.0, 0.0);
            for i in 0..n {
                let om = lo + (i as f64 + 0.5) * dw;
                acc += Complex64::from_polar(f.eval(om), om * x * unit);
            }
            acc.norm()
        };
        let peak = env(0.0);
        let target = peak / 2f64.sqrt();
        // Bisection on the half-width.
        let (mut a, mut b) = (0.0, span);
        for _ in 0..60 {
            let mid = 0.5 * (a + b);
            if env(mid) > target {
                a = mid;
            } else {
                b = mid;
            }
        }
        a + b
    }
    let t_width = width(&w.time_part, 1.0, 20.0 / w.alpha);
    let q_center = w.quefrency_part.center.max(w.quefrency_part.sigma);
    let l_width = width(&w.quefrency_part, 2.0 * PI, 20.0 / q_center);
    (t_width, l_width)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{Padding, ScatteringConfig};
    use crate::signal::Signal;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn channel_count_and_order_for_the_default_setup() {
        let net = ScatteringNetwork::new(ScatteringConfig::default(), 16000.0, 16000).unwrap();
        let n_alpha = net.second_bank().len();
        let n_beta = net.quefrency_bank().unwrap().len();
        // Independent enumeration: α = 2π/T·2^j below the frame-rate
        // Nyquist, β = 4·2^{-j} down to 1/(2K).
        let t = 0.032;
        let nyq = PI * 16000.0 / 64.0;
        let alphas = (0..).map(|j| 2.0 * PI / t * 2f64.powi(j)).take_while(|&a| a < nyq).count();
        let betas = (0..).map(|j| 4.0 / 2f64.powi(j)).take_while(|&b| b >= 0.125).count();
        assert_eq!((n_alpha, n_beta), (alphas, betas));
        let w = net.joint_wavelets().unwrap();
        assert_eq!(w.len(), alphas * (2 * betas + 1));
        for pair in w.windows(2) {
            let (a, b) = (&pair[0], &pair[1]);
            let key = |w: &JointWavelet| (-w.alpha, w.beta_sign, if w.beta_sign == 1 { -w.beta } else { w.beta });
            let (ka, kb) = (key(a), key(b));
            assert!(ka.0 < kb.0 || (ka.0 == kb.0 && (ka.1 < kb.1 || (ka.1 == kb.1 && ka.2 < kb.2))) || {
                // Within sign −1 |β| descends too.
                ka.0 == kb.0 && ka.1 == -1 && kb.1 == -1 && a.beta > b.beta
            });
        }
        assert!(w.iter().all(|w| w.alpha >= 2.0 * PI / t * (1.0 - 1e-12)));
    }

    #[test]
    fn separable_outer_product() {
        let ws = build_joint_wavelets(8, 0.032, 4, 250.0).unwrap();
        let w = &ws[3];
        for &(om, ka) in &[(300.0, -1.0), (500.0, 2.0), (-10.0, 1.0)] {
            let expect = w.time_part.eval(om) * w.quefrency_part.eval(if w.beta_sign < 0 { -ka } else { ka }) / 2f64.sqrt();
            assert!((w.eval(om, ka) - expect).abs() < 1e-15);
        }
    }

    #[test]
    fn half_plane_frame_bounds() {
        let net = ScatteringNetwork::new(ScatteringConfig::default(), 16000.0, 16000).unwrap();
        assert!(half_plane_frame(&net).is_err());
        let cfg = ScatteringConfig { oversampling: 4, ..Default::default() };
        let net = ScatteringNetwork::new(cfg, 16000.0, 16000).unwrap();
        let (min, max) = half_plane_frame(&net).unwrap();
        assert!(max <= 1.001, "{max}");
        assert!(min >= 0.75, "{min}");
    }

    #[test]
    fn supports_scale_inversely_with_center() {
        let ws = build_joint_wavelets(8, 0.25, 4, 64.0).unwrap();
        let mut t_prod = Vec::new();
        let mut l_prod = Vec::new();
        for w in ws.iter().filter(|w| w.beta_sign == 1) {
            let (tw, lw) = wavelet_support(w);
            t_prod.push(tw * w.alpha / (2.0 * PI));
            l_prod.push(lw * w.beta);
        }
        let spread = |v: &[f64]| {
            let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = v.iter().cloned().fold(0.0, f64::max);
            hi / lo
        };
        assert!(spread(&t_prod) < 1.05, "{t_prod:?}");
        assert!(spread(&l_prod) < 1.05, "{l_prod:?}");
        // Same order as one period of the center oscillation.
        assert!(t_prod.iter().all(|&v| (0.2..=2.0).contains(&v)), "{t_prod:?}");
        assert!(l_prod.iter().all(|&v| (0.2..=2.0).contains(&v)), "{l_prod:?}");
    }

    fn random_scalogram(frames: usize, bands: usize, seed: u64) -> Scalogram {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Scalogram {
            values: Array2::from_shape_fn((frames, bands), |_| rng.gen_range(0.0..1.0)),
            hop: 1.0 / 64.0,
            band_log_centers: (0..bands).map(|b| 12.0 - b as f64 / 4.0).collect(),
            source_t: 0.25,
            q: 4,
        }
    }

    #[test]
    fn two_pass_equals_direct() {
        let scal = random_scalogram(20, 12, 5);
        let ws = build_joint_wavelets(4, 0.25, 2, 64.0).unwrap();
        let fast = joint_scatter(&scal, &ws, 0.25).unwrap();
        let slow = joint_scatter_direct(&scal, &ws, 0.25).unwrap();
        let num: f64 = fast.s2.iter().zip(slow.iter()).map(|(a, b)| (a - b).powi(2)).sum();
        let den: f64 = slow.iter().map(|v| v * v).sum();
        assert!((num / den).sqrt() <= 1e-10, "{}", (num / den).sqrt());
    }

    #[test]
    fn zero_scalogram_and_coarse_hop() {
        let mut scal = random_scalogram(40, 12, 1);
        scal.values.fill(0.0);
        let ws = build_joint_wavelets(4, 0.25, 2, 64.0).unwrap();
        let c = joint_scatter(&scal, &ws, 0.25).unwrap();
        assert!(c.s2.iter().all(|&v| v == 0.0));
        assert_eq!(chirp_asymmetry(&c), 0.0);
        scal.hop = 0.1;
        match joint_scatter(&scal, &ws, 0.25) {
            Err(Error::Config(msg)) => assert!(msg.contains("need hop")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn octave_transposition_shifts_joint_coefficients() {
        let bands = 128;
        let frames = 64;
        let f = |t: usize, l: f64| {
            let tt = t as f64 / 64.0;
            (-(l - 9.0 - 0.8 * tt).powi(2)).exp() * (1.0 + 0.3 * (2.0 * PI * 3.0 * tt).sin())
        };
        let mk = |shift: f64| Scalogram {
            values: Array2::from_shape_fn((frames, bands), |(t, b)| f(t, 25.0 - b as f64 / 4.0 - shift)),
            hop: 1.0 / 64.0,
            band_log_centers: (0..bands).map(|b| 25.0 - b as f64 / 4.0).collect(),
            source_t: 0.25,
            q: 4,
        };
        let ws = build_joint_wavelets(4, 0.25, 2, 64.0).unwrap();
        let a = joint_scatter(&mk(0.0), &ws, 0.25).unwrap();
        let b = joint_scatter(&mk(1.0), &ws, 0.25).unwrap();
        let (mut num, mut den) = (0.0, 0.0);
        for (c, p) in a.paths.iter().enumerate() {
            let PathKind::Joint { beta, .. } = p.kind else { unreachable!() };
            let margin = if beta > 0.0 { (3.0 * 4.0 / beta).ceil() as usize } else { 16 };
            let band = c % bands;
            if (beta > 0.0 && !(0.5..=1.0).contains(&beta)) || band < margin + 4 || band + margin >= bands {
                continue;
            }
            for t in 0..a.n_frames() {
                num += (a.s2[[t, c]] - b.s2[[t, c - 4]]).powi(2);
                den += a.s2[[t, c]].powi(2);
            }
        }
        assert!((num / den).sqrt() <= 1e-3, "{}", (num / den).sqrt());
    }

    #[test]
    fn chirp_direction_flips_asymmetry() {
        let fs = 8000.0;
        let n = 8192;
        let cfg = ScatteringConfig { t_samples: 2048, padding: Padding::Periodic, ..Default::default() };
        let net = ScatteringNetwork::new(cfg, fs, n).unwrap();
        // Periodic sawtooth glide: 200 Hz → 1600 Hz every 0.512 s.
        let period = 0.512;
        let gamma = (8.0f64).ln() / period;
        let mut phase = 0.0;
        let up: Vec<f64> = (0..n)
            .map(|i| {
                let tt = (i as f64 / fs) % period;
                phase += 2.0 * PI * 200.0 * (gamma * tt).exp() / fs;
                let w = (PI * tt / period).sin().powi(2);
                w * phase.cos()
            })
            .collect();
        let up = Signal::new(up, fs).unwrap();
        let down = up.reversed();
        let a = chirp_asymmetry(&net.analyze(&up, TransformKind::Joint).unwrap());
        let b = chirp_asymmetry(&net.analyze(&down, TransformKind::Joint).unwrap());
        assert!(a <= -0.5 && b >= 0.5, "{a} {b}");
    }

    #[test]
    fn exponential_chirp_slope() {
        let fs = 16000.0;
        let n = 32768;
        let cfg = ScatteringConfig { t_samples: 8192, ..Default::default() };
        let net = ScatteringNetwork::new(cfg, fs, n).unwrap();
        let gamma = 2.0;
        let x: Vec<f64> = (0..n)
            .map(|i| {
                let t = i as f64 / fs;
                (2.0 * PI * 200.0 * ((gamma * t).exp() - 1.0) / gamma).cos()
            })
            .collect();
        let c = net.analyze(&Signal::new(x, fs).unwrap(), TransformKind::Joint).unwrap();
        let ridge = extract_ridge(&c).unwrap();
        let s = ridge.median_slope();
        assert!(s > gamma / 2.0 && s < gamma * 2.0, "{s}");
        assert!(ridge.to_csv().lines().count() > 1);
    }
}
