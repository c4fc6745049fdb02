//! Scattering coefficient containers, second-order time scattering,
//! frequency scattering along log-frequency, and log compression.

use std::f64::consts::PI;

use log::warn;
use ndarray::Array2;
use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft;
use crate::filterbank::{build_quefrency_bank, FilterBank};
use crate::network::{ScatteringConfig, ScatteringNetwork};
use crate::scalogram::S1Coeffs;
use crate::signal::{reflect_index, Signal};

/// Which second-order coefficients a [`ScatteringCoeffs`] carries.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum TransformKind {
    #[serde(rename = "s1")]
    S1,
    #[serde(rename = "time")]
    Time,
    #[serde(rename = "freq")]
    Freq,
    #[serde(rename = "time+freq")]
    TimeFreq,
    #[serde(rename = "joint")]
    Joint,
}

impl TransformKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TransformKind::S1 => "s1",
            TransformKind::Time => "time",
            TransformKind::Freq => "freq",
            TransformKind::TimeFreq => "time+freq",
            TransformKind::Joint => "joint",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "s1" => Ok(TransformKind::S1),
            "time" => Ok(TransformKind::Time),
            "freq" => Ok(TransformKind::Freq),
            "time+freq" => Ok(TransformKind::TimeFreq),
            "joint" => Ok(TransformKind::Joint),
            other => Err(Error::Config(format!("unknown transform '{other}' (s1, time, time+freq, joint)"))),
        }
    }
}

/// Second-order wavelet indices of a path.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum PathKind {
    /// Temporal modulation frequency `λ₂` in rad/s.
    Time { lambda2: f64 },
    /// Quefrency along log-frequency, cycles/octave.
    Freq { beta: f64 },
    /// `alpha` in rad/s, `beta ≥ 0` in cycles/octave; `beta_sign` is 0 only
    /// for the quefrency low-pass channel.
    Joint { alpha: f64, beta: f64, beta_sign: i8 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScatteringPath {
    pub order: u8,
    /// First-order band center, rad/s.
    pub lambda1: f64,
    #[serde(flatten)]
    pub kind: PathKind,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScatteringMeta {
    pub q: u32,
    /// Averaging scale in seconds.
    pub t: f64,
    pub k_octaves: u32,
    pub oversampling: u32,
    pub transform: TransformKind,
    /// Known when the coefficients were computed from a waveform.
    pub sample_rate: Option<f64>,
    pub n_samples: Option<usize>,
}

/// First- and second-order coefficients with their path table.
#[derive(Clone, Debug, PartialEq)]
pub struct ScatteringCoeffs {
    pub s1: S1Coeffs,
    /// `[n_frames × n_paths]`.
    pub s2: Array2<f64>,
    pub paths: Vec<ScatteringPath>,
    pub meta: ScatteringMeta,
}

impl ScatteringCoeffs {
    pub fn n_frames(&self) -> usize {
        self.s1.values.nrows()
    }

    /// `‖S₁‖² + ‖S₂‖²`.
    pub fn energy(&self) -> f64 {
        self.s1.values.iter().chain(self.s2.iter()).map(|v| v * v).sum()
    }

    /// Frames × (bands + paths): S₁ columns followed by S₂ columns.
    pub fn combined(&self) -> Array2<f64> {
        let (f, b) = self.s1.values.dim();
        let p = self.s2.ncols();
        Array2::from_shape_fn((f, b + p), |(t, c)| if c < b { self.s1.values[[t, c]] } else { self.s2[[t, c - b]] })
    }

    pub(crate) fn check_compatible(&self, other: &ScatteringCoeffs) -> Result<()> {
        if self.s1.values.dim() != other.s1.values.dim() || self.s2.dim() != other.s2.dim() {
            return Err(Error::Config(format!(
                "coefficient shapes differ: S1 {:?} vs {:?}, S2 {:?} vs {:?}",
                self.s1.values.dim(),
                other.s1.values.dim(),
                self.s2.dim(),
                other.s2.dim()
            )));
        }
        if self.paths.len() != other.paths.len()
            || self.paths.iter().zip(&other.paths).any(|(a, b)| !same_path(a, b))
        {
            return Err(Error::Config("coefficient path tables differ".into()));
        }
        Ok(())
    }
}

fn same_path(a: &ScatteringPath, b: &ScatteringPath) -> bool {
    let close = |x: f64, y: f64| (x - y).abs() <= 1e-9 * (1.0 + x.abs().max(y.abs()));
    a.order == b.order
        && close(a.lambda1, b.lambda1)
        && match (a.kind, b.kind) {
            (PathKind::Time { lambda2: x }, PathKind::Time { lambda2: y }) => close(x, y),
            (PathKind::Freq { beta: x }, PathKind::Freq { beta: y }) => close(x, y),
            (
                PathKind::Joint { alpha: a1, beta: b1, beta_sign: s1 },
                PathKind::Joint { alpha: a2, beta: b2, beta_sign: s2 },
            ) => close(a1, a2) && close(b1, b2) && s1 == s2,
            _ => false,
        }
}

/// Relative distance `‖A − B‖/‖A‖` between two coefficient sets, S₁ and S₂
/// together.
pub fn relative_distance(a: &ScatteringCoeffs, b: &ScatteringCoeffs) -> Result<f64> {
    a.check_compatible(b)?;
    let num: f64 = a
        .s1
        .values
        .iter()
        .zip(b.s1.values.iter())
        .chain(a.s2.iter().zip(b.s2.iter()))
        .map(|(x, y)| (x - y).powi(2))
        .sum();
    let den = a.energy();
    Ok(if den == 0.0 { num.sqrt() } else { (num / den).sqrt() })
}

/// First- and second-order time scattering of `x`.
pub fn time_scatter(x: &Signal, cfg: &ScatteringConfig) -> Result<ScatteringCoeffs> {
    ScatteringNetwork::new(cfg.clone(), x.sample_rate, x.len())?.analyze(x, TransformKind::Time)
}

/// Bins per octave implied by the two highest bands.
fn bins_per_octave(log_centers: &[f64]) -> Result<u32> {
    if log_centers.len() < 2 {
        return Err(Error::InvalidSpec("need at least two bands to scatter along log-frequency".into()));
    }
    let q = 1.0 / (log_centers[0] - log_centers[1]);
    if !(q.is_finite() && q >= 0.5) {
        return Err(Error::InvalidSpec("band centers are not geometrically spaced at the top".into()));
    }
    Ok(q.round() as u32)
}

/// Frequency scattering of each S₁ frame along log λ₁: the modulus of its
/// convolution with every band-pass quefrency wavelet of a `k_octaves`
/// bank, unaveraged along log-frequency.
///
/// The log-frequency axis is reflect-padded at both ends. Paths are ordered
/// by quefrency (descending), then band (descending frequency).
pub fn freq_scatter(s1: &S1Coeffs, k_octaves: u32) -> Result<(Array2<f64>, Vec<ScatteringPath>)> {
    let q = bins_per_octave(&s1.band_log_centers)?;
    let bands = s1.band_log_centers.len();
    if (k_octaves as usize) * (q as usize) > bands {
        return Err(Error::InvalidSpec(format!(
            "K = {k_octaves} octaves exceeds the {bands}-band log-frequency axis ({:.2} octaves)",
            bands as f64 / q as f64
        )));
    }
    let nb = (2 * bands).next_power_of_two();
    let bank = build_quefrency_bank(q, k_octaves, nb)?;
    let frames = s1.values.nrows();
    let per_frame: Vec<Vec<f64>> = (0..frames)
        .into_par_iter()
        .map(|t| {
            let mut col: Vec<Complex64> = (0..nb)
                .map(|p| Complex64::new(s1.values[[t, bands - 1 - reflect_index(p, bands, nb)]], 0.0))
                .collect();
            fft::forward(&mut col);
            let mut out = Vec::with_capacity(bank.len() * bands);
            for f in &bank.filters {
                let z = fft::conv_decimate(&col, &f.response, 1);
                out.extend((0..bands).map(|b| z[bands - 1 - b].norm()));
            }
            out
        })
        .collect();
    let paths = freq_paths(&bank, &s1.band_log_centers);
    let s2 = Array2::from_shape_fn((frames, paths.len()), |(t, c)| per_frame[t][c]);
    Ok((s2, paths))
}

fn freq_paths(bank: &FilterBank, log_centers: &[f64]) -> Vec<ScatteringPath> {
    bank.filters
        .iter()
        .flat_map(|f| {
            log_centers.iter().map(move |&l| ScatteringPath {
                order: 2,
                lambda1: 2.0 * PI * l.exp2(),
                kind: PathKind::Freq { beta: f.center },
            })
        })
        .collect()
}

/// Frequency scattering of the S₁ part of `coeffs`, returned as a
/// coefficient set whose S₂ holds only the frequency paths.
pub fn freq_scatter_coeffs(coeffs: &ScatteringCoeffs, k_octaves: u32) -> Result<ScatteringCoeffs> {
    let (s2, paths) = freq_scatter(&coeffs.s1, k_octaves)?;
    let mut meta = coeffs.meta.clone();
    meta.transform = TransformKind::Freq;
    meta.k_octaves = k_octaves;
    Ok(ScatteringCoeffs { s1: coeffs.s1.clone(), s2, paths, meta })
}

/// Median of the strictly positive entries, if any.
pub fn median_nonzero<'a>(values: impl Iterator<Item = &'a f64>) -> Option<f64> {
    let mut v: Vec<f64> = values.filter(|&&x| x > 0.0).cloned().collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}

/// Maps every coefficient to `ln(value + eps·m)`, with `m` the median of
/// the nonzero coefficients of both orders.
pub fn log_compress(c: &ScatteringCoeffs, eps: f64) -> Result<ScatteringCoeffs> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::Config(format!("log floor must be positive, got {eps}")));
    }
    let m = match median_nonzero(c.s1.values.iter().chain(c.s2.iter())) {
        Some(m) => m,
        None => {
            warn!("log compression of an all-zero tensor");
            1.0
        }
    };
    let floor = eps * m;
    let mut out = c.clone();
    out.s1.values.mapv_inplace(|v| (v + floor).ln());
    out.s2.mapv_inplace(|v| (v + floor).ln());
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::Padding;

    fn s1_from(values: Array2<f64>, q: u32) -> S1Coeffs {
        let bands = values.ncols();
        S1Coeffs {
            values,
            hop: 0.016,
            band_log_centers: (0..bands).map(|b| 13.0 - b as f64 / q as f64).collect(),
        }
    }

    #[test]
    fn flat_axis_has_no_quefrency_energy() {
        let s = s1_from(Array2::from_elem((4, 64), 2.5), 8);
        let (s2, paths) = freq_scatter(&s, 4).unwrap();
        assert_eq!(paths.len(), 6 * 64);
        let max = s2.iter().cloned().fold(0.0, f64::max);
        assert!(max <= 1e-3 * 2.5, "{max}");
    }

    #[test]
    fn comb_along_log_frequency_selects_its_quefrency() {
        let bands = 96;
        let s = s1_from(
            Array2::from_shape_fn((2, bands), |(_, b)| 1.0 + (2.0 * PI * 2.0 * (13.0 - b as f64 / 8.0)).cos()),
            8,
        );
        let (s2, paths) = freq_scatter(&s, 4).unwrap();
        let mut energy = std::collections::BTreeMap::new();
        for (c, p) in paths.iter().enumerate() {
            if let PathKind::Freq { beta } = p.kind {
                *energy.entry((beta * 1000.0) as i64).or_insert(0.0) += s2.column(c).iter().map(|v| v * v).sum::<f64>();
            }
        }
        let best = energy.iter().max_by(|a, b| a.1.total_cmp(b.1)).unwrap();
        assert_eq!(*best.0, 2000);
    }

    #[test]
    fn octave_transposition_shifts_outputs() {
        let bands = 256;
        let f = |l: f64| (-(l - 8.0).powi(2) / 2.0).exp() + 0.5 * (-(l - 10.0).powi(2)).exp();
        let base = s1_from(Array2::from_shape_fn((1, bands), |(_, b)| f(24.0 - b as f64 / 8.0)), 8);
        let up = s1_from(Array2::from_shape_fn((1, bands), |(_, b)| f(24.0 - b as f64 / 8.0 - 1.0)), 8);
        let (a, paths) = freq_scatter(&base, 4).unwrap();
        let (b, _) = freq_scatter(&up, 4).unwrap();
        let (mut num, mut den) = (0.0, 0.0);
        for (c, p) in paths.iter().enumerate() {
            let PathKind::Freq { beta } = p.kind else { unreachable!() };
            // Filters reaching the quefrency Nyquist are cut there and leak along the whole axis.
            let margin = (3.0 * 8.0 / beta).ceil() as usize;
            let band = c % bands;
            if !(0.5..=1.0).contains(&beta) || band < margin + 8 || band + margin >= bands {
                continue;
            }
            num += (a[[0, c]] - b[[0, c - 8]]).powi(2);
            den += a[[0, c]].powi(2);
        }
        assert!((num / den).sqrt() <= 1e-3, "{}", (num / den).sqrt());
    }

    #[test]
    fn k_beyond_axis_is_rejected() {
        let s = s1_from(Array2::from_elem((1, 16), 1.0), 8);
        assert!(matches!(freq_scatter(&s, 4), Err(Error::InvalidSpec(_))));
    }

    #[test]
    fn log_compression() {
        let cfg = ScatteringConfig { t_samples: 256, padding: Padding::Periodic, ..Default::default() };
        let x: Vec<f64> = (0..4096).map(|n| (0.3 * n as f64).sin()).collect();
        let c = time_scatter(&Signal::new(x, 16000.0).unwrap(), &cfg).unwrap();
        let l1 = log_compress(&c, 1e-6).unwrap();
        let mut doubled = c.clone();
        doubled.s1.values.mapv_inplace(|v| 2.0 * v);
        doubled.s2.mapv_inplace(|v| 2.0 * v);
        let l2 = log_compress(&doubled, 1e-6).unwrap();
        for (a, b) in l1.s1.values.iter().zip(l2.s1.values.iter()) {
            assert!((b - a - 2f64.ln()).abs() < 1e-9);
        }
        let zero = time_scatter(&Signal::new(vec![0.0; 4096], 16000.0).unwrap(), &cfg).unwrap();
        let lz = log_compress(&zero, 1e-3).unwrap();
        assert!(lz.s1.values.iter().all(|&v| (v - 1e-3f64.ln()).abs() < 1e-12));
        assert!(log_compress(&c, 0.0).is_err());
    }

    #[test]
    fn stationary_tone_has_little_second_order() {
        let cfg = ScatteringConfig { t_samples: 512, padding: Padding::Periodic, ..Default::default() };
        let n = 16384;
        // Tone on a DFT bin so the periodic analysis sees no discontinuity.
        let k = 440 * n / 16000;
        let x: Vec<f64> = (0..n).map(|i| (2.0 * PI * k as f64 * i as f64 / n as f64).cos()).collect();
        let c = time_scatter(&Signal::new(x, 16000.0).unwrap(), &cfg).unwrap();
        let bands: Vec<f64> = c.s1.band_log_centers.iter().map(|l| 2.0 * PI * l.exp2()).collect();
        for (p, path) in c.paths.iter().enumerate() {
            let b = bands.iter().position(|&l| (l - path.lambda1).abs() < 1e-6).unwrap();
            let s1: f64 = c.s1.values.column(b).sum();
            let s2: f64 = c.s2.column(p).sum();
            if s1 > 1e-3 * c.s1.values.iter().cloned().fold(0.0, f64::max) {
                assert!(s2 <= 0.05 * s1, "path {p}: {s2} vs {s1}");
            }
        }
        for p in &c.paths {
            if let PathKind::Time { lambda2 } = p.kind {
                assert!(lambda2 < p.lambda1 / 8.0);
            }
        }
    }

    #[test]
    fn am_tone_peaks_at_its_modulation_rate() {
        let fs = 16000.0;
        let cfg = ScatteringConfig { t_samples: 8192, oversampling: 4, padding: Padding::Periodic, ..Default::default() };
        let n = 65536;
        let x: Vec<f64> = (0..n)
            .map(|i| {
                let t = i as f64 / fs;
                (1.0 + 0.5 * (2.0 * PI * 8.0 * t).cos()) * (2.0 * PI * 440.0 * t).cos()
            })
            .collect();
        let c = time_scatter(&Signal::new(x, fs).unwrap(), &cfg).unwrap();
        let (best, _) = c
            .paths
            .iter()
            .enumerate()
            .map(|(p, _)| (p, c.s2.column(p).iter().map(|v| v * v).sum::<f64>()))
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap();
        let path = c.paths[best];
        let f1 = path.lambda1 / (2.0 * PI);
        assert!((f1 / 440.0).log2().abs() <= 1.0 / 8.0, "λ1 = {f1} Hz");
        if let PathKind::Time { lambda2 } = path.kind {
            let f2 = lambda2 / (2.0 * PI);
            assert!((f2 / 8.0).log2().abs() <= 0.5, "λ2 = {f2} Hz");
        } else {
            panic!("not a time path");
        }
    }
}
