//! Analytic Morlet filter banks on the time axis and on the log-frequency
//! (quefrency) axis, with their Gaussian low-pass companions.
//!
//! Every filter is stored as a dense, real-valued (zero-phase) frequency
//! response sampled on the `n_fft`-point DFT grid. Band-pass responses are
//! zero on the negative half of the grid, so analyticity holds exactly, and
//! carry a Morlet correction term that cancels the response at zero
//! frequency.
//!
//! Bank layout on the time axis, for quality factor `Q` and averaging scale
//! `T`:
//!
//! * geometric filters with centers `(2πQ/T)·2^{j/Q}`, `j = J, …, 0`, from the
//!   highest center below Nyquist down to `2πQ/T`;
//! * for `Q > 1`, linearly spaced filters of constant bandwidth `2π/T` below
//!   that, continuing the geometric spacing found at `2πQ/T`;
//! * a Gaussian low-pass `φ_T` whose −3 dB time support equals `T`.
//!
//! The band-pass filters share a single gain chosen so that the
//! Littlewood–Paley sum never exceeds one.

use std::f64::consts::{LN_2, PI};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which axis a bank filters along. Quefrency banks work in cycles per
/// octave on a log-frequency axis sampled at `Q` bins per octave.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    Time,
    Quefrency,
}

impl Axis {
    /// Factor turning "cycles per unit" into the unit centers are stored in:
    /// rad/s on the time axis, cycles/octave on the quefrency axis.
    fn unit(self) -> f64 {
        match self {
            Axis::Time => 2.0 * PI,
            Axis::Quefrency => 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FilterBankSpec {
    /// Hz on the time axis; bins per octave on the quefrency axis.
    pub sample_rate: f64,
    /// Wavelets per octave.
    pub q: u32,
    /// Averaging scale: seconds on the time axis, octaves on the quefrency axis.
    pub t: f64,
    pub n_fft: usize,
    pub axis: Axis,
}

impl FilterBankSpec {
    pub fn validate(&self) -> Result<()> {
        if self.q < 1 {
            return Err(Error::InvalidSpec(format!("Q must be >= 1, got {}", self.q)));
        }
        if !(self.sample_rate.is_finite() && self.sample_rate > 0.0) {
            return Err(Error::InvalidSpec(format!("sample rate must be positive, got {}", self.sample_rate)));
        }
        if !(self.t.is_finite() && self.t > 0.0) {
            return Err(Error::InvalidSpec(format!("T must be positive, got {}", self.t)));
        }
        if !self.n_fft.is_power_of_two() || self.n_fft < 2 {
            return Err(Error::InvalidSpec(format!("n_fft must be a power of two >= 2, got {}", self.n_fft)));
        }
        let support = self.t * self.sample_rate;
        if support > self.n_fft as f64 * (1.0 + 1e-12) {
            return Err(Error::InvalidSpec(format!(
                "n_fft = {} too short for T = {} ({} samples)",
                self.n_fft, self.t, support
            )));
        }
        Ok(())
    }

    /// Nyquist frequency in the bank's center units.
    pub fn nyquist(&self) -> f64 {
        0.5 * self.sample_rate * self.axis.unit()
    }

    /// Frequency of DFT bin `k` in center units; bins above `n_fft/2` are negative.
    pub fn bin_frequency(&self, k: usize) -> f64 {
        let n = self.n_fft;
        let signed = if k <= n / 2 { k as f64 } else { k as f64 - n as f64 };
        signed * self.sample_rate / n as f64 * self.axis.unit()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterKind {
    Geometric,
    LinearLowband,
    Lowpass,
}

impl FilterKind {
    pub fn as_str(self) -> &'static str {
        match self {
            FilterKind::Geometric => "geometric",
            FilterKind::LinearLowband => "linear_lowband",
            FilterKind::Lowpass => "lowpass",
        }
    }
}

/// Half of the relative −3 dB bandwidth of the constant-Q band
/// `[2^{-1/2Q}, 2^{1/2Q}]` measured around a unit center.
fn half_band(q: u32) -> f64 {
    let e = 1.0 / (2.0 * q as f64);
    (2f64.powf(e) - 2f64.powf(-e)) / 2.0
}

/// Gaussian width of the mother wavelet relative to its center.
///
/// The −3 dB points sit at `1 ± w·half_band(Q)` with `w = 1 + 0.8/Q²`:
/// close to the nominal band for large `Q`, and widened for one-per-octave
/// banks so their Littlewood–Paley ripple leaves room for the separable
/// 2-D frame.
pub fn relative_sigma(q: u32) -> f64 {
    let widen = 1.0 + 0.8 / (q as f64 * q as f64);
    widen * half_band(q) / LN_2.sqrt()
}

/// A real, zero-phase frequency response together with the closed form it
/// was sampled from.
#[derive(Clone, Debug, PartialEq)]
pub struct AnalyticFilter {
    /// rad/s on the time axis, cycles/octave on the quefrency axis.
    pub center: f64,
    /// Nominal bandwidth in the same units (`center/Q`, or `2π/T` in the
    /// linear low band, or the −3 dB half-width for the low-pass).
    pub bandwidth: f64,
    pub kind: FilterKind,
    /// Gaussian standard deviation of the closed form, in center units.
    pub sigma: f64,
    /// Normalization gain applied to the closed form.
    pub gain: f64,
    /// Sampled response over the DFT grid, natural (unshifted) bin order.
    pub response: Vec<f64>,
}

impl AnalyticFilter {
    /// Evaluates the closed-form response at `omega` (center units).
    pub fn eval(&self, omega: f64) -> f64 {
        match self.kind {
            FilterKind::Lowpass => self.gain * gauss(omega, 0.0, self.sigma),
            FilterKind::Geometric | FilterKind::LinearLowband => self.gain * morlet(omega, self.center, self.sigma),
        }
    }

    /// Evaluates the response mirrored about zero frequency, i.e. the filter
    /// centered at `-center`.
    pub fn eval_mirrored(&self, omega: f64) -> f64 {
        self.eval(-omega)
    }

    pub fn is_bandpass(&self) -> bool {
        self.kind != FilterKind::Lowpass
    }

    fn sampled(center: f64, bandwidth: f64, kind: FilterKind, sigma: f64, spec: &FilterBankSpec) -> Self {
        let mut f = AnalyticFilter { center, bandwidth, kind, sigma, gain: 1.0, response: Vec::new() };
        f.response = (0..spec.n_fft).map(|k| f.eval(spec.bin_frequency(k))).collect();
        if f.is_bandpass() {
            // The Nyquist bin is its own mirror image; keeping it would
            // count it twice in the frame.
            f.response[0] = 0.0;
            f.response[spec.n_fft / 2] = 0.0;
        }
        f
    }

    /// The same closed form and gain sampled on another DFT grid.
    pub fn resampled(&self, spec: &FilterBankSpec) -> Self {
        let mut f = Self::sampled(self.center, self.bandwidth, self.kind, self.sigma, spec);
        f.rescale(self.gain);
        f
    }

    fn rescale(&mut self, factor: f64) {
        self.gain *= factor;
        for v in self.response.iter_mut() {
            *v *= factor;
        }
    }

    /// Fraction of response energy on strictly negative frequencies.
    pub fn negative_energy_fraction(&self) -> f64 {
        let n = self.response.len();
        let total: f64 = self.response.iter().map(|v| v * v).sum();
        let neg: f64 = self.response[n / 2 + 1..].iter().map(|v| v * v).sum();
        if total == 0.0 {
            0.0
        } else {
            neg / total
        }
    }

    /// Response with the frequency axis reversed (bin `k` takes bin `-k`).
    pub fn mirrored_response(&self) -> Vec<f64> {
        let n = self.response.len();
        (0..n).map(|k| self.response[(n - k) % n]).collect()
    }
}

fn gauss(omega: f64, center: f64, sigma: f64) -> f64 {
    let d = (omega - center) / sigma;
    (-0.5 * d * d).exp()
}

/// Morlet response restricted to positive frequencies, with the Gaussian
/// correction that makes it vanish at zero frequency.
///
/// The cut at zero leaves a kink for wide (low-Q) filters, which gives the
/// impulse response slowly decaying tails; the factor `exp(−(σ/2ω)²)` makes
/// the onset smooth and is within 10⁻³ of one over the passband for Q ≥ 8.
fn morlet(omega: f64, center: f64, sigma: f64) -> f64 {
    if omega <= 0.0 {
        return 0.0;
    }
    let ramp = (-(0.5 * sigma / omega).powi(2)).exp();
    (gauss(omega, center, sigma) - gauss(center, 0.0, sigma) * gauss(omega, 0.0, sigma)) * ramp
}

/// Unit-center prototype for `Q` wavelets per octave, sampled on a
/// 4096-point grid spanning `[-4, 4)` rad/s.
pub fn build_mother_wavelet(q: u32) -> Result<AnalyticFilter> {
    if q < 1 {
        return Err(Error::InvalidSpec(format!("Q must be >= 1, got {q}")));
    }
    let spec = FilterBankSpec {
        sample_rate: 4.0 / PI,
        q,
        t: 1.0,
        n_fft: 4096,
        axis: Axis::Time,
    };
    Ok(AnalyticFilter::sampled(1.0, 1.0 / q as f64, FilterKind::Geometric, relative_sigma(q), &spec))
}

/// Gaussian low-pass whose −3 dB support in the axis variable equals `support`.
fn lowpass(support: f64, spec: &FilterBankSpec) -> AnalyticFilter {
    let sigma_t = support / (2.0 * LN_2.sqrt());
    // Time-domain sigma maps to 1/sigma_t in angular units.
    let sigma = spec.axis.unit() / (2.0 * PI * sigma_t);
    let half_width = sigma * LN_2.sqrt();
    AnalyticFilter::sampled(0.0, half_width, FilterKind::Lowpass, sigma, spec)
}

#[derive(Clone, Debug, PartialEq)]
pub struct FilterBank {
    pub spec: FilterBankSpec,
    /// Band-pass filters by descending center.
    pub filters: Vec<AnalyticFilter>,
    pub lowpass: AnalyticFilter,
    pub log_centers: Vec<f64>,
}

impl FilterBank {
    /// Assembles a bank from already sampled filters without normalizing.
    pub fn from_parts(spec: FilterBankSpec, filters: Vec<AnalyticFilter>, lowpass: AnalyticFilter) -> Self {
        let log_centers = filters.iter().map(|f| f.center.log2()).collect();
        FilterBank { spec, filters, lowpass, log_centers }
    }

    pub fn len(&self) -> usize {
        self.filters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.filters.is_empty()
    }

    pub fn centers(&self) -> Vec<f64> {
        self.filters.iter().map(|f| f.center).collect()
    }

    /// Copy with every response (band-pass and low-pass) multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        let mut out = self.clone();
        for f in out.filters.iter_mut() {
            f.rescale(factor);
        }
        out.lowpass.rescale(factor);
        out
    }

    /// Frequency interval, in center units, over which the frame bound is
    /// expected to hold.
    ///
    /// Geometric ends are pulled in by half a filter spacing, where the
    /// outermost filter has no neighbour. A time bank with a linear low band
    /// is covered from `2π/T`.
    pub fn covered_band(&self) -> (f64, f64) {
        let nyq = self.spec.nyquist();
        let half_step = 2f64.powf(0.5 / self.spec.q as f64);
        let lowest = self.filters.iter().map(|f| f.center).fold(f64::INFINITY, f64::min);
        let highest = self.filters.iter().map(|f| f.center).fold(0.0, f64::max);
        let has_linear = self.filters.iter().any(|f| f.kind == FilterKind::LinearLowband);
        let lo = if has_linear { 2.0 * PI / self.spec.t } else { lowest * half_step };
        (lo, (highest / half_step).min(0.8 * nyq))
    }

    /// One CSV row per filter: kind, center, bandwidth.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("kind,center,bandwidth\n");
        for f in self.filters.iter().chain(std::iter::once(&self.lowpass)) {
            let _ = writeln!(out, "{},{},{}", f.kind.as_str(), f.center, f.bandwidth);
        }
        out
    }

    fn normalize(&mut self) {
        let n = self.spec.n_fft;
        let phi2: Vec<f64> = self.lowpass.response.iter().map(|v| v * v).collect();
        let mut psi = vec![0.0; n];
        for f in &self.filters {
            for k in 0..n {
                let a = f.response[k];
                let b = f.response[(n - k) % n];
                psi[k] += 0.5 * (a * a + b * b);
            }
        }
        let ratio = psi
            .iter()
            .zip(&phi2)
            .filter(|(&p, _)| p > 1e-300)
            .map(|(&p, &l)| (1.0 - l).max(0.0) / p)
            .fold(f64::INFINITY, f64::min);
        if ratio.is_finite() {
            let gain = ratio.sqrt();
            for f in self.filters.iter_mut() {
                f.rescale(gain);
            }
        }
    }
}

/// Builds the time-axis bank described in the module docs, or delegates to
/// [`build_quefrency_bank`] for quefrency specs (with `t` read as `K`).
pub fn build_filterbank(spec: &FilterBankSpec) -> Result<FilterBank> {
    spec.validate()?;
    if spec.axis == Axis::Quefrency {
        let k = spec.t.round();
        if (k - spec.t).abs() > 1e-9 || k < 1.0 {
            return Err(Error::InvalidSpec(format!("quefrency bank needs an integer K >= 1, got {}", spec.t)));
        }
        return build_quefrency_bank(spec.sample_rate.round() as u32, k as u32, spec.n_fft);
    }
    let q = spec.q as f64;
    let nyq = spec.nyquist();
    let threshold = 2.0 * PI * q / spec.t;
    if threshold >= nyq {
        return Err(Error::InvalidSpec(format!(
            "Nyquist {:.3} rad/s leaves no room for a first center at 2πQ/T = {:.3} rad/s",
            nyq, threshold
        )));
    }
    let sigma_rel = relative_sigma(spec.q);
    // Strictly below Nyquist, whose bin carries no band-pass response.
    let j_max = (q * (nyq / threshold).log2() - 1e-9).floor() as i64;
    let mut filters = Vec::new();
    for j in (0..=j_max).rev() {
        let center = threshold * 2f64.powf(j as f64 / q);
        filters.push(AnalyticFilter::sampled(center, center / q, FilterKind::Geometric, sigma_rel * center, spec));
    }
    if spec.q > 1 {
        // Constant bandwidth 2π/T (the width of the filter at the threshold),
        // spaced as the geometric filters are where the two regions meet.
        let bandwidth = 2.0 * PI / spec.t;
        let spacing = threshold * (1.0 - 2f64.powf(-1.0 / q));
        let mut m = 1;
        loop {
            let center = threshold - m as f64 * spacing;
            if center < 0.5 * spacing * (1.0 - 1e-9) {
                break;
            }
            filters.push(AnalyticFilter::sampled(center, bandwidth, FilterKind::LinearLowband, sigma_rel * threshold, spec));
            m += 1;
        }
    }
    let mut bank = FilterBank::from_parts(spec.clone(), filters, lowpass(spec.t, spec));
    bank.normalize();
    Ok(bank)
}

/// Quefrency bank on a log-frequency axis sampled at `bins_per_octave`,
/// one wavelet per octave from the Nyquist quefrency down to `1/(2K)`
/// cycles/octave, with a low-pass of support `K` octaves.
pub fn build_quefrency_bank(bins_per_octave: u32, k_octaves: u32, n_fft: usize) -> Result<FilterBank> {
    if k_octaves < 1 {
        return Err(Error::InvalidSpec("K must be >= 1 octave".into()));
    }
    let spec = FilterBankSpec {
        sample_rate: bins_per_octave as f64,
        q: 1,
        t: k_octaves as f64,
        n_fft,
        axis: Axis::Quefrency,
    };
    spec.validate()?;
    if (k_octaves as usize) * (bins_per_octave as usize) > n_fft / 2 {
        return Err(Error::InvalidSpec(format!(
            "K = {k_octaves} octaves ({} bins) does not fit a log-frequency axis of {n_fft} padded bins",
            k_octaves * bins_per_octave
        )));
    }
    let nyq = spec.nyquist();
    let lowest = 1.0 / (2.0 * k_octaves as f64);
    let sigma_rel = relative_sigma(1);
    let mut filters = Vec::new();
    let mut center = nyq;
    while center >= lowest * (1.0 - 1e-9) {
        filters.push(AnalyticFilter::sampled(center, center, FilterKind::Geometric, sigma_rel * center, &spec));
        center /= 2.0;
    }
    if filters.is_empty() {
        return Err(Error::InvalidSpec("no quefrency wavelet fits below Nyquist".into()));
    }
    let mut bank = FilterBank::from_parts(spec.clone(), filters, lowpass(k_octaves as f64, &spec));
    bank.normalize();
    Ok(bank)
}

/// Littlewood–Paley sum `|φ̂|² + ½Σ(|ψ̂(ω)|² + |ψ̂(−ω)|²)` on the DFT grid.
pub fn littlewood_paley(bank: &FilterBank) -> Vec<f64> {
    let n = bank.spec.n_fft;
    let mut out: Vec<f64> = bank.lowpass.response.iter().map(|v| v * v).collect();
    for f in &bank.filters {
        for (k, o) in out.iter_mut().enumerate() {
            let a = f.response[k];
            let b = f.response[(n - k) % n];
            *o += 0.5 * (a * a + b * b);
        }
    }
    out
}

/// Minimum and maximum of the Littlewood–Paley sum over the covered band
/// (positive frequencies only; the sum is even). The minimum is NaN when no
/// grid frequency falls in the covered band.
pub fn frame_bounds(bank: &FilterBank) -> (f64, f64) {
    let lp = littlewood_paley(bank);
    let (lo, hi) = bank.covered_band();
    let n = bank.spec.n_fft;
    let mut min = f64::INFINITY;
    for (k, v) in lp.iter().enumerate().take(n / 2 + 1) {
        let w = bank.spec.bin_frequency(k);
        if w >= lo && w <= hi {
            min = min.min(*v);
        }
    }
    let max = lp.iter().cloned().fold(0.0, f64::max);
    if min.is_infinite() {
        min = f64::NAN;
    }
    (min, max)
}
