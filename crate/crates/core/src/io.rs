//! File formats: WAV audio, the `SCT1` coefficient tensor with its JSON
//! sidecar, CSV matrices, PGM images and the JSON run configuration.

use std::fs;
use std::io::Cursor;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{t_samples_from_ms, Padding, ScatteringConfig};
use crate::reconstruction::ReconstructionConfig;
use crate::scalogram::S1Coeffs;
use crate::signal::Signal;
use crate::time_scattering::{ScatteringCoeffs, ScatteringMeta, ScatteringPath, TransformKind};

const MAGIC: &[u8; 4] = b"SCT1";

fn parse_err(offset: usize, message: impl Into<String>) -> Error {
    Error::Parse { offset: offset as u64, message: message.into() }
}

fn u16_at(b: &[u8], at: usize) -> u16 {
    u16::from_le_bytes([b[at], b[at + 1]])
}

fn u32_at(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes([b[at], b[at + 1], b[at + 2], b[at + 3]])
}

/// Sample encoding of a WAV file.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WavEncoding {
    Pcm16,
    Float32,
}

/// Header facts gathered while walking the RIFF chunks.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct WavLayout {
    pub channels: u16,
    pub sample_rate: u32,
    pub encoding: WavEncoding,
}

/// Walks the RIFF structure so that damage is reported with a byte offset
/// before the decoder sees the file.
pub fn scan_riff(bytes: &[u8]) -> Result<WavLayout> {
    if bytes.len() < 12 {
        return Err(parse_err(bytes.len(), "file ends inside the RIFF header"));
    }
    if &bytes[0..4] != b"RIFF" {
        return Err(parse_err(0, "missing 'RIFF' tag"));
    }
    if &bytes[8..12] != b"WAVE" {
        return Err(parse_err(8, "missing 'WAVE' form type"));
    }
    let mut at = 12;
    let mut layout = None;
    let mut have_data = false;
    while at < bytes.len() {
        if at + 8 > bytes.len() {
            return Err(parse_err(at, "truncated chunk header"));
        }
        let id = &bytes[at..at + 4];
        let size = u32_at(bytes, at + 4) as usize;
        let body = at + 8;
        let name = String::from_utf8_lossy(id).into_owned();
        match id {
            b"fmt " => {
                if size < 16 || body + 16 > bytes.len() {
                    return Err(parse_err(body, "truncated 'fmt ' chunk"));
                }
                let mut tag = u16_at(bytes, body);
                let channels = u16_at(bytes, body + 2);
                let sample_rate = u32_at(bytes, body + 4);
                let bits = u16_at(bytes, body + 14);
                if tag == 0xFFFE {
                    if size < 40 || body + 26 > bytes.len() {
                        return Err(parse_err(body, "truncated extensible 'fmt ' chunk"));
                    }
                    tag = u16_at(bytes, body + 24);
                }
                let encoding = match (tag, bits) {
                    (1, 16) => WavEncoding::Pcm16,
                    (3, 32) => WavEncoding::Float32,
                    _ => {
                        return Err(Error::UnsupportedFormat(format!(
                            "WAV format tag {tag} with {bits} bits (need 16-bit PCM or 32-bit float)"
                        )))
                    }
                };
                if channels == 0 || sample_rate == 0 {
                    return Err(parse_err(body, "'fmt ' chunk declares zero channels or zero sample rate"));
                }
                layout = Some(WavLayout { channels, sample_rate, encoding });
            }
            b"data" => {
                if layout.is_none() {
                    return Err(parse_err(at, "'data' chunk before the 'fmt ' chunk"));
                }
                if body + size > bytes.len() {
                    return Err(parse_err(bytes.len(), format!("'data' chunk declares {size} bytes, file ends early")));
                }
                have_data = true;
            }
            _ => {
                if body + size > bytes.len() {
                    return Err(parse_err(bytes.len(), format!("chunk '{name}' runs past the end of the file")));
                }
            }
        }
        at = body + size + (size & 1);
    }
    let layout = layout.ok_or_else(|| parse_err(bytes.len(), "missing 'fmt ' chunk"))?;
    if !have_data {
        return Err(parse_err(bytes.len(), "missing 'data' chunk"));
    }
    Ok(layout)
}

/// Decodes a mono or multichannel WAV file; channels are averaged.
pub fn read_wav(path: &Path) -> Result<Signal> {
    let bytes = fs::read(path)?;
    let layout = scan_riff(&bytes)?;
    let reader = hound::WavReader::new(Cursor::new(&bytes)).map_err(|e| parse_err(0, e.to_string()))?;
    let interleaved: Vec<f64> = match layout.encoding {
        WavEncoding::Pcm16 => reader
            .into_samples::<i16>()
            .map(|s| s.map(|v| v as f64 / 32768.0))
            .collect::<std::result::Result<_, _>>(),
        WavEncoding::Float32 => {
            reader.into_samples::<f32>().map(|s| s.map(|v| v as f64)).collect::<std::result::Result<_, _>>()
        }
    }
    .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    let c = layout.channels as usize;
    let samples = if c == 1 {
        interleaved
    } else {
        log::warn!("{}: averaging {c} channels to mono", path.display());
        interleaved.chunks_exact(c).map(|f| f.iter().sum::<f64>() / c as f64).collect()
    };
    Signal::new(samples, layout.sample_rate as f64)
}

/// Writes a mono WAV file. PCM samples are clipped to [−1, 1).
pub fn write_wav(path: &Path, x: &Signal, encoding: WavEncoding) -> Result<()> {
    x.validate()?;
    if x.sample_rate.fract() != 0.0 || x.sample_rate > u32::MAX as f64 {
        return Err(Error::Config(format!("WAV needs an integer sample rate, got {}", x.sample_rate)));
    }
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: x.sample_rate as u32,
        bits_per_sample: match encoding {
            WavEncoding::Pcm16 => 16,
            WavEncoding::Float32 => 32,
        },
        sample_format: match encoding {
            WavEncoding::Pcm16 => hound::SampleFormat::Int,
            WavEncoding::Float32 => hound::SampleFormat::Float,
        },
    };
    let wav_err = |e: hound::Error| match e {
        hound::Error::IoError(io) => Error::Io(io),
        other => Error::Data(other.to_string()),
    };
    let mut w = hound::WavWriter::create(path, spec).map_err(wav_err)?;
    let clipped = x.samples.iter().filter(|v| v.abs() > 1.0).count();
    if clipped > 0 && encoding == WavEncoding::Pcm16 {
        log::warn!("{}: {clipped} samples clipped to 16-bit range", path.display());
    }
    for &v in &x.samples {
        match encoding {
            WavEncoding::Pcm16 => w.write_sample((v * 32768.0).round().clamp(-32768.0, 32767.0) as i16),
            WavEncoding::Float32 => w.write_sample(v as f32),
        }
        .map_err(wav_err)?;
    }
    w.finalize().map_err(wav_err)
}

/// Dense little-endian `f64` tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    pub dims: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        if self.dims.iter().product::<usize>() != self.data.len() {
            return Err(Error::Data(format!("tensor dims {:?} do not match {} values", self.dims, self.data.len())));
        }
        let mut out = Vec::with_capacity(8 + 4 * self.dims.len() + 8 * self.data.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(self.dims.len() as u32).to_le_bytes());
        for &d in &self.dims {
            let d = u32::try_from(d).map_err(|_| Error::Data(format!("dimension {d} exceeds u32")))?;
            out.extend_from_slice(&d.to_le_bytes());
        }
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        Ok(out)
    }

    pub fn from_bytes(b: &[u8]) -> Result<Tensor> {
        if b.len() < 8 {
            return Err(parse_err(b.len(), "file ends inside the tensor header"));
        }
        if &b[0..4] != MAGIC {
            return Err(parse_err(0, "missing 'SCT1' magic"));
        }
        let rank = u32_at(b, 4) as usize;
        let head = 8 + 4 * rank;
        if b.len() < head {
            return Err(parse_err(b.len(), format!("file ends inside the {rank} dimensions")));
        }
        let dims: Vec<usize> = (0..rank).map(|i| u32_at(b, 8 + 4 * i) as usize).collect();
        let count = dims.iter().try_fold(1usize, |a, &d| a.checked_mul(d)).ok_or_else(|| parse_err(8, "dimensions overflow"))?;
        let expect = count.checked_mul(8).and_then(|p| p.checked_add(head)).ok_or_else(|| parse_err(8, "dimensions overflow"))?;
        if b.len() != expect {
            return Err(parse_err(b.len().min(expect), format!("payload holds {} bytes, dims {dims:?} need {}", b.len() - head, expect - head)));
        }
        let data = b[head..].chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        Ok(Tensor { dims, data })
    }
}

/// Sidecar describing a coefficient tensor `[frames × channels]`: the first
/// `band_log_centers.len()` channels are S₁ bands, the rest follow `paths`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sidecar {
    pub axes: Vec<String>,
    /// Seconds between frames.
    pub hop: f64,
    pub band_log_centers: Vec<f64>,
    pub paths: Vec<ScatteringPath>,
    pub meta: ScatteringMeta,
    /// Set when the values are `ln(S + eps·median)`.
    #[serde(default)]
    pub log_eps: Option<f64>,
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

/// Writes `path` and `path.json`.
pub fn write_coeffs(path: &Path, c: &ScatteringCoeffs, log_eps: Option<f64>) -> Result<()> {
    let combined = c.combined();
    let (frames, channels) = combined.dim();
    let tensor = Tensor { dims: vec![frames, channels], data: combined.iter().cloned().collect() };
    let side = Sidecar {
        axes: vec!["frame".into(), "channel".into()],
        hop: c.s1.hop,
        band_log_centers: c.s1.band_log_centers.clone(),
        paths: c.paths.clone(),
        meta: c.meta.clone(),
        log_eps,
    };
    fs::write(path, tensor.to_bytes()?)?;
    fs::write(sidecar_path(path), serde_json::to_string_pretty(&side)? + "\n")?;
    Ok(())
}

pub fn read_coeffs(path: &Path) -> Result<(ScatteringCoeffs, Sidecar)> {
    let tensor = Tensor::from_bytes(&fs::read(path)?)?;
    let side_path = sidecar_path(path);
    let side: Sidecar = serde_json::from_str(&fs::read_to_string(&side_path)?)?;
    if tensor.dims.len() != 2 {
        return Err(Error::Data(format!("coefficient tensor must be rank 2, got {:?}", tensor.dims)));
    }
    let (frames, channels) = (tensor.dims[0], tensor.dims[1]);
    let bands = side.band_log_centers.len();
    if bands + side.paths.len() != channels {
        return Err(Error::Data(format!(
            "{}: {bands} bands + {} paths do not match {channels} channels",
            side_path.display(),
            side.paths.len()
        )));
    }
    let all = Array2::from_shape_vec((frames, channels), tensor.data).map_err(|e| Error::Data(e.to_string()))?;
    let s1 = all.slice(ndarray::s![.., ..bands]).to_owned();
    let s2 = all.slice(ndarray::s![.., bands..]).to_owned();
    let coeffs = ScatteringCoeffs {
        s1: S1Coeffs { values: s1, hop: side.hop, band_log_centers: side.band_log_centers.clone() },
        s2,
        paths: side.paths.clone(),
        meta: side.meta.clone(),
    };
    Ok((coeffs, side))
}

/// CSV with a header row; `.` decimal point, `\n` line ends.
pub fn matrix_csv(header: &[String], values: &Array2<f64>) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for row in values.rows() {
        let cells: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

/// Binary 8-bit PGM of a `[frames × bands]` matrix: one column per frame,
/// highest band on the top row, gray level linear in the value.
pub fn pgm_bytes(values: &Array2<f64>) -> Vec<u8> {
    let (frames, bands) = values.dim();
    let top = values.iter().cloned().fold(0.0, f64::max);
    let mut out = Vec::new();
    out.extend_from_slice(format!("P5\n{frames} {bands}\n255\n").as_bytes());
    for b in 0..bands {
        for t in 0..frames {
            let v = if top > 0.0 { values[[t, b]].max(0.0) / top } else { 0.0 };
            out.push((v * 255.0).round() as u8);
        }
    }
    out
}

/// Width, height and pixels of a binary PGM with maxval 255.
pub fn read_pgm(b: &[u8]) -> Result<(usize, usize, Vec<u8>)> {
    let mut fields = Vec::new();
    let mut at = 0;
    while fields.len() < 4 {
        while at < b.len() && b[at].is_ascii_whitespace() {
            at += 1;
        }
        let start = at;
        while at < b.len() && !b[at].is_ascii_whitespace() {
            at += 1;
        }
        if start == at {
            return Err(parse_err(at, "truncated PGM header"));
        }
        fields.push(String::from_utf8_lossy(&b[start..at]).into_owned());
    }
    at += 1;
    if fields[0] != "P5" || fields[3] != "255" {
        return Err(Error::UnsupportedFormat("only binary 8-bit PGM (P5, maxval 255)".into()));
    }
    let num = |s: &str| s.parse::<usize>().map_err(|_| parse_err(0, format!("bad PGM size '{s}'")));
    let (w, h) = (num(&fields[1])?, num(&fields[2])?);
    if b.len() < at + w * h {
        return Err(parse_err(b.len(), "PGM pixel data is truncated"));
    }
    Ok((w, h, b[at..at + w * h].to_vec()))
}

/// Run configuration. Every field has a default; unknown keys are rejected.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    #[serde(rename = "Q")]
    pub q: u32,
    #[serde(rename = "T_ms")]
    pub t_ms: f64,
    #[serde(rename = "K_octaves")]
    pub k_octaves: u32,
    pub oversampling: u32,
    pub padding: Padding,
    pub transform: TransformKind,
    /// Log compression floor relative to the median coefficient; `None`
    /// keeps raw coefficients.
    pub log_eps: Option<f64>,
    pub recon: ReconstructionConfig,
    pub input: Option<PathBuf>,
    pub output: Option<PathBuf>,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            q: 8,
            t_ms: 32.0,
            k_octaves: 4,
            oversampling: 2,
            padding: Padding::Reflect,
            transform: TransformKind::Joint,
            log_eps: None,
            recon: ReconstructionConfig::default(),
            input: None,
            output: None,
        }
    }
}

impl Config {
    pub fn load(path: &Path) -> Result<Config> {
        let text = fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Checks everything that does not depend on the sample rate.
    pub fn validate(&self) -> Result<()> {
        if !(self.t_ms.is_finite() && self.t_ms > 0.0) {
            return Err(Error::Config(format!("T must be positive, got {} ms", self.t_ms)));
        }
        if let Some(eps) = self.log_eps {
            if !(eps.is_finite() && eps > 0.0) {
                return Err(Error::Config(format!("log_eps must be positive, got {eps}")));
            }
        }
        self.recon.validate()?;
        self.scattering(16000.0)?.validate()
    }

    /// Transform configuration at `sample_rate`, with `T` rounded to a power
    /// of two samples.
    pub fn scattering(&self, sample_rate: f64) -> Result<ScatteringConfig> {
        let cfg = ScatteringConfig {
            q: self.q,
            t_samples: t_samples_from_ms(self.t_ms, sample_rate)?,
            oversampling: self.oversampling,
            k_octaves: self.k_octaves,
            padding: self.padding,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}
