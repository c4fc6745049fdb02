//! Oracle suites behind `tfscatter validate`: frame bounds, the
//! time-varying-filter model and the FM ridge slope.

use std::f64::consts::PI;

use serde::Serialize;
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::filterbank::frame_bounds;
use crate::joint::{extract_ridge, half_plane_frame};
use crate::models::{gen_fm, gen_tv_filtered, pearson, predict_fm, predict_s1_tv, FMModel, HarmonicTVFilterModel, Phase, Transfer};
use crate::network::{ScatteringConfig, ScatteringNetwork};
use crate::time_scattering::TransformKind;

const FS: f64 = 16000.0;

#[derive(Clone, Debug, Serialize)]
pub struct Report {
    pub suite: String,
    pub pass: bool,
    pub details: Value,
}

/// Littlewood–Paley bounds of the three banks and the joint half-plane.
pub fn frames(config: &ScatteringConfig, sample_rate: f64) -> Result<Report> {
    let net = ScatteringNetwork::new(config.clone(), sample_rate, sample_rate as usize)?;
    let first = frame_bounds(&net.first);
    let second = frame_bounds(net.second_bank());
    let quef = frame_bounds(net.quefrency_bank()?);
    let joint = half_plane_frame(&net)?;
    let ok = |(lo, hi): (f64, f64), floor: f64| lo >= floor && hi <= 1.001;
    let pass = ok(first, 0.8) && ok(second, 0.8) && ok(quef, 0.8) && ok(joint, 0.75);
    let pair = |(lo, hi): (f64, f64)| json!({ "min": lo, "max": hi });
    Ok(Report {
        suite: "frames".into(),
        pass,
        details: json!({
            "first_order": pair(first),
            "second_order": pair(second),
            "quefrency": pair(quef),
            "joint": pair(joint),
        }),
    })
}

/// Median joint-ridge slope of an exponential chirp against `θ''/θ' = γ`.
pub fn fm(gamma: f64) -> Result<Report> {
    if !gamma.is_finite() {
        return Err(Error::Config("gamma must be finite".into()));
    }
    // The sweep is centered on 1 kHz and kept within 250 Hz – 4 kHz.
    let duration = if gamma == 0.0 { 1.5 } else { (16f64.ln() / gamma.abs()).min(1.5) };
    let cfg = ScatteringConfig { t_samples: 8192, ..Default::default() };
    if duration < 2.0 * cfg.t_seconds(FS) {
        return Err(Error::Config(format!("|gamma| = {} is too fast for a 512 ms window; use |gamma| <= 2.7", gamma.abs())));
    }
    let f0 = 1000.0 * (-gamma * duration / 2.0).exp();
    let model = FMModel {
        phase: Phase::Exponential { f0_hz: f0, gamma },
        n_partials: 1,
        duration,
        sample_rate: FS,
        transfer: Transfer::Flat,
    };
    let x = gen_fm(&model)?.signal;
    let net = ScatteringNetwork::new(cfg, FS, x.len())?;
    let ridge = extract_ridge(&net.analyze(&x, TransformKind::Joint)?)?;
    let measured = ridge.median_slope();
    let pred = predict_fm(&model, &net.first)?;
    let mut slopes = pred.slopes.clone();
    slopes.sort_by(|a, b| a.total_cmp(b));
    let predicted = slopes[slopes.len() / 2];
    let pass = if gamma == 0.0 {
        measured.abs() <= 0.5
    } else {
        (0.5..=2.0).contains(&(measured / predicted)) && measured * gamma > 0.0
    };
    Ok(Report {
        suite: "fm".into(),
        pass,
        details: json!({
            "gamma": gamma,
            "f0_hz": f0,
            "duration_s": duration,
            "measured_slope": measured,
            "predicted_slope": predicted,
            "ridge_cells": ridge.defined_cells(),
        }),
    })
}

/// First-order prediction for a 200 Hz comb under a formant moving between
/// 1 and 2 kHz.
pub fn tv() -> Result<Report> {
    let model = HarmonicTVFilterModel {
        xi: 2.0 * PI * 200.0,
        transfer: Transfer::Formant { low_hz: 1000.0, high_hz: 2000.0, width_hz: 100.0, period: 1.0 },
        duration: 2.0,
        sample_rate: FS,
    };
    let x = gen_tv_filtered(&model)?.signal;
    let cfg = ScatteringConfig { t_samples: 4096, ..Default::default() };
    let net = ScatteringNetwork::new(cfg, FS, x.len())?;
    let c = net.analyze(&x, TransformKind::Time)?;
    let p = predict_s1_tv(&model, &net.first)?;
    let frames = c.n_frames().min(p.values.nrows());
    let (mut a, mut b) = (Vec::new(), Vec::new());
    for band in (0..p.included.len()).filter(|&b| p.included[b]) {
        for t in 0..frames {
            a.push(c.s1.values[[t, band]]);
            b.push(p.values[[t, band]]);
        }
    }
    let r = pearson(&a, &b);
    Ok(Report {
        suite: "tv".into(),
        pass: r >= 0.95,
        details: json!({ "s1_pearson": r, "bands": p.included.iter().filter(|&&v| v).count(), "frames": frames }),
    })
}
