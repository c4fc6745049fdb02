use std::path::Path;
use std::process::Command;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

use tfscatter::io::{read_coeffs, read_wav, write_coeffs, write_wav, WavEncoding};
use tfscatter::network::{ScatteringConfig, ScatteringNetwork};
use tfscatter::signal::Signal;
use tfscatter::time_scattering::{PathKind, TransformKind};
use tfscatter::Error;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_tfscatter"));
    c.env_remove("SCT_THREADS");
    c
}

fn noise(n: usize, rate: f64, seed: u64) -> Signal {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Signal::new((0..n).map(|_| rng.gen_range(-0.5..0.5)).collect(), rate).unwrap()
}

fn quantized(n: usize, seed: u64) -> Signal {
    let mut x = noise(n, 16000.0, seed);
    x.samples.iter_mut().for_each(|v| *v = (*v * 32768.0).round() / 32768.0);
    x
}

fn run_ok(cmd: &mut Command) -> String {
    let out = cmd.output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

#[test]
fn wav_round_trip_is_sample_exact() {
    let dir = tempfile::tempdir().unwrap();
    let x = quantized(16000, 1);
    for enc in [WavEncoding::Pcm16, WavEncoding::Float32] {
        let p = dir.path().join("a.wav");
        write_wav(&p, &x, enc).unwrap();
        let y = read_wav(&p).unwrap();
        assert_eq!(y.sample_rate, 16000.0);
        assert_eq!(y.samples, x.samples);
        let q = dir.path().join("b.wav");
        write_wav(&q, &y, enc).unwrap();
        assert_eq!(std::fs::read(&p).unwrap(), std::fs::read(&q).unwrap());
    }
}

#[test]
fn stereo_is_downmixed() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("st.wav");
    let spec = hound::WavSpec { channels: 2, sample_rate: 8000, bits_per_sample: 16, sample_format: hound::SampleFormat::Int };
    let mut w = hound::WavWriter::create(&p, spec).unwrap();
    for i in 0..100i16 {
        w.write_sample(i * 100).unwrap();
        w.write_sample(-i * 50).unwrap();
    }
    w.finalize().unwrap();
    let x = read_wav(&p).unwrap();
    assert_eq!(x.len(), 100);
    assert_eq!(x.sample_rate, 8000.0);
    assert!((x.samples[10] - 250.0 / 32768.0).abs() < 1e-12);
}

#[test]
fn truncated_header_names_missing_chunk() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("t.wav");
    write_wav(&p, &quantized(64, 2), WavEncoding::Pcm16).unwrap();
    let bytes = std::fs::read(&p).unwrap();
    std::fs::write(&p, &bytes[..36]).unwrap();
    match read_wav(&p) {
        Err(Error::Parse { offset, message }) => {
            assert_eq!(offset, 36);
            assert!(message.contains("'data'"), "{message}");
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn coefficient_file_round_trip_is_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    let x = noise(4096, 8000.0, 3);
    let cfg = ScatteringConfig { q: 4, t_samples: 256, oversampling: 1, k_octaves: 2, ..Default::default() };
    let net = ScatteringNetwork::new(cfg, 8000.0, x.len()).unwrap();
    for kind in [TransformKind::S1, TransformKind::Time, TransformKind::TimeFreq, TransformKind::Joint] {
        let c = net.analyze(&x, kind).unwrap();
        let p = dir.path().join("c.sct");
        write_coeffs(&p, &c, None).unwrap();
        let (back, side) = read_coeffs(&p).unwrap();
        assert_eq!(back, c);
        assert_eq!(side.band_log_centers.len() + side.paths.len(), c.combined().ncols());
    }
}

#[test]
fn analyze_writes_joint_paths() {
    let dir = tempfile::tempdir().unwrap();
    let wav = dir.path().join("in.wav");
    write_wav(&wav, &quantized(16000, 4), WavEncoding::Pcm16).unwrap();
    let out = dir.path().join("out.sct");
    let report = run_ok(bin().args(["--json", "analyze", "--transform", "joint", "--Q", "8", "--T", "32ms"]).arg(&wav).arg(&out));
    let v: Value = serde_json::from_str(&report).unwrap();
    assert_eq!(v["config"]["T_samples"], 512);
    let (c, _) = read_coeffs(&out).unwrap();
    assert!(!c.paths.is_empty());
    assert!(c.paths.iter().all(|p| matches!(p.kind, PathKind::Joint { .. })));
    assert_eq!(c.meta.transform, TransformKind::Joint);
}

#[test]
fn t_is_rounded_and_reported() {
    let dir = tempfile::tempdir().unwrap();
    let wav = dir.path().join("in.wav");
    write_wav(&wav, &quantized(16000, 5), WavEncoding::Pcm16).unwrap();
    let report = run_ok(bin().args(["--json", "analyze", "--transform", "s1", "--T", "40"]).arg(&wav).arg(dir.path().join("o.sct")));
    let v: Value = serde_json::from_str(&report).unwrap();
    assert_eq!(v["config"]["T_samples"], 512);
    assert_eq!(v["config"]["T_ms_requested"], 40.0);
}

#[test]
fn reconstruct_writes_nonincreasing_loss_csv() {
    let dir = tempfile::tempdir().unwrap();
    let wav = dir.path().join("noise.wav");
    write_wav(&wav, &quantized(8192, 6), WavEncoding::Pcm16).unwrap();
    let out = dir.path().join("out.wav");
    run_ok(bin().args(["reconstruct", "--objective", "s1", "--iterations", "40"]).arg(&wav).arg(&out));
    let csv = std::fs::read_to_string(dir.path().join("out.csv")).unwrap();
    let losses: Vec<f64> = csv.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert!(losses.len() > 10);
    assert!(losses.windows(2).all(|w| w[1] <= w[0]));
    assert_eq!(read_wav(&out).unwrap().len(), 8192);
}

#[test]
fn reconstruct_from_tensor_target() {
    let dir = tempfile::tempdir().unwrap();
    let wav = dir.path().join("in.wav");
    write_wav(&wav, &quantized(8192, 7), WavEncoding::Pcm16).unwrap();
    let sct = dir.path().join("t.sct");
    run_ok(bin().args(["analyze", "--transform", "time"]).arg(&wav).arg(&sct));
    let out = dir.path().join("r.wav");
    let report = run_ok(bin().args(["--json", "reconstruct", "--iterations", "10"]).arg(&sct).arg(&out));
    let v: Value = serde_json::from_str(&report).unwrap();
    assert_eq!(v["objective"], "time");
    assert!(v["final_loss"].as_f64().unwrap() <= v["initial_loss"].as_f64().unwrap());
}

#[test]
fn validate_fm_reports_slopes() {
    let out = bin().args(["--json", "validate", "fm", "--gamma", "2"]).output().unwrap();
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["suite"], "fm");
    assert!(v["details"]["measured_slope"].is_number());
    assert!(v["details"]["predicted_slope"].is_number());
    assert_eq!(v["pass"], true);
    assert!(out.status.success());
}

#[test]
fn synth_writes_wav_and_model() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("tv.wav");
    run_ok(bin().args(["synth", "tv", "--duration", "0.5"]).arg(&out));
    assert_eq!(read_wav(&out).unwrap().len(), 8000);
    let model: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("tv.json")).unwrap()).unwrap();
    assert_eq!(model["transfer"]["kind"], "formant");
}

#[test]
fn filters_lists_bank() {
    let csv = run_ok(bin().args(["filters", "--Q", "8"]));
    assert!(csv.starts_with("kind,center,bandwidth\n"));
    assert!(csv.lines().any(|l| l.starts_with("lowpass,")));
}

fn code(cmd: &mut Command) -> i32 {
    let out = cmd.output().unwrap();
    let err = String::from_utf8_lossy(&out.stderr);
    assert_eq!(err.trim().lines().count().min(1), 1, "expected a diagnostic");
    out.status.code().unwrap()
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let wav = dir.path().join("in.wav");
    write_wav(&wav, &quantized(4096, 8), WavEncoding::Pcm16).unwrap();
    let out = dir.path().join("o.sct");
    assert_eq!(code(bin().args(["analyze", "--transform", "bogus"]).arg(&wav).arg(&out)), 2);
    let cfg = dir.path().join("c.json");
    std::fs::write(&cfg, r#"{"Q": 8, "colour": "red"}"#).unwrap();
    assert_eq!(code(bin().arg("--config").arg(&cfg).arg("analyze").arg(&wav).arg(&out)), 2);
    let bad = dir.path().join("bad.wav");
    std::fs::write(&bad, b"RIFF\x10\x00\x00\x00WAVEjunk").unwrap();
    assert_eq!(code(bin().arg("analyze").arg(&bad).arg(&out)), 3);
    assert_eq!(code(bin().arg("analyze").arg(dir.path().join("missing.wav")).arg(&out)), 3);
    assert_eq!(code(bin().args(["--threads", "0", "filters"])), 2);
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let wav = dir.path().join("in.wav");
    write_wav(&wav, &quantized(16000, 9), WavEncoding::Pcm16).unwrap();
    let cfg = dir.path().join("c.json");
    std::fs::write(&cfg, format!(r#"{{"T_ms": 64, "transform": "time", "input": {:?}}}"#, wav.to_str().unwrap())).unwrap();
    let out = dir.path().join("o.sct");
    let v: Value = serde_json::from_str(&run_ok(bin().arg("--config").arg(&cfg).args(["--json", "analyze"]).arg("--T").arg("16ms").arg(&wav).arg(&out))).unwrap();
    assert_eq!(v["config"]["T_samples"], 256);
    assert_eq!(v["transform"], "time");
}

fn digest(p: &Path) -> Vec<u8> {
    std::fs::read(p).unwrap()
}

#[test]
fn outputs_are_deterministic_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let wav = dir.path().join("in.wav");
    write_wav(&wav, &quantized(8192, 10), WavEncoding::Pcm16).unwrap();
    let mut outs = Vec::new();
    for threads in ["1", "3", "1"] {
        let sct = dir.path().join(format!("a{}.sct", outs.len()));
        let rec = dir.path().join(format!("r{}.wav", outs.len()));
        run_ok(bin().args(["--threads", threads, "analyze", "--transform", "joint"]).arg(&wav).arg(&sct));
        run_ok(bin().env("SCT_THREADS", threads).args(["reconstruct", "--iterations", "8", "--seed", "4"]).arg(&wav).arg(&rec));
        outs.push((digest(&sct), digest(&rec), digest(&rec.with_extension("csv"))));
    }
    assert!(outs.windows(2).all(|w| w[0] == w[1]));
}
