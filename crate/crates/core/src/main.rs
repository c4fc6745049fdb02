use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use tfscatter::filterbank::{frame_bounds, FilterBank};
use tfscatter::io::{self, Config, WavEncoding};
use tfscatter::models::{gen_fm, gen_tv_filtered, FMModel, HarmonicTVFilterModel, Phase, Transfer};
use tfscatter::network::{Padding, ScatteringConfig, ScatteringNetwork};
use tfscatter::reconstruction::{reconstruct, Objective};
use tfscatter::time_scattering::{log_compress, TransformKind};
use tfscatter::validation;
use tfscatter::{Error, Result};

/// Time, frequency and joint time-frequency scattering of audio.
#[derive(Parser)]
#[command(name = "tfscatter", version)]
struct Cli {
    /// JSON configuration file; flags given on the command line win.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Print a machine-readable report on stdout.
    #[arg(long, global = true)]
    json: bool,
    /// Worker threads (default: SCT_THREADS, then all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct TransformArgs {
    /// Wavelets per octave of the first-order bank.
    #[arg(long = "Q")]
    q: Option<u32>,
    /// Averaging scale, e.g. `32ms`, `0.032s` or `32` (milliseconds).
    #[arg(long = "T", value_parser = parse_ms)]
    t: Option<f64>,
    /// Octaves of quefrency covered by frequency and joint scattering.
    #[arg(long = "K")]
    k: Option<u32>,
    #[arg(long)]
    oversampling: Option<u32>,
    #[arg(long, value_enum)]
    padding: Option<PaddingArg>,
}

#[derive(Clone, Copy, ValueEnum)]
enum PaddingArg {
    Reflect,
    Periodic,
}

#[derive(Clone, Copy, ValueEnum)]
enum EncodingArg {
    Pcm16,
    Float32,
}

impl From<EncodingArg> for WavEncoding {
    fn from(e: EncodingArg) -> Self {
        match e {
            EncodingArg::Pcm16 => WavEncoding::Pcm16,
            EncodingArg::Float32 => WavEncoding::Float32,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// WAV to a coefficient tensor (`.sct` plus `.sct.json` sidecar).
    Analyze {
        #[command(flatten)]
        tf: TransformArgs,
        /// s1, time, time+freq or joint.
        #[arg(long)]
        transform: Option<String>,
        /// Write ln(S + eps·median) instead of S.
        #[arg(long)]
        log_eps: Option<f64>,
        /// Defaults to `input` from the configuration file.
        input: Option<PathBuf>,
        /// Defaults to `output` from the configuration file.
        output: Option<PathBuf>,
    },
    /// WAV to a scalogram image (`.pgm`) or table (`.csv`).
    Scalogram {
        #[command(flatten)]
        tf: TransformArgs,
        /// Defaults to `input` from the configuration file.
        input: Option<PathBuf>,
        /// Defaults to `output` from the configuration file.
        output: Option<PathBuf>,
    },
    /// Synthesize a waveform whose coefficients match a WAV or tensor target.
    Reconstruct {
        #[command(flatten)]
        tf: TransformArgs,
        /// s1, time or joint.
        #[arg(long)]
        objective: Option<String>,
        #[arg(long)]
        iterations: Option<usize>,
        #[arg(long)]
        step: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        /// Loss history; defaults to the output path with a `.csv` extension.
        #[arg(long)]
        loss_csv: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "float32")]
        encoding: EncodingArg,
        /// Defaults to `input` from the configuration file.
        input: Option<PathBuf>,
        /// Defaults to `output` from the configuration file.
        output: Option<PathBuf>,
    },
    /// Render a signal model to WAV, with the model as JSON alongside.
    Synth {
        #[command(subcommand)]
        model: SynthModel,
    },
    /// Run an oracle suite and report measured against predicted values.
    Validate {
        #[command(subcommand)]
        suite: Suite,
    },
    /// Filter-bank diagnostics as CSV: centers, bandwidths, frame bounds.
    Filters {
        #[command(flatten)]
        tf: TransformArgs,
        #[arg(long, default_value_t = 16000.0)]
        sample_rate: f64,
        #[arg(long, value_enum, default_value = "first")]
        bank: BankArg,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum BankArg {
    First,
    Second,
    Quefrency,
}

#[derive(Args)]
struct SynthCommon {
    #[arg(long, default_value_t = 2.0)]
    duration: f64,
    #[arg(long, default_value_t = 16000.0)]
    sample_rate: f64,
    #[arg(long, value_enum, default_value = "pcm16")]
    encoding: EncodingArg,
    /// Scale the waveform to this peak before writing.
    #[arg(long, default_value_t = 0.9)]
    peak: f64,
    output: PathBuf,
}

#[derive(Subcommand)]
enum SynthModel {
    /// Harmonic comb of pitch ξ through a formant moving between two frequencies.
    Tv {
        #[arg(long, default_value_t = 200.0)]
        pitch_hz: f64,
        #[arg(long, default_value_t = 1000.0)]
        low_hz: f64,
        #[arg(long, default_value_t = 2000.0)]
        high_hz: f64,
        #[arg(long, default_value_t = 100.0)]
        width_hz: f64,
        /// Seconds per up-down formant cycle.
        #[arg(long, default_value_t = 1.0)]
        period: f64,
        #[command(flatten)]
        common: SynthCommon,
    },
    /// Partials k·θ(t) of an exponential chirp or a vibrato.
    Fm {
        #[arg(long, default_value_t = 500.0)]
        f0_hz: f64,
        /// Exponential rate in nats/s (ignored with --vibrato-rate-hz).
        #[arg(long, default_value_t = 0.0)]
        gamma: f64,
        #[arg(long)]
        vibrato_rate_hz: Option<f64>,
        #[arg(long, default_value_t = 0.1)]
        vibrato_depth: f64,
        #[arg(long, default_value_t = 1)]
        partials: usize,
        #[command(flatten)]
        common: SynthCommon,
    },
}

#[derive(Subcommand)]
enum Suite {
    /// Littlewood–Paley bounds of every bank.
    Frames {
        #[command(flatten)]
        tf: TransformArgs,
    },
    /// First-order prediction of the moving-formant model.
    Tv,
    /// Joint ridge slope of an exponential chirp.
    Fm {
        #[arg(long, default_value_t = 2.0, allow_hyphen_values = true)]
        gamma: f64,
    },
}

fn parse_ms(s: &str) -> std::result::Result<f64, String> {
    let s = s.trim();
    let (num, scale) = if let Some(v) = s.strip_suffix("ms") {
        (v, 1.0)
    } else if let Some(v) = s.strip_suffix('s') {
        (v, 1e3)
    } else {
        (s, 1.0)
    };
    let v: f64 = num.trim().parse().map_err(|_| format!("cannot read duration '{s}'"))?;
    if v.is_finite() && v > 0.0 {
        Ok(v * scale)
    } else {
        Err(format!("duration must be positive, got '{s}'"))
    }
}

struct Ctx {
    config: Config,
    json: bool,
}

impl Ctx {
    fn with(&self, tf: &TransformArgs) -> Config {
        let mut c = self.config.clone();
        if let Some(q) = tf.q {
            c.q = q;
        }
        if let Some(t) = tf.t {
            c.t_ms = t;
        }
        if let Some(k) = tf.k {
            c.k_octaves = k;
        }
        if let Some(o) = tf.oversampling {
            c.oversampling = o;
        }
        if let Some(p) = tf.padding {
            c.padding = match p {
                PaddingArg::Reflect => Padding::Reflect,
                PaddingArg::Periodic => Padding::Periodic,
            };
        }
        c
    }

    fn report(&self, human: &str, value: Value) {
        let text = if self.json { serde_json::to_string_pretty(&value).expect("report serializes") } else { human.to_string() };
        let _ = writeln!(std::io::stdout(), "{text}");
    }
}

fn transform_report(cfg: &ScatteringConfig, sample_rate: f64, t_ms_requested: f64) -> Value {
    json!({
        "Q": cfg.q,
        "T_ms_requested": t_ms_requested,
        "T_samples": cfg.t_samples,
        "T_ms": 1e3 * cfg.t_seconds(sample_rate),
        "K_octaves": cfg.k_octaves,
        "oversampling": cfg.oversampling,
        "padding": cfg.padding,
    })
}

fn resolve(given: &Option<PathBuf>, fallback: &Option<PathBuf>, what: &str) -> Result<PathBuf> {
    given
        .clone()
        .or_else(|| fallback.clone())
        .ok_or_else(|| Error::Config(format!("no {what} path given on the command line or in the configuration")))
}

fn network_for(config: &Config, sample_rate: f64, n: usize) -> Result<ScatteringNetwork> {
    ScatteringNetwork::new(config.scattering(sample_rate)?, sample_rate, n)
}

fn analyze(ctx: &Ctx, tf: &TransformArgs, transform: Option<&str>, log_eps: Option<f64>, input: &Option<PathBuf>, output: &Option<PathBuf>) -> Result<()> {
    let mut config = ctx.with(tf);
    if let Some(t) = transform {
        config.transform = TransformKind::parse(t)?;
    }
    if log_eps.is_some() {
        config.log_eps = log_eps;
    }
    config.validate()?;
    let (input, output) = (resolve(input, &config.input, "input")?, resolve(output, &config.output, "output")?);
    let output = output.as_path();
    let x = io::read_wav(&input)?;
    let net = network_for(&config, x.sample_rate, x.len())?;
    let mut c = net.analyze(&x, config.transform)?;
    if let Some(eps) = config.log_eps {
        c = log_compress(&c, eps)?;
    }
    io::write_coeffs(output, &c, config.log_eps)?;
    ctx.report(
        &format!(
            "{}: {} frames, {} bands, {} second-order paths (T = {} samples)",
            output.display(),
            c.n_frames(),
            c.s1.values.ncols(),
            c.paths.len(),
            net.config.t_samples
        ),
        json!({
            "output": output,
            "transform": config.transform,
            "config": transform_report(&net.config, x.sample_rate, config.t_ms),
            "frames": c.n_frames(),
            "bands": c.s1.values.ncols(),
            "paths": c.paths.len(),
            "log_eps": config.log_eps,
        }),
    );
    Ok(())
}

fn scalogram(ctx: &Ctx, tf: &TransformArgs, input: &Option<PathBuf>, output: &Option<PathBuf>) -> Result<()> {
    let config = ctx.with(tf);
    config.validate()?;
    let (input, output) = (resolve(input, &config.input, "input")?, resolve(output, &config.output, "output")?);
    let output = output.as_path();
    let x = io::read_wav(&input)?;
    let net = network_for(&config, x.sample_rate, x.len())?;
    let scal = net.scalogram(&x)?;
    match output.extension().and_then(|e| e.to_str()) {
        Some("pgm") => fs::write(output, io::pgm_bytes(&scal.values))?,
        Some("csv") => {
            let header: Vec<String> = scal.band_log_centers.iter().map(|l| format!("{:.3}", l.exp2())).collect();
            fs::write(output, io::matrix_csv(&header, &scal.values))?
        }
        _ => return Err(Error::Config(format!("{}: scalogram output must end in .pgm or .csv", output.display()))),
    }
    ctx.report(
        &format!("{}: {} frames × {} bands, hop {:.2} ms", output.display(), scal.n_frames(), scal.n_bands(), 1e3 * scal.hop),
        json!({
            "output": output,
            "config": transform_report(&net.config, x.sample_rate, config.t_ms),
            "frames": scal.n_frames(),
            "bands": scal.n_bands(),
            "hop_s": scal.hop,
        }),
    );
    Ok(())
}

struct ReconArgs<'a> {
    objective: Option<&'a str>,
    iterations: Option<usize>,
    step: Option<f64>,
    seed: Option<u64>,
    loss_csv: Option<&'a Path>,
    encoding: WavEncoding,
}

fn reconstruct_cmd(ctx: &Ctx, tf: &TransformArgs, args: ReconArgs, input: &Option<PathBuf>, output: &Option<PathBuf>) -> Result<()> {
    let mut config = ctx.with(tf);
    if let Some(o) = args.objective {
        config.recon.objective = Objective::parse(o)?;
    }
    if let Some(i) = args.iterations {
        config.recon.iterations = i;
    }
    if let Some(s) = args.step {
        config.recon.step = s;
    }
    if let Some(s) = args.seed {
        config.recon.seed = s;
    }
    config.validate()?;
    let (input, output) = (resolve(input, &config.input, "input")?, resolve(output, &config.output, "output")?);
    let output = output.as_path();
    let (net, target) = if input.extension().and_then(|e| e.to_str()) == Some("sct") {
        let (target, side) = io::read_coeffs(&input)?;
        if side.log_eps.is_some() {
            return Err(Error::Config(format!("{}: log-compressed coefficients cannot be a reconstruction target", input.display())));
        }
        let m = &target.meta;
        let (Some(rate), Some(n)) = (m.sample_rate, m.n_samples) else {
            return Err(Error::Data(format!("{}: sidecar lacks the source sample rate and length", input.display())));
        };
        if args.objective.is_none() {
            config.recon.objective = match m.transform {
                TransformKind::S1 => Objective::S1,
                TransformKind::Time => Objective::TimeS1S2,
                TransformKind::Joint => Objective::JointS1S2,
                other => {
                    return Err(Error::Config(format!("no reconstruction objective for {} coefficients", other.as_str())))
                }
            };
        }
        let cfg = ScatteringConfig {
            q: m.q,
            t_samples: (m.t * rate).round() as usize,
            oversampling: m.oversampling,
            k_octaves: m.k_octaves,
            padding: config.padding,
        };
        (ScatteringNetwork::new(cfg, rate, n)?, target)
    } else {
        let x = io::read_wav(&input)?;
        let net = network_for(&config, x.sample_rate, x.len())?;
        let target = net.analyze(&x, config.recon.objective.transform())?;
        (net, target)
    };
    let (y, state) = reconstruct(&net, &target, &config.recon)?;
    io::write_wav(output, &y, args.encoding)?;
    let csv = args.loss_csv.map(Path::to_path_buf).unwrap_or_else(|| output.with_extension("csv"));
    fs::write(&csv, state.loss_csv())?;
    ctx.report(
        &format!(
            "{}: loss {:.3e} -> {:.3e} (ratio {:.2e}) after {} iterations, {} rejected",
            output.display(),
            state.loss_history[0],
            state.loss(),
            state.loss_ratio(),
            state.iteration,
            state.rejected
        ),
        json!({
            "output": output,
            "loss_csv": csv,
            "objective": config.recon.objective,
            "seed": config.recon.seed,
            "config": transform_report(&net.config, net.sample_rate, config.t_ms),
            "iterations": state.iteration,
            "rejected": state.rejected,
            "initial_loss": state.loss_history[0],
            "final_loss": state.loss(),
            "loss_ratio": state.loss_ratio(),
        }),
    );
    Ok(())
}

fn write_synth(ctx: &Ctx, common: &SynthCommon, mut x: tfscatter::signal::Signal, model: Value, dropped: usize) -> Result<()> {
    if !(common.peak.is_finite() && common.peak > 0.0) {
        return Err(Error::Config(format!("peak must be positive, got {}", common.peak)));
    }
    let top = x.samples.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if top > 0.0 {
        let g = common.peak / top;
        x.samples.iter_mut().for_each(|v| *v *= g);
    }
    io::write_wav(&common.output, &x, common.encoding.into())?;
    let side = common.output.with_extension("json");
    fs::write(&side, serde_json::to_string_pretty(&model)? + "\n")?;
    ctx.report(
        &format!("{}: {} samples at {} Hz, model in {}", common.output.display(), x.len(), x.sample_rate, side.display()),
        json!({ "output": common.output, "model_json": side, "samples": x.len(), "dropped_partials": dropped }),
    );
    Ok(())
}

fn synth(ctx: &Ctx, model: &SynthModel) -> Result<()> {
    match model {
        SynthModel::Tv { pitch_hz, low_hz, high_hz, width_hz, period, common } => {
            let model = HarmonicTVFilterModel {
                xi: 2.0 * std::f64::consts::PI * pitch_hz,
                transfer: Transfer::Formant { low_hz: *low_hz, high_hz: *high_hz, width_hz: *width_hz, period: *period },
                duration: common.duration,
                sample_rate: common.sample_rate,
            };
            let s = gen_tv_filtered(&model)?;
            write_synth(ctx, common, s.signal, serde_json::to_value(&model)?, s.dropped_partials)
        }
        SynthModel::Fm { f0_hz, gamma, vibrato_rate_hz, vibrato_depth, partials, common } => {
            let phase = match vibrato_rate_hz {
                Some(r) => Phase::Vibrato { f0_hz: *f0_hz, depth: *vibrato_depth, rate_hz: *r },
                None => Phase::Exponential { f0_hz: *f0_hz, gamma: *gamma },
            };
            let model = FMModel {
                phase,
                n_partials: *partials,
                duration: common.duration,
                sample_rate: common.sample_rate,
                transfer: Transfer::Flat,
            };
            let s = gen_fm(&model)?;
            write_synth(ctx, common, s.signal, serde_json::to_value(&model)?, s.dropped_partials)
        }
    }
}

/// Returns whether the suite passed.
fn validate(ctx: &Ctx, suite: &Suite) -> Result<bool> {
    let report = match suite {
        Suite::Frames { tf } => {
            let config = ctx.with(tf);
            config.validate()?;
            validation::frames(&config.scattering(16000.0)?, 16000.0)?
        }
        Suite::Tv => validation::tv()?,
        Suite::Fm { gamma } => validation::fm(*gamma)?,
    };
    ctx.report(
        &format!("{} {}: {}", report.suite, if report.pass { "PASS" } else { "FAIL" }, report.details),
        serde_json::to_value(&report)?,
    );
    Ok(report.pass)
}

fn filters(ctx: &Ctx, tf: &TransformArgs, sample_rate: f64, bank: BankArg) -> Result<()> {
    let config = ctx.with(tf);
    config.validate()?;
    let net = network_for(&config, sample_rate, sample_rate.round() as usize)?;
    let b: &FilterBank = match bank {
        BankArg::First => &net.first,
        BankArg::Second => net.second_bank(),
        BankArg::Quefrency => net.quefrency_bank()?,
    };
    let (lo, hi) = frame_bounds(b);
    if ctx.json {
        let rows: Vec<Value> = b
            .filters
            .iter()
            .chain(std::iter::once(&b.lowpass))
            .map(|f| json!({ "kind": f.kind.as_str(), "center": f.center, "bandwidth": f.bandwidth }))
            .collect();
        ctx.report("", json!({ "filters": rows, "frame_min": lo, "frame_max": hi, "n_fft": b.spec.n_fft }));
    } else {
        let _ = write!(std::io::stdout(), "{}", b.to_csv());
        if lo.is_nan() {
            eprintln!("covered band is empty at this frame rate; Littlewood-Paley max {hi:.4}");
        } else {
            eprintln!("Littlewood-Paley bounds over the covered band: [{lo:.4}, {hi:.4}]");
        }
    }
    Ok(())
}

fn run(cli: Cli) -> Result<bool> {
    let config = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    let ctx = Ctx { config, json: cli.json };
    match &cli.command {
        Command::Analyze { tf, transform, log_eps, input, output } => {
            analyze(&ctx, tf, transform.as_deref(), *log_eps, input, output)?
        }
        Command::Scalogram { tf, input, output } => scalogram(&ctx, tf, input, output)?,
        Command::Reconstruct { tf, objective, iterations, step, seed, loss_csv, encoding, input, output } => {
            let args = ReconArgs {
                objective: objective.as_deref(),
                iterations: *iterations,
                step: *step,
                seed: *seed,
                loss_csv: loss_csv.as_deref(),
                encoding: (*encoding).into(),
            };
            reconstruct_cmd(&ctx, tf, args, input, output)?
        }
        Command::Synth { model } => synth(&ctx, model)?,
        Command::Validate { suite } => return validate(&ctx, suite),
        Command::Filters { tf, sample_rate, bank } => filters(&ctx, tf, *sample_rate, *bank)?,
    }
    Ok(true)
}

fn threads(flag: Option<usize>) -> std::result::Result<Option<usize>, String> {
    if let Some(n) = flag {
        return if n == 0 { Err("--threads must be at least 1".into()) } else { Ok(Some(n)) };
    }
    match std::env::var("SCT_THREADS") {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(format!("SCT_THREADS must be a positive integer, got '{v}'")),
        },
        Err(_) => Ok(None),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match threads(cli.threads) {
        Ok(Some(n)) => {
            if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                eprintln!("error: {e}");
                return ExitCode::from(2);
            }
        }
        Ok(None) => {}
        Err(msg) => {
            eprintln!("error: {msg}");
            return ExitCode::from(2);
        }
    }
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
