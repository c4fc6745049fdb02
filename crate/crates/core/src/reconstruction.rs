//! Signal synthesis from scattering coefficients by gradient descent.
//!
//! The loss is `‖S₁x − S₁y‖² + ‖S₂x − S₂y‖²`; its gradient comes from the
//! network's vector-Jacobian product with output gradients `2(Sy − Sx)`.
//! Steps are normalized: a step of `s` moves `y` by `s·‖y₀‖` along the
//! negative gradient, where `y₀` is the initial noise.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::ScatteringNetwork;
use crate::signal::Signal;
use crate::time_scattering::{ScatteringCoeffs, TransformKind};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Objective {
    #[serde(rename = "s1")]
    S1,
    #[serde(rename = "time")]
    TimeS1S2,
    #[serde(rename = "joint")]
    JointS1S2,
}

impl Objective {
    pub fn transform(self) -> TransformKind {
        match self {
            Objective::S1 => TransformKind::S1,
            Objective::TimeS1S2 => TransformKind::Time,
            Objective::JointS1S2 => TransformKind::Joint,
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "s1" => Ok(Objective::S1),
            "time" => Ok(Objective::TimeS1S2),
            "joint" => Ok(Objective::JointS1S2),
            _ => Err(Error::Config(format!("unknown objective {s:?} (expected s1, time or joint)"))),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Objective::S1 => "s1",
            Objective::TimeS1S2 => "time",
            Objective::JointS1S2 => "joint",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReconstructionConfig {
    pub objective: Objective,
    pub iterations: usize,
    /// Initial step, relative to the norm of the initial noise.
    pub step: f64,
    pub seed: u64,
}

impl Default for ReconstructionConfig {
    fn default() -> Self {
        ReconstructionConfig { objective: Objective::JointS1S2, iterations: 1000, step: 0.1, seed: 0 }
    }
}

impl ReconstructionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations < 1 {
            return Err(Error::Config("iterations must be >= 1".into()));
        }
        if !(self.step.is_finite() && self.step > 0.0) {
            return Err(Error::Config(format!("step must be positive, got {}", self.step)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct ReconstructionState {
    pub y: Signal,
    /// Loss of the initial noise, then of every accepted iterate.
    pub loss_history: Vec<f64>,
    pub step: f64,
    pub iteration: usize,
    pub rejected: usize,
    pub seed: u64,
    pub objective: Objective,
}

impl ReconstructionState {
    pub fn loss(&self) -> f64 {
        *self.loss_history.last().expect("initial loss recorded")
    }

    pub fn loss_ratio(&self) -> f64 {
        let first = self.loss_history[0];
        if first > 0.0 {
            self.loss() / first
        } else {
            0.0
        }
    }

    /// `iteration,loss` for accepted iterates.
    pub fn loss_csv(&self) -> String {
        let mut out = String::from("step,loss\n");
        for (i, l) in self.loss_history.iter().enumerate() {
            out.push_str(&format!("{i},{l:e}\n"));
        }
        out
    }
}

pub fn scattering_loss(target: &ScatteringCoeffs, candidate: &ScatteringCoeffs) -> Result<f64> {
    target.check_compatible(candidate)?;
    let d1 = target.s1.values.iter().zip(candidate.s1.values.iter());
    let d2 = target.s2.iter().zip(candidate.s2.iter());
    Ok(d1.chain(d2).map(|(a, b)| (a - b) * (a - b)).sum())
}

/// Loss at `y` and its gradient with respect to the samples of `y`.
pub fn backprop_gradient(net: &ScatteringNetwork, target: &ScatteringCoeffs, y: &Signal) -> Result<(f64, Vec<f64>)> {
    let mut loss = 0.0;
    let kind = target.meta.transform;
    let (_, grad) = net.vector_jacobian_with(y, kind, |c| {
        loss = scattering_loss(target, c)?;
        let g1: Array2<f64> = (&c.s1.values - &target.s1.values) * 2.0;
        let g2: Array2<f64> = (&c.s2 - &target.s2) * 2.0;
        Ok((g1, g2))
    })?;
    Ok((loss, grad))
}

/// Uniform white noise with the same total S₁ energy as the target.
pub fn initial_noise(net: &ScatteringNetwork, target: &ScatteringCoeffs, seed: u64) -> Result<Signal> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples: Vec<f64> = (0..net.n_samples).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let y = Signal::new(samples, net.sample_rate)?;
    let s1 = net.analyze(&y, TransformKind::S1)?.s1;
    let have: f64 = s1.values.iter().map(|v| v * v).sum();
    let want: f64 = target.s1.values.iter().map(|v| v * v).sum();
    if have <= 0.0 {
        return Err(Error::Numerical("initial noise has zero first-order energy".into()));
    }
    // S₁ is homogeneous of degree one.
    let c = (want / have).sqrt();
    Signal::new(y.samples.iter().map(|v| v * c).collect(), y.sample_rate)
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Gradient descent from seeded noise towards coefficients matching
/// `target`, with bold-driver step control (×1.1 on improvement, ×0.5 and
/// rollback otherwise).
pub fn reconstruct(net: &ScatteringNetwork, target: &ScatteringCoeffs, cfg: &ReconstructionConfig) -> Result<(Signal, ReconstructionState)> {
    cfg.validate()?;
    if target.meta.transform != cfg.objective.transform() {
        return Err(Error::Config(format!(
            "target holds {} coefficients but the objective is {}",
            target.meta.transform.as_str(),
            cfg.objective.as_str()
        )));
    }
    let y0 = initial_noise(net, target, cfg.seed)?;
    let scale = norm(&y0.samples);
    let (loss0, mut grad) = backprop_gradient(net, target, &y0)?;
    let mut state = ReconstructionState {
        y: y0,
        loss_history: vec![loss0],
        step: cfg.step,
        iteration: 0,
        rejected: 0,
        seed: cfg.seed,
        objective: cfg.objective,
    };
    while state.iteration < cfg.iterations && state.loss() > 0.0 {
        state.iteration += 1;
        let gn = norm(&grad);
        if gn == 0.0 {
            break;
        }
        let mu = state.step * scale / gn;
        let samples: Vec<f64> = state.y.samples.iter().zip(&grad).map(|(y, g)| y - mu * g).collect();
        let cand = Signal { samples, sample_rate: state.y.sample_rate };
        let attempt = if cand.validate().is_ok() { Some(backprop_gradient(net, target, &cand)?) } else { None };
        match attempt {
            Some((loss, g)) if loss.is_finite() && loss < state.loss() => {
                state.y = cand;
                state.loss_history.push(loss);
                grad = g;
                state.step *= 1.1;
            }
            other => {
                let tried = other.map_or(f64::NAN, |(l, _)| l);
                state.rejected += 1;
                state.step *= 0.5;
                if state.step < 1e-12 * cfg.step {
                    if !tried.is_finite() || tried > 1e3 * loss0 {
                        return Err(Error::Numerical(format!(
                            "descent diverged at iteration {}: loss {:e} from {:e} with step {:e}",
                            state.iteration,
                            tried,
                            loss0,
                            state.step
                        )));
                    }
                    log::info!("step collapsed at iteration {}; stopping", state.iteration);
                    break;
                }
            }
        }
    }
    Ok((state.y.clone(), state))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{Padding, ScatteringConfig};

    fn small_net(n: usize) -> ScatteringNetwork {
        net_with(n, Padding::Periodic)
    }

    fn net_with(n: usize, padding: Padding) -> ScatteringNetwork {
        let cfg = ScatteringConfig { q: 4, t_samples: 128, oversampling: 1, k_octaves: 2, padding };
        ScatteringNetwork::new(cfg, 8000.0, n).unwrap()
    }

    fn noise(n: usize, seed: u64) -> Signal {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Signal::new((0..n).map(|_| rng.gen_range(-1.0..1.0)).collect(), 8000.0).unwrap()
    }

    #[test]
    fn loss_of_identical_and_zero() {
        let net = small_net(1024);
        let x = noise(1024, 1);
        let c = net.analyze(&x, TransformKind::Time).unwrap();
        assert_eq!(scattering_loss(&c, &c).unwrap(), 0.0);
        let zero = net.analyze(&Signal::new(vec![0.0; 1024], 8000.0).unwrap(), TransformKind::Time).unwrap();
        assert!((scattering_loss(&c, &zero).unwrap() - c.energy()).abs() <= 1e-12 * c.energy());
        let joint = net.analyze(&x, TransformKind::Joint).unwrap();
        assert!(matches!(scattering_loss(&c, &joint), Err(Error::Config(_))));
    }

    #[test]
    fn gradient_vanishes_at_target() {
        let net = small_net(1024);
        let x = noise(1024, 2);
        for kind in [TransformKind::S1, TransformKind::Time, TransformKind::Joint] {
            let c = net.analyze(&x, kind).unwrap();
            let (loss, g) = backprop_gradient(&net, &c, &x).unwrap();
            assert_eq!(loss, 0.0);
            assert!(norm(&g) <= 1e-8 * norm(&x.samples));
        }
    }

    #[test]
    fn seeded_runs_are_identical() {
        let net = small_net(1024);
        let c = net.analyze(&noise(1024, 3), TransformKind::S1).unwrap();
        let cfg = ReconstructionConfig { objective: Objective::S1, iterations: 20, ..Default::default() };
        let (a, sa) = reconstruct(&net, &c, &cfg).unwrap();
        let (b, sb) = reconstruct(&net, &c, &cfg).unwrap();
        assert_eq!(a.samples, b.samples);
        assert_eq!(sa.loss_history, sb.loss_history);
        assert!(sa.loss_history.windows(2).all(|w| w[1] <= w[0]));
        assert!(sa.loss() < sa.loss_history[0]);
    }

    #[test]
    fn objective_must_match_target() {
        let net = small_net(1024);
        let c = net.analyze(&noise(1024, 4), TransformKind::S1).unwrap();
        let cfg = ReconstructionConfig { objective: Objective::TimeS1S2, iterations: 1, ..Default::default() };
        assert!(matches!(reconstruct(&net, &c, &cfg), Err(Error::Config(_))));
    }

    #[test]
    fn gradient_matches_central_differences() {
        let x = noise(1024, 5);
        let y = noise(1024, 6);
        for (padding, kind) in [Padding::Periodic, Padding::Reflect]
            .into_iter()
            .flat_map(|p| [TransformKind::S1, TransformKind::Time, TransformKind::Joint].map(|k| (p, k)))
        {
            let net = net_with(1024, padding);
            let target = net.analyze(&x, kind).unwrap();
            let (_, g) = backprop_gradient(&net, &target, &y).unwrap();
            let h = 1e-5 * y.samples.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let fd: Vec<f64> = (0..y.len())
                .map(|i| {
                    let mut p = y.clone();
                    p.samples[i] += h;
                    let mut m = y.clone();
                    m.samples[i] -= h;
                    let lp = scattering_loss(&target, &net.analyze(&p, kind).unwrap()).unwrap();
                    let lm = scattering_loss(&target, &net.analyze(&m, kind).unwrap()).unwrap();
                    (lp - lm) / (2.0 * h)
                })
                .collect();
            let err: Vec<f64> = fd.iter().zip(&g).map(|(a, b)| a - b).collect();
            let rel = norm(&err) / norm(&g);
            assert!(rel <= 1e-4, "{padding:?} {kind:?}: {rel:e}");
        }
    }
}
