//! Iteration rules of the machine: the cos^2 transfer dynamics (original
//! and field-extended), the linearized noisy gradient descent, and the
//! noise-scaled variants, driven by a step-size schedule and seeded
//! Gaussian noise.

use log::{debug, warn};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{param, EcimError, Result};
use crate::problem::{clamp_to_box, CouplingProblem, SpinState};
use crate::rng::{substream, EcimRng};

/// Step-size sequence `beta_k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepSchedule {
    Constant { beta: f64 },
    /// `beta_k = beta0 / (k + 1)^r`, `r` in `(1/2, 1]`.
    PolyDecay { beta0: f64, r: f64 },
}

impl StepSchedule {
    pub fn constant(beta: f64) -> Result<Self> {
        if !(beta.is_finite() && beta > 0.0) {
            return Err(param("beta", format!("must be finite and > 0, got {beta}")));
        }
        Ok(StepSchedule::Constant { beta })
    }

    pub fn poly_decay(beta0: f64, r: f64) -> Result<Self> {
        if !(beta0.is_finite() && beta0 > 0.0) {
            return Err(param("beta0", format!("must be finite and > 0, got {beta0}")));
        }
        if !(r > 0.5 && r <= 1.0) {
            return Err(param("r", format!("must lie in (0.5, 1], got {r}")));
        }
        Ok(StepSchedule::PolyDecay { beta0, r })
    }

    /// `beta_k` at iteration `k`.
    pub fn at(&self, k: usize) -> f64 {
        match *self {
            StepSchedule::Constant { beta } => beta,
            StepSchedule::PolyDecay { beta0, r } => beta0 / ((k + 1) as f64).powf(r),
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, StepSchedule::Constant { .. })
    }
}

/// Gaussian noise `zeta ~ N(0, sigma^2 I)` drawn fresh every iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseModel {
    pub sigma_squared: f64,
    pub seed: u64,
}

impl NoiseModel {
    pub fn new(sigma_squared: f64, seed: u64) -> Result<Self> {
        if !(sigma_squared.is_finite() && sigma_squared >= 0.0) {
            return Err(param(
                "sigma2",
                format!("must be finite and >= 0, got {sigma_squared}"),
            ));
        }
        Ok(Self {
            sigma_squared,
            seed,
        })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma_squared.sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum IterationMode {
    /// `f = alpha s - beta J s`, `s' = T(f + zeta)`.
    TransferOriginal { alpha: f64 },
    /// `f = alpha s - beta (Q s + h)`, `s' = T(f + zeta)`.
    TransferExtended { alpha: f64 },
    /// `s' = s - beta grad E(s) + zeta`, clamped to the box.
    Linearized,
    /// `f = alpha s - beta (grad E(s) - zeta)`, `s' = T(f)`.
    TransferNoiseScaled { alpha: f64 },
    /// `s' = s - beta (grad E(s) - zeta)`, clamped to the box.
    LinearizedNoiseScaled,
}

impl IterationMode {
    pub fn alpha(&self) -> f64 {
        match *self {
            IterationMode::TransferOriginal { alpha }
            | IterationMode::TransferExtended { alpha }
            | IterationMode::TransferNoiseScaled { alpha } => alpha,
            IterationMode::Linearized | IterationMode::LinearizedNoiseScaled => 1.0,
        }
    }

    pub fn is_transfer(&self) -> bool {
        !self.is_linearized()
    }

    pub fn is_linearized(&self) -> bool {
        matches!(
            self,
            IterationMode::Linearized | IterationMode::LinearizedNoiseScaled
        )
    }

    /// Noise enters multiplied by the step size.
    pub fn is_noise_scaled(&self) -> bool {
        matches!(
            self,
            IterationMode::TransferNoiseScaled { .. } | IterationMode::LinearizedNoiseScaled
        )
    }

    pub fn name(&self) -> &'static str {
        match self {
            IterationMode::TransferOriginal { .. } => "transfer_original",
            IterationMode::TransferExtended { .. } => "transfer_extended",
            IterationMode::Linearized => "linearized",
            IterationMode::TransferNoiseScaled { .. } => "transfer_noise_scaled",
            IterationMode::LinearizedNoiseScaled => "linearized_noise_scaled",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub mode: IterationMode,
    pub schedule: StepSchedule,
    pub noise: NoiseModel,
    /// Number of iterations `K`.
    pub iterations: usize,
    pub record_states: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            mode: IterationMode::TransferNoiseScaled { alpha: 1.0 },
            schedule: StepSchedule::PolyDecay {
                beta0: 0.5,
                r: 0.75,
            },
            noise: NoiseModel {
                sigma_squared: 0.01,
                seed: 0,
            },
            iterations: 1000,
            record_states: false,
        }
    }
}

impl RunConfig {
    /// Same configuration with a different noise seed.
    pub fn with_seed(&self, seed: u64) -> Self {
        let mut out = self.clone();
        out.noise.seed = seed;
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    /// `E(s^(k))` for `k = 0..=K`.
    pub energies: Vec<f64>,
    pub final_state: SpinState,
    /// `s^(k)` for `k = 0..=K` when requested.
    pub states: Option<Vec<SpinState>>,
    pub seed_used: u64,
    /// Coordinates clamped back into the box (linearized modes only).
    pub clamp_events: usize,
}

/// Modulator transfer `cos^2(x - pi/4) - 1/2`.
///
/// Evaluated through the identity `cos^2(x - pi/4) - 1/2 = sin(2x) / 2`, which
/// maps `0` to exactly `0` in floating point.
#[inline]
pub fn transfer_scalar(x: f64) -> f64 {
    0.5 * (2.0 * x).sin()
}

/// Element-wise transfer; the output always lies in `[-1/2, 1/2]^n`.
pub fn transfer(x: &[f64]) -> SpinState {
    SpinState::from_box_unchecked(x.iter().map(|&v| transfer_scalar(v)).collect())
}

/// Feedback vector (drive before the nonlinearity) for one iteration.
///
/// `zeta` is only consumed by the noise-scaled modes; in the other transfer
/// modes the noise is added inside the transfer and in `Linearized` it is
/// added after the gradient step.
pub fn feedback(
    p: &CouplingProblem,
    s: &SpinState,
    beta_k: f64,
    mode: IterationMode,
    zeta: &[f64],
) -> Result<Vec<f64>> {
    let n = p.n();
    for (what, len) in [("spin state", s.len()), ("noise", zeta.len())] {
        if len != n {
            return Err(EcimError::DimensionMismatch {
                what,
                expected: n,
                found: len,
            });
        }
    }
    let mut work = vec![0.0; n];
    let mut out = vec![0.0; n];
    feedback_into(p, s.as_slice(), beta_k, mode, zeta, &mut work, &mut out);
    Ok(out)
}

fn feedback_into(
    p: &CouplingProblem,
    s: &[f64],
    beta: f64,
    mode: IterationMode,
    zeta: &[f64],
    work: &mut [f64],
    out: &mut [f64],
) {
    let alpha = mode.alpha();
    match mode {
        IterationMode::TransferOriginal { .. } => {
            p.coupling_product_into(s, work);
            for i in 0..s.len() {
                out[i] = alpha * s[i] - beta * work[i];
            }
        }
        IterationMode::TransferExtended { .. } | IterationMode::Linearized => {
            p.gradient_into(s, work);
            for i in 0..s.len() {
                out[i] = alpha * s[i] - beta * work[i];
            }
        }
        IterationMode::TransferNoiseScaled { .. } | IterationMode::LinearizedNoiseScaled => {
            p.gradient_into(s, work);
            for i in 0..s.len() {
                out[i] = alpha * s[i] - beta * (work[i] - zeta[i]);
            }
        }
    }
}

/// Reusable buffers for repeated steps.
struct Stepper<'a> {
    problem: &'a CouplingProblem,
    mode: IterationMode,
    schedule: StepSchedule,
    sigma: f64,
    zeta: Vec<f64>,
    work: Vec<f64>,
    drive: Vec<f64>,
}

impl<'a> Stepper<'a> {
    fn new(
        problem: &'a CouplingProblem,
        mode: IterationMode,
        schedule: StepSchedule,
        noise: NoiseModel,
    ) -> Self {
        let n = problem.n();
        Self {
            problem,
            mode,
            schedule,
            sigma: noise.sigma(),
            zeta: vec![0.0; n],
            work: vec![0.0; n],
            drive: vec![0.0; n],
        }
    }

    /// Advances `s` in place; returns the number of clamped coordinates.
    fn advance(&mut self, s: &mut [f64], k: usize, rng: &mut EcimRng) -> usize {
        for z in self.zeta.iter_mut() {
            let g: f64 = rng.sample(StandardNormal);
            *z = self.sigma * g;
        }
        let beta = self.schedule.at(k);
        feedback_into(
            self.problem,
            s,
            beta,
            self.mode,
            &self.zeta,
            &mut self.work,
            &mut self.drive,
        );
        match self.mode {
            IterationMode::TransferOriginal { .. } | IterationMode::TransferExtended { .. } => {
                for ((si, &f), &z) in s.iter_mut().zip(&self.drive).zip(&self.zeta) {
                    *si = transfer_scalar(f + z);
                }
                0
            }
            IterationMode::TransferNoiseScaled { .. } => {
                for (si, &f) in s.iter_mut().zip(&self.drive) {
                    *si = transfer_scalar(f);
                }
                0
            }
            IterationMode::Linearized => {
                for ((si, &f), &z) in s.iter_mut().zip(&self.drive).zip(&self.zeta) {
                    *si = f + z;
                }
                clamp_to_box(s)
            }
            IterationMode::LinearizedNoiseScaled => {
                s.copy_from_slice(&self.drive);
                clamp_to_box(s)
            }
        }
    }
}

/// One full iteration from `s` at iteration index `k`. Draws exactly `n`
/// standard normal variates from `rng`.
pub fn step(
    p: &CouplingProblem,
    s: &SpinState,
    k: usize,
    schedule: &StepSchedule,
    mode: IterationMode,
    noise: &NoiseModel,
    rng: &mut EcimRng,
) -> Result<SpinState> {
    if s.len() != p.n() {
        return Err(EcimError::DimensionMismatch {
            what: "spin state",
            expected: p.n(),
            found: s.len(),
        });
    }
    let mut stepper = Stepper::new(p, mode, *schedule, *noise);
    let mut next = s.as_slice().to_vec();
    stepper.advance(&mut next, k, rng);
    Ok(SpinState::from_box_unchecked(next))
}

/// Iterates `step` `K` times from `s0`, recording `E(s^(k))` before each step.
pub fn run(p: &CouplingProblem, s0: &SpinState, config: &RunConfig) -> Result<Trajectory> {
    if s0.len() != p.n() {
        return Err(EcimError::DimensionMismatch {
            what: "initial state",
            expected: p.n(),
            found: s0.len(),
        });
    }
    let alpha = config.mode.alpha();
    if alpha != 1.0 {
        warn!(
            "alpha = {alpha} in {}; the convergence bounds assume alpha = 1",
            config.mode.name()
        );
    }
    let k_max = config.iterations;
    let mut rng = substream(config.noise.seed, 0);
    let mut stepper = Stepper::new(p, config.mode, config.schedule, config.noise);
    let mut s = s0.as_slice().to_vec();
    let mut energies = Vec::with_capacity(k_max + 1);
    let mut states = config.record_states.then(|| Vec::with_capacity(k_max + 1));
    let mut clamp_events = 0;

    for k in 0..=k_max {
        energies.push(p.energy_of(&s));
        if let Some(states) = states.as_mut() {
            states.push(SpinState::from_box_unchecked(s.clone()));
        }
        if k < k_max {
            clamp_events += stepper.advance(&mut s, k, &mut rng);
        }
    }
    if clamp_events > 0 {
        debug!(
            "{}: {clamp_events} coordinates clamped to the box over {k_max} iterations",
            config.mode.name()
        );
    }
    Ok(Trajectory {
        energies,
        final_state: SpinState::from_box_unchecked(s),
        states,
        seed_used: config.noise.seed,
        clamp_events,
    })
}
