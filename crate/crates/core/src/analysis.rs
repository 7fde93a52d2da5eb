//! Convergence bounds for constant and diminishing step sizes, Monte Carlo
//! estimates of the expected optimality gap, and verdicts comparing the two.

use std::ops::Range;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{run, RunConfig, StepSchedule};
use crate::error::{param, EcimError, Result};
use crate::problem::{CouplingProblem, SpinState};

/// Two-sided 95% normal quantile.
const Z_95: f64 = 1.959_963_984_540_054;
/// Runs simulated concurrently before folding into the running statistics.
const ENSEMBLE_BATCH: usize = 64;

/// Per-iteration sample mean of `E(s^(k)) - E*` over an ensemble.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleStats {
    /// Number of runs `M` (0 when loaded from CSV).
    pub runs: usize,
    /// Number of iterations `K`.
    pub iterations: usize,
    pub mean_gap: Vec<f64>,
    /// 95% normal-approximation half-widths.
    pub ci_halfwidth: Vec<f64>,
    pub clamp_events: usize,
}

impl EnsembleStats {
    /// Index range of the trailing `tail_fraction` of iterations.
    pub fn tail_range(&self, tail_fraction: f64) -> Range<usize> {
        let len = self.mean_gap.len();
        let tail = ((tail_fraction * len as f64).ceil() as usize).clamp(1, len);
        len - tail..len
    }

    /// Smallest mean gap over the trailing `tail_fraction` of iterations.
    pub fn tail_min(&self, tail_fraction: f64) -> f64 {
        self.mean_gap[self.tail_range(tail_fraction)]
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }
}

/// Runs `runs` trajectories with seeds `base_seed ^ i` and reduces their
/// gaps in run order, so the result does not depend on thread scheduling.
pub fn ensemble_run(
    p: &CouplingProblem,
    s0: &SpinState,
    config: &RunConfig,
    runs: usize,
    base_seed: u64,
    e_star: f64,
) -> Result<EnsembleStats> {
    if runs < 2 {
        return Err(param("M", format!("need at least 2 runs, got {runs}")));
    }
    let len = config.iterations + 1;
    let mut mean = vec![0.0; len];
    let mut m2 = vec![0.0; len];
    let mut clamp_events = 0;
    let mut count = 0.0;
    let seeds: Vec<u64> = (0..runs as u64).map(|i| base_seed ^ i).collect();
    for batch in seeds.chunks(ENSEMBLE_BATCH) {
        let trajectories = batch
            .par_iter()
            .map(|&seed| {
                let mut cfg = config.with_seed(seed);
                cfg.record_states = false;
                run(p, s0, &cfg)
            })
            .collect::<Result<Vec<_>>>()?;
        for t in trajectories {
            count += 1.0;
            clamp_events += t.clamp_events;
            for (k, e) in t.energies.into_iter().enumerate() {
                let x = e - e_star;
                let delta = x - mean[k];
                mean[k] += delta / count;
                m2[k] += delta * (x - mean[k]);
            }
        }
    }
    let m = runs as f64;
    let ci_halfwidth = m2
        .iter()
        .map(|&v| Z_95 * (v.max(0.0) / (m - 1.0)).sqrt() / m.sqrt())
        .collect();
    Ok(EnsembleStats {
        runs,
        iterations: config.iterations,
        mean_gap: mean,
        ci_halfwidth,
        clamp_events,
    })
}

fn require_positive(name: &'static str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(param(name, format!("must be finite and > 0, got {v}")))
    }
}

fn require_nonnegative(name: &'static str, v: f64) -> Result<()> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(param(name, format!("must be finite and >= 0, got {v}")))
    }
}

/// Constant-step floor of the original dynamics:
/// `lambda_max / (2 mu) * (beta c^2 + n sigma^2 / beta)`.
pub fn liminf_bound_original(
    lambda_max: f64,
    mu: f64,
    beta: f64,
    c_squared: f64,
    n: usize,
    sigma_squared: f64,
) -> Result<f64> {
    require_positive("mu", mu)?;
    require_positive("beta", beta)?;
    require_nonnegative("sigma2", sigma_squared)?;
    Ok(lambda_max / (2.0 * mu) * (beta * c_squared + n as f64 * sigma_squared / beta))
}

/// Constant-step floor of the noise-scaled dynamics:
/// `lambda_max / (2 mu) * beta * (c^2 + n sigma^2)`.
pub fn liminf_bound_modified(
    lambda_max: f64,
    mu: f64,
    beta: f64,
    c_squared: f64,
    n: usize,
    sigma_squared: f64,
) -> Result<f64> {
    require_positive("mu", mu)?;
    require_positive("beta", beta)?;
    require_nonnegative("sigma2", sigma_squared)?;
    Ok(lambda_max / (2.0 * mu) * beta * (c_squared + n as f64 * sigma_squared))
}

/// Step size minimizing the original floor, `sigma sqrt(n) / c`.
pub fn optimal_original_beta(c_squared: f64, n: usize, sigma_squared: f64) -> f64 {
    (sigma_squared * n as f64 / c_squared).sqrt()
}

/// `floor((E(s0) - E*) / (2 beta mu epsilon))`.
///
/// Quotients within `1e-9` (relative) of an integer snap to it so that
/// rounding in the denominator does not drop a whole iteration.
pub fn iteration_bound_kappa(initial_gap: f64, beta: f64, mu: f64, epsilon: f64) -> Result<u64> {
    require_nonnegative("initial_gap", initial_gap)?;
    require_positive("beta", beta)?;
    require_positive("mu", mu)?;
    require_positive("epsilon", epsilon)?;
    let q = initial_gap / (2.0 * beta * mu * epsilon);
    if !q.is_finite() || q >= u64::MAX as f64 {
        return Err(param("kappa", format!("iteration bound {q} is not representable")));
    }
    let nearest = q.round();
    let kappa = if (q - nearest).abs() <= 1e-9 * nearest.max(1.0) {
        nearest
    } else {
        q.floor()
    };
    Ok(kappa as u64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MuSource {
    UserSupplied,
    Estimated,
}

impl MuSource {
    pub fn as_str(self) -> &'static str {
        match self {
            MuSource::UserSupplied => "user_supplied",
            MuSource::Estimated => "estimated",
        }
    }
}

/// Which constant-step floor applies to a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundKind {
    Original,
    Modified,
}

/// Every bound for one (problem, configuration) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub lambda_max: f64,
    pub mu_used: f64,
    pub mu_source: MuSource,
    pub c_squared: f64,
    pub liminf_bound_original: f64,
    pub liminf_bound_modified: f64,
    pub kappa: Option<u64>,
    pub epsilon: Option<f64>,
    /// Step size the bounds were evaluated at.
    pub beta: f64,
    pub sigma2: f64,
    pub n: usize,
    pub initial_gap: f64,
    pub mode: String,
    pub constant_schedule: bool,
    /// Bound the run is checked against.
    pub applicable: BoundKind,
    /// False when the PL assumption is not established for the instance or
    /// the bound was not derived for this iteration mode.
    pub assumptions_verified: bool,
}

impl BoundReport {
    pub fn applicable_bound(&self) -> f64 {
        match self.applicable {
            BoundKind::Original => self.liminf_bound_original,
            BoundKind::Modified => self.liminf_bound_modified,
        }
    }
}

/// Inputs to [`bound_report`] that come from the spectral and oracle stages.
#[derive(Debug, Clone, Copy)]
pub struct BoundInputs {
    pub lambda_max: f64,
    pub c_squared: f64,
    pub mu: f64,
    pub mu_source: MuSource,
    pub initial_gap: f64,
    pub epsilon: Option<f64>,
    /// PL holds on the box (convex `Q`).
    pub pl_verified: bool,
}

/// Evaluates the bounds for `config`. Diminishing schedules are evaluated at
/// their final step `beta_K` and carry no `kappa`.
pub fn bound_report(n: usize, config: &RunConfig, inputs: &BoundInputs) -> Result<BoundReport> {
    let beta = match config.schedule {
        StepSchedule::Constant { beta } => beta,
        sched @ StepSchedule::PolyDecay { .. } => sched.at(config.iterations),
    };
    let sigma2 = config.noise.sigma_squared;
    let original = liminf_bound_original(inputs.lambda_max, inputs.mu, beta, inputs.c_squared, n, sigma2)?;
    let modified = liminf_bound_modified(inputs.lambda_max, inputs.mu, beta, inputs.c_squared, n, sigma2)?;
    let kappa = match (inputs.epsilon, config.schedule.is_constant()) {
        (Some(eps), true) => Some(iteration_bound_kappa(inputs.initial_gap, beta, inputs.mu, eps)?),
        _ => None,
    };
    let applicable = if config.mode.is_noise_scaled() {
        BoundKind::Modified
    } else {
        BoundKind::Original
    };
    Ok(BoundReport {
        lambda_max: inputs.lambda_max,
        mu_used: inputs.mu,
        mu_source: inputs.mu_source,
        c_squared: inputs.c_squared,
        liminf_bound_original: original,
        liminf_bound_modified: modified,
        kappa,
        epsilon: inputs.epsilon,
        beta,
        sigma2,
        n,
        initial_gap: inputs.initial_gap,
        mode: config.mode.name().to_string(),
        constant_schedule: config.schedule.is_constant(),
        applicable,
        assumptions_verified: inputs.pl_verified && config.mode.is_linearized(),
    })
}

/// Outcome of a numeric check; `margin` is `|bound - observed|`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CheckResult {
    pub bound: f64,
    pub observed: f64,
    pub margin: f64,
    pub passed: bool,
}

impl CheckResult {
    fn new(bound: f64, observed: f64, passed: bool) -> Self {
        Self {
            bound,
            observed,
            margin: (bound - observed).abs(),
            passed,
        }
    }
}

/// Compares the liminf, approximated by the tail minimum of
/// `mean_gap - ci_halfwidth`, against `bound`.
pub fn verify_gap_bound(stats: &EnsembleStats, bound: f64, tail_fraction: f64) -> Result<CheckResult> {
    if !(tail_fraction > 0.0 && tail_fraction <= 1.0) {
        return Err(param(
            "tail_fraction",
            format!("must lie in (0, 1], got {tail_fraction}"),
        ));
    }
    if stats.mean_gap.is_empty() {
        return Err(EcimError::Malformed("ensemble has no iterations".into()));
    }
    let observed = stats.tail_range(tail_fraction)
        .map(|k| stats.mean_gap[k] - stats.ci_halfwidth[k])
        .fold(f64::INFINITY, f64::min);
    Ok(CheckResult::new(bound, observed, observed <= bound))
}

/// Checks `min_{0<=k<=kappa} mean_gap[k] <= bound + epsilon` (with the
/// confidence half-width at the minimizing `k` as slack).
pub fn verify_kappa(
    stats: &EnsembleStats,
    bound_value: f64,
    kappa: u64,
    epsilon: f64,
) -> Result<CheckResult> {
    let horizon = stats.mean_gap.len().saturating_sub(1);
    if kappa > horizon as u64 {
        return Err(EcimError::InsufficientHorizon { kappa, horizon });
    }
    let (argmin, min) = stats.mean_gap[..=kappa as usize]
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (k, g)| if g < acc.1 { (k, g) } else { acc });
    let target = bound_value + epsilon;
    Ok(CheckResult::new(
        target,
        min,
        min <= target + stats.ci_halfwidth[argmin],
    ))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateFit {
    /// Slope of `log(gap)` against `log(k)`.
    pub exponent: f64,
    pub r_squared: f64,
}

/// Least-squares power-law fit of `gap[k]` for `k` in `window` (`k >= 1`).
pub fn rate_fit(gap: &[f64], window: Range<usize>) -> Result<RateFit> {
    if window.start == 0 || window.end > gap.len() || window.len() < 2 {
        return Err(EcimError::Window(format!(
            "window {window:?} must satisfy 1 <= start, end <= {}, and hold 2+ points",
            gap.len()
        )));
    }
    if let Some(k) = window.clone().find(|&k| gap[k].is_nan() || gap[k] <= 0.0) {
        return Err(EcimError::Window(format!("gap[{k}] = {} is not positive", gap[k])));
    }
    let pts: Vec<(f64, f64)> = window.map(|k| ((k as f64).ln(), gap[k].ln())).collect();
    let m = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    let exponent = sxy / sxx;
    let ss_res: f64 = pts
        .iter()
        .map(|p| (p.1 - (my + exponent * (p.0 - mx))).powi(2))
        .sum();
    let r_squared = if syy <= f64::EPSILON * m * my.abs().max(1.0) {
        1.0
    } else {
        1.0 - ss_res / syy
    };
    Ok(RateFit {
        exponent,
        r_squared,
    })
}

/// The last decade of iterations, `[K/10, K]`, clipped to `k >= 1`.
pub fn last_decade(iterations: usize) -> Range<usize> {
    (iterations / 10).max(1)..iterations + 1
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecursionCheck {
    pub holding: usize,
    pub checked: usize,
}

impl RecursionCheck {
    pub fn fraction(&self) -> f64 {
        if self.checked == 0 {
            1.0
        } else {
            self.holding as f64 / self.checked as f64
        }
    }
}

/// Parameters of the one-step descent recursion.
#[derive(Debug, Clone, Copy)]
pub struct RecursionParams {
    pub mu: f64,
    pub lambda_max: f64,
    pub c_squared: f64,
    pub n: usize,
    pub sigma_squared: f64,
}

/// Counts iterations where
/// `gap[k+1] <= (1 - 2 beta_k mu) gap[k] + lambda_max beta_k^2 (c^2 + n sigma^2) + 3 ci[k+1]`.
pub fn check_one_step_recursion(
    stats: &EnsembleStats,
    schedule: &StepSchedule,
    params: &RecursionParams,
) -> RecursionCheck {
    let noise = params.c_squared + params.n as f64 * params.sigma_squared;
    let mut holding = 0;
    let checked = stats.mean_gap.len().saturating_sub(1);
    for k in 0..checked {
        let beta = schedule.at(k);
        let rhs = (1.0 - 2.0 * beta * params.mu) * stats.mean_gap[k]
            + params.lambda_max * beta * beta * noise
            + 3.0 * stats.ci_halfwidth[k + 1];
        if stats.mean_gap[k + 1] <= rhs {
            holding += 1;
        }
    }
    RecursionCheck { holding, checked }
}

/// Verdict label reported for a check.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VerdictKind {
    #[serde(rename = "PASS")]
    Pass,
    #[serde(rename = "FAIL")]
    Fail,
    #[serde(rename = "ASSUMPTION_UNVERIFIED")]
    AssumptionUnverified,
}

/// One line of a verdict report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub check: String,
    pub bound: f64,
    pub observed: f64,
    pub margin: f64,
    pub verdict: VerdictKind,
    pub mu_source: String,
}

impl Verdict {
    /// Labels a check; results under unverified assumptions are never
    /// reported as PASS/FAIL.
    pub fn new(check: &str, result: &CheckResult, report: &BoundReport) -> Self {
        let verdict = if !report.assumptions_verified {
            VerdictKind::AssumptionUnverified
        } else if result.passed {
            VerdictKind::Pass
        } else {
            VerdictKind::Fail
        };
        Self {
            check: check.to_string(),
            bound: result.bound,
            observed: result.observed,
            margin: result.margin,
            verdict,
            mu_source: report.mu_source.as_str().to_string(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{IterationMode, NoiseModel};

    fn stats(mean: Vec<f64>, ci: Vec<f64>) -> EnsembleStats {
        EnsembleStats {
            runs: 10,
            iterations: mean.len() - 1,
            mean_gap: mean,
            ci_halfwidth: ci,
            clamp_events: 0,
        }
    }

    #[test]
    fn bound_formula_examples() {
        let b = liminf_bound_original(2.0, 0.5, 0.1, 1.0, 4, 0.01).unwrap();
        assert!((b - 1.0).abs() < 1e-12);
        let b = liminf_bound_original(2.0, 0.5, 0.1, 1.0, 4, 0.0).unwrap();
        assert!((b - 2.0 * 0.1).abs() < 1e-15);

        let m = liminf_bound_modified(2.0, 0.5, 0.1, 1.0, 4, 0.01).unwrap();
        assert!((m - 0.208).abs() < 1e-12);
        let tiny = liminf_bound_modified(2.0, 0.5, 1e-12, 1.0, 4, 0.01).unwrap();
        assert!(tiny < 1e-11);

        let o1 = liminf_bound_original(1.7, 0.3, 1.0, 2.5, 6, 0.04).unwrap();
        let m1 = liminf_bound_modified(1.7, 0.3, 1.0, 2.5, 6, 0.04).unwrap();
        assert!((o1 - m1).abs() < 1e-12);

        assert!(liminf_bound_original(2.0, 0.0, 0.1, 1.0, 4, 0.01).is_err());
        assert!(liminf_bound_modified(2.0, 0.5, -0.1, 1.0, 4, 0.01).is_err());
    }

    #[test]
    fn original_bound_minimum_matches_am_gm() {
        let (lam, mu, c2, n, s2) = (1.5, 0.4, 3.0, 8, 0.02);
        let beta = optimal_original_beta(c2, n, s2);
        let at = liminf_bound_original(lam, mu, beta, c2, n, s2).unwrap();
        let expected = lam / mu * c2.sqrt() * s2.sqrt() * (n as f64).sqrt();
        assert!((at - expected).abs() < 1e-12);
        for f in [0.5, 0.9, 1.1, 2.0] {
            assert!(liminf_bound_original(lam, mu, beta * f, c2, n, s2).unwrap() > at);
        }
    }

    #[test]
    fn kappa_examples() {
        assert_eq!(iteration_bound_kappa(1.0, 0.1, 0.5, 0.1).unwrap(), 100);
        assert_eq!(iteration_bound_kappa(0.0, 0.1, 0.5, 0.1).unwrap(), 0);
        assert_eq!(iteration_bound_kappa(1.0, 0.1, 1.0, 0.05).unwrap(), 100);
        assert_eq!(iteration_bound_kappa(1.0, 0.3, 1.0, 0.1).unwrap(), 16);
        assert!(iteration_bound_kappa(1.0, 0.0, 1.0, 0.1).is_err());
        assert!(iteration_bound_kappa(-1.0, 0.1, 1.0, 0.1).is_err());
    }

    #[test]
    fn gap_bound_verdicts() {
        let s = stats(vec![3.0, 0.0, 0.0, 0.0, 0.0], vec![0.0; 5]);
        assert!(verify_gap_bound(&s, 0.5, 0.2).unwrap().passed);

        let s = stats(vec![5.0, 2.0, 1.5, 1.0, 1.0], vec![0.01; 5]);
        let r = verify_gap_bound(&s, 0.5, 0.2).unwrap();
        assert!(!r.passed);
        assert!((r.margin - 0.49).abs() < 1e-12);
        assert_eq!(r, verify_gap_bound(&s, 0.5, 0.2).unwrap());
        assert!(verify_gap_bound(&s, 0.5, 0.0).is_err());
    }

    #[test]
    fn kappa_verdicts() {
        let s = stats(vec![0.1], vec![0.0]);
        assert!(verify_kappa(&s, 0.05, 0, 0.05).unwrap().passed);

        let s = stats(vec![4.0, 2.0, 1.0, 0.5, 0.25, 0.1], vec![0.0; 6]);
        assert!(verify_kappa(&s, 0.2, 4, 0.1).unwrap().passed);
        assert!(!verify_kappa(&s, 0.2, 2, 0.1).unwrap().passed);
        assert!(matches!(
            verify_kappa(&s, 0.2, 6, 0.1),
            Err(EcimError::InsufficientHorizon { kappa: 6, horizon: 5 })
        ));
    }

    #[test]
    fn rate_fit_examples() {
        let gap: Vec<f64> = (0..1000).map(|k| 1.0 / (k as f64 + 1.0)).collect();
        let fit = rate_fit(&gap, 100..1000).unwrap();
        assert!((fit.exponent + 1.0).abs() < 0.01);
        assert!(fit.r_squared > 0.99);

        let flat = vec![0.3; 100];
        let fit = rate_fit(&flat, 1..100).unwrap();
        assert!(fit.exponent.abs() < 1e-12);

        let mut bad = gap.clone();
        bad[500] = 0.0;
        assert!(rate_fit(&bad, 100..1000).is_err());
        assert!(rate_fit(&gap, 0..10).is_err());
    }

    #[test]
    fn tiny_ensemble_without_iterations() {
        let p = CouplingProblem::new(2, vec![1.0, 0.2, 0.2, 1.0], vec![0.1, 0.0], None).unwrap();
        let s0 = SpinState::new(vec![0.3, -0.2]).unwrap();
        let cfg = RunConfig {
            iterations: 0,
            ..RunConfig::default()
        };
        let st = ensemble_run(&p, &s0, &cfg, 2, 5, -0.1).unwrap();
        assert_eq!(st.mean_gap, vec![p.relaxed_energy(&s0).unwrap() + 0.1]);
        assert_eq!(st.ci_halfwidth, vec![0.0]);
        assert!(ensemble_run(&p, &s0, &cfg, 1, 5, -0.1).is_err());
    }

    #[test]
    fn noiseless_descent_is_strictly_decreasing() {
        let p = CouplingProblem::new(2, vec![1.5, 0.3, 0.3, 0.8], vec![0.0, 0.0], None).unwrap();
        let cfg = RunConfig {
            mode: IterationMode::Linearized,
            schedule: StepSchedule::constant(0.4).unwrap(),
            noise: NoiseModel::new(0.0, 0).unwrap(),
            iterations: 40,
            record_states: false,
        };
        let s0 = SpinState::new(vec![0.5, -0.5]).unwrap();
        let st = ensemble_run(&p, &s0, &cfg, 3, 0, 0.0).unwrap();
        assert!(st.mean_gap.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn recursion_check_counts_steps() {
        let s = stats(vec![1.0, 0.5, 0.6], vec![0.0; 3]);
        let sched = StepSchedule::constant(0.25).unwrap();
        let params = RecursionParams {
            mu: 1.0,
            lambda_max: 1.0,
            c_squared: 0.0,
            n: 1,
            sigma_squared: 0.0,
        };
        // rhs_0 = 0.5 (holds with equality), rhs_1 = 0.25 (violated)
        let r = check_one_step_recursion(&s, &sched, &params);
        assert_eq!((r.holding, r.checked), (1, 2));
    }
}
