use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use log::{info, warn};

use ecim_core::analysis::last_decade;
use ecim_core::io::{
    ensemble_csv, ensemble_from_csv, problem_from_json, problem_to_json, read_json,
    run_config_from_json, to_json_pretty, trajectory_csv, write_atomic, OracleReport,
};
use ecim_core::{
    bound_report, classify_definiteness, ensemble_run, generate, pl_constant_estimate, rate_fit,
    relaxed_optimum, round_to_spins, run, spectral_summary, verify_gap_bound, verify_kappa,
    BoundInputs, BoundReport, CheckResult, CouplingProblem, EcimError, GeneratorSpec, MuSource,
    OracleBudget, RunConfig, SpinState, Verdict, VerdictKind,
};

#[derive(Parser)]
#[command(name = "ecim", version, about = "Opto-electronic coherent Ising machine simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a problem instance from a generator spec.
    Generate {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run one trajectory and write its energies.
    Solve {
        #[arg(long)]
        problem: PathBuf,
        /// Run configuration; the default regime is used when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Reference optimum, PL estimate and curvature class.
    Oracle {
        #[arg(long)]
        problem: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 64)]
        starts: usize,
        #[arg(long, default_value_t = 100_000)]
        pl_samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Monte Carlo ensemble of optimality gaps.
    Ensemble {
        #[arg(long)]
        problem: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Number of runs.
        #[arg(short = 'M', default_value_t = 200)]
        runs: usize,
        #[arg(long)]
        seed: u64,
        /// Oracle report to take E* from; computed when omitted.
        #[arg(long)]
        oracle: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate the gap bounds for a configuration.
    Bounds {
        #[arg(long)]
        problem: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        oracle: PathBuf,
        /// PL constant overriding the oracle's estimate.
        #[arg(long)]
        mu: Option<f64>,
        #[arg(long)]
        epsilon: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check an ensemble against a bounds report.
    Verify {
        #[arg(long)]
        ensemble: PathBuf,
        #[arg(long)]
        bounds: PathBuf,
        #[arg(long, default_value_t = 0.2)]
        tail_fraction: f64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(command: Command) -> Result<ExitCode> {
    match command {
        Command::Generate { spec, out } => {
            let spec: GeneratorSpec = read_json(&spec).with_context(|| format!("reading generator spec {}", spec.display()))?;
            let p = generate(&spec)?;
            write_atomic(&out, problem_to_json(&p)?.as_bytes())?;
        }
        Command::Solve { problem, config, out } => {
            let p = load_problem(&problem)?;
            let config = load_config(config.as_deref())?;
            let t = run(&p, &SpinState::zeros(p.n()), &config)?;
            write_atomic(&out, trajectory_csv(&t).as_bytes())?;
            let sigma = round_to_spins(&t.final_state);
            let spins: Vec<String> = sigma.iter().map(|v| format!("{v:+}")).collect();
            println!("final_energy {}", t.energies.last().expect("at least E(s0)"));
            println!("spins {}", spins.join(" "));
            println!("discrete_energy {}", p.discrete_energy(&sigma)?);
        }
        Command::Oracle { problem, out, starts, pl_samples, seed } => {
            let p = load_problem(&problem)?;
            let budget = OracleBudget { starts, seed, ..OracleBudget::default() };
            let opt = relaxed_optimum(&p, &budget)?;
            let class = classify_definiteness(&spectral_summary(&p)?);
            let mu_hat = match pl_constant_estimate(&p, opt.e_star, pl_samples, seed) {
                Ok(est) => Some(est.mu_hat),
                Err(e @ (EcimError::FlatObjective | EcimError::NonPositivePl(_))) => {
                    warn!("no PL estimate: {e}");
                    None
                }
                Err(e) => return Err(e.into()),
            };
            if !opt.certified {
                warn!("E* from {} is not certified", opt.method.as_str());
            }
            let report = OracleReport {
                e_star: opt.e_star,
                s_star: opt.s_star.into_vec(),
                method: opt.method.as_str().to_string(),
                certified: opt.certified,
                mu_hat,
                definiteness: Some(class.definiteness.as_str().to_string()),
                noise_required: Some(class.noise_required),
            };
            write_atomic(&out, to_json_pretty(&report)?.as_bytes())?;
        }
        Command::Ensemble { problem, config, runs, seed, oracle, out } => {
            let p = load_problem(&problem)?;
            let config = load_config(config.as_deref())?;
            let e_star = match oracle {
                Some(path) => load_oracle(&path)?.e_star,
                None => {
                    let opt = relaxed_optimum(&p, &OracleBudget::default())?;
                    info!("E* = {} via {}", opt.e_star, opt.method.as_str());
                    opt.e_star
                }
            };
            let stats = ensemble_run(&p, &SpinState::zeros(p.n()), &config, runs, seed, e_star)?;
            if stats.clamp_events > 0 {
                info!("{} clamp events across the ensemble", stats.clamp_events);
            }
            write_atomic(&out, ensemble_csv(&stats).as_bytes())?;
        }
        Command::Bounds { problem, config, oracle, mu, epsilon, out } => {
            let p = load_problem(&problem)?;
            let config = load_config(config.as_deref())?;
            let oracle = load_oracle(&oracle)?;
            let spectral = spectral_summary(&p)?;
            let (mu, mu_source) = match (mu, oracle.mu_hat) {
                (Some(mu), _) => (mu, MuSource::UserSupplied),
                (None, Some(mu)) => (mu, MuSource::Estimated),
                (None, None) => bail!("oracle report has no `mu_hat`; pass --mu"),
            };
            let inputs = BoundInputs {
                lambda_max: spectral.lambda_max,
                c_squared: spectral.c_squared,
                mu,
                mu_source,
                initial_gap: p.energy_of(&vec![0.0; p.n()]) - oracle.e_star,
                epsilon,
                pl_verified: spectral.definiteness.is_convex() && oracle.certified,
            };
            let report = bound_report(p.n(), &config, &inputs)?;
            if !report.assumptions_verified {
                warn!("bound assumptions are not verified for this instance and mode");
            }
            write_atomic(&out, to_json_pretty(&report)?.as_bytes())?;
        }
        Command::Verify { ensemble, bounds, tail_fraction, out } => {
            let text = std::fs::read_to_string(&ensemble)
                .with_context(|| format!("reading ensemble {}", ensemble.display()))?;
            let stats = ensemble_from_csv(&text).with_context(|| format!("parsing ensemble {}", ensemble.display()))?;
            let report: BoundReport = read_json(&bounds).with_context(|| format!("reading bounds {}", bounds.display()))?;
            let verdicts = verify(&stats, &report, tail_fraction)?;
            write_atomic(&out, to_json_pretty(&verdicts)?.as_bytes())?;
            for v in &verdicts {
                println!("{} {:?} observed={} bound={}", v.check, v.verdict, v.observed, v.bound);
            }
            return Ok(exit_code(&verdicts));
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn verify(
    stats: &ecim_core::EnsembleStats,
    report: &BoundReport,
    tail_fraction: f64,
) -> Result<Vec<Verdict>> {
    let bound = report.applicable_bound();
    let mut verdicts = vec![Verdict::new(
        "liminf_gap",
        &verify_gap_bound(stats, bound, tail_fraction)?,
        report,
    )];
    if let (Some(kappa), Some(epsilon)) = (report.kappa, report.epsilon) {
        verdicts.push(Verdict::new("kappa", &verify_kappa(stats, bound, kappa, epsilon)?, report));
    }
    if stats.iterations >= 10 {
        let fit = rate_fit(&stats.mean_gap, last_decade(stats.iterations))?;
        info!("rate fit: exponent {} (r^2 {})", fit.exponent, fit.r_squared);
        // A constant step settles at a floor, so only diminishing schedules
        // are expected to keep decreasing.
        if !report.constant_schedule {
            let result = CheckResult {
                bound: 0.0,
                observed: fit.exponent,
                margin: fit.exponent.abs(),
                passed: fit.exponent < 0.0,
            };
            verdicts.push(Verdict::new("rate_fit", &result, report));
        }
    }
    Ok(verdicts)
}

fn exit_code(verdicts: &[Verdict]) -> ExitCode {
    if verdicts.iter().any(|v| v.verdict == VerdictKind::Fail) {
        ExitCode::from(1)
    } else if verdicts.iter().any(|v| v.verdict == VerdictKind::AssumptionUnverified) {
        ExitCode::from(2)
    } else {
        ExitCode::SUCCESS
    }
}

fn load_problem(path: &Path) -> Result<CouplingProblem> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading problem {}", path.display()))?;
    problem_from_json(&text).with_context(|| format!("parsing problem {}", path.display()))
}

fn load_config(path: Option<&Path>) -> Result<RunConfig> {
    match path {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
            run_config_from_json(&text).with_context(|| format!("parsing config {}", path.display()))
        }
        None => {
            eprintln!("note: no --config given; using transfer_noise_scaled, poly(0.5, 0.75), sigma2 0.01, K 1000, seed 0");
            Ok(RunConfig::default())
        }
    }
}

fn load_oracle(path: &Path) -> Result<OracleReport> {
    read_json(path).with_context(|| format!("reading oracle report {}", path.display()))
}
