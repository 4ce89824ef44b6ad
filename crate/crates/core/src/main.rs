use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use camp::bench::{derive_seed, draw_instance, run_sweep, summary_text, sweep_taps, write_outputs, SweepConfig, FULL_SCALE_TRIALS};
use camp::diagnostics::{decompose_errors, gaussianity_report, mse_db, verify_m_recursion, GaussianityReport};
use camp::solvers::{run, Algorithm, SolverConfig};
use camp::spectral::{asymptotic_moments_geometric, equal_eigenvalue_moments, tap_recursion, taps_geometric_closed_form};
use camp::{Denoiser, SpectralProfile};

const EXIT_CONFIG: u8 = 2;
const EXIT_THRESHOLD: u8 = 3;

#[derive(Parser)]
#[command(name = "camp", version, about = "Convolutional AMP experiments")]
struct Cli {
    /// Sweep configuration (`key = value` lines).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides `master_seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides `trials`.
    #[arg(long, global = true)]
    trials: Option<usize>,
    /// Overrides `workers`.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Use 100000 trials.
    #[arg(long, global = true)]
    full_scale: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print tap coefficients for a geometric spectrum or a moment file.
    Taps {
        #[arg(long, default_value_t = 0.6)]
        delta: f64,
        #[arg(long, default_value_t = 10.0)]
        kappa: f64,
        #[arg(long, default_value_t = 20)]
        horizon: usize,
        /// One moment per line, starting with μ_0 = 1.
        #[arg(long)]
        moments: Option<PathBuf>,
        /// Print the whole triangular table as `t,k,value`.
        #[arg(long)]
        table: bool,
    },
    /// Run one trial and print the per-iteration trajectory.
    Run {
        #[arg(long, default_value = "camp")]
        algorithm: Algorithm,
        #[arg(long, default_value_t = 10.0)]
        kappa: f64,
        #[arg(long, default_value_t = 1.0)]
        theta: f64,
        #[arg(long, default_value_t = 0)]
        trial: u64,
    },
    /// Threshold search and paired trials over the configured condition numbers.
    Sweep {
        /// Output directory; overrides `output`.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Check the transformed-error recursion and the Gaussianity of `r_t − x`.
    Diagnose {
        #[arg(long, default_value_t = 10.0)]
        kappa: f64,
        #[arg(long, default_value_t = 1.0)]
        theta: f64,
        #[arg(long, default_value_t = 0)]
        trial: u64,
        #[arg(long, default_value_t = 1e-8)]
        tolerance: f64,
    },
}

fn load_config(cli: &Cli) -> Result<SweepConfig, String> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
            SweepConfig::parse(&text).map_err(|e| format!("{}: {e}", path.display()))?
        }
        None => SweepConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.master_seed = seed;
    }
    if let Some(trials) = cli.trials {
        cfg.trials = trials;
    }
    if cli.full_scale {
        cfg.trials = FULL_SCALE_TRIALS;
    }
    if let Some(workers) = cli.workers {
        cfg.workers = workers;
    }
    cfg.validate().map_err(|e| e.to_string())?;
    Ok(cfg)
}

fn read_moments(path: &Path) -> Result<SpectralProfile, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let moments = text
        .lines()
        .map(|l| l.split('#').next().unwrap_or("").trim())
        .filter(|l| !l.is_empty())
        .map(|l| l.parse::<f64>().map_err(|e| format!("{}: {l:?}: {e}", path.display())))
        .collect::<Result<Vec<_>, _>>()?;
    SpectralProfile::from_moments(moments).map_err(|e| e.to_string())
}

fn taps_command(delta: f64, kappa: f64, horizon: usize, moments: Option<&Path>, table: bool) -> Result<(), String> {
    let profile = match moments {
        Some(path) => read_moments(path)?,
        None if kappa == 1.0 => equal_eigenvalue_moments(delta, horizon + 2).map_err(|e| e.to_string())?,
        None if !table => {
            let taps = taps_geometric_closed_form(delta, kappa, horizon).map_err(|e| e.to_string())?;
            println!("t,tap");
            for (t, g) in taps.iter().enumerate() {
                println!("{t},{g:e}");
            }
            return Ok(());
        }
        None => asymptotic_moments_geometric(delta, kappa, horizon + 2).map_err(|e| e.to_string())?,
    };
    let tab = tap_recursion(&profile, horizon).map_err(|e| e.to_string())?;
    if table {
        print!("{}", tab.to_text());
    } else {
        println!("t,tap");
        for (t, g) in tab.taps().iter().enumerate() {
            println!("{t},{g:e}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Taps { delta, kappa, horizon, moments, table } => {
            taps_command(*delta, *kappa, *horizon, moments.as_deref(), *table).map(|_| ExitCode::SUCCESS)
        }
        _ => match load_config(&cli) {
            Err(e) => {
                eprintln!("config error: {e}");
                return ExitCode::from(EXIT_CONFIG);
            }
            Ok(cfg) => dispatch(&cli.command, cfg),
        },
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(command: &Command, mut cfg: SweepConfig) -> Result<ExitCode, String> {
    match command {
        Command::Taps { .. } => unreachable!(),
        Command::Run { algorithm, kappa, theta, trial } => {
            let inst = draw_instance(&cfg, *kappa, derive_seed(cfg.master_seed, "trial", *kappa, *trial))
                .map_err(|e| e.to_string())?;
            let taps = sweep_taps(&cfg, *kappa).map_err(|e| e.to_string())?;
            let solver = SolverConfig::new(*algorithm, cfg.iterations, Denoiser::constant(*theta)).with_taps(taps);
            let traj = run(&inst.ensemble, &inst.measurement, &solver, Some(&inst.signal)).map_err(|e| e.to_string())?;
            print!("{}", traj.to_table());
            eprintln!("status: {:?}, final mse {:.3} dB", traj.status, mse_db(traj.final_mse()));
            Ok(if traj.diverged() { ExitCode::from(EXIT_THRESHOLD) } else { ExitCode::SUCCESS })
        }
        Command::Sweep { output } => {
            if let Some(dir) = output {
                cfg.output = dir.clone();
            }
            let result = run_sweep(&cfg).map_err(|e| e.to_string())?;
            write_outputs(&cfg.output, &cfg, &result).map_err(|e| e.to_string())?;
            print!("{}", summary_text(&cfg, &result));
            let failures = result.divergence_failures(cfg.max_diverged_fraction);
            for r in &failures {
                eprintln!("{} at kappa={}: {} of {} trials diverged", r.algorithm, r.kappa, r.diverged, r.trials);
            }
            Ok(if failures.is_empty() { ExitCode::SUCCESS } else { ExitCode::from(EXIT_THRESHOLD) })
        }
        Command::Diagnose { kappa, theta, trial, tolerance } => {
            let inst = draw_instance(&cfg, *kappa, derive_seed(cfg.master_seed, "trial", *kappa, *trial))
                .map_err(|e| e.to_string())?;
            let taps = sweep_taps(&cfg, *kappa).map_err(|e| e.to_string())?;
            let solver = SolverConfig::new(Algorithm::Camp, cfg.iterations, Denoiser::constant(*theta))
                .with_taps(taps.clone())
                .with_history();
            let traj = run(&inst.ensemble, &inst.measurement, &solver, Some(&inst.signal)).map_err(|e| e.to_string())?;
            let decomp = decompose_errors(&traj, &inst.signal, &inst.ensemble);
            let report = verify_m_recursion(&decomp, &inst.ensemble, &taps, &inst.measurement.noise, *tolerance);
            println!("status = {:?}", traj.status);
            println!("m_recursion_max_residual = {:e}", report.max_residual);
            println!("t,mse_db,skewness,excess_kurtosis,ks_distance");
            for (t, h) in decomp.h.iter().enumerate() {
                let mse = traj.mse.get(t).copied().unwrap_or(f64::NAN);
                match gaussianity_report(h, None) {
                    GaussianityReport::Stats { skewness, excess_kurtosis, ks_distance, .. } => {
                        println!("{t},{:.4},{skewness:.4},{excess_kurtosis:.4},{ks_distance:.4}", mse_db(mse))
                    }
                    GaussianityReport::Degenerate => println!("{t},{:.4},degenerate,,", mse_db(mse)),
                }
            }
            Ok(if report.passed { ExitCode::SUCCESS } else { ExitCode::from(EXIT_THRESHOLD) })
        }
    }
}
