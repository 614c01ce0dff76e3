use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use edgecdn::harness::{
    load_scenario, optimality_gap_experiment, run_experiment, write_csv, write_outputs, GapOptions, Method,
    ScenarioSpec,
};
use edgecdn::neural::gradient_check_suite;
use edgecdn::Result;

#[derive(Parser)]
#[command(name = "edgecdn", about = "Edge cache placement and migration simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run strategies on a scenario and write metrics.csv and summary.csv.
    Simulate {
        /// TOML scenario; defaults apply to anything left out.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', default_value = "drlcm,nomig,firstfit,bestfit,worstfit,random")]
        strategies: Vec<String>,
        /// Overrides agent.episodes from the scenario.
        #[arg(long)]
        episodes: Option<u64>,
        /// Overrides the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Train on a small scenario and measure the gap to the exhaustive optimum.
    Gap {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', default_value = "0,2000,4000,6000,8000,10000")]
        checkpoints: Vec<u64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 2)]
        horizon: usize,
        #[arg(long, default_value_t = 5)]
        samples: usize,
        /// Audit placement constraints after every training action.
        #[arg(long)]
        check_constraints: bool,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Compare analytic and finite-difference gradients on random small networks.
    CheckGradients {
        #[arg(long, default_value_t = 100)]
        configs: usize,
        #[arg(long, default_value_t = 1e-4)]
        epsilon: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn scenario(config: Option<PathBuf>, fallback: ScenarioSpec) -> Result<ScenarioSpec> {
    match config {
        Some(p) => load_scenario(&p),
        None => Ok(fallback),
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate { config, strategies, episodes, seed, out } => {
            let spec = scenario(config, ScenarioSpec::default())?;
            let methods = strategies.iter().map(|s| Method::parse(s.trim())).collect::<Result<Vec<_>>>()?;
            let episodes = episodes.unwrap_or(spec.agent.episodes);
            let result = run_experiment(&spec, &methods, episodes, seed.unwrap_or(spec.seed))?;
            write_outputs(&result, &out)?;
            for row in &result.summary {
                println!(
                    "{:<9} cost {:>12.1}  power {:>10.1}  delay {:>8.3}  improvement {}",
                    row.strategy,
                    row.final_cost,
                    row.power,
                    row.access_delay,
                    row.improvement_pct.map(|p| format!("{p:.1}%")).unwrap_or_else(|| "-".into())
                );
            }
        }
        Command::Gap { config, checkpoints, seed, horizon, samples, check_constraints, out } => {
            let spec = scenario(config, ScenarioSpec::small())?;
            let options = GapOptions { horizon, samples, check_constraints, ..GapOptions::default() };
            let trace = optimality_gap_experiment(&spec, &checkpoints, seed.unwrap_or(spec.seed), options)?;
            std::fs::create_dir_all(&out)?;
            write_csv(&trace, std::fs::File::create(out.join("gap.csv"))?)?;
            for p in &trace {
                println!("episode {:>6}: agent {:>10.3}  optimum {:>10.3}  gap {:>10.3}", p.episode, p.agent_cost, p.optimal_cost, p.gap);
            }
        }
        Command::CheckGradients { configs, epsilon, seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let report = gradient_check_suite(configs, epsilon, &mut rng)?;
            println!("{} configurations, max relative error {:.3e}", report.configurations, report.max_relative_error);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().filter_or("EDGECDN_LOG", "info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
