use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use sawlab::env::generate_dataset;
use sawlab::harness::{
    aggregate_dir, evaluate, run_offline, run_offline_to_online, Agent, RunConfig, RunOutput,
};
use sawlab::{dataset, BehaviorPolicyKind, Env, Error};

#[derive(Parser)]
#[command(
    name = "sawlab",
    version,
    about = "Offline RL experiments on small control tasks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate an offline dataset and write it to a file.
    GenData {
        #[arg(long)]
        env: String,
        #[arg(long)]
        kind: BehaviorPolicyKind,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train offline from a config file; trailing `--key=value` pairs override it.
    Train {
        config: PathBuf,
        #[arg(trailing_var_arg = true, allow_hyphen_values = true)]
        overrides: Vec<String>,
    },
    /// Fine-tune a checkpoint online with mixed offline and online batches.
    Finetune {
        checkpoint: PathBuf,
        config: PathBuf,
        #[arg(trailing_var_arg = true, allow_hyphen_values = true)]
        overrides: Vec<String>,
    },
    /// Evaluate a checkpoint.
    Eval {
        checkpoint: PathBuf,
        #[arg(long)]
        env: String,
        #[arg(long, default_value_t = 10)]
        episodes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Aggregate every metrics file under a directory into a report.
    Report {
        dir: PathBuf,
        #[arg(long, default_value_t = 10)]
        final_evals: usize,
    },
}

fn load_config(path: &Path, overrides: &[String]) -> sawlab::Result<RunConfig> {
    let mut config = RunConfig::from_file(path)?;
    config.apply_seed_env()?;
    config.apply_overrides(overrides)?;
    Ok(config)
}

fn print_run(out: &RunOutput) {
    print!("{}", out.report.to_table());
    println!("results: {}", out.dir.display());
}

fn run(command: Command) -> sawlab::Result<()> {
    match command {
        Command::GenData {
            env,
            kind,
            n,
            seed,
            out,
        } => {
            let env = Env::by_name(&env)?;
            let data = generate_dataset(&env, kind, n, seed)?;
            dataset::save(&data, &out)?;
            println!("wrote {} transitions to {}", data.len(), out.display());
        }
        Command::Train { config, overrides } => {
            print_run(&run_offline(&load_config(&config, &overrides)?)?);
        }
        Command::Finetune {
            checkpoint,
            config,
            overrides,
        } => {
            let config = load_config(&config, &overrides)?;
            print_run(&run_offline_to_online(&config, &checkpoint)?);
        }
        Command::Eval {
            checkpoint,
            env,
            episodes,
            seed,
        } => {
            let env = Env::by_name(&env)?;
            let (mut agent, _) = Agent::load(&checkpoint)?;
            if agent.obs_dim() != env.spec().obs_dim {
                return Err(Error::Dimension(format!(
                    "checkpoint observation size {} does not match {}",
                    agent.obs_dim(),
                    env.name()
                )));
            }
            let result = evaluate(&mut agent, &env, episodes, seed)?;
            println!(
                "mean_return={} normalized_score={}",
                result.mean_return, result.normalized_score
            );
        }
        Command::Report { dir, final_evals } => {
            if final_evals == 0 {
                return Err(Error::InvalidArgument("final_evals must be >= 1".into()));
            }
            let report = aggregate_dir(&dir, final_evals)?;
            report.write(&dir)?;
            print!("{}", report.to_table());
        }
    }
    Ok(())
}

fn one_line(message: &str) -> String {
    message.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.to_string();
            let first = text.lines().next().unwrap_or_default();
            let first = first.strip_prefix("error: ").unwrap_or(first);
            eprintln!("error: kind=usage message={}", one_line(first));
            return ExitCode::from(2);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!(
                "error: kind={} message={}",
                e.kind(),
                one_line(&e.to_string())
            );
            ExitCode::FAILURE
        }
    }
}
