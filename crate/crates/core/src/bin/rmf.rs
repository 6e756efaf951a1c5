//! `rmf train | sweep | report`.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use rmf_core::harness::{report, run_all, thread_cap, train_agent, Grid, ReportMetric, RunConfig};

#[derive(Parser)]
#[command(name = "rmf", about = "Recurrent model-free off-policy RL experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one agent and write its run directory.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Also write the replay buffer to `<out>/replay.bin`.
        #[arg(long)]
        save_replay: bool,
    },
    /// Run a factorial grid; RMF_THREADS caps concurrent runs.
    Sweep {
        #[arg(long)]
        grid: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print a metric over finished runs as CSV.
    Report {
        #[arg(long)]
        runs: PathBuf,
        /// final | worst10 | best-variant | factor:<rl|encoder|len|inputs|arch>
        #[arg(long)]
        metric: String,
    },
}

fn run(cli: Cli) -> rmf_core::Result<()> {
    match cli.command {
        Command::Train {
            config,
            seed,
            out,
            save_replay,
        } => {
            let mut cfg = RunConfig::from_file(&config)?;
            cfg.seed = seed;
            cfg.out_dir = Some(out.clone());
            let (record, agent, buffer) = train_agent(&cfg)?;
            agent.save(&out.join("agent.bin"))?;
            if save_replay {
                buffer.save(&out.join("replay.bin"))?;
            }
            if let Some(last) = record.curve.last() {
                log::info!("finished: last eval return {}", last.eval_return);
            }
        }
        Command::Sweep { grid, out } => {
            let text = std::fs::read_to_string(&grid)?;
            let runs = Grid::parse(&text)?.expand(&out)?;
            let threads = thread_cap();
            log::info!("{} runs on {threads} threads", runs.len());
            let failed: Vec<_> = run_all(&runs, threads)
                .into_iter()
                .filter_map(|(dir, r)| r.err().map(|e| format!("{}: {e}", dir.display())))
                .collect();
            if !failed.is_empty() {
                return Err(rmf_core::Error::Rejected(format!(
                    "{} of {} runs failed:\n{}",
                    failed.len(),
                    runs.len(),
                    failed.join("\n")
                )));
            }
        }
        Command::Report { runs, metric } => {
            let metric: ReportMetric = metric.parse()?;
            print!("{}", report(&runs, metric)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
