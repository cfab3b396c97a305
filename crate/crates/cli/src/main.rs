use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use ssfl_cli::{run_experiment, run_mask_study, write_bundle, write_mask_study, ExperimentConfig};

/// Sparse federated learning simulator.
#[derive(Parser)]
#[command(name = "ssfl", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every variant and seed of an experiment and write the result files.
    Run(RunArgs),
    /// Sweep the number of aggregated minibatches and report mask error.
    MaskStudy(RunArgs),
    /// Parse and validate a config, then print it with defaults filled in.
    Validate {
        config: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    config: PathBuf,
    /// Run only this seed instead of the configured list.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; overrides the config's output.dir.
    #[arg(long, env = "SSFL_OUT_DIR")]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    jobs: Option<usize>,
}

impl RunArgs {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig::load(&self.config)?;
        if let Some(seed) = self.seed {
            cfg.seeds = vec![seed];
        }
        if let Some(out) = &self.out {
            cfg.output.dir = out.clone();
        }
        if self.jobs == Some(0) {
            anyhow::bail!("--jobs: must be at least 1");
        }
        Ok(cfg)
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run(args) => {
            let cfg = args.load()?;
            let bundle = run_experiment(&cfg, args.jobs)?;
            for path in write_bundle(&bundle, &cfg.output.dir)? {
                println!("{}", path.display());
            }
            for v in &cfg.variants {
                let accs: Vec<f64> = bundle.runs_of(*v).map(|r| r.final_metrics().global_acc).collect();
                let mean = accs.iter().sum::<f64>() / accs.len() as f64;
                eprintln!("{v:>14}: final global accuracy {mean:.4} over {} seed(s)", accs.len());
            }
        }
        Command::MaskStudy(args) => {
            let cfg = args.load()?;
            let rows = run_mask_study(&cfg, args.jobs)?;
            for path in write_mask_study(&cfg, &rows, &cfg.output.dir)? {
                println!("{}", path.display());
            }
        }
        Command::Validate { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            print!("{}", cfg.to_json());
        }
    }
    Ok(())
}
