use clap::{Parser, Subcommand};
use epibo::commands::{self, CommandOutput, ControlsSource};
use epibo::config::RunConfig;
use epibo::Result;
use std::path::PathBuf;
use std::process::ExitCode;

/// Windowed Bayesian optimization and learned control for epidemic models.
///
/// Exit status: 0 on success, 2 for configuration/input errors, 3 for
/// numerical failures. Set EPIBO_WORKERS to bound the thread count.
#[derive(Debug, Parser)]
#[command(name = "epibo", version)]
struct Cli {
    /// TOML run configuration; every field is optional.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Seed applied to every stage (overrides the config's seeds).
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory (overrides `out_dir`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate the target setting under a control sequence.
    Simulate {
        /// `null`, `constant:U1,U2` or `file:PATH` (a CSV with u1,u2 columns).
        #[arg(long, default_value = "null")]
        controls: ControlsSource,
    },
    /// Optimize one control window from the target setting.
    Optimize {
        /// Optimize the whole horizon as a single window.
        #[arg(long)]
        full: bool,
    },
    /// Collect windowed training pairs for every configured setting.
    Collect {
        /// Keep settings already complete in the output dataset.
        #[arg(long)]
        resume: bool,
    },
    /// Train the control predictor; lists of layers/epochs train a grid.
    Train {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, value_delimiter = ',')]
        layers: Vec<usize>,
        #[arg(long, value_delimiter = ',')]
        epochs: Vec<usize>,
    },
    /// Roll a trained predictor out on the target setting.
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Dataset whose controls are transplanted for a policy comparison.
        #[arg(long)]
        compare: Option<PathBuf>,
    },
    /// Run the optimizer on the synthetic test functions.
    Benchmark,
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if cli.seed.is_some() {
        cfg.seed = cli.seed;
    }
    if let Some(out) = &cli.out {
        cfg.out_dir = out.clone();
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<CommandOutput> {
    let cfg = load_config(&cli)?;
    let out = match cli.command {
        Command::Simulate { controls } => commands::cmd_simulate(&cfg, &controls)?.0,
        Command::Optimize { full } => {
            let (out, r) = commands::cmd_optimize(&cfg, full)?;
            println!("best cost {:.6} after {} evaluations", r.best_value, r.evaluations);
            out
        }
        Command::Collect { resume } => {
            let (out, ds) = commands::cmd_collect(&cfg, resume)?;
            println!("{} pairs from {} settings", ds.len(), ds.labels().len());
            out
        }
        Command::Train { dataset, layers, epochs } => {
            let (out, reports) = commands::cmd_train(&cfg, &dataset, &layers, &epochs)?;
            for (c, r) in &reports {
                println!("layers={} epochs={} final_loss={:.6e}", c.num_layers, c.epochs, r.final_loss);
            }
            out
        }
        Command::Predict { checkpoint, compare } => {
            let (out, rollout, cmp) = commands::cmd_predict(&cfg, &checkpoint, compare.as_deref())?;
            println!("predicted policy cost {:.6}", rollout.total_cost());
            if let Some(cmp) = cmp {
                for s in &cmp.summary {
                    println!("{:>16} {:>12} cost {:.6}", s.label, s.provenance, s.total_cost);
                }
            }
            out
        }
        Command::Benchmark => {
            let (out, stats) = commands::cmd_benchmark(&cfg)?;
            for s in &stats {
                println!("{:>16} d={} mean best {:.6e} (sd {:.3e})", s.function, s.dimension, s.mean_best, s.std_best);
            }
            out
        }
    };
    Ok(out)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(out) => {
            for n in &out.notices {
                eprintln!("{n}");
            }
            for f in &out.files {
                eprintln!("wrote {}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(commands::exit_code(&e) as u8)
        }
    }
}

