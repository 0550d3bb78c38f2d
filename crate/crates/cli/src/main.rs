use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mvtrace::autoencoder::ArchitectureKind;
use mvtrace::eval::MapReduction;
use mvtrace::nn::Activation;
use mvtrace::{Error, Result};
use mvtrace_cli::commands::{self, GlobalArgs};
use mvtrace_cli::config::ArchOverrides;

/// Multi-view latent representations and trace regression on a mesh.
#[derive(Parser)]
#[command(name = "mvtrace", version)]
struct Cli {
    /// JSON config file (a manifest.json from an earlier run works too).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for folds and grid points.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic dataset directory.
    Generate,
    /// Cross-validate one configuration.
    Run(ArchArgs),
    /// Cross-validate a grid of configurations.
    Sweep(ArchArgs),
    /// Recompute the significance map from a run's stored fold maps.
    Map {
        /// Results directory of an earlier `run`.
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        t_crit: Option<f64>,
        /// signed-norm, mean or max-abs
        #[arg(long)]
        reduction: Option<String>,
    },
    /// Print the headers of MVRL or MVNN files.
    Inspect { paths: Vec<PathBuf> },
}

#[derive(Args, Default)]
struct ArchArgs {
    /// mono-task, mono-rest, concat-ae or mdae
    #[arg(long)]
    arch: Option<String>,
    #[arg(long)]
    enc: Option<usize>,
    /// MDAE bottleneck split, e.g. 8,2
    #[arg(long, value_name = "T,R")]
    enc_split: Option<String>,
    #[arg(long)]
    hidden_act: Option<String>,
    #[arg(long)]
    output_act: Option<String>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
}

impl ArchArgs {
    fn overrides(&self) -> Result<ArchOverrides> {
        let split = match &self.enc_split {
            None => None,
            Some(s) => {
                let bad = || Error::config("enc_split", format!("{s:?} is not T,R"));
                let (t, r) = s.split_once(',').ok_or_else(bad)?;
                Some((t.trim().parse().map_err(|_| bad())?, r.trim().parse().map_err(|_| bad())?))
            }
        };
        Ok(ArchOverrides {
            arch: self.arch.as_deref().map(str::parse::<ArchitectureKind>).transpose()?,
            enc: self.enc,
            enc_split: split,
            hidden_act: self.hidden_act.as_deref().map(str::parse::<Activation>).transpose()?,
            output_act: self.output_act.as_deref().map(str::parse::<Activation>).transpose()?,
            epochs: self.epochs,
            batch: self.batch,
            lr: self.lr,
        })
    }
}

fn execute(cli: Cli) -> Result<()> {
    let global = GlobalArgs {
        config: cli.config,
        seed: cli.seed,
        jobs: cli.jobs,
        out: cli.out,
    };
    let report = match cli.command {
        Command::Generate => commands::cmd_generate(&global)?,
        Command::Run(a) => commands::cmd_run(&global, &a.overrides()?)?,
        Command::Sweep(a) => commands::cmd_sweep(&global, &a.overrides()?)?,
        Command::Map { run, t_crit, reduction } => {
            let reduction = reduction
                .map(|r| {
                    serde_json::from_value::<MapReduction>(serde_json::Value::String(r.clone()))
                        .map_err(|_| Error::config("reduction", format!("unknown reduction {r:?}")))
                })
                .transpose()?;
            commands::cmd_map(&global, &run, t_crit, reduction)?
        }
        Command::Inspect { paths } => {
            for line in commands::cmd_inspect(&paths)? {
                println!("{line}");
            }
            return Ok(());
        }
    };
    println!("{report}");
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("MVTRACE_LOG", "warn"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("{}", commands::error_json(&err));
            ExitCode::FAILURE
        }
    }
}
