use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use vpnf::store;
use vpnf::training::{ModelKind, SplitMode, VALIDATION_COUNT};

/// FOA room impulse response interpolation with neural fields.
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct ConfigArgs {
    /// JSON experiment config (defaults when omitted).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dotted `key=value` override, e.g. `train.iterations=2000`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one FOA dataset per configured room.
    Simulate {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Output directory (default: config output_dir, else $VPNF_OUTPUT_ROOT).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Draw train / validation / evaluation positions.
    Split {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, default_value = "random-volume")]
        mode: SplitMode,
        /// Number of training positions D.
        #[arg(long)]
        train_count: usize,
        #[arg(long, default_value_t = VALIDATION_COUNT)]
        validation_count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train one model; writes model.vpnf, model.json and train_log.csv.
    Train {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        split: PathBuf,
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Shorthand for `--set train.model=...`.
        #[arg(long)]
        model: Option<ModelKind>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a checkpoint on the split's evaluation positions.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        split: PathBuf,
        /// Model kind, if the checkpoint has no sidecar.
        #[arg(long)]
        model: Option<ModelKind>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Average report CSVs over rooms into summary and plot-data tables.
    Report {
        #[arg(required = true)]
        reports: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the default configuration.
    Defaults,
}

fn run(cli: Cli) -> vpnf::Result<()> {
    match cli.command {
        Command::Simulate { cfg, out } => {
            let cfg = store::load_config(cfg.config.as_deref(), &cfg.overrides)?;
            let dir = out.unwrap_or_else(|| cfg.output_dir());
            for e in store::cmd_simulate(&cfg, &dir)? {
                println!("{}", dir.join(&e.file).display());
            }
        }
        Command::Split {
            dataset,
            mode,
            train_count,
            validation_count,
            seed,
            out,
        } => {
            let s = store::cmd_split(&dataset, mode, train_count, validation_count, seed, &out)?;
            println!(
                "train {} / validation {} / evaluation {}",
                s.train.len(),
                s.validation.len(),
                s.evaluation.len()
            );
        }
        Command::Train {
            dataset,
            split,
            cfg,
            model,
            out,
        } => {
            let mut exp = store::load_config(cfg.config.as_deref(), &cfg.overrides)?;
            if let Some(m) = model {
                exp.train.model = m;
            }
            let rec = store::cmd_train(&dataset, &split, &exp.train, &out)?;
            let best = rec.history[rec.best_index];
            println!(
                "{}: best validation W NMSE {:.2} dB at iteration {}",
                rec.config.model, best.nmse_w_db, best.iteration
            );
        }
        Command::Evaluate {
            checkpoint,
            dataset,
            split,
            model,
            out,
        } => {
            let r = store::cmd_evaluate(&checkpoint, &dataset, &split, model, &out)?;
            println!(
                "{} NMSE W {:.2} dB, XYZ {:.2} dB; PCC W {:.3}, XYZ {:.3}",
                r.model, r.nmse_w_db, r.nmse_xyz_db, r.pcc_w, r.pcc_xyz
            );
        }
        Command::Report { reports, out } => {
            let rows = store::cmd_report(&reports, &out)?;
            print!("{}", store::format_table(&rows));
        }
        Command::Defaults => println!("{}", store::cmd_defaults()?),
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
