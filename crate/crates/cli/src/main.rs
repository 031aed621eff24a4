use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use descentlab_cli::config::{load_config, Overrides, Profile, SweepFamily};
use descentlab_cli::{
    cmd_eval_knn_dat, cmd_eval_roc_auc, cmd_generate, cmd_plot, cmd_sweep, metric_rows_csv, parse_seed_list,
    resolve_parallelism, CliError, PlotRequest,
};

/// Descent-curve experiments for under-complete autoencoders.
#[derive(Parser)]
#[command(name = "descentlab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the datasets a config describes.
    Generate(Common),
    /// Train models along one axis and aggregate curves.
    Sweep {
        #[command(subcommand)]
        family: Family,
    },
    /// Score exported results.
    Eval {
        #[command(subcommand)]
        metric: Metric,
    },
    /// Render curve.csv files as an SVG line chart.
    Plot {
        /// One or more curve.csv files.
        #[arg(long = "input", short = 'i', required = true, num_args = 1..)]
        inputs: Vec<PathBuf>,
        #[arg(long, default_value = "plot.svg")]
        out: PathBuf,
        /// Comma-separated subset of train, test, roc_auc.
        #[arg(long, default_value = "train,test", value_delimiter = ',')]
        series: Vec<String>,
        #[arg(long)]
        log_y: bool,
        #[arg(long)]
        title: Option<String>,
    },
    /// Print the fully defaulted config.
    Config(Common),
}

#[derive(Subcommand)]
enum Family {
    ModelWise(SweepArgs),
    EpochWise(SweepArgs),
    SampleWise(SweepArgs),
}

#[derive(Subcommand)]
enum Metric {
    /// ROC-AUC from a file with score and label columns.
    RocAuc {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value = "score")]
        score_column: String,
        #[arg(long, default_value = "label")]
        label_column: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// KNN-DAT from an embeddings file with z0.. and batch columns.
    KnnDat {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value = "batch")]
        batch_column: String,
        #[arg(long, default_value_t = 10)]
        k: usize,
        /// Also score every other batch against this one.
        #[arg(long)]
        source_batch: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    profile: Option<Profile>,
    /// Comma-separated seeds; `a..b` expands to a half-open range.
    // Fully qualified so clap parses one value instead of a list of values.
    #[arg(long, value_parser = parse_seed_list)]
    seed_list: Option<std::vec::Vec<u64>>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    parallelism: Option<usize>,
    /// Suppress per-run progress lines.
    #[arg(long)]
    quiet: bool,
}

fn overrides(c: &Common, family: Option<SweepFamily>) -> Overrides {
    Overrides {
        profile: c.profile,
        out: c.out.clone(),
        parallelism: None,
        seeds: c.seed_list.clone(),
        family,
    }
}

fn write_or_print(out: Option<&PathBuf>, text: &str) -> Result<(), CliError> {
    match out {
        Some(p) => std::fs::write(p, text).map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Generate(c) => {
            let cfg = load_config(&c.config, &overrides(&c, None))?;
            for p in cmd_generate(&cfg)? {
                println!("{}", p.display());
            }
        }
        Command::Config(c) => {
            let cfg = load_config(&c.config, &overrides(&c, None))?;
            print!("{}", cfg.to_toml());
        }
        Command::Sweep { family } => {
            let (fam, args) = match family {
                Family::ModelWise(a) => (SweepFamily::ModelWise, a),
                Family::EpochWise(a) => (SweepFamily::EpochWise, a),
                Family::SampleWise(a) => (SweepFamily::SampleWise, a),
            };
            let cfg = load_config(&args.common.config, &overrides(&args.common, Some(fam)))?;
            let env = std::env::var("DESCENTLAB_THREADS").ok();
            let parallelism = resolve_parallelism(args.parallelism, env.as_deref(), cfg.sweep.parallelism)?;
            let state = cmd_sweep(&cfg, parallelism, args.quiet)?;
            if state == "partial" {
                eprintln!(
                    "warning: some runs failed; see {}",
                    cfg.out.join("status.json").display()
                );
            }
            println!("{}", cfg.out.display());
        }
        Command::Eval { metric } => match metric {
            Metric::RocAuc {
                input,
                score_column,
                label_column,
                out,
            } => {
                let rows = cmd_eval_roc_auc(&input, &score_column, &label_column)?;
                write_or_print(out.as_ref(), &metric_rows_csv(&rows))?;
            }
            Metric::KnnDat {
                input,
                batch_column,
                k,
                source_batch,
                out,
            } => {
                let rows = cmd_eval_knn_dat(&input, &batch_column, k, source_batch.as_deref())?;
                write_or_print(out.as_ref(), &metric_rows_csv(&rows))?;
            }
        },
        Command::Plot {
            inputs,
            out,
            series,
            log_y,
            title,
        } => {
            let svg = cmd_plot(&PlotRequest {
                inputs: &inputs,
                series: &series,
                log_y,
                title,
            })?;
            write_or_print(Some(&out), &svg)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
