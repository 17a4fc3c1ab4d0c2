//! `tagbook` command-line pipeline: build a source corpus, refine it,
//! compute tag books for query videos, detect events, evaluate rankings,
//! describe videos, and generate synthetic benchmarks.

mod commands;
mod config;
mod formats;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use config::{PipelineConfig, ReductionMethod};
use tagbook::tagprop::HardPriorMode;
use tagbook::Variant;

#[derive(Parser)]
#[command(
    name = "tagbook",
    version,
    about = "Tag-vector video representations and event detection"
)]
struct Cli {
    /// TOML configuration file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for every randomized step.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Only report errors.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a source corpus directory from feature and annotation files.
    Build {
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        annotations: PathBuf,
        #[arg(long)]
        stoplist: Option<PathBuf>,
        #[arg(long)]
        min_df: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Refine the source tag labels and store the result in the corpus.
    Refine {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        k_r: Option<usize>,
    },
    /// Propagate tags to query videos.
    Tagbook {
        #[arg(long)]
        corpus: PathBuf,
        /// Query feature file (video- or frame-level).
        #[arg(long)]
        features: PathBuf,
        #[command(flatten)]
        propagation: PropagationArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build event models and rank tag books.
    Detect {
        #[arg(long)]
        corpus: PathBuf,
        /// Tag books of the videos to rank.
        #[arg(long)]
        tagbooks: PathBuf,
        #[arg(long)]
        events: PathBuf,
        #[arg(long, value_enum)]
        mode: ModeArg,
        /// Training judgments (few-example mode).
        #[arg(long)]
        judgments: Option<PathBuf>,
        /// Tag books of the judged training videos (few-example mode).
        #[arg(long)]
        train_tagbooks: Option<PathBuf>,
        /// Judgments over the ranked videos; writes an evaluation report.
        #[arg(long)]
        truth: Option<PathBuf>,
        #[arg(long, value_enum)]
        reduction: Option<ReductionMethod>,
        /// Reduced dimensionality.
        #[arg(long)]
        size: Option<usize>,
        #[arg(long)]
        stoplist: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score rankings against judgments.
    Eval {
        #[arg(long)]
        rankings: PathBuf,
        #[arg(long)]
        judgments: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Describe videos by their top tags, optionally scoring against reference text.
    Describe {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        tagbooks: PathBuf,
        #[arg(long)]
        kappa: Option<usize>,
        #[arg(long)]
        references: Option<PathBuf>,
        #[arg(long)]
        stoplist: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a synthetic planted-event benchmark.
    Synth {
        /// TOML generator specification (defaults when omitted).
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct PropagationArgs {
    #[arg(long)]
    variant: Option<Variant>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long, value_enum)]
    hard_prior: Option<HardPriorArg>,
}

#[derive(Clone, Copy, ValueEnum)]
enum HardPriorArg {
    Literal,
    FullSet,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Zero,
    Few,
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn init_logging(quiet: bool) {
    let level = if quiet { "error" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
}

fn run(cli: Cli) -> Result<()> {
    let mut config = match &cli.config {
        Some(path) => PipelineConfig::from_file(path)?,
        None => PipelineConfig::default(),
    };
    set(&mut config.seed, cli.seed);
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the thread pool")?;
    }

    match cli.command {
        Command::Build {
            features,
            annotations,
            stoplist,
            min_df,
            out,
        } => {
            set(&mut config.stoplist, stoplist.map(Some));
            set(&mut config.min_df, min_df);
            config.validate()?;
            commands::build(&config, &features, &annotations, &out)
        }
        Command::Refine { corpus, k_r } => {
            set(&mut config.propagation.k_r, k_r);
            config.validate()?;
            commands::refine(&config, &corpus)
        }
        Command::Tagbook {
            corpus,
            features,
            propagation,
            out,
        } => {
            set(&mut config.propagation.variant, propagation.variant);
            set(&mut config.propagation.k, propagation.k);
            set(
                &mut config.propagation.hard_prior_mode,
                propagation.hard_prior.map(|m| match m {
                    HardPriorArg::Literal => HardPriorMode::Literal,
                    HardPriorArg::FullSet => HardPriorMode::FullSet,
                }),
            );
            config.validate()?;
            commands::tagbook(&config, &corpus, &features, &out)
        }
        Command::Detect {
            corpus,
            tagbooks,
            events,
            mode,
            judgments,
            train_tagbooks,
            truth,
            reduction,
            size,
            stoplist,
            out,
        } => {
            set(&mut config.reduction.method, reduction);
            set(&mut config.reduction.size, size);
            set(&mut config.stoplist, stoplist.map(Some));
            config.validate()?;
            let mode = match mode {
                ModeArg::Zero => tagbook::evalkit::DetectionMode::Zero,
                ModeArg::Few => tagbook::evalkit::DetectionMode::Few,
            };
            commands::detect(
                &config,
                &commands::DetectInputs {
                    corpus: &corpus,
                    tagbooks: &tagbooks,
                    events: &events,
                    mode,
                    judgments: judgments.as_deref(),
                    train_tagbooks: train_tagbooks.as_deref(),
                    truth: truth.as_deref(),
                },
                &out,
            )
        }
        Command::Eval {
            rankings,
            judgments,
            out,
        } => commands::eval(&rankings, &judgments, &out),
        Command::Describe {
            corpus,
            tagbooks,
            kappa,
            references,
            stoplist,
            out,
        } => {
            set(&mut config.kappa, kappa);
            set(&mut config.stoplist, stoplist.map(Some));
            config.validate()?;
            commands::describe(&config, &corpus, &tagbooks, references.as_deref(), &out)
        }
        Command::Synth { spec, out } => commands::synth(spec.as_deref(), cli.seed, &out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_logging(cli.quiet);
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("tagbook: error: {err:#}");
            ExitCode::FAILURE
        }
    }
}
