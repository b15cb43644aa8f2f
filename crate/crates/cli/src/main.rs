mod commands;
mod config;
mod context;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::config::{CliConfig, Overrides};
use crate::context::RunContext;
use crate::error::CliResult;

#[derive(Parser)]
#[command(
    name = "lppgate",
    version,
    about = "Trust-or-escalate gating for LLM classification outputs"
)]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct GlobalArgs {
    /// JSON configuration file; flags take precedence over its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Review-to-misclassification cost ratio r = c_rev / c_mis.
    #[arg(long, global = true)]
    cost_ratio: Option<f64>,
    /// Threshold search range as LO,HI.
    #[arg(long, global = true)]
    tau_range: Option<String>,
    #[arg(long, global = true)]
    tau_step: Option<f64>,
    /// Comma-separated feature families to include.
    #[arg(long, global = true)]
    families: Option<String>,
    /// openai-mod or multimodal; sets the number of test negatives.
    #[arg(long, global = true)]
    dataset_profile: Option<String>,
    /// openai-compatible or stub.
    #[arg(long, global = true)]
    provider: Option<String>,
    /// Use the stub provider with this JSONL fixture.
    #[arg(long, global = true)]
    stub: Option<PathBuf>,
    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,
}

#[derive(Args)]
struct DataArgs {
    #[arg(long)]
    features: PathBuf,
    #[arg(long)]
    labels: PathBuf,
    /// Directory holding train.txt, validation.txt and test.txt.
    #[arg(long)]
    split_dir: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic trace corpus with known labels.
    Synth {
        #[arg(long)]
        traces: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        n_items: Option<usize>,
    },
    /// Query an LLM provider for every item and write response traces.
    Generate {
        /// JSONL with one {"item_id", "fields"} object per line.
        #[arg(long)]
        items: PathBuf,
        #[arg(long)]
        traces: PathBuf,
        /// text-direct, text-cot, multimodal-direct or multimodal-cot.
        #[arg(long)]
        template: Option<String>,
        #[arg(long)]
        concurrency: Option<usize>,
    },
    /// Compute feature vectors from response traces.
    Extract {
        #[arg(long)]
        traces: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Stratified train/validation/test split.
    Split {
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Resample, select hyperparameters and fit the calibrated meta-model.
    Train {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        model: PathBuf,
    },
    /// Choose the cost-minimizing threshold on validation and store it in the model.
    Sweep {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        model: PathBuf,
        /// Output model path; defaults to updating --model in place.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare the meta-model with single-feature baselines on test.
    Evaluate {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Retrain without each listed family and report the cost change.
    Ablate {
        #[command(flatten)]
        data: DataArgs,
        /// Family to drop; repeatable. Defaults to every included family.
        #[arg(long = "family")]
        family: Vec<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Cost at alternative review-cost ratios for the frozen operating point.
    Sensitivity {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the effective configuration as JSON.
    Config,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Synth { .. } => "synth",
            Command::Generate { .. } => "generate",
            Command::Extract { .. } => "extract",
            Command::Split { .. } => "split",
            Command::Train { .. } => "train",
            Command::Sweep { .. } => "sweep",
            Command::Evaluate { .. } => "evaluate",
            Command::Ablate { .. } => "ablate",
            Command::Sensitivity { .. } => "sensitivity",
            Command::Config => "config",
        }
    }
}

fn effective_config(g: &GlobalArgs) -> CliResult<CliConfig> {
    let mut cfg = CliConfig::load(g.config.as_deref())?;
    cfg.apply(&Overrides {
        seed: g.seed,
        cost_ratio: g.cost_ratio,
        tau_range: g.tau_range.clone(),
        tau_step: g.tau_step,
        families: g.families.clone(),
        dataset_profile: g.dataset_profile.clone(),
        provider: g.provider.clone(),
        stub: g.stub.clone(),
    })?;
    Ok(cfg)
}

fn execute(cli: Cli) -> CliResult<()> {
    let mut cfg = effective_config(&cli.global)?;
    match &cli.command {
        Command::Synth {
            n_items: Some(n), ..
        } => cfg.synth.n_items = *n,
        Command::Generate {
            template,
            concurrency,
            ..
        } => {
            if let Some(t) = template {
                cfg.gateway.template = t.parse()?;
            }
            if let Some(c) = concurrency {
                cfg.gateway.concurrency = *c;
            }
        }
        Command::Config => {
            println!(
                "{}",
                serde_json::to_string_pretty(&cfg).expect("config serializes")
            );
            return Ok(());
        }
        _ => {}
    }
    cfg.validate()?;

    let mut ctx = RunContext::new(cli.command.name(), &cfg, cfg.pipeline.seed);
    let result = match &cli.command {
        Command::Synth { traces, labels, .. } => commands::synth(&mut ctx, &cfg, traces, labels),
        Command::Generate { items, traces, .. } => {
            commands::generate_traces(&mut ctx, &cfg, items, traces)
        }
        Command::Extract { traces, out } => commands::extract(&mut ctx, &cfg, traces, out),
        Command::Split {
            features,
            labels,
            out_dir,
        } => commands::split(&mut ctx, &cfg, features, labels, out_dir),
        Command::Train { data, model } => commands::train(
            &mut ctx,
            &cfg,
            &data.features,
            &data.labels,
            &data.split_dir,
            model,
        ),
        Command::Sweep { data, model, out } => {
            let out = out.clone().unwrap_or_else(|| model.clone());
            commands::sweep(
                &mut ctx,
                &cfg,
                model,
                &data.features,
                &data.labels,
                &data.split_dir,
                &out,
            )
        }
        Command::Evaluate {
            data,
            model,
            out_dir,
        } => commands::evaluate(
            &mut ctx,
            &cfg,
            model,
            &data.features,
            &data.labels,
            &data.split_dir,
            out_dir,
        ),
        Command::Ablate { data, family, out } => commands::ablate(
            &mut ctx,
            &cfg,
            &data.features,
            &data.labels,
            &data.split_dir,
            family,
            out,
        ),
        Command::Sensitivity { data, model, out } => commands::sensitivity(
            &mut ctx,
            &cfg,
            model,
            &data.features,
            &data.labels,
            &data.split_dir,
            out,
        ),
        Command::Config => unreachable!("handled above"),
    };
    match result {
        Ok(manifest) => ctx.finish(&manifest),
        Err(e) => {
            ctx.cleanup();
            Err(e)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.global.verbose {
        tracing::Level::INFO
    } else {
        tracing::Level::WARN
    };
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_max_level(level)
        .init();
    let name = cli.command.name();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json(name));
            ExitCode::FAILURE
        }
    }
}
