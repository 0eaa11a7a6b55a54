use std::io::{BufRead, IsTerminal};
use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use promptgate_cli::stages::tsne_file_name;
use promptgate_cli::{
    run_detect, run_embed, run_eval, run_ingest, run_pipeline, run_project, run_train, ClassifierSpec, CliError, Overrides,
    PipelineConfig,
};
use promptgate_core::embed::ProviderKind;
use promptgate_core::learn::Family;
use promptgate_core::project::ScatterFormat;
use promptgate_serve::ServiceConfig;

#[derive(Parser)]
#[command(name = "promptgate", version, about = "Embedding-based prompt-injection detection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ProviderArg {
    Remote,
    LocalHash,
}

#[derive(Clone, Copy, ValueEnum)]
enum ScatterArg {
    Svg,
    Csv,
}

#[derive(Args, Clone)]
struct Common {
    /// Pipeline configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for splitting, training and projection. Required unless set in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, value_enum)]
    provider: Option<ProviderArg>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Load, validate, deduplicate and split the corpus.
    Ingest {
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Embed the ingested corpus into the cache.
    Embed {
        #[command(flatten)]
        common: Common,
    },
    /// Train the selected classifiers on the training split.
    Train {
        /// Comma-separated subset of logreg, forest, gbt.
        #[arg(long, value_delimiter = ',')]
        classifiers: Vec<Family>,
        #[command(flatten)]
        common: Common,
    },
    /// Evaluate every trained model on the test split and write the comparison.
    Eval {
        /// Format printed to stdout: markdown, csv or json.
        #[arg(long)]
        format: Option<String>,
        #[command(flatten)]
        common: Common,
    },
    /// PCA and t-SNE scatter plots of the cached embeddings.
    Project {
        /// Comma-separated t-SNE perplexities.
        #[arg(long, value_delimiter = ',')]
        perplexity: Vec<f64>,
        #[arg(long)]
        max_rows: Option<usize>,
        #[arg(long)]
        iterations: Option<usize>,
        #[arg(long, value_enum, default_value = "svg")]
        scatter_format: ScatterArg,
        #[command(flatten)]
        common: Common,
    },
    /// Serve a trained model over HTTP.
    Serve {
        #[arg(long, env = "PROMPTGATE_LISTEN", default_value = "127.0.0.1:8080")]
        listen: SocketAddr,
        #[arg(long, env = "PROMPTGATE_MODEL")]
        model: PathBuf,
        #[arg(long, env = "PROMPTGATE_THRESHOLD")]
        threshold: Option<f64>,
        /// Answer provider failures with a degraded "malicious" verdict instead of 502.
        #[arg(long)]
        fail_closed: bool,
        #[arg(long, default_value_t = promptgate_serve::DEFAULT_MAX_BODY_BYTES)]
        max_body_bytes: usize,
        #[arg(long, default_value_t = 10)]
        request_timeout_secs: u64,
        #[command(flatten)]
        common: Common,
    },
    /// Score prompts offline. Reads one prompt per line from stdin when none are given.
    Detect {
        #[arg(long, env = "PROMPTGATE_MODEL")]
        model: PathBuf,
        #[arg(long, env = "PROMPTGATE_THRESHOLD")]
        threshold: Option<f64>,
        prompts: Vec<String>,
        #[command(flatten)]
        common: Common,
    },
    /// ingest, embed, train and eval in one run.
    Pipeline {
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long, value_delimiter = ',')]
        classifiers: Vec<Family>,
        #[arg(long)]
        format: Option<String>,
        #[command(flatten)]
        common: Common,
    },
}

impl Common {
    fn resolve(&self, manifest: Option<PathBuf>) -> Result<PipelineConfig, CliError> {
        let o = Overrides {
            manifest,
            seed: self.seed,
            provider: self.provider.map(|p| match p {
                ProviderArg::Remote => ProviderKind::Remote,
                ProviderArg::LocalHash => ProviderKind::LocalHash,
            }),
            out: self.out.clone(),
        };
        PipelineConfig::resolve(self.config.as_deref(), &o)
    }
}

fn select(cfg: &mut PipelineConfig, families: &[Family]) {
    if !families.is_empty() {
        cfg.classifiers.retain(|s| families.contains(&s.family()));
        for f in families {
            if !cfg.classifiers.iter().any(|s| s.family() == *f) {
                cfg.classifiers.push(ClassifierSpec::Family(*f));
            }
        }
    }
}

fn set_threshold(cfg: &mut PipelineConfig, threshold: Option<f64>) -> Result<(), CliError> {
    if let Some(t) = threshold {
        if !(0.0..=1.0).contains(&t) {
            return Err(CliError::Usage(format!("threshold {t} is outside [0, 1]")));
        }
        cfg.threshold = t;
    }
    Ok(())
}

fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Ingest { manifest, common } => {
            let cfg = common.resolve(manifest)?;
            println!("{}", run_ingest(&cfg)?);
        }
        Command::Embed { common } => {
            let cfg = common.resolve(None)?;
            let s = run_embed(&cfg)?;
            println!("embedded {} records with {} into {}", s.records, s.provider_tag, s.cache_path.display());
        }
        Command::Train { classifiers, common } => {
            let mut cfg = common.resolve(None)?;
            select(&mut cfg, &classifiers);
            for m in run_train(&cfg)? {
                println!("{} ({}) -> {}", m.family, m.provider_tag, m.path.display());
            }
        }
        Command::Eval { format, common } => {
            let mut cfg = common.resolve(None)?;
            if let Some(f) = format {
                cfg.report_format = f;
            }
            print!("{}", run_eval(&cfg)?.rendered);
        }
        Command::Project {
            perplexity,
            max_rows,
            iterations,
            scatter_format,
            common,
        } => {
            let mut cfg = common.resolve(None)?;
            if !perplexity.is_empty() {
                cfg.projection.perplexities = perplexity;
            }
            if let Some(m) = max_rows {
                cfg.projection.max_rows = m;
            }
            if let Some(i) = iterations {
                cfg.projection.iterations = i;
            }
            let format = match scatter_format {
                ScatterArg::Svg => ScatterFormat::Svg,
                ScatterArg::Csv => ScatterFormat::Csv,
            };
            let s = run_project(&cfg, format)?;
            let [a, b] = s.variance.explained_variance_ratio;
            println!("projected {} rows; PCA explained variance {a:.4}, {b:.4}", s.rows);
            for r in &s.sweep {
                println!(
                    "perplexity {}: 10-NN preservation {:.3}, KL {:.4} -> {}",
                    r.perplexity,
                    r.knn_preservation,
                    r.kl_divergence,
                    tsne_file_name(r.perplexity, format)
                );
            }
        }
        Command::Serve {
            listen,
            model,
            threshold,
            fail_closed,
            max_body_bytes,
            request_timeout_secs,
            common,
        } => {
            let mut cfg = common.resolve(None)?;
            set_threshold(&mut cfg, threshold)?;
            let mut service = ServiceConfig::new(listen, model, cfg.provider.clone());
            service.threshold = cfg.threshold;
            service.fail_closed = fail_closed;
            service.max_body_bytes = max_body_bytes;
            service.request_timeout = Duration::from_secs(request_timeout_secs);
            let runtime = tokio::runtime::Runtime::new().map_err(|e| CliError::Stage {
                stage: "serve",
                source: e.into(),
            })?;
            runtime.block_on(promptgate_serve::run(service)).map_err(|e| match e {
                promptgate_serve::ServeError::MissingModel(_) => CliError::Usage(e.to_string()),
                other => CliError::Stage {
                    stage: "serve",
                    source: other.into(),
                },
            })?;
        }
        Command::Detect {
            model,
            threshold,
            mut prompts,
            common,
        } => {
            let mut cfg = common.resolve(None)?;
            set_threshold(&mut cfg, threshold)?;
            if prompts.is_empty() {
                let stdin = std::io::stdin();
                if stdin.is_terminal() {
                    return Err(CliError::Usage("no prompts given on the command line or stdin".into()));
                }
                for line in stdin.lock().lines() {
                    let line = line.map_err(|e| CliError::Usage(format!("cannot read stdin: {e}")))?;
                    if !line.trim().is_empty() {
                        prompts.push(line);
                    }
                }
            }
            for d in run_detect(&cfg, &model, &prompts)? {
                println!("{}", serde_json::json!({"index": d.index, "score": d.score, "label": d.label}));
            }
        }
        Command::Pipeline {
            manifest,
            classifiers,
            format,
            common,
        } => {
            let mut cfg = common.resolve(manifest)?;
            select(&mut cfg, &classifiers);
            if let Some(f) = format {
                cfg.report_format = f;
            }
            cfg.report_format()?;
            let s = run_pipeline(&cfg)?;
            eprintln!("{}", s.ingest);
            eprintln!("embedded {} records with {}", s.embed.records, s.embed.provider_tag);
            print!("{}", s.eval.rendered);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("warn")),
        )
        .init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if matches!(e, CliError::Usage(_)) {
                eprintln!("\nRun `promptgate <subcommand> --help` for usage.");
            }
            ExitCode::from(e.exit_code())
        }
    }
}
