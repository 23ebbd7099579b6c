//! `pointmanifold` command-line driver.

mod commands;
mod config;
mod report;

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

/// Failures mapped onto process exit codes.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Lib(pointmanifold::Error),
}

impl From<pointmanifold::Error> for CliError {
    fn from(e: pointmanifold::Error) -> Self {
        CliError::Lib(e)
    }
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Lib(e) if e.is_numerical() => 4,
            CliError::Lib(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Lib(e) => write!(f, "{e}"),
        }
    }
}

#[derive(Parser)]
#[command(
    name = "pointmanifold",
    version,
    about = "Manifold-augmented point-cloud classification"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic shape dataset with an 80/20 split.
    Gen {
        #[arg(long, default_value_t = 8)]
        classes: usize,
        #[arg(long = "per_class", default_value_t = 50)]
        per_class: usize,
        #[arg(long = "n_points", default_value_t = 256)]
        n_points: usize,
        #[arg(long, default_value_t = 0.02)]
        noise: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Cloud file format: xyz or pmc.
        #[arg(long, default_value = "xyz")]
        format: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compute and cache per-cloud embeddings.
    Embed {
        #[arg(long)]
        manifest: PathBuf,
        /// lle or pca.
        #[arg(long, default_value = "lle")]
        method: String,
        #[arg(long, default_value_t = 12)]
        k: usize,
        #[arg(long, default_value_t = 2)]
        d: usize,
        /// Cache directory (default: `embeddings` next to the manifest).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train a model and write a run directory.
    Train {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Evaluate a checkpoint on the test split and print metrics JSON.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        /// Run configuration (default: `config.txt` next to the checkpoint).
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        cache: Option<PathBuf>,
        /// Also write the JSON to this file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train the six-row ablation grid and write one CSV.
    Ablate {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Summarize a run or ablation directory.
    Report {
        #[arg(long)]
        run: PathBuf,
        /// Also write an accuracy-vs-epoch SVG plot.
        #[arg(long)]
        svg: bool,
    },
}

/// Configuration file plus one flag per configuration key.
#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Embedding cache directory (default: `embeddings` next to the manifest).
    #[arg(long)]
    cache: Option<PathBuf>,
    #[arg(long)]
    profile: Option<String>,
    #[arg(long)]
    augmentation: Option<String>,
    #[arg(long)]
    epochs: Option<String>,
    #[arg(long = "batch_size")]
    batch_size: Option<String>,
    #[arg(long)]
    lr0: Option<String>,
    #[arg(long)]
    momentum: Option<String>,
    #[arg(long)]
    dropout: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long = "k_edgeconv")]
    k_edgeconv: Option<String>,
    #[arg(long = "k_lle")]
    k_lle: Option<String>,
    #[arg(long)]
    t: Option<String>,
    #[arg(long = "edgeconv_widths")]
    edgeconv_widths: Option<String>,
    #[arg(long = "embedding_width")]
    embedding_width: Option<String>,
    #[arg(long = "head_widths")]
    head_widths: Option<String>,
    #[arg(long = "num_classes")]
    num_classes: Option<String>,
    #[arg(long = "mp_planes")]
    mp_planes: Option<String>,
    #[arg(long = "dynamic_graph")]
    dynamic_graph: Option<String>,
}

impl RunArgs {
    fn overrides(&self) -> BTreeMap<String, String> {
        let fields = [
            ("profile", &self.profile),
            ("augmentation", &self.augmentation),
            ("epochs", &self.epochs),
            ("batch_size", &self.batch_size),
            ("lr0", &self.lr0),
            ("momentum", &self.momentum),
            ("dropout", &self.dropout),
            ("seed", &self.seed),
            ("k_edgeconv", &self.k_edgeconv),
            ("k_lle", &self.k_lle),
            ("t", &self.t),
            ("edgeconv_widths", &self.edgeconv_widths),
            ("embedding_width", &self.embedding_width),
            ("head_widths", &self.head_widths),
            ("num_classes", &self.num_classes),
            ("mp_planes", &self.mp_planes),
            ("dynamic_graph", &self.dynamic_graph),
        ];
        debug_assert_eq!(fields.len(), config::KEYS.len());
        fields
            .into_iter()
            .filter_map(|(k, v)| v.as_ref().map(|v| (k.to_string(), v.clone())))
            .collect()
    }
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(value) = std::env::var("PM_THREADS") else {
        return Ok(());
    };
    let threads: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| {
            CliError::Usage(format!(
                "PM_THREADS must be a positive integer, got '{value}'"
            ))
        })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| CliError::Usage(format!("cannot configure {threads} threads: {e}")))
}

fn run(cli: Cli) -> Result<(), CliError> {
    configure_threads()?;
    match cli.command {
        Command::Gen {
            classes,
            per_class,
            n_points,
            noise,
            seed,
            format,
            out,
        } => commands::gen(classes, per_class, n_points, noise, seed, &format, &out),
        Command::Embed {
            manifest,
            method,
            k,
            d,
            out,
        } => commands::embed(&manifest, &method, k, d, out.as_deref()),
        Command::Train { manifest, out, run } => commands::train(
            &manifest,
            run.config.as_deref(),
            &run.overrides(),
            run.cache.as_deref(),
            &out,
        ),
        Command::Eval {
            checkpoint,
            manifest,
            config,
            cache,
            out,
        } => commands::eval(
            &checkpoint,
            &manifest,
            config.as_deref(),
            cache.as_deref(),
            out.as_deref(),
        ),
        Command::Ablate { manifest, out, run } => commands::ablate(
            &manifest,
            run.config.as_deref(),
            &run.overrides(),
            run.cache.as_deref(),
            &out,
        ),
        Command::Report { run, svg } => report::report(&run, svg),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
