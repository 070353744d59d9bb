use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use drjscc::cli::{self, ImageSource};
use drjscc::config::{self, RunConfig};
use drjscc::Variant;

#[derive(Parser)]
#[command(name = "drjscc", version, about = "Refinement-based learned image transmission over time-varying channels")]
struct Args {
    /// TOML run configuration.
    #[arg(long, global = true, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Built-in configuration: full, full-r6, desk, desk-r6.
    #[arg(long, global = true)]
    preset: Option<String>,
    /// Overrides every seed in the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model and write checkpoints and the training log.
    Train {
        /// Continue from this checkpoint.
        #[arg(long)]
        resume: Option<PathBuf>,
        /// Override the configured epoch count.
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Run scenario suites and write results.csv plus plots.
    Evaluate {
        /// Checkpoint to evaluate (repeatable).
        #[arg(long = "checkpoint")]
        checkpoints: Vec<PathBuf>,
        /// Built-in suite: fig5, fig6, fig7 (repeatable).
        #[arg(long = "suite")]
        suites: Vec<String>,
        /// Extra variant run on each checkpoint (repeatable).
        #[arg(long = "variant")]
        variants: Vec<Variant>,
        /// Images per scenario (default from the config).
        #[arg(long)]
        images: Option<usize>,
        /// Output directory (default: the configured results directory).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Send one image through a schedule such as "SNR=(19,1),C=(2,6)".
    Simulate {
        /// Checkpoint to transmit with.
        #[arg(long)]
        checkpoint: PathBuf,
        /// Channel schedule in legend notation, e.g. "SNR=(19,1),C=(2,6)".
        #[arg(long)]
        schedule: String,
        /// PNG image to transmit.
        #[arg(long, conflicts_with = "index")]
        image: Option<PathBuf>,
        /// Index into the configured test split.
        #[arg(long)]
        index: Option<usize>,
        /// Pipeline: drjscc, static-only or static-fixed-snr@<dB> (default: the checkpoint's).
        #[arg(long)]
        variant: Option<Variant>,
        /// Directory for reconstruction.png, trace.json and segments.json.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write the config schema, a resolved config, or re-render saved results.
    Export {
        /// Write the JSON schema of the config file here ("-" for stdout).
        #[arg(long)]
        schema: Option<PathBuf>,
        /// Write the resolved configuration as TOML here ("-" for stdout).
        #[arg(long)]
        resolved_config: Option<PathBuf>,
        /// per_image.json from an earlier evaluation.
        #[arg(long, requires = "out")]
        results: Option<PathBuf>,
        /// Output directory for the re-rendered table and plots.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

enum Failure {
    Usage(String),
    Runtime(drjscc::Error),
}

impl From<drjscc::Error> for Failure {
    fn from(e: drjscc::Error) -> Self {
        Failure::Runtime(e)
    }
}

fn load_config(args: &Args) -> Result<RunConfig, Failure> {
    let mut cfg = match (&args.config, &args.preset) {
        (Some(path), _) => RunConfig::load(path)?,
        (None, Some(name)) => RunConfig::preset(name).map_err(|e| Failure::Usage(e.to_string()))?,
        (None, None) => RunConfig::preset("desk")?,
    };
    if args.seed.is_some() {
        cfg.seed = args.seed;
    }
    Ok(cfg)
}

fn write_text(dest: &PathBuf, text: &str) -> Result<(), Failure> {
    if dest.as_os_str() == "-" {
        print!("{text}");
        Ok(())
    } else {
        std::fs::write(dest, text).map_err(|e| Failure::Runtime(drjscc::Error::Io { path: dest.clone(), source: e }))
    }
}

fn run(args: Args) -> Result<(), Failure> {
    let mut cfg = load_config(&args)?;
    match args.command {
        Command::Train { resume, epochs } => {
            if let Some(n) = epochs {
                cfg.train.epochs = n;
            }
            let cfg = cfg.resolve()?;
            let summary = cli::cmd_train(&cfg, resume.as_deref())?;
            let last = summary.log.last().map_or(f64::NAN, |r| r.loss);
            println!("config {} final loss {last:.6} -> {}", summary.config_hash, summary.checkpoint.display());
        }
        Command::Evaluate { checkpoints, suites, variants, images, out } => {
            if !checkpoints.is_empty() {
                cfg.evaluate.checkpoints = checkpoints;
            }
            if !suites.is_empty() {
                cfg.evaluate.suites = suites;
            }
            if let Some(n) = images {
                cfg.evaluate.images = n;
            }
            cfg.evaluate.variants.extend(variants);
            let cfg = cfg.resolve()?;
            let out = out.unwrap_or_else(|| cfg.paths.results.clone());
            let results = cli::cmd_evaluate(&cfg, &out)?;
            for r in &results {
                println!("{:<28} {:<24} {:>8.3} dB ± {:.3}", r.scenario, r.variant, r.mean_psnr_db, r.std_psnr_db);
            }
            println!("wrote {}", out.join(drjscc::evaluation::TABLE_FILE).display());
        }
        Command::Simulate { checkpoint, schedule, image, index, variant, out } => {
            let source = match (image, index) {
                (Some(p), None) => ImageSource::File(p),
                (None, Some(i)) => ImageSource::TestIndex(i),
                _ => return Err(Failure::Usage("give exactly one of --image or --index".into())),
            };
            let cfg = cfg.resolve()?;
            let sim = cli::cmd_simulate(&cfg, &checkpoint, &source, &schedule, variant, out.as_deref())?;
            for s in &sim.segments {
                println!(
                    "blocks {:>2}..{:<2} at {:>6.2} dB: cumulative PSNR {:.3} dB",
                    s.first_block, s.last_block, s.snr_db, s.cumulative_psnr_db
                );
            }
            let sent = sim
                .trace
                .iter()
                .filter(|e| matches!(e, drjscc::protocol::TraceEvent::Block { .. }))
                .count();
            println!("{sent} blocks transmitted, PSNR {:.3} dB", sim.psnr_db);
        }
        Command::Export { schema, resolved_config, results, out } => {
            if schema.is_none() && resolved_config.is_none() && results.is_none() {
                return Err(Failure::Usage("export needs --schema, --resolved-config or --results".into()));
            }
            if let Some(dest) = schema {
                write_text(&dest, &config::schema_json())?;
            }
            if let Some(dest) = resolved_config {
                let cfg = cfg.resolve()?;
                write_text(&dest, &format!("# config hash {}\n{}", cfg.hash()?, cfg.to_toml()?))?;
            }
            if let (Some(results), Some(out)) = (results, out) {
                for path in cli::cmd_export_results(&results, &out)? {
                    println!("wrote {}", path.display());
                }
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
