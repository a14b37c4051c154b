//! `avseg` subcommands.
//!
//! Exit codes: 0 success, 1 fatal error, 2 run completed with failed queries,
//! 64 usage error.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use avseg_core::config::RunConfig;
use avseg_core::evaluate;
use avseg_core::metrics::{AggregateOptions, BoundaryTolerance, EvaluationReport, JfAveraging};
use avseg_core::report::render_table;
use avseg_core::rle::{self, RleMask};
use avseg_core::{BinaryMask, Manifest, Pipeline, RunOptions, RunOutcome};
use clap::{Args, Parser, Subcommand, ValueEnum};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FATAL: i32 = 1;
pub const EXIT_PARTIAL: i32 = 2;
pub const EXIT_USAGE: i32 = 64;

#[derive(Debug, Parser)]
#[command(name = "avseg", version, about = "Audio-guided video segmentation pipeline and scorer")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the transcribe → gate → segment pipeline over a manifest.
    Run(RunArgs),
    /// Score an existing prediction tree against a manifest.
    Eval(EvalArgs),
    /// Run several configs on one manifest and tabulate them side by side.
    Ablate(AblateArgs),
    /// Convert between mask images and RLE files.
    Rle {
        #[command(subcommand)]
        action: RleAction,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Table,
    Json,
}

#[derive(Debug, Args, Default)]
pub struct SamplerOverrides {
    /// Number of clips (one key frame and one segmentation slot each).
    #[arg(long = "clips")]
    pub clips: Option<usize>,
    #[arg(long)]
    pub compressed_per_clip: Option<usize>,
    #[arg(long)]
    pub policy: Option<String>,
}

impl SamplerOverrides {
    fn apply(&self, config: &mut RunConfig) {
        if let Some(n) = self.clips {
            config.sampler.clip_count = n;
        }
        if let Some(m) = self.compressed_per_clip {
            config.sampler.compressed_per_clip = m;
        }
        if let Some(p) = &self.policy {
            config.sampler.policy = p.clone();
        }
    }
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Skip queries whose outputs already exist.
    #[arg(long)]
    pub resume: bool,
    #[arg(long)]
    pub workers: Option<usize>,
    /// Disable the has-target gate.
    #[arg(long)]
    pub no_gate: bool,
    #[command(flatten)]
    pub sampler: SamplerOverrides,
    #[arg(long, value_enum, default_value = "table")]
    pub format: OutputFormat,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Prediction tree (`<query_id>/<frame>.rle`), or a run output directory.
    #[arg(long)]
    pub predictions: PathBuf,
    #[arg(long)]
    pub manifest: PathBuf,
    /// Where to write the report.
    #[arg(long, default_value = "report.json")]
    pub output: PathBuf,
    /// Allow missing predictions and empty splits.
    #[arg(long)]
    pub partial: bool,
    /// Boundary tolerance in pixels; defaults to 0.008 of the frame diagonal.
    #[arg(long)]
    pub tolerance: Option<u32>,
    #[arg(long, value_enum, default_value = "per-query")]
    pub averaging: Averaging,
    #[arg(long, value_enum, default_value = "table")]
    pub format: OutputFormat,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Averaging {
    PerQuery,
    PooledFrames,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    /// Run config; repeat for every row (at least two).
    #[arg(long = "config", required = true)]
    pub configs: Vec<PathBuf>,
    /// Manifest shared by all configs, overriding theirs.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Write each run under `<output-root>/<label>` instead of its own output_dir.
    #[arg(long)]
    pub output_root: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "table")]
    pub format: OutputFormat,
}

#[derive(Debug, Subcommand)]
pub enum RleAction {
    /// Image (non-zero pixels are foreground) to RLE text.
    Encode {
        input: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// RLE text to a black/white PNG.
    Decode {
        input: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
}

/// Parses `args` (including the program name) and runs the command.
pub fn main_with_args<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            if e.use_stderr() {
                let _ = write!(err, "{}", e.render());
                return EXIT_USAGE;
            }
            let _ = write!(out, "{}", e.render());
            return EXIT_OK;
        }
    };
    let outcome = match cli.command {
        Command::Run(args) => cmd_run(&args, out),
        Command::Eval(args) => cmd_eval(&args, out),
        Command::Ablate(args) => cmd_ablate(&args, out, err),
        Command::Rle { action } => cmd_rle(&action, out).map(|_| EXIT_OK),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => match e.downcast_ref::<UsageError>() {
            Some(u) => {
                let _ = writeln!(err, "error: {u}");
                EXIT_USAGE
            }
            None => {
                let _ = writeln!(err, "error: {e:#}");
                EXIT_FATAL
            }
        },
    }
}

#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn emit(out: &mut dyn Write, format: OutputFormat, table: String, json: &impl serde::Serialize) -> Result<()> {
    match format {
        OutputFormat::Table => write!(out, "{table}")?,
        OutputFormat::Json => writeln!(out, "{}", serde_json::to_string_pretty(json)?)?,
    }
    Ok(())
}

fn exit_for(outcome: &RunOutcome) -> i32 {
    if outcome.failures() > 0 {
        EXIT_PARTIAL
    } else {
        EXIT_OK
    }
}

pub fn cmd_run(args: &RunArgs, out: &mut dyn Write) -> Result<i32> {
    let mut config = RunConfig::load(&args.config)?;
    if let Some(w) = args.workers {
        config.workers = w;
    }
    if args.no_gate {
        config.gate_enabled = false;
    }
    args.sampler.apply(&mut config);
    let label = config.display_label("run");
    let pipeline = Pipeline::new(config)?;
    let outcome = pipeline.run_all(RunOptions {
        resume: args.resume,
    })?;
    let r = &outcome.report;
    let mut table = format!(
        "{} queries: {} ok, {} abstained, {} failed\n",
        r.queries,
        r.ok,
        r.abstained,
        r.failed.len()
    );
    for (qid, reason) in &r.failed {
        table.push_str(&format!("  failed {qid}: {reason}\n"));
    }
    if let Some(ev) = &r.evaluation {
        table.push_str(&render_table([(label.as_str(), ev)]));
    }
    emit(out, args.format, table, r)?;
    Ok(exit_for(&outcome))
}

pub fn cmd_eval(args: &EvalArgs, out: &mut dyn Write) -> Result<i32> {
    let manifest = Manifest::load(&args.manifest)?;
    let nested = args.predictions.join("predictions");
    let tree = if nested.is_dir() { nested } else { args.predictions.clone() };
    if !tree.is_dir() {
        bail!("prediction directory {} does not exist", tree.display());
    }
    let predictions = evaluate::read_prediction_tree(&tree, &manifest)?;
    let eval = avseg_core::config::EvalConfig {
        boundary_tolerance: args
            .tolerance
            .map_or(BoundaryTolerance::Auto, BoundaryTolerance::Fixed),
        averaging: match args.averaging {
            Averaging::PerQuery => JfAveraging::PerQuery,
            Averaging::PooledFrames => JfAveraging::PooledFrames,
        },
    };
    let options = AggregateOptions {
        averaging: eval.averaging,
        allow_partial: args.partial,
    };
    let report = evaluate::evaluate(&manifest.queries, &predictions, eval, options)?;
    write_report(&args.output, &report)?;
    emit(out, args.format, render_table([("eval", &report)]), &report)?;
    Ok(EXIT_OK)
}

fn write_report(path: &Path, report: &EvaluationReport) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    let mut text = serde_json::to_string_pretty(report)?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// One ablation row.
#[derive(Debug, serde::Serialize)]
pub struct AblationRow {
    pub label: String,
    pub report: EvaluationReport,
    pub failed: usize,
}

/// Runs every config against the same manifest, in order.
pub fn run_ablation(args: &AblateArgs) -> Result<Vec<AblationRow>> {
    if args.configs.len() < 2 {
        return Err(UsageError("ablate needs at least two --config files".into()).into());
    }
    let mut rows = Vec::new();
    for path in &args.configs {
        let mut config = RunConfig::load(path)?;
        if let Some(m) = &args.manifest {
            config.manifest_path = m.clone();
        }
        let stem = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "run".into());
        let label = config.display_label(&stem);
        if let Some(root) = &args.output_root {
            config.output_dir = root.join(&label);
        }
        let outcome = Pipeline::new(config)?
            .run_all(RunOptions::default())
            .with_context(|| format!("running {}", path.display()))?;
        let report = outcome
            .report
            .evaluation
            .clone()
            .with_context(|| format!("{}: manifest has no ground truth to score", label))?;
        rows.push(AblationRow {
            label,
            report,
            failed: outcome.failures(),
        });
    }
    Ok(rows)
}

pub fn cmd_ablate(args: &AblateArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32> {
    let rows = run_ablation(args)?;
    let table = render_table(rows.iter().map(|r| (r.label.as_str(), &r.report)));
    emit(out, args.format, table, &rows)?;
    let failed: usize = rows.iter().map(|r| r.failed).sum();
    if failed > 0 {
        writeln!(err, "{failed} quer(ies) failed across ablation runs")?;
        return Ok(EXIT_PARTIAL);
    }
    Ok(EXIT_OK)
}

fn cmd_rle(action: &RleAction, out: &mut dyn Write) -> Result<()> {
    match action {
        RleAction::Encode { input, output } => {
            let img = image::open(input)
                .with_context(|| format!("reading {}", input.display()))?
                .to_luma8();
            let bits = img.pixels().map(|p| p.0[0] != 0).collect();
            let mask = BinaryMask::new(img.height(), img.width(), bits)?;
            let text = rle::encode(&mask).to_text();
            match output {
                Some(path) => std::fs::write(path, text)?,
                None => write!(out, "{text}")?,
            }
        }
        RleAction::Decode { input, output } => {
            let text = std::fs::read_to_string(input)
                .with_context(|| format!("reading {}", input.display()))?;
            let mask = rle::decode(&RleMask::parse_text(&text)?)?;
            let img = image::GrayImage::from_fn(mask.width(), mask.height(), |x, y| {
                image::Luma([if mask.get(y, x) { 255 } else { 0 }])
            });
            img.save(output)
                .with_context(|| format!("writing {}", output.display()))?;
        }
    }
    Ok(())
}
