use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;
mod report;

#[derive(Parser)]
#[command(name = "align-eval", version, about = "Score-to-performance alignment: ground truth, baselines, metrics and reports")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a tempo-regularized ground-truth alignment from a score and a
    /// performance transcript.
    GroundTruth(GroundTruthArgs),
    /// Align a score to performance audio with a feature-DTW baseline.
    Align(AlignArgs),
    /// Compare a candidate alignment against a ground truth.
    Evaluate(EvaluateArgs),
    /// Aggregate metric reports into a summary table.
    Report(ReportArgs),
    /// Render SVG figures.
    #[command(subcommand)]
    Visualize(VisualizeCommand),
    /// Generate a synthetic alignment, optionally warping a score with it.
    Warp(WarpArgs),
    /// Write a synthetic score, warped transcript and rendered performance.
    Fixture(FixtureArgs),
    /// Run ground truth, baselines and evaluation for every pair of a
    /// manifest.
    Run(RunArgs),
}

#[derive(Clone, Copy, Debug, Default, ValueEnum)]
enum Pedal {
    #[default]
    Ignore,
    Extend,
}

#[derive(Args)]
struct TranscriptOpts {
    /// Sustain-pedal handling when reading the transcript.
    #[arg(long, value_enum, default_value_t = Pedal::Ignore)]
    pedal: Pedal,
}

#[derive(Args)]
struct GroundTruthArgs {
    #[arg(long)]
    score: PathBuf,
    #[arg(long)]
    transcript: PathBuf,
    /// Tempo regularization weight.
    #[arg(long, default_value_t = 0.1)]
    lambda: f64,
    /// Performance frame step in seconds.
    #[arg(long, default_value_t = 0.01)]
    dt: f64,
    /// Prune states further than this many frames from the uniform-tempo
    /// diagonal.
    #[arg(long)]
    band: Option<usize>,
    #[command(flatten)]
    transcript_opts: TranscriptOpts,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
struct AlignArgs {
    #[arg(long)]
    score: PathBuf,
    /// Performance audio (mono WAV).
    #[arg(long, required_unless_present = "perf_midi", conflicts_with = "perf_midi")]
    perf: Option<PathBuf>,
    /// Performance transcript to synthesize instead of audio.
    #[arg(long)]
    perf_midi: Option<PathBuf>,
    #[arg(long, default_value = "chroma")]
    features: String,
    /// Seconds per beat for rendering the score; defaults to the
    /// performance duration over the score length.
    #[arg(long)]
    score_tempo: Option<f64>,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    score: PathBuf,
    #[arg(long)]
    transcript: PathBuf,
    #[arg(long)]
    gt: PathBuf,
    #[arg(long)]
    cand: PathBuf,
    /// Pair identifier recorded in the report; defaults to the score's file
    /// stem.
    #[arg(long)]
    pair_id: Option<String>,
    /// Baseline name recorded in the report; defaults to the candidate's
    /// file stem.
    #[arg(long)]
    feature: Option<String>,
    #[command(flatten)]
    transcript_opts: TranscriptOpts,
    #[arg(short, long)]
    output: PathBuf,
    /// Also append a row to this CSV file.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    /// Directory searched recursively for report JSON files.
    #[arg(long)]
    dir: PathBuf,
    #[arg(short, long)]
    output: PathBuf,
    /// Also write metric correlations next to the summary.
    #[arg(long)]
    correlations: bool,
    /// Drop reports whose temporal MAD exceeds this many milliseconds.
    #[arg(long)]
    outlier_mad_ms: Option<f64>,
}

#[derive(Subcommand)]
enum VisualizeCommand {
    /// Stacked transcript / aligned score / difference piano-rolls.
    Compare(CompareArgs),
    /// Scatter plot of two metrics across reports.
    Scatter(ScatterArgs),
}

#[derive(Args)]
struct CompareArgs {
    #[arg(long)]
    score: PathBuf,
    #[arg(long)]
    transcript: PathBuf,
    /// Alignment used to place the score in performance time.
    #[arg(long)]
    alignment: PathBuf,
    #[command(flatten)]
    transcript_opts: TranscriptOpts,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
struct ScatterArgs {
    #[arg(long)]
    dir: PathBuf,
    #[arg(long, default_value = "mad_ms")]
    x: String,
    #[arg(long, default_value = "note_mad_ms")]
    y: String,
    /// Only reports for this baseline.
    #[arg(long)]
    feature: Option<String>,
    #[arg(long)]
    outlier_mad_ms: Option<f64>,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
struct WarpArgs {
    #[arg(long, default_value = "smooth-rubato")]
    kind: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Spread of local tempi, in [0, 1].
    #[arg(long, default_value_t = 1.0)]
    severity: f64,
    /// Score length in beats; taken from `--apply` when given.
    #[arg(long)]
    score_len: Option<f64>,
    /// Performance length in seconds.
    #[arg(long)]
    perf_len: f64,
    /// Score MIDI to warp into a performance transcript.
    #[arg(long, requires = "apply_output")]
    apply: Option<PathBuf>,
    /// Where the warped transcript goes.
    #[arg(long)]
    apply_output: Option<PathBuf>,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
struct FixtureArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Score length in beats.
    #[arg(long, default_value_t = 20.0)]
    beats: f64,
    /// Performance length in seconds.
    #[arg(long, default_value_t = 10.0)]
    seconds: f64,
    #[arg(long, default_value = "piecewise")]
    warp: String,
    #[arg(long, default_value_t = 1.0)]
    severity: f64,
    /// Skip rendering the performance audio.
    #[arg(long)]
    no_audio: bool,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    manifest: PathBuf,
}

fn init_threads() -> anyhow::Result<()> {
    if let Ok(v) = std::env::var("ALIGN_EVAL_THREADS") {
        let n: usize = v
            .trim()
            .parse()
            .map_err(|_| anyhow::anyhow!("ALIGN_EVAL_THREADS must be a positive integer, got {v:?}"))?;
        if n == 0 {
            anyhow::bail!("ALIGN_EVAL_THREADS must be a positive integer, got 0");
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = init_threads().and_then(|()| match cli.command {
        Command::GroundTruth(a) => commands::ground_truth(a),
        Command::Align(a) => commands::align(a),
        Command::Evaluate(a) => commands::evaluate(a),
        Command::Report(a) => report::report(a),
        Command::Visualize(VisualizeCommand::Compare(a)) => commands::compare(a),
        Command::Visualize(VisualizeCommand::Scatter(a)) => report::scatter(a),
        Command::Warp(a) => commands::warp(a),
        Command::Fixture(a) => commands::fixture(a),
        Command::Run(a) => commands::run(a),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
