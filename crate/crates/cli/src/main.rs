//! `flowdepth` command-line front end.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "flowdepth", version, about = "Occlusion-robust edge maps for animated sequences")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Render a synthetic sequence with its ground truth.
    Synth(SynthArgs),
    /// Depth edges for every frame.
    Detect(DetectArgs),
    /// Optical flow between consecutive frames.
    Flow(FlowArgs),
    /// Depth, flow and fused edges for every frame.
    Pipeline(PipelineArgs),
    /// Train the toy patch stylizer on one frame and write its loss history.
    TrainToy(TrainArgs),
    /// Score predicted edge maps against a sequence's oracle edges.
    Eval(EvalArgs),
    /// Pipeline scores over a grid of window sizes and interpolations.
    Sweep(SweepArgs),
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// Scene description (JSON).
    #[arg(long, required_unless_present = "canonical", conflicts_with = "canonical")]
    spec: Option<PathBuf>,
    /// Use the built-in occluding figure instead of a spec file.
    #[arg(long)]
    canonical: bool,
    /// Layer depth gap for the built-in figure.
    #[arg(long, requires = "canonical")]
    depth_gap: Option<f64>,
    #[arg(long)]
    out: PathBuf,
    /// Replaces the seed stored in the spec.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct DetectArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Threshold window width (odd, at least 3).
    #[arg(short = 'w', long, default_value_t = 9)]
    window: usize,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    offset: Option<f64>,
}

#[derive(Debug, Args)]
struct FlowArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct PipelineArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Use the flow files listed in the manifest instead of estimating flow.
    #[arg(long)]
    external_flow: bool,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    no_contrastive: bool,
    #[arg(long)]
    seed: Option<u64>,
    /// Frame to train on; defaults to the last one.
    #[arg(long)]
    frame: Option<usize>,
    /// Side of the square training crop; 0 trains on the whole frame.
    #[arg(long, default_value_t = 64)]
    crop: usize,
    /// Directory with `e_NNNN.pgm` guide maps; computed by the pipeline when absent.
    #[arg(long)]
    edges: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    truth: PathBuf,
    #[arg(long)]
    tol: Option<usize>,
    /// Which predicted maps to score: d, f or e.
    #[arg(long, default_value = "e", value_parser = ["d", "f", "e"])]
    kind: String,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct SweepArgs {
    /// Sequence directory; repeat for a suite.
    #[arg(long = "in", required = true)]
    input: Vec<PathBuf>,
    #[arg(long = "w", value_delimiter = ',', default_value = "7,9,11,13")]
    windows: Vec<usize>,
    #[arg(long = "h", value_delimiter = ',', default_value = "dilation,spline")]
    interpolations: Vec<String>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    external_flow: bool,
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Synth(a) => commands::synth(a),
        Command::Detect(a) => commands::detect(a),
        Command::Flow(a) => commands::flow(a),
        Command::Pipeline(a) => commands::pipeline(a),
        Command::TrainToy(a) => commands::train_toy(a),
        Command::Eval(a) => commands::eval(a),
        Command::Sweep(a) => commands::sweep(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
