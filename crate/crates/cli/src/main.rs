//! `terrastyle`: generate noise height maps, transfer real-terrain style onto them,
//! and evaluate or render the results.
//!
//! Exit status: 0 success, 2 invalid arguments or input, 3 missing or unusable
//! weight archive, 4 numerical divergence, 1 failure writing output.

mod commands;
mod error;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "terrastyle", version, about = "Procedural terrain with neural style transfer")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a procedural noise height map.
    Gen(GenArgs),
    /// Imprint the morphology of a real height map onto a content map.
    Transfer(TransferArgs),
    /// Mix a hand-drawn feature map into a noise map.
    Blend(BlendArgs),
    /// Print the SSIM between two height maps.
    Eval(EvalArgs),
    /// Render a height map as a color image or a triangle mesh.
    Render(RenderArgs),
    /// Run the HTTP job service.
    Serve(ServeArgs),
    /// Write a seeded stand-in VGG-19 weight archive.
    InitWeights(InitWeightsArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Explicit,
    Perlin,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Depth {
    #[value(name = "8")]
    Eight,
    #[value(name = "16")]
    Sixteen,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    /// Noise configuration as a JSON file or inline JSON object.
    #[arg(long)]
    pub config: Option<String>,
    /// Generator, used when no --config is given.
    #[arg(long, value_enum)]
    pub method: Option<Method>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output side length in pixels.
    #[arg(long)]
    pub size: Option<usize>,
    /// Perlin octave count.
    #[arg(long)]
    pub octaves: Option<usize>,
    /// Perlin lattice cycles per pixel at the first octave.
    #[arg(long)]
    pub base_freq: Option<f64>,
    /// Output file; `.raw` writes RAW-HMAP floats, anything else a grayscale PNG.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value = "16")]
    pub bit_depth: Depth,
}

#[derive(Debug, Args)]
pub struct TransferArgs {
    /// Content height map (usually procedural noise).
    #[arg(long)]
    pub content: PathBuf,
    /// Style height map, or the name of a bundled style (mountain, river, coast).
    #[arg(long)]
    pub style: String,
    #[arg(long)]
    pub out: PathBuf,
    /// Full transfer parameters as a JSON file or inline object; flags override it.
    #[arg(long)]
    pub params: Option<String>,
    /// Content loss weight.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Style loss weight.
    #[arg(long)]
    pub beta: Option<f64>,
    /// Total-variation weight.
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Gradient-descent iterations.
    #[arg(long)]
    pub iters: Option<usize>,
    /// Initial step size, or `auto` to size the first step at 1% of the pixel range.
    #[arg(long)]
    pub lr0: Option<String>,
    /// Longest side of the working resolution.
    #[arg(long)]
    pub size: Option<usize>,
    /// Iteration stride between progress lines.
    #[arg(long)]
    pub progress_every: Option<usize>,
    /// Write a preview image at multiples of this many iterations.
    #[arg(long)]
    pub preview_every: Option<usize>,
    /// Seed for random initialization.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Weight archive (safetensors).
    #[arg(long, env = "TERRASTYLE_WEIGHTS")]
    pub weights: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BlendArgs {
    /// Hand-drawn feature map.
    #[arg(long)]
    pub custom: PathBuf,
    #[arg(long)]
    pub noise: PathBuf,
    /// Share of the custom map, in [0, 1].
    #[arg(long, default_value_t = 0.5)]
    pub weight: f64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value = "16")]
    pub bit_depth: Depth,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub a: PathBuf,
    #[arg(long)]
    pub b: PathBuf,
    /// Print `{ssim, params, resampled}` as JSON.
    #[arg(long)]
    pub json: bool,
    /// Odd Gaussian window side.
    #[arg(long)]
    pub window: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RenderMode {
    Colormap,
    Mesh,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value = "colormap")]
    pub mode: RenderMode,
    /// Colormap palette: gray, terrain, or viridis.
    #[arg(long, default_value = "terrain")]
    pub palette: String,
    /// Mesh height of a map value of 1.
    #[arg(long, default_value_t = 1.0)]
    pub vscale: f64,
    /// Mesh grid spacing.
    #[arg(long, default_value_t = 1.0)]
    pub step: f64,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub addr: SocketAddr,
    /// Most jobs running at once.
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
    /// Store directory for jobs, styles, and artifacts.
    #[arg(long, default_value = "terrastyle-data")]
    pub data_dir: PathBuf,
    /// Weight archive (safetensors).
    #[arg(long, env = "TERRASTYLE_WEIGHTS")]
    pub weights: Option<PathBuf>,
    /// Iteration stride between preview artifacts.
    #[arg(long, default_value_t = 100)]
    pub preview_every: usize,
    /// Do not register the bundled styles in an empty library.
    #[arg(long)]
    pub no_seed_styles: bool,
}

#[derive(Debug, Args)]
pub struct InitWeightsArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = terrastyle_core::nst::DEFAULT_WEIGHT_SEED)]
    pub seed: u64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Gen(a) => commands::gen(&a),
        Command::Transfer(a) => commands::transfer(&a),
        Command::Blend(a) => commands::blend(&a),
        Command::Eval(a) => commands::eval(&a),
        Command::Render(a) => commands::render(&a),
        Command::Serve(a) => commands::serve(&a),
        Command::InitWeights(a) => commands::init_weights(&a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
