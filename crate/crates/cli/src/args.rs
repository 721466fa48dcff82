use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use stereo_budget::jbf::UnresolvedFill;
use stereo_budget::matcher::Refill;
use stereo_budget::{DisparitySign, PipelineParams, Strategy};

#[derive(Debug, Parser)]
#[command(name = "sob", version, about = "Depth and right-view recovery from a partial stereo pair")]
pub struct Cli {
    /// Cap on worker threads for all parallel stages.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// More logging (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Encode a fraction of the right image into a .sob payload.
    Encode(EncodeArgs),
    /// Recover the left disparity map from the left image and a payload.
    Decode(DecodeArgs),
    /// Synthesize the right view from the left image and a disparity map.
    Synthesize(SynthesizeArgs),
    /// Rate-distortion sweep over Middlebury datasets.
    Bench(BenchArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SchemeArg {
    Grid,
    Fps,
    Downsample,
}

impl SchemeArg {
    pub fn name(self) -> &'static str {
        match self {
            SchemeArg::Grid => "grid",
            SchemeArg::Fps => "fps",
            SchemeArg::Downsample => "downsample",
        }
    }
}

#[derive(Debug, Args)]
pub struct EncodeArgs {
    #[arg(long, value_enum)]
    pub scheme: SchemeArg,
    /// Grid step in pixels.
    #[arg(long, default_value_t = 5)]
    pub spacing: usize,
    /// Number of FPS samples (defaults to 4% of the pixels).
    #[arg(long)]
    pub count: Option<usize>,
    /// Decimation factor.
    #[arg(long, default_value_t = 5)]
    pub factor: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Share of FPS samples steered toward detail.
    #[arg(long, default_value_t = 0.0)]
    pub adaptive: f32,
    pub input: PathBuf,
    pub output: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct PipelineArgs {
    /// Disparity convention: negative matches left x to right x - d.
    #[arg(long, default_value = "negative", value_parser = parse_from_str::<DisparitySign>)]
    pub sign: DisparitySign,
    #[arg(long, default_value_t = 20.0)]
    pub sigma_r: f32,
    /// Densifying filter sigma_s in units of sample spacing.
    #[arg(long, default_value_t = 3.0)]
    pub sigma_s_mult: f32,
    #[arg(long, default_value_t = 25.5)]
    pub sigma_tree: f32,
    /// Weight of the sparse volume in the hybrid blend.
    #[arg(long, default_value_t = 0.5)]
    pub hybrid_weight: f32,
    #[arg(long, default_value_t = 1)]
    pub lr_threshold: u32,
    #[arg(long)]
    pub no_lr_check: bool,
    /// scan | background | nonlocal
    #[arg(long, default_value = "scan", value_parser = parse_from_str::<Refill>)]
    pub refill: Refill,
    #[arg(long)]
    pub no_smooth_left: bool,
    /// Low-pass sigma per unit of factor or spacing.
    #[arg(long, default_value_t = 0.5)]
    pub antialias: f32,
    #[arg(long)]
    pub color_costs: bool,
    #[arg(long, default_value_t = 1e-6)]
    pub delta: f32,
    /// layer-max | row-nearest
    #[arg(long, default_value = "layer-max", value_parser = parse_from_str::<UnresolvedFill>)]
    pub unresolved: UnresolvedFill,
}

impl PipelineArgs {
    pub fn params(&self, dmax: usize) -> PipelineParams {
        PipelineParams {
            dmax,
            sign: self.sign,
            hybrid_weight: self.hybrid_weight,
            sigma_r: self.sigma_r,
            sigma_s_mult: self.sigma_s_mult,
            sigma_tree: self.sigma_tree,
            lr_check: !self.no_lr_check,
            lr_threshold: self.lr_threshold,
            refill: self.refill,
            smooth_left: !self.no_smooth_left,
            antialias: self.antialias,
            color_costs: self.color_costs,
            delta: self.delta,
            unresolved: self.unresolved,
        }
    }

    /// Flags reproducing these settings (sign excluded for bench, where the
    /// dataset decides).
    pub fn flags(&self, with_sign: bool) -> Vec<String> {
        let mut f = Vec::new();
        if with_sign {
            f.extend(["--sign".into(), self.sign.name().into()]);
        }
        f.extend([
            "--sigma-r".into(),
            self.sigma_r.to_string(),
            "--sigma-s-mult".into(),
            self.sigma_s_mult.to_string(),
            "--sigma-tree".into(),
            self.sigma_tree.to_string(),
            "--hybrid-weight".into(),
            self.hybrid_weight.to_string(),
            "--lr-threshold".into(),
            self.lr_threshold.to_string(),
            "--refill".into(),
            self.refill.name().into(),
            "--antialias".into(),
            self.antialias.to_string(),
            "--delta".into(),
            self.delta.to_string(),
            "--unresolved".into(),
            self.unresolved.name().into(),
        ]);
        for (on, flag) in [
            (self.no_lr_check, "--no-lr-check"),
            (self.no_smooth_left, "--no-smooth-left"),
            (self.color_costs, "--color-costs"),
        ] {
            if on {
                f.push(flag.into());
            }
        }
        f
    }
}

fn parse_from_str<T>(s: &str) -> Result<T, String>
where
    T: std::str::FromStr<Err = stereo_budget::Error>,
{
    s.parse().map_err(|e: stereo_budget::Error| e.to_string())
}

#[derive(Debug, Args)]
pub struct DecodeArgs {
    #[arg(long, value_parser = parse_from_str::<Strategy>)]
    pub strategy: Strategy,
    #[arg(long)]
    pub payload: PathBuf,
    #[arg(long)]
    pub left: PathBuf,
    #[arg(long)]
    pub dmax: usize,
    /// Output prefix: writes PREFIX.pgm, PREFIX.pfm and PREFIX_stable.png.
    #[arg(long, default_value = "disparity")]
    pub out: PathBuf,
    /// Gray levels per disparity in the PGM (default: 255 / dmax).
    #[arg(long)]
    pub scale: Option<u32>,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
}

#[derive(Debug, Args)]
pub struct SynthesizeArgs {
    #[arg(long)]
    pub left: PathBuf,
    /// Disparity map as PFM.
    #[arg(long)]
    pub disparity: PathBuf,
    #[arg(long)]
    pub payload: PathBuf,
    /// True right image; enables the PSNR report.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Output prefix: writes PREFIX.png and PREFIX_occlusion.png.
    #[arg(long, default_value = "synth")]
    pub out: PathBuf,
    #[arg(long, default_value = "negative", value_parser = parse_from_str::<DisparitySign>)]
    pub sign: DisparitySign,
    #[arg(long, default_value_t = 20.0)]
    pub sigma_r: f32,
    #[arg(long, default_value_t = 3.0)]
    pub sigma_s_mult: f32,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Dataset root (default: $SOB_DATA_DIR, else the bundled data).
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "cones")]
    pub sets: Vec<String>,
    /// Any of downsample, sparse, hybrid, lower_bound.
    #[arg(long, value_delimiter = ',', default_value = "sparse,downsample,hybrid")]
    pub strategies: Vec<String>,
    #[arg(long, value_delimiter = ',', default_value = "0.02,0.04,0.111")]
    pub budgets: Vec<f64>,
    /// Point sampling for sparse and hybrid: grid | fps.
    #[arg(long, default_value = "grid")]
    pub sampling: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1.0)]
    pub threshold: f32,
    #[arg(long)]
    pub no_synthesis: bool,
    /// Run each row once untimed first.
    #[arg(long)]
    pub warmup: bool,
    #[arg(long, default_value = "report.csv")]
    pub out: PathBuf,
    /// Externally produced rows merged into the report.
    #[arg(long)]
    pub baseline: Option<PathBuf>,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
}
