use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

#[derive(Debug, Parser)]
#[command(name = "sidu", version, about = "Gradient-free saliency maps and faithfulness evaluation")]
pub struct Cli {
    /// Worker threads; 0 uses one per core. Outputs do not depend on it.
    #[arg(long, global = true, default_value_t = 0)]
    pub jobs: usize,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Explain one image or every image in a directory.
    Explain(ExplainArgs),
    /// Insertion/deletion AUC report for one or more methods.
    Eval(EvalArgs),
    /// Write the seeded planted-patch model and its labeled corpus.
    MakeDemo(MakeDemoArgs),
    /// Repeat a run recorded in a manifest.
    Rerun(RerunArgs),
    /// Export the binarized, upsampled feature masks of one image.
    Masks(MasksArgs),
    /// Serve a model file over the adapter protocol on stdin/stdout.
    Adapter(AdapterArgs),
    /// Blinded preference study administration.
    #[command(subcommand)]
    Study(StudyCommand),
}

/// Where predictions come from: a model file or an adapter process.
#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct ModelArgs {
    /// Model file.
    #[arg(long, required_unless_present = "adapter", conflicts_with = "adapter")]
    pub model: Option<PathBuf>,
    /// Adapter command line, split on whitespace.
    #[arg(long)]
    pub adapter: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Sidu,
    Rise,
}

impl Method {
    pub fn tag(self) -> &'static str {
        match self {
            Method::Sidu => "sidu",
            Method::Rise => "rise",
        }
    }
}

/// Parameters shared by the explanation methods.
#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct MethodArgs {
    #[arg(long, default_value_t = 0.25)]
    pub sigma: f64,
    #[arg(long, default_value_t = 0.5)]
    pub tau: f64,
    /// Seed for randomized methods.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Random masks per image for rise.
    #[arg(long, default_value_t = 2000)]
    pub rise_masks: usize,
    #[arg(long, default_value_t = 7)]
    pub rise_grid: usize,
    #[arg(long, default_value_t = 0.5)]
    pub rise_keep: f64,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[group(id = "input", required = true, multiple = false)]
pub struct InputArgs {
    #[arg(long, group = "input")]
    pub image: Option<PathBuf>,
    /// Every `<id>.png` whose id has no dot.
    #[arg(long, group = "input")]
    pub images_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct ExplainArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = Method::Sidu)]
    pub method: Method,
    #[command(flatten)]
    pub params: MethodArgs,
    /// Heatmap opacity in the overlay PNG.
    #[arg(long, default_value_t = 0.5)]
    pub alpha: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SubstrateArg {
    /// Per-channel mean of the image.
    Mean,
    Zero,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BaseArg {
    Blur,
    Mean,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct EvalArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "sidu")]
    pub methods: Vec<Method>,
    #[command(flatten)]
    pub params: MethodArgs,
    /// Fraction of pixels perturbed per curve step.
    #[arg(long, default_value_t = 0.01)]
    pub step: f64,
    /// Deletion fill value.
    #[arg(long, value_enum, default_value_t = SubstrateArg::Mean)]
    pub substrate: SubstrateArg,
    /// Insertion starting image.
    #[arg(long, value_enum, default_value_t = BaseArg::Blur)]
    pub insertion_base: BaseArg,
    /// Blur standard deviation in pixels; default 5% of the shorter side.
    #[arg(long)]
    pub blur_radius: Option<f64>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct MakeDemoArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = sidu_core::demo::DEFAULT_SEED)]
    pub seed: u64,
    #[arg(long, default_value_t = sidu_core::demo::DEFAULT_IMAGE_COUNT)]
    pub count: usize,
}

#[derive(Debug, Clone, Args)]
pub struct RerunArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Write outputs here instead of the recorded directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct MasksArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub image: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    pub tau: f64,
}

#[derive(Debug, Clone, Args)]
pub struct AdapterArgs {
    #[arg(long)]
    pub model: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum StudyCommand {
    /// Build a study manifest from originals and per-method overlays.
    Create(StudyCreateArgs),
    /// Serve one or more studies over HTTP.
    Serve(StudyServeArgs),
    /// Print the unblinded tally of a study directory.
    Tally(StudyTallyArgs),
}

#[derive(Debug, Clone, Args)]
pub struct StudyCreateArgs {
    /// Directory of `<id>.png` originals.
    #[arg(long)]
    pub images_dir: PathBuf,
    /// Directory of `<id>.<method>.png` overlays; defaults to the image directory.
    #[arg(long)]
    pub maps_dir: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "sidu,rise")]
    pub methods: Vec<String>,
    #[arg(long)]
    pub id: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Show the first method as A on every item.
    #[arg(long)]
    pub fixed_labels: bool,
    /// Study directory to write `manifest.json` into.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct StudyServeArgs {
    /// Study directories.
    #[arg(long = "study", required = true)]
    pub studies: Vec<PathBuf>,
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub addr: String,
    /// Required on tally requests; falls back to SIDU_ADMIN_TOKEN.
    #[arg(long, env = "SIDU_ADMIN_TOKEN")]
    pub admin_token: String,
}

#[derive(Debug, Clone, Args)]
pub struct StudyTallyArgs {
    #[arg(long)]
    pub study: PathBuf,
}
