use cgvm_core::hops::DEFAULT_GRID_SIZE;
use cgvm_core::imaging::DEFAULT_SIDE;
use cgvm_core::metrics::computational::{SsimWindow, UqiMode};
use cgvm_core::metrics::element::{Averaging, Matching, DEFAULT_DETECTION_THRESHOLD};
use cgvm_core::pipeline::RunLayout;
use clap::{Args, Parser, Subcommand, ValueEnum};
use std::path::PathBuf;

#[derive(Parser, Debug)]
#[command(name = "cgvm", version, about = "Evaluate conversational image generation hop by hop")]
pub struct Cli {
    /// Use stored summaries, images, detections and embeddings only. Fails if
    /// any service endpoint is configured.
    #[arg(long, global = true)]
    pub offline: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Check a dataset manifest and its images.
    Validate {
        /// Dataset directory holding manifest.json.
        dataset: PathBuf,
    },
    /// Write conversation-length, source and element frequency tables.
    Stats {
        dataset: PathBuf,
        /// Output directory for the CSV tables.
        #[arg(long, default_value = "stats")]
        out: PathBuf,
    },
    /// Summarise every conversation prefix into a prompt.
    Summarize(StageArgs),
    /// Render an image for every stored summary.
    Generate(StageArgs),
    /// Detect elements in every generated image.
    Detect(StageArgs),
    /// Compute metrics for a run and write report files.
    Eval(EvalArgs),
    /// Re-aggregate one or more report directories into one report.
    Report {
        /// Report directories written by `eval`.
        #[arg(required = true)]
        reports: Vec<PathBuf>,
        #[arg(long, default_value = "report")]
        out: PathBuf,
        #[arg(long, default_value_t = DEFAULT_GRID_SIZE)]
        grid: usize,
    },
}

#[derive(Args, Debug, Clone)]
pub struct RunArgs {
    /// Run id; the run lives at runs/<id>.
    #[arg(long, default_value = "default", conflicts_with = "run_dir")]
    pub run: String,
    /// Explicit run directory, overriding --run.
    #[arg(long)]
    pub run_dir: Option<PathBuf>,
    /// Worker threads; 0 uses every logical core.
    #[arg(long, default_value_t = 0)]
    pub jobs: usize,
}

impl RunArgs {
    pub fn layout(&self) -> RunLayout {
        match &self.run_dir {
            Some(d) => RunLayout::new(d),
            None => RunLayout::under("runs", &self.run),
        }
    }
}

/// Endpoint overrides; each falls back to its environment variable.
#[derive(Args, Debug, Clone, Default)]
pub struct ServiceArgs {
    #[arg(long, env = "CGVM_LLM_URL")]
    pub llm_url: Option<String>,
    #[arg(long, env = "CGVM_LLM_KEY", hide_env_values = true)]
    pub llm_key: Option<String>,
    #[arg(long, env = "CGVM_LLM_MODEL", default_value = "gpt-3.5-turbo")]
    pub llm_model: String,
    #[arg(long, env = "CGVM_T2I_URL")]
    pub t2i_url: Option<String>,
    #[arg(long, env = "CGVM_T2I_KEY", hide_env_values = true)]
    pub t2i_key: Option<String>,
    #[arg(long, env = "CGVM_DET_URL")]
    pub det_url: Option<String>,
    #[arg(long, env = "CGVM_EMBED_URL")]
    pub embed_url: Option<String>,
    #[arg(long, env = "CGVM_EMBED_TOKEN", hide_env_values = true)]
    pub embed_token: Option<String>,
}

impl ServiceArgs {
    /// Flag names of the endpoints that are set.
    pub fn configured(&self) -> Vec<&'static str> {
        let set = |v: &Option<String>| v.as_deref().is_some_and(|s| !s.trim().is_empty());
        [
            ("--llm-url/CGVM_LLM_URL", &self.llm_url),
            ("--t2i-url/CGVM_T2I_URL", &self.t2i_url),
            ("--det-url/CGVM_DET_URL", &self.det_url),
            ("--embed-url/CGVM_EMBED_URL", &self.embed_url),
        ]
        .into_iter()
        .filter(|(_, v)| set(v))
        .map(|(n, _)| n)
        .collect()
    }
}

#[derive(Args, Debug, Clone)]
pub struct StageArgs {
    pub dataset: PathBuf,
    #[command(flatten)]
    pub run: RunArgs,
    #[command(flatten)]
    pub services: ServiceArgs,
    /// Seed recorded in run.json; per-image seeds derive from it.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Requested width of generated images.
    #[arg(long, default_value_t = 512)]
    pub width: u32,
    /// Requested height of generated images.
    #[arg(long, default_value_t = 512)]
    pub height: u32,
    /// Side images are standardised to before detection.
    #[arg(long, default_value_t = DEFAULT_SIDE)]
    pub side: u32,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum SsimWindowArg {
    /// 11x11 Gaussian, sigma 1.5.
    Gaussian,
    Global,
}

impl From<SsimWindowArg> for SsimWindow {
    fn from(v: SsimWindowArg) -> Self {
        match v {
            SsimWindowArg::Gaussian => SsimWindow::Gaussian11x11Sigma1_5,
            SsimWindowArg::Global => SsimWindow::Global,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum UqiModeArg {
    /// 8x8 sliding window.
    Windowed,
    Global,
}

impl From<UqiModeArg> for UqiMode {
    fn from(v: UqiModeArg) -> Self {
        match v {
            UqiModeArg::Windowed => UqiMode::Windowed8x8,
            UqiModeArg::Global => UqiMode::Global,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum MatchingArg {
    Greedy,
    Hungarian,
}

impl From<MatchingArg> for Matching {
    fn from(v: MatchingArg) -> Self {
        match v {
            MatchingArg::Greedy => Matching::Greedy,
            MatchingArg::Hungarian => Matching::Hungarian,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum AveragingArg {
    Class,
    Instance,
}

impl From<AveragingArg> for Averaging {
    fn from(v: AveragingArg) -> Self {
        match v {
            AveragingArg::Class => Averaging::Class,
            AveragingArg::Instance => Averaging::Instance,
        }
    }
}

#[derive(Args, Debug, Clone)]
pub struct EvalArgs {
    pub dataset: PathBuf,
    #[command(flatten)]
    pub run: RunArgs,
    #[command(flatten)]
    pub services: ServiceArgs,
    /// Comma-separated metric families: psnr,ssim,uqi,brisque,clip,ep,iou.
    #[arg(long, default_value = "psnr,ssim,uqi,brisque,clip,ep,iou")]
    pub metrics: String,
    /// Images are resized to side x side before comparison.
    #[arg(long, default_value_t = DEFAULT_SIDE)]
    pub side: u32,
    /// Points on the normalised hop grid.
    #[arg(long, default_value_t = DEFAULT_GRID_SIZE)]
    pub grid: usize,
    #[arg(long, value_enum, default_value = "gaussian")]
    pub ssim_window: SsimWindowArg,
    #[arg(long, value_enum, default_value = "windowed")]
    pub uqi_mode: UqiModeArg,
    #[arg(long, value_enum, default_value = "greedy")]
    pub iou_matching: MatchingArg,
    #[arg(long, value_enum, default_value = "class")]
    pub iou_averaging: AveragingArg,
    /// Detections scoring below this are ignored.
    #[arg(long, default_value_t = DEFAULT_DETECTION_THRESHOLD)]
    pub det_threshold: f64,
    /// BRISQUE model file; defaults to CGVM_BRISQUE_MODEL, then the built-in model.
    #[arg(long)]
    pub brisque_model: Option<PathBuf>,
    /// Embedding store (`sha256 model_id dim values...` per line).
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    /// Drop the factor 10 from PSNR and the square from MSE.
    #[arg(long)]
    pub literal_paper_formulas: bool,
    /// Report directory; defaults to <run dir>/report.
    #[arg(long)]
    pub out: Option<PathBuf>,
}
