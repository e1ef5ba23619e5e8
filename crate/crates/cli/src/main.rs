use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use cvsm::compose::{CcaeKind, Cvm};
use cvsm::gradcheck::GradTarget;

mod commands;

#[derive(Parser, Debug)]
#[command(name = "cvsm", version, about = "Train and query compositional vector-space models")]
struct Cli {
    /// RNG seed; the CVSM_SEED environment variable takes precedence.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train bilingual sentence or document embeddings on a parallel corpus.
    TrainBicvm(TrainBicvm),
    /// Train a CCG-conditioned autoencoder on labelled derivation trees.
    TrainCcae(TrainCcae),
    /// Train a frame identification model.
    TrainFrameid(TrainFrameid),
    /// Cross-lingual document classification with a trained BiCVM checkpoint.
    EvalCldc(EvalCldc),
    /// Print one vector per input sentence or tree.
    Encode(Encode),
    /// Nearest neighbours of a word by cosine similarity.
    Nn(Nn),
    /// Compare analytic and finite-difference gradients.
    GradCheck(GradCheck),
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum BicvmMode {
    /// Sentence-aligned files, one sentence per line.
    Sentence,
    /// Document files; sentence pairs of equal-length documents add the sentence objective.
    Doc,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum Signal {
    Rae,
    Unfolding,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum FrameModel {
    Wsabie,
    Loglinear,
}

#[derive(Clone, Debug)]
pub struct Targets(pub Vec<GradTarget>);

fn parse_targets(s: &str) -> Result<Targets, String> {
    if s.eq_ignore_ascii_case("all") {
        return Ok(Targets(GradTarget::all()));
    }
    s.parse().map(|t| Targets(vec![t])).map_err(|e: cvsm::Error| e.to_string())
}

#[derive(Args, Debug)]
pub struct TrainBicvm {
    /// Source side: sentences one per line, or documents with `--mode doc`.
    #[arg(long)]
    pub src: PathBuf,
    #[arg(long)]
    pub tgt: PathBuf,
    #[arg(long, default_value = "src")]
    pub src_lang: String,
    #[arg(long, default_value = "tgt")]
    pub tgt_lang: String,
    /// Composition function: add or bi.
    #[arg(long, default_value = "add")]
    pub model: Cvm,
    #[arg(long, value_enum, default_value_t = BicvmMode::Sentence)]
    pub mode: BicvmMode,
    #[arg(long, default_value_t = 128)]
    pub dim: usize,
    #[arg(long, default_value_t = 128.0)]
    pub margin: f64,
    #[arg(long, default_value_t = 10)]
    pub noise: usize,
    #[arg(long, default_value_t = 1.0)]
    pub lambda: f64,
    #[arg(long, default_value_t = 0.05)]
    pub step: f64,
    #[arg(long, default_value_t = 50)]
    pub batch: usize,
    #[arg(long, default_value_t = 10)]
    pub epochs: usize,
    /// Checkpoint to write.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct TrainCcae {
    /// One bracketed tree per line, optionally prefixed by `label<TAB>`.
    #[arg(long)]
    pub trees: PathBuf,
    /// ccae-a, ccae-b, ccae-c or ccae-d.
    #[arg(long, default_value = "ccae-b")]
    pub model: CcaeKind,
    /// Reconstruction signal.
    #[arg(long, value_enum, default_value_t = Signal::Rae)]
    pub mode: Signal,
    #[arg(long, default_value_t = 50)]
    pub dim: usize,
    #[arg(long, default_value_t = 0.2)]
    pub alpha: f64,
    #[arg(long, default_value_t = 1e-4)]
    pub lambda: f64,
    /// Maximum L-BFGS iterations.
    #[arg(long, default_value_t = 100)]
    pub epochs: usize,
    /// Pretrained word embeddings used to initialise the lexicon.
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct TrainFrameid {
    /// Training instances, `unit<TAB>frame<TAB>slot:w,w;…` per line.
    #[arg(long)]
    pub frames: PathBuf,
    /// Frame lexicon, `unit<TAB>frame,frame` per line.
    #[arg(long)]
    pub lexicon: Option<PathBuf>,
    /// Word embeddings for the context blocks (wsabie only).
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = FrameModel::Wsabie)]
    pub model: FrameModel,
    /// Joint space size.
    #[arg(long, default_value_t = 256)]
    pub dim: usize,
    #[arg(long, default_value_t = 0.01)]
    pub margin: f64,
    #[arg(long, default_value_t = 1e-4)]
    pub step: f64,
    /// WARP passes, or L-BFGS iterations for the log-linear model.
    #[arg(long, default_value_t = 10)]
    pub epochs: usize,
    /// L2 constant of the log-linear model.
    #[arg(long, default_value_t = 1e-3)]
    pub lambda: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct EvalCldc {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Labelled training documents.
    #[arg(long)]
    pub src: PathBuf,
    /// Labelled test documents.
    #[arg(long)]
    pub tgt: PathBuf,
    #[arg(long)]
    pub src_lang: String,
    #[arg(long)]
    pub tgt_lang: String,
    /// Perceptron passes.
    #[arg(long, default_value_t = 10)]
    pub epochs: usize,
    /// Per-document predictions.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct Encode {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Sentences, one per line (bicvm checkpoints).
    #[arg(long)]
    pub src: Option<PathBuf>,
    /// Language of `--src`; defaults to the first in the checkpoint.
    #[arg(long)]
    pub src_lang: Option<String>,
    /// Trees, one per line (ccae checkpoints).
    #[arg(long)]
    pub trees: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct Nn {
    #[arg(long, conflicts_with = "embeddings", required_unless_present = "embeddings")]
    pub checkpoint: Option<PathBuf>,
    /// Word embedding file (`V d` header, then `word v1 … vd`).
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    #[arg(long)]
    pub query: String,
    #[arg(long, default_value_t = 10)]
    pub k: usize,
    /// Table to search in a bicvm checkpoint; defaults to the first language.
    #[arg(long)]
    pub src_lang: Option<String>,
}

#[derive(Args, Debug)]
pub struct GradCheck {
    /// rae, unfolding, denoising, ccae-a…d, warp, loglinear, bicvm, bicvm-doc or all.
    #[arg(long, value_parser = parse_targets)]
    pub model: Targets,
    #[arg(long, default_value_t = 4)]
    pub dim: usize,
    /// Random instances per model.
    #[arg(long, default_value_t = 5)]
    pub instances: usize,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .format_target(false)
        .init();
    let cli = Cli::parse();
    let seed = match std::env::var("CVSM_SEED") {
        Ok(v) => match v.trim().parse() {
            Ok(s) => s,
            Err(_) => {
                eprintln!("error: CVSM_SEED must be an unsigned integer, got `{v}`");
                return ExitCode::from(2);
            }
        },
        Err(_) => cli.seed,
    };
    let started = std::time::Instant::now();
    let result = match &cli.command {
        Command::TrainBicvm(a) => commands::train_bicvm(a, seed),
        Command::TrainCcae(a) => commands::train_ccae(a, seed),
        Command::TrainFrameid(a) => commands::train_frameid(a, seed),
        Command::EvalCldc(a) => commands::eval_cldc(a, seed),
        Command::Encode(a) => commands::encode(a),
        Command::Nn(a) => commands::nn(a),
        Command::GradCheck(a) => commands::grad_check(a, seed),
    };
    match result {
        Ok(code) => {
            log::info!("done wall_secs={:.3}", started.elapsed().as_secs_f64());
            code
        }
        Err(commands::Failure::Usage(m)) => {
            eprintln!("error: {m}\n\nFor more information, try '--help'.");
            ExitCode::from(2)
        }
        Err(commands::Failure::Run(e)) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
