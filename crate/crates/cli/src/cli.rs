use std::net::SocketAddr;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use vqg_core::qgen::Decoding;
use vqg_core::uncertainty::UncertaintyMethod;

#[derive(Debug, Parser)]
#[command(name = "vqg", version, about = "Find unknown objects in images and ask what they are")]
pub struct Cli {
    /// Pipeline config (TOML). Flags given on the command line win.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed for every randomized step; overrides the config's seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Region proposals (selective search + NMS) with saliency scores.
    Propose(ProposeArgs),
    /// Saliency map and its Otsu threshold.
    Saliency(SaliencyArgs),
    /// Known/unknown verdicts for an image region or for stored distributions.
    Classify(ClassifyArgs),
    /// Lowest common hypernym of words or of top-k labels.
    TargetWord(TargetWordArgs),
    /// Train a toy color-histogram classifier.
    TrainClassifier(TrainClassifierArgs),
    /// Train Poincaré embeddings of a taxonomy.
    TrainEmbeddings(TrainEmbeddingsArgs),
    /// Train the question decoder on a corpus.
    TrainQgen(TrainQgenArgs),
    /// Run the full pipeline on images and optionally queue the questions.
    Ask(AskArgs),
    /// BLEU and METEOR-lite of generated questions against a corpus.
    Evaluate(EvaluateArgs),
    /// Threshold calibration, F-measure and timing of the unknown detectors.
    BenchUnknown(BenchUnknownArgs),
    /// Drop non-"what" and "what color" questions and cap repeats.
    FilterCorpus(FilterCorpusArgs),
    /// Serve the question/answer API over a knowledge base.
    Serve(ServeArgs),
    /// Write a synthetic dataset: scenes, taxonomy, corpus, classifier data.
    Synth(SynthArgs),
}

/// Pipeline settings that can override the config file.
#[derive(Debug, Default, Args)]
pub struct PipelineOverrides {
    #[arg(long)]
    pub classifier: Option<PathBuf>,
    #[arg(long)]
    pub taxonomy: Option<PathBuf>,
    /// Taxonomy root, when it cannot be inferred.
    #[arg(long)]
    pub root: Option<String>,
    #[arg(long)]
    pub embedding: Option<PathBuf>,
    #[arg(long)]
    pub decoder: Option<PathBuf>,
    #[arg(long)]
    pub saliency_dir: Option<PathBuf>,
    #[arg(long)]
    pub method: Option<UncertaintyMethod>,
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long)]
    pub k: Option<usize>,
    /// `greedy` or `beam:<width>`.
    #[arg(long)]
    pub decoding: Option<Decoding>,
}

#[derive(Debug, Args)]
pub struct ProposeArgs {
    pub image: PathBuf,
    /// External 8-bit saliency map; computed when absent.
    #[arg(long)]
    pub saliency: Option<PathBuf>,
    /// Propose on the original image instead of the saliency-masked one.
    #[arg(long)]
    pub no_mask: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SaliencyArgs {
    pub image: PathBuf,
    /// Where to write the 8-bit saliency PNG.
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the image with sub-threshold pixels blacked out.
    #[arg(long)]
    pub masked: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ClassifyArgs {
    /// Image to classify (whole image unless --region is given).
    #[arg(required_unless_present = "distributions", conflicts_with = "distributions")]
    pub image: Option<PathBuf>,
    /// `x_tl,y_tl,x_br,y_br`.
    #[arg(long, value_delimiter = ',')]
    pub region: Option<Vec<u32>>,
    /// Distribution JSON lines instead of an image.
    #[arg(long)]
    pub distributions: Option<PathBuf>,
    #[arg(long)]
    pub classifier: Option<PathBuf>,
    #[arg(long)]
    pub method: Option<UncertaintyMethod>,
    #[arg(long)]
    pub threshold: Option<f64>,
}

#[derive(Debug, Args)]
pub struct TargetWordArgs {
    #[arg(long)]
    pub taxonomy: Option<PathBuf>,
    #[arg(long)]
    pub root: Option<String>,
    /// Comma-separated words.
    #[arg(long, value_delimiter = ',', required_unless_present = "distributions")]
    pub words: Option<Vec<String>>,
    /// Distribution JSON lines; the top-k labels of each line are used.
    #[arg(long, conflicts_with = "words")]
    pub distributions: Option<PathBuf>,
    #[arg(long)]
    pub k: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TrainClassifierArgs {
    /// JSON lines `{"features": [...], "label": str}`.
    #[arg(long, required_unless_present = "synthetic")]
    pub data: Option<PathBuf>,
    /// Generate this many patches per known synthetic class instead.
    #[arg(long, conflicts_with = "data")]
    pub synthetic: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
}

#[derive(Debug, Args)]
pub struct TrainEmbeddingsArgs {
    #[arg(long)]
    pub taxonomy: Option<PathBuf>,
    #[arg(long)]
    pub root: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub negatives: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TrainQgenArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// Directory holding the corpus images (`<image>`, `<image>.png` or `<image>.ppm`).
    #[arg(long)]
    pub images_dir: PathBuf,
    #[arg(long)]
    pub embedding: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Train the image-only baseline: whole-image features, no target word.
    #[arg(long)]
    pub baseline: bool,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub embed_dim: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
}

#[derive(Debug, Args)]
pub struct AskArgs {
    #[arg(required = true)]
    pub images: Vec<PathBuf>,
    /// Knowledge base: consulted for duplicates and, with --enqueue, updated.
    #[arg(long)]
    pub kb: Option<PathBuf>,
    /// Append the generated questions to the knowledge base.
    #[arg(long, requires = "kb")]
    pub enqueue: bool,
    #[command(flatten)]
    pub pipeline: PipelineOverrides,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Reference corpus (JSON lines).
    #[arg(long)]
    pub corpus: PathBuf,
    /// Candidate questions in the corpus format, matched by image and region.
    #[arg(long, conflicts_with = "decoder")]
    pub candidates: Option<PathBuf>,
    /// Generate candidates with this decoder instead.
    #[arg(long, requires = "images_dir")]
    pub decoder: Option<PathBuf>,
    #[arg(long)]
    pub images_dir: Option<PathBuf>,
    #[arg(long)]
    pub embedding: Option<PathBuf>,
    #[arg(long)]
    pub decoding: Option<Decoding>,
}

#[derive(Debug, Args)]
pub struct BenchUnknownArgs {
    /// Distribution JSON lines with `truth` set for known samples.
    #[arg(long, required_unless_present = "synthetic")]
    pub distributions: Option<PathBuf>,
    /// Use the Gaussian color-histogram benchmark with this many samples per class.
    #[arg(long, conflicts_with = "distributions")]
    pub synthetic: Option<usize>,
    /// Methods to evaluate; all three when omitted.
    #[arg(long, value_delimiter = ',')]
    pub methods: Option<Vec<UncertaintyMethod>>,
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
    #[arg(long, default_value_t = 5)]
    pub repetitions: usize,
}

#[derive(Debug, Args)]
pub struct FilterCorpusArgs {
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = vqg_core::corpus::QUESTION_CAP)]
    pub cap: usize,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub kb: PathBuf,
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub bind: SocketAddr,
    /// Static files for the browser UI.
    #[arg(long)]
    pub ui_dir: Option<PathBuf>,
    #[command(flatten)]
    pub pipeline: PipelineOverrides,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    /// Scenes with one known and one unknown object.
    #[arg(long, default_value_t = 20)]
    pub scenes: usize,
    /// Scenes with two known objects.
    #[arg(long, default_value_t = 0)]
    pub known_scenes: usize,
    /// Scenes used only for the question corpus.
    #[arg(long, default_value_t = 100)]
    pub corpus_scenes: usize,
    /// Classifier training patches per known class.
    #[arg(long, default_value_t = 60)]
    pub per_class: usize,
}
