use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::json;

use vqg_core::corpus::{filter_corpus, load_corpus, save_corpus, CorpusRecord};
use vqg_core::kb::KnowledgeBase;
use vqg_core::metrics::evaluate;
use vqg_core::pipeline::{enqueue_report, Pipeline, PipelineConfig, RunStatus};
use vqg_core::poincare::{train_embeddings, PoincareConfig, PoincareEmbedding};
use vqg_core::proposal::{nms, selective_search, ProposalSet, Region, ScoredRegionJson};
use vqg_core::qgen::{
    encode, tokenize, train_decoder, DecoderConfig, DecoderModel, Decoding, TrainingExample, Vocabulary,
};
use vqg_core::saliency::{compute_saliency, mask_image, otsu_threshold, region_saliency, SaliencyMap};
use vqg_core::synth;
use vqg_core::taxonomy::Taxonomy;
use vqg_core::uncertainty::{
    calibrate_threshold, classify, extract_features, f_measure, parse_distribution_lines, predict,
    time_classification, train_toy_classifier, ClassifierConfig, ClassifierModel, FeatureVector, Outcome,
    SoftmaxDistribution, Truth, UncertaintyMethod,
};
use vqg_core::{Error, Image, Result};

use crate::cli::*;

pub fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    match cli.command {
        Command::Propose(a) => propose(&cfg, a),
        Command::Saliency(a) => saliency(&cfg, a),
        Command::Classify(a) => classify_cmd(&cfg, a),
        Command::TargetWord(a) => target_word(&cfg, a),
        Command::TrainClassifier(a) => train_classifier(&cfg, a),
        Command::TrainEmbeddings(a) => train_embeddings_cmd(&cfg, a),
        Command::TrainQgen(a) => train_qgen(&cfg, a),
        Command::Ask(a) => ask(cfg, a),
        Command::Evaluate(a) => evaluate_cmd(&cfg, a),
        Command::BenchUnknown(a) => bench_unknown(&cfg, a),
        Command::FilterCorpus(a) => filter_corpus_cmd(a),
        Command::Serve(a) => serve(cfg, a),
        Command::Synth(a) => synth_cmd(&cfg, a),
    }
}

fn print_json(value: &impl Serialize) -> Result<()> {
    let mut out = std::io::stdout().lock();
    serde_json::to_writer(&mut out, value)?;
    writeln!(out).map_err(|e| Error::io("<stdout>", e))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)?).map_err(|e| Error::io(path, e))
}

fn write_lines<T: Serialize>(path: &Path, items: impl IntoIterator<Item = T>) -> Result<()> {
    let mut text = String::new();
    for item in items {
        text.push_str(&serde_json::to_string(&item)?);
        text.push('\n');
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn image_id(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

fn required(name: &str, flag: &Option<PathBuf>, from_config: &Option<PathBuf>) -> Result<PathBuf> {
    flag.clone()
        .or_else(|| from_config.clone())
        .ok_or_else(|| Error::Config(format!("{name} path is not set (flag or config)")))
}

fn apply_overrides(cfg: &mut PipelineConfig, o: &PipelineOverrides) {
    macro_rules! set {
        ($field:ident) => {
            if let Some(v) = &o.$field {
                cfg.$field = Some(v.clone());
            }
        };
    }
    set!(classifier);
    set!(taxonomy);
    set!(embedding);
    set!(decoder);
    set!(saliency_dir);
    if let Some(r) = &o.root {
        cfg.taxonomy_root = Some(r.clone());
    }
    if let Some(m) = o.method {
        cfg.method = m;
    }
    if let Some(t) = o.threshold {
        cfg.threshold = t;
    }
    if let Some(k) = o.k {
        cfg.k = k;
    }
    if let Some(d) = o.decoding {
        cfg.decoding = d;
    }
}

fn load_taxonomy(cfg: &PipelineConfig, flag: &Option<PathBuf>, root: &Option<String>) -> Result<Taxonomy> {
    let path = required("taxonomy", flag, &cfg.taxonomy)?;
    Taxonomy::load_tsv(path, root.as_deref().or(cfg.taxonomy_root.as_deref()))
}

fn saliency_map(cfg: &PipelineConfig, path: &Path, image: &Image, external: Option<&Path>) -> Result<SaliencyMap> {
    if let Some(p) = external {
        return SaliencyMap::load_external(p, image);
    }
    Ok(match cfg.saliency_for(path, image)? {
        Some(m) => m,
        None => compute_saliency(image),
    })
}

fn propose(cfg: &PipelineConfig, a: ProposeArgs) -> Result<()> {
    cfg.proposal.validate()?;
    let image = Image::load(&a.image)?;
    let map = saliency_map(cfg, &a.image, &image, a.saliency.as_deref())?;
    let otsu = otsu_threshold(&map);
    let source = if cfg.proposal.propose_on_masked && !a.no_mask {
        mask_image(&image, &map, otsu.theta)?
    } else {
        image.clone()
    };
    let regions = nms(&selective_search(&source, &cfg.proposal)?, cfg.proposal.nms_iou);
    let set = ProposalSet {
        image_id: image_id(&a.image),
        regions: regions
            .iter()
            .map(|r| {
                let mut j = ScoredRegionJson::from(r);
                j.i_region = Some(region_saliency(r, &map, otsu.theta).i_region);
                j
            })
            .collect(),
    };
    match &a.out {
        Some(p) => write_json(p, &set),
        None => print_json(&set),
    }
}

fn saliency(cfg: &PipelineConfig, a: SaliencyArgs) -> Result<()> {
    let image = Image::load(&a.image)?;
    let map = saliency_map(cfg, &a.image, &image, None)?;
    let otsu = otsu_threshold(&map);
    map.save_png(&a.out)?;
    if let Some(p) = &a.masked {
        mask_image(&image, &map, otsu.theta)?.save(p)?;
    }
    print_json(&json!({
        "image_id": image_id(&a.image),
        "width": map.width(),
        "height": map.height(),
        "theta": otsu.theta,
        "degenerate": otsu.degenerate,
    }))
}

fn parse_region(coords: &[u32], image: &Image) -> Result<Region> {
    if coords.len() != 4 {
        return Err(Error::InvalidInput(format!("region needs 4 coordinates, got {}", coords.len())));
    }
    let r = Region::new(coords[0], coords[1], coords[2], coords[3]);
    r.validate(image.width(), image.height())?;
    Ok(r)
}

fn classify_cmd(cfg: &PipelineConfig, a: ClassifyArgs) -> Result<()> {
    let method = a.method.unwrap_or(cfg.method);
    let threshold = a.threshold.unwrap_or(cfg.threshold);
    if let Some(path) = &a.distributions {
        for rec in parse_distribution_lines(&read_text(path)?)? {
            let verdict = classify(&rec.distribution()?, method, threshold);
            print_json(&json!({"id": rec.id, "verdict": verdict}))?;
        }
        return Ok(());
    }
    let path = a.image.expect("clap requires an image without --distributions");
    let model = ClassifierModel::load(required("classifier", &a.classifier, &cfg.classifier)?)?;
    let image = Image::load(&path)?;
    let region = match &a.region {
        Some(c) => parse_region(c, &image)?,
        None => Region::full(image.width(), image.height()),
    };
    let dist = predict(&model, &extract_features(&image, Some(&region)))?;
    print_json(&json!({
        "id": image_id(&path),
        "region": region,
        "p": dist.probs(),
        "labels": dist.labels(),
        "verdict": classify(&dist, method, threshold),
    }))
}

fn target_word(cfg: &PipelineConfig, a: TargetWordArgs) -> Result<()> {
    let tax = load_taxonomy(cfg, &a.taxonomy, &a.root)?;
    if let Some(words) = &a.words {
        let refs: Vec<&str> = words.iter().map(|w| w.trim()).collect();
        return print_json(&tax.lowest_common_hypernym(&refs)?);
    }
    let path = a.distributions.expect("clap requires words or distributions");
    let k = a.k.unwrap_or(cfg.k);
    for rec in parse_distribution_lines(&read_text(&path)?)? {
        let target = tax.select_target_word(&rec.distribution()?, k)?;
        print_json(&json!({"id": rec.id, "target": target}))?;
    }
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct LabeledFeatures {
    features: Vec<f64>,
    label: String,
}

fn train_classifier(cfg: &PipelineConfig, a: TrainClassifierArgs) -> Result<()> {
    let data: Vec<(FeatureVector, String)> = match (&a.data, a.synthetic) {
        (Some(path), _) => read_text(path)?
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(n, l)| {
                serde_json::from_str::<LabeledFeatures>(l)
                    .map(|r| (FeatureVector(r.features), r.label))
                    .map_err(|e| Error::Data(format!("line {}: {e}", n + 1)))
            })
            .collect::<Result<_>>()?,
        (None, Some(n)) => synth::classifier_training_set(n, cfg.seed),
        (None, None) => unreachable!("clap requires --data or --synthetic"),
    };
    let defaults = ClassifierConfig::default();
    let config = ClassifierConfig {
        epochs: a.epochs.unwrap_or(defaults.epochs),
        learning_rate: a.lr.unwrap_or(defaults.learning_rate),
        seed: cfg.seed,
        ..defaults
    };
    let model = train_toy_classifier(&data, &config)?;
    let correct = data
        .iter()
        .filter(|(f, l)| {
            predict(&model, f)
                .map(|d| &d.labels()[d.argmax()] == l)
                .unwrap_or(false)
        })
        .count();
    model.save(&a.out)?;
    print_json(&json!({
        "labels": model.labels,
        "samples": data.len(),
        "train_accuracy": correct as f64 / data.len() as f64,
        "out": a.out,
    }))
}

fn train_embeddings_cmd(cfg: &PipelineConfig, a: TrainEmbeddingsArgs) -> Result<()> {
    let tax = load_taxonomy(cfg, &a.taxonomy, &a.root)?;
    let d = PoincareConfig::default();
    let config = PoincareConfig {
        dim: a.dim.unwrap_or(d.dim),
        epochs: a.epochs.unwrap_or(d.epochs),
        lr: a.lr.unwrap_or(d.lr),
        negatives: a.negatives.unwrap_or(d.negatives),
        seed: cfg.seed,
        ..d
    };
    let emb = train_embeddings(&tax, &config)?;
    emb.save(&a.out)?;
    print_json(&json!({
        "words": emb.words.len(),
        "dim": emb.dim,
        "final_loss": emb.meta.epoch_losses.last(),
        "out": a.out,
    }))
}

/// Loads corpus images once each, by name relative to a directory.
struct ImageCache {
    dir: PathBuf,
    images: HashMap<String, Image>,
}

impl ImageCache {
    fn new(dir: &Path) -> Self {
        Self {
            dir: dir.to_path_buf(),
            images: HashMap::new(),
        }
    }

    fn resolve(&self, name: &str) -> PathBuf {
        let direct = self.dir.join(name);
        if direct.is_file() {
            return direct;
        }
        ["png", "ppm"]
            .iter()
            .map(|ext| self.dir.join(format!("{name}.{ext}")))
            .find(|p| p.is_file())
            .unwrap_or(direct)
    }

    fn get(&mut self, name: &str) -> Result<&Image> {
        if !self.images.contains_key(name) {
            let img = Image::load(self.resolve(name))?;
            self.images.insert(name.to_string(), img);
        }
        Ok(&self.images[name])
    }
}

/// Decoder inputs for one corpus record: `(features, σ)`. Models without a
/// word input are the image-only baseline and see whole-image features.
fn decoder_inputs(
    rec: &CorpusRecord,
    images: &mut ImageCache,
    embedding: Option<&PoincareEmbedding>,
    baseline: bool,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let image = images.get(&rec.image)?;
    if baseline {
        return Ok((extract_features(image, None).0, Vec::new()));
    }
    let region = rec.region();
    region.validate(image.width(), image.height())?;
    let emb = embedding.ok_or_else(|| Error::Config("embedding path is not set (flag or config)".into()))?;
    Ok((encode(image, &region)?.0, emb.conditioning(&rec.target_word)?))
}

fn train_qgen(cfg: &PipelineConfig, a: TrainQgenArgs) -> Result<()> {
    let corpus = load_corpus(&a.corpus)?;
    if corpus.is_empty() {
        return Err(Error::Data("corpus is empty".into()));
    }
    let embedding = if a.baseline {
        None
    } else {
        Some(PoincareEmbedding::load(required("embedding", &a.embedding, &cfg.embedding)?)?)
    };
    let token_lists: Vec<Vec<String>> = corpus.iter().map(|r| tokenize(&r.question)).collect();
    let vocab = Vocabulary::build(token_lists.iter().map(Vec::as_slice));
    let mut images = ImageCache::new(&a.images_dir);
    let mut examples = Vec::with_capacity(corpus.len());
    for (rec, tokens) in corpus.iter().zip(&token_lists) {
        let (features, word) = decoder_inputs(rec, &mut images, embedding.as_ref(), a.baseline)?;
        examples.push(TrainingExample {
            features,
            word,
            tokens: vocab.encode_strict(tokens)?,
        });
    }
    let d = DecoderConfig::default();
    let config = DecoderConfig {
        steps: a.steps.unwrap_or(d.steps),
        hidden: a.hidden.unwrap_or(d.hidden),
        embed_dim: a.embed_dim.unwrap_or(d.embed_dim),
        batch_size: a.batch_size.unwrap_or(d.batch_size),
        lr: a.lr.unwrap_or(d.lr),
        seed: cfg.seed,
        ..d
    };
    let (params, report) = train_decoder(&examples, vocab.len(), &config)?;
    let model = DecoderModel::new(vocab, config, params)?;
    model.save(&a.out)?;
    print_json(&json!({
        "version": model.version,
        "baseline": a.baseline,
        "examples": examples.len(),
        "vocabulary": model.vocab.len(),
        "initial_token_ce": report.initial_token_ce,
        "final_token_ce": report.final_token_ce,
        "out": a.out,
    }))
}

fn ask(mut cfg: PipelineConfig, a: AskArgs) -> Result<()> {
    apply_overrides(&mut cfg, &a.pipeline);
    let pipeline = Pipeline::load(cfg)?;
    let known = pipeline.classifier.labels.clone();
    let mut kb = match &a.kb {
        Some(p) => KnowledgeBase::load_or_new(p, known)?,
        None => KnowledgeBase::new(known),
    };

    let mut items = Vec::new();
    let mut failures: Vec<(String, Error)> = Vec::new();
    for path in &a.images {
        let loaded = Image::load(path).and_then(|img| {
            let sal = pipeline.config.saliency_for(path, &img)?;
            Ok((image_id(path), img, sal))
        });
        match loaded {
            Ok(item) => items.push((item, path)),
            Err(e) => failures.push((image_id(path), e)),
        }
    }
    let inputs: Vec<_> = items.iter().map(|(item, _)| item.clone()).collect();
    let results = pipeline.run_many(&inputs, &kb);

    let mut queued = 0;
    for ((_, path), result) in items.iter().zip(results) {
        match result {
            Ok(report) => {
                if a.enqueue && report.status == RunStatus::Asked {
                    let stored = fs::canonicalize(path).unwrap_or_else(|_| path.to_path_buf());
                    if enqueue_report(&mut kb, &report, Some(stored.display().to_string())) {
                        queued += 1;
                    }
                }
                print_json(&report)?;
            }
            Err(e) => failures.push((image_id(path), e)),
        }
    }
    for (id, e) in &failures {
        print_json(&json!({"image_id": id, "error": {"code": e.code(), "message": e.to_string()}}))?;
    }
    if a.enqueue {
        let path = a.kb.as_ref().expect("clap requires --kb with --enqueue");
        kb.save(path)?;
        eprintln!("queued {queued} new question(s) in {}", path.display());
    }
    if !failures.is_empty() {
        return Err(Error::Data(format!(
            "{} of {} images failed",
            failures.len(),
            a.images.len()
        )));
    }
    Ok(())
}

fn evaluate_cmd(cfg: &PipelineConfig, a: EvaluateArgs) -> Result<()> {
    let references = load_corpus(&a.corpus)?;
    let mut keys: Vec<(String, [u32; 4])> = Vec::new();
    let mut grouped: HashMap<(String, [u32; 4]), (Vec<Vec<String>>, String)> = HashMap::new();
    for r in &references {
        let key = (r.image.clone(), r.region);
        let entry = grouped.entry(key.clone()).or_insert_with(|| {
            keys.push(key);
            (Vec::new(), r.target_word.clone())
        });
        entry.0.push(tokenize(&r.question));
    }

    let mut candidates: HashMap<(String, [u32; 4]), Vec<String>> = HashMap::new();
    let mode;
    if let Some(path) = &a.candidates {
        for c in load_corpus(path)? {
            candidates.entry((c.image, c.region)).or_insert_with(|| tokenize(&c.question));
        }
        mode = "file".to_string();
    } else if let Some(path) = &a.decoder {
        let model = DecoderModel::load(path)?;
        let baseline = model.word_dim() == 0;
        let embedding = match (&a.embedding, &cfg.embedding) {
            (None, None) => None,
            (flag, conf) => Some(PoincareEmbedding::load(required("embedding", flag, conf)?)?),
        };
        let decoding: Decoding = a.decoding.unwrap_or(cfg.decoding);
        let mut images = ImageCache::new(a.images_dir.as_deref().expect("clap requires --images-dir"));
        for key in &keys {
            let rec = CorpusRecord {
                image: key.0.clone(),
                region: key.1,
                target_word: grouped[key].1.clone(),
                question: String::new(),
            };
            let (features, word) = decoder_inputs(&rec, &mut images, embedding.as_ref(), baseline)?;
            candidates.insert(key.clone(), model.generate(&features, &word, decoding)?);
        }
        mode = if baseline {
            "cnn_lstm".to_string()
        } else {
            decoding.to_string()
        };
    } else {
        return Err(Error::InvalidInput("give --candidates or --decoder".into()));
    }

    let missing = keys.iter().filter(|k| !candidates.contains_key(*k)).count();
    let pairs: Vec<(Vec<String>, Vec<Vec<String>>)> = keys
        .iter()
        .map(|k| (candidates.get(k).cloned().unwrap_or_default(), grouped[k].0.clone()))
        .collect();
    print_json(&json!({
        "mode": mode,
        "segments": pairs.len(),
        "missing_candidates": missing,
        "report": evaluate(&pairs)?,
    }))
}

fn bench_unknown(cfg: &PipelineConfig, a: BenchUnknownArgs) -> Result<()> {
    let (known, unknown) = match (&a.distributions, a.synthetic) {
        (Some(path), _) => {
            let mut known = Vec::new();
            let mut unknown = Vec::new();
            for rec in parse_distribution_lines(&read_text(path)?)? {
                let d = rec.distribution()?;
                match rec.truth {
                    Some(t) => known.push((d, t)),
                    None => unknown.push(d),
                }
            }
            (known, unknown)
        }
        (None, Some(n)) => synth::histogram_benchmark(n, cfg.seed)?,
        (None, None) => unreachable!("clap requires --distributions or --synthetic"),
    };
    let methods = a.methods.clone().unwrap_or_else(|| {
        vec![
            UncertaintyMethod::Entropy,
            UncertaintyMethod::LeastConfident,
            UncertaintyMethod::Margin,
        ]
    });
    let all: Vec<SoftmaxDistribution> = known
        .iter()
        .map(|(d, _)| d.clone())
        .chain(unknown.iter().cloned())
        .collect();
    let mut results = Vec::new();
    for method in methods {
        let cal = calibrate_threshold(method, &known, &unknown, a.folds)?;
        let outcomes: Vec<Outcome> = known
            .iter()
            .map(|(d, l)| Outcome {
                truth: Truth::Known(l.clone()),
                verdict: classify(d, method, cal.threshold),
            })
            .chain(unknown.iter().map(|d| Outcome {
                truth: Truth::Unknown,
                verdict: classify(d, method, cal.threshold),
            }))
            .collect();
        let timing = time_classification(&all, method, cal.threshold, a.repetitions)?;
        results.push(json!({
            "method": method,
            "calibration": cal,
            "overall": f_measure(&outcomes),
            "timing": timing,
        }));
    }
    print_json(&json!({
        "known": known.len(),
        "unknown": unknown.len(),
        "folds": a.folds,
        "results": results,
    }))
}

fn filter_corpus_cmd(a: FilterCorpusArgs) -> Result<()> {
    let records = load_corpus(&a.input)?;
    let (kept, report) = filter_corpus(&records, a.cap);
    save_corpus(&a.out, &kept)?;
    print_json(&report)
}

fn serve(mut cfg: PipelineConfig, a: ServeArgs) -> Result<()> {
    apply_overrides(&mut cfg, &a.pipeline);
    let known = match &cfg.classifier {
        Some(p) => ClassifierModel::load(p)?.labels,
        None => Vec::new(),
    };
    let taxonomy = match &cfg.taxonomy {
        Some(p) => Some(Taxonomy::load_tsv(p, cfg.taxonomy_root.as_deref())?),
        None => None,
    };
    let kb = KnowledgeBase::load_or_new(&a.kb, known)?;
    if !a.kb.exists() {
        kb.save(&a.kb)?;
    }
    let state = crate::server::AppState::new(kb, a.kb.clone(), taxonomy);
    let app = crate::server::router(state, a.ui_dir.clone());
    let runtime = tokio::runtime::Runtime::new().map_err(|e| Error::io("<runtime>", e))?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(a.bind)
            .await
            .map_err(|e| Error::io(a.bind.to_string(), e))?;
        eprintln!("serving {} on http://{}", a.kb.display(), a.bind);
        axum::serve(listener, app)
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await
            .map_err(|e| Error::io(a.bind.to_string(), e))
    })
}

#[derive(Serialize)]
struct TruthObject {
    class: String,
    known: bool,
    region: [u32; 4],
}

fn synth_cmd(cfg: &PipelineConfig, a: SynthArgs) -> Result<()> {
    let seed = cfg.seed;
    let images_dir = a.out.join("images");
    fs::create_dir_all(&images_dir).map_err(|e| Error::io(&images_dir, e))?;

    let scenes: Vec<synth::Scene> = (0..a.scenes)
        .map(|i| synth::mixed_scene(seed, i))
        .chain((0..a.known_scenes).map(|i| synth::known_scene(seed, i)))
        .collect();
    let corpus_seed = seed.wrapping_add(1000);
    let corpus_scenes: Vec<synth::Scene> = (0..a.corpus_scenes)
        .map(|i| synth::mixed_scene(corpus_seed, i))
        .collect();
    for s in scenes.iter().chain(&corpus_scenes) {
        s.image.save(images_dir.join(format!("{}.png", s.id)))?;
    }

    let truth = scenes.iter().map(|s| {
        json!({
            "image": s.id,
            "objects": s.objects.iter().map(|o| TruthObject {
                class: synth::CLASSES[o.class].name.to_string(),
                known: synth::CLASSES[o.class].known,
                region: o.region.coords(),
            }).collect::<Vec<_>>(),
        })
    });
    write_lines(&a.out.join("truth.jsonl"), truth)?;

    let tax = synth::toy_taxonomy();
    let tsv = a.out.join("taxonomy.tsv");
    fs::write(&tsv, tax.to_tsv()).map_err(|e| Error::io(&tsv, e))?;

    let corpus = synth::question_corpus(&corpus_scenes, &tax, seed);
    save_corpus(a.out.join("corpus.jsonl"), &corpus)?;

    let train = synth::classifier_training_set(a.per_class, seed);
    write_lines(
        &a.out.join("classifier_train.jsonl"),
        train.iter().map(|(f, l)| LabeledFeatures {
            features: f.0.clone(),
            label: l.clone(),
        }),
    )?;

    let config = "\
# Paths are relative to this file.
classifier = \"classifier.json\"
taxonomy = \"taxonomy.tsv\"
embedding = \"embedding.json\"
# decoder = \"decoder.json\"
method = \"entropy\"
threshold = 0.5
k = 2
";
    let cfg_path = a.out.join("config.toml");
    fs::write(&cfg_path, config).map_err(|e| Error::io(&cfg_path, e))?;

    print_json(&json!({
        "scenes": scenes.len(),
        "corpus_scenes": corpus_scenes.len(),
        "corpus_records": corpus.len(),
        "classifier_samples": train.len(),
        "out": a.out,
    }))
}
