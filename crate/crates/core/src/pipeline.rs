//! End-to-end question generation for one image.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::kb::{KbRecord, KnowledgeBase};
use crate::poincare::PoincareEmbedding;
use crate::proposal::{nms, selective_search, ProposalConfig, Region};
use crate::qgen::{encode, template_question, Decoding, DecoderModel, QuestionRecord, ENCODED_DIM, TEMPLATE_VERSION};
use crate::saliency::{compute_saliency, mask_image, otsu_threshold, region_saliency, select_target, SaliencyMap, TargetCandidate};
use crate::taxonomy::{TargetWord, Taxonomy};
use crate::uncertainty::{classify, extract_features, predict, ClassifierModel, UncertaintyMethod, UnknownVerdict, FEATURE_DIM};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub proposal: ProposalConfig,
    /// Directory of precomputed 8-bit saliency maps named `<image stem>.png`;
    /// maps are computed when unset.
    pub saliency_dir: Option<PathBuf>,
    pub method: UncertaintyMethod,
    pub threshold: f64,
    /// Number of top labels whose common hypernym becomes the target word.
    pub k: usize,
    pub classifier: Option<PathBuf>,
    pub taxonomy: Option<PathBuf>,
    pub taxonomy_root: Option<String>,
    pub embedding: Option<PathBuf>,
    /// Without a decoder, questions come from the fixed template.
    pub decoder: Option<PathBuf>,
    pub decoding: Decoding,
    /// Cosine similarity above which an answered exemplar suppresses a target.
    pub dedup_similarity: f64,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            proposal: ProposalConfig::default(),
            saliency_dir: None,
            method: UncertaintyMethod::Entropy,
            threshold: 0.5,
            k: 2,
            classifier: None,
            taxonomy: None,
            taxonomy_root: None,
            embedding: None,
            decoder: None,
            decoding: Decoding::Greedy,
            dedup_similarity: 0.95,
            seed: 0,
        }
    }
}

fn require_file(name: &str, path: &Option<PathBuf>) -> Result<PathBuf> {
    let p = path
        .clone()
        .ok_or_else(|| Error::Config(format!("{name} path is not set")))?;
    if !p.is_file() {
        return Err(Error::Config(format!("{name} file {} does not exist", p.display())));
    }
    Ok(p)
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Read a TOML config; relative model and map paths are taken relative
    /// to the config file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text)?;
        if let Some(base) = path.parent() {
            cfg.rebase(base);
        }
        Ok(cfg)
    }

    fn rebase(&mut self, base: &Path) {
        for p in [
            &mut self.saliency_dir,
            &mut self.classifier,
            &mut self.taxonomy,
            &mut self.embedding,
            &mut self.decoder,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }

    /// Parameter checks that need no files.
    pub fn validate(&self) -> Result<()> {
        self.proposal.validate()?;
        if self.k == 0 {
            return Err(Error::Config("k must be at least 1".into()));
        }
        if !self.threshold.is_finite() {
            return Err(Error::Config("threshold must be finite".into()));
        }
        if !(0.0..=1.0).contains(&self.dedup_similarity) {
            return Err(Error::Config("dedup_similarity must lie in [0, 1]".into()));
        }
        if let Some(dir) = &self.saliency_dir {
            if !dir.is_dir() {
                return Err(Error::Config(format!("saliency_dir {} is not a directory", dir.display())));
            }
        }
        Ok(())
    }

    /// External saliency map for `image_path`, if a map directory is set.
    pub fn saliency_for(&self, image_path: &Path, image: &Image) -> Result<Option<SaliencyMap>> {
        let Some(dir) = &self.saliency_dir else {
            return Ok(None);
        };
        let stem = image_path
            .file_stem()
            .ok_or_else(|| Error::InvalidInput(format!("no file name in {}", image_path.display())))?;
        let mut p = dir.join(stem);
        p.set_extension("png");
        SaliencyMap::load_external(p, image).map(Some)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Asked,
    NoUnknown,
    Suppressed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegionReport {
    pub region: Region,
    pub i_region: f64,
    pub verdict: UnknownVerdict,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub image_id: String,
    pub status: RunStatus,
    pub theta: f64,
    pub degenerate_threshold: bool,
    pub regions: Vec<RegionReport>,
    /// Index into `regions`.
    pub target: Option<usize>,
    pub target_word: Option<TargetWord>,
    pub question: Option<QuestionRecord>,
    /// Region features of the target.
    pub features: Option<Vec<f64>>,
}

impl RunReport {
    pub fn target_region(&self) -> Option<Region> {
        self.target.map(|i| self.regions[i].region)
    }
}

/// Loaded models; immutable and shareable across threads.
#[derive(Debug)]
pub struct Pipeline {
    pub config: PipelineConfig,
    pub classifier: ClassifierModel,
    pub taxonomy: Taxonomy,
    pub embedding: PoincareEmbedding,
    pub decoder: Option<DecoderModel>,
}

impl Pipeline {
    pub fn new(
        config: PipelineConfig,
        classifier: ClassifierModel,
        taxonomy: Taxonomy,
        embedding: PoincareEmbedding,
        decoder: Option<DecoderModel>,
    ) -> Result<Self> {
        config.validate()?;
        if classifier.feature_dim() != FEATURE_DIM {
            return Err(Error::Config(format!(
                "classifier expects {} features, extractor gives {FEATURE_DIM}",
                classifier.feature_dim()
            )));
        }
        let missing: Vec<&str> = classifier
            .labels
            .iter()
            .filter(|l| !taxonomy.contains(l))
            .map(String::as_str)
            .collect();
        if !missing.is_empty() {
            return Err(Error::NotFound(format!(
                "classifier labels not in taxonomy: {}",
                missing.join(", ")
            )));
        }
        if config.k > classifier.num_classes() {
            return Err(Error::Config(format!(
                "k = {} exceeds the {} classifier labels",
                config.k,
                classifier.num_classes()
            )));
        }
        embedding.check_covers(&taxonomy)?;
        if let Some(d) = &decoder {
            if d.feature_dim() != ENCODED_DIM || d.word_dim() != embedding.dim {
                return Err(Error::Config(format!(
                    "decoder expects {}+{} inputs, pipeline provides {}+{}",
                    d.feature_dim(),
                    d.word_dim(),
                    ENCODED_DIM,
                    embedding.dim
                )));
            }
        }
        Ok(Self {
            config,
            classifier,
            taxonomy,
            embedding,
            decoder,
        })
    }

    /// Load every model named in `config`.
    pub fn load(config: PipelineConfig) -> Result<Self> {
        config.validate()?;
        let classifier = ClassifierModel::load(require_file("classifier", &config.classifier)?)?;
        let taxonomy = Taxonomy::load_tsv(
            require_file("taxonomy", &config.taxonomy)?,
            config.taxonomy_root.as_deref(),
        )?;
        let embedding = PoincareEmbedding::load(require_file("embedding", &config.embedding)?)?;
        let decoder = match &config.decoder {
            Some(_) => Some(DecoderModel::load(require_file("decoder", &config.decoder)?)?),
            None => None,
        };
        Self::new(config, classifier, taxonomy, embedding, decoder)
    }

    pub fn model_version(&self) -> &str {
        self.decoder
            .as_ref()
            .map(|d| d.version.as_str())
            .unwrap_or(TEMPLATE_VERSION)
    }

    /// Saliency, proposals, open-set classification, target and word
    /// selection, then question generation.
    pub fn run(
        &self,
        image_id: &str,
        image: &Image,
        saliency: Option<&SaliencyMap>,
        kb: &KnowledgeBase,
    ) -> Result<RunReport> {
        let computed;
        let map = match saliency {
            Some(m) => m,
            None => {
                computed = compute_saliency(image);
                &computed
            }
        };
        let otsu = otsu_threshold(map);
        let proposal_image = if self.config.proposal.propose_on_masked {
            mask_image(image, map, otsu.theta)?
        } else {
            image.clone()
        };
        let proposals = selective_search(&proposal_image, &self.config.proposal)?;
        let regions = nms(&proposals, self.config.proposal.nms_iou);

        let mut candidates = Vec::with_capacity(regions.len());
        let mut dists = Vec::with_capacity(regions.len());
        let mut features = Vec::with_capacity(regions.len());
        for r in &regions {
            let f = extract_features(image, Some(r));
            let dist = predict(&self.classifier, &f)?;
            let verdict = classify(&dist, self.config.method, self.config.threshold);
            candidates.push(TargetCandidate {
                region: *r,
                score: region_saliency(r, map, otsu.theta),
                verdict,
            });
            dists.push(dist);
            features.push(f);
        }
        let mut report = RunReport {
            image_id: image_id.to_string(),
            status: RunStatus::NoUnknown,
            theta: otsu.theta,
            degenerate_threshold: otsu.degenerate,
            regions: candidates
                .iter()
                .map(|c| RegionReport {
                    region: c.region,
                    i_region: c.score.i_region,
                    verdict: c.verdict.clone(),
                })
                .collect(),
            target: None,
            target_word: None,
            question: None,
            features: None,
        };
        let Some(t) = select_target(&candidates, otsu.degenerate) else {
            return Ok(report);
        };
        let region = candidates[t].region;
        let word = self.taxonomy.select_target_word(&dists[t], self.config.k)?;
        report.target = Some(t);
        report.features = Some(features[t].0.clone());
        if kb.is_duplicate(&features[t].0, &word.word, self.config.dedup_similarity) {
            report.status = RunStatus::Suppressed;
            report.target_word = Some(word);
            return Ok(report);
        }

        let (tokens, mode) = self.generate(image, &region, &word.word)?;
        let mut question = QuestionRecord::new(image_id, region, &word.word, tokens, &mode, self.model_version());
        question.id = record_id(image_id, &region, &word.word, self.model_version());
        report.status = RunStatus::Asked;
        report.target_word = Some(word);
        report.question = Some(question);
        Ok(report)
    }

    fn generate(&self, image: &Image, region: &Region, word: &str) -> Result<(Vec<String>, String)> {
        if let Some(decoder) = &self.decoder {
            let f = encode(image, region)?;
            let sigma = self.embedding.conditioning(word)?;
            let tokens = decoder.generate(&f.0, &sigma, self.config.decoding)?;
            if !tokens.is_empty() {
                return Ok((tokens, self.config.decoding.to_string()));
            }
        }
        Ok((template_question(word)?, "template".to_string()))
    }

    /// Run over several images on all available cores; results keep input
    /// order.
    pub fn run_many(&self, items: &[(String, Image, Option<SaliencyMap>)], kb: &KnowledgeBase) -> Vec<Result<RunReport>> {
        let threads = std::thread::available_parallelism().map_or(1, |n| n.get()).min(items.len().max(1));
        let chunk = items.len().div_ceil(threads).max(1);
        std::thread::scope(|scope| {
            let handles: Vec<_> = items
                .chunks(chunk)
                .map(|part| {
                    scope.spawn(move || {
                        part.iter()
                            .map(|(id, img, sal)| self.run(id, img, sal.as_ref(), kb))
                            .collect::<Vec<_>>()
                    })
                })
                .collect();
            handles
                .into_iter()
                .flat_map(|h| h.join().expect("pipeline worker panicked"))
                .collect()
        })
    }
}

/// Stable id derived from what the question is about.
pub fn record_id(image_id: &str, region: &Region, word: &str, model_version: &str) -> String {
    let [a, b, c, d] = region.coords();
    let digest = Sha256::digest(format!("{image_id}|{a},{b},{c},{d}|{word}|{model_version}").as_bytes());
    hex::encode(&digest[..8])
}

/// Queue the question of `report` in `kb`. Returns whether a new record was
/// added.
pub fn enqueue_report(kb: &mut KnowledgeBase, report: &RunReport, image_path: Option<String>) -> bool {
    match (&report.question, &report.features) {
        (Some(q), Some(f)) => kb.enqueue(KbRecord::new(q.clone(), f.clone(), image_path)),
        _ => false,
    }
}
