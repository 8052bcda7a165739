//! Question generation: input encoding, vocabulary, recurrent decoder and
//! the template and retrieval generators.

mod decoder;
mod vocab;

pub use decoder::{
    token_cross_entropy, train_decoder, DecoderCache, DecoderConfig, DecoderModel, DecoderParams, DecoderState,
    TrainReport, TrainingExample,
};
pub use vocab::{detokenize, tokenize, Vocabulary, END, PAD, START, UNK};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::metrics::bleu;
use crate::proposal::Region;
use crate::uncertainty::{cosine_similarity, extract_features, FEATURE_DIM};

/// `l_R = [x_tl/W, y_tl/H, x_br/W, y_br/H, S_R/S_I]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpatialVector(pub [f64; 5]);

pub fn spatial_vector(region: &Region, width: u32, height: u32) -> Result<SpatialVector> {
    region.validate(width, height)?;
    let (w, h) = (width as f64, height as f64);
    Ok(SpatialVector([
        region.x_tl as f64 / w,
        region.y_tl as f64 / h,
        region.x_br as f64 / w,
        region.y_br as f64 / h,
        region.area() as f64 / (w * h),
    ]))
}

/// `f = [f_R, f_I, l_R]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EncodedFeatures(pub Vec<f64>);

impl EncodedFeatures {
    pub fn from_parts(region: &[f64], image: &[f64], spatial: &SpatialVector) -> Result<Self> {
        if region.len() != image.len() {
            return Err(Error::InvalidInput(format!(
                "region features have {} dims, image features {}",
                region.len(),
                image.len()
            )));
        }
        let mut v = Vec::with_capacity(2 * region.len() + 5);
        v.extend_from_slice(region);
        v.extend_from_slice(image);
        v.extend_from_slice(&spatial.0);
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidInput("non-finite feature".into()));
        }
        Ok(Self(v))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    fn block(&self) -> usize {
        (self.0.len() - 5) / 2
    }

    pub fn region_features(&self) -> &[f64] {
        &self.0[..self.block()]
    }

    pub fn image_features(&self) -> &[f64] {
        &self.0[self.block()..2 * self.block()]
    }

    pub fn spatial(&self) -> &[f64] {
        &self.0[2 * self.block()..]
    }
}

/// Encoded length for color features of dimension `FEATURE_DIM`.
pub const ENCODED_DIM: usize = 2 * FEATURE_DIM + 5;

pub fn encode(image: &Image, region: &Region) -> Result<EncodedFeatures> {
    let spatial = spatial_vector(region, image.width(), image.height())?;
    let f_r = extract_features(image, Some(region));
    let f_i = extract_features(image, None);
    EncodedFeatures::from_parts(&f_r.0, &f_i.0, &spatial)
}

/// How a decoder turns probabilities into tokens.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Decoding {
    Greedy,
    Beam(usize),
}

impl fmt::Display for Decoding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Decoding::Greedy => f.write_str("greedy"),
            Decoding::Beam(w) => write!(f, "beam:{w}"),
        }
    }
}

impl FromStr for Decoding {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "greedy" {
            return Ok(Decoding::Greedy);
        }
        let width = s
            .strip_prefix("beam:")
            .and_then(|w| w.parse::<usize>().ok())
            .filter(|&w| w >= 1)
            .ok_or_else(|| {
                Error::Config(format!("decoding must be 'greedy' or 'beam:<width>', got '{s}'"))
            })?;
        Ok(Decoding::Beam(width))
    }
}

impl Serialize for Decoding {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Decoding {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// A generated question and what it was generated for.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuestionRecord {
    pub id: String,
    pub image_id: String,
    pub region: Region,
    pub target_word: String,
    pub tokens: Vec<String>,
    pub question: String,
    /// `greedy`, `beam:<w>`, `template`, `cnn_lstm` or `retrieval`.
    pub mode: String,
    pub model_version: String,
}

impl QuestionRecord {
    pub fn new(
        image_id: &str,
        region: Region,
        target_word: &str,
        tokens: Vec<String>,
        mode: &str,
        model_version: &str,
    ) -> Self {
        let question = detokenize(&tokens);
        Self {
            id: String::new(),
            image_id: image_id.to_string(),
            region,
            target_word: target_word.to_string(),
            tokens,
            question,
            mode: mode.to_string(),
            model_version: model_version.to_string(),
        }
    }
}

pub const TEMPLATE_VERSION: &str = "template-1";

/// "what is this <word> ?" for when no trained decoder is available.
pub fn template_question(target_word: &str) -> Result<Vec<String>> {
    let word = tokenize(target_word);
    if word.is_empty() {
        return Err(Error::InvalidInput("empty target word".into()));
    }
    let mut tokens = tokenize("what is this");
    tokens.extend(word);
    tokens.push("?".to_string());
    Ok(tokens)
}

/// Nearest-neighbour question lookup over region features.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct RetrievalIndex {
    pub entries: Vec<(Vec<f64>, Vec<String>)>,
}

/// Among the questions of the `m` regions most cosine-similar to `query`,
/// the one with the highest mean BLEU against the other `m - 1`. Ties keep
/// the nearer neighbour.
pub fn retrieval_baseline(query: &[f64], index: &RetrievalIndex, m: usize) -> Result<Vec<String>> {
    if m < 2 {
        return Err(Error::Config(format!("retrieval needs m >= 2, got {m}")));
    }
    if index.entries.len() < m {
        return Err(Error::InvalidInput(format!(
            "index holds {} entries, fewer than m = {m}",
            index.entries.len()
        )));
    }
    let mut order: Vec<(usize, f64)> = index
        .entries
        .iter()
        .enumerate()
        .map(|(i, (f, _))| (i, cosine_similarity(query, f)))
        .collect();
    order.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let nearest: Vec<&Vec<String>> = order[..m].iter().map(|&(i, _)| &index.entries[i].1).collect();

    let mut best = (0, f64::NEG_INFINITY);
    for (i, cand) in nearest.iter().enumerate() {
        let mut total = 0.0;
        for (j, other) in nearest.iter().enumerate() {
            if i != j {
                total += bleu(cand, &[(*other).clone()], 4)?;
            }
        }
        let mean = total / (m - 1) as f64;
        if mean > best.1 {
            best = (i, mean);
        }
    }
    Ok(nearest[best.0].clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn spatial_vector_examples() {
        let full = spatial_vector(&Region::full(37, 11), 37, 11).unwrap();
        assert_eq!(full.0, [0.0, 0.0, 1.0, 1.0, 1.0]);
        let mid = spatial_vector(&Region::new(25, 25, 75, 75), 100, 100).unwrap();
        for (a, b) in mid.0.iter().zip([0.25, 0.25, 0.75, 0.75, 0.25]) {
            assert!((a - b).abs() < 1e-12);
        }
        let px = spatial_vector(&Region::new(0, 0, 1, 1), 100, 100).unwrap();
        for (a, b) in px.0.iter().zip([0.0, 0.0, 0.01, 0.01, 0.0001]) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(spatial_vector(&Region::new(0, 0, 101, 1), 100, 100).is_err());
    }

    #[test]
    fn encoding_layout() {
        let mut img = Image::filled(40, 30, [20, 20, 20]).unwrap();
        img.fill_rect(5, 5, 15, 15, [230, 20, 20]);
        let f = encode(&img, &Region::new(5, 5, 15, 15)).unwrap();
        assert_eq!(f.len(), ENCODED_DIM);
        assert_eq!(ENCODED_DIM, 197);
        assert_ne!(f.region_features(), f.image_features());
        let full = encode(&img, &Region::full(40, 30)).unwrap();
        assert_eq!(full.region_features(), full.image_features());
        assert_eq!(full.spatial(), &[0.0, 0.0, 1.0, 1.0, 1.0]);

        let wide = EncodedFeatures::from_parts(
            &vec![0.0; 1000],
            &vec![0.0; 1000],
            &SpatialVector([0.0, 0.0, 1.0, 1.0, 1.0]),
        )
        .unwrap();
        assert_eq!(wide.len(), 2005);
    }

    #[test]
    fn template_examples() {
        assert_eq!(detokenize(&template_question("animal").unwrap()), "what is this animal ?");
        assert_eq!(
            detokenize(&template_question("stuffed toy").unwrap()),
            "what is this stuffed toy ?"
        );
        assert!(template_question("  ").is_err());
    }

    #[test]
    fn decoding_round_trip() {
        for d in [Decoding::Greedy, Decoding::Beam(3)] {
            assert_eq!(d.to_string().parse::<Decoding>().unwrap(), d);
        }
        assert!("beam:0".parse::<Decoding>().is_err());
        assert!("sample".parse::<Decoding>().is_err());
    }

    fn q(s: &str) -> Vec<String> {
        tokenize(s)
    }

    #[test]
    fn retrieval_consensus() {
        let index = RetrievalIndex {
            entries: vec![
                (vec![1.0, 0.0], q("what is this dog ?")),
                (vec![0.9, 0.1], q("what is this dog ?")),
                (vec![0.8, 0.2], q("what color is the sky ?")),
                (vec![0.0, 1.0], q("where is the car ?")),
            ],
        };
        let got = retrieval_baseline(&[1.0, 0.0], &index, 3).unwrap();
        assert_eq!(got, q("what is this dog ?"));
        assert!(matches!(retrieval_baseline(&[1.0, 0.0], &index, 1), Err(Error::Config(_))));
        assert!(retrieval_baseline(&[1.0, 0.0], &index, 5).is_err());
    }

    #[test]
    fn retrieval_includes_identical_feature() {
        let index = RetrievalIndex {
            entries: vec![
                (vec![0.0, 1.0], q("a b")),
                (vec![0.3, 0.7], q("c d")),
                (vec![1.0, 0.0], q("e f")),
            ],
        };
        // with m = 2 both candidates tie at zero mean BLEU; the nearest wins
        assert_eq!(retrieval_baseline(&[0.3, 0.7], &index, 2).unwrap(), q("c d"));
    }

    proptest! {
        #[test]
        fn spatial_components_in_range(
            w in 1u32..200, h in 1u32..200, a in 0.0f64..1.0, b in 0.0f64..1.0, c in 0.0f64..1.0, d in 0.0f64..1.0
        ) {
            let x0 = (a * w as f64) as u32 % w;
            let y0 = (b * h as f64) as u32 % h;
            let x1 = x0 + 1 + ((c * (w - x0) as f64) as u32).min(w - x0 - 1);
            let y1 = y0 + 1 + ((d * (h - y0) as f64) as u32).min(h - y0 - 1);
            let s = spatial_vector(&Region::new(x0, y0, x1, y1), w, h).unwrap();
            prop_assert!(s.0[..4].iter().all(|v| (0.0..=1.0).contains(v)));
            prop_assert!(s.0[4] > 0.0 && s.0[4] <= 1.0);
        }
    }
}
