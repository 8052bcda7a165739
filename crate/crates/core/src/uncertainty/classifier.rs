//! Multinomial logistic regression standing in for a pretrained CNN head.

use std::collections::BTreeSet;
use std::path::Path;
use std::sync::Arc;

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::{FeatureVector, SoftmaxDistribution};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassifierConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub l2: f64,
    pub seed: u64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            learning_rate: 0.5,
            batch_size: 32,
            l2: 1e-4,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassifierModel {
    pub labels: Vec<String>,
    /// `K × D`.
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
    pub config: ClassifierConfig,
    #[serde(skip)]
    shared_labels: Option<Arc<[String]>>,
}

impl ClassifierModel {
    pub fn num_classes(&self) -> usize {
        self.labels.len()
    }

    pub fn feature_dim(&self) -> usize {
        self.weights.ncols()
    }

    fn labels_arc(&self) -> Arc<[String]> {
        self.shared_labels
            .clone()
            .unwrap_or_else(|| self.labels.clone().into())
    }

    fn logits(&self, x: &[f64]) -> Array1<f64> {
        let x = ndarray::ArrayView1::from(x);
        self.weights.dot(&x) + &self.bias
    }

    pub fn load_json(text: &str) -> Result<Self> {
        let mut m: ClassifierModel = serde_json::from_str(text)?;
        if m.weights.nrows() != m.labels.len() || m.bias.len() != m.labels.len() {
            return Err(Error::Data("classifier shapes disagree with label count".into()));
        }
        m.shared_labels = Some(m.labels.clone().into());
        Ok(m)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::load_json(&text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, serde_json::to_string(self)?).map_err(|e| Error::io(path, e))
    }
}

fn softmax_in_place(v: &mut [f64]) {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in v.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    for x in v.iter_mut() {
        *x /= sum;
    }
}

/// Train by mini-batch gradient descent on softmax cross-entropy.
///
/// Samples are put in a canonical order before the seeded shuffle, so the
/// result depends only on the multiset of samples and the seed.
pub fn train_toy_classifier(
    data: &[(FeatureVector, String)],
    config: &ClassifierConfig,
) -> Result<ClassifierModel> {
    let labels: Vec<String> = data
        .iter()
        .map(|(_, l)| l.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    if labels.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "need at least 2 classes, got {}",
            labels.len()
        )));
    }
    if config.epochs == 0 || config.batch_size == 0 || !(config.learning_rate > 0.0) {
        return Err(Error::Config("epochs, batch size and learning rate must be positive".into()));
    }
    let dim = data[0].0.len();
    if dim == 0 || data.iter().any(|(f, _)| f.len() != dim) {
        return Err(Error::InvalidInput("inconsistent feature dimensions".into()));
    }

    let mut samples: Vec<(&[f64], usize)> = data
        .iter()
        .map(|(f, l)| (f.as_slice(), labels.binary_search(l).expect("label collected")))
        .collect();
    samples.sort_by(|a, b| {
        a.1.cmp(&b.1).then_with(|| {
            a.0.iter()
                .zip(b.0)
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        })
    });

    let k = labels.len();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut weights = Array2::from_shape_fn((k, dim), |_| rng.random_range(-0.01..0.01));
    let mut bias = Array1::<f64>::zeros(k);
    let mut order: Vec<usize> = (0..samples.len()).collect();

    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(config.batch_size) {
            let mut gw = Array2::<f64>::zeros((k, dim));
            let mut gb = Array1::<f64>::zeros(k);
            for &i in batch {
                let (x, y) = samples[i];
                let xv = ndarray::ArrayView1::from(x);
                let mut p = (weights.dot(&xv) + &bias).to_vec();
                softmax_in_place(&mut p);
                p[y] -= 1.0;
                for (c, &err) in p.iter().enumerate() {
                    if err != 0.0 {
                        gw.row_mut(c).scaled_add(err, &xv);
                        gb[c] += err;
                    }
                }
            }
            let scale = config.learning_rate / batch.len() as f64;
            weights *= 1.0 - config.learning_rate * config.l2;
            weights.scaled_add(-scale, &gw);
            bias.scaled_add(-scale, &gb);
        }
    }

    let shared: Arc<[String]> = labels.clone().into();
    Ok(ClassifierModel {
        labels,
        weights,
        bias,
        config: config.clone(),
        shared_labels: Some(shared),
    })
}

pub fn predict(model: &ClassifierModel, feature: &FeatureVector) -> Result<SoftmaxDistribution> {
    if feature.len() != model.feature_dim() {
        return Err(Error::InvalidInput(format!(
            "feature has {} dims, model expects {}",
            feature.len(),
            model.feature_dim()
        )));
    }
    let mut p = model.logits(feature.as_slice()).to_vec();
    softmax_in_place(&mut p);
    SoftmaxDistribution::new(p, model.labels_arc())
}
