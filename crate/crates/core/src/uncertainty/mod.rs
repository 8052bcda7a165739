//! Open-set classification from softmax outputs.
//!
//! A region is flagged unknown when its class distribution is too flat:
//! entropy at or above a threshold, top probability below a threshold, or
//! top-two margin below a threshold.

mod classifier;
mod evaluation;
mod features;

pub use classifier::{predict, train_toy_classifier, ClassifierConfig, ClassifierModel};
pub use evaluation::{
    calibrate_threshold, f_measure, time_classification, Calibration, FMeasure, Outcome,
    TimingReport, Truth,
};
pub use features::{
    cosine_similarity, extract_features, hsv_bin, FeatureVector, FEATURE_DIM, HUE_BINS, SAT_BINS,
    VAL_BINS,
};

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const SUM_TOLERANCE: f64 = 1e-6;

/// Class probabilities `p_j` over labels `C_j`.
#[derive(Clone, Debug, PartialEq)]
pub struct SoftmaxDistribution {
    probs: Vec<f64>,
    labels: Arc<[String]>,
}

impl SoftmaxDistribution {
    pub fn new(probs: Vec<f64>, labels: Arc<[String]>) -> Result<Self> {
        if probs.len() < 2 {
            return Err(Error::InvalidInput(format!(
                "distribution needs at least 2 classes, got {}",
                probs.len()
            )));
        }
        if labels.len() != probs.len() {
            return Err(Error::InvalidInput(format!(
                "{} labels for {} probabilities",
                labels.len(),
                probs.len()
            )));
        }
        if let Some(p) = probs.iter().find(|p| !p.is_finite() || **p < 0.0) {
            return Err(Error::InvalidInput(format!("invalid probability {p}")));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::InvalidInput(format!(
                "probabilities sum to {sum}, expected 1"
            )));
        }
        Ok(Self { probs, labels })
    }

    /// Distribution with synthetic labels `c0, c1, ...`.
    pub fn with_index_labels(probs: Vec<f64>) -> Result<Self> {
        let labels: Arc<[String]> = (0..probs.len()).map(|i| format!("c{i}")).collect();
        Self::new(probs, labels)
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn shared_labels(&self) -> Arc<[String]> {
        Arc::clone(&self.labels)
    }

    pub fn num_classes(&self) -> usize {
        self.probs.len()
    }

    /// Index of the largest probability; the lowest index wins ties.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &p) in self.probs.iter().enumerate().skip(1) {
            if p > self.probs[best] {
                best = i;
            }
        }
        best
    }

    /// Indices of the `k` most probable classes, ties broken by label order.
    pub fn top_k(&self, k: usize) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.probs.len()).collect();
        idx.sort_by(|&a, &b| self.probs[b].total_cmp(&self.probs[a]).then(a.cmp(&b)));
        idx.truncate(k);
        idx
    }
}

/// Shannon entropy in bits, with `0·log 0 = 0`.
pub fn entropy(dist: &SoftmaxDistribution) -> f64 {
    -dist
        .probs
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| p * p.log2())
        .sum::<f64>()
}

pub fn max_probability(dist: &SoftmaxDistribution) -> f64 {
    dist.probs[dist.argmax()]
}

/// Difference between the two largest probabilities.
pub fn margin(dist: &SoftmaxDistribution) -> f64 {
    let top = dist.top_k(2);
    dist.probs[top[0]] - dist.probs[top[1]]
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UncertaintyMethod {
    Entropy,
    LeastConfident,
    Margin,
}

impl UncertaintyMethod {
    pub const ALL: [UncertaintyMethod; 3] = [
        UncertaintyMethod::Entropy,
        UncertaintyMethod::LeastConfident,
        UncertaintyMethod::Margin,
    ];

    pub fn statistic(self, dist: &SoftmaxDistribution) -> f64 {
        match self {
            UncertaintyMethod::Entropy => entropy(dist),
            UncertaintyMethod::LeastConfident => max_probability(dist),
            UncertaintyMethod::Margin => margin(dist),
        }
    }

    /// Decision rule: entropy flags at `>=`, the probability-based methods
    /// flag strictly below the threshold.
    pub fn is_unknown(self, statistic: f64, threshold: f64) -> bool {
        match self {
            UncertaintyMethod::Entropy => statistic >= threshold,
            UncertaintyMethod::LeastConfident | UncertaintyMethod::Margin => statistic < threshold,
        }
    }

    /// Closed range the statistic can take for `k` classes.
    pub fn statistic_range(self, k: usize) -> (f64, f64) {
        match self {
            UncertaintyMethod::Entropy => (0.0, (k as f64).log2()),
            UncertaintyMethod::LeastConfident => (1.0 / k as f64, 1.0),
            UncertaintyMethod::Margin => (0.0, 1.0),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            UncertaintyMethod::Entropy => "entropy",
            UncertaintyMethod::LeastConfident => "least_confident",
            UncertaintyMethod::Margin => "margin",
        }
    }
}

impl fmt::Display for UncertaintyMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for UncertaintyMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.replace('-', "_").as_str() {
            "entropy" => Ok(UncertaintyMethod::Entropy),
            "least_confident" | "lc" => Ok(UncertaintyMethod::LeastConfident),
            "margin" => Ok(UncertaintyMethod::Margin),
            other => Err(Error::Config(format!("unknown uncertainty method '{other}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Verdict {
    Known { label: String, index: usize },
    Unknown,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnknownVerdict {
    pub verdict: Verdict,
    pub statistic: f64,
    pub method: UncertaintyMethod,
}

impl UnknownVerdict {
    pub fn is_unknown(&self) -> bool {
        matches!(self.verdict, Verdict::Unknown)
    }

    pub fn known_label(&self) -> Option<&str> {
        match &self.verdict {
            Verdict::Known { label, .. } => Some(label),
            Verdict::Unknown => None,
        }
    }
}

pub fn classify(
    dist: &SoftmaxDistribution,
    method: UncertaintyMethod,
    threshold: f64,
) -> UnknownVerdict {
    let statistic = method.statistic(dist);
    let verdict = if method.is_unknown(statistic, threshold) {
        Verdict::Unknown
    } else {
        let index = dist.argmax();
        Verdict::Known {
            label: dist.labels[index].clone(),
            index,
        }
    };
    UnknownVerdict {
        verdict,
        statistic,
        method,
    }
}

pub fn classify_entropy(dist: &SoftmaxDistribution, threshold_bits: f64) -> UnknownVerdict {
    classify(dist, UncertaintyMethod::Entropy, threshold_bits)
}

pub fn classify_least_confident(dist: &SoftmaxDistribution, threshold_p: f64) -> UnknownVerdict {
    classify(dist, UncertaintyMethod::LeastConfident, threshold_p)
}

pub fn classify_margin(dist: &SoftmaxDistribution, threshold_m: f64) -> UnknownVerdict {
    classify(dist, UncertaintyMethod::Margin, threshold_m)
}

/// One line of the distribution JSON-lines format. `truth` is optional and
/// only used for evaluation; `null` or absent means unknown / unlabelled.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistributionRecord {
    pub id: String,
    pub p: Vec<f64>,
    pub labels: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth: Option<String>,
}

impl DistributionRecord {
    pub fn distribution(&self) -> Result<SoftmaxDistribution> {
        SoftmaxDistribution::new(self.p.clone(), self.labels.clone().into())
            .map_err(|e| Error::InvalidInput(format!("record '{}': {e}", self.id)))
    }
}

/// Parse distribution JSON lines; blank lines are skipped.
pub fn parse_distribution_lines(text: &str) -> Result<Vec<DistributionRecord>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| {
            serde_json::from_str(l)
                .map_err(|e| Error::InvalidInput(format!("line {}: {e}", n + 1)))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn dist(p: &[f64]) -> SoftmaxDistribution {
        SoftmaxDistribution::with_index_labels(p.to_vec()).unwrap()
    }

    fn uniform(k: usize) -> SoftmaxDistribution {
        dist(&vec![1.0 / k as f64; k])
    }

    fn one_hot(k: usize, at: usize) -> SoftmaxDistribution {
        let mut p = vec![0.0; k];
        p[at] = 1.0;
        dist(&p)
    }

    #[test]
    fn rejects_invalid_distributions() {
        assert!(SoftmaxDistribution::with_index_labels(vec![1.0]).is_err());
        assert!(SoftmaxDistribution::with_index_labels(vec![0.5, 0.6]).is_err());
        assert!(SoftmaxDistribution::with_index_labels(vec![1.5, -0.5]).is_err());
        assert!(SoftmaxDistribution::with_index_labels(vec![f64::NAN, 1.0]).is_err());
        assert!(SoftmaxDistribution::new(vec![0.5, 0.5], vec!["a".to_string()].into()).is_err());
    }

    #[test]
    fn entropy_examples() {
        assert!((entropy(&uniform(1000)) - 1000f64.log2()).abs() < 1e-9);
        assert!((entropy(&uniform(1000)) - 9.9658).abs() < 1e-4);
        assert_eq!(entropy(&one_hot(7, 3)), 0.0);
        assert!((entropy(&dist(&[0.5, 0.25, 0.125, 0.125])) - 1.75).abs() < 1e-15);
    }

    #[test]
    fn entropy_classification() {
        let v = classify_entropy(&one_hot(4, 2), 0.1);
        assert_eq!(
            v.verdict,
            Verdict::Known {
                label: "c2".into(),
                index: 2
            }
        );
        assert!(classify_entropy(&uniform(10), 3.0).is_unknown());
        // boundary: E == threshold is unknown
        let d = dist(&[0.5, 0.5]);
        assert!(classify_entropy(&d, 1.0).is_unknown());
        assert!(!classify_entropy(&d, 1.0 + 1e-12).is_unknown());
    }

    #[test]
    fn least_confident_classification() {
        assert!(!classify_least_confident(&one_hot(3, 0), 0.5).is_unknown());
        let v = classify_least_confident(&uniform(10), 0.5);
        assert!(v.is_unknown());
        assert!((v.statistic - 0.1).abs() < 1e-15);
        // boundary: max p == threshold is known
        let d = dist(&[0.5, 0.25, 0.25]);
        assert!(!classify_least_confident(&d, 0.5).is_unknown());
        assert!(classify_least_confident(&d, 0.5 + 1e-12).is_unknown());
    }

    #[test]
    fn margin_classification() {
        assert!(!classify_margin(&one_hot(3, 1), 1.0).is_unknown());
        assert!(classify_margin(&uniform(4), 1e-9).is_unknown());
        let v = classify_margin(&dist(&[0.6, 0.3, 0.1]), 0.2);
        assert!(!v.is_unknown());
        assert!((v.statistic - 0.3).abs() < 1e-15);
        // boundary: margin == threshold is known
        let d = dist(&[0.75, 0.25]);
        assert!(!classify_margin(&d, 0.5).is_unknown());
    }

    #[test]
    fn top_k_breaks_ties_by_label_order() {
        let d = dist(&[0.2, 0.3, 0.3, 0.2]);
        assert_eq!(d.top_k(3), vec![1, 2, 0]);
        assert_eq!(d.argmax(), 1);
    }

    #[test]
    fn method_names_parse() {
        for m in UncertaintyMethod::ALL {
            assert_eq!(m.name().parse::<UncertaintyMethod>().unwrap(), m);
        }
        assert!("openmax".parse::<UncertaintyMethod>().is_err());
    }

    #[test]
    fn parses_json_lines() {
        let text = r#"{"id": "a", "p": [0.9, 0.1], "labels": ["dog", "cat"]}

{"id": "b", "p": [0.5, 0.5], "labels": ["dog", "cat"], "truth": null}
"#;
        let recs = parse_distribution_lines(text).unwrap();
        assert_eq!(recs.len(), 2);
        let d = recs[0].distribution().unwrap();
        assert_eq!(d.labels()[d.argmax()], "dog");
        assert!(parse_distribution_lines("{nope").is_err());
        let bad = r#"{"id": "x", "p": [0.9, 0.9], "labels": ["a", "b"]}"#;
        assert!(parse_distribution_lines(bad).unwrap()[0].distribution().is_err());
    }

    fn arb_dist() -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(0.0f64..1.0, 2..30).prop_filter_map("zero mass", |v| {
            let s: f64 = v.iter().sum();
            (s > 1e-6).then(|| v.iter().map(|x| x / s).collect())
        })
    }

    proptest! {
        #[test]
        fn entropy_bounded_and_permutation_invariant(p in arb_dist(), rot in 0usize..30) {
            let d = dist(&p);
            let e = entropy(&d);
            let k = p.len();
            prop_assert!(e >= 0.0 && e <= (k as f64).log2() + 1e-12);
            let mut q = p.clone();
            q.rotate_left(rot % k);
            q.reverse();
            prop_assert!((entropy(&dist(&q)) - e).abs() < 1e-12);
        }

        #[test]
        fn known_verdicts_carry_argmax(p in arb_dist(), t in 0.0f64..5.0) {
            let d = dist(&p);
            for m in UncertaintyMethod::ALL {
                if let Verdict::Known { index, label } = classify(&d, m, t).verdict {
                    prop_assert_eq!(index, d.argmax());
                    prop_assert_eq!(label, format!("c{index}"));
                }
            }
        }
    }
}
