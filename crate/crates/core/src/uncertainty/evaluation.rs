use std::hint::black_box;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::{classify, SoftmaxDistribution, UncertaintyMethod, UnknownVerdict, Verdict};

/// Ground truth for one evaluated sample.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Truth {
    Known(String),
    Unknown,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Outcome {
    pub truth: Truth,
    pub verdict: UnknownVerdict,
}

/// Open-set F measure. TP counts known samples put in their correct class,
/// FP counts known samples that were misclassified or called unknown, FN
/// counts unknown samples that were accepted as some known class. Unknown
/// samples called unknown do not enter the score.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FMeasure {
    pub f: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    /// Set when every count is zero; `f` is then reported as 0.
    pub degenerate: bool,
}

impl FMeasure {
    pub fn from_counts(tp: usize, fp: usize, fn_: usize) -> Self {
        let denom = 2 * tp + fp + fn_;
        if denom == 0 {
            return Self {
                f: 0.0,
                tp,
                fp,
                fn_,
                degenerate: true,
            };
        }
        Self {
            f: (2 * tp) as f64 / denom as f64,
            tp,
            fp,
            fn_,
            degenerate: false,
        }
    }
}

fn count(truth: &Truth, verdict: &Verdict, counts: &mut (usize, usize, usize)) {
    match (truth, verdict) {
        (Truth::Known(t), Verdict::Known { label, .. }) if t == label => counts.0 += 1,
        (Truth::Known(_), _) => counts.1 += 1,
        (Truth::Unknown, Verdict::Known { .. }) => counts.2 += 1,
        (Truth::Unknown, Verdict::Unknown) => {}
    }
}

pub fn f_measure(outcomes: &[Outcome]) -> FMeasure {
    let mut counts = (0, 0, 0);
    for o in outcomes {
        count(&o.truth, &o.verdict.verdict, &mut counts);
    }
    FMeasure::from_counts(counts.0, counts.1, counts.2)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub method: UncertaintyMethod,
    pub threshold: f64,
    pub mean_f: f64,
    /// Standard error of the per-fold F values at `threshold`.
    pub std_err: f64,
    pub fold_scores: Vec<f64>,
}

const GRID_POINTS: usize = 200;

struct Item {
    statistic: f64,
    predicted: String,
    truth: Truth,
    fold: usize,
}

/// Pick the threshold on a 200-point grid over the method's statistic range
/// that maximizes the mean per-fold F measure.
///
/// Items are dealt round-robin into `folds` folds, separately for the known
/// and unknown sets. When several grid points tie, the middle of the first
/// run of maximal points is returned.
pub fn calibrate_threshold(
    method: UncertaintyMethod,
    known_val: &[(SoftmaxDistribution, String)],
    unknown_val: &[SoftmaxDistribution],
    folds: usize,
) -> Result<Calibration> {
    if known_val.is_empty() || unknown_val.is_empty() {
        return Err(Error::InvalidInput(
            "calibration needs non-empty known and unknown sets".into(),
        ));
    }
    if folds == 0 {
        return Err(Error::InvalidInput("folds must be at least 1".into()));
    }
    let k = known_val[0].0.num_classes();
    if known_val.iter().map(|(d, _)| d).chain(unknown_val).any(|d| d.num_classes() != k) {
        return Err(Error::InvalidInput("distributions disagree on class count".into()));
    }

    let mut items = Vec::with_capacity(known_val.len() + unknown_val.len());
    for (i, (d, label)) in known_val.iter().enumerate() {
        items.push(Item {
            statistic: method.statistic(d),
            predicted: d.labels()[d.argmax()].clone(),
            truth: Truth::Known(label.clone()),
            fold: i % folds,
        });
    }
    for (i, d) in unknown_val.iter().enumerate() {
        items.push(Item {
            statistic: method.statistic(d),
            predicted: d.labels()[d.argmax()].clone(),
            truth: Truth::Unknown,
            fold: i % folds,
        });
    }

    let fold_scores_at = |threshold: f64| -> Vec<f64> {
        let mut counts = vec![(0, 0, 0); folds];
        for it in &items {
            let verdict = if method.is_unknown(it.statistic, threshold) {
                Verdict::Unknown
            } else {
                Verdict::Known {
                    label: it.predicted.clone(),
                    index: 0,
                }
            };
            count(&it.truth, &verdict, &mut counts[it.fold]);
        }
        counts
            .iter()
            .map(|&(tp, fp, fn_)| FMeasure::from_counts(tp, fp, fn_).f)
            .collect()
    };

    let (lo, hi) = method.statistic_range(k);
    let grid: Vec<f64> = (0..GRID_POINTS)
        .map(|i| lo + (hi - lo) * i as f64 / (GRID_POINTS - 1) as f64)
        .collect();
    let means: Vec<f64> = grid
        .iter()
        .map(|&t| {
            let s = fold_scores_at(t);
            s.iter().sum::<f64>() / folds as f64
        })
        .collect();
    let best = means.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let start = means.iter().position(|&m| m == best).expect("non-empty grid");
    let end = start + means[start..].iter().take_while(|&&m| m == best).count();
    let threshold = grid[(start + end - 1) / 2];

    let fold_scores = fold_scores_at(threshold);
    let (mean_f, std_err) = mean_and_std_err(&fold_scores);
    Ok(Calibration {
        method,
        threshold,
        mean_f,
        std_err,
        fold_scores,
    })
}

pub(crate) fn mean_and_std_err(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimingReport {
    pub method: UncertaintyMethod,
    pub images: usize,
    pub repetitions: usize,
    pub mean_seconds_per_image: f64,
    pub std_err_seconds: f64,
    pub per_repetition: Vec<f64>,
}

/// Average per-image wall time of classifying `dists`, over `repetitions`
/// timed passes.
pub fn time_classification(
    dists: &[SoftmaxDistribution],
    method: UncertaintyMethod,
    threshold: f64,
    repetitions: usize,
) -> Result<TimingReport> {
    if dists.is_empty() {
        return Err(Error::InvalidInput("no distributions to time".into()));
    }
    if repetitions == 0 {
        return Err(Error::InvalidInput("repetitions must be positive".into()));
    }
    let mut per_rep = Vec::with_capacity(repetitions);
    for _ in 0..repetitions {
        let start = Instant::now();
        for d in dists {
            black_box(classify(black_box(d), method, threshold));
        }
        per_rep.push(start.elapsed().as_secs_f64() / dists.len() as f64);
    }
    let (mean, se) = mean_and_std_err(&per_rep);
    Ok(TimingReport {
        method,
        images: dists.len(),
        repetitions,
        mean_seconds_per_image: mean,
        std_err_seconds: se,
        per_repetition: per_rep,
    })
}
