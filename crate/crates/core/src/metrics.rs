//! BLEU and a simplified METEOR over token sequences.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAX_BLEU_ORDER: usize = 4;
/// Stand-in numerator for n-gram orders with no clipped match.
pub const BLEU_EPSILON: f64 = 1e-9;

const METEOR_ALPHA: f64 = 0.9;
const METEOR_GAMMA: f64 = 0.5;
const METEOR_BETA: i32 = 3;

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for gram in tokens.windows(n) {
            *counts.entry(gram).or_insert(0) += 1;
        }
    }
    counts
}

/// Clipped matches and candidate n-gram total for one order.
fn clipped_counts(candidate: &[String], references: &[Vec<String>], n: usize) -> (usize, usize) {
    let cand = ngram_counts(candidate, n);
    let mut max_ref: HashMap<&[String], usize> = HashMap::new();
    for r in references {
        for (gram, c) in ngram_counts(r, n) {
            let slot = max_ref.entry(gram).or_insert(0);
            *slot = (*slot).max(c);
        }
    }
    let matched = cand
        .iter()
        .map(|(gram, &c)| c.min(max_ref.get(gram).copied().unwrap_or(0)))
        .sum();
    (matched, candidate.len().saturating_sub(n - 1))
}

/// Reference length closest to `c`; ties go to the shorter one.
fn closest_ref_len(c: usize, references: &[Vec<String>]) -> usize {
    references
        .iter()
        .map(Vec::len)
        .min_by_key(|&r| (r.abs_diff(c), r))
        .unwrap_or(0)
}

fn check_order(max_n: usize) -> Result<()> {
    if !(1..=MAX_BLEU_ORDER).contains(&max_n) {
        return Err(Error::InvalidInput(format!(
            "BLEU order must lie in 1..={MAX_BLEU_ORDER}, got {max_n}"
        )));
    }
    Ok(())
}

/// Geometric mean of the modified precisions times the brevity penalty.
/// Orders for which the candidate has no n-grams at all are left out of
/// the mean.
fn combine(matched: &[usize], totals: &[usize], c: usize, r: usize) -> f64 {
    if c == 0 {
        return 0.0;
    }
    let logs: Vec<f64> = matched
        .iter()
        .zip(totals)
        .filter(|(_, &t)| t > 0)
        .map(|(&m, &t)| ((m as f64).max(BLEU_EPSILON) / t as f64).ln())
        .collect();
    let bp = if c >= r {
        1.0
    } else {
        (1.0 - r as f64 / c as f64).exp()
    };
    bp * (logs.iter().sum::<f64>() / logs.len() as f64).exp()
}

/// Sentence-level BLEU-`max_n`.
pub fn bleu(candidate: &[String], references: &[Vec<String>], max_n: usize) -> Result<f64> {
    check_order(max_n)?;
    if references.is_empty() {
        return Err(Error::InvalidInput("no references".into()));
    }
    let (matched, totals): (Vec<usize>, Vec<usize>) =
        (1..=max_n).map(|n| clipped_counts(candidate, references, n)).unzip();
    let r = closest_ref_len(candidate.len(), references);
    Ok(combine(&matched, &totals, candidate.len(), r))
}

/// Corpus-level BLEU-`max_n`: counts and lengths are summed over all
/// segments before combining.
pub fn corpus_bleu(pairs: &[(Vec<String>, Vec<Vec<String>>)], max_n: usize) -> Result<f64> {
    check_order(max_n)?;
    let mut matched = vec![0; max_n];
    let mut totals = vec![0; max_n];
    let (mut c, mut r) = (0, 0);
    for (cand, refs) in pairs {
        if refs.is_empty() {
            return Err(Error::InvalidInput("segment without references".into()));
        }
        for n in 1..=max_n {
            let (m, t) = clipped_counts(cand, refs, n);
            matched[n - 1] += m;
            totals[n - 1] += t;
        }
        c += cand.len();
        r += closest_ref_len(cand.len(), refs);
    }
    Ok(combine(&matched, &totals, c, r))
}

/// Unigram alignment as `(candidate index, reference index)` pairs in
/// candidate order. Each candidate token takes the reference position right
/// after the previous match when it can, else the first unused one.
fn align(candidate: &[String], reference: &[String]) -> Vec<(usize, usize)> {
    let mut used = vec![false; reference.len()];
    let mut pairs: Vec<(usize, usize)> = Vec::new();
    for (i, tok) in candidate.iter().enumerate() {
        let follow = pairs
            .last()
            .filter(|&&(pi, _)| pi + 1 == i)
            .map(|&(_, pr)| pr + 1)
            .filter(|&j| j < reference.len() && !used[j] && reference[j] == *tok);
        let pick = follow.or_else(|| (0..reference.len()).find(|&j| !used[j] && reference[j] == *tok));
        if let Some(j) = pick {
            used[j] = true;
            pairs.push((i, j));
        }
    }
    pairs
}

/// Exact-match METEOR without stemming or synonyms.
pub fn meteor_lite(candidate: &[String], reference: &[String]) -> f64 {
    let pairs = align(candidate, reference);
    let m = pairs.len();
    if m == 0 {
        return 0.0;
    }
    let chunks = 1 + pairs
        .windows(2)
        .filter(|w| !(w[1].0 == w[0].0 + 1 && w[1].1 == w[0].1 + 1))
        .count();
    let p = m as f64 / candidate.len() as f64;
    let r = m as f64 / reference.len() as f64;
    let fmean = p * r / (METEOR_ALPHA * p + (1.0 - METEOR_ALPHA) * r);
    let penalty = METEOR_GAMMA * (chunks as f64 / m as f64).powi(METEOR_BETA);
    fmean * (1.0 - penalty)
}

/// Best METEOR-lite score over several references.
pub fn meteor_lite_multi(candidate: &[String], references: &[Vec<String>]) -> f64 {
    references
        .iter()
        .map(|r| meteor_lite(candidate, r))
        .fold(0.0, f64::max)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    /// BLEU-1..4 from counts aggregated over the corpus.
    pub corpus_bleu: [f64; MAX_BLEU_ORDER],
    /// Mean of sentence-level BLEU-1..4.
    pub sentence_bleu: [f64; MAX_BLEU_ORDER],
    pub meteor_lite: f64,
    pub candidates: usize,
    pub references: usize,
}

pub fn evaluate(pairs: &[(Vec<String>, Vec<Vec<String>>)]) -> Result<MetricReport> {
    if pairs.is_empty() {
        return Err(Error::InvalidInput("nothing to evaluate".into()));
    }
    let mut corpus = [0.0; MAX_BLEU_ORDER];
    let mut sentence = [0.0; MAX_BLEU_ORDER];
    for n in 1..=MAX_BLEU_ORDER {
        corpus[n - 1] = corpus_bleu(pairs, n)?;
        let mut sum = 0.0;
        for (cand, refs) in pairs {
            sum += bleu(cand, refs, n)?;
        }
        sentence[n - 1] = sum / pairs.len() as f64;
    }
    let meteor = pairs
        .iter()
        .map(|(c, refs)| meteor_lite_multi(c, refs))
        .sum::<f64>()
        / pairs.len() as f64;
    Ok(MetricReport {
        corpus_bleu: corpus,
        sentence_bleu: sentence,
        meteor_lite: meteor,
        candidates: pairs.len(),
        references: pairs.iter().map(|(_, r)| r.len()).sum(),
    })
}
