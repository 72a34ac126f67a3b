//! Location-aware word recognition rate.
//!
//! A prediction matches a ground-truth word when the strings are identical
//! (byte equality after NFC normalization) and the boxes have strictly
//! positive intersection area. The per-document rate is
//! `matched / (matched + unmatched predictions + unmatched ground truth)`,
//! and corpus aggregation weights each document by its ground-truth word
//! count.

use serde::{Deserialize, Serialize};
use thiserror::Error;
use unicode_normalization::UnicodeNormalization;

use crate::page::WordAnnotation;
use crate::scalar::Scalar;
use crate::words::Word;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error(
        "document {index}: matched {matched} + missed {missed} words disagree \
         with the stated ground-truth count {stated}"
    )]
    InconsistentCounts {
        index: usize,
        matched: usize,
        missed: usize,
        stated: usize,
    },
}

/// Matching outcome for one document.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchResult {
    pub n_matched: usize,
    pub n_unmatched_pred: usize,
    pub n_unmatched_gt: usize,
    /// Matched `(prediction index, ground-truth index)` pairs.
    pub pairs: Vec<(usize, usize)>,
}

/// Matching options; the default compares case-sensitively.
#[derive(Debug, Clone, Copy, Default)]
pub struct MatchOptions {
    pub ignore_case: bool,
}

fn normalize(text: &str, opts: &MatchOptions) -> String {
    let normalized: String = text.nfc().collect();
    if opts.ignore_case {
        normalized.to_lowercase()
    } else {
        normalized
    }
}

/// One-to-one matching between predictions and ground truth, greedy by
/// descending intersection area over string-equal, overlapping pairs. Ties
/// resolve by smaller prediction index, then smaller ground-truth index.
pub fn match_words<T: Scalar>(
    pred: &[WordAnnotation<T>],
    gt: &[WordAnnotation<T>],
) -> MatchResult {
    match_words_with(pred, gt, &MatchOptions::default())
}

/// [`match_words`] with explicit options.
pub fn match_words_with<T: Scalar>(
    pred: &[WordAnnotation<T>],
    gt: &[WordAnnotation<T>],
    opts: &MatchOptions,
) -> MatchResult {
    let pred_texts: Vec<String> = pred.iter().map(|w| normalize(&w.text, opts)).collect();
    let gt_texts: Vec<String> = gt.iter().map(|w| normalize(&w.text, opts)).collect();

    let mut edges: Vec<(f64, usize, usize)> = Vec::new();
    for (p, pw) in pred.iter().enumerate() {
        for (g, gw) in gt.iter().enumerate() {
            if pred_texts[p] != gt_texts[g] {
                continue;
            }
            let area = pw.rect.intersection_area(&gw.rect).to_f64().unwrap_or(0.0);
            if area > 0.0 {
                edges.push((area, p, g));
            }
        }
    }
    edges.sort_by(|a, b| {
        b.0.partial_cmp(&a.0)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.1.cmp(&b.1))
            .then(a.2.cmp(&b.2))
    });

    let mut pred_taken = vec![false; pred.len()];
    let mut gt_taken = vec![false; gt.len()];
    let mut pairs = Vec::new();
    for (_, p, g) in edges {
        if !pred_taken[p] && !gt_taken[g] {
            pred_taken[p] = true;
            gt_taken[g] = true;
            pairs.push((p, g));
        }
    }
    MatchResult {
        n_matched: pairs.len(),
        n_unmatched_pred: pred.len() - pairs.len(),
        n_unmatched_gt: gt.len() - pairs.len(),
        pairs,
    }
}

/// Per-document word recognition rate. An empty document (no predictions, no
/// ground truth) counts as perfect.
pub fn wrr_document(m: &MatchResult) -> f64 {
    let total = m.n_matched + m.n_unmatched_pred + m.n_unmatched_gt;
    if total == 0 {
        1.0
    } else {
        m.n_matched as f64 / total as f64
    }
}

/// Corpus rate: per-document rates averaged with ground-truth word counts as
/// weights. Documents without ground-truth words carry zero weight; a corpus
/// with no ground-truth words at all is vacuously perfect.
pub fn wrr_corpus(docs: &[(MatchResult, usize)]) -> Result<f64, MetricsError> {
    let mut weighted = 0.0;
    let mut weight = 0usize;
    for (index, (m, gt_count)) in docs.iter().enumerate() {
        if m.n_matched + m.n_unmatched_gt != *gt_count {
            return Err(MetricsError::InconsistentCounts {
                index,
                matched: m.n_matched,
                missed: m.n_unmatched_gt,
                stated: *gt_count,
            });
        }
        weighted += *gt_count as f64 * wrr_document(m);
        weight += gt_count;
    }
    if weight == 0 {
        Ok(1.0)
    } else {
        Ok(weighted / weight as f64)
    }
}

/// Evaluation report row for one document.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DocumentReport {
    pub doc_id: String,
    #[serde(flatten)]
    pub result: MatchResult,
    pub wrr: f64,
}

/// Corpus-level evaluation report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorpusReport {
    pub per_document: Vec<DocumentReport>,
    pub corpus_wrr: f64,
}

impl CorpusReport {
    /// Assemble the report from per-document matches, in input order.
    pub fn from_documents(docs: Vec<(String, MatchResult)>) -> Result<Self, MetricsError> {
        let weighted: Vec<(MatchResult, usize)> = docs
            .iter()
            .map(|(_, m)| (m.clone(), m.n_matched + m.n_unmatched_gt))
            .collect();
        let corpus_wrr = wrr_corpus(&weighted)?;
        let per_document = docs
            .into_iter()
            .map(|(doc_id, result)| {
                let wrr = wrr_document(&result);
                DocumentReport {
                    doc_id,
                    result,
                    wrr,
                }
            })
            .collect();
        Ok(Self {
            per_document,
            corpus_wrr,
        })
    }
}

/// Drop the decode-side structure of a word, keeping text and box.
pub fn to_annotation<T: Scalar>(word: &Word<T>) -> WordAnnotation<T> {
    WordAnnotation {
        text: word.text.clone(),
        rect: word.rect,
    }
}
