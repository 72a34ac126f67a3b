//! Character box detection from the network outputs: threshold the box mask
//! into per-pixel candidates, shrink them with the linear-time cycle filter,
//! then deduplicate with non-maximum suppression.
//!
//! A page holds a few thousand characters but easily a hundred thousand
//! candidate pixels, so quadratic NMS on the raw candidates does not scale.
//! The cycle filter exploits the structure of the center regression: each
//! candidate pixel points at the pixel containing its predicted box center,
//! and pixels near a true center point at themselves or each other. Keeping
//! only vertices on directed cycles reduces the set to roughly one or two
//! candidates per character before NMS runs.

use std::collections::HashMap;

use crate::geometry::{iou, Rect};
use crate::page::NetworkOutput;
use crate::scalar::{containing_cell, sample_coord, Scalar};

/// A box hypothesis emitted by one pixel of the box mask.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateBox<T> {
    /// `(row, col)` of the emitting pixel.
    pub source: (usize, usize),
    pub rect: Rect<T>,
    pub score: T,
}

/// A deduplicated character box; `symbol_index` is 0 until class assignment.
#[derive(Debug, Clone, PartialEq)]
pub struct CharBox<T> {
    pub rect: Rect<T>,
    pub score: T,
    pub symbol_index: u16,
}

/// Result of candidate extraction.
#[derive(Debug, Clone)]
pub struct Extraction<T> {
    /// Candidates in row-major source order.
    pub candidates: Vec<CandidateBox<T>>,
    /// Pixels above threshold whose regression values did not form a valid
    /// box (non-finite or non-positive size).
    pub dropped: usize,
}

/// One candidate per pixel whose box-mask value reaches `tau` (inclusive).
pub fn extract_candidates<T: Scalar>(out: &NetworkOutput<T>, tau: T) -> Extraction<T> {
    let (rows, cols) = out.shape();
    let mut candidates = Vec::new();
    let mut dropped = 0usize;
    for i in 0..rows {
        let py = sample_coord::<T>(i);
        for j in 0..cols {
            let score = out.box_mask().get(i, j);
            if score < tau || score.is_nan() {
                continue;
            }
            let px = sample_coord::<T>(j);
            let cx = px + out.center_dx().get(i, j);
            let cy = py + out.center_dy().get(i, j);
            let w = out.log_width().get(i, j).exp();
            let h = out.log_height().get(i, j).exp();
            match Rect::new(cx, cy, w, h) {
                Ok(rect) => candidates.push(CandidateBox {
                    source: (i, j),
                    rect,
                    score,
                }),
                Err(_) => dropped += 1,
            }
        }
    }
    Extraction { candidates, dropped }
}

/// Pixel-to-candidate index, dense when the grid is not much larger than the
/// candidate set (the ultra-dense regime), hashed otherwise so the filter
/// stays O(candidates) on sparse grids.
enum PixelIndex {
    Dense { map: Vec<u32>, cols: usize },
    Sparse(HashMap<u64, u32>),
}

const NO_CANDIDATE: u32 = u32::MAX;

impl PixelIndex {
    fn build<T: Scalar>(candidates: &[CandidateBox<T>], shape: (usize, usize)) -> Self {
        let (rows, cols) = shape;
        let area = rows.saturating_mul(cols);
        if area <= candidates.len().saturating_mul(64) {
            let mut map = vec![NO_CANDIDATE; area];
            for (k, c) in candidates.iter().enumerate() {
                map[c.source.0 * cols + c.source.1] = k as u32;
            }
            PixelIndex::Dense { map, cols }
        } else {
            let mut map = HashMap::with_capacity(candidates.len());
            for (k, c) in candidates.iter().enumerate() {
                map.insert((c.source.0 as u64) << 32 | c.source.1 as u64, k as u32);
            }
            PixelIndex::Sparse(map)
        }
    }

    #[inline]
    fn get(&self, i: usize, j: usize) -> Option<u32> {
        match self {
            PixelIndex::Dense { map, cols } => {
                let slot = map[i * cols + j];
                (slot != NO_CANDIDATE).then_some(slot)
            }
            PixelIndex::Sparse(map) => map.get(&((i as u64) << 32 | j as u64)).copied(),
        }
    }
}

/// Keep only candidates lying on cycles of the center-prediction graph.
///
/// Each candidate pixel has at most one outgoing edge: to the candidate at
/// the pixel whose unit square contains its predicted box center (possibly
/// itself). Vertices with no incoming edges are peeled repeatedly; since
/// out-degrees are at most one, the survivors are exactly the vertices on
/// directed cycles. Runs in O(candidates).
pub fn graphcore_filter<T: Scalar>(
    candidates: &[CandidateBox<T>],
    shape: (usize, usize),
) -> Vec<CandidateBox<T>> {
    let (rows, cols) = shape;
    let n = candidates.len();
    if n == 0 {
        return Vec::new();
    }

    let by_pixel = PixelIndex::build(candidates, shape);

    let mut out_edge: Vec<Option<u32>> = Vec::with_capacity(n);
    let mut in_degree = vec![0u32; n];
    for c in candidates {
        let target = containing_cell(c.rect.cy(), rows).and_then(|i| {
            containing_cell(c.rect.cx(), cols).and_then(|j| by_pixel.get(i, j))
        });
        if let Some(t) = target {
            in_degree[t as usize] += 1;
        }
        out_edge.push(target);
    }

    let mut removed = vec![false; n];
    let mut stack: Vec<u32> = (0..n as u32).filter(|&k| in_degree[k as usize] == 0).collect();
    while let Some(k) = stack.pop() {
        removed[k as usize] = true;
        if let Some(t) = out_edge[k as usize] {
            let t = t as usize;
            in_degree[t] -= 1;
            if in_degree[t] == 0 && !removed[t] {
                stack.push(t as u32);
            }
        }
    }

    candidates
        .iter()
        .zip(&removed)
        .filter(|(_, &r)| !r)
        .map(|(c, _)| c.clone())
        .collect()
}

/// Candidate order for suppression: score descending, then row-major source
/// pixel ascending so equal scores resolve deterministically.
fn suppression_order<T: Scalar>(candidates: &[CandidateBox<T>]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by(|&a, &b| {
        match candidates[b].score.partial_cmp(&candidates[a].score) {
            Some(std::cmp::Ordering::Equal) | None => {
                candidates[a].source.cmp(&candidates[b].source)
            }
            Some(ord) => ord,
        }
    });
    order
}

fn to_char_box<T: Scalar>(c: &CandidateBox<T>) -> CharBox<T> {
    CharBox {
        rect: c.rect,
        score: c.score,
        symbol_index: 0,
    }
}

/// Greedy class-agnostic NMS with a uniform spatial hash over kept boxes, so
/// each candidate is only tested against nearby survivors.
pub fn nms<T: Scalar>(candidates: &[CandidateBox<T>], theta: T) -> Vec<CharBox<T>> {
    if candidates.is_empty() {
        return Vec::new();
    }
    let order = suppression_order(candidates);

    // Cell edge near the mean box size keeps the number of cells per box and
    // the number of boxes per cell both small.
    let mut dim_sum = 0.0f64;
    for c in candidates {
        dim_sum += 0.5 * (c.rect.w() + c.rect.h()).to_f64().unwrap_or(1.0);
    }
    let cell = (dim_sum / candidates.len() as f64).max(1e-9);

    let mut kept: Vec<usize> = Vec::new();
    let mut buckets: HashMap<(i64, i64), Vec<u32>> = HashMap::new();
    let mut last_tested: Vec<u32> = Vec::new();
    let mut stamp = 0u32;

    let cell_range = |lo: f64, hi: f64| -> (i64, i64) {
        (
            (lo / cell).floor() as i64,
            (hi / cell).floor() as i64,
        )
    };

    'candidates: for &k in &order {
        stamp += 1;
        let rect = &candidates[k].rect;
        let (x0, x1) = cell_range(
            rect.left().to_f64().unwrap(),
            rect.right().to_f64().unwrap(),
        );
        let (y0, y1) = cell_range(
            rect.top().to_f64().unwrap(),
            rect.bottom().to_f64().unwrap(),
        );
        for cy in y0..=y1 {
            for cx in x0..=x1 {
                let Some(bucket) = buckets.get(&(cx, cy)) else {
                    continue;
                };
                for &slot in bucket {
                    if last_tested[slot as usize] == stamp {
                        continue;
                    }
                    last_tested[slot as usize] = stamp;
                    if iou(rect, &candidates[kept[slot as usize]].rect) > theta {
                        continue 'candidates;
                    }
                }
            }
        }
        let slot = kept.len() as u32;
        kept.push(k);
        last_tested.push(stamp);
        for cy in y0..=y1 {
            for cx in x0..=x1 {
                buckets.entry((cx, cy)).or_default().push(slot);
            }
        }
    }

    kept.iter().map(|&k| to_char_box(&candidates[k])).collect()
}

/// Reference NMS with no spatial acceleration: identical contract to [`nms`],
/// quadratic in the candidate count. Used by tests and the benchmark harness.
pub fn nms_bruteforce<T: Scalar>(candidates: &[CandidateBox<T>], theta: T) -> Vec<CharBox<T>> {
    let order = suppression_order(candidates);
    let mut suppressed = vec![false; candidates.len()];
    let mut kept = Vec::new();
    for pos in 0..order.len() {
        if suppressed[pos] {
            continue;
        }
        let k = order[pos];
        kept.push(to_char_box(&candidates[k]));
        for later in pos + 1..order.len() {
            if suppressed[later] {
                continue;
            }
            if iou(&candidates[k].rect, &candidates[order[later]].rect) > theta {
                suppressed[later] = true;
            }
        }
    }
    kept
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::charset::Charset;
    use crate::codec::{approximate_char_boxes, encode_page, WidthTable};
    use crate::page::{GroundTruthPage, WordAnnotation};
    use proptest::prelude::*;

    fn rect(cx: f64, cy: f64, w: f64, h: f64) -> Rect<f64> {
        Rect::new(cx, cy, w, h).unwrap()
    }

    fn candidate(i: usize, j: usize, r: Rect<f64>, score: f64) -> CandidateBox<f64> {
        CandidateBox {
            source: (i, j),
            rect: r,
            score,
        }
    }

    /// Encode a single word and return the network output plus char count.
    fn encoded_word(text: &str) -> (NetworkOutput<f64>, usize) {
        let cs = Charset::default_english();
        let widths = WidthTable::uniform(&cs);
        let w = text.chars().count() as f64 * 3.0;
        let word = WordAnnotation::new(text, rect(4.0 + w / 2.0, 5.5, w, 3.0)).unwrap();
        let chars = approximate_char_boxes(&word, 0, &widths, &cs).unwrap();
        let n = chars.len();
        let page = GroundTruthPage::new((12, 48), vec![word], chars).unwrap();
        let (out, warnings) = encode_page(&page, &cs);
        assert!(warnings.is_empty());
        (out, n)
    }

    #[test]
    fn extracts_one_candidate_per_box_pixel() {
        let (out, _) = encoded_word("a");
        let ext = extract_candidates(&out, 0.5);
        assert_eq!(ext.dropped, 0);
        // 3x3 box covers nine sample points, all predicting the same rect.
        assert_eq!(ext.candidates.len(), 9);
        let first = ext.candidates[0].rect;
        for c in &ext.candidates {
            assert!((c.rect.cx() - first.cx()).abs() < 1e-9);
            assert!((c.rect.w() - first.w()).abs() < 1e-9);
            assert_eq!(c.score, 1.0);
        }
    }

    #[test]
    fn threshold_is_inclusive() {
        let mut out = NetworkOutput::<f64>::zeros(2, 2);
        out.grids_mut().1.set(0, 0, 0.5);
        let ext = extract_candidates(&out, 0.5);
        assert_eq!(ext.candidates.len(), 1);
        assert_eq!(ext.candidates[0].source, (0, 0));
        // exp(0) = 1 box centered on the pixel.
        assert_eq!(ext.candidates[0].rect.w(), 1.0);
    }

    #[test]
    fn all_zero_mask_gives_nothing() {
        let out = NetworkOutput::<f64>::zeros(4, 4);
        assert!(extract_candidates(&out, 0.5).candidates.is_empty());
    }

    #[test]
    fn non_finite_regression_dropped_and_counted() {
        let mut out = NetworkOutput::<f64>::zeros(2, 2);
        {
            let (_, mask, [dx, ..]) = out.grids_mut();
            mask.set(0, 0, 0.9);
            mask.set(0, 1, 0.9);
            dx.set(0, 1, f64::NAN);
        }
        let ext = extract_candidates(&out, 0.5);
        assert_eq!(ext.candidates.len(), 1);
        assert_eq!(ext.dropped, 1);
    }

    #[test]
    fn self_loop_survives() {
        // Candidate at (0,0) predicting its own pixel as center.
        let c = candidate(0, 0, rect(0.5, 0.5, 1.0, 1.0), 1.0);
        let kept = graphcore_filter(std::slice::from_ref(&c), (4, 4));
        assert_eq!(kept, vec![c]);
    }

    #[test]
    fn chain_keeps_only_terminal_loop() {
        // p1 -> p2 -> p3 -> p3; peeling removes p1 then p2.
        let p1 = candidate(0, 0, rect(1.5, 0.5, 1.0, 1.0), 1.0);
        let p2 = candidate(0, 1, rect(2.5, 0.5, 1.0, 1.0), 1.0);
        let p3 = candidate(0, 2, rect(2.5, 0.5, 1.0, 1.0), 1.0);
        let kept = graphcore_filter(&[p1, p2, p3.clone()], (1, 4));
        assert_eq!(kept, vec![p3]);
    }

    #[test]
    fn two_cycle_survives() {
        let a = candidate(0, 0, rect(1.5, 0.5, 1.0, 1.0), 1.0);
        let b = candidate(0, 1, rect(0.5, 0.5, 1.0, 1.0), 1.0);
        let kept = graphcore_filter(&[a.clone(), b.clone()], (1, 2));
        assert_eq!(kept, vec![a, b]);
    }

    #[test]
    fn dangling_center_is_dropped() {
        // Predicted center pixel holds no candidate: no edge, no cycle.
        let c = candidate(0, 0, rect(3.5, 0.5, 1.0, 1.0), 1.0);
        assert!(graphcore_filter(&[c], (1, 8)).is_empty());
    }

    #[test]
    fn clean_word_filters_to_one_candidate_per_char() {
        let (out, n_chars) = encoded_word("word");
        let ext = extract_candidates(&out, 0.5);
        let kept = graphcore_filter(&ext.candidates, out.shape());
        assert_eq!(kept.len(), n_chars);
    }

    #[test]
    fn nms_keeps_highest_score_of_identical_boxes() {
        let r = rect(3.0, 3.0, 2.0, 2.0);
        let cands = vec![candidate(0, 0, r, 0.9), candidate(0, 1, r, 0.8)];
        let kept = nms(&cands, 0.5);
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].score, 0.9);
    }

    #[test]
    fn nms_preserves_disjoint_boxes() {
        let cands = vec![
            candidate(0, 0, rect(1.0, 1.0, 1.0, 1.0), 0.7),
            candidate(0, 1, rect(8.0, 1.0, 1.0, 1.0), 0.9),
            candidate(0, 2, rect(15.0, 1.0, 1.0, 1.0), 0.8),
        ];
        let kept = nms(&cands, 0.5);
        assert_eq!(kept.len(), 3);
        // Kept in score order.
        assert_eq!(kept[0].score, 0.9);
        assert_eq!(kept[1].score, 0.8);
        assert_eq!(kept[2].score, 0.7);
    }

    #[test]
    fn nine_clean_candidates_collapse_to_one() {
        let (out, _) = encoded_word("a");
        let ext = extract_candidates(&out, 0.5);
        assert_eq!(ext.candidates.len(), 9);
        let kept = nms(&ext.candidates, 0.5);
        assert_eq!(kept.len(), 1);
    }

    #[test]
    fn empty_input_empty_output() {
        assert!(nms::<f64>(&[], 0.5).is_empty());
        assert!(nms_bruteforce::<f64>(&[], 0.5).is_empty());
        assert!(graphcore_filter::<f64>(&[], (4, 4)).is_empty());
    }

    #[test]
    fn equal_scores_break_ties_by_source_pixel() {
        let r = rect(3.0, 3.0, 2.0, 2.0);
        let cands = vec![candidate(2, 5, r, 0.8), candidate(1, 3, r, 0.8)];
        let kept = nms(&cands, 0.5);
        assert_eq!(kept.len(), 1);
        // Row-major earlier pixel wins the tie.
        let kept_bf = nms_bruteforce(&cands, 0.5);
        assert_eq!(kept, kept_bf);
    }

    fn random_candidates(n: usize, seed: u64, extent: f64) -> Vec<CandidateBox<f64>> {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(seed);
        (0..n)
            .map(|k| {
                let cx: f64 = rng.random_range(0.0..extent);
                let cy: f64 = rng.random_range(0.0..extent);
                let w: f64 = rng.random_range(0.5..6.0);
                let h: f64 = rng.random_range(0.5..6.0);
                let score: f64 = rng.random_range(0.5..1.0);
                candidate(k / 100, k % 100, rect(cx, cy, w, h), score)
            })
            .collect()
    }

    #[test]
    fn nms_matches_bruteforce_on_large_random_input() {
        let cands = random_candidates(1000, 7, 80.0);
        let fast = nms(&cands, 0.5);
        let slow = nms_bruteforce(&cands, 0.5);
        assert_eq!(fast, slow);
    }

    #[test]
    fn nms_output_is_pairwise_below_threshold() {
        let cands = random_candidates(400, 3, 40.0);
        let kept = nms(&cands, 0.4);
        for a in 0..kept.len() {
            for b in a + 1..kept.len() {
                assert!(iou(&kept[a].rect, &kept[b].rect) <= 0.4 + 1e-12);
            }
        }
    }

    #[test]
    fn pipeline_is_deterministic() {
        let cands = random_candidates(600, 11, 60.0);
        let a = nms(&graphcore_filter(&cands, (100, 100)), 0.5);
        let b = nms(&graphcore_filter(&cands, (100, 100)), 0.5);
        assert_eq!(a, b);
    }

    #[test]
    fn graphcore_preserves_nms_result_on_clean_encoding() {
        let (out, _) = encoded_word("hello");
        let ext = extract_candidates(&out, 0.5);
        let with_filter = nms(&graphcore_filter(&ext.candidates, out.shape()), 0.5);
        let without = nms_bruteforce(&ext.candidates, 0.5);
        let key = |b: &CharBox<f64>| {
            (
                (b.rect.cx() * 1e6).round() as i64,
                (b.rect.cy() * 1e6).round() as i64,
                (b.rect.w() * 1e6).round() as i64,
                (b.rect.h() * 1e6).round() as i64,
            )
        };
        let mut a: Vec<_> = with_filter.iter().map(key).collect();
        let mut b: Vec<_> = without.iter().map(key).collect();
        a.sort_unstable();
        b.sort_unstable();
        assert_eq!(a, b);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn nms_agrees_with_bruteforce(seed in any::<u64>(), n in 1usize..120, theta in 0.1f64..0.9) {
            let cands = random_candidates(n, seed, 30.0);
            let fast = nms(&cands, theta);
            let slow = nms_bruteforce(&cands, theta);
            prop_assert_eq!(fast, slow);
        }

        #[test]
        fn graphcore_output_is_subset(seed in any::<u64>(), n in 0usize..80) {
            let cands = random_candidates(n, seed, 20.0);
            let kept = graphcore_filter(&cands, (100, 100));
            prop_assert!(kept.len() <= cands.len());
            let mut pos = 0;
            for k in &kept {
                while pos < cands.len() && cands[pos] != *k {
                    pos += 1;
                }
                prop_assert!(pos < cands.len(), "survivor not found in input order");
                pos += 1;
            }
        }
    }
}
