//! Word assembly: label character boxes from the chargrid, aggregate the
//! word-center predictions of their pixels, generate reflection proposals,
//! cluster by proposal overlap, and read each cluster off along its principal
//! axis.

use std::collections::HashMap;

use thiserror::Error;

use crate::charset::Charset;
use crate::codec::decode_word_offset;
use crate::detect::{extract_candidates, graphcore_filter, nms, CharBox};
use crate::geometry::{overlap_fraction_of_smaller, Rect};
use crate::grid::{ClassGrid, Grid};
use crate::page::NetworkOutput;
use crate::scalar::{sample_coord, sample_range, Scalar};

#[derive(Debug, Error, PartialEq)]
pub enum WordsError {
    #[error("box covers no pixel sample point, word center is unsampleable")]
    UnsampleableBox,
}

/// A decoded word: its text, the bounding box of its member characters, and
/// the member indices into the decoded character box list, in reading order.
#[derive(Debug, Clone, PartialEq)]
pub struct Word<T> {
    pub text: String,
    pub rect: Rect<T>,
    pub char_indices: Vec<usize>,
}

/// The word box one character proposes: from the character to its point
/// reflection through the predicted word center.
#[derive(Debug, Clone, PartialEq)]
pub struct WordProposal<T> {
    pub char_index: usize,
    pub rect: Rect<T>,
}

/// Pipeline knobs; the defaults mirror the CLI defaults.
#[derive(Debug, Clone, Copy)]
pub struct DecodeOptions<T> {
    /// Box-mask threshold for candidate extraction.
    pub tau: T,
    /// IoU threshold for suppression.
    pub theta: T,
    /// Skip the cycle filter (benchmark comparison only).
    pub use_graphcore: bool,
}

impl<T: Scalar> Default for DecodeOptions<T> {
    fn default() -> Self {
        Self {
            tau: crate::scalar::cast(0.5),
            theta: crate::scalar::cast(0.5),
            use_graphcore: true,
        }
    }
}

/// Per-stage warning counters of a page decode.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DecodeReport {
    pub candidates: usize,
    pub dropped_candidates: usize,
    pub after_graphcore: usize,
    pub boxes_after_nms: usize,
    pub boxes_outside_grid: usize,
    pub unsampleable_boxes: usize,
}

/// A fully decoded page: the surviving character boxes and the words grouped
/// from them. `Word::char_indices` index into `char_boxes`.
#[derive(Debug, Clone, PartialEq)]
pub struct DecodedPage<T> {
    pub words: Vec<Word<T>>,
    pub char_boxes: Vec<CharBox<T>>,
    pub report: DecodeReport,
}

/// Majority class of the chargrid pixels inside the box, ignoring background;
/// ties break toward the smaller class index. Boxes over pure background (or
/// fully outside the grid) get the unknown index.
pub fn assign_class<T: Scalar>(rect: &Rect<T>, classes: &ClassGrid, charset: &Charset) -> u16 {
    let (rows, cols) = classes.shape();
    let mut counts: HashMap<u16, usize> = HashMap::new();
    if let (Some((j0, j1)), Some((i0, i1))) = (
        sample_range(rect.left(), rect.right(), cols),
        sample_range(rect.top(), rect.bottom(), rows),
    ) {
        for i in i0..=i1 {
            for j in j0..=j1 {
                let class = classes.get(i, j);
                if class != 0 {
                    *counts.entry(class).or_insert(0) += 1;
                }
            }
        }
    }
    counts
        .into_iter()
        .max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0)))
        .map(|(class, _)| class)
        .unwrap_or_else(|| charset.unknown_index())
}

/// Word center predicted by the pixels inside a character box: decode the
/// sign-log offsets of every covered pixel and take the component-wise
/// median, which shrugs off isolated corrupted pixels.
pub fn predicted_word_center<T: Scalar>(
    rect: &Rect<T>,
    word_dx: &Grid<T>,
    word_dy: &Grid<T>,
) -> Result<(T, T), WordsError> {
    let (rows, cols) = word_dx.shape();
    let (Some((j0, j1)), Some((i0, i1))) = (
        sample_range(rect.left(), rect.right(), cols),
        sample_range(rect.top(), rect.bottom(), rows),
    ) else {
        return Err(WordsError::UnsampleableBox);
    };
    let mut xs = Vec::with_capacity((i1 - i0 + 1) * (j1 - j0 + 1));
    let mut ys = Vec::with_capacity(xs.capacity());
    for i in i0..=i1 {
        let py = sample_coord::<T>(i);
        for j in j0..=j1 {
            let px = sample_coord::<T>(j);
            xs.push(px + decode_word_offset(word_dx.get(i, j)));
            ys.push(py + decode_word_offset(word_dy.get(i, j)));
        }
    }
    Ok((median(&mut xs), median(&mut ys)))
}

fn median<T: Scalar>(values: &mut [T]) -> T {
    debug_assert!(!values.is_empty());
    values.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        let two = T::one() + T::one();
        (values[n / 2 - 1] + values[n / 2]) / two
    }
}

/// Proposal rect: bounding box of the character and its reflection through
/// the predicted word center. Characters far from the center propose wide
/// boxes; a character sitting on the center proposes itself.
pub fn word_proposal<T: Scalar>(
    char_index: usize,
    rect: &Rect<T>,
    center: (T, T),
) -> WordProposal<T> {
    WordProposal {
        char_index,
        rect: rect.union_bound(&rect.reflect_through(center)),
    }
}

/// Cluster characters whose proposals overlap by more than half of the
/// smaller proposal, via union-find over spatially bucketed proposal pairs.
/// Components come back as ascending index lists, ordered by the (top, left)
/// corner of each component's character bounding box.
pub fn cluster_words<T: Scalar>(
    boxes: &[CharBox<T>],
    proposals: &[WordProposal<T>],
) -> Vec<Vec<usize>> {
    assert_eq!(boxes.len(), proposals.len(), "one proposal per box");
    let n = boxes.len();
    if n == 0 {
        return Vec::new();
    }

    let mut dsu = UnionFind::new(n);
    let half = crate::scalar::cast::<T>(0.5);

    // Bucket proposals by cell so only nearby pairs are tested; two rects can
    // only overlap if they share a covered cell.
    let mut dim_sum = 0.0f64;
    for p in proposals {
        dim_sum += 0.5 * (p.rect.w() + p.rect.h()).to_f64().unwrap_or(1.0);
    }
    let cell = (dim_sum / n as f64).max(1e-9);
    let mut buckets: HashMap<(i64, i64), Vec<u32>> = HashMap::new();
    for (k, p) in proposals.iter().enumerate() {
        let x0 = (p.rect.left().to_f64().unwrap() / cell).floor() as i64;
        let x1 = (p.rect.right().to_f64().unwrap() / cell).floor() as i64;
        let y0 = (p.rect.top().to_f64().unwrap() / cell).floor() as i64;
        let y1 = (p.rect.bottom().to_f64().unwrap() / cell).floor() as i64;
        for cy in y0..=y1 {
            for cx in x0..=x1 {
                buckets.entry((cx, cy)).or_default().push(k as u32);
            }
        }
    }
    for bucket in buckets.values() {
        for (pos, &a) in bucket.iter().enumerate() {
            for &b in &bucket[pos + 1..] {
                let (a, b) = (a as usize, b as usize);
                if dsu.find(a) == dsu.find(b) {
                    continue;
                }
                if overlap_fraction_of_smaller(&proposals[a].rect, &proposals[b].rect) > half {
                    dsu.union(a, b);
                }
            }
        }
    }

    let mut by_root: HashMap<usize, Vec<usize>> = HashMap::new();
    for k in 0..n {
        by_root.entry(dsu.find(k)).or_default().push(k);
    }
    let mut components: Vec<Vec<usize>> = by_root.into_values().collect();
    for component in &mut components {
        component.sort_unstable();
    }
    components.sort_by(|a, b| {
        let bound = |ids: &[usize]| {
            ids.iter()
                .map(|&k| boxes[k].rect)
                .reduce(|acc, r| acc.union_bound(&r))
                .expect("non-empty component")
        };
        let ra = bound(a);
        let rb = bound(b);
        (ra.top(), ra.left())
            .partial_cmp(&(rb.top(), rb.left()))
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| a.cmp(b))
    });
    components
}

struct UnionFind {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl UnionFind {
    fn new(len: usize) -> Self {
        Self {
            parent: (0..len).collect(),
            size: vec![1; len],
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (mut ra, mut rb) = (self.find(a), self.find(b));
        if ra == rb {
            return;
        }
        if self.size[ra] < self.size[rb] {
            std::mem::swap(&mut ra, &mut rb);
        }
        self.parent[rb] = ra;
        self.size[ra] += self.size[rb];
    }
}

/// Read a cluster off along its principal axis and concatenate the symbols.
///
/// The axis is the direction of maximal variance of the member centers,
/// oriented so the x unit vector projects non-negatively onto it (y breaks
/// the tie), which makes horizontal text read left-to-right and vertical
/// text top-to-bottom without a special case.
pub fn assemble_word<T: Scalar>(
    cluster: &[usize],
    boxes: &[CharBox<T>],
    charset: &Charset,
) -> Word<T> {
    assert!(!cluster.is_empty(), "cluster must be non-empty");
    let centers: Vec<(f64, f64)> = cluster
        .iter()
        .map(|&k| {
            (
                boxes[k].rect.cx().to_f64().unwrap(),
                boxes[k].rect.cy().to_f64().unwrap(),
            )
        })
        .collect();
    let n = centers.len() as f64;
    let mean_x = centers.iter().map(|c| c.0).sum::<f64>() / n;
    let mean_y = centers.iter().map(|c| c.1).sum::<f64>() / n;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in &centers {
        let dx = x - mean_x;
        let dy = y - mean_y;
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }

    // Leading eigenvector of the 2x2 scatter matrix; for a degenerate
    // (single-point or isotropic) cluster fall back to the x axis.
    let half_trace = 0.5 * (sxx + syy);
    let det_part = (0.25 * (sxx - syy) * (sxx - syy) + sxy * sxy).sqrt();
    let lambda = half_trace + det_part;
    let v1 = (lambda - syy, sxy);
    let v2 = (sxy, lambda - sxx);
    let mut axis = if v1.0 * v1.0 + v1.1 * v1.1 >= v2.0 * v2.0 + v2.1 * v2.1 {
        v1
    } else {
        v2
    };
    if axis.0 * axis.0 + axis.1 * axis.1 < 1e-24 {
        axis = (1.0, 0.0);
    }
    if axis.0 < 0.0 || (axis.0 == 0.0 && axis.1 < 0.0) {
        axis = (-axis.0, -axis.1);
    }

    let mut ordered: Vec<(f64, usize)> = cluster
        .iter()
        .zip(&centers)
        .map(|(&k, (x, y))| (x * axis.0 + y * axis.1, k))
        .collect();
    ordered.sort_by(|a, b| {
        a.0.partial_cmp(&b.0)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.1.cmp(&b.1))
    });

    let char_indices: Vec<usize> = ordered.iter().map(|&(_, k)| k).collect();
    let text: String = char_indices
        .iter()
        .map(|&k| charset.text_symbol(boxes[k].symbol_index))
        .collect();
    let rect = char_indices
        .iter()
        .map(|&k| boxes[k].rect)
        .reduce(|acc, r| acc.union_bound(&r))
        .expect("non-empty cluster");
    Word {
        text,
        rect,
        char_indices,
    }
}

/// The full post-processing chain: extraction, cycle filter, NMS, class
/// assignment, word centers, proposals, clustering, assembly.
pub fn decode_page<T: Scalar>(
    out: &NetworkOutput<T>,
    charset: &Charset,
    options: &DecodeOptions<T>,
) -> DecodedPage<T> {
    let mut report = DecodeReport::default();
    let extraction = extract_candidates(out, options.tau);
    report.candidates = extraction.candidates.len();
    report.dropped_candidates = extraction.dropped;

    let filtered = if options.use_graphcore {
        graphcore_filter(&extraction.candidates, out.shape())
    } else {
        extraction.candidates
    };
    report.after_graphcore = filtered.len();

    let kept = nms(&filtered, options.theta);
    report.boxes_after_nms = kept.len();

    let (rows, cols) = out.shape();
    let mut char_boxes = Vec::with_capacity(kept.len());
    let mut proposals = Vec::with_capacity(kept.len());
    for mut b in kept {
        let in_grid = sample_range(b.rect.left(), b.rect.right(), cols).is_some()
            && sample_range(b.rect.top(), b.rect.bottom(), rows).is_some();
        if !in_grid {
            report.boxes_outside_grid += 1;
        }
        b.symbol_index = assign_class(&b.rect, out.classes(), charset);
        match predicted_word_center(&b.rect, out.word_dx(), out.word_dy()) {
            Ok(center) => {
                let index = char_boxes.len();
                proposals.push(word_proposal(index, &b.rect, center));
                char_boxes.push(b);
            }
            Err(WordsError::UnsampleableBox) => report.unsampleable_boxes += 1,
        }
    }

    let words = cluster_words(&char_boxes, &proposals)
        .iter()
        .map(|cluster| assemble_word(cluster, &char_boxes, charset))
        .collect();
    DecodedPage {
        words,
        char_boxes,
        report,
    }
}
