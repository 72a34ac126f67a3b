//! Target encoding: turn annotation-level pages into the eight network-output
//! grids, plus the inverse scalar decodings and the character-box
//! approximation used when only word boxes are available.

use std::collections::HashMap;

use thiserror::Error;

use crate::charset::Charset;
use crate::geometry::Rect;
use crate::page::{CharAnnotation, GroundTruthPage, NetworkOutput, WordAnnotation};
use crate::scalar::{cast, sample_coord, sample_range, Scalar};

#[derive(Debug, Error, PartialEq)]
pub enum CodecError {
    #[error("cannot split an empty word into character boxes")]
    EmptyText,
    #[error("width table entry for {0:?} must be positive, got {1}")]
    InvalidWidth(char, f64),
}

/// Relative horizontal size of each charset symbol, used to split word boxes
/// into character boxes. The default table is uniform.
#[derive(Debug, Clone)]
pub struct WidthTable {
    /// Relative width per class index (1-based); background slot unused.
    widths: Vec<f64>,
}

impl WidthTable {
    /// Every symbol gets relative width 1.
    pub fn uniform(charset: &Charset) -> Self {
        Self {
            widths: vec![1.0; charset.size() as usize + 1],
        }
    }

    /// Uniform table with per-character overrides.
    pub fn with_overrides(
        charset: &Charset,
        overrides: &HashMap<char, f64>,
    ) -> Result<Self, CodecError> {
        let mut table = Self::uniform(charset);
        for (&c, &w) in overrides {
            if w <= 0.0 || !w.is_finite() {
                return Err(CodecError::InvalidWidth(c, w));
            }
            table.widths[charset.index_of(c) as usize] = w;
        }
        Ok(table)
    }

    pub fn width(&self, symbol_index: u16) -> f64 {
        self.widths
            .get(symbol_index as usize)
            .copied()
            .unwrap_or(1.0)
    }
}

/// Compress a word-center offset: `sign(d) * ln(|d| + 1)`. Odd and strictly
/// increasing.
#[inline]
pub fn encode_word_offset<T: Scalar>(delta: T) -> T {
    if delta == T::zero() {
        return T::zero();
    }
    delta.signum() * delta.abs().ln_1p()
}

/// Exact inverse of [`encode_word_offset`]: `sign(v) * (exp(|v|) - 1)`.
#[inline]
pub fn decode_word_offset<T: Scalar>(v: T) -> T {
    if v == T::zero() {
        return T::zero();
    }
    v.signum() * v.abs().exp_m1()
}

/// Split a word box horizontally into one box per character, each taking a
/// share of the width proportional to its table entry. Boxes abut exactly and
/// keep the full word height.
pub fn approximate_char_boxes<T: Scalar>(
    word: &WordAnnotation<T>,
    word_id: usize,
    widths: &WidthTable,
    charset: &Charset,
) -> Result<Vec<CharAnnotation<T>>, CodecError> {
    if word.text.is_empty() {
        return Err(CodecError::EmptyText);
    }
    let indices: Vec<u16> = word.text.chars().map(|c| charset.index_of(c)).collect();
    let shares: Vec<f64> = indices.iter().map(|&s| widths.width(s)).collect();
    let total: f64 = shares.iter().sum();

    let left = word.rect.left();
    let w = word.rect.w();
    let two = T::one() + T::one();
    let mut boxes = Vec::with_capacity(indices.len());
    // Boundaries from cumulative shares so the last edge lands exactly on the
    // word's right edge.
    let mut cum = 0.0;
    let mut prev = left;
    for (k, &symbol_index) in indices.iter().enumerate() {
        cum += shares[k];
        let next = if k + 1 == indices.len() {
            word.rect.right()
        } else {
            left + w * cast::<T>(cum / total)
        };
        let rect = Rect::new(
            (prev + next) / two,
            word.rect.cy(),
            next - prev,
            word.rect.h(),
        )
        .expect("positive char box share");
        boxes.push(CharAnnotation {
            symbol_index,
            rect,
            word_id,
        });
        prev = next;
    }
    Ok(boxes)
}

/// A character box too thin to cover any pixel sample point; it encodes to
/// nothing and cannot be decoded back.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodeWarning {
    pub char_index: usize,
}

/// Rasterize a page into the eight target grids.
///
/// A pixel belongs to a character box iff its sample point lies inside the
/// half-open box; when noisy annotations overlap, the later box in page order
/// wins. Background pixels keep class 0, mask 0 and zero regression values.
pub fn encode_page<T: Scalar>(
    page: &GroundTruthPage<T>,
    charset: &Charset,
) -> (NetworkOutput<T>, Vec<EncodeWarning>) {
    let (rows, cols) = page.shape();
    let mut out = NetworkOutput::zeros(rows, cols);
    let mut warnings = Vec::new();

    let (classes, box_mask, [center_dx, center_dy, log_width, log_height, word_dx, word_dy]) =
        out.grids_mut();

    for (char_index, c) in page.chars().iter().enumerate() {
        let word = &page.words()[c.word_id];
        let symbol = if c.symbol_index == 0 || c.symbol_index > charset.size() {
            charset.unknown_index()
        } else {
            c.symbol_index
        };
        let x_range = sample_range(c.rect.left(), c.rect.right(), cols);
        let y_range = sample_range(c.rect.top(), c.rect.bottom(), rows);
        let (Some((j0, j1)), Some((i0, i1))) = (x_range, y_range) else {
            warnings.push(EncodeWarning { char_index });
            continue;
        };
        let log_w = c.rect.w().ln();
        let log_h = c.rect.h().ln();
        for i in i0..=i1 {
            let py = sample_coord::<T>(i);
            for j in j0..=j1 {
                let px = sample_coord::<T>(j);
                classes.set(i, j, symbol);
                box_mask.set(i, j, T::one());
                center_dx.set(i, j, c.rect.cx() - px);
                center_dy.set(i, j, c.rect.cy() - py);
                log_width.set(i, j, log_w);
                log_height.set(i, j, log_h);
                word_dx.set(i, j, encode_word_offset(word.rect.cx() - px));
                word_dy.set(i, j, encode_word_offset(word.rect.cy() - py));
            }
        }
    }
    (out, warnings)
}
