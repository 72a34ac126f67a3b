//! Deterministic synthetic pages and tensor-space corruption.
//!
//! Pages are generated at the annotation level only (no rendering): words of
//! random printable symbols laid out left-to-right, top-to-bottom within one
//! to three columns. Corruption perturbs the encoded grids directly, standing
//! in for the prediction error of a trained network.
//!
//! All randomness comes from ChaCha12, a named, portable stream cipher RNG,
//! so identical seeds reproduce identical corpora on any platform. Each grid
//! of [`corrupt_output`] draws from its own stream.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::charset::Charset;
use crate::codec::{approximate_char_boxes, WidthTable};
use crate::page::{GroundTruthPage, NetworkOutput, PageError, WordAnnotation};
use crate::scalar::{cast, Scalar};

/// Identifier of the PRNG algorithm, recorded in corpus metadata.
pub const PRNG_ALGORITHM: &str = "chacha12";

#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    #[error("page layout fits zero lines")]
    DegenerateLayout,
    #[error("invalid page config: {0}")]
    InvalidConfig(String),
    #[error("invalid noise config: {0}")]
    InvalidNoise(String),
}

/// Page orientation: as laid out, or with both axes swapped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub enum Rotation {
    R0,
    R90,
}

impl TryFrom<u32> for Rotation {
    type Error = String;
    fn try_from(v: u32) -> Result<Self, Self::Error> {
        match v {
            0 => Ok(Rotation::R0),
            90 => Ok(Rotation::R90),
            other => Err(format!("rotation must be 0 or 90, got {other}")),
        }
    }
}

impl From<Rotation> for u32 {
    fn from(r: Rotation) -> u32 {
        match r {
            Rotation::R0 => 0,
            Rotation::R90 => 90,
        }
    }
}

/// Layout parameters of a synthetic page.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PageConfig {
    /// `(rows, cols)` of the output grids.
    pub shape: (usize, usize),
    /// Number of text columns, 1 to 3.
    pub columns: u32,
    /// Character box width in pixels.
    pub char_w: f64,
    /// Character box height in pixels.
    pub char_h: f64,
    /// Inclusive range of word lengths in characters.
    pub word_len_range: (usize, usize),
    /// Inclusive range of words attempted per line.
    pub words_per_line_range: (usize, usize),
    /// Gap between lines as a multiple of `char_h`.
    pub line_spacing: f64,
    pub rotation: Rotation,
    pub seed: u64,
}

impl Default for PageConfig {
    fn default() -> Self {
        Self {
            shape: (96, 384),
            columns: 1,
            char_w: 4.0,
            char_h: 6.0,
            word_len_range: (3, 6),
            words_per_line_range: (3, 8),
            line_spacing: 1.5,
            rotation: Rotation::R0,
            seed: 0,
        }
    }
}

impl PageConfig {
    fn validate(&self) -> Result<(), SynthError> {
        let err = |msg: &str| Err(SynthError::InvalidConfig(msg.into()));
        if self.shape.0 == 0 || self.shape.1 == 0 {
            return err("shape must be positive");
        }
        if !(1..=3).contains(&self.columns) {
            return err("columns must be 1 to 3");
        }
        if !(self.char_w > 0.0 && self.char_h > 0.0) {
            return err("char size must be positive");
        }
        if self.word_len_range.0 == 0 || self.word_len_range.0 > self.word_len_range.1 {
            return err("word length range is empty");
        }
        if self.words_per_line_range.0 > self.words_per_line_range.1 {
            return err("words-per-line range is empty");
        }
        if self.line_spacing < 0.0 {
            return err("line spacing must be non-negative");
        }
        Ok(())
    }
}

/// Tensor-space corruption parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NoiseConfig {
    /// Stddev of Gaussian noise added to the six regression grids.
    pub reg_sigma: f64,
    /// Per-pixel probability of replacing a non-background class with a
    /// random non-background class.
    pub mask_flip_p: f64,
    /// Stddev of Gaussian noise on the box mask, clamped back to `[0, 1]`.
    pub bc_jitter_sigma: f64,
    pub seed: u64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            reg_sigma: 0.0,
            mask_flip_p: 0.0,
            bc_jitter_sigma: 0.0,
            seed: 0,
        }
    }
}

impl NoiseConfig {
    fn validate(&self) -> Result<(), SynthError> {
        let err = |msg: &str| Err(SynthError::InvalidNoise(msg.into()));
        if !(self.reg_sigma >= 0.0 && self.reg_sigma.is_finite()) {
            return err("reg_sigma must be finite and non-negative");
        }
        if !(0.0..1.0).contains(&self.mask_flip_p) {
            return err("mask_flip_p must be in [0, 1)");
        }
        if !(self.bc_jitter_sigma >= 0.0 && self.bc_jitter_sigma.is_finite()) {
            return err("bc_jitter_sigma must be finite and non-negative");
        }
        Ok(())
    }
}

/// Generate a deterministic synthetic page: random words of printable symbols
/// placed line by line within each column. Inter-word gaps are at least
/// 1.5 character widths, lines are `line_spacing * char_h` apart, and a 90
/// degree rotation transposes every annotation.
pub fn generate_page<T: Scalar>(
    cfg: &PageConfig,
    charset: &Charset,
) -> Result<GroundTruthPage<T>, SynthError> {
    cfg.validate()?;
    let (rows, cols) = cfg.shape;
    let printable: Vec<u16> = charset.printable_indices().collect();
    if printable.is_empty() {
        return Err(SynthError::InvalidConfig(
            "charset has no printable symbols".into(),
        ));
    }

    let margin_x = cfg.char_w;
    let margin_y = cfg.char_h;
    let gutter = 2.0 * cfg.char_w;
    let columns = cfg.columns as f64;
    let column_width =
        ((cols as f64) - 2.0 * margin_x - (columns - 1.0) * gutter) / columns;
    if column_width < cfg.char_w {
        return Err(SynthError::DegenerateLayout);
    }
    let pitch = cfg.char_h * (1.0 + cfg.line_spacing);
    let mut line_tops = Vec::new();
    let mut top = margin_y;
    while top + cfg.char_h <= rows as f64 - margin_y {
        line_tops.push(top);
        top += pitch;
    }
    if line_tops.is_empty() {
        return Err(SynthError::DegenerateLayout);
    }

    let mut rng = ChaCha12Rng::seed_from_u64(cfg.seed);
    let widths = WidthTable::uniform(charset);
    let mut words: Vec<WordAnnotation<T>> = Vec::new();
    let mut chars = Vec::new();

    for column in 0..cfg.columns {
        let col_left = margin_x + column as f64 * (column_width + gutter);
        let col_right = col_left + column_width;
        for &line_top in &line_tops {
            let cy = line_top + cfg.char_h / 2.0;
            let target = rng.random_range(
                cfg.words_per_line_range.0..=cfg.words_per_line_range.1,
            );
            let mut x = col_left;
            for _ in 0..target {
                let len =
                    rng.random_range(cfg.word_len_range.0..=cfg.word_len_range.1);
                let text: String = (0..len)
                    .map(|_| {
                        let pick = rng.random_range(0..printable.len());
                        charset.symbol(printable[pick]).expect("printable symbol")
                    })
                    .collect();
                let gap = cfg.char_w * (1.5 + rng.random_range(0.0..1.0));
                let word_w = len as f64 * cfg.char_w;
                if x + word_w > col_right {
                    break;
                }
                let rect = crate::geometry::Rect::new(
                    cast::<T>(x + word_w / 2.0),
                    cast::<T>(cy),
                    cast::<T>(word_w),
                    cast::<T>(cfg.char_h),
                )
                .expect("layout produces valid rects");
                let word = WordAnnotation { text, rect };
                let id = words.len();
                chars.extend(
                    approximate_char_boxes(&word, id, &widths, charset)
                        .expect("non-empty synthetic word"),
                );
                words.push(word);
                x += word_w + gap;
            }
        }
    }

    let page = GroundTruthPage::new((rows, cols), words, chars)
        .map_err(|e: PageError| SynthError::InvalidConfig(e.to_string()))?;
    Ok(match cfg.rotation {
        Rotation::R0 => page,
        Rotation::R90 => page.transpose(),
    })
}

/// Grid stream indices for [`corrupt_output`]; each grid consumes an
/// independent ChaCha stream of the same seed.
const STREAM_CENTER_DX: u64 = 0;
const STREAM_CENTER_DY: u64 = 1;
const STREAM_LOG_W: u64 = 2;
const STREAM_LOG_H: u64 = 3;
const STREAM_WORD_DX: u64 = 4;
const STREAM_WORD_DY: u64 = 5;
const STREAM_CLASSES: u64 = 6;
const STREAM_BOX_MASK: u64 = 7;

fn stream_rng(seed: u64, stream: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Corrupt an encoded output in tensor space: Gaussian noise on the six
/// regression grids, random class flips on non-background chargrid pixels,
/// and clamped jitter on the box mask. Deterministic for a given seed; the
/// unit noise per pixel is drawn independently of the sigmas, so sweeping a
/// sigma rescales one fixed noise field instead of resampling it.
pub fn corrupt_output<T: Scalar>(
    out: &NetworkOutput<T>,
    noise: &NoiseConfig,
    charset: &Charset,
) -> Result<NetworkOutput<T>, SynthError> {
    noise.validate()?;
    let mut corrupted = out.clone();
    let (classes, box_mask, regression) = corrupted.grids_mut();

    let streams = [
        STREAM_CENTER_DX,
        STREAM_CENTER_DY,
        STREAM_LOG_W,
        STREAM_LOG_H,
        STREAM_WORD_DX,
        STREAM_WORD_DY,
    ];
    if noise.reg_sigma > 0.0 {
        for (grid, stream) in regression.into_iter().zip(streams) {
            let mut rng = stream_rng(noise.seed, stream);
            for value in grid.values_mut() {
                let z: f64 = StandardNormal.sample(&mut rng);
                let noisy = value.to_f64().unwrap_or(0.0) + noise.reg_sigma * z;
                *value = cast::<T>(noisy);
            }
        }
    }

    if noise.mask_flip_p > 0.0 {
        let mut rng = stream_rng(noise.seed, STREAM_CLASSES);
        let size = charset.size();
        for value in classes.values_mut() {
            if *value == 0 {
                continue;
            }
            if rng.random_range(0.0..1.0) < noise.mask_flip_p {
                *value = rng.random_range(1..=size);
            }
        }
    }

    if noise.bc_jitter_sigma > 0.0 {
        let mut rng = stream_rng(noise.seed, STREAM_BOX_MASK);
        for value in box_mask.values_mut() {
            let z: f64 = StandardNormal.sample(&mut rng);
            let noisy = (value.to_f64().unwrap_or(0.0) + noise.bc_jitter_sigma * z)
                .clamp(0.0, 1.0);
            *value = cast::<T>(noisy);
        }
    }

    Ok(corrupted)
}
