//! Ground-truth page annotations, the eight-grid network output bundle, and
//! their interchange formats.
//!
//! Pages travel as JSON lines, one object per line with `doc_id`, `shape`
//! (`[rows, cols]`) and `words`; each word is `{"text", "cx", "cy", "w", "h"}`.
//! Network outputs travel as eight CGRD files named
//! `<page_id>.{S,Bc,Xc,Yc,Wc,Hc,Xw,Yw}.cgrd`.

use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Rect, RectError};
use crate::grid::{from_wire, to_wire, ClassGrid, Grid, GridError};
use crate::scalar::Scalar;

#[derive(Debug, Error)]
pub enum PageError {
    #[error("word text must be non-empty")]
    EmptyText,
    #[error("char {index} references missing word {word_id}")]
    DanglingWordId { index: usize, word_id: usize },
    #[error("char {index} extends outside the page bounds")]
    CharOutOfBounds { index: usize },
    #[error("grids disagree on shape: expected {expected:?}, got {got:?}")]
    ShapeMismatch {
        expected: (usize, usize),
        got: (usize, usize),
    },
    #[error(transparent)]
    Rect(#[from] RectError),
    #[error("{path}: {source}")]
    GridFile { path: PathBuf, source: GridError },
    #[error("line {line}: {source}")]
    Json {
        line: usize,
        source: serde_json::Error,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A ground-truth word: its string content and bounding rectangle.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WordAnnotation<T> {
    pub text: String,
    #[serde(flatten)]
    pub rect: Rect<T>,
}

impl<T: Scalar> WordAnnotation<T> {
    pub fn new(text: impl Into<String>, rect: Rect<T>) -> Result<Self, PageError> {
        let text = text.into();
        if text.is_empty() {
            return Err(PageError::EmptyText);
        }
        Ok(Self { text, rect })
    }
}

impl<'de, T: Scalar> Deserialize<'de> for WordAnnotation<T> {
    fn deserialize<D>(deserializer: D) -> Result<Self, D::Error>
    where
        D: serde::Deserializer<'de>,
    {
        #[derive(Deserialize)]
        #[serde(bound = "T: Scalar")]
        struct Raw<T: Scalar> {
            text: String,
            #[serde(flatten)]
            rect: Rect<T>,
        }
        let raw = Raw::<T>::deserialize(deserializer)?;
        WordAnnotation::new(raw.text, raw.rect).map_err(serde::de::Error::custom)
    }
}

/// A single character instance derived from a word annotation.
#[derive(Debug, Clone, PartialEq)]
pub struct CharAnnotation<T> {
    pub symbol_index: u16,
    pub rect: Rect<T>,
    pub word_id: usize,
}

/// Annotation-level document: page shape plus word and character boxes.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthPage<T> {
    shape: (usize, usize),
    words: Vec<WordAnnotation<T>>,
    chars: Vec<CharAnnotation<T>>,
}

impl<T: Scalar> GroundTruthPage<T> {
    pub fn new(
        shape: (usize, usize),
        words: Vec<WordAnnotation<T>>,
        chars: Vec<CharAnnotation<T>>,
    ) -> Result<Self, PageError> {
        let rows = T::from_usize(shape.0).expect("rows fit in scalar");
        let cols = T::from_usize(shape.1).expect("cols fit in scalar");
        for (index, c) in chars.iter().enumerate() {
            if c.word_id >= words.len() {
                return Err(PageError::DanglingWordId {
                    index,
                    word_id: c.word_id,
                });
            }
            if c.rect.left() < T::zero()
                || c.rect.top() < T::zero()
                || c.rect.right() > cols
                || c.rect.bottom() > rows
            {
                return Err(PageError::CharOutOfBounds { index });
            }
        }
        Ok(Self {
            shape,
            words,
            chars,
        })
    }

    pub fn shape(&self) -> (usize, usize) {
        self.shape
    }

    pub fn words(&self) -> &[WordAnnotation<T>] {
        &self.words
    }

    pub fn chars(&self) -> &[CharAnnotation<T>] {
        &self.chars
    }

    /// Swap the two page axes, transposing every annotation.
    pub fn transpose(&self) -> Self {
        Self {
            shape: (self.shape.1, self.shape.0),
            words: self
                .words
                .iter()
                .map(|w| WordAnnotation {
                    text: w.text.clone(),
                    rect: w.rect.transpose(),
                })
                .collect(),
            chars: self
                .chars
                .iter()
                .map(|c| CharAnnotation {
                    symbol_index: c.symbol_index,
                    rect: c.rect.transpose(),
                    word_id: c.word_id,
                })
                .collect(),
        }
    }
}

/// One page line of the JSON-lines interchange format. `doc_id` may be
/// omitted on input; readers fall back to a line-number id.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct PageRecord<T: Scalar> {
    #[serde(default)]
    pub doc_id: String,
    /// `[rows, cols]`.
    pub shape: (usize, usize),
    pub words: Vec<WordAnnotation<T>>,
}

impl<T: Scalar> PageRecord<T> {
    pub fn from_page(doc_id: impl Into<String>, page: &GroundTruthPage<T>) -> Self {
        Self {
            doc_id: doc_id.into(),
            shape: page.shape(),
            words: page.words().to_vec(),
        }
    }
}

/// Read page records from JSON lines; blank lines are skipped and records
/// without a `doc_id` get one derived from their position.
pub fn read_page_records<T: Scalar>(reader: impl BufRead) -> Result<Vec<PageRecord<T>>, PageError> {
    let mut pages: Vec<PageRecord<T>> = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut record: PageRecord<T> =
            serde_json::from_str(&line).map_err(|source| PageError::Json {
                line: lineno + 1,
                source,
            })?;
        if record.doc_id.is_empty() {
            record.doc_id = format!("page-{:05}", pages.len());
        }
        pages.push(record);
    }
    Ok(pages)
}

/// Write page records as JSON lines.
pub fn write_page_records<T: Scalar>(
    mut writer: impl Write,
    records: &[PageRecord<T>],
) -> Result<(), PageError> {
    for record in records {
        serde_json::to_writer(&mut writer, record).map_err(|source| PageError::Json {
            line: 0,
            source,
        })?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

/// File suffixes of the eight grids in a network-output bundle, in canonical
/// order: classes, box mask, center offsets, log sizes, word offsets.
pub const GRID_SUFFIXES: [&str; 8] = ["S", "Bc", "Xc", "Yc", "Wc", "Hc", "Xw", "Yw"];

/// The eight per-pixel output grids of the detection network, all sharing one
/// shape.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkOutput<T> {
    classes: ClassGrid,
    box_mask: Grid<T>,
    center_dx: Grid<T>,
    center_dy: Grid<T>,
    log_width: Grid<T>,
    log_height: Grid<T>,
    word_dx: Grid<T>,
    word_dy: Grid<T>,
}

impl<T: Scalar> NetworkOutput<T> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        classes: ClassGrid,
        box_mask: Grid<T>,
        center_dx: Grid<T>,
        center_dy: Grid<T>,
        log_width: Grid<T>,
        log_height: Grid<T>,
        word_dx: Grid<T>,
        word_dy: Grid<T>,
    ) -> Result<Self, PageError> {
        let expected = classes.shape();
        for got in [
            box_mask.shape(),
            center_dx.shape(),
            center_dy.shape(),
            log_width.shape(),
            log_height.shape(),
            word_dx.shape(),
            word_dy.shape(),
        ] {
            if got != expected {
                return Err(PageError::ShapeMismatch { expected, got });
            }
        }
        Ok(Self {
            classes,
            box_mask,
            center_dx,
            center_dy,
            log_width,
            log_height,
            word_dx,
            word_dy,
        })
    }

    /// All-background output of the given shape.
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            classes: Grid::filled(rows, cols, 0),
            box_mask: Grid::filled(rows, cols, T::zero()),
            center_dx: Grid::filled(rows, cols, T::zero()),
            center_dy: Grid::filled(rows, cols, T::zero()),
            log_width: Grid::filled(rows, cols, T::zero()),
            log_height: Grid::filled(rows, cols, T::zero()),
            word_dx: Grid::filled(rows, cols, T::zero()),
            word_dy: Grid::filled(rows, cols, T::zero()),
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        self.classes.shape()
    }

    /// Per-pixel character classes (the chargrid); 0 is background.
    pub fn classes(&self) -> &ClassGrid {
        &self.classes
    }

    /// Character box detection mask in `[0, 1]`.
    pub fn box_mask(&self) -> &Grid<T> {
        &self.box_mask
    }

    /// Offset from each pixel's sample point to its character box center, x.
    pub fn center_dx(&self) -> &Grid<T> {
        &self.center_dx
    }

    /// Offset from each pixel's sample point to its character box center, y.
    pub fn center_dy(&self) -> &Grid<T> {
        &self.center_dy
    }

    /// Natural log of the character box width.
    pub fn log_width(&self) -> &Grid<T> {
        &self.log_width
    }

    /// Natural log of the character box height.
    pub fn log_height(&self) -> &Grid<T> {
        &self.log_height
    }

    /// Sign-log encoded offset to the word center, x.
    pub fn word_dx(&self) -> &Grid<T> {
        &self.word_dx
    }

    /// Sign-log encoded offset to the word center, y.
    pub fn word_dy(&self) -> &Grid<T> {
        &self.word_dy
    }

    pub(crate) fn grids_mut(
        &mut self,
    ) -> (
        &mut ClassGrid,
        &mut Grid<T>,
        [&mut Grid<T>; 6],
    ) {
        (
            &mut self.classes,
            &mut self.box_mask,
            [
                &mut self.center_dx,
                &mut self.center_dy,
                &mut self.log_width,
                &mut self.log_height,
                &mut self.word_dx,
                &mut self.word_dy,
            ],
        )
    }

    /// Swap the two grid axes: transpose every grid and exchange the x/y
    /// regression channels.
    pub fn transpose(&self) -> Self {
        Self {
            classes: self.classes.transpose(),
            box_mask: self.box_mask.transpose(),
            center_dx: self.center_dy.transpose(),
            center_dy: self.center_dx.transpose(),
            log_width: self.log_height.transpose(),
            log_height: self.log_width.transpose(),
            word_dx: self.word_dy.transpose(),
            word_dy: self.word_dx.transpose(),
        }
    }

    fn bundle_path(dir: &Path, page_id: &str, suffix: &str) -> PathBuf {
        dir.join(format!("{page_id}.{suffix}.cgrd"))
    }

    /// Write the bundle as eight CGRD files named
    /// `<page_id>.<suffix>.cgrd`. Real grids are stored as f32.
    pub fn write_dir(&self, dir: impl AsRef<Path>, page_id: &str) -> Result<(), PageError> {
        let dir = dir.as_ref();
        let wrap = |path: PathBuf| move |source| PageError::GridFile { path, source };
        let path = Self::bundle_path(dir, page_id, "S");
        self.classes.write_file(&path).map_err(wrap(path.clone()))?;
        let reals = [
            ("Bc", &self.box_mask),
            ("Xc", &self.center_dx),
            ("Yc", &self.center_dy),
            ("Wc", &self.log_width),
            ("Hc", &self.log_height),
            ("Xw", &self.word_dx),
            ("Yw", &self.word_dy),
        ];
        for (suffix, grid) in reals {
            let path = Self::bundle_path(dir, page_id, suffix);
            to_wire(grid).write_file(&path).map_err(wrap(path.clone()))?;
        }
        Ok(())
    }

    /// Read a bundle written by [`NetworkOutput::write_dir`].
    pub fn read_dir(dir: impl AsRef<Path>, page_id: &str) -> Result<Self, PageError> {
        let dir = dir.as_ref();
        let read_real = |suffix: &str| -> Result<Grid<T>, PageError> {
            let path = Self::bundle_path(dir, page_id, suffix);
            let grid = Grid::<f32>::read_file(&path)
                .map_err(|source| PageError::GridFile { path, source })?;
            Ok(from_wire(&grid))
        };
        let path = Self::bundle_path(dir, page_id, "S");
        let classes =
            ClassGrid::read_file(&path).map_err(|source| PageError::GridFile { path, source })?;
        Self::new(
            classes,
            read_real("Bc")?,
            read_real("Xc")?,
            read_real("Yc")?,
            read_real("Wc")?,
            read_real("Hc")?,
            read_real("Xw")?,
            read_real("Yw")?,
        )
    }
}
