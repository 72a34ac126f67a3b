//! Character set mapping printable symbols to dense class indices.
//!
//! Index 0 is reserved for background and is never a printable symbol. The
//! default English set holds 88 printable symbols plus one unknown token,
//! 89 classes in total; its exact symbol list ships as a config file that can
//! be swapped out with `Charset::parse`.

use std::collections::HashMap;

use thiserror::Error;

/// The default English charset config (one symbol per line, `<UNK>` marks the
/// unknown token).
pub const DEFAULT_CHARSET_TEXT: &str = include_str!("../data/english_89.txt");

/// Character shown in assembled text for classes without a printable symbol.
pub const UNKNOWN_GLYPH: char = '\u{FFFD}';

#[derive(Debug, Error, PartialEq)]
pub enum CharsetError {
    #[error("line {0}: expected a single character or <UNK>")]
    BadLine(usize),
    #[error("duplicate symbol {0:?}")]
    DuplicateSymbol(char),
    #[error("charset must contain exactly one <UNK> entry")]
    MissingUnknown,
    #[error("charset declares more than one <UNK> entry")]
    DuplicateUnknown,
    #[error("charset is empty")]
    Empty,
}

/// Ordered symbol table; class indices run densely from 1 to `size()`.
#[derive(Debug, Clone)]
pub struct Charset {
    /// Printable symbol per class index, `None` for the unknown token.
    symbols: Vec<Option<char>>,
    unknown: u16,
    by_char: HashMap<char, u16>,
}

impl Charset {
    /// The 89-class English charset used throughout the repo.
    pub fn default_english() -> Self {
        Self::parse(DEFAULT_CHARSET_TEXT).expect("bundled charset is valid")
    }

    /// Parse a charset config: one printable symbol per line, plus exactly one
    /// `<UNK>` line for the unknown token. Line order defines class indices
    /// starting at 1.
    pub fn parse(text: &str) -> Result<Self, CharsetError> {
        let mut symbols = Vec::new();
        let mut by_char = HashMap::new();
        let mut unknown = None;
        for (lineno, line) in text.lines().enumerate() {
            let line = line.strip_suffix('\r').unwrap_or(line);
            if line.is_empty() {
                continue;
            }
            if line == "<UNK>" {
                if unknown.is_some() {
                    return Err(CharsetError::DuplicateUnknown);
                }
                symbols.push(None);
                unknown = Some(symbols.len() as u16);
                continue;
            }
            let mut chars = line.chars();
            let c = chars.next().ok_or(CharsetError::BadLine(lineno + 1))?;
            if chars.next().is_some() {
                return Err(CharsetError::BadLine(lineno + 1));
            }
            symbols.push(Some(c));
            let index = symbols.len() as u16;
            if by_char.insert(c, index).is_some() {
                return Err(CharsetError::DuplicateSymbol(c));
            }
        }
        if symbols.is_empty() {
            return Err(CharsetError::Empty);
        }
        let unknown = unknown.ok_or(CharsetError::MissingUnknown)?;
        Ok(Self {
            symbols,
            unknown,
            by_char,
        })
    }

    /// Number of classes excluding background; valid indices are `1..=size()`.
    pub fn size(&self) -> u16 {
        self.symbols.len() as u16
    }

    /// Class index of the unknown token.
    pub fn unknown_index(&self) -> u16 {
        self.unknown
    }

    /// Class index for a character; unmapped characters fall back to the
    /// unknown index.
    pub fn index_of(&self, c: char) -> u16 {
        self.by_char.get(&c).copied().unwrap_or(self.unknown)
    }

    /// Printable symbol of a class index; `None` for background, the unknown
    /// token and out-of-range indices.
    pub fn symbol(&self, index: u16) -> Option<char> {
        if index == 0 {
            return None;
        }
        self.symbols.get(index as usize - 1).copied().flatten()
    }

    /// Symbol used when rendering assembled text; non-printable classes map to
    /// the replacement glyph.
    pub fn text_symbol(&self, index: u16) -> char {
        self.symbol(index).unwrap_or(UNKNOWN_GLYPH)
    }

    /// Class indices of printable symbols, excluding the unknown token.
    pub fn printable_indices(&self) -> impl Iterator<Item = u16> + '_ {
        self.symbols
            .iter()
            .enumerate()
            .filter_map(|(k, s)| s.map(|_| k as u16 + 1))
    }
}
