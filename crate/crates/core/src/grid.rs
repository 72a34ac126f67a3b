//! Dense row-major 2-D grids and the CGRD binary file format.
//!
//! CGRD layout (little-endian): magic `CGRD`, u32 version (= 1), u32 rows,
//! u32 cols, u8 dtype, then the row-major payload. Dtype 0 stores class
//! indices as u16, dtype 1 stores reals as f32. Round trips are byte exact
//! for both payload types.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use thiserror::Error;

use crate::scalar::Scalar;

const MAGIC: [u8; 4] = *b"CGRD";
const VERSION: u32 = 1;

pub const DTYPE_CLASS: u8 = 0;
pub const DTYPE_REAL: u8 = 1;

/// Grid file errors; each malformed-input shape is reported distinctly.
#[derive(Debug, Error)]
pub enum GridError {
    #[error("bad magic: not a CGRD file")]
    BadMagic,
    #[error("unsupported CGRD version {0}")]
    BadVersion(u32),
    #[error("unknown dtype byte {0}")]
    BadDtype(u8),
    #[error("expected dtype {expected} but file holds dtype {found}")]
    DtypeMismatch { expected: u8, found: u8 },
    #[error("truncated header: {0} bytes")]
    TruncatedHeader(usize),
    #[error("length mismatch: header implies {expected} payload bytes, found {found}")]
    LengthMismatch { expected: u64, found: u64 },
    #[error("grid shape {rows}x{cols} does not match {len} values")]
    ShapeMismatch { rows: usize, cols: usize, len: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Dense row-major grid of `rows * cols` values.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid<V> {
    rows: usize,
    cols: usize,
    values: Vec<V>,
}

/// Per-pixel character class indices; 0 is background.
pub type ClassGrid = Grid<u16>;

impl<V: Copy> Grid<V> {
    pub fn filled(rows: usize, cols: usize, value: V) -> Self {
        Self {
            rows,
            cols,
            values: vec![value; rows * cols],
        }
    }

    pub fn from_values(rows: usize, cols: usize, values: Vec<V>) -> Result<Self, GridError> {
        if values.len() != rows * cols {
            return Err(GridError::ShapeMismatch {
                rows,
                cols,
                len: values.len(),
            });
        }
        Ok(Self { rows, cols, values })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> V {
        debug_assert!(row < self.rows && col < self.cols);
        self.values[row * self.cols + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: V) {
        debug_assert!(row < self.rows && col < self.cols);
        self.values[row * self.cols + col] = value;
    }

    pub fn values(&self) -> &[V] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [V] {
        &mut self.values
    }

    /// Transpose, mapping `(i, j)` to `(j, i)`.
    pub fn transpose(&self) -> Self {
        let mut out = Vec::with_capacity(self.values.len());
        for j in 0..self.cols {
            for i in 0..self.rows {
                out.push(self.get(i, j));
            }
        }
        Self {
            rows: self.cols,
            cols: self.rows,
            values: out,
        }
    }

    pub fn map<U: Copy>(&self, f: impl Fn(V) -> U) -> Grid<U> {
        Grid {
            rows: self.rows,
            cols: self.cols,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }
}

/// Payload element of the CGRD format.
pub trait GridElement: Copy {
    const DTYPE: u8;
    const SIZE: usize;
    fn write_le(self, out: &mut Vec<u8>);
    fn read_le(bytes: &[u8]) -> Self;
}

impl GridElement for u16 {
    const DTYPE: u8 = DTYPE_CLASS;
    const SIZE: usize = 2;
    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn read_le(bytes: &[u8]) -> Self {
        u16::from_le_bytes([bytes[0], bytes[1]])
    }
}

impl GridElement for f32 {
    const DTYPE: u8 = DTYPE_REAL;
    const SIZE: usize = 4;
    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn read_le(bytes: &[u8]) -> Self {
        f32::from_le_bytes([bytes[0], bytes[1], bytes[2], bytes[3]])
    }
}

impl<V: GridElement> Grid<V> {
    /// Serialize to CGRD bytes.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(17 + self.values.len() * V::SIZE);
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.rows as u32).to_le_bytes());
        out.extend_from_slice(&(self.cols as u32).to_le_bytes());
        out.push(V::DTYPE);
        for &v in &self.values {
            v.write_le(&mut out);
        }
        out
    }

    /// Parse CGRD bytes holding this element type.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self, GridError> {
        let (rows, cols, dtype, payload) = split_cgrd(bytes)?;
        if dtype != V::DTYPE {
            return Err(GridError::DtypeMismatch {
                expected: V::DTYPE,
                found: dtype,
            });
        }
        let expected = rows as u64 * cols as u64 * V::SIZE as u64;
        if payload.len() as u64 != expected {
            return Err(GridError::LengthMismatch {
                expected,
                found: payload.len() as u64,
            });
        }
        let values = payload
            .chunks_exact(V::SIZE)
            .map(V::read_le)
            .collect::<Vec<_>>();
        Grid::from_values(rows as usize, cols as usize, values)
    }

    pub fn write_file(&self, path: impl AsRef<Path>) -> Result<(), GridError> {
        let mut out = BufWriter::new(File::create(path)?);
        out.write_all(&self.to_bytes())?;
        out.flush()?;
        Ok(())
    }

    pub fn read_file(path: impl AsRef<Path>) -> Result<Self, GridError> {
        let bytes = std::fs::read(path)?;
        Self::from_bytes(&bytes)
    }
}

fn split_cgrd(bytes: &[u8]) -> Result<(u32, u32, u8, &[u8]), GridError> {
    if bytes.len() < 4 || bytes[..4] != MAGIC {
        return Err(GridError::BadMagic);
    }
    if bytes.len() < 17 {
        return Err(GridError::TruncatedHeader(bytes.len()));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(GridError::BadVersion(version));
    }
    let rows = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    let cols = u32::from_le_bytes(bytes[12..16].try_into().unwrap());
    let dtype = bytes[16];
    if dtype != DTYPE_CLASS && dtype != DTYPE_REAL {
        return Err(GridError::BadDtype(dtype));
    }
    Ok((rows, cols, dtype, &bytes[17..]))
}

/// Convert a real grid to the f32 wire representation.
pub fn to_wire<T: Scalar>(grid: &Grid<T>) -> Grid<f32> {
    grid.map(|v| v.to_f32().unwrap_or(f32::NAN))
}

/// Convert an f32 wire grid into the working scalar type.
pub fn from_wire<T: Scalar>(grid: &Grid<f32>) -> Grid<T> {
    grid.map(|v| T::from_f32(v).expect("f32 converts to scalar"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn indexing_is_row_major() {
        let mut g = Grid::filled(2, 3, 0u16);
        g.set(1, 2, 9);
        assert_eq!(g.values(), &[0, 0, 0, 0, 0, 9]);
        assert_eq!(g.get(1, 2), 9);
    }

    #[test]
    fn transpose_swaps_axes() {
        let g = Grid::from_values(2, 3, vec![1u16, 2, 3, 4, 5, 6]).unwrap();
        let t = g.transpose();
        assert_eq!(t.shape(), (3, 2));
        for i in 0..2 {
            for j in 0..3 {
                assert_eq!(g.get(i, j), t.get(j, i));
            }
        }
    }

    #[test]
    fn empty_file_is_bad_magic() {
        assert!(matches!(
            ClassGrid::from_bytes(&[]),
            Err(GridError::BadMagic)
        ));
    }

    #[test]
    fn wrong_magic_is_bad_magic() {
        assert!(matches!(
            ClassGrid::from_bytes(b"XGRD\x01\x00\x00\x00"),
            Err(GridError::BadMagic)
        ));
    }

    #[test]
    fn short_header_is_truncated() {
        let bytes = b"CGRD\x01\x00\x00";
        assert!(matches!(
            ClassGrid::from_bytes(bytes),
            Err(GridError::TruncatedHeader(7))
        ));
    }

    #[test]
    fn payload_length_mismatch() {
        // Header says 4x4 reals but the payload carries 15 values.
        let grid = Grid::from_values(4, 4, vec![0.0f32; 16]).unwrap();
        let mut bytes = grid.to_bytes();
        bytes.truncate(bytes.len() - 4);
        match Grid::<f32>::from_bytes(&bytes) {
            Err(GridError::LengthMismatch { expected, found }) => {
                assert_eq!(expected, 64);
                assert_eq!(found, 60);
            }
            other => panic!("expected length mismatch, got {other:?}"),
        }
    }

    #[test]
    fn unknown_dtype_rejected() {
        let grid = Grid::from_values(1, 1, vec![0.0f32]).unwrap();
        let mut bytes = grid.to_bytes();
        bytes[16] = 7;
        assert!(matches!(
            Grid::<f32>::from_bytes(&bytes),
            Err(GridError::BadDtype(7))
        ));
    }

    #[test]
    fn dtype_mismatch_reported() {
        let grid = Grid::from_values(1, 2, vec![1u16, 2]).unwrap();
        let bytes = grid.to_bytes();
        assert!(matches!(
            Grid::<f32>::from_bytes(&bytes),
            Err(GridError::DtypeMismatch {
                expected: DTYPE_REAL,
                found: DTYPE_CLASS
            })
        ));
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.cgrd");
        let grid =
            Grid::from_values(2, 2, vec![0.5f32, -0.0, f32::from_bits(0x7fc0_1234), 3.25]).unwrap();
        grid.write_file(&path).unwrap();
        let back = Grid::<f32>::read_file(&path).unwrap();
        let a: Vec<u32> = grid.values().iter().map(|v| v.to_bits()).collect();
        let b: Vec<u32> = back.values().iter().map(|v| v.to_bits()).collect();
        assert_eq!(a, b);
    }

    proptest! {
        #[test]
        fn class_grid_round_trips_bit_exact(
            rows in 1usize..8,
            cols in 1usize..8,
            seed in any::<u64>(),
        ) {
            let n = rows * cols;
            let values: Vec<u16> = (0..n).map(|k| (seed.wrapping_mul(k as u64 + 1) >> 17) as u16).collect();
            let grid = Grid::from_values(rows, cols, values).unwrap();
            let back = ClassGrid::from_bytes(&grid.to_bytes()).unwrap();
            prop_assert_eq!(grid, back);
        }

        #[test]
        fn real_grid_round_trips_bit_exact(
            rows in 1usize..8,
            cols in 1usize..8,
            bits in proptest::collection::vec(any::<u32>(), 64),
        ) {
            let n = rows * cols;
            let values: Vec<f32> = bits[..n].iter().map(|&b| f32::from_bits(b)).collect();
            let grid = Grid::from_values(rows, cols, values).unwrap();
            let back = Grid::<f32>::from_bytes(&grid.to_bytes()).unwrap();
            let a: Vec<u32> = grid.values().iter().map(|v| v.to_bits()).collect();
            let b: Vec<u32> = back.values().iter().map(|v| v.to_bits()).collect();
            prop_assert_eq!(a, b);
        }
    }
}
