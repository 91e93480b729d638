//! Reading and writing two-dimensional float matrices in the NPY v1.0 container.
//!
//! Only the subset needed for dissection bundles is supported: little-endian
//! `<f4`/`<f8` payloads in C order with a 2-tuple shape. Fortran order and other
//! dtypes are rejected with [`ExchangeError::UnsupportedLayout`].

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{ExchangeError, Matrix};
use crate::io_util::write_atomic;

pub(crate) const MAGIC: [u8; 6] = *b"\x93NUMPY";
const PREAMBLE_ALIGN: usize = 64;

/// On-disk element width.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Precision {
    F32,
    F64,
}

impl Precision {
    fn descr(self) -> &'static str {
        match self {
            Precision::F32 => "<f4",
            Precision::F64 => "<f8",
        }
    }

    fn width(self) -> usize {
        match self {
            Precision::F32 => 4,
            Precision::F64 => 8,
        }
    }
}

/// Parsed header dictionary.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NpyHeader {
    pub precision: Precision,
    pub rows: usize,
    pub cols: usize,
}

fn malformed(reason: impl Into<String>) -> ExchangeError {
    ExchangeError::MalformedHeader(reason.into())
}

/// Reads the magic, version and header dictionary, leaving the reader at the payload.
pub fn read_header<R: Read>(reader: &mut R) -> Result<NpyHeader, ExchangeError> {
    let mut fixed = [0u8; 10];
    reader
        .read_exact(&mut fixed)
        .map_err(|_| malformed("file shorter than the NPY preamble"))?;
    if fixed[..6] != MAGIC {
        return Err(malformed("bad magic bytes"));
    }
    if fixed[6..8] != [1, 0] {
        return Err(malformed(format!("unsupported version {}.{}", fixed[6], fixed[7])));
    }
    let header_len = u16::from_le_bytes([fixed[8], fixed[9]]) as usize;
    let mut dict = vec![0u8; header_len];
    reader
        .read_exact(&mut dict)
        .map_err(|_| malformed("truncated header dictionary"))?;
    let dict = std::str::from_utf8(&dict).map_err(|_| malformed("header is not ASCII"))?;
    parse_dict(dict)
}

fn parse_dict(text: &str) -> Result<NpyHeader, ExchangeError> {
    let body = text.trim_end_matches(['\n', ' ']).trim();
    let body = body
        .strip_prefix('{')
        .and_then(|b| b.strip_suffix('}'))
        .ok_or_else(|| malformed("header is not a dictionary"))?;

    let mut descr = None;
    let mut fortran = None;
    let mut shape = None;
    let mut rest = body.trim_start();
    while !rest.is_empty() {
        let (key, after) = take_quoted(rest)?;
        let after = after
            .trim_start()
            .strip_prefix(':')
            .ok_or_else(|| malformed("missing ':' after key"))?
            .trim_start();
        let after = match key {
            "descr" => {
                let (v, a) = take_quoted(after)?;
                descr = Some(v.to_string());
                a
            }
            "fortran_order" => {
                if let Some(a) = after.strip_prefix("False") {
                    fortran = Some(false);
                    a
                } else if let Some(a) = after.strip_prefix("True") {
                    fortran = Some(true);
                    a
                } else {
                    return Err(malformed("fortran_order must be True or False"));
                }
            }
            "shape" => {
                let close = after.find(')').ok_or_else(|| malformed("unterminated shape tuple"))?;
                let inner = after
                    .strip_prefix('(')
                    .ok_or_else(|| malformed("shape must be a tuple"))?;
                let dims = inner[..close - 1]
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(|s| {
                        s.parse::<usize>()
                            .map_err(|_| malformed(format!("bad dimension '{s}'")))
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                shape = Some(dims);
                &after[close + 1..]
            }
            other => return Err(malformed(format!("unexpected key '{other}'"))),
        };
        let after = after.trim_start();
        rest = after.strip_prefix(',').unwrap_or(after).trim_start();
    }

    let descr = descr.ok_or_else(|| malformed("missing 'descr'"))?;
    let fortran = fortran.ok_or_else(|| malformed("missing 'fortran_order'"))?;
    let shape = shape.ok_or_else(|| malformed("missing 'shape'"))?;

    let precision = match descr.as_str() {
        "<f8" => Precision::F64,
        "<f4" => Precision::F32,
        other => return Err(ExchangeError::UnsupportedLayout(format!("dtype '{other}'"))),
    };
    if fortran {
        return Err(ExchangeError::UnsupportedLayout("fortran_order=True".into()));
    }
    match shape.as_slice() {
        &[rows, cols] => Ok(NpyHeader { precision, rows, cols }),
        dims => Err(ExchangeError::UnsupportedLayout(format!(
            "expected a 2-d shape, found {} dimensions",
            dims.len()
        ))),
    }
}

fn take_quoted(s: &str) -> Result<(&str, &str), ExchangeError> {
    let quote = s.chars().next().filter(|c| *c == '\'' || *c == '"');
    let quote = quote.ok_or_else(|| malformed("expected a quoted string"))?;
    let inner = &s[1..];
    let end = inner.find(quote).ok_or_else(|| malformed("unterminated string"))?;
    Ok((&inner[..end], &inner[end + 1..]))
}

/// Decodes a full NPY stream into a matrix; 32-bit payloads are widened to 64-bit.
pub fn read_matrix_from<R: Read>(reader: &mut R) -> Result<Matrix, ExchangeError> {
    let header = read_header(reader)?;
    let count = header
        .rows
        .checked_mul(header.cols)
        .ok_or_else(|| malformed("shape overflows"))?;
    let mut payload = Vec::new();
    reader.read_to_end(&mut payload).map_err(|e| ExchangeError::Io {
        path: "<stream>".into(),
        source: e,
    })?;
    let width = header.precision.width();
    if payload.len() != count * width {
        return Err(ExchangeError::ShapeMismatch {
            what: "payload".into(),
            expected: format!("{} bytes for {}x{}", count * width, header.rows, header.cols),
            found: format!("{} bytes", payload.len()),
        });
    }
    let data: Vec<f64> = match header.precision {
        Precision::F64 => payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect(),
        Precision::F32 => payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect(),
    };
    Matrix::new(header.rows, header.cols, data)
}

/// Encodes a matrix as NPY v1.0 with a 64-byte aligned preamble.
pub fn write_matrix_to<W: Write>(writer: &mut W, matrix: &Matrix, precision: Precision) -> std::io::Result<()> {
    let mut dict = format!(
        "{{'descr': '{}', 'fortran_order': False, 'shape': ({}, {}), }}",
        precision.descr(),
        matrix.rows(),
        matrix.cols()
    );
    // magic(6) + version(2) + length(2) + dict + '\n'
    let unpadded = 10 + dict.len() + 1;
    let pad = (PREAMBLE_ALIGN - unpadded % PREAMBLE_ALIGN) % PREAMBLE_ALIGN;
    dict.extend(std::iter::repeat_n(' ', pad));
    dict.push('\n');
    let header_len = u16::try_from(dict.len())
        .map_err(|_| std::io::Error::new(std::io::ErrorKind::InvalidInput, "NPY header too long"))?;

    writer.write_all(&MAGIC)?;
    writer.write_all(&[1, 0])?;
    writer.write_all(&header_len.to_le_bytes())?;
    writer.write_all(dict.as_bytes())?;
    match precision {
        Precision::F64 => {
            for v in matrix.as_slice() {
                writer.write_all(&v.to_le_bytes())?;
            }
        }
        Precision::F32 => {
            for v in matrix.as_slice() {
                writer.write_all(&(*v as f32).to_le_bytes())?;
            }
        }
    }
    Ok(())
}

/// Reads a matrix file from disk.
pub fn read_matrix(path: impl AsRef<Path>) -> Result<Matrix, ExchangeError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| ExchangeError::io(path, e))?;
    read_matrix_from(&mut BufReader::new(file)).map_err(|e| e.with_path(path))
}

/// Reads only the header of a matrix file.
pub fn read_matrix_header(path: impl AsRef<Path>) -> Result<NpyHeader, ExchangeError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| ExchangeError::io(path, e))?;
    read_header(&mut BufReader::new(file)).map_err(|e| e.with_path(path))
}

/// Writes a matrix file atomically (temp file + rename).
pub fn write_matrix(matrix: &Matrix, path: impl AsRef<Path>, precision: Precision) -> Result<(), ExchangeError> {
    let path = path.as_ref();
    write_atomic(path, |w| {
        let mut w = BufWriter::new(w);
        write_matrix_to(&mut w, matrix, precision)?;
        w.flush()
    })
    .map_err(|e| ExchangeError::io(path, e))
}
