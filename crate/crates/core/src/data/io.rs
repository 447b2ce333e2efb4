use std::fmt::Write as _;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use super::minmax_normalize;
use crate::{Error, Matrix, Result};

pub const BINARY_MAGIC: &[u8; 8] = b"MESCMAT1";
const HEADER_LEN: usize = 16;

/// On-disk matrix encodings.
///
/// Binary: the magic `MESCMAT1`, rows and columns as `u32` little-endian,
/// then row-major `f64` little-endian entries. CSV: a `# rows cols` comment
/// line followed by one comma-separated row per line.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatrixFormat {
    Binary,
    Csv,
}

impl MatrixFormat {
    /// CSV for a `.csv` extension, binary otherwise.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => MatrixFormat::Csv,
            _ => MatrixFormat::Binary,
        }
    }
}

pub fn save_matrix(path: impl AsRef<Path>, m: &Matrix) -> Result<()> {
    let path = path.as_ref();
    let bytes = match MatrixFormat::from_path(path) {
        MatrixFormat::Binary => write_binary(m),
        MatrixFormat::Csv => write_csv(m).into_bytes(),
    };
    write_file(path, &bytes)
}

pub fn load_matrix(path: impl AsRef<Path>) -> Result<Matrix> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    match MatrixFormat::from_path(path) {
        MatrixFormat::Binary => read_binary(&bytes, path),
        MatrixFormat::Csv => {
            let text = String::from_utf8(bytes).map_err(|_| Error::MalformedHeader {
                path: path.into(),
                reason: "file is not UTF-8 text".into(),
            })?;
            read_csv(&text, path)
        }
    }
}

pub fn write_binary(m: &Matrix) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * m.as_slice().len());
    out.extend_from_slice(BINARY_MAGIC);
    out.extend_from_slice(&(m.rows() as u32).to_le_bytes());
    out.extend_from_slice(&(m.cols() as u32).to_le_bytes());
    for v in m.as_slice() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Decodes the binary format. `path` only labels errors.
pub fn read_binary(bytes: &[u8], path: &Path) -> Result<Matrix> {
    let malformed = |reason: &str| Error::MalformedHeader {
        path: path.into(),
        reason: reason.into(),
    };
    if bytes.len() < HEADER_LEN {
        return Err(malformed("file is shorter than the 16-byte header"));
    }
    if &bytes[..8] != BINARY_MAGIC {
        return Err(malformed("missing MESCMAT1 magic"));
    }
    let rows = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as u64;
    let cols = u32::from_le_bytes(bytes[12..16].try_into().expect("4 bytes")) as u64;
    if rows == 0 || cols == 0 {
        return Err(malformed("zero dimension"));
    }
    let expected = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(8))
        .filter(|&n| usize::try_from(n).is_ok())
        .ok_or(Error::DimensionOverflow {
            path: path.into(),
            rows,
            cols,
        })?;
    let payload = &bytes[HEADER_LEN..];
    if payload.len() as u64 != expected {
        return Err(Error::PayloadLength {
            path: path.into(),
            expected,
            actual: payload.len() as u64,
        });
    }
    let data = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    Matrix::new(rows as usize, cols as usize, data)
}

/// Encodes as CSV. Values use the shortest representation that parses back
/// to the same `f64`.
pub fn write_csv(m: &Matrix) -> String {
    let mut out = format!("# {} {}\n", m.rows(), m.cols());
    for i in 0..m.rows() {
        for (j, v) in m.row(i).iter().enumerate() {
            if j > 0 {
                out.push(',');
            }
            write!(out, "{v:e}").expect("writing to a String");
        }
        out.push('\n');
    }
    out
}

pub fn read_csv(text: &str, path: &Path) -> Result<Matrix> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty());
    let malformed = |reason: String| Error::MalformedHeader {
        path: path.into(),
        reason,
    };
    let (_, header) = lines.next().ok_or_else(|| malformed("empty file".into()))?;
    let dims: Vec<&str> = header
        .strip_prefix('#')
        .ok_or_else(|| malformed(format!("expected '# rows cols', found {header:?}")))?
        .split_whitespace()
        .collect();
    let parse_dim = |s: &str| -> Result<u64> {
        s.parse::<u64>()
            .ok()
            .filter(|&v| v > 0)
            .ok_or_else(|| malformed(format!("invalid dimension {s:?}")))
    };
    let (rows, cols) = match dims.as_slice() {
        [r, c] => (parse_dim(r)?, parse_dim(c)?),
        _ => {
            return Err(malformed(format!(
                "expected '# rows cols', found {header:?}"
            )))
        }
    };
    let capacity = rows
        .checked_mul(cols)
        .and_then(|n| usize::try_from(n).ok())
        .ok_or(Error::DimensionOverflow {
            path: path.into(),
            rows,
            cols,
        })?;
    let parse_error = |line: usize, reason: String| Error::Parse {
        path: path.into(),
        line,
        reason,
    };

    let mut data = Vec::with_capacity(capacity.min(1 << 24));
    let mut seen_rows = 0u64;
    let mut last_line = 1;
    for (line, text) in lines {
        last_line = line;
        if text.starts_with('#') {
            continue;
        }
        seen_rows += 1;
        if seen_rows > rows {
            return Err(parse_error(
                line,
                format!("more than the declared {rows} rows"),
            ));
        }
        let before = data.len();
        for field in text.split(',') {
            let field = field.trim();
            let v: f64 = field
                .parse()
                .map_err(|_| parse_error(line, format!("invalid number {field:?}")))?;
            data.push(v);
        }
        let found = data.len() - before;
        if found as u64 != cols {
            return Err(parse_error(
                line,
                format!("expected {cols} values, found {found}"),
            ));
        }
    }
    if seen_rows != rows {
        return Err(parse_error(
            last_line,
            format!("expected {rows} rows, found {seen_rows}"),
        ));
    }
    Matrix::new(rows as usize, cols as usize, data)
}

/// Writes one base-10 label per line.
pub fn save_labels(path: impl AsRef<Path>, labels: &[usize]) -> Result<()> {
    let mut text = String::with_capacity(labels.len() * 3);
    for l in labels {
        writeln!(text, "{l}").expect("writing to a String");
    }
    write_file(path.as_ref(), text.as_bytes())
}

/// Reads one label per line, ignoring blank lines.
pub fn load_labels(path: impl AsRef<Path>) -> Result<Vec<usize>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            l.trim().parse::<usize>().map_err(|_| Error::Parse {
                path: path.into(),
                line: i + 1,
                reason: format!("invalid label {:?}", l.trim()),
            })
        })
        .collect()
}

/// Writes `m` as a plain-text (P2) graymap: min-max normalised, then
/// quantised so the minimum is 0 and the maximum is 255.
pub fn export_heatmap(m: &Matrix, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let norm = minmax_normalize(m);
    let mut text = format!("P2\n{} {}\n255\n", m.cols(), m.rows());
    for i in 0..norm.rows() {
        let row: Vec<String> = norm
            .row(i)
            .iter()
            .map(|v| ((v * 255.0).round() as u8).to_string())
            .collect();
        text.push_str(&row.join(" "));
        text.push('\n');
    }
    write_file(path, text.as_bytes())
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    w.write_all(bytes)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}
