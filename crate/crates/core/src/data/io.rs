//! DACF feature files and plain-text label files.
//!
//! DACF layout (little-endian):
//!
//! | offset | size | field                               |
//! |--------|------|-------------------------------------|
//! | 0      | 4    | magic `b"DACF"`                     |
//! | 4      | 4    | `u32` version, currently 1          |
//! | 8      | 8    | `u64` n_samples                     |
//! | 16     | 8    | `u64` dim                           |
//! | 24     | 4·n·d| `f32` values, row-major             |

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use super::{DataError, FeatureMatrix, LabelVector};

pub const FEATURE_MAGIC: [u8; 4] = *b"DACF";
pub const FEATURE_VERSION: u32 = 1;
pub const FEATURE_HEADER_LEN: usize = 24;

pub fn load_features(path: impl AsRef<Path>) -> Result<FeatureMatrix, DataError> {
    decode_features(&fs::read(path)?)
}

/// Parses an in-memory DACF image.
pub fn decode_features(bytes: &[u8]) -> Result<FeatureMatrix, DataError> {
    if bytes.len() < 4 {
        return Err(DataError::Truncated {
            expected: FEATURE_HEADER_LEN as u64,
            found: bytes.len() as u64,
        });
    }
    let magic: [u8; 4] = bytes[0..4].try_into().unwrap();
    if magic != FEATURE_MAGIC {
        return Err(DataError::BadMagic {
            expected: FEATURE_MAGIC,
            found: magic,
        });
    }
    if bytes.len() < FEATURE_HEADER_LEN {
        return Err(DataError::Truncated {
            expected: FEATURE_HEADER_LEN as u64,
            found: bytes.len() as u64,
        });
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != FEATURE_VERSION {
        return Err(DataError::UnsupportedVersion(version));
    }
    let rows = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
    let cols = u64::from_le_bytes(bytes[16..24].try_into().unwrap());
    if rows == 0 || cols == 0 {
        return Err(DataError::EmptyShape {
            rows: rows as usize,
            cols: cols as usize,
        });
    }
    let payload = &bytes[FEATURE_HEADER_LEN..];
    let expected = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| DataError::InvalidArgument(format!("shape {rows}x{cols} overflows")))?;
    let found = payload.len() as u64;
    if found < expected {
        return Err(DataError::Truncated {
            expected: expected + FEATURE_HEADER_LEN as u64,
            found: found + FEATURE_HEADER_LEN as u64,
        });
    }
    if found > expected {
        return Err(DataError::PayloadMismatch { expected, found });
    }
    let values: Vec<f64> = payload
        .chunks_exact(4)
        .map(|c| f64::from(f32::from_le_bytes(c.try_into().unwrap())))
        .collect();
    FeatureMatrix::new(rows as usize, cols as usize, values)
}

/// Serializes to a DACF image, quantizing every value to `f32`.
pub fn encode_features(m: &FeatureMatrix) -> Result<Vec<u8>, DataError> {
    let mut out = Vec::with_capacity(FEATURE_HEADER_LEN + 4 * m.as_slice().len());
    out.extend_from_slice(&FEATURE_MAGIC);
    out.extend_from_slice(&FEATURE_VERSION.to_le_bytes());
    out.extend_from_slice(&(m.rows() as u64).to_le_bytes());
    out.extend_from_slice(&(m.cols() as u64).to_le_bytes());
    for (index, &value) in m.as_slice().iter().enumerate() {
        let q = value as f32;
        if !q.is_finite() {
            return Err(DataError::Unrepresentable { index, value });
        }
        out.extend_from_slice(&q.to_le_bytes());
    }
    Ok(out)
}

pub fn save_features(m: &FeatureMatrix, path: impl AsRef<Path>) -> Result<(), DataError> {
    let bytes = encode_features(m)?;
    fs::write(path, bytes)?;
    Ok(())
}

/// Reads one label string per line and maps them to dense ids in order of
/// first appearance. Returns the ids together with the id → name table.
pub fn load_labels(path: impl AsRef<Path>) -> Result<(LabelVector, Vec<String>), DataError> {
    parse_labels(&fs::read_to_string(path)?)
}

pub fn parse_labels(text: &str) -> Result<(LabelVector, Vec<String>), DataError> {
    let mut ids = HashMap::new();
    let mut names = Vec::new();
    let mut labels = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.strip_suffix('\r').unwrap_or(line);
        if line.is_empty() {
            return Err(DataError::EmptyLabelLine { line: i + 1 });
        }
        let id = *ids.entry(line).or_insert_with(|| {
            names.push(line.to_string());
            names.len() - 1
        });
        labels.push(id);
    }
    if labels.is_empty() {
        return Err(DataError::EmptyLabelFile);
    }
    Ok((LabelVector::new(labels), names))
}

/// Writes `names[label]` for every sample, one per line.
pub fn save_labels(
    labels: &[usize],
    names: &[String],
    path: impl AsRef<Path>,
) -> Result<(), DataError> {
    let mut out = Vec::new();
    for &l in labels {
        let name = names
            .get(l)
            .ok_or_else(|| DataError::InvalidArgument(format!("label {l} has no name")))?;
        writeln!(out, "{name}")?;
    }
    fs::write(path, out)?;
    Ok(())
}

/// Reads a known-class file (one class name per line) and resolves the names
/// against an id → name table. Blank lines are skipped.
pub fn load_known_classes(
    path: impl AsRef<Path>,
    names: &[String],
) -> Result<Vec<usize>, DataError> {
    let text = fs::read_to_string(path)?;
    let mut known = Vec::new();
    for line in text.lines().map(str::trim_end).filter(|l| !l.is_empty()) {
        let id = names
            .iter()
            .position(|n| n == line)
            .ok_or_else(|| DataError::UnknownClass(line.to_string()))?;
        if !known.contains(&id) {
            known.push(id);
        }
    }
    known.sort_unstable();
    Ok(known)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn header(rows: u64, cols: u64) -> Vec<u8> {
        let mut h = Vec::new();
        h.extend_from_slice(b"DACF");
        h.extend_from_slice(&1u32.to_le_bytes());
        h.extend_from_slice(&rows.to_le_bytes());
        h.extend_from_slice(&cols.to_le_bytes());
        h
    }

    #[test]
    fn loads_declared_shape() {
        let mut bytes = header(2, 3);
        for v in [1.0f32, 2.0, 3.0, 4.0, 5.0, 6.5] {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        let m = decode_features(&bytes).unwrap();
        assert_eq!((m.rows(), m.cols()), (2, 3));
        assert_eq!(m.row(1), &[4.0, 5.0, 6.5]);
        assert_eq!(encode_features(&m).unwrap(), bytes);
    }

    #[test]
    fn one_by_one_file_size() {
        let m = FeatureMatrix::new(1, 1, vec![0.5]).unwrap();
        let bytes = encode_features(&m).unwrap();
        assert_eq!(bytes.len(), FEATURE_HEADER_LEN + 4);
        assert_eq!(&bytes[24..], &0.5f32.to_le_bytes());
    }

    #[test]
    fn distinct_errors() {
        let mut short = header(2, 3);
        for v in [1.0f32; 5] {
            short.extend_from_slice(&v.to_le_bytes());
        }
        assert!(matches!(
            decode_features(&short),
            Err(DataError::Truncated { .. })
        ));

        let mut long = header(1, 1);
        long.extend_from_slice(&[0u8; 8]);
        assert!(matches!(
            decode_features(&long),
            Err(DataError::PayloadMismatch { .. })
        ));

        let mut magic = header(1, 1);
        magic[0] = b'X';
        magic.extend_from_slice(&[0u8; 4]);
        assert!(matches!(
            decode_features(&magic),
            Err(DataError::BadMagic { .. })
        ));

        let mut nan = header(1, 2);
        nan.extend_from_slice(&1.0f32.to_le_bytes());
        nan.extend_from_slice(&f32::NAN.to_le_bytes());
        assert!(matches!(
            decode_features(&nan),
            Err(DataError::NonFinite { row: 0, col: 1 })
        ));

        let mut version = header(1, 1);
        version[4] = 2;
        version.extend_from_slice(&[0u8; 4]);
        assert!(matches!(
            decode_features(&version),
            Err(DataError::UnsupportedVersion(2))
        ));

        assert!(matches!(
            decode_features(&header(2, 2)[..10]),
            Err(DataError::Truncated { .. })
        ));
    }

    #[test]
    fn out_of_range_value_is_rejected_on_save() {
        let m = FeatureMatrix::new(1, 1, vec![1e300]).unwrap();
        assert!(matches!(
            encode_features(&m),
            Err(DataError::Unrepresentable { .. })
        ));
    }

    #[test]
    fn labels_first_appearance_order() {
        let (ids, names) = parse_labels("book_flight\nbook_flight\ntransfer\n").unwrap();
        assert_eq!(&*ids, &[0, 0, 1]);
        assert_eq!(names, vec!["book_flight", "transfer"]);
    }

    #[test]
    fn label_file_errors() {
        assert!(matches!(parse_labels(""), Err(DataError::EmptyLabelFile)));
        assert!(matches!(
            parse_labels("a\n\nb\n"),
            Err(DataError::EmptyLabelLine { line: 2 })
        ));
    }

    #[test]
    fn crlf_lines_are_accepted() {
        let (ids, names) = parse_labels("x\r\ny\r\nx\r\n").unwrap();
        assert_eq!(&*ids, &[0, 1, 0]);
        assert_eq!(names, vec!["x", "y"]);
    }
}
