//! Bit-exact matrix file I/O.
//!
//! Two interchange formats:
//!
//! * the SPQT binary container — 8-byte header (`"SPQT"`, version `0x01`,
//!   dtype byte, ndim `0x02`, one pad byte), two little-endian `u64` dims,
//!   then the row-major little-endian payload. `f64` payloads round-trip
//!   bit-exactly; `f32` payloads are widened to `f64` on load.
//! * plain numeric CSV with 17-significant-digit scientific notation, the
//!   shortest width that makes `f64 -> text -> f64` lossless.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensorio::DenseMatrix;

const MAGIC: [u8; 4] = *b"SPQT";
const VERSION: u8 = 0x01;
const DTYPE_F64: u8 = 0x00;
const DTYPE_F32: u8 = 0x01;
const NDIM: u8 = 0x02;
const HEADER_LEN: usize = 8;
const DIMS_LEN: usize = 16;

/// Writes `m` to `path` in the SPQT container with an `f64` payload.
pub fn save_tensor(m: &DenseMatrix, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut bytes = Vec::with_capacity(HEADER_LEN + DIMS_LEN + 8 * m.entries().len());
    bytes.extend_from_slice(&MAGIC);
    bytes.extend_from_slice(&[VERSION, DTYPE_F64, NDIM, 0x00]);
    bytes.extend_from_slice(&(m.rows() as u64).to_le_bytes());
    bytes.extend_from_slice(&(m.cols() as u64).to_le_bytes());
    for v in m.entries() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Reads an SPQT file back into a matrix.
pub fn load_tensor(path: impl AsRef<Path>) -> Result<DenseMatrix> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() < HEADER_LEN + DIMS_LEN {
        return Err(Error::Truncation(format!(
            "{}: {} bytes is shorter than the {}-byte header",
            path.display(),
            bytes.len(),
            HEADER_LEN + DIMS_LEN
        )));
    }
    if bytes[..4] != MAGIC {
        return Err(Error::Format(format!(
            "{}: bad magic {:02x?}, expected \"SPQT\"",
            path.display(),
            &bytes[..4]
        )));
    }
    if bytes[4] != VERSION {
        return Err(Error::Format(format!(
            "{}: unsupported version {}",
            path.display(),
            bytes[4]
        )));
    }
    let dtype = bytes[5];
    let elem_size = match dtype {
        DTYPE_F64 => 8,
        DTYPE_F32 => 4,
        other => {
            return Err(Error::Format(format!(
                "{}: unknown dtype byte 0x{other:02x}",
                path.display()
            )))
        }
    };
    if bytes[6] != NDIM {
        return Err(Error::Format(format!(
            "{}: ndim byte {} unsupported, only rank-2 tensors exist here",
            path.display(),
            bytes[6]
        )));
    }
    let rows = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let cols = u64::from_le_bytes(bytes[16..24].try_into().unwrap()) as usize;
    let expected = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(elem_size))
        .ok_or_else(|| Error::Format(format!("{}: dimension overflow", path.display())))?;
    let payload = &bytes[HEADER_LEN + DIMS_LEN..];
    if payload.len() != expected {
        return Err(Error::Truncation(format!(
            "{}: {rows}x{cols} needs {expected} payload bytes, found {}",
            path.display(),
            payload.len()
        )));
    }
    let entries: Vec<f64> = match dtype {
        DTYPE_F64 => payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect(),
        _ => payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect(),
    };
    if let Some(pos) = entries.iter().position(|v| !v.is_finite()) {
        return Err(Error::Data(format!(
            "{}: non-finite payload value at flat index {pos}",
            path.display()
        )));
    }
    DenseMatrix::from_vec(rows, cols, entries)
}

/// Formats one value with 17 significant digits (lossless for `f64`).
pub fn format_value(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writes `m` as comma-separated rows, no header.
pub fn save_csv(m: &DenseMatrix, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    for r in 0..m.rows() {
        let row: Vec<String> = m.row(r).iter().map(|v| format_value(*v)).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Reads a rectangular numeric CSV. A single header row is skipped when its
/// first row fails to parse as numbers.
pub fn load_csv(path: impl AsRef<Path>) -> Result<DenseMatrix> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_csv(&text)
}

/// Parses rectangular CSV text directly (same rules as [`load_csv`]).
pub fn parse_csv(text: &str) -> Result<DenseMatrix> {
    let lines: Vec<&str> = text
        .lines()
        .map(str::trim_end)
        .filter(|l| !l.is_empty())
        .collect();
    if lines.is_empty() {
        return Err(Error::Format("CSV input has no data rows".into()));
    }

    let header_present = lines[0]
        .split(',')
        .any(|cell| cell.trim().parse::<f64>().is_err());
    let data_lines = if header_present { &lines[1..] } else { &lines[..] };
    if data_lines.is_empty() {
        return Err(Error::Format("CSV input has a header but no data".into()));
    }

    let cols = data_lines[0].split(',').count();
    let mut entries = Vec::with_capacity(data_lines.len() * cols);
    for (r, line) in data_lines.iter().enumerate() {
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != cols {
            return Err(Error::Format(format!(
                "ragged CSV: row {} has {} cells, expected {cols}",
                r + 1,
                cells.len()
            )));
        }
        for (c, cell) in cells.iter().enumerate() {
            let v: f64 = cell.trim().parse().map_err(|_| {
                Error::Data(format!(
                    "unparsable cell {:?} at row {}, column {}",
                    cell,
                    r + 1,
                    c + 1
                ))
            })?;
            entries.push(v);
        }
    }
    DenseMatrix::from_vec(data_lines.len(), cols, entries)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tmpfile(name: &str) -> std::path::PathBuf {
        let dir = tempfile::tempdir().unwrap();
        // Leak the tempdir so the path stays alive for the test body.
        let path = dir.path().join(name);
        std::mem::forget(dir);
        path
    }

    #[test]
    fn file_layout_sizes() {
        let p = tmpfile("one.spqt");
        let m = DenseMatrix::from_vec(1, 1, vec![0.0]).unwrap();
        save_tensor(&m, &p).unwrap();
        // header (8) + dims (16) + payload (8)
        assert_eq!(fs::metadata(&p).unwrap().len(), 32);

        let p2 = tmpfile("z.spqt");
        let z = DenseMatrix::zeros(2, 3).unwrap();
        save_tensor(&z, &p2).unwrap();
        let bytes = fs::read(&p2).unwrap();
        assert_eq!(bytes.len(), 24 + 48);
        assert!(bytes[24..].iter().all(|&b| b == 0));
    }

    #[test]
    fn roundtrip_is_bit_exact() {
        let p = tmpfile("rt.spqt");
        let m = DenseMatrix::from_vec(
            2,
            3,
            vec![1.5, -2.25, 1.0 / 3.0, f64::MIN_POSITIVE, 1e300, -0.0],
        )
        .unwrap();
        save_tensor(&m, &p).unwrap();
        let back = load_tensor(&p).unwrap();
        assert_eq!(back.rows(), 2);
        assert_eq!(back.cols(), 3);
        for (a, b) in m.entries().iter().zip(back.entries()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn bad_magic_is_format_error() {
        let p = tmpfile("bad.spqt");
        let mut bytes = vec![b'X', b'X', b'X', b'X', 1, 0, 2, 0];
        bytes.extend_from_slice(&1u64.to_le_bytes());
        bytes.extend_from_slice(&1u64.to_le_bytes());
        bytes.extend_from_slice(&0f64.to_le_bytes());
        fs::write(&p, bytes).unwrap();
        assert!(matches!(load_tensor(&p), Err(Error::Format(_))));
    }

    #[test]
    fn short_payload_is_truncation_error() {
        let p = tmpfile("short.spqt");
        let mut bytes = Vec::new();
        bytes.extend_from_slice(b"SPQT");
        bytes.extend_from_slice(&[1, 0, 2, 0]);
        bytes.extend_from_slice(&10u64.to_le_bytes());
        bytes.extend_from_slice(&10u64.to_le_bytes());
        bytes.extend_from_slice(&[0u8; 8]);
        fs::write(&p, bytes).unwrap();
        assert!(matches!(load_tensor(&p), Err(Error::Truncation(_))));
    }

    #[test]
    fn f32_payload_widens() {
        let p = tmpfile("f32.spqt");
        let mut bytes = Vec::new();
        bytes.extend_from_slice(b"SPQT");
        bytes.extend_from_slice(&[1, 1, 2, 0]);
        bytes.extend_from_slice(&1u64.to_le_bytes());
        bytes.extend_from_slice(&2u64.to_le_bytes());
        bytes.extend_from_slice(&1.5f32.to_le_bytes());
        bytes.extend_from_slice(&(-0.25f32).to_le_bytes());
        fs::write(&p, bytes).unwrap();
        let m = load_tensor(&p).unwrap();
        assert_eq!(m.entries(), &[1.5, -0.25]);
    }

    #[test]
    fn non_finite_payload_is_data_error() {
        let p = tmpfile("nan.spqt");
        let mut bytes = Vec::new();
        bytes.extend_from_slice(b"SPQT");
        bytes.extend_from_slice(&[1, 0, 2, 0]);
        bytes.extend_from_slice(&1u64.to_le_bytes());
        bytes.extend_from_slice(&1u64.to_le_bytes());
        bytes.extend_from_slice(&f64::NAN.to_le_bytes());
        fs::write(&p, bytes).unwrap();
        assert!(matches!(load_tensor(&p), Err(Error::Data(_))));
    }

    #[test]
    fn csv_parse_and_header_rule() {
        let m = parse_csv("1,2\n3,4\n").unwrap();
        assert_eq!(m.entries(), &[1.0, 2.0, 3.0, 4.0]);

        let h = parse_csv("a,b\n1,2\n").unwrap();
        assert_eq!((h.rows(), h.cols()), (1, 2));
        assert_eq!(h.entries(), &[1.0, 2.0]);

        assert!(matches!(parse_csv("1,2\n3\n"), Err(Error::Format(_))));
        assert!(matches!(parse_csv("1,2\n3,x\n"), Err(Error::Data(_))));
    }

    #[test]
    fn csv_roundtrip_lossless() {
        let p = tmpfile("m.csv");
        let m = DenseMatrix::from_vec(2, 2, vec![1.0 / 3.0, -1e-17, 2.5, 1e17]).unwrap();
        save_csv(&m, &p).unwrap();
        let back = load_csv(&p).unwrap();
        for (a, b) in m.entries().iter().zip(back.entries()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }
}
