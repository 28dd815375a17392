//! Matrix files: CSV with a header row, and a raw little-endian binary
//! format.
//!
//! Binary layout: the magic bytes `ULRM`, `rows` and `cols` as `u32` little
//! endian, then `rows · cols` row-major `f64` little-endian values.

use std::fs;
use std::io::Write;
use std::path::Path;

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"ULRM";
const HEADER_LEN: usize = 12;

fn format_err(msg: impl Into<String>) -> Error {
    Error::Format(msg.into())
}

/// Parses CSV text whose first line is a header. Every data row must have
/// as many fields as the header.
pub fn parse_csv_matrix(text: &str) -> Result<Array2<f64>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let cols = reader.headers().map_err(|e| format_err(format!("bad CSV header: {e}")))?.len();
    if cols == 0 || text.trim().is_empty() {
        return Err(format_err("CSV input has no header row"));
    }
    let mut data = Vec::new();
    let mut rows = 0;
    for (k, record) in reader.records().enumerate() {
        let record = record.map_err(|e| format_err(format!("bad CSV row {k}: {e}")))?;
        if record.len() == 1 && record[0].is_empty() && cols > 1 {
            continue;
        }
        if record.len() != cols {
            return Err(format_err(format!("ragged CSV row {k}: expected {cols} fields, found {}", record.len())));
        }
        for (j, field) in record.iter().enumerate() {
            let v: f64 = field
                .parse()
                .map_err(|_| format_err(format!("CSV row {k}, column {j}: cannot parse '{field}' as a number")))?;
            data.push(v);
        }
        rows += 1;
    }
    Array2::from_shape_vec((rows, cols), data).map_err(|e| format_err(e.to_string()))
}

/// Decodes the binary matrix format, rejecting short and over-long input.
pub fn decode_binary_matrix(bytes: &[u8]) -> Result<Array2<f64>> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(format_err("bad magic"));
    }
    if bytes.len() < HEADER_LEN {
        return Err(format_err("truncated header"));
    }
    let rows = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes")) as usize;
    let cols = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
    let payload = &bytes[HEADER_LEN..];
    let row_bytes = cols.checked_mul(8).ok_or_else(|| format_err("matrix dimensions overflow"))?;
    let expected = rows.checked_mul(row_bytes).ok_or_else(|| format_err("matrix dimensions overflow"))?;
    if payload.len() < expected {
        let complete = payload.len() / row_bytes.max(1);
        return Err(format_err(format!("truncated payload at row {complete}")));
    }
    if payload.len() > expected {
        return Err(format_err(format!("{} trailing bytes after payload", payload.len() - expected)));
    }
    let data: Vec<f64> =
        payload.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
    Array2::from_shape_vec((rows, cols), data).map_err(|e| format_err(e.to_string()))
}

pub fn encode_binary_matrix(m: &Array2<f64>) -> Result<Vec<u8>> {
    let rows = u32::try_from(m.nrows()).map_err(|_| format_err("too many rows for the binary format"))?;
    let cols = u32::try_from(m.ncols()).map_err(|_| format_err("too many columns for the binary format"))?;
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * m.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&rows.to_le_bytes());
    out.extend_from_slice(&cols.to_le_bytes());
    for v in m.iter() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

/// Loads a matrix, choosing the binary decoder when the file starts with
/// the magic bytes and CSV otherwise.
pub fn load_matrix(path: &Path) -> Result<Array2<f64>> {
    let bytes = fs::read(path)?;
    if bytes.starts_with(MAGIC) {
        return decode_binary_matrix(&bytes);
    }
    let text = std::str::from_utf8(&bytes).map_err(|_| format_err(format!("{} is not UTF-8 text", path.display())))?;
    parse_csv_matrix(text)
}

/// Loads a single-column or single-row matrix as a vector.
pub fn load_vector(path: &Path) -> Result<Array1<f64>> {
    let m = load_matrix(path)?;
    match m.dim() {
        (_, 1) | (1, _) => Ok(Array1::from_iter(m.iter().copied())),
        (r, c) => Err(format_err(format!("{} holds a {r}x{c} matrix, expected a vector", path.display()))),
    }
}

/// Writes `bytes` to a temporary sibling file and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path.file_name().ok_or_else(|| format_err(format!("{} has no file name", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp-{}", name.to_string_lossy(), std::process::id()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path).inspect_err(|_| {
        let _ = fs::remove_file(&tmp);
    })?;
    Ok(())
}

pub fn save_matrix_binary(path: &Path, m: &Array2<f64>) -> Result<()> {
    write_atomic(path, &encode_binary_matrix(m)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn csv_example() {
        let m = parse_csv_matrix("x,y\n0,0\n1,0\n").unwrap();
        assert_eq!(m, array![[0.0, 0.0], [1.0, 0.0]]);
    }

    #[test]
    fn csv_errors() {
        let e = parse_csv_matrix("x,y\n0,0\n1\n").unwrap_err().to_string();
        assert!(e.contains("ragged"), "{e}");
        assert!(parse_csv_matrix("x\nabc\n").is_err());
        assert!(parse_csv_matrix("").is_err());
    }

    #[test]
    fn binary_round_trip_is_bit_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = Array2::from_shape_fn((7, 3), |_| rng.random::<f64>() * 1e3 - 5e2);
        let back = decode_binary_matrix(&encode_binary_matrix(&m).unwrap()).unwrap();
        for (x, y) in m.iter().zip(back.iter()) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }

    #[test]
    fn truncated_payload_reports_row() {
        let m = Array2::from_elem((7, 3), 1.5);
        let bytes = encode_binary_matrix(&m).unwrap();
        let cut = &bytes[..HEADER_LEN + 5 * 24 + 7];
        assert_eq!(decode_binary_matrix(cut).unwrap_err().to_string(), "malformed matrix data: truncated payload at row 5");
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(decode_binary_matrix(&extra).is_err());
        assert!(decode_binary_matrix(b"ULRX\0\0\0\0\0\0\0\0").unwrap_err().to_string().contains("bad magic"));
    }

    #[test]
    fn huge_header_does_not_allocate() {
        let mut bytes = MAGIC.to_vec();
        bytes.extend_from_slice(&u32::MAX.to_le_bytes());
        bytes.extend_from_slice(&u32::MAX.to_le_bytes());
        assert!(decode_binary_matrix(&bytes).is_err());
    }
}
