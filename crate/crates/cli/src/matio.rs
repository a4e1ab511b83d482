//! Binary dense-matrix files.
//!
//! Layout: the 8-byte magic `SDPNNMAT`, then rows and columns as
//! little-endian `u64`, then `rows * cols` little-endian `f64` in row-major
//! order.

use std::fs;
use std::io::{self, Read, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use nalgebra::DMatrix;

pub const MAGIC: &[u8; 8] = b"SDPNNMAT";
const HEADER_LEN: usize = 24;

pub fn write_matrix(mut w: impl Write, m: &DMatrix<f64>) -> io::Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&(m.nrows() as u64).to_le_bytes())?;
    w.write_all(&(m.ncols() as u64).to_le_bytes())?;
    let mut buf = Vec::with_capacity(m.len() * 8);
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            buf.extend_from_slice(&m[(i, j)].to_le_bytes());
        }
    }
    w.write_all(&buf)?;
    w.flush()
}

pub fn encode(m: &DMatrix<f64>) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + m.len() * 8);
    write_matrix(&mut out, m).expect("writing to a Vec cannot fail");
    out
}

pub fn decode(bytes: &[u8]) -> Result<DMatrix<f64>> {
    if bytes.len() < HEADER_LEN {
        bail!("matrix file truncated: {} bytes, header needs {HEADER_LEN}", bytes.len());
    }
    if &bytes[..8] != MAGIC {
        bail!("not a matrix file: bad magic");
    }
    let word = |k: usize| u64::from_le_bytes(bytes[k..k + 8].try_into().expect("8-byte slice"));
    let (rows, cols) = (word(8) as usize, word(16) as usize);
    let expected = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(8))
        .and_then(|n| n.checked_add(HEADER_LEN))
        .context("matrix dimensions overflow")?;
    if bytes.len() != expected {
        bail!("matrix file is {} bytes, a {rows}x{cols} matrix needs {expected}", bytes.len());
    }
    let body = &bytes[HEADER_LEN..];
    Ok(DMatrix::from_fn(rows, cols, |i, j| {
        let k = 8 * (i * cols + j);
        f64::from_le_bytes(body[k..k + 8].try_into().expect("8-byte slice"))
    }))
}

pub fn read_matrix(mut r: impl Read) -> Result<DMatrix<f64>> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    decode(&bytes)
}

pub fn load(path: &Path) -> Result<DMatrix<f64>> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    decode(&bytes).with_context(|| format!("decoding {}", path.display()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let m = DMatrix::from_row_slice(2, 3, &[1.0, -0.0, f64::MIN_POSITIVE, 1e300, -3.5, 0.1]);
        let back = decode(&encode(&m)).unwrap();
        assert_eq!(back.shape(), (2, 3));
        for (a, b) in m.iter().zip(back.iter()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn layout_is_row_major() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let bytes = encode(&m);
        assert_eq!(&bytes[..8], MAGIC);
        assert_eq!(bytes.len(), 24 + 32);
        let second = f64::from_le_bytes(bytes[32..40].try_into().unwrap());
        assert_eq!(second, 2.0);
    }

    #[test]
    fn rejects_damage() {
        let bytes = encode(&DMatrix::from_element(3, 3, 1.0));
        assert!(decode(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode(&bad).is_err());
        assert!(decode(&bytes[..10]).is_err());
    }

    #[test]
    fn empty_matrix() {
        let m = DMatrix::<f64>::zeros(0, 4);
        assert_eq!(decode(&encode(&m)).unwrap().shape(), (0, 4));
    }
}
