// SPDX-License-Identifier: Apache-2.0

//! Binary container for DMI and POV matrices.
//!
//! A file holds two CSR blocks, DMI first and POV second. Each block is,
//! little-endian throughout:
//!
//! ```text
//! magic    4 bytes   "POVG"
//! version  u32       1
//! n        u64       matrix dimension
//! nnz      u64       stored entries
//! row_ptr  (n+1)·u64
//! col_idx  nnz·u64
//! values   nnz·f64
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::pov::PovResult;
use crate::sparse::SparseMatrix;

pub const MAGIC: &[u8; 4] = b"POVG";
pub const VERSION: u32 = 1;

pub fn write_block<W: Write>(out: &mut W, m: &SparseMatrix<f64>) -> std::io::Result<()> {
    out.write_all(MAGIC)?;
    out.write_all(&VERSION.to_le_bytes())?;
    out.write_all(&(m.dim() as u64).to_le_bytes())?;
    out.write_all(&(m.nnz() as u64).to_le_bytes())?;
    for &p in m.row_ptr() {
        out.write_all(&(p as u64).to_le_bytes())?;
    }
    for &c in m.col_indices() {
        out.write_all(&(c as u64).to_le_bytes())?;
    }
    for &v in m.values() {
        out.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_array<const N: usize, R: Read>(r: &mut R) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf)
        .map_err(|e| Error::Container(format!("truncated block: {e}")))?;
    Ok(buf)
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    Ok(u64::from_le_bytes(read_array(r)?))
}

fn read_len<R: Read>(r: &mut R, what: &str) -> Result<usize> {
    let v = read_u64(r)?;
    usize::try_from(v).map_err(|_| Error::Container(format!("{what} {v} does not fit in memory")))
}

pub fn read_block<R: Read>(r: &mut R) -> Result<SparseMatrix<f64>> {
    let magic: [u8; 4] = read_array(r)?;
    if &magic != MAGIC {
        return Err(Error::Container(format!("bad magic {magic:?}")));
    }
    let version = u32::from_le_bytes(read_array(r)?);
    if version != VERSION {
        return Err(Error::Container(format!("unsupported version {version}")));
    }
    let n = read_len(r, "dimension")?;
    let nnz = read_len(r, "nnz")?;
    let row_ptr = (0..=n)
        .map(|_| read_len(r, "row pointer"))
        .collect::<Result<Vec<_>>>()?;
    let col_idx = (0..nnz)
        .map(|_| read_len(r, "column index"))
        .collect::<Result<Vec<_>>>()?;
    let values = (0..nnz)
        .map(|_| Ok(f64::from_le_bytes(read_array(r)?)))
        .collect::<Result<Vec<_>>>()?;
    SparseMatrix::from_csr(n, row_ptr, col_idx, values)
}

/// Writes the DMI and POV blocks of `result` to `path`.
pub fn write_pov_container(path: impl AsRef<Path>, result: &PovResult<f64>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    write_block(&mut out, &result.dmi)
        .and_then(|_| write_block(&mut out, &result.pov))
        .and_then(|_| out.flush())
        .map_err(|e| Error::io(path, e))
}

/// Reads back `(dmi, pov)`.
pub fn read_pov_container(path: impl AsRef<Path>) -> Result<(SparseMatrix<f64>, SparseMatrix<f64>)> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);
    let dmi = read_block(&mut r)?;
    let pov = read_block(&mut r)?;
    let mut rest = [0u8; 1];
    if r.read(&mut rest).map_err(|e| Error::io(path, e))? != 0 {
        return Err(Error::Container("trailing bytes after POV block".into()));
    }
    Ok((dmi, pov))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> SparseMatrix<f64> {
        SparseMatrix::from_dense(&[vec![0.0, 1.5, 0.0], vec![2.0, 0.0, -0.25], vec![0.0, 0.0, 0.0]]).unwrap()
    }

    #[test]
    fn block_round_trip() {
        let m = sample();
        let mut buf = Vec::new();
        write_block(&mut buf, &m).unwrap();
        assert_eq!(buf.len(), 4 + 4 + 8 + 8 + 4 * 8 + 3 * 8 + 3 * 8);
        assert_eq!(&buf[..4], b"POVG");
        assert_eq!(u32::from_le_bytes(buf[4..8].try_into().unwrap()), 1);
        assert_eq!(u64::from_le_bytes(buf[8..16].try_into().unwrap()), 3);
        assert_eq!(u64::from_le_bytes(buf[16..24].try_into().unwrap()), 3);
        assert_eq!(read_block(&mut buf.as_slice()).unwrap(), m);
    }

    #[test]
    fn corrupt_blocks_are_rejected() {
        let mut buf = Vec::new();
        write_block(&mut buf, &sample()).unwrap();
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(read_block(&mut bad.as_slice()), Err(Error::Container(_))));
        let mut bad = buf.clone();
        bad[4] = 2;
        assert!(read_block(&mut bad.as_slice()).is_err());
        assert!(read_block(&mut &buf[..buf.len() - 3]).is_err());
        // Column index out of range.
        let mut bad = buf.clone();
        let col0 = 24 + 4 * 8;
        bad[col0..col0 + 8].copy_from_slice(&9u64.to_le_bytes());
        assert!(read_block(&mut bad.as_slice()).is_err());
    }
}
