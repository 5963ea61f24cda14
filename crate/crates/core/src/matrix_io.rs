//! Dense f64 matrix files: `rows: u64 LE`, `cols: u64 LE`, then
//! `rows * cols` little-endian f64 values in row-major order.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{Array2, ArrayView2};

pub fn write_matrix(path: impl AsRef<Path>, m: ArrayView2<f64>) -> io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&(m.nrows() as u64).to_le_bytes())?;
    w.write_all(&(m.ncols() as u64).to_le_bytes())?;
    for v in m.iter() {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()
}

pub fn read_matrix(path: impl AsRef<Path>) -> io::Result<Array2<f64>> {
    let mut r = BufReader::new(File::open(path)?);
    let mut word = [0u8; 8];
    r.read_exact(&mut word)?;
    let rows = u64::from_le_bytes(word) as usize;
    r.read_exact(&mut word)?;
    let cols = u64::from_le_bytes(word) as usize;
    let len = rows
        .checked_mul(cols)
        .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidData, "matrix shape overflows"))?;
    let mut data = Vec::with_capacity(len);
    for _ in 0..len {
        r.read_exact(&mut word)?;
        data.push(f64::from_le_bytes(word));
    }
    if r.read(&mut word)? != 0 {
        return Err(io::Error::new(io::ErrorKind::InvalidData, "trailing bytes after matrix data"));
    }
    Array2::from_shape_vec((rows, cols), data)
        .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e.to_string()))
}
