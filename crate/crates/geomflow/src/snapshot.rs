//! Field snapshots: one-line JSON header followed by a little-endian float64
//! payload, row-major over grid points with components innermost (packed
//! order for symmetric tensors). Round trips are bit-exact.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{GeomError, Result};
use crate::field::{TensorField, Variance};
use crate::grid::{Grid, Scheme};

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    dim: usize,
    sizes: Vec<usize>,
    periods: Vec<f64>,
    rank: (usize, usize),
    symmetric: bool,
    time: f64,
}

pub fn write_snapshot(field: &TensorField, time: f64, path: &Path) -> Result<()> {
    let grid = field.grid();
    let header = Header {
        dim: grid.dim(),
        sizes: grid.sizes().to_vec(),
        periods: grid.periods().to_vec(),
        rank: field.rank(),
        symmetric: field.is_symmetric(),
        time,
    };
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer(&mut w, &header)?;
    w.write_all(b"\n")?;
    let np = field.npoints();
    let ncomp = field.ncomp();
    for p in 0..np {
        for c in 0..ncomp {
            w.write_all(&field.data()[c * np + p].to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Read a snapshot back. The differentiation scheme is not part of the file
/// format and must be supplied by the caller.
pub fn read_snapshot(path: &Path, scheme: Scheme) -> Result<(TensorField, f64)> {
    let mut r = BufReader::new(File::open(path)?);
    let mut line = Vec::new();
    let mut byte = [0u8; 1];
    loop {
        let n = r.read(&mut byte)?;
        if n == 0 {
            return Err(GeomError::SnapshotFormat("missing header line".into()));
        }
        if byte[0] == b'\n' {
            break;
        }
        line.push(byte[0]);
        if line.len() > 1 << 16 {
            return Err(GeomError::SnapshotFormat("unterminated header".into()));
        }
    }
    let header: Header = serde_json::from_slice(&line)?;
    let grid = Arc::new(Grid::new(&header.sizes, &header.periods, scheme)?);
    if header.dim != grid.dim() {
        return Err(GeomError::SnapshotFormat(format!(
            "declared dim {} does not match {} axis sizes",
            header.dim,
            header.sizes.len()
        )));
    }
    let (up, down) = header.rank;
    let mut variances = vec![Variance::Up; up];
    variances.extend(std::iter::repeat(Variance::Down).take(down));
    let mut field = TensorField::zeros(grid.clone(), &variances, header.symmetric)?;
    let np = field.npoints();
    let ncomp = field.ncomp();
    let mut payload = vec![0u8; np * ncomp * 8];
    r.read_exact(&mut payload).map_err(|e| {
        GeomError::SnapshotFormat(format!("payload shorter than {} values: {e}", np * ncomp))
    })?;
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing)? != 0 {
        return Err(GeomError::SnapshotFormat("trailing bytes after payload".into()));
    }
    let mut k = 0;
    for p in 0..np {
        for c in 0..ncomp {
            let bytes: [u8; 8] = payload[k..k + 8].try_into().expect("chunked by 8");
            field.data_mut()[c * np + p] = f64::from_le_bytes(bytes);
            k += 8;
        }
    }
    Ok((field, header.time))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::DOWN;

    #[test]
    fn round_trip_is_bit_exact() {
        let grid = Arc::new(Grid::new(&[8, 10], &[1.0, 2.5], Scheme::Central4).unwrap());
        let mut f = TensorField::zeros(grid, &[DOWN, DOWN], true).unwrap();
        // Deliberately awkward values: subnormals, negative zero, big exponents.
        let mut state = 0x9e3779b97f4a7c15u64;
        for v in f.data_mut().iter_mut() {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            *v = f64::from_bits((state >> 12) | 0x3ff0000000000000) - 1.5;
        }
        f.data_mut()[0] = -0.0;
        f.data_mut()[1] = 1e-300;
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("field.bin");
        write_snapshot(&f, 0.125, &path).unwrap();
        let (g, t) = read_snapshot(&path, Scheme::Central4).unwrap();
        assert_eq!(t.to_bits(), 0.125f64.to_bits());
        assert_eq!(f.data().len(), g.data().len());
        for (a, b) in f.data().iter().zip(g.data().iter()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        assert_eq!(g.rank(), (0, 2));
        assert!(g.is_symmetric());
        assert_eq!(g.grid().periods(), &[1.0, 2.5]);
    }

    #[test]
    fn truncated_payload_is_rejected() {
        let grid = Arc::new(Grid::new(&[8, 8], &[1.0, 1.0], Scheme::Spectral).unwrap());
        let f = TensorField::scalar(grid);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trunc.bin");
        write_snapshot(&f, 0.0, &path).unwrap();
        let full = std::fs::read(&path).unwrap();
        std::fs::write(&path, &full[..full.len() - 4]).unwrap();
        assert!(read_snapshot(&path, Scheme::Spectral).is_err());
    }
}
