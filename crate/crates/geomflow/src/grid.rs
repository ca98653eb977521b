//! Uniform periodic lattices on flat tori `T^n = Π_i R / (L_i Z)`.
//!
//! A grid fixes the spatial dimension, per-axis point counts and periods, and
//! the differentiation scheme used by every operator acting on fields that
//! live on it. Points are indexed row-major (last axis fastest).

use serde::{Deserialize, Serialize};

use crate::error::{GeomError, Result};

/// Finite-difference or spectral differentiation scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scheme {
    Central2,
    Central4,
    Spectral,
}

impl Scheme {
    /// Formal order of accuracy for smooth periodic fields.
    pub fn order(&self) -> usize {
        match self {
            Scheme::Central2 => 2,
            Scheme::Central4 => 4,
            // Effectively exact below the Nyquist frequency.
            Scheme::Spectral => usize::MAX,
        }
    }
}

impl std::str::FromStr for Scheme {
    type Err = GeomError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "central-2" | "central2" => Ok(Scheme::Central2),
            "central-4" | "central4" => Ok(Scheme::Central4),
            "spectral" => Ok(Scheme::Spectral),
            other => Err(GeomError::InvalidArgument(format!(
                "unknown scheme `{other}` (expected central-2, central-4 or spectral)"
            ))),
        }
    }
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Scheme::Central2 => "central-2",
            Scheme::Central4 => "central-4",
            Scheme::Spectral => "spectral",
        };
        write!(f, "{s}")
    }
}

/// Uniform periodic lattice with a fixed differentiation scheme.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    dim: usize,
    sizes: Vec<usize>,
    periods: Vec<f64>,
    scheme: Scheme,
}

impl Grid {
    /// Minimum number of points per axis; coarser lattices cannot resolve the
    /// stencils and probe modes used elsewhere.
    pub const MIN_SIZE: usize = 8;

    pub fn new(sizes: &[usize], periods: &[f64], scheme: Scheme) -> Result<Self> {
        let dim = sizes.len();
        if !(2..=4).contains(&dim) {
            return Err(GeomError::InvalidGrid(format!(
                "dimension must be 2, 3 or 4, got {dim}"
            )));
        }
        if periods.len() != dim {
            return Err(GeomError::InvalidGrid(format!(
                "{} periods supplied for dimension {dim}",
                periods.len()
            )));
        }
        if let Some(&n) = sizes.iter().find(|&&n| n < Self::MIN_SIZE) {
            return Err(GeomError::InvalidGrid(format!(
                "axis size {n} below minimum {}",
                Self::MIN_SIZE
            )));
        }
        if let Some(&l) = periods.iter().find(|&&l| !(l > 0.0) || !l.is_finite()) {
            return Err(GeomError::InvalidGrid(format!("period {l} must be positive")));
        }
        Ok(Grid {
            dim,
            sizes: sizes.to_vec(),
            periods: periods.to_vec(),
            scheme,
        })
    }

    /// Square torus with equal size and period `2π` on every axis.
    pub fn square(dim: usize, n: usize, scheme: Scheme) -> Result<Self> {
        let tau = std::f64::consts::TAU;
        Grid::new(&vec![n; dim], &vec![tau; dim], scheme)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn periods(&self) -> &[f64] {
        &self.periods
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn with_scheme(&self, scheme: Scheme) -> Grid {
        Grid { scheme, ..self.clone() }
    }

    pub fn npoints(&self) -> usize {
        self.sizes.iter().product()
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        self.periods[axis] / self.sizes[axis] as f64
    }

    /// Row-major strides (last axis has stride 1).
    pub fn strides(&self) -> Vec<usize> {
        let mut s = vec![1usize; self.dim];
        for a in (0..self.dim - 1).rev() {
            s[a] = s[a + 1] * self.sizes[a + 1];
        }
        s
    }

    pub fn flat_index(&self, multi: &[usize]) -> usize {
        let mut idx = 0;
        for (a, &i) in multi.iter().enumerate() {
            idx = idx * self.sizes[a] + i;
        }
        idx
    }

    pub fn multi_index(&self, mut flat: usize) -> Vec<usize> {
        let mut multi = vec![0usize; self.dim];
        for a in (0..self.dim).rev() {
            multi[a] = flat % self.sizes[a];
            flat /= self.sizes[a];
        }
        multi
    }

    /// Coordinates of a lattice point given its multi-index.
    pub fn coords(&self, multi: &[usize]) -> Vec<f64> {
        multi
            .iter()
            .enumerate()
            .map(|(a, &i)| i as f64 * self.spacing(a))
            .collect()
    }

    pub fn coords_flat(&self, flat: usize) -> Vec<f64> {
        self.coords(&self.multi_index(flat))
    }

    /// Integer frequency for FFT bin `j` on `axis`, in `-N/2+1 ..= N/2`.
    pub fn freq(&self, axis: usize, j: usize) -> i64 {
        let n = self.sizes[axis] as i64;
        let j = j as i64;
        if j <= n / 2 {
            j
        } else {
            j - n
        }
    }

    /// Angular wavenumber `2π f / L` for FFT bin `j` on `axis`.
    pub fn wavenumber(&self, axis: usize, j: usize) -> f64 {
        std::f64::consts::TAU * self.freq(axis, j) as f64 / self.periods[axis]
    }

    /// Wrap a coordinate difference into `[-L/2, L/2)` per axis.
    pub fn wrap_delta(&self, axis: usize, d: f64) -> f64 {
        let l = self.periods[axis];
        let mut d = d % l;
        if d >= l / 2.0 {
            d -= l;
        } else if d < -l / 2.0 {
            d += l;
        }
        d
    }

    /// Wrap a position into the fundamental domain `[0, L)` per axis.
    pub fn wrap_coord(&self, axis: usize, x: f64) -> f64 {
        let l = self.periods[axis];
        let mut x = x % l;
        if x < 0.0 {
            x += l;
        }
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_grids() {
        assert!(Grid::new(&[16], &[1.0], Scheme::Spectral).is_err());
        assert!(Grid::new(&[16, 16, 16, 16, 16], &[1.0; 5], Scheme::Spectral).is_err());
        assert!(Grid::new(&[16, 4], &[1.0, 1.0], Scheme::Spectral).is_err());
        assert!(Grid::new(&[16, 16], &[1.0, -1.0], Scheme::Spectral).is_err());
        assert!(Grid::new(&[16, 16], &[1.0, 0.0], Scheme::Spectral).is_err());
    }

    #[test]
    fn indexing_round_trip() {
        let g = Grid::new(&[8, 12, 10], &[1.0, 2.0, 3.0], Scheme::Central2).unwrap();
        assert_eq!(g.npoints(), 960);
        for flat in [0usize, 1, 573, 959] {
            assert_eq!(g.flat_index(&g.multi_index(flat)), flat);
        }
        let strides = g.strides();
        assert_eq!(strides, vec![120, 10, 1]);
    }

    #[test]
    fn frequencies_follow_fft_layout() {
        let g = Grid::new(&[8, 8], &[std::f64::consts::TAU; 2], Scheme::Spectral).unwrap();
        let f: Vec<i64> = (0..8).map(|j| g.freq(0, j)).collect();
        assert_eq!(f, vec![0, 1, 2, 3, 4, -3, -2, -1]);
        // Period 2π makes angular wavenumbers integers.
        assert!((g.wavenumber(0, 2) - 2.0).abs() < 1e-15);
    }

    #[test]
    fn wrapping() {
        let g = Grid::new(&[8, 8], &[1.0, 1.0], Scheme::Spectral).unwrap();
        assert!((g.wrap_delta(0, 0.75) - (-0.25)).abs() < 1e-15);
        assert!((g.wrap_delta(0, -0.75) - 0.25).abs() < 1e-15);
        assert!((g.wrap_coord(0, -0.25) - 0.75).abs() < 1e-15);
        assert!((g.wrap_coord(0, 1.25) - 0.25).abs() < 1e-15);
    }
}
