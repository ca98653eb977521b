//! Tensor-valued grid functions.
//!
//! A [`TensorField`] stores one real component array per tensor component,
//! laid out component-major: `data[c * npoints + p]`. Components of a rank-2
//! tensor flagged `symmetric` are stored packed, upper triangle row-major, so
//! the symmetry holds exactly by construction. Slot variances are tracked per
//! slot so contractions can be validated.

use std::sync::Arc;

use crate::error::{GeomError, Result};
use crate::grid::Grid;
use crate::linalg;

/// Variance of a single tensor slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variance {
    /// Contravariant (upper) index.
    Up,
    /// Covariant (lower) index.
    Down,
}

impl Variance {
    pub fn flip(self) -> Variance {
        match self {
            Variance::Up => Variance::Down,
            Variance::Down => Variance::Up,
        }
    }
}

pub const UP: Variance = Variance::Up;
pub const DOWN: Variance = Variance::Down;

/// Number of packed components of a symmetric pair in dimension `n`.
pub fn sym_count(n: usize) -> usize {
    n * (n + 1) / 2
}

/// Packed index of the unordered pair `(i, j)` in dimension `n`.
pub fn sym_pack(n: usize, i: usize, j: usize) -> usize {
    let (a, b) = if i <= j { (i, j) } else { (j, i) };
    a * n - (a * a - a) / 2 + (b - a)
}

/// Unpack a packed pair index back to `(i, j)` with `i <= j`.
pub fn sym_unpack(n: usize, mut c: usize) -> (usize, usize) {
    for i in 0..n {
        let row = n - i;
        if c < row {
            return (i, i + c);
        }
        c -= row;
    }
    unreachable!("packed index out of range");
}

/// Visit every ordered index tuple of length `order` with entries in `0..n`.
pub fn for_each_index(n: usize, order: usize, mut f: impl FnMut(&[usize])) {
    let mut idx = vec![0usize; order];
    if order == 0 {
        f(&idx);
        return;
    }
    loop {
        f(&idx);
        let mut a = order;
        loop {
            if a == 0 {
                return;
            }
            a -= 1;
            idx[a] += 1;
            if idx[a] < n {
                break;
            }
            idx[a] = 0;
        }
    }
}

/// Real tensor-valued function sampled on a periodic grid.
#[derive(Debug, Clone)]
pub struct TensorField {
    grid: Arc<Grid>,
    variances: Vec<Variance>,
    symmetric: bool,
    data: Vec<f64>,
}

impl TensorField {
    pub fn zeros(grid: Arc<Grid>, variances: &[Variance], symmetric: bool) -> Result<Self> {
        if symmetric && (variances.len() != 2 || variances[0] != variances[1]) {
            return Err(GeomError::ShapeMismatch(
                "symmetric storage requires a rank-2 tensor of uniform variance".into(),
            ));
        }
        let n = grid.dim();
        let ncomp = if symmetric {
            sym_count(n)
        } else {
            n.pow(variances.len() as u32)
        };
        let npoints = grid.npoints();
        Ok(TensorField {
            grid,
            variances: variances.to_vec(),
            symmetric,
            data: vec![0.0; ncomp * npoints],
        })
    }

    pub fn scalar(grid: Arc<Grid>) -> Self {
        TensorField::zeros(grid, &[], false).expect("scalar layout is always valid")
    }

    /// Build a field from a closure of (coordinates, tensor indices).
    pub fn from_fn(
        grid: Arc<Grid>,
        variances: &[Variance],
        symmetric: bool,
        f: impl Fn(&[f64], &[usize]) -> f64,
    ) -> Result<Self> {
        let mut out = TensorField::zeros(grid.clone(), variances, symmetric)?;
        let npoints = grid.npoints();
        let n = grid.dim();
        let ncomp = out.ncomp();
        for c in 0..ncomp {
            let idx = out.indices_of_comp(c);
            for p in 0..npoints {
                let x = grid.coords_flat(p);
                out.data[c * npoints + p] = f(&x, &idx);
            }
        }
        let _ = n;
        Ok(out)
    }

    pub fn scalar_from_fn(grid: Arc<Grid>, f: impl Fn(&[f64]) -> f64) -> Self {
        TensorField::from_fn(grid, &[], false, |x, _| f(x)).expect("scalar layout")
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn grid_arc(&self) -> Arc<Grid> {
        self.grid.clone()
    }

    pub fn variances(&self) -> &[Variance] {
        &self.variances
    }

    /// Total number of slots.
    pub fn order(&self) -> usize {
        self.variances.len()
    }

    /// (contravariant, covariant) slot counts.
    pub fn rank(&self) -> (usize, usize) {
        let up = self.variances.iter().filter(|v| **v == UP).count();
        (up, self.variances.len() - up)
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    pub fn ncomp(&self) -> usize {
        let n = self.grid.dim();
        if self.symmetric {
            sym_count(n)
        } else {
            n.pow(self.order() as u32)
        }
    }

    pub fn npoints(&self) -> usize {
        self.grid.npoints()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Storage index of the component with the given slot indices.
    pub fn comp_index(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.order());
        let n = self.grid.dim();
        if self.symmetric {
            sym_pack(n, idx[0], idx[1])
        } else {
            idx.iter().fold(0usize, |acc, &i| acc * n + i)
        }
    }

    /// Slot indices corresponding to storage component `c`. For packed
    /// symmetric storage this is the representative with `i <= j`.
    pub fn indices_of_comp(&self, mut c: usize) -> Vec<usize> {
        let n = self.grid.dim();
        if self.symmetric {
            let (i, j) = sym_unpack(n, c);
            return vec![i, j];
        }
        let q = self.order();
        let mut idx = vec![0usize; q];
        for a in (0..q).rev() {
            idx[a] = c % n;
            c /= n;
        }
        idx
    }

    pub fn comp(&self, c: usize) -> &[f64] {
        let np = self.npoints();
        &self.data[c * np..(c + 1) * np]
    }

    pub fn comp_mut(&mut self, c: usize) -> &mut [f64] {
        let np = self.npoints();
        &mut self.data[c * np..(c + 1) * np]
    }

    pub fn value(&self, point: usize, idx: &[usize]) -> f64 {
        self.data[self.comp_index(idx) * self.npoints() + point]
    }

    pub fn set(&mut self, point: usize, idx: &[usize], v: f64) {
        let c = self.comp_index(idx);
        let np = self.npoints();
        self.data[c * np + point] = v;
    }

    /// Empty field with the same grid and layout.
    pub fn like(&self) -> TensorField {
        TensorField {
            grid: self.grid.clone(),
            variances: self.variances.clone(),
            symmetric: self.symmetric,
            data: vec![0.0; self.data.len()],
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> TensorField {
        let mut out = self.clone();
        for v in out.data.iter_mut() {
            *v = f(*v);
        }
        out
    }

    pub fn scale(&mut self, a: f64) {
        for v in self.data.iter_mut() {
            *v *= a;
        }
    }

    pub fn scaled(&self, a: f64) -> TensorField {
        self.map(|v| v * a)
    }

    /// `self += a * other`, requiring identical layout.
    pub fn axpy(&mut self, a: f64, other: &TensorField) -> Result<()> {
        self.check_same_layout(other)?;
        for (x, y) in self.data.iter_mut().zip(other.data.iter()) {
            *x += a * y;
        }
        Ok(())
    }

    pub fn add(&self, other: &TensorField) -> Result<TensorField> {
        let mut out = self.clone();
        out.axpy(1.0, other)?;
        Ok(out)
    }

    pub fn sub(&self, other: &TensorField) -> Result<TensorField> {
        let mut out = self.clone();
        out.axpy(-1.0, other)?;
        Ok(out)
    }

    pub fn check_same_layout(&self, other: &TensorField) -> Result<()> {
        if *self.grid != *other.grid {
            return Err(GeomError::GridMismatch(
                "operands live on different grids".into(),
            ));
        }
        if self.variances != other.variances || self.symmetric != other.symmetric {
            return Err(GeomError::ShapeMismatch(format!(
                "layout mismatch: {:?}/sym={} vs {:?}/sym={}",
                self.variances, self.symmetric, other.variances, other.symmetric
            )));
        }
        Ok(())
    }

    pub fn check_same_grid(&self, other: &TensorField) -> Result<()> {
        if *self.grid != *other.grid {
            return Err(GeomError::GridMismatch(
                "operands live on different grids".into(),
            ));
        }
        Ok(())
    }

    /// Sup norm over all components and points.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, &v| m.max(v.abs()))
    }

    /// Sup over points of the Frobenius norm over full (unpacked) components.
    pub fn max_frobenius(&self) -> f64 {
        let np = self.npoints();
        let n = self.grid.dim();
        let mut worst = 0.0f64;
        for p in 0..np {
            let mut s = 0.0;
            if self.symmetric {
                for c in 0..self.ncomp() {
                    let (i, j) = sym_unpack(n, c);
                    let v = self.data[c * np + p];
                    s += if i == j { v * v } else { 2.0 * v * v };
                }
            } else {
                for c in 0..self.ncomp() {
                    let v = self.data[c * np + p];
                    s += v * v;
                }
            }
            worst = worst.max(s);
        }
        worst.sqrt()
    }

    pub fn ensure_finite(&self, what: &str) -> Result<()> {
        if self.data.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(GeomError::NonFinite(what.to_string()))
        }
    }

    /// Expand packed symmetric storage to full storage (no-op otherwise).
    pub fn to_full(&self) -> TensorField {
        if !self.symmetric {
            return self.clone();
        }
        let n = self.grid.dim();
        let np = self.npoints();
        let mut out = TensorField::zeros(self.grid.clone(), &self.variances, false)
            .expect("full layout");
        for i in 0..n {
            for j in 0..n {
                let src = sym_pack(n, i, j);
                let dst = i * n + j;
                let (s, d) = (src * np, dst * np);
                for p in 0..np {
                    out.data[d + p] = self.data[s + p];
                }
            }
        }
        out
    }

    /// Pack a rank-2 field into symmetric storage, averaging the off-diagonal
    /// pair (callers use this to re-symmetrize after roundoff).
    pub fn symmetrized(&self) -> Result<TensorField> {
        if self.symmetric {
            return Ok(self.clone());
        }
        if self.order() != 2 || self.variances[0] != self.variances[1] {
            return Err(GeomError::ShapeMismatch(
                "symmetrization needs a rank-2 tensor of uniform variance".into(),
            ));
        }
        let n = self.grid.dim();
        let np = self.npoints();
        let mut out = TensorField::zeros(self.grid.clone(), &self.variances, true)?;
        for i in 0..n {
            for j in i..n {
                let c = sym_pack(n, i, j) * np;
                let a = (i * n + j) * np;
                let b = (j * n + i) * np;
                for p in 0..np {
                    out.data[c + p] = 0.5 * (self.data[a + p] + self.data[b + p]);
                }
            }
        }
        Ok(out)
    }
}

/// Riemannian metric on a grid: positive-definite symmetric rank-(0,2) field
/// with its pointwise inverse cached.
#[derive(Debug, Clone)]
pub struct MetricField {
    g: TensorField,
    ginv: TensorField,
    min_eig: f64,
}

impl MetricField {
    /// Eigenvalue floor below which a metric is treated as degenerate.
    pub const EIG_FLOOR: f64 = 1e-10;

    pub fn new(g: TensorField) -> Result<Self> {
        let g = if g.is_symmetric() { g } else { g.symmetrized()? };
        if g.variances() != [DOWN, DOWN] {
            return Err(GeomError::ShapeMismatch(
                "metric must be a rank-(0,2) tensor".into(),
            ));
        }
        g.ensure_finite("metric components")?;
        let grid = g.grid_arc();
        let n = grid.dim();
        let np = grid.npoints();
        let mut ginv = TensorField::zeros(grid.clone(), &[UP, UP], true)?;
        let mut min_eig = f64::INFINITY;
        let mut mat = vec![0.0f64; n * n];
        for p in 0..np {
            for i in 0..n {
                for j in 0..n {
                    mat[i * n + j] = g.data()[sym_pack(n, i, j) * np + p];
                }
            }
            let lam = linalg::sym_min_eig(n, &mat);
            if lam <= Self::EIG_FLOOR {
                return Err(GeomError::DegenerateMetric {
                    point: grid.multi_index(p),
                    min_eig: lam,
                });
            }
            min_eig = min_eig.min(lam);
            if !linalg::invert(n, &mut mat) {
                return Err(GeomError::DegenerateMetric {
                    point: grid.multi_index(p),
                    min_eig: lam,
                });
            }
            for i in 0..n {
                for j in i..n {
                    // Symmetrize: Gauss-Jordan roundoff may break the pair.
                    let v = 0.5 * (mat[i * n + j] + mat[j * n + i]);
                    ginv.data_mut()[sym_pack(n, i, j) * np + p] = v;
                }
            }
        }
        Ok(MetricField { g, ginv, min_eig })
    }

    /// Flat (identity) metric.
    pub fn flat(grid: Arc<Grid>) -> Result<Self> {
        let g = TensorField::from_fn(grid, &[DOWN, DOWN], true, |_, idx| {
            if idx[0] == idx[1] {
                1.0
            } else {
                0.0
            }
        })?;
        MetricField::new(g)
    }

    /// Conformally flat metric `e^{2u} δ` from a scalar grid function.
    pub fn conformal(u: &TensorField) -> Result<Self> {
        if u.order() != 0 {
            return Err(GeomError::ShapeMismatch("conformal factor must be scalar".into()));
        }
        let grid = u.grid_arc();
        let n = grid.dim();
        let np = grid.npoints();
        let mut g = TensorField::zeros(grid, &[DOWN, DOWN], true)?;
        for i in 0..n {
            let c = sym_pack(n, i, i) * np;
            for p in 0..np {
                g.data_mut()[c + p] = (2.0 * u.data()[p]).exp();
            }
        }
        MetricField::new(g)
    }

    pub fn metric(&self) -> &TensorField {
        &self.g
    }

    pub fn inverse(&self) -> &TensorField {
        &self.ginv
    }

    pub fn grid(&self) -> &Grid {
        self.g.grid()
    }

    pub fn grid_arc(&self) -> Arc<Grid> {
        self.g.grid_arc()
    }

    pub fn dim(&self) -> usize {
        self.g.grid().dim()
    }

    pub fn min_eig(&self) -> f64 {
        self.min_eig
    }

    pub fn value(&self, p: usize, i: usize, j: usize) -> f64 {
        let np = self.g.npoints();
        self.g.data()[sym_pack(self.dim(), i, j) * np + p]
    }

    pub fn inv_value(&self, p: usize, i: usize, j: usize) -> f64 {
        let np = self.g.npoints();
        self.ginv.data()[sym_pack(self.dim(), i, j) * np + p]
    }

    /// Pointwise `sqrt(det g)`.
    pub fn sqrt_det(&self) -> TensorField {
        let grid = self.grid_arc();
        let n = grid.dim();
        let np = grid.npoints();
        let mut out = TensorField::scalar(grid);
        let mut mat = vec![0.0f64; n * n];
        for p in 0..np {
            for i in 0..n {
                for j in 0..n {
                    mat[i * n + j] = self.value(p, i, j);
                }
            }
            out.data_mut()[p] = linalg::det(n, &mat).sqrt();
        }
        out
    }
}
