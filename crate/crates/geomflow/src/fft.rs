//! Differentiation and Fourier multipliers on periodic grids.
//!
//! Spectral operations run axis-by-axis complex FFTs (rustfft) over gathered
//! lines; plans are cached globally. Central-difference schemes share the same
//! line walker. All operators act component-wise on tensor fields.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{GeomError, Result};
use crate::field::TensorField;
use crate::grid::{Grid, Scheme};

fn plan_cache() -> &'static Mutex<HashMap<(usize, bool), Arc<dyn Fft<f64>>>> {
    static CACHE: OnceLock<Mutex<HashMap<(usize, bool), Arc<dyn Fft<f64>>>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

pub(crate) fn plan(len: usize, forward: bool) -> Arc<dyn Fft<f64>> {
    let mut cache = plan_cache().lock().expect("fft plan cache poisoned");
    cache
        .entry((len, forward))
        .or_insert_with(|| {
            let mut planner = FftPlanner::new();
            if forward {
                planner.plan_fft_forward(len)
            } else {
                planner.plan_fft_inverse(len)
            }
        })
        .clone()
}

/// Visit each 1-D line along `axis`: calls `f(start, stride)` once per line.
pub(crate) fn for_each_line(grid: &Grid, axis: usize, mut f: impl FnMut(usize, usize)) {
    let sizes = grid.sizes();
    let strides = grid.strides();
    let stride = strides[axis];
    let size = sizes[axis];
    let block = size * stride;
    let nblocks = grid.npoints() / block;
    for q in 0..nblocks {
        let base = q * block;
        for s in 0..stride {
            f(base + s, stride);
        }
    }
}

/// In-place 1-D FFT along `axis` for every line of a complex scalar array.
pub(crate) fn fft_axis(grid: &Grid, data: &mut [Complex64], axis: usize, forward: bool) {
    let n = grid.sizes()[axis];
    let fft = plan(n, forward);
    let mut line = vec![Complex64::default(); n];
    let mut scratch = vec![Complex64::default(); fft.get_inplace_scratch_len()];
    let norm = if forward { 1.0 } else { 1.0 / n as f64 };
    for_each_line(grid, axis, |start, stride| {
        for (t, v) in line.iter_mut().enumerate() {
            *v = data[start + t * stride];
        }
        fft.process_with_scratch(&mut line, &mut scratch);
        for (t, v) in line.iter().enumerate() {
            data[start + t * stride] = v * norm;
        }
    });
}

/// Forward full-grid transform of one real component.
pub(crate) fn forward_full(grid: &Grid, comp: &[f64]) -> Vec<Complex64> {
    let mut buf: Vec<Complex64> = comp.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    for a in 0..grid.dim() {
        fft_axis(grid, &mut buf, a, true);
    }
    buf
}

/// Inverse full-grid transform, discarding the imaginary residue. Dropping
/// the imaginary part enforces conjugate symmetry of the result.
pub(crate) fn inverse_full_real(grid: &Grid, mut buf: Vec<Complex64>, out: &mut [f64]) {
    for a in 0..grid.dim() {
        fft_axis(grid, &mut buf, a, false);
    }
    for (o, v) in out.iter_mut().zip(buf.iter()) {
        *o = v.re;
    }
}

fn spectral_axis_derivative(grid: &Grid, comp: &mut [f64], axis: usize, order: usize) {
    let n = grid.sizes()[axis];
    let mut mult = vec![Complex64::default(); n];
    for (j, m) in mult.iter_mut().enumerate() {
        let k = grid.wavenumber(axis, j);
        *m = match order {
            // Odd derivative: the Nyquist bin has no well-defined sign, zero it.
            1 => {
                if n % 2 == 0 && j == n / 2 {
                    Complex64::new(0.0, 0.0)
                } else {
                    Complex64::new(0.0, k)
                }
            }
            2 => Complex64::new(-k * k, 0.0),
            _ => unreachable!(),
        };
    }
    let fwd = plan(n, true);
    let inv = plan(n, false);
    let mut line = vec![Complex64::default(); n];
    let mut scratch = vec![
        Complex64::default();
        fwd.get_inplace_scratch_len().max(inv.get_inplace_scratch_len())
    ];
    let norm = 1.0 / n as f64;
    for_each_line(grid, axis, |start, stride| {
        for (t, v) in line.iter_mut().enumerate() {
            *v = Complex64::new(comp[start + t * stride], 0.0);
        }
        fwd.process_with_scratch(&mut line, &mut scratch);
        for (v, m) in line.iter_mut().zip(mult.iter()) {
            *v *= m;
        }
        inv.process_with_scratch(&mut line, &mut scratch);
        for (t, v) in line.iter().enumerate() {
            comp[start + t * stride] = v.re * norm;
        }
    });
}

fn central_axis_derivative(grid: &Grid, comp: &mut [f64], axis: usize, order: usize) {
    let n = grid.sizes()[axis];
    let h = grid.spacing(axis);
    let scheme = grid.scheme();
    let mut line = vec![0.0f64; n];
    let mut out = vec![0.0f64; n];
    for_each_line(grid, axis, |start, stride| {
        for (t, v) in line.iter_mut().enumerate() {
            *v = comp[start + t * stride];
        }
        for t in 0..n {
            let m1 = line[(t + n - 1) % n];
            let p1 = line[(t + 1) % n];
            out[t] = match (scheme, order) {
                (Scheme::Central2, 1) => (p1 - m1) / (2.0 * h),
                (Scheme::Central2, 2) => (p1 - 2.0 * line[t] + m1) / (h * h),
                (Scheme::Central4, 1) => {
                    let m2 = line[(t + n - 2) % n];
                    let p2 = line[(t + 2) % n];
                    (-p2 + 8.0 * p1 - 8.0 * m1 + m2) / (12.0 * h)
                }
                (Scheme::Central4, 2) => {
                    let m2 = line[(t + n - 2) % n];
                    let p2 = line[(t + 2) % n];
                    (-p2 + 16.0 * p1 - 30.0 * line[t] + 16.0 * m1 - m2) / (12.0 * h * h)
                }
                _ => unreachable!(),
            };
        }
        for (t, v) in out.iter().enumerate() {
            comp[start + t * stride] = *v;
        }
    });
}

/// Partial derivative `∂^order / ∂x_axis^order` (order 1 or 2) of every
/// component, using the grid's scheme. Mixed partials compose two first-order
/// calls.
pub fn partial_derivative(f: &TensorField, axis: usize, order: usize) -> Result<TensorField> {
    let grid = f.grid();
    if axis >= grid.dim() {
        return Err(GeomError::InvalidArgument(format!(
            "axis {axis} out of range for dimension {}",
            grid.dim()
        )));
    }
    if !(order == 1 || order == 2) {
        return Err(GeomError::InvalidArgument(format!(
            "derivative order {order} unsupported (want 1 or 2)"
        )));
    }
    f.ensure_finite("partial_derivative input")?;
    let mut out = f.clone();
    for c in 0..out.ncomp() {
        let comp = out.comp_mut(c);
        match grid.scheme() {
            Scheme::Spectral => spectral_axis_derivative(grid, comp, axis, order),
            Scheme::Central2 | Scheme::Central4 => {
                central_axis_derivative(grid, comp, axis, order)
            }
        }
    }
    Ok(out)
}

/// Table of multiplier values over the lattice wave-vector set.
pub fn multiplier_table(grid: &Grid, m: impl Fn(&[f64]) -> f64) -> Vec<f64> {
    let np = grid.npoints();
    let dim = grid.dim();
    let mut table = vec![0.0f64; np];
    let mut k = vec![0.0f64; dim];
    for (p, t) in table.iter_mut().enumerate() {
        let multi = grid.multi_index(p);
        for a in 0..dim {
            k[a] = grid.wavenumber(a, multi[a]);
        }
        *t = m(&k);
    }
    table
}

/// Apply a real Fourier multiplier `m(k)` to every component. The output is
/// real by construction (conjugate symmetry enforced on inversion).
pub fn fourier_multiplier(f: &TensorField, m: impl Fn(&[f64]) -> f64) -> Result<TensorField> {
    let table = multiplier_table(f.grid(), m);
    fourier_multiplier_table(f, &table)
}

/// Same as [`fourier_multiplier`] with a precomputed multiplier table; useful
/// when one multiplier is applied to many fields.
pub fn fourier_multiplier_table(f: &TensorField, table: &[f64]) -> Result<TensorField> {
    let grid = f.grid();
    if table.len() != grid.npoints() {
        return Err(GeomError::ShapeMismatch(
            "multiplier table length does not match grid".into(),
        ));
    }
    if !table.iter().all(|v| v.is_finite()) {
        return Err(GeomError::NonFinite("fourier multiplier table".into()));
    }
    f.ensure_finite("fourier_multiplier input")?;
    let mut out = f.clone();
    for c in 0..out.ncomp() {
        let comp = out.comp_mut(c);
        let mut buf = forward_full(grid, comp);
        for (v, t) in buf.iter_mut().zip(table.iter()) {
            *v *= t;
        }
        inverse_full_real(grid, buf, comp);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{TensorField, DOWN};
    use std::sync::Arc;

    fn grid(scheme: Scheme, n: usize) -> Arc<Grid> {
        Arc::new(Grid::new(&[n, n], &[1.0, 2.0], scheme).unwrap())
    }

    fn wave(g: Arc<Grid>) -> TensorField {
        // sin(2π(2x/L0)) * cos(2π(y/L1)); closed-form derivatives below.
        TensorField::scalar_from_fn(g, |x| {
            (std::f64::consts::TAU * 2.0 * x[0]).sin() * (std::f64::consts::PI * x[1]).cos()
        })
    }

    fn dwave_dx(g: Arc<Grid>) -> TensorField {
        TensorField::scalar_from_fn(g, |x| {
            2.0 * std::f64::consts::TAU
                * (std::f64::consts::TAU * 2.0 * x[0]).cos()
                * (std::f64::consts::PI * x[1]).cos()
        })
    }

    fn d2wave_dy2(g: Arc<Grid>) -> TensorField {
        TensorField::scalar_from_fn(g, |x| {
            -std::f64::consts::PI.powi(2)
                * (std::f64::consts::TAU * 2.0 * x[0]).sin()
                * (std::f64::consts::PI * x[1]).cos()
        })
    }

    #[test]
    fn spectral_derivative_is_exact_on_band_limited_data() {
        let g = grid(Scheme::Spectral, 16);
        let f = wave(g.clone());
        let dx = partial_derivative(&f, 0, 1).unwrap();
        let err = dx.sub(&dwave_dx(g.clone())).unwrap().max_abs();
        assert!(err < 1e-11, "spectral d/dx error {err:.3e}");
        let dyy = partial_derivative(&f, 1, 2).unwrap();
        let err2 = dyy.sub(&d2wave_dy2(g)).unwrap().max_abs();
        assert!(err2 < 1e-11, "spectral d2/dy2 error {err2:.3e}");
    }

    #[test]
    fn central_schemes_converge_at_their_order() {
        for (scheme, expect) in [(Scheme::Central2, 2.0), (Scheme::Central4, 4.0)] {
            let mut errs = Vec::new();
            for n in [16usize, 32] {
                let g = grid(scheme, n);
                let f = wave(g.clone());
                let dx = partial_derivative(&f, 0, 1).unwrap();
                errs.push(dx.sub(&dwave_dx(g)).unwrap().max_abs());
            }
            let rate = (errs[0] / errs[1]).log2();
            assert!(
                (rate - expect).abs() < 0.35,
                "{scheme:?} first-derivative rate {rate:.2}, want {expect}"
            );
        }
    }

    #[test]
    fn second_derivative_stencils_converge() {
        for (scheme, expect) in [(Scheme::Central2, 2.0), (Scheme::Central4, 4.0)] {
            let mut errs = Vec::new();
            for n in [16usize, 32] {
                let g = grid(scheme, n);
                let f = wave(g.clone());
                let dyy = partial_derivative(&f, 1, 2).unwrap();
                errs.push(dyy.sub(&d2wave_dy2(g)).unwrap().max_abs());
            }
            let rate = (errs[0] / errs[1]).log2();
            assert!(
                (rate - expect).abs() < 0.35,
                "{scheme:?} second-derivative rate {rate:.2}, want {expect}"
            );
        }
    }

    #[test]
    fn identity_multiplier_round_trips() {
        let g = grid(Scheme::Spectral, 12);
        let f = wave(g);
        let id = fourier_multiplier(&f, |_| 1.0).unwrap();
        let err = id.sub(&f).unwrap().max_abs();
        assert!(err < 1e-12, "identity multiplier error {err:.3e}");
    }

    #[test]
    fn laplacian_multiplier_matches_analytic_laplacian() {
        let g = grid(Scheme::Spectral, 16);
        let f = wave(g.clone());
        let lap = fourier_multiplier(&f, |k| -(k[0] * k[0] + k[1] * k[1])).unwrap();
        let expect = TensorField::scalar_from_fn(g, |x| {
            -((2.0 * std::f64::consts::TAU).powi(2) + std::f64::consts::PI.powi(2))
                * (std::f64::consts::TAU * 2.0 * x[0]).sin()
                * (std::f64::consts::PI * x[1]).cos()
        });
        let err = lap.sub(&expect).unwrap().max_abs();
        assert!(err < 1e-10, "laplacian multiplier error {err:.3e}");
    }

    #[test]
    fn rejects_non_finite_input() {
        let g = grid(Scheme::Spectral, 8);
        let mut f = TensorField::scalar(g);
        f.data_mut()[3] = f64::NAN;
        assert!(partial_derivative(&f, 0, 1).is_err());
    }

    #[test]
    fn derivative_preserves_symmetric_layout() {
        let g = grid(Scheme::Spectral, 8);
        let t = TensorField::from_fn(g, &[DOWN, DOWN], true, |x, idx| {
            (idx[0] * 2 + idx[1]) as f64 * (std::f64::consts::TAU * x[0]).sin()
        })
        .unwrap();
        let d = partial_derivative(&t, 0, 1).unwrap();
        assert!(d.is_symmetric());
        assert_eq!(d.ncomp(), 3);
    }
}
