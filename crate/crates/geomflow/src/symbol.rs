//! Linearization and principal-symbol extraction for the flow operators.
//!
//! The right-hand side `T(g)` of every flow in this crate is a smooth
//! function of finitely many derivatives of the metric, so at a background
//! `h` it splits as `T(h + v) = I_h + L_h v + Q_h(v)` with `I_h = T(h)`,
//! `L_h` linear in `v`, and `Q_h` at least quadratic. This module computes
//! `L_h v` by Richardson-extrapolated central differences, extracts the
//! principal symbol of `L_h` from plane-wave probes on a frozen-coefficient
//! background, and checks strong ellipticity over random `(xi, eta)` samples.

use std::sync::Arc;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{GeomError, Result};
use crate::fft::partial_derivative;
use crate::field::{MetricField, TensorField};
use crate::flows::{FlowContext, FlowKind, FlowSpec};
use crate::grid::Scheme;

/// Relative agreement required between successive Richardson extrapolants.
/// Difference quotients of the fourth-order operators on fine grids hit a
/// rounding floor near 1e-8 relative, so the gate sits one decade above it.
pub const RICHARDSON_TOL: f64 = 1e-7;

/// Response per unit direction below which the linearization counts as zero.
/// Relative agreement is meaningless on null directions (gauge modes of the
/// unadjusted flows), where the extrapolants are pure rounding noise.
const LINEAR_NULL_FLOOR: f64 = 1e-7;

/// Relative residual allowed at the held-out probe mode of the symbol fit.
pub const FIT_TOL: f64 = 1e-6;

/// Agreement gate for linearizations inside the cancellation check. The
/// leading-order residuals it feeds are of order 1e-2 and are compared as
/// ratios, so four digits of the linearization are ample; the strict gate
/// is unreachable for low-mode probes on fine grids (see
/// [`linearize_with_tol`]).
const CANCELLATION_LIN_TOL: f64 = 1e-4;

/// Default lower bound on the normalized symbol for an ellipticity pass.
pub const LAMBDA_THRESHOLD: f64 = 1e-6;

/// Extend the metric value at one grid point to a constant field. Symbol
/// extraction freezes coefficients this way so that the linearization acts
/// on plane waves mode by mode.
pub fn frozen_at(h: &MetricField, point: usize) -> Result<MetricField> {
    let g = h.metric();
    let np = g.npoints();
    if point >= np {
        return Err(GeomError::InvalidArgument(format!(
            "freeze point {point} outside grid with {np} points"
        )));
    }
    let mut out = g.like();
    for c in 0..g.ncomp() {
        let v = g.comp(c)[point];
        out.data_mut()[c * np..(c + 1) * np].fill(v);
    }
    MetricField::new(out)
}

/// Directional derivative `L_h v = d/ds T(h + s v)` at `s = 0`.
///
/// Central differences at step sizes `s0, s0/2, s0/4, ...` are Richardson
/// extrapolated; the result is accepted once successive extrapolants agree
/// to [`RICHARDSON_TOL`] relative. The base step is `1e-4` times the
/// background scale, so `h ± s v` stays positive definite unless `h` is
/// already close to degenerate (which surfaces as `DegenerateMetric`).
pub fn linearize_at(ctx: &FlowContext, h: &MetricField, v: &TensorField) -> Result<TensorField> {
    linearize_with_tol(ctx, h, v, RICHARDSON_TOL)
}

/// [`linearize_at`] with a caller-chosen agreement gate.
///
/// The reachable floor of the gate is the evaluation roundoff of `T`
/// divided by the step and the response norm. Roundoff grows with the
/// grid's Nyquist frequency to the operator order, while a low-mode probe
/// keeps the response norm small, so fourth-order operators on fine grids
/// cannot meet the strict gate there and callers that only compare O(1e-2)
/// residuals pass a looser one.
fn linearize_with_tol(
    ctx: &FlowContext,
    h: &MetricField,
    v: &TensorField,
    tol: f64,
) -> Result<TensorField> {
    h.metric().check_same_layout(v)?;
    let vnorm = v.max_frobenius();
    if vnorm == 0.0 {
        return Ok(v.like());
    }
    let hnorm = h.metric().max_frobenius().max(1.0);
    let s0 = 1e-4 * hnorm / vnorm;

    let diff = |s: f64| -> Result<TensorField> {
        let mut gp = h.metric().clone();
        gp.axpy(s, v)?;
        let mut gm = h.metric().clone();
        gm.axpy(-s, v)?;
        let mut d = ctx.rhs_of_field(&gp)?.sub(&ctx.rhs_of_field(&gm)?)?;
        d.scale(0.5 / s);
        Ok(d)
    };

    // D(s) = L v + c2 s^2 + c4 s^4 + ...; one extrapolation level removes
    // the s^2 term, and agreement between two levels bounds what is left.
    let richardson = |fine: &TensorField, coarse: &TensorField| -> Result<TensorField> {
        let mut r = fine.scaled(4.0 / 3.0);
        r.axpy(-1.0 / 3.0, coarse)?;
        Ok(r)
    };

    let mut d_coarse = diff(s0)?;
    let mut d_fine = diff(s0 / 2.0)?;
    let mut r_prev = richardson(&d_fine, &d_coarse)?;
    let mut step = s0 / 2.0;
    let mut rel = f64::INFINITY;
    for _ in 0..3 {
        step /= 2.0;
        let d_next = diff(step)?;
        let r_curr = richardson(&d_next, &d_fine)?;
        if r_curr.max_frobenius() <= LINEAR_NULL_FLOOR * vnorm {
            return Ok(r_curr);
        }
        let denom = r_curr.max_frobenius().max(f64::MIN_POSITIVE);
        rel = r_curr.sub(&r_prev)?.max_frobenius() / denom;
        if rel < tol {
            // Both extrapolants carry the same s^4 error up to a factor of
            // 16; one more level cancels it.
            let mut out = r_curr.scaled(16.0 / 15.0);
            out.axpy(-1.0 / 15.0, &r_prev)?;
            return Ok(out);
        }
        d_coarse = d_fine;
        d_fine = d_next;
        r_prev = r_curr;
    }
    let _ = d_coarse;
    Err(GeomError::InconclusiveFit { residual: rel, tol })
}

/// Taylor splitting `T(h + v) = I_h + L_h v + Q_h(v)` around a background.
pub struct TaylorSplit<'a> {
    ctx: &'a FlowContext,
    h: MetricField,
    i_h: TensorField,
}

impl TaylorSplit<'_> {
    pub fn background(&self) -> &MetricField {
        &self.h
    }

    pub fn context(&self) -> &FlowContext {
        self.ctx
    }

    /// The inhomogeneous term `I_h = T(h)`.
    pub fn inhomogeneous(&self) -> &TensorField {
        &self.i_h
    }

    /// The linear term `L_h v`.
    pub fn linear_apply(&self, v: &TensorField) -> Result<TensorField> {
        linearize_at(self.ctx, &self.h, v)
    }

    /// The remainder `Q_h(v) = T(h + v) - I_h - L_h v`; bounded by
    /// `C ||v||^2` for `v` in a fixed ball around zero.
    pub fn quadratic_apply(&self, v: &TensorField) -> Result<TensorField> {
        let mut g = self.h.metric().clone();
        g.axpy(1.0, v)?;
        let full = self.ctx.rhs_of_field(&g)?;
        let lin = self.linear_apply(v)?;
        let mut q = full.sub(&self.i_h)?;
        q.axpy(-1.0, &lin)?;
        Ok(q)
    }
}

/// Split the flow operator around `h`, caching `I_h = T(h)`.
pub fn taylor_split<'a>(ctx: &'a FlowContext, h: &MetricField) -> Result<TaylorSplit<'a>> {
    let i_h = ctx.rhs(h)?;
    Ok(TaylorSplit { ctx, h: h.clone(), i_h })
}

/// Frobenius square of a packed symmetric matrix (off-diagonals count twice).
fn packed_frob2(n: usize, packed: &[f64]) -> f64 {
    let mut s = 0.0;
    let mut c = 0;
    for i in 0..n {
        for j in i..n {
            let w = if i == j { 1.0 } else { 2.0 };
            s += w * packed[c] * packed[c];
            c += 1;
        }
    }
    s
}

/// Physical wavenumber of an integer mode vector.
fn mode_wavenumber(grid: &crate::grid::Grid, xi: &[i64]) -> Vec<f64> {
    (0..grid.dim())
        .map(|a| 2.0 * std::f64::consts::PI * xi[a] as f64 / grid.periods()[a])
        .collect()
}

/// Newton divided differences; the last entry is the leading coefficient.
fn divided_differences(xs: &[f64], ys: &[f64]) -> Vec<f64> {
    let mut dd = ys.to_vec();
    for level in 1..xs.len() {
        for i in (level..xs.len()).rev() {
            dd[i] = (dd[i] - dd[i - 1]) / (xs[i] - xs[i - level]);
        }
    }
    dd
}

fn newton_eval(xs: &[f64], dd: &[f64], x: f64) -> f64 {
    let mut acc = dd[dd.len() - 1];
    for i in (0..dd.len() - 1).rev() {
        acc = acc * (x - xs[i]) + dd[i];
    }
    acc
}

fn validate_probe(grid: &crate::grid::Grid, xi: &[i64], t_max: usize) -> Result<()> {
    if xi.len() != grid.dim() {
        return Err(GeomError::ShapeMismatch(format!(
            "mode vector has {} entries on a {}-dimensional grid",
            xi.len(),
            grid.dim()
        )));
    }
    if xi.iter().all(|&x| x == 0) {
        return Err(GeomError::InvalidArgument("probe mode must be nonzero".into()));
    }
    if grid.scheme() != Scheme::Spectral {
        return Err(GeomError::InvalidArgument(
            "symbol extraction needs a spectral grid; finite-difference symbols are not polynomial in the mode".into(),
        ));
    }
    // The probe ladder t*xi for t = 1..t_max must stay strictly below the
    // Nyquist frequency, and two ladder modes must never alias onto each
    // other; both hold when 2 t_max |xi_a| < N_a on every axis.
    for a in 0..grid.dim() {
        if 2 * t_max * xi[a].unsigned_abs() as usize >= grid.sizes()[a] {
            return Err(GeomError::InvalidArgument(format!(
                "mode {xi:?} with probes up to {t_max}x exceeds half the Nyquist band on axis {a}"
            )));
        }
    }
    Ok(())
}

/// Principal symbol of the linearized flow at `h`, frozen at grid point 0
/// and contracted twice with the direction `eta` (packed symmetric, length
/// n(n+1)/2).
///
/// Plane-wave probes `eta cos(t xi . x)` for `t = 1..=m+1` determine an even
/// polynomial of degree `2m` in `t`; the value at `t = m+2` is held out as a
/// fit residual check and trips `InconclusiveFit` when the operator is not
/// of order `2m`. Returns the top coefficient with the sign flipped, so
/// heat-like operators give `+Lambda |xi|^{2m} |eta|^2`.
pub fn principal_symbol(
    spec: FlowSpec,
    h: &MetricField,
    xi: &[i64],
    eta: &[f64],
) -> Result<f64> {
    let caller_grid = h.grid_arc();
    let n = caller_grid.dim();
    let m = spec.kind.half_order();
    let t_max = m + 2;
    validate_probe(&caller_grid, xi, t_max)?;
    let ncomp = n * (n + 1) / 2;
    if eta.len() != ncomp {
        return Err(GeomError::ShapeMismatch(format!(
            "eta has {} entries, expected packed length {ncomp}",
            eta.len()
        )));
    }
    let eta2 = packed_frob2(n, eta);
    if eta2 == 0.0 {
        return Ok(0.0);
    }

    // The frozen background is constant, so the linear response to the
    // ladder probe is exactly band-limited and independent of the grid size
    // above the aliasing guard. Evaluate on the smallest valid grid.
    let sizes: Vec<usize> = (0..n)
        .map(|a| {
            let need = 2 * t_max * xi[a].unsigned_abs() as usize + 2;
            need.clamp(crate::grid::Grid::MIN_SIZE, caller_grid.sizes()[a])
        })
        .collect();
    let grid = Arc::new(crate::grid::Grid::new(
        &sizes,
        caller_grid.periods(),
        Scheme::Spectral,
    )?);
    let np = grid.npoints();

    let hc = {
        let flat = MetricField::flat(grid.clone())?;
        let mut g = flat.metric().like();
        for c in 0..ncomp {
            let v = h.metric().comp(c)[0];
            g.data_mut()[c * np..(c + 1) * np].fill(v);
        }
        MetricField::new(g)?
    };
    // The gauge term must be built against the same frozen background,
    // otherwise reference Christoffel symbols reintroduce x-dependence.
    let ctx = FlowContext::new(spec, hc.clone())?;

    let k = mode_wavenumber(&grid, xi);
    let phase: Vec<f64> = (0..np)
        .map(|p| {
            let x = grid.coords_flat(p);
            (0..n).map(|a| k[a] * x[a]).sum()
        })
        .collect();

    let mut probe = hc.metric().like();
    {
        let data = probe.data_mut();
        for (p, &ph) in phase.iter().enumerate() {
            let s: f64 = (1..=t_max).map(|t| (t as f64 * ph).cos()).sum();
            for c in 0..ncomp {
                data[c * np + p] = eta[c] * s;
            }
        }
    }

    let response = linearize_at(&ctx, &hc, &probe)?;

    // Project the response onto each ladder mode; lattice orthogonality of
    // the cosines is exact below half Nyquist, so y(t) picks out the mode
    // t*xi alone and equals Re<sigma(i t k) eta, eta>, an even polynomial
    // in t of degree 2m.
    let mut y = vec![0.0f64; t_max];
    for (ti, yt) in y.iter_mut().enumerate() {
        let t = (ti + 1) as f64;
        let mut acc = 0.0;
        let mut c = 0;
        for i in 0..n {
            for j in i..n {
                let w = if i == j { 1.0 } else { 2.0 };
                let lane = response.comp(c);
                let mut dot = 0.0;
                for (p, &ph) in phase.iter().enumerate() {
                    dot += lane[p] * (t * ph).cos();
                }
                acc += w * eta[c] * dot;
                c += 1;
            }
        }
        *yt = 2.0 * acc / np as f64;
    }

    let k2: f64 = k.iter().map(|v| v * v).sum();
    let scale = y.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
    if scale <= 1e-9 * k2.powi(m as i32) * eta2 {
        // Degenerate direction: the operator annihilates the probe.
        return Ok(0.0);
    }

    let nodes: Vec<f64> = (1..=m + 1).map(|t| (t * t) as f64).collect();
    let dd = divided_differences(&nodes, &y[..m + 1]);
    let check = ((m + 2) * (m + 2)) as f64;
    let predicted = newton_eval(&nodes, &dd, check);
    let residual = (y[m + 1] - predicted).abs() / scale;
    if residual > FIT_TOL {
        return Err(GeomError::InconclusiveFit { residual, tol: FIT_TOL });
    }
    Ok(-dd[m])
}

/// One symbol sample: integer mode, packed direction, raw and normalized value.
#[derive(Debug, Clone, Serialize)]
pub struct SymbolSample {
    pub xi: Vec<i64>,
    pub eta: Vec<f64>,
    pub value: f64,
    pub normalized: f64,
}

/// Outcome of an ellipticity scan: the smallest normalized symbol over all
/// samples and whether it clears the threshold.
#[derive(Debug, Clone, Serialize)]
pub struct SymbolReport {
    pub order: usize,
    pub lambda_est: f64,
    pub threshold: f64,
    pub pass: bool,
    pub samples: Vec<SymbolSample>,
}

/// Sample the normalized principal symbol over random modes and directions.
///
/// Coefficients are frozen at a random grid point per sample. Every third
/// direction is a gauge direction `eta = sym(k (x) w)`, which the
/// unadjusted flows annihilate; with the DeTurck term the symbol stays
/// uniformly positive. `lambda_est` is the minimum of
/// `symbol / (|k|^{2m} |eta|^2)` and the scan passes when it reaches
/// `threshold` (use [`LAMBDA_THRESHOLD`] by default).
pub fn ellipticity_check(
    spec: FlowSpec,
    h: &MetricField,
    sample_count: usize,
    seed: u64,
    threshold: f64,
) -> Result<SymbolReport> {
    if sample_count < 50 {
        return Err(GeomError::InvalidArgument(format!(
            "ellipticity scan needs at least 50 samples, got {sample_count}"
        )));
    }
    let grid = h.grid_arc();
    let n = grid.dim();
    let np = grid.npoints();
    let m = spec.kind.half_order();
    let t_max = m + 2;
    let ncomp = n * (n + 1) / 2;

    // Keep base modes in the lowest quarter of the frequency band so the
    // whole probe ladder stays clear of aliasing.
    let bounds: Vec<i64> = (0..n)
        .map(|a| {
            let b = grid.sizes()[a] / (4 * t_max);
            b.max(1) as i64
        })
        .collect();
    for a in 0..n {
        if 2 * t_max * bounds[a] as usize >= grid.sizes()[a] {
            return Err(GeomError::InvalidArgument(format!(
                "grid axis {a} too coarse for order-{} symbol probes",
                2 * (m + 1)
            )));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut samples = Vec::with_capacity(sample_count);
    let mut lambda_est = f64::INFINITY;
    for s in 0..sample_count {
        let mut xi = vec![0i64; n];
        while xi.iter().all(|&x| x == 0) {
            for (a, x) in xi.iter_mut().enumerate() {
                *x = rng.gen_range(-bounds[a]..=bounds[a]);
            }
        }
        let k = mode_wavenumber(&grid, &xi);
        let k2: f64 = k.iter().map(|v| v * v).sum();

        let mut eta = vec![0.0f64; ncomp];
        if s % 3 == 2 {
            // Gauge direction sym(k (x) w): the image of the linearized
            // Lie-derivative map, degenerate for the unadjusted flows.
            let w: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let mut c = 0;
            for i in 0..n {
                for j in i..n {
                    eta[c] = 0.5 * (k[i] * w[j] + k[j] * w[i]);
                    c += 1;
                }
            }
        } else {
            for e in eta.iter_mut() {
                *e = rng.gen_range(-1.0..1.0);
            }
        }
        let norm = packed_frob2(n, &eta).sqrt();
        if norm < 1e-8 {
            continue;
        }
        for e in eta.iter_mut() {
            *e /= norm;
        }

        let hc = frozen_at(h, rng.gen_range(0..np))?;
        let value = principal_symbol(spec, &hc, &xi, &eta)?;
        let normalized = value / k2.powi(m as i32);
        lambda_est = lambda_est.min(normalized);
        samples.push(SymbolSample { xi, eta, value, normalized });
    }

    Ok(SymbolReport {
        order: 2 * m,
        lambda_est,
        threshold,
        pass: lambda_est >= threshold,
        samples,
    })
}

/// Residuals of the leading-term model across a ladder of probe modes.
#[derive(Debug, Clone, Serialize)]
pub struct CancellationReport {
    pub multipliers: Vec<usize>,
    /// `||L_h v - model(v)||_inf / ||model(v)||_inf` per multiplier.
    pub residuals: Vec<f64>,
    /// Successive residual ratios; below one means the gap is lower order.
    pub ratios: Vec<f64>,
}

/// Apply the variable-coefficient model Laplacian `h^{ab} d_a d_b`
/// componentwise, `iterations` times, then scale.
fn model_power(
    h: &MetricField,
    v: &TensorField,
    iterations: usize,
    scale: f64,
) -> Result<TensorField> {
    let grid = v.grid();
    let n = grid.dim();
    let np = grid.npoints();
    let mut w = v.clone();
    for _ in 0..iterations {
        let mut acc = w.like();
        for a in 0..n {
            let daa = partial_derivative(&w, a, 2)?;
            for c in 0..w.ncomp() {
                let src = daa.comp(c);
                let base = c * np;
                for p in 0..np {
                    acc.data_mut()[base + p] += h.inv_value(p, a, a) * src[p];
                }
            }
            for b in a + 1..n {
                let dab = partial_derivative(&partial_derivative(&w, a, 1)?, b, 1)?;
                for c in 0..w.ncomp() {
                    let src = dab.comp(c);
                    let base = c * np;
                    for p in 0..np {
                        acc.data_mut()[base + p] += 2.0 * h.inv_value(p, a, b) * src[p];
                    }
                }
            }
        }
        w = acc;
    }
    Ok(w.scaled(scale))
}

/// Check that the gauge-adjusted linearization matches its leading-order
/// model up to terms of lower order in the probe frequency.
///
/// For each multiplier `mu` the probe is `eta cos(mu xi . x)`; the model is
/// `(-1)^p (h^{ab} d_a d_b)^{p+1}` applied componentwise (`-1/4 (h^{ab}
/// d_a d_b)^2` for the fourth-order obstruction flow). Relative residuals
/// scale like `1/|k|`, so doubling the multiplier should roughly halve
/// them; at a flat background they vanish to rounding.
pub fn verify_leading_cancellation(
    spec: FlowSpec,
    h: &MetricField,
    xi: &[i64],
    eta: &[f64],
    multipliers: &[usize],
) -> Result<CancellationReport> {
    let grid = h.grid_arc();
    let n = grid.dim();
    let np = grid.npoints();
    let ncomp = n * (n + 1) / 2;
    if eta.len() != ncomp {
        return Err(GeomError::ShapeMismatch(format!(
            "eta has {} entries, expected packed length {ncomp}",
            eta.len()
        )));
    }
    if multipliers.is_empty() {
        return Err(GeomError::InvalidArgument("need at least one probe multiplier".into()));
    }
    let max_mult = *multipliers.iter().max().expect("nonempty");
    validate_probe(&grid, xi, max_mult)?;

    let (iterations, scale) = match spec.kind {
        FlowKind::PLapRic { p } => (p + 1, if p % 2 == 0 { 1.0 } else { -1.0 }),
        FlowKind::Obstruction4 => (2, -0.25),
    };
    let ctx = FlowContext::new(spec, h.clone())?;
    let k = mode_wavenumber(&grid, xi);

    let mut residuals = Vec::with_capacity(multipliers.len());
    for &mu in multipliers {
        let probe = TensorField::from_fn(
            grid_arc_of(h),
            h.metric().variances(),
            true,
            |x, idx| {
                let ph: f64 = (0..n).map(|a| k[a] * x[a]).sum();
                let c = pack_of(n, idx[0], idx[1]);
                eta[c] * (mu as f64 * ph).cos()
            },
        )?;
        let lin = linearize_with_tol(&ctx, h, &probe, CANCELLATION_LIN_TOL)?;
        let model = model_power(h, &probe, iterations, scale)?;
        let denom = model.max_abs();
        if denom == 0.0 {
            return Err(GeomError::InvalidArgument(
                "leading-order model vanished on the probe".into(),
            ));
        }
        residuals.push(lin.sub(&model)?.max_abs() / denom);
    }
    let _ = np;
    let ratios = residuals.windows(2).map(|w| w[1] / w[0].max(f64::MIN_POSITIVE)).collect();
    Ok(CancellationReport { multipliers: multipliers.to_vec(), residuals, ratios })
}

fn grid_arc_of(h: &MetricField) -> Arc<crate::grid::Grid> {
    h.grid_arc()
}

fn pack_of(n: usize, i: usize, j: usize) -> usize {
    let (a, b) = if i <= j { (i, j) } else { (j, i) };
    a * n - (a * a - a) / 2 + (b - a)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fft::fourier_multiplier;
    use crate::field::Variance;
    use crate::grid::Grid;
    use approx::assert_relative_eq;

    fn flat(dim: usize, nsize: usize) -> MetricField {
        let grid = Arc::new(Grid::square(dim, nsize, Scheme::Spectral).unwrap());
        MetricField::flat(grid).unwrap()
    }

    fn conformal(dim: usize, nsize: usize, amp: f64) -> MetricField {
        let grid = Arc::new(Grid::square(dim, nsize, Scheme::Spectral).unwrap());
        let u = TensorField::scalar_from_fn(grid, |x| {
            amp * (x[0].sin() * x[1].cos() + 0.6 * (x[1] - 0.3).sin())
        });
        MetricField::conformal(&u).unwrap()
    }

    fn band_limited_direction(grid: Arc<Grid>, seed: u64) -> TensorField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = grid.dim();
        let coef: Vec<(f64, f64, Vec<f64>)> = (0..n * (n + 1) / 2)
            .map(|_| {
                (
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                    (0..n).map(|_| rng.gen_range(-2.0f64..2.0).round()).collect(),
                )
            })
            .collect();
        TensorField::from_fn(grid, &[Variance::Down, Variance::Down], true, |x, idx| {
            let c = pack_of(x.len(), idx[0], idx[1]);
            let (a, b, ref modes) = coef[c];
            let ph: f64 = modes.iter().zip(x).map(|(m, xi)| m * xi).sum();
            a * ph.cos() + b * ph.sin()
        })
        .unwrap()
    }

    fn ricci_spec() -> FlowSpec {
        FlowSpec::new(FlowKind::PLapRic { p: 0 })
    }

    #[test]
    fn zero_direction_linearizes_to_zero() {
        let h = flat(2, 16);
        let ctx = FlowContext::new(ricci_spec(), h.clone()).unwrap();
        let v = h.metric().like();
        let lv = linearize_at(&ctx, &h, &v).unwrap();
        assert_eq!(lv.max_abs(), 0.0);
    }

    #[test]
    fn linearization_is_linear() {
        let h = conformal(2, 16, 0.05);
        let ctx = FlowContext::new(ricci_spec(), h.clone()).unwrap();
        let v1 = band_limited_direction(h.grid_arc(), 11);
        let v2 = band_limited_direction(h.grid_arc(), 12);
        let mut combo = v1.scaled(0.3);
        combo.axpy(1.7, &v2).unwrap();
        let lhs = linearize_at(&ctx, &h, &combo).unwrap();
        let mut rhs = linearize_at(&ctx, &h, &v1).unwrap().scaled(0.3);
        rhs.axpy(1.7, &linearize_at(&ctx, &h, &v2).unwrap()).unwrap();
        let rel = lhs.sub(&rhs).unwrap().max_abs() / lhs.max_abs();
        assert!(rel < 1e-8, "linearity violated: rel {rel:.3e}");
    }

    #[test]
    fn adjusted_ricci_linearization_at_flat_is_laplacian() {
        let h = flat(2, 16);
        let ctx = FlowContext::new(ricci_spec(), h.clone()).unwrap();
        let v = band_limited_direction(h.grid_arc(), 3);
        let lv = linearize_at(&ctx, &h, &v).unwrap();
        let lap = fourier_multiplier(&v, |k| -(k.iter().map(|x| x * x).sum::<f64>())).unwrap();
        let rel = lv.sub(&lap).unwrap().max_abs() / lap.max_abs();
        assert!(rel < 1e-8, "flat linearization is not the Laplacian: rel {rel:.3e}");
    }

    #[test]
    fn taylor_split_reproduces_operator() {
        let h = conformal(2, 16, 0.05);
        let ctx = FlowContext::new(ricci_spec(), h.clone()).unwrap();
        let split = taylor_split(&ctx, &h).unwrap();
        let direct = ctx.rhs(&h).unwrap();
        assert!(split.inhomogeneous().sub(&direct).unwrap().max_abs() < 1e-12);

        // Q(s v) must scale quadratically in s.
        let v = band_limited_direction(h.grid_arc(), 21).scaled(0.02);
        let q1 = split.quadratic_apply(&v).unwrap().max_abs();
        let q2 = split.quadratic_apply(&v.scaled(0.5)).unwrap().max_abs();
        let ratio = q1 / q2;
        assert!(
            (ratio - 4.0).abs() < 1.0,
            "remainder is not quadratic: ratio {ratio:.3}"
        );
    }

    #[test]
    fn quadratic_remainder_difference_is_lipschitz_in_the_gap() {
        let h = conformal(2, 16, 0.05);
        let ctx = FlowContext::new(ricci_spec(), h.clone()).unwrap();
        let split = taylor_split(&ctx, &h).unwrap();
        let v = band_limited_direction(h.grid_arc(), 31).scaled(0.02);
        let w = band_limited_direction(h.grid_arc(), 32).scaled(0.02);
        let qv = split.quadratic_apply(&v).unwrap();
        let qw = split.quadratic_apply(&w).unwrap();
        let gap = qv.sub(&qw).unwrap().max_abs();
        let bound = (v.max_frobenius() + w.max_frobenius())
            * v.sub(&w).unwrap().max_frobenius();
        // The constant is operator-dependent; what matters is that the
        // difference of remainders is controlled by the difference of
        // arguments times the combined size.
        assert!(gap < 50.0 * bound, "gap {gap:.3e} vs bound {bound:.3e}");
    }

    #[test]
    fn heat_symbol_at_flat_background() {
        let h = flat(2, 16);
        let eta = [0.7, -0.2, 0.4];
        let xi = [1i64, 2];
        let value = principal_symbol(ricci_spec(), &h, &xi, &eta).unwrap();
        let k2 = 5.0;
        let eta2 = packed_frob2(2, &eta);
        assert_relative_eq!(value, k2 * eta2, max_relative = 1e-7);
    }

    #[test]
    fn higher_order_symbols_at_flat_background() {
        let h = flat(2, 16);
        let eta = [0.5, 0.3, -0.8];
        let eta2 = packed_frob2(2, &eta);
        for p in [1usize, 2] {
            let spec = FlowSpec::new(FlowKind::PLapRic { p });
            let xi = [1i64, 1];
            let value = principal_symbol(spec, &h, &xi, &eta).unwrap();
            let expect = 2f64.powi((p + 1) as i32) * eta2;
            assert_relative_eq!(value, expect, max_relative = 1e-6);
        }
    }

    #[test]
    fn symbol_is_homogeneous_and_quadratic_in_eta() {
        let h = flat(2, 16);
        let eta = [0.4, 0.1, -0.3];
        let spec = ricci_spec();
        let v1 = principal_symbol(spec, &h, &[1, 0], &eta).unwrap();
        let v2 = principal_symbol(spec, &h, &[2, 0], &eta).unwrap();
        assert_relative_eq!(v2 / v1, 4.0, max_relative = 1e-6);
        let doubled: Vec<f64> = eta.iter().map(|e| 2.0 * e).collect();
        let v4 = principal_symbol(spec, &h, &[1, 0], &doubled).unwrap();
        assert_relative_eq!(v4 / v1, 4.0, max_relative = 1e-6);
    }

    #[test]
    fn symbol_is_isotropic_at_flat_background() {
        let h = flat(2, 16);
        let eta = [0.9, 0.2, 0.5];
        let a = principal_symbol(ricci_spec(), &h, &[1, 0], &eta).unwrap();
        let b = principal_symbol(ricci_spec(), &h, &[0, 1], &eta).unwrap();
        assert_relative_eq!(a, b, max_relative = 1e-8);
    }

    #[test]
    fn zero_eta_gives_zero_symbol() {
        let h = flat(2, 16);
        let value = principal_symbol(ricci_spec(), &h, &[1, 0], &[0.0, 0.0, 0.0]).unwrap();
        assert_eq!(value, 0.0);
    }

    #[test]
    fn obstruction_symbol_at_flat_background_is_one_quarter() {
        let h = flat(4, 12);
        let spec = FlowSpec::new(FlowKind::Obstruction4);
        let mut eta = [0.0f64; 10];
        let vals = [0.6, -0.1, 0.2, 0.05, 0.4, -0.3, 0.15, 0.5, -0.2, 0.35];
        eta.copy_from_slice(&vals);
        let eta2 = packed_frob2(4, &eta);
        let value = principal_symbol(spec, &h, &[1, 0, 0, 0], &eta).unwrap();
        assert_relative_eq!(value, 0.25 * eta2, max_relative = 1e-6);
    }

    #[test]
    fn ellipticity_scan_passes_with_gauge_adjustment() {
        let h = flat(2, 16);
        let report = ellipticity_check(ricci_spec(), &h, 50, 7, LAMBDA_THRESHOLD).unwrap();
        assert!(report.pass);
        assert_relative_eq!(report.lambda_est, 1.0, max_relative = 1e-6);
        assert_eq!(report.order, 2);
        assert_eq!(report.samples.len(), 50);
    }

    #[test]
    fn ellipticity_scan_fails_without_gauge_adjustment() {
        let h = flat(2, 16);
        let spec = FlowSpec::without_gauge(FlowKind::PLapRic { p: 0 });
        let report = ellipticity_check(spec, &h, 50, 7, LAMBDA_THRESHOLD).unwrap();
        assert!(!report.pass, "unadjusted flow should be degenerate");
        assert!(
            report.lambda_est < 1e-3,
            "gauge directions should pull the minimum down, got {:.3e}",
            report.lambda_est
        );
        // Pure gauge samples are annihilated outright.
        assert!(report.samples.iter().any(|s| s.normalized == 0.0));
    }

    #[test]
    fn symbol_report_serializes() {
        let h = flat(2, 16);
        let report = ellipticity_check(ricci_spec(), &h, 50, 3, LAMBDA_THRESHOLD).unwrap();
        let text = serde_json::to_string(&report).unwrap();
        assert!(text.contains("lambda_est"));
        assert!(text.contains("\"order\":2"));
    }

    #[test]
    fn leading_model_is_exact_at_flat_background() {
        let h = flat(2, 16);
        let eta = [0.3, -0.5, 0.2];
        let report =
            verify_leading_cancellation(ricci_spec(), &h, &[1, 0], &eta, &[1, 2]).unwrap();
        for r in &report.residuals {
            assert!(*r < 1e-10, "flat residual {r:.3e}");
        }
    }

    #[test]
    fn leading_residual_halves_with_frequency() {
        let h = conformal(2, 32, 0.05);
        let eta = [0.6, 0.2, -0.4];
        let report =
            verify_leading_cancellation(ricci_spec(), &h, &[1, 0], &eta, &[1, 2, 4]).unwrap();
        for ratio in &report.ratios {
            assert!(
                *ratio < 0.7,
                "residual ratio {ratio:.3} not decreasing: {:?}",
                report.residuals
            );
        }
    }

    #[test]
    fn probe_guard_rejects_out_of_band_modes() {
        let h = flat(2, 16);
        let eta = [1.0, 0.0, 0.0];
        // t_max = 3 for p = 0, so |xi| = 3 puts the ladder at Nyquist.
        let err = principal_symbol(ricci_spec(), &h, &[3, 0], &eta).unwrap_err();
        assert!(matches!(err, GeomError::InvalidArgument(_)));
    }
}
