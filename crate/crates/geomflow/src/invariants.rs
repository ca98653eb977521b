//! Residual suites for the structural identities of the fourth-order
//! obstruction tensor and for flow trajectories.
//!
//! Discrete derivatives are not derivations, so algebraic identities like
//! trace- and divergence-freeness hold only up to truncation error. The
//! suite therefore reports residuals per resolution together with the
//! refinement rate, which is the meaningful pass/fail signal.

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::curvature::{bach, christoffel, divergence, laplacian, riemann_ricci_scalar};
use crate::error::{GeomError, Result};
use crate::field::{MetricField, TensorField, Variance};
use crate::flows::naturality_check;
use crate::grid::Grid;

/// Structural identities the suite can measure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum InvariantKind {
    /// `|trace_g B|_inf`, zero in the continuum at n = 4.
    TraceFree,
    /// `|div_g B|_inf`, zero in the continuum at n = 4.
    DivFree,
    /// `||B(rho^2 g) - rho^{-2} B(g)||_inf`, the weight `2 - n` at n = 4.
    ConformalCovariance,
    /// Commutation of the operator with a small periodic diffeomorphism.
    Naturality,
    /// Drift `max_t ||g(t) - g(0)||_inf` of a trajectory.
    Stationarity,
    /// Oscillation of scalar curvature on the final slice; meaningful when
    /// the flow right-hand side is small there.
    SteadyState,
}

impl fmt::Display for InvariantKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            InvariantKind::TraceFree => "trace_free",
            InvariantKind::DivFree => "div_free",
            InvariantKind::ConformalCovariance => "conformal_covariance",
            InvariantKind::Naturality => "naturality",
            InvariantKind::Stationarity => "stationarity",
            InvariantKind::SteadyState => "steady_state",
        };
        write!(f, "{name}")
    }
}

/// One residual across the supplied resolutions.
#[derive(Debug, Clone, Serialize)]
pub struct InvariantResidual {
    pub kind: InvariantKind,
    /// Residual per input, in the order supplied.
    pub values: Vec<f64>,
    /// `log(r_i / r_{i+1}) / log(N_{i+1} / N_i)` per consecutive pair;
    /// empty when fewer than two resolutions are supplied.
    pub rates: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct InvariantReport {
    pub residuals: Vec<InvariantResidual>,
}

/// Trace of a packed symmetric rank-2 field against the inverse metric.
fn metric_trace(m: &MetricField, b: &TensorField) -> f64 {
    let n = b.grid().dim();
    let np = b.npoints();
    let mut worst = 0.0f64;
    for p in 0..np {
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                s += m.inv_value(p, i, j) * b.value(p, &[i.min(j), i.max(j)]);
            }
        }
        worst = worst.max(s.abs());
    }
    worst
}

/// Small analytic periodic displacement, two low modes per component,
/// deterministic in the seed. The gradient stays below `2 amp`, so the map
/// `x + psi(x)` is invertible for `amp` well under 1/2.
pub fn random_diffeo(grid: Arc<Grid>, amp: f64, seed: u64) -> Result<TensorField> {
    let n = grid.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let modes: Vec<(usize, f64, f64, usize, f64, f64)> = (0..n)
        .map(|_| {
            (
                rng.gen_range(0..n),
                rng.gen_range(0.0..std::f64::consts::TAU),
                rng.gen_range(0.5..1.0),
                rng.gen_range(0..n),
                rng.gen_range(0.0..std::f64::consts::TAU),
                rng.gen_range(0.5..1.0),
            )
        })
        .collect();
    TensorField::from_fn(grid, &[Variance::Up], false, |x, idx| {
        let (a1, p1, c1, a2, p2, c2) = modes[idx[0]];
        0.5 * amp * (c1 * (x[a1] + p1).sin() + c2 * (x[a2] + p2).sin())
    })
}

fn bach_of(m: &MetricField) -> Result<TensorField> {
    let gamma = christoffel(m)?;
    let pack = riemann_ricci_scalar(m, &gamma)?;
    bach(m, &gamma, &pack)
}

/// Measure the requested identities on each metric. Inputs should be the
/// same geometry sampled at increasing resolutions; rates are computed
/// between consecutive pairs. The conformal check needs one positive
/// scalar factor per input. All randomness is fixed by `seed`.
pub fn invariant_suite(
    metrics: &[MetricField],
    rho: Option<&[TensorField]>,
    which: &[InvariantKind],
    seed: u64,
) -> Result<InvariantReport> {
    if metrics.is_empty() {
        return Err(GeomError::InvalidArgument("no metrics supplied".into()));
    }
    let mut residuals = Vec::with_capacity(which.len());
    for &kind in which {
        let mut values = Vec::with_capacity(metrics.len());
        for (i, m) in metrics.iter().enumerate() {
            let value = match kind {
                InvariantKind::TraceFree => metric_trace(m, &bach_of(m)?),
                InvariantKind::DivFree => {
                    let gamma = christoffel(m)?;
                    let pack = riemann_ricci_scalar(m, &gamma)?;
                    let b = bach(m, &gamma, &pack)?;
                    divergence(&b.to_full(), m, &gamma, 0)?.max_abs()
                }
                InvariantKind::ConformalCovariance => {
                    let rho_i = rho
                        .and_then(|r| r.get(i))
                        .ok_or_else(|| {
                            GeomError::InvalidArgument(
                                "conformal covariance needs a scalar factor per metric".into(),
                            )
                        })?;
                    conformal_covariance_residual(m, rho_i)?
                }
                InvariantKind::Naturality => {
                    let psi = random_diffeo(m.grid_arc(), 0.05, seed)?;
                    if m.grid().dim() == 4 {
                        naturality_check(m, &psi, bach_of)?
                    } else {
                        naturality_check(m, &psi, |g| {
                            let gamma = christoffel(g)?;
                            Ok(riemann_ricci_scalar(g, &gamma)?.ricci)
                        })?
                    }
                }
                InvariantKind::Stationarity | InvariantKind::SteadyState => {
                    return Err(GeomError::InvalidArgument(format!(
                        "{kind} needs a trajectory, not a metric"
                    )));
                }
            };
            values.push(value);
        }
        let rates = refinement_rates(metrics, &values);
        residuals.push(InvariantResidual { kind, values, rates });
    }
    Ok(InvariantReport { residuals })
}

/// `||B(rho^2 g) - rho^{-2} B(g)||_inf` for a positive scalar factor.
pub fn conformal_covariance_residual(m: &MetricField, rho: &TensorField) -> Result<f64> {
    if rho.order() != 0 {
        return Err(GeomError::InvalidArgument("conformal factor must be scalar".into()));
    }
    m.metric().check_same_grid(rho)?;
    if rho.data().iter().any(|&v| v <= 0.0) {
        return Err(GeomError::InvalidArgument("conformal factor must be positive".into()));
    }
    let np = m.metric().npoints();
    let mut scaled = m.metric().clone();
    for c in 0..scaled.ncomp() {
        let base = c * np;
        for p in 0..np {
            scaled.data_mut()[base + p] *= rho.data()[p] * rho.data()[p];
        }
    }
    let b_scaled = bach_of(&MetricField::new(scaled)?)?;
    let b = bach_of(m)?;
    let mut expect = b;
    for c in 0..expect.ncomp() {
        let base = c * np;
        for p in 0..np {
            expect.data_mut()[base + p] /= rho.data()[p] * rho.data()[p];
        }
    }
    Ok(b_scaled.sub(&expect)?.max_abs())
}

fn refinement_rates(metrics: &[MetricField], values: &[f64]) -> Vec<f64> {
    let mut rates = Vec::new();
    for i in 0..values.len().saturating_sub(1) {
        let n0 = metrics[i].grid().sizes()[0] as f64;
        let n1 = metrics[i + 1].grid().sizes()[0] as f64;
        if n1 > n0 && values[i + 1] > 0.0 && values[i] > 0.0 {
            rates.push((values[i] / values[i + 1]).ln() / (n1 / n0).ln());
        }
    }
    rates
}

/// Trajectory-level residuals: stationarity drift and final-slice scalar
/// curvature oscillation (volume-weighted mean removed).
pub fn trajectory_invariant_suite(
    traj: &crate::evolve::Trajectory,
    which: &[InvariantKind],
) -> Result<InvariantReport> {
    if traj.metrics.is_empty() {
        return Err(GeomError::InvalidArgument("empty trajectory".into()));
    }
    let mut residuals = Vec::with_capacity(which.len());
    for &kind in which {
        let value = match kind {
            InvariantKind::Stationarity => {
                let g0 = traj.metrics[0].metric();
                traj.metrics
                    .iter()
                    .map(|m| m.metric().sub(g0).map(|d| d.max_abs()))
                    .collect::<Result<Vec<_>>>()?
                    .into_iter()
                    .fold(0.0f64, f64::max)
            }
            InvariantKind::SteadyState => {
                let m = traj.metrics.last().expect("nonempty");
                let gamma = christoffel(m)?;
                let pack = riemann_ricci_scalar(m, &gamma)?;
                scalar_oscillation(m, &pack.scalar)?
            }
            other => {
                return Err(GeomError::InvalidArgument(format!(
                    "{other} operates on metrics; use invariant_suite"
                )));
            }
        };
        residuals.push(InvariantResidual { kind, values: vec![value], rates: Vec::new() });
    }
    Ok(InvariantReport { residuals })
}

/// Sup of `|S - mean(S)|` with the volume-weighted mean.
fn scalar_oscillation(m: &MetricField, s: &TensorField) -> Result<f64> {
    let w = m.sqrt_det();
    let np = s.npoints();
    let mut vol = 0.0;
    let mut acc = 0.0;
    for p in 0..np {
        vol += w.data()[p];
        acc += w.data()[p] * s.data()[p];
    }
    let mean = acc / vol;
    Ok(s.data().iter().fold(0.0f64, |m, &v| m.max((v - mean).abs())))
}

/// Volume-weighted mean of `Delta_g S`; vanishes in the continuum by the
/// divergence theorem, up to truncation error discretely.
pub fn laplacian_mean_residual(m: &MetricField) -> Result<f64> {
    let gamma = christoffel(m)?;
    let pack = riemann_ricci_scalar(m, &gamma)?;
    let lap = laplacian(&pack.scalar, m, &gamma)?;
    let w = m.sqrt_det();
    let np = lap.npoints();
    let mut vol = 0.0;
    let mut acc = 0.0;
    let mut scale = 0.0f64;
    for p in 0..np {
        vol += w.data()[p];
        acc += w.data()[p] * lap.data()[p];
        scale = scale.max(lap.data()[p].abs());
    }
    Ok((acc / vol).abs() / scale.max(f64::MIN_POSITIVE))
}
