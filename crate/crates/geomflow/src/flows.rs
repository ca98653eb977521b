//! Flow right-hand sides and gauge fixing.
//!
//! Two families are implemented, both with an optional gauge correction
//! that makes the linearized operator strongly parabolic:
//! - `plap:p`: `∂_t g = 2(−1)^{p+1} Δ^p Ric`, order 2(p+1);
//! - `obstruction4`: `∂_t g = B + (1/12)(ΔS) g` on four-dimensional grids,
//!   order 4.
//!
//! The gauge vector is built from `V^k = g^{pq}(Γ^k_{pq}(g) − Γ^k_{pq}(h))`
//! against a fixed reference metric `h`:
//! - `plap:p` uses `W = (−1)^p Δ^p V`;
//! - `obstruction4` uses `W = −¼ ΔV + (1/12) ∇S^♯`, which cancels every
//!   non-Laplacian fourth-order term of the linearization at a flat
//!   background (checked by the symbol tests).

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::curvature::{
    christoffel, covariant_derivative, laplacian, laplacian_p, riemann_ricci_scalar, bach,
    ChristoffelField, CurvaturePack,
};
use crate::algebra::raise_slot;
use crate::error::{GeomError, Result};
use crate::field::{sym_pack, MetricField, TensorField, DOWN, UP};
use crate::grid::Grid;
use crate::interp::Interpolant;

/// Which flow drives the evolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlowKind {
    /// `∂_t g = 2(−1)^{p+1} Δ^p Ric`.
    PLapRic { p: usize },
    /// `∂_t g = B + (1/12)(ΔS) g`, four dimensions only.
    Obstruction4,
}

impl FlowKind {
    /// Differential order `2m` of the flow operator.
    pub fn order(&self) -> usize {
        match self {
            FlowKind::PLapRic { p } => 2 * (p + 1),
            FlowKind::Obstruction4 => 4,
        }
    }

    pub fn half_order(&self) -> usize {
        self.order() / 2
    }

    pub fn check_dimension(&self, grid: &Grid) -> Result<()> {
        if matches!(self, FlowKind::Obstruction4) && grid.dim() != 4 {
            return Err(GeomError::InvalidArgument(format!(
                "obstruction4 flow needs a four-dimensional grid, got {}",
                grid.dim()
            )));
        }
        Ok(())
    }
}

impl fmt::Display for FlowKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FlowKind::PLapRic { p } => write!(f, "plap:{p}"),
            FlowKind::Obstruction4 => write!(f, "obstruction4"),
        }
    }
}

impl FromStr for FlowKind {
    type Err = GeomError;

    fn from_str(s: &str) -> Result<Self> {
        if s == "obstruction4" {
            return Ok(FlowKind::Obstruction4);
        }
        if let Some(rest) = s.strip_prefix("plap:") {
            let p: usize = rest.parse().map_err(|_| {
                GeomError::InvalidArgument(format!("bad Laplacian power in flow '{s}'"))
            })?;
            if p > 4 {
                return Err(GeomError::InvalidArgument(
                    "Laplacian power above 4 is not supported".into(),
                ));
            }
            return Ok(FlowKind::PLapRic { p });
        }
        Err(GeomError::InvalidArgument(format!(
            "unknown flow '{s}' (expected plap:<p> or obstruction4)"
        )))
    }
}

/// Metric used for the operators that turn `V` into `W`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WMetric {
    /// Laplacians and index raising use the evolving metric.
    #[default]
    Evolving,
    /// Laplacians and index raising use the fixed reference metric.
    Background,
}

#[derive(Debug, Clone, Copy)]
pub struct FlowSpec {
    pub kind: FlowKind,
    pub deturck: bool,
    pub w_metric: WMetric,
}

impl FlowSpec {
    pub fn new(kind: FlowKind) -> Self {
        FlowSpec { kind, deturck: true, w_metric: WMetric::Evolving }
    }

    pub fn without_gauge(kind: FlowKind) -> Self {
        FlowSpec { kind, deturck: false, w_metric: WMetric::Evolving }
    }
}

/// Normalization constant of the order-`n` obstruction tensor:
/// `1/(2^{n/2−1}(n/2−2)!(n−2)(n−1))`; 1/12 at n = 4, 1/80 at n = 6.
pub fn cn(n: usize) -> Result<f64> {
    if n % 2 != 0 || n < 4 {
        return Err(GeomError::InvalidArgument(format!(
            "obstruction normalization needs even n ≥ 4, got {n}"
        )));
    }
    let half = n / 2;
    let fact: f64 = (1..=half.saturating_sub(2)).map(|v| v as f64).product();
    Ok(1.0 / (2f64.powi(half as i32 - 1) * fact * ((n - 2) * (n - 1)) as f64))
}

/// `2(−1)^{p+1} Δ^p Ric`, packed symmetric.
pub fn plapric_rhs(
    m: &MetricField,
    gamma: &ChristoffelField,
    pack: &CurvaturePack,
    p: usize,
) -> Result<TensorField> {
    let sign = if p % 2 == 0 { -2.0 } else { 2.0 };
    let mut out = laplacian_p(&pack.ricci, m, gamma, p)?;
    out.scale(sign);
    Ok(out)
}

/// `B + (1/12)(Δ_g S) g`, packed symmetric, four dimensions.
pub fn obstruction_rhs(
    m: &MetricField,
    gamma: &ChristoffelField,
    pack: &CurvaturePack,
) -> Result<TensorField> {
    FlowKind::Obstruction4.check_dimension(m.grid())?;
    let c4 = cn(4)?;
    let mut out = bach(m, gamma, pack)?;
    let lap_s = laplacian(&pack.scalar, m, gamma)?;
    let np = m.grid().npoints();
    let g = m.metric();
    for c in 0..out.ncomp() {
        let gc = g.comp(c);
        let oc = out.comp_mut(c);
        let s = lap_s.data();
        for q in 0..np {
            oc[q] += c4 * s[q] * gc[q];
        }
    }
    Ok(out)
}

/// Gauge vector `V^k = g^{pq}(Γ^k_{pq}(g) − Γ^k_{pq}(h))`, contravariant.
pub fn deturck_vector(
    m: &MetricField,
    gamma: &ChristoffelField,
    gamma_ref: &ChristoffelField,
) -> Result<TensorField> {
    gamma.field().check_same_grid(gamma_ref.field())?;
    let grid = m.grid_arc();
    let n = grid.dim();
    let np = grid.npoints();
    let ginv = m.inverse();
    let mut out = TensorField::zeros(grid, &[UP], false)?;
    for k in 0..n {
        let oc = out.comp_mut(k);
        for pq_a in 0..n {
            for pq_b in 0..n {
                let gi = ginv.comp(sym_pack(n, pq_a, pq_b));
                let ga = gamma.comp(k, pq_a, pq_b);
                let gb = gamma_ref.comp(k, pq_a, pq_b);
                for q in 0..np {
                    oc[q] += gi[q] * (ga[q] - gb[q]);
                }
            }
        }
    }
    Ok(out)
}

/// Gauge field `W` for one flow, built from `V` (and the scalar curvature
/// for the obstruction flow). `wm` controls which metric the outer
/// operators use.
#[derive(Debug, Clone)]
pub struct VectorFieldW {
    pub field: TensorField,
    pub built_with: WMetric,
}

/// `(L_V g)_{ij} = ∇_i V_j + ∇_j V_i` for a contravariant `V`, packed.
pub fn lie_derivative_metric(
    v: &TensorField,
    m: &MetricField,
    gamma: &ChristoffelField,
) -> Result<TensorField> {
    if v.variances() != [UP] {
        return Err(GeomError::InvalidArgument(
            "Lie derivative expects a contravariant vector field".into(),
        ));
    }
    let flat = crate::algebra::lower_slot(v, 0, m)?;
    let grad = covariant_derivative(&flat, gamma)?;
    let mut out = grad.symmetrized()?;
    out.scale(2.0);
    Ok(out)
}

/// Flow plus fixed reference data; the reference connection is cached for
/// the lifetime of a run.
pub struct FlowContext {
    pub spec: FlowSpec,
    reference: MetricField,
    gamma_ref: ChristoffelField,
}

impl FlowContext {
    pub fn new(spec: FlowSpec, reference: MetricField) -> Result<Self> {
        spec.kind.check_dimension(reference.grid())?;
        let gamma_ref = christoffel(&reference)?;
        Ok(FlowContext { spec, reference, gamma_ref })
    }

    pub fn reference(&self) -> &MetricField {
        &self.reference
    }

    pub fn grid(&self) -> Arc<Grid> {
        self.reference.grid_arc()
    }

    pub fn order(&self) -> usize {
        self.spec.kind.order()
    }

    /// Gauge field `W` at the current metric.
    pub fn gauge_field(
        &self,
        m: &MetricField,
        gamma: &ChristoffelField,
        pack: &CurvaturePack,
    ) -> Result<VectorFieldW> {
        let v = deturck_vector(m, gamma, &self.gamma_ref)?;
        let (wm_metric, wm_gamma) = match self.spec.w_metric {
            WMetric::Evolving => (m, gamma),
            WMetric::Background => (&self.reference, &self.gamma_ref),
        };
        let field = match self.spec.kind {
            FlowKind::PLapRic { p } => {
                let mut w = laplacian_p(&v, wm_metric, wm_gamma, p)?;
                if p % 2 == 1 {
                    w.scale(-1.0);
                }
                w
            }
            FlowKind::Obstruction4 => {
                let mut w = laplacian(&v, wm_metric, wm_gamma)?;
                w.scale(-0.25);
                let ds = covariant_derivative(&pack.scalar, wm_gamma)?;
                let grad_s = raise_slot(&ds, 0, wm_metric)?;
                w.axpy(cn(4)?, &grad_s)?;
                w
            }
        };
        Ok(VectorFieldW { field, built_with: self.spec.w_metric })
    }

    /// Full right-hand side at `m`: the flow tensor, plus `L_W g` when the
    /// gauge correction is on. Packed symmetric.
    pub fn rhs(&self, m: &MetricField) -> Result<TensorField> {
        self.reference.metric().check_same_grid(m.metric())?;
        let gamma = christoffel(m)?;
        let pack = riemann_ricci_scalar(m, &gamma)?;
        let mut out = match self.spec.kind {
            FlowKind::PLapRic { p } => plapric_rhs(m, &gamma, &pack, p)?,
            FlowKind::Obstruction4 => obstruction_rhs(m, &gamma, &pack)?,
        };
        if self.spec.deturck {
            let w = self.gauge_field(m, &gamma, &pack)?;
            let lie = lie_derivative_metric(&w.field, m, &gamma)?;
            out.axpy(1.0, &lie)?;
        }
        out.ensure_finite("flow right-hand side")?;
        Ok(out)
    }

    /// Right-hand side for a raw symmetric rank-2 field (validates it as a
    /// metric first).
    pub fn rhs_of_field(&self, g: &TensorField) -> Result<TensorField> {
        let m = MetricField::new(g.clone())?;
        self.rhs(&m)
    }
}

/// Pull a covariant symmetric rank-2 tensor back along the periodic map
/// `f(x) = x + ψ(x)`: `(f*t)_{ij}(x) = ∂_i f^a ∂_j f^b t_{ab}(f(x))`. The
/// Jacobian uses the grid's derivative scheme; off-grid values of `t` come
/// from B-spline interpolation.
pub fn pullback_sym2(t: &TensorField, psi: &TensorField) -> Result<TensorField> {
    if psi.variances() != [UP] {
        return Err(GeomError::InvalidArgument(
            "displacement field must be a contravariant vector".into(),
        ));
    }
    if !(t.order() == 2 && t.is_symmetric()) {
        return Err(GeomError::InvalidArgument(
            "pullback expects a packed symmetric rank-2 field".into(),
        ));
    }
    t.check_same_grid(psi)?;
    psi.ensure_finite("displacement field")?;
    let grid = t.grid_arc();
    let n = grid.dim();
    let np = grid.npoints();

    // Jacobian J[a][i] = ∂_i f^a = δ_ai + ∂_i ψ^a.
    let mut jac = Vec::with_capacity(n * n);
    for a in 0..n {
        let mut single = TensorField::scalar(grid.clone());
        single.data_mut().copy_from_slice(psi.comp(a));
        for i in 0..n {
            jac.push(crate::fft::partial_derivative(&single, i, 1)?);
        }
    }

    let interp = Interpolant::new(t)?;
    let ncomp = t.ncomp();
    let mut out = TensorField::zeros(grid.clone(), &[DOWN, DOWN], true)?;
    let mut buf = vec![0.0f64; ncomp];
    let mut y = vec![0.0f64; n];
    for p in 0..np {
        let x = grid.coords_flat(p);
        for a in 0..n {
            y[a] = x[a] + psi.comp(a)[p];
        }
        interp.eval(&y, &mut buf);
        for i in 0..n {
            for j in i..n {
                let mut acc = 0.0;
                for a in 0..n {
                    let ja = if a == i { 1.0 } else { 0.0 } + jac[a * n + i].data()[p];
                    for b in 0..n {
                        let jb = if b == j { 1.0 } else { 0.0 } + jac[b * n + j].data()[p];
                        acc += ja * jb * buf[sym_pack(n, a, b)];
                    }
                }
                out.comp_mut(sym_pack(n, i, j))[p] = acc;
            }
        }
    }
    out.ensure_finite("pullback")?;
    Ok(out)
}

/// Pull a metric back along `f(x) = x + ψ(x)` (same rule as any covariant
/// rank-2 tensor).
pub fn pullback_metric(g: &MetricField, psi: &TensorField) -> Result<TensorField> {
    pullback_sym2(g.metric(), psi)
}

/// Residual of naturality `op(f*g) − f*(op(g))` in the sup norm, for a
/// covariant symmetric rank-2 valued operator and the diffeomorphism
/// `f(x) = x + ψ(x)`.
pub fn naturality_check(
    g: &MetricField,
    psi: &TensorField,
    op: impl Fn(&MetricField) -> Result<TensorField>,
) -> Result<f64> {
    let pulled = MetricField::new(pullback_metric(g, psi)?)?;
    let lhs = op(&pulled)?;
    let rhs = pullback_sym2(&op(g)?, psi)?;
    Ok(lhs.sub(&rhs)?.max_abs())
}

/// Accumulated conformal factor `ρ_i = exp(∫_0^{t_i} (1/12) Δ_g S dt)`
/// along a stored metric trajectory, trapezoid rule in time. Returns one
/// scalar field per time.
pub fn conformal_rho(times: &[f64], metrics: &[MetricField]) -> Result<Vec<TensorField>> {
    if times.len() != metrics.len() || times.is_empty() {
        return Err(GeomError::InvalidArgument(
            "conformal factor needs matching, non-empty times and metrics".into(),
        ));
    }
    let c4 = cn(4)?;
    let np = metrics[0].grid().npoints();
    let mut phis = Vec::with_capacity(metrics.len());
    for m in metrics {
        let gamma = christoffel(m)?;
        let pack = riemann_ricci_scalar(m, &gamma)?;
        let mut phi = laplacian(&pack.scalar, m, &gamma)?;
        phi.scale(c4);
        phis.push(phi);
    }
    let mut out = Vec::with_capacity(metrics.len());
    let mut integral = TensorField::scalar(metrics[0].grid_arc());
    out.push(integral.map(f64::exp));
    for i in 1..metrics.len() {
        let dt = times[i] - times[i - 1];
        if dt <= 0.0 {
            return Err(GeomError::InvalidArgument(
                "times must be strictly increasing".into(),
            ));
        }
        let prev = phis[i - 1].data();
        let cur = phis[i].data();
        let acc = integral.data_mut();
        for p in 0..np {
            acc[p] += 0.5 * dt * (prev[p] + cur[p]);
        }
        out.push(integral.map(f64::exp));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fft::partial_derivative;
    use crate::grid::Scheme;

    fn conformal_2d(nsize: usize, amp: f64) -> (Arc<Grid>, TensorField, MetricField) {
        let grid = Arc::new(Grid::square(2, nsize, Scheme::Spectral).unwrap());
        let u = TensorField::scalar_from_fn(grid.clone(), move |x| {
            amp * (x[0].sin() * x[1].cos() + 0.5 * (x[1] - 0.2).sin())
        });
        let m = MetricField::conformal(&u).unwrap();
        (grid, u, m)
    }

    #[test]
    fn normalization_constants() {
        assert!((cn(4).unwrap() - 1.0 / 12.0).abs() < 1e-15);
        assert!((cn(6).unwrap() - 1.0 / 80.0).abs() < 1e-15);
        assert!(cn(3).is_err());
        assert!(cn(2).is_err());
    }

    #[test]
    fn flow_kind_parsing_round_trips() {
        for s in ["plap:0", "plap:2", "obstruction4"] {
            let kind: FlowKind = s.parse().unwrap();
            assert_eq!(kind.to_string(), s);
        }
        assert!("plap:x".parse::<FlowKind>().is_err());
        assert!("ricci".parse::<FlowKind>().is_err());
        assert_eq!("plap:1".parse::<FlowKind>().unwrap().order(), 4);
        assert_eq!("obstruction4".parse::<FlowKind>().unwrap().order(), 4);
    }

    #[test]
    fn flat_metrics_are_stationary() {
        let grid2 = Arc::new(Grid::square(2, 8, Scheme::Spectral).unwrap());
        let flat2 = MetricField::flat(grid2).unwrap();
        for p in 0..3 {
            let ctx = FlowContext::new(
                FlowSpec::new(FlowKind::PLapRic { p }),
                flat2.clone(),
            )
            .unwrap();
            let r = ctx.rhs(&flat2).unwrap();
            assert!(r.max_abs() < 1e-11, "plap:{p} flat rhs {:.3e}", r.max_abs());
        }
        let grid4 = Arc::new(Grid::square(4, 8, Scheme::Spectral).unwrap());
        let flat4 = MetricField::flat(grid4).unwrap();
        let ctx = FlowContext::new(FlowSpec::new(FlowKind::Obstruction4), flat4.clone()).unwrap();
        let r = ctx.rhs(&flat4).unwrap();
        assert!(r.max_abs() < 1e-10, "obstruction4 flat rhs {:.3e}", r.max_abs());
    }

    #[test]
    fn ricci_flow_on_surface_matches_conformal_reduction() {
        // ∂_t (e^{2u} δ) = −2Ric = (2Δ₀u) δ.
        let (grid, u, m) = conformal_2d(32, 0.1);
        let ctx = FlowContext::new(
            FlowSpec::without_gauge(FlowKind::PLapRic { p: 0 }),
            MetricField::flat(grid.clone()).unwrap(),
        )
        .unwrap();
        let r = ctx.rhs(&m).unwrap();
        let mut lap_u = partial_derivative(&u, 0, 2).unwrap();
        lap_u.axpy(1.0, &partial_derivative(&u, 1, 2).unwrap()).unwrap();
        let np = grid.npoints();
        let mut worst = 0.0f64;
        for p in 0..np {
            for (i, j, expect_diag) in [(0, 0, true), (1, 1, true), (0, 1, false)] {
                let expect = if expect_diag { 2.0 * lap_u.data()[p] } else { 0.0 };
                let got = r.value(p, &[i, j]);
                worst = worst.max((got - expect).abs());
            }
        }
        assert!(worst < 1e-9, "Ricci flow rhs deviates {worst:.3e}");
    }

    #[test]
    fn gauge_vector_vanishes_within_surface_conformal_class() {
        // On surfaces δ^{pq}Γ^k_{pq} = 0 for conformal metrics, so V ≡ 0
        // whenever both the metric and the reference are conformal.
        let (_, _, m) = conformal_2d(16, 0.1);
        let (_, _, h) = conformal_2d(16, 0.03);
        let gm = christoffel(&m).unwrap();
        let gh = christoffel(&h).unwrap();
        let v = deturck_vector(&m, &gm, &gh).unwrap();
        assert!(v.max_abs() < 1e-12, "conformal V = {:.3e}", v.max_abs());
    }

    #[test]
    fn lie_derivative_matches_flat_closed_form() {
        let grid = Arc::new(Grid::square(2, 16, Scheme::Spectral).unwrap());
        let m = MetricField::flat(grid.clone()).unwrap();
        let gamma = christoffel(&m).unwrap();
        let v = TensorField::from_fn(grid.clone(), &[UP], false, |x, idx| {
            if idx[0] == 0 {
                (x[0] + x[1]).sin()
            } else {
                (2.0 * x[1]).cos()
            }
        })
        .unwrap();
        let lie = lie_derivative_metric(&v, &m, &gamma).unwrap();
        let np = grid.npoints();
        let mut dv = Vec::new();
        for a in 0..2 {
            let mut single = TensorField::scalar(grid.clone());
            single.data_mut().copy_from_slice(v.comp(a));
            dv.push([
                partial_derivative(&single, 0, 1).unwrap(),
                partial_derivative(&single, 1, 1).unwrap(),
            ]);
        }
        let mut worst = 0.0f64;
        for p in 0..np {
            for i in 0..2 {
                for j in 0..2 {
                    let expect = dv[j][i].data()[p] + dv[i][j].data()[p];
                    worst = worst.max((lie.value(p, &[i, j]) - expect).abs());
                }
            }
        }
        assert!(worst < 1e-11, "flat Lie derivative deviates {worst:.3e}");
    }

    #[test]
    fn obstruction_rhs_trace_is_conformal_part() {
        // trace_g(B + c₄ ΔS g) = 4 c₄ ΔS up to the Bach trace defect.
        let grid = Arc::new(Grid::square(4, 12, Scheme::Spectral).unwrap());
        let u = TensorField::scalar_from_fn(grid.clone(), |x| {
            0.05 * ((x[0] + x[2]).sin() + (x[1] - x[3]).cos())
        });
        let m = MetricField::conformal(&u).unwrap();
        let gamma = christoffel(&m).unwrap();
        let pack = riemann_ricci_scalar(&m, &gamma).unwrap();
        let r = obstruction_rhs(&m, &gamma, &pack).unwrap();
        let lap_s = laplacian(&pack.scalar, &m, &gamma).unwrap();
        let spec = crate::algebra::IndexSpec::new(&[(0, DOWN), (1, DOWN)]);
        let tr = crate::algebra::contract(&r, &spec, Some(&m)).unwrap();
        let np = grid.npoints();
        let mut worst = 0.0f64;
        for p in 0..np {
            let expect = 4.0 * (1.0 / 12.0) * lap_s.data()[p];
            worst = worst.max((tr.data()[p] - expect).abs());
        }
        assert!(worst < 1e-5, "obstruction trace deviates {worst:.3e}");
    }

    #[test]
    fn pullback_by_zero_displacement_is_identity() {
        let (grid, _, m) = conformal_2d(16, 0.1);
        let psi = TensorField::zeros(grid, &[UP], false).unwrap();
        let pulled = pullback_metric(&m, &psi).unwrap();
        let err = pulled.sub(m.metric()).unwrap().max_abs();
        assert!(err < 1e-11, "identity pullback error {err:.3e}");
    }

    #[test]
    fn pullback_of_flat_metric_is_jacobian_gram() {
        let grid = Arc::new(Grid::square(2, 32, Scheme::Spectral).unwrap());
        let m = MetricField::flat(grid.clone()).unwrap();
        let eps = 0.03;
        let psi = TensorField::from_fn(grid.clone(), &[UP], false, move |x, idx| {
            if idx[0] == 0 {
                eps * (x[1]).sin()
            } else {
                eps * (x[0] + x[1]).cos()
            }
        })
        .unwrap();
        let pulled = pullback_metric(&m, &psi).unwrap();
        // J^T J with J_ai = δ_ai + ∂_i ψ^a, all derivatives exact here.
        let np = grid.npoints();
        let mut worst = 0.0f64;
        for p in 0..np {
            let x = grid.coords_flat(p);
            let j = [
                [1.0, eps * x[1].cos()],
                [-eps * (x[0] + x[1]).sin(), 1.0 - eps * (x[0] + x[1]).sin()],
            ];
            for i in 0..2 {
                for k in 0..2 {
                    let expect = j[0][i] * j[0][k] + j[1][i] * j[1][k];
                    worst = worst.max((pulled.value(p, &[i, k]) - expect).abs());
                }
            }
        }
        assert!(worst < 1e-9, "flat pullback deviates {worst:.3e}");
    }

    #[test]
    fn conformal_factor_accumulates_trapezoid() {
        let grid = Arc::new(Grid::square(4, 8, Scheme::Spectral).unwrap());
        let u = TensorField::scalar_from_fn(grid.clone(), |x| 0.04 * (x[0] + x[3]).sin());
        let m = MetricField::conformal(&u).unwrap();
        let times = [0.0, 0.25, 1.0];
        let metrics = vec![m.clone(), m.clone(), m.clone()];
        let rho = conformal_rho(&times, &metrics).unwrap();
        let gamma = christoffel(&m).unwrap();
        let pack = riemann_ricci_scalar(&m, &gamma).unwrap();
        let mut phi = laplacian(&pack.scalar, &m, &gamma).unwrap();
        phi.scale(1.0 / 12.0);
        let np = grid.npoints();
        let mut worst = 0.0f64;
        for p in 0..np {
            worst = worst.max((rho[0].data()[p] - 1.0).abs());
            let expect = (phi.data()[p] * 1.0).exp();
            worst = worst.max((rho[2].data()[p] - expect).abs());
        }
        assert!(worst < 1e-12, "conformal factor deviates {worst:.3e}");
    }
}
