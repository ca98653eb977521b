//! Curvature of a metric field: connection coefficients, Riemann, Ricci,
//! scalar curvature, Schouten, Weyl, Bach, and covariant differential
//! operators built on them.
//!
//! Index conventions, fixed once here and relied on everywhere:
//! - `Γ^k_{ij} = ½ g^{kl}(∂_i g_{jl} + ∂_j g_{il} − ∂_l g_{ij})`;
//! - `R^ρ_{σμν} = ∂_μ Γ^ρ_{νσ} − ∂_ν Γ^ρ_{μσ} + Γ^ρ_{μλ}Γ^λ_{νσ} − Γ^ρ_{νλ}Γ^λ_{μσ}`;
//! - `Ric_{σν} = R^ρ_{σρν}` (positive scalar curvature on round spheres);
//! - covariant derivatives append their new covariant slot at the END, so
//!   `(∇∇T)_{I a b} = ∇_b ∇_a T_I` (outer derivative last).

use crate::algebra::{contract, raise_slot, IndexSpec};
use crate::error::{GeomError, Result};
use crate::fft::partial_derivative;
use crate::field::{for_each_index, sym_pack, MetricField, TensorField, DOWN, UP};

/// Connection coefficients of a metric, stored as a full rank-3 field with
/// variances `[Up, Down, Down]` (symmetric in the two lower slots).
#[derive(Debug, Clone)]
pub struct ChristoffelField {
    gamma: TensorField,
    n: usize,
    np: usize,
}

impl ChristoffelField {
    pub fn field(&self) -> &TensorField {
        &self.gamma
    }

    #[inline]
    pub fn value(&self, p: usize, k: usize, i: usize, j: usize) -> f64 {
        self.gamma.data()[((k * self.n + i) * self.n + j) * self.np + p]
    }

    /// Contiguous grid slice of the component `Γ^k_{ij}`.
    #[inline]
    pub fn comp(&self, k: usize, i: usize, j: usize) -> &[f64] {
        let c = (k * self.n + i) * self.n + j;
        self.gamma.comp(c)
    }
}

/// Connection coefficients `Γ^k_{ij}` of `m`, differentiated with the grid's
/// scheme.
pub fn christoffel(m: &MetricField) -> Result<ChristoffelField> {
    let grid = m.grid_arc();
    let n = grid.dim();
    let np = grid.npoints();
    let g = m.metric();
    // dg[a] holds ∂_a g in the same packed layout as g.
    let mut dg = Vec::with_capacity(n);
    for a in 0..n {
        dg.push(partial_derivative(g, a, 1)?);
    }
    let mut gamma = TensorField::zeros(grid, &[UP, DOWN, DOWN], false)?;
    let ginv = m.inverse();
    for k in 0..n {
        for i in 0..n {
            for j in i..n {
                let mut acc = vec![0.0f64; np];
                for l in 0..n {
                    let gkl = ginv.comp(sym_pack(n, k, l));
                    let d_i = dg[i].comp(sym_pack(n, j, l));
                    let d_j = dg[j].comp(sym_pack(n, i, l));
                    let d_l = dg[l].comp(sym_pack(n, i, j));
                    for p in 0..np {
                        acc[p] += 0.5 * gkl[p] * (d_i[p] + d_j[p] - d_l[p]);
                    }
                }
                let c_ij = (k * n + i) * n + j;
                let c_ji = (k * n + j) * n + i;
                gamma.comp_mut(c_ij).copy_from_slice(&acc);
                if i != j {
                    gamma.comp_mut(c_ji).copy_from_slice(&acc);
                }
            }
        }
    }
    gamma.ensure_finite("christoffel")?;
    Ok(ChristoffelField { gamma, n, np })
}

/// Difference of two connections, a genuine rank-3 tensor field.
pub fn difference_tensor(a: &ChristoffelField, b: &ChristoffelField) -> Result<TensorField> {
    a.gamma.sub(&b.gamma)
}

/// Riemann (fully covariant), Ricci (packed) and scalar curvature of one
/// metric, computed together since they share intermediates.
#[derive(Debug, Clone)]
pub struct CurvaturePack {
    /// `Riem_{abcd}`, full storage, all slots covariant.
    pub riemann: TensorField,
    /// `Ric_{ij}`, packed symmetric.
    pub ricci: TensorField,
    /// Scalar curvature.
    pub scalar: TensorField,
}

pub fn riemann_ricci_scalar(m: &MetricField, gamma: &ChristoffelField) -> Result<CurvaturePack> {
    let grid = m.grid_arc();
    let n = grid.dim();
    let np = grid.npoints();
    // dgam[mu] = ∂_mu Γ, same full rank-3 layout as Γ.
    let mut dgam = Vec::with_capacity(n);
    for mu in 0..n {
        dgam.push(partial_derivative(gamma.field(), mu, 1)?);
    }
    let dg_comp = |mu: usize, rho: usize, nu: usize, sig: usize| -> &[f64] {
        dgam[mu].comp((rho * n + nu) * n + sig)
    };

    // R^ρ_{σμν}, antisymmetric in (μ, ν): assemble μ < ν only.
    let mut ud = TensorField::zeros(grid.clone(), &[UP, DOWN, DOWN, DOWN], false)?;
    let mut acc = vec![0.0f64; np];
    for rho in 0..n {
        for sig in 0..n {
            for mu in 0..n {
                for nu in (mu + 1)..n {
                    let d1 = dg_comp(mu, rho, nu, sig);
                    let d2 = dg_comp(nu, rho, mu, sig);
                    for p in 0..np {
                        acc[p] = d1[p] - d2[p];
                    }
                    for lam in 0..n {
                        let a1 = gamma.comp(rho, mu, lam);
                        let b1 = gamma.comp(lam, nu, sig);
                        let a2 = gamma.comp(rho, nu, lam);
                        let b2 = gamma.comp(lam, mu, sig);
                        for p in 0..np {
                            acc[p] += a1[p] * b1[p] - a2[p] * b2[p];
                        }
                    }
                    let c_fwd = ((rho * n + sig) * n + mu) * n + nu;
                    let c_bwd = ((rho * n + sig) * n + nu) * n + mu;
                    ud.comp_mut(c_fwd).copy_from_slice(&acc);
                    let neg = ud.comp_mut(c_bwd);
                    for p in 0..np {
                        neg[p] = -acc[p];
                    }
                }
            }
        }
    }
    drop(dgam);

    // Ric_{σν} = R^ρ_{σρν}: mixed trace over slots (0, 2).
    let spec = IndexSpec::new(&[(0, UP), (2, DOWN)]);
    let ricci = contract(&ud, &spec, None)?.symmetrized()?;

    // Scalar curvature S = g^{σν} Ric_{σν}.
    let mut scalar = TensorField::scalar(grid.clone());
    let ginv = m.inverse();
    for s in 0..n {
        for v in 0..n {
            let gi = ginv.comp(sym_pack(n, s, v));
            let rc = ricci.comp(sym_pack(n, s, v));
            let out = scalar.data_mut();
            for p in 0..np {
                out[p] += gi[p] * rc[p];
            }
        }
    }

    // Riem_{aσμν} = g_{aρ} R^ρ_{σμν}.
    let g = m.metric();
    let mut riemann = TensorField::zeros(grid, &[DOWN, DOWN, DOWN, DOWN], false)?;
    for a in 0..n {
        for sig in 0..n {
            for mu in 0..n {
                for nu in 0..n {
                    let dst = ((a * n + sig) * n + mu) * n + nu;
                    acc.iter_mut().for_each(|v| *v = 0.0);
                    for rho in 0..n {
                        let gl = g.comp(sym_pack(n, a, rho));
                        let rr = ud.comp(((rho * n + sig) * n + mu) * n + nu);
                        for p in 0..np {
                            acc[p] += gl[p] * rr[p];
                        }
                    }
                    riemann.comp_mut(dst).copy_from_slice(&acc);
                }
            }
        }
    }
    riemann.ensure_finite("riemann")?;
    Ok(CurvaturePack { riemann, ricci, scalar })
}

/// Covariant derivative `∇T`, with the derivative slot appended (covariant)
/// at the end. Output uses full storage.
pub fn covariant_derivative(t: &TensorField, gamma: &ChristoffelField) -> Result<TensorField> {
    gamma.field().check_same_grid(t)?;
    let grid = t.grid_arc();
    let n = grid.dim();
    let np = grid.npoints();
    let q = t.order();
    let mut var = t.variances().to_vec();
    var.push(DOWN);
    let mut out = TensorField::zeros(grid, &var, false)?;

    // Coordinate-derivative part, one axis at a time to bound memory.
    for a in 0..n {
        let da = partial_derivative(t, a, 1)?;
        let mut oidx = vec![0usize; q + 1];
        for_each_index(n, q, |idx| {
            let src = da.comp(da.comp_index(idx));
            oidx[..q].copy_from_slice(idx);
            oidx[q] = a;
            let oc = out.comp_index(&oidx);
            out.comp_mut(oc).copy_from_slice(src);
        });
    }

    // Connection corrections: −Γ^c_{a i_s} on covariant slots,
    // +Γ^{i_s}_{a c} on contravariant slots.
    let mut widx = vec![0usize; q];
    let mut oidx = vec![0usize; q + 1];
    for_each_index(n, q, |idx| {
        oidx[..q].copy_from_slice(idx);
        for a in 0..n {
            oidx[q] = a;
            let oc = out.comp_index(&oidx);
            for s in 0..q {
                widx.copy_from_slice(idx);
                for c in 0..n {
                    widx[s] = c;
                    let tc = t.comp(t.comp_index(&widx));
                    let (coef, sign) = match t.variances()[s] {
                        DOWN => (gamma.comp(c, a, idx[s]), -1.0),
                        UP => (gamma.comp(idx[s], a, c), 1.0),
                    };
                    let oslice = out.comp_mut(oc);
                    for p in 0..np {
                        oslice[p] += sign * coef[p] * tc[p];
                    }
                }
            }
        }
    });
    Ok(out)
}

/// Rough Laplacian `Δ T = g^{ab} ∇_a ∇_b T`. Keeps packed symmetric layout
/// on rank-2 symmetric input.
pub fn laplacian(t: &TensorField, m: &MetricField, gamma: &ChristoffelField) -> Result<TensorField> {
    let d1 = covariant_derivative(t, gamma)?;
    let d2 = covariant_derivative(&d1, gamma)?;
    drop(d1);
    let q = t.order();
    let spec = IndexSpec::new(&[(q, DOWN), (q + 1, DOWN)]);
    let lap = contract(&d2, &spec, Some(m))?;
    if t.is_symmetric() {
        lap.symmetrized()
    } else {
        Ok(lap)
    }
}

/// `Δ^p T` by iterating the rough Laplacian; `p = 0` clones the input.
pub fn laplacian_p(
    t: &TensorField,
    m: &MetricField,
    gamma: &ChristoffelField,
    p: usize,
) -> Result<TensorField> {
    let mut cur = t.clone();
    for _ in 0..p {
        cur = laplacian(&cur, m, gamma)?;
    }
    Ok(cur)
}

/// Metric divergence contracting the derivative against `slot`:
/// `(div T)_{rest} = g^{ab} ∇_a T_{...b@slot...}`. All slots of `t` must be
/// covariant. Fused: the rank-(q+1) gradient is never materialized.
pub fn divergence(
    t: &TensorField,
    m: &MetricField,
    gamma: &ChristoffelField,
    slot: usize,
) -> Result<TensorField> {
    m.metric().check_same_grid(t)?;
    let q = t.order();
    if slot >= q {
        return Err(GeomError::InvalidArgument(format!(
            "divergence slot {slot} out of range for order {q}"
        )));
    }
    if t.variances().iter().any(|&v| v != DOWN) {
        return Err(GeomError::InvalidArgument(
            "divergence expects a fully covariant tensor".into(),
        ));
    }
    let grid = t.grid_arc();
    let n = grid.dim();
    let np = grid.npoints();
    let out_var = vec![DOWN; q - 1];
    let mut out = TensorField::zeros(grid, &out_var, false)?;
    let ginv = m.inverse();

    // g^{ab} ∂_a T_{..b..}, one derivative axis in memory at a time.
    let mut full = vec![0usize; q];
    for a in 0..n {
        let da = partial_derivative(t, a, 1)?;
        for_each_index(n, q - 1, |rest| {
            let oc = out.comp_index(rest);
            scatter_around(&mut full, rest, slot);
            for b in 0..n {
                full[slot] = b;
                let gi = ginv.comp(sym_pack(n, a, b));
                let dcomp = da.comp(da.comp_index(&full));
                let oslice = out.comp_mut(oc);
                for p in 0..np {
                    oslice[p] += gi[p] * dcomp[p];
                }
            }
        });
    }

    // Connection corrections: −g^{ab} Γ^c_{a i_s} T_{..c@s..} summed over
    // every slot s (the contracted slot holds b).
    let mut widx = vec![0usize; q];
    for_each_index(n, q - 1, |rest| {
        let oc = out.comp_index(rest);
        scatter_around(&mut full, rest, slot);
        for b in 0..n {
            full[slot] = b;
            for a in 0..n {
                let gi = ginv.comp(sym_pack(n, a, b));
                for s in 0..q {
                    widx.copy_from_slice(&full);
                    for c in 0..n {
                        widx[s] = c;
                        let tc = t.comp(t.comp_index(&widx));
                        let gam = gamma.comp(c, a, full[s]);
                        let oslice = out.comp_mut(oc);
                        for p in 0..np {
                            oslice[p] -= gi[p] * gam[p] * tc[p];
                        }
                    }
                }
            }
        }
    });
    Ok(out)
}

fn scatter_around(full: &mut [usize], rest: &[usize], slot: usize) {
    let mut r = 0;
    for (s, v) in full.iter_mut().enumerate() {
        if s != slot {
            *v = rest[r];
            r += 1;
        }
    }
}

/// Schouten tensor `P = (Ric − S g / (2(n−1))) / (n−2)`, packed. Needs
/// dimension at least 3.
pub fn schouten(pack: &CurvaturePack, m: &MetricField) -> Result<TensorField> {
    let n = m.grid().dim();
    if n < 3 {
        return Err(GeomError::InvalidArgument(
            "Schouten tensor needs dimension at least 3".into(),
        ));
    }
    let np = m.grid().npoints();
    let trace_coef = 1.0 / (2.0 * (n as f64 - 1.0));
    let scale = 1.0 / (n as f64 - 2.0);
    let mut out = pack.ricci.clone();
    let s = pack.scalar.data();
    let g = m.metric();
    for c in 0..out.ncomp() {
        let gc = g.comp(c);
        let oc = out.comp_mut(c);
        for p in 0..np {
            oc[p] = scale * (oc[p] - trace_coef * s[p] * gc[p]);
        }
    }
    Ok(out)
}

/// Weyl tensor `W = Riem − P ∧ g` (Kulkarni–Nomizu product), full rank-4.
pub fn weyl(pack: &CurvaturePack, schouten_p: &TensorField, m: &MetricField) -> Result<TensorField> {
    let grid = m.grid_arc();
    let n = grid.dim();
    let np = grid.npoints();
    let g = m.metric();
    let pt = schouten_p;
    let mut out = pack.riemann.clone();
    for a in 0..n {
        for b in 0..n {
            for c in 0..n {
                for d in 0..n {
                    let dst = ((a * n + b) * n + c) * n + d;
                    let p_ac = pt.comp(sym_pack(n, a, c));
                    let g_bd = g.comp(sym_pack(n, b, d));
                    let p_bd = pt.comp(sym_pack(n, b, d));
                    let g_ac = g.comp(sym_pack(n, a, c));
                    let p_ad = pt.comp(sym_pack(n, a, d));
                    let g_bc = g.comp(sym_pack(n, b, c));
                    let p_bc = pt.comp(sym_pack(n, b, c));
                    let g_ad = g.comp(sym_pack(n, a, d));
                    let oslice = out.comp_mut(dst);
                    for p in 0..np {
                        oslice[p] -= p_ac[p] * g_bd[p] + p_bd[p] * g_ac[p]
                            - p_ad[p] * g_bc[p]
                            - p_bc[p] * g_ad[p];
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Bach tensor `B_{ij} = ∇^k ∇^l W_{ikjl} + P^{kl} W_{ikjl}`, packed
/// symmetric. Defined here for dimension 3 or 4 (in 3 it vanishes with W).
pub fn bach(
    m: &MetricField,
    gamma: &ChristoffelField,
    pack: &CurvaturePack,
) -> Result<TensorField> {
    let grid = m.grid_arc();
    let n = grid.dim();
    let np = grid.npoints();
    let p = schouten(pack, m)?;
    let w = weyl(pack, &p, m)?;

    // P^{kl} W_{ikjl} while W is still in memory.
    let p_up = raise_slot(&raise_slot(&p, 0, m)?, 1, m)?;
    let mut pw = TensorField::zeros(grid.clone(), &[DOWN, DOWN], false)?;
    for i in 0..n {
        for j in 0..n {
            let dst = i * n + j;
            for k in 0..n {
                for l in 0..n {
                    let pc = p_up.comp(k * n + l);
                    let wc = w.comp(((i * n + k) * n + j) * n + l);
                    let oslice = pw.comp_mut(dst);
                    for q in 0..np {
                        oslice[q] += pc[q] * wc[q];
                    }
                }
            }
        }
    }
    drop(p_up);

    let u = divergence(&w, m, gamma, 3)?;
    drop(w);
    let b0 = divergence(&u, m, gamma, 1)?;
    drop(u);
    b0.add(&pw)?.symmetrized()
}

/// Leading differential part of the order-`nflow` obstruction tensor:
/// `(1/((−2)^{n/2−2}(n/2−2)!)) (Δ^{n/2−1} P − Δ^{n/2−2} ∇²S / (2(n−1)))`.
/// `nflow` must be even, at least 4, and match the grid dimension.
pub fn obstruction_leading(
    m: &MetricField,
    gamma: &ChristoffelField,
    pack: &CurvaturePack,
    nflow: usize,
) -> Result<TensorField> {
    let dim = m.grid().dim();
    if nflow % 2 != 0 || nflow < 4 {
        return Err(GeomError::InvalidArgument(format!(
            "obstruction order must be even and at least 4, got {nflow}"
        )));
    }
    if nflow != dim {
        return Err(GeomError::InvalidArgument(format!(
            "obstruction order {nflow} does not match grid dimension {dim}"
        )));
    }
    let half = nflow / 2;
    let coeff = 1.0 / ((-2.0f64).powi(half as i32 - 2) * factorial(half - 2));
    let p = schouten(pack, m)?;
    let term1 = laplacian_p(&p, m, gamma, half - 1)?;
    let hess = covariant_derivative(&covariant_derivative(&pack.scalar, gamma)?, gamma)?;
    let term2 = laplacian_p(&hess, m, gamma, half - 2)?;
    let mut out = term1.to_full();
    out.axpy(-1.0 / (2.0 * (nflow as f64 - 1.0)), &term2)?;
    out.scale(coeff);
    out.symmetrized()
}

fn factorial(k: usize) -> f64 {
    (1..=k).map(|v| v as f64).product::<f64>().max(1.0)
}
