//! Discrete parabolic Hölder seminorms and the interpolation inequality.
//!
//! Fields on a space-time slab carry the anisotropic distance
//! `d((x1,t1),(x2,t2)) = max(|x1-x2|, |t1-t2|^{1/2m})` matched to an
//! operator of order `2m`. The seminorm is estimated from a stratified
//! random sample of point pairs, so it is a reproducible lower bound of the
//! continuum supremum, never an upper bound.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{GeomError, Result};
use crate::fft::partial_derivative;
use crate::field::{sym_unpack, TensorField};
use crate::grid::Grid;

/// Default number of sampled pairs for seminorm estimation.
pub const DEFAULT_PAIR_BUDGET: usize = 20_000;

/// Anisotropic space-time distance `max(|dx|, |dt|^{1/2m})` with the
/// spatial part wrapped around the torus.
pub fn parabolic_distance(
    grid: &Grid,
    x1: &[f64],
    t1: f64,
    x2: &[f64],
    t2: f64,
    order_2m: usize,
) -> f64 {
    let mut dx2 = 0.0;
    for a in 0..grid.dim() {
        let d = grid.wrap_delta(a, x1[a] - x2[a]);
        dx2 += d * d;
    }
    let dt = (t1 - t2).abs();
    dx2.sqrt().max(dt.powf(1.0 / order_2m as f64))
}

/// Pointwise Frobenius norm of one grid point, honoring packed symmetry.
fn point_frob(u: &TensorField, p: usize) -> f64 {
    let np = u.npoints();
    let n = u.grid().dim();
    let mut s = 0.0;
    if u.is_symmetric() {
        for c in 0..u.ncomp() {
            let (i, j) = sym_unpack(n, c);
            let v = u.data()[c * np + p];
            s += if i == j { v * v } else { 2.0 * v * v };
        }
    } else {
        for c in 0..u.ncomp() {
            let v = u.data()[c * np + p];
            s += v * v;
        }
    }
    s.sqrt()
}

/// Frobenius norm of the difference between two grid points, possibly on
/// different slices.
fn pair_gap(u1: &TensorField, p1: usize, u2: &TensorField, p2: usize) -> f64 {
    let np = u1.npoints();
    let n = u1.grid().dim();
    let mut s = 0.0;
    if u1.is_symmetric() {
        for c in 0..u1.ncomp() {
            let (i, j) = sym_unpack(n, c);
            let v = u1.data()[c * np + p1] - u2.data()[c * np + p2];
            s += if i == j { v * v } else { 2.0 * v * v };
        }
    } else {
        for c in 0..u1.ncomp() {
            let v = u1.data()[c * np + p1] - u2.data()[c * np + p2];
            s += v * v;
        }
    }
    s.sqrt()
}

/// Sampled parabolic Hölder estimate of a time-indexed field.
#[derive(Debug, Clone, Serialize)]
pub struct HolderReport {
    pub alpha: f64,
    pub order_2m: usize,
    /// Sampled seminorm: max difference quotient over the pair budget.
    pub seminorm: f64,
    /// Seminorm plus sup-norms of spatial derivatives through order 2m.
    pub full_norm: f64,
    pub pair_budget: usize,
}

/// Sup over slices of the pure per-axis derivative sup-norms through
/// `order_2m`, including the undifferentiated field. Mixed partials are
/// omitted, so this is a lower bound of the full derivative norm.
pub fn derivative_sup_norm(u: &[TensorField], order_2m: usize) -> Result<f64> {
    let mut worst = 0.0f64;
    for slice in u {
        let mut total = slice.max_frobenius();
        let n = slice.grid().dim();
        for ord in 1..=order_2m {
            let mut best = 0.0f64;
            for a in 0..n {
                let mut d = slice.clone();
                let mut left = ord;
                while left > 0 {
                    let step = left.min(2);
                    d = partial_derivative(&d, a, step)?;
                    left -= step;
                }
                best = best.max(d.max_frobenius());
            }
            total += best;
        }
        worst = worst.max(total);
    }
    Ok(worst)
}

/// Estimate the parabolic Hölder seminorm from `pair_budget` sampled pairs.
///
/// Strata rotate per draw: short spatial offsets on one slice, independent
/// far pairs, and pure-time pairs at a fixed point. The draw stream is
/// fixed by the seed, so enlarging the budget only appends pairs and the
/// estimate is monotone in `pair_budget`.
pub fn holder_seminorm(
    times: &[f64],
    u: &[TensorField],
    alpha: f64,
    order_2m: usize,
    pair_budget: usize,
    seed: u64,
) -> Result<HolderReport> {
    if !(0.0..1.0).contains(&alpha) || alpha == 0.0 {
        return Err(GeomError::InvalidArgument(format!(
            "Holder exponent must lie in (0,1), got {alpha}"
        )));
    }
    if u.is_empty() || times.len() != u.len() {
        return Err(GeomError::InvalidArgument(format!(
            "need equally many times and slices, got {} and {}",
            times.len(),
            u.len()
        )));
    }
    for s in u.iter().skip(1) {
        u[0].check_same_layout(s)?;
    }
    let grid = u[0].grid();

    let np = grid.npoints();
    let nslices = u.len();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seminorm = 0.0f64;
    for draw in 0..pair_budget {
        let stratum = if nslices >= 2 { draw % 3 } else { draw % 2 };
        let (s1, p1, s2, p2) = match stratum {
            0 => {
                // Near pair: small cell offset on one slice.
                let s = rng.gen_range(0..nslices);
                let p = rng.gen_range(0..np);
                let mut multi = grid.multi_index(p);
                let mut moved = false;
                for (a, m) in multi.iter_mut().enumerate() {
                    let off = rng.gen_range(-2i64..=2);
                    if off != 0 {
                        moved = true;
                    }
                    let sz = grid.sizes()[a] as i64;
                    *m = ((*m as i64 + off).rem_euclid(sz)) as usize;
                }
                if !moved {
                    continue;
                }
                (s, p, s, grid.flat_index(&multi))
            }
            1 => {
                // Far pair: independent slice/point draws.
                (
                    rng.gen_range(0..nslices),
                    rng.gen_range(0..np),
                    rng.gen_range(0..nslices),
                    rng.gen_range(0..np),
                )
            }
            _ => {
                // Pure-time pair at one spatial point.
                let p = rng.gen_range(0..np);
                let s1 = rng.gen_range(0..nslices);
                let s2 = rng.gen_range(0..nslices);
                (s1, p, s2, p)
            }
        };
        if s1 == s2 && p1 == p2 {
            continue;
        }
        let x1 = grid.coords_flat(p1);
        let x2 = grid.coords_flat(p2);
        let d = parabolic_distance(grid, &x1, times[s1], &x2, times[s2], order_2m);
        if d == 0.0 {
            continue;
        }
        let q = pair_gap(&u[s1], p1, &u[s2], p2) / d.powf(alpha);
        seminorm = seminorm.max(q);
    }

    let full_norm = derivative_sup_norm(u, order_2m)? + seminorm;
    Ok(HolderReport { alpha, order_2m, seminorm, full_norm, pair_budget })
}

/// Outcome of the parabolic interpolation inequality test.
#[derive(Debug, Clone, Serialize)]
pub struct InterpolationReport {
    pub lhs: f64,
    pub rhs: f64,
    /// `rhs - lhs`; sampling may understate the left side, never overstate.
    pub margin: f64,
    pub pass: bool,
}

/// Check `[u]_alpha <= (2||u||)^{1-a/2} ||du/dt||^{a/2} +
/// (2||u||)^{1-a} ||grad u||^a` with the sampled seminorm on the left.
///
/// The time derivative uses centered differences over the stored slices,
/// so at least three slices are required. Pass allows 5 percent slack for
/// the sampled left side.
pub fn interpolation_check(
    times: &[f64],
    u: &[TensorField],
    alpha: f64,
    order_2m: usize,
    pair_budget: usize,
    seed: u64,
) -> Result<InterpolationReport> {
    if u.len() < 3 {
        return Err(GeomError::InvalidArgument(format!(
            "interpolation check needs at least 3 time slices, got {}",
            u.len()
        )));
    }
    let report = holder_seminorm(times, u, alpha, order_2m, pair_budget, seed)?;
    let lhs = report.seminorm;

    let sup = u.iter().fold(0.0f64, |m, s| m.max(s.max_frobenius()));

    let mut dt_sup = 0.0f64;
    for i in 1..u.len() - 1 {
        let span = times[i + 1] - times[i - 1];
        let mut d = u[i + 1].sub(&u[i - 1])?;
        d.scale(1.0 / span);
        dt_sup = dt_sup.max(d.max_frobenius());
    }

    let mut grad_sup = 0.0f64;
    for slice in u {
        let n = slice.grid().dim();
        let np = slice.npoints();
        let mut grad2 = vec![0.0f64; np];
        for a in 0..n {
            let da = partial_derivative(slice, a, 1)?;
            for (p, g) in grad2.iter_mut().enumerate() {
                let f = point_frob(&da, p);
                *g += f * f;
            }
        }
        let worst = grad2.iter().fold(0.0f64, |m, &v| m.max(v)).sqrt();
        grad_sup = grad_sup.max(worst);
    }

    let rhs = (2.0 * sup).powf(1.0 - alpha / 2.0) * dt_sup.powf(alpha / 2.0)
        + (2.0 * sup).powf(1.0 - alpha) * grad_sup.powf(alpha);
    let margin = rhs - lhs;
    let pass = margin >= -0.05 * rhs.max(f64::MIN_POSITIVE);
    Ok(InterpolationReport { lhs, rhs, margin, pass })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::sym_pack;
    use crate::field::Variance;
    use crate::grid::Scheme;
    use std::sync::Arc;

    fn grid2(n: usize) -> Arc<Grid> {
        Arc::new(Grid::square(2, n, Scheme::Spectral).unwrap())
    }

    #[test]
    fn distance_basics() {
        let grid = grid2(16);
        let o = [0.0, 0.0];
        assert_eq!(parabolic_distance(&grid, &o, 0.3, &o, 0.3, 4), 0.0);
        // Same point, unit time gap, fourth order: 1^{1/4} = 1.
        assert_eq!(parabolic_distance(&grid, &o, 1.0, &o, 2.0, 4), 1.0);
        // Spatial part dominates: max(0.5, 0.0001^{1/4} = 0.1) = 0.5.
        let q = [0.5, 0.0];
        let d = parabolic_distance(&grid, &o, 0.0, &q, 0.0001, 4);
        assert!((d - 0.5).abs() < 1e-12);
    }

    #[test]
    fn distance_wraps_around_the_torus() {
        let grid = grid2(16);
        let a = [0.1, 0.0];
        let b = [std::f64::consts::TAU - 0.1, 0.0];
        let d = parabolic_distance(&grid, &a, 0.0, &b, 0.0, 2);
        assert!((d - 0.2).abs() < 1e-12, "wrapped distance {d}");
    }

    #[test]
    fn distance_is_symmetric_and_triangular_on_random_triples() {
        let grid = grid2(16);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..2000 {
            let pt = |rng: &mut ChaCha8Rng| {
                (
                    [rng.gen_range(0.0..std::f64::consts::TAU), rng.gen_range(0.0..std::f64::consts::TAU)],
                    rng.gen_range(0.0..2.0),
                )
            };
            let (xa, ta) = pt(&mut rng);
            let (xb, tb) = pt(&mut rng);
            let (xc, tc) = pt(&mut rng);
            let dab = parabolic_distance(&grid, &xa, ta, &xb, tb, 4);
            let dba = parabolic_distance(&grid, &xb, tb, &xa, ta, 4);
            assert!((dab - dba).abs() < 1e-14);
            let dac = parabolic_distance(&grid, &xa, ta, &xc, tc, 4);
            let dcb = parabolic_distance(&grid, &xc, tc, &xb, tb, 4);
            assert!(dab <= dac + dcb + 1e-12, "triangle violated: {dab} > {dac} + {dcb}");
        }
    }

    #[test]
    fn constant_field_has_zero_seminorm() {
        let grid = grid2(16);
        let u: Vec<TensorField> = (0..3)
            .map(|_| TensorField::scalar_from_fn(grid.clone(), |_| 2.5))
            .collect();
        let rep = holder_seminorm(&[0.0, 0.1, 0.2], &u, 0.5, 2, 5000, 0).unwrap();
        assert_eq!(rep.seminorm, 0.0);
        assert!(rep.full_norm >= rep.seminorm);
    }

    #[test]
    fn static_mode_seminorm_close_to_dense_oracle() {
        let grid = grid2(16);
        let u = vec![TensorField::scalar_from_fn(grid.clone(), |x| x[0].sin())];
        let alpha = 0.5;
        // Dense oracle: every pair on the single slice.
        let np = grid.npoints();
        let mut dense = 0.0f64;
        for p in 0..np {
            let xp = grid.coords_flat(p);
            for q in p + 1..np {
                let xq = grid.coords_flat(q);
                let d = parabolic_distance(&grid, &xp, 0.0, &xq, 0.0, 2);
                let gap = (xp[0].sin() - xq[0].sin()).abs();
                dense = dense.max(gap / d.powf(alpha));
            }
        }
        let rep = holder_seminorm(&[0.0], &u, alpha, 2, 40_000, 1).unwrap();
        assert!(rep.seminorm <= dense + 1e-12);
        assert!(
            rep.seminorm > 0.85 * dense,
            "sampled {:.4} vs dense {dense:.4}",
            rep.seminorm
        );
    }

    #[test]
    fn seminorm_is_monotone_in_pair_budget() {
        let grid = grid2(16);
        let u: Vec<TensorField> = (0..4)
            .map(|s| {
                TensorField::scalar_from_fn(grid.clone(), move |x| {
                    (x[0] + 0.3 * s as f64).sin() * (x[1] * 2.0).cos()
                })
            })
            .collect();
        let times = [0.0, 0.01, 0.02, 0.03];
        let mut prev = 0.0;
        for budget in [500, 2000, 8000, 20_000] {
            let rep = holder_seminorm(&times, &u, 0.5, 2, budget, 9).unwrap();
            assert!(rep.seminorm >= prev, "budget {budget} decreased the estimate");
            prev = rep.seminorm;
        }
    }

    #[test]
    fn time_ramp_quotient_matches_closed_form() {
        let grid = grid2(16);
        // Spatially constant profile: every pair's gap is |t1 - t2| |v|, so
        // the supremum is the pure-time quotient at the widest time gap,
        // |dt|^{1 - a/2m} |v| with dt = 0.8.
        let v = TensorField::from_fn(grid.clone(), &[Variance::Down, Variance::Down], true, |_, idx| {
            [0.7, -0.2, 0.4][sym_pack(2, idx[0], idx[1])]
        })
        .unwrap();
        let times: Vec<f64> = (0..5).map(|i| i as f64 * 0.2).collect();
        let u: Vec<TensorField> = times.iter().map(|&t| v.scaled(t)).collect();
        let alpha = 0.5;
        let rep = holder_seminorm(&times, &u, alpha, 2, 30_000, 4).unwrap();
        let expect = 0.8f64.powf(1.0 - alpha / 2.0) * v.max_frobenius();
        assert!(rep.seminorm <= expect * 1.0001);
        assert!(
            rep.seminorm > 0.9999 * expect,
            "got {:.6}, expected {expect:.6}",
            rep.seminorm
        );
    }

    #[test]
    fn interpolation_holds_for_single_mode() {
        let grid = grid2(16);
        let u: Vec<TensorField> = (0..4)
            .map(|_| TensorField::scalar_from_fn(grid.clone(), |x| 0.3 * x[1].sin()))
            .collect();
        let rep =
            interpolation_check(&[0.0, 0.1, 0.2, 0.3], &u, 0.5, 2, 20_000, 0).unwrap();
        assert!(rep.pass, "margin {:.4}", rep.margin);
        assert!(rep.margin > 0.0);
    }

    #[test]
    fn interpolation_needs_three_slices() {
        let grid = grid2(16);
        let u: Vec<TensorField> =
            (0..2).map(|_| TensorField::scalar_from_fn(grid.clone(), |_| 0.0)).collect();
        assert!(interpolation_check(&[0.0, 0.1], &u, 0.5, 2, 100, 0).is_err());
    }

    #[test]
    fn rejects_bad_alpha() {
        let grid = grid2(16);
        let u = vec![TensorField::scalar_from_fn(grid, |_| 0.0)];
        assert!(holder_seminorm(&[0.0], &u, 1.0, 2, 100, 0).is_err());
        assert!(holder_seminorm(&[0.0], &u, 0.0, 2, 100, 0).is_err());
    }
}
