//! Pointwise tensor algebra: contractions, raising/lowering, norms.

use crate::error::{GeomError, Result};
use crate::field::{for_each_index, MetricField, TensorField, Variance, DOWN, UP};

/// Slots taking part in a contraction, with their declared variances.
/// Consecutive entries pair up: `(s0,v0)` contracts with `(s1,v1)`, etc.
#[derive(Debug, Clone)]
pub struct IndexSpec {
    pub positions: Vec<(usize, Variance)>,
}

impl IndexSpec {
    pub fn new(positions: &[(usize, Variance)]) -> Self {
        IndexSpec { positions: positions.to_vec() }
    }

    /// Contraction pairs with variances read off an existing tensor.
    pub fn pairs_of(t: &TensorField, pairs: &[(usize, usize)]) -> Result<Self> {
        let mut positions = Vec::with_capacity(pairs.len() * 2);
        for &(a, b) in pairs {
            for s in [a, b] {
                if s >= t.order() {
                    return Err(GeomError::InvalidArgument(format!(
                        "slot {s} out of range for order {}",
                        t.order()
                    )));
                }
                positions.push((s, t.variances()[s]));
            }
        }
        Ok(IndexSpec { positions })
    }

    fn validated_pairs(&self, t: &TensorField) -> Result<Vec<(usize, usize)>> {
        if self.positions.is_empty() || self.positions.len() % 2 != 0 {
            return Err(GeomError::InvalidArgument(
                "index spec must hold a positive even number of slots".into(),
            ));
        }
        let mut seen = vec![false; t.order()];
        for &(s, v) in &self.positions {
            if s >= t.order() {
                return Err(GeomError::InvalidArgument(format!(
                    "slot {s} out of range for order {}",
                    t.order()
                )));
            }
            if seen[s] {
                return Err(GeomError::InvalidArgument(format!("slot {s} repeated")));
            }
            seen[s] = true;
            if t.variances()[s] != v {
                return Err(GeomError::InvalidArgument(format!(
                    "slot {s} has variance {:?}, spec declares {v:?}",
                    t.variances()[s]
                )));
            }
        }
        Ok(self
            .positions
            .chunks(2)
            .map(|c| (c[0].0, c[1].0))
            .collect())
    }
}

/// Pointwise inverse of a rank-(0,2) positive-definite field. Degenerate
/// points (min eigenvalue at or below the floor) are an error naming the
/// worst grid point.
pub fn invert_metric(g: &TensorField) -> Result<TensorField> {
    Ok(MetricField::new(g.clone())?.inverse().clone())
}

/// Contract one pair of slots `(a, b)` of `t`. Opposite variances trace
/// directly; equal variances route through the metric (required).
fn contract_pair(
    t: &TensorField,
    a: usize,
    b: usize,
    metric: Option<&MetricField>,
) -> Result<TensorField> {
    if a == b {
        return Err(GeomError::InvalidArgument("cannot contract a slot with itself".into()));
    }
    let (a, b) = if a < b { (a, b) } else { (b, a) };
    let n = t.grid().dim();
    let np = t.npoints();
    let va = t.variances()[a];
    let vb = t.variances()[b];
    let mut out_var: Vec<Variance> = Vec::with_capacity(t.order() - 2);
    for (s, &v) in t.variances().iter().enumerate() {
        if s != a && s != b {
            out_var.push(v);
        }
    }
    let mut out = TensorField::zeros(t.grid_arc(), &out_var, false)?;
    let same_variance = va == vb;
    if same_variance && metric.is_none() {
        return Err(GeomError::InvalidArgument(
            "contracting two equal-variance slots needs an explicit metric".into(),
        ));
    }
    if let Some(m) = metric {
        m.metric().check_same_grid(t)?;
    }

    let q = t.order();
    let mut full_idx = vec![0usize; q];
    for_each_index(n, q - 2, |rest| {
        let oc = out.comp_index(rest);
        // Scatter the free indices around slots a and b.
        let mut r = 0;
        for s in 0..q {
            if s != a && s != b {
                full_idx[s] = rest[r];
                r += 1;
            }
        }
        let mut acc = vec![0.0f64; np];
        if same_variance {
            let m = metric.expect("checked above");
            // Both Down contracts with g^{ij}; both Up with g_{ij}.
            for i in 0..n {
                for j in 0..n {
                    full_idx[a] = i;
                    full_idx[b] = j;
                    let tc = t.comp_index(&full_idx);
                    let tcomp = t.comp(tc);
                    match va {
                        DOWN => {
                            for p in 0..np {
                                acc[p] += m.inv_value(p, i, j) * tcomp[p];
                            }
                        }
                        UP => {
                            for p in 0..np {
                                acc[p] += m.value(p, i, j) * tcomp[p];
                            }
                        }
                    }
                }
            }
        } else {
            for i in 0..n {
                full_idx[a] = i;
                full_idx[b] = i;
                let tc = t.comp_index(&full_idx);
                let tcomp = t.comp(tc);
                for p in 0..np {
                    acc[p] += tcomp[p];
                }
            }
        }
        out.comp_mut(oc).copy_from_slice(&acc);
    });
    Ok(out)
}

/// Contract the slot pairs named by `spec`, highest pair first so earlier
/// pairs keep their positions; lower-slot pairs are remapped as slots drop.
pub fn contract(
    t: &TensorField,
    spec: &IndexSpec,
    metric: Option<&MetricField>,
) -> Result<TensorField> {
    let mut pairs = spec.validated_pairs(t)?;
    let mut cur = t.clone();
    while !pairs.is_empty() {
        // Take the pair whose larger slot is maximal.
        let (pi, &(a, b)) = pairs
            .iter()
            .enumerate()
            .max_by_key(|(_, &(a, b))| a.max(b))
            .expect("non-empty");
        cur = contract_pair(&cur, a, b, metric)?;
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        pairs.remove(pi);
        for (x, y) in pairs.iter_mut() {
            for s in [&mut *x, &mut *y] {
                debug_assert!(*s != lo && *s != hi);
                if *s > hi {
                    *s -= 1;
                }
                if *s > lo {
                    *s -= 1;
                }
            }
        }
    }
    Ok(cur)
}

/// Raise a covariant slot through `g^{-1}`.
pub fn raise_slot(t: &TensorField, slot: usize, m: &MetricField) -> Result<TensorField> {
    move_slot(t, slot, m, UP)
}

/// Lower a contravariant slot through `g`.
pub fn lower_slot(t: &TensorField, slot: usize, m: &MetricField) -> Result<TensorField> {
    move_slot(t, slot, m, DOWN)
}

fn move_slot(t: &TensorField, slot: usize, m: &MetricField, to: Variance) -> Result<TensorField> {
    if slot >= t.order() {
        return Err(GeomError::InvalidArgument(format!(
            "slot {slot} out of range for order {}",
            t.order()
        )));
    }
    if t.variances()[slot] == to {
        return Err(GeomError::InvalidArgument(format!(
            "slot {slot} already has variance {to:?}"
        )));
    }
    m.metric().check_same_grid(t)?;
    let n = t.grid().dim();
    let np = t.npoints();
    let mut out_var = t.variances().to_vec();
    out_var[slot] = to;
    let mut out = TensorField::zeros(t.grid_arc(), &out_var, false)?;
    let q = t.order();
    let mut src_idx = vec![0usize; q];
    for_each_index(n, q, |idx| {
        let oc = out.comp_index(idx);
        src_idx.copy_from_slice(idx);
        let mut acc = vec![0.0f64; np];
        for s in 0..n {
            src_idx[slot] = s;
            let tc = t.comp_index(&src_idx);
            let tcomp = t.comp(tc);
            let i = idx[slot];
            match to {
                UP => {
                    for p in 0..np {
                        acc[p] += m.inv_value(p, i, s) * tcomp[p];
                    }
                }
                DOWN => {
                    for p in 0..np {
                        acc[p] += m.value(p, i, s) * tcomp[p];
                    }
                }
            }
        }
        out.comp_mut(oc).copy_from_slice(&acc);
    });
    Ok(out)
}

/// Pointwise norm `|T|_g`: full contraction of `T` with its variance-flipped
/// copy. Returns a scalar field.
pub fn tensor_norm(t: &TensorField, m: &MetricField) -> Result<TensorField> {
    m.metric().check_same_grid(t)?;
    let mut flipped = t.clone();
    for s in 0..t.order() {
        flipped = match flipped.variances()[s] {
            UP => lower_slot(&flipped, s, m)?,
            DOWN => raise_slot(&flipped, s, m)?,
        };
    }
    let n = t.grid().dim();
    let np = t.npoints();
    let mut out = TensorField::scalar(t.grid_arc());
    for_each_index(n, t.order(), |idx| {
        let tc = t.comp_index(idx);
        let fc = flipped.comp_index(idx);
        let (tcomp, fcomp) = (t.comp(tc), flipped.comp(fc));
        let acc = out.data_mut();
        for p in 0..np {
            acc[p] += tcomp[p] * fcomp[p];
        }
    });
    for v in out.data_mut().iter_mut() {
        // Clamp tiny negative roundoff before the square root.
        *v = v.max(0.0).sqrt();
    }
    Ok(out)
}
