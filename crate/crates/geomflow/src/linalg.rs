//! Pointwise dense linear algebra for the tiny matrices (n ≤ 4) that arise at
//! each lattice site: symmetric eigenvalue bounds and inversion.

/// Smallest eigenvalue of a symmetric n×n matrix (row-major, full storage),
/// by cyclic Jacobi rotations. Exact enough for floor checks at n ≤ 4.
pub fn sym_min_eig(n: usize, a: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), n * n);
    let mut m = a.to_vec();
    if n == 1 {
        return m[0];
    }
    if n == 2 {
        let tr = m[0] + m[3];
        let det = m[0] * m[3] - m[1] * m[2];
        let disc = (tr * tr / 4.0 - det).max(0.0).sqrt();
        return tr / 2.0 - disc;
    }
    let scale: f64 = m.iter().fold(0.0f64, |s, &x| s.max(x.abs())).max(1e-300);
    for _sweep in 0..64 {
        let mut off = 0.0f64;
        for p in 0..n {
            for q in (p + 1)..n {
                off += m[p * n + q].abs();
            }
        }
        if off < 1e-15 * scale {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[p * n + q];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let app = m[p * n + p];
                let aqq = m[q * n + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[k * n + p];
                    let mkq = m[k * n + q];
                    m[k * n + p] = c * mkp - s * mkq;
                    m[k * n + q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[p * n + k];
                    let mqk = m[q * n + k];
                    m[p * n + k] = c * mpk - s * mqk;
                    m[q * n + k] = s * mpk + c * mqk;
                }
            }
        }
    }
    (0..n).map(|i| m[i * n + i]).fold(f64::INFINITY, f64::min)
}

/// Invert an n×n matrix in place via Gauss-Jordan with partial pivoting.
/// Returns false if a pivot underflows.
pub fn invert(n: usize, a: &mut [f64]) -> bool {
    debug_assert_eq!(a.len(), n * n);
    let mut inv = vec![0.0f64; n * n];
    for i in 0..n {
        inv[i * n + i] = 1.0;
    }
    for col in 0..n {
        let mut piv = col;
        for r in (col + 1)..n {
            if a[r * n + col].abs() > a[piv * n + col].abs() {
                piv = r;
            }
        }
        if a[piv * n + col].abs() < 1e-300 {
            return false;
        }
        if piv != col {
            for k in 0..n {
                a.swap(col * n + k, piv * n + k);
                inv.swap(col * n + k, piv * n + k);
            }
        }
        let d = a[col * n + col];
        for k in 0..n {
            a[col * n + k] /= d;
            inv[col * n + k] /= d;
        }
        for r in 0..n {
            if r == col {
                continue;
            }
            let f = a[r * n + col];
            if f == 0.0 {
                continue;
            }
            for k in 0..n {
                a[r * n + k] -= f * a[col * n + k];
                inv[r * n + k] -= f * inv[col * n + k];
            }
        }
    }
    a.copy_from_slice(&inv);
    true
}

/// Determinant of an n×n matrix (n ≤ 4), by cofactor expansion.
pub fn det(n: usize, a: &[f64]) -> f64 {
    match n {
        1 => a[0],
        2 => a[0] * a[3] - a[1] * a[2],
        3 => {
            a[0] * (a[4] * a[8] - a[5] * a[7]) - a[1] * (a[3] * a[8] - a[5] * a[6])
                + a[2] * (a[3] * a[7] - a[4] * a[6])
        }
        4 => {
            let mut d = 0.0;
            let mut minor = [0.0f64; 9];
            for c in 0..4 {
                let mut m = 0;
                for r in 1..4 {
                    for cc in 0..4 {
                        if cc == c {
                            continue;
                        }
                        minor[m] = a[r * 4 + cc];
                        m += 1;
                    }
                }
                let sign = if c % 2 == 0 { 1.0 } else { -1.0 };
                d += sign * a[c] * det(3, &minor);
            }
            d
        }
        _ => unreachable!("dimension above 4"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn min_eig_matches_closed_forms() {
        // diag(3, 1, 2) rotated by a permutation stays spectrum {1,2,3}.
        let a = [3.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 2.0];
        assert!((sym_min_eig(3, &a) - 1.0).abs() < 1e-12);
        // 2x2 with eigenvalues 1 and 3.
        let b = [2.0, 1.0, 1.0, 2.0];
        assert!((sym_min_eig(2, &b) - 1.0).abs() < 1e-12);
        // 4x4 coupled case, eigenvalues computed from the quadratic in blocks.
        let c = [
            2.0, 0.5, 0.0, 0.0, //
            0.5, 2.0, 0.0, 0.0, //
            0.0, 0.0, 1.0, 0.2, //
            0.0, 0.0, 0.2, 1.0,
        ];
        assert!((sym_min_eig(4, &c) - 0.8).abs() < 1e-12);
    }

    #[test]
    fn inverse_reconstructs_identity() {
        let a = [1.0, 0.2, 0.1, 0.2, 2.0, 0.3, 0.1, 0.3, 1.5];
        let mut inv = a;
        assert!(invert(3, &mut inv));
        for i in 0..3 {
            for j in 0..3 {
                let mut s = 0.0;
                for k in 0..3 {
                    s += a[i * 3 + k] * inv[k * 3 + j];
                }
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((s - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn determinants() {
        let a = [2.0, 0.0, 0.0, 3.0];
        assert!((det(2, &a) - 6.0).abs() < 1e-15);
        let b = [
            1.0, 0.0, 0.0, 0.0, //
            0.0, 2.0, 0.0, 0.0, //
            0.0, 0.0, 3.0, 0.0, //
            0.0, 0.0, 0.0, 4.0,
        ];
        assert!((det(4, &b) - 24.0).abs() < 1e-12);
    }
}
