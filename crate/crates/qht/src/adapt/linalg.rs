//! Dense complex linear algebra for the small Hermitian systems the
//! optimizer solves (dimension <= 64): LU with partial pivoting, explicit
//! inverse and 1-norm condition estimate, and a prefix Cholesky used by the
//! member scans. Matrices are row-major `Vec<C64>`.

use crate::error::{Error, Result};
use crate::C64;

/// LU factorization PA = LU with partial pivoting, stored packed.
#[derive(Debug)]
pub(crate) struct Lu {
    lu: Vec<C64>,
    /// piv[c] = row swapped into position c at step c.
    piv: Vec<usize>,
    n: usize,
}

pub(crate) fn lu_factor(a: &[C64], n: usize) -> Result<Lu> {
    debug_assert_eq!(a.len(), n * n);
    let mut lu = a.to_vec();
    let mut piv = vec![0usize; n];
    for c in 0..n {
        let mut best = c;
        let mut best_mag = lu[c * n + c].norm();
        for r in c + 1..n {
            let mag = lu[r * n + c].norm();
            if mag > best_mag {
                best = r;
                best_mag = mag;
            }
        }
        if !(best_mag > 1e3 * f64::MIN_POSITIVE) {
            return Err(Error::Singular { col: c });
        }
        piv[c] = best;
        if best != c {
            for j in 0..n {
                lu.swap(c * n + j, best * n + j);
            }
        }
        let d = lu[c * n + c];
        for r in c + 1..n {
            let f = lu[r * n + c] / d;
            lu[r * n + c] = f;
            for j in c + 1..n {
                let t = f * lu[c * n + j];
                lu[r * n + j] -= t;
            }
        }
    }
    Ok(Lu { lu, piv, n })
}

impl Lu {
    pub(crate) fn solve(&self, rhs: &[C64]) -> Vec<C64> {
        let n = self.n;
        debug_assert_eq!(rhs.len(), n);
        let mut x = rhs.to_vec();
        for c in 0..n {
            x.swap(c, self.piv[c]);
        }
        // Unit lower triangle.
        for r in 1..n {
            let mut acc = x[r];
            for j in 0..r {
                acc -= self.lu[r * n + j] * x[j];
            }
            x[r] = acc;
        }
        // Upper triangle.
        for r in (0..n).rev() {
            let mut acc = x[r];
            for j in r + 1..n {
                acc -= self.lu[r * n + j] * x[j];
            }
            x[r] = acc / self.lu[r * n + r];
        }
        x
    }

    /// Solve with one step of iterative refinement against the original
    /// matrix, which pushes the relative residual down to roundoff for any
    /// acceptably conditioned system.
    pub(crate) fn solve_refined(&self, a: &[C64], rhs: &[C64]) -> Vec<C64> {
        let mut x = self.solve(rhs);
        let r = residual_vec(a, &x, rhs, self.n);
        let dx = self.solve(&r);
        for (xi, di) in x.iter_mut().zip(&dx) {
            *xi += di;
        }
        x
    }

    pub(crate) fn inverse(&self) -> Vec<C64> {
        let n = self.n;
        let mut inv = vec![C64::new(0.0, 0.0); n * n];
        let mut e = vec![C64::new(0.0, 0.0); n];
        for c in 0..n {
            e[c] = C64::new(1.0, 0.0);
            let col = self.solve(&e);
            e[c] = C64::new(0.0, 0.0);
            for r in 0..n {
                inv[r * n + c] = col[r];
            }
        }
        inv
    }
}

/// Max absolute column sum.
pub(crate) fn norm1(a: &[C64], n: usize) -> f64 {
    let mut best: f64 = 0.0;
    for c in 0..n {
        let mut s = 0.0;
        for r in 0..n {
            s += a[r * n + c].norm();
        }
        best = best.max(s);
    }
    best
}

/// 1-norm condition number via the explicit inverse; exact rather than
/// estimated, which is affordable at these dimensions.
pub(crate) fn condition1(a: &[C64], lu: &Lu, n: usize) -> f64 {
    norm1(a, n) * norm1(&lu.inverse(), n)
}

/// rhs - A x.
pub(crate) fn residual_vec(a: &[C64], x: &[C64], rhs: &[C64], n: usize) -> Vec<C64> {
    let mut r = rhs.to_vec();
    for i in 0..n {
        let mut acc = C64::new(0.0, 0.0);
        for j in 0..n {
            acc += a[i * n + j] * x[j];
        }
        r[i] -= acc;
    }
    r
}

pub(crate) fn norm2(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Symmetric diagonal equilibration: returns (D A D, d) with
/// d_i = 1/sqrt(A_ii). Gram matrices get a unit diagonal, which makes the
/// condition estimate scale-free. Non-positive diagonals keep d_i = 1.
pub(crate) fn equilibrate(a: &[C64], n: usize) -> (Vec<C64>, Vec<f64>) {
    let d: Vec<f64> = (0..n)
        .map(|i| {
            let v = a[i * n + i].re;
            if v > 0.0 {
                1.0 / v.sqrt()
            } else {
                1.0
            }
        })
        .collect();
    let mut out = a.to_vec();
    for i in 0..n {
        for j in 0..n {
            out[i * n + j] *= d[i] * d[j];
        }
    }
    (out, d)
}

/// Cholesky factorization A = L L^H of a Hermitian matrix, column by
/// column, stopping at the first non-positive pivot. Returns the lower
/// factor (row-major, stride n) and the number of completed columns; every
/// leading m x m block with m <= completed is exactly factorized, which is
/// what the nested member scans need.
pub(crate) fn cholesky_prefix(a: &[C64], n: usize) -> (Vec<C64>, usize) {
    // Callers pass an equilibrated (unit-diagonal) Gram matrix, so a pivot
    // is the squared norm of the orthogonal residue the new member brings.
    // Below 1e-10 the prefix condition number is past ~1e12 (the cap the LU
    // path enforces) and the residue is rounding noise; factoring through
    // it turns the remaining columns into garbage that inflates every later
    // solve, so stop there instead.
    let mut l = vec![C64::new(0.0, 0.0); n * n];
    for j in 0..n {
        let mut d = a[j * n + j].re;
        for t in 0..j {
            d -= l[j * n + t].norm_sqr();
        }
        if !(d > 1e-10) {
            return (l, j);
        }
        let dj = d.sqrt();
        l[j * n + j] = C64::new(dj, 0.0);
        for i in j + 1..n {
            let mut acc = a[i * n + j];
            for t in 0..j {
                acc -= l[i * n + t] * l[j * n + t].conj();
            }
            l[i * n + j] = acc / dj;
        }
    }
    (l, n)
}

/// y = L^{-1} v over the leading m rows of a lower factor with stride n.
pub(crate) fn forward_solve(l: &[C64], n: usize, m: usize, v: &[C64]) -> Vec<C64> {
    let mut y = vec![C64::new(0.0, 0.0); m];
    for j in 0..m {
        let mut acc = v[j];
        for t in 0..j {
            acc -= l[j * n + t] * y[t];
        }
        y[j] = acc / l[j * n + j];
    }
    y
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    /// Hand-inverted 2x2 Hermitian oracle:
    /// A = [[2, 1-i], [1+i, 3]], det = 4,
    /// A^{-1} = (1/4) [[3, -(1-i)], [-(1+i), 2]].
    fn oracle() -> (Vec<C64>, Vec<C64>) {
        let a = vec![c(2.0, 0.0), c(1.0, -1.0), c(1.0, 1.0), c(3.0, 0.0)];
        let inv = vec![
            c(0.75, 0.0),
            c(-0.25, 0.25),
            c(-0.25, -0.25),
            c(0.5, 0.0),
        ];
        (a, inv)
    }

    #[test]
    fn solve_matches_hand_inverted_2x2() {
        let (a, inv) = oracle();
        let lu = lu_factor(&a, 2).unwrap();
        let rhs = vec![c(1.0, 2.0), c(-0.5, 0.3)];
        let x = lu.solve_refined(&a, &rhs);
        for i in 0..2 {
            let want = inv[i * 2] * rhs[0] + inv[i * 2 + 1] * rhs[1];
            assert!((x[i] - want).norm() < 1e-12, "row {i}: {} vs {}", x[i], want);
        }
    }

    #[test]
    fn inverse_matches_oracle_and_condition_is_consistent() {
        let (a, inv) = oracle();
        let lu = lu_factor(&a, 2).unwrap();
        let got = lu.inverse();
        for (g, w) in got.iter().zip(&inv) {
            assert!((g - w).norm() < 1e-13);
        }
        let cond = condition1(&a, &lu, 2);
        // Both column sums of |entries| peak at 3 + sqrt(2), and the inverse
        // scales that down by 4: cond = (3 + sqrt 2)^2 / 4 = (11 + 6 sqrt 2)/4.
        let want = (11.0 + 6.0 * 2.0f64.sqrt()) / 4.0;
        assert_abs_diff_eq!(cond, want, epsilon = 1e-12);
    }

    #[test]
    fn random_hermitian_system_solves_to_roundoff() {
        // Deterministic pseudo-random Hermitian diagonally dominant matrix.
        let n = 12;
        let mut a = vec![c(0.0, 0.0); n * n];
        let mut s = 0x9e3779b97f4a7c15u64;
        let mut rnd = || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (s >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        for i in 0..n {
            for j in 0..i {
                let v = c(rnd(), rnd());
                a[i * n + j] = v;
                a[j * n + i] = v.conj();
            }
            a[i * n + i] = c(8.0 + rnd(), 0.0);
        }
        let rhs: Vec<C64> = (0..n).map(|_| c(rnd(), rnd())).collect();
        let lu = lu_factor(&a, n).unwrap();
        let x = lu.solve_refined(&a, &rhs);
        let r = residual_vec(&a, &x, &rhs, n);
        assert!(norm2(&r) <= 1e-13 * norm2(&rhs), "residual {}", norm2(&r));
    }

    #[test]
    fn singular_matrix_is_reported() {
        let a = vec![c(1.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(1.0, 0.0)];
        match lu_factor(&a, 2) {
            Err(crate::Error::Singular { col }) => assert_eq!(col, 1),
            other => panic!("expected singular error, got {other:?}"),
        }
    }

    #[test]
    fn cholesky_reconstructs_and_respects_prefixes() {
        let (a, _) = oracle();
        let (l, done) = cholesky_prefix(&a, 2);
        assert_eq!(done, 2);
        // L = [[sqrt2, 0], [(1+i)/sqrt2, sqrt2]].
        let s2 = 2.0f64.sqrt();
        assert_abs_diff_eq!(l[0].re, s2, epsilon = 1e-14);
        assert!((l[2] - c(1.0 / s2, 1.0 / s2)).norm() < 1e-14);
        assert_abs_diff_eq!(l[3].re, s2, epsilon = 1e-14);
        // Reconstruct A = L L^H.
        for i in 0..2 {
            for j in 0..2 {
                let mut acc = c(0.0, 0.0);
                for t in 0..2 {
                    acc += l[i * 2 + t] * l[j * 2 + t].conj();
                }
                assert!((acc - a[i * 2 + j]).norm() < 1e-14);
            }
        }
        // The 1x1 prefix of L factors the 1x1 prefix of A.
        assert_abs_diff_eq!(l[0].norm_sqr(), a[0].re, epsilon = 1e-14);
    }

    #[test]
    fn cholesky_stops_at_indefinite_pivot() {
        // Second pivot is negative: A = [[1, 2], [2, 1]].
        let a = vec![c(1.0, 0.0), c(2.0, 0.0), c(2.0, 0.0), c(1.0, 0.0)];
        let (_, done) = cholesky_prefix(&a, 2);
        assert_eq!(done, 1);
    }

    #[test]
    fn forward_solve_inverts_lower_triangle() {
        let l = vec![c(2.0, 0.0), c(0.0, 0.0), c(1.0, 1.0), c(3.0, 0.0)];
        let v = vec![c(4.0, 0.0), c(5.0, 1.0)];
        let y = forward_solve(&l, 2, 2, &v);
        // y0 = 2; y1 = (5+i - (1+i)*2)/3 = (3 - i)/3.
        assert!((y[0] - c(2.0, 0.0)).norm() < 1e-14);
        assert!((y[1] - c(1.0, -1.0 / 3.0)).norm() < 1e-14);
    }

    #[test]
    fn equilibration_normalizes_gram_diagonals() {
        let a = vec![c(4.0, 0.0), c(2.0, -2.0), c(2.0, 2.0), c(16.0, 0.0)];
        let (ae, d) = equilibrate(&a, 2);
        assert_abs_diff_eq!(ae[0].re, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(ae[3].re, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(d[0], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(d[1], 0.25, epsilon = 1e-15);
        assert!((ae[1] - c(0.25, -0.25)).norm() < 1e-15);
    }
}
