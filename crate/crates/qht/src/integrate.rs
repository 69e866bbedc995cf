//! Deterministic quadrature used by the exact code paths.
//!
//! Everything here is plain Gauss-Legendre: single panels, composite rules,
//! and a tomographic phase-space grid that carries precomputed values of a
//! quadrature distribution p(x, phi) so many kernels can be averaged against
//! the same state cheaply.

use crate::error::{Error, Result};
use crate::C64;

/// Gauss-Legendre nodes and weights on [-1, 1].
///
/// Newton iteration on the Legendre recurrence; accurate to machine
/// precision for the orders used here (<= a few hundred).
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "need at least one node");
    let mut xs = vec![0.0; n];
    let mut ws = vec![0.0; n];
    // Nodes come in +/- pairs; solve for the non-negative half.
    let m = n.div_ceil(2);
    for i in 0..m {
        // Tricomi-style initial guess.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            // P_n(x) and P_n'(x) by upward recurrence.
            let mut p0 = 1.0;
            let mut p1 = x;
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        xs[i] = -x;
        xs[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        ws[i] = w;
        ws[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        xs[n / 2] = 0.0;
    }
    (xs, ws)
}

/// Nodes and weights for a composite rule: `panels` equal panels on [a, b],
/// `order` Gauss-Legendre points per panel.
pub fn composite_gl(a: f64, b: f64, panels: usize, order: usize) -> (Vec<f64>, Vec<f64>) {
    let (xs0, ws0) = gauss_legendre(order);
    let mut xs = Vec::with_capacity(panels * order);
    let mut ws = Vec::with_capacity(panels * order);
    let h = (b - a) / panels as f64;
    for p in 0..panels {
        let lo = a + p as f64 * h;
        let mid = lo + 0.5 * h;
        for (x0, w0) in xs0.iter().zip(&ws0) {
            xs.push(mid + 0.5 * h * x0);
            ws.push(0.5 * h * w0);
        }
    }
    (xs, ws)
}

/// Integrate `f` on [a, b], doubling the panel count until two successive
/// composite rules agree to `tol` (absolute). Errors out instead of
/// returning a value that never stabilized.
pub fn integrate_adaptive<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64, what: &str) -> Result<f64> {
    let order = 16;
    let mut panels = 4;
    let mut prev = f64::NAN;
    for _ in 0..12 {
        let (xs, ws) = composite_gl(a, b, panels, order);
        let cur: f64 = xs.iter().zip(&ws).map(|(x, w)| w * f(*x)).sum();
        if (cur - prev).abs() <= tol {
            return Ok(cur);
        }
        prev = cur;
        panels *= 2;
    }
    Err(Error::QuadratureNonConvergence {
        what: what.to_string(),
        change: f64::NAN,
        tol,
    })
}

/// Tensor-product grid for tomographic averages
/// integral dphi/pi on [0, pi]  x  integral dx of p(x, phi) f(x, phi).
///
/// The distribution values are evaluated once at construction; `average`
/// then costs one pass over the grid per kernel.
pub struct TomoGrid {
    pub xs: Vec<f64>,
    pub phis: Vec<f64>,
    /// Combined weight w_x * w_phi / pi times p(x, phi), flattened with x fastest.
    wp: Vec<f64>,
}

impl TomoGrid {
    /// Build from a quadrature distribution. `xmax` must cover essentially
    /// all probability mass; `nx_panels`/`nphi_panels` control resolution
    /// (16 Gauss-Legendre points per panel).
    pub fn build<P: Fn(f64, f64) -> f64>(
        pdf: P,
        xmax: f64,
        nx_panels: usize,
        nphi_panels: usize,
    ) -> Self {
        let (xs, wxs) = composite_gl(-xmax, xmax, nx_panels, 16);
        let (phis, wphis) = composite_gl(0.0, std::f64::consts::PI, nphi_panels, 16);
        let inv_pi = 1.0 / std::f64::consts::PI;
        let mut wp = Vec::with_capacity(xs.len() * phis.len());
        for (phi, wphi) in phis.iter().zip(&wphis) {
            for (x, wx) in xs.iter().zip(&wxs) {
                wp.push(wx * wphi * inv_pi * pdf(*x, *phi));
            }
        }
        TomoGrid { xs, phis, wp }
    }

    /// Tomographic average of a complex kernel.
    pub fn average<F: Fn(f64, f64) -> C64>(&self, f: F) -> C64 {
        let mut acc = C64::new(0.0, 0.0);
        let nx = self.xs.len();
        for (j, phi) in self.phis.iter().enumerate() {
            let row = &self.wp[j * nx..(j + 1) * nx];
            for (x, w) in self.xs.iter().zip(row) {
                acc += f(*x, *phi) * *w;
            }
        }
        acc
    }

    /// Total mass of the tabulated distribution (should be ~1; useful as a
    /// resolution check).
    pub fn mass(&self) -> f64 {
        self.wp.iter().sum()
    }

    /// Per-x-node weights of the phase factor e^{i q phi}:
    ///
    /// ```text
    /// out[i] = sum_j w(x_i, phi_j) e^{i q phi_j}
    /// ```
    ///
    /// Averaging a separable kernel g(x) e^{i q phi} then reduces to a dot
    /// product of g over the x nodes, which lets many kernels share one pass
    /// over the full grid.
    pub fn phase_profile(&self, q: i64) -> Vec<C64> {
        let nx = self.xs.len();
        let mut out = vec![C64::new(0.0, 0.0); nx];
        for (j, phi) in self.phis.iter().enumerate() {
            let e = C64::from_polar(1.0, q as f64 * phi);
            let row = &self.wp[j * nx..(j + 1) * nx];
            for (o, w) in out.iter_mut().zip(row) {
                *o += e * *w;
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn gl_nodes_match_known_five_point() {
        let (xs, ws) = gauss_legendre(5);
        // Abramowitz & Stegun table 25.4.
        assert_relative_eq!(xs[0], -0.906179845938664, epsilon = 1e-14);
        assert_relative_eq!(xs[1], -0.538469310105683, epsilon = 1e-14);
        assert_relative_eq!(xs[2], 0.0, epsilon = 1e-15);
        assert_relative_eq!(ws[0], 0.236926885056189, epsilon = 1e-14);
        assert_relative_eq!(ws[2], 0.568888888888889, epsilon = 1e-14);
    }

    #[test]
    fn gl_exact_for_polynomials() {
        // n-point rule integrates degree 2n-1 exactly.
        let (xs, ws) = gauss_legendre(8);
        for k in 0..16usize {
            let got: f64 = xs.iter().zip(&ws).map(|(x, w)| w * x.powi(k as i32)).sum();
            let want = if k % 2 == 0 { 2.0 / (k as f64 + 1.0) } else { 0.0 };
            assert_relative_eq!(got, want, epsilon = 1e-13);
        }
    }

    #[test]
    fn composite_integrates_gaussian() {
        let (xs, ws) = composite_gl(-8.0, 8.0, 16, 16);
        let got: f64 = xs
            .iter()
            .zip(&ws)
            .map(|(x, w)| w * (-x * x).exp())
            .sum();
        assert_relative_eq!(got, std::f64::consts::PI.sqrt(), epsilon = 1e-13);
    }

    #[test]
    fn adaptive_converges_and_reports_failure() {
        let v = integrate_adaptive(|x: f64| (-2.0 * x * x).exp(), -6.0, 6.0, 1e-12, "gauss").unwrap();
        assert_relative_eq!(v, (std::f64::consts::PI / 2.0).sqrt(), epsilon = 1e-11);
    }

    #[test]
    fn tomo_grid_normalizes_vacuum() {
        // Vacuum quadrature distribution, phase independent.
        let pdf = |x: f64, _phi: f64| (2.0 / std::f64::consts::PI).sqrt() * (-2.0 * x * x).exp();
        let grid = TomoGrid::build(pdf, 6.0, 8, 4);
        assert_relative_eq!(grid.mass(), 1.0, epsilon = 1e-12);
        let m2 = grid.average(|x, _| C64::new(x * x, 0.0));
        assert_relative_eq!(m2.re, 0.25, epsilon = 1e-12);
        assert!(m2.im.abs() < 1e-15);
    }
}
