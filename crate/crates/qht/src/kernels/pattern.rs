//! Matrix-element kernels.
//!
//! Averaging e^{i(n-m) phi} f_nm(x) over homodyne data yields the
//! density-matrix element rho_nm in the number basis. The radial factor is
//! an oscillatory integral,
//!
//! ```text
//! f_nm(x) = (1/2) sqrt(m!/n!) Int_0^inf dk k e^{-k^2/8} (k/2)^{n-m}
//!           L_m^{n-m}(k^2/4) Re[(-i)^{n-m} e^{ikx}]        (n >= m)
//! ```
//!
//! with f_mn = f_nm. Direct evaluation is accurate but costs a quadrature
//! per point, so [`PatternTable`] samples f on a uniform grid wide enough
//! for any plausible quadrature record and interpolates cubically; points
//! beyond the grid fall back to the direct integral. f decays only like
//! 1/x^2 outside the classically allowed region, which is why the fallback
//! exists instead of clamping to zero.

use crate::error::{Error, Result};
use crate::integrate::composite_gl;
use crate::kernels::special::{laguerre_assoc, ln_factorial};
use crate::C64;
use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

/// Cap on the number-state index of a matrix-element kernel.
pub const MAX_LEVEL: usize = 32;

/// Grid spacing of the cached table. Cubic interpolation error grows like
/// (oscillation wavenumber)^4 h^4, so this step keeps every supported level
/// below ~5e-8 against the direct integral.
const GRID_H: f64 = 1.0 / 512.0;

/// Radial k-integrand split into a phase-free weight g(k) (nodes reusable
/// across x) and the trig factor chosen by (n-m) mod 4.
struct KQuad {
    ks: Vec<f64>,
    wg: Vec<f64>,
    dmod4: usize,
}

impl KQuad {
    fn build(hi: usize, lo: usize, kmax: f64, panels: usize) -> Self {
        let d = hi - lo;
        let pref = 0.5 * (0.5 * (ln_factorial(lo) - ln_factorial(hi))).exp();
        let (ks, ws) = composite_gl(0.0, kmax, panels, 16);
        let wg = ks
            .iter()
            .zip(&ws)
            .map(|(&k, &w)| {
                w * pref
                    * k
                    * (-k * k / 8.0).exp()
                    * (k / 2.0).powi(d as i32)
                    * laguerre_assoc(lo, d, k * k / 4.0)
            })
            .collect();
        KQuad { ks, wg, dmod4: d % 4 }
    }

    fn eval(&self, x: f64) -> f64 {
        let mut acc = 0.0;
        match self.dmod4 {
            0 => {
                for (k, wg) in self.ks.iter().zip(&self.wg) {
                    acc += wg * (k * x).cos();
                }
            }
            1 => {
                for (k, wg) in self.ks.iter().zip(&self.wg) {
                    acc += wg * (k * x).sin();
                }
            }
            2 => {
                for (k, wg) in self.ks.iter().zip(&self.wg) {
                    acc -= wg * (k * x).cos();
                }
            }
            _ => {
                for (k, wg) in self.ks.iter().zip(&self.wg) {
                    acc -= wg * (k * x).sin();
                }
            }
        }
        acc
    }
}

fn check_levels(n: usize, m: usize) -> Result<(usize, usize)> {
    let (hi, lo) = if n >= m { (n, m) } else { (m, n) };
    if hi > MAX_LEVEL {
        return Err(Error::IndexOutOfRange {
            what: "matrix element level",
            got: hi,
            cap: MAX_LEVEL,
        });
    }
    Ok((hi, lo))
}

fn kmax_for(hi: usize, lo: usize) -> f64 {
    // The weight peaks near k = 2 sqrt(hi+lo+1); sixteen more units of k
    // put the Gaussian cutoff below 1e-15 of the peak.
    2.0 * ((hi + lo + 1) as f64).sqrt() + 16.0
}

fn base_panels(kmax: f64, xmax: f64) -> usize {
    // Resolve both the Laguerre oscillation and the cos(kx) oscillation:
    // keep panels no wider than ~6 / (1 + |x|) so a 16-point rule sees at
    // most about one trig period per panel.
    ((kmax * (1.0 + xmax) / 6.0).ceil() as usize).max(8)
}

/// Radial factor f_nm(x) by direct adaptive quadrature.
pub fn f_direct(n: usize, m: usize, x: f64) -> Result<f64> {
    let (hi, lo) = check_levels(n, m)?;
    let kmax = kmax_for(hi, lo);
    let mut panels = base_panels(kmax, x.abs());
    let mut prev: Option<f64> = None;
    let mut change = f64::INFINITY;
    let mut tol = 0.0;
    for _ in 0..6 {
        let val = KQuad::build(hi, lo, kmax, panels).eval(x);
        if let Some(p) = prev {
            change = (val - p).abs();
            tol = 1e-11 * val.abs().max(1.0);
            if change <= tol {
                return Ok(val);
            }
        }
        prev = Some(val);
        panels *= 2;
    }
    Err(Error::QuadratureNonConvergence {
        what: format!("matrix-element kernel f[{hi},{lo}] at x={x}"),
        change,
        tol,
    })
}

/// Matrix-element kernel value e^{i(n-m) phi} f_nm(x), via the cached table.
pub fn pattern_kernel(n: usize, m: usize, x: f64, phi: f64) -> Result<C64> {
    let t = table(n, m)?;
    let f = t.f(x)?;
    Ok(C64::from_polar(1.0, (n as f64 - m as f64) * phi) * f)
}

/// Tabulated f_nm on a uniform grid with cubic interpolation.
#[derive(Debug)]
pub struct PatternTable {
    hi: usize,
    lo: usize,
    half_width: f64,
    vals: Vec<f64>,
}

impl PatternTable {
    /// Build the table for levels (n, m). The grid spans the region where
    /// quadrature samples of states up to this level actually land.
    pub fn build(n: usize, m: usize) -> Result<Self> {
        let (hi, lo) = check_levels(n, m)?;
        // Quadrature outcomes for level n concentrate within
        // |x| <~ sqrt(n + 1/2); nine extra units (pre-scaling) leave the
        // out-of-grid fallback essentially unreachable in practice.
        let half_width = ((hi as f64).sqrt() + 9.0) / std::f64::consts::SQRT_2;
        let npts = 2 * (half_width / GRID_H).ceil() as usize + 1;
        let kmax = kmax_for(hi, lo);
        let panels = base_panels(kmax, half_width);
        let quad = KQuad::build(hi, lo, kmax, panels);
        let fine = KQuad::build(hi, lo, kmax, 2 * panels);
        let x_at = |i: usize| -half_width + GRID_H * i as f64;
        let vals: Vec<f64> = (0..npts).map(|i| fine.eval(x_at(i))).collect();
        // Convergence check on a probe subset: the refined rule must agree
        // with the base rule, otherwise the panel budget is too small.
        let mut worst = 0.0f64;
        for i in (0..npts).step_by(31) {
            worst = worst.max((vals[i] - quad.eval(x_at(i))).abs());
        }
        if worst > 1e-10 {
            return Err(Error::QuadratureNonConvergence {
                what: format!("matrix-element kernel table f[{hi},{lo}]"),
                change: worst,
                tol: 1e-10,
            });
        }
        Ok(PatternTable {
            hi,
            lo,
            half_width,
            vals,
        })
    }

    /// Half-width of the tabulated grid.
    pub fn grid_half_width(&self) -> f64 {
        self.half_width
    }

    /// Radial factor f(x): cubic interpolation on the grid, direct
    /// quadrature outside it.
    pub fn f(&self, x: f64) -> Result<f64> {
        if !x.is_finite() {
            return Err(Error::InvalidParameter {
                name: "x",
                why: "quadrature value must be finite".into(),
            });
        }
        if x.abs() >= self.half_width - 2.0 * GRID_H {
            return f_direct(self.hi, self.lo, x);
        }
        let u = (x + self.half_width) / GRID_H;
        let i = u.floor() as usize;
        let t = u - i as f64;
        // 4-point Lagrange weights on nodes i-1, i, i+1, i+2.
        let wm1 = -t * (t - 1.0) * (t - 2.0) / 6.0;
        let w0 = (t * t - 1.0) * (t - 2.0) / 2.0;
        let w1 = -t * (t + 1.0) * (t - 2.0) / 2.0;
        let w2 = t * (t * t - 1.0) / 6.0;
        Ok(wm1 * self.vals[i - 1] + w0 * self.vals[i] + w1 * self.vals[i + 1]
            + w2 * self.vals[i + 2])
    }
}

/// Process-wide table cache. Tables are immutable once built, so sharing
/// an Arc per (hi, lo) pair is safe and keeps repeated kernel construction
/// cheap.
pub fn table(n: usize, m: usize) -> Result<Arc<PatternTable>> {
    static CACHE: OnceLock<Mutex<HashMap<(usize, usize), Arc<PatternTable>>>> = OnceLock::new();
    let (hi, lo) = check_levels(n, m)?;
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(t) = cache.lock().unwrap().get(&(hi, lo)) {
        return Ok(Arc::clone(t));
    }
    // Build outside the lock; a racing duplicate build is harmless.
    let built = Arc::new(PatternTable::build(hi, lo)?);
    let mut guard = cache.lock().unwrap();
    let entry = guard.entry((hi, lo)).or_insert_with(|| Arc::clone(&built));
    Ok(Arc::clone(entry))
}
