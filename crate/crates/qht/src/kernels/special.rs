//! Special functions for the kernel machinery: physicists' Hermite
//! polynomials, harmonic-oscillator eigenfunctions in the vacuum-variance-1/4
//! quadrature convention, associated Laguerre polynomials, log-factorials.

use crate::error::{Error, Result};
use std::sync::OnceLock;

/// Hard cap on polynomial/eigenfunction order.
pub const MAX_ORDER: usize = 512;

const LN_FACT_LEN: usize = 2 * MAX_ORDER + 2;

/// ln(n!) from a cached cumulative table, exact to f64 rounding.
pub fn ln_factorial(n: usize) -> f64 {
    static TABLE: OnceLock<Vec<f64>> = OnceLock::new();
    let t = TABLE.get_or_init(|| {
        let mut v = Vec::with_capacity(LN_FACT_LEN);
        v.push(0.0);
        let mut acc = 0.0f64;
        for k in 1..LN_FACT_LEN {
            acc += (k as f64).ln();
            v.push(acc);
        }
        v
    });
    assert!(n < LN_FACT_LEN, "ln_factorial: n={n} out of table range");
    t[n]
}

/// Physicists' Hermite polynomial H_n(y) by the three-term recurrence
/// H_{k+1} = 2 y H_k - 2 k H_{k-1}.
///
/// Values grow roughly like (2y)^n; arguments that push past the f64 range
/// are reported as an overflow error rather than returned as inf.
pub fn hermite(n: usize, y: f64) -> Result<f64> {
    if n > MAX_ORDER {
        return Err(Error::IndexOutOfRange {
            what: "hermite order",
            got: n,
            cap: MAX_ORDER,
        });
    }
    if n == 0 {
        return Ok(1.0);
    }
    let mut h0 = 1.0f64;
    let mut h1 = 2.0 * y;
    for k in 1..n {
        let h2 = 2.0 * y * h1 - 2.0 * k as f64 * h0;
        h0 = h1;
        h1 = h2;
    }
    if !h1.is_finite() {
        return Err(Error::Overflow {
            what: format!("hermite({n}, {y})"),
        });
    }
    Ok(h1)
}

/// Oscillator eigenfunction psi_n(x) = (2/pi)^{1/4} H_n(sqrt2 x) e^{-x^2} / sqrt(2^n n!).
///
/// Evaluated with the normalized recurrence
/// psi_{k+1} = (2 x psi_k - sqrt(k) psi_{k-1}) / sqrt(k+1),
/// which keeps every intermediate O(1) inside the classically allowed
/// region. Deep in the tail the seed e^{-x^2} can underflow while psi_n
/// itself is representable, so the recurrence runs on a rescaled value with
/// a separate log-scale accumulator.
pub fn oscillator_psi(n: usize, x: f64) -> Result<f64> {
    if n > MAX_ORDER {
        return Err(Error::IndexOutOfRange {
            what: "oscillator level",
            got: n,
            cap: MAX_ORDER,
        });
    }
    let norm = (2.0 / std::f64::consts::PI).powf(0.25);
    // Seed psi_0 = norm * e^{-x^2 + lnscale_compensation}.
    let mut lnscale = 0.0f64;
    let mut arg = -x * x;
    if arg < -600.0 {
        lnscale = arg + 1.0;
        arg = -1.0;
    }
    let mut t0 = norm * arg.exp();
    if n == 0 {
        return Ok(finish(t0, lnscale));
    }
    let mut t1 = 2.0 * x * t0;
    for k in 1..n {
        let t2 = (2.0 * x * t1 - (k as f64).sqrt() * t0) / ((k + 1) as f64).sqrt();
        t0 = t1;
        t1 = t2;
        let m = t0.abs().max(t1.abs());
        if m > 1e250 {
            t0 *= 1e-250;
            t1 *= 1e-250;
            lnscale += 250.0 * std::f64::consts::LN_10;
        } else if m != 0.0 && m < 1e-250 {
            t0 *= 1e250;
            t1 *= 1e250;
            lnscale -= 250.0 * std::f64::consts::LN_10;
        }
    }
    Ok(finish(t1, lnscale))
}

fn finish(t: f64, lnscale: f64) -> f64 {
    if lnscale == 0.0 {
        return t;
    }
    if t == 0.0 {
        return 0.0;
    }
    let r = t.abs().ln() + lnscale;
    if r < -745.0 {
        0.0
    } else {
        t.signum() * r.exp()
    }
}

/// Associated Laguerre polynomial L_m^(d)(z), d >= 0, by the recurrence
/// (j+1) L_{j+1}^d = (2j + 1 + d - z) L_j^d - (j + d) L_{j-1}^d.
pub fn laguerre_assoc(m: usize, d: usize, z: f64) -> f64 {
    let df = d as f64;
    if m == 0 {
        return 1.0;
    }
    let mut l0 = 1.0f64;
    let mut l1 = 1.0 + df - z;
    for j in 1..m {
        let jf = j as f64;
        let l2 = ((2.0 * jf + 1.0 + df - z) * l1 - (jf + df) * l0) / (jf + 1.0);
        l0 = l1;
        l1 = l2;
    }
    l1
}
