//! Single-mode state specifications and everything derived from their Fock
//! amplitudes: normally ordered moments, quadrature moments, quadrature
//! distributions, density-matrix elements, intrinsic noises.
//!
//! Conventions: annihilation operator a, quadrature
//! x_phi = (a e^{-i phi} + a^dag e^{i phi}) / 2, vacuum variance 1/4.
//! Every state is represented by amplitudes c_0..c_nmax in the Fock basis;
//! all exact expectation values are computed from that one representation so
//! analytic shortcuts elsewhere can be checked against a single code path.

use crate::error::{Error, Result};
use crate::kernels::special::{ln_factorial, MAX_ORDER};
use crate::C64;
use serde::{Deserialize, Serialize};

/// Largest supported Fock cutoff (matches the eigenfunction order cap).
pub const MAX_NMAX: usize = MAX_ORDER;

/// Norm a truncated amplitude vector must reach.
pub const DEFICIT_LIMIT: f64 = 1e-10;

/// Families of pure states the simulator knows how to prepare.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum StateKind {
    /// |alpha>, Poissonian photon statistics.
    Coherent { alpha: C64 },
    /// S(r e^{i theta}) |0>, only even levels populated.
    SqueezedVacuum { r: f64, theta: f64 },
    /// Number state |n>.
    Fock { n: usize },
    /// Even cat (|alpha> + |-alpha>), normalized to unit norm.
    Cat { alpha: C64 },
}

impl StateKind {
    /// Squeezed vacuum with a given mean photon number, squeeze phase 0.
    pub fn squeezed_from_mean_photons(nbar: f64) -> Result<Self> {
        if !(nbar >= 0.0) {
            return Err(Error::InvalidParameter {
                name: "nbar",
                why: format!("mean photon number must be >= 0, got {nbar}"),
            });
        }
        Ok(StateKind::SqueezedVacuum {
            r: nbar.sqrt().asinh(),
            theta: 0.0,
        })
    }

    /// Crude energy scale used to pick a default truncation.
    pub(crate) fn energy_hint(&self) -> f64 {
        match self {
            StateKind::Coherent { alpha } | StateKind::Cat { alpha } => alpha.norm_sqr(),
            StateKind::SqueezedVacuum { r, .. } => r.sinh().powi(2),
            StateKind::Fock { n } => *n as f64,
        }
    }

    fn validate(&self) -> Result<()> {
        let finite = |v: f64, name: &'static str| {
            if v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidParameter {
                    name,
                    why: format!("must be finite, got {v}"),
                })
            }
        };
        match self {
            StateKind::Coherent { alpha } | StateKind::Cat { alpha } => {
                finite(alpha.re, "alpha.re")?;
                finite(alpha.im, "alpha.im")
            }
            StateKind::SqueezedVacuum { r, theta } => {
                finite(*r, "r")?;
                finite(*theta, "theta")?;
                if *r < 0.0 {
                    return Err(Error::InvalidParameter {
                        name: "r",
                        why: format!("squeeze magnitude must be >= 0, got {r}"),
                    });
                }
                Ok(())
            }
            StateKind::Fock { n } => {
                if *n > MAX_NMAX {
                    return Err(Error::IndexOutOfRange {
                        what: "Fock level",
                        got: *n,
                        cap: MAX_NMAX,
                    });
                }
                Ok(())
            }
        }
    }
}

/// A state prepared for simulation: kind plus truncated Fock amplitudes.
#[derive(Debug, Clone)]
pub struct StateSpec {
    kind: StateKind,
    amps: Vec<C64>,
}

impl StateSpec {
    /// Build with an automatically chosen truncation: start from an
    /// energy-based guess, then grow until the norm deficit is within
    /// [`DEFICIT_LIMIT`].
    pub fn new(kind: StateKind) -> Result<Self> {
        kind.validate()?;
        let e = kind.energy_hint();
        let guess = (e + 8.0 * (e + 1.0).sqrt()).ceil() as usize;
        let mut nmax = guess.max(32);
        if let StateKind::Fock { n } = kind {
            nmax = nmax.max(n);
        }
        nmax = nmax.min(MAX_NMAX);
        loop {
            let amps = compute_amplitudes(&kind, nmax);
            let deficit = norm_deficit_of(&amps);
            if deficit <= DEFICIT_LIMIT {
                return Ok(StateSpec { kind, amps });
            }
            if nmax == MAX_NMAX {
                return Err(Error::TruncationInsufficient {
                    nmax,
                    deficit,
                    limit: DEFICIT_LIMIT,
                });
            }
            nmax = (nmax * 2).min(MAX_NMAX);
        }
    }

    /// Build with an explicit truncation; rejects cutoffs that leave more
    /// than [`DEFICIT_LIMIT`] of the norm outside.
    pub fn with_nmax(kind: StateKind, nmax: usize) -> Result<Self> {
        kind.validate()?;
        if nmax > MAX_NMAX {
            return Err(Error::IndexOutOfRange {
                what: "nmax",
                got: nmax,
                cap: MAX_NMAX,
            });
        }
        if let StateKind::Fock { n } = kind {
            if n > nmax {
                return Err(Error::IndexOutOfRange {
                    what: "Fock level",
                    got: n,
                    cap: nmax,
                });
            }
        }
        let amps = compute_amplitudes(&kind, nmax);
        let deficit = norm_deficit_of(&amps);
        if deficit > DEFICIT_LIMIT {
            return Err(Error::TruncationInsufficient {
                nmax,
                deficit,
                limit: DEFICIT_LIMIT,
            });
        }
        Ok(StateSpec { kind, amps })
    }

    pub fn kind(&self) -> &StateKind {
        &self.kind
    }

    pub fn nmax(&self) -> usize {
        self.amps.len() - 1
    }

    /// Fock amplitude c_n (0 beyond the truncation).
    pub fn amplitude(&self, n: usize) -> C64 {
        self.amps.get(n).copied().unwrap_or(C64::new(0.0, 0.0))
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amps
    }

    /// 1 - sum |c_n|^2 (roundoff can make this slightly negative).
    pub fn norm_deficit(&self) -> f64 {
        norm_deficit_of(&self.amps)
    }

    /// Density-matrix element rho_nm = c_n conj(c_m).
    pub fn density_matrix_element(&self, n: usize, m: usize) -> C64 {
        self.amplitude(n) * self.amplitude(m).conj()
    }

    /// Normally ordered moment <a^dag^s a^k> on the truncated amplitudes.
    ///
    /// Requires s + k <= nmax so the ladder products stay inside the kept
    /// levels.
    pub fn normally_ordered_moment(&self, s: usize, k: usize) -> Result<C64> {
        let nmax = self.nmax();
        if s + k > nmax {
            return Err(Error::IndexOutOfRange {
                what: "moment order s+k",
                got: s + k,
                cap: nmax,
            });
        }
        // <a^dag^s a^k> = sum_j conj(c_{j+s}) c_{j+k} sqrt((j+s)!/j!) sqrt((j+k)!/j!)
        let mut acc = C64::new(0.0, 0.0);
        for j in 0..=(nmax - s.max(k)) {
            let amp = self.amps[j + s].conj() * self.amps[j + k];
            if amp == C64::new(0.0, 0.0) {
                continue;
            }
            let lnw = 0.5
                * (ln_factorial(j + s) - ln_factorial(j) + ln_factorial(j + k)
                    - ln_factorial(j));
            acc += amp * lnw.exp();
        }
        Ok(acc)
    }

    /// Mean photon number <a^dag a>.
    pub fn mean_photons(&self) -> f64 {
        self.amps
            .iter()
            .enumerate()
            .map(|(n, c)| n as f64 * c.norm_sqr())
            .sum()
    }

    /// Quadrature moment <x_phi^k> from normally ordered moments:
    /// <x_phi^k> = (k!/2^k) sum_{p,s} <a^dag^s a^{k-2p-s}>
    ///             e^{i(2p+2s-k) phi} / (2^p p! s! (k-2p-s)!).
    pub fn quadrature_moment(&self, k: usize, phi: f64) -> Result<f64> {
        let mut acc = C64::new(0.0, 0.0);
        for p in 0..=(k / 2) {
            for s in 0..=(k - 2 * p) {
                let q = k - 2 * p - s;
                let lnc = ln_factorial(k)
                    - (k + p) as f64 * std::f64::consts::LN_2
                    - ln_factorial(p)
                    - ln_factorial(s)
                    - ln_factorial(q);
                let phase = C64::from_polar(1.0, (2 * p + 2 * s) as f64 * phi - k as f64 * phi);
                acc += self.normally_ordered_moment(s, q)? * phase * lnc.exp();
            }
        }
        debug_assert!(
            acc.im.abs() <= 1e-10 * acc.re.abs().max(1.0),
            "quadrature moment must be real, got {acc}"
        );
        Ok(acc.re)
    }

    /// Quadrature distribution p(x, phi) = |sum_n c_n e^{-i n phi} psi_n(x)|^2.
    pub fn quadrature_pdf(&self, x: f64, phi: f64) -> f64 {
        let psis = psi_all(self.nmax(), x);
        let mut amp = C64::new(0.0, 0.0);
        // Phase factors by iterated multiplication; error growth is
        // negligible at nmax <= 512.
        let step = C64::from_polar(1.0, -phi);
        let mut ph = C64::new(1.0, 0.0);
        for (c, psi) in self.amps.iter().zip(&psis) {
            amp += c * ph * *psi;
            ph *= step;
        }
        amp.norm_sqr()
    }

    /// Photon-number variance <Delta n^2>.
    pub fn photon_number_variance(&self) -> Result<f64> {
        let n1 = self.normally_ordered_moment(1, 1)?.re;
        let n2 = self.normally_ordered_moment(2, 2)?.re;
        Ok(n2 + n1 - n1 * n1)
    }

    /// Quadrature variance <Delta x_phi^2>.
    pub fn quadrature_variance(&self, phi: f64) -> Result<f64> {
        let m1 = self.quadrature_moment(1, phi)?;
        let m2 = self.quadrature_moment(2, phi)?;
        Ok(m2 - m1 * m1)
    }

    /// Intrinsic noise of a joint amplitude measurement,
    /// (<a^dag a> + 1 - |<a>|^2) / 2: the best any phase-insensitive joint
    /// measurement of both quadratures can do.
    pub fn amplitude_intrinsic_noise(&self) -> Result<f64> {
        let n = self.normally_ordered_moment(1, 1)?.re;
        let a = self.normally_ordered_moment(0, 1)?;
        Ok(0.5 * (n + 1.0 - a.norm_sqr()))
    }
}

fn norm_deficit_of(amps: &[C64]) -> f64 {
    1.0 - amps.iter().map(|c| c.norm_sqr()).sum::<f64>()
}

fn compute_amplitudes(kind: &StateKind, nmax: usize) -> Vec<C64> {
    let mut c = vec![C64::new(0.0, 0.0); nmax + 1];
    match kind {
        StateKind::Coherent { alpha } => {
            coherent_amplitudes(*alpha, &mut c);
        }
        StateKind::Fock { n } => {
            c[*n] = C64::new(1.0, 0.0);
        }
        StateKind::SqueezedVacuum { r, theta } => {
            // c_{2m} = (-e^{i theta} tanh r)^m sqrt((2m)!) / (2^m m! sqrt(cosh r))
            let mut cur = C64::new(1.0 / r.cosh().sqrt(), 0.0);
            let factor = -C64::from_polar(r.tanh(), *theta);
            let mut m = 0usize;
            loop {
                c[2 * m] = cur;
                if 2 * (m + 1) > nmax {
                    break;
                }
                let mf = m as f64;
                cur *= factor * ((2.0 * mf + 1.0) * (2.0 * mf + 2.0)).sqrt()
                    / (2.0 * (mf + 1.0));
                m += 1;
            }
        }
        StateKind::Cat { alpha } => {
            // (|alpha> + |-alpha>) keeps even levels; explicit normalization.
            coherent_amplitudes(*alpha, &mut c);
            let norm = 1.0 / (2.0 * (1.0 + (-2.0 * alpha.norm_sqr()).exp())).sqrt();
            for (n, cn) in c.iter_mut().enumerate() {
                *cn = if n % 2 == 0 {
                    *cn * 2.0 * norm
                } else {
                    C64::new(0.0, 0.0)
                };
            }
        }
    }
    c
}

fn coherent_amplitudes(alpha: C64, out: &mut [C64]) {
    let mut cur = C64::new((-0.5 * alpha.norm_sqr()).exp(), 0.0);
    for (n, slot) in out.iter_mut().enumerate() {
        *slot = cur;
        cur *= alpha / ((n + 1) as f64).sqrt();
    }
}

/// psi_0(x)..psi_nmax(x) in one recurrence pass.
///
/// Plain (unscaled) recurrence; valid while e^{-x^2} is representable,
/// which covers every |x| a quadrature distribution can ask about.
pub(crate) fn psi_all(nmax: usize, x: f64) -> Vec<f64> {
    debug_assert!(x * x < 700.0, "psi_all out of supported range: x={x}");
    let mut out = vec![0.0; nmax + 1];
    out[0] = (2.0 / std::f64::consts::PI).powf(0.25) * (-x * x).exp();
    if nmax == 0 {
        return out;
    }
    out[1] = 2.0 * x * out[0];
    for k in 1..nmax {
        out[k + 1] = (2.0 * x * out[k] - (k as f64).sqrt() * out[k - 1])
            / ((k + 1) as f64).sqrt();
    }
    out
}
