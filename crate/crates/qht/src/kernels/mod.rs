//! Estimator kernels.
//!
//! A kernel K[O](x, phi) turns homodyne outcomes into an unbiased estimate
//! of <O>: averaging K over the quadrature data converges to the expectation
//! value. This module provides the polynomial kernels for normally ordered
//! moments (and the intensity/quadrature/amplitude specializations) plus the
//! matrix-element pattern kernels, and a [`KernelExpr`] type that carries a
//! base kernel together with a weighted null-function correction.

pub mod pattern;
pub mod special;

use crate::error::{Error, Result};
use crate::nullfns::NullFamily;
use crate::states::StateSpec;
use crate::C64;
use serde::{Deserialize, Serialize};
use special::{hermite, ln_factorial};
use std::sync::Arc;

/// Cap on moment-kernel order n + m.
pub const MAX_MOMENT_ORDER: usize = 64;

/// What a kernel estimates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelTarget {
    /// Normally ordered moment <a^dag^n a^m>.
    Moment { n: usize, m: usize },
    /// Photon number <a^dag a>; kernel 2x^2 - 1/2.
    Intensity,
    /// Quadrature <x_0> = Re <a>; kernel 2x cos(phi).
    Quadrature,
    /// Field amplitude <a>; kernel 2x e^{i phi}.
    Amplitude,
    /// Density-matrix element rho_nm = <n|rho|m>; pattern kernel.
    MatrixElement { n: usize, m: usize },
}

impl KernelTarget {
    /// Whether the estimand (and hence the kernel) is real-valued.
    pub fn is_real(&self) -> bool {
        match self {
            KernelTarget::Intensity | KernelTarget::Quadrature => true,
            KernelTarget::Amplitude => false,
            KernelTarget::Moment { n, m } | KernelTarget::MatrixElement { n, m } => n == m,
        }
    }

    /// Exact value of the estimand on a state.
    pub fn truth(&self, state: &StateSpec) -> Result<C64> {
        match self {
            KernelTarget::Moment { n, m } => state.normally_ordered_moment(*n, *m),
            KernelTarget::Intensity => state.normally_ordered_moment(1, 1),
            KernelTarget::Quadrature => Ok(C64::new(state.quadrature_moment(1, 0.0)?, 0.0)),
            KernelTarget::Amplitude => state.normally_ordered_moment(0, 1),
            KernelTarget::MatrixElement { n, m } => Ok(state.density_matrix_element(*n, *m)),
        }
    }

    /// Intrinsic noise of the corresponding direct measurement, where one is
    /// defined: photon-number variance, quadrature variance, or the joint
    /// amplitude bound.
    pub fn intrinsic_noise(&self, state: &StateSpec) -> Result<f64> {
        match self {
            KernelTarget::Intensity => state.photon_number_variance(),
            KernelTarget::Quadrature => state.quadrature_variance(0.0),
            KernelTarget::Amplitude => state.amplitude_intrinsic_noise(),
            _ => Err(Error::InvalidParameter {
                name: "target",
                why: "intrinsic noise is defined for intensity, quadrature, amplitude".into(),
            }),
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            KernelTarget::Moment { n, m } if n + m > MAX_MOMENT_ORDER => {
                Err(Error::IndexOutOfRange {
                    what: "moment kernel order n+m",
                    got: n + m,
                    cap: MAX_MOMENT_ORDER,
                })
            }
            KernelTarget::MatrixElement { n, m } => {
                let cap = pattern::MAX_LEVEL;
                if *n > cap || *m > cap {
                    Err(Error::IndexOutOfRange {
                        what: "matrix element level",
                        got: (*n).max(*m),
                        cap,
                    })
                } else {
                    Ok(())
                }
            }
            _ => Ok(()),
        }
    }
}

/// Moment kernel: averaging it over homodyne data gives <a^dag^n a^m>.
///
/// ```text
/// K(x, phi) = e^{i(m-n) phi} H_{n+m}(sqrt2 x) / (sqrt(2^{n+m}) C(n+m, n))
/// ```
pub fn richter_kernel(n: usize, m: usize, x: f64, phi: f64) -> Result<C64> {
    if n + m > MAX_MOMENT_ORDER {
        return Err(Error::IndexOutOfRange {
            what: "moment kernel order n+m",
            got: n + m,
            cap: MAX_MOMENT_ORDER,
        });
    }
    let h = hermite(n + m, std::f64::consts::SQRT_2 * x)?;
    let ln_div = 0.5 * (n + m) as f64 * std::f64::consts::LN_2 + ln_factorial(n + m)
        - ln_factorial(n)
        - ln_factorial(m);
    let mag = h * (-ln_div).exp();
    Ok(C64::from_polar(1.0, (m as f64 - n as f64) * phi) * mag)
}

/// A base kernel plus a null-function correction:
///
/// ```text
/// K(x, phi) = R(x, phi) + sum_j mu_j F_j(x, phi) + sum_j nu_j conj(F_j)(x, phi)
/// ```
///
/// With all coefficients zero this is just the base kernel. Real targets
/// must keep nu = conj(mu) so K stays real; complex targets may set the two
/// coefficient sets independently.
#[derive(Debug, Clone)]
pub struct KernelExpr {
    target: KernelTarget,
    family: Option<NullFamily>,
    mu: Vec<C64>,
    nu: Vec<C64>,
    pattern: Option<Arc<pattern::PatternTable>>,
}

impl KernelExpr {
    /// Bare base kernel for a target.
    pub fn base(target: KernelTarget) -> Result<Self> {
        target.validate()?;
        let pattern = match target {
            KernelTarget::MatrixElement { n, m } => Some(pattern::table(n, m)?),
            _ => None,
        };
        Ok(KernelExpr {
            target,
            family: None,
            mu: Vec::new(),
            nu: Vec::new(),
            pattern,
        })
    }

    /// Base kernel plus a family with all-zero coefficients.
    pub fn with_family(target: KernelTarget, family: NullFamily) -> Result<Self> {
        let mut k = Self::base(target)?;
        let m = family.len();
        k.family = Some(family);
        k.mu = vec![C64::new(0.0, 0.0); m];
        k.nu = vec![C64::new(0.0, 0.0); m];
        Ok(k)
    }

    pub fn target(&self) -> KernelTarget {
        self.target
    }

    pub fn family(&self) -> Option<&NullFamily> {
        self.family.as_ref()
    }

    pub fn coefficients(&self) -> (&[C64], &[C64]) {
        (&self.mu, &self.nu)
    }

    /// Set paired coefficients nu = conj(mu); the only form allowed for
    /// real targets.
    pub fn set_real_coefficients(&mut self, mu: &[C64]) -> Result<()> {
        self.check_len(mu.len())?;
        self.mu = mu.to_vec();
        self.nu = mu.iter().map(|c| c.conj()).collect();
        Ok(())
    }

    /// Set independent coefficient sets; rejected for real targets, which
    /// would silently grow an imaginary part otherwise.
    pub fn set_complex_coefficients(&mut self, mu: &[C64], nu: &[C64]) -> Result<()> {
        if self.target.is_real() {
            return Err(Error::InvalidParameter {
                name: "nu",
                why: "real targets need nu = conj(mu); use set_real_coefficients".into(),
            });
        }
        self.check_len(mu.len())?;
        self.check_len(nu.len())?;
        self.mu = mu.to_vec();
        self.nu = nu.to_vec();
        Ok(())
    }

    fn check_len(&self, got: usize) -> Result<()> {
        let want = self.family.as_ref().map(|f| f.len()).unwrap_or(0);
        if got != want {
            return Err(Error::DimensionMismatch {
                what: "kernel coefficients",
                expected: want,
                got,
            });
        }
        Ok(())
    }

    /// Base-kernel value R(x, phi).
    pub fn base_value(&self, x: f64, phi: f64) -> Result<C64> {
        match self.target {
            KernelTarget::Moment { n, m } => richter_kernel(n, m, x, phi),
            KernelTarget::Intensity => Ok(C64::new(2.0 * x * x - 0.5, 0.0)),
            KernelTarget::Quadrature => Ok(C64::new(2.0 * x * phi.cos(), 0.0)),
            KernelTarget::Amplitude => Ok(C64::from_polar(2.0 * x, phi)),
            KernelTarget::MatrixElement { n, m } => {
                let table = self.pattern.as_ref().expect("pattern table present");
                let f = table.f(x)?;
                Ok(C64::from_polar(1.0, (n as f64 - m as f64) * phi) * f)
            }
        }
    }

    /// Full kernel value; `scratch` avoids a per-call allocation in hot
    /// loops (it is resized as needed).
    pub fn eval_with_scratch(&self, x: f64, phi: f64, scratch: &mut Vec<C64>) -> Result<C64> {
        let mut v = self.base_value(x, phi)?;
        if let Some(fam) = &self.family {
            scratch.resize(fam.len(), C64::new(0.0, 0.0));
            fam.eval_into(x, phi, scratch);
            for ((f, mu), nu) in scratch.iter().zip(&self.mu).zip(&self.nu) {
                v += mu * f + nu * f.conj();
            }
        }
        Ok(v)
    }

    /// Full kernel value (allocating convenience form).
    pub fn eval(&self, x: f64, phi: f64) -> Result<C64> {
        let mut scratch = Vec::new();
        self.eval_with_scratch(x, phi, &mut scratch)
    }
}
