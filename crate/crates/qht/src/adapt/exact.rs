//! Exact tomographic averages: analytic phase-averaged monomial moments,
//! closed-form system matrices and vectors for polynomial kernels, and a
//! cached two-dimensional quadrature engine for the pattern kernels (which
//! have no closed-form moments).
//!
//! The workhorse identity expands a quadrature power in normally ordered
//! ladder moments,
//!
//! ```text
//! x^K e^{iq phi}  ->  sum over (p, s) of
//!     K! / (2^{K+p} p! s! (K-2p-s)!) <a^dag^s a^{K-2p-s}>
//!     * PhiAvg(q + 2p + 2s - K)
//! ```
//!
//! where PhiAvg is the phase average of e^{i m phi} over [0, pi). Every
//! polynomial kernel and every null-function product reduces to sums of
//! such monomials.

use std::collections::HashMap;
use std::f64::consts::LN_2;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::integrate::TomoGrid;
use crate::kernels::special::ln_factorial;
use crate::kernels::{pattern, KernelExpr, KernelTarget};
use crate::nullfns::{phase_average_exp, NullFamily};
use crate::states::{StateKind, StateSpec, MAX_NMAX};
use crate::C64;

/// A state deep enough in Fock space that ladder moments up to `order` are
/// faithful: the truncation is the moment order plus an energy-dependent
/// margin for the amplitude tail.
pub fn state_for_order(kind: &StateKind, order: usize) -> Result<StateSpec> {
    let e = kind.energy_hint();
    let margin = (e + 8.0 * (e + 1.0).sqrt()).ceil() as usize + 8;
    let nmax = (order + margin).clamp(32, MAX_NMAX);
    StateSpec::with_nmax(kind.clone(), nmax)
}

/// Reuse `state` if its truncation already covers `order`, else rebuild.
fn deepened(state: &StateSpec, order: usize) -> Result<StateSpec> {
    let e = state.mean_photons();
    let margin = (e + 8.0 * (e + 1.0).sqrt()).ceil() as usize + 8;
    let needed = (order + margin).clamp(32, MAX_NMAX);
    if state.nmax() >= needed.min(MAX_NMAX) {
        Ok(state.clone())
    } else {
        state_for_order(state.kind(), order)
    }
}

/// Exact tomographic average of x^k e^{i q phi}:
///
/// ```text
/// (1/pi) int_0^pi dphi e^{iq phi} <x_phi^k>
/// ```
///
/// computed analytically through normally ordered moments; no quadrature.
/// Requires the state truncation to cover moment order `k`.
pub fn avg_monomial(state: &StateSpec, k: usize, q: i64) -> Result<C64> {
    let kf = ln_factorial(k);
    let mut total = C64::new(0.0, 0.0);
    for p in 0..=k / 2 {
        for s in 0..=k - 2 * p {
            let m = k - 2 * p - s;
            let arg = q + 2 * (p as i64) + 2 * (s as i64) - k as i64;
            let phase = phase_average_exp(arg);
            if phase.norm_sqr() == 0.0 {
                continue;
            }
            let ln_w = kf
                - (k + p) as f64 * LN_2
                - ln_factorial(p)
                - ln_factorial(s)
                - ln_factorial(m);
            total += phase * state.normally_ordered_moment(s, m)? * ln_w.exp();
        }
    }
    if !total.re.is_finite() || !total.im.is_finite() {
        return Err(Error::Overflow {
            what: format!("phase-averaged monomial moment x^{k} e^{{i{q}phi}}"),
        });
    }
    Ok(total)
}

/// One separable term g(x) e^{i q phi} of a kernel, with g = coeff * x^k.
#[derive(Debug, Clone, Copy)]
pub(crate) struct PTerm {
    pub k: usize,
    pub q: i64,
    pub coeff: C64,
}

/// Monomial expansion of the moment kernel for <a^dag^n a^m>: the Hermite
/// polynomial is unpacked into powers of x with log-space coefficients.
fn moment_terms(n: usize, m: usize) -> Vec<PTerm> {
    let l = n + m;
    let q = m as i64 - n as i64;
    let mut out = Vec::with_capacity(l / 2 + 1);
    for i in 0..=l / 2 {
        let j = l - 2 * i;
        let ln_mag = -ln_factorial(i) - ln_factorial(j) + 1.5 * j as f64 * LN_2
            - 0.5 * l as f64 * LN_2
            + ln_factorial(n)
            + ln_factorial(m);
        let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
        out.push(PTerm {
            k: j,
            q,
            coeff: C64::new(sign * ln_mag.exp(), 0.0),
        });
    }
    out
}

/// Separable monomial terms of a base kernel, or `None` for pattern
/// kernels, whose radial factor is not polynomial.
pub(crate) fn target_terms(target: KernelTarget) -> Option<Vec<PTerm>> {
    let one = C64::new(1.0, 0.0);
    match target {
        KernelTarget::Moment { n, m } => Some(moment_terms(n, m)),
        KernelTarget::Intensity => Some(moment_terms(1, 1)),
        KernelTarget::Quadrature => Some(vec![
            PTerm { k: 1, q: 1, coeff: one },
            PTerm { k: 1, q: -1, coeff: one },
        ]),
        KernelTarget::Amplitude => Some(vec![PTerm { k: 1, q: 1, coeff: 2.0 * one }]),
        KernelTarget::MatrixElement { .. } => None,
    }
}

fn monomial_order(terms: &[PTerm]) -> usize {
    terms.iter().map(|t| t.k).max().unwrap_or(0)
}

/// Exact Gram matrix A_kl = avg(F_k conj(F_l)) of a null family, row-major.
///
/// Type-II families give the identity exactly (their members are pure
/// phases); other families go through the monomial expansion.
pub fn exact_a(state: &StateSpec, family: &NullFamily) -> Result<Vec<C64>> {
    match family.kind {
        crate::nullfns::FamilyKind::TypeII => {
            let m = family.len();
            let mut a = vec![C64::new(0.0, 0.0); m * m];
            for i in 0..m {
                a[i * m + i] = C64::new(1.0, 0.0);
            }
            Ok(a)
        }
        _ => exact_a_generic(state, family),
    }
}

/// Gram matrix via the monomial machinery for any family; the identity
/// short-cut above must agree with this, which tests assert.
pub fn exact_a_generic(state: &StateSpec, family: &NullFamily) -> Result<Vec<C64>> {
    let m = family.len();
    let members = family.members();
    let order = members.iter().map(|mb| mb.k).max().unwrap_or(0) * 2;
    let st = deepened(state, order)?;
    let mut a = vec![C64::new(0.0, 0.0); m * m];
    for kk in 0..m {
        for ll in kk..m {
            let mk = members[kk];
            let ml = members[ll];
            let v = avg_monomial(
                &st,
                mk.k + ml.k,
                mk.phase_exponent() as i64 - ml.phase_exponent() as i64,
            )?;
            a[kk * m + ll] = v;
            a[ll * m + kk] = v.conj();
        }
    }
    Ok(a)
}

/// Closed-form type-I Gram matrix on a coherent state (associated-Laguerre
/// form); an independent oracle for [`exact_a`], exported for tests.
pub fn type_i_coherent_a(alpha: C64, m: usize) -> Result<Vec<C64>> {
    let z = -2.0 * alpha.norm_sqr();
    let mut a = vec![C64::new(0.0, 0.0); m * m];
    for k in 0..m {
        for l in 0..=k {
            let lag = crate::kernels::special::laguerre_assoc(l, k - l, z);
            let ln_mag = ln_factorial(k + l) - ln_factorial(k) - (k + 2 * l) as f64 * LN_2;
            let v = alpha.powu((k - l) as u32) * lag * ln_mag.exp();
            a[k * m + l] = v;
            a[l * m + k] = v.conj();
        }
    }
    Ok(a)
}

fn kernel_order_cap(order: usize) -> Result<()> {
    // 2 * MAX_MEMBERS covers every product this module can form; factorial
    // tables and f64 range both hold there.
    if order > 2 * crate::nullfns::MAX_MEMBERS + crate::kernels::MAX_MOMENT_ORDER {
        return Err(Error::IndexOutOfRange {
            what: "monomial moment order",
            got: order,
            cap: 2 * crate::nullfns::MAX_MEMBERS + crate::kernels::MAX_MOMENT_ORDER,
        });
    }
    Ok(())
}

fn exact_bc_polynomial(
    state: &StateSpec,
    terms: &[PTerm],
    family: &NullFamily,
    conjugate_members: bool,
) -> Result<Vec<C64>> {
    let members = family.members();
    let kmax = members.iter().map(|mb| mb.k).max().unwrap_or(0);
    let order = monomial_order(terms) + kmax;
    kernel_order_cap(order)?;
    let st = deepened(state, order)?;
    let mut out = Vec::with_capacity(members.len());
    for mb in members {
        let qm = mb.phase_exponent() as i64;
        let qm = if conjugate_members { -qm } else { qm };
        let mut acc = C64::new(0.0, 0.0);
        for t in terms {
            acc += t.coeff * avg_monomial(&st, t.k + mb.k, t.q + qm)?;
        }
        out.push(-acc);
    }
    Ok(out)
}

/// Exact optimizer vector b_k = -avg(R F_k^*) for a base kernel R.
/// Pattern targets build a throwaway quadrature engine; reuse one through
/// [`QuadEngine`] when computing many of these.
pub fn exact_b(state: &StateSpec, target: KernelTarget, family: &NullFamily) -> Result<Vec<C64>> {
    match target_terms(target) {
        Some(terms) => exact_bc_polynomial(state, &terms, family, true),
        None => {
            let mut engine = QuadEngine::for_state(state)?;
            engine.exact_b(target, family)
        }
    }
}

/// Exact companion vector c_p = -avg(R F_p) used by complex-mode
/// optimization.
pub fn exact_c(state: &StateSpec, target: KernelTarget, family: &NullFamily) -> Result<Vec<C64>> {
    match target_terms(target) {
        Some(terms) => exact_bc_polynomial(state, &terms, family, false),
        None => {
            let mut engine = QuadEngine::for_state(state)?;
            engine.exact_c(target, family)
        }
    }
}

/// Exact tomographic mean of a base kernel; equals the target expectation
/// value, which tests cross-check.
pub fn exact_mean_base(state: &StateSpec, target: KernelTarget) -> Result<C64> {
    match target_terms(target) {
        Some(terms) => {
            let order = monomial_order(&terms);
            let st = deepened(state, order)?;
            let mut acc = C64::new(0.0, 0.0);
            for t in &terms {
                acc += t.coeff * avg_monomial(&st, t.k, t.q)?;
            }
            Ok(acc)
        }
        None => {
            let mut engine = QuadEngine::for_state(state)?;
            let k = KernelExpr::base(target)?;
            engine.average_kernel(&k)
        }
    }
}

/// Exact single-sample noise of a base kernel: plain variance for real
/// targets, half the total covariance trace for complex ones.
pub fn exact_var_base(state: &StateSpec, target: KernelTarget) -> Result<f64> {
    match target_terms(target) {
        Some(terms) => {
            let order = 2 * monomial_order(&terms);
            kernel_order_cap(order)?;
            let st = deepened(state, order)?;
            let mut mean = C64::new(0.0, 0.0);
            for t in &terms {
                mean += t.coeff * avg_monomial(&st, t.k, t.q)?;
            }
            let mut m2 = C64::new(0.0, 0.0);
            for ta in &terms {
                for tb in &terms {
                    m2 += ta.coeff
                        * tb.coeff.conj()
                        * avg_monomial(&st, ta.k + tb.k, ta.q - tb.q)?;
                }
            }
            Ok(if target.is_real() {
                m2.re - mean.re * mean.re
            } else {
                0.5 * (m2.re - mean.norm_sqr())
            })
        }
        None => {
            let mut engine = QuadEngine::for_state(state)?;
            let k = KernelExpr::base(target)?;
            engine.variance_kernel(&k)
        }
    }
}

/// A kernel term with its radial factor evaluated on the grid's x nodes.
struct GTerm {
    q: i64,
    coeff: C64,
    g: Vec<f64>,
}

/// Two-dimensional quadrature engine against a state's quadrature
/// distribution, organized around separable kernels g(x) e^{i q phi}: per-q
/// phase profiles are cached, so each new kernel term costs one dot product
/// over the x nodes instead of a pass over the full grid.
pub struct QuadEngine {
    grid: TomoGrid,
    profiles: HashMap<i64, Arc<Vec<C64>>>,
}

impl QuadEngine {
    /// Build a grid sized from the state's energy: range covers the mean
    /// displacement plus seven standard deviations of the widest quadrature,
    /// resolution follows the narrowest one.
    pub fn for_state(state: &StateSpec) -> Result<Self> {
        let e = state.mean_photons();
        let mut var_max = 0.0f64;
        let mut var_min = f64::INFINITY;
        for i in 0..64 {
            let phi = std::f64::consts::PI * i as f64 / 64.0;
            let v = state.quadrature_variance(phi)?;
            var_max = var_max.max(v);
            var_min = var_min.min(v);
        }
        let xmax = e.sqrt() + 7.0 * var_max.sqrt() + 0.5;
        let panel = (4.0 * var_min.sqrt()).clamp(0.12, 0.55);
        let nx_panels = (2.0 * xmax / panel).ceil() as usize;
        // 14 panels x 16 nodes resolve phase factors up to |q| ~ 100.
        let grid = TomoGrid::build(|x, phi| state.quadrature_pdf(x, phi), xmax, nx_panels, 14);
        Ok(QuadEngine {
            grid,
            profiles: HashMap::new(),
        })
    }

    /// Wrap an explicitly constructed grid.
    pub fn with_grid(grid: TomoGrid) -> Self {
        QuadEngine {
            grid,
            profiles: HashMap::new(),
        }
    }

    /// Mass of the underlying distribution grid (resolution check).
    pub fn mass(&self) -> f64 {
        self.grid.mass()
    }

    fn profile(&mut self, q: i64) -> Arc<Vec<C64>> {
        self.profiles
            .entry(q)
            .or_insert_with(|| Arc::new(self.grid.phase_profile(q)))
            .clone()
    }

    fn power_vector(&self, k: usize) -> Vec<f64> {
        self.grid.xs.iter().map(|x| x.powi(k as i32)).collect()
    }

    /// Separable terms of a full kernel expression (base plus nulls).
    fn kexpr_terms(&self, kexpr: &KernelExpr) -> Result<Vec<GTerm>> {
        let mut terms = Vec::new();
        match target_terms(kexpr.target()) {
            Some(ts) => {
                for t in ts {
                    terms.push(GTerm {
                        q: t.q,
                        coeff: t.coeff,
                        g: self.power_vector(t.k),
                    });
                }
            }
            None => {
                let KernelTarget::MatrixElement { n, m } = kexpr.target() else {
                    unreachable!("only pattern targets lack monomial terms");
                };
                let table = pattern::table(n, m)?;
                let g = self
                    .grid
                    .xs
                    .iter()
                    .map(|&x| table.f(x))
                    .collect::<Result<Vec<f64>>>()?;
                terms.push(GTerm {
                    q: n as i64 - m as i64,
                    coeff: C64::new(1.0, 0.0),
                    g,
                });
            }
        }
        if let Some(fam) = kexpr.family() {
            let (mu, nu) = kexpr.coefficients();
            for (j, mb) in fam.members().iter().enumerate() {
                let g = self.power_vector(mb.k);
                let q = mb.phase_exponent() as i64;
                if mu[j].norm_sqr() > 0.0 {
                    terms.push(GTerm { q, coeff: mu[j], g: g.clone() });
                }
                if nu[j].norm_sqr() > 0.0 {
                    terms.push(GTerm { q: -q, coeff: nu[j], g });
                }
            }
        }
        Ok(terms)
    }

    /// Tomographic average of x^k e^{i q phi} by quadrature; the slow,
    /// assumption-free cross-check for [`avg_monomial`].
    pub fn average_monomial(&mut self, k: usize, q: i64) -> C64 {
        let g = self.power_vector(k);
        let p = self.profile(q);
        dot(&g, &p)
    }

    /// Tomographic average of a full kernel expression.
    pub fn average_kernel(&mut self, kexpr: &KernelExpr) -> Result<C64> {
        let terms = self.kexpr_terms(kexpr)?;
        let mut acc = C64::new(0.0, 0.0);
        for t in &terms {
            let p = self.profile(t.q);
            acc += t.coeff * dot(&t.g, &p);
        }
        Ok(acc)
    }

    /// Average of |K|^2 over the distribution.
    pub fn second_moment(&mut self, kexpr: &KernelExpr) -> Result<f64> {
        let terms = self.kexpr_terms(kexpr)?;
        let mut acc = C64::new(0.0, 0.0);
        for ta in &terms {
            for tb in &terms {
                let p = self.profile(ta.q - tb.q);
                let mut s = C64::new(0.0, 0.0);
                for ((ga, gb), w) in ta.g.iter().zip(&tb.g).zip(p.iter()) {
                    s += w * (ga * gb);
                }
                acc += ta.coeff * tb.coeff.conj() * s;
            }
        }
        Ok(acc.re)
    }

    /// Single-sample noise of a kernel expression: variance for real
    /// targets, trace covariance over two for complex ones.
    pub fn variance_kernel(&mut self, kexpr: &KernelExpr) -> Result<f64> {
        let mean = self.average_kernel(kexpr)?;
        let m2 = self.second_moment(kexpr)?;
        Ok(if kexpr.target().is_real() {
            m2 - mean.re * mean.re
        } else {
            0.5 * (m2 - mean.norm_sqr())
        })
    }

    /// b vector by quadrature; the only exact route for pattern targets.
    pub fn exact_b(&mut self, target: KernelTarget, family: &NullFamily) -> Result<Vec<C64>> {
        self.cross_vector(target, family, true)
    }

    /// c vector by quadrature.
    pub fn exact_c(&mut self, target: KernelTarget, family: &NullFamily) -> Result<Vec<C64>> {
        self.cross_vector(target, family, false)
    }

    fn cross_vector(
        &mut self,
        target: KernelTarget,
        family: &NullFamily,
        conjugate_members: bool,
    ) -> Result<Vec<C64>> {
        let base = KernelExpr::base(target)?;
        let terms = self.kexpr_terms(&base)?;
        let mut out = Vec::with_capacity(family.len());
        for mb in family.members() {
            let gq = mb.phase_exponent() as i64;
            let gq = if conjugate_members { -gq } else { gq };
            let xp = self.power_vector(mb.k);
            let mut acc = C64::new(0.0, 0.0);
            for t in &terms {
                let p = self.profile(t.q + gq);
                let mut s = C64::new(0.0, 0.0);
                for ((gt, gm), w) in t.g.iter().zip(&xp).zip(p.iter()) {
                    s += w * (gt * gm);
                }
                acc += t.coeff * s;
            }
            out.push(-acc);
        }
        Ok(out)
    }
}

fn dot(g: &[f64], p: &[C64]) -> C64 {
    let mut acc = C64::new(0.0, 0.0);
    for (gi, pi) in g.iter().zip(p) {
        acc += pi * *gi;
    }
    acc
}
