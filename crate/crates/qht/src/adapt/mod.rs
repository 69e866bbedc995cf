//! Adaptive kernel optimization.
//!
//! Adding weighted null functions to an estimator kernel leaves its
//! tomographic mean untouched but changes its variance. The optimal weights
//! solve a small Hermitian linear system built from the null-function Gram
//! matrix A and the kernel cross vector b (plus a companion vector c when
//! the estimand is complex). This module assembles those systems either
//! empirically from a dataset or analytically from state moments, solves
//! them with a conditioning guard, and reports the variance reduction.

pub mod exact;
mod linalg;

use serde::ser::SerializeSeq;
use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::homodyne::HomodyneDataset;
use crate::kernels::{KernelExpr, KernelTarget};
use crate::nullfns::{FamilyKind, NullFamily};
use crate::states::StateSpec;
use crate::C64;
use exact::QuadEngine;
use linalg::{cholesky_prefix, condition1, equilibrate, forward_solve, lu_factor, norm2, residual_vec};

/// Condition-estimate ceiling above which a solve is rejected and members
/// are dropped.
pub const MAX_CONDITION: f64 = 1e12;

/// Accepted solves must satisfy ||A x - rhs|| <= RESIDUAL_LIMIT * ||rhs||.
pub const RESIDUAL_LIMIT: f64 = 1e-9;

/// Whether the optimizer treats the estimand as real (paired coefficients
/// nu = conj(mu)) or complex (independent mu and nu).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Real,
    Complex,
}

/// Options for dataset-driven optimization.
#[derive(Debug, Clone, Copy)]
pub struct OptimizeOptions {
    pub mode: Mode,
    /// Fit coefficients on the first half of the blocks only, so the tuned
    /// kernel can be evaluated on the untouched second half.
    pub split_fit: bool,
    /// Keep every requested member even when the conditioning guard would
    /// shed the trailing ones. The solve then runs on systems past the
    /// condition cap, reproducing the overfitting blow-up the guard exists
    /// to prevent; `condition_estimate` and `residual` keep the evidence.
    pub keep_all_members: bool,
}

impl Default for OptimizeOptions {
    fn default() -> Self {
        OptimizeOptions {
            mode: Mode::Real,
            split_fit: false,
            keep_all_members: false,
        }
    }
}

/// Outcome of a direct Hermitian solve.
#[derive(Debug, Clone)]
pub struct Solve {
    pub x: Vec<C64>,
    /// ||A x - rhs||.
    pub residual: f64,
    /// 1-norm condition estimate of A.
    pub condition: f64,
}

/// Solve A x = rhs for a square complex matrix (row-major), with partial
/// pivoting, one refinement step, an explicit condition estimate, and a
/// residual acceptance bound.
pub fn solve(a: &[C64], rhs: &[C64]) -> Result<Solve> {
    let n = rhs.len();
    if a.len() != n * n {
        return Err(Error::DimensionMismatch {
            what: "matrix vs rhs",
            expected: n * n,
            got: a.len(),
        });
    }
    if n > crate::nullfns::MAX_MEMBERS {
        return Err(Error::IndexOutOfRange {
            what: "system dimension",
            got: n,
            cap: crate::nullfns::MAX_MEMBERS,
        });
    }
    let lu = lu_factor(a, n)?;
    let condition = condition1(a, &lu, n);
    if !(condition <= MAX_CONDITION) {
        return Err(Error::IllConditioned {
            cond: condition,
            limit: MAX_CONDITION,
        });
    }
    let x = lu.solve_refined(a, rhs);
    let residual = norm2(&residual_vec(a, &x, rhs, n));
    let bound = RESIDUAL_LIMIT * norm2(rhs);
    if residual > bound && norm2(rhs) > 0.0 {
        return Err(Error::ResidualTooLarge { residual, bound });
    }
    Ok(Solve { x, residual, condition })
}

/// Everything the optimizer decided: coefficients, the system it solved,
/// and the noise bookkeeping.
#[derive(Debug, Clone, Serialize)]
pub struct OptimizationResult {
    pub target: KernelTarget,
    pub family: FamilyKind,
    pub mode: Mode,
    /// Members requested by the caller.
    pub requested_members: usize,
    /// Members actually used after the conditioning guard.
    pub used_members: usize,
    /// requested - used.
    pub dropped_members: usize,
    /// Null-function weights (length `used_members`).
    #[serde(serialize_with = "ser_cvec")]
    pub mu: Vec<C64>,
    /// Conjugate-side weights; equals conj(mu) in real mode.
    #[serde(serialize_with = "ser_cvec")]
    pub nu: Vec<C64>,
    /// Gram matrix actually solved, row-major `used x used`.
    #[serde(serialize_with = "ser_cvec")]
    pub a: Vec<C64>,
    #[serde(serialize_with = "ser_cvec")]
    pub b: Vec<C64>,
    /// Companion vector, complex mode only.
    #[serde(serialize_with = "ser_opt_cvec")]
    pub c: Option<Vec<C64>>,
    /// Variance removed from the base kernel (per-component noise for
    /// complex targets).
    pub delta2: f64,
    /// Single-sample noise of the base kernel on the fit source.
    pub variance_base: f64,
    /// delta2 / variance_base.
    pub gamma: f64,
    /// ||A x - rhs|| of the accepted solve (worst of the mu/nu systems).
    pub residual: f64,
    pub condition_estimate: f64,
    /// Blocks used to fit (dataset mode only).
    pub fit_blocks: Option<usize>,
}

impl OptimizationResult {
    /// The optimized kernel: base target plus the weighted null functions
    /// this result selected.
    pub fn kernel(&self) -> Result<KernelExpr> {
        let fam = NullFamily::new(self.family, self.used_members)?;
        let mut k = KernelExpr::with_family(self.target, fam)?;
        if self.target.is_real() {
            k.set_real_coefficients(&self.mu)?;
        } else {
            k.set_complex_coefficients(&self.mu, &self.nu)?;
        }
        Ok(k)
    }
}

/// Complex vectors serialize as flat interleaved [re0, im0, re1, im1, ...].
struct Interleaved<'a>(&'a [C64]);

impl Serialize for Interleaved<'_> {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut seq = s.serialize_seq(Some(self.0.len() * 2))?;
        for z in self.0 {
            seq.serialize_element(&z.re)?;
            seq.serialize_element(&z.im)?;
        }
        seq.end()
    }
}

fn ser_cvec<S: Serializer>(v: &Vec<C64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    Interleaved(v).serialize(s)
}

fn ser_opt_cvec<S: Serializer>(
    v: &Option<Vec<C64>>,
    s: S,
) -> std::result::Result<S::Ok, S::Error> {
    match v {
        Some(v) => s.serialize_some(&Interleaved(v)),
        None => s.serialize_none(),
    }
}

fn check_mode(target: KernelTarget, mode: Mode) -> Result<()> {
    match (target.is_real(), mode) {
        (true, Mode::Real) | (false, Mode::Complex) => Ok(()),
        (true, Mode::Complex) => Err(Error::InvalidParameter {
            name: "mode",
            why: "real targets pair nu = conj(mu); use real mode".into(),
        }),
        (false, Mode::Real) => Err(Error::InvalidParameter {
            name: "mode",
            why: "complex targets need independent nu; use complex mode".into(),
        }),
    }
}

/// The natural mode for a target.
pub fn mode_for(target: KernelTarget) -> Mode {
    if target.is_real() {
        Mode::Real
    } else {
        Mode::Complex
    }
}

// ---------------------------------------------------------------------
// Empirical estimation
// ---------------------------------------------------------------------

struct EmpSys {
    a: Vec<C64>,
    b: Vec<C64>,
    c: Option<Vec<C64>>,
    var_base: f64,
}

struct BlockAcc {
    tri: Vec<C64>,
    b: Vec<C64>,
    c: Vec<C64>,
    r_sum: C64,
    r_abs2: f64,
    n: usize,
}

fn tri_index(m: usize, k: usize, l: usize) -> usize {
    // Upper triangle k <= l, row-packed: row k starts after k rows of
    // lengths m, m-1, ..., m-k+1.
    k * (2 * m - k + 1) / 2 + (l - k)
}

/// One pass over a block range accumulating the Gram triangle, the cross
/// vectors, and the base-kernel noise. Blocks run in parallel; reduction is
/// serial in block order for bit-stable results across thread counts.
fn empirical_system(
    ds: &HomodyneDataset,
    target: Option<KernelTarget>,
    family: &NullFamily,
    want_c: bool,
    from: u32,
    to: u32,
) -> Result<EmpSys> {
    use rayon::prelude::*;
    if ds.is_empty() || from >= to || to > ds.blocks() {
        return Err(Error::BadDataset(format!(
            "cannot estimate over blocks [{from}, {to}) of a {}-block dataset",
            ds.blocks()
        )));
    }
    let m = family.len();
    let base = match target {
        Some(t) => Some(KernelExpr::base(t)?),
        None => None,
    };
    let tri_len = m * (m + 1) / 2;
    let per: Vec<BlockAcc> = (from..to)
        .into_par_iter()
        .map(|blk| -> Result<BlockAcc> {
            let mut acc = BlockAcc {
                tri: vec![C64::new(0.0, 0.0); tri_len],
                b: vec![C64::new(0.0, 0.0); m],
                c: vec![C64::new(0.0, 0.0); m],
                r_sum: C64::new(0.0, 0.0),
                r_abs2: 0.0,
                n: 0,
            };
            let mut f = vec![C64::new(0.0, 0.0); m];
            for s in ds.block_slice(blk) {
                family.eval_into(s.x, s.phi, &mut f);
                for k in 0..m {
                    let fk = f[k];
                    for l in k..m {
                        acc.tri[tri_index(m, k, l)] += fk * f[l].conj();
                    }
                }
                if let Some(b) = &base {
                    let r = b.base_value(s.x, s.phi)?;
                    acc.r_sum += r;
                    acc.r_abs2 += r.norm_sqr();
                    for k in 0..m {
                        acc.b[k] += r * f[k].conj();
                        if want_c {
                            acc.c[k] += r * f[k];
                        }
                    }
                }
                acc.n += 1;
            }
            Ok(acc)
        })
        .collect::<Result<_>>()?;

    let mut tri = vec![C64::new(0.0, 0.0); tri_len];
    let mut bv = vec![C64::new(0.0, 0.0); m];
    let mut cv = vec![C64::new(0.0, 0.0); m];
    let mut r_sum = C64::new(0.0, 0.0);
    let mut r_abs2 = 0.0;
    let mut n = 0usize;
    for acc in &per {
        for (t, u) in tri.iter_mut().zip(&acc.tri) {
            *t += u;
        }
        for (t, u) in bv.iter_mut().zip(&acc.b) {
            *t += u;
        }
        for (t, u) in cv.iter_mut().zip(&acc.c) {
            *t += u;
        }
        r_sum += acc.r_sum;
        r_abs2 += acc.r_abs2;
        n += acc.n;
    }
    let nf = n as f64;
    let mut a = vec![C64::new(0.0, 0.0); m * m];
    for k in 0..m {
        for l in k..m {
            let v = tri[tri_index(m, k, l)] / nf;
            a[k * m + l] = v;
            a[l * m + k] = v.conj();
        }
    }
    let b: Vec<C64> = bv.iter().map(|v| -v / nf).collect();
    let c: Option<Vec<C64>> = if want_c {
        Some(cv.iter().map(|v| -v / nf).collect())
    } else {
        None
    };
    let var_base = match target {
        Some(t) => {
            let mean = r_sum / nf;
            let m2 = r_abs2 / nf;
            if t.is_real() {
                (m2 - mean.re * mean.re).max(0.0)
            } else {
                0.5 * (m2 - mean.norm_sqr()).max(0.0)
            }
        }
        None => 0.0,
    };
    Ok(EmpSys { a, b, c, var_base })
}

/// Empirical Gram matrix A_kl = mean(F_k conj(F_l)) over a dataset,
/// Hermitian by construction, row-major.
pub fn estimate_a(ds: &HomodyneDataset, family: &NullFamily) -> Result<Vec<C64>> {
    Ok(empirical_system(ds, None, family, false, 0, ds.blocks())?.a)
}

/// Empirical cross vector b_k = -mean(R F_k^*).
pub fn estimate_b(
    ds: &HomodyneDataset,
    target: KernelTarget,
    family: &NullFamily,
) -> Result<Vec<C64>> {
    Ok(empirical_system(ds, Some(target), family, false, 0, ds.blocks())?.b)
}

/// Empirical companion vector c_p = -mean(R F_p).
pub fn estimate_c(
    ds: &HomodyneDataset,
    target: KernelTarget,
    family: &NullFamily,
) -> Result<Vec<C64>> {
    Ok(empirical_system(ds, Some(target), family, true, 0, ds.blocks())?
        .c
        .expect("requested c"))
}

// ---------------------------------------------------------------------
// Core solve
// ---------------------------------------------------------------------

fn prefix_matrix(a: &[C64], full: usize, m: usize) -> Vec<C64> {
    let mut out = Vec::with_capacity(m * m);
    for r in 0..m {
        out.extend_from_slice(&a[r * full..r * full + m]);
    }
    out
}

/// Solve the optimization systems with equilibration and a drop guard:
/// if the condition estimate exceeds [`MAX_CONDITION`], the highest-index
/// members are removed one at a time until the solve is accepted. With
/// `keep_all` set the guard is bypassed and any factorable system is
/// solved as requested, however ill-conditioned.
fn finish_optimize(
    target: KernelTarget,
    family: FamilyKind,
    mode: Mode,
    a_full: &[C64],
    b_full: &[C64],
    c_full: Option<&[C64]>,
    var_base: f64,
    fit_blocks: Option<usize>,
    keep_all: bool,
) -> Result<OptimizationResult> {
    let requested = b_full.len();
    let mut m = requested;
    loop {
        let a = prefix_matrix(a_full, requested, m);
        let (ae, d) = equilibrate(&a, m);
        let lu = match lu_factor(&ae, m) {
            Ok(lu) => lu,
            Err(_) if m > 1 && !keep_all => {
                m -= 1;
                continue;
            }
            Err(e) => return Err(e),
        };
        let condition = condition1(&ae, &lu, m);
        if !(condition <= MAX_CONDITION) && !keep_all {
            if m > 1 {
                m -= 1;
                continue;
            }
            return Err(Error::IllConditioned {
                cond: condition,
                limit: MAX_CONDITION,
            });
        }

        // mu solves conj(A) mu = b; conjugating gives A conj(mu) = conj(b),
        // which maps onto the equilibrated factorization directly.
        let b = &b_full[..m];
        let bt: Vec<C64> = b.iter().zip(&d).map(|(v, di)| v * *di).collect();
        let cbt: Vec<C64> = bt.iter().map(|z| z.conj()).collect();
        let w = lu.solve_refined(&ae, &cbt);
        let mu: Vec<C64> = w.iter().zip(&d).map(|(wi, di)| wi.conj() * *di).collect();

        // A refined solve that still cannot meet the residual bound is the
        // same pathology as a failed condition estimate: the trailing
        // members are numerically redundant. Shed them too.
        let conj_a: Vec<C64> = a.iter().map(|z| z.conj()).collect();
        let mut residual = norm2(&residual_vec(&conj_a, &mu, b, m));
        let bn = norm2(b);
        if residual > RESIDUAL_LIMIT * bn && bn > 0.0 && !keep_all {
            if m > 1 {
                m -= 1;
                continue;
            }
            return Err(Error::ResidualTooLarge {
                residual,
                bound: RESIDUAL_LIMIT * bn,
            });
        }

        let (nu, c_used) = match mode {
            Mode::Real => (mu.iter().map(|z| z.conj()).collect::<Vec<C64>>(), None),
            Mode::Complex => {
                let c = &c_full.expect("complex mode carries c")[..m];
                let ct: Vec<C64> = c.iter().zip(&d).map(|(v, di)| v * *di).collect();
                let v = lu.solve_refined(&ae, &ct);
                let nu: Vec<C64> = v.iter().zip(&d).map(|(vi, di)| vi * *di).collect();
                let rc = norm2(&residual_vec(&a, &nu, c, m));
                let cn = norm2(c);
                if rc > RESIDUAL_LIMIT * cn && cn > 0.0 && !keep_all {
                    if m > 1 {
                        m -= 1;
                        continue;
                    }
                    return Err(Error::ResidualTooLarge {
                        residual: rc,
                        bound: RESIDUAL_LIMIT * cn,
                    });
                }
                residual = residual.max(rc);
                (nu, Some(c.to_vec()))
            }
        };

        let b_part: f64 = b
            .iter()
            .zip(&mu)
            .map(|(bk, mk)| (bk * mk.conj()).re)
            .sum();
        let delta2 = match mode {
            Mode::Real => (2.0 * b_part).max(0.0),
            Mode::Complex => {
                let c = c_used.as_ref().expect("complex mode carries c");
                let c_part: f64 = c
                    .iter()
                    .zip(&nu)
                    .map(|(cp, np)| (cp.conj() * np).re)
                    .sum();
                (0.5 * (b_part + c_part)).max(0.0)
            }
        };
        let gamma = if var_base > 0.0 { delta2 / var_base } else { 0.0 };

        return Ok(OptimizationResult {
            target,
            family,
            mode,
            requested_members: requested,
            used_members: m,
            dropped_members: requested - m,
            mu,
            nu,
            a,
            b: b.to_vec(),
            c: c_used,
            delta2,
            variance_base: var_base,
            gamma,
            residual,
            condition_estimate: condition,
            fit_blocks,
        });
    }
}

/// Optimize null-function weights against a dataset: A, b (and c) are the
/// sample means over the fit blocks, variance_base the empirical base
/// noise on the same samples.
pub fn optimize_from_dataset(
    ds: &HomodyneDataset,
    target: KernelTarget,
    family: &NullFamily,
    opts: &OptimizeOptions,
) -> Result<OptimizationResult> {
    check_mode(target, opts.mode)?;
    let blocks = ds.blocks();
    let (from, to) = if opts.split_fit {
        if blocks < 2 {
            return Err(Error::InvalidParameter {
                name: "split_fit",
                why: "needs at least two blocks".into(),
            });
        }
        (0, blocks / 2)
    } else {
        (0, blocks)
    };
    let sys = empirical_system(
        ds,
        Some(target),
        family,
        opts.mode == Mode::Complex,
        from,
        to,
    )?;
    finish_optimize(
        target,
        family.kind,
        opts.mode,
        &sys.a,
        &sys.b,
        sys.c.as_deref(),
        sys.var_base,
        Some((to - from) as usize),
        opts.keep_all_members,
    )
}

fn exact_system(
    state: &StateSpec,
    target: KernelTarget,
    family: &NullFamily,
    want_c: bool,
    engine: Option<&mut QuadEngine>,
) -> Result<(Vec<C64>, Vec<C64>, Option<Vec<C64>>, f64)> {
    let a = exact::exact_a(state, family)?;
    if exact::target_terms(target).is_some() {
        let b = exact::exact_b(state, target, family)?;
        let c = if want_c {
            Some(exact::exact_c(state, target, family)?)
        } else {
            None
        };
        Ok((a, b, c, exact::exact_var_base(state, target)?))
    } else {
        let mut local;
        let engine = match engine {
            Some(e) => e,
            None => {
                local = QuadEngine::for_state(state)?;
                &mut local
            }
        };
        let b = engine.exact_b(target, family)?;
        let c = if want_c {
            Some(engine.exact_c(target, family)?)
        } else {
            None
        };
        let base = KernelExpr::base(target)?;
        let var = engine.variance_kernel(&base)?;
        Ok((a, b, c, var))
    }
}

/// Optimize against exact state moments (and 2-D quadrature for pattern
/// targets). Builds a quadrature engine on demand; use
/// [`optimize_exact_in`] to share one across many targets.
pub fn optimize_exact(
    state: &StateSpec,
    target: KernelTarget,
    family: &NullFamily,
    mode: Mode,
) -> Result<OptimizationResult> {
    check_mode(target, mode)?;
    let (a, b, c, var) = exact_system(state, target, family, mode == Mode::Complex, None)?;
    finish_optimize(target, family.kind, mode, &a, &b, c.as_deref(), var, None, false)
}

/// Exact-mode optimization reusing a caller-owned quadrature engine (built
/// for the same state); polynomial targets simply ignore it.
pub fn optimize_exact_in(
    engine: &mut QuadEngine,
    state: &StateSpec,
    target: KernelTarget,
    family: &NullFamily,
    mode: Mode,
) -> Result<OptimizationResult> {
    check_mode(target, mode)?;
    let (a, b, c, var) =
        exact_system(state, target, family, mode == Mode::Complex, Some(engine))?;
    finish_optimize(target, family.kind, mode, &a, &b, c.as_deref(), var, None, false)
}

/// Relative variance reduction gamma as a function of member count.
#[derive(Debug, Clone, Serialize)]
pub struct GammaScan {
    pub family: FamilyKind,
    /// gamma[m] is the reduction with the first m members, m = 0..=m_max.
    pub gamma: Vec<f64>,
    /// Absolute variance reduction per member count.
    pub delta2: Vec<f64>,
    pub variance_base: f64,
    /// Leading members whose Gram factorization stayed positive definite;
    /// beyond this the scan extends flat.
    pub usable_members: usize,
}

/// Exact gamma versus member count for nested prefixes of one family.
///
/// A single Cholesky factorization of the equilibrated Gram matrix yields
/// every prefix optimum at once, and the cumulative form makes the scan
/// non-decreasing exactly, matching the nesting of the optimization
/// domains.
pub fn gamma_scan(
    state: &StateSpec,
    target: KernelTarget,
    kind: FamilyKind,
    m_max: usize,
    mode: Mode,
) -> Result<GammaScan> {
    check_mode(target, mode)?;
    let var_base = exact::exact_var_base(state, target)?;
    if m_max == 0 {
        return Ok(GammaScan {
            family: kind,
            gamma: vec![0.0],
            delta2: vec![0.0],
            variance_base: var_base,
            usable_members: 0,
        });
    }
    let family = NullFamily::new(kind, m_max)?;
    let (a, b, c, _) = exact_system(state, target, &family, mode == Mode::Complex, None)?;

    let (ae, d) = equilibrate(&a, m_max);
    let (l, completed) = cholesky_prefix(&ae, m_max);
    let bt: Vec<C64> = b
        .iter()
        .zip(&d)
        .map(|(v, di)| (v * *di).conj())
        .collect();
    let y = forward_solve(&l, m_max, completed, &bt[..completed]);
    let z = match &c {
        Some(c) => {
            let ct: Vec<C64> = c.iter().zip(&d).map(|(v, di)| v * *di).collect();
            forward_solve(&l, m_max, completed, &ct[..completed])
        }
        None => Vec::new(),
    };

    let mut delta2 = Vec::with_capacity(m_max + 1);
    delta2.push(0.0);
    let mut acc_b = 0.0;
    let mut acc_c = 0.0;
    for j in 0..m_max {
        if j < completed {
            acc_b += y[j].norm_sqr();
            if !z.is_empty() {
                acc_c += z[j].norm_sqr();
            }
        }
        delta2.push(match mode {
            Mode::Real => 2.0 * acc_b,
            Mode::Complex => 0.5 * (acc_b + acc_c),
        });
    }
    let gamma = delta2
        .iter()
        .map(|d2| if var_base > 0.0 { d2 / var_base } else { 0.0 })
        .collect();
    Ok(GammaScan {
        family: kind,
        gamma,
        delta2,
        variance_base: var_base,
        usable_members: completed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::homodyne::{generate_dataset, PhaseStrategy};
    use crate::states::StateKind;
    use approx::assert_abs_diff_eq;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn coherent(alpha: C64) -> StateSpec {
        StateSpec::new(StateKind::Coherent { alpha }).unwrap()
    }

    #[test]
    fn public_solve_handles_the_identity_and_rejects_singular() {
        let eye = vec![c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)];
        let rhs = vec![c(2.0, 1.0), c(-0.5, 0.25)];
        let s = solve(&eye, &rhs).unwrap();
        for (x, r) in s.x.iter().zip(&rhs) {
            assert!((x - r).norm() < 1e-15);
        }
        assert_abs_diff_eq!(s.condition, 1.0, epsilon = 1e-12);
        let sing = vec![c(1.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(1.0, 0.0)];
        assert!(solve(&sing, &rhs).is_err());
    }

    #[test]
    fn intensity_on_coherent_needs_only_the_first_member() {
        // The higher Gram columns are proportional to the first one acting
        // on b, so the unique solution concentrates on member 0 and the
        // variance reduction is <a^dag^2><a^2>/2.
        let alpha = c(3.0f64.sqrt(), 0.0);
        let st = coherent(alpha);
        let fam = NullFamily::new(FamilyKind::TypeI, 8).unwrap();
        let res = optimize_exact(&st, KernelTarget::Intensity, &fam, Mode::Real).unwrap();
        assert_eq!(res.used_members, 8);
        assert_eq!(res.dropped_members, 0);
        let b0 = -alpha.conj().powu(2) * 0.5;
        assert!((res.mu[0] - b0).norm() < 1e-9, "mu0 {} vs b0 {}", res.mu[0], b0);
        for k in 1..8 {
            assert!(res.mu[k].norm() < 1e-9, "mu[{k}] = {}", res.mu[k]);
        }
        assert_abs_diff_eq!(res.delta2, 4.5, epsilon = 1e-9);
        assert_abs_diff_eq!(res.b[0].re, b0.re, epsilon = 1e-12);
        assert!(res.residual <= RESIDUAL_LIMIT * 10.0);
        // Same concentration for a complex amplitude.
        let alpha = c(1.1, -0.8);
        let st = coherent(alpha);
        let res = optimize_exact(&st, KernelTarget::Intensity, &fam, Mode::Real).unwrap();
        let b0 = -alpha.conj().powu(2) * 0.5;
        assert!((res.mu[0] - b0).norm() < 1e-9);
        assert_abs_diff_eq!(res.delta2, 0.5 * alpha.norm_sqr().powi(2), epsilon = 1e-9);
    }

    #[test]
    fn quadrature_and_amplitude_reductions_match_closed_forms() {
        let alpha = c(0.7, 1.3);
        let st = coherent(alpha);
        let fam = NullFamily::new(FamilyKind::TypeI, 6).unwrap();
        let rq = optimize_exact(&st, KernelTarget::Quadrature, &fam, Mode::Real).unwrap();
        assert_abs_diff_eq!(rq.delta2, 0.5 * alpha.norm_sqr(), epsilon = 1e-9);
        let ra = optimize_exact(&st, KernelTarget::Amplitude, &fam, Mode::Complex).unwrap();
        assert_abs_diff_eq!(ra.delta2, 0.5 * alpha.norm_sqr(), epsilon = 1e-9);
        // Amplitude c vanishes identically, so nu = 0.
        for np in &ra.nu {
            assert!(np.norm() < 1e-12);
        }
    }

    #[test]
    fn fock_states_admit_no_reduction() {
        let st = StateSpec::new(StateKind::Fock { n: 3 }).unwrap();
        for kind in [FamilyKind::TypeI, FamilyKind::TypeII, FamilyKind::TypeIII] {
            let fam = NullFamily::new(kind, 6).unwrap();
            let res = optimize_exact(&st, KernelTarget::Intensity, &fam, Mode::Real).unwrap();
            assert!(res.delta2.abs() < 1e-10, "{kind:?}: delta2 = {}", res.delta2);
            assert!(res.gamma.abs() < 1e-10);
            for b in &res.b {
                assert!(b.norm() < 1e-10);
            }
        }
    }

    #[test]
    fn gamma_scan_is_monotone_and_matches_pointwise_optimization() {
        let st = coherent(c(5.0f64.sqrt(), 0.0));
        let scan = gamma_scan(&st, KernelTarget::Intensity, FamilyKind::TypeI, 12, Mode::Real)
            .unwrap();
        assert_eq!(scan.gamma.len(), 13);
        assert_abs_diff_eq!(scan.gamma[0], 0.0, epsilon = 1e-15);
        for w in scan.gamma.windows(2) {
            assert!(w[1] >= w[0] - 1e-12);
        }
        for m in [1usize, 4, 9] {
            let fam = NullFamily::new(FamilyKind::TypeI, m).unwrap();
            let res = optimize_exact(&st, KernelTarget::Intensity, &fam, Mode::Real).unwrap();
            assert_abs_diff_eq!(scan.gamma[m], res.gamma, epsilon = 1e-9);
        }
    }

    #[test]
    fn mode_must_match_target_reality() {
        let st = coherent(c(1.0, 0.0));
        let fam = NullFamily::new(FamilyKind::TypeI, 2).unwrap();
        assert!(optimize_exact(&st, KernelTarget::Intensity, &fam, Mode::Complex).is_err());
        assert!(optimize_exact(&st, KernelTarget::Amplitude, &fam, Mode::Real).is_err());
        assert_eq!(mode_for(KernelTarget::Intensity), Mode::Real);
        assert_eq!(mode_for(KernelTarget::Amplitude), Mode::Complex);
    }

    #[test]
    fn empirical_optimization_reduces_sample_variance() {
        let st = coherent(c(3.0f64.sqrt(), 0.0));
        let ds = generate_dataset(&st, PhaseStrategy::Stratified { p: 25 }, 10, 500, 314).unwrap();
        let fam = NullFamily::new(FamilyKind::TypeI, 6).unwrap();
        let opts = OptimizeOptions::default();
        let res = optimize_from_dataset(&ds, KernelTarget::Intensity, &fam, &opts).unwrap();
        assert_eq!(res.fit_blocks, Some(10));
        // Exact reduction at this alpha is 4.5 out of 11; the empirical fit
        // should land in the same region.
        assert!(res.delta2 > 2.0 && res.delta2 < 7.0, "delta2 = {}", res.delta2);
        let kopt = res.kernel().unwrap();
        let base = KernelExpr::base(KernelTarget::Intensity).unwrap();
        let rep_base = crate::stats::tomo_average(&ds, &base).unwrap();
        let rep_opt = crate::stats::tomo_average(&ds, &kopt).unwrap();
        assert!(
            rep_opt.variance < rep_base.variance,
            "optimized {} vs base {}",
            rep_opt.variance,
            rep_base.variance
        );
        // var(base) - var(opt) agrees with delta2 up to sampling residuals:
        // the fit drops the avg(F F) block and the nonzero sample means of
        // the null functions, both O(1/sqrt(N)).
        let diff = rep_base.variance - rep_opt.variance;
        assert!(
            (diff - res.delta2).abs() < 0.1 * res.delta2,
            "reduction {diff} vs delta2 {}",
            res.delta2
        );
    }

    #[test]
    fn split_fit_uses_only_the_first_half() {
        let st = coherent(c(1.0, 0.5));
        let ds = generate_dataset(&st, PhaseStrategy::Random, 8, 200, 99).unwrap();
        let fam = NullFamily::new(FamilyKind::TypeI, 3).unwrap();
        let opts = OptimizeOptions { split_fit: true, ..Default::default() };
        let res = optimize_from_dataset(&ds, KernelTarget::Intensity, &fam, &opts).unwrap();
        assert_eq!(res.fit_blocks, Some(4));
        // Must agree with an explicit fit on the first-half subset.
        let first = ds.subset_blocks(0, 4).unwrap();
        let opts2 = OptimizeOptions::default();
        let res2 = optimize_from_dataset(&first, KernelTarget::Intensity, &fam, &opts2).unwrap();
        for (x, y) in res.mu.iter().zip(&res2.mu) {
            assert!((x - y).norm() < 1e-14);
        }
    }

    #[test]
    fn conditioning_guard_drops_members_on_rank_deficient_data() {
        // 40 samples cannot support a 24-member Gram matrix; the guard must
        // shrink the system instead of returning garbage.
        let st = coherent(c(0.9, 0.0));
        let ds = generate_dataset(&st, PhaseStrategy::Random, 2, 20, 7).unwrap();
        let fam = NullFamily::new(FamilyKind::TypeI, 24).unwrap();
        let opts = OptimizeOptions::default();
        let res = optimize_from_dataset(&ds, KernelTarget::Intensity, &fam, &opts).unwrap();
        assert!(res.dropped_members > 0);
        assert_eq!(res.used_members + res.dropped_members, 24);
        assert!(res.condition_estimate <= MAX_CONDITION);
        assert_eq!(res.mu.len(), res.used_members);
    }

    #[test]
    fn estimate_a_converges_to_exact_gram_matrix() {
        let st = coherent(c(1.2, -0.3));
        let fam = NullFamily::new(FamilyKind::TypeI, 4).unwrap();
        let exact_gram = exact::exact_a(&st, &fam).unwrap();
        let ds = generate_dataset(&st, PhaseStrategy::Random, 20, 5000, 2024).unwrap();
        let emp = estimate_a(&ds, &fam).unwrap();
        for (e, x) in emp.iter().zip(&exact_gram) {
            assert!(
                (e - x).norm() < 0.15 * (1.0 + x.norm()),
                "empirical {e} vs exact {x}"
            );
        }
        // Hermitian by construction.
        for k in 0..4 {
            for l in 0..4 {
                assert_eq!(emp[k * 4 + l], emp[l * 4 + k].conj());
            }
        }
    }

    #[test]
    fn result_serializes_with_interleaved_arrays() {
        let st = coherent(c(1.0, 0.4));
        let fam = NullFamily::new(FamilyKind::TypeI, 3).unwrap();
        let res = optimize_exact(&st, KernelTarget::Amplitude, &fam, Mode::Complex).unwrap();
        let v = serde_json::to_value(&res).unwrap();
        assert_eq!(v["a"].as_array().unwrap().len(), 2 * 9);
        assert_eq!(v["b"].as_array().unwrap().len(), 2 * 3);
        assert_eq!(v["mu"].as_array().unwrap().len(), 2 * 3);
        assert_eq!(v["c"].as_array().unwrap().len(), 2 * 3);
        assert!(v["gamma"].is_number());
        assert!(v["dropped_members"].is_number());
        // b[0] of the amplitude kernel is -conj(alpha); check the layout.
        let b_re = v["b"][0].as_f64().unwrap();
        let b_im = v["b"][1].as_f64().unwrap();
        assert_abs_diff_eq!(b_re, -1.0, epsilon = 1e-10);
        assert_abs_diff_eq!(b_im, 0.4, epsilon = 1e-10);
    }

    #[test]
    fn optimized_kernel_keeps_the_exact_mean() {
        // The defining property: null additions change nothing in
        // expectation. Checked at the quadrature level.
        let st = coherent(c(1.3, 0.6));
        let fam = NullFamily::new(FamilyKind::TypeI, 5).unwrap();
        let res = optimize_exact(&st, KernelTarget::Intensity, &fam, Mode::Real).unwrap();
        let kopt = res.kernel().unwrap();
        let mut eng = QuadEngine::for_state(&st).unwrap();
        let mean_opt = eng.average_kernel(&kopt).unwrap();
        let base = KernelExpr::base(KernelTarget::Intensity).unwrap();
        let mean_base = eng.average_kernel(&base).unwrap();
        assert!(
            (mean_opt - mean_base).norm() <= 1e-8 * (1.0 + mean_base.norm()),
            "{mean_opt} vs {mean_base}"
        );
        assert!((mean_base.re - st.mean_photons()).abs() < 1e-8);
    }
}
