//! Quadrature sampling: inverse-CDF draws from p(x, phi).
//!
//! Every draw consumes exactly one uniform, which keeps dataset generation
//! bit-reproducible: the mapping from RNG stream to samples never depends
//! on accept/reject luck. Gaussian families (coherent, squeezed vacuum)
//! use the exact normal quantile. Fock states build one inverse-CDF table
//! up front; their quadrature distribution is phase independent. Cat states
//! tabulate per phase from the closed-form two-lobe density, with optional
//! reuse when phases repeat.

use crate::error::{Error, Result};
use crate::states::{psi_all, StateKind, StateSpec};
use crate::C64;
use statrs::distribution::{ContinuousCDF, Normal};

/// Table resolution: cells per unit of x. Per-cell Simpson integration at
/// this step keeps the tabulated CDF within ~1e-9 of exact, far below any
/// Monte Carlo resolution.
const CELLS_PER_UNIT: f64 = 256.0;

/// Tabulated inverse CDF on a uniform grid.
#[derive(Debug, Clone)]
pub(crate) struct InvCdf {
    x0: f64,
    h: f64,
    cdf: Vec<f64>,
}

impl InvCdf {
    fn build(pdf: impl Fn(f64) -> f64, x0: f64, x1: f64) -> Result<Self> {
        let cells = ((x1 - x0) * CELLS_PER_UNIT).ceil() as usize;
        let h = (x1 - x0) / cells as f64;
        let mut cdf = Vec::with_capacity(cells + 1);
        cdf.push(0.0);
        let mut acc = 0.0;
        let mut left = pdf(x0);
        for i in 0..cells {
            let mid = pdf(x0 + h * (i as f64 + 0.5));
            let right = pdf(x0 + h * (i as f64 + 1.0));
            acc += h / 6.0 * (left + 4.0 * mid + right);
            cdf.push(acc);
            left = right;
        }
        // The range is chosen to hold all but ~1e-12 of the mass, so a
        // visible shortfall means the density or the range is wrong.
        if (acc - 1.0).abs() > 1e-6 {
            return Err(Error::InvalidParameter {
                name: "sampler table",
                why: format!("probability mass {acc} over [{x0}, {x1}] is not 1"),
            });
        }
        for c in cdf.iter_mut() {
            *c /= acc;
        }
        *cdf.last_mut().unwrap() = 1.0;
        Ok(InvCdf { x0, h, cdf })
    }

    fn draw(&self, u: f64) -> f64 {
        let i = self.cdf.partition_point(|&c| c <= u).clamp(1, self.cdf.len() - 1);
        let lo = self.cdf[i - 1];
        let df = self.cdf[i] - lo;
        let frac = if df > 0.0 { (u - lo) / df } else { 0.5 };
        self.x0 + self.h * ((i - 1) as f64 + frac)
    }
}

#[derive(Debug, Clone)]
enum Flavor {
    Coherent {
        alpha: C64,
    },
    Squeezed {
        sinh_r: f64,
        cosh_r: f64,
        theta: f64,
    },
    Fock {
        n: usize,
        table: InvCdf,
    },
    Cat {
        alpha: C64,
        norm_sq: f64,
    },
}

/// Per-phase table reuse for cat states; keyed by the exact bits of phi.
pub(crate) type PhaseCache = Vec<(u64, InvCdf)>;

/// Draws quadrature outcomes x ~ p(x, phi) for one state.
#[derive(Debug, Clone)]
pub struct QuadratureSampler {
    flavor: Flavor,
    normal: Normal,
}

impl QuadratureSampler {
    pub fn new(spec: &StateSpec) -> Result<Self> {
        let flavor = match spec.kind() {
            StateKind::Coherent { alpha } => Flavor::Coherent { alpha: *alpha },
            StateKind::SqueezedVacuum { r, theta } => Flavor::Squeezed {
                sinh_r: r.sinh(),
                cosh_r: r.cosh(),
                theta: *theta,
            },
            StateKind::Fock { n } => {
                let n = *n;
                // Classical turning point sqrt(n + 1/2) plus a margin that
                // caps the untabulated tail mass around 1e-12.
                let half = (n as f64 + 0.5).sqrt() + 4.0;
                let table =
                    InvCdf::build(|x| psi_all(n, x)[n].powi(2), -half, half)?;
                Flavor::Fock { n, table }
            }
            StateKind::Cat { alpha } => Flavor::Cat {
                alpha: *alpha,
                norm_sq: 1.0 / (2.0 * (1.0 + (-2.0 * alpha.norm_sqr()).exp())),
            },
        };
        Ok(QuadratureSampler {
            flavor,
            normal: Normal::new(0.0, 1.0).expect("standard normal"),
        })
    }

    /// Exact quadrature density p(x, phi) in the form the sampler draws
    /// from (closed forms; Fock uses the eigenfunction directly).
    pub fn pdf(&self, x: f64, phi: f64) -> f64 {
        let sqrt_2_over_pi = (2.0 / std::f64::consts::PI).sqrt();
        match &self.flavor {
            Flavor::Coherent { alpha } => {
                let mean = (alpha * C64::from_polar(1.0, -phi)).re;
                sqrt_2_over_pi * (-2.0 * (x - mean).powi(2)).exp()
            }
            Flavor::Squeezed {
                sinh_r,
                cosh_r,
                theta,
            } => {
                let var = squeezed_variance(*sinh_r, *cosh_r, *theta, phi);
                (-0.5 * x * x / var).exp() / (var * 2.0 * std::f64::consts::PI).sqrt()
            }
            Flavor::Fock { n, .. } => psi_all(*n, x)[*n].powi(2),
            Flavor::Cat { alpha, norm_sq } => {
                let rot = alpha * C64::from_polar(1.0, -phi);
                let (u, v) = (rot.re, rot.im);
                norm_sq
                    * sqrt_2_over_pi
                    * ((-2.0 * (x - u).powi(2)).exp()
                        + (-2.0 * (x + u).powi(2)).exp()
                        + 2.0 * (-2.0 * (u * u + x * x)).exp() * (4.0 * v * x).cos())
            }
        }
    }

    /// One draw at phase `phi` from one uniform `u` in [0, 1).
    pub fn draw(&self, phi: f64, u: f64) -> Result<f64> {
        match &self.flavor {
            Flavor::Coherent { alpha } => {
                let mean = (alpha * C64::from_polar(1.0, -phi)).re;
                Ok(mean + 0.5 * self.quantile(u))
            }
            Flavor::Squeezed {
                sinh_r,
                cosh_r,
                theta,
            } => {
                let sd = squeezed_variance(*sinh_r, *cosh_r, *theta, phi).sqrt();
                Ok(sd * self.quantile(u))
            }
            Flavor::Fock { table, .. } => Ok(table.draw(u)),
            Flavor::Cat { .. } => Ok(self.cat_table(phi)?.draw(u)),
        }
    }

    /// Like [`draw`](Self::draw), but reuses per-phase cat tables through
    /// `cache`. Useful when phases repeat exactly (gridded scans); other
    /// states ignore the cache.
    pub(crate) fn draw_cached(
        &self,
        cache: &mut PhaseCache,
        phi: f64,
        u: f64,
    ) -> Result<f64> {
        if let Flavor::Cat { .. } = self.flavor {
            let key = phi.to_bits();
            if let Some((_, t)) = cache.iter().find(|(k, _)| *k == key) {
                return Ok(t.draw(u));
            }
            let t = self.cat_table(phi)?;
            let x = t.draw(u);
            if cache.len() < 4096 {
                cache.push((key, t));
            }
            Ok(x)
        } else {
            self.draw(phi, u)
        }
    }

    fn cat_table(&self, phi: f64) -> Result<InvCdf> {
        let half = match &self.flavor {
            Flavor::Cat { alpha, .. } => alpha.norm() + 3.75,
            _ => unreachable!("cat_table on non-cat flavor"),
        };
        let pdf = |x: f64| self.pdf(x, phi);
        InvCdf::build(pdf, -half, half)
    }

    fn quantile(&self, u: f64) -> f64 {
        // u = 0 would map to -inf; clamp to the smallest useful quantile.
        self.normal.inverse_cdf(u.max(1e-320))
    }
}

/// Variance of x_phi on squeezed vacuum: the quadrature along theta/2 is
/// squeezed, the orthogonal one antisqueezed.
fn squeezed_variance(sinh_r: f64, cosh_r: f64, theta: f64, phi: f64) -> f64 {
    0.25 * (1.0 + 2.0 * sinh_r * sinh_r
        - 2.0 * sinh_r * cosh_r * (2.0 * phi - theta).cos())
}

/// One quadrature draw for a state at a phase. Convenience wrapper that
/// rebuilds the sampler each call; loops should construct a
/// [`QuadratureSampler`] once instead.
pub fn sample_quadrature<R: rand::Rng + ?Sized>(
    spec: &StateSpec,
    phi: f64,
    rng: &mut R,
) -> Result<f64> {
    QuadratureSampler::new(spec)?.draw(phi, rng.random::<f64>())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    fn test_states() -> Vec<StateSpec> {
        vec![
            StateSpec::new(StateKind::Coherent {
                alpha: C64::new(1.5, -0.9),
            })
            .unwrap(),
            StateSpec::new(StateKind::squeezed_from_mean_photons(4.0).unwrap()).unwrap(),
            StateSpec::new(StateKind::Fock { n: 4 }).unwrap(),
            StateSpec::new(StateKind::Cat {
                alpha: C64::new(3f64.sqrt(), 0.0),
            })
            .unwrap(),
        ]
    }

    #[test]
    fn sampler_pdf_matches_state_pdf() {
        // The sampler's closed forms and the Fock-sum density must be the
        // same function; any mismatch would bias every dataset. The
        // squeezed state gets a deep truncation because at phi = 0 its
        // Fock tail adds coherently and would otherwise dominate the
        // comparison at the 1e-7 level.
        let mut states = test_states();
        states[1] =
            StateSpec::with_nmax(StateKind::squeezed_from_mean_photons(4.0).unwrap(), 512)
                .unwrap();
        for spec in states {
            let s = QuadratureSampler::new(&spec).unwrap();
            for &x in &[-3.0, -1.1, -0.3, 0.0, 0.7, 1.9, 3.2] {
                for &phi in &[0.0, 0.8, 1.6, 2.9] {
                    let a = s.pdf(x, phi);
                    let b = spec.quadrature_pdf(x, phi);
                    assert!(
                        (a - b).abs() <= 1e-10,
                        "{:?}: pdf({x}, {phi}) sampler {a} vs state {b}",
                        spec.kind()
                    );
                }
            }
        }
    }

    #[test]
    fn vacuum_draw_moments() {
        let spec = StateSpec::new(StateKind::Fock { n: 0 }).unwrap();
        let s = QuadratureSampler::new(&spec).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(42);
        let n = 100_000;
        let mut sum = 0.0;
        let mut sum2 = 0.0;
        for _ in 0..n {
            let x = s.draw(0.3, rng.random::<f64>()).unwrap();
            sum += x;
            sum2 += x * x;
        }
        let mean = sum / n as f64;
        let var = sum2 / n as f64 - mean * mean;
        assert!(mean.abs() <= 4.0 * 0.5 / (n as f64).sqrt(), "mean {mean}");
        assert!((var - 0.25).abs() <= 0.01, "variance {var}");
    }

    #[test]
    fn coherent_draw_mean() {
        let spec = StateSpec::new(StateKind::Coherent {
            alpha: C64::new(3f64.sqrt(), 0.0),
        })
        .unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        let s = QuadratureSampler::new(&spec).unwrap();
        let n = 100_000;
        let mean: f64 = (0..n)
            .map(|_| s.draw(0.0, rng.random::<f64>()).unwrap())
            .sum::<f64>()
            / n as f64;
        assert!((mean - 3f64.sqrt()).abs() <= 0.01, "mean {mean}");
    }

    #[test]
    fn fock_one_density_dips_to_zero_at_origin() {
        // psi_1(0) = 0: with 10^6 draws the bin straddling the origin stays
        // far below the two peaks.
        let spec = StateSpec::new(StateKind::Fock { n: 1 }).unwrap();
        let s = QuadratureSampler::new(&spec).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let nbins = 121; // odd count, central bin straddles x = 0
        let (lo, hi) = (-3.0, 3.0);
        let mut counts = vec![0u32; nbins];
        for _ in 0..1_000_000 {
            let x = s.draw(1.1, rng.random::<f64>()).unwrap();
            if x >= lo && x < hi {
                counts[((x - lo) / (hi - lo) * nbins as f64) as usize] += 1;
            }
        }
        let center = counts[nbins / 2];
        let peak = *counts.iter().max().unwrap();
        assert!(
            (center as f64) < 0.01 * peak as f64,
            "center {center}, peak {peak}"
        );
    }

    #[test]
    fn draws_pass_kolmogorov_smirnov_against_exact_cdf() {
        // 1% critical value of the KS statistic.
        let n = 100_000usize;
        let crit = 1.628 / (n as f64).sqrt();
        for spec in test_states() {
            let s = QuadratureSampler::new(&spec).unwrap();
            for &phi in &[0.0, std::f64::consts::FRAC_PI_4, std::f64::consts::FRAC_PI_2] {
                // Reference CDF by cumulative Simpson of the state's own
                // density (independent of the sampler's tables).
                let half = 14.0;
                let cells = 5600usize;
                let h = 2.0 * half / cells as f64;
                let mut cdf = vec![0.0; cells + 1];
                let mut left = spec.quadrature_pdf(-half, phi);
                for i in 0..cells {
                    let x0 = -half + h * i as f64;
                    let mid = spec.quadrature_pdf(x0 + 0.5 * h, phi);
                    let right = spec.quadrature_pdf(x0 + h, phi);
                    cdf[i + 1] = cdf[i] + h / 6.0 * (left + 4.0 * mid + right);
                    left = right;
                }
                let total = cdf[cells];
                let eval_cdf = |x: f64| {
                    let t = ((x + half) / h).clamp(0.0, cells as f64);
                    let i = (t as usize).min(cells - 1);
                    let frac = t - i as f64;
                    (cdf[i] + frac * (cdf[i + 1] - cdf[i])) / total
                };
                let mut rng = ChaCha12Rng::seed_from_u64(1234);
                let mut cache = PhaseCache::new();
                let mut xs: Vec<f64> = (0..n)
                    .map(|_| s.draw_cached(&mut cache, phi, rng.random::<f64>()).unwrap())
                    .collect();
                xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
                let mut d = 0.0f64;
                for (i, &x) in xs.iter().enumerate() {
                    let f = eval_cdf(x);
                    d = d.max((f - i as f64 / n as f64).abs());
                    d = d.max((f - (i + 1) as f64 / n as f64).abs());
                }
                assert!(
                    d < crit,
                    "{:?} at phi={phi}: KS distance {d} >= {crit}",
                    spec.kind()
                );
            }
        }
    }

    #[test]
    fn cat_phase_cache_reproduces_uncached_draws() {
        let spec = StateSpec::new(StateKind::Cat {
            alpha: C64::new(1.2, 0.7),
        })
        .unwrap();
        let s = QuadratureSampler::new(&spec).unwrap();
        let mut cache = PhaseCache::new();
        for i in 0..50 {
            let phi = (i % 5) as f64 * 0.31;
            let u = (i as f64 + 0.5) / 50.0;
            let a = s.draw(phi, u).unwrap();
            let b = s.draw_cached(&mut cache, phi, u).unwrap();
            assert_eq!(a, b);
        }
        assert_eq!(cache.len(), 5);
    }

    #[test]
    fn one_off_helper_draws() {
        let spec = StateSpec::new(StateKind::Fock { n: 2 }).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(9);
        let x = sample_quadrature(&spec, 0.4, &mut rng).unwrap();
        assert!(x.is_finite());
    }
}
