//! Cross-module invariants: the structural identities that make null-function
//! variance reduction sound. Each test checks one identity two independent
//! ways (analytic moments vs numerical quadrature vs Monte Carlo).

use qht::adapt::exact::{exact_a, exact_b, exact_c, exact_var_base, QuadEngine};
use qht::adapt::{estimate_a, estimate_b, optimize_exact, Mode};
use qht::homodyne::{generate_dataset, PhaseStrategy};
use qht::kernels::{KernelExpr, KernelTarget};
use qht::nullfns::{FamilyKind, NullFamily};
use qht::states::{StateKind, StateSpec};
use qht::C64;

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// Representative states from every supported family, truncated deep enough
/// that quadrature-level checks resolve 1e-8.
fn exhibit_states() -> Vec<(&'static str, StateSpec)> {
    vec![
        (
            "coherent",
            StateSpec::new(StateKind::Coherent { alpha: c(1.1, -0.6) }).unwrap(),
        ),
        (
            "squeezed",
            StateSpec::with_nmax(StateKind::squeezed_from_mean_photons(2.0).unwrap(), 448)
                .unwrap(),
        ),
        ("fock", StateSpec::new(StateKind::Fock { n: 3 }).unwrap()),
        (
            "cat",
            StateSpec::with_nmax(StateKind::Cat { alpha: c(1.5, 0.0) }, 384).unwrap(),
        ),
    ]
}

#[test]
fn null_functions_average_to_zero_under_exact_quadrature() {
    for (name, st) in exhibit_states() {
        let mut eng = QuadEngine::for_state(&st).unwrap();
        assert!(
            (eng.mass() - 1.0).abs() < 1e-7,
            "{name}: grid mass {} off unity",
            eng.mass()
        );
        for kind in [FamilyKind::TypeI, FamilyKind::TypeII, FamilyKind::TypeIII] {
            let fam = NullFamily::new(kind, 10).unwrap();
            for (j, mem) in fam.members().iter().enumerate() {
                let v = eng.average_monomial(mem.k, mem.phase_exponent() as i64);
                assert!(
                    v.norm() < 1e-8,
                    "{name} {kind:?} member {j}: average {v} not null"
                );
            }
        }
    }
}

#[test]
fn products_of_null_functions_are_null() {
    // Closure under multiplication is what kills the cross terms in the
    // variance identity: F_a F_b is again x^k e^{iq phi} with q > k + 2.
    let st = StateSpec::with_nmax(StateKind::Cat { alpha: c(1.3, 0.4) }, 384).unwrap();
    let mut eng = QuadEngine::for_state(&st).unwrap();
    let fam = NullFamily::new(FamilyKind::TypeIII, 8).unwrap();
    for a in fam.members() {
        for b in fam.members() {
            let prod = a.closure_product(b);
            let v = eng.average_monomial(prod.k, prod.phase_exponent() as i64);
            assert!(
                v.norm() < 1e-8,
                "product ({},{}) x ({},{}) averages to {v}",
                a.k,
                a.n,
                b.k,
                b.n
            );
        }
    }
}

#[test]
fn null_functions_average_to_zero_on_samples() {
    // Monte Carlo version of the null property: adding one null function to
    // the amplitude kernel must leave its mean at <a> = 0 within errors.
    let st = StateSpec::new(StateKind::squeezed_from_mean_photons(1.5).unwrap()).unwrap();
    let ds = generate_dataset(&st, PhaseStrategy::Stratified { p: 20 }, 20, 500, 4242).unwrap();
    let fam = NullFamily::new(FamilyKind::TypeIII, 6).unwrap();

    let base = KernelExpr::base(KernelTarget::Amplitude).unwrap();
    let rep = qht::stats::tomo_average(&ds, &base).unwrap();
    assert!(
        rep.mean.norm() < 4.0 * rep.std_error.unwrap() * 2.0f64.sqrt(),
        "base amplitude mean {} vs SE {}",
        rep.mean,
        rep.std_error.unwrap()
    );

    for j in 0..6 {
        let mut mu = vec![c(0.0, 0.0); 6];
        mu[j] = c(1.0, 0.0);
        let nu = vec![c(0.0, 0.0); 6];
        let mut k = KernelExpr::with_family(KernelTarget::Amplitude, fam.clone()).unwrap();
        k.set_complex_coefficients(&mu, &nu).unwrap();
        let rep = qht::stats::tomo_average(&ds, &k).unwrap();
        let se = rep.std_error.unwrap();
        assert!(
            rep.mean.norm() < 4.0 * se * 2.0f64.sqrt() + 1e-12,
            "member {j}: mean {} exceeds 4 sigma ({se})",
            rep.mean
        );
    }
}

#[test]
fn variance_identity_holds_for_arbitrary_real_coefficients() {
    // var(K) = var(R) - 4 Re sum(conj(mu) b) + 2 mu^T A conj(mu) for any mu,
    // checked against direct quadrature of the full kernel.
    let st = StateSpec::new(StateKind::Coherent { alpha: c(1.2, 0.5) }).unwrap();
    let fam = NullFamily::new(FamilyKind::TypeI, 5).unwrap();
    let target = KernelTarget::Intensity;
    let a = exact_a(&st, &fam).unwrap();
    let b = exact_b(&st, target, &fam).unwrap();
    let var_base = exact_var_base(&st, target).unwrap();

    let mu = [c(0.3, -0.2), c(-0.15, 0.1), c(0.05, 0.0), c(0.0, 0.25), c(-0.08, -0.03)];
    let cross: f64 = mu.iter().zip(&b).map(|(m, bk)| (bk * m.conj()).re).sum();
    let mut quad = 0.0;
    for k in 0..5 {
        for l in 0..5 {
            quad += (mu[k] * a[k * 5 + l] * mu[l].conj()).re;
        }
    }
    let predicted = var_base - 4.0 * cross + 2.0 * quad;

    let mut kexpr = KernelExpr::with_family(target, fam).unwrap();
    kexpr.set_real_coefficients(&mu).unwrap();
    let mut eng = QuadEngine::for_state(&st).unwrap();
    let measured = eng.variance_kernel(&kexpr).unwrap();
    assert!(
        (measured - predicted).abs() < 1e-8 * (1.0 + predicted.abs()),
        "quadrature {measured} vs moment identity {predicted}"
    );
}

#[test]
fn variance_identity_holds_for_arbitrary_complex_coefficients() {
    // Complex targets split the correction between mu and nu:
    // 2 var(K) - 2 var(R) = -2 Re sum(conj(mu) b) - 2 Re sum(conj(nu) c)
    //                      + mu^T A conj(mu) + nu^H A nu.
    let st = StateSpec::new(StateKind::Coherent { alpha: c(0.9, -0.7) }).unwrap();
    let fam = NullFamily::new(FamilyKind::TypeI, 4).unwrap();
    let target = KernelTarget::Amplitude;
    let a = exact_a(&st, &fam).unwrap();
    let b = exact_b(&st, target, &fam).unwrap();
    let cv = exact_c(&st, target, &fam).unwrap();
    let var_base = exact_var_base(&st, target).unwrap();

    let mu = [c(0.2, 0.1), c(-0.3, 0.05), c(0.0, -0.12), c(0.07, 0.0)];
    let nu = [c(-0.1, 0.2), c(0.15, 0.15), c(0.04, 0.0), c(0.0, -0.2)];
    let cross_b: f64 = mu.iter().zip(&b).map(|(m, bk)| (bk * m.conj()).re).sum();
    let cross_c: f64 = nu.iter().zip(&cv).map(|(n, ck)| (ck * n.conj()).re).sum();
    let mut quad_mu = 0.0;
    let mut quad_nu = 0.0;
    for k in 0..4 {
        for l in 0..4 {
            quad_mu += (mu[k] * a[k * 4 + l] * mu[l].conj()).re;
            quad_nu += (nu[k].conj() * a[k * 4 + l] * nu[l]).re;
        }
    }
    let predicted = var_base + 0.5 * (-2.0 * cross_b - 2.0 * cross_c + quad_mu + quad_nu);

    let mut kexpr = KernelExpr::with_family(target, fam).unwrap();
    kexpr.set_complex_coefficients(&mu, &nu).unwrap();
    let mut eng = QuadEngine::for_state(&st).unwrap();
    let measured = eng.variance_kernel(&kexpr).unwrap();
    assert!(
        (measured - predicted).abs() < 1e-8 * (1.0 + predicted.abs()),
        "quadrature {measured} vs moment identity {predicted}"
    );
}

#[test]
fn optimum_realizes_the_predicted_variance_reduction() {
    // At the solved coefficients the quadrature variance of the optimized
    // kernel must sit exactly delta2 below the base kernel's.
    let cases = vec![
        (
            StateSpec::new(StateKind::Coherent { alpha: c(3.0f64.sqrt(), 0.0) }).unwrap(),
            KernelTarget::Intensity,
            Mode::Real,
        ),
        (
            StateSpec::with_nmax(StateKind::squeezed_from_mean_photons(2.0).unwrap(), 448)
                .unwrap(),
            KernelTarget::Quadrature,
            Mode::Real,
        ),
        (
            StateSpec::new(StateKind::Coherent { alpha: c(1.0, 0.8) }).unwrap(),
            KernelTarget::Amplitude,
            Mode::Complex,
        ),
    ];
    for (st, target, mode) in cases {
        let fam = NullFamily::new(FamilyKind::TypeI, 6).unwrap();
        let res = optimize_exact(&st, target, &fam, mode).unwrap();
        let mut eng = QuadEngine::for_state(&st).unwrap();
        let base = KernelExpr::base(target).unwrap();
        let kopt = res.kernel().unwrap();

        let var_base = eng.variance_kernel(&base).unwrap();
        let var_opt = eng.variance_kernel(&kopt).unwrap();
        let scale = 1.0 + var_base.abs();
        assert!(
            (var_base - res.variance_base).abs() < 1e-7 * scale,
            "{target:?}: quadrature base variance {var_base} vs moment value {}",
            res.variance_base
        );
        assert!(
            ((var_base - var_opt) - res.delta2).abs() < 1e-8 * scale,
            "{target:?}: measured reduction {} vs delta2 {}",
            var_base - var_opt,
            res.delta2
        );

        // Mean invariance at the quadrature level.
        let mean_base = eng.average_kernel(&base).unwrap();
        let mean_opt = eng.average_kernel(&kopt).unwrap();
        assert!(
            (mean_base - mean_opt).norm() < 1e-8 * (1.0 + mean_base.norm()),
            "{target:?}: mean moved from {mean_base} to {mean_opt}"
        );
    }
}

#[test]
fn optimized_pattern_kernel_keeps_the_matrix_element() {
    let alpha = c(1.0, 0.3);
    let st = StateSpec::new(StateKind::Coherent { alpha }).unwrap();
    let target = KernelTarget::MatrixElement { n: 2, m: 1 };
    let fam = NullFamily::new(FamilyKind::TypeI, 6).unwrap();
    let res = optimize_exact(&st, target, &fam, Mode::Complex).unwrap();
    let kopt = res.kernel().unwrap();

    let mut eng = QuadEngine::for_state(&st).unwrap();
    let base = KernelExpr::base(target).unwrap();
    let mean_base = eng.average_kernel(&base).unwrap();
    let mean_opt = eng.average_kernel(&kopt).unwrap();
    assert!(
        (mean_base - mean_opt).norm() < 1e-8,
        "pattern mean moved from {mean_base} to {mean_opt}"
    );
    let truth = st.density_matrix_element(2, 1);
    assert!(
        (mean_opt - truth).norm() < 1e-6,
        "optimized pattern mean {mean_opt} vs rho_21 {truth}"
    );
    // The correction must actually do something on a coherent state.
    assert!(res.delta2 > 1e-4, "no reduction found: {}", res.delta2);
}

#[test]
fn empirical_system_converges_at_the_root_n_rate() {
    // Sample estimates of A and b are plain means, so growing the dataset
    // tenfold should shrink their worst-entry error by sqrt(10), up to
    // factor-2 fluctuations after averaging over seeds. Four members keep
    // the heaviest Gram entry at an x^6 average; much higher powers are so
    // heavy-tailed that 10 seeds cannot pin the rate to a factor 2.
    let st = StateSpec::new(StateKind::Coherent { alpha: c(3.0f64.sqrt(), 0.0) }).unwrap();
    let fam = NullFamily::new(FamilyKind::TypeI, 4).unwrap();
    let target = KernelTarget::Intensity;
    let a_exact = exact_a(&st, &fam).unwrap();
    let b_exact = exact_b(&st, target, &fam).unwrap();

    let max_err = |emp: &[C64], exact: &[C64]| -> f64 {
        emp.iter()
            .zip(exact)
            .map(|(e, x)| (e - x).norm())
            .fold(0.0, f64::max)
    };

    let mut err_a = [0.0f64; 2];
    let mut err_b = [0.0f64; 2];
    for seed in 0..10u64 {
        for (i, n_per_block) in [400u32, 4000].into_iter().enumerate() {
            let ds = generate_dataset(
                &st,
                PhaseStrategy::Random,
                25,
                n_per_block,
                9_000 + 37 * seed + i as u64,
            )
            .unwrap();
            let a_emp = estimate_a(&ds, &fam).unwrap();
            let b_emp = estimate_b(&ds, target, &fam).unwrap();
            err_a[i] += max_err(&a_emp, &a_exact) / 10.0;
            err_b[i] += max_err(&b_emp, &b_exact) / 10.0;
        }
    }
    let root10 = 10.0f64.sqrt();
    for (what, err) in [("A", err_a), ("b", err_b)] {
        let ratio = err[0] / err[1];
        assert!(
            ratio > root10 / 2.0 && ratio < root10 * 2.0,
            "{what}: error ratio {ratio} not within factor 2 of sqrt(10) \
             (1e4: {}, 1e5: {})",
            err[0],
            err[1]
        );
    }
}

#[test]
fn intensity_noise_identity_holds_on_all_state_families() {
    // var(R) for the intensity kernel decomposes into photon-number variance
    // plus (<a^dag^2 a^2> + 2<n> + 1)/2 on any state.
    for (name, st) in exhibit_states() {
        let var = exact_var_base(&st, KernelTarget::Intensity).unwrap();
        let a2 = st.normally_ordered_moment(2, 2).unwrap().re;
        let n = st.mean_photons();
        let want = st.photon_number_variance().unwrap() + 0.5 * (a2 + 2.0 * n + 1.0);
        assert!(
            (var - want).abs() < 1e-8 * (1.0 + want),
            "{name}: base variance {var} vs moment identity {want}"
        );
    }
}

#[test]
fn moment_kernels_average_to_normally_ordered_moments() {
    let st = StateSpec::with_nmax(StateKind::Cat { alpha: c(1.5, 0.0) }, 384).unwrap();
    let mut eng = QuadEngine::for_state(&st).unwrap();
    for n in 0..=4usize {
        for m in 0..=(4 - n) {
            let k = KernelExpr::base(KernelTarget::Moment { n, m }).unwrap();
            let got = eng.average_kernel(&k).unwrap();
            let want = st.normally_ordered_moment(n, m).unwrap();
            assert!(
                (got - want).norm() < 1e-6 * (1.0 + want.norm()),
                "({n},{m}): quadrature {got} vs ladder moment {want}"
            );
        }
    }
}
