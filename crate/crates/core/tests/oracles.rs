//! Closed-form oracles for every layer: rates, propagators, splittings, spectra,
//! exponents and similarity transforms.

use approx::assert_relative_eq;
use mudich_core::lyapunov::{check_spectral_bounds, mu_lyapunov, LyapunovConfig};
use mudich_core::reduce::{gram_transform, ExplicitConjugacy, TransformFn};
use mudich_core::spectrum::membership_bounded_forward;
use mudich_core::system::{constant, rotation2d, triangular_halfline};
use mudich_core::*;
use nalgebra::{DMatrix, DVector};
use std::sync::Arc;

fn rate(name: &str) -> GrowthRate {
    builtin_rate(name, &Params::default()).unwrap()
}

fn diag(a: f64, b: f64) -> DMatrix<f64> {
    DMatrix::from_row_slice(2, 2, &[a, 0.0, 0.0, b])
}

#[test]
fn builtin_rates_match_their_formulas() {
    assert_relative_eq!(rate("exponential").log_mu(3.0).unwrap(), 3.0);
    assert_relative_eq!(rate("polynomial-full").log_mu(-4.0).unwrap(), -(5.0f64).ln(), epsilon = 1e-14);
    assert_relative_eq!(rate("polynomial-half").log_mu(4.0).unwrap(), (5.0f64).ln(), epsilon = 1e-14);
    assert_relative_eq!(rate("sqrt-exp-half").log_mu(3.0).unwrap(), 1.0, epsilon = 1e-14);
    assert_relative_eq!(rate("sqrt-exp-half").dlog_mu(3.0).unwrap(), 0.25, epsilon = 1e-14);
    assert_relative_eq!(sign_weight(&rate("polynomial-full"), -4.0).unwrap(), (5.0f64).ln(), epsilon = 1e-14);
    assert!(matches!(rate("polynomial-half").log_mu(-1.0), Err(Error::OutOfDomain { .. })));
    assert!(matches!(builtin_rate("cubic", &Params::default()), Err(Error::UnknownRate(_))));
}

#[test]
fn table_rate_interpolates_and_rejects_bad_rows() {
    let ts: Vec<f64> = (0..=40).map(|i| i as f64 * 0.5).collect();
    let ls: Vec<f64> = ts.iter().map(|t| (1.0 + t).ln()).collect();
    let r = GrowthRate::from_table("tab", Domain::HalfLine, ts.clone(), ls).unwrap();
    assert_relative_eq!(r.log_mu(7.25).unwrap(), (8.25f64).ln(), epsilon = 1e-3);
    let mut flat: Vec<f64> = ts.iter().map(|t| (1.0 + t).ln()).collect();
    flat[5] = flat[4];
    assert!(GrowthRate::from_table("tab", Domain::HalfLine, ts, flat).is_err());
}

#[test]
fn constant_system_matches_exponential() {
    let g = integrate(&constant("c", diag(1.0, -1.0), Domain::FullLine), -1.0, 3.0, 1e-10).unwrap();
    let m = g.phi(2.0, 0.0).unwrap().to_matrix();
    assert_relative_eq!(m[(0, 0)], 2f64.exp(), max_relative = 1e-8);
    assert_relative_eq!(m[(1, 1)], (-2f64).exp(), max_relative = 1e-8);
    let shifted = phi_shifted(&g, &rate("exponential"), 1.0, 2.0, 0.0).unwrap().to_matrix();
    assert_relative_eq!(shifted[(0, 0)], 1.0, max_relative = 1e-8);
    assert_relative_eq!(shifted[(1, 1)], (-4f64).exp(), max_relative = 1e-8);
}

#[test]
fn triangular_matches_closed_form() {
    let sys = triangular_halfline();
    let g = integrate(&sys, 0.0, 10.0, 1e-10).unwrap();
    for &(t, s) in &[(3.0, 0.0), (10.0, 2.5), (1.0, 7.0)] {
        let num = g.phi(t, s).unwrap();
        let exact = sys.closed_form(t, s).unwrap();
        assert!(num.relative_distance(&exact) < 1e-6, "({t},{s})");
    }
    let m = g.phi(3.0, 0.0).unwrap().to_matrix();
    assert!((m[(0, 0)] - 0.6065).abs() < 1e-4 && (m[(0, 1)] - 0.6065).abs() < 1e-4 && (m[(1, 1)] - 1.6487).abs() < 1e-4);
}

#[test]
fn zero_system_steps_are_identity() {
    let sys = builtin_system("zero", &Params::parse("n=3").unwrap()).unwrap();
    let g = integrate(&sys, -5.0, 5.0, 1e-9).unwrap();
    for st in g.steps() {
        assert!((st.to_matrix() - DMatrix::identity(3, 3)).norm() < 1e-14);
        assert_eq!(st.log_scale(), 0.0);
    }
}

#[test]
fn full_line_grids_contain_zero() {
    let g = integrate(&rotation2d(Domain::FullLine), -3.3, 2.1, 1e-9).unwrap();
    assert!(g.node_index(0.0).is_some());
}

#[test]
fn triangular_projection_closed_form() {
    let r = rate("sqrt-exp-half");
    let g = integrate_dense(&triangular_halfline(), &r, 0.0, 400.0, 1e-10, 200).unwrap();
    let sp = estimate_splitting(&g, &r, 0.0, None).unwrap();
    assert_eq!(sp.rank, 1);
    for t in [0.0, 3.0, 20.0, 90.0] {
        let p = transport_projection(&g, &sp, t).unwrap();
        let x = (1.0 + t).sqrt();
        assert!((p[(0, 0)] - 1.0).abs() < 1e-6);
        assert!((p[(0, 1)] + (x - 1.0) * (1.0 - x).exp()).abs() < 1e-6, "t={t}: {p}");
        assert!(p[(1, 0)].abs() < 1e-6 && p[(1, 1)].abs() < 1e-6);
    }
}

#[test]
fn splitting_at_a_tie_is_reported() {
    let r = rate("exponential");
    let g = integrate_dense(&rotation2d(Domain::FullLine), &r, -20.0, 20.0, 1e-9, 100).unwrap();
    assert!(matches!(estimate_splitting(&g, &r, 0.0, Some(1)), Err(Error::ExponentTie { .. })));
}

#[test]
fn zero_system_spectrum_is_the_origin() {
    let r = rate("exponential");
    let sys = builtin_system("zero", &Params::default()).unwrap();
    let g = integrate_dense(&sys, &r, -30.0, 30.0, 1e-9, 200).unwrap();
    let sp = compute_spectrum(&g, &r, &SpectrumConfig::default()).unwrap();
    assert_eq!(sp.intervals.len(), 1);
    assert!(sp.intervals[0].midpoint().abs() < 0.05);
    assert_eq!(sp.ranks, vec![0, 2, 0]);
}

#[test]
fn dichotomy_verdicts_on_the_diagonal_system() {
    let r = rate("exponential");
    let g = integrate_dense(&constant("d", diag(-1.0, 1.0), Domain::FullLine), &r, -30.0, 30.0, 1e-9, 400).unwrap();
    let cfg = DichotomyConfig::default();
    let inside = test_dichotomy(&g, &r, 0.0, &cfg).unwrap();
    assert!(inside.verdict && inside.splitting.rank == 1);
    assert!((inside.alpha.unwrap() + 1.0).abs() < 0.02 && (inside.beta.unwrap() - 1.0).abs() < 0.02);
    assert!(inside.theta < 0.02 && inside.nu < 0.02);
    assert!(!test_dichotomy(&g, &r, 1.0, &cfg).unwrap().verdict);
    let above = test_dichotomy(&g, &r, 2.0, &cfg).unwrap();
    assert!(above.verdict && above.splitting.rank == 2 && above.beta.is_none());
}

#[test]
fn example2_unstable_exponents() {
    let r = rate("polynomial-full");
    let sys = builtin_system("example2", &Params::default()).unwrap();
    let g = integrate_dense(&sys, &r, -2000.0, 2000.0, 1e-9, 400).unwrap();
    let e2 = DVector::from_vec(vec![0.0, 1.0]);
    let est = mu_lyapunov(&g, &r, 0.0, &e2, &LyapunovConfig::default()).unwrap();
    assert!((est.lambda_plus - 2.0).abs() < 0.1 && (est.lambda_minus - 1.0).abs() < 0.1, "{est:?}");
    assert!(est.lambda_minus <= est.lambda_plus);
    let (bounded, slope) = membership_bounded_forward(&g, &r, 3.5, 0.0, &e2, 0.02).unwrap();
    assert!(bounded && slope < 0.0);
}

#[test]
fn exponent_bounds_on_the_diagonal_system() {
    let r = rate("exponential");
    let g = integrate_dense(&constant("d", diag(-1.0, 1.0), Domain::FullLine), &r, -30.0, 30.0, 1e-9, 400).unwrap();
    let sp = compute_spectrum(&g, &r, &SpectrumConfig::default()).unwrap();
    // a vector off W_1 is projected along the Whitney sum
    let v = DVector::from_vec(vec![1.0, 0.3]);
    let rep = check_spectral_bounds(&sp, &g, &r, &[(1, v)], 0.1, &LyapunovConfig::default()).unwrap();
    assert!(rep.passed() && rep.checks[0].projected);
    assert!((rep.checks[0].lambda_plus + 1.0).abs() < 0.02);
    assert!(matches!(
        check_spectral_bounds(&sp, &g, &r, &[(3, DVector::from_vec(vec![0.0, 1.0]))], 0.1, &LyapunovConfig::default()),
        Err(Error::IndexOutOfRange { .. })
    ));
}

#[test]
fn lyapunov_rejects_zero_and_short_horizons() {
    let r = rate("exponential");
    let g = integrate(&constant("d", diag(-1.0, 1.0), Domain::FullLine), -2.0, 2.0, 1e-9).unwrap();
    let cfg = LyapunovConfig::default();
    assert!(matches!(mu_lyapunov(&g, &r, 0.0, &DVector::zeros(2), &cfg), Err(Error::ZeroVector)));
    assert!(matches!(
        mu_lyapunov(&g, &r, 0.0, &DVector::from_vec(vec![1.0, 0.0]), &cfg),
        Err(Error::ShortHorizon(_))
    ));
}

#[test]
fn gram_transform_of_an_orthogonal_flow_is_the_flow() {
    // rotation commutes with every coordinate projection, so S(t) = Φ(t, 0)
    let r = rate("exponential");
    let a = DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, 1.0]);
    let g = integrate_dense(&constant("d", a, Domain::FullLine), &r, -10.0, 10.0, 1e-10, 100).unwrap();
    let sp = estimate_splitting(&g, &r, 0.0, Some(1)).unwrap();
    let gt = gram_transform(&g, &sp, &[-5.0, 0.0, 0.5, 7.0]).unwrap();
    for s in &gt.s {
        let abs = s.map(f64::abs);
        assert!((abs - DMatrix::identity(2, 2)).norm() < 1e-12, "{s}");
    }
}

#[test]
fn identity_conjugacy_has_no_violation() {
    let r = rate("exponential");
    let sys = constant("d", diag(-1.0, 1.0), Domain::FullLine);
    let g = integrate_dense(&sys, &r, -10.0, 10.0, 1e-10, 100).unwrap();
    let ident: TransformFn = Arc::new(|_| ScaledMatrix::identity(2));
    let conj = ExplicitConjugacy { s: ident, b: sys.clone() };
    let rep = verify_conjugacy(&conj, &g, &ConjugacyConfig::default()).unwrap();
    assert!(rep.max_violation < 1e-9 && rep.pass, "{rep:?}");
}

#[test]
fn example2_normal_form_is_diagonal() {
    let r = rate("polynomial-full");
    let sys = builtin_system("example2", &Params::default()).unwrap();
    let g = integrate_dense(&sys, &r, -2000.0, 2000.0, 1e-9, 400).unwrap();
    let sp = compute_spectrum(&g, &r, &SpectrumConfig::default()).unwrap();
    let cfg = ReduceConfig { samples: 4001, t_range: Some((-50.0, 50.0)), ..Default::default() };
    let st = block_diagonalize(&g, &r, &sp, &cfg).unwrap();
    assert_eq!(st.block_sizes, vec![0, 1, 1, 0]);
    // S is a signed permutation, so B reproduces the diagonal coefficient
    for (t, b) in st.times.iter().zip(&st.b).step_by(40) {
        let a = sys.coeff(*t);
        let d0 = b[(0, 0)].min(b[(1, 1)]);
        let d1 = b[(0, 0)].max(b[(1, 1)]);
        assert!((d0 - a[(0, 0)]).abs() < 1e-3 * (1.0 + a[(0, 0)].abs()), "t={t}: {b} vs {a}");
        assert!((d1 - a[(1, 1)]).abs() < 1e-3 * (1.0 + a[(1, 1)].abs()), "t={t}: {b} vs {a}");
    }
    assert!(st.offblock_residual < 1e-6);
    // B is sampled, so the conjugacy error is second order in the sample spacing
    let rep = verify_conjugacy(&st, &g, &ConjugacyConfig { pairs: 100, seed: 5, tol: 5e-3 }).unwrap();
    assert!(rep.pass, "{rep:?}");
}

#[test]
fn errors_are_typed() {
    assert!(matches!(builtin_system("lorenz", &Params::default()), Err(Error::UnknownSystem(_))));
    assert!(matches!(
        builtin_system("example2", &Params::parse("alpha=1").unwrap()),
        Err(Error::InvalidParameter { .. })
    ));
    let sys = triangular_halfline();
    assert!(integrate(&sys, -1.0, 3.0, 1e-9).is_err());
    assert!(matches!(integrate(&sys, 0.0, 3.0, 1e-2), Err(Error::InvalidTolerance(_))));
    let g = integrate(&sys, 0.0, 3.0, 1e-9).unwrap();
    assert!(matches!(g.phi(4.0, 0.0), Err(Error::OutOfRange { .. })));
    let full = rate("exponential");
    assert!(matches!(
        DichotomyAnalyzer::new(&g, &full, DichotomyConfig::default()),
        Err(Error::DomainMismatch { .. })
    ));
}
