//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fails.

use std::f64::consts::SQRT_2;
use std::time::Instant;

use mudich_core::lyapunov::{check_spectral_bounds, mu_lyapunov, LyapunovConfig};
use mudich_core::propagator::integrate_span;
use mudich_core::reduce::{block_spectra, gram_transform, triangular_explicit_conjugacy};
use mudich_core::spectrum::{SpectrumChecks, SpectrumResult};
use mudich_core::system::{constant, example1, rotation2d, triangular_halfline, LinearSystem};
use mudich_core::*;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn rate(name: &str) -> GrowthRate {
    builtin_rate(name, &Params::default()).expect("builtin rate")
}

fn spectrum_of(sys: &LinearSystem, rate: &GrowthRate, t0: f64, t1: f64) -> Result<(PropagatorGrid, SpectrumResult)> {
    let grid = integrate_dense(sys, rate, t0, t1, 1e-9, 400)?;
    let sp = compute_spectrum(&grid, rate, &SpectrumConfig::default())?;
    Ok((grid, sp))
}

fn endpoints(sp: &SpectrumResult) -> Vec<f64> {
    sp.intervals.iter().flat_map(|iv| [iv.lo, iv.hi]).collect()
}

fn close_all(got: &[f64], want: &[f64], tol: f64) -> bool {
    got.len() == want.len() && got.iter().zip(want).all(|(g, w)| (g - w).abs() <= tol)
}

fn fmt_list(xs: &[f64]) -> String {
    let parts: Vec<String> = xs.iter().map(|x| format!("{x:.3}")).collect();
    format!("[{}]", parts.join(", "))
}

/// Every structural check of one spectrum run, kept for criterion 10.
struct Audit {
    label: String,
    n: usize,
    count: usize,
    checks: SpectrumChecks,
}

fn audit(label: &str, n: usize, sp: &SpectrumResult, log: &mut Vec<Audit>) {
    log.push(Audit { label: label.to_string(), n, count: sp.intervals.len(), checks: sp.checks.clone() });
}

fn c1_example2(cache: &mut Option<(PropagatorGrid, SpectrumResult)>, log: &mut Vec<Audit>) -> Result<Outcome> {
    let start = Instant::now();
    let r = rate("polynomial-full");
    let sys = builtin_system("example2", &Params::default())?;
    let (grid, sp) = spectrum_of(&sys, &r, -2000.0, 2000.0)?;
    let secs = start.elapsed().as_secs_f64();
    let got = endpoints(&sp);
    let pass = close_all(&got, &[-3.0, -1.0, 1.0, 3.0], 0.15) && secs <= 120.0;
    audit("example2", 2, &sp, log);
    *cache = Some((grid, sp));
    Ok(outcome(pass, format!("endpoints {} in {secs:.1}s", fmt_list(&got))))
}

fn c2_triangular(log: &mut Vec<Audit>) -> Result<Outcome> {
    let start = Instant::now();
    let (_, sp) = spectrum_of(&triangular_halfline(), &rate("sqrt-exp-half"), 0.0, 5000.0)?;
    let secs = start.elapsed().as_secs_f64();
    let ivs = &sp.intervals;
    let pass = ivs.len() == 2
        && ivs.iter().all(|iv| iv.width() <= 0.1)
        && (ivs[0].midpoint() + 0.5).abs() <= 0.05
        && (ivs[1].midpoint() - 0.5).abs() <= 0.05
        && secs <= 60.0;
    audit("triangular", 2, &sp, log);
    Ok(outcome(pass, format!("endpoints {} in {secs:.1}s", fmt_list(&endpoints(&sp)))))
}

fn c3_example1(log: &mut Vec<Audit>) -> Result<Outcome> {
    let r = rate("exponential");
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut pass = true;
    let mut lines = Vec::new();
    for draw in 0..5 {
        let alpha = rng.random_range(-3.0..-0.5);
        let beta = rng.random_range(0.5..3.0);
        let theta = rng.random_range(0.0..-alpha / 2.0);
        let nu = rng.random_range(0.0..beta / 2.0);
        let sys = example1(alpha, beta, theta, nu, &r)?;
        let (_, sp) = spectrum_of(&sys, &r, -100.0, 100.0)?;
        audit(&format!("example1 draw {draw}"), 2, &sp, log);
        let got = endpoints(&sp);
        let stated = [alpha - theta, alpha + theta, beta - nu, beta + nu];
        let wide = theta.max(nu);
        let corrected = [alpha - wide, alpha + theta, beta - nu, beta + wide];
        let ok = close_all(&got, &stated, 0.15);
        pass &= ok;
        lines.push(format!(
            "draw {draw} (a={alpha:.3} b={beta:.3} th={theta:.3} nu={nu:.3}): got {} want {} {}; corrected oracle {} {}",
            fmt_list(&got),
            fmt_list(&stated),
            if ok { "ok" } else { "off" },
            fmt_list(&corrected),
            if close_all(&got, &corrected, 0.15) { "ok" } else { "off" },
        ));
    }
    Ok(outcome(pass, format!("\n    {}", lines.join("\n    "))))
}

fn smooth_random_system(seed: u64) -> LinearSystem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mat = || DMatrix::from_fn(3, 3, |_, _| rng.random_range(-0.5..0.5));
    let (a0, a1, a2) = (mat(), mat(), mat());
    LinearSystem::new(
        "random3",
        3,
        Domain::FullLine,
        std::sync::Arc::new(move |t: f64| &a0 + &a1 * t.sin() + &a2 * (0.7 * t).cos()),
    )
}

fn c4_scaling_identity() -> Result<Outcome> {
    let r = rate("exponential");
    let sys = smooth_random_system(4);
    let grid = integrate(&sys, -10.0, 10.0, 1e-11)?;
    let mut rng = ChaCha8Rng::seed_from_u64(40);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let gamma = rng.random_range(-2.0..2.0);
        let t = rng.random_range(-10.0..10.0);
        let s = rng.random_range(-10.0..10.0);
        let via_grid = phi_shifted(&grid, &r, gamma, t, s)?;
        let shifted = shift(&sys, &r, gamma)?.to_system();
        let direct = integrate_span(&shifted, s, t, 1e-12)?;
        worst = worst.max(via_grid.relative_distance(&direct));
    }
    Ok(outcome(worst <= 1e-6, format!("max relative error {worst:.2e} over 100 triples")))
}

fn projection_laws(label: &str, sys: &LinearSystem, r: &GrowthRate, t0: f64, t1: f64, seed: u64) -> Result<(f64, f64, String)> {
    let grid = integrate_dense(sys, r, t0, t1, 1e-10, 400)?;
    let split = estimate_splitting(&grid, r, 0.0, Some(1))?;
    let track = FibreTrack::new(&grid, &split)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut idem, mut comm): (f64, f64) = (0.0, 0.0);
    for _ in 0..200 {
        let t = rng.random_range(t0..t1);
        let s = rng.random_range(t0..t1);
        let pt = track.projection(&grid, t)?;
        let ps = track.projection(&grid, s)?;
        idem = idem.max((&pt * &pt - &pt).norm());
        let phi = grid.phi(t, s)?;
        let b = phi.body();
        comm = comm.max((&pt * b - b * &ps).norm() / b.norm());
    }
    Ok((idem, comm, format!("{label}: idempotence {idem:.1e}, commutation {comm:.1e}")))
}

fn c5_projections() -> Result<Outcome> {
    let cases = [
        projection_laws(
            "example1",
            &example1(-2.0, 2.0, 0.5, 0.8, &rate("exponential"))?,
            &rate("exponential"),
            -40.0,
            40.0,
            51,
        )?,
        projection_laws(
            "example2",
            &builtin_system("example2", &Params::default())?,
            &rate("polynomial-full"),
            -200.0,
            200.0,
            52,
        )?,
        projection_laws("triangular", &triangular_halfline(), &rate("sqrt-exp-half"), 0.0, 2000.0, 53)?,
    ];
    let pass = cases.iter().all(|c| c.0 <= 1e-8 && c.1 <= 1e-8);
    let text: Vec<String> = cases.into_iter().map(|c| c.2).collect();
    Ok(outcome(pass, text.join("; ")))
}

fn c6_gram() -> Result<Outcome> {
    let r = rate("sqrt-exp-half");
    let grid = integrate_dense(&triangular_halfline(), &r, 0.0, 5000.0, 1e-10, 400)?;
    let split = estimate_splitting(&grid, &r, 0.0, Some(1))?;
    let times = r.log_mu_uniform(0.0, 5000.0, 2001)?;
    let g = gram_transform(&grid, &split, &times)?;
    let pass = g.max_norm <= SQRT_2 + 1e-8 && g.max_projection_error <= 1e-8;
    Ok(outcome(
        pass,
        format!("max ||S|| {:.12}, max ||S^-1 P S - P0|| {:.1e} over {} samples", g.max_norm, g.max_projection_error, times.len()),
    ))
}

fn c7_normal_form() -> Result<Outcome> {
    let r = rate("sqrt-exp-half");
    let (grid, sp) = spectrum_of(&triangular_halfline(), &r, 0.0, 5000.0)?;
    let near = block_diagonalize(&grid, &r, &sp, &ReduceConfig { t_range: Some((0.0, 50.0)), ..ReduceConfig::default() })?;
    let mut worst = [0.0f64; 2];
    for (t, b) in near.times.iter().zip(&near.b) {
        let q = 0.25 / (1.0 + t).sqrt();
        worst[0] = worst[0].max((b[(0, 0)] + q).abs() / q);
        worst[1] = worst[1].max((b[(1, 1)] - q).abs() / q);
    }
    let far = block_diagonalize(&grid, &r, &sp, &ReduceConfig::default())?;
    let spectra = block_spectra(&far, &r, &SpectrumConfig::default(), 1e-9, 400)?;
    let mids: Vec<Vec<f64>> = spectra.iter().flatten().map(|ivs| ivs.iter().map(|iv| iv.midpoint()).collect()).collect();
    let blocks_ok = mids.len() == 2
        && mids[0].len() == 1
        && mids[1].len() == 1
        && (mids[0][0] + 0.5).abs() <= 0.15
        && (mids[1][0] - 0.5).abs() <= 0.15;
    let pass = worst[0] <= 1e-3 && worst[1] <= 1e-3 && blocks_ok;
    Ok(outcome(
        pass,
        format!(
            "max relative deviation of B on [0,50]: block 0 {:.2e}, block 1 {:.2e}; block spectra midpoints {:?}",
            worst[0], worst[1], mids
        ),
    ))
}

fn c8_conjugacy() -> Result<Outcome> {
    let grid = integrate_dense(&triangular_halfline(), &rate("sqrt-exp-half"), 0.0, 5000.0, 1e-11, 400)?;
    let rep = verify_conjugacy(&triangular_explicit_conjugacy(), &grid, &ConjugacyConfig { pairs: 200, seed: 8, tol: 1e-6 })?;
    Ok(outcome(rep.max_violation <= 1e-6, format!("max violation {:.2e} over {} triples", rep.max_violation, rep.pairs)))
}

fn c9_lyapunov(cache: &Option<(PropagatorGrid, SpectrumResult)>) -> Result<Outcome> {
    let (grid, sp) = cache.as_ref().ok_or(Error::MissingAnchor)?;
    let r = rate("polynomial-full");
    let e1 = DVector::from_vec(vec![1.0, 0.0]);
    let e2 = DVector::from_vec(vec![0.0, 1.0]);
    let cfg = LyapunovConfig::default();
    let rep = check_spectral_bounds(sp, grid, &r, &[(1, e1.clone()), (2, e2)], 0.1, &cfg)?;
    let mut pass = rep.checks.len() == 2;
    let boxes = [(-3.1, -0.9), (0.9, 3.1)];
    let mut text = Vec::new();
    for (c, (lo, hi)) in rep.checks.iter().zip(boxes) {
        let inside = c.lambda_minus >= lo && c.lambda_plus <= hi;
        pass &= inside && c.pass;
        text.push(format!("W_{}: [{:.3}, {:.3}]", c.index, c.lambda_minus, c.lambda_plus));
    }
    let est = mu_lyapunov(grid, &r, 0.0, &e1, &cfg)?;
    pass &= (est.lambda_plus + 2.0).abs() <= 0.1 && (est.lambda_minus + 3.0).abs() <= 0.1;
    text.push(format!("e1: lambda+ {:.3}, lambda- {:.3}", est.lambda_plus, est.lambda_minus));
    Ok(outcome(pass, text.join("; ")))
}

fn c10_structure(log: &[Audit]) -> Outcome {
    let mut pass = !log.is_empty();
    let mut bad = Vec::new();
    let mut worst_rcond = f64::INFINITY;
    for a in log {
        let c = &a.checks;
        let ok = a.count <= a.n
            && c.whitney_rcond > 1e-8
            && c.ranks_monotone
            && c.openness.iter().all(|o| o.1);
        worst_rcond = worst_rcond.min(c.whitney_rcond);
        if !ok {
            bad.push(a.label.clone());
        }
        pass &= ok;
    }
    let detail = if bad.is_empty() {
        format!("{} runs, smallest Whitney rcond {worst_rcond:.3}", log.len())
    } else {
        format!("violations in {}", bad.join(", "))
    };
    outcome(pass, detail)
}

fn c11_degenerate(log: &mut Vec<Audit>) -> Result<Outcome> {
    let r = rate("exponential");
    let (_, rot) = spectrum_of(&rotation2d(Domain::FullLine), &r, -100.0, 100.0)?;
    audit("rotation2d", 2, &rot, log);
    let rot_ok = rot.intervals.len() == 1 && rot.intervals[0].midpoint().abs() <= 0.05 && rot.intervals[0].width() <= 0.05;
    let diag = DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, 1.0]);
    let (_, d) = spectrum_of(&constant("diag", diag, Domain::FullLine), &r, -30.0, 30.0)?;
    audit("diag(-1,1)", 2, &d, log);
    let d_ok = d.intervals.len() == 2
        && d.intervals.iter().zip([-1.0, 1.0]).all(|(iv, c)| (iv.lo - c).abs() <= 0.05 && (iv.hi - c).abs() <= 0.05);
    Ok(outcome(
        rot_ok && d_ok,
        format!("rotation2d {}, diag(-1,1) {}", fmt_list(&endpoints(&rot)), fmt_list(&endpoints(&d))),
    ))
}

fn main() {
    let mut log = Vec::new();
    let mut cache = None;
    let mut results: Vec<(usize, &str, Result<Outcome>)> = vec![
        (1, "example2 spectrum", c1_example2(&mut cache, &mut log)),
        (2, "triangular spectrum", c2_triangular(&mut log)),
        (3, "example1 random draws", c3_example1(&mut log)),
        (4, "scaling identity", c4_scaling_identity()),
        (5, "projection laws", c5_projections()),
        (6, "Gram transform bounds", c6_gram()),
        (7, "normal form", c7_normal_form()),
        (8, "explicit conjugacy", c8_conjugacy()),
        (9, "Lyapunov containment", c9_lyapunov(&cache)),
        (11, "degenerate oracles", c11_degenerate(&mut log)),
    ];
    results.insert(9, (10, "structural invariants", Ok(c10_structure(&log))));

    let mut failed = 0;
    for (id, name, res) in &results {
        let (pass, detail) = match res {
            Ok(o) => (o.pass, o.detail.clone()),
            Err(e) => (false, format!("error: {e}")),
        };
        if !pass {
            failed += 1;
        }
        println!("{} {id:>2} {name}: {detail}", if pass { "PASS" } else { "FAIL" });
    }
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
