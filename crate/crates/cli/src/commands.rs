use std::path::Path;

use mudich_core::dichotomy::describe;
use mudich_core::lyapunov::{check_spectral_bounds, BoundsReport};
use mudich_core::reduce::ConjugacyReport;
use mudich_core::spectrum::spectrum_with;
use mudich_core::{
    block_diagonalize, integrate_dense, mu_lyapunov, verify_conjugacy, DichotomyAnalyzer, DichotomyFit, ExponentEstimate,
    PropagatorGrid, SimilarityTransform, SpectrumResult,
};
use nalgebra::DVector;
use serde_json::{json, Value};

use crate::config::{RunConfig, Setup};
use crate::error::{CliResult, EXIT_LOW_CONFIDENCE};
use crate::io::{self, matrix_json, num, opt_num, row_major, CsvOut};

/// Header shared by every JSON output.
pub fn envelope_json(command: &str, config: &RunConfig) -> Value {
    json!({
        "command": command,
        "version": env!("CARGO_PKG_VERSION"),
        "config": config,
        "seed": config.seed,
    })
}

fn merge(mut base: Value, extra: Value) -> Value {
    if let (Value::Object(b), Value::Object(e)) = (&mut base, extra) {
        b.extend(e);
    }
    base
}

fn integrate_grid(setup: &Setup) -> CliResult<PropagatorGrid> {
    let c = &setup.config;
    Ok(integrate_dense(&setup.system, &setup.rate, c.tmin, c.tmax, c.tol, c.dense)?)
}

pub fn fit_json(fit: &DichotomyFit) -> Value {
    json!({
        "gamma": fit.gamma,
        "rank": fit.splitting.rank,
        "log_k": fit.log_k,
        "alpha": fit.alpha,
        "beta": fit.beta,
        "theta": fit.theta,
        "nu": fit.nu,
        "raw_theta": fit.raw_theta,
        "raw_nu": fit.raw_nu,
        "margin": fit.margin,
        "verdict": fit.verdict,
        "max_violation": fit.max_violation,
        "alpha_half": fit.alpha_half,
        "beta_half": fit.beta_half,
        "low_confidence": fit.low_confidence,
        "diagnostic": fit.diagnostic,
    })
}

pub fn spectrum_json(sp: &SpectrumResult) -> Value {
    let intervals: Vec<Value> = sp
        .intervals
        .iter()
        .map(|iv| {
            json!({
                "lo": iv.lo,
                "hi": iv.hi,
                "lo_inf": iv.lo_inf,
                "hi_inf": iv.hi_inf,
                "confidence": if iv.low_confidence { "low" } else { "high" },
            })
        })
        .collect();
    let ch = &sp.checks;
    json!({
        "intervals": intervals,
        "anchors": sp.anchors,
        "ranks": sp.ranks,
        "fibers": sp.fibers.iter().map(matrix_json).collect::<Vec<_>>(),
        "fits": sp.fits.iter().map(|f| f.as_ref().map(fit_json)).collect::<Vec<_>>(),
        "bounded_growth": sp.bounded_growth.map(|g| json!({ "a": g.a, "eps": g.eps, "logK": g.log_k })),
        "uniform_mode": sp.uniform_mode,
        "t_ref": sp.t_ref,
        "scan_range": [sp.scan_range.0, sp.scan_range.1],
        "probes": sp.trace.len(),
        "low_confidence": sp.low_confidence(),
        "checks": {
            "passed": ch.passed(),
            "interval_count_ok": ch.interval_count_ok,
            "whitney_rcond": ch.whitney_rcond,
            "ranks_sum_to_n": ch.ranks_sum_to_n,
            "inner_fibres_nonempty": ch.inner_fibres_nonempty,
            "ranks_monotone": ch.ranks_monotone,
            "nesting_angle": ch.nesting_angle,
            "openness": ch.openness.iter().map(|(g, ok)| json!({ "gamma": g, "resolvent": ok })).collect::<Vec<_>>(),
        },
        "warnings": sp.warnings,
    })
}

fn write_scan_trace(path: &Path, sp: &SpectrumResult) -> CliResult<()> {
    let header = ["gamma", "verdict", "resolvent", "low_confidence", "rank", "alpha_plus_theta", "beta_minus_nu"];
    let mut out = CsvOut::create(path, &header.map(String::from))?;
    for p in &sp.trace {
        out.row([
            num(p.gamma),
            (p.verdict as u8).to_string(),
            (p.resolvent as u8).to_string(),
            (p.low_confidence as u8).to_string(),
            p.rank.to_string(),
            opt_num(p.alpha_plus_theta),
            opt_num(p.beta_minus_nu),
        ])?;
    }
    out.finish()
}

fn write_envelopes(path: &Path, analyzer: &DichotomyAnalyzer<'_>, sp: &SpectrumResult) -> CliResult<()> {
    let header = ["anchor", "gamma", "side", "s", "t", "log_norm", "bound"];
    let mut out = CsvOut::create(path, &header.map(String::from))?;
    for (i, fit) in sp.fits.iter().enumerate() {
        let Some(fit) = fit else { continue };
        for r in analyzer.envelope_rows(fit)? {
            out.row([
                i.to_string(),
                num(fit.gamma),
                r.side.to_string(),
                num(r.s),
                num(r.t),
                num(r.log_norm),
                num(r.bound),
            ])?;
        }
    }
    out.finish()
}

fn summarize(sp: &SpectrumResult) -> String {
    let parts: Vec<String> = sp
        .intervals
        .iter()
        .map(|iv| format!("[{:.4}, {:.4}]{}", iv.lo, iv.hi, if iv.low_confidence { "?" } else { "" }))
        .collect();
    if parts.is_empty() {
        "empty spectrum".into()
    } else {
        parts.join(" U ")
    }
}

pub fn run_spectrum(setup: &Setup) -> CliResult<i32> {
    let c = &setup.config;
    io::create_dir(&c.out)?;
    let grid = integrate_grid(setup)?;
    let cfg = c.spectrum_config();
    let analyzer = DichotomyAnalyzer::new(&grid, &setup.rate, cfg.dichotomy)?;
    let sp = spectrum_with(&analyzer, &cfg)?;
    let doc = merge(envelope_json("spectrum", c), spectrum_json(&sp));
    io::write_json(&c.out.join("spectrum.json"), &doc)?;
    write_scan_trace(&c.out.join("scan_trace.csv"), &sp)?;
    if c.spectrum.envelope {
        write_envelopes(&c.out.join("envelope.csv"), &analyzer, &sp)?;
    }
    println!("{}", summarize(&sp));
    for w in &sp.warnings {
        eprintln!("warning: {w}");
    }
    for f in sp.fits.iter().flatten().filter(|f| f.low_confidence) {
        eprintln!("low confidence: {}", describe(f));
    }
    Ok(if sp.low_confidence() { EXIT_LOW_CONFIDENCE } else { 0 })
}

fn estimate_json(k: usize, e: &ExponentEstimate, trace_file: &str) -> Value {
    json!({
        "index": k,
        "v": e.v.as_slice(),
        "s": e.s,
        "lambda_plus": e.lambda_plus,
        "lambda_minus": e.lambda_minus,
        "tail_fraction": e.tail_fraction,
        "tail_log_mu_span": e.tail_log_mu_span,
        "trace_file": trace_file,
    })
}

fn bounds_json(rep: &BoundsReport) -> Value {
    let checks: Vec<Value> = rep
        .checks
        .iter()
        .map(|b| {
            json!({
                "fiber": b.index,
                "v": b.v.as_slice(),
                "projected": b.projected,
                "lambda_minus": b.lambda_minus,
                "lambda_plus": b.lambda_plus,
                "interval": [b.interval.0, b.interval.1],
                "pass": b.pass,
            })
        })
        .collect();
    json!({ "passed": rep.passed(), "checks": checks, "warnings": rep.warnings })
}

pub fn run_lyapunov(setup: &Setup) -> CliResult<i32> {
    let c = &setup.config;
    io::create_dir(&c.out)?;
    let grid = integrate_grid(setup)?;
    let n = grid.dimension();
    let vectors: Vec<DVector<f64>> = if c.lyapunov.vectors.is_empty() {
        (0..n).map(|i| DVector::from_fn(n, |j, _| if i == j { 1.0 } else { 0.0 })).collect()
    } else {
        c.lyapunov.vectors.iter().map(|v| DVector::from_column_slice(v)).collect()
    };
    let lcfg = c.lyapunov_config(true);
    let mut estimates = Vec::new();
    for (k, v) in vectors.iter().enumerate() {
        let e = mu_lyapunov(&grid, &setup.rate, c.lyapunov.s, v, &lcfg)?;
        let name = format!("trace_{k}.csv");
        let header = ["t", "log_mu", "log_norm", "ratio"].map(String::from);
        let mut out = CsvOut::create(&c.out.join(&name), &header)?;
        for p in e.trace.iter().flatten() {
            out.row([num(p.t), num(p.log_mu), num(p.log_norm), num(p.ratio)])?;
        }
        out.finish()?;
        println!("v{k} = {:?}: lambda+ = {:.4}, lambda- = {:.4}", e.v.as_slice(), e.lambda_plus, e.lambda_minus);
        estimates.push(estimate_json(k, &e, &name));
    }

    let mut code = 0;
    let mut doc = merge(envelope_json("lyapunov", c), json!({ "exponents": estimates }));
    if c.lyapunov.bounds {
        let sp = mudich_core::compute_spectrum(&grid, &setup.rate, &c.spectrum_config())?;
        // one sample per inner fibre: the sum of its basis columns
        let samples: Vec<(usize, DVector<f64>)> = (1..=sp.intervals.len())
            .filter(|&i| sp.fibers[i].ncols() > 0)
            .map(|i| (i, sp.fibers[i].column_sum()))
            .collect();
        let rep = check_spectral_bounds(&sp, &grid, &setup.rate, &samples, c.lyapunov.bounds_tol, &c.lyapunov_config(false))?;
        for b in &rep.checks {
            println!(
                "W_{}: [{:.4}, {:.4}] within [{:.4}, {:.4}]: {}",
                b.index,
                b.lambda_minus,
                b.lambda_plus,
                b.interval.0,
                b.interval.1,
                if b.pass { "ok" } else { "VIOLATED" }
            );
        }
        if !rep.passed() || sp.low_confidence() {
            code = EXIT_LOW_CONFIDENCE;
        }
        doc = merge(doc, json!({ "spectrum": spectrum_json(&sp), "bounds": bounds_json(&rep) }));
    }
    io::write_json(&c.out.join("exponents.json"), &doc)?;
    Ok(code)
}

pub fn conjugacy_json(r: &ConjugacyReport) -> Value {
    json!({
        "pairs": r.pairs,
        "seed": r.seed,
        "tol": r.tol,
        "max_violation": r.max_violation,
        "mean_violation": r.mean_violation,
        "worst": { "s": r.worst.0, "tau": r.worst.1 },
        "pass": r.pass,
    })
}

fn transform_json(st: &SimilarityTransform) -> Value {
    json!({
        "samples": st.times.len(),
        "t_range": [st.times[0], st.times[st.times.len() - 1]],
        "t_ref": st.t_ref,
        "domain": st.domain.as_str(),
        "block_sizes": st.block_sizes,
        "eps_hat": st.eps_hat,
        "m_hat": st.m_hat,
        "offblock_residual": st.offblock_residual,
        "max_norm_s": st.s.iter().map(|s| s.norm()).fold(0.0, f64::max),
        "max_norm_s_inv": st.s_inv.iter().map(|s| s.norm()).fold(0.0, f64::max),
        "data_file": "transform.csv",
        "warnings": st.warnings,
    })
}

fn write_transform_csv(path: &Path, st: &SimilarityTransform) -> CliResult<()> {
    let n = st.s.first().map_or(0, |m| m.nrows());
    let mut header = vec!["t".to_string()];
    for prefix in ["S", "B"] {
        for r in 1..=n {
            for col in 1..=n {
                header.push(format!("{prefix}{r}{col}"));
            }
        }
    }
    let mut out = CsvOut::create(path, &header)?;
    for ((t, s), b) in st.times.iter().zip(&st.s).zip(&st.b) {
        let row = std::iter::once(*t).chain(row_major(s)).chain(row_major(b)).map(num);
        out.row(row)?;
    }
    out.finish()
}

pub fn run_reduce(setup: &Setup) -> CliResult<i32> {
    let c = &setup.config;
    io::create_dir(&c.out)?;
    let grid = integrate_grid(setup)?;
    let sp = mudich_core::compute_spectrum(&grid, &setup.rate, &c.spectrum_config())?;
    println!("spectrum: {}", summarize(&sp));
    let st = block_diagonalize(&grid, &setup.rate, &sp, &c.reduce_config())?;
    let rep = verify_conjugacy(&st, &grid, &c.conjugacy_config())?;
    write_transform_csv(&c.out.join("transform.csv"), &st)?;
    let doc = merge(
        envelope_json("reduce", c),
        json!({
            "transform": transform_json(&st),
            "conjugacy": conjugacy_json(&rep),
            "intervals": spectrum_json(&sp)["intervals"].clone(),
        }),
    );
    io::write_json(&c.out.join("transform.json"), &doc)?;
    println!(
        "blocks {:?}, eps_hat {:.4}, M_hat {:.4}, conjugacy max violation {:.3e} ({})",
        st.block_sizes,
        st.eps_hat,
        st.m_hat,
        rep.max_violation,
        if rep.pass { "ok" } else { "exceeds tol" }
    );
    for w in &st.warnings {
        eprintln!("warning: {w}");
    }
    Ok(if sp.low_confidence() || !rep.pass { EXIT_LOW_CONFIDENCE } else { 0 })
}
