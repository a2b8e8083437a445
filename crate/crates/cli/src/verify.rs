//! Regression suite over the worked examples, diffed against `expected.toml`.

use std::path::Path;

use mudich_core::reduce::triangular_explicit_conjugacy;
use mudich_core::system::{example1, triangular_halfline};
use mudich_core::{
    builtin_rate, builtin_system, compute_spectrum, integrate_dense, mu_lyapunov, verify_conjugacy, ConjugacyConfig,
    GrowthRate, LinearSystem, LyapunovConfig, Params, PropagatorGrid, SpectrumConfig, SpectrumResult,
};
use nalgebra::DVector;
use serde::Deserialize;
use serde_json::{json, Value};

use crate::commands::conjugacy_json;
use crate::error::{CliError, CliResult};
use crate::io;

const EXPECTED: &str = include_str!("expected.toml");

#[derive(Deserialize)]
struct Expected {
    example2: Endpoints,
    example2_exponents: Exponents,
    triangular: Points,
    example1: Example1,
    zero: Zero,
    conjugacy: Conj,
}

#[derive(Deserialize)]
struct Endpoints {
    tmin: f64,
    tmax: f64,
    endpoints: Vec<f64>,
    tol: f64,
}

#[derive(Deserialize)]
struct Exponents {
    e1: [f64; 2],
    e2: [f64; 2],
    tol: f64,
}

#[derive(Deserialize)]
struct Points {
    tmin: f64,
    tmax: f64,
    midpoints: Vec<f64>,
    max_width: f64,
    tol: f64,
}

#[derive(Deserialize)]
struct Example1 {
    alpha: f64,
    beta: f64,
    theta: f64,
    nu: f64,
    #[serde(flatten)]
    range: Endpoints,
}

#[derive(Deserialize)]
struct Zero {
    tmin: f64,
    tmax: f64,
    point: f64,
    max_width: f64,
    tol: f64,
}

#[derive(Deserialize)]
struct Conj {
    tmax: f64,
    pairs: usize,
    tol: f64,
}

struct Case {
    name: &'static str,
    pass: bool,
    record: Value,
}

fn rate(name: &str) -> CliResult<GrowthRate> {
    Ok(builtin_rate(name, &Params::default())?)
}

fn spectrum(sys: &LinearSystem, rate: &GrowthRate, t0: f64, t1: f64, tol: f64) -> CliResult<(PropagatorGrid, SpectrumResult)> {
    let grid = integrate_dense(sys, rate, t0, t1, tol, 400)?;
    let sp = compute_spectrum(&grid, rate, &SpectrumConfig::default())?;
    Ok((grid, sp))
}

fn endpoints(sp: &SpectrumResult) -> Vec<f64> {
    sp.intervals.iter().flat_map(|iv| [iv.lo, iv.hi]).collect()
}

fn within(got: &[f64], want: &[f64], tol: f64) -> bool {
    got.len() == want.len() && got.iter().zip(want).all(|(g, w)| (g - w).abs() <= tol)
}

fn endpoint_case(name: &'static str, sp: &SpectrumResult, want: &Endpoints) -> Case {
    let got = endpoints(sp);
    Case {
        name,
        pass: within(&got, &want.endpoints, want.tol),
        record: json!({ "expected": want.endpoints, "got": got, "tol": want.tol }),
    }
}

fn cases(exp: &Expected, seed: u64) -> CliResult<Vec<Case>> {
    let mut out = Vec::new();

    let poly = rate("polynomial-full")?;
    let e2 = builtin_system("example2", &Params::default())?;
    let (grid, sp) = spectrum(&e2, &poly, exp.example2.tmin, exp.example2.tmax, 1e-9)?;
    out.push(endpoint_case("example2 spectrum", &sp, &exp.example2));

    let ex = &exp.example2_exponents;
    let mut got = Vec::new();
    let mut pass = true;
    for (i, want) in [ex.e1, ex.e2].iter().enumerate() {
        let v = DVector::from_fn(2, |j, _| if i == j { 1.0 } else { 0.0 });
        let e = mu_lyapunov(&grid, &poly, 0.0, &v, &LyapunovConfig::default())?;
        pass &= within(&[e.lambda_minus, e.lambda_plus], want, ex.tol);
        got.push([e.lambda_minus, e.lambda_plus]);
    }
    out.push(Case {
        name: "example2 exponents",
        pass,
        record: json!({ "expected": [ex.e1, ex.e2], "got": got, "tol": ex.tol }),
    });

    let tri = &exp.triangular;
    let (_, sp) = spectrum(&triangular_halfline(), &rate("sqrt-exp-half")?, tri.tmin, tri.tmax, 1e-9)?;
    let mids: Vec<f64> = sp.intervals.iter().map(|iv| iv.midpoint()).collect();
    let widths: Vec<f64> = sp.intervals.iter().map(|iv| iv.width()).collect();
    out.push(Case {
        name: "triangular-halfline spectrum",
        pass: within(&mids, &tri.midpoints, tri.tol) && widths.iter().all(|&w| w <= tri.max_width),
        record: json!({ "expected": tri.midpoints, "got": mids, "widths": widths, "tol": tri.tol }),
    });

    let e1 = &exp.example1;
    let exp_rate = rate("exponential")?;
    let sys = example1(e1.alpha, e1.beta, e1.theta, e1.nu, &exp_rate)?;
    let (_, sp) = spectrum(&sys, &exp_rate, e1.range.tmin, e1.range.tmax, 1e-9)?;
    out.push(endpoint_case("example1 spectrum", &sp, &e1.range));

    let z = &exp.zero;
    let (_, sp) = spectrum(&builtin_system("zero", &Params::default())?, &exp_rate, z.tmin, z.tmax, 1e-9)?;
    let mids: Vec<f64> = sp.intervals.iter().map(|iv| iv.midpoint()).collect();
    out.push(Case {
        name: "zero system spectrum",
        pass: within(&mids, &[z.point], z.tol) && sp.intervals.iter().all(|iv| iv.width() <= z.max_width),
        record: json!({ "expected": [z.point], "got": mids, "tol": z.tol }),
    });

    let cj = &exp.conjugacy;
    let grid = integrate_dense(&triangular_halfline(), &rate("sqrt-exp-half")?, 0.0, cj.tmax, 1e-11, 400)?;
    let cfg = ConjugacyConfig { pairs: cj.pairs, seed, tol: cj.tol };
    let rep = verify_conjugacy(&triangular_explicit_conjugacy(), &grid, &cfg)?;
    out.push(Case { name: "triangular-halfline conjugacy", pass: rep.pass, record: conjugacy_json(&rep) });
    Ok(out)
}

pub fn run_verify(out_dir: &Path, seed: u64) -> CliResult<i32> {
    let exp: Expected =
        toml::from_str(EXPECTED).map_err(|e| CliError::Failed(format!("embedded reference values: {e}")))?;
    io::create_dir(out_dir)?;
    let cases = cases(&exp, seed)?;
    let mut records = Vec::new();
    for c in &cases {
        println!("{} {}: {}", if c.pass { "PASS" } else { "FAIL" }, c.name, c.record);
        let mut r = c.record.clone();
        r["name"] = json!(c.name);
        r["pass"] = json!(c.pass);
        records.push(r);
    }
    let failed = cases.iter().filter(|c| !c.pass).count();
    let doc = json!({
        "command": "verify",
        "version": env!("CARGO_PKG_VERSION"),
        "seed": seed,
        "config": { "seed": seed, "out": out_dir, "reference": EXPECTED },
        "cases": records,
        "passed": failed == 0,
    });
    io::write_json(&out_dir.join("verify.json"), &doc)?;
    println!("{} of {} cases passed", cases.len() - failed, cases.len());
    Ok(if failed == 0 { 0 } else { 1 })
}
