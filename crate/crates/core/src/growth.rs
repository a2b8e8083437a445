//! Growth rates μ, always handled through `log μ` and `μ'/μ`.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::fmt;

use crate::error::{Error, Result};
use crate::params::Params;

/// Time domain of a rate or system.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Domain {
    FullLine,
    HalfLine,
}

impl Domain {
    pub fn contains(self, t: f64) -> bool {
        match self {
            Domain::FullLine => t.is_finite(),
            Domain::HalfLine => t.is_finite() && t >= 0.0,
        }
    }

    pub fn parse(s: &str) -> Option<Domain> {
        match s {
            "full-line" | "full" => Some(Domain::FullLine),
            "half-line" | "half" => Some(Domain::HalfLine),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Domain::FullLine => "full-line",
            Domain::HalfLine => "half-line",
        }
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Shape-preserving C¹ cubic interpolant (Fritsch–Carlson slopes).
/// Extrapolates linearly with the end secants.
#[derive(Debug, Clone, PartialEq)]
pub struct MonotoneCubic {
    xs: Vec<f64>,
    ys: Vec<f64>,
    ds: Vec<f64>,
}

impl MonotoneCubic {
    /// Needs at least two strictly increasing abscissae.
    pub fn new(xs: Vec<f64>, ys: Vec<f64>) -> Option<Self> {
        let n = xs.len();
        if n < 2 || ys.len() != n || xs.windows(2).any(|w| !(w[1] > w[0])) {
            return None;
        }
        let sec: Vec<f64> = (0..n - 1).map(|i| (ys[i + 1] - ys[i]) / (xs[i + 1] - xs[i])).collect();
        let mut ds = Vec::with_capacity(n);
        ds.push(sec[0]);
        for i in 1..n - 1 {
            let d = if sec[i - 1] * sec[i] <= 0.0 { 0.0 } else { (sec[i - 1] + sec[i]) / 2.0 };
            ds.push(d);
        }
        ds.push(sec[n - 2]);
        for i in 0..n - 1 {
            if sec[i] == 0.0 {
                ds[i] = 0.0;
                ds[i + 1] = 0.0;
                continue;
            }
            let a = ds[i] / sec[i];
            let b = ds[i + 1] / sec[i];
            let r = a * a + b * b;
            if r > 9.0 {
                let tau = 3.0 / libm::sqrt(r);
                ds[i] = tau * a * sec[i];
                ds[i + 1] = tau * b * sec[i];
            }
        }
        Some(MonotoneCubic { xs, ys, ds })
    }

    pub fn knots(&self) -> &[f64] {
        &self.xs
    }

    fn locate(&self, x: f64) -> usize {
        let n = self.xs.len();
        match self.xs.binary_search_by(|k| k.total_cmp(&x)) {
            Ok(i) => i.min(n - 2),
            Err(i) => i.saturating_sub(1).min(n - 2),
        }
    }

    /// Value and derivative at `x`.
    pub fn eval(&self, x: f64) -> (f64, f64) {
        let n = self.xs.len();
        if x <= self.xs[0] {
            let s = (self.ys[1] - self.ys[0]) / (self.xs[1] - self.xs[0]);
            return (self.ys[0] + s * (x - self.xs[0]), s);
        }
        if x >= self.xs[n - 1] {
            let s = (self.ys[n - 1] - self.ys[n - 2]) / (self.xs[n - 1] - self.xs[n - 2]);
            return (self.ys[n - 1] + s * (x - self.xs[n - 1]), s);
        }
        let i = self.locate(x);
        let h = self.xs[i + 1] - self.xs[i];
        let u = (x - self.xs[i]) / h;
        let (y0, y1, d0, d1) = (self.ys[i], self.ys[i + 1], self.ds[i], self.ds[i + 1]);
        let h00 = (1.0 + 2.0 * u) * (1.0 - u) * (1.0 - u);
        let h10 = u * (1.0 - u) * (1.0 - u);
        let h01 = u * u * (3.0 - 2.0 * u);
        let h11 = u * u * (u - 1.0);
        let val = h00 * y0 + h10 * h * d0 + h01 * y1 + h11 * h * d1;
        let dh00 = 6.0 * u * (u - 1.0);
        let dh10 = (1.0 - u) * (1.0 - 3.0 * u);
        let dh01 = 6.0 * u * (1.0 - u);
        let dh11 = u * (3.0 * u - 2.0);
        let der = (dh00 * y0 + dh01 * y1) / h + dh10 * d0 + dh11 * d1;
        (val, der)
    }
}

/// User-supplied scalar function of time.
pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Clone)]
enum RateKind {
    Exponential,
    PolynomialFull,
    PolynomialHalf,
    SqrtExpHalf,
    Table(MonotoneCubic),
    Custom { log_mu: ScalarFn, dlog_mu: ScalarFn },
}

/// A strictly increasing growth rate with μ(0)=1.
#[derive(Clone)]
pub struct GrowthRate {
    name: String,
    domain: Domain,
    kind: RateKind,
}

impl fmt::Debug for GrowthRate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GrowthRate").field("name", &self.name).field("domain", &self.domain).finish()
    }
}

/// Names accepted by [`builtin_rate`].
pub const BUILTIN_RATES: [&str; 5] =
    ["exponential", "polynomial-full", "polynomial-half", "sqrt-exp-half", "custom"];

/// Constructs a builtin rate. `exponential` takes an optional `domain` parameter;
/// `custom` must be built with [`GrowthRate::custom`] or [`GrowthRate::from_table`].
pub fn builtin_rate(name: &str, params: &Params) -> Result<GrowthRate> {
    let (domain, kind) = match name {
        "exponential" => {
            let domain = match params.get("domain") {
                None => Domain::FullLine,
                Some(d) => Domain::parse(d).ok_or_else(|| Error::InvalidParameter {
                    name: "domain".into(),
                    reason: format!("`{d}` is neither full-line nor half-line"),
                })?,
            };
            (domain, RateKind::Exponential)
        }
        "polynomial-full" => (Domain::FullLine, RateKind::PolynomialFull),
        "polynomial-half" => (Domain::HalfLine, RateKind::PolynomialHalf),
        "sqrt-exp-half" => (Domain::HalfLine, RateKind::SqrtExpHalf),
        "custom" => {
            return Err(Error::InvalidRate {
                name: "custom".into(),
                reason: "custom rates need log_mu/dlog_mu callables or a table".into(),
            })
        }
        other => return Err(Error::UnknownRate(other.to_string())),
    };
    Ok(GrowthRate { name: name.to_string(), domain, kind })
}

impl GrowthRate {
    /// A rate from callables, validated on a probe grid over `[-50, 50]` (or `[0, 50]`).
    pub fn custom(name: &str, domain: Domain, log_mu: ScalarFn, dlog_mu: ScalarFn) -> Result<Self> {
        let rate = GrowthRate {
            name: name.to_string(),
            domain,
            kind: RateKind::Custom { log_mu, dlog_mu },
        };
        let lo = if domain == Domain::FullLine { -50.0 } else { 0.0 };
        let probes: Vec<f64> = (0..=400).map(|i| lo + (50.0 - lo) * i as f64 / 400.0).collect();
        rate.validate(&probes)?;
        Ok(rate)
    }

    /// A rate from samples of `(t, log μ(t))`, interpolated monotone-cubically.
    pub fn from_table(name: &str, domain: Domain, ts: Vec<f64>, log_mus: Vec<f64>) -> Result<Self> {
        let bad = |reason: String| Error::InvalidRate { name: name.to_string(), reason };
        if ts.len() < 2 || ts.len() != log_mus.len() {
            return Err(bad("table needs at least two rows".into()));
        }
        if ts.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(bad("table times must be strictly increasing".into()));
        }
        if let Some(i) = (1..ts.len()).find(|&i| !(log_mus[i] > log_mus[i - 1])) {
            return Err(bad(format!("log_mu is not strictly increasing at t = {}", ts[i])));
        }
        if !domain.contains(ts[0]) {
            return Err(bad(format!("first row t = {} lies outside the {domain} domain", ts[0])));
        }
        let cubic = MonotoneCubic::new(ts, log_mus).ok_or_else(|| bad("degenerate table".into()))?;
        let mids: Vec<f64> = cubic.knots().windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
        let rate = GrowthRate { name: name.to_string(), domain, kind: RateKind::Table(cubic) };
        let mut probes = mids;
        if domain.contains(0.0) {
            probes.push(0.0);
        }
        probes.sort_by(f64::total_cmp);
        rate.validate(&probes)?;
        Ok(rate)
    }

    fn validate(&self, probes: &[f64]) -> Result<()> {
        let bad = |reason: String| Error::InvalidRate { name: self.name.clone(), reason };
        let l0 = self.lm(0.0);
        if l0.abs() > 1e-9 {
            return Err(bad(format!("log_mu(0) = {l0} (μ(0) must be 1)")));
        }
        let vals: Vec<f64> = probes.iter().map(|&t| self.lm(t)).collect();
        if let Some(i) = (1..vals.len()).find(|&i| !(vals[i] > vals[i - 1])) {
            return Err(bad(format!("log_mu is not strictly increasing near t = {}", probes[i])));
        }
        for &t in probes {
            let d = self.dlm(t);
            if !(d > 0.0) || !d.is_finite() {
                return Err(bad(format!("dlog_mu({t}) = {d} is not positive")));
            }
            let h = 1e-4 * (1.0 + t.abs());
            if self.domain == Domain::HalfLine && t - h < 0.0 {
                continue;
            }
            let fd = (self.lm(t + h) - self.lm(t - h)) / (2.0 * h);
            if (fd - d).abs() > 1e-5 * d.abs().max(1e-300) {
                return Err(bad(format!("dlog_mu({t}) = {d} disagrees with finite difference {fd}")));
            }
        }
        Ok(())
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    fn check(&self, t: f64) -> Result<()> {
        if self.domain.contains(t) {
            Ok(())
        } else {
            Err(Error::OutOfDomain { t, domain: self.domain })
        }
    }

    /// `log μ(t)`.
    pub fn log_mu(&self, t: f64) -> Result<f64> {
        self.check(t)?;
        Ok(self.lm(t))
    }

    /// `μ'(t)/μ(t)`.
    pub fn dlog_mu(&self, t: f64) -> Result<f64> {
        self.check(t)?;
        Ok(self.dlm(t))
    }

    /// Unchecked `log μ`; callers validate the horizon once.
    pub(crate) fn lm(&self, t: f64) -> f64 {
        match &self.kind {
            RateKind::Exponential => t,
            RateKind::PolynomialFull => {
                if t >= 0.0 {
                    libm::log1p(t)
                } else {
                    -libm::log1p(-t)
                }
            }
            RateKind::PolynomialHalf => libm::log1p(t),
            RateKind::SqrtExpHalf => libm::sqrt(1.0 + t) - 1.0,
            RateKind::Table(c) => c.eval(t).0,
            RateKind::Custom { log_mu, .. } => log_mu(t),
        }
    }

    /// Unchecked `μ'/μ`.
    pub(crate) fn dlm(&self, t: f64) -> f64 {
        match &self.kind {
            RateKind::Exponential => 1.0,
            RateKind::PolynomialFull => 1.0 / (1.0 + t.abs()),
            RateKind::PolynomialHalf => 1.0 / (1.0 + t),
            RateKind::SqrtExpHalf => 0.5 / libm::sqrt(1.0 + t),
            RateKind::Table(c) => c.eval(t).1,
            RateKind::Custom { dlog_mu, .. } => dlog_mu(t),
        }
    }

    /// `sign(s) log μ(s)` on the full line, `log μ(s)` on the half line.
    pub(crate) fn sw(&self, s: f64) -> f64 {
        let l = self.lm(s);
        match self.domain {
            Domain::FullLine => l.abs(),
            Domain::HalfLine => l,
        }
    }

    /// The `t` in `[lo, hi]` with `log μ(t) = target`, by bisection.
    pub fn time_at_log_mu(&self, target: f64, lo: f64, hi: f64) -> f64 {
        let (mut lo, mut hi) = (lo, hi);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.lm(mid) < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    /// `count ≥ 2` times from `t_min` to `t_max`, equally spaced in `log μ`.
    pub fn log_mu_uniform(&self, t_min: f64, t_max: f64, count: usize) -> Result<Vec<f64>> {
        self.check_interval(t_min, t_max)?;
        let count = count.max(2);
        let (l0, l1) = (self.lm(t_min), self.lm(t_max));
        let mut out: Vec<f64> = (0..count)
            .map(|i| match i {
                0 => t_min,
                i if i == count - 1 => t_max,
                i => {
                    let t = self.time_at_log_mu(l0 + (l1 - l0) * i as f64 / (count - 1) as f64, t_min, t_max);
                    if t.abs() < 1e-12 { 0.0 } else { t }
                }
            })
            .collect();
        out.dedup_by(|a, b| *a <= *b);
        Ok(out)
    }

    /// Errors unless the whole interval lies in the domain.
    pub fn check_interval(&self, t_min: f64, t_max: f64) -> Result<()> {
        self.check(t_min)?;
        self.check(t_max)
    }
}

/// `log (μ(t)/μ(s))^γ`, never exponentiated.
pub fn mu_pow_ratio(rate: &GrowthRate, t: f64, s: f64, gamma: f64) -> Result<f64> {
    Ok(gamma * (rate.log_mu(t)? - rate.log_mu(s)?))
}

/// The nonuniformity weight `sign(s) log μ(s)` (full line) or `log μ(s)` (half line).
pub fn sign_weight(rate: &GrowthRate, s: f64) -> Result<f64> {
    rate.check(s)?;
    Ok(rate.sw(s))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn rate(name: &str) -> GrowthRate {
        builtin_rate(name, &Params::default()).unwrap()
    }

    #[test]
    fn reference_values() {
        assert!((rate("polynomial-full").log_mu(-1.0).unwrap() - libm::log(0.5)).abs() < 1e-15);
        assert_eq!(rate("exponential").log_mu(0.0).unwrap(), 0.0);
        assert!((rate("sqrt-exp-half").log_mu(3.0).unwrap() - 1.0).abs() < 1e-15);
        let p = rate("polynomial-full");
        assert!((mu_pow_ratio(&p, 1.0, 0.0, 2.0).unwrap() - 2.0 * libm::log(2.0)).abs() < 1e-15);
        assert_eq!(mu_pow_ratio(&rate("exponential"), 2.0, 1.0, 3.0).unwrap(), 3.0);
        assert!((sign_weight(&p, -1.0).unwrap() - libm::log(2.0)).abs() < 1e-15);
        assert!((sign_weight(&rate("sqrt-exp-half"), 3.0).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn half_line_rejects_negative_times() {
        let r = rate("sqrt-exp-half");
        assert!(matches!(r.log_mu(-0.5), Err(Error::OutOfDomain { .. })));
        assert!(sign_weight(&r, -1.0).is_err());
    }

    #[test]
    fn exponential_on_half_line() {
        let mut p = Params::default();
        p.insert("domain", "half-line");
        let r = builtin_rate("exponential", &p).unwrap();
        assert_eq!(r.domain(), Domain::HalfLine);
        assert!(builtin_rate("hyperbolic", &Params::default()).is_err());
    }

    #[test]
    fn table_rate_interpolates_and_validates() {
        let ts: Vec<f64> = (0..=20).map(|i| i as f64).collect();
        let ls: Vec<f64> = ts.iter().map(|t| libm::log1p(*t)).collect();
        let r = GrowthRate::from_table("tab", Domain::HalfLine, ts, ls).unwrap();
        assert!((r.log_mu(4.5).unwrap() - libm::log1p(4.5)).abs() < 5e-3);
        assert!(r.dlog_mu(30.0).unwrap() > 0.0);
        let bad = GrowthRate::from_table("bad", Domain::HalfLine, vec![0.0, 1.0, 2.0], vec![0.0, 1.0, 0.5]);
        assert!(bad.is_err());
    }

    #[test]
    fn custom_rate_is_checked() {
        let ok = GrowthRate::custom(
            "cubic",
            Domain::FullLine,
            Arc::new(|t| t + t * t * t / 3.0),
            Arc::new(|t| (1.0 + t * t) / (t + t * t * t / 3.0).max(1e-300)),
        );
        assert!(ok.is_err(), "dlog_mu above is not the derivative of log_mu");
        let ok = GrowthRate::custom("lin", Domain::FullLine, Arc::new(|t| 2.0 * t), Arc::new(|_| 2.0));
        assert!(ok.is_ok());
    }
}
