//! Linear nonautonomous systems `x' = A(t) x`, the builtin catalogue, and γ-shifts.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::growth::{builtin_rate, Domain, GrowthRate, MonotoneCubic};
use crate::params::Params;
use crate::scaled::ScaledMatrix;

/// `t -> A(t)`.
pub type CoeffFn = Arc<dyn Fn(f64) -> DMatrix<f64> + Send + Sync>;
/// `(t, s) -> Φ(t, s)`, log-scaled.
pub type ClosedFormFn = Arc<dyn Fn(f64, f64) -> ScaledMatrix + Send + Sync>;

/// A linear system with optional exact evolution operator.
#[derive(Clone)]
pub struct LinearSystem {
    name: String,
    dimension: usize,
    domain: Domain,
    coeff: CoeffFn,
    closed_form: Option<ClosedFormFn>,
    breakpoints: Vec<f64>,
}

impl fmt::Debug for LinearSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LinearSystem")
            .field("name", &self.name)
            .field("dimension", &self.dimension)
            .field("domain", &self.domain)
            .field("closed_form", &self.closed_form.is_some())
            .finish()
    }
}

impl LinearSystem {
    pub fn new(name: &str, dimension: usize, domain: Domain, coeff: CoeffFn) -> Self {
        LinearSystem {
            name: name.to_string(),
            dimension,
            domain,
            coeff,
            closed_form: None,
            breakpoints: Vec::new(),
        }
    }

    pub fn with_closed_form(mut self, phi: ClosedFormFn) -> Self {
        self.closed_form = Some(phi);
        self
    }

    /// Times where the coefficient is only piecewise smooth; integration never steps across them.
    pub fn with_breakpoints(mut self, mut bps: Vec<f64>) -> Self {
        bps.sort_by(f64::total_cmp);
        bps.dedup();
        self.breakpoints = bps;
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    /// `A(t)`. No domain check; see [`LinearSystem::check_interval`].
    pub fn coeff(&self, t: f64) -> DMatrix<f64> {
        (self.coeff)(t)
    }

    pub fn has_closed_form(&self) -> bool {
        self.closed_form.is_some()
    }

    /// Exact `Φ(t, s)` if the system carries one.
    pub fn closed_form(&self, t: f64, s: f64) -> Option<ScaledMatrix> {
        self.closed_form.as_ref().map(|f| f(t, s))
    }

    pub fn check_interval(&self, t_min: f64, t_max: f64) -> Result<()> {
        if !(t_min < t_max) {
            return Err(Error::InvalidHorizon { t_min, t_max, reason: "need t_min < t_max".into() });
        }
        for t in [t_min, t_max] {
            if !self.domain.contains(t) {
                return Err(Error::OutOfDomain { t, domain: self.domain });
            }
        }
        Ok(())
    }

    /// Sampled continuity check: `||A(t+h) - A(t)|| <= 1e-3 (1 + ||A(t)||)` with `h = 1e-6 (1+|t|)`.
    pub fn check_continuity(&self, times: &[f64]) -> Result<()> {
        for &t in times {
            let h = 1e-6 * (1.0 + t.abs());
            let a = self.coeff(t);
            let b = self.coeff(t + h);
            if !a.iter().chain(b.iter()).all(|x| x.is_finite()) {
                return Err(Error::NonFiniteCoefficient { t });
            }
            if (&b - &a).norm() > 1e-3 * (1.0 + a.norm()) {
                return Err(Error::Numerical(format!("coefficient jumps near t = {t}")));
            }
        }
        Ok(())
    }

    /// A system interpolating sampled coefficients (`matrices[i] = A(times[i])`),
    /// linearly or with shape-preserving cubics. Constant beyond the end samples.
    pub fn from_samples(
        name: &str,
        domain: Domain,
        times: Vec<f64>,
        matrices: Vec<DMatrix<f64>>,
        cubic: bool,
    ) -> Result<Self> {
        let bad = |reason: String| Error::InvalidParameter { name: name.to_string(), reason };
        if times.len() < 2 || times.len() != matrices.len() {
            return Err(bad("need at least two samples".into()));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(bad("sample times must be strictly increasing".into()));
        }
        let n = matrices[0].nrows();
        if n == 0 || matrices.iter().any(|m| m.nrows() != n || m.ncols() != n) {
            return Err(bad("sample matrices must all be n x n".into()));
        }
        if matrices.iter().any(|m| m.iter().any(|x| !x.is_finite())) {
            return Err(bad("non-finite coefficient entry".into()));
        }
        if !domain.contains(times[0]) {
            return Err(Error::OutOfDomain { t: times[0], domain });
        }
        let breakpoints = times.clone();
        let coeff: CoeffFn = if cubic {
            let splines: Vec<MonotoneCubic> = (0..n * n)
                .map(|e| {
                    let ys = matrices.iter().map(|m| m[(e / n, e % n)]).collect();
                    MonotoneCubic::new(times.clone(), ys).expect("validated knots")
                })
                .collect();
            let (lo, hi) = (times[0], times[times.len() - 1]);
            Arc::new(move |t| {
                let t = t.clamp(lo, hi);
                DMatrix::from_fn(n, n, |r, c| splines[r * n + c].eval(t).0)
            })
        } else {
            Arc::new(move |t| linear_lookup(&times, &matrices, t))
        };
        Ok(LinearSystem::new(name, n, domain, coeff).with_breakpoints(breakpoints))
    }
}

fn linear_lookup(times: &[f64], mats: &[DMatrix<f64>], t: f64) -> DMatrix<f64> {
    let last = times.len() - 1;
    if t <= times[0] {
        return mats[0].clone();
    }
    if t >= times[last] {
        return mats[last].clone();
    }
    let i = match times.binary_search_by(|x| x.total_cmp(&t)) {
        Ok(i) => return mats[i].clone(),
        Err(i) => i - 1,
    };
    let w = (t - times[i]) / (times[i + 1] - times[i]);
    &mats[i] * (1.0 - w) + &mats[i + 1] * w
}

/// `x' = (A(t) - γ μ'(t)/μ(t) I) x`.
#[derive(Clone, Debug)]
pub struct ShiftedSystem {
    base: LinearSystem,
    rate: GrowthRate,
    gamma: f64,
}

/// Shifts `system` by `gamma` along `rate`.
pub fn shift(system: &LinearSystem, rate: &GrowthRate, gamma: f64) -> Result<ShiftedSystem> {
    if system.domain() == Domain::FullLine && rate.domain() == Domain::HalfLine {
        return Err(Error::DomainMismatch { system: system.domain(), rate: rate.domain() });
    }
    Ok(ShiftedSystem { base: system.clone(), rate: rate.clone(), gamma })
}

impl ShiftedSystem {
    pub fn base(&self) -> &LinearSystem {
        &self.base
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn rate(&self) -> &GrowthRate {
        &self.rate
    }

    /// `A(t) - γ (μ'/μ)(t) I`.
    pub fn coeff(&self, t: f64) -> DMatrix<f64> {
        shifted_coeff(&self.base, &self.rate, self.gamma, t)
    }

    /// `(μ(t)/μ(s))^{-γ} Φ(t, s)` when the base has a closed form.
    pub fn closed_form(&self, t: f64, s: f64) -> Option<ScaledMatrix> {
        let phi = self.base.closed_form(t, s)?;
        Some(phi.scale_log(-self.gamma * (self.rate.lm(t) - self.rate.lm(s))))
    }

    /// Shifting again adds the shifts.
    pub fn shift(&self, gamma: f64) -> ShiftedSystem {
        ShiftedSystem { base: self.base.clone(), rate: self.rate.clone(), gamma: self.gamma + gamma }
    }

    /// The shifted system as a plain [`LinearSystem`].
    pub fn to_system(&self) -> LinearSystem {
        let (base, rate, gamma) = (self.base.clone(), self.rate.clone(), self.gamma);
        let coeff: CoeffFn = Arc::new(move |t| shifted_coeff(&base, &rate, gamma, t));
        let mut sys = LinearSystem::new(
            &format!("{}-shifted({})", self.base.name(), self.gamma),
            self.base.dimension(),
            self.base.domain(),
            coeff,
        )
        .with_breakpoints(self.base.breakpoints().to_vec());
        if self.base.has_closed_form() {
            let me = self.clone();
            sys = sys.with_closed_form(Arc::new(move |t, s| me.closed_form(t, s).expect("present")));
        }
        sys
    }
}

fn shifted_coeff(base: &LinearSystem, rate: &GrowthRate, gamma: f64, t: f64) -> DMatrix<f64> {
    let mut a = base.coeff(t);
    let d = gamma * rate.dlm(t);
    for i in 0..a.nrows() {
        a[(i, i)] -= d;
    }
    a
}

/// Builtin system names, as listed by the CLI.
pub const BUILTIN_SYSTEMS: [&str; 7] =
    ["example1", "example2", "triangular-halfline", "constant", "rotation2d", "zero", "table"];

/// Constructs a builtin system. `table` needs file access and is handled by the caller.
///
/// * `example1`: `alpha, beta, theta, nu, rate` (rate defaults to `polynomial-full`).
/// * `example2`: example1 with the polynomial rate and `(-2, 2, 1, 1)`.
/// * `triangular-halfline`: no parameters.
/// * `constant`: `matrix` (row-major, `;`-separated), optional `domain`.
/// * `rotation2d`, `zero` (`n`, default 2): optional `domain`.
pub fn builtin_system(name: &str, params: &Params) -> Result<LinearSystem> {
    match name {
        "example1" => {
            params.expect_only(&["alpha", "beta", "theta", "nu", "rate", "domain"])?;
            let rate_name = params.get("rate").unwrap_or("polynomial-full");
            let mut rp = Params::default();
            if let Some(d) = params.get("domain") {
                rp.insert("domain", d);
            }
            let rate = builtin_rate(rate_name, &rp)?;
            example1(
                params.f64_or("alpha", -2.0)?,
                params.f64_or("beta", 2.0)?,
                params.f64_or("theta", 1.0)?,
                params.f64_or("nu", 1.0)?,
                &rate,
            )
        }
        "example2" => {
            params.expect_only(&[])?;
            let rate = builtin_rate("polynomial-full", &Params::default())?;
            let sys = example1(-2.0, 2.0, 1.0, 1.0, &rate)?;
            Ok(LinearSystem { name: "example2".into(), ..sys })
        }
        "triangular-halfline" => {
            params.expect_only(&[])?;
            Ok(triangular_halfline())
        }
        "constant" => {
            params.expect_only(&["matrix", "domain"])?;
            let entries = params.list("matrix")?.ok_or_else(|| Error::InvalidParameter {
                name: "matrix".into(),
                reason: "constant system needs matrix=a11;a12;...".into(),
            })?;
            let n = libm::round(libm::sqrt(entries.len() as f64)) as usize;
            if n == 0 || n * n != entries.len() {
                return Err(Error::InvalidParameter {
                    name: "matrix".into(),
                    reason: format!("{} entries do not form a square matrix", entries.len()),
                });
            }
            let a = DMatrix::from_row_slice(n, n, &entries);
            Ok(constant("constant", a, param_domain(params)?))
        }
        "rotation2d" => {
            params.expect_only(&["domain"])?;
            Ok(rotation2d(param_domain(params)?))
        }
        "zero" => {
            params.expect_only(&["n", "domain"])?;
            let n = params.f64_or("n", 2.0)?;
            if !(n >= 1.0 && libm::trunc(n) == n) {
                return Err(Error::InvalidParameter { name: "n".into(), reason: "positive integer".into() });
            }
            Ok(constant("zero", DMatrix::zeros(n as usize, n as usize), param_domain(params)?))
        }
        "table" => Err(Error::InvalidParameter {
            name: "table".into(),
            reason: "table systems are loaded from a file by the caller".into(),
        }),
        other => Err(Error::UnknownSystem(other.to_string())),
    }
}

fn param_domain(params: &Params) -> Result<Domain> {
    match params.get("domain") {
        None => Ok(Domain::FullLine),
        Some(d) => Domain::parse(d).ok_or_else(|| Error::InvalidParameter {
            name: "domain".into(),
            reason: format!("`{d}` is neither full-line nor half-line"),
        }),
    }
}

/// The diagonal example with running exponents oscillating between `α ∓ θ` and `β ∓ ν`.
pub fn example1(alpha: f64, beta: f64, theta: f64, nu: f64, rate: &GrowthRate) -> Result<LinearSystem> {
    let violated = |reason: &str| Err(Error::InvalidParameter { name: "example1".into(), reason: reason.into() });
    if !(alpha < 0.0) {
        return violated("alpha must be negative");
    }
    if !(beta > 0.0) {
        return violated("beta must be positive");
    }
    if !(theta >= 0.0 && nu >= 0.0) {
        return violated("theta and nu must be non-negative");
    }
    if !(alpha + theta < 0.0) {
        return violated("alpha + theta must be negative");
    }
    if !(beta - nu > 0.0) {
        return violated("beta - nu must be positive");
    }
    let domain = rate.domain();
    let sg = move |t: f64| match domain {
        Domain::HalfLine => 1.0,
        Domain::FullLine => {
            if t > 0.0 {
                1.0
            } else if t < 0.0 {
                -1.0
            } else {
                0.0
            }
        }
    };
    let r = rate.clone();
    let coeff: CoeffFn = Arc::new(move |t| {
        let (l, d) = (r.lm(t), r.dlm(t));
        let wobble = sg(t) * (d * (libm::cos(t) - 1.0) / 2.0 - l * libm::sin(t) / 2.0);
        DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![
            alpha * d + theta * wobble,
            beta * d + nu * wobble,
        ]))
    });
    let r = rate.clone();
    let phase = move |t: f64| sg(t) * r.lm(t) * (libm::cos(t) - 1.0) / 2.0;
    let r = rate.clone();
    let closed: ClosedFormFn = Arc::new(move |t, s| {
        let dl = r.lm(t) - r.lm(s);
        let dp = phase(t) - phase(s);
        let u = alpha * dl + theta * dp;
        let v = beta * dl + nu * dp;
        diag_scaled(&[u, v])
    });
    let mut sys = LinearSystem::new("example1", 2, domain, coeff).with_closed_form(closed);
    if domain == Domain::FullLine {
        sys = sys.with_breakpoints(vec![0.0]);
    }
    Ok(sys)
}

/// `exp(diag(logs))` as a scaled matrix.
fn diag_scaled(logs: &[f64]) -> ScaledMatrix {
    let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let body = DMatrix::from_fn(logs.len(), logs.len(), |r, c| {
        if r == c {
            libm::exp(logs[r] - top)
        } else {
            0.0
        }
    });
    ScaledMatrix::from_parts(body, top)
}

/// Upper-triangular half-line system with exponents ∓1/2 with respect to `e^{√(1+t)-1}`.
pub fn triangular_halfline() -> LinearSystem {
    let coeff: CoeffFn = Arc::new(|t| {
        let x = libm::sqrt(1.0 + t);
        DMatrix::from_row_slice(
            2,
            2,
            &[-0.25 / x, libm::exp(1.0 - x) / (2.0 * x), 0.0, 0.25 / x],
        )
    });
    let closed: ClosedFormFn = Arc::new(|t, s| {
        let x = libm::sqrt(1.0 + t);
        let y = libm::sqrt(1.0 + s);
        let d = x - y;
        // Entries carry at most e^{|x-y|/2}; factor that out to stay finite.
        let top = d.abs() / 2.0;
        let body = DMatrix::from_row_slice(
            2,
            2,
            &[
                libm::exp(-d / 2.0 - top),
                d * libm::exp(1.0 - (x + y) / 2.0 - top),
                0.0,
                libm::exp(d / 2.0 - top),
            ],
        );
        ScaledMatrix::from_parts(body, top)
    });
    LinearSystem::new("triangular-halfline", 2, Domain::HalfLine, coeff).with_closed_form(closed)
}

/// Constant coefficient `a`, with `Φ(t,s) = exp(a (t-s))` by scaling and squaring.
pub fn constant(name: &str, a: DMatrix<f64>, domain: Domain) -> LinearSystem {
    let n = a.nrows();
    let ac = a.clone();
    let coeff: CoeffFn = Arc::new(move |_| ac.clone());
    let closed: ClosedFormFn = Arc::new(move |t, s| expm_scaled(&a, t - s));
    LinearSystem::new(name, n, domain, coeff).with_closed_form(closed)
}

/// `exp(a tau)` in log-scaled form.
pub fn expm_scaled(a: &DMatrix<f64>, tau: f64) -> ScaledMatrix {
    let n = a.nrows();
    if tau == 0.0 {
        return ScaledMatrix::identity(n);
    }
    let size = a.norm() * tau.abs();
    let mut squarings = 0u32;
    while size / libm::pow(2.0, squarings as f64) > 0.5 {
        squarings += 1;
    }
    let x = a * (tau / libm::pow(2.0, squarings as f64));
    // ||x|| <= 1/2: the Taylor tail beyond order 20 is below 1e-25.
    let mut base = DMatrix::identity(n, n);
    let mut term = DMatrix::identity(n, n);
    for k in 1..=20 {
        term = &term * &x / k as f64;
        base += &term;
    }
    let mut out = ScaledMatrix::new(base);
    for _ in 0..squarings {
        out = out.mul(&out);
    }
    out
}

/// `A = [[0, 1], [-1, 0]]`: orthogonal evolution, spectrum `{0}`.
pub fn rotation2d(domain: Domain) -> LinearSystem {
    let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]);
    let coeff: CoeffFn = Arc::new(move |_| a.clone());
    let closed: ClosedFormFn = Arc::new(|t, s| {
        let (c, sn) = (libm::cos(t - s), libm::sin(t - s));
        ScaledMatrix::new(DMatrix::from_row_slice(2, 2, &[c, sn, -sn, c]))
    });
    LinearSystem::new("rotation2d", 2, domain, coeff).with_closed_form(closed)
}
