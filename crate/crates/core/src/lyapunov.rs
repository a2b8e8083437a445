//! μ-Lyapunov exponents `λ±(v)`: limsup and liminf of `log ||Φ(t,s)v|| / log μ(t)`.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::growth::GrowthRate;
use crate::linalg::{hcat, lu_inverse};
use crate::propagator::PropagatorGrid;
use crate::spectrum::{vector_sweep, SpectrumResult};

/// Tail and window sizes of the estimator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LyapunovConfig {
    /// Share of the `log μ` range after `s` that forms the tail.
    pub tail_fraction: f64,
    /// Window width as a share of the tail.
    pub window_fraction: f64,
    pub keep_trace: bool,
}

impl Default for LyapunovConfig {
    fn default() -> Self {
        LyapunovConfig { tail_fraction: 0.5, window_fraction: 0.1, keep_trace: false }
    }
}

/// One sampled point of `r(t) = log ||Φ(t,s)v|| / log μ(t)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TracePoint {
    pub t: f64,
    pub log_mu: f64,
    pub log_norm: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExponentEstimate {
    pub v: DVector<f64>,
    pub s: f64,
    pub lambda_plus: f64,
    pub lambda_minus: f64,
    pub tail_fraction: f64,
    /// `log μ` span covered by the tail; small spans mean slow convergence.
    pub tail_log_mu_span: f64,
    pub trace: Option<Vec<TracePoint>>,
}

/// Windowed estimate of `λ+` (mean of window maxima of `r`) and `λ-` (mean of window minima).
pub fn mu_lyapunov(
    grid: &PropagatorGrid,
    rate: &GrowthRate,
    s: f64,
    v: &DVector<f64>,
    config: &LyapunovConfig,
) -> Result<ExponentEstimate> {
    if !(config.tail_fraction > 0.0 && config.tail_fraction <= 1.0) {
        return Err(Error::InvalidParameter { name: "tail_fraction".into(), reason: "must lie in (0, 1]".into() });
    }
    if !(config.window_fraction > 0.0 && config.window_fraction <= 1.0) {
        return Err(Error::InvalidParameter { name: "window_fraction".into(), reason: "must lie in (0, 1]".into() });
    }
    let sweep = vector_sweep(grid, rate, s, v, true)?;
    let l_s = rate.log_mu(s)?;
    let l_end = sweep.last().map_or(l_s, |p| p.0);
    let tail_start = l_end - config.tail_fraction * (l_end - l_s);
    if tail_start <= 0.0 {
        // the ratio needs log μ bounded away from zero on the tail
        return Err(Error::ShortHorizon(l_end));
    }
    let times = grid.times();
    let first = grid.ceil_index(s);
    let tail: Vec<TracePoint> = sweep
        .iter()
        .enumerate()
        .filter(|(_, p)| p.0 >= tail_start)
        .map(|(k, &(l, y))| TracePoint { t: times[first + k], log_mu: l, log_norm: y, ratio: y / l })
        .collect();
    let width = config.window_fraction * (l_end - tail_start);
    let nwin = libm::ceil(1.0 / config.window_fraction - 1e-9).max(1.0) as usize;
    let mut hi = alloc::vec![f64::NEG_INFINITY; nwin];
    let mut lo = alloc::vec![f64::INFINITY; nwin];
    for p in &tail {
        let k = if width > 0.0 { (((p.log_mu - tail_start) / width) as usize).min(nwin - 1) } else { 0 };
        hi[k] = hi[k].max(p.ratio);
        lo[k] = lo[k].min(p.ratio);
    }
    let mean = |xs: &[f64]| {
        let f: Vec<f64> = xs.iter().copied().filter(|x| x.is_finite()).collect();
        f.iter().sum::<f64>() / f.len() as f64
    };
    let (lambda_plus, lambda_minus) = (mean(&hi), mean(&lo));
    if !lambda_plus.is_finite() || !lambda_minus.is_finite() {
        return Err(Error::InsufficientSamples(format!("{} tail samples", tail.len())));
    }
    Ok(ExponentEstimate {
        v: v.clone(),
        s,
        lambda_plus,
        lambda_minus,
        tail_fraction: config.tail_fraction,
        tail_log_mu_span: l_end - tail_start,
        trace: config.keep_trace.then_some(tail),
    })
}

/// Outcome for one `(i, v)` sample of [`check_spectral_bounds`].
#[derive(Debug, Clone, PartialEq)]
pub struct BoundCheck {
    pub index: usize,
    /// The vector actually used, after projection onto `W_i` if needed.
    pub v: DVector<f64>,
    pub projected: bool,
    pub lambda_minus: f64,
    pub lambda_plus: f64,
    pub interval: (f64, f64),
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundsReport {
    pub checks: Vec<BoundCheck>,
    pub warnings: Vec<String>,
}

impl BoundsReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

/// Checks `a_i - tol ≤ λ-(v) ≤ λ+(v) ≤ b_i + tol` for vectors of the spectral fibres at `t_ref`.
/// Vectors off `W_i` are replaced by their Whitney-sum component in `W_i`.
pub fn check_spectral_bounds(
    spectrum: &SpectrumResult,
    grid: &PropagatorGrid,
    rate: &GrowthRate,
    samples: &[(usize, DVector<f64>)],
    tol: f64,
    config: &LyapunovConfig,
) -> Result<BoundsReport> {
    let m = spectrum.intervals.len();
    let n = grid.dimension();
    let refs: Vec<_> = spectrum.fibers.iter().collect();
    let whitney = hcat(&refs);
    let coords = (whitney.ncols() == n).then(|| lu_inverse(&whitney)).flatten();
    let mut checks = Vec::new();
    let mut warnings = Vec::new();
    for (i, v) in samples {
        let i = *i;
        if i == 0 || i > m {
            return Err(Error::IndexOutOfRange { index: i, len: m + 1 });
        }
        if v.len() != n {
            return Err(Error::Dimension { expected: n, got: v.len() });
        }
        let fibre = &spectrum.fibers[i];
        let inside = v - fibre * (fibre.transpose() * v);
        let mut used = v.clone();
        let projected = inside.norm() > 1e-8 * v.norm();
        if projected {
            let c = coords.as_ref().ok_or(Error::Numerical("fibres do not span the state space".into()))? * v;
            let offset: usize = spectrum.fibers[..i].iter().map(|f| f.ncols()).sum();
            used = fibre * c.rows(offset, fibre.ncols());
            warnings.push(format!("sample for W_{i} was projected onto the fibre"));
        }
        let est = mu_lyapunov(grid, rate, spectrum.t_ref, &used, config)?;
        let iv = spectrum.intervals[i - 1];
        let (a, b) = (if iv.lo_inf { f64::NEG_INFINITY } else { iv.lo }, if iv.hi_inf { f64::INFINITY } else { iv.hi });
        let pass = est.lambda_minus >= a - tol && est.lambda_plus <= b + tol;
        checks.push(BoundCheck {
            index: i,
            v: used,
            projected,
            lambda_minus: est.lambda_minus,
            lambda_plus: est.lambda_plus,
            interval: (a, b),
            pass,
        });
    }
    Ok(BoundsReport { checks, warnings })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::growth::{builtin_rate, Domain};
    use crate::params::Params;
    use crate::propagator::integrate_dense;
    use crate::system::constant;
    use nalgebra::DMatrix;

    #[test]
    fn constant_diagonal_exponents() {
        let rate = builtin_rate("exponential", &Params::default()).unwrap();
        let a = DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, 1.0]);
        let g = integrate_dense(&constant("d", a, Domain::FullLine), &rate, -30.0, 30.0, 1e-9, 400).unwrap();
        let e1 = DVector::from_vec(alloc::vec![1.0, 0.0]);
        let est = mu_lyapunov(&g, &rate, 0.0, &e1, &LyapunovConfig::default()).unwrap();
        assert!((est.lambda_plus + 1.0).abs() < 0.02 && (est.lambda_minus + 1.0).abs() < 0.02, "{est:?}");
        let scaled = mu_lyapunov(&g, &rate, 0.0, &(&e1 * 7.0), &LyapunovConfig::default()).unwrap();
        assert!((scaled.lambda_plus - est.lambda_plus).abs() <= libm::log(7.0) / 15.0);
        assert!(mu_lyapunov(&g, &rate, 0.0, &DVector::zeros(2), &LyapunovConfig::default()).is_err());
    }
}
