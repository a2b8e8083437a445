//! Dichotomy spectrum as disjoint closed intervals, resolvent anchors between
//! them, and the spectral fibres `W_i` at the reference time.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::dichotomy::{DichotomyAnalyzer, DichotomyConfig, DichotomyFit};
use crate::envelope::{fit_side, Cloud};
use crate::error::{Error, Result};
use crate::growth::GrowthRate;
use crate::linalg::{containment_angle, hcat, ls_fit, nullspace, rcond_2};
use crate::propagator::PropagatorGrid;

/// Fibres at principal angles below this count as intersecting.
pub const INTERSECT_TOL: f64 = 1e-6;

/// Fitted `log ||Φ(t,s)|| ≤ log K + a·|log μ(t) - log μ(s)| + eps·w(s)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundedGrowthFit {
    pub a: f64,
    pub eps: f64,
    pub log_k: f64,
}

/// Spectrum search settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectrumConfig {
    pub dichotomy: DichotomyConfig,
    /// Bisection stops at brackets this wide.
    pub tol_gamma: f64,
    /// Tail-slope threshold of the membership tests.
    pub tol_slope: f64,
    /// Spacing of the uniform part of the initial γ scan.
    pub scan_step: f64,
    /// Overrides the range derived from the growth bound.
    pub scan_range: Option<(f64, f64)>,
}

impl Default for SpectrumConfig {
    fn default() -> Self {
        SpectrumConfig {
            dichotomy: DichotomyConfig::default(),
            tol_gamma: 1e-2,
            tol_slope: 0.02,
            scan_step: 0.25,
            scan_range: None,
        }
    }
}

impl SpectrumConfig {
    pub fn validate(&self) -> Result<()> {
        self.dichotomy.validate()?;
        let bad = |name: &str, reason: &str| {
            Err(Error::InvalidParameter { name: name.to_string(), reason: reason.to_string() })
        };
        if !(self.tol_gamma > 0.0 && self.tol_gamma <= 1.0) {
            return bad("tol_gamma", "must lie in (0, 1]");
        }
        if !(self.tol_slope > 0.0 && self.tol_slope < 1.0) {
            return bad("tol_slope", "must lie in (0, 1)");
        }
        if !(self.scan_step > self.tol_gamma) {
            return bad("scan_step", "must exceed tol_gamma");
        }
        if let Some((lo, hi)) = self.scan_range {
            if !(lo < hi && lo.is_finite() && hi.is_finite()) {
                return bad("scan_range", "need finite lo < hi");
            }
        }
        Ok(())
    }
}

/// One closed spectral interval; an infinite end means the scan-range edge itself was spectral.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralInterval {
    pub lo: f64,
    pub hi: f64,
    pub lo_inf: bool,
    pub hi_inf: bool,
    /// Some probe next to an endpoint had a true but low-confidence verdict.
    pub low_confidence: bool,
}

impl SpectralInterval {
    pub fn width(&self) -> f64 {
        if self.lo_inf || self.hi_inf {
            f64::INFINITY
        } else {
            self.hi - self.lo
        }
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    pub fn contains(&self, x: f64) -> bool {
        (self.lo_inf || x >= self.lo) && (self.hi_inf || x <= self.hi)
    }
}

/// A γ probe of the scan, for plotting.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanPoint {
    pub gamma: f64,
    /// Confident true verdict.
    pub resolvent: bool,
    pub verdict: bool,
    pub low_confidence: bool,
    pub rank: usize,
    pub alpha_plus_theta: Option<f64>,
    pub beta_minus_nu: Option<f64>,
}

/// Structural properties of the result, checked on samples.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumChecks {
    pub interval_count_ok: bool,
    /// Reciprocal 2-norm condition of the concatenated fibre bases.
    pub whitney_rcond: f64,
    pub ranks_sum_to_n: bool,
    pub inner_fibres_nonempty: bool,
    pub ranks_monotone: bool,
    /// Worst angle by which a stable fibre sticks out of the next anchor's stable fibre.
    pub nesting_angle: f64,
    /// `(anchor, ±tol_gamma/2 probes both resolvent)`.
    pub openness: Vec<(f64, bool)>,
}

impl SpectrumChecks {
    pub fn passed(&self) -> bool {
        self.interval_count_ok
            && self.whitney_rcond > 1e-8
            && self.ranks_sum_to_n
            && self.inner_fibres_nonempty
            && self.ranks_monotone
            && self.nesting_angle <= 1e-6
            && self.openness.iter().all(|o| o.1)
    }
}

/// Intervals, anchors, fibres and everything needed to audit them.
#[derive(Debug, Clone)]
pub struct SpectrumResult {
    pub intervals: Vec<SpectralInterval>,
    /// `γ_0..γ_m`; `None` where the neighbouring interval is unbounded.
    pub anchors: Vec<Option<f64>>,
    /// Bases of `W_0..W_{m+1}` at `t_ref`.
    pub fibers: Vec<DMatrix<f64>>,
    pub ranks: Vec<usize>,
    pub fits: Vec<Option<DichotomyFit>>,
    pub uniform_mode: bool,
    pub t_ref: f64,
    pub scan_range: (f64, f64),
    pub bounded_growth: Option<BoundedGrowthFit>,
    pub trace: Vec<ScanPoint>,
    pub checks: SpectrumChecks,
    pub warnings: Vec<String>,
}

impl SpectrumResult {
    pub fn low_confidence(&self) -> bool {
        self.intervals.iter().any(|i| i.low_confidence) || self.fits.iter().flatten().any(|f| f.low_confidence)
    }

    /// Index `i` of the spectral fibre `W_i` whose interval contains `gamma`.
    pub fn interval_of(&self, gamma: f64) -> Option<usize> {
        self.intervals.iter().position(|iv| iv.contains(gamma)).map(|i| i + 1)
    }
}

fn growth_from_clouds(up: &[Cloud], down: &[Cloud], up_half: &[Cloud], down_half: &[Cloud], windows: usize) -> Result<BoundedGrowthFit> {
    let mut a: f64 = 0.0;
    let mut eps: f64 = 0.0;
    let mut drift: f64 = 0.0;
    for (full, half) in [(up, up_half), (down, down_half)] {
        if full.is_empty() {
            continue;
        }
        let f = fit_side(full, 0.0, windows, false)?;
        a = a.max(f.slope);
        eps = eps.max(f.rho);
        if let Ok(h) = fit_side(half, 0.0, windows, false) {
            drift = drift.max(f.slope - h.slope);
        }
    }
    if drift > 0.25 * a.max(1.0) {
        return Err(Error::UnboundedGrowth { drift });
    }
    let log_k = up
        .iter()
        .chain(down)
        .map(|c| c.excess(0.0, a) - eps * c.w)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(BoundedGrowthFit { a, eps, log_k })
}

/// Growth bound from an existing analyzer (reuses its rank-0 and rank-n clouds).
pub fn bounded_growth_from(analyzer: &DichotomyAnalyzer<'_>) -> Result<BoundedGrowthFit> {
    let (up, down, up_half, down_half) = analyzer.growth_clouds()?;
    growth_from_clouds(up, down, up_half, down_half, analyzer.config().weight_windows)
}

/// Fits the nonuniform bounded-growth constants of the unshifted system.
pub fn bounded_growth_estimate(grid: &PropagatorGrid, rate: &GrowthRate) -> Result<BoundedGrowthFit> {
    bounded_growth_from(&DichotomyAnalyzer::new(grid, rate, DichotomyConfig::default())?)
}

pub(crate) fn vector_sweep(
    grid: &PropagatorGrid,
    rate: &GrowthRate,
    s: f64,
    xi: &DVector<f64>,
    forward: bool,
) -> Result<Vec<(f64, f64)>> {
    if xi.len() != grid.dimension() {
        return Err(Error::Dimension { expected: grid.dimension(), got: xi.len() });
    }
    if xi.norm() == 0.0 {
        return Err(Error::ZeroVector);
    }
    let times = grid.times();
    let end = if forward { grid.t_max() } else { grid.t_min() };
    let span = (rate.log_mu(end)? - rate.log_mu(s)?).abs();
    if span < 5.0 {
        return Err(Error::ShortHorizon(span));
    }
    // first node strictly beyond s in the sweep direction
    let (mut v, mut log) = grid.phi(if forward { times[grid.ceil_index(s)] } else { times[grid.floor_index(s)] }, s)?.apply(xi);
    let mut out = Vec::new();
    if forward {
        let start = grid.ceil_index(s);
        for j in start..times.len() {
            out.push((rate.lm(times[j]), log));
            if j + 1 < times.len() {
                let (w, l) = grid.steps()[j].apply(&v);
                v = w;
                log += l;
            }
        }
    } else {
        let start = grid.floor_index(s);
        for j in (0..=start).rev() {
            out.push((rate.lm(times[j]), log));
            if j > 0 {
                let (w, l) = grid.inv_steps()[j - 1].apply(&v);
                v = w;
                log += l;
            }
        }
    }
    Ok(out)
}

fn tail_slope(points: &[(f64, f64)], gamma: f64, l_s: f64) -> Result<f64> {
    let far = points.last().map(|p| p.0).unwrap_or(l_s);
    let mid = 0.5 * (l_s + far);
    let tail: Vec<(f64, f64)> = points
        .iter()
        .filter(|p| (p.0 - mid) * (far - l_s) >= 0.0)
        .map(|&(l, y)| ((l - l_s).abs(), y - gamma * l))
        .collect();
    ls_fit(&tail).map(|f| f.0).ok_or(Error::DegenerateEnvelope)
}

/// Whether `ξ` at `s` is bounded forward under the weight `μ(t)^{-γ}`.
/// Returns the verdict and the tail slope of `log ||Φ(t,s)ξ|| - γ log μ(t)` against `log μ(t)`.
pub fn membership_bounded_forward(
    grid: &PropagatorGrid,
    rate: &GrowthRate,
    gamma: f64,
    s: f64,
    xi: &DVector<f64>,
    tol_slope: f64,
) -> Result<(bool, f64)> {
    let pts = vector_sweep(grid, rate, s, xi, true)?;
    let slope = tail_slope(&pts, gamma, rate.log_mu(s)?)?;
    Ok((slope <= tol_slope, slope))
}

/// Backward twin of [`membership_bounded_forward`]: the slope is taken against
/// `log μ(s) - log μ(t)` for `t ≤ s`, so bounded again means `slope ≤ tol_slope`.
pub fn membership_bounded_backward(
    grid: &PropagatorGrid,
    rate: &GrowthRate,
    gamma: f64,
    s: f64,
    xi: &DVector<f64>,
    tol_slope: f64,
) -> Result<(bool, f64)> {
    let pts = vector_sweep(grid, rate, s, xi, false)?;
    let slope = tail_slope(&pts, gamma, rate.log_mu(s)?)?;
    Ok((slope <= tol_slope, slope))
}

/// Orthonormal basis of `span(a) ∩ span(b)` via the nullspace of the stacked
/// complement projectors.
pub fn intersect_fibers(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    if a.ncols() == 0 || b.ncols() == 0 {
        return DMatrix::zeros(n, 0);
    }
    let id = DMatrix::<f64>::identity(n, n);
    let pa = &id - a * a.transpose();
    let pb = &id - b * b.transpose();
    let mut stacked = DMatrix::zeros(2 * n, n);
    stacked.rows_mut(0, n).copy_from(&pa);
    stacked.rows_mut(n, n).copy_from(&pb);
    nullspace(&stacked, INTERSECT_TOL)
}

struct Probe {
    gamma: f64,
    fit: DichotomyFit,
}

impl Probe {
    fn ok(&self) -> bool {
        self.fit.confident()
    }
}

/// Computes the spectrum over the scan range.
pub fn compute_spectrum(grid: &PropagatorGrid, rate: &GrowthRate, config: &SpectrumConfig) -> Result<SpectrumResult> {
    config.validate()?;
    let analyzer = DichotomyAnalyzer::new(grid, rate, config.dichotomy)?;
    spectrum_with(&analyzer, config)
}

/// [`compute_spectrum`] on a prepared analyzer.
pub fn spectrum_with(analyzer: &DichotomyAnalyzer<'_>, config: &SpectrumConfig) -> Result<SpectrumResult> {
    config.validate()?;
    let n = analyzer.grid().dimension();
    let mut warnings: Vec<String> = analyzer.warnings().to_vec();
    let growth = bounded_growth_from(analyzer);
    let (lo, hi) = match (config.scan_range, &growth) {
        (Some(r), _) => r,
        (None, Ok(g)) => (-g.a - g.eps - 1.0, g.a + g.eps + 1.0),
        (None, Err(e)) => return Err(e.clone()),
    };
    if let Err(e) = &growth {
        warnings.push(alloc::format!("growth bound unavailable, using the given scan range: {e}"));
    }
    let growth = growth.ok();

    let reference = analyzer.reference();
    let mut seeds: Vec<f64> = Vec::new();
    let mut exps: Vec<f64> = reference.forward_exponents().to_vec();
    exps.extend(reference.backward_exponents().unwrap_or(&[]).iter().copied());
    exps.sort_by(f64::total_cmp);
    seeds.extend(exps.iter().copied());
    seeds.extend(exps.windows(2).map(|w| 0.5 * (w[0] + w[1])));
    let steps = libm::ceil((hi - lo) / config.scan_step) as usize;
    seeds.extend((0..=steps).map(|i| lo + (hi - lo) * i as f64 / steps as f64));
    seeds.retain(|g| *g >= lo && *g <= hi);
    seeds.sort_by(f64::total_cmp);
    seeds.dedup_by(|a, b| (*a - *b).abs() < 1e-9);

    let probe = |g: f64| -> Result<Probe> { Ok(Probe { gamma: g, fit: analyzer.test(g)? }) };
    let mut probes: Vec<Probe> = seeds.iter().map(|&g| probe(g)).collect::<Result<_>>()?;

    // refine every verdict change and every rank change between resolvent probes
    let tol = config.tol_gamma;
    let mut i = 0;
    while i + 1 < probes.len() {
        let (a, b) = (&probes[i], &probes[i + 1]);
        let change = a.ok() != b.ok() || (a.ok() && b.ok() && a.fit.splitting.rank != b.fit.splitting.rank);
        if change && b.gamma - a.gamma > tol {
            let mid = probe(0.5 * (a.gamma + b.gamma))?;
            probes.insert(i + 1, mid);
        } else {
            i += 1;
        }
    }

    let resolvent: Vec<&Probe> = probes.iter().filter(|p| p.ok()).collect();
    if let Some(w) = resolvent.windows(2).find(|w| w[1].fit.splitting.rank < w[0].fit.splitting.rank) {
        return Err(Error::NonMonotone(alloc::vec![w[0].gamma, w[1].gamma]));
    }

    // maximal runs of non-resolvent probes, plus rank jumps between adjacent resolvent probes
    let mut intervals = Vec::new();
    let mut gaps: Vec<(usize, usize)> = Vec::new(); // resolvent probe index ranges between intervals
    let mut run_start: Option<usize> = None;
    let mut gap_start: Option<usize> = if probes[0].ok() { Some(0) } else { None };
    let lowconf = |p: &Probe| p.fit.verdict && p.fit.low_confidence;
    for k in 0..probes.len() {
        let p = &probes[k];
        if !p.ok() {
            if run_start.is_none() {
                run_start = Some(k);
                if let Some(gs) = gap_start.take() {
                    gaps.push((gs, k - 1));
                }
            }
            continue;
        }
        if let Some(rs) = run_start.take() {
            let lo_inf = rs == 0;
            let lo_v = if lo_inf { f64::NEG_INFINITY } else { 0.5 * (probes[rs - 1].gamma + probes[rs].gamma) };
            let hi_v = 0.5 * (probes[k - 1].gamma + p.gamma);
            let low_confidence = (rs..k).any(|j| lowconf(&probes[j]));
            intervals.push(SpectralInterval { lo: lo_v, hi: hi_v, lo_inf, hi_inf: false, low_confidence });
            gap_start = Some(k);
        } else if k > 0 && probes[k - 1].ok() && probes[k - 1].fit.splitting.rank != p.fit.splitting.rank {
            let g = 0.5 * (probes[k - 1].gamma + p.gamma);
            if let Some(gs) = gap_start.take() {
                gaps.push((gs, k - 1));
            }
            intervals.push(SpectralInterval { lo: g, hi: g, lo_inf: false, hi_inf: false, low_confidence: false });
            gap_start = Some(k);
        }
    }
    if let Some(rs) = run_start {
        let lo_inf = rs == 0;
        let lo_v = if lo_inf { f64::NEG_INFINITY } else { 0.5 * (probes[rs - 1].gamma + probes[rs].gamma) };
        let low_confidence = (rs..probes.len()).any(|j| lowconf(&probes[j]));
        intervals.push(SpectralInterval { lo: lo_v, hi: f64::INFINITY, lo_inf, hi_inf: true, low_confidence });
    } else if let Some(gs) = gap_start {
        gaps.push((gs, probes.len() - 1));
    }
    for iv in intervals.iter_mut() {
        if !iv.lo_inf && !iv.hi_inf && iv.hi - iv.lo <= 2.0 * tol {
            let m = iv.midpoint();
            iv.lo = m;
            iv.hi = m;
        }
    }
    if intervals.is_empty() {
        warnings.push("no spectral point found in the scan range".to_string());
    }

    // anchors: one per resolvent gap, None when the flanking interval is unbounded
    let m = intervals.len();
    let mut anchors: Vec<Option<f64>> = Vec::with_capacity(m + 1);
    let mut fits: Vec<Option<DichotomyFit>> = Vec::with_capacity(m + 1);
    let mut gap_iter = gaps.iter();
    for slot in 0..=m {
        let unbounded = (slot == 0 && intervals.first().is_some_and(|iv| iv.lo_inf))
            || (slot == m && m > 0 && intervals.last().is_some_and(|iv| iv.hi_inf));
        if unbounded {
            anchors.push(None);
            fits.push(None);
            continue;
        }
        let &(a, b) = gap_iter.next().ok_or(Error::MissingAnchor)?;
        let left = if slot == 0 { probes[a].gamma } else { intervals[slot - 1].hi };
        let right = if slot == m { probes[b].gamma } else { intervals[slot].lo };
        let mut fit = analyzer.test(0.5 * (left + right))?;
        if !fit.confident() {
            let mid = 0.5 * (left + right);
            let best = (a..=b).min_by(|&x, &y| {
                (probes[x].gamma - mid).abs().total_cmp(&(probes[y].gamma - mid).abs())
            });
            fit = probes[best.ok_or(Error::MissingAnchor)?].fit.clone();
        }
        anchors.push(Some(fit.gamma));
        fits.push(Some(fit));
    }

    // fibres W_0..W_{m+1}
    let full = DMatrix::<f64>::identity(n, n);
    let empty = DMatrix::<f64>::zeros(n, 0);
    let stable = |i: usize| fits[i].as_ref().map_or(if i == 0 { empty.clone() } else { full.clone() }, |f| f.splitting.stable_basis.clone());
    let unstable = |i: usize| fits[i].as_ref().map_or(if i == 0 { full.clone() } else { empty.clone() }, |f| f.splitting.unstable_basis.clone());
    let mut fibers = Vec::with_capacity(m + 2);
    fibers.push(stable(0));
    for i in 1..=m {
        fibers.push(intersect_fibers(&stable(i), &unstable(i - 1)));
    }
    fibers.push(unstable(m));
    let ranks: Vec<usize> = fibers.iter().map(|f| f.ncols()).collect();

    // structural checks
    let refs: Vec<&DMatrix<f64>> = fibers.iter().collect();
    let whitney = hcat(&refs);
    let ranks_sum_to_n = ranks.iter().sum::<usize>() == n;
    let whitney_rcond = if whitney.ncols() == n { rcond_2(&whitney) } else { 0.0 };
    let anchor_ranks: Vec<usize> = fits.iter().flatten().map(|f| f.splitting.rank).collect();
    let ranks_monotone = anchor_ranks.windows(2).all(|w| w[0] <= w[1]);
    let nesting_angle = fits
        .iter()
        .flatten()
        .collect::<Vec<_>>()
        .windows(2)
        .map(|w| containment_angle(&w[1].splitting.stable_basis, &w[0].splitting.stable_basis))
        .fold(0.0, f64::max);
    let mut openness = Vec::new();
    for g in anchors.iter().flatten() {
        let ok = analyzer.test(g - 0.5 * tol)?.confident() && analyzer.test(g + 0.5 * tol)?.confident();
        openness.push((*g, ok));
    }
    let checks = SpectrumChecks {
        interval_count_ok: m <= n,
        whitney_rcond,
        ranks_sum_to_n,
        inner_fibres_nonempty: ranks[1..=m].iter().all(|&r| r >= 1),
        ranks_monotone,
        nesting_angle,
        openness,
    };

    let trace = probes
        .iter()
        .map(|p| ScanPoint {
            gamma: p.gamma,
            resolvent: p.ok(),
            verdict: p.fit.verdict,
            low_confidence: p.fit.low_confidence,
            rank: p.fit.splitting.rank,
            alpha_plus_theta: p.fit.alpha.map(|a| a + p.fit.theta),
            beta_minus_nu: p.fit.beta.map(|b| b - p.fit.nu),
        })
        .collect();

    Ok(SpectrumResult {
        intervals,
        anchors,
        fibers,
        ranks,
        fits,
        uniform_mode: config.dichotomy.uniform,
        t_ref: reference.t_ref(),
        scan_range: (lo, hi),
        bounded_growth: growth,
        trace,
        checks,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::growth::{builtin_rate, Domain};
    use crate::params::Params;
    use crate::propagator::integrate_dense;
    use crate::system::{constant, rotation2d};

    fn exp_rate() -> GrowthRate {
        builtin_rate("exponential", &Params::default()).unwrap()
    }

    #[test]
    fn intersections() {
        let e = |i: usize| DMatrix::from_fn(3, 1, |r, _| if r == i { 1.0 } else { 0.0 });
        let a = hcat(&[&e(0), &e(1)]);
        let b = hcat(&[&e(1), &e(2)]);
        let c = intersect_fibers(&a, &b);
        assert_eq!(c.ncols(), 1);
        assert!((c[(1, 0)].abs() - 1.0).abs() < 1e-12);
        assert_eq!(intersect_fibers(&a, &a).ncols(), 2);
        assert_eq!(intersect_fibers(&e(0), &e(2)).ncols(), 0);
    }

    #[test]
    fn diagonal_spectrum_and_membership() {
        let a = DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, 1.0]);
        let rate = exp_rate();
        let g = integrate_dense(&constant("d", a, Domain::FullLine), &rate, -30.0, 30.0, 1e-9, 400).unwrap();
        let bg = bounded_growth_estimate(&g, &rate).unwrap();
        assert!((bg.a - 1.0).abs() < 0.05 && bg.eps < 0.05, "{bg:?}");
        let sp = compute_spectrum(&g, &rate, &SpectrumConfig::default()).unwrap();
        assert_eq!(sp.intervals.len(), 2, "{:?}", sp.intervals);
        assert!((sp.intervals[0].midpoint() + 1.0).abs() < 0.05);
        assert!((sp.intervals[1].midpoint() - 1.0).abs() < 0.05);
        assert_eq!(sp.ranks, alloc::vec![0, 1, 1, 0]);
        assert!(sp.checks.passed(), "{:?}", sp.checks);
        let e1 = DVector::from_vec(alloc::vec![1.0, 0.0]);
        let e2 = DVector::from_vec(alloc::vec![0.0, 1.0]);
        let (b1, s1) = membership_bounded_forward(&g, &rate, 0.0, 0.0, &e1, 0.02).unwrap();
        assert!(b1 && (s1 + 1.0).abs() < 0.02);
        let (b2, s2) = membership_bounded_forward(&g, &rate, 0.0, 0.0, &e2, 0.02).unwrap();
        assert!(!b2 && (s2 - 1.0).abs() < 0.02);
        let (b3, _) = membership_bounded_backward(&g, &rate, 0.0, 0.0, &e2, 0.02).unwrap();
        assert!(b3);
    }

    #[test]
    fn rotation_is_a_point() {
        let rate = exp_rate();
        let g = integrate_dense(&rotation2d(Domain::FullLine), &rate, -30.0, 30.0, 1e-9, 400).unwrap();
        let sp = compute_spectrum(&g, &rate, &SpectrumConfig::default()).unwrap();
        assert_eq!(sp.intervals.len(), 1, "{:?}", sp.intervals);
        assert!(sp.intervals[0].midpoint().abs() < 0.05 && sp.intervals[0].width() <= 0.05);
        assert_eq!(sp.ranks, alloc::vec![0, 2, 0]);
    }
}
