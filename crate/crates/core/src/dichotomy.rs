//! Deciding whether a shifted system admits a nonuniform μ-dichotomy on the grid horizon.
//!
//! For every candidate rank the splitting does not depend on γ (shifting scales
//! all singular values alike), so the γ-independent envelope clouds are built
//! once per rank and each γ only re-tilts them.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::cell::OnceCell;

use crate::envelope::{fit_side, Cloud, SideFit, MIN_S_SAMPLES};
use crate::error::{Error, Result};
use crate::growth::GrowthRate;
use crate::propagator::PropagatorGrid;
use crate::scaled::ScaledMatrix;
use crate::splitting::{FibreTrack, Reference, SplittingCandidate, TIE_TOL};

/// Tolerances and sampling density of the dichotomy test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DichotomyConfig {
    /// Required slack in `α + θ ≤ -margin` and `β - ν ≥ margin`.
    pub margin: f64,
    /// Force `θ = ν = 0` (uniform μ-dichotomy).
    pub uniform: bool,
    /// Target number of start times `s`, log-μ uniform.
    pub s_samples: usize,
    /// Windows per sweep in the slope stage.
    pub windows: usize,
    /// Windows over the weight axis in the nonuniformity stage.
    pub weight_windows: usize,
    /// Allowed drift of `α̂`, `β̂` between the full and the half horizon.
    pub low_confidence_tol: f64,
}

impl Default for DichotomyConfig {
    fn default() -> Self {
        DichotomyConfig {
            margin: 0.02,
            uniform: false,
            s_samples: 160,
            windows: 12,
            weight_windows: 8,
            low_confidence_tol: 0.05,
        }
    }
}

impl DichotomyConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |name: &str, reason: &str| {
            Err(Error::InvalidParameter { name: name.to_string(), reason: reason.to_string() })
        };
        if !(self.margin >= 0.0 && self.margin < 1.0) {
            return bad("margin", "must lie in [0, 1)");
        }
        if self.s_samples < MIN_S_SAMPLES {
            return bad("s_samples", "must be at least 30");
        }
        if self.windows < 4 || self.weight_windows < 2 {
            return bad("windows", "need at least 4 sweep windows and 2 weight windows");
        }
        if !(self.low_confidence_tol > 0.0) {
            return bad("low_confidence_tol", "must be positive");
        }
        Ok(())
    }
}

/// Fitted dichotomy constants for one splitting at one γ.
///
/// A side whose projection vanishes (`P ≡ 0` or `P ≡ I`) carries no bound and
/// reports `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct DichotomyFit {
    pub gamma: f64,
    pub splitting: SplittingCandidate,
    pub log_k: f64,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub theta: f64,
    pub nu: f64,
    /// Unclamped nonuniformity slopes (they differ from θ, ν when negative or in uniform mode).
    pub raw_theta: f64,
    pub raw_nu: f64,
    pub margin: f64,
    pub verdict: bool,
    pub max_violation: f64,
    /// `α̂` and `β̂` refitted on the half horizon.
    pub alpha_half: Option<f64>,
    pub beta_half: Option<f64>,
    pub low_confidence: bool,
    pub diagnostic: Option<String>,
}

impl DichotomyFit {
    /// `min(-(α+θ), β-ν)` over the present sides: how far inside the resolvent the fit sits.
    pub fn score(&self) -> f64 {
        let mut s = f64::INFINITY;
        if let Some(a) = self.alpha {
            s = s.min(-(a + self.theta));
        }
        if let Some(b) = self.beta {
            s = s.min(b - self.nu);
        }
        if self.diagnostic.is_some() && !self.verdict && self.alpha.is_none() && self.beta.is_none() {
            return f64::NEG_INFINITY;
        }
        s
    }

    /// True verdict that is not low-confidence: what spectrum assembly treats as resolvent.
    pub fn confident(&self) -> bool {
        self.verdict && !self.low_confidence
    }

    fn failed(gamma: f64, splitting: SplittingCandidate, margin: f64, err: &Error) -> Self {
        DichotomyFit {
            gamma,
            splitting,
            log_k: f64::NAN,
            alpha: None,
            beta: None,
            theta: 0.0,
            nu: 0.0,
            raw_theta: 0.0,
            raw_nu: 0.0,
            margin,
            verdict: false,
            max_violation: f64::INFINITY,
            alpha_half: None,
            beta_half: None,
            low_confidence: false,
            diagnostic: Some(err.to_string()),
        }
    }
}

/// One sampled point of an envelope, for plotting.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvelopeRow {
    /// `'P'` for `t ≥ s` sweeps of `Φ P`, `'Q'` for `t ≤ s` sweeps of `Φ Q`.
    pub side: char,
    pub s: f64,
    pub t: f64,
    pub log_norm: f64,
    pub bound: f64,
}

#[derive(Debug, Clone)]
struct SideClouds {
    full: Vec<Cloud>,
    half: Vec<Cloud>,
}

#[derive(Debug, Clone)]
struct RankData {
    candidate: SplittingCandidate,
    track: Option<FibreTrack>,
    p: Option<SideClouds>,
    q: Option<SideClouds>,
}

/// Per-grid state shared by every γ probe: reference splittings, fibre tracks and envelope clouds.
pub struct DichotomyAnalyzer<'a> {
    grid: &'a PropagatorGrid,
    rate: &'a GrowthRate,
    config: DichotomyConfig,
    reference: Reference,
    lmu: Vec<f64>,
    weights: Vec<f64>,
    s_nodes: Vec<usize>,
    half_lo: usize,
    half_hi: usize,
    ranks: Vec<OnceCell<core::result::Result<RankData, Error>>>,
    warnings: Vec<String>,
}

impl<'a> DichotomyAnalyzer<'a> {
    pub fn new(grid: &'a PropagatorGrid, rate: &'a GrowthRate, config: DichotomyConfig) -> Result<Self> {
        config.validate()?;
        if grid.system().domain() != rate.domain() {
            return Err(Error::DomainMismatch { system: grid.system().domain(), rate: rate.domain() });
        }
        rate.check_interval(grid.t_min(), grid.t_max())?;
        let reference = Reference::new(grid, rate)?;
        let times = grid.times();
        let lmu: Vec<f64> = times.iter().map(|&t| rate.lm(t)).collect();
        let weights: Vec<f64> = times.iter().map(|&t| rate.sw(t)).collect();
        let mut warnings = Vec::new();
        if reference.log_mu_span() < 5.0 {
            warnings.push(Error::ShortHorizon(reference.log_mu_span()).to_string());
        }

        let (l0, l1) = (lmu[0], lmu[lmu.len() - 1]);
        let count = config.s_samples;
        let mut s_nodes: Vec<usize> = (0..count)
            .map(|i| {
                let target = l0 + (l1 - l0) * i as f64 / (count - 1) as f64;
                let j = lmu.partition_point(|&l| l < target).min(lmu.len() - 1);
                if j > 0 && (target - lmu[j - 1]) < (lmu[j] - target) { j - 1 } else { j }
            })
            .collect();
        s_nodes.dedup();

        let t_ref = reference.t_ref();
        let lo = t_ref - 0.5 * (t_ref - grid.t_min());
        let hi = t_ref + 0.5 * (grid.t_max() - t_ref);
        let half_lo = grid.ceil_index(lo);
        let half_hi = grid.floor_index(hi);
        let ranks = (0..=grid.dimension()).map(|_| OnceCell::new()).collect();
        Ok(DichotomyAnalyzer {
            grid,
            rate,
            config,
            reference,
            lmu,
            weights,
            s_nodes,
            half_lo,
            half_hi,
            ranks,
            warnings,
        })
    }

    pub fn grid(&self) -> &PropagatorGrid {
        self.grid
    }

    pub fn rate(&self) -> &GrowthRate {
        self.rate
    }

    pub fn config(&self) -> &DichotomyConfig {
        &self.config
    }

    pub fn reference(&self) -> &Reference {
        &self.reference
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    /// `log μ` at every grid node.
    pub fn log_mu_nodes(&self) -> &[f64] {
        &self.lmu
    }

    fn rank_data(&self, k: usize) -> Result<&RankData> {
        let n = self.grid.dimension();
        if k > n {
            return Err(Error::InvalidRank { rank: k, n });
        }
        self.ranks[k].get_or_init(|| self.build_rank(k)).as_ref().map_err(Clone::clone)
    }

    fn build_rank(&self, k: usize) -> Result<RankData> {
        let n = self.grid.dimension();
        let candidate = self.reference.candidate(k)?;
        if candidate.gap < TIE_TOL {
            return Err(Error::ExponentTie { rank: k, gap: candidate.gap });
        }
        let track = if k > 0 && k < n { Some(FibreTrack::new(self.grid, &candidate)?) } else { None };
        let p = (k > 0).then(|| match &track {
            Some(tr) => self.sweep_forward(|i| ScaledMatrix::new(tr.p_norm(i).clone()), |j| tr.stable_step(j)),
            None => self.sweep_forward(|_| ScaledMatrix::identity(n), |j| &self.grid.steps()[j]),
        });
        let q = (k < n).then(|| match &track {
            Some(tr) => {
                self.sweep_backward(|i| ScaledMatrix::new(tr.q_norm(i).clone()), |j| tr.unstable_step_back(j))
            }
            None => self.sweep_backward(|_| ScaledMatrix::identity(n), |j| &self.grid.inv_steps()[j]),
        });
        Ok(RankData { candidate, track, p, q })
    }

    /// Sweeps `t ≥ s`; `step(j)` advances node `j` to `j + 1`.
    fn sweep_forward<'s>(
        &'s self,
        start: impl Fn(usize) -> ScaledMatrix,
        step: impl Fn(usize) -> &'s ScaledMatrix,
    ) -> SideClouds {
        let last = self.lmu.len() - 1;
        let times = self.grid.times();
        let w = self.config.windows;
        let mut full = Vec::new();
        let mut half = Vec::new();
        for &i in self.s_nodes.iter().filter(|&&i| i < last) {
            let mut cf = Cloud::new(times[i], self.weights[i], self.lmu[last] - self.lmu[i], w);
            let mut ch = (i < self.half_hi)
                .then(|| Cloud::new(times[i], self.weights[i], self.lmu[self.half_hi] - self.lmu[i], w));
            let mut m = start(i);
            #[allow(clippy::needless_range_loop)] // j indexes lmu, times and the step maps together
            for j in i..=last {
                let (x, y) = (self.lmu[j] - self.lmu[i], m.log_norm());
                cf.add(x, y, times[j]);
                if let Some(c) = ch.as_mut().filter(|_| j <= self.half_hi) {
                    c.add(x, y, times[j]);
                }
                if j < last {
                    m = step(j).mul(&m);
                }
            }
            full.push(cf);
            half.extend(ch);
        }
        SideClouds { full, half }
    }

    /// Sweeps `t ≤ s`; `step(j)` carries node `j + 1` back to `j`.
    fn sweep_backward<'s>(
        &'s self,
        start: impl Fn(usize) -> ScaledMatrix,
        step: impl Fn(usize) -> &'s ScaledMatrix,
    ) -> SideClouds {
        let times = self.grid.times();
        let w = self.config.windows;
        let mut full = Vec::new();
        let mut half = Vec::new();
        for &i in self.s_nodes.iter().filter(|&&i| i > 0) {
            let mut cf = Cloud::new(times[i], self.weights[i], self.lmu[i] - self.lmu[0], w);
            let mut ch = (i > self.half_lo)
                .then(|| Cloud::new(times[i], self.weights[i], self.lmu[i] - self.lmu[self.half_lo], w));
            let mut m = start(i);
            for j in (0..=i).rev() {
                let (x, y) = (self.lmu[i] - self.lmu[j], m.log_norm());
                cf.add(x, y, times[j]);
                if let Some(c) = ch.as_mut().filter(|_| j >= self.half_lo) {
                    c.add(x, y, times[j]);
                }
                if j > 0 {
                    m = step(j - 1).mul(&m);
                }
            }
            full.push(cf);
            half.extend(ch);
        }
        SideClouds { full, half }
    }

    /// The rank-`k` splitting, whatever its gap.
    pub fn candidate(&self, k: usize) -> Result<SplittingCandidate> {
        self.reference.candidate(k)
    }

    /// Tracked fibres of the rank-`k` splitting (`None` for ranks 0 and n).
    pub fn track(&self, k: usize) -> Result<Option<&FibreTrack>> {
        Ok(self.rank_data(k)?.track.as_ref())
    }

    /// Fits the rank-`k` splitting at `gamma`. Errors of the rank become a false verdict.
    pub fn fit_rank(&self, gamma: f64, k: usize) -> Result<DichotomyFit> {
        let n = self.grid.dimension();
        if k > n {
            return Err(Error::InvalidRank { rank: k, n });
        }
        let data = match self.rank_data(k) {
            Ok(d) => d,
            Err(e) => return Ok(DichotomyFit::failed(gamma, self.reference.candidate(k)?, self.config.margin, &e)),
        };
        Ok(self.fit_data(gamma, data).unwrap_or_else(|e| {
            DichotomyFit::failed(gamma, data.candidate.clone(), self.config.margin, &e)
        }))
    }

    fn fit_data(&self, gamma: f64, data: &RankData) -> Result<DichotomyFit> {
        let cfg = &self.config;
        let side = |clouds: &Option<SideClouds>, tilt: f64| -> Result<Option<(SideFit, Option<SideFit>)>> {
            match clouds {
                None => Ok(None),
                Some(c) => {
                    let full = fit_side(&c.full, tilt, cfg.weight_windows, cfg.uniform)?;
                    let half = fit_side(&c.half, tilt, cfg.weight_windows, cfg.uniform).ok();
                    Ok(Some((full, half)))
                }
            }
        };
        let p = side(&data.p, gamma)?;
        let q = side(&data.q, -gamma)?;
        let margin = cfg.margin;
        let mut verdict = true;
        let mut low_confidence = false;
        let mut fit = DichotomyFit {
            gamma,
            splitting: data.candidate.clone(),
            log_k: f64::NEG_INFINITY,
            alpha: None,
            beta: None,
            theta: 0.0,
            nu: 0.0,
            raw_theta: 0.0,
            raw_nu: 0.0,
            margin,
            verdict: false,
            max_violation: f64::NEG_INFINITY,
            alpha_half: None,
            beta_half: None,
            low_confidence: false,
            diagnostic: None,
        };
        if let Some((f, h)) = p {
            let alpha = f.slope;
            verdict &= alpha + f.rho <= -margin && (!cfg.uniform || f.rho_raw <= margin);
            fit.alpha = Some(alpha);
            fit.theta = f.rho;
            fit.raw_theta = f.rho_raw;
            fit.alpha_half = h.map(|h| h.slope);
            low_confidence |= h.is_some_and(|h| (h.slope - alpha).abs() > cfg.low_confidence_tol);
            fit.log_k = fit.log_k.max(f.log_k);
            fit.max_violation = fit.max_violation.max(f.max_violation);
        }
        if let Some((f, h)) = q {
            let beta = -f.slope;
            verdict &= beta - f.rho >= margin && (!cfg.uniform || f.rho_raw <= margin);
            fit.beta = Some(beta);
            fit.nu = f.rho;
            fit.raw_nu = f.rho_raw;
            fit.beta_half = h.map(|h| -h.slope);
            low_confidence |= h.is_some_and(|h| (-h.slope - beta).abs() > cfg.low_confidence_tol);
            fit.log_k = fit.log_k.max(f.log_k);
            fit.max_violation = fit.max_violation.max(f.max_violation);
        }
        fit.verdict = verdict && fit.max_violation <= 0.0;
        fit.low_confidence = low_confidence;
        Ok(fit)
    }

    /// Tries every rank and returns the best fit: confident true verdicts first,
    /// then any true verdict, each ordered by [`DichotomyFit::score`].
    pub fn test(&self, gamma: f64) -> Result<DichotomyFit> {
        let mut best: Option<DichotomyFit> = None;
        for k in 0..=self.grid.dimension() {
            let fit = self.fit_rank(gamma, k)?;
            let key = |f: &DichotomyFit| (f.confident(), f.verdict, f.score());
            let better = match &best {
                None => true,
                Some(b) => {
                    let (a, bb) = (key(&fit), key(b));
                    (a.0, a.1) > (bb.0, bb.1) || ((a.0, a.1) == (bb.0, bb.1) && a.2 > bb.2)
                }
            };
            if better {
                best = Some(fit);
            }
        }
        Ok(best.expect("at least rank 0 is tried"))
    }

    /// Upper-envelope points of a fit with the fitted bound at each, for plotting.
    pub fn envelope_rows(&self, fit: &DichotomyFit) -> Result<Vec<EnvelopeRow>> {
        let data = self.rank_data(fit.splitting.rank)?;
        let mut rows = Vec::new();
        let mut emit = |side: char, clouds: &Option<SideClouds>, tilt: f64, slope: f64, rho: f64| {
            for c in clouds.iter().flat_map(|c| c.full.iter()) {
                for v in c.hull().vertices() {
                    rows.push(EnvelopeRow {
                        side,
                        s: c.s,
                        t: v.t,
                        log_norm: v.y - tilt * v.x,
                        bound: fit.log_k + slope * v.x + rho * c.w,
                    });
                }
            }
        };
        if let Some(a) = fit.alpha {
            emit('P', &data.p, fit.gamma, a, fit.theta);
        }
        if let Some(b) = fit.beta {
            emit('Q', &data.q, -fit.gamma, -b, fit.nu);
        }
        Ok(rows)
    }

    /// Clouds of ranks `n` (`‖Φ(t,s)‖`, `t ≥ s`) and `0` (`t ≤ s`): full, then half horizon.
    #[allow(clippy::type_complexity)]
    pub(crate) fn growth_clouds<'s>(&'s self) -> Result<(&'s [Cloud], &'s [Cloud], &'s [Cloud], &'s [Cloud])> {
        let n = self.grid.dimension();
        let up = self.rank_data(n)?.p.as_ref();
        let down = self.rank_data(0)?.q.as_ref();
        let full = |c: Option<&'s SideClouds>| c.map(|c| c.full.as_slice()).unwrap_or(&[]);
        let half = |c: Option<&'s SideClouds>| c.map(|c| c.half.as_slice()).unwrap_or(&[]);
        Ok((full(up), full(down), half(up), half(down)))
    }
}

/// Fits dichotomy constants for a given splitting at `gamma`.
pub fn fit_constants(
    grid: &PropagatorGrid,
    rate: &GrowthRate,
    gamma: f64,
    splitting: &SplittingCandidate,
    config: &DichotomyConfig,
) -> Result<DichotomyFit> {
    let analyzer = DichotomyAnalyzer::new(grid, rate, *config)?;
    let n = grid.dimension();
    let k = splitting.rank;
    let track = if k > 0 && k < n { Some(FibreTrack::new(grid, splitting)?) } else { None };
    let p = (k > 0).then(|| match &track {
        Some(tr) => analyzer.sweep_forward(|i| ScaledMatrix::new(tr.p_norm(i).clone()), |j| tr.stable_step(j)),
        None => analyzer.sweep_forward(|_| ScaledMatrix::identity(n), |j| &grid.steps()[j]),
    });
    let q = (k < n).then(|| match &track {
        Some(tr) => analyzer.sweep_backward(|i| ScaledMatrix::new(tr.q_norm(i).clone()), |j| tr.unstable_step_back(j)),
        None => analyzer.sweep_backward(|_| ScaledMatrix::identity(n), |j| &grid.inv_steps()[j]),
    });
    let data = RankData { candidate: splitting.clone(), track, p, q };
    analyzer.fit_data(gamma, &data)
}

/// Decides the dichotomy at `gamma` over all ranks; see [`DichotomyAnalyzer::test`].
pub fn test_dichotomy(
    grid: &PropagatorGrid,
    rate: &GrowthRate,
    gamma: f64,
    config: &DichotomyConfig,
) -> Result<DichotomyFit> {
    DichotomyAnalyzer::new(grid, rate, *config)?.test(gamma)
}

/// Human-readable summary of a fit, used in diagnostics.
pub fn describe(fit: &DichotomyFit) -> String {
    format!(
        "gamma={:.4} rank={} alpha={:?} theta={:.4} beta={:?} nu={:.4} verdict={}{}",
        fit.gamma,
        fit.splitting.rank,
        fit.alpha,
        fit.theta,
        fit.beta,
        fit.nu,
        fit.verdict,
        if fit.low_confidence { " (low confidence)" } else { "" }
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::growth::{builtin_rate, Domain};
    use crate::params::Params;
    use crate::propagator::integrate_dense;
    use crate::system::{constant, triangular_halfline};
    use nalgebra::DMatrix;

    #[test]
    fn diagonal_exponential_constants() {
        let a = DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, 1.0]);
        let sys = constant("d", a, Domain::FullLine);
        let rate = builtin_rate("exponential", &Params::default()).unwrap();
        let g = integrate_dense(&sys, &rate, -30.0, 30.0, 1e-9, 400).unwrap();
        let an = DichotomyAnalyzer::new(&g, &rate, DichotomyConfig::default()).unwrap();
        let fit = an.test(0.0).unwrap();
        assert!(fit.verdict, "{}", describe(&fit));
        assert_eq!(fit.splitting.rank, 1);
        assert!((fit.alpha.unwrap() + 1.0).abs() < 0.02);
        assert!((fit.beta.unwrap() - 1.0).abs() < 0.02);
        assert!(fit.theta < 0.02 && fit.nu < 0.02);
        let shifted = an.fit_rank(0.4, 1).unwrap();
        assert!((shifted.alpha.unwrap() - (fit.alpha.unwrap() - 0.4)).abs() < 0.05);
        assert!(!an.test(1.0).unwrap().verdict);
        let above = an.test(1.5).unwrap();
        assert!(above.verdict && above.splitting.rank == 2);
        let below = an.test(-1.5).unwrap();
        assert!(below.verdict && below.splitting.rank == 0);
    }

    #[test]
    fn triangular_constants() {
        let sys = triangular_halfline();
        let rate = builtin_rate("sqrt-exp-half", &Params::default()).unwrap();
        let g = integrate_dense(&sys, &rate, 0.0, 5000.0, 1e-9, 400).unwrap();
        let fit = test_dichotomy(&g, &rate, 0.0, &DichotomyConfig::default()).unwrap();
        assert!(fit.verdict, "{}", describe(&fit));
        assert!((fit.alpha.unwrap() + 0.5).abs() < 0.05, "{}", describe(&fit));
        assert!((fit.beta.unwrap() - 0.5).abs() < 0.05, "{}", describe(&fit));
        assert!(fit.theta < 0.05 && fit.nu < 0.05);
    }
}
