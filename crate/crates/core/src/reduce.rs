//! Kinematic similarity: Gram-normalized changes of variables `x = S(t) y` that
//! turn `x' = A(t) x` into a block-diagonal `y' = B(t) y`, one block per spectral fibre.

use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dichotomy::DichotomyFit;
use crate::error::{Error, Result};
use crate::growth::GrowthRate;
use crate::linalg::{hcat, lu_inverse, polar, spectral_norm};
use crate::propagator::{integrate, integrate_dense, PropagatorGrid};
use crate::scaled::ScaledMatrix;
use crate::spectrum::{compute_spectrum, SpectralInterval, SpectrumConfig, SpectrumResult};
use crate::splitting::{FibreTrack, SplittingCandidate};
use crate::system::LinearSystem;

/// Gram matrices conditioned worse than this are rejected.
pub const MAX_GRAM_COND: f64 = 1e14;

/// Transport of a fixed subspace at `t_ref` along the grid, through an invariant family.
enum Carrier<'a> {
    Stable(&'a FibreTrack),
    Unstable(&'a FibreTrack),
    Full,
}

impl Carrier<'_> {
    fn basis(&self, j: usize, n: usize) -> DMatrix<f64> {
        match self {
            Carrier::Stable(t) => t.stable(j).clone(),
            Carrier::Unstable(t) => t.unstable(j).clone(),
            Carrier::Full => DMatrix::identity(n, n),
        }
    }

    fn forward<'g>(&'g self, grid: &'g PropagatorGrid, j: usize) -> &'g ScaledMatrix {
        match self {
            Carrier::Stable(t) => t.stable_step(j),
            Carrier::Unstable(t) => t.unstable_step(j),
            Carrier::Full => &grid.steps()[j],
        }
    }

    fn backward<'g>(&'g self, grid: &'g PropagatorGrid, j: usize) -> &'g ScaledMatrix {
        match self {
            Carrier::Stable(t) => t.stable_step_back(j),
            Carrier::Unstable(t) => t.unstable_step_back(j),
            Carrier::Full => &grid.inv_steps()[j],
        }
    }
}

/// `Φ(t_j, t_ref) W` at every node, forward through `fwd` and backward through `bwd`.
fn transport(
    grid: &PropagatorGrid,
    ref_index: usize,
    w: &DMatrix<f64>,
    fwd: &Carrier<'_>,
    bwd: &Carrier<'_>,
) -> Vec<ScaledMatrix> {
    let n = grid.dimension();
    let len = grid.times().len();
    let mut out = alloc::vec![ScaledMatrix::zeros(n, w.ncols()); len];
    let mut c = ScaledMatrix::new(fwd.basis(ref_index, n).transpose() * w);
    out[ref_index] = c.plain_mul(&fwd.basis(ref_index, n));
    for j in ref_index..len - 1 {
        c = fwd.forward(grid, j).mul(&c);
        out[j + 1] = c.plain_mul(&fwd.basis(j + 1, n));
    }
    let mut c = ScaledMatrix::new(bwd.basis(ref_index, n).transpose() * w);
    for j in (0..ref_index).rev() {
        c = bwd.backward(grid, j).mul(&c);
        out[j] = c.plain_mul(&bwd.basis(j, n));
    }
    out
}

/// Orthogonal polar factor of `Φ(t, t_j) X_j`, plus the condition of its Gram matrix.
fn polar_block(grid: &PropagatorGrid, nodes: &[ScaledMatrix], t: f64) -> Result<(DMatrix<f64>, f64)> {
    let j = grid.floor_index(t);
    let x = if grid.times()[j] == t { nodes[j].clone() } else { grid.partial(t, grid.times()[j])?.mul(&nodes[j]) };
    if x.ncols() == 0 {
        return Ok((x.body().clone(), 1.0));
    }
    let body = x.body() / x.body().norm();
    let (u, cond) = polar(&body).ok_or(Error::SingularGram { t, cond: f64::INFINITY })?;
    if !(cond <= MAX_GRAM_COND) {
        return Err(Error::SingularGram { t, cond });
    }
    Ok((u, cond))
}

/// Single-stage Gram transform of one splitting, sampled at given times.
#[derive(Debug, Clone)]
pub struct GramTransform {
    pub times: Vec<f64>,
    pub rank: usize,
    pub s: Vec<DMatrix<f64>>,
    pub s_inv: Vec<DMatrix<f64>>,
    /// `max ||S(t)||`; at most `√2`.
    pub max_norm: f64,
    /// `max ||S(t)^{-1} P(t) S(t) - P_0||` with `P_0` the coordinate projection.
    pub max_projection_error: f64,
    pub max_gram_cond: f64,
}

/// `S(t) = X(t) R(t)^{-1}` with `X(t) = Φ(t, t_ref)[E F]` and `R` the SPD root of
/// the block Gram matrix. Blockwise this is the orthogonal polar factor of each block,
/// which is how it is computed: the scale of `X` never enters.
pub fn gram_transform(grid: &PropagatorGrid, splitting: &SplittingCandidate, times: &[f64]) -> Result<GramTransform> {
    let n = grid.dimension();
    let k = splitting.rank;
    let track = FibreTrack::new(grid, splitting)?;
    let r = grid.node_index(splitting.t_ref).ok_or(Error::Numerical(format!("t_ref = {} is not a grid node", splitting.t_ref)))?;
    let e_nodes = transport(grid, r, track.stable(r), &Carrier::Stable(&track), &Carrier::Stable(&track));
    let f_nodes = transport(grid, r, track.unstable(r), &Carrier::Unstable(&track), &Carrier::Unstable(&track));
    let p0 = DMatrix::from_fn(n, n, |i, j| if i == j && i < k { 1.0 } else { 0.0 });
    let mut out = GramTransform {
        times: times.to_vec(),
        rank: k,
        s: Vec::with_capacity(times.len()),
        s_inv: Vec::with_capacity(times.len()),
        max_norm: 0.0,
        max_projection_error: 0.0,
        max_gram_cond: 1.0,
    };
    for &t in times {
        let (se, ce) = polar_block(grid, &e_nodes, t)?;
        let (sf, cf) = polar_block(grid, &f_nodes, t)?;
        let s = hcat(&[&se, &sf]);
        let s_inv = lu_inverse(&s).ok_or(Error::SingularGram { t, cond: f64::INFINITY })?;
        let p = track.projection(grid, t)?;
        out.max_projection_error = out.max_projection_error.max((&s_inv * p * &s - &p0).norm());
        out.max_norm = out.max_norm.max(spectral_norm(&s));
        out.max_gram_cond = out.max_gram_cond.max(ce).max(cf);
        out.s.push(s);
        out.s_inv.push(s_inv);
    }
    Ok(out)
}

/// Settings of [`block_diagonalize`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReduceConfig {
    /// Number of `log μ`-uniform sample times.
    pub samples: usize,
    /// Sample window; the whole grid by default.
    pub t_range: Option<(f64, f64)>,
    /// Off-diagonal blocks below `threshold · (1 + ||B||)` are zeroed.
    pub offblock_threshold: f64,
}

impl Default for ReduceConfig {
    fn default() -> Self {
        ReduceConfig { samples: 2001, t_range: None, offblock_threshold: 1e-4 }
    }
}

/// Sampled `S`, `S^{-1}` and block-diagonal `B = S^{-1}(A S - S')`.
#[derive(Debug, Clone)]
pub struct SimilarityTransform {
    pub times: Vec<f64>,
    pub s: Vec<DMatrix<f64>>,
    pub s_inv: Vec<DMatrix<f64>>,
    pub b: Vec<DMatrix<f64>>,
    pub block_sizes: Vec<usize>,
    /// Fitted `ε` of `log ||S^{±1}(t)|| ≤ log M + ε w(t)`.
    pub eps_hat: f64,
    pub m_hat: f64,
    /// Largest off-diagonal block before zeroing, relative to `1 + ||B||`.
    pub offblock_residual: f64,
    pub t_ref: f64,
    pub domain: crate::growth::Domain,
    pub warnings: Vec<String>,
}

impl SimilarityTransform {
    /// Row/column offset of block `i`.
    pub fn block_offset(&self, i: usize) -> usize {
        self.block_sizes[..i].iter().sum()
    }

    /// The `i`-th diagonal block of `B` at every sample.
    pub fn block(&self, i: usize) -> Result<Vec<DMatrix<f64>>> {
        if i >= self.block_sizes.len() {
            return Err(Error::IndexOutOfRange { index: i, len: self.block_sizes.len() });
        }
        let (o, d) = (self.block_offset(i), self.block_sizes[i]);
        Ok(self.b.iter().map(|b| b.view((o, o), (d, d)).into_owned()).collect())
    }

    /// `y' = B_i(t) y`, interpolated linearly between samples.
    pub fn block_system(&self, i: usize) -> Result<LinearSystem> {
        let mats = self.block(i)?;
        if self.block_sizes[i] == 0 {
            return Err(Error::InvalidParameter { name: format!("block {i}"), reason: "empty block".into() });
        }
        LinearSystem::from_samples(&format!("block-{i}"), self.domain, self.times.clone(), mats, false)
    }

    /// The whole normal form `y' = B(t) y`.
    pub fn normal_form(&self) -> Result<LinearSystem> {
        LinearSystem::from_samples("normal-form", self.domain, self.times.clone(), self.b.clone(), false)
    }
}

fn derivative(times: &[f64], ms: &[DMatrix<f64>], i: usize) -> DMatrix<f64> {
    // second-order three-point formulas on a nonuniform grid
    let last = times.len() - 1;
    let (a, b, c, ia, ib, ic) = if i == 0 {
        (times[0], times[1], times[2], 0, 1, 2)
    } else if i == last {
        (times[last - 2], times[last - 1], times[last], last - 2, last - 1, last)
    } else {
        (times[i - 1], times[i], times[i + 1], i - 1, i, i + 1)
    };
    let x = times[i];
    let wa = ((x - b) + (x - c)) / ((a - b) * (a - c));
    let wb = ((x - a) + (x - c)) / ((b - a) * (b - c));
    let wc = ((x - a) + (x - b)) / ((c - a) * (c - b));
    &ms[ia] * wa + &ms[ib] * wb + &ms[ic] * wc
}

/// Fits `y ≤ log M + ε w` by the slope through windowed maxima, `ε ≥ 0`.
fn fit_lyapunov_bound(points: &[(f64, f64)]) -> (f64, f64) {
    let (lo, hi) = points.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |a, p| (a.0.min(p.0), a.1.max(p.0)));
    let mut peaks: Vec<Option<(f64, f64)>> = alloc::vec![None; 8];
    if hi > lo {
        for &(w, y) in points {
            let k = (((w - lo) / (hi - lo)) * 8.0) as usize;
            let slot = &mut peaks[k.min(7)];
            if slot.is_none_or(|p| y > p.1) {
                *slot = Some((w, y));
            }
        }
    }
    let peaks: Vec<(f64, f64)> = peaks.into_iter().flatten().collect();
    let eps = crate::linalg::ls_fit(&peaks).map_or(0.0, |f| f.0.max(0.0));
    let log_m = points.iter().map(|&(w, y)| y - eps * w).fold(f64::NEG_INFINITY, f64::max);
    (eps, libm::exp(log_m))
}

/// Block-diagonalizes along the spectral fibres of `spectrum`.
///
/// The recursive splitting at anchors `γ_0, …, γ_m` composes to the block-wise
/// polar factors of `Φ(t, t_ref) W_i`, so all stages are built at once. Each
/// fibre is carried forward inside the stable family of anchor `i` and backward
/// inside the unstable family of anchor `i - 1`, where it is the dominant part.
pub fn block_diagonalize(
    grid: &PropagatorGrid,
    rate: &GrowthRate,
    spectrum: &SpectrumResult,
    config: &ReduceConfig,
) -> Result<SimilarityTransform> {
    let n = grid.dimension();
    let m = spectrum.intervals.len();
    if m == 0 {
        return Err(Error::MissingAnchor);
    }
    if spectrum.fits.len() != m + 1 || spectrum.fibers.len() != m + 2 {
        return Err(Error::MissingAnchor);
    }
    let mut warnings = Vec::new();
    for fit in spectrum.fits.iter().flatten() {
        if let Some(w) = precondition_warning(fit) {
            warnings.push(w);
        }
    }
    let r = grid
        .node_index(spectrum.t_ref)
        .ok_or(Error::Numerical(format!("t_ref = {} is not a grid node", spectrum.t_ref)))?;
    let tracks: Vec<Option<FibreTrack>> = spectrum
        .fits
        .iter()
        .map(|f| f.as_ref().map(|f| FibreTrack::new(grid, &f.splitting)).transpose())
        .collect::<Result<_>>()?;
    let mut nodes = Vec::with_capacity(m + 2);
    for (i, w) in spectrum.fibers.iter().enumerate() {
        if w.ncols() == 0 {
            nodes.push(alloc::vec![ScaledMatrix::zeros(n, 0); grid.times().len()]);
            continue;
        }
        let stable = tracks.get(i).and_then(|t| t.as_ref());
        let unstable = i.checked_sub(1).and_then(|p| tracks[p].as_ref());
        let fwd = match (stable, unstable) {
            (Some(t), _) => Carrier::Stable(t),
            (None, Some(t)) => Carrier::Unstable(t),
            (None, None) => Carrier::Full,
        };
        let bwd = match (unstable, stable) {
            (Some(t), _) => Carrier::Unstable(t),
            (None, Some(t)) => Carrier::Stable(t),
            (None, None) => Carrier::Full,
        };
        nodes.push(transport(grid, r, w, &fwd, &bwd));
    }

    let (t0, t1) = config.t_range.unwrap_or((grid.t_min(), grid.t_max()));
    if !(t0 >= grid.t_min() && t1 <= grid.t_max() && t0 < t1) {
        return Err(Error::InvalidHorizon { t_min: t0, t_max: t1, reason: "sample window outside the grid".into() });
    }
    if config.samples < 3 {
        return Err(Error::InvalidParameter { name: "samples".into(), reason: "need at least 3".into() });
    }
    let times = rate.log_mu_uniform(t0, t1, config.samples)?;
    let mut s = Vec::with_capacity(times.len());
    let mut s_inv = Vec::with_capacity(times.len());
    for &t in &times {
        let blocks: Vec<DMatrix<f64>> = nodes.iter().map(|x| polar_block(grid, x, t).map(|b| b.0)).collect::<Result<_>>()?;
        let refs: Vec<&DMatrix<f64>> = blocks.iter().collect();
        let st = hcat(&refs);
        let inv = lu_inverse(&st).ok_or(Error::SingularGram { t, cond: f64::INFINITY })?;
        s.push(st);
        s_inv.push(inv);
    }

    let block_sizes = spectrum.ranks.clone();
    let mut offblock_residual: f64 = 0.0;
    let mut b = Vec::with_capacity(times.len());
    for (i, &t) in times.iter().enumerate() {
        let ds = derivative(&times, &s, i);
        let mut bt = &s_inv[i] * (grid.system().coeff(t) * &s[i] - ds);
        let scale = 1.0 + bt.norm();
        let mut worst: f64 = 0.0;
        let mut oi = 0;
        for &di in &block_sizes {
            let mut oj = 0;
            for &dj in &block_sizes {
                if oi != oj && di > 0 && dj > 0 {
                    let mut blk = bt.view_mut((oi, oj), (di, dj));
                    let rel = blk.norm() / scale;
                    worst = worst.max(rel);
                    if rel <= config.offblock_threshold {
                        blk.fill(0.0);
                    }
                }
                oj += dj;
            }
            oi += di;
        }
        offblock_residual = offblock_residual.max(worst);
        b.push(bt);
    }
    if offblock_residual > config.offblock_threshold {
        warnings.push(format!(
            "off-diagonal blocks of B reach {offblock_residual:.3e} relative, above {:.1e}; kept as computed",
            config.offblock_threshold
        ));
    }

    let pts: Vec<(f64, f64)> = times
        .iter()
        .zip(s.iter().zip(&s_inv))
        .flat_map(|(&t, (a, ai))| {
            let w = rate.sw(t);
            [(w, libm::log(spectral_norm(a))), (w, libm::log(spectral_norm(ai)))]
        })
        .collect();
    let (eps_hat, m_hat) = fit_lyapunov_bound(&pts);

    Ok(SimilarityTransform {
        times,
        s,
        s_inv,
        b,
        block_sizes,
        eps_hat,
        m_hat,
        offblock_residual,
        t_ref: spectrum.t_ref,
        domain: rate.domain(),
        warnings,
    })
}

/// Warning text when `3 max{θ,ν} - min{-α-θ, β-ν} > 0` at an anchor.
pub fn precondition_warning(fit: &DichotomyFit) -> Option<String> {
    let theta = fit.theta.max(fit.nu);
    let margin = match (fit.alpha, fit.beta) {
        (Some(a), Some(b)) => (-a - fit.theta).min(b - fit.nu),
        (Some(a), None) => -a - fit.theta,
        (None, Some(b)) => b - fit.nu,
        (None, None) => return None,
    };
    let excess = 3.0 * theta - margin;
    (excess > 0.0).then(|| {
        format!(
            "anchor gamma = {:.4}: 3 max(theta, nu) exceeds the dichotomy margin by {excess:.4}; the spectrum of B is not guaranteed",
            fit.gamma
        )
    })
}

/// Spectrum of every nonempty block system of a transform.
pub fn block_spectra(
    transform: &SimilarityTransform,
    rate: &GrowthRate,
    config: &SpectrumConfig,
    tol: f64,
    nodes: usize,
) -> Result<Vec<Option<Vec<SpectralInterval>>>> {
    let (t0, t1) = (transform.times[0], transform.times[transform.times.len() - 1]);
    (0..transform.block_sizes.len())
        .map(|i| {
            if transform.block_sizes[i] == 0 {
                return Ok(None);
            }
            let sys = transform.block_system(i)?;
            let grid = integrate_dense(&sys, rate, t0, t1, tol, nodes)?;
            Ok(Some(compute_spectrum(&grid, rate, config)?.intervals))
        })
        .collect()
}

/// A change of variables `x = S(t) y` between `x' = A x` and a normal form `y' = B y`.
pub trait Conjugacy {
    fn dimension(&self) -> usize;
    /// `S(t)` as a log-scaled matrix.
    fn transform_at(&self, t: f64) -> Result<ScaledMatrix>;
    fn normal_form(&self) -> Result<LinearSystem>;
    /// Times where `transform_at` is available; `None` means anywhere on the grid.
    fn sample_times(&self) -> Option<&[f64]>;
}

impl Conjugacy for SimilarityTransform {
    fn dimension(&self) -> usize {
        self.block_sizes.iter().sum()
    }

    fn transform_at(&self, t: f64) -> Result<ScaledMatrix> {
        let i = self
            .times
            .binary_search_by(|x| x.total_cmp(&t))
            .map_err(|_| Error::Numerical(format!("t = {t} is not a sample time")))?;
        Ok(ScaledMatrix::new(self.s[i].clone()))
    }

    fn normal_form(&self) -> Result<LinearSystem> {
        SimilarityTransform::normal_form(self)
    }

    fn sample_times(&self) -> Option<&[f64]> {
        Some(&self.times)
    }
}

pub type TransformFn = Arc<dyn Fn(f64) -> ScaledMatrix + Send + Sync>;

/// A conjugacy given by closed-form `S(t)` and normal-form system.
#[derive(Clone)]
pub struct ExplicitConjugacy {
    pub s: TransformFn,
    pub b: LinearSystem,
}

impl Conjugacy for ExplicitConjugacy {
    fn dimension(&self) -> usize {
        self.b.dimension()
    }

    fn transform_at(&self, t: f64) -> Result<ScaledMatrix> {
        Ok((self.s)(t))
    }

    fn normal_form(&self) -> Result<LinearSystem> {
        Ok(self.b.clone())
    }

    fn sample_times(&self) -> Option<&[f64]> {
        None
    }
}

/// The closed-form diagonalization of `triangular-halfline`, with `x = √(1+t)`:
/// `S(t) = [[x, e^{-x}], [e^{x-1}, 0]]` and `B(t) = diag(-1/(4x), 1/(4x))`.
pub fn triangular_explicit_conjugacy() -> ExplicitConjugacy {
    let s: TransformFn = Arc::new(|t| {
        let x = libm::sqrt(1.0 + t);
        // scale by e^{x-1} so the entries stay finite for large t
        let top = x - 1.0;
        let body = DMatrix::from_row_slice(2, 2, &[x * libm::exp(-top), libm::exp(-x - top), 1.0, 0.0]);
        ScaledMatrix::from_parts(body, top)
    });
    let coeff: crate::system::CoeffFn = Arc::new(|t| {
        let x = libm::sqrt(1.0 + t);
        DMatrix::from_row_slice(2, 2, &[-0.25 / x, 0.0, 0.0, 0.25 / x])
    });
    let b = LinearSystem::new("triangular-normal-form", 2, crate::growth::Domain::HalfLine, coeff);
    ExplicitConjugacy { s, b }
}

/// Settings of [`verify_conjugacy`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConjugacyConfig {
    pub pairs: usize,
    pub seed: u64,
    pub tol: f64,
}

impl Default for ConjugacyConfig {
    fn default() -> Self {
        ConjugacyConfig { pairs: 200, seed: 0, tol: 1e-3 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConjugacyReport {
    pub pairs: usize,
    pub seed: u64,
    pub tol: f64,
    /// Largest `||Φ_A(t,s)S(s)x - S(t)Φ_B(t,s)x|| / ||S(t)Φ_B(t,s)x||`.
    pub max_violation: f64,
    pub mean_violation: f64,
    /// `(s, τ)` of the worst sample.
    pub worst: (f64, f64),
    pub pass: bool,
}

fn relative_gap(a: &(DVector<f64>, f64), b: &(DVector<f64>, f64)) -> f64 {
    if !b.1.is_finite() {
        return if a.1.is_finite() { f64::INFINITY } else { 0.0 };
    }
    let d = &a.0 * libm::exp(a.1 - b.1) - &b.0;
    d.norm() / b.0.norm()
}

/// Samples `(τ, s, x)` and compares `Φ_A(s+τ, s) S(s) x` with `S(s+τ) Φ_B(s+τ, s) x`.
pub fn verify_conjugacy(
    transform: &dyn Conjugacy,
    grid_a: &PropagatorGrid,
    config: &ConjugacyConfig,
) -> Result<ConjugacyReport> {
    let n = grid_a.dimension();
    if transform.dimension() != n {
        return Err(Error::Dimension { expected: n, got: transform.dimension() });
    }
    let (lo, hi) = match transform.sample_times() {
        Some(ts) => (ts[0].max(grid_a.t_min()), ts[ts.len() - 1].min(grid_a.t_max())),
        None => (grid_a.t_min(), grid_a.t_max()),
    };
    let grid_b = integrate(&transform.normal_form()?, lo, hi, grid_a.tol())?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let pick = |rng: &mut ChaCha8Rng| -> f64 {
        match transform.sample_times() {
            Some(ts) => ts[rng.random_range(0..ts.len())].clamp(lo, hi),
            None => lo + (hi - lo) * rng.random::<f64>(),
        }
    };
    let mut worst = (0.0, 0.0);
    let mut max_violation: f64 = 0.0;
    let mut total = 0.0;
    for _ in 0..config.pairs {
        let s = pick(&mut rng);
        let t = pick(&mut rng);
        let x = DVector::from_fn(n, |_, _| 2.0 * rng.random::<f64>() - 1.0);
        let lhs = grid_a.phi(t, s)?.mul(&transform.transform_at(s)?).apply(&x);
        let rhs = transform.transform_at(t)?.mul(&grid_b.phi(t, s)?).apply(&x);
        let v = relative_gap(&lhs, &rhs);
        total += v;
        if v > max_violation || v.is_nan() {
            max_violation = if v.is_nan() { f64::INFINITY } else { v };
            worst = (s, t - s);
        }
    }
    Ok(ConjugacyReport {
        pairs: config.pairs,
        seed: config.seed,
        tol: config.tol,
        max_violation,
        mean_violation: total / config.pairs.max(1) as f64,
        worst,
        pass: max_violation <= config.tol,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::growth::{builtin_rate, Domain};
    use crate::params::Params;
    use crate::propagator::integrate_dense;
    use crate::spectrum::compute_spectrum;
    use crate::splitting::estimate_splitting;
    use crate::system::{constant, triangular_halfline};

    #[test]
    fn triangular_gram_stage() {
        let rate = builtin_rate("sqrt-exp-half", &Params::default()).unwrap();
        let g = integrate_dense(&triangular_halfline(), &rate, 0.0, 400.0, 1e-10, 200).unwrap();
        let sp = estimate_splitting(&g, &rate, 0.0, None).unwrap();
        let times = rate.log_mu_uniform(0.0, 200.0, 101).unwrap();
        let gt = gram_transform(&g, &sp, &times).unwrap();
        assert!(gt.max_norm <= core::f64::consts::SQRT_2 + 1e-8, "{}", gt.max_norm);
        assert!(gt.max_projection_error <= 1e-8, "{}", gt.max_projection_error);
    }

    #[test]
    fn constant_diagonal_normal_form() {
        let rate = builtin_rate("exponential", &Params::default()).unwrap();
        let a = DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, 1.0]);
        let g = integrate_dense(&constant("d", a, Domain::FullLine), &rate, -30.0, 30.0, 1e-10, 400).unwrap();
        let sp = compute_spectrum(&g, &rate, &SpectrumConfig::default()).unwrap();
        let cfg = ReduceConfig { samples: 201, ..ReduceConfig::default() };
        let st = block_diagonalize(&g, &rate, &sp, &cfg).unwrap();
        assert_eq!(st.block_sizes, alloc::vec![0, 1, 1, 0]);
        for b in &st.b {
            assert!((b[(0, 0)] + 1.0).abs() < 1e-6 && (b[(1, 1)] - 1.0).abs() < 1e-6, "{b}");
        }
        assert!(st.eps_hat < 1e-6);
        let rep = verify_conjugacy(&st, &g, &ConjugacyConfig { pairs: 50, ..Default::default() }).unwrap();
        assert!(rep.pass, "{rep:?}");
    }

    #[test]
    fn explicit_triangular_conjugacy() {
        let rate = builtin_rate("sqrt-exp-half", &Params::default()).unwrap();
        let g = integrate_dense(&triangular_halfline(), &rate, 0.0, 200.0, 1e-11, 100).unwrap();
        let rep = verify_conjugacy(&triangular_explicit_conjugacy(), &g, &ConjugacyConfig::default()).unwrap();
        assert!(rep.max_violation <= 1e-6, "{rep:?}");
    }
}
