//! Candidate invariant splittings and their transport along the grid.
//!
//! Stable fibres are carried backward from `T_max` and unstable fibres forward
//! from `T_min`, the directions in which each subspace is attracting, so that
//! neither is lost to rounding over long horizons.

use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::growth::{Domain, GrowthRate};
use crate::linalg::{complement, lu_inverse, min_principal_angle, orthonormalize, svd_sorted};
use crate::propagator::PropagatorGrid;
use crate::scaled::ScaledMatrix;

/// Exponents closer than this are treated as tied.
pub const TIE_TOL: f64 = 1e-3;
/// Fibres closer than this principal angle invalidate the splitting.
pub const PARALLEL_TOL: f64 = 1e-10;

/// Finite-time singular data of the unshifted propagator around `t_ref`.
#[derive(Debug, Clone)]
pub struct Reference {
    t_ref: f64,
    i_ref: usize,
    span: f64,
    forward: Vec<f64>,
    backward: Option<Vec<f64>>,
    stable_ref: DMatrix<f64>,
    stable_end: DMatrix<f64>,
    unstable: Option<(DMatrix<f64>, DMatrix<f64>)>,
}

fn product(grid: &PropagatorGrid, range: core::ops::Range<usize>, inverse: bool) -> ScaledMatrix {
    let n = grid.dimension();
    let mut m = ScaledMatrix::identity(n);
    if inverse {
        for i in range {
            m = m.mul(&grid.inv_steps()[i]);
        }
    } else {
        for i in range.rev() {
            m = m.mul(&grid.steps()[i]);
        }
    }
    m
}

fn log_sigmas(m: &ScaledMatrix) -> (Vec<f64>, DMatrix<f64>, DMatrix<f64>) {
    let svd = svd_sorted(m.body());
    let logs = svd.sigma.iter().map(|s| m.log_scale() + libm::log(*s)).collect();
    (logs, svd.u, svd.v)
}

impl Reference {
    /// SVD data of `Φ(T_max, t_ref)` and, when `t_ref` is interior, of `Φ(T_min, t_ref)`.
    pub fn new(grid: &PropagatorGrid, rate: &GrowthRate) -> Result<Self> {
        let times = grid.times();
        let last = times.len() - 1;
        let interior = rate.domain() == Domain::FullLine && times[0] < 0.0 && times[last] > 0.0;
        let (t_ref, i_ref) = if interior {
            (0.0, grid.node_index(0.0).expect("zero is a grid node"))
        } else {
            (times[0], 0)
        };
        let n = grid.dimension();
        let l_ref = rate.log_mu(t_ref)?;
        let dl = rate.log_mu(times[last])? - l_ref;
        let span = rate.log_mu(times[last])? - rate.log_mu(times[0])?;

        // Φ(t_ref, T_max): dominant directions are the most contracting forward.
        let (inv_logs, u, v) = log_sigmas(&product(grid, i_ref..last, true));
        let (fwd_logs, _, _) = log_sigmas(&product(grid, i_ref..last, false));
        let forward = (0..n)
            .map(|j| if 2 * j < n { -inv_logs[j] / dl } else { fwd_logs[n - 1 - j] / dl })
            .collect();

        let (backward, unstable) = if interior {
            let dl_b = rate.log_mu(times[0])? - l_ref;
            // Φ(t_ref, T_min): dominant directions are the most expanding forward.
            let (b_logs, ub, vb) = log_sigmas(&product(grid, 0..i_ref, false));
            let (binv_logs, _, _) = log_sigmas(&product(grid, 0..i_ref, true));
            let exps = (0..n)
                .map(|j| if 2 * j < n { binv_logs[j] / dl_b } else { -b_logs[n - 1 - j] / dl_b })
                .collect();
            (Some(exps), Some((ub, vb)))
        } else {
            (None, None)
        };
        Ok(Reference { t_ref, i_ref, span, forward, backward, stable_ref: u, stable_end: v, unstable })
    }

    pub fn t_ref(&self) -> f64 {
        self.t_ref
    }

    pub fn ref_index(&self) -> usize {
        self.i_ref
    }

    /// `log μ(T_max) - log μ(T_min)`.
    pub fn log_mu_span(&self) -> f64 {
        self.span
    }

    /// Ascending forward finite-time exponents on `[t_ref, T_max]`.
    pub fn forward_exponents(&self) -> &[f64] {
        &self.forward
    }

    /// Ascending finite-time exponents on `[T_min, t_ref]` (interior `t_ref` only).
    pub fn backward_exponents(&self) -> Option<&[f64]> {
        self.backward.as_deref()
    }

    /// Number of forward exponents below `gamma`.
    pub fn rank_below(&self, gamma: f64) -> usize {
        self.forward.iter().filter(|&&e| e < gamma).count()
    }

    /// Exponent gap separating the `k` lowest from the rest (infinite for k = 0 or n).
    pub fn gap(&self, k: usize) -> f64 {
        let n = self.forward.len();
        if k == 0 || k >= n {
            return f64::INFINITY;
        }
        let mut g = self.forward[k] - self.forward[k - 1];
        if let Some(b) = &self.backward {
            g = g.min(b[k] - b[k - 1]);
        }
        g
    }

    /// The rank-`k` candidate, regardless of the gap.
    pub fn candidate(&self, k: usize) -> Result<SplittingCandidate> {
        let n = self.forward.len();
        if k > n {
            return Err(Error::InvalidRank { rank: k, n });
        }
        let stable_basis = self.stable_ref.columns(0, k).into_owned();
        let stable_end = self.stable_end.columns(0, k).into_owned();
        let (unstable_basis, unstable_start) = match &self.unstable {
            Some((ub, vb)) => (ub.columns(0, n - k).into_owned(), vb.columns(0, n - k).into_owned()),
            None => {
                let c = complement(&stable_basis);
                (c.clone(), c)
            }
        };
        Ok(SplittingCandidate {
            rank: k,
            stable_basis,
            unstable_basis,
            t_ref: self.t_ref,
            gap: self.gap(k),
            stable_end,
            unstable_start,
        })
    }
}

/// A rank-`k` splitting: fibres of `Im P` and `Ker P` at `t_ref`.
#[derive(Debug, Clone, PartialEq)]
pub struct SplittingCandidate {
    pub rank: usize,
    pub stable_basis: DMatrix<f64>,
    pub unstable_basis: DMatrix<f64>,
    pub t_ref: f64,
    pub gap: f64,
    /// Stable fibre at `T_max`, the seed of backward tracking.
    pub(crate) stable_end: DMatrix<f64>,
    /// Unstable fibre at `T_min`, the seed of forward tracking.
    pub(crate) unstable_start: DMatrix<f64>,
}

impl SplittingCandidate {
    /// A splitting from explicit fibres at `t_ref`, carried to the grid ends by `Φ`.
    pub fn from_bases(
        grid: &PropagatorGrid,
        stable: &DMatrix<f64>,
        unstable: &DMatrix<f64>,
        t_ref: f64,
    ) -> Result<Self> {
        let n = grid.dimension();
        if stable.nrows() != n || unstable.nrows() != n || stable.ncols() + unstable.ncols() != n {
            return Err(Error::Dimension { expected: n, got: stable.ncols() + unstable.ncols() });
        }
        let stable_basis = orthonormalize(stable);
        let unstable_basis = orthonormalize(unstable);
        let angle = min_principal_angle(&stable_basis, &unstable_basis);
        if angle < PARALLEL_TOL {
            return Err(Error::ParallelFibers { t: t_ref, angle });
        }
        let carry = |b: &DMatrix<f64>, t: f64| -> Result<DMatrix<f64>> {
            if b.ncols() == 0 {
                return Ok(b.clone());
            }
            Ok(orthonormalize(&(grid.phi(t, t_ref)?.body() * b)))
        };
        Ok(SplittingCandidate {
            rank: stable.ncols(),
            stable_end: carry(&stable_basis, grid.t_max())?,
            unstable_start: carry(&unstable_basis, grid.t_min())?,
            stable_basis,
            unstable_basis,
            t_ref,
            gap: f64::INFINITY,
        })
    }

    pub fn dimension(&self) -> usize {
        self.stable_basis.nrows()
    }

    /// The projection onto the stable fibre along the unstable one at `t_ref`.
    pub fn projection(&self) -> Result<DMatrix<f64>> {
        assemble_projection(&self.stable_basis, &self.unstable_basis, self.t_ref)
    }
}

/// Projection onto `span(e)` along `span(f)` for orthonormal bases.
fn assemble_projection(e: &DMatrix<f64>, f: &DMatrix<f64>, t: f64) -> Result<DMatrix<f64>> {
    let n = e.nrows();
    if e.ncols() == 0 {
        return Ok(DMatrix::zeros(n, n));
    }
    if f.ncols() == 0 {
        return Ok(DMatrix::identity(n, n));
    }
    let g = complement(f);
    let norm = restricted_inverse(&g, e, t)?;
    Ok(e * norm * g.transpose())
}

/// `(gᵀ e)^{-1}`, failing when the fibres are nearly parallel.
fn restricted_inverse(g: &DMatrix<f64>, e: &DMatrix<f64>, t: f64) -> Result<DMatrix<f64>> {
    let m = g.transpose() * e;
    let angle = libm::asin(crate::linalg::min_singular_value(&m).min(1.0));
    if angle < PARALLEL_TOL {
        return Err(Error::ParallelFibers { t, angle });
    }
    lu_inverse(&m).ok_or(Error::ParallelFibers { t, angle })
}

/// Finite-time splitting of `Φ_γ` at `t_ref`. With `k = None` the rank counts the
/// negative shifted exponents. Fails with [`Error::ExponentTie`] on a tied rank.
pub fn estimate_splitting(
    grid: &PropagatorGrid,
    rate: &GrowthRate,
    gamma: f64,
    k: Option<usize>,
) -> Result<SplittingCandidate> {
    let reference = Reference::new(grid, rate)?;
    let k = k.unwrap_or_else(|| reference.rank_below(gamma));
    let gap = reference.gap(k);
    if gap < TIE_TOL {
        return Err(Error::ExponentTie { rank: k, gap });
    }
    reference.candidate(k)
}

/// Both fibres of a splitting tracked over every grid node, with the restricted
/// dynamics between consecutive nodes.
#[derive(Debug, Clone)]
pub struct FibreTrack {
    rank: usize,
    n: usize,
    times: Vec<f64>,
    e: Vec<DMatrix<f64>>,
    f: Vec<DMatrix<f64>>,
    c_fwd: Vec<ScaledMatrix>,
    c_bwd: Vec<ScaledMatrix>,
    d_fwd: Vec<ScaledMatrix>,
    d_bwd: Vec<ScaledMatrix>,
    p_norm: Vec<DMatrix<f64>>,
    q_norm: Vec<DMatrix<f64>>,
}

fn restrict(out: &DMatrix<f64>, step: &ScaledMatrix, inp: &DMatrix<f64>) -> ScaledMatrix {
    ScaledMatrix::from_parts(out.transpose() * step.body() * inp, step.log_scale())
}

impl FibreTrack {
    pub fn new(grid: &PropagatorGrid, splitting: &SplittingCandidate) -> Result<Self> {
        let n = grid.dimension();
        let k = splitting.rank;
        let times = grid.times().to_vec();
        let len = times.len();
        let (steps, inv) = (grid.steps(), grid.inv_steps());

        let e: Vec<DMatrix<f64>> = if k == n {
            (0..len).map(|_| DMatrix::identity(n, n)).collect()
        } else if k == 0 {
            (0..len).map(|_| DMatrix::zeros(n, 0)).collect()
        } else {
            let mut e = Vec::with_capacity(len);
            e.push(splitting.stable_end.clone());
            for i in (0..len - 1).rev() {
                let prev = e.last().expect("seeded");
                e.push(orthonormalize(&(inv[i].body() * prev)));
            }
            e.reverse();
            e
        };
        let f: Vec<DMatrix<f64>> = if k == 0 {
            (0..len).map(|_| DMatrix::identity(n, n)).collect()
        } else if k == n {
            (0..len).map(|_| DMatrix::zeros(n, 0)).collect()
        } else {
            let mut f = Vec::with_capacity(len);
            f.push(splitting.unstable_start.clone());
            for i in 0..len - 1 {
                let next = orthonormalize(&(steps[i].body() * &f[i]));
                f.push(next);
            }
            f
        };

        let mut track = FibreTrack {
            rank: k,
            n,
            times,
            c_fwd: Vec::new(),
            c_bwd: Vec::new(),
            d_fwd: Vec::new(),
            d_bwd: Vec::new(),
            p_norm: Vec::new(),
            q_norm: Vec::new(),
            e,
            f,
        };
        if k > 0 {
            for i in 0..len - 1 {
                track.c_fwd.push(restrict(&track.e[i + 1], &steps[i], &track.e[i]));
                track.c_bwd.push(restrict(&track.e[i], &inv[i], &track.e[i + 1]));
            }
        }
        if k < n {
            for i in 0..len - 1 {
                track.d_fwd.push(restrict(&track.f[i + 1], &steps[i], &track.f[i]));
                track.d_bwd.push(restrict(&track.f[i], &inv[i], &track.f[i + 1]));
            }
        }
        for i in 0..len {
            let t = track.times[i];
            if k > 0 {
                let g = complement(&track.f[i]);
                track.p_norm.push(if k == n { DMatrix::identity(n, n) } else { restricted_inverse(&g, &track.e[i], t)? });
            }
            if k < n {
                let h = complement(&track.e[i]);
                track.q_norm.push(if k == 0 { DMatrix::identity(n, n) } else { restricted_inverse(&h, &track.f[i], t)? });
            }
            if k > 0 && k < n {
                let angle = min_principal_angle(&track.e[i], &track.f[i]);
                if angle < PARALLEL_TOL {
                    return Err(Error::ParallelFibers { t, angle });
                }
            }
        }
        Ok(track)
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn dimension(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    /// Orthonormal stable fibre at node `i`.
    pub fn stable(&self, i: usize) -> &DMatrix<f64> {
        &self.e[i]
    }

    /// Orthonormal unstable fibre at node `i`.
    pub fn unstable(&self, i: usize) -> &DMatrix<f64> {
        &self.f[i]
    }

    /// `E_{i+1}ᵀ Φ(t_{i+1}, t_i) E_i`.
    pub fn stable_step(&self, i: usize) -> &ScaledMatrix {
        &self.c_fwd[i]
    }

    /// `E_iᵀ Φ(t_i, t_{i+1}) E_{i+1}`.
    pub fn stable_step_back(&self, i: usize) -> &ScaledMatrix {
        &self.c_bwd[i]
    }

    /// `F_{i+1}ᵀ Φ(t_{i+1}, t_i) F_i`.
    pub fn unstable_step(&self, i: usize) -> &ScaledMatrix {
        &self.d_fwd[i]
    }

    /// `F_iᵀ Φ(t_i, t_{i+1}) F_{i+1}`.
    pub fn unstable_step_back(&self, i: usize) -> &ScaledMatrix {
        &self.d_bwd[i]
    }

    /// `(G_iᵀ E_i)^{-1}` with `G_i` the complement of the unstable fibre, so that
    /// `||Φ(t_j, t_i) P(t_i)|| = ||C_{j-1} ⋯ C_i · p_norm(i)||`.
    pub fn p_norm(&self, i: usize) -> &DMatrix<f64> {
        &self.p_norm[i]
    }

    /// `(H_iᵀ F_i)^{-1}` with `H_i` the complement of the stable fibre.
    pub fn q_norm(&self, i: usize) -> &DMatrix<f64> {
        &self.q_norm[i]
    }

    /// `P(t_i)`.
    pub fn projection_at(&self, i: usize) -> Result<DMatrix<f64>> {
        assemble_projection(&self.e[i], &self.f[i], self.times[i])
    }

    /// Stable and unstable fibres at an arbitrary time, via a partial step from the floor node.
    pub fn fibres_at(&self, grid: &PropagatorGrid, t: f64) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        grid.phi(t, t)?;
        let i = grid.floor_index(t);
        if grid.times()[i] == t {
            return Ok((self.e[i].clone(), self.f[i].clone()));
        }
        let m = grid.partial(t, grid.times()[i])?;
        let carry = |b: &DMatrix<f64>| {
            if b.ncols() == 0 || b.ncols() == self.n {
                b.clone()
            } else {
                orthonormalize(&(m.body() * b))
            }
        };
        Ok((carry(&self.e[i]), carry(&self.f[i])))
    }

    /// `P(t)` for any `t` in the grid.
    pub fn projection(&self, grid: &PropagatorGrid, t: f64) -> Result<DMatrix<f64>> {
        if let Some(i) = grid.node_index(t) {
            return self.projection_at(i);
        }
        let (e, f) = self.fibres_at(grid, t)?;
        assemble_projection(&e, &f, t)
    }
}

/// `P(t)` of a splitting: projection onto the transported stable fibre along the
/// transported unstable fibre.
pub fn transport_projection(
    grid: &PropagatorGrid,
    splitting: &SplittingCandidate,
    t: f64,
) -> Result<DMatrix<f64>> {
    FibreTrack::new(grid, splitting)?.projection(grid, t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::Params;
    use crate::growth::builtin_rate;
    use crate::propagator::integrate;
    use crate::system::{constant, triangular_halfline};

    fn diag_grid() -> (PropagatorGrid, GrowthRate) {
        let a = DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, 1.0]);
        let g = integrate(&constant("d", a, Domain::FullLine), -10.0, 10.0, 1e-9).unwrap();
        (g, builtin_rate("exponential", &Params::default()).unwrap())
    }

    #[test]
    fn diagonal_splitting() {
        let (g, r) = diag_grid();
        let c = estimate_splitting(&g, &r, 0.0, None).unwrap();
        assert_eq!(c.rank, 1);
        assert_eq!(c.t_ref, 0.0);
        assert!(c.stable_basis[(0, 0)].abs() > 1.0 - 1e-12);
        assert!(c.unstable_basis[(1, 0)].abs() > 1.0 - 1e-12);
        let reference = Reference::new(&g, &r).unwrap();
        let e = reference.forward_exponents();
        assert!((e[0] + 1.0).abs() < 1e-6 && (e[1] - 1.0).abs() < 1e-6);
        assert_eq!(reference.rank_below(2.0), 2);
    }

    #[test]
    fn tie_is_reported() {
        let g = integrate(&constant("z", DMatrix::zeros(2, 2), Domain::FullLine), -10.0, 10.0, 1e-9).unwrap();
        let r = builtin_rate("exponential", &Params::default()).unwrap();
        assert!(matches!(estimate_splitting(&g, &r, 0.0, Some(1)), Err(Error::ExponentTie { .. })));
        assert_eq!(estimate_splitting(&g, &r, 0.0, Some(2)).unwrap().rank, 2);
    }

    #[test]
    fn triangular_projection_matches_closed_form() {
        let sys = triangular_halfline();
        let rate = builtin_rate("sqrt-exp-half", &Params::default()).unwrap();
        let g = integrate(&sys, 0.0, 400.0, 1e-10).unwrap();
        let c = estimate_splitting(&g, &rate, 0.0, None).unwrap();
        assert_eq!(c.rank, 1);
        assert!(c.stable_basis[(1, 0)].abs() < 1e-4);
        let track = FibreTrack::new(&g, &c).unwrap();
        for &t in &[0.0, 0.7, 3.0, 10.0, 55.5, 200.0] {
            let p = track.projection(&g, t).unwrap();
            let x = libm::sqrt(1.0 + t);
            let want = DMatrix::from_row_slice(2, 2, &[1.0, -(x - 1.0) * libm::exp(1.0 - x), 0.0, 0.0]);
            assert!((&p - want).norm() < 1e-6, "t={t} {p}");
            assert!((&p * &p - &p).norm() < 1e-10);
        }
    }

    #[test]
    fn tracked_norms_match_direct_products() {
        let (g, r) = diag_grid();
        let c = estimate_splitting(&g, &r, 0.0, None).unwrap();
        let track = FibreTrack::new(&g, &c).unwrap();
        let (i, j) = (10, g.times().len() - 5);
        let mut m = ScaledMatrix::new(track.p_norm(i).clone());
        for step in i..j {
            m = track.stable_step(step).mul(&m);
        }
        let direct = g.phi_nodes(j, i).mul_plain(&track.projection_at(i).unwrap());
        assert!((m.log_norm() - direct.log_norm()).abs() < 1e-8);
    }
}
