//! Evolution operators from adaptive Dormand–Prince 5(4) integration, stored per step.

use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::growth::GrowthRate;
use crate::linalg::{lu_inverse, rcond_1};
use crate::scaled::ScaledMatrix;
use crate::system::LinearSystem;

/// Default local error tolerance.
pub const DEFAULT_TOL: f64 = 1e-9;

/// Integrator bookkeeping.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct IntegratorStats {
    pub accepted: usize,
    pub rejected: usize,
    pub max_local_error: f64,
}

// Dormand–Prince tableau.
const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
// Fifth minus fourth order weights.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

/// One step of `X' = A(t) X` from `X(t) = I`. Returns `Φ(t+h, t)` and the scaled error norm.
fn dp_step(sys: &LinearSystem, t: f64, h: f64, tol: f64) -> Result<(DMatrix<f64>, f64)> {
    let n = sys.dimension();
    let eye = DMatrix::<f64>::identity(n, n);
    let mut k: Vec<DMatrix<f64>> = Vec::with_capacity(7);
    let mut y5 = eye.clone();
    for stage in 0..7 {
        let ts = t + C[stage] * h;
        let a = sys.coeff(ts);
        if a.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFiniteCoefficient { t: ts });
        }
        let y = if stage == 0 {
            eye.clone()
        } else {
            let mut y = eye.clone();
            for (j, kj) in k.iter().enumerate() {
                if A[stage][j] != 0.0 {
                    y += kj * (h * A[stage][j]);
                }
            }
            y
        };
        if stage == 6 {
            y5 = y.clone();
        }
        k.push(a * y);
    }
    let mut err = 0.0;
    for idx in 0..n * n {
        let mut e = 0.0;
        for (j, kj) in k.iter().enumerate() {
            e += E[j] * kj[idx];
        }
        let sc = tol * (1.0 + eye[idx].abs().max(y5[idx].abs()));
        let r = h * e / sc;
        err += r * r;
    }
    Ok((y5, libm::sqrt(err / (n * n) as f64)))
}

fn max_step(t: f64) -> f64 {
    0.25 * (1.0 + t.abs())
}

/// Adaptive integration over `[a, b]` (either direction), calling `on_step(t0, t1, Φ(t1,t0))`
/// for every accepted step. Breakpoints are never stepped across.
fn drive<F>(sys: &LinearSystem, a: f64, b: f64, tol: f64, extra: &[f64], mut on_step: F) -> Result<IntegratorStats>
where
    F: FnMut(f64, f64, DMatrix<f64>) -> Result<()>,
{
    let mut stats = IntegratorStats::default();
    if a == b {
        return Ok(stats);
    }
    let dir = if b > a { 1.0 } else { -1.0 };
    let mut stops: Vec<f64> = sys
        .breakpoints()
        .iter()
        .chain(extra)
        .copied()
        .filter(|&p| (p - a) * dir > 1e-12 * (1.0 + a.abs()) && (b - p) * dir > 1e-12 * (1.0 + b.abs()))
        .collect();
    stops.sort_by(|x, y| if dir > 0.0 { x.total_cmp(y) } else { y.total_cmp(x) });
    // stops closer than the step floor would underflow; keep the first of each cluster
    stops.dedup_by(|x, y| (*x - *y).abs() <= 1e-12 * (1.0 + y.abs()));
    stops.push(b);
    let mut t = a;
    let mut h = (0.01 * (1.0 + a.abs())).min((b - a).abs());
    for &stop in &stops {
        while (stop - t) * dir > 0.0 {
            let remaining = (stop - t).abs();
            if remaining <= 1e-12 * (1.0 + t.abs()) {
                // below the step floor: one Euler step is exact to rounding
                let n = sys.dimension();
                let step = DMatrix::identity(n, n) + sys.coeff(t) * (stop - t);
                on_step(t, stop, step)?;
                stats.accepted += 1;
                t = stop;
                continue;
            }
            let mut hh = h.min(max_step(t)).min(remaining);
            let last = hh >= remaining * (1.0 - 1e-12);
            if last {
                hh = remaining;
            }
            if hh < 1e-13 * (1.0 + t.abs()) {
                return Err(Error::StepUnderflow { t });
            }
            let (step, err) = dp_step(sys, t, dir * hh, tol)?;
            if err <= 1.0 {
                let t1 = if last { stop } else { t + dir * hh };
                on_step(t, t1, step)?;
                stats.accepted += 1;
                stats.max_local_error = stats.max_local_error.max(err * tol);
                t = t1;
                let grow = if err == 0.0 { 5.0 } else { (0.9 * libm::pow(err, -0.2)).clamp(0.2, 5.0) };
                h = if last { h.max(hh) } else { hh * grow };
            } else {
                stats.rejected += 1;
                h = hh * (0.9 * libm::pow(err, -0.2)).clamp(0.2, 1.0);
            }
        }
    }
    Ok(stats)
}

fn check_tol(tol: f64) -> Result<()> {
    if (1e-12..=1e-3).contains(&tol) {
        Ok(())
    } else {
        Err(Error::InvalidTolerance(tol))
    }
}

/// `Φ(b, a)` by one-shot adaptive integration (no stored grid).
pub fn integrate_span(sys: &LinearSystem, a: f64, b: f64, tol: f64) -> Result<ScaledMatrix> {
    check_tol(tol)?;
    let mut acc = ScaledMatrix::identity(sys.dimension());
    drive(sys, a, b, tol, &[], |_, _, step| {
        acc = ScaledMatrix::new(step).mul(&acc);
        Ok(())
    })?;
    Ok(acc)
}

/// Per-step transition matrices on a strictly increasing time grid.
#[derive(Debug, Clone)]
pub struct PropagatorGrid {
    system: LinearSystem,
    times: Vec<f64>,
    steps: Vec<ScaledMatrix>,
    inv_steps: Vec<ScaledMatrix>,
    stats: IntegratorStats,
    tol: f64,
}

/// Integrates `system` over `[t_min, t_max]`. On the full line `t = 0` is always a node.
pub fn integrate(system: &LinearSystem, t_min: f64, t_max: f64, tol: f64) -> Result<PropagatorGrid> {
    integrate_with_stops(system, t_min, t_max, tol, &[])
}

/// Like [`integrate`], but additionally forces `nodes` grid nodes spaced uniformly in `log μ`,
/// so that envelopes are resolved even where the adaptive steps are long.
pub fn integrate_dense(
    system: &LinearSystem,
    rate: &GrowthRate,
    t_min: f64,
    t_max: f64,
    tol: f64,
    nodes: usize,
) -> Result<PropagatorGrid> {
    rate.check_interval(t_min, t_max)?;
    let (l0, l1) = (rate.lm(t_min), rate.lm(t_max));
    let stops: Vec<f64> = (1..nodes.max(1))
        .map(|i| rate.time_at_log_mu(l0 + (l1 - l0) * i as f64 / nodes as f64, t_min, t_max))
        .collect();
    integrate_with_stops(system, t_min, t_max, tol, &stops)
}

fn integrate_with_stops(system: &LinearSystem, t_min: f64, t_max: f64, tol: f64, stops: &[f64]) -> Result<PropagatorGrid> {
    check_tol(tol)?;
    system.check_interval(t_min, t_max)?;
    let mut times = Vec::new();
    let mut steps = Vec::new();
    let mut inv_steps = Vec::new();
    times.push(t_min);
    let mut extra = alloc::vec![0.0];
    extra.extend(stops.iter().filter(|&&t| (t - 0.0).abs() > 1e-9 && (t - t_min) > 1e-9 * (1.0 + t.abs()) && (t_max - t) > 1e-9 * (1.0 + t.abs())));
    let stats = drive(system, t_min, t_max, tol, &extra, |t0, t1, step| {
        let inv = lu_inverse(&step).ok_or(Error::SingularStep { t0, t1, rcond: 0.0 })?;
        let rc = rcond_1(&step, &inv);
        if !(rc > 1e-13) {
            return Err(Error::SingularStep { t0, t1, rcond: rc });
        }
        times.push(t1);
        steps.push(ScaledMatrix::new(step));
        inv_steps.push(ScaledMatrix::new(inv));
        Ok(())
    })?;
    Ok(PropagatorGrid { system: system.clone(), times, steps, inv_steps, stats, tol })
}

impl PropagatorGrid {
    /// A grid whose steps come from the system's closed form.
    pub fn from_closed_form(system: &LinearSystem, times: Vec<f64>) -> Result<Self> {
        if times.len() < 2 || times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidHorizon {
                t_min: times.first().copied().unwrap_or(f64::NAN),
                t_max: times.last().copied().unwrap_or(f64::NAN),
                reason: "need at least two strictly increasing times".into(),
            });
        }
        system.check_interval(times[0], times[times.len() - 1])?;
        let mut steps = Vec::new();
        let mut inv_steps = Vec::new();
        for w in times.windows(2) {
            let fwd = system.closed_form(w[1], w[0]).ok_or_else(|| Error::Numerical(
                alloc::format!("system `{}` has no closed form", system.name()),
            ))?;
            let bwd = system.closed_form(w[0], w[1]).expect("closed form present");
            steps.push(fwd);
            inv_steps.push(bwd);
        }
        Ok(PropagatorGrid {
            system: system.clone(),
            times,
            steps,
            inv_steps,
            stats: IntegratorStats::default(),
            tol: DEFAULT_TOL,
        })
    }

    pub fn system(&self) -> &LinearSystem {
        &self.system
    }

    pub fn dimension(&self) -> usize {
        self.system.dimension()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    /// `steps[i] = Φ(t_{i+1}, t_i)`.
    pub fn steps(&self) -> &[ScaledMatrix] {
        &self.steps
    }

    /// `inv_steps[i] = Φ(t_i, t_{i+1})`.
    pub fn inv_steps(&self) -> &[ScaledMatrix] {
        &self.inv_steps
    }

    pub fn stats(&self) -> IntegratorStats {
        self.stats
    }

    pub fn tol(&self) -> f64 {
        self.tol
    }

    pub fn t_min(&self) -> f64 {
        self.times[0]
    }

    pub fn t_max(&self) -> f64 {
        self.times[self.times.len() - 1]
    }

    fn check(&self, t: f64) -> Result<()> {
        if t >= self.t_min() && t <= self.t_max() {
            Ok(())
        } else {
            Err(Error::OutOfRange { t, lo: self.t_min(), hi: self.t_max() })
        }
    }

    /// Index of the node equal to `t`, if any.
    pub fn node_index(&self, t: f64) -> Option<usize> {
        self.times.binary_search_by(|x| x.total_cmp(&t)).ok()
    }

    /// Largest `i` with `times[i] <= t`.
    pub fn floor_index(&self, t: f64) -> usize {
        match self.times.binary_search_by(|x| x.total_cmp(&t)) {
            Ok(i) => i,
            Err(i) => i.saturating_sub(1),
        }
    }

    /// Smallest `i` with `times[i] >= t`.
    pub fn ceil_index(&self, t: f64) -> usize {
        match self.times.binary_search_by(|x| x.total_cmp(&t)) {
            Ok(i) => i,
            Err(i) => i.min(self.times.len() - 1),
        }
    }

    /// `Φ(b, a)` for times within one grid cell, by integrating the partial step.
    pub fn partial(&self, b: f64, a: f64) -> Result<ScaledMatrix> {
        integrate_span(&self.system, a, b, self.tol)
    }

    /// `Φ(t_j, t_i)` between nodes.
    pub fn phi_nodes(&self, j: usize, i: usize) -> ScaledMatrix {
        let mut m = ScaledMatrix::identity(self.dimension());
        if j >= i {
            for k in i..j {
                m = self.steps[k].mul(&m);
            }
        } else {
            for k in (j..i).rev() {
                m = self.inv_steps[k].mul(&m);
            }
        }
        m
    }

    /// `Φ(t, s)`; off-node ends are resolved by integrating the partial steps.
    pub fn phi(&self, t: f64, s: f64) -> Result<ScaledMatrix> {
        self.check(t)?;
        self.check(s)?;
        if t == s {
            return Ok(ScaledMatrix::identity(self.dimension()));
        }
        let (a, b) = if t > s {
            (self.ceil_index(s), self.floor_index(t))
        } else {
            (self.floor_index(s), self.ceil_index(t))
        };
        if (t > s && a > b) || (t < s && a < b) {
            return self.partial(t, s);
        }
        let mut m = if self.times[a] == s {
            ScaledMatrix::identity(self.dimension())
        } else {
            self.partial(self.times[a], s)?
        };
        m = self.phi_nodes(b, a).mul(&m);
        if self.times[b] != t {
            m = self.partial(t, self.times[b])?.mul(&m);
        }
        Ok(m)
    }
}

/// `(μ(t)/μ(s))^{-γ} Φ(t, s)` from the unshifted grid; never re-integrates.
pub fn phi_shifted(grid: &PropagatorGrid, rate: &GrowthRate, gamma: f64, t: f64, s: f64) -> Result<ScaledMatrix> {
    let d = rate.log_mu(t)? - rate.log_mu(s)?;
    Ok(grid.phi(t, s)?.scale_log(-gamma * d))
}

/// `Φ(t, s)` (module-level form of [`PropagatorGrid::phi`]).
pub fn phi(grid: &PropagatorGrid, t: f64, s: f64) -> Result<ScaledMatrix> {
    grid.phi(t, s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use crate::growth::{builtin_rate, Domain};
    use crate::params::Params;
    use crate::system::{constant, triangular_halfline};

    #[test]
    fn diagonal_constant_is_exact() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        let g = integrate(&constant("c", a, Domain::FullLine), 0.0, 2.0, 1e-10).unwrap();
        let phi = g.phi(2.0, 0.0).unwrap().to_matrix();
        assert!((phi[(0, 0)] / libm::exp(2.0) - 1.0).abs() < 1e-8);
        assert!((phi[(1, 1)] / libm::exp(-2.0) - 1.0).abs() < 1e-8);
        assert_eq!(phi[(0, 1)], 0.0);
    }

    #[test]
    fn zero_system_steps_are_identity() {
        let g = integrate(&constant("z", DMatrix::zeros(2, 2), Domain::FullLine), -3.0, 3.0, 1e-9).unwrap();
        for s in g.steps() {
            assert_eq!(s.log_scale(), 0.0);
            assert_eq!(s.body(), &DMatrix::identity(2, 2));
        }
    }

    #[test]
    fn triangular_matches_closed_form() {
        let sys = triangular_halfline();
        let g = integrate(&sys, 0.0, 10.0, 1e-9).unwrap();
        for &(t, s) in &[(3.0, 0.0), (10.0, 0.5), (0.2, 7.3), (6.1, 6.05)] {
            let got = g.phi(t, s).unwrap();
            let want = sys.closed_form(t, s).unwrap();
            assert!(got.relative_distance(&want) < 1e-6, "({t},{s})");
        }
        let phi = g.phi(3.0, 0.0).unwrap().to_matrix();
        assert!((phi[(0, 0)] - 0.6065).abs() < 1e-4 && (phi[(1, 1)] - 1.6487).abs() < 1e-4);
    }

    #[test]
    fn identity_and_inverse() {
        let g = integrate(&triangular_halfline(), 0.0, 5.0, 1e-9).unwrap();
        let id = g.phi(2.5, 2.5).unwrap();
        assert_eq!(id.log_scale(), 0.0);
        let p = g.phi(4.2, 0.7).unwrap().mul(&g.phi(0.7, 4.2).unwrap());
        assert!(p.relative_distance(&ScaledMatrix::identity(2)) < 1e-8);
        assert!(g.phi(6.0, 0.0).is_err());
    }

    #[test]
    fn shifted_diagonal() {
        let a = DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, 1.0]);
        let rate = builtin_rate("exponential", &Params::default()).unwrap();
        let sys = constant("c", a, Domain::FullLine);
        let want = ScaledMatrix::new(DMatrix::from_row_slice(2, 2, &[libm::exp(-4.0), 0.0, 0.0, 1.0]));
        let exact = PropagatorGrid::from_closed_form(&sys, vec![0.0, 0.5, 1.0, 2.0]).unwrap();
        let m = phi_shifted(&exact, &rate, 1.0, 2.0, 0.0).unwrap();
        assert!(m.relative_distance(&want) < 1e-10);
        let g = integrate(&sys, 0.0, 2.0, 1e-10).unwrap();
        let m = phi_shifted(&g, &rate, 1.0, 2.0, 0.0).unwrap();
        assert!(m.relative_distance(&g.phi(2.0, 0.0).unwrap().scale_log(-2.0)) < 1e-15);
        assert!(m.relative_distance(&want) < 1e-8);
        let same = phi_shifted(&g, &rate, 0.0, 2.0, 0.0).unwrap();
        assert_eq!(same, g.phi(2.0, 0.0).unwrap());
    }

    #[test]
    fn rejects_bad_tolerance_and_horizon() {
        let sys = triangular_halfline();
        assert!(matches!(integrate(&sys, 0.0, 1.0, 1e-2), Err(Error::InvalidTolerance(_))));
        assert!(integrate(&sys, -1.0, 1.0, 1e-9).is_err());
    }

    #[test]
    fn deterministic() {
        let sys = triangular_halfline();
        let a = integrate(&sys, 0.0, 20.0, 1e-9).unwrap();
        let b = integrate(&sys, 0.0, 20.0, 1e-9).unwrap();
        assert_eq!(a.times(), b.times());
        assert_eq!(a.steps(), b.steps());
    }
}
