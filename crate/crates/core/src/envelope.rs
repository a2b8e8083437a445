//! Upper envelopes of `(x, y) = (log-μ offset, log-norm)` clouds and the
//! two-stage fit of `y ≤ log K + c·x + ρ·w(s)` against them.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::ls_fit;

/// Fewest distinct `s` values a fit accepts.
pub const MIN_S_SAMPLES: usize = 30;

/// A sampled point of one sweep; `t` is kept for plotting.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Vertex {
    pub x: f64,
    pub y: f64,
    pub t: f64,
}

/// Upper convex hull built from points with nondecreasing `x`.
#[derive(Debug, Clone, Default)]
pub struct UpperHull {
    pts: Vec<Vertex>,
}

impl UpperHull {
    pub fn push(&mut self, v: Vertex) {
        if let Some(last) = self.pts.last() {
            if v.x <= last.x {
                if v.y <= last.y {
                    return;
                }
                self.pts.pop();
            }
        }
        while self.pts.len() >= 2 {
            let a = self.pts[self.pts.len() - 2];
            let b = self.pts[self.pts.len() - 1];
            // drop b when it is on or below the chord a -> v
            if (b.y - a.y) * (v.x - a.x) <= (v.y - a.y) * (b.x - a.x) {
                self.pts.pop();
            } else {
                break;
            }
        }
        self.pts.push(v);
    }

    pub fn vertices(&self) -> &[Vertex] {
        &self.pts
    }

    pub fn is_empty(&self) -> bool {
        self.pts.is_empty()
    }

    /// The vertex maximizing `y - c·x` and that value. Every sampled point obeys the same bound.
    pub fn max_tilted(&self, c: f64) -> Option<(Vertex, f64)> {
        let mut best: Option<(Vertex, f64)> = None;
        for v in &self.pts {
            let val = v.y - c * v.x;
            if best.is_none_or(|b| val > b.1) {
                best = Some((*v, val));
            }
        }
        best
    }
}

/// All sweeps from one start time `s`: windowed hulls over `x ∈ [0, span]` plus the overall hull.
#[derive(Debug, Clone)]
pub struct Cloud {
    pub s: f64,
    /// Nonuniformity weight of `s`.
    pub w: f64,
    pub span: f64,
    windows: Vec<UpperHull>,
    hull: UpperHull,
}

impl Cloud {
    pub fn new(s: f64, w: f64, span: f64, windows: usize) -> Self {
        Cloud { s, w, span, windows: (0..windows.max(1)).map(|_| UpperHull::default()).collect(), hull: UpperHull::default() }
    }

    /// Adds a point; `x` must not decrease between calls.
    pub fn add(&mut self, x: f64, y: f64, t: f64) {
        let nw = self.windows.len();
        let idx = if self.span > 0.0 { ((x / self.span) * nw as f64) as usize } else { 0 };
        let v = Vertex { x, y, t };
        self.windows[idx.min(nw - 1)].push(v);
        self.hull.push(v);
    }

    pub fn hull(&self) -> &UpperHull {
        &self.hull
    }

    pub fn windows(&self) -> &[UpperHull] {
        &self.windows
    }

    /// `max (y - (tilt + c)·x)` over the cloud.
    pub fn excess(&self, tilt: f64, c: f64) -> f64 {
        self.hull.max_tilted(tilt + c).map_or(f64::NEG_INFINITY, |b| b.1)
    }
}

/// Upper hull of points sorted by `x`, keeping collinear points. Window maxima
/// that miss every peak of an oscillation fall strictly below it and drop out.
fn upper_chain(pts: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut out: Vec<(f64, f64)> = Vec::with_capacity(pts.len());
    for &p in pts {
        while out.len() >= 2 {
            let a = out[out.len() - 2];
            let b = out[out.len() - 1];
            let scale = (a.1.abs() + b.1.abs() + p.1.abs()) * 1e-12;
            if (b.1 - a.1) * (p.0 - a.0) < (p.1 - a.1) * (b.0 - a.0) - scale {
                out.pop();
            } else {
                break;
            }
        }
        out.push(p);
    }
    out
}

/// Result of the two-stage envelope fit of one side.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SideFit {
    /// Fitted exponent in `x`.
    pub slope: f64,
    /// Fitted weight coefficient before clamping at zero.
    pub rho_raw: f64,
    /// Weight coefficient used in the bound.
    pub rho: f64,
    pub log_k: f64,
    /// Worst excess of a sampled log-norm over the fitted bound.
    pub max_violation: f64,
}

/// Fits `y - tilt·x ≤ log K + slope·x + rho·w(s)` to a set of clouds.
///
/// Stage one takes, per long enough sweep, the least-squares slope through
/// the window maxima (skipping the first window, which is dominated by the
/// transient) and keeps the largest. Stage two regresses the remaining
/// excess against the weight `w(s)` through its windowed maxima.
pub fn fit_side(clouds: &[Cloud], tilt: f64, weight_windows: usize, clamp_rho_to_zero: bool) -> Result<SideFit> {
    if clouds.len() < MIN_S_SAMPLES {
        return Err(Error::InsufficientSamples(alloc::format!(
            "{} start times, need at least {MIN_S_SAMPLES}",
            clouds.len()
        )));
    }
    let max_span = clouds.iter().map(|c| c.span).fold(0.0, f64::max);
    let mut slope = f64::NEG_INFINITY;
    for cl in clouds.iter().filter(|c| c.span >= 0.7 * max_span) {
        let maxima: Vec<(f64, f64)> = cl.windows[1..]
            .iter()
            .filter_map(|h| h.max_tilted(tilt))
            .map(|(v, val)| (v.x, val))
            .collect();
        if maxima.len() < 3 {
            continue;
        }
        let pts = upper_chain(&maxima);
        if let Some((m, _)) = ls_fit(&pts) {
            slope = slope.max(m);
        }
    }
    if !slope.is_finite() {
        return Err(Error::DegenerateEnvelope);
    }

    let excess: Vec<(f64, f64)> = clouds.iter().map(|c| (c.w, c.excess(tilt, slope))).collect();
    let w_lo = excess.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let w_hi = excess.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    let nw = weight_windows.max(2);
    let mut peaks: Vec<Option<(f64, f64)>> = alloc::vec![None; nw];
    if w_hi > w_lo {
        for &(w, e) in &excess {
            let idx = (((w - w_lo) / (w_hi - w_lo)) * nw as f64) as usize;
            let slot = &mut peaks[idx.min(nw - 1)];
            if slot.is_none_or(|p| e > p.1) {
                *slot = Some((w, e));
            }
        }
    }
    let peaks: Vec<(f64, f64)> = peaks.into_iter().flatten().collect();
    let rho_raw = ls_fit(&peaks).map_or(0.0, |f| f.0);
    let rho = if clamp_rho_to_zero { 0.0 } else { rho_raw.max(0.0) };
    let log_k = excess.iter().map(|&(w, e)| e - rho * w).fold(f64::NEG_INFINITY, f64::max);
    let max_violation = excess.iter().map(|&(w, e)| e - rho * w - log_k).fold(f64::NEG_INFINITY, f64::max);
    Ok(SideFit { slope, rho_raw, rho, log_k, max_violation })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hull_keeps_only_upper_vertices() {
        let mut h = UpperHull::default();
        for (x, y) in [(0.0, 0.0), (1.0, -1.0), (2.0, 3.0), (3.0, 1.0), (4.0, 0.5), (4.0, 0.2)] {
            h.push(Vertex { x, y, t: x });
        }
        let xs: Vec<f64> = h.vertices().iter().map(|v| v.x).collect();
        // (3, 1) sits below the chord (2, 3) -> (4, 0.5)
        assert_eq!(xs, alloc::vec![0.0, 2.0, 4.0]);
        let (v, val) = h.max_tilted(1.0).unwrap();
        assert_eq!((v.x, val), (2.0, 1.0));
    }

    #[test]
    fn recovers_linear_bound() {
        // y = -1.5 x + 0.4 w(s) exactly, 40 sweeps
        let clouds: Vec<Cloud> = (0..40)
            .map(|i| {
                let w = i as f64 * 0.25;
                let mut c = Cloud::new(i as f64, w, 10.0, 12);
                for j in 0..=100 {
                    let x = j as f64 * 0.1;
                    c.add(x, -1.5 * x + 0.4 * w, x);
                }
                c
            })
            .collect();
        let f = fit_side(&clouds, 0.0, 8, false).unwrap();
        assert!((f.slope + 1.5).abs() < 1e-9);
        assert!((f.rho - 0.4).abs() < 1e-9);
        assert!(f.log_k.abs() < 1e-9 && f.max_violation <= 0.0);
        let tilted = fit_side(&clouds, 0.5, 8, false).unwrap();
        assert!((tilted.slope + 2.0).abs() < 1e-9);
        let uniform = fit_side(&clouds, 0.0, 8, true).unwrap();
        assert_eq!(uniform.rho, 0.0);
        assert!((uniform.rho_raw - 0.4).abs() < 1e-9);
        assert!(fit_side(&clouds[..10], 0.0, 8, false).is_err());
    }
}
