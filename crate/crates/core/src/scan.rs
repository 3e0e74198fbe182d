//! Compactified t-grid sampling of a PSD margin, with refinement and bisection.
//!
//! The grid is uniform in s ∈ [0, s_cap] with t = s/(1−s) and
//! s_cap = t_cap/(1+t_cap).

use crate::config::ToleranceConfig;
use crate::error::{Error, Result};
use crate::linalg::PsdCheck;

/// Relative margin under which a local minimum of the trace is refined.
const DIP_MARGIN: f64 = 1e-2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MinEigSample {
    pub t: f64,
    pub min_eig: f64,
    /// Floor applied at this sample, `eig_floor·(1+‖C‖)`.
    pub floor: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridMeta {
    pub grid_points: usize,
    pub refine_depth: usize,
    pub t_cap: f64,
    /// Points added by refinement.
    pub refined_points: usize,
    /// Points beyond t_cap sampled because the limit check could not close the grid.
    pub extended_t: Vec<f64>,
    /// Points skipped by the condition-number guard.
    pub skipped_t: Vec<f64>,
}

#[derive(Debug, Clone)]
pub(crate) struct Sample {
    pub s: f64,
    pub t: f64,
    pub check: std::result::Result<PsdCheck, Error>,
}

pub(crate) fn t_of(s: f64) -> f64 {
    s / (1.0 - s)
}

/// Noise level of a symmetric eigen-solve on a `dim`×`dim` matrix of norm `norm`.
pub(crate) fn noise_floor(norm: f64, dim: usize) -> f64 {
    16.0 * dim.max(1) as f64 * f64::EPSILON * (1.0 + norm)
}

pub(crate) fn violates_floor(c: &PsdCheck) -> bool {
    !c.psd
}

pub(crate) struct Scan {
    pub samples: Vec<Sample>,
    pub refined: usize,
}

impl Scan {
    pub fn trace(&self) -> Vec<MinEigSample> {
        self.samples
            .iter()
            .filter_map(|s| {
                s.check.as_ref().ok().map(|c| MinEigSample { t: s.t, min_eig: c.min_eigenvalue, floor: c.floor })
            })
            .collect()
    }

    pub fn skipped(&self) -> Vec<f64> {
        self.samples.iter().filter(|s| s.check.is_err()).map(|s| s.t).collect()
    }

    pub fn meta(&self, cfg: &ToleranceConfig, extended_t: Vec<f64>) -> GridMeta {
        GridMeta {
            grid_points: cfg.grid_points,
            refine_depth: cfg.refine_depth,
            t_cap: cfg.t_cap,
            refined_points: self.refined,
            extended_t,
            skipped_t: self.skipped(),
        }
    }

    /// First sample (in t order) satisfying `pred`, with the last valid sample
    /// before it not satisfying `pred`.
    pub fn first_crossing<P: Fn(&PsdCheck) -> bool>(&self, pred: P) -> Option<(Option<f64>, f64)> {
        let mut last_ok: Option<f64> = None;
        for s in &self.samples {
            if let Ok(c) = &s.check {
                if pred(c) {
                    return Some((last_ok, s.t));
                }
                last_ok = Some(s.t);
            }
        }
        None
    }
}

pub(crate) fn run_scan<F>(f: &F, cfg: &ToleranceConfig, dim: usize) -> Scan
where
    F: Fn(f64) -> Result<PsdCheck>,
{
    let g = cfg.grid_points.max(2);
    let s_cap = cfg.t_cap / (1.0 + cfg.t_cap);
    let eval = |s: f64| {
        let t = t_of(s);
        Sample { s, t, check: f(t) }
    };
    let mut samples: Vec<Sample> =
        (0..g).map(|k| eval(s_cap * k as f64 / (g - 1) as f64)).collect();
    let mut refined = 0;
    for _ in 0..cfg.refine_depth {
        let mids = refinement_points(&samples, dim);
        if mids.is_empty() {
            break;
        }
        refined += mids.len();
        samples.extend(mids.into_iter().map(eval));
        samples.sort_by(|a, b| a.s.total_cmp(&b.s));
    }
    Scan { samples, refined }
}

/// Midpoints (in s) of intervals that bracket a floor sign change or touch a
/// pronounced local minimum of the min-eigenvalue trace.
fn refinement_points(samples: &[Sample], dim: usize) -> Vec<f64> {
    let valid: Vec<(f64, PsdCheck)> =
        samples.iter().filter_map(|s| s.check.as_ref().ok().map(|c| (s.s, *c))).collect();
    let mut intervals: Vec<(f64, f64)> = Vec::new();
    for w in valid.windows(2) {
        if violates_floor(&w[0].1) != violates_floor(&w[1].1) {
            intervals.push((w[0].0, w[1].0));
        }
    }
    for k in 1..valid.len().saturating_sub(1) {
        let (prev, cur, next) = (&valid[k - 1].1, &valid[k].1, &valid[k + 1].1);
        let noise = noise_floor(cur.norm, dim);
        let dip = cur.min_eigenvalue < prev.min_eigenvalue - noise
            && cur.min_eigenvalue < next.min_eigenvalue - noise;
        let near = cur.min_eigenvalue < DIP_MARGIN * (1.0 + cur.norm);
        if dip && near {
            intervals.push((valid[k - 1].0, valid[k].0));
            intervals.push((valid[k].0, valid[k + 1].0));
        }
    }
    let mut mids: Vec<f64> = intervals.iter().map(|(a, b)| 0.5 * (a + b)).collect();
    mids.sort_by(f64::total_cmp);
    mids.dedup_by(|a, b| (*a - *b).abs() < 1e-15);
    mids
}

/// Bisection in t on `pred`, assuming `pred` is false at `lo` and true at `hi`.
/// Returns the final bracket.
pub(crate) fn bisect<F, P>(f: &F, pred: P, mut lo: f64, mut hi: f64, tol: f64) -> (f64, f64)
where
    F: Fn(f64) -> Result<PsdCheck>,
    P: Fn(&PsdCheck) -> bool,
{
    let mut iterations = 0;
    while hi - lo > tol && iterations < 200 {
        iterations += 1;
        let mut mid = 0.5 * (lo + hi);
        let mut value = f(mid);
        if value.is_err() {
            mid = lo + 0.618 * (hi - lo);
            value = f(mid);
        }
        match value {
            Ok(c) if pred(&c) => hi = mid,
            _ => lo = mid,
        }
    }
    (lo, hi)
}

/// Sampling points t_cap·10^k used past the end of the grid.
pub(crate) fn extension_points(cfg: &ToleranceConfig, count: usize) -> Vec<f64> {
    (1..=count).map(|k| cfg.t_cap * 10f64.powi(k as i32)).collect()
}
