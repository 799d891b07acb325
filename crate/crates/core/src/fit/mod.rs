//! Least-squares fit of a series R-L equivalent to a measured `Y_qd` spectrum.

mod compliance;
mod simplex;

pub use compliance::{
    check_compliance, ComplianceReport, ComplianceTable, Location, ReactanceRange,
};

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytic::thevenin_yqd;
use crate::error::{Error, Result};
use crate::model::{
    spectrum_resonance, AdmittanceEntry, AdmittancePoint, AdmittanceSpectrum, PerUnitBase,
    Resonance, TheveninEquivalent,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    pub bounds_r: [f64; 2],
    pub bounds_l: [f64; 2],
    /// Starts per axis; starts sit at the centres of an n×n grid of cells.
    pub multistart_grid: usize,
    pub param_tol: f64,
    pub max_iter: usize,
    pub max_error_threshold_eps: f64,
    /// Apply the `1/(2πf)` weight. Off gives a flat relative-magnitude fit.
    pub weighted: bool,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            bounds_r: [1e-5, 0.5],
            bounds_l: [0.05, 1.0],
            multistart_grid: 4,
            param_tol: 1e-7,
            max_iter: 4000,
            max_error_threshold_eps: 0.01,
            weighted: true,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        let [r0, r1] = self.bounds_r;
        if !(r0 >= 0.0 && r1 > r0 && r1.is_finite()) {
            return Err(Error::domain(
                "bounds_r",
                format!("need 0 <= min < max, got [{r0}, {r1}]"),
            ));
        }
        let [l0, l1] = self.bounds_l;
        if !(l0 > 0.0 && l1 > l0 && l1.is_finite()) {
            return Err(Error::domain(
                "bounds_l",
                format!("need 0 < min < max, got [{l0}, {l1}]"),
            ));
        }
        if self.multistart_grid == 0 {
            return Err(Error::domain("multistart_grid", "must be >= 1"));
        }
        if !(self.param_tol > 0.0) {
            return Err(Error::domain(
                "param_tol",
                format!("must be > 0, got {}", self.param_tol),
            ));
        }
        if self.max_iter == 0 {
            return Err(Error::domain("max_iter", "must be >= 1"));
        }
        if !(self.max_error_threshold_eps > 0.0) {
            return Err(Error::domain(
                "max_error_threshold_eps",
                format!("must be > 0, got {}", self.max_error_threshold_eps),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FitFlags {
    /// Best solution lies on a parameter bound.
    pub boundary_solution: bool,
    /// Resistance driven to its lower bound: the measured response has no
    /// visible damping.
    pub undamped_resonance: bool,
    /// No start met the simplex tolerance within `max_iter`.
    pub not_converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub equivalent: TheveninEquivalent,
    pub resonance: Resonance,
    pub flags: FitFlags,
    pub starts: usize,
    pub iterations: usize,
}

impl FitResult {
    pub fn within_eps(&self, eps: f64) -> bool {
        self.equivalent.rms_error <= eps
    }
}

/// Weighted relative-magnitude RMS between `Y_qd` of an `(r, l)` equivalent
/// and measured samples `(f, Y_qd)`.
pub fn objective(r: f64, l: f64, f1: f64, samples: &[(f64, Complex64)], weighted: bool) -> f64 {
    let mut acc = 0.0;
    for &(f, y) in samples {
        let m = y.norm();
        let e = (thevenin_yqd(r, l, f1, f).norm() - m) / m;
        let w = if weighted { 1.0 / (2.0 * PI * f) } else { 1.0 };
        acc += w * e * e;
    }
    acc.sqrt()
}

fn samples_of(spec: &AdmittanceSpectrum) -> Result<Vec<(f64, Complex64)>> {
    let ys = spec.entry_values(AdmittanceEntry::Qd)?;
    let out: Vec<_> = spec.frequencies().into_iter().zip(ys).collect();
    if out.len() < 3 {
        return Err(Error::Spectrum(format!(
            "fit needs at least 3 points, got {}",
            out.len()
        )));
    }
    if let Some((f, _)) = out
        .iter()
        .find(|(_, y)| !(y.norm() > 0.0) || !y.norm().is_finite())
    {
        return Err(Error::Spectrum(format!(
            "Y_qd at {f} Hz is zero or not finite"
        )));
    }
    Ok(out)
}

/// Fits `Y_qd` of the spectrum. Starts run in parallel; the winner is the
/// lowest objective, ties broken by lower `r`, then lower `l`.
pub fn fit(spec: &AdmittanceSpectrum, cfg: &FitConfig) -> Result<FitResult> {
    cfg.validate()?;
    let samples = samples_of(spec)?;
    let f1 = spec.base.f1;
    let weighted = cfg.weighted;
    let obj = move |p: [f64; 2]| objective(p[0], p[1], f1, &samples, weighted);
    let nm = simplex::Bounded {
        lo: [cfg.bounds_r[0], cfg.bounds_l[0]],
        hi: [cfg.bounds_r[1], cfg.bounds_l[1]],
        f: &obj,
    };
    let n = cfg.multistart_grid;
    let h = 1.0 / n as f64;
    let starts: Vec<[f64; 2]> = (0..n * n)
        .map(|k| [((k / n) as f64 + 0.5) * h, ((k % n) as f64 + 0.5) * h])
        .collect();
    let step = [0.5 * h, 0.5 * h];
    let outcomes: Vec<_> = starts
        .par_iter()
        .map(|&s| nm.minimize(s, step, cfg.param_tol, cfg.max_iter))
        .collect();
    let iterations = outcomes.iter().map(|o| o.iterations).sum();
    let any_converged = outcomes.iter().any(|o| o.converged);
    let best = outcomes
        .into_iter()
        .min_by(|a, b| {
            a.fx.total_cmp(&b.fx)
                .then(a.x[0].total_cmp(&b.x[0]))
                .then(a.x[1].total_cmp(&b.x[1]))
        })
        .ok_or_else(|| Error::Spectrum("no fit starts".into()))?;
    if !best.fx.is_finite() {
        return Err(Error::Spectrum(
            "objective is not finite anywhere in the bounds".into(),
        ));
    }
    let [r, l] = best.x;
    let on = |v: f64, lo: f64, hi: f64| {
        (v - lo).abs() <= cfg.param_tol || (hi - v).abs() <= cfg.param_tol
    };
    let flags = FitFlags {
        boundary_solution: on(r, cfg.bounds_r[0], cfg.bounds_r[1])
            || on(l, cfg.bounds_l[0], cfg.bounds_l[1]),
        undamped_resonance: (r - cfg.bounds_r[0]).abs() <= cfg.param_tol,
        not_converged: !any_converged,
    };
    let resonance = spectrum_resonance(spec, AdmittanceEntry::Qd)?;
    Ok(FitResult {
        equivalent: TheveninEquivalent::new(r, l, best.fx, resonance.f_hz)?,
        resonance,
        flags,
        starts: n * n,
        iterations,
    })
}

/// Fits unordered `(f, Y_qd)` samples; they are sorted by frequency first.
pub fn fit_samples(
    samples: &[(f64, Complex64)],
    base: PerUnitBase,
    cfg: &FitConfig,
) -> Result<FitResult> {
    let mut s = samples.to_vec();
    s.sort_by(|a, b| a.0.total_cmp(&b.0));
    let pts = s
        .into_iter()
        .map(|(f, y)| AdmittancePoint::qd_only(f, y))
        .collect();
    fit(&AdmittanceSpectrum::new(base, pts)?, cfg)
}
