//! Small-signal dq admittance measurement by sinusoidal injection at the POI.

mod dft;
mod raw;

pub use dft::single_bin_dft;
pub use raw::{export_raw, import_trace_scan, ManifestEntry, RawManifest, MANIFEST_FILE};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::emt::{Axis, Injection, Integrator, MeasurementPoint, SimModel, Simulator, TimeSeries};
use crate::error::{Error, Result};
use crate::model::{AdmittancePoint, AdmittanceSpectrum};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Spacing {
    Log,
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScanConfig {
    pub f_min: f64,
    pub f_max: f64,
    pub n_points: usize,
    pub spacing: Spacing,
    /// Perturbation amplitude (pu).
    pub amplitude: f64,
    /// Periods of `f_k` discarded after the injection starts.
    pub settle_cycles: usize,
    /// Periods of `f_k` per measurement window.
    pub measure_periods: usize,
    /// Half-width of the excluded band around the fundamental (Hz).
    pub fundamental_guard: f64,
    /// Upper bound on the per-point step; the actual step divides the
    /// period exactly.
    pub dt_max: f64,
    pub integrator: Integrator,
    /// Relative change in Y between consecutive windows accepted as settled.
    pub settle_tol: f64,
    /// Injection time after which an unsettled point is accepted with a
    /// warning (s).
    pub max_settle_s: f64,
    /// Also inject on the q axis to measure `Y_dq` and `Y_qq`.
    pub q_axis: bool,
    pub parallel: bool,
}

impl Default for ScanConfig {
    fn default() -> Self {
        Self {
            f_min: 5.0,
            f_max: 100.0,
            n_points: 30,
            spacing: Spacing::Log,
            amplitude: 0.01,
            settle_cycles: 10,
            measure_periods: 10,
            fundamental_guard: 1.0,
            dt_max: 20e-6,
            integrator: Integrator::Trapezoidal,
            settle_tol: 1e-5,
            max_settle_s: 5.0,
            q_axis: false,
            parallel: true,
        }
    }
}

impl ScanConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.f_min > 0.0 && self.f_min < self.f_max && self.f_max.is_finite()) {
            return Err(Error::domain(
                "f_min",
                format!(
                    "need 0 < f_min < f_max, got [{}, {}]",
                    self.f_min, self.f_max
                ),
            ));
        }
        if self.n_points < 2 {
            return Err(Error::domain(
                "n_points",
                format!("must be >= 2, got {}", self.n_points),
            ));
        }
        if !(self.amplitude > 0.0 && self.amplitude <= 0.05) {
            return Err(Error::domain(
                "amplitude",
                format!("must be in (0, 0.05], got {}", self.amplitude),
            ));
        }
        if self.measure_periods < 5 {
            return Err(Error::domain(
                "measure_periods",
                format!("must be >= 5, got {}", self.measure_periods),
            ));
        }
        if !(self.fundamental_guard >= 0.0) {
            return Err(Error::domain("fundamental_guard", "must be >= 0"));
        }
        if !(self.dt_max > 0.0 && self.dt_max <= 100e-6) {
            return Err(Error::domain(
                "dt_max",
                format!("must be in (0, 100 µs], got {}", self.dt_max),
            ));
        }
        if !(self.settle_tol > 0.0) {
            return Err(Error::domain("settle_tol", "must be > 0"));
        }
        if !(self.max_settle_s > 0.0) {
            return Err(Error::domain("max_settle_s", "must be > 0"));
        }
        Ok(())
    }

    /// Requested frequency grid, before guarding.
    pub fn frequencies(&self) -> Vec<f64> {
        let n = self.n_points;
        (0..n)
            .map(|k| {
                let s = k as f64 / (n - 1) as f64;
                match self.spacing {
                    Spacing::Log => self.f_min * (self.f_max / self.f_min).powf(s),
                    Spacing::Linear => self.f_min + (self.f_max - self.f_min) * s,
                }
            })
            .collect()
    }

    /// Step and samples per period for `f_k`.
    pub fn step_for(&self, f_k: f64) -> (f64, usize) {
        let m = (1.0 / (f_k * self.dt_max)).ceil() as usize;
        (1.0 / (f_k * m as f64), m)
    }

    pub fn guarded(&self, f_k: f64, f1: f64) -> bool {
        (f_k - f1).abs() < self.fundamental_guard
    }
}

/// Response phasors at `f` for one injection axis.
#[derive(Debug, Clone, PartialEq)]
pub struct RawResponse {
    pub f: f64,
    pub injected_axis: Axis,
    /// Measured POI voltage on the injected axis.
    pub v_response: Complex64,
    pub i_d_response: Complex64,
    pub i_q_response: Complex64,
    pub dt: f64,
    /// Settling actually used before the accepted window (periods of `f`).
    pub settle_cycles: usize,
    pub warnings: Vec<String>,
    /// POI samples of the accepted window.
    pub window: TimeSeries,
}

impl RawResponse {
    /// `(Y_dd, Y_qd)` for a d-axis injection, `(Y_dq, Y_qq)` for q.
    pub fn admittance(&self) -> (Complex64, Complex64) {
        (
            -self.i_d_response / self.v_response,
            -self.i_q_response / self.v_response,
        )
    }
}

struct Bins {
    v: Complex64,
    i_d: Complex64,
    i_q: Complex64,
}

fn window_bins(ts: &TimeSeries, dt: f64, f: f64, axis: Axis) -> Result<Bins> {
    let poi = ts
        .channel(MeasurementPoint::Poi)
        .ok_or_else(|| Error::domain("window", "missing POI channel"))?;
    let v: Vec<f64> = poi
        .v
        .iter()
        .map(|v| match axis {
            Axis::D => v.d,
            Axis::Q => v.q,
        })
        .collect();
    let id: Vec<f64> = poi.i.iter().map(|i| i.d).collect();
    let iq: Vec<f64> = poi.i.iter().map(|i| i.q).collect();
    let bins = Bins {
        v: single_bin_dft(&v, dt, f)?,
        i_d: single_bin_dft(&id, dt, f)?,
        i_q: single_bin_dft(&iq, dt, f)?,
    };
    if bins.v.norm() == 0.0 {
        return Err(Error::domain(
            "window",
            format!("no voltage perturbation at {f} Hz"),
        ));
    }
    Ok(bins)
}

fn capture(sim: &mut Simulator, n: usize) -> Result<TimeSeries> {
    let mut ts = TimeSeries::with_points(&[MeasurementPoint::Poi]);
    for _ in 0..n {
        ts.record(sim.time(), &sim.probe());
        sim.step()?;
    }
    Ok(ts)
}

/// Injects `amplitude·cos(2π f_k t)` on `axis` of the grid source and
/// extracts the POI response once consecutive windows agree.
pub fn measure_column(
    model: &SimModel,
    f_k: f64,
    axis: Axis,
    cfg: &ScanConfig,
) -> Result<RawResponse> {
    cfg.validate()?;
    let f1 = model.base().f1;
    if !(f_k > 0.0) {
        return Err(Error::domain("f_k", format!("must be > 0, got {f_k}")));
    }
    if cfg.guarded(f_k, f1) {
        return Err(Error::domain(
            "f_k",
            format!(
                "{f_k} Hz lies within the {} Hz guard band around {f1} Hz",
                cfg.fundamental_guard
            ),
        ));
    }
    let (dt, m) = cfg.step_for(f_k);
    let n = cfg.measure_periods * m;
    let mut sim = Simulator::grid_connected(model, dt, cfg.integrator)?;
    let mut warnings = Vec::new();

    sim.set_time(-(n as f64) * dt);
    let drift = capture(&mut sim, n)?;
    sim.set_time(0.0);
    sim.set_injection(Some(Injection {
        axis,
        amplitude: cfg.amplitude,
        f_hz: f_k,
        t_start: 0.0,
    }));
    for _ in 0..cfg.settle_cycles * m {
        sim.step()?;
    }

    let mut settle = cfg.settle_cycles;
    let mut window = capture(&mut sim, n)?;
    let mut bins = window_bins(&window, dt, f_k, axis)?;
    loop {
        let next = capture(&mut sim, n)?;
        let nb = window_bins(&next, dt, f_k, axis)?;
        let y_prev = [-bins.i_d / bins.v, -bins.i_q / bins.v];
        let y_next = [-nb.i_d / nb.v, -nb.i_q / nb.v];
        let scale = y_next[0].norm().hypot(y_next[1].norm());
        let change = (y_next[0] - y_prev[0])
            .norm()
            .hypot((y_next[1] - y_prev[1]).norm())
            / scale;
        settle += cfg.measure_periods;
        window = next;
        bins = nb;
        if change < cfg.settle_tol {
            break;
        }
        if sim.time() + n as f64 * dt > cfg.max_settle_s {
            warnings.push(format!(
                "not settled at {f_k} Hz after {:.3} s (window change {change:.2e})",
                sim.time()
            ));
            break;
        }
    }

    let db = window_bins(&drift, dt, f_k, axis).ok();
    if let Some(db) = db {
        let resp = bins.i_d.norm().hypot(bins.i_q.norm());
        let pre = db.i_d.norm().hypot(db.i_q.norm());
        if pre > 1e-3 * resp {
            warnings.push(format!(
                "residual drift at {f_k} Hz before injection ({pre:.2e} vs {resp:.2e})"
            ));
        }
    }

    Ok(RawResponse {
        f: f_k,
        injected_axis: axis,
        v_response: bins.v,
        i_d_response: bins.i_d,
        i_q_response: bins.i_q,
        dt,
        settle_cycles: settle,
        warnings,
        window,
    })
}

#[derive(Debug, Clone)]
pub struct FlaggedPoint {
    pub f: f64,
    pub axis: Axis,
    pub reason: String,
}

/// Everything a sweep produced, including the per-column raw responses.
#[derive(Debug, Clone)]
pub struct SweepReport {
    pub spectrum: AdmittanceSpectrum,
    pub responses: Vec<RawResponse>,
    pub guarded: Vec<f64>,
    pub flagged: Vec<FlaggedPoint>,
    pub warnings: Vec<String>,
}

/// Admittance spectrum of `model` under the source convention `−I = Y·V`.
pub fn sweep(model: &SimModel, cfg: &ScanConfig) -> Result<AdmittanceSpectrum> {
    sweep_detailed(model, cfg).map(|r| r.spectrum)
}

pub fn sweep_detailed(model: &SimModel, cfg: &ScanConfig) -> Result<SweepReport> {
    cfg.validate()?;
    let base = model.base();
    let (kept, guarded): (Vec<f64>, Vec<f64>) = cfg
        .frequencies()
        .into_iter()
        .partition(|&f| !cfg.guarded(f, base.f1));
    let mut jobs: Vec<(f64, Axis)> = kept.iter().map(|&f| (f, Axis::D)).collect();
    if cfg.q_axis {
        jobs.extend(kept.iter().map(|&f| (f, Axis::Q)));
    }
    let run = |&(f, axis): &(f64, Axis)| measure_column(model, f, axis, cfg);
    let results: Vec<Result<RawResponse>> = if cfg.parallel {
        jobs.par_iter().map(run).collect()
    } else {
        jobs.iter().map(run).collect()
    };

    let mut responses = Vec::new();
    let mut flagged = Vec::new();
    for ((f, axis), r) in jobs.iter().zip(results) {
        match r {
            Ok(resp) => responses.push(resp),
            Err(e) if e.is_numerical() => flagged.push(FlaggedPoint {
                f: *f,
                axis: *axis,
                reason: e.to_string(),
            }),
            Err(e) => return Err(e),
        }
    }
    if flagged.len() * 5 > jobs.len() {
        return Err(Error::SweepFailed {
            flagged: flagged.len(),
            total: jobs.len(),
        });
    }

    let mut points = Vec::new();
    for &f in &kept {
        if flagged.iter().any(|p| p.f == f) {
            continue;
        }
        let mut pt = AdmittancePoint::empty(f);
        for r in responses.iter().filter(|r| r.f == f) {
            let (a, b) = r.admittance();
            match r.injected_axis {
                Axis::D => {
                    pt.y_dd = Some(a);
                    pt.y_qd = Some(b);
                }
                Axis::Q => {
                    pt.y_dq = Some(a);
                    pt.y_qq = Some(b);
                }
            }
        }
        points.push(pt);
    }
    let warnings = responses
        .iter()
        .flat_map(|r| r.warnings.iter().cloned())
        .collect();
    let spectrum = AdmittanceSpectrum::with_range(base, cfg.f_min, cfg.f_max, points)?;
    Ok(SweepReport {
        spectrum,
        responses,
        guarded,
        flagged,
        warnings,
    })
}

/// Spectrum from raw responses, with the same assembly rules as the sweep.
pub(crate) fn assemble(
    base: crate::model::PerUnitBase,
    f_min: f64,
    f_max: f64,
    responses: &[(f64, Axis, Complex64, Complex64)],
) -> Result<AdmittanceSpectrum> {
    let mut fs: Vec<f64> = responses.iter().map(|r| r.0).collect();
    fs.sort_by(f64::total_cmp);
    fs.dedup();
    let points = fs
        .into_iter()
        .map(|f| {
            let mut pt = AdmittancePoint::empty(f);
            for &(_, axis, a, b) in responses.iter().filter(|r| r.0 == f) {
                match axis {
                    Axis::D => {
                        pt.y_dd = Some(a);
                        pt.y_qd = Some(b);
                    }
                    Axis::Q => {
                        pt.y_dq = Some(a);
                        pt.y_qq = Some(b);
                    }
                }
            }
            pt
        })
        .collect();
    AdmittanceSpectrum::with_range(base, f_min, f_max, points)
}

pub(crate) fn response_from_window(
    ts: &TimeSeries,
    dt: f64,
    f: f64,
    axis: Axis,
) -> Result<(Complex64, Complex64)> {
    let b = window_bins(ts, dt, f, axis)?;
    Ok((-b.i_d / b.v, -b.i_q / b.v))
}
