use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::emt::{
    simulate, DisturbanceEvent, MeasurementPoint, SimConfig, SimModel, Simulator, TimeSeries,
};
use crate::error::{Error, Result};
use crate::model::TheveninEquivalent;

/// Largest accepted POI power mismatch between the models before the event.
pub const OPERATING_POINT_TOL: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct StepStudyResult {
    pub traces_full: TimeSeries,
    pub traces_equiv: TimeSeries,
    /// RMS Q difference over the window divided by the full model's Q
    /// peak-to-trough range in the window.
    pub rms_error_q: f64,
    pub rms_error_p: f64,
    /// Unnormalised RMS Q difference (pu).
    pub rms_abs_q: f64,
    pub window: [f64; 2],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepSummary {
    pub rms_error_q: f64,
    pub rms_error_p: f64,
    pub window_s: [f64; 2],
}

impl StepStudyResult {
    pub fn summary(&self) -> StepSummary {
        StepSummary {
            rms_error_q: self.rms_error_q,
            rms_error_p: self.rms_error_p,
            window_s: self.window,
        }
    }

    /// Writes `step_full.csv`, `step_equiv.csv` and `step_summary.json`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        self.traces_full
            .write_csv(BufWriter::new(File::create(dir.join("step_full.csv"))?))?;
        self.traces_equiv
            .write_csv(BufWriter::new(File::create(dir.join("step_equiv.csv"))?))?;
        let mut w = BufWriter::new(File::create(dir.join("step_summary.json"))?);
        serde_json::to_writer_pretty(&mut w, &self.summary())?;
        Ok(())
    }
}

/// Default event: the grid magnitude drops by 5% at `t`.
pub fn default_step_event(model: &SimModel, t: f64) -> Result<DisturbanceEvent> {
    DisturbanceEvent::new(t, -0.05 * model.grid.v, 0.0)
}

/// Source behind `equiv` that reproduces the POI voltage and current of
/// `full` at its initial equilibrium.
pub fn equivalent_model(
    full: &SimModel,
    equiv: &TheveninEquivalent,
    sim: &SimConfig,
) -> Result<SimModel> {
    let s = Simulator::grid_connected(full, sim.dt, sim.integrator)?;
    let poi = s.probe().poi;
    let z = equiv.impedance().at_f1();
    let emf = poi.v + z * poi.i;
    Ok(
        SimModel::idvs_with_emf(emf, equiv.impedance(), full.base())?
            .with_grid(full.grid.v, full.grid.delta),
    )
}

fn pre_event_power(ts: &TimeSeries) -> Complex64 {
    let poi = ts
        .channel(MeasurementPoint::Poi)
        .expect("simulate records the POI");
    Complex64::new(poi.p[0], poi.q[0])
}

fn normalised_rms(full: &[f64], other: &[f64]) -> (f64, f64) {
    let n = full.len() as f64;
    let rms = (full
        .iter()
        .zip(other)
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    let hi = full.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lo = full.iter().cloned().fold(f64::INFINITY, f64::min);
    let range = hi - lo;
    let rel = if rms == 0.0 {
        0.0
    } else if range > 0.0 {
        rms / range
    } else {
        f64::INFINITY
    };
    (rel, rms)
}

/// Simulates `full` and the source-behind-`equiv` built from its pre-event
/// state under the same event, comparing POI powers over `window` seconds
/// after the event.
pub fn step_compare(
    full: &SimModel,
    equiv: &TheveninEquivalent,
    event: DisturbanceEvent,
    window: f64,
    sim: &SimConfig,
) -> Result<StepStudyResult> {
    if !(window > 0.0) {
        return Err(Error::domain(
            "window",
            format!("must be > 0, got {window}"),
        ));
    }
    let cfg = SimConfig {
        t_end: event.t + window,
        ..*sim
    };
    let eq_model = equivalent_model(full, equiv, &cfg)?;
    let (a, b) = rayon::join(
        || simulate(full, &[event], &cfg),
        || simulate(&eq_model, &[event], &cfg),
    );
    let (a, b) = (a?, b?);
    let mismatch = (pre_event_power(&a) - pre_event_power(&b)).norm();
    if mismatch > OPERATING_POINT_TOL {
        return Err(Error::Setup(format!(
            "pre-event POI power differs by {mismatch:.3e} pu between full model and equivalent"
        )));
    }
    let t0 = event.t;
    let t1 = event.t + window;
    let idx: Vec<usize> = (0..a.len())
        .filter(|&k| a.t[k] >= t0 - 1e-12 && a.t[k] <= t1 + 1e-12)
        .collect();
    let pa = a.channel(MeasurementPoint::Poi).expect("POI");
    let pb = b.channel(MeasurementPoint::Poi).expect("POI");
    let pick = |v: &[f64]| idx.iter().map(|&k| v[k]).collect::<Vec<_>>();
    let (rms_error_q, rms_abs_q) = normalised_rms(&pick(&pa.q), &pick(&pb.q));
    let (rms_error_p, _) = normalised_rms(&pick(&pa.p), &pick(&pb.p));
    Ok(StepStudyResult {
        traces_full: a,
        traces_equiv: b,
        rms_error_q,
        rms_error_p,
        rms_abs_q,
        window: [t0, t1],
    })
}
