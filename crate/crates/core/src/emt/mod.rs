//! Fixed-step dq-frame time-domain simulation of the devices under test.

mod device;
mod gfm;
mod idvs;
mod model;
mod series;
mod solver;

pub use device::{NodeSample, Probe};
pub use gfm::{
    GfmPlantModel, IdealisticMode, CURRENT_LOOP_BANDWIDTH_HZ, DEFAULT_COUPLING_X, DEFAULT_FILTER_X,
    DEFAULT_GRID_BRANCH_X,
};
pub use model::{
    build_classical_machine, build_droop_gfm, build_idvs, DeviceModel, GridSource, MachineConfig,
    SimModel,
};
pub use series::{MeasurementPoint, PointTrace, TimeSeries, TRACE_CSV_HEADER};
pub use solver::{Injection, Simulator, Snapshot, DIVERGENCE_LIMIT, EQUILIBRIUM_TOL, LOAD_TAU};

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{Error, Result};
use crate::model::DqPhasor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Integrator {
    Trapezoidal,
    Rk4,
}

/// dq axis of a perturbation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    D,
    Q,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub dt: f64,
    pub t_end: f64,
    pub integrator: Integrator,
    pub record_decimation: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt: 20e-6,
            t_end: 0.5,
            integrator: Integrator::Trapezoidal,
            record_decimation: 1,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt <= 100e-6) {
            return Err(Error::domain(
                "dt",
                format!("must be in (0, 100 µs], got {}", self.dt),
            ));
        }
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return Err(Error::domain(
                "t_end",
                format!("must be > 0, got {}", self.t_end),
            ));
        }
        if self.record_decimation == 0 {
            return Err(Error::domain("record_decimation", "must be >= 1"));
        }
        Ok(())
    }
}

/// Step of the stiff grid source magnitude and phase at time `t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DisturbanceEvent {
    pub t: f64,
    pub dv: f64,
    pub ddelta: f64,
}

impl DisturbanceEvent {
    pub fn new(t: f64, dv: f64, ddelta: f64) -> Result<Self> {
        if !(t >= 0.0) {
            return Err(Error::domain("event t", format!("must be >= 0, got {t}")));
        }
        Ok(Self { t, dv, ddelta })
    }
}

/// Per-unit power with `p = v_d i_d + v_q i_q`, `q = v_q i_d − v_d i_q`.
pub fn measure_pq(v: DqPhasor, i: DqPhasor) -> (f64, f64) {
    (v.d * i.d + v.q * i.q, v.q * i.d - v.d * i.q)
}

/// Runs `model` against its stiff grid from equilibrium, applying `events`
/// at the nearest step boundary.
pub fn simulate(
    model: &SimModel,
    events: &[DisturbanceEvent],
    cfg: &SimConfig,
) -> Result<TimeSeries> {
    cfg.validate()?;
    if events.windows(2).any(|w| w[1].t < w[0].t) {
        return Err(Error::domain("events", "must be sorted by time"));
    }
    let mut sim = Simulator::grid_connected(model, cfg.dt, cfg.integrator)?;
    let n_steps = (cfg.t_end / cfg.dt).round() as usize;
    let at: Vec<usize> = events
        .iter()
        .map(|e| (e.t / cfg.dt).round() as usize)
        .collect();
    let mut ts = TimeSeries::with_points(&MeasurementPoint::ALL);
    ts.record(0.0, &sim.probe());
    let mut next = 0;
    for k in 0..n_steps {
        while next < events.len() && at[next] <= k {
            sim.apply_grid_event(events[next].dv, events[next].ddelta);
            next += 1;
        }
        sim.step()?;
        if (k + 1) % cfg.record_decimation == 0 {
            ts.record(sim.time(), &sim.probe());
        }
    }
    ts.metadata = json!({
        "model": model,
        "dt": cfg.dt,
        "t_end": cfg.t_end,
        "integrator": cfg.integrator,
        "record_decimation": cfg.record_decimation,
        "events": events,
        "states": sim.state_names(),
    });
    Ok(ts)
}
