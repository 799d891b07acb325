use std::io::Write;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::analytic::two_bus_load_voltage;
use crate::emt::{DeviceModel, Integrator, SimModel, Simulator};
use crate::error::{Error, Result};
use crate::model::TheveninEquivalent;

#[derive(Debug, Clone, PartialEq)]
pub enum PvSubject {
    Simulated(SimModel),
    /// Source `emf` behind the fitted impedance, solved algebraically.
    Thevenin {
        equiv: TheveninEquivalent,
        emf: Complex64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PvConfig {
    /// Consumed load `(p, q)` at the first level (pu).
    pub base_load: [f64; 2],
    pub step: [f64; 2],
    pub max_steps: usize,
    /// Rounds of step halving from the last stable level.
    pub refinements: usize,
    pub dt: f64,
    pub integrator: Integrator,
    /// Length of one settling chunk (s).
    pub chunk_s: f64,
    /// Largest change of |v| over a chunk accepted as steady (pu).
    pub settle_tol: f64,
    /// Longest hold at one level before it is declared non-convergent (s).
    pub max_hold_s: f64,
    /// POI voltage below which the system counts as collapsed (pu).
    pub collapse_v: f64,
    /// Time constant of the constant-power load admittance (s).
    pub load_tau: f64,
}

impl Default for PvConfig {
    fn default() -> Self {
        Self {
            base_load: [0.125, 0.0625],
            step: [0.05, 0.025],
            max_steps: 200,
            refinements: 2,
            dt: 50e-6,
            integrator: Integrator::Trapezoidal,
            chunk_s: 0.02,
            settle_tol: 1e-6,
            max_hold_s: 3.0,
            collapse_v: 0.25,
            load_tau: 20e-3,
        }
    }
}

impl PvConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.base_load[0] > 0.0) {
            return Err(Error::domain("base_load", "active load must be > 0"));
        }
        if !(self.step[0] > 0.0 && self.step[1] >= 0.0) {
            return Err(Error::domain("step", "need dp > 0 and dq >= 0"));
        }
        if self.max_steps == 0 {
            return Err(Error::domain("max_steps", "must be >= 1"));
        }
        if !(self.dt > 0.0 && self.dt <= 100e-6) {
            return Err(Error::domain(
                "dt",
                format!("must be in (0, 100 µs], got {}", self.dt),
            ));
        }
        if !(self.chunk_s >= self.dt && self.max_hold_s >= self.chunk_s) {
            return Err(Error::domain("chunk_s", "need dt <= chunk_s <= max_hold_s"));
        }
        if !(self.load_tau > 0.0) {
            return Err(Error::domain("load_tau", "must be > 0"));
        }
        if !(self.settle_tol > 0.0 && self.collapse_v >= 0.0) {
            return Err(Error::domain("settle_tol", "must be > 0"));
        }
        Ok(())
    }

    fn load(&self, level: f64) -> Complex64 {
        Complex64::new(
            self.base_load[0] + level * self.step[0],
            self.base_load[1] + level * self.step[1],
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PvTermination {
    NonConvergence,
    Collapse,
    ScheduleEnd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PvCurve {
    /// Stable `(p_load, v_poi)` points in the order visited.
    pub points: Vec<(f64, f64)>,
    /// Nose estimate: vertex of the parabola in `(v², p)` through the last
    /// three stable points, or the last stable point when that fails.
    pub p_max: f64,
    pub v_at_pmax: f64,
    pub p_last_stable: f64,
    pub terminated_by: PvTermination,
}

impl PvCurve {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["p_load_pu", "v_poi_pu"])?;
        for (p, v) in &self.points {
            wr.write_record([p.to_string(), v.to_string()])?;
        }
        wr.flush()?;
        Ok(())
    }
}

enum Level {
    Stable(f64),
    Unstable(PvTermination),
}

trait Tracer {
    fn try_level(&mut self, s: Complex64) -> Result<Level>;
    fn commit(&mut self);
    fn rollback(&mut self);
}

struct Algebraic {
    e: f64,
    z: Complex64,
}

impl Tracer for Algebraic {
    fn try_level(&mut self, s: Complex64) -> Result<Level> {
        let z = crate::model::RlImpedance {
            r: self.z.re,
            l: self.z.im,
        };
        Ok(match two_bus_load_voltage(self.e, z, s.re, s.im) {
            Some(v) => Level::Stable(v),
            None => Level::Unstable(PvTermination::NonConvergence),
        })
    }
    fn commit(&mut self) {}
    fn rollback(&mut self) {}
}

struct Dynamic<'a> {
    sim: Simulator,
    saved: crate::emt::Snapshot,
    cfg: &'a PvConfig,
}

impl Tracer for Dynamic<'_> {
    fn try_level(&mut self, s: Complex64) -> Result<Level> {
        self.sim.set_load(s);
        let mut last = self.sim.poi_voltage().norm();
        let mut held = 0.0;
        while held < self.cfg.max_hold_s {
            match self.sim.run_for(self.cfg.chunk_s) {
                Ok(()) => {}
                Err(e) if e.is_numerical() => return Ok(Level::Unstable(PvTermination::Collapse)),
                Err(e) => return Err(e),
            }
            held += self.cfg.chunk_s;
            let v = self.sim.poi_voltage().norm();
            if !v.is_finite() || v < self.cfg.collapse_v {
                return Ok(Level::Unstable(PvTermination::Collapse));
            }
            if (v - last).abs() < self.cfg.settle_tol {
                return Ok(Level::Stable(v));
            }
            last = v;
        }
        Ok(Level::Unstable(PvTermination::NonConvergence))
    }

    fn commit(&mut self) {
        self.saved = self.sim.snapshot();
    }

    fn rollback(&mut self) {
        self.sim.restore(&self.saved);
    }
}

/// Dispatches a droop GFM to supply the base load so that the islanded
/// system starts at its reference frequency. `v_ref` is kept.
fn redispatched(model: &SimModel, s: Complex64) -> SimModel {
    let mut m = *model;
    if let DeviceModel::DroopGfm { params, .. } = &mut m.device {
        params.p_ref = s.re;
        params.q_ref = s.im;
    }
    m
}

/// Source voltage behind `equiv` that reproduces the POI voltage and
/// current of `model` feeding the base load of `cfg`.
pub fn pv_equivalent_emf(
    model: &SimModel,
    equiv: &TheveninEquivalent,
    cfg: &PvConfig,
) -> Result<Complex64> {
    cfg.validate()?;
    let s0 = cfg.load(0.0);
    let sim = Simulator::islanded(&redispatched(model, s0), s0, cfg.dt, cfg.integrator)?;
    let poi = sim.probe().poi;
    Ok(poi.v + equiv.impedance().at_f1() * poi.i)
}

fn vertex(pts: &[(f64, f64)]) -> Option<(f64, f64)> {
    let n = pts.len();
    if n < 3 {
        return None;
    }
    let [(p0, v0), (p1, v1), (p2, v2)] = [pts[n - 3], pts[n - 2], pts[n - 1]];
    let (x0, x1, x2) = (v0 * v0, v1 * v1, v2 * v2);
    if (x0 - x1).abs() < 1e-15 || (x1 - x2).abs() < 1e-15 || (x0 - x2).abs() < 1e-15 {
        return None;
    }
    let d01 = (p1 - p0) / (x1 - x0);
    let d12 = (p2 - p1) / (x2 - x1);
    let a = (d12 - d01) / (x2 - x0);
    if !(a < 0.0) {
        return None;
    }
    let b = d01 - a * (x0 + x1);
    let xv = -b / (2.0 * a);
    if !(xv > 0.0) || xv > x0 {
        return None;
    }
    let pv = p0 + d01 * (xv - x0) + a * (xv - x0) * (xv - x1);
    if pv < p2 {
        return None;
    }
    Some((pv, xv.sqrt()))
}

fn trace(tr: &mut dyn Tracer, cfg: &PvConfig, v0: f64) -> Result<PvCurve> {
    let mut points = vec![(cfg.load(0.0).re, v0)];
    tr.commit();
    let mut level = 0.0;
    let mut inc = 1.0;
    let mut steps = 0;
    let mut rounds = 0;
    let mut terminated_by = PvTermination::ScheduleEnd;
    while steps < cfg.max_steps {
        let s = cfg.load(level + inc);
        match tr.try_level(s)? {
            Level::Stable(v) => {
                tr.commit();
                level += inc;
                steps += 1;
                points.push((s.re, v));
            }
            Level::Unstable(why) => {
                terminated_by = why;
                tr.rollback();
                if rounds == cfg.refinements {
                    break;
                }
                rounds += 1;
                inc *= 0.5;
            }
        }
    }
    let (p_last, v_last) = *points.last().expect("base point");
    let (p_max, v_at_pmax) = if terminated_by == PvTermination::ScheduleEnd {
        (p_last, v_last)
    } else {
        vertex(&points).unwrap_or((p_last, v_last))
    };
    Ok(PvCurve {
        points,
        p_max,
        v_at_pmax,
        p_last_stable: p_last,
        terminated_by,
    })
}

/// Raises a constant-power load at the POI from `base_load` in steps of
/// `step`, recording the settled POI voltage at each level. After the first
/// failure the trace restarts from the last stable level with halved steps,
/// `refinements` times.
pub fn pv_trace(subject: &PvSubject, cfg: &PvConfig) -> Result<PvCurve> {
    cfg.validate()?;
    let s0 = cfg.load(0.0);
    match subject {
        PvSubject::Thevenin { equiv, emf } => {
            let e = emf.norm();
            let mut tr = Algebraic {
                e,
                z: equiv.impedance().at_f1(),
            };
            let v0 = match tr.try_level(s0)? {
                Level::Stable(v) => v,
                Level::Unstable(_) => {
                    return Err(Error::domain(
                        "base_load",
                        format!("{s0} has no solution behind the equivalent"),
                    ))
                }
            };
            trace(&mut tr, cfg, v0)
        }
        PvSubject::Simulated(model) => {
            let m = redispatched(model, s0);
            let mut sim =
                Simulator::islanded(&m, s0, cfg.dt, cfg.integrator).map_err(|e| match e {
                    Error::Equilibrium { state, residual } => Error::domain(
                        "base_load",
                        format!("base case unsolvable ({state} residual {residual:.3e})"),
                    ),
                    other => other,
                })?;
            sim.set_load_tau(cfg.load_tau)?;
            let v0 = sim.poi_voltage().norm();
            let saved = sim.snapshot();
            let mut tr = Dynamic { sim, saved, cfg };
            trace(&mut tr, cfg, v0)
        }
    }
}
