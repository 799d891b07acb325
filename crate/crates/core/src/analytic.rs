//! Closed-form reference models for an ideal voltage source behind a series
//! R–L branch. These are the oracles the simulator and the fitter are
//! checked against.

use std::f64::consts::FRAC_PI_2;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{PerUnitBase, RlImpedance};

/// Step in the grid voltage phasor from `v1∠delta1` to `v2∠delta2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VoltageStep {
    pub v1: f64,
    pub delta1: f64,
    pub v2: f64,
    pub delta2: f64,
    pub t_step: f64,
}

impl VoltageStep {
    pub fn new(v1: f64, delta1: f64, v2: f64, delta2: f64, t_step: f64) -> Result<Self> {
        if !(v1 > 0.0 && v2 > 0.0) {
            return Err(Error::domain("voltage step", "magnitudes must be > 0"));
        }
        Ok(Self {
            v1,
            delta1,
            v2,
            delta2,
            t_step,
        })
    }
}

/// Ideal voltage source `v_id∠0` behind `z`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IdvsConfig {
    pub v_id: f64,
    pub z: RlImpedance,
    pub base: PerUnitBase,
}

impl IdvsConfig {
    pub fn new(v_id: f64, z: RlImpedance, base: PerUnitBase) -> Result<Self> {
        if !(v_id > 0.0) {
            return Err(Error::domain("v_id", format!("must be > 0, got {v_id}")));
        }
        Ok(Self { v_id, z, base })
    }
}

/// 2×2 dq admittance under the source convention `−I = Y·V`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdmittanceMatrix {
    pub dd: Complex64,
    pub dq: Complex64,
    pub qd: Complex64,
    pub qq: Complex64,
}

/// dq admittance of the ideal source at perturbation frequency `f` (Hz).
pub fn idvs_admittance(cfg: &IdvsConfig, f: f64) -> Result<AdmittanceMatrix> {
    if !(f >= 0.0) {
        return Err(Error::domain("f", format!("must be >= 0, got {f}")));
    }
    let z = cfg.z;
    if z.is_zero() {
        return Err(Error::SingularImpedance("r = l = 0".into()));
    }
    // In pu, s·L = j(f/f1)·l and ω1·L = l.
    let diag = Complex64::new(z.r, z.l * f / cfg.base.f1);
    let cross = z.l;
    let den = diag * diag + cross * cross;
    if den.norm() == 0.0 {
        return Err(Error::SingularImpedance(format!(
            "zero determinant at {f} Hz"
        )));
    }
    Ok(AdmittanceMatrix {
        dd: diag / den,
        dq: cross / den,
        qd: -cross / den,
        qq: diag / den,
    })
}

/// `Y_qd` of a Thevenin branch `(r_th, l_th)` at `f_k`.
pub fn thevenin_yqd(r_th: f64, l_th: f64, f1: f64, f_k: f64) -> Complex64 {
    let diag = Complex64::new(r_th, l_th * f_k / f1);
    -l_th / (diag * diag + l_th * l_th)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SteadyState {
    pub p: f64,
    pub q: f64,
    pub i_mag: f64,
}

/// Power delivered at the terminal of `e∠0` into `grid_v∠grid_delta`
/// through `z`.
pub fn two_bus_steady_state(
    e: f64,
    grid_v: f64,
    grid_delta: f64,
    z: RlImpedance,
) -> Result<SteadyState> {
    if z.magnitude() == 0.0 {
        return Err(Error::SingularImpedance("two-bus branch".into()));
    }
    let src = Complex64::new(e, 0.0);
    let i = (src - Complex64::from_polar(grid_v, grid_delta)) / z.at_f1();
    let s = src * i.conj();
    Ok(SteadyState {
        p: s.re,
        q: s.im,
        i_mag: i.norm(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransientPq {
    pub p: f64,
    pub q: f64,
    /// Set when `r = 0`: the transient never decays.
    pub undamped: bool,
}

/// Active and reactive power of the ideal source after a grid voltage step.
///
/// Decay constant `τ = L/R`, impedance angle `φ = atan(ω1·L/R)`. In the
/// amplitude-invariant dq frame the natural current transient rotates
/// backwards at ω1, so the oscillatory argument is `θ = −(ω1·t + φ)`.
pub fn idvs_transient_pq(cfg: &IdvsConfig, step: &VoltageStep, t: f64) -> Result<TransientPq> {
    if t < step.t_step {
        return Err(Error::domain(
            "t",
            format!("{t} precedes the step at {}", step.t_step),
        ));
    }
    let z = cfg.z;
    let ss = two_bus_steady_state(cfg.v_id, step.v2, step.delta2, z)?;
    let tau_t = t - step.t_step;
    let omega1 = cfg.base.omega1;
    let undamped = z.r == 0.0;
    let decay = if undamped {
        1.0
    } else {
        let tau = z.l / (omega1 * z.r);
        (-tau_t / tau).exp()
    };
    let phi = z.l.atan2(z.r);
    let theta = -(omega1 * tau_t + phi);
    let (v1, v2, d1, d2) = (step.v1, step.v2, step.delta1, step.delta2);
    let amp = cfg.v_id / z.magnitude() * decay;
    let half = ((d1 - d2) / 2.0).sin();
    let mid = (d1 + d2) / 2.0;
    let p = ss.p + amp * ((v2 - v1) * (theta + d1).cos() + 2.0 * v2 * half * (theta + mid).sin());
    let q = ss.q + amp * ((v1 - v2) * (theta + d1).sin() + 2.0 * v2 * half * (theta + mid).cos());
    Ok(TransientPq { p, q, undamped })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NosePoint {
    pub p_max: f64,
    pub v_nose: f64,
}

/// Upper-branch load voltage of `e` behind `z` feeding `p + jq`, or `None`
/// past the solvability limit.
pub fn two_bus_load_voltage(e: f64, z: RlImpedance, p: f64, q: f64) -> Option<f64> {
    let (r, x) = (z.r, z.l);
    let a = r * p + x * q;
    let c = x * p - r * q;
    let b = 2.0 * a - e * e;
    let disc = b * b - 4.0 * (a * a + c * c);
    if disc < 0.0 {
        return None;
    }
    let u = (-b + disc.sqrt()) / 2.0;
    (u > 0.0).then(|| u.sqrt())
}

const NOSE_TOL: f64 = 1e-9;

/// Maximum constant-power-factor load of a two-bus system, by bisection on
/// P with a per-P solvability test.
pub fn pv_nose_analytic(e: f64, z: RlImpedance, load_power_factor_angle: f64) -> Result<NosePoint> {
    if !(e > 0.0) {
        return Err(Error::domain("e", format!("must be > 0, got {e}")));
    }
    if !(z.l > 0.0) {
        return Err(Error::domain("z", "nose needs l > 0"));
    }
    if (load_power_factor_angle.abs() - FRAC_PI_2).abs() < 1e-12 {
        let v = two_bus_load_voltage(e, z, 0.0, 0.0).unwrap_or(e);
        return Ok(NosePoint {
            p_max: 0.0,
            v_nose: v,
        });
    }
    let tan_phi = load_power_factor_angle.tan();
    let solvable = |p: f64| two_bus_load_voltage(e, z, p, p * tan_phi).is_some();
    if !solvable(0.0) {
        return Err(Error::domain("z", "no solvable operating point"));
    }
    let mut hi = e * e / z.magnitude();
    let mut guard = 0;
    while solvable(hi) {
        hi *= 2.0;
        guard += 1;
        if guard > 60 {
            return Err(Error::domain(
                "z",
                "unbounded transfer (degenerate impedance)",
            ));
        }
    }
    let mut lo = 0.0;
    while hi - lo > NOSE_TOL {
        let mid = 0.5 * (lo + hi);
        if solvable(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let v = two_bus_load_voltage(e, z, lo, lo * tan_phi)
        .ok_or_else(|| Error::domain("z", "nose bisection lost solvability"))?;
    Ok(NosePoint {
        p_max: lo,
        v_nose: v,
    })
}
