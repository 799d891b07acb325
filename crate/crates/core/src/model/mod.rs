//! Per-unit foundation types shared by every stage of the pipeline.
//!
//! All quantities live in the synchronously rotating dq frame with an
//! amplitude-invariant transform, so `p = v_d i_d + v_q i_q` and rated
//! operation is 1.0 pu. Inductances are stored on the fundamental base
//! (`omega1_pu = 1`), which makes `l` numerically equal to the reactance at
//! the fundamental frequency.

mod spectrum;

pub use spectrum::{
    spectrum_resonance, AdmittanceEntry, AdmittancePoint, AdmittanceSpectrum, Resonance,
    SPECTRUM_CSV_HEADER,
};

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Complex per-unit value (admittance, phasor, response coefficient).
pub type ComplexValue = Complex64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BaseFields")]
pub struct PerUnitBase {
    /// Apparent power base (VA).
    pub s_base: f64,
    /// Line-to-line RMS voltage base (V).
    pub v_base: f64,
    /// Fundamental frequency (Hz).
    pub f1: f64,
    /// `2π·f1` (rad/s).
    pub omega1: f64,
}

#[derive(Deserialize)]
struct BaseFields {
    s_base: f64,
    v_base: f64,
    f1: f64,
}

impl TryFrom<BaseFields> for PerUnitBase {
    type Error = Error;

    fn try_from(b: BaseFields) -> Result<Self> {
        PerUnitBase::new(b.s_base, b.v_base, b.f1)
    }
}

impl PerUnitBase {
    pub fn new(s_base: f64, v_base: f64, f1: f64) -> Result<Self> {
        for (name, v) in [("s_base", s_base), ("v_base", v_base), ("f1", f1)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::domain(
                    name,
                    format!("must be finite and > 0, got {v}"),
                ));
            }
        }
        Ok(Self {
            s_base,
            v_base,
            f1,
            omega1: 2.0 * PI * f1,
        })
    }

    /// 200 MVA / 230 kV on a 60 Hz system.
    pub fn hz60() -> Self {
        Self::new(200e6, 230e3, 60.0).expect("valid constant base")
    }

    /// 200 MVA / 220 kV on a 50 Hz system.
    pub fn hz50() -> Self {
        Self::new(200e6, 220e3, 50.0).expect("valid constant base")
    }
}

impl Default for PerUnitBase {
    fn default() -> Self {
        Self::hz60()
    }
}

/// Series R–L branch in per unit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RlImpedance {
    pub r: f64,
    pub l: f64,
}

impl RlImpedance {
    pub fn new(r: f64, l: f64) -> Result<Self> {
        if !(r.is_finite() && r >= 0.0) {
            return Err(Error::domain(
                "r",
                format!("must be finite and >= 0, got {r}"),
            ));
        }
        if !(l.is_finite() && l >= 0.0) {
            return Err(Error::domain(
                "l",
                format!("must be finite and >= 0, got {l}"),
            ));
        }
        Ok(Self { r, l })
    }

    pub const ZERO: RlImpedance = RlImpedance { r: 0.0, l: 0.0 };

    /// Reactance at the fundamental. Equal to `l` under the pu convention.
    pub fn x_at_f1(&self) -> f64 {
        self.l
    }

    /// Phasor impedance `r + j·x` at the fundamental.
    pub fn at_f1(&self) -> Complex64 {
        Complex64::new(self.r, self.l)
    }

    /// Phasor impedance at an arbitrary steady-state frequency.
    pub fn at_frequency(&self, f: f64, f1: f64) -> Complex64 {
        Complex64::new(self.r, self.l * f / f1)
    }

    pub fn magnitude(&self) -> f64 {
        self.at_f1().norm()
    }

    pub fn is_zero(&self) -> bool {
        self.r == 0.0 && self.l == 0.0
    }

    pub fn series(&self, other: &RlImpedance) -> RlImpedance {
        RlImpedance {
            r: self.r + other.r,
            l: self.l + other.l,
        }
    }

    pub fn x_over_r(&self) -> f64 {
        self.l / self.r
    }
}

/// Builds an R–L branch from its fundamental reactance and X/R ratio.
pub fn rl_from_x_over_r(x_eff: f64, x_over_r: f64, base: &PerUnitBase) -> Result<RlImpedance> {
    let _ = base;
    if !(x_eff.is_finite() && x_eff > 0.0) {
        return Err(Error::domain("x_eff", format!("must be > 0, got {x_eff}")));
    }
    if !(x_over_r > 0.0) || x_over_r.is_nan() {
        return Err(Error::domain(
            "x_over_r",
            format!("must be > 0, got {x_over_r}"),
        ));
    }
    RlImpedance::new(x_eff / x_over_r, x_eff)
}

/// d/q pair in the synchronous frame.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct DqPhasor {
    pub d: f64,
    pub q: f64,
}

impl DqPhasor {
    pub fn new(d: f64, q: f64) -> Self {
        Self { d, q }
    }

    pub fn magnitude(&self) -> f64 {
        self.d.hypot(self.q)
    }

    pub fn angle(&self) -> f64 {
        self.q.atan2(self.d)
    }

    pub fn to_complex(self) -> Complex64 {
        Complex64::new(self.d, self.q)
    }
}

impl From<Complex64> for DqPhasor {
    fn from(c: Complex64) -> Self {
        Self { d: c.re, q: c.im }
    }
}

/// Fitted effective impedance of a device.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheveninEquivalent {
    pub r_eff: f64,
    pub l_eff: f64,
    pub x_eff_at_f1: f64,
    /// Raw weighted relative-magnitude RMS, as a fraction.
    pub rms_error: f64,
    pub resonance_freq: f64,
}

impl TheveninEquivalent {
    pub fn new(r_eff: f64, l_eff: f64, rms_error: f64, resonance_freq: f64) -> Result<Self> {
        if !(r_eff >= 0.0) {
            return Err(Error::domain("r_eff", format!("must be >= 0, got {r_eff}")));
        }
        if !(l_eff > 0.0) {
            return Err(Error::domain("l_eff", format!("must be > 0, got {l_eff}")));
        }
        if !(rms_error >= 0.0) {
            return Err(Error::domain(
                "rms_error",
                format!("must be >= 0, got {rms_error}"),
            ));
        }
        Ok(Self {
            r_eff,
            l_eff,
            x_eff_at_f1: l_eff,
            rms_error,
            resonance_freq,
        })
    }

    pub fn impedance(&self) -> RlImpedance {
        RlImpedance {
            r: self.r_eff,
            l: self.l_eff,
        }
    }

    pub fn x_over_r(&self) -> f64 {
        self.x_eff_at_f1 / self.r_eff
    }
}
