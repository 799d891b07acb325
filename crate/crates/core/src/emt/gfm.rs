//! Average-value droop grid-forming inverter: power filters, P–f and Q–V
//! droop, cascaded voltage/current PI loops in the controller frame, LC
//! filter and the lumped branch from the capacitor to the POI.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::device::{Device, NodeSample, Probe};
use crate::error::{Error, Result};
use crate::model::{rl_from_x_over_r, PerUnitBase, RlImpedance};

const J: Complex64 = Complex64::new(0.0, 1.0);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GfmPlantModel {
    pub filter_r: f64,
    pub filter_l: f64,
    pub filter_c: f64,
    /// Everything between the capacitor and the POI.
    pub z_coupling_plus_grid: RlImpedance,
    pub droop_mp: f64,
    pub droop_mq: f64,
    pub kpv: f64,
    pub kiv: f64,
    /// Multiplier applied to `kpv` and `kiv` before use.
    pub voltage_gain_scale: f64,
    pub kpc: f64,
    pub kic: f64,
    /// Gain on the measured output current added to the current reference.
    pub current_feedforward: f64,
    /// Power measurement low-pass cutoff (rad/s).
    pub power_filter_cutoff: f64,
    pub virtual_z: RlImpedance,
    pub p_ref: f64,
    pub q_ref: f64,
    pub v_ref: f64,
    pub base: PerUnitBase,
}

pub const DEFAULT_FILTER_X: f64 = 0.15;
pub const DEFAULT_COUPLING_X: f64 = 0.12;
pub const DEFAULT_GRID_BRANCH_X: f64 = 0.30;
pub const CURRENT_LOOP_BANDWIDTH_HZ: f64 = 300.0;

impl Default for GfmPlantModel {
    fn default() -> Self {
        let base = PerUnitBase::default();
        let x_g = DEFAULT_COUPLING_X + DEFAULT_GRID_BRANCH_X;
        let mut m = Self {
            filter_r: DEFAULT_FILTER_X / 50.0,
            filter_l: DEFAULT_FILTER_X,
            filter_c: 0.05,
            z_coupling_plus_grid: RlImpedance {
                r: x_g / 10.0,
                l: x_g,
            },
            droop_mp: 0.02,
            droop_mq: 0.01,
            kpv: 2.60,
            kiv: 5.80,
            voltage_gain_scale: 20.0,
            kpc: 0.0,
            kic: 0.0,
            current_feedforward: 1.0,
            power_filter_cutoff: 2.0 * PI * 10.0,
            virtual_z: RlImpedance::ZERO,
            p_ref: 0.0,
            q_ref: 0.0,
            v_ref: 1.0,
            base,
        };
        m.retune_current_loop(CURRENT_LOOP_BANDWIDTH_HZ);
        m
    }
}

impl GfmPlantModel {
    /// Default plant dispatched at `P = 0.4`, `Q = −0.05` with a 1.0 pu POI.
    pub fn reference() -> Self {
        Self::default().at_operating_point(0.4, -0.05, 1.0)
    }

    /// Coupling branch (0.12 pu, X/R 10) in series with `grid`.
    pub fn with_grid_branch(mut self, grid: RlImpedance) -> Self {
        let coupling = RlImpedance {
            r: DEFAULT_COUPLING_X / 10.0,
            l: DEFAULT_COUPLING_X,
        };
        self.z_coupling_plus_grid = coupling.series(&grid);
        self
    }

    /// Sets the filter reactance with `r = x/50` and retunes the current loop.
    pub fn with_filter(mut self, x_filter: f64) -> Self {
        self.filter_l = x_filter;
        self.filter_r = x_filter / 50.0;
        self.retune_current_loop(CURRENT_LOOP_BANDWIDTH_HZ);
        self
    }

    pub fn with_z_gfm(mut self, x: f64, x_over_r: f64) -> Result<Self> {
        self.z_coupling_plus_grid = rl_from_x_over_r(x, x_over_r, &self.base)?;
        Ok(self)
    }

    pub fn with_voltage_gains(mut self, kiv: f64, kpv: f64) -> Self {
        self.kiv = kiv;
        self.kpv = kpv;
        self
    }

    /// Current-loop PI placing the closed loop at `bw_hz`.
    pub fn retune_current_loop(&mut self, bw_hz: f64) {
        let w = 2.0 * PI * bw_hz;
        self.kpc = w * self.filter_l / self.base.omega1;
        self.kic = w * self.filter_r;
    }

    /// Setpoints that make `(p, q)` at a POI voltage `v∠0` an equilibrium.
    pub fn at_operating_point(mut self, p: f64, q: f64, v: f64) -> Self {
        let v_poi = Complex64::new(v, 0.0);
        let ig = (Complex64::new(p, q) / v_poi).conj();
        let vc = v_poi + self.z_coupling_plus_grid.at_f1() * ig;
        let ig_c = ig * Complex64::from_polar(1.0, -vc.arg());
        self.p_ref = p;
        self.q_ref = q;
        self.v_ref = vc.norm() + (self.virtual_z.at_f1() * ig_c).re;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("filter_l", self.filter_l),
            ("filter_c", self.filter_c),
            ("z_coupling_plus_grid.l", self.z_coupling_plus_grid.l),
            ("power_filter_cutoff", self.power_filter_cutoff),
            ("voltage_gain_scale", self.voltage_gain_scale),
            ("v_ref", self.v_ref),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::domain(name, format!("must be > 0, got {v}")));
            }
        }
        let non_negative = [
            ("filter_r", self.filter_r),
            ("z_coupling_plus_grid.r", self.z_coupling_plus_grid.r),
            ("droop_mp", self.droop_mp),
            ("droop_mq", self.droop_mq),
            ("kpv", self.kpv),
            ("kiv", self.kiv),
            ("kpc", self.kpc),
            ("kic", self.kic),
            ("virtual_z.r", self.virtual_z.r),
            ("virtual_z.l", self.virtual_z.l),
        ];
        for (name, v) in non_negative {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::domain(name, format!("must be >= 0, got {v}")));
            }
        }
        for (name, v) in [
            ("p_ref", self.p_ref),
            ("q_ref", self.q_ref),
            ("current_feedforward", self.current_feedforward),
        ] {
            if !v.is_finite() {
                return Err(Error::domain(name, "must be finite"));
            }
        }
        Ok(())
    }
}

/// Droop disabled, voltage loop sped up, no virtual impedance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IdealisticMode {
    pub enabled: bool,
    pub gain_factor: f64,
}

impl Default for IdealisticMode {
    fn default() -> Self {
        Self {
            enabled: false,
            gain_factor: 5.0,
        }
    }
}

impl IdealisticMode {
    pub fn on() -> Self {
        Self {
            enabled: true,
            ..Self::default()
        }
    }

    pub fn off() -> Self {
        Self::default()
    }
}

pub(crate) const GFM_STATES: &[&str] = &[
    "i_f_d", "i_f_q", "v_c_d", "v_c_q", "i_g_d", "i_g_q", "delta_c", "p_f", "q_f", "xi_v_d",
    "xi_v_q", "xi_c_d", "xi_c_q",
];

const DELTA: usize = 6;

pub(crate) struct GfmDevice {
    p: GfmPlantModel,
    mp: f64,
    mq: f64,
    kpv: f64,
    kiv: f64,
    zv: Complex64,
    zg: Complex64,
    zf: Complex64,
    wb: f64,
}

struct Control {
    vst: Complex64,
    w: f64,
    ev: Complex64,
    ec: Complex64,
}

impl GfmDevice {
    pub fn new(p: &GfmPlantModel, mode: IdealisticMode) -> Result<Self> {
        p.validate()?;
        let scale = p.voltage_gain_scale * if mode.enabled { mode.gain_factor } else { 1.0 };
        let (mp, mq, zv) = if mode.enabled {
            (0.0, 0.0, Complex64::new(0.0, 0.0))
        } else {
            (p.droop_mp, p.droop_mq, p.virtual_z.at_f1())
        };
        Ok(Self {
            p: *p,
            mp,
            mq,
            kpv: p.kpv * scale,
            kiv: p.kiv * scale,
            zv,
            zg: p.z_coupling_plus_grid.at_f1(),
            zf: Complex64::new(p.filter_r, p.filter_l),
            wb: p.base.omega1,
        })
    }

    fn control(&self, x: &[f64]) -> Control {
        let p = &self.p;
        let i_f = Complex64::new(x[0], x[1]);
        let vc = Complex64::new(x[2], x[3]);
        let ig = Complex64::new(x[4], x[5]);
        let rot = Complex64::from_polar(1.0, -x[DELTA]);
        let (i_f, vc, ig) = (i_f * rot, vc * rot, ig * rot);
        let xv = Complex64::new(x[9], x[10]);
        let xc = Complex64::new(x[11], x[12]);
        let w = 1.0 + self.mp * (p.p_ref - x[7]);
        let vstar = p.v_ref + self.mq * (p.q_ref - x[8]) - self.zv * ig;
        let ev = vstar - vc;
        let iref =
            self.kpv * ev + self.kiv * xv + p.current_feedforward * ig + J * w * p.filter_c * vc;
        let ec = iref - i_f;
        let vst = p.kpc * ec + p.kic * xc + vc + J * w * p.filter_l * i_f;
        Control {
            vst: vst * rot.conj(),
            w,
            ev,
            ec,
        }
    }
}

impl Device for GfmDevice {
    fn n_states(&self) -> usize {
        GFM_STATES.len()
    }

    fn state_names(&self) -> &'static [&'static str] {
        GFM_STATES
    }

    fn eval(&self, x: &[f64], v_poi: Complex64, dx: &mut [f64]) {
        let p = &self.p;
        let c = self.control(x);
        let i_f = Complex64::new(x[0], x[1]);
        let vc = Complex64::new(x[2], x[3]);
        let ig = Complex64::new(x[4], x[5]);
        let s = v_poi * ig.conj();
        let di = (c.vst - vc - self.zf * i_f) * (self.wb / p.filter_l);
        let dv = (i_f - ig - J * p.filter_c * vc) * (self.wb / p.filter_c);
        let dg = (vc - v_poi - self.zg * ig) * (self.wb / p.z_coupling_plus_grid.l);
        dx[0] = di.re;
        dx[1] = di.im;
        dx[2] = dv.re;
        dx[3] = dv.im;
        dx[4] = dg.re;
        dx[5] = dg.im;
        dx[DELTA] = self.wb * (c.w - 1.0);
        dx[7] = p.power_filter_cutoff * (s.re - x[7]);
        dx[8] = p.power_filter_cutoff * (s.im - x[8]);
        dx[9] = c.ev.re;
        dx[10] = c.ev.im;
        dx[11] = c.ec.re;
        dx[12] = c.ec.im;
    }

    fn poi_current(&self, x: &[f64]) -> Complex64 {
        Complex64::new(x[4], x[5])
    }

    fn probe(&self, x: &[f64], v_poi: Complex64) -> Probe {
        let c = self.control(x);
        let i_f = Complex64::new(x[0], x[1]);
        let vc = Complex64::new(x[2], x[3]);
        let ig = Complex64::new(x[4], x[5]);
        Probe {
            st: NodeSample { v: c.vst, i: i_f },
            vcp: NodeSample { v: vc, i: ig },
            poi: NodeSample { v: v_poi, i: ig },
            freq: c.w,
            angle: x[DELTA],
        }
    }

    fn equilibrium_guess(&self, v_poi: Complex64, export: Option<Complex64>) -> Vec<f64> {
        let p = &self.p;
        let s = export.unwrap_or(Complex64::new(p.p_ref, p.q_ref));
        let ig = (s / v_poi).conj();
        let vc = v_poi + self.zg * ig;
        let delta = vc.arg();
        let rot = Complex64::from_polar(1.0, -delta);
        let i_f = ig + J * p.filter_c * vc;
        let vst = vc + self.zf * i_f;
        let (i_fc, vcc, igc, vstc) = (i_f * rot, vc * rot, ig * rot, vst * rot);
        let xc = if p.kic > 0.0 {
            (vstc - vcc - J * p.filter_l * i_fc) / p.kic
        } else {
            Complex64::new(0.0, 0.0)
        };
        let xv = if self.kiv > 0.0 {
            (i_fc - p.current_feedforward * igc - J * p.filter_c * vcc) / self.kiv
        } else {
            Complex64::new(0.0, 0.0)
        };
        vec![
            i_f.re, i_f.im, vc.re, vc.im, ig.re, ig.im, delta, s.re, s.im, xv.re, xv.im, xc.re,
            xc.im,
        ]
    }

    fn pinned_states(&self, islanded: bool) -> Vec<usize> {
        let mut pinned = Vec::new();
        if islanded || self.mp == 0.0 {
            pinned.push(DELTA);
        }
        if self.kiv == 0.0 {
            pinned.extend([9, 10]);
        }
        if self.p.kic == 0.0 {
            pinned.extend([11, 12]);
        }
        pinned
    }

    fn angle_states(&self) -> &'static [usize] {
        &[DELTA]
    }

    fn thevenin_hint(&self) -> (Complex64, Complex64) {
        (Complex64::new(self.p.v_ref, 0.0), self.zg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_guess_is_equilibrium() {
        let m = GfmPlantModel::reference();
        let d = GfmDevice::new(&m, IdealisticMode::off()).unwrap();
        let x = d.equilibrium_guess(Complex64::new(1.0, 0.0), None);
        let mut dx = vec![0.0; 13];
        d.eval(&x, Complex64::new(1.0, 0.0), &mut dx);
        let worst = dx.iter().fold(0.0f64, |a, b| a.max(b.abs()));
        assert!(worst < 1e-10, "{dx:?}");
    }

    #[test]
    fn current_loop_tuning() {
        let m = GfmPlantModel::default();
        let wbw = 2.0 * PI * 300.0;
        assert!((m.kpc - wbw * 0.15 / m.base.omega1).abs() < 1e-12);
        assert!((m.kic - wbw * 0.003).abs() < 1e-12);
        let m = m.with_filter(0.075);
        assert!((m.kpc - wbw * 0.075 / m.base.omega1).abs() < 1e-12);
    }

    #[test]
    fn default_lumped_branch() {
        let m = GfmPlantModel::default();
        assert!((m.z_coupling_plus_grid.l - 0.42).abs() < 1e-12);
        assert!((m.z_coupling_plus_grid.x_over_r() - 10.0).abs() < 1e-9);
    }

    #[test]
    fn validation_names_field() {
        let mut m = GfmPlantModel::default();
        m.filter_c = 0.0;
        let e = m.validate().unwrap_err().to_string();
        assert!(e.contains("filter_c"), "{e}");
        let mut m = GfmPlantModel::default();
        m.droop_mq = -1.0;
        assert!(m.validate().is_err());
    }

    #[test]
    fn idealistic_pins_angle_and_drops_droop() {
        let m = GfmPlantModel::reference();
        let d = GfmDevice::new(&m, IdealisticMode::on()).unwrap();
        assert_eq!(d.pinned_states(false), vec![DELTA]);
        assert_eq!((d.mp, d.mq), (0.0, 0.0));
        assert!((d.kpv - 2.6 * 20.0 * 5.0).abs() < 1e-12);
    }
}
