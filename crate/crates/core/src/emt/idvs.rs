use num_complex::Complex64;

use super::device::{Device, NodeSample, Probe};
use crate::model::RlImpedance;

/// Fixed EMF behind a series R–L. Also used for the classical machine.
pub(crate) struct SourceBehindRl {
    pub emf: Complex64,
    pub z: RlImpedance,
    pub omega_b: f64,
    pub names: &'static [&'static str],
}

impl Device for SourceBehindRl {
    fn n_states(&self) -> usize {
        2
    }

    fn state_names(&self) -> &'static [&'static str] {
        self.names
    }

    fn eval(&self, x: &[f64], v_poi: Complex64, dx: &mut [f64]) {
        let i = Complex64::new(x[0], x[1]);
        let di = (self.emf - v_poi - self.z.at_f1() * i) * (self.omega_b / self.z.l);
        dx[0] = di.re;
        dx[1] = di.im;
    }

    fn poi_current(&self, x: &[f64]) -> Complex64 {
        Complex64::new(x[0], x[1])
    }

    fn probe(&self, x: &[f64], v_poi: Complex64) -> Probe {
        let i = self.poi_current(x);
        let internal = NodeSample { v: self.emf, i };
        Probe {
            st: internal,
            vcp: internal,
            poi: NodeSample { v: v_poi, i },
            freq: 1.0,
            angle: self.emf.arg(),
        }
    }

    fn equilibrium_guess(&self, v_poi: Complex64, _export: Option<Complex64>) -> Vec<f64> {
        let i = (self.emf - v_poi) / self.z.at_f1();
        vec![i.re, i.im]
    }

    fn pinned_states(&self, _islanded: bool) -> Vec<usize> {
        Vec::new()
    }

    fn thevenin_hint(&self) -> (Complex64, Complex64) {
        (self.emf, self.z.at_f1())
    }
}

pub(crate) const IDVS_STATES: &[&str] = &["i_d", "i_q"];
pub(crate) const MACHINE_STATES: &[&str] = &["i_a_d", "i_a_q"];
