use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, Dyn, LU};
use num_complex::Complex64;

use super::device::{Device, Probe};
use super::model::SimModel;
use super::{Axis, Integrator};
use crate::error::{Error, Result};

/// Default time constant of the adaptive load admittance (s).
pub const LOAD_TAU: f64 = 1e-3;
/// States beyond this magnitude (pu) abort the run.
pub const DIVERGENCE_LIMIT: f64 = 100.0;
/// Largest accepted equilibrium residual on any state derivative.
pub const EQUILIBRIUM_TOL: f64 = 1e-9;

const STEP_TOL: f64 = 1e-10;
const STEP_MAX_ITERS: usize = 25;
const PREROLL_S: f64 = 3.0;

/// Additive sinusoidal perturbation of the stiff grid phasor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Injection {
    pub axis: Axis,
    pub amplitude: f64,
    pub f_hz: f64,
    pub t_start: f64,
}

impl Injection {
    fn at(&self, t: f64) -> Complex64 {
        if t < self.t_start {
            return Complex64::new(0.0, 0.0);
        }
        let a = self.amplitude * (2.0 * PI * self.f_hz * (t - self.t_start)).cos();
        match self.axis {
            Axis::D => Complex64::new(a, 0.0),
            Axis::Q => Complex64::new(0.0, a),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Termination {
    Grid {
        phasor: Complex64,
        injection: Option<Injection>,
    },
    /// Constant-power load realised as an admittance that tracks
    /// `conj(S)/|v|²`; its two states follow the device states.
    Load { s: Complex64 },
}

/// Fixed-step integrator for one device and its POI termination.
pub struct Simulator {
    dev: Box<dyn Device>,
    term: Termination,
    n_dev: usize,
    x: Vec<f64>,
    t0: f64,
    k: i64,
    dt: f64,
    integrator: Integrator,
    chord: Option<LU<f64, Dyn, Dyn>>,
    names: Vec<String>,
    load_tau: f64,
}

/// Saved integrator position for restarting a run.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    x: Vec<f64>,
    t: f64,
    load: Option<Complex64>,
}

impl Simulator {
    /// Device against the model's stiff grid, started at equilibrium.
    pub fn grid_connected(model: &SimModel, dt: f64, integrator: Integrator) -> Result<Self> {
        let dev = model.instantiate()?;
        let phasor = model.grid.phasor();
        let guess = dev.equilibrium_guess(phasor, None);
        let mut sim = Self::assemble(
            dev,
            Termination::Grid {
                phasor,
                injection: None,
            },
            dt,
            integrator,
        )?;
        sim.x = guess;
        sim.initialise(false)?;
        Ok(sim)
    }

    /// Device feeding a constant-power load `s` (consumed) with no grid.
    pub fn islanded(
        model: &SimModel,
        s: Complex64,
        dt: f64,
        integrator: Integrator,
    ) -> Result<Self> {
        if s.norm() == 0.0 {
            return Err(Error::domain(
                "load",
                "constant-power load must be non-zero",
            ));
        }
        let dev = model.instantiate()?;
        let v0 = load_flow_guess(dev.thevenin_hint(), s).ok_or_else(|| {
            Error::domain("load", format!("base load {s} has no load-flow solution"))
        })?;
        let mut x = dev.equilibrium_guess(v0, Some(s));
        let y = s.conj() / v0.norm_sqr();
        x.extend([y.re, y.im]);
        let mut sim = Self::assemble(dev, Termination::Load { s }, dt, integrator)?;
        sim.x = x;
        sim.initialise(true)?;
        Ok(sim)
    }

    fn assemble(
        dev: Box<dyn Device>,
        term: Termination,
        dt: f64,
        integrator: Integrator,
    ) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::domain("dt", format!("must be > 0, got {dt}")));
        }
        let n_dev = dev.n_states();
        let mut names: Vec<String> = dev.state_names().iter().map(|s| s.to_string()).collect();
        if matches!(term, Termination::Load { .. }) {
            names.extend(["y_load_re".to_string(), "y_load_im".to_string()]);
        }
        Ok(Self {
            dev,
            term,
            n_dev,
            x: Vec::new(),
            t0: 0.0,
            k: 0,
            dt,
            integrator,
            chord: None,
            names,
            load_tau: LOAD_TAU,
        })
    }

    pub fn time(&self) -> f64 {
        self.t0 + self.k as f64 * self.dt
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn state(&self) -> &[f64] {
        &self.x
    }

    pub fn state_names(&self) -> &[String] {
        &self.names
    }

    /// Restarts the step counter so that the current state sits at `t`.
    pub fn set_time(&mut self, t: f64) {
        self.t0 = t;
        self.k = 0;
    }

    pub fn set_injection(&mut self, inj: Option<Injection>) {
        if let Termination::Grid { injection, .. } = &mut self.term {
            *injection = inj;
        }
    }

    /// Magnitude and phase step of the stiff grid source.
    pub fn apply_grid_event(&mut self, dv: f64, ddelta: f64) {
        if let Termination::Grid { phasor, .. } = &mut self.term {
            let (v, d) = phasor.to_polar();
            *phasor = Complex64::from_polar(v + dv, d + ddelta);
        }
    }

    /// Time constant of the load admittance. Much faster than the network
    /// modes the load acts as constant power on them, which can destabilise
    /// lightly damped branches.
    pub fn set_load_tau(&mut self, tau: f64) -> Result<()> {
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(Error::domain("load_tau", format!("must be > 0, got {tau}")));
        }
        self.load_tau = tau;
        self.chord = None;
        Ok(())
    }

    pub fn set_load(&mut self, s: Complex64) {
        if let Termination::Load { s: cur } = &mut self.term {
            *cur = s;
        }
    }

    pub fn snapshot(&self) -> Snapshot {
        Snapshot {
            x: self.x.clone(),
            t: self.time(),
            load: match self.term {
                Termination::Load { s } => Some(s),
                Termination::Grid { .. } => None,
            },
        }
    }

    pub fn restore(&mut self, snap: &Snapshot) {
        self.x.clone_from(&snap.x);
        self.set_time(snap.t);
        if let Some(s) = snap.load {
            self.set_load(s);
        }
        self.chord = None;
    }

    pub fn probe(&self) -> Probe {
        let v = self.v_poi(self.time(), &self.x);
        self.dev.probe(&self.x[..self.n_dev], v)
    }

    pub fn poi_voltage(&self) -> Complex64 {
        self.v_poi(self.time(), &self.x)
    }

    fn v_poi(&self, t: f64, x: &[f64]) -> Complex64 {
        match &self.term {
            Termination::Grid { phasor, injection } => {
                *phasor + injection.map_or(Complex64::new(0.0, 0.0), |i| i.at(t))
            }
            Termination::Load { .. } => {
                let y = Complex64::new(x[self.n_dev], x[self.n_dev + 1]);
                self.dev.poi_current(&x[..self.n_dev]) / y
            }
        }
    }

    fn rhs(&self, t: f64, x: &[f64], dx: &mut [f64]) {
        let v = self.v_poi(t, x);
        let n = self.n_dev;
        self.dev.eval(&x[..n], v, &mut dx[..n]);
        if let Termination::Load { s } = self.term {
            let target = s.conj() / v.norm_sqr();
            dx[n] = (target.re - x[n]) / self.load_tau;
            dx[n + 1] = (target.im - x[n + 1]) / self.load_tau;
        }
    }

    fn jacobian(&self, t: f64, x: &[f64]) -> DMatrix<f64> {
        let n = x.len();
        let mut f0 = vec![0.0; n];
        self.rhs(t, x, &mut f0);
        let mut jac = DMatrix::zeros(n, n);
        let mut xp = x.to_vec();
        let mut fp = vec![0.0; n];
        for j in 0..n {
            let h = 1e-7 * x[j].abs().max(1.0);
            xp[j] = x[j] + h;
            self.rhs(t, &xp, &mut fp);
            for i in 0..n {
                jac[(i, j)] = (fp[i] - f0[i]) / h;
            }
            xp[j] = x[j];
        }
        jac
    }

    fn initialise(&mut self, islanded: bool) -> Result<()> {
        let pinned = self.dev.pinned_states(islanded);
        let t = self.time();
        if self.newton(&pinned).is_err() {
            let steps = (PREROLL_S / self.dt).ceil() as usize;
            for _ in 0..steps {
                if self.step().is_err() {
                    break;
                }
            }
            self.set_time(t);
            self.newton(&pinned)?;
        }
        self.set_time(t);
        let mut f = vec![0.0; self.x.len()];
        self.rhs(t, &self.x, &mut f);
        let (worst, val) = f.iter().enumerate().fold((0, 0.0f64), |(wi, wv), (i, v)| {
            if v.abs() > wv {
                (i, v.abs())
            } else {
                (wi, wv)
            }
        });
        if !(val < EQUILIBRIUM_TOL) {
            return Err(Error::Equilibrium {
                state: self.names[worst].clone(),
                residual: val,
            });
        }
        self.chord = None;
        Ok(())
    }

    /// Damped Newton on the free states. Returns the final residual norm.
    fn newton(&mut self, pinned: &[usize]) -> Result<f64> {
        let n = self.x.len();
        let free: Vec<usize> = (0..n).filter(|i| !pinned.contains(i)).collect();
        let t = self.time();
        let mut f = vec![0.0; n];
        let norm_of = |f: &[f64]| free.iter().map(|&i| f[i].abs()).fold(0.0, f64::max);
        self.rhs(t, &self.x, &mut f);
        let mut norm = norm_of(&f);
        for _ in 0..60 {
            if norm < 1e-11 || !norm.is_finite() {
                break;
            }
            let jac = self.jacobian(t, &self.x);
            let jr = jac.select_rows(&free).select_columns(&free);
            let rhs = DVector::from_iterator(free.len(), free.iter().map(|&i| -f[i]));
            let Some(delta) = jr.lu().solve(&rhs) else {
                break;
            };
            let mut alpha = 1.0;
            let mut accepted = false;
            while alpha > 1e-6 {
                let mut trial = self.x.clone();
                for (k, &i) in free.iter().enumerate() {
                    trial[i] += alpha * delta[k];
                }
                let mut ft = vec![0.0; n];
                self.rhs(t, &trial, &mut ft);
                let nt = norm_of(&ft);
                if nt.is_finite() && nt < norm {
                    self.x = trial;
                    f = ft;
                    norm = nt;
                    accepted = true;
                    break;
                }
                alpha *= 0.5;
            }
            if !accepted {
                break;
            }
        }
        if norm < EQUILIBRIUM_TOL {
            Ok(norm)
        } else {
            let worst = free
                .iter()
                .copied()
                .max_by(|&a, &b| f[a].abs().total_cmp(&f[b].abs()))
                .unwrap_or(0);
            Err(Error::Equilibrium {
                state: self.names[worst].clone(),
                residual: norm,
            })
        }
    }

    /// Advances one step of `dt`.
    pub fn step(&mut self) -> Result<()> {
        let t = self.time();
        match self.integrator {
            Integrator::Trapezoidal => self.step_trapezoidal(t)?,
            Integrator::Rk4 => self.step_rk4(t),
        }
        self.k += 1;
        self.guard()
    }

    pub fn run_for(&mut self, duration: f64) -> Result<()> {
        let steps = (duration / self.dt).round() as i64;
        for _ in 0..steps {
            self.step()?;
        }
        Ok(())
    }

    fn guard(&self) -> Result<()> {
        let angles = self.dev.angle_states();
        for (i, &v) in self.x.iter().enumerate() {
            let bad = !v.is_finite() || (v.abs() > DIVERGENCE_LIMIT && !angles.contains(&i));
            if bad {
                return Err(Error::Diverged {
                    t: self.time(),
                    state: self.names[i].clone(),
                    value: v,
                });
            }
        }
        Ok(())
    }

    fn refresh_chord(&mut self, t: f64, y: &[f64]) {
        let n = y.len();
        let mut m = self.jacobian(t, y) * (-0.5 * self.dt);
        for i in 0..n {
            m[(i, i)] += 1.0;
        }
        self.chord = Some(m.lu());
    }

    fn step_trapezoidal(&mut self, t: f64) -> Result<()> {
        let n = self.x.len();
        let h = self.dt;
        let t1 = self.t0 + (self.k + 1) as f64 * h;
        let mut f_n = vec![0.0; n];
        self.rhs(t, &self.x, &mut f_n);
        let mut y: Vec<f64> = self.x.iter().zip(&f_n).map(|(x, f)| x + h * f).collect();
        if self.chord.is_none() {
            self.refresh_chord(t1, &y);
        }
        let mut f_y = vec![0.0; n];
        let mut g = DVector::zeros(n);
        let mut refreshes = 0;
        let mut last = f64::INFINITY;
        for it in 0..STEP_MAX_ITERS {
            self.rhs(t1, &y, &mut f_y);
            for i in 0..n {
                g[i] = y[i] - self.x[i] - 0.5 * h * (f_n[i] + f_y[i]);
            }
            let ok = self.chord.as_ref().expect("chord").solve_mut(&mut g);
            if !ok {
                return Err(Error::StepNotConverged {
                    t,
                    update: f64::NAN,
                });
            }
            let mut norm = 0.0f64;
            for i in 0..n {
                y[i] -= g[i];
                norm = norm.max(g[i].abs());
            }
            last = norm;
            if norm < STEP_TOL {
                self.x = y;
                return Ok(());
            }
            if it >= 3 && refreshes < 3 {
                self.refresh_chord(t1, &y);
                refreshes += 1;
            }
        }
        Err(Error::StepNotConverged { t, update: last })
    }

    fn step_rk4(&mut self, t: f64) {
        let n = self.x.len();
        let h = self.dt;
        let mut k1 = vec![0.0; n];
        let mut k2 = vec![0.0; n];
        let mut k3 = vec![0.0; n];
        let mut k4 = vec![0.0; n];
        let mut tmp = vec![0.0; n];
        self.rhs(t, &self.x, &mut k1);
        for i in 0..n {
            tmp[i] = self.x[i] + 0.5 * h * k1[i];
        }
        self.rhs(t + 0.5 * h, &tmp, &mut k2);
        for i in 0..n {
            tmp[i] = self.x[i] + 0.5 * h * k2[i];
        }
        self.rhs(t + 0.5 * h, &tmp, &mut k3);
        for i in 0..n {
            tmp[i] = self.x[i] + h * k3[i];
        }
        self.rhs(t + h, &tmp, &mut k4);
        for i in 0..n {
            self.x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
}

/// Upper-branch POI voltage of `e` behind `z` feeding `s`, by fixed-point
/// iteration on `v = e − z·conj(s/v)`.
fn load_flow_guess((e, z): (Complex64, Complex64), s: Complex64) -> Option<Complex64> {
    let mut v = e;
    for _ in 0..200 {
        if v.norm() < 1e-3 {
            return None;
        }
        let next = e - z * (s / v).conj();
        if (next - v).norm() < 1e-13 {
            return Some(next);
        }
        v = next;
    }
    (v.norm() > 0.1 && v.is_finite()).then_some(v)
}
