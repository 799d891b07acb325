use num_complex::Complex64;

/// Voltage and current at one measurement node, current flowing toward the
/// POI.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct NodeSample {
    pub v: Complex64,
    pub i: Complex64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Probe {
    pub st: NodeSample,
    pub vcp: NodeSample,
    pub poi: NodeSample,
    /// Internal (controller) frequency in pu.
    pub freq: f64,
    /// Internal reference angle (rad).
    pub angle: f64,
}

/// A device connected at the POI, written as `dx/dt = f(x, v_poi)` in the
/// grid dq frame rotating at the fundamental.
pub(crate) trait Device: Send + Sync {
    fn n_states(&self) -> usize;

    fn state_names(&self) -> &'static [&'static str];

    fn eval(&self, x: &[f64], v_poi: Complex64, dx: &mut [f64]);

    /// Current leaving the device at the POI.
    fn poi_current(&self, x: &[f64]) -> Complex64;

    fn probe(&self, x: &[f64], v_poi: Complex64) -> Probe;

    /// Initial guess for an equilibrium with POI voltage `v_poi`. `export`
    /// is the complex power delivered at the POI when the caller knows it.
    fn equilibrium_guess(&self, v_poi: Complex64, export: Option<Complex64>) -> Vec<f64>;

    /// States held at their guess during the equilibrium solve. `islanded`
    /// is set when no stiff source fixes the absolute phase.
    fn pinned_states(&self, islanded: bool) -> Vec<usize>;

    /// States that are angles (excluded from the divergence guard).
    fn angle_states(&self) -> &'static [usize] {
        &[]
    }

    /// Source phasor and series impedance that roughly describe the device
    /// seen from the POI; used to seed load-flow guesses.
    fn thevenin_hint(&self) -> (Complex64, Complex64);
}
