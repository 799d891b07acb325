use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::Deserialize;
use zeff_core::emt::{
    build_classical_machine, build_droop_gfm, GfmPlantModel, IdealisticMode, SimConfig, SimModel,
    CURRENT_LOOP_BANDWIDTH_HZ,
};
use zeff_core::fit::{ComplianceTable, FitConfig, Location};
use zeff_core::model::{rl_from_x_over_r, PerUnitBase, RlImpedance};
use zeff_core::scan::ScanConfig;
use zeff_core::study::{CaseId, CaseParams, PvConfig};

use crate::CliError;

pub const SCHEMA: &str = "zeff-run/1";

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(rename = "$schema")]
    pub schema: Option<String>,
    #[serde(default)]
    pub base: PerUnitBase,
    pub device: Option<DeviceSpec>,
    #[serde(default)]
    pub scan: ScanConfig,
    #[serde(default)]
    pub fit: FitConfig,
    #[serde(default)]
    pub compliance: ComplianceSection,
    #[serde(default)]
    pub sim: SimConfig,
    #[serde(default)]
    pub step: StepSection,
    #[serde(default)]
    pub pv: PvConfig,
    pub case: Option<CaseSection>,
    pub analytic: Option<AnalyticSection>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DeviceSpec {
    Idvs {
        x: f64,
        #[serde(default = "ten")]
        x_over_r: f64,
        /// Explicit resistance; overrides `x_over_r`.
        r: Option<f64>,
        #[serde(default = "one")]
        v: f64,
    },
    DroopGfm {
        #[serde(default)]
        params: GfmPlantModel,
        filter_x: Option<f64>,
        /// Grid branch reactance behind the coupling impedance, X/R 10.
        grid_branch_x: Option<f64>,
        /// `[kiv, kpv]` before scaling.
        voltage_gains: Option<[f64; 2]>,
        /// `[p, q, v]` at the POI.
        #[serde(default = "reference_point")]
        operating_point: [f64; 3],
        #[serde(default)]
        idealistic: bool,
    },
    ClassicalMachine {
        #[serde(default = "one")]
        e: f64,
        r_a: f64,
        x_dpp: f64,
    },
    Imported {
        manifest: PathBuf,
    },
}

fn ten() -> f64 {
    10.0
}

fn one() -> f64 {
    1.0
}

fn reference_point() -> [f64; 3] {
    [0.4, -0.05, 1.0]
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ComplianceSection {
    pub location: Location,
    /// Defaults to `fit.max_error_threshold_eps`.
    pub eps: Option<f64>,
    pub table: ComplianceTable,
}

impl Default for ComplianceSection {
    fn default() -> Self {
        Self {
            location: Location::Hv,
            eps: None,
            table: ComplianceTable::default(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StepSection {
    pub t_event: f64,
    pub window: f64,
    /// Grid magnitude step; defaults to −5% of the pre-event grid voltage.
    pub dv: Option<f64>,
    pub ddelta_deg: f64,
}

impl Default for StepSection {
    fn default() -> Self {
        Self {
            t_event: 0.05,
            window: 0.2,
            dv: None,
            ddelta_deg: 0.0,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaseSection {
    pub id: CaseId,
    pub params: Option<CaseParams>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalyticSection {
    pub x: f64,
    pub x_over_r: f64,
    pub r: Option<f64>,
    pub v_id: f64,
    pub v1: f64,
    pub delta1_deg: f64,
    pub v2: f64,
    pub delta2_deg: f64,
    pub t_step: f64,
    pub t_end: f64,
    pub dt: f64,
}

impl Default for AnalyticSection {
    fn default() -> Self {
        Self {
            x: 0.33,
            x_over_r: 10.0,
            r: None,
            v_id: 1.0,
            v1: 1.0,
            delta1_deg: 0.0,
            v2: 0.9,
            delta2_deg: -5.0,
            t_step: 0.0,
            t_end: 0.1,
            dt: 1e-4,
        }
    }
}

impl AnalyticSection {
    pub fn impedance(&self, base: &PerUnitBase) -> zeff_core::Result<RlImpedance> {
        match self.r {
            Some(r) => RlImpedance::new(r, self.x),
            None => rl_from_x_over_r(self.x, self.x_over_r, base),
        }
    }

    pub fn times(&self) -> Vec<f64> {
        if !(self.dt > 0.0) || !(self.t_end > self.t_step) {
            return Vec::new();
        }
        let n = ((self.t_end - self.t_step) / self.dt).round() as usize;
        (0..=n).map(|k| self.t_step + k as f64 * self.dt).collect()
    }
}

/// Prefixes a core domain error with the config section it came from.
pub fn in_section(section: &str, e: zeff_core::Error) -> CliError {
    match e {
        zeff_core::Error::Domain { what, reason } => {
            CliError::Validation(format!("{section}.{what}: {reason}"))
        }
        other => CliError::Core(other),
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            CliError::Validation(format!("cannot read config {}: {e}", path.display()))
        })?;
        let de = &mut serde_json::Deserializer::from_str(&text);
        let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let p = e.path().to_string();
            CliError::Validation(format!("{p}: {}", e.inner()))
        })?;
        if let Some(s) = &cfg.schema {
            if s != SCHEMA {
                return Err(CliError::Validation(format!(
                    "$schema: expected `{SCHEMA}`, got `{s}`"
                )));
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.scan.validate().map_err(|e| in_section("scan", e))?;
        self.fit.validate().map_err(|e| in_section("fit", e))?;
        self.sim.validate().map_err(|e| in_section("sim", e))?;
        self.pv.validate().map_err(|e| in_section("pv", e))?;
        self.compliance
            .table
            .validate()
            .map_err(|e| in_section("compliance.table", e))?;
        if let Some(eps) = self.compliance.eps {
            if !(eps > 0.0) {
                return Err(CliError::Validation(format!(
                    "compliance.eps: must be > 0, got {eps}"
                )));
            }
        }
        if !(self.step.window > 0.0 && self.step.t_event >= 0.0) {
            return Err(CliError::Validation(
                "step.window: need window > 0 and t_event >= 0".into(),
            ));
        }
        Ok(())
    }

    pub fn eps(&self) -> f64 {
        self.compliance
            .eps
            .unwrap_or(self.fit.max_error_threshold_eps)
    }

    pub fn device(&self) -> Result<&DeviceSpec, CliError> {
        self.device.as_ref().ok_or_else(|| {
            CliError::Validation("device: section required for this subcommand".into())
        })
    }

    /// Simulation model of the configured device.
    pub fn sim_model(&self) -> Result<SimModel, CliError> {
        let base = self.base;
        let m = match self.device()? {
            DeviceSpec::Idvs { x, x_over_r, r, v } => {
                let z = match r {
                    Some(r) => RlImpedance::new(*r, *x),
                    None => rl_from_x_over_r(*x, *x_over_r, &base),
                }
                .map_err(|e| in_section("device", e))?;
                SimModel::idvs_with_emf(Complex64::new(*v, 0.0), z, base)
                    .map_err(|e| in_section("device", e))?
            }
            DeviceSpec::DroopGfm {
                params,
                filter_x,
                grid_branch_x,
                voltage_gains,
                operating_point,
                idealistic,
            } => {
                let mut p = *params;
                p.base = base;
                if let Some(x) = filter_x {
                    p = p.with_filter(*x);
                }
                p.retune_current_loop(CURRENT_LOOP_BANDWIDTH_HZ);
                if let Some(x) = grid_branch_x {
                    let g = rl_from_x_over_r(*x, 10.0, &base)
                        .map_err(|e| in_section("device.grid_branch_x", e))?;
                    p = p.with_grid_branch(g);
                }
                if let Some([kiv, kpv]) = voltage_gains {
                    p = p.with_voltage_gains(*kiv, *kpv);
                }
                let [op_p, op_q, op_v] = *operating_point;
                p = p.at_operating_point(op_p, op_q, op_v);
                let mode = if *idealistic {
                    IdealisticMode::on()
                } else {
                    IdealisticMode::off()
                };
                build_droop_gfm(&p, mode).map_err(|e| in_section("device.params", e))?
            }
            DeviceSpec::ClassicalMachine { e, r_a, x_dpp } => {
                build_classical_machine(*e, *r_a, *x_dpp, base)
                    .map_err(|e| in_section("device", e))?
            }
            DeviceSpec::Imported { .. } => {
                return Err(CliError::Validation(
                    "device.kind: imported traces can be scanned and fitted but not simulated"
                        .into(),
                ))
            }
        };
        Ok(m)
    }
}
