use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::device::Device;
use super::gfm::{GfmDevice, GfmPlantModel, IdealisticMode};
use super::idvs::{SourceBehindRl, IDVS_STATES, MACHINE_STATES};
use crate::analytic::IdvsConfig;
use crate::error::{Error, Result};
use crate::model::{PerUnitBase, RlImpedance};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MachineConfig {
    pub e: f64,
    pub r_a: f64,
    pub x_dpp: f64,
    pub base: PerUnitBase,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DeviceModel {
    Idvs {
        cfg: IdvsConfig,
        emf_angle: f64,
    },
    DroopGfm {
        params: GfmPlantModel,
        mode: IdealisticMode,
    },
    ClassicalMachine(MachineConfig),
}

/// Stiff grid phasor at the POI before any event.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSource {
    pub v: f64,
    pub delta: f64,
}

impl Default for GridSource {
    fn default() -> Self {
        Self { v: 1.0, delta: 0.0 }
    }
}

impl GridSource {
    pub fn phasor(&self) -> Complex64 {
        Complex64::from_polar(self.v, self.delta)
    }
}

/// A device under test together with the grid it is connected to.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimModel {
    pub device: DeviceModel,
    pub grid: GridSource,
}

pub fn build_idvs(cfg: &IdvsConfig) -> SimModel {
    SimModel {
        device: DeviceModel::Idvs {
            cfg: *cfg,
            emf_angle: 0.0,
        },
        grid: GridSource::default(),
    }
}

pub fn build_droop_gfm(params: &GfmPlantModel, mode: IdealisticMode) -> Result<SimModel> {
    params.validate()?;
    Ok(SimModel {
        device: DeviceModel::DroopGfm {
            params: *params,
            mode,
        },
        grid: GridSource::default(),
    })
}

pub fn build_classical_machine(
    e: f64,
    r_a: f64,
    x_dpp: f64,
    base: PerUnitBase,
) -> Result<SimModel> {
    if !(x_dpp > 0.0) {
        return Err(Error::domain("x_dpp", format!("must be > 0, got {x_dpp}")));
    }
    if !(e > 0.0) {
        return Err(Error::domain("e", format!("must be > 0, got {e}")));
    }
    RlImpedance::new(r_a, x_dpp)?;
    Ok(SimModel {
        device: DeviceModel::ClassicalMachine(MachineConfig {
            e,
            r_a,
            x_dpp,
            base,
        }),
        grid: GridSource::default(),
    })
}

impl SimModel {
    /// Source `emf` (complex, pu) behind `z`.
    pub fn idvs_with_emf(emf: Complex64, z: RlImpedance, base: PerUnitBase) -> Result<Self> {
        let cfg = IdvsConfig::new(emf.norm(), z, base)?;
        Ok(SimModel {
            device: DeviceModel::Idvs {
                cfg,
                emf_angle: emf.arg(),
            },
            grid: GridSource::default(),
        })
    }

    pub fn with_grid(mut self, v: f64, delta: f64) -> Self {
        self.grid = GridSource { v, delta };
        self
    }

    pub fn base(&self) -> PerUnitBase {
        match &self.device {
            DeviceModel::Idvs { cfg, .. } => cfg.base,
            DeviceModel::DroopGfm { params, .. } => params.base,
            DeviceModel::ClassicalMachine(m) => m.base,
        }
    }

    pub fn kind(&self) -> &'static str {
        match &self.device {
            DeviceModel::Idvs { .. } => "idvs",
            DeviceModel::DroopGfm { .. } => "droop_gfm",
            DeviceModel::ClassicalMachine(_) => "classical_machine",
        }
    }

    pub(crate) fn instantiate(&self) -> Result<Box<dyn Device>> {
        Ok(match &self.device {
            DeviceModel::Idvs { cfg, emf_angle } => {
                if !(cfg.z.l > 0.0) {
                    return Err(Error::SingularImpedance(
                        "simulated branch needs l > 0".into(),
                    ));
                }
                Box::new(SourceBehindRl {
                    emf: Complex64::from_polar(cfg.v_id, *emf_angle),
                    z: cfg.z,
                    omega_b: cfg.base.omega1,
                    names: IDVS_STATES,
                })
            }
            DeviceModel::ClassicalMachine(m) => Box::new(SourceBehindRl {
                emf: Complex64::new(m.e, 0.0),
                z: RlImpedance::new(m.r_a, m.x_dpp)?,
                omega_b: m.base.omega1,
                names: MACHINE_STATES,
            }),
            DeviceModel::DroopGfm { params, mode } => Box::new(GfmDevice::new(params, *mode)?),
        })
    }
}
