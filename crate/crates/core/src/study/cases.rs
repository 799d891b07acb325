use std::fmt;
use std::fs::File;
use std::io::BufWriter;
use std::path::Path;
use std::str::FromStr;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::emt::{
    build_droop_gfm, simulate, DisturbanceEvent, GfmPlantModel, IdealisticMode, MeasurementPoint,
    SimConfig, SimModel, TimeSeries, DEFAULT_FILTER_X,
};
use crate::error::{Error, Result};
use crate::model::{rl_from_x_over_r, PerUnitBase};

pub const Z_GFM_RANGE: [f64; 2] = [0.125, 0.333];
pub const Z_FILTER_RANGE: [f64; 2] = [0.075, 0.1875];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CaseId {
    I,
    II,
    III,
    IV,
}

impl FromStr for CaseId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "I" | "1" => Ok(CaseId::I),
            "II" | "2" => Ok(CaseId::II),
            "III" | "3" => Ok(CaseId::III),
            "IV" | "4" => Ok(CaseId::IV),
            _ => Err(Error::domain(
                "case",
                format!("unknown case `{s}` (expected I, II, III or IV)"),
            )),
        }
    }
}

impl fmt::Display for CaseId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CaseId::I => "I",
            CaseId::II => "II",
            CaseId::III => "III",
            CaseId::IV => "IV",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CaseParams {
    /// Z_GFM values; a single value except in case II.
    pub z_gfm: Vec<f64>,
    /// Z_Filter values; a single value except in cases III and IV.
    pub z_filter: Vec<f64>,
    pub x_over_r: f64,
    pub dv: f64,
    pub ddelta_deg: f64,
    pub t_event: f64,
    pub duration: f64,
    pub base: PerUnitBase,
}

impl Default for CaseParams {
    fn default() -> Self {
        Self {
            z_gfm: vec![0.2],
            z_filter: vec![DEFAULT_FILTER_X],
            x_over_r: 10.0,
            dv: -0.1,
            ddelta_deg: -5.0,
            t_event: 0.02,
            duration: 0.3,
            base: PerUnitBase::default(),
        }
    }
}

impl CaseParams {
    /// Default settings for each case.
    pub fn for_case(case: CaseId) -> Self {
        let d = Self::default();
        match case {
            CaseId::I => d,
            CaseId::II => Self {
                z_gfm: vec![0.125, 0.2, 0.275, 0.333],
                ..d
            },
            CaseId::III => Self {
                z_filter: vec![0.075, 0.1125, 0.15, 0.1875],
                ..d
            },
            CaseId::IV => Self {
                z_gfm: vec![0.33],
                z_filter: vec![0.075, 0.1125, 0.15, 0.1875],
                ..d
            },
        }
    }

    pub fn validate(&self, case: CaseId) -> Result<()> {
        if self.z_gfm.is_empty() || self.z_filter.is_empty() {
            return Err(Error::domain("z_gfm/z_filter", "need at least one value"));
        }
        let within = |v: f64, r: [f64; 2]| v >= r[0] - 1e-12 && v <= r[1] + 1e-12;
        match case {
            CaseId::II => {
                if let Some(z) = self.z_gfm.iter().find(|&&z| !within(z, Z_GFM_RANGE)) {
                    return Err(Error::domain(
                        "z_gfm",
                        format!("{z} outside [0.125, 0.333]"),
                    ));
                }
            }
            CaseId::III | CaseId::IV => {
                if let Some(z) = self.z_filter.iter().find(|&&z| !within(z, Z_FILTER_RANGE)) {
                    return Err(Error::domain(
                        "z_filter",
                        format!("{z} outside [0.075, 0.1875]"),
                    ));
                }
            }
            CaseId::I => {}
        }
        if !matches!(case, CaseId::II) && self.z_gfm.len() != 1 {
            return Err(Error::domain(
                "z_gfm",
                format!("case {case} takes a single value"),
            ));
        }
        if matches!(case, CaseId::I | CaseId::II) && self.z_filter.len() != 1 {
            return Err(Error::domain(
                "z_filter",
                format!("case {case} takes a single value"),
            ));
        }
        for (name, v) in [("z_gfm", &self.z_gfm), ("z_filter", &self.z_filter)] {
            if let Some(z) = v.iter().find(|&&z| !(z > 0.0)) {
                return Err(Error::domain(name, format!("must be > 0, got {z}")));
            }
        }
        if !(self.x_over_r > 0.0) {
            return Err(Error::domain("x_over_r", "must be > 0"));
        }
        if !(self.t_event >= 0.0 && self.duration > 0.0) {
            return Err(Error::domain(
                "duration",
                "need t_event >= 0 and duration > 0",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeakMetrics {
    pub peak_p: f64,
    pub peak_q: f64,
    pub peak_i: f64,
    pub time_to_peak_p: f64,
    pub time_to_peak_q: f64,
    pub time_to_peak_i: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VariantKind {
    GfmIdealistic,
    GfmRealistic,
    Idvs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseVariant {
    pub label: String,
    pub kind: VariantKind,
    pub z_gfm: f64,
    pub z_filter: f64,
    /// Series reactance of the IDVS, zero for GFM variants.
    pub z_id: f64,
    pub metrics: PeakMetrics,
    #[serde(skip)]
    pub traces: TimeSeries,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseReport {
    pub case: CaseId,
    pub params: CaseParams,
    pub variants: Vec<CaseVariant>,
}

impl CaseReport {
    pub fn variant(&self, label: &str) -> Option<&CaseVariant> {
        self.variants.iter().find(|v| v.label == label)
    }

    pub fn by_kind(&self, kind: VariantKind) -> impl Iterator<Item = &CaseVariant> {
        self.variants.iter().filter(move |v| v.kind == kind)
    }

    /// Writes `case_<id>.json` and one trace CSV per variant.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let mut w = BufWriter::new(File::create(dir.join(format!("case_{}.json", self.case)))?);
        serde_json::to_writer_pretty(&mut w, self)?;
        for v in &self.variants {
            let f = File::create(dir.join(format!("case_{}_{}.csv", self.case, v.label)))?;
            v.traces.write_csv(BufWriter::new(f))?;
        }
        Ok(())
    }
}

/// Peak excursion from the pre-event value and the time from the event to
/// the first local maximum of that excursion.
fn peak(t: &[f64], x: &[f64], k_ev: usize) -> (f64, f64) {
    let x0 = x[k_ev];
    let d: Vec<f64> = x[k_ev..].iter().map(|v| (v - x0).abs()).collect();
    let max = d.iter().cloned().fold(0.0, f64::max);
    if max == 0.0 {
        return (0.0, 0.0);
    }
    // Ignore ripple well below the peak when looking for the first maximum.
    let floor = 0.05 * max;
    let mut k_peak = d.len() - 1;
    for k in 1..d.len() - 1 {
        if d[k] >= floor && d[k] >= d[k - 1] && d[k] > d[k + 1] {
            k_peak = k;
            break;
        }
    }
    (max, t[k_ev + k_peak] - t[k_ev])
}

fn metrics(ts: &TimeSeries, point: MeasurementPoint, t_event: f64) -> PeakMetrics {
    let tr = ts.channel(point).expect("simulate records all points");
    let k_ev = ts.t.iter().position(|&t| t >= t_event - 1e-12).unwrap_or(0);
    let (peak_p, time_to_peak_p) = peak(&ts.t, &tr.p, k_ev);
    let (peak_q, time_to_peak_q) = peak(&ts.t, &tr.q, k_ev);
    let (peak_i, time_to_peak_i) = peak(&ts.t, &tr.i_mag(), k_ev);
    PeakMetrics {
        peak_p,
        peak_q,
        peak_i,
        time_to_peak_p,
        time_to_peak_q,
        time_to_peak_i,
    }
}

struct Job {
    label: String,
    kind: VariantKind,
    z_gfm: f64,
    z_filter: f64,
    z_id: f64,
    model: SimModel,
}

fn gfm_job(p: &CaseParams, z_gfm: f64, z_filter: f64, realistic: bool) -> Result<Job> {
    let params = GfmPlantModel {
        base: p.base,
        ..GfmPlantModel::default()
    }
    .with_filter(z_filter)
    .with_z_gfm(z_gfm, p.x_over_r)?
    .at_operating_point(0.0, 0.0, 1.0);
    let (kind, mode, tag) = if realistic {
        (
            VariantKind::GfmRealistic,
            IdealisticMode::off(),
            "gfm_realistic",
        )
    } else {
        (
            VariantKind::GfmIdealistic,
            IdealisticMode::on(),
            "gfm_idealistic",
        )
    };
    Ok(Job {
        label: format!("{tag}_zgfm{z_gfm}_zf{z_filter}"),
        kind,
        z_gfm,
        z_filter,
        z_id: 0.0,
        model: build_droop_gfm(&params, mode)?,
    })
}

fn idvs_job(p: &CaseParams, z_gfm: f64, z_filter: f64, include_filter: bool) -> Result<Job> {
    let mut z = rl_from_x_over_r(z_gfm, p.x_over_r, &p.base)?;
    let label = if include_filter {
        let f = GfmPlantModel::default().with_filter(z_filter);
        z = z.series(&crate::model::RlImpedance::new(f.filter_r, f.filter_l)?);
        format!("idvs_zgfm{z_gfm}_plus_zf{z_filter}")
    } else {
        format!("idvs_zgfm{z_gfm}")
    };
    Ok(Job {
        label,
        kind: VariantKind::Idvs,
        z_gfm,
        z_filter,
        z_id: z.l,
        model: SimModel::idvs_with_emf(Complex64::new(1.0, 0.0), z, p.base)?,
    })
}

/// Runs the GFM and IDVS variants of `case` from a zero-power operating
/// point at 1.0 pu under the grid step in `params`. GFM peaks are measured
/// at VCP, IDVS peaks at its internal source node.
pub fn case_study(case: CaseId, params: &CaseParams, sim: &SimConfig) -> Result<CaseReport> {
    params.validate(case)?;
    let mut jobs = Vec::new();
    match case {
        CaseId::I => {
            let (zg, zf) = (params.z_gfm[0], params.z_filter[0]);
            jobs.push(gfm_job(params, zg, zf, false)?);
            jobs.push(idvs_job(params, zg, zf, false)?);
            jobs.push(idvs_job(params, zg, zf, true)?);
        }
        CaseId::II => {
            let zf = params.z_filter[0];
            for &zg in &params.z_gfm {
                jobs.push(gfm_job(params, zg, zf, false)?);
                jobs.push(idvs_job(params, zg, zf, false)?);
            }
        }
        CaseId::III | CaseId::IV => {
            let zg = params.z_gfm[0];
            let realistic = case == CaseId::IV;
            for &zf in &params.z_filter {
                jobs.push(gfm_job(params, zg, zf, realistic)?);
            }
            jobs.push(idvs_job(params, zg, params.z_filter[0], false)?);
        }
    }
    let ev = DisturbanceEvent::new(params.t_event, params.dv, params.ddelta_deg.to_radians())?;
    let cfg = SimConfig {
        t_end: params.t_event + params.duration,
        ..*sim
    };
    let variants = jobs
        .into_par_iter()
        .map(|j| {
            let mut ts = simulate(&j.model, &[ev], &cfg)?;
            ts.metadata["label"] = serde_json::Value::String(j.label.clone());
            let point = match j.kind {
                VariantKind::Idvs => MeasurementPoint::St,
                _ => MeasurementPoint::Vcp,
            };
            Ok(CaseVariant {
                metrics: metrics(&ts, point, params.t_event),
                label: j.label,
                kind: j.kind,
                z_gfm: j.z_gfm,
                z_filter: j.z_filter,
                z_id: j.z_id,
                traces: ts,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CaseReport {
        case,
        params: params.clone(),
        variants,
    })
}
