use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{assemble, response_from_window, ScanConfig, SweepReport};
use crate::emt::{Axis, MeasurementPoint, TimeSeries};
use crate::error::{Error, Result};
use crate::model::{AdmittanceSpectrum, PerUnitBase};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub file: String,
    pub f_hz: f64,
    pub axis: Axis,
    pub amplitude: f64,
    pub dt: f64,
    pub settle_cycles: usize,
    pub measure_periods: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawManifest {
    pub base: PerUnitBase,
    pub f_min: f64,
    pub f_max: f64,
    pub entries: Vec<ManifestEntry>,
}

/// Writes the accepted POI window of every column plus `manifest.json`.
pub fn export_raw(dir: &Path, report: &SweepReport, cfg: &ScanConfig) -> Result<RawManifest> {
    std::fs::create_dir_all(dir)?;
    let mut entries = Vec::new();
    for (k, r) in report.responses.iter().enumerate() {
        let axis = match r.injected_axis {
            Axis::D => "d",
            Axis::Q => "q",
        };
        let file = format!("point_{k:03}_{axis}.csv");
        r.window
            .write_csv(BufWriter::new(File::create(dir.join(&file))?))?;
        entries.push(ManifestEntry {
            file,
            f_hz: r.f,
            axis: r.injected_axis,
            amplitude: cfg.amplitude,
            dt: r.dt,
            settle_cycles: r.settle_cycles,
            measure_periods: cfg.measure_periods,
        });
    }
    let manifest = RawManifest {
        base: report.spectrum.base,
        f_min: report.spectrum.f_min,
        f_max: report.spectrum.f_max,
        entries,
    };
    let mut w = BufWriter::new(File::create(dir.join(MANIFEST_FILE))?);
    serde_json::to_writer_pretty(&mut w, &manifest)?;
    Ok(manifest)
}

fn import_error(file: &str, reason: impl Into<String>) -> Error {
    Error::TraceImport {
        file: file.to_string(),
        reason: reason.into(),
    }
}

/// Rebuilds a spectrum from exported or vendor traces listed in a manifest.
pub fn import_trace_scan(manifest_path: &Path) -> Result<AdmittanceSpectrum> {
    let manifest: RawManifest =
        serde_json::from_reader(BufReader::new(File::open(manifest_path)?))?;
    let dir = manifest_path.parent().unwrap_or(Path::new("."));
    let mut cols = Vec::with_capacity(manifest.entries.len());
    for e in &manifest.entries {
        let ts = TimeSeries::read_csv(BufReader::new(
            File::open(dir.join(&e.file)).map_err(|err| import_error(&e.file, err.to_string()))?,
        ))
        .map_err(|err| import_error(&e.file, err.to_string()))?;
        if ts.channel(MeasurementPoint::Poi).is_none() {
            return Err(import_error(&e.file, "missing POI channel"));
        }
        let dt = ts
            .uniform_dt()
            .map_err(|err| import_error(&e.file, err.to_string()))?;
        if ((dt - e.dt) / e.dt).abs() > 1e-6 {
            return Err(import_error(
                &e.file,
                format!("sample spacing {dt} does not match manifest dt {}", e.dt),
            ));
        }
        let expected = e.measure_periods as f64 / (e.f_hz * e.dt);
        if (ts.len() as f64 - expected).abs() > 1.0 {
            return Err(import_error(
                &e.file,
                format!(
                    "{} samples, expected {expected:.1} for {} periods",
                    ts.len(),
                    e.measure_periods
                ),
            ));
        }
        let (a, b) = response_from_window(&ts, e.dt, e.f_hz, e.axis)
            .map_err(|err| import_error(&e.file, err.to_string()))?;
        cols.push((e.f_hz, e.axis, a, b));
    }
    assemble(manifest.base, manifest.f_min, manifest.f_max, &cols)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic::{idvs_admittance, IdvsConfig};
    use crate::emt::{build_idvs, NodeSample, Probe};
    use crate::model::{rl_from_x_over_r, AdmittanceEntry};
    use crate::scan::sweep_detailed;
    use num_complex::Complex64;
    use std::f64::consts::PI;

    fn idvs() -> IdvsConfig {
        let b = PerUnitBase::hz60();
        IdvsConfig::new(1.0, rl_from_x_over_r(0.48, 10.0, &b).unwrap(), b).unwrap()
    }

    #[test]
    fn export_then_import_is_bit_identical() {
        let cfg = ScanConfig {
            n_points: 4,
            f_min: 30.0,
            q_axis: true,
            ..ScanConfig::default()
        };
        let report = sweep_detailed(&build_idvs(&idvs()), &cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let m = export_raw(dir.path(), &report, &cfg).unwrap();
        assert_eq!(m.entries.len(), 8);
        let back = import_trace_scan(&dir.path().join(MANIFEST_FILE)).unwrap();
        assert_eq!(back, report.spectrum);
    }

    /// Traces synthesised from the analytic admittance, no simulation.
    fn synthetic(dir: &Path, dt_manifest: f64) -> std::path::PathBuf {
        let cfg_i = idvs();
        let a = 0.01;
        let mut entries = Vec::new();
        for (k, &f) in [7.0, 19.0, 43.0].iter().enumerate() {
            let y = idvs_admittance(&cfg_i, f).unwrap();
            let m = 1000usize;
            let dt = 1.0 / (f * m as f64);
            let mut ts = TimeSeries::with_points(&[MeasurementPoint::Poi]);
            for n in 0..10 * m {
                let t = n as f64 * dt;
                let ph = Complex64::from_polar(1.0, 2.0 * PI * f * t);
                let re = |c: Complex64| (c * ph).re;
                let probe = Probe {
                    poi: NodeSample {
                        v: Complex64::new(1.0 + a * re(Complex64::new(1.0, 0.0)), 0.0),
                        i: Complex64::new(-a * re(y.dd), -a * re(y.qd)),
                    },
                    ..Probe::default()
                };
                ts.record(t, &probe);
            }
            let file = format!("syn_{k}.csv");
            ts.write_csv(File::create(dir.join(&file)).unwrap())
                .unwrap();
            entries.push(ManifestEntry {
                file,
                f_hz: f,
                axis: Axis::D,
                amplitude: a,
                dt: if k == 1 { dt_manifest } else { dt },
                settle_cycles: 0,
                measure_periods: 10,
            });
        }
        let m = RawManifest {
            base: cfg_i.base,
            f_min: 5.0,
            f_max: 100.0,
            entries,
        };
        let path = dir.join(MANIFEST_FILE);
        serde_json::to_writer(File::create(&path).unwrap(), &m).unwrap();
        path
    }

    #[test]
    fn synthetic_traces_reproduce_analytic_spectrum() {
        let dir = tempfile::tempdir().unwrap();
        let path = synthetic(dir.path(), 1.0 / (19.0 * 1000.0));
        let s = import_trace_scan(&path).unwrap();
        for (p, y) in s
            .points
            .iter()
            .zip(s.entry_values(AdmittanceEntry::Qd).unwrap())
        {
            let exact = idvs_admittance(&idvs(), p.f).unwrap().qd;
            assert!((y - exact).norm() / exact.norm() < 1e-9);
        }
    }

    #[test]
    fn dt_mismatch_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = synthetic(dir.path(), 2e-5);
        let e = import_trace_scan(&path).unwrap_err();
        assert!(
            matches!(e, Error::TraceImport { ref file, .. } if file == "syn_1.csv"),
            "{e}"
        );
    }
}
