use std::io::{Read, Write};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::PerUnitBase;
use crate::error::{Error, Result};

pub const SPECTRUM_CSV_HEADER: [&str; 9] = [
    "f_hz", "y_dd_re", "y_dd_im", "y_dq_re", "y_dq_im", "y_qd_re", "y_qd_im", "y_qq_re", "y_qq_im",
];

/// One entry of the 2×2 dq admittance matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AdmittanceEntry {
    Dd,
    Dq,
    Qd,
    Qq,
}

/// Admittance sample at one perturbation frequency. `None` marks an
/// unmeasured entry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdmittancePoint {
    pub f: f64,
    pub y_dd: Option<Complex64>,
    pub y_dq: Option<Complex64>,
    pub y_qd: Option<Complex64>,
    pub y_qq: Option<Complex64>,
}

impl AdmittancePoint {
    pub fn empty(f: f64) -> Self {
        Self {
            f,
            y_dd: None,
            y_dq: None,
            y_qd: None,
            y_qq: None,
        }
    }

    /// Point carrying only the fitted `Y_qd` entry.
    pub fn qd_only(f: f64, y_qd: Complex64) -> Self {
        Self {
            y_qd: Some(y_qd),
            ..Self::empty(f)
        }
    }

    pub fn entry(&self, e: AdmittanceEntry) -> Option<Complex64> {
        match e {
            AdmittanceEntry::Dd => self.y_dd,
            AdmittanceEntry::Dq => self.y_dq,
            AdmittanceEntry::Qd => self.y_qd,
            AdmittanceEntry::Qq => self.y_qq,
        }
    }

    fn entries(&self) -> [Option<Complex64>; 4] {
        [self.y_dd, self.y_dq, self.y_qd, self.y_qq]
    }
}

/// Ordered admittance samples over a declared frequency range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SpectrumFields")]
pub struct AdmittanceSpectrum {
    pub base: PerUnitBase,
    pub f_min: f64,
    pub f_max: f64,
    pub points: Vec<AdmittancePoint>,
}

#[derive(Deserialize)]
struct SpectrumFields {
    base: PerUnitBase,
    f_min: f64,
    f_max: f64,
    points: Vec<AdmittancePoint>,
}

impl TryFrom<SpectrumFields> for AdmittanceSpectrum {
    type Error = Error;

    fn try_from(s: SpectrumFields) -> Result<Self> {
        AdmittanceSpectrum::with_range(s.base, s.f_min, s.f_max, s.points)
    }
}

impl AdmittanceSpectrum {
    /// Spectrum whose declared range is the span of its samples.
    pub fn new(base: PerUnitBase, points: Vec<AdmittancePoint>) -> Result<Self> {
        let (lo, hi) = match (points.first(), points.last()) {
            (Some(a), Some(b)) => (a.f, b.f),
            _ => return Err(Error::Spectrum("at least 2 points required, got 0".into())),
        };
        Self::with_range(base, lo, hi, points)
    }

    pub fn with_range(
        base: PerUnitBase,
        f_min: f64,
        f_max: f64,
        points: Vec<AdmittancePoint>,
    ) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::Spectrum(format!(
                "at least 2 points required, got {}",
                points.len()
            )));
        }
        if !(f_min > 0.0 && f_min <= f_max) {
            return Err(Error::Spectrum(format!("bad range [{f_min}, {f_max}]")));
        }
        for (k, p) in points.iter().enumerate() {
            if !(p.f > 0.0 && p.f.is_finite()) {
                return Err(Error::Spectrum(format!(
                    "point {k}: frequency {} not > 0",
                    p.f
                )));
            }
            if p.f < f_min || p.f > f_max {
                return Err(Error::Spectrum(format!(
                    "point {k}: {} Hz outside [{f_min}, {f_max}]",
                    p.f
                )));
            }
            if p.entries()
                .iter()
                .flatten()
                .any(|y| !(y.re.is_finite() && y.im.is_finite()))
            {
                return Err(Error::Spectrum(format!("point {k}: non-finite admittance")));
            }
        }
        if let Some(w) = points.windows(2).find(|w| w[1].f <= w[0].f) {
            return Err(Error::Spectrum(format!(
                "frequencies not strictly increasing ({} then {})",
                w[0].f, w[1].f
            )));
        }
        Ok(Self {
            base,
            f_min,
            f_max,
            points,
        })
    }

    pub fn frequencies(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.f).collect()
    }

    /// Samples of one entry; fails if any point lacks it.
    pub fn entry_values(&self, e: AdmittanceEntry) -> Result<Vec<Complex64>> {
        self.points
            .iter()
            .map(|p| {
                p.entry(e)
                    .ok_or_else(|| Error::Spectrum(format!("entry {e:?} unmeasured at {} Hz", p.f)))
            })
            .collect()
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(SPECTRUM_CSV_HEADER)?;
        for p in &self.points {
            let mut row = vec![p.f.to_string()];
            for y in p.entries() {
                match y {
                    Some(y) => {
                        row.push(y.re.to_string());
                        row.push(y.im.to_string());
                    }
                    None => {
                        row.push(String::new());
                        row.push(String::new());
                    }
                }
            }
            out.write_record(&row)?;
        }
        out.flush()?;
        Ok(())
    }

    /// Reads the CSV layout written by [`write_csv`](Self::write_csv). The
    /// CSV carries no base, so the caller supplies it.
    pub fn read_csv<R: Read>(r: R, base: PerUnitBase) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(r);
        let header = rdr.headers()?.clone();
        if header
            .iter()
            .map(str::trim)
            .ne(SPECTRUM_CSV_HEADER.iter().copied())
        {
            return Err(Error::Spectrum(format!(
                "unexpected header `{}`",
                header.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let mut points = Vec::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let cell = |i: usize| -> Result<Option<f64>> {
                let s = rec.get(i).unwrap_or("").trim();
                if s.is_empty() {
                    return Ok(None);
                }
                s.parse::<f64>().map(Some).map_err(|e| {
                    Error::Spectrum(format!(
                        "row {}: column {}: {e}",
                        line + 1,
                        SPECTRUM_CSV_HEADER[i]
                    ))
                })
            };
            let f = cell(0)?
                .ok_or_else(|| Error::Spectrum(format!("row {}: missing f_hz", line + 1)))?;
            let mut ys = [None; 4];
            for (k, y) in ys.iter_mut().enumerate() {
                *y = match (cell(1 + 2 * k)?, cell(2 + 2 * k)?) {
                    (Some(re), Some(im)) => Some(Complex64::new(re, im)),
                    (None, None) => None,
                    _ => {
                        return Err(Error::Spectrum(format!(
                            "row {}: half-empty complex cell in {}",
                            line + 1,
                            SPECTRUM_CSV_HEADER[1 + 2 * k]
                        )))
                    }
                };
            }
            points.push(AdmittancePoint {
                f,
                y_dd: ys[0],
                y_dq: ys[1],
                y_qd: ys[2],
                y_qq: ys[3],
            });
        }
        Self::new(base, points)
    }
}

/// Magnitude peak of one admittance entry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Resonance {
    pub f_hz: f64,
    pub peak_mag: f64,
    /// False when the largest sample sits on the grid boundary and no
    /// interpolation was possible.
    pub refined: bool,
}

/// Locates the magnitude peak of `entry`, refined by a parabola through the
/// peak sample and its neighbours in (frequency, ln|Y|).
pub fn spectrum_resonance(spec: &AdmittanceSpectrum, entry: AdmittanceEntry) -> Result<Resonance> {
    let ys = spec.entry_values(entry)?;
    if ys.len() < 3 {
        return Err(Error::Spectrum(format!(
            "resonance needs at least 3 points, got {}",
            ys.len()
        )));
    }
    let f = spec.frequencies();
    let m: Vec<f64> = ys.iter().map(|y| y.norm().ln()).collect();
    let mut k = 0;
    for i in 1..m.len() {
        if m[i] > m[k] {
            k = i;
        }
    }
    if k == 0 || k == m.len() - 1 {
        return Ok(Resonance {
            f_hz: f[k],
            peak_mag: m[k].exp(),
            refined: false,
        });
    }
    let (x0, x1, x2) = (f[k - 1], f[k], f[k + 1]);
    let (y0, y1, y2) = (m[k - 1], m[k], m[k + 1]);
    // Newton divided differences of the interpolating parabola.
    let d01 = (y1 - y0) / (x1 - x0);
    let d12 = (y2 - y1) / (x2 - x1);
    let a = (d12 - d01) / (x2 - x0);
    if !(a < 0.0) {
        return Ok(Resonance {
            f_hz: x1,
            peak_mag: y1.exp(),
            refined: false,
        });
    }
    let b = d01 - a * (x0 + x1);
    let fv = -b / (2.0 * a);
    let yv = y0 + d01 * (fv - x0) + a * (fv - x0) * (fv - x1);
    Ok(Resonance {
        f_hz: fv,
        peak_mag: yv.exp(),
        refined: true,
    })
}
