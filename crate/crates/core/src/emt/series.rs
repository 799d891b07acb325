use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::device::{NodeSample, Probe};
use super::measure_pq;
use crate::error::{Error, Result};
use crate::model::DqPhasor;

pub const TRACE_CSV_HEADER: &str = "t,point,v_d,v_q,i_d,i_q,p,q";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MeasurementPoint {
    #[serde(rename = "ST")]
    St,
    #[serde(rename = "VCP")]
    Vcp,
    #[serde(rename = "POI")]
    Poi,
}

impl MeasurementPoint {
    pub const ALL: [MeasurementPoint; 3] = [
        MeasurementPoint::St,
        MeasurementPoint::Vcp,
        MeasurementPoint::Poi,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MeasurementPoint::St => "ST",
            MeasurementPoint::Vcp => "VCP",
            MeasurementPoint::Poi => "POI",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.name() == s)
    }

    fn select(self, probe: &Probe) -> NodeSample {
        match self {
            MeasurementPoint::St => probe.st,
            MeasurementPoint::Vcp => probe.vcp,
            MeasurementPoint::Poi => probe.poi,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointTrace {
    pub v: Vec<DqPhasor>,
    pub i: Vec<DqPhasor>,
    pub p: Vec<f64>,
    pub q: Vec<f64>,
}

impl PointTrace {
    fn push(&mut self, s: NodeSample) {
        let (v, i) = (DqPhasor::from(s.v), DqPhasor::from(s.i));
        let (p, q) = measure_pq(v, i);
        self.v.push(v);
        self.i.push(i);
        self.p.push(p);
        self.q.push(q);
    }

    pub fn i_mag(&self) -> Vec<f64> {
        self.i.iter().map(DqPhasor::magnitude).collect()
    }

    pub fn v_mag(&self) -> Vec<f64> {
        self.v.iter().map(DqPhasor::magnitude).collect()
    }

    pub fn v_angle(&self) -> Vec<f64> {
        self.v.iter().map(DqPhasor::angle).collect()
    }
}

/// Uniformly sampled traces at a set of measurement points.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TimeSeries {
    pub t: Vec<f64>,
    pub points: Vec<(MeasurementPoint, PointTrace)>,
    /// Internal frequency (pu); empty for imported traces.
    pub freq: Vec<f64>,
    /// Internal reference angle (rad); empty for imported traces.
    pub angle: Vec<f64>,
    pub metadata: serde_json::Value,
}

impl TimeSeries {
    pub fn with_points(points: &[MeasurementPoint]) -> Self {
        Self {
            points: points.iter().map(|&p| (p, PointTrace::default())).collect(),
            ..Self::default()
        }
    }

    pub(crate) fn record(&mut self, t: f64, probe: &Probe) {
        self.t.push(t);
        self.freq.push(probe.freq);
        self.angle.push(probe.angle);
        for (point, trace) in &mut self.points {
            trace.push(point.select(probe));
        }
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn channel(&self, point: MeasurementPoint) -> Option<&PointTrace> {
        self.points
            .iter()
            .find(|(p, _)| *p == point)
            .map(|(_, tr)| tr)
    }

    /// Voltage angle at `point` measured from the internal reference angle,
    /// wrapped to (−π, π].
    pub fn internal_frame_angle(&self, point: MeasurementPoint) -> Option<Vec<f64>> {
        let tr = self.channel(point)?;
        if self.angle.len() != self.t.len() {
            return None;
        }
        Some(
            tr.v_angle()
                .iter()
                .zip(&self.angle)
                .map(|(a, r)| {
                    let d = (a - r).rem_euclid(2.0 * std::f64::consts::PI);
                    if d > std::f64::consts::PI {
                        d - 2.0 * std::f64::consts::PI
                    } else {
                        d
                    }
                })
                .collect(),
        )
    }

    /// Sample spacing, checked for uniformity to a relative 1e-9.
    pub fn uniform_dt(&self) -> Result<f64> {
        if self.t.len() < 2 {
            return Err(Error::domain("time series", "needs at least 2 samples"));
        }
        let dt = (self.t[self.t.len() - 1] - self.t[0]) / (self.t.len() - 1) as f64;
        for (k, w) in self.t.windows(2).enumerate() {
            if ((w[1] - w[0]) - dt).abs() > 1e-9 * dt.max(1e-12) + 1e-15 {
                return Err(Error::domain(
                    "time series",
                    format!("non-uniform spacing at sample {k}"),
                ));
            }
        }
        Ok(dt)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(TRACE_CSV_HEADER.split(','))?;
        for (point, tr) in &self.points {
            for k in 0..self.t.len() {
                wr.write_record([
                    self.t[k].to_string(),
                    point.name().to_string(),
                    tr.v[k].d.to_string(),
                    tr.v[k].q.to_string(),
                    tr.i[k].d.to_string(),
                    tr.i[k].q.to_string(),
                    tr.p[k].to_string(),
                    tr.q[k].to_string(),
                ])?;
            }
        }
        wr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(r);
        let header: Vec<String> = rd.headers()?.iter().map(str::to_owned).collect();
        if header.join(",") != TRACE_CSV_HEADER {
            return Err(Error::domain(
                "trace csv",
                format!("expected header `{TRACE_CSV_HEADER}`"),
            ));
        }
        let mut ts = TimeSeries::default();
        let mut times: Vec<(MeasurementPoint, Vec<f64>)> = Vec::new();
        for (row, rec) in rd.records().enumerate() {
            let rec = rec?;
            let num = |k: usize| -> Result<f64> {
                rec.get(k)
                    .filter(|s| !s.is_empty())
                    .ok_or_else(|| {
                        Error::domain("trace csv", format!("row {}: missing column {k}", row + 2))
                    })?
                    .parse::<f64>()
                    .map_err(|e| Error::domain("trace csv", format!("row {}: {e}", row + 2)))
            };
            let point = MeasurementPoint::parse(rec.get(1).unwrap_or("")).ok_or_else(|| {
                Error::domain("trace csv", format!("row {}: unknown point", row + 2))
            })?;
            let t = num(0)?;
            let v = DqPhasor::new(num(2)?, num(3)?);
            let i = DqPhasor::new(num(4)?, num(5)?);
            let (p, q) = (num(6)?, num(7)?);
            if times.last().map(|(pt, _)| *pt) != Some(point) {
                if times.iter().any(|(pt, _)| *pt == point) {
                    return Err(Error::domain(
                        "trace csv",
                        format!("point {} split into blocks", point.name()),
                    ));
                }
                times.push((point, Vec::new()));
                ts.points.push((point, PointTrace::default()));
            }
            times.last_mut().expect("block").1.push(t);
            let tr = &mut ts.points.last_mut().expect("block").1;
            tr.v.push(v);
            tr.i.push(i);
            tr.p.push(p);
            tr.q.push(q);
        }
        let Some((_, first)) = times.first() else {
            return Err(Error::domain("trace csv", "no samples"));
        };
        if times.iter().any(|(_, t)| t != first) {
            return Err(Error::domain(
                "trace csv",
                "measurement points have different time grids",
            ));
        }
        ts.t = first.clone();
        Ok(ts)
    }
}
