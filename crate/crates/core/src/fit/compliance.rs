use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::TheveninEquivalent;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Location {
    #[serde(rename = "LV")]
    Lv,
    #[serde(rename = "MV")]
    Mv,
    #[serde(rename = "HV")]
    Hv,
}

impl FromStr for Location {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "LV" => Ok(Location::Lv),
            "MV" => Ok(Location::Mv),
            "HV" => Ok(Location::Hv),
            _ => Err(Error::domain(
                "location",
                format!("unknown location `{s}` (expected LV, MV or HV)"),
            )),
        }
    }
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Location::Lv => "LV",
            Location::Mv => "MV",
            Location::Hv => "HV",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReactanceRange {
    pub x_min: f64,
    pub x_default: f64,
    pub x_max: f64,
}

/// Effective-reactance ranges per connection level (pu, 50 Hz basis).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComplianceTable {
    pub lv: ReactanceRange,
    pub mv: ReactanceRange,
    pub hv: ReactanceRange,
    pub r_over_x: f64,
    pub basis_hz: f64,
}

impl Default for ComplianceTable {
    fn default() -> Self {
        let row = |x_min, x_default, x_max| ReactanceRange {
            x_min,
            x_default,
            x_max,
        };
        Self {
            lv: row(0.17, 0.25, 0.27),
            mv: row(0.25, 0.33, 0.35),
            hv: row(0.40, 0.48, 0.50),
            r_over_x: 0.1,
            basis_hz: 50.0,
        }
    }
}

impl ComplianceTable {
    pub fn row(&self, location: Location) -> ReactanceRange {
        match location {
            Location::Lv => self.lv,
            Location::Mv => self.mv,
            Location::Hv => self.hv,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, r) in [("lv", self.lv), ("mv", self.mv), ("hv", self.hv)] {
            if !(r.x_min < r.x_default && r.x_default < r.x_max) {
                return Err(Error::domain(name, "need x_min < x_default < x_max"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplianceReport {
    pub r_eff: f64,
    pub l_eff: f64,
    pub x_eff: f64,
    pub x_over_r: f64,
    pub rms_error: f64,
    pub resonance_hz: f64,
    pub location: Location,
    pub in_range: bool,
    pub eps: f64,
    pub eps_satisfied: bool,
    pub pass: bool,
    /// Frequency basis of the reactance table. Per-unit reactances are
    /// compared directly whatever the study frequency.
    pub table_basis_hz: f64,
}

pub fn check_compliance(
    fit: &TheveninEquivalent,
    location: Location,
    table: &ComplianceTable,
    eps: f64,
) -> Result<ComplianceReport> {
    if !(eps > 0.0) {
        return Err(Error::domain("eps", format!("must be > 0, got {eps}")));
    }
    table.validate()?;
    let row = table.row(location);
    let x = fit.x_eff_at_f1;
    let in_range = row.x_min <= x && x <= row.x_max;
    let eps_satisfied = fit.rms_error <= eps;
    Ok(ComplianceReport {
        r_eff: fit.r_eff,
        l_eff: fit.l_eff,
        x_eff: x,
        x_over_r: fit.x_over_r(),
        rms_error: fit.rms_error,
        resonance_hz: fit.resonance_freq,
        location,
        in_range,
        eps,
        eps_satisfied,
        pass: in_range && eps_satisfied,
        table_basis_hz: table.basis_hz,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn eq(x: f64, rms: f64) -> TheveninEquivalent {
        TheveninEquivalent::new(x / 10.0, x, rms, 58.0).unwrap()
    }

    #[test]
    fn table_rows() {
        let t = ComplianceTable::default();
        let r = check_compliance(&eq(0.447, 0.00037), Location::Hv, &t, 0.01).unwrap();
        assert!(r.in_range && r.eps_satisfied && r.pass);
        let r = check_compliance(&eq(0.39, 0.0), Location::Hv, &t, 0.01).unwrap();
        assert!(!r.in_range && !r.pass);
        let r = check_compliance(&eq(0.33, 0.0), Location::Mv, &t, 0.01).unwrap();
        assert!(r.pass);
    }

    #[test]
    fn eps_gate() {
        let t = ComplianceTable::default();
        let r = check_compliance(&eq(0.45, 0.02), Location::Hv, &t, 0.01).unwrap();
        assert!(r.in_range && !r.eps_satisfied && !r.pass);
        assert!(check_compliance(&eq(0.45, 0.0), Location::Hv, &t, 0.0).is_err());
    }

    #[test]
    fn location_parsing() {
        assert_eq!("hv".parse::<Location>().unwrap(), Location::Hv);
        assert!("EHV".parse::<Location>().is_err());
    }

    #[test]
    fn report_json_keys() {
        let r = check_compliance(
            &eq(0.48, 0.0),
            Location::Hv,
            &ComplianceTable::default(),
            0.01,
        )
        .unwrap();
        let v = serde_json::to_value(&r).unwrap();
        for k in [
            "r_eff",
            "l_eff",
            "x_eff",
            "x_over_r",
            "rms_error",
            "resonance_hz",
            "location",
            "in_range",
            "eps",
            "eps_satisfied",
            "pass",
        ] {
            assert!(v.get(k).is_some(), "{k}");
        }
        assert_eq!(v["location"], "HV");
    }

    #[test]
    fn pure_function() {
        let t = ComplianceTable::default();
        let a = check_compliance(&eq(0.43, 0.004), Location::Hv, &t, 0.01).unwrap();
        let b = check_compliance(&eq(0.43, 0.004), Location::Hv, &t, 0.01).unwrap();
        assert_eq!(a, b);
    }
}
