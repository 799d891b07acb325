use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use zeff_core::analytic::{idvs_transient_pq, thevenin_yqd, IdvsConfig, VoltageStep};
use zeff_core::emt::{DisturbanceEvent, SimModel};
use zeff_core::fit::{check_compliance, fit as fit_spectrum, ComplianceReport, FitFlags};
use zeff_core::model::{AdmittanceEntry, AdmittanceSpectrum, TheveninEquivalent};
use zeff_core::scan::{export_raw, import_trace_scan, sweep_detailed};
use zeff_core::study::{
    case_study, pv_equivalent_emf, pv_trace, step_compare, CaseParams, PvCurve, PvSubject,
};

use crate::config::{in_section, DeviceSpec, RunConfig};
use crate::{CliError, EquivArgs, FitArgs, Global, PvArgs};

pub struct Context {
    pub cfg: RunConfig,
    pub out: PathBuf,
    pub keep_raw: bool,
    pub stable: bool,
}

impl Context {
    pub fn new(g: &Global) -> Result<Self, CliError> {
        let mut cfg = match &g.config {
            Some(p) => RunConfig::load(p)?,
            None => serde_json::from_str("{}").map_err(|e| CliError::Validation(e.to_string()))?,
        };
        if let Some(n) = g.points {
            cfg.scan.n_points = n;
        }
        if let Some(eps) = g.eps {
            cfg.compliance.eps = Some(eps);
        }
        if g.parallel == Some(1) {
            cfg.scan.parallel = false;
        }
        cfg.validate()?;
        Ok(Self {
            cfg,
            out: g.out.clone(),
            keep_raw: g.keep_raw,
            stable: g.stable_output,
        })
    }

    fn create_out(&self) -> Result<(), CliError> {
        std::fs::create_dir_all(&self.out)?;
        Ok(())
    }

    fn file(&self, name: &str) -> Result<BufWriter<File>, CliError> {
        Ok(BufWriter::new(File::create(self.out.join(name))?))
    }

    fn write_json<T: Serialize>(&self, name: &str, v: &T) -> Result<(), CliError> {
        let mut w = self.file(name)?;
        serde_json::to_writer_pretty(&mut w, v).map_err(zeff_core::Error::from)?;
        Ok(())
    }

    /// `run.json`: what produced the outputs. Timestamps are left out under
    /// `--stable-output`.
    fn write_meta(&self, subcommand: &str, extra: Value) -> Result<(), CliError> {
        let mut meta = json!({
            "tool": "zeff",
            "version": env!("CARGO_PKG_VERSION"),
            "subcommand": subcommand,
            "details": extra,
        });
        if !self.stable {
            let secs = std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0);
            meta["created_unix"] = json!(secs);
        }
        self.write_json("run.json", &meta)
    }
}

fn warn(msg: &str) {
    eprintln!("warning: {msg}");
}

/// Scans the configured device, or rebuilds a spectrum from imported traces.
fn acquire_spectrum(ctx: &Context) -> Result<(AdmittanceSpectrum, Vec<String>), CliError> {
    if let DeviceSpec::Imported { manifest } = ctx.cfg.device()? {
        return Ok((import_trace_scan(manifest)?, Vec::new()));
    }
    let model = ctx.cfg.sim_model()?;
    let report = sweep_detailed(&model, &ctx.cfg.scan).map_err(|e| in_section("scan", e))?;
    if ctx.keep_raw {
        export_raw(&ctx.out.join("raw"), &report, &ctx.cfg.scan)?;
    }
    let mut warnings = report.warnings.clone();
    for f in &report.guarded {
        warnings.push(format!("{f} Hz skipped: within the fundamental guard band"));
    }
    for w in &warnings {
        warn(w);
    }
    Ok((report.spectrum, warnings))
}

fn read_spectrum(path: &Path, ctx: &Context) -> Result<AdmittanceSpectrum, CliError> {
    let f = File::open(path)
        .map_err(|e| CliError::Validation(format!("cannot open {}: {e}", path.display())))?;
    let r = BufReader::new(f);
    let is_json = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("json"));
    let parsed = if is_json {
        serde_json::from_reader(r).map_err(zeff_core::Error::from)
    } else {
        AdmittanceSpectrum::read_csv(r, ctx.cfg.base)
    };
    parsed.map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
}

pub fn scan(ctx: &Context) -> Result<(), CliError> {
    ctx.create_out()?;
    let (spec, warnings) = acquire_spectrum(ctx)?;
    spec.write_csv(ctx.file("spectrum.csv")?)?;
    ctx.write_json("spectrum.json", &spec)?;
    ctx.write_meta(
        "scan",
        json!({ "points": spec.points.len(), "scan": ctx.cfg.scan, "warnings": warnings }),
    )?;
    println!(
        "{} points written to {}",
        spec.points.len(),
        ctx.out.join("spectrum.csv").display()
    );
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
struct FitFile {
    #[serde(flatten)]
    report: ComplianceReport,
    f1_hz: f64,
    flags: FitFlags,
}

fn fitted(
    ctx: &Context,
    spec: &AdmittanceSpectrum,
) -> Result<(TheveninEquivalent, FitFlags), CliError> {
    let r = fit_spectrum(spec, &ctx.cfg.fit).map_err(|e| in_section("fit", e))?;
    Ok((r.equivalent, r.flags))
}

pub fn fit(ctx: &Context, args: &FitArgs, overlay: bool) -> Result<(), CliError> {
    ctx.create_out()?;
    let spec = match &args.spectrum {
        Some(p) => read_spectrum(p, ctx)?,
        None => acquire_spectrum(ctx)?.0,
    };
    let (eq, flags) = fitted(ctx, &spec)?;
    let report = check_compliance(
        &eq,
        ctx.cfg.compliance.location,
        &ctx.cfg.compliance.table,
        ctx.cfg.eps(),
    )
    .map_err(|e| in_section("compliance", e))?;
    let f1 = spec.base.f1;
    ctx.write_json(
        "fit.json",
        &FitFile {
            report: report.clone(),
            f1_hz: f1,
            flags,
        },
    )?;
    if overlay {
        let ys = spec.entry_values(AdmittanceEntry::Qd)?;
        let mut w = csv::Writer::from_writer(ctx.file("fit_overlay.csv")?);
        w.write_record([
            "f_hz",
            "mag_full",
            "mag_th",
            "phase_full_deg",
            "phase_th_deg",
        ])
        .map_err(zeff_core::Error::from)?;
        for (f, y) in spec.frequencies().into_iter().zip(ys) {
            let th = thevenin_yqd(eq.r_eff, eq.l_eff, f1, f);
            w.write_record([
                f.to_string(),
                y.norm().to_string(),
                th.norm().to_string(),
                y.arg().to_degrees().to_string(),
                th.arg().to_degrees().to_string(),
            ])
            .map_err(zeff_core::Error::from)?;
        }
        w.flush()?;
    }
    ctx.write_meta(
        if overlay { "fit" } else { "comply" },
        json!({ "fit": ctx.cfg.fit }),
    )?;
    println!(
        "r_eff = {:.6}  x_eff = {:.6}  X/R = {:.3}  rms = {:.3e}  resonance = {:.3} Hz  {} {}",
        report.r_eff,
        report.x_eff,
        report.x_over_r,
        report.rms_error,
        report.resonance_hz,
        report.location,
        if report.pass { "PASS" } else { "FAIL" }
    );
    if flags.boundary_solution {
        return Err(CliError::Numerical(
            "fit ended on a parameter bound; report written".into(),
        ));
    }
    if !report.pass {
        return Err(CliError::Compliance(format!(
            "compliance failed at {} (in_range = {}, eps_satisfied = {})",
            report.location, report.in_range, report.eps_satisfied
        )));
    }
    Ok(())
}

fn equivalent(ctx: &Context, args: &EquivArgs) -> Result<TheveninEquivalent, CliError> {
    match &args.fit {
        Some(p) => {
            let f = File::open(p)
                .map_err(|e| CliError::Validation(format!("cannot open {}: {e}", p.display())))?;
            let ff: FitFile = serde_json::from_reader(BufReader::new(f))
                .map_err(|e| CliError::Validation(format!("{}: {e}", p.display())))?;
            let r = ff.report;
            Ok(TheveninEquivalent::new(
                r.r_eff,
                r.l_eff,
                r.rms_error,
                r.resonance_hz,
            )?)
        }
        None => {
            let spec = acquire_spectrum(ctx)?.0;
            Ok(fitted(ctx, &spec)?.0)
        }
    }
}

pub fn step(ctx: &Context, args: &EquivArgs) -> Result<(), CliError> {
    ctx.create_out()?;
    let model = ctx.cfg.sim_model()?;
    let eq = equivalent(ctx, args)?;
    let s = &ctx.cfg.step;
    let dv = s.dv.unwrap_or(-0.05 * model.grid.v);
    let ev = DisturbanceEvent::new(s.t_event, dv, s.ddelta_deg.to_radians())
        .map_err(|e| in_section("step", e))?;
    let r =
        step_compare(&model, &eq, ev, s.window, &ctx.cfg.sim).map_err(|e| in_section("step", e))?;
    r.write(&ctx.out)?;
    ctx.write_meta(
        "step",
        json!({ "equivalent": eq, "event": ev, "sim": ctx.cfg.sim }),
    )?;
    println!(
        "rms_error_q = {:.4}  rms_error_p = {:.4}",
        r.rms_error_q, r.rms_error_p
    );
    Ok(())
}

#[derive(Serialize)]
struct PvSummary<'a> {
    p_max: f64,
    v_at_pmax: f64,
    p_last_stable: f64,
    terminated_by: &'a zeff_core::study::PvTermination,
    #[serde(skip_serializing_if = "Option::is_none")]
    equivalent: Option<Value>,
}

fn summary(c: &PvCurve) -> PvSummary<'_> {
    PvSummary {
        p_max: c.p_max,
        v_at_pmax: c.v_at_pmax,
        p_last_stable: c.p_last_stable,
        terminated_by: &c.terminated_by,
        equivalent: None,
    }
}

pub fn pv(ctx: &Context, args: &PvArgs) -> Result<(), CliError> {
    ctx.create_out()?;
    let model: SimModel = ctx.cfg.sim_model()?;
    let cfg = &ctx.cfg.pv;
    let curve = pv_trace(&PvSubject::Simulated(model), cfg).map_err(|e| in_section("pv", e))?;
    curve.write_csv(ctx.file("pv_curve.csv")?)?;
    let mut sum = summary(&curve);
    if args.compare {
        let eq = equivalent(ctx, &args.equiv)?;
        let emf = pv_equivalent_emf(&model, &eq, cfg).map_err(|e| in_section("pv", e))?;
        let th = pv_trace(&PvSubject::Thevenin { equiv: eq, emf }, cfg)
            .map_err(|e| in_section("pv", e))?;
        th.write_csv(ctx.file("pv_equiv.csv")?)?;
        sum.equivalent = Some(json!({
            "p_max": th.p_max,
            "v_at_pmax": th.v_at_pmax,
            "p_last_stable": th.p_last_stable,
            "terminated_by": th.terminated_by,
            "p_max_rel_diff": (th.p_max - curve.p_max).abs() / curve.p_max,
        }));
    }
    ctx.write_json("pv_summary.json", &sum)?;
    ctx.write_meta("pv", json!({ "pv": cfg }))?;
    println!(
        "p_max = {:.4} pu at v = {:.4} pu ({:?})",
        curve.p_max, curve.v_at_pmax, curve.terminated_by
    );
    Ok(())
}

pub fn case(ctx: &Context) -> Result<(), CliError> {
    ctx.create_out()?;
    let sec =
        ctx.cfg.case.as_ref().ok_or_else(|| {
            CliError::Validation("case: section required for this subcommand".into())
        })?;
    let mut params = sec
        .params
        .clone()
        .unwrap_or_else(|| CaseParams::for_case(sec.id));
    params.base = ctx.cfg.base;
    let r = case_study(sec.id, &params, &ctx.cfg.sim).map_err(|e| in_section("case.params", e))?;
    r.write(&ctx.out)?;
    ctx.write_meta("case", json!({ "case": sec.id, "sim": ctx.cfg.sim }))?;
    for v in &r.variants {
        println!(
            "{:<40} peak P {:.4}  peak Q {:.4}  peak I {:.4}",
            v.label, v.metrics.peak_p, v.metrics.peak_q, v.metrics.peak_i
        );
    }
    Ok(())
}

pub fn analytic(ctx: &Context) -> Result<(), CliError> {
    let a = ctx.cfg.analytic.clone().unwrap_or_default();
    let times = a.times();
    if times.is_empty() {
        return Err(CliError::Validation(
            "analytic.t_end: time grid is empty (need t_end > t_step and dt > 0)".into(),
        ));
    }
    let z = a
        .impedance(&ctx.cfg.base)
        .map_err(|e| in_section("analytic", e))?;
    let cfg = IdvsConfig::new(a.v_id, z, ctx.cfg.base).map_err(|e| in_section("analytic", e))?;
    let step = VoltageStep::new(
        a.v1,
        a.delta1_deg.to_radians(),
        a.v2,
        a.delta2_deg.to_radians(),
        a.t_step,
    )
    .map_err(|e| in_section("analytic", e))?;
    ctx.create_out()?;
    let mut w = csv::Writer::from_writer(ctx.file("analytic_pq.csv")?);
    w.write_record(["t", "p", "q"])
        .map_err(zeff_core::Error::from)?;
    let mut undamped = false;
    for &t in &times {
        let pq = idvs_transient_pq(&cfg, &step, t).map_err(|e| in_section("analytic", e))?;
        undamped |= pq.undamped;
        w.write_record([t.to_string(), pq.p.to_string(), pq.q.to_string()])
            .map_err(zeff_core::Error::from)?;
    }
    w.flush()?;
    let mut warnings = Vec::new();
    if undamped {
        let m = "r = 0: the transient term does not decay".to_string();
        warn(&m);
        warnings.push(m);
    }
    ctx.write_meta(
        "analytic",
        json!({ "analytic": {
        "x": a.x, "r": z.r, "v_id": a.v_id, "v1": a.v1, "delta1_deg": a.delta1_deg,
        "v2": a.v2, "delta2_deg": a.delta2_deg, "t_step": a.t_step, "t_end": a.t_end, "dt": a.dt,
    }, "warnings": warnings }),
    )?;
    println!(
        "{} samples written to {}",
        times.len(),
        ctx.out.join("analytic_pq.csv").display()
    );
    Ok(())
}
