//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::Instant;

use num_complex::Complex64;
use zeff_core::analytic::{
    idvs_admittance, idvs_transient_pq, pv_nose_analytic, IdvsConfig, VoltageStep,
};
use zeff_core::emt::{
    build_classical_machine, build_droop_gfm, build_idvs, simulate, DisturbanceEvent,
    GfmPlantModel, IdealisticMode, Integrator, MeasurementPoint, SimConfig, SimModel,
};
use zeff_core::fit::{check_compliance, fit, fit_samples, ComplianceTable, FitConfig, Location};
use zeff_core::model::{
    rl_from_x_over_r, AdmittanceEntry, AdmittanceSpectrum, PerUnitBase, RlImpedance,
};
use zeff_core::scan::{single_bin_dft, sweep, ScanConfig};
use zeff_core::study::{
    case_study, default_step_event, pv_equivalent_emf, pv_trace, step_compare, CaseId, CaseParams,
    PeakMetrics, PvConfig, PvSubject, VariantKind,
};

type Check = Result<String, String>;

fn ensure(ok: bool, detail: String) -> Check {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn rms(a: &[f64], b: &[f64]) -> f64 {
    (a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len() as f64).sqrt()
}

fn range(a: &[f64]) -> f64 {
    a.iter().cloned().fold(f64::MIN, f64::max) - a.iter().cloned().fold(f64::MAX, f64::min)
}

fn wrap(a: f64) -> f64 {
    let d = (a + PI).rem_euclid(2.0 * PI) - PI;
    if d == -PI {
        PI
    } else {
        d
    }
}

fn hz60() -> PerUnitBase {
    PerUnitBase::hz60()
}

fn gfm() -> SimModel {
    build_droop_gfm(&GfmPlantModel::reference(), IdealisticMode::off()).expect("default GFM")
}

fn a1() -> Check {
    let b = hz60();
    let cfg =
        IdvsConfig::new(1.0, rl_from_x_over_r(0.33, 10.0, &b).map_err(err)?, b).map_err(err)?;
    let t_ev = 0.01;
    let ev = DisturbanceEvent::new(t_ev, -0.1, (-5f64).to_radians()).map_err(err)?;
    let step = VoltageStep::new(1.0, 0.0, 0.9, (-5f64).to_radians(), t_ev).map_err(err)?;
    let sim = SimConfig {
        t_end: t_ev + 0.1,
        ..SimConfig::default()
    };
    let ts = simulate(&build_idvs(&cfg), &[ev], &sim).map_err(err)?;
    let st = ts.channel(MeasurementPoint::St).ok_or("no ST channel")?;
    let (mut ps, mut qs, mut pa, mut qa) = (vec![], vec![], vec![], vec![]);
    for k in 0..ts.len() {
        let t = ts.t[k];
        if t <= t_ev + 1e-12 {
            continue;
        }
        let an = idvs_transient_pq(&cfg, &step, t).map_err(err)?;
        ps.push(st.p[k]);
        qs.push(st.q[k]);
        pa.push(an.p);
        qa.push(an.q);
    }
    let ep = rms(&ps, &pa) / range(&ps);
    let eq = rms(&qs, &qa) / range(&qs);
    ensure(
        ep <= 0.01 && eq <= 0.01,
        format!("P rms/range {ep:.2e}, Q rms/range {eq:.2e} (limit 1e-2)"),
    )
}

fn idvs_048_spectrum() -> Result<(IdvsConfig, AdmittanceSpectrum), String> {
    let b = hz60();
    let cfg =
        IdvsConfig::new(1.0, rl_from_x_over_r(0.48, 10.0, &b).map_err(err)?, b).map_err(err)?;
    let spec = sweep(&build_idvs(&cfg), &ScanConfig::default()).map_err(err)?;
    Ok((cfg, spec))
}

fn a2(cfg: &IdvsConfig, spec: &AdmittanceSpectrum) -> Check {
    let ys = spec.entry_values(AdmittanceEntry::Qd).map_err(err)?;
    let (mut worst_mag, mut worst_ph) = (0.0f64, 0.0f64);
    for (f, y) in spec.frequencies().into_iter().zip(ys) {
        let exact = idvs_admittance(cfg, f).map_err(err)?.qd;
        worst_mag = worst_mag.max((y.norm() - exact.norm()).abs() / exact.norm());
        worst_ph = worst_ph.max(wrap(y.arg() - exact.arg()).abs().to_degrees());
    }
    ensure(
        worst_mag <= 5e-3 && worst_ph <= 1.0,
        format!(
            "{} points, worst |Y_qd| error {worst_mag:.2e}, worst phase error {worst_ph:.2e} deg",
            spec.points.len()
        ),
    )
}

fn a3(spec: &AdmittanceSpectrum) -> Check {
    let r = fit(spec, &FitConfig::default()).map_err(err)?;
    let e = r.equivalent;
    let rep = check_compliance(&e, Location::Hv, &ComplianceTable::default(), 0.01).map_err(err)?;
    ensure(
        (e.r_eff - 0.048).abs() <= 1e-3
            && (e.x_eff_at_f1 - 0.48).abs() <= 5e-3
            && e.rms_error < 1e-3
            && rep.pass,
        format!(
            "r_eff {:.5}, x_eff {:.5}, rms {:.2e}, HV {}",
            e.r_eff,
            e.x_eff_at_f1,
            e.rms_error,
            if rep.pass { "pass" } else { "fail" }
        ),
    )
}

fn a4() -> Check {
    let m = build_classical_machine(1.0, 0.0025, 0.25, hz60()).map_err(err)?;
    let spec = sweep(&m, &ScanConfig::default()).map_err(err)?;
    let e = fit(&spec, &FitConfig::default()).map_err(err)?.equivalent;
    let dr = (e.r_eff - 0.0025).abs() / 0.0025;
    let dx = (e.l_eff - 0.25).abs() / 0.25;
    ensure(
        dr <= 0.01 && dx <= 0.01,
        format!(
            "r_a {:.6} ({:.3}%), x'' {:.6} ({:.4}%)",
            e.r_eff,
            100.0 * dr,
            e.l_eff,
            100.0 * dx
        ),
    )
}

fn a5(spec: &AdmittanceSpectrum) -> Check {
    let r = fit(spec, &FitConfig::default()).map_err(err)?;
    let e = r.equivalent;
    let rep = check_compliance(&e, Location::Hv, &ComplianceTable::default(), 0.01).map_err(err)?;
    let y0 = spec.entry_values(AdmittanceEntry::Qd).map_err(err)?[0];
    let ph = wrap(y0.arg() - PI).abs().to_degrees();
    ensure(
        (0.40..=0.50).contains(&e.x_eff_at_f1) && rep.in_range && e.resonance_freq < spec.base.f1 && ph <= 15.0,
        format!(
            "x_eff {:.4}, r_eff {:.4}, X/R {:.2}, rms {:.2e}, resonance {:.2} Hz, |phase(Y_qd at {} Hz) - 180| {:.2} deg",
            e.x_eff_at_f1,
            e.r_eff,
            e.x_over_r(),
            e.rms_error,
            e.resonance_freq,
            spec.points[0].f,
            ph
        ),
    )
}

fn a6() -> Check {
    let gains = [(11.60, 5.20), (5.80, 2.60), (2.32, 1.04), (1.16, 0.52)];
    let mut rows = Vec::new();
    for (kiv, kpv) in gains {
        let p = GfmPlantModel::reference().with_voltage_gains(kiv, kpv);
        let m = build_droop_gfm(&p, IdealisticMode::off()).map_err(err)?;
        let spec = sweep(&m, &ScanConfig::default()).map_err(err)?;
        rows.push(fit(&spec, &FitConfig::default()).map_err(err)?.equivalent);
    }
    let fres_down = rows
        .windows(2)
        .all(|w| w[1].resonance_freq < w[0].resonance_freq);
    let r_up = rows.windows(2).all(|w| w[1].r_eff >= w[0].r_eff);
    let xs: Vec<f64> = rows.iter().map(|e| e.x_eff_at_f1).collect();
    let xmax = xs.iter().cloned().fold(f64::MIN, f64::max);
    let spread = range(&xs) / xmax;
    let detail = rows
        .iter()
        .map(|e| {
            format!(
                "{:.2} Hz/r {:.4}/x {:.4}",
                e.resonance_freq, e.r_eff, e.x_eff_at_f1
            )
        })
        .collect::<Vec<_>>()
        .join(" -> ");
    ensure(
        fres_down && r_up && spread < 0.10,
        format!("{detail}; x spread {:.2}%", 100.0 * spread),
    )
}

fn a7(gfm_spec: &AdmittanceSpectrum) -> Check {
    let m = gfm();
    let e = fit(gfm_spec, &FitConfig::default())
        .map_err(err)?
        .equivalent;
    let ev = default_step_event(&m, 0.05).map_err(err)?;
    let r = step_compare(&m, &e, ev, 0.2, &SimConfig::default()).map_err(err)?;
    ensure(
        r.rms_error_q <= 0.05,
        format!(
            "Q rms error {:.2}% of excursion (P {:.2}%)",
            100.0 * r.rms_error_q,
            100.0 * r.rms_error_p
        ),
    )
}

fn a8(gfm_spec: &AdmittanceSpectrum) -> Check {
    let m = gfm();
    let e = fit(gfm_spec, &FitConfig::default())
        .map_err(err)?
        .equivalent;
    let cfg = PvConfig {
        base_load: [0.125, 0.0625],
        step: [0.05, 0.025],
        ..PvConfig::default()
    };
    let emf = pv_equivalent_emf(&m, &e, &cfg).map_err(err)?;
    let (full, th) = rayon::join(
        || pv_trace(&PvSubject::Simulated(m), &cfg),
        || pv_trace(&PvSubject::Thevenin { equiv: e, emf }, &cfg),
    );
    let (full, th) = (full.map_err(err)?, th.map_err(err)?);
    let dp = (full.p_max - th.p_max).abs() / full.p_max;
    let dv = (full.v_at_pmax - th.v_at_pmax).abs();
    ensure(
        dp <= 0.05 && dv <= 0.03,
        format!(
            "p_max {:.4} vs {:.4} ({:.2}%), nose v {:.3} vs {:.3}",
            full.p_max,
            th.p_max,
            100.0 * dp,
            full.v_at_pmax,
            th.v_at_pmax
        ),
    )
}

fn a9() -> Check {
    let b = hz60();
    let z = RlImpedance::new(0.0, 0.5).map_err(err)?;
    let m = build_idvs(&IdvsConfig::new(1.0, z, b).map_err(err)?);
    let cfg = PvConfig {
        base_load: [0.1, 0.0],
        step: [0.02, 0.0],
        ..PvConfig::default()
    };
    let c = pv_trace(&PvSubject::Simulated(m), &cfg).map_err(err)?;
    let nose = pv_nose_analytic(1.0, z, 0.0).map_err(err)?;
    ensure(
        (c.p_max - 1.0).abs() <= 0.01
            && (c.v_at_pmax - 0.707).abs() <= 0.01
            && (c.p_max - nose.p_max).abs() <= 0.01
            && (c.v_at_pmax - nose.v_nose).abs() <= 0.01,
        format!(
            "p_max {:.4} (analytic {:.4}), v_nose {:.4} (analytic {:.4})",
            c.p_max, nose.p_max, c.v_at_pmax, nose.v_nose
        ),
    )
}

fn spread(xs: &[f64]) -> f64 {
    range(xs) / xs.iter().cloned().fold(f64::MIN, f64::max)
}

fn a10() -> Check {
    let sim = SimConfig::default();
    let one = case_study(CaseId::I, &CaseParams::for_case(CaseId::I), &sim).map_err(err)?;
    let g = one
        .by_kind(VariantKind::GfmIdealistic)
        .next()
        .ok_or("no GFM variant")?
        .metrics;
    let ids: Vec<_> = one.by_kind(VariantKind::Idvs).collect();
    let (near, far) = if ids[0].z_id < ids[1].z_id {
        (ids[0].metrics, ids[1].metrics)
    } else {
        (ids[1].metrics, ids[0].metrics)
    };
    let rel = |a: f64, b: f64| (a - b).abs() / b;
    let match_i = [
        rel(g.peak_p, near.peak_p),
        rel(g.peak_q, near.peak_q),
        rel(g.peak_i, near.peak_i),
    ];
    let worst_match = match_i.iter().cloned().fold(0.0, f64::max);
    let lower = far.peak_p < near.peak_p && far.peak_q < near.peak_q && far.peak_i < near.peak_i;
    let mut worst_sweep: f64 = 0.0;
    for (case, kind) in [
        (CaseId::III, VariantKind::GfmIdealistic),
        (CaseId::IV, VariantKind::GfmRealistic),
    ] {
        let r = case_study(case, &CaseParams::for_case(case), &sim).map_err(err)?;
        let ms: Vec<_> = r.by_kind(kind).map(|v| v.metrics).collect();
        let getters: [fn(&PeakMetrics) -> f64; 3] = [|m| m.peak_p, |m| m.peak_q, |m| m.peak_i];
        for f in getters {
            worst_sweep = worst_sweep.max(spread(&ms.iter().map(f).collect::<Vec<_>>()));
        }
    }
    ensure(
        worst_match <= 0.10 && lower && worst_sweep < 0.05,
        format!(
            "case I GFM vs IDVS(Z_GFM) worst {:.3}%, IDVS(Z_GFM+Z_Filter) peaks lower: {lower}; case III/IV Z_Filter spread {:.3}%",
            100.0 * worst_match,
            100.0 * worst_sweep
        ),
    )
}

fn a11() -> Check {
    let mut notes = Vec::new();
    // Single-bin DFT on synthetic tones.
    let mut worst: f64 = 0.0;
    for (a, f, th, m) in [
        (0.01, 5.0, 0.3, 4000usize),
        (1.3, 37.7, -2.1, 777),
        (0.2, 100.0, 1.0, 500),
    ] {
        let dt = 1.0 / (f * m as f64);
        let x: Vec<f64> = (0..10 * m)
            .map(|k| a * (2.0 * PI * f * k as f64 * dt + th).cos())
            .collect();
        let c = single_bin_dft(&x, dt, f).map_err(err)?;
        worst = worst.max((c - Complex64::from_polar(a, th)).norm());
    }
    notes.push(format!("dft {worst:.1e}"));
    let dft_ok = worst <= 1e-10;

    // Amplitude independence on the nonlinear GFM.
    let m = gfm();
    let base = ScanConfig {
        n_points: 5,
        f_min: 10.0,
        f_max: 90.0,
        ..ScanConfig::default()
    };
    let s1 = sweep(&m, &base).map_err(err)?;
    let s2 = sweep(
        &m,
        &ScanConfig {
            amplitude: 0.005,
            ..base
        },
    )
    .map_err(err)?;
    let y1 = s1.entry_values(AdmittanceEntry::Qd).map_err(err)?;
    let y2 = s2.entry_values(AdmittanceEntry::Qd).map_err(err)?;
    let amp = y1
        .iter()
        .zip(&y2)
        .map(|(a, b)| (a - b).norm() / a.norm())
        .fold(0.0, f64::max);
    notes.push(format!("amplitude {amp:.1e}"));
    let amp_ok = amp <= 1e-3;

    // Determinism.
    let s3 = sweep(&m, &base).map_err(err)?;
    let det_ok = s1 == s3;
    notes.push(format!("bit-identical rerun {det_ok}"));

    // Fit order invariance.
    let samples: Vec<_> = s1
        .frequencies()
        .into_iter()
        .zip(y1.iter().copied())
        .collect();
    let mut rev = samples.clone();
    rev.reverse();
    rev.rotate_left(2);
    let fa = fit_samples(&samples, s1.base, &FitConfig::default()).map_err(err)?;
    let fb = fit_samples(&rev, s1.base, &FitConfig::default()).map_err(err)?;
    let order_ok = fa == fb;
    notes.push(format!("fit order-invariant {order_ok}"));

    // Step-size convergence.
    let b = hz60();
    let cfg =
        IdvsConfig::new(1.0, rl_from_x_over_r(0.33, 10.0, &b).map_err(err)?, b).map_err(err)?;
    let ev = DisturbanceEvent::new(0.01, -0.1, (-5f64).to_radians()).map_err(err)?;
    let mut conv: f64 = 0.0;
    for integ in [Integrator::Trapezoidal, Integrator::Rk4] {
        let run = |dt: f64| {
            simulate(
                &build_idvs(&cfg),
                &[ev],
                &SimConfig {
                    dt,
                    t_end: 0.11,
                    integrator: integ,
                    record_decimation: (40e-6 / dt).round() as usize,
                },
            )
        };
        let (c, f) = (run(40e-6).map_err(err)?, run(20e-6).map_err(err)?);
        let pc = &c.channel(MeasurementPoint::St).ok_or("ST")?.p;
        let pf = &f.channel(MeasurementPoint::St).ok_or("ST")?.p;
        conv = conv.max(rms(pc, pf) / range(pf));
    }
    notes.push(format!("dt halving {conv:.1e}"));
    let conv_ok = conv <= 1e-3;

    ensure(
        dft_ok && amp_ok && det_ok && order_ok && conv_ok,
        notes.join(", "),
    )
}

fn main() -> ExitCode {
    let mut failed = 0;
    let mut report = |id: &str, name: &str, t: Instant, r: Check| {
        let secs = t.elapsed().as_secs_f64();
        match r {
            Ok(d) => println!("{id} PASS  {name}: {d} [{secs:.1} s]"),
            Err(d) => {
                failed += 1;
                println!("{id} FAIL  {name}: {d} [{secs:.1} s]");
            }
        }
    };

    let t = Instant::now();
    report("A1", "analytic transient vs EMT", t, a1());

    let t = Instant::now();
    match idvs_048_spectrum() {
        Ok((cfg, spec)) => {
            report("A2", "IDVS scan fidelity", t, a2(&cfg, &spec));
            let t = Instant::now();
            report("A3", "exact fit recovery", t, a3(&spec));
        }
        Err(e) => {
            report("A2", "IDVS scan fidelity", t, Err(e.clone()));
            report("A3", "exact fit recovery", t, Err(e));
        }
    }

    let t = Instant::now();
    report("A4", "machine surrogate round trip", t, a4());

    let t = Instant::now();
    let gfm_spec = sweep(&gfm(), &ScanConfig::default()).map_err(err);
    match gfm_spec {
        Ok(spec) => {
            report("A5", "GFM fit", t, a5(&spec));
            let t = Instant::now();
            report("A6", "voltage-gain trend", t, a6());
            let t = Instant::now();
            report("A7", "Q-step equivalence", t, a7(&spec));
            let t = Instant::now();
            report("A8", "P-V equivalence", t, a8(&spec));
        }
        Err(e) => {
            for (id, name) in [
                ("A5", "GFM fit"),
                ("A6", "voltage-gain trend"),
                ("A7", "Q-step equivalence"),
                ("A8", "P-V equivalence"),
            ] {
                report(id, name, t, Err(e.clone()));
            }
        }
    }

    let t = Instant::now();
    report("A9", "analytic nose oracle", t, a9());
    let t = Instant::now();
    report("A10", "case-study properties", t, a10());
    let t = Instant::now();
    report("A11", "property suites", t, a11());

    if failed == 0 {
        println!("acceptance: all criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {failed} criteria failed");
        ExitCode::FAILURE
    }
}
