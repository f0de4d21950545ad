use std::f64::consts::PI;

use growth_euler::fields::*;
use growth_euler::flow::*;
use growth_euler::growth_bounds::{compute_e_and_mu, compute_h, validate_tier, Profile};
use growth_euler::quadrature::logspace;
use growth_euler::serfati::{SerfatiEvaluator, SerfatiSetup};
use growth_euler::stability::*;
use growth_euler::{GrowthBound, Vec2};

use crate::config::{Loaded, Scenario};
use crate::output::{Check, RunOutput};
use crate::Failure;

pub fn run(l: &Loaded, out: &mut RunOutput) -> Result<(), Failure> {
    match l.cfg.scenario {
        Scenario::RankineSteady => rankine_steady(l, out),
        Scenario::Kirchhoff => kirchhoff(l, out),
        Scenario::PairShift | Scenario::PairAmplitude => pair(l, out),
        Scenario::SerfatiResidual => serfati(l, out),
        Scenario::GrowthboundAudit => audit(l, out),
        Scenario::MorreySweep => morrey(l, out),
    }
}

/// Recording stride giving frames roughly `spacing` apart.
fn stride(dt: f64, spacing: f64) -> usize {
    ((spacing / dt).round() as usize).max(1)
}

fn probes() -> Vec<Vec2> {
    (0..12)
        .map(|k| Vec2::polar(1.25 + 0.25 * (k % 4) as f64, 2.0 * PI * k as f64 / 12.0 + 0.2))
        .collect()
}

fn centroid(pos: &[Vec2], w: &[f64]) -> Vec2 {
    let total: f64 = w.iter().sum();
    let mut c = Vec2::ZERO;
    for (p, s) in pos.iter().zip(w) {
        c = c + *p * *s;
    }
    c * (1.0 / total)
}

fn flow_bound(traj: &FlowTrajectorySet, h: &GrowthBound, out: &mut RunOutput) -> Result<Vec<f64>, Failure> {
    let rep = flow_bound_check(traj, h)?;
    let worst = rep.ratios.iter().cloned().fold(0.0, f64::max);
    out.measure("c0", rep.c0);
    out.measure("flow_bound_max_ratio", worst);
    out.check(Check::new("flow_bound", rep.holds, worst, format!("<= 1.05 C0 = {}", 1.05 * rep.c0)));
    Ok(rep.ratios)
}

fn rankine_steady(l: &Loaded, out: &mut RunOutput) -> Result<(), Failure> {
    let c = &l.cfg;
    let f = make_rankine(1.0, 1.0, c.n)?;
    let w = f.strengths();
    let np = f.len();
    let traj = advect(
        VelocitySource::SelfInduced(f),
        &[],
        c.t_end,
        c.dt,
        &AdvectOptions { record_every: stride(c.dt, 0.1), norm_bound: l.h.clone() },
    )?;
    let ratios = flow_bound(&traj, &l.h, out)?;
    let probes = probes();
    let u0: Vec<Vec2> = probes.iter().map(|&p| traj.velocity_at(0.0, p)).collect();
    let c0 = centroid(&traj.frames[0][..np], &w);
    let (mut drift, mut cdrift): (f64, f64) = (0.0, 0.0);
    let mut rows = Vec::new();
    for (k, &t) in traj.times.iter().enumerate() {
        let d = probes
            .iter()
            .zip(&u0)
            .map(|(p, v)| (traj.velocity_at(t, *p) - *v).norm())
            .fold(0.0, f64::max);
        let ck = centroid(&traj.frames[k][..np], &w);
        drift = drift.max(d);
        cdrift = cdrift.max((ck - c0).norm());
        let ratio = if k == 0 { 0.0 } else { ratios[k - 1] };
        rows.push(vec![t, ck.x, ck.y, d, ratio]);
    }
    out.write_csv("rankine_series.csv", &["t", "centroid_x", "centroid_y", "probe_drift", "flow_bound_ratio"], &rows)?;
    out.measure("particles", np as f64);
    out.measure("probe_drift", drift);
    out.measure("centroid_drift", cdrift);
    out.check(Check::new("probe_velocity_drift", drift < 1e-3, drift, "< 1e-3"));
    out.check(Check::new("centroid_drift", cdrift <= 1e-8, cdrift, "<= 1e-8"));
    Ok(())
}

fn kirchhoff(l: &Loaded, out: &mut RunOutput) -> Result<(), Failure> {
    let c = &l.cfg;
    let f = make_kirchhoff(2.0, 1.0, 1.0, c.n)?;
    let np = f.len();
    let traj = advect(
        VelocitySource::SelfInduced(f),
        &[],
        c.t_end,
        c.dt,
        &AdvectOptions { record_every: stride(c.dt, 0.1), norm_bound: l.h.clone() },
    )?;
    flow_bound(&traj, &l.h, out)?;
    let angles = principal_angles(&traj);
    let rate = kirchhoff_rotation_rate(&traj);
    let exact = kirchhoff_rate(2.0, 1.0, 1.0);
    let rows: Vec<Vec<f64>> = traj
        .times
        .iter()
        .zip(&angles)
        .map(|(&t, &a)| vec![t, a, angles[0] + exact * t])
        .collect();
    out.write_csv("kirchhoff_angle.csv", &["t", "angle", "exact_angle"], &rows)?;
    let rel = (rate - exact).abs() / exact;
    out.measure("particles", np as f64);
    out.measure("omega", rate);
    out.measure("omega_exact", exact);
    out.measure("omega_rel_error", rel);
    out.info.insert("omega".into(), format!("{rate} (exact {exact})"));
    out.check(Check::new("kirchhoff_rate", rel < 0.02, rel, "< 0.02 relative"));
    Ok(())
}

fn pair(l: &Loaded, out: &mut RunOutput) -> Result<(), Failure> {
    let c = &l.cfg;
    let f = make_rankine(1.0, 1.0, c.n)?;
    let g = if c.scenario == Scenario::PairShift {
        f.translated(Vec2::new(c.eps, 0.0))
    } else {
        f.scaled(1.0 + c.eps)
    };
    let opts = PairOptions { t_end: c.t_end, dt: c.dt, record_every: 1, ..Default::default() };
    let rep = run_pair(&f, &g, &l.zeta, &l.h, &opts)?;
    let mut csv = Vec::new();
    rep.write_csv(&mut csv)?;
    out.write("stability.csv", std::str::from_utf8(&csv).unwrap())?;
    out.write("stability.json", &(rep.to_json()? + "\n"))?;

    let cm = fit_m_constant(&rep);
    let qc = q_envelope_check(&rep, None);
    let cc = cm.max(qc.c);
    let me = m_envelope_check(&rep, cc);
    let qe = q_envelope_check(&rep, Some(cc));
    let sb = a_t_simple_bound(&rep);
    for (k, v) in [
        ("aT", rep.a_t),
        ("u0_gap", rep.u0_gap),
        ("s_zeta_gap", rep.s_zeta_gap),
        ("M_T", *rep.m.last().unwrap()),
        ("Q_T", *rep.q.last().unwrap()),
        ("eta_T", *rep.eta.last().unwrap()),
        ("c0", rep.c0),
        ("fitted_c", cc),
        ("simple_ratio", sb.ratio),
    ] {
        out.measure(k, v);
    }
    let excess = rep.eta_excess();
    out.check(Check::new("eta_le_M", excess <= 0.0, excess, "max(eta - M) <= 0"));
    out.check(Check::new("m_envelope", me.pass, me.margin, format!("margin >= 0 with C = {cc}")));
    out.check(Check::new("q_envelope", qe.pass, qe.margin, format!("margin >= 0 with C = {cc}")));
    out.check(Check::new("simple_bound", sb.ratio.is_finite(), sb.ratio, "aT / gap finite"));
    if c.eps == 0.0 {
        let all_zero = [&rep.eta, &rep.l, &rep.m, &rep.q, &rep.j_norm]
            .iter()
            .all(|s| s.iter().all(|&v| v == 0.0))
            && rep.a_t == 0.0;
        let biggest = [&rep.eta, &rep.l, &rep.m, &rep.q, &rep.j_norm]
            .iter()
            .flat_map(|s| s.iter())
            .fold(rep.a_t, |m, v| m.max(v.abs()));
        out.check(Check::new("identical_data_zero", all_zero, biggest, "== 0"));
    }
    Ok(())
}

fn serfati(l: &Loaded, out: &mut RunOutput) -> Result<(), Failure> {
    let c = &l.cfg;
    let f = make_kirchhoff(2.0, 1.0, 1.0, c.n)?;
    let traj = advect(
        VelocitySource::SelfInduced(f),
        &[],
        c.t_end,
        c.dt,
        &AdvectOptions { record_every: stride(c.dt, 0.04), norm_bound: l.h.clone() },
    )?;
    // the recorded frame nearest T/2, and T
    let mid = traj
        .times
        .iter()
        .cloned()
        .min_by(|a, b| (a - 0.5 * c.t_end).abs().total_cmp(&(b - 0.5 * c.t_end).abs()))
        .unwrap();
    let times = [mid, traj.t_end()];
    flow_bound(&traj, &l.h, out)?;
    let pts: Vec<Vec2> = (0..12)
        .map(|k| Vec2::polar(if k % 2 == 0 { 0.75 } else { 1.5 }, PI / 6.0 * k as f64 + 0.1))
        .collect();
    let ev = SerfatiEvaluator::new(&traj, SerfatiSetup::new(pts, c.lambdas.clone()))?;
    let res = ev.residuals(&times)?;
    let mut rows = Vec::new();
    for r in &res {
        for row in r.rows("serfati_residual") {
            rows.push(vec![
                row.lambda, row.time, row.point[0], row.point[1], row.lhs[0], row.lhs[1], row.rhs[0], row.rhs[1], row.abs_err,
            ]);
        }
        let lhs_max = r.lhs.iter().flatten().map(|v| v.norm()).fold(0.0, f64::max);
        out.measure(&format!("residual_lambda_{}", r.lambda), r.residual_norm);
        out.check(Check::new(
            &format!("residual_below_increment_lambda_{}", r.lambda),
            r.residual_norm < lhs_max,
            r.residual_norm,
            format!("< max |u(t,x) - u(0,x)| = {lhs_max}"),
        ));
    }
    out.write_csv(
        "serfati_residuals.csv",
        &["lambda", "t", "x", "y", "lhs_x", "lhs_y", "rhs_x", "rhs_y", "abs_err"],
        &rows,
    )?;
    Ok(())
}

fn audit(l: &Loaded, out: &mut RunOutput) -> Result<(), Failure> {
    let h = &l.h;
    let rep = validate_tier(h, 256, 1e6)?;
    out.info.insert("tier".into(), format!("{:?}", rep.tier));
    for (i, d) in rep.diagnostics.iter().enumerate() {
        out.info.insert(format!("diagnostic_{i}"), format!("{}: {}", d.predicate, d.witness));
    }
    let nan = f64::NAN;
    let mut rows = Vec::new();
    for r in logspace(1e-3, 1e4, 50) {
        let h1 = compute_h(h, r, 1).unwrap_or(nan);
        let h2 = compute_h(h, r, 2).unwrap_or(nan);
        let (e, mu) = compute_e_and_mu(h, r).unwrap_or((nan, nan));
        rows.push(vec![r, h.eval(r), h1, h2, e, mu]);
    }
    out.write_csv("growthbound_audit.csv", &["r", "h", "H1", "H2", "E", "mu"], &rows)?;
    let h1: Vec<f64> = rows.iter().map(|r| r[2]).filter(|v| v.is_finite()).collect();
    if !h1.is_empty() {
        let mono = h1.windows(2).all(|w| w[1] < w[0]);
        out.check(Check::new("H1_decreasing", mono, h1.len() as f64, "strictly decreasing in r"));
    }
    out.measure("scaling_constant", h.scaling_constant());
    out.measure("reciprocal_log_lipschitz", h.reciprocal_log_lipschitz());
    Ok(())
}

fn morrey(l: &Loaded, out: &mut RunOutput) -> Result<(), Failure> {
    let h = &l.h;
    // a field of the right growth for power bounds, a bounded patch otherwise
    let (profile, r_max) = match h.profile() {
        Profile::Power(alpha) if *alpha < 1.0 => (RadialProfile::Algebraic { beta: alpha - 1.0 }, 100.0),
        _ => (RadialProfile::Rankine { radius: 1.0, omega0: 1.0 }, 3.0),
    };
    let u = AnalyticSField::new(h.clone(), profile);
    let mut rows = Vec::new();
    for count in [100, 1000, 10_000] {
        let s = morrey_samples(l.cfg.seed, count, r_max);
        let cst = morrey_modulus_check(&u, h, &s)?;
        rows.push(vec![count as f64, r_max, cst]);
    }
    out.write_csv("morrey_sweep.csv", &["samples", "r_max", "fitted_c"], &rows)?;
    let last = rows.last().unwrap()[2];
    out.measure("morrey_c", last);
    out.info.insert("profile".into(), format!("{profile:?}"));
    out.check(Check::new("morrey_constant_finite", last.is_finite() && last > 0.0, last, "finite, positive"));
    Ok(())
}
