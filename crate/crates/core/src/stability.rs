//! Two-solution diagnostics: weighted flow and velocity distances, the initial-data
//! functional a(T) and the fitted envelopes they should satisfy.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fields::VortexParticleField;
use crate::flow::{advect, AdvectOptions, VelocitySource};
use crate::geom::Vec2;
use crate::growth_bounds::{mubar, phi_alpha, validate_tier, GrowthBound, Tier};
use crate::kernel::{CutoffKernel, Sources};
use crate::quadrature::logspace;

#[derive(Debug, Clone)]
pub struct PairOptions {
    pub t_end: f64,
    pub dt: f64,
    pub record_every: usize,
    /// points on the far ring at three support radii
    pub ring_points: usize,
    /// approximate size of the subset on which J is evaluated
    pub j_points: usize,
}

impl Default for PairOptions {
    fn default() -> Self {
        PairOptions {
            t_end: 1.0,
            dt: 0.01,
            record_every: 1,
            ring_points: 64,
            j_points: 400,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct StabilityReport {
    pub h: String,
    pub zeta: String,
    pub times: Vec<f64>,
    pub eta: Vec<f64>,
    #[serde(rename = "L")]
    pub l: Vec<f64>,
    #[serde(rename = "M")]
    pub m: Vec<f64>,
    #[serde(rename = "Q")]
    pub q: Vec<f64>,
    /// sup over the J evaluation set of |J(t, x)| / ζ(x)
    pub j_norm: Vec<f64>,
    /// ‖(u₁⁰ - u₂⁰)/ζ‖_∞
    pub u0_gap: f64,
    /// ‖u₁⁰ - u₂⁰‖_{S_ζ}
    pub s_zeta_gap: f64,
    #[serde(rename = "aT")]
    pub a_t: f64,
    /// sup-in-time S_h norm of u₁
    pub c0: f64,
    pub n_tracked: usize,
}

fn sup_samples() -> Vec<f64> {
    let mut g = vec![0.0];
    g.extend(logspace(1e-3, 1e6, 200));
    g
}

/// ζ ≥ h on samples, h well-posedness, ζ/h and ζh growth bounds.
pub fn check_pair_hypotheses(h: &GrowthBound, zeta: &GrowthBound) -> Result<()> {
    for r in sup_samples() {
        if zeta.eval(r) < h.eval(r) * (1.0 - 1e-12) {
            return Err(Error::HypothesisViolation(format!(
                "zeta >= h fails at r = {r}: {} < {}",
                zeta.eval(r),
                h.eval(r)
            )));
        }
    }
    let need = |g: &GrowthBound, tier: Tier, what: &str| -> Result<()> {
        let rep = validate_tier(g, 256, 1e6)?;
        if rep.tier < tier {
            let why = rep
                .diagnostics
                .first()
                .map(|d| format!("{}: {}", d.predicate, d.witness))
                .unwrap_or_default();
            return Err(Error::HypothesisViolation(format!(
                "{what} ({}) is {:?}, needs {:?}; {why}",
                g.label, rep.tier, tier
            )));
        }
        Ok(())
    };
    need(h, Tier::WellPosedness, "h")?;
    need(&zeta.quotient(h), Tier::Growth, "zeta/h")?;
    need(&zeta.product(h), Tier::Growth, "zeta h")?;
    Ok(())
}

fn ring(radius: f64, n: usize) -> Vec<Vec2> {
    (0..n)
        .map(|k| Vec2::polar(radius, 2.0 * std::f64::consts::PI * (k as f64 + 0.5) / n as f64))
        .collect()
}

fn cumulative_trapezoid(t: &[f64], f: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; t.len()];
    for k in 1..t.len() {
        out[k] = out[k - 1] + 0.5 * (t[k] - t[k - 1]) * (f[k] + f[k - 1]);
    }
    out
}

/// Advect both solutions on one time grid from one tracked set and reduce to the
/// weighted diagnostics. Tracked set: the particles of both fields plus a far ring.
pub fn run_pair(
    u1: &VortexParticleField,
    u2: &VortexParticleField,
    zeta: &GrowthBound,
    h: &GrowthBound,
    opts: &PairOptions,
) -> Result<StabilityReport> {
    check_pair_hypotheses(h, zeta)?;
    if u1.is_empty() || u2.is_empty() {
        return Err(Error::EmptyField);
    }
    let (n1, n2) = (u1.len(), u2.len());
    let far = ring(3.0 * u1.support_radius.max(u2.support_radius), opts.ring_points);
    let aopts = AdvectOptions {
        record_every: opts.record_every,
        norm_bound: h.clone(),
    };
    let mut passive1 = u2.positions.clone();
    passive1.extend_from_slice(&far);
    let mut passive2 = u1.positions.clone();
    passive2.extend_from_slice(&far);
    let (r1, r2) = rayon::join(
        || advect(VelocitySource::SelfInduced(u1.clone()), &passive1, opts.t_end, opts.dt, &aopts),
        || advect(VelocitySource::SelfInduced(u2.clone()), &passive2, opts.t_end, opts.dt, &aopts),
    );
    let (t1, mut t2) = (r1?, r2?);
    // run 2 tracks are [u2, u1, ring]; bring them to [u1, u2, ring]
    let reorder = |v: &mut Vec<Vec2>| {
        let mut w = Vec::with_capacity(v.len());
        w.extend_from_slice(&v[n2..n2 + n1]);
        w.extend_from_slice(&v[..n2]);
        w.extend_from_slice(&v[n1 + n2..]);
        *v = w;
    };
    t2.frames.iter_mut().for_each(reorder);
    t2.velocities.iter_mut().for_each(reorder);

    let s0 = &t1.frames[0];
    let ns = s0.len();
    let zeta0: Vec<f64> = s0.iter().map(|x| zeta.eval(x.norm())).collect();
    let times = t1.times.clone();

    let weighted_sup = |a: &[Vec2], b: &[Vec2]| -> f64 {
        a.iter()
            .zip(b)
            .zip(&zeta0)
            .map(|((p, q), z)| (*p - *q).norm() / z)
            .fold(0.0, f64::max)
    };
    let eta: Vec<f64> = t1
        .frames
        .iter()
        .zip(&t2.frames)
        .map(|(a, b)| weighted_sup(a, b))
        .collect();
    let l: Vec<f64> = t1
        .velocities
        .iter()
        .zip(&t2.velocities)
        .map(|(a, b)| weighted_sup(a, b))
        .collect();
    let m = cumulative_trapezoid(&times, &l);

    // Q on the fixed points S
    let s1 = u1.strengths();
    let s2 = u2.strengths();
    let q: Vec<f64> = (0..times.len())
        .map(|k| {
            let a = Sources::new(&t1.frames[k][..n1], &s1);
            let b = Sources::new(&t2.frames[k][n1..n1 + n2], &s2);
            s0.par_iter()
                .zip(&zeta0)
                .map(|(&x, z)| (a.velocity(x, u1.core_radius()) - b.velocity(x, u2.core_radius())).norm() / z)
                .reduce(|| 0.0, f64::max)
        })
        .collect();
    let u0_gap = q[0];

    // J on a subset of S, always including the ring
    let stride = (ns / opts.j_points.max(1)).max(1);
    let mut jset: Vec<usize> = (0..n1 + n2).step_by(stride).collect();
    jset.extend(n1 + n2..ns);
    let diff = u1.difference(u2);
    let eps = diff.core_radius();
    // the two clouds are summed separately so that equal data cancel exactly
    let cloud = |kern: &CutoffKernel, p1: &[Vec2], p2: &[Vec2], x: Vec2| {
        kern.near_sum(p1, &s1, x, eps) - kern.near_sum(p2, &s2, x, eps)
    };
    let j_norm: Vec<f64> = (0..times.len())
        .map(|k| {
            // (ω₁⁰ - ω₂⁰) ∘ X₁⁻¹(t): both particle sets carried by the first flow
            let moved = &t1.frames[k][..n1 + n2];
            jset.par_iter()
                .map(|&i| {
                    let x = s0[i];
                    let kern = CutoffKernel::new(h.eval(x.norm())).expect("h > 0");
                    let a = cloud(&kern, &moved[..n1], &moved[n1..], x);
                    let b = cloud(&kern, &u1.positions, &u2.positions, t1.frames[k][i]);
                    (a - b).norm() / zeta0[i]
                })
                .reduce(|| 0.0, f64::max)
        })
        .collect();
    let a_t = u0_gap + j_norm.iter().cloned().fold(0.0, f64::max);
    let omega_gap = u1.vorticity_sup_difference(u2).unwrap_or_else(|_| {
        diff.omega.iter().fold(0.0, |s: f64, w| s.max(w.abs()))
    });

    Ok(StabilityReport {
        h: h.label.clone(),
        zeta: zeta.label.clone(),
        times,
        eta,
        l,
        m,
        q,
        j_norm,
        u0_gap,
        s_zeta_gap: u0_gap + omega_gap,
        a_t,
        c0: t1.c0,
        n_tracked: ns,
    })
}

impl StabilityReport {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Io(e.to_string()))
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "t,eta,L,M,Q,J")?;
        for k in 0..self.times.len() {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                self.times[k], self.eta[k], self.l[k], self.m[k], self.q[k], self.j_norm[k]
            )?;
        }
        Ok(())
    }

    /// Largest η - M over the run (≤ 0 when η ≤ M holds).
    pub fn eta_excess(&self) -> f64 {
        self.eta
            .iter()
            .zip(&self.m)
            .map(|(e, m)| e - m)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// a(T) restricted to [0, t]: initial gap plus sup of the J series up to t.
    pub fn a_t_until(&self, t: f64) -> f64 {
        self.u0_gap
            + self
                .times
                .iter()
                .zip(&self.j_norm)
                .take_while(|(s, _)| **s <= t * (1.0 + 1e-12))
                .map(|(_, j)| *j)
                .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EnvelopeCheck {
    pub c: f64,
    pub pass: bool,
    /// min over times of (envelope - value); negative on failure
    pub margin: f64,
}

/// Regime of the M bound at time t: small data while t a(T) < e^{-1} and M < 1.
fn small_data(t: f64, a: f64, m: f64) -> bool {
    t * a < (-1f64).exp() && m < 1.0
}

/// Smallest C with M(t) ≤ (t a)^{exp(-C t)} in the small-data regime and
/// M(t) ≤ C t a beyond it.
pub fn fit_m_constant(r: &StabilityReport) -> f64 {
    let mut c: f64 = 0.0;
    for (&t, &m) in r.times.iter().zip(&r.m) {
        if t == 0.0 || m == 0.0 {
            continue;
        }
        let ta = t * r.a_t;
        if ta == 0.0 {
            return f64::INFINITY;
        }
        if small_data(t, r.a_t, m) {
            let ratio = m.ln() / ta.ln();
            if ratio < 1.0 {
                c = c.max(-ratio.ln() / t);
            }
        } else {
            c = c.max(m / ta);
        }
    }
    c
}

pub fn m_envelope_check(r: &StabilityReport, c: f64) -> EnvelopeCheck {
    let mut margin = f64::INFINITY;
    for (&t, &m) in r.times.iter().zip(&r.m) {
        if t == 0.0 {
            continue;
        }
        let ta = t * r.a_t;
        let env = if small_data(t, r.a_t, m) {
            if ta == 0.0 {
                0.0
            } else {
                ta.powf((-c * t).exp())
            }
        } else {
            c * ta
        };
        margin = margin.min(env - m);
    }
    EnvelopeCheck {
        c,
        pass: margin >= -1e-12,
        margin,
    }
}

fn q_envelope(r: &StabilityReport, c: f64, k: usize) -> f64 {
    (r.a_t + c * mubar(c * r.m[k]).unwrap_or(0.0)) * (c * r.times[k]).exp()
}

/// Q(t) ≤ [a(T) + C μ̄(C M(t))] e^{C t}: with `c = None` the smallest such C is found by
/// bisection (the envelope increases with C), otherwise the given C is checked.
pub fn q_envelope_check(r: &StabilityReport, c: Option<f64>) -> EnvelopeCheck {
    let holds = |c: f64| (0..r.times.len()).all(|k| r.q[k] <= q_envelope(r, c, k) * (1.0 + 1e-12));
    let c = match c {
        Some(c) => c,
        None => {
            if holds(0.0) {
                0.0
            } else {
                let mut hi = 1.0;
                while !holds(hi) && hi < 1e12 {
                    hi *= 2.0;
                }
                let mut lo = 0.0;
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if holds(mid) {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
                hi
            }
        }
    };
    let margin = (0..r.times.len())
        .map(|k| q_envelope(r, c, k) - r.q[k])
        .fold(f64::INFINITY, f64::min);
    EnvelopeCheck {
        c,
        pass: holds(c),
        margin,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SimpleBound {
    pub a_t: f64,
    pub s_zeta_gap: f64,
    /// a(T) / ‖u₁⁰ - u₂⁰‖_{S_ζ}; 0 when both vanish
    pub ratio: f64,
}

/// Both sides of a(T) ≤ C ‖u₁⁰ - u₂⁰‖_{S_ζ} for one pair.
pub fn a_t_simple_bound(r: &StabilityReport) -> SimpleBound {
    let ratio = if r.a_t == 0.0 {
        0.0
    } else if r.s_zeta_gap == 0.0 {
        f64::INFINITY
    } else {
        r.a_t / r.s_zeta_gap
    };
    SimpleBound {
        a_t: r.a_t,
        s_zeta_gap: r.s_zeta_gap,
        ratio,
    }
}

/// One C for a sweep: the largest ratio, with every pair checked against it.
pub fn fit_simple_constant(bounds: &[SimpleBound]) -> (f64, bool) {
    let c = bounds.iter().map(|b| b.ratio).fold(0.0, f64::max);
    let ok = c.is_finite() && bounds.iter().all(|b| b.a_t <= c * b.s_zeta_gap * (1.0 + 1e-12));
    (c, ok)
}

#[derive(Debug, Clone, Serialize)]
pub struct PhiAlphaCheck {
    pub alpha: f64,
    pub delta: f64,
    pub t_star: f64,
    /// rate in the Φ argument, chosen so that T* < (1 + δ)/(C C0)
    pub c: f64,
    pub c1: f64,
    /// per pair: (a(T*), Φ_α(T, C gap^δ))
    pub sides: Vec<(f64, f64)>,
    pub pass: bool,
}

/// a(T*) ≤ C₁ Φ_α(T, C ‖(u₁⁰ - u₂⁰)/ζ‖_∞^δ) over a sweep of bounded-velocity pairs, with
/// C taken at 0.9 of its T* ceiling and C₁ fitted.
pub fn phi_alpha_bound_check(
    reports: &[StabilityReport],
    h: &GrowthBound,
    alpha: f64,
    delta: f64,
    t_star: f64,
) -> Result<PhiAlphaCheck> {
    if !(0.0 < delta && delta < alpha && alpha < 1.0) {
        return Err(Error::HypothesisViolation(format!(
            "need 0 < delta < alpha < 1, got delta = {delta}, alpha = {alpha}"
        )));
    }
    if !(h.is_constant() && h.eval(0.0) == 1.0) {
        return Err(Error::HypothesisViolation(format!("bounded-velocity runs only (h = 1), got {}", h.label)));
    }
    if reports.is_empty() {
        return Err(Error::BadArgument("no reports".into()));
    }
    let t_end = reports.iter().map(|r| *r.times.last().unwrap()).fold(f64::INFINITY, f64::min);
    let c0 = reports.iter().map(|r| r.c0).fold(0.0, f64::max);
    if !(t_star > 0.0 && t_star < t_end) {
        return Err(Error::HypothesisViolation(format!("T* = {t_star} must lie in (0, T = {t_end})")));
    }
    let c = 0.9 * (1.0 + delta) / (t_star * c0);
    let sides: Vec<(f64, f64)> = reports
        .iter()
        .map(|r| {
            let x = c * r.u0_gap.powf(delta);
            Ok((r.a_t_until(t_star), phi_alpha(c0, t_end, alpha, x)?))
        })
        .collect::<Result<_>>()?;
    let mut c1: f64 = 0.0;
    let mut pass = true;
    for &(a, p) in &sides {
        if a > 0.0 {
            if p > 0.0 {
                c1 = c1.max(a / p);
            } else {
                pass = false;
            }
        }
    }
    Ok(PhiAlphaCheck {
        alpha,
        delta,
        t_star,
        c,
        c1,
        sides,
        pass,
    })
}

/// Equal windows covering [0, T], each shorter than `t_star_max`, as in the iterated
/// bound: N is the least integer with T/N < t_star_max.
pub fn t_star_windows(t_end: f64, t_star_max: f64) -> Result<Vec<(f64, f64)>> {
    if !(t_end > 0.0 && t_star_max > 0.0) {
        return Err(Error::BadArgument("T and T* must be positive".into()));
    }
    let mut n = (t_end / t_star_max).ceil().max(1.0) as usize;
    if t_end / n as f64 >= t_star_max {
        n += 1;
    }
    let w = t_end / n as f64;
    Ok((0..n).map(|k| (k as f64 * w, (k + 1) as f64 * w)).collect())
}
