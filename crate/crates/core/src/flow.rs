//! Particle trajectories, flow-map bounds and the recorded inverse flow.

use std::io::Write;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fields::{AnalyticSField, VortexParticleField};
use crate::geom::Vec2;
use crate::growth_bounds::{chi_t, f_t, GrowthBound};
use crate::kernel::Sources;

#[derive(Debug, Clone)]
pub enum VelocitySource {
    /// u = K * ω with ω carried by the field's particles
    SelfInduced(VortexParticleField),
    Analytic(AnalyticSField),
}

#[derive(Debug, Clone)]
pub struct AdvectOptions {
    /// store every k-th step (the final step is always stored)
    pub record_every: usize,
    /// bound used for the recorded sup-in-time S_h norm C0
    pub norm_bound: GrowthBound,
}

impl Default for AdvectOptions {
    fn default() -> Self {
        AdvectOptions {
            record_every: 1,
            norm_bound: GrowthBound::constant(1.0),
        }
    }
}

/// Recorded flow: `frames[k][i]` is track i at `times[k]`. For self-induced runs the
/// first `n_particles` tracks are the vortex particles.
#[derive(Debug, Clone)]
pub struct FlowTrajectorySet {
    pub times: Vec<f64>,
    pub frames: Vec<Vec<Vec2>>,
    pub velocities: Vec<Vec<Vec2>>,
    pub n_particles: usize,
    pub source: VelocitySource,
    pub dt: f64,
    /// max over recorded frames of max |u|/h over tracks plus ‖ω‖_∞
    pub c0: f64,
    pub norm_bound: GrowthBound,
}

struct Evaluator<'a> {
    source: &'a VelocitySource,
    sources: Option<Sources>,
    eps: f64,
}

impl<'a> Evaluator<'a> {
    fn new(source: &'a VelocitySource) -> Self {
        match source {
            VelocitySource::SelfInduced(f) => Evaluator {
                source,
                sources: Some(f.sources()),
                eps: f.core_radius(),
            },
            VelocitySource::Analytic(_) => Evaluator {
                source,
                sources: None,
                eps: 0.0,
            },
        }
    }

    fn n_particles(&self) -> usize {
        self.sources.as_ref().map_or(0, |s| s.len())
    }

    /// Velocities at all tracks, with particle positions taken from the leading tracks.
    fn eval(&mut self, state: &[Vec2], out: &mut [Vec2]) {
        match self.source {
            VelocitySource::SelfInduced(_) => {
                let n = self.n_particles();
                let src = self.sources.as_mut().unwrap();
                src.set_positions(&state[..n]);
                let src = &*src;
                let eps = self.eps;
                out.par_iter_mut()
                    .zip(state.par_iter())
                    .for_each(|(o, &x)| *o = src.velocity(x, eps));
            }
            VelocitySource::Analytic(u) => {
                out.par_iter_mut()
                    .zip(state.par_iter())
                    .for_each(|(o, &x)| *o = u.u(x));
            }
        }
    }
}

fn check_finite(v: &[Vec2], t: f64) -> Result<()> {
    if v.iter().all(|p| p.is_finite()) {
        Ok(())
    } else {
        Err(Error::BlowUp { time: t })
    }
}

/// RK4 with fixed step. `passive` points are tracked after the particles.
pub fn advect(
    source: VelocitySource,
    passive: &[Vec2],
    t_end: f64,
    dt: f64,
    opts: &AdvectOptions,
) -> Result<FlowTrajectorySet> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::BadArgument(format!("dt must be positive, got {dt}")));
    }
    if !(t_end >= 0.0 && t_end.is_finite()) {
        return Err(Error::BadArgument(format!("T must be >= 0, got {t_end}")));
    }
    if opts.record_every == 0 {
        return Err(Error::BadArgument("record_every must be >= 1".into()));
    }
    let nsteps = (t_end / dt).round() as usize;
    let dt = if nsteps == 0 { dt } else { t_end / nsteps as f64 };

    let mut state: Vec<Vec2> = match &source {
        VelocitySource::SelfInduced(f) => {
            if f.is_empty() {
                return Err(Error::EmptyField);
            }
            f.positions.clone()
        }
        VelocitySource::Analytic(_) => Vec::new(),
    };
    let n_particles = state.len();
    state.extend_from_slice(passive);
    let n = state.len();
    let omega_sup = match &source {
        VelocitySource::SelfInduced(f) => f.omega_sup(),
        VelocitySource::Analytic(_) => 0.0,
    };

    let mut ev = Evaluator::new(&source);
    let mut k1 = vec![Vec2::ZERO; n];
    let mut k2 = vec![Vec2::ZERO; n];
    let mut k3 = vec![Vec2::ZERO; n];
    let mut k4 = vec![Vec2::ZERO; n];
    let mut tmp = vec![Vec2::ZERO; n];

    let mut times = Vec::new();
    let mut frames = Vec::new();
    let mut velocities = Vec::new();

    ev.eval(&state, &mut k1);
    check_finite(&k1, 0.0)?;
    for step in 0..=nsteps {
        let t = step as f64 * dt;
        if step % opts.record_every == 0 || step == nsteps {
            times.push(t);
            frames.push(state.clone());
            velocities.push(k1.clone());
        }
        if step == nsteps {
            break;
        }
        for i in 0..n {
            tmp[i] = state[i] + k1[i] * (0.5 * dt);
        }
        ev.eval(&tmp, &mut k2);
        for i in 0..n {
            tmp[i] = state[i] + k2[i] * (0.5 * dt);
        }
        ev.eval(&tmp, &mut k3);
        for i in 0..n {
            tmp[i] = state[i] + k3[i] * dt;
        }
        ev.eval(&tmp, &mut k4);
        for i in 0..n {
            state[i] += (k1[i] + (k2[i] + k3[i]) * 2.0 + k4[i]) * (dt / 6.0);
        }
        check_finite(&state, t + dt)?;
        ev.eval(&state, &mut k1);
        check_finite(&k1, t + dt)?;
    }

    let omega_sup = match &source {
        // sup of |ω| over the tracked points
        VelocitySource::Analytic(u) => frames
            .iter()
            .flat_map(|f| f.iter().map(|&x| u.omega(x).abs()))
            .fold(0.0, f64::max),
        VelocitySource::SelfInduced(_) => omega_sup,
    };
    let h = &opts.norm_bound;
    let c0 = frames
        .iter()
        .zip(&velocities)
        .flat_map(|(f, v)| f.iter().zip(v).map(|(x, u)| u.norm() / h.eval(x.norm())))
        .fold(0.0, f64::max)
        + omega_sup;

    Ok(FlowTrajectorySet {
        times,
        frames,
        velocities,
        n_particles,
        source,
        dt,
        c0,
        norm_bound: opts.norm_bound.clone(),
    })
}

impl FlowTrajectorySet {
    pub fn n_tracks(&self) -> usize {
        self.frames.first().map_or(0, |f| f.len())
    }

    pub fn track(&self, id: usize) -> Vec<Vec2> {
        self.frames.iter().map(|f| f[id]).collect()
    }

    pub fn t_end(&self) -> f64 {
        *self.times.last().unwrap()
    }

    /// Index of a recorded time within 1e-9 relative, if any.
    pub fn frame_index(&self, t: f64) -> Option<usize> {
        self.times
            .iter()
            .position(|&s| (s - t).abs() <= 1e-9 * t.abs().max(1.0))
    }

    /// The vortex field at recorded frame k (particles moved, ω and areas carried).
    pub fn field_at(&self, k: usize) -> Option<VortexParticleField> {
        match &self.source {
            VelocitySource::SelfInduced(f) => {
                let mut g = f.clone();
                g.positions = self.frames[k][..self.n_particles].to_vec();
                g.lattice = None;
                Some(g)
            }
            VelocitySource::Analytic(_) => None,
        }
    }

    /// Particle positions at time s by linear interpolation between frames.
    fn particles_at(&self, s: f64, out: &mut Vec<Vec2>) {
        let n = self.n_particles;
        out.clear();
        let k = match self.times.iter().position(|&t| t >= s) {
            Some(0) | None if s <= self.times[0] => 0,
            Some(k) => k,
            None => self.times.len() - 1,
        };
        if k == 0 || self.times[k] == s {
            out.extend_from_slice(&self.frames[k][..n]);
            return;
        }
        let (t0, t1) = (self.times[k - 1], self.times[k]);
        let w = (s - t0) / (t1 - t0);
        out.extend(
            self.frames[k - 1][..n]
                .iter()
                .zip(&self.frames[k][..n])
                .map(|(a, b)| a.lerp(*b, w)),
        );
    }

    /// Velocity of the recorded flow at (s, y).
    pub fn velocity_at(&self, s: f64, y: Vec2) -> Vec2 {
        match &self.source {
            VelocitySource::Analytic(u) => u.u(y),
            VelocitySource::SelfInduced(f) => {
                let mut pos = Vec::with_capacity(self.n_particles);
                self.particles_at(s, &mut pos);
                let src = Sources::new(&pos, &f.strengths());
                src.velocity(y, f.core_radius())
            }
        }
    }

    /// Integrate points through the recorded velocity from t0 to t1 with RK4 steps of
    /// about the run's dt (t1 < t0 integrates backward).
    pub fn transport(&self, points: &[Vec2], t0: f64, t1: f64) -> Result<Vec<Vec2>> {
        let (lo, hi) = (self.times[0], self.t_end());
        let tol = 1e-9 * hi.max(1.0);
        if t0 < lo - tol || t0 > hi + tol || t1 < lo - tol || t1 > hi + tol {
            return Err(Error::BadArgument(format!("times {t0}, {t1} outside run [{lo}, {hi}]")));
        }
        let nsteps = ((t1 - t0).abs() / self.dt).round().max(1.0) as usize;
        let h = (t1 - t0) / nsteps as f64;
        let mut pts = points.to_vec();
        if t0 == t1 {
            return Ok(pts);
        }
        let strengths = match &self.source {
            VelocitySource::SelfInduced(f) => f.strengths(),
            VelocitySource::Analytic(_) => Vec::new(),
        };
        let eps = match &self.source {
            VelocitySource::SelfInduced(f) => f.core_radius(),
            VelocitySource::Analytic(_) => 0.0,
        };
        let mut pos = Vec::new();
        let vel_at = |s: f64, xs: &[Vec2], pos: &mut Vec<Vec2>| -> Vec<Vec2> {
            match &self.source {
                VelocitySource::Analytic(u) => xs.iter().map(|&x| u.u(x)).collect(),
                VelocitySource::SelfInduced(_) => {
                    self.particles_at(s, pos);
                    let src = Sources::new(pos, &strengths);
                    xs.par_iter().map(|&x| src.velocity(x, eps)).collect()
                }
            }
        };
        for k in 0..nsteps {
            let s = t0 + k as f64 * h;
            let k1 = vel_at(s, &pts, &mut pos);
            let p2: Vec<Vec2> = pts.iter().zip(&k1).map(|(p, v)| *p + *v * (0.5 * h)).collect();
            let k2 = vel_at(s + 0.5 * h, &p2, &mut pos);
            let p3: Vec<Vec2> = pts.iter().zip(&k2).map(|(p, v)| *p + *v * (0.5 * h)).collect();
            let k3 = vel_at(s + 0.5 * h, &p3, &mut pos);
            let p4: Vec<Vec2> = pts.iter().zip(&k3).map(|(p, v)| *p + *v * h).collect();
            let k4 = vel_at(s + h, &p4, &mut pos);
            for i in 0..pts.len() {
                pts[i] += (k1[i] + (k2[i] + k3[i]) * 2.0 + k4[i]) * (h / 6.0);
            }
        }
        Ok(pts)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "t,track_id,x,y")?;
        for (t, f) in self.times.iter().zip(&self.frames) {
            for (i, p) in f.iter().enumerate() {
                writeln!(w, "{t},{i},{},{}", p.x, p.y)?;
            }
        }
        Ok(())
    }
}

/// X⁻¹(t, y): backward RK4 through the recorded velocity history.
pub fn inverse_flow(traj: &FlowTrajectorySet, t: f64, y: Vec2) -> Result<Vec2> {
    Ok(traj.transport(&[y], t, 0.0)?[0])
}

/// X(t, x) through the recorded velocity history.
pub fn forward_flow(traj: &FlowTrajectorySet, t: f64, x: Vec2) -> Result<Vec2> {
    Ok(traj.transport(&[x], 0.0, t)?[0])
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct FlowBoundReport {
    pub times: Vec<f64>,
    pub ratios: Vec<f64>,
    pub c0: f64,
    pub holds: bool,
}

fn ft_cache(h: &GrowthBound, c0: f64, t: f64, radii: &[f64]) -> Result<Vec<f64>> {
    if h.is_constant() {
        return Ok(vec![h.eval(0.0); radii.len()]);
    }
    radii.par_iter().map(|&r| f_t(h, c0, t, r)).collect()
}

/// max over tracks of |X(t,x) - x| / (F_t(x) t), F_t built with rate C0.
pub fn flow_bound_check(traj: &FlowTrajectorySet, h: &GrowthBound) -> Result<FlowBoundReport> {
    let c0 = traj.c0;
    let radii: Vec<f64> = traj.frames[0].iter().map(|x| x.norm()).collect();
    let mut times = Vec::new();
    let mut ratios = Vec::new();
    for (k, &t) in traj.times.iter().enumerate().skip(1) {
        let ft = ft_cache(h, c0, t, &radii)?;
        let r = traj.frames[k]
            .iter()
            .zip(&traj.frames[0])
            .zip(&ft)
            .map(|((x, x0), f)| (*x - *x0).norm() / (f * t))
            .fold(0.0, f64::max);
        times.push(t);
        ratios.push(r);
    }
    let holds = ratios.iter().all(|&r| r <= c0 * 1.05);
    Ok(FlowBoundReport { times, ratios, c0, holds })
}

/// Two-solution version: |X1(t,x) - X2(t,x)| / (F_t(x) t) with C0 the larger of the two.
/// Tracks are matched by index.
pub fn flow_bound_check_pair(a: &FlowTrajectorySet, b: &FlowTrajectorySet, h: &GrowthBound) -> Result<FlowBoundReport> {
    if a.times.len() != b.times.len() || a.n_tracks() != b.n_tracks() {
        return Err(Error::BadArgument("runs are not aligned".into()));
    }
    let c0 = a.c0.max(b.c0);
    let radii: Vec<f64> = a.frames[0].iter().map(|x| x.norm()).collect();
    let mut times = Vec::new();
    let mut ratios = Vec::new();
    for (k, &t) in a.times.iter().enumerate().skip(1) {
        let ft = ft_cache(h, c0, t, &radii)?;
        let r = a.frames[k]
            .iter()
            .zip(&b.frames[k])
            .zip(&ft)
            .map(|((x1, x2), f)| (*x1 - *x2).norm() / (f * t))
            .fold(0.0, f64::max);
        times.push(t);
        ratios.push(r);
    }
    let holds = ratios.iter().all(|&r| r <= c0 * 1.05);
    Ok(FlowBoundReport { times, ratios, c0, holds })
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct MocReport {
    pub times: Vec<f64>,
    /// per time, max over pairs of |X(t,x) - X(t,y)| / χ_t(|x - y|)
    pub ratios: Vec<f64>,
    pub fitted_c: f64,
}

/// Spatial modulus of the flow over all pairs of the given track ids.
pub fn moc_check(traj: &FlowTrajectorySet, c0: f64, ids: &[usize]) -> Result<MocReport> {
    let f0 = &traj.frames[0];
    let mut pairs = Vec::new();
    for (a, &i) in ids.iter().enumerate() {
        for &j in &ids[a + 1..] {
            let d = (f0[i] - f0[j]).norm();
            if d > 0.0 {
                pairs.push((i, j, d));
            }
        }
    }
    let mut ratios = Vec::new();
    for (k, &t) in traj.times.iter().enumerate() {
        let fk = &traj.frames[k];
        let mut m: f64 = 0.0;
        for &(i, j, d) in &pairs {
            m = m.max((fk[i] - fk[j]).norm() / chi_t(c0, t, d)?);
        }
        ratios.push(m);
    }
    let fitted_c = ratios.iter().cloned().fold(0.0, f64::max);
    Ok(MocReport {
        times: traj.times.clone(),
        ratios,
        fitted_c,
    })
}

/// Principal-axis angle of the particle distribution at each frame, unwrapped.
pub fn principal_angles(traj: &FlowTrajectorySet) -> Vec<f64> {
    let n = traj.n_particles;
    let areas: Vec<f64> = match &traj.source {
        VelocitySource::SelfInduced(f) => f.areas.clone(),
        VelocitySource::Analytic(_) => vec![1.0; n],
    };
    let mut out: Vec<f64> = Vec::with_capacity(traj.frames.len());
    for f in &traj.frames {
        let pts = &f[..n];
        let m: f64 = areas.iter().sum();
        let c = pts.iter().zip(&areas).fold(Vec2::ZERO, |s, (p, a)| s + *p * *a) * (1.0 / m);
        let (mut ixx, mut iyy, mut ixy) = (0.0, 0.0, 0.0);
        for (p, a) in pts.iter().zip(&areas) {
            let d = *p - c;
            ixx += a * d.x * d.x;
            iyy += a * d.y * d.y;
            ixy += a * d.x * d.y;
        }
        let mut th = 0.5 * (2.0 * ixy).atan2(ixx - iyy);
        if let Some(&prev) = out.last() {
            let pi = std::f64::consts::PI;
            th += pi * ((prev - th) / pi).round();
        }
        out.push(th);
    }
    out
}

/// Least-squares slope of the principal-axis angle against time.
pub fn kirchhoff_rotation_rate(traj: &FlowTrajectorySet) -> f64 {
    let th = principal_angles(traj);
    let t = &traj.times;
    let n = t.len() as f64;
    let mt = t.iter().sum::<f64>() / n;
    let ma = th.iter().sum::<f64>() / n;
    let num: f64 = t.iter().zip(&th).map(|(a, b)| (a - mt) * (b - ma)).sum();
    let den: f64 = t.iter().map(|a| (a - mt) * (a - mt)).sum();
    num / den
}

/// Shoelace area of a closed polygon.
pub fn polygon_area(pts: &[Vec2]) -> f64 {
    let n = pts.len();
    let mut s = 0.0;
    for i in 0..n {
        let (a, b) = (pts[i], pts[(i + 1) % n]);
        s += a.x * b.y - b.x * a.y;
    }
    0.5 * s.abs()
}

/// Area of the convex hull (monotone chain).
pub fn convex_hull_area(pts: &[Vec2]) -> f64 {
    let mut p: Vec<Vec2> = pts.to_vec();
    p.sort_by(|a, b| a.x.partial_cmp(&b.x).unwrap().then(a.y.partial_cmp(&b.y).unwrap()));
    if p.len() < 3 {
        return 0.0;
    }
    let cross = |o: Vec2, a: Vec2, b: Vec2| (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
    let mut hull: Vec<Vec2> = Vec::new();
    for (pass, it) in [p.clone(), p.iter().rev().copied().collect()].into_iter().enumerate() {
        let floor = if pass == 0 { 2 } else { hull.len() + 1 };
        for q in it.into_iter().skip(pass) {
            while hull.len() >= floor && cross(hull[hull.len() - 2], hull[hull.len() - 1], q) <= 0.0 {
                hull.pop();
            }
            hull.push(q);
        }
    }
    hull.pop();
    polygon_area(&hull)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{make_rankine, RadialProfile};

    #[test]
    fn rankine_center_stays_put() {
        let f = make_rankine(1.0, 1.0, 16).unwrap();
        let traj = advect(
            VelocitySource::SelfInduced(f),
            &[Vec2::ZERO],
            1.0,
            0.05,
            &AdvectOptions::default(),
        )
        .unwrap();
        let id = traj.n_tracks() - 1;
        assert!(traj.frames.last().unwrap()[id].norm() < 1e-10);
    }

    #[test]
    fn analytic_exterior_orbit() {
        let u = AnalyticSField::new(GrowthBound::constant(1.0), RadialProfile::Rankine { radius: 1.0, omega0: 1.0 });
        let traj = advect(VelocitySource::Analytic(u), &[Vec2::new(2.0, 0.0)], 4.0, 0.01, &AdvectOptions::default()).unwrap();
        let p = traj.frames.last().unwrap()[0];
        let want = Vec2::polar(2.0, 0.125 * 4.0);
        assert!((p - want).norm() < 1e-9, "{p:?}");
    }

    #[test]
    fn flow_bound_for_rigid_rotation() {
        let u = AnalyticSField::new(GrowthBound::constant(1.0), RadialProfile::Rankine { radius: 1.0, omega0: 1.0 });
        let pts: Vec<Vec2> = (1..10).map(|k| Vec2::polar(0.1 * k as f64, 0.3 * k as f64)).collect();
        let traj = advect(VelocitySource::Analytic(u), &pts, 2.0, 0.01, &AdvectOptions::default()).unwrap();
        let rep = flow_bound_check(&traj, &GrowthBound::constant(1.0)).unwrap();
        assert!(rep.holds);
        // rigid rotation preserves distances
        let ids: Vec<usize> = (0..pts.len()).collect();
        let moc = moc_check(&traj, 0.0, &ids).unwrap();
        assert!((moc.fitted_c - 1.0).abs() < 1e-9);
    }

    #[test]
    fn hull_and_polygon_area() {
        let sq = [Vec2::new(0.0, 0.0), Vec2::new(1.0, 0.0), Vec2::new(1.0, 1.0), Vec2::new(0.0, 1.0)];
        assert!((polygon_area(&sq) - 1.0).abs() < 1e-15);
        let mut pts = sq.to_vec();
        pts.push(Vec2::new(0.5, 0.5));
        assert!((convex_hull_area(&pts) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_steps() {
        let u = AnalyticSField::new(GrowthBound::constant(1.0), RadialProfile::Zero);
        assert!(advect(VelocitySource::Analytic(u), &[], 1.0, 0.0, &AdvectOptions::default()).is_err());
    }
}
