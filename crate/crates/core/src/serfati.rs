//! Both sides of the renormalized Biot–Savart identity along a recorded run, and the
//! cutoff scale used in the existence estimate.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::flow::{FlowTrajectorySet, VelocitySource};
use crate::geom::Vec2;
use crate::growth_bounds::{compute_h, GrowthBound};
use crate::kernel::{contract, CutoffKernel, RadialCutoff, Sources, Tensor3};
use crate::quadrature::{gauss_legendre, gl_adaptive};

/// Quadrature nodes for ∫_{ℝ²} f(y) dy: a Cartesian grid weighted by a radial partition
/// ψ near the origin plus a polar grid on log-spaced Gauss panels carrying 1 - ψ.
#[derive(Debug, Clone)]
pub struct PlaneQuadrature {
    pub points: Vec<Vec2>,
    pub weights: Vec<f64>,
    /// the first `n_cartesian` nodes are centers of square cells of side `spacing`
    pub n_cartesian: usize,
    pub spacing: f64,
    pub inner_radius: f64,
    pub outer_radius: f64,
    /// estimated share of the |y|^{-3}|u|² mass beyond `outer_radius`
    pub tail_estimate: f64,
}

impl PlaneQuadrature {
    /// ψ = 1 on |y| <= r1, 0 beyond 1.5 r1. `spacing` is the Cartesian step; the polar
    /// part runs out to `r_out`.
    pub fn new(r1: f64, spacing: f64, r_out: f64, n_theta: usize) -> Result<Self> {
        if !(r1 > 0.0 && spacing > 0.0 && r_out > 1.5 * r1 && n_theta >= 8) {
            return Err(Error::BadArgument("bad plane quadrature parameters".into()));
        }
        let r2 = 1.5 * r1;
        let cut = RadialCutoff::default();
        let psi = |r: f64| {
            if r <= r1 {
                1.0
            } else {
                cut.profile(0.5 + 0.5 * (r - r1) / (r2 - r1))
            }
        };
        let mut points = Vec::new();
        let mut weights = Vec::new();
        let m = (r2 / spacing).ceil() as i64;
        let w0 = spacing * spacing;
        for i in -m..=m {
            for j in -m..=m {
                let y = Vec2::new(i as f64 * spacing, j as f64 * spacing);
                let p = psi(y.norm());
                if p > 0.0 {
                    points.push(y);
                    weights.push(w0 * p);
                }
            }
        }
        let n_cartesian = points.len();
        let (gx, gw) = gauss_legendre(8);
        let dth = 2.0 * std::f64::consts::PI / n_theta as f64;
        // finer panels across the partition, then doubling shells
        let mut edges: Vec<f64> = (0..=4).map(|k| r1 + (r2 - r1) * k as f64 / 4.0).collect();
        let mut r = r2;
        while r < r_out {
            r = (2.0 * r).min(r_out);
            edges.push(r);
        }
        for e in edges.windows(2) {
            let (a, b) = (e[0], e[1]);
            let (c, hw) = (0.5 * (a + b), 0.5 * (b - a));
            for (x, w) in gx.iter().zip(&gw) {
                let rr = c + hw * x;
                let q = 1.0 - psi(rr);
                if q <= 0.0 {
                    continue;
                }
                for k in 0..n_theta {
                    points.push(Vec2::polar(rr, (k as f64 + 0.5) * dth));
                    weights.push(w * hw * rr * dth * q);
                }
            }
        }
        Ok(PlaneQuadrature {
            points,
            weights,
            n_cartesian,
            spacing,
            inner_radius: r1,
            outer_radius: r_out,
            tail_estimate: 0.0,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    /// Weights W_k with ∫ T(x - y) f(y) dy ≈ Σ_k W_k f(y_k) for the far-field tensor T of
    /// `kern`. On Cartesian cells T is integrated over the cell by a tensor Gauss rule
    /// (fine where the cutoff varies), so only f is sampled at the node. Nodes with T = 0
    /// are omitted.
    pub fn tensor_weights(&self, kern: &CutoffKernel, x: Vec2) -> Vec<(usize, Tensor3)> {
        let lam = kern.lambda;
        let h = self.spacing;
        let half_diag = std::f64::consts::FRAC_1_SQRT_2 * h;
        let mut rules: Vec<Option<(Vec<f64>, Vec<f64>)>> = vec![None; 25];
        let mut out = Vec::new();
        for k in 0..self.points.len() {
            let y = self.points[k];
            let w = self.weights[k];
            if k >= self.n_cartesian {
                let z = x - y;
                if z.norm() > 0.5 * lam {
                    out.push((k, scale3(&kern.far_field_tensor(z), w)));
                }
                continue;
            }
            let d = (x - y).norm();
            if d + half_diag <= 0.5 * lam {
                continue;
            }
            let m = if d - half_diag < lam {
                ((12.0 * h / lam).ceil() as usize + 2).clamp(3, 24)
            } else {
                let r = h / (d - half_diag);
                if r > 0.25 {
                    4
                } else if r > 0.08 {
                    3
                } else if r > 0.02 {
                    2
                } else {
                    1
                }
            };
            let t = if m == 1 {
                kern.far_field_tensor(x - y)
            } else {
                let rule = rules[m].get_or_insert_with(|| gauss_legendre(m));
                let mut acc = [[[0.0; 2]; 2]; 2];
                for (a, wa) in rule.0.iter().zip(&rule.1) {
                    for (b, wb) in rule.0.iter().zip(&rule.1) {
                        let q = y + Vec2::new(0.5 * h * a, 0.5 * h * b);
                        add3(&mut acc, &kern.far_field_tensor(x - q), 0.25 * wa * wb);
                    }
                }
                acc
            };
            out.push((k, scale3(&t, w)));
        }
        out
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

fn scale3(t: &Tensor3, w: f64) -> Tensor3 {
    let mut o = *t;
    o.iter_mut().flatten().flatten().for_each(|v| *v *= w);
    o
}

fn add3(acc: &mut Tensor3, t: &Tensor3, w: f64) {
    for j in 0..2 {
        for i in 0..2 {
            for k in 0..2 {
                acc[j][i][k] += w * t[j][i][k];
            }
        }
    }
}

/// Evaluation setup shared by all (x, t, λ) queries on one run.
#[derive(Debug, Clone)]
pub struct SerfatiSetup {
    pub eval_points: Vec<Vec2>,
    pub lambdas: Vec<f64>,
    /// Cartesian step of the flux quadrature; defaults to the particle spacing
    pub grid_spacing: Option<f64>,
    /// relative tail allowed beyond the quadrature window
    pub window_tol: f64,
    pub n_theta: usize,
}

impl SerfatiSetup {
    pub fn new(eval_points: Vec<Vec2>, lambdas: Vec<f64>) -> Self {
        SerfatiSetup {
            eval_points,
            lambdas,
            grid_spacing: None,
            window_tol: 1e-8,
            n_theta: 64,
        }
    }
}

/// Precomputed far-field integrands g_k(x, λ) = (∇∇⊥[(1 - a_λ)K] *· u⊗u)(t_k, x) for every
/// recorded frame, plus the near-field and direct Biot–Savart values.
pub struct SerfatiEvaluator<'a> {
    traj: &'a FlowTrajectorySet,
    pub setup: SerfatiSetup,
    pub quadrature: PlaneQuadrature,
    /// [frame][lambda][point]
    far: Vec<Vec<Vec<Vec2>>>,
    /// sup over the quadrature nodes of |u|², per frame
    pub speed_sq_sup: Vec<f64>,
}

fn run_field(traj: &FlowTrajectorySet) -> Result<&crate::fields::VortexParticleField> {
    match &traj.source {
        VelocitySource::SelfInduced(f) => Ok(f),
        VelocitySource::Analytic(_) => Err(Error::BadArgument(
            "the identity is evaluated on self-induced runs".into(),
        )),
    }
}

impl<'a> SerfatiEvaluator<'a> {
    pub fn new(traj: &'a FlowTrajectorySet, setup: SerfatiSetup) -> Result<Self> {
        let field = run_field(traj)?;
        if setup.lambdas.iter().any(|&l| !(l > 0.0 && l.is_finite())) {
            return Err(Error::BadArgument("lambda must be positive".into()));
        }
        if setup.eval_points.is_empty() || setup.lambdas.is_empty() {
            return Err(Error::BadArgument("need evaluation points and lambdas".into()));
        }
        let n = traj.n_particles;
        let support = traj
            .frames
            .iter()
            .flat_map(|f| f[..n].iter().map(|p| p.norm()))
            .fold(0.0, f64::max)
            + 2.0 * field.spacing;
        let lmax = setup.lambdas.iter().cloned().fold(0.0, f64::max);
        let reach = setup.eval_points.iter().map(|x| x.norm()).fold(0.0, f64::max) + lmax;
        let r1 = support.max(reach) + 0.5;
        // |T| ~ |y|^{-3} and |u|² ~ |y|^{-2} give a tail share ~ (λ/2 / R)^3
        let r_out = (4.0 * 1.5 * r1).max(0.5 * lmax * setup.window_tol.powf(-1.0 / 3.0) * 4.0);
        let spacing = setup.grid_spacing.unwrap_or(field.spacing);
        let mut quad = PlaneQuadrature::new(r1, spacing, r_out, setup.n_theta)?;
        quad.tail_estimate = (0.5 * setup.lambdas.iter().cloned().fold(f64::INFINITY, f64::min) / r_out).powi(3);

        let kernels: Vec<CutoffKernel> = setup
            .lambdas
            .iter()
            .map(|&l| CutoffKernel::new(l))
            .collect::<Result<_>>()?;
        let strengths = field.strengths();
        let eps = field.core_radius();
        let uu: Vec<Vec<[f64; 3]>> = traj
            .frames
            .iter()
            .map(|frame| {
                let src = Sources::new(&frame[..n], &strengths);
                quad.points
                    .par_iter()
                    .map(|&y| {
                        let u = src.velocity(y, eps);
                        [u.x * u.x, u.x * u.y, u.y * u.y]
                    })
                    .collect()
            })
            .collect();
        let speed_sq_sup = uu
            .iter()
            .map(|f| f.iter().map(|m| m[0] + m[2]).fold(0.0, f64::max))
            .collect();
        let pairs: Vec<(usize, usize)> = (0..kernels.len())
            .flat_map(|l| (0..setup.eval_points.len()).map(move |p| (l, p)))
            .collect();
        // [pair][frame]
        let series: Vec<Vec<Vec2>> = pairs
            .par_iter()
            .map(|&(l, p)| {
                let w = quad.tensor_weights(&kernels[l], setup.eval_points[p]);
                uu.iter()
                    .map(|f| {
                        w.iter().fold(Vec2::ZERO, |acc, (k, t)| {
                            let m = f[*k];
                            acc + contract(t, &[[m[0], m[1]], [m[1], m[2]]])
                        })
                    })
                    .collect()
            })
            .collect();
        let np = setup.eval_points.len();
        let far: Vec<Vec<Vec<Vec2>>> = (0..traj.frames.len())
            .map(|k| {
                (0..kernels.len())
                    .map(|l| (0..np).map(|p| series[l * np + p][k]).collect())
                    .collect()
            })
            .collect();
        Ok(SerfatiEvaluator {
            traj,
            setup,
            quadrature: quad,
            far,
            speed_sq_sup,
        })
    }

    fn frame(&self, t: f64) -> Result<usize> {
        self.traj.frame_index(t).ok_or_else(|| {
            Error::BadArgument(format!(
                "t = {t} is not a recorded time of the run [0, {}]",
                self.traj.t_end()
            ))
        })
    }

    fn index(&self, x: Vec2, lambda: f64) -> Result<(usize, usize)> {
        let p = self
            .setup
            .eval_points
            .iter()
            .position(|q| *q == x)
            .ok_or_else(|| Error::BadArgument(format!("{x:?} is not a set-up evaluation point")))?;
        let l = self
            .setup
            .lambdas
            .iter()
            .position(|&m| m == lambda)
            .ok_or_else(|| Error::BadArgument(format!("lambda {lambda} was not set up")))?;
        Ok((p, l))
    }

    /// The far-field integrand at frame k.
    pub fn far_integrand(&self, k: usize, x: Vec2, lambda: f64) -> Result<Vec2> {
        let (p, l) = self.index(x, lambda)?;
        self.far
            .get(k)
            .map(|f| f[l][p])
            .ok_or_else(|| Error::BadArgument(format!("no frame {k}")))
    }

    /// ∫_0^t of the far-field integrand by the trapezoid rule on the recorded frames.
    pub fn far_term(&self, x: Vec2, t: f64, lambda: f64) -> Result<Vec2> {
        let k = self.frame(t)?;
        let (p, l) = self.index(x, lambda)?;
        let times = &self.traj.times;
        let mut acc = Vec2::ZERO;
        for m in 0..k {
            let dt = times[m + 1] - times[m];
            acc += (self.far[m][l][p] + self.far[m + 1][l][p]) * (0.5 * dt);
        }
        Ok(acc)
    }

    /// (a_λ K) * (ω(t) - ω⁰)(x): advected minus initial particle clouds.
    pub fn near_term(&self, x: Vec2, t: f64, lambda: f64) -> Result<Vec2> {
        let k = self.frame(t)?;
        let field = run_field(self.traj)?;
        let kern = CutoffKernel::new(lambda)?;
        let n = self.traj.n_particles;
        let s = field.strengths();
        let eps = field.core_radius();
        Ok(kern.near_sum(&self.traj.frames[k][..n], &s, x, eps) - kern.near_sum(&self.traj.frames[0][..n], &s, x, eps))
    }

    pub fn rhs(&self, x: Vec2, t: f64, lambda: f64) -> Result<Vec2> {
        Ok(self.near_term(x, t, lambda)? - self.far_term(x, t, lambda)?)
    }

    /// u(t, x) - u(0, x) by the direct sum.
    pub fn lhs(&self, x: Vec2, t: f64) -> Result<Vec2> {
        let k = self.frame(t)?;
        let field = run_field(self.traj)?;
        let n = self.traj.n_particles;
        let s = field.strengths();
        let eps = field.core_radius();
        let ut = Sources::new(&self.traj.frames[k][..n], &s).velocity(x, eps);
        let u0 = Sources::new(&self.traj.frames[0][..n], &s).velocity(x, eps);
        Ok(ut - u0)
    }

    /// One residual record per λ over the set-up points and the given times.
    pub fn residuals(&self, times: &[f64]) -> Result<Vec<SerfatiResidual>> {
        let lhs: Vec<Vec<Vec2>> = times
            .iter()
            .map(|&t| self.setup.eval_points.iter().map(|&x| self.lhs(x, t)).collect())
            .collect::<Result<_>>()?;
        let mut out = Vec::new();
        for &lambda in &self.setup.lambdas {
            let mut rhs = Vec::new();
            let mut norm: f64 = 0.0;
            for (ti, &t) in times.iter().enumerate() {
                let row: Vec<Vec2> = self
                    .setup
                    .eval_points
                    .iter()
                    .map(|&x| self.rhs(x, t, lambda))
                    .collect::<Result<_>>()?;
                for (a, b) in lhs[ti].iter().zip(&row) {
                    norm = norm.max((*a - *b).norm());
                }
                rhs.push(row);
            }
            out.push(SerfatiResidual {
                eval_points: self.setup.eval_points.clone(),
                times: times.to_vec(),
                lambda,
                lhs: lhs.clone(),
                rhs,
                residual_norm: norm,
            });
        }
        Ok(out)
    }

    /// max over frames of |far integrand| / (Λ(s) (H[h²](λ/2) + h(x)²/λ)), with Λ the
    /// sup of |u/h|² over the quadrature nodes.
    pub fn far_bound_constant(&self, h: &GrowthBound, x: Vec2, lambda: f64) -> Result<f64> {
        let (p, l) = self.index(x, lambda)?;
        let hh = compute_h(h, 0.5 * lambda, 2)?;
        let hx = h.eval(x.norm());
        let base = hh + hx * hx / lambda;
        let mut c: f64 = 0.0;
        for (k, frame) in self.far.iter().enumerate() {
            let big_lambda = self.lambda_sup(k, h);
            if big_lambda > 0.0 {
                c = c.max(frame[l][p].norm() / (big_lambda * base));
            }
        }
        Ok(c)
    }

    fn lambda_sup(&self, k: usize, h: &GrowthBound) -> f64 {
        if h.is_constant() {
            let c = h.eval(0.0);
            return self.speed_sq_sup[k] / (c * c);
        }
        // the quadrature sup is taken on |u|², rescale pointwise on the recorded tracks
        let f = &self.traj.frames[k];
        let v = &self.traj.velocities[k];
        f.iter()
            .zip(v)
            .map(|(x, u)| (u.norm() / h.eval(x.norm())).powi(2))
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SerfatiResidual {
    pub eval_points: Vec<Vec2>,
    pub times: Vec<f64>,
    pub lambda: f64,
    /// [time][point]
    pub lhs: Vec<Vec<Vec2>>,
    pub rhs: Vec<Vec<Vec2>>,
    pub residual_norm: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ResidualRow {
    pub scenario: String,
    pub lambda: f64,
    pub time: f64,
    pub point: [f64; 2],
    pub lhs: [f64; 2],
    pub rhs: [f64; 2],
    pub abs_err: f64,
}

impl SerfatiResidual {
    pub fn rows(&self, scenario: &str) -> Vec<ResidualRow> {
        let mut out = Vec::new();
        for (ti, &t) in self.times.iter().enumerate() {
            for (pi, x) in self.eval_points.iter().enumerate() {
                let (a, b) = (self.lhs[ti][pi], self.rhs[ti][pi]);
                out.push(ResidualRow {
                    scenario: scenario.to_string(),
                    lambda: self.lambda,
                    time: t,
                    point: [x.x, x.y],
                    lhs: [a.x, a.y],
                    rhs: [b.x, b.y],
                    abs_err: (a - b).norm(),
                });
            }
        }
        out
    }
}

/// Right-hand side at a single (x, t, λ).
pub fn serfati_rhs(traj: &FlowTrajectorySet, x: Vec2, t: f64, lambda: f64) -> Result<Vec2> {
    if traj.frame_index(t).is_none() {
        return Err(Error::BadArgument(format!("t = {t} is not a recorded time of the run")));
    }
    let ev = SerfatiEvaluator::new(traj, SerfatiSetup::new(vec![x], vec![lambda]))?;
    ev.rhs(x, t, lambda)
}

pub fn serfati_residual(
    traj: &FlowTrajectorySet,
    eval_points: &[Vec2],
    times: &[f64],
    lambdas: &[f64],
) -> Result<Vec<SerfatiResidual>> {
    for &t in times {
        if traj.frame_index(t).is_none() {
            return Err(Error::BadArgument(format!("t = {t} is not a recorded time of the run")));
        }
    }
    let ev = SerfatiEvaluator::new(traj, SerfatiSetup::new(eval_points.to_vec(), lambdas.to_vec()))?;
    ev.residuals(times)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LambdaStar {
    pub lambda: f64,
    /// Λ integrates to zero, so there is no cutoff
    pub degenerate: bool,
}

/// λ = 2 h(x) (∫_0^t Λ)^{1/2}.
pub fn lambda_star<F: Fn(f64) -> f64>(h: &GrowthBound, x: Vec2, big_lambda: F, t: f64) -> Result<LambdaStar> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::BadArgument(format!("t must be >= 0, got {t}")));
    }
    let integral = if t == 0.0 { 0.0 } else { gl_adaptive(&big_lambda, 0.0, t, 1e-12) };
    if !(integral >= 0.0) {
        return Err(Error::BadArgument("Lambda history must be nonnegative".into()));
    }
    let lambda = 2.0 * h.eval(x.norm()) * integral.sqrt();
    Ok(LambdaStar {
        lambda,
        degenerate: lambda == 0.0,
    })
}

/// Λ(s) = sup over tracks of |u/h|² at each recorded frame.
pub fn lambda_history(traj: &FlowTrajectorySet, h: &GrowthBound) -> Vec<f64> {
    traj.frames
        .iter()
        .zip(&traj.velocities)
        .map(|(f, v)| {
            f.iter()
                .zip(v)
                .map(|(x, u)| (u.norm() / h.eval(x.norm())).powi(2))
                .fold(0.0, f64::max)
        })
        .collect()
}

/// Piecewise-linear interpolant of recorded samples (constant beyond the ends).
pub fn interpolate(times: &[f64], values: &[f64]) -> impl Fn(f64) -> f64 {
    let t = times.to_vec();
    let v = values.to_vec();
    move |s: f64| {
        if s <= t[0] {
            return v[0];
        }
        if s >= t[t.len() - 1] {
            return v[v.len() - 1];
        }
        let k = t.partition_point(|&a| a <= s);
        let w = (s - t[k - 1]) / (t[k] - t[k - 1]);
        v[k - 1] * (1.0 - w) + v[k] * w
    }
}
