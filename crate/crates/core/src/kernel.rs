//! Biot-Savart kernel, radial cutoff, near-field kernel and far-field tensor.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::VortexParticleField;
use crate::geom::Vec2;
use crate::growth_bounds::mubar;
use crate::quadrature::{gauss_legendre, gl_adaptive, gl_panel};

/// Fraction of the particle spacing inside which a particle's contribution is dropped.
pub const CORE_FRACTION: f64 = 0.4;

/// K(x) = x⊥ / (2π |x|²).
pub fn biot_savart_k(x: Vec2) -> Result<Vec2> {
    let r2 = x.norm_sq();
    if r2 == 0.0 {
        return Err(Error::SingularPoint);
    }
    Ok(x.perp() * (1.0 / (2.0 * PI * r2)))
}

/// Point vortices in struct-of-arrays layout for the direct sum.
#[derive(Debug, Clone, Default)]
pub struct Sources {
    xs: Vec<f64>,
    ys: Vec<f64>,
    ss: Vec<f64>,
}

const LANES: usize = 8;

#[inline(always)]
fn sum_lanes(xs: &[f64], ys: &[f64], ss: &[f64], x: Vec2, eps2: f64) -> Vec2 {
    let mut ux = [0.0f64; LANES];
    let mut uy = [0.0f64; LANES];
    let cx = xs.chunks_exact(LANES);
    let cy = ys.chunks_exact(LANES);
    let cs = ss.chunks_exact(LANES);
    let (rx, ry, rs) = (cx.remainder(), cy.remainder(), cs.remainder());
    for ((a, b), c) in cx.zip(cy).zip(cs) {
        for l in 0..LANES {
            let dx = x.x - a[l];
            let dy = x.y - b[l];
            let r2 = dx * dx + dy * dy;
            // particles inside the core contribute s / inf = 0
            let d = if r2 > eps2 { r2 } else { f64::INFINITY };
            let w = c[l] / d;
            ux[l] -= dy * w;
            uy[l] += dx * w;
        }
    }
    let mut u = Vec2::new(ux.iter().sum(), uy.iter().sum());
    for i in 0..rx.len() {
        let dx = x.x - rx[i];
        let dy = x.y - ry[i];
        let r2 = dx * dx + dy * dy;
        let d = if r2 > eps2 { r2 } else { f64::INFINITY };
        let w = rs[i] / d;
        u.x -= dy * w;
        u.y += dx * w;
    }
    u * (0.5 / PI)
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2,fma")]
unsafe fn sum_lanes_avx2(xs: &[f64], ys: &[f64], ss: &[f64], x: Vec2, eps2: f64) -> Vec2 {
    sum_lanes(xs, ys, ss, x, eps2)
}

impl Sources {
    pub fn new(positions: &[Vec2], strengths: &[f64]) -> Self {
        Sources {
            xs: positions.iter().map(|p| p.x).collect(),
            ys: positions.iter().map(|p| p.y).collect(),
            ss: strengths.to_vec(),
        }
    }

    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }

    /// Move the sources, keeping strengths.
    pub fn set_positions(&mut self, positions: &[Vec2]) {
        for (k, p) in positions.iter().enumerate() {
            self.xs[k] = p.x;
            self.ys[k] = p.y;
        }
    }

    /// Σ K(x - p_i) s_i over sources farther than eps from x.
    #[inline]
    pub fn velocity(&self, x: Vec2, eps: f64) -> Vec2 {
        let eps2 = eps * eps;
        #[cfg(target_arch = "x86_64")]
        {
            if std::arch::is_x86_feature_detected!("avx2") && std::arch::is_x86_feature_detected!("fma") {
                // SAFETY: the required CPU features were detected at runtime.
                return unsafe { sum_lanes_avx2(&self.xs, &self.ys, &self.ss, x, eps2) };
            }
        }
        sum_lanes(&self.xs, &self.ys, &self.ss, x, eps2)
    }
}

/// Direct sum Σ K(x - p_i) s_i, skipping |x - p_i| <= eps.
pub fn biot_savart_sum(positions: &[Vec2], strengths: &[f64], x: Vec2, eps: f64) -> Vec2 {
    Sources::new(positions, strengths).velocity(x, eps)
}

#[inline]
fn bump(t: f64) -> f64 {
    if t < 1.0 / 700.0 {
        0.0
    } else {
        (-1.0 / t).exp()
    }
}

#[inline]
fn bump_d1(t: f64) -> f64 {
    if t < 1.0 / 700.0 {
        0.0
    } else {
        bump(t) / (t * t)
    }
}

#[inline]
fn bump_d2(t: f64) -> f64 {
    if t < 1.0 / 700.0 {
        0.0
    } else {
        bump(t) * (1.0 - 2.0 * t) / (t * t * t * t)
    }
}

/// Smooth radial profile: 1 on [0, 1/2], 0 on [1, ∞), B(1-q)/(B(1-q)+B(q)) with
/// q = 2s - 1 and B(t) = exp(-1/t) in between.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadialCutoff {
    pub inner_radius: f64,
    pub outer_radius: f64,
}

impl Default for RadialCutoff {
    fn default() -> Self {
        RadialCutoff {
            inner_radius: 0.5,
            outer_radius: 1.0,
        }
    }
}

impl RadialCutoff {
    #[inline]
    fn q(&self, s: f64) -> f64 {
        (s - self.inner_radius) / (self.outer_radius - self.inner_radius)
    }

    #[inline]
    fn dq(&self) -> f64 {
        1.0 / (self.outer_radius - self.inner_radius)
    }

    #[inline]
    pub fn profile(&self, s: f64) -> f64 {
        if s <= self.inner_radius {
            return 1.0;
        }
        if s >= self.outer_radius {
            return 0.0;
        }
        let q = self.q(s);
        let u = bump(1.0 - q);
        let v = bump(q);
        u / (u + v)
    }

    pub fn d1(&self, s: f64) -> f64 {
        if s <= self.inner_radius || s >= self.outer_radius {
            return 0.0;
        }
        let q = self.q(s);
        let (u, du) = (bump(1.0 - q), -bump_d1(1.0 - q));
        let (v, dv) = (bump(q), bump_d1(q));
        let d = u + v;
        self.dq() * (du * v - u * dv) / (d * d)
    }

    pub fn d2(&self, s: f64) -> f64 {
        if s <= self.inner_radius || s >= self.outer_radius {
            return 0.0;
        }
        let q = self.q(s);
        let (u, du, ddu) = (bump(1.0 - q), -bump_d1(1.0 - q), bump_d2(1.0 - q));
        let (v, dv, ddv) = (bump(q), bump_d1(q), bump_d2(q));
        let d = u + v;
        let n = du * v - u * dv;
        let f2 = (ddu * v - u * ddv) / (d * d) - 2.0 * n * (du + dv) / (d * d * d);
        self.dq() * self.dq() * f2
    }

    /// ∫_0^∞ profile(s) ds.
    pub fn mean(&self) -> f64 {
        self.inner_radius + gl_adaptive(&|s| self.profile(s), self.inner_radius, self.outer_radius, 1e-14)
    }
}

pub type Tensor3 = [[[f64; 2]; 2]; 2];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CutoffKernel {
    pub cutoff: RadialCutoff,
    pub lambda: f64,
}

/// ∂_i K^j, indexed [i][j].
fn grad_k(z: Vec2) -> [[f64; 2]; 2] {
    let zz = [z.x, z.y];
    let r2 = z.norm_sq();
    let g = 1.0 / (2.0 * PI * r2);
    let p = [-z.y, z.x];
    let mut out = [[0.0; 2]; 2];
    for i in 0..2 {
        let dg = -zz[i] / (PI * r2 * r2);
        for j in 0..2 {
            out[i][j] = dg * p[j] + g * perp_jacobian(i, j);
        }
    }
    out
}

/// ∂_i P^j for P = (-z_2, z_1).
#[inline]
fn perp_jacobian(i: usize, j: usize) -> f64 {
    match (i, j) {
        (1, 0) => -1.0,
        (0, 1) => 1.0,
        _ => 0.0,
    }
}

/// ∂_i ∂_m K^j, indexed [j][i][m].
fn hess_k(z: Vec2) -> Tensor3 {
    let zz = [z.x, z.y];
    let r2 = z.norm_sq();
    let r4 = r2 * r2;
    let p = [-z.y, z.x];
    let dg = [-zz[0] / (PI * r4), -zz[1] / (PI * r4)];
    let mut out = [[[0.0; 2]; 2]; 2];
    for j in 0..2 {
        for i in 0..2 {
            for m in 0..2 {
                let delta = if i == m { 1.0 } else { 0.0 };
                let ddg = -delta / (PI * r4) + 4.0 * zz[i] * zz[m] / (PI * r4 * r2);
                out[j][i][m] = ddg * p[j] + dg[i] * perp_jacobian(m, j) + dg[m] * perp_jacobian(i, j);
            }
        }
    }
    out
}

impl CutoffKernel {
    pub fn new(lambda: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::BadArgument(format!("lambda must be positive, got {lambda}")));
        }
        Ok(CutoffKernel {
            cutoff: RadialCutoff::default(),
            lambda,
        })
    }

    /// a_λ(x) = profile(|x|/λ).
    #[inline]
    pub fn a(&self, x: Vec2) -> f64 {
        self.cutoff.profile(x.norm() / self.lambda)
    }

    /// a_λ(x) K(x); zero at the origin.
    pub fn near_kernel(&self, x: Vec2) -> Vec2 {
        let r2 = x.norm_sq();
        if r2 == 0.0 {
            return Vec2::ZERO;
        }
        x.perp() * (self.a(x) / (2.0 * PI * r2))
    }

    /// Σ a_λ(x - p_i) K(x - p_i) s_i, skipping |x - p_i| < eps.
    pub fn near_sum(&self, positions: &[Vec2], strengths: &[f64], x: Vec2, eps: f64) -> Vec2 {
        let eps2 = eps * eps;
        let l2 = self.lambda * self.lambda;
        let mut u = Vec2::ZERO;
        for (p, &s) in positions.iter().zip(strengths) {
            let z = x - *p;
            let r2 = z.norm_sq();
            if r2 <= eps2 || r2 >= l2 {
                continue;
            }
            let a = self.cutoff.profile(r2.sqrt() / self.lambda);
            u += z.perp() * (a * s / r2);
        }
        u * (0.5 / PI)
    }

    /// Components [j][i][k] = ∂_i ∂⊥_k [(1 - a_λ) K^j](x), ∂⊥ = (-∂_2, ∂_1).
    pub fn far_field_tensor(&self, x: Vec2) -> Tensor3 {
        let r = x.norm();
        if r <= self.cutoff.inner_radius * self.lambda {
            return [[[0.0; 2]; 2]; 2];
        }
        let hk = hess_k(x);
        let s = r / self.lambda;
        let one_minus_a = 1.0 - self.cutoff.profile(s);
        // ∂_i ∂_m F^j for F = (1 - a) K
        let mut d2f = [[[0.0; 2]; 2]; 2];
        if s >= self.cutoff.outer_radius {
            d2f = hk;
        } else {
            let z = [x.x, x.y];
            let k = x.perp() * (1.0 / (2.0 * PI * r * r));
            let kk = [k.x, k.y];
            let gk = grad_k(x);
            let a1 = self.cutoff.d1(s) / self.lambda;
            let a2 = self.cutoff.d2(s) / (self.lambda * self.lambda);
            let mut da = [0.0; 2];
            let mut dda = [[0.0; 2]; 2];
            for i in 0..2 {
                da[i] = a1 * z[i] / r;
                for m in 0..2 {
                    let delta = if i == m { 1.0 } else { 0.0 };
                    dda[i][m] = a2 * z[i] * z[m] / (r * r) + a1 * (delta / r - z[i] * z[m] / (r * r * r));
                }
            }
            for j in 0..2 {
                for i in 0..2 {
                    for m in 0..2 {
                        d2f[j][i][m] = one_minus_a * hk[j][i][m]
                            - da[i] * gk[m][j]
                            - da[m] * gk[i][j]
                            - dda[i][m] * kk[j];
                    }
                }
            }
        }
        let mut out = [[[0.0; 2]; 2]; 2];
        for j in 0..2 {
            for i in 0..2 {
                out[j][i][0] = -d2f[j][i][1];
                out[j][i][1] = d2f[j][i][0];
            }
        }
        out
    }

    /// φ_λ(x) = ∇a_λ · K⊥ = -a'(|x|/λ) / (2π λ |x|).
    pub fn phi(&self, x: Vec2) -> f64 {
        let r = x.norm();
        if r == 0.0 {
            return 0.0;
        }
        -self.cutoff.d1(r / self.lambda) / (2.0 * PI * self.lambda * r)
    }
}

/// Contract a far-field tensor with a symmetric 2x2 matrix over (i, k).
#[inline]
pub fn contract(t: &Tensor3, m: &[[f64; 2]; 2]) -> Vec2 {
    let mut out = [0.0; 2];
    for (j, o) in out.iter_mut().enumerate() {
        for i in 0..2 {
            for k in 0..2 {
                *o += t[j][i][k] * m[i][k];
            }
        }
    }
    Vec2::new(out[0], out[1])
}

/// Σ a_λ(x - p_i) K(x - p_i) ω_i A_i over the field, with the order-zero core rule.
pub fn near_field_convolve(kern: &CutoffKernel, field: &VortexParticleField, x: Vec2) -> Result<Vec2> {
    if field.is_empty() {
        return Err(Error::EmptyField);
    }
    let s = field.strengths();
    Ok(kern.near_sum(&field.positions, &s, x, CORE_FRACTION * field.spacing))
}

/// ‖a_λ K‖_{L¹} / λ on a polar grid.
pub fn kernel_l1_bound_check(kern: &CutoffKernel) -> f64 {
    let l = kern.lambda;
    let c = &kern.cutoff;
    let rule = gauss_legendre(32);
    // |a_λ K| r = a(r/λ)/(2π), independent of angle
    let radial = |r: f64| c.profile(r / l) / (2.0 * PI);
    let inner = gl_panel(&radial, 0.0, c.inner_radius * l, &rule);
    let band = gl_adaptive(&radial, c.inner_radius * l, c.outer_radius * l, 1e-14);
    (inner + band) * 2.0 * PI / l
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LpCheck {
    pub value: f64,
    /// Bound as printed: (2π(2-p))^{p-2} |U|^{1-p/2}.
    pub printed_bound: f64,
    /// Rearrangement bound 2^{1-p} π^{-p/2} |U|^{1-p/2} / (2-p), attained at the center.
    pub sharp_bound: f64,
}

impl LpCheck {
    pub fn within_sharp(&self) -> bool {
        self.value <= self.sharp_bound * (1.0 + 1e-9)
    }
    pub fn within_printed(&self) -> bool {
        self.value <= self.printed_bound * (1.0 + 1e-9)
    }
}

/// ‖K(x - ·)‖^p_{L^p(U)} for U the disk of radius `radius` and x at `offset` from its center.
pub fn lp_rearrangement_check(radius: f64, p: f64, offset: f64) -> Result<LpCheck> {
    if !(1.0..2.0).contains(&p) {
        return Err(Error::BadArgument(format!("p must lie in [1, 2), got {p}")));
    }
    if !(radius > 0.0) || !(0.0..=radius).contains(&offset) {
        return Err(Error::BadArgument(format!(
            "need radius > 0 and 0 <= offset <= radius (radius={radius}, offset={offset})"
        )));
    }
    // polar coordinates about x: ∫_0^ρ(θ) (2πs)^{-p} s ds = (2π)^{-p} ρ^{2-p}/(2-p)
    let rho = |th: f64| {
        let c = th.cos();
        let s = th.sin();
        let root = (radius * radius - offset * offset * s * s).max(0.0).sqrt();
        if offset * c > 0.0 {
            (radius * radius - offset * offset) / (offset * c + root)
        } else {
            root - offset * c
        }
    };
    let radial = |th: f64| (2.0 * PI).powf(-p) * rho(th).powf(2.0 - p) / (2.0 - p);
    let value = gl_adaptive(&radial, 0.0, PI, 1e-13) * 2.0;
    let area = PI * radius * radius;
    Ok(LpCheck {
        value,
        printed_bound: (2.0 * PI * (2.0 - p)).powf(p - 2.0) * area.powf(1.0 - p / 2.0),
        sharp_bound: 2f64.powf(1.0 - p) * PI.powf(-p / 2.0) * area.powf(1.0 - p / 2.0) / (2.0 - p),
    })
}

/// Polar rule about a point: (radius, weight) pairs over [0, rmax] with the band
/// [inner, outer] λ resolved separately, and n_theta angles.
struct PolarRule {
    radii: Vec<(f64, f64)>,
    angles: Vec<Vec2>,
    dtheta: f64,
}

impl PolarRule {
    fn new(breaks: &[f64], per_panel: usize, n_theta: usize) -> Self {
        let rule = gauss_legendre(per_panel);
        let mut radii = Vec::new();
        for w in breaks.windows(2) {
            let (a, b) = (w[0], w[1]);
            let c = 0.5 * (a + b);
            let h = 0.5 * (b - a);
            for (x, wt) in rule.0.iter().zip(&rule.1) {
                radii.push((c + h * x, wt * h));
            }
        }
        let angles = (0..n_theta)
            .map(|k| Vec2::polar(1.0, 2.0 * PI * (k as f64 + 0.5) / n_theta as f64))
            .collect();
        PolarRule {
            radii,
            angles,
            dtheta: 2.0 * PI / n_theta as f64,
        }
    }
}

/// ((a_λK) * curl Z)(x) and (Z - φ_λ * Z)(x), by polar quadrature about x.
pub fn curl_identity_sides<Z, W>(kern: &CutoffKernel, z: Z, curl: W, x: Vec2) -> (Vec2, Vec2)
where
    Z: Fn(Vec2) -> Vec2,
    W: Fn(Vec2) -> f64,
{
    let l = kern.lambda;
    let c = &kern.cutoff;
    let mut breaks = vec![0.0, c.inner_radius * l];
    let nb = 8;
    for k in 1..=nb {
        breaks.push(l * (c.inner_radius + (c.outer_radius - c.inner_radius) * k as f64 / nb as f64));
    }
    let pr = PolarRule::new(&breaks, 24, 256);
    let mut lhs = Vec2::ZERO;
    let mut conv = Vec2::ZERO;
    for &(r, w) in &pr.radii {
        let a = c.profile(r / l);
        let phi_r = -c.d1(r / l) / (2.0 * PI * l * r);
        for &e in &pr.angles {
            let y = x - e * r;
            // K(r e) r = e⊥ / 2π
            if a > 0.0 {
                lhs += e.perp() * (a * curl(y) * w * pr.dtheta / (2.0 * PI));
            }
            if phi_r != 0.0 {
                conv += z(y) * (phi_r * r * w * pr.dtheta);
            }
        }
    }
    (lhs, z(x) - conv)
}

/// ‖φ_λ‖_{L¹}.
pub fn phi_l1_norm(kern: &CutoffKernel) -> f64 {
    let l = kern.lambda;
    let c = &kern.cutoff;
    // φ_λ(r) 2π r = -a'(r/λ)/λ
    gl_adaptive(
        &|r: f64| (-c.d1(r / l) / l).abs(),
        c.inner_radius * l,
        c.outer_radius * l,
        1e-14,
    )
}

/// A volume-preserving shear y -> y + δ (cos(y_2 / R_s), 0).
#[derive(Debug, Clone, Copy)]
pub struct UnitShear {
    pub delta: f64,
    pub scale: f64,
}

impl UnitShear {
    pub fn apply(&self, y: Vec2) -> Vec2 {
        Vec2::new(y.x + self.delta * (y.y / self.scale).cos(), y.y)
    }
}

/// ‖K(x - y) - K(x - S(y))‖_{L¹_y(B_R(x))} for the shear S.
pub fn flow_difference_l1(x: Vec2, radius: f64, shear: UnitShear) -> f64 {
    flow_difference_weighted(x, radius, shear, |z: Vec2| z.perp() * (1.0 / (2.0 * PI * z.norm_sq())), |_| 1.0)
}

/// ∫_{B_R(x)} |k(x - y) - k(x - S(y))| w(y) dy by polar quadrature about x.
pub fn flow_difference_weighted<KF, WF>(x: Vec2, radius: f64, shear: UnitShear, k: KF, w: WF) -> f64
where
    KF: Fn(Vec2) -> Vec2,
    WF: Fn(Vec2) -> f64,
{
    let d = shear.delta;
    let mut breaks = vec![0.0];
    // refine near the displaced singularity |x - S(y)| = 0, at distance <= δ
    let mut r = (d * 1e-3).max(radius * 1e-9);
    while r < radius {
        breaks.push(r);
        r *= 2.0;
    }
    breaks.push(radius);
    let pr = PolarRule::new(&breaks, 16, 512);
    let mut total = 0.0;
    for &(r, wt) in &pr.radii {
        for &e in &pr.angles {
            let y = x - e * r;
            let z1 = x - y;
            let z2 = x - shear.apply(y);
            if z1.norm_sq() == 0.0 || z2.norm_sq() == 0.0 {
                continue;
            }
            total += (k(z1) - k(z2)).norm() * w(y) * r * wt * pr.dtheta;
        }
    }
    total
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModulusFit {
    pub samples: Vec<(f64, f64, f64)>,
    /// max of value / bound over the samples
    pub fitted_c: f64,
}

/// Flow-difference kernel bound: value(δ) against R μ̄(δ/R) across a δ-sweep.
pub fn flow_difference_fit(x: Vec2, radius: f64, deltas: &[f64]) -> Result<ModulusFit> {
    let mut samples = Vec::new();
    let mut c: f64 = 0.0;
    for &d in deltas {
        let v = flow_difference_l1(x, radius, UnitShear { delta: d, scale: radius });
        let b = radius * mubar(d / radius)?;
        c = c.max(v / b);
        samples.push((d, v, b));
    }
    Ok(ModulusFit { samples, fitted_c: c })
}

/// Composite bound with the cutoff kernel and bounded ω⁰: value against λ μ̄(δ/λ)
/// across (δ, λ) pairs. `omega0` is bounded by 1 in absolute value.
pub fn cutoff_difference_fit<W>(x: Vec2, pairs: &[(f64, f64)], omega0: W) -> Result<ModulusFit>
where
    W: Fn(Vec2) -> f64 + Copy,
{
    let mut samples = Vec::new();
    let mut c: f64 = 0.0;
    for &(d, l) in pairs {
        let kern = CutoffKernel::new(l)?;
        let v = flow_difference_weighted(
            x,
            l + 2.0 * d,
            UnitShear { delta: d, scale: l },
            |z| kern.near_kernel(z),
            |y| omega0(y).abs(),
        );
        let b = l * mubar(d / l)?;
        c = c.max(v / b);
        samples.push((d, v, b));
    }
    Ok(ModulusFit { samples, fitted_c: c })
}
