//! Growth bounds h and the scalar functions built from them.

use std::f64::consts::E as EULER;
use std::fmt;
use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::{gl_adaptive, logspace, solve_monotone, tail_integral, Tail};

pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Tier {
    Unclassified,
    PreGrowth,
    Growth,
    WellPosedness,
    GlobalWellPosedness,
}

#[derive(Clone)]
pub enum Profile {
    Const(f64),
    /// (1 + r)^alpha
    Power(f64),
    /// log^{1/4}(e + r)
    QuarterLog,
    /// 1 + r
    Linear,
    Custom { f: ScalarFn, df: Option<ScalarFn> },
}

#[derive(Clone)]
pub struct GrowthBound {
    profile: Profile,
    pub label: String,
    pub tier: Tier,
    envelope: Arc<OnceLock<Result<MuEnvelope>>>,
}

impl fmt::Debug for GrowthBound {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GrowthBound")
            .field("label", &self.label)
            .field("tier", &self.tier)
            .finish()
    }
}

const FD_STEP: f64 = 1e-6;

impl GrowthBound {
    fn with(profile: Profile, label: impl Into<String>) -> Self {
        GrowthBound {
            profile,
            label: label.into(),
            tier: Tier::Unclassified,
            envelope: Arc::new(OnceLock::new()),
        }
    }

    pub fn constant(c: f64) -> Self {
        let label = if c == 1.0 { "const".to_string() } else { format!("const:{c}") };
        Self::with(Profile::Const(c), label)
    }

    /// h1(r) = (1 + r)^alpha.
    pub fn power(alpha: f64) -> Self {
        Self::with(Profile::Power(alpha), format!("power:{alpha}"))
    }

    /// h2(r) = log^{1/4}(e + r).
    pub fn quarter_log() -> Self {
        Self::with(Profile::QuarterLog, "quarterlog")
    }

    pub fn linear() -> Self {
        Self::with(Profile::Linear, "linear")
    }

    pub fn custom(label: impl Into<String>, f: ScalarFn, df: Option<ScalarFn>) -> Self {
        Self::with(Profile::Custom { f, df }, label)
    }

    /// Parse a built-in identifier: const, power:<alpha>, quarterlog, linear.
    pub fn parse(id: &str) -> Result<Self> {
        let id = id.trim();
        match id {
            "const" => Ok(Self::constant(1.0)),
            "quarterlog" => Ok(Self::quarter_log()),
            "linear" => Ok(Self::linear()),
            _ => {
                if let Some(a) = id.strip_prefix("power:") {
                    let alpha: f64 = a
                        .parse()
                        .map_err(|_| Error::BadArgument(format!("bad exponent in {id:?}")))?;
                    if !(alpha.is_finite() && alpha > 0.0 && alpha <= 1.0) {
                        return Err(Error::BadArgument(format!("exponent must be in (0, 1]: {id:?}")));
                    }
                    Ok(Self::power(alpha))
                } else if let Some(c) = id.strip_prefix("const:") {
                    let c: f64 = c
                        .parse()
                        .map_err(|_| Error::BadArgument(format!("bad constant in {id:?}")))?;
                    if !(c.is_finite() && c > 0.0) {
                        return Err(Error::BadArgument(format!("constant must be positive: {id:?}")));
                    }
                    Ok(Self::constant(c))
                } else {
                    Err(Error::BadArgument(format!("unknown growth bound {id:?}")))
                }
            }
        }
    }

    pub fn profile(&self) -> &Profile {
        &self.profile
    }

    pub fn is_constant(&self) -> bool {
        matches!(self.profile, Profile::Const(_))
    }

    #[inline]
    pub fn eval(&self, r: f64) -> f64 {
        match &self.profile {
            Profile::Const(c) => *c,
            Profile::Power(a) => (1.0 + r).powf(*a),
            Profile::QuarterLog => (EULER + r).ln().powf(0.25),
            Profile::Linear => 1.0 + r,
            Profile::Custom { f, .. } => f(r),
        }
    }

    pub fn deriv(&self, r: f64) -> f64 {
        match &self.profile {
            Profile::Const(_) => 0.0,
            Profile::Power(a) => a * (1.0 + r).powf(a - 1.0),
            Profile::QuarterLog => 0.25 * (EULER + r).ln().powf(-0.75) / (EULER + r),
            Profile::Linear => 1.0,
            Profile::Custom { f, df } => match df {
                Some(d) => d(r),
                None => (f(r + FD_STEP) - f(r)) / FD_STEP,
            },
        }
    }

    /// Pointwise product, e.g. zeta * h.
    pub fn product(&self, other: &GrowthBound) -> GrowthBound {
        let (a, b) = (self.clone(), other.clone());
        let (a2, b2) = (self.clone(), other.clone());
        GrowthBound::custom(
            format!("({})*({})", self.label, other.label),
            Arc::new(move |r| a.eval(r) * b.eval(r)),
            Some(Arc::new(move |r| a2.deriv(r) * b2.eval(r) + a2.eval(r) * b2.deriv(r))),
        )
    }

    /// Pointwise quotient, e.g. zeta / h.
    pub fn quotient(&self, other: &GrowthBound) -> GrowthBound {
        let (a, b) = (self.clone(), other.clone());
        let (a2, b2) = (self.clone(), other.clone());
        GrowthBound::custom(
            format!("({})/({})", self.label, other.label),
            Arc::new(move |r| a.eval(r) / b.eval(r)),
            Some(Arc::new(move |r| {
                let bv = b2.eval(r);
                (a2.deriv(r) * bv - a2.eval(r) * b2.deriv(r)) / (bv * bv)
            })),
        )
    }

    /// Copy with the tier set by `validate_tier`.
    pub fn classified(&self, samples: usize, rmax: f64) -> Result<GrowthBound> {
        let report = validate_tier(self, samples, rmax)?;
        let mut out = self.clone();
        out.tier = report.tier;
        Ok(out)
    }

    /// The calibrated envelope for mu, computed once.
    pub fn envelope(&self) -> Result<MuEnvelope> {
        self.envelope.get_or_init(|| MuEnvelope::calibrate(self)).clone()
    }

    /// C(h) = 2 (h'(0) + h(h(0)) / h(0)).
    pub fn scaling_constant(&self) -> f64 {
        let h0 = self.eval(0.0);
        2.0 * (self.deriv(0.0) + self.eval(h0) / h0)
    }

    /// c0 = h'(0)/h(0), the bound |g'| <= c0 g for g = 1/h.
    pub fn reciprocal_log_lipschitz(&self) -> f64 {
        self.deriv(0.0) / self.eval(0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub predicate: String,
    pub witness: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TierReport {
    pub label: String,
    pub tier: Tier,
    pub diagnostics: Vec<Diagnostic>,
    pub grid: Vec<f64>,
    pub envelope: Option<MuEnvelope>,
}

fn sample_grid(samples: usize, rmax: f64) -> Vec<f64> {
    let half = samples / 2;
    let mut g: Vec<f64> = (0..=half).map(|i| rmax * i as f64 / half as f64).collect();
    g.extend(logspace(1e-3, rmax, samples - half));
    g.sort_by(|a, b| a.partial_cmp(b).unwrap());
    g.dedup();
    g
}

/// Highest tier whose conditions pass on a sampled grid.
pub fn validate_tier(h: &GrowthBound, samples: usize, rmax: f64) -> Result<TierReport> {
    if !(rmax > 1.0) {
        return Err(Error::BadArgument(format!("rmax must exceed 1, got {rmax}")));
    }
    if samples < 16 {
        return Err(Error::BadArgument(format!("need at least 16 samples, got {samples}")));
    }
    let grid = sample_grid(samples, rmax);
    let vals: Vec<f64> = grid.iter().map(|&r| h.eval(r)).collect();
    if let Some(i) = vals.iter().position(|v| !v.is_finite()) {
        return Err(Error::InvalidFunction(format!(
            "{} is not finite at r = {}",
            h.label, grid[i]
        )));
    }
    let mut diags = Vec::new();
    let tol = |v: f64| 1e-12 * v.abs().max(1.0);
    let mut push = |p: &str, w: String| diags.push(Diagnostic { predicate: p.into(), witness: w });

    if let Some(i) = vals.iter().position(|&v| v <= 0.0) {
        push("positive", format!("h({}) = {}", grid[i], vals[i]));
    }
    if let Some(i) = (0..vals.len() - 1).find(|&i| vals[i + 1] < vals[i] - tol(vals[i])) {
        push(
            "nondecreasing",
            format!("h({}) = {} > h({}) = {}", grid[i], vals[i], grid[i + 1], vals[i + 1]),
        );
    }
    'concave: for step in [1usize, 2, 4] {
        for i in 0..grid.len().saturating_sub(step) {
            let (a, b) = (grid[i], grid[i + step]);
            let mid = h.eval(0.5 * (a + b));
            let mean = 0.5 * (vals[i] + vals[i + step]);
            if mid < mean - tol(mean) {
                push("concave", format!("h(({a} + {b})/2) = {mid} < {mean}"));
                break 'concave;
            }
        }
    }
    let stride = (grid.len() / 48).max(1);
    let sub: Vec<f64> = grid.iter().step_by(stride).cloned().collect();
    'sub: for &r in &sub {
        for &s in &sub {
            let lhs = h.eval(r + s);
            let rhs = h.eval(r) + h.eval(s);
            if lhs > rhs + tol(rhs) {
                push("subadditive", format!("h({r} + {s}) = {lhs} > {rhs}"));
                break 'sub;
            }
        }
    }
    let d0 = h.deriv(0.0);
    if !d0.is_finite() {
        push("deriv(0) finite", format!("h'(0) = {d0}"));
    }

    let mut report = TierReport {
        label: h.label.clone(),
        tier: Tier::Unclassified,
        diagnostics: Vec::new(),
        grid,
        envelope: None,
    };
    if !diags.is_empty() {
        report.diagnostics = diags;
        return Ok(report);
    }
    report.tier = Tier::PreGrowth;

    for (power, next) in [(1, Tier::Growth), (2, Tier::WellPosedness)] {
        match tail_integral(&|s: f64| h.eval(s).powi(power) / (s * s), 1.0, 1e-8) {
            Tail::Convergent { .. } => report.tier = next,
            Tail::Divergent { witness, ratio } => {
                diags.push(Diagnostic {
                    predicate: format!("int_1^inf h^{power}/s^2 < inf"),
                    witness: format!("block ratio {ratio:.6} at R = {witness:e}"),
                });
                report.diagnostics = diags;
                return Ok(report);
            }
        }
    }

    match h.envelope() {
        Ok(env) => {
            if env.osgood_at_infinity() {
                report.tier = Tier::GlobalWellPosedness;
            } else {
                diags.push(Diagnostic {
                    predicate: "int_1^inf dr/mu = inf".into(),
                    witness: format!("{:?} envelope has a convergent tail", env.shape),
                });
            }
            report.envelope = Some(env);
        }
        Err(e) => diags.push(Diagnostic {
            predicate: "E <= mu".into(),
            witness: e.to_string(),
        }),
    }
    report.diagnostics = diags;
    Ok(report)
}

/// H[h^power](r) = ∫_r^∞ h(s)^power / s² ds.
pub fn compute_h(h: &GrowthBound, r: f64, power: i32) -> Result<f64> {
    if !(r > 0.0 && r.is_finite()) {
        return Err(Error::BadArgument(format!("H needs r > 0, got {r}")));
    }
    if !(power == 1 || power == 2) {
        return Err(Error::BadArgument(format!("power must be 1 or 2, got {power}")));
    }
    match tail_integral(&|s: f64| h.eval(s).powi(power) / (s * s), r, 1e-11) {
        Tail::Convergent { value, .. } => Ok(value),
        Tail::Divergent { witness, .. } => Err(Error::DivergentIntegral { witness }),
    }
}

/// E(r) = (1 + r^{1/2} H[h²](r^{1/2}))² r.
pub fn compute_e(h: &GrowthBound, r: f64) -> Result<f64> {
    if r < 0.0 || !r.is_finite() {
        return Err(Error::BadArgument(format!("E needs r >= 0, got {r}")));
    }
    if r == 0.0 {
        return Ok(0.0);
    }
    let q = r.sqrt();
    let f = 1.0 + q * compute_h(h, q, 2)?;
    Ok(f * f * r)
}

pub fn compute_e_and_mu(h: &GrowthBound, r: f64) -> Result<(f64, f64)> {
    let e = compute_e(h, r)?;
    let env = h.envelope()?;
    Ok((e, env.eval(r)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EnvelopeShape {
    /// C r
    Linear,
    /// C (1 + log(e + r)) r
    LogLinear,
    /// C r (1 + r)
    Quadratic,
}

impl EnvelopeShape {
    pub fn base(self, r: f64) -> f64 {
        match self {
            EnvelopeShape::Linear => r,
            EnvelopeShape::LogLinear => (1.0 + (EULER + r).ln()) * r,
            EnvelopeShape::Quadratic => r * (1.0 + r),
        }
    }
}

/// Convex envelope mu = C * shape with E <= mu on the calibration grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MuEnvelope {
    pub shape: EnvelopeShape,
    pub c: f64,
}

const CALIB_LO: f64 = 1e-6;
const CALIB_HI: f64 = 1e6;
const CALIB_N: usize = 200;

impl MuEnvelope {
    pub fn eval(&self, r: f64) -> f64 {
        self.c * self.shape.base(r)
    }

    /// Tightest shape (Linear, then LogLinear, then Quadratic) whose ratio E/shape has
    /// stopped increasing over the last sampled decade; C = 1.05 * max ratio.
    pub fn calibrate(h: &GrowthBound) -> Result<MuEnvelope> {
        let grid = logspace(CALIB_LO, CALIB_HI, CALIB_N);
        let es: Vec<f64> = grid.iter().map(|&r| compute_e(h, r)).collect::<Result<_>>()?;
        let offset: Vec<f64> = grid.windows(2).map(|w| (w[0] * w[1]).sqrt()).collect();
        let es_off: Vec<f64> = offset.iter().map(|&r| compute_e(h, r)).collect::<Result<_>>()?;
        let last_decade = grid.iter().position(|&r| r >= CALIB_HI / 10.0).unwrap();
        let mut last_err = None;
        for shape in [EnvelopeShape::Linear, EnvelopeShape::LogLinear, EnvelopeShape::Quadratic] {
            let ratios: Vec<f64> = grid.iter().zip(&es).map(|(&r, &e)| e / shape.base(r)).collect();
            let settled = (last_decade..ratios.len() - 1).all(|i| ratios[i + 1] <= ratios[i] * (1.0 + 1e-3));
            if !settled && shape != EnvelopeShape::Quadratic {
                continue;
            }
            let c = 1.05 * ratios.iter().cloned().fold(0.0, f64::max);
            let env = MuEnvelope { shape, c };
            match offset.iter().zip(&es_off).find(|(&r, &e)| e > env.eval(r)) {
                None => return Ok(env),
                Some((&r, &e)) => {
                    last_err = Some(Error::EnvelopeFailure { r, e, mu: env.eval(r) })
                }
            }
        }
        Err(last_err.unwrap_or(Error::EnvelopeFailure {
            r: CALIB_HI,
            e: *es.last().unwrap(),
            mu: f64::NAN,
        }))
    }

    /// Whether ∫_1^∞ dr/mu(r) diverges, by the same tail classifier used for H.
    pub fn osgood_at_infinity(&self) -> bool {
        matches!(
            tail_integral(&|r: f64| 1.0 / self.eval(r), 1.0, 1e-8),
            Tail::Divergent { .. }
        )
    }
}

/// ∫_a^b dr/h(r).
fn inverse_integral(h: &GrowthBound, a: f64, b: f64) -> f64 {
    gl_adaptive(&|r: f64| 1.0 / h.eval(r), a, b, 1e-13)
}

/// Γ with ∫_a^Γ dr/h(r) = C t.
pub fn gamma_t(h: &GrowthBound, c: f64, t: f64, a: f64) -> Result<f64> {
    if !(t >= 0.0 && a >= 0.0 && c > 0.0) || !(t.is_finite() && a.is_finite() && c.is_finite()) {
        return Err(Error::BadArgument(format!("gamma_t needs t >= 0, a >= 0, C > 0 (t={t}, a={a}, C={c})")));
    }
    let target = c * t;
    if target == 0.0 {
        return Ok(a);
    }
    let step = h.eval(a) * target;
    let mut k = 0;
    let mut hi = a + step;
    while inverse_integral(h, a, hi) < target {
        k += 1;
        hi = a + step * 2f64.powi(k);
        if !hi.is_finite() || k > 1000 {
            return Err(Error::BadArgument("gamma_t bracket overflow".into()));
        }
    }
    let lo = if k == 0 { a } else { a + step * 2f64.powi(k - 1) };
    let base = inverse_integral(h, a, lo);
    Ok(solve_monotone(
        |x| base + inverse_integral(h, lo, x),
        |x| 1.0 / h.eval(x),
        target,
        lo,
        hi,
        1e-13,
    ))
}

/// F_t(r) = h(Γ_t(r)).
pub fn f_t(h: &GrowthBound, c: f64, t: f64, r: f64) -> Result<f64> {
    Ok(h.eval(gamma_t(h, c, t, r)?))
}

/// -r log r on [0, 1/e], then 1/e.
pub fn mubar(r: f64) -> Result<f64> {
    if !(r >= 0.0) {
        return Err(Error::BadArgument(format!("mubar needs r >= 0, got {r}")));
    }
    Ok(if r == 0.0 {
        0.0
    } else if r <= (-1f64).exp() {
        -r * r.ln()
    } else {
        (-1f64).exp()
    })
}

/// r^{exp(-C0 t)} on [0, 1], r above.
pub fn chi_t(c0: f64, t: f64, r: f64) -> Result<f64> {
    if !(r >= 0.0 && t >= 0.0 && c0 >= 0.0) {
        return Err(Error::BadArgument(format!("chi_t needs r, t, C0 >= 0 (r={r}, t={t}, C0={c0})")));
    }
    Ok(if r <= 1.0 { r.powf((-c0 * t).exp()) } else { r })
}

/// x + x^{e^{-C0 t} / (alpha + e^{-C0 t})}.
pub fn phi_alpha(c0: f64, t: f64, alpha: f64, x: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::BadArgument(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    if !(x >= 0.0 && t >= 0.0 && c0 >= 0.0) {
        return Err(Error::BadArgument(format!("phi_alpha needs x, t, C0 >= 0 (x={x}, t={t}, C0={c0})")));
    }
    let e = (-c0 * t).exp();
    Ok(x + x.powf(e / (alpha + e)))
}

/// The scalar functions derived from one bound, with the Γ_t rate C and the
/// sup-in-time norm C0 fixed.
#[derive(Debug, Clone)]
pub struct DerivedScalars {
    pub h: GrowthBound,
    pub c: f64,
    pub c0: f64,
}

impl DerivedScalars {
    pub fn h_integral(&self, r: f64, power: i32) -> Result<f64> {
        compute_h(&self.h, r, power)
    }
    pub fn e(&self, r: f64) -> Result<f64> {
        compute_e(&self.h, r)
    }
    pub fn mu(&self, r: f64) -> Result<f64> {
        Ok(self.h.envelope()?.eval(r))
    }
    pub fn gamma_t(&self, t: f64, a: f64) -> Result<f64> {
        gamma_t(&self.h, self.c, t, a)
    }
    pub fn f_t(&self, t: f64, r: f64) -> Result<f64> {
        f_t(&self.h, self.c, t, r)
    }
    pub fn mubar(&self, r: f64) -> Result<f64> {
        mubar(r)
    }
    pub fn chi_t(&self, t: f64, r: f64) -> Result<f64> {
        chi_t(self.c0, t, r)
    }
    pub fn phi_alpha(&self, t: f64, alpha: f64, x: f64) -> Result<f64> {
        phi_alpha(self.c0, t, alpha, x)
    }
}

/// Bound on Λ from ∫_{Λ0}^{Λ(t)} ds / mu(T s) <= t / T with T replaced by max(T, 1).
#[derive(Clone)]
pub struct OsgoodBound {
    mu: ScalarFn,
    pub lambda0: f64,
    pub t_scale: f64,
    pub t_max: f64,
}

impl fmt::Debug for OsgoodBound {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("OsgoodBound")
            .field("lambda0", &self.lambda0)
            .field("t_scale", &self.t_scale)
            .field("t_max", &self.t_max)
            .finish()
    }
}

impl OsgoodBound {
    pub fn new(mu: ScalarFn, lambda0: f64, t: f64) -> Result<OsgoodBound> {
        if !(lambda0 >= 0.0 && lambda0.is_finite()) {
            return Err(Error::BadArgument(format!("Lambda0 must be >= 0, got {lambda0}")));
        }
        if !(t > 0.0) {
            return Err(Error::BadArgument(format!("T must be positive, got {t}")));
        }
        let t_scale = t.max(1.0);
        let t_max = if lambda0 == 0.0 {
            f64::INFINITY
        } else {
            let m = mu.clone();
            match tail_integral(&move |s: f64| 1.0 / m(t_scale * s), lambda0, 1e-10) {
                Tail::Convergent { value, .. } => t_scale * value,
                Tail::Divergent { .. } => f64::INFINITY,
            }
        };
        Ok(OsgoodBound { mu, lambda0, t_scale, t_max })
    }

    pub fn global(&self) -> bool {
        self.t_max.is_infinite()
    }

    /// ∫_{Λ0}^{x} ds / mu(T s), integrated in log s.
    fn antiderivative(&self, x: f64) -> f64 {
        let (a, b) = (self.lambda0.ln(), x.ln());
        gl_adaptive(
            &|l: f64| {
                let s = l.exp();
                s / (self.mu)(self.t_scale * s)
            },
            a,
            b,
            1e-13,
        )
    }

    /// Λ(t); infinite at or beyond t_max.
    pub fn lambda_bound(&self, t: f64) -> f64 {
        if self.lambda0 == 0.0 {
            return 0.0;
        }
        if t <= 0.0 {
            return self.lambda0;
        }
        if t >= self.t_max {
            return f64::INFINITY;
        }
        let target = t / self.t_scale;
        let mut lo = self.lambda0;
        let mut hi = 2.0 * lo;
        while self.antiderivative(hi) < target {
            lo = hi;
            hi *= 2.0;
            if !hi.is_finite() {
                return f64::INFINITY;
            }
        }
        solve_monotone(
            |x| self.antiderivative(x),
            |x| 1.0 / (self.mu)(self.t_scale * x),
            target,
            lo,
            hi,
            1e-12,
        )
    }
}

/// Existence-time bound for Λ(t) <= Λ0 + C mu(∫Λ) with the calibrated envelope of h.
pub fn existence_time_estimate(h: &GrowthBound, lambda0: f64, c: f64, t: f64) -> Result<OsgoodBound> {
    if h.tier < Tier::WellPosedness {
        return Err(Error::TierRequired {
            have: h.tier,
            need: Tier::WellPosedness,
        });
    }
    if !(c > 0.0) {
        return Err(Error::BadArgument(format!("C must be positive, got {c}")));
    }
    let env = h.envelope()?;
    let mut bound = OsgoodBound::new(Arc::new(move |s| c * env.eval(s)), lambda0, t)?;
    if lambda0 > 0.0 && env.osgood_at_infinity() {
        bound.t_max = f64::INFINITY;
    }
    Ok(bound)
}
