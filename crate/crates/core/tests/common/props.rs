//! Randomized property suites over the growth-bound scalars. Shared between
//! `properties` and `acceptance`.

#![allow(dead_code)]

use std::f64::consts::E;

use growth_euler::growth_bounds::{chi_t, f_t, gamma_t, mubar, phi_alpha};
use growth_euler::{GrowthBound, Vec2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct Suite {
    pub name: &'static str,
    pub cases: usize,
    pub failures: Vec<String>,
}

impl Suite {
    fn new(name: &'static str) -> Self {
        Suite { name, cases: 0, failures: Vec::new() }
    }

    fn check(&mut self, ok: bool, what: impl FnOnce() -> String) {
        self.cases += 1;
        if !ok && self.failures.len() < 20 {
            self.failures.push(what());
        } else if !ok {
            self.failures.push(String::new());
        }
    }

    pub fn passed(&self) -> bool {
        self.failures.is_empty() && self.cases > 0
    }

    pub fn summary(&self) -> String {
        format!("{}: {} cases, {} failures", self.name, self.cases, self.failures.len())
    }
}

/// Every shipped profile, each a pre-growth bound.
pub fn builtins() -> Vec<GrowthBound> {
    vec![
        GrowthBound::constant(1.0),
        GrowthBound::constant(2.5),
        GrowthBound::power(0.25),
        GrowthBound::power(0.5),
        GrowthBound::power(0.75),
        GrowthBound::quarter_log(),
        GrowthBound::linear(),
    ]
}

/// The subset whose square is still concave.
pub fn squares_concave() -> Vec<GrowthBound> {
    vec![
        GrowthBound::constant(1.0),
        GrowthBound::power(0.25),
        GrowthBound::power(0.5),
        GrowthBound::quarter_log(),
    ]
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Half log-uniform over [1e-6, 1e6], half uniform over [0, 10].
fn radius(rng: &mut ChaCha8Rng) -> f64 {
    if rng.gen_bool(0.5) {
        10f64.powf(rng.gen_range(-6.0..6.0))
    } else {
        rng.gen_range(0.0..10.0)
    }
}

fn le(a: f64, b: f64, rel: f64) -> bool {
    a <= b + rel * b.abs().max(a.abs()) + 1e-300
}

pub const ULP_SLACK: f64 = 4.0 * f64::EPSILON;

pub fn subadditivity(n: usize) -> Suite {
    let mut s = Suite::new("subadditivity and linear majorant");
    let mut g = rng(1);
    for h in builtins() {
        let (c, d) = (h.deriv(0.0), h.eval(0.0));
        for _ in 0..n {
            let (r, t) = (radius(&mut g), radius(&mut g));
            let lhs = h.eval(r + t);
            let rhs = h.eval(r) + h.eval(t);
            s.check(le(lhs, rhs, ULP_SLACK), || format!("{}: h({r}+{t})={lhs} > {rhs}", h.label));
            let lin = c * r + d;
            s.check(le(h.eval(r), lin, ULP_SLACK), || format!("{}: h({r}) > {lin}", h.label));
        }
    }
    for h in squares_concave() {
        let sq = |r: f64| h.eval(r).powi(2);
        for _ in 0..n {
            let (r, t) = (radius(&mut g), radius(&mut g));
            s.check(le(sq(r + t), sq(r) + sq(t), ULP_SLACK), || format!("{}: h^2 not subadditive at ({r}, {t})", h.label));
        }
        // the plane version: |h(y) - h(x)| <= h(x - y)
        for _ in 0..n {
            let x = Vec2::new(rng_coord(&mut g), rng_coord(&mut g));
            let y = Vec2::new(rng_coord(&mut g), rng_coord(&mut g));
            let lhs = (h.eval(y.norm()) - h.eval(x.norm())).abs();
            let rhs = h.eval((x - y).norm());
            s.check(le(lhs, rhs, ULP_SLACK), || format!("{}: |h(y)-h(x)| > h(x-y) at {x:?}, {y:?}", h.label));
        }
    }
    s
}

fn rng_coord(g: &mut ChaCha8Rng) -> f64 {
    let r = radius(g);
    if g.gen_bool(0.5) {
        r
    } else {
        -r
    }
}

pub fn scaling(n: usize) -> Suite {
    let mut s = Suite::new("h(ar) <= 2a h(r) and h(a h(r)) <= C(h) a h(r)");
    let mut g = rng(2);
    for h in builtins() {
        let ch = 2.0 * (h.deriv(0.0) + h.eval(h.eval(0.0)) / h.eval(0.0));
        assert!((ch - h.scaling_constant()).abs() <= 1e-14 * ch);
        for _ in 0..n {
            let a = 10f64.powf(g.gen_range(0.0..4.0));
            let r = radius(&mut g);
            let hr = h.eval(r);
            let l1 = h.eval(a * r);
            s.check(le(l1, 2.0 * a * hr, ULP_SLACK), || format!("{}: h({a}*{r})={l1} > 2a h(r)", h.label));
            let l2 = h.eval(a * hr);
            s.check(le(l2, ch * a * hr, ULP_SLACK), || format!("{}: h(a h(r))={l2} > {}", h.label, ch * a * hr));
            let l3 = h.eval(hr) / hr;
            s.check(le(l3, ch, ULP_SLACK), || format!("{}: h(h(r))/h(r)={l3} > {ch}", h.label));
        }
    }
    s
}

pub fn mubar_scaling(n: usize) -> Suite {
    let mut s = Suite::new("a mubar(r) <= mubar(ar)");
    let mut g = rng(3);
    for _ in 0..n {
        let a: f64 = g.gen_range(0.0..=1.0);
        let r = if g.gen_bool(0.5) { g.gen_range(0.0..1.0) } else { radius(&mut g) };
        let lhs = a * mubar(r).unwrap();
        let rhs = mubar(a * r).unwrap();
        s.check(le(lhs, rhs, ULP_SLACK), || format!("a={a}, r={r}: {lhs} > {rhs}"));
    }
    s
}

pub fn reciprocal_derivative(n: usize) -> Suite {
    let mut s = Suite::new("|g'| <= c0 g and |g'| decreasing, g = 1/h");
    let mut g = rng(4);
    for h in builtins() {
        let c0 = h.deriv(0.0) / h.eval(0.0);
        assert_eq!(c0, h.reciprocal_log_lipschitz());
        let gp = |r: f64| h.deriv(r) / h.eval(r).powi(2);
        for _ in 0..n {
            let r = radius(&mut g);
            let lhs = gp(r);
            let rhs = c0 / h.eval(r);
            s.check(le(lhs, rhs, ULP_SLACK), || format!("{}: |g'({r})|={lhs} > {rhs}", h.label));
            let r2 = r + radius(&mut g);
            s.check(le(gp(r2), lhs, ULP_SLACK), || format!("{}: |g'| grows from {r} to {r2}", h.label));
            // the stored derivative against a central difference
            let step = 1e-5 * (1.0 + r);
            let fd = (h.eval(r + step) - h.eval((r - step).max(0.0))) / (r + step - (r - step).max(0.0));
            let ok = (fd - h.deriv(r)).abs() <= 1e-6 * (1.0 + h.deriv(r).abs()) + 1e-8;
            s.check(ok, || format!("{}: deriv({r})={} vs difference {fd}", h.label, h.deriv(r)));
        }
    }
    s
}

pub fn gamma_semigroup(n: usize) -> Suite {
    let mut s = Suite::new("Gamma_{t+s} = Gamma_t o Gamma_s");
    let mut g = rng(5);
    let hs = builtins();
    for _ in 0..n {
        let h = &hs[g.gen_range(0..hs.len())];
        let c = g.gen_range(0.1..3.0);
        let t1 = g.gen_range(0.0..2.0);
        let t2 = g.gen_range(0.0..2.0);
        let a = if g.gen_bool(0.2) { 0.0 } else { 10f64.powf(g.gen_range(-3.0..3.0)) };
        let direct = gamma_t(h, c, t1 + t2, a).unwrap();
        let composed = gamma_t(h, c, t1, gamma_t(h, c, t2, a).unwrap()).unwrap();
        let ok = (direct - composed).abs() <= 1e-8 * direct.abs().max(1e-300);
        s.check(ok, || format!("{}: C={c} t={t1}+{t2} a={a}: {direct} vs {composed}", h.label));
        s.check(direct >= a, || format!("{}: Gamma below a", h.label));
    }
    s
}

pub fn f_t_sandwich(n: usize) -> Suite {
    let mut s = Suite::new("h <= F_t, F_t monotone in t and r");
    let mut g = rng(6);
    let hs = builtins();
    for _ in 0..n {
        let h = &hs[g.gen_range(0..hs.len())];
        let c = g.gen_range(0.1..2.0);
        let t = g.gen_range(0.0..2.0);
        let dt = g.gen_range(0.0..1.0);
        let r = 10f64.powf(g.gen_range(-3.0..3.0));
        let dr = 10f64.powf(g.gen_range(-3.0..2.0));
        let f = f_t(h, c, t, r).unwrap();
        s.check(le(h.eval(r), f, 1e-12), || format!("{}: F_t({r}) below h", h.label));
        let ft = f_t(h, c, t + dt, r).unwrap();
        s.check(le(f, ft, 1e-12), || format!("{}: F_t not increasing in t at r={r}", h.label));
        let fr = f_t(h, c, t, r + dr).unwrap();
        s.check(le(f, fr, 1e-12), || format!("{}: F_t not increasing in r at r={r}", h.label));
    }
    s
}

/// mubar, chi_t and phi_alpha against the printed piecewise formulas, written
/// out again here with exp/ln instead of powf.
pub fn piecewise(n: usize) -> Suite {
    let mut s = Suite::new("piecewise definitions of mubar, chi_t, phi_alpha");
    let mut g = rng(7);
    let knee = (-1f64).exp();
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-13 * b.abs().max(1e-300);
    for probe in [knee, 0.5, 1.0, 0.0] {
        let want = if probe >= knee { knee } else { 0.0 };
        let got = mubar(probe).unwrap();
        s.check(close(got, want), || format!("mubar({probe})={got}"));
    }
    for _ in 0..n {
        let r = if g.gen_bool(0.5) { g.gen_range(0.0..1.0) } else { radius(&mut g) };
        let want = if r > 0.0 && r <= knee { -r * r.ln() } else if r == 0.0 { 0.0 } else { E.recip() };
        let got = mubar(r).unwrap();
        s.check(close(got, want), || format!("mubar({r})={got}, want {want}"));

        let c0: f64 = g.gen_range(0.0..3.0);
        let t = g.gen_range(0.0..3.0);
        let ex = (-c0 * t).exp();
        let want = if r <= 1.0 {
            if r == 0.0 { 0.0 } else { (ex * r.ln()).exp() }
        } else {
            r
        };
        let got = chi_t(c0, t, r).unwrap();
        s.check(close(got, want), || format!("chi_t({c0},{t},{r})={got}, want {want}"));
        s.check(le(got, r + r.powf(ex), ULP_SLACK), || format!("chi_t({r}) above r + r^e"));

        let alpha = g.gen_range(0.01..0.99);
        let x = if g.gen_bool(0.5) { g.gen_range(0.0..1.0) } else { radius(&mut g) };
        let p = ex / (alpha + ex);
        let want = x + if x == 0.0 { 0.0 } else { (p * x.ln()).exp() };
        let got = phi_alpha(c0, t, alpha, x).unwrap();
        s.check(close(got, want), || format!("phi_alpha({c0},{t},{alpha},{x})={got}, want {want}"));
    }
    s
}

pub fn chi_scaling(n: usize) -> Suite {
    let mut s = Suite::new("chi_t(ar) <= a^{exp(-C0 t)} chi_t(r)");
    let mut g = rng(8);
    for _ in 0..n {
        let a: f64 = g.gen_range(0.0..=1.0);
        let r = if g.gen_bool(0.5) { g.gen_range(1e-9..2.0) } else { radius(&mut g).max(1e-12) };
        let c0: f64 = g.gen_range(0.0..4.0);
        let t = g.gen_range(0.0..4.0);
        let lhs = chi_t(c0, t, a * r).unwrap();
        let rhs = a.powf((-c0 * t).exp()) * chi_t(c0, t, r).unwrap();
        s.check(le(lhs, rhs, ULP_SLACK), || format!("a={a} r={r} C0={c0} t={t}: {lhs} > {rhs}"));
    }
    s
}

pub fn all(n: usize) -> Vec<Suite> {
    vec![
        subadditivity(n),
        scaling(n),
        mubar_scaling(n),
        reciprocal_derivative(n),
        gamma_semigroup(n.min(2000)),
        f_t_sandwich(n.min(1000)),
        piecewise(n),
        chi_scaling(n.max(10_000)),
    ]
}
