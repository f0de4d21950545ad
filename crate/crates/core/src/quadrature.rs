//! One-dimensional quadrature, improper tails and root finding.

use std::sync::OnceLock;

/// Adaptive Simpson with Richardson correction. `tol` is absolute.
pub fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    let mut budget = 20000usize;
    simpson_rec(f, a, b, fa, fm, fb, whole, tol, 48, &mut budget)
}

#[allow(clippy::too_many_arguments)]
fn simpson_rec<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
    budget: &mut usize,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || *budget == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    *budget -= 1;
    simpson_rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1, budget)
        + simpson_rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1, budget)
}

/// Gauss-Legendre nodes and weights on [-1, 1] by Newton iteration on P_n.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, z);
            dp = d;
            let dz = p / d;
            z -= dz;
            if dz.abs() < 1e-15 {
                break;
            }
        }
        let (_, d) = legendre(n, z);
        if d != 0.0 {
            dp = d;
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

fn legendre(n: usize, z: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = z;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * z * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let nf = n as f64;
    (p1, nf * (z * p1 - p0) / (z * z - 1.0))
}

/// Cached 20-point rule.
pub fn gl20() -> &'static (Vec<f64>, Vec<f64>) {
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    RULE.get_or_init(|| gauss_legendre(20))
}

/// Fixed rule applied on [a, b].
pub fn gl_panel<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, rule: &(Vec<f64>, Vec<f64>)) -> f64 {
    let c = 0.5 * (a + b);
    let r = 0.5 * (b - a);
    rule.0
        .iter()
        .zip(&rule.1)
        .map(|(&x, &w)| w * f(c + r * x))
        .sum::<f64>()
        * r
}

/// Adaptive bisection on 20-point Gauss-Legendre panels, with a cap on the number of
/// panels so that noisy integrands cannot refine forever.
pub fn gl_adaptive<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, rel_tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    let rule = gl20();
    let whole = gl_panel(f, a, b, rule);
    let mut budget = 4000usize;
    gl_rec(f, a, b, whole, rel_tol, whole.abs().max(1e-300), 40, rule, &mut budget)
}

#[allow(clippy::too_many_arguments)]
fn gl_rec<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    whole: f64,
    rel_tol: f64,
    scale: f64,
    depth: u32,
    rule: &(Vec<f64>, Vec<f64>),
    budget: &mut usize,
) -> f64 {
    let m = 0.5 * (a + b);
    let l = gl_panel(f, a, m, rule);
    let r = gl_panel(f, m, b, rule);
    if depth == 0 || *budget == 0 || (l + r - whole).abs() <= rel_tol * scale.max((l + r).abs()) {
        return l + r;
    }
    *budget -= 1;
    gl_rec(f, a, m, l, rel_tol, scale, depth - 1, rule, budget)
        + gl_rec(f, m, b, r, rel_tol, scale, depth - 1, rule, budget)
}

/// Outcome of a dyadic tail classification of ∫_r^∞ f.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Tail {
    Convergent { value: f64, tail: f64, ratio: f64 },
    /// Block integrals over [R, 2R] stopped decaying geometrically; `witness` is the last R.
    Divergent { witness: f64, ratio: f64 },
}

pub const TAIL_HORIZON: f64 = 1e12;

/// ∫_a^b f(s) ds evaluated in w = 1/s.
pub fn block_integral<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, rel_tol: f64) -> f64 {
    let g = |w: f64| {
        let s = 1.0 / w;
        f(s) * s * s
    };
    let lo = 1.0 / b;
    let hi = 1.0 / a;
    let coarse = gl_panel(&g, lo, hi, gl20());
    simpson(&g, lo, hi, rel_tol * coarse.abs().max(1e-300))
}

/// Classify and evaluate ∫_r^∞ f(s) ds for nonnegative f, r > 0.
///
/// Blocks [r 2^k, r 2^{k+1}] are summed out to `TAIL_HORIZON` (and at least 24 blocks).
/// Convergence needs the final block ratio q < 1 and the ratios over the last 8 blocks
/// to drift by at most 0.05 (1 - q); the remainder is extrapolated geometrically.
pub fn tail_integral<F: Fn(f64) -> f64>(f: &F, r: f64, rel_tol: f64) -> Tail {
    let nblocks = ((TAIL_HORIZON / r).log2().ceil() as usize).max(24);
    let mut sum = 0.0;
    let mut blocks = Vec::with_capacity(nblocks);
    let mut lo = r;
    for _ in 0..nblocks {
        let hi = 2.0 * lo;
        let v = block_integral(f, lo, hi, rel_tol);
        sum += v;
        blocks.push(v);
        lo = hi;
    }
    let n = blocks.len();
    let ratios: Vec<f64> = (n - 9..n - 1)
        .map(|k| {
            if blocks[k] > 0.0 {
                blocks[k + 1] / blocks[k]
            } else {
                0.0
            }
        })
        .collect();
    let q = *ratios.last().unwrap();
    if !sum.is_finite() || !q.is_finite() {
        return Tail::Divergent {
            witness: lo,
            ratio: f64::INFINITY,
        };
    }
    let drift = ratios.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        - ratios.iter().cloned().fold(f64::INFINITY, f64::min);
    if blocks[n - 1] == 0.0 {
        return Tail::Convergent {
            value: sum,
            tail: 0.0,
            ratio: 0.0,
        };
    }
    if q < 1.0 && drift <= 0.05 * (1.0 - q) {
        let tail = blocks[n - 1] * q / (1.0 - q);
        Tail::Convergent {
            value: sum + tail,
            tail,
            ratio: q,
        }
    } else {
        Tail::Divergent {
            witness: lo,
            ratio: q,
        }
    }
}

/// Solve f(x) = target for nondecreasing f with derivative df, starting from a bracket
/// lo <= root <= hi. Newton steps are kept inside the bracket, otherwise bisect.
pub fn solve_monotone<F, D>(f: F, df: D, target: f64, mut lo: f64, mut hi: f64, rel_tol: f64) -> f64
where
    F: Fn(f64) -> f64,
    D: Fn(f64) -> f64,
{
    let mut x = 0.5 * (lo + hi);
    for _ in 0..200 {
        let fx = f(x) - target;
        if fx == 0.0 {
            return x;
        }
        if fx > 0.0 {
            hi = x;
        } else {
            lo = x;
        }
        let d = df(x);
        let mut next = if d > 0.0 { x - fx / d } else { f64::NAN };
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        let step = (next - x).abs();
        x = next;
        if step <= rel_tol * x.abs().max(1e-300) || (hi - lo) <= rel_tol * hi.abs().max(1e-300) {
            return x;
        }
    }
    x
}

/// Log-spaced grid of n points between a and b inclusive.
pub fn logspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![a];
    }
    let (la, lb) = (a.ln(), b.ln());
    (0..n)
        .map(|i| (la + (lb - la) * i as f64 / (n - 1) as f64).exp())
        .collect()
}
