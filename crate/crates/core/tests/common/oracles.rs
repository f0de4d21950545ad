//! Independent numerical oracles for the test targets.

#![allow(dead_code)]

use growth_euler::GrowthBound;

const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
];
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

/// (Kronrod 15, Gauss 7) on [a, b].
pub fn g7k15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let hw = 0.5 * (b - a);
    let fc = f(c);
    let mut k = fc * WGK[7];
    let mut g = fc * WG[3];
    for j in 0..7 {
        let x = hw * XGK[j];
        let s = f(c - x) + f(c + x);
        k += WGK[j] * s;
        if j % 2 == 1 {
            g += WG[j / 2] * s;
        }
    }
    (k * hw, g * hw)
}

/// Bisect until Kronrod and Gauss agree.
pub fn gk_adaptive<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
    let (k, g) = g7k15(f, a, b);
    if (k - g).abs() <= tol * k.abs().max(1e-300) || depth == 0 {
        return k;
    }
    let m = 0.5 * (a + b);
    gk_adaptive(f, a, m, tol, depth - 1) + gk_adaptive(f, m, b, tol, depth - 1)
}

/// ∫_r^∞ h(s)^p / s² ds with s = r/t, which gives (1/r) ∫_0^1 h(r/t)^p dt, summed
/// over the dyadic panels [2^{-k-1}, 2^{-k}].
pub fn h_integral_oracle(h: &GrowthBound, r: f64, p: i32) -> f64 {
    let f = |t: f64| h.eval(r / t).powi(p);
    let mut sum = 0.0;
    for k in 0..400 {
        let hi = 0.5f64.powi(k);
        let part = gk_adaptive(&f, 0.5 * hi, hi, 1e-13, 20);
        sum += part;
        if part.abs() < 1e-18 * sum.abs() {
            break;
        }
    }
    sum / r
}

/// ∂_i ∂⊥_k g^j(x) by central differences of a vector field g, step `s`,
/// with ∂⊥ = (-∂_2, ∂_1). Indexed [j][i][k].
pub fn perp_hessian_fd<G: Fn(growth_euler::Vec2) -> growth_euler::Vec2>(
    g: G,
    x: growth_euler::Vec2,
    s: f64,
) -> [[[f64; 2]; 2]; 2] {
    use growth_euler::Vec2;
    let e = [Vec2::new(s, 0.0), Vec2::new(0.0, s)];
    let comp = |v: Vec2, j: usize| if j == 0 { v.x } else { v.y };
    let mut d2 = [[[0.0; 2]; 2]; 2];
    for j in 0..2 {
        for a in 0..2 {
            for b in 0..2 {
                let f = |p: Vec2| comp(g(p), j);
                d2[j][a][b] = if a == b {
                    (f(x + e[a]) - 2.0 * f(x) + f(x - e[a])) / (s * s)
                } else {
                    (f(x + e[a] + e[b]) - f(x + e[a] - e[b]) - f(x - e[a] + e[b]) + f(x - e[a] - e[b]))
                        / (4.0 * s * s)
                };
            }
        }
    }
    let mut out = [[[0.0; 2]; 2]; 2];
    for j in 0..2 {
        for i in 0..2 {
            out[j][i][0] = -d2[j][i][1];
            out[j][i][1] = d2[j][i][0];
        }
    }
    out
}

/// Richardson combination of `perp_hessian_fd` at steps s and s/2, fourth order.
pub fn perp_hessian_richardson<G: Fn(growth_euler::Vec2) -> growth_euler::Vec2>(
    g: G,
    x: growth_euler::Vec2,
    s: f64,
) -> [[[f64; 2]; 2]; 2] {
    let a = perp_hessian_fd(&g, x, s);
    let b = perp_hessian_fd(&g, x, 0.5 * s);
    let mut out = a;
    for j in 0..2 {
        for i in 0..2 {
            for k in 0..2 {
                out[j][i][k] = (4.0 * b[j][i][k] - a[j][i][k]) / 3.0;
            }
        }
    }
    out
}

pub fn tensor_max(t: &[[[f64; 2]; 2]; 2]) -> f64 {
    t.iter().flatten().flatten().fold(0.0, |m, v| m.max(v.abs()))
}

pub fn tensor_diff(a: &[[[f64; 2]; 2]; 2], b: &[[[f64; 2]; 2]; 2]) -> f64 {
    let mut m: f64 = 0.0;
    for j in 0..2 {
        for i in 0..2 {
            for k in 0..2 {
                m = m.max((a[j][i][k] - b[j][i][k]).abs());
            }
        }
    }
    m
}
