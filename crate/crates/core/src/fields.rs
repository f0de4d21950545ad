//! Vorticity discretizations and analytic radial velocity fields.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::io::{BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::Vec2;
use crate::growth_bounds::{mubar, GrowthBound};
use crate::kernel::{biot_savart_sum, Sources, CORE_FRACTION};

/// Square lattice bookkeeping: particle k sits at the center of cell (i, j),
/// whose lower-left corner is origin + (i, j) h.
#[derive(Debug, Clone, PartialEq)]
pub struct Lattice {
    pub origin: Vec2,
    pub h: f64,
    pub cells: Vec<(i64, i64)>,
    index: HashMap<(i64, i64), usize>,
}

impl Lattice {
    fn new(origin: Vec2, h: f64, cells: Vec<(i64, i64)>) -> Self {
        let index = cells.iter().enumerate().map(|(k, &c)| (c, k)).collect();
        Lattice { origin, h, cells, index }
    }

    pub fn cell_of(&self, x: Vec2) -> (i64, i64) {
        (
            ((x.x - self.origin.x) / self.h).floor() as i64,
            ((x.y - self.origin.y) / self.h).floor() as i64,
        )
    }

    pub fn lookup(&self, cell: (i64, i64)) -> Option<usize> {
        self.index.get(&cell).copied()
    }

    fn corner(&self, cell: (i64, i64)) -> Vec2 {
        self.origin + Vec2::new(cell.0 as f64, cell.1 as f64) * self.h
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VortexParticleField {
    pub positions: Vec<Vec2>,
    pub omega: Vec<f64>,
    pub areas: Vec<f64>,
    /// particle spacing; sets the core radius of the direct sum
    pub spacing: f64,
    pub support_radius: f64,
    pub lattice: Option<Lattice>,
}

impl VortexParticleField {
    pub fn new(positions: Vec<Vec2>, omega: Vec<f64>, areas: Vec<f64>, spacing: f64) -> Result<Self> {
        if positions.len() != omega.len() || positions.len() != areas.len() {
            return Err(Error::BadArgument("positions, omega and areas differ in length".into()));
        }
        if !(spacing > 0.0) {
            return Err(Error::BadArgument(format!("spacing must be positive, got {spacing}")));
        }
        if positions.iter().any(|p| !p.is_finite()) || omega.iter().any(|w| !w.is_finite()) {
            return Err(Error::BadArgument("non-finite particle data".into()));
        }
        if areas.iter().any(|&a| !(a > 0.0 && a.is_finite())) {
            return Err(Error::BadArgument("areas must be positive".into()));
        }
        let support_radius = positions.iter().map(|p| p.norm()).fold(0.0, f64::max) + spacing;
        Ok(VortexParticleField {
            positions,
            omega,
            areas,
            spacing,
            support_radius,
            lattice: None,
        })
    }

    /// Cell centers of a square lattice of spacing h inside `inside`, symmetric about
    /// the origin, with areas rescaled so they sum to `area`.
    fn from_lattice<F: Fn(Vec2) -> bool>(h: f64, nx: usize, ny: usize, inside: F, omega0: f64, area: f64) -> Self {
        let origin = Vec2::new(-(nx as f64) * h / 2.0, -(ny as f64) * h / 2.0);
        let mut positions = Vec::new();
        let mut cells = Vec::new();
        for j in 0..ny as i64 {
            for i in 0..nx as i64 {
                let c = origin + Vec2::new((i as f64 + 0.5) * h, (j as f64 + 0.5) * h);
                if inside(c) {
                    positions.push(c);
                    cells.push((i, j));
                }
            }
        }
        let n = positions.len();
        let a = area / n as f64;
        let support_radius = positions.iter().map(|p| p.norm()).fold(0.0, f64::max) + h;
        VortexParticleField {
            positions,
            omega: vec![omega0; n],
            areas: vec![a; n],
            spacing: h,
            support_radius,
            lattice: Some(Lattice::new(origin, h, cells)),
        }
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// ω_i A_i.
    pub fn strengths(&self) -> Vec<f64> {
        self.omega.iter().zip(&self.areas).map(|(w, a)| w * a).collect()
    }

    pub fn circulation(&self) -> f64 {
        self.strengths().iter().sum()
    }

    pub fn total_area(&self) -> f64 {
        self.areas.iter().sum()
    }

    pub fn omega_sup(&self) -> f64 {
        self.omega.iter().fold(0.0, |m, w| m.max(w.abs()))
    }

    pub fn core_radius(&self) -> f64 {
        CORE_FRACTION * self.spacing
    }

    pub fn sources(&self) -> Sources {
        Sources::new(&self.positions, &self.strengths())
    }

    /// (K * ω)(x) by direct summation.
    pub fn velocity_at(&self, x: Vec2) -> Vec2 {
        biot_savart_sum(&self.positions, &self.strengths(), x, self.core_radius())
    }

    pub fn velocities_at(&self, xs: &[Vec2]) -> Vec<Vec2> {
        use rayon::prelude::*;
        let src = self.sources();
        let eps = self.core_radius();
        xs.par_iter().map(|&x| src.velocity(x, eps)).collect()
    }

    /// Piecewise-constant vorticity on the lattice cells (0 off the lattice).
    pub fn omega_at(&self, x: Vec2) -> f64 {
        match &self.lattice {
            Some(l) => l.lookup(l.cell_of(x)).map_or(0.0, |k| self.omega[k]),
            None => 0.0,
        }
    }

    pub fn translated(&self, shift: Vec2) -> Self {
        let mut out = self.clone();
        for p in &mut out.positions {
            *p += shift;
        }
        if let Some(l) = &mut out.lattice {
            l.origin += shift;
        }
        out.support_radius = out.positions.iter().map(|p| p.norm()).fold(0.0, f64::max) + out.spacing;
        out
    }

    pub fn scaled(&self, factor: f64) -> Self {
        let mut out = self.clone();
        for w in &mut out.omega {
            *w *= factor;
        }
        out
    }

    /// Particles of self followed by those of other with negated ω, so that sums over
    /// the result convolve against ω_self - ω_other.
    pub fn difference(&self, other: &VortexParticleField) -> Self {
        let mut out = self.clone();
        out.positions.extend_from_slice(&other.positions);
        out.omega.extend(other.omega.iter().map(|w| -w));
        out.areas.extend_from_slice(&other.areas);
        out.spacing = self.spacing.min(other.spacing);
        out.support_radius = self.support_radius.max(other.support_radius);
        out.lattice = None;
        out
    }

    /// sup_x |ω_self(x) - ω_other(x)| for two lattice fields, exact for
    /// piecewise-constant cell data.
    pub fn vorticity_sup_difference(&self, other: &VortexParticleField) -> Result<f64> {
        let (la, lb) = match (&self.lattice, &other.lattice) {
            (Some(a), Some(b)) => (a, b),
            _ => return Err(Error::BadArgument("vorticity difference needs lattice fields".into())),
        };
        let one_sided = |fa: &VortexParticleField, la: &Lattice, fb: &VortexParticleField, lb: &Lattice| {
            let mut sup: f64 = 0.0;
            for (k, &cell) in la.cells.iter().enumerate() {
                let lo = la.corner(cell);
                let hi = lo + Vec2::new(la.h, la.h);
                let (i0, j0) = lb.cell_of(lo);
                let (i1, j1) = lb.cell_of(hi);
                let mut covered = 0.0;
                for j in j0..=j1 {
                    for i in i0..=i1 {
                        let Some(m) = lb.lookup((i, j)) else { continue };
                        let c = lb.corner((i, j));
                        let ox = (hi.x.min(c.x + lb.h) - lo.x.max(c.x)).max(0.0);
                        let oy = (hi.y.min(c.y + lb.h) - lo.y.max(c.y)).max(0.0);
                        if ox * oy > 0.0 {
                            covered += ox * oy;
                            sup = sup.max((fa.omega[k] - fb.omega[m]).abs());
                        }
                    }
                }
                if covered < la.h * la.h * (1.0 - 1e-12) {
                    sup = sup.max(fa.omega[k].abs());
                }
            }
            sup
        };
        Ok(one_sided(self, la, other, lb).max(one_sided(other, lb, self, la)))
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "x,y,omega,area")?;
        for k in 0..self.len() {
            let p = self.positions[k];
            writeln!(w, "{},{},{},{}", p.x, p.y, self.omega[k], self.areas[k])?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R, spacing: f64) -> Result<Self> {
        let mut lines = r.lines();
        let header = lines.next().ok_or_else(|| Error::Parse("empty snapshot".into()))??;
        if header.trim() != "x,y,omega,area" {
            return Err(Error::Parse(format!("unexpected header {header:?}")));
        }
        let (mut pos, mut om, mut ar) = (Vec::new(), Vec::new(), Vec::new());
        for (n, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let v: Vec<f64> = line
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Parse(format!("line {}: {e}", n + 2)))?;
            if v.len() != 4 {
                return Err(Error::Parse(format!("line {}: expected 4 columns", n + 2)));
            }
            pos.push(Vec2::new(v[0], v[1]));
            om.push(v[2]);
            ar.push(v[3]);
        }
        VortexParticleField::new(pos, om, ar, spacing)
    }
}

/// Uniform patch ω0 on the disk of radius R, n cells across the diameter.
pub fn make_rankine(radius: f64, omega0: f64, n: usize) -> Result<VortexParticleField> {
    if n < 8 {
        return Err(Error::BadArgument(format!("need n >= 8 cells per diameter, got {n}")));
    }
    if !(radius > 0.0) {
        return Err(Error::BadArgument(format!("radius must be positive, got {radius}")));
    }
    let h = 2.0 * radius / n as f64;
    let r2 = radius * radius;
    Ok(VortexParticleField::from_lattice(
        h,
        n,
        n,
        |c| c.norm_sq() <= r2,
        omega0,
        PI * r2,
    ))
}

/// Uniform patch ω0 on the ellipse x²/a² + y²/b² <= 1, n cells across the major axis.
pub fn make_kirchhoff(a: f64, b: f64, omega0: f64, n: usize) -> Result<VortexParticleField> {
    if !(a >= b && b > 0.0) {
        return Err(Error::BadArgument(format!("need a >= b > 0 (a={a}, b={b})")));
    }
    if n < 8 {
        return Err(Error::BadArgument(format!("need n >= 8 cells per diameter, got {n}")));
    }
    let h = 2.0 * a / n as f64;
    let ny = ((2.0 * b / h) - 1e-9).ceil() as usize;
    Ok(VortexParticleField::from_lattice(
        h,
        n,
        ny,
        |c| (c.x / a).powi(2) + (c.y / b).powi(2) <= 1.0,
        omega0,
        PI * a * b,
    ))
}

/// Rotation rate of a Kirchhoff ellipse.
pub fn kirchhoff_rate(a: f64, b: f64, omega0: f64) -> f64 {
    a * b * omega0 / ((a + b) * (a + b))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum RadialProfile {
    Zero,
    /// uniform vorticity on a disk
    Rankine { radius: f64, omega0: f64 },
    /// V(r) = r (1 + r)^beta
    Algebraic { beta: f64 },
    /// Gaussian vorticity Γ/(π c²) exp(-r²/c²)
    LambOseen { circulation: f64, core: f64 },
}

impl RadialProfile {
    pub fn v(&self, r: f64) -> f64 {
        match *self {
            RadialProfile::Zero => 0.0,
            RadialProfile::Rankine { radius, omega0 } => {
                if r <= radius {
                    omega0 * r / 2.0
                } else {
                    omega0 * radius * radius / (2.0 * r)
                }
            }
            RadialProfile::Algebraic { beta } => r * (1.0 + r).powf(beta),
            RadialProfile::LambOseen { circulation, core } => {
                let s = r * r / (core * core);
                if s < 1e-8 {
                    circulation * r / (2.0 * PI * core * core) * (1.0 - s / 2.0)
                } else {
                    circulation / (2.0 * PI * r) * (1.0 - (-s).exp())
                }
            }
        }
    }

    /// ω = V' + V/r.
    pub fn omega(&self, r: f64) -> f64 {
        match *self {
            RadialProfile::Zero => 0.0,
            RadialProfile::Rankine { radius, omega0 } => {
                if r <= radius {
                    omega0
                } else {
                    0.0
                }
            }
            RadialProfile::Algebraic { beta } => 2.0 * (1.0 + r).powf(beta) + beta * r * (1.0 + r).powf(beta - 1.0),
            RadialProfile::LambOseen { circulation, core } => {
                circulation / (PI * core * core) * (-(r * r) / (core * core)).exp()
            }
        }
    }
}

/// u(x) = V(|x - c|) (x - c)⊥ / |x - c|.
#[derive(Debug, Clone)]
pub struct AnalyticSField {
    pub h: GrowthBound,
    pub profile: RadialProfile,
    pub center: Vec2,
}

impl AnalyticSField {
    pub fn new(h: GrowthBound, profile: RadialProfile) -> Self {
        AnalyticSField {
            h,
            profile,
            center: Vec2::ZERO,
        }
    }

    pub fn centered(mut self, c: Vec2) -> Self {
        self.center = c;
        self
    }

    pub fn u(&self, x: Vec2) -> Vec2 {
        let z = x - self.center;
        let r = z.norm();
        if r == 0.0 {
            return Vec2::ZERO;
        }
        z.perp() * (self.profile.v(r) / r)
    }

    pub fn omega(&self, x: Vec2) -> f64 {
        self.profile.omega((x - self.center).norm())
    }
}

/// Polar sample grid: the origin plus n_r radii (linear to `r_max`) times n_theta angles.
pub fn polar_grid(r_max: f64, n_r: usize, n_theta: usize) -> Vec<Vec2> {
    let mut g = vec![Vec2::ZERO];
    for i in 1..=n_r {
        let r = r_max * i as f64 / n_r as f64;
        for k in 0..n_theta {
            g.push(Vec2::polar(r, 2.0 * PI * k as f64 / n_theta as f64));
        }
    }
    g
}

/// max |u|/h over the grid plus max |ω| over the grid.
pub fn s_h_norm(u: &AnalyticSField, h: &GrowthBound, grid: &[Vec2]) -> f64 {
    let su = grid.iter().map(|&x| u.u(x).norm() / h.eval(x.norm())).fold(0.0, f64::max);
    let sw = grid.iter().map(|&x| u.omega(x).abs()).fold(0.0, f64::max);
    su + sw
}

/// Discrete version: velocity by direct sum on the grid, ‖ω‖_∞ from the particles.
pub fn s_h_norm_discrete(field: &VortexParticleField, h: &GrowthBound, grid: &[Vec2]) -> f64 {
    let vs = field.velocities_at(grid);
    let su = grid
        .iter()
        .zip(&vs)
        .map(|(&x, v)| v.norm() / h.eval(x.norm()))
        .fold(0.0, f64::max);
    su + field.omega_sup()
}

/// Random (x, y) pairs: x uniform in the disk of radius r_max, |y| log-uniform in
/// [1e-8, 1] (1 + |x|).
pub fn morrey_samples(seed: u64, count: usize, r_max: f64) -> Vec<(Vec2, Vec2)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let r = r_max * rng.gen::<f64>().sqrt();
            let x = Vec2::polar(r, 2.0 * PI * rng.gen::<f64>());
            let len = (1.0 + r) * 10f64.powf(-8.0 * rng.gen::<f64>());
            (x, Vec2::polar(len, 2.0 * PI * rng.gen::<f64>()))
        })
        .collect()
}

/// max over samples of |u(x+y) - u(x)| / (‖u‖_{S_h} h(x) μ̄(|y|/h(x))).
pub fn morrey_modulus_check(u: &AnalyticSField, h: &GrowthBound, samples: &[(Vec2, Vec2)]) -> Result<f64> {
    let r_max = samples
        .iter()
        .map(|(x, y)| x.norm() + y.norm())
        .fold(1.0, f64::max);
    let mut grid = polar_grid(2.0 * r_max, 400, 16);
    grid.extend(samples.iter().flat_map(|&(x, y)| [x, x + y]));
    let norm = s_h_norm(u, h, &grid);
    if norm == 0.0 {
        return Ok(0.0);
    }
    let mut c: f64 = 0.0;
    for &(x, y) in samples {
        let ly = y.norm();
        if ly == 0.0 {
            continue;
        }
        let hx = h.eval(x.norm());
        let denom = norm * hx * mubar(ly / hx)?;
        c = c.max((u.u(x + y) - u.u(x)).norm() / denom);
    }
    Ok(c)
}
