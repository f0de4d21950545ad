mod common;

use std::f64::consts::PI;

use growth_euler::fields::*;
use growth_euler::flow::*;
use growth_euler::{Error, GrowthBound, Vec2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn self_induced(f: VortexParticleField) -> VelocitySource {
    VelocitySource::SelfInduced(f)
}

fn exact_rankine() -> AnalyticSField {
    AnalyticSField::new(GrowthBound::constant(1.0), RadialProfile::Rankine { radius: 1.0, omega0: 1.0 })
}

fn run(src: VelocitySource, passive: &[Vec2], t: f64, dt: f64) -> FlowTrajectorySet {
    advect(src, passive, t, dt, &AdvectOptions::default()).unwrap()
}

#[test]
fn patch_center_stays_put() {
    let f = make_rankine(1.0, 1.0, 32).unwrap();
    let n = f.len();
    let traj = run(self_induced(f), &[Vec2::ZERO], 2.0, 0.02);
    let c = traj.track(n);
    assert!(c.iter().all(|p| p.norm() < 1e-10 * 2.0), "{:?}", c.last());
}

#[test]
fn exterior_orbit() {
    let t_end = 4.0;
    let x0 = Vec2::new(2.0, 0.0);
    let traj = run(VelocitySource::Analytic(exact_rankine()), &[x0], t_end, 0.01);
    let end = traj.track(0).last().copied().unwrap();
    assert!((end.norm() - 2.0).abs() < 1e-10);
    assert!((end.y.atan2(end.x) - 0.125 * t_end).abs() < 1e-10);

    let f = make_rankine(1.0, 1.0, 48).unwrap();
    let n = f.len();
    let traj = run(self_induced(f), &[x0], t_end, 0.02);
    let end = traj.track(n).last().copied().unwrap();
    let rate = end.y.atan2(end.x) / t_end;
    assert!((rate - 0.125).abs() < 0.125 * 0.01, "{rate}");
    assert!((end.norm() - 2.0).abs() < 2e-3);
}

#[test]
fn kirchhoff_rotation_at_moderate_resolution() {
    let f = make_kirchhoff(2.0, 1.0, 1.0, 48).unwrap();
    let traj = advect(
        self_induced(f),
        &[],
        3.0,
        0.02,
        &AdvectOptions { record_every: 5, ..Default::default() },
    )
    .unwrap();
    let omega = kirchhoff_rotation_rate(&traj);
    let want = kirchhoff_rate(2.0, 1.0, 1.0);
    assert!((omega - want).abs() < 0.03 * want, "{omega} vs {want}");
}

#[test]
fn rk4_order_on_analytic_flow() {
    let lo = AnalyticSField::new(
        GrowthBound::constant(1.0),
        RadialProfile::LambOseen { circulation: 3.0, core: 0.5 },
    )
    .centered(Vec2::new(0.1, 0.0));
    let x0 = [Vec2::new(0.4, 0.2), Vec2::new(-0.3, 0.6)];
    let reference = run(VelocitySource::Analytic(lo.clone()), &x0, 1.0, 1e-4);
    let end = |dt: f64| run(VelocitySource::Analytic(lo.clone()), &x0, 1.0, dt).frames.last().unwrap().clone();
    let r = reference.frames.last().unwrap();
    let err = |e: &Vec<Vec2>| e.iter().zip(r).map(|(a, b)| (*a - *b).norm()).fold(0.0, f64::max);
    let e1 = err(&end(0.1));
    let e2 = err(&end(0.05));
    let e3 = err(&end(0.025));
    let (o1, o2) = ((e1 / e2).log2(), (e2 / e3).log2());
    assert!(o1 > 3.5 && o2 > 3.5, "orders {o1} {o2} ({e1} {e2} {e3})");
}

#[test]
fn rk4_order_on_kirchhoff_angle() {
    // spatial resolution fixed, so only the time error changes
    let f = make_kirchhoff(2.0, 1.0, 1.0, 20).unwrap();
    let angle = |dt: f64| {
        let traj = run(self_induced(f.clone()), &[], 1.0, dt);
        *principal_angles(&traj).last().unwrap()
    };
    let a_ref = angle(0.0125);
    let d1 = (angle(0.2) - a_ref).abs();
    let d2 = (angle(0.1) - a_ref).abs();
    assert!(d1 / d2 > 8.0, "{d1} {d2}");
}

#[test]
fn inverse_flow_round_trip() {
    let f = make_kirchhoff(2.0, 1.0, 1.0, 24).unwrap();
    let traj = run(self_induced(f), &[], 0.5, 0.005);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let t = 0.5;
    for _ in 0..100 {
        let y = Vec2::new(rng.gen_range(-3.0..3.0), rng.gen_range(-2.0..2.0));
        let x = inverse_flow(&traj, t, y).unwrap();
        let back = forward_flow(&traj, t, x).unwrap();
        assert!((back - y).norm() < 1e-4, "y={y:?}: {}", (back - y).norm());
    }
    let y = Vec2::new(0.3, 0.4);
    assert_eq!(inverse_flow(&traj, 0.0, y).unwrap(), y);
    assert!(matches!(inverse_flow(&traj, 0.7, y), Err(Error::BadArgument(_))));
}

#[test]
fn vorticity_is_transported() {
    let (a, b) = (2.0, 1.0);
    let f0 = make_kirchhoff(a, b, 1.0, 40).unwrap();
    let t = 1.5;
    let traj = run(self_induced(f0.clone()), &[], t, 0.01);
    let k = traj.frame_index(t).unwrap();
    let ft = traj.field_at(k).unwrap();
    let th = kirchhoff_rate(a, b, 1.0) * t;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut checked = 0;
    while checked < 200 {
        let y = Vec2::new(rng.gen_range(-2.5..2.5), rng.gen_range(-2.5..2.5));
        // the patch at time t is close to the rotated ellipse; stay clear of its edge
        let z = y.rotate(-th);
        let level = ((z.x / a).powi(2) + (z.y / b).powi(2)).sqrt();
        if (level - 1.0).abs() < 0.2 {
            continue;
        }
        let carried = f0.omega_at(inverse_flow(&traj, t, y).unwrap());
        let nearest = ft
            .positions
            .iter()
            .enumerate()
            .min_by(|p, q| (*p.1 - y).norm().partial_cmp(&(*q.1 - y).norm()).unwrap())
            .unwrap();
        let by_particle = if (*nearest.1 - y).norm() < ft.spacing { ft.omega[nearest.0] } else { 0.0 };
        assert_eq!(carried, by_particle, "y={y:?}");
        checked += 1;
    }
}

#[test]
fn circulation_and_areas_are_carried() {
    let f = make_kirchhoff(2.0, 1.0, 1.0, 24).unwrap();
    let c = f.circulation();
    let traj = run(self_induced(f), &[], 1.0, 0.05);
    for k in 0..traj.times.len() {
        assert_eq!(traj.field_at(k).unwrap().circulation(), c);
    }
}

#[test]
fn areas_are_conserved() {
    let f = make_kirchhoff(2.0, 1.0, 1.0, 48).unwrap();
    let markers: Vec<Vec2> = (0..240).map(|k| Vec2::polar(0.5, 2.0 * PI * k as f64 / 240.0) + Vec2::new(0.6, 0.1)).collect();
    let n = f.len();
    let traj = run(self_induced(f), &markers, 2.0, 0.02);
    let first = &traj.frames[0];
    let last = traj.frames.last().unwrap();
    let (p0, p1) = (polygon_area(&first[n..]), polygon_area(&last[n..]));
    assert!((p1 - p0).abs() < 0.01 * p0, "{p0} {p1}");
    let (h0, h1) = (convex_hull_area(&first[..n]), convex_hull_area(&last[..n]));
    assert!((h1 - h0).abs() < 0.01 * h0, "{h0} {h1}");
}

#[test]
fn flow_bounds_hold() {
    let f = make_rankine(1.0, 1.0, 32).unwrap();
    let grid = polar_grid(3.0, 6, 8);
    let traj = run(self_induced(f), &grid, 2.0, 0.02);
    let one = GrowthBound::constant(1.0);
    let rep = flow_bound_check(&traj, &one).unwrap();
    assert!(rep.holds && rep.ratios.iter().all(|r| r.is_finite()), "{rep:?}");
    assert!(rep.ratios[0] <= rep.c0);

    // rigid rotation inside the exact Rankine core: |X - x| = 2|x| sin(t/4)
    let inner: Vec<Vec2> = polar_grid(0.9, 4, 6);
    let traj = run(VelocitySource::Analytic(exact_rankine()), &inner, 3.0, 0.01);
    for (k, &t) in traj.times.iter().enumerate() {
        for (x, x0) in traj.frames[k].iter().zip(&inner) {
            let chord = 2.0 * x0.norm() * (t / 4.0).sin();
            assert!(((*x - *x0).norm() - chord).abs() < 1e-9);
        }
    }
    assert!(flow_bound_check(&traj, &one).unwrap().holds);
}

#[test]
fn flow_bounds_with_growing_velocity() {
    let h = GrowthBound::parse("power:0.25").unwrap();
    let u = AnalyticSField::new(h.clone(), RadialProfile::Algebraic { beta: -0.75 });
    let pts = polar_grid(50.0, 10, 8);
    let traj = advect(
        VelocitySource::Analytic(u),
        &pts,
        2.0,
        0.01,
        &AdvectOptions { record_every: 10, norm_bound: h.clone() },
    )
    .unwrap();
    let rep = flow_bound_check(&traj, &h).unwrap();
    assert!(rep.holds, "{rep:?}");
    assert!(traj.c0 > 1.0 && traj.c0 <= 3.0);
}

#[test]
fn two_solution_flow_bound() {
    let f1 = make_rankine(1.0, 1.0, 24).unwrap();
    let f2 = f1.scaled(1.05);
    let pts = polar_grid(2.5, 4, 8);
    let a = run(self_induced(f1), &pts, 1.0, 0.02);
    let b = run(self_induced(f2), &pts, 1.0, 0.02);
    let rep = flow_bound_check_pair(&a, &b, &GrowthBound::constant(1.0)).unwrap();
    assert!(rep.holds, "{rep:?}");
    assert!(rep.ratios.iter().any(|&r| r > 0.0));
}

#[test]
fn modulus_of_continuity() {
    let inner = polar_grid(0.8, 3, 6);
    let traj = run(VelocitySource::Analytic(exact_rankine()), &inner, 2.0, 0.01);
    let ids: Vec<usize> = (0..inner.len()).collect();
    let rep = moc_check(&traj, traj.c0, &ids).unwrap();
    assert_eq!(rep.ratios[0], 1.0);
    // rotation is an isometry, and χ_t(d) >= d for d <= 1
    assert!(rep.ratios.iter().all(|&r| r <= 1.0 + 1e-12));
    for k in 0..traj.times.len() {
        let f = &traj.frames[k];
        assert!(((f[1] - f[5]).norm() - (inner[1] - inner[5]).norm()).abs() < 1e-10);
    }
}

#[test]
fn bad_steps_and_csv() {
    let f = make_rankine(1.0, 1.0, 16).unwrap();
    assert!(matches!(
        advect(self_induced(f.clone()), &[], 1.0, 0.0, &AdvectOptions::default()),
        Err(Error::BadArgument(_))
    ));
    assert!(matches!(
        advect(self_induced(f.clone()), &[], -1.0, 0.1, &AdvectOptions::default()),
        Err(Error::BadArgument(_))
    ));
    let empty = VortexParticleField::new(vec![], vec![], vec![], 0.1).unwrap();
    assert!(matches!(
        advect(self_induced(empty), &[], 1.0, 0.1, &AdvectOptions::default()),
        Err(Error::EmptyField)
    ));
    let traj = run(self_induced(f), &[Vec2::new(3.0, 0.0)], 0.2, 0.1);
    let mut buf = Vec::new();
    traj.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(text.starts_with("t,track_id,x,y\n"));
    assert_eq!(text.lines().count(), 1 + 3 * traj.n_tracks());
}

#[test]
fn runs_are_deterministic() {
    let f = make_kirchhoff(2.0, 1.0, 1.0, 24).unwrap();
    let a = run(self_induced(f.clone()), &[Vec2::new(2.5, 0.0)], 0.5, 0.05);
    let b = run(self_induced(f), &[Vec2::new(2.5, 0.0)], 0.5, 0.05);
    assert_eq!(a.frames, b.frames);
}
