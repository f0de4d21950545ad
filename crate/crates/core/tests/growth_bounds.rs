mod common;

use std::f64::consts::E;

use common::oracles::h_integral_oracle;
use growth_euler::growth_bounds::*;
use growth_euler::quadrature::logspace;
use growth_euler::{Error, GrowthBound, Tier};

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * b.abs()
}

#[test]
fn tiers_of_the_shipped_bounds() {
    let tier = |h: GrowthBound| validate_tier(&h, 256, 1e6).unwrap();
    assert!(tier(GrowthBound::power(0.25)).tier >= Tier::WellPosedness);
    assert_eq!(tier(GrowthBound::quarter_log()).tier, Tier::GlobalWellPosedness);
    assert_eq!(tier(GrowthBound::constant(1.0)).tier, Tier::GlobalWellPosedness);
    let r = tier(GrowthBound::power(0.6));
    assert_eq!(r.tier, Tier::Growth);
    assert!(r.diagnostics.iter().any(|d| d.predicate.contains("h^2")));
    assert_eq!(tier(GrowthBound::linear()).tier, Tier::PreGrowth);
}

#[test]
fn power_tails_under_the_printed_bound() {
    let alpha = 0.25;
    let h = GrowthBound::power(alpha);
    for n in [1, 2] {
        let v = compute_h(&h, 1.0, n).unwrap();
        let nf = n as f64;
        assert!(v <= 2f64.powf(nf * alpha) / (1.0 - nf * alpha), "n={n}: {v}");
        // lower end: h(s) >= s^alpha
        assert!(v >= 1.0 / (1.0 - nf * alpha), "n={n}: {v}");
    }
}

#[test]
fn quarterlog_h_square_bound() {
    let h = GrowthBound::quarter_log();
    for r in [0.1, 1.0, 10.0, 1e3] {
        let v = compute_h(&h, r, 2).unwrap();
        assert!(v <= 2.0 * (2.0 * E + 2.0 * r).ln().sqrt() / r, "r={r}: {v}");
    }
}

#[test]
fn h_matches_kronrod_oracle() {
    let cases = [
        (GrowthBound::constant(1.0), vec![1, 2]),
        (GrowthBound::power(0.25), vec![1, 2]),
        (GrowthBound::power(0.5), vec![1]),
        (GrowthBound::power(0.75), vec![1]),
        (GrowthBound::quarter_log(), vec![1, 2]),
    ];
    for (h, powers) in cases {
        for p in powers {
            for r in logspace(1e-3, 1e4, 50) {
                let got = compute_h(&h, r, p).unwrap();
                let want = h_integral_oracle(&h, r, p);
                assert!(close(got, want, 1e-6), "{} p={p} r={r}: {got} vs {want}", h.label);
            }
        }
    }
}

#[test]
fn h_is_strictly_decreasing() {
    let h = GrowthBound::quarter_log();
    let vals: Vec<f64> = logspace(1e-2, 1e3, 40).iter().map(|&r| compute_h(&h, r, 2).unwrap()).collect();
    assert!(vals.windows(2).all(|w| w[1] < w[0]));
}

#[test]
fn divergent_tails_are_reported() {
    let h = GrowthBound::power(0.6);
    assert!(matches!(compute_h(&h, 1.0, 2), Err(Error::DivergentIntegral { .. })));
}

#[test]
fn e_and_mu() {
    let one = GrowthBound::constant(1.0);
    let (e, _) = compute_e_and_mu(&one, 1.0).unwrap();
    assert!(close(e, 4.0, 1e-8));
    for h in [one, GrowthBound::power(0.25), GrowthBound::quarter_log()] {
        let (e, mu) = compute_e_and_mu(&h, 1e-6).unwrap();
        assert!(e <= mu, "{}: E={e} mu={mu}", h.label);
        let env = h.envelope().unwrap();
        assert_eq!(env.eval(0.0), 0.0);
        for r in logspace(1e-5, 1e5, 60) {
            let (e, mu) = compute_e_and_mu(&h, r).unwrap();
            assert!(e <= mu, "{} r={r}", h.label);
            let (a, b) = (0.5 * r, 1.5 * r);
            assert!(env.eval(r) <= 0.5 * (env.eval(a) + env.eval(b)) * (1.0 + 1e-12));
        }
    }
    let h2 = GrowthBound::quarter_log();
    let e = compute_e(&h2, 100.0).unwrap();
    assert!(e <= 2.0 * (1.0 + 4.0 * (2.0 * E + 20.0).ln()) * 100.0, "{e}");
}

#[test]
fn gamma_and_f_t_examples() {
    let c = GrowthBound::constant(1.0);
    assert!(close(gamma_t(&c, 1.0, 2.0, 3.0).unwrap(), 5.0, 1e-10));
    assert_eq!(f_t(&GrowthBound::constant(3.0), 1.0, 2.0, 7.0).unwrap(), 3.0);
    let lin = GrowthBound::linear();
    assert!(close(gamma_t(&lin, 1.0, 1.0, 0.0).unwrap(), E - 1.0, 1e-10));
    assert!(close(f_t(&lin, 1.0, 1.0, 0.0).unwrap(), E, 1e-10));
    // closed-form antiderivative 2 sqrt(1 + r) of 1/h for h = sqrt(1 + r)
    let h1 = GrowthBound::power(0.5);
    let want = (2f64.sqrt() + 0.5).powi(2) - 1.0;
    assert!(close(gamma_t(&h1, 1.0, 1.0, 1.0).unwrap(), want, 1e-10));
    // and (4/3)(1 + r)^{3/4} for alpha = 1/4
    let h = GrowthBound::power(0.25);
    let g = gamma_t(&h, 1.0, 1.0, 10.0).unwrap();
    let anti = |r: f64| (4.0 / 3.0) * (1.0 + r).powf(0.75);
    assert!(close(anti(g) - anti(10.0), 1.0, 1e-10));
    assert!(f_t(&h, 1.0, 1.0, 10.0).unwrap() >= h.eval(10.0));
}

#[test]
fn f_t_is_a_growth_multiple() {
    for h in [GrowthBound::power(0.25), GrowthBound::quarter_log(), GrowthBound::power(0.5)] {
        let mut prev = 0.0;
        for t in [0.25, 0.5, 1.0, 2.0] {
            let ratio = logspace(1e-3, 1e6, 80)
                .iter()
                .map(|&r| f_t(&h, 1.0, t, r).unwrap() / h.eval(r))
                .fold(0.0, f64::max);
            assert!(ratio.is_finite() && ratio >= 1.0);
            assert!(ratio >= prev);
            prev = ratio;
        }
    }
}

#[test]
fn piecewise_examples() {
    let ie = (-1f64).exp();
    assert!(close(mubar(ie).unwrap(), ie, 1e-15));
    assert_eq!(mubar(0.5).unwrap(), ie);
    for r in [0.0, 0.5, 1.0, 3.0] {
        assert_eq!(chi_t(2.0, 0.0, r).unwrap(), r);
    }
    let v = phi_alpha(1.0, 0.0, 0.5, 0.25).unwrap();
    // 0.25^{2/3} = 2^{-4/3}
    assert!(close(v, 0.25 + 0.396_850_262_992_049_9, 1e-14), "{v}");
    assert!(matches!(mubar(-0.1), Err(Error::BadArgument(_))));
    assert!(matches!(chi_t(1.0, -1.0, 0.5), Err(Error::BadArgument(_))));
    assert!(matches!(phi_alpha(1.0, 1.0, 0.0, 0.5), Err(Error::BadArgument(_))));
}

#[test]
fn existence_time_examples() {
    let h2 = GrowthBound::quarter_log().classified(64, 100.0).unwrap();
    assert!(existence_time_estimate(&h2, 1.0, 1.0, 1.0).unwrap().global());
    let riccati = OsgoodBound::new(std::sync::Arc::new(|s| s * s), 1.0, 1.0).unwrap();
    assert!(close(riccati.t_max, 1.0, 1e-8));
    assert!(close(riccati.lambda_bound(0.75), 4.0, 1e-8));
    let gronwall = OsgoodBound::new(std::sync::Arc::new(|s| s), 1.0, 1.0).unwrap();
    assert!(gronwall.global());
    assert!(close(gronwall.lambda_bound(1.0), E, 1e-9));
    let unclassified = GrowthBound::power(0.25);
    assert!(matches!(
        existence_time_estimate(&unclassified, 1.0, 1.0, 1.0),
        Err(Error::TierRequired { .. })
    ));
}
