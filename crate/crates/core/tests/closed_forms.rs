mod common;

use common::{exact, fx, ulps, Fx};
use stwdiff::lyapunov::decay_rate_gamma;
use stwdiff::params::{
    convergence_time_bound, error_lower_bound, error_upper_bound, lambda1_range, lambda2_min, tightness_factor,
};
use stwdiff::{NoiseLevel, Params};

const MAX_ULPS: f64 = 4.0;

fn assert_ulps(label: &str, got: f64, want: &Fx) {
    let d = ulps(got, want);
    assert!(d <= MAX_ULPS, "{label}: {got:e} is {d} ulp from {:e}", want.to_f64());
}

fn gain_sets() -> Vec<(f64, f64, f64, f64)> {
    vec![
        (4.1, 1.1, 1.0, 4.0),
        (6.0, 3.0, 1.0, 4.0),
        (6.3, 3.0, 2.5, 4.0),
        (4.33, 1.3, 0.1, 3.9),
        (7.9, 6.0, 7.0, 3.0),
        (4.95, 2.0, 1.0, 3.5),
    ]
}

#[test]
fn oracle_self_check() {
    assert_eq!(fx(0.1).to_f64(), 0.1);
    assert_eq!(fx(-3.75).to_f64(), -3.75);
    assert!(ulps(2f64.sqrt(), &Fx::int(2).sqrt()) <= 0.5);
    assert!(ulps(1.0 + f64::EPSILON, &Fx::int(1)) == 1.0);
}

#[test]
fn lambda2_min_matches_oracle() {
    for alpha in [4.0, 3.99, 3.5, 3.0, 2.25, 2.0, 1.5, 1.2, 1.05] {
        assert_ulps(
            &format!("lambda2_min({alpha})"),
            lambda2_min(alpha).unwrap(),
            &exact::lambda2_min(alpha),
        );
    }
}

#[test]
fn lambda1_range_matches_oracle() {
    for (l2, alpha) in [
        (1.1, 4.0),
        (3.0, 4.0),
        (2.0, 3.0),
        (10.0, 2.0),
        (7.5, 2.25),
        (50.0, 1.3),
    ] {
        let r = lambda1_range(l2, alpha).unwrap();
        assert_ulps(&format!("lo({l2},{alpha})"), r.lo, &exact::lambda1_lo(l2));
        assert_ulps(&format!("hi({l2},{alpha})"), r.hi, &exact::lambda1_hi(l2, alpha));
    }
}

#[test]
fn lambda1_range_reduces_to_alpha_four_form() {
    for l2 in [1.01, 1.1, 2.0, 3.0, 17.0] {
        let r = lambda1_range(l2, 4.0).unwrap();
        assert_ulps(&format!("hi({l2})"), r.hi, &exact::lambda1_hi_alpha4(l2));
    }
}

#[test]
fn bounds_match_oracle() {
    for (l1, l2, l, alpha) in gain_sets() {
        let p = Params::new(l1, l2, l, alpha).unwrap();
        for n in [0.01, 1.0, 3e-5, 42.0] {
            let nl = NoiseLevel::new(n).unwrap();
            assert_ulps("upper", error_upper_bound(&p, nl), &exact::upper(l2, l, alpha, n));
            assert_ulps("lower", error_lower_bound(l2, nl, l), &exact::lower(l2, l, n));
        }
        assert_ulps("factor", tightness_factor(&p), &fx(alpha).sqrt());
    }
}

#[test]
fn convergence_time_matches_oracle() {
    for (l1, l2, l, alpha) in gain_sets() {
        let p = Params::new(l1, l2, l, alpha).unwrap();
        for fdot0 in [1.0, -2.5, 0.3] {
            assert_ulps(
                "time",
                convergence_time_bound(&p, fdot0).unwrap(),
                &exact::convergence_time(l2, l, fdot0),
            );
        }
    }
}

#[test]
fn gamma_report_matches_oracle() {
    for (l1, l2, l, alpha) in gain_sets() {
        let p = Params::new(l1, l2, l, alpha).unwrap();
        let g = decay_rate_gamma(&p).unwrap();
        let want = exact::gamma_rates(l1, l2, l, alpha);
        let got = [
            g.region1_small_x2,
            g.region1_large_x2,
            g.epsilon1,
            g.region1_positive_offset,
            g.region2,
            g.epsilon2,
            g.region3,
        ];
        for (k, (a, b)) in got.iter().zip(&want).enumerate() {
            assert_ulps(&format!("{:?} entry {k}", (l1, l2, l, alpha)), *a, b);
        }
        let gmin = [&want[0], &want[1], &want[3], &want[4], &want[6]]
            .into_iter()
            .cloned()
            .reduce(Fx::min)
            .unwrap();
        assert_ulps("gamma", g.gamma, &gmin);
    }
}

#[test]
fn reference_gamma_is_the_lower_slack_rate() {
    let g = decay_rate_gamma(&Params::reference()).unwrap();
    assert_eq!(g.gamma, g.region3);
    assert!((g.gamma - 0.0012196936161602047).abs() < 1e-15);
}
