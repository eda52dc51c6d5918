use proptest::prelude::*;
use stwdiff::lyapunov::{
    branch_rate, branch_value, evaluate, finite_difference_rate, region, sup_x2_on_omega, verify_decrease,
};
use stwdiff::{ErrorState, GridSpec, NoiseLevel, Params, RegionIndex};

/// `α(λ₂+1)L = 4`, so the `V = 1` level set has the landmarks ±1, ±√8 and 4.
fn landmark_gains() -> Params {
    Params::new(4.1, 1.1, 1.0, 4.0 / 2.1).unwrap()
}

fn gains() -> impl Strategy<Value = Params> {
    (0.5..10.0f64, 0.1..5.0f64, 1.01..=4.0f64, 1.0..10.0f64)
        .prop_map(|(l2, l, a, l1)| Params::new(l1, l2, l, a).unwrap())
}

fn state(r: f64) -> impl Strategy<Value = ErrorState> {
    (-r..r, -r..r).prop_map(|(a, b)| ErrorState::new(a, b))
}

fn ulp(x: f64) -> f64 {
    x.abs().max(f64::MIN_POSITIVE).next_up() - x.abs().max(f64::MIN_POSITIVE)
}

/// Largest `|x₂|` on `{V = level}` sampled through the dilation
/// `V(κ²x₁, κx₂) = κ²V(x)` applied to directions on the unit circle.
fn brute_sup_x2(p: &Params, level: f64, samples: usize) -> f64 {
    (0..samples)
        .map(|k| {
            let th = std::f64::consts::TAU * k as f64 / samples as f64;
            let (s, c) = th.sin_cos();
            let v = evaluate(ErrorState::new(c, s), p);
            (level / v).sqrt() * s.abs()
        })
        .fold(0.0, f64::max)
}

proptest! {
    #[test]
    fn symmetric_under_negation(p in gains(), x in state(10.0)) {
        let m = ErrorState::new(-x.x1, -x.x2);
        prop_assert_eq!(evaluate(x, &p), evaluate(m, &p));
    }

    #[test]
    fn continuous_at_thresholds(p in gains(), x2 in 0.0..10.0f64) {
        let c = 4.0 * p.alpha() * (p.lambda2() + 1.0) * p.l();
        let t1 = x2 * x2 / c;
        let t2 = (2.0 * p.alpha() + 1.0) * t1;
        let z1 = ErrorState::new(t1, x2);
        let z2 = ErrorState::new(t2, x2);
        // ulps are taken at the scale of the threshold coordinate: W3 = x₁ − 2αq
        // cancels down to q from operands of size (2α+1)q
        let (a, b) = (branch_value(RegionIndex::W1, z1, &p), branch_value(RegionIndex::W2, z1, &p));
        prop_assert!((a - b).abs() <= 8.0 * ulp(a.abs().max(b.abs()).max(t1)), "{} vs {}", a, b);
        let (a, b) = (branch_value(RegionIndex::W2, z2, &p), branch_value(RegionIndex::W3, z2, &p));
        prop_assert!((a - b).abs() <= 8.0 * ulp(a.abs().max(b.abs()).max(t2)), "{} vs {}", a, b);
        // region report is deterministic at the thresholds: W1 closed, W2 closed above
        prop_assert_eq!(region(z1, &p).index, RegionIndex::W1);
        if t2 > t1 {
            prop_assert_eq!(region(z2, &p).index, RegionIndex::W2);
        }
    }

    #[test]
    fn continuous_across_the_axis(p in gains(), x1 in -10.0..10.0f64) {
        let up = evaluate(ErrorState::new(x1, 0.0), &p);
        let down = evaluate(ErrorState::new(x1, -0.0), &p);
        prop_assert_eq!(up, down);
        let eps = 1e-9;
        let a = evaluate(ErrorState::new(x1, eps), &p);
        let b = evaluate(ErrorState::new(x1, -eps), &p);
        prop_assert!((a - b).abs() <= 1e-9);
    }

    #[test]
    fn lipschitz_on_a_box(p in gains(), r in 0.1..20.0f64, u in 0.0..1.0f64, v in 0.0..1.0f64,
                          w in 0.0..1.0f64, z in 0.0..1.0f64) {
        let a = ErrorState::new(r * (2.0 * u - 1.0), r * (2.0 * v - 1.0));
        let b = ErrorState::new(r * (2.0 * w - 1.0), r * (2.0 * z - 1.0));
        let dist = ((a.x1 - b.x1).powi(2) + (a.x2 - b.x2).powi(2)).sqrt();
        prop_assume!(dist > 1e-9);
        // largest branch gradient norm on the box is that of W3 at |x₂| = r
        let k = (1.0 + (r / ((p.lambda2() + 1.0) * p.l())).powi(2)).sqrt();
        let q = (evaluate(a, &p) - evaluate(b, &p)).abs() / dist;
        prop_assert!(q <= k * (1.0 + 1e-9) + 1e-9, "quotient {} above {}", q, k);
    }

    #[test]
    fn positive_definite(p in gains(), x in state(10.0)) {
        prop_assume!(x.x1.abs() + x.x2.abs() > 1e-9);
        prop_assert!(evaluate(x, &p) > 0.0);
    }

    #[test]
    fn quasi_homogeneous(p in gains(), x in state(5.0), k in 0.1..10.0f64) {
        let v = evaluate(x, &p);
        let vk = evaluate(ErrorState::new(k * k * x.x1, k * x.x2), &p);
        prop_assert!((vk - k * k * v).abs() <= 1e-12 * (k * k * v).max(1e-300));
    }

    #[test]
    fn analytic_rate_matches_difference_quotient(p in gains(), x in state(3.0), eta in -0.5..0.5f64,
                                                 fdd in -1.0..1.0f64) {
        let r = region(x, &p);
        let z = if r.mirrored { ErrorState::new(-x.x1, -x.x2) } else { x };
        let (e, f) = if r.mirrored { (-eta, -fdd) } else { (eta, fdd) };
        let c = 4.0 * p.alpha() * (p.lambda2() + 1.0) * p.l();
        let t1 = z.x2 * z.x2 / c;
        let t2 = (2.0 * p.alpha() + 1.0) * t1;
        prop_assume!((z.x1 - t1).abs() > 1e-2 && (z.x1 - t2).abs() > 1e-2);
        prop_assume!((x.x1 - eta).abs() > 1e-2 && x.x2.abs() > 1e-2);
        let analytic = branch_rate(r.index, z, e, f, &p);
        let fd = finite_difference_rate(x, eta, fdd, &p, 1e-7);
        prop_assert!((analytic - fd).abs() <= 1e-4 * (1.0 + analytic.abs()), "{} vs {}", analytic, fd);
    }
}

#[test]
fn level_set_landmarks() {
    let p = landmark_gains();
    for x in [(1.0, 0.0), (-1.0, 0.0), (0.0, 8f64.sqrt()), (0.0, -(8f64.sqrt()))] {
        let v = evaluate(ErrorState::new(x.0, x.1), &p);
        assert!((v - 1.0).abs() <= 4.0 * f64::EPSILON, "V{x:?} = {v}");
    }
    assert_eq!(sup_x2_on_omega(&p, NoiseLevel::new(1.0).unwrap()), 4.0);
    let b = brute_sup_x2(&p, 1.0, 100_000);
    assert!((b - 4.0).abs() / 4.0 <= 1e-4, "brute force {b}");
}

#[test]
fn sup_x2_agrees_with_sampling_for_other_gains() {
    for (p, n) in [
        (Params::reference(), 0.01),
        (Params::new(6.0, 3.0, 2.0, 4.0).unwrap(), 0.3),
        (Params::new(7.9, 6.0, 7.0, 3.0).unwrap(), 2.0),
    ] {
        let closed = sup_x2_on_omega(&p, NoiseLevel::new(n).unwrap());
        let b = brute_sup_x2(&p, n, 100_000);
        assert!((b - closed).abs() / closed <= 1e-4, "{closed} vs {b}");
        assert!(b <= closed * (1.0 + 1e-12));
    }
}

#[test]
fn certification_on_other_admissible_gains() {
    let g = GridSpec::new([-2.0, 2.0, -2.0, 2.0], 120, 120).unwrap();
    for p in [
        Params::new(6.0, 3.0, 1.0, 4.0).unwrap(),
        Params::new(4.95, 2.0, 1.0, 3.5).unwrap(),
        Params::new(6.3, 3.0, 2.5, 4.0).unwrap(),
    ] {
        let v = verify_decrease(&p, NoiseLevel::new(0.05).unwrap(), &g).unwrap();
        assert!(v.is_empty(), "{p:?}: {} violations, first {:?}", v.len(), v.first());
    }
}
