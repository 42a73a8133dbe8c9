use branchfield::branching::TestFunction;
use branchfield::estimators::{
    estimate_i, estimate_survival, jensen_lower_bound, quadrature_lower_bound_i, sandwich_check, BackwardTreeParams,
    SimOptions,
};
use branchfield::geometry::Ball;
use branchfield::laws::offspring::OffspringLaw;
use branchfield::laws::{Laws, MotionLaw};
use branchfield::rng::Seeder;

#[test]
fn survival_without_motion_is_galton_watson_survival() {
    let laws = Laws::unchecked(OffspringLaw::binary(), MotionLaw::Still { dim: 3 });
    let a = Ball::centered(3, 1.0);
    let n = 6;
    let mut q = 1.0;
    for _ in 0..n {
        q = 1.0 - (1.0 + (1.0 - q) * (1.0 - q)) / 2.0;
    }
    let p = estimate_survival(&a, &[0.0; 3], n, 200_000, &laws, &Seeder::new(1), &SimOptions::default()).unwrap();
    assert!((p.value() - q).abs() < 4.0 * p.se, "{} vs {q}", p.value());
    let far = estimate_survival(&a, &[5.0, 0.0, 0.0], n, 1000, &laws, &Seeder::new(1), &SimOptions::default()).unwrap();
    assert_eq!(far.value(), 0.0);
}

#[test]
fn survival_at_horizon_zero_is_an_indicator() {
    let laws = Laws::binary_gaussian(3).unwrap();
    let a = Ball::centered(3, 1.0);
    let s = Seeder::new(2);
    let opts = SimOptions::default();
    assert_eq!(estimate_survival(&a, &[0.5, 0.0, 0.0], 0, 100, &laws, &s, &opts).unwrap().value(), 1.0);
    assert_eq!(estimate_survival(&a, &[1.5, 0.0, 0.0], 0, 100, &laws, &s, &opts).unwrap().value(), 0.0);
}

#[test]
fn sandwich_holds_for_the_lazy_walk() {
    let laws = Laws::new(OffspringLaw::binary(), MotionLaw::lazy_walk(3)).unwrap();
    let out = sandwich_check(&Ball::centered(3, 2.0), &[0.0; 3], 12, 50_000, &laws, &Seeder::new(3), false, &SimOptions::default())
        .unwrap();
    assert!(out.pass);
    assert!(out.lower <= out.p_hat.upper() && out.p_hat.lower() <= out.upper);
    assert!(out.constant > 1.0);
}

#[test]
fn backward_estimate_sits_between_lower_bounds_and_volume() {
    let laws = Laws::binary_gaussian(3).unwrap();
    let a = Ball::centered(3, 1.0);
    let params = BackwardTreeParams { trials: 4000, ..Default::default() };
    let est = estimate_i(&a, &[TestFunction::zero(a.clone())], &params, &laws, &Seeder::new(4)).unwrap();
    let r = &est.results[0];
    let slack = 4.0 * r.se + r.total_bias_bound();
    let quad = quadrature_lower_bound_i(1.0, laws.sigma2(), 3, 2000, 40).unwrap();
    let jensen = jensen_lower_bound(&a, &laws).unwrap();
    assert!(quad <= r.value() + slack, "{quad} vs {}", r.value());
    assert!(jensen <= r.value() + slack, "{jensen} vs {}", r.value());
    assert!(r.value() <= a.volume() + slack);
}
