use branchfield::branching::{SurvivalTable, TestFunction};
use branchfield::geometry::Ball;
use branchfield::laws::Laws;
use branchfield::pointfield::{
    branched_poisson_field, laplace_functional_mc, sample_poisson_field, FieldOptions, IntensityLaw, PoissonFieldSpec,
    Window, WindowShape,
};
use branchfield::rng::Seeder;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    (m, xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0))
}

#[test]
fn continuum_counts_are_poisson() {
    let w = Window::new(WindowShape::Box, 1.0, 3, false).unwrap();
    let spec = PoissonFieldSpec::constant(1.0, false);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let counts: Vec<f64> = (0..20_000).map(|_| sample_poisson_field(&spec, &w, &mut rng).len() as f64).collect();
    let (m, v) = mean_var(&counts);
    assert!((m - 8.0).abs() < 4.0 * (8.0f64 / 20_000.0).sqrt(), "{m}");
    assert!((v / m - 1.0).abs() < 0.05, "{v}");
}

#[test]
fn lattice_counts_are_poisson() {
    // sites of the box [-1, 1]^3 on Z^3: 27 of them
    let w = Window::new(WindowShape::Box, 1.0, 3, true).unwrap();
    let spec = PoissonFieldSpec::constant(2.0, true);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let counts: Vec<f64> = (0..20_000).map(|_| sample_poisson_field(&spec, &w, &mut rng).len() as f64).collect();
    let (m, v) = mean_var(&counts);
    assert!((m - 54.0).abs() < 4.0 * (54.0f64 / 20_000.0).sqrt(), "{m}");
    assert!((v / m - 1.0).abs() < 0.05, "{v}");
    let c = sample_poisson_field(&spec, &w, &mut rng);
    assert!(c.points().all(|p| p.iter().all(|x| x.fract() == 0.0 && x.abs() <= 1.0)));
}

#[test]
fn poisson_laplace_functional_matches_quadrature() {
    let a = Ball::centered(3, 1.0);
    let f = TestFunction::cone_bump(a.clone(), 2.0);
    let theta = 0.7;
    // theta * int_B (1 - exp(-2(1 - r))) dx by the midpoint rule in r
    let m = 100_000;
    let integral: f64 = (0..m)
        .map(|i| {
            let r = (i as f64 + 0.5) / m as f64;
            4.0 * std::f64::consts::PI * r * r * (1.0 - (-2.0 * (1.0 - r)).exp()) / m as f64
        })
        .sum();
    let exact = (-theta * integral).exp();
    let w = Window::new(WindowShape::Box, 1.0, 3, false).unwrap();
    let spec = PoissonFieldSpec::constant(theta, false);
    let est = laplace_functional_mc(|rng| Ok(sample_poisson_field(&spec, &w, rng)), &f, 100_000, &Seeder::new(9), "poisson").unwrap();
    assert!((est.value() - exact).abs() < 4.0 * est.se, "{} vs {exact}", est.value());
}

#[test]
fn branching_preserves_intensity() {
    let laws = Laws::binary_gaussian(3).unwrap();
    let a = Ball::centered(3, 1.0);
    let theta = 1.5;
    let n = 8;
    let table = SurvivalTable::new(&laws.offspring, n);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let reps = 3000;
    let counts: Vec<f64> = (0..reps)
        .map(|_| {
            branched_poisson_field(&IntensityLaw::Constant { theta }, n, &laws, &table, &a, &FieldOptions::default(), &mut rng)
                .unwrap()
                .config
                .count_in(&a) as f64
        })
        .collect();
    let (m, v) = mean_var(&counts);
    let target = theta * a.volume();
    assert!((m - target).abs() < 4.0 * (v / reps as f64).sqrt() + 1e-3 * target, "{m} vs {target}");
    // clustering makes the counts overdispersed
    assert!(v > m, "{v} vs {m}");
}
