use branchfield::geometry::Ball;
use branchfield::laws::motion::LatticeKernel;
use branchfield::laws::offspring::{gw_extinction_iterate, make_beta_offspring, OffspringLaw};
use branchfield::laws::oracle::{motion_ball_prob_oracle, LatticePmf};
use branchfield::laws::{Laws, MotionLaw};
use statrs::function::erf::erf;
use std::collections::HashMap;

#[test]
fn beta_one_reduces_to_binary_splitting() {
    let law = make_beta_offspring(1.0).unwrap();
    assert!((law.prob(0) - 0.5).abs() < 1e-12);
    assert!((law.prob(2) - 0.5).abs() < 1e-12);
    assert!((law.mean() - 1.0).abs() < 1e-9);
}

#[test]
fn binary_survival_by_hand() {
    // f(s) = (1 + s^2) / 2: q_1 = 1/2, q_2 = 1 - f(1/2) = 3/8
    let law = OffspringLaw::binary();
    let q = law.survival_probabilities(2);
    assert!((q[1] - 0.5).abs() < 1e-15);
    assert!((q[2] - 0.375).abs() < 1e-15);
    assert!((gw_extinction_iterate(&law, 2) - 0.625).abs() < 1e-15);
}

#[test]
fn survival_decays_like_two_over_sigma2_n() {
    let law = OffspringLaw::from_pmf(vec![0.25, 0.5, 0.25]).unwrap();
    let q = law.survival_probabilities(4000);
    let ratio = q[4000] * law.variance() * 4000.0 / 2.0;
    assert!((ratio - 1.0).abs() < 0.01, "{ratio}");
}

#[test]
fn gaussian_ball_probability_matches_chi_cdf() {
    let motion = MotionLaw::gaussian(3);
    for (n, r) in [(1usize, 1.0f64), (4, 1.5), (9, 6.0)] {
        let t = r * r / n as f64;
        let chi = erf((t / 2.0).sqrt()) - (2.0 * t / std::f64::consts::PI).sqrt() * (-t / 2.0).exp();
        let o = motion_ball_prob_oracle(&motion, n, &Ball::centered(3, r), &[0.0; 3]).unwrap();
        assert!((o.value - chi).abs() <= o.error_bound + 1e-10, "n={n} r={r}: {} vs {chi}", o.value);
    }
}

#[test]
fn lattice_pmf_matches_brute_force_convolution() {
    let kernel = LatticeKernel::lazy_simple(3);
    let mut dist: HashMap<Vec<i64>, f64> = HashMap::from([(vec![0, 0, 0], 1.0)]);
    for _ in 0..3 {
        let mut next = HashMap::new();
        for (x, p) in &dist {
            for (s, q) in kernel.support().iter().zip(kernel.probs()) {
                let y: Vec<i64> = x.iter().zip(s).map(|(a, b)| a + b).collect();
                *next.entry(y).or_insert(0.0) += p * q;
            }
        }
        dist = next;
    }
    let pmf = LatticePmf::new(&kernel, 3);
    assert!((pmf.total() - 1.0).abs() < 1e-12);
    for (x, p) in &dist {
        assert!((pmf.get(x) - p).abs() < 1e-14, "{x:?}");
    }
    assert_eq!(pmf.get(&[4, 0, 0]), 0.0);
}

#[test]
fn pairing_rules() {
    assert!(Laws::binary_gaussian(3).is_ok());
    assert!(Laws::binary_gaussian(2).is_err());
    let heavy = make_beta_offspring(0.5).unwrap();
    assert!(Laws::new(heavy.clone(), MotionLaw::gaussian(3)).is_err());
    assert!(Laws::new(heavy, MotionLaw::stable(1.0, 3).unwrap()).is_ok());
}
