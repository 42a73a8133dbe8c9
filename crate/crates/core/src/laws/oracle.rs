//! Exact and quadrature values of `P(x + S_n in A)` for the motion laws.

use super::motion::{LatticeKernel, MotionLaw};
use crate::error::{Error, Result};
use crate::geometry::{ball_volume, dist2, Ball};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};
use statrs::function::beta::beta_reg;
use statrs::function::gamma::ln_gamma;
use std::f64::consts::PI;

/// Largest horizon for which the lattice oracle convolves exactly.
pub const N_CONV_MAX: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleValue {
    pub value: f64,
    /// Absolute numerical error bound; zero for exact values.
    pub error_bound: f64,
}

/// Law of a lattice walk after `n` steps on the box `[-n R, n R]^d`.
#[derive(Clone, Debug)]
pub struct LatticePmf {
    dim: usize,
    n: usize,
    radius: i64,
    side: usize,
    data: Vec<f64>,
}

impl LatticePmf {
    pub fn new(kernel: &LatticeKernel, n: usize) -> Self {
        let dim = kernel.dim();
        let step = kernel.max_coordinate();
        let radius = step * n as i64;
        let side = (2 * radius + 1) as usize;
        let len = side.pow(dim as u32);
        let strides: Vec<usize> = (0..dim).map(|i| side.pow(i as u32)).collect();
        let offset = |x: &[i64]| -> isize {
            x.iter().zip(&strides).map(|(c, s)| *c as isize * *s as isize).sum()
        };
        let center: usize = strides.iter().map(|s| s * radius as usize).sum();
        let jumps: Vec<(isize, f64)> = kernel
            .support()
            .iter()
            .zip(kernel.probs())
            .filter(|(_, p)| **p > 0.0)
            .map(|(x, p)| (offset(x), *p))
            .collect();
        let mut cur = vec![0.0; len];
        cur[center] = 1.0;
        let mut next = vec![0.0; len];
        let mut idx = vec![0i64; dim];
        for j in 1..=n as i64 {
            let r = step * j;
            // sub-box of radius r, iterated coordinate-wise
            for v in idx.iter_mut() {
                *v = -r;
            }
            loop {
                let pos = (center as isize + offset(&idx)) as usize;
                let mut acc = 0.0;
                for &(off, p) in &jumps {
                    let src = pos as isize - off;
                    // sources outside the previous support hold zero mass
                    if src >= 0 && (src as usize) < len {
                        acc += p * cur[src as usize];
                    }
                }
                next[pos] = acc;
                let mut i = 0;
                loop {
                    if i == dim {
                        break;
                    }
                    idx[i] += 1;
                    if idx[i] <= r {
                        break;
                    }
                    idx[i] = -r;
                    i += 1;
                }
                if i == dim {
                    break;
                }
            }
            std::mem::swap(&mut cur, &mut next);
        }
        LatticePmf {
            dim,
            n,
            radius,
            side,
            data: cur,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn radius(&self) -> i64 {
        self.radius
    }

    /// `P(S_n = x)`.
    pub fn get(&self, x: &[i64]) -> f64 {
        if x.iter().any(|c| c.abs() > self.radius) {
            return 0.0;
        }
        let mut pos = 0usize;
        let mut stride = 1usize;
        for c in x {
            pos += (c + self.radius) as usize * stride;
            stride *= self.side;
        }
        self.data[pos]
    }

    /// All sites of the box with their probabilities (zeros included).
    pub fn sites(&self) -> impl Iterator<Item = (Vec<i64>, f64)> + '_ {
        let side = self.side;
        let r = self.radius;
        let dim = self.dim;
        self.data.iter().enumerate().map(move |(mut pos, p)| {
            let mut x = vec![0i64; dim];
            for c in x.iter_mut() {
                *c = (pos % side) as i64 - r;
                pos /= side;
            }
            (x, *p)
        })
    }

    pub fn total(&self) -> f64 {
        self.data.iter().sum()
    }
}

/// Adaptive Simpson quadrature returning `(value, error estimate)`.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> (f64, f64) {
    fn rec<F: Fn(f64) -> f64>(
        f: &F,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> (f64, f64) {
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = f(lm);
        let frm = f(rm);
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return (left + right + delta / 15.0, delta.abs() / 15.0);
        }
        let (l, el) = rec(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1);
        let (r, er) = rec(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1);
        (l + r, el + er)
    }
    if b <= a {
        return (0.0, 0.0);
    }
    let fa = f(a);
    let fb = f(b);
    let fm = f(0.5 * (a + b));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    rec(f, a, b, fa, fm, fb, whole, tol, 40)
}

/// Fraction of the sphere of radius `t` (centered at the origin) inside a
/// ball of radius `rho` whose center lies at distance `m` from the origin.
pub fn sphere_fraction_in_ball(d: usize, t: f64, m: f64, rho: f64) -> f64 {
    if m == 0.0 || t == 0.0 {
        return if t * t <= rho * rho - 2.0 * t * m + m * m + 1e-300 && t <= rho + m { 1.0 } else { 0.0 };
    }
    let c0 = (t * t + m * m - rho * rho) / (2.0 * t * m);
    if c0 <= -1.0 {
        return 1.0;
    }
    if c0 >= 1.0 {
        return 0.0;
    }
    let cap = 0.5 * beta_reg((d as f64 - 1.0) / 2.0, 0.5, 1.0 - c0 * c0);
    if c0 >= 0.0 {
        cap
    } else {
        1.0 - cap
    }
}

/// `P(Z in B(c, rho))` for a rotation-invariant law with radial density
/// `g(|z|)` on `R^d`, where `m = |c|`.
pub fn radial_ball_prob<G: Fn(f64) -> f64>(d: usize, g: G, m: f64, rho: f64, tol: f64) -> (f64, f64) {
    let area = d as f64 * ball_volume(d, 1.0);
    let integrand = |t: f64| g(t) * area * t.powi(d as i32 - 1) * sphere_fraction_in_ball(d, t, m, rho);
    let lo = (m - rho).max(0.0);
    let kink = (rho - m).abs();
    let hi = m + rho;
    let mut value = 0.0;
    let mut err = 0.0;
    let mut edges = vec![lo];
    if kink > lo && kink < hi {
        edges.push(kink);
    }
    edges.push(hi);
    for w in edges.windows(2) {
        // extra split points keep the peaked integrand well resolved
        let pieces = 16;
        for i in 0..pieces {
            let a = w[0] + (w[1] - w[0]) * i as f64 / pieces as f64;
            let b = w[0] + (w[1] - w[0]) * (i + 1) as f64 / pieces as f64;
            let (v, e) = adaptive_simpson(&integrand, a, b, tol / pieces as f64);
            value += v;
            err += e;
        }
    }
    (value, err)
}

/// Density of the standard isotropic Cauchy law on `R^d` at radius `r`.
pub fn cauchy_density(d: usize, r: f64) -> f64 {
    let h = (d as f64 + 1.0) / 2.0;
    (ln_gamma(h) - h * PI.ln()).exp() * (1.0 + r * r).powf(-h)
}

/// `P(|N(0, s2 I) - c| <= rho)` with `|c| = m`.
pub fn gaussian_ball_prob(d: usize, s2: f64, m: f64, rho: f64) -> OracleValue {
    if s2 == 0.0 {
        return OracleValue {
            value: if m <= rho { 1.0 } else { 0.0 },
            error_bound: 0.0,
        };
    }
    if m == 0.0 {
        let chi = ChiSquared::new(d as f64).expect("positive dof");
        return OracleValue {
            value: chi.cdf(rho * rho / s2),
            error_bound: 1e-14,
        };
    }
    let norm = (2.0 * PI * s2).powf(-(d as f64) / 2.0);
    let (value, err) = radial_ball_prob(d, |t| norm * (-t * t / (2.0 * s2)).exp(), m, rho, 1e-13);
    OracleValue {
        value,
        error_bound: err + 1e-13,
    }
}

/// `P(x + S_n in A)` for the walk with increments `motion`.
///
/// Gaussian: any `n`. Lattice: `n <= N_CONV_MAX`, exact convolution.
/// Stable: `alpha = 1` only, radial quadrature of the Cauchy density.
pub fn motion_ball_prob_oracle(motion: &MotionLaw, n: usize, a: &Ball, x: &[f64]) -> Result<OracleValue> {
    let m = dist2(&a.center, x).sqrt();
    if n == 0 || matches!(motion, MotionLaw::Still { .. }) {
        return Ok(OracleValue {
            value: if m <= a.radius { 1.0 } else { 0.0 },
            error_bound: 0.0,
        });
    }
    match motion {
        MotionLaw::Gaussian { dim } => Ok(gaussian_ball_prob(*dim, n as f64, m, a.radius)),
        MotionLaw::Lattice(k) => {
            if n > N_CONV_MAX {
                return Err(Error::NoOracle(format!(
                    "exact convolution supports n <= {N_CONV_MAX}, got n = {n}"
                )));
            }
            let pmf = LatticePmf::new(k, n);
            Ok(OracleValue {
                value: lattice_ball_mass(&pmf, a, x),
                error_bound: 0.0,
            })
        }
        MotionLaw::Stable { alpha, dim } => {
            if *alpha != 1.0 {
                return Err(Error::NoOracle(format!(
                    "closed-form stable density only for alpha = 1, got {alpha}"
                )));
            }
            let nf = n as f64;
            let d = *dim;
            let (value, err) = radial_ball_prob(d, |t| nf.powi(-(d as i32)) * cauchy_density(d, t / nf), m, a.radius, 1e-13);
            Ok(OracleValue {
                value,
                error_bound: err + 1e-13,
            })
        }
        MotionLaw::Still { .. } => unreachable!(),
    }
}

/// `P(x + S_n in A)` from a tabulated lattice law.
pub fn lattice_ball_mass(pmf: &LatticePmf, a: &Ball, x: &[f64]) -> f64 {
    a.shifted_by_neg(x)
        .lattice_points()
        .iter()
        .map(|z| pmf.get(z))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::{normal_cdf, normal_pdf};

    /// Closed form for d = 3.
    fn gauss3(m: f64, rho: f64) -> f64 {
        normal_cdf(rho - m) + normal_cdf(rho + m) - 1.0 - (normal_pdf(rho - m) - normal_pdf(rho + m)) / m
    }

    #[test]
    fn gaussian_quadrature_matches_closed_form() {
        for &(m, rho) in &[(0.5, 1.0), (1.0, 1.0), (3.0, 1.0), (2.0, 4.0), (0.01, 0.3)] {
            let q = gaussian_ball_prob(3, 1.0, m, rho);
            assert!((q.value - gauss3(m, rho)).abs() < 1e-10, "m={m} rho={rho}");
        }
        // scaling with the variance
        let q = gaussian_ball_prob(3, 16.0, 4.0, 4.0);
        assert!((q.value - gauss3(1.0, 1.0)).abs() < 1e-10);
        // centered case against the quadrature route
        let chi = gaussian_ball_prob(3, 2.0, 0.0, 1.5).value;
        assert!((chi - gauss3(1e-9, 1.5 / 2f64.sqrt())).abs() < 1e-7);
    }

    #[test]
    fn sphere_fraction_d3_is_linear_in_cosine() {
        let f = sphere_fraction_in_ball(3, 1.0, 1.0, 1.0);
        assert!((f - 0.25).abs() < 1e-14);
        assert_eq!(sphere_fraction_in_ball(3, 5.0, 1.0, 1.0), 0.0);
        assert_eq!(sphere_fraction_in_ball(3, 0.5, 0.2, 1.0), 1.0);
    }

    #[test]
    fn lattice_pmf_two_steps_by_hand() {
        let k = LatticeKernel::lazy_simple(3);
        let pmf = LatticePmf::new(&k, 2);
        // stay twice, or step out and back: 1/4 + 6 (1/12)^2
        assert!((pmf.get(&[0, 0, 0]) - (0.25 + 6.0 / 144.0)).abs() < 1e-15);
        assert!((pmf.get(&[1, 0, 0]) - 2.0 * 0.5 / 12.0).abs() < 1e-15);
        assert!((pmf.get(&[1, 1, 0]) - 2.0 / 144.0).abs() < 1e-15);
        assert!((pmf.total() - 1.0).abs() < 1e-14);
        let a = Ball::new(vec![0.0; 3], 0.0);
        let p = motion_ball_prob_oracle(&MotionLaw::Lattice(k.clone()), 2, &a, &[0.0; 3]).unwrap();
        assert!((p.value - (0.25 + 6.0 / 144.0)).abs() < 1e-15);
        assert!(matches!(
            motion_ball_prob_oracle(&MotionLaw::Lattice(k), 65, &a, &[0.0; 3]),
            Err(Error::NoOracle(_))
        ));
    }

    #[test]
    fn horizon_zero_is_membership() {
        let a = Ball::centered(3, 1.0);
        let lazy = MotionLaw::lazy_walk(3);
        assert_eq!(motion_ball_prob_oracle(&lazy, 0, &a, &[1.0, 0.0, 0.0]).unwrap().value, 1.0);
        assert_eq!(motion_ball_prob_oracle(&lazy, 0, &a, &[1.0, 1.0, 0.0]).unwrap().value, 0.0);
    }

    #[test]
    fn cauchy_radial_cdf_closed_form() {
        // d = 3: P(|X| <= R) = (2/pi)(atan R - R/(1 + R^2))
        let c = MotionLaw::stable(1.0, 3).unwrap();
        for &r in &[0.5, 1.0, 4.0] {
            let p = motion_ball_prob_oracle(&c, 1, &Ball::centered(3, r), &[0.0; 3]).unwrap();
            let exact = 2.0 / PI * (r.atan() - r / (1.0 + r * r));
            assert!((p.value - exact).abs() < 1e-9, "{r}");
        }
        assert!(motion_ball_prob_oracle(&MotionLaw::stable(1.5, 3).unwrap(), 1, &Ball::centered(3, 1.0), &[0.0; 3]).is_err());
    }
}
