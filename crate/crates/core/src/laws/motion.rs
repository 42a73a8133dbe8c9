//! Displacement laws: standard Gaussian, finite-range symmetric lattice
//! kernels and isotropic alpha-stable laws.

use crate::error::{Error, Result};
use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use std::f64::consts::PI;

/// Symmetric finite-range kernel on `Z^d`.
#[derive(Clone, Debug, PartialEq)]
pub struct LatticeKernel {
    dim: usize,
    support: Vec<Vec<i64>>,
    probs: Vec<f64>,
    cdf: Vec<f64>,
    covariance: Vec<f64>,
    max_jump: f64,
}

impl LatticeKernel {
    /// Validates normalization, symmetry, irreducibility, aperiodicity and a
    /// positive definite covariance.
    pub fn new(support: Vec<Vec<i64>>, probs: Vec<f64>) -> Result<Self> {
        let k = Self::build(support, probs)?;
        if !k.is_symmetric() {
            return Err(Error::Invariant("lattice kernel must satisfy p(-x) = p(x)".into()));
        }
        if !k.generates_lattice() {
            return Err(Error::Invariant("lattice kernel support does not generate Z^d".into()));
        }
        if !k.is_aperiodic() {
            return Err(Error::Invariant(
                "lattice kernel is periodic; add holding mass or an odd loop".into(),
            ));
        }
        if cholesky(&k.covariance, k.dim).is_none() {
            return Err(Error::Invariant("lattice kernel covariance is not positive definite".into()));
        }
        Ok(k)
    }

    /// Only checks normalization. Negative controls use this for skewed kernels.
    pub fn new_unchecked(support: Vec<Vec<i64>>, probs: Vec<f64>) -> Result<Self> {
        Self::build(support, probs)
    }

    fn build(support: Vec<Vec<i64>>, probs: Vec<f64>) -> Result<Self> {
        if support.is_empty() || support.len() != probs.len() {
            return Err(Error::Domain("lattice support and probabilities must have equal, positive length".into()));
        }
        let dim = support[0].len();
        if dim == 0 || support.iter().any(|x| x.len() != dim) {
            return Err(Error::Domain("lattice support points must share one positive dimension".into()));
        }
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::Domain("lattice probabilities must be finite and non-negative".into()));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::Invariant(format!("lattice probabilities sum to {total}")));
        }
        let mut cdf = Vec::with_capacity(probs.len());
        let mut acc = 0.0;
        for p in &probs {
            acc += p;
            cdf.push(acc);
        }
        let mut covariance = vec![0.0; dim * dim];
        let mut max_jump: f64 = 0.0;
        for (x, p) in support.iter().zip(&probs) {
            for i in 0..dim {
                for j in 0..dim {
                    covariance[i * dim + j] += p * (x[i] * x[j]) as f64;
                }
            }
            if *p > 0.0 {
                max_jump = max_jump.max(x.iter().map(|c| (c * c) as f64).sum::<f64>().sqrt());
            }
        }
        Ok(LatticeKernel {
            dim,
            support,
            probs,
            cdf,
            covariance,
            max_jump,
        })
    }

    /// Hold with probability 1/2, otherwise jump to a uniform nearest neighbour.
    pub fn lazy_simple(dim: usize) -> Self {
        let mut support = vec![vec![0; dim]];
        let mut probs = vec![0.5];
        for i in 0..dim {
            for s in [1, -1] {
                let mut e = vec![0; dim];
                e[i] = s;
                support.push(e);
                probs.push(0.25 / dim as f64);
            }
        }
        Self::new(support, probs).expect("lazy walk is a valid kernel")
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn support(&self) -> &[Vec<i64>] {
        &self.support
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// Row-major `d x d` covariance matrix.
    pub fn covariance(&self) -> &[f64] {
        &self.covariance
    }

    /// Largest euclidean jump length with positive probability.
    pub fn max_jump(&self) -> f64 {
        self.max_jump
    }

    /// Largest coordinate of any jump in absolute value.
    pub fn max_coordinate(&self) -> i64 {
        self.support
            .iter()
            .zip(&self.probs)
            .filter(|(_, p)| **p > 0.0)
            .flat_map(|(x, _)| x.iter().map(|c| c.abs()))
            .max()
            .unwrap_or(0)
    }

    pub fn prob_of(&self, x: &[i64]) -> f64 {
        self.support
            .iter()
            .zip(&self.probs)
            .filter(|(s, _)| s.as_slice() == x)
            .map(|(_, p)| p)
            .sum()
    }

    pub fn is_symmetric(&self) -> bool {
        self.support.iter().zip(&self.probs).all(|(x, p)| {
            let neg: Vec<i64> = x.iter().map(|c| -c).collect();
            (self.prob_of(&neg) - p).abs() <= 1e-12 * p.max(1.0)
        })
    }

    /// The support generates `Z^d` as a group.
    pub fn generates_lattice(&self) -> bool {
        let rows: Vec<Vec<i64>> = self
            .support
            .iter()
            .zip(&self.probs)
            .filter(|(_, p)| **p > 0.0)
            .map(|(x, _)| x.clone())
            .collect();
        lattice_index(rows, self.dim) == Some(1)
    }

    /// No parity map `x -> v.x mod 2` sends every jump to 1.
    pub fn is_aperiodic(&self) -> bool {
        let jumps: Vec<&Vec<i64>> = self
            .support
            .iter()
            .zip(&self.probs)
            .filter(|(_, p)| **p > 0.0)
            .map(|(x, _)| x)
            .collect();
        (0u32..(1 << self.dim)).all(|mask| {
            !jumps.iter().all(|x| {
                let s: i64 = (0..self.dim).filter(|i| mask >> i & 1 == 1).map(|i| x[i]).sum();
                s.rem_euclid(2) == 1
            })
        })
    }

    #[inline]
    pub fn sample_index<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random::<f64>() * self.cdf[self.cdf.len() - 1];
        self.cdf.partition_point(|&c| c <= u).min(self.support.len() - 1)
    }
}

/// Index of the subgroup of `Z^d` generated by `rows`, or `None` when the
/// rank is deficient. Integer row reduction by Euclid steps.
fn lattice_index(mut rows: Vec<Vec<i64>>, dim: usize) -> Option<i64> {
    let mut det: i64 = 1;
    for col in 0..dim {
        loop {
            let mut pivot: Option<usize> = None;
            for (i, r) in rows.iter().enumerate().skip(col) {
                if r[col] != 0 && pivot.is_none_or(|p| r[col].abs() < rows[p][col].abs()) {
                    pivot = Some(i);
                }
            }
            let p = pivot?;
            rows.swap(col, p);
            let mut done = true;
            for i in col + 1..rows.len() {
                let q = rows[i][col].div_euclid(rows[col][col]);
                if q != 0 {
                    for j in 0..dim {
                        rows[i][j] -= q * rows[col][j];
                    }
                }
                if rows[i][col] != 0 {
                    done = false;
                }
            }
            if done {
                break;
            }
        }
        det *= rows[col][col].abs();
    }
    Some(det)
}

/// Lower Cholesky factor of a row-major symmetric matrix.
pub(crate) fn cholesky(a: &[f64], d: usize) -> Option<Vec<f64>> {
    let mut l = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..=i {
            let mut s = a[i * d + j];
            for k in 0..j {
                s -= l[i * d + k] * l[j * d + k];
            }
            if i == j {
                if s <= 0.0 {
                    return None;
                }
                l[i * d + i] = s.sqrt();
            } else {
                l[i * d + j] = s / l[j * d + j];
            }
        }
    }
    Some(l)
}

/// Inverse and determinant of a small symmetric positive definite matrix.
pub(crate) fn spd_inverse(a: &[f64], d: usize) -> Option<(Vec<f64>, f64)> {
    let l = cholesky(a, d)?;
    let det = (0..d).map(|i| l[i * d + i]).product::<f64>().powi(2);
    let mut inv = vec![0.0; d * d];
    for c in 0..d {
        // solve L y = e_c then L^T x = y
        let mut y = vec![0.0; d];
        for i in 0..d {
            let mut s = if i == c { 1.0 } else { 0.0 };
            for k in 0..i {
                s -= l[i * d + k] * y[k];
            }
            y[i] = s / l[i * d + i];
        }
        for i in (0..d).rev() {
            let mut s = y[i];
            for k in i + 1..d {
                s -= l[k * d + i] * inv[k * d + c];
            }
            inv[i * d + c] = s / l[i * d + i];
        }
    }
    Some((inv, det))
}

/// Law `P` of one displacement.
#[derive(Clone, Debug, PartialEq)]
pub enum MotionLaw {
    /// Standard Gaussian, covariance the identity.
    Gaussian { dim: usize },
    Lattice(LatticeKernel),
    /// Characteristic function `exp(-|y|^alpha)`.
    Stable { alpha: f64, dim: usize },
    /// No displacement. Test stub.
    Still { dim: usize },
}

impl MotionLaw {
    pub fn gaussian(dim: usize) -> Self {
        MotionLaw::Gaussian { dim }
    }

    pub fn stable(alpha: f64, dim: usize) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 2.0) {
            return Err(Error::Domain(format!("stable index must lie in (0, 2), got {alpha}")));
        }
        Ok(MotionLaw::Stable { alpha, dim })
    }

    pub fn lazy_walk(dim: usize) -> Self {
        MotionLaw::Lattice(LatticeKernel::lazy_simple(dim))
    }

    pub fn dim(&self) -> usize {
        match self {
            MotionLaw::Gaussian { dim } | MotionLaw::Stable { dim, .. } | MotionLaw::Still { dim } => *dim,
            MotionLaw::Lattice(k) => k.dim(),
        }
    }

    pub fn is_lattice(&self) -> bool {
        matches!(self, MotionLaw::Lattice(_))
    }

    /// Stable index: 2 for the finite-variance laws.
    pub fn alpha(&self) -> f64 {
        match self {
            MotionLaw::Stable { alpha, .. } => *alpha,
            _ => 2.0,
        }
    }

    /// Typical displacement after `n` steps: `sqrt(n)` times the largest
    /// standard deviation, or `n^(1/alpha)`.
    pub fn scale(&self, n: usize) -> f64 {
        let n = n as f64;
        match self {
            MotionLaw::Gaussian { .. } => n.sqrt(),
            MotionLaw::Lattice(k) => {
                let d = k.dim();
                let top = (0..d).map(|i| k.covariance()[i * d + i]).fold(0.0, f64::max);
                (n * top).sqrt()
            }
            MotionLaw::Stable { alpha, .. } => n.powf(1.0 / alpha),
            MotionLaw::Still { .. } => 0.0,
        }
    }

    /// Exact bound on the distance covered in `n` steps, when one exists.
    pub fn exact_reach(&self, n: usize) -> Option<f64> {
        match self {
            MotionLaw::Lattice(k) => Some(k.max_jump() * n as f64),
            MotionLaw::Still { .. } => Some(0.0),
            _ => None,
        }
    }

    /// Covariance (row-major) when finite.
    pub fn covariance(&self) -> Option<Vec<f64>> {
        let d = self.dim();
        match self {
            MotionLaw::Gaussian { .. } => {
                let mut c = vec![0.0; d * d];
                for i in 0..d {
                    c[i * d + i] = 1.0;
                }
                Some(c)
            }
            MotionLaw::Lattice(k) => Some(k.covariance().to_vec()),
            MotionLaw::Still { .. } => Some(vec![0.0; d * d]),
            MotionLaw::Stable { .. } => None,
        }
    }

    /// Add one displacement to `pos` in place.
    #[inline]
    pub fn add_step<R: Rng + ?Sized>(&self, rng: &mut R, pos: &mut [f64]) {
        match self {
            MotionLaw::Gaussian { .. } => {
                for x in pos.iter_mut() {
                    let z: f64 = StandardNormal.sample(rng);
                    *x += z;
                }
            }
            MotionLaw::Lattice(k) => {
                let jump = &k.support[k.sample_index(rng)];
                for (x, j) in pos.iter_mut().zip(jump) {
                    *x += *j as f64;
                }
            }
            MotionLaw::Stable { alpha, .. } => {
                let s = (2.0 * positive_stable(alpha / 2.0, rng)).sqrt();
                for x in pos.iter_mut() {
                    let z: f64 = StandardNormal.sample(rng);
                    *x += s * z;
                }
            }
            MotionLaw::Still { .. } => {}
        }
    }

    pub fn sample_step<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let mut v = vec![0.0; self.dim()];
        self.add_step(rng, &mut v);
        v
    }
}

/// Positive `a`-stable variable with Laplace transform `exp(-lambda^a)`,
/// `0 < a < 1`, by Kanter's representation of the Chambers-Mallows-Stuck method.
#[inline]
pub fn positive_stable<R: Rng + ?Sized>(a: f64, rng: &mut R) -> f64 {
    let u = PI * (1.0 - rng.random::<f64>()); // (0, pi]
    let u = if u >= PI { PI * 0.5 } else { u };
    let e: f64 = Exp1.sample(rng);
    let left = (a * u).sin() / u.sin().powf(1.0 / a);
    let right = (((1.0 - a) * u).sin() / e).powf((1.0 - a) / a);
    left * right
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn lazy_walk_is_valid_and_plain_walk_is_periodic() {
        let k = LatticeKernel::lazy_simple(3);
        assert!(k.is_symmetric() && k.is_aperiodic() && k.generates_lattice());
        assert_eq!(k.max_jump(), 1.0);
        for i in 0..3 {
            assert!((k.covariance()[i * 3 + i] - 1.0 / 6.0).abs() < 1e-15);
        }
        let mut support = Vec::new();
        for i in 0..3 {
            for s in [1, -1] {
                let mut e = vec![0; 3];
                e[i] = s;
                support.push(e);
            }
        }
        let err = LatticeKernel::new(support, vec![1.0 / 6.0; 6]).unwrap_err();
        assert!(err.to_string().contains("periodic"));
    }

    #[test]
    fn rejects_asymmetric_and_sublattice_kernels() {
        let asym = LatticeKernel::new(vec![vec![0], vec![1], vec![-1]], vec![0.5, 0.3, 0.2]);
        assert!(asym.is_err());
        let even = LatticeKernel::new(vec![vec![0], vec![2], vec![-2]], vec![0.5, 0.25, 0.25]);
        assert!(even.unwrap_err().to_string().contains("generate"));
        assert!(LatticeKernel::new_unchecked(vec![vec![0], vec![1], vec![-1]], vec![0.5, 0.3, 0.2]).is_ok());
    }

    #[test]
    fn lattice_index_examples() {
        assert_eq!(lattice_index(vec![vec![2, 0], vec![0, 1]], 2), Some(2));
        assert_eq!(lattice_index(vec![vec![2, 1], vec![3, 1]], 2), Some(1));
        assert_eq!(lattice_index(vec![vec![1, 1], vec![2, 2]], 2), None);
    }

    #[test]
    fn spd_inverse_roundtrip() {
        let a = [4.0, 1.0, 0.5, 1.0, 3.0, 0.2, 0.5, 0.2, 2.0];
        let (inv, det) = spd_inverse(&a, 3).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let s: f64 = (0..3).map(|k| a[i * 3 + k] * inv[k * 3 + j]).sum();
                assert!((s - if i == j { 1.0 } else { 0.0 }).abs() < 1e-12);
            }
        }
        let expect = 4.0 * (6.0 - 0.04) - 1.0 * (2.0 - 0.1) + 0.5 * (0.2 - 1.5);
        assert!((det - expect).abs() < 1e-12);
    }

    #[test]
    fn half_stable_matches_levy_law() {
        // exp(-sqrt(lambda)) is the Laplace transform of 1/(2 G^2), G standard normal,
        // so P(A <= t) = erfc(1 / (2 sqrt(t))).
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 200_000;
        for &t in &[0.05, 0.3, 2.0, 20.0] {
            let hits = (0..n).filter(|_| positive_stable(0.5, &mut rng) <= t).count() as f64 / n as f64;
            let exact = statrs::function::erf::erfc(1.0 / (2.0 * f64::sqrt(t)));
            let se = (exact * (1.0 - exact) / n as f64).sqrt();
            assert!((hits - exact).abs() < 4.0 * se, "t={t} {hits} {exact}");
        }
    }

    #[test]
    fn gaussian_and_lazy_steps_are_centered() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for law in [MotionLaw::gaussian(3), MotionLaw::lazy_walk(3)] {
            let n = 100_000;
            let mut sum = [0.0; 3];
            for _ in 0..n {
                let s = law.sample_step(&mut rng);
                for i in 0..3 {
                    sum[i] += s[i];
                }
            }
            let var = law.covariance().unwrap()[0];
            for s in sum {
                assert!((s / n as f64).abs() < 4.0 * (var / n as f64).sqrt());
            }
        }
    }
}
