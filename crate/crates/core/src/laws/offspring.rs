//! Critical offspring laws, their size-biased companions and the exact
//! generating-function recursion for extinction probabilities.

use crate::error::{Error, Result};
use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

/// Tolerance for the normalization and criticality invariants.
pub const LAW_TOL: f64 = 1e-12;

/// Default table cutoff for heavy-tailed laws; mass beyond it is handled analytically.
pub const DEFAULT_K_MAX: usize = 1_000_000;

/// Largest count ever returned by a tail draw.
const COUNT_CEILING: f64 = 4.5e15;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Family {
    /// Arbitrary finite table.
    Table,
    /// Generating function `s + (1 - s)^(1 + beta) / 2`.
    Beta { beta: f64 },
}

/// Closed-form survival function `P(N > k)` beyond the table.
#[derive(Clone, Copy, Debug, PartialEq)]
enum Tail {
    None,
    /// `P(N > k) = beta/2 * Gamma(k - beta) / (Gamma(1 - beta) Gamma(k + 1))`.
    Beta { beta: f64 },
    /// Size-biased version: `(1 + beta)/2 * Gamma(k - beta) / (Gamma(1 - beta) Gamma(k))`.
    BetaSizeBiased { beta: f64 },
}

impl Tail {
    fn survival(&self, k: f64) -> f64 {
        match *self {
            Tail::None => 0.0,
            Tail::Beta { beta } => {
                0.5 * beta * (ln_gamma(k - beta) - ln_gamma(1.0 - beta) - ln_gamma(k + 1.0)).exp()
            }
            Tail::BetaSizeBiased { beta } => {
                0.5 * (1.0 + beta) * (ln_gamma(k - beta) - ln_gamma(1.0 - beta) - ln_gamma(k)).exp()
            }
        }
    }

    /// `P(N = k)` for `k >= 2`, from the survival function one step back.
    fn point(&self, k: f64) -> f64 {
        match *self {
            Tail::None => 0.0,
            Tail::Beta { beta } => self.survival(k - 1.0) * (1.0 + beta) / k,
            Tail::BetaSizeBiased { beta } => self.survival(k - 1.0) * beta / (k - 1.0),
        }
    }

    /// Smallest `k > k_max` with `P(N > k) < v`, for `0 < v <= P(N > k_max)`.
    fn invert(&self, k_max: usize, v: f64) -> u64 {
        let mut lo = k_max as f64; // survival(lo) >= v
        let mut hi = (2.0 * lo).max(2.0);
        while self.survival(hi) >= v {
            lo = hi;
            hi *= 2.0;
            if hi > COUNT_CEILING {
                return COUNT_CEILING as u64;
            }
        }
        while hi - lo > 1.0 {
            let mid = ((lo + hi) / 2.0).floor();
            if self.survival(mid) >= v {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        hi as u64
    }
}

/// A probability table on `0..=k_max` plus an optional analytic tail.
#[derive(Clone, Debug, PartialEq)]
struct DiscreteTable {
    pmf: Vec<f64>,
    cdf: Vec<f64>,
    tail: Tail,
    tail_mass: f64,
}

impl DiscreteTable {
    fn from_pmf(pmf: Vec<f64>) -> Self {
        let mut cdf = Vec::with_capacity(pmf.len());
        let mut acc = 0.0;
        for p in &pmf {
            acc += p;
            cdf.push(acc);
        }
        DiscreteTable {
            pmf,
            cdf,
            tail: Tail::None,
            tail_mass: 0.0,
        }
    }

    fn k_max(&self) -> usize {
        self.pmf.len() - 1
    }

    fn prob(&self, k: usize) -> f64 {
        if k < self.pmf.len() {
            self.pmf[k]
        } else {
            self.tail.point(k as f64)
        }
    }

    fn total_mass(&self) -> f64 {
        self.cdf.last().copied().unwrap_or(0.0) + self.tail_mass
    }

    #[inline]
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        let u: f64 = rng.random::<f64>() * self.total_mass();
        if u < self.cdf[0] {
            return 0;
        }
        let last = *self.cdf.last().unwrap();
        if u < last {
            return self.cdf.partition_point(|&c| c <= u) as u64;
        }
        if self.tail_mass == 0.0 {
            // rounding at the top of the table
            return self.cdf.iter().rposition(|&c| c < last).map_or(0, |i| i + 1) as u64;
        }
        let v = self.tail_mass * (1.0 - rng.random::<f64>());
        self.tail.invert(self.k_max(), v)
    }
}

/// Reproduction law `mu` of the branching process.
#[derive(Clone, Debug, PartialEq)]
pub struct OffspringLaw {
    table: DiscreteTable,
    family: Family,
    mean: f64,
    variance: f64,
}

impl OffspringLaw {
    /// Build a critical law from a finite table. Validates normalization and
    /// criticality to `LAW_TOL`.
    pub fn from_pmf(pmf: Vec<f64>) -> Result<Self> {
        let law = Self::from_pmf_any_mean(pmf)?;
        if (law.mean - 1.0).abs() > LAW_TOL {
            return Err(Error::Invariant(format!(
                "offspring law must be critical, mean is {}",
                law.mean
            )));
        }
        Ok(law)
    }

    /// Build a law from a finite table without the criticality check. Only
    /// meant for negative controls (super- or subcritical stubs).
    pub fn from_pmf_any_mean(pmf: Vec<f64>) -> Result<Self> {
        if pmf.is_empty() {
            return Err(Error::Domain("empty offspring table".into()));
        }
        if pmf.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::Domain("offspring probabilities must be finite and non-negative".into()));
        }
        let total: f64 = pmf.iter().sum();
        if (total - 1.0).abs() > LAW_TOL {
            return Err(Error::Invariant(format!("offspring probabilities sum to {total}")));
        }
        let mean: f64 = pmf.iter().enumerate().map(|(k, p)| k as f64 * p).sum();
        let second: f64 = pmf.iter().enumerate().map(|(k, p)| (k * k) as f64 * p).sum();
        Ok(OffspringLaw {
            table: DiscreteTable::from_pmf(pmf),
            family: Family::Table,
            mean,
            variance: second - mean * mean,
        })
    }

    /// Critical binary branching: zero or two children with probability 1/2.
    pub fn binary() -> Self {
        Self::from_pmf(vec![0.5, 0.0, 0.5]).expect("binary law is valid")
    }

    /// Deterministic offspring count. Non-critical unless `k == 1`; test stub.
    pub fn deterministic(k: usize) -> Self {
        let mut pmf = vec![0.0; k + 1];
        pmf[k] = 1.0;
        Self::from_pmf_any_mean(pmf).expect("point mass is valid")
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Offspring variance; `+inf` for the heavy-tailed family.
    pub fn variance(&self) -> f64 {
        self.variance
    }

    pub fn is_critical(&self) -> bool {
        (self.mean - 1.0).abs() <= LAW_TOL
    }

    /// Tail index `beta`: finite-variance laws report 1.
    pub fn tail_index(&self) -> f64 {
        match self.family {
            Family::Beta { beta } => beta,
            Family::Table => 1.0,
        }
    }

    pub fn prob(&self, k: usize) -> f64 {
        self.table.prob(k)
    }

    /// Tabulated probabilities `mu(0..=k_max)`.
    pub fn table(&self) -> &[f64] {
        &self.table.pmf
    }

    /// Probability mass beyond the table.
    pub fn tail_mass(&self) -> f64 {
        self.table.tail_mass
    }

    pub fn k_max(&self) -> usize {
        self.table.k_max()
    }

    /// `E[N^p]`; the heavy-tail contribution beyond the table uses the
    /// asymptotic `mu(k) ~ C k^(-2-beta)`. Infinite when `p >= 1 + beta`.
    pub fn moment(&self, p: f64) -> f64 {
        let head: f64 = self
            .table
            .pmf
            .iter()
            .enumerate()
            .map(|(k, q)| if k == 0 { 0.0 } else { (k as f64).powf(p) * q })
            .sum();
        match self.family {
            Family::Table => head,
            Family::Beta { beta } if beta >= 1.0 => head,
            Family::Beta { beta } => {
                if p >= 1.0 + beta {
                    return f64::INFINITY;
                }
                // mu(k) ~ beta (1 + beta) / (2 Gamma(1 - beta)) k^(-2 - beta)
                let c = beta * (1.0 + beta) / (2.0 * statrs::function::gamma::gamma(1.0 - beta));
                let k = self.k_max() as f64 + 0.5;
                head + c * k.powf(p - 1.0 - beta) / (1.0 + beta - p)
            }
        }
    }

    /// Generating function `f(s) = E[s^N]`.
    pub fn pgf(&self, s: f64) -> f64 {
        match self.family {
            Family::Beta { beta } if beta < 1.0 => s + 0.5 * (1.0 - s).powf(1.0 + beta),
            _ => self.table.pmf.iter().rev().fold(0.0, |acc, p| acc * s + p),
        }
    }

    /// `1 - f(1 - u)`: maps the survival probability over `m` generations to
    /// the one over `m + 1`. Evaluated without cancellation.
    pub fn survival_map(&self, u: f64) -> f64 {
        match self.family {
            Family::Beta { beta } if beta < 1.0 => u - 0.5 * u.powf(1.0 + beta),
            _ => {
                let log_q = (-u).ln_1p();
                self.table
                    .pmf
                    .iter()
                    .enumerate()
                    .skip(1)
                    .map(|(k, p)| {
                        if u >= 1.0 {
                            *p
                        } else {
                            -p * (k as f64 * log_q).exp_m1()
                        }
                    })
                    .sum()
            }
        }
    }

    /// `P(Z_m > 0)` for `m = 0..=n`, by iterating the generating function.
    pub fn survival_probabilities(&self, n: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(n + 1);
        let mut u = 1.0;
        out.push(u);
        for _ in 0..n {
            u = self.survival_map(u);
            out.push(u);
        }
        out
    }

    #[inline]
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        self.table.sample(rng)
    }

    /// Size-biased law normalized by the mean; defined for non-critical laws too.
    pub(crate) fn size_biased_normalized(&self) -> SizeBiasedLaw {
        let pmf: Vec<f64> = self
            .table
            .pmf
            .iter()
            .enumerate()
            .map(|(k, p)| k as f64 * p / self.mean)
            .collect();
        let mut table = DiscreteTable::from_pmf(pmf);
        if let (Family::Beta { beta }, Tail::Beta { .. }) = (self.family, self.table.tail) {
            table.tail = Tail::BetaSizeBiased { beta };
            table.tail_mass = table.tail.survival(table.k_max() as f64);
        }
        SizeBiasedLaw { table }
    }
}

/// Size-biased law `nu(k) = k mu(k)`.
#[derive(Clone, Debug, PartialEq)]
pub struct SizeBiasedLaw {
    table: DiscreteTable,
}

impl SizeBiasedLaw {
    pub fn prob(&self, k: usize) -> f64 {
        self.table.prob(k)
    }

    pub fn table(&self) -> &[f64] {
        &self.table.pmf
    }

    pub fn tail_mass(&self) -> f64 {
        self.table.tail_mass
    }

    pub fn total_mass(&self) -> f64 {
        self.table.total_mass()
    }

    #[inline]
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        self.table.sample(rng)
    }
}

/// The heavy-tailed family with generating function `s + (1 - s)^(1 + beta) / 2`,
/// tabulated up to `DEFAULT_K_MAX`.
pub fn make_beta_offspring(beta: f64) -> Result<OffspringLaw> {
    make_beta_offspring_with_cutoff(beta, DEFAULT_K_MAX)
}

/// As [`make_beta_offspring`] with an explicit table cutoff (at least 2).
pub fn make_beta_offspring_with_cutoff(beta: f64, k_max: usize) -> Result<OffspringLaw> {
    if !(beta > 0.0 && beta <= 1.0) {
        return Err(Error::Domain(format!("beta must lie in (0, 1], got {beta}")));
    }
    if beta == 1.0 {
        let mut law = OffspringLaw::binary();
        law.family = Family::Beta { beta: 1.0 };
        return Ok(law);
    }
    let k_max = k_max.max(2);
    // survival S(k) = P(N > k) obeys S(k + 1) = S(k) (k - beta) / (k + 1) for k >= 1
    // and mu(k + 1) = S(k) (1 + beta) / (k + 1).
    let mut pmf = Vec::with_capacity(k_max + 1);
    pmf.push(0.5);
    pmf.push(0.5 * (1.0 - beta));
    let mut surv = 0.5 * beta;
    for k in 1..k_max {
        let kf = k as f64;
        pmf.push(surv * (1.0 + beta) / (kf + 1.0));
        surv *= (kf - beta) / (kf + 1.0);
    }
    let mut table = DiscreteTable::from_pmf(pmf);
    table.tail = Tail::Beta { beta };
    table.tail_mass = surv;
    let law = OffspringLaw {
        table,
        family: Family::Beta { beta },
        mean: 1.0,
        variance: f64::INFINITY,
    };
    let total = law.table.total_mass();
    if (total - 1.0).abs() > LAW_TOL {
        return Err(Error::Invariant(format!("beta law mass is {total}")));
    }
    Ok(law)
}

/// `nu(k) = k mu(k)` for a critical law.
pub fn size_biased(law: &OffspringLaw) -> Result<SizeBiasedLaw> {
    if !law.is_critical() {
        return Err(Error::Invariant(format!(
            "size-biasing needs a critical law, mean is {}",
            law.mean()
        )));
    }
    Ok(law.size_biased_normalized())
}

/// Extinction probability `q_n = P(Z_n = 0)` from `q_0 = 0`, `q_{m+1} = f(q_m)`.
pub fn gw_extinction_iterate(law: &OffspringLaw, n: usize) -> f64 {
    1.0 - law.survival_probabilities(n)[n]
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn beta_one_is_binary() {
        let law = make_beta_offspring(1.0).unwrap();
        assert_eq!(law.prob(0), 0.5);
        assert_eq!(law.prob(1), 0.0);
        assert_eq!(law.prob(2), 0.5);
        assert_eq!(law.prob(3), 0.0);
        assert_eq!(law.variance(), 1.0);
    }

    #[test]
    fn beta_domain() {
        assert!(matches!(make_beta_offspring(0.0), Err(Error::Domain(_))));
        assert!(matches!(make_beta_offspring(1.5), Err(Error::Domain(_))));
        assert!(matches!(make_beta_offspring(f64::NAN), Err(Error::Domain(_))));
    }

    #[test]
    fn beta_law_matches_binomial_series() {
        // mu(k) = |coefficient of s^k in (1 - s)^(1 + beta)| / 2 for k >= 2,
        // computed here from the generalized binomial coefficient directly.
        for &beta in &[0.3, 0.5, 0.9] {
            let law = make_beta_offspring_with_cutoff(beta, 2000).unwrap();
            assert_eq!(law.prob(0), 0.5);
            assert!((law.prob(1) - (1.0 - (1.0 + beta) / 2.0)).abs() < 1e-15);
            for k in 2..40usize {
                let mut binom = 1.0;
                for j in 0..k {
                    binom *= (1.0 + beta - j as f64) / (j as f64 + 1.0);
                }
                let expected = 0.5 * binom.abs();
                assert!((law.prob(k) - expected).abs() < 1e-14 * expected.max(1e-300), "k={k}");
            }
            let mean: f64 = law.table().iter().enumerate().map(|(k, p)| k as f64 * p).sum::<f64>()
                + law.moment(1.0) * 0.0;
            // table mean plus the analytic tail mean
            let tail_mean = law.moment(1.0) - mean;
            assert!((mean + tail_mean - 1.0).abs() < 1e-3);
            assert!((law.table().iter().sum::<f64>() + law.tail_mass() - 1.0).abs() < LAW_TOL);
        }
    }

    #[test]
    fn pgf_and_survival_map_agree() {
        let law = make_beta_offspring_with_cutoff(0.5, 5000).unwrap();
        for &s in &[0.0, 0.3, 0.9, 0.999] {
            assert!((law.survival_map(1.0 - s) - (1.0 - law.pgf(s))).abs() < 1e-14);
        }
        let bin = OffspringLaw::binary();
        for &s in &[0.0, 0.5, 0.99] {
            assert!((bin.survival_map(1.0 - s) - (1.0 - bin.pgf(s))).abs() < 1e-14);
        }
    }

    #[test]
    fn extinction_iterates() {
        let law = OffspringLaw::binary();
        assert_eq!(gw_extinction_iterate(&law, 0), 0.0);
        assert!((1.0 - gw_extinction_iterate(&law, 1) - 0.5).abs() < 1e-15);
        assert!((1.0 - gw_extinction_iterate(&law, 2) - 0.375).abs() < 1e-15);
        let s = law.survival_probabilities(10_000);
        assert!(s.windows(2).all(|w| w[1] <= w[0]));
        assert!((10_000.0 * s[10_000] - 2.0).abs() < 0.1);
    }

    #[test]
    fn size_biased_binary_and_errors() {
        let nu = size_biased(&OffspringLaw::binary()).unwrap();
        assert_eq!(nu.prob(2), 1.0);
        assert_eq!(nu.prob(0), 0.0);
        let sup = OffspringLaw::from_pmf_any_mean(vec![0.25, 0.0, 0.75]).unwrap();
        assert!(matches!(size_biased(&sup), Err(Error::Invariant(_))));
        assert!(OffspringLaw::from_pmf(vec![0.25, 0.0, 0.75]).is_err());
        assert!(OffspringLaw::from_pmf(vec![0.5, 0.0, 0.6]).is_err());
    }

    #[test]
    fn size_biased_beta_entrywise_and_tail() {
        let law = make_beta_offspring_with_cutoff(0.5, 3000).unwrap();
        let nu = size_biased(&law).unwrap();
        for k in 0..3000 {
            assert!((nu.prob(k) - k as f64 * law.prob(k)).abs() < 1e-15);
        }
        assert!((nu.total_mass() - 1.0).abs() < 1e-12);
        // analytic tail continues the table
        let k = 3001;
        assert!((nu.prob(k) - k as f64 * law.prob(k)).abs() < 1e-12 * nu.prob(k));
    }

    #[test]
    fn tail_draws_exceed_cutoff() {
        let law = make_beta_offspring_with_cutoff(0.5, 10).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 200_000;
        let big = (0..n).filter(|_| law.sample(&mut rng) > 10).count() as f64 / n as f64;
        let se = (law.tail_mass() * (1.0 - law.tail_mass()) / n as f64).sqrt();
        assert!((big - law.tail_mass()).abs() < 4.0 * se);
    }

    #[test]
    fn size_biased_draws_are_positive() {
        let law = make_beta_offspring_with_cutoff(0.5, 1000).unwrap();
        let nu = size_biased(&law).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        assert!((0..100_000).all(|_| nu.sample(&mut rng) > 0));
    }
}
