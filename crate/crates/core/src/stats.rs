//! Small statistical toolkit: streaming moments, intervals, two-sample tests.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

/// Two-sided normal quantile for a confidence level, e.g. 0.999 -> 3.29.
pub fn z_for_level(level: f64) -> f64 {
    let n = Normal::new(0.0, 1.0).expect("standard normal");
    n.inverse_cdf(1.0 - (1.0 - level) / 2.0)
}

pub fn normal_cdf(x: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(-x / std::f64::consts::SQRT_2)
}

pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Welford accumulator; mergeable so chunked reductions stay exact.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub n: u64,
    pub mean: f64,
    m2: f64,
}

impl Moments {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let delta = x - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (x - self.mean);
    }

    /// Add `count` copies of the value zero at once.
    pub fn push_zeros(&mut self, count: u64) {
        if count == 0 {
            return;
        }
        let other = Moments {
            n: count,
            mean: 0.0,
            m2: 0.0,
        };
        self.merge(&other);
    }

    pub fn merge(&mut self, other: &Moments) {
        if other.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = *other;
            return;
        }
        let n = self.n + other.n;
        let delta = other.mean - self.mean;
        let mean = self.mean + delta * other.n as f64 / n as f64;
        let m2 = self.m2 + other.m2 + delta * delta * (self.n as f64 * other.n as f64) / n as f64;
        *self = Moments { n, mean, m2 };
    }

    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            (self.m2 / (self.n - 1) as f64).max(0.0)
        }
    }

    pub fn std_error(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            (self.variance() / self.n as f64).sqrt()
        }
    }

    pub fn from_slice(xs: &[f64]) -> Moments {
        let mut m = Moments::default();
        for &x in xs {
            m.push(x);
        }
        m
    }
}

/// Sample covariance of paired observations divided by `n` (covariance of the two means).
pub fn mean_covariance(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    if n < 2 {
        return 0.0;
    }
    let ma = a.iter().sum::<f64>() / n as f64;
    let mb = b.iter().sum::<f64>() / n as f64;
    let c: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    c / (n as f64 - 1.0) / n as f64
}

/// Delta-method ratio `a / b` of two means, given their standard errors and
/// the covariance of the means. Returns `(ratio, se)`.
pub fn ratio_delta(a: f64, se_a: f64, b: f64, se_b: f64, cov: f64) -> (f64, f64) {
    let r = a / b;
    let var = (se_a * se_a - 2.0 * r * cov + r * r * se_b * se_b) / (b * b);
    (r, var.max(0.0).sqrt())
}

/// Wilson score interval for `k` successes out of `n`.
pub fn wilson_interval(k: u64, n: u64, level: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let z = z_for_level(level);
    let nf = n as f64;
    let p = k as f64 / nf;
    let denom = 1.0 + z * z / nf;
    let centre = (p + z * z / (2.0 * nf)) / denom;
    let half = z * (p * (1.0 - p) / nf + z * z / (4.0 * nf * nf)).sqrt() / denom;
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

/// Two-sided z-test of equal means. Returns `(z, p_value)`.
pub fn z_test(a: f64, se_a: f64, b: f64, se_b: f64) -> (f64, f64) {
    let se = (se_a * se_a + se_b * se_b).sqrt();
    if se == 0.0 {
        return if a == b { (0.0, 1.0) } else { (f64::INFINITY, 0.0) };
    }
    let z = (a - b) / se;
    (z, 2.0 * (1.0 - normal_cdf(z.abs())))
}

/// `|a - b| <= k * sqrt(se_a^2 + se_b^2) + bias`.
pub fn within_band(a: f64, se_a: f64, b: f64, se_b: f64, k: f64, bias: f64) -> bool {
    (a - b).abs() <= k * (se_a * se_a + se_b * se_b).sqrt() + bias
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChiSquareOutcome {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
    /// Lower edge (inclusive) of each merged bin, in units of the original values.
    pub bin_edges: Vec<usize>,
}

/// Chi-square homogeneity test between two samples of small non-negative
/// integers. Adjacent values are merged until every cell has expected count
/// at least 5.
pub fn chi2_two_sample(a: &[u64], b: &[u64]) -> ChiSquareOutcome {
    let max = a.iter().chain(b).copied().max().unwrap_or(0) as usize;
    let mut ha = vec![0f64; max + 1];
    let mut hb = vec![0f64; max + 1];
    for &x in a {
        ha[x as usize] += 1.0;
    }
    for &x in b {
        hb[x as usize] += 1.0;
    }
    chi2_from_histograms(&ha, &hb)
}

pub fn chi2_from_histograms(ha: &[f64], hb: &[f64]) -> ChiSquareOutcome {
    let na: f64 = ha.iter().sum();
    let nb: f64 = hb.iter().sum();
    let total = na + nb;
    if na == 0.0 || nb == 0.0 {
        return ChiSquareOutcome {
            statistic: 0.0,
            dof: 0,
            p_value: 1.0,
            bin_edges: vec![0],
        };
    }
    let min_expected = |ca: f64, cb: f64| {
        let pooled = ca + cb;
        (pooled * na / total).min(pooled * nb / total)
    };
    // greedy merge left to right, then fold a short last bin into its neighbour
    let mut bins: Vec<(usize, f64, f64)> = Vec::new();
    let (mut start, mut ca, mut cb) = (0usize, 0.0, 0.0);
    for i in 0..ha.len().max(hb.len()) {
        ca += ha.get(i).copied().unwrap_or(0.0);
        cb += hb.get(i).copied().unwrap_or(0.0);
        if min_expected(ca, cb) >= 5.0 {
            bins.push((start, ca, cb));
            start = i + 1;
            ca = 0.0;
            cb = 0.0;
        }
    }
    if ca + cb > 0.0 {
        match bins.last_mut() {
            Some(last) => {
                last.1 += ca;
                last.2 += cb;
            }
            None => bins.push((start, ca, cb)),
        }
    }
    if bins.len() < 2 {
        return ChiSquareOutcome {
            statistic: 0.0,
            dof: 0,
            p_value: 1.0,
            bin_edges: bins.iter().map(|b| b.0).collect(),
        };
    }
    let mut stat = 0.0;
    for &(_, ca, cb) in &bins {
        let pooled = ca + cb;
        let ea = pooled * na / total;
        let eb = pooled * nb / total;
        stat += (ca - ea).powi(2) / ea + (cb - eb).powi(2) / eb;
    }
    let dof = bins.len() - 1;
    let chi = ChiSquared::new(dof as f64).expect("positive dof");
    ChiSquareOutcome {
        statistic: stat,
        dof,
        p_value: 1.0 - chi.cdf(stat),
        bin_edges: bins.iter().map(|b| b.0).collect(),
    }
}

/// Chi-square goodness of fit of observed counts against expected probabilities.
/// Cells are merged left to right until each expected count is at least 5.
pub fn chi2_goodness_of_fit(observed: &[u64], probs: &[f64]) -> ChiSquareOutcome {
    let n: f64 = observed.iter().map(|&c| c as f64).sum();
    let mut bins: Vec<(usize, f64, f64)> = Vec::new();
    let (mut start, mut o, mut e) = (0usize, 0.0, 0.0);
    for i in 0..observed.len().max(probs.len()) {
        o += observed.get(i).copied().unwrap_or(0) as f64;
        e += probs.get(i).copied().unwrap_or(0.0) * n;
        if e >= 5.0 {
            bins.push((start, o, e));
            start = i + 1;
            o = 0.0;
            e = 0.0;
        }
    }
    if o > 0.0 || e > 0.0 {
        match bins.last_mut() {
            Some(last) => {
                last.1 += o;
                last.2 += e;
            }
            None => bins.push((start, o, e)),
        }
    }
    let stat: f64 = bins
        .iter()
        .map(|&(_, o, e)| if e > 0.0 { (o - e).powi(2) / e } else { 0.0 })
        .sum();
    let dof = bins.len().saturating_sub(1);
    let p_value = if dof == 0 {
        1.0
    } else {
        1.0 - ChiSquared::new(dof as f64).expect("dof").cdf(stat)
    };
    ChiSquareOutcome {
        statistic: stat,
        dof,
        p_value,
        bin_edges: bins.iter().map(|b| b.0).collect(),
    }
}

/// Least-squares slope and intercept of `y` on `x`.
pub fn ols(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// One point of a convergence sequence.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SequencePoint {
    pub estimate: f64,
    pub lower: f64,
    pub upper: f64,
}

/// Outcome of the stabilization check along a sequence of estimates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlateauOutcome {
    pub pass: bool,
    pub overlaps: Vec<bool>,
    pub drifts: Vec<f64>,
    pub drift_limit: f64,
}

/// Stabilization: consecutive intervals overlap and every consecutive drift is
/// below `fraction` of the width of the final interval.
pub fn plateau(points: &[SequencePoint], fraction: f64) -> PlateauOutcome {
    let Some(last) = points.last() else {
        return PlateauOutcome {
            pass: false,
            overlaps: vec![],
            drifts: vec![],
            drift_limit: 0.0,
        };
    };
    let limit = fraction * (last.upper - last.lower);
    let mut overlaps = Vec::new();
    let mut drifts = Vec::new();
    for w in points.windows(2) {
        overlaps.push(w[0].lower <= w[1].upper && w[1].lower <= w[0].upper);
        drifts.push((w[1].estimate - w[0].estimate).abs());
    }
    let pass = overlaps.iter().all(|&o| o) && drifts.iter().all(|&d| d < limit);
    PlateauOutcome {
        pass,
        overlaps,
        drifts,
        drift_limit: limit,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ratio_matches_direct_propagation() {
        let (r, se) = ratio_delta(2.0, 0.1, 4.0, 0.0, 0.0);
        assert_eq!(r, 0.5);
        assert!((se - 0.025).abs() < 1e-15);
        // perfectly correlated proportional errors cancel
        let (_, se) = ratio_delta(2.0, 0.2, 4.0, 0.4, 0.08);
        assert!(se < 1e-8);
    }

    #[test]
    fn z_quantiles() {
        assert!((z_for_level(0.95) - 1.959964).abs() < 1e-5);
        assert!((z_for_level(0.999) - 3.290527).abs() < 1e-5);
    }

    #[test]
    fn moments_merge_matches_sequential() {
        let xs: Vec<f64> = (0..100).map(|i| ((i * 37) % 11) as f64).collect();
        let whole = Moments::from_slice(&xs);
        let mut a = Moments::from_slice(&xs[..30]);
        a.merge(&Moments::from_slice(&xs[30..]));
        assert_eq!(whole.n, a.n);
        assert!((whole.mean - a.mean).abs() < 1e-12);
        assert!((whole.variance() - a.variance()).abs() < 1e-10);
        let mut z = Moments::from_slice(&[1.0, 2.0]);
        z.push_zeros(2);
        let direct = Moments::from_slice(&[1.0, 2.0, 0.0, 0.0]);
        assert!((z.variance() - direct.variance()).abs() < 1e-12);
    }

    #[test]
    fn wilson_contains_point_estimate() {
        let (lo, hi) = wilson_interval(30, 100, 0.95);
        assert!(lo < 0.3 && 0.3 < hi);
        let (lo, hi) = wilson_interval(0, 100, 0.999);
        assert_eq!(lo, 0.0);
        assert!(hi > 0.0);
    }

    #[test]
    fn identical_samples_have_p_one() {
        let a: Vec<u64> = (0..500).map(|i| i % 4).collect();
        let out = chi2_two_sample(&a, &a);
        assert!(out.statistic.abs() < 1e-12);
        assert!((out.p_value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn shifted_samples_are_rejected() {
        let a: Vec<u64> = (0..2000).map(|i| i % 4).collect();
        let b: Vec<u64> = (0..2000).map(|i| i % 4 + 2).collect();
        assert!(chi2_two_sample(&a, &b).p_value < 1e-6);
    }

    #[test]
    fn plateau_rules() {
        let p = |e: f64, w: f64| SequencePoint {
            estimate: e,
            lower: e - w,
            upper: e + w,
        };
        assert!(plateau(&[p(1.0, 1.0), p(1.1, 1.0)], 0.25).pass);
        assert!(!plateau(&[p(1.0, 1.0), p(1.6, 1.0)], 0.25).pass);
        assert!(!plateau(&[p(1.0, 0.1), p(2.0, 0.1)], 0.25).pass);
    }
}
