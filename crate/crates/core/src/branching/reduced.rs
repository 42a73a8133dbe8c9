//! Exact simulation of the lineages that survive to a fixed horizon.
//!
//! A particle with `m` generations to go, conditioned to have descendants at
//! the horizon, has a conditioned number `J >= 1` of children that themselves
//! survive `m - 1` more generations. Only those children matter for the
//! population at the horizon, so extinct side branches are never simulated.
//! Draw `k` from the size-biased law and accept with probability
//! `(1 - (1 - s)^k) / (k s)`, `s = P(Z_{m-1} > 0)`; the accepted `k` has law
//! `mu(k) (1 - (1 - s)^k) / P(Z_m > 0)`. Given `k`, the first surviving child
//! has a truncated geometric index and the others survive independently.
//!
//! An optional [`Pruner`] removes particles that cannot, or can only with
//! negligible expected mass, put descendants into a target ball.

use crate::error::{Error, Result};
use crate::geometry::{ball_volume, dist2, Ball};
use crate::laws::oracle::cauchy_density;
use crate::laws::{Laws, MotionLaw, OffspringLaw};
use rand::Rng;
use rand_distr::{Binomial, Distribution};
use std::f64::consts::PI;

/// Default expected-mass threshold below which a conditioned particle is pruned.
pub const PRUNE_EPSILON: f64 = 1e-8;

/// `s[m] = P(Z_m > 0)` for one offspring law.
#[derive(Clone, Debug)]
pub struct SurvivalTable {
    s: Vec<f64>,
}

impl SurvivalTable {
    pub fn new(offspring: &OffspringLaw, n: usize) -> Self {
        SurvivalTable {
            s: offspring.survival_probabilities(n),
        }
    }

    #[inline]
    pub fn get(&self, m: usize) -> f64 {
        self.s[m]
    }

    pub fn horizon(&self) -> usize {
        self.s.len() - 1
    }
}

#[inline]
pub fn binomial<R: Rng + ?Sized>(rng: &mut R, n: u64, p: f64) -> u64 {
    if n == 0 || p <= 0.0 {
        return 0;
    }
    if p >= 1.0 {
        return n;
    }
    if n <= 24 {
        return (0..n).filter(|_| rng.random::<f64>() < p).count() as u64;
    }
    Binomial::new(n, p).expect("valid binomial").sample(rng)
}

/// Number of children surviving `m - 1` further generations, for a particle
/// known to survive `m >= 1` generations.
#[inline]
pub fn surviving_children<R: Rng + ?Sized>(laws: &Laws, table: &SurvivalTable, m: usize, rng: &mut R) -> u64 {
    let s = table.get(m - 1);
    let log_q = (-s).ln_1p();
    loop {
        let k = laws.sample_size_biased(rng);
        if k == 0 {
            continue;
        }
        if s >= 1.0 {
            // accept with probability 1/k
            if rng.random::<f64>() * (k as f64) < 1.0 {
                return k;
            }
            continue;
        }
        let none = (k as f64 * log_q).exp(); // (1 - s)^k
        let hit = 1.0 - none;
        if rng.random::<f64>() * (k as f64) * s >= hit {
            continue;
        }
        // first survivor index, truncated geometric on 1..=k
        let u: f64 = rng.random();
        let i = ((-u * hit).ln_1p() / log_q).ceil().clamp(1.0, k as f64) as u64;
        return 1 + binomial(rng, k - i, s);
    }
}

/// Drops particles whose descendants cannot reach a target ball.
#[derive(Clone, Debug)]
pub struct Pruner {
    target: Ball,
    /// Keep a particle with `m` generations to go iff its distance to the
    /// target center is at most `reach[m]`.
    reach: Vec<f64>,
    exact: bool,
    epsilon: f64,
}

impl Pruner {
    /// Reach table for the given motion up to horizon `n`. Lattice motion
    /// prunes exactly; Gaussian and Cauchy motion prune a particle when its
    /// conditioned expected number of descendants in the target is below
    /// `epsilon`; other stable laws only prune at the horizon itself.
    pub fn new(target: Ball, motion: &MotionLaw, table: &SurvivalTable, n: usize, epsilon: f64) -> Self {
        let d = target.dim();
        let r = target.radius;
        let vol = ball_volume(d, r);
        let mut reach = Vec::with_capacity(n + 1);
        let exact = matches!(motion, MotionLaw::Lattice(_) | MotionLaw::Still { .. });
        for m in 0..=n {
            let s = table.get(m);
            let mf = m as f64;
            let rho = if m == 0 {
                r
            } else {
                match motion {
                    MotionLaw::Lattice(_) | MotionLaw::Still { .. } => r + motion.exact_reach(m).unwrap(),
                    MotionLaw::Gaussian { .. } => {
                        let peak = vol * (2.0 * PI * mf).powf(-(d as f64) / 2.0) / (s * epsilon);
                        r + (2.0 * mf * peak.ln().max(0.0)).sqrt()
                    }
                    MotionLaw::Stable { alpha, .. } if *alpha == 1.0 => {
                        let peak = vol * mf.powi(-(d as i32)) * cauchy_density(d, 0.0) / (s * epsilon);
                        let t = peak.powf(2.0 / (d as f64 + 1.0)) - 1.0;
                        r + mf * t.max(0.0).sqrt()
                    }
                    MotionLaw::Stable { .. } => f64::INFINITY,
                }
            };
            reach.push(rho);
        }
        Pruner {
            target,
            reach,
            exact,
            epsilon,
        }
    }

    pub fn target(&self) -> &Ball {
        &self.target
    }

    pub fn reach(&self, m: usize) -> f64 {
        self.reach[m]
    }

    #[inline]
    pub fn prunes(&self, x: &[f64], m: usize) -> bool {
        let r = self.reach[m];
        r.is_finite() && dist2(&self.target.center, x) > r * r
    }

    /// Bound on the expected target mass lost per pruned particle.
    #[inline]
    pub fn loss_per_prune(&self, m: usize) -> f64 {
        if self.exact || m == 0 {
            0.0
        } else {
            self.epsilon
        }
    }
}

/// Pruning bookkeeping.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PruneStats {
    pub pruned: u64,
    /// Bound on the expected number of target points removed by pruning.
    pub mass_bound: f64,
}

impl PruneStats {
    pub fn merge(&mut self, other: &PruneStats) {
        self.pruned += other.pruned;
        self.mass_bound += other.mass_bound;
    }
}

/// Generation-`n` positions of a tree rooted at `root`, conditioned on
/// `Z_n > 0`. With a pruner, only particles that may reach its target are kept.
pub fn conditioned_tree<R: Rng + ?Sized>(
    laws: &Laws,
    table: &SurvivalTable,
    root: &[f64],
    n: usize,
    pruner: Option<&Pruner>,
    cap: usize,
    rng: &mut R,
    stats: &mut PruneStats,
) -> Result<Vec<f64>> {
    let mut cur = Vec::new();
    let mut next = Vec::new();
    conditioned_tree_into(laws, table, root, n, pruner, cap, rng, stats, &mut cur, &mut next)?;
    Ok(cur)
}

/// As [`conditioned_tree`], writing the result into `out` and using
/// `scratch` as working memory.
#[allow(clippy::too_many_arguments)]
pub fn conditioned_tree_into<R: Rng + ?Sized>(
    laws: &Laws,
    table: &SurvivalTable,
    root: &[f64],
    n: usize,
    pruner: Option<&Pruner>,
    cap: usize,
    rng: &mut R,
    stats: &mut PruneStats,
    out: &mut Vec<f64>,
    scratch: &mut Vec<f64>,
) -> Result<()> {
    let d = root.len();
    out.clear();
    if let Some(p) = pruner {
        if p.prunes(root, n) {
            stats.pruned += 1;
            stats.mass_bound += p.loss_per_prune(n);
            return Ok(());
        }
    }
    out.extend_from_slice(root);
    for j in 0..n {
        let m = n - j;
        scratch.clear();
        for x in out.chunks_exact(d) {
            let kids = surviving_children(laws, table, m, rng);
            for _ in 0..kids {
                let start = scratch.len();
                scratch.extend_from_slice(x);
                laws.motion.add_step(rng, &mut scratch[start..]);
                if let Some(p) = pruner {
                    if p.prunes(&scratch[start..], m - 1) {
                        scratch.truncate(start);
                        stats.pruned += 1;
                        stats.mass_bound += p.loss_per_prune(m - 1);
                    }
                }
            }
            if scratch.len() > cap * d {
                return Err(Error::BlowUp {
                    generation: j + 1,
                    population: scratch.len() / d,
                    cap,
                });
            }
        }
        std::mem::swap(out, scratch);
        if out.is_empty() {
            break;
        }
    }
    Ok(())
}

/// Generation-`n` positions of an unconditioned tree: empty with probability
/// `1 - P(Z_n > 0)`.
#[allow(clippy::too_many_arguments)]
pub fn free_tree<R: Rng + ?Sized>(
    laws: &Laws,
    table: &SurvivalTable,
    root: &[f64],
    n: usize,
    pruner: Option<&Pruner>,
    cap: usize,
    rng: &mut R,
    stats: &mut PruneStats,
) -> Result<Vec<f64>> {
    if rng.random::<f64>() >= table.get(n) {
        return Ok(Vec::new());
    }
    conditioned_tree(laws, table, root, n, pruner, cap, rng, stats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::branching::engine::{run_to_horizon, POPULATION_CAP};
    use crate::laws::make_beta_offspring_with_cutoff;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn mean_conditioned_size(laws: &Laws, n: usize, trials: usize, seed: u64) -> (f64, f64) {
        let table = SurvivalTable::new(&laws.offspring, n);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut st = PruneStats::default();
        let xs: Vec<f64> = (0..trials)
            .map(|_| {
                conditioned_tree(laws, &table, &[0.0; 3], n, None, POPULATION_CAP, &mut rng, &mut st)
                    .unwrap()
                    .len() as f64
                    / 3.0
            })
            .collect();
        let m = crate::stats::Moments::from_slice(&xs);
        (m.mean, m.std_error())
    }

    #[test]
    fn conditioned_mean_size_is_inverse_survival() {
        // E[Z_n | Z_n > 0] = 1 / P(Z_n > 0) for a critical law
        let bin = Laws::binary_gaussian(3).unwrap();
        for n in [1, 5, 20] {
            let (m, se) = mean_conditioned_size(&bin, n, 40_000, n as u64);
            let exact = 1.0 / bin.offspring.survival_probabilities(n)[n];
            assert!((m - exact).abs() <= 4.0 * se + 1e-12, "n={n} {m} {exact} {se}");
        }
    }

    #[test]
    fn conditioned_law_matches_forward_engine() {
        // distribution of Z_3 given survival, beta law, against the forward engine
        let law = make_beta_offspring_with_cutoff(0.5, 10_000).unwrap();
        let laws = Laws::unchecked(law.clone(), MotionLaw::Still { dim: 3 });
        let table = SurvivalTable::new(&law, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let bins = 8usize;
        let mut a = vec![0u64; bins];
        let mut b = vec![0u64; bins];
        let mut st = PruneStats::default();
        let mut filled = 0;
        while filled < 20_000 {
            let run = run_to_horizon(&[0.0; 3], 3, &law, &laws.motion, &mut rng).unwrap();
            let z = run.generation.len();
            if z > 0 {
                a[(z - 1).min(bins - 1)] += 1;
                filled += 1;
            }
        }
        for _ in 0..20_000 {
            let z = conditioned_tree(&laws, &table, &[0.0; 3], 3, None, POPULATION_CAP, &mut rng, &mut st)
                .unwrap()
                .len()
                / 3;
            b[(z - 1).min(bins - 1)] += 1;
        }
        let out = crate::stats::chi2_two_sample(&a, &b);
        assert!(out.p_value > 1e-3, "{out:?}");
    }

    #[test]
    fn lattice_pruning_is_exact() {
        let laws = Laws::new(OffspringLaw::binary(), MotionLaw::lazy_walk(3)).unwrap();
        let n = 6;
        let table = SurvivalTable::new(&laws.offspring, n);
        let target = Ball::new(vec![3.0, 0.0, 0.0], 1.0);
        let p = Pruner::new(target.clone(), &laws.motion, &table, n, PRUNE_EPSILON);
        assert_eq!(p.reach(n), 7.0);
        assert!(p.prunes(&[11.0, 0.0, 0.0], n));
        assert!(!p.prunes(&[10.0, 0.0, 0.0], n));
        assert_eq!(p.loss_per_prune(3), 0.0);
    }
}
