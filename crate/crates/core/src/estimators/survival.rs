use super::EstimatorResult;
use crate::branching::{binomial, conditioned_tree_into, PruneStats, Pruner, SurvivalTable, POPULATION_CAP, PRUNE_EPSILON};
use crate::error::Result;
use crate::geometry::Ball;
use crate::laws::Laws;
use crate::rng::{par_chunks, Seeder};
use crate::stats::wilson_interval;
use serde::{Deserialize, Serialize};
use serde_json::json;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimOptions {
    pub prune_epsilon: f64,
    pub cap: usize,
    /// Trials per random stream.
    pub chunk: u64,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions {
            prune_epsilon: PRUNE_EPSILON,
            cap: POPULATION_CAP,
            chunk: 1 << 16,
        }
    }
}

/// Hit counts of `{Z_n(A) >= 1}` for trees rooted at `x`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SurvivalCounts {
    pub hits: u64,
    pub trials: u64,
    pub prune: PruneStats,
}

pub fn survival_counts(
    a: &Ball,
    x: &[f64],
    n: usize,
    trials: u64,
    laws: &Laws,
    seeder: &Seeder,
    opts: &SimOptions,
) -> Result<SurvivalCounts> {
    let table = SurvivalTable::new(&laws.offspring, n);
    let pruner = Pruner::new(a.clone(), &laws.motion, &table, n, opts.prune_epsilon);
    let label = format!("survival/n={n}/x={x:?}/a={:?}/{}", a.center, a.radius);
    let s = table.get(n);
    let chunks = par_chunks(seeder, &label, trials, opts.chunk, |rng, _, len| -> Result<(u64, PruneStats)> {
        let survivors = binomial(rng, len, s);
        let mut hits = 0;
        let mut st = PruneStats::default();
        let (mut tree, mut scratch) = (Vec::new(), Vec::new());
        for _ in 0..survivors {
            // the pruner removes every horizon particle outside A
            conditioned_tree_into(laws, &table, x, n, Some(&pruner), opts.cap, rng, &mut st, &mut tree, &mut scratch)?;
            if !tree.is_empty() {
                hits += 1;
            }
        }
        Ok((hits, st))
    });
    let mut out = SurvivalCounts {
        hits: 0,
        trials,
        prune: PruneStats::default(),
    };
    for c in chunks {
        let (h, st) = c?;
        out.hits += h;
        out.prune.merge(&st);
    }
    Ok(out)
}

/// Bernoulli estimate of `P(Z_n(A - x) >= 1)` with a Wilson interval.
pub fn estimate_survival(
    a: &Ball,
    x: &[f64],
    n: usize,
    trials: u64,
    laws: &Laws,
    seeder: &Seeder,
    opts: &SimOptions,
) -> Result<EstimatorResult> {
    let c = survival_counts(a, x, n, trials, laws, seeder, opts)?;
    Ok(survival_result(&c, seeder.master()).with_params(json!({
        "A": a, "x": x, "n": n, "trials": trials,
    })))
}

pub fn survival_result(c: &SurvivalCounts, seed: u64) -> EstimatorResult {
    let p = c.hits as f64 / c.trials as f64;
    let se = (p * (1.0 - p) / c.trials as f64).sqrt();
    let (lo, hi) = wilson_interval(c.hits, c.trials, super::DEFAULT_CI_LEVEL);
    EstimatorResult::real("survival", p, se, c.trials, seed)
        .with_ci(lo, hi)
        .with_bias("prune_bias_bound", c.prune.mass_bound / c.trials as f64)
}
