use super::survival::SimOptions;
use crate::branching::{conditioned_tree_into, PruneStats, Pruner, SurvivalTable};
use crate::error::{Error, Result};
use crate::geometry::Ball;
use crate::laws::Laws;
use crate::pointfield::{poisson, IntensityLaw, PointConfiguration};
use crate::rng::{par_items, Seeder};
use rand::Rng;

/// Default smallest horizon for the conditioned sampler.
pub const N_MIN: usize = 64;

/// One draw of the generation-`n` configuration restricted to `A`,
/// conditioned on `Z_n(A) >= 1`.
#[derive(Clone, Debug)]
pub struct NaSample {
    pub config: PointConfiguration,
    /// Trees started, including the accepted one.
    pub attempts: u64,
    pub prune: PruneStats,
}

/// Prepared rejection sampler for `N_A` at horizon `n`, trees rooted at `root`.
#[derive(Clone, Debug)]
pub struct NaSampler<'a> {
    laws: &'a Laws,
    a: Ball,
    n: usize,
    root: Vec<f64>,
    table: SurvivalTable,
    pruner: Pruner,
    opts: SimOptions,
}

impl<'a> NaSampler<'a> {
    pub fn new(a: &Ball, n: usize, root: &[f64], laws: &'a Laws, opts: &SimOptions) -> Self {
        let table = SurvivalTable::new(&laws.offspring, n);
        let pruner = Pruner::new(a.clone(), &laws.motion, &table, n, opts.prune_epsilon);
        NaSampler {
            laws,
            a: a.clone(),
            n,
            root: root.to_vec(),
            table,
            pruner,
            opts: *opts,
        }
    }

    /// Run trees until one charges `A`. Trees that die before generation `n`
    /// are skipped in one geometric draw.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, max_attempts: u64) -> Result<NaSample> {
        let s = self.table.get(self.n);
        let log_fail = (-s).ln_1p();
        let mut attempts = 0u64;
        let mut prune = PruneStats::default();
        let (mut tree, mut scratch) = (Vec::new(), Vec::new());
        let d = self.root.len();
        loop {
            let skipped = if s >= 1.0 {
                0
            } else {
                let u: f64 = 1.0 - rng.random::<f64>();
                (u.ln() / log_fail).floor().min(u64::MAX as f64 / 4.0) as u64
            };
            attempts = attempts.saturating_add(skipped + 1);
            if attempts > max_attempts {
                return Err(Error::Exhausted {
                    attempts: max_attempts,
                    rate: 0.0,
                });
            }
            conditioned_tree_into(
                self.laws,
                &self.table,
                &self.root,
                self.n,
                Some(&self.pruner),
                self.opts.cap,
                rng,
                &mut prune,
                &mut tree,
                &mut scratch,
            )?;
            if !tree.is_empty() {
                let mut config = PointConfiguration::empty(d);
                for p in tree.chunks_exact(d).filter(|p| self.a.contains(p)) {
                    config.push(p);
                }
                return Ok(NaSample { config, attempts, prune });
            }
        }
    }
}

/// `N_A` by rejection from trees rooted at the origin.
pub fn sample_n_a<R: Rng + ?Sized>(a: &Ball, n: usize, laws: &Laws, rng: &mut R, max_attempts: u64) -> Result<NaSample> {
    if n < N_MIN {
        return Err(Error::Precondition(format!("sample_n_a needs n >= {N_MIN}, got {n}")));
    }
    NaSampler::new(a, n, &vec![0.0; a.dim()], laws, &SimOptions::default()).sample(rng, max_attempts)
}

/// `count` independent draws in parallel, one stream per draw. A failure on
/// any draw reports the empirical acceptance rate of the whole batch.
pub fn sample_n_a_batch(
    a: &Ball,
    n: usize,
    root: &[f64],
    count: u64,
    laws: &Laws,
    seeder: &Seeder,
    max_attempts: u64,
    opts: &SimOptions,
) -> Result<Vec<NaSample>> {
    let sampler = NaSampler::new(a, n, root, laws, opts);
    let label = format!("n_a/n={n}/{:?}/{}/root={root:?}", a.center, a.radius);
    let draws = par_items(seeder, &label, count, |rng, _| sampler.sample(rng, max_attempts));
    let accepted = draws.iter().filter(|d| d.is_ok()).count() as u64;
    let mut out = Vec::with_capacity(draws.len());
    let mut tried = 0u64;
    for d in &draws {
        tried += d.as_ref().map_or(max_attempts, |s| s.attempts);
    }
    for d in draws {
        match d {
            Ok(s) => out.push(s),
            Err(Error::Exhausted { .. }) => {
                return Err(Error::Exhausted {
                    attempts: tried,
                    rate: accepted as f64 / tried as f64,
                })
            }
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

/// `Lambda_infinity` restricted to `A`: draw `X`, then `Poisson(X I_A)`
/// independent copies of `N_A`, overlaid.
pub fn build_lambda_infinity_on_ball<R, F>(
    a: &Ball,
    x: &IntensityLaw,
    i_a: f64,
    mut n_a: F,
    rng: &mut R,
) -> Result<PointConfiguration>
where
    R: Rng + ?Sized,
    F: FnMut(&mut R) -> Result<PointConfiguration>,
{
    if !(i_a > 0.0) {
        return Err(Error::Precondition(format!("I_A estimate must be positive, got {i_a}")));
    }
    let theta = x.sample(rng);
    let k = poisson(rng, theta * i_a);
    let mut out = PointConfiguration::empty(a.dim());
    for _ in 0..k {
        out.overlay(&n_a(rng)?);
    }
    Ok(out)
}
