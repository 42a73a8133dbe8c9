//! The size-biased tree with its spine, and the backward-tree functionals.
//!
//! Level `k >= 1` of the backward tree consists of the brothers of `w_{k+1}`
//! (`nu - 1` of them), displaced by `rho_u` from the spine and carrying
//! independent `P`-subtrees observed `k - 1` generations below. A particle at
//! `y` sees the level-`k` point `q = -S_{w_k} + rho_u + S^u_v` at `y + q`.
//! Only brothers whose subtree survives `k - 1` generations contribute, so
//! they are thinned binomially before anything is simulated, and their
//! subtrees are grown with the reduced sampler.

use super::reduced::{binomial, conditioned_tree_into, PruneStats, Pruner, SurvivalTable};
use super::testfn::TestFunction;
use crate::error::{Error, Result};
use crate::geometry::Ball;
use crate::laws::{Laws, OffspringLaw};
use rand::Rng;

/// Shared context for growing backward trees.
#[derive(Clone, Debug)]
pub struct BackwardSampler<'a> {
    pub laws: &'a Laws,
    pub table: SurvivalTable,
    /// Optional pruning toward the ball that matters for every evaluation
    /// point, e.g. `B(0, 2r)` when `y` ranges over a ball of radius `r`.
    pub pruner: Option<Pruner>,
    pub cap: usize,
}

impl<'a> BackwardSampler<'a> {
    pub fn new(laws: &'a Laws, horizon: usize, target: Option<Ball>, epsilon: f64, cap: usize) -> Self {
        let table = SurvivalTable::new(&laws.offspring, horizon);
        let pruner = target.map(|t| Pruner::new(t, &laws.motion, &table, horizon, epsilon));
        BackwardSampler { laws, table, pruner, cap }
    }

    pub fn horizon(&self) -> usize {
        self.table.horizon()
    }
}

#[derive(Clone, Debug)]
pub struct SpineRealization {
    dim: usize,
    /// `S_{w_0}, ..., S_{w_K}`, flat.
    positions: Vec<f64>,
    /// `|B(w_{k+1})|` for `k = 0..=K`.
    brother_counts: Vec<u64>,
    /// Backward points per level (`points[k - 1]` holds level `k`), grown lazily.
    points: Vec<Vec<f64>>,
    stats: PruneStats,
}

/// Spine of length `k` with brother counts drawn from `nu - 1`. Brother
/// displacements and subtrees are drawn when first needed.
pub fn sample_spine<R: Rng + ?Sized>(k: usize, laws: &Laws, rng: &mut R) -> Result<SpineRealization> {
    if k < 1 {
        return Err(Error::Precondition("spine horizon K must be at least 1".into()));
    }
    let d = laws.dim();
    let mut s = SpineRealization {
        dim: d,
        positions: vec![0.0; d],
        brother_counts: Vec::new(),
        points: Vec::new(),
        stats: PruneStats::default(),
    };
    s.extend(k, laws, rng);
    Ok(s)
}

impl SpineRealization {
    pub fn horizon(&self) -> usize {
        self.positions.len() / self.dim - 1
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn position(&self, k: usize) -> &[f64] {
        &self.positions[k * self.dim..(k + 1) * self.dim]
    }

    pub fn brother_count(&self, k: usize) -> u64 {
        self.brother_counts[k]
    }

    pub fn prune_stats(&self) -> PruneStats {
        self.stats
    }

    /// Lengthen the spine to `k` steps, keeping everything drawn so far.
    pub fn extend<R: Rng + ?Sized>(&mut self, k: usize, laws: &Laws, rng: &mut R) {
        let d = self.dim;
        while self.horizon() < k {
            let start = self.positions.len() - d;
            let mut next = self.positions[start..].to_vec();
            laws.motion.add_step(rng, &mut next);
            self.positions.extend_from_slice(&next);
            if self.brother_counts.is_empty() {
                self.brother_counts.push(laws.sample_size_biased(rng) - 1);
            }
            self.brother_counts.push(laws.sample_size_biased(rng) - 1);
        }
    }

    /// Number of levels whose backward points are available.
    pub fn grown_levels(&self) -> usize {
        self.points.len()
    }

    /// Grow backward points for levels `1..=k`.
    pub fn grow<R: Rng + ?Sized>(&mut self, k: usize, ctx: &BackwardSampler, rng: &mut R) -> Result<()> {
        if k > ctx.horizon() {
            return Err(Error::Precondition(format!(
                "backward sampler prepared for K = {}, asked for {k}",
                ctx.horizon()
            )));
        }
        self.extend(k, ctx.laws, rng);
        let d = self.dim;
        let mut tree = Vec::new();
        let mut scratch = Vec::new();
        let mut root = vec![0.0; d];
        while self.points.len() < k {
            let level = self.points.len() + 1;
            let depth = level - 1;
            let survivors = binomial(rng, self.brother_counts[level], ctx.table.get(depth));
            let mut pts = Vec::new();
            for _ in 0..survivors {
                for (r, s) in root.iter_mut().zip(self.position(level)) {
                    *r = -s;
                }
                ctx.laws.motion.add_step(rng, &mut root);
                conditioned_tree_into(
                    ctx.laws,
                    &ctx.table,
                    &root,
                    depth,
                    ctx.pruner.as_ref(),
                    ctx.cap,
                    rng,
                    &mut self.stats,
                    &mut tree,
                    &mut scratch,
                )?;
                pts.extend_from_slice(&tree);
            }
            self.points.push(pts);
        }
        Ok(())
    }

    /// Backward points of level `k >= 1`, flat.
    pub fn level_points(&self, k: usize) -> &[f64] {
        &self.points[k - 1]
    }

    /// All grown backward points with their level.
    pub fn backward_points(&self) -> impl Iterator<Item = (usize, &[f64])> {
        let d = self.dim;
        self.points
            .iter()
            .enumerate()
            .flat_map(move |(i, v)| v.chunks_exact(d).map(move |q| (i + 1, q)))
    }
}

/// `(sum_{k=1..K} Y_k(y - S_{w_k}), f(y) + sum_{k=1..K} Y_{f,k}(y - S_{w_k}))`.
/// The second entry is the raw occupation sum; the caller applies the sign or phase.
#[allow(clippy::too_many_arguments)]
pub fn eval_backward_functionals<R: Rng + ?Sized>(
    spine: &mut SpineRealization,
    ctx: &BackwardSampler,
    y: &[f64],
    a: &Ball,
    f: &TestFunction,
    k: usize,
    rng: &mut R,
) -> Result<(u64, f64)> {
    if !f.supported_in(a) {
        return Err(Error::Precondition("test function support must lie inside A".into()));
    }
    if k < 1 {
        return Err(Error::Precondition("truncation K must be at least 1".into()));
    }
    spine.grow(k, ctx, rng)?;
    let d = spine.dim;
    let mut count = 0u64;
    let mut occ = f.eval(y);
    let mut z = vec![0.0; d];
    for level in 1..=k {
        for q in spine.level_points(level).chunks_exact(d) {
            for i in 0..d {
                z[i] = y[i] + q[i];
            }
            if a.contains(&z) {
                count += 1;
                occ += f.eval(&z);
            }
        }
    }
    Ok((count, occ))
}

/// Population at generation `n` of the size-biased tree (spine plus the
/// descendants of every brother).
pub fn size_biased_population<R: Rng + ?Sized>(n: usize, laws: &Laws, cap: usize, rng: &mut R) -> Result<u64> {
    let mut total = 1u64;
    for j in 0..n {
        let b = laws.sample_size_biased(rng) - 1;
        total += gw_count(b, n - j - 1, &laws.offspring, cap, rng)?;
        if total > cap as u64 {
            return Err(Error::BlowUp {
                generation: n,
                population: total as usize,
                cap,
            });
        }
    }
    Ok(total)
}

/// Population after `gens` generations started from `start` particles.
pub fn gw_count<R: Rng + ?Sized>(start: u64, gens: usize, law: &OffspringLaw, cap: usize, rng: &mut R) -> Result<u64> {
    let binary = law.table() == [0.5, 0.0, 0.5];
    let mut z = start;
    for g in 0..gens {
        if z == 0 {
            break;
        }
        z = if binary {
            2 * binomial(rng, z, 0.5)
        } else {
            (0..z).map(|_| law.sample(rng)).sum()
        };
        if z > cap as u64 {
            return Err(Error::BlowUp {
                generation: g + 1,
                population: z as usize,
                cap,
            });
        }
    }
    Ok(z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::branching::engine::POPULATION_CAP;
    use crate::laws::{MotionLaw, OffspringLaw};
    use crate::rng::StreamRng;
    use rand::SeedableRng;

    #[test]
    fn binary_spine_has_one_brother_per_node() {
        let laws = Laws::binary_gaussian(3).unwrap();
        let mut rng = StreamRng::seed_from_u64(1);
        let s = sample_spine(50, &laws, &mut rng).unwrap();
        assert_eq!(s.horizon(), 50);
        assert!((0..=50).all(|k| s.brother_count(k) == 1));
        assert_eq!(s.position(0), &[0.0; 3]);
    }

    #[test]
    fn one_level_motionless_binary() {
        // K = 1: the single brother of w_2 sits on the spine; with no motion
        // it lands on y itself.
        let laws = Laws::unchecked(OffspringLaw::binary(), MotionLaw::Still { dim: 3 });
        let ctx = BackwardSampler::new(&laws, 1, None, 1e-8, POPULATION_CAP);
        let mut rng = StreamRng::seed_from_u64(3);
        let mut s = sample_spine(1, &laws, &mut rng).unwrap();
        let a = Ball::centered(3, 1.0);
        let f = TestFunction::zero(a.clone());
        let (y, yf) = eval_backward_functionals(&mut s, &ctx, &[0.0; 3], &a, &f, 1, &mut rng).unwrap();
        assert_eq!((y, yf), (1, 0.0));
    }

    #[test]
    fn support_violation_is_rejected() {
        let laws = Laws::binary_gaussian(3).unwrap();
        let ctx = BackwardSampler::new(&laws, 4, None, 1e-8, POPULATION_CAP);
        let mut rng = StreamRng::seed_from_u64(3);
        let mut s = sample_spine(4, &laws, &mut rng).unwrap();
        let a = Ball::centered(3, 1.0);
        let f = TestFunction::cone_bump(Ball::centered(3, 2.0), 1.0);
        assert!(matches!(
            eval_backward_functionals(&mut s, &ctx, &[0.0; 3], &a, &f, 4, &mut rng),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn growth_is_memoized() {
        let laws = Laws::binary_gaussian(3).unwrap();
        let ctx = BackwardSampler::new(&laws, 64, None, 1e-8, POPULATION_CAP);
        let mut rng = StreamRng::seed_from_u64(8);
        let mut s = sample_spine(8, &laws, &mut rng).unwrap();
        s.grow(8, &ctx, &mut rng).unwrap();
        let before: Vec<f64> = s.level_points(5).to_vec();
        s.grow(64, &ctx, &mut rng).unwrap();
        assert_eq!(s.level_points(5), before.as_slice());
        assert_eq!(s.grown_levels(), 64);
    }
}
