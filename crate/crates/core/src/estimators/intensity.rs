use super::survival::SimOptions;
use super::EstimatorResult;
use crate::branching::{binomial, conditioned_tree_into, PruneStats, SurvivalTable};
use crate::error::{Error, Result};
use crate::geometry::{dist2, Ball};
use crate::laws::Laws;
use crate::pointfield::{required_window, Window};
use crate::rng::{par_chunks, Seeder};
use crate::stats::Moments;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde_json::json;
use std::collections::{HashMap, HashSet};

/// Uniform points drawn inside each ball when measuring a union of balls.
pub const UNION_POINTS_PER_BALL: usize = 32;

/// `sum_x P(Z_n(A - x) >= 1)` over the sites of `window` (lattice motion) or
/// `int P(Z_n(A - x) >= 1) dx` over it (continuum motion).
///
/// For a tree from the origin with generation-`n` positions `p_i`, the set of
/// shifts `x` with `Z_n(A - x) >= 1` is the union of the balls `A - p_i`. Its
/// size (lattice count, or an unbiased Monte Carlo volume) is averaged over
/// `trials` trees.
pub fn lattice_intensity_sum(
    a: &Ball,
    n: usize,
    trials: u64,
    window: &Window,
    laws: &Laws,
    seeder: &Seeder,
    m_factor: f64,
    opts: &SimOptions,
) -> Result<EstimatorResult> {
    let required = required_window(&laws.motion, n, a, m_factor);
    if window.inner_radius() + 1e-9 < required {
        return Err(Error::WindowTooSmall {
            actual: window.inner_radius(),
            required,
        });
    }
    let d = a.dim();
    let table = SurvivalTable::new(&laws.offspring, n);
    let s = table.get(n);
    let lattice = laws.motion.is_lattice();
    let sites = if lattice { a.lattice_points() } else { Vec::new() };
    let label = format!("intensity_sum/n={n}/{:?}/{}", a.center, a.radius);
    let chunks = par_chunks(seeder, &label, trials, opts.chunk, |rng, _, len| -> Result<Moments> {
        let survivors = binomial(rng, len, s);
        let mut m = Moments::default();
        m.push_zeros(len - survivors);
        let (mut tree, mut scratch) = (Vec::new(), Vec::new());
        let mut st = PruneStats::default();
        for _ in 0..survivors {
            conditioned_tree_into(laws, &table, &vec![0.0; d], n, None, opts.cap, rng, &mut st, &mut tree, &mut scratch)?;
            let v = if lattice {
                lattice_union(&sites, &tree, d, window)
            } else {
                union_volume(a, &tree, d, window, rng)
            };
            m.push(v);
        }
        Ok(m)
    });
    let mut m = Moments::default();
    for c in chunks {
        m.merge(&c?);
    }
    Ok(EstimatorResult::from_moments("intensity_sum", &m, seeder.master()).with_params(json!({
        "A": a, "n": n, "trials": trials, "window": window,
    })))
}

/// `#{x in window : x + p_i in A for some i}` for lattice positions `p_i`.
fn lattice_union(sites: &[Vec<i64>], tree: &[f64], d: usize, window: &Window) -> f64 {
    let mut seen: HashSet<Vec<i64>> = HashSet::new();
    let mut xf = vec![0.0; d];
    for p in tree.chunks_exact(d) {
        for z in sites {
            let x: Vec<i64> = z.iter().zip(p).map(|(zi, pi)| zi - pi.round() as i64).collect();
            for (f, c) in xf.iter_mut().zip(&x) {
                *f = *c as f64;
            }
            if window.contains(&xf) {
                seen.insert(x);
            }
        }
    }
    seen.len() as f64
}

/// Unbiased Monte Carlo volume of `window ∩ (∪_i B(c - p_i, r))`: for ball
/// `i`, the fraction of uniform points not covered by balls `j < i`.
fn union_volume<R: Rng + ?Sized>(a: &Ball, tree: &[f64], d: usize, window: &Window, rng: &mut R) -> f64 {
    let r = a.radius;
    let r2 = r * r;
    let vol = a.volume();
    let centers: Vec<Vec<f64>> = tree
        .chunks_exact(d)
        .map(|p| a.center.iter().zip(p).map(|(c, pi)| c - pi).collect())
        .collect();
    let cell = |x: &[f64]| -> Vec<i64> { x.iter().map(|c| (c / r).floor() as i64).collect() };
    let mut grid: HashMap<Vec<i64>, Vec<usize>> = HashMap::new();
    let mut total = 0.0;
    let mut u = vec![0.0; d];
    let offsets: Vec<Vec<i64>> = (0..3usize.pow(d as u32))
        .map(|mut i| {
            (0..d)
                .map(|_| {
                    let o = (i % 3) as i64 - 1;
                    i /= 3;
                    o
                })
                .collect()
        })
        .collect();
    for (i, c) in centers.iter().enumerate() {
        let mut fresh = 0usize;
        for _ in 0..UNION_POINTS_PER_BALL {
            // uniform point in B(c, r)
            let mut n2 = 0.0;
            for ui in u.iter_mut() {
                let z: f64 = StandardNormal.sample(rng);
                *ui = z;
                n2 += z * z;
            }
            let rad = r * rng.random::<f64>().powf(1.0 / d as f64) / n2.sqrt();
            for (ui, ci) in u.iter_mut().zip(c) {
                *ui = ci + rad * *ui;
            }
            if !window.contains(&u) {
                continue;
            }
            let home = cell(&u);
            let covered = offsets.iter().any(|o| {
                let key: Vec<i64> = home.iter().zip(o).map(|(h, oi)| h + oi).collect();
                grid.get(&key)
                    .is_some_and(|js| js.iter().any(|&j| j < i && dist2(&centers[j], &u) <= r2))
            });
            if !covered {
                fresh += 1;
            }
        }
        total += vol * fresh as f64 / UNION_POINTS_PER_BALL as f64;
        grid.entry(cell(c)).or_default().push(i);
    }
    total
}
