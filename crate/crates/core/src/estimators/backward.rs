use super::survival::SimOptions;
use super::EstimatorResult;
use crate::branching::{sample_spine, BackwardSampler, Mode, TestFunction};
use crate::error::{Error, Result};
use crate::geometry::Ball;
use crate::laws::{Hypothesis, LatticePmf, Laws, MotionLaw};
use crate::rng::{par_chunks, Seeder};
use crate::stats::Moments;
use serde::{Deserialize, Serialize};
use serde_json::json;
use std::f64::consts::PI;

/// Truncation and sampling parameters of the backward-tree estimators.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BackwardTreeParams {
    /// Spine depth; `None` applies the default rule.
    pub k: Option<usize>,
    /// Number of spines.
    pub trials: u64,
    /// Grid spacing as a fraction of the radius of `A` (continuum motion).
    pub h_fraction: f64,
    /// Upper limit for the default depth rule.
    pub k_cap: usize,
    /// Depth for stable motion when none is given.
    pub k_stable: usize,
    pub sim: SimOptions,
}

impl Default for BackwardTreeParams {
    fn default() -> Self {
        BackwardTreeParams {
            k: None,
            trials: 10_000,
            h_fraction: 1.0 / 16.0,
            k_cap: 20_000,
            k_stable: 1000,
            sim: SimOptions::default(),
        }
    }
}

/// Hurwitz-style tail `sum_{k > K} k^(-s)`, bounded above by the integral.
pub fn power_tail(k: usize, s: f64) -> f64 {
    (k as f64).powf(1.0 - s) / (s - 1.0)
}

/// `zeta(s)` for `s > 1`, by direct summation plus Euler-Maclaurin remainder.
pub fn zeta(s: f64) -> f64 {
    let n = 1000usize;
    let head: f64 = (1..n).map(|k| (k as f64).powf(-s)).sum();
    let nf = n as f64;
    head + nf.powf(1.0 - s) / (s - 1.0) + 0.5 * nf.powf(-s) + s / 12.0 * nf.powf(-s - 1.0)
}

/// Size of `A`: volume, or number of lattice points.
pub fn measure_of(a: &Ball, motion: &MotionLaw) -> f64 {
    if motion.is_lattice() {
        a.lattice_points().len() as f64
    } else {
        a.volume()
    }
}

/// `sup_x P(S_m = x) <= c m^(-d/2)`, fitted on exact laws for `m <= 64`.
pub fn lattice_peak_constant(motion: &MotionLaw) -> Option<f64> {
    let MotionLaw::Lattice(k) = motion else {
        return None;
    };
    let d = k.dim() as f64;
    let mut c: f64 = 0.0;
    let mut m = 1;
    while m <= 64 {
        let pmf = LatticePmf::new(k, m);
        let peak = pmf.sites().map(|(_, p)| p).fold(0.0, f64::max);
        c = c.max(peak * (m as f64).powf(d / 2.0));
        m *= 2;
    }
    Some(c)
}

/// Bound on `sup_y E[Y_k(y - S_{w_k})] / sigma^2` as `coef * k^(-d/2)`.
fn occupation_coefficient(a: &Ball, laws: &Laws) -> Option<f64> {
    let d = laws.dim() as f64;
    match &laws.motion {
        // P(y + N(0, 2k I) in A) <= |A| (4 pi k)^(-d/2)
        MotionLaw::Gaussian { .. } => Some(a.volume() * (4.0 * PI).powf(-d / 2.0)),
        // P(y + S_2k in A) <= #A c (2k)^(-d/2)
        MotionLaw::Lattice(_) => {
            let c = lattice_peak_constant(&laws.motion)?;
            Some(measure_of(a, &laws.motion) * c * 2f64.powf(-d / 2.0))
        }
        _ => None,
    }
}

/// Bound on the bias `I_K - I` from truncating the spine at depth `K`, for a
/// test function of amplitude `amp` (laplace) or phase factor (characteristic).
pub fn truncation_bias_bound(a: &Ball, laws: &Laws, k: usize, f: &TestFunction) -> Option<f64> {
    let coef = occupation_coefficient(a, laws)?;
    let d = laws.dim() as f64;
    let extra = match f.mode {
        Mode::Laplace => f.amplitude,
        Mode::Characteristic { eta } => eta.abs() * f.amplitude,
    };
    Some((1.0 + extra) * measure_of(a, &laws.motion) * laws.sigma2() * coef * power_tail(k, d / 2.0))
}

/// Default depth: smallest `K` whose tail bound is under 1% of the lower
/// bound `|A| / (1 + sigma^2 coef zeta(d/2))`, capped at `k_cap`. Stable
/// motion uses `k_stable`.
pub fn default_depth(a: &Ball, laws: &Laws, params: &BackwardTreeParams) -> usize {
    if let Some(k) = params.k {
        return k;
    }
    let Some(coef) = occupation_coefficient(a, laws) else {
        return params.k_stable;
    };
    let d = laws.dim() as f64;
    let size = measure_of(a, &laws.motion);
    let proxy = size / (1.0 + laws.sigma2() * coef * zeta(d / 2.0));
    let f0 = TestFunction::zero(a.clone());
    let mut k = 1usize;
    while k < params.k_cap {
        if truncation_bias_bound(a, laws, k, &f0).unwrap() < 0.01 * proxy {
            return k;
        }
        k = (k as f64 * 1.1).ceil() as usize;
    }
    params.k_cap
}

/// Integration nodes over `A`.
#[derive(Clone, Debug)]
pub struct Grid {
    pub dim: usize,
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Grid {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Midpoint cells of side `h` whose centers lie in `A`, weights rescaled
    /// to total `|A|`.
    pub fn midpoint(a: &Ball, h: f64) -> Grid {
        let d = a.dim();
        let m = (a.radius / h).ceil() as i64;
        let side = (2 * m) as usize;
        let mut points = Vec::new();
        let mut idx = vec![0usize; d];
        let mut x = vec![0.0; d];
        'outer: loop {
            for i in 0..d {
                x[i] = a.center[i] + h * (idx[i] as f64 - m as f64 + 0.5);
            }
            if a.contains(&x) {
                points.extend_from_slice(&x);
            }
            for i in 0..d {
                idx[i] += 1;
                if idx[i] < side {
                    continue 'outer;
                }
                idx[i] = 0;
            }
            break;
        }
        let count = points.len() / d;
        let w = a.volume() / count.max(1) as f64;
        Grid {
            dim: d,
            points,
            weights: vec![w; count],
        }
    }

    pub fn lattice(a: &Ball) -> Grid {
        let pts = a.lattice_points();
        Grid {
            dim: a.dim(),
            weights: vec![1.0; pts.len()],
            points: pts.iter().flatten().map(|c| *c as f64).collect(),
        }
    }

    pub fn single(y: &[f64]) -> Grid {
        Grid {
            dim: y.len(),
            points: y.to_vec(),
            weights: vec![1.0],
        }
    }
}

/// Per-spine contributions for one test function: `(re, im)` samples on the
/// main grid and the real part on the coarse grid.
#[derive(Clone, Debug, Default)]
struct Samples {
    re: Vec<f64>,
    im: Vec<f64>,
    coarse: Vec<f64>,
}

/// Estimates of `I_{A,f}` for several test functions on shared spines.
#[derive(Clone, Debug)]
pub struct IEstimate {
    pub results: Vec<EstimatorResult>,
    /// Per-spine real contributions, one vector per test function.
    pub samples: Vec<Vec<f64>>,
    pub k: usize,
}

fn integrand_sum(grid: &Grid, a: &Ball, f: &TestFunction, q: &[f64]) -> (f64, f64) {
    let d = grid.dim;
    let mut re = 0.0;
    let mut im = 0.0;
    let mut z = vec![0.0; d];
    for (y, w) in grid.points.chunks_exact(d).zip(&grid.weights) {
        let mut count = 0u64;
        let mut occ = f.eval(y);
        for p in q.chunks_exact(d) {
            for i in 0..d {
                z[i] = y[i] + p[i];
            }
            if a.contains(&z) {
                count += 1;
                occ += f.eval(&z);
            }
        }
        let v = f.weight(occ) / (1.0 + count as f64);
        re += w * v.re;
        im += w * v.im;
    }
    (re, im)
}

#[allow(clippy::too_many_arguments)]
fn backward_core(
    a: &Ball,
    fs: &[TestFunction],
    grid: &Grid,
    coarse: Option<&Grid>,
    k: usize,
    params: &BackwardTreeParams,
    laws: &Laws,
    seeder: &Seeder,
    label: &str,
) -> Result<(Vec<Samples>, f64)> {
    for f in fs {
        f.validate().or_else(|e| if f.is_zero() { Ok(()) } else { Err(e) })?;
        if !f.supported_in(a) {
            return Err(Error::Precondition("test function support must lie inside A".into()));
        }
    }
    let d = a.dim();
    let target = match laws.motion {
        MotionLaw::Stable { alpha, .. } if alpha != 1.0 => None,
        _ => Some(Ball::centered(d, 2.0 * a.radius)),
    };
    let ctx = BackwardSampler::new(laws, k, target, params.sim.prune_epsilon, params.sim.cap);
    let reach2 = (2.0 * a.radius).powi(2) * (1.0 + 1e-12);
    // integrand values when no backward point is relevant
    let empty: Vec<(f64, f64, f64)> = fs
        .iter()
        .map(|f| {
            let (re, im) = integrand_sum(grid, a, f, &[]);
            let c = coarse.map_or(0.0, |g| integrand_sum(g, a, f, &[]).0);
            (re, im, c)
        })
        .collect();
    let chunks = par_chunks(seeder, label, params.trials, 16, |rng, _, len| -> Result<(Vec<Samples>, f64)> {
        let mut out = vec![Samples::default(); fs.len()];
        let mut lost = 0.0;
        let mut q = Vec::new();
        for _ in 0..len {
            let mut spine = sample_spine(k, laws, rng)?;
            spine.grow(k, &ctx, rng)?;
            lost += spine.prune_stats().mass_bound;
            q.clear();
            for (_, p) in spine.backward_points() {
                if p.iter().map(|c| c * c).sum::<f64>() <= reach2 {
                    q.extend_from_slice(p);
                }
            }
            for (j, f) in fs.iter().enumerate() {
                let (re, im, c) = if q.is_empty() {
                    empty[j]
                } else {
                    let (re, im) = integrand_sum(grid, a, f, &q);
                    let c = coarse.map_or(0.0, |g| integrand_sum(g, a, f, &q).0);
                    (re, im, c)
                };
                out[j].re.push(re);
                out[j].im.push(im);
                out[j].coarse.push(c);
            }
        }
        Ok((out, lost))
    });
    let mut all = vec![Samples::default(); fs.len()];
    let mut lost = 0.0;
    for c in chunks {
        let (s, l) = c?;
        lost += l;
        for (acc, part) in all.iter_mut().zip(s) {
            acc.re.extend(part.re);
            acc.im.extend(part.im);
            acc.coarse.extend(part.coarse);
        }
    }
    Ok((all, lost / params.trials.max(1) as f64))
}

fn finish(
    name: &str,
    s: &Samples,
    f: &TestFunction,
    a: &Ball,
    laws: &Laws,
    k: usize,
    lost: f64,
    quad: Option<f64>,
    seed: u64,
) -> EstimatorResult {
    let re = Moments::from_slice(&s.re);
    let im = Moments::from_slice(&s.im);
    let mut r = match f.mode {
        Mode::Laplace => EstimatorResult::from_moments(name, &re, seed),
        Mode::Characteristic { .. } => EstimatorResult::complex(name, &re, &im, seed),
    };
    r = r.with_params(json!({ "A": a, "f": f, "K": k, "trials": s.re.len() }));
    match truncation_bias_bound(a, laws, k, f) {
        Some(b) => r = r.with_bias("truncation_bias_bound", b),
        None => {
            if let Ok(Hypothesis::H3 { alpha, beta }) = laws.hypothesis() {
                let d = laws.dim() as f64;
                let gamma = (alpha / d + beta) / 2.0;
                r = r.with_bias("truncation_tail_exponent", d * gamma / alpha - 1.0);
            }
        }
    }
    let extra = match f.mode {
        Mode::Laplace => f.amplitude,
        Mode::Characteristic { eta } => eta.abs() * f.amplitude,
    };
    r = r.with_bias("prune_bias_bound", (1.0 + extra) * measure_of(a, &laws.motion) * lost);
    if let Some(q) = quad {
        r = r.with_bias("quadrature_error", q);
    }
    r
}

/// `I_{A,f}` for each `f` in `fs`, all on one pool of spines. Lattice
/// motion sums over `A` exactly; otherwise midpoint quadrature with the
/// refinement delta `|I_h - I_2h|` reported as `quadrature_error`.
pub fn estimate_i(a: &Ball, fs: &[TestFunction], params: &BackwardTreeParams, laws: &Laws, seeder: &Seeder) -> Result<IEstimate> {
    let k = default_depth(a, laws, params);
    let (grid, coarse) = if laws.motion.is_lattice() {
        (Grid::lattice(a), None)
    } else {
        let h = a.radius * params.h_fraction;
        (Grid::midpoint(a, h), Some(Grid::midpoint(a, 2.0 * h)))
    };
    let label = format!("estimate_i/{:?}/{}/K={k}", a.center, a.radius);
    let (all, lost) = backward_core(a, fs, &grid, coarse.as_ref(), k, params, laws, seeder, &label)?;
    let results = all
        .iter()
        .zip(fs)
        .map(|(s, f)| {
            let quad = coarse.as_ref().map(|_| {
                let fine = s.re.iter().sum::<f64>() / s.re.len() as f64;
                let c = s.coarse.iter().sum::<f64>() / s.coarse.len() as f64;
                (fine - c).abs()
            });
            finish("estimate_i", s, f, a, laws, k, lost, quad, seeder.master())
        })
        .collect();
    Ok(IEstimate {
        results,
        samples: all.into_iter().map(|s| s.re).collect(),
        k,
    })
}

/// `G_{A,f}(y)`.
pub fn estimate_g(a: &Ball, f: &TestFunction, y: &[f64], params: &BackwardTreeParams, laws: &Laws, seeder: &Seeder) -> Result<EstimatorResult> {
    if !a.contains(y) {
        return Err(Error::Domain("estimate_g needs y inside A".into()));
    }
    let k = default_depth(a, laws, params);
    let grid = Grid::single(y);
    let label = format!("estimate_g/{y:?}/K={k}");
    let (all, lost) = backward_core(a, std::slice::from_ref(f), &grid, None, k, params, laws, seeder, &label)?;
    let mut r = finish("estimate_g", &all[0], f, a, laws, k, lost, None, seeder.master());
    // per-point bias: the bounds above integrate over A
    let size = measure_of(a, &laws.motion);
    for key in ["truncation_bias_bound", "prune_bias_bound"] {
        if let Some(v) = r.bias_metadata.get_mut(key) {
            *v /= size;
        }
    }
    r.params["y"] = json!(y);
    Ok(r)
}

/// Lower bound `|A| / (1 + sigma^2 coef zeta(d/2))` on `I_A`, from Jensen's inequality.
pub fn jensen_lower_bound(a: &Ball, laws: &Laws) -> Option<f64> {
    let coef = occupation_coefficient(a, laws)?;
    let d = laws.dim() as f64;
    Some(measure_of(a, &laws.motion) / (1.0 + laws.sigma2() * coef * zeta(d / 2.0)))
}
