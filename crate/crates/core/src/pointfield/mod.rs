//! Point configurations, Poisson initial fields, branched fields and their
//! functionals.

use crate::branching::{free_tree, PruneStats, Pruner, SurvivalTable, TestFunction, POPULATION_CAP, PRUNE_EPSILON};
use crate::error::{Error, Result};
use crate::estimators::EstimatorResult;
use crate::geometry::{ball_volume, norm, Ball};
use crate::laws::{motion_ball_prob_oracle, Laws, MotionLaw};
use crate::rng::{par_chunks, Seeder, StreamRng};
use crate::stats::Moments;
use rand::Rng;
use rand_distr::{Distribution, Exp1, Gamma, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};
use std::io::Write;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowShape {
    /// `[-L, L]^d`
    Box,
    /// `B(0, L)`
    Ball,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub shape: WindowShape,
    pub half_width: f64,
    pub dim: usize,
    /// Points live on `Z^d`.
    pub lattice: bool,
}

impl Window {
    pub fn new(shape: WindowShape, half_width: f64, dim: usize, lattice: bool) -> Result<Self> {
        if !(half_width > 0.0) {
            return Err(Error::Domain(format!("window size must be positive, got {half_width}")));
        }
        Ok(Window {
            shape,
            half_width,
            dim,
            lattice,
        })
    }

    pub fn ball(radius: f64, dim: usize, lattice: bool) -> Result<Self> {
        Self::new(WindowShape::Ball, radius, dim, lattice)
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        match self.shape {
            WindowShape::Box => x.iter().all(|c| c.abs() <= self.half_width),
            WindowShape::Ball => norm(x) <= self.half_width,
        }
    }

    /// Lebesgue volume of the window.
    pub fn volume(&self) -> f64 {
        match self.shape {
            WindowShape::Box => (2.0 * self.half_width).powi(self.dim as i32),
            WindowShape::Ball => ball_volume(self.dim, self.half_width),
        }
    }

    /// Radius of the largest centered ball inside the window.
    pub fn inner_radius(&self) -> f64 {
        self.half_width
    }

    pub fn sample_uniform<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        let l = self.half_width;
        match self.shape {
            WindowShape::Box => {
                for c in out.iter_mut() {
                    *c = l * (2.0 * rng.random::<f64>() - 1.0);
                }
            }
            WindowShape::Ball => {
                let mut r2 = 0.0;
                for c in out.iter_mut() {
                    let z: f64 = StandardNormal.sample(rng);
                    *c = z;
                    r2 += z * z;
                }
                let radius = l * rng.random::<f64>().powf(1.0 / self.dim as f64) / r2.sqrt();
                for c in out.iter_mut() {
                    *c *= radius;
                }
            }
        }
    }

    /// Integer points of the window.
    pub fn sites(&self) -> Vec<Vec<i64>> {
        match self.shape {
            WindowShape::Ball => Ball::centered(self.dim, self.half_width).lattice_points(),
            WindowShape::Box => {
                let l = self.half_width.floor() as i64;
                let side = (2 * l + 1) as usize;
                let total = side.pow(self.dim as u32);
                (0..total)
                    .map(|mut i| {
                        (0..self.dim)
                            .map(|_| {
                                let c = (i % side) as i64 - l;
                                i /= side;
                                c
                            })
                            .collect()
                    })
                    .collect()
            }
        }
    }
}

/// A finite multiset of points; repeated points are stored repeatedly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointConfiguration {
    pub dim: usize,
    pub coords: Vec<f64>,
    pub window: Option<Window>,
}

impl PointConfiguration {
    pub fn empty(dim: usize) -> Self {
        PointConfiguration {
            dim,
            coords: Vec::new(),
            window: None,
        }
    }

    pub fn from_coords(dim: usize, coords: Vec<f64>) -> Self {
        PointConfiguration {
            dim,
            coords,
            window: None,
        }
    }

    pub fn with_window(mut self, window: Window) -> Self {
        self.window = Some(window);
        self
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> {
        self.coords.chunks_exact(self.dim)
    }

    pub fn push(&mut self, x: &[f64]) {
        self.coords.extend_from_slice(x);
    }

    /// Superposition of two configurations.
    pub fn overlay(&mut self, other: &PointConfiguration) {
        self.coords.extend_from_slice(&other.coords);
    }

    pub fn restricted_to(&self, a: &Ball) -> PointConfiguration {
        let mut out = PointConfiguration::empty(self.dim);
        for x in self.points().filter(|x| a.contains(x)) {
            out.push(x);
        }
        out
    }

    pub fn count_in(&self, a: &Ball) -> usize {
        self.points().filter(|x| a.contains(x)).count()
    }

    /// CSV with a header `x1,...,xd` and one row per point.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let header: Vec<String> = (1..=self.dim).map(|i| format!("x{i}")).collect();
        wr.write_record(&header).map_err(csv_err)?;
        for x in self.points() {
            wr.write_record(x.iter().map(|c| format!("{c}"))).map_err(csv_err)?;
        }
        wr.flush()?;
        Ok(())
    }
}

pub(crate) fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e.to_string()))
}

/// Law of the random intensity `X`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case")]
pub enum IntensityLaw {
    Constant { theta: f64 },
    Exponential { mean: f64 },
    Gamma { shape: f64, scale: f64 },
    /// `a` with probability `p`, otherwise `b`.
    TwoPoint { a: f64, b: f64, p: f64 },
}

impl IntensityLaw {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            IntensityLaw::Constant { theta } => theta >= 0.0 && theta.is_finite(),
            IntensityLaw::Exponential { mean } => mean >= 0.0 && mean.is_finite(),
            IntensityLaw::Gamma { shape, scale } => shape > 0.0 && scale > 0.0,
            IntensityLaw::TwoPoint { a, b, p } => a >= 0.0 && b >= 0.0 && (0.0..=1.0).contains(&p),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Domain(format!("invalid intensity law {self:?}")))
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            IntensityLaw::Constant { theta } => theta,
            IntensityLaw::Exponential { mean } => mean,
            IntensityLaw::Gamma { shape, scale } => shape * scale,
            IntensityLaw::TwoPoint { a, b, p } => p * a + (1.0 - p) * b,
        }
    }

    /// `E[exp(t X)]`, finite for `t <= 0`.
    pub fn mgf(&self, t: f64) -> f64 {
        match *self {
            IntensityLaw::Constant { theta } => (theta * t).exp(),
            IntensityLaw::Exponential { mean } => 1.0 / (1.0 - mean * t),
            IntensityLaw::Gamma { shape, scale } => (1.0 - scale * t).powf(-shape),
            IntensityLaw::TwoPoint { a, b, p } => p * (a * t).exp() + (1.0 - p) * (b * t).exp(),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            IntensityLaw::Constant { theta } => theta,
            IntensityLaw::Exponential { mean } => {
                let e: f64 = Exp1.sample(rng);
                mean * e
            }
            IntensityLaw::Gamma { shape, scale } => Gamma::new(shape, scale).expect("validated").sample(rng),
            IntensityLaw::TwoPoint { a, b, p } => {
                if rng.random::<f64>() < p {
                    a
                } else {
                    b
                }
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoissonFieldSpec {
    pub intensity: IntensityLaw,
    /// Per-site counts on `Z^d` instead of Lebesgue intensity.
    pub lattice: bool,
}

impl PoissonFieldSpec {
    pub fn constant(theta: f64, lattice: bool) -> Self {
        PoissonFieldSpec {
            intensity: IntensityLaw::Constant { theta },
            lattice,
        }
    }
}

pub fn poisson<R: Rng + ?Sized>(rng: &mut R, mean: f64) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    Poisson::new(mean).expect("positive mean").sample(rng) as u64
}

/// Poisson field with intensity `X dx` (or `X` per site), `X` drawn once.
pub fn sample_poisson_field<R: Rng + ?Sized>(spec: &PoissonFieldSpec, window: &Window, rng: &mut R) -> PointConfiguration {
    let x = spec.intensity.sample(rng);
    poisson_field_given(x, spec.lattice, window, rng)
}

fn poisson_field_given<R: Rng + ?Sized>(theta: f64, lattice: bool, window: &Window, rng: &mut R) -> PointConfiguration {
    let d = window.dim;
    let mut out = PointConfiguration::empty(d).with_window(window.clone());
    if theta <= 0.0 {
        return out;
    }
    if lattice {
        for site in window.sites() {
            let k = poisson(rng, theta);
            let xf: Vec<f64> = site.iter().map(|c| *c as f64).collect();
            for _ in 0..k {
                out.push(&xf);
            }
        }
    } else {
        let k = poisson(rng, theta * window.volume());
        out.coords.resize(k as usize * d, 0.0);
        for x in out.coords.chunks_exact_mut(d) {
            window.sample_uniform(rng, x);
        }
    }
    out
}

/// Truncation parameters for branched fields.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldOptions {
    /// Window radius is `m_factor * scale(n) + radius(A)` around `A`.
    pub m_factor: f64,
    pub prune_epsilon: f64,
    pub cap: usize,
}

impl Default for FieldOptions {
    fn default() -> Self {
        FieldOptions {
            m_factor: 6.0,
            prune_epsilon: PRUNE_EPSILON,
            cap: POPULATION_CAP,
        }
    }
}

/// Smallest window radius (around the origin) required to branch toward `a`
/// over `n` generations. Exact for lattice motion.
pub fn required_window(motion: &MotionLaw, n: usize, a: &Ball, m_factor: f64) -> f64 {
    let base = norm(&a.center) + a.radius;
    match motion.exact_reach(n) {
        Some(r) => base + r,
        None => base + m_factor * motion.scale(n),
    }
}

/// Bound on the expected number of points that roots outside a centered
/// window of radius `radius` send into `a` after `n` steps, for unit intensity.
/// `None` when no bound is available.
pub fn window_mass_bound(motion: &MotionLaw, n: usize, a: &Ball, radius: f64) -> Option<f64> {
    let gap = radius - norm(&a.center) - a.radius;
    let vol = a.volume();
    if let Some(r) = motion.exact_reach(n) {
        return Some(if gap >= r { 0.0 } else { f64::INFINITY });
    }
    if gap <= 0.0 {
        return Some(f64::INFINITY);
    }
    match motion {
        // E[#points in A from roots at |x| > R] <= |A| P(|S_n| > gap)
        MotionLaw::Gaussian { dim } => {
            let chi = ChiSquared::new(*dim as f64).ok()?;
            Some(vol * (1.0 - chi.cdf(gap * gap / n.max(1) as f64)))
        }
        MotionLaw::Stable { alpha, dim } if *alpha == 1.0 => {
            let inside = motion_ball_prob_oracle(motion, n.max(1), &Ball::centered(*dim, gap), &vec![0.0; *dim]).ok()?;
            Some(vol * (1.0 - inside.value + inside.error_bound))
        }
        _ => None,
    }
}

/// Branched field together with its truncation bookkeeping.
#[derive(Clone, Debug)]
pub struct BranchedField {
    pub config: PointConfiguration,
    pub prune: PruneStats,
}

/// Run an independent branching process from every point of `config` for
/// `n` generations and overlay generation `n`, restricted to `observation`
/// when given.
pub fn branch_field<R: Rng + ?Sized>(
    config: &PointConfiguration,
    n: usize,
    laws: &Laws,
    observation: Option<&Ball>,
    rng: &mut R,
) -> Result<PointConfiguration> {
    let table = SurvivalTable::new(&laws.offspring, n);
    Ok(branch_field_with(config, n, laws, &table, observation, &FieldOptions::default(), rng)?.config)
}

pub fn branch_field_with<R: Rng + ?Sized>(
    config: &PointConfiguration,
    n: usize,
    laws: &Laws,
    table: &SurvivalTable,
    observation: Option<&Ball>,
    opts: &FieldOptions,
    rng: &mut R,
) -> Result<BranchedField> {
    let d = config.dim;
    let mut out = PointConfiguration::empty(d);
    let mut prune = PruneStats::default();
    if n == 0 {
        out.coords = match observation {
            Some(a) => config.restricted_to(a).coords,
            None => config.coords.clone(),
        };
        return Ok(BranchedField { config: out, prune });
    }
    let pruner = match observation {
        Some(a) => {
            let required = required_window(&laws.motion, n, a, opts.m_factor);
            let actual = config.window.as_ref().map_or(0.0, |w| w.inner_radius());
            if config.window.is_none() || actual + 1e-9 < required {
                return Err(Error::WindowTooSmall { actual, required });
            }
            Some(Pruner::new(a.clone(), &laws.motion, table, n, opts.prune_epsilon))
        }
        None => None,
    };
    for x in config.points() {
        let tree = free_tree(laws, table, x, n, pruner.as_ref(), opts.cap, rng, &mut prune)?;
        match observation {
            Some(a) => {
                for p in tree.chunks_exact(d).filter(|p| a.contains(p)) {
                    out.push(p);
                }
            }
            None => out.coords.extend_from_slice(&tree),
        }
    }
    Ok(BranchedField { config: out, prune })
}

/// `Lambda_n` restricted to `a`: a Poisson field of intensity `X` on the
/// window prescribed for horizon `n`, branched `n` generations. Only roots
/// that survive to generation `n` are drawn (Poisson thinning), each then
/// grows a tree conditioned on survival.
pub fn branched_poisson_field<R: Rng + ?Sized>(
    intensity: &IntensityLaw,
    n: usize,
    laws: &Laws,
    table: &SurvivalTable,
    a: &Ball,
    opts: &FieldOptions,
    rng: &mut R,
) -> Result<BranchedField> {
    let radius = required_window(&laws.motion, n, a, opts.m_factor);
    let window = Window::ball(radius, laws.dim(), laws.motion.is_lattice())?;
    branched_poisson_field_in(intensity, n, laws, table, a, &window, opts, rng)
}

/// As [`branched_poisson_field`] on a caller-supplied window, which must be
/// at least the prescribed one.
#[allow(clippy::too_many_arguments)]
pub fn branched_poisson_field_in<R: Rng + ?Sized>(
    intensity: &IntensityLaw,
    n: usize,
    laws: &Laws,
    table: &SurvivalTable,
    a: &Ball,
    window: &Window,
    opts: &FieldOptions,
    rng: &mut R,
) -> Result<BranchedField> {
    let d = laws.dim();
    let required = required_window(&laws.motion, n, a, opts.m_factor);
    if window.inner_radius() + 1e-9 < required {
        return Err(Error::WindowTooSmall {
            actual: window.inner_radius(),
            required,
        });
    }
    let x = intensity.sample(rng);
    let mut out = PointConfiguration::empty(d);
    let mut prune = PruneStats::default();
    if x <= 0.0 {
        return Ok(BranchedField { config: out, prune });
    }
    let s = table.get(n);
    let pruner = Pruner::new(a.clone(), &laws.motion, table, n, opts.prune_epsilon);
    let mut root = vec![0.0; d];
    let mut tree = Vec::new();
    let mut scratch = Vec::new();
    let mut grow = |root: &[f64], rng: &mut R, out: &mut PointConfiguration, prune: &mut PruneStats| -> Result<()> {
        crate::branching::conditioned_tree_into(laws, table, root, n, Some(&pruner), opts.cap, rng, prune, &mut tree, &mut scratch)?;
        for p in tree.chunks_exact(d).filter(|p| a.contains(p)) {
            out.push(p);
        }
        Ok(())
    };
    if window.lattice {
        for site in window.sites() {
            let k = poisson(rng, x * s);
            for (r, c) in root.iter_mut().zip(&site) {
                *r = *c as f64;
            }
            for _ in 0..k {
                grow(&root, rng, &mut out, &mut prune)?;
            }
        }
    } else {
        let k = poisson(rng, x * s * window.volume());
        for _ in 0..k {
            window.sample_uniform(rng, &mut root);
            grow(&root, rng, &mut out, &mut prune)?;
        }
    }
    Ok(BranchedField { config: out, prune })
}

/// `sum_i f(x_i)`, multiplicity-aware.
pub fn integrate(f: &TestFunction, config: &PointConfiguration) -> f64 {
    config.points().map(|x| f.eval(x)).sum()
}

/// `exp(-integrate(f, config))`.
pub fn laplace_point(f: &TestFunction, config: &PointConfiguration) -> f64 {
    (-integrate(f, config)).exp()
}

/// Closed-ball counts.
pub fn count_statistics(config: &PointConfiguration, balls: &[Ball]) -> Vec<usize> {
    balls.iter().map(|b| config.count_in(b)).collect()
}

/// Monte Carlo mean of `exp(-int f dxi)` over configurations drawn by `sampler`.
pub fn laplace_functional_mc<S>(sampler: S, f: &TestFunction, trials: u64, seeder: &Seeder, label: &str) -> Result<EstimatorResult>
where
    S: Fn(&mut StreamRng) -> Result<PointConfiguration> + Sync + Send,
{
    if trials < 2 {
        return Err(Error::Precondition("laplace_functional_mc needs at least 2 trials".into()));
    }
    let chunks = par_chunks(seeder, label, trials, 256, |rng, _, len| -> Result<Moments> {
        let mut m = Moments::default();
        for _ in 0..len {
            let c = sampler(rng)?;
            m.push(laplace_point(f, &c));
        }
        Ok(m)
    });
    let mut m = Moments::default();
    for c in chunks {
        m.merge(&c?);
    }
    Ok(EstimatorResult::from_moments("laplace_functional", &m, seeder.master()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn empty_and_identity_cases() {
        let mut rng = StreamRng::seed_from_u64(1);
        let w = Window::new(WindowShape::Box, 1.0, 3, false).unwrap();
        let spec = PoissonFieldSpec::constant(0.0, false);
        assert!(sample_poisson_field(&spec, &w, &mut rng).is_empty());
        let laws = Laws::binary_gaussian(3).unwrap();
        let e = PointConfiguration::empty(3).with_window(w.clone());
        assert!(branch_field(&e, 5, &laws, None, &mut rng).unwrap().is_empty());
        let c = PointConfiguration::from_coords(3, vec![0.1, 0.2, 0.3, 5.0, 5.0, 5.0]).with_window(w);
        assert_eq!(branch_field(&c, 0, &laws, None, &mut rng).unwrap().coords, c.coords);
    }

    #[test]
    fn integrals() {
        let a = Ball::centered(3, 1.0);
        let f = TestFunction::indicator_smoothed(a, 1.0, 0.5);
        let c = PointConfiguration::from_coords(3, vec![0.0; 9]);
        assert_eq!(integrate(&f, &c), 3.0);
        assert_eq!(laplace_point(&f, &PointConfiguration::empty(3)), 1.0);
        let out = PointConfiguration::from_coords(3, vec![2.0, 0.0, 0.0]);
        assert_eq!(integrate(&f, &out), 0.0);
        let mut both = c.clone();
        both.overlay(&out);
        assert_eq!(integrate(&f, &both), integrate(&f, &c) + integrate(&f, &out));
    }

    #[test]
    fn counts_are_monotone_in_nested_balls() {
        let c = PointConfiguration::from_coords(3, vec![0.0, 0.0, 0.0, 1.5, 0.0, 0.0]);
        let balls = [Ball::centered(3, 1.0), Ball::centered(3, 2.0)];
        assert_eq!(count_statistics(&c, &balls), vec![1, 2]);
        assert_eq!(count_statistics(&PointConfiguration::empty(3), &balls), vec![0, 0]);
    }

    #[test]
    fn window_check() {
        let laws = Laws::binary_gaussian(3).unwrap();
        let mut rng = StreamRng::seed_from_u64(1);
        let w = Window::ball(10.0, 3, false).unwrap();
        let c = PointConfiguration::from_coords(3, vec![0.0; 3]).with_window(w);
        let a = Ball::centered(3, 1.0);
        let err = branch_field(&c, 16, &laws, Some(&a), &mut rng).unwrap_err();
        assert!(matches!(err, Error::WindowTooSmall { required, .. } if (required - 25.0).abs() < 1e-12));
    }

    #[test]
    fn csv_rows() {
        let c = PointConfiguration::from_coords(2, vec![1.0, 2.0, 1.0, 2.0]);
        let mut buf = Vec::new();
        c.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "x1,x2\n1,2\n1,2\n");
    }

    #[test]
    fn lattice_sites_of_box() {
        let w = Window::new(WindowShape::Box, 1.0, 3, true).unwrap();
        assert_eq!(w.sites().len(), 27);
    }
}
