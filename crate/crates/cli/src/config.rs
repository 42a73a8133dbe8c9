//! Experiment configuration.
//!
//! TOML with a few top-level keys and one section per concern. Unknown keys
//! anywhere are errors. Every omitted key takes the default shown below, and
//! the resolved configuration (defaults filled in) is embedded in every JSON
//! output.
//!
//! ```toml
//! seed = 42
//! workers = 0            # 0 = one worker per core; BRANCHFIELD_WORKERS overrides
//! out = "out"
//!
//! [laws]
//! hypothesis = "H1"      # H1 Gaussian, H2 lattice, H3 isotropic stable
//! dimension = 3
//! family = "binary"      # binary | table | beta
//! pmf = []               # offspring table for family = "table"
//! beta = 0.5             # for family = "beta"
//! alpha = 1.0            # stable index under H3
//! lattice_support = []   # H2 jump vectors; empty = lazy simple walk
//! lattice_probs = []
//!
//! [geometry]
//! center = [0, 0, 0]     # centre of A (empty = origin)
//! radius = 1.0           # radius of A
//! outer_radius = 2.0     # radius of the concentric ball A2 used by compat
//! root = [0, 0, 0]       # starting point of single trees
//! shift = [1, 0, 0]      # survival shift, in units of n^(1/alpha)
//! test_function = "cone_bump"   # cone_bump | indicator | zero
//! amplitude = 1.0
//! plateau = 0.5          # inner fraction for the smoothed indicator
//!
//! [run]
//! n_list = [64, 128, 256]
//! trials = 100000
//! fields = 200           # field realizations for invariance and laplace-id
//! gap = 32               # invariance compares n and n + gap
//! max_attempts = 10000000
//! limit_leg = true       # laplace-id also builds the limit field
//! plateau_shifted = false
//!
//! [truncation]
//! # k = 600             # backward depth; omitted = automatic
//! backward_trials = 2000
//! h_fraction = 0.0625
//! k_cap = 20000
//! k_stable = 1000
//! m_factor = 6.0
//! prune_epsilon = 1e-8
//! population_cap = 10000000
//! k_max = 2000           # lower-bound series length
//! grid = 40              # lower-bound radial cells
//! radii = [1.0, 2.0]
//! # llt_window = 4.0    # LLT supremum window in units of sqrt(n); omitted = every site
//! tau_grid = [1.0, 0.75, 0.5, 0.25]
//!
//! [intensity]
//! law = "constant"       # constant | exponential | gamma | two_point
//! theta = 0.5
//! ```
//!
//! The `[suite]` section sets the scale of every item of the `suite`
//! subcommand; see [`SuiteConfig`].

use branchfield::branching::{TestFunction, POPULATION_CAP};
use branchfield::estimators::{BackwardTreeParams, SimOptions};
use branchfield::geometry::Ball;
use branchfield::laws::{make_beta_offspring, LatticeKernel, Laws, MotionLaw, OffspringLaw};
use branchfield::pointfield::{FieldOptions, IntensityLaw};
use branchfield::{Error, Result};
use serde::{Deserialize, Deserializer, Serialize};
use std::path::{Path, PathBuf};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub workers: usize,
    pub out: PathBuf,
    pub laws: LawsConfig,
    pub geometry: GeometryConfig,
    pub run: RunConfig,
    pub truncation: TruncationConfig,
    #[serde(deserialize_with = "intensity_from_section")]
    pub intensity: IntensityLaw,
    pub suite: SuiteConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 42,
            workers: 0,
            out: PathBuf::from("out"),
            laws: LawsConfig::default(),
            geometry: GeometryConfig::default(),
            run: RunConfig::default(),
            truncation: TruncationConfig::default(),
            intensity: IntensityLaw::Constant { theta: 0.5 },
            suite: SuiteConfig::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum HypothesisTag {
    H1,
    H2,
    H3,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyTag {
    Binary,
    Table,
    Beta,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LawsConfig {
    pub hypothesis: HypothesisTag,
    pub dimension: usize,
    pub family: FamilyTag,
    pub pmf: Vec<f64>,
    pub beta: f64,
    pub alpha: f64,
    pub lattice_support: Vec<Vec<i64>>,
    pub lattice_probs: Vec<f64>,
}

impl Default for LawsConfig {
    fn default() -> Self {
        LawsConfig {
            hypothesis: HypothesisTag::H1,
            dimension: 3,
            family: FamilyTag::Binary,
            pmf: Vec::new(),
            beta: 0.5,
            alpha: 1.0,
            lattice_support: Vec::new(),
            lattice_probs: Vec::new(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestFunctionTag {
    ConeBump,
    Indicator,
    Zero,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeometryConfig {
    pub center: Vec<f64>,
    pub radius: f64,
    pub outer_radius: f64,
    pub root: Vec<f64>,
    pub shift: Vec<f64>,
    pub test_function: TestFunctionTag,
    pub amplitude: f64,
    pub plateau: f64,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        GeometryConfig {
            center: Vec::new(),
            radius: 1.0,
            outer_radius: 2.0,
            root: Vec::new(),
            shift: Vec::new(),
            test_function: TestFunctionTag::ConeBump,
            amplitude: 1.0,
            plateau: 0.5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub n_list: Vec<usize>,
    pub trials: u64,
    pub fields: u64,
    pub gap: usize,
    pub max_attempts: u64,
    pub limit_leg: bool,
    pub plateau_shifted: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            n_list: vec![64, 128, 256],
            trials: 100_000,
            fields: 200,
            gap: 32,
            max_attempts: 10_000_000,
            limit_leg: true,
            plateau_shifted: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TruncationConfig {
    pub k: Option<usize>,
    pub backward_trials: u64,
    pub h_fraction: f64,
    pub k_cap: usize,
    pub k_stable: usize,
    pub m_factor: f64,
    pub prune_epsilon: f64,
    pub population_cap: usize,
    pub k_max: usize,
    pub grid: usize,
    pub radii: Vec<f64>,
    pub llt_window: Option<f64>,
    pub tau_grid: Vec<f64>,
}

impl Default for TruncationConfig {
    fn default() -> Self {
        let b = BackwardTreeParams::default();
        let f = FieldOptions::default();
        TruncationConfig {
            k: None,
            backward_trials: 2000,
            h_fraction: b.h_fraction,
            k_cap: b.k_cap,
            k_stable: b.k_stable,
            m_factor: f.m_factor,
            prune_epsilon: f.prune_epsilon,
            population_cap: POPULATION_CAP,
            k_max: 2000,
            grid: 40,
            radii: vec![1.0, 2.0],
            llt_window: None,
            tau_grid: vec![1.0, 0.75, 0.5, 0.25],
        }
    }
}

/// Scale of every item run by `suite`. The H1 battery uses `[laws]`; the
/// lattice items use `[laws]` lattice settings (lazy walk by default) and the
/// stable items use the `h3_*` keys.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SuiteConfig {
    pub engine_n: Vec<usize>,
    pub engine_trials: u64,
    pub engine_beta: f64,
    pub scaling_n: Vec<usize>,
    pub scaling_trials: u64,
    pub survival_n: usize,
    pub survival_trials: u64,
    pub intensity_n: usize,
    pub intensity_trials: u64,
    pub intensity_m_factor: f64,
    pub conditioned_n: Vec<usize>,
    pub conditioned_trials: u64,
    pub laplace_n: usize,
    pub laplace_fields: u64,
    pub laplace_limit_n: usize,
    pub invariance_n: usize,
    pub invariance_gap: usize,
    pub invariance_fields: u64,
    pub control_fields: u64,
    pub compat_n: usize,
    pub compat_trials: u64,
    pub llt_n: Vec<usize>,
    pub stable_alphas: Vec<f64>,
    pub stable_trials: u64,
    pub h3_alpha: f64,
    pub h3_beta: f64,
    pub h3_radius: f64,
    pub h3_n: Vec<usize>,
    pub h3_trials: u64,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        SuiteConfig {
            engine_n: vec![1, 5, 25],
            engine_trials: 100_000,
            engine_beta: 0.5,
            scaling_n: vec![64, 128, 256],
            scaling_trials: 1_000_000,
            survival_n: 256,
            survival_trials: 20_000_000,
            intensity_n: 128,
            intensity_trials: 1_000_000,
            intensity_m_factor: 4.0,
            conditioned_n: vec![128, 256],
            conditioned_trials: 2000,
            laplace_n: 128,
            laplace_fields: 2000,
            laplace_limit_n: 128,
            invariance_n: 64,
            invariance_gap: 32,
            invariance_fields: 2000,
            control_fields: 200,
            compat_n: 128,
            compat_trials: 5000,
            llt_n: vec![8, 16, 32],
            stable_alphas: vec![1.0, 1.5],
            stable_trials: 1_000_000,
            h3_alpha: 1.0,
            h3_beta: 0.5,
            h3_radius: 4.0,
            h3_n: vec![64, 128],
            h3_trials: 20_000_000,
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields, rename_all = "snake_case")]
enum IntensityKind {
    Constant,
    Exponential,
    Gamma,
    TwoPoint,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct IntensitySection {
    law: IntensityKind,
    theta: Option<f64>,
    mean: Option<f64>,
    shape: Option<f64>,
    scale: Option<f64>,
    a: Option<f64>,
    b: Option<f64>,
    p: Option<f64>,
}

fn intensity_from_section<'de, D: Deserializer<'de>>(de: D) -> std::result::Result<IntensityLaw, D::Error> {
    use serde::de::Error as _;
    let s = IntensitySection::deserialize(de)?;
    let need = |v: Option<f64>, key: &str| v.ok_or_else(|| D::Error::custom(format!("[intensity] missing key `{key}`")));
    let given: Vec<&str> = [
        ("theta", s.theta),
        ("mean", s.mean),
        ("shape", s.shape),
        ("scale", s.scale),
        ("a", s.a),
        ("b", s.b),
        ("p", s.p),
    ]
    .iter()
    .filter(|(_, v)| v.is_some())
    .map(|(k, _)| *k)
    .collect();
    let (law, keys): (IntensityLaw, &[&str]) = match s.law {
        IntensityKind::Constant => (IntensityLaw::Constant { theta: need(s.theta, "theta")? }, &["theta"]),
        IntensityKind::Exponential => (IntensityLaw::Exponential { mean: need(s.mean, "mean")? }, &["mean"]),
        IntensityKind::Gamma => (
            IntensityLaw::Gamma {
                shape: need(s.shape, "shape")?,
                scale: need(s.scale, "scale")?,
            },
            &["shape", "scale"],
        ),
        IntensityKind::TwoPoint => (
            IntensityLaw::TwoPoint {
                a: need(s.a, "a")?,
                b: need(s.b, "b")?,
                p: need(s.p, "p")?,
            },
            &["a", "b", "p"],
        ),
    };
    if let Some(k) = given.iter().find(|k| !keys.contains(k)) {
        return Err(D::Error::custom(format!("[intensity] key `{k}` does not belong to this law")));
    }
    Ok(law)
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let mut c: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
        c.resolve()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}; check --config", path.display())))?;
        Self::from_toml(&text)
    }

    /// Fill dimension-dependent defaults and validate everything that does
    /// not need a sampler.
    pub fn resolve(&mut self) -> Result<()> {
        let d = self.laws.dimension;
        if d == 0 {
            return Err(Error::Config("[laws] dimension must be positive".into()));
        }
        let g = &mut self.geometry;
        for (key, v, fill) in [
            ("center", &mut g.center, 0usize),
            ("root", &mut g.root, 0),
            ("shift", &mut g.shift, 1),
        ] {
            if v.is_empty() {
                *v = vec![0.0; d];
                if fill == 1 {
                    v[0] = 1.0;
                }
            } else if v.len() != d {
                return Err(Error::Config(format!(
                    "[geometry] {key} has {} coordinates but [laws] dimension is {d}",
                    v.len()
                )));
            }
        }
        if !(g.radius > 0.0) || !(g.outer_radius >= g.radius) {
            return Err(Error::Config("[geometry] need 0 < radius <= outer_radius".into()));
        }
        if !(0.0..1.0).contains(&g.plateau) || g.amplitude < 0.0 {
            return Err(Error::Config("[geometry] need amplitude >= 0 and 0 <= plateau < 1".into()));
        }
        if self.run.n_list.is_empty() {
            return Err(Error::Config("[run] n_list is empty".into()));
        }
        if self.run.trials == 0 {
            return Err(Error::Config("[run] trials must be positive".into()));
        }
        self.intensity
            .validate()
            .map_err(|e| Error::Config(format!("[intensity] {e}")))?;
        self.laws()?;
        Ok(())
    }

    pub fn offspring(&self) -> Result<OffspringLaw> {
        let l = &self.laws;
        match l.family {
            FamilyTag::Binary => Ok(OffspringLaw::binary()),
            FamilyTag::Table => OffspringLaw::from_pmf(l.pmf.clone()).map_err(|e| Error::Config(format!("[laws] pmf: {e}"))),
            FamilyTag::Beta => make_beta_offspring(l.beta).map_err(|e| Error::Config(format!("[laws] beta: {e}"))),
        }
    }

    pub fn motion(&self) -> Result<MotionLaw> {
        let l = &self.laws;
        match l.hypothesis {
            HypothesisTag::H1 => Ok(MotionLaw::gaussian(l.dimension)),
            HypothesisTag::H2 => Ok(MotionLaw::Lattice(self.lattice_kernel()?)),
            HypothesisTag::H3 => MotionLaw::stable(l.alpha, l.dimension).map_err(|e| Error::Config(format!("[laws] alpha: {e}"))),
        }
    }

    pub fn lattice_kernel(&self) -> Result<LatticeKernel> {
        let l = &self.laws;
        if l.lattice_support.is_empty() {
            return Ok(LatticeKernel::lazy_simple(l.dimension));
        }
        LatticeKernel::new(l.lattice_support.clone(), l.lattice_probs.clone())
            .map_err(|e| Error::Config(format!("[laws] lattice_support / lattice_probs: {e}")))
    }

    /// Offspring and motion with the hypothesis pairing rules enforced.
    pub fn laws(&self) -> Result<Laws> {
        Laws::new(self.offspring()?, self.motion()?).map_err(|e| Error::Config(format!("[laws] {e}")))
    }

    pub fn ball(&self) -> Ball {
        Ball::new(self.geometry.center.clone(), self.geometry.radius)
    }

    pub fn outer_ball(&self) -> Ball {
        Ball::new(self.geometry.center.clone(), self.geometry.outer_radius)
    }

    pub fn test_function(&self) -> TestFunction {
        let g = &self.geometry;
        let a = self.ball();
        match g.test_function {
            TestFunctionTag::ConeBump => TestFunction::cone_bump(a, g.amplitude),
            TestFunctionTag::Indicator => TestFunction::indicator_smoothed(a, g.amplitude, g.plateau),
            TestFunctionTag::Zero => TestFunction::zero(a),
        }
    }

    pub fn sim(&self) -> SimOptions {
        SimOptions {
            prune_epsilon: self.truncation.prune_epsilon,
            cap: self.truncation.population_cap,
            ..SimOptions::default()
        }
    }

    pub fn backward(&self) -> BackwardTreeParams {
        let t = &self.truncation;
        BackwardTreeParams {
            k: t.k,
            trials: t.backward_trials,
            h_fraction: t.h_fraction,
            k_cap: t.k_cap,
            k_stable: t.k_stable,
            sim: self.sim(),
        }
    }

    pub fn field(&self) -> FieldOptions {
        FieldOptions {
            m_factor: self.truncation.m_factor,
            prune_epsilon: self.truncation.prune_epsilon,
            cap: self.truncation.population_cap,
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).unwrap_or(serde_json::Value::Null)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_takes_defaults() {
        let c = ExperimentConfig::from_toml("").unwrap();
        assert_eq!(c.seed, 42);
        assert_eq!(c.geometry.center, vec![0.0; 3]);
        assert_eq!(c.geometry.shift, vec![1.0, 0.0, 0.0]);
        assert_eq!(c.intensity, IntensityLaw::Constant { theta: 0.5 });
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(ExperimentConfig::from_toml("sed = 1").is_err());
        assert!(ExperimentConfig::from_toml("[run]\ntrails = 5").is_err());
        assert!(ExperimentConfig::from_toml("[intensity]\nlaw = \"constant\"\ntheta = 1\nmean = 2").is_err());
    }

    #[test]
    fn intensity_section_parses() {
        let c = ExperimentConfig::from_toml("[intensity]\nlaw = \"two_point\"\na = 0\nb = 1\np = 0.5").unwrap();
        assert_eq!(c.intensity, IntensityLaw::TwoPoint { a: 0.0, b: 1.0, p: 0.5 });
    }

    #[test]
    fn pairing_rules_are_enforced() {
        let e = ExperimentConfig::from_toml("[laws]\ndimension = 2").unwrap_err();
        assert!(e.to_string().contains("H1 requires d >= 3"), "{e}");
        let e = ExperimentConfig::from_toml("[laws]\nhypothesis = \"H3\"\ndimension = 2\nalpha = 1.0\nfamily = \"beta\"\nbeta = 0.4")
            .unwrap_err();
        assert!(e.to_string().contains("d > alpha/beta"), "{e}");
        assert!(ExperimentConfig::from_toml("[laws]\nhypothesis = \"H3\"\nfamily = \"beta\"\nbeta = 0.5").is_ok());
    }

    #[test]
    fn resolved_config_round_trips() {
        let c = ExperimentConfig::from_toml("seed = 7\n[run]\nn_list = [8]").unwrap();
        let text = toml::to_string(&c).unwrap();
        assert_eq!(ExperimentConfig::from_toml(&text).unwrap(), c);
    }
}
