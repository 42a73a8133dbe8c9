use super::backward::{measure_of, zeta};
use super::survival::{estimate_survival, SimOptions};
use super::EstimatorResult;
use crate::error::{Error, Result};
use crate::geometry::Ball;
use crate::laws::{motion_ball_prob_oracle, Laws, MotionLaw};
use crate::rng::{par_chunks, Seeder};
use crate::stats::Moments;
use serde::{Deserialize, Serialize};

/// `sup n^(d/2) P(S_n in A - x) / |A|` over a grid of horizons and shifts.
pub fn fit_c_d(motion: &MotionLaw, a: &Ball, horizons: &[usize], shifts: &[Vec<f64>]) -> Result<f64> {
    let d = motion.dim() as f64;
    let size = measure_of(a, motion);
    let mut c: f64 = 0.0;
    for &n in horizons {
        for x in shifts {
            let p = motion_ball_prob_oracle(motion, n, a, x)?;
            c = c.max((n as f64).powf(d / 2.0) * (p.value + p.error_bound) / size);
        }
    }
    Ok(c)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SandwichOutcome {
    pub lower: f64,
    pub p_hat: EstimatorResult,
    pub upper: f64,
    pub upper_se: f64,
    /// `1 + sigma^2 |A| c_d zeta(d/2)`.
    pub constant: f64,
    pub c_d: f64,
    pub pass: bool,
}

/// `P(S_n in A - x) / C <= P(Z_n(A - x) >= 1) <= P(S_n in A - x)`.
///
/// The upper side is the motion oracle, or a Monte Carlo walk estimate when
/// `mc_upper` is set and no oracle exists.
#[allow(clippy::too_many_arguments)]
pub fn sandwich_check(
    a: &Ball,
    x: &[f64],
    n: usize,
    trials: u64,
    laws: &Laws,
    seeder: &Seeder,
    mc_upper: bool,
    opts: &SimOptions,
) -> Result<SandwichOutcome> {
    if laws.motion.alpha() < 2.0 {
        return Err(Error::Precondition("the sandwich bound needs Gaussian or lattice motion".into()));
    }
    let d = laws.dim();
    let (upper, upper_se) = match motion_ball_prob_oracle(&laws.motion, n, a, x) {
        Ok(v) => (v.value, v.error_bound),
        Err(Error::NoOracle(msg)) => {
            if !mc_upper {
                return Err(Error::Config(format!("{msg}; enable the Monte Carlo upper bound")));
            }
            walk_probability(a, x, n, trials, laws, seeder)?
        }
        Err(e) => return Err(e),
    };
    let horizons: Vec<usize> = (0..=6).map(|i| 1usize << i).collect();
    let shift = a.center.clone();
    let c_d = fit_c_d(&laws.motion, a, &horizons, &[shift, vec![0.0; d]])?;
    let constant = 1.0 + laws.sigma2() * measure_of(a, &laws.motion) * c_d * zeta(d as f64 / 2.0);
    let lower = upper / constant;
    let p_hat = estimate_survival(a, x, n, trials, laws, seeder, opts)?;
    let band = 4.0 * (p_hat.se * p_hat.se + upper_se * upper_se).sqrt();
    let pass = p_hat.value() <= upper + band && lower <= p_hat.value() + band;
    Ok(SandwichOutcome {
        lower,
        p_hat,
        upper,
        upper_se,
        constant,
        c_d,
        pass,
    })
}

fn walk_probability(a: &Ball, x: &[f64], n: usize, trials: u64, laws: &Laws, seeder: &Seeder) -> Result<(f64, f64)> {
    let chunks = par_chunks(seeder, "walk_probability", trials, 1 << 14, |rng, _, len| {
        let mut m = Moments::default();
        let mut pos = vec![0.0; x.len()];
        for _ in 0..len {
            pos.copy_from_slice(x);
            for _ in 0..n {
                laws.motion.add_step(rng, &mut pos);
            }
            m.push(if a.contains(&pos) { 1.0 } else { 0.0 });
        }
        m
    });
    let mut m = Moments::default();
    for c in &chunks {
        m.merge(c);
    }
    Ok((m.mean, m.std_error()))
}
