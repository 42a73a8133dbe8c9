use super::{Band, Check, TestReport};
use crate::error::Result;
use crate::geometry::ball_volume;
use crate::laws::oracle::{adaptive_simpson, cauchy_density};
use crate::laws::MotionLaw;
use crate::rng::{par_chunks, Seeder};
use crate::stats::{chi2_goodness_of_fit, ols, Moments};
use serde::{Deserialize, Serialize};
use serde_json::json;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StableCheckParams {
    pub trials: u64,
    /// Norms of the frequency grid.
    pub frequencies: Vec<f64>,
    /// Tail fit range.
    pub tail_from: f64,
    pub tail_to: f64,
    pub tail_points: usize,
    pub tail_tolerance: f64,
}

impl Default for StableCheckParams {
    fn default() -> Self {
        StableCheckParams {
            trials: 1_000_000,
            frequencies: (1..=10).map(|i| 0.2 * i as f64).collect(),
            tail_from: 10.0,
            tail_to: 1000.0,
            tail_points: 13,
            tail_tolerance: 0.15,
        }
    }
}

/// Frequency `|y| u_i` where the unit directions cycle through axes and diagonals.
fn frequency(d: usize, i: usize, norm: f64) -> Vec<f64> {
    let mut y = vec![0.0; d];
    match i % 3 {
        0 => y[i % d] = 1.0,
        1 => y.iter_mut().for_each(|c| *c = 1.0),
        _ => {
            y[0] = 1.0;
            y[d - 1] = -1.0;
        }
    }
    let n = y.iter().map(|c| c * c).sum::<f64>().sqrt();
    y.iter().map(|c| c * norm / n).collect()
}

/// Radial law of the isotropic Cauchy vector: `P(|X| <= r)`.
fn cauchy_radial_cdf(d: usize, r: f64) -> f64 {
    let area = d as f64 * ball_volume(d, 1.0);
    let g = |t: f64| area * t.powi(d as i32 - 1) * cauchy_density(d, t);
    if r.is_infinite() {
        return 1.0;
    }
    adaptive_simpson(&g, 0.0, r, 1e-12).0
}

struct Accumulator {
    re: Vec<Moments>,
    im: Vec<Moments>,
    tail: Vec<u64>,
    radial: Vec<u64>,
}

/// Sampler checks for the isotropic `alpha`-stable motion: characteristic
/// function against `exp(-|y|^alpha)` within 4 standard errors on a grid of
/// frequencies, log-log slope of `P(|X| > t)` within the tolerance of
/// `-alpha`, and for `alpha = 1` a chi-square fit of `|X|` to the Cauchy law.
pub fn stable_checks(alpha: f64, d: usize, params: &StableCheckParams, seeder: &Seeder) -> Result<TestReport> {
    let motion = MotionLaw::stable(alpha, d)?;
    let freqs: Vec<Vec<f64>> = params
        .frequencies
        .iter()
        .enumerate()
        .map(|(i, &r)| frequency(d, i, r))
        .collect();
    let ln_from = params.tail_from.ln();
    let ln_to = params.tail_to.ln();
    let ts: Vec<f64> = (0..params.tail_points)
        .map(|i| (ln_from + (ln_to - ln_from) * i as f64 / (params.tail_points - 1).max(1) as f64).exp())
        .collect();
    // radial bins for the density fit, geometrically spaced
    let edges: Vec<f64> = (1..40).map(|i| 0.05 * 1.2f64.powi(i) - 0.05).collect();
    let label = format!("stable_checks/alpha={alpha}/d={d}");
    let parts = par_chunks(seeder, &label, params.trials, 1 << 15, |rng, _, len| {
        let mut acc = Accumulator {
            re: vec![Moments::default(); freqs.len()],
            im: vec![Moments::default(); freqs.len()],
            tail: vec![0; ts.len()],
            radial: vec![0; edges.len() + 1],
        };
        let mut x = vec![0.0; d];
        for _ in 0..len {
            x.iter_mut().for_each(|c| *c = 0.0);
            motion.add_step(rng, &mut x);
            for (j, y) in freqs.iter().enumerate() {
                let phase: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
                acc.re[j].push(phase.cos());
                acc.im[j].push(phase.sin());
            }
            let r = x.iter().map(|c| c * c).sum::<f64>().sqrt();
            for (c, t) in acc.tail.iter_mut().zip(&ts) {
                if r > *t {
                    *c += 1;
                }
            }
            acc.radial[edges.partition_point(|e| *e < r)] += 1;
        }
        acc
    });
    let mut re = vec![Moments::default(); freqs.len()];
    let mut im = vec![Moments::default(); freqs.len()];
    let mut tail = vec![0u64; ts.len()];
    let mut radial = vec![0u64; edges.len() + 1];
    for p in &parts {
        for j in 0..freqs.len() {
            re[j].merge(&p.re[j]);
            im[j].merge(&p.im[j]);
        }
        for (a, b) in tail.iter_mut().zip(&p.tail) {
            *a += b;
        }
        for (a, b) in radial.iter_mut().zip(&p.radial) {
            *a += b;
        }
    }
    let mut checks = Vec::new();
    for (j, r) in params.frequencies.iter().enumerate() {
        let exact = (-r.powf(alpha)).exp();
        checks.push(Check::band(
            &format!("char_re_{j}"),
            Band::new(re[j].mean, re[j].std_error(), exact, 0.0, 0.0),
        ));
        checks.push(Check::band(&format!("char_im_{j}"), Band::new(im[j].mean, im[j].std_error(), 0.0, 0.0, 0.0)));
    }
    let n = params.trials as f64;
    let (lx, ly): (Vec<f64>, Vec<f64>) = ts
        .iter()
        .zip(&tail)
        .filter(|(_, &c)| c > 0)
        .map(|(t, &c)| (t.ln(), (c as f64 / n).ln()))
        .unzip();
    let slope = if lx.len() >= 2 { ols(&lx, &ly).0 } else { f64::NAN };
    checks.push(Check::flag(
        "tail_exponent",
        -slope,
        (-slope - alpha).abs() <= params.tail_tolerance,
    ));
    let mut density = serde_json::Value::Null;
    if alpha == 1.0 {
        let mut cdf = vec![0.0];
        cdf.extend(edges.iter().map(|&e| cauchy_radial_cdf(d, e)));
        cdf.push(1.0);
        let probs: Vec<f64> = cdf.windows(2).map(|w| w[1] - w[0]).collect();
        let gof = chi2_goodness_of_fit(&radial, &probs);
        checks.push(Check::p_value("cauchy_density_gof", gof.statistic, gof.p_value));
        density = json!(gof);
    }
    let details = json!({
        "alpha": alpha,
        "d": d,
        "trials": params.trials,
        "char_re": re.iter().map(|m| m.mean).collect::<Vec<_>>(),
        "tail_t": ts,
        "tail_counts": tail,
        "tail_slope": slope,
        "density_gof": density,
    });
    Ok(TestReport::from_checks(&format!("stable_alpha_{alpha}"), checks, details))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn radial_cdf_matches_closed_form_in_three_dimensions() {
        for r in [0.3, 1.0, 4.0] {
            let closed = 2.0 / std::f64::consts::PI * (f64::atan(r) - r / (1.0 + r * r));
            assert!((cauchy_radial_cdf(3, r) - closed).abs() < 1e-9);
        }
    }

    #[test]
    fn frequencies_have_requested_norm() {
        for i in 0..6 {
            let y = frequency(3, i, 0.7);
            assert!((y.iter().map(|c| c * c).sum::<f64>().sqrt() - 0.7).abs() < 1e-12);
        }
    }
}
