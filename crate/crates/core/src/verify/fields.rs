use super::{Band, Check, TestReport};
use crate::branching::{SurvivalTable, TestFunction};
use crate::error::{Error, Result};
use crate::estimators::{
    build_lambda_infinity_on_ball, estimate_i, sample_n_a_batch, BackwardTreeParams, EstimatorResult, NaSampler,
};
use crate::geometry::Ball;
use crate::laws::Laws;
use crate::pointfield::{
    branched_poisson_field, branched_poisson_field_in, laplace_functional_mc, laplace_point, required_window,
    window_mass_bound, FieldOptions, IntensityLaw, PointConfiguration, Window,
};
use crate::rng::{par_items, Seeder};
use crate::stats::{chi2_two_sample, mean_covariance, ratio_delta, z_test, Moments};
use serde::{Deserialize, Serialize};
use serde_json::json;

/// Counts and Laplace values of a batch of configurations.
#[derive(Clone, Debug, Default)]
pub struct FieldSamples {
    pub counts: Vec<Vec<u64>>,
    pub laplace: Vec<Vec<f64>>,
}

impl FieldSamples {
    fn collect<'a>(configs: impl Iterator<Item = &'a PointConfiguration>, balls: &[Ball], fs: &[TestFunction]) -> Self {
        let mut out = FieldSamples {
            counts: vec![Vec::new(); balls.len()],
            laplace: vec![Vec::new(); fs.len()],
        };
        for c in configs {
            for (v, b) in out.counts.iter_mut().zip(balls) {
                v.push(c.count_in(b) as u64);
            }
            for (v, f) in out.laplace.iter_mut().zip(fs) {
                v.push(laplace_point(f, c));
            }
        }
        out
    }

    /// Chi-square on every count histogram and a z-test on every Laplace mean.
    fn compare(&self, other: &FieldSamples, prefix: &str) -> Vec<Check> {
        let mut checks = Vec::new();
        for (i, (a, b)) in self.counts.iter().zip(&other.counts).enumerate() {
            let t = chi2_two_sample(a, b);
            checks.push(Check::p_value(&format!("{prefix}counts_{i}"), t.statistic, t.p_value));
        }
        for (i, (a, b)) in self.laplace.iter().zip(&other.laplace).enumerate() {
            let (ma, mb) = (Moments::from_slice(a), Moments::from_slice(b));
            let (z, p) = z_test(ma.mean, ma.std_error(), mb.mean, mb.std_error());
            checks.push(Check::p_value(&format!("{prefix}laplace_{i}"), z.abs(), p));
        }
        checks
    }

    fn summary(&self) -> serde_json::Value {
        json!({
            "mean_counts": self.counts.iter().map(|c| Moments::from_slice(&c.iter().map(|&x| x as f64).collect::<Vec<_>>()).mean).collect::<Vec<_>>(),
            "laplace_means": self.laplace.iter().map(|v| Moments::from_slice(v).mean).collect::<Vec<_>>(),
            "samples": self.laplace.first().map_or(0, |v| v.len()),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InvarianceParams {
    pub n: usize,
    pub gap: usize,
    /// Realizations per horizon.
    pub trials: u64,
    pub field: FieldOptions,
}

/// Two-sample comparison of `Lambda_n` and `Lambda_{n+gap}` restricted to
/// `a`: chi-square on the counts in `a` and in its concentric half ball, and
/// z-tests on the Laplace functionals of a cone bump and a smoothed
/// indicator. Both horizons share the window prescribed for `n + gap`.
pub fn invariance_test(x: &IntensityLaw, a: &Ball, params: &InvarianceParams, laws: &Laws, seeder: &Seeder) -> Result<TestReport> {
    x.validate()?;
    let n2 = params.n + params.gap;
    let table = SurvivalTable::new(&laws.offspring, n2);
    let radius = required_window(&laws.motion, n2, a, params.field.m_factor);
    let window = Window::ball(radius, laws.dim(), laws.motion.is_lattice())?;
    let half = Ball::new(a.center.clone(), a.radius / 2.0);
    let balls = [a.clone(), half.clone()];
    let fs = [TestFunction::cone_bump(a.clone(), 1.0), TestFunction::indicator_smoothed(half, 0.5, 0.5)];
    let mut batches = Vec::new();
    let mut lost = 0.0;
    for h in [params.n, n2] {
        let label = format!("invariance/n={h}");
        let fields = par_items(seeder, &label, params.trials, |rng, _| {
            branched_poisson_field_in(x, h, laws, &table, a, &window, &params.field, rng)
        });
        let mut configs = Vec::with_capacity(fields.len());
        for f in fields {
            let f = f?;
            lost += f.prune.mass_bound;
            configs.push(f.config);
        }
        batches.push(FieldSamples::collect(configs.iter(), &balls, &fs));
    }
    let checks = batches[0].compare(&batches[1], "");
    let details = json!({
        "n": params.n,
        "n_plus_gap": n2,
        "window_radius": radius,
        "trials": params.trials,
        "intensity": x,
        "prune_mass_bound": lost / (2 * params.trials) as f64,
        "horizon_n": batches[0].summary(),
        "horizon_n_plus_gap": batches[1].summary(),
    });
    Ok(TestReport::from_checks("invariance", checks, details))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompatibilityParams {
    pub n: usize,
    /// Draws of `N_{A2}`; as many direct draws of `N_{A1}` are made.
    pub trials: u64,
    pub max_attempts: u64,
    pub backward: BackwardTreeParams,
}

/// Bias of `a / b` when `a` and `b` are off by at most `ba` and `bb`.
pub(crate) fn ratio_bias(a: f64, ba: f64, b: f64, bb: f64) -> f64 {
    if bb >= b {
        return f64::INFINITY;
    }
    (ba + a / b * bb) / (b - bb)
}

/// `P(N_{A2}(A1) >= 1)` against `I_{A1} / I_{A2}`, and the law of
/// `N_{A2}` restricted to `A1` given that it charges `A1` against direct
/// draws of `N_{A1}` (counts and a cone-bump Laplace functional).
pub fn compatibility_test(a1: &Ball, a2: &Ball, params: &CompatibilityParams, laws: &Laws, seeder: &Seeder) -> Result<TestReport> {
    if !a2.contains_ball(a1) {
        return Err(Error::Precondition("compatibility_test needs A1 inside A2".into()));
    }
    let zero1 = [TestFunction::zero(a1.clone())];
    let i1 = estimate_i(a1, &zero1, &params.backward, laws, &seeder.child("I_A1"))?.results.remove(0);
    let i2 = if a1 == a2 {
        i1.clone()
    } else {
        estimate_i(a2, &[TestFunction::zero(a2.clone())], &params.backward, laws, &seeder.child("I_A2"))?
            .results
            .remove(0)
    };
    let (ratio, ratio_se) = if a1 == a2 {
        (1.0, 0.0)
    } else {
        ratio_delta(i1.value(), i1.se, i2.value(), i2.se, 0.0)
    };
    let ratio_b = if a1 == a2 {
        0.0
    } else {
        ratio_bias(i1.value(), i1.total_bias_bound(), i2.value(), i2.total_bias_bound())
    };
    let origin = vec![0.0; a1.dim()];
    let sim = params.backward.sim;
    let big = sample_n_a_batch(a2, params.n, &origin, params.trials, laws, &seeder.child("N_A2"), params.max_attempts, &sim)?;
    let hits: Vec<PointConfiguration> = big
        .iter()
        .filter(|s| s.config.count_in(a1) >= 1)
        .map(|s| s.config.restricted_to(a1))
        .collect();
    let p = hits.len() as f64 / big.len() as f64;
    let p_se = (p * (1.0 - p) / big.len() as f64).sqrt();
    let mut checks = vec![Check::band("hit_probability_vs_ratio", Band::new(p, p_se, ratio, ratio_se, ratio_b))];
    let direct = sample_n_a_batch(a1, params.n, &origin, params.trials, laws, &seeder.child("N_A1"), params.max_attempts, &sim)?;
    let balls = [a1.clone()];
    let fs = [TestFunction::cone_bump(a1.clone(), 1.0)];
    let restricted = FieldSamples::collect(hits.iter(), &balls, &fs);
    let direct_s = FieldSamples::collect(direct.iter().map(|s| &s.config), &balls, &fs);
    checks.extend(restricted.compare(&direct_s, "restriction_"));
    checks.push(Check::flag("monotone_I", i1.lower() - i2.upper(), i1.lower() <= i2.upper()));
    let details = json!({
        "n": params.n,
        "I_A1": i1,
        "I_A2": i2,
        "ratio": ratio,
        "ratio_se": ratio_se,
        "ratio_bias_bound": ratio_b,
        "hit_probability": p,
        "hit_probability_se": p_se,
        "restricted": restricted.summary(),
        "direct": direct_s.summary(),
        "attempts_A2": big.iter().map(|s| s.attempts).sum::<u64>(),
    });
    Ok(TestReport::from_checks("compatibility", checks, details))
}

/// Optional third route through the limit object built from `N_A` draws.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LimitLeg {
    /// Horizon of the `N_A` sampler.
    pub n: usize,
    pub max_attempts: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LaplaceIdentityParams {
    pub n: usize,
    /// Field realizations.
    pub trials: u64,
    pub backward: BackwardTreeParams,
    pub field: FieldOptions,
    pub limit: Option<LimitLeg>,
}

/// `E[exp(-<f, Lambda_n>)]` against `E[exp(X (I_{A,-f} - I_A))]`, the two
/// constants estimated on shared spines. With `limit`, also the Laplace
/// functional of `Lambda_infinity` built from `Poisson(X I_A)` copies of `N_A`.
pub fn laplace_identity_test(
    x: &IntensityLaw,
    f: &TestFunction,
    a: &Ball,
    params: &LaplaceIdentityParams,
    laws: &Laws,
    seeder: &Seeder,
) -> Result<TestReport> {
    x.validate()?;
    if !f.supported_in(a) {
        return Err(Error::Precondition("support of f must lie inside A".into()));
    }
    let fs = [TestFunction::zero(a.clone()), f.clone()];
    let est = estimate_i(a, &fs, &params.backward, laws, &seeder.child("I_A"))?;
    let (i0, i_f) = (&est.results[0], &est.results[1]);
    let diffs: Vec<f64> = est.samples[1].iter().zip(&est.samples[0]).map(|(a, b)| a - b).collect();
    let dm = Moments::from_slice(&diffs);
    let d = dm.mean;
    let d_bias = i0.total_bias_bound() + i_f.total_bias_bound();
    let slope = {
        let h = 1e-6 * (1.0 + d.abs());
        (x.mgf(d + h) - x.mgf(d - h)) / (2.0 * h)
    };
    let rhs = x.mgf(d);
    let rhs_se = slope.abs() * dm.std_error();
    let rhs_bias = (x.mgf(d + d_bias) - rhs).abs().max((x.mgf(d - d_bias) - rhs).abs());
    let identity = EstimatorResult::real("laplace_identity", rhs, rhs_se, dm.n, seeder.master()).with_bias("truncation_bias_bound", rhs_bias);

    let table = SurvivalTable::new(&laws.offspring, params.n);
    let radius = required_window(&laws.motion, params.n, a, params.field.m_factor);
    let window_bias = window_mass_bound(&laws.motion, params.n, a, radius).unwrap_or(0.0) * x.mean() * f.amplitude;
    let mut lhs = laplace_functional_mc(
        |rng| Ok(branched_poisson_field(x, params.n, laws, &table, a, &params.field, rng)?.config),
        f,
        params.trials,
        &seeder.child("lambda_n"),
        "laplace_identity/lambda_n",
    )?;
    lhs = lhs.with_bias("window_bias_bound", window_bias);
    let mut checks = vec![Check::band("lambda_n_vs_identity", Band::between(&lhs, &identity))];
    let mut limit_json = serde_json::Value::Null;
    if let Some(leg) = params.limit {
        let i_a = i0.value();
        let sampler = NaSampler::new(a, leg.n, &vec![0.0; a.dim()], laws, &params.backward.sim);
        let mut lim = laplace_functional_mc(
            |rng| build_lambda_infinity_on_ball(a, x, i_a, |r| Ok(sampler.sample(r, leg.max_attempts)?.config), rng),
            f,
            params.trials,
            &seeder.child("lambda_inf"),
            "laplace_identity/lambda_inf",
        )?;
        // plug-in error from using the estimate of I_A
        let sens = (slope * d / i_a).abs();
        lim.se = lim.se.hypot(sens * i0.se);
        lim = lim.with_bias("plug_in_bias_bound", sens * i0.total_bias_bound());
        checks.push(Check::band("lambda_inf_vs_identity", Band::between(&lim, &identity)));
        checks.push(Check::band("lambda_inf_vs_lambda_n", Band::between(&lim, &lhs)));
        limit_json = json!(lim);
    }
    let details = json!({
        "n": params.n,
        "K": est.k,
        "I_A": i0,
        "I_A_f": i_f,
        "difference": d,
        "difference_se": dm.std_error(),
        "difference_cov": mean_covariance(&est.samples[1], &est.samples[0]),
        "identity": identity,
        "lambda_n": lhs,
        "lambda_inf": limit_json,
    });
    Ok(TestReport::from_checks("laplace_identity", checks, details))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ratio_bias_is_worst_case() {
        let b = ratio_bias(1.0, 0.1, 4.0, 0.2);
        let worst = ((1.1 / 3.8) - 0.25f64).max(0.25 - 0.9 / 4.2);
        assert!((b - worst).abs() < 1e-12);
    }

    #[test]
    fn zero_intensity_fields_are_identical() {
        let laws = Laws::binary_gaussian(3).unwrap();
        let a = Ball::centered(3, 1.0);
        let params = InvarianceParams {
            n: 4,
            gap: 2,
            trials: 20,
            field: FieldOptions::default(),
        };
        let r = invariance_test(&IntensityLaw::Constant { theta: 0.0 }, &a, &params, &laws, &Seeder::new(3)).unwrap();
        assert!(r.pass);
        assert!(r.checks.iter().all(|c| c.p_value == Some(1.0)));
    }
}
