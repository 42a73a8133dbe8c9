use super::fields::ratio_bias;
use super::{Band, Check, Table, TableRow, TestReport};
use crate::branching::{run_to_horizon, TestFunction};
use crate::error::{Error, Result};
use crate::estimators::{estimate_i, quadrature_lower_bound_i, sample_n_a_batch, sandwich_check, BackwardTreeParams, SimOptions};
use crate::geometry::Ball;
use crate::laws::{gw_extinction_iterate, Laws, MotionLaw, OffspringLaw};
use crate::pointfield::laplace_point;
use crate::rng::{par_chunks, Seeder};
use crate::stats::{chi2_two_sample, mean_covariance, ratio_delta, Moments};
use serde::{Deserialize, Serialize};
use serde_json::json;

/// `P(Z_n > 0)` from the full forward engine against `1 - q_n` from the
/// extinction recursion, for every law and horizon.
pub fn engine_check(offspring: &[OffspringLaw], motion: &MotionLaw, n_list: &[usize], trials: u64, seeder: &Seeder) -> Result<TestReport> {
    let mut checks = Vec::new();
    let mut rows = Vec::new();
    let origin = vec![0.0; motion.dim()];
    for (i, law) in offspring.iter().enumerate() {
        for &n in n_list {
            let label = format!("engine/law={i}/n={n}");
            let parts = par_chunks(seeder, &label, trials, 1 << 12, |rng, _, len| -> Result<u64> {
                let mut alive = 0;
                for _ in 0..len {
                    if !run_to_horizon(&origin, n, law, motion, rng)?.generation.is_empty() {
                        alive += 1;
                    }
                }
                Ok(alive)
            });
            let mut alive = 0u64;
            for p in parts {
                alive += p?;
            }
            let p = alive as f64 / trials as f64;
            let se = (p * (1.0 - p) / trials as f64).sqrt();
            let exact = 1.0 - gw_extinction_iterate(law, n);
            checks.push(Check::band(&format!("law{i}_n{n}"), Band::new(p, se, exact, 0.0, 0.0)));
            rows.push(json!({ "law": i, "n": n, "estimate": p, "se": se, "exact": exact }));
        }
    }
    Ok(TestReport::from_checks("engine", checks, json!({ "trials": trials, "rows": rows })))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LowerBoundParams {
    pub radii: Vec<f64>,
    pub k_max: usize,
    pub grid: usize,
    pub backward: BackwardTreeParams,
}

/// The quadrature lower bound must sit at least 4 standard errors below the
/// backward-tree estimate of `I_{B(0,r)}` for every radius, and increase
/// strictly with the radius.
pub fn lower_bound_check(params: &LowerBoundParams, laws: &Laws, seeder: &Seeder) -> Result<TestReport> {
    if !matches!(laws.motion, MotionLaw::Gaussian { .. }) {
        return Err(Error::Precondition("the quadrature lower bound needs Gaussian motion".into()));
    }
    let d = laws.dim();
    let mut checks = Vec::new();
    let mut bounds = Vec::new();
    let mut table = Table::new("lower_bound");
    for &r in &params.radii {
        let lb = quadrature_lower_bound_i(r, laws.sigma2(), d, params.k_max, params.grid)?;
        let a = Ball::centered(d, r);
        let est = estimate_i(&a, &[TestFunction::zero(a.clone())], &params.backward, laws, &seeder.child(&format!("r={r}")))?
            .results
            .remove(0);
        let margin = est.value() - 4.0 * est.se - lb;
        checks.push(Check::flag(&format!("below_estimate_r{r}"), margin, margin >= 0.0));
        table.rows.push(TableRow {
            n: est.params["K"].as_u64().unwrap_or(0) as usize,
            estimate: est.value(),
            se: est.se,
            lower: lb,
            upper: est.upper(),
        });
        bounds.push(json!({ "r": r, "bound": lb, "estimate": est }));
    }
    let lbs: Vec<f64> = table.rows.iter().map(|r| r.lower).collect();
    let increasing = lbs.windows(2).all(|w| w[1] > w[0]);
    checks.push(Check::flag("increasing_in_r", lbs.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min), increasing));
    let details = json!({ "k_max": params.k_max, "grid": params.grid, "bounds": bounds });
    Ok(TestReport::from_checks("lower_bound", checks, details).with_table(table))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionedParams {
    pub n_list: Vec<usize>,
    /// Draws of `N_A` per horizon.
    pub trials: u64,
    pub max_attempts: u64,
    pub backward: BackwardTreeParams,
}

/// Laplace functional of `N_A` draws against `I_{A,-f} / I_A` (shared
/// spines, delta method) at each horizon, and chi-square stability of the
/// `N_A(A)` histogram between consecutive horizons.
pub fn conditioned_limit_check(a: &Ball, f: &TestFunction, params: &ConditionedParams, laws: &Laws, seeder: &Seeder) -> Result<TestReport> {
    if !f.supported_in(a) {
        return Err(Error::Precondition("support of f must lie inside A".into()));
    }
    let est = estimate_i(a, &[TestFunction::zero(a.clone()), f.clone()], &params.backward, laws, &seeder.child("I_A"))?;
    let (i0, i_f) = (&est.results[0], &est.results[1]);
    let cov = mean_covariance(&est.samples[1], &est.samples[0]);
    let (ratio, ratio_se) = ratio_delta(i_f.value(), i_f.se, i0.value(), i0.se, cov);
    let bias = ratio_bias(i_f.value(), i_f.total_bias_bound(), i0.value(), i0.total_bias_bound());
    let origin = vec![0.0; a.dim()];
    let mut checks = Vec::new();
    let mut table = Table::new("laplace_n_a");
    let mut counts: Vec<Vec<u64>> = Vec::new();
    for &n in &params.n_list {
        let draws = sample_n_a_batch(a, n, &origin, params.trials, laws, &seeder.child(&format!("n={n}")), params.max_attempts, &params.backward.sim)?;
        let lap: Vec<f64> = draws.iter().map(|s| laplace_point(f, &s.config)).collect();
        let m = Moments::from_slice(&lap);
        checks.push(Check::band(&format!("laplace_vs_ratio_n{n}"), Band::new(m.mean, m.std_error(), ratio, ratio_se, bias)));
        table.rows.push(TableRow {
            n,
            estimate: m.mean,
            se: m.std_error(),
            lower: m.mean - 4.0 * m.std_error(),
            upper: m.mean + 4.0 * m.std_error(),
        });
        counts.push(draws.iter().map(|s| s.config.count_in(a) as u64).collect());
    }
    for (w, ns) in counts.windows(2).zip(params.n_list.windows(2)) {
        let t = chi2_two_sample(&w[0], &w[1]);
        checks.push(Check::p_value(&format!("count_histogram_{}_{}", ns[0], ns[1]), t.statistic, t.p_value));
    }
    let details = json!({
        "I_A": i0,
        "I_A_f": i_f,
        "ratio": ratio,
        "ratio_se": ratio_se,
        "ratio_bias_bound": bias,
        "mean_counts": counts.iter().map(|c| c.iter().sum::<u64>() as f64 / c.len().max(1) as f64).collect::<Vec<_>>(),
    });
    Ok(TestReport::from_checks("conditioned_limit", checks, details).with_table(table))
}

/// Sandwich inequality for `P(Z_n(A - x) >= 1)` at each horizon.
pub fn sandwich_report(a: &Ball, x: &[f64], n_list: &[usize], trials: u64, laws: &Laws, seeder: &Seeder, opts: &SimOptions) -> Result<TestReport> {
    let mut checks = Vec::new();
    let mut rows = Vec::new();
    for &n in n_list {
        let s = sandwich_check(a, x, n, trials, laws, seeder, true, opts)?;
        checks.push(Check::flag(&format!("sandwich_n{n}"), s.p_hat.value(), s.pass));
        rows.push(json!(s));
    }
    Ok(TestReport::from_checks("sandwich", checks, json!({ "rows": rows })))
}
