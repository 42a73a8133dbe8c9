//! The full battery: every check at the scales of `[suite]`, plus two
//! negative controls that must fail.

use crate::config::ExperimentConfig;
use crate::run::{exit_code, write_json, Outcome};
use branchfield::geometry::Ball;
use branchfield::laws::{make_beta_offspring, LatticeKernel, Laws, MotionLaw, OffspringLaw};
use branchfield::rng::Seeder;
use branchfield::verify::{
    compatibility_test, conditioned_limit_check, engine_check, heat_kernel_check, invariance_test, laplace_identity_test,
    llt_check, lower_bound_check, stable_checks, survival_scaling, triangulation, CompatibilityParams, ConditionedParams,
    InvarianceParams, LaplaceIdentityParams, LimitLeg, LowerBoundParams, ScalingParams, StableCheckParams, TestReport,
    TriangulationParams,
};
use branchfield::{Error, Result};
use serde_json::json;

struct Item<'a> {
    name: String,
    /// Negative controls are expected to fail.
    expect_pass: bool,
    run: Box<dyn Fn(&Seeder) -> Result<TestReport> + 'a>,
}

impl<'a> Item<'a> {
    fn new(name: &str, run: impl Fn(&Seeder) -> Result<TestReport> + 'a) -> Self {
        Item {
            name: name.into(),
            expect_pass: true,
            run: Box::new(run),
        }
    }

    fn control(name: &str, run: impl Fn(&Seeder) -> Result<TestReport> + 'a) -> Self {
        Item {
            expect_pass: false,
            ..Item::new(name, run)
        }
    }
}

/// Offspring law with mean 1.02: branching grows the field, so invariance must fail.
pub fn supercritical_control() -> Laws {
    Laws::unchecked(
        OffspringLaw::from_pmf_any_mean(vec![0.49, 0.0, 0.51]).expect("normalized table"),
        MotionLaw::gaussian(3),
    )
}

/// Lattice kernel with a drift along the first axis.
pub fn asymmetric_kernel(d: usize) -> LatticeKernel {
    let mut support = vec![vec![0i64; d]];
    let mut probs = vec![0.5];
    for i in 0..d {
        for s in [1i64, -1] {
            let mut e = vec![0i64; d];
            e[i] = s;
            support.push(e);
            probs.push(if i == 0 { if s == 1 { 0.15 } else { 0.05 } } else { 0.3 / (2 * (d - 1)) as f64 });
        }
    }
    LatticeKernel::new_unchecked(support, probs).expect("normalized kernel")
}

fn items<'a>(c: &'a ExperimentConfig, laws: &'a Laws) -> Result<Vec<Item<'a>>> {
    let s = &c.suite;
    let d = c.laws.dimension;
    let a = c.ball();
    let f = c.test_function();
    let backward = c.backward();
    let max_attempts = c.run.max_attempts;
    let mut out = Vec::new();

    let beta_law = make_beta_offspring(s.engine_beta)?;
    out.push(Item::new("engine", move |sd| {
        engine_check(&[OffspringLaw::binary(), beta_law.clone()], &laws.motion, &s.engine_n, s.engine_trials, sd)
    }));
    let (a1, shift) = (a.clone(), c.geometry.shift.clone());
    out.push(Item::new("survival_scaling", move |sd| {
        let p = ScalingParams {
            n_list: s.scaling_n.clone(),
            trials: s.scaling_trials,
            shift: shift.clone(),
            plateau_shifted: c.run.plateau_shifted,
            ratio_check: true,
            sim: c.sim(),
        };
        survival_scaling(&a1, &p, laws, sd)
    }));
    let a1 = a.clone();
    out.push(Item::new("triangulation", move |sd| {
        let p = TriangulationParams {
            backward,
            survival_n: s.survival_n,
            survival_trials: s.survival_trials,
            intensity_n: s.intensity_n,
            intensity_trials: s.intensity_trials,
            m_factor: s.intensity_m_factor,
        };
        triangulation(&a1, &p, laws, sd)
    }));
    if matches!(laws.motion, MotionLaw::Gaussian { .. }) {
        out.push(Item::new("lower_bound", move |sd| {
            let p = LowerBoundParams {
                radii: c.truncation.radii.clone(),
                k_max: c.truncation.k_max,
                grid: c.truncation.grid,
                backward,
            };
            lower_bound_check(&p, laws, sd)
        }));
    }
    let (a1, f1) = (a.clone(), f.clone());
    out.push(Item::new("conditioned_limit", move |sd| {
        let p = ConditionedParams {
            n_list: s.conditioned_n.clone(),
            trials: s.conditioned_trials,
            max_attempts,
            backward,
        };
        conditioned_limit_check(&a1, &f1, &p, laws, sd)
    }));
    let (a1, f1) = (a.clone(), f.clone());
    out.push(Item::new("laplace_identity", move |sd| {
        let p = LaplaceIdentityParams {
            n: s.laplace_n,
            trials: s.laplace_fields,
            backward,
            field: c.field(),
            limit: Some(LimitLeg {
                n: s.laplace_limit_n,
                max_attempts,
            }),
        };
        laplace_identity_test(&c.intensity, &f1, &a1, &p, laws, sd)
    }));
    let invariance = move |fields: u64| InvarianceParams {
        n: s.invariance_n,
        gap: s.invariance_gap,
        trials: fields,
        field: c.field(),
    };
    let a1 = a.clone();
    out.push(Item::new("invariance", move |sd| {
        invariance_test(&c.intensity, &a1, &invariance(s.invariance_fields), laws, sd)
    }));
    let a1 = Ball::centered(3, c.geometry.radius);
    out.push(Item::control("control_supercritical_invariance", move |sd| {
        invariance_test(&c.intensity, &a1, &invariance(s.control_fields), &supercritical_control(), sd)
    }));
    let a1 = a.clone();
    out.push(Item::new("compatibility", move |sd| {
        let p = CompatibilityParams {
            n: s.compat_n,
            trials: s.compat_trials,
            max_attempts,
            backward,
        };
        compatibility_test(&a1, &c.outer_ball(), &p, laws, sd)
    }));
    let kernel = c.lattice_kernel()?;
    let window = c.truncation.llt_window.unwrap_or(f64::INFINITY);
    let k1 = kernel.clone();
    out.push(Item::new("llt", move |sd| llt_check(&k1, &s.llt_n, window, 0, sd)));
    out.push(Item::new("heat_kernel", move |_| heat_kernel_check(&kernel, &s.llt_n, &c.truncation.tau_grid)));
    out.push(Item::control("control_asymmetric_llt", move |sd| {
        llt_check(&asymmetric_kernel(d), &s.llt_n, window, 0, sd)
    }));
    for &alpha in &s.stable_alphas {
        out.push(Item::new(&format!("stable_alpha_{alpha}"), move |sd| {
            let p = StableCheckParams {
                trials: s.stable_trials,
                ..StableCheckParams::default()
            };
            stable_checks(alpha, d, &p, sd)
        }));
    }
    let h3 = Laws::new(make_beta_offspring(s.h3_beta)?, MotionLaw::stable(s.h3_alpha, d)?)
        .map_err(|e| Error::Config(format!("[suite] h3_alpha / h3_beta: {e}")))?;
    let shift = c.geometry.shift.clone();
    out.push(Item::new("h3_survival_scaling", move |sd| {
        let p = ScalingParams {
            n_list: s.h3_n.clone(),
            trials: s.h3_trials,
            shift: shift.clone(),
            plateau_shifted: true,
            ratio_check: false,
            sim: c.sim(),
        };
        survival_scaling(&Ball::centered(d, s.h3_radius), &p, &h3, sd)
    }));
    Ok(out)
}

/// Run every item, write one report per item and `summary.json`. An item
/// that errors is recorded and the rest still run; the first error decides
/// the exit code.
pub fn run_suite(config: &ExperimentConfig, laws: &Laws, seeder: &Seeder) -> Result<Outcome> {
    let cfg = config.to_json();
    let mut files = Vec::new();
    let mut rows = Vec::new();
    let mut all_ok = true;
    let mut error_code = None;
    for item in items(config, laws)? {
        match (item.run)(&seeder.child(&item.name)) {
            Ok(mut report) => {
                report.name = item.name.clone();
                files.extend(report.write(&config.out, &cfg)?);
                let ok = report.pass == item.expect_pass;
                all_ok &= ok;
                rows.push(json!({
                    "name": item.name,
                    "expect_pass": item.expect_pass,
                    "pass": report.pass,
                    "ok": ok,
                    "statistic": report.statistic,
                    "p_value": report.p_value,
                    "comparisons": report.comparisons,
                }));
            }
            Err(e) => {
                all_ok = false;
                error_code.get_or_insert(exit_code(&e));
                rows.push(json!({
                    "name": item.name,
                    "expect_pass": item.expect_pass,
                    "ok": false,
                    "error": e.to_string(),
                }));
            }
        }
    }
    let summary = json!({ "config": cfg, "pass": all_ok, "items": rows });
    files.push(write_json(&config.out, "summary", &summary)?);
    Ok(Outcome {
        pass: all_ok,
        error_code,
        files,
    })
}
