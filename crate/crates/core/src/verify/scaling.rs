use super::{Band, Check, Table, TableRow, TestReport, DRIFT_FRACTION};
use crate::branching::TestFunction;
use crate::error::{Error, Result};
use crate::estimators::{
    estimate_i, estimate_survival, lattice_intensity_sum, truncation_bias_bound, BackwardTreeParams, EstimatorResult,
    SimOptions,
};
use crate::geometry::{norm, Ball};
use crate::laws::motion::spd_inverse;
use crate::laws::oracle::cauchy_density;
use crate::laws::{Laws, MotionLaw};
use crate::pointfield::{required_window, window_mass_bound, Window, WindowShape};
use crate::rng::Seeder;
use crate::stats::{plateau, ratio_delta};
use serde::{Deserialize, Serialize};
use serde_json::json;
use std::f64::consts::PI;

/// Density `L` of the rescaled walk `S_n / n^(1/alpha)` in the limit.
pub fn limit_density(motion: &MotionLaw, z: &[f64]) -> Result<f64> {
    let d = motion.dim();
    match motion {
        MotionLaw::Gaussian { .. } => {
            let r2: f64 = z.iter().map(|c| c * c).sum();
            Ok((2.0 * PI).powf(-(d as f64) / 2.0) * (-r2 / 2.0).exp())
        }
        MotionLaw::Lattice(k) => {
            let (inv, det) = spd_inverse(k.covariance(), d).ok_or_else(|| Error::Domain("degenerate covariance".into()))?;
            let mut q = 0.0;
            for i in 0..d {
                for j in 0..d {
                    q += z[i] * inv[i * d + j] * z[j];
                }
            }
            Ok((2.0 * PI).powf(-(d as f64) / 2.0) / det.sqrt() * (-q / 2.0).exp())
        }
        MotionLaw::Stable { alpha, .. } if *alpha == 1.0 => Ok(cauchy_density(d, norm(z))),
        _ => Err(Error::NoOracle(format!(
            "no closed-form limit density for alpha = {}",
            motion.alpha()
        ))),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingParams {
    pub n_list: Vec<usize>,
    /// Trials per `(n, x)`.
    pub trials: u64,
    /// Shift `a`; the tree starts at `a n^(1/alpha)`.
    pub shift: Vec<f64>,
    /// Also require the shifted sequence to stabilize.
    pub plateau_shifted: bool,
    /// Compare `P(shifted) / P(origin)` with `L(a) / L(0)` at every horizon.
    pub ratio_check: bool,
    pub sim: SimOptions,
}

/// Rescaled survival `n^(d/alpha) P(Z_n(A - x) >= 1) / L(x / n^(1/alpha))`
/// for `x = 0` and `x = a n^(1/alpha)`: the sequence at `x = 0` must
/// stabilize along `n_list`, and with `ratio_check` the ratio of the two
/// probabilities must match `L(a) / L(0)` within 4 standard errors at every `n`.
pub fn survival_scaling(a: &Ball, params: &ScalingParams, laws: &Laws, seeder: &Seeder) -> Result<TestReport> {
    let motion = &laws.motion;
    let d = laws.dim() as f64;
    let alpha = motion.alpha();
    let l0 = limit_density(motion, &vec![0.0; laws.dim()])?;
    let mut tables = [Table::new("rescaled_survival_origin"), Table::new("rescaled_survival_shifted")];
    let mut checks = Vec::new();
    let mut raw = Vec::new();
    for &n in &params.n_list {
        let s = (n as f64).powf(1.0 / alpha);
        let mut x: Vec<f64> = params.shift.iter().map(|c| c * s).collect();
        if motion.is_lattice() {
            x.iter_mut().for_each(|c| *c = c.round());
        }
        let la = limit_density(motion, &x.iter().map(|c| c / s).collect::<Vec<_>>())?;
        let scale = (n as f64).powf(d / alpha);
        let p0 = estimate_survival(a, &vec![0.0; laws.dim()], n, params.trials, laws, seeder, &params.sim)?;
        let px = estimate_survival(a, &x, n, params.trials, laws, seeder, &params.sim)?;
        for (t, (p, l)) in tables.iter_mut().zip([(&p0, l0), (&px, la)]) {
            let k = scale / l;
            t.rows.push(TableRow {
                n,
                estimate: k * p.value(),
                se: k * p.se,
                lower: k * p.lower(),
                upper: k * p.upper(),
            });
        }
        let (r, se) = ratio_delta(px.value(), px.se, p0.value(), p0.se, 0.0);
        if params.ratio_check {
            checks.push(Check::band(&format!("shift_ratio_n{n}"), Band::new(r, se, la / l0, 0.0, 0.0)));
        }
        raw.push(json!({ "n": n, "origin": p0, "shifted": px }));
    }
    let mut plateaus = Vec::new();
    for (i, t) in tables.iter().enumerate() {
        if i == 1 && !params.plateau_shifted {
            continue;
        }
        let p = plateau(&t.points(), DRIFT_FRACTION);
        checks.push(Check::flag(
            &format!("plateau_{}", t.name),
            p.drifts.iter().copied().fold(0.0, f64::max) / p.drift_limit,
            p.pass,
        ));
        plateaus.push(json!({ "table": t.name, "outcome": p }));
    }
    let details = json!({
        "A": a,
        "shift": params.shift,
        "trials": params.trials,
        "plateau": plateaus,
        "estimates": raw,
    });
    let [t0, t1] = tables;
    Ok(TestReport::from_checks("survival_scaling", checks, details).with_table(t0).with_table(t1))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TriangulationParams {
    pub backward: BackwardTreeParams,
    pub survival_n: usize,
    pub survival_trials: u64,
    pub intensity_n: usize,
    pub intensity_trials: u64,
    pub m_factor: f64,
}

/// Three estimates of `I_A` (backward tree, rescaled survival, intensity sum)
/// must agree pairwise within 4 combined standard errors plus the declared
/// biases. The finite-horizon routes carry the truncation bound at depth `n`.
pub fn triangulation(a: &Ball, params: &TriangulationParams, laws: &Laws, seeder: &Seeder) -> Result<TestReport> {
    let d = laws.dim();
    let zero = TestFunction::zero(a.clone());
    let backward = estimate_i(a, std::slice::from_ref(&zero), &params.backward, laws, &seeder.child("backward"))?
        .results
        .remove(0);

    let n = params.survival_n;
    let p = estimate_survival(a, &vec![0.0; d], n, params.survival_trials, laws, &seeder.child("survival"), &params.backward.sim)?;
    let k = (n as f64).powf(d as f64 / laws.motion.alpha()) / limit_density(&laws.motion, &vec![0.0; d])?;
    let mut survival = EstimatorResult::real("rescaled_survival", k * p.value(), k * p.se, p.n, seeder.master())
        .with_ci(k * p.lower(), k * p.upper())
        .with_bias("prune_bias_bound", k * p.total_bias_bound());
    if let Some(b) = truncation_bias_bound(a, laws, n, &zero) {
        survival = survival.with_bias("truncation_bias_bound", b);
    }
    if let MotionLaw::Gaussian { .. } = laws.motion {
        // the density of S_n varies by at most this factor over A
        let far = norm(&a.center) + a.radius;
        let lclt = 1.0 - (-far * far / (2.0 * n as f64)).exp();
        let bound = lclt * survival.upper();
        survival = survival.with_bias("lclt_bias_bound", bound);
    }

    let m = params.intensity_n;
    let radius = required_window(&laws.motion, m, a, params.m_factor);
    let window = Window::new(WindowShape::Ball, radius, d, laws.motion.is_lattice())?;
    let mut intensity = lattice_intensity_sum(
        a,
        m,
        params.intensity_trials,
        &window,
        laws,
        &seeder.child("intensity"),
        params.m_factor,
        &params.backward.sim,
    )?;
    if let Some(b) = truncation_bias_bound(a, laws, m, &zero) {
        intensity = intensity.with_bias("truncation_bias_bound", b);
    }
    if let Some(w) = window_mass_bound(&laws.motion, m, a, radius) {
        intensity = intensity.with_bias("window_bias_bound", w);
    }
    let checks = vec![
        Check::band("backward_vs_survival", Band::between(&backward, &survival)),
        Check::band("backward_vs_intensity", Band::between(&backward, &intensity)),
        Check::band("survival_vs_intensity", Band::between(&survival, &intensity)),
    ];
    let details = json!({
        "A": a,
        "backward": backward,
        "rescaled_survival": survival,
        "intensity_sum": intensity,
    });
    Ok(TestReport::from_checks("triangulation", checks, details))
}
