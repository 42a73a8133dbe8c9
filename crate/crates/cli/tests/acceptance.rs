//! Acceptance run: one PASS/FAIL line per criterion, non-zero exit if any fails.

use branchfield::branching::TestFunction;
use branchfield::estimators::{quadrature_lower_bound_i, BackwardTreeParams, SimOptions};
use branchfield::geometry::Ball;
use branchfield::laws::{make_beta_offspring, LatticeKernel, Laws, MotionLaw, OffspringLaw};
use branchfield::pointfield::{FieldOptions, IntensityLaw};
use branchfield::rng::Seeder;
use branchfield::verify::*;
use branchfield::Result;
use branchfield_cli::suite::{asymmetric_kernel, supercritical_control};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

struct Verdict {
    pass: bool,
    detail: String,
}

fn from_reports(reports: &[&TestReport]) -> Verdict {
    let failing: Vec<String> = reports
        .iter()
        .flat_map(|r| r.checks.iter().filter(|c| !c.pass).map(move |c| format!("{}/{}", r.name, c.name)))
        .collect();
    Verdict {
        pass: reports.iter().all(|r| r.pass),
        detail: if failing.is_empty() {
            format!("{} checks", reports.iter().map(|r| r.checks.len()).sum::<usize>())
        } else {
            format!("failing: {}", failing.join(", "))
        },
    }
}

fn h1() -> Laws {
    Laws::binary_gaussian(3).unwrap()
}

fn unit_ball() -> Ball {
    Ball::centered(3, 1.0)
}

fn backward() -> BackwardTreeParams {
    BackwardTreeParams {
        trials: 2000,
        ..BackwardTreeParams::default()
    }
}

fn engine(s: &Seeder) -> Result<Verdict> {
    let laws = [OffspringLaw::binary(), make_beta_offspring(0.5)?];
    let r = engine_check(&laws, &MotionLaw::gaussian(3), &[1, 5, 25], 100_000, s)?;
    Ok(from_reports(&[&r]))
}

fn spatial_survival(s: &Seeder) -> Result<Verdict> {
    let p = ScalingParams {
        n_list: vec![64, 128, 256],
        trials: 1_000_000,
        shift: vec![1.0, 0.0, 0.0],
        plateau_shifted: false,
        ratio_check: true,
        sim: SimOptions::default(),
    };
    let r = survival_scaling(&unit_ball(), &p, &h1(), s)?;
    Ok(from_reports(&[&r]))
}

fn triangulate(s: &Seeder) -> Result<Verdict> {
    let p = TriangulationParams {
        backward: backward(),
        survival_n: 256,
        survival_trials: 20_000_000,
        intensity_n: 128,
        intensity_trials: 1_000_000,
        m_factor: 4.0,
    };
    let r = triangulation(&unit_ball(), &p, &h1(), s)?;
    Ok(from_reports(&[&r]))
}

fn lower_bound(s: &Seeder) -> Result<Verdict> {
    let t = Instant::now();
    for r in [1.0, 2.0] {
        quadrature_lower_bound_i(r, 1.0, 3, 2000, 40)?;
    }
    let quadrature = t.elapsed();
    let p = LowerBoundParams {
        radii: vec![1.0, 2.0],
        k_max: 2000,
        grid: 40,
        backward: backward(),
    };
    let r = lower_bound_check(&p, &h1(), s)?;
    let mut v = from_reports(&[&r]);
    v.pass &= quadrature < Duration::from_secs(1);
    v.detail += &format!(", quadrature {quadrature:.2?}");
    Ok(v)
}

fn conditioned(s: &Seeder) -> Result<Verdict> {
    let a = unit_ball();
    let p = ConditionedParams {
        n_list: vec![128, 256],
        trials: 2000,
        max_attempts: 10_000_000,
        backward: backward(),
    };
    let r = conditioned_limit_check(&a, &TestFunction::cone_bump(a.clone(), 1.0), &p, &h1(), s)?;
    Ok(from_reports(&[&r]))
}

fn laplace(s: &Seeder) -> Result<Verdict> {
    let a = unit_ball();
    let p = LaplaceIdentityParams {
        n: 128,
        trials: 2000,
        backward: backward(),
        field: FieldOptions::default(),
        limit: Some(LimitLeg {
            n: 128,
            max_attempts: 10_000_000,
        }),
    };
    let f = TestFunction::cone_bump(a.clone(), 1.0);
    let r = laplace_identity_test(&IntensityLaw::Constant { theta: 0.5 }, &f, &a, &p, &h1(), s)?;
    Ok(from_reports(&[&r]))
}

fn invariance(s: &Seeder) -> Result<Verdict> {
    let x = IntensityLaw::Constant { theta: 0.5 };
    let params = |trials| InvarianceParams {
        n: 64,
        gap: 32,
        trials,
        field: FieldOptions::default(),
    };
    let r = invariance_test(&x, &unit_ball(), &params(2000), &h1(), &s.child("critical"))?;
    let control = invariance_test(&x, &unit_ball(), &params(200), &supercritical_control(), &s.child("control"))?;
    let mut v = from_reports(&[&r]);
    v.pass &= !control.pass;
    v.detail += &format!(", supercritical control {}", if control.pass { "passed (wrong)" } else { "rejected" });
    Ok(v)
}

fn compatibility(s: &Seeder) -> Result<Verdict> {
    let p = CompatibilityParams {
        n: 128,
        trials: 5000,
        max_attempts: 10_000_000,
        backward: backward(),
    };
    let r = compatibility_test(&unit_ball(), &Ball::centered(3, 2.0), &p, &h1(), s)?;
    Ok(from_reports(&[&r]))
}

fn lattice(s: &Seeder) -> Result<Verdict> {
    let k = LatticeKernel::lazy_simple(3);
    let llt = llt_check(&k, &[8, 16, 32], f64::INFINITY, 0, s)?;
    let heat = heat_kernel_check(&k, &[8, 16, 32], &[1.0, 0.75, 0.5, 0.25])?;
    let control = llt_check(&asymmetric_kernel(3), &[8, 16, 32], f64::INFINITY, 0, s)?;
    let mut v = from_reports(&[&llt, &heat]);
    v.pass &= !control.pass;
    v.detail += &format!(", asymmetric control {}", if control.pass { "passed (wrong)" } else { "rejected" });
    Ok(v)
}

fn stable(s: &Seeder) -> Result<Verdict> {
    let r1 = stable_checks(1.0, 3, &StableCheckParams::default(), s)?;
    let r2 = stable_checks(1.5, 3, &StableCheckParams::default(), s)?;
    let laws = Laws::new(make_beta_offspring(0.5)?, MotionLaw::stable(1.0, 3)?)?;
    let p = ScalingParams {
        n_list: vec![64, 128],
        trials: 20_000_000,
        shift: vec![1.0, 0.0, 0.0],
        plateau_shifted: true,
        ratio_check: false,
        sim: SimOptions::default(),
    };
    let mut scaling = survival_scaling(&Ball::centered(3, 4.0), &p, &laws, s)?;
    scaling.name = "h3_survival_scaling".into();
    Ok(from_reports(&[&r1, &r2, &scaling]))
}

fn run_suite(config: &Path, out: &Path) -> Result<i32> {
    let o = std::process::Command::new(env!("CARGO_BIN_EXE_branchfield"))
        .args(["suite", "--workers", "1", "--config"])
        .arg(config)
        .arg("--out")
        .arg(out)
        .output()?;
    Ok(o.status.code().unwrap_or(-1))
}

fn json_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut v: Vec<PathBuf> = std::fs::read_dir(dir)?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    v.retain(|p| !p.to_string_lossy().ends_with(".meta.json"));
    v.sort();
    Ok(v)
}

fn determinism(_: &Seeder) -> Result<Verdict> {
    let config = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/smoke.toml");
    let tmp = tempfile::tempdir()?;
    let out = tmp.path().join("out");
    let code1 = run_suite(&config, &out)?;
    let first: Vec<(PathBuf, Vec<u8>)> = json_files(&out)?
        .into_iter()
        .map(|p| std::fs::read(&p).map(|b| (p, b)))
        .collect::<std::io::Result<_>>()?;
    std::fs::remove_dir_all(&out)?;
    let code2 = run_suite(&config, &out)?;
    let second = json_files(&out)?;
    let mut differing = Vec::new();
    if second.len() != first.len() {
        differing.push(format!("{} vs {} files", first.len(), second.len()));
    }
    for (p, bytes) in &first {
        if std::fs::read(p).ok().as_ref() != Some(bytes) {
            differing.push(p.file_name().unwrap().to_string_lossy().into_owned());
        }
    }
    Ok(Verdict {
        pass: differing.is_empty() && code1 == code2,
        detail: format!(
            "{} output files, exit codes {code1}/{code2}{}",
            first.len(),
            if differing.is_empty() { String::new() } else { format!(", differing: {}", differing.join(", ")) }
        ),
    })
}

type Criterion = (&'static str, u64, fn(&Seeder) -> Result<Verdict>);

fn main() {
    let criteria: [Criterion; 11] = [
        ("engine survival vs extinction recursion", 30, engine),
        ("rescaled survival plateau and Gaussian shift ratio", 300, spatial_survival),
        ("three estimates of I_A agree", 300, triangulate),
        ("quadrature lower bound below I_A and increasing", 0, lower_bound),
        ("conditioned limit process", 300, conditioned),
        ("Laplace functional identity, three ways", 600, laplace),
        ("cluster invariance with supercritical control", 600, invariance),
        ("compatibility across nested balls", 600, compatibility),
        ("lattice local limit and heat kernel bounds", 60, lattice),
        ("stable sampler and H3 rescaled survival plateau", 600, stable),
        ("suite output is byte-identical across runs", 0, determinism),
    ];
    let seeder = Seeder::new(42);
    let mut failures = 0;
    let mut stdout = std::io::stdout();
    for (i, (name, budget, f)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let verdict = f(&seeder.child(&format!("criterion{}", i + 1)));
        let elapsed = t.elapsed();
        let (mut pass, mut detail) = match verdict {
            Ok(v) => (v.pass, v.detail),
            Err(e) => (false, format!("error: {e}")),
        };
        if *budget > 0 && elapsed > Duration::from_secs(*budget) {
            pass = false;
            detail += &format!(", over the {budget} s budget");
        }
        if !pass {
            failures += 1;
        }
        writeln!(
            stdout,
            "criterion {:2} {}: {name} ({detail}; {:.1} s)",
            i + 1,
            if pass { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64()
        )
        .unwrap();
        stdout.flush().unwrap();
    }
    if failures > 0 {
        eprintln!("{failures} acceptance criteria failed");
        std::process::exit(1);
    }
}
