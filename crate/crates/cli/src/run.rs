//! Subcommand dispatch and artifact writing.
//!
//! Sample sizes by subcommand: `survival`, `intensity-sum`, `llt` (Monte Carlo
//! horizons only) and `stable` use `[run] trials`; `sample-na`,
//! `build-lambda`, `invariance`, `compat` and `laplace-id` use `[run] fields`.
//! Single-horizon subcommands use the first entry of `[run] n_list`.

use crate::config::{ExperimentConfig, HypothesisTag};
use crate::suite;
use branchfield::branching::TestFunction;
use branchfield::estimators::{
    build_lambda_infinity_on_ball, default_depth, estimate_i, estimate_survival, lattice_intensity_sum,
    quadrature_lower_bound_i, sample_n_a_batch, NaSampler,
};
use branchfield::pointfield::{required_window, PointConfiguration, Window};
use branchfield::rng::{par_items, with_workers, Seeder};
use branchfield::verify::{
    compatibility_test, heat_kernel_check, invariance_test, laplace_identity_test, llt_check, stable_checks,
    CompatibilityParams, InvarianceParams, LaplaceIdentityParams, LimitLeg, StableCheckParams, Table, TableRow, TestReport,
};
use branchfield::{Error, Result};
use serde_json::{json, Value};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

pub const EXIT_PASS: i32 = 0;
pub const EXIT_FAIL: i32 = 2;
pub const EXIT_CONFIG: i32 = 3;
pub const EXIT_RESOURCE: i32 = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Command {
    Survival,
    EstimateI,
    IntensitySum,
    LowerBound,
    SampleNa,
    BuildLambda,
    Invariance,
    Compat,
    LaplaceId,
    Llt,
    HeatKernel,
    Stable,
    Suite,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Survival => "survival",
            Command::EstimateI => "estimate-i",
            Command::IntensitySum => "intensity-sum",
            Command::LowerBound => "lower-bound",
            Command::SampleNa => "sample-na",
            Command::BuildLambda => "build-lambda",
            Command::Invariance => "invariance",
            Command::Compat => "compat",
            Command::LaplaceId => "laplace-id",
            Command::Llt => "llt",
            Command::HeatKernel => "heat-kernel",
            Command::Stable => "stable",
            Command::Suite => "suite",
        }
    }
}

/// Result of a run that reached the end without an error.
#[derive(Clone, Debug, PartialEq)]
pub struct Outcome {
    /// False when a statistical test failed.
    pub pass: bool,
    /// Error raised by a suite item, if any; the run still wrote its summary.
    pub error_code: Option<i32>,
    pub files: Vec<PathBuf>,
}

impl Outcome {
    pub fn exit_code(&self) -> i32 {
        match self.error_code {
            Some(c) => c,
            None if self.pass => EXIT_PASS,
            None => EXIT_FAIL,
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    if e.is_resource() {
        EXIT_RESOURCE
    } else {
        EXIT_CONFIG
    }
}

/// Run `cmd`, writing its artifacts into `config.out`. Wall-clock times go
/// to `<cmd>.meta.json` so every other output is reproducible byte for byte.
pub fn run(cmd: Command, config: &ExperimentConfig) -> Result<Outcome> {
    std::fs::create_dir_all(&config.out)
        .map_err(|e| Error::Config(format!("cannot create output directory {}: {e}; check --out", config.out.display())))?;
    let started = SystemTime::now();
    let seeder = Seeder::new(config.seed).child(cmd.name());
    let mut outcome = with_workers(config.workers, || dispatch(cmd, config, &seeder))?;
    let finished = SystemTime::now();
    let secs = |t: SystemTime| t.duration_since(UNIX_EPOCH).map_or(0.0, |d| d.as_secs_f64());
    let meta = json!({
        "command": cmd.name(),
        "version": env!("CARGO_PKG_VERSION"),
        "workers": config.workers,
        "started_unix": secs(started),
        "finished_unix": secs(finished),
        "elapsed_seconds": secs(finished) - secs(started),
    });
    outcome.files.push(write_json(&config.out, &format!("{}.meta", cmd.name()), &meta)?);
    Ok(outcome)
}

pub(crate) fn write_json(dir: &Path, name: &str, value: &Value) -> Result<PathBuf> {
    let path = dir.join(format!("{name}.json"));
    let mut w = BufWriter::new(File::create(&path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(path)
}

fn write_report(mut report: TestReport, config: &ExperimentConfig) -> Result<Outcome> {
    let files = report.write(&config.out, &config.to_json())?;
    Ok(Outcome {
        pass: report.pass,
        error_code: None,
        files,
    })
}

fn write_values(name: &str, config: &ExperimentConfig, body: Value, tables: &[Table]) -> Result<Outcome> {
    let mut files = vec![write_json(&config.out, name, &json!({ "config": config.to_json(), "results": body }))?];
    for t in tables {
        let path = config.out.join(format!("{name}_{}.csv", t.name));
        t.write_csv(File::create(&path)?)?;
        files.push(path);
    }
    Ok(Outcome {
        pass: true,
        error_code: None,
        files,
    })
}

/// One CSV for many configurations: `sample,x1,...,xd`.
fn write_points(path: &Path, dim: usize, configs: &[PointConfiguration]) -> Result<()> {
    let io = |e: csv::Error| Error::Io(std::io::Error::other(e.to_string()));
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
    let mut header = vec!["sample".to_string()];
    header.extend((1..=dim).map(|i| format!("x{i}")));
    w.write_record(&header).map_err(io)?;
    for (i, c) in configs.iter().enumerate() {
        for x in c.points() {
            let mut row = vec![i.to_string()];
            row.extend(x.iter().map(|v| v.to_string()));
            w.write_record(&row).map_err(io)?;
        }
    }
    w.flush()?;
    Ok(())
}

fn first_n(config: &ExperimentConfig) -> usize {
    config.run.n_list[0]
}

fn require(config: &ExperimentConfig, tag: HypothesisTag, cmd: Command) -> Result<()> {
    if config.laws.hypothesis != tag {
        return Err(Error::Config(format!(
            "{} needs [laws] hypothesis = \"{tag:?}\", got \"{:?}\"",
            cmd.name(),
            config.laws.hypothesis
        )));
    }
    Ok(())
}

fn dispatch(cmd: Command, config: &ExperimentConfig, seeder: &Seeder) -> Result<Outcome> {
    let laws = config.laws()?;
    let a = config.ball();
    let d = a.dim();
    let run = &config.run;
    match cmd {
        Command::Survival => {
            let mut table = Table::new("estimates");
            let mut results = Vec::new();
            for &n in &run.n_list {
                let p = estimate_survival(&a, &config.geometry.root, n, run.trials, &laws, seeder, &config.sim())?;
                table.rows.push(TableRow {
                    n,
                    estimate: p.value(),
                    se: p.se,
                    lower: p.lower(),
                    upper: p.upper(),
                });
                results.push(p);
            }
            write_values(cmd.name(), config, json!(results), &[table])
        }
        Command::EstimateI => {
            let params = config.backward();
            let fs = [TestFunction::zero(a.clone()), config.test_function()];
            let est = estimate_i(&a, &fs, &params, &laws, seeder)?;
            let body = json!({
                "K": est.k,
                "default_K": default_depth(&a, &laws, &params),
                "I_A": est.results[0],
                "I_A_f": est.results[1],
            });
            write_values(cmd.name(), config, body, &[])
        }
        Command::IntensitySum => {
            let mut table = Table::new("estimates");
            let mut results = Vec::new();
            for &n in &run.n_list {
                let m = config.truncation.m_factor;
                let radius = required_window(&laws.motion, n, &a, m);
                let window = Window::ball(radius, d, laws.motion.is_lattice())?;
                let r = lattice_intensity_sum(&a, n, run.trials, &window, &laws, seeder, m, &config.sim())?;
                table.rows.push(TableRow {
                    n,
                    estimate: r.value(),
                    se: r.se,
                    lower: r.lower(),
                    upper: r.upper(),
                });
                results.push(r);
            }
            write_values(cmd.name(), config, json!(results), &[table])
        }
        Command::LowerBound => {
            require(config, HypothesisTag::H1, cmd)?;
            let t = &config.truncation;
            let mut bounds = Vec::new();
            for &r in &t.radii {
                bounds.push(json!({ "r": r, "bound": quadrature_lower_bound_i(r, laws.sigma2(), d, t.k_max, t.grid)? }));
            }
            write_values(cmd.name(), config, json!(bounds), &[])
        }
        Command::SampleNa => {
            let n = first_n(config);
            let draws = sample_n_a_batch(&a, n, &config.geometry.root, run.fields, &laws, seeder, run.max_attempts, &config.sim())?;
            let configs: Vec<PointConfiguration> = draws.iter().map(|s| s.config.clone()).collect();
            let points = config.out.join("sample-na_points.csv");
            write_points(&points, d, &configs)?;
            let attempts: u64 = draws.iter().map(|s| s.attempts).sum();
            let body = json!({
                "n": n,
                "samples": draws.len(),
                "attempts": attempts,
                "acceptance_rate": draws.len() as f64 / attempts.max(1) as f64,
                "counts": configs.iter().map(|c| c.count_in(&a)).collect::<Vec<_>>(),
            });
            let mut out = write_values(cmd.name(), config, body, &[])?;
            out.files.push(points);
            Ok(out)
        }
        Command::BuildLambda => {
            let n = first_n(config);
            let est = estimate_i(&a, &[TestFunction::zero(a.clone())], &config.backward(), &laws, &seeder.child("I_A"))?;
            let i_a = est.results[0].value();
            let sampler = NaSampler::new(&a, n, &vec![0.0; d], &laws, &config.sim());
            let configs = par_items(seeder, "build_lambda", run.fields, |rng, _| {
                build_lambda_infinity_on_ball(&a, &config.intensity, i_a, |r| Ok(sampler.sample(r, run.max_attempts)?.config), rng)
            })
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
            let points = config.out.join("build-lambda_points.csv");
            write_points(&points, d, &configs)?;
            let body = json!({
                "n": n,
                "I_A": est.results[0],
                "counts": configs.iter().map(|c| c.count_in(&a)).collect::<Vec<_>>(),
            });
            let mut out = write_values(cmd.name(), config, body, &[])?;
            out.files.push(points);
            Ok(out)
        }
        Command::Invariance => {
            let params = InvarianceParams {
                n: first_n(config),
                gap: run.gap,
                trials: run.fields,
                field: config.field(),
            };
            write_report(invariance_test(&config.intensity, &a, &params, &laws, seeder)?, config)
        }
        Command::Compat => {
            let params = CompatibilityParams {
                n: first_n(config),
                trials: run.fields,
                max_attempts: run.max_attempts,
                backward: config.backward(),
            };
            write_report(compatibility_test(&a, &config.outer_ball(), &params, &laws, seeder)?, config)
        }
        Command::LaplaceId => {
            let n = first_n(config);
            let params = LaplaceIdentityParams {
                n,
                trials: run.fields,
                backward: config.backward(),
                field: config.field(),
                limit: run.limit_leg.then_some(LimitLeg {
                    n,
                    max_attempts: run.max_attempts,
                }),
            };
            let f = config.test_function();
            write_report(laplace_identity_test(&config.intensity, &f, &a, &params, &laws, seeder)?, config)
        }
        Command::Llt => {
            require(config, HypothesisTag::H2, cmd)?;
            let window = config.truncation.llt_window.unwrap_or(f64::INFINITY);
            write_report(llt_check(&config.lattice_kernel()?, &run.n_list, window, run.trials, seeder)?, config)
        }
        Command::HeatKernel => {
            require(config, HypothesisTag::H2, cmd)?;
            write_report(heat_kernel_check(&config.lattice_kernel()?, &run.n_list, &config.truncation.tau_grid)?, config)
        }
        Command::Stable => {
            require(config, HypothesisTag::H3, cmd)?;
            let alpha = laws.motion.alpha();
            let params = StableCheckParams {
                trials: run.trials,
                ..StableCheckParams::default()
            };
            write_report(stable_checks(alpha, d, &params, seeder)?, config)
        }
        Command::Suite => suite::run_suite(config, &laws, seeder),
    }
}
