//! Statistical checks that turn limit statements into pass/fail reports and
//! convergence tables.

mod analytic;
mod fields;
mod limits;
mod scaling;
mod stable;

pub use analytic::{heat_kernel_check, llt_check, HeatKernelFit};
pub use fields::{
    compatibility_test, invariance_test, laplace_identity_test, CompatibilityParams, FieldSamples, InvarianceParams,
    LaplaceIdentityParams, LimitLeg,
};
pub use limits::{conditioned_limit_check, engine_check, lower_bound_check, sandwich_report, ConditionedParams, LowerBoundParams};
pub use scaling::{limit_density, survival_scaling, triangulation, ScalingParams, TriangulationParams};
pub use stable::{stable_checks, StableCheckParams};

use crate::error::Result;
use crate::estimators::EstimatorResult;
use crate::stats::SequencePoint;
use serde::{Deserialize, Serialize};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

/// Significance level of every hypothesis test.
pub const SIGNIFICANCE: f64 = 1e-3;
/// Width of agreement bands, in combined standard errors.
pub const BAND_SE: f64 = 4.0;
/// Allowed drift between consecutive estimates, as a fraction of the final interval width.
pub const DRIFT_FRACTION: f64 = 0.25;

/// `|lhs - rhs| <= k * se + bias`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub lhs: f64,
    pub rhs: f64,
    /// Combined standard error.
    pub se: f64,
    /// Declared deterministic bias allowance.
    pub bias: f64,
    pub k: f64,
}

impl Band {
    pub fn new(lhs: f64, se_lhs: f64, rhs: f64, se_rhs: f64, bias: f64) -> Self {
        Band {
            lhs,
            rhs,
            se: se_lhs.hypot(se_rhs),
            bias,
            k: BAND_SE,
        }
    }

    pub fn between(a: &EstimatorResult, b: &EstimatorResult) -> Self {
        Band::new(a.value(), a.se, b.value(), b.se, a.total_bias_bound() + b.total_bias_bound())
    }

    pub fn holds(&self) -> bool {
        (self.lhs - self.rhs).abs() <= self.k * self.se + self.bias
    }

    /// Distance in combined standard errors.
    pub fn z(&self) -> f64 {
        if self.se > 0.0 {
            (self.lhs - self.rhs).abs() / self.se
        } else if self.lhs == self.rhs {
            0.0
        } else {
            f64::INFINITY
        }
    }
}

/// One elementary assertion inside a report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub statistic: f64,
    pub p_value: Option<f64>,
    pub band: Option<Band>,
    pub pass: bool,
}

impl Check {
    pub fn p_value(name: &str, statistic: f64, p: f64) -> Self {
        Check {
            name: name.into(),
            statistic,
            p_value: Some(p),
            band: None,
            pass: p > SIGNIFICANCE,
        }
    }

    pub fn band(name: &str, band: Band) -> Self {
        Check {
            name: name.into(),
            statistic: band.z(),
            p_value: None,
            pass: band.holds(),
            band: Some(band),
        }
    }

    pub fn flag(name: &str, statistic: f64, pass: bool) -> Self {
        Check {
            name: name.into(),
            statistic,
            p_value: None,
            band: None,
            pass,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub name: String,
    /// Statistic of the weakest check.
    pub statistic: f64,
    /// Smallest p-value among the checks, when any check is a test.
    pub p_value: Option<f64>,
    pub pass: bool,
    /// Number of p-value comparisons made at [`SIGNIFICANCE`].
    pub comparisons: usize,
    pub checks: Vec<Check>,
    pub details: serde_json::Value,
    pub tables: Vec<Table>,
    pub artifacts: Vec<String>,
}

impl TestReport {
    /// A report passes iff every check does.
    pub fn from_checks(name: &str, checks: Vec<Check>, details: serde_json::Value) -> Self {
        let p_value = checks.iter().filter_map(|c| c.p_value).reduce(f64::min);
        let comparisons = checks.iter().filter(|c| c.p_value.is_some()).count();
        let worst = checks
            .iter()
            .find(|c| !c.pass)
            .or_else(|| checks.iter().max_by(|a, b| a.statistic.total_cmp(&b.statistic)));
        TestReport {
            name: name.into(),
            statistic: worst.map_or(0.0, |c| c.statistic),
            p_value,
            pass: !checks.is_empty() && checks.iter().all(|c| c.pass),
            comparisons,
            checks,
            details,
            tables: Vec::new(),
            artifacts: Vec::new(),
        }
    }

    pub fn with_table(mut self, table: Table) -> Self {
        self.tables.push(table);
        self
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    /// Write `<name>.json` and one CSV per table into `dir`, recording the
    /// paths in `artifacts`.
    pub fn write(&mut self, dir: &Path, config: &serde_json::Value) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir)?;
        let mut paths = Vec::new();
        self.artifacts.clear();
        for t in &self.tables {
            let file = format!("{}_{}.csv", self.name, t.name);
            t.write_csv(File::create(dir.join(&file))?)?;
            self.artifacts.push(file.clone());
            paths.push(dir.join(file));
        }
        let file = dir.join(format!("{}.json", self.name));
        let mut w = BufWriter::new(File::create(&file)?);
        serde_json::to_writer_pretty(&mut w, &serde_json::json!({ "config": config, "report": self }))?;
        writeln!(w)?;
        paths.insert(0, file);
        Ok(paths)
    }
}

/// Convergence table: one row per horizon.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub name: String,
    pub rows: Vec<TableRow>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub n: usize,
    pub estimate: f64,
    pub se: f64,
    pub lower: f64,
    pub upper: f64,
}

impl TableRow {
    pub fn point(&self) -> SequencePoint {
        SequencePoint {
            estimate: self.estimate,
            lower: self.lower,
            upper: self.upper,
        }
    }
}

impl Table {
    pub fn new(name: &str) -> Self {
        Table {
            name: name.into(),
            rows: Vec::new(),
        }
    }

    pub fn points(&self) -> Vec<SequencePoint> {
        self.rows.iter().map(TableRow::point).collect()
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        for r in &self.rows {
            out.serialize(r).map_err(|e| crate::Error::Io(std::io::Error::other(e)))?;
        }
        out.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn band_arithmetic() {
        let b = Band::new(1.0, 0.3, 2.0, 0.4, 0.0);
        assert!((b.se - 0.5).abs() < 1e-15);
        assert!(b.holds());
        assert!((b.z() - 2.0).abs() < 1e-12);
        assert!(!Band::new(1.0, 0.0, 2.0, 0.0, 0.5).holds());
        assert!(Band::new(1.0, 0.0, 2.0, 0.0, 1.0).holds());
    }

    #[test]
    fn report_fails_when_any_check_fails() {
        let r = TestReport::from_checks(
            "x",
            vec![Check::p_value("a", 1.0, 0.5), Check::p_value("b", 30.0, 1e-5)],
            serde_json::Value::Null,
        );
        assert!(!r.pass);
        assert_eq!(r.p_value, Some(1e-5));
        assert_eq!(r.statistic, 30.0);
        assert_eq!(r.comparisons, 2);
        assert!(!TestReport::from_checks("empty", vec![], serde_json::Value::Null).pass);
    }

    #[test]
    fn csv_columns() {
        let mut t = Table::new("seq");
        t.rows.push(TableRow {
            n: 8,
            estimate: 0.5,
            se: 0.1,
            lower: 0.2,
            upper: 0.8,
        });
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "n,estimate,se,lower,upper\n8,0.5,0.1,0.2,0.8\n");
    }
}
