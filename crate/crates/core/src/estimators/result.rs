use crate::stats::{z_for_level, Moments};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

pub const DEFAULT_CI_LEVEL: f64 = 0.999;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Estimate {
    Real(f64),
    /// `[re, im]`
    Complex([f64; 2]),
}

impl Estimate {
    pub fn re(&self) -> f64 {
        match self {
            Estimate::Real(x) => *x,
            Estimate::Complex([re, _]) => *re,
        }
    }

    pub fn as_complex(&self) -> Complex64 {
        match self {
            Estimate::Real(x) => Complex64::new(*x, 0.0),
            Estimate::Complex([re, im]) => Complex64::new(*re, *im),
        }
    }
}

/// A Monte Carlo estimate with its uncertainty. Serializes to
/// `{name, params, estimate, se, ci, n, bias_metadata, seed}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimatorResult {
    pub name: String,
    pub params: serde_json::Value,
    pub estimate: Estimate,
    pub se: f64,
    /// Interval on the real part.
    pub ci: [f64; 2],
    pub ci_level: f64,
    pub n: u64,
    pub bias_metadata: BTreeMap<String, f64>,
    pub seed: u64,
}

impl EstimatorResult {
    pub fn real(name: &str, estimate: f64, se: f64, n: u64, seed: u64) -> Self {
        let z = z_for_level(DEFAULT_CI_LEVEL);
        EstimatorResult {
            name: name.to_string(),
            params: serde_json::Value::Null,
            estimate: Estimate::Real(estimate),
            se,
            ci: [estimate - z * se, estimate + z * se],
            ci_level: DEFAULT_CI_LEVEL,
            n,
            bias_metadata: BTreeMap::new(),
            seed,
        }
    }

    pub fn from_moments(name: &str, m: &Moments, seed: u64) -> Self {
        Self::real(name, m.mean, m.std_error(), m.n, seed)
    }

    /// Complex estimate; `se` combines both parts.
    pub fn complex(name: &str, re: &Moments, im: &Moments, seed: u64) -> Self {
        let se = (re.std_error().powi(2) + im.std_error().powi(2)).sqrt();
        let mut r = Self::real(name, re.mean, re.std_error(), re.n, seed);
        r.estimate = Estimate::Complex([re.mean, im.mean]);
        r.se = se;
        r
    }

    pub fn with_params(mut self, params: serde_json::Value) -> Self {
        self.params = params;
        self
    }

    pub fn with_bias(mut self, key: &str, value: f64) -> Self {
        self.bias_metadata.insert(key.to_string(), value);
        self
    }

    pub fn with_ci(mut self, lo: f64, hi: f64) -> Self {
        self.ci = [lo, hi];
        self
    }

    pub fn value(&self) -> f64 {
        self.estimate.re()
    }

    /// Sum of every `*_bias_bound` entry.
    pub fn total_bias_bound(&self) -> f64 {
        self.bias_metadata
            .iter()
            .filter(|(k, _)| k.ends_with("bias_bound"))
            .map(|(_, v)| v.abs())
            .sum()
    }

    pub fn lower(&self) -> f64 {
        self.ci[0]
    }

    pub fn upper(&self) -> f64 {
        self.ci[1]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_shape() {
        let r = EstimatorResult::real("x", 1.0, 0.1, 10, 42).with_bias("truncation_bias_bound", 0.01);
        let v = serde_json::to_value(&r).unwrap();
        for key in ["name", "params", "estimate", "se", "ci", "n", "bias_metadata", "seed"] {
            assert!(v.get(key).is_some(), "{key}");
        }
        assert!((r.ci[1] - 1.0 - 0.329).abs() < 1e-3);
        assert_eq!(r.total_bias_bound(), 0.01);
    }
}
