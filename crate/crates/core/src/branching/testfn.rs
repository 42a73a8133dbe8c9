//! Nonnegative continuous test functions supported in a ball.

use crate::error::{Error, Result};
use crate::geometry::{dist2, Ball};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TestFunctionKind {
    Zero,
    /// Equal to the amplitude up to `plateau * radius`, then linear down to 0 at the boundary.
    IndicatorSmoothed { plateau: f64 },
    /// `amplitude * (1 - |x - c| / radius)` inside the ball.
    ConeBump,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum Mode {
    /// Weight `exp(-sum f)`.
    Laplace,
    /// Weight `exp(i eta sum f)`.
    Characteristic { eta: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestFunction {
    pub kind: TestFunctionKind,
    pub support: Ball,
    pub amplitude: f64,
    pub mode: Mode,
}

impl TestFunction {
    pub fn zero(support: Ball) -> Self {
        TestFunction {
            kind: TestFunctionKind::Zero,
            support,
            amplitude: 0.0,
            mode: Mode::Laplace,
        }
    }

    pub fn cone_bump(support: Ball, amplitude: f64) -> Self {
        TestFunction {
            kind: TestFunctionKind::ConeBump,
            support,
            amplitude,
            mode: Mode::Laplace,
        }
    }

    pub fn indicator_smoothed(support: Ball, amplitude: f64, plateau: f64) -> Self {
        TestFunction {
            kind: TestFunctionKind::IndicatorSmoothed { plateau },
            support,
            amplitude,
            mode: Mode::Laplace,
        }
    }

    pub fn with_mode(mut self, mode: Mode) -> Self {
        self.mode = mode;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.amplitude >= 0.0 && self.amplitude.is_finite()) {
            return Err(Error::Domain(format!("test function amplitude must be finite and >= 0, got {}", self.amplitude)));
        }
        if let TestFunctionKind::IndicatorSmoothed { plateau } = self.kind {
            if !(0.0..1.0).contains(&plateau) {
                return Err(Error::Domain(format!("plateau fraction must lie in [0, 1), got {plateau}")));
            }
        }
        if !(self.support.radius > 0.0) {
            return Err(Error::Domain("test function support must have positive radius".into()));
        }
        Ok(())
    }

    pub fn is_zero(&self) -> bool {
        matches!(self.kind, TestFunctionKind::Zero) || self.amplitude == 0.0
    }

    /// Support contained in `a`.
    pub fn supported_in(&self, a: &Ball) -> bool {
        self.is_zero() || a.contains_ball(&self.support)
    }

    #[inline]
    pub fn eval(&self, x: &[f64]) -> f64 {
        if self.is_zero() {
            return 0.0;
        }
        let r2 = dist2(&self.support.center, x);
        let rad = self.support.radius;
        if r2 > rad * rad {
            return 0.0;
        }
        let t = r2.sqrt() / rad;
        match self.kind {
            TestFunctionKind::Zero => 0.0,
            TestFunctionKind::ConeBump => self.amplitude * (1.0 - t),
            TestFunctionKind::IndicatorSmoothed { plateau } => {
                if t <= plateau {
                    self.amplitude
                } else {
                    self.amplitude * (1.0 - t) / (1.0 - plateau)
                }
            }
        }
    }

    /// `exp(-s)` or `exp(i eta s)` according to the mode.
    #[inline]
    pub fn weight(&self, s: f64) -> Complex64 {
        match self.mode {
            Mode::Laplace => Complex64::new((-s).exp(), 0.0),
            Mode::Characteristic { eta } => Complex64::from_polar(1.0, eta * s),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn evaluation_and_support() {
        let a = Ball::centered(3, 2.0);
        let f = TestFunction::cone_bump(a.clone(), 1.5);
        assert_eq!(f.eval(&[0.0; 3]), 1.5);
        assert_eq!(f.eval(&[2.0, 0.0, 0.0]), 0.0);
        assert_eq!(f.eval(&[2.5, 0.0, 0.0]), 0.0);
        assert!((f.eval(&[1.0, 0.0, 0.0]) - 0.75).abs() < 1e-15);
        let g = TestFunction::indicator_smoothed(a.clone(), 1.0, 0.5);
        assert_eq!(g.eval(&[0.9, 0.0, 0.0]), 1.0);
        assert!((g.eval(&[1.5, 0.0, 0.0]) - 0.5).abs() < 1e-15);
        assert!(f.supported_in(&Ball::centered(3, 2.0)));
        assert!(!f.supported_in(&Ball::centered(3, 1.0)));
        assert!(TestFunction::zero(a.clone()).supported_in(&Ball::centered(3, 0.1)));
        assert!(TestFunction::indicator_smoothed(a, 1.0, 1.0).validate().is_err());
    }

    #[test]
    fn weights() {
        let f = TestFunction::zero(Ball::centered(3, 1.0));
        assert_eq!(f.weight(0.0), Complex64::new(1.0, 0.0));
        let g = f.with_mode(Mode::Characteristic { eta: 2.0 });
        assert!((g.weight(0.5).arg() - 1.0).abs() < 1e-15);
        assert!((g.weight(0.5).norm() - 1.0).abs() < 1e-15);
    }
}
