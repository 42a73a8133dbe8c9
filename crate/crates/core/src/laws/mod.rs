//! Offspring and motion distributions, hypothesis pairing rules and exact oracles.

pub mod motion;
pub mod offspring;
pub mod oracle;

pub use motion::{positive_stable, LatticeKernel, MotionLaw};
pub use offspring::{
    gw_extinction_iterate, make_beta_offspring, make_beta_offspring_with_cutoff, size_biased, Family,
    OffspringLaw, SizeBiasedLaw,
};
pub use oracle::{motion_ball_prob_oracle, LatticePmf, OracleValue};

use crate::error::{Error, Result};
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Hypothesis {
    /// Gaussian motion, finite offspring variance, `d >= 3`.
    H1,
    /// Lattice motion, finite offspring variance, `d >= 3`.
    H2,
    /// Isotropic stable motion, offspring in the domain of attraction of index `1 + beta`, `d > alpha / beta`.
    H3 { alpha: f64, beta: f64 },
}

/// An offspring law paired with a motion law.
#[derive(Clone, Debug)]
pub struct Laws {
    pub offspring: OffspringLaw,
    pub motion: MotionLaw,
    nu: SizeBiasedLaw,
}

impl Laws {
    /// Validates the pairing rules of the three hypotheses.
    pub fn new(offspring: OffspringLaw, motion: MotionLaw) -> Result<Self> {
        if !offspring.is_critical() {
            return Err(Error::Invariant(format!(
                "offspring law must be critical, mean is {}",
                offspring.mean()
            )));
        }
        let laws = Self::unchecked(offspring, motion);
        laws.hypothesis()?;
        Ok(laws)
    }

    /// No pairing or criticality checks. For negative controls and stubs.
    pub fn unchecked(offspring: OffspringLaw, motion: MotionLaw) -> Self {
        let nu = offspring.size_biased_normalized();
        Laws { offspring, motion, nu }
    }

    pub fn binary_gaussian(dim: usize) -> Result<Self> {
        Self::new(OffspringLaw::binary(), MotionLaw::gaussian(dim))
    }

    pub fn dim(&self) -> usize {
        self.motion.dim()
    }

    /// Size-biased law, normalized by the mean.
    pub fn nu(&self) -> &SizeBiasedLaw {
        &self.nu
    }

    /// Offspring variance `sigma^2`.
    pub fn sigma2(&self) -> f64 {
        self.offspring.variance()
    }

    pub fn hypothesis(&self) -> Result<Hypothesis> {
        let d = self.dim();
        match &self.motion {
            MotionLaw::Gaussian { .. } | MotionLaw::Lattice(_) => {
                let tag = if self.motion.is_lattice() { "H2" } else { "H1" };
                if d < 3 {
                    return Err(Error::Precondition(format!("{tag} requires d >= 3, got d = {d}")));
                }
                if !self.offspring.variance().is_finite() {
                    return Err(Error::Precondition(format!(
                        "{tag} requires finite offspring variance; use a finite table or beta = 1"
                    )));
                }
                Ok(if self.motion.is_lattice() { Hypothesis::H2 } else { Hypothesis::H1 })
            }
            MotionLaw::Stable { alpha, .. } => {
                let beta = self.offspring.tail_index();
                if (d as f64) <= alpha / beta {
                    return Err(Error::Precondition(format!(
                        "H3 requires d > alpha/beta, got d = {d}, alpha/beta = {:.4}",
                        alpha / beta
                    )));
                }
                Ok(Hypothesis::H3 { alpha: *alpha, beta })
            }
            MotionLaw::Still { .. } => Err(Error::Precondition("motionless stub satisfies no hypothesis".into())),
        }
    }

    #[inline]
    pub fn sample_offspring<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        self.offspring.sample(rng)
    }

    #[inline]
    pub fn sample_size_biased<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        self.nu.sample(rng)
    }
}
