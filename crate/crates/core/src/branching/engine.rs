//! Forward simulation of the branching random walk under `P`.

use crate::error::{Error, Result};
use crate::geometry::Ball;
use crate::laws::{MotionLaw, OffspringLaw};
use rand::Rng;

/// Default per-generation population cap.
pub const POPULATION_CAP: usize = 10_000_000;

/// Positions of one generation, stored flat (`dim` coordinates per particle).
#[derive(Clone, Debug, PartialEq)]
pub struct Generation {
    pub dim: usize,
    pub index: usize,
    pub coords: Vec<f64>,
}

impl Generation {
    pub fn root(x0: &[f64]) -> Self {
        Generation {
            dim: x0.len(),
            index: 0,
            coords: x0.to_vec(),
        }
    }

    pub fn empty(dim: usize, index: usize) -> Self {
        Generation {
            dim,
            index,
            coords: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn positions(&self) -> impl Iterator<Item = &[f64]> {
        self.coords.chunks_exact(self.dim)
    }
}

/// Number of particles in the closed ball `a`.
pub fn count_in_ball(gen: &Generation, a: &Ball) -> usize {
    gen.positions().filter(|x| a.contains(x)).count()
}

/// One reproduction-and-move step, capped at `POPULATION_CAP` particles.
pub fn step_generation<R: Rng + ?Sized>(
    gen: &Generation,
    offspring: &OffspringLaw,
    motion: &MotionLaw,
    rng: &mut R,
) -> Result<Generation> {
    step_generation_capped(gen, offspring, motion, rng, POPULATION_CAP)
}

pub fn step_generation_capped<R: Rng + ?Sized>(
    gen: &Generation,
    offspring: &OffspringLaw,
    motion: &MotionLaw,
    rng: &mut R,
    cap: usize,
) -> Result<Generation> {
    let d = gen.dim;
    let counts: Vec<u64> = (0..gen.len()).map(|_| offspring.sample(rng)).collect();
    let total: u64 = counts.iter().sum();
    if total > cap as u64 {
        return Err(Error::BlowUp {
            generation: gen.index + 1,
            population: total.min(usize::MAX as u64) as usize,
            cap,
        });
    }
    let mut coords = Vec::with_capacity(total as usize * d);
    for (x, &k) in gen.positions().zip(&counts) {
        for _ in 0..k {
            let start = coords.len();
            coords.extend_from_slice(x);
            motion.add_step(rng, &mut coords[start..]);
        }
    }
    Ok(Generation {
        dim: d,
        index: gen.index + 1,
        coords,
    })
}

/// Generation `n` of a tree rooted at `x0`, with the population trace `Z_0..Z_n`.
#[derive(Clone, Debug)]
pub struct Run {
    pub generation: Generation,
    pub trace: Vec<u64>,
}

pub fn run_to_horizon<R: Rng + ?Sized>(
    x0: &[f64],
    n: usize,
    offspring: &OffspringLaw,
    motion: &MotionLaw,
    rng: &mut R,
) -> Result<Run> {
    let mut gen = Generation::root(x0);
    let mut trace = vec![0u64; n + 1];
    trace[0] = 1;
    for k in 1..=n {
        gen = step_generation(&gen, offspring, motion, rng)?;
        trace[k] = gen.len() as u64;
        if gen.is_empty() {
            return Ok(Run {
                generation: Generation::empty(x0.len(), n),
                trace,
            });
        }
    }
    Ok(Run { generation: gen, trace })
}
