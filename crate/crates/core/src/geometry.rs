//! Closed euclidean balls and small vector helpers on flat coordinate buffers.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ball {
    pub center: Vec<f64>,
    pub radius: f64,
}

impl Ball {
    pub fn new(center: Vec<f64>, radius: f64) -> Self {
        Ball { center, radius }
    }

    pub fn centered(dim: usize, radius: f64) -> Self {
        Ball {
            center: vec![0.0; dim],
            radius,
        }
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    /// Closed-ball membership; boundary points are inside.
    #[inline]
    pub fn contains(&self, x: &[f64]) -> bool {
        dist2(&self.center, x) <= self.radius * self.radius
    }

    pub fn volume(&self) -> f64 {
        ball_volume(self.dim(), self.radius)
    }

    pub fn contains_ball(&self, other: &Ball) -> bool {
        dist2(&self.center, &other.center).sqrt() + other.radius <= self.radius + 1e-12
    }

    /// Ball translated by `-shift`, i.e. the set `A - shift`.
    pub fn shifted_by_neg(&self, shift: &[f64]) -> Ball {
        Ball {
            center: self.center.iter().zip(shift).map(|(c, s)| c - s).collect(),
            radius: self.radius,
        }
    }

    /// Integer points of the ball.
    pub fn lattice_points(&self) -> Vec<Vec<i64>> {
        let d = self.dim();
        let lo: Vec<i64> = self
            .center
            .iter()
            .map(|c| (c - self.radius).ceil() as i64)
            .collect();
        let hi: Vec<i64> = self
            .center
            .iter()
            .map(|c| (c + self.radius).floor() as i64)
            .collect();
        let mut out = Vec::new();
        if lo.iter().zip(&hi).any(|(l, h)| l > h) {
            return out;
        }
        let mut cur = lo.clone();
        let mut xf = vec![0.0; d];
        loop {
            for (f, c) in xf.iter_mut().zip(&cur) {
                *f = *c as f64;
            }
            if self.contains(&xf) {
                out.push(cur.clone());
            }
            let mut i = 0;
            loop {
                if i == d {
                    return out;
                }
                cur[i] += 1;
                if cur[i] <= hi[i] {
                    break;
                }
                cur[i] = lo[i];
                i += 1;
            }
        }
    }
}

/// Volume of a euclidean ball of radius `r` in dimension `d`.
pub fn ball_volume(d: usize, r: f64) -> f64 {
    let half = d as f64 / 2.0;
    PI.powf(half) / statrs::function::gamma::gamma(half + 1.0) * r.powi(d as i32)
}

#[inline]
pub fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}
