use super::backward::power_tail;
use crate::error::{Error, Result};
use crate::geometry::ball_volume;
use crate::laws::oracle::gaussian_ball_prob;
use crate::stats::{normal_cdf, normal_pdf};

/// `P(|N(m e_1, s2 I)| <= rho)` in dimension 3, closed form.
fn gauss_ball_3(s2: f64, m: f64, rho: f64) -> f64 {
    let s = s2.sqrt();
    let (m, rho) = (m / s, rho / s);
    if m < 1e-8 {
        // chi distribution with 3 degrees of freedom
        return 2.0 * normal_cdf(rho) - 1.0 - 2.0 * rho * normal_pdf(rho);
    }
    normal_cdf(rho - m) + normal_cdf(rho + m) - 1.0 - (normal_pdf(rho - m) - normal_pdf(rho + m)) / m
}

/// Lower bound on `I_{B(0,r)}` for Gaussian motion:
/// `int_A (1 + sigma^2 sum_k P(y + N(0, 2k I) in A))^(-1) dy`.
/// The sum runs to `k_max`; the remaining terms are replaced by the larger
/// `|A| (4 pi)^(-d/2) sum_{k > k_max} k^(-d/2)`, so the result stays a lower
/// bound. The outer radial integral uses `grid` midpoint cells.
pub fn quadrature_lower_bound_i(r: f64, sigma2: f64, d: usize, k_max: usize, grid: usize) -> Result<f64> {
    if d < 3 {
        return Err(Error::Domain(format!("the occupation series diverges for d = {d} < 3")));
    }
    if !(r > 0.0) || sigma2 < 0.0 || grid == 0 {
        return Err(Error::Domain("need r > 0, sigma^2 >= 0 and a positive grid".into()));
    }
    let vol = ball_volume(d, r);
    if sigma2 == 0.0 {
        return Ok(vol);
    }
    let df = d as f64;
    let tail = vol * (4.0 * std::f64::consts::PI).powf(-df / 2.0) * power_tail(k_max, df / 2.0);
    let area = df * ball_volume(d, 1.0);
    let h = r / grid as f64;
    let mut total = 0.0;
    for i in 0..grid {
        let t = (i as f64 + 0.5) * h;
        let mut occ = tail;
        for k in 1..=k_max {
            let s2 = 2.0 * k as f64;
            occ += if d == 3 {
                gauss_ball_3(s2, t, r)
            } else {
                gaussian_ball_prob(d, s2, t, r).value
            };
        }
        total += area * t.powi(d as i32 - 1) * h / (1.0 + sigma2 * occ);
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;

    // Cartesian Riemann sums on a cubic grid: both the occupation
    // probabilities and the outer integral.
    fn riemann(r: f64, sigma2: f64, k_max: usize, h: f64) -> f64 {
        let m = (r / h).ceil() as i32;
        let mut cells = Vec::new();
        for i in -m..m {
            for j in -m..m {
                for l in -m..m {
                    let p = [(i as f64 + 0.5) * h, (j as f64 + 0.5) * h, (l as f64 + 0.5) * h];
                    if p.iter().map(|c| c * c).sum::<f64>() <= r * r {
                        cells.push(p);
                    }
                }
            }
        }
        let vol = cells.len() as f64 * h.powi(3);
        let tail: f64 = (k_max + 1..2_000_000).map(|k| (k as f64).powf(-1.5)).sum::<f64>()
            * vol
            * (4.0 * std::f64::consts::PI).powf(-1.5);
        let mut total = 0.0;
        for y in &cells {
            let mut occ = tail;
            for k in 1..=k_max {
                let s2 = 2.0 * k as f64;
                let norm = (2.0 * std::f64::consts::PI * s2).powf(-1.5) * h.powi(3);
                occ += cells
                    .iter()
                    .map(|z| {
                        let q: f64 = z.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
                        norm * (-q / (2.0 * s2)).exp()
                    })
                    .sum::<f64>();
            }
            total += h.powi(3) / (1.0 + sigma2 * occ);
        }
        total
    }

    #[test]
    fn matches_cartesian_riemann_sum() {
        let lb = quadrature_lower_bound_i(1.0, 1.0, 3, 8, 60).unwrap();
        let oracle = riemann(1.0, 1.0, 8, 0.1);
        assert!((lb - oracle).abs() / oracle < 0.02, "{lb} vs {oracle}");
    }

    #[test]
    fn no_branching_gives_volume() {
        let v = quadrature_lower_bound_i(2.0, 0.0, 3, 10, 5).unwrap();
        assert!((v - 4.0 / 3.0 * std::f64::consts::PI * 8.0).abs() < 1e-12);
    }

    #[test]
    fn low_dimension_is_rejected() {
        assert!(quadrature_lower_bound_i(1.0, 1.0, 2, 10, 5).is_err());
    }
}
