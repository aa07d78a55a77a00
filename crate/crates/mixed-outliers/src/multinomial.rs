//! Simultaneous confidence intervals for uniform multinomial counts.
//!
//! An itemset over a variable set with level-count product `K` is judged
//! infrequent when its support falls below the lower edge of a simultaneous
//! `1 - alpha` interval around the uniform expected count `n / K`. The
//! interval half-width `c` comes from the truncated-Poisson approximation
//! with an Edgeworth correction: the smallest integer `c` whose joint
//! coverage estimate reaches `1 - alpha`.

use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

/// Central moments of a Poisson(lambda) truncated to `[a, b]`.
struct TruncatedMoments {
    prob: f64,
    mean: f64,
    var: f64,
    mu3: f64,
    mu4: f64,
}

fn ln_poisson_pmf(k: u64, lambda: f64) -> f64 {
    k as f64 * lambda.ln() - lambda - ln_gamma(k as f64 + 1.0)
}

fn truncated_moments(lambda: f64, a: u64, b: u64) -> TruncatedMoments {
    let mut prob = 0.0;
    let mut mean = 0.0;
    let mut pmf = ln_poisson_pmf(a, lambda).exp();
    let mut pmfs = Vec::with_capacity((b - a + 1) as usize);
    for k in a..=b {
        pmfs.push(pmf);
        prob += pmf;
        mean += pmf * k as f64;
        pmf *= lambda / (k as f64 + 1.0);
    }
    if prob <= 0.0 {
        return TruncatedMoments {
            prob: 0.0,
            mean: 0.0,
            var: 0.0,
            mu3: 0.0,
            mu4: 0.0,
        };
    }
    mean /= prob;
    let (mut var, mut mu3, mut mu4) = (0.0, 0.0, 0.0);
    for (i, &p) in pmfs.iter().enumerate() {
        let d = (a + i as u64) as f64 - mean;
        let w = p / prob;
        var += w * d * d;
        mu3 += w * d * d * d;
        mu4 += w * d * d * d * d;
    }
    TruncatedMoments {
        prob,
        mean,
        var,
        mu3,
        mu4,
    }
}

fn standard_normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Joint coverage estimate for half-width `c` over `k` identical cells with
/// expected count `lambda = n / k`.
fn coverage(n: u64, k: u64, c: u64) -> f64 {
    let lambda = n as f64 / k as f64;
    let a = (lambda - c as f64).ceil().max(0.0) as u64;
    let b = (lambda + c as f64).floor() as u64;
    if a > b {
        return 0.0;
    }
    let m = truncated_moments(lambda, a, b);
    if m.prob <= 0.0 || m.var <= 0.0 {
        return 0.0;
    }
    let kf = k as f64;
    let mu = kf * m.mean;
    let v = kf * m.var;
    let g1 = kf * m.mu3 / v.powf(1.5);
    let g2 = kf * (m.mu4 - 3.0 * m.var * m.var) / (v * v);
    let z = (n as f64 - mu) / v.sqrt();
    let poly = 1.0
        + g1 * (z.powi(3) - 3.0 * z) / 6.0
        + g2 * (z.powi(4) - 6.0 * z * z + 3.0) / 24.0
        + g1 * g1 * (z.powi(6) - 15.0 * z.powi(4) + 45.0 * z * z - 15.0) / 72.0;
    let fe = standard_normal_pdf(z) * poly / v.sqrt();
    let ln_joint = kf * m.prob.ln();
    let ln_pois_n = ln_poisson_pmf(n, n as f64);
    (ln_joint + fe.max(0.0).ln() - ln_pois_n).exp()
}

/// Infrequency threshold `n / K - c` for a uniform multinomial with `n`
/// trials and `k` cells at joint level `1 - alpha`. Clamped at zero; a
/// single cell yields `n` (any shortfall from full support is infrequent by
/// convention there, which never arises for declared columns).
pub fn support_threshold(n: u64, k: u64, alpha: f64) -> Result<f64> {
    if k == 0 {
        return Err(Error::Threshold("zero cells".into()));
    }
    if k == 1 {
        return Ok(n as f64);
    }
    if n == 0 {
        return Ok(0.0);
    }
    let lambda = n as f64 / k as f64;
    let mut c: u64 = 0;
    loop {
        if c as f64 > lambda {
            // Interval already reaches zero on the low side.
            return Ok(0.0);
        }
        if coverage(n, k, c) >= 1.0 - alpha {
            return Ok((lambda - c as f64).max(0.0));
        }
        c += 1;
    }
}

/// `K` as the checked product of per-variable level counts.
pub fn cell_product(levels: &[usize]) -> Result<u64> {
    let mut k: u64 = 1;
    for &l in levels {
        k = k
            .checked_mul(l as u64)
            .ok_or_else(|| Error::Threshold("level-count product overflows u64".into()))?;
    }
    Ok(k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn single_cell_threshold_is_n() {
        assert_eq!(support_threshold(500, 1, 0.01).unwrap(), 500.0);
    }

    #[test]
    fn threshold_decreases_with_more_cells() {
        let a = support_threshold(1000, 4, 0.01).unwrap();
        let b = support_threshold(1000, 16, 0.01).unwrap();
        let c = support_threshold(1000, 256, 0.01).unwrap();
        assert!(a > b && b >= c, "{a} {b} {c}");
    }

    #[test]
    fn threshold_below_expected_count() {
        for &(n, k) in &[(1000u64, 4u64), (3000, 16), (500, 25), (1000, 1024)] {
            let t = support_threshold(n, k, 0.01).unwrap();
            assert!(t <= n as f64 / k as f64);
            assert!(t >= 0.0);
        }
    }

    #[test]
    fn sparse_cells_hit_zero() {
        // lambda < 1 forces the lower edge to zero almost immediately.
        assert_eq!(support_threshold(100, 4096, 0.01).unwrap(), 0.0);
    }

    #[test]
    fn cell_product_overflow_detected() {
        let levels = vec![usize::MAX; 3];
        assert!(cell_product(&levels).is_err());
    }

    // Monte-Carlo oracle: across many uniform multinomials, all cells stay
    // at or above the threshold in at least 99% of draws when alpha = 0.01.
    #[test]
    fn monte_carlo_coverage() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for &(n, k) in &[(200u64, 6u64), (500, 12)] {
            let t = support_threshold(n, k, 0.01).unwrap();
            assert!(t > 0.0, "threshold degenerate for n={n} k={k}");
            let reps = 100_000;
            let mut ok = 0usize;
            let mut counts = vec![0u64; k as usize];
            for _ in 0..reps {
                counts.iter_mut().for_each(|c| *c = 0);
                for _ in 0..n {
                    counts[rng.gen_range(0..k) as usize] += 1;
                }
                if counts.iter().all(|&c| c as f64 >= t) {
                    ok += 1;
                }
            }
            let cov = ok as f64 / reps as f64;
            assert!(cov >= 0.99, "coverage {cov} for n={n} k={k} threshold {t}");
        }
    }
}
