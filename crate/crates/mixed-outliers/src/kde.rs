//! Adaptive-bandwidth Gaussian kernel density estimation, one estimator per
//! level of a discrete variable.
//!
//! Each training point carries its own bandwidth, its distance to the k-th
//! nearest fellow training point with k = max(1, floor(m * alpha)), so the
//! mixture integrates to one exactly. Coordinates are standardized by the
//! training set's median/MAD before any distance or kernel evaluation; the
//! Jacobian of that rescaling is folded into the density so estimators
//! fitted on different levels stay comparable.

use crate::stats::{mad, median, sample_std};

const LN_2PI: f64 = 1.8378770664093453;

#[derive(Debug, Clone)]
pub struct KdeEvaluator {
    /// Standardized training points, row-major m x d over kept dimensions.
    points: Vec<Vec<f64>>,
    /// Per kept dimension: (source index, center, scale).
    transform: Vec<(usize, f64, f64)>,
    /// Sum of log scales, the Jacobian correction.
    log_jacobian: f64,
    /// Per-point bandwidths in standardized coordinates.
    bandwidths: Vec<f64>,
    /// Dimensions dropped for having no spread at all.
    pub dropped_dims: Vec<usize>,
}

impl KdeEvaluator {
    /// Fits on `points` (rows over the context columns). Needs at least two
    /// rows. A column with zero MAD falls back to its standard deviation;
    /// when both vanish the column is dropped.
    pub fn fit(points: &[Vec<f64>], alpha: f64) -> Self {
        let m = points.len();
        assert!(m >= 2, "need at least two training points");
        let d = points[0].len();
        let mut transform = Vec::new();
        let mut dropped = Vec::new();
        for dim in 0..d {
            let col: Vec<f64> = points.iter().map(|p| p[dim]).collect();
            let center = median(&col);
            let mut scale = mad(&col);
            if scale == 0.0 {
                scale = sample_std(&col);
            }
            if scale == 0.0 {
                dropped.push(dim);
            } else {
                transform.push((dim, center, scale));
            }
        }
        let standardized: Vec<Vec<f64>> = points
            .iter()
            .map(|p| transform.iter().map(|&(j, c, s)| (p[j] - c) / s).collect())
            .collect();
        let log_jacobian = transform.iter().map(|&(_, _, s)| s.ln()).sum();
        let k = ((m as f64 * alpha).floor().max(1.0) as usize).min(m - 1);
        let bandwidths: Vec<f64> = standardized
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let mut d: Vec<f64> = standardized
                    .iter()
                    .enumerate()
                    .filter(|&(j, _)| j != i)
                    .map(|(_, q)| {
                        p.iter()
                            .zip(q)
                            .map(|(a, b)| (a - b) * (a - b))
                            .sum::<f64>()
                            .sqrt()
                    })
                    .collect();
                d.select_nth_unstable_by(k - 1, |a, b| a.partial_cmp(b).unwrap());
                let h = d[k - 1];
                if h > 0.0 {
                    h
                } else {
                    // Coincident points; use the nearest positive distance.
                    d.sort_by(|a, b| a.partial_cmp(b).unwrap());
                    d.iter().copied().find(|&v| v > 0.0).unwrap_or(1e-12)
                }
            })
            .collect();
        KdeEvaluator {
            points: standardized,
            transform,
            log_jacobian,
            bandwidths,
            dropped_dims: dropped,
        }
    }

    /// Log-density at `x` (in original coordinates), including the Jacobian
    /// correction. Returns negative infinity only for empty dimensions.
    pub fn log_density(&self, x: &[f64]) -> f64 {
        let q: Vec<f64> = self
            .transform
            .iter()
            .map(|&(j, c, s)| (x[j] - c) / s)
            .collect();
        let d = q.len();
        if d == 0 {
            return f64::NEG_INFINITY;
        }
        let m = self.points.len() as f64;
        // Product Gaussian kernel with per-point bandwidth h_i:
        // log K = -d/2 log(2 pi) - d log h_i - r_i^2 / (2 h_i^2).
        let terms: Vec<f64> = self
            .points
            .iter()
            .zip(&self.bandwidths)
            .map(|(p, &h)| {
                let r2: f64 = p.iter().zip(&q).map(|(a, b)| (a - b) * (a - b)).sum();
                -0.5 * r2 / (h * h) - d as f64 * h.ln()
            })
            .collect();
        let lse = crate::stats::logsumexp(&terms);
        lse - m.ln() - 0.5 * d as f64 * LN_2PI - self.log_jacobian
    }

    /// Log-density with a per-query bandwidth, the distance from `x` to its
    /// k-th nearest training point with k = max(1, floor(m * alpha)).
    pub fn log_density_balloon(&self, x: &[f64], alpha: f64) -> f64 {
        let q: Vec<f64> = self
            .transform
            .iter()
            .map(|&(j, c, s)| (x[j] - c) / s)
            .collect();
        let d = q.len();
        if d == 0 {
            return f64::NEG_INFINITY;
        }
        let m = self.points.len();
        let k = ((m as f64 * alpha).floor().max(1.0) as usize).min(m);
        let mut dists: Vec<f64> = self
            .points
            .iter()
            .map(|p| {
                p.iter()
                    .zip(&q)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt()
            })
            .collect();
        let mut sorted = dists.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut h = sorted[k - 1];
        if h <= 0.0 {
            h = sorted.iter().copied().find(|&v| v > 0.0).unwrap_or(1e-12);
        }
        for r in &mut dists {
            *r = -0.5 * (*r / h) * (*r / h) - d as f64 * h.ln();
        }
        let lse = crate::stats::logsumexp(&dists);
        lse - (m as f64).ln() - 0.5 * d as f64 * LN_2PI - self.log_jacobian
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn cluster(center: f64, n: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let e: f64 = StandardNormal.sample(&mut rng);
                vec![center + e]
            })
            .collect()
    }

    #[test]
    fn peaks_at_cluster_center() {
        let pts = cluster(0.0, 200, 1);
        let kde = KdeEvaluator::fit(&pts, 0.3);
        let at_center = kde.log_density(&[0.0]);
        let far = kde.log_density(&[20.0]);
        assert!(at_center > far);
    }

    #[test]
    fn integrates_to_one() {
        let pts = cluster(0.0, 150, 2);
        let kde = KdeEvaluator::fit(&pts, 0.3);
        let (lo, hi, steps) = (-15.0, 15.0, 3000);
        let dx = (hi - lo) / steps as f64;
        let mass: f64 = (0..steps)
            .map(|i| kde.log_density(&[lo + (i as f64 + 0.5) * dx]).exp() * dx)
            .sum();
        assert!((mass - 1.0).abs() < 0.05, "mass {mass}");
    }

    #[test]
    fn valley_between_clusters() {
        let mut pts = cluster(-6.0, 100, 3);
        pts.extend(cluster(6.0, 100, 4));
        let kde = KdeEvaluator::fit(&pts, 0.3);
        let mid = kde.log_density(&[0.0]);
        assert!(mid < kde.log_density(&[-6.0]));
        assert!(mid < kde.log_density(&[6.0]));
    }

    #[test]
    fn constant_column_dropped() {
        let pts: Vec<Vec<f64>> = (0..50).map(|i| vec![i as f64, 7.0]).collect();
        let kde = KdeEvaluator::fit(&pts, 0.3);
        assert_eq!(kde.dropped_dims, vec![1]);
        assert!(kde.log_density(&[25.0, 7.0]).is_finite());
    }

    #[test]
    fn jacobian_makes_scales_comparable() {
        // The same shape at two different scales should give the same
        // density at corresponding points up to the 1/scale factor.
        let narrow = cluster(0.0, 300, 5);
        let wide: Vec<Vec<f64>> = narrow.iter().map(|p| vec![p[0] * 10.0]).collect();
        let k1 = KdeEvaluator::fit(&narrow, 0.3);
        let k2 = KdeEvaluator::fit(&wide, 0.3);
        let a = k1.log_density(&[0.5]);
        let b = k2.log_density(&[5.0]) + (10.0f64).ln();
        assert!((a - b).abs() < 1e-9, "{a} vs {b}");
    }
}
