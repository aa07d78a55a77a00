//! Globally optimal one-dimensional K-means by dynamic programming.
//!
//! Optimal clusters of sorted scalars are contiguous intervals, so the
//! search space is the set of breakpoint placements and the DP over prefix
//! sums finds the exact minimum within-cluster sum of squares.

use crate::error::{Error, Result};

/// Exact K-means partition of ascending `values` into `k` clusters.
/// Returns the cluster index of every value, ascending from 0.
pub fn kmeans_1d(values: &[f64], k: usize) -> Result<Vec<usize>> {
    let n = values.len();
    if k == 0 || k > n {
        return Err(Error::KmeansArity { k, values: n });
    }
    debug_assert!(values.windows(2).all(|w| w[0] <= w[1]));

    // Prefix sums give interval SSE in O(1):
    // sse(a..=b) = sum sq - (sum)^2 / count.
    let mut prefix = vec![0.0; n + 1];
    let mut prefix_sq = vec![0.0; n + 1];
    for (i, &v) in values.iter().enumerate() {
        prefix[i + 1] = prefix[i] + v;
        prefix_sq[i + 1] = prefix_sq[i] + v * v;
    }
    let sse = |a: usize, b: usize| -> f64 {
        let s = prefix[b + 1] - prefix[a];
        let sq = prefix_sq[b + 1] - prefix_sq[a];
        (sq - s * s / (b - a + 1) as f64).max(0.0)
    };

    // cost[m][j]: best SSE for the first j values in m+1 clusters.
    let mut cost = vec![vec![f64::INFINITY; n + 1]; k];
    let mut split = vec![vec![0usize; n + 1]; k];
    for j in 1..=n {
        cost[0][j] = sse(0, j - 1);
    }
    for m in 1..k {
        for j in (m + 1)..=n {
            for i in m..j {
                let c = cost[m - 1][i] + sse(i, j - 1);
                if c < cost[m][j] {
                    cost[m][j] = c;
                    split[m][j] = i;
                }
            }
        }
    }

    let mut assignment = vec![0usize; n];
    let mut end = n;
    for m in (0..k).rev() {
        let start = if m == 0 { 0 } else { split[m][end] };
        for idx in start..end {
            assignment[idx] = m;
        }
        end = start;
    }
    Ok(assignment)
}

/// Size of the first cluster (the one holding the smallest value).
pub fn first_cluster_size(values: &[f64], k: usize) -> Result<usize> {
    let assignment = kmeans_1d(values, k)?;
    Ok(assignment.iter().filter(|&&c| c == 0).count())
}

#[cfg(test)]
mod tests {
    use super::*;
    use itertools::Itertools;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn total_sse(values: &[f64], assignment: &[usize], k: usize) -> f64 {
        (0..k)
            .map(|c| {
                let pts: Vec<f64> = values
                    .iter()
                    .zip(assignment)
                    .filter(|(_, &a)| a == c)
                    .map(|(&v, _)| v)
                    .collect();
                if pts.is_empty() {
                    return 0.0;
                }
                let m = pts.iter().sum::<f64>() / pts.len() as f64;
                pts.iter().map(|v| (v - m) * (v - m)).sum::<f64>()
            })
            .sum()
    }

    // Every contiguous partition, enumerated by breakpoint choice.
    fn exhaustive_best(values: &[f64], k: usize) -> f64 {
        let n = values.len();
        (1..n)
            .combinations(k - 1)
            .map(|brk| {
                let mut assignment = vec![0usize; n];
                let mut cluster = 0;
                for i in 0..n {
                    if brk.contains(&i) {
                        cluster += 1;
                    }
                    assignment[i] = cluster;
                }
                total_sse(values, &assignment, k)
            })
            .fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn single_cluster() {
        let a = kmeans_1d(&[1.0, 2.0, 9.0], 1).unwrap();
        assert_eq!(a, vec![0, 0, 0]);
    }

    #[test]
    fn pinned_partitions() {
        let a = kmeans_1d(&[0.0, 0.1, 5.0], 2).unwrap();
        assert_eq!(a, vec![0, 0, 1]);
        let b = kmeans_1d(&[0.0, 1.0, 2.0, 10.0, 11.0], 2).unwrap();
        assert_eq!(b, vec![0, 0, 0, 1, 1]);
    }

    #[test]
    fn arity_error() {
        assert!(matches!(
            kmeans_1d(&[1.0, 2.0], 3),
            Err(Error::KmeansArity { k: 3, values: 2 })
        ));
    }

    #[test]
    fn matches_exhaustive_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for trial in 0..40 {
            let n = rng.gen_range(3..10);
            let mut values: Vec<f64> = (0..n).map(|_| rng.gen_range(-10.0..10.0)).collect();
            values.sort_by(|a, b| a.partial_cmp(b).unwrap());
            for k in 1..=n {
                let a = kmeans_1d(&values, k).unwrap();
                let got = total_sse(&values, &a, k);
                let best = if k == 1 {
                    total_sse(&values, &vec![0; n], 1)
                } else {
                    exhaustive_best(&values, k)
                };
                assert!(
                    (got - best).abs() < 1e-9,
                    "trial {trial} k={k}: {got} vs {best}"
                );
                // Clusters are contiguous and all k are used.
                assert!(a.windows(2).all(|w| w[1] == w[0] || w[1] == w[0] + 1));
                assert_eq!(*a.last().unwrap(), k - 1);
            }
        }
    }

    #[test]
    fn first_cluster_k1_spans_everything() {
        let values = [0.0, 0.5, 1.0, 8.0];
        assert_eq!(first_cluster_size(&values, 1).unwrap(), 4);
    }
}
