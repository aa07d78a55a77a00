//! Uncertainty-coefficient screening between discrete column pairs.
//!
//! Strongly associated discrete pairs would dominate the itemset score with
//! redundant information, so pairs whose Theil's U exceeds a simulated
//! threshold are excluded from co-occurring in any scored itemset. The
//! threshold is calibrated per pair by discretizing correlated Gaussian
//! draws to the pair's level counts.

use std::collections::{BTreeMap, BTreeSet};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::data::MixedDataset;
use crate::error::{Error, Result};

/// Calibration correlation for the null-of-mild-association simulation.
const CALIBRATION_CORRELATION: f64 = 0.35;
const CALIBRATION_REPS: usize = 50;

fn entropy(counts: &BTreeMap<u32, usize>, total: usize) -> f64 {
    let n = total as f64;
    counts
        .values()
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// Theil's uncertainty coefficient U(x | y): the fraction of the entropy of
/// `x` explained by `y`. Asymmetric. Errors when `x` is constant.
pub fn theils_u(x: &[u32], y: &[u32]) -> Result<f64> {
    assert_eq!(x.len(), y.len());
    let n = x.len();
    let mut cx: BTreeMap<u32, usize> = BTreeMap::new();
    for &v in x {
        *cx.entry(v).or_insert(0) += 1;
    }
    let hx = entropy(&cx, n);
    if hx == 0.0 {
        return Err(Error::UndefinedAssociation(
            "target column is constant, entropy zero".into(),
        ));
    }
    // H(x | y) = sum over y-levels of p(y) H(x within that level).
    let mut by_y: BTreeMap<u32, BTreeMap<u32, usize>> = BTreeMap::new();
    for (&xv, &yv) in x.iter().zip(y) {
        *by_y.entry(yv).or_default().entry(xv).or_insert(0) += 1;
    }
    let mut hxy = 0.0;
    for counts in by_y.values() {
        let ny: usize = counts.values().sum();
        hxy += ny as f64 / n as f64 * entropy(counts, ny);
    }
    Ok((hx - hxy) / hx)
}

/// Quantile cutpoints at i/levels for i = 1..levels-1, type-1 empirical
/// quantiles on a sorted copy.
pub fn quantile_cutpoints(values: &[f64], levels: usize) -> Vec<f64> {
    let mut sorted: Vec<f64> = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len();
    (1..levels)
        .map(|i| {
            let q = i as f64 / levels as f64;
            let idx = (q * n as f64).ceil() as usize;
            sorted[idx.clamp(1, n) - 1]
        })
        .collect()
}

/// Level of `v` against ascending cutpoints: the first bin whose upper edge
/// is at or above `v`.
pub fn level_of(v: f64, cutpoints: &[f64]) -> u32 {
    for (i, &c) in cutpoints.iter().enumerate() {
        if v <= c {
            return i as u32;
        }
    }
    cutpoints.len() as u32
}

pub fn quantile_discretize(values: &[f64], levels: usize) -> Vec<u32> {
    let cuts = quantile_cutpoints(values, levels);
    values.iter().map(|&v| level_of(v, &cuts)).collect()
}

fn pair_rng(seed: u64, j: usize, jp: usize) -> ChaCha8Rng {
    let mixed = seed
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(((j as u64) << 32) | jp as u64);
    ChaCha8Rng::seed_from_u64(mixed)
}

/// Simulated exclusion threshold for a pair with the given sample size and
/// level counts: the mean over calibration replicates of the larger of the
/// two directional coefficients under mildly correlated Gaussians.
pub fn pair_threshold(n: usize, levels_a: usize, levels_b: usize, seed: u64, j: usize, jp: usize) -> Result<f64> {
    let mut rng = pair_rng(seed, j, jp);
    let rho = CALIBRATION_CORRELATION;
    let resid = (1.0 - rho * rho).sqrt();
    let mut acc = 0.0;
    for _ in 0..CALIBRATION_REPS {
        let mut xs = Vec::with_capacity(n);
        let mut ys = Vec::with_capacity(n);
        for _ in 0..n {
            let x: f64 = StandardNormal.sample(&mut rng);
            let z: f64 = StandardNormal.sample(&mut rng);
            xs.push(x);
            ys.push(rho * x + resid * z);
        }
        let dx = quantile_discretize(&xs, levels_a);
        let dy = quantile_discretize(&ys, levels_b);
        let u1 = theils_u(&dx, &dy)?;
        let u2 = theils_u(&dy, &dx)?;
        acc += u1.max(u2);
    }
    Ok(acc / CALIBRATION_REPS as f64)
}

/// Discrete column pairs `(j, j')`, `j < j'`, whose observed association
/// exceeds the simulated threshold. These pairs never co-occur in a scored
/// itemset.
pub fn excluded_pairs(data: &MixedDataset, seed: u64) -> Result<BTreeSet<(usize, usize)>> {
    let p_d = data.p_d();
    let mut out = BTreeSet::new();
    let cols: Vec<Vec<u32>> = (0..p_d).map(|j| data.discrete_column(j)).collect();
    for j in 0..p_d {
        for jp in (j + 1)..p_d {
            let u1 = theils_u(&cols[j], &cols[jp])?;
            let u2 = theils_u(&cols[jp], &cols[j])?;
            let observed = u1.max(u2);
            let thresh = pair_threshold(
                data.n(),
                data.schema().level_count(j),
                data.schema().level_count(jp),
                seed,
                j,
                jp,
            )?;
            if observed > thresh {
                out.insert((j, jp));
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn perfect_dependence_is_one() {
        let x = vec![0u32, 1, 2, 0, 1, 2];
        assert!((theils_u(&x, &x).unwrap() - 1.0).abs() < 1e-12);
        // A relabeling of y still determines x.
        let y = vec![2u32, 0, 1, 2, 0, 1];
        assert!((theils_u(&x, &y).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn independence_is_near_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x: Vec<u32> = (0..4000).map(|_| rng.gen_range(0..3)).collect();
        let y: Vec<u32> = (0..4000).map(|_| rng.gen_range(0..4)).collect();
        let u = theils_u(&x, &y).unwrap();
        assert!(u < 0.02, "u = {u}");
    }

    #[test]
    fn constant_target_errors() {
        let x = vec![1u32; 10];
        let y = vec![0u32, 1, 0, 1, 0, 1, 0, 1, 0, 1];
        assert!(matches!(
            theils_u(&x, &y),
            Err(Error::UndefinedAssociation(_))
        ));
    }

    #[test]
    fn asymmetry() {
        // y refines x: knowing y pins x down fully, not vice versa.
        let x = vec![0u32, 0, 1, 1];
        let y = vec![0u32, 1, 2, 3];
        assert!((theils_u(&x, &y).unwrap() - 1.0).abs() < 1e-12);
        assert!(theils_u(&y, &x).unwrap() < 1.0);
    }

    #[test]
    fn quantile_levels_balanced() {
        let values: Vec<f64> = (0..100).map(|i| i as f64).collect();
        let d = quantile_discretize(&values, 4);
        for lvl in 0..4u32 {
            assert_eq!(d.iter().filter(|&&v| v == lvl).count(), 25);
        }
        // Boundary uses the at-or-below rule.
        let cuts = quantile_cutpoints(&values, 4);
        assert_eq!(level_of(cuts[0], &cuts), 0);
        assert_eq!(level_of(cuts[0] + 0.5, &cuts), 1);
    }

    #[test]
    fn quantile_discretize_matches_sort_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let values: Vec<f64> = (0..501).map(|_| rng.gen_range(-5.0..5.0)).collect();
        for levels in 2..=5 {
            let d = quantile_discretize(&values, levels);
            // Oracle: rank each value, map rank to a bin of ceil boundaries.
            let mut sorted = values.clone();
            sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
            for (i, &v) in values.iter().enumerate() {
                let expected = (1..levels)
                    .filter(|&l| {
                        let q = l as f64 / levels as f64;
                        let idx = (q * values.len() as f64).ceil() as usize - 1;
                        v > sorted[idx]
                    })
                    .count() as u32;
                assert_eq!(d[i], expected, "value {v}");
            }
        }
    }

    #[test]
    fn pair_threshold_deterministic_and_moderate() {
        let a = pair_threshold(500, 3, 3, 9, 0, 1).unwrap();
        let b = pair_threshold(500, 3, 3, 9, 0, 1).unwrap();
        assert_eq!(a, b);
        assert!(a > 0.0 && a < 0.5, "threshold = {a}");
    }

    #[test]
    fn excluded_pairs_catches_copied_column() {
        use crate::data::{Column, ColumnKind, Schema};
        let n = 600;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a: Vec<u32> = (0..n).map(|_| rng.gen_range(0..3u32)).collect();
        let b = a.clone();
        let c: Vec<u32> = (0..n).map(|_| rng.gen_range(0..3u32)).collect();
        let mut discrete = Vec::with_capacity(n * 3);
        for i in 0..n {
            discrete.extend_from_slice(&[a[i], b[i], c[i]]);
        }
        let mk = |name: &str| Column {
            name: name.into(),
            kind: ColumnKind::Discrete,
            levels: vec!["0".into(), "1".into(), "2".into()],
        };
        let schema = Schema::new(vec![mk("a"), mk("b"), mk("c")]).unwrap();
        let data = MixedDataset::new(schema, n, discrete, vec![]).unwrap();
        let excl = excluded_pairs(&data, 1).unwrap();
        assert!(excl.contains(&(0, 1)));
        assert!(!excl.contains(&(0, 2)));
        assert!(!excl.contains(&(1, 2)));
    }
}
