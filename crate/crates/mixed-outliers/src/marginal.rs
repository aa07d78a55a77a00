//! Marginal outlier detection in the discrete and continuous spaces.
//!
//! Discrete: cluster the unique discrete scores with exact 1-D K-means, pick
//! the cluster count whose zero-score cluster size is the modal one, then
//! prune that cluster by the unit-length-infrequency rule and the scaled-gap
//! rule. Continuous: Chebyshev-style scan over consecutive differences of
//! the sorted forest scores. The two stages share a budget of
//! `ceil((rho + epsilon) n)` flags enforced by a feedback loop that coarsens
//! the discrete clustering until the budget holds.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::data::{DetectionConfig, ScoreProfile};
use crate::error::Result;
use crate::kmeans1d::kmeans_1d;
use crate::stats::{mean, sample_std};

/// Diagnostics for one discrete-stage run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DiscreteMarginal {
    pub outliers: BTreeSet<usize>,
    /// Cluster count finally used.
    pub k_star: usize,
    /// Zero-cluster size (in unique scores) for K = 1..=|unique|.
    pub trace: Vec<usize>,
    /// True when the stage gave up and flagged nothing at K = 1.
    pub exhausted: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ContinuousMarginal {
    pub outliers: BTreeSet<usize>,
    /// Gap counts for lambda = 2..=20.
    pub deltas: Vec<usize>,
    pub lambda_star: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MarginalOutcome {
    pub discrete: DiscreteMarginal,
    pub continuous: ContinuousMarginal,
}

/// Modal value of `seq` with ties broken by the longest consecutive run and
/// then by the run appearing at the larger index.
fn mode_longest_run(seq: &[usize]) -> usize {
    let mut best: Option<((usize, usize, usize), usize)> = None;
    for v in seq.iter().copied().collect::<BTreeSet<usize>>() {
        let count = seq.iter().filter(|&&x| x == v).count();
        let mut longest = 0;
        let mut last_end = 0;
        let mut run = 0;
        for (i, &x) in seq.iter().enumerate() {
            if x == v {
                run += 1;
                if run >= longest {
                    longest = run;
                    last_end = i;
                }
            } else {
                run = 0;
            }
        }
        let key = (count, longest, last_end);
        if best.as_ref().map_or(true, |(bk, _)| key > *bk) {
            best = Some((key, v));
        }
    }
    best.unwrap().1
}

fn unique_sorted(scores: &[f64]) -> Vec<f64> {
    let mut u: Vec<f64> = scores.to_vec();
    u.sort_by(|a, b| a.partial_cmp(b).unwrap());
    u.dedup();
    u
}

/// Zero-cluster sizes over every cluster count; `trace[0] = |unique|`.
pub fn cluster_trace(unique: &[f64]) -> Result<Vec<usize>> {
    (1..=unique.len())
        .map(|k| {
            let assignment = kmeans_1d(unique, k)?;
            Ok(assignment.iter().filter(|&&c| c == 0).count())
        })
        .collect()
}

/// One application of the removal rules at cluster count `k`. Returns the
/// flagged observations.
fn discrete_removal(profile: &ScoreProfile, unique: &[f64], k: usize) -> Result<BTreeSet<usize>> {
    let scores = &profile.discrete_scores;
    let assignment = kmeans_1d(unique, k)?;
    // The zero-containing cluster is the first: scores are non-negative and
    // sorted ascending, so cluster 0 holds the smallest values.
    let boundary = unique
        .iter()
        .zip(&assignment)
        .filter(|(_, &c)| c == 0)
        .map(|(&v, _)| v)
        .fold(f64::NEG_INFINITY, f64::max);

    let m = mean(scores);
    let sd = sample_std(scores);
    // Gap rule on the sorted scaled unique scores: threshold at the lowest
    // index where the next scaled score jumps by more than one.
    let gap_threshold = if sd > 0.0 {
        let mut scaled: Vec<f64> = unique.iter().map(|&v| (v - m).abs() / sd).collect();
        scaled.sort_by(|a, b| a.partial_cmp(b).unwrap());
        scaled
            .windows(2)
            .find(|w| w[1] > w[0] + 1.0)
            .map(|w| w[0])
    } else {
        None
    };

    let mut flagged = BTreeSet::new();
    for (i, &s) in scores.iter().enumerate() {
        let outside_cluster = s > boundary;
        let unit_rule = profile.unit_length_infrequent[i];
        let gap_rule = match gap_threshold {
            Some(t) => (s - m).abs() / sd > t,
            None => false,
        };
        if outside_cluster || unit_rule || gap_rule {
            flagged.insert(i);
        }
    }
    Ok(flagged)
}

/// Discrete-space detection starting from cluster count `k_start` (or the
/// modal choice when absent), decrementing while the flag budget is blown.
pub fn detect_discrete_marginal(
    profile: &ScoreProfile,
    cfg: &DetectionConfig,
    k_start: Option<usize>,
) -> Result<DiscreteMarginal> {
    let scores = &profile.discrete_scores;
    let n = scores.len();
    let unique = unique_sorted(scores);
    let trace = cluster_trace(&unique)?;
    if unique.len() == 1 {
        return Ok(DiscreteMarginal {
            outliers: BTreeSet::new(),
            k_star: 1,
            trace,
            exhausted: false,
        });
    }
    let modal = mode_longest_run(&trace);
    let k_modal = trace.iter().position(|&c| c == modal).unwrap() + 1;
    let mut k = k_start.unwrap_or(k_modal).clamp(1, unique.len());
    let cap = cfg.max_outliers(n);
    loop {
        let flagged = discrete_removal(profile, &unique, k)?;
        if n - flagged.len() > n - cap {
            return Ok(DiscreteMarginal {
                outliers: flagged,
                k_star: k,
                trace,
                exhausted: false,
            });
        }
        if k == 1 {
            // Even the coarsest clustering over-flags; give up on the
            // discrete stage rather than blow the budget.
            return Ok(DiscreteMarginal {
                outliers: BTreeSet::new(),
                k_star: 1,
                trace,
                exhausted: true,
            });
        }
        k -= 1;
    }
}

/// Continuous-space detection on the rows outside `exclude`.
pub fn detect_continuous_marginal(
    profile: &ScoreProfile,
    exclude: &BTreeSet<usize>,
) -> ContinuousMarginal {
    let empty = |deltas: Vec<usize>| ContinuousMarginal {
        outliers: BTreeSet::new(),
        deltas,
        lambda_star: None,
    };
    let mut rows: Vec<usize> = (0..profile.continuous_scores.len())
        .filter(|i| !exclude.contains(i))
        .collect();
    if rows.len() < 3 {
        return empty(vec![]);
    }
    rows.sort_by(|&a, &b| {
        profile.continuous_scores[a]
            .partial_cmp(&profile.continuous_scores[b])
            .unwrap()
    });
    let sorted: Vec<f64> = rows.iter().map(|&i| profile.continuous_scores[i]).collect();
    let diffs: Vec<f64> = sorted.windows(2).map(|w| w[1] - w[0]).collect();
    let m = mean(&diffs);
    let sd = sample_std(&diffs);
    if sd == 0.0 {
        return empty(vec![0; 19]);
    }
    let scaled: Vec<f64> = diffs.iter().map(|&z| (z - m).abs() / sd).collect();
    let deltas: Vec<usize> = (2..=20)
        .map(|lambda| scaled.iter().filter(|&&z| z >= lambda as f64).count())
        .collect();
    // Mode over the nonzero counts; an all-zero sequence means no gap is
    // large enough and nothing is flagged.
    let nonzero: Vec<usize> = deltas.iter().copied().filter(|&d| d > 0).collect();
    if nonzero.is_empty() {
        return empty(deltas);
    }
    let modal = mode_longest_run(&nonzero);
    let lambda_star = deltas.iter().rposition(|&d| d == modal).unwrap() + 2;
    let t = lambda_star as f64;
    // Gap positions at lambda*; pick the lowest whose bottom score clears
    // the 0.4 floor.
    let threshold = scaled
        .iter()
        .enumerate()
        .filter(|(_, &z)| z >= t)
        .map(|(i, _)| sorted[i])
        .find(|&edge| edge > 0.4);
    let outliers: BTreeSet<usize> = match threshold {
        Some(edge) => rows
            .iter()
            .copied()
            .filter(|&i| profile.continuous_scores[i] > edge)
            .collect(),
        None => BTreeSet::new(),
    };
    ContinuousMarginal {
        outliers,
        deltas,
        lambda_star: Some(lambda_star),
    }
}

/// Runs both stages with the shared-budget feedback loop.
pub fn detect_marginal(profile: &ScoreProfile, cfg: &DetectionConfig) -> Result<MarginalOutcome> {
    let n = profile.discrete_scores.len();
    let cap = cfg.max_outliers(n);
    let mut discrete = detect_discrete_marginal(profile, cfg, None)?;
    loop {
        let mut continuous = if profile.continuous_scores.is_empty() {
            ContinuousMarginal {
                outliers: BTreeSet::new(),
                deltas: vec![],
                lambda_star: None,
            }
        } else {
            detect_continuous_marginal(profile, &discrete.outliers)
        };
        let total = discrete.outliers.len() + continuous.outliers.len();
        if total < cap {
            return Ok(MarginalOutcome {
                discrete,
                continuous,
            });
        }
        if discrete.k_star > 1 && !discrete.exhausted {
            discrete = detect_discrete_marginal(profile, cfg, Some(discrete.k_star - 1))?;
            continue;
        }
        // Budget still blown with the discrete stage exhausted: keep only
        // the highest-scoring continuous flags that fit.
        let keep = cap.saturating_sub(discrete.outliers.len() + 1);
        let mut flagged: Vec<usize> = continuous.outliers.iter().copied().collect();
        flagged.sort_by(|&a, &b| {
            profile.continuous_scores[b]
                .partial_cmp(&profile.continuous_scores[a])
                .unwrap()
        });
        continuous.outliers = flagged.into_iter().take(keep).collect();
        return Ok(MarginalOutcome {
            discrete,
            continuous,
        });
    }
}
