//! Context identification: for a discrete variable, which continuous
//! variables is it associated with.
//!
//! Kruskal-Wallis screening nominates candidate columns; each candidate set
//! is then validated by a neighborhood test. The most central point of each
//! level must have a delta-neighborhood whose level composition rejects the
//! background proportions for every level under Holm correction. Subsets are
//! ranked by the sum of log p-values; a smaller sum means better separation.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::{chi_square_gof, holm_all_reject, kruskal_wallis, mad, median, sample_std};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ContextConfig {
    /// Neighborhood proportion, at most 0.5.
    pub delta: f64,
    /// Kruskal-Wallis screening level.
    pub alpha1: f64,
    /// Goodness-of-fit level (Holm-corrected).
    pub alpha2: f64,
    pub minkowski_order: f64,
}

impl Default for ContextConfig {
    fn default() -> Self {
        ContextConfig {
            delta: 0.5,
            alpha1: 0.01,
            alpha2: 0.01,
            minkowski_order: 2.0,
        }
    }
}

impl ContextConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.delta <= 0.5) {
            return Err(Error::Config("delta must lie in (0, 0.5]".into()));
        }
        if self.minkowski_order <= 0.0 {
            return Err(Error::Config("minkowski_order must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ContextFinding {
    /// Continuous column indices.
    pub context: Vec<usize>,
    pub log_p_sum: f64,
    pub per_level_p: Vec<f64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ContextDiagnostics {
    pub kw_p_values: Vec<f64>,
    pub candidates: Vec<usize>,
    /// (subset, sum of log p) for every subset that passed Holm.
    pub trail: Vec<(Vec<usize>, f64)>,
    pub notes: Vec<String>,
}

/// Index of the most central point: argmin of row medians of the
/// within-level distance matrix, lowest index on ties.
pub fn core_point(distance_rows: &[Vec<f64>]) -> usize {
    let mut best = 0;
    let mut best_med = f64::INFINITY;
    for (i, row) in distance_rows.iter().enumerate() {
        let m = median(row);
        if m < best_med {
            best_med = m;
            best = i;
        }
    }
    best
}

/// Robust PCA approximation: trim each point cloud to the 75% with smallest
/// coordinate-wise standardized Chebyshev distance, then classical PCA on
/// the trimmed set. Returns column loadings and eigenvalues, both in
/// descending eigenvalue order; eigenvalues are floored to stay positive.
pub fn robust_eigenweights(points: &[Vec<f64>]) -> (DMatrix<f64>, Vec<f64>) {
    let n = points.len();
    let d = points[0].len();
    let mut scores = vec![0.0f64; n];
    for dim in 0..d {
        let col: Vec<f64> = points.iter().map(|p| p[dim]).collect();
        let med = median(&col);
        let mut scale = mad(&col);
        if scale == 0.0 {
            scale = sample_std(&col);
        }
        if scale == 0.0 {
            continue;
        }
        for (s, v) in scores.iter_mut().zip(&col) {
            *s = s.max(((v - med) / scale).abs());
        }
    }
    let keep = ((0.75 * n as f64).ceil() as usize).max(d + 1).min(n);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap().then(a.cmp(&b)));
    let trim_threshold = scores[order[keep - 1]];
    let trimmed: Vec<&Vec<f64>> = order[..keep].iter().map(|&i| &points[i]).collect();

    let m = trimmed.len() as f64;
    let means: Vec<f64> = (0..d)
        .map(|dim| trimmed.iter().map(|p| p[dim]).sum::<f64>() / m)
        .collect();
    let mut cov = DMatrix::zeros(d, d);
    for p in &trimmed {
        for a in 0..d {
            for b in a..d {
                cov[(a, b)] += (p[a] - means[a]) * (p[b] - means[b]);
            }
        }
    }
    let denom = (trimmed.len() - 1).max(1) as f64;
    for a in 0..d {
        for b in a..d {
            cov[(a, b)] /= denom;
            cov[(b, a)] = cov[(a, b)];
        }
    }
    // Box trimming shrinks the covariance; undo the shrinkage assuming a
    // Gaussian core so eigenvalues estimate the untrimmed scale. The trim
    // boundary is in median/MAD units; 0.6745 converts to z units.
    let a = 0.6745 * trim_threshold;
    if a.is_finite() && a > 0.0 {
        let normal = statrs::distribution::Normal::new(0.0, 1.0).unwrap();
        use statrs::distribution::{Continuous, ContinuousCDF};
        let mass = 2.0 * normal.cdf(a) - 1.0;
        if mass > 0.0 {
            let c = 1.0 - 2.0 * a * normal.pdf(a) / mass;
            if c > 0.1 && c < 1.0 {
                cov /= c;
            }
        }
    }
    let eig = SymmetricEigen::new(cov);
    let mut pairs: Vec<(f64, Vec<f64>)> = (0..d)
        .map(|i| (eig.eigenvalues[i], eig.eigenvectors.column(i).iter().copied().collect()))
        .collect();
    pairs.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
    let lambda_max = pairs[0].0.max(0.0);
    let floor = (1e-9 * lambda_max).max(1e-12);
    let eigenvalues: Vec<f64> = pairs.iter().map(|(l, _)| l.max(floor)).collect();
    let mut loadings = DMatrix::zeros(d, d);
    for (j, (_, v)) in pairs.iter().enumerate() {
        for i in 0..d {
            loadings[(i, j)] = v[i];
        }
    }
    (loadings, eigenvalues)
}

/// Weighted Minkowski distance of order r with per-dimension weights.
pub fn weighted_minkowski(a: &[f64], b: &[f64], weights: &[f64], r: f64) -> f64 {
    minkowski_power_sum(a, b, weights, r).powf(1.0 / r)
}

/// The r-th power of the weighted Minkowski distance. Strictly monotone in
/// the distance itself, so anything that only compares distances can use
/// this and skip the root. Squares avoid powf in the common r = 2 case.
fn minkowski_power_sum(a: &[f64], b: &[f64], weights: &[f64], r: f64) -> f64 {
    if r == 2.0 {
        a.iter()
            .zip(b)
            .zip(weights)
            .map(|((&x, &y), &w)| w * (x - y) * (x - y))
            .sum()
    } else {
        a.iter()
            .zip(b)
            .zip(weights)
            .map(|((&x, &y), &w)| w * (x - y).abs().powf(r))
            .sum()
    }
}

/// Level composition test for one candidate subset of continuous columns.
///
/// `coords` holds each retained row restricted to the subset. Per level the
/// coordinates are rotated by that level's robust loadings (skipped in one
/// dimension) and distances weighted by inverse eigenvalues. Returns the sum
/// of log p-values and the per-level p-values when all levels reject under
/// Holm, otherwise None.
fn subset_test(
    disc: &[u32],
    level_rows: &[Vec<usize>],
    pi: &[f64],
    coords: &[Vec<f64>],
    cfg: &ContextConfig,
) -> Result<Option<(f64, Vec<f64>)>> {
    let d = coords[0].len();
    let r = cfg.minkowski_order;
    let ell = level_rows.len();
    let mut pvalues = Vec::with_capacity(ell);
    for rows in level_rows {
        let level_points: Vec<Vec<f64>> = rows.iter().map(|&i| coords[i].clone()).collect();
        // Project everything into the level's rotated space.
        let (projected, weights): (Vec<Vec<f64>>, Vec<f64>) = if d == 1 {
            (coords.to_vec(), vec![1.0])
        } else {
            let (loadings, eigenvalues) = robust_eigenweights(&level_points);
            let proj: Vec<Vec<f64>> = coords
                .iter()
                .map(|p| {
                    (0..d)
                        .map(|j| (0..d).map(|i| p[i] * loadings[(i, j)]).sum())
                        .collect()
                })
                .collect();
            let w = eigenvalues.iter().map(|&l| 1.0 / l).collect();
            (proj, w)
        };
        // The core only needs within-level distances, and the neighbourhood
        // only needs distances from the core. Monotone in the true metric,
        // so orderings and ties are unchanged.
        let within: Vec<Vec<f64>> = rows
            .iter()
            .map(|&i| {
                rows.iter()
                    .map(|&j| minkowski_power_sum(&projected[i], &projected[j], &weights, r))
                    .collect()
            })
            .collect();
        let core = core_point(&within);
        let core_row = rows[core];
        let core_dist: Vec<f64> = projected
            .iter()
            .map(|q| minkowski_power_sum(&projected[core_row], q, &weights, r))
            .collect();
        let k = (cfg.delta * rows.len() as f64).ceil() as usize;
        let mut order: Vec<usize> = (0..coords.len()).filter(|&i| i != core_row).collect();
        order.sort_by(|&a, &b| {
            core_dist[a]
                .partial_cmp(&core_dist[b])
                .unwrap()
                .then(a.cmp(&b))
        });
        let mut observed = vec![0u64; ell];
        for &i in order.iter().take(k) {
            observed[disc[i] as usize] += 1;
        }
        let (_, p) = chi_square_gof(&observed, pi)?;
        pvalues.push(p);
    }
    if holm_all_reject(&pvalues, cfg.alpha2) {
        let sum = pvalues.iter().map(|p| p.max(f64::MIN_POSITIVE).ln()).sum();
        Ok(Some((sum, pvalues)))
    } else {
        Ok(None)
    }
}

/// Groups rows by level after compacting levels to those actually present.
/// Returns None (with a note) when fewer than two levels remain or a level
/// has fewer than two rows.
fn level_partition(disc_raw: &[u32], diag: &mut ContextDiagnostics) -> Option<(Vec<u32>, Vec<Vec<usize>>, Vec<f64>)> {
    let mut present: Vec<u32> = disc_raw.to_vec();
    present.sort_unstable();
    present.dedup();
    if present.len() < 2 {
        diag.notes.push("fewer than two levels present".into());
        return None;
    }
    let disc: Vec<u32> = disc_raw
        .iter()
        .map(|v| present.iter().position(|p| p == v).unwrap() as u32)
        .collect();
    let mut rows = vec![Vec::new(); present.len()];
    for (i, &l) in disc.iter().enumerate() {
        rows[l as usize].push(i);
    }
    if rows.iter().any(|r| r.len() < 2) {
        diag.notes.push("a level has fewer than two rows".into());
        return None;
    }
    let n = disc.len() as f64;
    let pi: Vec<f64> = rows.iter().map(|r| r.len() as f64 / n).collect();
    Some((disc, rows, pi))
}

/// Kruskal-Wallis screening: continuous columns whose p-value clears alpha1.
pub fn kw_candidates(
    disc: &[u32],
    level_rows: &[Vec<usize>],
    cont_cols: &[Vec<f64>],
    cfg: &ContextConfig,
    diag: &mut ContextDiagnostics,
) -> Result<Vec<usize>> {
    let _ = level_rows;
    let groups: Vec<usize> = disc.iter().map(|&l| l as usize).collect();
    let mut candidates = Vec::new();
    for (k, col) in cont_cols.iter().enumerate() {
        let (_, p) = kruskal_wallis(col, &groups)?;
        diag.kw_p_values.push(p);
        if p <= cfg.alpha1 {
            candidates.push(k);
        }
    }
    diag.candidates = candidates.clone();
    Ok(candidates)
}

fn column_coords(cont_cols: &[Vec<f64>], subset: &[usize]) -> Vec<Vec<f64>> {
    (0..cont_cols[0].len())
        .map(|i| subset.iter().map(|&c| cont_cols[c][i]).collect())
        .collect()
}

/// One-dimensional identification: test each screening candidate alone and
/// keep the single column with the smallest log p-value sum.
pub fn identify_context_1d(
    disc: &[u32],
    level_rows: &[Vec<usize>],
    pi: &[f64],
    cont_cols: &[Vec<f64>],
    candidates: &[usize],
    cfg: &ContextConfig,
    diag: &mut ContextDiagnostics,
) -> Result<Option<ContextFinding>> {
    let mut best: Option<ContextFinding> = None;
    for &k in candidates {
        let coords = column_coords(cont_cols, &[k]);
        if let Some((sum, pvals)) = subset_test(disc, level_rows, pi, &coords, cfg)? {
            diag.trail.push((vec![k], sum));
            if best.as_ref().map_or(true, |b| sum < b.log_p_sum) {
                best = Some(ContextFinding {
                    context: vec![k],
                    log_p_sum: sum,
                    per_level_p: pvals,
                });
            }
        }
    }
    Ok(best)
}

/// Backward elimination over the candidate set, with forward selection from
/// pairs when the full candidate set itself fails.
pub fn identify_context_hd(
    disc: &[u32],
    level_rows: &[Vec<usize>],
    pi: &[f64],
    cont_cols: &[Vec<f64>],
    candidates: &[usize],
    cfg: &ContextConfig,
    diag: &mut ContextDiagnostics,
) -> Result<Option<ContextFinding>> {
    let evaluate = |subset: &[usize],
                        diag: &mut ContextDiagnostics|
     -> Result<Option<(f64, Vec<f64>)>> {
        let coords = column_coords(cont_cols, subset);
        let res = subset_test(disc, level_rows, pi, &coords, cfg)?;
        if let Some((sum, _)) = &res {
            diag.trail.push((subset.to_vec(), *sum));
        }
        Ok(res)
    };

    let mut recorded: Vec<ContextFinding> = Vec::new();
    let mut basis: Vec<usize> = candidates.to_vec();
    let mut xi = candidates.len();
    while xi >= 2 {
        // Size-xi subsets of the candidates contained in the current basis:
        // the basis itself at the top size, otherwise leave-one-out subsets.
        let subsets: Vec<Vec<usize>> = if xi == basis.len() {
            vec![basis.clone()]
        } else {
            (0..basis.len())
                .map(|drop| {
                    basis
                        .iter()
                        .enumerate()
                        .filter(|(i, _)| *i != drop)
                        .map(|(_, &c)| c)
                        .collect()
                })
                .collect()
        };
        let mut best: Option<ContextFinding> = None;
        for q in &subsets {
            if let Some((sum, pvals)) = evaluate(q, diag)? {
                if best.as_ref().map_or(true, |b| sum < b.log_p_sum) {
                    best = Some(ContextFinding {
                        context: q.clone(),
                        log_p_sum: sum,
                        per_level_p: pvals,
                    });
                }
            }
        }
        match best {
            Some(f) => {
                basis = f.context.clone();
                recorded.push(f);
                xi -= 1;
            }
            None => break,
        }
    }

    if recorded.is_empty() && candidates.len() > 2 {
        // Forward selection from pairs.
        let mut basis: Option<Vec<usize>> = None;
        loop {
            let subsets: Vec<Vec<usize>> = match &basis {
                None => {
                    let mut pairs = Vec::new();
                    for i in 0..candidates.len() {
                        for j in i + 1..candidates.len() {
                            pairs.push(vec![candidates[i], candidates[j]]);
                        }
                    }
                    pairs
                }
                Some(b) => candidates
                    .iter()
                    .filter(|c| !b.contains(c))
                    .map(|&c| {
                        let mut s = b.clone();
                        s.push(c);
                        s.sort_unstable();
                        s
                    })
                    .collect(),
            };
            if subsets.is_empty() {
                break;
            }
            let mut best: Option<ContextFinding> = None;
            for q in &subsets {
                if let Some((sum, pvals)) = evaluate(q, diag)? {
                    if best.as_ref().map_or(true, |b| sum < b.log_p_sum) {
                        best = Some(ContextFinding {
                            context: q.clone(),
                            log_p_sum: sum,
                            per_level_p: pvals,
                        });
                    }
                }
            }
            match best {
                Some(f) => {
                    basis = Some(f.context.clone());
                    recorded.push(f);
                }
                None => break,
            }
        }
    }

    Ok(recorded
        .into_iter()
        .min_by(|a, b| a.log_p_sum.partial_cmp(&b.log_p_sum).unwrap()))
}

/// Full identification for one discrete column over marginal-free data.
///
/// `disc_raw` holds the column's levels for the retained rows; `cont_cols`
/// the retained continuous columns. Returns the winning context, if any,
/// with diagnostics.
pub fn identify_context(
    disc_raw: &[u32],
    cont_cols: &[Vec<f64>],
    cfg: &ContextConfig,
) -> Result<(Option<ContextFinding>, ContextDiagnostics)> {
    cfg.validate()?;
    let mut diag = ContextDiagnostics::default();
    if cont_cols.is_empty() || cont_cols[0].is_empty() {
        return Ok((None, diag));
    }
    let Some((disc, level_rows, pi)) = level_partition(disc_raw, &mut diag) else {
        return Ok((None, diag));
    };
    let candidates = kw_candidates(&disc, &level_rows, cont_cols, cfg, &mut diag)?;
    let mut finding = search_candidates(&disc, &level_rows, &pi, cont_cols, &candidates, cfg, &mut diag)?;
    if finding.is_none() && candidates.len() < cont_cols.len() {
        // The rank screen only sees location shifts per level. Structures
        // that are symmetric around the centre (a product or a quotient of
        // centred variables, say) leave the per-level rank means untouched,
        // so the screen returns nothing even when the neighbourhood tests
        // would reject decisively. Retry with every column as a candidate;
        // the all-levels-reject requirement keeps noise columns out.
        let all: Vec<usize> = (0..cont_cols.len()).collect();
        if all.len() > candidates.len() {
            diag.notes
                .push("rank screen found nothing; retrying with all columns".into());
            finding = search_candidates(&disc, &level_rows, &pi, cont_cols, &all, cfg, &mut diag)?;
        }
    }
    Ok((finding, diag))
}

fn search_candidates(
    disc: &[u32],
    level_rows: &[Vec<usize>],
    pi: &[f64],
    cont_cols: &[Vec<f64>],
    candidates: &[usize],
    cfg: &ContextConfig,
    diag: &mut ContextDiagnostics,
) -> Result<Option<ContextFinding>> {
    match candidates.len() {
        0 => Ok(None),
        1 => identify_context_1d(disc, level_rows, pi, cont_cols, candidates, cfg, diag),
        _ => {
            let hd = identify_context_hd(disc, level_rows, pi, cont_cols, candidates, cfg, diag)?;
            match hd {
                Some(f) => Ok(Some(f)),
                // No multi-column subset survived; fall back to singles.
                None => identify_context_1d(disc, level_rows, pi, cont_cols, candidates, cfg, diag),
            }
        }
    }
}
