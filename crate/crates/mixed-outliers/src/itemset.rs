//! Discrete outlyingness scores from minimal infrequent itemsets.
//!
//! An itemset is a set of (discrete column, level) pairs. One whose support
//! falls below the simultaneous-CI threshold for its variable set is
//! infrequent; rows containing infrequent itemsets collect score mass
//! inversely proportional to `supp(d) * |d|^2`. Supersets of an infrequent
//! itemset are never scored, so the model only stores the minimal ones.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use itertools::Itertools;
use serde::{Deserialize, Serialize};

use crate::assoc;
use crate::data::{MixedDataset, Schema, ScoreProfile};
use crate::error::{Error, Result};
use crate::multinomial::{cell_product, support_threshold};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Itemset {
    /// Strictly increasing discrete column indices.
    pub vars: Vec<usize>,
    /// Level index per variable, aligned with `vars`.
    pub levels: Vec<u32>,
}

impl Itemset {
    pub fn len(&self) -> usize {
        self.vars.len()
    }
    pub fn is_empty(&self) -> bool {
        self.vars.is_empty()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QualifyingItemset {
    pub itemset: Itemset,
    pub support: u64,
}

/// Fitted discrete model: infrequency thresholds per variable set, the
/// chosen maximum itemset length, excluded column pairs, and the minimal
/// infrequent itemsets with their supports.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ItemsetModel {
    pub n: usize,
    pub p_d: usize,
    pub maxlen: usize,
    /// (variable set, sigma) sorted by variable set.
    pub thresholds: Vec<(Vec<usize>, f64)>,
    pub excluded_pairs: BTreeSet<(usize, usize)>,
    /// ((j, j'), simulated ceiling) per pair.
    pub u_upper: Vec<((usize, usize), f64)>,
    /// Minimal infrequent itemsets, lexicographic by (vars, levels).
    pub qualifying: Vec<QualifyingItemset>,
    pub seed: u64,
}

impl ItemsetModel {
    pub fn threshold(&self, vars: &[usize]) -> Option<f64> {
        self.thresholds
            .binary_search_by(|(v, _)| v.as_slice().cmp(vars))
            .ok()
            .map(|i| self.thresholds[i].1)
    }

    /// Max sigma over variable sets of exactly `maxlen` variables.
    pub fn xi(&self) -> f64 {
        self.thresholds
            .iter()
            .filter(|(v, _)| v.len() == self.maxlen)
            .map(|&(_, s)| s)
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Sigma for one variable set, memoized by the level-count product.
fn sigma_for(
    schema: &Schema,
    n: usize,
    alpha: f64,
    vars: &[usize],
    memo: &mut HashMap<u64, f64>,
) -> Result<f64> {
    let levels: Vec<usize> = vars.iter().map(|&j| schema.level_count(j)).collect();
    let k = cell_product(&levels)?;
    if let Some(&s) = memo.get(&k) {
        return Ok(s);
    }
    let s = support_threshold(n as u64, k, alpha)?;
    memo.insert(k, s);
    Ok(s)
}

/// Largest M such that every variable combination of size at most M has
/// sigma >= 2. Errors when even a single variable falls short.
pub fn compute_maxlen(schema: &Schema, n: usize, alpha: f64) -> Result<usize> {
    let p_d = schema.p_d();
    if p_d == 0 {
        return Err(Error::Schema(
            "no discrete columns found; integer-coded discrete columns need an explicit schema"
                .into(),
        ));
    }
    let mut memo = HashMap::new();
    for j in 0..p_d {
        let s = sigma_for(schema, n, alpha, &[j], &mut memo)?;
        if s < 2.0 {
            return Err(Error::DegenerateData(format!(
                "column {j} has infrequency threshold {s:.3} < 2; too many levels for n={n}"
            )));
        }
    }
    let mut maxlen = 1;
    'grow: for m in 2..=p_d {
        for combo in (0..p_d).combinations(m) {
            match sigma_for(schema, n, alpha, &combo, &mut memo) {
                Ok(s) if s >= 2.0 => {}
                // Too sparse or K overflow: this size is out of reach.
                Ok(_) | Err(Error::Threshold(_)) => break 'grow,
                Err(e) => return Err(e),
            }
        }
        maxlen = m;
    }
    Ok(maxlen)
}

fn contains_excluded(vars: &[usize], excluded: &BTreeSet<(usize, usize)>) -> bool {
    for (a, b) in vars.iter().copied().tuple_combinations() {
        if excluded.contains(&(a, b)) {
            return true;
        }
    }
    false
}

/// Fits the discrete model: thresholds for all variable sets up to maxlen,
/// association exclusions, then level-wise enumeration where candidates grow
/// only from frequent itemsets. Anything infrequent is recorded and not
/// extended, so recorded sets are minimal by construction.
pub fn fit_discrete(data: &MixedDataset, alpha: f64, seed: u64) -> Result<ItemsetModel> {
    let schema = data.schema();
    let p_d = data.p_d();
    let n = data.n();
    let maxlen = compute_maxlen(schema, n, alpha)?;

    let mut memo = HashMap::new();
    let mut thresholds: Vec<(Vec<usize>, f64)> = Vec::new();
    for m in 1..=maxlen {
        for combo in (0..p_d).combinations(m) {
            let s = sigma_for(schema, n, alpha, &combo, &mut memo)?;
            thresholds.push((combo, s));
        }
    }
    thresholds.sort_by(|a, b| a.0.cmp(&b.0));

    let mut excluded = BTreeSet::new();
    let mut u_upper = Vec::new();
    if p_d >= 2 {
        let cols: Vec<Vec<u32>> = (0..p_d).map(|j| data.discrete_column(j)).collect();
        for j in 0..p_d {
            for jp in (j + 1)..p_d {
                let ceiling = assoc::pair_threshold(
                    n,
                    schema.level_count(j),
                    schema.level_count(jp),
                    seed,
                    j,
                    jp,
                )?;
                u_upper.push(((j, jp), ceiling));
                let observed =
                    assoc::theils_u(&cols[j], &cols[jp])?.max(assoc::theils_u(&cols[jp], &cols[j])?);
                if observed > ceiling {
                    excluded.insert((j, jp));
                }
            }
        }
    }

    let lookup_sigma = |vars: &[usize]| -> f64 {
        thresholds[thresholds
            .binary_search_by(|(v, _)| v.as_slice().cmp(vars))
            .expect("threshold present for every enumerated variable set")]
        .1
    };

    let mut qualifying: Vec<QualifyingItemset> = Vec::new();
    // Frequent itemsets of the current size, with supports.
    let mut frequent: HashMap<Itemset, u64> = HashMap::new();

    // Size 1: count every observed (column, level).
    let mut counts: HashMap<Itemset, u64> = HashMap::new();
    for i in 0..n {
        let row = data.discrete_row(i);
        for (j, &v) in row.iter().enumerate() {
            *counts
                .entry(Itemset {
                    vars: vec![j],
                    levels: vec![v],
                })
                .or_insert(0) += 1;
        }
    }
    for (it, supp) in counts {
        let sigma = lookup_sigma(&it.vars);
        if (supp as f64) < sigma {
            qualifying.push(QualifyingItemset { itemset: it, support: supp });
        } else {
            frequent.insert(it, supp);
        }
    }

    for size in 2..=maxlen {
        if frequent.is_empty() {
            break;
        }
        // Candidate generation: join frequent (size-1)-sets sharing a prefix,
        // keep those whose every subset of the previous size is frequent and
        // whose variable set avoids excluded pairs.
        let prev: Vec<&Itemset> = frequent.keys().collect();
        let mut candidates: HashMap<Itemset, u64> = HashMap::new();
        let mut by_prefix: HashMap<(Vec<usize>, Vec<u32>), Vec<&Itemset>> = HashMap::new();
        for it in &prev {
            let key = (
                it.vars[..size - 2].to_vec(),
                it.levels[..size - 2].to_vec(),
            );
            by_prefix.entry(key).or_default().push(it);
        }
        for group in by_prefix.values() {
            for (a, b) in group.iter().tuple_combinations() {
                let (lo, hi) = if a.vars[size - 2] < b.vars[size - 2] {
                    (a, b)
                } else if a.vars[size - 2] > b.vars[size - 2] {
                    (b, a)
                } else {
                    continue;
                };
                let mut vars = lo.vars.clone();
                vars.push(hi.vars[size - 2]);
                let mut levels = lo.levels.clone();
                levels.push(hi.levels[size - 2]);
                if contains_excluded(&vars, &excluded) {
                    continue;
                }
                let cand = Itemset { vars, levels };
                // Every (size-1)-subset must be frequent.
                let all_frequent = (0..size).all(|drop| {
                    let sub = Itemset {
                        vars: cand
                            .vars
                            .iter()
                            .enumerate()
                            .filter(|(i, _)| *i != drop)
                            .map(|(_, &v)| v)
                            .collect(),
                        levels: cand
                            .levels
                            .iter()
                            .enumerate()
                            .filter(|(i, _)| *i != drop)
                            .map(|(_, &v)| v)
                            .collect(),
                    };
                    frequent.contains_key(&sub)
                });
                if all_frequent {
                    candidates.insert(cand, 0);
                }
            }
        }
        if candidates.is_empty() {
            break;
        }
        // Count candidate supports in one data pass.
        for i in 0..n {
            let row = data.discrete_row(i);
            for combo in (0..p_d).combinations(size) {
                let probe = Itemset {
                    levels: combo.iter().map(|&j| row[j]).collect(),
                    vars: combo,
                };
                if let Some(c) = candidates.get_mut(&probe) {
                    *c += 1;
                }
            }
        }
        frequent.clear();
        for (it, supp) in candidates {
            if supp == 0 {
                continue;
            }
            let sigma = lookup_sigma(&it.vars);
            if (supp as f64) < sigma {
                qualifying.push(QualifyingItemset { itemset: it, support: supp });
            } else {
                frequent.insert(it, supp);
            }
        }
    }

    qualifying.sort_by(|a, b| a.itemset.cmp(&b.itemset));
    Ok(ItemsetModel {
        n,
        p_d,
        maxlen,
        thresholds,
        excluded_pairs: excluded,
        u_upper,
        qualifying,
        seed,
    })
}

/// Scores every row against the fitted model. Returns the score vector, the
/// row-major `n x p_D` contribution matrix, and the per-row flag marking an
/// infrequent itemset of unit length.
pub fn discrete_scores(
    model: &ItemsetModel,
    data: &MixedDataset,
) -> (Vec<f64>, Vec<f64>, Vec<bool>) {
    let n = data.n();
    let p_d = data.p_d();
    // Group qualifying sets by variable set for per-row lookups.
    let mut by_vars: BTreeMap<&[usize], HashMap<&[u32], u64>> = BTreeMap::new();
    for q in &model.qualifying {
        by_vars
            .entry(&q.itemset.vars)
            .or_default()
            .insert(&q.itemset.levels, q.support);
    }
    let mut scores = vec![0.0; n];
    let mut contributions = vec![0.0; n * p_d];
    let mut unit_flags = vec![false; n];
    let mut probe: Vec<u32> = Vec::new();
    for i in 0..n {
        let row = data.discrete_row(i);
        for (vars, sets) in &by_vars {
            probe.clear();
            probe.extend(vars.iter().map(|&j| row[j]));
            if let Some(&supp) = sets.get(probe.as_slice()) {
                let len = vars.len() as f64;
                scores[i] += 1.0 / (supp as f64 * len * len);
                let contrib = 1.0 / (supp as f64 * len * len * len);
                for &j in vars.iter() {
                    contributions[i * p_d + j] += contrib;
                }
                if vars.len() == 1 {
                    unit_flags[i] = true;
                }
            }
        }
    }
    (scores, contributions, unit_flags)
}

/// Closed-form bounds on the mean and sample standard deviation of the
/// discrete scores: `(mean_lower, mean_upper, sd_lower, sd_upper)`.
pub fn score_moment_bounds(
    s_d: &[f64],
    model: &ItemsetModel,
    p_d: usize,
) -> Result<(f64, f64, f64, f64)> {
    let n = s_d.len() as f64;
    let unique: BTreeSet<u64> = s_d.iter().map(|v| v.to_bits()).collect();
    let e = unique.len() as f64;
    if unique.len() <= 1 {
        return Err(Error::BoundsInapplicable(
            "all discrete scores identical".into(),
        ));
    }
    let xi = model.xi();
    if xi <= 1.0 {
        return Err(Error::BoundsInapplicable(format!(
            "max threshold at full length is {xi}, bounds need it above 1"
        )));
    }
    let ml = model.maxlen as f64;
    let s_max = s_d.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mean_lower = 1.0 / (n * (xi - 1.0) * ml * ml);
    let mean_upper = p_d as f64 * (e - 1.0) / n;
    let sd_lower = 1.0 / (n.sqrt() * ml * ml * (xi - 1.0));
    // Upper bound on the variance: the largest possible mean square of the
    // scores minus the smallest possible squared mean, with sample scaling.
    let sd_upper = (p_d as f64 * (e - 1.0) * ml.powi(4) * s_max * (xi - 1.0).powi(2) * n - 1.0)
        .max(0.0)
        .sqrt()
        / (ml * ml * (xi - 1.0) * (n * (n - 1.0)).sqrt());
    Ok((mean_lower, mean_upper, sd_lower, sd_upper))
}

fn binom(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    let mut acc = 1.0;
    for i in 0..k {
        acc = acc * (n - i) as f64 / (i + 1) as f64;
    }
    acc
}

/// Largest achievable discrete score for `p_D` columns at the given maximum
/// itemset length.
pub fn theoretical_max_score(p_d: usize, maxlen: usize) -> f64 {
    assert!(p_d >= 1 && maxlen >= 1);
    if p_d <= 8 {
        return p_d as f64;
    }
    let k = if p_d <= 10 {
        maxlen.min(3)
    } else {
        maxlen.min(p_d / 2 - 1)
    };
    binom(p_d, k) / (k * k) as f64
}

/// Largest achievable single-column contribution.
pub fn theoretical_max_contribution(p_d: usize, maxlen: usize) -> f64 {
    assert!(p_d >= 1 && maxlen >= 1);
    let cube = |k: usize| binom(p_d, k) / (k * k * k) as f64;
    match p_d {
        0..=13 => p_d as f64,
        14 => {
            if maxlen >= 4 {
                cube(maxlen.min(5))
            } else {
                p_d as f64
            }
        }
        15 => {
            if maxlen >= 3 {
                cube(maxlen.min(5))
            } else {
                p_d as f64
            }
        }
        16 => {
            if maxlen >= 3 {
                cube(maxlen.min(6))
            } else {
                p_d as f64
            }
        }
        17 => cube(maxlen.min(6)),
        _ => {
            let k_cap = ((p_d as f64) / 2.0 - 1.25).floor() as usize;
            cube(maxlen.min(k_cap))
        }
    }
}

/// Fits and scores in one step, producing the discrete half of a
/// [`ScoreProfile`]. Continuous scores are filled in by the caller.
pub fn profile_discrete(data: &MixedDataset, alpha: f64, seed: u64) -> Result<(ItemsetModel, ScoreProfile)> {
    let model = fit_discrete(data, alpha, seed)?;
    let (scores, contributions, unit_flags) = discrete_scores(&model, data);
    Ok((
        model,
        ScoreProfile {
            discrete_scores: scores,
            continuous_scores: Vec::new(),
            contributions,
            unit_length_infrequent: unit_flags,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Column, ColumnKind};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn discrete_dataset(cols: Vec<Vec<u32>>, levels_per_col: Vec<usize>) -> MixedDataset {
        let n = cols[0].len();
        let columns = levels_per_col
            .iter()
            .enumerate()
            .map(|(j, &l)| Column {
                name: format!("d{j}"),
                kind: ColumnKind::Discrete,
                levels: (0..l).map(|v| v.to_string()).collect(),
            })
            .collect();
        let schema = Schema::new(columns).unwrap();
        let mut cells = Vec::with_capacity(n * cols.len());
        for i in 0..n {
            for col in &cols {
                cells.push(col[i]);
            }
        }
        MixedDataset::new(schema, n, cells, vec![]).unwrap()
    }

    fn random_dataset(n: usize, p_d: usize, levels: usize, seed: u64) -> MixedDataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cols = (0..p_d)
            .map(|_| (0..n).map(|_| rng.gen_range(0..levels as u32)).collect())
            .collect();
        discrete_dataset(cols, vec![levels; p_d])
    }

    // Literal qualification predicate over every subset of every row, no
    // pruning shortcut: a set is scored iff it is infrequent, within length,
    // exclusion-free, and has no infrequent proper subset.
    fn brute_force_scores(data: &MixedDataset, model: &ItemsetModel) -> Vec<f64> {
        let p_d = data.p_d();
        let n = data.n();
        let support = |vars: &[usize], levels: &[u32]| -> u64 {
            (0..n)
                .filter(|&i| {
                    vars.iter()
                        .zip(levels)
                        .all(|(&j, &v)| data.discrete_cell(i, j) == v)
                })
                .count() as u64
        };
        let infrequent = |vars: &[usize], levels: &[u32]| -> bool {
            let sigma = model.threshold(vars).unwrap();
            (support(vars, levels) as f64) < sigma
        };
        (0..n)
            .map(|i| {
                let row = data.discrete_row(i);
                let mut score = 0.0;
                for size in 1..=model.maxlen.min(p_d) {
                    for vars in (0..p_d).combinations(size) {
                        let levels: Vec<u32> = vars.iter().map(|&j| row[j]).collect();
                        if !infrequent(&vars, &levels) {
                            continue;
                        }
                        if contains_excluded(&vars, &model.excluded_pairs) {
                            continue;
                        }
                        // Minimality: no infrequent proper subset.
                        let mut minimal = true;
                        'subsets: for sub_size in 1..size {
                            for sub_idx in (0..size).combinations(sub_size) {
                                let sv: Vec<usize> = sub_idx.iter().map(|&i| vars[i]).collect();
                                let sl: Vec<u32> = sub_idx.iter().map(|&i| levels[i]).collect();
                                if infrequent(&sv, &sl) {
                                    minimal = false;
                                    break 'subsets;
                                }
                            }
                        }
                        if minimal {
                            let supp = support(&vars, &levels) as f64;
                            score += 1.0 / (supp * (size * size) as f64);
                        }
                    }
                }
                score
            })
            .collect()
    }

    #[test]
    fn unique_level_scores_one() {
        // 40 rows of level 0, one row of level 1 in column 0; column 1 is
        // balanced so nothing else qualifies.
        let mut c0 = vec![0u32; 41];
        c0[40] = 1;
        let c1: Vec<u32> = (0..41).map(|i| (i % 2) as u32).collect();
        let data = discrete_dataset(vec![c0, c1], vec![2, 2]);
        let model = fit_discrete(&data, 0.01, 1).unwrap();
        let (scores, contribs, unit) = discrete_scores(&model, &data);
        assert!((scores[40] - 1.0).abs() < 1e-12, "score {}", scores[40]);
        assert!((contribs[40 * 2] - 1.0).abs() < 1e-12);
        assert!(unit[40]);
        assert!(scores[..40].iter().all(|&s| s < 1.0));
    }

    #[test]
    fn uniform_data_scores_zero() {
        // Perfectly balanced two binary columns, n divisible by 4.
        let n = 400;
        let c0: Vec<u32> = (0..n).map(|i| ((i / 2) % 2) as u32).collect();
        let c1: Vec<u32> = (0..n).map(|i| (i % 2) as u32).collect();
        let data = discrete_dataset(vec![c0, c1], vec![2, 2]);
        let model = fit_discrete(&data, 0.01, 1).unwrap();
        assert!(model.qualifying.is_empty());
        let (scores, _, _) = discrete_scores(&model, &data);
        assert!(scores.iter().all(|&s| s == 0.0));
    }

    #[test]
    fn identical_columns_excluded() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a: Vec<u32> = (0..500).map(|_| rng.gen_range(0..2)).collect();
        let data = discrete_dataset(vec![a.clone(), a], vec![2, 2]);
        let model = fit_discrete(&data, 0.01, 3).unwrap();
        assert!(model.excluded_pairs.contains(&(0, 1)));
        assert!(model.qualifying.iter().all(|q| q.itemset.len() == 1));
    }

    #[test]
    fn degenerate_levels_rejected() {
        // 7 levels with 30 rows: single-variable threshold below 2.
        let c0: Vec<u32> = (0..30).map(|i| (i % 7) as u32).collect();
        let data = discrete_dataset(vec![c0], vec![7]);
        assert!(matches!(
            fit_discrete(&data, 0.01, 1),
            Err(Error::DegenerateData(_))
        ));
    }

    #[test]
    fn maxlen_shrinks_with_level_count() {
        let schema4 = random_dataset(1000, 5, 4, 1).schema().clone();
        let schema2 = random_dataset(1000, 5, 2, 1).schema().clone();
        let m4 = compute_maxlen(&schema4, 1000, 0.01).unwrap();
        let m2 = compute_maxlen(&schema2, 1000, 0.01).unwrap();
        assert!(m2 >= m4, "binary {m2} vs 4-level {m4}");
        assert!(m4 >= 1);
        // Exhaustive scan oracle: recompute by direct threshold evaluation.
        for (schema, m) in [(schema4, m4), (schema2, m2)] {
            let mut expected = 1;
            'outer: for size in 2..=5usize {
                for combo in (0..5).combinations(size) {
                    let levels: Vec<usize> = combo.iter().map(|&j| schema.level_count(j)).collect();
                    let k = cell_product(&levels).unwrap();
                    if support_threshold(1000, k, 0.01).unwrap() < 2.0 {
                        break 'outer;
                    }
                }
                expected = size;
            }
            assert_eq!(m, expected);
        }
    }

    #[test]
    fn contribution_rows_sum_to_score() {
        let data = random_dataset(300, 4, 3, 9);
        let model = fit_discrete(&data, 0.01, 9).unwrap();
        let (scores, contribs, _) = discrete_scores(&model, &data);
        for i in 0..data.n() {
            let row_sum: f64 = contribs[i * 4..(i + 1) * 4].iter().sum();
            let tol = 1e-9 * scores[i].max(1.0);
            assert!((row_sum - scores[i]).abs() <= tol, "row {i}");
            let nonzero = contribs[i * 4..(i + 1) * 4]
                .iter()
                .filter(|&&c| c != 0.0)
                .count();
            assert!(nonzero <= model.maxlen, "row {i}: {nonzero} nonzeros");
        }
    }

    #[test]
    fn pruned_scorer_matches_brute_force() {
        for seed in 0..6u64 {
            let n = 120 + 10 * seed as usize;
            let p_d = 2 + (seed % 3) as usize;
            let data = random_dataset(n, p_d, 2 + (seed % 2) as usize + 1, seed);
            let model = fit_discrete(&data, 0.01, seed).unwrap();
            let (scores, _, _) = discrete_scores(&model, &data);
            let oracle = brute_force_scores(&data, &model);
            for i in 0..n {
                assert!(
                    (scores[i] - oracle[i]).abs() < 1e-9,
                    "seed {seed} row {i}: {} vs {}",
                    scores[i],
                    oracle[i]
                );
            }
        }
    }

    #[test]
    fn scores_within_theoretical_max() {
        let data = random_dataset(500, 5, 3, 4);
        let model = fit_discrete(&data, 0.01, 4).unwrap();
        let (scores, contribs, _) = discrete_scores(&model, &data);
        let smax = theoretical_max_score(5, model.maxlen);
        let cmax = theoretical_max_contribution(5, model.maxlen);
        assert!(scores.iter().all(|&s| s >= 0.0 && s <= smax));
        assert!(contribs.iter().all(|&c| c >= 0.0 && c <= cmax));
    }

    #[test]
    fn moment_bounds_contain_sample_moments() {
        let mut checked = 0;
        for seed in 0..50u64 {
            // Skewed levels so rare combinations exist and scores vary.
            let n = 200 + (seed as usize % 5) * 50;
            let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
            let cols: Vec<Vec<u32>> = (0..4)
                .map(|_| {
                    (0..n)
                        .map(|_| match rng.gen_range(0..100) {
                            0..=59 => 0u32,
                            60..=89 => 1,
                            _ => 2,
                        })
                        .collect()
                })
                .collect();
            let data = discrete_dataset(cols, vec![3; 4]);
            let model = fit_discrete(&data, 0.01, seed).unwrap();
            let (scores, _, _) = discrete_scores(&model, &data);
            let bounds = match score_moment_bounds(&scores, &model, 4) {
                Ok(b) => b,
                Err(Error::BoundsInapplicable(_)) => continue,
                Err(e) => panic!("{e}"),
            };
            let m = crate::stats::mean(&scores);
            let sd = crate::stats::sample_std(&scores);
            assert!(bounds.0 <= m && m <= bounds.1, "seed {seed}: mean {m} in [{}, {}]", bounds.0, bounds.1);
            assert!(bounds.2 <= sd && sd <= bounds.3, "seed {seed}: sd {sd} in [{}, {}]", bounds.2, bounds.3);
            checked += 1;
        }
        assert!(checked >= 40, "only {checked} datasets had applicable bounds");
    }

    #[test]
    fn bounds_need_score_variation() {
        let data = random_dataset(200, 3, 2, 5);
        let model = fit_discrete(&data, 0.01, 5).unwrap();
        assert!(matches!(
            score_moment_bounds(&[0.25; 10], &model, 3),
            Err(Error::BoundsInapplicable(_))
        ));
    }

    #[test]
    fn max_score_formula_matches_brute_force() {
        for p_d in 1..=30usize {
            for maxlen in 1..=p_d {
                let expected = (1..=maxlen)
                    .map(|k| binom(p_d, k) / (k * k) as f64)
                    .fold(f64::NEG_INFINITY, f64::max);
                let got = theoretical_max_score(p_d, maxlen);
                assert!(
                    (got - expected).abs() < 1e-9,
                    "p_D={p_d} maxlen={maxlen}: {got} vs {expected}"
                );
            }
        }
    }

    #[test]
    fn max_contribution_formula_matches_brute_force() {
        for p_d in 1..=30usize {
            for maxlen in 1..=p_d {
                let expected = (1..=maxlen)
                    .map(|k| binom(p_d, k) / (k * k * k) as f64)
                    .fold(f64::NEG_INFINITY, f64::max);
                let got = theoretical_max_contribution(p_d, maxlen);
                assert!(
                    (got - expected).abs() < 1e-9,
                    "p_D={p_d} maxlen={maxlen}: {got} vs {expected}"
                );
            }
        }
    }

    #[test]
    fn max_score_pinned_values() {
        assert_eq!(theoretical_max_score(8, 5), 8.0);
        assert!((theoretical_max_score(9, 3) - 84.0 / 9.0).abs() < 1e-12);
        assert!((theoretical_max_score(11, 4) - 330.0 / 16.0).abs() < 1e-12);
        assert_eq!(theoretical_max_contribution(13, 6), 13.0);
        assert!((theoretical_max_contribution(14, 5) - 2002.0 / 125.0).abs() < 1e-12);
        assert!((theoretical_max_contribution(18, 7) - binom(18, 7) / 343.0).abs() < 1e-12);
    }

    #[test]
    fn excluding_pair_never_raises_scores() {
        let data = random_dataset(250, 3, 2, 8);
        let mut model = fit_discrete(&data, 0.01, 8).unwrap();
        let (base, _, _) = discrete_scores(&model, &data);
        // Force-exclude a pair and drop its qualifying sets, as fit would.
        model.excluded_pairs.insert((0, 1));
        model.qualifying.retain(|q| !contains_excluded(&q.itemset.vars, &model.excluded_pairs));
        let (after, _, _) = discrete_scores(&model, &data);
        for i in 0..data.n() {
            assert!(after[i] <= base[i] + 1e-12);
        }
    }
}
