//! Shared statistical primitives: chi-square tails, a goodness-of-fit test,
//! Kruskal-Wallis with midrank tie handling, step-down multiple testing, and
//! basic robust summaries.

use statrs::function::gamma::gamma_ur;

use crate::error::{Error, Result};

/// Upper tail of the chi-square distribution with `df` degrees of freedom.
pub fn chi_square_sf(x: f64, df: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    gamma_ur(df / 2.0, x / 2.0)
}

/// Pearson goodness-of-fit of observed counts against probabilities `pi`.
/// Returns the statistic and its upper-tail p-value.
pub fn chi_square_gof(observed: &[u64], pi: &[f64]) -> Result<(f64, f64)> {
    if observed.len() != pi.len() || observed.len() < 2 {
        return Err(Error::Test("need matching counts and probabilities, at least 2 cells".into()));
    }
    let n: u64 = observed.iter().sum();
    if n == 0 {
        return Err(Error::Test("goodness-of-fit on empty sample".into()));
    }
    let mut stat = 0.0;
    for (&o, &p) in observed.iter().zip(pi) {
        if p <= 0.0 {
            return Err(Error::Test(format!("non-positive cell probability {p}")));
        }
        let e = n as f64 * p;
        let d = o as f64 - e;
        stat += d * d / e;
    }
    let df = (observed.len() - 1) as f64;
    Ok((stat, chi_square_sf(stat, df)))
}

/// Midranks of `values`; tied entries share the average of their positions.
pub fn midranks(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap());
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Kruskal-Wallis H with tie correction, plus the chi-square p-value at
/// `groups - 1` degrees of freedom. `groups[i]` labels each value's group.
pub fn kruskal_wallis(values: &[f64], groups: &[usize]) -> Result<(f64, f64)> {
    if values.len() != groups.len() || values.is_empty() {
        return Err(Error::Test("mismatched or empty Kruskal-Wallis input".into()));
    }
    let g = groups.iter().max().unwrap() + 1;
    if g < 2 {
        return Err(Error::Test("Kruskal-Wallis needs at least 2 groups".into()));
    }
    let n = values.len() as f64;
    let ranks = midranks(values);
    let mut rank_sum = vec![0.0; g];
    let mut count = vec![0usize; g];
    for (i, &grp) in groups.iter().enumerate() {
        rank_sum[grp] += ranks[i];
        count[grp] += 1;
    }
    if count.iter().any(|&c| c == 0) {
        return Err(Error::Test("empty group in Kruskal-Wallis".into()));
    }
    let mut h = 0.0;
    for grp in 0..g {
        h += rank_sum[grp] * rank_sum[grp] / count[grp] as f64;
    }
    h = 12.0 / (n * (n + 1.0)) * h - 3.0 * (n + 1.0);

    // Tie correction from the multiplicities of tied values.
    let mut sorted: Vec<f64> = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j + 1 < sorted.len() && sorted[j + 1] == sorted[i] {
            j += 1;
        }
        let t = (j - i + 1) as f64;
        tie_term += t * t * t - t;
        i = j + 1;
    }
    let denom = 1.0 - tie_term / (n * n * n - n);
    if denom <= 0.0 {
        // All values identical; no evidence of group differences.
        return Ok((0.0, 1.0));
    }
    h /= denom;
    Ok((h, chi_square_sf(h, (g - 1) as f64)))
}

/// Holm step-down check: true iff every sorted p-value `P(i)` satisfies
/// `P(i) <= alpha / (m + 1 - i)` for `i = 1..m`, i.e. all hypotheses reject.
pub fn holm_all_reject(pvalues: &[f64], alpha: f64) -> bool {
    if pvalues.is_empty() {
        return false;
    }
    let m = pvalues.len();
    let mut sorted: Vec<f64> = pvalues.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    sorted
        .iter()
        .enumerate()
        .all(|(i, &p)| p <= alpha / (m - i) as f64)
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Sample standard deviation (n - 1 denominator). Zero for n < 2.
pub fn sample_std(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let m = mean(values);
    let ss: f64 = values.iter().map(|v| (v - m) * (v - m)).sum();
    (ss / (n - 1) as f64).sqrt()
}

pub fn median(values: &[f64]) -> f64 {
    let mut v: Vec<f64> = values.to_vec();
    let n = v.len();
    let cmp = |a: &f64, b: &f64| a.partial_cmp(b).unwrap();
    let (_, &mut upper, _) = v.select_nth_unstable_by(n / 2, cmp);
    if n % 2 == 1 {
        upper
    } else {
        // The lower middle is the max of the left partition.
        let lower = v[..n / 2].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        (lower + upper) / 2.0
    }
}

/// Median absolute deviation, unscaled.
pub fn mad(values: &[f64]) -> f64 {
    let m = median(values);
    let devs: Vec<f64> = values.iter().map(|v| (v - m).abs()).collect();
    median(&devs)
}

/// Numerically stable log of a sum of exponentials.
pub fn logsumexp(values: &[f64]) -> f64 {
    let mx = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !mx.is_finite() {
        return mx;
    }
    mx + values.iter().map(|v| (v - mx).exp()).sum::<f64>().ln()
}
