//! Synthetic mixed-type data with ground-truth outlier labels.
//!
//! Base rows come from a correlated Gaussian; the first block of columns is
//! quantile-discretized. Marginal outliers get unseen levels or +-15 shifts,
//! joint outliers get a wrong level under a functional association between a
//! discrete column and a set of continuous columns.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::assoc::{level_of, quantile_cutpoints};
use crate::data::{Column, ColumnKind, MixedDataset, Schema};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DesignKind {
    Linear,
    Product,
    Quotient,
}

impl DesignKind {
    /// Left fold of the pairwise operation over the chosen columns.
    fn combine(self, values: &[f64]) -> f64 {
        values
            .iter()
            .copied()
            .reduce(|acc, v| match self {
                DesignKind::Linear => acc - v,
                DesignKind::Product => acc * v,
                DesignKind::Quotient => {
                    // Zero denominators have probability zero under the
                    // Gaussian base; jitter guards imported data.
                    let d = if v == 0.0 { f64::MIN_POSITIVE } else { v };
                    acc / d
                }
            })
            .expect("design needs at least one column")
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Design {
    pub kind: DesignKind,
    pub discrete_column: usize,
    pub continuous_columns: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub n: usize,
    pub p_d: usize,
    pub p_c: usize,
    /// Levels per discrete column.
    pub levels: Vec<usize>,
    /// Marginal and joint outlier fractions.
    pub q_m: f64,
    pub q_j: f64,
    pub designs: Vec<Design>,
}

impl GeneratorSpec {
    /// Uniform level count, no outliers, no associations.
    pub fn new(n: usize, p_d: usize, p_c: usize, levels: usize) -> Self {
        GeneratorSpec {
            n,
            p_d,
            p_c,
            levels: vec![levels; p_d],
            q_m: 0.0,
            q_j: 0.0,
            designs: Vec::new(),
        }
    }

    /// Total outlier fraction `q` split into a marginal share and the joint
    /// remainder.
    pub fn with_outliers(mut self, q: f64, marginal_share: f64) -> Self {
        self.q_m = q * marginal_share;
        self.q_j = q * (1.0 - marginal_share);
        self
    }

    pub fn with_design(
        mut self,
        kind: DesignKind,
        discrete_column: usize,
        continuous_columns: Vec<usize>,
    ) -> Self {
        self.designs.push(Design {
            kind,
            discrete_column,
            continuous_columns,
        });
        self
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.n == 0 || self.p_d == 0 {
            return fail("n and p_d must be positive".into());
        }
        if self.levels.len() != self.p_d {
            return fail("levels must list one entry per discrete column".into());
        }
        if self.levels.iter().any(|&l| l < 2) {
            return fail("every discrete column needs at least 2 levels".into());
        }
        if !(0.0..=0.5).contains(&(self.q_m + self.q_j)) || self.q_m < 0.0 || self.q_j < 0.0 {
            return fail("q must satisfy 0 <= q_m + q_j <= 0.5".into());
        }
        if self.q_j > 0.0 && self.designs.is_empty() {
            return fail("q_j > 0 requires at least one design".into());
        }
        for d in &self.designs {
            if d.discrete_column >= self.p_d {
                return fail(format!("design discrete column {} out of range", d.discrete_column));
            }
            if d.continuous_columns.len() < 2 || d.continuous_columns.len() > 4 {
                return fail("designs take 2 to 4 continuous columns".into());
            }
            let mut cols = d.continuous_columns.clone();
            cols.sort_unstable();
            cols.dedup();
            if cols.len() != d.continuous_columns.len()
                || d.continuous_columns.iter().any(|&c| c >= self.p_c)
            {
                return fail("design continuous columns must be distinct and in range".into());
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TruthLabel {
    Inlier,
    MarginalDiscrete,
    MarginalContinuous,
    MarginalCombined,
    Joint,
}

impl TruthLabel {
    pub fn is_marginal(self) -> bool {
        matches!(
            self,
            TruthLabel::MarginalDiscrete
                | TruthLabel::MarginalContinuous
                | TruthLabel::MarginalCombined
        )
    }

    pub fn as_str(self) -> &'static str {
        match self {
            TruthLabel::Inlier => "inlier",
            TruthLabel::MarginalDiscrete => "marginal_discrete",
            TruthLabel::MarginalContinuous => "marginal_continuous",
            TruthLabel::MarginalCombined => "marginal_combined",
            TruthLabel::Joint => "joint",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "inlier" => TruthLabel::Inlier,
            "marginal_discrete" => TruthLabel::MarginalDiscrete,
            "marginal_continuous" => TruthLabel::MarginalContinuous,
            "marginal_combined" => TruthLabel::MarginalCombined,
            "joint" => TruthLabel::Joint,
            other => return Err(Error::Config(format!("unknown truth label `{other}`"))),
        })
    }
}

#[derive(Debug, Clone)]
pub struct LabeledDataset {
    pub dataset: MixedDataset,
    pub truth: Vec<TruthLabel>,
}

/// Random covariance matrix: a random correlation matrix (orthogonal
/// rotation of a random positive spectrum, rescaled to unit diagonal)
/// scaled by variances drawn from [0.1, 5].
pub fn random_covariance(p: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let variances: Vec<f64> = (0..p).map(|_| rng.gen_range(0.1..=5.0)).collect();
    if p == 1 {
        return DMatrix::from_element(1, 1, variances[0]);
    }
    let gauss = DMatrix::from_fn(p, p, |_, _| {
        let v: f64 = StandardNormal.sample(rng);
        v
    });
    let q = gauss.qr().q();
    // A tight spectrum keeps pairwise correlations concentrated near zero,
    // mirroring the reference generator's heavy shrinkage toward the
    // identity correlation. Wide spectra produce occasional strong
    // discrete-continuous correlations, which turn nominally clean columns
    // into genuinely associated ones.
    let spectrum: Vec<f64> = (0..p).map(|_| rng.gen_range(0.5..=1.5)).collect();
    let mut a = DMatrix::zeros(p, p);
    for i in 0..p {
        for j in 0..p {
            a[(i, j)] = (0..p).map(|k| q[(i, k)] * spectrum[k] * q[(j, k)]).sum::<f64>();
        }
    }
    // Rescale to a correlation matrix, then apply the variances.
    let mut cov = DMatrix::zeros(p, p);
    for i in 0..p {
        for j in 0..p {
            let corr = a[(i, j)] / (a[(i, i)] * a[(j, j)]).sqrt();
            cov[(i, j)] = corr * (variances[i] * variances[j]).sqrt();
        }
    }
    cov
}

fn sample_without_replacement(n: usize, k: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    for i in 0..k.min(n) {
        let j = rng.gen_range(i..n);
        idx.swap(i, j);
    }
    idx.truncate(k.min(n));
    idx
}

/// Generates a labeled dataset; bit-reproducible for a given (spec, seed).
pub fn generate(spec: &GeneratorSpec, seed: u64) -> Result<LabeledDataset> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = spec.n;
    let p = spec.p_d + spec.p_c;

    let cov = random_covariance(p, &mut rng);
    let chol = cov
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Config("covariance not positive definite".into()))?;
    let l = chol.l();
    // Row-major n x p Gaussian draws.
    let mut base = vec![0.0f64; n * p];
    let mut z = vec![0.0f64; p];
    for i in 0..n {
        for v in z.iter_mut() {
            *v = StandardNormal.sample(&mut rng);
        }
        for r in 0..p {
            base[i * p + r] = (0..=r).map(|c| l[(r, c)] * z[c]).sum();
        }
    }

    // Quantile-discretize the first p_d columns.
    let mut discrete = vec![0u32; n * spec.p_d];
    for j in 0..spec.p_d {
        let col: Vec<f64> = (0..n).map(|i| base[i * p + j]).collect();
        let codes = crate::assoc::quantile_discretize(&col, spec.levels[j]);
        for i in 0..n {
            discrete[i * spec.p_d + j] = codes[i];
        }
    }
    let mut continuous = vec![0.0f64; n * spec.p_c];
    for j in 0..spec.p_c {
        for i in 0..n {
            continuous[i * spec.p_c + j] = base[i * p + spec.p_d + j];
        }
    }

    let mut truth = vec![TruthLabel::Inlier; n];

    // Marginal injection: half the chosen rows go discrete, half continuous,
    // and a random count of the discrete half also gets continuous shifts.
    // Guard the floor against float dust from q splitting.
    let k_m = (n as f64 * spec.q_m + 1e-9).floor() as usize;
    let chosen = sample_without_replacement(n, k_m, &mut rng);
    let k_d = k_m / 2;
    let shift_continuous = |row: usize,
                            continuous: &mut Vec<f64>,
                            rng: &mut ChaCha8Rng| {
        let z = rng.gen_range(1..=spec.p_c.max(1));
        let cols = sample_without_replacement(spec.p_c, z, rng);
        for c in cols {
            let sign = if rng.gen_bool(0.5) { 15.0 } else { -15.0 };
            continuous[row * spec.p_c + c] += sign;
        }
    };
    for (pos, &row) in chosen.iter().enumerate() {
        if pos < k_d {
            let z = rng.gen_range(1..=spec.p_d);
            let cols = sample_without_replacement(spec.p_d, z, &mut rng);
            for c in cols {
                // Sentinel level one past the declared range.
                discrete[row * spec.p_d + c] = spec.levels[c] as u32;
            }
            truth[row] = TruthLabel::MarginalDiscrete;
        } else if spec.p_c > 0 {
            shift_continuous(row, &mut continuous, &mut rng);
            truth[row] = TruthLabel::MarginalContinuous;
        }
    }
    if k_d >= 1 && spec.p_c > 0 {
        let combined_count = rng.gen_range(1..=k_d);
        let mut discrete_rows: Vec<usize> = chosen[..k_d].to_vec();
        discrete_rows.shuffle(&mut rng);
        for &row in discrete_rows.iter().take(combined_count) {
            shift_continuous(row, &mut continuous, &mut rng);
            truth[row] = TruthLabel::MarginalCombined;
        }
    }

    // Associations: redefine each design's discrete column from the fold of
    // its continuous columns, leaving rows with outlying discrete cells
    // untouched, then relabel a slice of clean rows to a wrong level.
    if !spec.designs.is_empty() {
        let n_a = spec.designs.len();
        let k_j_each = (n as f64 * spec.q_j / n_a as f64 + 1e-9).floor() as usize;
        for design in &spec.designs {
            let j = design.discrete_column;
            let ell = spec.levels[j];
            let g: Vec<f64> = (0..n)
                .map(|i| {
                    let vals: Vec<f64> = design
                        .continuous_columns
                        .iter()
                        .map(|&c| continuous[i * spec.p_c + c])
                        .collect();
                    design.kind.combine(&vals)
                })
                .collect();
            let clean: Vec<usize> = (0..n)
                .filter(|&i| !truth[i].is_marginal())
                .collect();
            let clean_g: Vec<f64> = clean.iter().map(|&i| g[i]).collect();
            let cuts = quantile_cutpoints(&clean_g, ell);
            for i in 0..n {
                if matches!(
                    truth[i],
                    TruthLabel::MarginalDiscrete | TruthLabel::MarginalCombined
                ) {
                    continue;
                }
                discrete[i * spec.p_d + j] = level_of(g[i], &cuts);
            }
            let eligible: Vec<usize> = (0..n)
                .filter(|&i| truth[i] == TruthLabel::Inlier)
                .collect();
            let picks = sample_without_replacement(eligible.len(), k_j_each, &mut rng);
            for pos in picks {
                let row = eligible[pos];
                let implied = discrete[row * spec.p_d + j];
                let offset = rng.gen_range(1..ell as u32);
                discrete[row * spec.p_d + j] = (implied + offset) % ell as u32;
                truth[row] = TruthLabel::Joint;
            }
        }
    }

    let mut columns = Vec::with_capacity(p);
    for j in 0..spec.p_d {
        columns.push(Column {
            name: format!("d{}", j + 1),
            kind: ColumnKind::Discrete,
            levels: (1..=spec.levels[j]).map(|l| l.to_string()).collect(),
        });
    }
    for j in 0..spec.p_c {
        columns.push(Column {
            name: format!("c{}", j + 1),
            kind: ColumnKind::Continuous,
            levels: Vec::new(),
        });
    }
    let dataset = MixedDataset::new(Schema::new(columns)?, n, discrete, continuous)?;
    Ok(LabeledDataset { dataset, truth })
}
