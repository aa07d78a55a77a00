//! Mixed-type table, schema and CSV ingestion.
//!
//! A [`MixedDataset`] is an immutable column-typed table with `p_D` discrete
//! and `p_C` continuous columns. Discrete cells are stored as level indices
//! into the per-column level list declared by the [`Schema`]. A cell may also
//! hold the sentinel index `levels.len()`, one past the declared levels; the
//! synthetic generator uses it to plant unseen-level outliers.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnKind {
    Discrete,
    Continuous,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    pub kind: ColumnKind,
    /// Declared level codes, in first-appearance order. Empty for continuous
    /// columns.
    pub levels: Vec<String>,
}

/// Ordered column declarations for a mixed-type table.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schema {
    columns: Vec<Column>,
}

impl Schema {
    pub fn new(columns: Vec<Column>) -> Result<Self> {
        if columns.is_empty() {
            return Err(Error::Schema("schema declares no columns".into()));
        }
        for col in &columns {
            match col.kind {
                ColumnKind::Discrete => {
                    if col.levels.len() < 2 {
                        return Err(Error::Schema(format!(
                            "discrete column `{}` has {} level(s); at least 2 required",
                            col.name,
                            col.levels.len()
                        )));
                    }
                    let mut seen = std::collections::HashSet::new();
                    for l in &col.levels {
                        if !seen.insert(l) {
                            return Err(Error::Schema(format!(
                                "duplicate level `{l}` in column `{}`",
                                col.name
                            )));
                        }
                    }
                }
                ColumnKind::Continuous => {
                    if !col.levels.is_empty() {
                        return Err(Error::Schema(format!(
                            "continuous column `{}` must not declare levels",
                            col.name
                        )));
                    }
                }
            }
        }
        Ok(Schema { columns })
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn p_d(&self) -> usize {
        self.columns
            .iter()
            .filter(|c| c.kind == ColumnKind::Discrete)
            .count()
    }

    pub fn p_c(&self) -> usize {
        self.columns
            .iter()
            .filter(|c| c.kind == ColumnKind::Continuous)
            .count()
    }

    /// Discrete columns in table order.
    pub fn discrete_columns(&self) -> Vec<&Column> {
        self.columns
            .iter()
            .filter(|c| c.kind == ColumnKind::Discrete)
            .collect()
    }

    pub fn continuous_columns(&self) -> Vec<&Column> {
        self.columns
            .iter()
            .filter(|c| c.kind == ColumnKind::Continuous)
            .collect()
    }

    /// Declared level count for the `j`th discrete column.
    pub fn level_count(&self, j: usize) -> usize {
        self.discrete_columns()[j].levels.len()
    }
}

/// Immutable mixed-type table. Discrete cells are level indices; a value of
/// `levels.len()` denotes the unseen-level sentinel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixedDataset {
    schema: Schema,
    n: usize,
    /// Row-major `n x p_D` level indices.
    discrete: Vec<u32>,
    /// Row-major `n x p_C` finite values.
    continuous: Vec<f64>,
}

impl MixedDataset {
    pub fn new(schema: Schema, n: usize, discrete: Vec<u32>, continuous: Vec<f64>) -> Result<Self> {
        let p_d = schema.p_d();
        let p_c = schema.p_c();
        if discrete.len() != n * p_d || continuous.len() != n * p_c {
            return Err(Error::Schema(format!(
                "cell storage does not match shape n={n}, p_D={p_d}, p_C={p_c}"
            )));
        }
        let disc_cols = schema.discrete_columns();
        for (idx, &v) in discrete.iter().enumerate() {
            let j = idx % p_d.max(1);
            if (v as usize) > disc_cols[j].levels.len() {
                return Err(Error::Ingestion {
                    row: idx / p_d.max(1),
                    column: disc_cols[j].name.clone(),
                    reason: format!("level index {v} out of range"),
                });
            }
        }
        for (idx, &v) in continuous.iter().enumerate() {
            if !v.is_finite() {
                let j = idx % p_c.max(1);
                return Err(Error::Ingestion {
                    row: idx / p_c.max(1),
                    column: schema.continuous_columns()[j].name.clone(),
                    reason: "non-finite value".into(),
                });
            }
        }
        Ok(MixedDataset {
            schema,
            n,
            discrete,
            continuous,
        })
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p_d(&self) -> usize {
        self.schema.p_d()
    }

    pub fn p_c(&self) -> usize {
        self.schema.p_c()
    }

    /// Level index of row `i` in the `j`th discrete column.
    pub fn discrete_cell(&self, i: usize, j: usize) -> u32 {
        self.discrete[i * self.p_d() + j]
    }

    pub fn discrete_row(&self, i: usize) -> &[u32] {
        let p = self.p_d();
        &self.discrete[i * p..(i + 1) * p]
    }

    pub fn continuous_cell(&self, i: usize, j: usize) -> f64 {
        self.continuous[i * self.p_c() + j]
    }

    pub fn continuous_row(&self, i: usize) -> &[f64] {
        let p = self.p_c();
        &self.continuous[i * p..(i + 1) * p]
    }

    /// Values of the `j`th discrete column for all rows.
    pub fn discrete_column(&self, j: usize) -> Vec<u32> {
        (0..self.n).map(|i| self.discrete_cell(i, j)).collect()
    }

    pub fn continuous_column(&self, j: usize) -> Vec<f64> {
        (0..self.n).map(|i| self.continuous_cell(i, j)).collect()
    }

    /// Views sharing the parent's row order: discrete indices and continuous
    /// rows, cell-for-cell.
    pub fn split_columns(&self) -> (DiscreteView<'_>, ContinuousView<'_>) {
        (
            DiscreteView { data: self },
            ContinuousView { data: self },
        )
    }
}

/// Read-only view over the discrete cells of a dataset.
#[derive(Debug, Clone, Copy)]
pub struct DiscreteView<'a> {
    data: &'a MixedDataset,
}

impl<'a> DiscreteView<'a> {
    pub fn n(&self) -> usize {
        self.data.n()
    }
    pub fn width(&self) -> usize {
        self.data.p_d()
    }
    pub fn row(&self, i: usize) -> &'a [u32] {
        self.data.discrete_row(i)
    }
}

/// Read-only view over the continuous cells of a dataset.
#[derive(Debug, Clone, Copy)]
pub struct ContinuousView<'a> {
    data: &'a MixedDataset,
}

impl<'a> ContinuousView<'a> {
    pub fn n(&self) -> usize {
        self.data.n()
    }
    pub fn width(&self) -> usize {
        self.data.p_c()
    }
    pub fn row(&self, i: usize) -> &'a [f64] {
        self.data.continuous_row(i)
    }
    pub fn rows(&self) -> impl Iterator<Item = &'a [f64]> + '_ {
        (0..self.n()).map(|i| self.row(i))
    }
}

/// Top-level detection parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DetectionConfig {
    /// Maximum believed proportion of outliers.
    pub rho: f64,
    /// Additional tolerated proportion; `rho + epsilon <= 0.5`.
    pub epsilon: f64,
    /// Significance for the simultaneous multinomial confidence intervals.
    pub alpha_ci: f64,
    pub seed: u64,
}

impl Default for DetectionConfig {
    fn default() -> Self {
        DetectionConfig {
            rho: 0.20,
            epsilon: 0.02,
            alpha_ci: 0.01,
            seed: 0,
        }
    }
}

impl DetectionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rho > 0.0 && self.rho <= 0.5) {
            return Err(Error::Config(format!("rho={} outside (0, 0.5]", self.rho)));
        }
        if self.epsilon < 0.0 {
            return Err(Error::Config(format!("epsilon={} negative", self.epsilon)));
        }
        if self.rho + self.epsilon > 0.50 + 1e-12 {
            return Err(Error::Config(format!(
                "rho + epsilon = {} exceeds 0.50",
                self.rho + self.epsilon
            )));
        }
        if !(self.alpha_ci > 0.0 && self.alpha_ci < 1.0) {
            return Err(Error::Config(format!(
                "alpha_ci={} outside (0, 1)",
                self.alpha_ci
            )));
        }
        Ok(())
    }

    /// Ceiling of `(rho + epsilon) * n`, the most outliers tolerated.
    pub fn max_outliers(&self, n: usize) -> usize {
        ((self.rho + self.epsilon) * n as f64).ceil() as usize
    }
}

/// Per-row score pairs plus the discrete contribution matrix.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ScoreProfile {
    pub discrete_scores: Vec<f64>,
    pub continuous_scores: Vec<f64>,
    /// Row-major `n x p_D`.
    pub contributions: Vec<f64>,
    /// Rows carrying an infrequent itemset of unit length.
    pub unit_length_infrequent: Vec<bool>,
}

impl ScoreProfile {
    pub fn contribution_row(&self, i: usize, p_d: usize) -> &[f64] {
        &self.contributions[i * p_d..(i + 1) * p_d]
    }
}

/// Which threshold-selection route produced an association's lambda.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaMethod {
    /// Binary target: the small fixed threshold is used directly.
    BinaryDefault,
    ConsecutiveAngles,
    /// Elbow angle at or above the threshold table: small fixed lambda.
    SmallLambda,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Association {
    /// Discrete column index (within discrete columns).
    pub discrete_column: usize,
    /// Continuous column indices forming the context.
    pub context: Vec<usize>,
    pub log_p_sum: f64,
    pub lambda_star: f64,
    pub method: LambdaMethod,
}

/// Misclassification curve backing one association's threshold choice.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AssociationCurve {
    /// Discrete column index (within discrete columns).
    pub discrete_column: usize,
    /// Threshold grid.
    pub grid: Vec<f64>,
    /// Misclassified rows with ratio above each grid value.
    pub n: Vec<usize>,
    /// Obtuse angle at the curve's elbow, when one was evaluated.
    pub theta_elbow: Option<f64>,
}

/// Disjoint marginal and joint index sets plus diagnostics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DetectionResult {
    pub marginal_discrete: Vec<usize>,
    pub marginal_continuous: Vec<usize>,
    pub joint: Vec<usize>,
    pub associations: Vec<Association>,
    /// One curve per association, in the same order.
    pub curves: Vec<AssociationCurve>,
    pub profile: ScoreProfile,
    /// Free-form pipeline notes (skipped stages, per-column diagnostics).
    pub notes: Vec<String>,
}

fn parse_finite(field: &str) -> Option<f64> {
    let v: f64 = field.trim().parse().ok()?;
    v.is_finite().then_some(v)
}

fn looks_numeric(field: &str) -> bool {
    field.trim().parse::<f64>().is_ok()
}

/// Loads a CSV file with a mandatory header row. A column is treated as
/// discrete iff it contains a non-numeric entry or the hint flags it.
/// Discrete levels are enumerated in first-appearance order.
pub fn load_csv(path: &Path, hint: Option<&BTreeMap<String, ColumnKind>>) -> Result<MixedDataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let headers: Vec<String> = rdr.headers()?.iter().map(|h| h.to_string()).collect();
    let mut records: Vec<csv::StringRecord> = Vec::new();
    for rec in rdr.records() {
        records.push(rec?);
    }
    load_rows(&headers, &records, hint)
}

fn load_rows(
    headers: &[String],
    records: &[csv::StringRecord],
    hint: Option<&BTreeMap<String, ColumnKind>>,
) -> Result<MixedDataset> {
    let width = headers.len();
    // Decide column kinds.
    let mut kinds = Vec::with_capacity(width);
    for (c, name) in headers.iter().enumerate() {
        let hinted = hint.and_then(|h| h.get(name)).copied();
        let kind = match hinted {
            Some(k) => k,
            None => {
                let any_non_numeric = records
                    .iter()
                    .any(|r| !r.get(c).map(looks_numeric).unwrap_or(false));
                if any_non_numeric {
                    ColumnKind::Discrete
                } else {
                    ColumnKind::Continuous
                }
            }
        };
        kinds.push(kind);
    }

    let mut columns = Vec::with_capacity(width);
    let mut level_maps: Vec<BTreeMap<String, u32>> = vec![BTreeMap::new(); width];
    let mut discrete_cells: Vec<Vec<u32>> = vec![Vec::new(); width];
    let mut continuous_cells: Vec<Vec<f64>> = vec![Vec::new(); width];

    for (r, rec) in records.iter().enumerate() {
        if rec.len() != width {
            return Err(Error::Ingestion {
                row: r,
                column: String::new(),
                reason: format!("expected {width} fields, found {}", rec.len()),
            });
        }
        for (c, field) in rec.iter().enumerate() {
            if field.trim().is_empty() {
                return Err(Error::Ingestion {
                    row: r,
                    column: headers[c].clone(),
                    reason: "missing value".into(),
                });
            }
            match kinds[c] {
                ColumnKind::Discrete => {
                    let next = level_maps[c].len() as u32;
                    let idx = *level_maps[c].entry(field.to_string()).or_insert(next);
                    discrete_cells[c].push(idx);
                }
                ColumnKind::Continuous => {
                    let v = parse_finite(field).ok_or_else(|| Error::Ingestion {
                        row: r,
                        column: headers[c].clone(),
                        reason: format!("non-finite or unparseable numeric `{field}`"),
                    })?;
                    continuous_cells[c].push(v);
                }
            }
        }
    }

    for (c, name) in headers.iter().enumerate() {
        let levels = if kinds[c] == ColumnKind::Discrete {
            // Restore first-appearance order; BTreeMap iterates by key.
            let mut by_idx: Vec<(u32, String)> = level_maps[c]
                .iter()
                .map(|(k, &v)| (v, k.clone()))
                .collect();
            by_idx.sort_by_key(|(v, _)| *v);
            by_idx.into_iter().map(|(_, k)| k).collect()
        } else {
            Vec::new()
        };
        columns.push(Column {
            name: name.clone(),
            kind: kinds[c],
            levels,
        });
    }

    let schema = Schema::new(columns)?;
    let n = records.len();
    let mut discrete = Vec::with_capacity(n * schema.p_d());
    let mut continuous = Vec::with_capacity(n * schema.p_c());
    for r in 0..n {
        for c in 0..width {
            match kinds[c] {
                ColumnKind::Discrete => discrete.push(discrete_cells[c][r]),
                ColumnKind::Continuous => continuous.push(continuous_cells[c][r]),
            }
        }
    }
    MixedDataset::new(schema, n, discrete, continuous)
}

/// Writes the dataset back to CSV. Continuous cells use the shortest
/// round-trip decimal representation; level indices map back to their codes.
/// The unseen sentinel is written as `<max declared code>+1` when all codes
/// are integers, otherwise as `__unseen__`.
pub fn write_csv(data: &MixedDataset, path: &Path) -> Result<()> {
    let mut wtr = csv::Writer::from_path(path)?;
    let cols = data.schema().columns();
    wtr.write_record(cols.iter().map(|c| c.name.as_str()))?;
    let mut buf = String::new();
    for i in 0..data.n() {
        let mut record: Vec<String> = Vec::with_capacity(cols.len());
        let mut dj = 0;
        let mut cj = 0;
        for col in cols {
            match col.kind {
                ColumnKind::Discrete => {
                    let idx = data.discrete_cell(i, dj) as usize;
                    let code = if idx < col.levels.len() {
                        col.levels[idx].clone()
                    } else {
                        unseen_code(&col.levels)
                    };
                    record.push(code);
                    dj += 1;
                }
                ColumnKind::Continuous => {
                    buf.clear();
                    write!(buf, "{}", data.continuous_cell(i, cj)).unwrap();
                    record.push(buf.clone());
                    cj += 1;
                }
            }
        }
        wtr.write_record(&record)?;
    }
    wtr.flush()?;
    Ok(())
}

fn unseen_code(levels: &[String]) -> String {
    let ints: Option<Vec<i64>> = levels.iter().map(|l| l.parse().ok()).collect();
    match ints {
        Some(v) => (v.into_iter().max().unwrap_or(0) + 1).to_string(),
        None => "__unseen__".into(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn csv_fixture(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn smallest_valid_shape() {
        let f = csv_fixture("color,x\nred,1.5\nblue,2.0\nred,-0.25\n");
        let d = load_csv(f.path(), None).unwrap();
        assert_eq!(d.p_d(), 1);
        assert_eq!(d.p_c(), 1);
        assert_eq!(d.n(), 3);
        assert_eq!(d.schema().level_count(0), 2);
        assert_eq!(d.discrete_column(0), vec![0, 1, 0]);
    }

    #[test]
    fn one_level_column_rejected() {
        let f = csv_fixture("c,x\nA,1\nA,2\nA,3\n");
        let err = load_csv(f.path(), None).unwrap_err();
        assert!(matches!(err, Error::Schema(_)), "{err}");
    }

    #[test]
    fn nan_in_numeric_column_rejected() {
        let f = csv_fixture("c,x\nA,1\nB,NaN\n");
        // "NaN" parses as f64 NaN so the column stays continuous; the cell
        // must still be rejected as non-finite.
        let err = load_csv(f.path(), None).unwrap_err();
        match err {
            Error::Ingestion { row, column, .. } => {
                assert_eq!(row, 1);
                assert_eq!(column, "x");
            }
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn missing_value_rejected() {
        let f = csv_fixture("c,x\nA,1\nB,\n");
        assert!(matches!(
            load_csv(f.path(), None).unwrap_err(),
            Error::Ingestion { row: 1, .. }
        ));
    }

    #[test]
    fn hint_forces_numeric_column_discrete() {
        let f = csv_fixture("g,x\n1,0.5\n2,0.7\n1,0.9\n");
        let mut hint = BTreeMap::new();
        hint.insert("g".to_string(), ColumnKind::Discrete);
        let d = load_csv(f.path(), Some(&hint)).unwrap();
        assert_eq!(d.p_d(), 1);
        assert_eq!(d.schema().level_count(0), 2);
    }

    #[test]
    fn split_columns_views() {
        let f = csv_fixture("a,b,x,y\nA,P,1,2\nB,Q,3,4\n");
        let d = load_csv(f.path(), None).unwrap();
        let (dv, cv) = d.split_columns();
        assert_eq!(dv.width(), 2);
        assert_eq!(cv.width(), 2);
        assert_eq!(dv.row(1), &[1, 1]);
        assert_eq!(cv.row(0), &[1.0, 2.0]);
    }

    #[test]
    fn csv_round_trip_exact() {
        let f = csv_fixture("c,x\nA,0.1\nB,-3.25\nA,1e-12\nC,1000000.5\n");
        let d = load_csv(f.path(), None).unwrap();
        let out = tempfile::NamedTempFile::new().unwrap();
        write_csv(&d, out.path()).unwrap();
        let d2 = load_csv(out.path(), None).unwrap();
        assert_eq!(d, d2);
    }

    #[test]
    fn config_rejects_excess_rho_epsilon() {
        let cfg = DetectionConfig {
            rho: 0.4,
            epsilon: 0.2,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
    }
}
