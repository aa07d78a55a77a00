//! Recall, precision and F1 metrics plus a synthetic experiment grid that
//! exercises the full pipeline over ranges of size, level count and
//! contamination.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::time::Instant;

use crate::data::{DetectionConfig, DetectionResult};
use crate::error::Result;
use crate::generator::{generate, Design, DesignKind, GeneratorSpec, TruthLabel};
use crate::pipeline::detect;

/// Confusion counts and the derived rates for one flagged set against one
/// truth subset. `f1` is zero whenever no true positive exists.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub recall: f64,
    pub precision: f64,
    pub f1: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl Metrics {
    pub fn from_sets(truth: &BTreeSet<usize>, flagged: &BTreeSet<usize>) -> Metrics {
        let tp = truth.intersection(flagged).count();
        let fp = flagged.len() - tp;
        let fn_ = truth.len() - tp;
        let recall = if truth.is_empty() {
            1.0
        } else {
            tp as f64 / truth.len() as f64
        };
        let precision = if flagged.is_empty() {
            1.0
        } else {
            tp as f64 / flagged.len() as f64
        };
        let f1 = if tp == 0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Metrics {
            recall,
            precision,
            f1,
            tp,
            fp,
            fn_,
        }
    }
}

/// Which truth subset a flagged set is scored against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Target {
    /// Union of the three marginal labels against the two marginal index
    /// sets.
    Marginal,
    /// Joint label against the joint index set.
    Joint,
}

impl Target {
    pub fn name(self) -> &'static str {
        match self {
            Target::Marginal => "marginal",
            Target::Joint => "joint",
        }
    }
}

/// Scores one detection run against the ground truth. Rows are compared by
/// index, so both sides must describe the same table.
pub fn score_detection(truth: &[TruthLabel], result: &DetectionResult, target: Target) -> Metrics {
    let truth_set: BTreeSet<usize> = truth
        .iter()
        .enumerate()
        .filter(|(_, &l)| match target {
            Target::Marginal => l.is_marginal(),
            Target::Joint => l == TruthLabel::Joint,
        })
        .map(|(i, _)| i)
        .collect();
    let flagged: BTreeSet<usize> = match target {
        Target::Marginal => result
            .marginal_discrete
            .iter()
            .chain(&result.marginal_continuous)
            .copied()
            .collect(),
        Target::Joint => result.joint.iter().copied().collect(),
    };
    Metrics::from_sets(&truth_set, &flagged)
}

/// Grid ranges for the experiment runner. Every combination of `n_values`,
/// `levels_values`, `q_values` and `marginal_share_values` becomes one cell
/// evaluated over `seeds` replicates.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub n_values: Vec<usize>,
    pub levels_values: Vec<usize>,
    pub q_values: Vec<f64>,
    pub marginal_share_values: Vec<f64>,
    pub p_d: usize,
    pub p_c: usize,
    /// Association imposed on every cell so joint outliers exist. None
    /// leaves the non-marginal fraction uninjected.
    pub design: Option<Design>,
    /// Replicates per cell; replicate `s` uses seed `base_seed + s`.
    pub seeds: u64,
    pub base_seed: u64,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        ExperimentSpec {
            n_values: vec![1000, 3000],
            levels_values: vec![2, 3, 4],
            q_values: vec![0.05, 0.10, 0.20],
            marginal_share_values: vec![0.5, 0.8],
            p_d: 5,
            p_c: 5,
            design: Some(Design {
                kind: DesignKind::Product,
                discrete_column: 0,
                continuous_columns: vec![0, 1],
            }),
            seeds: 20,
            base_seed: 0,
        }
    }
}

/// One grid cell's parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellParams {
    pub n: usize,
    pub levels: usize,
    pub q: f64,
    pub marginal_share: f64,
}

/// Metrics for one replicate of one cell.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SeedRow {
    pub seed: u64,
    pub marginal: Metrics,
    pub joint: Metrics,
}

/// Mean and standard error of per-seed values (no pooling of confusion
/// counts across seeds).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Aggregate {
    pub mean: f64,
    pub se: f64,
}

pub fn aggregate(values: &[f64]) -> Aggregate {
    let k = values.len() as f64;
    let mean = values.iter().sum::<f64>() / k;
    let var = if values.len() < 2 {
        0.0
    } else {
        values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0)
    };
    Aggregate {
        mean,
        se: (var / k).sqrt(),
    }
}

/// One cell's outcome: either per-seed rows or a skip reason from a
/// degenerate configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CellResult {
    pub params: CellParams,
    pub rows: Vec<SeedRow>,
    pub skipped: Option<String>,
    /// Wall-clock seconds for the whole cell. Excluded from serialized
    /// artifacts so reruns with the same seeds are byte-identical.
    #[serde(skip)]
    pub wall_seconds: f64,
}

impl CellResult {
    /// Mean of the per-seed values for one metric of one target.
    pub fn mean(&self, target: Target, pick: fn(&Metrics) -> f64) -> f64 {
        self.aggregate(target, pick).mean
    }

    pub fn aggregate(&self, target: Target, pick: fn(&Metrics) -> f64) -> Aggregate {
        let values: Vec<f64> = self
            .rows
            .iter()
            .map(|r| match target {
                Target::Marginal => pick(&r.marginal),
                Target::Joint => pick(&r.joint),
            })
            .collect();
        aggregate(&values)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub spec: ExperimentSpec,
    pub cells: Vec<CellResult>,
}

impl ExperimentReport {
    /// One CSV row per cell, seed and target.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "n,levels,q,marginal_share,seed,target,recall,precision,f1,tp,fp,fn\n",
        );
        for cell in &self.cells {
            for row in &cell.rows {
                for (target, m) in [("marginal", &row.marginal), ("joint", &row.joint)] {
                    out.push_str(&format!(
                        "{},{},{},{},{},{},{},{},{},{},{},{}\n",
                        cell.params.n,
                        cell.params.levels,
                        cell.params.q,
                        cell.params.marginal_share,
                        row.seed,
                        target,
                        m.recall,
                        m.precision,
                        m.f1,
                        m.tp,
                        m.fp,
                        m.fn_,
                    ));
                }
            }
        }
        out
    }

    /// Per-cell aggregates for the JSON summary artifact.
    pub fn summary(&self) -> Vec<CellSummary> {
        self.cells
            .iter()
            .map(|cell| CellSummary {
                params: cell.params.clone(),
                skipped: cell.skipped.clone(),
                seeds: cell.rows.len(),
                marginal_recall: cell.aggregate(Target::Marginal, |m| m.recall),
                marginal_precision: cell.aggregate(Target::Marginal, |m| m.precision),
                marginal_f1: cell.aggregate(Target::Marginal, |m| m.f1),
                joint_recall: cell.aggregate(Target::Joint, |m| m.recall),
                joint_precision: cell.aggregate(Target::Joint, |m| m.precision),
                joint_f1: cell.aggregate(Target::Joint, |m| m.f1),
            })
            .collect()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CellSummary {
    #[serde(flatten)]
    pub params: CellParams,
    pub skipped: Option<String>,
    pub seeds: usize,
    pub marginal_recall: Aggregate,
    pub marginal_precision: Aggregate,
    pub marginal_f1: Aggregate,
    pub joint_recall: Aggregate,
    pub joint_precision: Aggregate,
    pub joint_f1: Aggregate,
}

fn run_cell(spec: &ExperimentSpec, params: &CellParams) -> CellResult {
    let start = Instant::now();
    let mut rows = Vec::with_capacity(spec.seeds as usize);
    for s in 0..spec.seeds {
        let seed = spec.base_seed + s;
        let mut gen = GeneratorSpec::new(params.n, spec.p_d, spec.p_c, params.levels)
            .with_outliers(params.q, params.marginal_share);
        if let Some(design) = &spec.design {
            gen = gen.with_design(
                design.kind,
                design.discrete_column,
                design.continuous_columns.clone(),
            );
        }
        let outcome = generate(&gen, seed).and_then(|sim| {
            let cfg = DetectionConfig {
                seed,
                ..Default::default()
            };
            let result = detect(&sim.dataset, &cfg)?;
            Ok(SeedRow {
                seed,
                marginal: score_detection(&sim.truth, &result, Target::Marginal),
                joint: score_detection(&sim.truth, &result, Target::Joint),
            })
        });
        match outcome {
            Ok(row) => rows.push(row),
            // A degenerate configuration abandons the whole cell, mirroring
            // the reference study's exclusion of unworkable grid corners.
            Err(e) => {
                return CellResult {
                    params: params.clone(),
                    rows: Vec::new(),
                    skipped: Some(e.to_string()),
                    wall_seconds: start.elapsed().as_secs_f64(),
                }
            }
        }
    }
    CellResult {
        params: params.clone(),
        rows,
        skipped: None,
        wall_seconds: start.elapsed().as_secs_f64(),
    }
}

/// Runs the full pipeline over every grid cell. Cells run concurrently;
/// the report order and contents are deterministic for a given spec.
pub fn run_grid(spec: &ExperimentSpec) -> Result<ExperimentReport> {
    let mut cells = Vec::new();
    for &n in &spec.n_values {
        for &levels in &spec.levels_values {
            for &q in &spec.q_values {
                for &share in &spec.marginal_share_values {
                    cells.push(CellParams {
                        n,
                        levels,
                        q,
                        marginal_share: share,
                    });
                }
            }
        }
    }
    let results: Vec<CellResult> = cells.par_iter().map(|p| run_cell(spec, p)).collect();
    Ok(ExperimentReport {
        spec: spec.clone(),
        cells: results,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn truth_of(n: usize, marginal: &[usize], joint: &[usize]) -> Vec<TruthLabel> {
        let mut t = vec![TruthLabel::Inlier; n];
        for &i in marginal {
            t[i] = TruthLabel::MarginalContinuous;
        }
        for &i in joint {
            t[i] = TruthLabel::Joint;
        }
        t
    }

    fn result_of(marginal: &[usize], joint: &[usize]) -> DetectionResult {
        DetectionResult {
            marginal_discrete: Vec::new(),
            marginal_continuous: marginal.to_vec(),
            joint: joint.to_vec(),
            associations: Vec::new(),
            curves: Vec::new(),
            profile: crate::data::ScoreProfile::default(),
            notes: Vec::new(),
        }
    }

    #[test]
    fn perfect_detection_is_all_ones() {
        let truth = truth_of(10, &[1, 4], &[7]);
        let result = result_of(&[1, 4], &[7]);
        for target in [Target::Marginal, Target::Joint] {
            let m = score_detection(&truth, &result, target);
            assert_eq!((m.recall, m.precision, m.f1), (1.0, 1.0, 1.0));
            assert_eq!((m.fp, m.fn_), (0, 0));
        }
    }

    #[test]
    fn empty_flagged_set_gives_zero_recall_and_f1() {
        let truth = truth_of(10, &[1, 4], &[]);
        let result = result_of(&[], &[]);
        let m = score_detection(&truth, &result, Target::Marginal);
        assert_eq!(m.recall, 0.0);
        assert_eq!(m.f1, 0.0);
        assert_eq!(m.fn_, 2);
    }

    #[test]
    fn half_recall_full_precision() {
        let truth = truth_of(10, &[1, 4], &[]);
        let result = result_of(&[1], &[]);
        let m = score_detection(&truth, &result, Target::Marginal);
        assert_eq!(m.recall, 0.5);
        assert_eq!(m.precision, 1.0);
        assert!((m.f1 - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn metrics_ignore_row_order() {
        let truth = truth_of(20, &[3, 9, 15], &[]);
        let a = score_detection(&truth, &result_of(&[3, 9, 11], &[]), Target::Marginal);
        let b = score_detection(&truth, &result_of(&[11, 3, 9], &[]), Target::Marginal);
        assert_eq!(a, b);
    }

    #[test]
    fn one_cell_two_seeds_yields_two_rows_per_target() {
        let spec = ExperimentSpec {
            n_values: vec![300],
            levels_values: vec![3],
            q_values: vec![0.1],
            marginal_share_values: vec![1.0],
            p_d: 3,
            p_c: 3,
            design: None,
            seeds: 2,
            base_seed: 11,
        };
        let report = run_grid(&spec).unwrap();
        assert_eq!(report.cells.len(), 1);
        assert_eq!(report.cells[0].rows.len(), 2);
        let csv = report.to_csv();
        assert_eq!(csv.lines().count(), 1 + 2 * 2);
        // Per-seed averaging: the aggregate mean is the mean of the rows.
        let cell = &report.cells[0];
        let by_hand: f64 = cell.rows.iter().map(|r| r.marginal.recall).sum::<f64>() / 2.0;
        assert_eq!(cell.mean(Target::Marginal, |m| m.recall), by_hand);
    }

    #[test]
    fn degenerate_cell_is_skipped() {
        let spec = ExperimentSpec {
            n_values: vec![10],
            levels_values: vec![7],
            q_values: vec![0.0],
            marginal_share_values: vec![1.0],
            p_d: 2,
            p_c: 2,
            design: None,
            seeds: 1,
            base_seed: 0,
        };
        let report = run_grid(&spec).unwrap();
        assert!(report.cells[0].skipped.is_some());
        assert!(report.cells[0].rows.is_empty());
    }

    #[test]
    fn rerun_is_byte_identical() {
        let spec = ExperimentSpec {
            n_values: vec![300],
            levels_values: vec![2, 3],
            q_values: vec![0.1],
            marginal_share_values: vec![1.0],
            p_d: 3,
            p_c: 3,
            design: None,
            seeds: 2,
            base_seed: 5,
        };
        let a = run_grid(&spec).unwrap();
        let b = run_grid(&spec).unwrap();
        assert_eq!(a.to_csv(), b.to_csv());
        assert_eq!(
            serde_json::to_string(&a.summary()).unwrap(),
            serde_json::to_string(&b.summary()).unwrap()
        );
    }
}
