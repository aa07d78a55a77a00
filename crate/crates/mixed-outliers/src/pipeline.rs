//! End-to-end detection: score, flag marginal outliers, identify contexts,
//! flag joint outliers.

use rayon::prelude::*;
use std::collections::BTreeSet;

use crate::context::{identify_context, ContextConfig, ContextDiagnostics};
use crate::data::{Association, AssociationCurve, DetectionConfig, DetectionResult, MixedDataset};
use crate::error::Result;
use crate::forest::{continuous_scores, fit_forest, ForestConfig};
use crate::itemset::profile_discrete;
use crate::joint::{detect_joint, JointConfig};
use crate::marginal::detect_marginal;

/// Tuning knobs beyond the core detection fractions. The defaults match
/// the documented parameter table.
#[derive(Debug, Clone, Default)]
pub struct PipelineOptions {
    pub context: ContextConfig,
    pub joint: JointConfig,
    pub forest: ForestConfig,
}

/// Full pipeline with default sub-stage options.
pub fn detect(data: &MixedDataset, cfg: &DetectionConfig) -> Result<DetectionResult> {
    detect_with(data, cfg, &PipelineOptions::default())
}

/// Full pipeline. Deterministic for a given (data, cfg, options).
pub fn detect_with(
    data: &MixedDataset,
    cfg: &DetectionConfig,
    options: &PipelineOptions,
) -> Result<DetectionResult> {
    cfg.validate()?;
    let n = data.n();
    let mut notes = Vec::new();

    // Scores.
    let (_model, mut profile) = profile_discrete(data, cfg.alpha_ci, cfg.seed)?;
    if data.p_c() > 0 {
        let forest_cfg = ForestConfig {
            seed: cfg.seed,
            ..options.forest.clone()
        };
        let (_, cont) = data.split_columns();
        let forest = fit_forest(cont, &forest_cfg)?;
        let (_, cont) = data.split_columns();
        profile.continuous_scores = continuous_scores(&forest, cont);
    } else {
        profile.continuous_scores = Vec::new();
        notes.push("no continuous columns; continuous stage skipped".into());
    }

    // Marginal stage.
    let marginal = detect_marginal(&profile, cfg)?;
    if marginal.discrete.exhausted {
        notes.push("discrete marginal stage exhausted its cluster budget; flagged nothing".into());
    }
    let marginal_discrete: Vec<usize> = marginal.discrete.outliers.iter().copied().collect();
    let marginal_continuous: Vec<usize> = marginal.continuous.outliers.iter().copied().collect();
    let mut flagged: BTreeSet<usize> = marginal.discrete.outliers.clone();
    flagged.extend(marginal.continuous.outliers.iter().copied());

    // Context identification and joint detection per discrete column over
    // the retained rows.
    let retained: Vec<usize> = (0..n).filter(|i| !flagged.contains(i)).collect();
    let mut associations = Vec::new();
    let mut curves = Vec::new();
    let mut joint: BTreeSet<usize> = BTreeSet::new();
    if data.p_c() > 0 && retained.len() >= 3 {
        let cont_cols: Vec<Vec<f64>> = (0..data.p_c())
            .map(|j| retained.iter().map(|&i| data.continuous_cell(i, j)).collect())
            .collect();
        let per_column: Vec<(usize, Result<ColumnOutcome>)> = (0..data.p_d())
            .into_par_iter()
            .map(|j| {
                let out = analyze_column(data, j, &retained, &cont_cols, options);
                (j, out)
            })
            .collect();
        for (j, outcome) in per_column {
            let outcome = outcome?;
            for note in outcome.diagnostics.notes {
                notes.push(format!("column {j}: {note}"));
            }
            if let Some((assoc, curve, rows)) = outcome.finding {
                notes.push(format!(
                    "column {j}: context {:?}, lambda* {}",
                    assoc.context, assoc.lambda_star
                ));
                associations.push(assoc);
                curves.push(curve);
                joint.extend(rows);
            }
        }
    }

    Ok(DetectionResult {
        marginal_discrete,
        marginal_continuous,
        joint: joint.into_iter().collect(),
        associations,
        curves,
        profile,
        notes,
    })
}

struct ColumnOutcome {
    finding: Option<(Association, AssociationCurve, Vec<usize>)>,
    diagnostics: ContextDiagnostics,
}

fn analyze_column(
    data: &MixedDataset,
    j: usize,
    retained: &[usize],
    cont_cols: &[Vec<f64>],
    options: &PipelineOptions,
) -> Result<ColumnOutcome> {
    let disc_raw: Vec<u32> = retained.iter().map(|&i| data.discrete_cell(i, j)).collect();
    let (finding, diagnostics) = identify_context(&disc_raw, cont_cols, &options.context)?;
    let Some(finding) = finding else {
        return Ok(ColumnOutcome {
            finding: None,
            diagnostics,
        });
    };

    // Compact levels to those present among retained rows.
    let mut present: Vec<u32> = disc_raw.clone();
    present.sort_unstable();
    present.dedup();
    let levels: Vec<u32> = disc_raw
        .iter()
        .map(|v| present.iter().position(|p| p == v).unwrap() as u32)
        .collect();
    let points: Vec<Vec<f64>> = (0..retained.len())
        .map(|r| finding.context.iter().map(|&c| cont_cols[c][r]).collect())
        .collect();
    let detection = detect_joint(&points, &levels, present.len(), &options.joint)?;
    let rows: Vec<usize> = detection.outliers.iter().map(|&r| retained[r]).collect();
    Ok(ColumnOutcome {
        finding: Some((
            Association {
                discrete_column: j,
                context: finding.context,
                log_p_sum: finding.log_p_sum,
                lambda_star: detection.lambda_star,
                method: detection.method,
            },
            AssociationCurve {
                discrete_column: j,
                grid: detection.curve.grid.clone(),
                n: detection.curve.n.clone(),
                theta_elbow: detection.theta_elbow,
            },
            rows,
        )),
        diagnostics,
    })
}
