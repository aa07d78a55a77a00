//! Command-line front end: simulate synthetic tables, run the detection
//! pipeline, and score results or experiment grids.
//!
//! Exit codes: 0 on success, 1 on data or pipeline errors, 2 on usage
//! errors. Machine-readable output goes to files under `--out`; stdout
//! carries a human summary only.

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use mixed_outliers::data::{load_csv, write_csv, ColumnKind, DetectionConfig, DetectionResult};
use mixed_outliers::evaluate::{run_grid, score_detection, ExperimentSpec, Metrics, Target};
use mixed_outliers::generator::{generate, DesignKind, GeneratorSpec, TruthLabel};
use mixed_outliers::{detect, Error};

#[derive(Parser)]
#[command(
    name = "modet",
    version,
    about = "Marginal and joint outlier detection for mixed-type tables"
)]
struct Cli {
    /// Worker threads; defaults to the available parallelism.
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a labeled synthetic dataset.
    Simulate(SimulateArgs),
    /// Run the detection pipeline on a CSV table.
    Detect(DetectArgs),
    /// Score a detection result against truth labels, or run a grid.
    Evaluate(EvaluateArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Number of rows.
    #[arg(long)]
    n: usize,
    /// Number of discrete columns.
    #[arg(long)]
    pd: usize,
    /// Number of continuous columns.
    #[arg(long)]
    pc: usize,
    /// Levels per discrete column.
    #[arg(long)]
    levels: usize,
    /// Total outlier fraction (q <= 0.5).
    #[arg(long)]
    q: f64,
    /// Fraction of the outliers that are marginal; the rest are joint.
    #[arg(long = "qm-share", default_value_t = 0.5)]
    qm_share: f64,
    /// Association to impose, as kind:discrete:cont,cont,...
    /// with 1-based column positions, e.g. product:1:1,2.
    #[arg(long)]
    design: Option<String>,
    /// RNG seed; drawn and recorded in the manifest when absent.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct DetectArgs {
    /// Input CSV with a header row.
    #[arg(long)]
    data: PathBuf,
    /// Optional JSON map of column name to "discrete" or "continuous",
    /// overriding type inference.
    #[arg(long)]
    schema: Option<PathBuf>,
    /// Flat JSON config file; keys mirror the flag names below and flags
    /// take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Maximum believed proportion of outliers.
    #[arg(long)]
    rho: Option<f64>,
    /// Additional tolerated proportion; rho + epsilon <= 0.5.
    #[arg(long)]
    epsilon: Option<f64>,
    /// Significance level for the discrete-score confidence intervals.
    #[arg(long = "alpha-ci")]
    alpha_ci: Option<f64>,
    /// RNG seed; drawn and recorded in the manifest when absent.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    /// result.json produced by `detect`; requires --truth.
    #[arg(long)]
    result: Option<PathBuf>,
    /// truth.csv produced by `simulate`; requires --result.
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Experiment grid: `default` or a path to an ExperimentSpec JSON.
    #[arg(long)]
    grid: Option<String>,
    /// Replicates per grid cell, overriding the grid spec.
    #[arg(long)]
    seeds: Option<u64>,
    /// RNG seed for the grid (its base seed); drawn when absent.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

/// Written once per output directory as manifest.json.
#[derive(Serialize)]
struct RunManifest {
    command: String,
    config: serde_json::Value,
    seed: u64,
    inputs: Vec<String>,
    outputs: Vec<String>,
    version: String,
    timestamp: String,
}

/// Index sets and associations, serialized as result.json. Byte-identical
/// across runs with the same data and seed.
#[derive(Serialize, Deserialize)]
struct ResultFile {
    n: usize,
    seed: u64,
    marginal_discrete: Vec<usize>,
    marginal_continuous: Vec<usize>,
    joint: Vec<usize>,
    associations: Vec<mixed_outliers::Association>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(workers) = cli.workers {
        // A second build_global (say in tests) is harmless; the first pool
        // wins and later calls return an error we can ignore.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build_global();
    }
    let outcome = match cli.command {
        Command::Simulate(args) => cmd_simulate(args),
        Command::Detect(args) => cmd_detect(args),
        Command::Evaluate(args) => cmd_evaluate(args),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn resolve_seed(flag: Option<u64>) -> u64 {
    flag.unwrap_or_else(rand::random)
}

fn write_manifest(dir: &Path, manifest: &RunManifest) -> Result<(), Error> {
    let body = serde_json::to_string_pretty(manifest)?;
    std::fs::write(dir.join("manifest.json"), body + "\n")?;
    Ok(())
}

fn timestamp() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
}

fn parse_design(text: &str, p_d: usize, p_c: usize) -> Result<(DesignKind, usize, Vec<usize>), Error> {
    let bad = |reason: &str| Error::Config(format!("design `{text}`: {reason}"));
    let mut parts = text.splitn(3, ':');
    let kind = match parts.next() {
        Some("linear") => DesignKind::Linear,
        Some("product") => DesignKind::Product,
        Some("quotient") => DesignKind::Quotient,
        _ => return Err(bad("kind must be linear, product or quotient")),
    };
    let discrete: usize = parts
        .next()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| bad("missing or unparseable discrete column"))?;
    let cont: Vec<usize> = parts
        .next()
        .ok_or_else(|| bad("missing continuous columns"))?
        .split(',')
        .map(|s| s.trim().parse::<usize>())
        .collect::<Result<_, _>>()
        .map_err(|_| bad("unparseable continuous column"))?;
    if discrete == 0 || discrete > p_d {
        return Err(bad(&format!(
            "discrete position {discrete} outside 1..={p_d}"
        )));
    }
    if cont.is_empty() || cont.iter().any(|&c| c == 0 || c > p_c) {
        return Err(bad(&format!("continuous positions outside 1..={p_c}")));
    }
    // Positions are 1-based on the command line.
    Ok((kind, discrete - 1, cont.iter().map(|&c| c - 1).collect()))
}

fn cmd_simulate(args: SimulateArgs) -> Result<(), Error> {
    if !(0.0..=0.5).contains(&args.q) {
        return Err(Error::Config(format!("q={} outside [0, 0.5]", args.q)));
    }
    if !(0.0..=1.0).contains(&args.qm_share) {
        return Err(Error::Config(format!(
            "qm-share={} outside [0, 1]",
            args.qm_share
        )));
    }
    let seed = resolve_seed(args.seed);
    let mut spec = GeneratorSpec::new(args.n, args.pd, args.pc, args.levels)
        .with_outliers(args.q, args.qm_share);
    if let Some(text) = &args.design {
        let (kind, discrete, cont) = parse_design(text, args.pd, args.pc)?;
        spec = spec.with_design(kind, discrete, cont);
    }
    let sim = generate(&spec, seed)?;

    std::fs::create_dir_all(&args.out)?;
    write_csv(&sim.dataset, &args.out.join("data.csv"))?;
    let mut truth = String::from("row,label\n");
    for (i, label) in sim.truth.iter().enumerate() {
        writeln!(truth, "{i},{}", label.as_str()).unwrap();
    }
    std::fs::write(args.out.join("truth.csv"), truth)?;
    std::fs::write(
        args.out.join("spec.json"),
        serde_json::to_string_pretty(&spec)? + "\n",
    )?;
    // Level codes are numeric, so type inference alone would read every
    // column as continuous; the schema file makes the kinds explicit for
    // `detect --schema`.
    let kinds: BTreeMap<&str, ColumnKind> = sim
        .dataset
        .schema()
        .columns()
        .iter()
        .map(|c| (c.name.as_str(), c.kind))
        .collect();
    std::fs::write(
        args.out.join("schema.json"),
        serde_json::to_string_pretty(&kinds)? + "\n",
    )?;
    write_manifest(
        &args.out,
        &RunManifest {
            command: "simulate".into(),
            config: serde_json::to_value(&spec)?,
            seed,
            inputs: Vec::new(),
            outputs: ["data.csv", "truth.csv", "spec.json", "schema.json"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
            version: env!("CARGO_PKG_VERSION").into(),
            timestamp: timestamp(),
        },
    )?;

    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for label in &sim.truth {
        *counts.entry(label.as_str()).or_default() += 1;
    }
    println!(
        "simulated {} rows ({} discrete + {} continuous columns), seed {seed}",
        args.n, args.pd, args.pc
    );
    for (label, count) in counts {
        println!("  {label}: {count}");
    }
    println!("wrote {}", args.out.display());
    Ok(())
}

/// Flat config file; keys mirror the flag names.
#[derive(Default, Deserialize)]
struct FileConfig {
    rho: Option<f64>,
    epsilon: Option<f64>,
    #[serde(rename = "alpha-ci", alias = "alpha_ci")]
    alpha_ci: Option<f64>,
    seed: Option<u64>,
}

fn cmd_detect(args: DetectArgs) -> Result<(), Error> {
    let file: FileConfig = match &args.config {
        Some(path) => serde_json::from_str(&std::fs::read_to_string(path)?)?,
        None => FileConfig::default(),
    };
    let defaults = DetectionConfig::default();
    let seed = resolve_seed(args.seed.or(file.seed));
    let cfg = DetectionConfig {
        rho: args.rho.or(file.rho).unwrap_or(defaults.rho),
        epsilon: args.epsilon.or(file.epsilon).unwrap_or(defaults.epsilon),
        alpha_ci: args.alpha_ci.or(file.alpha_ci).unwrap_or(defaults.alpha_ci),
        seed,
    };

    let hint: Option<BTreeMap<String, ColumnKind>> = match &args.schema {
        Some(path) => Some(serde_json::from_str(&std::fs::read_to_string(path)?)?),
        None => None,
    };
    let data = load_csv(&args.data, hint.as_ref())?;
    let result = detect(&data, &cfg)?;

    std::fs::create_dir_all(&args.out)?;
    let mut outputs = vec![
        "score_profile.csv".to_string(),
        "result.json".to_string(),
        "diagnostics.json".to_string(),
    ];
    write_score_profile(&args.out, &data, &result)?;
    let result_file = ResultFile {
        n: data.n(),
        seed,
        marginal_discrete: result.marginal_discrete.clone(),
        marginal_continuous: result.marginal_continuous.clone(),
        joint: result.joint.clone(),
        associations: result.associations.clone(),
    };
    std::fs::write(
        args.out.join("result.json"),
        serde_json::to_string_pretty(&result_file)? + "\n",
    )?;
    for curve in &result.curves {
        let name = format!("curve_col{}.csv", curve.discrete_column);
        let mut body = String::from("lambda,misclassified\n");
        for (g, n) in curve.grid.iter().zip(&curve.n) {
            writeln!(body, "{g},{n}").unwrap();
        }
        std::fs::write(args.out.join(&name), body)?;
        outputs.push(name);
    }
    let diagnostics = serde_json::json!({
        "config": {
            "rho": cfg.rho,
            "epsilon": cfg.epsilon,
            "alpha-ci": cfg.alpha_ci,
            "seed": cfg.seed,
        },
        "notes": result.notes,
        "curves": result.curves,
    });
    std::fs::write(
        args.out.join("diagnostics.json"),
        serde_json::to_string_pretty(&diagnostics)? + "\n",
    )?;
    write_manifest(
        &args.out,
        &RunManifest {
            command: "detect".into(),
            config: serde_json::json!({
                "rho": cfg.rho,
                "epsilon": cfg.epsilon,
                "alpha-ci": cfg.alpha_ci,
                "seed": cfg.seed,
            }),
            seed,
            inputs: vec![args.data.display().to_string()],
            outputs,
            version: env!("CARGO_PKG_VERSION").into(),
            timestamp: timestamp(),
        },
    )?;

    println!(
        "detected {} marginal-discrete, {} marginal-continuous, {} joint outliers over {} rows (seed {seed})",
        result.marginal_discrete.len(),
        result.marginal_continuous.len(),
        result.joint.len(),
        data.n()
    );
    for assoc in &result.associations {
        println!(
            "  discrete column {} <- continuous {:?}, lambda* {} ({:?})",
            assoc.discrete_column, assoc.context, assoc.lambda_star, assoc.method
        );
    }
    println!("wrote {}", args.out.display());
    Ok(())
}

fn write_score_profile(
    dir: &Path,
    data: &mixed_outliers::MixedDataset,
    result: &DetectionResult,
) -> Result<(), Error> {
    let discrete_names: Vec<&str> = data
        .schema()
        .columns()
        .iter()
        .filter(|c| c.kind == ColumnKind::Discrete)
        .map(|c| c.name.as_str())
        .collect();
    let has_continuous = !result.profile.continuous_scores.is_empty();
    let mut header = String::from("row,discrete_score");
    if has_continuous {
        header.push_str(",continuous_score");
    }
    for name in &discrete_names {
        write!(header, ",contribution_{name}").unwrap();
    }
    header.push('\n');
    let mut body = header;
    let p_d = data.p_d();
    for i in 0..data.n() {
        write!(body, "{i},{}", result.profile.discrete_scores[i]).unwrap();
        if has_continuous {
            write!(body, ",{}", result.profile.continuous_scores[i]).unwrap();
        }
        for v in result.profile.contribution_row(i, p_d) {
            write!(body, ",{v}").unwrap();
        }
        body.push('\n');
    }
    std::fs::write(dir.join("score_profile.csv"), body)?;
    Ok(())
}

fn parse_truth(path: &Path) -> Result<Vec<TruthLabel>, Error> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let mut labels = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let field = rec.get(1).unwrap_or("");
        let label = match field {
            "inlier" => TruthLabel::Inlier,
            "marginal_discrete" => TruthLabel::MarginalDiscrete,
            "marginal_continuous" => TruthLabel::MarginalContinuous,
            "marginal_combined" => TruthLabel::MarginalCombined,
            "joint" => TruthLabel::Joint,
            other => {
                return Err(Error::Ingestion {
                    row: i,
                    column: "label".into(),
                    reason: format!("unknown truth label `{other}`"),
                })
            }
        };
        labels.push(label);
    }
    Ok(labels)
}

fn cmd_evaluate(args: EvaluateArgs) -> Result<(), Error> {
    match (&args.grid, &args.result, &args.truth) {
        (Some(grid), None, None) => evaluate_grid(&args, grid),
        (None, Some(result), Some(truth)) => evaluate_pair(&args, result, truth),
        _ => {
            // Mixing modes is a usage error, same as clap-level misuse.
            eprintln!("error: pass either --grid, or both --result and --truth");
            std::process::exit(2);
        }
    }
}

fn evaluate_pair(args: &EvaluateArgs, result_path: &Path, truth_path: &Path) -> Result<(), Error> {
    let result: ResultFile = serde_json::from_str(&std::fs::read_to_string(result_path)?)?;
    let truth = parse_truth(truth_path)?;
    if truth.len() != result.n {
        return Err(Error::Config(format!(
            "row count mismatch: result.json has n={}, truth.csv has {} rows",
            result.n,
            truth.len()
        )));
    }
    let detection = DetectionResult {
        marginal_discrete: result.marginal_discrete.clone(),
        marginal_continuous: result.marginal_continuous.clone(),
        joint: result.joint.clone(),
        associations: result.associations.clone(),
        curves: Vec::new(),
        profile: Default::default(),
        notes: Vec::new(),
    };
    let mut csv_body = String::from("target,recall,precision,f1,tp,fp,fn\n");
    let mut summary = Vec::new();
    for target in [Target::Marginal, Target::Joint] {
        let m: Metrics = score_detection(&truth, &detection, target);
        writeln!(
            csv_body,
            "{},{},{},{},{},{},{}",
            target.name(),
            m.recall,
            m.precision,
            m.f1,
            m.tp,
            m.fp,
            m.fn_
        )
        .unwrap();
        summary.push((target.name(), m));
    }
    std::fs::create_dir_all(&args.out)?;
    std::fs::write(args.out.join("metrics.csv"), csv_body)?;
    write_manifest(
        &args.out,
        &RunManifest {
            command: "evaluate".into(),
            config: serde_json::json!({}),
            seed: result.seed,
            inputs: vec![
                result_path.display().to_string(),
                truth_path.display().to_string(),
            ],
            outputs: vec!["metrics.csv".into()],
            version: env!("CARGO_PKG_VERSION").into(),
            timestamp: timestamp(),
        },
    )?;
    for (name, m) in summary {
        println!(
            "{name}: recall {:.3}, precision {:.3}, f1 {:.3}",
            m.recall, m.precision, m.f1
        );
    }
    println!("wrote {}", args.out.display());
    Ok(())
}

fn evaluate_grid(args: &EvaluateArgs, grid: &str) -> Result<(), Error> {
    let mut spec: ExperimentSpec = if grid == "default" {
        ExperimentSpec::default()
    } else {
        serde_json::from_str(&std::fs::read_to_string(grid)?)?
    };
    if let Some(seeds) = args.seeds {
        spec.seeds = seeds;
    }
    let seed = resolve_seed(args.seed);
    if args.seed.is_some() || grid == "default" {
        spec.base_seed = seed;
    }
    let report = run_grid(&spec)?;
    std::fs::create_dir_all(&args.out)?;
    std::fs::write(args.out.join("report.csv"), report.to_csv())?;
    std::fs::write(
        args.out.join("summary.json"),
        serde_json::to_string_pretty(&report.summary())? + "\n",
    )?;
    write_manifest(
        &args.out,
        &RunManifest {
            command: "evaluate --grid".into(),
            config: serde_json::to_value(&spec)?,
            seed: spec.base_seed,
            inputs: Vec::new(),
            outputs: vec!["report.csv".into(), "summary.json".into()],
            version: env!("CARGO_PKG_VERSION").into(),
            timestamp: timestamp(),
        },
    )?;
    let mut skipped = 0;
    for cell in &report.cells {
        if cell.skipped.is_some() {
            skipped += 1;
            continue;
        }
        println!(
            "n={} levels={} q={} share={}: marginal recall {:.3}, f1 {:.3}; joint recall {:.3}",
            cell.params.n,
            cell.params.levels,
            cell.params.q,
            cell.params.marginal_share,
            cell.mean(Target::Marginal, |m| m.recall),
            cell.mean(Target::Marginal, |m| m.f1),
            cell.mean(Target::Joint, |m| m.recall),
        );
    }
    if skipped > 0 {
        println!("{skipped} degenerate cells skipped");
    }
    println!("wrote {}", args.out.display());
    Ok(())
}
