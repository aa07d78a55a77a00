//! Outlier detection for tables mixing discrete and continuous variables.
//!
//! The pipeline separates *marginal* outliers, extreme in the discrete or the
//! continuous space alone, from *joint* outliers that break associations
//! between a discrete column and a set of continuous columns. The three index
//! sets it reports are disjoint by construction.
//!
//! ```
//! use mixed_outliers::{DetectionConfig, generator::{GeneratorSpec, generate}};
//!
//! let spec = GeneratorSpec::new(400, 3, 3, 3).with_outliers(0.10, 1.0);
//! let sim = generate(&spec, 42).unwrap();
//! let cfg = DetectionConfig { seed: 42, ..Default::default() };
//! let result = mixed_outliers::detect(&sim.dataset, &cfg).unwrap();
//! assert!(result.marginal_discrete.len() + result.marginal_continuous.len()
//!     <= cfg.max_outliers(sim.dataset.n()));
//! ```

pub mod assoc;
pub mod context;
pub mod data;
pub mod error;
pub mod evaluate;
pub mod forest;
pub mod generator;
pub mod itemset;
pub mod joint;
pub mod kde;
pub mod kmeans1d;
pub mod marginal;
pub mod multinomial;
pub mod pipeline;
pub mod stats;

pub use data::{
    Association, ColumnKind, DetectionConfig, DetectionResult, MixedDataset, Schema, ScoreProfile,
};
pub use error::{Error, Result};
pub use pipeline::detect;
