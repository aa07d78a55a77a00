//! Extended isolation forest over the continuous columns.
//!
//! Trees split on random inclined hyperplanes: a standard-Gaussian normal
//! vector and an intercept drawn uniformly inside the node's bounding box.
//! Rows isolated in few splits are anomalous; the score maps mean path
//! length through the usual binary-search-tree normalizer.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::ContinuousView;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub trees: usize,
    pub subsample: usize,
    pub max_height: usize,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            trees: 500,
            subsample: 256,
            max_height: 100,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Internal {
        normal: Vec<f64>,
        intercept: Vec<f64>,
        left: usize,
        right: usize,
    },
    Leaf {
        count: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    pub trees: Vec<Tree>,
    pub dim: usize,
    pub subsample: usize,
    pub config: ForestConfig,
}

const EULER_MASCHERONI: f64 = 0.577_215_664_901_532_9;

/// Mean unsuccessful-search path length in a binary search tree over `n`
/// points: `2 H_{n-1} - 2 (n-1)/n`. Exact harmonic sum up to 10^4.
pub fn harmonic_normalizer(n: usize) -> Result<f64> {
    if n < 2 {
        return Err(Error::Normalizer(n));
    }
    let h = if n <= 10_000 {
        (1..n).map(|i| 1.0 / i as f64).sum::<f64>()
    } else {
        // Asymptotic expansion of the harmonic number; the 1/2m term keeps
        // the approximation within 1e-3 of the exact sum already at m=255.
        let m = (n - 1) as f64;
        m.ln() + EULER_MASCHERONI + 1.0 / (2.0 * m)
    };
    Ok(2.0 * h - 2.0 * (n - 1) as f64 / n as f64)
}

fn path_adjustment(count: usize) -> f64 {
    if count > 1 {
        harmonic_normalizer(count).expect("count > 1")
    } else {
        0.0
    }
}

fn all_identical(points: &[&[f64]]) -> bool {
    points.windows(2).all(|w| w[0] == w[1])
}

fn build_node(
    nodes: &mut Vec<Node>,
    points: &[&[f64]],
    depth: usize,
    max_height: usize,
    rng: &mut ChaCha8Rng,
) -> usize {
    let dim = points[0].len();
    if depth >= max_height || points.len() <= 1 || all_identical(points) {
        nodes.push(Node::Leaf {
            count: points.len(),
        });
        return nodes.len() - 1;
    }
    let mut lo = vec![f64::INFINITY; dim];
    let mut hi = vec![f64::NEG_INFINITY; dim];
    for p in points {
        for d in 0..dim {
            lo[d] = lo[d].min(p[d]);
            hi[d] = hi[d].max(p[d]);
        }
    }
    // A randomly placed hyperplane can miss every point; retry a bounded
    // number of times before giving up on separating this node.
    for _ in 0..32 {
        let normal: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        let intercept: Vec<f64> = (0..dim).map(|d| rng.gen_range(lo[d]..=hi[d])).collect();
        let goes_left = |p: &[f64]| -> bool {
            p.iter()
                .zip(&normal)
                .zip(&intercept)
                .map(|((x, nrm), ic)| (x - ic) * nrm)
                .sum::<f64>()
                < 0.0
        };
        let left_pts: Vec<&[f64]> = points.iter().copied().filter(|p| goes_left(p)).collect();
        if left_pts.is_empty() || left_pts.len() == points.len() {
            continue;
        }
        let right_pts: Vec<&[f64]> = points.iter().copied().filter(|p| !goes_left(p)).collect();
        let slot = nodes.len();
        nodes.push(Node::Leaf { count: 0 }); // placeholder
        let left = build_node(nodes, &left_pts, depth + 1, max_height, rng);
        let right = build_node(nodes, &right_pts, depth + 1, max_height, rng);
        nodes[slot] = Node::Internal {
            normal,
            intercept,
            left,
            right,
        };
        return slot;
    }
    nodes.push(Node::Leaf {
        count: points.len(),
    });
    nodes.len() - 1
}

/// Builds the forest on a uniform without-replacement subsample per tree.
/// Tree `t` draws from its own RNG stream, so adding trees never perturbs
/// earlier ones.
pub fn fit_forest(data: ContinuousView<'_>, cfg: &ForestConfig) -> Result<Forest> {
    if data.width() == 0 {
        return Err(Error::NoContinuousColumns);
    }
    assert!(cfg.trees >= 1);
    let n = data.n();
    assert!(n >= 2, "forest needs at least two rows");
    let m = cfg.subsample.min(n);
    let trees: Vec<Tree> = (0..cfg.trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(t as u64 + 1);
            // Partial Fisher-Yates for the subsample.
            let mut idx: Vec<usize> = (0..n).collect();
            for i in 0..m {
                let j = rng.gen_range(i..n);
                idx.swap(i, j);
            }
            let points: Vec<&[f64]> = idx[..m].iter().map(|&i| data.row(i)).collect();
            let mut nodes = Vec::new();
            build_node(&mut nodes, &points, 0, cfg.max_height, &mut rng);
            Tree { nodes }
        })
        .collect();
    Ok(Forest {
        trees,
        dim: data.width(),
        subsample: m,
        config: cfg.clone(),
    })
}

/// Contiguous per-tree layout for scoring. Internal nodes store the
/// hyperplane normal and its bias (normal dot intercept); leaves store the
/// path-length adjustment in the bias slot and u32::MAX as their left child.
struct FlatTree {
    normals: Vec<f64>,
    bias: Vec<f64>,
    children: Vec<(u32, u32)>,
}

fn flatten(tree: &Tree, dim: usize) -> FlatTree {
    let n = tree.nodes.len();
    let mut flat = FlatTree {
        normals: vec![0.0; n * dim],
        bias: vec![0.0; n],
        children: vec![(u32::MAX, 0); n],
    };
    for (i, node) in tree.nodes.iter().enumerate() {
        match node {
            Node::Leaf { count } => flat.bias[i] = path_adjustment(*count),
            Node::Internal {
                normal,
                intercept,
                left,
                right,
            } => {
                flat.normals[i * dim..(i + 1) * dim].copy_from_slice(normal);
                flat.bias[i] = normal.iter().zip(intercept).map(|(n, c)| n * c).sum();
                flat.children[i] = (*left as u32, *right as u32);
            }
        }
    }
    flat
}

fn flat_depth(tree: &FlatTree, dim: usize, point: &[f64]) -> f64 {
    let mut node = 0usize;
    let mut edges = 0.0;
    loop {
        let (left, right) = tree.children[node];
        if left == u32::MAX {
            return edges + tree.bias[node];
        }
        let dot: f64 = tree.normals[node * dim..node * dim + dim]
            .iter()
            .zip(point)
            .map(|(n, x)| n * x)
            .sum();
        node = if dot < tree.bias[node] {
            left as usize
        } else {
            right as usize
        };
        edges += 1.0;
    }
}

/// Anomaly score per row: `2^(-mean depth / c(subsample))`, in (0, 1].
pub fn continuous_scores(forest: &Forest, data: ContinuousView<'_>) -> Vec<f64> {
    let c = harmonic_normalizer(forest.subsample.max(2)).expect("subsample >= 2");
    let dim = forest.dim;
    let flat: Vec<FlatTree> = forest.trees.iter().map(|t| flatten(t, dim)).collect();
    (0..data.n())
        .into_par_iter()
        .map(|i| {
            let point = data.row(i);
            let mean_depth = flat
                .iter()
                .map(|t| flat_depth(t, dim, point))
                .sum::<f64>()
                / forest.trees.len() as f64;
            2f64.powf(-mean_depth / c)
        })
        .collect()
}
