//! Layered causal-path graphs and exact path counting.
//!
//! A graph of depth `D` has a root (the initiating state), `D` layers of
//! intermediate decision nodes and a sink (the consequential action). Every
//! node is connected to every node of the next layer. Each layer holds one
//! human-origin node plus one AI-origin node per extra branch; a path is
//! human-traceable when its first hop lands on the human node.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::seed::{stream, Stream};

/// Upper bound on root-to-sink paths for a single count.
pub const MAX_PATHS: u64 = 10_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Origin {
    Human,
    Ai,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("path count {branching}^{depth} exceeds {MAX_PATHS}; reduce trace_depth or branch_coeff")]
pub struct PathOverflow {
    pub branching: u64,
    pub depth: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathStats {
    pub total_paths: u64,
    pub human_origin_paths: u64,
    pub empirical_traceability: f64,
}

impl PathStats {
    pub fn new(total_paths: u64, human_origin_paths: u64) -> Self {
        let empirical_traceability = if total_paths == 0 {
            1.0
        } else {
            human_origin_paths as f64 / total_paths as f64
        };
        PathStats {
            total_paths,
            human_origin_paths,
            empirical_traceability,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayeredDag {
    pub layers: Vec<Vec<Origin>>,
}

/// Branches per layer for a given AI decision-energy.
pub fn branching(e_d_ai: f64, branch_coeff: f64) -> u64 {
    let extra = (branch_coeff * e_d_ai).round();
    if extra >= (u64::MAX - 1) as f64 {
        u64::MAX
    } else {
        1 + extra as u64
    }
}

impl LayeredDag {
    /// Builds the graph. The human node's position in each layer is drawn
    /// from `seed`; counts do not depend on it.
    pub fn build(
        e_d_ai: f64,
        branch_coeff: f64,
        depth: u32,
        seed: u64,
    ) -> Result<Self, PathOverflow> {
        let b = branching(e_d_ai, branch_coeff);
        match b.checked_pow(depth) {
            Some(total) if total <= MAX_PATHS => {}
            _ => {
                return Err(PathOverflow {
                    branching: b,
                    depth,
                })
            }
        }
        let mut rng = stream(seed, Stream::TraceLabels, 0);
        let layers = (0..depth)
            .map(|_| {
                let mut layer = vec![Origin::Ai; b as usize];
                layer[0] = Origin::Human;
                layer.shuffle(&mut rng);
                layer
            })
            .collect();
        Ok(LayeredDag { layers })
    }

    /// Exact root-to-sink path counts by dynamic programming over layers.
    pub fn count_paths(&self) -> PathStats {
        let Some(first) = self.layers.first() else {
            return PathStats::new(1, 1);
        };
        // (all paths, human-origin paths) ending at each node of the layer.
        let mut counts: Vec<(u64, u64)> = first
            .iter()
            .map(|o| (1, u64::from(*o == Origin::Human)))
            .collect();
        for layer in &self.layers[1..] {
            let into = counts
                .iter()
                .fold((0u64, 0u64), |(t, h), (a, b)| (t + a, h + b));
            counts = vec![into; layer.len()];
        }
        let (total, human) = counts
            .iter()
            .fold((0u64, 0u64), |(t, h), (a, b)| (t + a, h + b));
        PathStats::new(total, human)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Exhaustive depth-first enumeration of every root-to-sink path.
    fn enumerate(dag: &LayeredDag) -> (u64, u64) {
        fn walk(dag: &LayeredDag, layer: usize, origin: Option<Origin>, acc: &mut (u64, u64)) {
            if layer == dag.layers.len() {
                acc.0 += 1;
                if origin == Some(Origin::Human) {
                    acc.1 += 1;
                }
                return;
            }
            for node in &dag.layers[layer] {
                walk(dag, layer + 1, origin.or(Some(*node)), acc);
            }
        }
        let mut acc = (0, 0);
        walk(dag, 0, None, &mut acc);
        acc
    }

    #[test]
    fn zero_density_is_a_single_human_chain() {
        let dag = LayeredDag::build(0.0, 0.5, 4, 1).unwrap();
        let stats = dag.count_paths();
        assert_eq!((stats.total_paths, stats.human_origin_paths), (1, 1));
        assert_eq!(stats.empirical_traceability, 1.0);
    }

    #[test]
    fn four_path_example() {
        // branching 2 at depth 2: one human and one AI branch per layer.
        let dag = LayeredDag::build(1.0, 1.0, 2, 9).unwrap();
        assert_eq!(dag.layers[0].len(), 2);
        let stats = dag.count_paths();
        assert_eq!(enumerate(&dag), (4, 2));
        assert_eq!((stats.total_paths, stats.human_origin_paths), (4, 2));
        assert_eq!(stats.empirical_traceability, 0.5);
    }

    #[test]
    fn dp_matches_enumeration() {
        for depth in 1..=4 {
            for e in [0.0, 1.0, 2.0, 5.0, 9.0] {
                for seed in 0..3 {
                    let dag = LayeredDag::build(e, 1.0, depth, seed).unwrap();
                    let stats = dag.count_paths();
                    assert_eq!(
                        (stats.total_paths, stats.human_origin_paths),
                        enumerate(&dag),
                        "depth {depth} e {e}"
                    );
                }
            }
        }
    }

    #[test]
    fn overflow_is_reported() {
        let err = LayeredDag::build(1e6, 1.0, 3, 0).unwrap_err();
        assert_eq!(err.depth, 3);
        assert!(err.to_string().contains("reduce"));
    }
}
