//! Consensus clustering over an ensemble of Louvain runs.
//!
//! The ensemble is run on the flow graph; while its partitions disagree, the
//! co-assignment matrix `D_ij` (fraction of runs placing `i` and `j` together)
//! is thresholded and the ensemble is re-run on it.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::graph::WeightedDigraph;
use super::louvain::louvain_graph;
use super::Partition;
use crate::error::{Error, Result};
use crate::flowgraph::FlowMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConsensusConfig {
    pub runs: usize,
    pub threshold: f64,
    pub max_iter: usize,
}

impl Default for ConsensusConfig {
    fn default() -> Self {
        ConsensusConfig { runs: 100, threshold: 0.5, max_iter: 20 }
    }
}

impl ConsensusConfig {
    pub fn validate(&self) -> Result<()> {
        if self.runs == 0 {
            return Err(Error::invalid("consensus runs must be at least 1"));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(Error::invalid("consensus threshold must lie in (0, 1)"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsensusResult {
    pub partition: Partition,
    pub converged: bool,
    /// Ensembles run, including the first one on the flow graph.
    pub iterations: usize,
}

pub fn consensus_partition(
    flow: &FlowMatrix,
    config: &ConsensusConfig,
    seed: u64,
) -> Result<ConsensusResult> {
    config.validate()?;
    let g = WeightedDigraph::from_flow(flow);
    if g.total_weight() <= 0.0 {
        return Err(Error::EmptyGraph);
    }
    Ok(consensus_graph(&g, config, seed))
}

fn run_seed(seed: u64, iteration: usize, run: usize, runs: usize) -> u64 {
    seed.wrapping_add((iteration * runs + run) as u64)
}

fn ensemble(g: &WeightedDigraph, runs: usize, iteration: usize, seed: u64) -> Vec<Partition> {
    (0..runs)
        .into_par_iter()
        .map(|r| louvain_graph(g, run_seed(seed, iteration, r, runs)))
        .collect()
}

fn all_agree(parts: &[Partition]) -> bool {
    parts.windows(2).all(|w| w[0] == w[1])
}

/// Co-assignment fractions with entries below `threshold` zeroed and a zero diagonal.
pub fn consensus_matrix(parts: &[Partition], threshold: f64) -> Vec<f64> {
    let n = parts[0].len();
    let mut together = vec![0u32; n * n];
    for p in parts {
        let l = p.labels();
        for i in 0..n {
            for j in (i + 1)..n {
                if l[i] == l[j] {
                    together[i * n + j] += 1;
                }
            }
        }
    }
    let runs = parts.len() as f64;
    let mut d = vec![0.0; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let f = f64::from(together[i * n + j]) / runs;
            if f >= threshold {
                d[i * n + j] = f;
                d[j * n + i] = f;
            }
        }
    }
    d
}

fn most_frequent(parts: &[Partition]) -> Partition {
    let mut counts: BTreeMap<&Partition, (usize, usize)> = BTreeMap::new();
    for (pos, p) in parts.iter().enumerate() {
        counts.entry(p).or_insert((0, pos)).0 += 1;
    }
    counts
        .into_iter()
        .max_by(|a, b| a.1 .0.cmp(&b.1 .0).then(b.1 .1.cmp(&a.1 .1)))
        .map(|(p, _)| p.clone())
        .expect("non-empty ensemble")
}

pub(crate) fn consensus_graph(g: &WeightedDigraph, config: &ConsensusConfig, seed: u64) -> ConsensusResult {
    let n = g.n();
    let mut parts = ensemble(g, config.runs, 0, seed);
    if all_agree(&parts) {
        return ConsensusResult { partition: parts.swap_remove(0), converged: true, iterations: 1 };
    }
    for it in 1..=config.max_iter {
        let d = consensus_matrix(&parts, config.threshold);
        let dg = WeightedDigraph::from_dense(n, &d);
        parts = ensemble(&dg, config.runs, it, seed);
        if all_agree(&parts) {
            return ConsensusResult {
                partition: parts.swap_remove(0),
                converged: true,
                iterations: it + 1,
            };
        }
    }
    ConsensusResult {
        partition: most_frequent(&parts),
        converged: false,
        iterations: config.max_iter + 1,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::community::louvain_partition;
    use crate::community::tests::flow_from_arcs;

    fn two_cycles() -> FlowMatrix {
        flow_from_arcs(6, &[(0, 1, 1), (1, 2, 1), (2, 0, 1), (3, 4, 1), (4, 5, 1), (5, 3, 1)])
    }

    #[test]
    fn fixed_point_in_one_iteration() {
        let r = consensus_partition(&two_cycles(), &ConsensusConfig { runs: 10, ..Default::default() }, 4).unwrap();
        assert!(r.converged);
        assert_eq!(r.iterations, 1);
        assert_eq!(r.partition, Partition::from_labels(&[0, 0, 0, 1, 1, 1]));
    }

    #[test]
    fn single_run_matches_louvain() {
        let f = flow_from_arcs(
            8,
            &[(0, 1, 3), (1, 2, 1), (2, 0, 2), (3, 4, 1), (4, 5, 2), (5, 3, 1), (2, 3, 1), (6, 7, 2), (7, 1, 1)],
        );
        for seed in 0..5 {
            let c = consensus_partition(&f, &ConsensusConfig { runs: 1, ..Default::default() }, seed).unwrap();
            assert_eq!(c.partition, louvain_partition(&f, seed).unwrap());
            assert!(c.converged);
        }
    }

    #[test]
    fn rerun_is_identical() {
        let f = flow_from_arcs(
            8,
            &[(0, 1, 3), (1, 2, 1), (2, 0, 2), (3, 4, 1), (4, 5, 2), (5, 3, 1), (2, 3, 1), (6, 7, 2), (7, 1, 1)],
        );
        let cfg = ConsensusConfig { runs: 16, ..Default::default() };
        assert_eq!(consensus_partition(&f, &cfg, 9).unwrap(), consensus_partition(&f, &cfg, 9).unwrap());
    }

    #[test]
    fn invalid_config() {
        let f = two_cycles();
        assert!(consensus_partition(&f, &ConsensusConfig { runs: 0, ..Default::default() }, 0).is_err());
        assert!(consensus_partition(&f, &ConsensusConfig { threshold: 1.0, ..Default::default() }, 0).is_err());
    }

    #[test]
    fn consensus_matrix_thresholds() {
        let parts = vec![
            Partition::from_labels(&[0, 0, 1]),
            Partition::from_labels(&[0, 0, 0]),
            Partition::from_labels(&[0, 1, 1]),
        ];
        let d = consensus_matrix(&parts, 0.5);
        assert!((d[1] - 2.0 / 3.0).abs() < 1e-15);
        assert!((d[5] - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(d[2], 0.0);
        assert_eq!(d[0], 0.0);
    }

    #[test]
    fn most_frequent_prefers_earliest_on_ties() {
        let a = Partition::from_labels(&[0, 1]);
        let b = Partition::from_labels(&[0, 0]);
        assert_eq!(most_frequent(&[a.clone(), b.clone()]), a);
        assert_eq!(most_frequent(&[a, b.clone(), b.clone()]), b);
    }
}
