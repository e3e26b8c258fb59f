//! Community snapshots of the origin-destination network.
//!
//! Per-period partitions come from Louvain optimisation of directed modularity
//! ([`louvain`]), stabilised by consensus clustering ([`consensus`]). Daily
//! snapshots are compared with the Pearson contingency coefficient
//! ([`contingency`], [`snapshot`]) and grouped by a diagonal Gaussian mixture
//! selected by BIC ([`gmm`]).

pub mod consensus;
pub mod contingency;
pub mod gmm;
pub mod graph;
pub mod louvain;
pub mod snapshot;

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flowgraph::{FlowMatrix, StationIndex};

pub use consensus::{consensus_partition, ConsensusConfig, ConsensusResult};
pub use contingency::{contingency_coefficient, contingency_correlation};
pub use gmm::{cluster_snapshots_gmm, SnapshotClustering};
pub use graph::WeightedDigraph;
pub use louvain::louvain_partition;
pub use snapshot::{snapshot_variability_matrix, CommunitySnapshot, VariabilityMatrix};

/// Community label per station, in station-index order.
///
/// Labels are canonical: contiguous from 0 and numbered in order of first
/// appearance, so two partitions are equal iff they group stations identically.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Partition {
    labels: Vec<usize>,
}

impl Partition {
    pub fn from_labels<L: Copy + Eq + std::hash::Hash>(raw: &[L]) -> Self {
        let mut map = std::collections::HashMap::new();
        let labels = raw
            .iter()
            .map(|l| {
                let next = map.len();
                *map.entry(*l).or_insert(next)
            })
            .collect();
        Partition { labels }
    }

    pub fn singletons(n: usize) -> Self {
        Partition { labels: (0..n).collect() }
    }

    pub fn single_community(n: usize) -> Self {
        Partition { labels: vec![0; n] }
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn community_count(&self) -> usize {
        self.labels.iter().max().map_or(0, |m| m + 1)
    }

    pub fn label(&self, station: usize) -> usize {
        self.labels[station]
    }

    pub fn write_csv<W: Write>(&self, w: W, stations: &StationIndex) -> Result<()> {
        if stations.len() != self.len() {
            return Err(Error::PartitionSize { partition: self.len(), graph: stations.len() });
        }
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["station_id", "community_id"])?;
        for (id, l) in stations.ids().iter().zip(&self.labels) {
            wtr.write_record([id.as_str(), &l.to_string()])?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R, stations: &StationIndex) -> Result<Self> {
        let mut raw = vec![None; stations.len()];
        let mut rdr = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(r);
        for rec in rdr.records() {
            let rec = rec?;
            let pos = stations.position(&rec[0])?;
            let c: usize = rec[1]
                .parse()
                .map_err(|e| Error::Parse(format!("bad community id {:?}: {e}", &rec[1])))?;
            raw[pos] = Some(c);
        }
        let labels: Option<Vec<usize>> = raw.into_iter().collect();
        let labels = labels.ok_or_else(|| Error::Parse("partition does not label every station".into()))?;
        Ok(Partition::from_labels(&labels))
    }
}

/// Directed modularity of `part` on the flow graph.
///
/// `Q = (1/m) Σ_ij [A_ij - k_i^out k_j^in / m] δ(c_i, c_j)`.
pub fn directed_modularity(flow: &FlowMatrix, part: &Partition) -> Result<f64> {
    let g = WeightedDigraph::from_flow(flow);
    if part.len() != g.n() {
        return Err(Error::PartitionSize { partition: part.len(), graph: g.n() });
    }
    if g.total_weight() <= 0.0 {
        return Err(Error::EmptyGraph);
    }
    Ok(g.modularity(part.labels()))
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::flowgraph::{DateTag, PeriodTag};

    pub(crate) fn flow_from_arcs(n: usize, arcs: &[(usize, usize, u64)]) -> FlowMatrix {
        let ids = (0..n).map(|i| format!("S{i}")).collect();
        let mut m = FlowMatrix::zeros(StationIndex::new(ids).unwrap(), DateTag::Aggregate, PeriodTag::Day);
        for &(o, d, c) in arcs {
            m.add(o, d, c).unwrap();
        }
        m
    }

    fn two_cycles() -> FlowMatrix {
        flow_from_arcs(6, &[(0, 1, 1), (1, 2, 1), (2, 0, 1), (3, 4, 1), (4, 5, 1), (5, 3, 1)])
    }

    #[test]
    fn one_community_scores_zero() {
        let f = flow_from_arcs(4, &[(0, 1, 3), (1, 2, 1), (3, 0, 2), (2, 3, 5)]);
        let q = directed_modularity(&f, &Partition::single_community(4)).unwrap();
        assert!(q.abs() < 1e-15);
    }

    #[test]
    fn two_cycles_score_one_half() {
        let q = directed_modularity(&two_cycles(), &Partition::from_labels(&[0, 0, 0, 1, 1, 1])).unwrap();
        assert_eq!(q, 0.5);
        let split = directed_modularity(&two_cycles(), &Partition::from_labels(&[0, 0, 2, 1, 1, 1])).unwrap();
        assert!(split < 0.5);
    }

    #[test]
    fn empty_graph_is_an_error() {
        let f = flow_from_arcs(3, &[]);
        assert!(matches!(
            directed_modularity(&f, &Partition::singletons(3)),
            Err(Error::EmptyGraph)
        ));
    }

    #[test]
    fn canonical_labels() {
        let p = Partition::from_labels(&[7, 7, 3, 9, 3]);
        assert_eq!(p.labels(), &[0, 0, 1, 2, 1]);
        assert_eq!(p.community_count(), 3);
    }

    #[test]
    fn partition_csv_round_trip() {
        let st = StationIndex::new(vec!["a".into(), "b".into(), "c".into()]).unwrap();
        let p = Partition::from_labels(&[1, 0, 1]);
        let mut buf = Vec::new();
        p.write_csv(&mut buf, &st).unwrap();
        assert_eq!(Partition::read_csv(buf.as_slice(), &st).unwrap(), p);
    }
}
