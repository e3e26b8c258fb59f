//! Weighted directed graph in adjacency-list form, used by the modularity optimiser.

use crate::flowgraph::FlowMatrix;

#[derive(Debug, Clone, PartialEq)]
pub struct WeightedDigraph {
    out_edges: Vec<Vec<(usize, f64)>>,
    in_edges: Vec<Vec<(usize, f64)>>,
    self_loops: Vec<f64>,
    out_strength: Vec<f64>,
    in_strength: Vec<f64>,
    total: f64,
}

impl WeightedDigraph {
    /// Builds from `(source, target, weight)` arcs; parallel arcs are summed
    /// and non-positive weights ignored.
    pub fn from_arcs(n: usize, arcs: impl IntoIterator<Item = (usize, usize, f64)>) -> Self {
        let mut list: Vec<(usize, usize, f64)> = arcs.into_iter().filter(|a| a.2 > 0.0).collect();
        list.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut g = WeightedDigraph {
            out_edges: vec![Vec::new(); n],
            in_edges: vec![Vec::new(); n],
            self_loops: vec![0.0; n],
            out_strength: vec![0.0; n],
            in_strength: vec![0.0; n],
            total: 0.0,
        };
        let mut k = 0;
        while k < list.len() {
            let (s, t, mut w) = list[k];
            k += 1;
            while k < list.len() && list[k].0 == s && list[k].1 == t {
                w += list[k].2;
                k += 1;
            }
            if s == t {
                g.self_loops[s] += w;
            } else {
                g.out_edges[s].push((t, w));
                g.in_edges[t].push((s, w));
            }
            g.out_strength[s] += w;
            g.in_strength[t] += w;
            g.total += w;
        }
        g
    }

    pub fn from_flow(flow: &FlowMatrix) -> Self {
        Self::from_arcs(flow.n(), flow.triplets().map(|(o, d, c)| (o, d, c as f64)))
    }

    /// Row-major dense weights.
    pub fn from_dense(n: usize, weights: &[f64]) -> Self {
        Self::from_arcs(
            n,
            (0..n * n).filter(|k| weights[*k] > 0.0).map(|k| (k / n, k % n, weights[k])),
        )
    }

    pub fn n(&self) -> usize {
        self.out_edges.len()
    }

    pub fn total_weight(&self) -> f64 {
        self.total
    }

    pub fn out_edges(&self, i: usize) -> &[(usize, f64)] {
        &self.out_edges[i]
    }

    pub fn in_edges(&self, i: usize) -> &[(usize, f64)] {
        &self.in_edges[i]
    }

    pub fn self_loop(&self, i: usize) -> f64 {
        self.self_loops[i]
    }

    pub fn out_strength(&self, i: usize) -> f64 {
        self.out_strength[i]
    }

    pub fn in_strength(&self, i: usize) -> f64 {
        self.in_strength[i]
    }

    /// Directed modularity of a labelling; zero for a weightless graph.
    pub fn modularity(&self, labels: &[usize]) -> f64 {
        let m = self.total;
        if m <= 0.0 {
            return 0.0;
        }
        let k = labels.iter().max().map_or(0, |x| x + 1);
        let mut tot_out = vec![0.0; k];
        let mut tot_in = vec![0.0; k];
        let mut inside = 0.0;
        for i in 0..self.n() {
            let ci = labels[i];
            tot_out[ci] += self.out_strength[i];
            tot_in[ci] += self.in_strength[i];
            inside += self.self_loops[i];
            for &(j, w) in &self.out_edges[i] {
                if labels[j] == ci {
                    inside += w;
                }
            }
        }
        let expected: f64 = tot_out.iter().zip(&tot_in).map(|(o, i)| o * i).sum();
        inside / m - expected / (m * m)
    }

    /// Collapses each community into one node; internal weight becomes a self-loop.
    /// `labels` must be contiguous from 0.
    pub fn aggregate(&self, labels: &[usize]) -> WeightedDigraph {
        let k = labels.iter().max().map_or(0, |x| x + 1);
        let mut arcs = Vec::new();
        for i in 0..self.n() {
            if self.self_loops[i] > 0.0 {
                arcs.push((labels[i], labels[i], self.self_loops[i]));
            }
            for &(j, w) in &self.out_edges[i] {
                arcs.push((labels[i], labels[j], w));
            }
        }
        WeightedDigraph::from_arcs(k, arcs)
    }
}
