//! Two-phase Louvain optimisation of directed modularity.
//!
//! Phase one moves single nodes between communities while the gain
//!
//! ```text
//! ΔQ(i → C) = (w(i→C) + w(C→i)) / m - (k_i^out Σ_in(C) + k_i^in Σ_out(C)) / m²
//! ```
//!
//! is positive; phase two collapses communities into nodes and repeats. After the
//! hierarchy settles, node-level moves are re-run on the original graph from the
//! projected partition (and the hierarchy rebuilt if they change anything), so the
//! result is also a local optimum for single-station moves.
//!
//! Greedy moves stall on plateaus of zero gain. A vertex-mover sweep then moves
//! every node once, always taking the best available move even when it lowers
//! modularity, and keeps the best partition seen along the way; when that beats
//! the starting point the Louvain phases are run again from it. The same sweep
//! is also run on the graph of communities, where a move regroups a whole community.
//! When neither sweep helps, each node in turn is pushed to its best alternative
//! community and greedy moves are allowed to settle (a one-move lookahead).
//! Each call makes a few descents with different visiting orders and keeps the best.

use rand::seq::SliceRandom;
use rand::Rng;

use super::graph::WeightedDigraph;
use super::Partition;
use crate::error::{Error, Result};
use crate::flowgraph::FlowMatrix;
use crate::seeds;

/// Minimum modularity gain for a move to count.
pub const MIN_GAIN: f64 = 1e-12;

const MAX_ROUNDS: usize = 64;

/// Independent descents per call.
pub const RESTARTS: usize = 4;

/// Louvain partition of a flow matrix. The node visiting order is shuffled from `seed`.
pub fn louvain_partition(flow: &FlowMatrix, seed: u64) -> Result<Partition> {
    let g = WeightedDigraph::from_flow(flow);
    if g.total_weight() <= 0.0 {
        return Err(Error::EmptyGraph);
    }
    Ok(louvain_graph(&g, seed))
}

/// Louvain on an arbitrary weighted digraph. A weightless graph yields singletons.
///
/// `RESTARTS` descents share one random stream seeded from `seed`; the partition
/// with the highest modularity wins (the earliest on ties).
pub fn louvain_graph(g: &WeightedDigraph, seed: u64) -> Partition {
    let n = g.n();
    if g.total_weight() <= 0.0 {
        return Partition::singletons(n);
    }
    let mut rng = seeds::rng(seed);
    let mut best = descend(g, &mut rng);
    let mut best_q = g.modularity(best.labels());
    for _ in 1..RESTARTS {
        let p = descend(g, &mut rng);
        let q = g.modularity(p.labels());
        if q > best_q + MIN_GAIN {
            best = p;
            best_q = q;
        }
    }
    best
}

fn descend<R: Rng>(g: &WeightedDigraph, rng: &mut R) -> Partition {
    let mut labels = Partition::singletons(g.n());
    for _ in 0..MAX_ROUNDS {
        let next = optimize_from(g, labels.labels(), rng);
        if next != labels {
            labels = next;
            continue;
        }
        if let Some(better) = vertex_mover(g, labels.labels()) {
            labels = better;
            continue;
        }
        // The same sweep one level up regroups whole communities.
        let coarse = g.aggregate(labels.labels());
        if let Some(groups) = vertex_mover(&coarse, &(0..coarse.n()).collect::<Vec<_>>()) {
            let projected: Vec<usize> = labels.labels().iter().map(|c| groups.label(*c)).collect();
            labels = Partition::from_labels(&projected);
            continue;
        }
        match kick(g, labels.labels(), rng) {
            Some(better) => labels = better,
            None => break,
        }
    }
    labels
}

/// Best move of node `i` away from its community: `(modularity change, target)`.
/// An empty community is a candidate unless `i` is already alone.
fn best_move(g: &WeightedDigraph, comm: &[usize], i: usize) -> Option<(f64, usize)> {
    let n = g.n();
    let m = g.total_weight();
    let m2 = m * m;
    let mut tot_out = vec![0.0; n];
    let mut tot_in = vec![0.0; n];
    let mut size = vec![0usize; n];
    for j in 0..n {
        tot_out[comm[j]] += g.out_strength(j);
        tot_in[comm[j]] += g.in_strength(j);
        size[comm[j]] += 1;
    }
    let ci = comm[i];
    let (k_out, k_in) = (g.out_strength(i), g.in_strength(i));
    tot_out[ci] -= k_out;
    tot_in[ci] -= k_in;
    let mut link = vec![0.0; n];
    for &(j, w) in g.out_edges(i).iter().chain(g.in_edges(i)) {
        link[comm[j]] += w;
    }
    let gain = |c: usize| link[c] / m - (k_out * tot_in[c] + k_in * tot_out[c]) / m2;
    let stay = gain(ci);
    let mut best: Option<(f64, usize)> = None;
    for c in 0..n {
        let candidate = if c == ci {
            false
        } else if size[c] == 0 {
            size[ci] > 1 && !(0..c).any(|e| size[e] == 0)
        } else {
            link[c] > 0.0
        };
        if candidate && best.is_none_or(|(d, _)| gain(c) - stay > d) {
            best = Some((gain(c) - stay, c));
        }
    }
    best
}

/// One-move lookahead: for each node in turn, force its best move and let greedy
/// moves settle; the first result that beats `initial` by more than `MIN_GAIN` is returned.
fn kick<R: Rng>(g: &WeightedDigraph, initial: &[usize], rng: &mut R) -> Option<Partition> {
    let start = Partition::from_labels(initial);
    let q0 = g.modularity(start.labels());
    for i in 0..g.n() {
        let Some((_, c)) = best_move(g, start.labels(), i) else { continue };
        let mut comm = start.labels().to_vec();
        comm[i] = c;
        local_moving(g, &mut comm, rng);
        if g.modularity(&comm) > q0 + MIN_GAIN {
            return Some(Partition::from_labels(&comm));
        }
    }
    None
}

/// One vertex-mover sweep from `initial`; returns the best partition met on the
/// way when it improves modularity by more than `MIN_GAIN`.
///
/// Each step applies the single best move over all nodes not yet moved (lowest
/// node, then lowest community, on ties), including moves into an empty community.
pub(crate) fn vertex_mover(g: &WeightedDigraph, initial: &[usize]) -> Option<Partition> {
    let n = g.n();
    let m = g.total_weight();
    if n < 2 || m <= 0.0 {
        return None;
    }
    let m2 = m * m;
    let mut comm = Partition::from_labels(initial).labels().to_vec();
    let mut tot_out = vec![0.0; n];
    let mut tot_in = vec![0.0; n];
    let mut size = vec![0usize; n];
    for i in 0..n {
        tot_out[comm[i]] += g.out_strength(i);
        tot_in[comm[i]] += g.in_strength(i);
        size[comm[i]] += 1;
    }
    let mut moved = vec![false; n];
    let mut link = vec![0.0; n];
    let mut touched: Vec<usize> = Vec::new();
    let (mut cum, mut best_cum) = (0.0, 0.0);
    let mut best = None;
    for _ in 0..n {
        // (delta, node, target)
        let mut step: Option<(f64, usize, usize)> = None;
        for i in (0..n).filter(|i| !moved[*i]) {
            let ci = comm[i];
            let (k_out, k_in) = (g.out_strength(i), g.in_strength(i));
            for &(j, w) in g.out_edges(i).iter().chain(g.in_edges(i)) {
                let c = comm[j];
                if link[c] == 0.0 {
                    touched.push(c);
                }
                link[c] += w;
            }
            touched.sort_unstable();
            touched.dedup();
            let stay = link[ci] / m - (k_out * (tot_in[ci] - k_in) + k_in * (tot_out[ci] - k_out)) / m2;
            let mut consider = |delta: f64, c: usize| {
                if step.is_none_or(|(d, _, _)| delta > d) {
                    step = Some((delta, i, c));
                }
            };
            for &c in &touched {
                if c != ci {
                    consider(link[c] / m - (k_out * tot_in[c] + k_in * tot_out[c]) / m2 - stay, c);
                }
            }
            if size[ci] > 1 {
                let empty = size.iter().position(|s| *s == 0).expect("fewer communities than nodes");
                consider(-stay, empty);
            }
            for &c in &touched {
                link[c] = 0.0;
            }
            touched.clear();
        }
        let Some((delta, i, c)) = step else { break };
        let ci = comm[i];
        tot_out[ci] -= g.out_strength(i);
        tot_in[ci] -= g.in_strength(i);
        size[ci] -= 1;
        tot_out[c] += g.out_strength(i);
        tot_in[c] += g.in_strength(i);
        size[c] += 1;
        comm[i] = c;
        moved[i] = true;
        cum += delta;
        if cum > best_cum + MIN_GAIN {
            best_cum = cum;
            best = Some(Partition::from_labels(&comm));
        }
    }
    best
}

fn optimize_from<R: Rng>(g: &WeightedDigraph, initial: &[usize], rng: &mut R) -> Partition {
    let mut level = g.clone();
    let mut node_of: Vec<usize> = (0..g.n()).collect();
    let mut comm = Partition::from_labels(initial).labels().to_vec();
    loop {
        local_moving(&level, &mut comm, rng);
        let canon = Partition::from_labels(&comm);
        let mapping = canon.labels();
        for x in node_of.iter_mut() {
            *x = mapping[*x];
        }
        let k = canon.community_count();
        if k == level.n() {
            break;
        }
        level = level.aggregate(mapping);
        comm = (0..k).collect();
    }
    Partition::from_labels(&node_of)
}

/// Repeated passes of single-node moves until a pass moves nothing.
/// Returns whether any node changed community.
pub(crate) fn local_moving<R: Rng>(g: &WeightedDigraph, comm: &mut [usize], rng: &mut R) -> bool {
    let n = g.n();
    let m = g.total_weight();
    let m2 = m * m;
    let mut tot_out = vec![0.0; n];
    let mut tot_in = vec![0.0; n];
    let mut size = vec![0usize; n];
    for i in 0..n {
        tot_out[comm[i]] += g.out_strength(i);
        tot_in[comm[i]] += g.in_strength(i);
        size[comm[i]] += 1;
    }
    let mut free: Vec<usize> = (0..n).rev().filter(|c| size[*c] == 0).collect();

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);

    let mut link = vec![0.0; n];
    let mut touched: Vec<usize> = Vec::new();
    let mut any = false;
    loop {
        let mut moves = 0usize;
        for &i in &order {
            let ci = comm[i];
            let k_out = g.out_strength(i);
            let k_in = g.in_strength(i);

            for &(j, w) in g.out_edges(i).iter().chain(g.in_edges(i)) {
                let c = comm[j];
                if link[c] == 0.0 {
                    touched.push(c);
                }
                link[c] += w;
            }
            touched.sort_unstable();
            touched.dedup();

            tot_out[ci] -= k_out;
            tot_in[ci] -= k_in;
            size[ci] -= 1;

            let gain = |c: usize, link_c: f64, tot_out: &[f64], tot_in: &[f64]| {
                link_c / m - (k_out * tot_in[c] + k_in * tot_out[c]) / m2
            };
            let mut best = ci;
            let mut best_gain = gain(ci, link[ci], &tot_out, &tot_in);
            for &c in &touched {
                if c == ci {
                    continue;
                }
                let gc = gain(c, link[c], &tot_out, &tot_in);
                if gc > best_gain + MIN_GAIN {
                    best = c;
                    best_gain = gc;
                }
            }
            if size[ci] > 0 && 0.0 > best_gain + MIN_GAIN {
                // Isolating the node beats every populated community.
                best = free.pop().expect("an empty community exists while ci is shared");
            }

            tot_out[best] += k_out;
            tot_in[best] += k_in;
            size[best] += 1;
            comm[i] = best;
            if best != ci {
                moves += 1;
                if size[ci] == 0 {
                    free.push(ci);
                }
            }
            for &c in &touched {
                link[c] = 0.0;
            }
            touched.clear();
        }
        if moves == 0 {
            break;
        }
        any = true;
    }
    any
}
