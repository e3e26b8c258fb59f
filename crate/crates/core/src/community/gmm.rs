//! Diagonal Gaussian mixtures over variability-matrix rows, selected by BIC.
//!
//! Each candidate `k` is fitted by EM from a Ward agglomerative initialisation
//! plus a few seeded random restarts. Variances carry a ridge prior,
//! `σ² = (Σ r (x - μ)² + RIDGE) / N_k`, which keeps components from collapsing
//! onto repeated rows while leaving EM a true ascent method on the penalised
//! log-likelihood.

use chrono::NaiveDate;
use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use super::snapshot::VariabilityMatrix;
use super::Partition;
use crate::error::{Error, Result};
use crate::seeds;

/// Variance ridge.
pub const RIDGE: f64 = 1e-6;
const TOL: f64 = 1e-9;
const MAX_ITER: usize = 500;
const RESTARTS: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmFit {
    pub k: usize,
    pub weights: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    pub variances: Vec<Vec<f64>>,
    pub log_likelihood: f64,
    /// Log-likelihood plus the ridge prior; EM never decreases it.
    pub penalized: f64,
    /// Penalised objective after each EM iteration.
    pub trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Some component had a raw variance below the ridge.
    pub regularized: bool,
}

impl GmmFit {
    pub fn parameter_count(&self) -> usize {
        let d = self.means.first().map_or(0, Vec::len);
        (self.k - 1) + 2 * self.k * d
    }

    pub fn bic(&self, n: usize) -> f64 {
        -2.0 * self.log_likelihood + self.parameter_count() as f64 * (n as f64).ln()
    }

    /// Hard assignment by largest responsibility; ties go to the lower component.
    pub fn assign(&self, points: &[Vec<f64>]) -> Vec<usize> {
        points
            .iter()
            .map(|x| {
                let lp = self.component_logs(x);
                let mut best = 0;
                for c in 1..lp.len() {
                    if lp[c] > lp[best] {
                        best = c;
                    }
                }
                best
            })
            .collect()
    }

    fn component_logs(&self, x: &[f64]) -> Vec<f64> {
        (0..self.k)
            .map(|c| self.weights[c].ln() + log_normal_diag(x, &self.means[c], &self.variances[c]))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotClustering {
    pub dates: Vec<NaiveDate>,
    /// Cluster per date, numbered in order of first appearance.
    pub assignment: Vec<usize>,
    pub chosen_k: usize,
    /// `(k, BIC)` for every candidate.
    pub bic_scores: Vec<(usize, f64)>,
    pub model: GmmFit,
}

impl SnapshotClustering {
    pub fn regularized(&self) -> bool {
        self.model.regularized
    }
}

pub fn cluster_snapshots_gmm(vm: &VariabilityMatrix, k_max: usize, seed: u64) -> Result<SnapshotClustering> {
    let (assignment, chosen_k, bic_scores, model) = select_mixture(&vm.values, k_max, seed)?;
    Ok(SnapshotClustering { dates: vm.dates.clone(), assignment, chosen_k, bic_scores, model })
}

type Selection = (Vec<usize>, usize, Vec<(usize, f64)>, GmmFit);

/// Fits k = 1..=k_max and keeps the smallest BIC (smaller k on ties).
pub fn select_mixture(points: &[Vec<f64>], k_max: usize, seed: u64) -> Result<Selection> {
    let n = points.len();
    if n == 0 {
        return Err(Error::invalid("no rows to cluster"));
    }
    if k_max == 0 || k_max > n {
        return Err(Error::invalid(format!("k_max must lie in 1..={n}, got {k_max}")));
    }
    let d = points[0].len();
    if d == 0 || points.iter().any(|p| p.len() != d) {
        return Err(Error::invalid("rows must be non-empty and of equal length"));
    }
    let mut best: Option<GmmFit> = None;
    let mut scores = Vec::with_capacity(k_max);
    for k in 1..=k_max {
        let fit = fit_diagonal_gmm(points, k, seeds::indexed_seed(seed, k as u64))?;
        let bic = fit.bic(n);
        scores.push((k, bic));
        if best.as_ref().is_none_or(|b| bic < b.bic(n)) {
            best = Some(fit);
        }
    }
    let model = best.expect("k_max >= 1");
    let assignment = Partition::from_labels(&model.assign(points)).labels().to_vec();
    Ok((assignment, model.k, scores, model))
}

/// Best of a Ward-initialised EM run and `RESTARTS` random-initialised runs.
pub fn fit_diagonal_gmm(points: &[Vec<f64>], k: usize, seed: u64) -> Result<GmmFit> {
    let n = points.len();
    if k == 0 || k > n {
        return Err(Error::invalid(format!("k must lie in 1..={n}, got {k}")));
    }
    let mut best = em(points, &ward_labels(points, k), k);
    if k > 1 {
        let mut rng = seeds::rng(seed);
        for _ in 0..RESTARTS {
            let centres: Vec<usize> = sample(&mut rng, n, k).into_vec();
            let labels: Vec<usize> = points
                .iter()
                .map(|x| {
                    let mut b = 0;
                    for c in 1..k {
                        if sq_dist(x, &points[centres[c]]) < sq_dist(x, &points[centres[b]]) {
                            b = c;
                        }
                    }
                    b
                })
                .collect();
            let fit = em(points, &labels, k);
            if fit.penalized > best.penalized {
                best = fit;
            }
        }
    }
    Ok(best)
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn log_normal_diag(x: &[f64], mean: &[f64], var: &[f64]) -> f64 {
    let mut s = 0.0;
    for ((xi, m), v) in x.iter().zip(mean).zip(var) {
        s += (2.0 * std::f64::consts::PI * v).ln() + (xi - m) * (xi - m) / v;
    }
    -0.5 * s
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Agglomerative Ward clustering cut at `k` clusters (Lance–Williams updates).
/// Ties merge the lowest index pair first.
pub fn ward_labels(points: &[Vec<f64>], k: usize) -> Vec<usize> {
    let n = points.len();
    let mut d = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in (i + 1)..n {
            let v = sq_dist(&points[i], &points[j]);
            d[i][j] = v;
            d[j][i] = v;
        }
    }
    let mut size = vec![1usize; n];
    let mut active: Vec<bool> = vec![true; n];
    let mut owner: Vec<usize> = (0..n).collect();
    for _ in 0..(n - k) {
        let mut pair = (usize::MAX, usize::MAX);
        let mut best = f64::INFINITY;
        for i in 0..n {
            if !active[i] {
                continue;
            }
            for j in (i + 1)..n {
                if active[j] && d[i][j] < best {
                    best = d[i][j];
                    pair = (i, j);
                }
            }
        }
        let (a, b) = pair;
        let (na, nb) = (size[a] as f64, size[b] as f64);
        for c in 0..n {
            if !active[c] || c == a || c == b {
                continue;
            }
            let nc = size[c] as f64;
            let v = ((na + nc) * d[a][c] + (nb + nc) * d[b][c] - nc * d[a][b]) / (na + nb + nc);
            d[a][c] = v;
            d[c][a] = v;
        }
        size[a] += size[b];
        active[b] = false;
        for o in owner.iter_mut() {
            if *o == b {
                *o = a;
            }
        }
    }
    Partition::from_labels(&owner).labels().to_vec()
}

struct Params {
    weights: Vec<f64>,
    means: Vec<Vec<f64>>,
    variances: Vec<Vec<f64>>,
    regularized: bool,
}

/// M-step from soft responsibilities `resp[i][c]`.
fn m_step(points: &[Vec<f64>], resp: &[Vec<f64>], k: usize) -> Params {
    let n = points.len();
    let d = points[0].len();
    let mut weights = vec![0.0; k];
    let mut means = vec![vec![0.0; d]; k];
    let mut variances = vec![vec![0.0; d]; k];
    let mut regularized = false;
    for c in 0..k {
        let nk: f64 = resp.iter().map(|r| r[c]).sum();
        weights[c] = nk / n as f64;
        if nk <= 0.0 {
            // Dead component: keep it inert.
            variances[c] = vec![1.0; d];
            continue;
        }
        for (x, r) in points.iter().zip(resp) {
            for t in 0..d {
                means[c][t] += r[c] * x[t];
            }
        }
        for t in 0..d {
            means[c][t] /= nk;
        }
        for t in 0..d {
            let mut s = 0.0;
            for (x, r) in points.iter().zip(resp) {
                let e = x[t] - means[c][t];
                s += r[c] * e * e;
            }
            if s / nk < RIDGE {
                regularized = true;
            }
            variances[c][t] = (s + RIDGE) / nk;
        }
    }
    Params { weights, means, variances, regularized }
}

/// Returns (log-likelihood, penalised objective, responsibilities).
fn e_step(points: &[Vec<f64>], p: &Params) -> (f64, f64, Vec<Vec<f64>>) {
    let k = p.weights.len();
    let mut ll = 0.0;
    let mut resp = Vec::with_capacity(points.len());
    for x in points {
        let lp: Vec<f64> = (0..k)
            .map(|c| {
                if p.weights[c] > 0.0 {
                    p.weights[c].ln() + log_normal_diag(x, &p.means[c], &p.variances[c])
                } else {
                    f64::NEG_INFINITY
                }
            })
            .collect();
        let z = log_sum_exp(&lp);
        ll += z;
        resp.push(lp.iter().map(|l| (l - z).exp()).collect());
    }
    let mut prior = 0.0;
    for c in 0..k {
        if p.weights[c] > 0.0 {
            prior -= p.variances[c].iter().map(|v| RIDGE / (2.0 * v)).sum::<f64>();
        }
    }
    (ll, ll + prior, resp)
}

fn em(points: &[Vec<f64>], init: &[usize], k: usize) -> GmmFit {
    let hard: Vec<Vec<f64>> = init
        .iter()
        .map(|&l| (0..k).map(|c| if c == l { 1.0 } else { 0.0 }).collect())
        .collect();
    let mut params = m_step(points, &hard, k);
    let (mut ll, mut obj, mut resp) = e_step(points, &params);
    let mut trace = vec![obj];
    let mut converged = false;
    let mut iterations = 0;
    while iterations < MAX_ITER {
        iterations += 1;
        let next = m_step(points, &resp, k);
        let (nll, nobj, nresp) = e_step(points, &next);
        trace.push(nobj);
        let done = (nobj - obj).abs() <= TOL * obj.abs().max(1.0);
        params = next;
        ll = nll;
        obj = nobj;
        resp = nresp;
        if done {
            converged = true;
            break;
        }
    }
    GmmFit {
        k,
        weights: params.weights,
        means: params.means,
        variances: params.variances,
        log_likelihood: ll,
        penalized: obj,
        trace,
        iterations,
        converged,
        regularized: params.regularized,
    }
}
