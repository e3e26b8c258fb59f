//! Additive models `g(E y) = β0 + Σ f_k(x_k)` with penalised cubic splines.
//!
//! Each smooth is a cubic B-spline with a second-difference penalty and a
//! sum-to-zero constraint over the training data (absorbed by a Householder
//! null-space basis). Coefficients come from penalised iteratively reweighted
//! least squares; each term's smoothing parameter is picked by GCV
//! (`n D / (n - γ edf)²`) over a log-spaced grid, one term at a time, until a
//! sweep changes nothing.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, FisherSnedecor};

use super::bspline::BSplineBasis;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Link {
    Identity,
    Log,
}

impl Link {
    pub fn inverse(self, eta: f64) -> f64 {
        match self {
            Link::Identity => eta,
            Link::Log => eta.exp(),
        }
    }
}

impl FromStr for Link {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "identity" => Ok(Link::Identity),
            "log" => Ok(Link::Log),
            _ => Err(Error::Parse(format!("unknown link {s:?} (identity|log)"))),
        }
    }
}

impl fmt::Display for Link {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Link::Identity => "identity",
            Link::Log => "log",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GamConfig {
    pub interior_knots: usize,
    pub lambda_grid: usize,
    /// Grid spans `10^±lambda_span` around each term's scale.
    pub lambda_span: f64,
    pub max_sweeps: usize,
    pub max_pirls: usize,
    pub tol: f64,
    /// Weight on effective degrees of freedom in the GCV score. Plain GCV (1.0)
    /// tends to let pure-noise terms wiggle; 1.4 is the usual correction.
    pub gcv_gamma: f64,
}

impl Default for GamConfig {
    fn default() -> Self {
        GamConfig { interior_knots: 10, lambda_grid: 30, lambda_span: 6.0, max_sweeps: 4, max_pirls: 100, tol: 1e-10, gcv_gamma: 1.4 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SmoothTerm {
    pub name: String,
    pub basis: BSplineBasis,
    /// Constraint null space, `K x (K - 1)`.
    z: DMatrix<f64>,
    /// Column offset of this term in the model matrix.
    offset: usize,
    pub lambda: f64,
    pub edf: f64,
    /// `tr(2F - F²)` over the term's block, `F` being the influence matrix.
    pub ref_df: f64,
    pub p_value: f64,
}

impl SmoothTerm {
    pub fn width(&self) -> usize {
        self.z.ncols()
    }

    fn row(&self, x: f64) -> DVector<f64> {
        let b = DVector::from_vec(self.basis.evaluate(x));
        self.z.transpose() * b
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GamModel {
    pub link: Link,
    pub terms: Vec<SmoothTerm>,
    beta: DVector<f64>,
    /// Bayesian posterior covariance of the coefficients.
    vp: DMatrix<f64>,
    pub scale: f64,
    pub edf_total: f64,
    pub deviance: f64,
    pub gcv: f64,
    /// Penalised deviance after each PIRLS iteration of the final fit.
    pub pirls_trace: Vec<f64>,
    pub pirls_converged: bool,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermSignificance {
    pub term: String,
    pub edf: f64,
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub values: Vec<f64>,
    /// Rows with at least one feature outside its training range (clamped).
    pub clamped: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub x: f64,
    pub f: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

impl GamModel {
    pub fn intercept(&self) -> f64 {
        self.beta[0]
    }

    pub fn coefficients(&self) -> &DVector<f64> {
        &self.beta
    }

    /// Model matrix for `rows` (one feature vector per observation), features clamped.
    pub fn design(&self, rows: &[Vec<f64>]) -> DMatrix<f64> {
        let q = self.beta.len();
        let mut x = DMatrix::zeros(rows.len(), q);
        for (i, r) in rows.iter().enumerate() {
            x[(i, 0)] = 1.0;
            for (k, t) in self.terms.iter().enumerate() {
                let g = t.row(r[k]);
                for (j, v) in g.iter().enumerate() {
                    x[(i, t.offset + j)] = *v;
                }
            }
        }
        x
    }

    /// Block-diagonal `Σ λ_k S_k`.
    pub fn penalty(&self) -> DMatrix<f64> {
        let q = self.beta.len();
        let mut s = DMatrix::zeros(q, q);
        for t in &self.terms {
            let p = t.z.transpose() * t.basis.penalty() * &t.z * t.lambda;
            s.view_mut((t.offset, t.offset), (t.width(), t.width())).copy_from(&p);
        }
        s
    }

    pub fn significance(&self) -> Vec<TermSignificance> {
        gam_term_significance(self)
    }

    pub fn predict(&self, rows: &[Vec<f64>]) -> Result<Prediction> {
        let mut clamped = 0;
        for r in rows {
            if r.len() != self.terms.len() {
                return Err(Error::invalid(format!("expected {} features, got {}", self.terms.len(), r.len())));
            }
            if self.terms.iter().zip(r).any(|(t, x)| {
                let (lo, hi) = t.basis.range();
                *x < lo || *x > hi
            }) {
                clamped += 1;
            }
        }
        let eta = self.design(rows) * &self.beta;
        Ok(Prediction { values: eta.iter().map(|e| self.link.inverse(*e)).collect(), clamped })
    }

    /// `f_k` on the link scale at `points` evenly spaced samples with 95% bands.
    pub fn curve(&self, term: usize, points: usize) -> Vec<CurvePoint> {
        let t = &self.terms[term];
        let (lo, hi) = t.basis.range();
        let w = t.width();
        let beta = self.beta.rows(t.offset, w);
        let v = self.vp.view((t.offset, t.offset), (w, w));
        (0..points)
            .map(|i| {
                let x = if points == 1 { lo } else { lo + (hi - lo) * i as f64 / (points - 1) as f64 };
                let g = t.row(x);
                let f = g.dot(&beta);
                let se = (g.transpose() * v * &g)[(0, 0)].max(0.0).sqrt();
                CurvePoint { x, f, ci_low: f - 1.96 * se, ci_high: f + 1.96 * se }
            })
            .collect()
    }
}

/// Fits one smooth per feature column. `features[i]` is observation `i`'s feature vector.
pub fn fit_gam(
    features: &[Vec<f64>],
    names: &[String],
    targets: &[f64],
    link: Link,
    config: &GamConfig,
) -> Result<GamModel> {
    let n = targets.len();
    if n < 10 {
        return Err(Error::invalid(format!("additive model needs at least 10 observations, got {n}")));
    }
    if features.len() != n {
        return Err(Error::invalid("features and targets disagree in length"));
    }
    let p = names.len();
    if p == 0 || features.iter().any(|r| r.len() != p) {
        return Err(Error::invalid("every observation needs one value per named feature"));
    }
    if features.iter().flatten().chain(targets).any(|v| !v.is_finite()) {
        return Err(Error::invalid("features and targets must be finite"));
    }
    if link == Link::Log {
        let min = targets.iter().copied().fold(f64::INFINITY, f64::min);
        if min <= 0.0 {
            return Err(Error::NonPositiveTarget(min));
        }
    }

    let mut terms = Vec::with_capacity(p);
    let mut blocks = Vec::with_capacity(p);
    let mut offset = 1;
    for (k, name) in names.iter().enumerate() {
        let col: Vec<f64> = features.iter().map(|r| r[k]).collect();
        let basis = BSplineBasis::from_quantiles(&col, config.interior_knots)
            .map_err(|e| Error::invalid(format!("feature {name}: {e}")))?;
        let b = basis.design(&col);
        let c: DVector<f64> = b.row_sum().transpose();
        let z = householder_null_space(&c);
        let xk = &b * &z;
        let pk = z.transpose() * basis.penalty() * &z;
        let w = z.ncols();
        terms.push(SmoothTerm { name: name.clone(), basis, z, offset, lambda: 0.0, edf: 0.0, ref_df: 0.0, p_value: 1.0 });
        blocks.push((xk, pk));
        offset += w;
    }
    let q = offset;
    let mut x = DMatrix::zeros(n, q);
    x.column_mut(0).fill(1.0);
    for (t, (xk, _)) in terms.iter().zip(&blocks) {
        x.view_mut((0, t.offset), (n, t.width())).copy_from(xk);
    }
    let y = DVector::from_column_slice(targets);

    // Per-term grid, scaled so the penalty and data terms are comparable.
    let grids: Vec<Vec<f64>> = blocks
        .iter()
        .map(|(xk, pk)| {
            let scale = xk.norm_squared() / pk.trace().max(f64::MIN_POSITIVE);
            (0..config.lambda_grid)
                .map(|i| {
                    let g = if config.lambda_grid == 1 {
                        0.0
                    } else {
                        -config.lambda_span + 2.0 * config.lambda_span * i as f64 / (config.lambda_grid - 1) as f64
                    };
                    scale * 10f64.powf(g)
                })
                .collect()
        })
        .collect();
    let penalty = |idx: &[usize]| {
        let mut s = DMatrix::zeros(q, q);
        for ((t, (_, pk)), (grid, &i)) in terms.iter().zip(&blocks).zip(grids.iter().zip(idx)) {
            s.view_mut((t.offset, t.offset), (t.width(), t.width())).copy_from(&(pk * grid[i]));
        }
        s
    };

    let mid = config.lambda_grid / 2;
    let mut idx = vec![mid; p];
    let mut best = pirls(&x, &y, &penalty(&idx), link, config).gcv(n, config.gcv_gamma);
    for _ in 0..config.max_sweeps {
        let mut changed = false;
        for k in 0..p {
            // High to low: on ties the smoother fit wins.
            for i in (0..config.lambda_grid).rev() {
                if i == idx[k] {
                    continue;
                }
                let mut trial = idx.clone();
                trial[k] = i;
                let g = pirls(&x, &y, &penalty(&trial), link, config).gcv(n, config.gcv_gamma);
                if g < best * (1.0 - 1e-12) {
                    best = g;
                    idx = trial;
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }

    let s = penalty(&idx);
    let fit = pirls(&x, &y, &s, link, config);
    let xtwx = weighted_gram(&x, &fit.weights);
    let inv = invert_spd(&(&xtwx + &s));
    let hat = &inv * &xtwx;
    let edf_total = hat.trace();
    let resid_df = n as f64 - edf_total;
    let scale = if resid_df > 0.0 { fit.deviance / resid_df } else { 0.0 };
    let vp = &inv * scale;
    let gcv = fit.gcv_with(n, config.gcv_gamma * edf_total);
    for (t, (grid, &i)) in terms.iter_mut().zip(grids.iter().zip(&idx)) {
        t.lambda = grid[i];
        t.edf = (t.offset..t.offset + t.width()).map(|j| hat[(j, j)]).sum();
        t.ref_df = (t.offset..t.offset + t.width()).map(|j| 2.0 * hat[(j, j)] - hat.row(j).dot(&hat.column(j).transpose())).sum();
    }
    let mut model = GamModel {
        link,
        terms,
        beta: fit.beta,
        vp,
        scale,
        edf_total,
        deviance: fit.deviance,
        gcv,
        pirls_trace: fit.trace,
        pirls_converged: fit.converged,
        n,
    };
    let sig = gam_term_significance(&model);
    for (t, s) in model.terms.iter_mut().zip(sig) {
        t.p_value = s.p_value;
    }
    Ok(model)
}

/// Wald test of each smooth against zero.
///
/// The statistic uses the rank-`r` pseudo-inverse of the term's posterior
/// covariance with `r = ceil(ref_df)`, and `T / r` is referred to
/// `F(r, n - edf_total)`. Rounding `edf` instead gives too many rejections for
/// null terms whose smoothing parameter came out small.
pub fn gam_term_significance(model: &GamModel) -> Vec<TermSignificance> {
    model
        .terms
        .iter()
        .enumerate()
        .map(|(k, t)| {
            let r = ((t.ref_df - 1e-6).ceil().max(1.0) as usize).min(t.width());
            TermSignificance { term: t.name.clone(), edf: t.edf, p_value: wald_p_value(model, k, r) }
        })
        .collect()
}

/// Wald p-value of term `k` using the top-`rank` eigen-directions of its covariance.
pub fn wald_p_value(model: &GamModel, k: usize, rank: usize) -> f64 {
    let resid_df = model.n as f64 - model.edf_total;
    let t = &model.terms[k];
    let w = t.width();
    let r = rank.clamp(1, w);
    let beta = model.beta.rows(t.offset, w).into_owned();
    let v = model.vp.view((t.offset, t.offset), (w, w)).into_owned();
    let eig = SymmetricEigen::new(v);
    let mut order: Vec<usize> = (0..w).collect();
    order.sort_by(|a, b| eig.eigenvalues[*b].total_cmp(&eig.eigenvalues[*a]));
    let mut stat = 0.0;
    for &j in order.iter().take(r) {
        let ev = eig.eigenvalues[j];
        if !(ev > 0.0) || resid_df <= 0.0 {
            return if beta.amax() <= 1e-12 { 1.0 } else { 0.0 };
        }
        let proj = eig.eigenvectors.column(j).dot(&beta);
        stat += proj * proj / ev;
    }
    match FisherSnedecor::new(r as f64, resid_df) {
        Ok(f) => (1.0 - f.cdf(stat / r as f64)).clamp(0.0, 1.0),
        Err(_) => 1.0,
    }
}

/// Columns spanning `{v : cᵀ v = 0}` from the Householder reflection mapping `c` onto `e1`.
fn householder_null_space(c: &DVector<f64>) -> DMatrix<f64> {
    let k = c.len();
    let mut v = c.clone();
    let norm = c.norm();
    let sign = if c[0] >= 0.0 { 1.0 } else { -1.0 };
    v[0] += sign * norm;
    let vv = v.norm_squared();
    let h = DMatrix::identity(k, k) - (&v * v.transpose()) * (2.0 / vv);
    h.columns(1, k - 1).into_owned()
}

fn weighted_gram(x: &DMatrix<f64>, w: &DVector<f64>) -> DMatrix<f64> {
    let mut xw = x.clone();
    for (i, wi) in w.iter().enumerate() {
        xw.row_mut(i).scale_mut(*wi);
    }
    x.transpose() * xw
}

fn invert_spd(a: &DMatrix<f64>) -> DMatrix<f64> {
    match a.clone().cholesky() {
        Some(c) => c.inverse(),
        None => a.clone().pseudo_inverse(1e-12).expect("pseudo-inverse of a square matrix"),
    }
}

fn solve_spd(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    match a.clone().cholesky() {
        Some(c) => c.solve(b),
        None => a.clone().svd(true, true).solve(b, 1e-12).expect("svd solve"),
    }
}

struct PirlsFit {
    beta: DVector<f64>,
    weights: DVector<f64>,
    deviance: f64,
    trace: Vec<f64>,
    converged: bool,
    edf: f64,
}

impl PirlsFit {
    fn gcv(&self, n: usize, gamma: f64) -> f64 {
        self.gcv_with(n, gamma * self.edf)
    }

    fn gcv_with(&self, n: usize, edf: f64) -> f64 {
        let df = n as f64 - edf;
        if df <= 0.0 {
            f64::INFINITY
        } else {
            n as f64 * self.deviance / (df * df)
        }
    }
}

fn deviance(x: &DMatrix<f64>, y: &DVector<f64>, beta: &DVector<f64>, link: Link) -> f64 {
    let eta = x * beta;
    y.iter().zip(eta.iter()).map(|(yi, e)| (yi - link.inverse(*e)).powi(2)).sum()
}

fn penalized_deviance(x: &DMatrix<f64>, y: &DVector<f64>, s: &DMatrix<f64>, beta: &DVector<f64>, link: Link) -> f64 {
    let d = deviance(x, y, beta, link);
    let pen = (beta.transpose() * s * beta)[(0, 0)];
    let v = d + pen;
    if v.is_finite() {
        v
    } else {
        f64::INFINITY
    }
}

/// Gaussian-family PIRLS; identity link converges in one step.
fn pirls(x: &DMatrix<f64>, y: &DVector<f64>, s: &DMatrix<f64>, link: Link, config: &GamConfig) -> PirlsFit {
    let n = y.len();
    let q = x.ncols();
    let mean = y.mean();
    let mut beta = DVector::zeros(q);
    beta[0] = match link {
        Link::Identity => mean,
        Link::Log => mean.ln(),
    };
    let mut pd = penalized_deviance(x, y, s, &beta, link);
    let mut trace = vec![pd];
    let mut converged = false;
    let mut weights = DVector::from_element(n, 1.0);
    for _ in 0..config.max_pirls {
        let eta = x * &beta;
        let (w, z) = match link {
            Link::Identity => (DVector::from_element(n, 1.0), y.clone()),
            Link::Log => {
                let mu = eta.map(f64::exp);
                let w = mu.map(|m| m * m);
                let z = DVector::from_fn(n, |i, _| eta[i] + (y[i] - mu[i]) / mu[i]);
                (w, z)
            }
        };
        let xtwx = weighted_gram(x, &w);
        let xtwz = x.transpose() * DVector::from_fn(n, |i, _| w[i] * z[i]);
        let target = solve_spd(&(xtwx + s), &xtwz);
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let cand = &beta + (&target - &beta) * step;
            let cpd = penalized_deviance(x, y, s, &cand, link);
            if cpd <= pd {
                accepted = Some((cand, cpd));
                break;
            }
            step *= 0.5;
        }
        let Some((nb, npd)) = accepted else {
            converged = true;
            break;
        };
        let delta = pd - npd;
        beta = nb;
        pd = npd;
        trace.push(pd);
        if link == Link::Identity || delta <= config.tol * pd.abs().max(f64::MIN_POSITIVE) {
            converged = true;
            break;
        }
    }
    if link == Link::Log {
        let eta = x * &beta;
        weights = eta.map(|e| (2.0 * e).exp());
    }
    let xtwx = weighted_gram(x, &weights);
    let edf = (invert_spd(&(&xtwx + s)) * &xtwx).trace();
    let dev = deviance(x, y, &beta, link);
    PirlsFit { beta, weights, deviance: dev, trace, converged, edf }
}

pub fn write_significance<W: Write>(w: W, rows: &[(String, TermSignificance)]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["target", "term", "edf", "p_value"])?;
    for (target, s) in rows {
        wtr.write_record([target.clone(), s.term.clone(), s.edf.to_string(), s.p_value.to_string()])?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_curves<W: Write>(w: W, rows: &[(String, String, CurvePoint)]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["target", "term", "x", "f", "ci_low", "ci_high"])?;
    for (target, term, p) in rows {
        wtr.write_record([
            target.clone(),
            term.clone(),
            p.x.to_string(),
            p.f.to_string(),
            p.ci_low.to_string(),
            p.ci_high.to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}
