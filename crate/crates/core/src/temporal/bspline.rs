//! Cubic B-spline bases with knots at feature quantiles.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

pub const DEGREE: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct BSplineBasis {
    /// Full knot vector with boundary knots repeated `DEGREE + 1` times.
    knots: Vec<f64>,
}

impl BSplineBasis {
    /// Interior knots at quantiles of the distinct values of `x`, deduplicated
    /// and capped by the number of distinct interior values.
    pub fn from_quantiles(x: &[f64], interior: usize) -> Result<Self> {
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("spline feature has non-finite values"));
        }
        let mut u: Vec<f64> = x.to_vec();
        u.sort_by(f64::total_cmp);
        u.dedup();
        if u.len() < 2 {
            return Err(Error::invalid("spline feature is constant"));
        }
        let (lo, hi) = (u[0], u[u.len() - 1]);
        let eps = 1e-10 * (hi - lo);
        // No more interior knots than distinct interior values.
        let interior = interior.min(u.len() - 2);
        let mut inner: Vec<f64> = Vec::with_capacity(interior);
        for j in 1..=interior {
            let q = quantile_sorted(&u, j as f64 / (interior + 1) as f64);
            if q - lo > eps && hi - q > eps && inner.last().is_none_or(|l| q - l > eps) {
                inner.push(q);
            }
        }
        Ok(Self::with_interior(lo, hi, &inner))
    }

    pub fn with_interior(lo: f64, hi: f64, interior: &[f64]) -> Self {
        let mut knots = vec![lo; DEGREE + 1];
        knots.extend_from_slice(interior);
        knots.extend(std::iter::repeat_n(hi, DEGREE + 1));
        BSplineBasis { knots }
    }

    pub fn len(&self) -> usize {
        self.knots.len() - DEGREE - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> (f64, f64) {
        (self.knots[0], self.knots[self.knots.len() - 1])
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    /// All basis functions at `x`, which is clamped to the knot range.
    pub fn evaluate(&self, x: f64) -> Vec<f64> {
        let k = self.len();
        let (lo, hi) = self.range();
        let x = x.clamp(lo, hi);
        let t = &self.knots;
        // Span index: t[span] <= x < t[span + 1], with the right end folded into the last span.
        let mut span = DEGREE;
        while span < k - 1 && t[span + 1] <= x {
            span += 1;
        }
        let mut n = [0.0; DEGREE + 1];
        let mut left = [0.0; DEGREE + 1];
        let mut right = [0.0; DEGREE + 1];
        n[0] = 1.0;
        for j in 1..=DEGREE {
            left[j] = x - t[span + 1 - j];
            right[j] = t[span + j] - x;
            let mut saved = 0.0;
            for r in 0..j {
                let denom = right[r + 1] + left[j - r];
                let tmp = if denom != 0.0 { n[r] / denom } else { 0.0 };
                n[r] = saved + right[r + 1] * tmp;
                saved = left[j - r] * tmp;
            }
            n[j] = saved;
        }
        let mut out = vec![0.0; k];
        for (r, v) in n.iter().enumerate() {
            out[span - DEGREE + r] = *v;
        }
        out
    }

    /// Greville abscissae: the coefficients of `f(x) = x` in this basis.
    pub fn greville(&self) -> Vec<f64> {
        (0..self.len())
            .map(|j| self.knots[j + 1..=j + DEGREE].iter().sum::<f64>() / DEGREE as f64)
            .collect()
    }

    /// Second-difference penalty taken over the Greville abscissae, so that
    /// exactly the linear functions go unpenalised even with uneven knots.
    /// With evenly spaced abscissae it reduces to the usual `[1, -2, 1]` stencil.
    pub fn penalty(&self) -> DMatrix<f64> {
        let k = self.len();
        if k < 3 {
            return DMatrix::zeros(k, k);
        }
        let xi = self.greville();
        let mut d = DMatrix::zeros(k - 2, k);
        for r in 0..k - 2 {
            let h1 = xi[r + 1] - xi[r];
            let h2 = xi[r + 2] - xi[r + 1];
            let h = 0.5 * (h1 + h2);
            d[(r, r)] = h / h1;
            d[(r, r + 1)] = -h / h1 - h / h2;
            d[(r, r + 2)] = h / h2;
        }
        d.transpose() * d
    }

    pub fn design(&self, x: &[f64]) -> DMatrix<f64> {
        let k = self.len();
        let mut m = DMatrix::zeros(x.len(), k);
        for (i, xi) in x.iter().enumerate() {
            for (j, v) in self.evaluate(*xi).into_iter().enumerate() {
                m[(i, j)] = v;
            }
        }
        m
    }
}

/// Type-7 quantile of sorted data.
pub fn quantile_sorted(u: &[f64], p: f64) -> f64 {
    let h = (u.len() - 1) as f64 * p;
    let i = h.floor() as usize;
    if i + 1 >= u.len() {
        return u[u.len() - 1];
    }
    u[i] + (h - i as f64) * (u[i + 1] - u[i])
}

/// `DᵀD` for the second-difference operator on `k` coefficients.
pub fn second_difference_penalty(k: usize) -> DMatrix<f64> {
    if k < 3 {
        return DMatrix::zeros(k, k);
    }
    let mut d = DMatrix::zeros(k - 2, k);
    for r in 0..k - 2 {
        d[(r, r)] = 1.0;
        d[(r, r + 1)] = -2.0;
        d[(r, r + 2)] = 1.0;
    }
    d.transpose() * d
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn quantile_knots_are_strictly_interior() {
        let x: Vec<f64> = (0..101).map(|i| i as f64 / 100.0).collect();
        let b = BSplineBasis::from_quantiles(&x, 10).unwrap();
        assert_eq!(b.len(), 14);
        assert!((b.knots()[4] - 1.0 / 11.0).abs() < 1e-12);
        let few = BSplineBasis::from_quantiles(&[0.0, 1.0, 0.0, 1.0], 10).unwrap();
        assert_eq!(few.len(), 4);
        assert!(BSplineBasis::from_quantiles(&[2.0; 5], 10).is_err());
    }

    #[test]
    fn reproduces_cubic_polynomials() {
        // Cubic splines span the cubics: fit x³ by least squares and expect an exact match.
        let x: Vec<f64> = (0..60).map(|i| -1.0 + 2.0 * i as f64 / 59.0).collect();
        let b = BSplineBasis::from_quantiles(&x, 5).unwrap();
        let m = b.design(&x);
        let y = nalgebra::DVector::from_iterator(x.len(), x.iter().map(|v| v * v * v));
        let coef = m.clone().svd(true, true).solve(&y, 1e-12).unwrap();
        assert!((m * coef - y).amax() < 1e-10);
    }

    #[test]
    fn greville_penalty_leaves_linear_functions_free() {
        let x: Vec<f64> = (0..50).map(|i| (i as f64 / 49.0).powi(3)).collect();
        let b = BSplineBasis::from_quantiles(&x, 10).unwrap();
        let xi = nalgebra::DVector::from_vec(b.greville());
        let ones = nalgebra::DVector::from_element(b.len(), 1.0);
        assert!((b.penalty() * &xi).amax() < 1e-9);
        assert!((b.penalty() * ones).amax() < 1e-9);
        // The Greville abscissae reproduce f(x) = x.
        for v in [0.0, 0.013, 0.4, 1.0] {
            let f: f64 = b.evaluate(v).iter().zip(xi.iter()).map(|(w, c)| w * c).sum();
            assert!((f - v).abs() < 1e-12);
        }
    }

    #[test]
    fn penalty_kills_linear_coefficients() {
        let p = second_difference_penalty(6);
        let lin = nalgebra::DVector::from_iterator(6, (0..6).map(|i| 2.0 * i as f64 - 1.0));
        assert!((p * lin).amax() < 1e-12);
    }

    proptest! {
        #[test]
        fn partition_of_unity(x in -3.0f64..3.0, seed in prop::collection::vec(-2.0f64..2.0, 30)) {
            let b = BSplineBasis::from_quantiles(&seed, 10).unwrap();
            let v = b.evaluate(x);
            prop_assert!((v.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(v.iter().all(|w| *w >= -1e-15));
        }
    }
}
