//! Chebyshev series on an affine interval `[lo, hi]`.
//!
//! Coefficients multiply `T_n(x)` with `x = (2y - lo - hi) / (hi - lo)`.

use crate::error::{Error, Result};
use num_complex::Complex64 as C;
use std::f64::consts::PI;

/// Slack allowed outside the domain before evaluation is rejected.
const DOMAIN_SLACK: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ChebSeries {
    coeffs: Vec<C>,
    lo: f64,
    hi: f64,
}

impl ChebSeries {
    pub fn new(coeffs: Vec<C>, lo: f64, hi: f64) -> Result<Self> {
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::Domain(format!("invalid interval [{lo}, {hi}]")));
        }
        let coeffs = if coeffs.is_empty() { vec![C::new(0.0, 0.0)] } else { coeffs };
        Ok(Self { coeffs, lo, hi })
    }

    pub fn zero(lo: f64, hi: f64) -> Result<Self> {
        Self::new(vec![C::new(0.0, 0.0)], lo, hi)
    }

    pub fn coeffs(&self) -> &[C] {
        &self.coeffs
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    fn to_unit(&self, y: f64) -> f64 {
        (2.0 * y - self.lo - self.hi) / (self.hi - self.lo)
    }

    /// Evaluates the series, rejecting points outside the interval.
    pub fn eval(&self, y: f64) -> Result<C> {
        if !y.is_finite() || y < self.lo - DOMAIN_SLACK || y > self.hi + DOMAIN_SLACK {
            return Err(Error::Domain(format!(
                "point {y} outside [{}, {}]",
                self.lo, self.hi
            )));
        }
        Ok(self.eval_unchecked(y))
    }

    /// Clenshaw evaluation without the domain check.
    pub fn eval_unchecked(&self, y: f64) -> C {
        clenshaw(&self.coeffs, self.to_unit(y).clamp(-1.0, 1.0))
    }

    pub fn derivative(&self) -> ChebSeries {
        let n = self.coeffs.len();
        let scale = 2.0 / (self.hi - self.lo);
        if n < 2 {
            return Self { coeffs: vec![C::new(0.0, 0.0)], lo: self.lo, hi: self.hi };
        }
        let mut d = vec![C::new(0.0, 0.0); n + 1];
        for k in (1..n).rev() {
            d[k - 1] = d[k + 1] + self.coeffs[k] * (2.0 * k as f64);
        }
        d[0] *= 0.5;
        d.truncate(n - 1);
        for c in d.iter_mut() {
            *c *= scale;
        }
        Self { coeffs: d, lo: self.lo, hi: self.hi }
    }

    /// Antiderivative vanishing at `lo`.
    pub fn integral(&self) -> ChebSeries {
        let n = self.coeffs.len();
        let half = 0.5 * (self.hi - self.lo);
        let a = |k: usize| -> C {
            if k < n {
                self.coeffs[k]
            } else {
                C::new(0.0, 0.0)
            }
        };
        let mut b = vec![C::new(0.0, 0.0); n + 1];
        b[1] = a(0) - a(2) * 0.5;
        for k in 2..=n {
            b[k] = (a(k - 1) - a(k + 1)) / (2.0 * k as f64);
        }
        // value at x = -1 is sum b_k (-1)^k
        let mut at_lo = C::new(0.0, 0.0);
        for (k, bk) in b.iter().enumerate().skip(1) {
            at_lo += if k % 2 == 0 { *bk } else { -*bk };
        }
        b[0] = -at_lo;
        for c in b.iter_mut() {
            *c *= half;
        }
        Self { coeffs: b, lo: self.lo, hi: self.hi }
    }

    /// Interpolates at the `degree + 1` Gauss-Lobatto points `cos(j pi / degree)`.
    pub fn interpolate<F: FnMut(f64) -> C>(
        mut sampler: F,
        degree: usize,
        lo: f64,
        hi: f64,
    ) -> Result<Self> {
        if degree == 0 {
            return Self::new(vec![sampler(0.5 * (lo + hi))], lo, hi);
        }
        let nodes = lobatto_nodes(degree, lo, hi)?;
        let mut vals = Vec::with_capacity(nodes.len());
        for &y in &nodes {
            let v = sampler(y);
            if !(v.re.is_finite() && v.im.is_finite()) {
                return Err(Error::NonFinite(format!("sampler returned {v} at {y}")));
            }
            vals.push(v);
        }
        Self::from_lobatto_values(&vals, lo, hi)
    }

    /// Coefficients from values at `cos(j pi / n)`, `j = 0..=n`.
    pub fn from_lobatto_values(vals: &[C], lo: f64, hi: f64) -> Result<Self> {
        let n = vals.len().checked_sub(1).ok_or_else(|| Error::Domain("no values".into()))?;
        if n == 0 {
            return Self::new(vec![vals[0]], lo, hi);
        }
        let mut coeffs = vec![C::new(0.0, 0.0); n + 1];
        for (k, ck) in coeffs.iter_mut().enumerate() {
            let mut s = C::new(0.0, 0.0);
            for (j, v) in vals.iter().enumerate() {
                let w = if j == 0 || j == n { 0.5 } else { 1.0 };
                s += v * (w * ((j * k) as f64 * PI / n as f64).cos());
            }
            let w = if k == 0 || k == n { 0.5 } else { 1.0 };
            *ck = s * (2.0 * w / n as f64);
        }
        Self::new(coeffs, lo, hi)
    }

    /// Interpolates at the `degree + 1` interior Chebyshev-Gauss points.
    pub fn interpolate_gauss<F: FnMut(f64) -> C>(
        mut sampler: F,
        degree: usize,
        lo: f64,
        hi: f64,
    ) -> Result<Self> {
        let nodes = gauss_nodes(degree + 1, lo, hi)?;
        let vals: Vec<C> = nodes.iter().map(|&y| sampler(y)).collect();
        Self::from_gauss_values(&vals, lo, hi)
    }

    /// Coefficients from values at `cos((j + 1/2) pi / m)`, `j = 0..m`.
    pub fn from_gauss_values(vals: &[C], lo: f64, hi: f64) -> Result<Self> {
        let m = vals.len();
        if m == 0 {
            return Err(Error::Domain("no values".into()));
        }
        let mut coeffs = vec![C::new(0.0, 0.0); m];
        for (k, ck) in coeffs.iter_mut().enumerate() {
            let mut s = C::new(0.0, 0.0);
            for (j, v) in vals.iter().enumerate() {
                s += v * ((k as f64) * (j as f64 + 0.5) * PI / m as f64).cos();
            }
            *ck = s * (if k == 0 { 1.0 } else { 2.0 } / m as f64);
        }
        Self::new(coeffs, lo, hi)
    }

    /// Taylor coefficients `s^(k)(y0) / k!` for `k = 0..=order`.
    pub fn taylor_at(&self, y0: f64, order: usize) -> Vec<C> {
        let mut out = Vec::with_capacity(order + 1);
        let mut d = self.clone();
        let mut fact = 1.0;
        for k in 0..=order {
            if k > 0 {
                fact *= k as f64;
                d = d.derivative();
            }
            out.push(d.eval_unchecked(y0) / fact);
        }
        out
    }

    /// Series `d` with `s(y) - s(y0) = (y - y0) d(y)`, by synthetic division in the
    /// Chebyshev basis.
    pub fn divided_difference(&self, y0: f64) -> ChebSeries {
        let a = &self.coeffs;
        let n = a.len() - 1;
        let zero = C::new(0.0, 0.0);
        if n == 0 {
            return Self { coeffs: vec![zero], lo: self.lo, hi: self.hi };
        }
        let x0 = self.to_unit(y0);
        let mut b = vec![zero; n + 1];
        for k in (2..=n).rev() {
            let bk1 = if k < n { b[k + 1] } else { zero };
            b[k - 1] = (a[k] + b[k] * x0) * 2.0 - bk1;
        }
        let b2 = if n >= 2 { b[2] } else { zero };
        b[0] = a[1] + b[1] * x0 - b2 * 0.5;
        b.truncate(n);
        let scale = 2.0 / (self.hi - self.lo);
        for c in b.iter_mut() {
            *c *= scale;
        }
        Self { coeffs: b, lo: self.lo, hi: self.hi }
    }

    /// Largest coefficient magnitude among the last `tail` coefficients.
    pub fn tail_magnitude(&self, tail: usize) -> f64 {
        let n = self.coeffs.len();
        self.coeffs[n.saturating_sub(tail)..]
            .iter()
            .map(|c| c.norm())
            .fold(0.0, f64::max)
    }

    pub fn scaled(&self, s: C) -> ChebSeries {
        Self { coeffs: self.coeffs.iter().map(|c| c * s).collect(), lo: self.lo, hi: self.hi }
    }

    /// Sum of two series on the same interval.
    pub fn add(&self, other: &ChebSeries) -> Result<ChebSeries> {
        if self.lo != other.lo || self.hi != other.hi {
            return Err(Error::Domain("series on different intervals".into()));
        }
        let n = self.coeffs.len().max(other.coeffs.len());
        let get = |v: &[C], k: usize| if k < v.len() { v[k] } else { C::new(0.0, 0.0) };
        let coeffs = (0..n).map(|k| get(&self.coeffs, k) + get(&other.coeffs, k)).collect();
        Ok(Self { coeffs, lo: self.lo, hi: self.hi })
    }
}

pub fn clenshaw(coeffs: &[C], x: f64) -> C {
    let mut b1 = C::new(0.0, 0.0);
    let mut b2 = C::new(0.0, 0.0);
    for c in coeffs.iter().skip(1).rev() {
        let b0 = c + b1 * (2.0 * x) - b2;
        b2 = b1;
        b1 = b0;
    }
    coeffs[0] + b1 * x - b2
}

/// Gauss-Lobatto points `cos(j pi / n)` mapped to `[lo, hi]`, descending.
pub fn lobatto_nodes(n: usize, lo: f64, hi: f64) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::Domain("Lobatto grid needs n >= 1".into()));
    }
    let (m, h) = (0.5 * (lo + hi), 0.5 * (hi - lo));
    Ok((0..=n).map(|j| m + h * (j as f64 * PI / n as f64).cos()).collect())
}

/// Differentiation matrix on the points `cos(j pi / n)` of `[-1, 1]`, row-major.
pub fn lobatto_diff_matrix(n: usize) -> Vec<f64> {
    let x: Vec<f64> = (0..=n).map(|j| (j as f64 * PI / n as f64).cos()).collect();
    let c = |j: usize| {
        let s = if j == 0 || j == n { 2.0 } else { 1.0 };
        if j % 2 == 0 {
            s
        } else {
            -s
        }
    };
    let m = n + 1;
    let mut d = vec![0.0; m * m];
    for i in 0..m {
        let mut row = 0.0;
        for j in 0..m {
            if i != j {
                let v = c(i) / c(j) / (x[i] - x[j]);
                d[i * m + j] = v;
                row += v;
            }
        }
        // negative-sum trick for the diagonal
        d[i * m + i] = -row;
    }
    d
}

/// Barycentric interpolation row on the points `cos(j pi / n)` at `x`.
pub fn lobatto_interp_row(n: usize, x: f64) -> Vec<f64> {
    let nodes: Vec<f64> = (0..=n).map(|j| (j as f64 * PI / n as f64).cos()).collect();
    let mut r = vec![0.0; n + 1];
    if let Some(j) = nodes.iter().position(|&z| z == x) {
        r[j] = 1.0;
        return r;
    }
    let mut sum = 0.0;
    for (j, z) in nodes.iter().enumerate() {
        let w = if j == 0 || j == n { 0.5 } else { 1.0 } * if j % 2 == 0 { 1.0 } else { -1.0 };
        r[j] = w / (x - z);
        sum += r[j];
    }
    r.iter_mut().for_each(|v| *v /= sum);
    r
}

/// Chebyshev-Gauss points `cos((j + 1/2) pi / m)` mapped to `[lo, hi]`, descending.
pub fn gauss_nodes(m: usize, lo: f64, hi: f64) -> Result<Vec<f64>> {
    if m == 0 {
        return Err(Error::Domain("Gauss grid needs m >= 1".into()));
    }
    let (c, h) = (0.5 * (lo + hi), 0.5 * (hi - lo));
    Ok((0..m).map(|j| c + h * ((j as f64 + 0.5) * PI / m as f64).cos()).collect())
}

/// Values and first two derivatives (in `x`) of `T_0..=T_n` at `x`.
pub fn basis_with_derivatives(n: usize, x: f64) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let mut t = vec![0.0; n + 1];
    let mut d = vec![0.0; n + 1];
    let mut dd = vec![0.0; n + 1];
    t[0] = 1.0;
    if n >= 1 {
        t[1] = x;
        d[1] = 1.0;
    }
    for k in 2..=n {
        t[k] = 2.0 * x * t[k - 1] - t[k - 2];
        d[k] = 2.0 * t[k - 1] + 2.0 * x * d[k - 1] - d[k - 2];
        dd[k] = 4.0 * d[k - 1] + 2.0 * x * dd[k - 1] - dd[k - 2];
    }
    (t, d, dd)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(x: f64) -> C {
        C::new(x, 0.0)
    }

    #[test]
    fn clenshaw_matches_closed_form() {
        let s = ChebSeries::new(vec![c(1.0), c(2.0), c(3.0)], -1.0, 1.0).unwrap();
        for &x in &[-1.0, -0.3, 0.0, 0.7, 1.0] {
            let expect = 1.0 + 2.0 * x + 3.0 * (2.0 * x * x - 1.0);
            assert!((s.eval(x).unwrap().re - expect).abs() < 1e-14);
        }
    }

    #[test]
    fn outside_domain_is_rejected() {
        let s = ChebSeries::new(vec![c(1.0)], 0.0, 1.0).unwrap();
        assert!(s.eval(1.1).is_err());
        assert!(s.eval(f64::NAN).is_err());
    }

    #[test]
    fn interpolation_of_exponential() {
        let s = ChebSeries::interpolate(|y| c((2.0 * y).exp()), 30, 0.0, 1.0).unwrap();
        let d = s.derivative();
        let i = s.integral();
        for &y in &[0.0, 0.13, 0.5, 0.91, 1.0] {
            assert!((s.eval(y).unwrap().re - (2.0 * y).exp()).abs() < 1e-13);
            assert!((d.eval(y).unwrap().re - 2.0 * (2.0 * y).exp()).abs() < 1e-11);
            assert!((i.eval(y).unwrap().re - 0.5 * ((2.0 * y).exp() - 1.0)).abs() < 1e-13);
        }
    }

    #[test]
    fn gauss_interpolation_reproduces_polynomial() {
        let f = |y: f64| C::new(y.powi(5) - y, y * y);
        let s = ChebSeries::interpolate_gauss(f, 5, -1.0, 0.0).unwrap();
        for &y in &[-1.0, -0.4, 0.0] {
            assert!((s.eval(y).unwrap() - f(y)).norm() < 1e-14);
        }
    }

    #[test]
    fn taylor_coefficients() {
        let s = ChebSeries::interpolate(|y| c(y.sin()), 25, -1.0, 1.0).unwrap();
        let t = s.taylor_at(1.0, 3);
        assert!((t[0].re - 1f64.sin()).abs() < 1e-14);
        assert!((t[1].re - 1f64.cos()).abs() < 1e-12);
        assert!((t[2].re + 0.5 * 1f64.sin()).abs() < 1e-10);
    }

    #[test]
    fn divided_difference_at_endpoint() {
        let f = |y: f64| C::new((3.0 * y).cos(), y.exp());
        let df1 = C::new(-3.0 * 3f64.sin(), 1f64.exp());
        let s = ChebSeries::interpolate(f, 40, -1.0, 1.0).unwrap();
        let d = s.divided_difference(1.0);
        for &u in &[1e-12, 1e-6, 1e-2, 0.5, 1.9] {
            let y = 1.0 - u;
            let got = d.eval(y).unwrap();
            if u < 1e-5 {
                assert!((got - df1).norm() < 10.0 * u + 1e-11, "u={u}");
            } else {
                assert!((got - (f(y) - f(1.0)) / (y - 1.0)).norm() < 1e-11, "u={u}");
            }
        }
    }

    #[test]
    fn basis_derivatives() {
        let (t, d, dd) = basis_with_derivatives(4, 0.3);
        // T_4 = 8x^4 - 8x^2 + 1
        assert!((t[4] - (8.0 * 0.3f64.powi(4) - 8.0 * 0.09 + 1.0)).abs() < 1e-14);
        assert!((d[4] - (32.0 * 0.027 - 16.0 * 0.3)).abs() < 1e-13);
        assert!((dd[4] - (96.0 * 0.09 - 16.0)).abs() < 1e-12);
    }
}
