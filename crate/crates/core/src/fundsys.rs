//! Approximate fundamental systems of the linearized operator and the glued frame.
//!
//! Left solutions on `(-1, 0]` (with `t = 1 + y`):
//! `1 + tP1`, `i + tP2`, `1/t + tP3`, `i/t + tP4`.
//! Right solutions on `[0, 1)` (with `u = 1 - y`, `s = 3 - 4/(p-1)`):
//! `b(1 + k u) + u^2 P` for `b = 1, i`, and
//! `b e^{i phi} u^s (1 + k3 u + u^2 P) + b e^{-i phi} u^{s+4} Q` for `b = 1, i`.
//! The polynomial corrections are least-squares fits of the linearized equation at
//! a fixed reference `(alpha, p)`; the prefactors carry the `(a, p)` dependence.

use crate::cheb::{basis_with_derivatives, gauss_nodes, ChebSeries};
use crate::error::{Error, Result};
use crate::profile_eq::{nonlinear_weights, EqConsts, FStar, Params, ProfileFn, I};
use nalgebra::{DMatrix, DVector, Matrix4};
use num_complex::Complex64 as C;
use serde::{Deserialize, Serialize};

const ZERO: C = C { re: 0.0, im: 0.0 };
const ONE: C = C { re: 1.0, im: 0.0 };

/// Value and first two derivatives.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Jet {
    pub v: C,
    pub d: C,
    pub dd: C,
}

impl Jet {
    fn scale(self, s: C) -> Jet {
        Jet { v: self.v * s, d: self.d * s, dd: self.dd * s }
    }
}

/// `phi(y, alpha) = -2 alpha/u^2 + 2 alpha/u - (2/alpha) ln u`.
pub fn phase_phi(y: f64, alpha: f64) -> Result<f64> {
    if !(y < 1.0) {
        return Err(Error::SingularPoint(format!("phase undefined at y = {y}")));
    }
    let u = 1.0 - y;
    Ok(-2.0 * alpha / (u * u) + 2.0 * alpha / u - (2.0 / alpha) * u.ln())
}

/// `u^3 phi'` and `u^4 phi''`.
fn phase_derivs_scaled(u: f64, alpha: f64) -> (f64, f64) {
    let d1 = -4.0 * alpha + 2.0 * alpha * u + (2.0 / alpha) * u * u;
    let d2 = -12.0 * alpha + 4.0 * alpha * u + (2.0 / alpha) * u * u;
    (d1, d2)
}

/// `phi'(y, alpha)`.
pub fn phase_phi_prime(y: f64, alpha: f64) -> f64 {
    let u = 1.0 - y;
    phase_derivs_scaled(u, alpha).0 / (u * u * u)
}

/// First-order coefficient of the regular right solutions.
pub fn k_regular(alpha: f64, p: f64) -> C {
    C::new(1.0 / (p - 1.0), 0.5 / alpha)
}

/// First-order coefficient of the oscillatory right solutions.
///
/// Balancing the `u^0` terms gives `3/2 - 1/(p-1) - i/(2 alpha)`; the published
/// `1 - i/(2 alpha)` is its value at `p = 3`.
pub fn k_oscillatory(alpha: f64, p: f64) -> C {
    C::new(1.5 - 1.0 / (p - 1.0), -0.5 / alpha)
}

/// Reference operator at which the corrections are generated.
pub struct Reference {
    pub alpha: f64,
    pub p: f64,
    k: EqConsts,
    base: FStar,
}

impl Reference {
    pub fn new(prm: Params, pstar: &ChebSeries) -> Result<Self> {
        Ok(Self { alpha: prm.alpha, p: prm.p, k: EqConsts::new(prm.alpha, prm.p), base: FStar::new(prm, pstar)? })
    }

    /// `(p+1)/2 |f_*|^{p-1}` and `(p-1)/2 |f_*|^{p-3} f_*^2` without the `u^-2`.
    fn ab(&self, y: f64) -> Result<(f64, C)> {
        nonlinear_weights(self.p, self.base.value(y))
    }

    /// Applies the reference linearized operator to a jet (for checks).
    pub fn apply(&self, y: f64, f: Jet) -> Result<C> {
        let u = 1.0 - y;
        let (a, b) = self.ab(y)?;
        Ok(f.dd + self.k.p0(y) * f.d + (self.k.q0(y) + a / (u * u)) * f.v + b / (u * u) * f.v.conj())
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct Degrees {
    pub left: usize,
    pub right_p: usize,
    pub right_q: usize,
}

impl Default for Degrees {
    fn default() -> Self {
        Self { left: 16, right_p: 30, right_q: 26 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FitReport {
    /// Largest weighted residual over the fitting nodes.
    pub residual: f64,
    /// Ratio of extreme singular values of the column-scaled design matrix.
    pub condition: f64,
}

/// Least squares on real unknowns; `rows` are real rows of the design matrix.
fn solve_ls(a: DMatrix<f64>, b: DVector<f64>) -> Result<(DVector<f64>, f64)> {
    let ncol = a.ncols();
    let mut a = a;
    let scales: Vec<f64> = (0..ncol)
        .map(|k| {
            let n = a.column(k).norm();
            if n > 0.0 {
                1.0 / n
            } else {
                1.0
            }
        })
        .collect();
    for k in 0..ncol {
        let s = scales[k];
        a.column_mut(k).iter_mut().for_each(|v| *v *= s);
    }
    let svd = a.svd(true, true);
    let sv = &svd.singular_values;
    let condition = sv.max() / sv.min();
    if !condition.is_finite() || condition > 1e14 {
        return Err(Error::Fit(format!("rank-deficient collocation, condition {condition:e}")));
    }
    let mut x = svd.solve(&b, 0.0).map_err(|e| Error::Fit(e.to_string()))?;
    for k in 0..ncol {
        x[k] *= scales[k];
    }
    Ok((x, condition))
}

fn series_from(x: &DVector<f64>, offset: usize, deg: usize, lo: f64, hi: f64) -> Result<ChebSeries> {
    let c = (0..=deg).map(|n| C::new(x[offset + 2 * n], x[offset + 2 * n + 1])).collect();
    ChebSeries::new(c, lo, hi)
}

fn jet_of(s: &ChebSeries, d1: &ChebSeries, d2: &ChebSeries, y: f64) -> Jet {
    Jet { v: s.eval_unchecked(y), d: d1.eval_unchecked(y), dd: d2.eval_unchecked(y) }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct Poly {
    s: ChebSeries,
    d1: ChebSeries,
    d2: ChebSeries,
}

impl Poly {
    fn new(s: ChebSeries) -> Self {
        let d1 = s.derivative();
        let d2 = d1.derivative();
        Self { s, d1, d2 }
    }
    fn jet(&self, y: f64) -> Jet {
        jet_of(&self.s, &self.d1, &self.d2, y)
    }
}

/// Left system; the corrections live on `[-1, 0]`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LeftSystem {
    polys: Vec<Poly>,
    pub report: Vec<FitReport>,
}

const LEFT_LEAD: [(C, bool); 4] =
    [(ONE, false), (I, false), (ONE, true), (I, true)];

impl LeftSystem {
    pub fn correction(&self, j: usize) -> &ChebSeries {
        &self.polys[j].s
    }

    /// Jet of `f_{L,j+1}` at `y in (-1, 0]`.
    pub fn column(&self, j: usize, y: f64) -> Jet {
        let t = 1.0 + y;
        let pj = self.polys[j].jet(y);
        let (beta, singular) = LEFT_LEAD[j];
        let mut f = Jet {
            v: t * pj.v,
            d: pj.v + t * pj.d,
            dd: 2.0 * pj.d + t * pj.dd,
        };
        if singular {
            f.v += beta / t;
            f.d -= beta / (t * t);
            f.dd += 2.0 * beta / (t * t * t);
        } else {
            f.v += beta;
        }
        f
    }

    /// `(1+y) L f_{L,j+1}`.
    pub fn weighted_residual(&self, reference: &Reference, j: usize, y: f64) -> Result<C> {
        let p = self.polys[j].jet(y);
        let (beta, singular) = LEFT_LEAD[j];
        left_row(reference, y, p, beta, singular)
    }
}

/// `t L(lead + t P)` evaluated without the `1/t` cancellations.
fn left_row(r: &Reference, y: f64, p: Jet, beta: C, singular: bool) -> Result<C> {
    let t = 1.0 + y;
    let u = 1.0 - y;
    let k = &r.k;
    let ia = I * k.alpha;
    let u3 = u * u * u;
    let p0r = (4.0 * ia - 2.0 * ia * u - k.c1 * (u * u)) / u3;
    let q0r = (k.kappa + k.c2 * u - k.c * (u * u)) / u3;
    let (a, b) = r.ab(y)?;
    let (a, b) = (a / (u * u), b / (u * u));
    // t L(t P)
    let mut row = t * t * p.dd + 4.0 * t * p.d + 2.0 * p.v + t * p0r * (p.v + t * p.d)
        - k.c * t * p.v
        + t * t * (q0r + a) * p.v
        + t * t * b * p.v.conj();
    if singular {
        row += -(2.0 * ia / u3 - k.c / u) * beta + (q0r + a) * beta + b * beta.conj();
    } else {
        row += (-k.c + t * (q0r + a)) * beta + t * b * beta.conj();
    }
    Ok(row)
}

/// Number of least-squares nodes per unknown polynomial coefficient.
const OVERSAMPLE: usize = 4;

pub fn build_left_system(reference: &Reference, degree: usize) -> Result<LeftSystem> {
    if degree < 1 {
        return Err(Error::Config("left degree must be at least 1".into()));
    }
    let nodes = gauss_nodes(OVERSAMPLE * (degree + 1), -1.0, 0.0)?;
    let ncol = 2 * (degree + 1);
    let mut polys = Vec::with_capacity(4);
    let mut report = Vec::with_capacity(4);
    for &(beta, singular) in LEFT_LEAD.iter() {
        let mut a = DMatrix::zeros(2 * nodes.len(), ncol);
        let mut b = DVector::zeros(2 * nodes.len());
        for (m, &y) in nodes.iter().enumerate() {
            let x = 2.0 * y + 1.0;
            let (tv, td, tdd) = basis_with_derivatives(degree, x);
            for n in 0..=degree {
                for (comp, unit) in [(0usize, ONE), (1, I)] {
                    let pj = Jet { v: unit * tv[n], d: unit * (2.0 * td[n]), dd: unit * (4.0 * tdd[n]) };
                    let val = left_row(reference, y, pj, ZERO, singular)?;
                    a[(2 * m, 2 * n + comp)] = val.re;
                    a[(2 * m + 1, 2 * n + comp)] = val.im;
                }
            }
            let rhs = left_row(reference, y, Jet::default(), beta, singular)?;
            b[2 * m] = -rhs.re;
            b[2 * m + 1] = -rhs.im;
        }
        let (x, condition) = solve_ls(a.clone(), b.clone())?;
        let residual = (a * &x - b)
            .as_slice()
            .chunks(2)
            .map(|c| c[0].hypot(c[1]))
            .fold(0.0, f64::max);
        polys.push(Poly::new(series_from(&x, 0, degree, -1.0, 0.0)?));
        report.push(FitReport { residual, condition });
    }
    Ok(LeftSystem { polys, report })
}

/// Right system; the corrections live on `[0, 1]`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RightSystem {
    p: Vec<Poly>,
    q: Vec<Poly>,
    pub report: Vec<FitReport>,
}

const RIGHT_LEAD: [C; 4] = [ONE, I, ONE, I];

/// Scaled operator pieces for the oscillatory ansatz at the reference.
struct OscRows {
    /// `u^3 (2 Theta' + p0)`, `u^3 c_v`, `u^3 (2 Theta_m' + p0)`, `u^6 c_m`
    v1: C,
    v0: C,
    w1: C,
    w0: C,
    /// `(p-1)/2 |f_*|^{p-3} f_*^2`
    b: C,
}

fn osc_rows(r: &Reference, y: f64) -> Result<OscRows> {
    let u = 1.0 - y;
    let t = 1.0 + y;
    let k = &r.k;
    let al = r.alpha;
    let s = 3.0 - 4.0 / (r.p - 1.0);
    let (a, b) = r.ab(y)?;
    let (ph1, ph2) = phase_derivs_scaled(u, al);
    let th1 = I * ph1 - s * u * u; // u^3 Theta'
    let thm1 = -I * ph1 - s * u * u; // u^3 Theta_m'
    let thm2 = -I * ph2 - s * u * u; // u^4 Theta_m''
    let p0u3 = k.p0_u3(u, t);
    let q0u3 = k.q0_u3(u, t);
    let v1 = th1 + (-3.0 * u * u + 2.0 * u * u * u / t);
    let v0 = -2.0 * I * al + (2.0 * s - 4.0 * I / al) * u + (2.0 / t) * th1 + q0u3 + u * a;
    let w1 = thm1 + (thm1 + p0u3);
    let w0 = u * u * thm2 + thm1 * (thm1 + p0u3) + u * u * u * q0u3 + u.powi(4) * a;
    Ok(OscRows { v1, v0, w1, w0, b })
}

/// Weighted residual rows `u^2 E_+` and `u^2 E_-` for `f = e^Theta v + e^{Theta_m} u^4 q`
/// given jets of `v` and `q`.
fn osc_row(o: &OscRows, y: f64, v: Jet, q: Jet) -> (C, C) {
    let u = 1.0 - y;
    // w = u^4 q
    let u2 = u * u;
    let (w_d_over_u, w_dd) = (-4.0 * u2 * q.v + u2 * u * q.d, 12.0 * u2 * q.v - 8.0 * u2 * u * q.d + u2 * u2 * q.dd);
    let w_v = u2 * u2 * q.v;
    let plus = (u * u2 * v.dd + o.v1 * v.d + o.v0 * v.v) / u + o.b * w_v.conj() / u;
    let minus = u2 * w_dd + o.w1 * w_d_over_u + o.w0 * q.v + o.b * v.v.conj();
    (plus, minus)
}

/// `u^2 L(b(1 + k u) + u^2 P)` at the reference.
fn regular_row(r: &Reference, y: f64, beta: C, kk: C, p: Jet) -> Result<C> {
    let u = 1.0 - y;
    let t = 1.0 + y;
    let (a, b) = r.ab(y)?;
    let f = Jet {
        v: beta * (1.0 + kk * u) + u * u * p.v,
        d: -beta * kk - 2.0 * u * p.v + u * u * p.d,
        dd: 2.0 * p.v - 4.0 * u * p.d + u * u * p.dd,
    };
    let u3l = u * u * u * f.dd + r.k.p0_u3(u, t) * f.d + (r.k.q0_u3(u, t) + u * a) * f.v + u * b * f.v.conj();
    Ok(u3l / u)
}

pub fn build_right_system(reference: &Reference, deg_p: usize, deg_q: usize) -> Result<RightSystem> {
    if deg_p < 1 || deg_q < 1 {
        return Err(Error::Config("right degrees must be at least 1".into()));
    }
    let (al, p) = (reference.alpha, reference.p);
    let kk = k_regular(al, p);
    let k3 = k_oscillatory(al, p);
    let mut polys_p = Vec::with_capacity(4);
    let mut polys_q = Vec::with_capacity(2);
    let mut report = Vec::with_capacity(4);
    // regular columns
    let nodes = gauss_nodes(OVERSAMPLE * (deg_p + 1), 0.0, 1.0)?;
    let basis: Vec<_> = nodes.iter().map(|&y| basis_with_derivatives(deg_p.max(deg_q), 2.0 * y - 1.0)).collect();
    for &beta in &RIGHT_LEAD[..2] {
        let ncol = 2 * (deg_p + 1);
        let mut a = DMatrix::zeros(2 * nodes.len(), ncol);
        let mut b = DVector::zeros(2 * nodes.len());
        for (m, &y) in nodes.iter().enumerate() {
            let (tv, td, tdd) = &basis[m];
            for n in 0..=deg_p {
                for (comp, unit) in [(0usize, ONE), (1, I)] {
                    let pj = Jet { v: unit * tv[n], d: unit * (2.0 * td[n]), dd: unit * (4.0 * tdd[n]) };
                    let val = regular_row(reference, y, ZERO, ZERO, pj)?;
                    a[(2 * m, 2 * n + comp)] = val.re;
                    a[(2 * m + 1, 2 * n + comp)] = val.im;
                }
            }
            let rhs = regular_row(reference, y, beta, kk, Jet::default())?;
            b[2 * m] = -rhs.re;
            b[2 * m + 1] = -rhs.im;
        }
        let (x, condition) = solve_ls(a.clone(), b.clone())?;
        let residual = (a * &x - b).as_slice().chunks(2).map(|c| c[0].hypot(c[1])).fold(0.0, f64::max);
        polys_p.push(Poly::new(series_from(&x, 0, deg_p, 0.0, 1.0)?));
        report.push(FitReport { residual, condition });
    }
    // oscillatory columns
    let rows: Vec<OscRows> = nodes.iter().map(|&y| osc_rows(reference, y)).collect::<Result<_>>()?;
    for &beta in &RIGHT_LEAD[2..] {
        let np = 2 * (deg_p + 1);
        let ncol = np + 2 * (deg_q + 1);
        let mut a = DMatrix::zeros(4 * nodes.len(), ncol);
        let mut b = DVector::zeros(4 * nodes.len());
        for (m, &y) in nodes.iter().enumerate() {
            let u = 1.0 - y;
            let (tv, td, tdd) = &basis[m];
            let put = |a: &mut DMatrix<f64>, col: usize, (e1, e2): (C, C)| {
                a[(4 * m, col)] = e1.re;
                a[(4 * m + 1, col)] = e1.im;
                a[(4 * m + 2, col)] = e2.re;
                a[(4 * m + 3, col)] = e2.im;
            };
            for n in 0..=deg_p {
                for (comp, unit) in [(0usize, ONE), (1, I)] {
                    let c = beta * unit;
                    // v = c u^2 T_n
                    let (tn, dn, ddn) = (tv[n], 2.0 * td[n], 4.0 * tdd[n]);
                    let v = Jet {
                        v: c * (u * u * tn),
                        d: c * (-2.0 * u * tn + u * u * dn),
                        dd: c * (2.0 * tn - 4.0 * u * dn + u * u * ddn),
                    };
                    put(&mut a, 2 * n + comp, osc_row(&rows[m], y, v, Jet::default()));
                }
            }
            for n in 0..=deg_q {
                for (comp, unit) in [(0usize, ONE), (1, I)] {
                    let c = beta * unit;
                    let q = Jet { v: c * tv[n], d: c * (2.0 * td[n]), dd: c * (4.0 * tdd[n]) };
                    put(&mut a, np + 2 * n + comp, osc_row(&rows[m], y, Jet::default(), q));
                }
            }
            let v0 = Jet { v: beta * (1.0 + k3 * u), d: -beta * k3, dd: ZERO };
            let (e1, e2) = osc_row(&rows[m], y, v0, Jet::default());
            b[4 * m] = -e1.re;
            b[4 * m + 1] = -e1.im;
            b[4 * m + 2] = -e2.re;
            b[4 * m + 3] = -e2.im;
        }
        let (x, condition) = solve_ls(a.clone(), b.clone())?;
        let residual = (a * &x - b).as_slice().chunks(2).map(|c| c[0].hypot(c[1])).fold(0.0, f64::max);
        polys_p.push(Poly::new(series_from(&x, 0, deg_p, 0.0, 1.0)?));
        polys_q.push(Poly::new(series_from(&x, np, deg_q, 0.0, 1.0)?));
        report.push(FitReport { residual, condition });
    }
    Ok(RightSystem { p: polys_p, q: polys_q, report })
}

impl RightSystem {
    /// The corrections `P_{R,j}` (`j = 0..4`); the oscillatory columns multiply
    /// them by the leading factor `b` as in `b e^{i phi} u^s (1 + k3 u + u^2 P)`.
    pub fn correction_p(&self, j: usize) -> &ChebSeries {
        &self.p[j].s
    }

    pub fn correction_q(&self, j: usize) -> &ChebSeries {
        &self.q[j].s
    }

    /// Weighted residual rows of column `j` against the reference operator:
    /// `u^2 L f` for the regular columns and `(u^2 E_+, u^2 E_-)` otherwise.
    pub fn weighted_residual(&self, reference: &Reference, j: usize, y: f64) -> Result<(C, C)> {
        let (al, p) = (reference.alpha, reference.p);
        if j < 2 {
            let v = regular_row(reference, y, RIGHT_LEAD[j], k_regular(al, p), self.p[j].jet(y))?;
            return Ok((v, ZERO));
        }
        let u = 1.0 - y;
        let k3 = k_oscillatory(al, p);
        let beta = RIGHT_LEAD[j];
        let pj = self.p[j].jet(y).scale(beta);
        let v = Jet {
            v: beta * (1.0 + k3 * u) + u * u * pj.v,
            d: -beta * k3 - 2.0 * u * pj.v + u * u * pj.d,
            dd: 2.0 * pj.v - 4.0 * u * pj.d + u * u * pj.dd,
        };
        Ok(osc_row(&osc_rows(reference, y)?, y, v, self.q[j - 2].jet(y).scale(beta)))
    }

    /// Jet of `f_{R,j+1}(y, a, p)` for `y in [0, 1)`; `phase` replaces `e^{i phi}`
    /// when given (used by the determinant decomposition).
    pub fn column(&self, j: usize, y: f64, prm: &Params, phase: Option<C>) -> Jet {
        let u = 1.0 - y;
        let (al, p) = (prm.alpha, prm.p);
        let pj = self.p[j].jet(y);
        if j < 2 {
            let beta = RIGHT_LEAD[j];
            let kk = k_regular(al, p);
            return Jet {
                v: beta * (1.0 + kk * u) + u * u * pj.v,
                d: -beta * kk - 2.0 * u * pj.v + u * u * pj.d,
                dd: 2.0 * pj.v - 4.0 * u * pj.d + u * u * pj.dd,
            };
        }
        let beta = RIGHT_LEAD[j];
        let pj = pj.scale(beta);
        let k3 = k_oscillatory(al, p);
        let s = 3.0 - 4.0 / (p - 1.0);
        let (ph1, ph2) = phase_derivs_scaled(u, al);
        let (ph1, ph2) = (ph1 / (u * u * u), ph2 / (u * u * u * u));
        let (e_plus, e_minus) = match phase {
            Some(z) => (z, z.conj()),
            None => {
                let e = C::from_polar(1.0, phase_phi(y, al).unwrap_or(0.0));
                (e, e.conj())
            }
        };
        let us = u.powf(s);
        // part 1: e^{i phi} u^s V with V = b(1 + k3 u) + u^2 P
        let v = Jet {
            v: beta * (1.0 + k3 * u) + u * u * pj.v,
            d: -beta * k3 - 2.0 * u * pj.v + u * u * pj.d,
            dd: 2.0 * pj.v - 4.0 * u * pj.d + u * u * pj.dd,
        };
        let th1 = I * ph1 - s / u;
        let th2 = I * ph2 - s / (u * u);
        let g1 = e_plus * us;
        let part1 = Jet {
            v: g1 * v.v,
            d: g1 * (v.d + th1 * v.v),
            dd: g1 * (v.dd + 2.0 * th1 * v.d + (th2 + th1 * th1) * v.v),
        };
        // part 2: e^{-i phi} u^{s+4} Q
        let qj = self.q[j - 2].jet(y).scale(beta);
        let u2 = u * u;
        let w = Jet {
            v: u2 * u2 * qj.v,
            d: -4.0 * u2 * u * qj.v + u2 * u2 * qj.d,
            dd: 12.0 * u2 * qj.v - 8.0 * u2 * u * qj.d + u2 * u2 * qj.dd,
        };
        let tm1 = -I * ph1 - s / u;
        let tm2 = -I * ph2 - s / (u * u);
        let g2 = e_minus * us;
        let part2 = Jet {
            v: g2 * w.v,
            d: g2 * (w.d + tm1 * w.v),
            dd: g2 * (w.dd + 2.0 * tm1 * w.d + (tm2 + tm1 * tm1) * w.v),
        };
        Jet { v: part1.v + part2.v, d: part1.d + part2.d, dd: part1.dd + part2.dd }
    }
}

/// Left and right systems generated at one reference.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FundamentalSystem {
    pub left: LeftSystem,
    pub right: RightSystem,
    pub reference_alpha: f64,
    pub reference_p: f64,
    pub degrees: Degrees,
}

impl FundamentalSystem {
    pub fn build(reference: &Reference, degrees: Degrees) -> Result<Self> {
        Ok(Self {
            left: build_left_system(reference, degrees.left)?,
            right: build_right_system(reference, degrees.right_p, degrees.right_q)?,
            reference_alpha: reference.alpha,
            reference_p: reference.p,
            degrees,
        })
    }
}

/// Reference data at `(a, p) = (0, 3)`: the spectral `P_*` with its systems.
pub struct Standard {
    pub pstar: crate::fixpoint_solver::PstarSolution,
    pub reference: Reference,
    pub system: FundamentalSystem,
}

/// Degree of the spectral `P_*` used for the reference.
pub const PSTAR_DEGREE: usize = 50;

/// Builds the reference once per process.
pub fn standard() -> Result<&'static Standard> {
    static CELL: std::sync::OnceLock<std::result::Result<Standard, String>> = std::sync::OnceLock::new();
    let built = CELL.get_or_init(|| {
        let go = || -> Result<Standard> {
            let pstar = crate::fixpoint_solver::generate_pstar(3.0, PSTAR_DEGREE, None)?;
            let reference = Reference::new(Params::new(0.0, 3.0)?, &pstar.series)?;
            let system = FundamentalSystem::build(&reference, Degrees::default())?;
            Ok(Standard { pstar, reference, system })
        };
        go().map_err(|e| e.to_string())
    });
    built.as_ref().map_err(|e| Error::Fit(format!("reference system: {e}")))
}

fn frame_matrix(cols: &[Jet; 4]) -> (Matrix4<f64>, Matrix4<f64>) {
    let mut f = Matrix4::zeros();
    let mut fp = Matrix4::zeros();
    for (j, c) in cols.iter().enumerate() {
        f[(0, j)] = c.v.re;
        f[(1, j)] = c.v.im;
        f[(2, j)] = c.d.re;
        f[(3, j)] = c.d.im;
        fp[(0, j)] = c.d.re;
        fp[(1, j)] = c.d.im;
        fp[(2, j)] = c.dd.re;
        fp[(3, j)] = c.dd.im;
    }
    (f, fp)
}

/// Inverse after row and column equilibration.
pub fn scaled_inverse(m: &Matrix4<f64>) -> Option<Matrix4<f64>> {
    let mut dc = [1.0; 4];
    for j in 0..4 {
        let mx = (0..4).map(|i| m[(i, j)].abs()).fold(0.0, f64::max);
        if mx == 0.0 || !mx.is_finite() {
            return None;
        }
        dc[j] = 1.0 / mx;
    }
    let mut g = *m;
    for j in 0..4 {
        for i in 0..4 {
            g[(i, j)] *= dc[j];
        }
    }
    let mut dr = [1.0; 4];
    for i in 0..4 {
        let mx = (0..4).map(|j| g[(i, j)].abs()).fold(0.0, f64::max);
        if mx == 0.0 {
            return None;
        }
        dr[i] = 1.0 / mx;
        for j in 0..4 {
            g[(i, j)] *= dr[i];
        }
    }
    let gi = g.lu().try_inverse()?;
    let mut out = gi;
    for i in 0..4 {
        for j in 0..4 {
            out[(i, j)] = dc[i] * gi[(i, j)] * dr[j];
        }
    }
    Some(out)
}

#[derive(Clone, Copy, Debug)]
pub struct FrameEval {
    pub f: Matrix4<f64>,
    pub fprime: Matrix4<f64>,
    pub det: f64,
    pub columns: [Jet; 4],
}

/// `F(y, a, p)` built from a fundamental system.
#[derive(Clone, Debug)]
pub struct Frame<'a> {
    pub sys: &'a FundamentalSystem,
    pub prm: Params,
    pub m: Matrix4<f64>,
}

fn params_check(y: f64) -> Result<()> {
    if !(y > -1.0 && y < 1.0) {
        return Err(Error::SingularPoint(format!("frame undefined at y = {y}")));
    }
    Ok(())
}

/// `M(a, p) = F_L(0)^{-1} F_R(0, a, p)`.
pub fn connection_matrix(sys: &FundamentalSystem, prm: &Params) -> Result<Matrix4<f64>> {
    let l: [Jet; 4] = std::array::from_fn(|j| sys.left.column(j, 0.0));
    let r: [Jet; 4] = std::array::from_fn(|j| sys.right.column(j, 0.0, prm, None));
    let (fl, _) = frame_matrix(&l);
    let (fr, _) = frame_matrix(&r);
    let inv = scaled_inverse(&fl).ok_or_else(|| {
        Error::Fit(format!("F_L(0) singular, condition {:e}", condition_number(&fl)))
    })?;
    Ok(inv * fr)
}

pub fn condition_number(m: &Matrix4<f64>) -> f64 {
    let sv = m.svd(false, false).singular_values;
    sv.max() / sv.min()
}

impl<'a> Frame<'a> {
    pub fn new(sys: &'a FundamentalSystem, prm: Params) -> Result<Self> {
        let m = connection_matrix(sys, &prm)?;
        Ok(Self { sys, prm, m })
    }

    /// Jets of `f_{L,j}` at `y <= 0`.
    pub fn left_columns(&self, y: f64) -> [Jet; 4] {
        std::array::from_fn(|j| self.sys.left.column(j, y))
    }

    pub fn right_columns(&self, y: f64) -> [Jet; 4] {
        std::array::from_fn(|j| self.sys.right.column(j, y, &self.prm, None))
    }

    /// Jets of the glued solutions `f_j`.
    pub fn columns(&self, y: f64) -> [Jet; 4] {
        if y <= 0.0 {
            let l = self.left_columns(y);
            std::array::from_fn(|k| {
                let mut s = Jet::default();
                for (lj, row) in l.iter().zip(0..4) {
                    let c = self.m[(row, k)];
                    s.v += lj.v * c;
                    s.d += lj.d * c;
                    s.dd += lj.dd * c;
                }
                s
            })
        } else {
            self.right_columns(y)
        }
    }

    pub fn eval(&self, y: f64) -> Result<FrameEval> {
        params_check(y)?;
        let columns = self.columns(y);
        let (f, fprime) = frame_matrix(&columns);
        Ok(FrameEval { f, fprime, det: f.determinant(), columns })
    }

    /// `F^{-1}(y)`; left of zero computed as `M^{-1} F_L^{-1}`.
    pub fn inverse(&self, y: f64) -> Result<Matrix4<f64>> {
        params_check(y)?;
        let inv = if y <= 0.0 {
            let (fl, _) = frame_matrix(&self.left_columns(y));
            let li = scaled_inverse(&fl);
            let mi = scaled_inverse(&self.m);
            match (li, mi) {
                (Some(li), Some(mi)) => Some(mi * li),
                _ => None,
            }
        } else {
            let (fr, _) = frame_matrix(&self.right_columns(y));
            scaled_inverse(&fr)
        };
        inv.ok_or_else(|| Error::Fit(format!("singular frame at y = {y}")))
    }

    /// `f_1 f_3' - f_1' f_3`.
    pub fn wronskian(&self, y: f64) -> Result<C> {
        params_check(y)?;
        let c = self.columns(y);
        Ok(c[0].v * c[2].d - c[0].d * c[2].v)
    }

    /// `(p1, p2, q1, q2)` from `A = -F' F^{-1}`.
    pub fn associated_coeffs(&self, y: f64) -> Result<[C; 4]> {
        if y == 0.0 {
            return Err(Error::SingularPoint("coefficients undefined at y = 0".into()));
        }
        let e = self.eval(y)?;
        let a = -e.fprime * self.inverse(y)?;
        // rows 2, 3 (0-based) hold the nontrivial part
        let g = |r: usize, c: usize| a[(r, c)];
        let p1 = C::new(0.5 * (g(2, 2) + g(3, 3)), 0.5 * (g(3, 2) - g(2, 3)));
        let p2 = C::new(0.5 * (g(2, 2) - g(3, 3)), 0.5 * (g(3, 2) + g(2, 3)));
        let q1 = C::new(0.5 * (g(2, 0) + g(3, 1)), 0.5 * (g(3, 0) - g(2, 1)));
        let q2 = C::new(0.5 * (g(2, 0) - g(3, 1)), 0.5 * (g(3, 0) + g(2, 1)));
        Ok([p1, p2, q1, q2])
    }

    /// `(P_dR, Q2, Q3)` of the determinant decomposition on `[0, 1)`.
    pub fn determinant_decomposition(&self, y: f64) -> Result<(f64, f64, f64)> {
        if !(0.0..1.0).contains(&y) {
            return Err(Error::Domain(format!("decomposition needs y in [0, 1), got {y}")));
        }
        let (al, p) = (self.prm.alpha, self.prm.p);
        let q = 4.0 / (p - 1.0);
        let scale = al.powi(6) * (1.0 - y).powf(2.0 * (4.0 - q));
        let det = |z: C| {
            let cols: [Jet; 4] = std::array::from_fn(|j| self.sys.right.column(j, y, &self.prm, Some(z)));
            frame_matrix(&cols).0.determinant() * scale
        };
        let pd = det(ONE);
        let q3 = det(I);
        let q2 = 0.5 * (det(C::new(1.0, 1.0)) - det(C::new(1.0, -1.0)));
        Ok((pd, q2, q3))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::profile_eq::J_STAR;

    #[test]
    fn phase_values() {
        assert_eq!(phase_phi(0.0, 0.7).unwrap(), 0.0);
        assert!((phase_phi(0.5, 1.0).unwrap() - (-4.0 + 2.0 * 2f64.ln())).abs() < 1e-14);
        assert!(phase_phi(1.0, 1.0).is_err());
        let u: f64 = 1e-4;
        assert!((phase_phi_prime(1.0 - u, 0.9) * u.powi(3) / (-3.6) - 1.0).abs() < 1e-3);
        // derivative consistency
        let h = 1e-6;
        let fd = (phase_phi(0.3 + h, 0.9).unwrap() - phase_phi(0.3 - h, 0.9).unwrap()) / (2.0 * h);
        assert!((fd - phase_phi_prime(0.3, 0.9)).abs() < 1e-6);
    }

    fn frame(a: f64, p: f64) -> Frame<'static> {
        Frame::new(&standard().unwrap().system, Params::new(a, p).unwrap()).unwrap()
    }

    #[test]
    fn fits_meet_residual_target() {
        let st = standard().unwrap();
        for j in 0..4 {
            for i in 0..=99 {
                let y = -0.99 + 0.99 * i as f64 / 99.0;
                assert!(st.system.left.weighted_residual(&st.reference, j, y).unwrap().norm() < 1e-6);
                let y = 0.99 * i as f64 / 99.0;
                let (r1, r2) = st.system.right.weighted_residual(&st.reference, j, y).unwrap();
                assert!(r1.norm().max(r2.norm()) < 1e-6, "column {j} at {y}");
            }
        }
    }

    #[test]
    fn leading_behaviour_of_columns() {
        let st = standard().unwrap();
        let prm = Params::new(0.0, 3.0).unwrap();
        let t = 1e-9;
        assert!((st.system.left.column(0, -1.0 + t).v - ONE).norm() < 1e-7);
        assert!((st.system.left.column(1, -1.0 + t).v - I).norm() < 1e-7);
        assert!((st.system.left.column(2, -1.0 + t).v * t - ONE).norm() < 1e-7);
        assert!((st.system.right.column(0, 1.0, &prm, None).v - ONE).norm() < 1e-14);
        assert!((st.system.right.column(1, 1.0, &prm, None).v - I).norm() < 1e-14);
        let y = 1.0 - 1e-4;
        let e = C::from_polar(1.0, -phase_phi(y, prm.alpha).unwrap());
        let lead = st.system.right.column(2, y, &prm, None).v * e / (1e-4f64).powf(1.0);
        assert!((lead - ONE).norm() < 1e-3);
    }

    #[test]
    fn continuity_and_connection() {
        let fr = frame(0.0, 3.0);
        let l = fr.eval(0.0).unwrap().f;
        let r = frame_matrix(&fr.right_columns(0.0)).0;
        assert!((l - r).abs().max() < 1e-12);
        for a in [-J_STAR, 0.0, J_STAR] {
            assert!(frame(a, 3.0).m[(2, 0)] <= -0.2);
        }
        let d = (frame(0.0, 3.001).m - frame(0.0, 3.0).m).abs().max();
        let d2 = (frame(0.0, 3.0001).m - frame(0.0, 3.0).m).abs().max();
        assert!(d2 < d && d2 < 1e-2);
    }

    #[test]
    fn determinants_do_not_vanish() {
        let fr = frame(0.0, 3.0);
        for i in 1..10_000 {
            let y = -1.0 + i as f64 / 10_000.0;
            let fl = frame_matrix(&fr.left_columns(y)).0;
            assert!(fl.determinant() != 0.0 && condition_number(&fl).is_finite());
        }
        for a in [-J_STAR, J_STAR] {
            let fr = frame(a, 3.0);
            for i in 0..=400 {
                let y = 0.999_999 * i as f64 / 400.0;
                let (pd, q2, q3) = fr.determinant_decomposition(y).unwrap();
                assert!(pd >= 8.0, "P_dR({y}) = {pd}");
                assert!(q2.abs() <= 1.0 && (q3 - pd).abs() <= 1.0);
            }
        }
    }

    #[test]
    fn annihilation_identity() {
        use proptest::prelude::*;
        let fr = frame(0.0, 3.0);
        proptest!(ProptestConfig::with_cases(100), |(y in -0.99f64..0.99)| {
            prop_assume!(y.abs() > 1e-6);
            let [p1, p2, q1, q2] = fr.associated_coeffs(y).unwrap();
            for c in fr.eval(y).unwrap().columns {
                let v = c.dd + p1 * c.d + p2 * c.d.conj() + q1 * c.v + q2 * c.v.conj();
                let scale = c.dd.norm() + (p1 * c.d).norm() + (p2 * c.d).norm() + (q1 * c.v).norm() + (q2 * c.v).norm();
                prop_assert!(v.norm() <= 1e-9 * scale);
            }
        });
    }

    #[test]
    fn endpoint_asymptotics() {
        let fr = frame(0.0, 3.0);
        let al = fr.prm.alpha;
        let u: f64 = 1e-4;
        let y = 1.0 - u;
        let [p1, _, q1, _] = fr.associated_coeffs(y).unwrap();
        assert!((p1 * u.powi(3) - 4.0 * I * al).norm() < 1e-3);
        assert!((q1 * u.powi(3) - (2.0 * I * al - 2.0)).norm() < 1e-3);
        let w = fr.wronskian(y).unwrap() * u.powi(2) * C::from_polar(1.0, -phase_phi(y, al).unwrap());
        assert!((w + 4.0 * I * al).norm() < 1e-3);
        for k in 1..40 {
            assert!(fr.wronskian(1.0 - 0.5f64.powi(k)).unwrap().norm() > 0.0);
        }
    }

    #[test]
    fn scaled_inverse_handles_disparate_scales() {
        let t: f64 = 1e-13;
        let m = Matrix4::new(1.0, 0.0, 1.0 / t, 0.0, 0.0, 1.0, 0.0, 1.0 / t, 0.3, 0.1, -1.0 / (t * t), 0.0, 0.2, 0.5, 0.0, -1.0 / (t * t));
        let inv = scaled_inverse(&m).unwrap();
        let prod = m * inv;
        for i in 0..4 {
            for j in 0..4 {
                let e = if i == j { 1.0 } else { 0.0 };
                assert!((prod[(i, j)] - e).abs() < 1e-9 * m.row(i).abs().max() * inv.column(j).abs().max() + 1e-12);
            }
        }
    }
}
