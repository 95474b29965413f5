//! Compactified profile equation on `y in (-1, 1)`.
//!
//! With `u = 1 - y` and `t = 1 + y` the residual is
//! `R(f) = f'' + p0 f' + q0 f + f |f|^{p-1} / u^2`. Every singular coefficient is
//! also available multiplied by `u^3`, which is how the weighted residual and the
//! collocation rows are evaluated without cancellation near `y = 1`.

use crate::cheb::ChebSeries;
use crate::error::{Error, Result};
use num_complex::Complex64 as C;
use serde::{Deserialize, Serialize};
use std::sync::OnceLock;

pub const A_STAR: f64 = 772201763088846.0 / 841768781900003.0;
pub const J_STAR: f64 = 1e-10;
pub const P_MIN: f64 = 7.0 / 3.0;
pub const P_MAX: f64 = 5.0;
pub const I: C = C { re: 0.0, im: 1.0 };

/// Smallest `|f|^2` fed to the logarithm in `|f|^e`.
const MODULUS_FLOOR: f64 = 1e-300;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Params {
    pub a: f64,
    pub p: f64,
    pub alpha: f64,
}

impl Params {
    pub fn new(a: f64, p: f64) -> Result<Self> {
        Self::from_alpha(A_STAR + a, p)
    }

    pub fn from_alpha(alpha: f64, p: f64) -> Result<Self> {
        if !(p > P_MIN && p < P_MAX) {
            return Err(Error::Domain(format!("p = {p} outside (7/3, 5)")));
        }
        if !(alpha > 0.0) || !alpha.is_finite() {
            return Err(Error::Domain(format!("alpha = {alpha} must be positive")));
        }
        Ok(Self { a: alpha - A_STAR, p, alpha })
    }

    /// True when `a` lies in the nominal solver interval `[-1e-10, 1e-10]`.
    pub fn in_j_star(&self) -> bool {
        self.a.abs() <= J_STAR
    }
}

/// Constants of the frozen coefficients at fixed `(alpha, p)`.
#[derive(Clone, Copy, Debug)]
pub struct EqConsts {
    pub alpha: f64,
    pub p: f64,
    /// `2/(p-1) + i/alpha`
    pub c: C,
    /// `4/(p-1) + 2i/alpha`
    pub c1: C,
    /// Coefficient of `u^-2` in `q0`.
    pub c2: C,
    /// `4i alpha/(p-1) - 2`, coefficient of `u^-3` in `q0`.
    pub kappa: C,
}

impl EqConsts {
    pub fn new(alpha: f64, p: f64) -> Self {
        let m = 2.0 / (p - 1.0);
        let c = C::new(m, 1.0 / alpha);
        let c2 = C::new(m * (m - 1.0) - 1.0 / (alpha * alpha), (2.0 * m - 1.0) / alpha);
        let kappa = C::new(-2.0, 4.0 * alpha / (p - 1.0));
        Self { alpha, p, c, c1: 2.0 * c, c2, kappa }
    }

    /// `u^3 p0` as a polynomial-type expression in `u`, with `t = 2 - u`.
    pub fn p0_u3(&self, u: f64, t: f64) -> C {
        let ia = I * self.alpha;
        4.0 * ia - 2.0 * ia * u - self.c1 * (u * u) + 2.0 * u * u * u / t
    }

    /// `u^3 q0`.
    pub fn q0_u3(&self, u: f64, t: f64) -> C {
        self.kappa + self.c2 * u - self.c * (u * u) - self.c * (u * u * u / t)
    }

    pub fn p0(&self, y: f64) -> C {
        let u = 1.0 - y;
        self.p0_u3(u, 1.0 + y) / (u * u * u)
    }

    pub fn q0(&self, y: f64) -> C {
        let u = 1.0 - y;
        self.q0_u3(u, 1.0 + y) / (u * u * u)
    }

    /// Constant `kappa_1` with `f_*(1) = kappa_1 P_*'(1)`; satisfies `kappa kappa_1 = -4i alpha`.
    pub fn star_factor(&self) -> C {
        let pm1 = self.p - 1.0;
        2.0 * I * pm1 * self.alpha / C::new(pm1, -2.0 * self.alpha)
    }
}

fn check_interior(y: f64) -> Result<()> {
    if !(y > -1.0 && y < 1.0) {
        return Err(Error::SingularPoint(format!("y = {y} is not in (-1, 1)")));
    }
    Ok(())
}

/// The displayed coefficients `p0(y, alpha, p)` and `q0(y, alpha, p)`.
pub fn frozen_coeffs(y: f64, alpha: f64, p: f64) -> Result<(C, C)> {
    check_interior(y)?;
    let k = EqConsts::new(alpha, p);
    Ok((k.p0(y), k.q0(y)))
}

/// `|z|^e` via `exp(e/2 ln|z|^2)` with the log argument floored.
pub fn modulus_power(z: C, e: f64) -> f64 {
    let m2 = z.norm_sqr().max(MODULUS_FLOOR);
    (0.5 * e * m2.ln()).exp()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Representation {
    Chebyshev,
    ClosedForm,
    Composite,
}

/// A complex function on `(-1, 1)` with its first derivative.
pub trait ProfileFn: Sync {
    fn value(&self, y: f64) -> C;
    fn deriv(&self, y: f64) -> C;
    fn second(&self, _y: f64) -> Option<C> {
        None
    }
    fn representation(&self) -> Representation;
}

type Scalar = Box<dyn Fn(f64) -> C + Send + Sync>;

pub struct ClosedForm {
    value: Scalar,
    deriv: Scalar,
    second: Option<Scalar>,
}

impl ClosedForm {
    pub fn new(
        value: impl Fn(f64) -> C + Send + Sync + 'static,
        deriv: impl Fn(f64) -> C + Send + Sync + 'static,
    ) -> Self {
        Self { value: Box::new(value), deriv: Box::new(deriv), second: None }
    }

    pub fn with_second(mut self, second: impl Fn(f64) -> C + Send + Sync + 'static) -> Self {
        self.second = Some(Box::new(second));
        self
    }
}

impl ProfileFn for ClosedForm {
    fn value(&self, y: f64) -> C {
        (self.value)(y)
    }
    fn deriv(&self, y: f64) -> C {
        (self.deriv)(y)
    }
    fn second(&self, y: f64) -> Option<C> {
        self.second.as_ref().map(|s| s(y))
    }
    fn representation(&self) -> Representation {
        Representation::ClosedForm
    }
}

/// A Chebyshev series viewed as a profile, with cached derivatives.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ChebProfile {
    series: ChebSeries,
    d1: ChebSeries,
    d2: ChebSeries,
}

impl ChebProfile {
    pub fn new(series: ChebSeries) -> Self {
        let d1 = series.derivative();
        let d2 = d1.derivative();
        Self { series, d1, d2 }
    }

    pub fn series(&self) -> &ChebSeries {
        &self.series
    }
}

impl ProfileFn for ChebProfile {
    fn value(&self, y: f64) -> C {
        self.series.eval_unchecked(y)
    }
    fn deriv(&self, y: f64) -> C {
        self.d1.eval_unchecked(y)
    }
    fn second(&self, y: f64) -> Option<C> {
        Some(self.d2.eval_unchecked(y))
    }
    fn representation(&self) -> Representation {
        Representation::Chebyshev
    }
}

/// Pointwise sum of two profiles.
pub struct Sum<'a> {
    pub lhs: &'a dyn ProfileFn,
    pub rhs: &'a dyn ProfileFn,
}

impl ProfileFn for Sum<'_> {
    fn value(&self, y: f64) -> C {
        self.lhs.value(y) + self.rhs.value(y)
    }
    fn deriv(&self, y: f64) -> C {
        self.lhs.deriv(y) + self.rhs.deriv(y)
    }
    fn second(&self, y: f64) -> Option<C> {
        Some(self.lhs.second(y)? + self.rhs.second(y)?)
    }
    fn representation(&self) -> Representation {
        Representation::Composite
    }
}

/// `f_*(y) = P(y) + kappa_1 P'(1) - P(1)`, which satisfies the `y = 1` boundary
/// condition identically.
#[derive(Clone, Debug)]
pub struct FStar {
    pub prm: Params,
    k: EqConsts,
    p: ChebProfile,
    shift: C,
    /// `(P(y) - P(1))/(y - 1)` and `(P'(y) - P'(1))/(y - 1)`.
    dd0: ChebSeries,
    dd1: ChebSeries,
}

impl FStar {
    pub fn new(prm: Params, pstar: &ChebSeries) -> Result<Self> {
        let (lo, hi) = pstar.domain();
        if lo != -1.0 || hi != 1.0 {
            return Err(Error::Domain("P_* must live on [-1, 1]".into()));
        }
        let k = EqConsts::new(prm.alpha, prm.p);
        let p = ChebProfile::new(pstar.clone());
        let shift = k.star_factor() * p.d1.eval_unchecked(1.0) - p.series.eval_unchecked(1.0);
        let dd0 = p.series.divided_difference(1.0);
        let dd1 = p.d1.divided_difference(1.0);
        Ok(Self { prm, k, p, shift, dd0, dd1 })
    }

    pub fn pstar(&self) -> &ChebSeries {
        self.p.series()
    }

    /// Constant added to `P_*`.
    pub fn shift(&self) -> C {
        self.shift
    }

    pub fn consts(&self) -> &EqConsts {
        &self.k
    }

    /// `4i alpha f'(y) + kappa f(y)` divided by `u`, with the analytic zero at
    /// `y = 1` removed.
    fn boundary_bracket_over_u(&self, y: f64) -> C {
        -(4.0 * I * self.k.alpha * self.dd1.eval_unchecked(y)
            + self.k.kappa * self.dd0.eval_unchecked(y))
    }

    /// `(1+y)(1-y)^2 R(alpha, p, f_*)(y)`, finite up to and including `y = 1`.
    pub fn weighted_residual(&self, y: f64) -> C {
        let (f, d, dd) = (self.value(y), self.deriv(y), self.p.d2.eval_unchecked(y));
        weighted_residual_parts(&self.k, y, f, d, dd, self.boundary_bracket_over_u(y))
    }
}

impl ProfileFn for FStar {
    fn value(&self, y: f64) -> C {
        self.p.value(y) + self.shift
    }
    fn deriv(&self, y: f64) -> C {
        self.p.deriv(y)
    }
    fn second(&self, y: f64) -> Option<C> {
        self.p.second(y)
    }
    fn representation(&self) -> Representation {
        Representation::Chebyshev
    }
}

/// Value and derivative of `f_*` at `y in [-1, 1]`.
pub fn f_star(y: f64, prm: Params, pstar: &ChebSeries) -> Result<(C, C)> {
    if !(-1.0..=1.0).contains(&y) {
        return Err(Error::Domain(format!("y = {y} outside [-1, 1]")));
    }
    let fs = FStar::new(prm, pstar)?;
    Ok((fs.value(y), fs.deriv(y)))
}

/// Weighted residual assembled from `f, f', f''` and `B0/u`, where
/// `B0 = 4i alpha f' + kappa f`.
fn weighted_residual_parts(k: &EqConsts, y: f64, f: C, d: C, dd: C, b0_over_u: C) -> C {
    let u = 1.0 - y;
    let t = 1.0 + y;
    let ia = I * k.alpha;
    let nl = f * modulus_power(f, k.p - 1.0);
    t * u * u * dd
        + t * b0_over_u
        + t * ((-2.0 * ia - k.c1 * u) * d + (k.c2 - k.c * u) * f)
        + 2.0 * u * u * d
        - k.c * (u * u) * f
        + t * nl
}

/// `(1+y)(1-y)^2 R(alpha, p, f)` from pointwise data; the `y = 1` bracket is
/// evaluated directly, so roundoff grows like `1/(1-y)` there.
pub fn weighted_residual(prm: &Params, y: f64, f: C, d: C, dd: C) -> Result<C> {
    check_interior(y)?;
    let k = EqConsts::new(prm.alpha, prm.p);
    let b0 = 4.0 * I * k.alpha * d + k.kappa * f;
    Ok(weighted_residual_parts(&k, y, f, d, dd, b0 / (1.0 - y)))
}

/// `R(alpha, p, f)(y) = f'' + p0 f' + q0 f + f|f|^{p-1}/(1-y)^2`.
pub fn residual_r(prm: &Params, y: f64, f: C, d: C, dd: C) -> Result<C> {
    check_interior(y)?;
    let k = EqConsts::new(prm.alpha, prm.p);
    let u = 1.0 - y;
    Ok(dd + k.p0(y) * d + k.q0(y) * f + f * modulus_power(f, prm.p - 1.0) / (u * u))
}

/// Residual of a profile that carries a second derivative.
pub fn residual_of(prm: &Params, f: &dyn ProfileFn, y: f64) -> Result<C> {
    let dd = f
        .second(y)
        .ok_or_else(|| Error::Domain("profile has no second derivative".into()))?;
    residual_r(prm, y, f.value(y), f.deriv(y), dd)
}

/// Coefficients of `L f = f'' + p0 f' + (q0 + A) f + B conj(f)`.
#[derive(Clone, Copy, Debug)]
pub struct LinCoeffs {
    pub p0: C,
    pub q0: C,
    pub a: f64,
    pub b: C,
}

/// `A = (p+1)/2 |f|^{p-1}` and `B = (p-1)/2 |f|^{p-3} f^2`, without the `u^-2`.
pub fn nonlinear_weights(p: f64, base: C) -> Result<(f64, C)> {
    if p < 3.0 && base.norm_sqr() < MODULUS_FLOOR {
        return Err(Error::DegenerateModulus(format!("base vanishes with p = {p} < 3")));
    }
    let a = 0.5 * (p + 1.0) * modulus_power(base, p - 1.0);
    let b = 0.5 * (p - 1.0) * modulus_power(base, p - 3.0) * base * base;
    Ok((a, b))
}

/// The real-linear operator `L_{a,p}` around a base profile.
pub struct LinearizedOp<'a> {
    pub prm: Params,
    k: EqConsts,
    base: &'a dyn ProfileFn,
}

impl<'a> LinearizedOp<'a> {
    pub fn new(prm: Params, base: &'a dyn ProfileFn) -> Self {
        Self { prm, k: EqConsts::new(prm.alpha, prm.p), base }
    }

    pub fn coeffs(&self, y: f64) -> Result<LinCoeffs> {
        check_interior(y)?;
        let u = 1.0 - y;
        let (a, b) = nonlinear_weights(self.prm.p, self.base.value(y))?;
        Ok(LinCoeffs { p0: self.k.p0(y), q0: self.k.q0(y), a: a / (u * u), b: b / (u * u) })
    }

    pub fn apply(&self, y: f64, f: C, d: C, dd: C) -> Result<C> {
        let c = self.coeffs(y)?;
        Ok(dd + c.p0 * d + (c.q0 + c.a) * f + c.b * f.conj())
    }
}

/// `N(f) = [(b+f)|b+f|^{p-1} - b|b|^{p-1} - A f - B conj(f)] / (1-y)^2` at base value `b`.
pub fn nonlinear_n(prm: &Params, base: C, f: C, y: f64) -> Result<C> {
    check_interior(y)?;
    let u = 1.0 - y;
    Ok(nonlinear_bracket(prm.p, base, f)? / (u * u))
}

/// Numerator of `N`, i.e. `(1-y)^2 N`.
pub fn nonlinear_bracket(p: f64, base: C, f: C) -> Result<C> {
    let (a, b) = nonlinear_weights(p, base)?;
    let s = base + f;
    Ok(s * modulus_power(s, p - 1.0) - base * modulus_power(base, p - 1.0) - a * f - b * f.conj())
}

/// Sampling grid for the weighted sup-norms.
#[derive(Clone, Debug)]
pub struct SupGrid {
    pub points: Vec<f64>,
}

impl SupGrid {
    /// Interior Gauss-Lobatto nodes plus `+-(1 - 2^-k)` for `k <= refine`.
    pub fn new(lobatto: usize, refine: u32) -> Self {
        let mut points: Vec<f64> = (1..lobatto)
            .map(|j| (j as f64 * std::f64::consts::PI / lobatto as f64).cos())
            .collect();
        for k in 1..=refine {
            let e = 0.5f64.powi(k as i32);
            points.push(1.0 - e);
            points.push(-1.0 + e);
        }
        points.sort_by(f64::total_cmp);
        points.dedup();
        Self { points }
    }

    pub fn standard() -> &'static SupGrid {
        static GRID: OnceLock<SupGrid> = OnceLock::new();
        GRID.get_or_init(|| SupGrid::new(2048, 40))
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct NormReport {
    pub value: f64,
    pub grid_size: usize,
    pub argmax: f64,
}

fn sup_over(grid: &SupGrid, mut h: impl FnMut(f64) -> f64) -> Result<NormReport> {
    let mut best = NormReport { value: 0.0, grid_size: grid.points.len(), argmax: 0.0 };
    for &y in &grid.points {
        let v = h(y);
        if !v.is_finite() {
            return Err(Error::NonFinite(format!("weighted sample {v} at y = {y}")));
        }
        if v > best.value {
            best.value = v;
            best.argmax = y;
        }
    }
    Ok(best)
}

/// `sup |f| + sup (1-y^2)|f'|` on the grid.
pub fn norm_x_on(f: &dyn ProfileFn, grid: &SupGrid) -> Result<NormReport> {
    let v = sup_over(grid, |y| f.value(y).norm())?;
    let d = sup_over(grid, |y| (1.0 - y * y) * f.deriv(y).norm())?;
    Ok(NormReport { value: v.value + d.value, grid_size: grid.points.len(), argmax: d.argmax })
}

pub fn norm_x(f: &dyn ProfileFn) -> Result<NormReport> {
    norm_x_on(f, SupGrid::standard())
}

/// `sup (1+y)(1-y)^2 |g|` on the grid.
pub fn norm_y_on(g: &dyn Fn(f64) -> C, grid: &SupGrid) -> Result<NormReport> {
    sup_over(grid, |y| (1.0 + y) * (1.0 - y) * (1.0 - y) * g(y).norm())
}

pub fn norm_y(g: &dyn Fn(f64) -> C) -> Result<NormReport> {
    norm_y_on(g, SupGrid::standard())
}

/// Sup-norm of an already weighted function `gw = (1+y)(1-y)^2 g`.
pub fn norm_y_weighted(gw: &dyn Fn(f64) -> C) -> Result<NormReport> {
    sup_over(SupGrid::standard(), |y| gw(y).norm())
}
