//! The map `G` and the iteration `f <- J(G(f))` at fixed `(a, p)`.

use crate::cheb::{gauss_nodes, ChebSeries};
use crate::error::{Error, Result};
use crate::fundsys::{FundamentalSystem, Frame};
use crate::inverse_op::{discrete_norm_x, discrete_norm_y, InverseOptions, PointSet};
use crate::profile_eq::{nonlinear_bracket, nonlinear_weights, FStar, Params, ProfileFn};
use num_complex::Complex64 as C;
use serde::{Deserialize, Serialize};

/// Degree of the Chebyshev representation of converged corrections.
pub const OUTPUT_DEGREE: usize = 96;

/// Everything that depends on `(a, p)`: the frame, its point set, and `f_*`
/// with the coefficients of `L` sampled on the points.
pub struct Problem<'a> {
    pub prm: Params,
    pub fstar: FStar,
    pub ps: PointSet<'a>,
    /// Index of the first Chebyshev output point.
    pub output_start: usize,
    p0: Vec<C>,
    q0: Vec<C>,
    a: Vec<f64>,
    b: Vec<C>,
    base: Vec<C>,
    /// weighted residual `(1+y)(1-y)^2 R(f_*)`
    rw: Vec<C>,
}

impl<'a> Problem<'a> {
    pub fn new(sys: &'a FundamentalSystem, prm: Params, pstar: &ChebSeries, opts: InverseOptions) -> Result<Self> {
        let fstar = FStar::new(prm, pstar)?;
        let frame = Frame::new(sys, prm)?;
        let out = gauss_nodes(OUTPUT_DEGREE + 1, -1.0, 1.0)?;
        let ps = PointSet::new(frame, &out, opts)?;
        let output_start = ps.node_count();
        let k = *fstar.consts();
        let n = ps.len();
        let (mut p0, mut q0, mut a, mut b, mut base, mut rw) =
            (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
        for pt in &ps.points {
            let y = pt.y;
            let u = 1.0 - y;
            let bv = fstar.value(y);
            let (av, bw) = nonlinear_weights(prm.p, bv)?;
            p0.push(k.p0(y));
            q0.push(k.q0(y));
            a.push(av / (u * u));
            b.push(bw / (u * u));
            base.push(bv);
            rw.push(fstar.weighted_residual(y));
        }
        Ok(Self { prm, fstar, ps, output_start, p0, q0, a, b, base, rw })
    }

    pub fn ys(&self) -> Vec<f64> {
        self.ps.ys()
    }

    /// `R(alpha, p, f_*)` on the points.
    pub fn residual_fstar(&self) -> Vec<C> {
        self.ps
            .points
            .iter()
            .zip(&self.rw)
            .map(|(pt, r)| r / ((1.0 + pt.y) * (1.0 - pt.y) * (1.0 - pt.y)))
            .collect()
    }

    /// `G(a, p, f) = (L~ - L) f - N(f) - R(f_*)` from values and derivatives on the points.
    pub fn g_map(&self, f: &[C], d: &[C]) -> Result<Vec<C>> {
        let n = self.ps.len();
        if f.len() != n || d.len() != n {
            return Err(Error::Config("sample length mismatch".into()));
        }
        let mut g = Vec::with_capacity(n);
        for i in 0..n {
            let pt = &self.ps.points[i];
            let [p1, p2, q1, q2] = pt.coeffs;
            let u = 1.0 - pt.y;
            let w = (1.0 + pt.y) * u * u;
            let lin = (p1 - self.p0[i]) * d[i] + p2 * d[i].conj() + (q1 - self.q0[i] - self.a[i]) * f[i]
                + (q2 - self.b[i]) * f[i].conj();
            let nl = nonlinear_bracket(self.prm.p, self.base[i], f[i])? / (u * u);
            g.push(lin - nl - self.rw[i] / w);
        }
        Ok(g)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FixedPointOptions {
    pub tol_abs: f64,
    pub tol_rel: f64,
    pub max_iter: usize,
    /// Expected bound on `||f||_X`; exceeding it is flagged, not an error.
    pub ball: f64,
}

impl Default for FixedPointOptions {
    fn default() -> Self {
        Self { tol_abs: 1e-15, tol_rel: 1e-10, max_iter: 60, ball: 1.2e-6 }
    }
}

#[derive(Clone, Debug)]
pub struct FixedPoint {
    pub f: Vec<C>,
    pub d: Vec<C>,
    pub psi: f64,
    pub iterations: usize,
    /// `||f_{n+1} - f_n||_X / ||f_n - f_{n-1}||_X`.
    pub ratios: Vec<f64>,
    pub steps: Vec<f64>,
    pub norm_x: f64,
    pub outside_ball: bool,
    pub tail_bound: f64,
    /// Steps at or below this are treated as roundoff when estimating contraction.
    pub noise_floor: f64,
}

impl FixedPoint {
    /// Largest contraction ratio seen while the steps were above roundoff; the
    /// first ratio if every step after the first was already at roundoff.
    pub fn contraction_estimate(&self) -> f64 {
        let clean = self
            .ratios
            .iter()
            .zip(self.steps.iter().skip(1))
            .filter(|(_, s)| **s > self.noise_floor)
            .map(|(r, _)| *r)
            .fold(None, |m: Option<f64>, r| Some(m.map_or(r, |m| m.max(r))));
        clean.or_else(|| self.ratios.first().copied()).unwrap_or(0.0)
    }

    /// Chebyshev interpolant of the correction from the output points, shifted so
    /// that `f_* + f_p` keeps the boundary condition at `y = 1` exactly.
    ///
    /// Trailing coefficients below `CHOP_REL` times the largest one are dropped:
    /// they are sampling noise, and at `y = 1` the residual sees them through
    /// `f''`, which scales like `n^4`.
    pub fn series(&self, problem: &Problem) -> Result<ChebSeries> {
        let vals = &self.f[problem.output_start..problem.output_start + OUTPUT_DEGREE + 1];
        let h = chop(&ChebSeries::from_gauss_values(vals, -1.0, 1.0)?)?;
        let k1 = problem.fstar.consts().star_factor();
        let shift = k1 * h.derivative().eval_unchecked(1.0) - h.eval_unchecked(1.0);
        let mut c = h.coeffs().to_vec();
        c[0] += shift;
        ChebSeries::new(c, -1.0, 1.0)
    }
}

/// Relative threshold for discarding trailing Chebyshev coefficients.
pub const CHOP_REL: f64 = 1e-6;

fn chop(h: &ChebSeries) -> Result<ChebSeries> {
    let c = h.coeffs();
    let top = c.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let keep = c.iter().rposition(|z| z.norm() > CHOP_REL * top).map_or(1, |k| k + 1);
    let (lo, hi) = h.domain();
    ChebSeries::new(c[..keep].to_vec(), lo, hi)
}

/// Iterates `f <- J(a, p, G(a, p, f))` from `f = 0`.
pub fn fixed_point(problem: &Problem, opts: &FixedPointOptions) -> Result<FixedPoint> {
    let n = problem.ps.len();
    let ys = problem.ys();
    let mut f = vec![C::new(0.0, 0.0); n];
    let mut d = f.clone();
    let mut ratios = Vec::new();
    let mut steps: Vec<f64> = Vec::new();
    let mut above = 0usize;
    for it in 1..=opts.max_iter {
        let g = problem.g_map(&f, &d)?;
        let out = problem.ps.apply(&g, true)?;
        let df: Vec<C> = out.f.iter().zip(&f).map(|(a, b)| a - b).collect();
        let dd: Vec<C> = out.d.iter().zip(&d).map(|(a, b)| a - b).collect();
        let step = discrete_norm_x(&ys, &df, &dd);
        let norm = discrete_norm_x(&ys, &out.f, &out.d);
        if !step.is_finite() {
            return Err(Error::NonFinite(format!("fixed-point step at iteration {it}")));
        }
        let thr = opts.tol_abs + opts.tol_rel * norm;
        if let Some(&prev) = steps.last() {
            let r = step / prev;
            ratios.push(r);
            above = if r >= 1.0 && step > 10.0 * thr { above + 1 } else { 0 };
            if above >= 3 {
                return Err(Error::Divergence(format!("contraction ratios {ratios:?}")));
            }
        }
        steps.push(step);
        f = out.f;
        d = out.d;
        if step <= thr {
            return Ok(FixedPoint {
                psi: out.psi,
                iterations: it,
                ratios,
                steps,
                norm_x: norm,
                outside_ball: norm > opts.ball,
                tail_bound: out.tail_bound,
                noise_floor: 10.0 * opts.tol_abs,
                f,
                d,
            });
        }
    }
    Err(Error::MaxIterations(format!("fixed point not reached; steps {steps:?}")))
}

/// `||G(f) - G(g)||_Y / ||f - g||_X` for two sampled functions.
pub fn lipschitz_ratio(problem: &Problem, f: (&[C], &[C]), g: (&[C], &[C])) -> Result<f64> {
    let ys = problem.ys();
    let gf = problem.g_map(f.0, f.1)?;
    let gg = problem.g_map(g.0, g.1)?;
    let diff: Vec<C> = gf.iter().zip(&gg).map(|(a, b)| a - b).collect();
    let df: Vec<C> = f.0.iter().zip(g.0).map(|(a, b)| a - b).collect();
    let dd: Vec<C> = f.1.iter().zip(g.1).map(|(a, b)| a - b).collect();
    Ok(discrete_norm_y(&ys, &diff) / discrete_norm_x(&ys, &df, &dd))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fundsys::standard;
    use crate::profile_eq::residual_r;

    fn problem(a: f64) -> Problem<'static> {
        let st = standard().unwrap();
        Problem::new(&st.system, Params::new(a, 3.0).unwrap(), &st.pstar.series, InverseOptions::default()).unwrap()
    }

    /// `eps (c0 + c1 y + c2 y^2)` with its first two derivatives.
    fn quadratic(eps: f64, c: [C; 3]) -> impl Fn(f64) -> (C, C, C) {
        move |y| (eps * (c[0] + c[1] * y + c[2] * y * y), eps * (c[1] + c[2] * (2.0 * y)), eps * c[2] * 2.0)
    }

    fn sample(pr: &Problem, h: &dyn Fn(f64) -> (C, C, C)) -> (Vec<C>, Vec<C>) {
        pr.ys().iter().map(|&y| (h(y).0, h(y).1)).unzip()
    }

    #[test]
    fn g_at_zero_is_minus_the_residual() {
        let pr = problem(J_STAR_TEST);
        let z = vec![C::new(0.0, 0.0); pr.ps.len()];
        let g = pr.g_map(&z, &z).unwrap();
        for (gi, ri) in g.iter().zip(pr.residual_fstar()) {
            assert_eq!(*gi, -ri);
        }
    }

    const J_STAR_TEST: f64 = 3e-11;

    #[test]
    fn ltilde_minus_g_is_the_full_residual() {
        let pr = problem(J_STAR_TEST);
        let h = quadratic(1e-6, [C::new(0.3, -0.2), C::new(0.5, 0.1), C::new(-0.4, 0.7)]);
        let (f, d) = sample(&pr, &h);
        let g = pr.g_map(&f, &d).unwrap();
        for (i, pt) in pr.ps.points.iter().enumerate().step_by(41) {
            if pt.y.abs() > 0.9 {
                continue;
            }
            let (v, dv, ddv) = h(pt.y);
            let lhs = pr.ps.ltilde(i, v, dv, ddv) - g[i];
            let fs = &pr.fstar;
            let rhs = residual_r(&pr.prm, pt.y, fs.value(pt.y) + v, fs.deriv(pt.y) + dv, fs.second(pt.y).unwrap() + ddv).unwrap();
            // R(f_*) is assembled from O(1) terms, so it carries an absolute roundoff floor
            let tol = 1e-9 * (pr.ps.ltilde(i, v, dv, ddv).norm() + rhs.norm()) + 1e-13;
            assert!((lhs - rhs).norm() <= tol, "y = {}: {lhs} vs {rhs}", pt.y);
        }
    }

    #[test]
    fn converged_solution_solves_the_profile_equation() {
        let pr = problem(-5.06e-12);
        let fp = fixed_point(&pr, &FixedPointOptions::default()).unwrap();
        assert!(fp.norm_x <= 1.2e-6 && !fp.outside_ball);
        let ser = fp.series(&pr).unwrap();
        let total = FStar::new(pr.prm, &pr.fstar.pstar().add(&ser).unwrap()).unwrap();
        let r = crate::profile_eq::norm_y_weighted(&|y| total.weighted_residual(y)).unwrap();
        assert!(r.value < 1e-8, "{r:?}");
        // and the iterate is a fixed point of J G to the stopping tolerance
        let again = pr.ps.apply(&pr.g_map(&fp.f, &fp.d).unwrap(), true).unwrap();
        let df: Vec<C> = again.f.iter().zip(&fp.f).map(|(a, b)| a - b).collect();
        let dd: Vec<C> = again.d.iter().zip(&fp.d).map(|(a, b)| a - b).collect();
        assert!(discrete_norm_x(&pr.ys(), &df, &dd) <= 10.0 * fp.steps.last().unwrap());
    }

    #[test]
    fn j_of_g_contracts_in_the_ball() {
        let pr = problem(J_STAR_TEST);
        let ys = pr.ys();
        let jg = |h: &dyn Fn(f64) -> (C, C, C)| {
            let (f, d) = sample(&pr, h);
            let out = pr.ps.apply(&pr.g_map(&f, &d).unwrap(), true).unwrap();
            (out.f, out.d)
        };
        let pairs = [
            ([C::new(0.5, 0.0), C::new(0.0, 0.0), C::new(0.2, 0.1)], [C::new(-0.3, 0.4), C::new(0.1, 0.0), C::new(0.0, -0.2)]),
            ([C::new(0.0, 0.6), C::new(0.2, -0.2), C::new(0.0, 0.0)], [C::new(0.1, 0.1), C::new(-0.3, 0.0), C::new(0.1, 0.1)]),
        ];
        for (ca, cb) in pairs {
            let (ha, hb) = (quadratic(1e-6, ca), quadratic(1e-6, cb));
            let (fa, da) = sample(&pr, &ha);
            let (fb, db) = sample(&pr, &hb);
            assert!(discrete_norm_x(&ys, &fa, &da) <= 1.2e-6 && discrete_norm_x(&ys, &fb, &db) <= 1.2e-6);
            let (ga, gda) = jg(&ha);
            let (gb, gdb) = jg(&hb);
            let num: (Vec<C>, Vec<C>) = (ga.iter().zip(&gb).map(|(a, b)| a - b).collect(), gda.iter().zip(&gdb).map(|(a, b)| a - b).collect());
            let den: (Vec<C>, Vec<C>) = (fa.iter().zip(&fb).map(|(a, b)| a - b).collect(), da.iter().zip(&db).map(|(a, b)| a - b).collect());
            let ratio = discrete_norm_x(&ys, &num.0, &num.1) / discrete_norm_x(&ys, &den.0, &den.1);
            assert!(ratio <= 0.5, "ratio {ratio}");
            let lip = lipschitz_ratio(&pr, (&fa, &da), (&fb, &db)).unwrap();
            assert!(lip.is_finite() && lip < 1.0, "Lipschitz {lip}");
        }
    }
}
