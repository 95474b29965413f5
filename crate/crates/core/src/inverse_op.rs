//! The functionals `alpha^k`, the inverse of `L~` from variation of constants,
//! the functional `psi`, the cutoff `chi`, and the regularized inverse `J`.
//!
//! Everything is discretized on a [`PointSet`]: composite Chebyshev-Gauss panels
//! graded geometrically towards `-1`, sized by the phase of `e^{i phi}` on
//! `[0, 1 - u_c]`, and graded again on the tail `[1 - u_c, 1)`, where the
//! oscillatory integrals are done by Levin collocation. Extra evaluation
//! points may be attached; they take part in the iteration but not in the
//! panel sums.
//!
//! On `(-1, 0]` the result is expanded in the left system,
//! `f = sum_l f_{L,l} e_l`, which avoids the cancellation between the singular
//! parts of `f_3`, `f_4` and the correction term.

use crate::error::{Error, Result};
use crate::fundsys::{phase_phi, phase_phi_prime, scaled_inverse, Frame, Jet};
use crate::quad::PanelRule;
use nalgebra::Matrix4;
use num_complex::Complex64 as C;
use std::f64::consts::PI;

/// Cubic smoothstep from 1 at `y = -1/2` down to 0 at `y = 0`.
#[derive(Clone, Copy, Debug, Default)]
pub struct Cutoff;

impl Cutoff {
    pub fn chi(y: f64) -> f64 {
        let s = (2.0 * y + 1.0).clamp(0.0, 1.0);
        1.0 - s * s * (3.0 - 2.0 * s)
    }

    pub fn chi_prime(y: f64) -> f64 {
        if !(-0.5..=0.0).contains(&y) {
            return 0.0;
        }
        let s = 2.0 * y + 1.0;
        -12.0 * s * (1.0 - s)
    }
}

/// `alpha^k(a, p, g)(y)` for `k = 1..4` from the direct frame inverse.
pub fn alpha_k(frame: &Frame, g: C, y: f64, k: usize) -> Result<f64> {
    if !(1..=4).contains(&k) {
        return Err(Error::Domain(format!("alpha index {k} outside 1..4")));
    }
    let inv = frame.inverse(y)?;
    Ok(inv[(k - 1, 2)] * g.re + inv[(k - 1, 3)] * g.im)
}

#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct InverseOptions {
    pub panel_order: usize,
    /// Left panels `[-1 + 2^{-k-1}, -1 + 2^{-k}]` for `k = 1..left_levels`.
    pub left_levels: u32,
    /// Width `u_c` of the tail `[1 - u_c, 1)`.
    pub tail_u: f64,
    pub tail_levels: u32,
    /// Largest change of `phi` across one bulk panel.
    pub max_phase_step: f64,
    pub max_panel: f64,
}

impl Default for InverseOptions {
    fn default() -> Self {
        Self { panel_order: 16, left_levels: 40, tail_u: 0.025, tail_levels: 30, max_phase_step: PI, max_panel: 0.0625 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Side {
    Left,
    Bulk,
    Tail,
}

#[derive(Clone, Debug)]
struct Panel {
    lo: f64,
    hi: f64,
    first: usize,
    side: Side,
}

/// Frame data at one point.
#[derive(Clone, Debug)]
pub struct PointData {
    pub y: f64,
    panel: usize,
    /// For extra points, the integrals from the panel start of the cardinal functions.
    partial: Option<Vec<f64>>,
    /// `f_{L,l}` on the left, `f_{R,k}` on the right.
    cols: [Jet; 4],
    /// Columns 3 and 4 of `F_L^{-1}` (left) or `F^{-1}` (right).
    rows: [[f64; 2]; 4],
    /// `(p1, p2, q1, q2)`.
    pub coeffs: [C; 4],
    chi: f64,
    chi_prime: f64,
    /// `e^{i phi(y)}` on the right, 1 on the left.
    phase: C,
    /// Interpolation row within a tail panel, for extra points.
    interp: Option<Vec<f64>>,
}

/// Result of applying the inverse to sampled data.
#[derive(Clone, Debug)]
pub struct InverseOutput {
    pub f: Vec<C>,
    pub d: Vec<C>,
    pub psi: f64,
    /// `int_{-1}^1 alpha^k` for `k = 1..4`.
    pub integrals: [f64; 4],
    /// Chebyshev tail of the non-oscillatory tail antiderivative, a truncation estimate.
    pub tail_bound: f64,
}

pub struct PointSet<'a> {
    pub frame: Frame<'a>,
    pub points: Vec<PointData>,
    panels: Vec<Panel>,
    rule: PanelRule,
    minv: Matrix4<f64>,
    /// Index of the point at `1 - u_c`.
    anchor: usize,
    anchor_row: Vec<f64>,
    first_tail: usize,
    /// Levin collocation matrices `F' - i phi' F` of the tail panels, factored.
    levin: Vec<nalgebra::LU<C, nalgebra::Dyn, nalgebra::Dyn>>,
    n_nodes: usize,
    pub opts: InverseOptions,
}

fn coeffs_from(fp: &Matrix4<f64>, inv: &Matrix4<f64>) -> [C; 4] {
    let a = -fp * inv;
    let g = |r: usize, c: usize| a[(r, c)];
    [
        C::new(0.5 * (g(2, 2) + g(3, 3)), 0.5 * (g(3, 2) - g(2, 3))),
        C::new(0.5 * (g(2, 2) - g(3, 3)), 0.5 * (g(3, 2) + g(2, 3))),
        C::new(0.5 * (g(2, 0) + g(3, 1)), 0.5 * (g(3, 0) - g(2, 1))),
        C::new(0.5 * (g(2, 0) - g(3, 1)), 0.5 * (g(3, 0) + g(2, 1))),
    ]
}

fn matrices(cols: &[Jet; 4]) -> (Matrix4<f64>, Matrix4<f64>) {
    let mut f = Matrix4::zeros();
    let mut fp = Matrix4::zeros();
    for (j, c) in cols.iter().enumerate() {
        for (r, v) in [c.v.re, c.v.im, c.d.re, c.d.im].into_iter().enumerate() {
            f[(r, j)] = v;
        }
        for (r, v) in [c.d.re, c.d.im, c.dd.re, c.dd.im].into_iter().enumerate() {
            fp[(r, j)] = v;
        }
    }
    (f, fp)
}

fn build_panels(alpha: f64, o: &InverseOptions) -> Result<Vec<(f64, f64, Side)>> {
    let mut out = Vec::new();
    for k in (1..=o.left_levels).rev() {
        let lo = -1.0 + 0.5f64.powi(k as i32 + 1);
        let hi = -1.0 + 0.5f64.powi(k as i32);
        out.push((lo, hi, Side::Left));
    }
    let n_mid = (0.5 / o.max_panel).ceil() as usize;
    for j in 0..n_mid {
        out.push((-0.5 + 0.5 * j as f64 / n_mid as f64, -0.5 + 0.5 * (j + 1) as f64 / n_mid as f64, Side::Left));
    }
    let yc = 1.0 - o.tail_u;
    let mut lo = 0.0;
    while lo < yc {
        // step limited by the local phase speed and the panel cap
        let mut h = (o.max_phase_step / phase_phi_prime(lo, alpha).abs()).min(o.max_panel);
        // keep the actual phase change bounded when the speed grows inside the panel
        while h > 1e-14 {
            let hi = (lo + h).min(yc);
            let dphi = (phase_phi(hi, alpha)? - phase_phi(lo, alpha)?).abs();
            if dphi <= o.max_phase_step {
                break;
            }
            h *= 0.8;
        }
        let hi = if yc - (lo + h) < 0.25 * h { yc } else { lo + h };
        out.push((lo, hi, Side::Bulk));
        lo = hi;
    }
    for k in 0..o.tail_levels {
        let lo = 1.0 - o.tail_u * 0.5f64.powi(k as i32);
        let hi = 1.0 - o.tail_u * 0.5f64.powi(k as i32 + 1);
        out.push((lo, hi, Side::Tail));
    }
    Ok(out)
}

impl<'a> PointSet<'a> {
    /// Builds the panel nodes and attaches the `extra` evaluation points.
    pub fn new(frame: Frame<'a>, extra: &[f64], opts: InverseOptions) -> Result<Self> {
        if opts.panel_order < 4 || !(opts.tail_u > 0.0 && opts.tail_u < 0.5) {
            return Err(Error::Config("invalid inverse-operator options".into()));
        }
        let rule = PanelRule::new(opts.panel_order)?;
        let raw = build_panels(frame.prm.alpha, &opts)?;
        let minv = scaled_inverse(&frame.m).ok_or_else(|| Error::Fit("connection matrix is singular".into()))?;
        let m = opts.panel_order;
        let mut panels = Vec::with_capacity(raw.len());
        let mut ys = Vec::with_capacity(raw.len() * m + extra.len() + 1);
        let mut owner = Vec::with_capacity(ys.capacity());
        for (i, &(lo, hi, side)) in raw.iter().enumerate() {
            panels.push(Panel { lo, hi, first: ys.len(), side });
            for &x in &rule.nodes {
                ys.push(0.5 * (lo + hi) + 0.5 * (hi - lo) * x);
                owner.push((i, None));
            }
        }
        let n_nodes = ys.len();
        let yc = 1.0 - opts.tail_u;
        let locate = |y: f64| -> usize {
            let idx = panels.partition_point(|p| p.hi < y);
            idx.min(panels.len() - 1)
        };
        let mut interps: Vec<Option<Vec<f64>>> = vec![None; n_nodes];
        let mut extras: Vec<f64> = extra.to_vec();
        extras.push(yc);
        for &y in &extras {
            if !(y > -1.0 && y < 1.0) {
                return Err(Error::Domain(format!("evaluation point {y} outside (-1, 1)")));
            }
            let mut i = locate(y);
            // the anchor belongs to the last bulk panel
            if y == yc {
                i = panels.iter().rposition(|p| p.side == Side::Bulk).expect("bulk panels");
            }
            // points at 0 use the left expansion
            if y == 0.0 {
                i = panels.iter().rposition(|p| p.side == Side::Left).expect("left panels");
            }
            let p = &panels[i];
            let x = (2.0 * y - p.lo - p.hi) / (p.hi - p.lo);
            ys.push(y);
            owner.push((i, Some(rule.partial_row(x))));
            interps.push((panels[i].side == Side::Tail).then(|| rule.interp_row(x)));
        }
        let anchor = ys.len() - 1;
        let first_tail = panels.iter().position(|p| p.side == Side::Tail).expect("tail panels");
        let anchor_row = rule.interp_row(-1.0);
        let mut points = Vec::with_capacity(ys.len());
        for ((y, (panel, partial)), interp) in ys.into_iter().zip(owner).zip(interps) {
            let side = panels[panel].side;
            let cols = if side == Side::Left { frame.left_columns(y) } else { frame.right_columns(y) };
            let (f, fp) = matrices(&cols);
            let inv = scaled_inverse(&f).ok_or_else(|| Error::Fit(format!("singular frame at y = {y}")))?;
            let rows = std::array::from_fn(|k| [inv[(k, 2)], inv[(k, 3)]]);
            let phase = if side == Side::Left { C::new(1.0, 0.0) } else { C::from_polar(1.0, phase_phi(y, frame.prm.alpha)?) };
            points.push(PointData {
                y,
                panel,
                partial,
                cols,
                rows,
                coeffs: coeffs_from(&fp, &inv),
                chi: Cutoff::chi(y),
                chi_prime: Cutoff::chi_prime(y),
                phase,
                interp,
            });
        }
        let mut levin = Vec::new();
        for p in &panels[first_tail..] {
            let scale = 2.0 / (p.hi - p.lo);
            let mut a = nalgebra::DMatrix::<C>::zeros(m, m);
            for i in 0..m {
                let y = points[p.first + i].y;
                let dphi = phase_phi_prime(y, frame.prm.alpha);
                let w = 1.0 / dphi.abs();
                for j in 0..m {
                    a[(i, j)] = C::new(w * scale * rule.diff[i][j], 0.0);
                }
                a[(i, i)] -= C::new(0.0, w * dphi);
            }
            levin.push(a.lu());
        }
        Ok(Self { frame, points, panels, rule, minv, anchor, anchor_row, first_tail, levin, n_nodes, opts })
    }

    pub fn ys(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.y).collect()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Number of panel quadrature nodes (the leading entries of `points`).
    pub fn node_count(&self) -> usize {
        self.n_nodes
    }

    /// Samples `g` on the point set.
    pub fn sample(&self, g: &dyn Fn(f64) -> C) -> Vec<C> {
        self.points.iter().map(|p| g(p.y)).collect()
    }

    /// `L~^{-1}(g)` (with `regularize = false`) or `J(g)` at every point.
    pub fn apply(&self, g: &[C], regularize: bool) -> Result<InverseOutput> {
        let n = self.points.len();
        if g.len() != n {
            return Err(Error::Config(format!("expected {n} samples, got {}", g.len())));
        }
        if let Some(i) = g.iter().position(|v| !(v.re.is_finite() && v.im.is_finite())) {
            return Err(Error::NonFinite(format!("data not finite at y = {}", self.points[i].y)));
        }
        let m = self.opts.panel_order;
        let dens: Vec<[f64; 4]> = self
            .points
            .iter()
            .zip(g)
            .map(|(p, g)| std::array::from_fn(|k| p.rows[k][0] * g.re + p.rows[k][1] * g.im))
            .collect();
        // panel totals, and cumulative integrals from each panel start
        let mut totals = vec![[0.0; 4]; self.panels.len()];
        let mut local = vec![[0.0; 4]; n];
        for (pi, p) in self.panels.iter().enumerate() {
            let h = 0.5 * (p.hi - p.lo);
            for k in 0..4 {
                totals[pi][k] = h * (0..m).map(|j| self.rule.weights[j] * dens[p.first + j][k]).sum::<f64>();
            }
            for i in 0..m {
                let row = &self.rule.cumulative[i];
                for k in 0..4 {
                    local[p.first + i][k] = h * (0..m).map(|j| row[j] * dens[p.first + j][k]).sum::<f64>();
                }
            }
        }
        for i in self.n_nodes..n {
            let p = &self.panels[self.points[i].panel];
            let h = 0.5 * (p.hi - p.lo);
            let row = self.points[i].partial.as_ref().expect("extra point");
            for k in 0..4 {
                local[i][k] = h * (0..m).map(|j| row[j] * dens[p.first + j][k]).sum::<f64>();
            }
        }
        // forward sums to each panel start; left panels integrate F_L^{-1} g
        let mut start = vec![[0.0; 4]; self.panels.len()];
        let mut run = [0.0; 4];
        let first_right = self.panels.iter().position(|p| p.side != Side::Left).expect("right panels");
        for pi in 0..first_right {
            start[pi] = run;
            for k in 0..4 {
                run[k] += totals[pi][k];
            }
        }
        let left_total = run;
        let a0: [f64; 4] = std::array::from_fn(|k| (0..4).map(|l| self.minv[(k, l)] * left_total[l]).sum());
        let mut run = a0;
        for pi in first_right..self.panels.len() {
            start[pi] = run;
            for k in 0..4 {
                run[k] += totals[pi][k];
            }
        }
        // backward integrals of alpha^3, alpha^4 on the tail: alpha^3 + i alpha^4 = h e^{-i phi}
        // with h smooth, and int_y^1 h e^{-i phi} = -F(y) e^{-i phi(y)} for the
        // non-oscillatory solution of F' - i phi' F = h (Levin collocation).
        let mut levin_f = Vec::with_capacity(self.levin.len());
        let mut tail_bound: f64 = 0.0;
        for (lu, p) in self.levin.iter().zip(&self.panels[self.first_tail..]) {
            let rhs = nalgebra::DVector::<C>::from_iterator(
                m,
                (0..m).map(|j| {
                    let i = p.first + j;
                    let w = 1.0 / phase_phi_prime(self.points[i].y, self.frame.prm.alpha).abs();
                    C::new(dens[i][2], dens[i][3]) * self.points[i].phase * w
                }),
            );
            let sol = lu.solve(&rhs).ok_or_else(|| Error::Quadrature("singular Levin system".into()))?;
            let vals: Vec<C> = sol.iter().copied().collect();
            let series = crate::cheb::ChebSeries::from_gauss_values(&vals, -1.0, 1.0)?;
            tail_bound = tail_bound.max(series.tail_magnitude(2));
            levin_f.push(vals);
        }
        let tail_b = |i: usize| -> C {
            let pt = &self.points[i];
            let vals = &levin_f[pt.panel - self.first_tail];
            let fval = match &pt.interp {
                Some(row) => (0..m).map(|j| vals[j] * row[j]).sum::<C>(),
                None => vals[i - self.panels[pt.panel].first],
            };
            -fval * pt.phase.conj()
        };
        let anchor_b = -(0..m).map(|j| levin_f[0][j] * self.anchor_row[j]).sum::<C>() * self.points[self.anchor].phase.conj();
        let last_bulk = self.panels.iter().rposition(|p| p.side == Side::Bulk).expect("bulk panels");
        let mut end = vec![C::new(0.0, 0.0); self.panels.len()];
        let mut back = anchor_b;
        for pi in (first_right..=last_bulk).rev() {
            end[pi] = back;
            back += C::new(totals[pi][2], totals[pi][3]);
        }
        let b_at_zero = back;
        let integrals: [f64; 4] = [
            run[0],
            run[1],
            a0[2] + b_at_zero.re,
            a0[3] + b_at_zero.im,
        ];
        let mm = &self.frame.m;
        let m31 = mm[(2, 0)];
        let ck = [mm[(2, 2)] / m31, mm[(2, 3)] / m31];
        let psi = (0..2).map(|j| (mm[(3, 0)] * ck[j] - mm[(3, 2 + j)]) * integrals[2 + j]).sum::<f64>();
        // constants of the left expansion; the f_{L,3} one vanishes identically
        let mut rconst = [0.0; 4];
        for l in [0usize, 1] {
            rconst[l] = (0..2).map(|j| (mm[(l, 0)] * ck[j] - mm[(l, 2 + j)]) * integrals[2 + j]).sum();
        }
        let corr1 = ck[0] * integrals[2] + ck[1] * integrals[3];
        let mut f = vec![C::new(0.0, 0.0); n];
        let mut d = vec![C::new(0.0, 0.0); n];
        for i in 0..n {
            let pt = &self.points[i];
            let panel = &self.panels[pt.panel];
            let cum: [f64; 4] = std::array::from_fn(|k| start[pt.panel][k] + local[i][k]);
            let c: [f64; 4] = match panel.side {
                Side::Left => {
                    let w4 = if regularize { 1.0 - pt.chi } else { 1.0 };
                    [cum[0] + rconst[0], cum[1] + rconst[1], cum[2], cum[3] + w4 * psi]
                }
                Side::Bulk => {
                    let b = end[pt.panel] + C::new(totals[pt.panel][2] - local[i][2], totals[pt.panel][3] - local[i][3]);
                    [cum[0] + corr1, cum[1], -b.re, -b.im]
                }
                Side::Tail => {
                    let b = tail_b(i);
                    [cum[0] + corr1, cum[1], -b.re, -b.im]
                }
            };
            let (mut fv, mut dv) = (C::new(0.0, 0.0), C::new(0.0, 0.0));
            for k in 0..4 {
                fv += pt.cols[k].v * c[k];
                dv += pt.cols[k].d * c[k];
            }
            if regularize && panel.side == Side::Left {
                dv -= pt.cols[3].v * (pt.chi_prime * psi);
            }
            f[i] = fv;
            d[i] = dv;
        }
        Ok(InverseOutput { f, d, psi, integrals, tail_bound })
    }

    /// `L~(h)` at point `i` given `h`, `h'`, `h''` there.
    pub fn ltilde(&self, i: usize, h: C, dh: C, ddh: C) -> C {
        let [p1, p2, q1, q2] = self.points[i].coeffs;
        ddh + p1 * dh + p2 * dh.conj() + q1 * h + q2 * h.conj()
    }

    /// `psi(a, p, g)`.
    pub fn psi(&self, g: &[C]) -> Result<f64> {
        Ok(self.apply(g, false)?.psi)
    }
}

/// `|L~(L~^{-1} g) - g| / |g|` at each of `ys`, with `(L~^{-1} g)''` taken as a
/// fourth-order difference of the returned derivative. Steps shrink with the
/// distance to the endpoints. Near `y = 0`, where the left and right frames
/// meet and `f''` may jump, the stencil is one-sided.
pub fn identity_defect(frame: Frame, g: &dyn Fn(f64) -> C, ys: &[f64], opts: InverseOptions) -> Result<Vec<f64>> {
    let steps: Vec<f64> = ys.iter().map(|&y| 1e-3 * (1.0 + y).min((1.0 - y).powi(3))).collect();
    let one_sided: Vec<Option<f64>> = ys
        .iter()
        .zip(&steps)
        .map(|(&y, &h)| (y.abs() < 2.5 * h).then(|| if y < 0.0 { -h } else { h }))
        .collect();
    let mut extra = Vec::with_capacity(5 * ys.len());
    for ((&y, &h), side) in ys.iter().zip(&steps).zip(&one_sided) {
        match side {
            Some(s) => extra.extend((0..5).map(|k| y + s * k as f64)),
            None => extra.extend([y - 2.0 * h, y - h, y, y + h, y + 2.0 * h]),
        }
    }
    let ps = PointSet::new(frame, &extra, opts)?;
    let gs = ps.sample(g);
    let out = ps.apply(&gs, false)?;
    let base = ps.node_count();
    Ok((0..ys.len())
        .map(|j| {
            let i = base + 5 * j;
            let d = &out.d[i..i + 5];
            let (k, dd) = match one_sided[j] {
                Some(s) => (i, (d[0] * -25.0 + d[1] * 48.0 - d[2] * 36.0 + d[3] * 16.0 - d[4] * 3.0) / (12.0 * s)),
                None => (i + 2, (d[0] - d[1] * 8.0 + d[3] * 8.0 - d[4]) / (12.0 * steps[j])),
            };
            (ps.ltilde(k, out.f[k], out.d[k], dd) - gs[k]).norm() / gs[k].norm()
        })
        .collect())
}

/// Discrete `X` norm over the point set: `sup |f| + sup (1-y^2)|f'|`.
pub fn discrete_norm_x(ys: &[f64], f: &[C], d: &[C]) -> f64 {
    let a = f.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let b = ys.iter().zip(d).map(|(y, v)| (1.0 - y * y) * v.norm()).fold(0.0, f64::max);
    a + b
}

/// Discrete `Y` norm over the point set: `sup (1+y)(1-y)^2 |g|`.
pub fn discrete_norm_y(ys: &[f64], g: &[C]) -> f64 {
    ys.iter().zip(g).map(|(y, v)| (1.0 + y) * (1.0 - y) * (1.0 - y) * v.norm()).fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fundsys::standard;
    use crate::profile_eq::Params;

    #[test]
    fn cutoff_shape() {
        assert_eq!(Cutoff::chi(-0.7), 1.0);
        assert_eq!(Cutoff::chi(0.2), 0.0);
        let mx = (0..=1000).map(|i| Cutoff::chi_prime(-0.5 + 0.5 * i as f64 / 1000.0).abs()).fold(0.0, f64::max);
        assert!((mx - 3.0).abs() < 1e-12);
        let h = 1e-6;
        assert!(((Cutoff::chi(-0.3 + h) - Cutoff::chi(-0.3 - h)) / (2.0 * h) - Cutoff::chi_prime(-0.3)).abs() < 1e-8);
    }

    fn set(extra: &[f64]) -> PointSet<'static> {
        let fr = Frame::new(&standard().unwrap().system, Params::new(0.0, 3.0).unwrap()).unwrap();
        PointSet::new(fr, extra, InverseOptions::default()).unwrap()
    }

    #[test]
    fn zero_and_linearity() {
        let ps = set(&[]);
        let z = ps.apply(&vec![C::new(0.0, 0.0); ps.len()], true).unwrap();
        assert!(z.f.iter().all(|v| v.norm() == 0.0) && z.psi == 0.0);
        let g1 = ps.sample(&|y| C::new(1.0, y) / ((1.0 + y) * (1.0 - y) * (1.0 - y)));
        let g2 = ps.sample(&|y| C::new(y.cos(), -0.3) / (1.0 - y).powi(2));
        let comb: Vec<C> = g1.iter().zip(&g2).map(|(a, b)| a * 2.0 - b * 0.5).collect();
        let (r1, r2, rc) = (ps.apply(&g1, true).unwrap(), ps.apply(&g2, true).unwrap(), ps.apply(&comb, true).unwrap());
        assert!((rc.psi - (2.0 * r1.psi - 0.5 * r2.psi)).abs() < 1e-12 * (1.0 + r1.psi.abs()));
        for i in (0..ps.len()).step_by(97) {
            let e = rc.f[i] - (r1.f[i] * 2.0 - r2.f[i] * 0.5);
            assert!(e.norm() <= 1e-10 * (1.0 + r1.f[i].norm() + r2.f[i].norm()));
        }
    }

    fn frame(a: f64, p: f64) -> Frame<'static> {
        Frame::new(&standard().unwrap().system, Params::new(a, p).unwrap()).unwrap()
    }

    #[test]
    fn inverts_the_operator() {
        let g = |y: f64| (C::new(1.0, 0.4) + C::from_polar(0.5, 3.0 * y)) / ((1.0 + y) * (1.0 - y) * (1.0 - y));
        let mut ys: Vec<f64> = (0..12).map(|i| -0.95 + 1.9 * i as f64 / 11.0).collect();
        ys.extend([-1.3e-3, -2e-4, 1e-4, 1.9e-3]);
        let err = identity_defect(frame(0.0, 3.0), &g, &ys, InverseOptions::default()).unwrap();
        let worst = err.iter().cloned().fold(0.0, f64::max);
        assert!(worst < 1e-8, "{err:?}");
    }

    #[test]
    fn regularization_only_acts_on_the_cutoff_region() {
        let ps = set(&[]);
        let g = ps.sample(&|y| C::new(1.0 + y * y, y.sin()) / (1.0 - y).powi(2));
        let (inv, j) = (ps.apply(&g, false).unwrap(), ps.apply(&g, true).unwrap());
        assert_eq!(inv.psi, j.psi);
        for (i, pt) in ps.points.iter().enumerate() {
            if pt.y < -0.5 || pt.y > 0.0 {
                let diff = if pt.y < -0.5 { (inv.f[i] - j.f[i]).norm() - j.psi.abs() * pt.cols[3].v.norm() } else { (inv.f[i] - j.f[i]).norm() };
                assert!(diff.abs() <= 1e-12 * (1.0 + inv.f[i].norm()), "y = {}", pt.y);
            }
        }
    }

    #[test]
    fn continuous_in_the_parameters() {
        let g = |y: f64| C::new(y.cos(), 1.0) / ((1.0 + y) * (1.0 - y) * (1.0 - y));
        let apply = |p: f64| {
            let ps = PointSet::new(frame(0.0, p), &[-0.7, -0.2, 0.3, 0.8, 0.99], InverseOptions::default()).unwrap();
            let out = ps.apply(&ps.sample(&g), true).unwrap();
            let n = ps.node_count();
            (out.f[n..n + 5].to_vec(), out.psi)
        };
        let (f0, s0) = apply(3.0);
        let mut prev = f64::INFINITY;
        for h in [1e-2, 1e-3, 1e-4] {
            let (f1, s1) = apply(3.0 + h);
            let d = f1.iter().zip(&f0).map(|(a, b)| (a - b).norm()).fold((s1 - s0).abs(), f64::max);
            assert!(d < prev, "h = {h}: {d} after {prev}");
            prev = d;
        }
        assert!(prev < 1e-3);
    }
}
