//! Quadrature: spectral panel integration, adaptive Gauss-Kronrod, and the
//! oscillatory tail near `y = 1`.

use crate::cheb::{gauss_nodes, ChebSeries};
use crate::error::{Error, Result};
use crate::fundsys::phase_phi_prime;
use num_complex::Complex64 as C;

/// Gauss-Legendre nodes and weights on `[-1, 1]`, by Newton on `P_n`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 0 { 1.0 } else if n == 1 { z } else { p1 };
            let pm = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (z * pn - pm) / (z * z - 1.0);
            let dz = pn / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
    }
    (x, w)
}

/// Spectral integration on Chebyshev-Gauss nodes of `[-1, 1]`.
#[derive(Clone, Debug)]
pub struct PanelRule {
    pub nodes: Vec<f64>,
    /// `cumulative[i][j]`: integral from `-1` to `nodes[i]` of the `j`-th cardinal function.
    pub cumulative: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
    /// `diff[i][j]`: derivative of the `j`-th cardinal function at `nodes[i]`.
    pub diff: Vec<Vec<f64>>,
    cardinals: Vec<ChebSeries>,
}

impl PanelRule {
    pub fn new(m: usize) -> Result<Self> {
        let nodes = gauss_nodes(m, -1.0, 1.0)?;
        let mut cardinals = Vec::with_capacity(m);
        let mut derivs = Vec::with_capacity(m);
        for j in 0..m {
            let mut e = vec![C::new(0.0, 0.0); m];
            e[j] = C::new(1.0, 0.0);
            let s = ChebSeries::from_gauss_values(&e, -1.0, 1.0)?;
            derivs.push(s.derivative());
            cardinals.push(s.integral());
        }
        let diff = nodes.iter().map(|&x| derivs.iter().map(|c| c.eval_unchecked(x).re).collect()).collect();
        let cumulative =
            nodes.iter().map(|&x| cardinals.iter().map(|c| c.eval_unchecked(x).re).collect()).collect();
        let weights = cardinals.iter().map(|c| c.eval_unchecked(1.0).re).collect();
        Ok(Self { nodes, cumulative, weights, diff, cardinals })
    }

    /// Integrals from `-1` to `x` of the cardinal functions.
    pub fn partial_row(&self, x: f64) -> Vec<f64> {
        self.cardinals.iter().map(|c| c.eval_unchecked(x).re).collect()
    }

    /// Values of the cardinal functions at `x` (barycentric interpolation row).
    pub fn interp_row(&self, x: f64) -> Vec<f64> {
        let m = self.nodes.len();
        if let Some(j) = self.nodes.iter().position(|&n| n == x) {
            let mut r = vec![0.0; m];
            r[j] = 1.0;
            return r;
        }
        // Chebyshev-Gauss barycentric weights (-1)^j sin((2j+1) pi / 2m).
        let w: Vec<f64> = (0..m)
            .map(|j| {
                let s = ((2 * j + 1) as f64 * std::f64::consts::PI / (2 * m) as f64).sin();
                if j % 2 == 0 {
                    s
                } else {
                    -s
                }
            })
            .collect();
        let terms: Vec<f64> = (0..m).map(|j| w[j] / (x - self.nodes[j])).collect();
        let den: f64 = terms.iter().sum();
        terms.iter().map(|t| t / den).collect()
    }
}

#[derive(Clone, Copy, Debug)]
pub struct QuadOptions {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_subdivisions: usize,
    /// Substitute `x = a + (b-a)(3s^2 - 2s^3)`, which tames integrable endpoint
    /// singularities such as `(b-x)^{-1/2}`.
    pub endpoint_transform: bool,
}

impl Default for QuadOptions {
    fn default() -> Self {
        Self { abs_tol: 1e-12, rel_tol: 1e-12, max_subdivisions: 20_000, endpoint_transform: true }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct QuadResult {
    pub value: C,
    pub error: f64,
    pub evaluations: usize,
    /// Bound on the truncated oscillatory tail, zero if none.
    pub tail_bound: f64,
}

const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
];
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

fn gk15<F: Fn(f64) -> C>(f: &F, a: f64, b: f64) -> (C, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = fc * WGK[7];
    let mut g = fc * WG[3];
    for j in 0..7 {
        let dx = h * XGK[j];
        let s = f(c - dx) + f(c + dx);
        k += s * WGK[j];
        if j % 2 == 1 {
            g += s * WG[j / 2];
        }
    }
    (k * h, ((k - g) * h).norm())
}

/// Adaptive G7K15 on `[a, b]`.
pub fn adaptive<F: Fn(f64) -> C>(f: F, a: f64, b: f64, opts: &QuadOptions) -> Result<QuadResult> {
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::Quadrature(format!("infinite interval [{a}, {b}]")));
    }
    if a == b {
        return Ok(QuadResult { value: C::new(0.0, 0.0), error: 0.0, evaluations: 0, tail_bound: 0.0 });
    }
    let g = |s: f64| -> C {
        if opts.endpoint_transform {
            let x = a + (b - a) * s * s * (3.0 - 2.0 * s);
            f(x) * ((b - a) * 6.0 * s * (1.0 - s))
        } else {
            f(a + (b - a) * s)
        }
    };
    let scale = if opts.endpoint_transform { 1.0 } else { b - a };
    let (v0, e0) = gk15(&g, 0.0, 1.0);
    let mut pieces = vec![(0.0, 1.0, v0 * scale, e0 * scale.abs())];
    let mut evaluations = 15;
    for _ in 0..opts.max_subdivisions {
        let total: C = pieces.iter().map(|p| p.2).sum();
        let err: f64 = pieces.iter().map(|p| p.3).sum();
        if !err.is_finite() || !total.norm().is_finite() {
            return Err(Error::NonFinite("integrand produced non-finite values".into()));
        }
        if err <= opts.abs_tol.max(opts.rel_tol * total.norm()) {
            return Ok(QuadResult { value: total, error: err, evaluations, tail_bound: 0.0 });
        }
        let (idx, _) = pieces
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
            .expect("non-empty");
        let (lo, hi, _, _) = pieces.swap_remove(idx);
        let mid = 0.5 * (lo + hi);
        for (l, h) in [(lo, mid), (mid, hi)] {
            let (v, e) = gk15(&g, l, h);
            pieces.push((l, h, v * scale, e * scale.abs()));
        }
        evaluations += 30;
    }
    let total: C = pieces.iter().map(|p| p.2).sum();
    let err: f64 = pieces.iter().map(|p| p.3).sum();
    Err(Error::Quadrature(format!(
        "tolerance not met after {} subdivisions: value {total}, estimate {err:e}",
        opts.max_subdivisions
    )))
}

/// Oscillatory tail `smooth (1-x)^{q-2} e^{-i phi(x, alpha)}` on `[split, 1)`.
#[derive(Clone, Copy, Debug)]
pub struct OscTail {
    pub alpha: f64,
    pub exponent: f64,
    /// Start of the tail, `1 - u_c`.
    pub split: f64,
}

/// Integration by parts once over `[y, 1)`:
/// `int_y^1 h = h(y) / (i phi'(y)) + remainder`, and a size estimate for the remainder.
pub fn oscillatory_tail(h_y: C, y: f64, tail: &OscTail) -> (C, f64) {
    let u = 1.0 - y;
    let dphi = phase_phi_prime(y, tail.alpha);
    let main = h_y / (C::new(0.0, 1.0) * dphi);
    let bound = main.norm() * ((tail.exponent - 2.0).abs() + 4.0) / (u * dphi.abs());
    (main, bound)
}

/// `int_a^b f`, with an optional oscillatory tail when `b = 1`.
pub fn singular_quadrature<F: Fn(f64) -> C>(
    f: F,
    a: f64,
    b: f64,
    tail: Option<OscTail>,
    opts: &QuadOptions,
) -> Result<QuadResult> {
    if !(a >= -1.0 && b <= 1.0 && a <= b) {
        return Err(Error::Domain(format!("interval [{a}, {b}] not inside [-1, 1]")));
    }
    match tail {
        Some(t) if b == 1.0 => {
            let split = t.split.max(a);
            let mut bulk = adaptive(&f, a, split, &QuadOptions { endpoint_transform: false, ..*opts })?;
            let (v, bound) = oscillatory_tail(f(split), split, &t);
            bulk.value += v;
            bulk.tail_bound = bound;
            bulk.evaluations += 1;
            Ok(bulk)
        }
        _ => adaptive(f, a, b, opts),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fundsys::phase_phi;

    #[test]
    fn legendre_rule_is_exact() {
        let (x, w) = gauss_legendre(10);
        let s: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(18)).sum();
        assert!((s - 2.0 / 19.0).abs() < 1e-14);
        assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn panel_rule_cumulative() {
        let r = PanelRule::new(12).unwrap();
        for (i, &x) in r.nodes.iter().enumerate() {
            let v: f64 = (0..12).map(|j| r.cumulative[i][j] * r.nodes[j].exp()).sum();
            assert!((v - (x.exp() - (-1f64).exp())).abs() < 1e-13);
        }
        for (i, &x) in r.nodes.iter().enumerate() {
            let v: f64 = (0..12).map(|j| r.diff[i][j] * r.nodes[j].sin()).sum();
            assert!((v - x.cos()).abs() < 1e-11);
        }
        let row = r.interp_row(0.3);
        let v: f64 = (0..12).map(|j| row[j] * r.nodes[j].cos()).sum();
        assert!((v - 0.3f64.cos()).abs() < 1e-12);
    }

    #[test]
    fn inverse_square_root_endpoint() {
        let r = singular_quadrature(|x| C::new((1.0 - x).powf(-0.5), 0.0), 0.0, 1.0, None, &QuadOptions::default()).unwrap();
        assert!((r.value.re - 2.0).abs() < 1e-10, "{:?}", r);
    }

    #[test]
    fn brute_force_cross_check() {
        let f = |x: f64| C::new((3.0 * x).sin() / (1.0 + x * x), x.exp());
        let r = singular_quadrature(f, -0.7, 0.9, None, &QuadOptions::default()).unwrap();
        // composite midpoint rule with 10^7 points and Richardson extrapolation
        let brute = |n: usize| {
            let h = 1.6 / n as f64;
            (0..n).map(|k| f(-0.7 + (k as f64 + 0.5) * h)).sum::<C>() * h
        };
        let (b1, b2) = (brute(5_000_000), brute(10_000_000));
        let rich = (b2 * 4.0 - b1) / 3.0;
        assert!((r.value - rich).norm() < 1e-10);
    }

    #[test]
    fn oscillatory_tail_decay() {
        let (al, q) = (1.0, 1.5);
        let h = move |x: f64| C::from_polar((1.0 - x).powf(q - 2.0), -phase_phi(x, al).unwrap());
        let mut prev = None;
        for y in [0.9, 0.99, 0.999] {
            let u: f64 = 1.0 - y;
            let tail = OscTail { alpha: al, exponent: q, split: (1.0 - 0.025f64).max(y) };
            let r = singular_quadrature(h, y, 1.0, Some(tail), &QuadOptions::default()).unwrap();
            let c = r.value.norm() / u.powf(q + 1.0);
            assert!(c < 0.3, "constant {c} at {y}");
            if let Some(p) = prev {
                assert!(c < 2.0 * p);
            }
            prev = Some(c);
        }
    }
}
