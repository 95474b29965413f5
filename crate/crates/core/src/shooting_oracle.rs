//! Shooting for the radial profile equation
//! `q'' + (2/r + i alpha r) q' + (2i alpha/(p-1) - 1) q + q|q|^{p-1} = 0`.
//!
//! The tail of a generic solution is `c1 Q1 + c2 Q2` with
//! `Q1 ~ r^{-2/(p-1) - i/alpha}` and `Q2 ~ exp(-i alpha r^2/2) r^{2/(p-1) - 3 + i/alpha}`.
//! The profile is the one with `c2 = 0`.

use crate::error::{Error, Result};
use crate::profile_eq::{modulus_power, nonlinear_weights, I};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RadialTrajectory {
    pub r_grid: Vec<f64>,
    pub q: Vec<C>,
    pub q_prime: Vec<C>,
    pub alpha: f64,
    pub p: f64,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    pub r0: f64,
    pub max_steps: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        Self { rtol: 1e-12, atol: 1e-15, r0: 1e-3, max_steps: 2_000_000 }
    }
}

type State = [C; 2];

fn rhs(r: f64, s: &State, alpha: f64, p: f64) -> State {
    let k = C::new(-1.0, 2.0 * alpha / (p - 1.0));
    let (q, dq) = (s[0], s[1]);
    let ddq = -(2.0 / r + I * alpha * r) * dq - k * q - q * modulus_power(q, p - 1.0);
    [dq, ddq]
}

/// Taylor seed `q = b + c2 r^2 + c4 r^4` at `r0`.
pub fn taylor_seed(b: C, alpha: f64, p: f64) -> Result<(C, C)> {
    let k = C::new(-1.0, 2.0 * alpha / (p - 1.0));
    let c2 = -(k * b + b * modulus_power(b, p - 1.0)) / 6.0;
    let (a, bb) = nonlinear_weights(p, b)?;
    let c4 = -((2.0 * I * alpha + k) * c2 + a * c2 + bb * c2.conj()) / 20.0;
    Ok((c2, c4))
}

// Dormand-Prince 5(4) tableau.
const A21: f64 = 1.0 / 5.0;
const A3: [f64; 2] = [3.0 / 40.0, 9.0 / 40.0];
const A4: [f64; 3] = [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0];
const A5: [f64; 4] = [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0];
const A6: [f64; 5] =
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0];
const B5: [f64; 6] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];
const CS: [f64; 6] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0];

fn comb(y: &State, h: f64, ks: &[State], w: &[f64]) -> State {
    let mut out = *y;
    for (k, &wi) in ks.iter().zip(w) {
        out[0] += k[0] * (h * wi);
        out[1] += k[1] * (h * wi);
    }
    out
}

/// One adaptive Dormand-Prince integration from `(r, y)` to `r_end`.
fn integrate_segment<F: Fn(f64, &State) -> State>(
    f: &F,
    r: &mut f64,
    y: &mut State,
    r_end: f64,
    h: &mut f64,
    opts: &OdeOptions,
    steps: &mut usize,
) -> Result<()> {
    while *r < r_end {
        if *steps > opts.max_steps {
            return Err(Error::Integration(format!("step budget exhausted at r = {}", *r)));
        }
        let hh = h.min(r_end - *r);
        let k1 = f(*r, y);
        let k2 = f(*r + CS[1] * hh, &comb(y, hh, &[k1], &[A21]));
        let k3 = f(*r + CS[2] * hh, &comb(y, hh, &[k1, k2], &A3));
        let k4 = f(*r + CS[3] * hh, &comb(y, hh, &[k1, k2, k3], &A4));
        let k5 = f(*r + CS[4] * hh, &comb(y, hh, &[k1, k2, k3, k4], &A5));
        let k6 = f(*r + CS[5] * hh, &comb(y, hh, &[k1, k2, k3, k4, k5], &A6));
        let y5 = comb(y, hh, &[k1, k2, k3, k4, k5, k6], &B5);
        let k7 = f(*r + hh, &y5);
        let y4 = comb(y, hh, &[k1, k2, k3, k4, k5, k6, k7], &B4);
        let mut err: f64 = 0.0;
        for i in 0..2 {
            let sc = opts.atol + opts.rtol * y[i].norm().max(y5[i].norm());
            err = err.max((y5[i] - y4[i]).norm() / sc);
        }
        *steps += 1;
        if !err.is_finite() || y5.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::Integration(format!("overflow near r = {}", *r)));
        }
        if err <= 1.0 {
            *r += hh;
            *y = y5;
        }
        let fac = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
        *h = hh * fac;
        if *h < 1e-14 * r.abs().max(1.0) {
            return Err(Error::Integration(format!("step size collapse at r = {}", *r)));
        }
    }
    Ok(())
}

/// Integrates from the regular origin and reports the solution at `outputs`
/// (increasing, each at least `r0`; values below `r0` use the Taylor seed).
pub fn integrate_profile_ode(
    b: C,
    alpha: f64,
    p: f64,
    outputs: &[f64],
    opts: &OdeOptions,
) -> Result<RadialTrajectory> {
    if !(alpha > 0.0) {
        return Err(Error::Domain(format!("alpha = {alpha} must be positive")));
    }
    if outputs.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::Domain("output grid must be increasing".into()));
    }
    let (c2, c4) = taylor_seed(b, alpha, p)?;
    let seed = |r: f64| -> State {
        let r2 = r * r;
        [b + c2 * r2 + c4 * r2 * r2, c2 * (2.0 * r) + c4 * (4.0 * r2 * r)]
    };
    let f = |r: f64, s: &State| rhs(r, s, alpha, p);
    let mut r = opts.r0;
    let mut y = seed(r);
    let mut h = 1e-3;
    let mut steps = 0;
    let mut traj = RadialTrajectory {
        r_grid: Vec::with_capacity(outputs.len()),
        q: Vec::with_capacity(outputs.len()),
        q_prime: Vec::with_capacity(outputs.len()),
        alpha,
        p,
    };
    for &ro in outputs {
        let s = if ro <= opts.r0 {
            seed(ro)
        } else {
            integrate_segment(&f, &mut r, &mut y, ro, &mut h, opts, &mut steps)?;
            y
        };
        traj.r_grid.push(ro);
        traj.q.push(s[0]);
        traj.q_prime.push(s[1]);
    }
    Ok(traj)
}

/// Amplitudes of the two asymptotic families on the fit window.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct TailFit {
    pub c1: C,
    pub c2: C,
    pub condition: f64,
}

/// Terms kept in each asymptotic family.
const FAMILY_1_TERMS: usize = 3;
const FAMILY_2_TERMS: usize = 2;

/// Least-squares fit on the samples of `traj` inside `[r1, r2]`.
pub fn tail_decompose(traj: &RadialTrajectory, window: (f64, f64)) -> Result<TailFit> {
    let (r1, r2) = window;
    if r1 < 10.0 || r2 <= r1 {
        return Err(Error::Domain(format!("fit window [{r1}, {r2}] must satisfy 10 <= r1 < r2")));
    }
    let (alpha, p) = (traj.alpha, traj.p);
    let mu = C::new(-2.0 / (p - 1.0), -1.0 / alpha);
    let nu = C::new(2.0 / (p - 1.0) - 3.0, 1.0 / alpha);
    let idx: Vec<usize> =
        (0..traj.r_grid.len()).filter(|&i| traj.r_grid[i] >= r1 && traj.r_grid[i] <= r2).collect();
    let ncol = FAMILY_1_TERMS + FAMILY_2_TERMS;
    if idx.len() < 2 * ncol {
        return Err(Error::Domain("too few samples in the fit window".into()));
    }
    let mut a = DMatrix::<C>::zeros(idx.len(), ncol);
    let mut rhs_v = DVector::<C>::zeros(idx.len());
    for (row, &i) in idx.iter().enumerate() {
        let r = traj.r_grid[i];
        let lr = r.ln();
        let osc = (-I * (0.5 * alpha * r * r)).exp();
        for k in 0..FAMILY_1_TERMS {
            a[(row, k)] = ((mu - 2.0 * k as f64) * lr).exp();
        }
        for k in 0..FAMILY_2_TERMS {
            a[(row, FAMILY_1_TERMS + k)] = osc * ((nu - 2.0 * k as f64) * lr).exp();
        }
        rhs_v[row] = traj.q[i];
    }
    // column equilibration before the conditioning check
    let scales: Vec<f64> = (0..ncol).map(|k| 1.0 / a.column(k).norm()).collect();
    for k in 0..ncol {
        let s = scales[k];
        a.column_mut(k).iter_mut().for_each(|v| *v *= s);
    }
    let svd = a.svd(true, true);
    let sv = &svd.singular_values;
    let condition = sv.max() / sv.min();
    if !(condition <= 1e8) {
        return Err(Error::Fit(format!("tail fit condition {condition:e} exceeds 1e8")));
    }
    let x = svd.solve(&rhs_v, 0.0).map_err(|e| Error::Fit(e.to_string()))?;
    Ok(TailFit {
        c1: x[0] * scales[0],
        c2: x[FAMILY_1_TERMS] * scales[FAMILY_1_TERMS],
        condition,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ShootConfig {
    pub r_max: f64,
    pub window: (f64, f64),
    pub samples: usize,
    pub ode: OdeOptions,
    pub max_iter: usize,
    pub fd_step: f64,
    pub tol: f64,
}

impl Default for ShootConfig {
    fn default() -> Self {
        Self {
            r_max: 50.0,
            window: (20.0, 40.0),
            samples: 401,
            ode: OdeOptions::default(),
            max_iter: 30,
            fd_step: 1e-7,
            tol: 1e-12,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ShootResult {
    pub alpha_p: f64,
    pub b_p: f64,
    pub c2_residual: f64,
    pub iterations: usize,
    pub residual_path: Vec<f64>,
}

fn fit_for(b: f64, alpha: f64, p: f64, cfg: &ShootConfig) -> Result<TailFit> {
    let (r1, r2) = cfg.window;
    let n = cfg.samples.max(20);
    let mut grid: Vec<f64> = (0..n).map(|i| r1 + (r2 - r1) * i as f64 / (n - 1) as f64).collect();
    grid.push(cfg.r_max.max(r2));
    let traj = integrate_profile_ode(C::new(b, 0.0), alpha, p, &grid, &cfg.ode)?;
    tail_decompose(&traj, cfg.window)
}

/// Newton on `(b, alpha)` driving `c2` to zero.
pub fn shoot(p: f64, seed: (f64, f64), cfg: &ShootConfig) -> Result<ShootResult> {
    let (mut b, mut alpha) = seed;
    let mut fit = fit_for(b, alpha, p, cfg)?;
    let mut path = vec![fit.c2.norm() / fit.c1.norm()];
    for it in 0..cfg.max_iter {
        let rel = fit.c2.norm() / fit.c1.norm();
        if fit.c2.norm() <= cfg.tol * fit.c1.norm().max(1.0) {
            return Ok(ShootResult { alpha_p: alpha, b_p: b, c2_residual: rel, iterations: it, residual_path: path });
        }
        let hb = cfg.fd_step * b.abs().max(1e-3);
        let ha = cfg.fd_step * alpha;
        let fb = fit_for(b + hb, alpha, p, cfg)?;
        let fa = fit_for(b, alpha + ha, p, cfg)?;
        let j = nalgebra::Matrix2::new(
            (fb.c2.re - fit.c2.re) / hb,
            (fa.c2.re - fit.c2.re) / ha,
            (fb.c2.im - fit.c2.im) / hb,
            (fa.c2.im - fit.c2.im) / ha,
        );
        let d = j
            .lu()
            .solve(&nalgebra::Vector2::new(-fit.c2.re, -fit.c2.im))
            .ok_or_else(|| Error::Fit(format!("singular shooting Jacobian at iteration {it}")))?;
        let mut lam = 1.0;
        loop {
            let (bn, an) = (b + lam * d[0], alpha + lam * d[1]);
            if bn > 0.0 && an > 0.0 {
                if let Ok(fnew) = fit_for(bn, an, p, cfg) {
                    if fnew.c2.norm() < fit.c2.norm() {
                        b = bn;
                        alpha = an;
                        fit = fnew;
                        break;
                    }
                }
            }
            lam *= 0.5;
            if lam < 1e-3 {
                let rel = fit.c2.norm() / fit.c1.norm();
                if rel <= 1e-6 {
                    return Ok(ShootResult { alpha_p: alpha, b_p: b, c2_residual: rel, iterations: it, residual_path: path });
                }
                return Err(Error::MaxIterations(format!(
                    "shooting stagnated; |c2|/|c1| path {path:?}"
                )));
            }
        }
        path.push(fit.c2.norm() / fit.c1.norm());
    }
    let rel = fit.c2.norm() / fit.c1.norm();
    if rel <= 1e-6 {
        return Ok(ShootResult { alpha_p: alpha, b_p: b, c2_residual: rel, iterations: cfg.max_iter, residual_path: path });
    }
    Err(Error::MaxIterations(format!("shooting did not converge; |c2|/|c1| path {path:?}")))
}

/// Default seed for the cubic case.
pub const CUBIC_SEED: (f64, f64) = (1.9, 0.92);
