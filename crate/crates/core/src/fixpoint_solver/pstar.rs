//! Spectral approximation of the full profile by Newton collocation.
//!
//! The residual is multiplied by `(1+y)(1-y)^3`, so the rows at `y = +-1` are
//! exactly the two boundary conditions. Unknowns are the complex nodal values on
//! the Gauss-Lobatto grid and `alpha`; the extra row fixes the gauge `Im f(0) = 0`.

use crate::cheb::{lobatto_diff_matrix, lobatto_interp_row, lobatto_nodes, ChebSeries};
use crate::error::{Error, Result};
use crate::newton::{damped_newton, NewtonOptions, NewtonReport};
use crate::profile_eq::{modulus_power, nonlinear_weights, EqConsts, I};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C;
use serde::{Deserialize, Serialize};

/// Starting point for the Newton iteration.
#[derive(Clone, Debug)]
pub enum PstarSeed {
    /// `amp exp(-r^2/4)(1+r)` with `r = (1+y)/(1-y)`.
    Bump { amp: f64, alpha: f64 },
    /// A previously converged profile, e.g. at a neighbouring `p`.
    Profile { series: ChebSeries, alpha: f64 },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PstarSolution {
    pub series: ChebSeries,
    pub alpha: f64,
    pub p: f64,
    pub newton: NewtonReport,
}

/// Weighted coefficients: `w R = a2 f'' + a1 f' + a0 f + an f|f|^{p-1}`.
struct Weighted {
    a2: Vec<f64>,
    a1: Vec<C>,
    a0: Vec<C>,
    an: Vec<f64>,
}

fn weighted(x: &[f64], alpha: f64, p: f64) -> Weighted {
    let k = EqConsts::new(alpha, p);
    let mut w = Weighted { a2: vec![], a1: vec![], a0: vec![], an: vec![] };
    for &y in x {
        let (u, t) = (1.0 - y, 1.0 + y);
        let ia = I * alpha;
        w.a2.push(t * u * u * u);
        w.a1.push(t * (4.0 * ia - 2.0 * ia * u - k.c1 * (u * u)) + 2.0 * u * u * u);
        w.a0.push(t * (k.kappa + k.c2 * u - k.c * (u * u)) - k.c * (u * u * u));
        w.an.push(t * u);
    }
    w
}

struct Collocation {
    n: usize,
    p: f64,
    x: Vec<f64>,
    d: DMatrix<f64>,
    d2: DMatrix<f64>,
    phase_row: Vec<f64>,
}

impl Collocation {
    fn new(n: usize, p: f64) -> Result<Self> {
        let m = n + 1;
        let d = DMatrix::from_row_slice(m, m, &lobatto_diff_matrix(n));
        let d2 = &d * &d;
        Ok(Self { n, p, x: lobatto_nodes(n, -1.0, 1.0)?, d, d2, phase_row: lobatto_interp_row(n, 0.0) })
    }

    fn split(&self, z: &DVector<f64>) -> (Vec<C>, f64) {
        let m = self.n + 1;
        let f = (0..m).map(|j| C::new(z[j], z[m + j])).collect();
        (f, z[2 * m])
    }

    fn apply_d(&self, mat: &DMatrix<f64>, f: &[C]) -> Vec<C> {
        let m = self.n + 1;
        (0..m)
            .map(|i| (0..m).fold(C::new(0.0, 0.0), |s, j| s + f[j] * mat[(i, j)]))
            .collect()
    }

    fn residual(&self, z: &DVector<f64>) -> DVector<f64> {
        let m = self.n + 1;
        let (f, alpha) = self.split(z);
        let w = weighted(&self.x, alpha, self.p);
        let d1 = self.apply_d(&self.d, &f);
        let d2 = self.apply_d(&self.d2, &f);
        let mut r = DVector::zeros(2 * m + 1);
        for i in 0..m {
            let v = w.a2[i] * d2[i]
                + w.a1[i] * d1[i]
                + w.a0[i] * f[i]
                + w.an[i] * f[i] * modulus_power(f[i], self.p - 1.0);
            r[i] = v.re;
            r[m + i] = v.im;
        }
        r[2 * m] = (0..m).map(|j| self.phase_row[j] * f[j].im).sum();
        r
    }

    fn jacobian(&self, z: &DVector<f64>, r: &DVector<f64>) -> DMatrix<f64> {
        let m = self.n + 1;
        let (f, alpha) = self.split(z);
        let w = weighted(&self.x, alpha, self.p);
        let mut jm = DMatrix::zeros(2 * m + 1, 2 * m + 1);
        for i in 0..m {
            let (aa, bb) = nonlinear_weights(self.p, f[i]).unwrap_or((0.0, C::new(0.0, 0.0)));
            for j in 0..m {
                let mut lc = w.a1[i] * self.d[(i, j)] + w.a2[i] * self.d2[(i, j)];
                let mut lb = C::new(0.0, 0.0);
                if i == j {
                    lc += w.a0[i] + w.an[i] * aa;
                    lb = w.an[i] * bb;
                }
                // d/d(Re f_j) and d/d(Im f_j) of the complex row
                let ju = lc + lb;
                let jv = I * (lc - lb);
                jm[(i, j)] = ju.re;
                jm[(m + i, j)] = ju.im;
                jm[(i, m + j)] = jv.re;
                jm[(m + i, m + j)] = jv.im;
            }
        }
        for j in 0..m {
            jm[(2 * m, m + j)] = self.phase_row[j];
        }
        let h = 1e-7 * alpha.abs().max(1.0);
        let mut zp = z.clone();
        zp[2 * m] += h;
        let col = (self.residual(&zp) - r) / h;
        jm.set_column(2 * m, &col);
        jm
    }
}

fn seed_values(seed: &PstarSeed, x: &[f64]) -> (Vec<C>, f64) {
    match seed {
        PstarSeed::Bump { amp, alpha } => {
            let vals = x
                .iter()
                .map(|&y| {
                    let r = if y >= 1.0 { 30.0 } else { ((1.0 + y) / (1.0 - y)).min(30.0) };
                    C::new(amp * (-0.25 * r * r).exp() * (1.0 + r), 0.0)
                })
                .collect();
            (vals, *alpha)
        }
        PstarSeed::Profile { series, alpha } => {
            (x.iter().map(|&y| series.eval_unchecked(y)).collect(), *alpha)
        }
    }
}

/// Newton collocation for `R(alpha, p, f) = 0` at the given degree.
pub fn solve_pstar(p: f64, degree: usize, seed: &PstarSeed) -> Result<PstarSolution> {
    if degree < 20 {
        return Err(Error::Config(format!("P_* degree {degree} below the minimum of 20")));
    }
    let col = Collocation::new(degree, p)?;
    let m = degree + 1;
    let (f0, a0) = seed_values(seed, &col.x);
    let mut z = DVector::zeros(2 * m + 1);
    for j in 0..m {
        z[j] = f0[j].re;
        z[m + j] = f0[j].im;
    }
    z[2 * m] = a0;
    let opts = NewtonOptions { tol: 1e-13, max_iter: 80, min_step: 1.0 / 4096.0 };
    let (z, newton) = damped_newton(z, |z| col.residual(z), |z, r| col.jacobian(z, r), &opts)?;
    let (mut f, alpha) = col.split(&z);
    if !(alpha > 0.0) {
        return Err(Error::Divergence(format!("Newton produced alpha = {alpha}")));
    }
    let f0 = (0..m).map(|j| col.phase_row[j] * f[j].re).sum::<f64>();
    if f0 < 0.0 {
        f.iter_mut().for_each(|v| *v = -*v);
    }
    let series = ChebSeries::from_lobatto_values(&f, -1.0, 1.0)?;
    Ok(PstarSolution { series, alpha, p, newton })
}

/// Amplitudes tried, in order, when no continuation seed is available.
const AMPLITUDE_SCAN: [f64; 5] = [1.8, 1.5, 2.1, 1.2, 2.5];

/// `P_*` and `alpha_seed` at `p`, starting from a bump scan when `seed` is `None`.
pub fn generate_pstar(p: f64, degree: usize, seed: Option<&PstarSeed>) -> Result<PstarSolution> {
    if let Some(s) = seed {
        return solve_pstar(p, degree, s);
    }
    let mut last = None;
    for &alpha in &[0.9, 1.0] {
        for &amp in &AMPLITUDE_SCAN {
            match solve_pstar(p, degree, &PstarSeed::Bump { amp, alpha }) {
                Ok(sol) => return Ok(sol),
                Err(e) => last = Some(e),
            }
        }
    }
    Err(last.unwrap_or_else(|| Error::MaxIterations("amplitude scan exhausted".into())))
}
