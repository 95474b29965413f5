//! Invariant suite behind `verify` and the shooting comparison behind `oracle`.

use super::config::RunConfig;
use super::Failure;
use crate::cheb::ChebSeries;
use crate::fixpoint_solver::{locate_a, Setup, SolveRecord};
use crate::fundsys::{FundamentalSystem, Frame};
use crate::inverse_op::{identity_defect, InverseOptions};
use crate::profile_eq::{residual_of, FStar, Params, ProfileFn, I};
use crate::reconstruct::{bound_of_series, conserved_functionals, pde_residual, tail_law, PhysicalProfile};
use crate::shooting_oracle::{integrate_profile_ode, shoot, ShootConfig, ShootResult, CUBIC_SEED};
use num_complex::Complex64 as C;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    /// `"<="` or `">="`.
    pub relation: String,
    pub bound: f64,
    pub pass: bool,
}

impl Check {
    pub fn at_most(name: &str, value: f64, bound: f64) -> Self {
        Self { name: name.into(), value, relation: "<=".into(), bound, pass: value <= bound }
    }

    pub fn at_least(name: &str, value: f64, bound: f64) -> Self {
        Self { name: name.into(), value, relation: ">=".into(), bound, pass: value >= bound }
    }
}

impl std::fmt::Display for Check {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let tag = if self.pass { "PASS" } else { "FAIL" };
        write!(f, "{tag} {:<26} {:>13.6e} {} {:.3e}", self.name, self.value, self.relation, self.bound)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OracleReport {
    pub p: f64,
    pub alpha_spectral: f64,
    pub alpha_shoot: f64,
    pub b_shoot: f64,
    pub c2_residual: f64,
    pub alpha_difference: f64,
    /// `sup_{r in [0, 10]} |e^{-i arg q(0)} q_spectral - q_shoot|`.
    pub profile_difference: f64,
}

/// Shooting at `p` by continuation from the cubic seed in steps of at most 0.05.
pub fn shoot_continued(p: f64, cfg: &ShootConfig) -> crate::Result<ShootResult> {
    let n = ((p - 3.0).abs() / 0.05).ceil().max(1.0) as usize;
    let mut seed = CUBIC_SEED;
    let mut last = None;
    for k in 1..=n {
        let pk = 3.0 + (p - 3.0) * k as f64 / n as f64;
        let s = shoot(pk, seed, cfg)?;
        seed = (s.b_p, s.alpha_p);
        last = Some(s);
    }
    Ok(last.expect("at least one continuation step"))
}

pub fn oracle(rec: &SolveRecord, cfg: &ShootConfig) -> Result<OracleReport, Failure> {
    let shot = shoot_continued(rec.p, cfg).map_err(Failure::tag("shooting_oracle"))?;
    let prof = PhysicalProfile::from_record(rec).map_err(Failure::tag("reconstruct"))?;
    let grid: Vec<f64> = (0..=1000).map(|i| 0.01 * i as f64).collect();
    let traj = integrate_profile_ode(C::new(shot.b_p, 0.0), shot.alpha_p, rec.p, &grid, &cfg.ode)
        .map_err(Failure::tag("shooting_oracle"))?;
    let gauge = C::from_polar(1.0, -prof.q(0.0).arg());
    let profile_difference = grid.iter().zip(&traj.q).map(|(&r, &qs)| (prof.q(r) * gauge - qs).norm()).fold(0.0, f64::max);
    Ok(OracleReport {
        p: rec.p,
        alpha_spectral: rec.alpha_p,
        alpha_shoot: shot.alpha_p,
        b_shoot: shot.b_p,
        c2_residual: shot.c2_residual,
        alpha_difference: (rec.alpha_p - shot.alpha_p).abs(),
        profile_difference,
    })
}

pub fn oracle_checks(o: &OracleReport) -> Vec<Check> {
    vec![
        Check::at_most("oracle_alpha", o.alpha_difference, 1e-6),
        Check::at_most("oracle_profile", o.profile_difference, 1e-5),
    ]
}

/// `max |4i alpha f_*'(1) + (4i alpha/(p-1) - 2) f_*(1)|` over random `(a, p)`.
pub fn boundary_cancellation(pstar: &ChebSeries, p: f64, samples: usize, rng: &mut impl Rng) -> crate::Result<f64> {
    let mut worst = 0.0f64;
    for _ in 0..samples {
        let prm = Params::new(rng.gen_range(-1e-3..1e-3), (p + rng.gen_range(-0.05..0.05)).clamp(2.4, 4.9))?;
        let fs = FStar::new(prm, pstar)?;
        let kappa = 4.0 * I * prm.alpha / (prm.p - 1.0) - 2.0;
        worst = worst.max((4.0 * I * prm.alpha * fs.deriv(1.0) + kappa * fs.value(1.0)).norm());
    }
    Ok(worst)
}

/// Ratios `w(k) / w(k+1)` of `w(k) = (1-y)^3 |R(alpha, p, f_*)|` at `y = 1 - 10^{-k}`, `k = 2..6`.
pub fn boundary_decay(pstar: &ChebSeries, prm: Params) -> crate::Result<Vec<f64>> {
    let fs = FStar::new(prm, pstar)?;
    let w: Vec<f64> = (2..=6)
        .map(|k| {
            let u = 10f64.powi(-k);
            residual_of(&prm, &fs, 1.0 - u).map(|r| u.powi(3) * r.norm())
        })
        .collect::<crate::Result<_>>()?;
    Ok(w.windows(2).map(|v| v[0] / v[1]).collect())
}

/// Largest `|f_L(0) M - F_R(0)|` over values and derivatives, relative to the largest entry.
pub fn frame_continuity(frame: &Frame) -> f64 {
    let glued = frame.columns(0.0);
    let right = frame.right_columns(0.0);
    let mut diff = 0.0f64;
    let mut scale = 0.0f64;
    for (g, r) in glued.iter().zip(&right) {
        diff = diff.max((g.v - r.v).norm()).max((g.d - r.d).norm());
        scale = scale.max(r.v.norm()).max(r.d.norm());
    }
    diff / scale.max(1.0)
}

/// Relative defect of `f_j'' + p1 f_j' + p2 conj(f_j') + q1 f_j + q2 conj(f_j)` at `ys`.
pub fn annihilation(frame: &Frame, ys: &[f64]) -> crate::Result<f64> {
    let mut worst = 0.0f64;
    for &y in ys {
        let [p1, p2, q1, q2] = frame.associated_coeffs(y)?;
        for c in frame.eval(y)?.columns {
            let v = c.dd + p1 * c.d + p2 * c.d.conj() + q1 * c.v + q2 * c.v.conj();
            let scale = c.dd.norm() + (p1 * c.d).norm() + (p2 * c.d).norm() + (q1 * c.v).norm() + (q2 * c.v).norm();
            worst = worst.max(v.norm() / scale);
        }
    }
    Ok(worst)
}

/// Smooth `g = h / ((1+y)(1-y)^2)` with `h = 2 + sum_{k=1}^{6} c_k T_k`, `|c_k| <= 2^{-k}`.
pub fn random_smooth_g(rng: &mut impl Rng) -> impl Fn(f64) -> C {
    let mut c = vec![C::new(2.0, 0.0)];
    for k in 1..=6 {
        let s = 0.5f64.powi(k);
        c.push(C::from_polar(s * rng.gen_range(0.0..1.0), rng.gen_range(0.0..std::f64::consts::TAU)));
    }
    let h = ChebSeries::new(c, -1.0, 1.0).expect("[-1, 1] series");
    move |y| h.eval_unchecked(y) / ((1.0 + y) * (1.0 - y) * (1.0 - y))
}

/// Worst relative inverse defect over `n_g` random `g` at `n_y` random points of `[-0.95, 0.95]`.
pub fn inverse_identity(frame: Frame, n_g: usize, n_y: usize, rng: &mut impl Rng) -> crate::Result<f64> {
    let mut worst = 0.0f64;
    for _ in 0..n_g {
        let g = random_smooth_g(rng);
        let mut ys: Vec<f64> = (0..n_y).map(|_| rng.gen_range(-0.95..0.95)).collect();
        ys.sort_by(f64::total_cmp);
        let err = identity_defect(frame.clone(), &g, &ys, InverseOptions::default())?;
        worst = err.into_iter().fold(worst, f64::max);
    }
    Ok(worst)
}

/// `(t, x)` samples for the finite-difference check.
pub const PDE_POINTS: [(f64, [f64; 3]); 5] = [
    (0.0, [1.0, 0.0, 0.0]),
    (0.0, [0.3, 0.2, -0.1]),
    (0.5, [0.0, 1.5, 0.0]),
    (-2.0, [2.0, 2.0, 1.0]),
    (0.9, [0.1, 0.0, 0.05]),
];

pub fn physics_checks(rec: &SolveRecord, quadrature_tol: f64) -> Result<Vec<Check>, Failure> {
    let tag = Failure::tag("reconstruct");
    let prof = PhysicalProfile::from_record(rec).map_err(&tag)?;
    let fun = conserved_functionals(&prof, quadrature_tol).map_err(&tag)?;
    let tail = tail_law(&prof, 1e2, 1e4, 200).map_err(&tag)?;
    let mut pde = 0.0f64;
    for (t, x) in PDE_POINTS {
        pde = pde.max(pde_residual(&prof, t, x, 1e-2 * (1.0 - t)).map_err(&tag)?.norm());
    }
    Ok(vec![
        Check::at_most("energy_ratio", fun.energy_ratio, 1e-4),
        Check::at_most("tail_modulus_slope", (tail.modulus_slope + 2.0 / (rec.p - 1.0)).abs(), 1e-3),
        Check::at_most("tail_phase_slope", (tail.phase_slope + 1.0 / rec.alpha_p).abs(), 1e-3),
        Check::at_most("pde_residual", pde, 1e-5),
        Check::at_most("correction_bound", bound_of_series(&rec.f_p).map_err(&tag)?, 1.2e-6),
    ])
}

pub fn frame_checks(sys: &FundamentalSystem, rec: &SolveRecord, rng: &mut impl Rng) -> Result<Vec<Check>, Failure> {
    let tag = Failure::tag("fundsys");
    let prm = rec.params().map_err(&tag)?;
    let frame = Frame::new(sys, prm).map_err(&tag)?;
    let ys: Vec<f64> = (0..20).map(|_| rng.gen_range(-0.99..0.99)).filter(|y: &f64| y.abs() > 1e-6).collect();
    let mut out = vec![
        Check::at_most("frame_continuity", frame_continuity(&frame), 1e-12),
        Check::at_most("annihilation", annihilation(&frame, &ys).map_err(&tag)?, 1e-9),
        Check::at_most("connection_m31", frame.m[(2, 0)], -0.2 * 0.95),
    ];
    if (rec.p - 3.0).abs() < 1e-12 {
        let mut pd_min = f64::INFINITY;
        for i in 0..=400 {
            let (pd, _, _) = frame.determinant_decomposition(0.999_999 * i as f64 / 400.0).map_err(&tag)?;
            pd_min = pd_min.min(pd);
        }
        out.push(Check::at_least("p_dr_min", pd_min, 8.0 * 0.9));
    }
    let inv = inverse_identity(frame, 5, 50, rng).map_err(Failure::tag("inverse_op"))?;
    out.push(Check::at_most("inverse_identity", inv, 1e-6));
    Ok(out)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct VerifyReport {
    pub record: SolveRecord,
    pub oracle: OracleReport,
    pub checks: Vec<Check>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

/// Solves at `cfg.p` and runs every invariant on the result.
pub fn verify(cfg: &RunConfig) -> Result<VerifyReport, Failure> {
    let opts = cfg.solve_options();
    let setup = Setup::new(cfg.p, None, &opts).map_err(Failure::tag("fixpoint_solver"))?;
    let rec = locate_a(&setup, &opts).map_err(Failure::tag("fixpoint_solver"))?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut checks = Vec::new();

    let tag = Failure::tag("profile_eq");
    let residual = rec.recompute_residual().map_err(&tag)?;
    checks.push(Check::at_most("residual_y", residual, 1e-8));
    checks.push(Check::at_most("norm_x_fp", rec.norm_x_fp, 1.2e-6));
    checks.push(Check::at_most("bracket_width", rec.bracket[1] - rec.bracket[0], cfg.bisection_tol));
    checks.push(Check::at_most("psi_sign_product", rec.psi_bracket[0] * rec.psi_bracket[1], 0.0));
    let outside = (rec.a_p - rec.a_p.clamp(rec.bracket[0], rec.bracket[1])).abs();
    checks.push(Check::at_most("a_p_outside_bracket", outside, 0.0));
    checks.push(Check::at_most("boundary_cancellation", boundary_cancellation(&rec.pstar, rec.p, 100, &mut rng).map_err(&tag)?, 1e-13));
    let ratios = boundary_decay(&rec.pstar, Params::new(rec.a_p + 1e-3, rec.p).map_err(&tag)?).map_err(&tag)?;
    let spread = ratios.iter().map(|r| (r / 10.0 - 1.0).abs()).fold(0.0, f64::max);
    checks.push(Check::at_most("boundary_linear_decay", spread, 0.1));

    checks.extend(frame_checks(&setup.system, &rec, &mut rng)?);
    checks.extend(physics_checks(&rec, cfg.quadrature_tol)?);

    let mut shoot_cfg = ShootConfig::default();
    shoot_cfg.ode.rtol = cfg.ode_rtol;
    let oracle = oracle(&rec, &shoot_cfg)?;
    checks.extend(oracle_checks(&oracle));
    Ok(VerifyReport { record: rec, oracle, checks })
}
