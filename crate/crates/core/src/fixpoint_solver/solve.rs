//! Eigenvalue search on `psi`, solve records and continuation in `p`.

use super::contraction::{fixed_point, FixedPoint, FixedPointOptions, Problem};
use super::pstar::{generate_pstar, PstarSeed, PstarSolution};
use crate::cheb::ChebSeries;
use crate::error::{Error, Result};
use crate::fundsys::{connection_matrix, Degrees, FundamentalSystem, Reference};
use crate::inverse_op::InverseOptions;
use crate::profile_eq::{norm_x, norm_y_weighted, ChebProfile, FStar, Params, A_STAR, J_STAR};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SolveOptions {
    pub pstar_degree: usize,
    pub degrees: Degrees,
    pub inverse: InverseOptions,
    pub fixed_point: FixedPointOptions,
    /// Bisection stops once the bracket is at most this wide.
    pub tol_a: f64,
    /// Accepted `|psi|` at the returned root.
    pub tol_psi: f64,
    /// Initial half-width of the bracket around the seed.
    pub bracket_start: f64,
    pub bracket_factor: f64,
    pub bracket_cap: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            pstar_degree: 50,
            degrees: Degrees::default(),
            inverse: InverseOptions::default(),
            fixed_point: FixedPointOptions::default(),
            tol_a: 1e-14,
            tol_psi: 1e-12,
            bracket_start: J_STAR,
            bracket_factor: 10.0,
            bracket_cap: 1e-3,
        }
    }
}

impl SolveOptions {
    pub fn validate(&self) -> Result<()> {
        let pos = [self.tol_a, self.tol_psi, self.bracket_start, self.bracket_cap];
        if pos.iter().any(|v| !(*v > 0.0)) || !(self.bracket_factor > 1.0) {
            return Err(Error::Config("tolerances and bracket sizes must be positive".into()));
        }
        if self.bracket_start > self.bracket_cap {
            return Err(Error::Config("bracket start exceeds the cap".into()));
        }
        if self.pstar_degree < 20 || self.degrees.left < 4 || self.degrees.right_p < 4 || self.degrees.right_q < 4 {
            return Err(Error::Config("degrees below their minimum (P_* 20, frame 4)".into()));
        }
        Ok(())
    }
}

/// Everything fixed at one `p`: the spectral `P_*` and a frame generated at `(a_seed, p)`.
pub struct Setup {
    pub p: f64,
    pub pstar: PstarSolution,
    pub a_seed: f64,
    pub system: FundamentalSystem,
}

impl Setup {
    pub fn new(p: f64, seed: Option<&PstarSeed>, opts: &SolveOptions) -> Result<Self> {
        let pstar = generate_pstar(p, opts.pstar_degree, seed)?;
        let a_seed = pstar.alpha - A_STAR;
        let reference = Reference::new(Params::new(a_seed, p)?, &pstar.series)?;
        let system = FundamentalSystem::build(&reference, opts.degrees)?;
        Ok(Self { p, pstar, a_seed, system })
    }
}

/// One probe of `a -> psi(a, p, G(a, p, f_{a,p}))` with a fresh fixed point.
pub struct Probe<'a> {
    pub a: f64,
    pub problem: Problem<'a>,
    pub fixed: FixedPoint,
}

pub fn probe<'a>(setup: &'a Setup, a: f64, opts: &SolveOptions) -> Result<Probe<'a>> {
    let problem = Problem::new(&setup.system, Params::new(a, setup.p)?, &setup.pstar.series, opts.inverse.clone())?;
    let fixed = fixed_point(&problem, &opts.fixed_point)?;
    Ok(Probe { a, problem, fixed })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SolveRecord {
    pub p: f64,
    pub a_p: f64,
    pub alpha_p: f64,
    /// Correction `f_p`; the full profile is `f_*(., a_p, p) + f_p`.
    pub f_p: ChebSeries,
    pub pstar: ChebSeries,
    pub norm_x_fp: f64,
    pub residual_y: f64,
    pub iterations: usize,
    pub contraction_estimate: f64,
    pub psi_at_root: f64,
    pub bracket: [f64; 2],
    pub psi_bracket: [f64; 2],
    pub bisections: usize,
    pub diagnostics: BTreeMap<String, f64>,
}

impl SolveRecord {
    pub fn params(&self) -> Result<Params> {
        Params::new(self.a_p, self.p)
    }

    /// `f_* + f_p` as one series.
    pub fn total_series(&self) -> Result<ChebSeries> {
        let fstar = FStar::new(self.params()?, &self.pstar)?;
        self.pstar.add(&self.f_p).and_then(|s| {
            let mut c = s.coeffs().to_vec();
            c[0] += fstar.shift();
            let (lo, hi) = s.domain();
            ChebSeries::new(c, lo, hi)
        })
    }

    /// `||R(alpha_p, p, f_* + f_p)||_Y` evaluated from the stored series alone.
    pub fn recompute_residual(&self) -> Result<f64> {
        residual_of_correction(self.params()?, &self.pstar, &self.f_p)
    }
}

/// `||R(alpha, p, f_*(., a, p) + h)||_Y` on the standard sup grid.
pub fn residual_of_correction(prm: Params, pstar: &ChebSeries, h: &ChebSeries) -> Result<f64> {
    let total = FStar::new(prm, &pstar.add(h)?)?;
    Ok(norm_y_weighted(&|y| total.weighted_residual(y))?.value)
}

fn record(setup: &Setup, pr: &Probe, bracket: [f64; 2], psi_bracket: [f64; 2], bisections: usize) -> Result<SolveRecord> {
    let f_p = pr.fixed.series(&pr.problem)?;
    let prm = pr.problem.prm;
    let residual_y = residual_of_correction(prm, &setup.pstar.series, &f_p)?;
    let norm_x_fp = norm_x(&ChebProfile::new(f_p.clone()))?.value;
    let mut diagnostics = BTreeMap::new();
    let m = connection_matrix(&setup.system, &prm)?;
    diagnostics.insert("a_seed".into(), setup.a_seed);
    diagnostics.insert("pstar_alpha".into(), setup.pstar.alpha);
    diagnostics.insert("pstar_newton_iterations".into(), setup.pstar.newton.iterations as f64);
    diagnostics.insert("connection_m31".into(), m[(2, 0)]);
    diagnostics.insert("inverse_tail_bound".into(), pr.fixed.tail_bound);
    diagnostics.insert("discrete_norm_x".into(), pr.fixed.norm_x);
    diagnostics.insert("outside_ball".into(), if pr.fixed.outside_ball { 1.0 } else { 0.0 });
    diagnostics.insert("f_p_degree".into(), (f_p.coeffs().len() - 1) as f64);
    let fits = setup.system.left.report.iter().chain(&setup.system.right.report);
    diagnostics.insert("frame_fit_residual".into(), fits.map(|r| r.residual).fold(0.0, f64::max));
    Ok(SolveRecord {
        p: setup.p,
        a_p: pr.a,
        alpha_p: prm.alpha,
        f_p,
        pstar: setup.pstar.series.clone(),
        norm_x_fp,
        residual_y,
        iterations: pr.fixed.iterations,
        contraction_estimate: pr.fixed.contraction_estimate(),
        psi_at_root: pr.fixed.psi,
        bracket,
        psi_bracket,
        bisections,
        diagnostics,
    })
}

/// Bisection on `psi` over `a`, starting from a bracket centred on the
/// spectral seed that widens geometrically until `psi` changes sign.
pub fn locate_a(setup: &Setup, opts: &SolveOptions) -> Result<SolveRecord> {
    opts.validate()?;
    let c = setup.a_seed;
    let mut w = opts.bracket_start;
    let mut tried = Vec::new();
    let (mut lo, mut hi) = loop {
        let lo = probe(setup, c - w, opts)?;
        let hi = probe(setup, c + w, opts)?;
        let (sl, sh) = (lo.fixed.psi, hi.fixed.psi);
        tried.push((w, sl, sh));
        if sl == 0.0 {
            return record(setup, &lo, [lo.a, lo.a], [sl, sl], 0);
        }
        if sh == 0.0 {
            return record(setup, &hi, [hi.a, hi.a], [sh, sh], 0);
        }
        if sl.signum() != sh.signum() {
            break ((lo.a, sl), (hi.a, sh));
        }
        w *= opts.bracket_factor;
        if w > opts.bracket_cap * (1.0 + 1e-12) {
            return Err(Error::Bracketing(format!("no sign change of psi up to half-width {}: {tried:?}", opts.bracket_cap)));
        }
    };
    let mut bisections = 0;
    let mut best: Option<Probe> = None;
    while hi.0 - lo.0 > opts.tol_a {
        let mid = 0.5 * (lo.0 + hi.0);
        if mid <= lo.0 || mid >= hi.0 {
            break;
        }
        let pr = probe(setup, mid, opts)?;
        bisections += 1;
        let s = pr.fixed.psi;
        if s == 0.0 {
            lo = (mid, s);
            hi = (mid, s);
            best = Some(pr);
            break;
        }
        if s.signum() == lo.1.signum() {
            lo = (mid, s);
        } else {
            hi = (mid, s);
        }
        best = Some(pr);
    }
    let root = 0.5 * (lo.0 + hi.0);
    let pr = match best {
        Some(b) if b.a == root => b,
        _ => probe(setup, root, opts)?,
    };
    if !(pr.fixed.psi.abs() <= opts.tol_psi) {
        return Err(Error::MaxIterations(format!(
            "psi = {:e} at the bisection root exceeds {:e}",
            pr.fixed.psi, opts.tol_psi
        )));
    }
    record(setup, &pr, [lo.0, hi.0], [lo.1, hi.1], bisections)
}

/// Full solve at one `p`.
pub fn solve(p: f64, seed: Option<&PstarSeed>, opts: &SolveOptions) -> Result<SolveRecord> {
    let setup = Setup::new(p, seed, opts)?;
    locate_a(&setup, opts)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepEntry {
    pub p: f64,
    pub record: std::result::Result<SolveRecord, String>,
}

/// Solves on `p_grid` by continuation outward from the entry closest to 3; each
/// point seeds `P_*` from its converged neighbour. With `parallel`, the two
/// branches run on separate threads. Failures are recorded and the branch
/// continues from the last success.
pub fn sweep(p_grid: &[f64], opts: &SolveOptions, parallel: bool) -> Result<Vec<SweepEntry>> {
    if p_grid.is_empty() {
        return Err(Error::Config("empty p grid".into()));
    }
    let mut grid = p_grid.to_vec();
    grid.sort_by(|a, b| a.total_cmp(b));
    let centre = (0..grid.len()).min_by(|&i, &j| (grid[i] - 3.0).abs().total_cmp(&(grid[j] - 3.0).abs())).unwrap_or(0);
    let first = SweepEntry { p: grid[centre], record: solve(grid[centre], None, opts).map_err(|e| e.to_string()) };
    let run_branch = |ps: Vec<f64>, start: Option<SolveRecord>| -> Vec<SweepEntry> {
        let mut last = start;
        ps.into_iter()
            .map(|p| {
                let seed = last.as_ref().map(|r| PstarSeed::Profile { series: r.pstar.clone(), alpha: r.alpha_p });
                let rec = solve(p, seed.as_ref(), opts).map_err(|e| e.to_string());
                if let Ok(r) = &rec {
                    last = Some(r.clone());
                }
                SweepEntry { p, record: rec }
            })
            .collect()
    };
    let start = first.record.as_ref().ok().cloned();
    let left: Vec<f64> = grid[..centre].iter().rev().copied().collect();
    let right: Vec<f64> = grid[centre + 1..].to_vec();
    let (l, r) = if parallel {
        std::thread::scope(|s| {
            let hl = s.spawn(|| run_branch(left.clone(), start.clone()));
            let r = run_branch(right.clone(), start.clone());
            (hl.join().unwrap_or_default(), r)
        })
    } else {
        (run_branch(left, start.clone()), run_branch(right, start))
    };
    let mut out: Vec<SweepEntry> = l.into_iter().rev().collect();
    out.push(first);
    out.extend(r);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup3() -> &'static Setup {
        static CELL: std::sync::OnceLock<Setup> = std::sync::OnceLock::new();
        CELL.get_or_init(|| Setup::new(3.0, None, &SolveOptions::default()).unwrap())
    }

    #[test]
    fn eigenvalue_at_cubic_power() {
        let rec = locate_a(setup3(), &SolveOptions::default()).unwrap();
        assert!((rec.alpha_p - A_STAR).abs() <= 1e-6);
        assert!(rec.bracket[1] - rec.bracket[0] <= 1e-14);
        assert!(rec.bracket[0] <= rec.a_p && rec.a_p <= rec.bracket[1]);
        assert!(rec.psi_bracket[0] * rec.psi_bracket[1] <= 0.0);
        assert!(rec.residual_y <= 1e-8 && rec.norm_x_fp <= 1.2e-6);
        assert_eq!(rec.recompute_residual().unwrap(), rec.residual_y);
    }

    #[test]
    fn root_is_stable_under_tolerance_halving() {
        let opts = SolveOptions { tol_a: 1e-13, ..Default::default() };
        let a = locate_a(setup3(), &opts).unwrap().a_p;
        let b = locate_a(setup3(), &SolveOptions { tol_a: 5e-14, ..opts }).unwrap().a_p;
        assert!((a - b).abs() <= 1e-13);
    }

    #[test]
    fn bracket_failure_reports_psi() {
        let opts = SolveOptions { bracket_start: 1e-20, bracket_cap: 1e-19, ..Default::default() };
        match locate_a(setup3(), &opts) {
            Err(Error::Bracketing(msg)) => assert!(msg.contains("no sign change")),
            other => panic!("expected a bracketing error, got {:?}", other.map(|r| r.a_p)),
        }
    }

    #[test]
    fn sweep_continues_from_the_centre() {
        assert!(matches!(sweep(&[], &SolveOptions::default(), false), Err(Error::Config(_))));
        let out = sweep(&[3.02, 3.0, 2.98], &SolveOptions::default(), true).unwrap();
        let ps: Vec<f64> = out.iter().map(|e| e.p).collect();
        assert_eq!(ps, vec![2.98, 3.0, 3.02]);
        let single = locate_a(setup3(), &SolveOptions::default()).unwrap();
        let mid = out[1].record.as_ref().unwrap();
        assert_eq!(mid.alpha_p, single.alpha_p);
        let alphas: Vec<f64> = out.iter().map(|e| e.record.as_ref().unwrap().alpha_p).collect();
        assert!(alphas[0] < alphas[1] && alphas[1] < alphas[2]);
        for e in &out {
            assert!(e.record.as_ref().unwrap().residual_y <= 1e-8);
        }
    }
}
