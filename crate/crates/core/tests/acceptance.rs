//! Acceptance suite: one line per criterion, nonzero exit if any fails.

use num_complex::Complex64 as C;
use pnls::cheb::ChebSeries;
use pnls::cli::run_with;
use pnls::fixpoint_solver::{sweep, SolveOptions, SolveRecord, SweepEntry};
use pnls::fundsys::{standard, Frame};
use pnls::inverse_op::{identity_defect, InverseOptions};
use pnls::profile_eq::{residual_r, FStar, Params, ProfileFn, J_STAR};
use pnls::reconstruct::{conserved_functionals, pde_residual, tail_law, PhysicalProfile};
use pnls::shooting_oracle::{integrate_profile_ode, shoot, ShootConfig, CUBIC_SEED};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::time::{Duration, Instant};

/// The eigenvalue anchor as the quotient of its two integers.
const A_STAR_NUM: f64 = 772201763088846.0;
const A_STAR_DEN: f64 = 841768781900003.0;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn le(name: &str, v: f64, bound: f64) -> (bool, String) {
    (v <= bound, format!("{name} = {v:.3e} (<= {bound:e})"))
}

fn combine(parts: Vec<(bool, String)>) -> Outcome {
    let pass = parts.iter().all(|p| p.0);
    outcome(pass, parts.into_iter().map(|p| p.1).collect::<Vec<_>>().join("; "))
}

fn dense_grid() -> Vec<f64> {
    let mut ys: Vec<f64> = (1..4000).map(|i| -(std::f64::consts::PI * i as f64 / 4000.0).cos()).collect();
    for k in 1..=70 {
        let u = 0.5f64.powf(k as f64 * 0.25);
        ys.push(-1.0 + u);
        ys.push(1.0 - u);
    }
    ys.retain(|y| y.abs() < 1.0);
    ys
}

/// `sup (1+y)(1-y)^2 |R(alpha, p, f)|` from the pointwise residual. The direct
/// boundary bracket loses digits like `1/(1-y)`, so the right end uses points
/// with `1 - y >= 1e-4` and the value at `y = 1` is extrapolated from four of them.
fn residual_y(rec: &SolveRecord, ys: &[f64]) -> f64 {
    let prm = Params::from_alpha(rec.alpha_p, rec.p).unwrap();
    let f = rec.total_series().unwrap();
    let (d1, d2) = (f.derivative(), f.derivative().derivative());
    let w = |y: f64| {
        let r = residual_r(&prm, y, f.eval_unchecked(y), d1.eval_unchecked(y), d2.eval_unchecked(y)).unwrap();
        r * (1.0 + y) * (1.0 - y) * (1.0 - y)
    };
    let interior = ys
        .iter()
        .filter(|&&y| y > -1.0 + 1e-7 && y < 1.0 - 1e-4)
        .map(|&y| w(y).norm())
        .fold(0.0, f64::max);
    // Neville to u = 0 on u = k * 1e-4, k = 1..4
    let us = [1e-4, 2e-4, 3e-4, 4e-4];
    let mut t: Vec<C> = us.iter().map(|&u| w(1.0 - u)).collect();
    for m in 1..us.len() {
        for i in 0..us.len() - m {
            t[i] = (t[i + 1] * us[i] - t[i] * us[i + m]) / (us[i] - us[i + m]);
        }
    }
    interior.max(t[0].norm())
}

fn norm_x(h: &ChebSeries, ys: &[f64]) -> f64 {
    let d = h.derivative();
    let a = ys.iter().chain([-1.0, 1.0].iter()).map(|&y| h.eval_unchecked(y).norm()).fold(0.0, f64::max);
    let b = ys.iter().map(|&y| (1.0 - y * y) * d.eval_unchecked(y).norm()).fold(0.0, f64::max);
    a + b
}

fn criterion_1() -> (Outcome, Option<SolveRecord>) {
    let dir = std::env::temp_dir().join(format!("pnls-acceptance-{}", std::process::id()));
    let d = dir.to_string_lossy().into_owned();
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let t = Instant::now();
    let code = run_with(["pnls", "solve", "--p", "3", "--output-dir", &d], None, &mut out, &mut err);
    let elapsed = t.elapsed();
    let rec = std::fs::read_to_string(dir.join("solve_p3.000000.json"))
        .ok()
        .and_then(|s| serde_json::from_str::<serde_json::Value>(&s).ok())
        .and_then(|v| serde_json::from_value::<SolveRecord>(v["result"].clone()).ok());
    let _ = std::fs::remove_dir_all(&dir);
    let Some(rec) = rec else {
        return (outcome(false, format!("solve exited {code}: {}", String::from_utf8_lossy(&err))), None);
    };
    let diff = (rec.alpha_p - A_STAR_NUM / A_STAR_DEN).abs();
    let o = combine(vec![
        (code == 0, format!("exit {code}")),
        le("|alpha_3 - a_*|", diff, 1e-6),
        (elapsed <= Duration::from_secs(300), format!("{:.1} s (<= 300 s)", elapsed.as_secs_f64())),
    ]);
    (o, Some(rec))
}

fn find(entries: &[SweepEntry], p: f64) -> Option<&SolveRecord> {
    entries.iter().find(|e| (e.p - p).abs() < 1e-9).and_then(|e| e.record.as_ref().ok())
}

fn criterion_2(entries: &[SweepEntry]) -> Outcome {
    let t = Instant::now();
    let cfg = ShootConfig::default();
    let mut parts = Vec::new();
    let mut seed = CUBIC_SEED;
    for p in [3.0, 2.9, 3.1] {
        let Some(rec) = find(entries, p) else {
            parts.push((false, format!("no spectral record at p = {p}")));
            continue;
        };
        // continue from p = 3 in two steps on each side
        let mut s = None;
        let path: Vec<f64> = if p == 3.0 { vec![3.0] } else { vec![0.5 * (3.0 + p), p] };
        let mut local = seed;
        for pk in path {
            match shoot(pk, local, &cfg) {
                Ok(r) => {
                    local = (r.b_p, r.alpha_p);
                    s = Some(r);
                }
                Err(e) => {
                    s = None;
                    parts.push((false, format!("shooting at p = {pk}: {e}")));
                    break;
                }
            }
        }
        let Some(s) = s else { continue };
        if p == 3.0 {
            seed = (s.b_p, s.alpha_p);
        }
        let prof = PhysicalProfile::from_record(rec).unwrap();
        let rs: Vec<f64> = (0..=2000).map(|i| 0.005 * i as f64).collect();
        let traj = integrate_profile_ode(C::new(s.b_p, 0.0), s.alpha_p, p, &rs, &cfg.ode).unwrap();
        let g = prof.q(0.0).conj() / prof.q(0.0).norm();
        let sup = rs.iter().zip(&traj.q).map(|(&r, &q)| (prof.q(r) * g - q).norm()).fold(0.0, f64::max);
        let da = (s.alpha_p - rec.alpha_p).abs();
        parts.push((da <= 1e-6 && sup <= 1e-5, format!("p={p}: |dalpha| = {da:.1e} (<= 1e-6), sup |dq| = {sup:.1e} (<= 1e-5)")));
    }
    let el = t.elapsed();
    parts.push((el <= Duration::from_secs(900), format!("{:.1} s (<= 900 s)", el.as_secs_f64())));
    combine(parts)
}

fn criterion_3(entries: &[SweepEntry], ys: &[f64]) -> Outcome {
    let mut worst = 0.0f64;
    let mut failed = Vec::new();
    for e in entries {
        match &e.record {
            Ok(r) => worst = worst.max(residual_y(r, ys)),
            Err(msg) => failed.push(format!("p={} {msg}", e.p)),
        }
    }
    combine(vec![
        (failed.is_empty(), format!("{} of {} records solved", entries.len() - failed.len(), entries.len())),
        le("max residual_y", worst, 1e-8),
    ])
}

fn criterion_4(rec: &SolveRecord, ys: &[f64]) -> Outcome {
    combine(vec![le("||f_p||_X at p=3", norm_x(&rec.f_p, ys), 1.2e-6)])
}

fn criterion_5(rng: &mut ChaCha8Rng) -> Outcome {
    let st = standard().unwrap();
    let frame = Frame::new(&st.system, Params::new(0.0, 3.0).unwrap()).unwrap();
    let mut worst = 0.0f64;
    for _ in 0..5 {
        let c: Vec<C> = (0..5).map(|k| C::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)) * 0.4f64.powi(k)).collect();
        let w = rng.gen_range(0.5..3.0);
        let g = move |y: f64| {
            let h = C::new(1.5, 0.0) + c.iter().enumerate().map(|(k, ck)| ck * (w * k as f64 * y).cos()).sum::<C>() * 0.5;
            h / ((1.0 + y) * (1.0 - y) * (1.0 - y))
        };
        let mut ys: Vec<f64> = (0..50).map(|_| rng.gen_range(-0.95..0.95)).collect();
        ys.sort_by(f64::total_cmp);
        let e = identity_defect(frame.clone(), &g, &ys, InverseOptions::default()).unwrap();
        worst = e.into_iter().fold(worst, f64::max);
    }
    combine(vec![le("max relative defect over 5 g x 50 y", worst, 1e-6)])
}

fn criterion_6(rng: &mut ChaCha8Rng) -> Outcome {
    let pstar = &standard().unwrap().pstar.series;
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let prm = Params::new(rng.gen_range(-0.05..0.05), rng.gen_range(2.9..3.1)).unwrap();
        let fs = FStar::new(prm, pstar).unwrap();
        let (f1, d1) = (fs.value(1.0), fs.deriv(1.0));
        let ia = C::new(0.0, prm.alpha);
        worst = worst.max((ia * 4.0 * d1 + (ia * 4.0 / (prm.p - 1.0) - 2.0) * f1).norm());
    }
    let mut decay = 0.0f64;
    for (a, p) in [(1e-3, 3.0), (-0.02, 2.95), (0.03, 3.08)] {
        let prm = Params::new(a, p).unwrap();
        let fs = FStar::new(prm, pstar).unwrap();
        let (d1, d2) = (pstar.derivative(), pstar.derivative().derivative());
        let w: Vec<f64> = (2..=6)
            .map(|k| {
                let u = 10f64.powi(-k);
                let y = 1.0 - u;
                u.powi(3) * residual_r(&prm, y, fs.value(y), d1.eval_unchecked(y), d2.eval_unchecked(y)).unwrap().norm()
            })
            .collect();
        for v in w.windows(2) {
            decay = decay.max((v[0] / v[1] / 10.0 - 1.0).abs());
        }
    }
    combine(vec![
        le("max boundary bracket over 100 (a,p)", worst, 1e-13),
        le("max |ratio/10 - 1| of (1-y)^3|R(f_*)|", decay, 0.1),
    ])
}

fn criterion_7(entries: &[SweepEntry]) -> Outcome {
    let mut parts = Vec::new();
    let mut widest = 0.0f64;
    let mut all_change = true;
    for e in entries {
        let Ok(r) = &e.record else {
            parts.push((false, format!("p={} unsolved", e.p)));
            continue;
        };
        widest = widest.max(r.bracket[1] - r.bracket[0]);
        let inside = r.bracket[0] <= r.a_p && r.a_p <= r.bracket[1];
        all_change &= inside && r.psi_bracket[0] * r.psi_bracket[1] <= 0.0;
    }
    parts.push((all_change, format!("sign change and root inside bracket for all {} p", entries.len())));
    parts.push(le("widest bracket", widest, 1e-14));
    combine(parts)
}

fn criterion_8(rec: &SolveRecord) -> Outcome {
    let prof = PhysicalProfile::from_record(rec).unwrap();
    let fun = conserved_functionals(&prof, 1e-12).unwrap();
    let tail = tail_law(&prof, 1e2, 1e4, 200).unwrap();
    let pts = [
        (0.0, [1.0, 0.0, 0.0]),
        (0.0, [0.2, -0.4, 0.3]),
        (0.6, [0.0, 0.0, 1.2]),
        (-3.0, [1.0, 2.0, -2.0]),
        (0.95, [0.02, 0.03, 0.0]),
    ];
    let pde = pts
        .iter()
        .map(|&(t, x)| pde_residual(&prof, t, x, 1e-2 * (1.0 - t)).unwrap().norm())
        .fold(0.0, f64::max);
    combine(vec![
        le("energy ratio", fun.energy_ratio, 1e-4),
        le("|tail slope + 2/(p-1)|", (tail.modulus_slope + 2.0 / (rec.p - 1.0)).abs(), 1e-3),
        le("max PDE residual at 5 points", pde, 1e-5),
    ])
}

fn criterion_9(rng: &mut ChaCha8Rng) -> Outcome {
    let st = standard().unwrap();
    let frame = |a: f64| Frame::new(&st.system, Params::new(a, 3.0).unwrap()).unwrap();
    let fr = frame(0.0);
    let mut annihilation = 0.0f64;
    for _ in 0..100 {
        let y: f64 = rng.gen_range(-0.99..0.99);
        if y.abs() < 1e-6 {
            continue;
        }
        let [p1, p2, q1, q2] = fr.associated_coeffs(y).unwrap();
        for c in fr.eval(y).unwrap().columns {
            let terms = [c.dd, p1 * c.d, p2 * c.d.conj(), q1 * c.v, q2 * c.v.conj()];
            let sum: C = terms.iter().sum();
            let scale: f64 = terms.iter().map(|t| t.norm()).sum();
            annihilation = annihilation.max(sum.norm() / scale);
        }
    }
    let (left, right) = (fr.columns(0.0), fr.right_columns(0.0));
    let scale = right.iter().map(|c| c.v.norm().max(c.d.norm())).fold(1.0, f64::max);
    let continuity = left
        .iter()
        .zip(&right)
        .map(|(l, r)| (l.v - r.v).norm().max((l.d - r.d).norm()))
        .fold(0.0, f64::max)
        / scale;
    let m31 = [-J_STAR, 0.0, J_STAR].iter().map(|&a| frame(a).m[(2, 0)]).fold(f64::NEG_INFINITY, f64::max);
    let mut pd_min = f64::INFINITY;
    for a in [-J_STAR, J_STAR] {
        let f = frame(a);
        for i in 0..=1000 {
            pd_min = pd_min.min(f.determinant_decomposition(0.999_999 * i as f64 / 1000.0).unwrap().0);
        }
    }
    combine(vec![
        le("annihilation", annihilation, 1e-9),
        le("continuity at y=0", continuity, 1e-12),
        le("max M31", m31, -0.2 * 0.95),
        (pd_min >= 8.0 * 0.9, format!("min P_dR = {pd_min:.3} (>= {:.1})", 8.0 * 0.9)),
    ])
}

fn main() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(20_240_611);
    let ys = dense_grid();
    let (c1, rec3) = criterion_1();

    let grid: Vec<f64> = (0..21).map(|i| 2.9 + 0.01 * i as f64).collect();
    let entries = sweep(&grid, &SolveOptions::default(), true).unwrap_or_default();

    let mut results: Vec<(u32, &str, Outcome)> = vec![(1, "eigenvalue reproduction", c1)];
    results.push((2, "oracle agreement", criterion_2(&entries)));
    results.push((3, "residual certificate", criterion_3(&entries, &ys)));
    let missing = || outcome(false, "no p = 3 record".into());
    results.push((4, "correction smallness", rec3.as_ref().map(|r| criterion_4(r, &ys)).unwrap_or_else(missing)));
    results.push((5, "inverse identity", criterion_5(&mut rng)));
    results.push((6, "boundary cancellation", criterion_6(&mut rng)));
    results.push((7, "psi sign change", criterion_7(&entries)));
    results.push((8, "physics checks", rec3.as_ref().map(criterion_8).unwrap_or_else(missing)));
    results.push((9, "frame health", criterion_9(&mut rng)));

    let mut failed = 0;
    for (n, name, o) in &results {
        let tag = if o.pass { "PASS" } else { "FAIL" };
        if !o.pass {
            failed += 1;
        }
        println!("criterion {n} [{tag}] {name}: {}", o.detail);
    }
    println!("acceptance: {} passed, {failed} failed in {:.1} s", results.len() - failed, start.elapsed().as_secs_f64());
    if failed > 0 {
        std::process::exit(1);
    }
}
