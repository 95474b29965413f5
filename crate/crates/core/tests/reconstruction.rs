use num_complex::Complex64 as C;
use pnls::fixpoint_solver::{solve, SolveOptions, SolveRecord};
use pnls::reconstruct::*;
use std::sync::OnceLock;

fn record() -> &'static SolveRecord {
    static REC: OnceLock<SolveRecord> = OnceLock::new();
    REC.get_or_init(|| solve(3.0, None, &SolveOptions::default()).unwrap())
}

fn profile() -> PhysicalProfile {
    PhysicalProfile::from_record(record()).unwrap()
}

fn config() -> serde_json::Value {
    serde_json::to_value(SolveOptions::default()).unwrap()
}

#[test]
fn json_export_round_trips_bit_exactly() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("profile.json");
    export_profile(record(), ExportFormat::Json, &path, &config()).unwrap();
    let back = import_profile(&path).unwrap();
    let doc = export_doc(record(), &config()).unwrap();
    assert_eq!(back.len(), 257);
    for (a, b) in back.iter().zip(&doc.profile) {
        assert_eq!([a.y, a.re_f, a.im_f, a.re_df, a.im_df].map(f64::to_bits), [b.y, b.re_f, b.im_f, b.re_df, b.im_df].map(f64::to_bits));
    }
}

#[test]
fn csv_export_round_trips_to_roundoff() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("profile.csv");
    let files = export_profile(record(), ExportFormat::Csv, &path, &config()).unwrap();
    assert_eq!(files.len(), 3);
    let radial = std::fs::read_to_string(&files[1]).unwrap();
    assert_eq!(radial.lines().next(), Some(RADIAL_HEADER));
    assert_eq!(radial.lines().count(), 143);
    let back = import_profile(&path).unwrap();
    let doc = export_doc(record(), &config()).unwrap();
    for (a, b) in back.iter().zip(&doc.profile) {
        for (x, y) in [(a.y, b.y), (a.re_f, b.re_f), (a.im_f, b.im_f), (a.re_df, b.re_df), (a.im_df, b.im_df)] {
            assert!((x - y).abs() <= 1e-15 * y.abs().max(1.0));
        }
    }
}

#[test]
fn metadata_reports_the_root_inside_its_bracket() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("profile.csv");
    let files = export_profile(record(), ExportFormat::Csv, &path, &config()).unwrap();
    let meta: ExportMeta = serde_json::from_str(&std::fs::read_to_string(&files[2]).unwrap()).unwrap();
    assert!(meta.bracket[0] <= meta.a_p && meta.a_p <= meta.bracket[1]);
    assert_eq!(meta.config_hash, config_hash(&config()));
    assert_eq!(meta.config_hash.len(), 64);
    assert!(meta.correction_bound <= 1.2e-6);
}

#[test]
fn time_dependent_residual_is_second_order_and_small() {
    let prof = profile();
    let x = [1.0, 0.0, 0.0];
    let r: Vec<f64> = [4e-2, 2e-2, 1e-2].iter().map(|&h| pde_residual_raw(&prof, 0.0, x, h).unwrap().norm()).collect();
    for w in r.windows(2) {
        let rate = (w[0] / w[1]).log2();
        assert!((rate - 2.0).abs() < 0.1, "rate {rate} from {r:?}");
    }
    assert!(pde_residual(&prof, 0.0, x, 1e-2).unwrap().norm() <= 1e-5);
}

#[test]
fn blowup_solution_is_self_similar() {
    let prof = profile();
    let (al, p) = (prof.prm.alpha, prof.prm.p);
    let expo = C::new(-2.0 / (p - 1.0), -1.0 / al);
    for (t, x, lam) in [(0.0, [0.4, -0.2, 0.7], 0.5), (-1.0, [2.0, 0.0, 0.1], 0.8), (0.3, [0.0, 0.05, 0.0], 0.3)] {
        let t2 = 1.0 - lam * lam * (1.0 - t);
        let x2 = [lam * x[0], lam * x[1], lam * x[2]];
        let lhs = prof.psi(t2, x2).unwrap();
        let rhs = (expo * f64::ln(lam)).exp() * prof.psi(t, x).unwrap();
        assert!((lhs - rhs).norm() <= 1e-13 * rhs.norm(), "{lhs} vs {rhs}");
    }
}

#[test]
fn energy_vanishes_and_the_norms_are_stable() {
    let prof = profile();
    let coarse = conserved_functionals(&prof, 1e-10).unwrap();
    let fine = conserved_functionals(&prof, 1e-12).unwrap();
    assert!(coarse.lp1_power.is_finite() && coarse.h1dot_squared.is_finite());
    assert!(fine.energy_ratio <= 1e-4);
    assert!((coarse.lp1_power / fine.lp1_power - 1.0).abs() <= 1e-8);
    assert!((coarse.h1dot_squared / fine.h1dot_squared - 1.0).abs() <= 1e-8);
}

#[test]
fn tail_follows_the_power_law() {
    let prof = profile();
    let t = tail_law(&prof, 1e2, 1e4, 200).unwrap();
    assert!((t.modulus_slope + 2.0 / (prof.prm.p - 1.0)).abs() <= 1e-3);
    assert!((t.phase_slope + 1.0 / prof.prm.alpha).abs() <= 1e-3);
}

#[test]
fn correction_obeys_the_quantitative_bound() {
    let b = bound_of_series(&record().f_p).unwrap();
    assert!(b <= 1.2e-6, "{b}");
    assert!(b <= record().norm_x_fp * (1.0 + 1e-4));
}

#[test]
fn modulus_decreases_away_from_the_origin() {
    let prof = profile();
    let radii: Vec<f64> = (0..=400).map(|i| 10f64.powf(-2.0 + 6.0 * i as f64 / 400.0)).collect();
    let m: Vec<f64> = radii.iter().map(|&r| prof.q(r).norm()).collect();
    assert!(m.windows(2).all(|w| w[1] < w[0]));
    assert!(prof.q(0.0).norm() > m[0]);
}
