//! Physical objects from a solved compactified profile: `q(r)`, `Q_p(x)`,
//! `psi_{p,*}(t, x)`, the bound on `g_p`, the conserved functionals, a direct
//! finite-difference check of the time-dependent equation, and table export.

use crate::cheb::{lobatto_nodes, ChebSeries};
use crate::error::{Error, Result};
use crate::fixpoint_solver::SolveRecord;
use crate::profile_eq::{FStar, Params};
use crate::quad::{adaptive, QuadOptions};
use num_complex::Complex64 as C;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::f64::consts::PI;
use std::io::Write;
use std::path::{Path, PathBuf};

/// The total profile `f = f_* + f_p` at `(alpha, p)` with the physical evaluators.
#[derive(Clone, Debug)]
pub struct PhysicalProfile {
    pub prm: Params,
    pub f: ChebSeries,
    df: ChebSeries,
}

impl PhysicalProfile {
    pub fn new(prm: Params, f: ChebSeries) -> Self {
        let df = f.derivative();
        Self { prm, f, df }
    }

    pub fn from_record(rec: &SolveRecord) -> Result<Self> {
        Ok(Self::new(rec.params()?, rec.total_series()?))
    }

    /// `2/(p-1) + i/alpha`.
    fn exponent(&self) -> C {
        C::new(2.0 / (self.prm.p - 1.0), 1.0 / self.prm.alpha)
    }

    /// `q(r) = (1+r)^{-2/(p-1) - i/alpha} f((r-1)/(r+1))`.
    pub fn q(&self, r: f64) -> C {
        let y = (r - 1.0) / (r + 1.0);
        (-self.exponent() * (1.0 + r).ln()).exp() * self.f.eval_unchecked(y)
    }

    /// `q'(r)`, via `dy/dr = (1-y)^2 / 2`.
    pub fn q_prime(&self, r: f64) -> C {
        let y = (r - 1.0) / (r + 1.0);
        let u = 1.0 - y;
        let c = self.exponent();
        let lead = (-c * (1.0 + r).ln()).exp();
        lead * 0.5 * u * u * (self.df.eval_unchecked(y) - c * self.f.eval_unchecked(y) / u)
    }

    /// `Q_p(x) = q(|x|)`.
    pub fn big_q(&self, x: [f64; 3]) -> C {
        self.q((x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt())
    }

    /// `psi_{p,*}(t, x) = (2 alpha)^{-1/(p-1)} (1-t)^{-1/(p-1) - i/(2 alpha)} Q_p(x / sqrt(2 alpha (1-t)))`.
    pub fn psi(&self, t: f64, x: [f64; 3]) -> Result<C> {
        if !(t < 1.0) {
            return Err(Error::Domain(format!("psi_* is defined for t < 1, got {t}")));
        }
        let (al, p) = (self.prm.alpha, self.prm.p);
        let s = 1.0 - t;
        let k = 1.0 / (2.0 * al * s).sqrt();
        let amp = (2.0 * al).powf(-1.0 / (p - 1.0));
        let lead = (-C::new(1.0 / (p - 1.0), 0.5 / al) * s.ln()).exp();
        Ok(lead * amp * self.big_q([x[0] * k, x[1] * k, x[2] * k]))
    }
}

/// `q(r)` of the profile; at `r = 0` the prefactor is 1 and this is `f(-1)`.
pub fn q_of_r(prof: &PhysicalProfile, r: f64) -> C {
    prof.q(r)
}

/// `g_*(r, a, p) = P_*((r-1)/(r+1)) + kappa_1 P_*'(1) - P_*(1)`.
pub fn g_star_eval(r: f64, prm: Params, pstar: &ChebSeries) -> Result<C> {
    let fs = FStar::new(prm, pstar)?;
    Ok(pstar.eval_unchecked((r - 1.0) / (r + 1.0)) + fs.shift())
}

/// `2 sup r|g'(r)| + sup |g(r)|` on a geometric grid from `1e-6` to `1e6`;
/// `g` returns `(g(r), g'(r))`.
pub fn theorem_bound(g: &dyn Fn(f64) -> (C, C)) -> Result<f64> {
    let n = 4001;
    let (mut sd, mut sv) = (0.0f64, 0.0f64);
    for i in 0..n {
        let r = 10f64.powf(-6.0 + 12.0 * i as f64 / (n - 1) as f64);
        let (v, d) = g(r);
        if !(v.re.is_finite() && v.im.is_finite() && d.re.is_finite() && d.im.is_finite()) {
            return Err(Error::NonFinite(format!("g or g' at r = {r}")));
        }
        sd = sd.max(r * d.norm());
        sv = sv.max(v.norm());
    }
    Ok(2.0 * sd + sv)
}

/// [`theorem_bound`] for `g(r) = h((r-1)/(r+1))`.
pub fn bound_of_series(h: &ChebSeries) -> Result<f64> {
    let dh = h.derivative();
    theorem_bound(&|r: f64| {
        let y = (r - 1.0) / (r + 1.0);
        let u = 1.0 - y;
        (h.eval_unchecked(y), dh.eval_unchecked(y) * (0.5 * u * u))
    })
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct Functionals {
    /// `||Q||_{L^{p+1}}^{p+1}`
    pub lp1_power: f64,
    /// `||grad Q||_{L^2}^2`
    pub h1dot_squared: f64,
    /// `E = 1/2 ||grad Q||^2 - ||Q||_{p+1}^{p+1} / (p+1)`
    pub energy: f64,
    /// `|E| / (1/2 ||grad Q||^2)`, zero for the zero profile.
    pub energy_ratio: f64,
}

/// The radial integrals over `R^3` computed in `y`, where `r = (1+y)/(1-y)`
/// maps the half line onto `[-1, 1)` and no domain truncation is needed.
pub fn conserved_functionals(prof: &PhysicalProfile, rel_tol: f64) -> Result<Functionals> {
    let p = prof.prm.p;
    let m = 2.0 / (p - 1.0);
    let c = prof.exponent();
    let opts = QuadOptions { abs_tol: 1e-300, rel_tol, ..QuadOptions::default() };
    let kin = |y: f64| {
        let u = 1.0 - y;
        let (f, d) = (prof.f.eval_unchecked(y), prof.df.eval_unchecked(y));
        let w = (0.5 * u).powf(2.0 * m) * 0.5 * (1.0 + y) * (1.0 + y);
        C::new(4.0 * PI * w * (d - c * f / u).norm_sqr(), 0.0)
    };
    let pot = |y: f64| {
        let u = 1.0 - y;
        let f = prof.f.eval_unchecked(y).norm();
        let w = (0.5 * u).powf(m * (p + 1.0)) * 2.0 * (1.0 + y) * (1.0 + y) / u.powi(4);
        C::new(4.0 * PI * w * f.powf(p + 1.0), 0.0)
    };
    let h1 = adaptive(kin, -1.0, 1.0, &opts)?.value.re;
    let lp = adaptive(pot, -1.0, 1.0, &opts)?.value.re;
    let energy = 0.5 * h1 - lp / (p + 1.0);
    let energy_ratio = if h1 > 0.0 { energy.abs() / (0.5 * h1) } else { 0.0 };
    Ok(Functionals { lp1_power: lp, h1dot_squared: h1, energy, energy_ratio })
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct TailLaw {
    /// Least-squares slope of `log|q|` against `log r`.
    pub modulus_slope: f64,
    /// Least-squares slope of the unwrapped `arg q` against `log r`.
    pub phase_slope: f64,
}

/// Log-log fit of `q` on `n` geometrically spaced radii in `[r1, r2]`.
pub fn tail_law(prof: &PhysicalProfile, r1: f64, r2: f64, n: usize) -> Result<TailLaw> {
    if !(0.0 < r1 && r1 < r2) || n < 3 {
        return Err(Error::Domain(format!("tail window [{r1}, {r2}] with {n} samples")));
    }
    let xs: Vec<f64> = (0..n).map(|i| r1.ln() + (r2 / r1).ln() * i as f64 / (n - 1) as f64).collect();
    let qs: Vec<C> = xs.iter().map(|&x| prof.q(x.exp())).collect();
    let lm: Vec<f64> = qs.iter().map(|q| q.norm().ln()).collect();
    let mut ph = Vec::with_capacity(n);
    let mut prev = qs[0].arg();
    let mut acc = prev;
    for q in &qs {
        let a = q.arg();
        let mut d = a - prev;
        d -= (2.0 * PI) * (d / (2.0 * PI)).round();
        acc += d;
        prev = a;
        ph.push(acc);
    }
    let slope = |ys: &[f64]| {
        let mx = xs.iter().sum::<f64>() / n as f64;
        let my = ys.iter().sum::<f64>() / n as f64;
        let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
        let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
        sxy / sxx
    };
    Ok(TailLaw { modulus_slope: slope(&lm), phase_slope: slope(&ph) })
}

fn fd_residual(prof: &PhysicalProfile, t: f64, x: [f64; 3], h: f64) -> Result<C> {
    let p = prof.prm.p;
    let c = prof.psi(t, x)?;
    let dt = (prof.psi(t + h, x)? - prof.psi(t - h, x)?) / (2.0 * h);
    let mut lap = C::new(0.0, 0.0);
    for k in 0..3 {
        let (mut xp, mut xm) = (x, x);
        xp[k] += h;
        xm[k] -= h;
        lap += (prof.psi(t, xp)? - c * 2.0 + prof.psi(t, xm)?) / (h * h);
    }
    Ok(C::new(0.0, 1.0) * dt + lap + c * c.norm().powf(p - 1.0))
}

/// Central-difference residual of `i psi_t + Laplace psi + psi |psi|^{p-1}` for
/// `psi_{p,*}`, Richardson-extrapolated from steps `h` and `h/2`.
pub fn pde_residual(prof: &PhysicalProfile, t: f64, x: [f64; 3], h: f64) -> Result<C> {
    if !(h > 0.0) || !(t + h < 1.0) {
        return Err(Error::Domain(format!("step {h} at t = {t}")));
    }
    let coarse = fd_residual(prof, t, x, h)?;
    let fine = fd_residual(prof, t, x, 0.5 * h)?;
    Ok((fine * 4.0 - coarse) / 3.0)
}

/// Un-extrapolated residual with step `h`, for convergence studies.
pub fn pde_residual_raw(prof: &PhysicalProfile, t: f64, x: [f64; 3], h: f64) -> Result<C> {
    if !(h > 0.0) || !(t + h < 1.0) {
        return Err(Error::Domain(format!("step {h} at t = {t}")));
    }
    fd_residual(prof, t, x, h)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExportFormat {
    Csv,
    Json,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProfileRow {
    pub y: f64,
    pub re_f: f64,
    pub im_f: f64,
    pub re_df: f64,
    pub im_df: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RadialRow {
    pub r: f64,
    pub re_q: f64,
    pub im_q: f64,
    pub abs_q: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExportMeta {
    pub p: f64,
    pub a_p: f64,
    pub alpha_p: f64,
    pub bracket: [f64; 2],
    pub norm_x_fp: f64,
    pub residual_y: f64,
    pub correction_bound: f64,
    pub psi_at_root: f64,
    pub contraction_estimate: f64,
    pub code_version: String,
    pub config_hash: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExportDoc {
    pub metadata: ExportMeta,
    pub profile: Vec<ProfileRow>,
    pub radial: Vec<RadialRow>,
}

pub const PROFILE_HEADER: &str = "y,re_f,im_f,re_df,im_df";
pub const RADIAL_HEADER: &str = "r,re_q,im_q,abs_q";

/// Hex SHA-256 of the compact JSON form of `config`.
pub fn config_hash(config: &serde_json::Value) -> String {
    let digest = Sha256::digest(config.to_string().as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Tables on 257 Chebyshev-Lobatto nodes in `y` and on `r = 0` plus 141
/// geometric radii in `[1e-3, 1e4]`.
pub fn export_doc(rec: &SolveRecord, config: &serde_json::Value) -> Result<ExportDoc> {
    let prof = PhysicalProfile::from_record(rec)?;
    let profile = lobatto_nodes(256, -1.0, 1.0)?
        .into_iter()
        .map(|y| {
            let (f, d) = (prof.f.eval_unchecked(y), prof.df.eval_unchecked(y));
            ProfileRow { y, re_f: f.re, im_f: f.im, re_df: d.re, im_df: d.im }
        })
        .collect();
    let radial = std::iter::once(0.0)
        .chain((0..141).map(|i| 10f64.powf(-3.0 + 7.0 * i as f64 / 140.0)))
        .map(|r| {
            let q = prof.q(r);
            RadialRow { r, re_q: q.re, im_q: q.im, abs_q: q.norm() }
        })
        .collect();
    let metadata = ExportMeta {
        p: rec.p,
        a_p: rec.a_p,
        alpha_p: rec.alpha_p,
        bracket: rec.bracket,
        norm_x_fp: rec.norm_x_fp,
        residual_y: rec.residual_y,
        correction_bound: bound_of_series(&rec.f_p)?,
        psi_at_root: rec.psi_at_root,
        contraction_estimate: rec.contraction_estimate,
        code_version: env!("CARGO_PKG_VERSION").to_string(),
        config_hash: config_hash(config),
    };
    Ok(ExportDoc { metadata, profile, radial })
}

fn sibling(path: &Path, suffix: &str, ext: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}{suffix}.{ext}"))
}

/// Writes the export; JSON is one document, CSV is the profile table at `path`
/// with `<stem>_radial.csv` and `<stem>_meta.json` beside it. Returns the files written.
pub fn export_profile(rec: &SolveRecord, format: ExportFormat, path: &Path, config: &serde_json::Value) -> Result<Vec<PathBuf>> {
    let doc = export_doc(rec, config)?;
    match format {
        ExportFormat::Json => {
            std::fs::write(path, serde_json::to_string_pretty(&doc)?)?;
            Ok(vec![path.to_path_buf()])
        }
        ExportFormat::Csv => {
            let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
            writeln!(w, "{PROFILE_HEADER}")?;
            for r in &doc.profile {
                writeln!(w, "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}", r.y, r.re_f, r.im_f, r.re_df, r.im_df)?;
            }
            w.flush()?;
            let radial = sibling(path, "_radial", "csv");
            let mut w = std::io::BufWriter::new(std::fs::File::create(&radial)?);
            writeln!(w, "{RADIAL_HEADER}")?;
            for r in &doc.radial {
                writeln!(w, "{:.16e},{:.16e},{:.16e},{:.16e}", r.r, r.re_q, r.im_q, r.abs_q)?;
            }
            w.flush()?;
            let meta = sibling(path, "_meta", "json");
            std::fs::write(&meta, serde_json::to_string_pretty(&doc.metadata)?)?;
            Ok(vec![path.to_path_buf(), radial, meta])
        }
    }
}

/// Reads the profile table back from either export format (by extension).
pub fn import_profile(path: &Path) -> Result<Vec<ProfileRow>> {
    let text = std::fs::read_to_string(path)?;
    if path.extension().is_some_and(|e| e == "json") {
        let doc: ExportDoc = serde_json::from_str(&text)?;
        return Ok(doc.profile);
    }
    let mut lines = text.lines();
    if lines.next() != Some(PROFILE_HEADER) {
        return Err(Error::Config(format!("{} does not start with the profile header", path.display())));
    }
    lines
        .filter(|l| !l.is_empty())
        .map(|l| {
            let v: Vec<f64> = l
                .split(',')
                .map(|s| s.parse::<f64>().map_err(|e| Error::Config(format!("bad number {s:?}: {e}"))))
                .collect::<Result<_>>()?;
            match v[..] {
                [y, re_f, im_f, re_df, im_df] => Ok(ProfileRow { y, re_f, im_f, re_df, im_df }),
                _ => Err(Error::Config(format!("expected 5 columns in {l:?}"))),
            }
        })
        .collect()
}
