use crate::fixpoint_solver::{FixedPointOptions, SolveOptions};
use crate::fundsys::Degrees;
use crate::profile_eq::{P_MAX, P_MIN};
use crate::reconstruct::ExportFormat;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

/// Environment variable that overrides the output directory of the file and
/// the default, but not an explicit `--output-dir`.
pub const OUTPUT_DIR_ENV: &str = "PNLS_OUTPUT_DIR";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Solve,
    Sweep,
    Oracle,
    Verify,
    Export,
}

/// Effective run configuration. Field names are the flag names with `_` for `-`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub command: Command,
    pub p: f64,
    pub p_min: f64,
    pub p_max: f64,
    pub steps: usize,
    pub pstar_degree: usize,
    pub left_degree: usize,
    pub right_p_degree: usize,
    pub right_q_degree: usize,
    /// Absolute stopping tolerance of the fixed-point iteration.
    pub fixed_point_tol: f64,
    /// Width at which bisection on `a` stops.
    pub bisection_tol: f64,
    /// Relative tolerance of the adaptive radial quadrature.
    pub quadrature_tol: f64,
    /// Relative tolerance of the shooting integrator.
    pub ode_rtol: f64,
    pub bracket_cap: f64,
    pub output_dir: PathBuf,
    /// Export target; defaults to `profile_p<p>.<ext>` in the output directory.
    pub export_path: Option<PathBuf>,
    pub format: ExportFormat,
    pub threads: usize,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let s = SolveOptions::default();
        Self {
            command: Command::Solve,
            p: 3.0,
            p_min: 2.9,
            p_max: 3.1,
            steps: 21,
            pstar_degree: s.pstar_degree,
            left_degree: s.degrees.left,
            right_p_degree: s.degrees.right_p,
            right_q_degree: s.degrees.right_q,
            fixed_point_tol: s.fixed_point.tol_abs,
            bisection_tol: s.tol_a,
            quadrature_tol: 1e-12,
            ode_rtol: 1e-12,
            bracket_cap: s.bracket_cap,
            output_dir: PathBuf::from("results"),
            export_path: None,
            format: ExportFormat::Json,
            threads: 2,
            seed: 0,
        }
    }
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
    }

    /// Usage-level checks; failures map to exit code 2.
    pub fn validate(&self) -> Result<(), String> {
        let in_range = |p: f64| p > P_MIN && p < P_MAX;
        match self.command {
            Command::Sweep => {
                if self.steps == 0 || !(self.p_min <= self.p_max) {
                    return Err(format!("empty p grid: {} steps on [{}, {}]", self.steps, self.p_min, self.p_max));
                }
                if self.steps == 1 && self.p_min != self.p_max {
                    return Err("one step needs p_min = p_max".into());
                }
                if !in_range(self.p_min) || !in_range(self.p_max) {
                    return Err(format!("p range [{}, {}] not inside (7/3, 5)", self.p_min, self.p_max));
                }
            }
            _ => {
                if !in_range(self.p) {
                    return Err(format!("p = {} not inside (7/3, 5)", self.p));
                }
            }
        }
        let tols = [
            ("fixed_point_tol", self.fixed_point_tol),
            ("bisection_tol", self.bisection_tol),
            ("quadrature_tol", self.quadrature_tol),
            ("ode_rtol", self.ode_rtol),
            ("bracket_cap", self.bracket_cap),
        ];
        for (name, v) in tols {
            if !(v > 0.0 && v.is_finite()) {
                return Err(format!("{name} = {v} must be positive"));
            }
        }
        if self.threads == 0 {
            return Err("threads must be at least 1".into());
        }
        self.solve_options().validate().map_err(|e| e.to_string())
    }

    pub fn solve_options(&self) -> SolveOptions {
        let d = SolveOptions::default();
        SolveOptions {
            pstar_degree: self.pstar_degree,
            degrees: Degrees { left: self.left_degree, right_p: self.right_p_degree, right_q: self.right_q_degree },
            fixed_point: FixedPointOptions { tol_abs: self.fixed_point_tol, ..d.fixed_point },
            tol_a: self.bisection_tol,
            bracket_cap: self.bracket_cap,
            ..d
        }
    }

    /// `steps` equispaced values from `p_min` to `p_max`.
    pub fn grid(&self) -> Vec<f64> {
        match self.steps {
            0 => Vec::new(),
            1 => vec![self.p_min],
            n => (0..n).map(|i| self.p_min + (self.p_max - self.p_min) * i as f64 / (n - 1) as f64).collect(),
        }
    }
}
