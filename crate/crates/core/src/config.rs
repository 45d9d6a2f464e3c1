//! Strict TOML run configuration shared by the command-line front end.

use std::path::{Path, PathBuf};

use serde::Deserialize;
use thiserror::Error;

use crate::expr::Expr;
use crate::frames::{self, Frame};
use crate::grid::{Grid, GridFunction, Rect};
use crate::solver::{LinearSolver, SolverConfig};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{0}")]
    Parse(String),
    #[error("{0}")]
    Invalid(String),
    #[error("cannot read {}: {source}", .path.display())]
    Io { path: PathBuf, source: std::io::Error },
}

fn invalid<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError::Invalid(msg.into()))
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Built-in frame name.
    pub frame: Option<String>,
    /// Custom frame TOML file.
    pub frame_file: Option<PathBuf>,
    /// Output directory; `--out` takes precedence.
    pub out: Option<PathBuf>,
    pub domain: DomainConfig,
    #[serde(default)]
    pub solver: SolverBlock,
    pub bc: Option<BcConfig>,
    pub foliate: Option<FoliateConfig>,
    pub diagnose: Option<DiagnoseConfig>,
    pub sweep: Option<SweepConfig>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainConfig {
    pub a1: f64,
    pub b1: f64,
    pub a2: f64,
    pub b2: f64,
    pub n1: usize,
    pub n2: usize,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverBlock {
    pub eps: Option<f64>,
    pub eps_schedule: Option<Vec<f64>>,
    pub theta: Option<f64>,
    pub residual_tol: Option<f64>,
    pub update_tol: Option<f64>,
    pub max_iters: Option<usize>,
    pub lipschitz_cap: Option<f64>,
    /// `"lu"` (default) or `"gauss-seidel"`.
    pub linear: Option<String>,
    pub gs_sweeps: Option<usize>,
    pub gs_tol: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BcKind {
    Expression,
    Csv,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BcConfig {
    pub kind: BcKind,
    pub value: String,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FoliateConfig {
    /// Solution CSV to read; when absent the `[bc]` data is used as the height function.
    pub solution: Option<PathBuf>,
    /// Seed lattice `[rows, cols]`, overridden by `--seed-lattice`.
    pub lattice: Option<[usize; 2]>,
    #[serde(default)]
    pub seeds: Vec<[f64; 2]>,
    #[serde(default = "default_t_min")]
    pub t_min: f64,
    #[serde(default = "default_t_max")]
    pub t_max: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
}

fn default_t_min() -> f64 {
    -1.0
}
fn default_t_max() -> f64 {
    1.0
}
fn default_dt() -> f64 {
    1e-2
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnoseConfig {
    /// Built-in probe names or expressions in `x1, x2`.
    pub probes: Vec<String>,
    #[serde(default = "default_alphas")]
    pub alphas: Vec<f64>,
    #[serde(default = "default_radii")]
    pub radii: Vec<f64>,
    /// Base point; defaults to the domain centre.
    pub x0: Option<[f64; 2]>,
    #[serde(default = "default_samples")]
    pub samples: usize,
    pub solution: Option<PathBuf>,
    #[serde(default = "default_p")]
    pub p: f64,
    /// Cutoff rectangles `[a1, b1, a2, b2]`; default to the middle third and middle
    /// two thirds of the domain.
    pub cutoff_inner: Option<[f64; 4]>,
    pub cutoff_outer: Option<[f64; 4]>,
}

fn default_alphas() -> Vec<f64> {
    vec![0.5, 1.0, 1.5]
}
fn default_radii() -> Vec<f64> {
    vec![1e-1, 1e-2, 1e-3, 1e-4]
}
fn default_samples() -> usize {
    64
}
fn default_p() -> f64 {
    3.0
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(default = "default_m")]
    pub m: usize,
    #[serde(default = "default_sweep_p")]
    pub p: f64,
    /// `[a1, b1, a2, b2]`; defaults to the middle half of the domain.
    pub subdomain: Option<[f64; 4]>,
    #[serde(default = "default_factor")]
    pub factor: f64,
}

fn default_m() -> usize {
    2
}
fn default_sweep_p() -> f64 {
    4.0
}
fn default_factor() -> f64 {
    3.0
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig { m: default_m(), p: default_sweep_p(), subdomain: None, factor: default_factor() }
    }
}

fn rect(r: [f64; 4]) -> Rect {
    Rect::new(r[0], r[1], r[2], r[3])
}

fn check_positive(name: &str, v: Option<f64>) -> Result<(), ConfigError> {
    match v {
        Some(x) if !(x > 0.0 && x.is_finite()) => invalid(format!("{name} must be positive, got {x}")),
        _ => Ok(()),
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<RunConfig, ConfigError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file; relative paths inside it are resolved against its directory.
    pub fn from_file(path: &Path) -> Result<RunConfig, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
        let mut cfg = Self::from_toml_str(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(p) = self.frame_file.as_mut() {
            fix(p);
        }
        if let Some(p) = self.out.as_mut() {
            fix(p);
        }
        if let Some(bc) = self.bc.as_mut() {
            if bc.kind == BcKind::Csv {
                let mut p = PathBuf::from(&bc.value);
                fix(&mut p);
                bc.value = p.to_string_lossy().into_owned();
            }
        }
        if let Some(p) = self.foliate.as_mut().and_then(|f| f.solution.as_mut()) {
            fix(p);
        }
        if let Some(p) = self.diagnose.as_mut().and_then(|d| d.solution.as_mut()) {
            fix(p);
        }
    }

    fn validate(&self) -> Result<(), ConfigError> {
        match (&self.frame, &self.frame_file) {
            (Some(_), Some(_)) => return invalid("give either frame or frame_file, not both"),
            (None, None) => return invalid("missing frame (builtin name) or frame_file"),
            (Some(name), None) if frames::builtin(name).is_none() => {
                return invalid(format!("unknown builtin frame '{name}'"))
            }
            _ => {}
        }
        let s = &self.solver;
        if let Some(e) = s.eps {
            if !(e > 0.0 && e.is_finite()) {
                return invalid(format!("eps must be positive, got {e}"));
            }
        }
        if let Some(sched) = &s.eps_schedule {
            if sched.is_empty() {
                return invalid("eps_schedule must not be empty");
            }
            if let Some(e) = sched.iter().find(|e| !(**e > 0.0 && e.is_finite())) {
                return invalid(format!("eps must be positive, got {e} in eps_schedule"));
            }
            if sched.windows(2).any(|w| w[1] >= w[0]) {
                return invalid("eps_schedule must be strictly decreasing");
            }
        }
        check_positive("residual_tol", s.residual_tol)?;
        check_positive("update_tol", s.update_tol)?;
        check_positive("lipschitz_cap", s.lipschitz_cap)?;
        check_positive("gs_tol", s.gs_tol)?;
        if let Some(t) = s.theta {
            if !(t > 0.0 && t <= 1.0) {
                return invalid(format!("theta must lie in (0, 1], got {t}"));
            }
        }
        if s.max_iters == Some(0) {
            return invalid("max_iters must be at least 1");
        }
        match s.linear.as_deref() {
            None | Some("lu") | Some("gauss-seidel") => {}
            Some(other) => return invalid(format!("unknown linear solver '{other}' (use lu or gauss-seidel)")),
        }
        self.grid()?;
        if let Some(bc) = &self.bc {
            if bc.kind == BcKind::Expression {
                Expr::parse(&bc.value).map_err(|e| ConfigError::Invalid(format!("bc value: {e}")))?;
            }
        }
        if let Some(f) = &self.foliate {
            if !(f.dt > 0.0 && f.t_min <= 0.0 && f.t_max >= 0.0) {
                return invalid("foliate needs dt > 0 and t_min <= 0 <= t_max");
            }
        }
        if let Some(d) = &self.diagnose {
            if d.probes.is_empty() {
                return invalid("diagnose.probes must not be empty");
            }
            if d.alphas.is_empty() || d.alphas.iter().any(|a| !(*a > 0.0)) {
                return invalid("diagnose.alphas must be a non-empty list of positive numbers");
            }
            if d.radii.is_empty() || d.radii.iter().any(|r| !(*r > 0.0)) || d.radii.windows(2).any(|w| w[1] >= w[0]) {
                return invalid("diagnose.radii must be positive and strictly decreasing");
            }
            if d.samples == 0 {
                return invalid("diagnose.samples must be at least 1");
            }
            if !(d.p >= 3.0) {
                return invalid(format!("diagnose.p must be at least 3, got {}", d.p));
            }
        }
        if let Some(sw) = &self.sweep {
            if !(sw.p >= 1.0) || !(sw.factor >= 1.0) {
                return invalid("sweep needs p >= 1 and factor >= 1");
            }
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<Grid, ConfigError> {
        let d = &self.domain;
        Grid::new(d.a1, d.b1, d.a2, d.b2, d.n1, d.n2).map_err(|e| ConfigError::Invalid(format!("domain: {e}")))
    }

    pub fn load_frame(&self) -> Result<Frame, ConfigError> {
        if let Some(name) = &self.frame {
            return frames::builtin(name).ok_or_else(|| ConfigError::Invalid(format!("unknown builtin frame '{name}'")));
        }
        let path = self.frame_file.as_ref().expect("validated");
        Frame::from_file(path).map_err(|e| ConfigError::Invalid(format!("frame_file: {e}")))
    }

    pub fn solver_config(&self) -> SolverConfig {
        let s = &self.solver;
        let d = SolverConfig::default();
        let linear = match s.linear.as_deref() {
            Some("gauss-seidel") => LinearSolver::RedBlackGaussSeidel {
                max_sweeps: s.gs_sweeps.unwrap_or(200_000),
                tol: s.gs_tol.unwrap_or(1e-13),
            },
            _ => LinearSolver::BandedLu,
        };
        SolverConfig {
            max_outer_iters: s.max_iters.unwrap_or(d.max_outer_iters),
            theta: s.theta.unwrap_or(d.theta),
            residual_tol: s.residual_tol,
            update_tol: s.update_tol.unwrap_or(d.update_tol),
            linear,
            lipschitz_cap: s.lipschitz_cap,
        }
    }

    /// Boundary data on the configured grid (the interior values are the data too).
    pub fn boundary_data(&self) -> Result<GridFunction, ConfigError> {
        let bc = self.bc.as_ref().ok_or_else(|| ConfigError::Invalid("missing [bc] block".into()))?;
        let grid = self.grid()?;
        match bc.kind {
            BcKind::Expression => {
                let e = Expr::parse(&bc.value).map_err(|e| ConfigError::Invalid(format!("bc value: {e}")))?;
                let g = grid.sample(|x, y| e.eval([x, y, 0.0]));
                g.check_finite().map_err(|e| ConfigError::Invalid(format!("bc value: {e}")))?;
                Ok(g)
            }
            BcKind::Csv => {
                let g = read_grid_csv(Path::new(&bc.value))?;
                if *g.grid() != grid {
                    return invalid(format!("bc csv {} does not match the [domain] grid", bc.value));
                }
                Ok(g)
            }
        }
    }

    pub fn foliate_block(&self) -> Result<&FoliateConfig, ConfigError> {
        self.foliate.as_ref().ok_or_else(|| ConfigError::Invalid("missing [foliate] block".into()))
    }

    pub fn diagnose_block(&self) -> Result<&DiagnoseConfig, ConfigError> {
        self.diagnose.as_ref().ok_or_else(|| ConfigError::Invalid("missing [diagnose] block".into()))
    }

    pub fn sweep_block(&self) -> SweepConfig {
        self.sweep.clone().unwrap_or_default()
    }

    /// Middle half of the domain.
    pub fn default_subdomain(&self) -> Rect {
        let d = &self.domain;
        let (c1, c2) = ((d.a1 + d.b1) / 2.0, (d.a2 + d.b2) / 2.0);
        let (r1, r2) = ((d.b1 - d.a1) / 4.0, (d.b2 - d.a2) / 4.0);
        Rect::new(c1 - r1, c1 + r1, c2 - r2, c2 + r2)
    }

    pub fn sweep_subdomain(&self) -> Rect {
        self.sweep_block().subdomain.map(rect).unwrap_or_else(|| self.default_subdomain())
    }

    /// Cutoff rectangles for the Caccioppoli integrals.
    pub fn cutoff_rects(&self) -> (Rect, Rect) {
        let d = &self.domain;
        let scaled = |f: f64| {
            let (c1, c2) = ((d.a1 + d.b1) / 2.0, (d.a2 + d.b2) / 2.0);
            let (r1, r2) = (f * (d.b1 - d.a1) / 2.0, f * (d.b2 - d.a2) / 2.0);
            Rect::new(c1 - r1, c1 + r1, c2 - r2, c2 + r2)
        };
        let dg = self.diagnose.as_ref();
        let inner = dg.and_then(|x| x.cutoff_inner).map(rect).unwrap_or_else(|| scaled(1.0 / 3.0));
        let outer = dg.and_then(|x| x.cutoff_outer).map(rect).unwrap_or_else(|| scaled(2.0 / 3.0));
        (inner, outer)
    }
}

pub fn read_grid_csv(path: &Path) -> Result<GridFunction, ConfigError> {
    let file = std::fs::File::open(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
    GridFunction::read_csv(std::io::BufReader::new(file))
        .map_err(|e| ConfigError::Invalid(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
frame = "heisenberg"
[domain]
a1 = 0.0
b1 = 1.0
a2 = 0.0
b2 = 1.0
n1 = 9
n2 = 9
[solver]
eps = 0.01
[bc]
kind = "expression"
value = "2*x1 + 1"
"#;

    #[test]
    fn parses_and_builds() {
        let cfg = RunConfig::from_toml_str(BASE).unwrap();
        assert_eq!(cfg.grid().unwrap().n1, 9);
        let g = cfg.boundary_data().unwrap();
        assert_eq!(g[(8, 0)], 3.0);
        assert_eq!(cfg.solver_config().theta, 0.8);
        assert_eq!(cfg.load_frame().unwrap().name(), "heisenberg");
    }

    #[test]
    fn unknown_key_is_named() {
        let text = BASE.replace("eps = 0.01", "epss = 0.01");
        let err = RunConfig::from_toml_str(&text).unwrap_err().to_string();
        assert!(err.contains("epss"), "{err}");
    }

    #[test]
    fn zero_eps_rejected() {
        let text = BASE.replace("eps = 0.01", "eps = 0.0");
        let err = RunConfig::from_toml_str(&text).unwrap_err().to_string();
        assert!(err.contains("eps must be positive"), "{err}");
    }

    #[test]
    fn schedule_must_decrease() {
        let text = BASE.replace("eps = 0.01", "eps_schedule = [0.01, 0.1]");
        assert!(RunConfig::from_toml_str(&text).is_err());
    }

    #[test]
    fn frame_selection_rules() {
        let text = BASE.replace("frame = \"heisenberg\"", "frame = \"nope\"");
        assert!(RunConfig::from_toml_str(&text).is_err());
        let text = BASE.replace("frame = \"heisenberg\"", "");
        assert!(RunConfig::from_toml_str(&text).is_err());
    }

    #[test]
    fn empty_probe_list_rejected() {
        let text = format!("{BASE}\n[diagnose]\nprobes = []\n");
        let err = RunConfig::from_toml_str(&text).unwrap_err().to_string();
        assert!(err.contains("probes"), "{err}");
    }
}
