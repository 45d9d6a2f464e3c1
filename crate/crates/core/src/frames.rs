//! Polarized step-2 frames in three dimensions.
//!
//! A frame is given in coordinates where `X3 = ∂x3` and
//! `Xi = σi¹ ∂x1 + σi² ∂x2` for `i = 1, 2`, with `σ2 = ∂x3 σ1`.

use std::f64::consts::PI;
use std::fmt;
use std::path::Path;

use serde::Deserialize;
use thiserror::Error;

use crate::expr::{Expr, ExprError, Var};

pub const DEFAULT_RANK_TOL: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum FrameError {
    #[error("rank condition violated at ({:.6}, {:.6}, {:.6}): determinant {value:e}", .point[0], .point[1], .point[2])]
    RankDegenerate { point: [f64; 3], value: f64 },
    #[error("frame key '{key}': {source}")]
    Expr {
        key: String,
        #[source]
        source: ExprError,
    },
    #[error("frame file: {0}")]
    Parse(String),
    #[error("reading frame file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Structure coefficients of `[X2,X3]` and `[X1,X2]`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StructureConstants {
    pub c1_23: f64,
    pub c2_23: f64,
    pub c3_23: f64,
    pub c1_12: f64,
    pub c2_12: f64,
    pub c3_12: f64,
}

#[derive(Debug, Clone)]
struct CustomFrame {
    sigma1: [Expr; 2],
    sigma2: [Expr; 2],
    d3_sigma1: [Expr; 2],
    d1_sigma1_1: Expr,
    d2_sigma1_2: Expr,
    d1_sigma2_1: Expr,
    d2_sigma2_2: Expr,
    c: [Expr; 6],
}

#[derive(Debug, Clone)]
enum Kind {
    Heisenberg,
    RotoTranslation,
    Custom(Box<CustomFrame>),
}

/// Immutable frame description; cheap to clone and safe to share across threads.
#[derive(Debug, Clone)]
pub struct Frame {
    name: String,
    kind: Kind,
    x3_period: Option<f64>,
    rank_tol: f64,
}

impl fmt::Display for Frame {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name)
    }
}

/// Heisenberg group: `X1 = ∂x1 + x3 ∂x2`, `X2 = ∂x2`.
pub fn builtin_heisenberg() -> Frame {
    Frame {
        name: "heisenberg".into(),
        kind: Kind::Heisenberg,
        x3_period: None,
        rank_tol: DEFAULT_RANK_TOL,
    }
}

/// Roto-translation group E(2): `X1 = cos x3 ∂x1 + sin x3 ∂x2`, `X2 = -sin x3 ∂x1 + cos x3 ∂x2`.
pub fn builtin_roto_translation() -> Frame {
    Frame {
        name: "roto_translation".into(),
        kind: Kind::RotoTranslation,
        x3_period: Some(2.0 * PI),
        rank_tol: DEFAULT_RANK_TOL,
    }
}

/// Looks up a built-in frame by name.
pub fn builtin(name: &str) -> Option<Frame> {
    match name {
        "heisenberg" | "h1" => Some(builtin_heisenberg()),
        "roto_translation" | "e2" | "E2" | "E(2)" => Some(builtin_roto_translation()),
        _ => None,
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum ExprValue {
    Int(i64),
    Num(f64),
    Text(String),
}

impl ExprValue {
    fn to_expr(&self, key: &str) -> Result<Expr, FrameError> {
        match self {
            ExprValue::Int(i) => Ok(Expr::constant(*i as f64)),
            ExprValue::Num(v) => Ok(Expr::constant(*v)),
            ExprValue::Text(s) => Expr::parse(s).map_err(|source| FrameError::Expr {
                key: key.to_string(),
                source,
            }),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct FrameSection {
    name: String,
    sigma1_1: ExprValue,
    sigma1_2: ExprValue,
    sigma2_1: Option<ExprValue>,
    sigma2_2: Option<ExprValue>,
    c_1_23: ExprValue,
    c_2_23: ExprValue,
    c_3_23: ExprValue,
    c_1_12: ExprValue,
    c_2_12: ExprValue,
    c_3_12: ExprValue,
    x3_period: Option<ExprValue>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct FrameFile {
    frame: FrameSection,
}

impl Frame {
    /// Parses a custom frame from the text of a frame file (a `[frame]` section).
    pub fn from_toml_str(text: &str) -> Result<Frame, FrameError> {
        let file: FrameFile = toml::from_str(text).map_err(|e| FrameError::Parse(e.to_string()))?;
        let s = file.frame;
        let sigma1 = [s.sigma1_1.to_expr("sigma1_1")?, s.sigma1_2.to_expr("sigma1_2")?];
        let d3_sigma1 = [sigma1[0].derivative(Var::X3), sigma1[1].derivative(Var::X3)];
        let sigma2 = match (&s.sigma2_1, &s.sigma2_2) {
            (Some(a), Some(b)) => [a.to_expr("sigma2_1")?, b.to_expr("sigma2_2")?],
            (None, None) => d3_sigma1.clone(),
            _ => {
                return Err(FrameError::Parse(
                    "sigma2_1 and sigma2_2 must be given together".into(),
                ))
            }
        };
        let c = [
            s.c_1_23.to_expr("c_1_23")?,
            s.c_2_23.to_expr("c_2_23")?,
            s.c_3_23.to_expr("c_3_23")?,
            s.c_1_12.to_expr("c_1_12")?,
            s.c_2_12.to_expr("c_2_12")?,
            s.c_3_12.to_expr("c_3_12")?,
        ];
        let x3_period = match &s.x3_period {
            None => None,
            Some(v) => {
                let p = v.to_expr("x3_period")?.eval([0.0; 3]);
                if !(p.is_finite() && p > 0.0) {
                    return Err(FrameError::Parse(format!("x3_period must be positive, got {p}")));
                }
                Some(p)
            }
        };
        let custom = CustomFrame {
            d1_sigma1_1: sigma1[0].derivative(Var::X1),
            d2_sigma1_2: sigma1[1].derivative(Var::X2),
            d1_sigma2_1: sigma2[0].derivative(Var::X1),
            d2_sigma2_2: sigma2[1].derivative(Var::X2),
            sigma1,
            sigma2,
            d3_sigma1,
            c,
        };
        Ok(Frame {
            name: s.name,
            kind: Kind::Custom(Box::new(custom)),
            x3_period,
            rank_tol: DEFAULT_RANK_TOL,
        })
    }

    pub fn from_file(path: &Path) -> Result<Frame, FrameError> {
        let text = std::fs::read_to_string(path).map_err(|source| FrameError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn x3_period(&self) -> Option<f64> {
        self.x3_period
    }

    pub fn rank_tol(&self) -> f64 {
        self.rank_tol
    }

    pub fn with_rank_tol(mut self, tol: f64) -> Frame {
        self.rank_tol = tol;
        self
    }

    /// Reduces the third argument modulo the period, if the frame has one.
    #[inline]
    pub fn wrap(&self, x3: f64) -> f64 {
        match self.x3_period {
            Some(per) => x3.rem_euclid(per),
            None => x3,
        }
    }

    #[inline]
    fn arg(&self, p: [f64; 3]) -> [f64; 3] {
        [p[0], p[1], self.wrap(p[2])]
    }

    pub fn sigma1(&self, p: [f64; 3]) -> [f64; 2] {
        match &self.kind {
            Kind::Heisenberg => [1.0, p[2]],
            Kind::RotoTranslation => {
                let t = self.wrap(p[2]);
                [t.cos(), t.sin()]
            }
            Kind::Custom(c) => {
                let q = self.arg(p);
                [c.sigma1[0].eval(q), c.sigma1[1].eval(q)]
            }
        }
    }

    pub fn sigma2(&self, p: [f64; 3]) -> [f64; 2] {
        match &self.kind {
            Kind::Heisenberg => [0.0, 1.0],
            Kind::RotoTranslation => {
                let t = self.wrap(p[2]);
                [-t.sin(), t.cos()]
            }
            Kind::Custom(c) => {
                let q = self.arg(p);
                [c.sigma2[0].eval(q), c.sigma2[1].eval(q)]
            }
        }
    }

    /// Closed-form `∂x3 σ1`.
    pub fn d3_sigma1(&self, p: [f64; 3]) -> [f64; 2] {
        match &self.kind {
            Kind::Heisenberg | Kind::RotoTranslation => self.sigma2(p),
            Kind::Custom(c) => {
                let q = self.arg(p);
                [c.d3_sigma1[0].eval(q), c.d3_sigma1[1].eval(q)]
            }
        }
    }

    /// `∂1 σ1¹ + ∂2 σ1²` with the third argument held fixed.
    pub fn div_sigma1(&self, p: [f64; 3]) -> f64 {
        match &self.kind {
            Kind::Heisenberg | Kind::RotoTranslation => 0.0,
            Kind::Custom(c) => {
                let q = self.arg(p);
                c.d1_sigma1_1.eval(q) + c.d2_sigma1_2.eval(q)
            }
        }
    }

    /// `∂1 σ2¹ + ∂2 σ2²` with the third argument held fixed.
    pub fn div_sigma2(&self, p: [f64; 3]) -> f64 {
        match &self.kind {
            Kind::Heisenberg | Kind::RotoTranslation => 0.0,
            Kind::Custom(c) => {
                let q = self.arg(p);
                c.d1_sigma2_1.eval(q) + c.d2_sigma2_2.eval(q)
            }
        }
    }

    pub fn structure(&self, p: [f64; 3]) -> StructureConstants {
        match &self.kind {
            Kind::Heisenberg => StructureConstants::default(),
            Kind::RotoTranslation => StructureConstants {
                c1_23: 1.0,
                ..Default::default()
            },
            Kind::Custom(c) => {
                let q = self.arg(p);
                let v: Vec<f64> = c.c.iter().map(|e| e.eval(q)).collect();
                StructureConstants {
                    c1_23: v[0],
                    c2_23: v[1],
                    c3_23: v[2],
                    c1_12: v[3],
                    c2_12: v[4],
                    c3_12: v[5],
                }
            }
        }
    }

    /// `σ1¹ ∂x3σ1² − σ1² ∂x3σ1¹` at `p`, rejected when not above the rank tolerance.
    pub fn rank_determinant(&self, p: [f64; 3]) -> Result<f64, FrameError> {
        let s = self.sigma1(p);
        let d = self.d3_sigma1(p);
        let value = s[0] * d[1] - s[1] * d[0];
        if value.abs() <= self.rank_tol || !value.is_finite() {
            return Err(FrameError::RankDegenerate { point: p, value });
        }
        Ok(value)
    }

    /// Largest deviation between `σ2` and a central difference of `σ1` in `x3` with the given step.
    pub fn sigma2_consistency(&self, p: [f64; 3], step: f64) -> f64 {
        let hi = self.sigma1([p[0], p[1], p[2] + step]);
        let lo = self.sigma1([p[0], p[1], p[2] - step]);
        let s2 = self.sigma2(p);
        (0..2)
            .map(|k| ((hi[k] - lo[k]) / (2.0 * step) - s2[k]).abs())
            .fold(0.0, f64::max)
    }
}
