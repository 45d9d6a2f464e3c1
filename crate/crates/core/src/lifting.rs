//! Frozen coefficients, frozen exponential coordinates, the first-order Taylor
//! operator and the lifted step-3 fields.

use std::io::Write;

use thiserror::Error;

use crate::expr::{Expr, ExprError, Var};
use crate::frames::Frame;
use crate::grid::fmt17;
use crate::projected::ProjectedContext;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LiftingError {
    #[error("frozen frame is degenerate at ({:.6}, {:.6}): |D| = {d:e}", .x0[0], .x0[1])]
    FrozenDegenerate { x0: [f64; 2], d: f64 },
    #[error("radii must be positive and strictly decreasing")]
    BadRadii,
    #[error("alpha must be positive, got {0}")]
    BadAlpha(f64),
    #[error("probe: {0}")]
    Probe(#[from] ExprError),
}

/// Frame coefficients frozen at `(x0, u0)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrozenFrame {
    pub x0: [f64; 2],
    pub u0: f64,
    /// `σ1(x0, u0)` and `σ2(x0, u0)`.
    pub sigma: [[f64; 2]; 2],
    pub d: f64,
    /// `big_sigma[j][k] = σ_{j+1}^{k+1}(x0, u0) / D`.
    pub big_sigma: [[f64; 2]; 2],
}

impl FrozenFrame {
    pub fn new(frame: &Frame, x0: [f64; 2], u0: f64) -> Result<FrozenFrame, LiftingError> {
        Self::with_tol(frame, x0, u0, frame.rank_tol())
    }

    pub fn with_tol(frame: &Frame, x0: [f64; 2], u0: f64, tol: f64) -> Result<FrozenFrame, LiftingError> {
        let p = [x0[0], x0[1], u0];
        let s1 = frame.sigma1(p);
        let s2 = frame.sigma2(p);
        let d = s1[0] * s2[1] - s1[1] * s2[0];
        if !(d.abs() > tol) {
            return Err(LiftingError::FrozenDegenerate { x0, d });
        }
        Ok(FrozenFrame {
            x0,
            u0,
            sigma: [s1, s2],
            d,
            big_sigma: [[s1[0] / d, s1[1] / d], [s2[0] / d, s2[1] / d]],
        })
    }

    /// Freezes at `x0` using the context's height function (bilinear between nodes).
    pub fn from_context(ctx: &ProjectedContext, x0: [f64; 2]) -> Result<FrozenFrame, LiftingError> {
        Self::new(ctx.frame(), x0, ctx.u().interpolate(x0))
    }

    /// Reconstructs `x − x0` from frozen coordinates.
    pub fn displacement(&self, e01: f64, eps_e02: f64) -> [f64; 2] {
        let [s1, s2] = self.sigma;
        [e01 * s1[0] + eps_e02 * s2[0], e01 * s1[1] + eps_e02 * s2[1]]
    }
}

/// `(e01, ε·e02)` at `x`.
pub fn frozen_coords(ff: &FrozenFrame, x: [f64; 2]) -> (f64, f64) {
    let d1 = x[0] - ff.x0[0];
    let d2 = x[1] - ff.x0[1];
    let [[s11, s12], [s21, s22]] = ff.big_sigma;
    (s22 * d1 - s21 * d2, s11 * d2 - s12 * d1)
}

/// Value and frozen horizontal derivatives of a function at the base point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jet {
    pub value: f64,
    pub x1: f64,
    pub y: f64,
}

impl Jet {
    pub fn from_gradient(ff: &FrozenFrame, value: f64, grad: [f64; 2]) -> Jet {
        let [s1, s2] = ff.sigma;
        Jet { value, x1: s1[0] * grad[0] + s1[1] * grad[1], y: s2[0] * grad[0] + s2[1] * grad[1] }
    }
}

/// `P h(x) = h(x0) + e01 (X1 h)(x0) + ε e02 (Y h)(x0)`.
pub fn taylor_p(ff: &FrozenFrame, jet: &Jet, x: [f64; 2]) -> f64 {
    let (e01, eps_e02) = frozen_coords(ff, x);
    jet.value + e01 * jet.x1 + eps_e02 * jet.y
}

/// A smooth function of `(x1, x2)` with its symbolic gradient; `x3` may appear and
/// is treated as an extra parameter (the lift variable `s` in bracket checks).
#[derive(Debug, Clone, PartialEq)]
pub struct Probe {
    pub name: String,
    f: Expr,
    d1: Expr,
    d2: Expr,
    d3: Expr,
}

impl Probe {
    pub fn parse(name: &str, src: &str) -> Result<Probe, LiftingError> {
        let f = Expr::parse(src)?;
        Ok(Probe {
            name: name.to_string(),
            d1: f.derivative(Var::X1),
            d2: f.derivative(Var::X2),
            d3: f.derivative(Var::X3),
            f,
        })
    }

    /// Built-in probes: `polynomial`, `trigonometric`, `rational`.
    pub fn builtin(name: &str) -> Option<Probe> {
        let src = match name {
            "polynomial" => "x1^2 + 0.5*x1*x2 - 0.75*x2^2 + 0.3*x1 - 0.2*x2 + 1",
            "trigonometric" => "sin(x1 + 0.3) * cos(2*x2) + 0.5*sin(x2)",
            "rational" => "1 / (2 + x1 + 0.5*x2^2)",
            _ => return None,
        };
        Some(Probe::parse(name, src).expect("builtin probe parses"))
    }

    pub fn value(&self, p: [f64; 3]) -> f64 {
        self.f.eval(p)
    }

    pub fn grad(&self, p: [f64; 3]) -> [f64; 2] {
        [self.d1.eval(p), self.d2.eval(p)]
    }

    pub fn d3(&self, p: [f64; 3]) -> f64 {
        self.d3.eval(p)
    }

    pub fn jet(&self, ff: &FrozenFrame) -> Jet {
        let p = [ff.x0[0], ff.x0[1], 0.0];
        Jet::from_gradient(ff, self.value(p), self.grad(p))
    }
}

/// `max_θ |h(x) − P h(x)| / r^{1+α}` on a circle of `samples` points per radius.
pub fn approximation_order(
    ff: &FrozenFrame,
    probe: &Probe,
    alpha: f64,
    radii: &[f64],
    samples: usize,
) -> Result<Vec<f64>, LiftingError> {
    if !(alpha > 0.0) {
        return Err(LiftingError::BadAlpha(alpha));
    }
    if radii.is_empty() || radii.iter().any(|r| !(*r > 0.0)) || radii.windows(2).any(|w| w[1] >= w[0]) {
        return Err(LiftingError::BadRadii);
    }
    let jet = probe.jet(ff);
    let out = radii
        .iter()
        .map(|&r| {
            let worst = (0..samples.max(1))
                .map(|k| {
                    let th = std::f64::consts::TAU * (k as f64 + 0.5) / samples.max(1) as f64;
                    let x = [ff.x0[0] + r * th.cos(), ff.x0[1] + r * th.sin()];
                    (probe.value([x[0], x[1], 0.0]) - taylor_p(ff, &jet, x)).abs()
                })
                .fold(0.0, f64::max);
            worst / r.powf(1.0 + alpha)
        })
        .collect();
    Ok(out)
}

/// Writes `radius,ratio`.
pub fn write_order_csv<W: Write>(mut w: W, radii: &[f64], ratios: &[f64]) -> std::io::Result<()> {
    writeln!(w, "radius,ratio")?;
    for (r, q) in radii.iter().zip(ratios) {
        writeln!(w, "{},{}", fmt17(*r), fmt17(*q))?;
    }
    Ok(())
}

/// Residues of the two lifted bracket identities at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BracketResidues {
    /// `|[X̃3, X̃1]F − (2s/ε) X̃2 F|`
    pub first: f64,
    /// `|[X̃3, [X̃3, X̃1]]F − (2/ε) X̃2 F|`
    pub second: f64,
}

fn s_derivative<'a>(g: &'a dyn Fn(f64, f64, f64) -> f64, h: f64) -> impl Fn(f64, f64, f64) -> f64 + 'a {
    move |x1, x2, s| (g(x1, x2, s + h) - g(x1, x2, s - h)) / (2.0 * h)
}

/// Checks the lifted bracket identities for `X̃1 = X1 + s²Y`, `X̃2 = εY`, `X̃3 = ∂s`
/// on a probe `F(x1, x2, s)` (with `s` read as `x3`), using nested central
/// differences of step `delta`. The field coefficients are taken at `(p, u(p))`.
pub fn lifted_fields_check(
    ctx: &ProjectedContext,
    probe: &Probe,
    p: [f64; 2],
    s: f64,
    delta: f64,
) -> BracketResidues {
    let frame = ctx.frame();
    let u = ctx.u().interpolate(p);
    let q = [p[0], p[1], u];
    let s1 = frame.sigma1(q);
    let s2 = frame.sigma2(q);
    let eps = ctx.eps();
    let h = delta;

    // x-gradient by central differences
    let grad = |g: &dyn Fn(f64, f64, f64) -> f64, s: f64| {
        [
            (g(p[0] + h, p[1], s) - g(p[0] - h, p[1], s)) / (2.0 * h),
            (g(p[0], p[1] + h, s) - g(p[0], p[1] - h, s)) / (2.0 * h),
        ]
    };
    let f = |x1: f64, x2: f64, s: f64| probe.value([x1, x2, s]);
    // X̃1 G at (p, s) for a function G(x1, x2, s)
    let xt1 = |g: &dyn Fn(f64, f64, f64) -> f64, s: f64| {
        let d = grad(g, s);
        (s1[0] + s * s * s2[0]) * d[0] + (s1[1] + s * s * s2[1]) * d[1]
    };
    let y = |g: &dyn Fn(f64, f64, f64) -> f64, s: f64| {
        let d = grad(g, s);
        s2[0] * d[0] + s2[1] * d[1]
    };
    // [X̃3, X̃1] G at s
    let bracket = |g: &dyn Fn(f64, f64, f64) -> f64, s: f64| {
        let a = (xt1(g, s + h) - xt1(g, s - h)) / (2.0 * h);
        let dg = s_derivative(g, h);
        a - xt1(&dg, s)
    };
    let x2f = eps * y(&f, s);
    let first = (bracket(&f, s) - 2.0 * s / eps * x2f).abs();
    let outer = (bracket(&f, s + h) - bracket(&f, s - h)) / (2.0 * h);
    let df = s_derivative(&f, h);
    let second = (outer - bracket(&df, s) - 2.0 / eps * x2f).abs();
    BracketResidues { first, second }
}
