//! Horizontal leaves: integral curves of `X1,u` and the affinity of `u` along them.

use std::io::Write;

use thiserror::Error;

use crate::frames::Frame;
use crate::grid::{fmt17, GridFunction, Rect};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FoliationError {
    #[error("seed ({:.6}, {:.6}) lies outside the domain", .0[0], .0[1])]
    SeedOutsideDomain([f64; 2]),
    #[error("leaf has {0} samples, at least 3 are needed")]
    TooFewSamples(usize),
    #[error("invalid time stepping: dt = {dt}, span = [{t_min}, {t_max}]")]
    BadStep { dt: f64, t_min: f64, t_max: f64 },
}

/// A height function that can be evaluated anywhere in its domain.
pub trait HeightField {
    fn domain(&self) -> Rect;
    fn value(&self, p: [f64; 2]) -> f64;
}

impl HeightField for GridFunction {
    fn domain(&self) -> Rect {
        self.grid().rect()
    }

    fn value(&self, p: [f64; 2]) -> f64 {
        self.interpolate(p)
    }
}

/// A closed-form height function on a rectangle.
pub struct AnalyticField<F> {
    pub domain: Rect,
    pub f: F,
}

impl<F: Fn(f64, f64) -> f64> HeightField for AnalyticField<F> {
    fn domain(&self) -> Rect {
        self.domain
    }

    fn value(&self, p: [f64; 2]) -> f64 {
        (self.f)(p[0], p[1])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitReason {
    LeftDomain,
    SpanExhausted,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Leaf {
    pub seed: [f64; 2],
    pub dt: f64,
    pub t: Vec<f64>,
    pub points: Vec<[f64; 2]>,
    pub u: Vec<f64>,
    pub exit_backward: ExitReason,
    pub exit_forward: ExitReason,
}

impl Leaf {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FoliationReport {
    pub seeds: Vec<[f64; 2]>,
    /// Max `|Δ² u∘γ| / dt²` per leaf, or why the leaf could not be evaluated.
    pub per_leaf: Vec<Result<f64, FoliationError>>,
    pub global_max: f64,
}

fn velocity<H: HeightField + ?Sized>(frame: &Frame, field: &H, p: [f64; 2]) -> [f64; 2] {
    frame.sigma1([p[0], p[1], field.value(p)])
}

fn rk4_step<H: HeightField + ?Sized>(frame: &Frame, field: &H, p: [f64; 2], dt: f64) -> [f64; 2] {
    let k1 = velocity(frame, field, p);
    let k2 = velocity(frame, field, [p[0] + 0.5 * dt * k1[0], p[1] + 0.5 * dt * k1[1]]);
    let k3 = velocity(frame, field, [p[0] + 0.5 * dt * k2[0], p[1] + 0.5 * dt * k2[1]]);
    let k4 = velocity(frame, field, [p[0] + dt * k3[0], p[1] + dt * k3[1]]);
    [
        p[0] + dt / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
        p[1] + dt / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
    ]
}

fn march<H: HeightField + ?Sized>(
    frame: &Frame,
    field: &H,
    seed: [f64; 2],
    step: f64,
    steps: usize,
) -> (Vec<[f64; 2]>, ExitReason) {
    let dom = field.domain();
    let mut pts = Vec::with_capacity(steps);
    let mut p = seed;
    for _ in 0..steps {
        let next = rk4_step(frame, field, p, step);
        if !dom.contains(next) || !next[0].is_finite() || !next[1].is_finite() {
            return (pts, ExitReason::LeftDomain);
        }
        pts.push(next);
        p = next;
    }
    (pts, ExitReason::SpanExhausted)
}

/// Integrates `γ' = σ1(γ, u(γ))` with classical RK4 from `seed`, backward to `t_span.0`
/// and forward to `t_span.1`, clipping at the domain boundary.
pub fn integrate_leaf<H: HeightField + ?Sized>(
    frame: &Frame,
    field: &H,
    seed: [f64; 2],
    t_span: (f64, f64),
    dt: f64,
) -> Result<Leaf, FoliationError> {
    let (t_min, t_max) = t_span;
    if !(dt > 0.0 && dt.is_finite() && t_min <= 0.0 && t_max >= 0.0) {
        return Err(FoliationError::BadStep { dt, t_min, t_max });
    }
    if !field.domain().contains(seed) {
        return Err(FoliationError::SeedOutsideDomain(seed));
    }
    let count = |len: f64| (len / dt + 1e-9).floor() as usize;
    let (back, exit_backward) = march(frame, field, seed, -dt, count(-t_min));
    let (fwd, exit_forward) = march(frame, field, seed, dt, count(t_max));

    let nb = back.len();
    let mut points = Vec::with_capacity(nb + 1 + fwd.len());
    points.extend(back.into_iter().rev());
    points.push(seed);
    points.extend(fwd);
    let t = (0..points.len()).map(|k| (k as f64 - nb as f64) * dt).collect();
    let u = points.iter().map(|&p| field.value(p)).collect();
    Ok(Leaf { seed, dt, t, points, u, exit_backward, exit_forward })
}

/// `max |u(γ(t+dt)) − 2u(γ(t)) + u(γ(t−dt))| / dt²` over interior samples.
pub fn leaf_affinity_residual(leaf: &Leaf) -> Result<f64, FoliationError> {
    if leaf.u.len() < 3 {
        return Err(FoliationError::TooFewSamples(leaf.u.len()));
    }
    let dt2 = leaf.dt * leaf.dt;
    Ok(leaf
        .u
        .windows(3)
        .map(|w| (w[2] - 2.0 * w[1] + w[0]).abs() / dt2)
        .fold(0.0, f64::max))
}

/// Integrates one leaf per seed and aggregates their affinity residuals.
pub fn foliate<H: HeightField + Sync + ?Sized>(
    frame: &Frame,
    field: &H,
    seeds: &[[f64; 2]],
    t_span: (f64, f64),
    dt: f64,
) -> (Vec<Result<Leaf, FoliationError>>, FoliationReport) {
    let one = |s: &[f64; 2]| integrate_leaf(frame, field, *s, t_span, dt);
    #[cfg(feature = "parallel")]
    let leaves: Vec<_> = {
        use rayon::prelude::*;
        seeds.par_iter().map(one).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let leaves: Vec<_> = seeds.iter().map(one).collect();

    let per_leaf: Vec<Result<f64, FoliationError>> = leaves
        .iter()
        .map(|l| l.as_ref().map_err(Clone::clone).and_then(leaf_affinity_residual))
        .collect();
    let global_max = per_leaf.iter().filter_map(|r| r.as_ref().ok()).fold(0.0f64, |m, &v| m.max(v));
    let report = FoliationReport { seeds: seeds.to_vec(), per_leaf, global_max };
    (leaves, report)
}

/// `rows x cols` seeds strictly inside `r`, evenly spaced.
pub fn seed_lattice(r: &Rect, rows: usize, cols: usize) -> Vec<[f64; 2]> {
    let mut out = Vec::with_capacity(rows * cols);
    for a in 0..rows {
        let y = r.a2 + (r.b2 - r.a2) * (a + 1) as f64 / (rows + 1) as f64;
        for b in 0..cols {
            let x = r.a1 + (r.b1 - r.a1) * (b + 1) as f64 / (cols + 1) as f64;
            out.push([x, y]);
        }
    }
    out
}

/// Writes `leaf_id,t,x1,x2,u`; leaves that failed are skipped.
pub fn write_leaves_csv<W: Write>(mut w: W, leaves: &[Result<Leaf, FoliationError>]) -> std::io::Result<()> {
    writeln!(w, "leaf_id,t,x1,x2,u")?;
    for (id, leaf) in leaves.iter().enumerate() {
        if let Ok(leaf) = leaf {
            for k in 0..leaf.len() {
                writeln!(
                    w,
                    "{id},{},{},{},{}",
                    fmt17(leaf.t[k]),
                    fmt17(leaf.points[k][0]),
                    fmt17(leaf.points[k][1]),
                    fmt17(leaf.u[k])
                )?;
            }
        }
    }
    Ok(())
}

/// Writes `leaf_id,max_residual`; failed leaves carry `NaN`.
pub fn write_report_csv<W: Write>(mut w: W, report: &FoliationReport) -> std::io::Result<()> {
    writeln!(w, "leaf_id,max_residual")?;
    for (id, r) in report.per_leaf.iter().enumerate() {
        match r {
            Ok(v) => writeln!(w, "{id},{}", fmt17(*v))?,
            Err(_) => writeln!(w, "{id},NaN")?,
        }
    }
    Ok(())
}
