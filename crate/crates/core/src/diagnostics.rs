//! Discrete intrinsic Sobolev norms, Hölder seminorms, Caccioppoli integrals and the
//! ε-uniformity sweep over a viscosity run.

use std::io::Write;

use thiserror::Error;

use crate::frames::Frame;
use crate::grid::{fmt17, GridFunction, IndexBox, Rect};
use crate::projected::{ContextError, ProjectedContext};
use crate::solver::{coefficients_a, ViscosityRun};

#[derive(Debug, Error)]
pub enum DiagnosticsError {
    #[error("subdomain needs a margin of {margin} nodes inside the grid")]
    SubdomainTooLarge { margin: usize },
    #[error("subdomain contains no grid nodes")]
    EmptySubdomain,
    #[error("exponent p = {0} is out of range")]
    BadExponent(f64),
    #[error("alpha = {0} must lie in (0, 1)")]
    BadAlpha(f64),
    #[error("cutoff rectangles must be strictly nested (inner inside outer)")]
    BadCutoff,
    #[error(transparent)]
    Context(#[from] ContextError),
}

/// Tensor-product smootherstep cutoff: 1 on `inner`, 0 outside `outer`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CutoffFunction {
    inner: Rect,
    outer: Rect,
}

fn smootherstep(t: f64) -> f64 {
    let t = t.clamp(0.0, 1.0);
    t * t * t * (t * (6.0 * t - 15.0) + 10.0)
}

fn blend(x: f64, o0: f64, i0: f64, i1: f64, o1: f64) -> f64 {
    if x <= i0 {
        smootherstep((x - o0) / (i0 - o0))
    } else if x >= i1 {
        smootherstep((o1 - x) / (o1 - i1))
    } else {
        1.0
    }
}

impl CutoffFunction {
    pub fn new(inner: Rect, outer: Rect) -> Result<CutoffFunction, DiagnosticsError> {
        let ok = outer.a1 < inner.a1
            && inner.a1 <= inner.b1
            && inner.b1 < outer.b1
            && outer.a2 < inner.a2
            && inner.a2 <= inner.b2
            && inner.b2 < outer.b2;
        if !ok {
            return Err(DiagnosticsError::BadCutoff);
        }
        Ok(CutoffFunction { inner, outer })
    }

    pub fn inner(&self) -> Rect {
        self.inner
    }

    pub fn outer(&self) -> Rect {
        self.outer
    }

    pub fn value(&self, p: [f64; 2]) -> f64 {
        let (i, o) = (self.inner, self.outer);
        blend(p[0], o.a1, i.a1, i.b1, o.b1) * blend(p[1], o.a2, i.a2, i.b2, o.b2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormReport {
    pub m: usize,
    pub p: f64,
    pub subdomain: Rect,
    pub value: f64,
    pub eps: f64,
}

/// All words of length `0..=m` in `{X1,u, X2,u}` applied to `z`.
fn words(ctx: &ProjectedContext, z: &GridFunction, m: usize) -> Vec<GridFunction> {
    let mut all = vec![z.clone()];
    let mut level = vec![z.clone()];
    for _ in 0..m {
        let next: Vec<GridFunction> =
            level.iter().flat_map(|w| [ctx.apply_x1(w), ctx.apply_x2(w)]).collect();
        all.extend(next.iter().cloned());
        level = next;
    }
    all
}

fn subdomain_box(ctx: &ProjectedContext, sub: &Rect, margin: usize) -> Result<IndexBox, DiagnosticsError> {
    let g = ctx.grid();
    let b = g.box_of(sub).ok_or(DiagnosticsError::EmptySubdomain)?;
    if 2 * margin + 1 > g.n1.min(g.n2) || !g.interior_box(margin).contains_box(&b) {
        return Err(DiagnosticsError::SubdomainTooLarge { margin });
    }
    Ok(b)
}

/// `(Σ_{|w| ≤ m} ∫_sub |w z|^p)^{1/p}`, summed over all words `w` in `X1,u`, `X2,u`.
pub fn sobolev_norm(
    ctx: &ProjectedContext,
    z: &GridFunction,
    m: usize,
    p: f64,
    subdomain: &Rect,
) -> Result<NormReport, DiagnosticsError> {
    if !(p >= 1.0 && p.is_finite()) {
        return Err(DiagnosticsError::BadExponent(p));
    }
    let b = subdomain_box(ctx, subdomain, m)?;
    let total: f64 = words(ctx, z, m).iter().map(|w| w.map(|v| v.abs().powf(p)).integrate_on(&b)).sum();
    Ok(NormReport { m, p, subdomain: *subdomain, value: total.powf(1.0 / p), eps: ctx.eps() })
}

/// `max |z(x) − z(y)| / |x − y|^α` over node pairs in `subdomain`.
///
/// All pairs are visited when there are at most `max_pairs`; otherwise a fixed
/// low-discrepancy sequence of pairs is used.
pub fn holder_seminorm(
    z: &GridFunction,
    alpha: f64,
    subdomain: &Rect,
    max_pairs: usize,
) -> Result<f64, DiagnosticsError> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(DiagnosticsError::BadAlpha(alpha));
    }
    let g = *z.grid();
    let b = g.box_of(subdomain).ok_or(DiagnosticsError::EmptySubdomain)?;
    let mut nodes = Vec::new();
    for j in b.j0..=b.j1 {
        for i in b.i0..=b.i1 {
            nodes.push((g.point(i, j), z[(i, j)]));
        }
    }
    let q = |a: usize, c: usize| {
        let ((x, zx), (y, zy)) = (nodes[a], nodes[c]);
        let d = ((x[0] - y[0]).powi(2) + (x[1] - y[1]).powi(2)).sqrt();
        if d > 0.0 {
            (zx - zy).abs() / d.powf(alpha)
        } else {
            0.0
        }
    };
    let n = nodes.len();
    let mut best = 0.0f64;
    if n * n.saturating_sub(1) / 2 <= max_pairs {
        for a in 0..n {
            for c in a + 1..n {
                best = best.max(q(a, c));
            }
        }
    } else {
        // additive recurrence on the unit square (generalised golden ratio)
        let phi2 = 1.324_717_957_244_746;
        let (g1, g2) = (1.0 / phi2, 1.0 / (phi2 * phi2));
        for k in 0..max_pairs {
            let s = ((0.5 + k as f64 * g1).fract() * n as f64) as usize;
            let t = ((0.5 + k as f64 * g2).fract() * n as f64) as usize;
            best = best.max(q(s.min(n - 1), t.min(n - 1)));
        }
    }
    Ok(best)
}

/// `X_i (a_ij(∇_ε u) / sqrt(1 + |∇_ε u|²) X_j z)`.
pub fn divergence_operator(ctx: &ProjectedContext, z: &GridFunction) -> GridFunction {
    let u = ctx.u();
    let [g1, g2] = ctx.grad_eps(u);
    let [z1, z2] = ctx.grad_eps(z);
    let mut f1 = z1.clone();
    let mut f2 = z2.clone();
    for k in 0..f1.values().len() {
        let nu = [g1.values()[k], g2.values()[k]];
        let a = coefficients_a(nu);
        let w = (1.0 + nu[0] * nu[0] + nu[1] * nu[1]).sqrt();
        let (p, q) = (z1.values()[k], z2.values()[k]);
        f1.values_mut()[k] = (a.a11 * p + a.a12 * q) / w;
        f2.values_mut()[k] = (a.a12 * p + a.a22 * q) / w;
    }
    ctx.apply_x1(&f1).zip_map(&ctx.apply_x2(&f2), |a, b| a + b)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CaccioppoliSides {
    pub lhs: f64,
    pub rhs1: f64,
    pub rhs2: f64,
}

/// The three integrals of the first Caccioppoli inequality, over the whole grid.
pub fn caccioppoli_sides(
    ctx: &ProjectedContext,
    z: &GridFunction,
    f: &GridFunction,
    p: f64,
    phi: &CutoffFunction,
) -> Result<CaccioppoliSides, DiagnosticsError> {
    if !(p >= 3.0 && p.is_finite()) {
        return Err(DiagnosticsError::BadExponent(p));
    }
    let g = *ctx.grid();
    let ph = g.sample(|x, y| phi.value([x, y]));
    let w = z.map(|v| v.abs().powf((p - 1.0) / 2.0));
    let [w1, w2] = ctx.grad_eps(&w);
    let [p1, p2] = ctx.grad_eps(&ph);
    let n = g.len();
    let (mut lhs, mut rhs1, mut rhs2) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    for k in 0..n {
        let (zk, fk, c) = (z.values()[k], f.values()[k], ph.values()[k]);
        let c2p = c.powf(2.0 * p);
        lhs[k] = (w1.values()[k].powi(2) + w2.values()[k].powi(2)) * c2p;
        let grad_phi2 = p1.values()[k].powi(2) + p2.values()[k].powi(2);
        rhs1[k] = zk.abs().powf(p - 1.0) * (c * c + grad_phi2) * c.powf(2.0 * p - 2.0);
        rhs2[k] = fk * zk.abs().powf(p - 3.0) * zk * c2p;
    }
    let int = |v: Vec<f64>| GridFunction::from_values(g, v).map(|gf| gf.integrate()).unwrap_or(f64::NAN);
    Ok(CaccioppoliSides { lhs: int(lhs), rhs1: int(rhs1), rhs2: int(rhs2) })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub eps: f64,
    pub norm_u: NormReport,
    pub norm_yu: NormReport,
    pub lip_x1u: f64,
    pub lip_yu: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
    /// max/min of the `u` norms across stages.
    pub spread_u: f64,
    /// max/min of the `Yu u` norms across stages.
    pub spread_yu: f64,
    pub factor: f64,
    pub flagged: bool,
}

fn spread(v: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = v.clone().fold(f64::NEG_INFINITY, f64::max);
    let min = v.fold(f64::INFINITY, f64::min);
    if max == 0.0 {
        1.0
    } else {
        max / min
    }
}

/// `W^{m,p}_ε` of `u` and `W^{m−1,p}_ε` of `Yu u` at every stage of `run`.
pub fn uniformity_sweep(
    frame: &Frame,
    run: &ViscosityRun,
    m: usize,
    p: f64,
    subdomain: &Rect,
    factor: f64,
) -> Result<SweepReport, DiagnosticsError> {
    let mut rows = Vec::with_capacity(run.results.len());
    for (k, (r, &eps)) in run.results.iter().zip(&run.schedule).enumerate() {
        let ctx = ProjectedContext::new(frame, &r.u, eps)?;
        let yu = ctx.apply_y(&r.u);
        let norm_u = sobolev_norm(&ctx, &r.u, m, p, subdomain)?;
        let norm_yu = sobolev_norm(&ctx, &yu, m.saturating_sub(1), p, subdomain)?;
        let (lip_x1u, lip_yu) = run.budgets.get(k).copied().unwrap_or_else(|| ctx.lipschitz_budget());
        rows.push(SweepRow { eps, norm_u, norm_yu, lip_x1u, lip_yu });
    }
    let spread_u = spread(rows.iter().map(|r| r.norm_u.value));
    let spread_yu = spread(rows.iter().map(|r| r.norm_yu.value));
    let flagged = !(spread_u <= factor && spread_yu <= factor);
    Ok(SweepReport { rows, spread_u, spread_yu, factor, flagged })
}

/// Writes `eps,m,p,norm_u,norm_Yu,lip_X1u,lip_Yu`.
pub fn write_sweep_csv<W: Write>(mut w: W, report: &SweepReport) -> std::io::Result<()> {
    writeln!(w, "eps,m,p,norm_u,norm_Yu,lip_X1u,lip_Yu")?;
    for r in &report.rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            fmt17(r.eps),
            r.norm_u.m,
            fmt17(r.norm_u.p),
            fmt17(r.norm_u.value),
            fmt17(r.norm_yu.value),
            fmt17(r.lip_x1u),
            fmt17(r.lip_yu)
        )?;
    }
    Ok(())
}
