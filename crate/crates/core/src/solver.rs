//! The ε-regularised minimal surface equation and its vanishing-viscosity continuation.
//!
//! The assembled operator is the nondivergence form
//! `N z = a_ij(∇_ε u) X_i,u X_j,u z`, with `X_i X_j z` expanded into
//! `S_i^a S_j^b ∂_ab z + S_i^a (∂_a S_j^b) ∂_b z` so that it fits a nine-point stencil.
//! Here `S_1 = σ1(x, u)` and `S_2 = ε σ2(x, u)`.

use thiserror::Error;

use crate::frames::{Frame, FrameError};
use crate::grid::{Grid, GridFunction};
use crate::linalg::{red_black_gauss_seidel, BandMatrix, LinearError, Stencil9, OFFSETS};
use crate::projected::{ContextError, ProjectedContext};

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("eps must be positive, got {0}")]
    NonPositiveEps(f64),
    #[error("invalid solver configuration: {0}")]
    Config(String),
    #[error("eps schedule must be strictly decreasing and positive")]
    BadSchedule,
    #[error("{}no convergence after {iterations} iterations (sup residual {residual:e})", stage_prefix(*.stage))]
    NonConvergence {
        stage: Option<usize>,
        iterations: usize,
        residual: f64,
    },
    #[error(transparent)]
    Frame(#[from] FrameError),
    #[error(transparent)]
    Linear(#[from] LinearError),
    #[error(transparent)]
    Context(#[from] ContextError),
}

fn stage_prefix(stage: Option<usize>) -> String {
    stage.map(|s| format!("stage {s}: ")).unwrap_or_default()
}

/// `a_ij(ν) = δ_ij − ν_i ν_j / (1 + |ν|²)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoefficientMatrix {
    pub a11: f64,
    pub a12: f64,
    pub a22: f64,
}

impl CoefficientMatrix {
    pub fn a21(&self) -> f64 {
        self.a12
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        match (i, j) {
            (0, 0) => self.a11,
            (1, 1) => self.a22,
            _ => self.a12,
        }
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> (f64, f64) {
        let m = 0.5 * (self.a11 + self.a22);
        let d = (0.25 * (self.a11 - self.a22).powi(2) + self.a12 * self.a12).sqrt();
        (m - d, m + d)
    }
}

pub fn coefficients_a(nu: [f64; 2]) -> CoefficientMatrix {
    let q = 1.0 + nu[0] * nu[0] + nu[1] * nu[1];
    CoefficientMatrix {
        a11: 1.0 - nu[0] * nu[0] / q,
        a12: -nu[0] * nu[1] / q,
        a22: 1.0 - nu[1] * nu[1] / q,
    }
}

/// Interior linear solver used inside each Picard step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LinearSolver {
    /// Direct banded LU with partial pivoting.
    BandedLu,
    /// Red-black Gauss–Seidel warm-started from the current iterate.
    RedBlackGaussSeidel { max_sweeps: usize, tol: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub max_outer_iters: usize,
    /// Damping θ in (0, 1].
    pub theta: f64,
    /// Sup-norm residual tolerance; `None` means `1e-9 (1 + ‖g‖∞)`.
    pub residual_tol: Option<f64>,
    pub update_tol: f64,
    pub linear: LinearSolver,
    /// Cap on `‖X1,u u‖∞ + ‖Yu u‖∞` monitored during continuation.
    pub lipschitz_cap: Option<f64>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            max_outer_iters: 500,
            theta: 0.8,
            residual_tol: None,
            update_tol: 1e-15,
            linear: LinearSolver::BandedLu,
            lipschitz_cap: None,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), SolverError> {
        if !(self.theta > 0.0 && self.theta <= 1.0) {
            return Err(SolverError::Config(format!("theta must lie in (0, 1], got {}", self.theta)));
        }
        if self.max_outer_iters == 0 {
            return Err(SolverError::Config("max_iters must be at least 1".into()));
        }
        if let Some(t) = self.residual_tol {
            if !(t > 0.0) {
                return Err(SolverError::Config(format!("residual_tol must be positive, got {t}")));
            }
        }
        if !(self.update_tol > 0.0) {
            return Err(SolverError::Config(format!(
                "update_tol must be positive, got {}",
                self.update_tol
            )));
        }
        if let LinearSolver::RedBlackGaussSeidel { max_sweeps, tol } = self.linear {
            if max_sweeps == 0 || !(tol > 0.0) {
                return Err(SolverError::Config("relaxation needs sweeps >= 1 and tol > 0".into()));
            }
        }
        if let Some(c) = self.lipschitz_cap {
            if !(c > 0.0) {
                return Err(SolverError::Config(format!("lipschitz_cap must be positive, got {c}")));
            }
        }
        Ok(())
    }

    pub fn residual_tol_for(&self, g: &GridFunction) -> f64 {
        self.residual_tol.unwrap_or(1e-9 * (1.0 + g.boundary_sup()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverResult {
    pub u: GridFunction,
    /// Sup-norm of the nondivergence residual before each Picard step, and after the last.
    pub residual_history: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
}

impl SolverResult {
    pub fn final_residual(&self) -> f64 {
        *self.residual_history.last().unwrap_or(&f64::INFINITY)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ViscosityRun {
    pub schedule: Vec<f64>,
    pub results: Vec<SolverResult>,
    /// `(‖X1,u u‖∞, ‖Yu u‖∞)` for every stage.
    pub budgets: Vec<(f64, f64)>,
    /// Stages whose budget sum exceeds the configured cap.
    pub flagged: Vec<usize>,
}

impl ViscosityRun {
    pub fn last(&self) -> &SolverResult {
        self.results.last().expect("runs have at least one stage")
    }
}

/// Nine-point stencils of the frozen operator `a_ij(∇_ε u) X_i,u X_j,u` at interior nodes.
///
/// Entry `(iy - 1) * (n1 - 2) + (ix - 1)` belongs to node `(ix, iy)`.
pub fn assemble_stencils(ctx: &ProjectedContext<'_>) -> Vec<Stencil9> {
    let g = *ctx.grid();
    let (n1, n2) = (g.n1, g.n2);
    let (h1, h2) = (g.h1(), g.h2());
    let eps = ctx.eps();
    let u = ctx.u();
    let nu1 = ctx.apply_x1(u);
    let nu2 = ctx.apply_x2(u);
    let s1 = ctx.sigma1_nodes();
    let s2 = ctx.sigma2_nodes();
    // S[field][component][node]
    let coeff = |f: usize, c: usize, k: usize| if f == 0 { s1[c][k] } else { eps * s2[c][k] };

    let mut out = Vec::with_capacity((n1 - 2) * (n2 - 2));
    for j in 1..n2 - 1 {
        for i in 1..n1 - 1 {
            let k = g.idx(i, j);
            let a = coefficients_a([nu1[(i, j)], nu2[(i, j)]]);
            let mut q = [[0.0; 2]; 2];
            let mut p = [0.0; 2];
            for fi in 0..2 {
                for fj in 0..2 {
                    let aij = a.get(fi, fj);
                    for ca in 0..2 {
                        let sia = coeff(fi, ca, k);
                        for cb in 0..2 {
                            q[ca][cb] += aij * sia * coeff(fj, cb, k);
                            // ∂_a S_j^b by central differences of the nodal coefficients
                            let d = if ca == 0 {
                                (coeff(fj, cb, k + 1) - coeff(fj, cb, k - 1)) / (2.0 * h1)
                            } else {
                                (coeff(fj, cb, k + n1) - coeff(fj, cb, k - n1)) / (2.0 * h2)
                            };
                            p[cb] += aij * sia * d;
                        }
                    }
                }
            }
            let mut st = Stencil9::default();
            let (i11, i22, i12) = (1.0 / (h1 * h1), 1.0 / (h2 * h2), 1.0 / (4.0 * h1 * h2));
            st.add(-1, 0, q[0][0] * i11);
            st.add(1, 0, q[0][0] * i11);
            st.add(0, 0, -2.0 * q[0][0] * i11 - 2.0 * q[1][1] * i22);
            st.add(0, -1, q[1][1] * i22);
            st.add(0, 1, q[1][1] * i22);
            let cross = (q[0][1] + q[1][0]) * i12;
            st.add(1, 1, cross);
            st.add(-1, -1, cross);
            st.add(1, -1, -cross);
            st.add(-1, 1, -cross);
            st.add(1, 0, p[0] / (2.0 * h1));
            st.add(-1, 0, -p[0] / (2.0 * h1));
            st.add(0, 1, p[1] / (2.0 * h2));
            st.add(0, -1, -p[1] / (2.0 * h2));
            // no zero-order term: rows sum to zero exactly
            st.c[4] = -(st.c.iter().sum::<f64>() - st.c[4]);
            out.push(st);
        }
    }
    out
}

fn apply_stencils(g: &Grid, stencils: &[Stencil9], z: &GridFunction) -> GridFunction {
    let mut out = g.zeros();
    let nx = g.n1 - 2;
    for j in 1..g.n2 - 1 {
        for i in 1..g.n1 - 1 {
            let s = &stencils[(j - 1) * nx + (i - 1)];
            let z0 = z[(i, j)];
            let mut acc = 0.0;
            for (q, &(di, dj)) in OFFSETS.iter().enumerate() {
                if q != 4 {
                    acc += s.c[q] * (z[((i as isize + di) as usize, (j as isize + dj) as usize)] - z0);
                }
            }
            out[(i, j)] = acc;
        }
    }
    out
}

/// `a_ij(∇_ε u) X_i,u X_j,u u` at interior nodes (zero on the boundary).
pub fn residual_nondivergence(ctx: &ProjectedContext<'_>) -> GridFunction {
    apply_stencils(ctx.grid(), &assemble_stencils(ctx), ctx.u())
}

/// `X_i,u (X_i,u u / W)` with `W = sqrt(1 + |∇_ε u|²)`, applying the discrete fields twice.
pub fn residual_divergence(ctx: &ProjectedContext<'_>) -> GridFunction {
    let u = ctx.u();
    let [g1, g2] = ctx.grad_eps(u);
    let w = g1.zip_map(&g2, |a, b| (1.0 + a * a + b * b).sqrt());
    let f1 = g1.zip_map(&w, |a, w| a / w);
    let f2 = g2.zip_map(&w, |a, w| a / w);
    let r1 = ctx.apply_x1(&f1);
    let r2 = ctx.apply_x2(&f2);
    r1.zip_map(&r2, |a, b| a + b)
}

/// `W = sqrt(1 + |∇_ε u|²)` at every node.
pub fn area_density(ctx: &ProjectedContext<'_>, regularized: bool) -> GridFunction {
    let u = ctx.u();
    let x1u = ctx.apply_x1(u);
    if regularized {
        let x2u = ctx.apply_x2(u);
        x1u.zip_map(&x2u, |a, b| (1.0 + a * a + b * b).sqrt())
    } else {
        x1u.map(|a| (1.0 + a * a).sqrt())
    }
}

/// Trapezoidal quadrature of the (optionally regularised) area density.
pub fn area_functional(ctx: &ProjectedContext<'_>, regularized: bool) -> f64 {
    area_density(ctx, regularized).integrate()
}

/// Coons patch of the boundary values of `g`.
pub fn transfinite_interpolation(g: &GridFunction) -> GridFunction {
    let grid = *g.grid();
    let (n1, n2) = (grid.n1, grid.n2);
    let mut out = g.clone();
    let (c00, c10, c01, c11) = (g[(0, 0)], g[(n1 - 1, 0)], g[(0, n2 - 1)], g[(n1 - 1, n2 - 1)]);
    for j in 1..n2 - 1 {
        let t = j as f64 / (n2 - 1) as f64;
        for i in 1..n1 - 1 {
            let s = i as f64 / (n1 - 1) as f64;
            let edges = (1.0 - s) * g[(0, j)] + s * g[(n1 - 1, j)] + (1.0 - t) * g[(i, 0)] + t * g[(i, n2 - 1)];
            let corners = (1.0 - s) * (1.0 - t) * c00 + s * (1.0 - t) * c10 + (1.0 - s) * t * c01 + s * t * c11;
            out[(i, j)] = edges - corners;
        }
    }
    out
}

/// Solves the frozen linear problem `N_v z = 0` with the Dirichlet data of `bc`.
fn linear_step(
    grid: &Grid,
    stencils: &[Stencil9],
    bc: &GridFunction,
    start: &GridFunction,
    linear: LinearSolver,
) -> Result<GridFunction, SolverError> {
    let (n1, n2) = (grid.n1, grid.n2);
    let (nx, ny) = (n1 - 2, n2 - 2);
    let n = nx * ny;
    let mut rhs = vec![0.0; n];
    for iy in 1..n2 - 1 {
        for ix in 1..n1 - 1 {
            let k = (iy - 1) * nx + (ix - 1);
            let s = &stencils[k];
            for (q, &(di, dj)) in OFFSETS.iter().enumerate() {
                let (x, y) = ((ix as isize + di) as usize, (iy as isize + dj) as usize);
                if grid.is_boundary(x, y) {
                    rhs[k] -= s.c[q] * bc[(x, y)];
                }
            }
        }
    }
    let sol = match linear {
        LinearSolver::BandedLu => {
            let band = nx + 1;
            let mut m = BandMatrix::zeros(n, band, band);
            for iy in 0..ny {
                for ix in 0..nx {
                    let k = iy * nx + ix;
                    for (q, &(di, dj)) in OFFSETS.iter().enumerate() {
                        let (x, y) = (ix as isize + di, iy as isize + dj);
                        if x < 0 || y < 0 || x >= nx as isize || y >= ny as isize {
                            continue;
                        }
                        m.add(k, y as usize * nx + x as usize, stencils[k].c[q]);
                    }
                }
            }
            let lu = m.factor()?;
            lu.solve(&mut rhs);
            rhs
        }
        LinearSolver::RedBlackGaussSeidel { max_sweeps, tol } => {
            let mut z: Vec<f64> = (0..n).map(|k| start[(k % nx + 1, k / nx + 1)]).collect();
            red_black_gauss_seidel(stencils, &rhs, &mut z, nx, ny, max_sweeps, tol)?;
            z
        }
    };
    let mut out = bc.clone();
    for (k, v) in sol.into_iter().enumerate() {
        out[(k % nx + 1, k / nx + 1)] = v;
    }
    Ok(out)
}

/// Lagged-coefficient (Picard) iteration for `L_{ε,u} u = 0` with Dirichlet data taken from
/// the boundary nodes of `bc`.
pub fn solve_regularized(
    frame: &Frame,
    eps: f64,
    bc: &GridFunction,
    initial: Option<&GridFunction>,
    cfg: &SolverConfig,
) -> Result<SolverResult, SolverError> {
    let result = solve_regularized_report(frame, eps, bc, initial, cfg)?;
    if result.converged {
        Ok(result)
    } else {
        Err(SolverError::NonConvergence {
            stage: None,
            iterations: result.iterations,
            residual: result.final_residual(),
        })
    }
}

/// Like [`solve_regularized`] but returns non-converged results instead of an error.
pub fn solve_regularized_report(
    frame: &Frame,
    eps: f64,
    bc: &GridFunction,
    initial: Option<&GridFunction>,
    cfg: &SolverConfig,
) -> Result<SolverResult, SolverError> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(SolverError::NonPositiveEps(eps));
    }
    cfg.validate()?;
    bc.check_finite().map_err(ContextError::from)?;
    let grid = *bc.grid();
    let tol = cfg.residual_tol_for(bc);

    let mut u = match initial {
        Some(u0) => {
            if u0.grid() != &grid {
                return Err(ContextError::GridMismatch.into());
            }
            let mut u = u0.clone();
            for j in 0..grid.n2 {
                for i in 0..grid.n1 {
                    if grid.is_boundary(i, j) {
                        u[(i, j)] = bc[(i, j)];
                    }
                }
            }
            u
        }
        None => transfinite_interpolation(bc),
    };

    let mut history = Vec::new();
    let mut iterations = 0;
    loop {
        let ctx = ProjectedContext::new(frame, &u, eps)?;
        ctx.check_rank()?;
        let stencils = assemble_stencils(&ctx);
        let res = apply_stencils(&grid, &stencils, &u).sup_norm();
        history.push(res);
        if res <= tol {
            return Ok(SolverResult { u, residual_history: history, converged: true, iterations });
        }
        if iterations >= cfg.max_outer_iters || !res.is_finite() {
            return Ok(SolverResult { u, residual_history: history, converged: false, iterations });
        }
        let next = linear_step(&grid, &stencils, bc, &u, cfg.linear)?;
        drop(ctx);
        let mut change = 0.0f64;
        for (a, b) in u.values_mut().iter_mut().zip(next.values()) {
            let new = (1.0 - cfg.theta) * *a + cfg.theta * b;
            change = change.max((new - *a).abs());
            *a = new;
        }
        iterations += 1;
        if change <= cfg.update_tol {
            // stagnated: report the residual of the final iterate
            let ctx = ProjectedContext::new(frame, &u, eps)?;
            let res = residual_nondivergence(&ctx).sup_norm();
            history.push(res);
            let converged = res <= tol;
            return Ok(SolverResult { u, residual_history: history, converged, iterations });
        }
    }
}

/// Runs [`solve_regularized`] along a decreasing ε schedule, warm-starting every stage.
pub fn viscosity_continuation(
    frame: &Frame,
    bc: &GridFunction,
    schedule: &[f64],
    cfg: &SolverConfig,
) -> Result<ViscosityRun, SolverError> {
    validate_schedule(schedule)?;
    let mut results: Vec<SolverResult> = Vec::with_capacity(schedule.len());
    let mut budgets = Vec::with_capacity(schedule.len());
    let mut flagged = Vec::new();
    for (stage, &eps) in schedule.iter().enumerate() {
        let start = results.last().map(|r| &r.u);
        let r = solve_regularized_report(frame, eps, bc, start, cfg)?;
        if !r.converged {
            return Err(SolverError::NonConvergence {
                stage: Some(stage),
                iterations: r.iterations,
                residual: r.final_residual(),
            });
        }
        let budget = ProjectedContext::new(frame, &r.u, eps)?.lipschitz_budget();
        if let Some(cap) = cfg.lipschitz_cap {
            if budget.0 + budget.1 > cap {
                flagged.push(stage);
            }
        }
        budgets.push(budget);
        results.push(r);
    }
    Ok(ViscosityRun { schedule: schedule.to_vec(), results, budgets, flagged })
}

pub fn validate_schedule(schedule: &[f64]) -> Result<(), SolverError> {
    if schedule.is_empty()
        || schedule.iter().any(|e| !(*e > 0.0 && e.is_finite()))
        || schedule.windows(2).any(|w| w[1] >= w[0])
    {
        return Err(SolverError::BadSchedule);
    }
    Ok(())
}
