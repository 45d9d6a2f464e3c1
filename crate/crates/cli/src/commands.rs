use std::io::Write;
use std::path::PathBuf;

use smg::config::{read_grid_csv, ConfigError, RunConfig};
use smg::diagnostics::{
    caccioppoli_sides, divergence_operator, uniformity_sweep, write_sweep_csv, CutoffFunction,
};
use smg::foliation::{foliate as foliate_leaves, seed_lattice, write_leaves_csv, write_report_csv};
use smg::grid::{fmt17, GridFunction};
use smg::lifting::{approximation_order, lifted_fields_check, write_order_csv, FrozenFrame, Probe};
use smg::solver::{solve_regularized_report, viscosity_continuation, SolverError, SolverResult};
use smg::{Frame, ProjectedContext};

use crate::output::{display, OutDir};
use crate::{Common, Failure};

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.to_string())
    }
}

fn solver_failure(e: SolverError) -> Failure {
    match e {
        SolverError::NonConvergence { .. } | SolverError::Frame(_) | SolverError::Linear(_) => {
            Failure::Numerical(e.to_string())
        }
        _ => Failure::Config(e.to_string()),
    }
}

struct Setup {
    cfg: RunConfig,
    frame: Frame,
    out: OutDir,
}

fn setup(c: &Common) -> Result<Setup, Failure> {
    let cfg = RunConfig::from_file(&c.config)?;
    let frame = cfg.load_frame()?;
    let dir = c.out.clone().or_else(|| cfg.out.clone()).unwrap_or_else(|| PathBuf::from("."));
    let out = OutDir::create(dir)?;
    Ok(Setup { cfg, frame, out })
}

fn write_residuals(
    w: &mut dyn Write,
    stages: &[(usize, &SolverResult)],
) -> std::io::Result<()> {
    writeln!(w, "stage,iter,sup_residual")?;
    for (stage, r) in stages {
        for (k, v) in r.residual_history.iter().enumerate() {
            writeln!(w, "{stage},{k},{}", fmt17(*v))?;
        }
    }
    Ok(())
}

pub fn solve(c: &Common) -> Result<(), Failure> {
    let s = setup(c)?;
    let eps = s
        .cfg
        .solver
        .eps
        .ok_or_else(|| Failure::Config("solve needs solver.eps".into()))?;
    let bc = s.cfg.boundary_data()?;
    let result =
        solve_regularized_report(&s.frame, eps, &bc, None, &s.cfg.solver_config()).map_err(solver_failure)?;
    s.out.write("residuals.csv", |w| write_residuals(w, &[(0, &result)]))?;
    if !result.converged {
        return Err(Failure::Numerical(format!(
            "no convergence after {} iterations (sup residual {:e})",
            result.iterations,
            result.final_residual()
        )));
    }
    let path = s.out.write("u.csv", |w| result.u.write_csv(w))?;
    println!(
        "converged in {} iterations, sup residual {:e}; wrote {}",
        result.iterations,
        result.final_residual(),
        display(&path)
    );
    Ok(())
}

pub fn viscosity(c: &Common) -> Result<(), Failure> {
    let s = setup(c)?;
    let schedule = s
        .cfg
        .solver
        .eps_schedule
        .clone()
        .ok_or_else(|| Failure::Config("viscosity needs solver.eps_schedule".into()))?;
    let bc = s.cfg.boundary_data()?;
    let run = viscosity_continuation(&s.frame, &bc, &schedule, &s.cfg.solver_config()).map_err(solver_failure)?;

    let sw = s.cfg.sweep_block();
    let sub = s.cfg.sweep_subdomain();
    let report = uniformity_sweep(&s.frame, &run, sw.m, sw.p, &sub, sw.factor)
        .map_err(|e| Failure::Config(format!("sweep: {e}")))?;

    let stages: Vec<(usize, &SolverResult)> = run.results.iter().enumerate().collect();
    s.out.write("residuals.csv", |w| write_residuals(w, &stages))?;
    s.out.write("u.csv", |w| run.last().u.write_csv(w))?;
    s.out.write("sweep.csv", |w| write_sweep_csv(w, &report))?;
    if report.flagged {
        eprintln!(
            "warning: norm spread across the schedule exceeds {} (u: {:.4}, Yu u: {:.4})",
            report.factor, report.spread_u, report.spread_yu
        );
    }
    if let Some(&k) = run.flagged.first() {
        let (a, b) = run.budgets[k];
        return Err(Failure::Numerical(format!(
            "stage {k}: Lipschitz budget {:e} exceeds lipschitz_cap",
            a + b
        )));
    }
    println!("{} stages converged; spread u {:.4}, Yu u {:.4}", run.results.len(), report.spread_u, report.spread_yu);
    Ok(())
}

/// Height function for `foliate`/`diagnose`: a solution CSV when given, otherwise the
/// `[bc]` data on the configured grid.
fn height(cfg: &RunConfig, solution: Option<&PathBuf>) -> Result<GridFunction, Failure> {
    match solution {
        Some(p) => Ok(read_grid_csv(p)?),
        None => Ok(cfg.boundary_data()?),
    }
}

pub fn foliate(c: &Common) -> Result<(), Failure> {
    let s = setup(c)?;
    let fc = s.cfg.foliate_block()?;
    let u = height(&s.cfg, fc.solution.as_ref())?;
    let rect = u.grid().rect();
    let mut seeds = match (c.seed_lattice, fc.lattice) {
        (Some((r, k)), _) | (None, Some([r, k])) => seed_lattice(&rect, r, k),
        (None, None) if fc.seeds.is_empty() => seed_lattice(&rect, 5, 5),
        (None, None) => Vec::new(),
    };
    seeds.extend(fc.seeds.iter().copied());
    let (leaves, report) = foliate_leaves(&s.frame, &u, &seeds, (fc.t_min, fc.t_max), fc.dt);
    s.out.write("leaves.csv", |w| write_leaves_csv(w, &leaves))?;
    s.out.write("report.csv", |w| write_report_csv(w, &report))?;
    for (k, r) in report.per_leaf.iter().enumerate() {
        if let Err(e) = r {
            eprintln!("warning: leaf {k}: {e}");
        }
    }
    println!("{} leaves, global max residual {:e}", seeds.len(), report.global_max);
    Ok(())
}

fn probe_file_stem(name: &str) -> String {
    name.chars().map(|ch| if ch.is_ascii_alphanumeric() || ch == '_' { ch } else { '_' }).collect()
}

pub fn diagnose(c: &Common) -> Result<(), Failure> {
    let s = setup(c)?;
    let dc = s.cfg.diagnose_block()?;
    let eps = s
        .cfg
        .solver
        .eps
        .or_else(|| s.cfg.solver.eps_schedule.as_ref().and_then(|v| v.last().copied()))
        .ok_or_else(|| Failure::Config("diagnose needs solver.eps or solver.eps_schedule".into()))?;
    let u = height(&s.cfg, dc.solution.as_ref())?;
    let rect = u.grid().rect();
    let x0 = dc.x0.unwrap_or([(rect.a1 + rect.b1) / 2.0, (rect.a2 + rect.b2) / 2.0]);
    if !rect.contains(x0) {
        return Err(Failure::Config(format!("diagnose.x0 ({}, {}) lies outside the domain", x0[0], x0[1])));
    }
    let ctx = ProjectedContext::new(&s.frame, &u, eps).map_err(|e| Failure::Config(e.to_string()))?;
    let ff = FrozenFrame::from_context(&ctx, x0).map_err(|e| Failure::Numerical(e.to_string()))?;

    let mut probes = Vec::with_capacity(dc.probes.len());
    for (k, p) in dc.probes.iter().enumerate() {
        let probe = match Probe::builtin(p) {
            Some(b) => b,
            None => Probe::parse(&format!("probe{k}"), p)
                .map_err(|e| Failure::Config(format!("diagnose.probes[{k}]: {e}")))?,
        };
        probes.push(probe);
    }

    for probe in &probes {
        let stem = probe_file_stem(&probe.name);
        let mut table = Vec::with_capacity(dc.alphas.len());
        for &alpha in &dc.alphas {
            let ratios = approximation_order(&ff, probe, alpha, &dc.radii, dc.samples)
                .map_err(|e| Failure::Config(e.to_string()))?;
            s.out.write(&format!("order_{stem}_alpha{alpha}.csv"), |w| write_order_csv(w, &dc.radii, &ratios))?;
            table.push(ratios);
        }
        s.out.write(&format!("order_{stem}.csv"), |w| {
            write!(w, "radius")?;
            for a in &dc.alphas {
                write!(w, ",ratio_alpha{a}")?;
            }
            writeln!(w)?;
            for (i, r) in dc.radii.iter().enumerate() {
                write!(w, "{}", fmt17(*r))?;
                for col in &table {
                    write!(w, ",{}", fmt17(col[i]))?;
                }
                writeln!(w)?;
            }
            Ok(())
        })?;

        s.out.write(&format!("brackets_{stem}.csv"), |w| {
            writeln!(w, "s,delta,first,second")?;
            for sv in [0.0, 0.5, 1.0] {
                for delta in [1e-2, 5e-3, 2.5e-3] {
                    let r = lifted_fields_check(&ctx, probe, x0, sv, delta);
                    writeln!(w, "{},{},{},{}", fmt17(sv), fmt17(delta), fmt17(r.first), fmt17(r.second))?;
                }
            }
            Ok(())
        })?;
    }

    let (inner, outer) = s.cfg.cutoff_rects();
    let phi = CutoffFunction::new(inner, outer).map_err(|e| Failure::Config(e.to_string()))?;
    let z = ctx.apply_x1(&u);
    let f = divergence_operator(&ctx, &z);
    let sides = caccioppoli_sides(&ctx, &z, &f, dc.p, &phi).map_err(|e| Failure::Config(e.to_string()))?;
    let denom = sides.rhs1 + sides.rhs2.abs();
    let ratio = if denom > 0.0 { sides.lhs / denom } else { 0.0 };
    s.out.write("caccioppoli.csv", |w| {
        writeln!(w, "eps,p,lhs,rhs1,rhs2,ratio")?;
        writeln!(
            w,
            "{},{},{},{},{},{}",
            fmt17(eps),
            fmt17(dc.p),
            fmt17(sides.lhs),
            fmt17(sides.rhs1),
            fmt17(sides.rhs2),
            fmt17(ratio)
        )
    })?;
    println!("{} probes x {} alphas written", probes.len(), dc.alphas.len());
    Ok(())
}
