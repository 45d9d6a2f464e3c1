//! wasm-bindgen bindings for the static demo page in `www/`.
//!
//! Each export is a thin wrapper around a plain Rust function so the logic can
//! be tested natively.

use smg::expr::Expr;
use smg::frames::builtin;
use smg::grid::Grid;
use smg::lifting::{approximation_order, FrozenFrame, Probe};
use smg::{foliate, solve_regularized, Frame, GridFunction, SolverConfig};
use wasm_bindgen::prelude::*;

pub const RADII: [f64; 4] = [1e-1, 1e-2, 1e-3, 1e-4];
const MAX_CELLS: usize = 96;

fn frame(name: &str) -> Result<Frame, String> {
    builtin(name).ok_or_else(|| format!("unknown frame {name:?}"))
}

fn solve_on_square(frame_name: &str, bc: &str, eps: f64, cells: usize) -> Result<(Frame, GridFunction, usize, f64), String> {
    if !(2..=MAX_CELLS).contains(&cells) {
        return Err(format!("cells must be in 2..={MAX_CELLS}"));
    }
    let fr = frame(frame_name)?;
    let e = Expr::parse(bc).map_err(|e| e.to_string())?;
    let g = Grid::square(-1.0, 1.0, cells).map_err(|e| e.to_string())?;
    let data = g.sample(|x, y| e.eval([x, y, 0.0]));
    data.check_finite().map_err(|e| e.to_string())?;
    let r = solve_regularized(&fr, eps, &data, None, &SolverConfig::default()).map_err(|e| e.to_string())?;
    let res = r.final_residual();
    Ok((fr, r.u, r.iterations, res))
}

/// Solution values row by row (x1 fastest), then iteration count and final residual.
pub fn solve_preview_values(frame_name: &str, bc: &str, eps: f64, cells: usize) -> Result<Vec<f64>, String> {
    let (_, u, iters, res) = solve_on_square(frame_name, bc, eps, cells)?;
    let mut out = u.values().to_vec();
    out.push(iters as f64);
    out.push(res);
    Ok(out)
}

/// Leaves through a rows×cols seed lattice as flat `x1, x2` pairs, each leaf
/// terminated by a `NaN, NaN` pair.
pub fn leaf_polylines(frame_name: &str, bc: &str, eps: f64, cells: usize, rows: usize, cols: usize) -> Result<Vec<f64>, String> {
    let (fr, u, _, _) = solve_on_square(frame_name, bc, eps, cells)?;
    let seeds = smg::foliation::seed_lattice(&u.grid().rect(), rows, cols);
    let (leaves, _) = foliate(&fr, &u, &seeds, (-2.0, 2.0), 1e-2);
    let mut out = Vec::new();
    for leaf in leaves.into_iter().flatten() {
        for p in &leaf.points {
            out.extend_from_slice(p);
        }
        out.extend_from_slice(&[f64::NAN, f64::NAN]);
    }
    Ok(out)
}

/// Taylor approximation ratios at `RADII` for one probe expression.
pub fn taylor_ratios(frame_name: &str, probe: &str, x0: [f64; 2], u0: f64, alpha: f64) -> Result<Vec<f64>, String> {
    let fr = frame(frame_name)?;
    let ff = FrozenFrame::new(&fr, x0, u0).map_err(|e| e.to_string())?;
    let p = match Probe::builtin(probe) {
        Some(p) => p,
        None => Probe::parse("probe", probe).map_err(|e| e.to_string())?,
    };
    approximation_order(&ff, &p, alpha, &RADII, 64).map_err(|e| e.to_string())
}

#[wasm_bindgen]
pub fn solve_preview(frame: &str, bc: &str, eps: f64, cells: usize) -> Result<Vec<f64>, JsError> {
    solve_preview_values(frame, bc, eps, cells).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn leaves(frame: &str, bc: &str, eps: f64, cells: usize, rows: usize, cols: usize) -> Result<Vec<f64>, JsError> {
    leaf_polylines(frame, bc, eps, cells, rows, cols).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn taylor_order(frame: &str, probe: &str, x1: f64, x2: f64, u0: f64, alpha: f64) -> Result<Vec<f64>, JsError> {
    taylor_ratios(frame, probe, [x1, x2], u0, alpha).map_err(|e| JsError::new(&e))
}
