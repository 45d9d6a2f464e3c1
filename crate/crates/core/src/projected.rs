//! Projected vector fields on an intrinsic graph `x3 = u(x1, x2)`.
//!
//! `X1,u = σ1(x, u(x))·∇`, `Yu = σ2(x, u(x))·∇` and `X2,u = ε Yu`, discretised with
//! second-order differences. Also provides the adjoint coefficients `m1, m2`, the
//! commutator coefficients `ω¹, ω²` and the Lipschitz budget of `u`.

use thiserror::Error;

use crate::frames::{Frame, FrameError};
use crate::grid::{Grid, GridError, GridFunction};

#[derive(Debug, Error)]
pub enum ContextError {
    #[error("eps must be positive, got {0}")]
    NonPositiveEps(f64),
    #[error("grid function lives on a different grid")]
    GridMismatch,
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Frame(#[from] FrameError),
}

/// A frame, a height function `u` and the regularisation parameter `ε`.
#[derive(Debug, Clone)]
pub struct ProjectedContext<'a> {
    frame: &'a Frame,
    u: &'a GridFunction,
    eps: f64,
    // σ1 and σ2 evaluated at (x, u(x)), component-wise
    s1: [Vec<f64>; 2],
    s2: [Vec<f64>; 2],
}

impl<'a> ProjectedContext<'a> {
    pub fn new(frame: &'a Frame, u: &'a GridFunction, eps: f64) -> Result<Self, ContextError> {
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(ContextError::NonPositiveEps(eps));
        }
        u.check_finite()?;
        let g = u.grid();
        let n = g.len();
        let mut s1 = [Vec::with_capacity(n), Vec::with_capacity(n)];
        let mut s2 = [Vec::with_capacity(n), Vec::with_capacity(n)];
        for j in 0..g.n2 {
            for i in 0..g.n1 {
                let [x1, x2] = g.point(i, j);
                let p = [x1, x2, u[(i, j)]];
                let a = frame.sigma1(p);
                let b = frame.sigma2(p);
                s1[0].push(a[0]);
                s1[1].push(a[1]);
                s2[0].push(b[0]);
                s2[1].push(b[1]);
            }
        }
        Ok(ProjectedContext { frame, u, eps, s1, s2 })
    }

    pub fn frame(&self) -> &'a Frame {
        self.frame
    }

    pub fn u(&self) -> &'a GridFunction {
        self.u
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn grid(&self) -> &Grid {
        self.u.grid()
    }

    /// `σ1(x, u(x))` at every node, by component.
    pub fn sigma1_nodes(&self) -> &[Vec<f64>; 2] {
        &self.s1
    }

    /// `σ2(x, u(x))` at every node, by component.
    pub fn sigma2_nodes(&self) -> &[Vec<f64>; 2] {
        &self.s2
    }

    /// Checks the rank condition at every node of the graph.
    pub fn check_rank(&self) -> Result<(), FrameError> {
        let g = self.grid();
        for j in 0..g.n2 {
            for i in 0..g.n1 {
                let [x1, x2] = g.point(i, j);
                self.frame.rank_determinant([x1, x2, self.u[(i, j)]])?;
            }
        }
        Ok(())
    }

    fn same_grid(&self, z: &GridFunction) {
        assert_eq!(z.grid(), self.grid(), "grid function lives on a different grid");
    }

    fn apply_coeffs(&self, c: &[Vec<f64>; 2], z: &GridFunction, scale: f64) -> GridFunction {
        self.same_grid(z);
        let dz1 = z.d1();
        let dz2 = z.d2();
        let values = dz1
            .values()
            .iter()
            .zip(dz2.values())
            .enumerate()
            .map(|(k, (a, b))| scale * (c[0][k] * a + c[1][k] * b))
            .collect();
        GridFunction::from_values(*self.grid(), values).expect("same grid")
    }

    pub fn apply_x1(&self, z: &GridFunction) -> GridFunction {
        self.apply_coeffs(&self.s1, z, 1.0)
    }

    pub fn apply_y(&self, z: &GridFunction) -> GridFunction {
        self.apply_coeffs(&self.s2, z, 1.0)
    }

    pub fn apply_x2(&self, z: &GridFunction) -> GridFunction {
        self.apply_coeffs(&self.s2, z, self.eps)
    }

    /// Applies `X1,u` (`which == 0`) or `X2,u` (`which == 1`).
    pub fn apply(&self, which: usize, z: &GridFunction) -> GridFunction {
        match which {
            0 => self.apply_x1(z),
            1 => self.apply_x2(z),
            _ => panic!("field index must be 0 or 1"),
        }
    }

    /// `∇_ε z = (X1,u z, X2,u z)`.
    pub fn grad_eps(&self, z: &GridFunction) -> [GridFunction; 2] {
        [self.apply_x1(z), self.apply_x2(z)]
    }

    /// Coefficients of the formal adjoints `X_{i,u}† = −X_{i,u} − m_i`.
    pub fn adjoint_m(&self) -> (GridFunction, GridFunction) {
        let g = *self.grid();
        let x1u = self.apply_x1(self.u);
        let x2u = self.apply_x2(self.u);
        let yu = self.apply_y(self.u);
        let eps = self.eps;
        let mut m1 = Vec::with_capacity(g.len());
        let mut m2 = Vec::with_capacity(g.len());
        for j in 0..g.n2 {
            for i in 0..g.n1 {
                let [x1, x2] = g.point(i, j);
                let p = [x1, x2, self.u[(i, j)]];
                let c = self.frame.structure(p);
                m1.push(self.frame.div_sigma1(p) + yu[(i, j)]);
                m2.push(
                    eps * self.frame.div_sigma2(p) - eps * c.c1_23 * x1u[(i, j)] - c.c2_23 * x2u[(i, j)],
                );
            }
        }
        (
            GridFunction::from_values(g, m1).expect("same grid"),
            GridFunction::from_values(g, m2).expect("same grid"),
        )
    }

    /// Coefficients of `[X1,u, X2,u] = ω¹ X1,u + ω² X2,u`.
    pub fn commutator_omega(&self) -> (GridFunction, GridFunction) {
        let g = *self.grid();
        let x1u = self.apply_x1(self.u);
        let x2u = self.apply_x2(self.u);
        let eps = self.eps;
        let mut w1 = Vec::with_capacity(g.len());
        let mut w2 = Vec::with_capacity(g.len());
        for j in 0..g.n2 {
            for i in 0..g.n1 {
                let [x1, x2] = g.point(i, j);
                let c = self.frame.structure([x1, x2, self.u[(i, j)]]);
                let a = x1u[(i, j)];
                w1.push(eps * (c.c1_12 - a * c.c1_23));
                w2.push(c.c2_12 - a * c.c2_23 - x2u[(i, j)] / eps);
            }
        }
        (
            GridFunction::from_values(g, w1).expect("same grid"),
            GridFunction::from_values(g, w2).expect("same grid"),
        )
    }

    /// `(‖X1,u u‖∞, ‖Yu u‖∞)`; their sum is the monitored Lipschitz constant.
    pub fn lipschitz_budget(&self) -> (f64, f64) {
        (self.apply_x1(self.u).sup_norm(), self.apply_y(self.u).sup_norm())
    }

    /// `‖m1‖∞ + ‖m2‖∞/ε + ‖ω¹‖∞/ε + ‖ω²‖∞`.
    pub fn structure_bound(&self) -> f64 {
        let (m1, m2) = self.adjoint_m();
        let (w1, w2) = self.commutator_omega();
        m1.sup_norm() + m2.sup_norm() / self.eps + w1.sup_norm() / self.eps + w2.sup_norm()
    }
}
