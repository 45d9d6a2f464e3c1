//! Uniform rectangular grids, grid functions, difference operators and quadrature.

use std::fmt::Write as _;
use std::io::{BufRead, Write};
use std::ops::{Index, IndexMut};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum GridError {
    #[error("grid needs at least 3 nodes per direction, got {0}x{1}")]
    TooFewNodes(usize, usize),
    #[error("grid interval [{0}, {1}] is empty or not finite")]
    BadInterval(f64, f64),
    #[error("expected {expected} values, got {got}")]
    SizeMismatch { expected: usize, got: usize },
    #[error("non-finite value at node ({i}, {j})")]
    NonFinite { i: usize, j: usize },
    #[error("grid function csv line {line}: {msg}")]
    Csv { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Uniform tensor grid over `[a1,b1] x [a2,b2]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub a1: f64,
    pub b1: f64,
    pub a2: f64,
    pub b2: f64,
    pub n1: usize,
    pub n2: usize,
}

/// Inclusive index box `[i0, i1] x [j0, j1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IndexBox {
    pub i0: usize,
    pub i1: usize,
    pub j0: usize,
    pub j1: usize,
}

impl IndexBox {
    pub fn contains(&self, i: usize, j: usize) -> bool {
        i >= self.i0 && i <= self.i1 && j >= self.j0 && j <= self.j1
    }

    pub fn contains_box(&self, other: &IndexBox) -> bool {
        other.i0 >= self.i0 && other.i1 <= self.i1 && other.j0 >= self.j0 && other.j1 <= self.j1
    }
}

/// Axis-aligned rectangle in physical coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub a1: f64,
    pub b1: f64,
    pub a2: f64,
    pub b2: f64,
}

impl Rect {
    pub fn new(a1: f64, b1: f64, a2: f64, b2: f64) -> Rect {
        Rect { a1, b1, a2, b2 }
    }

    pub fn contains(&self, p: [f64; 2]) -> bool {
        p[0] >= self.a1 && p[0] <= self.b1 && p[1] >= self.a2 && p[1] <= self.b2
    }
}

impl Grid {
    pub fn new(a1: f64, b1: f64, a2: f64, b2: f64, n1: usize, n2: usize) -> Result<Grid, GridError> {
        if n1 < 3 || n2 < 3 {
            return Err(GridError::TooFewNodes(n1, n2));
        }
        for (a, b) in [(a1, b1), (a2, b2)] {
            if !(a.is_finite() && b.is_finite() && b > a) {
                return Err(GridError::BadInterval(a, b));
            }
        }
        Ok(Grid { a1, b1, a2, b2, n1, n2 })
    }

    /// Grid on `[a,b]²` with spacing `(b-a)/cells`.
    pub fn square(a: f64, b: f64, cells: usize) -> Result<Grid, GridError> {
        Grid::new(a, b, a, b, cells + 1, cells + 1)
    }

    pub fn h1(&self) -> f64 {
        (self.b1 - self.a1) / (self.n1 - 1) as f64
    }

    pub fn h2(&self) -> f64 {
        (self.b2 - self.a2) / (self.n2 - 1) as f64
    }

    pub fn len(&self) -> usize {
        self.n1 * self.n2
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        j * self.n1 + i
    }

    #[inline]
    pub fn x1(&self, i: usize) -> f64 {
        if i + 1 == self.n1 {
            self.b1
        } else {
            self.a1 + i as f64 * self.h1()
        }
    }

    #[inline]
    pub fn x2(&self, j: usize) -> f64 {
        if j + 1 == self.n2 {
            self.b2
        } else {
            self.a2 + j as f64 * self.h2()
        }
    }

    #[inline]
    pub fn point(&self, i: usize, j: usize) -> [f64; 2] {
        [self.x1(i), self.x2(j)]
    }

    pub fn is_boundary(&self, i: usize, j: usize) -> bool {
        i == 0 || j == 0 || i + 1 == self.n1 || j + 1 == self.n2
    }

    pub fn rect(&self) -> Rect {
        Rect::new(self.a1, self.b1, self.a2, self.b2)
    }

    pub fn contains(&self, p: [f64; 2]) -> bool {
        self.rect().contains(p)
    }

    pub fn full_box(&self) -> IndexBox {
        IndexBox { i0: 0, i1: self.n1 - 1, j0: 0, j1: self.n2 - 1 }
    }

    /// Nodes at least `margin` nodes away from the boundary.
    pub fn interior_box(&self, margin: usize) -> IndexBox {
        IndexBox {
            i0: margin,
            i1: self.n1 - 1 - margin,
            j0: margin,
            j1: self.n2 - 1 - margin,
        }
    }

    /// Grid nodes inside the closed rectangle (with a small snapping tolerance).
    pub fn box_of(&self, r: &Rect) -> Option<IndexBox> {
        let snap = 1e-9;
        let lo = |a: f64, a0: f64, h: f64| ((a - a0) / h - snap).ceil().max(0.0) as usize;
        let hi = |b: f64, a0: f64, h: f64, n: usize| {
            let v = ((b - a0) / h + snap).floor();
            if v < 0.0 {
                None
            } else {
                Some((v as usize).min(n - 1))
            }
        };
        let i0 = lo(r.a1, self.a1, self.h1());
        let j0 = lo(r.a2, self.a2, self.h2());
        let i1 = hi(r.b1, self.a1, self.h1(), self.n1)?;
        let j1 = hi(r.b2, self.a2, self.h2(), self.n2)?;
        (i0 <= i1 && j0 <= j1).then_some(IndexBox { i0, i1, j0, j1 })
    }

    /// Samples a function of position at every node.
    pub fn sample(&self, f: impl Fn(f64, f64) -> f64) -> GridFunction {
        let mut values = Vec::with_capacity(self.len());
        for j in 0..self.n2 {
            for i in 0..self.n1 {
                values.push(f(self.x1(i), self.x2(j)));
            }
        }
        GridFunction { grid: *self, values }
    }

    pub fn zeros(&self) -> GridFunction {
        GridFunction { grid: *self, values: vec![0.0; self.len()] }
    }
}

/// Scalar field on the nodes of a grid, stored row by row (`x1` fastest).
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    grid: Grid,
    values: Vec<f64>,
}

impl Index<(usize, usize)> for GridFunction {
    type Output = f64;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.values[j * self.grid.n1 + i]
    }
}

impl IndexMut<(usize, usize)> for GridFunction {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.values[j * self.grid.n1 + i]
    }
}

impl GridFunction {
    pub fn from_values(grid: Grid, values: Vec<f64>) -> Result<GridFunction, GridError> {
        if values.len() != grid.len() {
            return Err(GridError::SizeMismatch { expected: grid.len(), got: values.len() });
        }
        let gf = GridFunction { grid, values };
        gf.check_finite()?;
        Ok(gf)
    }

    pub fn constant(grid: &Grid, c: f64) -> GridFunction {
        GridFunction { grid: *grid, values: vec![c; grid.len()] }
    }

    pub fn check_finite(&self) -> Result<(), GridError> {
        match self.values.iter().position(|v| !v.is_finite()) {
            None => Ok(()),
            Some(k) => Err(GridError::NonFinite { i: k % self.grid.n1, j: k / self.grid.n1 }),
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> GridFunction {
        GridFunction { grid: self.grid, values: self.values.iter().map(|&v| f(v)).collect() }
    }

    pub fn zip_map(&self, other: &GridFunction, f: impl Fn(f64, f64) -> f64) -> GridFunction {
        debug_assert_eq!(self.grid, other.grid);
        GridFunction {
            grid: self.grid,
            values: self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect(),
        }
    }

    pub fn scale(&self, c: f64) -> GridFunction {
        self.map(|v| c * v)
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn sup_norm_on(&self, b: &IndexBox) -> f64 {
        let mut m = 0.0f64;
        for j in b.j0..=b.j1 {
            for i in b.i0..=b.i1 {
                m = m.max(self[(i, j)].abs());
            }
        }
        m
    }

    pub fn boundary_sup(&self) -> f64 {
        let g = self.grid;
        let mut m = 0.0f64;
        for j in 0..g.n2 {
            for i in 0..g.n1 {
                if g.is_boundary(i, j) {
                    m = m.max(self[(i, j)].abs());
                }
            }
        }
        m
    }

    /// Second-order first derivative in `x1`: central inside, one-sided on the edges.
    pub fn d1(&self) -> GridFunction {
        let g = self.grid;
        let inv = 1.0 / (2.0 * g.h1());
        let n = g.n1;
        let mut out = vec![0.0; g.len()];
        for j in 0..g.n2 {
            let row = &self.values[j * n..(j + 1) * n];
            let o = &mut out[j * n..(j + 1) * n];
            o[0] = (4.0 * (row[1] - row[0]) - (row[2] - row[0])) * inv;
            for i in 1..n - 1 {
                o[i] = (row[i + 1] - row[i - 1]) * inv;
            }
            o[n - 1] = (4.0 * (row[n - 1] - row[n - 2]) - (row[n - 1] - row[n - 3])) * inv;
        }
        GridFunction { grid: g, values: out }
    }

    /// Second-order first derivative in `x2`: central inside, one-sided on the edges.
    pub fn d2(&self) -> GridFunction {
        let g = self.grid;
        let inv = 1.0 / (2.0 * g.h2());
        let (n1, n2) = (g.n1, g.n2);
        let v = &self.values;
        let mut out = vec![0.0; g.len()];
        for i in 0..n1 {
            let at = |j: usize| v[j * n1 + i];
            out[i] = (4.0 * (at(1) - at(0)) - (at(2) - at(0))) * inv;
            for j in 1..n2 - 1 {
                out[j * n1 + i] = (at(j + 1) - at(j - 1)) * inv;
            }
            out[(n2 - 1) * n1 + i] = (4.0 * (at(n2 - 1) - at(n2 - 2)) - (at(n2 - 1) - at(n2 - 3))) * inv;
        }
        GridFunction { grid: g, values: out }
    }

    /// Trapezoidal quadrature over the whole grid.
    pub fn integrate(&self) -> f64 {
        self.integrate_on(&self.grid.full_box())
    }

    /// Trapezoidal quadrature over the nodes of an index box.
    pub fn integrate_on(&self, b: &IndexBox) -> f64 {
        let g = self.grid;
        let w = |k: usize, lo: usize, hi: usize| if k == lo || k == hi { 0.5 } else { 1.0 };
        let mut terms = Vec::with_capacity((b.i1 - b.i0 + 1) * (b.j1 - b.j0 + 1));
        for j in b.j0..=b.j1 {
            for i in b.i0..=b.i1 {
                terms.push(w(i, b.i0, b.i1) * w(j, b.j0, b.j1) * self[(i, j)]);
            }
        }
        // degenerate boxes collapse to line or point rules with zero measure
        let l1 = if b.i1 > b.i0 { g.h1() } else { 0.0 };
        let l2 = if b.j1 > b.j0 { g.h2() } else { 0.0 };
        pairwise_sum(&terms) * l1 * l2
    }

    /// Bilinear interpolation; points are clamped to the grid rectangle.
    pub fn interpolate(&self, p: [f64; 2]) -> f64 {
        let g = self.grid;
        let locate = |x: f64, a: f64, h: f64, n: usize| {
            let s = ((x - a) / h).clamp(0.0, (n - 1) as f64);
            let k = (s.floor() as usize).min(n - 2);
            (k, s - k as f64)
        };
        let (i, tx) = locate(p[0], g.a1, g.h1(), g.n1);
        let (j, ty) = locate(p[1], g.a2, g.h2(), g.n2);
        let v00 = self[(i, j)];
        let v10 = self[(i + 1, j)];
        let v01 = self[(i, j + 1)];
        let v11 = self[(i + 1, j + 1)];
        (1.0 - ty) * ((1.0 - tx) * v00 + tx * v10) + ty * ((1.0 - tx) * v01 + tx * v11)
    }

    /// Writes the `x1,x2,value` CSV with 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let g = self.grid;
        let mut line = String::with_capacity(80);
        writeln!(w, "x1,x2,value")?;
        for j in 0..g.n2 {
            for i in 0..g.n1 {
                line.clear();
                let _ = write!(
                    line,
                    "{},{},{}",
                    fmt17(g.x1(i)),
                    fmt17(g.x2(j)),
                    fmt17(self[(i, j)])
                );
                writeln!(w, "{line}")?;
            }
        }
        Ok(())
    }

    /// Reads a grid function written by [`GridFunction::write_csv`], recovering the grid.
    pub fn read_csv<R: BufRead>(r: R) -> Result<GridFunction, GridError> {
        let mut rows: Vec<[f64; 3]> = Vec::new();
        for (k, line) in r.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if k == 0 {
                if line.replace(' ', "") != "x1,x2,value" {
                    return Err(GridError::Csv { line: 1, msg: format!("bad header '{line}'") });
                }
                continue;
            }
            if line.is_empty() {
                continue;
            }
            let parts: Vec<&str> = line.split(',').collect();
            if parts.len() != 3 {
                return Err(GridError::Csv { line: k + 1, msg: "expected 3 columns".into() });
            }
            let mut row = [0.0; 3];
            for (slot, s) in row.iter_mut().zip(&parts) {
                *slot = s.trim().parse().map_err(|_| GridError::Csv {
                    line: k + 1,
                    msg: format!("cannot parse '{s}'"),
                })?;
            }
            rows.push(row);
        }
        if rows.is_empty() {
            return Err(GridError::Csv { line: 1, msg: "no data rows".into() });
        }
        let x2_0 = rows[0][1];
        let n1 = rows.iter().take_while(|r| r[1] == x2_0).count();
        if n1 == 0 || rows.len() % n1 != 0 {
            return Err(GridError::Csv { line: 2, msg: "rows do not form a tensor grid".into() });
        }
        let n2 = rows.len() / n1;
        let grid = Grid::new(rows[0][0], rows[n1 - 1][0], x2_0, rows[rows.len() - 1][1], n1, n2)?;
        for (k, r) in rows.iter().enumerate() {
            let (i, j) = (k % n1, k / n1);
            if r[0] != grid.x1(i) || r[1] != grid.x2(j) {
                return Err(GridError::Csv {
                    line: k + 2,
                    msg: "node coordinates do not match a uniform grid".into(),
                });
            }
        }
        GridFunction::from_values(grid, rows.into_iter().map(|r| r[2]).collect())
    }
}

/// Shortest round-trip representation is not fixed width; this always prints 17 significant digits.
pub fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

/// Fixed-order pairwise summation.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    const BLOCK: usize = 64;
    if xs.len() <= BLOCK {
        xs.iter().sum()
    } else {
        let mid = xs.len() / 2;
        pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
    }
}
