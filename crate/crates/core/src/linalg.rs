//! Linear solvers for the assembled nine-point operators: banded LU with partial
//! pivoting and red-black Gauss–Seidel relaxation.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum LinearError {
    #[error("matrix is singular at column {0}")]
    Singular(usize),
    #[error("relaxation did not reach {tol:e} in {sweeps} sweeps (last update {last:e})")]
    NotConverged { sweeps: usize, tol: f64, last: f64 },
}

/// Nine-point stencil; `c[(di + 1) + 3 * (dj + 1)]` multiplies `z[i + di, j + dj]`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Stencil9 {
    pub c: [f64; 9],
}

impl Stencil9 {
    #[inline]
    pub fn at(&self, di: isize, dj: isize) -> f64 {
        self.c[(di + 1) as usize + 3 * (dj + 1) as usize]
    }

    #[inline]
    pub fn add(&mut self, di: isize, dj: isize, v: f64) {
        self.c[(di + 1) as usize + 3 * (dj + 1) as usize] += v;
    }

    #[inline]
    pub fn center(&self) -> f64 {
        self.c[4]
    }
}

pub const OFFSETS: [(isize, isize); 9] = [
    (-1, -1),
    (0, -1),
    (1, -1),
    (-1, 0),
    (0, 0),
    (1, 0),
    (-1, 1),
    (0, 1),
    (1, 1),
];

/// Square band matrix stored column by column with room for pivoting fill-in.
#[derive(Debug, Clone)]
pub struct BandMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    ld: usize,
    ab: Vec<f64>,
}

impl BandMatrix {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> BandMatrix {
        let ld = 2 * kl + ku + 1;
        BandMatrix { n, kl, ku, ld, ab: vec![0.0; ld * n] }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    fn slot(&self, r: usize, c: usize) -> usize {
        c * self.ld + (self.kl + self.ku + r - c)
    }

    /// Adds `v` to entry `(r, c)`; the entry must lie inside the declared band.
    pub fn add(&mut self, r: usize, c: usize, v: f64) {
        assert!(r <= c + self.kl && c <= r + self.ku, "entry ({r},{c}) outside band");
        let s = self.slot(r, c);
        self.ab[s] += v;
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        if r > c + self.kl || c > r + self.ku + self.kl {
            0.0
        } else {
            self.ab[self.slot(r, c)]
        }
    }

    /// In-place LU factorisation with partial pivoting.
    pub fn factor(mut self) -> Result<BandLu, LinearError> {
        let (n, kl, ku) = (self.n, self.kl, self.ku);
        let ld = self.ld;
        let diag = kl + ku;
        let mut piv = vec![0usize; n];
        let mut ju = 0usize;
        for j in 0..n {
            let km = kl.min(n - 1 - j);
            let col = j * ld + diag;
            let mut p = 0;
            let mut best = self.ab[col].abs();
            for t in 1..=km {
                let v = self.ab[col + t].abs();
                if v > best {
                    best = v;
                    p = t;
                }
            }
            piv[j] = j + p;
            if best == 0.0 || !best.is_finite() {
                return Err(LinearError::Singular(j));
            }
            ju = ju.max((j + ku + p).min(n - 1));
            if p != 0 {
                for c in j..=ju {
                    let base = c * ld + diag - c;
                    self.ab.swap(base + j, base + j + p);
                }
            }
            let pivot = self.ab[col];
            for t in 1..=km {
                self.ab[col + t] /= pivot;
            }
            for c in j + 1..=ju {
                let base = c * ld + diag - c;
                let ajc = self.ab[base + j];
                if ajc != 0.0 {
                    for t in 1..=km {
                        let l = self.ab[col + t];
                        self.ab[base + j + t] -= l * ajc;
                    }
                }
            }
        }
        Ok(BandLu { m: self, piv })
    }
}

#[derive(Debug, Clone)]
pub struct BandLu {
    m: BandMatrix,
    piv: Vec<usize>,
}

impl BandLu {
    pub fn solve(&self, b: &mut [f64]) {
        let m = &self.m;
        let (n, kl, ku, ld) = (m.n, m.kl, m.ku, m.ld);
        let diag = kl + ku;
        assert_eq!(b.len(), n);
        for j in 0..n {
            let p = self.piv[j];
            if p != j {
                b.swap(j, p);
            }
            let km = kl.min(n - 1 - j);
            let col = j * ld + diag;
            let bj = b[j];
            if bj != 0.0 {
                for t in 1..=km {
                    b[j + t] -= m.ab[col + t] * bj;
                }
            }
        }
        for j in (0..n).rev() {
            let base = j * ld + diag - j;
            b[j] /= m.ab[base + j];
            let bj = b[j];
            let r0 = j.saturating_sub(kl + ku);
            for r in r0..j {
                b[r] -= m.ab[base + r] * bj;
            }
        }
    }
}

/// Red-black Gauss–Seidel on an interior block of `nx x ny` unknowns.
///
/// `stencils[k]` and `rhs[k]` belong to interior unknown `k = jy * nx + ix`; `z` holds
/// the unknowns and is updated in place. Neighbours outside the block must already be
/// folded into `rhs`. Returns the number of sweeps used.
pub fn red_black_gauss_seidel(
    stencils: &[Stencil9],
    rhs: &[f64],
    z: &mut [f64],
    nx: usize,
    ny: usize,
    max_sweeps: usize,
    tol: f64,
) -> Result<usize, LinearError> {
    let mut last = f64::INFINITY;
    for sweep in 1..=max_sweeps {
        let mut change = 0.0f64;
        for color in 0..2 {
            for jy in 0..ny {
                let start = (jy + color) % 2;
                for ix in (start..nx).step_by(2) {
                    let k = jy * nx + ix;
                    let s = &stencils[k];
                    let mut acc = rhs[k];
                    for (q, &(di, dj)) in OFFSETS.iter().enumerate() {
                        if q == 4 {
                            continue;
                        }
                        let (x, y) = (ix as isize + di, jy as isize + dj);
                        if x < 0 || y < 0 || x >= nx as isize || y >= ny as isize {
                            continue;
                        }
                        acc -= s.c[q] * z[y as usize * nx + x as usize];
                    }
                    let new = acc / s.center();
                    change = change.max((new - z[k]).abs());
                    z[k] = new;
                }
            }
        }
        last = change;
        if change <= tol {
            return Ok(sweep);
        }
    }
    Err(LinearError::NotConverged { sweeps: max_sweeps, tol, last })
}
