//! Structured interval and rectangle meshes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A uniform tensor-product mesh in one or two dimensions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mesh {
    dim: usize,
    lower: [f64; 2],
    upper: [f64; 2],
    cells: [usize; 2],
}

impl Mesh {
    pub fn interval(lower: f64, upper: f64, cells: usize) -> Result<Self> {
        check_axis(lower, upper, cells)?;
        Ok(Self {
            dim: 1,
            lower: [lower, 0.0],
            upper: [upper, 0.0],
            cells: [cells, 1],
        })
    }

    pub fn rectangle(x: (f64, f64), y: (f64, f64), nx: usize, ny: usize) -> Result<Self> {
        check_axis(x.0, x.1, nx)?;
        check_axis(y.0, y.1, ny)?;
        Ok(Self {
            dim: 2,
            lower: [x.0, y.0],
            upper: [x.1, y.1],
            cells: [nx, ny],
        })
    }

    /// Square `(lower, upper)^2` with `n` cells per axis.
    pub fn square(lower: f64, upper: f64, n: usize) -> Result<Self> {
        Self::rectangle((lower, upper), (lower, upper), n, n)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn lower(&self, axis: usize) -> f64 {
        self.lower[axis]
    }

    pub fn upper(&self, axis: usize) -> f64 {
        self.upper[axis]
    }

    pub fn cells(&self, axis: usize) -> usize {
        self.cells[axis]
    }

    pub fn n_cells(&self) -> usize {
        self.cells[..self.dim].iter().product()
    }

    /// Cell size along `axis`.
    pub fn h(&self, axis: usize) -> f64 {
        (self.upper[axis] - self.lower[axis]) / self.cells[axis] as f64
    }

    /// Largest cell diameter (the diagonal in 2D).
    pub fn max_cell_diameter(&self) -> f64 {
        match self.dim {
            1 => self.h(0),
            _ => self.h(0).hypot(self.h(1)),
        }
    }

    /// Lebesgue measure of the domain.
    pub fn measure(&self) -> f64 {
        (0..self.dim).map(|a| self.upper[a] - self.lower[a]).product()
    }

    /// Linear cell index from per-axis cell indices.
    pub fn cell_index(&self, c: [usize; 2]) -> usize {
        match self.dim {
            1 => c[0],
            _ => c[0] * self.cells[1] + c[1],
        }
    }

    pub fn cell_coords(&self, cell: usize) -> [usize; 2] {
        match self.dim {
            1 => [cell, 0],
            _ => [cell / self.cells[1], cell % self.cells[1]],
        }
    }

    /// Lower-left corner of a cell.
    pub fn cell_origin(&self, cell: usize) -> [f64; 2] {
        let c = self.cell_coords(cell);
        let mut o = [0.0; 2];
        for a in 0..self.dim {
            o[a] = self.lower[a] + c[a] as f64 * self.h(a);
        }
        o
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        (0..self.dim).all(|a| {
            let slack = 1e-12 * (self.upper[a] - self.lower[a]);
            x[a] >= self.lower[a] - slack && x[a] <= self.upper[a] + slack
        })
    }

    /// Cell containing `x` and the reference coordinates of `x` in it.
    /// Points on a shared facet are assigned to the cell with the larger index.
    pub fn locate(&self, x: &[f64]) -> Result<(usize, [f64; 2])> {
        if x.len() < self.dim || !self.contains(x) {
            return Err(Error::OutsideDomain(x.to_vec()));
        }
        let mut c = [0usize; 2];
        let mut xi = [0.0; 2];
        for a in 0..self.dim {
            let s = (x[a] - self.lower[a]) / self.h(a);
            let k = (s.floor().max(0.0) as usize).min(self.cells[a] - 1);
            c[a] = k;
            xi[a] = (s - k as f64).clamp(0.0, 1.0);
        }
        Ok((self.cell_index(c), xi))
    }
}

fn check_axis(lower: f64, upper: f64, cells: usize) -> Result<()> {
    if cells == 0 {
        return Err(Error::InvalidMesh("cells per axis must be at least 1".into()));
    }
    if !(lower.is_finite() && upper.is_finite()) || upper <= lower {
        return Err(Error::InvalidMesh(format!(
            "axis bounds ({lower}, {upper}) must be finite and increasing"
        )));
    }
    Ok(())
}
