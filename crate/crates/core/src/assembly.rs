//! Mass, stiffness and load assembly.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::space::{FeSpace, NodalVector, Tabulation};
use crate::sparse::SparseMatrix;

pub type ScalarFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
pub type TensorFn = Arc<dyn Fn(&[f64]) -> [[f64; 2]; 2] + Send + Sync>;
/// Maps `(ū(x), x)` to a coefficient value.
pub type FieldMap = Arc<dyn Fn(f64, &[f64]) -> f64 + Send + Sync>;

/// Coefficient of a bilinear form or a load functional.
///
/// Time-dependent data are represented by closures that capture the time.
#[derive(Clone)]
pub enum Coefficient {
    Constant(f64),
    Scalar(ScalarFn),
    /// Symmetric 2×2 matrix-valued coefficient (2D only).
    Tensor(TensorFn),
    /// `map(ū_h(x), x)` where `ū_h` is a finite-element function evaluated
    /// at quadrature points.
    Field { field: NodalVector, map: FieldMap },
}

impl fmt::Debug for Coefficient {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Coefficient::Constant(c) => write!(f, "Constant({c})"),
            Coefficient::Scalar(_) => write!(f, "Scalar(..)"),
            Coefficient::Tensor(_) => write!(f, "Tensor(..)"),
            Coefficient::Field { field, .. } => write!(f, "Field({} dofs, ..)", field.len()),
        }
    }
}

impl Coefficient {
    pub fn constant(c: f64) -> Self {
        Coefficient::Constant(c)
    }

    pub fn scalar(f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        Coefficient::Scalar(Arc::new(f))
    }

    pub fn tensor(f: impl Fn(&[f64]) -> [[f64; 2]; 2] + Send + Sync + 'static) -> Self {
        Coefficient::Tensor(Arc::new(f))
    }

    pub fn field(field: NodalVector, map: impl Fn(f64, &[f64]) -> f64 + Send + Sync + 'static) -> Self {
        Coefficient::Field { field, map: Arc::new(map) }
    }

    fn check_space(&self, space: &FeSpace) -> Result<()> {
        if let Coefficient::Field { field, .. } = self {
            if !field.space().same_as(space) {
                return Err(Error::DimensionMismatch(
                    "field coefficient lives on a different space".into(),
                ));
            }
        }
        if matches!(self, Coefficient::Tensor(_)) && space.dim() != 2 {
            return Err(Error::InvalidCoefficient("matrix coefficients need a 2D space".into()));
        }
        Ok(())
    }
}

enum Sample {
    Scalar(f64),
    Tensor([[f64; 2]; 2]),
}

/// Evaluates coefficients at the quadrature points of one cell.
struct CellSampler<'a> {
    space: &'a FeSpace,
    coeff: &'a Coefficient,
    tab: &'a Tabulation,
}

impl CellSampler<'_> {
    fn sample(&self, dofs: &[usize], q: usize, x: &[f64]) -> Sample {
        match self.coeff {
            Coefficient::Constant(c) => Sample::Scalar(*c),
            Coefficient::Scalar(f) => Sample::Scalar(f(x)),
            Coefficient::Tensor(f) => Sample::Tensor(f(x)),
            Coefficient::Field { field, map } => {
                let n = self.tab.n_local;
                let vals = field.values();
                let u: f64 = dofs
                    .iter()
                    .enumerate()
                    .map(|(a, &d)| vals[d] * self.tab.values[q * n + a])
                    .sum();
                Sample::Scalar(map(u, &x[..self.space.dim()]))
            }
        }
    }
}

/// Rejects negative or non-finite scalars (zero is allowed for degenerate
/// mobilities) and non-symmetric or indefinite matrices.
fn check_diffusion(s: &Sample, x: &[f64]) -> Result<()> {
    match s {
        Sample::Scalar(v) => {
            if !(v.is_finite() && *v >= 0.0) {
                return Err(Error::InvalidCoefficient(format!("value {v} at {x:?} is negative or not finite")));
            }
        }
        Sample::Tensor(k) => {
            let scale = k[0][0].abs().max(k[1][1].abs()).max(k[0][1].abs()).max(k[1][0].abs());
            if (k[0][1] - k[1][0]).abs() > 1e-13 * scale.max(f64::MIN_POSITIVE) {
                return Err(Error::InvalidCoefficient(format!("matrix {k:?} at {x:?} is not symmetric")));
            }
            let det = k[0][0] * k[1][1] - k[0][1] * k[1][0];
            if !(k[0][0] >= 0.0 && k[1][1] >= 0.0 && det >= -1e-14 * scale * scale) || !det.is_finite() {
                return Err(Error::InvalidCoefficient(format!("matrix {k:?} at {x:?} is not semidefinite")));
            }
        }
    }
    Ok(())
}

fn cell_loop(
    space: &FeSpace,
    coeff: &Coefficient,
    mut per_point: impl FnMut(&[usize], usize, f64, &[f64], &Sample) -> Result<()>,
) -> Result<()> {
    coeff.check_space(space)?;
    let rule = space.quadrature();
    let tab = space.tabulation();
    let jac = space.cell_jacobian();
    let sampler = CellSampler { space, coeff, tab };
    let mut dofs = Vec::with_capacity(space.n_local());
    for cell in 0..space.mesh().n_cells() {
        space.cell_dofs_into(cell, &mut dofs);
        for (q, (pt, w)) in rule.points.iter().zip(&rule.weights).enumerate() {
            let x = space.map_point(cell, pt);
            let s = sampler.sample(&dofs, q, &x);
            per_point(&dofs, q, w * jac, &x[..space.dim()], &s).map_err(|e| match e {
                Error::InvalidCoefficient(m) => Error::InvalidCoefficient(format!("{m} (cell {cell})")),
                other => other,
            })?;
        }
    }
    Ok(())
}

/// Weighted mass matrix `A_ij = ∫ weight φ_i φ_j`.
pub fn assemble_mass(space: &FeSpace, weight: &Coefficient) -> Result<SparseMatrix> {
    if matches!(weight, Coefficient::Tensor(_)) {
        return Err(Error::InvalidCoefficient("mass weight must be scalar".into()));
    }
    let tab = space.tabulation();
    let n = tab.n_local;
    let mut triplets = Vec::with_capacity(space.mesh().n_cells() * n * n);
    let mut local = vec![0.0; n * n];
    let mut current: Option<Vec<usize>> = None;
    let flush = |dofs: &[usize], local: &mut [f64], triplets: &mut Vec<(usize, usize, f64)>| {
        for a in 0..n {
            for b in 0..n {
                triplets.push((dofs[a], dofs[b], local[a * n + b]));
            }
        }
        local.iter_mut().for_each(|v| *v = 0.0);
    };
    cell_loop(space, weight, |dofs, q, wq, _x, s| {
        let Sample::Scalar(c) = s else { unreachable!() };
        if !(c.is_finite() && *c > 0.0) {
            return Err(Error::InvalidCoefficient(format!("mass weight {c} is not positive")));
        }
        if q == 0 {
            if let Some(prev) = current.take() {
                flush(&prev, &mut local, &mut triplets);
            }
            current = Some(dofs.to_vec());
        }
        let phi = &tab.values[q * n..(q + 1) * n];
        for a in 0..n {
            let fa = wq * c * phi[a];
            for b in 0..n {
                local[a * n + b] += fa * phi[b];
            }
        }
        Ok(())
    })?;
    if let Some(prev) = current.take() {
        flush(&prev, &mut local, &mut triplets);
    }
    SparseMatrix::from_triplets(space.n_dofs(), space.n_dofs(), &triplets)
}

/// Stiffness matrix `A_ij = ∫ coeff ∇φ_i·∇φ_j` for scalar or matrix `coeff`.
pub fn assemble_stiffness(space: &FeSpace, coeff: &Coefficient) -> Result<SparseMatrix> {
    let tab = space.tabulation();
    let n = tab.n_local;
    let dim = space.dim();
    let inv_h = [1.0 / space.mesh().h(0), if dim == 2 { 1.0 / space.mesh().h(1) } else { 0.0 }];
    let mut triplets = Vec::with_capacity(space.mesh().n_cells() * n * n);
    let mut local = vec![0.0; n * n];
    let mut current: Option<Vec<usize>> = None;
    let mut grads = vec![[0.0; 2]; n];
    let flush = |dofs: &[usize], local: &mut [f64], triplets: &mut Vec<(usize, usize, f64)>| {
        for a in 0..n {
            for b in 0..n {
                triplets.push((dofs[a], dofs[b], local[a * n + b]));
            }
        }
        local.iter_mut().for_each(|v| *v = 0.0);
    };
    cell_loop(space, coeff, |dofs, q, wq, x, s| {
        if q == 0 {
            if let Some(prev) = current.take() {
                flush(&prev, &mut local, &mut triplets);
            }
            current = Some(dofs.to_vec());
        }
        check_diffusion(s, x)?;
        for a in 0..n {
            let g = tab.grads[q * n + a];
            grads[a] = [g[0] * inv_h[0], g[1] * inv_h[1]];
        }
        let k = match s {
            Sample::Scalar(c) => [[*c, 0.0], [0.0, *c]],
            Sample::Tensor(k) => *k,
        };
        for a in 0..n {
            let ga = grads[a];
            let kga = [k[0][0] * ga[0] + k[0][1] * ga[1], k[1][0] * ga[0] + k[1][1] * ga[1]];
            for b in 0..n {
                let gb = grads[b];
                local[a * n + b] += wq * (kga[0] * gb[0] + kga[1] * gb[1]);
            }
        }
        Ok(())
    })?;
    if let Some(prev) = current.take() {
        flush(&prev, &mut local, &mut triplets);
    }
    SparseMatrix::from_triplets(space.n_dofs(), space.n_dofs(), &triplets)
}

/// Load vector `b_i = ∫ g φ_i`.
pub fn assemble_load(space: &FeSpace, g: &Coefficient) -> Result<NodalVector> {
    if matches!(g, Coefficient::Tensor(_)) {
        return Err(Error::InvalidCoefficient("load data must be scalar".into()));
    }
    let tab = space.tabulation();
    let n = tab.n_local;
    let mut b = vec![0.0; space.n_dofs()];
    cell_loop(space, g, |dofs, q, wq, _x, s| {
        let Sample::Scalar(c) = s else { unreachable!() };
        let phi = &tab.values[q * n..(q + 1) * n];
        for (a, &d) in dofs.iter().enumerate() {
            b[d] += wq * c * phi[a];
        }
        Ok(())
    })?;
    NodalVector::new(space, b)
}

/// Integral `∫ g` of scalar data with the space's quadrature.
pub fn integrate(space: &FeSpace, g: &Coefficient) -> Result<f64> {
    Ok(assemble_load(space, g)?.values().iter().sum())
}
