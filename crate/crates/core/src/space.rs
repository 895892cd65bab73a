//! Continuous Lagrange finite-element spaces on structured meshes.
//!
//! Degrees of freedom sit on an equispaced grid of `p * cells + 1` nodes per
//! axis and are numbered lexicographically by coordinates (x-major in 2D), so
//! every global dof is a mesh node and the basis is nodal.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::mesh::Mesh;
use crate::quadrature::QuadratureRule;

/// One-dimensional Lagrange basis on equispaced nodes of `[0, 1]`.
#[derive(Debug, Clone)]
pub struct LagrangeBasis1d {
    nodes: Vec<f64>,
    denominators: Vec<f64>,
}

impl LagrangeBasis1d {
    pub fn equispaced(p: usize) -> Self {
        let nodes: Vec<f64> = (0..=p).map(|i| i as f64 / p as f64).collect();
        let denominators = (0..=p)
            .map(|a| {
                (0..=p)
                    .filter(|&b| b != a)
                    .map(|b| nodes[a] - nodes[b])
                    .product()
            })
            .collect();
        Self { nodes, denominators }
    }

    pub fn order(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Values and first derivatives of all basis functions at `xi`.
    pub fn eval(&self, xi: f64, values: &mut [f64], derivs: &mut [f64]) {
        let n = self.nodes.len();
        for a in 0..n {
            let mut v = 1.0;
            let mut d = 0.0;
            for b in 0..n {
                if b == a {
                    continue;
                }
                let f = xi - self.nodes[b];
                d = d * f + v;
                v *= f;
            }
            values[a] = v / self.denominators[a];
            derivs[a] = d / self.denominators[a];
        }
    }
}

/// Basis values and reference gradients of every local function at a set of
/// reference points.
#[derive(Debug, Clone)]
pub struct Tabulation {
    pub n_local: usize,
    /// `values[q * n_local + a]`
    pub values: Vec<f64>,
    /// `grads[q * n_local + a]`, derivatives with respect to reference coordinates
    pub grads: Vec<[f64; 2]>,
}

#[derive(Debug)]
struct SpaceData {
    mesh: Mesh,
    order: usize,
    nodes_axis: [usize; 2],
    coords: Vec<[f64; 2]>,
    basis: LagrangeBasis1d,
    quadrature: QuadratureRule,
    tabulation: Tabulation,
}

/// Order-`p` continuous Lagrange space. Cheap to clone.
#[derive(Debug, Clone)]
pub struct FeSpace {
    data: Arc<SpaceData>,
}

/// Builds the order-`p` Lagrange space on `mesh`.
pub fn build_space(mesh: &Mesh, p: usize) -> Result<FeSpace> {
    FeSpace::new(mesh.clone(), p)
}

impl FeSpace {
    pub fn new(mesh: Mesh, p: usize) -> Result<Self> {
        if !(1..=4).contains(&p) {
            return Err(Error::UnsupportedOrder(p));
        }
        let dim = mesh.dim();
        let mut nodes_axis = [1usize; 2];
        for (a, n) in nodes_axis.iter_mut().enumerate().take(dim) {
            *n = p * mesh.cells(a) + 1;
        }
        let coord = |a: usize, i: usize| {
            if i + 1 == nodes_axis[a] {
                mesh.upper(a)
            } else {
                mesh.lower(a) + i as f64 * mesh.h(a) / p as f64
            }
        };
        let mut coords = Vec::with_capacity(nodes_axis[0] * nodes_axis[1]);
        for ix in 0..nodes_axis[0] {
            if dim == 1 {
                coords.push([coord(0, ix), 0.0]);
            } else {
                for iy in 0..nodes_axis[1] {
                    coords.push([coord(0, ix), coord(1, iy)]);
                }
            }
        }
        let basis = LagrangeBasis1d::equispaced(p);
        let quadrature = QuadratureRule::tensor(dim, QuadratureRule::points_for_order(p));
        let tabulation = tabulate(&basis, dim, &quadrature.points);
        Ok(Self {
            data: Arc::new(SpaceData {
                mesh,
                order: p,
                nodes_axis,
                coords,
                basis,
                quadrature,
                tabulation,
            }),
        })
    }

    pub fn mesh(&self) -> &Mesh {
        &self.data.mesh
    }

    pub fn dim(&self) -> usize {
        self.data.mesh.dim()
    }

    pub fn order(&self) -> usize {
        self.data.order
    }

    /// Total number of degrees of freedom.
    pub fn n_dofs(&self) -> usize {
        self.data.coords.len()
    }

    pub fn n_local(&self) -> usize {
        (self.data.order + 1).pow(self.dim() as u32)
    }

    pub fn nodes_per_axis(&self, axis: usize) -> usize {
        self.data.nodes_axis[axis]
    }

    pub fn coords(&self) -> &[[f64; 2]] {
        &self.data.coords
    }

    pub fn coord(&self, i: usize) -> &[f64] {
        &self.data.coords[i][..self.dim()]
    }

    pub fn basis(&self) -> &LagrangeBasis1d {
        &self.data.basis
    }

    /// Default cell quadrature (exact for degree `2p + 2`).
    pub fn quadrature(&self) -> &QuadratureRule {
        &self.data.quadrature
    }

    /// Basis tabulated at the default quadrature points.
    pub fn tabulation(&self) -> &Tabulation {
        &self.data.tabulation
    }

    pub fn tabulate(&self, points: &[[f64; 2]]) -> Tabulation {
        tabulate(&self.data.basis, self.dim(), points)
    }

    pub fn same_as(&self, other: &FeSpace) -> bool {
        Arc::ptr_eq(&self.data, &other.data)
            || (self.data.mesh == other.data.mesh && self.data.order == other.data.order)
    }

    /// Global index of the grid node `(ix, iy)`.
    pub fn dof_index(&self, ix: usize, iy: usize) -> usize {
        match self.dim() {
            1 => ix,
            _ => ix * self.data.nodes_axis[1] + iy,
        }
    }

    /// Global dofs of `cell` in local order (x-major, matching [`Tabulation`]).
    pub fn cell_dofs_into(&self, cell: usize, out: &mut Vec<usize>) {
        out.clear();
        let p = self.data.order;
        let c = self.data.mesh.cell_coords(cell);
        if self.dim() == 1 {
            out.extend((0..=p).map(|l| c[0] * p + l));
        } else {
            for lx in 0..=p {
                for ly in 0..=p {
                    out.push(self.dof_index(c[0] * p + lx, c[1] * p + ly));
                }
            }
        }
    }

    pub fn cell_dofs(&self, cell: usize) -> Vec<usize> {
        let mut v = Vec::with_capacity(self.n_local());
        self.cell_dofs_into(cell, &mut v);
        v
    }

    /// Physical coordinates of a reference point in `cell`.
    pub fn map_point(&self, cell: usize, xi: &[f64; 2]) -> [f64; 2] {
        let mesh = &self.data.mesh;
        let o = mesh.cell_origin(cell);
        let mut x = [0.0; 2];
        for a in 0..self.dim() {
            x[a] = o[a] + xi[a] * mesh.h(a);
        }
        x
    }

    /// Jacobian determinant of the reference-to-physical map (same for all cells).
    pub fn cell_jacobian(&self) -> f64 {
        (0..self.dim()).map(|a| self.data.mesh.h(a)).product()
    }

    /// Dofs lying on the domain boundary.
    pub fn boundary_dofs(&self) -> Vec<usize> {
        let na = self.data.nodes_axis;
        let mut out = Vec::new();
        for ix in 0..na[0] {
            if self.dim() == 1 {
                if ix == 0 || ix + 1 == na[0] {
                    out.push(ix);
                }
                continue;
            }
            for iy in 0..na[1] {
                if ix == 0 || ix + 1 == na[0] || iy == 0 || iy + 1 == na[1] {
                    out.push(self.dof_index(ix, iy));
                }
            }
        }
        out
    }

    /// Value of the FE function with coefficients `values` at reference point
    /// `xi` of `cell`, together with its physical gradient.
    pub fn eval_in_cell(&self, values: &[f64], cell: usize, xi: &[f64; 2]) -> (f64, [f64; 2]) {
        let tab = self.tabulate(&[*xi]);
        let dofs = self.cell_dofs(cell);
        let mesh = &self.data.mesh;
        let mut v = 0.0;
        let mut g = [0.0; 2];
        for (a, &d) in dofs.iter().enumerate() {
            v += values[d] * tab.values[a];
            for (ax, ga) in g.iter_mut().enumerate().take(self.dim()) {
                *ga += values[d] * tab.grads[a][ax] / mesh.h(ax);
            }
        }
        (v, g)
    }
}

fn tabulate(basis: &LagrangeBasis1d, dim: usize, points: &[[f64; 2]]) -> Tabulation {
    let n1 = basis.order() + 1;
    let n_local = n1.pow(dim as u32);
    let mut values = Vec::with_capacity(points.len() * n_local);
    let mut grads = Vec::with_capacity(points.len() * n_local);
    let mut vx = vec![0.0; n1];
    let mut dx = vec![0.0; n1];
    let mut vy = vec![0.0; n1];
    let mut dy = vec![0.0; n1];
    for pt in points {
        basis.eval(pt[0], &mut vx, &mut dx);
        if dim == 1 {
            for a in 0..n1 {
                values.push(vx[a]);
                grads.push([dx[a], 0.0]);
            }
        } else {
            basis.eval(pt[1], &mut vy, &mut dy);
            for a in 0..n1 {
                for b in 0..n1 {
                    values.push(vx[a] * vy[b]);
                    grads.push([dx[a] * vy[b], vx[a] * dy[b]]);
                }
            }
        }
    }
    Tabulation { n_local, values, grads }
}

/// Coefficient vector of a finite-element function.
#[derive(Debug, Clone)]
pub struct NodalVector {
    space: FeSpace,
    values: Vec<f64>,
}

impl NodalVector {
    pub fn new(space: &FeSpace, values: Vec<f64>) -> Result<Self> {
        if values.len() != space.n_dofs() {
            return Err(Error::DimensionMismatch(format!(
                "{} values for a space with {} dofs",
                values.len(),
                space.n_dofs()
            )));
        }
        Ok(Self { space: space.clone(), values })
    }

    pub fn constant(space: &FeSpace, c: f64) -> Self {
        Self { space: space.clone(), values: vec![c; space.n_dofs()] }
    }

    pub fn zeros(space: &FeSpace) -> Self {
        Self::constant(space, 0.0)
    }

    pub fn space(&self) -> &FeSpace {
        &self.space
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

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Value at a physical point.
    pub fn evaluate(&self, x: &[f64]) -> Result<f64> {
        evaluate(self, x)
    }

    /// Value and gradient at a physical point.
    pub fn evaluate_with_gradient(&self, x: &[f64]) -> Result<(f64, [f64; 2])> {
        let (cell, xi) = self.space.mesh().locate(x)?;
        Ok(self.space.eval_in_cell(&self.values, cell, &xi))
    }
}

/// Nodal interpolant `V_i = g(x_i)`.
pub fn interpolate(space: &FeSpace, g: impl Fn(&[f64]) -> f64) -> NodalVector {
    let values = (0..space.n_dofs()).map(|i| g(space.coord(i))).collect();
    NodalVector { space: space.clone(), values }
}

/// Point evaluation of an FE function.
pub fn evaluate(v: &NodalVector, x: &[f64]) -> Result<f64> {
    let (cell, xi) = v.space.mesh().locate(x)?;
    Ok(v.space.eval_in_cell(&v.values, cell, &xi).0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn unit_interval(cells: usize, p: usize) -> FeSpace {
        build_space(&Mesh::interval(0.0, 1.0, cells).unwrap(), p).unwrap()
    }

    #[test]
    fn dof_counts() {
        let s = unit_interval(4, 1);
        assert_eq!(s.n_dofs(), 5);
        let xs: Vec<f64> = (0..5).map(|i| s.coord(i)[0]).collect();
        assert_eq!(xs, vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        assert_eq!(unit_interval(2, 3).n_dofs(), 7);
        let sq = build_space(&Mesh::square(0.0, 1.0, 3).unwrap(), 2).unwrap();
        assert_eq!(sq.n_dofs(), 49);
    }

    #[test]
    fn rejects_orders_outside_range() {
        let m = Mesh::interval(0.0, 1.0, 2).unwrap();
        assert!(matches!(build_space(&m, 0), Err(Error::UnsupportedOrder(0))));
        assert!(matches!(build_space(&m, 5), Err(Error::UnsupportedOrder(5))));
    }

    #[test]
    fn coordinates_are_lexicographic() {
        let s = build_space(&Mesh::rectangle((0.0, 1.0), (0.0, 2.0), 2, 3).unwrap(), 2).unwrap();
        let c = s.coords();
        for w in c.windows(2) {
            assert!(w[0][0] < w[1][0] || (w[0][0] == w[1][0] && w[0][1] < w[1][1]));
        }
    }

    #[test]
    fn interpolation_reproduces_constants_and_linears() {
        let s = unit_interval(4, 1);
        let one = interpolate(&s, |_| 1.0);
        assert!(one.values().iter().all(|&v| v == 1.0));
        let lin = interpolate(&s, |x| x[0]);
        assert_eq!(lin.values(), &[0.0, 0.25, 0.5, 0.75, 1.0]);
        assert!((evaluate(&one, &[0.37]).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn quadratic_reproduced_by_p2() {
        let s = unit_interval(3, 2);
        let v = interpolate(&s, |x| x[0] * x[0]);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let x: f64 = rng.gen();
            assert!((evaluate(&v, &[x]).unwrap() - x * x).abs() < 1e-13);
        }
    }

    #[test]
    fn midpoint_of_linear_cell() {
        let s = unit_interval(1, 1);
        let v = NodalVector::new(&s, vec![0.0, 1.0]).unwrap();
        assert!((evaluate(&v, &[0.5]).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn evaluation_rejects_outside_points() {
        let s = unit_interval(2, 1);
        let v = NodalVector::zeros(&s);
        assert!(matches!(evaluate(&v, &[1.5]), Err(Error::OutsideDomain(_))));
    }

    #[test]
    fn facet_continuity_in_2d() {
        let s = build_space(&Mesh::square(0.0, 1.0, 3).unwrap(), 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let vals: Vec<f64> = (0..s.n_dofs()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        // Vertical facet between cells (0,1) and (1,1) at x = 1/3.
        let left = s.mesh().cell_index([0, 1]);
        let right = s.mesh().cell_index([1, 1]);
        for k in 0..=10 {
            let eta = k as f64 / 10.0;
            let (a, _) = s.eval_in_cell(&vals, left, &[1.0, eta]);
            let (b, _) = s.eval_in_cell(&vals, right, &[0.0, eta]);
            assert!((a - b).abs() <= 1e-13, "{a} vs {b}");
        }
    }

    #[test]
    fn nodal_duality() {
        for p in 1..=4 {
            let s = build_space(&Mesh::square(0.0, 1.0, 2).unwrap(), p).unwrap();
            for i in 0..s.n_dofs() {
                let mut e = vec![0.0; s.n_dofs()];
                e[i] = 1.0;
                let v = NodalVector::new(&s, e).unwrap();
                for j in 0..s.n_dofs() {
                    let val = evaluate(&v, s.coord(j)).unwrap();
                    let expect = if i == j { 1.0 } else { 0.0 };
                    assert!((val - expect).abs() < 1e-12, "p={p} i={i} j={j}: {val}");
                }
            }
        }
    }

    #[test]
    fn partition_of_unity_at_random_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for p in 1..=4 {
            let s = build_space(&Mesh::rectangle((-1.0, 2.0), (0.0, 1.0), 3, 2).unwrap(), p).unwrap();
            for _ in 0..100 {
                let x = [rng.gen_range(-1.0..2.0), rng.gen_range(0.0..1.0)];
                let (cell, xi) = s.mesh().locate(&x).unwrap();
                let tab = s.tabulate(&[xi]);
                let sum: f64 = tab.values.iter().sum();
                let gsum: f64 = tab.grads.iter().map(|g| g[0].abs().max(g[1].abs())).fold(0.0, f64::max);
                assert!((sum - 1.0).abs() < 1e-12, "p={p} cell={cell}: {sum}");
                let gx: f64 = tab.grads.iter().map(|g| g[0]).sum();
                assert!(gx.abs() < 1e-10 * gsum.max(1.0));
            }
        }
    }

    #[test]
    fn polynomial_reproduction_total_degree() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for p in 1..=4usize {
            let s = build_space(&Mesh::square(0.0, 1.0, 2).unwrap(), p).unwrap();
            for i in 0..=p {
                for j in 0..=(p - i) {
                    let v = interpolate(&s, |x| x[0].powi(i as i32) * x[1].powi(j as i32));
                    for _ in 0..10 {
                        let x = [rng.gen::<f64>(), rng.gen::<f64>()];
                        let exact = x[0].powi(i as i32) * x[1].powi(j as i32);
                        assert!((evaluate(&v, &x).unwrap() - exact).abs() <= 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn boundary_dofs_of_square() {
        let s = build_space(&Mesh::square(0.0, 1.0, 2).unwrap(), 2).unwrap();
        assert_eq!(s.boundary_dofs().len(), 16);
    }
}
