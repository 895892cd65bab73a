//! Sparse direct solves for block saddle-point systems and the discrete
//! weighted H⁻¹ solver.

use faer::prelude::Solve;
use faer::sparse::linalg::solvers::Lu;
use faer::sparse::{SparseColMat, Triplet};
use faer::Mat;

use crate::assembly::{assemble_mass, assemble_stiffness, Coefficient};
use crate::error::{Error, Result};
use crate::space::{FeSpace, NodalVector};
use crate::sparse::SparseMatrix;

/// Square linear system made of named blocks, assembled entry by entry.
///
/// Blocks are laid out consecutively; scalar unknowns (a SAV variable, a mean
/// multiplier) are blocks of size one.
#[derive(Debug, Clone)]
pub struct BlockSystem {
    offsets: Vec<usize>,
    triplets: Vec<(usize, usize, f64)>,
    label: String,
}

impl BlockSystem {
    pub fn new(block_sizes: &[usize]) -> Self {
        let mut offsets = vec![0];
        for s in block_sizes {
            offsets.push(offsets.last().unwrap() + s);
        }
        Self { offsets, triplets: Vec::new(), label: String::new() }
    }

    /// `[[A, B], [Bᵀ, −C]]` with optional bordering by a column/row `d` with
    /// corner `−γ` and an optional mean row `m` acting on the second block.
    pub fn saddle(
        a: &SparseMatrix,
        b: &SparseMatrix,
        c: &SparseMatrix,
        augmentation: Option<(&[f64], f64)>,
        mean: Option<&[f64]>,
    ) -> Self {
        let n = a.nrows();
        let mut sizes = vec![n, n];
        if augmentation.is_some() {
            sizes.push(1);
        }
        if mean.is_some() {
            sizes.push(1);
        }
        let mut sys = Self::new(&sizes);
        sys.add_block(0, 0, a, 1.0, None);
        sys.add_block(0, 1, b, 1.0, None);
        sys.add_block(1, 0, &b.transpose(), 1.0, None);
        sys.add_block(1, 1, c, -1.0, None);
        let mut next = 2;
        if let Some((d, gamma)) = augmentation {
            sys.add_column(0, next, d, 1.0, None);
            sys.add_row(next, 0, d, 1.0);
            sys.add_entry(sys.offset(next), sys.offset(next), -gamma);
            next += 1;
        }
        if let Some(m) = mean {
            sys.add_column(1, next, m, 1.0, None);
            sys.add_row(next, 1, m, 1.0);
        }
        sys
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn set_label(&mut self, label: impl Into<String>) {
        self.label = label.into();
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn dim(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    pub fn offset(&self, block: usize) -> usize {
        self.offsets[block]
    }

    pub fn block_size(&self, block: usize) -> usize {
        self.offsets[block + 1] - self.offsets[block]
    }

    pub fn add_entry(&mut self, i: usize, j: usize, v: f64) {
        self.triplets.push((i, j, v));
    }

    /// Adds `scale * m` into block `(bi, bj)`, restricted to the local rows
    /// where `rows` is true (all rows when `None`).
    pub fn add_block(&mut self, bi: usize, bj: usize, m: &SparseMatrix, scale: f64, rows: Option<&[bool]>) {
        let (oi, oj) = (self.offsets[bi], self.offsets[bj]);
        for (i, j, v) in m.triplets() {
            if rows.map_or(true, |r| r[i]) {
                self.triplets.push((oi + i, oj + j, scale * v));
            }
        }
    }

    /// Adds `scale * col` as the single column of scalar block `bj`, in the
    /// rows of block `bi`.
    pub fn add_column(&mut self, bi: usize, bj: usize, col: &[f64], scale: f64, rows: Option<&[bool]>) {
        let (oi, oj) = (self.offsets[bi], self.offsets[bj]);
        for (i, &v) in col.iter().enumerate() {
            if v != 0.0 && rows.map_or(true, |r| r[i]) {
                self.triplets.push((oi + i, oj, scale * v));
            }
        }
    }

    /// Adds `scale * row` as the single row of scalar block `bi`, in the
    /// columns of block `bj`.
    pub fn add_row(&mut self, bi: usize, bj: usize, row: &[f64], scale: f64) {
        let (oi, oj) = (self.offsets[bi], self.offsets[bj]);
        for (j, &v) in row.iter().enumerate() {
            if v != 0.0 {
                self.triplets.push((oi, oj + j, scale * v));
            }
        }
    }

    /// Unit diagonal on the local rows of block `b` selected by `rows`.
    pub fn add_identity_rows(&mut self, b: usize, rows: &[bool]) {
        let o = self.offsets[b];
        for (i, &r) in rows.iter().enumerate() {
            if r {
                self.triplets.push((o + i, o + i, 1.0));
            }
        }
    }

    pub fn to_sparse(&self) -> Result<SparseMatrix> {
        SparseMatrix::from_triplets(self.dim(), self.dim(), &self.triplets)
    }

    pub fn factor(&self) -> Result<Factorization> {
        Factorization::new(self.to_sparse()?, self.label.clone())
    }
}

/// LU factorization with partial pivoting, plus the matrix for residual
/// checks and iterative refinement.
#[derive(Debug)]
pub struct Factorization {
    matrix: SparseMatrix,
    lu: Lu<usize, f64>,
    label: String,
}

const REFINEMENT_STEPS: usize = 3;

impl Factorization {
    pub fn new(matrix: SparseMatrix, label: String) -> Result<Self> {
        let n = matrix.nrows();
        if n != matrix.ncols() {
            return Err(Error::DimensionMismatch("system matrix must be square".into()));
        }
        let trip: Vec<Triplet<usize, usize, f64>> =
            matrix.triplets().map(|(i, j, v)| Triplet::new(i, j, v)).collect();
        let csc = SparseColMat::<usize, f64>::try_new_from_triplets(n, n, &trip)
            .map_err(|e| Error::Singular(format!("{label}: cannot build matrix: {e:?}")))?;
        let lu = csc
            .sp_lu()
            .map_err(|e| Error::Singular(format!("{label}: factorization failed: {e:?}")))?;
        Ok(Self { matrix, lu, label })
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &SparseMatrix {
        &self.matrix
    }

    fn raw_solve(&self, rhs: &[f64]) -> Vec<f64> {
        let b = Mat::<f64>::from_fn(rhs.len(), 1, |i, _| rhs[i]);
        let x = self.lu.solve(&b);
        (0..rhs.len()).map(|i| x[(i, 0)]).collect()
    }

    /// Solves `A x = rhs`, refines, and verifies
    /// `‖A x − rhs‖∞ ≤ 1e-9 (1 + ‖rhs‖∞)`.
    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        if rhs.len() != self.dim() {
            return Err(Error::DimensionMismatch(format!(
                "rhs of length {} for a {}-dimensional system",
                rhs.len(),
                self.dim()
            )));
        }
        let scale = 1.0 + inf_norm(rhs);
        let mut x = self.raw_solve(rhs);
        let mut res = f64::INFINITY;
        for step in 0..=REFINEMENT_STEPS {
            if x.iter().any(|v| !v.is_finite()) {
                return Err(self.singular("non-finite solution"));
            }
            let ax = self.matrix.mul_vec(&x);
            let r: Vec<f64> = rhs.iter().zip(&ax).map(|(b, a)| b - a).collect();
            res = inf_norm(&r);
            if res <= 1e-13 * scale || step == REFINEMENT_STEPS {
                break;
            }
            let dx = self.raw_solve(&r);
            x.iter_mut().zip(&dx).for_each(|(xi, d)| *xi += d);
        }
        if !(res <= 1e-9 * scale) {
            return Err(self.singular(&format!("residual {res:e} after refinement")));
        }
        Ok(x)
    }

    fn singular(&self, what: &str) -> Error {
        let label = if self.label.is_empty() { "system" } else { &self.label };
        Error::Singular(format!("{label}: {what}"))
    }
}

/// One-shot factor-and-solve.
pub fn solve(sys: &BlockSystem, rhs: &[f64]) -> Result<Vec<f64>> {
    sys.factor()?.solve(rhs)
}

pub(crate) fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Solver for `A z = g` where `A` is symmetric positive semidefinite with
/// kernel spanned by constants (closed with the constraint `mᵀz = 0`), or
/// nonsingular when no mean row is given.
#[derive(Debug)]
pub struct KernelSolver {
    n: usize,
    mean: Option<Vec<f64>>,
    factor: Factorization,
}

impl KernelSolver {
    pub fn new(a: &SparseMatrix, mean: Option<&[f64]>, label: &str) -> Result<Self> {
        let n = a.nrows();
        let sizes: Vec<usize> = if mean.is_some() { vec![n, 1] } else { vec![n] };
        let mut sys = BlockSystem::new(&sizes);
        sys.add_block(0, 0, a, 1.0, None);
        if let Some(m) = mean {
            sys.add_column(0, 1, m, 1.0, None);
            sys.add_row(1, 0, m, 1.0);
        }
        let factor = sys.with_label(label).factor()?;
        Ok(Self { n, mean: mean.map(|m| m.to_vec()), factor })
    }

    pub fn has_mean_constraint(&self) -> bool {
        self.mean.is_some()
    }

    /// Solves for `z`; with a mean row the load must be mean-free,
    /// `|Σ g_i| ≤ 1e-10 ‖g‖₁`.
    pub fn solve(&self, load: &[f64]) -> Result<Vec<f64>> {
        if load.len() != self.n {
            return Err(Error::DimensionMismatch(format!("load of length {} for {} dofs", load.len(), self.n)));
        }
        let mut rhs = load.to_vec();
        if self.mean.is_some() {
            let integral: f64 = load.iter().sum();
            let l1: f64 = load.iter().map(|v| v.abs()).sum();
            let tolerance = 1e-10 * l1;
            if integral.abs() > tolerance {
                return Err(Error::NotMeanFree { integral, tolerance });
            }
            rhs.push(0.0);
        }
        if rhs.iter().all(|&v| v == 0.0) {
            return Ok(vec![0.0; self.n]);
        }
        let mut z = self.factor.solve(&rhs)?;
        z.truncate(self.n);
        Ok(z)
    }
}

/// Discrete weighted inverse Laplacian `(−Δ_h^M)⁻¹` with mean-free output.
#[derive(Debug)]
pub struct HMinus1Solver {
    space: FeSpace,
    stiffness: SparseMatrix,
    mass: SparseMatrix,
    inner: KernelSolver,
}

impl HMinus1Solver {
    pub fn new(space: &FeSpace, mobility: &Coefficient) -> Result<Self> {
        let stiffness = assemble_stiffness(space, mobility)?;
        let mass = assemble_mass(space, &Coefficient::constant(1.0))?;
        let m = mass.row_sums();
        let inner = KernelSolver::new(&stiffness, Some(&m), "weighted Poisson problem")?;
        Ok(Self { space: space.clone(), stiffness, mass, inner })
    }

    pub fn stiffness(&self) -> &SparseMatrix {
        &self.stiffness
    }

    pub fn mass(&self) -> &SparseMatrix {
        &self.mass
    }

    /// `z` with `(M∇z, ∇v) = ⟨load, v⟩` for all `v` and `∫z = 0`.
    pub fn apply_load(&self, load: &[f64]) -> Result<NodalVector> {
        NodalVector::new(&self.space, self.inner.solve(load)?)
    }

    /// Same as [`apply_load`](Self::apply_load) with the load `(v, φ_i)` of
    /// an FE function.
    pub fn apply(&self, v: &NodalVector) -> Result<NodalVector> {
        self.apply_load(&self.mass.mul_vec(v.values()))
    }

    /// `‖v‖²_{H⁻¹_h} = (v, z)` for mean-free `v`.
    pub fn norm_sq(&self, v: &NodalVector) -> Result<f64> {
        let load = self.mass.mul_vec(v.values());
        let z = self.inner.solve(&load)?;
        Ok(dot(&z, &load))
    }

    /// `(M∇z, ∇z)`, which equals [`norm_sq`](Self::norm_sq) in exact arithmetic.
    pub fn energy_norm_sq(&self, v: &NodalVector) -> Result<f64> {
        let z = self.apply(v)?;
        Ok(self.stiffness.form(z.values(), z.values()))
    }
}

/// Weighted Poisson solve for a given load vector `g_i = (g, φ_i)`.
pub fn h_minus1_apply(space: &FeSpace, mobility: &Coefficient, load: &NodalVector) -> Result<NodalVector> {
    HMinus1Solver::new(space, mobility)?.apply_load(load.values())
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
