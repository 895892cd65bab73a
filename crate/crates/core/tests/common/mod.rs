//! Dense reference computations shared by the integration tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use vifem::SparseMatrix;

pub fn dense(m: &SparseMatrix) -> DMatrix<f64> {
    let d = m.to_dense();
    DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| d[i][j])
}

/// Euclidean projection onto `{lo ≤ v ≤ hi, mᵀv = target}`: `v = clamp(y − λm)`
/// with `λ` found by bisection.
pub fn project_box_hyperplane(y: &[f64], m: &[f64], target: f64, lo: f64, hi: f64) -> Vec<f64> {
    let at = |lam: f64| -> (Vec<f64>, f64) {
        let v: Vec<f64> = y.iter().zip(m).map(|(yi, mi)| (yi - lam * mi).clamp(lo, hi)).collect();
        let s = v.iter().zip(m).map(|(a, b)| a * b).sum();
        (v, s)
    };
    let (mut a, mut b) = (-1.0, 1.0);
    while at(a).1 < target {
        a *= 2.0;
    }
    while at(b).1 > target {
        b *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        if at(mid).1 > target {
            a = mid;
        } else {
            b = mid;
        }
    }
    at(0.5 * (a + b)).0
}

/// Minimizes a convex quadratic `½xᵀHx − gᵀx` over the box-and-hyperplane set
/// with accelerated projected gradient.
pub fn projected_gradient_qp(
    h: &DMatrix<f64>,
    g: &DVector<f64>,
    m: &[f64],
    target: f64,
    lo: f64,
    hi: f64,
    iters: usize,
) -> Vec<f64> {
    let n = g.len();
    let lmax = h.clone().symmetric_eigenvalues().max().max(1e-300);
    let step = 1.0 / lmax;
    let proj = |y: &DVector<f64>| DVector::from_vec(project_box_hyperplane(y.as_slice(), m, target, lo, hi));
    let mut x = proj(&DVector::from_element(n, 0.5 * (lo.max(-1e3) + hi.min(1e3))));
    let mut z = x.clone();
    let mut t = 1.0f64;
    for _ in 0..iters {
        let grad = h * &z - g;
        let x_new = proj(&(&z - step * grad));
        let t_new = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        z = &x_new + ((t - 1.0) / t_new) * (&x_new - &x);
        // Restart when the objective goes up.
        let f = |v: &DVector<f64>| 0.5 * v.dot(&(h * v)) - g.dot(v);
        if f(&x_new) > f(&x) {
            z = x_new.clone();
            t = 1.0;
        } else {
            t = t_new;
        }
        x = x_new;
    }
    x.as_slice().to_vec()
}

/// Solves `A z = g` for mean-free `g` with `mᵀz = 0` using a dense bordered system.
pub fn kernel_solve(a: &DMatrix<f64>, m: &[f64], g: &DVector<f64>) -> DVector<f64> {
    let n = a.nrows();
    let mut b = DMatrix::zeros(n + 1, n + 1);
    b.view_mut((0, 0), (n, n)).copy_from(a);
    for i in 0..n {
        b[(i, n)] = m[i];
        b[(n, i)] = m[i];
    }
    let mut rhs = DVector::zeros(n + 1);
    rhs.rows_mut(0, n).copy_from(g);
    let x = b.lu().solve(&rhs).expect("bordered system is regular");
    x.rows(0, n).into_owned()
}

/// Symmetric `PᵀZP`, where `P` removes the weighted mean of a load and `Z`
/// solves `Az = g`, `mᵀz = 0` for mean-free loads.
pub fn kernel_inverse(a: &DMatrix<f64>, m: &[f64]) -> DMatrix<f64> {
    let n = a.nrows();
    let total: f64 = m.iter().sum();
    let p = DMatrix::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 } - m[i] / total);
    let mut out = DMatrix::zeros(n, n);
    for j in 0..n {
        let col = kernel_solve(a, m, &p.column(j).into_owned());
        out.set_column(j, &col);
    }
    p.transpose() * out
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
