//! Randomized comparison of PDAS with a dense quadratic-programming oracle.
//!
//! A stationary problem is the minimization of
//! `½vᵀSv + rhs₂ᵀv + ½(Mv − rhs₁)ᵀ K (Mv − rhs₁)` over the box and the mass
//! constraint, where `K` inverts `A_M` on mean-free loads. The oracle builds
//! that quadratic densely and minimizes it with accelerated projected
//! gradient.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use vifem::{
    assemble_load, assemble_mass, assemble_stiffness, build_space, energy_value, pdas_solve, BoxBounds, Coefficient,
    Mesh, NodalVector, Objective, PdasConfig, SparseMatrix, ViProblem,
};

#[derive(Debug, Clone, Serialize)]
pub struct Comparison {
    pub dofs: usize,
    pub p: usize,
    pub active: usize,
    pub iterations: usize,
    /// `‖u_pdas − u_oracle‖∞`.
    pub max_diff: f64,
    /// `J(u_pdas) − J(u_oracle)`.
    pub energy_gap: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub seed: u64,
    pub comparisons: Vec<Comparison>,
    pub passed: bool,
}

pub const DIFF_TOL: f64 = 1e-7;
pub const GAP_TOL: f64 = 1e-9;

fn dense(m: &SparseMatrix) -> DMatrix<f64> {
    let d = m.to_dense();
    DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| d[i][j])
}

/// Euclidean projection onto `{lo ≤ v ≤ hi, mᵀv = target}`, `v = clamp(y − λm)`
/// with `λ` found by bisection.
fn project(y: &[f64], m: &[f64], target: f64, lo: f64, hi: f64) -> Vec<f64> {
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

/// `PᵀZP` where `P` removes the weighted mean and `Z` solves `Az = g`,
/// `mᵀz = 0` through a bordered system.
fn kernel_inverse(a: &DMatrix<f64>, m: &[f64]) -> DMatrix<f64> {
    let n = a.nrows();
    let total: f64 = m.iter().sum();
    let mut bordered = DMatrix::zeros(n + 1, n + 1);
    bordered.view_mut((0, 0), (n, n)).copy_from(a);
    for i in 0..n {
        bordered[(i, n)] = m[i];
        bordered[(n, i)] = m[i];
    }
    let lu = bordered.lu();
    let p = DMatrix::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 } - m[i] / total);
    let mut z = DMatrix::zeros(n, n);
    for j in 0..n {
        let mut rhs = DVector::zeros(n + 1);
        rhs.rows_mut(0, n).copy_from(&p.column(j));
        let x = lu.solve(&rhs).expect("bordered system is regular");
        z.set_column(j, &x.rows(0, n));
    }
    p.transpose() * z
}

fn projected_gradient(h: &DMatrix<f64>, g: &DVector<f64>, m: &[f64], target: f64, lo: f64, hi: f64) -> Vec<f64> {
    let n = g.len();
    let step = 1.0 / h.clone().symmetric_eigenvalues().max().max(1e-300);
    let proj = |y: &DVector<f64>| DVector::from_vec(project(y.as_slice(), m, target, lo, hi));
    let f = |v: &DVector<f64>| 0.5 * v.dot(&(h * v)) - g.dot(v);
    let mut x = proj(&DVector::from_element(n, 0.5 * (lo + hi)));
    let mut z = x.clone();
    let mut t = 1.0f64;
    for _ in 0..200_000 {
        let x_new = proj(&(&z - step * (h * &z - g)));
        let t_new = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        if f(&x_new) > f(&x) {
            // Restart the momentum.
            z = x_new.clone();
            t = 1.0;
        } else {
            z = &x_new + ((t - 1.0) / t_new) * (&x_new - &x);
            t = t_new;
        }
        x = x_new;
    }
    x.as_slice().to_vec()
}

/// Draws a problem; `None` when the mass is too close to the box or no
/// constraint is active at the solution.
fn compare_one(rng: &mut ChaCha8Rng) -> Option<Comparison> {
    let p = rng.gen_range(1..=2usize);
    let cells = if p == 1 { rng.gen_range(4..=11) } else { rng.gen_range(2..=5) };
    let space = build_space(&Mesh::interval(0.0, 1.0, cells).ok()?, p).ok()?;
    let n = space.n_dofs();
    let (amp, freq, shift) = (rng.gen_range(0.8..3.0), rng.gen_range(1..=3) as f64, rng.gen_range(0.0..PI));
    let mean = rng.gen_range(0.25..0.75);
    let kappa = 10f64.powf(rng.gen_range(-4.0..-2.0));
    let (m1, m2) = (rng.gen_range(0.0..0.8), rng.gen_range(1.0..5.0));
    let f1 = Coefficient::scalar(move |x| mean + amp * (2.0 * freq * PI * x[0] + shift).cos());
    let mobility = Coefficient::scalar(move |x| 1.0 + m1 * (m2 * x[0]).sin());
    let mass = assemble_mass(&space, &Coefficient::constant(1.0)).ok()?;
    let a_m = assemble_stiffness(&space, &mobility).ok()?;
    let s = assemble_stiffness(&space, &Coefficient::constant(kappa)).ok()?;
    let rhs1 = assemble_load(&space, &f1).ok()?.into_values();
    let rhs2: Vec<f64> = (0..n).map(|_| rng.gen_range(-0.05..0.05)).collect();
    let bounds = BoxBounds::new(0.0, 1.0).ok()?;
    let prob =
        ViProblem::new(&space, 1.0, mass.clone(), a_m.clone(), s.clone(), rhs1.clone(), rhs2.clone(), bounds).ok()?;
    let target = prob.target_mass();
    if !(0.1..=0.9).contains(&target) {
        return None;
    }
    let cfg = PdasConfig { kkt_tol: 1e-12, ..PdasConfig::default() };
    let sol = pdas_solve(&prob, &cfg, &NodalVector::constant(&space, target)).ok()?;
    let last = sol.report.active_lower.len().checked_sub(1)?;
    let active = sol.report.active_lower[last].len() + sol.report.active_upper[last].len();
    if active == 0 {
        return None;
    }

    let weights = prob.mass_weights().to_vec();
    let md = dense(&mass);
    let k = kernel_inverse(&dense(&a_m), &weights);
    let h = dense(&s) + md.transpose() * &k * &md;
    let h = 0.5 * (&h + h.transpose());
    let g = md.transpose() * &k * DVector::from_vec(rhs1) - DVector::from_vec(rhs2);
    let oracle = projected_gradient(&h, &g, &weights, target, 0.0, 1.0);

    let max_diff = sol.u.values().iter().zip(&oracle).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let energy_gap = energy_value(&prob, &sol.u).ok()? - Objective::new(&prob).ok()?.value(&oracle).ok()?;
    Some(Comparison {
        dofs: n,
        p,
        active,
        iterations: sol.report.iterations,
        max_diff,
        energy_gap,
        passed: sol.report.converged && max_diff <= DIFF_TOL && energy_gap <= GAP_TOL,
    })
}

/// Compares `problems` random problems with active constraints.
pub fn run(seed: u64, problems: usize, mut progress: impl FnMut(usize, &Comparison)) -> Summary {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut comparisons = Vec::new();
    let mut attempts = 0;
    while comparisons.len() < problems && attempts < 25 * problems.max(1) {
        attempts += 1;
        if let Some(c) = compare_one(&mut rng) {
            progress(comparisons.len(), &c);
            comparisons.push(c);
        }
    }
    let passed = comparisons.len() == problems && comparisons.iter().all(|c| c.passed);
    Summary { seed, comparisons, passed }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn projection_lands_on_the_constraint_set() {
        let m = [0.25, 0.5, 0.25];
        let v = project(&[2.0, -1.0, 0.3], &m, 0.5, 0.0, 1.0);
        assert!(v.iter().all(|x| (0.0..=1.0).contains(x)));
        let mass: f64 = v.iter().zip(&m).map(|(a, b)| a * b).sum();
        assert!((mass - 0.5).abs() < 1e-12);
    }

    #[test]
    fn kernel_inverse_inverts_on_mean_free_loads() {
        let a = DMatrix::from_row_slice(3, 3, &[1.0, -1.0, 0.0, -1.0, 2.0, -1.0, 0.0, -1.0, 1.0]);
        let m = [0.25, 0.5, 0.25];
        let k = kernel_inverse(&a, &m);
        let g = DVector::from_vec(vec![1.0, 0.0, -1.0]);
        let z = &k * &g;
        assert!((&a * &z - &g).amax() < 1e-12);
        assert!((k.clone() - k.transpose()).amax() < 1e-12);
    }
}
