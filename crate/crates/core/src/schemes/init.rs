use crate::assembly::{assemble_load, assemble_mass, assemble_stiffness, Coefficient};
use crate::error::{Error, Result};
use crate::linsolve::{dot, inf_norm, BlockSystem, KernelSolver};
use crate::space::{FeSpace, NodalVector};
use crate::vi::{pdas_solve, BoxBounds, PdasConfig, PdasSolution, ViProblem};

use super::step::SavConfig;

/// Stationary scheme: `(u, v) + (M∇w, ∇v) = (f₁, v)` together with the
/// variational inequality `(w, ξ − u) ≤ (κ∇u, ∇(ξ − u)) + (f₂, ξ − u)`.
///
/// The mean of `f₁` must lie in `[a, b]`. The first PDAS iterate is the
/// unconstrained mixed solve.
pub fn solve_stationary(
    space: &FeSpace,
    f1: &Coefficient,
    f2: &Coefficient,
    mobility: &Coefficient,
    kappa: &Coefficient,
    bounds: BoxBounds,
    cfg: &PdasConfig,
) -> Result<PdasSolution> {
    let mass = assemble_mass(space, &Coefficient::constant(1.0))?;
    let rhs1 = assemble_load(space, f1)?.into_values();
    let rhs2 = assemble_load(space, f2)?.into_values();
    let measure = space.mesh().measure();
    let mean = rhs1.iter().sum::<f64>() / measure;
    let slack = 1e-12 * (1.0 + mean.abs());
    if mean < bounds.lower() - slack || mean > bounds.upper() + slack {
        return Err(Error::Infeasible(format!(
            "mean of the data {mean} lies outside [{}, {}]",
            bounds.lower(),
            bounds.upper()
        )));
    }
    let a_m = assemble_stiffness(space, mobility)?;
    let s = assemble_stiffness(space, kappa)?;
    let prob = ViProblem::new(space, 1.0, mass, a_m, s, rhs1, rhs2, bounds)?;
    let guess = NodalVector::constant(space, mean.clamp(bounds.lower(), bounds.upper()));
    pdas_solve(&prob, cfg, &guess)
}

/// Stationary regularized second-order problem
/// `θu − ∇·(K∇u) − √ε Δw = f₁`, `w = −√ε Δu` (as a variational inequality),
/// with `ε = h^{p+1}`. With `dirichlet`, `u = w = 0` on the boundary and
/// `θ` may vanish.
pub fn solve_stationary_second_order(
    space: &FeSpace,
    diffusion: &Coefficient,
    f1: &Coefficient,
    theta: f64,
    bounds: BoxBounds,
    cfg: &PdasConfig,
    dirichlet: bool,
) -> Result<PdasSolution> {
    let one = Coefficient::constant(1.0);
    let mass = assemble_mass(space, &one)?;
    let eps = space.mesh().max_cell_diameter().powi(space.order() as i32 + 1);
    let l = assemble_stiffness(space, &one)?.scaled(eps.sqrt());
    let s_k = assemble_stiffness(space, diffusion)?;
    let rhs1 = assemble_load(space, f1)?.into_values();
    let n = space.n_dofs();
    let mut prob = ViProblem::new(space, theta, mass, l.clone(), l, rhs1, vec![0.0; n], bounds)?.with_extra_stiffness(s_k)?;
    if dirichlet {
        prob = prob.with_dirichlet_boundary()?;
    }
    // The plain finite element solution defines the first active set.
    let guess = standard_fem_second_order(space, diffusion, f1, theta, dirichlet)?;
    pdas_solve(&prob, cfg, &guess)
}

/// Unconstrained, unregularized Galerkin solution of `θu − ∇·(K∇u) = f₁`,
/// with `u = 0` on the boundary if `dirichlet`.
pub fn standard_fem_second_order(
    space: &FeSpace,
    diffusion: &Coefficient,
    f1: &Coefficient,
    theta: f64,
    dirichlet: bool,
) -> Result<NodalVector> {
    if !dirichlet && !(theta > 0.0) {
        return Err(Error::InvalidArgument("θ must be positive without Dirichlet conditions".into()));
    }
    let n = space.n_dofs();
    let mut interior = vec![true; n];
    if dirichlet {
        space.boundary_dofs().into_iter().for_each(|i| interior[i] = false);
    }
    let mut sys = BlockSystem::new(&[n]).with_label("standard finite element solve");
    sys.add_block(0, 0, &assemble_stiffness(space, diffusion)?, 1.0, Some(&interior));
    if theta != 0.0 {
        sys.add_block(0, 0, &assemble_mass(space, &Coefficient::constant(1.0))?, theta, Some(&interior));
    }
    let mut rhs = assemble_load(space, f1)?.into_values();
    for i in (0..n).filter(|&i| !interior[i]) {
        sys.add_entry(i, i, 1.0);
        rhs[i] = 0.0;
    }
    NodalVector::new(space, sys.factor()?.solve(&rhs)?)
}

/// Bound-preserving, mass-conservative initial value from the stationary
/// scheme with `M = κ = 1` and data `f₁ = u₀ + Δ²u₀`.
pub fn init_vi(
    space: &FeSpace,
    u0: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
    bilaplacian_u0: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
    bounds: BoxBounds,
    cfg: &PdasConfig,
) -> Result<NodalVector> {
    let f1 = Coefficient::scalar(move |x| u0(x) + bilaplacian_u0(x));
    let one = Coefficient::constant(1.0);
    let sol = solve_stationary(space, &f1, &Coefficient::constant(0.0), &one, &one, bounds, cfg)?.into_converged()?;
    Ok(sol.u)
}

/// L² projection `M U = ((g, φ_i))_i`.
pub fn l2_projection(space: &FeSpace, g: &Coefficient) -> Result<NodalVector> {
    let mass = assemble_mass(space, &Coefficient::constant(1.0))?;
    let load = assemble_load(space, g)?;
    let solver = KernelSolver::new(&mass, None, "mass matrix")?;
    NodalVector::new(space, solver.solve(load.values())?)
}

/// The L²-closest nodally boxed function with the same mass:
/// `argmin ‖v − ũ‖²` over `v` with nodal values in `[a, b]` and `∫v = ∫ũ`.
pub fn init_postprocess(u_tilde: &NodalVector, bounds: &BoxBounds) -> Result<NodalVector> {
    let space = u_tilde.space();
    let mass = assemble_mass(space, &Coefficient::constant(1.0))?;
    let m = mass.row_sums();
    let measure: f64 = m.iter().sum();
    let target = dot(&m, u_tilde.values());
    let mean = target / measure;
    let (lo, hi) = (bounds.lower(), bounds.upper());
    let slack = 1e-12 * (1.0 + mean.abs());
    if mean < lo - slack || mean > hi + slack {
        return Err(Error::Infeasible(format!("mean {mean} lies outside [{lo}, {hi}]")));
    }
    if u_tilde.values().iter().all(|&v| v >= lo && v <= hi) {
        return Ok(u_tilde.clone());
    }
    let n = space.n_dofs();
    let mu_tilde = mass.mul_vec(u_tilde.values());
    // Complementarity threshold on the scale of the mass matrix entries.
    let c = mass.diagonal().into_iter().fold(0.0, f64::max);
    let mut side: Vec<i8> = u_tilde
        .values()
        .iter()
        .map(|&v| if v < lo { -1 } else if v > hi { 1 } else { 0 })
        .collect();
    const MAX_ITER: usize = 100;
    for iter in 1..=MAX_ITER {
        let free: Vec<bool> = side.iter().map(|&s| s == 0).collect();
        let mut sys = BlockSystem::new(&[n, 1]).with_label(format!("mass-preserving projection, iteration {iter}"));
        sys.add_block(0, 0, &mass, 1.0, Some(&free));
        sys.add_column(0, 1, &m, 1.0, Some(&free));
        sys.add_row(1, 0, &m, 1.0);
        let mut rhs = vec![0.0; n + 1];
        for i in 0..n {
            match side[i] {
                0 => rhs[i] = mu_tilde[i],
                s => {
                    sys.add_entry(i, i, 1.0);
                    rhs[i] = if s < 0 { lo } else { hi };
                }
            }
        }
        rhs[n] = target;
        let x = sys.factor()?.solve(&rhs)?;
        let lambda = x[n];
        let mut v = x[..n].to_vec();
        for i in 0..n {
            match side[i] {
                -1 => v[i] = lo,
                1 => v[i] = hi,
                _ => {}
            }
        }
        // μ = −(M(v − ũ) + λ m): nonnegative at the upper bound, nonpositive at the lower.
        let mv = mass.mul_vec(&v);
        let mu: Vec<f64> = (0..n)
            .map(|i| if side[i] == 0 { 0.0 } else { -(mv[i] - mu_tilde[i] + lambda * m[i]) })
            .collect();
        let next: Vec<i8> = (0..n)
            .map(|i| {
                let p = v[i] + mu[i] / c;
                if p < lo {
                    -1
                } else if p > hi {
                    1
                } else {
                    0
                }
            })
            .collect();
        if next == side {
            let kkt = postprocess_kkt(&mass, &m, u_tilde.values(), &v, lambda, bounds);
            if kkt > 1e-9 {
                return Err(Error::Infeasible(format!("projection stalled with KKT residual {kkt:e}")));
            }
            return NodalVector::new(space, v);
        }
        side = next;
    }
    Err(Error::Infeasible(format!("mass-preserving projection did not settle in {MAX_ITER} iterations")))
}

fn postprocess_kkt(
    mass: &crate::sparse::SparseMatrix,
    m: &[f64],
    u_tilde: &[f64],
    v: &[f64],
    lambda: f64,
    bounds: &BoxBounds,
) -> f64 {
    let diff: Vec<f64> = v.iter().zip(u_tilde).map(|(a, b)| a - b).collect();
    let g: Vec<f64> = mass.mul_vec(&diff).iter().zip(m).map(|(gi, mi)| gi + lambda * mi).collect();
    let scale = mass.norm_inf() * (1.0 + inf_norm(u_tilde));
    let (lo, hi) = (bounds.lower(), bounds.upper());
    let mut worst = 0.0f64;
    for i in 0..v.len() {
        let at_lo = (v[i] - lo).abs() <= 1e-12 * (1.0 + lo.abs());
        let at_hi = (v[i] - hi).abs() <= 1e-12 * (1.0 + hi.abs());
        // Stationarity: g = 0 off the bounds, g ≥ 0 at the lower, g ≤ 0 at the upper bound.
        let r = if at_lo {
            (-g[i]).max(0.0)
        } else if at_hi {
            g[i].max(0.0)
        } else {
            g[i].abs()
        };
        worst = worst.max(r / scale).max((lo - v[i]).max(v[i] - hi).max(0.0));
    }
    let mass_err = (dot(m, v) - dot(m, u_tilde)).abs() / (1.0 + dot(m, u_tilde).abs());
    worst.max(mass_err)
}

/// `E₁(u) = ∫F(u_h) + C₀` by quadrature.
pub fn sav_energy(u: &NodalVector, sav: &SavConfig) -> Result<f64> {
    let f = sav.potential.clone();
    let load = assemble_load(u.space(), &Coefficient::field(u.clone(), move |v, _| f(v)))?;
    Ok(load.values().iter().sum::<f64>() + sav.c0)
}

/// `r = √E₁(u)`.
pub fn sav_init(u: &NodalVector, sav: &SavConfig) -> Result<f64> {
    let e1 = sav_energy(u, sav)?;
    if !(e1 > 0.0) {
        return Err(Error::NonPositiveEnergy { value: e1, c0: sav.c0 });
    }
    Ok(e1.sqrt())
}
