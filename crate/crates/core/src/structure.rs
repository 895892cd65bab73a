//! Structure diagnostics (mass, bounds, energies), error norms and rates, and
//! the bound-preserving mass-conservative projection.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::QuadratureRule;
use crate::schemes::{sav_energy, SavConfig};
use crate::space::{interpolate, FeSpace, NodalVector};
use crate::vi::BoxBounds;

/// Visits every quadrature point of `space` with `extra` points per axis on
/// top of the assembly rule, passing `(x, weight, u_h(x), ∇u_h(x))`.
fn sweep(space: &FeSpace, values: &[f64], extra: usize, mut visit: impl FnMut(&[f64], f64, f64, [f64; 2])) {
    let dim = space.dim();
    let rule = QuadratureRule::tensor(dim, QuadratureRule::points_for_order(space.order()) + extra);
    let tab = space.tabulate(&rule.points);
    let jac = space.cell_jacobian();
    let h = [space.mesh().h(0), if dim == 2 { space.mesh().h(1) } else { 1.0 }];
    let n = tab.n_local;
    let mut dofs = Vec::with_capacity(n);
    for cell in 0..space.mesh().n_cells() {
        space.cell_dofs_into(cell, &mut dofs);
        for (q, (pt, w)) in rule.points.iter().zip(&rule.weights).enumerate() {
            let mut v = 0.0;
            let mut g = [0.0; 2];
            for (a, &d) in dofs.iter().enumerate() {
                v += values[d] * tab.values[q * n + a];
                for ax in 0..dim {
                    g[ax] += values[d] * tab.grads[q * n + a][ax] / h[ax];
                }
            }
            let x = space.map_point(cell, pt);
            visit(&x[..dim], w * jac, v, g);
        }
    }
}

/// Snapshot of the structural quantities of a discrete state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub t: f64,
    pub mass: f64,
    pub min: f64,
    pub max: f64,
    /// `½‖∇u‖²`.
    pub dirichlet_energy: f64,
    /// `∫F(u) + C₀`, when a potential is given.
    pub e1: Option<f64>,
    /// `κ/2 ‖∇u‖² + E₁`, or `κ/2 ‖∇u‖²` without a potential.
    pub energy: f64,
    /// `κ/2 ‖∇u‖² + r²`, when the auxiliary variable is given.
    pub modified_energy: Option<f64>,
}

/// Computes [`Diagnostics`] of `u` at time `t`. `sav` optionally supplies the
/// potential and the current auxiliary variable.
pub fn diagnostics(u: &NodalVector, t: f64, kappa: f64, sav: Option<(&SavConfig, Option<f64>)>) -> Result<Diagnostics> {
    let mut mass = 0.0;
    let mut grad_sq = 0.0;
    sweep(u.space(), u.values(), 0, |_, w, v, g| {
        mass += w * v;
        grad_sq += w * (g[0] * g[0] + g[1] * g[1]);
    });
    let dirichlet_energy = 0.5 * grad_sq;
    let e1 = match sav {
        Some((cfg, _)) => Some(sav_energy(u, cfg)?),
        None => None,
    };
    let modified_energy = sav.and_then(|(_, r)| r).map(|r| kappa * dirichlet_energy + r * r);
    Ok(Diagnostics {
        t,
        mass,
        min: u.min(),
        max: u.max(),
        dirichlet_energy,
        e1,
        energy: kappa * dirichlet_energy + e1.unwrap_or(0.0),
        modified_energy,
    })
}

/// Observed orders `log(e_j/e_{j+1}) / log(h_j/h_{j+1})` of consecutive pairs.
pub fn eoc(errors: &[(f64, f64)]) -> Result<Vec<f64>> {
    if errors.len() < 2 {
        return Err(Error::InvalidArgument("need at least two (h, error) pairs".into()));
    }
    for &(h, e) in errors {
        if !(h > 0.0 && h.is_finite()) || !(e > 0.0 && e.is_finite()) {
            return Err(Error::InvalidArgument(format!("invalid pair (h = {h}, error = {e})")));
        }
    }
    errors
        .windows(2)
        .map(|w| {
            let ((h0, e0), (h1, e1)) = (w[0], w[1]);
            if h1 >= h0 {
                return Err(Error::InvalidArgument("mesh sizes must decrease strictly".into()));
            }
            Ok((e0 / e1).ln() / (h0 / h1).ln())
        })
        .collect()
}

/// L² and H¹-seminorm errors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorNorms {
    pub l2: f64,
    pub h1: f64,
    /// Relative errors; equal to the absolute ones when `relative` is false.
    pub l2_rel: f64,
    pub h1_rel: f64,
    /// False if the exact solution had zero norm, so no scaling was applied.
    pub relative: bool,
}

impl ErrorNorms {
    fn from_sums(err_l2: f64, err_h1: f64, ref_l2: f64, ref_h1: f64) -> Self {
        let (l2, h1) = (err_l2.sqrt(), err_h1.sqrt());
        let (rl2, rh1) = (ref_l2.sqrt(), ref_h1.sqrt());
        if rl2 > 0.0 {
            Self { l2, h1, l2_rel: l2 / rl2, h1_rel: if rh1 > 0.0 { h1 / rh1 } else { h1 }, relative: true }
        } else {
            Self { l2, h1, l2_rel: l2, h1_rel: h1, relative: false }
        }
    }
}

/// Errors of `u_h` against an exact solution returning value and gradient at
/// `(x, t)`.
pub fn error_norms(u_h: &NodalVector, exact: impl Fn(&[f64], f64) -> (f64, [f64; 2]), t: f64) -> ErrorNorms {
    let (mut el2, mut eh1, mut rl2, mut rh1) = (0.0, 0.0, 0.0, 0.0);
    sweep(u_h.space(), u_h.values(), 2, |x, w, v, g| {
        let (u, gu) = exact(x, t);
        el2 += w * (u - v).powi(2);
        eh1 += w * ((gu[0] - g[0]).powi(2) + (gu[1] - g[1]).powi(2));
        rl2 += w * u * u;
        rh1 += w * (gu[0] * gu[0] + gu[1] * gu[1]);
    });
    ErrorNorms::from_sums(el2, eh1, rl2, rh1)
}

/// Errors of `u_h` against a reference solution on another mesh of the same
/// domain, integrated on the mesh of the reference by point sampling `u_h`.
pub fn error_norms_reference(u_h: &NodalVector, reference: &NodalVector) -> Result<ErrorNorms> {
    if !same_domain(u_h.space(), reference.space()) {
        return Err(Error::DimensionMismatch("reference lives on a different domain".into()));
    }
    let (mut el2, mut eh1, mut rl2, mut rh1) = (0.0, 0.0, 0.0, 0.0);
    let mut failure = None;
    sweep(reference.space(), reference.values(), 2, |x, w, u, gu| match u_h.evaluate_with_gradient(x) {
        Ok((v, g)) => {
            el2 += w * (u - v).powi(2);
            eh1 += w * ((gu[0] - g[0]).powi(2) + (gu[1] - g[1]).powi(2));
            rl2 += w * u * u;
            rh1 += w * (gu[0] * gu[0] + gu[1] * gu[1]);
        }
        Err(e) => failure = Some(e),
    });
    match failure {
        Some(e) => Err(e),
        None => Ok(ErrorNorms::from_sums(el2, eh1, rl2, rh1)),
    }
}

fn same_domain(a: &FeSpace, b: &FeSpace) -> bool {
    let (ma, mb) = (a.mesh(), b.mesh());
    ma.dim() == mb.dim() && (0..ma.dim()).all(|ax| ma.lower(ax) == mb.lower(ax) && ma.upper(ax) == mb.upper(ax))
}

/// `∫g` on the mesh of `space` with a rule well beyond the assembly one.
fn fine_integral(space: &FeSpace, g: &impl Fn(&[f64]) -> f64) -> f64 {
    let dim = space.dim();
    let rule = QuadratureRule::tensor(dim, QuadratureRule::points_for_order(space.order()) + 6);
    let jac = space.cell_jacobian();
    let mut total = 0.0;
    for cell in 0..space.mesh().n_cells() {
        for (pt, w) in rule.points.iter().zip(&rule.weights) {
            let x = space.map_point(cell, pt);
            total += w * jac * g(&x[..dim]);
        }
    }
    total
}

/// Result of [`bp_mc_project`], with the two correction constants.
#[derive(Debug, Clone)]
pub struct Projection {
    pub u: NodalVector,
    /// Mean shift applied to the interpolant (in centered variables).
    pub c1: f64,
    /// Blending weight toward the mean; zero when no blending was needed.
    pub c2: f64,
    /// Average of the input.
    pub mean: f64,
}

/// Bound-preserving, mass-conservative map into the finite-element space.
///
/// The box is centered to `[−B, B]`, `v` is interpolated, shifted by `c₁` to
/// match the mean of `v`, and, if the nodal range is exceeded, blended toward
/// the mean with weight `c₂ = (L − B)/(L − |m|)` where `L` is the maximum of
/// `|ṽ_h|` sampled on a `(p+3)^dim` grid per cell.
pub fn bp_mc_project(v: impl Fn(&[f64]) -> f64, space: &FeSpace, bounds: &BoxBounds) -> Result<Projection> {
    let (a, b) = (bounds.lower(), bounds.upper());
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::InvalidArgument("projection needs a finite box".into()));
    }
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let measure = space.mesh().measure();
    let mean = fine_integral(space, &v) / measure;
    let m = mean - center;
    if m.abs() > half * (1.0 + 1e-12) {
        return Err(Error::Infeasible(format!("mean {mean} lies outside [{a}, {b}]")));
    }
    let mut vt = interpolate(space, |x| v(x) - center).into_values();
    let mut interp_mean = 0.0;
    sweep(space, &vt, 0, |_, w, u, _| interp_mean += w * u);
    let c1 = m - interp_mean / measure;
    vt.iter_mut().for_each(|x| *x += c1);
    let nodal = vt.iter().fold(0.0f64, |acc, x| acc.max(x.abs()));
    let mut c2 = 0.0;
    if nodal > half {
        let l = sampled_sup(space, &vt).max(nodal);
        c2 = (l - half) / (l - m.abs());
        if !(c2 > 0.0 && c2 < 1.0) {
            return Err(Error::BlendingOutOfRange(c2));
        }
        vt.iter_mut().for_each(|x| *x = (1.0 - c2) * *x + c2 * m);
    }
    // Rounding may leave a value one ulp outside the box.
    let values = vt.into_iter().map(|x| (x + center).clamp(a, b)).collect();
    Ok(Projection { u: NodalVector::new(space, values)?, c1, c2, mean })
}

/// Projection of a finite-element function given on any mesh of the domain.
pub fn bp_mc_project_nodal(v: &NodalVector, space: &FeSpace, bounds: &BoxBounds) -> Result<Projection> {
    if !same_domain(v.space(), space) {
        return Err(Error::DimensionMismatch("input lives on a different domain".into()));
    }
    bp_mc_project(|x| v.evaluate(x).unwrap_or(f64::NAN), space, bounds)
}

/// `max |u_h|` over an equispaced `(p+3)^dim` grid in every cell.
fn sampled_sup(space: &FeSpace, values: &[f64]) -> f64 {
    let k = space.order() + 3;
    let ticks: Vec<f64> = (0..k).map(|i| i as f64 / (k - 1) as f64).collect();
    let points: Vec<[f64; 2]> = if space.dim() == 1 {
        ticks.iter().map(|&s| [s, 0.0]).collect()
    } else {
        ticks.iter().flat_map(|&s| ticks.iter().map(move |&r| [s, r])).collect()
    };
    let tab = space.tabulate(&points);
    let n = tab.n_local;
    let mut dofs = Vec::with_capacity(n);
    let mut sup = 0.0f64;
    for cell in 0..space.mesh().n_cells() {
        space.cell_dofs_into(cell, &mut dofs);
        for q in 0..points.len() {
            let u: f64 = dofs.iter().enumerate().map(|(a, &d)| values[d] * tab.values[q * n + a]).sum();
            sup = sup.max(u.abs());
        }
    }
    sup
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::{assemble_mass, Coefficient};
    use crate::mesh::Mesh;
    use crate::space::build_space;
    use std::f64::consts::PI;

    #[test]
    fn rates_of_exact_powers() {
        let pairs: Vec<(f64, f64)> = [0.2, 0.1, 0.05].iter().map(|&h| (h, 3.0 * h * h)).collect();
        assert!(eoc(&pairs).unwrap().iter().all(|r| (r - 2.0).abs() < 1e-12));
        let pairs: Vec<(f64, f64)> = [0.2, 0.1, 0.05].iter().map(|&h| (h, 0.7 * h)).collect();
        assert!(eoc(&pairs).unwrap().iter().all(|r| (r - 1.0).abs() < 1e-12));
        assert!((eoc(&[(0.1, 1e-2), (0.05, 2.5e-3)]).unwrap()[0] - 2.0).abs() < 1e-12);
        assert!(eoc(&[(0.1, 0.0), (0.05, 1.0)]).is_err());
        assert!(eoc(&[(0.1, 1.0)]).is_err());
        assert!(eoc(&[(0.05, 1.0), (0.1, 0.5)]).is_err());
    }

    #[test]
    fn constant_state_diagnostics() {
        let s = build_space(&Mesh::square(0.0, 1.0, 3).unwrap(), 2).unwrap();
        let d = diagnostics(&NodalVector::constant(&s, 0.4), 0.0, 1.0, None).unwrap();
        assert!(d.dirichlet_energy < 1e-28);
        assert_eq!((d.min, d.max), (0.4, 0.4));
        assert!((d.mass - 0.4).abs() < 1e-14);
    }

    #[test]
    fn symmetric_field_has_zero_mass() {
        let s = build_space(&Mesh::square(0.0, 1.0, 8).unwrap(), 1).unwrap();
        let u = interpolate(&s, |x| (4.0 * PI * x[0]).cos() * (4.0 * PI * x[1]).cos());
        assert!(diagnostics(&u, 0.0, 1.0, None).unwrap().mass.abs() < 1e-10);
    }

    #[test]
    fn auxiliary_energy_of_zero_state() {
        let s = build_space(&Mesh::square(0.0, 1.0, 2).unwrap(), 1).unwrap();
        let sav = SavConfig::new(|v| 0.25 * (v * v - 1.0).powi(2), |v| v * v * v - v, 1.0);
        let d = diagnostics(&NodalVector::zeros(&s), 0.0, 1.0, Some((&sav, Some(1.5)))).unwrap();
        assert!((d.e1.unwrap() - 1.25).abs() < 1e-14);
        assert!((d.modified_energy.unwrap() - 2.25).abs() < 1e-14);
    }

    #[test]
    fn mass_agrees_with_row_sums() {
        let s = build_space(&Mesh::rectangle((0.0, 2.0), (-1.0, 1.0), 3, 5).unwrap(), 3).unwrap();
        let u = interpolate(&s, |x| (x[0] * x[1]).sin() + x[0]);
        let m = assemble_mass(&s, &Coefficient::constant(1.0)).unwrap().row_sums();
        let direct: f64 = m.iter().zip(u.values()).map(|(a, b)| a * b).sum();
        assert!((diagnostics(&u, 0.0, 1.0, None).unwrap().mass - direct).abs() < 1e-12);
    }

    #[test]
    fn exact_reproduction_gives_zero_error() {
        let s = build_space(&Mesh::square(0.0, 1.0, 3).unwrap(), 2).unwrap();
        let u = interpolate(&s, |x| x[0] * x[0] + x[0] * x[1]);
        let e = error_norms(&u, |x, _| (x[0] * x[0] + x[0] * x[1], [2.0 * x[0] + x[1], x[0]]), 0.0);
        assert!(e.l2 < 1e-13 && e.h1 < 1e-13 && e.relative);
    }

    #[test]
    fn zero_exact_solution_reports_absolute_norms() {
        let s = build_space(&Mesh::interval(0.0, 1.0, 4).unwrap(), 1).unwrap();
        let e = error_norms(&NodalVector::constant(&s, 2.0), |_, _| (0.0, [0.0; 2]), 0.0);
        assert!(!e.relative);
        assert!((e.l2_rel - 2.0).abs() < 1e-13);
    }

    #[test]
    fn reference_comparison_of_identical_functions() {
        let coarse = build_space(&Mesh::interval(0.0, 1.0, 4).unwrap(), 2).unwrap();
        let fine = build_space(&Mesh::interval(0.0, 1.0, 12).unwrap(), 2).unwrap();
        let f = |x: &[f64]| x[0] * (1.0 - x[0]);
        let e = error_norms_reference(&interpolate(&coarse, f), &interpolate(&fine, f)).unwrap();
        assert!(e.l2 < 1e-13 && e.h1 < 1e-12);
    }

    #[test]
    fn projection_of_constant_is_constant() {
        let s = build_space(&Mesh::square(0.0, 1.0, 3).unwrap(), 2).unwrap();
        let pr = bp_mc_project(|_| 0.3, &s, &BoxBounds::new(0.0, 1.0).unwrap()).unwrap();
        assert!(pr.u.values().iter().all(|v| (v - 0.3).abs() < 1e-14));
        assert_eq!(pr.c2, 0.0);
    }

    #[test]
    fn interior_input_is_only_shifted() {
        let s = build_space(&Mesh::interval(0.0, 1.0, 6).unwrap(), 1).unwrap();
        let g = |x: &[f64]| 0.5 + 0.3 * (3.0 * x[0]).sin();
        let pr = bp_mc_project(g, &s, &BoxBounds::new(0.0, 1.0).unwrap()).unwrap();
        assert_eq!(pr.c2, 0.0);
        let iu = interpolate(&s, g);
        assert!(pr.u.values().iter().zip(iu.values()).all(|(a, b)| (a - b - pr.c1).abs() < 1e-14));
    }

    #[test]
    fn touching_input_is_blended() {
        // Concave and touching the upper bound: the shift pushes the peak node out.
        let s = build_space(&Mesh::interval(-1.0, 1.0, 10).unwrap(), 1).unwrap();
        let pr = bp_mc_project(|x| (0.5 * PI * x[0]).cos(), &s, &BoxBounds::new(0.0, 1.0).unwrap()).unwrap();
        assert!(pr.c1 > 0.0);
        assert!(pr.c2 > 0.0 && pr.c2 < 1.0);
        assert!(pr.u.min() >= 0.0 && pr.u.max() <= 1.0);
        let exact = 4.0 / PI;
        assert!((diagnostics(&pr.u, 0.0, 1.0, None).unwrap().mass - exact).abs() < 1e-12);
    }

    #[test]
    fn extreme_constant_mean_is_rejected() {
        let s = build_space(&Mesh::interval(0.0, 1.0, 4).unwrap(), 1).unwrap();
        let r = bp_mc_project(|x| 1.0 + 0.1 * x[0], &s, &BoxBounds::new(0.0, 1.0).unwrap());
        assert!(r.is_err());
    }
}
