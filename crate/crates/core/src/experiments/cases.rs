use std::f64::consts::PI;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::exact::{
    barenblatt, cos_product, fourth_order_flux_divergence, quartic_perturbed, second_order_flux_divergence,
    shifted_cos_product, MobilityJet,
};
use crate::assembly::Coefficient;
use crate::error::{Error, Result};
use crate::mesh::Mesh;
use crate::schemes::{
    init_postprocess, init_vi, l2_projection, solve_stationary, solve_stationary_second_order,
    standard_fem_second_order, Model, SavConfig,
    Scheme, StateFn,
};
use crate::space::{interpolate, FeSpace, NodalVector};
use crate::vi::{BoundSchedule, BoxBounds, PdasConfig, PdasSolution};

/// Which discrete problem a case exercises.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PdeKind {
    Stationary,
    FourthOrder,
    FourthOrderSav,
    SecondOrder,
    StationarySecondOrder,
}

/// How errors of a case are measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolutionInfo {
    Exact,
    Reference,
    Qualitative,
}

/// The test problems.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Case {
    /// `u − ∇·((1+x)∇w) = f₁`, `w = −Δu` on `(0,1)²`, `u = cos 4πx cos 4πy`.
    StationarySmooth,
    /// 1D problem on `(−2,2)` with piecewise mobility `2` / `eps` and
    /// indicator data.
    StationaryDiscontinuous { eps: f64 },
    /// `∂ₜu = ∇·(u∇w) + f₁`, `w = −Δu`, `u = (1 + cos x cos y) cos t`.
    LubricationAccuracy,
    /// `∂ₜu = ∇·(√u ∇w)`, `w = −Δu` on `(−1,1)` with a finite-time singularity.
    LubricationSingular,
    /// Cahn–Hilliard with mobility `1 − u²` and quartic potential, `u = cos x cos y cos t`.
    ChAccuracy,
    /// Cahn–Hilliard with logarithmic potential from a random start.
    ChLogarithmic { seed: u64 },
    /// `∂ₜu = ∇·((1+u)∇u) + f₁` with a quartic-perturbed exact solution.
    SecondOrderAccuracy,
    /// Anisotropic `−∇·(K∇u) = f₁` with homogeneous Dirichlet conditions.
    DirichletPositivity,
    /// Porous medium equation with the Barenblatt solution.
    PorousMedium { m: f64 },
}

pub const DEFAULT_SEED: u64 = 20_240_917;

/// Every case with default parameters.
pub fn registry() -> Vec<Case> {
    vec![
        Case::StationarySmooth,
        Case::StationaryDiscontinuous { eps: 1e-3 },
        Case::LubricationAccuracy,
        Case::LubricationSingular,
        Case::ChAccuracy,
        Case::ChLogarithmic { seed: DEFAULT_SEED },
        Case::SecondOrderAccuracy,
        Case::DirichletPositivity,
        Case::PorousMedium { m: 2.0 },
    ]
}

fn indicator(cond: bool) -> f64 {
    if cond {
        1.0
    } else {
        0.0
    }
}

fn xlogx(z: f64) -> f64 {
    if z <= 0.0 {
        0.0
    } else {
        z * z.ln()
    }
}

/// Keeps logarithms finite at and beyond `±1`.
fn open_unit(u: f64) -> f64 {
    u.clamp(-1.0 + 1e-15, 1.0 - 1e-15)
}

impl Case {
    pub fn name(&self) -> &'static str {
        match self {
            Case::StationarySmooth => "stationary_smooth",
            Case::StationaryDiscontinuous { .. } => "stationary_discontinuous",
            Case::LubricationAccuracy => "lubrication_accuracy",
            Case::LubricationSingular => "lubrication_singular",
            Case::ChAccuracy => "ch_accuracy",
            Case::ChLogarithmic { .. } => "ch_logarithmic",
            Case::SecondOrderAccuracy => "second_order_accuracy",
            Case::DirichletPositivity => "dirichlet_positivity",
            Case::PorousMedium { .. } => "porous_medium",
        }
    }

    /// Case by name with default parameters.
    pub fn from_name(name: &str) -> Result<Case> {
        registry()
            .into_iter()
            .find(|c| c.name() == name)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown case '{name}'")))
    }

    /// Replaces the case parameter (`eps`, `m` or the seed) where one exists.
    pub fn with_parameter(self, value: f64) -> Result<Case> {
        Ok(match self {
            Case::StationaryDiscontinuous { .. } if value > 0.0 => Case::StationaryDiscontinuous { eps: value },
            Case::PorousMedium { .. } if value > 1.0 => Case::PorousMedium { m: value },
            Case::ChLogarithmic { .. } if value >= 0.0 && value.fract() == 0.0 => {
                Case::ChLogarithmic { seed: value as u64 }
            }
            _ => return Err(Error::InvalidArgument(format!("parameter {value} not valid for case {}", self.name()))),
        })
    }

    pub fn description(&self) -> String {
        match self {
            Case::StationarySmooth => "stationary, M = 1 + x, exact cos(4πx)cos(4πy) on (0,1)^2".into(),
            Case::StationaryDiscontinuous { eps } => format!("stationary 1D, discontinuous data, M = 2 | {eps:e}"),
            Case::LubricationAccuracy => "thin film M(u) = u, exact (1 + cos x cos y) cos t".into(),
            Case::LubricationSingular => "thin film M(u) = sqrt(u) on (-1,1), singular near t = 7.4e-4".into(),
            Case::ChAccuracy => "Cahn-Hilliard, M = 1 - u^2, quartic potential, exact cos x cos y cos t".into(),
            Case::ChLogarithmic { seed } => format!("Cahn-Hilliard, logarithmic potential, random start (seed {seed})"),
            Case::SecondOrderAccuracy => "regularized second order, K = 1 + u, quartic-perturbed exact solution".into(),
            Case::DirichletPositivity => "regularized anisotropic diffusion, Dirichlet, positivity".into(),
            Case::PorousMedium { m } => format!("porous medium m = {m}, Barenblatt solution"),
        }
    }

    pub fn kind(&self) -> PdeKind {
        match self {
            Case::StationarySmooth | Case::StationaryDiscontinuous { .. } => PdeKind::Stationary,
            Case::LubricationAccuracy | Case::LubricationSingular => PdeKind::FourthOrder,
            Case::ChAccuracy | Case::ChLogarithmic { .. } => PdeKind::FourthOrderSav,
            Case::SecondOrderAccuracy | Case::PorousMedium { .. } => PdeKind::SecondOrder,
            Case::DirichletPositivity => PdeKind::StationarySecondOrder,
        }
    }

    pub fn is_stationary(&self) -> bool {
        matches!(self.kind(), PdeKind::Stationary | PdeKind::StationarySecondOrder)
    }

    pub fn solution_info(&self) -> SolutionInfo {
        match self {
            Case::StationaryDiscontinuous { .. } => SolutionInfo::Reference,
            Case::LubricationSingular | Case::ChLogarithmic { .. } | Case::DirichletPositivity => {
                SolutionInfo::Qualitative
            }
            _ => SolutionInfo::Exact,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Case::StationaryDiscontinuous { .. } | Case::LubricationSingular | Case::PorousMedium { .. } => 1,
            _ => 2,
        }
    }

    /// Final time of time-dependent cases.
    pub fn t_end(&self) -> Option<f64> {
        match self {
            Case::LubricationAccuracy | Case::ChAccuracy | Case::SecondOrderAccuracy => Some(1.0),
            Case::LubricationSingular => Some(5e-2),
            Case::ChLogarithmic { .. } => Some(0.15),
            Case::PorousMedium { .. } => Some(1.2),
            _ => None,
        }
    }

    /// Relaxation of the bounds used unless overridden.
    pub fn default_tol_relax(&self) -> f64 {
        match self {
            Case::LubricationSingular => 1e-15,
            Case::ChLogarithmic { .. } => 1e-10,
            _ => 0.0,
        }
    }

    /// Uniform mesh with `cells` cells per axis.
    pub fn mesh(&self, cells: usize) -> Result<Mesh> {
        match self {
            Case::StationarySmooth | Case::ChLogarithmic { .. } | Case::DirichletPositivity => {
                Mesh::square(0.0, 1.0, cells)
            }
            Case::StationaryDiscontinuous { .. } => Mesh::interval(-2.0, 2.0, cells),
            Case::LubricationSingular => Mesh::interval(-1.0, 1.0, cells),
            Case::PorousMedium { .. } => Mesh::interval(-5.0, 5.0, cells),
            Case::LubricationAccuracy | Case::ChAccuracy | Case::SecondOrderAccuracy => {
                Mesh::square(0.0, 2.0 * PI, cells)
            }
        }
    }

    pub fn bounds(&self, tol_relax: f64) -> Result<BoundSchedule> {
        let fixed = |a: f64, b: f64| BoxBounds::relaxed_by(a, b, tol_relax).map(BoundSchedule::from);
        match self {
            Case::StationarySmooth | Case::ChLogarithmic { .. } => fixed(-1.0, 1.0),
            Case::StationaryDiscontinuous { .. } => fixed(0.0, 1.0),
            Case::LubricationSingular | Case::DirichletPositivity | Case::PorousMedium { .. } => {
                fixed(0.0, f64::INFINITY)
            }
            Case::LubricationAccuracy => Ok(BoundSchedule::timed(|_| 0.0, |t| 2.0 * t.cos(), tol_relax)),
            Case::ChAccuracy => Ok(BoundSchedule::timed(|t| -t.cos(), |t| t.cos(), tol_relax)),
            Case::SecondOrderAccuracy => {
                Ok(BoundSchedule::timed(|t| -t.cos(), |t| (1.0 + 2.0 * PI.powi(3)) * t.cos(), tol_relax))
            }
        }
    }

    /// Exact solution value and gradient, where known.
    pub fn exact(&self, x: &[f64], t: f64) -> Option<(f64, [f64; 2])> {
        let j = match self {
            Case::StationarySmooth => cos_product(x, 4.0 * PI),
            Case::LubricationAccuracy => shifted_cos_product(x, t, 1.0),
            Case::ChAccuracy => shifted_cos_product(x, t, 0.0),
            Case::SecondOrderAccuracy => quartic_perturbed(x, t),
            Case::PorousMedium { m } => {
                let (u, du) = barenblatt(x[0], t, *m);
                return Some((u, [du, 0.0]));
            }
            _ => return None,
        };
        Some((j.u, j.grad))
    }

    /// Potential of the SAV cases.
    pub fn sav(&self) -> Option<SavConfig> {
        match self {
            Case::ChAccuracy => Some(SavConfig::new(|u| 0.25 * (u * u - 1.0).powi(2), |u| u * u * u - u, 1.0)),
            Case::ChLogarithmic { .. } => Some(SavConfig::new(
                |u| {
                    let u = open_unit(u);
                    xlogx(1.0 + u) + xlogx(1.0 - u) - 2.5 * u * u
                },
                |u| {
                    let u = open_unit(u);
                    (1.0 + u).ln() - (1.0 - u).ln() - 5.0 * u
                },
                1.0,
            )),
            _ => None,
        }
    }

    /// Coefficient of `−Δu` in the chemical potential.
    pub fn kappa(&self) -> f64 {
        match self {
            Case::ChLogarithmic { .. } => 0.01,
            _ => 1.0,
        }
    }

    /// Evolution model of time-dependent cases.
    pub fn model(&self, tol_relax: f64) -> Result<Model> {
        let bounds = self.bounds(tol_relax)?;
        let model = match self {
            Case::LubricationAccuracy => {
                let mobility: StateFn = Arc::new(|u, _, _| u.max(0.0));
                Model::new(Scheme::FourthOrder { mobility, kappa: 1.0 }, bounds).with_source(|x, t| {
                    let j = shifted_cos_product(x, t, 1.0);
                    let mob = MobilityJet { m: j.u, du: 1.0, dx: [0.0; 2] };
                    j.ut - fourth_order_flux_divergence(&j, &mob, 1.0, 0.0, 0.0)
                })
            }
            Case::LubricationSingular => {
                let mobility: StateFn = Arc::new(|u, _, _| u.max(0.0).sqrt());
                Model::new(Scheme::FourthOrder { mobility, kappa: 1.0 }, bounds)
            }
            Case::ChAccuracy => {
                let mobility: StateFn = Arc::new(|u, _, _| (1.0 - u * u).max(0.0));
                let sav = self.sav().expect("SAV case");
                Model::new(Scheme::Sav { mobility, kappa: 1.0, sav }, bounds).with_source(|x, t| {
                    let j = shifted_cos_product(x, t, 0.0);
                    let mob = MobilityJet { m: 1.0 - j.u * j.u, du: -2.0 * j.u, dx: [0.0; 2] };
                    j.ut - fourth_order_flux_divergence(&j, &mob, 1.0, 3.0 * j.u * j.u - 1.0, 6.0 * j.u)
                })
            }
            Case::ChLogarithmic { .. } => {
                let mobility: StateFn = Arc::new(|u, _, _| (1.0 - u * u).max(0.0));
                let sav = self.sav().expect("SAV case");
                Model::new(Scheme::Sav { mobility, kappa: self.kappa(), sav }, bounds)
            }
            Case::SecondOrderAccuracy => {
                let diffusion: StateFn = Arc::new(|u, _, _| (1.0 + u).max(0.0));
                Model::new(Scheme::SecondOrder { diffusion }, bounds).with_source(|x, t| {
                    let j = quartic_perturbed(x, t);
                    j.ut - second_order_flux_divergence(&j, 1.0 + j.u, 1.0)
                })
            }
            Case::PorousMedium { m } => {
                let m = *m;
                let diffusion: StateFn = Arc::new(move |u, _, _| m * u.max(0.0).powf(m - 1.0));
                Model::new(Scheme::SecondOrder { diffusion }, bounds)
            }
            _ => {
                return Err(Error::InvalidArgument(format!("case {} is stationary", self.name())));
            }
        };
        Ok(model)
    }

    /// Discrete initial value of a time-dependent case.
    pub fn initial(&self, space: &FeSpace, tol_relax: f64, cfg: &PdasConfig) -> Result<NodalVector> {
        let b0 = self.bounds(tol_relax)?.at(0.0)?;
        match self {
            Case::LubricationAccuracy | Case::ChAccuracy | Case::PorousMedium { .. } => {
                Ok(interpolate(space, |x| self.exact(x, 0.0).expect("exact solution").0))
            }
            Case::SecondOrderAccuracy => {
                let g = Coefficient::scalar(|x| quartic_perturbed(x, 0.0).u);
                init_postprocess(&l2_projection(space, &g)?, &b0)
            }
            Case::LubricationSingular => init_vi(
                space,
                |x| 0.8 - (PI * x[0]).cos() + 0.25 * (2.0 * PI * x[0]).cos(),
                |x| {
                    let p4 = PI.powi(4);
                    -p4 * (PI * x[0]).cos() + 4.0 * p4 * (2.0 * PI * x[0]).cos()
                },
                b0,
                cfg,
            ),
            Case::ChLogarithmic { seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                let values = (0..space.n_dofs()).map(|_| 0.2 + 0.05 * rng.gen_range(-1.0..=1.0)).collect();
                NodalVector::new(space, values)
            }
            _ => Err(Error::InvalidArgument(format!("case {} is stationary", self.name()))),
        }
    }

    /// Data `f₁` of the first equation of a stationary case.
    pub fn stationary_source(&self) -> Option<Coefficient> {
        match self {
            Case::StationarySmooth => Some(Coefficient::scalar(|x| {
                let j = cos_product(x, 4.0 * PI);
                let mob = MobilityJet { m: 1.0 + x[0], du: 0.0, dx: [1.0, 0.0] };
                j.u - fourth_order_flux_divergence(&j, &mob, 1.0, 0.0, 0.0)
            })),
            Case::StationaryDiscontinuous { .. } => {
                Some(Coefficient::scalar(|x| indicator(x[0] > 0.0 && x[0] < 1.0)))
            }
            Case::DirichletPositivity => Some(Coefficient::scalar(|x| indicator((x[0] - 0.5).abs() <= 0.125))),
            _ => None,
        }
    }

    /// Plain Galerkin solution of the Dirichlet positivity problem, without
    /// constraint or regularization.
    pub fn standard_fem(&self, space: &FeSpace) -> Result<NodalVector> {
        match self {
            Case::DirichletPositivity => {
                let f1 = self.stationary_source().expect("stationary case");
                standard_fem_second_order(space, &anisotropic_diffusion(), &f1, 0.0, true)
            }
            _ => Err(Error::InvalidArgument(format!("case {} has no plain second-order form", self.name()))),
        }
    }

    /// Solves a stationary case; `bounds` overrides the case box (e.g. to get
    /// the unconstrained solution).
    pub fn solve_stationary(&self, space: &FeSpace, bounds: BoxBounds, cfg: &PdasConfig) -> Result<PdasSolution> {
        let zero = Coefficient::constant(0.0);
        let one = Coefficient::constant(1.0);
        match self {
            Case::StationarySmooth => {
                let f1 = self.stationary_source().expect("stationary case");
                let mobility = Coefficient::scalar(|x| 1.0 + x[0]);
                solve_stationary(space, &f1, &zero, &mobility, &one, bounds, cfg)
            }
            Case::StationaryDiscontinuous { eps } => {
                let eps = *eps;
                let mobility = Coefficient::scalar(move |x| if x[0].abs() < 0.5 { 2.0 } else { eps });
                let f1 = self.stationary_source().expect("stationary case");
                let f2 = Coefficient::scalar(|x| 5.0 * indicator(x[0] > -1.0 && x[0] < 0.0));
                solve_stationary(space, &f1, &f2, &mobility, &one, bounds, cfg)
            }
            Case::DirichletPositivity => {
                let f1 = self.stationary_source().expect("stationary case");
                solve_stationary_second_order(space, &anisotropic_diffusion(), &f1, 0.0, bounds, cfg, true)
            }
            _ => Err(Error::InvalidArgument(format!("case {} is time-dependent", self.name()))),
        }
    }
}

fn anisotropic_diffusion() -> Coefficient {
    Coefficient::tensor(|x| {
        let d = 1e-4;
        let off = -(1.0 - d) * x[0] * x[1];
        [[x[0] * x[0] + d * x[1] * x[1], off], [off, x[1] * x[1] + d * x[0] * x[0]]]
    })
}
