//! Primal–dual active-set solver for the box-constrained mixed fourth-order
//! variational inequality.
//!
//! The discrete problem couples `U` (primal, constrained nodally to a box)
//! and `W` (chemical potential):
//!
//! ```text
//! θ M U + S_K U + A_M W            = rhs1     (every dof)
//!   M W − S U − 2 d r − rhs2       = μ        (μ = 0 off the active set)
//! α r − α dᵀU                      = r_hist − dᵀu_hist   (SAV only)
//! ```
//!
//! with `μ ≥ 0` where `U` sits on the upper bound and `μ ≤ 0` on the lower
//! bound.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linsolve::{dot, inf_norm, BlockSystem, KernelSolver};
use crate::space::{FeSpace, NodalVector};
use crate::sparse::SparseMatrix;

/// Nodal box `[a, b]`, enforced as `[a − tol_relax, b + tol_relax]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxBounds {
    pub a: f64,
    pub b: f64,
    pub tol_relax: f64,
}

impl BoxBounds {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        Self::relaxed_by(a, b, 0.0)
    }

    pub fn relaxed_by(a: f64, b: f64, tol_relax: f64) -> Result<Self> {
        if a.is_nan() || b.is_nan() || a >= b {
            return Err(Error::InvalidArgument(format!("bounds [{a}, {b}] must satisfy a < b")));
        }
        if !(tol_relax >= 0.0 && tol_relax.is_finite()) {
            return Err(Error::InvalidArgument(format!("relaxation {tol_relax} must be finite and non-negative")));
        }
        Ok(Self { a, b, tol_relax })
    }

    /// No constraint at all.
    pub fn unbounded() -> Self {
        Self { a: f64::NEG_INFINITY, b: f64::INFINITY, tol_relax: 0.0 }
    }

    pub fn lower(&self) -> f64 {
        self.a - self.tol_relax
    }

    pub fn upper(&self) -> f64 {
        self.b + self.tol_relax
    }

    /// Clamp to the unrelaxed box.
    pub fn clamp(&self, v: f64) -> f64 {
        v.max(self.a).min(self.b)
    }

    /// Membership in the relaxed box.
    pub fn admits(&self, v: f64) -> bool {
        v >= self.lower() && v <= self.upper()
    }

    /// `max(1, |a|, |b|)` over the finite bounds.
    pub fn magnitude(&self) -> f64 {
        [self.a, self.b]
            .iter()
            .filter(|v| v.is_finite())
            .fold(1.0f64, |m, v| m.max(v.abs()))
    }
}

pub type BoundFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Bounds that may depend on time.
#[derive(Clone)]
pub enum BoundSchedule {
    Fixed(BoxBounds),
    Timed { a: BoundFn, b: BoundFn, tol_relax: f64 },
}

impl fmt::Debug for BoundSchedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BoundSchedule::Fixed(b) => write!(f, "Fixed({b:?})"),
            BoundSchedule::Timed { tol_relax, .. } => write!(f, "Timed {{ tol_relax: {tol_relax} }}"),
        }
    }
}

impl BoundSchedule {
    pub fn timed(
        a: impl Fn(f64) -> f64 + Send + Sync + 'static,
        b: impl Fn(f64) -> f64 + Send + Sync + 'static,
        tol_relax: f64,
    ) -> Self {
        BoundSchedule::Timed { a: Arc::new(a), b: Arc::new(b), tol_relax }
    }

    pub fn at(&self, t: f64) -> Result<BoxBounds> {
        match self {
            BoundSchedule::Fixed(b) => Ok(*b),
            BoundSchedule::Timed { a, b, tol_relax } => BoxBounds::relaxed_by(a(t), b(t), *tol_relax),
        }
    }
}

impl From<BoxBounds> for BoundSchedule {
    fn from(b: BoxBounds) -> Self {
        BoundSchedule::Fixed(b)
    }
}

/// Scalar auxiliary variable coupling.
#[derive(Debug, Clone)]
pub struct SavCoupling {
    /// Loads of `f(ū) / (2 √E₁(ū))`.
    pub d: Vec<f64>,
    pub alpha: f64,
    /// History combination of the scalar variable.
    pub r_hist: f64,
    /// History combination of the primal dofs.
    pub u_hist: Vec<f64>,
}

impl SavCoupling {
    /// The scalar variable implied by `U` through the scalar relation.
    pub fn r_of(&self, u: &[f64]) -> f64 {
        let s: f64 = self.d.iter().zip(u.iter().zip(&self.u_hist)).map(|(d, (u, h))| d * (self.alpha * u - h)).sum();
        (self.r_hist + s) / self.alpha
    }
}

/// Algebraic description of one variational inequality solve.
#[derive(Debug, Clone)]
pub struct ViProblem {
    space: FeSpace,
    theta: f64,
    mass: SparseMatrix,
    mass_weights: Vec<f64>,
    a_m: SparseMatrix,
    s: SparseMatrix,
    s_k: Option<SparseMatrix>,
    rhs1: Vec<f64>,
    rhs2: Vec<f64>,
    sav: Option<SavCoupling>,
    bounds: BoxBounds,
    dirichlet: Vec<bool>,
}

impl ViProblem {
    /// `mass` is the consistent mass matrix, `a_m` the mobility stiffness and
    /// `s` the primal stiffness; all live on `space`.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        space: &FeSpace,
        theta: f64,
        mass: SparseMatrix,
        a_m: SparseMatrix,
        s: SparseMatrix,
        rhs1: Vec<f64>,
        rhs2: Vec<f64>,
        bounds: BoxBounds,
    ) -> Result<Self> {
        let n = space.n_dofs();
        for (name, m) in [("mass", &mass), ("mobility", &a_m), ("stiffness", &s)] {
            if m.nrows() != n || m.ncols() != n {
                return Err(Error::DimensionMismatch(format!("{name} matrix is {}x{}, expected {n}x{n}", m.nrows(), m.ncols())));
            }
        }
        if rhs1.len() != n || rhs2.len() != n {
            return Err(Error::DimensionMismatch("right-hand sides must have one entry per dof".into()));
        }
        if !(theta.is_finite() && theta >= 0.0) {
            return Err(Error::InvalidArgument(format!("mass weight θ = {theta} must be non-negative")));
        }
        if rhs1.iter().chain(&rhs2).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("right-hand sides must be finite".into()));
        }
        let mass_weights = mass.row_sums();
        Ok(Self {
            space: space.clone(),
            theta,
            mass,
            mass_weights,
            a_m,
            s,
            s_k: None,
            rhs1,
            rhs2,
            sav: None,
            bounds,
            dirichlet: Vec::new(),
        })
    }

    /// Adds `S_K U` to the first equation.
    pub fn with_extra_stiffness(mut self, s_k: SparseMatrix) -> Result<Self> {
        let n = self.n_dofs();
        if s_k.nrows() != n || s_k.ncols() != n {
            return Err(Error::DimensionMismatch("extra stiffness has the wrong size".into()));
        }
        self.s_k = Some(s_k);
        Ok(self)
    }

    pub fn with_sav(mut self, sav: SavCoupling) -> Result<Self> {
        let n = self.n_dofs();
        if sav.d.len() != n || sav.u_hist.len() != n {
            return Err(Error::DimensionMismatch("SAV vectors must have one entry per dof".into()));
        }
        if !(sav.alpha.is_finite() && sav.alpha > 0.0 && sav.r_hist.is_finite())
            || sav.d.iter().chain(&sav.u_hist).any(|v| !v.is_finite())
        {
            return Err(Error::InvalidArgument("SAV coupling must be finite with α > 0".into()));
        }
        self.sav = Some(sav);
        Ok(self)
    }

    /// Homogeneous Dirichlet conditions `U = W = 0` on the boundary dofs.
    pub fn with_dirichlet_boundary(mut self) -> Result<Self> {
        if !self.bounds.admits(0.0) {
            return Err(Error::Infeasible("zero boundary values violate the bounds".into()));
        }
        let mut mask = vec![false; self.n_dofs()];
        for i in self.space.boundary_dofs() {
            mask[i] = true;
        }
        self.dirichlet = mask;
        Ok(self)
    }

    pub fn space(&self) -> &FeSpace {
        &self.space
    }

    pub fn n_dofs(&self) -> usize {
        self.space.n_dofs()
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn bounds(&self) -> &BoxBounds {
        &self.bounds
    }

    pub fn mass(&self) -> &SparseMatrix {
        &self.mass
    }

    /// `∫φ_i`.
    pub fn mass_weights(&self) -> &[f64] {
        &self.mass_weights
    }

    pub fn mobility_matrix(&self) -> &SparseMatrix {
        &self.a_m
    }

    pub fn stiffness(&self) -> &SparseMatrix {
        &self.s
    }

    pub fn extra_stiffness(&self) -> Option<&SparseMatrix> {
        self.s_k.as_ref()
    }

    pub fn rhs1(&self) -> &[f64] {
        &self.rhs1
    }

    pub fn rhs2(&self) -> &[f64] {
        &self.rhs2
    }

    pub fn sav(&self) -> Option<&SavCoupling> {
        self.sav.as_ref()
    }

    /// True when no Dirichlet rows are present, so that testing the first
    /// equation with constants gives the mass identity.
    pub fn is_neumann(&self) -> bool {
        self.dirichlet.is_empty()
    }

    fn is_fixed(&self, i: usize) -> bool {
        !self.dirichlet.is_empty() && self.dirichlet[i]
    }

    /// The mass `∫u` the first equation forces, `Σ rhs1 / θ`.
    pub fn target_mass(&self) -> f64 {
        self.rhs1.iter().sum::<f64>() / self.theta
    }

    /// `M W − S U − 2 d r − rhs2`, the dual residual that defines `μ`.
    fn dual_residual(&self, u: &[f64], w: &[f64], r: Option<f64>) -> Vec<f64> {
        let mw = self.mass.mul_vec(w);
        let su = self.s.mul_vec(u);
        let mut out: Vec<f64> = (0..u.len()).map(|i| mw[i] - su[i] - self.rhs2[i]).collect();
        if let (Some(sav), Some(r)) = (&self.sav, r) {
            out.iter_mut().zip(&sav.d).for_each(|(o, d)| *o -= 2.0 * d * r);
        }
        out
    }

    fn dual_scale(&self, u: &[f64], w: &[f64]) -> f64 {
        inf_norm(&self.mass.mul_vec(w))
            + inf_norm(&self.s.mul_vec(u))
            + inf_norm(&self.rhs2)
            + self.mass.norm_inf() * self.bounds.magnitude()
    }
}

/// Primal–dual active-set parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PdasConfig {
    /// Threshold `c` in the active-set prediction `U + μ/c`.
    pub c: f64,
    pub max_iter: usize,
    /// Allow closing the system with `∫w = 0` when the active set covers
    /// every dof and `w` would otherwise be determined only up to a constant.
    pub fix_w_mean: bool,
    /// Required KKT residual at convergence.
    pub kkt_tol: f64,
}

impl Default for PdasConfig {
    fn default() -> Self {
        Self { c: 1e-2, max_iter: 50, fix_w_mean: true, kkt_tol: 1e-8 }
    }
}

impl PdasConfig {
    fn validate(&self) -> Result<()> {
        if !(self.c > 0.0 && self.c.is_finite()) || self.max_iter == 0 || !(self.kkt_tol > 0.0) {
            return Err(Error::InvalidArgument(format!("invalid PDAS configuration {self:?}")));
        }
        Ok(())
    }
}

/// History of one PDAS run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PdasReport {
    /// Number of linear solves.
    pub iterations: usize,
    /// Linear solves performed with a nonempty active set.
    pub active_iterations: usize,
    /// Lower active set used in each iteration.
    pub active_lower: Vec<Vec<usize>>,
    /// Upper active set used in each iteration.
    pub active_upper: Vec<Vec<usize>>,
    /// KKT residual after each iteration.
    pub kkt_history: Vec<f64>,
    pub kkt_residual: f64,
    pub converged: bool,
    /// Whether the `∫w = 0` row was attached in any iteration.
    pub mean_row_attached: bool,
}

/// Solution of a PDAS run; `report.converged` tells whether it may be used.
#[derive(Debug, Clone)]
pub struct PdasSolution {
    pub u: NodalVector,
    pub w: NodalVector,
    /// Multiplier as a load vector, `M W − S U − rhs₂` on active dofs.
    pub mu: NodalVector,
    /// Scalar auxiliary variable, when coupled.
    pub r: Option<f64>,
    pub report: PdasReport,
}

impl PdasSolution {
    /// Turns a non-converged run into [`Error::NotConverged`].
    pub fn into_converged(self) -> Result<Self> {
        if self.report.converged {
            Ok(self)
        } else {
            Err(Error::NotConverged(Box::new(self.report)))
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum Side {
    Free,
    Lower,
    Upper,
}

/// Relative distance to a bound below which an inactive dof is not moved to
/// the active set.
const CONTACT_TOL: f64 = 1e-12;

/// Solves the variational inequality with the primal–dual active-set method.
///
/// The first active set is read off `u_init`: dofs outside the relaxed box.
/// A run that exhausts `max_iter`, or whose sets repeat with a KKT residual
/// above tolerance, returns with `report.converged = false`.
pub fn pdas_solve(prob: &ViProblem, cfg: &PdasConfig, u_init: &NodalVector) -> Result<PdasSolution> {
    cfg.validate()?;
    let n = prob.n_dofs();
    if u_init.len() != n {
        return Err(Error::DimensionMismatch("initial guess has the wrong length".into()));
    }
    if u_init.values().iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("initial guess must be finite".into()));
    }
    if prob.theta == 0.0 && prob.is_neumann() {
        return Err(Error::InvalidArgument("θ = 0 needs Dirichlet rows to fix the constants".into()));
    }
    let (lo, hi) = (prob.bounds.lower(), prob.bounds.upper());
    let sides: Vec<Side> = (0..n)
        .map(|i| {
            let v = u_init.values()[i];
            if prob.is_fixed(i) || (lo..=hi).contains(&v) {
                Side::Free
            } else if v < lo {
                Side::Lower
            } else {
                Side::Upper
            }
        })
        .collect();
    run_pdas(prob, cfg, sides)
}

/// PDAS started from given active sets instead of an initial guess, e.g.
/// the converged sets of the previous time step.
pub fn pdas_solve_from_sets(
    prob: &ViProblem,
    cfg: &PdasConfig,
    lower: &[usize],
    upper: &[usize],
) -> Result<PdasSolution> {
    cfg.validate()?;
    let n = prob.n_dofs();
    if prob.theta == 0.0 && prob.is_neumann() {
        return Err(Error::InvalidArgument("θ = 0 needs Dirichlet rows to fix the constants".into()));
    }
    let mut sides = vec![Side::Free; n];
    for (set, side) in [(lower, Side::Lower), (upper, Side::Upper)] {
        for &i in set {
            if i >= n {
                return Err(Error::DimensionMismatch(format!("active dof {i} out of range")));
            }
            if sides[i] != Side::Free {
                return Err(Error::InvalidArgument(format!("dof {i} is in both active sets")));
            }
            if !prob.is_fixed(i) {
                sides[i] = side;
            }
        }
    }
    run_pdas(prob, cfg, sides)
}

fn run_pdas(prob: &ViProblem, cfg: &PdasConfig, mut sides: Vec<Side>) -> Result<PdasSolution> {
    let n = prob.n_dofs();
    let (lo, hi) = (prob.bounds.lower(), prob.bounds.upper());
    // Contact within rounding counts as a tie and keeps the dof inactive.
    let tie = CONTACT_TOL * prob.bounds.magnitude();
    let mut report = PdasReport::default();
    let mut last: Option<(Vec<f64>, Vec<f64>, Vec<f64>, Option<f64>)> = None;
    let mut visited: Vec<Vec<Side>> = Vec::new();
    for iter in 1..=cfg.max_iter {
        let (lower, upper) = collect_sets(&sides);
        let any_inactive = (0..n).any(|i| sides[i] == Side::Free && !prob.is_fixed(i));
        let mean_row = cfg.fix_w_mean && !any_inactive && prob.is_neumann();
        report.active_lower.push(lower.clone());
        report.active_upper.push(upper.clone());
        report.mean_row_attached |= mean_row;
        let label = format!(
            "PDAS iteration {iter} ({} lower-active, {} upper-active of {n} dofs{})",
            lower.len(),
            upper.len(),
            if mean_row { ", mean row attached" } else { "" }
        );
        let (u, w, r) = solve_linear(prob, &sides, mean_row, &label)?;
        report.iterations = iter;
        if !lower.is_empty() || !upper.is_empty() {
            report.active_iterations += 1;
        }

        let dual = prob.dual_residual(&u, &w, r);
        let mu: Vec<f64> = (0..n)
            .map(|i| if sides[i] == Side::Free || prob.is_fixed(i) { 0.0 } else { dual[i] })
            .collect();
        let kkt = kkt_residual_raw(prob, &u, &w, &mu);
        report.kkt_history.push(kkt);
        report.kkt_residual = kkt;

        let next: Vec<Side> = (0..n)
            .map(|i| {
                if prob.is_fixed(i) {
                    return Side::Free;
                }
                let pred = u[i] + mu[i] / cfg.c;
                // A dof never jumps straight to the opposite bound; it is
                // released first.
                match sides[i] {
                    _ if pred >= lo - tie && pred <= hi + tie => Side::Free,
                    Side::Upper if pred < lo - tie => Side::Free,
                    Side::Lower if pred > hi + tie => Side::Free,
                    _ if pred < lo - tie => Side::Lower,
                    _ => Side::Upper,
                }
            })
            .collect();
        let mut next = next;
        if prob.is_neumann() {
            release_for_mass(prob, &mut next, &u, &mu, cfg.c);
        }
        let same = next == sides;
        if !same && visited.contains(&next) {
            next = single_exchange(&sides, &next, &u, &mu, cfg.c, lo, hi, &visited);
        }
        last = Some((u, w, mu, r));
        if same {
            report.converged = kkt <= cfg.kkt_tol;
            break;
        }
        visited.push(sides);
        sides = next;
    }
    let (mut u, w, mu, r) = last.expect("at least one iteration");
    if report.converged {
        u.iter_mut().for_each(|v| *v = v.clamp(lo, hi));
    }
    let space = prob.space();
    Ok(PdasSolution {
        u: NodalVector::new(space, u)?,
        w: NodalVector::new(space, w)?,
        mu: NodalVector::new(space, mu)?,
        r,
        report,
    })
}

/// How far the prediction `u + μ/c` lies on the side that calls for the
/// move from `from` to `to`.
fn move_score(from: Side, to: Side, pred: f64, lo: f64, hi: f64) -> f64 {
    match (from, to) {
        (Side::Free, Side::Lower) => lo - pred,
        (Side::Free, Side::Upper) => pred - hi,
        (Side::Lower, _) => pred - lo,
        (Side::Upper, _) => hi - pred,
        _ => 0.0,
    }
}

/// Replaces a move to an already visited set by the single most violated
/// change that leads somewhere new.
#[allow(clippy::too_many_arguments)]
fn single_exchange(
    sides: &[Side],
    next: &[Side],
    u: &[f64],
    mu: &[f64],
    c: f64,
    lo: f64,
    hi: f64,
    visited: &[Vec<Side>],
) -> Vec<Side> {
    let mut moves: Vec<(f64, usize)> = (0..sides.len())
        .filter(|&i| sides[i] != next[i])
        .map(|i| (move_score(sides[i], next[i], u[i] + mu[i] / c, lo, hi), i))
        .collect();
    moves.sort_by(|a, b| b.0.total_cmp(&a.0));
    for &(_, i) in &moves {
        let mut cand = sides.to_vec();
        cand[i] = next[i];
        if !visited.contains(&cand) {
            return cand;
        }
    }
    next.to_vec()
}

/// With every dof active `u` is fixed and cannot carry the prescribed mass
/// unless the bounds happen to give it; release the dof that is least firmly
/// held on the side that has to move.
fn release_for_mass(prob: &ViProblem, next: &mut [Side], u: &[f64], mu: &[f64], c: f64) {
    let n = next.len();
    if (0..n).any(|i| next[i] == Side::Free && !prob.is_fixed(i)) {
        return;
    }
    let (lo, hi) = (prob.bounds.lower(), prob.bounds.upper());
    let mass: f64 = (0..n)
        .map(|i| {
            let v = match next[i] {
                _ if prob.is_fixed(i) => 0.0,
                Side::Lower => lo,
                Side::Upper => hi,
                Side::Free => 0.0,
            };
            prob.mass_weights[i] * v
        })
        .sum();
    let target = prob.target_mass();
    let measure: f64 = prob.mass_weights.iter().sum();
    let gap = target - mass;
    if gap.abs() <= 1e-12 * (measure * prob.bounds.magnitude() + target.abs()) {
        return;
    }
    // Raising the mass frees a lower-active dof, lowering it an upper one.
    let want = if gap > 0.0 { Side::Lower } else { Side::Upper };
    let pick = (0..n)
        .filter(|&i| next[i] == want && !prob.is_fixed(i))
        .min_by(|&a, &b| {
            let margin = |i: usize| {
                let pred = u[i] + mu[i] / c;
                if want == Side::Lower { lo - pred } else { pred - hi }
            };
            margin(a).total_cmp(&margin(b))
        });
    if let Some(i) = pick {
        next[i] = Side::Free;
    }
}

fn collect_sets(sides: &[Side]) -> (Vec<usize>, Vec<usize>) {
    let lower = (0..sides.len()).filter(|&i| sides[i] == Side::Lower).collect();
    let upper = (0..sides.len()).filter(|&i| sides[i] == Side::Upper).collect();
    (lower, upper)
}

/// Builds and solves the equality system for fixed active sets.
fn solve_linear(
    prob: &ViProblem,
    sides: &[Side],
    mean_row: bool,
    label: &str,
) -> Result<(Vec<f64>, Vec<f64>, Option<f64>)> {
    let n = prob.n_dofs();
    let mut sizes = vec![n, n];
    let sav_block = prob.sav.as_ref().map(|_| {
        sizes.push(1);
        sizes.len() - 1
    });
    let mean_block = mean_row.then(|| {
        sizes.push(1);
        sizes.len() - 1
    });
    let mut sys = BlockSystem::new(&sizes).with_label(label);
    let (lo, hi) = (prob.bounds.lower(), prob.bounds.upper());

    let free_rows: Vec<bool> = (0..n).map(|i| !prob.is_fixed(i)).collect();
    let inactive: Vec<bool> = (0..n).map(|i| sides[i] == Side::Free && !prob.is_fixed(i)).collect();

    // Where the mobility vanishes around an active dof, its W appears in no
    // equation and is not determined; such W are set to zero in place of the
    // first equation, whose row then only involves prescribed values.
    let a_tol = 1e-14 * prob.a_m.max_abs();
    let w_void: Vec<bool> = (0..n)
        .map(|i| {
            free_rows[i]
                && !inactive[i]
                && prob.a_m.row(i).1.iter().all(|v| v.abs() <= a_tol)
                && prob.mass.row(i).0.iter().all(|&j| !inactive[j])
        })
        .collect();
    let first_rows: Vec<bool> = (0..n).map(|i| free_rows[i] && !w_void[i]).collect();

    // First equation on every non-Dirichlet row; W = 0 on Dirichlet rows.
    sys.add_block(0, 0, &prob.mass, prob.theta, Some(&first_rows));
    if let Some(sk) = &prob.s_k {
        sys.add_block(0, 0, sk, 1.0, Some(&first_rows));
    }
    sys.add_block(0, 1, &prob.a_m, 1.0, Some(&first_rows));
    let fixed: Vec<bool> = free_rows.iter().map(|f| !f).collect();
    let w_off = sys.offset(1);
    for i in (0..n).filter(|&i| !first_rows[i]) {
        sys.add_entry(i, w_off + i, 1.0);
    }
    let mut rhs = vec![0.0; sys.dim()];
    for i in 0..n {
        rhs[i] = if first_rows[i] { prob.rhs1[i] } else { 0.0 };
    }

    // Second equation on inactive rows, bound rows on active and Dirichlet rows.
    sys.add_block(1, 1, &prob.mass, 1.0, Some(&inactive));
    sys.add_block(1, 0, &prob.s, -1.0, Some(&inactive));
    for i in 0..n {
        let row = w_off + i;
        if inactive[i] {
            rhs[row] = prob.rhs2[i];
        } else {
            sys.add_entry(row, i, 1.0);
            rhs[row] = match sides[i] {
                _ if fixed[i] => 0.0,
                Side::Lower => lo,
                Side::Upper => hi,
                Side::Free => unreachable!("inactive rows handled above"),
            };
        }
    }

    if let (Some(sav), Some(b)) = (&prob.sav, sav_block) {
        sys.add_column(1, b, &sav.d, -2.0, Some(&inactive));
        let o = sys.offset(b);
        sys.add_entry(o, o, sav.alpha);
        sys.add_row(b, 0, &sav.d, -sav.alpha);
        rhs[o] = sav.r_hist - dot(&sav.d, &sav.u_hist);
    }
    if let Some(b) = mean_block {
        sys.add_column(0, b, &prob.mass_weights, 1.0, Some(&first_rows));
        sys.add_row(b, 1, &prob.mass_weights, 1.0);
    }

    let x = sys.factor()?.solve(&rhs)?;
    let mut u = x[..n].to_vec();
    let w = x[n..2 * n].to_vec();
    let r = sav_block.map(|b| x[sys.offset(b)]);
    // Active and Dirichlet values are exact by construction.
    for i in 0..n {
        if fixed[i] {
            u[i] = 0.0;
        } else {
            match sides[i] {
                Side::Lower => u[i] = lo,
                Side::Upper => u[i] = hi,
                Side::Free => {}
            }
        }
    }
    Ok((u, w, r))
}

/// Relative KKT residual of a candidate `(u, w, μ)`: the largest of the
/// first-equation residual, the dual residual, complementarity and sign
/// violations of `μ`, and bound violation.
pub fn kkt_residual(prob: &ViProblem, u: &NodalVector, w: &NodalVector, mu: &NodalVector) -> f64 {
    kkt_residual_raw(prob, u.values(), w.values(), mu.values())
}

fn kkt_residual_raw(prob: &ViProblem, u: &[f64], w: &[f64], mu: &[f64]) -> f64 {
    let n = prob.n_dofs();
    let r = prob.sav.as_ref().map(|s| s.r_of(u));

    let tm = prob.mass.mul_vec(u);
    let sk = prob.s_k.as_ref().map(|m| m.mul_vec(u));
    let aw = prob.a_m.mul_vec(w);
    let mut eq1 = 0.0f64;
    let mut fixed_violation = 0.0f64;
    for i in 0..n {
        if prob.is_fixed(i) {
            fixed_violation = fixed_violation.max(u[i].abs()).max(w[i].abs());
            continue;
        }
        let mut res = prob.theta * tm[i] + aw[i] - prob.rhs1[i];
        if let Some(sk) = &sk {
            res += sk[i];
        }
        eq1 = eq1.max(res.abs());
    }
    let scale1 = prob.theta * inf_norm(&tm)
        + sk.as_ref().map_or(0.0, |v| inf_norm(v))
        + inf_norm(&aw)
        + inf_norm(&prob.rhs1)
        + prob.theta * prob.mass.norm_inf() * prob.bounds.magnitude();
    let eq1 = eq1 / scale1;

    let dual = prob.dual_residual(u, w, r);
    let scale2 = prob.dual_scale(u, w);
    let (lo, hi) = (prob.bounds.lower(), prob.bounds.upper());
    let mut eq2 = 0.0f64;
    let mut comp = 0.0f64;
    let mut bound = 0.0f64;
    for i in 0..n {
        if prob.is_fixed(i) {
            continue;
        }
        eq2 = eq2.max((dual[i] - mu[i]).abs());
        let at_lo = lo.is_finite() && (u[i] - lo).abs() <= 1e-12 * (1.0 + lo.abs());
        let at_hi = hi.is_finite() && (u[i] - hi).abs() <= 1e-12 * (1.0 + hi.abs());
        let v = if at_lo {
            mu[i].max(0.0)
        } else if at_hi {
            (-mu[i]).max(0.0)
        } else {
            mu[i].abs()
        };
        comp = comp.max(v);
        bound = bound.max(lo - u[i]).max(u[i] - hi);
    }
    let mag = prob.bounds.magnitude();
    [eq1, eq2 / scale2, comp / scale2, bound.max(0.0) / mag, fixed_violation / mag]
        .into_iter()
        .fold(0.0, f64::max)
}

/// Evaluates the convex objective whose constrained minimizer solves the
/// variational inequality.
#[derive(Debug)]
pub struct Objective<'a> {
    prob: &'a ViProblem,
    inverse: KernelSolver,
}

impl<'a> Objective<'a> {
    pub fn new(prob: &'a ViProblem) -> Result<Self> {
        if prob.s_k.is_some() {
            return Err(Error::InvalidArgument(
                "problems with an extra primal stiffness have no minimization structure".into(),
            ));
        }
        if !prob.is_neumann() || prob.theta == 0.0 {
            return Err(Error::InvalidArgument("objective is only defined for Neumann problems with θ > 0".into()));
        }
        let inverse = KernelSolver::new(&prob.a_m, Some(&prob.mass_weights), "mobility inverse")?;
        Ok(Self { prob, inverse })
    }

    /// `½ vᵀSv + rhs2ᵀv + (1/2θ) gᵀA_M⁻¹g (+ s(v)²)` with `g = θMv − rhs1`.
    pub fn value(&self, v: &[f64]) -> Result<f64> {
        let p = self.prob;
        if v.len() != p.n_dofs() {
            return Err(Error::DimensionMismatch("vector has the wrong length".into()));
        }
        let mass = dot(&p.mass_weights, v);
        let target = p.target_mass();
        let measure: f64 = p.mass_weights.iter().sum();
        if (mass - target).abs() > 1e-9 * (measure + target.abs()) {
            return Err(Error::MassConstraint(format!("∫v = {mass}, required {target}")));
        }
        let mv = p.mass.mul_vec(v);
        let mut g: Vec<f64> = mv.iter().zip(&p.rhs1).map(|(m, r)| p.theta * m - r).collect();
        // Remove the rounding-level mean so the mean-free check passes.
        let total: f64 = g.iter().sum();
        let wsum = measure;
        g.iter_mut().zip(&p.mass_weights).for_each(|(gi, m)| *gi -= total * m / wsum);
        let z = self.inverse.solve(&g)?;
        let mut j = 0.5 * p.s.form(v, v) + dot(&p.rhs2, v) + dot(&g, &z) / (2.0 * p.theta);
        if let Some(sav) = &p.sav {
            let s = sav.r_of(v);
            j += s * s;
        }
        Ok(j)
    }
}

/// Objective value of `v` (see [`Objective::value`]).
pub fn energy_value(prob: &ViProblem, v: &NodalVector) -> Result<f64> {
    Objective::new(prob)?.value(v.values())
}
