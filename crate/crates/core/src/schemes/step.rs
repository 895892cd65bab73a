use std::fmt;
use std::sync::Arc;

use crate::assembly::{assemble_load, assemble_mass, assemble_stiffness, Coefficient};
use crate::error::{Error, Result};
use crate::space::{FeSpace, NodalVector};
use crate::sparse::SparseMatrix;
use crate::vi::{pdas_solve, pdas_solve_from_sets, BoundSchedule, PdasConfig, PdasReport, SavCoupling, ViProblem};

use super::bdf::{bdf_table, BdfTable};
use super::init::{sav_energy, sav_init};
use super::state::{extrapolate_clamped, TimeState};

/// Coefficient depending on the state value, position and time: `(u, x, t)`.
pub type StateFn = Arc<dyn Fn(f64, &[f64], f64) -> f64 + Send + Sync>;
/// Space–time data `(x, t)`.
pub type SourceFn = Arc<dyn Fn(&[f64], f64) -> f64 + Send + Sync>;
pub type PotentialFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Potential `F`, its derivative `f = F'`, and the shift `C₀` of
/// `E₁(v) = ∫F(v) + C₀`.
#[derive(Clone)]
pub struct SavConfig {
    pub potential: PotentialFn,
    pub derivative: PotentialFn,
    pub c0: f64,
}

impl SavConfig {
    pub fn new(
        potential: impl Fn(f64) -> f64 + Send + Sync + 'static,
        derivative: impl Fn(f64) -> f64 + Send + Sync + 'static,
        c0: f64,
    ) -> Self {
        Self { potential: Arc::new(potential), derivative: Arc::new(derivative), c0 }
    }
}

impl fmt::Debug for SavConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SavConfig {{ c0: {} }}", self.c0)
    }
}

/// Which discrete evolution is advanced.
#[derive(Clone)]
pub enum Scheme {
    /// `u_t = ∇·(M(u)∇w)`, `w = −κΔu`.
    FourthOrder { mobility: StateFn, kappa: f64 },
    /// `u_t = ∇·(M(u)∇w)`, `w = −κΔu + f(u)` with the scalar auxiliary variable.
    Sav { mobility: StateFn, kappa: f64, sav: SavConfig },
    /// `u_t = ∇·(K(u)∇u)` regularized by `√ε` fourth-order terms, `ε = h^{p+1}`.
    SecondOrder { diffusion: StateFn },
}

impl fmt::Debug for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scheme::FourthOrder { kappa, .. } => write!(f, "FourthOrder {{ kappa: {kappa} }}"),
            Scheme::Sav { kappa, sav, .. } => write!(f, "Sav {{ kappa: {kappa}, {sav:?} }}"),
            Scheme::SecondOrder { .. } => write!(f, "SecondOrder"),
        }
    }
}

/// An evolution problem: scheme, optional source in the first equation, and
/// (possibly time-dependent) bounds.
#[derive(Clone)]
pub struct Model {
    pub scheme: Scheme,
    pub source: Option<SourceFn>,
    pub bounds: BoundSchedule,
}

impl fmt::Debug for Model {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Model")
            .field("scheme", &self.scheme)
            .field("has_source", &self.source.is_some())
            .field("bounds", &self.bounds)
            .finish()
    }
}

impl Model {
    pub fn new(scheme: Scheme, bounds: impl Into<BoundSchedule>) -> Self {
        Self { scheme, source: None, bounds: bounds.into() }
    }

    pub fn with_source(mut self, f: impl Fn(&[f64], f64) -> f64 + Send + Sync + 'static) -> Self {
        self.source = Some(Arc::new(f));
        self
    }

    pub fn sav(&self) -> Option<&SavConfig> {
        match &self.scheme {
            Scheme::Sav { sav, .. } => Some(sav),
            _ => None,
        }
    }

    /// Coefficient in front of `½‖∇u‖²` in the natural energy.
    pub fn kappa(&self) -> f64 {
        match &self.scheme {
            Scheme::FourthOrder { kappa, .. } | Scheme::Sav { kappa, .. } => *kappa,
            Scheme::SecondOrder { .. } => 1.0,
        }
    }
}

/// Matrices shared by every step on one space.
#[derive(Debug, Clone)]
pub struct Discretization {
    space: FeSpace,
    mass: SparseMatrix,
    laplace: SparseMatrix,
}

impl Discretization {
    pub fn new(space: &FeSpace) -> Result<Self> {
        let one = Coefficient::constant(1.0);
        Ok(Self {
            space: space.clone(),
            mass: assemble_mass(space, &one)?,
            laplace: assemble_stiffness(space, &one)?,
        })
    }

    pub fn space(&self) -> &FeSpace {
        &self.space
    }

    pub fn mass(&self) -> &SparseMatrix {
        &self.mass
    }

    /// Unit-coefficient stiffness matrix.
    pub fn laplace(&self) -> &SparseMatrix {
        &self.laplace
    }

    /// `ε = h^{p+1}` with `h` the largest cell diameter.
    pub fn regularization(&self) -> f64 {
        self.space.mesh().max_cell_diameter().powi(self.space.order() as i32 + 1)
    }
}

fn state_coefficient(ubar: &NodalVector, f: &StateFn, t: f64) -> Coefficient {
    let f = f.clone();
    Coefficient::field(ubar.clone(), move |u, x| f(u, x, t))
}

/// Builds the variational inequality of one BDF step without solving it.
/// Returns the problem and the clamped extrapolation used as initial guess.
pub fn build_step_problem(
    disc: &Discretization,
    state: &TimeState,
    tbl: &BdfTable,
    model: &Model,
) -> Result<(ViProblem, NodalVector)> {
    let space = disc.space();
    let t1 = state.t + state.tau;
    let bounds = model.bounds.at(t1)?;
    let ubar = extrapolate_clamped(state, tbl, &bounds)?;
    let views = state.views(tbl.k)?;
    let hist = tbl.history_combination(&views);
    let tau = state.tau;
    let theta = tbl.alpha_f64() / tau;
    let mut rhs1: Vec<f64> = disc.mass.mul_vec(&hist).into_iter().map(|v| v / tau).collect();
    if let Some(f) = &model.source {
        let f = f.clone();
        let load = assemble_load(space, &Coefficient::scalar(move |x| f(x, t1)))?;
        rhs1.iter_mut().zip(load.values()).for_each(|(r, l)| *r += l);
    }
    let rhs2 = vec![0.0; space.n_dofs()];
    let prob = match &model.scheme {
        Scheme::FourthOrder { mobility, kappa } => {
            let a_m = assemble_stiffness(space, &state_coefficient(&ubar, mobility, t1))?;
            ViProblem::new(space, theta, disc.mass.clone(), a_m, disc.laplace.scaled(*kappa), rhs1, rhs2, bounds)?
        }
        Scheme::Sav { mobility, kappa, sav } => {
            let a_m = assemble_stiffness(space, &state_coefficient(&ubar, mobility, t1))?;
            let e1 = sav_energy(&ubar, sav)?;
            if !(e1 > 0.0) {
                return Err(Error::NonPositiveEnergy { value: e1, c0: sav.c0 });
            }
            let fd = sav.derivative.clone();
            let scale = 1.0 / (2.0 * e1.sqrt());
            let d: Vec<f64> = assemble_load(space, &Coefficient::field(ubar.clone(), move |u, _| fd(u)))?
                .into_values()
                .into_iter()
                .map(|v| v * scale)
                .collect();
            if state.r_history().len() < tbl.k {
                return Err(Error::InvalidArgument("scalar auxiliary history is too short".into()));
            }
            let coupling = SavCoupling {
                d,
                alpha: tbl.alpha_f64(),
                r_hist: tbl.scalar_history(state.r_history()),
                u_hist: hist.clone(),
            };
            ViProblem::new(space, theta, disc.mass.clone(), a_m, disc.laplace.scaled(*kappa), rhs1, rhs2, bounds)?
                .with_sav(coupling)?
        }
        Scheme::SecondOrder { diffusion } => {
            let sq = disc.regularization().sqrt();
            let s_k = assemble_stiffness(space, &state_coefficient(&ubar, diffusion, t1))?;
            let l = disc.laplace.scaled(sq);
            ViProblem::new(space, theta, disc.mass.clone(), l.clone(), l, rhs1, rhs2, bounds)?.with_extra_stiffness(s_k)?
        }
    };
    Ok((prob, ubar))
}

/// History length kept by the steppers (enough for BDF5).
const KEEP: usize = 5;

/// Advances `state` by one BDF-k step of `model`.
pub fn step(
    disc: &Discretization,
    state: &TimeState,
    tbl: &BdfTable,
    model: &Model,
    cfg: &PdasConfig,
) -> Result<(TimeState, PdasReport)> {
    let (prob, ubar) = build_step_problem(disc, state, tbl, model)?;
    let sol = match state.active_sets() {
        Some((lower, upper)) => pdas_solve_from_sets(&prob, cfg, lower, upper)?,
        None => pdas_solve(&prob, cfg, &ubar)?,
    }
    .into_converged()?;
    let mut next = state.clone();
    let last = |sets: &[Vec<usize>]| sets.last().cloned().unwrap_or_default();
    next.set_active_sets(Some((last(&sol.report.active_lower), last(&sol.report.active_upper))));
    next.push(sol.u, sol.r, KEEP);
    Ok((next, sol.report))
}

fn expect_scheme(model: &Model, want: &str) -> Result<()> {
    let ok = matches!(
        (&model.scheme, want),
        (Scheme::FourthOrder { .. }, "fourth") | (Scheme::Sav { .. }, "sav") | (Scheme::SecondOrder { .. }, "second")
    );
    if ok {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("model {:?} does not match this stepper", model.scheme)))
    }
}

/// One step of the potential-free fourth-order scheme.
pub fn step_fourth_order(
    disc: &Discretization,
    state: &TimeState,
    tbl: &BdfTable,
    model: &Model,
    cfg: &PdasConfig,
) -> Result<(TimeState, PdasReport)> {
    expect_scheme(model, "fourth")?;
    step(disc, state, tbl, model, cfg)
}

/// One step of the scalar-auxiliary-variable scheme.
pub fn step_sav(
    disc: &Discretization,
    state: &TimeState,
    tbl: &BdfTable,
    model: &Model,
    cfg: &PdasConfig,
) -> Result<(TimeState, PdasReport)> {
    expect_scheme(model, "sav")?;
    step(disc, state, tbl, model, cfg)
}

/// One step of the regularized second-order scheme.
pub fn step_second_order(
    disc: &Discretization,
    state: &TimeState,
    tbl: &BdfTable,
    model: &Model,
    cfg: &PdasConfig,
) -> Result<(TimeState, PdasReport)> {
    expect_scheme(model, "second")?;
    step(disc, state, tbl, model, cfg)
}

/// What the integrator hands to its observer after every accepted step.
#[derive(Debug)]
pub struct StepRecord<'a> {
    pub t: f64,
    pub u: &'a NodalVector,
    pub r: Option<f64>,
    pub report: &'a PdasReport,
    /// True for the BDF1 start-up steps.
    pub warmup: bool,
}

/// Runs BDF-k with a BDF1 start-up.
#[derive(Debug, Clone)]
pub struct Integrator {
    pub disc: Discretization,
    pub model: Model,
    pub k: usize,
    pub cfg: PdasConfig,
    /// Each start-up step is split into this many BDF1 substeps.
    pub warmup_substeps: usize,
}

impl Integrator {
    pub fn new(space: &FeSpace, model: Model, k: usize, cfg: PdasConfig) -> Result<Self> {
        bdf_table(k)?;
        Ok(Self { disc: Discretization::new(space)?, model, k, cfg, warmup_substeps: 1 })
    }

    pub fn with_warmup_substeps(mut self, s: usize) -> Self {
        self.warmup_substeps = s.max(1);
        self
    }

    /// Initial state; for the SAV scheme `r⁰ = √E₁(u⁰)`. Dofs of `u0` on the
    /// bounds form the first active sets.
    pub fn start(&self, u0: NodalVector, t0: f64, tau: f64) -> Result<TimeState> {
        let b = self.model.bounds.at(t0)?;
        let on = |pred: &dyn Fn(f64) -> bool| -> Vec<usize> {
            u0.values().iter().enumerate().filter(|(_, v)| pred(**v)).map(|(i, _)| i).collect()
        };
        // Dofs of the initial state in contact with the box start active.
        let sets = (on(&|v| v <= b.a), on(&|v| v >= b.b));
        let mut st = TimeState::new(u0, t0, tau)?;
        st.set_active_sets(Some(sets));
        if let Some(sav) = self.model.sav() {
            st.set_r_history(vec![sav_init(st.current(), sav)?]);
        }
        Ok(st)
    }

    /// Advances `n_steps` steps of size `tau` from `u0` at `t0`, calling
    /// `observe` after every accepted step (including start-up substeps).
    pub fn run(
        &self,
        u0: NodalVector,
        t0: f64,
        tau: f64,
        n_steps: usize,
        mut observe: impl FnMut(&StepRecord),
    ) -> Result<TimeState> {
        let mut state = self.start(u0, t0, tau)?;
        let bdf1 = bdf_table(1)?;
        let tbl = bdf_table(self.k)?;
        for n in 0..n_steps {
            if n + 1 < self.k {
                let s = self.warmup_substeps;
                let mut sub = TimeState::from_history(
                    vec![state.current().clone()],
                    state.r().into_iter().collect(),
                    state.t,
                    tau / s as f64,
                )?;
                sub.set_active_sets(state.active_sets().map(|(l, u)| (l.to_vec(), u.to_vec())));
                for _ in 0..s {
                    let (next, report) = step(&self.disc, &sub, &bdf1, &self.model, &self.cfg)?;
                    sub = next;
                    observe(&StepRecord { t: sub.t, u: sub.current(), r: sub.r(), report: &report, warmup: true });
                }
                let r = match self.model.sav() {
                    // Start-up values of r are re-initialized from the state.
                    Some(sav) => Some(sav_init(sub.current(), sav)?),
                    None => None,
                };
                state.set_active_sets(sub.active_sets().map(|(l, u)| (l.to_vec(), u.to_vec())));
                state.push(sub.current().clone(), r, KEEP);
                state.t = t0 + (n + 1) as f64 * tau;
            } else {
                let (next, report) = step(&self.disc, &state, &tbl, &self.model, &self.cfg)?;
                state = next;
                state.t = t0 + (n + 1) as f64 * tau;
                observe(&StepRecord { t: state.t, u: state.current(), r: state.r(), report: &report, warmup: false });
            }
        }
        Ok(state)
    }
}

/// Number of uniform steps and their size to reach `t_end` from `t0` with
/// steps no longer than `tau_max`.
pub fn uniform_steps(t0: f64, t_end: f64, tau_max: f64) -> (usize, f64) {
    let n = ((t_end - t0) / tau_max - 1e-9).ceil().max(1.0) as usize;
    (n, (t_end - t0) / n as f64)
}
