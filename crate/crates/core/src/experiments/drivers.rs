use std::fmt;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::cases::{Case, PdeKind, SolutionInfo};
use crate::assembly::{integrate, Coefficient};
use crate::error::{Error, Result};
use crate::schemes::{bdf_table, uniform_steps, Integrator, SourceFn};
use crate::space::{build_space, FeSpace, NodalVector};
use crate::structure::{diagnostics, eoc, error_norms, error_norms_reference};
use crate::vi::{BoundSchedule, BoxBounds, PdasConfig, PdasReport};

/// Time step as a function of the mesh size: `h`, `h/d`, or a fixed value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TauRule {
    MeshFraction(f64),
    Fixed(f64),
}

impl TauRule {
    /// Parses `h`, `h/<positive number>` or a positive literal.
    pub fn parse(s: &str) -> Result<TauRule> {
        let s = s.trim();
        let bad = || Error::InvalidArgument(format!("time step rule '{s}' is not 'h', 'h/<number>' or a number"));
        let positive = |v: &str| v.trim().parse::<f64>().ok().filter(|x| *x > 0.0 && x.is_finite());
        if s == "h" {
            Ok(TauRule::MeshFraction(1.0))
        } else if let Some(d) = s.strip_prefix("h/") {
            positive(d).map(TauRule::MeshFraction).ok_or_else(bad)
        } else {
            positive(s).map(TauRule::Fixed).ok_or_else(bad)
        }
    }

    pub fn tau(&self, h: f64) -> f64 {
        match self {
            TauRule::MeshFraction(d) => h / d,
            TauRule::Fixed(t) => *t,
        }
    }
}

impl fmt::Display for TauRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TauRule::MeshFraction(d) if *d == 1.0 => write!(f, "h"),
            TauRule::MeshFraction(d) => write!(f, "h/{d}"),
            TauRule::Fixed(t) => write!(f, "{t:e}"),
        }
    }
}

impl Serialize for TauRule {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for TauRule {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        TauRule::parse(&s).map_err(serde::de::Error::custom)
    }
}

/// Discretization and solver settings of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSettings {
    pub p: usize,
    pub k: usize,
    pub tau: TauRule,
    /// Overrides the case's relaxation of the bounds.
    pub tol_relax: Option<f64>,
    /// Overrides the case's box `[a, b]`.
    pub bounds: Option<(f64, f64)>,
    pub pdas: PdasConfig,
    pub warmup_substeps: usize,
    /// Refinement levels run concurrently.
    pub jobs: usize,
}

impl Default for RunSettings {
    fn default() -> Self {
        Self {
            p: 1,
            k: 2,
            tau: TauRule::MeshFraction(2.0),
            tol_relax: None,
            bounds: None,
            pdas: PdasConfig::default(),
            warmup_substeps: 1,
            jobs: 1,
        }
    }
}

impl RunSettings {
    fn tol_relax(&self, case: &Case) -> f64 {
        self.tol_relax.unwrap_or_else(|| case.default_tol_relax())
    }

    /// The box schedule of `case` under these settings.
    pub fn bounds_for(&self, case: &Case) -> Result<BoundSchedule> {
        let tol = self.tol_relax(case);
        match self.bounds {
            Some((a, b)) => Ok(BoxBounds::relaxed_by(a, b, tol)?.into()),
            None => case.bounds(tol),
        }
    }
}

/// Diagnostics after one accepted step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRow {
    pub t: f64,
    pub mass: f64,
    /// Distance of the mass from its discrete balance (initial mass plus the
    /// integrated source).
    pub mass_error: f64,
    pub min_u: f64,
    pub max_u: f64,
    pub energy: f64,
    pub modified_energy: Option<f64>,
    pub pdas_iters: usize,
    pub active_iters: usize,
    /// Nodes outside the relaxed box.
    pub bound_violations: usize,
    pub warmup: bool,
}

/// Outcome on one mesh.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelResult {
    pub cells: usize,
    pub h: f64,
    pub tau: Option<f64>,
    pub steps: usize,
    pub dofs: usize,
    pub l2_rel: Option<f64>,
    pub h1_rel: Option<f64>,
    pub pdas_max_iter: usize,
    /// Initial mass of a trajectory, `∫u` of a stationary solution.
    pub mass: f64,
    pub mass_error: f64,
    pub min_u: f64,
    pub max_u: f64,
    pub bound_violations: usize,
    pub error: Option<String>,
    /// Report of the PDAS run that failed to converge, if that was the error.
    pub pdas_failure: Option<PdasReport>,
    pub wall_time: f64,
}

impl LevelResult {
    fn failed(cells: usize, h: f64, err: &Error, wall_time: f64) -> Self {
        Self {
            cells,
            h,
            tau: None,
            steps: 0,
            dofs: 0,
            l2_rel: None,
            h1_rel: None,
            pdas_max_iter: 0,
            mass: f64::NAN,
            mass_error: f64::NAN,
            min_u: f64::NAN,
            max_u: f64::NAN,
            bound_violations: 0,
            error: Some(err.to_string()),
            pdas_failure: match err {
                Error::NotConverged(r) => Some((**r).clone()),
                _ => None,
            },
            wall_time,
        }
    }
}

/// Minimum of the constrained solution of the Dirichlet positivity problem
/// and of the plain finite element solution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PositivityReport {
    pub constrained_min: f64,
    pub unconstrained_min: f64,
    /// Unconstrained nodes at or below `−1e-6`.
    pub unconstrained_negative_nodes: usize,
    /// Constrained nodes below `−1e-12`.
    pub constrained_negative_nodes: usize,
}

/// Everything a run produces.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunResult {
    pub case: String,
    pub description: String,
    pub p: usize,
    pub k: Option<usize>,
    pub seed: Option<u64>,
    pub tau_rule: Option<String>,
    /// Sorted by decreasing `h`.
    pub levels: Vec<LevelResult>,
    pub eoc_l2: Vec<f64>,
    pub eoc_h1: Vec<f64>,
    pub steps: Vec<StepRow>,
    pub positivity: Option<PositivityReport>,
    pub pdas_max_iter: usize,
    pub wall_time: f64,
    #[serde(skip)]
    pub final_state: Option<NodalVector>,
}

impl RunResult {
    fn new(case: &Case, settings: &RunSettings) -> Self {
        let time_dependent = !case.is_stationary();
        Self {
            case: case.name().to_string(),
            description: case.description(),
            p: settings.p,
            k: time_dependent.then_some(settings.k),
            seed: match case {
                Case::ChLogarithmic { seed } => Some(*seed),
                _ => None,
            },
            tau_rule: time_dependent.then(|| settings.tau.to_string()),
            levels: Vec::new(),
            eoc_l2: Vec::new(),
            eoc_h1: Vec::new(),
            steps: Vec::new(),
            positivity: None,
            pdas_max_iter: 0,
            wall_time: 0.0,
            final_state: None,
        }
    }

    fn finish(&mut self, started: Instant) {
        self.pdas_max_iter = self
            .levels
            .iter()
            .map(|l| l.pdas_max_iter)
            .chain(self.steps.iter().map(|s| s.pdas_iters))
            .max()
            .unwrap_or(0);
        let ok: Vec<&LevelResult> = self.levels.iter().filter(|l| l.error.is_none()).collect();
        let pairs = |f: fn(&LevelResult) -> Option<f64>| -> Vec<(f64, f64)> {
            ok.iter().filter_map(|l| f(l).map(|e| (l.h, e))).collect()
        };
        self.eoc_l2 = eoc(&pairs(|l| l.l2_rel)).unwrap_or_default();
        self.eoc_h1 = eoc(&pairs(|l| l.h1_rel)).unwrap_or_default();
        self.wall_time = started.elapsed().as_secs_f64();
    }

    /// Violations of the structural guarantees: bounds, mass balance, and
    /// the PDAS iteration cap `max_iter`.
    pub fn invariant_violations(&self, max_iter: usize) -> Vec<String> {
        let mut out = Vec::new();
        for l in &self.levels {
            if let Some(e) = &l.error {
                out.push(format!("{} cells: {e}", l.cells));
                continue;
            }
            if l.bound_violations > 0 {
                out.push(format!("{} cells: {} bound violations", l.cells, l.bound_violations));
            }
            if !(l.mass_error <= 1e-9 * (1.0 + l.mass.abs())) {
                out.push(format!("{} cells: mass error {:e}", l.cells, l.mass_error));
            }
        }
        if self.pdas_max_iter > max_iter {
            out.push(format!("PDAS needed {} iterations", self.pdas_max_iter));
        }
        out
    }
}

/// Largest cell width, the `h` of the time step rule and of the rates.
fn mesh_size(space: &FeSpace) -> f64 {
    let mesh = space.mesh();
    (0..mesh.dim()).map(|a| mesh.h(a)).fold(0.0, f64::max)
}

fn count_violations(u: &NodalVector, b: &BoxBounds) -> usize {
    u.values().iter().filter(|&&v| !b.admits(v)).count()
}

/// A single trajectory of a time-dependent case.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub rows: Vec<StepRow>,
    pub initial: NodalVector,
    pub initial_mass: f64,
    pub final_state: NodalVector,
    pub tau: f64,
    pub steps: usize,
}

/// Mass predicted by the discrete balance `α Mⁿ⁺¹ = Σ a_j Mⁿ⁻ʲ + τ ∫f₁(tⁿ⁺¹)`.
struct MassBalance {
    grid: Vec<f64>,
    last: f64,
    source: Option<SourceFn>,
    space: FeSpace,
}

impl MassBalance {
    fn source_integral(&self, t: f64) -> Result<f64> {
        match &self.source {
            Some(f) => {
                let f = f.clone();
                integrate(&self.space, &Coefficient::scalar(move |x| f(x, t)))
            }
            None => Ok(0.0),
        }
    }
}

/// Runs `case` on a mesh with `cells` cells per axis up to its final time.
/// `tau` overrides the time step rule.
pub fn integrate_case(case: &Case, settings: &RunSettings, cells: usize, tau: Option<f64>) -> Result<Trajectory> {
    let t_end = case
        .t_end()
        .ok_or_else(|| Error::InvalidArgument(format!("case {} is stationary", case.name())))?;
    let space = build_space(&case.mesh(cells)?, settings.p)?;
    let tol = settings.tol_relax(case);
    let mut model = case.model(tol)?;
    model.bounds = settings.bounds_for(case)?;
    let source = model.source.clone();
    let bounds = model.bounds.clone();
    let kappa = case.kappa();
    let sav = case.sav();
    let u0 = case.initial(&space, tol, &settings.pdas)?;
    let (n_steps, tau) = uniform_steps(0.0, t_end, tau.unwrap_or_else(|| settings.tau.tau(mesh_size(&space))));
    let integrator = Integrator::new(&space, model, settings.k, settings.pdas)?.with_warmup_substeps(settings.warmup_substeps);
    let tbl = bdf_table(settings.k)?;
    let (alpha, a) = (tbl.alpha_f64(), tbl.a_f64());
    let sub_tau = tau / settings.warmup_substeps.max(1) as f64;
    let m0 = diagnostics(&u0, 0.0, kappa, None)?.mass;
    let mut balance = MassBalance { grid: vec![m0], last: m0, source, space: space.clone() };
    let mut rows = Vec::with_capacity(n_steps);
    let mut failure: Option<Error> = None;
    let mut grid_index = 0usize;
    let observe = |rec: &crate::schemes::StepRecord| {
        if failure.is_some() {
            return;
        }
        let row = (|| -> Result<StepRow> {
            let d = diagnostics(rec.u, rec.t, kappa, sav.as_ref().map(|s| (s, rec.r)))?;
            let f = balance.source_integral(rec.t)?;
            let on_grid = if rec.warmup {
                let next = (grid_index + 1) as f64 * tau;
                (rec.t - next).abs() <= 1e-9 * tau
            } else {
                true
            };
            let expected = if rec.warmup {
                balance.last + sub_tau * f
            } else {
                let hist: f64 = a.iter().zip(&balance.grid).map(|(aj, mj)| aj * mj).sum();
                (hist + tau * f) / alpha
            };
            balance.last = expected;
            if on_grid {
                balance.grid.insert(0, expected);
                balance.grid.truncate(5);
                grid_index += 1;
            }
            let b = bounds.at(rec.t)?;
            Ok(StepRow {
                t: rec.t,
                mass: d.mass,
                mass_error: (d.mass - expected).abs(),
                min_u: d.min,
                max_u: d.max,
                energy: d.energy,
                modified_energy: d.modified_energy,
                pdas_iters: rec.report.iterations,
                active_iters: rec.report.active_iterations,
                bound_violations: count_violations(rec.u, &b),
                warmup: rec.warmup,
            })
        })();
        match row {
            Ok(r) => rows.push(r),
            Err(e) => failure = Some(e),
        }
    };
    let end = integrator.run(u0.clone(), 0.0, tau, n_steps, observe)?;
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(Trajectory { rows, initial: u0, initial_mass: m0, final_state: end.current().clone(), tau, steps: n_steps })
}

fn trajectory_level(case: &Case, settings: &RunSettings, cells: usize) -> LevelResult {
    let started = Instant::now();
    let run = || -> Result<LevelResult> {
        let tr = integrate_case(case, settings, cells, None)?;
        let t_end = case.t_end().unwrap_or(0.0);
        let u = &tr.final_state;
        let (l2, h1) = match case.solution_info() {
            SolutionInfo::Exact => {
                let e = error_norms(u, |x, t| case.exact(x, t).expect("exact solution"), t_end);
                (Some(e.l2_rel), Some(e.h1_rel))
            }
            _ => (None, None),
        };
        Ok(LevelResult {
            cells,
            h: mesh_size(u.space()),
            tau: Some(tr.tau),
            steps: tr.steps,
            dofs: u.len(),
            l2_rel: l2,
            h1_rel: h1,
            pdas_max_iter: tr.rows.iter().map(|r| r.pdas_iters).max().unwrap_or(0),
            mass: tr.initial_mass,
            mass_error: tr.rows.iter().map(|r| r.mass_error).fold(0.0, f64::max),
            min_u: tr.rows.iter().map(|r| r.min_u).fold(tr.initial.min(), f64::min),
            max_u: tr.rows.iter().map(|r| r.max_u).fold(tr.initial.max(), f64::max),
            bound_violations: tr.rows.iter().map(|r| r.bound_violations).sum(),
            error: None,
            pdas_failure: None,
            wall_time: started.elapsed().as_secs_f64(),
        })
    };
    run().unwrap_or_else(|e| {
        let h = case.mesh(cells).map(|m| (0..m.dim()).map(|a| m.h(a)).fold(0.0, f64::max)).unwrap_or(f64::NAN);
        LevelResult::failed(cells, h, &e, started.elapsed().as_secs_f64())
    })
}

fn stationary_level(case: &Case, settings: &RunSettings, cells: usize, reference: Option<&NodalVector>) -> LevelResult {
    let started = Instant::now();
    let run = || -> Result<LevelResult> {
        let space = build_space(&case.mesh(cells)?, settings.p)?;
        let bounds = settings.bounds_for(case)?.at(0.0)?;
        let sol = case.solve_stationary(&space, bounds, &settings.pdas)?.into_converged()?;
        let u = &sol.u;
        let (l2, h1) = match (case.solution_info(), reference) {
            (SolutionInfo::Exact, _) => {
                let e = error_norms(u, |x, t| case.exact(x, t).expect("exact solution"), 0.0);
                (Some(e.l2_rel), Some(e.h1_rel))
            }
            (SolutionInfo::Reference, Some(r)) => {
                let e = error_norms_reference(u, r)?;
                (Some(e.l2_rel), Some(e.h1_rel))
            }
            _ => (None, None),
        };
        let mass = diagnostics(u, 0.0, 1.0, None)?.mass;
        let mass_error = if case.kind() == PdeKind::Stationary {
            // The first equation tested with 1 gives ∫u = ∫f₁.
            let f1 = case.stationary_source().expect("stationary case");
            (mass - integrate(&space, &f1)?).abs()
        } else {
            0.0
        };
        Ok(LevelResult {
            cells,
            h: mesh_size(&space),
            tau: None,
            steps: 0,
            dofs: space.n_dofs(),
            l2_rel: l2,
            h1_rel: h1,
            pdas_max_iter: sol.report.iterations,
            mass,
            mass_error,
            min_u: u.min(),
            max_u: u.max(),
            bound_violations: count_violations(u, &bounds),
            error: None,
            pdas_failure: None,
            wall_time: started.elapsed().as_secs_f64(),
        })
    };
    run().unwrap_or_else(|e| {
        let h = case.mesh(cells).map(|m| (0..m.dim()).map(|a| m.h(a)).fold(0.0, f64::max)).unwrap_or(f64::NAN);
        LevelResult::failed(cells, h, &e, started.elapsed().as_secs_f64())
    })
}

fn run_levels(levels: &[usize], jobs: usize, f: impl Fn(usize) -> LevelResult + Sync) -> Vec<LevelResult> {
    if jobs <= 1 || levels.len() <= 1 {
        return levels.iter().map(|&c| f(c)).collect();
    }
    let mut out: Vec<Option<LevelResult>> = vec![None; levels.len()];
    std::thread::scope(|s| {
        let handles: Vec<_> = (0..jobs.min(levels.len()))
            .map(|w| {
                let f = &f;
                s.spawn(move || {
                    (w..levels.len()).step_by(jobs).map(|i| (i, f(levels[i]))).collect::<Vec<_>>()
                })
            })
            .collect();
        for h in handles {
            for (i, r) in h.join().expect("worker panicked") {
                out[i] = Some(r);
            }
        }
    });
    out.into_iter().map(|r| r.expect("every level computed")).collect()
}

/// Errors and rates over a sequence of meshes (`cells` per axis, coarse to
/// fine). A failing level is recorded and the run continues.
pub fn run_convergence(case: &Case, settings: &RunSettings, cells: &[usize]) -> Result<RunResult> {
    if case.solution_info() == SolutionInfo::Qualitative {
        return Err(Error::InvalidArgument(format!("case {} has no exact or reference solution", case.name())));
    }
    let mut levels: Vec<usize> = cells.to_vec();
    levels.sort_unstable();
    levels.dedup();
    let started = Instant::now();
    let mut result = RunResult::new(case, settings);
    result.levels = if case.is_stationary() {
        let reference = match case.solution_info() {
            SolutionInfo::Reference => Some(reference_solution(case, settings, *levels.last().unwrap_or(&1))?),
            _ => None,
        };
        run_levels(&levels, settings.jobs, |c| stationary_level(case, settings, c, reference.as_ref()))
    } else {
        run_levels(&levels, settings.jobs, |c| trajectory_level(case, settings, c))
    };
    result.finish(started);
    Ok(result)
}

/// Cubic reference on four times the finest mesh.
pub fn reference_solution(case: &Case, settings: &RunSettings, finest: usize) -> Result<NodalVector> {
    let space = build_space(&case.mesh(4 * finest)?, 3)?;
    let bounds = settings.bounds_for(case)?.at(0.0)?;
    Ok(case.solve_stationary(&space, bounds, &settings.pdas)?.into_converged()?.u)
}

/// One trajectory with per-step diagnostics.
pub fn run_simulation(case: &Case, settings: &RunSettings, cells: usize, tau: Option<f64>) -> Result<RunResult> {
    let started = Instant::now();
    let mut result = RunResult::new(case, settings);
    let tr = integrate_case(case, settings, cells, tau)?;
    let u = &tr.final_state;
    let (l2, h1) = match case.solution_info() {
        SolutionInfo::Exact => {
            let e = error_norms(u, |x, t| case.exact(x, t).expect("exact"), case.t_end().unwrap_or(0.0));
            (Some(e.l2_rel), Some(e.h1_rel))
        }
        _ => (None, None),
    };
    if tau.is_some() {
        result.tau_rule = Some(TauRule::Fixed(tr.tau).to_string());
    }
    result.levels.push(LevelResult {
        cells,
        h: mesh_size(u.space()),
        tau: Some(tr.tau),
        steps: tr.steps,
        dofs: u.len(),
        l2_rel: l2,
        h1_rel: h1,
        pdas_max_iter: tr.rows.iter().map(|r| r.pdas_iters).max().unwrap_or(0),
        mass: tr.initial_mass,
        mass_error: tr.rows.iter().map(|r| r.mass_error).fold(0.0, f64::max),
        min_u: tr.rows.iter().map(|r| r.min_u).fold(tr.initial.min(), f64::min),
        max_u: tr.rows.iter().map(|r| r.max_u).fold(tr.initial.max(), f64::max),
        bound_violations: tr.rows.iter().map(|r| r.bound_violations).sum(),
        error: None,
        pdas_failure: None,
        wall_time: started.elapsed().as_secs_f64(),
    });
    result.steps = tr.rows;
    result.final_state = Some(tr.final_state);
    result.finish(started);
    Ok(result)
}

/// A stationary solve on one mesh; for the Dirichlet positivity case also
/// the unconstrained comparison.
pub fn run_stationary(case: &Case, settings: &RunSettings, cells: usize) -> Result<RunResult> {
    if !case.is_stationary() {
        return Err(Error::InvalidArgument(format!("case {} is time-dependent", case.name())));
    }
    let started = Instant::now();
    let mut result = RunResult::new(case, settings);
    let space = build_space(&case.mesh(cells)?, settings.p)?;
    let bounds = settings.bounds_for(case)?.at(0.0)?;
    let sol = case.solve_stationary(&space, bounds, &settings.pdas)?.into_converged()?;
    if *case == Case::DirichletPositivity {
        let free = case.standard_fem(&space)?;
        result.positivity = Some(PositivityReport {
            constrained_min: sol.u.min(),
            unconstrained_min: free.min(),
            unconstrained_negative_nodes: free.values().iter().filter(|&&v| v <= -1e-6).count(),
            constrained_negative_nodes: sol.u.values().iter().filter(|&&v| v < -1e-12).count(),
        });
    }
    result.levels.push(stationary_level(case, settings, cells, None));
    result.final_state = Some(sol.u);
    result.finish(started);
    Ok(result)
}
