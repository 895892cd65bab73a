use crate::error::{Error, Result};
use crate::space::NodalVector;
use crate::vi::BoxBounds;

use super::bdf::BdfTable;

/// History of a BDF integration, newest state first.
#[derive(Debug, Clone)]
pub struct TimeState {
    history: Vec<NodalVector>,
    r_history: Vec<f64>,
    /// Converged active sets (lower, upper) of the last step, used to start
    /// the next solve.
    active: Option<(Vec<usize>, Vec<usize>)>,
    pub t: f64,
    pub tau: f64,
}

impl TimeState {
    pub fn new(u0: NodalVector, t: f64, tau: f64) -> Result<Self> {
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(Error::InvalidArgument(format!("time step {tau} must be positive")));
        }
        Ok(Self { history: vec![u0], r_history: Vec::new(), active: None, t, tau })
    }

    /// State with an explicit history (newest first).
    pub fn from_history(history: Vec<NodalVector>, r_history: Vec<f64>, t: f64, tau: f64) -> Result<Self> {
        if history.is_empty() {
            return Err(Error::InvalidArgument("history must not be empty".into()));
        }
        let space = history[0].space();
        if history.iter().any(|h| !h.space().same_as(space)) {
            return Err(Error::DimensionMismatch("history vectors live on different spaces".into()));
        }
        let mut s = Self::new(history[0].clone(), t, tau)?;
        s.history = history;
        s.r_history = r_history;
        Ok(s)
    }

    pub fn current(&self) -> &NodalVector {
        &self.history[0]
    }

    pub fn history(&self) -> &[NodalVector] {
        &self.history
    }

    pub fn r_history(&self) -> &[f64] {
        &self.r_history
    }

    pub fn r(&self) -> Option<f64> {
        self.r_history.first().copied()
    }

    pub fn active_sets(&self) -> Option<(&[usize], &[usize])> {
        self.active.as_ref().map(|(l, u)| (l.as_slice(), u.as_slice()))
    }

    pub fn set_active_sets(&mut self, sets: Option<(Vec<usize>, Vec<usize>)>) {
        self.active = sets;
    }

    pub fn set_r_history(&mut self, r: Vec<f64>) {
        self.r_history = r;
    }

    /// Pushes a new state, keeping at most `keep` entries.
    pub fn push(&mut self, u: NodalVector, r: Option<f64>, keep: usize) {
        self.history.insert(0, u);
        self.history.truncate(keep.max(1));
        if let Some(r) = r {
            self.r_history.insert(0, r);
            self.r_history.truncate(keep.max(1));
        }
        self.t += self.tau;
    }

    pub(crate) fn views(&self, k: usize) -> Result<Vec<&[f64]>> {
        if self.history.len() < k {
            return Err(Error::InvalidArgument(format!(
                "BDF{k} needs {k} history states, have {}",
                self.history.len()
            )));
        }
        Ok(self.history[..k].iter().map(|h| h.values()).collect())
    }
}

/// Extrapolated state `B_k(u)` clamped nodewise into the unrelaxed box.
pub fn extrapolate_clamped(state: &TimeState, tbl: &BdfTable, bounds: &BoxBounds) -> Result<NodalVector> {
    let views = state.views(tbl.k)?;
    let values = tbl.extrapolation(&views).into_iter().map(|v| bounds.clamp(v)).collect();
    NodalVector::new(state.current().space(), values)
}
