//! Run configuration files.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use vifem::experiments::SolutionInfo;
use vifem::{Case, PdasConfig, RunSettings, TauRule};

/// Replacement box for a case. A missing side is unbounded.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsOverride {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lower: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub upper: Option<f64>,
}

impl BoundsOverride {
    fn to_pair(self) -> (f64, f64) {
        (self.lower.unwrap_or(f64::NEG_INFINITY), self.upper.unwrap_or(f64::INFINITY))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PdasOptions {
    pub c: f64,
    pub max_iter: usize,
    pub kkt_tol: f64,
}

impl Default for PdasOptions {
    fn default() -> Self {
        let d = PdasConfig::default();
        Self { c: d.c, max_iter: d.max_iter, kkt_tol: d.kkt_tol }
    }
}

/// Contents of a `--config` file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub case: String,
    /// Case parameter: `eps`, the porous medium exponent `m`, or unused.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parameter: Option<f64>,
    #[serde(default = "default_p")]
    pub p: usize,
    #[serde(default = "default_k")]
    pub k: usize,
    /// Cells per axis, one entry per mesh.
    pub cells: Vec<usize>,
    #[serde(default = "default_tau")]
    pub tau: TauRule,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol_relax: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bounds: Option<BoundsOverride>,
    #[serde(default)]
    pub pdas: PdasOptions,
    /// Seed of the random initial state (`ch_logarithmic` only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jobs: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warmup_substeps: Option<usize>,
}

fn default_p() -> usize {
    1
}

fn default_k() -> usize {
    2
}

fn default_tau() -> TauRule {
    TauRule::MeshFraction(2.0)
}

/// What a subcommand does with the config.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Converge,
    Simulate,
    Stationary,
}

/// A config that could not be read or does not describe a valid run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConfigError {
    pub file: Option<String>,
    pub line: Option<usize>,
    pub column: Option<usize>,
    pub field: Option<String>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(field) = &self.field {
            write!(f, "{field}: ")?;
        }
        write!(f, "{}", self.message)?;
        if let Some(line) = self.line {
            write!(f, " (line {line})")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigError {}

impl ConfigError {
    fn field(field: &str, message: impl Into<String>) -> Self {
        Self { file: None, line: None, column: None, field: Some(field.into()), message: message.into() }
    }
}

/// Line of the first `"key"` in `text`, for pointing at a field that parsed
/// but failed validation.
fn line_of_key(text: &str, field: &str) -> Option<usize> {
    let key = field.rsplit('.').next()?;
    let needle = format!("\"{key}\"");
    text.lines().position(|l| l.contains(&needle)).map(|i| i + 1)
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<RunConfig, ConfigError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            let field = (path != ".").then_some(path);
            // Bad values are reported after they were read, possibly on the
            // next line; the key is a better pointer.
            let key_line = match (&field, inner.classify()) {
                (Some(f), serde_json::error::Category::Data) => line_of_key(text, f),
                _ => None,
            };
            ConfigError {
                file: None,
                line: key_line.or(Some(inner.line())),
                column: if key_line.is_some() { None } else { Some(inner.column()) },
                field,
                message: inner.to_string(),
            }
        })?;
        cfg.validate().map_err(|mut e| {
            if let Some(f) = &e.field {
                e.line = line_of_key(text, f);
            }
            e
        })?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<RunConfig, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError {
            file: Some(path.display().to_string()),
            line: None,
            column: None,
            field: None,
            message: e.to_string(),
        })?;
        Self::from_json(&text).map_err(|mut e| {
            e.file = Some(path.display().to_string());
            e
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Field-level checks that do not depend on the subcommand.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let base = Case::from_name(&self.case).map_err(|e| ConfigError::field("case", e.to_string()))?;
        if !(1..=4).contains(&self.p) {
            return Err(ConfigError::field("p", format!("polynomial order {} not in 1..=4", self.p)));
        }
        if !(1..=5).contains(&self.k) {
            return Err(ConfigError::field("k", format!("BDF order {} not in 1..=5", self.k)));
        }
        if self.cells.is_empty() || self.cells.contains(&0) {
            return Err(ConfigError::field("cells", "expected a nonempty list of positive cell counts"));
        }
        if let Some(v) = self.parameter {
            base.with_parameter(v).map_err(|e| ConfigError::field("parameter", e.to_string()))?;
        }
        if self.seed.is_some() {
            if !matches!(base, Case::ChLogarithmic { .. }) {
                return Err(ConfigError::field("seed", format!("case {} has no random data", self.case)));
            }
            if self.parameter.is_some() {
                return Err(ConfigError::field("seed", "give the seed either as seed or as parameter"));
            }
        }
        if let Some(t) = self.tol_relax {
            if !(t.is_finite() && t >= 0.0) {
                return Err(ConfigError::field("tol_relax", "expected a finite nonnegative number"));
            }
        }
        if let Some(b) = self.bounds {
            let (lo, hi) = b.to_pair();
            if lo.is_nan() || hi.is_nan() || lo >= hi {
                return Err(ConfigError::field("bounds", format!("lower {lo} must be below upper {hi}")));
            }
        }
        if !(self.pdas.c.is_finite() && self.pdas.c > 0.0) {
            return Err(ConfigError::field("pdas.c", "expected a positive number"));
        }
        if self.pdas.max_iter == 0 {
            return Err(ConfigError::field("pdas.max_iter", "expected at least one iteration"));
        }
        if !(self.pdas.kkt_tol.is_finite() && self.pdas.kkt_tol > 0.0) {
            return Err(ConfigError::field("pdas.kkt_tol", "expected a positive number"));
        }
        if self.jobs == Some(0) {
            return Err(ConfigError::field("jobs", "expected at least one job"));
        }
        if self.warmup_substeps == Some(0) {
            return Err(ConfigError::field("warmup_substeps", "expected at least one substep"));
        }
        Ok(())
    }

    /// Checks that the case suits the subcommand.
    pub fn validate_for(&self, mode: Mode) -> Result<(), ConfigError> {
        let case = self.case()?;
        match mode {
            Mode::Converge => {
                if case.solution_info() == SolutionInfo::Qualitative {
                    return Err(ConfigError::field("case", format!("{} has no exact or reference solution", self.case)));
                }
                if self.cells.len() < 2 {
                    return Err(ConfigError::field("cells", "a convergence study needs at least two meshes"));
                }
            }
            Mode::Simulate | Mode::Stationary => {
                if (mode == Mode::Stationary) != case.is_stationary() {
                    let want = if mode == Mode::Stationary { "stationary" } else { "time-dependent" };
                    return Err(ConfigError::field("case", format!("{} is not {want}", self.case)));
                }
                if self.cells.len() != 1 {
                    return Err(ConfigError::field("cells", "expected exactly one mesh"));
                }
            }
        }
        Ok(())
    }

    pub fn case(&self) -> Result<Case, ConfigError> {
        let mut case = Case::from_name(&self.case).map_err(|e| ConfigError::field("case", e.to_string()))?;
        if let Some(v) = self.parameter {
            case = case.with_parameter(v).map_err(|e| ConfigError::field("parameter", e.to_string()))?;
        }
        if let Some(s) = self.seed {
            case = Case::ChLogarithmic { seed: s };
        }
        Ok(case)
    }

    pub fn settings(&self, jobs: Option<usize>) -> RunSettings {
        let d = RunSettings::default();
        RunSettings {
            p: self.p,
            k: self.k,
            tau: self.tau,
            tol_relax: self.tol_relax,
            bounds: self.bounds.map(BoundsOverride::to_pair),
            pdas: PdasConfig { c: self.pdas.c, max_iter: self.pdas.max_iter, kkt_tol: self.pdas.kkt_tol, ..d.pdas },
            warmup_substeps: self.warmup_substeps.unwrap_or(d.warmup_substeps),
            jobs: jobs.or(self.jobs).unwrap_or(1),
        }
    }

    /// The seed that determines the run, if any.
    pub fn effective_seed(&self) -> Option<u64> {
        match self.case() {
            Ok(Case::ChLogarithmic { seed }) => Some(seed),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_fill_missing_fields() {
        let cfg = RunConfig::from_json(r#"{"case": "stationary_smooth", "cells": [8, 16]}"#).unwrap();
        assert_eq!((cfg.p, cfg.k), (1, 2));
        assert_eq!(cfg.tau, TauRule::MeshFraction(2.0));
        assert_eq!(cfg.pdas, PdasOptions::default());
        assert_eq!(cfg.settings(None).jobs, 1);
    }

    #[test]
    fn errors_name_the_field_and_line() {
        let text = "{\n  \"case\": \"stationary_smooth\",\n  \"cells\": [8],\n  \"p\": 7\n}";
        let e = RunConfig::from_json(text).unwrap_err();
        assert_eq!(e.field.as_deref(), Some("p"));
        assert_eq!(e.line, Some(4));

        let text = "{\n  \"case\": \"stationary_smooth\",\n  \"cells\": [8],\n  \"pdas\": {\"c\": \"big\"}\n}";
        let e = RunConfig::from_json(text).unwrap_err();
        assert_eq!(e.field.as_deref(), Some("pdas.c"));
        assert_eq!(e.line, Some(4));

        let e = RunConfig::from_json(r#"{"case": "nope", "cells": [8]}"#).unwrap_err();
        assert_eq!(e.field.as_deref(), Some("case"));
        let e = RunConfig::from_json(r#"{"case": "porous_medium", "cells": [8], "colour": 1}"#).unwrap_err();
        assert!(e.message.contains("colour"));
    }

    #[test]
    fn parameter_and_seed_select_the_case() {
        let cfg = RunConfig::from_json(r#"{"case": "porous_medium", "parameter": 6, "cells": [64]}"#).unwrap();
        assert_eq!(cfg.case().unwrap(), Case::PorousMedium { m: 6.0 });
        let cfg = RunConfig::from_json(r#"{"case": "ch_logarithmic", "seed": 5, "cells": [8]}"#).unwrap();
        assert_eq!(cfg.case().unwrap(), Case::ChLogarithmic { seed: 5 });
        assert_eq!(cfg.effective_seed(), Some(5));
        assert!(RunConfig::from_json(r#"{"case": "porous_medium", "seed": 5, "cells": [8]}"#).is_err());
    }

    #[test]
    fn subcommand_checks() {
        let cfg = RunConfig::from_json(r#"{"case": "lubrication_singular", "cells": [49]}"#).unwrap();
        assert!(cfg.validate_for(Mode::Simulate).is_ok());
        assert!(cfg.validate_for(Mode::Stationary).is_err());
        assert_eq!(cfg.validate_for(Mode::Converge).unwrap_err().field.as_deref(), Some("case"));
    }
}
