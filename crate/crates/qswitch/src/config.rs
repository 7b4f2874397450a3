//! Run configuration: a TOML file plus command-line overrides, resolved
//! against the instance registry.

use std::path::{Path, PathBuf};

use qswitch_core::rounding::ObjRule;
use serde::{Deserialize, Serialize};

use crate::error::{AppError, AppResult};
use crate::registry::{lookup, Family, ProblemDef};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RoundKind {
    Obj,
    Cdiff,
    Sur,
}

impl RoundKind {
    pub fn parse(s: &str) -> Option<RoundKind> {
        match s.to_ascii_lowercase().as_str() {
            "obj" => Some(RoundKind::Obj),
            "cdiff" => Some(RoundKind::Cdiff),
            "sur" => Some(RoundKind::Sur),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "method", rename_all = "lowercase")]
pub enum Rounding {
    Obj { alpha: f64 },
    Cdiff { beta: f64 },
    Sur,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RuleName {
    Verbatim,
    Delta,
}

impl From<RuleName> for ObjRule {
    fn from(r: RuleName) -> Self {
        match r {
            RuleName::Verbatim => ObjRule::Verbatim,
            RuleName::Delta => ObjRule::Delta,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitName {
    Uniform,
    Random,
}

/// Every setting optional; used for both the TOML file and the flags.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartialConfig {
    pub instance: Option<String>,
    pub family: Option<String>,
    pub q: Option<usize>,
    pub t_f: Option<f64>,
    pub steps: Option<usize>,
    pub rho: Option<f64>,
    pub round: Option<String>,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub obj_rule: Option<RuleName>,
    pub init: Option<InitName>,
    pub seed: Option<u64>,
    pub target: Option<PathBuf>,
    pub coupling: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub skip_round: Option<bool>,
    pub skip_sto: Option<bool>,
    pub compress: Option<bool>,
    pub traces: Option<bool>,
    pub relax_max_iters: Option<usize>,
    pub sto_max_iters: Option<usize>,
    pub sto_tol: Option<f64>,
}

macro_rules! overlay {
    ($base:ident, $top:ident, $($field:ident),*) => {
        PartialConfig { $($field: $top.$field.or($base.$field)),* }
    };
}

impl PartialConfig {
    pub fn from_toml(text: &str) -> AppResult<Self> {
        toml::from_str(text).map_err(|e| AppError::config(e.to_string()))
    }

    pub fn load(path: &Path) -> AppResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| AppError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        toml::from_str(&text).map_err(|e| AppError::format(path, e))
    }

    /// Settings of `top` win over those of `self`.
    pub fn overlay(self, top: PartialConfig) -> PartialConfig {
        let base = self;
        overlay!(
            base, top, instance, family, q, t_f, steps, rho, round, alpha, beta, obj_rule, init,
            seed, target, coupling, out, skip_round, skip_sto, compress, traces, relax_max_iters,
            sto_max_iters, sto_tol
        )
    }
}

/// Fully resolved configuration of one pipeline run.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunConfig {
    pub instance: String,
    pub problem: ProblemDef,
    pub steps: usize,
    pub rho: f64,
    pub rounding: Rounding,
    pub obj_rule: RuleName,
    pub init: InitName,
    pub seed: u64,
    pub target: Option<PathBuf>,
    pub coupling: Option<PathBuf>,
    #[serde(skip)]
    pub out: Option<PathBuf>,
    pub skip_round: bool,
    pub skip_sto: bool,
    pub compress: bool,
    pub traces: bool,
    pub relax_max_iters: usize,
    pub sto_max_iters: usize,
    pub sto_tol: f64,
}

fn non_negative(name: &str, v: f64) -> AppResult<f64> {
    if v.is_finite() && v >= 0.0 {
        Ok(v)
    } else {
        Err(AppError::config(format!("{name} must be a finite non-negative number, got {v}")))
    }
}

impl RunConfig {
    /// Shortcut for a table instance with its default settings.
    pub fn for_instance(name: &str) -> AppResult<Self> {
        PartialConfig {
            instance: Some(name.to_string()),
            ..Default::default()
        }
        .resolve()
    }
}

impl PartialConfig {
    pub fn resolve(self) -> AppResult<RunConfig> {
        let name = self
            .instance
            .clone()
            .or_else(|| self.family.clone())
            .ok_or_else(|| AppError::config("no instance given"))?;
        let row = lookup(&name);
        let family = match (row, &self.family) {
            (Some(r), None) => r.family,
            (_, Some(f)) => Family::parse(f)
                .ok_or_else(|| AppError::config(format!("unknown family '{f}'")))?,
            (None, None) => Family::parse(&name).ok_or_else(|| {
                AppError::config(format!(
                    "unknown instance '{name}'; use a table name or a family (energy, cnot, not, circuit)"
                ))
            })?,
        };
        let row = row.filter(|r| r.family == family);
        let missing = |what: &str| {
            AppError::config(format!("{what} is required for the inline instance '{name}'"))
        };
        let q = match family {
            Family::Cnot => 2,
            Family::Not => 1,
            _ => self.q.or(row.map(|r| r.q)).ok_or_else(|| missing("q"))?,
        };
        if q == 0 {
            return Err(AppError::config("q must be at least 1"));
        }
        let t_f = self.t_f.or(row.map(|r| r.t_f)).ok_or_else(|| missing("t_f"))?;
        if !(t_f.is_finite() && t_f > 0.0) {
            return Err(AppError::config(format!("t_f must be positive, got {t_f}")));
        }
        let steps = self.steps.or(row.map(|r| r.n_steps)).ok_or_else(|| missing("steps"))?;
        if steps == 0 {
            return Err(AppError::config("steps must be at least 1"));
        }
        let rho = non_negative("rho", self.rho.or(row.map(|r| r.rho)).unwrap_or(0.0))?;
        let kind = match &self.round {
            Some(r) => RoundKind::parse(r)
                .ok_or_else(|| AppError::config(format!("unknown rounding '{r}' (obj, cdiff, sur)")))?,
            None => RoundKind::Obj,
        };
        let rounding = match kind {
            RoundKind::Obj => Rounding::Obj {
                alpha: non_negative(
                    "alpha",
                    self.alpha.or(row.map(|r| r.alpha)).ok_or_else(|| missing("alpha"))?,
                )?,
            },
            RoundKind::Cdiff => Rounding::Cdiff {
                beta: non_negative(
                    "beta",
                    self.beta.or(row.map(|r| r.beta)).ok_or_else(|| missing("beta"))?,
                )?,
            },
            RoundKind::Sur => Rounding::Sur,
        };
        let sto_tol = non_negative("sto_tol", self.sto_tol.unwrap_or(1e-8))?;
        Ok(RunConfig {
            instance: row.map_or(name, |r| r.name.to_string()),
            problem: ProblemDef { family, q, t_f },
            steps,
            rho,
            rounding,
            obj_rule: self.obj_rule.unwrap_or(RuleName::Verbatim),
            init: self.init.unwrap_or(InitName::Uniform),
            seed: self.seed.unwrap_or(0),
            target: self.target,
            coupling: self.coupling,
            out: self.out,
            skip_round: self.skip_round.unwrap_or(false),
            skip_sto: self.skip_sto.unwrap_or(false),
            compress: self.compress.unwrap_or(true),
            traces: self.traces.unwrap_or(false),
            relax_max_iters: self.relax_max_iters.unwrap_or(5000),
            sto_max_iters: self.sto_max_iters.unwrap_or(500),
            sto_tol,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_defaults_fill_missing_settings() {
        let cfg = RunConfig::for_instance("NOT10").unwrap();
        assert_eq!(cfg.steps, 100);
        assert_eq!(cfg.rounding, Rounding::Obj { alpha: 0.009 });
        assert_eq!(cfg.problem.t_f, 10.0);
    }

    #[test]
    fn flags_override_the_file() {
        let file = PartialConfig::from_toml("instance = \"NOT2\"\nround = \"cdiff\"\nbeta = 0.5\nsteps = 10").unwrap();
        let flags = PartialConfig {
            beta: Some(0.03),
            ..Default::default()
        };
        let cfg = file.overlay(flags).resolve().unwrap();
        assert_eq!(cfg.rounding, Rounding::Cdiff { beta: 0.03 });
        assert_eq!(cfg.steps, 10);
    }

    #[test]
    fn inline_family_needs_its_shape() {
        let err = PartialConfig::from_toml("family = \"energy\"\nq = 3").unwrap().resolve().unwrap_err();
        assert!(err.to_string().contains("t_f"));
        let cfg = PartialConfig::from_toml("family = \"energy\"\nq = 3\nt_f = 5.0\nsteps = 50\nalpha = 0.1")
            .unwrap()
            .resolve()
            .unwrap();
        assert_eq!(cfg.problem.q, 3);
    }

    #[test]
    fn bad_values_are_config_errors() {
        for text in [
            "instance = \"Energy2\"\nsteps = 0",
            "instance = \"Energy2\"\nalpha = -1.0",
            "instance = \"Nope\"",
            "instance = \"Energy2\"\nround = \"magic\"",
            "instance = \"Energy2\"\nunknown_key = 1",
        ] {
            let res = PartialConfig::from_toml(text).and_then(PartialConfig::resolve);
            assert_eq!(res.unwrap_err().exit_code(), 2, "{text}");
        }
    }
}
