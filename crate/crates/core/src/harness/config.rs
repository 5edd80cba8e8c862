use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problems::InstanceSpec;

pub const SCHEMA: &str = "pwsbl-config/1";

pub const ALGORITHMS: [&str; 7] = [
    "bl",
    "apx_bl",
    "bl_mu",
    "ippm",
    "pf_bl_mu",
    "pf_ippm",
    "polyak_sgd",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema: String,
    pub problem: InstanceSpec,
    pub algorithms: Vec<AlgorithmSpec>,
    /// Maximum oracle calls per run.
    #[serde(default)]
    pub budget: Option<u64>,
    #[serde(default)]
    pub output: OutputSpec,
    /// Overrides the projection tolerance.
    #[serde(default)]
    pub tol: Option<f64>,
    /// Base seed for perturbed oracles.
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgorithmSpec {
    pub name: String,
    #[serde(default)]
    pub label: Option<String>,
    #[serde(default = "default_m")]
    pub m: usize,
    /// Optimal value for `bl`, `apx_bl` and `polyak_sgd`; defaults to the instance's.
    #[serde(default)]
    pub fstar: Option<f64>,
    /// Growth modulus, or the initial guess for `pf_bl_mu`.
    #[serde(default)]
    pub mu: Option<f64>,
    /// Weak-convexity modulus, or the initial guess for `pf_ippm`.
    #[serde(default)]
    pub rho: Option<f64>,
    #[serde(default)]
    pub eps: Option<f64>,
    /// Perturbation radius of the oracle.
    #[serde(default)]
    pub radius: f64,
    #[serde(default)]
    pub x0: Option<Vec<f64>>,
    #[serde(default)]
    pub max_iters: Option<usize>,
}

fn default_m() -> usize {
    4
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default)]
    pub dir: Option<PathBuf>,
    #[serde(default)]
    pub csv: bool,
}

fn bad(field: impl Into<String>, reason: impl Into<String>) -> Error {
    Error::Config {
        field: field.into(),
        reason: reason.into(),
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| {
            bad(
                format!("line {} column {}", e.line(), e.column()),
                e.to_string(),
            )
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_owned(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema != SCHEMA {
            return Err(bad(
                "schema",
                format!("expected `{SCHEMA}`, found `{}`", self.schema),
            ));
        }
        if self.algorithms.is_empty() {
            return Err(bad("algorithms", "at least one algorithm is required"));
        }
        if self.budget == Some(0) {
            return Err(bad("budget", "must be positive"));
        }
        if let Some(t) = self.tol {
            if !(t > 0.0 && t < 1.0) {
                return Err(bad("tol", "must lie in (0, 1)"));
            }
        }
        for (i, a) in self.algorithms.iter().enumerate() {
            a.validate().map_err(|e| match e {
                Error::Config { field, reason } => bad(format!("algorithms[{i}].{field}"), reason),
                other => other,
            })?;
        }
        Ok(())
    }
}

impl AlgorithmSpec {
    pub fn new(name: &str) -> Self {
        AlgorithmSpec {
            name: name.into(),
            label: None,
            m: default_m(),
            fstar: None,
            mu: None,
            rho: None,
            eps: None,
            radius: 0.0,
            x0: None,
            max_iters: None,
        }
    }

    pub fn display_name(&self) -> &str {
        self.label.as_deref().unwrap_or(&self.name)
    }

    fn validate(&self) -> Result<()> {
        if !ALGORITHMS.contains(&self.name.as_str()) {
            return Err(bad(
                "name",
                format!(
                    "unknown algorithm `{}`; expected one of {}",
                    self.name,
                    ALGORITHMS.join(", ")
                ),
            ));
        }
        if self.m == 0 {
            return Err(bad("m", "bundle size must be at least 1"));
        }
        if !(self.radius >= 0.0 && self.radius.is_finite()) {
            return Err(bad("radius", "must be non-negative"));
        }
        let positive = |v: Option<f64>, field: &str| -> Result<()> {
            match v {
                Some(x) if x > 0.0 && x.is_finite() => Ok(()),
                Some(_) => Err(bad(field, "must be positive")),
                None => Err(bad(field, format!("required by `{}`", self.name))),
            }
        };
        match self.name.as_str() {
            "bl_mu" => {
                positive(self.mu, "mu")?;
                positive(self.eps, "eps")?;
            }
            "pf_bl_mu" => {
                positive(self.mu, "mu")?;
                if self.eps.is_some() {
                    positive(self.eps, "eps")?;
                }
            }
            "ippm" | "pf_ippm" => {
                positive(self.rho, "rho")?;
                positive(self.eps, "eps")?;
            }
            _ => {}
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_algorithm_names_the_field() {
        let text = r#"{"schema": "pwsbl-config/1", "problem": {"generator": "demo"},
            "algorithms": [{"name": "bl"}, {"name": "newton"}]}"#;
        match ExperimentConfig::from_json(text) {
            Err(Error::Config { field, .. }) => assert_eq!(field, "algorithms[1].name"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn syntax_errors_carry_a_line() {
        let text = "{\"schema\": \"pwsbl-config/1\",\n \"problem\": {\"generator\": \"demo\"},\n \"algos\": []}";
        match ExperimentConfig::from_json(text) {
            Err(Error::Config { field, .. }) => assert!(field.starts_with("line 3"), "{field}"),
            other => panic!("unexpected {other:?}"),
        }
    }
}
