//! Experiment configuration in TOML.
//!
//! ```toml
//! preset = "hopf"
//! epsilon = 0.1
//! eps_grid = [0.2, 0.1, 0.05]
//! T = 1.0
//! paths = 100000
//! master_seed = 7
//!
//! [poisson]
//! tail_T = 20.0
//!
//! [lln]
//! t_grid = [1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0]
//! ```
//!
//! The digest is the SHA-256 of the canonical re-serialization with every
//! default filled in. Formatting, key order and comments do not change it;
//! the seed, the worker count and the output directory are not part of it.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::metrics::MAX_EXACT_SIZE;
use crate::poisson::ResolventConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub preset: String,
    /// `y_0 = exp(Σ c_i e_i)` in the declared algebra basis; identity if absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<Vec<f64>>,
    #[serde(default = "defaults::epsilon")]
    pub epsilon: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps_grid: Option<Vec<f64>>,
    #[serde(rename = "T", default = "defaults::horizon")]
    pub horizon: f64,
    #[serde(default = "defaults::theta")]
    pub theta: f64,
    #[serde(default = "defaults::paths")]
    pub paths: usize,
    /// Ensemble size for Wasserstein runs.
    #[serde(default = "defaults::sample_size")]
    pub n: usize,
    #[serde(default = "defaults::limit_step")]
    pub limit_step: f64,
    #[serde(default = "defaults::seed", skip_serializing)]
    pub master_seed: u64,
    #[serde(default, skip_serializing)]
    pub output: Option<String>,
    #[serde(default, skip_serializing)]
    pub workers: Option<usize>,
    #[serde(default)]
    pub poisson: PoissonSection,
    #[serde(default)]
    pub lln: LlnSection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoissonSection {
    #[serde(rename = "tail_T", default = "defaults::tail")]
    pub tail_t: f64,
    #[serde(default = "defaults::resolvent_paths")]
    pub paths: usize,
    #[serde(default = "defaults::resolvent_step")]
    pub step: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LlnSection {
    #[serde(default = "defaults::t_grid")]
    pub t_grid: Vec<f64>,
    #[serde(default = "defaults::lln_paths")]
    pub paths: usize,
    #[serde(default = "defaults::lln_step")]
    pub step: f64,
}

impl Default for PoissonSection {
    fn default() -> Self {
        Self {
            tail_t: defaults::tail(),
            paths: defaults::resolvent_paths(),
            step: defaults::resolvent_step(),
        }
    }
}

impl Default for LlnSection {
    fn default() -> Self {
        Self {
            t_grid: defaults::t_grid(),
            paths: defaults::lln_paths(),
            step: defaults::lln_step(),
        }
    }
}

mod defaults {
    pub fn epsilon() -> f64 {
        0.1
    }
    pub fn horizon() -> f64 {
        1.0
    }
    pub fn theta() -> f64 {
        crate::multiscale::DEFAULT_THETA
    }
    pub fn paths() -> usize {
        10_000
    }
    pub fn sample_size() -> usize {
        1000
    }
    pub fn limit_step() -> f64 {
        crate::effective::DEFAULT_LIMIT_STEP
    }
    pub fn seed() -> u64 {
        1
    }
    pub fn tail() -> f64 {
        20.0
    }
    pub fn resolvent_paths() -> usize {
        100_000
    }
    pub fn resolvent_step() -> f64 {
        0.02
    }
    pub fn t_grid() -> Vec<f64> {
        (0..7).map(|k| f64::from(1 << k)).collect()
    }
    pub fn lln_paths() -> usize {
        2000
    }
    pub fn lln_step() -> f64 {
        0.01
    }
}

fn bad(field: &str, msg: impl std::fmt::Display) -> Error {
    Error::Config(format!("field `{field}`: {msg}"))
}

impl ExperimentConfig {
    /// A config with all defaults for the given preset.
    pub fn for_preset(preset: &str) -> Self {
        Self::parse(&format!("preset = {:?}", preset)).expect("default configuration is valid")
    }

    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let unit = |v: f64| v > 0.0 && v <= 1.0;
        if !unit(self.epsilon) {
            return Err(bad("epsilon", "must lie in (0, 1]"));
        }
        if let Some(grid) = &self.eps_grid {
            if grid.is_empty() || grid.iter().any(|e| !unit(*e)) {
                return Err(bad("eps_grid", "values must lie in (0, 1]"));
            }
            if grid.windows(2).any(|w| w[1] >= w[0]) {
                return Err(bad("eps_grid", "must be strictly decreasing"));
            }
        }
        if !(self.horizon > 0.0) {
            return Err(bad("T", "must be positive"));
        }
        if !(self.theta > 0.0 && self.theta <= 0.5) {
            return Err(bad("theta", "must lie in (0, 0.5]"));
        }
        if self.paths < 2 {
            return Err(bad("paths", "need at least two paths"));
        }
        if self.n < 2 || self.n > MAX_EXACT_SIZE {
            return Err(bad("n", format!("must lie in 2..={MAX_EXACT_SIZE}")));
        }
        if !(self.limit_step > 0.0) {
            return Err(bad("limit_step", "must be positive"));
        }
        if self.workers == Some(0) {
            return Err(bad("workers", "must be positive"));
        }
        let p = &self.poisson;
        if !(p.tail_t > 0.0) || p.paths < 2 || !(p.step > 0.0 && p.step <= 0.5) {
            return Err(bad(
                "poisson",
                "need tail_T > 0, paths ≥ 2 and 0 < step ≤ 0.5",
            ));
        }
        let l = &self.lln;
        if l.t_grid.is_empty() || l.t_grid[0] <= 0.0 || l.t_grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(bad(
                "lln.t_grid",
                "must be positive and strictly increasing",
            ));
        }
        if l.paths < 2 || !(l.step > 0.0) {
            return Err(bad("lln", "need paths ≥ 2 and step > 0"));
        }
        Ok(())
    }

    /// Canonical TOML text: defaults filled, fixed key order, no seed,
    /// workers or output.
    pub fn canonical(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    /// Hex SHA-256 of [`canonical`](Self::canonical).
    pub fn digest(&self) -> String {
        let hash = Sha256::digest(self.canonical().as_bytes());
        hash.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn resolvent(&self, master_seed: u64) -> ResolventConfig {
        ResolventConfig {
            tail_t: self.poisson.tail_t,
            paths: self.poisson.paths,
            step: self.poisson.step,
            master_seed,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digest_ignores_formatting_seed_and_output() {
        let a = ExperimentConfig::parse("preset = \"hopf\"\nT = 1.0\nmaster_seed = 3\n").unwrap();
        let b = ExperimentConfig::parse(
            "# comment\nmaster_seed = 99\noutput = \"x\"\n   T=1\npreset=\"hopf\"\n[lln]\npaths = 2000\n",
        )
        .unwrap();
        assert_eq!(a.digest(), b.digest());
        let c = ExperimentConfig::parse("preset = \"hopf\"\nT = 2.0\n").unwrap();
        assert_ne!(a.digest(), c.digest());
    }

    #[test]
    fn errors_name_the_field_or_line() {
        let e = ExperimentConfig::parse("preset = \"hopf\"\neps_grid = [0.1, 0.2, 0.05]\n")
            .unwrap_err();
        assert!(e.to_string().contains("eps_grid"), "{e}");
        let e = ExperimentConfig::parse("preset = \"hopf\"\nbogus = 1\n").unwrap_err();
        assert!(
            e.to_string().contains("bogus") && e.to_string().contains("line 2"),
            "{e}"
        );
        let e = ExperimentConfig::parse("preset = \"hopf\"\ntheta = 0.9\n").unwrap_err();
        assert!(e.to_string().contains("theta"));
    }

    #[test]
    fn defaults_round_trip() {
        let cfg = ExperimentConfig::for_preset("so4_hypoelliptic");
        let again =
            ExperimentConfig::parse(&format!("master_seed = 1\n{}", cfg.canonical())).unwrap();
        assert_eq!(cfg, again);
    }
}
