use std::path::Path;

use latticenf::dynamics::Scheme;
use latticenf::lattice::MAX_DIM;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MediaChoice {
    /// `v_j` drawn from the seed.
    Random,
    Zero,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Perturbation {
    /// Every degree-6 monomial with spread at most one, unit coefficients.
    ShortRange,
    NearestNeighbour,
    None,
}

fn default_trials() -> u64 {
    1000
}
fn default_dt() -> f64 {
    1e-3
}
fn default_t() -> f64 {
    10.0
}
fn default_sample_every() -> usize {
    100
}
fn default_media() -> MediaChoice {
    MediaChoice::Random
}
fn default_perturbation() -> Perturbation {
    Perturbation::ShortRange
}
fn default_scheme() -> Scheme {
    Scheme::Strang
}

/// A run description. Every output file carries a copy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub d: usize,
    #[serde(rename = "L")]
    pub l: u32,
    pub sigma: f64,
    pub eps: f64,
    pub eta: f64,
    #[serde(rename = "M", default, skip_serializing_if = "Option::is_none")]
    pub m: Option<u32>,
    pub seed: u64,
    #[serde(default = "default_trials")]
    pub trials: u64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(rename = "T", default = "default_t")]
    pub t_end: f64,
    #[serde(default = "default_sample_every")]
    pub sample_every: usize,
    #[serde(default = "default_media")]
    pub media: MediaChoice,
    /// Inner parameters; `zero` sets every `zeta_j = 0`.
    #[serde(default = "default_media")]
    pub inner: MediaChoice,
    #[serde(default = "default_perturbation")]
    pub perturbation: Perturbation,
    #[serde(default = "default_scheme")]
    pub scheme: Scheme,
}

fn field(name: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("config field `{name}`: {msg}"))
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.d == 0 || self.d > MAX_DIM {
            return Err(field("d", format!("must be in 1..={MAX_DIM}, got {}", self.d)));
        }
        if self.l == 0 {
            return Err(field("L", "must be positive"));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(field("sigma", format!("must be positive, got {}", self.sigma)));
        }
        if !(self.eps > 0.0 && self.eps < 1.0) {
            return Err(field("eps", format!("must lie in (0, 1), got {}", self.eps)));
        }
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(field("eta", format!("must be positive, got {}", self.eta)));
        }
        if let Some(m) = self.m {
            if m == 0 {
                return Err(field("M", "must be positive"));
            }
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(field("dt", format!("must be positive, got {}", self.dt)));
        }
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return Err(field("T", format!("must be positive, got {}", self.t_end)));
        }
        if self.sample_every == 0 {
            return Err(field("sample_every", "must be positive"));
        }
        Ok(())
    }

    pub fn require_trials(&self) -> Result<(), CliError> {
        if self.trials < 100 {
            return Err(field("trials", format!("at least 100 needed, got {}", self.trials)));
        }
        Ok(())
    }
}
