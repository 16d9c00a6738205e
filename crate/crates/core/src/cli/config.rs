//! Scenario configuration files (TOML). Complex numbers are `[re, im]`.
//!
//! ```toml
//! [preparation]
//! c_a = [0.7071067811865476, 0.0]
//! c_b = [0.7071067811865476, 0.0]
//!
//! [coupling]
//! d = [0.8944271909999159, 0.0]
//! e = [0.4472135954999579, 0.0]
//!
//! [dynamics]
//! gamma = 10.0
//! t_max = 2.0
//! ```
//!
//! Every section and key is optional; missing values take the defaults
//! below, which describe the balanced two-slit scenario with d² = 0.8.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::coupling::{CouplingSpec, SLIT_LABELS};
use crate::error::{Error, Result};
use crate::qcore::{numerics, Basis, StateVector, C64};
use crate::screen::ScreenGeometry;

/// A complex number written as `[re, im]`.
pub type ComplexPair = [f64; 2];

fn to_c64(p: ComplexPair) -> C64 {
    C64::new(p[0], p[1])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Preparation {
    pub c_a: ComplexPair,
    pub c_b: ComplexPair,
}

impl Default for Preparation {
    fn default() -> Self {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        Self {
            c_a: [h, 0.0],
            c_b: [h, 0.0],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CouplingConfig {
    pub d: ComplexPair,
    pub e: ComplexPair,
}

impl Default for CouplingConfig {
    fn default() -> Self {
        Self {
            d: [0.8f64.sqrt(), 0.0],
            e: [0.2f64.sqrt(), 0.0],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DynamicsConfig {
    pub gamma: f64,
    pub t_max: f64,
    pub n_grid: usize,
    pub n_traj: u64,
    pub seed: Option<u64>,
    /// Allowed |fitted λ - Γ(1 - Re f)|.
    pub lambda_tolerance: f64,
    /// Smallest fraction of grid points that must satisfy |z| < 3.
    pub min_z_fraction: f64,
}

impl Default for DynamicsConfig {
    fn default() -> Self {
        Self {
            gamma: 10.0,
            t_max: 2.0,
            n_grid: 50,
            n_traj: 100_000,
            seed: None,
            lambda_tolerance: 0.05,
            min_z_fraction: 0.99,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplingConfig {
    /// Simulated detector hits for `screen`.
    pub n_hits: u64,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self { n_hits: 100_000 }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub preparation: Preparation,
    pub coupling: CouplingConfig,
    pub dynamics: DynamicsConfig,
    pub screen: ScreenGeometry,
    pub sampling: SamplingConfig,
}

fn check_unit(constraint: &str, a: ComplexPair, b: ComplexPair) -> Result<()> {
    let value = to_c64(a).norm_sqr() + to_c64(b).norm_sqr();
    let tolerance = numerics().parameter;
    if !((value - 1.0).abs() <= tolerance) {
        return Err(Error::Constraint {
            constraint: constraint.into(),
            value,
            tolerance,
        });
    }
    Ok(())
}

impl ScenarioConfig {
    /// Parses and validates a config file's text.
    pub fn from_toml_str(text: &str) -> std::result::Result<Self, ConfigError> {
        let cfg: ScenarioConfig =
            toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate().map_err(ConfigError::Invalid)?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        check_unit(
            "preparation: |c_A|^2+|c_B|^2",
            self.preparation.c_a,
            self.preparation.c_b,
        )?;
        check_unit("coupling: |d|^2+|e|^2", self.coupling.d, self.coupling.e)?;
        let dy = &self.dynamics;
        if !(dy.gamma > 0.0) || !dy.gamma.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "dynamics.gamma must be positive, got {}",
                dy.gamma
            )));
        }
        if !(dy.t_max > 0.0) || !dy.t_max.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "dynamics.t_max must be positive, got {}",
                dy.t_max
            )));
        }
        if dy.n_grid < 2 {
            return Err(Error::InvalidParameter(
                "dynamics.n_grid must be at least 2".into(),
            ));
        }
        if dy.n_traj < 2 {
            return Err(Error::InvalidParameter(
                "dynamics.n_traj must be at least 2".into(),
            ));
        }
        Ok(())
    }

    /// Prepared emitter state c_A|A⟩ + c_B|B⟩, renormalized exactly.
    pub fn system_state(&self) -> Result<StateVector> {
        StateVector::normalized(
            vec![to_c64(self.preparation.c_a), to_c64(self.preparation.c_b)],
            Basis::single(SLIT_LABELS),
        )
    }

    pub fn coupling_spec(&self) -> Result<CouplingSpec> {
        CouplingSpec::two_slit(to_c64(self.coupling.d), to_c64(self.coupling.e))
    }

    /// SHA-256 of the canonical TOML serialization, hex encoded.
    pub fn hash(&self) -> String {
        let canonical = toml::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("invalid config: {0}")]
    Invalid(Error),
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_default_scenario() {
        let cfg = ScenarioConfig::from_toml_str("").unwrap();
        assert_eq!(cfg, ScenarioConfig::default());
        assert_eq!(cfg.dynamics.n_traj, 100_000);
        assert_eq!(cfg.dynamics.seed, None);
    }

    #[test]
    fn parses_complex_pairs() {
        let cfg = ScenarioConfig::from_toml_str(
            "[preparation]\nc_a = [0.6, 0.0]\nc_b = [0.0, 0.8]\n[coupling]\nd = [1.0, 0.0]\ne = [0.0, 0.0]\n",
        )
        .unwrap();
        let psi = cfg.system_state().unwrap();
        assert_eq!(psi.amplitudes()[1], C64::new(0.0, 0.8));
    }

    #[test]
    fn names_violated_constraint() {
        let err = ScenarioConfig::from_toml_str(
            "[coupling]\nd = [0.9486832980505138, 0.0]\ne = [0.0, 0.0]\n",
        )
        .unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("|d|^2+|e|^2"), "{msg}");
        assert!(msg.contains("0.89"), "{msg}");

        let err =
            ScenarioConfig::from_toml_str("[preparation]\nc_a = [1.0, 0.0]\nc_b = [1.0, 0.0]\n")
                .unwrap_err();
        assert!(err.to_string().contains("|c_A|^2+|c_B|^2"));
    }

    #[test]
    fn parse_errors_carry_location() {
        let err = ScenarioConfig::from_toml_str("[coupling]\nd = [1.0, 0.0\n").unwrap_err();
        assert!(matches!(err, ConfigError::Parse(_)));
        assert!(err.to_string().contains("line"), "{err}");

        let err = ScenarioConfig::from_toml_str("[coupling]\nf = [1.0, 0.0]\n").unwrap_err();
        assert!(err.to_string().contains("f"), "{err}");
    }

    #[test]
    fn hash_tracks_content() {
        let a = ScenarioConfig::default();
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.dynamics.gamma = 11.0;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }
}
