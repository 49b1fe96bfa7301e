//! Run configuration, read from TOML.
//!
//! ```toml
//! seed = 7
//!
//! [system]
//! n = 2
//! z = 2.0
//!
//! [ansatz]
//! family = "pairwise"
//! gamma = 1.0
//! beta = 0.5
//! ```
//!
//! Every field except `system.n` and `system.z` has a default.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::ansatz::{AnsatzFamily, AnsatzParams, ConditionalAnsatz, FamilyKind};
use crate::domain::{
    DensityModel, Dimensionality, ExponentialTerm, ExternalPotential, SpaceSpec, DEFAULT_DOMAIN_RADIUS,
    DEFAULT_SOFTENING,
};
use crate::error::{Error, Result};
use crate::functionals::CoulombPrefactor;
use crate::optimizer::OptimizeSpec;
use crate::quadrature::QuadratureGrid;
use crate::sampler::SamplerSettings;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Master seed; when set it replaces `sampler.seed` and `optimize.seed`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default)]
    pub prefactor: CoulombPrefactor,
    #[serde(default)]
    pub test_mode: bool,
    pub system: SystemConfig,
    #[serde(default)]
    pub density: DensityConfig,
    #[serde(default)]
    pub ansatz: AnsatzConfig,
    #[serde(default)]
    pub sampler: SamplerSettings,
    #[serde(default)]
    pub optimize: OptimizeSpec,
    #[serde(default)]
    pub compare: CompareConfig,
    #[serde(default)]
    pub verify: VerifyConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    #[serde(alias = "N")]
    pub n: usize,
    #[serde(alias = "Z")]
    pub z: f64,
    #[serde(default = "default_dimensionality")]
    pub dimensionality: Dimensionality,
    /// Domain radius R (bohr).
    #[serde(default = "default_radius")]
    pub radius: f64,
    /// Softening length a of the 1D interaction.
    #[serde(default = "default_softening")]
    pub softening: f64,
}

fn default_dimensionality() -> Dimensionality {
    Dimensionality::Three
}

fn default_radius() -> f64 {
    DEFAULT_DOMAIN_RADIUS
}

fn default_softening() -> f64 {
    DEFAULT_SOFTENING
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DensityConfig {
    /// Exponents; one value gives a single exponential. Defaults to Z - 5/16.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub zeta: Option<Vec<f64>>,
    /// Mixture weights, one per exponent; equal weights when omitted.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnsatzConfig {
    pub family: FamilyKind,
    pub gamma: f64,
    pub beta: f64,
}

impl Default for AnsatzConfig {
    fn default() -> Self {
        Self {
            family: FamilyKind::Pairwise,
            gamma: 1.0,
            beta: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompareConfig {
    pub families: Vec<FamilyKind>,
    /// Monte Carlo draws per normalization estimate in the condition checks.
    pub condition_trials: usize,
}

impl Default for CompareConfig {
    fn default() -> Self {
        Self {
            families: vec![FamilyKind::Frozen, FamilyKind::Pairwise],
            condition_trials: 4000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyConfig {
    /// Orbital exponent of the reference product; defaults to the first
    /// density exponent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub zeta: Option<f64>,
    /// Grid points for the 1D reference state.
    pub grid_points: usize,
    pub grid_spacing: f64,
    /// Overrides the default residual tolerance of the reference form.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
    pub condition_trials: usize,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            zeta: None,
            grid_points: 32,
            grid_spacing: 0.5,
            tolerance: None,
            condition_trials: 4000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    /// CSV file that receives one row per energy evaluation (appended).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub csv: Option<PathBuf>,
}

impl RunConfig {
    /// Minimal configuration for an atom with `n` electrons and charge `z`.
    pub fn atom(n: usize, z: f64) -> Self {
        Self {
            seed: None,
            prefactor: CoulombPrefactor::Half,
            test_mode: false,
            system: SystemConfig {
                n,
                z,
                dimensionality: Dimensionality::Three,
                radius: DEFAULT_DOMAIN_RADIUS,
                softening: DEFAULT_SOFTENING,
            },
            density: DensityConfig::default(),
            ansatz: AnsatzConfig::default(),
            sampler: SamplerSettings::default(),
            optimize: OptimizeSpec::default(),
            compare: CompareConfig::default(),
            verify: VerifyConfig::default(),
            output: OutputConfig::default(),
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let config = Self::parse_unvalidated(text)?;
        config.validate()?;
        Ok(config)
    }

    /// Syntax and types only; for callers that apply overrides (seed,
    /// test mode) before calling [`RunConfig::validate`].
    pub fn parse_unvalidated(text: &str) -> Result<Self> {
        let mut config: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.apply_seed();
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let config = Self::load_unvalidated(path)?;
        config.validate()?;
        Ok(config)
    }

    pub fn load_unvalidated(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse_unvalidated(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Replaces the master seed and the seeds derived from it.
    pub fn set_seed(&mut self, seed: u64) {
        self.seed = Some(seed);
        self.apply_seed();
    }

    fn apply_seed(&mut self) {
        if let Some(seed) = self.seed {
            self.sampler.seed = seed;
            self.optimize.seed = seed;
        }
    }

    pub fn validate(&self) -> Result<()> {
        let s = &self.system;
        if s.n == 0 {
            return Err(Error::invalid("system.n", "need at least one electron"));
        }
        if !(s.z > 0.0 && s.z.is_finite()) {
            return Err(Error::invalid("system.z", "nuclear charge must be positive"));
        }
        self.space()?;
        self.density()?;
        self.sampler.validate()?;
        self.optimize.validate(self.test_mode)?;
        if self.ansatz.family == FamilyKind::Pairwise {
            self.params().validate(self.test_mode)?;
        }
        if self.verify.grid_points < 2 || !(self.verify.grid_spacing > 0.0) {
            return Err(Error::invalid("verify", "need at least 2 grid points and a positive spacing"));
        }
        Ok(())
    }

    pub fn space(&self) -> Result<SpaceSpec> {
        let s = &self.system;
        SpaceSpec::new(s.dimensionality, s.radius, s.softening, s.n)
    }

    pub fn zetas(&self) -> Vec<f64> {
        self.density.zeta.clone().unwrap_or_else(|| {
            let screened = if self.system.n >= 2 {
                self.system.z - 5.0 / 16.0
            } else {
                self.system.z
            };
            vec![screened.max(0.1)]
        })
    }

    pub fn density(&self) -> Result<DensityModel> {
        let zetas = self.zetas();
        let dim = self.system.dimensionality;
        let n = self.system.n;
        match (&self.density.weights, zetas.as_slice()) {
            (None, [zeta]) => DensityModel::exponential(n, *zeta, dim),
            (weights, _) => {
                let weights = weights.clone().unwrap_or_else(|| vec![1.0; zetas.len()]);
                if weights.len() != zetas.len() {
                    return Err(Error::invalid("density.weights", "need one weight per exponent"));
                }
                let terms = weights
                    .iter()
                    .zip(&zetas)
                    .map(|(&weight, &zeta)| ExponentialTerm { weight, zeta })
                    .collect();
                DensityModel::exponential_mix(n, terms, dim)
            }
        }
    }

    pub fn potential(&self) -> Result<ExternalPotential> {
        Ok(ExternalPotential::nucleus(self.system.z, &self.space()?))
    }

    pub fn params(&self) -> AnsatzParams {
        AnsatzParams::new(self.ansatz.gamma, self.ansatz.beta)
    }

    pub fn family(&self, kind: FamilyKind) -> AnsatzFamily {
        AnsatzFamily::from_kind(kind, self.params())
    }

    pub fn ansatz_for(&self, kind: FamilyKind) -> Result<ConditionalAnsatz> {
        let family = self.family(kind);
        if self.test_mode {
            ConditionalAnsatz::new_test_mode(family, self.density()?, self.space()?)
        } else {
            ConditionalAnsatz::new(family, self.density()?, self.space()?)
        }
    }

    pub fn ansatz(&self) -> Result<ConditionalAnsatz> {
        self.ansatz_for(self.ansatz.family)
    }

    pub fn grid(&self) -> QuadratureGrid {
        QuadratureGrid::default_for(self.system.dimensionality)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_uses_defaults() {
        let c = RunConfig::parse("[system]\nn = 2\nz = 2.0\n").unwrap();
        assert_eq!(c.zetas(), vec![1.6875]);
        assert_eq!(c.ansatz.family, FamilyKind::Pairwise);
        assert_eq!(c.prefactor, CoulombPrefactor::Half);
        assert_eq!(c.sampler, SamplerSettings::default());
    }

    #[test]
    fn missing_electron_count_names_the_field() {
        let err = RunConfig::parse("[system]\nz = 2.0\n").unwrap_err().to_string();
        assert!(err.contains("`n`"), "{err}");
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let err = RunConfig::parse("[system]\nn = 2\nz = 2.0\nspin = 1\n").unwrap_err().to_string();
        assert!(err.contains("spin"), "{err}");
    }

    #[test]
    fn zero_gamma_bound_needs_test_mode() {
        let text = "[system]\nn = 2\nz = 2.0\n[optimize]\ngamma_bounds = { lower = 0.0, upper = 5.0 }\n";
        assert!(RunConfig::parse(text).is_err());
        assert!(RunConfig::parse(&format!("test_mode = true\n{text}")).is_ok());
    }

    #[test]
    fn master_seed_propagates() {
        let c = RunConfig::parse("seed = 99\n[system]\nn = 2\nz = 2.0\n").unwrap();
        assert_eq!(c.sampler.seed, 99);
        assert_eq!(c.optimize.seed, 99);
    }

    #[test]
    fn round_trip() {
        let mut c = RunConfig::atom(3, 3.0);
        c.density.zeta = Some(vec![2.0, 0.7]);
        c.density.weights = Some(vec![2.0, 1.0]);
        c.ansatz.family = FamilyKind::Simple;
        c.output.csv = Some("sweep.csv".into());
        c.set_seed(5);
        let back = RunConfig::parse(&c.to_toml().unwrap()).unwrap();
        assert_eq!(back, c);
    }
}
