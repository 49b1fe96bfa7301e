//! Ground-state energies from a constrained search over conditional
//! probability densities.
//!
//! The two-electron-and-up energy is written as
//! `E = W[ρ] + Γ[f, ρ] + ∫vρ`, where `W` is the Weizsäcker term and
//! `Γ = Fisher + Coulomb` depends on the conditional density `f` of the
//! remaining electrons given one at `r`. Minimizing `Γ` over a family of `f`
//! and the total over density parameters gives an estimate of the ground
//! state.

pub mod ansatz;
pub mod config;
pub mod domain;
pub mod error;
pub mod functionals;
pub mod optimizer;
pub mod oracle;
pub mod quadrature;
pub mod record;
pub mod rng;
pub mod runner;
pub mod sampler;
pub mod vec3;

pub use ansatz::{AnsatzFamily, AnsatzParams, ConditionalAnsatz, Configuration, FamilyKind};
pub use domain::{DensityModel, Dimensionality, ExternalPotential, SpaceSpec};
pub use error::{Error, Result};
pub use functionals::{CoulombPrefactor, EnergyBreakdown, Estimate};
pub use quadrature::QuadratureGrid;
pub use sampler::{EstimatorResult, SamplerSettings};
pub use vec3::Vec3;
