//! Conditional probability families f(r2..rN / r).
//!
//! Every family is represented by its unnormalized log-density log f̃ and
//! the score ∇_r log f̃ with respect to the conditioning point. The
//! normalization constant is only needed for condition (i) checks: the
//! Fisher estimator works with score variances, which are invariant to it.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::domain::{DensityModel, Dimensionality, SpaceSpec};
use crate::error::{Error, Result};
use crate::quadrature::QuadratureGrid;
use crate::rng::{self, StreamRng};
use crate::vec3::Vec3;

pub const GAMMA_MAX: f64 = 50.0;
pub const BETA_MAX: f64 = 50.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnsatzParams {
    pub gamma: f64,
    pub beta: f64,
}

impl AnsatzParams {
    pub fn new(gamma: f64, beta: f64) -> Self {
        Self { gamma, beta }
    }

    pub fn validate(&self, test_mode: bool) -> Result<()> {
        let gamma_ok = if test_mode {
            self.gamma >= 0.0
        } else {
            self.gamma > 0.0
        };
        if !gamma_ok || self.gamma > GAMMA_MAX || !self.gamma.is_finite() {
            return Err(Error::invalid(
                "ansatz.gamma",
                format!("gamma must lie in (0, {GAMMA_MAX}] (0 allowed only in test mode), got {}", self.gamma),
            ));
        }
        if !(self.beta >= 0.0 && self.beta <= BETA_MAX) {
            return Err(Error::invalid(
                "ansatz.beta",
                format!("beta must lie in [0, {BETA_MAX}], got {}", self.beta),
            ));
        }
        Ok(())
    }
}

/// Family name without parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FamilyKind {
    Simple,
    Pairwise,
    Frozen,
    GaussianShift,
}

impl FamilyKind {
    pub fn name(self) -> &'static str {
        match self {
            FamilyKind::Simple => "simple",
            FamilyKind::Pairwise => "pairwise",
            FamilyKind::Frozen => "frozen",
            FamilyKind::GaussianShift => "gaussian-shift",
        }
    }

    pub fn free_parameters(self) -> usize {
        match self {
            FamilyKind::Pairwise => 2,
            _ => 0,
        }
    }
}

impl std::fmt::Display for FamilyKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AnsatzFamily {
    /// f = e^{(N-1)Ē(r)} Π_n e^{-E_H(r, r_n)} on ω^{N-1}.
    SimpleFactorized,
    /// f ∝ Π_n e^{-γ E_H(r, r_n)} Π_{i>j} e^{-β E_H(r_i, r_j)} on ω^{N-1}.
    PairwiseBiparametric(AnsatzParams),
    /// f = Π_n ρ(r_n)/N; no dependence on the conditioning point.
    FrozenOrbitalProduct,
    /// f ∝ Π_n e^{-|r_n - r|²/2}; a toy family with unit score variance per axis.
    GaussianShift,
}

impl AnsatzFamily {
    pub fn kind(&self) -> FamilyKind {
        match self {
            AnsatzFamily::SimpleFactorized => FamilyKind::Simple,
            AnsatzFamily::PairwiseBiparametric(_) => FamilyKind::Pairwise,
            AnsatzFamily::FrozenOrbitalProduct => FamilyKind::Frozen,
            AnsatzFamily::GaussianShift => FamilyKind::GaussianShift,
        }
    }

    pub fn params(&self) -> Option<AnsatzParams> {
        match self {
            AnsatzFamily::PairwiseBiparametric(p) => Some(*p),
            _ => None,
        }
    }

    pub fn from_kind(kind: FamilyKind, params: AnsatzParams) -> Self {
        match kind {
            FamilyKind::Simple => AnsatzFamily::SimpleFactorized,
            FamilyKind::Pairwise => AnsatzFamily::PairwiseBiparametric(params),
            FamilyKind::Frozen => AnsatzFamily::FrozenOrbitalProduct,
            FamilyKind::GaussianShift => AnsatzFamily::GaussianShift,
        }
    }
}

/// The conditioning point r and the N-1 satellite positions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Configuration {
    pub point: Vec3,
    pub satellites: Vec<Vec3>,
}

impl Configuration {
    pub fn new(point: Vec3, satellites: Vec<Vec3>) -> Self {
        Self { point, satellites }
    }
}

/// E_H(r, r') = ρ(r)ρ(r')/|r - r'| (softened kernel in 1D).
///
/// Coincident points with non-zero density give +∞.
pub fn pair_energy(density: &DensityModel, space: &SpaceSpec, r: Vec3, r2: Vec3) -> f64 {
    pair_energy_from_values(space, density.value(r), density.value(r2), r - r2)
}

fn pair_energy_from_values(space: &SpaceSpec, rho_a: f64, rho_b: f64, d: Vec3) -> f64 {
    let product = rho_a * rho_b;
    if product == 0.0 {
        return 0.0;
    }
    if space.dimensionality() == Dimensionality::Three && d.norm_sq() == 0.0 {
        return f64::INFINITY;
    }
    product * space.kernel(d)
}

/// ∇_r E_H(r, r') for fixed r'.
fn pair_energy_gradient(
    density: &DensityModel,
    space: &SpaceSpec,
    r: Vec3,
    r2: Vec3,
) -> Result<Vec3> {
    let rho_b = density.value(r2);
    if rho_b == 0.0 {
        return Ok(Vec3::ZERO);
    }
    let d = r - r2;
    let rho_a = density.value(r);
    let grad_a = density.gradient(r)?;
    Ok((grad_a * space.kernel(d) + space.kernel_gradient(d) * rho_a) * rho_b)
}

#[derive(Debug, Clone)]
pub struct ConditionalAnsatz {
    family: AnsatzFamily,
    density: DensityModel,
    space: SpaceSpec,
    test_mode: bool,
}

impl ConditionalAnsatz {
    pub fn new(family: AnsatzFamily, density: DensityModel, space: SpaceSpec) -> Result<Self> {
        Self::build(family, density, space, false)
    }

    /// Like [`ConditionalAnsatz::new`] but admits γ = 0.
    pub fn new_test_mode(family: AnsatzFamily, density: DensityModel, space: SpaceSpec) -> Result<Self> {
        Self::build(family, density, space, true)
    }

    fn build(family: AnsatzFamily, density: DensityModel, space: SpaceSpec, test_mode: bool) -> Result<Self> {
        if let AnsatzFamily::PairwiseBiparametric(p) = family {
            p.validate(test_mode)?;
        }
        if density.dimensionality() != space.dimensionality() {
            return Err(Error::DimensionMismatch {
                expected: space.dimensionality(),
                found: density.dimensionality(),
            });
        }
        if density.electrons() != space.electrons() {
            return Err(Error::invalid(
                "density",
                format!(
                    "density integrates to {} electrons but the system has {}",
                    density.electrons(),
                    space.electrons()
                ),
            ));
        }
        Ok(Self {
            family,
            density,
            space,
            test_mode,
        })
    }

    pub fn family(&self) -> &AnsatzFamily {
        &self.family
    }

    pub fn density(&self) -> &DensityModel {
        &self.density
    }

    pub fn space(&self) -> &SpaceSpec {
        &self.space
    }

    pub fn test_mode(&self) -> bool {
        self.test_mode
    }

    pub fn satellite_count(&self) -> usize {
        self.space.electrons() - 1
    }

    pub fn with_family(&self, family: AnsatzFamily) -> Result<Self> {
        Self::build(family, self.density.clone(), self.space, self.test_mode)
    }

    pub fn with_density(&self, density: DensityModel) -> Result<Self> {
        Self::build(self.family, density, self.space, self.test_mode)
    }

    /// Satellites confined to the ω region.
    pub fn has_bounded_support(&self) -> bool {
        matches!(
            self.family,
            AnsatzFamily::SimpleFactorized | AnsatzFamily::PairwiseBiparametric(_)
        )
    }

    fn check_count(&self, cfg: &Configuration) -> Result<()> {
        if cfg.satellites.len() != self.satellite_count() {
            return Err(Error::SatelliteCount {
                expected: self.satellite_count(),
                found: cfg.satellites.len(),
            });
        }
        Ok(())
    }

    pub fn log_f_unnormalized(&self, cfg: &Configuration) -> Result<f64> {
        self.check_count(cfg)?;
        Ok(self.log_weight(cfg.point, &cfg.satellites))
    }

    /// log f̃ without the satellite-count check.
    pub(crate) fn log_weight(&self, point: Vec3, satellites: &[Vec3]) -> f64 {
        if self.has_bounded_support() && satellites.iter().any(|&s| !self.space.in_omega(s)) {
            return f64::NEG_INFINITY;
        }
        match self.family {
            AnsatzFamily::SimpleFactorized => self.log_pairwise_weight(point, satellites, 1.0, 0.0),
            AnsatzFamily::PairwiseBiparametric(p) => {
                self.log_pairwise_weight(point, satellites, p.gamma, p.beta)
            }
            AnsatzFamily::FrozenOrbitalProduct => {
                let n = self.space.electrons() as f64;
                satellites.iter().map(|&s| (self.density.value(s) / n).ln()).sum()
            }
            AnsatzFamily::GaussianShift => {
                -0.5 * satellites.iter().map(|&s| (s - point).norm_sq()).sum::<f64>()
            }
        }
    }

    fn log_pairwise_weight(&self, point: Vec3, satellites: &[Vec3], gamma: f64, beta: f64) -> f64 {
        let rho_point = self.density.value(point);
        let rho_sat: Vec<f64> = satellites.iter().map(|&s| self.density.value(s)).collect();
        let mut total = 0.0;
        if gamma != 0.0 {
            for (&s, &rho_s) in satellites.iter().zip(&rho_sat) {
                total -= gamma * pair_energy_from_values(&self.space, rho_point, rho_s, point - s);
            }
        }
        if beta != 0.0 {
            for i in 0..satellites.len() {
                for j in 0..i {
                    total -= beta
                        * pair_energy_from_values(&self.space, rho_sat[i], rho_sat[j], satellites[i] - satellites[j]);
                }
            }
        }
        total
    }

    /// s = ∇_r log f̃ at the conditioning point.
    pub fn score(&self, cfg: &Configuration) -> Result<Vec3> {
        self.check_count(cfg)?;
        self.score_raw(cfg.point, &cfg.satellites)
    }

    pub(crate) fn score_raw(&self, point: Vec3, satellites: &[Vec3]) -> Result<Vec3> {
        let scale = match self.family {
            AnsatzFamily::SimpleFactorized => 1.0,
            AnsatzFamily::PairwiseBiparametric(p) => p.gamma,
            AnsatzFamily::FrozenOrbitalProduct => return Ok(Vec3::ZERO),
            AnsatzFamily::GaussianShift => {
                let mut s = Vec3::ZERO;
                for &sat in satellites {
                    s += sat - point;
                }
                return Ok(s);
            }
        };
        if scale == 0.0 {
            return Ok(Vec3::ZERO);
        }
        let mut s = Vec3::ZERO;
        for &sat in satellites {
            s -= pair_energy_gradient(&self.density, &self.space, point, sat)? * scale;
        }
        Ok(s)
    }

    /// Quadrature grid covering the ω region.
    pub fn omega_grid(&self, n_radial: usize, n_theta: usize, n_phi: usize) -> QuadratureGrid {
        let radius = self.space.omega_radius();
        match self.space.dimensionality() {
            Dimensionality::Three => QuadratureGrid::ball(radius, n_radial, n_theta, n_phi),
            Dimensionality::OneSoftened => {
                let n = if n_radial.is_multiple_of(2) { n_radial + 1 } else { n_radial.max(3) };
                QuadratureGrid::uniform_1d(radius, n).expect("odd node count")
            }
        }
    }

    pub fn default_omega_grid(&self) -> QuadratureGrid {
        match self.space.dimensionality() {
            Dimensionality::Three => self.omega_grid(96, 32, 32),
            Dimensionality::OneSoftened => self.omega_grid(4001, 1, 1),
        }
    }

    /// ln ∫_ω e^{-scale·E_H(r, r')} dr' by quadrature.
    pub fn log_pair_partition(&self, r: Vec3, scale: f64, grid: &QuadratureGrid) -> Result<f64> {
        if grid.dimensionality() != self.space.dimensionality() {
            return Err(Error::DimensionMismatch {
                expected: self.space.dimensionality(),
                found: grid.dimensionality(),
            });
        }
        let rho_r = self.density.value(r);
        let z = grid.integrate(|p| {
            if !self.space.in_omega(p) {
                return 0.0;
            }
            let e = pair_energy_from_values(&self.space, rho_r, self.density.value(p), r - p);
            (-scale * e).exp()
        });
        if !(z > 0.0) {
            return Err(Error::DegenerateNormalization);
        }
        Ok(z.ln())
    }

    /// Ē(r) = -ln ∫_ω e^{-E_H(r, r')} dr' for the simple family.
    pub fn normalization_simple(&self, r: Vec3, grid: &QuadratureGrid) -> Result<f64> {
        if self.family != AnsatzFamily::SimpleFactorized {
            return Err(Error::Unsupported {
                operation: "normalization_simple",
                what: format!("the {} family", self.family.kind()),
            });
        }
        Ok(-self.log_pair_partition(r, 1.0, grid)?)
    }

    /// Ē̄(r) = -ln ∫_{ω^{N-1}} f̃ by uniform Monte Carlo in log-sum-exp form.
    pub fn log_normalization_pairwise(
        &self,
        r: Vec3,
        samples: usize,
        rng: &mut StreamRng,
    ) -> Result<LogEstimate> {
        if !matches!(self.family, AnsatzFamily::PairwiseBiparametric(_)) {
            return Err(Error::Unsupported {
                operation: "log_normalization_pairwise",
                what: format!("the {} family", self.family.kind()),
            });
        }
        let log_int = self.log_integral_uniform(r, samples, rng)?;
        Ok(LogEstimate {
            value: -log_int.value,
            stderr: log_int.stderr,
        })
    }

    /// ln ∫_{ω^{N-1}} f̃ from uniform draws.
    fn log_integral_uniform(&self, r: Vec3, samples: usize, rng: &mut StreamRng) -> Result<LogEstimate> {
        if samples == 0 {
            return Err(Error::invalid("samples", "need at least one sample"));
        }
        let k = self.satellite_count();
        let mut sats = vec![Vec3::ZERO; k];
        let logs: Vec<f64> = (0..samples)
            .map(|_| {
                for s in sats.iter_mut() {
                    *s = self.space.sample_omega(rng);
                }
                self.log_weight(r, &sats)
            })
            .collect();
        let log_mean = log_mean_exp(&logs).ok_or(Error::DegenerateNormalization)?;
        Ok(LogEstimate {
            value: log_mean.value + k as f64 * self.space.omega_volume().ln(),
            stderr: log_mean.stderr,
        })
    }

    pub fn has_exact_sampler(&self) -> bool {
        matches!(
            self.family,
            AnsatzFamily::FrozenOrbitalProduct | AnsatzFamily::GaussianShift
        )
    }

    /// Draw satellites directly from f when the family admits it.
    pub fn exact_satellites(&self, point: Vec3, rng: &mut StreamRng) -> Option<Vec<Vec3>> {
        let k = self.satellite_count();
        match self.family {
            AnsatzFamily::FrozenOrbitalProduct => Some((0..k).map(|_| self.density.sample(rng)).collect()),
            AnsatzFamily::GaussianShift => Some(
                (0..k)
                    .map(|_| {
                        let mut d = Vec3::ZERO;
                        for axis in 0..self.space.components() {
                            d = d.with_component(axis, rng.sample(StandardNormal));
                        }
                        point + d
                    })
                    .collect(),
            ),
            _ => None,
        }
    }

    /// A satellite configuration with finite log f̃, used to start chains.
    pub fn initial_satellites(&self, point: Vec3, rng: &mut StreamRng) -> Result<Vec<Vec3>> {
        if let Some(sats) = self.exact_satellites(point, rng) {
            return Ok(sats);
        }
        for _ in 0..10_000 {
            let sats: Vec<Vec3> = (0..self.satellite_count())
                .map(|_| self.space.sample_omega(rng))
                .collect();
            if self.log_weight(point, &sats).is_finite() {
                return Ok(sats);
            }
        }
        Err(Error::DegenerateNormalization)
    }

    /// Log-density of the draws made by [`ConditionalAnsatz::exact_satellites`].
    fn sampler_log_density(&self, point: Vec3, satellites: &[Vec3]) -> f64 {
        match self.family {
            AnsatzFamily::FrozenOrbitalProduct => {
                let n = self.space.electrons() as f64;
                satellites.iter().map(|&s| (self.density.value(s) / n).ln()).sum()
            }
            AnsatzFamily::GaussianShift => {
                let d = self.space.components() as f64;
                satellites
                    .iter()
                    .map(|&s| -0.5 * (s - point).norm_sq() - 0.5 * d * (2.0 * std::f64::consts::PI).ln())
                    .sum()
            }
            _ => f64::NAN,
        }
    }

    /// Log normalizer of f for families where it is known in closed form.
    fn exact_log_normalizer(&self) -> Option<f64> {
        let k = self.satellite_count() as f64;
        match self.family {
            AnsatzFamily::FrozenOrbitalProduct => Some(0.0),
            AnsatzFamily::GaussianShift => {
                let d = self.space.components() as f64;
                Some(-0.5 * k * d * (2.0 * std::f64::consts::PI).ln())
            }
            _ => None,
        }
    }

    /// Checks conditions (i)-(iii) on `points` conditioning points drawn
    /// from ρ/N, with `trials` Monte Carlo samples per normalization estimate.
    pub fn check_conditions(&self, trials: usize, seed: u64) -> Result<ConditionsReport> {
        self.check_conditions_at(10, trials, seed)
    }

    pub fn check_conditions_at(&self, points: usize, trials: usize, seed: u64) -> Result<ConditionsReport> {
        let mut point_rng = rng::stream(seed, "conditions/points", 0);
        let conditioning: Vec<Vec3> = (0..points)
            .map(|_| loop {
                let p = self.density.sample(&mut point_rng);
                if !self.has_bounded_support() || self.space.in_omega(p) {
                    break p;
                }
            })
            .collect();

        let mut normalization = Vec::with_capacity(points);
        for (i, &p) in conditioning.iter().enumerate() {
            let mut rng_a = rng::stream(seed, "conditions/normalizer", i as u64);
            let mut rng_b = rng::stream(seed, "conditions/integral", i as u64);
            normalization.push(self.normalization_check(p, trials, &mut rng_a, &mut rng_b)?);
        }
        let condition_i = normalization.iter().all(|c| c.passed);

        let mut probe_rng = rng::stream(seed, "conditions/coincidence", 0);
        let k = self.satellite_count();

        // (ii): a satellite placed on the conditioning point
        let condition_ii = if k == 0 {
            CoincidenceCheck {
                passed: true,
                probed_extra_satellite: false,
                vacuous: true,
            }
        } else {
            let passed = conditioning.iter().all(|&p| {
                let mut sats = self.random_valid_satellites(k, &mut probe_rng);
                sats[0] = p;
                self.log_weight(p, &sats) == f64::NEG_INFINITY
            });
            CoincidenceCheck {
                passed,
                probed_extra_satellite: false,
                vacuous: false,
            }
        };

        // (iii): two satellites on top of each other; families are defined
        // for any satellite count, so N < 3 is probed with two satellites.
        let probe_count = k.max(2);
        let passed_iii = conditioning.iter().all(|&p| {
            let mut sats = self.random_valid_satellites(probe_count, &mut probe_rng);
            let shared = loop {
                let q = self.random_valid_satellites(1, &mut probe_rng)[0];
                if q != p {
                    break q;
                }
            };
            sats[0] = shared;
            sats[1] = shared;
            self.log_weight(p, &sats) == f64::NEG_INFINITY
        });
        let condition_iii = CoincidenceCheck {
            passed: passed_iii,
            probed_extra_satellite: probe_count > k,
            vacuous: false,
        };

        Ok(ConditionsReport {
            family: self.family.kind(),
            params: self.family.params(),
            normalization,
            condition_i,
            fermionic_compatible: condition_ii.passed && condition_iii.passed,
            condition_ii,
            condition_iii,
        })
    }

    fn random_valid_satellites(&self, count: usize, rng: &mut StreamRng) -> Vec<Vec3> {
        (0..count)
            .map(|_| {
                if self.has_bounded_support() {
                    self.space.sample_omega(rng)
                } else {
                    self.density.sample(rng)
                }
            })
            .collect()
    }

    fn normalization_check(
        &self,
        point: Vec3,
        trials: usize,
        rng_a: &mut StreamRng,
        rng_b: &mut StreamRng,
    ) -> Result<NormalizationCheck> {
        let (estimate, stderr) = match self.family {
            AnsatzFamily::FrozenOrbitalProduct | AnsatzFamily::GaussianShift => {
                // importance sampling from the family's own exact sampler
                let log_norm = self.exact_log_normalizer().expect("closed-form family");
                let ratios: Vec<f64> = (0..trials.max(1))
                    .map(|_| {
                        let sats = self.exact_satellites(point, rng_b).expect("exact sampler");
                        let log_f = self.log_weight(point, &sats) + log_norm;
                        (log_f - self.sampler_log_density(point, &sats)).exp()
                    })
                    .collect();
                mean_and_stderr(&ratios)
            }
            AnsatzFamily::SimpleFactorized => {
                let grid = self.default_omega_grid();
                let e_bar = -self.log_pair_partition(point, 1.0, &grid)?;
                let log_norm = self.satellite_count() as f64 * e_bar;
                let integral = self.log_integral_uniform(point, trials, rng_b)?;
                let value = (integral.value + log_norm).exp();
                (value, value * integral.stderr)
            }
            AnsatzFamily::PairwiseBiparametric(_) => {
                let normalizer = self.log_normalization_pairwise(point, trials, rng_a)?;
                let integral = self.log_integral_uniform(point, trials, rng_b)?;
                let value = (integral.value + normalizer.value).exp();
                let rel = (integral.stderr.powi(2) + normalizer.stderr.powi(2)).sqrt();
                (value, value * rel)
            }
        };
        let deviation = estimate - 1.0;
        let z_score = if stderr > 0.0 { deviation / stderr } else { 0.0 };
        let passed = if stderr > 0.0 {
            z_score.abs() < 3.0
        } else {
            deviation.abs() < 1e-12
        };
        Ok(NormalizationCheck {
            point,
            estimate,
            stderr,
            z_score,
            passed,
        })
    }
}

/// A Monte Carlo estimate of a logarithm with its delta-method error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogEstimate {
    pub value: f64,
    pub stderr: f64,
}

/// ln(mean(e^{x_i})) and the standard error of that log-mean.
pub fn log_mean_exp(logs: &[f64]) -> Option<LogEstimate> {
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return None;
    }
    let scaled: Vec<f64> = logs.iter().map(|&l| (l - max).exp()).collect();
    let (mean, se) = mean_and_stderr(&scaled);
    Some(LogEstimate {
        value: max + mean.ln(),
        stderr: se / mean,
    })
}

fn mean_and_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NormalizationCheck {
    pub point: Vec3,
    pub estimate: f64,
    pub stderr: f64,
    pub z_score: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CoincidenceCheck {
    pub passed: bool,
    /// The system has fewer satellites than the check needs; the family
    /// was evaluated with an extra satellite.
    pub probed_extra_satellite: bool,
    pub vacuous: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConditionsReport {
    pub family: FamilyKind,
    pub params: Option<AnsatzParams>,
    pub normalization: Vec<NormalizationCheck>,
    pub condition_i: bool,
    pub condition_ii: CoincidenceCheck,
    pub condition_iii: CoincidenceCheck,
    pub fermionic_compatible: bool,
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn helium_density(zeta: f64) -> DensityModel {
        DensityModel::atomic(2, zeta).unwrap()
    }

    fn pairwise(n: usize, zeta: f64, gamma: f64, beta: f64) -> ConditionalAnsatz {
        ConditionalAnsatz::new(
            AnsatzFamily::PairwiseBiparametric(AnsatzParams::new(gamma, beta)),
            DensityModel::atomic(n, zeta).unwrap(),
            SpaceSpec::atom(n),
        )
        .unwrap()
    }

    #[test]
    fn pair_energy_closed_form() {
        let rho = DensityModel::atomic(2, 1.0).unwrap();
        let space = SpaceSpec::atom(2);
        let a = Vec3::new(0.0, 0.0, 0.5);
        let b = Vec3::new(0.0, 0.0, -0.5);
        let rho_half = 2.0 / PI * (-1.0f64).exp();
        let e = pair_energy(&rho, &space, a, b);
        assert!((e - rho_half * rho_half).abs() < 1e-14);
        assert_eq!(e, pair_energy(&rho, &space, b, a));
        assert_eq!(pair_energy(&rho, &space, a, a), f64::INFINITY);
    }

    #[test]
    fn pair_energy_vanishes_with_zero_density() {
        let rho = DensityModel::tabulated_1d(2, -1.0, 0.5, vec![1.0; 5]).unwrap();
        let space = SpaceSpec::line(2, 4.0, 1.0).unwrap();
        assert_eq!(pair_energy(&rho, &space, Vec3::on_line(3.0), Vec3::on_line(0.0)), 0.0);
        // softened kernel stays finite at coincidence
        let e = pair_energy(&rho, &space, Vec3::on_line(0.1), Vec3::on_line(0.1));
        assert!((e - 1.0).abs() < 1e-14);
    }

    #[test]
    fn gamma_zero_requires_test_mode() {
        let fam = AnsatzFamily::PairwiseBiparametric(AnsatzParams::new(0.0, 0.0));
        let rho = helium_density(1.6875);
        assert!(ConditionalAnsatz::new(fam, rho.clone(), SpaceSpec::atom(2)).is_err());
        let a = ConditionalAnsatz::new_test_mode(fam, rho, SpaceSpec::atom(2)).unwrap();
        let cfg = Configuration::new(Vec3::new(0.1, 0.2, 0.3), vec![Vec3::new(0.1, 0.2, 0.3)]);
        assert_eq!(a.log_f_unnormalized(&cfg).unwrap(), 0.0);
    }

    #[test]
    fn parameter_bounds() {
        assert!(AnsatzParams::new(GAMMA_MAX + 1.0, 0.0).validate(false).is_err());
        assert!(AnsatzParams::new(1.0, -0.1).validate(false).is_err());
        assert!(AnsatzParams::new(1.0, BETA_MAX).validate(false).is_ok());
    }

    #[test]
    fn coincidence_with_conditioning_point_is_excluded() {
        let a = pairwise(2, 1.6875, 0.5, 0.5);
        let p = Vec3::new(0.2, -0.1, 0.4);
        let cfg = Configuration::new(p, vec![p]);
        assert_eq!(a.log_f_unnormalized(&cfg).unwrap(), f64::NEG_INFINITY);
    }

    #[test]
    fn three_electron_pairwise_term_by_term() {
        let a = pairwise(3, 2.1, 1.0, 2.0);
        let rho = a.density().clone();
        let space = *a.space();
        let r = Vec3::new(0.3, 0.1, -0.2);
        let r2 = Vec3::new(-0.5, 0.4, 0.0);
        let r3 = Vec3::new(0.0, -0.7, 1.1);
        let expected = -pair_energy(&rho, &space, r, r2) - pair_energy(&rho, &space, r, r3)
            - 2.0 * pair_energy(&rho, &space, r2, r3);
        let got = a.log_f_unnormalized(&Configuration::new(r, vec![r2, r3])).unwrap();
        assert!((got - expected).abs() < 1e-12 * expected.abs());
    }

    #[test]
    fn satellites_outside_omega_have_zero_weight() {
        let a = pairwise(2, 1.6875, 1.0, 0.0);
        let far = Vec3::new(0.0, 0.0, a.space().omega_radius() + 0.1);
        assert_eq!(a.log_weight(Vec3::ZERO, &[far]), f64::NEG_INFINITY);
    }

    #[test]
    fn satellite_count_is_validated() {
        let a = pairwise(3, 2.0, 1.0, 1.0);
        let err = a.log_f_unnormalized(&Configuration::new(Vec3::ZERO, vec![Vec3::ZERO]));
        assert!(matches!(err, Err(Error::SatelliteCount { expected: 2, found: 1 })));
    }

    #[test]
    fn frozen_family_has_zero_score() {
        let a = ConditionalAnsatz::new(AnsatzFamily::FrozenOrbitalProduct, helium_density(1.6), SpaceSpec::atom(2))
            .unwrap();
        let cfg = Configuration::new(Vec3::new(0.4, 0.0, 0.0), vec![Vec3::new(0.0, 1.0, 0.0)]);
        assert_eq!(a.score(&cfg).unwrap(), Vec3::ZERO);
    }

    #[test]
    fn gaussian_toy_score() {
        let space = SpaceSpec::line(2, 10.0, 1.0).unwrap();
        let rho = DensityModel::exponential(2, 1.0, Dimensionality::OneSoftened).unwrap();
        let a = ConditionalAnsatz::new(AnsatzFamily::GaussianShift, rho, space).unwrap();
        let cfg = Configuration::new(Vec3::on_line(0.3), vec![Vec3::on_line(1.7)]);
        let s = a.score(&cfg).unwrap();
        assert!((s.x - 1.4).abs() < 1e-14);
    }

    #[test]
    fn normalization_of_trivial_integrands() {
        // ρ ≡ 0 on ω: integrand 1, Ē = -ln vol(ω)
        let space = SpaceSpec::line(2, 4.0, 1.0).unwrap();
        let rho = DensityModel::tabulated_1d(2, 10.0, 0.5, vec![1.0, 1.0, 1.0]).unwrap();
        let a = ConditionalAnsatz::new(AnsatzFamily::SimpleFactorized, rho, space).unwrap();
        let grid = a.default_omega_grid();
        let e = a.normalization_simple(Vec3::on_line(0.0), &grid).unwrap();
        assert!((e + space.omega_volume().ln()).abs() < 1e-12);

        // uniform density, unit ω volume, softened kernel forced constant: E_H = c
        let space = SpaceSpec::line(2, 1.0, 1e6).unwrap();
        let rho = DensityModel::tabulated_1d(2, -5.0, 0.5, vec![1.0; 21]).unwrap();
        let a = ConditionalAnsatz::new(AnsatzFamily::SimpleFactorized, rho.clone(), space).unwrap();
        let c = 0.2 * 0.2 / 1e6;
        let e = a.normalization_simple(Vec3::on_line(0.0), &a.default_omega_grid()).unwrap();
        assert!((space.omega_volume() - 1.0).abs() < 1e-15);
        assert!((e - c).abs() < 1e-12, "{e} vs {c}");

        let p = a.with_family(AnsatzFamily::PairwiseBiparametric(AnsatzParams::new(1.0, 0.0))).unwrap();
        assert!(p.normalization_simple(Vec3::ZERO, &p.default_omega_grid()).is_err());
    }

    #[test]
    fn uniform_integrand_gives_exact_pairwise_normalizer() {
        let a = ConditionalAnsatz::new_test_mode(
            AnsatzFamily::PairwiseBiparametric(AnsatzParams::new(0.0, 0.0)),
            DensityModel::atomic(3, 2.0).unwrap(),
            SpaceSpec::atom(3),
        )
        .unwrap();
        let mut rng = rng::stream(1, "test", 0);
        let est = a.log_normalization_pairwise(Vec3::new(0.1, 0.0, 0.0), 100, &mut rng).unwrap();
        let expected = -2.0 * a.space().omega_volume().ln();
        assert!((est.value - expected).abs() < 1e-12);
        assert_eq!(est.stderr, 0.0);
    }

    #[test]
    fn log_mean_exp_is_stable() {
        let est = log_mean_exp(&[-1000.0, -1000.0]).unwrap();
        assert!((est.value + 1000.0).abs() < 1e-12);
        assert!(log_mean_exp(&[f64::NEG_INFINITY]).is_none());
    }

    #[test]
    fn simple_family_fails_condition_three() {
        let a = ConditionalAnsatz::new(AnsatzFamily::SimpleFactorized, DensityModel::atomic(3, 2.0).unwrap(), SpaceSpec::atom(3))
            .unwrap();
        let report = a.check_conditions_at(3, 2000, 5).unwrap();
        assert!(report.condition_ii.passed);
        assert!(!report.condition_iii.passed);
        assert!(!report.fermionic_compatible);
    }

    #[test]
    fn frozen_family_is_normalized_exactly_but_not_fermionic() {
        let a = ConditionalAnsatz::new(AnsatzFamily::FrozenOrbitalProduct, helium_density(1.6875), SpaceSpec::atom(2))
            .unwrap();
        let report = a.check_conditions(500, 9).unwrap();
        assert!(report.condition_i);
        assert!(report.normalization.iter().all(|c| c.estimate == 1.0 && c.stderr == 0.0));
        assert!(!report.condition_ii.passed);
        assert!(!report.condition_iii.passed);
        assert!(!report.fermionic_compatible);
    }
}
