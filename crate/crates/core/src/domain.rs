//! Configuration space, parametric densities, external potentials.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Exp, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::QuadratureGrid;
use crate::vec3::Vec3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Dimensionality {
    #[serde(rename = "3d")]
    Three,
    #[serde(rename = "1d-softened")]
    OneSoftened,
}

/// Where the electrons live and how they interact.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpaceSpec {
    dimensionality: Dimensionality,
    radius: f64,
    softening: f64,
    electrons: usize,
}

pub const DEFAULT_DOMAIN_RADIUS: f64 = 10.0;
pub const DEFAULT_SOFTENING: f64 = 1.0;

impl SpaceSpec {
    pub fn new(
        dimensionality: Dimensionality,
        radius: f64,
        softening: f64,
        electrons: usize,
    ) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::invalid("system.radius", "domain radius must be positive"));
        }
        if dimensionality == Dimensionality::OneSoftened && !(softening > 0.0) {
            return Err(Error::invalid("system.softening", "softening must be positive in 1D"));
        }
        if electrons == 0 {
            return Err(Error::invalid("system.n", "need at least one electron"));
        }
        Ok(Self {
            dimensionality,
            radius,
            softening,
            electrons,
        })
    }

    pub fn atom(electrons: usize) -> Self {
        Self::new(Dimensionality::Three, DEFAULT_DOMAIN_RADIUS, DEFAULT_SOFTENING, electrons)
            .expect("default atom space is valid")
    }

    pub fn line(electrons: usize, radius: f64, softening: f64) -> Result<Self> {
        Self::new(Dimensionality::OneSoftened, radius, softening, electrons)
    }

    pub fn dimensionality(&self) -> Dimensionality {
        self.dimensionality
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn softening(&self) -> f64 {
        self.softening
    }

    pub fn electrons(&self) -> usize {
        self.electrons
    }

    /// Measure of Ω: the ball (3D) or interval (1D) of radius R.
    pub fn domain_volume(&self) -> f64 {
        match self.dimensionality {
            Dimensionality::Three => 4.0 / 3.0 * PI * self.radius.powi(3),
            Dimensionality::OneSoftened => 2.0 * self.radius,
        }
    }

    /// One-particle volume ω = vol(Ω)/N.
    pub fn omega_volume(&self) -> f64 {
        self.domain_volume() / self.electrons as f64
    }

    /// Radius (or half-width) of the origin-centred region of measure ω.
    pub fn omega_radius(&self) -> f64 {
        match self.dimensionality {
            Dimensionality::Three => self.radius * (self.electrons as f64).powf(-1.0 / 3.0),
            Dimensionality::OneSoftened => self.radius / self.electrons as f64,
        }
    }

    pub fn in_omega(&self, p: Vec3) -> bool {
        match self.dimensionality {
            Dimensionality::Three => p.norm() <= self.omega_radius(),
            Dimensionality::OneSoftened => p.x.abs() <= self.omega_radius(),
        }
    }

    /// Uniform draw from the ω region.
    pub fn sample_omega<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec3 {
        let radius = self.omega_radius();
        match self.dimensionality {
            Dimensionality::Three => {
                let dir = random_direction(rng);
                let u: f64 = rng.random();
                dir * (radius * u.cbrt())
            }
            Dimensionality::OneSoftened => Vec3::on_line(radius * (2.0 * rng.random::<f64>() - 1.0)),
        }
    }

    /// Electron-electron kernel: 1/|d| in 3D, 1/sqrt(x² + a²) in 1D.
    pub fn kernel(&self, d: Vec3) -> f64 {
        match self.dimensionality {
            Dimensionality::Three => 1.0 / d.norm(),
            Dimensionality::OneSoftened => 1.0 / (d.x * d.x + self.softening * self.softening).sqrt(),
        }
    }

    /// Gradient of the kernel with respect to `d`.
    pub fn kernel_gradient(&self, d: Vec3) -> Vec3 {
        match self.dimensionality {
            Dimensionality::Three => {
                let r = d.norm();
                d * (-1.0 / (r * r * r))
            }
            Dimensionality::OneSoftened => {
                let s2 = d.x * d.x + self.softening * self.softening;
                Vec3::on_line(-d.x / (s2 * s2.sqrt()))
            }
        }
    }

    /// Number of Cartesian components that carry information.
    pub fn components(&self) -> usize {
        match self.dimensionality {
            Dimensionality::Three => 3,
            Dimensionality::OneSoftened => 1,
        }
    }
}

pub(crate) fn random_direction<R: Rng + ?Sized>(rng: &mut R) -> Vec3 {
    loop {
        let v = Vec3::new(
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
        );
        let n = v.norm();
        if n > 1e-12 {
            return v * (1.0 / n);
        }
    }
}

/// One term of an exponential mixture; weights sum to one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExponentialTerm {
    pub weight: f64,
    pub zeta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum DensityFamily {
    /// ρ ∝ e^{-2ζ|r|}
    Exponential { zeta: f64 },
    /// Σ_k w_k ρ_k with each ρ_k a normalized exponential.
    ExponentialMix { terms: Vec<ExponentialTerm> },
    /// Piecewise-linear table on uniform nodes, zero outside.
    Tabulated1D {
        start: f64,
        spacing: f64,
        values: Vec<f64>,
    },
}

/// One-electron density normalized to N.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityModel {
    family: DensityFamily,
    electrons: usize,
    dimensionality: Dimensionality,
    // cumulative trapezoid mass at each node of a tabulated density
    cumulative: Vec<f64>,
}

impl DensityModel {
    pub fn exponential(electrons: usize, zeta: f64, dimensionality: Dimensionality) -> Result<Self> {
        check_zeta(zeta)?;
        check_electrons(electrons)?;
        Ok(Self {
            family: DensityFamily::Exponential { zeta },
            electrons,
            dimensionality,
            cumulative: Vec::new(),
        })
    }

    /// Hydrogenic 1s² style density for an atom: N ζ³/π e^{-2ζr}.
    pub fn atomic(electrons: usize, zeta: f64) -> Result<Self> {
        Self::exponential(electrons, zeta, Dimensionality::Three)
    }

    pub fn exponential_mix(
        electrons: usize,
        terms: Vec<ExponentialTerm>,
        dimensionality: Dimensionality,
    ) -> Result<Self> {
        check_electrons(electrons)?;
        if terms.is_empty() {
            return Err(Error::invalid("density.zeta", "mixture needs at least one term"));
        }
        let total: f64 = terms.iter().map(|t| t.weight).sum();
        if terms.iter().any(|t| !(t.weight >= 0.0)) || !(total > 0.0) {
            return Err(Error::invalid("density.weights", "weights must be non-negative with positive sum"));
        }
        for t in &terms {
            check_zeta(t.zeta)?;
        }
        let terms = terms
            .into_iter()
            .map(|t| ExponentialTerm {
                weight: t.weight / total,
                zeta: t.zeta,
            })
            .collect();
        Ok(Self {
            family: DensityFamily::ExponentialMix { terms },
            electrons,
            dimensionality,
            cumulative: Vec::new(),
        })
    }

    /// Piecewise-linear density through `values` at `start + i·spacing`,
    /// rescaled so that it integrates to N.
    pub fn tabulated_1d(electrons: usize, start: f64, spacing: f64, values: Vec<f64>) -> Result<Self> {
        check_electrons(electrons)?;
        if values.len() < 2 || !(spacing > 0.0) {
            return Err(Error::invalid("density.values", "need >= 2 values and positive spacing"));
        }
        if values.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::invalid("density.values", "values must be finite and non-negative"));
        }
        let mut cumulative = Vec::with_capacity(values.len());
        let mut acc = 0.0;
        cumulative.push(0.0);
        for w in values.windows(2) {
            acc += 0.5 * (w[0] + w[1]) * spacing;
            cumulative.push(acc);
        }
        if !(acc > 0.0) {
            return Err(Error::invalid("density.values", "table has zero mass"));
        }
        let scale = electrons as f64 / acc;
        let values = values.into_iter().map(|v| v * scale).collect();
        let cumulative = cumulative.into_iter().map(|c| c * scale).collect();
        Ok(Self {
            family: DensityFamily::Tabulated1D {
                start,
                spacing,
                values,
            },
            electrons,
            dimensionality: Dimensionality::OneSoftened,
            cumulative,
        })
    }

    pub fn family(&self) -> &DensityFamily {
        &self.family
    }

    pub fn electrons(&self) -> usize {
        self.electrons
    }

    pub fn dimensionality(&self) -> Dimensionality {
        self.dimensionality
    }

    /// Copy of this model with new exponents (exponential families only).
    pub fn with_exponents(&self, zetas: &[f64]) -> Result<Self> {
        match &self.family {
            DensityFamily::Exponential { .. } => {
                if zetas.len() != 1 {
                    return Err(Error::invalid("density.zeta", "single exponent expected"));
                }
                Self::exponential(self.electrons, zetas[0], self.dimensionality)
            }
            DensityFamily::ExponentialMix { terms } => {
                if zetas.len() != terms.len() {
                    return Err(Error::invalid("density.zeta", "one exponent per mixture term"));
                }
                let terms = terms
                    .iter()
                    .zip(zetas)
                    .map(|(t, &zeta)| ExponentialTerm { weight: t.weight, zeta })
                    .collect();
                Self::exponential_mix(self.electrons, terms, self.dimensionality)
            }
            DensityFamily::Tabulated1D { .. } => Err(Error::Unsupported {
                operation: "exponent update",
                what: "tabulated density".into(),
            }),
        }
    }

    /// Exponents of an exponential family, empty for tabulated densities.
    pub fn exponents(&self) -> Vec<f64> {
        match &self.family {
            DensityFamily::Exponential { zeta } => vec![*zeta],
            DensityFamily::ExponentialMix { terms } => terms.iter().map(|t| t.zeta).collect(),
            DensityFamily::Tabulated1D { .. } => Vec::new(),
        }
    }

    fn radial_unit(&self, zeta: f64, r: f64) -> f64 {
        match self.dimensionality {
            Dimensionality::Three => zeta.powi(3) / PI * (-2.0 * zeta * r).exp(),
            Dimensionality::OneSoftened => zeta * (-2.0 * zeta * r).exp(),
        }
    }

    fn radius_of(&self, r: Vec3) -> f64 {
        match self.dimensionality {
            Dimensionality::Three => r.norm(),
            Dimensionality::OneSoftened => r.x.abs(),
        }
    }

    /// ρ(r).
    pub fn value(&self, r: Vec3) -> f64 {
        let n = self.electrons as f64;
        match &self.family {
            DensityFamily::Exponential { zeta } => n * self.radial_unit(*zeta, self.radius_of(r)),
            DensityFamily::ExponentialMix { terms } => {
                let rad = self.radius_of(r);
                n * terms
                    .iter()
                    .map(|t| t.weight * self.radial_unit(t.zeta, rad))
                    .sum::<f64>()
            }
            DensityFamily::Tabulated1D {
                start,
                spacing,
                values,
            } => match segment(r.x, *start, *spacing, values.len()) {
                Some((i, t)) => values[i] * (1.0 - t) + values[i + 1] * t,
                None => 0.0,
            },
        }
    }

    /// ∇ρ(r). Exponential families have a cusp at the origin.
    pub fn gradient(&self, r: Vec3) -> Result<Vec3> {
        match &self.family {
            DensityFamily::Exponential { .. } | DensityFamily::ExponentialMix { .. } => {
                let rad = self.radius_of(r);
                if rad == 0.0 {
                    return Err(Error::DegenerateAtOrigin);
                }
                let n = self.electrons as f64;
                let d_rho_dr = match &self.family {
                    DensityFamily::Exponential { zeta } => -2.0 * zeta * n * self.radial_unit(*zeta, rad),
                    DensityFamily::ExponentialMix { terms } => terms
                        .iter()
                        .map(|t| -2.0 * t.zeta * n * t.weight * self.radial_unit(t.zeta, rad))
                        .sum(),
                    DensityFamily::Tabulated1D { .. } => unreachable!(),
                };
                Ok(match self.dimensionality {
                    Dimensionality::Three => r * (d_rho_dr / rad),
                    Dimensionality::OneSoftened => Vec3::on_line(d_rho_dr * r.x.signum()),
                })
            }
            DensityFamily::Tabulated1D {
                start,
                spacing,
                values,
            } => Ok(match segment(r.x, *start, *spacing, values.len()) {
                Some((i, _)) => Vec3::on_line((values[i + 1] - values[i]) / spacing),
                None => Vec3::ZERO,
            }),
        }
    }

    /// Draw a point with probability density ρ/N.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec3 {
        match &self.family {
            DensityFamily::Exponential { zeta } => self.sample_exponential(*zeta, rng),
            DensityFamily::ExponentialMix { terms } => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                let mut chosen = terms[terms.len() - 1].zeta;
                for t in terms {
                    acc += t.weight;
                    if u < acc {
                        chosen = t.zeta;
                        break;
                    }
                }
                self.sample_exponential(chosen, rng)
            }
            DensityFamily::Tabulated1D {
                start,
                spacing,
                values,
            } => {
                let total = *self.cumulative.last().expect("non-empty table");
                let target = rng.random::<f64>() * total;
                let i = match self
                    .cumulative
                    .binary_search_by(|c| c.partial_cmp(&target).expect("finite"))
                {
                    Ok(i) => i.min(values.len() - 2),
                    Err(i) => i.saturating_sub(1).min(values.len() - 2),
                };
                let (v0, v1) = (values[i], values[i + 1]);
                let u: f64 = rng.random();
                let t = if (v1 - v0).abs() <= 1e-12 * (v0 + v1) {
                    u
                } else {
                    let disc = v0 * v0 + (v1 * v1 - v0 * v0) * u;
                    (disc.max(0.0).sqrt() - v0) / (v1 - v0)
                };
                Vec3::on_line(start + (i as f64 + t.clamp(0.0, 1.0)) * spacing)
            }
        }
    }

    fn sample_exponential<R: Rng + ?Sized>(&self, zeta: f64, rng: &mut R) -> Vec3 {
        match self.dimensionality {
            Dimensionality::Three => {
                // radial density ∝ r² e^{-2ζr}
                let radial = Gamma::new(3.0, 1.0 / (2.0 * zeta)).expect("positive shape and scale");
                let r = radial.sample(rng);
                random_direction(rng) * r
            }
            Dimensionality::OneSoftened => {
                let exp = Exp::new(2.0 * zeta).expect("positive rate");
                let x: f64 = exp.sample(rng);
                if rng.random::<bool>() {
                    Vec3::on_line(x)
                } else {
                    Vec3::on_line(-x)
                }
            }
        }
    }
}

fn segment(x: f64, start: f64, spacing: f64, len: usize) -> Option<(usize, f64)> {
    let s = (x - start) / spacing;
    let last = (len - 1) as f64;
    if !(s >= 0.0 && s <= last) {
        return None;
    }
    let i = (s.floor() as usize).min(len - 2);
    Some((i, s - i as f64))
}

fn check_zeta(zeta: f64) -> Result<()> {
    if zeta > 0.0 && zeta.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid("density.zeta", format!("exponent must be positive, got {zeta}")))
    }
}

fn check_electrons(n: usize) -> Result<()> {
    if n >= 1 {
        Ok(())
    } else {
        Err(Error::invalid("system.n", "need at least one electron"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PotentialKind {
    CoulombNucleus,
    Softened1D,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExternalPotential {
    kind: PotentialKind,
    charge: f64,
    softening: f64,
}

impl ExternalPotential {
    pub fn coulomb(charge: f64) -> Self {
        Self {
            kind: PotentialKind::CoulombNucleus,
            charge,
            softening: 0.0,
        }
    }

    pub fn softened(charge: f64, softening: f64) -> Self {
        Self {
            kind: PotentialKind::Softened1D,
            charge,
            softening,
        }
    }

    pub fn none() -> Self {
        Self {
            kind: PotentialKind::None,
            charge: 0.0,
            softening: 0.0,
        }
    }

    /// The attractive nucleus appropriate for a space.
    pub fn nucleus(charge: f64, space: &SpaceSpec) -> Self {
        match space.dimensionality() {
            Dimensionality::Three => Self::coulomb(charge),
            Dimensionality::OneSoftened => Self::softened(charge, space.softening()),
        }
    }

    pub fn kind(&self) -> PotentialKind {
        self.kind
    }

    pub fn charge(&self) -> f64 {
        self.charge
    }

    pub fn value(&self, r: Vec3) -> f64 {
        match self.kind {
            PotentialKind::CoulombNucleus => -self.charge / r.norm(),
            PotentialKind::Softened1D => -self.charge / (r.x * r.x + self.softening * self.softening).sqrt(),
            PotentialKind::None => 0.0,
        }
    }

    fn dimensionality(&self) -> Option<Dimensionality> {
        match self.kind {
            PotentialKind::CoulombNucleus => Some(Dimensionality::Three),
            PotentialKind::Softened1D => Some(Dimensionality::OneSoftened),
            PotentialKind::None => None,
        }
    }
}

pub fn density_value(model: &DensityModel, r: Vec3) -> f64 {
    model.value(r)
}

pub fn density_gradient(model: &DensityModel, r: Vec3) -> Result<Vec3> {
    model.gradient(r)
}

/// ∫ v ρ by deterministic quadrature.
pub fn external_energy(
    model: &DensityModel,
    potential: &ExternalPotential,
    grid: &QuadratureGrid,
) -> Result<f64> {
    ensure_same(model.dimensionality(), grid.dimensionality())?;
    if let Some(dim) = potential.dimensionality() {
        ensure_same(model.dimensionality(), dim)?;
    }
    if potential.kind() == PotentialKind::None {
        return Ok(0.0);
    }
    Ok(grid.integrate(|p| potential.value(p) * model.value(p)))
}

pub(crate) fn ensure_same(expected: Dimensionality, found: Dimensionality) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const HE_ZETA: f64 = 27.0 / 16.0;

    #[test]
    fn exponential_value_at_origin() {
        let m = DensityModel::atomic(1, 1.0).unwrap();
        assert!((m.value(Vec3::ZERO) - 1.0 / PI).abs() < 1e-15);
        let m2 = DensityModel::atomic(2, 1.0).unwrap();
        assert_eq!(m2.value(Vec3::new(0.0, 0.0, 1e4)), 0.0);
    }

    #[test]
    fn quadrature_reproduces_electron_count() {
        let grid = QuadratureGrid::default_3d();
        let m = DensityModel::atomic(2, HE_ZETA).unwrap();
        let n = grid.integrate(|p| m.value(p));
        assert!((n - 2.0).abs() < 1e-8 * 2.0, "{n}");
    }

    #[test]
    fn one_dimensional_density_normalizes() {
        let grid = QuadratureGrid::default_1d();
        let m = DensityModel::exponential(2, 1.3, Dimensionality::OneSoftened).unwrap();
        let n = grid.integrate(|p| m.value(p));
        assert!((n - 2.0).abs() < 2e-8, "{n}");
    }

    #[test]
    fn gradient_ratio_is_twice_zeta() {
        let m = DensityModel::atomic(1, 1.0).unwrap();
        for p in [Vec3::new(0.3, -0.2, 0.9), Vec3::new(4.0, 0.0, 0.0)] {
            let g = m.gradient(p).unwrap();
            assert!((g.norm() / m.value(p) - 2.0).abs() < 1e-12);
        }
        assert!(matches!(m.gradient(Vec3::ZERO), Err(Error::DegenerateAtOrigin)));
    }

    #[test]
    fn uniform_table_has_zero_gradient() {
        let m = DensityModel::tabulated_1d(2, -2.0, 0.5, vec![1.0; 9]).unwrap();
        assert_eq!(m.gradient(Vec3::on_line(0.3)).unwrap(), Vec3::ZERO);
        assert!((m.value(Vec3::on_line(0.3)) - 0.5).abs() < 1e-14);
        assert_eq!(m.value(Vec3::on_line(2.5)), 0.0);
    }

    #[test]
    fn gradient_matches_central_differences() {
        let m = DensityModel::exponential_mix(
            3,
            vec![
                ExponentialTerm { weight: 2.0, zeta: 2.7 },
                ExponentialTerm { weight: 1.0, zeta: 0.65 },
            ],
            Dimensionality::Three,
        )
        .unwrap();
        let p = Vec3::new(0.6, 0.0, 0.8);
        let g = m.gradient(p).unwrap();
        let h = 1e-5;
        for axis in 0..3 {
            let plus = p.with_component(axis, p.component(axis) + h);
            let minus = p.with_component(axis, p.component(axis) - h);
            let fd = (m.value(plus) - m.value(minus)) / (2.0 * h);
            assert!((fd - g.component(axis)).abs() <= 1e-6 * g.norm());
        }
    }

    #[test]
    fn external_energy_closed_forms() {
        let grid = QuadratureGrid::default_3d();
        let he = DensityModel::atomic(2, HE_ZETA).unwrap();
        let e = external_energy(&he, &ExternalPotential::coulomb(2.0), &grid).unwrap();
        assert!((e + 6.75).abs() < 1e-6, "{e}");
        let h = DensityModel::atomic(1, 1.0).unwrap();
        let e = external_energy(&h, &ExternalPotential::coulomb(1.0), &grid).unwrap();
        assert!((e + 1.0).abs() < 1e-6);
        assert_eq!(external_energy(&h, &ExternalPotential::none(), &grid).unwrap(), 0.0);
    }

    #[test]
    fn external_energy_rejects_mismatched_grid() {
        let he = DensityModel::atomic(2, HE_ZETA).unwrap();
        let err = external_energy(&he, &ExternalPotential::coulomb(2.0), &QuadratureGrid::default_1d());
        assert!(matches!(err, Err(Error::DimensionMismatch { .. })));
        let line = DensityModel::exponential(2, 1.0, Dimensionality::OneSoftened).unwrap();
        let err = external_energy(&line, &ExternalPotential::coulomb(2.0), &QuadratureGrid::default_1d());
        assert!(err.is_err());
    }

    #[test]
    fn omega_is_domain_share() {
        let s = SpaceSpec::atom(2);
        let ball = 4.0 / 3.0 * PI * s.omega_radius().powi(3);
        assert!((ball - s.omega_volume()).abs() < 1e-9);
        let l = SpaceSpec::line(2, 6.0, 1.0).unwrap();
        assert!((l.omega_volume() - 6.0).abs() < 1e-15);
        assert!(SpaceSpec::new(Dimensionality::Three, 0.0, 1.0, 2).is_err());
        assert!(SpaceSpec::new(Dimensionality::OneSoftened, 1.0, 0.0, 2).is_err());
    }

    #[test]
    fn tabulated_sampling_stays_in_support() {
        let m = DensityModel::tabulated_1d(1, -1.0, 0.25, vec![0.0, 1.0, 3.0, 1.0, 0.0, 0.5, 2.0, 1.0, 0.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let x = m.sample(&mut rng).x;
            assert!((-1.0..=1.0).contains(&x));
        }
    }
}
