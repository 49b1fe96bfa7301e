//! Independent reference values: hydrogenic products with closed-form
//! expectation values, a two-electron 1D grid model solved by exact
//! diagonalization, and a brute-force search over tabulated conditional
//! densities on that grid.

use std::f64::consts::PI;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{DensityModel, Dimensionality};
use crate::error::{Error, Result};
use crate::functionals::{weizsacker_term, CoulombPrefactor};
use crate::optimizer::{golden_section, Interval};
use crate::quadrature::{radial_rule, QuadratureGrid};
use crate::rng::stream;
use crate::vec3::Vec3;

/// Below this density the conditional density is undefined.
pub const DENSITY_THRESHOLD: f64 = 1e-12;
/// Largest grid the brute-force search accepts.
pub const MAX_GRID_POINTS: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "kebab-case")]
pub enum ReferenceWavefunction {
    /// Π φ(r_i) with φ = √(ζ³/π) e^{-ζr}.
    Product { zeta: f64, electrons: usize },
    /// Two electrons on a uniform line grid; `values[i*m + j] = ψ(x_i, x_j)`,
    /// normalized so Σ ψ² h² = 1.
    Grid {
        m: usize,
        spacing: f64,
        softening: f64,
        values: Vec<f64>,
    },
}

impl ReferenceWavefunction {
    pub fn product(zeta: f64, electrons: usize) -> Result<Self> {
        if !(zeta > 0.0 && zeta.is_finite()) {
            return Err(Error::invalid("zeta", "must be positive and finite"));
        }
        if electrons == 0 {
            return Err(Error::invalid("electrons", "need at least one electron"));
        }
        Ok(Self::Product { zeta, electrons })
    }

    /// Tabulated two-electron state; rescaled to unit norm.
    pub fn grid(m: usize, spacing: f64, softening: f64, mut values: Vec<f64>) -> Result<Self> {
        if values.len() != m * m {
            return Err(Error::invalid("values", format!("expected {} entries", m * m)));
        }
        if !(spacing > 0.0 && softening > 0.0) {
            return Err(Error::invalid("spacing", "spacing and softening must be positive"));
        }
        let norm = values.iter().map(|v| v * v).sum::<f64>() * spacing * spacing;
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(Error::DegenerateNormalization);
        }
        let s = norm.sqrt();
        values.iter_mut().for_each(|v| *v /= s);
        Ok(Self::Grid {
            m,
            spacing,
            softening,
            values,
        })
    }

    pub fn electrons(&self) -> usize {
        match self {
            Self::Product { electrons, .. } => *electrons,
            Self::Grid { .. } => 2,
        }
    }

    /// ∫|ψ|² by quadrature (product) or lattice sum (grid).
    pub fn norm(&self) -> f64 {
        match self {
            Self::Product { zeta, electrons } => {
                let one = radial_integral(|r| orbital(*zeta, r).powi(2), *zeta);
                one.powi(*electrons as i32)
            }
            Self::Grid { spacing, values, .. } => values.iter().map(|v| v * v).sum::<f64>() * spacing * spacing,
        }
    }

    /// ψ at a full configuration (product form only).
    pub fn value(&self, positions: &[Vec3]) -> Result<f64> {
        match self {
            Self::Product { zeta, electrons } => {
                if positions.len() != *electrons {
                    return Err(Error::SatelliteCount {
                        expected: *electrons,
                        found: positions.len(),
                    });
                }
                Ok(positions.iter().map(|p| orbital(*zeta, p.norm())).product())
            }
            Self::Grid { .. } => Err(Error::Unsupported {
                operation: "pointwise evaluation",
                what: "a grid wavefunction".into(),
            }),
        }
    }

    /// One-electron density N∫|ψ|² over the other electrons.
    pub fn density(&self, r: Vec3) -> Result<f64> {
        match self {
            Self::Product { zeta, electrons } => Ok(*electrons as f64 * orbital(*zeta, r.norm()).powi(2)),
            Self::Grid { .. } => Err(Error::Unsupported {
                operation: "pointwise density",
                what: "a grid wavefunction".into(),
            }),
        }
    }

    /// Grid density ρ_i = 2 Σ_j ψ_ij² h.
    pub fn grid_density(&self) -> Result<Vec<f64>> {
        match self {
            Self::Grid { m, spacing, values, .. } => Ok((0..*m)
                .map(|i| 2.0 * spacing * values[i * m..(i + 1) * m].iter().map(|v| v * v).sum::<f64>())
                .collect()),
            Self::Product { .. } => Err(Error::Unsupported {
                operation: "grid density",
                what: "a product wavefunction".into(),
            }),
        }
    }
}

fn orbital(zeta: f64, r: f64) -> f64 {
    (zeta.powi(3) / PI).sqrt() * (-zeta * r).exp()
}

fn orbital_derivative(zeta: f64, r: f64) -> f64 {
    -zeta * orbital(zeta, r)
}

/// ∫ g(r) 4πr² dr on a mapped Gauss-Legendre rule.
fn radial_integral(g: impl Fn(f64) -> f64, zeta: f64) -> f64 {
    let (r, w) = radial_rule(400, 1.0 / zeta);
    r.iter().zip(&w).map(|(&r, &w)| w * 4.0 * PI * r * r * g(r)).sum()
}

/// Shell-theorem potential of a spherical density n on a radial table:
/// Φ(r) = (1/r)∫₀^r n 4πs² ds + ∫_r^∞ n 4πs ds. Trapezoid cumulative sums.
fn shell_potential(n: impl Fn(f64) -> f64, r_max: f64, points: usize) -> (Vec<f64>, Vec<f64>) {
    let h = r_max / (points - 1) as f64;
    let r: Vec<f64> = (0..points).map(|i| i as f64 * h).collect();
    let nv: Vec<f64> = r.iter().map(|&s| n(s)).collect();
    let mut inner = vec![0.0; points];
    for i in 1..points {
        let a = nv[i - 1] * 4.0 * PI * r[i - 1] * r[i - 1];
        let b = nv[i] * 4.0 * PI * r[i] * r[i];
        inner[i] = inner[i - 1] + 0.5 * h * (a + b);
    }
    let mut outer = vec![0.0; points];
    for i in (0..points - 1).rev() {
        let a = nv[i] * 4.0 * PI * r[i];
        let b = nv[i + 1] * 4.0 * PI * r[i + 1];
        outer[i] = outer[i + 1] + 0.5 * h * (a + b);
    }
    let phi = (0..points)
        .map(|i| if i == 0 { outer[0] } else { inner[i] / r[i] + outer[i] })
        .collect();
    (r, phi)
}

fn interpolate(table: &(Vec<f64>, Vec<f64>), x: f64) -> f64 {
    let (r, v) = table;
    let h = r[1] - r[0];
    let t = x / h;
    let i = t.floor() as usize;
    if i + 1 >= r.len() {
        // beyond the table the potential is that of the enclosed charge
        return v[r.len() - 1] * r[r.len() - 1] / x;
    }
    let frac = t - i as f64;
    v[i] * (1.0 - frac) + v[i + 1] * frac
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DirectExpectation {
    pub kinetic: f64,
    pub repulsion: f64,
}

impl DirectExpectation {
    pub fn total(&self) -> f64 {
        self.kinetic + self.repulsion
    }
}

/// ⟨T⟩ and ⟨V_ee⟩ straight from ψ.
pub fn direct_expectation(psi: &ReferenceWavefunction) -> Result<DirectExpectation> {
    match psi {
        ReferenceWavefunction::Product { zeta, electrons } => {
            let z = *zeta;
            let n = *electrons as f64;
            let kinetic = n * 0.5 * radial_integral(|r| orbital_derivative(z, r).powi(2), z);
            let repulsion = if *electrons < 2 {
                0.0
            } else {
                let table = shell_potential(|r| orbital(z, r).powi(2), 40.0 / z, 40_001);
                let j = radial_integral(|r| orbital(z, r).powi(2) * interpolate(&table, r), z);
                0.5 * n * (n - 1.0) * j
            };
            Ok(DirectExpectation { kinetic, repulsion })
        }
        ReferenceWavefunction::Grid {
            m,
            spacing,
            softening,
            values,
        } => {
            let (m, h) = (*m, *spacing);
            let at = |i: isize, j: isize| -> f64 {
                if i < 0 || j < 0 || i >= m as isize || j >= m as isize {
                    0.0
                } else {
                    values[i as usize * m + j as usize]
                }
            };
            // forward differences with Dirichlet walls in both coordinates
            let mut kinetic = 0.0;
            for i in -1..m as isize {
                for j in -1..m as isize {
                    let d1 = at(i + 1, j) - at(i, j);
                    let d2 = at(i, j + 1) - at(i, j);
                    kinetic += d1 * d1 + d2 * d2;
                }
            }
            kinetic *= 0.5;
            let x = grid_nodes(m, h);
            let mut repulsion = 0.0;
            for i in 0..m {
                for j in 0..m {
                    repulsion += values[i * m + j].powi(2) * softened(x[i] - x[j], *softening);
                }
            }
            Ok(DirectExpectation {
                kinetic,
                repulsion: repulsion * h * h,
            })
        }
    }
}

/// f(r₂..r_N | r) = N|ψ(r, r₂..)|²/ρ(r) for a product wavefunction.
#[derive(Debug, Clone)]
pub struct ExtractedConditional {
    psi: ReferenceWavefunction,
    point: Vec3,
    density: f64,
}

impl ExtractedConditional {
    pub fn point(&self) -> Vec3 {
        self.point
    }

    pub fn value(&self, satellites: &[Vec3]) -> Result<f64> {
        let mut all = Vec::with_capacity(satellites.len() + 1);
        all.push(self.point);
        all.extend_from_slice(satellites);
        let psi = self.psi.value(&all)?;
        Ok(self.psi.electrons() as f64 * psi * psi / self.density)
    }
}

pub fn extract_f(psi: &ReferenceWavefunction, r: Vec3) -> Result<ExtractedConditional> {
    let density = psi.density(r)?;
    if !(density >= DENSITY_THRESHOLD) {
        return Err(Error::UndefinedConditional { density });
    }
    Ok(ExtractedConditional {
        psi: psi.clone(),
        point: r,
        density,
    })
}

/// Row-stochastic table f[i][j] = 2ψ_ij²/ρ_i (Σ_j f_ij h = 1).
pub fn extract_f_table(psi: &ReferenceWavefunction) -> Result<Vec<f64>> {
    let ReferenceWavefunction::Grid { m, values, .. } = psi else {
        return Err(Error::Unsupported {
            operation: "table extraction",
            what: "a product wavefunction".into(),
        });
    };
    let rho = psi.grid_density()?;
    let mut f = vec![0.0; m * m];
    for i in 0..*m {
        if !(rho[i] >= DENSITY_THRESHOLD) {
            return Err(Error::UndefinedConditional { density: rho[i] });
        }
        for j in 0..*m {
            f[i * m + j] = 2.0 * values[i * m + j].powi(2) / rho[i];
        }
    }
    Ok(f)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecompositionReport {
    pub kinetic: f64,
    pub repulsion: f64,
    pub weizsacker: f64,
    pub fisher: f64,
    /// ∫ρ(r) E_f[1/|r - r'|] dr before any prefactor.
    pub coulomb_raw: f64,
    pub residual_half: f64,
    pub residual_full: f64,
    pub tolerance: f64,
    /// Residual for the prefactor this report was asked about.
    pub prefactor: CoulombPrefactor,
    pub passed: bool,
}

impl DecompositionReport {
    pub fn rhs(&self, prefactor: CoulombPrefactor, electrons: usize) -> f64 {
        self.weizsacker + self.fisher + prefactor.factor(electrons) * self.coulomb_raw
    }

    pub fn residual(&self) -> f64 {
        match self.prefactor {
            CoulombPrefactor::Half => self.residual_half,
            CoulombPrefactor::Full => self.residual_full,
        }
    }
}

pub const PRODUCT_TOLERANCE: f64 = 1e-3;
pub const GRID_TOLERANCE: f64 = 1e-2;

/// Compares T + V_ee against Weizsäcker + Fisher + prefactor·Coulomb with f
/// extracted from ψ. Passing is judged on `prefactor`.
pub fn verify_decomposition(psi: &ReferenceWavefunction, prefactor: CoulombPrefactor) -> Result<DecompositionReport> {
    let direct = direct_expectation(psi)?;
    let n = psi.electrons();
    let (weizsacker, fisher, coulomb_raw, tolerance) = match psi {
        ReferenceWavefunction::Product { zeta, electrons } => {
            if *electrons < 2 {
                let density = DensityModel::atomic(1, *zeta)?;
                let w = weizsacker_term(&density, &QuadratureGrid::default_3d())?;
                (w, 0.0, 0.0, PRODUCT_TOLERANCE)
            } else if *electrons != 2 {
                return Err(Error::Unsupported {
                    operation: "decomposition check",
                    what: format!("a product with {electrons} electrons"),
                });
            } else {
                let density = DensityModel::atomic(2, *zeta)?;
                let w = weizsacker_term(&density, &QuadratureGrid::default_3d())?;
                (w, product_fisher(psi, *zeta)?, product_coulomb(psi, *zeta)?, PRODUCT_TOLERANCE)
            }
        }
        ReferenceWavefunction::Grid { m, spacing, softening, .. } => {
            let rho = psi.grid_density()?;
            let sys = GridSystem1D::new(*m, *spacing, *softening, rho)?;
            let f = extract_f_table(psi)?;
            let amplitudes: Vec<f64> = f.iter().map(|v| v.sqrt()).collect();
            let parts = sys.gamma_parts(&amplitudes);
            (sys.weizsacker(), parts.fisher, parts.coulomb_raw, GRID_TOLERANCE)
        }
    };
    let residual_for = |p: CoulombPrefactor| (direct.total() - (weizsacker + fisher + p.factor(n) * coulomb_raw)).abs();
    let residual_half = residual_for(CoulombPrefactor::Half);
    let residual_full = residual_for(CoulombPrefactor::Full);
    let chosen = match prefactor {
        CoulombPrefactor::Half => residual_half,
        CoulombPrefactor::Full => residual_full,
    };
    Ok(DecompositionReport {
        kinetic: direct.kinetic,
        repulsion: direct.repulsion,
        weizsacker,
        fisher,
        coulomb_raw,
        residual_half,
        residual_full,
        tolerance,
        prefactor,
        passed: chosen <= tolerance,
    })
}

/// (1/8)∫ρ ∫|∇_r f|²/f by quadrature, gradient by central differences of
/// the extracted f.
fn product_fisher(psi: &ReferenceWavefunction, zeta: f64) -> Result<f64> {
    let outer = QuadratureGrid::radial(40, 4, 8, 1.0 / zeta);
    let inner = QuadratureGrid::radial(40, 4, 8, 1.0 / zeta);
    let eps = 1e-4 / zeta;
    let mut total = 0.0;
    for (r, w) in outer.points() {
        // far tail: negligible weight, conditional undefined
        if psi.density(r)? < DENSITY_THRESHOLD {
            continue;
        }
        let f0 = extract_f(psi, r)?;
        let shifted: Vec<(ExtractedConditional, ExtractedConditional)> = (0..3)
            .map(|axis| {
                let e = Vec3::ZERO.with_component(axis, eps);
                Ok((extract_f(psi, r + e)?, extract_f(psi, r - e)?))
            })
            .collect::<Result<_>>()?;
        let mut local = 0.0;
        for (s, ws) in inner.points() {
            let f = f0.value(&[s])?;
            if f <= 0.0 {
                continue;
            }
            let mut g2 = 0.0;
            for (plus, minus) in &shifted {
                let d = (plus.value(&[s])? - minus.value(&[s])?) / (2.0 * eps);
                g2 += d * d;
            }
            local += ws * g2 / f;
        }
        total += w * psi.density(r)? * local;
    }
    Ok(total / 8.0)
}

/// ∫ρ(r) ∫f(r'|r)/|r - r'| dr' dr; the inner integral uses the shell theorem,
/// valid because the extracted f of an s-orbital product is spherical in r'.
fn product_coulomb(psi: &ReferenceWavefunction, zeta: f64) -> Result<f64> {
    let (r, w) = radial_rule(160, 1.0 / zeta);
    let mut total = 0.0;
    for (&ri, &wi) in r.iter().zip(&w) {
        let point = Vec3::new(0.0, 0.0, ri);
        if psi.density(point)? < DENSITY_THRESHOLD {
            continue;
        }
        let f = extract_f(psi, point)?;
        let table = shell_potential(
            |s| f.value(&[Vec3::new(s, 0.0, 0.0)]).unwrap_or(0.0),
            40.0 / zeta,
            20_001,
        );
        total += wi * 4.0 * PI * ri * ri * psi.density(point)? * interpolate(&table, ri);
    }
    Ok(total)
}

fn softened(d: f64, a: f64) -> f64 {
    1.0 / (d * d + a * a).sqrt()
}

fn grid_nodes(m: usize, h: f64) -> Vec<f64> {
    (0..m).map(|i| (i as f64 - 0.5 * (m as f64 - 1.0)) * h).collect()
}

/// Uniform line of M nodes centred on the origin, Dirichlet walls one
/// spacing beyond the end nodes, two electrons with density ρ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSystem1D {
    m: usize,
    spacing: f64,
    softening: f64,
    rho: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridGamma {
    pub fisher: f64,
    pub coulomb_raw: f64,
    /// Fisher + ½·coulomb_raw (N = 2).
    pub gamma: f64,
}

impl GridSystem1D {
    pub fn new(m: usize, spacing: f64, softening: f64, rho: Vec<f64>) -> Result<Self> {
        if !(2..=MAX_GRID_POINTS).contains(&m) {
            return Err(Error::invalid("m", format!("grid size must be in 2..={MAX_GRID_POINTS}")));
        }
        if !(spacing > 0.0 && softening > 0.0) {
            return Err(Error::invalid("spacing", "spacing and softening must be positive"));
        }
        if rho.len() != m {
            return Err(Error::invalid("rho", format!("expected {m} values")));
        }
        if let Some(&bad) = rho.iter().find(|v| !(**v >= DENSITY_THRESHOLD && v.is_finite())) {
            return Err(Error::UndefinedConditional { density: bad });
        }
        let total = rho.iter().sum::<f64>() * spacing;
        if (total - 2.0).abs() > 1e-8 {
            return Err(Error::invalid("rho", format!("Σρh = {total}, expected 2")));
        }
        Ok(Self {
            m,
            spacing,
            softening,
            rho,
        })
    }

    /// Density of the given shape rescaled to Σρh = 2.
    pub fn with_shape(m: usize, spacing: f64, softening: f64, shape: &[f64]) -> Result<Self> {
        let s = shape.iter().sum::<f64>() * spacing;
        if !(s > 0.0 && s.is_finite()) {
            return Err(Error::DegenerateNormalization);
        }
        Self::new(m, spacing, softening, shape.iter().map(|v| 2.0 * v / s).collect())
    }

    pub fn uniform(m: usize, spacing: f64, softening: f64) -> Result<Self> {
        Self::with_shape(m, spacing, softening, &vec![1.0; m])
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn softening(&self) -> f64 {
        self.softening
    }

    pub fn rho(&self) -> &[f64] {
        &self.rho
    }

    pub fn nodes(&self) -> Vec<f64> {
        grid_nodes(self.m, self.spacing)
    }

    fn kernel(&self, i: usize, j: usize) -> f64 {
        softened((i as f64 - j as f64) * self.spacing, self.softening)
    }

    /// ½ Σ h ((√ρ_{i+1} - √ρ_i)/h)² with zero padding.
    pub fn weizsacker(&self) -> f64 {
        let s = |i: isize| -> f64 {
            if i < 0 || i >= self.m as isize {
                0.0
            } else {
                self.rho[i as usize].sqrt()
            }
        };
        let h = self.spacing;
        (-1..self.m as isize).map(|i| (s(i + 1) - s(i)).powi(2)).sum::<f64>() * 0.5 / h
    }

    /// Fisher and Coulomb parts of Γ for amplitudes a = √f (row-major M×M).
    pub fn gamma_parts(&self, a: &[f64]) -> GridGamma {
        let (m, h) = (self.m, self.spacing);
        let theta = |i: isize, j: usize| -> f64 {
            if i < 0 || i >= m as isize {
                0.0
            } else {
                self.rho[i as usize].sqrt() * a[i as usize * m + j]
            }
        };
        let mut kinetic = 0.0;
        for j in 0..m {
            for i in -1..m as isize {
                kinetic += (theta(i + 1, j) - theta(i, j)).powi(2);
            }
        }
        kinetic *= 0.5;
        let mut coulomb_raw = 0.0;
        for i in 0..m {
            for j in 0..m {
                coulomb_raw += self.rho[i] * a[i * m + j].powi(2) * self.kernel(i, j);
            }
        }
        coulomb_raw *= h * h;
        let fisher = kinetic - self.weizsacker();
        GridGamma {
            fisher,
            coulomb_raw,
            gamma: fisher + 0.5 * coulomb_raw,
        }
    }

    pub fn gamma(&self, a: &[f64]) -> f64 {
        self.gamma_parts(a).gamma
    }

    /// ∂Γ/∂a.
    pub fn gamma_gradient(&self, a: &[f64]) -> Vec<f64> {
        let (m, h) = (self.m, self.spacing);
        let theta = |i: isize, j: usize| -> f64 {
            if i < 0 || i >= m as isize {
                0.0
            } else {
                self.rho[i as usize].sqrt() * a[i as usize * m + j]
            }
        };
        let mut g = vec![0.0; m * m];
        for i in 0..m {
            let sr = self.rho[i].sqrt();
            for j in 0..m {
                let ii = i as isize;
                let lap = theta(ii + 1, j) - 2.0 * theta(ii, j) + theta(ii - 1, j);
                g[i * m + j] = -lap * sr + h * h * self.rho[i] * a[i * m + j] * self.kernel(i, j);
            }
        }
        g
    }

    /// Nearest feasible amplitudes: non-negative, zero diagonal, Σ_j a_ij² h = 1.
    pub fn project(&self, a: &mut [f64]) -> Result<()> {
        let (m, h) = (self.m, self.spacing);
        for i in 0..m {
            let row = &mut a[i * m..(i + 1) * m];
            row.iter_mut().for_each(|v| *v = v.abs());
            row[i] = 0.0;
            let norm = (row.iter().map(|v| v * v).sum::<f64>() * h).sqrt();
            if !(norm > 0.0 && norm.is_finite()) {
                return Err(Error::DegenerateNormalization);
            }
            row.iter_mut().for_each(|v| *v /= norm);
        }
        Ok(())
    }

    /// Amplitudes of the pairwise family f ∝ e^{-γ ρ(x)ρ(x') k(x - x')}
    /// restricted to the grid and projected onto the feasible set.
    pub fn parametric_amplitudes(&self, gamma: f64) -> Result<Vec<f64>> {
        let m = self.m;
        let mut a = vec![0.0; m * m];
        for i in 0..m {
            let logs: Vec<f64> = (0..m)
                .map(|j| -gamma * self.rho[i] * self.rho[j] * self.kernel(i, j))
                .collect();
            let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            for j in 0..m {
                a[i * m + j] = (0.5 * (logs[j] - top)).exp();
            }
        }
        self.project(&mut a)?;
        Ok(a)
    }

    /// Projected gradient descent with an adaptive step.
    pub fn descend(&self, start: &[f64], options: &DescentOptions) -> Result<DescentResult> {
        let mut a = start.to_vec();
        self.project(&mut a)?;
        let initial = self.gamma(&a);
        let mut value = initial;
        let mut step = options.initial_step;
        let mut converged = false;
        let mut iterations = 0;
        while iterations < options.max_iter {
            iterations += 1;
            let g = self.gamma_gradient(&a);
            let mut accepted = false;
            while step >= options.min_step {
                let mut trial: Vec<f64> = a.iter().zip(&g).map(|(x, d)| x - step * d).collect();
                if self.project(&mut trial).is_ok() {
                    let v = self.gamma(&trial);
                    if v < value {
                        let gain = value - v;
                        a = trial;
                        value = v;
                        step *= 1.5;
                        accepted = true;
                        if gain < options.tolerance {
                            converged = true;
                        }
                        break;
                    }
                }
                step *= 0.5;
            }
            if !accepted {
                converged = true;
            }
            if converged {
                break;
            }
        }
        if !value.is_finite() {
            return Err(Error::NonFinite {
                context: "grid descent".into(),
            });
        }
        Ok(DescentResult {
            initial,
            value,
            iterations,
            converged,
            amplitudes: a,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DescentOptions {
    pub initial_step: f64,
    pub min_step: f64,
    /// Stop once an accepted step gains less than this (Hartree).
    pub tolerance: f64,
    pub max_iter: usize,
}

impl Default for DescentOptions {
    fn default() -> Self {
        Self {
            initial_step: 0.05,
            min_step: 1e-14,
            tolerance: 1e-13,
            max_iter: 50_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DescentResult {
    pub initial: f64,
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
    pub amplitudes: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Exchange {
    Symmetric,
    Antisymmetric,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridEigenstate {
    pub energy: f64,
    pub exchange: Exchange,
    pub external_energy: f64,
    pub psi: ReferenceWavefunction,
}

/// Lowest two-electron eigenstate of
/// H = Σ_i [-½Δ_h - Z/√(x_i² + a²)] + 1/√((x₁-x₂)² + a²)
/// on M nodes, within the given exchange symmetry.
pub fn exact_ground_state(m: usize, spacing: f64, softening: f64, charge: f64, exchange: Exchange) -> Result<GridEigenstate> {
    if !(2..=MAX_GRID_POINTS).contains(&m) {
        return Err(Error::invalid("m", format!("grid size must be in 2..={MAX_GRID_POINTS}")));
    }
    let h = spacing;
    let x = grid_nodes(m, h);
    let v: Vec<f64> = x.iter().map(|&xi| -charge * softened(xi, softening)).collect();
    let basis: Vec<(usize, usize)> = (0..m)
        .flat_map(|i| (i..m).map(move |j| (i, j)))
        .filter(|&(i, j)| exchange == Exchange::Symmetric || i < j)
        .collect();
    let index = |i: usize, j: usize| -> Option<usize> {
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        basis.iter().position(|&b| b == (i, j))
    };
    // basis norms: |ii⟩ for the diagonal, (|ij⟩ ± |ji⟩)/√2 otherwise
    let weight = |i: usize, j: usize| if i == j { 1.0 } else { std::f64::consts::FRAC_1_SQRT_2 };
    let sign = if exchange == Exchange::Symmetric { 1.0 } else { -1.0 };
    let dim = basis.len();
    let mut hm = DMatrix::<f64>::zeros(dim, dim);
    for (col, &(i, j)) in basis.iter().enumerate() {
        hm[(col, col)] += 2.0 / (h * h) + v[i] + v[j] + softened(x[i] - x[j], softening);
        // act with the hopping on the product components of the basis vector
        let components: Vec<(usize, usize, f64)> = if i == j {
            vec![(i, j, 1.0)]
        } else {
            vec![(i, j, weight(i, j)), (j, i, sign * weight(i, j))]
        };
        for (p, q, c) in components {
            let hops = [
                (p.wrapping_sub(1), q),
                (p + 1, q),
                (p, q.wrapping_sub(1)),
                (p, q + 1),
            ];
            for (pp, qq) in hops {
                if pp >= m || qq >= m {
                    continue;
                }
                if exchange == Exchange::Antisymmetric && pp == qq {
                    continue;
                }
                let row = index(pp, qq).expect("hop stays in basis");
                let (a, b) = basis[row];
                // ⟨row| pp qq⟩ coefficient
                let overlap = if a == b {
                    1.0
                } else if (pp, qq) == (a, b) {
                    weight(a, b)
                } else {
                    sign * weight(a, b)
                };
                hm[(row, col)] += -0.5 / (h * h) * c * overlap;
            }
        }
    }
    let eig = SymmetricEigen::new(hm);
    let (k, &energy) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .ok_or(Error::DegenerateNormalization)?;
    let c = eig.eigenvectors.column(k);
    let mut values = vec![0.0; m * m];
    for (n, &(i, j)) in basis.iter().enumerate() {
        if i == j {
            values[i * m + j] = c[n];
        } else {
            values[i * m + j] = c[n] * weight(i, j);
            values[j * m + i] = sign * c[n] * weight(i, j);
        }
    }
    let psi = ReferenceWavefunction::grid(m, spacing, softening, values)?;
    let rho = psi.grid_density()?;
    let external_energy = rho.iter().zip(&v).map(|(r, v)| r * v).sum::<f64>() * h;
    Ok(GridEigenstate {
        energy,
        exchange,
        external_energy,
        psi,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BruteForceOptions {
    pub restarts: usize,
    pub seed: u64,
    pub tolerance: f64,
    pub descent: DescentOptions,
}

impl Default for BruteForceOptions {
    fn default() -> Self {
        Self {
            restarts: 8,
            seed: 1,
            tolerance: 0.05,
            descent: DescentOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BruteForceReport {
    pub gamma_grid: f64,
    pub gamma_parametric: f64,
    pub tolerance: f64,
    pub passed: bool,
    /// False when no restart met the descent stopping rule; the value is
    /// then the best found.
    pub converged: bool,
    pub best_restart: usize,
    pub restart_values: Vec<f64>,
    pub max_diagonal: f64,
    pub amplitudes: Vec<f64>,
}

/// Minimizes the discrete Γ over tabulated f and compares with a parametric
/// minimum. `starts` are tried alongside the random restarts.
pub fn bruteforce_inner_min(
    sys: &GridSystem1D,
    gamma_parametric: f64,
    starts: &[Vec<f64>],
    options: &BruteForceOptions,
) -> Result<BruteForceReport> {
    let m = sys.m();
    let mut initial: Vec<Vec<f64>> = starts.to_vec();
    for k in 0..options.restarts {
        let mut rng = stream(options.seed, "bruteforce", k as u64);
        initial.push((0..m * m).map(|_| rng.random::<f64>() + 1e-3).collect());
    }
    if initial.is_empty() {
        return Err(Error::invalid("restarts", "need at least one starting point"));
    }
    let results: Vec<Result<DescentResult>> = initial.par_iter().map(|s| sys.descend(s, &options.descent)).collect();
    let results: Vec<DescentResult> = results.into_iter().collect::<Result<_>>()?;
    let (best_restart, best) = results
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.value.total_cmp(&b.1.value).then(a.0.cmp(&b.0)))
        .expect("non-empty");
    let max_diagonal = (0..m).map(|i| best.amplitudes[i * m + i].powi(2)).fold(0.0, f64::max);
    Ok(BruteForceReport {
        gamma_grid: best.value,
        gamma_parametric,
        tolerance: options.tolerance,
        passed: best.value <= gamma_parametric + options.tolerance,
        converged: results.iter().any(|r| r.converged),
        best_restart,
        restart_values: results.iter().map(|r| r.value).collect(),
        max_diagonal,
        amplitudes: best.amplitudes.clone(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ParametricSetting {
    /// Pairwise family with γ minimized on the grid.
    PairwiseOptimized,
    /// Simple family (γ = 1).
    Simple,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParametricMinimum {
    pub setting: ParametricSetting,
    pub gamma_parameter: f64,
    pub value: f64,
    pub amplitudes: Vec<f64>,
}

pub fn parametric_minimum(sys: &GridSystem1D, setting: ParametricSetting, bounds: Interval) -> Result<ParametricMinimum> {
    let parameter = match setting {
        ParametricSetting::Simple => 1.0,
        ParametricSetting::PairwiseOptimized => {
            // search ln γ; the ends are checked explicitly as the minimum
            // may sit on a bound
            let log = Interval::new(bounds.lower.ln(), bounds.upper.ln());
            let objective = |t: f64| -> Result<f64> { Ok(sys.gamma(&sys.parametric_amplitudes(t.exp())?)) };
            let r = golden_section(objective, 0.0, log, 1e-6, 200)?;
            let mut best = (r.x, r.value);
            for t in [log.lower, log.upper] {
                let v = objective(t)?;
                if v < best.1 {
                    best = (t, v);
                }
            }
            best.0.exp()
        }
    };
    let amplitudes = sys.parametric_amplitudes(parameter)?;
    Ok(ParametricMinimum {
        setting,
        gamma_parameter: parameter,
        value: sys.gamma(&amplitudes),
        amplitudes,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StationarityReport {
    pub exact_energy: f64,
    /// Γ + W + V_ext at the extracted f; equals the exact energy.
    pub reconstructed_energy: f64,
    pub gamma_initial: f64,
    pub gamma_after: f64,
    pub decrease: f64,
    pub tolerance: f64,
    pub passed: bool,
}

/// Starts descent at the f extracted from the lowest antisymmetric state
/// and reports how far Γ drops.
pub fn stationarity_check(
    m: usize,
    spacing: f64,
    softening: f64,
    charge: f64,
    tolerance: f64,
    options: &DescentOptions,
) -> Result<StationarityReport> {
    let state = exact_ground_state(m, spacing, softening, charge, Exchange::Antisymmetric)?;
    let sys = GridSystem1D::new(m, spacing, softening, state.psi.grid_density()?)?;
    let a: Vec<f64> = extract_f_table(&state.psi)?.iter().map(|v| v.sqrt()).collect();
    let gamma_initial = sys.gamma(&a);
    let result = sys.descend(&a, options)?;
    let decrease = gamma_initial - result.value;
    Ok(StationarityReport {
        exact_energy: state.energy,
        reconstructed_energy: gamma_initial + sys.weizsacker() + state.external_energy,
        gamma_initial,
        gamma_after: result.value,
        decrease,
        tolerance,
        passed: decrease <= tolerance,
    })
}

/// ρ for an exponential density sampled on the grid nodes.
pub fn exponential_grid_density(m: usize, spacing: f64, softening: f64, zeta: f64) -> Result<GridSystem1D> {
    let density = DensityModel::exponential(2, zeta, Dimensionality::OneSoftened)?;
    let shape: Vec<f64> = grid_nodes(m, spacing).iter().map(|&x| density.value(Vec3::on_line(x))).collect();
    GridSystem1D::with_shape(m, spacing, softening, &shape)
}
