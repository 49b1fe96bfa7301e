//! Gauss-Legendre rules and the product grids built on them.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::domain::Dimensionality;
use crate::error::{Error, Result};
use crate::vec3::Vec3;

/// Gauss-Legendre nodes and weights on [-1, 1], nodes ascending.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "Gauss-Legendre rule needs at least one node");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        // Tricomi initial guess, refined by Newton on P_n.
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// Gauss-Legendre rule mapped onto [a, b].
pub fn gauss_legendre_interval(n: usize, a: f64, b: f64) -> (Vec<f64>, Vec<f64>) {
    let (x, w) = gauss_legendre(n);
    let half = 0.5 * (b - a);
    let mid = 0.5 * (b + a);
    (
        x.iter().map(|t| mid + half * t).collect(),
        w.iter().map(|v| v * half).collect(),
    )
}

/// Semi-infinite radial rule r = s(1+x)/(1-x); no node sits at the origin.
pub fn radial_rule(n: usize, scale: f64) -> (Vec<f64>, Vec<f64>) {
    let (x, w) = gauss_legendre(n);
    x.iter()
        .zip(&w)
        .map(|(&t, &wt)| {
            let r = scale * (1.0 + t) / (1.0 - t);
            let jac = 2.0 * scale / ((1.0 - t) * (1.0 - t));
            (r, wt * jac)
        })
        .unzip()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GridScheme {
    /// Mapped radial Gauss-Legendre times a (cos θ Gauss-Legendre, uniform φ) sphere.
    RadialGaussLegendre,
    /// Radial Gauss-Legendre on a finite ball [0, R].
    Ball,
    /// Uniform 1D nodes with composite Simpson weights.
    Uniform1D,
}

/// Integration nodes with strictly positive weights.
#[derive(Debug, Clone)]
pub struct QuadratureGrid {
    dimensionality: Dimensionality,
    scheme: GridScheme,
    nodes: Vec<Vec3>,
    weights: Vec<f64>,
}

pub const DEFAULT_RADIAL_NODES: usize = 160;
pub const DEFAULT_THETA_NODES: usize = 6;
pub const DEFAULT_PHI_NODES: usize = 12;
pub const DEFAULT_1D_HALF_WIDTH: f64 = 40.0;
pub const DEFAULT_1D_NODES: usize = 16_001;

impl QuadratureGrid {
    pub fn default_3d() -> Self {
        Self::radial(DEFAULT_RADIAL_NODES, DEFAULT_THETA_NODES, DEFAULT_PHI_NODES, 1.0)
    }

    pub fn default_1d() -> Self {
        Self::uniform_1d(DEFAULT_1D_HALF_WIDTH, DEFAULT_1D_NODES)
            .expect("default 1D grid parameters are valid")
    }

    pub fn default_for(dim: Dimensionality) -> Self {
        match dim {
            Dimensionality::Three => Self::default_3d(),
            Dimensionality::OneSoftened => Self::default_1d(),
        }
    }

    /// Default grid refined `level` times (each level doubles the node count
    /// along the radial or linear axis).
    pub fn refined(dim: Dimensionality, level: u32) -> Self {
        let factor = 1usize << level;
        match dim {
            Dimensionality::Three => Self::radial(
                DEFAULT_RADIAL_NODES * factor,
                DEFAULT_THETA_NODES,
                DEFAULT_PHI_NODES,
                1.0,
            ),
            Dimensionality::OneSoftened => {
                Self::uniform_1d(DEFAULT_1D_HALF_WIDTH, (DEFAULT_1D_NODES - 1) * factor + 1)
                    .expect("refined 1D grid parameters are valid")
            }
        }
    }

    pub fn radial(n_radial: usize, n_theta: usize, n_phi: usize, scale: f64) -> Self {
        let (r, wr) = radial_rule(n_radial, scale);
        Self::spherical_product(&r, &wr, n_theta, n_phi, GridScheme::RadialGaussLegendre)
    }

    /// Product grid on the ball of the given radius, centred at the origin.
    pub fn ball(radius: f64, n_radial: usize, n_theta: usize, n_phi: usize) -> Self {
        let (r, wr) = gauss_legendre_interval(n_radial, 0.0, radius);
        Self::spherical_product(&r, &wr, n_theta, n_phi, GridScheme::Ball)
    }

    fn spherical_product(
        r: &[f64],
        wr: &[f64],
        n_theta: usize,
        n_phi: usize,
        scheme: GridScheme,
    ) -> Self {
        let (ct, wt) = gauss_legendre(n_theta);
        let dphi = 2.0 * PI / n_phi as f64;
        let mut nodes = Vec::with_capacity(r.len() * n_theta * n_phi);
        let mut weights = Vec::with_capacity(nodes.capacity());
        for (&ri, &wri) in r.iter().zip(wr) {
            for (&c, &wc) in ct.iter().zip(&wt) {
                let s = (1.0 - c * c).sqrt();
                for k in 0..n_phi {
                    let phi = (k as f64 + 0.5) * dphi;
                    nodes.push(Vec3::new(ri * s * phi.cos(), ri * s * phi.sin(), ri * c));
                    weights.push(wri * ri * ri * wc * dphi);
                }
            }
        }
        Self {
            dimensionality: Dimensionality::Three,
            scheme,
            nodes,
            weights,
        }
    }

    /// Uniform nodes on [-half_width, half_width] with Simpson weights;
    /// `n` must be odd so the origin is a node.
    pub fn uniform_1d(half_width: f64, n: usize) -> Result<Self> {
        if n < 3 || n.is_multiple_of(2) {
            return Err(Error::invalid("grid.nodes", "uniform 1D grid needs an odd node count >= 3"));
        }
        if !(half_width > 0.0) {
            return Err(Error::invalid("grid.half_width", "must be positive"));
        }
        let h = 2.0 * half_width / (n - 1) as f64;
        let mut nodes = Vec::with_capacity(n);
        let mut weights = Vec::with_capacity(n);
        for i in 0..n {
            nodes.push(Vec3::on_line(-half_width + i as f64 * h));
            let c = if i == 0 || i == n - 1 {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            weights.push(c * h / 3.0);
        }
        Ok(Self {
            dimensionality: Dimensionality::OneSoftened,
            scheme: GridScheme::Uniform1D,
            nodes,
            weights,
        })
    }

    pub fn dimensionality(&self) -> Dimensionality {
        self.dimensionality
    }

    pub fn scheme(&self) -> GridScheme {
        self.scheme
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[Vec3] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn points(&self) -> impl Iterator<Item = (Vec3, f64)> + '_ {
        self.nodes.iter().copied().zip(self.weights.iter().copied())
    }

    pub fn integrate(&self, mut integrand: impl FnMut(Vec3) -> f64) -> f64 {
        self.points().map(|(p, w)| w * integrand(p)).sum()
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn legendre_rule_integrates_polynomials_exactly() {
        let (x, w) = gauss_legendre(7);
        // exact up to degree 13
        let integral: f64 = x.iter().zip(&w).map(|(t, v)| v * t.powi(12)).sum();
        assert!((integral - 2.0 / 13.0).abs() < 1e-14);
        assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-14);
        assert!(w.iter().all(|&v| v > 0.0));
    }

    #[test]
    fn odd_rule_has_zero_middle_node() {
        let (x, _) = gauss_legendre(5);
        assert!(x[2].abs() < 1e-15);
        assert!(x.windows(2).all(|p| p[0] < p[1]));
    }

    #[test]
    fn radial_rule_integrates_exponential_moment() {
        let (r, w) = radial_rule(120, 1.0);
        let val: f64 = r.iter().zip(&w).map(|(r, w)| w * r * r * (-r).exp()).sum();
        assert!((val - 2.0).abs() < 1e-10, "{val}");
        assert!(r.iter().all(|&v| v > 0.0));
    }

    #[test]
    fn sphere_weights_sum_to_solid_angle_times_radial_measure() {
        let grid = QuadratureGrid::ball(2.0, 20, 4, 8);
        let vol = grid.total_weight();
        assert!((vol - 4.0 / 3.0 * PI * 8.0).abs() < 1e-10);
        assert!(grid.weights().iter().all(|&w| w > 0.0));
    }

    #[test]
    fn simpson_grid_requires_odd_nodes() {
        assert!(QuadratureGrid::uniform_1d(1.0, 10).is_err());
        let g = QuadratureGrid::uniform_1d(1.0, 11).unwrap();
        assert!((g.integrate(|p| p.x * p.x) - 2.0 / 3.0).abs() < 1e-14);
        assert!(g.nodes().iter().any(|p| p.x == 0.0));
    }
}
