//! Estimators for the energy terms: Weizsäcker, nonlocal Fisher
//! information, and the pair Coulomb term, plus their assembly.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ansatz::ConditionalAnsatz;
use crate::domain::{ensure_same, external_energy, DensityModel, ExternalPotential};
use crate::error::{Error, Result};
use crate::quadrature::QuadratureGrid;
use crate::rng;
use crate::sampler::{sample_walker, SamplerSettings};
use crate::vec3::Vec3;

/// Coefficient in front of ∫ρ(r) E_f[1/|r - r'|] dr.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum CoulombPrefactor {
    /// (N-1)/2, the pair-density marginal of ρ·f.
    #[default]
    Half,
    /// (N-1), the literal coefficient of the decomposition as usually written.
    Full,
}

impl CoulombPrefactor {
    pub fn factor(self, electrons: usize) -> f64 {
        let pairs = electrons.saturating_sub(1) as f64;
        match self {
            CoulombPrefactor::Half => 0.5 * pairs,
            CoulombPrefactor::Full => pairs,
        }
    }
}

impl std::str::FromStr for CoulombPrefactor {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "half" => Ok(CoulombPrefactor::Half),
            "full" => Ok(CoulombPrefactor::Full),
            other => Err(Error::invalid("prefactor", format!("expected `half` or `full`, got `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
}

impl Estimate {
    pub const ZERO: Estimate = Estimate { value: 0.0, stderr: 0.0 };

    pub fn new(value: f64, stderr: f64) -> Self {
        Self { value, stderr }
    }

    pub fn exact(value: f64) -> Self {
        Self { value, stderr: 0.0 }
    }

    /// |self - other| within `sigmas` combined standard errors (or an
    /// absolute floor when both are exact).
    pub fn agrees_with(&self, other: f64, other_err: f64, sigmas: f64) -> bool {
        let combined = (self.stderr.powi(2) + other_err.powi(2)).sqrt();
        (self.value - other).abs() <= sigmas * combined + 1e-12
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnergyBreakdown {
    pub weizsacker: f64,
    pub fisher: Estimate,
    pub coulomb: Estimate,
    pub external: f64,
    pub total: Estimate,
    pub gamma: Estimate,
    pub fisher_coulomb_covariance: f64,
    pub coulomb_prefactor_used: CoulombPrefactor,
    pub seed: u64,
    pub conditioning_points: usize,
    pub inner_samples: usize,
}

impl EnergyBreakdown {
    pub const CSV_HEADER: [&'static str; 11] = [
        "weizsacker",
        "fisher",
        "fisher_stderr",
        "coulomb",
        "coulomb_stderr",
        "external",
        "gamma",
        "gamma_stderr",
        "total",
        "total_stderr",
        "prefactor",
    ];

    pub fn csv_row(&self) -> Vec<String> {
        vec![
            fmt(self.weizsacker),
            fmt(self.fisher.value),
            fmt(self.fisher.stderr),
            fmt(self.coulomb.value),
            fmt(self.coulomb.stderr),
            fmt(self.external),
            fmt(self.gamma.value),
            fmt(self.gamma.stderr),
            fmt(self.total.value),
            fmt(self.total.stderr),
            match self.coulomb_prefactor_used {
                CoulombPrefactor::Half => "half".into(),
                CoulombPrefactor::Full => "full".into(),
            },
        ]
    }
}

pub(crate) fn fmt(x: f64) -> String {
    format!("{x:.10e}")
}

/// (1/8) ∫ |∇ρ|²/ρ by quadrature. Nodes sitting on a cusp use the
/// one-sided limit of the integrand.
pub fn weizsacker_term(density: &DensityModel, grid: &QuadratureGrid) -> Result<f64> {
    ensure_same(density.dimensionality(), grid.dimensionality())?;
    let mut total = 0.0;
    for (p, w) in grid.points() {
        let rho = density.value(p);
        if rho <= 0.0 {
            continue;
        }
        let grad = match density.gradient(p) {
            Ok(g) => g,
            Err(Error::DegenerateAtOrigin) => density.gradient(p + Vec3::new(1e-300, 0.0, 0.0))?,
            Err(e) => return Err(e),
        };
        total += w * grad.norm_sq() / rho;
    }
    Ok(total / 8.0)
}

/// Fisher and Coulomb estimates that share one set of chains.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CorrelationEstimate {
    pub fisher: Estimate,
    pub coulomb: Estimate,
    pub gamma: Estimate,
    pub covariance: f64,
    pub prefactor: CoulombPrefactor,
    /// ∫ρ(r) E_f[1/|r - r'|] dr before the prefactor.
    pub coulomb_raw: Estimate,
}

struct PointSample {
    score_variance: f64,
    inverse_distance: f64,
}

fn sample_point(ansatz: &ConditionalAnsatz, settings: &SamplerSettings, index: usize) -> Result<PointSample> {
    let mut outer = rng::stream(settings.seed, "outer", index as u64);
    let point = ansatz.density().sample(&mut outer);
    let comps = ansatz.space().components();
    let mut sum = [0.0f64; 3];
    let mut sum_sq = [0.0f64; 3];
    let mut kernel_sum = 0.0;
    let mut count = 0usize;
    for w in 0..settings.walkers {
        let mut inner = rng::stream(settings.seed, "inner", rng::pair_index(index as u64, w as u64));
        sample_walker(ansatz, point, settings, &mut inner, |cfg| {
            let s = ansatz.score_raw(cfg.point, &cfg.satellites)?;
            // mean over satellites; every family is permutation symmetric
            let k: f64 = cfg
                .satellites
                .iter()
                .map(|&sat| ansatz.space().kernel(cfg.point - sat))
                .sum::<f64>()
                / cfg.satellites.len() as f64;
            if !s.is_finite() || !k.is_finite() {
                return Err(Error::NonFinite {
                    context: format!("score/kernel at r = {:?}", cfg.point),
                });
            }
            for c in 0..comps {
                let v = s.component(c);
                sum[c] += v;
                sum_sq[c] += v * v;
            }
            kernel_sum += k;
            count += 1;
            Ok(())
        })?;
    }
    let n = count as f64;
    let mut variance = 0.0;
    if count > 1 {
        for c in 0..comps {
            let mean = sum[c] / n;
            variance += ((sum_sq[c] - n * mean * mean) / (n - 1.0)).max(0.0);
        }
    }
    Ok(PointSample {
        score_variance: variance,
        inverse_distance: kernel_sum / n,
    })
}

fn run_pool<T: Send>(workers: usize, job: impl FnOnce() -> T + Send) -> Result<T> {
    if workers == 0 {
        return Ok(job());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    Ok(pool.install(job))
}

/// Two-level Monte Carlo estimate of Γ = Fisher + Coulomb.
///
/// Conditioning points r_m ~ ρ/N; at each, chains under f give the score
/// variance trace V_m and the mean inverse distance C_m. Then
/// Fisher = (N/8)·mean(V_m) and Coulomb = prefactor·N·mean(C_m). Errors come
/// from the spread of the per-point values, which contains both the outer and
/// the inner variance.
pub fn gamma_correlation(
    ansatz: &ConditionalAnsatz,
    settings: &SamplerSettings,
    prefactor: CoulombPrefactor,
) -> Result<CorrelationEstimate> {
    settings.validate()?;
    let n = ansatz.space().electrons();
    if n == 1 {
        return Ok(CorrelationEstimate {
            fisher: Estimate::ZERO,
            coulomb: Estimate::ZERO,
            gamma: Estimate::ZERO,
            covariance: 0.0,
            prefactor,
            coulomb_raw: Estimate::ZERO,
        });
    }
    let m = settings.conditioning_points;
    let samples: Vec<PointSample> = run_pool(settings.workers, || {
        (0..m)
            .into_par_iter()
            .map(|i| sample_point(ansatz, settings, i))
            .collect::<Result<Vec<_>>>()
    })??;

    let nf = n as f64;
    let mf = m as f64;
    let mean_v = samples.iter().map(|s| s.score_variance).sum::<f64>() / mf;
    let mean_c = samples.iter().map(|s| s.inverse_distance).sum::<f64>() / mf;
    let (var_v, var_c, cov_vc) = if m > 1 {
        let mut vv = 0.0;
        let mut cc = 0.0;
        let mut vc = 0.0;
        for s in &samples {
            let dv = s.score_variance - mean_v;
            let dc = s.inverse_distance - mean_c;
            vv += dv * dv;
            cc += dc * dc;
            vc += dv * dc;
        }
        (vv / (mf - 1.0), cc / (mf - 1.0), vc / (mf - 1.0))
    } else {
        (0.0, 0.0, 0.0)
    };

    let fisher_scale = nf / 8.0;
    let fisher = Estimate::new(fisher_scale * mean_v, fisher_scale * (var_v / mf).sqrt());
    let coulomb_raw = Estimate::new(nf * mean_c, nf * (var_c / mf).sqrt());
    let factor = prefactor.factor(n);
    let coulomb = Estimate::new(factor * coulomb_raw.value, factor * coulomb_raw.stderr);
    let covariance = fisher_scale * factor * nf * cov_vc / mf;
    let gamma_var = fisher.stderr.powi(2) + coulomb.stderr.powi(2) + 2.0 * covariance;
    Ok(CorrelationEstimate {
        fisher,
        coulomb,
        gamma: Estimate::new(fisher.value + coulomb.value, gamma_var.max(0.0).sqrt()),
        covariance,
        prefactor,
        coulomb_raw,
    })
}

/// (1/8)∫ρ(r)∫|∇_r f|²/f, estimated as (N/8)·E_r[Var_f(s | r)].
pub fn fisher_term(ansatz: &ConditionalAnsatz, settings: &SamplerSettings) -> Result<Estimate> {
    Ok(gamma_correlation(ansatz, settings, CoulombPrefactor::Half)?.fisher)
}

/// prefactor·∫ρ(r) E_f[1/|r - r'|] dr; zero for a single electron.
pub fn coulomb_term(
    ansatz: &ConditionalAnsatz,
    settings: &SamplerSettings,
    prefactor: CoulombPrefactor,
) -> Result<Estimate> {
    Ok(gamma_correlation(ansatz, settings, prefactor)?.coulomb)
}

/// Weizsäcker + Fisher + Coulomb + external.
pub fn total_energy(
    ansatz: &ConditionalAnsatz,
    potential: &ExternalPotential,
    settings: &SamplerSettings,
    prefactor: CoulombPrefactor,
    grid: &QuadratureGrid,
) -> Result<EnergyBreakdown> {
    let weizsacker = weizsacker_term(ansatz.density(), grid)?;
    let external = external_energy(ansatz.density(), potential, grid)?;
    let corr = gamma_correlation(ansatz, settings, prefactor)?;
    Ok(assemble(weizsacker, external, &corr, settings))
}

pub(crate) fn assemble(
    weizsacker: f64,
    external: f64,
    corr: &CorrelationEstimate,
    settings: &SamplerSettings,
) -> EnergyBreakdown {
    let total = weizsacker + corr.fisher.value + corr.coulomb.value + external;
    EnergyBreakdown {
        weizsacker,
        fisher: corr.fisher,
        coulomb: corr.coulomb,
        external,
        total: Estimate::new(total, corr.gamma.stderr),
        gamma: corr.gamma,
        fisher_coulomb_covariance: corr.covariance,
        coulomb_prefactor_used: corr.prefactor,
        seed: settings.seed,
        conditioning_points: settings.conditioning_points,
        inner_samples: settings.inner_samples(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ansatz::{AnsatzFamily, AnsatzParams};
    use crate::domain::{Dimensionality, SpaceSpec};

    const HE_ZETA: f64 = 27.0 / 16.0;

    fn frozen(zeta: f64) -> ConditionalAnsatz {
        ConditionalAnsatz::new(
            AnsatzFamily::FrozenOrbitalProduct,
            DensityModel::atomic(2, zeta).unwrap(),
            SpaceSpec::atom(2),
        )
        .unwrap()
    }

    fn small() -> SamplerSettings {
        SamplerSettings {
            conditioning_points: 256,
            samples_per_walker: 50,
            ..Default::default()
        }
    }

    #[test]
    fn weizsacker_closed_forms() {
        let grid = QuadratureGrid::default_3d();
        let h = DensityModel::atomic(1, 1.0).unwrap();
        assert!((weizsacker_term(&h, &grid).unwrap() - 0.5).abs() < 1e-8);
        let he = DensityModel::atomic(2, HE_ZETA).unwrap();
        assert!((weizsacker_term(&he, &grid).unwrap() - HE_ZETA * HE_ZETA).abs() < 1e-5);
        let line = DensityModel::exponential(2, 0.8, Dimensionality::OneSoftened).unwrap();
        let w = weizsacker_term(&line, &QuadratureGrid::default_1d()).unwrap();
        assert!((w - 2.0 * 0.64 / 2.0).abs() < 1e-6, "{w}");
    }

    #[test]
    fn weizsacker_of_uniform_table_is_zero() {
        let flat = DensityModel::tabulated_1d(2, -3.0, 0.5, vec![1.0; 13]).unwrap();
        assert_eq!(weizsacker_term(&flat, &QuadratureGrid::default_1d()).unwrap(), 0.0);
        assert!(weizsacker_term(&flat, &QuadratureGrid::default_3d()).is_err());
    }

    #[test]
    fn frozen_family_has_exactly_zero_fisher() {
        let f = fisher_term(&frozen(HE_ZETA), &small()).unwrap();
        assert_eq!(f, Estimate::ZERO);
    }

    #[test]
    fn single_electron_has_no_correlation() {
        let a = ConditionalAnsatz::new(
            AnsatzFamily::FrozenOrbitalProduct,
            DensityModel::atomic(1, 1.0).unwrap(),
            SpaceSpec::atom(1),
        )
        .unwrap();
        let c = gamma_correlation(&a, &small(), CoulombPrefactor::Half).unwrap();
        assert_eq!(c.gamma, Estimate::ZERO);
    }

    #[test]
    fn prefactor_is_exactly_linear() {
        let a = frozen(HE_ZETA);
        let half = coulomb_term(&a, &small(), CoulombPrefactor::Half).unwrap();
        let full = coulomb_term(&a, &small(), CoulombPrefactor::Full).unwrap();
        assert_eq!(full.value, 2.0 * half.value);
        assert_eq!(full.stderr, 2.0 * half.stderr);
    }

    #[test]
    fn frozen_coulomb_matches_hydrogenic_integral() {
        let c = coulomb_term(&frozen(HE_ZETA), &small(), CoulombPrefactor::Half).unwrap();
        let exact = 5.0 * HE_ZETA / 8.0;
        assert!(c.agrees_with(exact, 0.0, 3.0), "{c:?} vs {exact}");
    }

    #[test]
    fn gaussian_toy_fisher_is_n_over_eight() {
        let a = ConditionalAnsatz::new(
            AnsatzFamily::GaussianShift,
            DensityModel::exponential(2, 1.0, Dimensionality::OneSoftened).unwrap(),
            SpaceSpec::line(2, 10.0, 1.0).unwrap(),
        )
        .unwrap();
        let f = fisher_term(&a, &small()).unwrap();
        assert!(f.agrees_with(0.25, 0.0, 3.0), "{f:?}");
    }

    #[test]
    fn vanishing_gamma_gives_vanishing_fisher() {
        let a = ConditionalAnsatz::new_test_mode(
            AnsatzFamily::PairwiseBiparametric(AnsatzParams::new(1e-6, 0.0)),
            DensityModel::atomic(2, HE_ZETA).unwrap(),
            SpaceSpec::atom(2),
        )
        .unwrap();
        let f = fisher_term(&a, &small()).unwrap();
        assert!(f.value.abs() <= 3.0 * f.stderr + 1e-9, "{f:?}");
    }

    #[test]
    fn total_is_sum_of_parts() {
        let a = frozen(HE_ZETA);
        let e = total_energy(
            &a,
            &ExternalPotential::coulomb(2.0),
            &small(),
            CoulombPrefactor::Half,
            &QuadratureGrid::default_3d(),
        )
        .unwrap();
        assert_eq!(e.total.value, e.weizsacker + e.fisher.value + e.coulomb.value + e.external);
        assert_eq!(e.gamma.value, e.fisher.value + e.coulomb.value);
    }

    #[test]
    fn flat_density_without_potential_is_coulomb_only() {
        let space = SpaceSpec::line(2, 3.0, 1.0).unwrap();
        let rho = DensityModel::tabulated_1d(2, -3.0, 0.5, vec![1.0; 13]).unwrap();
        let a = ConditionalAnsatz::new(AnsatzFamily::FrozenOrbitalProduct, rho, space).unwrap();
        let e = total_energy(&a, &ExternalPotential::none(), &small(), CoulombPrefactor::Half, &QuadratureGrid::default_1d())
            .unwrap();
        assert_eq!(e.weizsacker, 0.0);
        assert_eq!(e.fisher.value, 0.0);
        assert_eq!(e.external, 0.0);
        assert_eq!(e.total.value, e.coulomb.value);
    }
}
