//! The subcommands as library functions; the binary only parses arguments
//! and writes files.

use crate::config::RunConfig;
use crate::domain::Dimensionality;
use crate::error::{Error, Result};
use crate::functionals::{total_energy, CoulombPrefactor};
use crate::optimizer::{inner_minimize, outer_minimize, OptimizeTrace, OuterResult};
use crate::oracle::{exact_ground_state, verify_decomposition, Exchange, ReferenceWavefunction};
use crate::record::{
    CompareReport, DiagnosticsReport, FamilyComparison, PointDiagnostics, RunResults, VerifyReport,
};
use crate::rng::{pair_index, stream};
use crate::sampler::{sample_conditioning_point, sample_walker, summarize};

/// One energy evaluation at the configured parameters.
pub fn energy(config: &RunConfig) -> Result<RunResults> {
    let ansatz = config.ansatz()?;
    let breakdown = total_energy(
        &ansatz,
        &config.potential()?,
        &config.sampler,
        config.prefactor,
        &config.grid(),
    )?;
    Ok(RunResults::Energy {
        family: config.ansatz.family,
        params: ansatz.family().params(),
        zeta: config.zetas(),
        breakdown,
    })
}

/// Nested search. `on_point` sees the trace after every outer evaluation.
pub fn optimize(config: &RunConfig, on_point: impl FnMut(&OptimizeTrace)) -> Result<OuterResult> {
    outer_minimize(
        &config.ansatz()?,
        &config.potential()?,
        &config.optimize,
        &config.sampler,
        config.prefactor,
        &config.grid(),
        on_point,
    )
}

pub fn compare_ansatz(config: &RunConfig) -> Result<CompareReport> {
    let families = &config.compare.families;
    if families.len() < 2 {
        return Err(Error::invalid("compare.families", "list at least two families"));
    }
    let mut ranking = Vec::with_capacity(families.len());
    for &kind in families {
        let ansatz = config.ansatz_for(kind)?;
        let inner = inner_minimize(&ansatz, &config.optimize, &config.sampler, config.prefactor)?;
        let conditions = match inner.result.params {
            Some(p) => ansatz.with_family(crate::ansatz::AnsatzFamily::PairwiseBiparametric(p))?,
            None => ansatz.clone(),
        }
        .check_conditions(config.compare.condition_trials, config.sampler.seed)?;
        ranking.push(FamilyComparison {
            family: kind,
            params: inner.result.params,
            gamma_search: inner.result.search_value,
            gamma: inner.result.fresh_value,
            fermionic_compatible: conditions.fermionic_compatible,
            conditions,
        });
    }
    // stable sort keeps listing order on exact ties
    ranking.sort_by(|a, b| a.gamma.value.total_cmp(&b.gamma.value));
    let mut indistinguishable = Vec::new();
    for i in 0..ranking.len() {
        for j in i + 1..ranking.len() {
            let (a, b) = (&ranking[i].gamma, &ranking[j].gamma);
            if a.agrees_with(b.value, b.stderr, 3.0) {
                indistinguishable.push((i, j));
            }
        }
    }
    Ok(CompareReport {
        ranking,
        indistinguishable,
    })
}

/// Reference wavefunction implied by the configuration: the hydrogenic
/// product in 3D, the lowest antisymmetric grid state in 1D.
pub fn reference_wavefunction(config: &RunConfig) -> Result<ReferenceWavefunction> {
    match config.system.dimensionality {
        Dimensionality::Three => {
            let zeta = config.verify.zeta.unwrap_or(config.zetas()[0]);
            ReferenceWavefunction::product(zeta, config.system.n)
        }
        Dimensionality::OneSoftened => {
            if config.system.n != 2 {
                return Err(Error::Unsupported {
                    operation: "1D reference state",
                    what: format!("{} electrons", config.system.n),
                });
            }
            let v = &config.verify;
            Ok(exact_ground_state(
                v.grid_points,
                v.grid_spacing,
                config.system.softening,
                config.system.z,
                Exchange::Antisymmetric,
            )?
            .psi)
        }
    }
}

pub fn verify(config: &RunConfig) -> Result<VerifyReport> {
    let reference = reference_wavefunction(config)?;
    let mut decomposition = verify_decomposition(&reference, config.prefactor)?;
    if let Some(t) = config.verify.tolerance {
        decomposition.tolerance = t;
        decomposition.passed = decomposition.residual() <= t;
    }
    let conditions = if config.verify.condition_trials > 0 {
        Some(config.ansatz()?.check_conditions(config.verify.condition_trials, config.sampler.seed)?)
    } else {
        None
    };
    Ok(VerifyReport {
        passed: decomposition.passed,
        reference,
        decomposition,
        conditions,
    })
}

pub const DIAGNOSTIC_POINTS: usize = 8;

pub fn sample_diagnostics(config: &RunConfig) -> Result<DiagnosticsReport> {
    let ansatz = config.ansatz()?;
    let settings = &config.sampler;
    settings.validate()?;
    if ansatz.satellite_count() == 0 {
        return Err(Error::Unsupported {
            operation: "sample diagnostics",
            what: "a one-electron system".into(),
        });
    }
    let mut points = Vec::with_capacity(DIAGNOSTIC_POINTS);
    for p in 0..DIAGNOSTIC_POINTS {
        let mut point_rng = stream(settings.seed, "diagnostics/point", p as u64);
        let point = loop {
            let r = sample_conditioning_point(ansatz.density(), &mut point_rng);
            if !ansatz.has_bounded_support() || ansatz.space().in_omega(r) {
                break r;
            }
        };
        let mut series = Vec::with_capacity(settings.walkers);
        let mut rates = Vec::new();
        let mut steps = Vec::new();
        let mut exact = false;
        for w in 0..settings.walkers {
            let mut rng = stream(settings.seed, "diagnostics/walker", pair_index(p as u64, w as u64));
            let mut values = Vec::with_capacity(settings.samples_per_walker);
            let summary = sample_walker(&ansatz, point, settings, &mut rng, |cfg| {
                values.push(ansatz.space().kernel(cfg.point - cfg.satellites[0]));
                Ok(())
            })?;
            rates.push(summary.acceptance_rate);
            steps.push(summary.step);
            exact = summary.exact;
            series.push(values);
        }
        points.push(PointDiagnostics {
            point,
            acceptance_rates: rates,
            tuned_steps: steps,
            exact_sampler: exact,
            inverse_distance: summarize(&series, settings.batches),
        });
    }
    let all: Vec<f64> = points.iter().flat_map(|p| p.acceptance_rates.iter().copied()).collect();
    Ok(DiagnosticsReport {
        family: config.ansatz.family,
        mean_acceptance: all.iter().sum::<f64>() / all.len() as f64,
        points,
    })
}

/// Prefactor override from the command line.
pub fn with_prefactor(mut config: RunConfig, prefactor: Option<CoulombPrefactor>) -> RunConfig {
    if let Some(p) = prefactor {
        config.prefactor = p;
    }
    config
}
