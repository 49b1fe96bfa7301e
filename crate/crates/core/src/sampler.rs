//! Seedable sampling: conditioning points from ρ/N and satellite
//! configurations from f via single-particle Metropolis moves.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::ansatz::{ConditionalAnsatz, Configuration};
use crate::domain::DensityModel;
use crate::error::{Error, Result};
use crate::rng::{self, StreamRng};
use crate::vec3::Vec3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerSettings {
    /// Initial Gaussian proposal width σ (bohr).
    pub step: f64,
    pub burn_in: usize,
    /// Metropolis moves between kept samples.
    pub thinning: usize,
    pub walkers: usize,
    pub samples_per_walker: usize,
    /// Number of conditioning points M_r for the outer integral.
    pub conditioning_points: usize,
    pub batches: usize,
    /// Adapt σ during burn-in toward acceptance in [0.2, 0.5].
    pub tune: bool,
    pub seed: u64,
    /// Worker threads; 0 picks the machine default. Never affects results.
    pub workers: usize,
}

impl Default for SamplerSettings {
    fn default() -> Self {
        Self {
            step: 0.5,
            burn_in: 100,
            thinning: 2,
            walkers: 2,
            samples_per_walker: 32,
            conditioning_points: 32_768,
            batches: 32,
            tune: true,
            seed: 1,
            workers: 0,
        }
    }
}

impl SamplerSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.step > 0.0 && self.step.is_finite()) {
            return Err(Error::invalid("sampler.step", "proposal width must be positive"));
        }
        for (field, v) in [
            ("sampler.burn_in", self.burn_in),
            ("sampler.thinning", self.thinning),
            ("sampler.walkers", self.walkers),
            ("sampler.samples_per_walker", self.samples_per_walker),
            ("sampler.conditioning_points", self.conditioning_points),
            ("sampler.batches", self.batches),
        ] {
            if v == 0 {
                return Err(Error::invalid(field, "must be at least 1"));
            }
        }
        Ok(())
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Kept samples per conditioning point.
    pub fn inner_samples(&self) -> usize {
        self.walkers * self.samples_per_walker
    }
}

/// Walker state; `log_f` always matches the current configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainState {
    config: Configuration,
    log_f: f64,
    steps: u64,
    accepted: u64,
}

impl ChainState {
    pub fn new(ansatz: &ConditionalAnsatz, config: Configuration) -> Result<Self> {
        let log_f = ansatz.log_f_unnormalized(&config)?;
        if log_f == f64::NEG_INFINITY {
            return Err(Error::invalid("chain", "initial configuration has zero weight"));
        }
        Ok(Self {
            config,
            log_f,
            steps: 0,
            accepted: 0,
        })
    }

    pub fn config(&self) -> &Configuration {
        &self.config
    }

    pub fn log_f(&self) -> f64 {
        self.log_f
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn accepted(&self) -> u64 {
        self.accepted
    }

    pub fn acceptance_rate(&self) -> f64 {
        if self.steps == 0 {
            0.0
        } else {
            self.accepted as f64 / self.steps as f64
        }
    }
}

/// min(1, f̃'/f̃); zero for proposals with log f̃' = -∞.
pub fn acceptance_probability(log_old: f64, log_new: f64) -> f64 {
    if log_new == f64::NEG_INFINITY {
        0.0
    } else {
        (log_new - log_old).exp().min(1.0)
    }
}

/// Metropolis accept/reject for a symmetric proposal.
pub fn metropolis_accept<R: Rng + ?Sized>(log_old: f64, log_new: f64, rng: &mut R) -> bool {
    if log_new == f64::NEG_INFINITY {
        return false;
    }
    let delta = log_new - log_old;
    if delta >= 0.0 {
        return true;
    }
    rng.random::<f64>() < delta.exp()
}

/// One Gaussian single-satellite move. Returns whether it was accepted.
pub fn metropolis_step(
    chain: &mut ChainState,
    ansatz: &ConditionalAnsatz,
    step: f64,
    rng: &mut StreamRng,
) -> bool {
    let k = chain.config.satellites.len();
    chain.steps += 1;
    if k == 0 {
        chain.accepted += 1;
        return true;
    }
    let i = rng.random_range(0..k);
    let mut displacement = Vec3::ZERO;
    for axis in 0..ansatz.space().components() {
        displacement = displacement.with_component(axis, step * rng.sample::<f64, _>(StandardNormal));
    }
    let old = chain.config.satellites[i];
    chain.config.satellites[i] = old + displacement;
    let log_new = ansatz.log_weight(chain.config.point, &chain.config.satellites);
    if metropolis_accept(chain.log_f, log_new, rng) {
        chain.log_f = log_new;
        chain.accepted += 1;
        true
    } else {
        chain.config.satellites[i] = old;
        false
    }
}

pub fn sample_conditioning_point<R: Rng + ?Sized>(density: &DensityModel, rng: &mut R) -> Vec3 {
    density.sample(rng)
}

const TUNE_WINDOW: usize = 50;
const TARGET_LOW: f64 = 0.2;
const TARGET_HIGH: f64 = 0.5;

/// Outcome of one walker.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WalkerSummary {
    pub acceptance_rate: f64,
    pub step: f64,
    pub exact: bool,
}

/// Runs one walker at conditioning point `point` and hands every kept
/// configuration to `visit`. Families with an exact sampler are drawn i.i.d.
pub fn sample_walker(
    ansatz: &ConditionalAnsatz,
    point: Vec3,
    settings: &SamplerSettings,
    rng: &mut StreamRng,
    mut visit: impl FnMut(&Configuration) -> Result<()>,
) -> Result<WalkerSummary> {
    let kept = settings.samples_per_walker;
    if ansatz.has_exact_sampler() {
        for _ in 0..kept {
            let sats = ansatz.exact_satellites(point, rng).expect("exact family");
            visit(&Configuration::new(point, sats))?;
        }
        return Ok(WalkerSummary {
            acceptance_rate: 1.0,
            step: 0.0,
            exact: true,
        });
    }

    let sats = ansatz.initial_satellites(point, rng)?;
    let mut chain = ChainState::new(ansatz, Configuration::new(point, sats))?;
    let mut step = settings.step;
    let max_step = 2.0 * ansatz.space().omega_radius();

    let mut window_accepts = 0;
    for i in 0..settings.burn_in {
        if metropolis_step(&mut chain, ansatz, step, rng) {
            window_accepts += 1;
        }
        if settings.tune && (i + 1) % TUNE_WINDOW == 0 {
            let rate = window_accepts as f64 / TUNE_WINDOW as f64;
            if rate < TARGET_LOW {
                step *= 0.7;
            } else if rate > TARGET_HIGH {
                step = (step * 1.4).min(max_step);
            }
            window_accepts = 0;
        }
    }

    // σ is frozen from here on
    let steps_before = chain.steps;
    let accepted_before = chain.accepted;
    for _ in 0..kept {
        for _ in 0..settings.thinning {
            metropolis_step(&mut chain, ansatz, step, rng);
        }
        visit(&chain.config)?;
    }
    let measured = (chain.steps - steps_before) as f64;
    Ok(WalkerSummary {
        acceptance_rate: (chain.accepted - accepted_before) as f64 / measured.max(1.0),
        step,
        exact: false,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatorResult {
    pub mean: f64,
    pub stderr: f64,
    pub samples: usize,
    pub effective_samples: f64,
}

/// Estimates E_f[observable | r = point] over all walkers.
pub fn run_chain(
    ansatz: &ConditionalAnsatz,
    point: Vec3,
    settings: &SamplerSettings,
    observable: impl Fn(&Configuration) -> f64,
) -> Result<EstimatorResult> {
    settings.validate()?;
    let mut series = Vec::with_capacity(settings.walkers);
    for w in 0..settings.walkers {
        let mut rng = rng::stream(settings.seed, "run_chain", w as u64);
        let mut values = Vec::with_capacity(settings.samples_per_walker);
        sample_walker(ansatz, point, settings, &mut rng, |cfg| {
            let v = observable(cfg);
            if !v.is_finite() {
                return Err(Error::NonFinite {
                    context: format!("observable at satellites {:?}", cfg.satellites),
                });
            }
            values.push(v);
            Ok(())
        })?;
        series.push(values);
    }
    Ok(summarize(&series, settings.batches))
}

/// Mean, batch-means standard error, and summed per-walker ESS.
pub fn summarize(series: &[Vec<f64>], batches: usize) -> EstimatorResult {
    let all: Vec<f64> = series.iter().flatten().copied().collect();
    let n = all.len();
    let mean = all.iter().sum::<f64>() / n as f64;
    let ess: f64 = series.iter().map(|s| effective_sample_size(s)).sum();
    EstimatorResult {
        mean,
        stderr: batch_means_stderr(&all, batches),
        samples: n,
        effective_samples: ess.min(n as f64),
    }
}

/// Standard error of the mean from non-overlapping batch means.
pub fn batch_means_stderr(xs: &[f64], batches: usize) -> f64 {
    let n = xs.len();
    let b = batches.min(n);
    if b < 2 {
        return 0.0;
    }
    let size = n / b;
    let offset = n - size * b;
    let means: Vec<f64> = xs[offset..]
        .chunks_exact(size)
        .map(|c| c.iter().sum::<f64>() / size as f64)
        .collect();
    let grand = means.iter().sum::<f64>() / b as f64;
    let var = means.iter().map(|m| (m - grand).powi(2)).sum::<f64>() / (b - 1) as f64;
    (var / b as f64).sqrt()
}

/// Effective sample size by Geyer's initial positive sequence.
pub fn effective_sample_size(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 4 {
        return n as f64;
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    let c0 = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
    if c0 <= 0.0 {
        return n as f64;
    }
    let autocorr = |lag: usize| -> f64 {
        xs[..n - lag]
            .iter()
            .zip(&xs[lag..])
            .map(|(a, b)| (a - mean) * (b - mean))
            .sum::<f64>()
            / (n as f64 * c0)
    };
    let mut tau = -1.0;
    let mut k = 0;
    while 2 * k + 1 < n {
        let pair = autocorr(2 * k) + autocorr(2 * k + 1);
        if pair <= 0.0 {
            break;
        }
        tau += 2.0 * pair;
        k += 1;
    }
    let tau = tau.max(1.0 / n as f64);
    (n as f64 / tau).min(n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ansatz::{AnsatzFamily, AnsatzParams};
    use crate::domain::{Dimensionality, SpaceSpec};

    fn gaussian_toy() -> ConditionalAnsatz {
        ConditionalAnsatz::new(
            AnsatzFamily::GaussianShift,
            DensityModel::exponential(2, 1.0, Dimensionality::OneSoftened).unwrap(),
            SpaceSpec::line(2, 10.0, 1.0).unwrap(),
        )
        .unwrap()
    }

    fn helium_pairwise() -> ConditionalAnsatz {
        ConditionalAnsatz::new(
            AnsatzFamily::PairwiseBiparametric(AnsatzParams::new(1.0, 0.5)),
            DensityModel::atomic(2, 1.6875).unwrap(),
            SpaceSpec::atom(2),
        )
        .unwrap()
    }

    #[test]
    fn acceptance_rule_edge_cases() {
        assert_eq!(acceptance_probability(-3.0, -3.0), 1.0);
        assert_eq!(acceptance_probability(-3.0, f64::NEG_INFINITY), 0.0);
        assert!((acceptance_probability(0.0, -1.0) - (-1.0f64).exp()).abs() < 1e-15);
        let mut rng = rng::stream(0, "t", 0);
        assert!((0..1000).all(|_| metropolis_accept(-2.0, -2.0, &mut rng)));
        assert!((0..1000).all(|_| !metropolis_accept(-2.0, f64::NEG_INFINITY, &mut rng)));
    }

    #[test]
    fn chain_state_tracks_log_weight() {
        let a = helium_pairwise();
        let mut rng = rng::stream(4, "t", 0);
        let p = Vec3::new(0.3, 0.0, 0.2);
        let sats = a.initial_satellites(p, &mut rng).unwrap();
        let mut chain = ChainState::new(&a, Configuration::new(p, sats)).unwrap();
        for _ in 0..500 {
            metropolis_step(&mut chain, &a, 0.8, &mut rng);
            assert_eq!(chain.log_f(), a.log_f_unnormalized(chain.config()).unwrap());
            assert!(chain.accepted() <= chain.steps());
        }
    }

    #[test]
    fn zero_weight_start_is_rejected() {
        let a = helium_pairwise();
        let p = Vec3::new(0.1, 0.1, 0.1);
        assert!(ChainState::new(&a, Configuration::new(p, vec![p])).is_err());
    }

    #[test]
    fn constant_observable_has_zero_error() {
        let a = helium_pairwise();
        let s = SamplerSettings {
            samples_per_walker: 200,
            ..Default::default()
        };
        let res = run_chain(&a, Vec3::new(0.5, 0.0, 0.0), &s, |_| 1.0).unwrap();
        assert_eq!(res.mean, 1.0);
        assert_eq!(res.stderr, 0.0);
        assert!(res.effective_samples <= res.samples as f64);
    }

    #[test]
    fn half_space_indicator_under_symmetric_f() {
        // conditioning point at the origin makes f symmetric under z -> -z
        let a = helium_pairwise();
        let s = SamplerSettings {
            samples_per_walker: 4000,
            walkers: 4,
            ..Default::default()
        };
        let res = run_chain(&a, Vec3::new(1e-3, 0.0, 0.0), &s, |c| {
            if c.satellites[0].z > 0.0 {
                1.0
            } else {
                0.0
            }
        })
        .unwrap();
        assert!((res.mean - 0.5).abs() < 3.0 * res.stderr, "{res:?}");
    }

    #[test]
    fn non_finite_observable_aborts() {
        let a = helium_pairwise();
        let err = run_chain(&a, Vec3::new(0.5, 0.0, 0.0), &SamplerSettings::default(), |_| f64::NAN);
        assert!(matches!(err, Err(Error::NonFinite { .. })));
    }

    #[test]
    fn tuned_step_reaches_target_acceptance() {
        let a = helium_pairwise();
        let s = SamplerSettings {
            step: 20.0,
            burn_in: 2000,
            samples_per_walker: 2000,
            thinning: 1,
            ..Default::default()
        };
        let mut rng = rng::stream(2, "t", 0);
        let summary = sample_walker(&a, Vec3::new(0.4, 0.0, 0.0), &s, &mut rng, |_| Ok(())).unwrap();
        assert!(summary.step < 20.0);
        assert!((0.15..=0.6).contains(&summary.acceptance_rate), "{summary:?}");
    }

    #[test]
    fn ess_of_iid_series_is_close_to_length() {
        let mut rng = rng::stream(11, "t", 0);
        let xs: Vec<f64> = (0..4000).map(|_| rng.sample(StandardNormal)).collect();
        let ess = effective_sample_size(&xs);
        assert!(ess > 3000.0 && ess <= 4000.0, "{ess}");
        // strongly correlated AR(1) series
        let mut ar = vec![0.0f64; 4000];
        for i in 1..ar.len() {
            ar[i] = 0.95 * ar[i - 1] + rng.sample::<f64, _>(StandardNormal);
        }
        assert!(effective_sample_size(&ar) < 400.0);
    }

    #[test]
    fn gaussian_toy_draws_are_exact() {
        let a = gaussian_toy();
        let s = SamplerSettings {
            samples_per_walker: 5000,
            ..Default::default()
        };
        let res = run_chain(&a, Vec3::on_line(0.7), &s, |c| c.satellites[0].x).unwrap();
        assert!((res.mean - 0.7).abs() < 3.0 * res.stderr);
    }
}
