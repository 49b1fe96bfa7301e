//! Nested search: Γ minimized over the conditional-density parameters
//! (inner), total energy minimized over density exponents (outer).
//!
//! Objectives are Monte Carlo estimates. During a search every evaluation
//! reuses one seed (common random numbers), so the objective is a
//! deterministic function of the parameters; the winner is then
//! re-evaluated with an independent seed and both values are reported.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::ansatz::{AnsatzFamily, AnsatzParams, ConditionalAnsatz};
use crate::domain::{external_energy, ExternalPotential};
use crate::error::{Error, Result};
use crate::functionals::{
    assemble, fmt, gamma_correlation, weizsacker_term, CorrelationEstimate, CoulombPrefactor, EnergyBreakdown,
    Estimate,
};
use crate::quadrature::QuadratureGrid;
use crate::rng::derive_seed;
use crate::sampler::SamplerSettings;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lower: f64,
    pub upper: f64,
}

impl Interval {
    pub fn new(lower: f64, upper: f64) -> Self {
        Self { lower, upper }
    }

    fn validate(&self, field: &'static str) -> Result<()> {
        if !(self.lower.is_finite() && self.upper.is_finite() && self.lower < self.upper) {
            return Err(Error::invalid(field, "bounds must be finite with lower < upper"));
        }
        Ok(())
    }

    /// Mirror `x` back into the interval.
    pub fn reflect(&self, x: f64) -> f64 {
        let width = self.upper - self.lower;
        if !x.is_finite() {
            return self.lower;
        }
        let mut t = (x - self.lower) % (2.0 * width);
        if t < 0.0 {
            t += 2.0 * width;
        }
        let y = if t <= width { self.lower + t } else { self.upper - (t - width) };
        y.clamp(self.lower, self.upper)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NelderMeadResult {
    pub best: Vec<f64>,
    pub value: f64,
    pub converged: bool,
    pub iterations: usize,
    pub evaluations: usize,
    /// Best vertex after each iteration (iteration 0 is the initial simplex).
    pub trace: Vec<(usize, Vec<f64>, f64)>,
}

const REFLECT: f64 = 1.0;
const EXPAND: f64 = 2.0;
const CONTRACT: f64 = 0.5;
const SHRINK: f64 = 0.5;

fn vertex_order(a: &(Vec<f64>, f64), b: &(Vec<f64>, f64)) -> Ordering {
    a.1.total_cmp(&b.1).then_with(|| {
        a.0.iter()
            .zip(&b.0)
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| *o != Ordering::Equal)
            .unwrap_or(Ordering::Equal)
    })
}

/// Bounded Nelder-Mead. Points leaving the box are reflected back in;
/// exact objective ties are broken lexicographically by parameter vector.
pub fn nelder_mead(
    mut objective: impl FnMut(&[f64]) -> Result<f64>,
    init: &[f64],
    bounds: &[Interval],
    scale: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<NelderMeadResult> {
    let dim = init.len();
    if bounds.len() != dim || scale.len() != dim {
        return Err(Error::invalid("optimize", "bounds and scale must match the parameter count"));
    }
    let project = |x: Vec<f64>| -> Vec<f64> { x.iter().zip(bounds).map(|(&v, b)| b.reflect(v)).collect() };
    let mut evaluations = 0usize;
    let mut eval = |x: &[f64], evaluations: &mut usize| -> Result<f64> {
        *evaluations += 1;
        let v = objective(x)?;
        Ok(if v.is_finite() { v } else { f64::INFINITY })
    };

    let x0 = project(init.to_vec());
    let f0 = eval(&x0, &mut evaluations)?;
    if !f0.is_finite() {
        return Err(Error::NonFinite {
            context: "objective at the initial point".into(),
        });
    }
    let mut simplex = vec![(x0.clone(), f0)];
    for i in 0..dim {
        let mut x = x0.clone();
        x[i] += scale[i];
        let mut x = project(x);
        if x == x0 {
            x[i] = bounds[i].reflect(x0[i] - scale[i]);
        }
        let f = eval(&x, &mut evaluations)?;
        simplex.push((x, f));
    }
    simplex.sort_by(vertex_order);
    let mut trace = vec![(0, simplex[0].0.clone(), simplex[0].1)];

    let mut iterations = 0;
    let mut converged = spread(&simplex) < tol;
    while !converged && iterations < max_iter {
        iterations += 1;
        let worst = simplex[dim].clone();
        let centroid: Vec<f64> = (0..dim)
            .map(|j| simplex[..dim].iter().map(|v| v.0[j]).sum::<f64>() / dim as f64)
            .collect();
        let along = |t: f64| -> Vec<f64> {
            project(
                centroid
                    .iter()
                    .zip(&worst.0)
                    .map(|(c, w)| c + t * (c - w))
                    .collect(),
            )
        };

        let xr = along(REFLECT);
        let fr = eval(&xr, &mut evaluations)?;
        if fr < simplex[0].1 {
            let xe = along(EXPAND);
            let fe = eval(&xe, &mut evaluations)?;
            simplex[dim] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < simplex[dim - 1].1 {
            simplex[dim] = (xr, fr);
        } else {
            let (xc, fc) = if fr < worst.1 {
                let x = along(CONTRACT);
                let f = eval(&x, &mut evaluations)?;
                (x, f)
            } else {
                let x = along(-CONTRACT);
                let f = eval(&x, &mut evaluations)?;
                (x, f)
            };
            if fc < worst.1.min(fr) {
                simplex[dim] = (xc, fc);
            } else {
                let best = simplex[0].0.clone();
                for v in simplex.iter_mut().skip(1) {
                    let x = project(best.iter().zip(&v.0).map(|(b, x)| b + SHRINK * (x - b)).collect());
                    let f = eval(&x, &mut evaluations)?;
                    *v = (x, f);
                }
            }
        }
        simplex.sort_by(vertex_order);
        trace.push((iterations, simplex[0].0.clone(), simplex[0].1));
        converged = spread(&simplex) < tol;
    }
    Ok(NelderMeadResult {
        best: simplex[0].0.clone(),
        value: simplex[0].1,
        converged,
        iterations,
        evaluations,
        trace,
    })
}

fn spread(simplex: &[(Vec<f64>, f64)]) -> f64 {
    let hi = simplex.iter().map(|v| v.1).fold(f64::NEG_INFINITY, f64::max);
    let lo = simplex.iter().map(|v| v.1).fold(f64::INFINITY, f64::min);
    if hi == lo {
        0.0
    } else {
        hi - lo
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoldenResult {
    pub x: f64,
    pub value: f64,
    pub evaluations: Vec<(f64, f64)>,
}

const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Golden-section search on [lower, upper] seeded with an initial point,
/// which is always evaluated first. `max_iter = 0` evaluates only that point.
pub fn golden_section(
    mut objective: impl FnMut(f64) -> Result<f64>,
    initial: f64,
    interval: Interval,
    x_tol: f64,
    max_iter: usize,
) -> Result<GoldenResult> {
    let mut evaluations = Vec::new();
    let mut eval = |x: f64, evaluations: &mut Vec<(f64, f64)>| -> Result<f64> {
        let v = objective(x)?;
        evaluations.push((x, v));
        Ok(v)
    };
    let x0 = interval.reflect(initial);
    eval(x0, &mut evaluations)?;
    if max_iter > 0 {
        let (mut a, mut b) = (interval.lower, interval.upper);
        let mut c = b - INV_PHI * (b - a);
        let mut d = a + INV_PHI * (b - a);
        let mut fc = eval(c, &mut evaluations)?;
        let mut fd = eval(d, &mut evaluations)?;
        let mut iter = 1;
        while iter < max_iter && (b - a) > x_tol {
            iter += 1;
            if fc <= fd {
                b = d;
                d = c;
                fd = fc;
                c = b - INV_PHI * (b - a);
                fc = eval(c, &mut evaluations)?;
            } else {
                a = c;
                c = d;
                fc = fd;
                d = a + INV_PHI * (b - a);
                fd = eval(d, &mut evaluations)?;
            }
        }
    }
    let (x, value) = evaluations
        .iter()
        .copied()
        .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.total_cmp(&b.0)))
        .expect("at least one evaluation");
    Ok(GoldenResult { x, value, evaluations })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizeSpec {
    pub gamma_bounds: Interval,
    pub beta_bounds: Interval,
    /// Defaults to [min ζ₀/4, 4·max ζ₀] around the starting exponents.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub zeta_bounds: Option<Interval>,
    pub simplex_scale: f64,
    pub max_iter_inner: usize,
    pub max_iter_outer: usize,
    /// Objective spread (Hartree) that stops the inner simplex.
    pub inner_tolerance: f64,
    /// Objective spread (Hartree) that stops a multi-exponent outer simplex.
    pub outer_tolerance: f64,
    /// Bracket width that stops the one-exponent golden-section search.
    pub zeta_tolerance: f64,
    pub common_random_numbers: bool,
    pub seed: u64,
}

impl Default for OptimizeSpec {
    fn default() -> Self {
        Self {
            gamma_bounds: Interval::new(0.01, crate::ansatz::GAMMA_MAX),
            beta_bounds: Interval::new(0.0, crate::ansatz::BETA_MAX),
            zeta_bounds: None,
            simplex_scale: 0.5,
            max_iter_inner: 60,
            max_iter_outer: 40,
            inner_tolerance: 1e-3,
            outer_tolerance: 1e-3,
            zeta_tolerance: 1e-3,
            common_random_numbers: true,
            seed: 1,
        }
    }
}

impl OptimizeSpec {
    pub fn validate(&self, test_mode: bool) -> Result<()> {
        self.gamma_bounds.validate("optimize.gamma_bounds")?;
        self.beta_bounds.validate("optimize.beta_bounds")?;
        if let Some(z) = self.zeta_bounds {
            z.validate("optimize.zeta_bounds")?;
            if z.lower <= 0.0 {
                return Err(Error::invalid("optimize.zeta_bounds", "exponents must be positive"));
            }
        }
        if !test_mode && self.gamma_bounds.lower <= 0.0 {
            return Err(Error::invalid(
                "optimize.gamma_bounds",
                "lower gamma bound must be positive outside test mode",
            ));
        }
        if self.beta_bounds.lower < 0.0 {
            return Err(Error::invalid("optimize.beta_bounds", "beta must be >= 0"));
        }
        for (field, v) in [
            ("optimize.inner_tolerance", self.inner_tolerance),
            ("optimize.outer_tolerance", self.outer_tolerance),
            ("optimize.zeta_tolerance", self.zeta_tolerance),
            ("optimize.simplex_scale", self.simplex_scale),
        ] {
            if !(v > 0.0) {
                return Err(Error::invalid(field, "must be positive"));
            }
        }
        Ok(())
    }

    /// Seed shared by every evaluation of one search.
    pub fn search_seed(&self) -> u64 {
        derive_seed(self.seed, "search")
    }

    /// Independent seed for the final re-evaluation.
    pub fn fresh_seed(&self) -> u64 {
        derive_seed(self.seed, "fresh")
    }

    fn evaluation_seed(&self, counter: usize) -> u64 {
        if self.common_random_numbers {
            self.search_seed()
        } else {
            derive_seed(self.seed ^ counter as u64, "evaluation")
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub iteration: usize,
    pub zeta: Vec<f64>,
    pub gamma: Option<f64>,
    pub beta: Option<f64>,
    pub objective: f64,
    pub stderr: f64,
    pub best_so_far: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct OptimizeTrace {
    pub points: Vec<TracePoint>,
}

impl OptimizeTrace {
    pub const CSV_HEADER: [&'static str; 7] = ["iteration", "zeta", "gamma", "beta", "energy", "stderr", "best_so_far"];

    pub fn push(&mut self, iteration: usize, zeta: Vec<f64>, params: Option<AnsatzParams>, objective: Estimate) {
        let prev = self.best().unwrap_or(f64::INFINITY);
        self.points.push(TracePoint {
            iteration,
            zeta,
            gamma: params.map(|p| p.gamma),
            beta: params.map(|p| p.beta),
            objective: objective.value,
            stderr: objective.stderr,
            best_so_far: prev.min(objective.value),
        });
    }

    pub fn best(&self) -> Option<f64> {
        self.points.last().map(|p| p.best_so_far)
    }

    pub fn csv_rows(&self) -> Vec<Vec<String>> {
        let opt = |v: Option<f64>| v.map(fmt).unwrap_or_default();
        self.points
            .iter()
            .map(|p| {
                vec![
                    p.iteration.to_string(),
                    p.zeta.iter().map(|z| fmt(*z)).collect::<Vec<_>>().join(";"),
                    opt(p.gamma),
                    opt(p.beta),
                    fmt(p.objective),
                    fmt(p.stderr),
                    fmt(p.best_so_far),
                ]
            })
            .collect()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InnerResult {
    pub params: Option<AnsatzParams>,
    /// Γ at the minimizer, on the search's random numbers.
    pub search_value: Estimate,
    /// Γ at the minimizer, re-estimated with an independent seed.
    pub fresh_value: Estimate,
    pub converged: bool,
    pub evaluations: usize,
    pub trace: OptimizeTrace,
}

/// Generic inner search over (γ, β). `objective(params, seed)` returns an
/// estimate of Γ; it is called with the search seed throughout and once with
/// the fresh seed at the minimizer.
pub fn inner_minimize_with(
    mut objective: impl FnMut(AnsatzParams, u64) -> Result<Estimate>,
    init: AnsatzParams,
    spec: &OptimizeSpec,
) -> Result<InnerResult> {
    let mut trace = OptimizeTrace::default();
    let mut counter = 0usize;
    let mut last_error = None;
    let mut estimates: Vec<(AnsatzParams, Estimate)> = Vec::new();
    let bounds = [spec.gamma_bounds, spec.beta_bounds];
    let scale = [spec.simplex_scale, spec.simplex_scale];
    let result = nelder_mead(
        |x| {
            counter += 1;
            let p = AnsatzParams::new(x[0], x[1]);
            match objective(p, spec.evaluation_seed(counter)) {
                Ok(est) => {
                    estimates.push((p, est));
                    Ok(est.value)
                }
                Err(e) => {
                    last_error = Some(e.to_string());
                    Ok(f64::INFINITY)
                }
            }
        },
        &[init.gamma, init.beta],
        &bounds,
        &scale,
        spec.inner_tolerance,
        spec.max_iter_inner,
    );
    let result = match result {
        Ok(r) => r,
        Err(Error::NonFinite { .. }) => {
            return Err(Error::OptimizationFailed(last_error.unwrap_or_else(|| "non-finite objective".into())))
        }
        Err(e) => return Err(e),
    };
    if !result.value.is_finite() {
        return Err(Error::OptimizationFailed(last_error.unwrap_or_default()));
    }
    for (it, x, _) in &result.trace {
        let p = AnsatzParams::new(x[0], x[1]);
        let est = estimates
            .iter()
            .rev()
            .find(|(q, _)| *q == p)
            .map(|(_, e)| *e)
            .expect("every trace vertex was evaluated");
        trace.push(*it, Vec::new(), Some(p), est);
    }
    let best = AnsatzParams::new(result.best[0], result.best[1]);
    let search_value = estimates
        .iter()
        .rev()
        .find(|(q, _)| *q == best)
        .map(|(_, e)| *e)
        .expect("best vertex was evaluated");
    let fresh_value = objective(best, spec.fresh_seed())?;
    Ok(InnerResult {
        params: Some(best),
        search_value,
        fresh_value,
        converged: result.converged,
        evaluations: result.evaluations,
        trace,
    })
}

/// Full inner result including both correlation estimates.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InnerSearch {
    pub result: InnerResult,
    pub search: CorrelationEstimate,
    pub fresh: CorrelationEstimate,
}

/// Minimizes the Monte Carlo estimate of Γ over the ansatz parameters at
/// the ansatz's density. Families without free parameters are evaluated once.
pub fn inner_minimize(
    ansatz: &ConditionalAnsatz,
    spec: &OptimizeSpec,
    settings: &SamplerSettings,
    prefactor: CoulombPrefactor,
) -> Result<InnerSearch> {
    spec.validate(ansatz.test_mode())?;
    let evaluate = |a: &ConditionalAnsatz, seed: u64| gamma_correlation(a, &settings.with_seed(seed), prefactor);
    match ansatz.family() {
        AnsatzFamily::PairwiseBiparametric(init) => {
            let init = AnsatzParams::new(spec.gamma_bounds.reflect(init.gamma), spec.beta_bounds.reflect(init.beta));
            let result = inner_minimize_with(
                |p, seed| {
                    let a = ansatz.with_family(AnsatzFamily::PairwiseBiparametric(p))?;
                    Ok(evaluate(&a, seed)?.gamma)
                },
                init,
                spec,
            )?;
            let best = ansatz.with_family(AnsatzFamily::PairwiseBiparametric(result.params.expect("pairwise")))?;
            // cheap relative to the search; gives the full breakdown at the winner
            let search = evaluate(&best, spec.search_seed())?;
            let fresh = evaluate(&best, spec.fresh_seed())?;
            Ok(InnerSearch { result, search, fresh })
        }
        _ => {
            let search = evaluate(ansatz, spec.search_seed())?;
            let fresh = evaluate(ansatz, spec.fresh_seed())?;
            let mut trace = OptimizeTrace::default();
            trace.push(0, Vec::new(), None, search.gamma);
            Ok(InnerSearch {
                result: InnerResult {
                    params: None,
                    search_value: search.gamma,
                    fresh_value: fresh.gamma,
                    converged: true,
                    evaluations: 1,
                    trace,
                },
                search,
                fresh,
            })
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OuterResult {
    pub zeta: Vec<f64>,
    pub params: Option<AnsatzParams>,
    /// Breakdown at the winner on the search's random numbers.
    pub search_breakdown: EnergyBreakdown,
    /// Breakdown at the winner with an independent seed.
    pub breakdown: EnergyBreakdown,
    pub trace: OptimizeTrace,
}

/// Outer search over the density exponents. `ansatz` supplies the density
/// template, the family and its starting parameters. `on_point` sees the
/// trace after every outer evaluation.
pub fn outer_minimize(
    ansatz: &ConditionalAnsatz,
    potential: &ExternalPotential,
    spec: &OptimizeSpec,
    settings: &SamplerSettings,
    prefactor: CoulombPrefactor,
    grid: &QuadratureGrid,
    mut on_point: impl FnMut(&OptimizeTrace),
) -> Result<OuterResult> {
    spec.validate(ansatz.test_mode())?;
    let template = ansatz.density().clone();
    let initial = template.exponents();
    if initial.is_empty() {
        return Err(Error::Unsupported {
            operation: "outer minimization",
            what: "a tabulated density".into(),
        });
    }
    let zeta_bounds = spec.zeta_bounds.unwrap_or_else(|| {
        let lo = initial.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = initial.iter().copied().fold(0.0, f64::max);
        Interval::new(lo / 4.0, 4.0 * hi)
    });
    let mut trace = OptimizeTrace::default();
    let mut best: Option<(f64, Vec<f64>, f64, f64, InnerSearch)> = None;
    let mut iteration = 0usize;

    let mut evaluate = |zetas: &[f64]| -> Result<f64> {
        let density = template.with_exponents(zetas)?;
        let a = ansatz.with_density(density.clone())?;
        let w = weizsacker_term(&density, grid)?;
        let v = external_energy(&density, potential, grid)?;
        let inner = inner_minimize(&a, spec, settings, prefactor)?;
        let objective = w + v + inner.search.gamma.value;
        trace.push(
            iteration,
            zetas.to_vec(),
            inner.result.params,
            Estimate::new(objective, inner.search.gamma.stderr),
        );
        iteration += 1;
        on_point(&trace);
        let better = best.as_ref().is_none_or(|b| objective < b.0);
        if better {
            best = Some((objective, zetas.to_vec(), w, v, inner));
        }
        Ok(objective)
    };

    if initial.len() == 1 {
        golden_section(
            |z| evaluate(&[z]),
            initial[0],
            zeta_bounds,
            spec.zeta_tolerance,
            spec.max_iter_outer,
        )?;
    } else {
        let bounds = vec![zeta_bounds; initial.len()];
        let scale = vec![spec.simplex_scale; initial.len()];
        nelder_mead(evaluate, &initial, &bounds, &scale, spec.outer_tolerance, spec.max_iter_outer)?;
    }

    let (_, zeta, w, v, inner) = best.expect("at least one outer evaluation");
    let search_settings = settings.with_seed(spec.search_seed());
    let fresh_settings = settings.with_seed(spec.fresh_seed());
    Ok(OuterResult {
        params: inner.result.params,
        search_breakdown: assemble(w, v, &inner.search, &search_settings),
        breakdown: assemble(w, v, &inner.fresh, &fresh_settings),
        zeta,
        trace,
    })
}
