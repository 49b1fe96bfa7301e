//! Run records (JSON) and the CSV files written next to them.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::ansatz::{AnsatzParams, ConditionsReport, FamilyKind};
use crate::config::RunConfig;
use crate::error::Result;
use crate::functionals::{fmt, CoulombPrefactor, EnergyBreakdown, Estimate};
use crate::optimizer::{OptimizeTrace, OuterResult};
use crate::oracle::{DecompositionReport, ReferenceWavefunction};
use crate::sampler::EstimatorResult;
use crate::vec3::Vec3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Seeds {
    pub master: Option<u64>,
    pub sampler: u64,
    pub optimize: u64,
    pub search: u64,
    pub fresh: u64,
}

impl Seeds {
    pub fn of(config: &RunConfig) -> Self {
        Self {
            master: config.seed,
            sampler: config.sampler.seed,
            optimize: config.optimize.seed,
            search: config.optimize.search_seed(),
            fresh: config.optimize.fresh_seed(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "kebab-case")]
pub enum RunStatus {
    Complete,
    /// Written while a run is in progress; replaced when it finishes.
    Partial,
    Failed { error: String, exit_code: i32 },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FamilyComparison {
    pub family: FamilyKind,
    pub params: Option<AnsatzParams>,
    /// Γ at the minimizer on the search's random numbers.
    pub gamma_search: Estimate,
    /// Γ re-estimated with an independent seed; used for ranking.
    pub gamma: Estimate,
    pub conditions: ConditionsReport,
    pub fermionic_compatible: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CompareReport {
    /// Ascending by fresh Γ.
    pub ranking: Vec<FamilyComparison>,
    /// Pairs of ranking positions whose Γ differ by less than three
    /// combined standard errors.
    pub indistinguishable: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VerifyReport {
    pub reference: ReferenceWavefunction,
    pub decomposition: DecompositionReport,
    pub conditions: Option<ConditionsReport>,
    pub passed: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PointDiagnostics {
    pub point: Vec3,
    pub acceptance_rates: Vec<f64>,
    pub tuned_steps: Vec<f64>,
    pub exact_sampler: bool,
    /// E_f[1/|r - r₂|] over the kept samples.
    pub inverse_distance: EstimatorResult,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub family: FamilyKind,
    pub points: Vec<PointDiagnostics>,
    pub mean_acceptance: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum RunResults {
    Energy {
        family: FamilyKind,
        params: Option<AnsatzParams>,
        zeta: Vec<f64>,
        breakdown: EnergyBreakdown,
    },
    Optimize {
        family: FamilyKind,
        trace: OptimizeTrace,
        outcome: Option<OuterResult>,
    },
    CompareAnsatz(CompareReport),
    Verify(VerifyReport),
    SampleDiagnostics(DiagnosticsReport),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Timings {
    pub wall_seconds: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunRecord {
    pub version: String,
    pub timestamp: u64,
    pub config: RunConfig,
    pub seeds: Seeds,
    pub prefactor: CoulombPrefactor,
    pub status: RunStatus,
    pub results: Option<RunResults>,
    pub timings: Timings,
}

impl RunRecord {
    pub fn new(config: &RunConfig) -> Self {
        Self {
            version: env!("CARGO_PKG_VERSION").to_string(),
            timestamp: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
            config: config.clone(),
            seeds: Seeds::of(config),
            prefactor: config.prefactor,
            status: RunStatus::Partial,
            results: None,
            timings: Timings { wall_seconds: 0.0 },
        }
    }

    /// Everything that must be reproducible: results without timestamps
    /// or timings.
    pub fn payload_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&self.results)?)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }

    /// Writes to a temporary sibling and renames, so readers never see a
    /// half-written record.
    pub fn write_atomic(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("json.tmp");
        {
            let mut file = fs::File::create(&tmp)?;
            serde_json::to_writer_pretty(&mut file, self)?;
            file.write_all(b"\n")?;
            file.sync_all()?;
        }
        fs::rename(&tmp, path)?;
        Ok(())
    }
}

/// `<out>/<command>-<timestamp>-seed<seed>`, with a numeric suffix if taken.
pub fn run_directory(out: &Path, command: &str, timestamp: u64, seed: u64) -> Result<PathBuf> {
    fs::create_dir_all(out)?;
    let base = format!("{command}-{timestamp}-seed{seed}");
    let mut candidate = out.join(&base);
    let mut k = 1;
    while candidate.exists() {
        candidate = out.join(format!("{base}-{k}"));
        k += 1;
    }
    fs::create_dir(&candidate)?;
    Ok(candidate)
}

pub fn write_trace_csv(path: &Path, trace: &OptimizeTrace) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(OptimizeTrace::CSV_HEADER)?;
    for row in trace.csv_rows() {
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub const ENERGY_CSV_PREFIX: [&str; 4] = ["family", "gamma", "beta", "zeta"];

pub fn energy_csv_header() -> Vec<&'static str> {
    ENERGY_CSV_PREFIX
        .iter()
        .chain(EnergyBreakdown::CSV_HEADER.iter())
        .copied()
        .collect()
}

pub fn energy_csv_row(family: FamilyKind, params: Option<AnsatzParams>, zeta: &[f64], b: &EnergyBreakdown) -> Vec<String> {
    let mut row = vec![
        family.name().to_string(),
        params.map(|p| fmt(p.gamma)).unwrap_or_default(),
        params.map(|p| fmt(p.beta)).unwrap_or_default(),
        zeta.iter().map(|z| fmt(*z)).collect::<Vec<_>>().join(";"),
    ];
    row.extend(b.csv_row());
    row
}

/// Appends a row, writing the header first if the file is new or empty.
pub fn append_csv_row(path: &Path, header: &[&str], row: &[String]) -> Result<()> {
    let fresh = fs::metadata(path).map(|m| m.len() == 0).unwrap_or(true);
    let file = fs::OpenOptions::new().create(true).append(true).open(path)?;
    let mut w = csv::Writer::from_writer(file);
    if fresh {
        w.write_record(header)?;
    }
    w.write_record(row)?;
    w.flush()?;
    Ok(())
}
