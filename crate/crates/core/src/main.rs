use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};

use condsearch::config::RunConfig;
use condsearch::error::Error;
use condsearch::functionals::CoulombPrefactor;
use condsearch::record::{
    append_csv_row, energy_csv_header, energy_csv_row, run_directory, write_trace_csv, RunRecord, RunResults,
    RunStatus,
};
use condsearch::runner;

const EXIT_VALIDATION: u8 = 1;
const EXIT_NUMERICAL: u8 = 2;
const EXIT_TOLERANCE: u8 = 3;

#[derive(Parser)]
#[command(name = "condsearch", version, about = "Constrained-search ground-state energies")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// One energy evaluation at fixed parameters.
    Energy(Common),
    /// Nested minimization over ansatz and density parameters.
    Optimize(Common),
    /// Rank conditional-density families by their minimized Γ.
    CompareAnsatz(Common),
    /// Check the energy decomposition on a reference wavefunction.
    Verify(Common),
    /// Acceptance rates and effective sample sizes of the sampler.
    SampleDiagnostics(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Master seed; overrides the file.
    #[arg(long)]
    seed: Option<u64>,
    /// Directory that receives the run directory.
    #[arg(long, default_value = "runs")]
    out: PathBuf,
    #[arg(long, value_enum)]
    prefactor: Option<PrefactorArg>,
    /// Admit γ = 0.
    #[arg(long)]
    test_mode: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum PrefactorArg {
    Half,
    Full,
}

impl From<PrefactorArg> for CoulombPrefactor {
    fn from(p: PrefactorArg) -> Self {
        match p {
            PrefactorArg::Half => CoulombPrefactor::Half,
            PrefactorArg::Full => CoulombPrefactor::Full,
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    if e.is_numerical() {
        EXIT_NUMERICAL
    } else {
        EXIT_VALIDATION
    }
}

fn load(common: &Common) -> Result<RunConfig, Error> {
    let mut config = RunConfig::load_unvalidated(&common.config)?;
    if let Some(seed) = common.seed {
        config.set_seed(seed);
    }
    if common.test_mode {
        config.test_mode = true;
    }
    let config = runner::with_prefactor(config, common.prefactor.map(Into::into));
    config.validate()?;
    Ok(config)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (name, common) = match &cli.command {
        Command::Energy(c) => ("energy", c),
        Command::Optimize(c) => ("optimize", c),
        Command::CompareAnsatz(c) => ("compare-ansatz", c),
        Command::Verify(c) => ("verify", c),
        Command::SampleDiagnostics(c) => ("sample-diagnostics", c),
    };
    let config = match load(common) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_VALIDATION);
        }
    };
    let mut record = RunRecord::new(&config);
    let dir = match run_directory(&common.out, name, record.timestamp, config.sampler.seed) {
        Ok(d) => d,
        Err(e) => {
            eprintln!("error: cannot create output directory: {e}");
            return ExitCode::from(EXIT_VALIDATION);
        }
    };
    let record_path = dir.join("record.json");
    let start = Instant::now();

    let outcome = run(&cli.command, &config, &dir, &mut record, start);
    record.timings.wall_seconds = start.elapsed().as_secs_f64();
    let code = match outcome {
        Ok(code) => {
            record.status = RunStatus::Complete;
            code
        }
        Err(e) => {
            let code = exit_code(&e);
            eprintln!("error: {e}");
            record.status = RunStatus::Failed {
                error: e.to_string(),
                exit_code: code as i32,
            };
            code
        }
    };
    if let Err(e) = record.write_atomic(&record_path) {
        eprintln!("error: cannot write {}: {e}", record_path.display());
        return ExitCode::from(EXIT_VALIDATION);
    }
    println!("{}", record_path.display());
    ExitCode::from(code)
}

fn run(command: &Command, config: &RunConfig, dir: &Path, record: &mut RunRecord, start: Instant) -> Result<u8, Error> {
    let record_path = dir.join("record.json");
    match command {
        Command::Energy(_) => {
            let results = runner::energy(config)?;
            if let RunResults::Energy {
                family,
                params,
                zeta,
                breakdown,
            } = &results
            {
                let total = breakdown.total;
                eprintln!("total = {:.6} ± {:.6} Ha", total.value, total.stderr);
                if let Some(csv) = &config.output.csv {
                    append_csv_row(csv, &energy_csv_header(), &energy_csv_row(*family, *params, zeta, breakdown))?;
                }
            }
            record.results = Some(results);
        }
        Command::Optimize(_) => {
            let family = config.ansatz.family;
            let trace_path = dir.join("trace.csv");
            let mut partial = record.clone();
            let result = runner::optimize(config, |trace| {
                // keep a readable record on disk if the run dies midway
                partial.results = Some(RunResults::Optimize {
                    family,
                    trace: trace.clone(),
                    outcome: None,
                });
                partial.timings.wall_seconds = start.elapsed().as_secs_f64();
                let _ = partial.write_atomic(&record_path);
                let _ = write_trace_csv(&trace_path, trace);
            });
            match result {
                Ok(outcome) => {
                    write_trace_csv(&trace_path, &outcome.trace)?;
                    eprintln!(
                        "zeta* = {:?}, E = {:.6} ± {:.6} Ha",
                        outcome.zeta, outcome.breakdown.total.value, outcome.breakdown.total.stderr
                    );
                    record.results = Some(RunResults::Optimize {
                        family,
                        trace: outcome.trace.clone(),
                        outcome: Some(outcome),
                    });
                }
                Err(e) => {
                    record.results = partial.results;
                    return Err(e);
                }
            }
        }
        Command::CompareAnsatz(_) => {
            let report = runner::compare_ansatz(config)?;
            for (rank, f) in report.ranking.iter().enumerate() {
                eprintln!(
                    "{}. {:<14} Γ = {:.6} ± {:.6}  fermionic: {}",
                    rank + 1,
                    f.family.name(),
                    f.gamma.value,
                    f.gamma.stderr,
                    if f.fermionic_compatible { "yes" } else { "no" }
                );
            }
            for (i, j) in &report.indistinguishable {
                eprintln!(
                    "{} and {} are statistically indistinguishable",
                    report.ranking[*i].family.name(),
                    report.ranking[*j].family.name()
                );
            }
            record.results = Some(RunResults::CompareAnsatz(report));
        }
        Command::Verify(_) => {
            let report = runner::verify(config)?;
            let d = &report.decomposition;
            eprintln!(
                "residual = {:.3e} Ha (tolerance {:.1e}); other prefactor: {:.3e}",
                d.residual(),
                d.tolerance,
                match d.prefactor {
                    CoulombPrefactor::Half => d.residual_full,
                    CoulombPrefactor::Full => d.residual_half,
                }
            );
            let passed = report.passed;
            record.results = Some(RunResults::Verify(report));
            if !passed {
                return Ok(EXIT_TOLERANCE);
            }
        }
        Command::SampleDiagnostics(_) => {
            let report = runner::sample_diagnostics(config)?;
            eprintln!("mean acceptance = {:.3}", report.mean_acceptance);
            record.results = Some(RunResults::SampleDiagnostics(report));
        }
    }
    Ok(0)
}
