use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use condsearch::record::{RunRecord, RunResults, RunStatus};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_condsearch"))
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path
}

fn run(args: &[&str], config: &Path, out: &Path) -> Output {
    bin()
        .args(args)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .output()
        .unwrap()
}

fn record_of(output: &Output) -> RunRecord {
    let path = String::from_utf8(output.stdout.clone()).unwrap();
    RunRecord::read(Path::new(path.trim())).unwrap()
}

const FROZEN_HE: &str = "[system]\nn = 2\nz = 2.0\n[ansatz]\nfamily = \"frozen\"\n[sampler]\nconditioning_points = 4096\n";

#[test]
fn missing_electron_count_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", "[system]\nz = 2.0\n");
    let out = run(&["energy"], &cfg, dir.path());
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("`n`"), "{err}");
}

#[test]
fn malformed_config_reports_position() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", "[system]\nn = = 2\n");
    let out = run(&["verify"], &cfg, dir.path());
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 2"), "{err}");
}

#[test]
fn energy_is_reproducible_and_appends_csv() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("sweep.csv");
    let text = format!("{FROZEN_HE}[output]\ncsv = {:?}\n", csv.to_str().unwrap());
    let cfg = write_config(dir.path(), "c.toml", &text);
    let a = run(&["energy", "--seed", "9"], &cfg, dir.path());
    let b = run(&["energy", "--seed", "9"], &cfg, dir.path());
    assert_eq!(a.status.code(), Some(0), "{}", String::from_utf8_lossy(&a.stderr));
    let (ra, rb) = (record_of(&a), record_of(&b));
    assert_eq!(ra.payload_json().unwrap(), rb.payload_json().unwrap());
    assert_eq!(ra.seeds.sampler, 9);
    let Some(RunResults::Energy { breakdown, .. }) = &ra.results else { panic!("energy results") };
    let parts = breakdown.weizsacker + breakdown.fisher.value + breakdown.coulomb.value + breakdown.external;
    assert_eq!(parts, breakdown.total.value);
    assert!((breakdown.total.value + 2.84766).abs() < 3.0 * breakdown.total.stderr + 1e-9);
    let rows = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(rows.lines().count(), 3);
    assert!(rows.starts_with("family,gamma,beta,zeta,weizsacker"));
}

#[test]
fn record_echoes_config_faithfully() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", FROZEN_HE);
    let out = run(&["energy", "--seed", "3", "--prefactor", "full"], &cfg, dir.path());
    let record = record_of(&out);
    let mut expected = condsearch::config::RunConfig::parse(FROZEN_HE).unwrap();
    expected.set_seed(3);
    expected.prefactor = condsearch::functionals::CoulombPrefactor::Full;
    assert_eq!(record.config, expected);
    assert_eq!(record.prefactor, expected.prefactor);
    // the echoed config reparses to itself
    let back = condsearch::config::RunConfig::parse(&record.config.to_toml().unwrap()).unwrap();
    assert_eq!(back, record.config);
}

#[test]
fn verify_exit_codes_follow_the_prefactor() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "c.toml",
        "[system]\nn = 2\nz = 2.0\n[verify]\ncondition_trials = 500\n",
    );
    let half = run(&["verify"], &cfg, dir.path());
    assert_eq!(half.status.code(), Some(0), "{}", String::from_utf8_lossy(&half.stderr));
    let full = run(&["verify", "--prefactor", "full"], &cfg, dir.path());
    assert_eq!(full.status.code(), Some(3));
    let record = record_of(&full);
    let Some(RunResults::Verify(report)) = record.results else { panic!("verify results") };
    assert!((report.decomposition.residual() - 5.0 * 1.6875 / 8.0).abs() < 1e-3);
    assert!(report.decomposition.residual_half < 1e-3);
}

#[test]
fn verify_on_the_line_grid() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "c.toml",
        "[system]\nn = 2\nz = 2.0\ndimensionality = \"1d-softened\"\n[verify]\ncondition_trials = 0\n",
    );
    let out = run(&["verify"], &cfg, dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let Some(RunResults::Verify(report)) = record_of(&out).results else { panic!() };
    assert!(report.decomposition.residual_half <= 1e-2);
}

#[test]
fn optimize_with_zero_budget_records_initial_point() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!("{FROZEN_HE}[optimize]\nmax_iter_outer = 0\n");
    let cfg = write_config(dir.path(), "c.toml", &text);
    let out = run(&["optimize"], &cfg, dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let record = record_of(&out);
    assert_eq!(record.status, RunStatus::Complete);
    let Some(RunResults::Optimize { trace, outcome, .. }) = record.results else { panic!() };
    assert_eq!(trace.points.len(), 1);
    assert_eq!(outcome.unwrap().zeta, vec![1.6875]);
    let path = String::from_utf8(out.stdout).unwrap();
    let csv = Path::new(path.trim()).with_file_name("trace.csv");
    assert_eq!(std::fs::read_to_string(csv).unwrap().lines().count(), 2);
}

#[test]
fn failed_run_still_writes_a_record() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", "[system]\nn = 1\nz = 1.0\n");
    let out = run(&["sample-diagnostics"], &cfg, dir.path());
    assert_eq!(out.status.code(), Some(1));
    let record = record_of(&out);
    assert!(matches!(record.status, RunStatus::Failed { exit_code: 1, .. }));
    assert!(record.results.is_none());
}

#[test]
fn compare_needs_two_families() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "c.toml",
        "[system]\nn = 2\nz = 2.0\n[compare]\nfamilies = [\"frozen\"]\n",
    );
    let out = run(&["compare-ansatz"], &cfg, dir.path());
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn identical_families_are_indistinguishable() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!("{FROZEN_HE}[compare]\nfamilies = [\"frozen\", \"frozen\"]\ncondition_trials = 200\n");
    let cfg = write_config(dir.path(), "c.toml", &text);
    let out = run(&["compare-ansatz"], &cfg, dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let Some(RunResults::CompareAnsatz(report)) = record_of(&out).results else { panic!() };
    assert_eq!(report.indistinguishable, vec![(0, 1)]);
}

#[test]
fn zero_gamma_needs_test_mode_flag() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "c.toml",
        "[system]\nn = 2\nz = 2.0\n[ansatz]\ngamma = 0.0\n[sampler]\nconditioning_points = 64\n",
    );
    assert_eq!(run(&["energy"], &cfg, dir.path()).status.code(), Some(1));
    let out = run(&["energy", "--test-mode"], &cfg, dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn sample_diagnostics_reports_acceptance() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", "[system]\nn = 2\nz = 2.0\n");
    let out = run(&["sample-diagnostics"], &cfg, dir.path());
    assert_eq!(out.status.code(), Some(0));
    let Some(RunResults::SampleDiagnostics(report)) = record_of(&out).results else { panic!() };
    assert!(report.mean_acceptance > 0.0 && report.mean_acceptance < 1.0);
    assert!(report.points.iter().all(|p| p.inverse_distance.effective_samples > 1.0));
}
