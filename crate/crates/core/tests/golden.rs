//! CSV layouts are consumed by plotting scripts; pin them byte for byte.

use condsearch::ansatz::AnsatzParams;
use condsearch::functionals::Estimate;
use condsearch::optimizer::OptimizeTrace;
use condsearch::record::{energy_csv_header, write_trace_csv};

const TRACE: &str = include_str!("data/trace.csv");
const ENERGY_HEADER: &str = include_str!("data/energy_header.csv");

fn sample_trace() -> OptimizeTrace {
    let mut t = OptimizeTrace::default();
    t.push(0, vec![1.6875], Some(AnsatzParams::new(1.0, 0.5)), Estimate::new(-2.84765625, 2e-3));
    t.push(1, vec![2.0], None, Estimate::new(-2.75, 1e-3));
    t.push(2, vec![1.5, 0.75], Some(AnsatzParams::new(2.5, 0.0)), Estimate::exact(-2.9));
    t
}

#[test]
fn trace_csv_matches_golden() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("trace.csv");
    write_trace_csv(&path, &sample_trace()).unwrap();
    assert_eq!(std::fs::read_to_string(path).unwrap(), TRACE);
}

#[test]
fn trace_csv_parses_back() {
    let mut reader = csv::Reader::from_reader(TRACE.as_bytes());
    assert_eq!(reader.headers().unwrap().iter().collect::<Vec<_>>(), OptimizeTrace::CSV_HEADER);
    let trace = sample_trace();
    for (row, point) in reader.records().zip(&trace.points) {
        let row = row.unwrap();
        assert_eq!(row[4].parse::<f64>().unwrap(), point.objective);
        assert_eq!(row[6].parse::<f64>().unwrap(), point.best_so_far);
    }
}

#[test]
fn energy_csv_header_matches_golden() {
    assert_eq!(energy_csv_header().join(","), ENERGY_HEADER.trim_end());
}
