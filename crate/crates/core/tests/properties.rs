use condsearch::ansatz::{pair_energy, AnsatzFamily, AnsatzParams, ConditionalAnsatz, Configuration};
use condsearch::domain::{DensityModel, SpaceSpec};
use condsearch::functionals::Estimate;
use condsearch::optimizer::{Interval, OptimizeTrace};
use condsearch::vec3::Vec3;
use proptest::prelude::*;

fn point() -> impl Strategy<Value = Vec3> {
    (-3.0..3.0f64, -3.0..3.0f64, -3.0..3.0f64).prop_map(|(x, y, z)| Vec3::new(x, y, z))
}

fn lithium(gamma: f64, beta: f64) -> ConditionalAnsatz {
    let params = AnsatzParams::new(gamma, beta);
    ConditionalAnsatz::new(
        AnsatzFamily::PairwiseBiparametric(params),
        DensityModel::atomic(3, 2.7).unwrap(),
        SpaceSpec::atom(3),
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn swapping_satellites_leaves_weight_unchanged(
        r in point(), a in point(), b in point(), gamma in 0.01..5.0f64, beta in 0.0..5.0f64,
    ) {
        let ansatz = lithium(gamma, beta);
        let ab = ansatz.log_f_unnormalized(&Configuration::new(r, vec![a, b])).unwrap();
        let ba = ansatz.log_f_unnormalized(&Configuration::new(r, vec![b, a])).unwrap();
        prop_assert!((ab - ba).abs() <= 1e-12 * ab.abs().max(1.0));
    }

    #[test]
    fn score_matches_finite_difference(
        r in point(), a in point(), b in point(), gamma in 0.1..3.0f64,
    ) {
        // stay away from the nucleus cusp and from coincident electrons
        prop_assume!(r.norm() > 0.2 && r.distance(a) > 0.3 && r.distance(b) > 0.3);
        let ansatz = lithium(gamma, 0.7);
        let cfg = Configuration::new(r, vec![a, b]);
        let score = ansatz.score(&cfg).unwrap();
        let h = 1e-5;
        for axis in 0..3 {
            let shifted = |d: f64| {
                let p = r.with_component(axis, r.component(axis) + d);
                ansatz.log_f_unnormalized(&Configuration::new(p, vec![a, b])).unwrap()
            };
            let fd = (shifted(h) - shifted(-h)) / (2.0 * h);
            let s = score.component(axis);
            prop_assert!((fd - s).abs() <= 1e-4 * s.abs().max(1.0), "axis {axis}: fd {fd} vs {s}");
        }
    }

    #[test]
    fn pair_energy_is_symmetric_and_nonnegative(r in point(), s in point()) {
        let density = DensityModel::atomic(2, 1.6875).unwrap();
        let space = SpaceSpec::atom(2);
        let e = pair_energy(&density, &space, r, s);
        prop_assert!(e >= 0.0);
        prop_assert_eq!(e, pair_energy(&density, &space, s, r));
    }

    #[test]
    fn reflection_lands_inside(lower in -10.0..10.0f64, width in 1e-3..20.0f64, x in -1e3..1e3f64) {
        let bounds = Interval::new(lower, lower + width);
        let y = bounds.reflect(x);
        prop_assert!(y >= bounds.lower && y <= bounds.upper, "{x} -> {y}");
        if x >= bounds.lower && x <= bounds.upper {
            prop_assert!((y - x).abs() <= 1e-9 * width.max(1.0));
        }
    }

    #[test]
    fn best_so_far_is_the_running_minimum(values in prop::collection::vec(-10.0..10.0f64, 1..40)) {
        let mut trace = OptimizeTrace::default();
        for (i, &v) in values.iter().enumerate() {
            trace.push(i, vec![1.0], None, Estimate::exact(v));
        }
        let mut running = f64::INFINITY;
        for (p, &v) in trace.points.iter().zip(&values) {
            running = running.min(v);
            prop_assert_eq!(p.best_so_far, running);
        }
        prop_assert_eq!(trace.best(), Some(running));
    }
}
