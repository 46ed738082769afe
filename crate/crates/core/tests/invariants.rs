use std::sync::OnceLock;

use cafdi::design::design_bank;
use cafdi::eval::{calibrate_threshold, detect, CrossingDetector};
use cafdi::numerics::invariant_zeros;
use cafdi::scenario::named_scenario;
use cafdi::sim::simulate;
use cafdi::{preset, DetectorBank, RealMatrix, SimConfig, SimulationTrace, ThresholdSet};
use num_complex::Complex64;
use proptest::prelude::*;

fn cfg(t_end: f64) -> SimConfig {
    SimConfig { dt: 2e-3, t_end: Some(t_end), noise_on: true, ..SimConfig::default() }
}

fn bank() -> &'static DetectorBank {
    static BANK: OnceLock<DetectorBank> = OnceLock::new();
    BANK.get_or_init(|| design_bank(&preset::augmented(), &preset::d_ac(), &cafdi::DesignOptions::default()).unwrap())
}

fn simultaneous_trace() -> &'static SimulationTrace {
    static TRACE: OnceLock<SimulationTrace> = OnceLock::new();
    TRACE.get_or_init(|| {
        let aug = preset::augmented();
        let c = cfg(14.0);
        let setup = named_scenario("simultaneous").unwrap().build(&aug, bank(), &c).unwrap();
        simulate(&aug, &setup.bank, &setup.timeline, &c).unwrap()
    })
}

fn base_thresholds() -> ThresholdSet {
    ThresholdSet::fixed([1e-3, 1e-3, 1e-2, 0.3]).unwrap()
}

fn matrix(rows: usize, cols: usize, v: &[f64]) -> RealMatrix {
    RealMatrix::from_row_slice(rows, cols, &v[..rows * cols])
}

/// Nearest-neighbour matching between two multisets of complex numbers.
fn multiset_distance(mut a: Vec<Complex64>, b: &[Complex64]) -> f64 {
    let mut worst = 0.0f64;
    for z in b {
        let (i, d) = a.iter().enumerate().map(|(i, w)| (i, (w - z).norm())).min_by(|x, y| x.1.total_cmp(&y.1)).unwrap();
        worst = worst.max(d / (1.0 + z.norm()));
        a.swap_remove(i);
    }
    worst
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn zeros_with_invertible_feedthrough_are_closed_loop_poles(
        n in 2usize..=5,
        m in 1usize..=3,
        v in prop::collection::vec(-1.0f64..1.0, 64),
    ) {
        let a = matrix(n, n, &v);
        let b = matrix(n, m, &v[25..]);
        let c = matrix(m, n, &v[40..]);
        let d = RealMatrix::identity(m, m) * 2.0 + matrix(m, m, &v[55..]) * 0.5;
        let d_inv = d.clone().try_inverse().unwrap();
        let oracle: Vec<Complex64> = (&a - &b * d_inv * &c).complex_eigenvalues().iter().copied().collect();
        let zs = invariant_zeros(&a, &b, &c, &d).unwrap();
        prop_assert_eq!(zs.zeros.len(), n);
        prop_assert!(multiset_distance(zs.zeros.clone(), &oracle) < 1e-6, "{:?} vs {:?}", zs.zeros, oracle);
    }

    #[test]
    fn raising_thresholds_never_adds_or_advances_detections(factor in 1.0f64..50.0) {
        let trace = simultaneous_trace();
        let base = base_thresholds();
        let lo = detect(trace, &base, 1);
        let hi = detect(trace, &base.scaled(factor), 1);
        prop_assert_eq!(lo.verdict_set().len(), 4);
        prop_assert!(hi.verdict_set().is_subset(&lo.verdict_set()));
        for c in hi.verdict_set() {
            prop_assert!(hi.first_crossing(c).unwrap() >= lo.first_crossing(c).unwrap());
        }
    }

    #[test]
    fn longer_debounce_never_fires_earlier(
        norms in prop::collection::vec(0.0f64..2.0, 1..200),
        short in 1usize..5,
        extra in 0usize..5,
    ) {
        let first = |k: usize| {
            let mut d = CrossingDetector::new(1.0, k);
            for (i, x) in norms.iter().enumerate() {
                d.push(i as f64, *x);
            }
            d.first_crossing()
        };
        match (first(short), first(short + extra)) {
            (None, Some(_)) => prop_assert!(false, "longer debounce fired alone"),
            (Some(a), Some(b)) => prop_assert!(b >= a),
            _ => {}
        }
    }
}

#[test]
fn threshold_scales_linearly_with_margin() {
    let aug = preset::augmented();
    let c = cfg(3.0);
    let t1 = calibrate_threshold(&aug, bank(), &c, 3, 1.1).unwrap();
    let t2 = calibrate_threshold(&aug, bank(), &c, 3, 2.2).unwrap();
    for (a, b) in t1.eta.to_array().iter().zip(t2.eta.to_array()) {
        assert!((b / a - 2.0).abs() < 1e-12);
    }
    assert_eq!(t1.raw_max, t2.raw_max);
}

#[test]
fn noise_free_healthy_residuals_stay_below_floor() {
    let aug = preset::augmented();
    let c = SimConfig { noise_on: false, ..cfg(5.0) };
    let timeline = cafdi::ScenarioTimeline::new("healthy", 5.0);
    let trace = simulate(&aug, bank(), &timeline, &c).unwrap();
    let report = detect(&trace, &ThresholdSet::fixed([1e-6; 4]).unwrap(), 1);
    assert!(report.verdict_set().is_empty(), "{report:?}");
}
