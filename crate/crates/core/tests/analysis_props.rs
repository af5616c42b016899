mod common;

use srcas::analysis::{
    design_region_boundary, frequency_sweep, resonance_error, BaseDesign, SweepGrid,
};
use srcas::output::sweep_table;
use srcas::small_signal::ResponseMethod;
use srcas::time_sim::SimFidelity;

fn grid() -> SweepGrid {
    SweepGrid {
        f_ratios: vec![1.1, 1.03, 1.05],
        qes: vec![2.0],
        f_in: vec![300.0, 1500.0, 4000.0],
        base: BaseDesign::default(),
    }
}

#[test]
fn sweep_is_deterministic_and_sorted() {
    for method in [ResponseMethod::ModelFull, ResponseMethod::Simulation] {
        let a = frequency_sweep(&grid(), method, SimFidelity::Continuous).unwrap();
        let b = frequency_sweep(&grid(), method, SimFidelity::Continuous).unwrap();
        assert_eq!(a, b);
        let csv = sweep_table(&a).to_csv();
        assert_eq!(csv, sweep_table(&b).to_csv());
        assert_eq!(csv.lines().count(), 1 + 3 * 3);
        let fs: Vec<f64> = a.iter().map(|r| r.f_ratio).collect();
        assert_eq!(fs, vec![1.03, 1.05, 1.1]);
    }
}

#[test]
fn resonance_error_is_relative_to_simulation() {
    assert_eq!(resonance_error(1570.0, 1570.0), 0.0);
    assert!((resonance_error(1570.0, 1575.0) - 5.0 / 15.75).abs() < 1e-12);
}

#[test]
fn model_boundary_falls_with_quality_factor() {
    let qes = common::QE_GRID;
    let curve = design_region_boundary(
        &BaseDesign::default(),
        &qes,
        (1.005, 1.5),
        ResponseMethod::ModelFull,
        SimFidelity::Continuous,
    )
    .unwrap();
    assert!(curve.failures.is_empty(), "{:?}", curve.failures);
    assert_eq!(curve.points.len(), qes.len());
    assert!(curve
        .points
        .windows(2)
        .all(|w| w[1].f_boundary < w[0].f_boundary));
}
