#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod common;

use proptest::prelude::*;
use srcas::analysis::BaseDesign;
use srcas::steady_state::{
    f_t1, mean_rectified_current, solve_cyclic_steady_state, OperatingPoint,
};
use srcas::ConverterParams;

const F_WIDE: [f64; 7] = [1.01, 1.03, 1.05, 1.1, 1.2, 1.3, 1.5];

fn check_contract(p: &ConverterParams, op: &OperatingPoint) -> Result<(), String> {
    let (x, t) = (op.state, op.times);
    if !(op.residual_norm < 1e-9) {
        return Err(format!("residual {:e}", op.residual_norm));
    }
    // iL negative at the period start, rising through zero at T1
    let eps = 1e-4 * t.ts();
    let before = f_t1(p, &x, p.vin(), t.t1() - eps);
    let after = f_t1(p, &x, p.vin(), t.t1() + eps);
    if !(x.il < 0.0 && before < 0.0 && after > 0.0) {
        return Err(format!(
            "sign pattern iL(0) = {}, around T1: {before}, {after}",
            x.il
        ));
    }
    if op.symmetry_deviation() > 0.02 {
        return Err(format!(
            "half-wave symmetry off by {} Ts",
            op.symmetry_deviation()
        ));
    }
    if !(op.dc_gain > 0.0 && op.dc_gain <= p.n()) {
        return Err(format!("dc gain {}", op.dc_gain));
    }
    let io = mean_rectified_current(p, op);
    if (io - x.vo / p.ro()).abs() > 1e-3 * x.vo / p.ro() {
        return Err(format!("charge balance {io} vs {}", x.vo / p.ro()));
    }
    Ok(())
}

#[test]
fn contract_over_the_design_grid() {
    let mut worst_symmetry: f64 = 0.0;
    for f in F_WIDE {
        for qe in common::QE_GRID {
            let (p, op) = common::design(f, qe);
            check_contract(&p, &op).unwrap_or_else(|e| panic!("F = {f}, Qe = {qe}: {e}"));
            worst_symmetry = worst_symmetry.max(op.symmetry_deviation());
        }
    }
    println!("largest half-wave symmetry deviation: {worst_symmetry:e} Ts");
}

#[test]
fn experimental_design_dc_gain() {
    let p = common::experimental_design();
    let op = solve_cyclic_steady_state(&p, None).unwrap();
    assert!(
        (op.dc_gain - 15.9).abs() <= 0.1 * 15.9,
        "dc gain {}",
        op.dc_gain
    );
    assert!((op.state.vo - 133.5).abs() <= 0.1 * 133.5);
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 48, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn random_designs_satisfy_contract(f in 1.01..1.5f64, qe in 0.5..10.0f64) {
        let p = BaseDesign::default().params(f, qe).unwrap();
        let op = solve_cyclic_steady_state(&p, None).unwrap();
        prop_assert!(check_contract(&p, &op).is_ok(), "{:?}", check_contract(&p, &op));
        // solving again from the solution does not move it
        let again = solve_cyclic_steady_state(&p, Some((op.state, op.times))).unwrap();
        prop_assert!((again.state.vo - op.state.vo).abs() <= 1e-10 * op.state.vo);
    }
}
