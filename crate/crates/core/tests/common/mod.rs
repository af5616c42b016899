#![allow(dead_code)]

use nalgebra::{Matrix3, SMatrix, SVector, Vector3};
use srcas::analysis::BaseDesign;
use srcas::discretization::assemble_period_map;
use srcas::steady_state::{solve_cyclic_steady_state, OperatingPoint};
use srcas::time_sim::{PeriodStepper, SimFidelity};
use srcas::{ConverterParams, StateVector, SubintervalTimes};

pub const F_GRID: [f64; 4] = [1.01, 1.03, 1.05, 1.1];
pub const QE_GRID: [f64; 6] = [0.5, 1.0, 2.0, 3.0, 5.0, 10.0];

/// Experimental design: Lr = 164.8 µH, Cr = 16 nF, fs = 1.01·98 kHz.
pub fn experimental_design() -> ConverterParams {
    ConverterParams::new(164.8e-6, 16e-9, 100e-9, 10e3, 16.0, 8.4, 1.01 * 98e3).unwrap()
}

pub fn design(f_ratio: f64, qe: f64) -> (ConverterParams, OperatingPoint) {
    let p = BaseDesign::default().params(f_ratio, qe).unwrap();
    let op = solve_cyclic_steady_state(&p, None).unwrap();
    (p, op)
}

/// Rescales `iL` to volts through `Zc` so all entries share units.
pub fn scaled(a: &Matrix3<f64>, b: &Vector3<f64>, zc: f64) -> (Matrix3<f64>, Vector3<f64>) {
    let s = Matrix3::from_diagonal(&Vector3::new(zc, 1.0, 1.0));
    let s_inv = Matrix3::from_diagonal(&Vector3::new(1.0 / zc, 1.0, 1.0));
    (s * a * s_inv, s * b)
}

pub fn max_abs<'a>(it: impl IntoIterator<Item = &'a f64>) -> f64 {
    it.into_iter().fold(0.0, |m, v| m.max(v.abs()))
}

pub type M5 = SMatrix<f64, 5, 5>;
pub type V5 = SVector<f64, 5>;

const BRIDGE: [f64; 4] = [1.0, 1.0, -1.0, -1.0];
const RECTIFIER: [f64; 4] = [1.0, -1.0, -1.0, 1.0];

pub fn generator(p: &ConverterParams, cfg: usize) -> M5 {
    let (sv, so) = (BRIDGE[cfg], RECTIFIER[cfg]);
    let sigma = -so;
    let mut m = M5::zeros();
    // Lr·diL/dt = sV·vin + sO·vo_hold/N − vc
    m[(0, 1)] = -1.0 / p.lr();
    m[(0, 3)] = so / (p.n() * p.lr());
    m[(0, 4)] = sv / p.lr();
    // Cr·dvc/dt = iL
    m[(1, 0)] = 1.0 / p.cr();
    // Co·dvo/dt = σ·iL/N − vo/Ro
    m[(2, 0)] = sigma / (p.n() * p.co());
    m[(2, 2)] = -1.0 / (p.ro() * p.co());
    m
}

pub fn durations(t: &SubintervalTimes) -> [f64; 4] {
    [
        t.t1(),
        t.half() - t.t1(),
        t.t3() - t.half(),
        t.ts() - t.t3(),
    ]
}

/// Period map `(A, B)` from a product of matrix exponentials.
pub fn expm_period_map(p: &ConverterParams, t: &SubintervalTimes) -> (Matrix3<f64>, Vector3<f64>) {
    let phi = durations(t)
        .iter()
        .enumerate()
        .fold(M5::identity(), |acc, (cfg, &dt)| {
            (generator(p, cfg) * dt).exp() * acc
        });
    let mut a = phi.fixed_view::<3, 3>(0, 0).into_owned();
    // vo_hold starts equal to vo
    for r in 0..3 {
        a[(r, 2)] += phi[(r, 3)];
    }
    let b = phi.fixed_view::<3, 1>(0, 4).into_owned();
    (a, b)
}

/// Largest entry error of the closed-form map against the matrix
/// exponential oracle, relative to the largest scaled entry.
pub fn normwise_error(p: &ConverterParams, t: &SubintervalTimes) -> f64 {
    let map = assemble_period_map(p, t).unwrap();
    let (a_ref, b_ref) = expm_period_map(p, t);
    let (a, b) = scaled(&map.a, &map.b, p.zc());
    let (a_ref, b_ref) = scaled(&a_ref, &b_ref, p.zc());
    let scale = max_abs(a_ref.iter().chain(b_ref.iter()));
    max_abs((a - a_ref).iter().chain((b - b_ref).iter())) / scale
}

/// Central-difference Jacobian of the nonlinear period map, crossing
/// times re-solved for every perturbed state.
pub fn numeric_jacobian(p: &ConverterParams, op: &OperatingPoint) -> (Matrix3<f64>, Vector3<f64>) {
    let stepper = PeriodStepper::new(p, SimFidelity::SampledHold).unwrap();
    let map = |x: Vector3<f64>, vin: f64| {
        stepper
            .step(&StateVector::from_vector(&x), vin)
            .unwrap()
            .next
            .to_vector()
    };
    let x0 = op.state.to_vector();
    let vin = p.vin();
    let h = 1e-4 * vin;
    let steps = [h / p.zc(), h, h];
    let mut a = Matrix3::zeros();
    for j in 0..3 {
        let mut e = Vector3::zeros();
        e[j] = steps[j];
        a.set_column(
            j,
            &((map(x0 + e, vin) - map(x0 - e, vin)) / (2.0 * steps[j])),
        );
    }
    let b = (map(x0, vin + h) - map(x0, vin - h)) / (2.0 * h);
    (a, b)
}

/// Entrywise relative error of the full model against the numeric
/// Jacobian in scaled units; entries below 1e-6 of the largest are judged
/// against that floor.
pub fn jacobian_error(p: &ConverterParams, op: &OperatingPoint) -> f64 {
    let model = srcas::small_signal::build_full_model(p, op).unwrap();
    let (a_fd, b_fd) = numeric_jacobian(p, op);
    let (a, b) = scaled(&model.a, &model.b, p.zc());
    let (a_fd, b_fd) = scaled(&a_fd, &b_fd, p.zc());
    let scale = max_abs(a_fd.iter().chain(b_fd.iter()));
    a.iter()
        .chain(b.iter())
        .zip(a_fd.iter().chain(b_fd.iter()))
        .map(|(m, n)| (m - n).abs() / n.abs().max(1e-6 * scale))
        .fold(0.0, f64::max)
}
