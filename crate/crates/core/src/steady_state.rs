//! Cyclic steady state of the sampled-data converter model.
//!
//! Unknowns are the period-start state `(iL, vc, vo)` and the zero-crossing
//! instants `(T1, T3)`. The five residuals are the periodicity defect of the
//! assembled period map and the tank current at the two crossings.

use std::f64::consts::PI;

use nalgebra::{SMatrix, SVector, Vector3};
use serde::{Deserialize, Serialize};

use crate::discretization::{assemble_period_map, ConfigIndex, Kernel, TankState};
use crate::error::{Error, Result};
use crate::params::{ConverterParams, StateVector, SubintervalTimes};
use crate::time_sim::{PeriodStepper, SimFidelity};

type Vec5 = SVector<f64, 5>;
type Mat5 = SMatrix<f64, 5, 5>;

/// Defects of a candidate steady state, in physical units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Residuals {
    /// `x[k+1] − x[k]` ordered `[iL, vc, vo]`.
    pub periodicity: [f64; 3],
    /// Tank current at `T1` (A).
    pub f_t1: f64,
    /// Tank current at `T3` (A).
    pub f_t3: f64,
}

impl Residuals {
    /// Currents scaled by `Vin/Zc`, voltages by `Vin`.
    pub fn normalized(&self, params: &ConverterParams) -> [f64; 5] {
        let v = params.vin();
        let i = v / params.zc();
        [
            self.periodicity[0] / i,
            self.periodicity[1] / v,
            self.periodicity[2] / v,
            self.f_t1 / i,
            self.f_t3 / i,
        ]
    }

    /// Largest normalized component.
    pub fn norm(&self, params: &ConverterParams) -> f64 {
        self.normalized(params)
            .iter()
            .fold(0.0_f64, |m, r| m.max(r.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.periodicity.iter().all(|v| v.is_finite())
            && self.f_t1.is_finite()
            && self.f_t3.is_finite()
    }
}

/// Tank current at `T1` for a period starting at `x`.
pub fn f_t1(params: &ConverterParams, x: &StateVector, vin: f64, t1: f64) -> f64 {
    let w = params.omega_r();
    let zc = params.zc();
    let (s, c) = (w * t1).sin_cos();
    x.il * c - (x.vc - vin - x.vo / params.n()) / zc * s
}

/// Tank current at `T3` for a period starting at `x` with its first crossing at `T1`.
pub fn f_t3(params: &ConverterParams, x: &StateVector, vin: f64, t1: f64, t3: f64, ts: f64) -> f64 {
    let w = params.omega_r();
    let zc = params.zc();
    let n = params.n();
    let (s, c) = (w * t3).sin_cos();
    x.il * c
        - (x.vc - vin - x.vo / n) / zc * s
        - 2.0 * x.vo / (n * zc) * (w * (t3 - t1)).sin()
        - 2.0 * vin / zc * (w * (t3 - 0.5 * ts)).sin()
}

pub fn residuals(
    params: &ConverterParams,
    x: &StateVector,
    times: &SubintervalTimes,
) -> Result<Residuals> {
    residuals_at(params, x, params.vin(), times)
}

/// [`residuals`] with an explicit input voltage.
pub fn residuals_at(
    params: &ConverterParams,
    x: &StateVector,
    vin: f64,
    times: &SubintervalTimes,
) -> Result<Residuals> {
    let map = assemble_period_map(params, times)?;
    let next = map.apply(x, vin);
    let r = Residuals {
        periodicity: [next.il - x.il, next.vc - x.vc, next.vo - x.vo],
        f_t1: f_t1(params, x, vin, times.t1()),
        f_t3: f_t3(params, x, vin, times.t1(), times.t3(), times.ts()),
    };
    if r.is_finite() {
        Ok(r)
    } else {
        Err(Error::NonFinite("steady-state residual"))
    }
}

/// Converged cyclic steady state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperatingPoint {
    pub state: StateVector,
    pub times: SubintervalTimes,
    pub residual_norm: f64,
    pub dc_gain: f64,
    pub iterations: usize,
}

impl OperatingPoint {
    /// `|T3 − Ts/2 − T1| / Ts`, the departure from half-wave symmetry.
    pub fn symmetry_deviation(&self) -> f64 {
        let t = &self.times;
        (t.t3() - t.half() - t.t1()).abs() / t.ts()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Required normalized residual.
    pub tol: f64,
    /// Iteration stops early once the residual falls below this.
    pub polish_tol: f64,
    pub max_iter: usize,
    /// Central-difference step relative to each normalized unknown.
    pub fd_step: f64,
    /// Periods of time-marching before the Newton restart.
    pub march_periods: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol: 1e-9,
            polish_tol: 1e-13,
            max_iter: 100,
            fd_step: 1e-7,
            march_periods: 5000,
        }
    }
}

/// Fundamental-harmonic estimate of the steady state.
pub fn initial_guess(params: &ConverterParams) -> (StateVector, SubintervalTimes) {
    let d = params.derived();
    let ts = d.ts;
    let ws = 2.0 * PI * params.fs();
    let detune = d.qe * (d.f_ratio - 1.0 / d.f_ratio);
    let phi = detune.atan();
    let gain = 1.0 / (1.0 + detune * detune).sqrt();
    let vo = params.n() * params.vin() * gain;
    let ip = PI * params.n() * vo / (2.0 * params.ro());
    let state = StateVector::new(-ip * phi.sin(), -ip / (ws * params.cr()) * phi.cos(), vo);
    let t1 = (phi / ws).clamp(1e-3 * ts, 0.49 * ts);
    let times =
        SubintervalTimes::new(t1, 0.5 * ts + t1, ts).expect("guess lies inside the timing box");
    (state, times)
}

pub fn solve_cyclic_steady_state(
    params: &ConverterParams,
    init: Option<(StateVector, SubintervalTimes)>,
) -> Result<OperatingPoint> {
    solve_with_options(params, init, &SolverOptions::default())
}

/// Newton on the five normalized unknowns; on failure the switched
/// simulator is marched from the guess and Newton restarted from its end.
pub fn solve_with_options(
    params: &ConverterParams,
    init: Option<(StateVector, SubintervalTimes)>,
    opts: &SolverOptions,
) -> Result<OperatingPoint> {
    let guess = init.unwrap_or_else(|| initial_guess(params));
    let first = match newton(params, guess, opts) {
        Ok(op) => return Ok(op),
        Err(e) => e,
    };
    log::warn!(
        "steady-state Newton failed ({first}); marching {} periods",
        opts.march_periods
    );
    let warm = march_warm_start(params, guess.0, opts.march_periods).map_err(|_| first)?;
    newton(params, warm, opts)
}

fn march_warm_start(
    params: &ConverterParams,
    x0: StateVector,
    periods: usize,
) -> Result<(StateVector, SubintervalTimes)> {
    let stepper = PeriodStepper::new(params, SimFidelity::SampledHold)?;
    let mut x = x0;
    let mut last = None;
    for _ in 0..periods {
        let step = stepper.step(&x, params.vin())?;
        x = step.next;
        last = Some(step.times);
    }
    let step = stepper.step(&x, params.vin())?;
    Ok((x, last.unwrap_or(step.times)))
}

struct Scales {
    i: f64,
    v: f64,
    ts: f64,
}

impl Scales {
    fn new(p: &ConverterParams) -> Self {
        Scales {
            i: p.vin() / p.zc(),
            v: p.vin(),
            ts: p.ts(),
        }
    }

    fn pack(&self, x: &StateVector, t: &SubintervalTimes) -> Vec5 {
        Vec5::from([
            x.il / self.i,
            x.vc / self.v,
            x.vo / self.v,
            t.t1() / self.ts,
            t.t3() / self.ts,
        ])
    }

    fn unpack(&self, u: &Vec5) -> Result<(StateVector, SubintervalTimes)> {
        let x = StateVector::new(u[0] * self.i, u[1] * self.v, u[2] * self.v);
        let t = SubintervalTimes::new(u[3] * self.ts, u[4] * self.ts, self.ts)?;
        Ok((x, t))
    }
}

fn eval(params: &ConverterParams, s: &Scales, u: &Vec5) -> Result<Vec5> {
    let (x, t) = s.unpack(u)?;
    Ok(Vec5::from(residuals(params, &x, &t)?.normalized(params)))
}

fn inf_norm(v: &Vec5) -> f64 {
    v.amax()
}

/// Largest `λ ≤ 1` keeping the timing unknowns inside their box with margin.
fn box_limit(u: &Vec5, du: &Vec5) -> f64 {
    let bounds = [(3, 0.0, 0.5), (4, 0.5, 1.0)];
    let mut lambda = 1.0_f64;
    for (k, lo, hi) in bounds {
        let next = u[k] + du[k];
        if next <= lo {
            lambda = lambda.min(0.5 * (u[k] - lo) / -du[k]);
        } else if next >= hi {
            lambda = lambda.min(0.5 * (hi - u[k]) / du[k]);
        }
    }
    lambda
}

fn newton(
    params: &ConverterParams,
    guess: (StateVector, SubintervalTimes),
    opts: &SolverOptions,
) -> Result<OperatingPoint> {
    let s = Scales::new(params);
    let mut u = s.pack(&guess.0, &guess.1);
    let mut r = eval(params, &s, &u)?;
    let mut norm = inf_norm(&r);
    let mut iterations = 0;

    while norm > opts.polish_tol && iterations < opts.max_iter {
        let mut jac = Mat5::zeros();
        for j in 0..5 {
            let h = opts.fd_step * u[j].abs().max(1.0);
            let mut up = u;
            let mut dn = u;
            up[j] += h;
            dn[j] -= h;
            let col = (eval(params, &s, &up)? - eval(params, &s, &dn)?) / (2.0 * h);
            jac.set_column(j, &col);
        }
        let du = jac.lu().solve(&(-r)).ok_or(Error::NoConvergence {
            iterations,
            residual: norm,
        })?;
        let mut lambda = box_limit(&u, &du);
        if !(lambda > 0.0) {
            return Err(Error::TimesOutOfOrder);
        }
        iterations += 1;

        let mut accepted = None;
        for _ in 0..30 {
            let trial = u + du * lambda;
            if let Ok(rt) = eval(params, &s, &trial) {
                if rt.norm() < (1.0 - 1e-4 * lambda) * r.norm() {
                    accepted = Some((trial, rt));
                    break;
                }
            }
            lambda *= 0.5;
        }
        match accepted {
            Some((trial, rt)) => {
                u = trial;
                r = rt;
                norm = inf_norm(&r);
            }
            // No decrease available: we are at the rounding floor.
            None => break,
        }
    }

    if !(norm < opts.tol) {
        return Err(Error::NoConvergence {
            iterations,
            residual: norm,
        });
    }
    let (state, times) = s.unpack(&u)?;
    Ok(OperatingPoint {
        state,
        times,
        residual_norm: norm,
        dc_gain: state.vo / params.vin(),
        iterations,
    })
}

/// One state sample inside a period.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WaveformSample {
    pub t: f64,
    pub state: StateVector,
}

/// `points` equally spaced samples over `[0, Ts)` of the steady-state
/// trajectory, with the tank seeing the period-start `vo`.
pub fn period_waveform(
    params: &ConverterParams,
    op: &OperatingPoint,
    points: usize,
) -> Vec<WaveformSample> {
    let k = Kernel::new(params);
    let vin = op.state.vo / op.dc_gain;
    let ts = op.times.ts();
    let vo_hold = op.state.vo;

    // state at the start of each configuration
    let mut starts = [(0.0, op.state); 4];
    let mut x = op.state;
    for (i, cfg) in ConfigIndex::ALL.iter().enumerate() {
        let (a, b) = cfg.interval(&op.times);
        starts[i] = (a, x);
        x = k.step(x, vin, vo_hold, *cfg, b - a);
    }

    (0..points)
        .map(|m| {
            let t = ts * m as f64 / points as f64;
            let i = ConfigIndex::ALL
                .iter()
                .rposition(|c| c.interval(&op.times).0 <= t)
                .unwrap_or(0);
            let (start, x0) = starts[i];
            WaveformSample {
                t,
                state: k.step(x0, vin, vo_hold, ConfigIndex::ALL[i], t - start),
            }
        })
        .collect()
}

/// Average charge delivered to the output per period divided by `Ts`,
/// i.e. the mean rectified secondary current.
pub fn mean_rectified_current(params: &ConverterParams, op: &OperatingPoint) -> f64 {
    let k = Kernel::new(params);
    let vin = op.state.vo / op.dc_gain;
    let mut x = op.state;
    let mut q = 0.0;
    for cfg in ConfigIndex::ALL {
        let (a, b) = cfg.interval(&op.times);
        let ve = cfg.drive(vin, op.state.vo, k.n);
        q += cfg.output_sign() * k.charge(TankState { il: x.il, vc: x.vc }, ve, b - a);
        x = k.step(x, vin, op.state.vo, cfg, b - a);
    }
    q / (k.n * op.times.ts())
}

/// Period-start state of the linear map for fixed times: `(I − A)⁻¹·B·Vin`.
pub fn fixed_point_for_times(
    params: &ConverterParams,
    times: &SubintervalTimes,
    vin: f64,
) -> Result<StateVector> {
    let map = assemble_period_map(params, times)?;
    let m = nalgebra::Matrix3::identity() - map.a;
    let x: Vector3<f64> = m
        .lu()
        .solve(&(map.b * vin))
        .ok_or(Error::NonFinite("fixed point"))?;
    Ok(StateVector::from_vector(&x))
}
