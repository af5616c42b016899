//! Switched time-domain simulator with input-ripple injection.
//!
//! Every period the simulator locates both tank-current zero crossings by
//! bisection on the exact within-configuration solution, then propagates
//! the three states through the four configurations. The input voltage is
//! sampled once per period at the period start.
//!
//! Two circuit fidelities are available:
//!
//! - [`SimFidelity::Continuous`] integrates the coupled three-state linear
//!   circuit of each configuration exactly, so the tank sees the output
//!   voltage as it evolves inside the period.
//! - [`SimFidelity::SampledHold`] reuses the period-map kernels: the tank
//!   sees the period-start output voltage for the whole period. Its orbit is
//!   the fixed point of the assembled period map.
//!
//! Ripple gains are extracted from period-start samples by a single-bin DFT
//! over a window holding an integer number of ripple cycles.

use std::f64::consts::PI;

use nalgebra::{Matrix3, Vector3};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::discretization::{ConfigIndex, Kernel};
use crate::error::{Error, Half, Result};
use crate::params::{ConverterParams, StateVector, SubintervalTimes};
use crate::steady_state::{solve_cyclic_steady_state, OperatingPoint};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SimFidelity {
    /// Tank driven by the period-start output voltage.
    SampledHold,
    /// Coupled tank and output filter.
    #[default]
    Continuous,
}

impl std::str::FromStr for SimFidelity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sampled-hold" => Ok(SimFidelity::SampledHold),
            "continuous" => Ok(SimFidelity::Continuous),
            other => Err(Error::Parse(format!(
                "unknown simulator fidelity `{other}`"
            ))),
        }
    }
}

impl std::fmt::Display for SimFidelity {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SimFidelity::SampledHold => "sampled-hold",
            SimFidelity::Continuous => "continuous",
        })
    }
}

/// Sinusoidal input ripple `Vin + amplitude·sin(2π·f_in·t + phase)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RippleSpec {
    pub f_in: f64,
    pub amplitude: f64,
    pub phase: f64,
}

impl RippleSpec {
    pub fn new(f_in: f64, amplitude: f64) -> Self {
        RippleSpec {
            f_in,
            amplitude,
            phase: 0.0,
        }
    }

    pub fn validate(&self, params: &ConverterParams) -> Result<()> {
        if !(self.f_in > 0.0) || !self.f_in.is_finite() {
            return Err(Error::NonPositiveFrequency(self.f_in));
        }
        let nyquist = 0.5 * params.fs();
        if self.f_in >= nyquist {
            return Err(Error::AboveNyquist {
                f_in: self.f_in,
                nyquist,
            });
        }
        if !(self.amplitude >= 0.0) || !self.amplitude.is_finite() {
            return Err(Error::InvalidRipple(format!(
                "amplitude {} must be finite and non-negative",
                self.amplitude
            )));
        }
        if !self.phase.is_finite() {
            return Err(Error::InvalidRipple("phase must be finite".into()));
        }
        if self.amplitude > 0.05 * params.vin() {
            log::warn!(
                "ripple amplitude {} V exceeds 5% of Vin = {} V; small-signal assumption may not hold",
                self.amplitude,
                params.vin()
            );
        }
        Ok(())
    }

    /// Input voltage held over period `k`.
    pub fn vin_at(&self, vin: f64, k: usize, ts: f64) -> f64 {
        vin + self.amplitude * (2.0 * PI * self.f_in * k as f64 * ts + self.phase).sin()
    }
}

/// Exact propagator of one configuration of the coupled circuit, in the
/// scaled coordinates `y = [Zc·iL, vc, vo/N]` where all couplings are of
/// order `ωr`, `1/(RoCo)` or `1/(N²·Co·Zc)`.
#[derive(Debug, Clone)]
enum Propagator {
    /// `e^(At) = e^(λ1 t)·Z1 + 2·Re(e^(λ2 t)·Z2)` via Frobenius covariants.
    Modal {
        l1: f64,
        l2: Complex64,
        z1: Matrix3<f64>,
        z2: Matrix3<Complex64>,
    },
    /// Repeated or all-real spectrum: matrix exponential per call.
    Dense(Matrix3<f64>),
}

impl Propagator {
    fn new(a: Matrix3<f64>) -> Self {
        let ev = a.complex_eigenvalues();
        let mut idx = [0usize, 1, 2];
        idx.sort_by(|&i, &j| ev[i].im.abs().total_cmp(&ev[j].im.abs()));
        let l1 = ev[idx[0]];
        let l2 = if ev[idx[2]].im > 0.0 {
            ev[idx[2]]
        } else {
            ev[idx[1]]
        };
        let scale = a.amax();
        let separated =
            l2.im > 1e-6 * scale && (l1 - l2).norm() > 1e-6 * scale && l1.im.abs() <= 1e-12 * scale;
        if !separated {
            return Propagator::Dense(a);
        }
        let l1 = l1.re;
        let l3 = l2.conj();
        let ac = a.map(|v| Complex64::new(v, 0.0));
        let id = Matrix3::<Complex64>::identity();
        let c1 = Complex64::new(l1, 0.0);
        let z1 = (ac - id * l2) * (ac - id * l3) / ((c1 - l2) * (c1 - l3));
        let z2 = (ac - id * c1) * (ac - id * l3) / ((l2 - c1) * (l2 - l3));
        Propagator::Modal {
            l1,
            l2,
            z1: z1.map(|v| v.re),
            z2,
        }
    }

    fn phi(&self, t: f64) -> Matrix3<f64> {
        match self {
            Propagator::Modal { l1, l2, z1, z2 } => {
                let e2 = (l2 * t).exp();
                z1 * (l1 * t).exp() + (z2 * e2).map(|v| 2.0 * v.re)
            }
            Propagator::Dense(a) => (a * t).exp(),
        }
    }

    /// First component of `e^(At)·d` as a cheap function of `t`.
    fn first_component(&self, d: &Vector3<f64>) -> FirstComponent {
        match self {
            Propagator::Modal { l1, l2, z1, z2 } => {
                let dc = d.map(|v| Complex64::new(v, 0.0));
                FirstComponent::Modal {
                    l1: *l1,
                    l2: *l2,
                    c1: (z1.row(0) * d)[0],
                    c2: (z2.row(0) * dc)[0],
                }
            }
            Propagator::Dense(a) => FirstComponent::Dense(*a, *d),
        }
    }
}

enum FirstComponent {
    Modal {
        l1: f64,
        l2: Complex64,
        c1: f64,
        c2: Complex64,
    },
    Dense(Matrix3<f64>, Vector3<f64>),
}

impl FirstComponent {
    fn at(&self, t: f64) -> f64 {
        match self {
            FirstComponent::Modal { l1, l2, c1, c2 } => {
                c1 * (l1 * t).exp() + 2.0 * (c2 * (l2 * t).exp()).re
            }
            FirstComponent::Dense(a, d) => ((a * t).exp() * d)[0],
        }
    }
}

/// State matrix of a configuration in the scaled coordinates.
fn config_matrix(p: &ConverterParams, cfg: ConfigIndex) -> Matrix3<f64> {
    let w = p.omega_r();
    let a = 1.0 / p.tau();
    let eps = 1.0 / (p.n() * p.n() * p.co() * p.zc());
    Matrix3::new(
        0.0,
        -w,
        w * cfg.rectifier_sign(),
        w,
        0.0,
        0.0,
        cfg.output_sign() * eps,
        0.0,
        -a,
    )
}

/// The coupled circuit of all four configurations. Configurations 1 and 4
/// share one state matrix and 2 and 3 the other; they differ in drive only.
#[derive(Debug, Clone)]
struct ContinuousKernel {
    zc: f64,
    n: f64,
    negative: Propagator,
    positive: Propagator,
}

impl ContinuousKernel {
    fn new(p: &ConverterParams) -> Self {
        ContinuousKernel {
            zc: p.zc(),
            n: p.n(),
            negative: Propagator::new(config_matrix(p, ConfigIndex::One)),
            positive: Propagator::new(config_matrix(p, ConfigIndex::Two)),
        }
    }

    fn propagator(&self, cfg: ConfigIndex) -> &Propagator {
        match cfg {
            ConfigIndex::One | ConfigIndex::Four => &self.negative,
            ConfigIndex::Two | ConfigIndex::Three => &self.positive,
        }
    }

    fn scale(&self, x: &StateVector) -> Vector3<f64> {
        Vector3::new(self.zc * x.il, x.vc, x.vo / self.n)
    }

    fn unscale(&self, y: &Vector3<f64>) -> StateVector {
        StateVector::new(y[0] / self.zc, y[1], y[2] * self.n)
    }

    /// Offset of the state from the configuration's equilibrium
    /// `iL = 0, vc = ±Vin, vo = 0`.
    fn offset(&self, x: &StateVector, vin: f64, cfg: ConfigIndex) -> Vector3<f64> {
        let mut y = self.scale(x);
        y[1] -= cfg.bridge_sign() * vin;
        y
    }

    fn step(&self, x: &StateVector, vin: f64, cfg: ConfigIndex, dt: f64) -> StateVector {
        let mut y = self.propagator(cfg).phi(dt) * self.offset(x, vin, cfg);
        y[1] += cfg.bridge_sign() * vin;
        self.unscale(&y)
    }
}

#[derive(Debug, Clone)]
enum Dynamics {
    SampledHold(Kernel),
    Continuous(Box<ContinuousKernel>),
}

/// Result of simulating one switching period.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeriodStep {
    pub next: StateVector,
    pub times: SubintervalTimes,
}

/// One-period propagation with per-period zero-crossing search.
#[derive(Debug, Clone)]
pub struct PeriodStepper {
    ts: f64,
    fidelity: SimFidelity,
    dynamics: Dynamics,
}

/// Root of `f` on `[0, h]` given `f(0) < 0 < f(h)` or `f(0) > 0 > f(h)`,
/// refined until the bracket is below `tol`.
fn bisect(f: impl Fn(f64) -> f64, h: f64, tol: f64) -> f64 {
    let (mut lo, mut hi) = (0.0, h);
    let neg_at_lo = f(0.0) < 0.0;
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if (f(mid) < 0.0) == neg_at_lo {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// First sign change of `f` on `(0, h]` from the sign `f(0)` has, scanning
/// `scan` subintervals before bisecting.
fn first_crossing(f: impl Fn(f64) -> f64, h: f64, scan: usize, tol: f64) -> Option<f64> {
    let negative = f(0.0) < 0.0;
    let mut prev = 0.0;
    for i in 1..=scan {
        let t = h * i as f64 / scan as f64;
        if (f(t) < 0.0) != negative {
            let root = bisect(|s| f(prev + s), t - prev, tol);
            return Some(prev + root);
        }
        prev = t;
    }
    None
}

const CROSSING_TOL: f64 = 1e-13;

impl PeriodStepper {
    pub fn new(params: &ConverterParams, fidelity: SimFidelity) -> Result<Self> {
        let kernel = Kernel::new(params);
        let dynamics = match fidelity {
            SimFidelity::SampledHold => Dynamics::SampledHold(kernel),
            SimFidelity::Continuous => {
                Dynamics::Continuous(Box::new(ContinuousKernel::new(params)))
            }
        };
        Ok(PeriodStepper {
            ts: params.ts(),
            fidelity,
            dynamics,
        })
    }

    pub fn fidelity(&self) -> SimFidelity {
        self.fidelity
    }

    fn advance(
        &self,
        x: &StateVector,
        vin: f64,
        vo_hold: f64,
        cfg: ConfigIndex,
        dt: f64,
    ) -> StateVector {
        match &self.dynamics {
            Dynamics::SampledHold(k) => k.step(*x, vin, vo_hold, cfg, dt),
            Dynamics::Continuous(c) => c.step(x, vin, cfg, dt),
        }
    }

    /// Time from the configuration start to the first tank-current zero
    /// crossing within `h`.
    fn crossing(
        &self,
        x: &StateVector,
        vin: f64,
        vo_hold: f64,
        cfg: ConfigIndex,
        h: f64,
    ) -> Option<f64> {
        let tol = CROSSING_TOL * self.ts;
        match &self.dynamics {
            Dynamics::SampledHold(k) => {
                // A sinusoid at ωr has at most one zero on a window shorter
                // than π/ωr, which Ts/2 is for F > 1.
                let ve = cfg.drive(vin, vo_hold, k.n);
                let tank = crate::discretization::TankState { il: x.il, vc: x.vc };
                let f = |t: f64| k.current(tank, ve, t);
                if (f(h) < 0.0) == (f(0.0) < 0.0) {
                    None
                } else {
                    Some(bisect(f, h, tol))
                }
            }
            Dynamics::Continuous(c) => {
                let d = c.offset(x, vin, cfg);
                let first = c.propagator(cfg).first_component(&d);
                first_crossing(|t| first.at(t), h, 16, tol)
            }
        }
    }

    /// Simulates one period starting at `x` with input `vin`.
    pub fn step(&self, x: &StateVector, vin: f64) -> Result<PeriodStep> {
        self.step_indexed(x, vin, 0)
    }

    fn step_indexed(&self, x: &StateVector, vin: f64, period: usize) -> Result<PeriodStep> {
        let half = 0.5 * self.ts;
        let vo_hold = x.vo;
        if !(x.il < 0.0) {
            return Err(Error::NoZeroCrossing {
                period,
                half: Half::First,
            });
        }
        let t1 = self
            .crossing(x, vin, vo_hold, ConfigIndex::One, half)
            .ok_or(Error::NoZeroCrossing {
                period,
                half: Half::First,
            })?;
        let x1 = self.advance(x, vin, vo_hold, ConfigIndex::One, t1);
        let x2 = self.advance(&x1, vin, vo_hold, ConfigIndex::Two, half - t1);
        if !(x2.il > 0.0) {
            return Err(Error::NoZeroCrossing {
                period,
                half: Half::Second,
            });
        }
        let dt3 = self
            .crossing(&x2, vin, vo_hold, ConfigIndex::Three, half)
            .ok_or(Error::NoZeroCrossing {
                period,
                half: Half::Second,
            })?;
        let x3 = self.advance(&x2, vin, vo_hold, ConfigIndex::Three, dt3);
        let next = self.advance(&x3, vin, vo_hold, ConfigIndex::Four, half - dt3);
        let times =
            SubintervalTimes::new(t1, half + dt3, self.ts).map_err(|_| Error::NoZeroCrossing {
                period,
                half: Half::Second,
            })?;
        if !next.is_finite() {
            return Err(Error::NonFinite("simulated state"));
        }
        Ok(PeriodStep { next, times })
    }

    /// State at `t ∈ [0, Ts]` inside a period with known crossing times.
    pub fn state_within(
        &self,
        x: &StateVector,
        vin: f64,
        times: &SubintervalTimes,
        t: f64,
    ) -> StateVector {
        let mut state = *x;
        for cfg in ConfigIndex::ALL {
            let (a, b) = cfg.interval(times);
            if t <= b {
                return self.advance(&state, vin, x.vo, cfg, (t - a).max(0.0));
            }
            state = self.advance(&state, vin, x.vo, cfg, b - a);
        }
        state
    }
}

/// Periodic orbit of the simulator itself under constant input, found by
/// Newton on its period map starting from `x0`.
pub fn find_periodic_orbit(
    stepper: &PeriodStepper,
    vin: f64,
    x0: StateVector,
) -> Result<(StateVector, SubintervalTimes)> {
    let scale = Vector3::new(x0.il.abs().max(1e-12), vin, vin);
    let mut x = x0.to_vector();
    let g = |v: &Vector3<f64>| -> Result<(Vector3<f64>, SubintervalTimes)> {
        let step = stepper.step(&StateVector::from_vector(v), vin)?;
        Ok((step.next.to_vector() - v, step.times))
    };
    let norm = |r: &Vector3<f64>| r.component_div(&scale).amax();
    let (mut r, mut times) = g(&x)?;
    for _ in 0..50 {
        if norm(&r) < 1e-13 {
            break;
        }
        let mut jac = Matrix3::zeros();
        for j in 0..3 {
            let h = 1e-7 * x[j].abs().max(1e-3 * scale[j]);
            let mut up = x;
            let mut dn = x;
            up[j] += h;
            dn[j] -= h;
            jac.set_column(j, &((g(&up)?.0 - g(&dn)?.0) / (2.0 * h)));
        }
        let Some(dx) = jac.lu().solve(&(-r)) else {
            break;
        };
        let mut lambda = 1.0;
        let mut improved = false;
        for _ in 0..20 {
            let trial = x + dx * lambda;
            if let Ok((rt, tt)) = g(&trial) {
                if norm(&rt) < norm(&r) {
                    x = trial;
                    r = rt;
                    times = tt;
                    improved = true;
                    break;
                }
            }
            lambda *= 0.5;
        }
        if !improved {
            break;
        }
    }
    let residual = norm(&r);
    if residual > 1e-9 {
        return Err(Error::NoConvergence {
            iterations: 50,
            residual,
        });
    }
    Ok((StateVector::from_vector(&x), times))
}

/// One recorded period.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceSample {
    pub k: usize,
    pub t: f64,
    pub vin: f64,
    pub state: StateVector,
    pub t1: f64,
    pub t3: f64,
}

/// Period-start samples of a simulation run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimTrace {
    pub samples: Vec<TraceSample>,
    pub ts: f64,
    pub settle_periods: usize,
    pub measure_periods: usize,
    /// Ripple frequency actually injected, adjusted so the measurement
    /// window holds an integer number of cycles.
    pub f_in: f64,
    pub fidelity: SimFidelity,
}

impl SimTrace {
    /// Samples inside the measurement window.
    pub fn measured(&self) -> &[TraceSample] {
        let start = self.settle_periods.min(self.samples.len());
        let end = (start + self.measure_periods).min(self.samples.len());
        &self.samples[start..end]
    }
}

/// Smallest-defect window length `M ∈ [m0, 2·m0]`; returns `(M, cycles,
/// f_eff)` with `f_eff = cycles/(M·Ts)`.
pub fn commensurate_window(f_in: f64, ts: f64, m0: usize) -> (usize, usize, f64) {
    let m0 = m0.max(1);
    let mut best = (m0, f64::INFINITY);
    for m in m0..=2 * m0 {
        let c = m as f64 * f_in * ts;
        let defect = (c - c.round()).abs() / c.max(1.0);
        if c.round() >= 1.0 && defect < best.1 - 1e-15 {
            best = (m, defect);
            if defect == 0.0 {
                break;
            }
        }
    }
    let m = best.0;
    let cycles = ((m as f64 * f_in * ts).round() as usize).max(1);
    (m, cycles, cycles as f64 / (m as f64 * ts))
}

/// Settling length: 20 ripple cycles or 50 output time constants.
pub fn default_settle_periods(params: &ConverterParams, f_in: f64) -> usize {
    let ripple = 20.0 / (f_in * params.ts());
    let filter = 50.0 * params.tau() / params.ts();
    ripple.max(filter).ceil() as usize
}

/// Measurement length before alignment: 2000 periods or 10 ripple cycles.
pub fn default_measure_periods(params: &ConverterParams, f_in: f64) -> usize {
    (10.0 / (f_in * params.ts())).ceil().max(2000.0) as usize
}

/// Measured audiosusceptibility at one ripple frequency.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RippleGain {
    pub f_in: f64,
    pub gain: Complex64,
    pub gain_db: f64,
    pub normalized_gain: f64,
    pub dc_gain: f64,
}

/// Simulator bound to one converter, starting every run from its own
/// periodic orbit.
#[derive(Debug, Clone)]
pub struct Simulator {
    params: ConverterParams,
    stepper: PeriodStepper,
    orbit: StateVector,
    orbit_times: SubintervalTimes,
    /// Ripple amplitude used by gain measurements, in volts.
    pub amplitude: f64,
}

/// Default ripple amplitude relative to `Vin`.
pub const DEFAULT_RELATIVE_AMPLITUDE: f64 = 1e-4;

impl Simulator {
    pub fn new(params: &ConverterParams, fidelity: SimFidelity) -> Result<Self> {
        let op = solve_cyclic_steady_state(params, None)?;
        Self::from_operating_point(params, &op, fidelity)
    }

    pub fn from_operating_point(
        params: &ConverterParams,
        op: &OperatingPoint,
        fidelity: SimFidelity,
    ) -> Result<Self> {
        let stepper = PeriodStepper::new(params, fidelity)?;
        let (orbit, orbit_times) = find_periodic_orbit(&stepper, params.vin(), op.state)?;
        Ok(Simulator {
            params: *params,
            stepper,
            orbit,
            orbit_times,
            amplitude: DEFAULT_RELATIVE_AMPLITUDE * params.vin(),
        })
    }

    pub fn params(&self) -> &ConverterParams {
        &self.params
    }

    pub fn stepper(&self) -> &PeriodStepper {
        &self.stepper
    }

    /// Period-start state and crossing times of the unperturbed orbit.
    pub fn orbit(&self) -> (StateVector, SubintervalTimes) {
        (self.orbit, self.orbit_times)
    }

    pub fn dc_gain(&self) -> f64 {
        self.orbit.vo / self.params.vin()
    }

    /// Marches `periods` periods from `x0` under ripple `ripple`.
    pub fn march(
        &self,
        x0: StateVector,
        ripple: &RippleSpec,
        periods: usize,
    ) -> Result<Vec<TraceSample>> {
        let ts = self.params.ts();
        let mut out = Vec::with_capacity(periods);
        let mut x = x0;
        for k in 0..periods {
            let vin = ripple.vin_at(self.params.vin(), k, ts);
            let step = self.stepper.step_indexed(&x, vin, k)?;
            out.push(TraceSample {
                k,
                t: k as f64 * ts,
                vin,
                state: x,
                t1: step.times.t1(),
                t3: step.times.t3(),
            });
            x = step.next;
        }
        Ok(out)
    }

    /// Runs settle plus measure periods from the orbit. The ripple frequency
    /// is nudged so the measure window holds an integer number of cycles.
    pub fn simulate(
        &self,
        ripple: &RippleSpec,
        settle: Option<usize>,
        measure: Option<usize>,
    ) -> Result<SimTrace> {
        ripple.validate(&self.params)?;
        let ts = self.params.ts();
        let m0 = measure.unwrap_or_else(|| default_measure_periods(&self.params, ripple.f_in));
        let (m, _, f_eff) = commensurate_window(ripple.f_in, ts, m0);
        let settle = settle.unwrap_or_else(|| default_settle_periods(&self.params, f_eff));
        let ripple = RippleSpec {
            f_in: f_eff,
            ..*ripple
        };
        ripple.validate(&self.params)?;
        let samples = self.march(self.orbit, &ripple, settle + m)?;
        Ok(SimTrace {
            samples,
            ts,
            settle_periods: settle,
            measure_periods: m,
            f_in: f_eff,
            fidelity: self.stepper.fidelity(),
        })
    }

    /// Ripple gain at `f_in` with default windows and amplitude.
    pub fn gain(&self, f_in: f64) -> Result<RippleGain> {
        let trace = self.simulate(&RippleSpec::new(f_in, self.amplitude), None, None)?;
        measure_ripple_gain(&trace, trace.f_in)
    }

    /// Peak of the normalized gain between `f_lo` and `f_hi`: logarithmic
    /// scan, then golden-section refinement to 0.5% in frequency. A maximum
    /// at either end of the scan is reported as no resonance.
    pub fn find_resonance(&self, f_lo: f64, f_hi: f64) -> Result<RippleGain> {
        let (peak, interior) = self.scan_peak(f_lo, f_hi, 24)?;
        if !interior {
            return Err(Error::NoResonance { f_lo, f_hi });
        }
        Ok(peak)
    }

    /// Largest normalized gain over `[f_lo, f_hi]`, endpoints included.
    pub fn max_normalized_gain(&self, f_lo: f64, f_hi: f64) -> Result<f64> {
        Ok(self.scan_peak(f_lo, f_hi, 16)?.0.normalized_gain)
    }

    fn scan_peak(&self, f_lo: f64, f_hi: f64, points: usize) -> Result<(RippleGain, bool)> {
        if !(f_lo > 0.0 && f_hi > f_lo) {
            return Err(Error::InvalidGrid(format!(
                "need 0 < f_lo < f_hi, got [{f_lo}, {f_hi}]"
            )));
        }
        let ratio = (f_hi / f_lo).ln();
        let freq = |u: f64| f_lo * (ratio * u).exp();
        let scan: Vec<RippleGain> = (0..points)
            .map(|i| self.gain(freq(i as f64 / (points - 1) as f64)))
            .collect::<Result<_>>()?;
        let best = (0..points)
            .max_by(|&i, &j| scan[i].normalized_gain.total_cmp(&scan[j].normalized_gain))
            .unwrap_or(0);
        let interior = best > 0 && best + 1 < points;
        if !interior {
            return Ok((scan[best], false));
        }
        let step = 1.0 / (points - 1) as f64;
        let (mut a, mut b) = ((best - 1) as f64 * step, (best + 1) as f64 * step);
        let inv_phi = 0.5 * (5f64.sqrt() - 1.0);
        let mut c = b - inv_phi * (b - a);
        let mut d = a + inv_phi * (b - a);
        let mut gc = self.gain(freq(c))?;
        let mut gd = self.gain(freq(d))?;
        // 0.5% frequency resolution in log space
        while ratio * (b - a) > 0.005 {
            if gc.normalized_gain > gd.normalized_gain {
                b = d;
                d = c;
                gd = gc;
                c = b - inv_phi * (b - a);
                gc = self.gain(freq(c))?;
            } else {
                a = c;
                c = d;
                gc = gd;
                d = a + inv_phi * (b - a);
                gd = self.gain(freq(d))?;
            }
        }
        let refined = if gc.normalized_gain > gd.normalized_gain {
            gc
        } else {
            gd
        };
        let peak = if refined.normalized_gain >= scan[best].normalized_gain {
            refined
        } else {
            scan[best]
        };
        Ok((peak, true))
    }
}

/// `Σ x_k·e^(−j2π·f·k·Ts)` over the given samples, `k` taken as the
/// absolute period index.
pub fn single_bin_dft(
    samples: impl IntoIterator<Item = (usize, f64)>,
    f: f64,
    ts: f64,
) -> Complex64 {
    samples
        .into_iter()
        .map(|(k, x)| Complex64::from_polar(x, -2.0 * PI * f * k as f64 * ts))
        .sum()
}

/// Audiosusceptibility from the measurement window of `trace`:
/// single-bin DFT of `vo` over that of `vin`, normalized by the window-mean
/// dc gain.
pub fn measure_ripple_gain(trace: &SimTrace, f_in: f64) -> Result<RippleGain> {
    let window = trace.measured();
    if window.is_empty() {
        return Err(Error::InvalidRipple("empty measurement window".into()));
    }
    let cycles = window.len() as f64 * f_in * trace.ts;
    if (cycles - cycles.round()).abs() > 1e-6 || cycles.round() < 1.0 {
        return Err(Error::NonIntegerWindow { cycles });
    }
    let vo = single_bin_dft(window.iter().map(|s| (s.k, s.state.vo)), f_in, trace.ts);
    let vin = single_bin_dft(window.iter().map(|s| (s.k, s.vin)), f_in, trace.ts);
    let dc_gain =
        window.iter().map(|s| s.state.vo).sum::<f64>() / window.iter().map(|s| s.vin).sum::<f64>();
    let gain = vo / vin;
    if !gain.norm().is_finite() {
        return Err(Error::NonFinite("ripple gain (zero ripple amplitude?)"));
    }
    Ok(RippleGain {
        f_in,
        gain,
        gain_db: 20.0 * gain.norm().log10(),
        normalized_gain: gain.norm() / dc_gain,
        dc_gain,
    })
}

/// Simulates with the default continuous fidelity, starting from the
/// simulator's periodic orbit.
pub fn simulate(
    params: &ConverterParams,
    ripple: &RippleSpec,
    settle_periods: Option<usize>,
    measure_periods: Option<usize>,
) -> Result<SimTrace> {
    Simulator::new(params, SimFidelity::default())?.simulate(
        ripple,
        settle_periods,
        measure_periods,
    )
}

pub fn find_resonance_sim(params: &ConverterParams, f_lo: f64, f_hi: f64) -> Result<RippleGain> {
    Simulator::new(params, SimFidelity::default())?.find_resonance(f_lo, f_hi)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn experimental_design() -> ConverterParams {
        ConverterParams::new(164.8e-6, 16e-9, 100e-9, 10e3, 16.0, 8.4, 1.01 * 98e3).unwrap()
    }

    #[test]
    fn modal_propagator_matches_dense_exponential() {
        let p = experimental_design();
        for cfg in [ConfigIndex::One, ConfigIndex::Two] {
            let a = config_matrix(&p, cfg);
            let prop = Propagator::new(a);
            assert!(matches!(prop, Propagator::Modal { .. }));
            for t in [0.0, 1e-7, 3.3e-6, p.ts(), 40.0 * p.ts()] {
                let reference = (a * t).exp();
                let err = (prop.phi(t) - reference).amax() / reference.amax();
                assert!(err < 1e-11, "t = {t}: {err}");
            }
        }
    }

    #[test]
    fn sampled_hold_period_matches_the_steady_state() {
        let p = experimental_design();
        let op = solve_cyclic_steady_state(&p, None).unwrap();
        let stepper = PeriodStepper::new(&p, SimFidelity::SampledHold).unwrap();
        let step = stepper.step(&op.state, p.vin()).unwrap();
        assert!((step.times.t1() - op.times.t1()).abs() < 1e-9 * p.ts());
        assert!((step.times.t3() - op.times.t3()).abs() < 1e-9 * p.ts());
        assert!((step.next.vo - op.state.vo).abs() < 1e-9 * op.state.vo);
    }

    #[test]
    fn fidelities_agree_for_a_stiff_output() {
        // With Co → ∞ the output voltage is constant inside a period, which
        // is exactly the sampled-hold assumption.
        let p = ConverterParams::new(164.8e-6, 16e-9, 1.0, 10e3, 16.0, 8.4, 1.01 * 98e3).unwrap();
        let x = StateVector::new(-0.03, -33.7, 134.0);
        let a = PeriodStepper::new(&p, SimFidelity::SampledHold)
            .unwrap()
            .step(&x, 8.4)
            .unwrap();
        let b = PeriodStepper::new(&p, SimFidelity::Continuous)
            .unwrap()
            .step(&x, 8.4)
            .unwrap();
        assert!((a.times.t1() - b.times.t1()).abs() < 1e-6 * p.ts());
        assert!((a.next.il - b.next.il).abs() < 1e-6 * x.il.abs());
        assert!((a.next.vc - b.next.vc).abs() < 1e-6 * x.vc.abs());
    }

    #[test]
    fn rejects_positive_start_current() {
        let p = experimental_design();
        let stepper = PeriodStepper::new(&p, SimFidelity::SampledHold).unwrap();
        let err = stepper
            .step(&StateVector::new(0.1, 0.0, 100.0), 8.4)
            .unwrap_err();
        assert!(matches!(
            err,
            Error::NoZeroCrossing {
                half: Half::First,
                ..
            }
        ));
    }

    #[test]
    fn zero_ripple_stays_on_the_orbit() {
        let p = experimental_design();
        for fidelity in [SimFidelity::SampledHold, SimFidelity::Continuous] {
            let sim = Simulator::new(&p, fidelity).unwrap();
            let trace = sim
                .march(sim.orbit().0, &RippleSpec::new(1000.0, 0.0), 500)
                .unwrap();
            let first = trace[0].state;
            for s in &trace {
                assert!((s.state.vo - first.vo).abs() < 1e-6 * first.vo);
                assert!((s.state.il - first.il).abs() < 1e-6 * first.il.abs());
            }
        }
    }

    #[test]
    fn dft_recovers_a_synthetic_sinusoid() {
        let ts = 1e-5;
        let (m, cycles, f) = commensurate_window(1234.5, ts, 2000);
        assert!((2000..=4000).contains(&m));
        assert!((m as f64 * f * ts - cycles as f64).abs() < 1e-12);
        let amp = 0.37;
        let x = single_bin_dft(
            (0..m).map(|k| (k, 5.0 + amp * (2.0 * PI * f * k as f64 * ts + 0.3).sin())),
            f,
            ts,
        );
        let est = 2.0 * x.norm() / m as f64;
        assert!((est - amp).abs() < 1e-10 * amp);
    }

    #[test]
    fn non_integer_window_rejected() {
        let trace = SimTrace {
            samples: (0..100)
                .map(|k| TraceSample {
                    k,
                    t: k as f64,
                    vin: 1.0,
                    state: StateVector::default(),
                    t1: 0.0,
                    t3: 0.0,
                })
                .collect(),
            ts: 1.0,
            settle_periods: 0,
            measure_periods: 100,
            f_in: 0.0123,
            fidelity: SimFidelity::SampledHold,
        };
        assert!(matches!(
            measure_ripple_gain(&trace, 0.0123),
            Err(Error::NonIntegerWindow { .. })
        ));
    }

    #[test]
    fn ripple_validation() {
        let p = experimental_design();
        assert!(RippleSpec::new(p.fs(), 0.1).validate(&p).is_err());
        assert!(RippleSpec::new(-1.0, 0.1).validate(&p).is_err());
        assert!(RippleSpec::new(1000.0, -0.1).validate(&p).is_err());
        assert!(RippleSpec::new(1000.0, 0.1).validate(&p).is_ok());
    }
}
