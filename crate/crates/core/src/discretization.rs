//! Exact discretization of the converter over one switching period.
//!
//! Within a period the tank sees a piecewise-constant drive
//! `±Vin ± Vo/N` that changes at the four configuration boundaries
//! `[0, T1)`, `[T1, Ts/2)`, `[Ts/2, T3)`, `[T3, Ts)`. The output voltage is
//! held at its period-start value while the tank is propagated (step 1) and
//! is then obtained by driving the `Ro·Co` filter with the rectified tank
//! current (step 2). Both steps have closed forms, which compose into the
//! period map `x[k+1] = A_d·x[k] + B_d·Vin`.

use nalgebra::{Matrix3, Vector3};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::params::{ConverterParams, FilterHelpers, StateVector, SubintervalTimes};

/// One of the four switch configurations of a period.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum ConfigIndex {
    /// Bridge at +Vin, tank current negative.
    One,
    /// Bridge at +Vin, tank current positive.
    Two,
    /// Bridge at −Vin, tank current positive.
    Three,
    /// Bridge at −Vin, tank current negative.
    Four,
}

impl ConfigIndex {
    pub const ALL: [ConfigIndex; 4] = [
        ConfigIndex::One,
        ConfigIndex::Two,
        ConfigIndex::Three,
        ConfigIndex::Four,
    ];

    pub fn number(self) -> u8 {
        match self {
            ConfigIndex::One => 1,
            ConfigIndex::Two => 2,
            ConfigIndex::Three => 3,
            ConfigIndex::Four => 4,
        }
    }

    pub fn bridge_sign(self) -> f64 {
        match self {
            ConfigIndex::One | ConfigIndex::Two => 1.0,
            ConfigIndex::Three | ConfigIndex::Four => -1.0,
        }
    }

    /// Sign of the reflected output voltage in the tank drive. The rectifier
    /// opposes the current, so it adds `+Vo/N` while the current is negative.
    pub fn rectifier_sign(self) -> f64 {
        match self {
            ConfigIndex::One | ConfigIndex::Four => 1.0,
            ConfigIndex::Two | ConfigIndex::Three => -1.0,
        }
    }

    /// Sign with which `iL/N` charges the output capacitor.
    pub fn output_sign(self) -> f64 {
        -self.rectifier_sign()
    }

    /// Effective constant voltage the tank rotates about in this configuration.
    pub fn drive(self, vin: f64, vo: f64, n: f64) -> f64 {
        self.bridge_sign() * vin + self.rectifier_sign() * vo / n
    }

    /// `[start, end)` of the configuration within a period.
    pub fn interval(self, times: &SubintervalTimes) -> (f64, f64) {
        match self {
            ConfigIndex::One => (0.0, times.t1()),
            ConfigIndex::Two => (times.t1(), times.half()),
            ConfigIndex::Three => (times.half(), times.t3()),
            ConfigIndex::Four => (times.t3(), times.ts()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TankState {
    pub il: f64,
    pub vc: f64,
}

/// Inputs held constant over a period for the tank step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TankInputs {
    pub vin: f64,
    pub vo: f64,
}

/// Precomputed constants for the closed-form kernels.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Kernel {
    pub omega: f64,
    pub zc: f64,
    pub a: f64,
    pub n: f64,
    pub co: f64,
    d: f64,
}

impl Kernel {
    pub fn new(p: &ConverterParams) -> Self {
        let omega = p.omega_r();
        let a = 1.0 / p.tau();
        Kernel {
            omega,
            zc: p.zc(),
            a,
            n: p.n(),
            co: p.co(),
            d: a * a + omega * omega,
        }
    }

    /// Tank current `dt` after the start of a configuration with drive `ve`.
    #[inline]
    pub fn current(&self, tank: TankState, ve: f64, dt: f64) -> f64 {
        let (s, c) = (self.omega * dt).sin_cos();
        tank.il * c - (tank.vc - ve) / self.zc * s
    }

    #[inline]
    pub fn tank(&self, tank: TankState, ve: f64, dt: f64) -> TankState {
        let (s, c) = (self.omega * dt).sin_cos();
        let x0 = tank.vc - ve;
        TankState {
            il: tank.il * c - x0 / self.zc * s,
            vc: ve + x0 * c + self.zc * tank.il * s,
        }
    }

    /// `∫ iL dt` over `[0, dt]`.
    #[inline]
    pub fn charge(&self, tank: TankState, ve: f64, dt: f64) -> f64 {
        let (s, c) = (self.omega * dt).sin_cos();
        (tank.il * s - (tank.vc - ve) / self.zc * (1.0 - c)) / self.omega
    }

    /// Output voltage after `dt` when `σ·iL/N` (the closed-form tank current
    /// starting from `tank` about `ve`) charges the `Ro·Co` filter.
    #[inline]
    pub fn output(&self, vo: f64, tank: TankState, ve: f64, sigma: f64, dt: f64) -> f64 {
        let (s, c) = (self.omega * dt).sin_cos();
        let e = (-self.a * dt).exp();
        let cos_part = (self.a * c + self.omega * s - self.a * e) / self.d;
        let sin_part = (self.a * s - self.omega * c + self.omega * e) / self.d;
        let x0 = tank.vc - ve;
        vo * e + sigma / (self.n * self.co) * (tank.il * cos_part - x0 / self.zc * sin_part)
    }

    /// Propagates all three states through one configuration with the tank
    /// drive built from the held output voltage `vo_hold`.
    #[inline]
    pub fn step(
        &self,
        x: StateVector,
        vin: f64,
        vo_hold: f64,
        config: ConfigIndex,
        dt: f64,
    ) -> StateVector {
        let ve = config.drive(vin, vo_hold, self.n);
        let tank = TankState { il: x.il, vc: x.vc };
        let next = self.tank(tank, ve, dt);
        let vo = self.output(x.vo, tank, ve, config.output_sign(), dt);
        StateVector::new(next.il, next.vc, vo)
    }
}

fn check_dt(dt: f64) -> Result<()> {
    if !dt.is_finite() {
        Err(Error::NonFinite("dt"))
    } else if dt < 0.0 {
        Err(Error::NegativeDuration(dt))
    } else {
        Ok(())
    }
}

/// Exact LC tank solution over `dt` in the given configuration: a rotation
/// of `(iL, vc − Ve)` about the configuration's drive voltage `Ve`.
pub fn propagate_tank(
    params: &ConverterParams,
    tank: TankState,
    inputs: TankInputs,
    config: ConfigIndex,
    dt: f64,
) -> Result<TankState> {
    check_dt(dt)?;
    let k = Kernel::new(params);
    Ok(k.tank(tank, config.drive(inputs.vin, inputs.vo, k.n), dt))
}

/// Exact response of the output filter over `dt` to the rectified tank
/// current that starts from `tank` in the given configuration.
pub fn propagate_output(
    params: &ConverterParams,
    vo: f64,
    tank: TankState,
    inputs: TankInputs,
    config: ConfigIndex,
    dt: f64,
) -> Result<f64> {
    check_dt(dt)?;
    let k = Kernel::new(params);
    let ve = config.drive(inputs.vin, inputs.vo, k.n);
    Ok(k.output(vo, tank, ve, config.output_sign(), dt))
}

/// Step 1 and step 2 together for one configuration, holding the tank's
/// view of the output voltage at `vo_hold`.
pub fn propagate_config(
    params: &ConverterParams,
    x: StateVector,
    vin: f64,
    vo_hold: f64,
    config: ConfigIndex,
    dt: f64,
) -> Result<StateVector> {
    check_dt(dt)?;
    Ok(Kernel::new(params).step(x, vin, vo_hold, config, dt))
}

/// Chains [`propagate_config`] through the four configurations of a period
/// with fixed switching instants.
pub fn compose_period(
    params: &ConverterParams,
    x: StateVector,
    vin: f64,
    times: &SubintervalTimes,
) -> StateVector {
    let k = Kernel::new(params);
    let vo_hold = x.vo;
    ConfigIndex::ALL.iter().fold(x, |state, &cfg| {
        let (start, end) = cfg.interval(times);
        k.step(state, vin, vo_hold, cfg, end - start)
    })
}

/// Linear one-period map `x[k+1] = A·x[k] + B·Vin[k]` for fixed `T1`, `T3`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiscreteStateSpace {
    pub a: Matrix3<f64>,
    pub b: Vector3<f64>,
    pub times: SubintervalTimes,
}

impl DiscreteStateSpace {
    pub fn apply(&self, x: &StateVector, vin: f64) -> StateVector {
        StateVector::from_vector(&(self.a * x.to_vector() + self.b * vin))
    }

    pub fn is_finite(&self) -> bool {
        self.a.iter().chain(self.b.iter()).all(|v| v.is_finite())
    }
}

/// Assembles `(A_d, B_d)` from the closed-form element expressions.
///
/// The output-row terms of the form `G1·e^(t/RoCo)` are evaluated as
/// `Ĝ1·e^(−(Ts−t)/RoCo)`, where `Ĝ1 = G1·e^(Ts/RoCo)`, so nothing overflows
/// when `Ro·Co ≪ Ts`. The direct feed-through of `Vo` into `a33` is the
/// filter decay `e^(−Ts/RoCo)`.
pub fn assemble_period_map(
    params: &ConverterParams,
    times: &SubintervalTimes,
) -> Result<DiscreteStateSpace> {
    let h = FilterHelpers::new(params);
    let w = h.omega_r;
    let zc = params.zc();
    let n = params.n();
    let (t1, t3, ts) = (times.t1(), times.t3(), times.ts());
    let half = times.half();

    let (sin_ts, cos_ts) = (w * ts).sin_cos();
    let mut a = Matrix3::zeros();
    let mut b = Vector3::zeros();

    a[(0, 0)] = cos_ts;
    a[(0, 1)] = -sin_ts / zc;
    a[(1, 0)] = zc * sin_ts;
    a[(1, 1)] = cos_ts;
    a[(0, 2)] = (sin_ts + 2.0 * (w * (ts - t3)).sin() - 2.0 * (w * (ts - t1)).sin()) / (n * zc);
    a[(1, 2)] = (1.0 - cos_ts - 2.0 * (w * (ts - t3)).cos() + 2.0 * (w * (ts - t1)).cos()) / n;
    b[0] = (sin_ts - 2.0 * (w * half).sin()) / zc;
    b[1] = 2.0 * (w * half).cos() - cos_ts - 1.0;

    let g1 = |t: f64| h.g1(t);
    let g1p = |t: f64| h.g1_prime(t);
    // e^(−(Ts − t)/RoCo)
    let ed = |t: f64| (-(ts - t) * h.a).exp();
    let gh = h.big_g1_unscaled();

    a[(2, 0)] = gh * (2.0 * ed(t1) * g1p(t1) - 2.0 * ed(t3) * g1p(t3) + g1p(ts) - h.a * ed(0.0));
    a[(2, 1)] = gh / zc * (2.0 * ed(t3) * g1(t3) - 2.0 * ed(t1) * g1(t1) - g1(ts) - w * ed(0.0));
    a[(2, 2)] = ed(0.0)
        + gh / (n * zc)
            * (2.0 * ed(t1) * g1(t1) - 2.0 * ed(t3) * g1(t3)
                + g1(ts)
                + w * ed(0.0)
                + 4.0 * ed(t3) * g1(t3 - t1)
                - 2.0 * g1(ts - t1)
                + 2.0 * w * ed(t1)
                + 2.0 * g1(ts - t3)
                + 2.0 * w * ed(t3));
    b[2] = gh / zc
        * (2.0 * ed(t1) * g1(t1) - 2.0 * ed(t3) * g1(t3)
            + g1(ts)
            + w * ed(0.0)
            + 4.0 * ed(t3) * g1(t3 - half)
            - 2.0 * g1(half)
            + 2.0 * w * ed(half));

    Ok(DiscreteStateSpace {
        a,
        b,
        times: *times,
    })
}
