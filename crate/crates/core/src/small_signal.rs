//! Small-signal audiosusceptibility model about the cyclic steady state.
//!
//! Perturbing the period map and the two zero-crossing constraints gives
//! `x̃[k+1] = A_sd·x̃[k] + B_sd·ṽin[k]` with `A_sd = A_d + T_d·T_kx` and
//! `B_sd = B_d + T_d·T_ku`, where `T_d` collects the sensitivities of the
//! period map to the crossing instants and `(T_kx, T_ku)` solve the
//! linearized crossing constraints for those instants.
//!
//! The simplified model assumes half-wave symmetry, negligible output decay
//! over a period and `1/(RoCo)² ≪ ωr²`. Its output row is the rational
//! transfer function
//!
//! ```text
//!            a·(w − α)                 16                   16
//! H(w) = ─────────────────,   a = ──────────,   c = ───────────,   w = z − 1
//!         (w − α)(w² + c)          N·Zc·Co·ωr        N²·Zc·Co·ωr
//! ```
//!
//! whose complex poles `1 ± j√c` set the resonance `atan(√c)/Ts`.

use std::f64::consts::PI;

use nalgebra::{Matrix2x3, Matrix3, Matrix3x2, Vector2, Vector3};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::discretization::{assemble_period_map, DiscreteStateSpace};
use crate::error::{Error, Result};
use crate::params::{ConverterParams, FilterHelpers};
use crate::steady_state::OperatingPoint;

/// Normalized slopes below this mark a grazing zero crossing.
pub const DEGENERATE_SLOPE: f64 = 1e-9;

fn slope_scale(params: &ConverterParams) -> f64 {
    params.omega_r() * params.vin() / params.zc()
}

fn check_slope(params: &ConverterParams, which: &'static str, value: f64) -> Result<f64> {
    let normalized = value / slope_scale(params);
    if !value.is_finite() || normalized.abs() < DEGENERATE_SLOPE {
        Err(Error::DegenerateCrossingSlope {
            which,
            value,
            normalized,
        })
    } else {
        Ok(value)
    }
}

/// `f'_T1 = −∂f_T1/∂T1` at the operating point. Negative at a regular
/// operating point: the crossing constraint falls as `T1` grows.
pub fn fprime_t1(params: &ConverterParams, op: &OperatingPoint) -> Result<f64> {
    let w = params.omega_r();
    let x = &op.state;
    let (s, c) = (w * op.times.t1()).sin_cos();
    let offset = (x.vc - params.vin() - x.vo / params.n()) / params.zc();
    check_slope(params, "T1", w * (x.il * s + offset * c))
}

/// `f'_T3 = −∂f_T3/∂T3` at the operating point.
pub fn fprime_t3(params: &ConverterParams, op: &OperatingPoint) -> Result<f64> {
    let w = params.omega_r();
    let zc = params.zc();
    let n = params.n();
    let vin = params.vin();
    let x = &op.state;
    let (t1, t3, half) = (op.times.t1(), op.times.t3(), op.times.half());
    let (s, c) = (w * t3).sin_cos();
    let offset = (x.vc - vin - x.vo / n) / zc;
    let value = w
        * (x.il * s
            + offset * c
            + 2.0 * x.vo / (n * zc) * (w * (t3 - t1)).cos()
            + 2.0 * vin / zc * (w * (t3 - half)).cos());
    check_slope(params, "T3", value)
}

/// Sensitivities tying the crossing instants to the state and input.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimingSensitivities {
    /// `∂x[k+1]/∂(T1, T3)` with `x[k]`, `vin` fixed.
    pub t_d: Matrix3x2<f64>,
    /// `∂(T1, T3)/∂x[k]` along the crossing constraints.
    pub t_kx: Matrix2x3<f64>,
    /// `∂(T1, T3)/∂vin` along the crossing constraints.
    pub t_ku: Vector2<f64>,
    pub fprime_t1: f64,
    pub fprime_t3: f64,
}

pub fn build_timing_sensitivities(
    params: &ConverterParams,
    op: &OperatingPoint,
) -> Result<TimingSensitivities> {
    let fp1 = fprime_t1(params, op)?;
    let fp3 = fprime_t3(params, op)?;
    let h = FilterHelpers::new(params);
    let (w, a) = (h.omega_r, h.a);
    let zc = params.zc();
    let n = params.n();
    let co = params.co();
    let vin = params.vin();
    let (il, vc, vo) = (op.state.il, op.state.vc, op.state.vo);
    let t = &op.times;
    let (t1, t3, ts, half) = (t.t1(), t.t3(), t.ts(), t.half());
    let g2 = h.big_g2();
    // G·e^(t/RoCo) regrouped as Ĝ·e^(−(Ts − t)/RoCo)
    let gh = h.big_g1_unscaled();
    let ed = |t: f64| (-(ts - t) * a).exp();
    let (s1, c1) = (w * t1).sin_cos();
    let (s3, c3) = (w * t3).sin_cos();

    let mut t_d = Matrix3x2::zeros();
    t_d[(0, 0)] = 2.0 * w * vo * (w * (ts - t1)).cos() / (n * zc);
    t_d[(0, 1)] = -2.0 * w * vo * (w * (ts - t3)).cos() / (n * zc);
    t_d[(1, 0)] = 2.0 * w * vo * (w * (ts - t1)).sin() / n;
    t_d[(1, 1)] = -2.0 * w * vo * (w * (ts - t3)).sin() / n;
    t_d[(2, 0)] = -2.0 * il * c1 / (n * co) * ed(t1)
        + 2.0 * vc * s1 / (n * zc * co) * ed(t1)
        + gh * vo / (n * zc)
            * (2.0 * g2 * ed(t1) * s1 - 4.0 * w * ed(t3) * h.g1_prime(t3 - t1)
                + 2.0 * w * h.g1_prime(ts - t1)
                + 2.0 * w * a * ed(t1))
        - 2.0 * vin * s1 / (n * zc * co) * ed(t1);
    t_d[(2, 1)] = 2.0 * il * c3 / (n * co) * ed(t3) - 2.0 * vc * s3 / (n * zc * co) * ed(t3)
        + gh * ed(t3) * vo / (n * zc)
            * (-2.0 * g2 * s3 + 2.0 * w * a + 4.0 * g2 * (w * (t3 - t1)).sin())
        - gh * vo / (n * zc) * 2.0 * w * h.g1_prime(ts - t3)
        + gh * ed(t3) * vin / zc
            * (-2.0 * g2 * s3 + 4.0 * a * h.g2(t3 - half) - 4.0 * w * h.g2_prime(t3 - half));

    let k = 2.0 * vo * w * (w * (t3 - t1)).cos();
    let cross = fp1 * fp3;
    let t_kx = Matrix2x3::new(
        c1 / fp1,
        -s1 / (zc * fp1),
        s1 / (n * zc * fp1),
        c3 / fp3 + k * c1 / (n * zc * cross),
        -s3 / (zc * fp3) - k * s1 / (n * zc * zc * cross),
        (s3 - 2.0 * (w * (t3 - t1)).sin()) / (n * zc * fp3) + k * s1 / (n * n * zc * zc * cross),
    );
    let t_ku = Vector2::new(
        s1 / (zc * fp1),
        (s3 - 2.0 * (w * (t3 - half)).sin()) / (zc * fp3) + k * s1 / (n * zc * zc * cross),
    );

    Ok(TimingSensitivities {
        t_d,
        t_kx,
        t_ku,
        fprime_t1: fp1,
        fprime_t3: fp3,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelVariant {
    Full,
    Simplified,
}

/// Linear perturbation dynamics `x̃[k+1] = A·x̃[k] + B·ṽin[k]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmallSignalModel {
    pub a: Matrix3<f64>,
    pub b: Vector3<f64>,
    pub variant: ModelVariant,
    pub op: OperatingPoint,
}

impl SmallSignalModel {
    pub fn spectral_radius(&self) -> f64 {
        self.a
            .complex_eigenvalues()
            .iter()
            .map(|l| l.norm())
            .fold(0.0, f64::max)
    }

    /// `vo` row of `(zI − A)⁻¹·B`.
    pub fn transfer_at(&self, z: Complex64) -> Result<Complex64> {
        let m = Matrix3::<Complex64>::identity() * z - self.a.map(|v| Complex64::new(v, 0.0));
        let x = m
            .lu()
            .solve(&self.b.map(|v| Complex64::new(v, 0.0)))
            .ok_or(Error::NonFinite("state-space transfer at a pole"))?;
        Ok(x[2])
    }

    /// Propagates a perturbation trajectory from `x0` under input samples `u`.
    pub fn simulate(&self, x0: Vector3<f64>, u: &[f64]) -> Vec<Vector3<f64>> {
        let mut x = x0;
        let mut out = Vec::with_capacity(u.len() + 1);
        out.push(x);
        for &uk in u {
            x = self.a * x + self.b * uk;
            out.push(x);
        }
        out
    }
}

/// `A_sd = A_d + T_d·T_kx`, `B_sd = B_d + T_d·T_ku`.
pub fn build_full_model(params: &ConverterParams, op: &OperatingPoint) -> Result<SmallSignalModel> {
    let DiscreteStateSpace { a, b, .. } = assemble_period_map(params, &op.times)?;
    let ts = build_timing_sensitivities(params, op)?;
    Ok(SmallSignalModel {
        a: a + ts.t_d * ts.t_kx,
        b: b + ts.t_d * ts.t_ku,
        variant: ModelVariant::Full,
        op: *op,
    })
}

/// `α = 4·ωr·Vo/(N·Zc·f'_T1)`, the decoupled real pole offset of the
/// simplified model.
pub fn simplified_alpha(params: &ConverterParams, op: &OperatingPoint) -> Result<f64> {
    let fp1 = fprime_t1(params, op)?;
    Ok(4.0 * params.omega_r() * op.state.vo / (params.n() * params.zc() * fp1))
}

/// Simplified matrices. The tank-to-capacitor entry `(2,1)` is zero: the
/// rational transfer function it must reproduce has no `sin²(ωr·Ts)` term
/// in its denominator, and the exact Jacobian entry is small.
pub fn build_simplified_model(
    params: &ConverterParams,
    op: &OperatingPoint,
) -> Result<SmallSignalModel> {
    let alpha = simplified_alpha(params, op)?;
    let w = params.omega_r();
    let zc = params.zc();
    let n = params.n();
    let a = Matrix3::new(
        1.0 + alpha,
        -(w * op.times.ts()).sin() / zc,
        0.0,
        0.0,
        1.0,
        4.0 / n,
        0.0,
        -4.0 / (n * zc * params.co() * w),
        1.0,
    );
    Ok(SmallSignalModel {
        a,
        b: Vector3::new(0.0, -4.0, 0.0),
        variant: ModelVariant::Simplified,
        op: *op,
    })
}

/// Rational transfer function in powers of `w = z − 1`, ascending.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RationalTF {
    pub num_w: Vec<f64>,
    pub den_w: Vec<f64>,
    pub ts: f64,
}

fn poly_eval(coeffs: &[f64], x: Complex64) -> Complex64 {
    coeffs
        .iter()
        .rev()
        .fold(Complex64::new(0.0, 0.0), |acc, &c| acc * x + c)
}

/// Coefficients of `p(z − 1)` in ascending powers of `z`.
fn shift_to_z(coeffs: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; coeffs.len()];
    for (k, &c) in coeffs.iter().enumerate() {
        // (z − 1)^k = Σ_j C(k, j)·z^j·(−1)^(k−j)
        let mut binom = 1.0;
        for (j, slot) in out.iter_mut().enumerate().take(k + 1) {
            let sign = if (k - j) % 2 == 0 { 1.0 } else { -1.0 };
            *slot += c * binom * sign;
            binom = binom * (k - j) as f64 / (j + 1) as f64;
        }
    }
    out
}

impl RationalTF {
    pub fn eval(&self, z: Complex64) -> Complex64 {
        let w = z - 1.0;
        poly_eval(&self.num_w, w) / poly_eval(&self.den_w, w)
    }

    pub fn num_z(&self) -> Vec<f64> {
        shift_to_z(&self.num_w)
    }

    pub fn den_z(&self) -> Vec<f64> {
        shift_to_z(&self.den_w)
    }

    /// Roots of the denominator in the z-plane from its companion matrix.
    pub fn poles(&self) -> Vec<Complex64> {
        let den = self.den_z();
        let deg = den.len() - 1;
        let lead = den[deg];
        let companion = nalgebra::DMatrix::from_fn(deg, deg, |i, j| {
            if i == 0 {
                -den[deg - 1 - j] / lead
            } else if i == j + 1 {
                1.0
            } else {
                0.0
            }
        });
        companion.complex_eigenvalues().iter().copied().collect()
    }
}

fn tf_coefficients(params: &ConverterParams) -> (f64, f64) {
    let base = 16.0 / (params.n() * params.zc() * params.co() * params.omega_r());
    (base, base / params.n())
}

/// Audiosusceptibility `vo(z)/vin(z)` of the simplified model.
pub fn as_transfer_function(params: &ConverterParams, op: &OperatingPoint) -> Result<RationalTF> {
    let alpha = simplified_alpha(params, op)?;
    let (a, c) = tf_coefficients(params);
    Ok(RationalTF {
        num_w: vec![-a * alpha, a],
        den_w: vec![-alpha * c, c, -alpha, 1.0],
        ts: op.times.ts(),
    })
}

/// As [`as_transfer_function`], but at a grazing crossing, where `α` is
/// unbounded, falls back to the state-space limit with the real pole
/// cancelled: `a/(w² + c)`.
pub fn as_transfer_function_or_reduced(
    params: &ConverterParams,
    op: &OperatingPoint,
) -> RationalTF {
    match as_transfer_function(params, op) {
        Ok(tf) => tf,
        Err(e) => {
            log::warn!("{e}; using the reduced second-order transfer function");
            let (a, c) = tf_coefficients(params);
            RationalTF {
                num_w: vec![a],
                den_w: vec![c, 0.0, 1.0],
                ts: op.times.ts(),
            }
        }
    }
}

/// Audiosusceptibility resonance, from the closed-form expression and from
/// the angle of the complex denominator pole.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResonanceFrequency {
    pub formula_rad_s: f64,
    pub formula_hz: f64,
    pub pole_angle_rad_s: f64,
    pub pole_angle_hz: f64,
}

pub fn as_resonance_frequency(params: &ConverterParams, op: &OperatingPoint) -> ResonanceFrequency {
    let ts = op.times.ts();
    let (_, c) = tf_coefficients(params);
    let formula = c.sqrt().atan() / ts;
    let tf = as_transfer_function_or_reduced(params, op);
    let pole = tf
        .poles()
        .into_iter()
        .max_by(|p, q| p.im.total_cmp(&q.im))
        .map(|p| p.arg() / ts)
        .unwrap_or(f64::NAN);
    ResonanceFrequency {
        formula_rad_s: formula,
        formula_hz: formula / (2.0 * PI),
        pole_angle_rad_s: pole,
        pole_angle_hz: pole / (2.0 * PI),
    }
}

/// Where a frequency-response point came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ResponseMethod {
    /// Simplified rational transfer function.
    #[serde(rename = "model")]
    Model,
    /// Full small-signal state-space model.
    #[serde(rename = "model-full")]
    ModelFull,
    /// Switched time-domain simulation.
    #[serde(rename = "sim")]
    Simulation,
}

impl ResponseMethod {
    pub fn tag(self) -> &'static str {
        match self {
            ResponseMethod::Model => "model",
            ResponseMethod::ModelFull => "model-full",
            ResponseMethod::Simulation => "sim",
        }
    }
}

impl std::str::FromStr for ResponseMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "model" => Ok(ResponseMethod::Model),
            "model-full" => Ok(ResponseMethod::ModelFull),
            "sim" => Ok(ResponseMethod::Simulation),
            other => Err(Error::Parse(format!(
                "unknown method `{other}` (expected model, model-full or sim)"
            ))),
        }
    }
}

impl std::fmt::Display for ResponseMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.tag())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GainPoint {
    pub f_in: f64,
    pub gain: Complex64,
    pub gain_db: f64,
    /// `|vo/vin|` over the dc gain `Vo/Vin`.
    pub normalized_gain: f64,
    pub phase_deg: f64,
}

impl GainPoint {
    pub fn new(f_in: f64, gain: Complex64, dc_gain: f64) -> Self {
        GainPoint {
            f_in,
            gain,
            gain_db: 20.0 * gain.norm().log10(),
            normalized_gain: gain.norm() / dc_gain,
            phase_deg: gain.arg().to_degrees(),
        }
    }
}

/// Ordered gain points with their provenance.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrequencyResponse {
    pub method: ResponseMethod,
    pub dc_gain: f64,
    pub points: Vec<GainPoint>,
}

impl FrequencyResponse {
    pub fn peak(&self) -> Option<&GainPoint> {
        self.points
            .iter()
            .max_by(|a, b| a.normalized_gain.total_cmp(&b.normalized_gain))
    }
}

fn unit_circle_point(f_in: f64, ts: f64) -> Result<Complex64> {
    if !(f_in > 0.0) || !f_in.is_finite() {
        return Err(Error::NonPositiveFrequency(f_in));
    }
    let nyquist = 0.5 / ts;
    if f_in >= nyquist {
        return Err(Error::AboveNyquist { f_in, nyquist });
    }
    Ok(Complex64::from_polar(1.0, 2.0 * PI * f_in * ts))
}

/// Gain of `tf` at `f_in`, normalized by `dc_gain`.
pub fn evaluate_gain(tf: &RationalTF, f_in: f64, dc_gain: f64) -> Result<GainPoint> {
    let z = unit_circle_point(f_in, tf.ts)?;
    Ok(GainPoint::new(f_in, tf.eval(z), dc_gain))
}

/// Gain of a state-space model at `f_in`.
pub fn evaluate_model_gain(model: &SmallSignalModel, f_in: f64) -> Result<GainPoint> {
    let z = unit_circle_point(f_in, model.op.times.ts())?;
    Ok(GainPoint::new(
        f_in,
        model.transfer_at(z)?,
        model.op.dc_gain,
    ))
}

/// Model frequency response over `freqs` using the simplified transfer
/// function or the full state-space model.
pub fn model_response(
    params: &ConverterParams,
    op: &OperatingPoint,
    freqs: &[f64],
    method: ResponseMethod,
) -> Result<FrequencyResponse> {
    let points = match method {
        ResponseMethod::Model => {
            let tf = as_transfer_function_or_reduced(params, op);
            freqs
                .iter()
                .map(|&f| evaluate_gain(&tf, f, op.dc_gain))
                .collect::<Result<_>>()?
        }
        ResponseMethod::ModelFull => {
            let model = build_full_model(params, op)?;
            freqs
                .iter()
                .map(|&f| evaluate_model_gain(&model, f))
                .collect::<Result<_>>()?
        }
        ResponseMethod::Simulation => {
            return Err(Error::Parse(
                "model_response does not simulate; use the time-domain simulator".into(),
            ))
        }
    };
    Ok(FrequencyResponse {
        method,
        dc_gain: op.dc_gain,
        points,
    })
}

/// `n` logarithmically spaced frequencies from `f_lo` to `f_hi` inclusive.
pub fn log_space(f_lo: f64, f_hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![f_lo],
        _ => (0..n)
            .map(|i| f_lo * (f_hi / f_lo).powf(i as f64 / (n - 1) as f64))
            .collect(),
    }
}
