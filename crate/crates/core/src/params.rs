//! Converter parameters, derived quantities and the output-filter helper
//! functions shared by the closed-form period map.

use std::f64::consts::PI;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Physical component values and operating inputs of a series resonant
/// converter. Quantities are referred to the transformer primary except
/// `co`, `ro` which sit on the secondary, and `n` is secondary/primary.
///
/// Construction validates positivity and above-resonance operation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawParams", into = "RawParams")]
pub struct ConverterParams {
    lr: f64,
    cr: f64,
    co: f64,
    ro: f64,
    n: f64,
    vin: f64,
    fs: f64,
}

/// Unvalidated mirror of [`ConverterParams`] used for serialization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawParams {
    #[serde(rename = "Lr")]
    pub lr: f64,
    #[serde(rename = "Cr")]
    pub cr: f64,
    #[serde(rename = "Co")]
    pub co: f64,
    #[serde(rename = "Ro")]
    pub ro: f64,
    #[serde(rename = "N")]
    pub n: f64,
    #[serde(rename = "Vin")]
    pub vin: f64,
    #[serde(rename = "fs")]
    pub fs: f64,
}

impl TryFrom<RawParams> for ConverterParams {
    type Error = Error;

    fn try_from(raw: RawParams) -> Result<Self> {
        ConverterParams::new(raw.lr, raw.cr, raw.co, raw.ro, raw.n, raw.vin, raw.fs)
    }
}

impl From<ConverterParams> for RawParams {
    fn from(p: ConverterParams) -> Self {
        RawParams {
            lr: p.lr,
            cr: p.cr,
            co: p.co,
            ro: p.ro,
            n: p.n,
            vin: p.vin,
            fs: p.fs,
        }
    }
}

fn positive(name: &'static str, value: f64) -> Result<f64> {
    if value.is_finite() && value > 0.0 {
        Ok(value)
    } else {
        Err(Error::InvalidParameter { name, value })
    }
}

impl ConverterParams {
    pub fn new(lr: f64, cr: f64, co: f64, ro: f64, n: f64, vin: f64, fs: f64) -> Result<Self> {
        let p = ConverterParams {
            lr: positive("Lr", lr)?,
            cr: positive("Cr", cr)?,
            co: positive("Co", co)?,
            ro: positive("Ro", ro)?,
            n: positive("N", n)?,
            vin: positive("Vin", vin)?,
            fs: positive("fs", fs)?,
        };
        let f_ratio = p.fs / p.resonant_frequency();
        if f_ratio <= 1.0 {
            return Err(Error::BelowResonance { f_ratio });
        }
        Ok(p)
    }

    /// Inverse design mapping from (F, Qe, fr, N, Ro, Co, Vin).
    pub fn from_design(spec: &DesignSpec) -> Result<Self> {
        let f_ratio = positive("F", spec.f_ratio)?;
        let qe = positive("Qe", spec.qe)?;
        let fr = positive("fr", spec.fr)?;
        let n = positive("N", spec.n)?;
        let ro = positive("Ro", spec.ro)?;
        if f_ratio <= 1.0 {
            return Err(Error::BelowResonance { f_ratio });
        }
        let zc = qe * reflected_resistance(ro, n);
        let omega_r = 2.0 * PI * fr;
        ConverterParams::new(
            zc / omega_r,
            1.0 / (zc * omega_r),
            spec.co,
            ro,
            n,
            spec.vin,
            f_ratio * fr,
        )
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }
    pub fn cr(&self) -> f64 {
        self.cr
    }
    pub fn co(&self) -> f64 {
        self.co
    }
    pub fn ro(&self) -> f64 {
        self.ro
    }
    pub fn n(&self) -> f64 {
        self.n
    }
    pub fn vin(&self) -> f64 {
        self.vin
    }
    pub fn fs(&self) -> f64 {
        self.fs
    }

    pub fn ts(&self) -> f64 {
        1.0 / self.fs
    }

    pub fn omega_r(&self) -> f64 {
        1.0 / (self.lr * self.cr).sqrt()
    }

    pub fn resonant_frequency(&self) -> f64 {
        self.omega_r() / (2.0 * PI)
    }

    pub fn zc(&self) -> f64 {
        (self.lr / self.cr).sqrt()
    }

    /// Output filter time constant Ro·Co.
    pub fn tau(&self) -> f64 {
        self.ro * self.co
    }

    /// Same converter at a different dc input voltage.
    pub fn with_vin(&self, vin: f64) -> Result<Self> {
        Ok(ConverterParams {
            vin: positive("Vin", vin)?,
            ..*self
        })
    }

    pub fn derived(&self) -> DerivedParams {
        derive_params(self)
    }

    pub fn helpers(&self) -> FilterHelpers {
        FilterHelpers::new(self)
    }
}

/// Design-form parameterization used by the F–Qe sweeps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DesignSpec {
    #[serde(rename = "F")]
    pub f_ratio: f64,
    #[serde(rename = "Qe")]
    pub qe: f64,
    pub fr: f64,
    #[serde(rename = "N")]
    pub n: f64,
    #[serde(rename = "Ro")]
    pub ro: f64,
    #[serde(rename = "Co")]
    pub co: f64,
    #[serde(rename = "Vin")]
    pub vin: f64,
}

/// Rectifier load reflected to the primary as seen by the fundamental.
pub fn reflected_resistance(ro: f64, n: f64) -> f64 {
    8.0 / (PI * PI) * ro / (n * n)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivedParams {
    pub omega_r: f64,
    pub fr: f64,
    pub zc: f64,
    pub ts: f64,
    pub f_ratio: f64,
    pub rac: f64,
    pub qe: f64,
}

pub fn derive_params(p: &ConverterParams) -> DerivedParams {
    let omega_r = p.omega_r();
    let fr = omega_r / (2.0 * PI);
    let zc = p.zc();
    let rac = reflected_resistance(p.ro, p.n);
    DerivedParams {
        omega_r,
        fr,
        zc,
        ts: 1.0 / p.fs,
        f_ratio: p.fs / fr,
        rac,
        qe: zc / rac,
    }
}

/// Tank and output state sampled at a period boundary, ordered `[iL, vc, vo]`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StateVector {
    #[serde(rename = "iL")]
    pub il: f64,
    pub vc: f64,
    pub vo: f64,
}

impl StateVector {
    pub fn new(il: f64, vc: f64, vo: f64) -> Self {
        StateVector { il, vc, vo }
    }

    pub fn to_vector(self) -> Vector3<f64> {
        Vector3::new(self.il, self.vc, self.vo)
    }

    pub fn from_vector(v: &Vector3<f64>) -> Self {
        StateVector::new(v[0], v[1], v[2])
    }

    pub fn is_finite(&self) -> bool {
        self.il.is_finite() && self.vc.is_finite() && self.vo.is_finite()
    }
}

/// Switching instants within one period: the two tank-current zero
/// crossings and the period itself.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubintervalTimes {
    t1: f64,
    t3: f64,
    ts: f64,
}

impl SubintervalTimes {
    pub fn new(t1: f64, t3: f64, ts: f64) -> Result<Self> {
        let ordered = t1.is_finite()
            && t3.is_finite()
            && ts.is_finite()
            && 0.0 < t1
            && t1 < 0.5 * ts
            && 0.5 * ts < t3
            && t3 < ts;
        if ordered {
            Ok(SubintervalTimes { t1, t3, ts })
        } else {
            Err(Error::InvalidTimes { t1, t3, ts })
        }
    }

    pub fn t1(&self) -> f64 {
        self.t1
    }
    pub fn t3(&self) -> f64 {
        self.t3
    }
    pub fn ts(&self) -> f64 {
        self.ts
    }
    pub fn half(&self) -> f64 {
        0.5 * self.ts
    }
}

/// Which of the output-filter helper functions to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HelperKind {
    G1,
    G2,
    G1Prime,
    G2Prime,
}

/// The output-filter helpers of the closed-form period map:
///
/// ```text
/// g1(t) = a·sin(ωr t) − ωr·cos(ωr t)      g1'(t) = dg1/d(ωr t)
/// g2(t) = a·sin(ωr t) + ωr·cos(ωr t)      g2'(t) = dg2/d(ωr t)
/// ```
///
/// with `a = 1/(Ro·Co)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterHelpers {
    pub a: f64,
    pub omega_r: f64,
    n: f64,
    co: f64,
}

impl FilterHelpers {
    pub fn new(p: &ConverterParams) -> Self {
        FilterHelpers {
            a: 1.0 / p.tau(),
            omega_r: p.omega_r(),
            n: p.n,
            co: p.co,
        }
    }

    pub fn g1(&self, t: f64) -> f64 {
        let (s, c) = (self.omega_r * t).sin_cos();
        self.a * s - self.omega_r * c
    }

    pub fn g2(&self, t: f64) -> f64 {
        let (s, c) = (self.omega_r * t).sin_cos();
        self.a * s + self.omega_r * c
    }

    pub fn g1_prime(&self, t: f64) -> f64 {
        let (s, c) = (self.omega_r * t).sin_cos();
        self.a * c + self.omega_r * s
    }

    pub fn g2_prime(&self, t: f64) -> f64 {
        let (s, c) = (self.omega_r * t).sin_cos();
        self.a * c - self.omega_r * s
    }

    pub fn eval(&self, kind: HelperKind, t: f64) -> Result<f64> {
        if !t.is_finite() {
            return Err(Error::NonFinite("helper argument"));
        }
        Ok(match kind {
            HelperKind::G1 => self.g1(t),
            HelperKind::G2 => self.g2(t),
            HelperKind::G1Prime => self.g1_prime(t),
            HelperKind::G2Prime => self.g2_prime(t),
        })
    }

    /// `G2 = a² + ωr²`.
    pub fn big_g2(&self) -> f64 {
        self.a * self.a + self.omega_r * self.omega_r
    }

    /// `G1 = −e^(−a·Ts) / (N·Co·G2)`.
    pub fn big_g1(&self, ts: f64) -> f64 {
        self.big_g1_unscaled() * (-self.a * ts).exp()
    }

    /// `G1` without its `e^(−a·Ts)` factor; the period map pairs this with
    /// `e^(−a·(Ts − t))` instead of `G1·e^(a·t)`.
    pub fn big_g1_unscaled(&self) -> f64 {
        -1.0 / (self.n * self.co * self.big_g2())
    }
}

pub fn helper_g(kind: HelperKind, t: f64, p: &ConverterParams) -> Result<f64> {
    FilterHelpers::new(p).eval(kind, t)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn experimental_design() -> ConverterParams {
        ConverterParams::new(164.8e-6, 16e-9, 100e-9, 10e3, 16.0, 8.4, 1.01 * 98e3).unwrap()
    }

    #[test]
    fn experimental_design_derived_values() {
        let d = derive_params(&experimental_design());
        assert!((d.zc - 101.4).abs() / 101.4 < 5e-3, "Zc = {}", d.zc);
        assert!((d.fr - 98.0e3).abs() / 98.0e3 < 5e-3, "fr = {}", d.fr);
        assert!((d.rac - 31.66).abs() < 0.01, "Rac = {}", d.rac);
        assert!((d.qe - 3.2).abs() < 0.01, "Qe = {}", d.qe);
    }

    #[test]
    fn unit_tank() {
        let p = ConverterParams::new(1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0).unwrap();
        let d = p.derived();
        assert_eq!(d.omega_r, 1.0);
        assert_eq!(d.zc, 1.0);
    }

    #[test]
    fn qe_two_paths_agree() {
        for p in [
            experimental_design(),
            ConverterParams::new(2e-4, 5e-8, 1e-6, 500.0, 3.0, 48.0, 6e4).unwrap(),
        ] {
            let d = p.derived();
            let direct = d.zc * PI * PI * p.n() * p.n() / (8.0 * p.ro());
            assert!((d.qe - direct).abs() <= 1e-12 * direct);
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(matches!(
            ConverterParams::new(-1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0),
            Err(Error::InvalidParameter { name: "Lr", .. })
        ));
        assert!(matches!(
            ConverterParams::new(1.0, 1.0, 1.0, 1.0, 1.0, f64::NAN, 1.0),
            Err(Error::InvalidParameter { name: "Vin", .. })
        ));
        // fr = 1/(2π) Hz, fs = 0.1 Hz is below resonance.
        assert!(matches!(
            ConverterParams::new(1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 0.1),
            Err(Error::BelowResonance { .. })
        ));
    }

    #[test]
    fn design_mapping_matches_experimental_design() {
        let spec = DesignSpec {
            f_ratio: 1.01,
            qe: 3.2,
            fr: 98e3,
            n: 16.0,
            ro: 10e3,
            co: 100e-9,
            vin: 8.4,
        };
        let p = ConverterParams::from_design(&spec).unwrap();
        assert!(
            (p.lr() - 164.8e-6).abs() / 164.8e-6 < 5e-3,
            "Lr = {}",
            p.lr()
        );
        assert!((p.cr() - 16e-9).abs() / 16e-9 < 5e-3, "Cr = {}", p.cr());
        let d = p.derived();
        assert!((d.f_ratio - 1.01).abs() < 1e-12);
        assert!((d.qe - 3.2).abs() < 1e-12);
    }

    #[test]
    fn helper_values_at_special_angles() {
        let h = experimental_design().helpers();
        assert_eq!(h.g1(0.0), -h.omega_r);
        assert_eq!(h.g2(0.0), h.omega_r);
        let quarter = 0.5 * PI / h.omega_r;
        assert!((h.g1(quarter) - h.a).abs() <= 1e-9 * h.omega_r);
        assert!(h.eval(HelperKind::G2, f64::INFINITY).is_err());
    }

    #[test]
    fn helper_derivatives_match_finite_differences() {
        let h = experimental_design().helpers();
        for &t in &[0.3e-6, 2.1e-6, 4.9e-6, 7.7e-6] {
            // derivative with respect to the angle ωr·t
            let dtheta = 1e-6;
            let dt = dtheta / h.omega_r;
            let fd1 = (h.g1(t + dt) - h.g1(t - dt)) / (2.0 * dtheta);
            let fd2 = (h.g2(t + dt) - h.g2(t - dt)) / (2.0 * dtheta);
            assert!(
                (fd1 - h.g1_prime(t)).abs() <= 1e-6 * h.g1_prime(t).abs().max(h.omega_r * 1e-3)
            );
            assert!(
                (fd2 - h.g2_prime(t)).abs() <= 1e-6 * h.g2_prime(t).abs().max(h.omega_r * 1e-3)
            );
        }
    }

    #[test]
    fn scale_consistency() {
        let p = experimental_design();
        let k = 3.7;
        let q = ConverterParams::new(
            p.lr() * k,
            p.cr() / k,
            p.co(),
            p.ro(),
            p.n(),
            p.vin(),
            p.fs(),
        )
        .unwrap();
        assert!((q.omega_r() - p.omega_r()).abs() <= 1e-12 * p.omega_r());
        assert!((q.zc() - k * p.zc()).abs() <= 1e-12 * q.zc());
    }

    #[test]
    fn serde_round_trip_uses_config_keys() {
        let p = experimental_design();
        let json = serde_json::to_string(&p).unwrap();
        assert!(json.contains("\"Lr\""));
        let back: ConverterParams = serde_json::from_str(&json).unwrap();
        assert_eq!(back, p);
    }
}
