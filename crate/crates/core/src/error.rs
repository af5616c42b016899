use std::path::PathBuf;

use thiserror::Error;

/// Which half of the switching period a zero crossing was searched in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Half {
    First,
    Second,
}

impl std::fmt::Display for Half {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Half::First => write!(f, "first"),
            Half::Second => write!(f, "second"),
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("parameter `{name}` must be finite and strictly positive, got {value}")]
    InvalidParameter { name: &'static str, value: f64 },

    #[error("below-resonance operation unsupported: F = fs/fr = {f_ratio} must exceed 1")]
    BelowResonance { f_ratio: f64 },

    #[error("negative propagation interval dt = {0}")]
    NegativeDuration(f64),

    #[error("non-finite value for `{0}`")]
    NonFinite(&'static str),

    #[error("subinterval times violate 0 < T1 < Ts/2 < T3 < Ts: T1 = {t1}, T3 = {t3}, Ts = {ts}")]
    InvalidTimes { t1: f64, t3: f64, ts: f64 },

    #[error("steady-state solver did not converge after {iterations} iterations (best residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("steady-state iterate left the feasible timing box and could not be projected back")]
    TimesOutOfOrder,

    #[error("degenerate zero-crossing slope f'_{which} = {value:e} (normalized {normalized:e})")]
    DegenerateCrossingSlope {
        which: &'static str,
        value: f64,
        normalized: f64,
    },

    #[error(
        "ripple frequency {f_in} Hz is not below the period-map Nyquist frequency {nyquist} Hz"
    )]
    AboveNyquist { f_in: f64, nyquist: f64 },

    #[error("ripple frequency must be positive, got {0}")]
    NonPositiveFrequency(f64),

    #[error("no tank-current zero crossing found in the {half} half of period {period}; operating mode outside the four-configuration sequence")]
    NoZeroCrossing { period: usize, half: Half },

    #[error("measurement window spans {cycles} ripple cycles, which is not an integer")]
    NonIntegerWindow { cycles: f64 },

    #[error("no resonance in range [{f_lo}, {f_hi}] Hz (gain is monotone)")]
    NoResonance { f_lo: f64, f_hi: f64 },

    #[error("unity-gain boundary for Qe = {qe} is outside F bounds [{f_lo}, {f_hi}] (peak gains {gain_lo}, {gain_hi})")]
    BoundaryOutsideBounds {
        qe: f64,
        f_lo: f64,
        f_hi: f64,
        gain_lo: f64,
        gain_hi: f64,
    },

    #[error("invalid sweep grid: {0}")]
    InvalidGrid(String),

    #[error("invalid ripple specification: {0}")]
    InvalidRipple(String),

    #[error("unknown configuration key `{0}`")]
    UnknownKey(String),

    #[error("configuration is missing required keys: {}", .0.join(", "))]
    MissingKeys(Vec<String>),

    #[error(
        "configuration mixes the physical form (Lr, Cr, ...) and the design form (F, Qe, fr, ...)"
    )]
    ConflictingForms,

    #[error("configuration value for `{key}` is not a number")]
    NotANumber { key: String },

    #[error("cannot parse configuration: {0}")]
    Parse(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
