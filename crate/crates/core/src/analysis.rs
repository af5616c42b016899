//! Design-space sweeps over `(F, Qe)`, model-versus-simulation resonance
//! error and the unity-gain design-region boundary.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{ConverterParams, DesignSpec};
use crate::small_signal::{
    as_resonance_frequency, as_transfer_function_or_reduced, build_full_model, evaluate_gain,
    evaluate_model_gain, log_space, FrequencyResponse, GainPoint, ResponseMethod, SmallSignalModel,
};
use crate::steady_state::{solve_cyclic_steady_state, OperatingPoint};
use crate::time_sim::{SimFidelity, Simulator};

/// Quantities held fixed while `F` and `Qe` vary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaseDesign {
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

impl Default for BaseDesign {
    fn default() -> Self {
        BaseDesign {
            fr: 100e3,
            n: 16.0,
            ro: 10e3,
            co: 100e-9,
            vin: 700.0,
        }
    }
}

impl BaseDesign {
    pub fn spec(&self, f_ratio: f64, qe: f64) -> DesignSpec {
        DesignSpec {
            f_ratio,
            qe,
            fr: self.fr,
            n: self.n,
            ro: self.ro,
            co: self.co,
            vin: self.vin,
        }
    }

    pub fn params(&self, f_ratio: f64, qe: f64) -> Result<ConverterParams> {
        ConverterParams::from_design(&self.spec(f_ratio, qe))
    }

    /// Ripple band searched for peaks: 100 Hz up to `min(10 kHz, fs/4)`.
    pub fn ripple_band(&self, f_ratio: f64) -> (f64, f64) {
        (100.0, (0.25 * f_ratio * self.fr).min(10e3))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid {
    #[serde(rename = "F")]
    pub f_ratios: Vec<f64>,
    #[serde(rename = "Qe")]
    pub qes: Vec<f64>,
    pub f_in: Vec<f64>,
    #[serde(default)]
    pub base: BaseDesign,
}

impl SweepGrid {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidGrid(msg));
        if self.f_ratios.is_empty() || self.qes.is_empty() || self.f_in.is_empty() {
            return bad("F, Qe and f_in lists must be non-empty".into());
        }
        if let Some(f) = self.f_ratios.iter().find(|f| !(**f > 1.0 && **f <= 2.0)) {
            return bad(format!("F = {f} outside (1, 2]"));
        }
        if let Some(q) = self.qes.iter().find(|q| !(**q > 0.0) || !q.is_finite()) {
            return bad(format!("Qe = {q} must be positive"));
        }
        let f_min = self.f_ratios.iter().copied().fold(f64::INFINITY, f64::min);
        let nyquist = 0.5 * f_min * self.base.fr;
        if let Some(f) = self.f_in.iter().find(|f| !(**f > 0.0 && **f < nyquist)) {
            return bad(format!(
                "f_in = {f} outside (0, {nyquist}) for the smallest F"
            ));
        }
        Ok(())
    }
}

/// Frequency response of one grid design, or why it could not be computed.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DesignResponse {
    #[serde(rename = "F")]
    pub f_ratio: f64,
    #[serde(rename = "Qe")]
    pub qe: f64,
    pub response: std::result::Result<FrequencyResponse, String>,
}

fn design_key(a: &DesignResponse, b: &DesignResponse) -> std::cmp::Ordering {
    a.f_ratio.total_cmp(&b.f_ratio).then(a.qe.total_cmp(&b.qe))
}

/// Response of one converter at the given ripple frequencies.
pub fn design_response(
    params: &ConverterParams,
    op: &OperatingPoint,
    freqs: &[f64],
    method: ResponseMethod,
    fidelity: SimFidelity,
) -> Result<FrequencyResponse> {
    match method {
        ResponseMethod::Simulation => {
            let sim = Simulator::from_operating_point(params, op, fidelity)?;
            let points = freqs
                .iter()
                .map(|&f| {
                    let g = sim.gain(f)?;
                    // report at the requested frequency; the injected one
                    // differs by the window alignment only
                    Ok(GainPoint::new(f, g.gain, g.dc_gain))
                })
                .collect::<Result<_>>()?;
            Ok(FrequencyResponse {
                method,
                dc_gain: sim.dc_gain(),
                points,
            })
        }
        _ => crate::small_signal::model_response(params, op, freqs, method),
    }
}

/// Evaluates every `(F, Qe)` design of the grid; failures are recorded per
/// design and the sweep continues. Output is sorted by `(F, Qe)`.
pub fn frequency_sweep(
    grid: &SweepGrid,
    method: ResponseMethod,
    fidelity: SimFidelity,
) -> Result<Vec<DesignResponse>> {
    grid.validate()?;
    let designs: Vec<(f64, f64)> = grid
        .f_ratios
        .iter()
        .flat_map(|&f| grid.qes.iter().map(move |&q| (f, q)))
        .collect();
    let mut out: Vec<DesignResponse> = designs
        .par_iter()
        .map(|&(f_ratio, qe)| {
            let response = grid
                .base
                .params(f_ratio, qe)
                .and_then(|p| {
                    let op = solve_cyclic_steady_state(&p, None)?;
                    design_response(&p, &op, &grid.f_in, method, fidelity)
                })
                .map_err(|e| e.to_string());
            if let Err(e) = &response {
                log::warn!("sweep point F = {f_ratio}, Qe = {qe} failed: {e}");
            }
            DesignResponse {
                f_ratio,
                qe,
                response,
            }
        })
        .collect();
    out.sort_by(design_key);
    Ok(out)
}

/// Signed percent error of the model resonance against the simulated one,
/// relative to the simulated value.
pub fn resonance_error(model_hz: f64, sim_hz: f64) -> f64 {
    (sim_hz - model_hz) / sim_hz * 100.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ResonanceComparison {
    pub model_hz: f64,
    pub sim_hz: f64,
    pub sim_gain_db: f64,
    pub sim_normalized_gain: f64,
    pub error_pct: f64,
}

/// Closed-form resonance against the simulated peak in `[f_lo, f_hi]`.
pub fn compare_resonance(
    params: &ConverterParams,
    op: &OperatingPoint,
    fidelity: SimFidelity,
    f_lo: f64,
    f_hi: f64,
) -> Result<ResonanceComparison> {
    let model_hz = as_resonance_frequency(params, op).formula_hz;
    let sim = Simulator::from_operating_point(params, op, fidelity)?;
    let peak = sim.find_resonance(f_lo, f_hi)?;
    Ok(ResonanceComparison {
        model_hz,
        sim_hz: peak.f_in,
        sim_gain_db: peak.gain_db,
        sim_normalized_gain: peak.normalized_gain,
        error_pct: resonance_error(model_hz, peak.f_in),
    })
}

/// Maximum of a smooth gain curve over `[f_lo, f_hi]`: logarithmic scan
/// with both endpoints, then golden-section refinement around the best
/// interior sample.
fn curve_peak(
    f_lo: f64,
    f_hi: f64,
    points: usize,
    gain: impl Fn(f64) -> Result<GainPoint>,
) -> Result<GainPoint> {
    let freqs = log_space(f_lo, f_hi, points);
    let scan: Vec<GainPoint> = freqs.iter().map(|&f| gain(f)).collect::<Result<_>>()?;
    let best = (0..scan.len())
        .max_by(|&i, &j| scan[i].normalized_gain.total_cmp(&scan[j].normalized_gain))
        .ok_or_else(|| Error::InvalidGrid("empty frequency scan".into()))?;
    if best == 0 || best + 1 == scan.len() {
        return Ok(scan[best]);
    }
    let (mut a, mut b) = (freqs[best - 1].ln(), freqs[best + 1].ln());
    let inv_phi = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut gc = gain(c.exp())?;
    let mut gd = gain(d.exp())?;
    while b - a > 1e-6 {
        if gc.normalized_gain > gd.normalized_gain {
            b = d;
            d = c;
            gd = gc;
            c = b - inv_phi * (b - a);
            gc = gain(c.exp())?;
        } else {
            a = c;
            c = d;
            gc = gd;
            d = a + inv_phi * (b - a);
            gd = gain(d.exp())?;
        }
    }
    Ok([gc, gd, scan[best]]
        .into_iter()
        .max_by(|x, y| x.normalized_gain.total_cmp(&y.normalized_gain))
        .unwrap_or(scan[best]))
}

/// Peak of the model response in `[f_lo, f_hi]`.
pub fn model_peak(
    params: &ConverterParams,
    op: &OperatingPoint,
    method: ResponseMethod,
    f_lo: f64,
    f_hi: f64,
) -> Result<GainPoint> {
    match method {
        ResponseMethod::Model => {
            let tf = as_transfer_function_or_reduced(params, op);
            curve_peak(f_lo, f_hi, 400, |f| evaluate_gain(&tf, f, op.dc_gain))
        }
        ResponseMethod::ModelFull => {
            let model: SmallSignalModel = build_full_model(params, op)?;
            curve_peak(f_lo, f_hi, 400, |f| evaluate_model_gain(&model, f))
        }
        ResponseMethod::Simulation => Err(Error::Parse("model_peak does not simulate".into())),
    }
}

/// Largest normalized gain of one design over its ripple band.
pub fn peak_normalized_gain(
    base: &BaseDesign,
    f_ratio: f64,
    qe: f64,
    method: ResponseMethod,
    fidelity: SimFidelity,
) -> Result<f64> {
    let p = base.params(f_ratio, qe)?;
    let op = solve_cyclic_steady_state(&p, None)?;
    let (f_lo, f_hi) = base.ripple_band(f_ratio);
    match method {
        ResponseMethod::Simulation => {
            Simulator::from_operating_point(&p, &op, fidelity)?.max_normalized_gain(f_lo, f_hi)
        }
        _ => Ok(model_peak(&p, &op, method, f_lo, f_hi)?.normalized_gain),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionPoint {
    #[serde(rename = "Qe")]
    pub qe: f64,
    #[serde(rename = "F_boundary")]
    pub f_boundary: f64,
}

/// Unity-gain boundary: above `F_boundary(Qe)` the peak normalized gain is
/// below one at every ripple frequency.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegionCurve {
    pub method: ResponseMethod,
    pub points: Vec<RegionPoint>,
    /// `(Qe, reason)` for grid values without a boundary.
    pub failures: Vec<(f64, String)>,
}

/// Bisection resolution on `F`.
pub const BOUNDARY_RESOLUTION: f64 = 1e-3;

/// Boundary `F` at one `Qe` by bisection on the peak normalized gain.
pub fn boundary_at(
    base: &BaseDesign,
    qe: f64,
    f_bounds: (f64, f64),
    method: ResponseMethod,
    fidelity: SimFidelity,
) -> Result<f64> {
    let (mut lo, mut hi) = f_bounds;
    if !(lo > 1.0 && hi > lo) {
        return Err(Error::InvalidGrid(format!(
            "F bounds ({lo}, {hi}) must satisfy 1 < lo < hi"
        )));
    }
    let peak = |f: f64| peak_normalized_gain(base, f, qe, method, fidelity);
    let (g_lo, g_hi) = (peak(lo)?, peak(hi)?);
    if !(g_lo > 1.0 && g_hi < 1.0) {
        return Err(Error::BoundaryOutsideBounds {
            qe,
            f_lo: lo,
            f_hi: hi,
            gain_lo: g_lo,
            gain_hi: g_hi,
        });
    }
    let mut samples = vec![(lo, g_lo), (hi, g_hi)];
    while hi - lo > BOUNDARY_RESOLUTION {
        let mid = 0.5 * (lo + hi);
        let g = peak(mid)?;
        samples.push((mid, g));
        if g > 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    samples.sort_by(|a, b| a.0.total_cmp(&b.0));
    if samples.windows(2).any(|w| w[1].1 > w[0].1) {
        log::warn!(
            "peak gain not monotone in F at Qe = {qe}; boundary bisection may be unreliable"
        );
    }
    Ok(0.5 * (lo + hi))
}

pub fn design_region_boundary(
    base: &BaseDesign,
    qe_grid: &[f64],
    f_bounds: (f64, f64),
    method: ResponseMethod,
    fidelity: SimFidelity,
) -> Result<RegionCurve> {
    if qe_grid.is_empty() || qe_grid.iter().any(|q| !(*q > 0.0)) {
        return Err(Error::InvalidGrid(
            "Qe grid must be non-empty and positive".into(),
        ));
    }
    let results: Vec<(f64, Result<f64>)> = qe_grid
        .par_iter()
        .map(|&qe| (qe, boundary_at(base, qe, f_bounds, method, fidelity)))
        .collect();
    let mut points = Vec::new();
    let mut failures = Vec::new();
    for (qe, r) in results {
        match r {
            Ok(f_boundary) => points.push(RegionPoint { qe, f_boundary }),
            Err(e) => failures.push((qe, e.to_string())),
        }
    }
    points.sort_by(|a, b| a.qe.total_cmp(&b.qe));
    failures.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(RegionCurve {
        method,
        points,
        failures,
    })
}
