//! Z-spectrum data model, preprocessing and model-free CEST metrics.
//!
//! Offsets are stored in ppm, which is how scanners report them. Every
//! computation that mixes an offset with the saturation amplitude converts
//! both to rad/s first through a [`FieldContext`].

use std::collections::BTreeMap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{CestError, Result};
use crate::spline::NaturalCubicSpline;

/// Two offsets closer than this (ppm) are treated as the same grid point.
pub const GRID_MATCH_TOL_PPM: f64 = 1e-9;
/// Z values at or below this are rejected by the inverse metrics.
pub const ZERO_SIGNAL_THRESHOLD: f64 = 1e-9;
/// Default gyromagnetic ratio of 1H over 2 pi, in Hz/T.
pub const GAMMA_BAR_1H: f64 = 42.577e6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldContext {
    /// Static field strength in tesla.
    pub b0: f64,
    /// Gyromagnetic ratio divided by 2 pi, in Hz/T.
    pub gamma_bar: f64,
}

impl FieldContext {
    pub fn new(b0: f64) -> Result<Self> {
        Self::with_gamma(b0, GAMMA_BAR_1H)
    }

    pub fn with_gamma(b0: f64, gamma_bar: f64) -> Result<Self> {
        if !(b0 > 0.0 && b0.is_finite()) {
            return Err(CestError::InvalidConfig(format!("B0 must be positive, got {b0}")));
        }
        if !(gamma_bar > 0.0 && gamma_bar.is_finite()) {
            return Err(CestError::InvalidConfig(format!(
                "gamma_bar must be positive, got {gamma_bar}"
            )));
        }
        Ok(Self { b0, gamma_bar })
    }

    /// rad/s per ppm at this field.
    pub fn radps_per_ppm(&self) -> f64 {
        2.0 * PI * self.gamma_bar * self.b0 * 1e-6
    }
}

impl Default for FieldContext {
    /// 9.4 T preclinical scanner.
    fn default() -> Self {
        Self {
            b0: 9.4,
            gamma_bar: GAMMA_BAR_1H,
        }
    }
}

pub fn ppm_to_radps(offset_ppm: f64, ctx: &FieldContext) -> f64 {
    2.0 * PI * ctx.gamma_bar * ctx.b0 * offset_ppm * 1e-6
}

/// Saturation amplitude omega1 = gamma * B1 for B1 given in microtesla.
pub fn b1_to_radps(b1_microtesla: f64, ctx: &FieldContext) -> Result<f64> {
    if !(b1_microtesla > 0.0) {
        return Err(CestError::NonPositiveAmplitude(b1_microtesla));
    }
    Ok(2.0 * PI * ctx.gamma_bar * b1_microtesla * 1e-6)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    offsets_ppm: Vec<f64>,
    z: Vec<f64>,
    b1: f64,
}

impl Spectrum {
    pub fn new(offsets_ppm: Vec<f64>, z: Vec<f64>, b1: f64) -> Result<Self> {
        if offsets_ppm.len() != z.len() {
            return Err(CestError::LengthMismatch {
                expected: offsets_ppm.len(),
                got: z.len(),
            });
        }
        if offsets_ppm.len() < 3 {
            return Err(CestError::InvalidSpectrum(format!(
                "need at least 3 offsets, got {}",
                offsets_ppm.len()
            )));
        }
        if offsets_ppm.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(CestError::InvalidSpectrum(
                "offsets must be strictly increasing".into(),
            ));
        }
        if z.iter().chain(&offsets_ppm).any(|v| !v.is_finite()) {
            return Err(CestError::InvalidSpectrum("non-finite value".into()));
        }
        if !(b1 > 0.0) {
            return Err(CestError::NonPositiveAmplitude(b1));
        }
        Ok(Self { offsets_ppm, z, b1 })
    }

    pub fn offsets_ppm(&self) -> &[f64] {
        &self.offsets_ppm
    }

    pub fn z(&self) -> &[f64] {
        &self.z
    }

    /// Saturation amplitude in microtesla.
    pub fn b1(&self) -> f64 {
        self.b1
    }

    pub fn len(&self) -> usize {
        self.z.len()
    }

    pub fn is_empty(&self) -> bool {
        self.z.is_empty()
    }

    fn spline(&self) -> NaturalCubicSpline {
        NaturalCubicSpline::new(&self.offsets_ppm, &self.z).expect("spectrum invariants hold")
    }

    fn grid_index(&self, offset: f64) -> Option<usize> {
        let i = self.offsets_ppm.partition_point(|&o| o < offset - GRID_MATCH_TOL_PPM);
        (i < self.len() && (self.offsets_ppm[i] - offset).abs() < GRID_MATCH_TOL_PPM).then_some(i)
    }
}

/// Spectra of one voxel (or phantom pixel) acquired at several B1 amplitudes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumSet {
    spectra: Vec<Spectrum>,
    /// Ground-truth concentrations (solute name to mM), if known.
    pub label: Option<BTreeMap<String, f64>>,
}

impl SpectrumSet {
    pub fn new(spectra: Vec<Spectrum>, label: Option<BTreeMap<String, f64>>) -> Result<Self> {
        let first = spectra
            .first()
            .ok_or_else(|| CestError::InvalidSpectrum("empty spectrum set".into()))?;
        for s in &spectra[1..] {
            let same_grid = s.offsets_ppm.len() == first.offsets_ppm.len()
                && s.offsets_ppm
                    .iter()
                    .zip(&first.offsets_ppm)
                    .all(|(a, b)| (a - b).abs() < GRID_MATCH_TOL_PPM);
            if !same_grid {
                return Err(CestError::GridMismatch(
                    "spectra in a set must share one offset grid".into(),
                ));
            }
        }
        for (i, a) in spectra.iter().enumerate() {
            if spectra[i + 1..].iter().any(|b| b.b1 == a.b1) {
                return Err(CestError::InvalidSpectrum(format!(
                    "duplicate B1 value {} uT in set",
                    a.b1
                )));
            }
        }
        Ok(Self { spectra, label })
    }

    pub fn spectra(&self) -> &[Spectrum] {
        &self.spectra
    }

    pub fn offsets_ppm(&self) -> &[f64] {
        self.spectra[0].offsets_ppm()
    }

    pub fn b1_values(&self) -> Vec<f64> {
        self.spectra.iter().map(Spectrum::b1).collect()
    }

    /// The same spectra with the label removed.
    pub fn unlabeled(&self) -> Self {
        Self {
            spectra: self.spectra.clone(),
            label: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MetricKind {
    Mtr,
    MtrAsym,
    MtrRex,
    /// MTR_Rex scaled by dw^2 / (dw^2 + w1^2); the data side of the MTR_Rex model.
    MtrRexLhs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricCurve {
    pub offsets_ppm: Vec<f64>,
    pub values: Vec<f64>,
    pub kind: MetricKind,
}

/// Divides a raw signal by its value at `ref_offset_ppm`, which must be a sampled offset.
pub fn normalize(raw_signal: &[(f64, f64)], ref_offset_ppm: f64, b1: f64) -> Result<Spectrum> {
    let mut points = raw_signal.to_vec();
    points.sort_by(|a, b| a.0.total_cmp(&b.0));
    let reference = points
        .iter()
        .find(|(o, _)| (o - ref_offset_ppm).abs() < GRID_MATCH_TOL_PPM)
        .map(|&(_, s)| s)
        .ok_or(CestError::MissingReference(ref_offset_ppm))?;
    if !(reference > 0.0) {
        return Err(CestError::NonPositiveReference(reference));
    }
    let (offsets, z) = points.iter().map(|&(o, s)| (o, s / reference)).unzip();
    Spectrum::new(offsets, z, b1)
}

pub const DEFAULT_B0_WINDOW_PPM: f64 = 1.0;
const B0_RESAMPLING_FACTOR: f64 = 100.0;

#[derive(Debug, Clone, PartialEq)]
pub struct B0Correction {
    pub spectrum: Spectrum,
    /// Estimated water offset; subtracted from the original offsets.
    pub shift_ppm: f64,
    /// Grid indices whose corrected value needed data beyond the sampled range and
    /// were clamped to the boundary value of the spline.
    pub clamped: Vec<usize>,
}

/// Re-centres a spectrum on the water resonance.
///
/// The minimum of a natural cubic spline is located by dense resampling within
/// `search_window_ppm` of the discrete minimum, and the spectrum is re-sampled on
/// its original grid after removing that shift.
pub fn b0_correct(s: &Spectrum, search_window_ppm: f64) -> Result<B0Correction> {
    let x = s.offsets_ppm();
    let n = x.len();
    let span = x[n - 1] - x[0];
    if !(search_window_ppm > 0.0 && search_window_ppm <= span / 2.0) {
        return Err(CestError::InvalidConfig(format!(
            "search window {search_window_ppm} ppm must be positive and at most half the span ({} ppm)",
            span / 2.0
        )));
    }
    let argmin = s
        .z
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .expect("non-empty");
    if argmin == 0 || argmin == n - 1 {
        return Err(CestError::EdgeMinimum);
    }

    let spline = s.spline();
    let center = x[argmin];
    let step = span / (n - 1) as f64 / B0_RESAMPLING_FACTOR;
    let half = (search_window_ppm / step).round() as i64;
    let mut best = (center, spline.eval(center));
    for j in -half..=half {
        let t = center + j as f64 * step;
        if t < x[0] || t > x[n - 1] {
            continue;
        }
        let v = spline.eval(t);
        if v < best.1 {
            best = (t, v);
        }
    }
    let shift = best.0;

    let mut clamped = Vec::new();
    let z = x
        .iter()
        .enumerate()
        .map(|(i, &xi)| {
            let t = xi + shift;
            if t < x[0] || t > x[n - 1] {
                clamped.push(i);
            }
            spline.eval(t.clamp(x[0], x[n - 1]))
        })
        .collect();
    Ok(B0Correction {
        spectrum: Spectrum::new(x.to_vec(), z, s.b1)?,
        shift_ppm: shift,
        clamped,
    })
}

pub fn mtr(s: &Spectrum) -> MetricCurve {
    MetricCurve {
        offsets_ppm: s.offsets_ppm.clone(),
        values: s.z.iter().map(|z| 1.0 - z).collect(),
        kind: MetricKind::Mtr,
    }
}

/// Z at positive offsets paired with Z at the mirrored negative offsets.
fn mirrored_pairs(s: &Spectrum) -> Result<Vec<(f64, f64, f64)>> {
    let x = s.offsets_ppm();
    let lo = x[0];
    let mut spline = None;
    let mut out = Vec::new();
    for (i, &offset) in x.iter().enumerate() {
        if offset <= GRID_MATCH_TOL_PPM {
            continue;
        }
        let target = -offset;
        let mirrored = match s.grid_index(target) {
            Some(j) => s.z[j],
            None => {
                if target < lo - GRID_MATCH_TOL_PPM {
                    return Err(CestError::AsymmetricSupport(offset));
                }
                spline.get_or_insert_with(|| s.spline()).eval(target)
            }
        };
        out.push((offset, s.z[i], mirrored));
    }
    Ok(out)
}

/// Z(-dw) - Z(dw) for every positive sampled offset.
pub fn mtr_asym(s: &Spectrum) -> Result<MetricCurve> {
    let (offsets_ppm, values) = mirrored_pairs(s)?
        .into_iter()
        .map(|(o, zp, zn)| (o, zn - zp))
        .unzip();
    Ok(MetricCurve {
        offsets_ppm,
        values,
        kind: MetricKind::MtrAsym,
    })
}

/// 1/Z(dw) - 1/Z(-dw) for every positive sampled offset.
pub fn mtr_rex(s: &Spectrum) -> Result<MetricCurve> {
    let pairs = mirrored_pairs(s)?;
    let mut offsets_ppm = Vec::with_capacity(pairs.len());
    let mut values = Vec::with_capacity(pairs.len());
    for (o, zp, zn) in pairs {
        if zp <= ZERO_SIGNAL_THRESHOLD {
            return Err(CestError::ZeroSignal {
                offset_ppm: o,
                value: zp,
            });
        }
        if zn <= ZERO_SIGNAL_THRESHOLD {
            return Err(CestError::ZeroSignal {
                offset_ppm: -o,
                value: zn,
            });
        }
        offsets_ppm.push(o);
        values.push(1.0 / zp - 1.0 / zn);
    }
    Ok(MetricCurve {
        offsets_ppm,
        values,
        kind: MetricKind::MtrRex,
    })
}

/// Spillover factor dw^2 / (dw^2 + w1^2) that turns MTR_Rex into the summed exchange rate.
pub fn spillover_factor(offset_ppm: f64, omega1: f64, ctx: &FieldContext) -> f64 {
    let dw = ppm_to_radps(offset_ppm, ctx);
    dw * dw / (dw * dw + omega1 * omega1)
}

pub fn mtr_rex_lhs(s: &Spectrum, ctx: &FieldContext) -> Result<MetricCurve> {
    let omega1 = b1_to_radps(s.b1, ctx)?;
    let mut curve = mtr_rex(s)?;
    for (v, &o) in curve.values.iter_mut().zip(&curve.offsets_ppm) {
        *v *= spillover_factor(o, omega1, ctx);
    }
    curve.kind = MetricKind::MtrRexLhs;
    Ok(curve)
}
