//! Physical models, their parameter layouts and box bounds.
//!
//! A [`ModelConfig`] (JSON) names the model, the pools and, for every model
//! parameter, a centre/deviation box and whether it is fitted. Compiling it
//! yields a [`ModelProblem`], which maps the vector of fitted parameters to model
//! curves and their Jacobian. Fixed parameters stay at their configured centre.

pub mod exchange;
pub mod lorentzian;

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{CestError, Result};
use crate::spectrum::{
    b1_to_radps, mtr, mtr_rex_lhs, ppm_to_radps, FieldContext, SpectrumSet, GRID_MATCH_TOL_PPM,
};

pub use exchange::{
    gamma_sq_over4, mtr_rex_forward, r_ex, r_ex_at, z_forward, PoolParams, ZModelParams,
};
pub use lorentzian::{area_under_curve, lorentzian_forward, LorentzianParams, LorentzianPool};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelKind {
    #[serde(rename = "lorentzian")]
    Lorentzian,
    #[serde(rename = "z")]
    AnalyticalZ,
    #[serde(rename = "mtrrex")]
    MtrRex,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [ModelKind::Lorentzian, ModelKind::AnalyticalZ, ModelKind::MtrRex];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Lorentzian => "lorentzian",
            ModelKind::AnalyticalZ => "z",
            ModelKind::MtrRex => "mtrrex",
        }
    }

    /// Per-pool parameter names in layout order.
    pub fn pool_parameters(self) -> &'static [&'static str] {
        match self {
            ModelKind::Lorentzian => &["amplitude", "gamma_sq", "d_omega_ppm"],
            ModelKind::AnalyticalZ | ModelKind::MtrRex => &["f_over_r1a", "k", "r2", "d_omega_ppm"],
        }
    }

    fn has_water_ratio(self) -> bool {
        !matches!(self, ModelKind::Lorentzian)
    }

    /// Number of entries in the full parameter vector for `pools` pools.
    pub fn layout_len(self, pools: usize) -> usize {
        usize::from(self.has_water_ratio()) + pools * self.pool_parameters().len()
    }

    /// Flattens a parameter record into the full layout vector.
    pub fn flatten(self, params: &ModelParams) -> Result<Vec<f64>> {
        match (self, params) {
            (ModelKind::Lorentzian, ModelParams::Lorentzian(p)) => Ok(p
                .pools
                .iter()
                .flat_map(|q| [q.amplitude, q.gamma_sq, q.d_omega_ppm])
                .collect()),
            (ModelKind::AnalyticalZ | ModelKind::MtrRex, ModelParams::Exchange(p)) => {
                let mut v = Vec::with_capacity(self.layout_len(p.pools.len()));
                v.push(p.r2a_over_r1a);
                for q in &p.pools {
                    v.extend([q.f_over_r1a, q.k, q.r2, q.d_omega_ppm]);
                }
                Ok(v)
            }
            _ => Err(CestError::InvalidConfig(format!(
                "parameter record does not belong to the {} model",
                self.name()
            ))),
        }
    }

    pub fn unflatten(self, v: &[f64]) -> Result<ModelParams> {
        let per = self.pool_parameters().len();
        let head = usize::from(self.has_water_ratio());
        if v.len() < head || (v.len() - head) % per != 0 {
            return Err(CestError::LengthMismatch {
                expected: self.layout_len((v.len().saturating_sub(head)) / per),
                got: v.len(),
            });
        }
        Ok(match self {
            ModelKind::Lorentzian => ModelParams::Lorentzian(LorentzianParams {
                pools: v
                    .chunks(per)
                    .map(|c| LorentzianPool {
                        amplitude: c[0],
                        gamma_sq: c[1],
                        d_omega_ppm: c[2],
                    })
                    .collect(),
            }),
            _ => ModelParams::Exchange(ZModelParams {
                r2a_over_r1a: v[0],
                pools: v[1..]
                    .chunks(per)
                    .map(|c| PoolParams {
                        f_over_r1a: c[0],
                        k: c[1],
                        r2: c[2],
                        d_omega_ppm: c[3],
                    })
                    .collect(),
            }),
        })
    }

    /// Index, in the full layout, of the quantity used as CEST contrast for a pool
    /// (the amplitude or f/R1a).
    pub fn contrast_index(self, pool: usize) -> usize {
        usize::from(self.has_water_ratio()) + pool * self.pool_parameters().len()
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = CestError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lorentzian" => Ok(ModelKind::Lorentzian),
            "z" => Ok(ModelKind::AnalyticalZ),
            "mtrrex" => Ok(ModelKind::MtrRex),
            other => Err(CestError::InvalidConfig(format!("unknown model '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ModelParams {
    Lorentzian(LorentzianParams),
    Exchange(ZModelParams),
}

/// Box `[center - deviation, center + deviation]` over the fitted parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamBounds {
    pub center: Vec<f64>,
    pub deviation: Vec<f64>,
    pub names: Vec<String>,
}

impl ParamBounds {
    pub fn new(center: Vec<f64>, deviation: Vec<f64>, names: Vec<String>) -> Result<Self> {
        if center.len() != deviation.len() || center.len() != names.len() {
            return Err(CestError::InvalidBounds(format!(
                "{} centres, {} deviations, {} names",
                center.len(),
                deviation.len(),
                names.len()
            )));
        }
        if let Some(i) = deviation.iter().position(|d| !(*d >= 0.0 && d.is_finite())) {
            return Err(CestError::InvalidBounds(format!(
                "deviation of '{}' must be finite and non-negative",
                names[i]
            )));
        }
        if let Some(i) = center.iter().position(|c| !c.is_finite()) {
            return Err(CestError::InvalidBounds(format!("centre of '{}' is not finite", names[i])));
        }
        Ok(Self {
            center,
            deviation,
            names,
        })
    }

    pub fn len(&self) -> usize {
        self.center.len()
    }

    pub fn is_empty(&self) -> bool {
        self.center.is_empty()
    }

    pub fn lower(&self) -> Vec<f64> {
        self.center.iter().zip(&self.deviation).map(|(c, d)| c - d).collect()
    }

    pub fn upper(&self) -> Vec<f64> {
        self.center.iter().zip(&self.deviation).map(|(c, d)| c + d).collect()
    }

    pub fn contains(&self, x: &[f64], slack: f64) -> bool {
        x.len() == self.len()
            && x.iter()
                .zip(self.center.iter().zip(&self.deviation))
                .all(|(v, (c, d))| *v >= c - d - slack && *v <= c + d + slack)
    }

    pub fn clamp(&self, x: &mut [f64]) {
        for (v, (c, d)) in x.iter_mut().zip(self.center.iter().zip(&self.deviation)) {
            *v = v.clamp(c - d, c + d);
        }
    }
}

/// One parameter's box and whether it is fitted. Fixed parameters sit at `center`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamSetting {
    pub center: f64,
    #[serde(default)]
    pub deviation: f64,
    #[serde(default = "default_true")]
    pub fitted: bool,
}

fn default_true() -> bool {
    true
}

impl ParamSetting {
    pub fn fitted(lower: f64, upper: f64) -> Self {
        Self {
            center: 0.5 * (lower + upper),
            deviation: 0.5 * (upper - lower),
            fitted: true,
        }
    }

    pub fn fixed(value: f64) -> Self {
        Self {
            center: value,
            deviation: 0.0,
            fitted: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolConfig {
    pub name: String,
    pub params: BTreeMap<String, ParamSetting>,
}

/// Model and bounds configuration; see the README for the JSON schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub model: ModelKind,
    #[serde(default)]
    pub field: FieldContext,
    /// Water R2/R1 ratio; required by the exchange models.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r2a_over_r1a: Option<ParamSetting>,
    pub pools: Vec<PoolConfig>,
    /// MTR_Rex data closer to water than this (ppm) are excluded.
    #[serde(default)]
    pub min_offset_ppm: f64,
    /// B1 (uT) of the spectrum used by single-curve models; defaults to the lowest.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b1_select: Option<f64>,
}

impl ModelConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CestError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| CestError::parse(path, e.to_string()))
    }

    /// Full-layout (name, setting) pairs.
    pub fn layout(&self) -> Result<Vec<(String, ParamSetting)>> {
        let mut out = Vec::new();
        if self.model.has_water_ratio() {
            let water = self.r2a_over_r1a.ok_or_else(|| {
                CestError::InvalidConfig(format!("the {} model needs r2a_over_r1a", self.model))
            })?;
            out.push(("r2a_over_r1a".to_string(), water));
        }
        for pool in &self.pools {
            for &name in self.model.pool_parameters() {
                let setting = pool.params.get(name).ok_or_else(|| {
                    CestError::InvalidConfig(format!("pool '{}' is missing '{name}'", pool.name))
                })?;
                out.push((format!("{}.{name}", pool.name), *setting));
            }
            if let Some(extra) = pool
                .params
                .keys()
                .find(|k| !self.model.pool_parameters().contains(&k.as_str()))
            {
                return Err(CestError::InvalidConfig(format!(
                    "pool '{}' has unknown parameter '{extra}' for the {} model",
                    pool.name, self.model
                )));
            }
        }
        Ok(out)
    }

    pub fn pool_names(&self) -> Vec<String> {
        self.pools.iter().map(|p| p.name.clone()).collect()
    }

    pub fn compile(&self) -> Result<ModelProblem> {
        ModelProblem::new(self.clone())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum JacobianMode {
    Analytic,
    FiniteDifference,
}

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    /// `self^T * v`.
    pub fn transpose_mul(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        for (row, &vr) in self.data.chunks(self.cols).zip(v) {
            for (o, &a) in out.iter_mut().zip(row) {
                *o += a * vr;
            }
        }
        out
    }
}

/// Sampling of the model outputs: one curve per saturation amplitude, each over
/// the same offsets. Outputs are laid out curve after curve.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelInputs {
    pub offsets_ppm: Vec<f64>,
    /// omega1 (rad/s) of each curve; ignored by the Lorentzian model.
    pub omega1: Vec<f64>,
}

impl ModelInputs {
    pub fn output_len(&self) -> usize {
        self.offsets_ppm.len() * self.omega1.len()
    }
}

/// A compiled model configuration.
#[derive(Debug, Clone)]
pub struct ModelProblem {
    config: ModelConfig,
    template: Vec<f64>,
    fitted: Vec<usize>,
    bounds: ParamBounds,
    default_jacobian: JacobianMode,
}

pub const FD_RELATIVE_STEP: f64 = 1e-6;

impl ModelProblem {
    pub fn new(config: ModelConfig) -> Result<Self> {
        if config.pools.is_empty() {
            return Err(CestError::InvalidConfig("at least one pool is required".into()));
        }
        let layout = config.layout()?;
        let mut fitted = Vec::new();
        let (mut center, mut deviation, mut names) = (Vec::new(), Vec::new(), Vec::new());
        for (i, (name, s)) in layout.iter().enumerate() {
            if s.fitted {
                fitted.push(i);
                center.push(s.center);
                deviation.push(s.deviation);
                names.push(name.clone());
            }
        }
        if fitted.is_empty() {
            return Err(CestError::InvalidConfig("no parameter is fitted".into()));
        }
        let bounds = ParamBounds::new(center, deviation, names)?;
        let problem = Self {
            template: layout.iter().map(|(_, s)| s.center).collect(),
            fitted,
            bounds,
            default_jacobian: match config.model {
                ModelKind::Lorentzian => JacobianMode::Analytic,
                _ => JacobianMode::FiniteDifference,
            },
            config,
        };
        problem.check_physical_box()?;
        Ok(problem)
    }

    fn check_physical_box(&self) -> Result<()> {
        let layout = self.config.layout()?;
        for (name, s) in &layout {
            let (lo, hi) = if s.fitted {
                (s.center - s.deviation, s.center + s.deviation)
            } else {
                (s.center, s.center)
            };
            let field = name.rsplit('.').next().unwrap_or(name);
            let ok = match field {
                "k" => lo > 0.0,
                "f_over_r1a" | "r2" | "r2a_over_r1a" | "gamma_sq" => lo >= 0.0,
                "amplitude" => lo >= 0.0 && hi <= 1.0,
                _ => true,
            };
            if !ok {
                return Err(CestError::InvalidBounds(format!(
                    "box [{lo}, {hi}] for '{name}' admits physically invalid values"
                )));
            }
        }
        let shifts: Vec<f64> = layout
            .iter()
            .filter(|(n, _)| n.ends_with(".d_omega_ppm"))
            .map(|(_, s)| s.center)
            .collect();
        for (i, a) in shifts.iter().enumerate() {
            if shifts[i + 1..].iter().any(|b| b == a) {
                return Err(CestError::InvalidConfig(format!(
                    "two pools share the chemical shift {a} ppm"
                )));
            }
        }
        Ok(())
    }

    pub fn kind(&self) -> ModelKind {
        self.config.model
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn field(&self) -> &FieldContext {
        &self.config.field
    }

    pub fn bounds(&self) -> &ParamBounds {
        &self.bounds
    }

    pub fn pool_count(&self) -> usize {
        self.config.pools.len()
    }

    pub fn default_jacobian(&self) -> JacobianMode {
        self.default_jacobian
    }

    /// Full layout vector with the fitted entries replaced.
    pub fn expand(&self, fitted: &[f64]) -> Vec<f64> {
        let mut full = self.template.clone();
        for (&i, &v) in self.fitted.iter().zip(fitted) {
            full[i] = v;
        }
        full
    }

    pub fn params(&self, fitted: &[f64]) -> ModelParams {
        self.config
            .model
            .unflatten(&self.expand(fitted))
            .expect("layout length is consistent")
    }

    /// Position of a full-layout index among the fitted parameters.
    pub fn fitted_position(&self, full_index: usize) -> Option<usize> {
        self.fitted.iter().position(|&i| i == full_index)
    }

    /// Contrast (amplitude or f/R1a) of a pool read from a fitted vector.
    pub fn contrast(&self, fitted: &[f64], pool: usize) -> Result<f64> {
        if pool >= self.pool_count() {
            return Err(CestError::IndexOutOfRange {
                index: pool,
                len: self.pool_count(),
            });
        }
        Ok(self.expand(fitted)[self.config.model.contrast_index(pool)])
    }

    pub fn evaluate(&self, fitted: &[f64], inputs: &ModelInputs) -> Vec<f64> {
        self.evaluate_full(&self.expand(fitted), inputs)
    }

    fn evaluate_full(&self, full: &[f64], inputs: &ModelInputs) -> Vec<f64> {
        let ctx = &self.config.field;
        match self.config.model.unflatten(full).expect("layout") {
            ModelParams::Lorentzian(p) => {
                let curve = lorentzian_forward(&p, &inputs.offsets_ppm);
                inputs.omega1.iter().flat_map(|_| curve.iter().copied()).collect()
            }
            ModelParams::Exchange(p) => {
                let forward = match self.config.model {
                    ModelKind::MtrRex => mtr_rex_forward,
                    _ => z_forward,
                };
                inputs
                    .omega1
                    .iter()
                    .flat_map(|&w1| forward(&p, &inputs.offsets_ppm, w1, ctx))
                    .collect()
            }
        }
    }

    /// Jacobian of the model outputs with respect to the fitted parameters.
    pub fn jacobian(&self, fitted: &[f64], inputs: &ModelInputs, mode: JacobianMode) -> Matrix {
        match mode {
            JacobianMode::Analytic => self.analytic_jacobian(fitted, inputs),
            JacobianMode::FiniteDifference => self.fd_jacobian(fitted, inputs),
        }
    }

    fn fd_jacobian(&self, fitted: &[f64], inputs: &ModelInputs) -> Matrix {
        let n = fitted.len();
        let mut jac = Matrix::zeros(inputs.output_len(), n);
        let mut x = fitted.to_vec();
        for j in 0..n {
            let h = FD_RELATIVE_STEP * fitted[j].abs().max(1.0);
            x[j] = fitted[j] + h;
            let hi = self.evaluate(&x, inputs);
            x[j] = fitted[j] - h;
            let lo = self.evaluate(&x, inputs);
            x[j] = fitted[j];
            for r in 0..jac.rows {
                jac.data[r * n + j] = (hi[r] - lo[r]) / (2.0 * h);
            }
        }
        jac
    }

    fn analytic_jacobian(&self, fitted: &[f64], inputs: &ModelInputs) -> Matrix {
        let full = self.expand(fitted);
        let width = full.len();
        let ctx = &self.config.field;
        let mut full_rows = vec![0.0; width];
        let mut jac = Matrix::zeros(inputs.output_len(), fitted.len());
        let params = self.config.model.unflatten(&full).expect("layout");
        let mut r = 0;
        for &w1 in &inputs.omega1 {
            for &o in &inputs.offsets_ppm {
                match &params {
                    ModelParams::Lorentzian(p) => {
                        for (i, pool) in p.pools.iter().enumerate() {
                            full_rows[3 * i..3 * i + 3].copy_from_slice(&pool.gradient_at(o));
                        }
                    }
                    ModelParams::Exchange(p) => {
                        let w = ppm_to_radps(o, ctx);
                        if self.config.model == ModelKind::MtrRex {
                            exchange::mtr_rex_gradient_row(p, w, w1, ctx, &mut full_rows);
                        } else {
                            exchange::z_gradient_row(p, w, w1, ctx, &mut full_rows);
                        }
                    }
                }
                for (c, &i) in self.fitted.iter().enumerate() {
                    jac.data[r * fitted.len() + c] = full_rows[i];
                }
                r += 1;
            }
        }
        jac
    }

    /// Model inputs and target values that this model is fitted to for one spectrum set.
    ///
    /// The analytical Z model fits every Z curve, the MTR_Rex model fits the
    /// spillover-scaled MTR_Rex of every curve (positive offsets at or beyond
    /// `min_offset_ppm`), and the Lorentzian model fits the MTR of one curve.
    pub fn data_for(&self, set: &SpectrumSet) -> Result<(ModelInputs, Vec<f64>)> {
        let ctx = &self.config.field;
        match self.config.model {
            ModelKind::AnalyticalZ => {
                let omega1 = set
                    .spectra()
                    .iter()
                    .map(|s| b1_to_radps(s.b1(), ctx))
                    .collect::<Result<_>>()?;
                let target = set.spectra().iter().flat_map(|s| s.z().iter().copied()).collect();
                Ok((
                    ModelInputs {
                        offsets_ppm: set.offsets_ppm().to_vec(),
                        omega1,
                    },
                    target,
                ))
            }
            ModelKind::MtrRex => {
                if !set.offsets_ppm().iter().any(|&o| o < 0.0) {
                    return Err(CestError::GridMismatch(
                        "the MTR_Rex model needs negative offsets to mirror".into(),
                    ));
                }
                let mut offsets: Option<Vec<f64>> = None;
                let mut omega1 = Vec::new();
                let mut target = Vec::new();
                for s in set.spectra() {
                    let lhs = mtr_rex_lhs(s, ctx)?;
                    let keep: Vec<usize> = (0..lhs.offsets_ppm.len())
                        .filter(|&i| lhs.offsets_ppm[i] >= self.config.min_offset_ppm - GRID_MATCH_TOL_PPM)
                        .collect();
                    if keep.is_empty() {
                        return Err(CestError::GridMismatch(format!(
                            "no positive offsets at or beyond {} ppm",
                            self.config.min_offset_ppm
                        )));
                    }
                    offsets.get_or_insert_with(|| keep.iter().map(|&i| lhs.offsets_ppm[i]).collect());
                    target.extend(keep.iter().map(|&i| lhs.values[i]));
                    omega1.push(b1_to_radps(s.b1(), ctx)?);
                }
                Ok((
                    ModelInputs {
                        offsets_ppm: offsets.unwrap_or_default(),
                        omega1,
                    },
                    target,
                ))
            }
            ModelKind::Lorentzian => {
                let spectrum = match self.config.b1_select {
                    Some(b1) => set
                        .spectra()
                        .iter()
                        .find(|s| (s.b1() - b1).abs() < 1e-9)
                        .ok_or_else(|| {
                            CestError::GridMismatch(format!("no spectrum at B1 = {b1} uT"))
                        })?,
                    None => set
                        .spectra()
                        .iter()
                        .min_by(|a, b| a.b1().total_cmp(&b.b1()))
                        .expect("non-empty set"),
                };
                Ok((
                    ModelInputs {
                        offsets_ppm: spectrum.offsets_ppm().to_vec(),
                        omega1: vec![b1_to_radps(spectrum.b1(), ctx)?],
                    },
                    mtr(spectrum).values,
                ))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets;

    #[test]
    fn flatten_round_trip() {
        for kind in ModelKind::ALL {
            let cfg = presets::model_config(kind);
            let p = cfg.compile().unwrap();
            let full = p.expand(&p.bounds().center);
            let rec = kind.unflatten(&full).unwrap();
            assert_eq!(kind.flatten(&rec).unwrap(), full);
        }
    }

    #[test]
    fn config_json_round_trip() {
        for kind in ModelKind::ALL {
            let cfg = presets::model_config(kind);
            let back = ModelConfig::from_json(&cfg.to_json().unwrap()).unwrap();
            assert_eq!(back, cfg);
        }
    }

    #[test]
    fn rejects_nonpositive_exchange_box() {
        let mut cfg = presets::model_config(ModelKind::AnalyticalZ);
        cfg.pools[0]
            .params
            .insert("k".into(), ParamSetting::fitted(0.0, 100.0));
        assert!(matches!(cfg.compile(), Err(CestError::InvalidBounds(_))));
    }

    #[test]
    fn rejects_duplicate_shift() {
        let mut cfg = presets::model_config(ModelKind::Lorentzian);
        let d = cfg.pools[0].params["d_omega_ppm"];
        cfg.pools[1].params.insert("d_omega_ppm".into(), d);
        assert!(cfg.compile().is_err());
    }

    #[test]
    fn lorentzian_amplitude_derivative_at_peak() {
        let cfg = presets::model_config(ModelKind::Lorentzian);
        let p = cfg.compile().unwrap();
        let shift = cfg.pools[0].params["d_omega_ppm"].center;
        let inputs = ModelInputs {
            offsets_ppm: vec![shift],
            omega1: vec![300.0],
        };
        let jac = p.jacobian(&p.bounds().center, &inputs, JacobianMode::Analytic);
        let col = p.fitted_position(ModelKind::Lorentzian.contrast_index(0)).unwrap();
        assert_eq!(jac.get(0, col), 1.0);
    }
}
