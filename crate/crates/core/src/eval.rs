//! Zero-intercept regression of fitted contrast on true concentration,
//! cross-fold aggregation, runtime benchmarking and report formatting.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{CestError, Result};
use crate::models::{area_under_curve, ModelKind, ModelParams, ModelProblem};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContrastMode {
    /// Lorentzian amplitude or, for the exchange models, f/R1a.
    #[default]
    Amplitude,
    /// Area under a Lorentzian pool; Lorentzian model only.
    Area,
}

/// Per-sample contrast of one pool from fitted parameter vectors.
pub fn extract_contrast(problem: &ModelProblem, params: &[Vec<f64>], pool: usize, mode: ContrastMode) -> Result<Vec<f64>> {
    if pool >= problem.pool_count() {
        return Err(CestError::IndexOutOfRange {
            index: pool,
            len: problem.pool_count(),
        });
    }
    params
        .iter()
        .map(|p| match mode {
            ContrastMode::Amplitude => problem.contrast(p, pool),
            ContrastMode::Area => match problem.params(p) {
                ModelParams::Lorentzian(lp) => area_under_curve(&lp, pool),
                ModelParams::Exchange(_) => Err(CestError::InvalidConfig(format!(
                    "area contrast needs the lorentzian model, not {}",
                    problem.kind()
                ))),
            },
        })
        .collect()
}

/// Slope of `y ~ s x` without intercept.
pub fn ols_zero_intercept(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(CestError::LengthMismatch {
            expected: x.len(),
            got: y.len(),
        });
    }
    if x.len() < 2 {
        return Err(CestError::InsufficientData { needed: 2, got: x.len() });
    }
    let sxx: f64 = x.iter().map(|v| v * v).sum();
    if sxx == 0.0 {
        return Err(CestError::DegenerateDesign);
    }
    Ok(x.iter().zip(y).map(|(a, b)| a * b).sum::<f64>() / sxx)
}

/// `1 - sum (y - y_hat)^2 / sum y^2`; may be negative.
pub fn r2_zero_intercept(y: &[f64], y_hat: &[f64]) -> Result<f64> {
    if y.len() != y_hat.len() {
        return Err(CestError::LengthMismatch {
            expected: y.len(),
            got: y_hat.len(),
        });
    }
    if y.len() < 2 {
        return Err(CestError::InsufficientData { needed: 2, got: y.len() });
    }
    let syy: f64 = y.iter().map(|v| v * v).sum();
    if syy == 0.0 {
        return Err(CestError::DegenerateTarget);
    }
    Ok(1.0 - y.iter().zip(y_hat).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / syy)
}

/// Zero-intercept slope and R² of contrast `y` against concentration `x`.
pub fn regress(x: &[f64], y: &[f64]) -> Result<(f64, f64)> {
    let s = ols_zero_intercept(x, y)?;
    let y_hat: Vec<f64> = x.iter().map(|v| s * v).collect();
    Ok((s, r2_zero_intercept(y, &y_hat)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StdKind {
    /// n - 1 denominator.
    #[default]
    Sample,
    Population,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
}

pub fn cross_val_summary(values: &[f64], kind: StdKind) -> Result<Summary> {
    if values.len() < 2 {
        return Err(CestError::InsufficientData {
            needed: 2,
            got: values.len(),
        });
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    let denom = match kind {
        StdKind::Sample => n - 1.0,
        StdKind::Population => n,
    };
    Ok(Summary {
        mean,
        std: (ss / denom).sqrt(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoluteReport {
    pub solute: String,
    pub contrast: ContrastMode,
    /// Slope over all samples pooled.
    pub slope: f64,
    pub r2_mean: f64,
    pub r2_std: f64,
    pub r2_folds: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RuntimeStats {
    /// Per-datapoint wall-clock mean over the timed repeats (ms).
    pub mean_ms: f64,
    pub std_ms: f64,
    pub repeats: usize,
    pub datapoints: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub method: String,
    pub model: ModelKind,
    pub solutes: Vec<SoluteReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub runtime: Option<RuntimeStats>,
    /// Ids of failed rows left out of the regression.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub excluded: Vec<String>,
}

/// Regression of one solute, computed separately on every fold's samples.
///
/// With `groups`, samples sharing a group id within a fold are first averaged
/// (per-phantom instead of per-pixel regression).
pub fn solute_report(
    solute: &str,
    contrast: ContrastMode,
    labels: &[f64],
    values: &[f64],
    fold_of: &[usize],
    groups: Option<&[usize]>,
    std_kind: StdKind,
) -> Result<SoluteReport> {
    if labels.len() != values.len() || labels.len() != fold_of.len() {
        return Err(CestError::LengthMismatch {
            expected: labels.len(),
            got: values.len().min(fold_of.len()),
        });
    }
    let folds = fold_of.iter().copied().max().map_or(0, |m| m + 1);
    let mut r2_folds = Vec::with_capacity(folds);
    for f in 0..folds {
        let idx: Vec<usize> = (0..labels.len()).filter(|&i| fold_of[i] == f).collect();
        let (x, y): (Vec<f64>, Vec<f64>) = match groups {
            None => (idx.iter().map(|&i| labels[i]).collect(), idx.iter().map(|&i| values[i]).collect()),
            Some(g) => {
                let mut acc: BTreeMap<usize, (f64, f64, f64)> = BTreeMap::new();
                for &i in &idx {
                    let e = acc.entry(g[i]).or_insert((0.0, 0.0, 0.0));
                    e.0 += labels[i];
                    e.1 += values[i];
                    e.2 += 1.0;
                }
                acc.values().map(|(a, b, n)| (a / n, b / n)).unzip()
            }
        };
        r2_folds.push(regress(&x, &y)?.1);
    }
    let summary = if r2_folds.len() >= 2 {
        cross_val_summary(&r2_folds, std_kind)?
    } else {
        Summary {
            mean: r2_folds.first().copied().unwrap_or(f64::NAN),
            std: 0.0,
        }
    };
    Ok(SoluteReport {
        solute: solute.to_string(),
        contrast,
        slope: ols_zero_intercept(labels, values)?,
        r2_mean: summary.mean,
        r2_std: summary.std,
        r2_folds,
    })
}

pub const BENCH_REPEATS: usize = 3;
pub const BENCH_WARMUPS: usize = 2;

/// Times `run` (which processes `datapoints` samples per call): `warmups`
/// discarded calls, then `repeats` timed ones. Statistics are per datapoint.
pub fn runtime_bench(mut run: impl FnMut(), datapoints: usize, repeats: usize, warmups: usize) -> Result<RuntimeStats> {
    if datapoints == 0 || repeats == 0 {
        return Err(CestError::InsufficientData { needed: 1, got: 0 });
    }
    for _ in 0..warmups {
        run();
    }
    let per_point: Vec<f64> = (0..repeats)
        .map(|_| {
            let t = Instant::now();
            run();
            t.elapsed().as_secs_f64() * 1e3 / datapoints as f64
        })
        .collect();
    let summary = if repeats >= 2 {
        cross_val_summary(&per_point, StdKind::Sample)?
    } else {
        Summary {
            mean: per_point[0],
            std: 0.0,
        }
    };
    Ok(RuntimeStats {
        mean_ms: summary.mean,
        std_ms: summary.std,
        repeats,
        datapoints,
    })
}

/// Method rows against model/solute columns: `R²  mean ± std`.
pub fn format_r2_table(reports: &[EvalReport]) -> String {
    let mut columns: Vec<(ModelKind, String)> = Vec::new();
    for r in reports {
        for s in &r.solutes {
            let key = (r.model, s.solute.clone());
            if !columns.contains(&key) {
                columns.push(key);
            }
        }
    }
    let mut methods: Vec<&str> = Vec::new();
    for r in reports {
        if !methods.contains(&r.method.as_str()) {
            methods.push(&r.method);
        }
    }
    let width = 19;
    let mut out = format!("{:<14}", "");
    for (m, s) in &columns {
        let _ = write!(out, "{:>width$}", format!("{m}/{s}"));
    }
    out.push('\n');
    for method in methods {
        let _ = write!(out, "{method:<14}");
        for (m, s) in &columns {
            let cell = reports
                .iter()
                .filter(|r| r.method == method && r.model == *m)
                .flat_map(|r| r.solutes.iter())
                .find(|x| &x.solute == s)
                .map_or_else(|| "-".to_string(), |x| format!("{:.4} ± {:.4}", x.r2_mean, x.r2_std));
            let _ = write!(out, "{cell:>width$}");
        }
        out.push('\n');
    }
    out
}

/// Method rows against model columns: per-datapoint runtime `mean ± std ms`.
pub fn format_runtime_table(reports: &[EvalReport]) -> String {
    let mut models: Vec<ModelKind> = Vec::new();
    let mut methods: Vec<&str> = Vec::new();
    for r in reports.iter().filter(|r| r.runtime.is_some()) {
        if !models.contains(&r.model) {
            models.push(r.model);
        }
        if !methods.contains(&r.method.as_str()) {
            methods.push(&r.method);
        }
    }
    let width = 24;
    let mut out = format!("{:<14}", "");
    for m in &models {
        let _ = write!(out, "{:>width$}", m.name());
    }
    out.push('\n');
    for method in methods {
        let _ = write!(out, "{method:<14}");
        for m in &models {
            let cell = reports
                .iter()
                .find(|r| r.method == method && r.model == *m)
                .and_then(|r| r.runtime)
                .map_or_else(|| "-".to_string(), |t| format!("{:.4} ± {:.4} ms", t.mean_ms, t.std_ms));
            let _ = write!(out, "{cell:>width$}");
        }
        out.push('\n');
    }
    out
}

/// Scatter of contrast against concentration with per-concentration mean ± std
/// bars and the zero-intercept regression line.
pub fn scatter_svg(title: &str, labels: &[f64], values: &[f64]) -> Result<String> {
    let slope = ols_zero_intercept(labels, values)?;
    let (w, h, m) = (480.0, 360.0, 50.0);
    let x_max = labels.iter().fold(0.0f64, |a, &b| a.max(b)) * 1.1;
    let y_top = values.iter().fold(slope * x_max, |a: f64, &b| a.max(b));
    let y_bot = values.iter().fold(0.0f64, |a, &b| a.min(b));
    let y_span = if y_top > y_bot { y_top - y_bot } else { 1.0 };
    let px = |x: f64| m + (w - 2.0 * m) * x / x_max;
    let py = |y: f64| h - m - (h - 2.0 * m) * (y - y_bot) / y_span;

    let mut groups: BTreeMap<u64, Vec<f64>> = BTreeMap::new();
    for (x, y) in labels.iter().zip(values) {
        groups.entry(x.to_bits()).or_default().push(*y);
    }
    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
         <text x=\"{}\" y=\"24\" text-anchor=\"middle\" font-size=\"14\">{}</text>\n\
         <line x1=\"{m}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n\
         <line x1=\"{m}\" y1=\"{m}\" x2=\"{m}\" y2=\"{}\" stroke=\"black\"/>\n",
        w / 2.0,
        title.replace('&', "&amp;").replace('<', "&lt;"),
        py(0.0),
        w - m,
        py(0.0),
        h - m
    );
    for (bits, ys) in &groups {
        let x = f64::from_bits(*bits);
        let mean = ys.iter().sum::<f64>() / ys.len() as f64;
        let std = if ys.len() > 1 {
            (ys.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (ys.len() - 1) as f64).sqrt()
        } else {
            0.0
        };
        let _ = writeln!(
            svg,
            "<line x1=\"{0:.2}\" y1=\"{1:.2}\" x2=\"{0:.2}\" y2=\"{2:.2}\" stroke=\"steelblue\"/>\n\
             <circle cx=\"{0:.2}\" cy=\"{3:.2}\" r=\"4\" fill=\"steelblue\"/>\n\
             <text x=\"{0:.2}\" y=\"{4:.2}\" text-anchor=\"middle\" font-size=\"11\">{5}</text>",
            px(x),
            py(mean - std),
            py(mean + std),
            py(mean),
            h - m + 16.0,
            x
        );
    }
    let _ = writeln!(
        svg,
        "<line x1=\"{:.2}\" y1=\"{:.2}\" x2=\"{:.2}\" y2=\"{:.2}\" stroke=\"firebrick\" stroke-dasharray=\"4 3\"/>\n</svg>",
        px(0.0),
        py(0.0),
        px(x_max),
        py(slope * x_max)
    );
    Ok(svg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets;

    #[test]
    fn slope_examples() {
        assert_eq!(ols_zero_intercept(&[2.0, 4.0], &[1.0, 2.0]).unwrap(), 0.5);
        assert_eq!(ols_zero_intercept(&[2.0, 4.0], &[0.0, 0.0]).unwrap(), 0.0);
        assert!(matches!(ols_zero_intercept(&[0.0, 0.0], &[1.0, 2.0]), Err(CestError::DegenerateDesign)));
    }

    #[test]
    fn r2_examples() {
        let y = [0.3, 0.5, 0.9];
        assert_eq!(r2_zero_intercept(&y, &y).unwrap(), 1.0);
        assert_eq!(r2_zero_intercept(&y, &[0.0; 3]).unwrap(), 0.0);
        assert_eq!(r2_zero_intercept(&[1.0, 1.0], &[3.0, 3.0]).unwrap(), -3.0);
        assert!(matches!(r2_zero_intercept(&[0.0, 0.0], &[1.0, 1.0]), Err(CestError::DegenerateTarget)));
    }

    #[test]
    fn summary_examples() {
        let s = cross_val_summary(&[0.9, 0.9], StdKind::Sample).unwrap();
        assert_eq!((s.mean, s.std), (0.9, 0.0));
        let s = cross_val_summary(&[0.8, 1.0], StdKind::Sample).unwrap();
        assert!((s.mean - 0.9).abs() < 1e-15 && (s.std - 0.02f64.sqrt()).abs() < 1e-15);
        let p = cross_val_summary(&[0.8, 1.0], StdKind::Population).unwrap();
        assert!((p.std - 0.1).abs() < 1e-15);
    }

    #[test]
    fn contrast_extraction() {
        let lor = presets::model_config(ModelKind::Lorentzian).compile().unwrap();
        // fitted layout: a0, g0, a1, g1
        let params = vec![vec![0.3, 0.5, 0.1, 4.0]];
        assert_eq!(extract_contrast(&lor, &params, 0, ContrastMode::Amplitude).unwrap(), vec![0.3]);
        let area = extract_contrast(&lor, &params, 1, ContrastMode::Area).unwrap()[0];
        assert!((area - 0.1 * std::f64::consts::PI).abs() < 1e-15);
        assert!(extract_contrast(&lor, &params, 2, ContrastMode::Amplitude).is_err());

        let z = presets::model_config(ModelKind::AnalyticalZ).compile().unwrap();
        let mut p = z.bounds().center.clone();
        p[4] = 7e-4; // lactate f/R1a
        assert_eq!(extract_contrast(&z, &[p.clone()], 1, ContrastMode::Amplitude).unwrap(), vec![7e-4]);
        assert!(extract_contrast(&z, &[p], 1, ContrastMode::Area).is_err());
    }

    #[test]
    fn perfect_contrast_gives_unit_r2_per_fold() {
        let labels = [5.0, 15.0, 30.0, 5.0, 15.0, 30.0];
        let values: Vec<f64> = labels.iter().map(|v| 2e-5 * v).collect();
        let r = solute_report("glucose", ContrastMode::Amplitude, &labels, &values, &[0, 0, 0, 1, 1, 1], None, StdKind::Sample).unwrap();
        assert!(r.r2_folds.iter().all(|v| (v - 1.0).abs() < 1e-12));
        assert!((r.slope - 2e-5).abs() < 1e-18);
    }

    #[test]
    fn bench_is_nonnegative() {
        let s = runtime_bench(|| {}, 10, 3, 2).unwrap();
        assert!(s.mean_ms >= 0.0 && s.std_ms >= 0.0);
    }

    #[test]
    fn svg_is_well_formed() {
        let svg = scatter_svg("glucose", &[5.0, 5.0, 30.0], &[1.0, 1.2, 6.0]).unwrap();
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
    }
}
