//! Default model configurations.
//!
//! Bounds for the exchange models are artifact choices sized around the default
//! synthetic phantoms (glucose-like pool at 1.2 ppm, lactate-like pool at
//! 0.5 ppm); none of them are measured values. Chemical shifts are fixed.

use std::collections::BTreeMap;

use crate::models::{ModelConfig, ModelKind, ParamSetting, PoolConfig};
use crate::spectrum::FieldContext;

pub const GLUCOSE_SHIFT_PPM: f64 = 1.2;
pub const LACTATE_SHIFT_PPM: f64 = 0.5;

/// Gamma^2 box (ppm^2) for the Lorentzian pools.
pub const WIDE_GAMMA_SQ: (f64, f64) = (0.0, 1.0);
/// The narrowed box that avoids collapse to zero width.
pub const NARROW_GAMMA_SQ: (f64, f64) = (0.3, 0.6);

/// Default MTR_Rex cutoff: closer to water, 1/Z noise swamps the exchange signal.
pub const MTR_REX_MIN_OFFSET_PPM: f64 = 0.4;

fn pool(name: &str, params: &[(&str, ParamSetting)]) -> PoolConfig {
    PoolConfig {
        name: name.to_string(),
        params: params
            .iter()
            .map(|(k, v)| (k.to_string(), *v))
            .collect::<BTreeMap<_, _>>(),
    }
}

fn centered(center: f64, deviation: f64) -> ParamSetting {
    ParamSetting {
        center,
        deviation,
        fitted: true,
    }
}

fn exchange_pool(name: &str, shift: f64, k: (f64, f64)) -> PoolConfig {
    pool(
        name,
        &[
            ("f_over_r1a", centered(1e-3, 1e-3)),
            ("k", centered(k.0, k.1)),
            ("r2", centered(30.0, 30.0)),
            ("d_omega_ppm", ParamSetting::fixed(shift)),
        ],
    )
}

/// Two-pool exchange configuration shared by the analytical Z and MTR_Rex models.
pub fn exchange_config(kind: ModelKind) -> ModelConfig {
    let mtr_rex = kind == ModelKind::MtrRex;
    ModelConfig {
        model: kind,
        field: FieldContext::default(),
        // Not identifiable from MTR_Rex data, so fixed there.
        r2a_over_r1a: Some(if mtr_rex {
            ParamSetting::fixed(3.5)
        } else {
            centered(3.5, 2.5)
        }),
        pools: vec![
            exchange_pool("glucose", GLUCOSE_SHIFT_PPM, (1800.0, 1200.0)),
            exchange_pool("lactate", LACTATE_SHIFT_PPM, (500.0, 400.0)),
        ],
        min_offset_ppm: if mtr_rex { MTR_REX_MIN_OFFSET_PPM } else { 0.0 },
        b1_select: None,
    }
}

/// Lorentzian configuration with both solute pools sharing one Gamma^2 box.
pub fn lorentzian_config(gamma_sq: (f64, f64)) -> ModelConfig {
    let p = |name: &str, shift: f64| {
        pool(
            name,
            &[
                ("amplitude", ParamSetting::fitted(0.0, 1.0)),
                ("gamma_sq", ParamSetting::fitted(gamma_sq.0, gamma_sq.1)),
                ("d_omega_ppm", ParamSetting::fixed(shift)),
            ],
        )
    };
    ModelConfig {
        model: ModelKind::Lorentzian,
        field: FieldContext::default(),
        r2a_over_r1a: None,
        pools: vec![p("glucose", GLUCOSE_SHIFT_PPM), p("lactate", LACTATE_SHIFT_PPM)],
        min_offset_ppm: 0.0,
        b1_select: None,
    }
}

pub fn model_config(kind: ModelKind) -> ModelConfig {
    match kind {
        ModelKind::Lorentzian => lorentzian_config(WIDE_GAMMA_SQ),
        _ => exchange_config(kind),
    }
}
