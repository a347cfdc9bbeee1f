//! Steady-state exchange models: the analytical Z-spectrum and the summed
//! exchange-dependent relaxation it is built from.
//!
//! All rates are in 1/s and all frequencies in rad/s. Pool sizes enter as
//! `f / R1a`, the only identifiable combination in steady state.

use serde::{Deserialize, Serialize};

use crate::spectrum::{ppm_to_radps, FieldContext};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoolParams {
    /// Proton fraction over water R1 (s).
    pub f_over_r1a: f64,
    /// Exchange rate (1/s).
    pub k: f64,
    /// Transverse relaxation rate of the pool (1/s).
    pub r2: f64,
    /// Chemical shift relative to water (ppm).
    pub d_omega_ppm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZModelParams {
    /// Water R2 over water R1.
    pub r2a_over_r1a: f64,
    pub pools: Vec<PoolParams>,
}

/// Squared half-width of the exchange lineshape, Gamma^2 / 4, in (rad/s)^2.
pub fn gamma_sq_over4(pool: &PoolParams, omega1: f64) -> f64 {
    let s = pool.r2 + pool.k;
    s / pool.k * omega1 * omega1 + s * s
}

/// Exchange-dependent relaxation of one pool divided by R1a, at a single offset (rad/s).
pub fn r_ex_at(pool: &PoolParams, d_omega: f64, omega1: f64, ctx: &FieldContext) -> f64 {
    let delta = ppm_to_radps(pool.d_omega_ppm, ctx);
    let w2 = omega1 * omega1;
    let s = pool.r2 + pool.k;
    let lorentz = gamma_sq_over4(pool, omega1) + (d_omega - delta).powi(2);
    let bracket = pool.r2 + pool.k * (delta * delta + pool.r2 * s) / (w2 + d_omega * d_omega);
    pool.f_over_r1a * w2 / lorentz * bracket
}

/// [`r_ex_at`] over a list of offsets in rad/s.
pub fn r_ex(pool: &PoolParams, d_omega: &[f64], omega1: f64, ctx: &FieldContext) -> Vec<f64> {
    d_omega
        .iter()
        .map(|&w| r_ex_at(pool, w, omega1, ctx))
        .collect()
}

/// Partial derivatives of [`r_ex_at`] with respect to (f/R1a, k, R2, shift in ppm).
pub fn r_ex_gradient(pool: &PoolParams, d_omega: f64, omega1: f64, ctx: &FieldContext) -> [f64; 4] {
    let per_ppm = ctx.radps_per_ppm();
    let delta = pool.d_omega_ppm * per_ppm;
    let (f, k, r2) = (pool.f_over_r1a, pool.k, pool.r2);
    let w2 = omega1 * omega1;
    let s = r2 + k;
    let sat = w2 + d_omega * d_omega;
    let lorentz = s / k * w2 + s * s + (d_omega - delta).powi(2);
    let bracket = r2 + k * (delta * delta + r2 * s) / sat;

    let dl_dk = -r2 / (k * k) * w2 + 2.0 * s;
    let dl_dr2 = w2 / k + 2.0 * s;
    let dl_ddelta = -2.0 * (d_omega - delta);
    let db_dk = (delta * delta + r2 * s + k * r2) / sat;
    let db_dr2 = 1.0 + k * (s + r2) / sat;
    let db_ddelta = 2.0 * k * delta / sat;

    let scale = f * w2 / lorentz;
    let chain = |db: f64, dl: f64| scale * (db - bracket * dl / lorentz);
    [
        w2 * bracket / lorentz,
        chain(db_dk, dl_dk),
        chain(db_dr2, dl_dr2),
        chain(db_ddelta, dl_ddelta) * per_ppm,
    ]
}

fn z_at(p: &ZModelParams, d_omega: f64, omega1: f64, ctx: &FieldContext) -> f64 {
    let w2 = omega1 * omega1;
    let dw2 = d_omega * d_omega;
    let rex: f64 = p.pools.iter().map(|pool| r_ex_at(pool, d_omega, omega1, ctx)).sum();
    let den = dw2 + p.r2a_over_r1a * w2 + (w2 + dw2) * rex;
    if den == 0.0 {
        // Only reachable with no relaxation and no exchange at dw = 0.
        return 1.0;
    }
    dw2 / den
}

/// Steady-state Z-spectrum for offsets in ppm.
pub fn z_forward(p: &ZModelParams, offsets_ppm: &[f64], omega1: f64, ctx: &FieldContext) -> Vec<f64> {
    offsets_ppm
        .iter()
        .map(|&o| z_at(p, ppm_to_radps(o, ctx), omega1, ctx))
        .collect()
}

/// Summed exchange rate over R1a; the fitted side of the MTR_Rex model.
/// `r2a_over_r1a` plays no role here.
pub fn mtr_rex_forward(
    p: &ZModelParams,
    offsets_ppm: &[f64],
    omega1: f64,
    ctx: &FieldContext,
) -> Vec<f64> {
    offsets_ppm
        .iter()
        .map(|&o| {
            let w = ppm_to_radps(o, ctx);
            p.pools.iter().map(|pool| r_ex_at(pool, w, omega1, ctx)).sum()
        })
        .collect()
}

/// Row of partial derivatives of Z at one offset, laid out as
/// `[r2a_over_r1a, (f, k, r2, shift) per pool]`.
pub(crate) fn z_gradient_row(
    p: &ZModelParams,
    d_omega: f64,
    omega1: f64,
    ctx: &FieldContext,
    out: &mut [f64],
) {
    let w2 = omega1 * omega1;
    let dw2 = d_omega * d_omega;
    let rex: f64 = p.pools.iter().map(|pool| r_ex_at(pool, d_omega, omega1, ctx)).sum();
    let den = dw2 + p.r2a_over_r1a * w2 + (w2 + dw2) * rex;
    if den == 0.0 {
        out.fill(0.0);
        return;
    }
    let outer = -dw2 / (den * den);
    out[0] = outer * w2;
    for (i, pool) in p.pools.iter().enumerate() {
        let g = r_ex_gradient(pool, d_omega, omega1, ctx);
        for (j, gj) in g.iter().enumerate() {
            out[1 + 4 * i + j] = outer * (w2 + dw2) * gj;
        }
    }
}

/// Same layout as [`z_gradient_row`] for the MTR_Rex model (first entry is zero).
pub(crate) fn mtr_rex_gradient_row(
    p: &ZModelParams,
    d_omega: f64,
    omega1: f64,
    ctx: &FieldContext,
    out: &mut [f64],
) {
    out[0] = 0.0;
    for (i, pool) in p.pools.iter().enumerate() {
        let g = r_ex_gradient(pool, d_omega, omega1, ctx);
        out[1 + 4 * i..5 + 4 * i].copy_from_slice(&g);
    }
}
