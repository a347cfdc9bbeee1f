//! Multi-pool Lorentzian MTR model.
//!
//! Offsets, shifts and widths are all in ppm here: the width bounds that make
//! sense for this model ([0, 1] and [0.3, 0.6] for Gamma^2) are only meaningful in
//! ppm^2.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{CestError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LorentzianPool {
    pub amplitude: f64,
    /// Full width squared, Gamma^2 (ppm^2).
    pub gamma_sq: f64,
    pub d_omega_ppm: f64,
}

impl LorentzianPool {
    pub fn gamma_sq_over4(&self) -> f64 {
        self.gamma_sq / 4.0
    }

    fn at(&self, offset_ppm: f64) -> f64 {
        let g = self.gamma_sq_over4();
        if g == 0.0 {
            return 0.0;
        }
        // Written so that the peak value is exactly the amplitude.
        self.amplitude / (1.0 + (offset_ppm - self.d_omega_ppm).powi(2) / g)
    }

    /// Derivatives with respect to (amplitude, Gamma^2, shift).
    pub(crate) fn gradient_at(&self, offset_ppm: f64) -> [f64; 3] {
        let g = self.gamma_sq_over4();
        let q = (offset_ppm - self.d_omega_ppm).powi(2);
        let den = q + g;
        if den == 0.0 {
            return [0.0; 3];
        }
        [
            g / den,
            0.25 * self.amplitude * q / (den * den),
            self.amplitude * g * 2.0 * (offset_ppm - self.d_omega_ppm) / (den * den),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LorentzianParams {
    pub pools: Vec<LorentzianPool>,
}

pub fn lorentzian_forward(p: &LorentzianParams, offsets_ppm: &[f64]) -> Vec<f64> {
    offsets_ppm
        .iter()
        .map(|&o| p.pools.iter().map(|pool| pool.at(o)).sum())
        .collect()
}

/// Integral of one pool's Lorentzian over the whole offset axis: a * pi * Gamma / 2.
pub fn area_under_curve(p: &LorentzianParams, pool: usize) -> Result<f64> {
    let q = p.pools.get(pool).ok_or(CestError::IndexOutOfRange {
        index: pool,
        len: p.pools.len(),
    })?;
    Ok(q.amplitude * PI * q.gamma_sq_over4().sqrt())
}
