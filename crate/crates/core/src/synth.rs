//! Synthetic phantoms: analytical Z spectra over a concentration grid, with
//! seeded additive Gaussian noise.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{CestError, Result};
use crate::models::{z_forward, PoolParams, ZModelParams};
use crate::presets::{GLUCOSE_SHIFT_PPM, LACTATE_SHIFT_PPM};
use crate::spectrum::{b1_to_radps, FieldContext, Spectrum, SpectrumSet};

/// Lower clamp for noisy Z values, which must stay strictly positive.
pub const MIN_NOISY_Z: f64 = 1e-6;
pub const MAX_NOISY_Z: f64 = 1.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoluteTemplate {
    pub name: String,
    pub k: f64,
    pub r2: f64,
    pub d_omega_ppm: f64,
    /// f/R1a per millimolar (s/mM).
    pub scale: f64,
    /// Concentrations (mM) of this solute in the phantom grid.
    pub concentrations: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhantomSpec {
    pub solutes: Vec<SoluteTemplate>,
    pub r2a_over_r1a: f64,
    pub b1: Vec<f64>,
    pub offsets_ppm: Vec<f64>,
    pub noise_sigma: f64,
    pub replicates: usize,
    pub seed: u64,
    #[serde(default)]
    pub field: FieldContext,
}

pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![lo],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}

impl Default for PhantomSpec {
    /// Two solutes at 5, 15 and 30 mM, four saturation amplitudes, 129 offsets
    /// over [-5, 5] ppm, 50 replicates. Exchange parameters and scale factors are
    /// artifact choices giving dips of a few percent of Z.
    fn default() -> Self {
        let solute = |name: &str, k, r2, shift| SoluteTemplate {
            name: name.to_string(),
            k,
            r2,
            d_omega_ppm: shift,
            scale: 3e-5,
            concentrations: vec![5.0, 15.0, 30.0],
        };
        Self {
            solutes: vec![
                solute("glucose", 1500.0, 40.0, GLUCOSE_SHIFT_PPM),
                solute("lactate", 400.0, 20.0, LACTATE_SHIFT_PPM),
            ],
            r2a_over_r1a: 3.0,
            b1: vec![1.2, 1.6, 2.0, 2.4],
            offsets_ppm: linspace(-5.0, 5.0, 129),
            noise_sigma: 0.005,
            replicates: 50,
            seed: 0,
            field: FieldContext::default(),
        }
    }
}

impl PhantomSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(CestError::InvalidConfig(m));
        if self.solutes.is_empty() {
            return bad("no solutes".into());
        }
        for s in &self.solutes {
            if s.concentrations.is_empty() || s.concentrations.iter().any(|c| !(*c > 0.0)) {
                return bad(format!("concentrations of '{}' must be non-empty and positive", s.name));
            }
            if !(s.k > 0.0) || !(s.r2 >= 0.0) || !(s.scale >= 0.0) {
                return bad(format!("invalid exchange parameters for '{}'", s.name));
            }
        }
        if !(self.noise_sigma >= 0.0) {
            return bad("noise_sigma must be non-negative".into());
        }
        if self.replicates == 0 {
            return bad("replicates must be at least 1".into());
        }
        if !(self.r2a_over_r1a >= 0.0) {
            return bad("r2a_over_r1a must be non-negative".into());
        }
        if self.b1.is_empty() {
            return bad("no B1 values".into());
        }
        for &b in &self.b1 {
            b1_to_radps(b, &self.field)?;
        }
        // Grid validity is checked by the spectrum constructor.
        Spectrum::new(self.offsets_ppm.clone(), vec![1.0; self.offsets_ppm.len()], self.b1[0])?;
        Ok(())
    }

    /// Every concentration combination, first solute varying slowest.
    pub fn combinations(&self) -> Vec<Vec<f64>> {
        let mut out = vec![vec![]];
        for s in &self.solutes {
            out = out
                .into_iter()
                .flat_map(|prefix| {
                    s.concentrations.iter().map(move |&c| {
                        let mut p = prefix.clone();
                        p.push(c);
                        p
                    })
                })
                .collect();
        }
        out
    }

    /// Exchange parameters of a phantom with the given concentrations.
    pub fn truth(&self, concentrations: &[f64]) -> ZModelParams {
        ZModelParams {
            r2a_over_r1a: self.r2a_over_r1a,
            pools: self
                .solutes
                .iter()
                .zip(concentrations)
                .map(|(s, c)| PoolParams {
                    f_over_r1a: s.scale * c,
                    k: s.k,
                    r2: s.r2,
                    d_omega_ppm: s.d_omega_ppm,
                })
                .collect(),
        }
    }

    fn half_span(&self) -> f64 {
        let (lo, hi) = (self.offsets_ppm[0], self.offsets_ppm[self.offsets_ppm.len() - 1]);
        0.5 * (hi - lo)
    }
}

/// Bookkeeping for one generated spectrum set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhantomRecord {
    pub id: String,
    pub phantom: usize,
    pub replicate: usize,
    pub seed: u64,
    pub labels: BTreeMap<String, f64>,
    pub shift_ppm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthDataset {
    pub sets: Vec<SpectrumSet>,
    pub records: Vec<PhantomRecord>,
}

impl SynthDataset {
    /// Label vectors in solute order, one per set.
    pub fn labels(&self, solutes: &[String]) -> Vec<Vec<f64>> {
        self.records
            .iter()
            .map(|r| solutes.iter().map(|s| r.labels.get(s).copied().unwrap_or(f64::NAN)).collect())
            .collect()
    }
}

pub fn generate(spec: &PhantomSpec) -> Result<SynthDataset> {
    generate_shifted(spec, |_| 0.0)
}

fn generate_shifted(spec: &PhantomSpec, shift_of: impl Fn(u64) -> f64) -> Result<SynthDataset> {
    spec.validate()?;
    let noise = (spec.noise_sigma > 0.0)
        .then(|| Normal::new(0.0, spec.noise_sigma).expect("finite sigma"));
    let names: Vec<String> = spec.solutes.iter().map(|s| s.name.clone()).collect();
    let mut sets = Vec::new();
    let mut records = Vec::new();
    for (phantom, concs) in spec.combinations().iter().enumerate() {
        let truth = spec.truth(concs);
        let labels: BTreeMap<String, f64> = names.iter().cloned().zip(concs.iter().copied()).collect();
        for replicate in 0..spec.replicates {
            let index = sets.len() as u64;
            let seed = spec.seed.wrapping_add(index);
            let shift = shift_of(seed);
            let offsets: Vec<f64> = spec.offsets_ppm.iter().map(|o| o - shift).collect();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut spectra = Vec::with_capacity(spec.b1.len());
            for &b1 in &spec.b1 {
                let w1 = b1_to_radps(b1, &spec.field)?;
                let mut z = z_forward(&truth, &offsets, w1, &spec.field);
                if let Some(n) = &noise {
                    for v in z.iter_mut() {
                        *v = (*v + n.sample(&mut rng)).clamp(MIN_NOISY_Z, MAX_NOISY_Z);
                    }
                }
                spectra.push(Spectrum::new(spec.offsets_ppm.clone(), z, b1)?);
            }
            sets.push(SpectrumSet::new(spectra, Some(labels.clone()))?);
            records.push(PhantomRecord {
                id: format!("p{phantom:03}_r{replicate:03}"),
                phantom,
                replicate,
                seed,
                labels: labels.clone(),
                shift_ppm: shift,
            });
        }
    }
    Ok(SynthDataset { sets, records })
}

/// Regenerates `spec`'s dataset with the water resonance moved to `shift_ppm`,
/// optionally jittered per spectrum set by a uniform draw in `±jitter_ppm`.
pub fn inject_b0_shift(spec: &PhantomSpec, shift_ppm: f64, jitter_ppm: f64, seed: u64) -> Result<SynthDataset> {
    spec.validate()?;
    let half = spec.half_span();
    if shift_ppm.abs() + jitter_ppm.abs() >= half {
        return Err(CestError::ShiftTooLarge {
            shift: shift_ppm,
            half_span: half,
        });
    }
    generate_shifted(spec, |set_seed| {
        if jitter_ppm == 0.0 {
            return shift_ppm;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ set_seed.rotate_left(32));
        shift_ppm + jitter_ppm * rng.random_range(-1.0..=1.0)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> PhantomSpec {
        PhantomSpec {
            replicates: 2,
            ..PhantomSpec::default()
        }
    }

    #[test]
    fn counts() {
        let d = generate(&small()).unwrap();
        assert_eq!(d.sets.len(), 18);
        assert!(d.sets.iter().all(|s| s.spectra().len() == 4));
        assert_eq!(d.records[17].labels["lactate"], 30.0);
    }

    #[test]
    fn noiseless_passthrough() {
        let spec = PhantomSpec {
            noise_sigma: 0.0,
            replicates: 1,
            ..PhantomSpec::default()
        };
        let d = generate(&spec).unwrap();
        let truth = spec.truth(&[15.0, 5.0]);
        let w1 = b1_to_radps(2.0, &spec.field).unwrap();
        let set = &d.sets[3];
        assert_eq!(set.spectra()[2].z(), z_forward(&truth, &spec.offsets_ppm, w1, &spec.field).as_slice());
    }

    #[test]
    fn deterministic_and_bounded() {
        let a = generate(&small()).unwrap();
        let b = generate(&small()).unwrap();
        assert_eq!(a, b);
        for s in a.sets.iter().flat_map(|s| s.spectra()) {
            assert!(s.z().iter().all(|&z| z > 0.0 && z <= MAX_NOISY_Z));
        }
    }

    #[test]
    fn zero_shift_is_identity_and_large_shift_rejected() {
        let spec = small();
        assert_eq!(inject_b0_shift(&spec, 0.0, 0.0, 1).unwrap(), generate(&spec).unwrap());
        assert!(matches!(
            inject_b0_shift(&spec, 5.0, 0.0, 1),
            Err(CestError::ShiftTooLarge { .. })
        ));
    }
}
