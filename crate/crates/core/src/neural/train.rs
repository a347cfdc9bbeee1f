use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::autodiff::{Tape, Tensor};
use super::network::{NetworkConfig, NetworkState, Preset};
use crate::error::{CestError, Result};
use crate::models::{ModelInputs, ModelKind, ModelProblem, ParamBounds};
use crate::spectrum::SpectrumSet;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub folds: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl TrainConfig {
    /// Full-scale protocol: 200 epochs for the Lorentzian model, 1000 otherwise,
    /// learning rate 1e-5.
    pub fn paper(kind: ModelKind) -> Self {
        Self {
            epochs: if kind == ModelKind::Lorentzian { 200 } else { 1000 },
            learning_rate: 1e-5,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            folds: 5,
            batch_size: 32,
            seed: 0,
        }
    }

    /// Desk-scale protocol: the small network converges in ~100 epochs at 1e-3.
    pub fn desk() -> Self {
        Self {
            epochs: 120,
            learning_rate: 1e-3,
            ..Self::paper(ModelKind::AnalyticalZ)
        }
    }

    pub fn for_preset(preset: Preset, kind: ModelKind) -> Self {
        match preset {
            Preset::Paper => Self::paper(kind),
            Preset::Desk => Self::desk(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 || self.folds < 2 || !(self.learning_rate > 0.0) {
            return Err(CestError::InvalidConfig(format!("invalid training settings {self:?}")));
        }
        Ok(())
    }
}

/// Network inputs: one curve vector per sample (curve after curve, as the model
/// produces them) and the shared sampling. Carries no labels.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkData {
    pub inputs: ModelInputs,
    pub x: Vec<Vec<f64>>,
}

impl NetworkData {
    pub fn from_sets(problem: &ModelProblem, sets: &[SpectrumSet]) -> Result<Self> {
        let mut inputs: Option<ModelInputs> = None;
        let mut x = Vec::with_capacity(sets.len());
        for set in sets {
            let (inp, target) = problem.data_for(set)?;
            match &inputs {
                None => inputs = Some(inp),
                Some(first) if *first != inp => {
                    return Err(CestError::ShapeMismatch(
                        "all spectrum sets must share offsets and saturation amplitudes".into(),
                    ))
                }
                Some(_) => {}
            }
            x.push(target);
        }
        let inputs = inputs.ok_or(CestError::InsufficientData { needed: 1, got: 0 })?;
        Ok(Self { inputs, x })
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn tokens(&self) -> usize {
        self.inputs.offsets_ppm.len()
    }

    pub fn channels(&self) -> usize {
        self.inputs.omega1.len()
    }

    /// Token rows `(batch * tokens) x channels` for the given samples.
    fn token_matrix(&self, idx: &[usize]) -> Tensor {
        let (t, c) = (self.tokens(), self.channels());
        let mut m = Tensor::zeros(idx.len() * t, c);
        for (b, &i) in idx.iter().enumerate() {
            let x = &self.x[i];
            for tok in 0..t {
                for ch in 0..c {
                    m.data[(b * t + tok) * c + ch] = x[ch * t + tok];
                }
            }
        }
        m
    }

    fn target(&self, idx: &[usize]) -> Tensor {
        let w = self.inputs.output_len();
        Tensor::from_vec(idx.len(), w, idx.iter().flat_map(|&i| self.x[i].iter().copied()).collect())
    }
}

/// `p = c + d * tanh(f)`.
pub fn bound_map(f: &[f64], bounds: &ParamBounds) -> Result<Vec<f64>> {
    if f.len() != bounds.len() {
        return Err(CestError::LengthMismatch {
            expected: bounds.len(),
            got: f.len(),
        });
    }
    Ok(f.iter()
        .zip(bounds.center.iter().zip(&bounds.deviation))
        .map(|(v, (c, d))| c + d * v.tanh())
        .collect())
}

/// Mean squared difference between the model at `params` and the curves `x`.
pub fn reconstruction_loss(problem: &ModelProblem, inputs: &ModelInputs, params: &[Vec<f64>], x: &[Vec<f64>]) -> Result<f64> {
    if params.len() != x.len() {
        return Err(CestError::LengthMismatch {
            expected: x.len(),
            got: params.len(),
        });
    }
    let (mut sum, mut n) = (0.0, 0usize);
    for (p, xi) in params.iter().zip(x) {
        let m = problem.evaluate(p, inputs);
        if m.len() != xi.len() {
            return Err(CestError::LengthMismatch {
                expected: m.len(),
                got: xi.len(),
            });
        }
        sum += m.iter().zip(xi).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
        n += m.len();
    }
    Ok(if n == 0 { 0.0 } else { sum / n as f64 })
}

/// One Adam update with bias correction.
pub fn adam_step(state: &mut NetworkState, grads: &[Tensor], cfg: &TrainConfig) -> Result<()> {
    if grads.len() != state.weights.len()
        || grads.iter().zip(&state.weights).any(|(g, w)| g.shape() != w.shape())
    {
        return Err(CestError::ShapeMismatch("gradients do not match the weights".into()));
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    for (((w, m), v), g) in state
        .weights
        .iter_mut()
        .zip(&mut state.first_moment)
        .zip(&mut state.second_moment)
        .zip(grads)
    {
        for i in 0..g.data.len() {
            let gi = g.data[i];
            m.data[i] = cfg.beta1 * m.data[i] + (1.0 - cfg.beta1) * gi;
            v.data[i] = cfg.beta2 * v.data[i] + (1.0 - cfg.beta2) * gi * gi;
            let mh = m.data[i] / c1;
            let vh = v.data[i] / c2;
            w.data[i] -= cfg.learning_rate * mh / (vh.sqrt() + cfg.epsilon);
        }
    }
    Ok(())
}

/// Seeded split of `n` samples into `folds` near-equal parts; entry `i` is the
/// held-out fold of sample `i`.
pub fn fold_assignment(n: usize, folds: usize, seed: u64) -> Result<Vec<usize>> {
    if folds < 2 || n < folds {
        return Err(CestError::InsufficientData { needed: folds.max(2), got: n });
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut out = vec![0; n];
    for (pos, &i) in perm.iter().enumerate() {
        out[i] = pos * folds / n;
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone)]
pub struct FoldResult {
    pub fold: usize,
    pub state: NetworkState,
    pub history: Vec<EpochLoss>,
    pub held_out: Vec<usize>,
    /// Predicted parameters that left the bounds box during training (always 0
    /// unless the bound map is broken).
    pub bound_violations: usize,
}

fn count_violations(p: &Tensor, bounds: &ParamBounds) -> usize {
    let (lo, hi) = (bounds.lower(), bounds.upper());
    p.data
        .chunks(p.cols)
        .flat_map(|row| row.iter().zip(lo.iter().zip(&hi)))
        .filter(|(v, (l, h))| !(**v >= **l && **v <= **h))
        .count()
}

/// Trains one network per fold on the remaining folds.
pub fn train(data: &NetworkData, problem: &ModelProblem, net: &NetworkConfig, cfg: &TrainConfig) -> Result<Vec<FoldResult>> {
    cfg.validate()?;
    if net.tokens != data.tokens() || net.in_channels != data.channels() || net.outputs != problem.bounds().len() {
        return Err(CestError::ShapeMismatch(format!(
            "network expects {} tokens x {} channels -> {} outputs, data has {} x {} and the model {} parameters",
            net.tokens,
            net.in_channels,
            net.outputs,
            data.tokens(),
            data.channels(),
            problem.bounds().len()
        )));
    }
    let assignment = fold_assignment(data.len(), cfg.folds, cfg.seed)?;
    let bounds = problem.bounds();
    let mut results = Vec::with_capacity(cfg.folds);
    for fold in 0..cfg.folds {
        let fold_seed = cfg.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(fold as u64 + 1);
        let mut state = NetworkState::init(net.clone(), fold_seed)?;
        let mut rng = ChaCha8Rng::seed_from_u64(fold_seed ^ 0x5EED);
        let held_out: Vec<usize> = (0..data.len()).filter(|&i| assignment[i] == fold).collect();
        let mut train_idx: Vec<usize> = (0..data.len()).filter(|&i| assignment[i] != fold).collect();
        let mut history = Vec::with_capacity(cfg.epochs);
        let mut violations = 0;
        for epoch in 0..cfg.epochs {
            train_idx.shuffle(&mut rng);
            let mut total = 0.0;
            for batch in train_idx.chunks(cfg.batch_size) {
                let mut tape = Tape::new();
                let (w, f) = state.forward(&mut tape, data.token_matrix(batch))?;
                let th = tape.tanh(f);
                let p = tape.affine(th, &bounds.center, &bounds.deviation);
                violations += count_violations(tape.value(p), bounds);
                let recon = tape.model(p, problem, &data.inputs);
                let loss = tape.mse(recon, data.target(batch));
                total += tape.value(loss).data[0] * batch.len() as f64;
                let mut grads = tape.backward(loss);
                let g: Vec<Tensor> = w
                    .iter()
                    .zip(&state.weights)
                    .map(|(v, wt)| grads.take(*v).unwrap_or_else(|| Tensor::zeros(wt.rows, wt.cols)))
                    .collect();
                adam_step(&mut state, &g, cfg)?;
            }
            let val = evaluate(&state, problem, data, &held_out, &mut violations)?;
            history.push(EpochLoss {
                epoch,
                train_loss: total / train_idx.len() as f64,
                val_loss: val.loss,
            });
        }
        results.push(FoldResult {
            fold,
            state,
            history,
            held_out,
            bound_violations: violations,
        });
    }
    Ok(results)
}

const PREDICT_BATCH: usize = 64;

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub params: Vec<Vec<f64>>,
    pub reconstructed: Vec<Vec<f64>>,
    pub loss: f64,
}

fn infer_idx(state: &NetworkState, bounds: &ParamBounds, data: &NetworkData, idx: &[usize], violations: &mut usize) -> Result<Vec<Vec<f64>>> {
    let mut params = Vec::with_capacity(idx.len());
    for batch in idx.chunks(PREDICT_BATCH) {
        let mut tape = Tape::new();
        let (_, f) = state.forward(&mut tape, data.token_matrix(batch))?;
        let th = tape.tanh(f);
        let p = tape.affine(th, &bounds.center, &bounds.deviation);
        let pv = tape.value(p);
        *violations += count_violations(pv, bounds);
        params.extend(pv.data.chunks(pv.cols).map(<[f64]>::to_vec));
    }
    Ok(params)
}

fn evaluate(
    state: &NetworkState,
    problem: &ModelProblem,
    data: &NetworkData,
    idx: &[usize],
    violations: &mut usize,
) -> Result<Prediction> {
    let params = infer_idx(state, problem.bounds(), data, idx, violations)?;
    let reconstructed: Vec<Vec<f64>> = params.iter().map(|p| problem.evaluate(p, &data.inputs)).collect();
    let x: Vec<Vec<f64>> = idx.iter().map(|&i| data.x[i].clone()).collect();
    let loss = reconstruction_loss(problem, &data.inputs, &params, &x)?;
    Ok(Prediction {
        params,
        reconstructed,
        loss,
    })
}

fn check_outputs(state: &NetworkState, problem: &ModelProblem) -> Result<()> {
    if state.config.outputs != problem.bounds().len() {
        return Err(CestError::ShapeMismatch(format!(
            "network has {} outputs, model has {} parameters",
            state.config.outputs,
            problem.bounds().len()
        )));
    }
    Ok(())
}

/// Parameters (always inside the bounds box) and reconstructed curves for every sample.
pub fn predict(state: &NetworkState, problem: &ModelProblem, data: &NetworkData) -> Result<Prediction> {
    check_outputs(state, problem)?;
    let idx: Vec<usize> = (0..data.len()).collect();
    evaluate(state, problem, data, &idx, &mut 0)
}

/// Parameters only: the forward pass and bound map, without reconstruction.
pub fn infer(state: &NetworkState, problem: &ModelProblem, data: &NetworkData) -> Result<Vec<Vec<f64>>> {
    check_outputs(state, problem)?;
    let idx: Vec<usize> = (0..data.len()).collect();
    infer_idx(state, problem.bounds(), data, &idx, &mut 0)
}
