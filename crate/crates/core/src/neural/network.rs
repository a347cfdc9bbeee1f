use std::fmt;
use std::path::Path;
use std::str::FromStr;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::autodiff::{Tape, Tensor, Var};
use crate::error::{CestError, Result};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    /// 8 layers, 8 heads, width 1024, decoder channels 512/256/128/64.
    Paper,
    /// 2 layers, 4 heads, width 64, decoder channels 32/16.
    Desk,
}

impl FromStr for Preset {
    type Err = CestError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper" => Ok(Preset::Paper),
            "desk" => Ok(Preset::Desk),
            other => Err(CestError::InvalidConfig(format!("unknown preset '{other}'"))),
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Preset::Paper => "paper",
            Preset::Desk => "desk",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub layers: usize,
    pub heads: usize,
    pub hidden: usize,
    pub mlp: usize,
    pub decoder_channels: Vec<usize>,
    /// Width of the hidden layer of the output head.
    pub head_hidden: usize,
    /// One token per frequency offset.
    pub tokens: usize,
    /// One channel per saturation amplitude.
    pub in_channels: usize,
    /// Number of fitted parameters.
    pub outputs: usize,
}

impl NetworkConfig {
    pub fn preset(preset: Preset, tokens: usize, in_channels: usize, outputs: usize) -> Self {
        let (layers, heads, hidden, mlp, decoder_channels, head_hidden) = match preset {
            Preset::Paper => (8, 8, 1024, 1024, vec![512, 256, 128, 64], 1024),
            Preset::Desk => (2, 4, 64, 64, vec![32, 16], 64),
        };
        Self {
            layers,
            heads,
            hidden,
            mlp,
            decoder_channels,
            head_hidden,
            tokens,
            in_channels,
            outputs,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [self.layers, self.heads, self.hidden, self.mlp, self.head_hidden, self.tokens, self.in_channels, self.outputs];
        if dims.contains(&0) || self.decoder_channels.is_empty() || self.decoder_channels.contains(&0) {
            return Err(CestError::InvalidConfig("network dimensions must be at least 1".into()));
        }
        if self.hidden % self.heads != 0 {
            return Err(CestError::InvalidConfig(format!(
                "{} heads do not divide hidden size {}",
                self.heads, self.hidden
            )));
        }
        Ok(())
    }

    /// Parameter names and shapes in storage order.
    pub fn layout(&self) -> Vec<(String, usize, usize)> {
        let (h, m) = (self.hidden, self.mlp);
        let mut out = vec![
            ("embed.w".to_string(), self.in_channels, h),
            ("embed.b".to_string(), 1, h),
            ("pos".to_string(), self.tokens, h),
        ];
        for l in 0..self.layers {
            for (name, r, c) in [
                ("ln1.g", 1, h),
                ("ln1.b", 1, h),
                ("qkv.w", h, 3 * h),
                ("qkv.b", 1, 3 * h),
                ("out.w", h, h),
                ("out.b", 1, h),
                ("ln2.g", 1, h),
                ("ln2.b", 1, h),
                ("mlp1.w", h, m),
                ("mlp1.b", 1, m),
                ("mlp2.w", m, h),
                ("mlp2.b", 1, h),
            ] {
                out.push((format!("enc{l}.{name}"), r, c));
            }
        }
        let mut c_in = h;
        for (j, &c_out) in self.decoder_channels.iter().enumerate() {
            out.push((format!("dec{j}.w"), 3 * c_in, c_out));
            out.push((format!("dec{j}.b"), 1, c_out));
            c_in = c_out;
        }
        out.push(("head1.w".into(), c_in, self.head_hidden));
        out.push(("head1.b".into(), 1, self.head_hidden));
        out.push(("head2.w".into(), self.head_hidden, self.outputs));
        out.push(("head2.b".into(), 1, self.outputs));
        out
    }
}

/// Weights, Adam moments and step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkState {
    pub config: NetworkConfig,
    pub names: Vec<String>,
    pub weights: Vec<Tensor>,
    pub first_moment: Vec<Tensor>,
    pub second_moment: Vec<Tensor>,
    pub step: u64,
}

/// Scale of the learned positional embeddings at initialization.
const POS_INIT: f64 = 0.02;

impl NetworkState {
    /// Seeded initialization: weights uniform in `±1/sqrt(fan_in)`, layer-norm
    /// gains one, biases zero.
    pub fn init(config: NetworkConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut names = Vec::new();
        let mut weights = Vec::new();
        for (name, rows, cols) in config.layout() {
            let n = rows * cols;
            let data: Vec<f64> = if name.ends_with(".g") {
                vec![1.0; n]
            } else if name.ends_with(".b") {
                vec![0.0; n]
            } else {
                let bound = if name == "pos" { POS_INIT } else { 1.0 / (rows as f64).sqrt() };
                (0..n).map(|_| rng.random_range(-bound..bound)).collect()
            };
            names.push(name);
            weights.push(Tensor::from_vec(rows, cols, data));
        }
        let zeros: Vec<Tensor> = weights.iter().map(|w| Tensor::zeros(w.rows, w.cols)).collect();
        Ok(Self {
            config,
            names,
            first_moment: zeros.clone(),
            second_moment: zeros,
            weights,
            step: 0,
        })
    }

    pub fn parameter_count(&self) -> usize {
        self.weights.iter().map(|w| w.data.len()).sum()
    }

    /// Records the encoder-decoder on `tape` for a batch given as
    /// `(batch * tokens) x in_channels` token rows. Returns the weight leaves (in
    /// storage order) and the raw `batch x outputs` result.
    pub fn forward(&self, tape: &mut Tape, tokens: Tensor) -> Result<(Vec<Var>, Var)> {
        let cfg = &self.config;
        if tokens.cols != cfg.in_channels || tokens.rows % cfg.tokens != 0 {
            return Err(CestError::ShapeMismatch(format!(
                "expected rows of {} channels in blocks of {} tokens, got {} x {}",
                cfg.in_channels, cfg.tokens, tokens.rows, tokens.cols
            )));
        }
        let w: Vec<Var> = self.weights.iter().map(|t| tape.leaf(t.clone())).collect();
        let mut it = w.iter().copied();
        let mut next = || it.next().expect("weight layout");
        let t = cfg.tokens;

        let x = tape.leaf(tokens);
        let (ew, eb, pos) = (next(), next(), next());
        let mut h = tape.linear(x, ew, eb);
        h = tape.add_tiled(h, pos);
        for _ in 0..cfg.layers {
            let (g1, b1, wqkv, bqkv, wo, bo, g2, b2, w1, bm1, w2, bm2) = (
                next(),
                next(),
                next(),
                next(),
                next(),
                next(),
                next(),
                next(),
                next(),
                next(),
                next(),
                next(),
            );
            let a = tape.layer_norm(h, g1, b1);
            let qkv = tape.linear(a, wqkv, bqkv);
            let att = tape.attention(qkv, cfg.heads, t);
            let o = tape.linear(att, wo, bo);
            h = tape.add(h, o);
            let a = tape.layer_norm(h, g2, b2);
            let m = tape.linear(a, w1, bm1);
            let m = tape.gelu(m);
            let m = tape.linear(m, w2, bm2);
            h = tape.add(h, m);
        }
        for _ in &cfg.decoder_channels {
            let (cw, cb) = (next(), next());
            let cols = tape.im2col(h, t);
            let c = tape.linear(cols, cw, cb);
            h = tape.relu(c);
        }
        let pooled = tape.mean_tokens(h, t);
        let (w1, b1, w2, b2) = (next(), next(), next(), next());
        let z = tape.linear(pooled, w1, b1);
        let z = tape.relu(z);
        let f = tape.linear(z, w2, b2);
        Ok((w, f))
    }

    pub fn to_json(&self) -> Result<String> {
        let enc = |t: &Tensor| {
            let bytes: Vec<u8> = t.data.iter().flat_map(|v| v.to_le_bytes()).collect();
            B64.encode(bytes)
        };
        let arrays = |ts: &[Tensor]| -> Vec<ArrayRecord> {
            self.names
                .iter()
                .zip(ts)
                .map(|(n, t)| ArrayRecord {
                    name: n.clone(),
                    rows: t.rows,
                    cols: t.cols,
                    data: enc(t),
                })
                .collect()
        };
        let ck = Checkpoint {
            version: CHECKPOINT_VERSION,
            config: self.config.clone(),
            step: self.step,
            weights: arrays(&self.weights),
            first_moment: arrays(&self.first_moment),
            second_moment: arrays(&self.second_moment),
        };
        Ok(serde_json::to_string(&ck)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let ck: Checkpoint = serde_json::from_str(text)?;
        if ck.version != CHECKPOINT_VERSION {
            return Err(CestError::InvalidConfig(format!(
                "checkpoint version {} is not supported (expected {CHECKPOINT_VERSION})",
                ck.version
            )));
        }
        ck.config.validate()?;
        let layout = ck.config.layout();
        let decode = |records: &[ArrayRecord]| -> Result<Vec<Tensor>> {
            if records.len() != layout.len() {
                return Err(CestError::ShapeMismatch(format!(
                    "checkpoint has {} arrays, configuration needs {}",
                    records.len(),
                    layout.len()
                )));
            }
            records
                .iter()
                .zip(&layout)
                .map(|(r, (name, rows, cols))| {
                    if &r.name != name || r.rows != *rows || r.cols != *cols {
                        return Err(CestError::ShapeMismatch(format!(
                            "array '{}' ({} x {}) does not match '{name}' ({rows} x {cols})",
                            r.name, r.rows, r.cols
                        )));
                    }
                    let bytes = B64
                        .decode(&r.data)
                        .map_err(|e| CestError::InvalidConfig(format!("array '{name}': {e}")))?;
                    if bytes.len() != rows * cols * 8 {
                        return Err(CestError::ShapeMismatch(format!("array '{name}' has {} bytes", bytes.len())));
                    }
                    let data = bytes
                        .chunks_exact(8)
                        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                        .collect();
                    Ok(Tensor::from_vec(*rows, *cols, data))
                })
                .collect()
        };
        Ok(Self {
            names: layout.iter().map(|(n, _, _)| n.clone()).collect(),
            weights: decode(&ck.weights)?,
            first_moment: decode(&ck.first_moment)?,
            second_moment: decode(&ck.second_moment)?,
            step: ck.step,
            config: ck.config,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::io::write_file(path, &self.to_json()?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CestError::io(path, e))?;
        Self::from_json(&text).map_err(|e| CestError::parse(path, e.to_string()))
    }
}

/// Checkpoint container; arrays are base64 of row-major little-endian f64.
#[derive(Serialize, Deserialize)]
struct Checkpoint {
    version: u32,
    config: NetworkConfig,
    step: u64,
    weights: Vec<ArrayRecord>,
    first_moment: Vec<ArrayRecord>,
    second_moment: Vec<ArrayRecord>,
}

#[derive(Serialize, Deserialize)]
struct ArrayRecord {
    name: String,
    rows: usize,
    cols: usize,
    data: String,
}
