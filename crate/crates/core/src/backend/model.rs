// SPDX-License-Identifier: MIT OR Apache-2.0

//! Deterministic pre-norm decoder-only transformer.
//!
//! Weights come from a seeded ChaCha stream, so two backends built from the
//! same [`BackendConfig`] are functionally identical. Decoding is greedy with
//! a per-call KV cache; hooks and captures live in the call, never in the
//! backend, so concurrent calls cannot observe each other.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use super::activation::{ActivationRecord, FINAL_POSITION};
use super::config::BackendConfig;
use super::tokenizer::{TokenId, Tokenizer, EOS};
use super::{add_scaled, PositionMode, Steering};
use crate::error::{LabError, Result};

const LN_EPS: f64 = 1e-5;

#[derive(Clone, Debug)]
struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    fn random(rows: usize, cols: usize, std: f64, rng: &mut ChaCha8Rng) -> Self {
        let data = (0..rows * cols)
            .map(|_| {
                let z: f64 = StandardNormal.sample(rng);
                std * z
            })
            .collect();
        Matrix { rows, cols, data }
    }

    fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// `x · W` for a row vector `x` of length `rows`.
    fn apply(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.rows);
        let mut out = vec![0.0; self.cols];
        for (xi, row) in x.iter().zip(self.data.chunks_exact(self.cols)) {
            for (o, w) in out.iter_mut().zip(row) {
                *o += xi * w;
            }
        }
        out
    }
}

fn layer_norm(x: &[f64]) -> Vec<f64> {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let inv = 1.0 / (var + LN_EPS).sqrt();
    x.iter().map(|v| (v - mean) * inv).collect()
}

fn gelu(x: f64) -> f64 {
    const C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
    0.5 * x * (1.0 + (C * (x + 0.044715 * x * x * x)).tanh())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Clone, Debug)]
struct Block {
    wq: Matrix,
    wk: Matrix,
    wv: Matrix,
    wo: Matrix,
    w_in: Matrix,
    w_out: Matrix,
}

#[derive(Default)]
struct LayerCache {
    keys: Vec<Vec<f64>>,
    values: Vec<Vec<f64>>,
}

impl Block {
    fn init(d: usize, rng: &mut ChaCha8Rng) -> Self {
        let s = 1.0 / (d as f64).sqrt();
        Block {
            wq: Matrix::random(d, d, s, rng),
            wk: Matrix::random(d, d, s, rng),
            wv: Matrix::random(d, d, s, rng),
            wo: Matrix::random(d, d, s, rng),
            w_in: Matrix::random(d, 4 * d, s, rng),
            w_out: Matrix::random(4 * d, d, 0.5 / (d as f64).sqrt(), rng),
        }
    }

    fn forward(&self, h: &mut [Vec<f64>], start: usize, cache: &mut LayerCache, n_heads: usize) {
        let d = self.wq.rows;
        let hd = d / n_heads;
        let inv_sqrt = 1.0 / (hd as f64).sqrt();

        let mut queries = Vec::with_capacity(h.len());
        for x in h.iter() {
            let xn = layer_norm(x);
            queries.push(self.wq.apply(&xn));
            cache.keys.push(self.wk.apply(&xn));
            cache.values.push(self.wv.apply(&xn));
        }

        for (t, q) in queries.iter().enumerate() {
            let visible = start + t + 1;
            let mut mixed = vec![0.0; d];
            let mut scores = vec![0.0; visible];
            for head in 0..n_heads {
                let span = head * hd..(head + 1) * hd;
                let qh = &q[span.clone()];
                let mut max = f64::NEG_INFINITY;
                for (j, s) in scores.iter_mut().enumerate() {
                    *s = dot(qh, &cache.keys[j][span.clone()]) * inv_sqrt;
                    max = max.max(*s);
                }
                let mut total = 0.0;
                for s in scores.iter_mut() {
                    *s = (*s - max).exp();
                    total += *s;
                }
                for (j, s) in scores.iter().enumerate() {
                    let w = s / total;
                    for (m, v) in mixed[span.clone()].iter_mut().zip(&cache.values[j][span.clone()]) {
                        *m += w * v;
                    }
                }
            }
            let attn = self.wo.apply(&mixed);
            for (hv, a) in h[t].iter_mut().zip(&attn) {
                *hv += a;
            }
        }

        for x in h.iter_mut() {
            let hidden: Vec<f64> = self.w_in.apply(&layer_norm(x)).into_iter().map(gelu).collect();
            let out = self.w_out.apply(&hidden);
            for (hv, o) in x.iter_mut().zip(&out) {
                *hv += o;
            }
        }
    }
}

/// Which residual vectors to record during the prompt pass.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CapturePlan {
    pub layers: Vec<usize>,
    pub mode: PositionMode,
}

/// A readout tap used to build planted-signal fixtures: the logit gap between
/// two label tokens is made exactly `2·gain·⟨h, direction⟩`, with `h` the
/// residual after block `layer` at the current position.
#[derive(Clone, Debug, PartialEq)]
pub struct PlantedReadout {
    pub layer: usize,
    pub direction: Vec<f64>,
    pub realized_token: TokenId,
    pub paper_token: TokenId,
    pub gain: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GenerationResult {
    pub prompt_id: String,
    pub text: String,
    pub tokens: Vec<TokenId>,
    pub logprobs: Vec<f64>,
    #[serde(skip)]
    pub captured: Vec<ActivationRecord>,
    pub manifest_ref: Option<String>,
}

#[derive(Clone, Debug)]
pub struct Backend {
    config: BackendConfig,
    tokenizer: Tokenizer,
    tok_emb: Matrix,
    pos_emb: Matrix,
    blocks: Vec<Block>,
    unembed: Matrix,
    planted: Option<PlantedReadout>,
}

pub fn init_backend(config: &BackendConfig) -> Result<Backend> {
    Backend::new(config.clone())
}

struct Pass<'s, 'd> {
    steering: Option<&'s Steering<'d>>,
    capture: Option<&'s CapturePlan>,
}

impl Backend {
    pub fn new(config: BackendConfig) -> Result<Self> {
        config.validate()?;
        let d = config.d_model;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let tok_emb = Matrix::random(config.vocab_size, d, 1.0, &mut rng);
        let pos_emb = Matrix::random(config.max_context, d, 0.3, &mut rng);
        let blocks = (0..config.n_layers).map(|_| Block::init(d, &mut rng)).collect();
        let unembed = Matrix::random(config.vocab_size, d, 2.0 / (d as f64).sqrt(), &mut rng);
        let tokenizer = Tokenizer::new(config.vocab_size, config.seed);
        Ok(Backend {
            config,
            tokenizer,
            tok_emb,
            pos_emb,
            blocks,
            unembed,
            planted: None,
        })
    }

    pub fn config(&self) -> &BackendConfig {
        &self.config
    }

    pub fn tokenizer(&self) -> &Tokenizer {
        &self.tokenizer
    }

    /// Producer tag recorded in activation files captured from this backend.
    pub fn producer_tag(&self) -> String {
        let c = &self.config;
        format!(
            "toy-decoder;layers={};d_model={};heads={};vocab={};seed={};hook=block_output",
            c.n_layers, c.d_model, c.n_heads, c.vocab_size, c.seed
        )
    }

    /// Installs a planted label readout (see [`PlantedReadout`]). The realized
    /// label's unembedding row is overwritten with the paper label's row so the
    /// tap is the only source of difference between them.
    pub fn with_planted_readout(mut self, readout: PlantedReadout) -> Result<Self> {
        self.check_layer(readout.layer)?;
        self.check_dim(readout.direction.len())?;
        for t in [readout.realized_token, readout.paper_token] {
            self.check_token(t)?;
        }
        let paper_row = self.unembed.row(readout.paper_token as usize).to_vec();
        self.unembed
            .row_mut(readout.realized_token as usize)
            .copy_from_slice(&paper_row);
        self.planted = Some(readout);
        Ok(self)
    }

    /// Adds `offset` to the input embedding of `token`.
    pub fn with_token_offset(mut self, token: TokenId, offset: &[f64]) -> Result<Self> {
        self.check_token(token)?;
        self.check_dim(offset.len())?;
        for (e, o) in self.tok_emb.row_mut(token as usize).iter_mut().zip(offset) {
            *e += o;
        }
        Ok(self)
    }

    fn check_layer(&self, layer: usize) -> Result<()> {
        if layer >= self.config.n_layers {
            return Err(LabError::LayerOutOfRange {
                layer,
                n_layers: self.config.n_layers,
            });
        }
        Ok(())
    }

    fn check_dim(&self, len: usize) -> Result<()> {
        if len != self.config.d_model {
            return Err(LabError::LengthMismatch {
                expected: self.config.d_model,
                found: len,
            });
        }
        Ok(())
    }

    fn check_token(&self, t: TokenId) -> Result<()> {
        if t as usize >= self.config.vocab_size {
            return Err(LabError::Invalid(format!("token id {t} outside vocabulary")));
        }
        Ok(())
    }

    fn check_call(
        &self,
        prompt: &[TokenId],
        extra: usize,
        steering: Option<&Steering<'_>>,
        capture: Option<&CapturePlan>,
    ) -> Result<()> {
        if prompt.is_empty() {
            return Err(LabError::Invalid("empty prompt".into()));
        }
        let needed = prompt.len() + extra;
        if needed > self.config.max_context {
            return Err(LabError::ContextOverflow {
                needed,
                max: self.config.max_context,
            });
        }
        for &t in prompt {
            self.check_token(t)?;
        }
        if let Some(s) = steering {
            self.check_layer(s.layer)?;
            self.check_dim(s.direction.vector.len())?;
        }
        if let Some(c) = capture {
            for &l in &c.layers {
                self.check_layer(l)?;
            }
        }
        Ok(())
    }

    /// Runs blocks over `tokens` at absolute positions `start..`, returning the
    /// logits at the last of them.
    fn pass(
        &self,
        tokens: &[TokenId],
        start: usize,
        cache: &mut [LayerCache],
        hooks: &Pass<'_, '_>,
        captured: &mut Vec<ActivationRecord>,
        prompt_id: &str,
    ) -> Vec<f64> {
        let n = tokens.len();
        let mut h: Vec<Vec<f64>> = tokens
            .iter()
            .enumerate()
            .map(|(i, &t)| {
                self.tok_emb
                    .row(t as usize)
                    .iter()
                    .zip(self.pos_emb.row(start + i))
                    .map(|(a, b)| a + b)
                    .collect()
            })
            .collect();

        let mut tap = None;
        for (layer, (block, layer_cache)) in self.blocks.iter().zip(cache.iter_mut()).enumerate() {
            block.forward(&mut h, start, layer_cache, self.config.n_heads);

            if let Some(s) = hooks.steering.filter(|s| s.layer == layer) {
                let targets = match s.mode {
                    PositionMode::Final => n - 1..n,
                    PositionMode::All => 0..n,
                };
                for t in targets {
                    add_scaled(&mut h[t], &s.direction.vector, s.scale.value());
                }
            }

            if let Some(plan) = hooks.capture.filter(|c| c.layers.contains(&layer)) {
                let mut push = |t: usize, position: i32| {
                    captured.push(ActivationRecord {
                        prompt_id: prompt_id.to_string(),
                        layer,
                        position,
                        vector: h[t].iter().map(|&v| v as f32).collect(),
                    })
                };
                match plan.mode {
                    PositionMode::Final => push(n - 1, FINAL_POSITION),
                    PositionMode::All => (0..n).for_each(|t| push(t, (start + t) as i32)),
                }
            }

            if let Some(p) = self.planted.as_ref().filter(|p| p.layer == layer) {
                tap = Some(dot(&h[n - 1], &p.direction));
            }
        }

        let x = layer_norm(&h[n - 1]);
        let mut logits: Vec<f64> = (0..self.config.vocab_size)
            .map(|v| dot(self.unembed.row(v), &x))
            .collect();
        if let (Some(p), Some(proj)) = (&self.planted, tap) {
            logits[p.realized_token as usize] += p.gain * proj;
            logits[p.paper_token as usize] -= p.gain * proj;
        }
        logits
    }

    fn new_cache(&self) -> Vec<LayerCache> {
        (0..self.config.n_layers).map(|_| LayerCache::default()).collect()
    }

    /// Greedy generation with optional steering and capture.
    ///
    /// With `PositionMode::Final` the steering vector is added at the last
    /// prompt position during the prompt pass and at the current position of
    /// every decode step; with `All` it is added at every position of every
    /// pass. Captures are taken after the hook, during the prompt pass only.
    pub fn run_prompt(
        &self,
        prompt_id: &str,
        prompt: &[TokenId],
        steering: Option<&Steering<'_>>,
        capture: Option<&CapturePlan>,
        max_new_tokens: usize,
    ) -> Result<GenerationResult> {
        self.check_call(prompt, max_new_tokens, steering, capture)?;
        let mut cache = self.new_cache();
        let mut captured = Vec::new();
        let prefill = Pass { steering, capture };
        let mut logits = self.pass(prompt, 0, &mut cache, &prefill, &mut captured, prompt_id);

        let decode = Pass {
            steering,
            capture: None,
        };
        let mut tokens = Vec::new();
        let mut logprobs = Vec::new();
        for step in 0..max_new_tokens {
            let (next, lp) = greedy(&logits);
            tokens.push(next);
            logprobs.push(lp);
            if next == EOS || step + 1 == max_new_tokens {
                break;
            }
            let pos = prompt.len() + step;
            logits = self.pass(&[next], pos, &mut cache, &decode, &mut captured, prompt_id);
        }

        let text_tokens: Vec<TokenId> = tokens.iter().copied().filter(|&t| t != EOS).collect();
        Ok(GenerationResult {
            prompt_id: prompt_id.to_string(),
            text: self.tokenizer.decode(&text_tokens),
            tokens,
            logprobs,
            captured,
            manifest_ref: None,
        })
    }

    /// Convenience wrapper that tokenizes `text` (with BOS) first.
    pub fn run_text(
        &self,
        prompt_id: &str,
        text: &str,
        steering: Option<&Steering<'_>>,
        capture: Option<&CapturePlan>,
        max_new_tokens: usize,
    ) -> Result<GenerationResult> {
        let prompt = self.tokenizer.encode_prompt(text);
        self.run_prompt(prompt_id, &prompt, steering, capture, max_new_tokens)
    }

    /// Teacher-forced log-probabilities of `continuation` after `prompt`, under
    /// the same hook schedule as [`run_prompt`](Self::run_prompt).
    pub fn score_continuation(
        &self,
        prompt: &[TokenId],
        continuation: &[TokenId],
        steering: Option<&Steering<'_>>,
    ) -> Result<Vec<f64>> {
        if continuation.is_empty() {
            return Err(LabError::Invalid("empty continuation".into()));
        }
        self.check_call(prompt, continuation.len(), steering, None)?;
        for &t in continuation {
            self.check_token(t)?;
        }
        let mut cache = self.new_cache();
        let mut sink = Vec::new();
        let hooks = Pass {
            steering,
            capture: None,
        };
        let mut logits = self.pass(prompt, 0, &mut cache, &hooks, &mut sink, "");
        let mut out = Vec::with_capacity(continuation.len());
        for (i, &t) in continuation.iter().enumerate() {
            out.push(log_softmax_at(&logits, t as usize));
            if i + 1 < continuation.len() {
                logits = self.pass(&[t], prompt.len() + i, &mut cache, &hooks, &mut sink, "");
            }
        }
        Ok(out)
    }
}

fn log_softmax_at(logits: &[f64], idx: usize) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = logits.iter().map(|l| (l - max).exp()).sum();
    logits[idx] - (max + sum.ln())
}

/// Argmax with ties broken toward the lowest id.
fn greedy(logits: &[f64]) -> (TokenId, f64) {
    let mut best = 0;
    for (i, &l) in logits.iter().enumerate() {
        if l > logits[best] {
            best = i;
        }
    }
    (best as TokenId, log_softmax_at(logits, best))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_softmax_is_nonpositive_and_normalised() {
        let logits = [1.0, 3.0, -2.0, 3.0];
        let total: f64 = (0..4).map(|i| log_softmax_at(&logits, i).exp()).sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert!((0..4).all(|i| log_softmax_at(&logits, i) <= 0.0));
        assert_eq!(greedy(&logits).0, 1);
    }

    #[test]
    fn layer_norm_moments() {
        let y = layer_norm(&[1.0, 2.0, 3.0, 10.0]);
        let mean: f64 = y.iter().sum::<f64>() / 4.0;
        let var: f64 = y.iter().map(|v| v * v).sum::<f64>() / 4.0;
        assert!(mean.abs() < 1e-12);
        assert!((var - 1.0).abs() < 1e-5);
    }

    #[test]
    fn matrix_apply() {
        let m = Matrix {
            rows: 2,
            cols: 3,
            data: vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0],
        };
        assert_eq!(m.apply(&[1.0, -1.0]), vec![-3.0, -3.0, -3.0]);
    }
}
