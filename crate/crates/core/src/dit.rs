//! Multi-reference conditional diffusion transformer.
//!
//! One joint self-attention runs over `[prompt | latent | content | style]`
//! tokens. A three-axis rotary encoding `(ref, y, x)` tells the streams
//! apart: latent tokens sit at ref 0, content tokens at ref 1 on the same
//! grid as the latent, style tokens at ref 2 on their own grid. The prompt
//! token is at `(0, 0, 0)`. Every block is modulated by an embedding of the
//! flow time `t` (shift/scale/gate).

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{config_err, contract_err, shape_err, Error, Result};
use crate::image::Image;
use crate::nn::Scope;
use crate::rng::Rng;
use crate::tensor::{Float, Graph, Params, Tensor, Var};

pub const TIME_FEATURES: usize = 64;
const NORM_EPS: f64 = 1e-6;
/// Spread of the patch embedder bias under `Init::AdaLnZero`.
pub const PATCH_BIAS_STD: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub image_size: usize,
    pub patch_size: usize,
    pub dim: usize,
    pub depth: usize,
    pub heads: usize,
    pub mlp_ratio: usize,
    pub prompt_vocab: usize,
    /// Head-dim split across the (ref, y, x) rotary axes.
    pub rope_axes: [usize; 3],
    pub rope_base: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            image_size: 64,
            patch_size: 8,
            dim: 128,
            depth: 6,
            heads: 4,
            mlp_ratio: 4,
            prompt_vocab: 4,
            rope_axes: [8, 12, 12],
            rope_base: 100.0,
        }
    }
}

impl ModelConfig {
    pub fn head_dim(&self) -> usize {
        self.dim / self.heads.max(1)
    }

    pub fn patch_len(&self) -> usize {
        3 * self.patch_size * self.patch_size
    }

    pub fn validate(&self) -> Result<()> {
        if self.patch_size == 0 || !self.image_size.is_multiple_of(self.patch_size) {
            return Err(config_err!(
                "image_size {} not divisible by patch_size {}",
                self.image_size,
                self.patch_size
            ));
        }
        if self.heads == 0 || !self.dim.is_multiple_of(self.heads) {
            return Err(config_err!("dim {} not divisible by heads {}", self.dim, self.heads));
        }
        if self.rope_axes.iter().sum::<usize>() != self.head_dim() || self.rope_axes.iter().any(|a| a % 2 != 0) {
            return Err(config_err!(
                "rope axes {:?} must be even and sum to head dim {}",
                self.rope_axes,
                self.head_dim()
            ));
        }
        if self.depth == 0 || self.mlp_ratio == 0 || self.prompt_vocab == 0 {
            return Err(config_err!("depth, mlp_ratio and prompt_vocab must be positive"));
        }
        Ok(())
    }

    /// Structured-text sidecar listing every field.
    pub fn to_sidecar(&self) -> String {
        format!(
            "[model]\nimage_size = {}\npatch_size = {}\ndim = {}\ndepth = {}\nheads = {}\nmlp_ratio = {}\nprompt_vocab = {}\nrope_axes = {},{},{}\nrope_base = {}\n",
            self.image_size,
            self.patch_size,
            self.dim,
            self.depth,
            self.heads,
            self.mlp_ratio,
            self.prompt_vocab,
            self.rope_axes[0],
            self.rope_axes[1],
            self.rope_axes[2],
            self.rope_base
        )
    }

    pub fn from_sidecar(text: &str) -> Result<Self> {
        let mut cfg = ModelConfig::default();
        let num = |k: &str, v: &str| v.parse::<usize>().map_err(|_| config_err!("model.cfg: bad value for `{k}`: {v}"));
        for line in text.lines().map(str::trim) {
            if line.is_empty() || line.starts_with('#') || line.starts_with('[') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .map(|(k, v)| (k.trim(), v.trim()))
                .ok_or_else(|| config_err!("model.cfg: malformed line `{line}`"))?;
            match k {
                "image_size" => cfg.image_size = num(k, v)?,
                "patch_size" => cfg.patch_size = num(k, v)?,
                "dim" => cfg.dim = num(k, v)?,
                "depth" => cfg.depth = num(k, v)?,
                "heads" => cfg.heads = num(k, v)?,
                "mlp_ratio" => cfg.mlp_ratio = num(k, v)?,
                "prompt_vocab" => cfg.prompt_vocab = num(k, v)?,
                "rope_axes" => {
                    let parts: Vec<usize> = v.split(',').map(|p| num(k, p.trim())).collect::<Result<_>>()?;
                    cfg.rope_axes = parts
                        .try_into()
                        .map_err(|_| config_err!("model.cfg: rope_axes needs three values"))?;
                }
                "rope_base" => {
                    cfg.rope_base = v.parse().map_err(|_| config_err!("model.cfg: bad rope_base `{v}`"))?
                }
                _ => return Err(config_err!("model.cfg: unknown key `{k}`")),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Names of every linear layer a LoRA adapter may target by default
    /// (attention and MLP projections).
    pub fn adapter_targets(&self) -> Vec<String> {
        (0..self.depth)
            .flat_map(|i| {
                ["attn.qkv", "attn.out", "mlp.fc1", "mlp.fc2"]
                    .into_iter()
                    .map(move |l| format!("blocks.{i}.{l}"))
            })
            .collect()
    }
}

/// How freshly created weights are filled.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Init {
    /// Modulation and output head start at zero, so the initial model
    /// predicts zero velocity.
    AdaLnZero,
    /// Every tensor random; used to probe the architecture.
    Random,
}

/// Stream a token belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamTag {
    Prompt,
    Latent,
    ContentRef,
    StyleRef,
}

impl StreamTag {
    pub fn ref_index(self) -> i64 {
        match self {
            StreamTag::Prompt | StreamTag::Latent => 0,
            StreamTag::ContentRef => 1,
            StreamTag::StyleRef => 2,
        }
    }
}

/// Token positions `(ref_or_time, y, x)` and stream tags for one sequence.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TokenLayout {
    pub positions: Vec<[i64; 3]>,
    pub tags: Vec<StreamTag>,
}

impl TokenLayout {
    pub fn push_grid(&mut self, tag: StreamTag, axis0: i64, gh: usize, gw: usize) {
        for y in 0..gh {
            for x in 0..gw {
                self.positions.push([axis0, y as i64, x as i64]);
                self.tags.push(tag);
            }
        }
    }

    pub fn push_single(&mut self, tag: StreamTag) {
        self.positions.push([0, 0, 0]);
        self.tags.push(tag);
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn range_of(&self, tag: StreamTag) -> std::ops::Range<usize> {
        let start = self.tags.iter().position(|&t| t == tag).unwrap_or(0);
        let n = self.tags.iter().filter(|&&t| t == tag).count();
        start..start + n
    }
}

/// Splits `[H, W, C]` into row-major `p x p` patches, `[(H/p)(W/p), p*p*C]`.
pub fn patchify<T: Float>(image: &Tensor<T>, p: usize) -> Result<Tensor<T>> {
    let &[h, w, c] = image.shape() else {
        return Err(shape_err!("patchify expects [H, W, C], got {:?}", image.shape()));
    };
    if p == 0 || h % p != 0 || w % p != 0 {
        return Err(shape_err!("image {h}x{w} not divisible by patch {p}"));
    }
    image
        .clone()
        .reshape(&[h / p, p, w / p, p, c])?
        .permute(&[0, 2, 1, 3, 4])?
        .reshape(&[(h / p) * (w / p), p * p * c])
}

pub fn unpatchify<T: Float>(tokens: &Tensor<T>, h: usize, w: usize, p: usize) -> Result<Tensor<T>> {
    let c = channels_of(tokens, h, w, p)?;
    tokens
        .clone()
        .reshape(&[h / p, w / p, p, p, c])?
        .permute(&[0, 2, 1, 3, 4])?
        .reshape(&[h, w, c])
}

fn channels_of<T: Float>(tokens: &Tensor<T>, h: usize, w: usize, p: usize) -> Result<usize> {
    match *tokens.shape() {
        [n, d] if p > 0 && h.is_multiple_of(p) && w.is_multiple_of(p) && n == (h / p) * (w / p) && d % (p * p) == 0 => Ok(d / (p * p)),
        _ => Err(shape_err!("cannot unpatchify {:?} into {h}x{w} with patch {p}", tokens.shape())),
    }
}

/// Graph version of [`unpatchify`].
pub fn unpatchify_var<T: Float>(g: &mut Graph<T>, tokens: Var, h: usize, w: usize, p: usize) -> Result<Var> {
    let c = channels_of(g.value(tokens), h, w, p)?;
    let x = g.reshape(tokens, &[h / p, w / p, p, p, c])?;
    let x = g.permute(x, &[0, 2, 1, 3, 4])?;
    g.reshape(x, &[h, w, c])
}

/// Per-token rotation tables for the rotary encoding, each `[seq, d/2]`.
///
/// Pair `j` of the head dim belongs to the axis whose sub-range contains it
/// and turns by `pos[axis] * base^(-2 j' / d_axis)`, `j'` being the pair's
/// index within that axis.
pub fn rope_tables<T: Float>(axes: [usize; 3], base: f64, positions: &[[i64; 3]]) -> (Arc<[T]>, Arc<[T]>) {
    let half: usize = axes.iter().sum::<usize>() / 2;
    let mut freqs = Vec::with_capacity(half);
    for (axis, &d) in axes.iter().enumerate() {
        for j in 0..d / 2 {
            freqs.push((axis, base.powf(-2.0 * j as f64 / d as f64)));
        }
    }
    let mut cos = Vec::with_capacity(positions.len() * half);
    let mut sin = Vec::with_capacity(positions.len() * half);
    for pos in positions {
        for &(axis, f) in &freqs {
            let angle = pos[axis] as f64 * f;
            cos.push(T::from_f64(angle.cos()));
            sin.push(T::from_f64(angle.sin()));
        }
    }
    (cos.into(), sin.into())
}

/// Applies the rotary encoding to `x: [seq, d]` at per-token positions,
/// each of which must have exactly three coordinates.
pub fn rope_encode<T: Float>(x: &Tensor<T>, positions: &[Vec<i64>], axes: [usize; 3], base: f64) -> Result<Tensor<T>> {
    let pos: Vec<[i64; 3]> = positions
        .iter()
        .map(|p| {
            <[i64; 3]>::try_from(p.as_slice())
                .map_err(|_| contract_err!("rope position needs 3 coordinates, got {}", p.len()))
        })
        .collect::<Result<_>>()?;
    if x.rank() != 2 || x.shape()[0] != pos.len() || x.shape()[1] != axes.iter().sum::<usize>() {
        return Err(shape_err!(
            "rope_encode: tensor {:?} vs {} positions and axes {:?}",
            x.shape(),
            pos.len(),
            axes
        ));
    }
    let (cos, sin) = rope_tables::<T>(axes, base, &pos);
    let mut g = Graph::new();
    let v = g.constant(x.clone());
    let y = g.rope(v, cos, sin)?;
    Ok(g.value(y).clone())
}

/// Sinusoidal features of the flow time, `[1, TIME_FEATURES]`.
pub fn time_features<T: Float>(t: f64) -> Tensor<T> {
    let half = TIME_FEATURES / 2;
    let mut v = Vec::with_capacity(TIME_FEATURES);
    let scaled = t * 1000.0;
    for i in 0..half {
        let f = (-(10000f64.ln()) * i as f64 / half as f64).exp();
        v.push(scaled * f);
    }
    let data: Vec<f64> = v.iter().map(|a| a.cos()).chain(v.iter().map(|a| a.sin())).collect();
    Tensor::from_f64(vec![1, TIME_FEATURES], &data).expect("time feature shape")
}

/// Resizes a style reference to the square of side `min(target_h, target_w)`.
pub fn prepare_style_ref(style: &Image, target_h: usize, target_w: usize) -> Result<Image> {
    if style.width == 0 || style.height == 0 {
        return Err(Error::Input("empty style image".into()));
    }
    let side = target_h.min(target_w);
    Ok(style.resize(side, side))
}

/// Model inputs for one sample, all in model space (`[-1, 1]`), `[H, W, 3]`.
#[derive(Debug, Clone, Copy)]
pub struct DitInputs<'a, T> {
    pub noisy: &'a Tensor<T>,
    pub content: &'a Tensor<T>,
    pub style: &'a Tensor<T>,
    pub prompt_id: usize,
    pub t: f64,
}

pub struct DitOutput {
    pub velocity: Var,
    pub attention: Vec<Var>,
    pub layout: TokenLayout,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dit {
    pub cfg: ModelConfig,
}

fn hw(t: &Tensor<impl Float>) -> Result<(usize, usize)> {
    match *t.shape() {
        [h, w, 3] => Ok((h, w)),
        _ => Err(shape_err!("expected an [H, W, 3] image tensor, got {:?}", t.shape())),
    }
}

impl Dit {
    pub fn new(cfg: ModelConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Dit { cfg })
    }

    pub fn init<T: Float>(&self, init: Init, rng: &mut Rng) -> Params<T> {
        let c = &self.cfg;
        let d = c.dim;
        let mut p = Params::new();
        let mut rng = rng.split("dit-init");
        let random = init == Init::Random;
        let mut linear = |p: &mut Params<T>, name: &str, out: usize, inp: usize, zero: bool| {
            let w = if zero && !random {
                Tensor::zeros(&[out, inp])
            } else {
                Tensor::randn(&[out, inp], 1.0 / (inp as f64).sqrt(), &mut rng)
            };
            p.insert(format!("{name}.weight"), w);
            let b = if random {
                Tensor::randn(&[out], 0.1, &mut rng)
            } else {
                Tensor::zeros(&[out])
            };
            p.insert(format!("{name}.bias"), b);
        };
        linear(&mut p, "patch", d, c.patch_len(), false);
        linear(&mut p, "time.fc1", d, TIME_FEATURES, false);
        linear(&mut p, "time.fc2", d, d, false);
        for i in 0..c.depth {
            let b = format!("blocks.{i}");
            linear(&mut p, &format!("{b}.ada"), 6 * d, d, true);
            linear(&mut p, &format!("{b}.attn.qkv"), 3 * d, d, false);
            linear(&mut p, &format!("{b}.attn.out"), d, d, false);
            linear(&mut p, &format!("{b}.mlp.fc1"), c.mlp_ratio * d, d, false);
            linear(&mut p, &format!("{b}.mlp.fc2"), d, c.mlp_ratio * d, false);
        }
        linear(&mut p, "final.ada", 2 * d, d, true);
        linear(&mut p, "head", c.patch_len(), d, true);
        let embed_std = if random { 1.0 } else { 0.5 };
        p.insert("prompt.embedding", Tensor::randn(&[c.prompt_vocab, d], embed_std, &mut rng));
        if !random {
            // A content-independent token component gives rotary attention
            // something to match positions on from the first step.
            p.insert("patch.bias", Tensor::randn(&[d], PATCH_BIAS_STD, &mut rng));
        }
        for i in 0..c.depth {
            for n in ["norm1", "norm2"] {
                p.insert(format!("blocks.{i}.{n}.gain"), Tensor::ones(&[d]));
            }
        }
        p.insert("final.norm.gain", Tensor::ones(&[d]));
        p
    }

    /// Learned prompt row, `[1, dim]`.
    pub fn embed_prompt<T: Float>(&self, scope: &mut Scope<'_, T>, prompt_id: usize) -> Result<Var> {
        if prompt_id >= self.cfg.prompt_vocab {
            return Err(config_err!(
                "prompt id {prompt_id} outside vocabulary of {}",
                self.cfg.prompt_vocab
            ));
        }
        let table = scope.param("prompt.embedding")?;
        scope.g.narrow(table, prompt_id, 1)
    }

    fn embed_image<T: Float>(&self, scope: &mut Scope<'_, T>, image: &Tensor<T>) -> Result<Var> {
        let tokens = patchify(image, self.cfg.patch_size)?;
        let x = scope.g.constant(tokens);
        scope.linear("patch", x)
    }

    /// Conditioning vector `silu(mlp(time_features(t)))`, `[1, dim]`.
    pub fn time_embedding<T: Float>(&self, scope: &mut Scope<'_, T>, t: f64) -> Result<Var> {
        let f = scope.g.constant(time_features(t));
        let h = scope.linear("time.fc1", f)?;
        let h = scope.g.silu(h);
        let c = scope.linear("time.fc2", h)?;
        Ok(scope.g.silu(c))
    }

    fn modulate<T: Float>(g: &mut Graph<T>, x: Var, shift: Var, scale: Var) -> Result<Var> {
        let s1 = g.add_scalar(scale, T::one());
        let y = g.mul_row(x, s1)?;
        g.add_row(y, shift)
    }

    /// Joint multi-head self-attention with rotary positions. Returns the
    /// block output and the attention probabilities `[heads, seq, seq]`.
    fn attention<T: Float>(
        &self,
        scope: &mut Scope<'_, T>,
        prefix: &str,
        h: Var,
        rope: &(Arc<[T]>, Arc<[T]>),
    ) -> Result<(Var, Var)> {
        let (heads, hd) = (self.cfg.heads, self.cfg.head_dim());
        let seq = scope.g.shape(h)[0];
        let qkv = scope.linear(&format!("{prefix}.qkv"), h)?;
        let g = &mut *scope.g;
        let qkv = g.reshape(qkv, &[seq, 3, heads, hd])?;
        let qkv = g.permute(qkv, &[1, 2, 0, 3])?;
        let mut pick = |i: usize| -> Result<Var> {
            let v = g.narrow(qkv, i, 1)?;
            g.reshape(v, &[heads, seq, hd])
        };
        let (q, k, v) = (pick(0)?, pick(1)?, pick(2)?);
        let q = g.rope(q, rope.0.clone(), rope.1.clone())?;
        let k = g.rope(k, rope.0.clone(), rope.1.clone())?;
        let scores = g.matmul_t(q, k)?;
        let scores = g.scale(scores, T::from_f64(1.0 / (hd as f64).sqrt()));
        let probs = g.softmax(scores, 2)?;
        let o = g.matmul(probs, v)?;
        let o = g.permute(o, &[1, 0, 2])?;
        let o = g.reshape(o, &[seq, heads * hd])?;
        let out = scope.linear(&format!("{prefix}.out"), o)?;
        Ok((out, probs))
    }

    /// Runs the transformer trunk over pre-embedded tokens `x: [seq, dim]`
    /// conditioned on `cond: [1, dim]`, returning head outputs for every
    /// token, `[seq, patch_len]`.
    pub fn trunk<T: Float>(
        &self,
        scope: &mut Scope<'_, T>,
        mut x: Var,
        cond: Var,
        layout: &TokenLayout,
        attention: &mut Vec<Var>,
    ) -> Result<Var> {
        let d = self.cfg.dim;
        let rope = rope_tables::<T>(self.cfg.rope_axes, self.cfg.rope_base, &layout.positions);
        for i in 0..self.cfg.depth {
            let b = format!("blocks.{i}");
            let m = scope.linear(&format!("{b}.ada"), cond)?;
            let m = scope.g.reshape(m, &[6, d])?;
            let parts: Vec<Var> = (0..6).map(|j| scope.g.narrow(m, j, 1)).collect::<Result<_>>()?;
            let g1 = scope.param(&format!("{b}.norm1.gain"))?;
            let h = scope.g.rms_norm(x, g1, NORM_EPS)?;
            let h = Self::modulate(scope.g, h, parts[0], parts[1])?;
            let (a, probs) = self.attention(scope, &format!("{b}.attn"), h, &rope)?;
            attention.push(probs);
            let a = scope.g.mul_row(a, parts[2])?;
            x = scope.g.add(x, a)?;

            let g2 = scope.param(&format!("{b}.norm2.gain"))?;
            let h = scope.g.rms_norm(x, g2, NORM_EPS)?;
            let h = Self::modulate(scope.g, h, parts[3], parts[4])?;
            let h = scope.linear(&format!("{b}.mlp.fc1"), h)?;
            let h = scope.g.gelu(h);
            let h = scope.linear(&format!("{b}.mlp.fc2"), h)?;
            let h = scope.g.mul_row(h, parts[5])?;
            x = scope.g.add(x, h)?;
        }
        let m = scope.linear("final.ada", cond)?;
        let m = scope.g.reshape(m, &[2, d])?;
        let (shift, scale) = (scope.g.narrow(m, 0, 1)?, scope.g.narrow(m, 1, 1)?);
        let gf = scope.param("final.norm.gain")?;
        let h = scope.g.rms_norm(x, gf, NORM_EPS)?;
        let h = Self::modulate(scope.g, h, shift, scale)?;
        scope.linear("head", h)
    }

    /// Predicts the flow velocity for the noisy latent, `[H, W, 3]`.
    pub fn forward<T: Float>(&self, scope: &mut Scope<'_, T>, inp: DitInputs<'_, T>) -> Result<DitOutput> {
        let p = self.cfg.patch_size;
        let (h, w) = hw(inp.noisy)?;
        let (ch, cw) = hw(inp.content)?;
        let (sh, sw) = hw(inp.style)?;
        if ch * w != cw * h {
            return Err(Error::Input(format!(
                "content reference {cw}x{ch} does not share the output aspect ratio {w}x{h}"
            )));
        }
        if sh != sw {
            return Err(Error::Input(format!("style reference must be square, got {sw}x{sh}")));
        }
        if !(0.0..=1.0).contains(&inp.t) {
            return Err(contract_err!("flow time {} outside [0, 1]", inp.t));
        }

        let mut layout = TokenLayout::default();
        layout.push_single(StreamTag::Prompt);
        layout.push_grid(StreamTag::Latent, StreamTag::Latent.ref_index(), h / p, w / p);
        layout.push_grid(StreamTag::ContentRef, StreamTag::ContentRef.ref_index(), ch / p, cw / p);
        layout.push_grid(StreamTag::StyleRef, StreamTag::StyleRef.ref_index(), sh / p, sw / p);

        let prompt = self.embed_prompt(scope, inp.prompt_id)?;
        let latent = self.embed_image(scope, inp.noisy)?;
        let content = self.embed_image(scope, inp.content)?;
        let style = self.embed_image(scope, inp.style)?;
        let x = scope.g.concat(&[prompt, latent, content, style])?;
        let cond = self.time_embedding(scope, inp.t)?;

        let mut attention = Vec::with_capacity(self.cfg.depth);
        let out = self.trunk(scope, x, cond, &layout, &mut attention)?;
        let lat = layout.range_of(StreamTag::Latent);
        let out = scope.g.narrow(out, lat.start, lat.len())?;
        let velocity = unpatchify_var(scope.g, out, h, w, p)?;
        Ok(DitOutput {
            velocity,
            attention,
            layout,
        })
    }

    /// Forward pass without gradients.
    pub fn predict<T: Float>(
        &self,
        base: &Params<T>,
        adapter: Option<&crate::lora::LoraAdapter<T>>,
        inp: DitInputs<'_, T>,
    ) -> Result<Tensor<T>> {
        let mut g = Graph::new();
        let mut scope = Scope::new(&mut g, base).with_adapter(adapter);
        let out = self.forward(&mut scope, inp)?;
        Ok(g.value(out.velocity).clone())
    }
}
