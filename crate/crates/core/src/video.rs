//! First-frame-conditioned video stylization.
//!
//! Each frame of the noisy latent is fused channel-wise with its source frame
//! and embedded by a video patch embedder at temporal index `k`. The stylized
//! first frame is embedded by a separate style embedder at temporal index 0,
//! so that frame 0 of the output anchors on it. A learned empty-text token
//! completes the sequence. Training is plain flow matching on stylized clips.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dit::{patchify, unpatchify_var, Dit, Init, ModelConfig, PATCH_BIAS_STD, StreamTag, TokenLayout};
use crate::error::{config_err, contract_err, shape_err, Error, Result};
use crate::flow::{fm_loss, integrate, FlowBatch, VelocityField};
use crate::image::Image;
use crate::metrics::frame_feature;
use crate::nn::Scope;
use crate::rng::Rng;
use crate::tensor::{read_checkpoint, write_atomic, write_checkpoint, Adam, AdamConfig, Checkpoint, Graph, Params, Tensor, Var};
use crate::world::{gen_video_clip, SceneDescriptor, StyleParams};

const VIDEO_PREFIX: &str = "video.";
const VIDEO_EMBED: &str = "video_patch";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VideoConfig {
    pub frames: usize,
    pub size: usize,
    pub patch_size: usize,
    pub dim: usize,
    pub depth: usize,
    pub heads: usize,
    pub mlp_ratio: usize,
    /// Head-dim split over (time, y, x).
    pub rope_axes: [usize; 3],
    pub rope_base: f64,
    pub lr: f64,
    /// Clips accumulated per optimizer step.
    pub batch: usize,
    /// Motion-filter threshold on adjacent-frame cosine.
    pub tau: f64,
    /// Optimizer steps of `video-train`.
    pub steps: usize,
    /// Procedural training clips generated before filtering.
    pub clips: usize,
    /// Shape speed of generated clips, pixels per frame.
    pub speed: f64,
}

impl Default for VideoConfig {
    fn default() -> Self {
        VideoConfig {
            frames: 8,
            size: 32,
            patch_size: 4,
            dim: 128,
            depth: 4,
            heads: 4,
            mlp_ratio: 4,
            rope_axes: [8, 12, 12],
            rope_base: 100.0,
            lr: 1e-5,
            batch: 4,
            tau: 0.995,
            steps: 800,
            clips: 4,
            speed: 4.0,
        }
    }
}

impl VideoConfig {
    pub fn validate(&self) -> Result<()> {
        if self.frames < 2 {
            return Err(config_err!("a clip needs at least 2 frames, got {}", self.frames));
        }
        if self.batch == 0 {
            return Err(config_err!("batch must be positive"));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(config_err!("motion threshold {} outside (0, 1]", self.tau));
        }
        AdamConfig::with_lr(self.lr).validate()?;
        self.model_config().validate()
    }

    /// Trunk configuration; the single prompt row is the empty-text token.
    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            image_size: self.size,
            patch_size: self.patch_size,
            dim: self.dim,
            depth: self.depth,
            heads: self.heads,
            mlp_ratio: self.mlp_ratio,
            prompt_vocab: 1,
            rope_axes: self.rope_axes,
            rope_base: self.rope_base,
        }
    }

    fn to_sidecar(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

/// Adjacent-frame cosines of the motion descriptor.
pub fn adjacent_cosines(frames: &[Image]) -> Vec<f64> {
    let feats: Vec<Vec<f64>> = frames.iter().map(frame_feature).collect();
    feats.windows(2).map(|w| feature_cosine(&w[0], &w[1])).collect()
}

fn feature_cosine(a: &[f64], b: &[f64]) -> f64 {
    if a == b {
        return 1.0;
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        (dot / (na * nb)).clamp(-1.0, 1.0)
    }
}

/// Smallest adjacent-frame change, `(1 - cos) / 2`, in `[0, 1]`.
pub fn motion_score(frames: &[Image]) -> f64 {
    adjacent_cosines(frames)
        .into_iter()
        .map(|c| (1.0 - c) / 2.0)
        .fold(f64::INFINITY, f64::min)
        .min(1.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct VideoClip {
    pub id: String,
    pub source: Vec<Image>,
    pub stylized: Vec<Image>,
    /// The stylized first frame used as the style reference.
    pub first_frame: Image,
    pub motion: f64,
}

impl VideoClip {
    pub fn new(id: impl Into<String>, source: Vec<Image>, stylized: Vec<Image>) -> Result<Self> {
        if source.len() < 2 || source.len() != stylized.len() {
            return Err(shape_err!(
                "clip needs matching source/stylized frame lists of length >= 2, got {} and {}",
                source.len(),
                stylized.len()
            ));
        }
        let (w, h) = (source[0].width, source[0].height);
        if source.iter().chain(&stylized).any(|f| f.width != w || f.height != h) {
            return Err(shape_err!("clip frames differ in size"));
        }
        Ok(VideoClip {
            id: id.into(),
            motion: motion_score(&source),
            first_frame: stylized[0].clone(),
            source,
            stylized,
        })
    }

    pub fn frames(&self) -> usize {
        self.source.len()
    }

    fn is_static(&self, tau: f64) -> bool {
        adjacent_cosines(&self.source).iter().all(|&c| c >= tau)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FilterReport {
    pub kept: Vec<String>,
    pub discarded: Vec<String>,
}

/// Drops clips whose every adjacent source-frame cosine is at least `tau`.
pub fn motion_filter(clips: Vec<VideoClip>, tau: f64) -> Result<(Vec<VideoClip>, FilterReport)> {
    if !(tau > 0.0 && tau <= 1.0) {
        return Err(config_err!("motion threshold {tau} outside (0, 1]"));
    }
    let mut report = FilterReport::default();
    let mut kept = Vec::new();
    for c in clips {
        if c.is_static(tau) {
            report.discarded.push(c.id);
        } else {
            report.kept.push(c.id.clone());
            kept.push(c);
        }
    }
    Ok((kept, report))
}

/// Procedural clips: random scene and style, each shape moving at
/// `speed` pixels per frame in a random direction (0 gives static clips).
pub fn gen_clips(seed: u64, n: usize, cfg: &VideoConfig, speed: f64) -> Vec<VideoClip> {
    let mut rng = Rng::new(seed).split("video-clips");
    (0..n)
        .map(|i| {
            let desc = SceneDescriptor::random(&mut rng);
            let style = StyleParams::generate(seed, rng.below(1 << 16) as u32);
            let motion: Vec<(f64, f64)> = desc
                .shapes
                .iter()
                .map(|_| {
                    let a = rng.uniform() * std::f64::consts::TAU;
                    (speed * a.cos(), speed * a.sin())
                })
                .collect();
            let (source, stylized) = gen_video_clip(&desc, &style, cfg.frames, &motion, cfg.size, cfg.size);
            VideoClip::new(format!("clip{i:04}"), source, stylized).expect("generated frames are consistent")
        })
        .collect()
}

#[derive(Serialize, Deserialize)]
struct ClipRecord {
    id: String,
    frames: usize,
    motion: f64,
}

/// Writes `<id>/source_KK.ppm` and `<id>/stylized_KK.ppm` per clip plus a
/// `clips.jsonl` manifest.
pub fn write_clips(dir: &Path, clips: &[VideoClip]) -> Result<()> {
    let mut manifest = String::new();
    for c in clips {
        let cdir = dir.join(&c.id);
        fs::create_dir_all(&cdir).map_err(|e| Error::io(&cdir, e))?;
        for (k, (s, y)) in c.source.iter().zip(&c.stylized).enumerate() {
            s.write_ppm(&cdir.join(format!("source_{k:02}.ppm")))?;
            y.write_ppm(&cdir.join(format!("stylized_{k:02}.ppm")))?;
        }
        let rec = ClipRecord {
            id: c.id.clone(),
            frames: c.frames(),
            motion: c.motion,
        };
        manifest.push_str(&serde_json::to_string(&rec).expect("record serializes"));
        manifest.push('\n');
    }
    write_atomic(&dir.join("clips.jsonl"), manifest.as_bytes())
}

pub fn read_frames(dir: &Path, prefix: &str) -> Result<Vec<Image>> {
    let mut frames = Vec::new();
    loop {
        let p = dir.join(format!("{prefix}_{:02}.ppm", frames.len()));
        if !p.exists() {
            break;
        }
        frames.push(Image::read_ppm(&p)?);
    }
    if frames.is_empty() {
        return Err(Error::Input(format!("no `{prefix}_NN.ppm` frames in {}", dir.display())));
    }
    Ok(frames)
}

pub fn read_clips(dir: &Path) -> Result<Vec<VideoClip>> {
    let path = dir.join("clips.jsonl");
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|line| {
            let rec: ClipRecord =
                serde_json::from_str(line).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
            let cdir = dir.join(&rec.id);
            VideoClip::new(rec.id, read_frames(&cdir, "source")?, read_frames(&cdir, "stylized")?)
        })
        .collect()
}

/// Stacks frames into `[T, H, W, 3]` in model space.
pub fn frames_tensor(frames: &[Image]) -> Tensor<f32> {
    let (h, w) = (frames[0].height, frames[0].width);
    let data = frames.iter().flat_map(|f| f.to_tensor::<f32>().into_data()).collect();
    Tensor::new(vec![frames.len(), h, w, 3], data).expect("frame sizes agree")
}

pub fn tensor_frames(t: &Tensor<f32>) -> Result<Vec<Image>> {
    let &[n, h, w, 3] = t.shape() else {
        return Err(shape_err!("expected [T, H, W, 3], got {:?}", t.shape()));
    };
    let stride = h * w * 3;
    (0..n)
        .map(|k| Image::from_tensor(&Tensor::new(vec![h, w, 3], t.data()[k * stride..(k + 1) * stride].to_vec())?))
        .collect()
}

/// Video model: the image trunk with a second, 6-channel patch embedder.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoModel {
    pub cfg: VideoConfig,
    pub dit: Dit,
    pub params: Params<f32>,
}

/// Forward-pass inputs; all frame tensors are `[T, H, W, 3]`.
#[derive(Debug, Clone, Copy)]
pub struct VideoInputs<'a> {
    pub noisy: &'a Tensor<f32>,
    pub source: &'a Tensor<f32>,
    pub style: &'a Tensor<f32>,
    pub t: f64,
}

#[derive(Debug, Clone)]
pub struct VideoOutput {
    pub velocity: Var,
    pub layout: TokenLayout,
}

impl VideoModel {
    pub fn fresh(cfg: VideoConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let dit = Dit::new(cfg.model_config())?;
        let mut rng = Rng::new(seed).split("video-init");
        let mut params = dit.init(Init::AdaLnZero, &mut rng);
        let fan_in = cfg.patch_size * cfg.patch_size * 6;
        params.insert(
            format!("{VIDEO_EMBED}.weight"),
            Tensor::randn(&[cfg.dim, fan_in], 1.0 / (fan_in as f64).sqrt(), &mut rng),
        );
        params.insert(format!("{VIDEO_EMBED}.bias"), Tensor::randn(&[cfg.dim], PATCH_BIAS_STD, &mut rng));
        Ok(VideoModel { cfg, dit, params })
    }

    fn check(&self, inp: &VideoInputs<'_>) -> Result<()> {
        let (t, s) = (self.cfg.frames, self.cfg.size);
        if inp.noisy.shape() != [t, s, s, 3] || inp.source.shape() != [t, s, s, 3] {
            return Err(shape_err!(
                "video tensors must be [{t}, {s}, {s}, 3], got {:?} and {:?}",
                inp.noisy.shape(),
                inp.source.shape()
            ));
        }
        if inp.style.shape() != [s, s, 3] {
            return Err(shape_err!("style frame must be [{s}, {s}, 3], got {:?}", inp.style.shape()));
        }
        if !(0.0..=1.0).contains(&inp.t) {
            return Err(contract_err!("flow time {} outside [0, 1]", inp.t));
        }
        Ok(())
    }

    /// Channel-wise `[source | noisy]` tokens for every frame, frame-major.
    fn fused_tokens(&self, inp: &VideoInputs<'_>) -> Result<Tensor<f32>> {
        let (t, s) = (self.cfg.frames, self.cfg.size);
        let mut fused = Vec::with_capacity(t * s * s * 6);
        for (src, noisy) in inp.source.data().chunks(3).zip(inp.noisy.data().chunks(3)) {
            fused.extend_from_slice(src);
            fused.extend_from_slice(noisy);
        }
        patchify(&Tensor::new(vec![t * s, s, 6], fused)?, self.cfg.patch_size)
    }

    /// Velocity for all frames. Video tokens sit at temporal indices
    /// `time_offset..time_offset + T`; style tokens always sit at index 0.
    pub fn forward_at(&self, scope: &mut Scope<'_, f32>, inp: VideoInputs<'_>, time_offset: i64) -> Result<VideoOutput> {
        self.check(&inp)?;
        let (frames, s, p) = (self.cfg.frames, self.cfg.size, self.cfg.patch_size);
        let g = s / p;
        let mut layout = TokenLayout::default();
        layout.push_single(StreamTag::Prompt);
        for k in 0..frames {
            layout.push_grid(StreamTag::Latent, time_offset + k as i64, g, g);
        }
        layout.push_grid(StreamTag::StyleRef, 0, g, g);

        let empty_text = self.dit.embed_prompt(scope, 0)?;
        let fused = scope.g.constant(self.fused_tokens(&inp)?);
        let video = scope.linear(VIDEO_EMBED, fused)?;
        let style = scope.g.constant(patchify(inp.style, p)?);
        let style = scope.linear("patch", style)?;
        let x = scope.g.concat(&[empty_text, video, style])?;
        let cond = self.dit.time_embedding(scope, inp.t)?;
        let out = self.dit.trunk(scope, x, cond, &layout, &mut Vec::new())?;
        let lat = layout.range_of(StreamTag::Latent);
        let out = scope.g.narrow(out, lat.start, lat.len())?;
        let out = unpatchify_var(scope.g, out, frames * s, s, p)?;
        let velocity = scope.g.reshape(out, &[frames, s, s, 3])?;
        Ok(VideoOutput { velocity, layout })
    }

    pub fn forward(&self, scope: &mut Scope<'_, f32>, inp: VideoInputs<'_>) -> Result<VideoOutput> {
        self.forward_at(scope, inp, 0)
    }

    pub fn predict(&self, inp: VideoInputs<'_>) -> Result<Tensor<f32>> {
        let mut g = Graph::new();
        let mut scope = Scope::new(&mut g, &self.params);
        let out = self.forward(&mut scope, inp)?;
        Ok(g.value(out.velocity).clone())
    }

    /// Writes `<stem>.tsty` and a JSON `<stem>.cfg`.
    pub fn save(&self, dir: &Path, stem: &str) -> Result<()> {
        let mut c = Checkpoint::new();
        c.push_params(VIDEO_PREFIX, &self.params);
        write_checkpoint(&dir.join(format!("{stem}.tsty")), &c)?;
        write_atomic(&dir.join(format!("{stem}.cfg")), self.cfg.to_sidecar().as_bytes())
    }

    pub fn load(dir: &Path, stem: &str) -> Result<Self> {
        let cfg_path = dir.join(format!("{stem}.cfg"));
        let text = fs::read_to_string(&cfg_path).map_err(|e| Error::io(&cfg_path, e))?;
        let cfg: VideoConfig =
            serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", cfg_path.display())))?;
        let mut model = VideoModel::fresh(cfg, 0)?;
        let params = read_checkpoint(&dir.join(format!("{stem}.tsty")))?.params(VIDEO_PREFIX);
        for (name, t) in model.params.iter() {
            match params.get(name) {
                Some(p) if p.shape() == t.shape() => {}
                _ => return Err(Error::Format(format!("video checkpoint lacks or misshapes `{name}`"))),
            }
        }
        model.params = params;
        Ok(model)
    }
}

/// Model-space tensors of one clip.
struct ClipTensors {
    source: Tensor<f32>,
    target: Tensor<f32>,
    style: Tensor<f32>,
}

impl ClipTensors {
    fn new(c: &VideoClip) -> Self {
        ClipTensors {
            source: frames_tensor(&c.source),
            target: frames_tensor(&c.stylized),
            style: c.first_frame.to_tensor(),
        }
    }
}

/// Trains every weight of `model` with flow matching on `clips`, averaging
/// gradients over `cfg.batch` clips per step. Clips must already have passed
/// the motion filter.
pub fn train_video(mut model: VideoModel, clips: &[VideoClip], steps: usize, seed: u64) -> Result<(VideoModel, Vec<f64>)> {
    if clips.is_empty() {
        return Err(config_err!("no clips to train on"));
    }
    if let Some(c) = clips.iter().find(|c| c.is_static(model.cfg.tau)) {
        return Err(contract_err!("clip `{}` did not pass the motion filter", c.id));
    }
    let tensors: Vec<ClipTensors> = clips.iter().map(ClipTensors::new).collect();
    let mut adam = Adam::new(AdamConfig::with_lr(model.cfg.lr))?;
    let mut rng = Rng::new(seed).split("video-train");
    let mut losses = Vec::with_capacity(steps);
    for step in 0..steps {
        let mut grads = std::collections::BTreeMap::new();
        let mut total = 0.0;
        for _ in 0..model.cfg.batch {
            let i = rng.below(clips.len());
            let ct = &tensors[i];
            let batch = FlowBatch::draw(ct.target.clone(), None, &mut rng)?;
            let mut g = Graph::new();
            let mut scope = Scope::new(&mut g, &model.params).train_base(true);
            let out = model.forward(
                &mut scope,
                VideoInputs {
                    noisy: &batch.xt,
                    source: &ct.source,
                    style: &ct.style,
                    t: batch.t,
                },
            )
            .map_err(|e| e.locate(|| format!("video step {step} on clip {}", clips[i].id)))?;
            let loss = fm_loss(scope.g, out.velocity, &batch)?;
            let value = f64::from(scope.g.value(loss).item());
            if !value.is_finite() {
                return Err(Error::Numeric(format!(
                    "video: non-finite loss at step {step} on clip {}",
                    clips[i].id
                )));
            }
            scope.g.backward(loss)?;
            crate::pipeline::accumulate(&mut grads, scope.base_grads())?;
            total += value;
        }
        let n = model.cfg.batch as f32;
        crate::pipeline::scale_grads(&mut grads, 1.0 / n);
        adam.step(&mut model.params, &grads)?;
        losses.push(total / f64::from(n));
    }
    Ok((model, losses))
}

struct VideoField<'a> {
    model: &'a VideoModel,
    source: &'a Tensor<f32>,
    style: &'a Tensor<f32>,
}

impl VelocityField<f32> for VideoField<'_> {
    fn velocity(&self, x: &Tensor<f32>, t: f64) -> Result<Tensor<f32>> {
        self.model.predict(VideoInputs {
            noisy: x,
            source: self.source,
            style: self.style,
            t,
        })
    }
}

/// Stylizes `source` so that it follows `first_frame`, by Euler sampling of
/// the video flow from seeded noise.
pub fn propagate(model: &VideoModel, source: &[Image], first_frame: &Image, steps: usize, seed: u64) -> Result<Vec<Image>> {
    let (t, s) = (model.cfg.frames, model.cfg.size);
    if source.len() != t {
        return Err(Error::Input(format!("model expects {t} frames, got {}", source.len())));
    }
    if source.iter().chain([first_frame]).any(|f| f.width != s || f.height != s) {
        return Err(Error::Input(format!("frames must be {s}x{s}")));
    }
    let src = frames_tensor(source);
    let style = first_frame.to_tensor();
    let field = VideoField {
        model,
        source: &src,
        style: &style,
    };
    let mut rng = Rng::new(seed).split("video-noise");
    let start = Tensor::<f32>::randn(&[t, s, s, 3], 1.0, &mut rng);
    let out = integrate(&field, start, steps)?;
    if !out.all_finite() {
        return Err(Error::Numeric("video sampling produced non-finite values".into()));
    }
    tensor_frames(&out)
}
