//! Glue between the model, the flow objective and the image world: one
//! training step, stylization by sampling, base-model pretraining and
//! model persistence.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use crate::dit::{prepare_style_ref, Dit, DitInputs, Init, ModelConfig};
use crate::error::{Error, Result};
use crate::flow::{fm_loss, integrate, FlowBatch, Guided, VelocityField};
use crate::image::Image;
use crate::lora::LoraAdapter;
use crate::nn::Scope;
use crate::rng::Rng;
use crate::tensor::{read_checkpoint, write_atomic, write_checkpoint, Adam, AdamConfig, Checkpoint, Graph, Params, Tensor};
use crate::world::{apply_style, render, SceneDescriptor, StyleParams};

pub const BASE_PREFIX: &str = "model.";
pub const DEFAULT_PROMPT: usize = 0;

/// A model configuration with its weights.
#[derive(Debug, Clone, PartialEq)]
pub struct BaseModel {
    pub dit: Dit,
    pub params: Params<f32>,
}

impl BaseModel {
    pub fn fresh(cfg: ModelConfig, init: Init, seed: u64) -> Result<Self> {
        let dit = Dit::new(cfg)?;
        let params = dit.init(init, &mut Rng::new(seed).split("model-init"));
        Ok(BaseModel { dit, params })
    }

    /// Writes `<stem>.tsty` and the `<stem>.cfg` sidecar.
    pub fn save(&self, dir: &Path, stem: &str) -> Result<()> {
        let mut c = Checkpoint::new();
        c.push_params(BASE_PREFIX, &self.params);
        write_checkpoint(&dir.join(format!("{stem}.tsty")), &c)?;
        write_atomic(&dir.join(format!("{stem}.cfg")), self.dit.cfg.to_sidecar().as_bytes())
    }

    pub fn load(dir: &Path, stem: &str) -> Result<Self> {
        let cfg_path = dir.join(format!("{stem}.cfg"));
        let text = fs::read_to_string(&cfg_path).map_err(|e| Error::io(&cfg_path, e))?;
        let dit = Dit::new(ModelConfig::from_sidecar(&text)?)?;
        let params = read_checkpoint(&dir.join(format!("{stem}.tsty")))?.params(BASE_PREFIX);
        let expected = dit.init::<f32>(Init::AdaLnZero, &mut Rng::new(0));
        for (name, t) in expected.iter() {
            match params.get(name) {
                Some(p) if p.shape() == t.shape() => {}
                _ => return Err(Error::Format(format!("checkpoint lacks or misshapes `{name}`"))),
            }
        }
        Ok(BaseModel { dit, params })
    }
}

/// Saves an adapter as `<stem>.tsty` with its lineage in `<stem>.cfg`.
pub fn save_adapter(adapter: &LoraAdapter<f32>, cfg: &ModelConfig, dir: &Path, stem: &str) -> Result<()> {
    write_checkpoint(&dir.join(format!("{stem}.tsty")), &adapter.to_checkpoint())?;
    let sidecar = format!("{}{}", cfg.to_sidecar(), adapter.sidecar());
    write_atomic(&dir.join(format!("{stem}.cfg")), sidecar.as_bytes())
}

pub fn load_adapter(dir: &Path, stem: &str) -> Result<LoraAdapter<f32>> {
    let cfg_path = dir.join(format!("{stem}.cfg"));
    let text = fs::read_to_string(&cfg_path).map_err(|e| Error::io(&cfg_path, e))?;
    LoraAdapter::from_checkpoint(&read_checkpoint(&dir.join(format!("{stem}.tsty")))?, &text)
}

/// Model-space tensors for one supervised example.
#[derive(Debug, Clone)]
pub struct Example {
    pub target: Tensor<f32>,
    pub content: Tensor<f32>,
    pub style: Tensor<f32>,
}

impl Example {
    /// Applies the square style-reference rule against the target size.
    pub fn new(target: &Image, content: &Image, style_ref: &Image) -> Result<Self> {
        let style = prepare_style_ref(style_ref, target.height, target.width)?;
        Ok(Example {
            target: target.to_tensor(),
            content: content.to_tensor(),
            style: style.to_tensor(),
        })
    }
}

/// What a training step updates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Trainable {
    Base,
    Adapter,
}

/// Flow-matching loss and gradients for one example; `t` and the noise are
/// drawn from `rng`.
pub fn flow_step(
    model: &BaseModel,
    adapter: Option<&LoraAdapter<f32>>,
    trainable: Trainable,
    ex: &Example,
    rng: &mut Rng,
) -> Result<(f64, BTreeMap<String, Tensor<f32>>)> {
    let batch = FlowBatch::draw(ex.target.clone(), None, rng)?;
    let mut g = Graph::new();
    let mut scope = Scope::new(&mut g, &model.params)
        .with_adapter(adapter)
        .train_base(trainable == Trainable::Base)
        .train_adapter(trainable == Trainable::Adapter);
    let out = model.dit.forward(
        &mut scope,
        DitInputs {
            noisy: &batch.xt,
            content: &ex.content,
            style: &ex.style,
            prompt_id: DEFAULT_PROMPT,
            t: batch.t,
        },
    )?;
    let loss = fm_loss(scope.g, out.velocity, &batch)?;
    let value = scope.g.value(loss).item();
    if !value.is_finite() {
        return Ok((f64::from(value), BTreeMap::new()));
    }
    scope.g.backward(loss)?;
    let grads = match trainable {
        Trainable::Base => scope.base_grads(),
        Trainable::Adapter => scope.adapter_grads(),
    };
    Ok((f64::from(value), grads))
}

/// Adds `src` into `acc`, creating entries as needed.
pub fn accumulate(acc: &mut BTreeMap<String, Tensor<f32>>, src: BTreeMap<String, Tensor<f32>>) -> Result<()> {
    for (k, g) in src {
        match acc.get_mut(&k) {
            Some(a) => *a = a.zip_map(&g, |x, y| x + y)?,
            None => {
                acc.insert(k, g);
            }
        }
    }
    Ok(())
}

pub fn scale_grads(grads: &mut BTreeMap<String, Tensor<f32>>, s: f32) {
    for g in grads.values_mut() {
        g.data_mut().iter_mut().for_each(|v| *v *= s);
    }
}

/// Sampling options.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleOptions {
    pub steps: usize,
    pub seed: u64,
    pub prompt_id: usize,
    /// Style guidance scale; 1 disables guidance.
    pub guidance: f64,
}

impl Default for SampleOptions {
    fn default() -> Self {
        SampleOptions {
            steps: crate::flow::DEFAULT_SAMPLE_STEPS,
            seed: 0,
            prompt_id: DEFAULT_PROMPT,
            guidance: 1.0,
        }
    }
}

struct ModelField<'a> {
    model: &'a BaseModel,
    adapter: Option<&'a LoraAdapter<f32>>,
    content: &'a Tensor<f32>,
    style: &'a Tensor<f32>,
    prompt_id: usize,
}

impl VelocityField<f32> for ModelField<'_> {
    fn velocity(&self, x: &Tensor<f32>, t: f64) -> Result<Tensor<f32>> {
        self.model.dit.predict(
            &self.model.params,
            self.adapter,
            DitInputs {
                noisy: x,
                content: self.content,
                style: self.style,
                prompt_id: self.prompt_id,
                t,
            },
        )
    }
}

/// Generates a stylized image of `content` in the style of `style_ref`.
/// The style reference is resized to the square rule; the content reference
/// is used as given and fixes the output size.
pub fn stylize(
    model: &BaseModel,
    adapter: Option<&LoraAdapter<f32>>,
    content: &Image,
    style_ref: &Image,
    opts: SampleOptions,
) -> Result<Image> {
    let p = model.dit.cfg.patch_size;
    if !content.width.is_multiple_of(p) || !content.height.is_multiple_of(p) {
        return Err(Error::Input(format!(
            "content {}x{} is not a multiple of the {p}-pixel patch",
            content.width, content.height
        )));
    }
    let style = prepare_style_ref(style_ref, content.height, content.width)?.to_tensor::<f32>();
    let content_t = content.to_tensor::<f32>();
    let zero_style = Tensor::<f32>::zeros(style.shape());
    let field = |style| ModelField {
        model,
        adapter,
        content: &content_t,
        style,
        prompt_id: opts.prompt_id,
    };
    let mut rng = Rng::new(opts.seed).split("sample-noise");
    let start = Tensor::<f32>::randn(&[content.height, content.width, 3], 1.0, &mut rng);
    let x = if opts.guidance == 1.0 {
        integrate(&field(&style), start, opts.steps)?
    } else {
        let guided = Guided {
            cond: field(&style),
            uncond: field(&zero_style),
            scale: opts.guidance,
        };
        integrate(&guided, start, opts.steps)?
    };
    if !x.all_finite() {
        return Err(Error::Numeric("sampling produced non-finite values".into()));
    }
    Image::from_tensor(&x)
}

/// Settings for pretraining the base model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PretrainConfig {
    pub steps: usize,
    pub lr: f64,
    pub seed: u64,
    pub size: usize,
    pub wide_fraction: f64,
    /// Fraction of examples that are stylizations rather than reconstructions.
    pub style_fraction: f64,
}

const PRETRAIN_STYLE_SALT: u64 = 0x0ba5_e000;

/// One pretraining example. Reconstructions reproduce the content reference
/// while an unrelated stylized image occupies the style slot; stylizations
/// apply a style drawn from a pool disjoint from any corpus to the content,
/// with a reference of that style on another scene.
pub fn pretrain_example(cfg: &PretrainConfig, rng: &mut Rng) -> Result<Example> {
    let w = cfg.size;
    let h = if rng.bernoulli(cfg.wide_fraction) { w / 2 } else { w };
    let content = render(&SceneDescriptor::random(rng), w, h);
    let style = StyleParams::generate(cfg.seed ^ PRETRAIN_STYLE_SALT, rng.below(1 << 16) as u32);
    let style_ref = apply_style(&style, &render(&SceneDescriptor::random(rng), w, w)).quantized();
    if rng.bernoulli(cfg.style_fraction) {
        let target = apply_style(&style, &content).quantized();
        Example::new(&target, &content, &style_ref)
    } else {
        Example::new(&content, &content, &style_ref)
    }
}

/// Full-parameter flow-matching pretraining on reconstructions mixed with
/// stylizations (see [`pretrain_example`]).
/// Returns the trained model and the per-step losses.
pub fn pretrain_base(mut model: BaseModel, cfg: &PretrainConfig) -> Result<(BaseModel, Vec<f64>)> {
    let mut adam = Adam::new(AdamConfig::with_lr(cfg.lr))?;
    let mut rng = Rng::new(cfg.seed).split("pretrain");
    let mut losses = Vec::with_capacity(cfg.steps);
    for step in 0..cfg.steps {
        let ex = pretrain_example(cfg, &mut rng)?;
        let (loss, grads) =
            flow_step(&model, None, Trainable::Base, &ex, &mut rng).map_err(|e| e.locate(|| format!("pretraining step {step}")))?;
        if !loss.is_finite() {
            return Err(Error::Numeric(format!("pretraining: non-finite loss at step {step}")));
        }
        adam.step(&mut model.params, &grads)?;
        losses.push(loss);
    }
    Ok((model, losses))
}

/// Mean of consecutive windows of `w` values (the last may be shorter).
pub fn windowed_means(values: &[f64], w: usize) -> Vec<f64> {
    values.chunks(w.max(1)).map(|c| c.iter().sum::<f64>() / c.len() as f64).collect()
}
