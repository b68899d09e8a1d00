//! Helpers shared by the integration test targets.
#![allow(dead_code)]

use std::collections::BTreeMap;

use stylegraft::dit::{Dit, DitInputs, Init, ModelConfig};
use stylegraft::lora::LoraAdapter;
use stylegraft::nn::Scope;
use stylegraft::rng::Rng;
use stylegraft::tensor::{Graph, Params, Tensor};

pub const H: f64 = 1e-5;

pub fn tiny_dit() -> ModelConfig {
    ModelConfig {
        image_size: 8,
        patch_size: 4,
        dim: 32,
        depth: 2,
        heads: 2,
        mlp_ratio: 2,
        prompt_vocab: 2,
        rope_axes: [4, 6, 6],
        rope_base: 100.0,
    }
}

pub struct DitCase {
    pub dit: Dit,
    noisy: Tensor<f64>,
    content: Tensor<f64>,
    style: Tensor<f64>,
    target: Tensor<f64>,
}

impl DitCase {
    pub fn new(seed: u64) -> Self {
        let mut rng = Rng::new(seed);
        DitCase {
            dit: Dit::new(tiny_dit()).unwrap(),
            noisy: Tensor::randn(&[8, 8, 3], 1.0, &mut rng),
            content: Tensor::randn(&[8, 8, 3], 1.0, &mut rng),
            style: Tensor::randn(&[8, 8, 3], 1.0, &mut rng),
            target: Tensor::randn(&[8, 8, 3], 1.0, &mut rng),
        }
    }

    pub fn loss(&self, params: &Params<f64>, adapter: Option<&LoraAdapter<f64>>, grads: bool) -> (f64, BTreeMap<String, Tensor<f64>>) {
        let mut g = Graph::new();
        let mut scope = Scope::new(&mut g, params)
            .with_adapter(adapter)
            .train_base(adapter.is_none())
            .train_adapter(adapter.is_some());
        let out = self
            .dit
            .forward(
                &mut scope,
                DitInputs { noisy: &self.noisy, content: &self.content, style: &self.style, prompt_id: 1, t: 0.37 },
            )
            .unwrap();
        let loss = scope.g.mse(out.velocity, &self.target).unwrap();
        let value = scope.g.value(loss).item();
        if !grads {
            return (value, BTreeMap::new());
        }
        scope.g.backward(loss).unwrap();
        let gr = if adapter.is_some() { scope.adapter_grads() } else { scope.base_grads() };
        (value, gr)
    }
}

/// Largest per-tensor relative error `|a - n| / |n|` over all parameters.
pub fn dit_gradcheck(seed: u64) -> f64 {
    let case = DitCase::new(seed);
    let params: Params<f64> = case.dit.init(Init::Random, &mut Rng::new(seed ^ 0x5eed));
    let (_, grads) = case.loss(&params, None, true);
    assert_eq!(grads.len(), params.len(), "every parameter receives a gradient");
    let mut worst = 0.0f64;
    for (name, t) in params.iter() {
        let a = &grads[name];
        let (mut diff, mut norm) = (0.0, 0.0);
        for i in 0..t.len() {
            let mut p = params.clone();
            p.get_mut(name).unwrap().data_mut()[i] += H;
            let up = case.loss(&p, None, false).0;
            p.get_mut(name).unwrap().data_mut()[i] -= 2.0 * H;
            let down = case.loss(&p, None, false).0;
            let n = (up - down) / (2.0 * H);
            diff += (a.data()[i] - n).powi(2);
            norm += n * n;
        }
        let rel = diff.sqrt() / norm.sqrt().max(1e-12);
        worst = worst.max(rel);
    }
    worst
}

