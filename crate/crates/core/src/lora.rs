//! Low-rank adapters over the model's linear layers.
//!
//! A targeted layer with weight `W: [out, in]` computes
//! `W x + (alpha / r) * B (A x)` with `A: [r, in]` random and `B: [out, r]`
//! zero at attach time, so a fresh adapter is an exact no-op.

use std::collections::BTreeSet;

use crate::error::{config_err, contract_err, Result};
use crate::rng::Rng;
use crate::tensor::{Checkpoint, Float, Params, Tensor};

pub const CHECKPOINT_PREFIX: &str = "lora.";

#[derive(Debug, Clone, PartialEq)]
pub struct LoraAdapter<T> {
    pub rank: usize,
    pub alpha: f64,
    /// `"<layer>.A"` and `"<layer>.B"` for every targeted layer.
    pub params: Params<T>,
    /// Stages this adapter has been trained through, oldest first.
    pub lineage: Vec<String>,
    layers: BTreeSet<String>,
}

impl<T: Float> LoraAdapter<T> {
    pub fn a_name(layer: &str) -> String {
        format!("{layer}.A")
    }

    pub fn b_name(layer: &str) -> String {
        format!("{layer}.B")
    }

    /// Creates an adapter for `targets` (layer names whose `.weight` is a
    /// matrix in `base`).
    pub fn attach(base: &Params<T>, targets: &[String], rank: usize, alpha: f64, rng: &mut Rng) -> Result<Self> {
        if rank == 0 {
            return Err(config_err!("LoRA rank must be positive"));
        }
        if targets.is_empty() {
            return Err(config_err!("LoRA needs at least one target layer"));
        }
        let mut params = Params::new();
        let mut layers = BTreeSet::new();
        for layer in targets {
            let w = base
                .get(&format!("{layer}.weight"))
                .filter(|w| w.rank() == 2)
                .ok_or_else(|| config_err!("unknown LoRA target layer `{layer}`"))?;
            let (out, inp) = (w.shape()[0], w.shape()[1]);
            if rank > out.min(inp) {
                return Err(config_err!(
                    "LoRA rank {rank} exceeds min(in, out) = {} for `{layer}`",
                    out.min(inp)
                ));
            }
            let mut layer_rng = rng.split(layer);
            params.insert(
                Self::a_name(layer),
                Tensor::randn(&[rank, inp], 1.0 / (inp as f64).sqrt(), &mut layer_rng),
            );
            params.insert(Self::b_name(layer), Tensor::zeros(&[out, rank]));
            layers.insert(layer.clone());
        }
        Ok(LoraAdapter {
            rank,
            alpha,
            params,
            lineage: Vec::new(),
            layers,
        })
    }

    pub fn scale(&self) -> f64 {
        self.alpha / self.rank as f64
    }

    pub fn targets(&self, layer: &str) -> bool {
        self.layers.contains(layer)
    }

    pub fn layers(&self) -> impl Iterator<Item = &String> {
        self.layers.iter()
    }

    /// Number of trainable scalars, `sum r * (in + out)`.
    pub fn trainable_count(&self) -> usize {
        self.params.num_elements()
    }

    /// `scale * B A` for one layer, shaped like its base weight.
    pub fn delta(&self, layer: &str) -> Result<Tensor<T>> {
        let a = self.params.require(&Self::a_name(layer))?;
        let b = self.params.require(&Self::b_name(layer))?;
        let ba = b.matmul(a)?;
        let s = T::from_f64(self.scale());
        Ok(ba.map(|v| v * s))
    }

    fn apply(&self, base: &Params<T>, sign: f64) -> Result<Params<T>> {
        let mut out = base.clone();
        for layer in &self.layers {
            let name = format!("{layer}.weight");
            let delta = self.delta(layer)?;
            let w = out
                .get_mut(&name)
                .ok_or_else(|| contract_err!("adapter layer `{layer}` missing from model"))?;
            if w.shape() != delta.shape() {
                return Err(contract_err!(
                    "adapter delta {:?} does not match `{name}` {:?}",
                    delta.shape(),
                    w.shape()
                ));
            }
            let s = T::from_f64(sign);
            w.data_mut().iter_mut().zip(delta.data()).for_each(|(x, &d)| *x += s * d);
        }
        Ok(out)
    }

    /// Folds the adapter into a copy of the base weights.
    pub fn merge(&self, base: &Params<T>) -> Result<Params<T>> {
        self.apply(base, 1.0)
    }

    /// Removes this adapter's contribution from merged weights.
    pub fn unmerge(&self, merged: &Params<T>) -> Result<Params<T>> {
        self.apply(merged, -1.0)
    }

    /// Warm-starts the next stage from this adapter's parameters.
    pub fn chain(&self, stage: &str) -> Result<Self> {
        if self.lineage.iter().any(|s| s == stage) {
            return Err(config_err!("stage `{stage}` already in lineage {:?}", self.lineage));
        }
        let mut next = self.clone();
        next.lineage.push(stage.to_string());
        Ok(next)
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut c = Checkpoint::new();
        c.push_params(CHECKPOINT_PREFIX, &self.params);
        c
    }

    /// `key = value` lines describing rank, alpha, targets and lineage.
    pub fn sidecar(&self) -> String {
        let layers: Vec<&str> = self.layers.iter().map(String::as_str).collect();
        format!(
            "[lora]\nrank = {}\nalpha = {}\ntargets = {}\nlineage = {}\n",
            self.rank,
            self.alpha,
            layers.join(","),
            self.lineage.join(",")
        )
    }

    pub fn from_checkpoint(ckpt: &Checkpoint, sidecar: &str) -> Result<Self> {
        let mut rank = None;
        let mut alpha = None;
        let mut layers = BTreeSet::new();
        let mut lineage = Vec::new();
        for line in sidecar.lines().map(str::trim) {
            let Some((k, v)) = line.split_once('=') else { continue };
            let (k, v) = (k.trim(), v.trim());
            let list = || v.split(',').filter(|s| !s.is_empty()).map(str::to_string);
            match k {
                "rank" => rank = v.parse().ok(),
                "alpha" => alpha = v.parse().ok(),
                "targets" => layers = list().collect(),
                "lineage" => lineage = list().collect(),
                _ => {}
            }
        }
        let rank = rank.ok_or_else(|| config_err!("adapter sidecar lacks `rank`"))?;
        let alpha = alpha.ok_or_else(|| config_err!("adapter sidecar lacks `alpha`"))?;
        let params: Params<T> = ckpt.params(CHECKPOINT_PREFIX);
        for layer in &layers {
            if !params.contains(&Self::a_name(layer)) || !params.contains(&Self::b_name(layer)) {
                return Err(config_err!("adapter checkpoint lacks factors for `{layer}`"));
            }
        }
        Ok(LoraAdapter {
            rank,
            alpha,
            params,
            lineage,
            layers,
        })
    }

    pub fn cast<U: Float>(&self) -> LoraAdapter<U> {
        LoraAdapter {
            rank: self.rank,
            alpha: self.alpha,
            params: self.params.cast(),
            lineage: self.lineage.clone(),
            layers: self.layers.clone(),
        }
    }
}
