//! Binding named parameters into a graph for one forward pass.

use std::collections::BTreeMap;

use crate::error::Result;
use crate::lora::LoraAdapter;
use crate::tensor::{Float, Graph, Params, Tensor, Var};

/// Binds base weights (and optionally a LoRA adapter) into a [`Graph`] on
/// first use, so each parameter becomes exactly one leaf per pass.
pub struct Scope<'a, T: Float> {
    pub g: &'a mut Graph<T>,
    base: &'a Params<T>,
    adapter: Option<&'a LoraAdapter<T>>,
    train_base: bool,
    train_adapter: bool,
    base_vars: BTreeMap<String, Var>,
    adapter_vars: BTreeMap<String, Var>,
}

impl<'a, T: Float> Scope<'a, T> {
    /// Inference scope: nothing is trainable.
    pub fn new(g: &'a mut Graph<T>, base: &'a Params<T>) -> Self {
        Scope {
            g,
            base,
            adapter: None,
            train_base: false,
            train_adapter: false,
            base_vars: BTreeMap::new(),
            adapter_vars: BTreeMap::new(),
        }
    }

    pub fn with_adapter(mut self, adapter: Option<&'a LoraAdapter<T>>) -> Self {
        self.adapter = adapter;
        self
    }

    pub fn train_base(mut self, on: bool) -> Self {
        self.train_base = on;
        self
    }

    pub fn train_adapter(mut self, on: bool) -> Self {
        self.train_adapter = on;
        self
    }

    pub fn param(&mut self, name: &str) -> Result<Var> {
        if let Some(&v) = self.base_vars.get(name) {
            return Ok(v);
        }
        let t = self.base.require(name)?.clone();
        let v = if self.train_base {
            self.g.param(t)
        } else {
            self.g.constant(t)
        };
        self.base_vars.insert(name.to_string(), v);
        Ok(v)
    }

    fn adapter_param(&mut self, adapter: &LoraAdapter<T>, name: &str) -> Result<Var> {
        if let Some(&v) = self.adapter_vars.get(name) {
            return Ok(v);
        }
        let t = adapter.params.require(name)?.clone();
        let v = if self.train_adapter {
            self.g.param(t)
        } else {
            self.g.constant(t)
        };
        self.adapter_vars.insert(name.to_string(), v);
        Ok(v)
    }

    /// `x W^T + b` for weight `[out, in]`, plus the low-rank delta
    /// `scale * (x A^T) B^T` when the adapter targets this layer.
    pub fn linear(&mut self, layer: &str, x: Var) -> Result<Var> {
        let w = self.param(&format!("{layer}.weight"))?;
        let mut y = self.g.matmul_t(x, w)?;
        let bias = format!("{layer}.bias");
        if self.base.contains(&bias) {
            let b = self.param(&bias)?;
            y = self.g.add_row(y, b)?;
        }
        if let Some(adapter) = self.adapter {
            if adapter.targets(layer) {
                let a = self.adapter_param(adapter, &LoraAdapter::<T>::a_name(layer))?;
                let b = self.adapter_param(adapter, &LoraAdapter::<T>::b_name(layer))?;
                let down = self.g.matmul_t(x, a)?;
                let up = self.g.matmul_t(down, b)?;
                let up = self.g.scale(up, T::from_f64(adapter.scale()));
                y = self.g.add(y, up)?;
            }
        }
        Ok(y)
    }

    pub fn base_grads(&self) -> BTreeMap<String, Tensor<T>> {
        self.collect(&self.base_vars)
    }

    pub fn adapter_grads(&self) -> BTreeMap<String, Tensor<T>> {
        self.collect(&self.adapter_vars)
    }

    fn collect(&self, vars: &BTreeMap<String, Var>) -> BTreeMap<String, Tensor<T>> {
        vars.iter()
            .filter(|(_, &v)| self.g.requires_grad(v))
            .map(|(k, &v)| (k.clone(), self.g.grad(v)))
            .collect()
    }

    /// Leaf handle of a bound base parameter, if it was used.
    pub fn base_var(&self, name: &str) -> Option<Var> {
        self.base_vars.get(name).copied()
    }
}
